//! Rendering of designs, runs and diagnostics to text and files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use funnelkit::diagnostics::{coordinates_csv, DiagnosticsReport, ErrorCoordinates};
use funnelkit::simloop::csv::to_csv_string;
use funnelkit::{DesignParams, Error, Mat, Result, Scenario, SimResult, ValidationReport};

/// Four decimals with trailing zeros dropped: `3`, `0.6667`, `-0.5`.
pub fn num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn tuple(v: &[f64]) -> String {
    format!("({})", v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", "))
}

fn matrix(out: &mut String, name: &str, m: &Mat) {
    let _ = writeln!(out, "{name} =");
    for i in 0..m.rows() {
        let _ = writeln!(out, "  [{}]", m.row(i).iter().map(|&x| num(x)).collect::<Vec<_>>().join(", "));
    }
}

pub fn design_text(p: &DesignParams, report: &ValidationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "r = {}, m = {}, rho = {}", p.r, p.m, num(p.rho));
    let _ = writeln!(s, "a = {}", tuple(&p.a));
    let _ = writeln!(s, "p = {}", tuple(&p.p));
    let _ = writeln!(s, "p_tilde = {}", num(p.p_tilde));
    matrix(&mut s, "A", &p.a_mat);
    matrix(&mut s, "P", &p.p_mat);
    matrix(&mut s, "gamma_tilde", &p.gamma_tilde);
    let _ = write!(s, "validation:\n{report}");
    s
}

pub fn design_json(p: &DesignParams, report: &ValidationReport) -> String {
    let v = serde_json::json!({ "params": p, "validation": report });
    serde_json::to_string_pretty(&v).expect("design serializes")
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `result.csv` and `report.json` in `dir`.
pub fn write_run(sc: &Scenario, res: &SimResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write(&dir.join("result.csv"), &to_csv_string(res))?;
    let report = serde_json::json!({
        "name": sc.name,
        "mode": sc.mode(),
        "tspan": [sc.tspan.0, sc.tspan.1],
        "sample_step": sc.sample_step,
        "tolerances": sc.tol,
        "design": sc.params,
        "validation": sc.report,
        "summary": res.summary(),
    });
    write(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )
}

/// `diagnostics.json` and `coordinates.csv` in `dir`.
pub fn write_diagnostics(report: &DiagnosticsReport, coords: &ErrorCoordinates, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write(
        &dir.join("diagnostics.json"),
        &serde_json::to_string_pretty(report).expect("diagnostics serialize"),
    )?;
    write(&dir.join("coordinates.csv"), &coordinates_csv(coords))
}

pub fn summary_line(res: &SimResult, dir: &Path) -> String {
    let s = res.summary();
    let margins = s.min_margin.iter().map(|&m| format!("{m:.4e}")).collect::<Vec<_>>().join(", ");
    format!(
        "{}: {} samples to t = {}, min margins [{}], sup gain {:.4}, written to {}",
        res.name,
        s.samples,
        num(s.t_end),
        margins,
        s.sup_gain.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        dir.display()
    )
}

pub fn diagnostics_line(rep: &DiagnosticsReport) -> String {
    let k = rep.margins.kappa.iter().map(|&x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ");
    format!(
        "kronecker residuals within 1e-10: {}, kappa [{}], sandwich holds: {}",
        rep.kronecker.within(1e-10),
        k,
        rep.margins.sandwich_holds
    )
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn number_formatting() {
        assert_eq!(num(3.0), "3");
        assert_eq!(num(2.0 / 3.0), "0.6667");
        assert_eq!(num(-0.5), "-0.5");
        assert_eq!(num(-1e-9), "0");
        assert_eq!(num(12.3456789), "12.3457");
    }
}
