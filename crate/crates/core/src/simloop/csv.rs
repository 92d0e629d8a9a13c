//! CSV rendering of a [`SimResult`].
//!
//! Column order: `t`, `y_k`, then `yref_k` and `e_k` (closed loop), `z_k`,
//! `zd{j}_k`, `z_{i}_{j}_{k}`, `x_k` (plant state, closed loop), `h_i`,
//! `u_k`, `bnd_phi1`, `bnd_phi`, `bnd_fc` (closed loop), `margin_i`,
//! `margin_fc` (closed loop), `bnd_track`, `margin_track`. Indices are
//! 1-based. Floats use 17 significant digits.

use std::fmt::Write as _;
use std::io::{self, Write};

use super::{Mode, SimResult};

pub fn header(res: &SimResult) -> Vec<String> {
    let (r, m) = (res.r, res.m);
    let closed = res.mode == Mode::ClosedLoop;
    let comps = |name: &str| (1..=m).map(|k| format!("{name}_{k}")).collect::<Vec<_>>();
    let mut cols = vec!["t".to_string()];
    cols.extend(comps("y"));
    if closed {
        cols.extend(comps("yref"));
        cols.extend(comps("e"));
    }
    cols.extend(comps("z"));
    for j in 1..r {
        cols.extend(comps(&format!("zd{j}")));
    }
    for i in 1..r {
        for j in 1..=r {
            cols.extend(comps(&format!("z_{i}_{j}")));
        }
    }
    if closed {
        let np = res.plant.first().map_or(0, Vec::len);
        cols.extend((1..=np).map(|k| format!("x_{k}")));
    }
    cols.extend((1..r).map(|i| format!("h_{i}")));
    cols.extend(comps("u"));
    cols.push("bnd_phi1".into());
    cols.push("bnd_phi".into());
    if closed {
        cols.push("bnd_fc".into());
    }
    cols.extend((1..r).map(|i| format!("margin_{i}")));
    if closed {
        cols.push("margin_fc".into());
    }
    cols.push("bnd_track".into());
    cols.push("margin_track".into());
    cols
}

fn push(line: &mut String, v: f64) {
    if !line.is_empty() {
        line.push(',');
    }
    let _ = write!(line, "{v:.16e}");
}

/// One row per sample.
pub fn rows(res: &SimResult) -> impl Iterator<Item = String> + '_ {
    let closed = res.mode == Mode::ClosedLoop;
    (0..res.len()).map(move |s| {
        let mut line = String::new();
        push(&mut line, res.t[s]);
        res.y[s].iter().for_each(|&v| push(&mut line, v));
        if closed {
            res.yref[s].iter().for_each(|&v| push(&mut line, v));
            for (z, r) in res.zd[s][0].iter().zip(&res.yref[s]) {
                push(&mut line, z - r);
            }
        }
        res.zd[s].iter().flatten().for_each(|&v| push(&mut line, v));
        res.cascade[s].iter().for_each(|&v| push(&mut line, v));
        if closed {
            res.plant[s].iter().for_each(|&v| push(&mut line, v));
        }
        res.gains[s].iter().for_each(|&v| push(&mut line, v));
        res.u[s].iter().for_each(|&v| push(&mut line, v));
        push(&mut line, res.bnd_phi1[s]);
        push(&mut line, res.bnd_phi[s]);
        if closed {
            push(&mut line, res.bnd_fc[s]);
        }
        res.margins[s].iter().for_each(|&v| push(&mut line, v));
        if closed {
            push(&mut line, res.margin_fc[s]);
        }
        push(&mut line, res.bnd_track[s]);
        push(&mut line, res.margin_track[s]);
        line
    })
}

pub fn write_csv<W: Write>(res: &SimResult, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", header(res).join(","))?;
    for row in rows(res) {
        writeln!(out, "{row}")?;
    }
    out.flush()
}

pub fn to_csv_string(res: &SimResult) -> String {
    let mut buf = Vec::new();
    write_csv(res, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}
