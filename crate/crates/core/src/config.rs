//! Scenario files: a JSON document describing the design, the drive and the
//! integration settings. Unknown keys are rejected and schema errors carry
//! the JSON-pointer path of the offending value.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fcontrol::ControllerConfig;
use crate::funnels::{ControllerFunnelSpec, FunnelParams};
use crate::matrixlab::Mat;
use crate::paramdesign::{design, CoefficientChoice, DesignRequest};
use crate::plants::{linear_to_bif, BifPlant, Example2Plant, PlantModel};
use crate::signals::VectorSignal;
use crate::simloop::{Drive, Scenario, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeTag {
    OpenLoop,
    ClosedLoop,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub r: usize,
    pub m: usize,
    #[serde(default)]
    pub s0: Option<f64>,
    /// Explicit Hurwitz coefficients `a₁, …, a_r`, instead of `s0`.
    #[serde(default)]
    pub a: Option<Vec<f64>>,
    pub rho: f64,
    #[serde(default, rename = "Q")]
    pub q: Option<Mat>,
    pub gamma_tilde: Mat,
    /// Plant high-gain matrix used for validation; taken from the plant when absent.
    #[serde(default)]
    pub gamma: Option<Mat>,
    pub funnel: FunnelParams,
    #[serde(default)]
    pub funnel_fc: Option<FunnelParams>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantSection {
    Example2 {
        #[serde(default)]
        disturbance: Option<VectorSignal>,
    },
    Bif {
        r_blocks: Vec<Mat>,
        s: Mat,
        q_int: Mat,
        p_int: Mat,
        gamma: Mat,
        #[serde(default)]
        d_r: Option<VectorSignal>,
        #[serde(default)]
        d_eta: Option<VectorSignal>,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
    /// `ẋ = Ax + Bu`, `y = Cx`, converted to Byrnes–Isidori form.
    StateSpace {
        a: Mat,
        b: Mat,
        c: Mat,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub u: VectorSignal,
    pub y: VectorSignal,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub rtol: f64,
    pub atol: f64,
    #[serde(default)]
    pub h_max: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub mode: ModeTag,
    pub design: DesignSection,
    #[serde(default)]
    pub plant: Option<PlantSection>,
    #[serde(default)]
    pub signals: Option<SignalSection>,
    #[serde(default)]
    pub reference: Option<VectorSignal>,
    pub tspan: [f64; 2],
    #[serde(default)]
    pub tolerances: Option<ToleranceSection>,
    pub sample_step: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub cascade0: Option<Vec<f64>>,
}

/// A parsed file: the runnable scenario plus the optional output directory.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub out_dir: Option<PathBuf>,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Deserializes without building anything.
pub fn parse_file_str(text: &str) -> Result<ScenarioFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = pointer(e.path());
        Error::Config(format!("schema violation at {at}: {}", e.inner()))
    })
}

fn build_plant(section: &PlantSection) -> Result<Arc<dyn PlantModel>> {
    Ok(match section {
        PlantSection::Example2 { disturbance } => {
            let p = Example2Plant::new();
            match disturbance {
                Some(d) => Arc::new(p.with_disturbance(d.clone())?),
                None => Arc::new(p),
            }
        }
        PlantSection::Bif {
            r_blocks,
            s,
            q_int,
            p_int,
            gamma,
            d_r,
            d_eta,
            x0,
        } => Arc::new(BifPlant::new(
            r_blocks.clone(),
            s.clone(),
            q_int.clone(),
            p_int.clone(),
            gamma.clone(),
            d_r.clone(),
            d_eta.clone(),
            x0.clone(),
        )?),
        PlantSection::StateSpace { a, b, c, x0 } => {
            let tf = linear_to_bif(a, b, c, None)?;
            let x0 = x0.clone().unwrap_or_else(|| vec![0.0; a.rows()]);
            if x0.len() != a.rows() {
                return Err(Error::dim("state-space x0 length"));
            }
            let start = tf.coordinates(&x0);
            Arc::new(tf.plant.with_initial_state(start)?)
        }
    })
}

impl ScenarioFile {
    /// Runs the design pipeline and wires the drive. Design rejections
    /// surface as [`Error::DesignRejected`] carrying the full report.
    pub fn build(&self) -> Result<Scenario> {
        let d = &self.design;
        let coefficients = match (&d.s0, &d.a) {
            (Some(s0), None) => CoefficientChoice::Root(*s0),
            (None, Some(a)) => CoefficientChoice::Explicit(a.clone()),
            _ => return Err(Error::Config("/design: exactly one of s0 and a is required".into())),
        };
        let plant = match (self.mode, &self.plant, &self.signals) {
            (ModeTag::OpenLoop, None, Some(_)) => None,
            (ModeTag::ClosedLoop, Some(p), None) => Some(build_plant(p)?),
            (ModeTag::OpenLoop, _, _) => {
                return Err(Error::Config("open-loop mode needs signals and no plant".into()))
            }
            (ModeTag::ClosedLoop, _, _) => {
                return Err(Error::Config("closed-loop mode needs a plant and no signals".into()))
            }
        };
        let mut req = DesignRequest::new(d.r, d.m, 1.0, d.rho, d.gamma_tilde.clone(), d.funnel);
        req.coefficients = coefficients;
        req.q = d.q.clone();
        req.gamma = d.gamma.clone().or_else(|| plant.as_ref().map(|p| p.high_gain().clone()));
        let (params, report) = design(&req)?;

        let [t0, t1] = self.tspan;
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::Config("/tspan: need finite t0 < t1".into()));
        }
        if !(self.sample_step > 0.0) {
            return Err(Error::Config("/sample_step: must be positive".into()));
        }
        let tol = match self.tolerances {
            Some(t) if !(t.rtol > 0.0 && t.atol > 0.0) => {
                return Err(Error::Config("/tolerances: rtol and atol must be positive".into()))
            }
            Some(t) => {
                let base = Tolerances::new(t.rtol, t.atol);
                let base = match t.h_max {
                    Some(h) => base.with_h_max(h),
                    None => base,
                };
                match t.max_steps {
                    Some(n) => base.with_max_steps(n),
                    None => base,
                }
            }
            None => Tolerances::default(),
        };

        let drive = match plant {
            None => {
                let s = self.signals.as_ref().expect("checked above");
                if s.u.dim() != d.m || s.y.dim() != d.m {
                    return Err(Error::dim(format!("/signals: u and y need {} components", d.m)));
                }
                if self.reference.is_some() || d.funnel_fc.is_some() {
                    return Err(Error::Config("reference and funnel_fc apply to closed loop only".into()));
                }
                Drive::Signals {
                    u: s.u.clone(),
                    y: s.y.clone(),
                }
            }
            Some(plant) => {
                if plant.output_dim() != d.m || plant.relative_degree() != d.r {
                    return Err(Error::dim(format!(
                        "/plant: has (r, m) = ({}, {}), design has ({}, {})",
                        plant.relative_degree(),
                        plant.output_dim(),
                        d.r,
                        d.m
                    )));
                }
                let reference = self
                    .reference
                    .clone()
                    .ok_or_else(|| Error::Config("/reference: required in closed loop".into()))?;
                if reference.dim() != d.m {
                    return Err(Error::dim(format!("/reference: needs {} components", d.m)));
                }
                let fc = d
                    .funnel_fc
                    .ok_or_else(|| Error::Config("/design/funnel_fc: required in closed loop".into()))?;
                let fc = ControllerFunnelSpec::new(fc, t1 - t0)?;
                Drive::Plant {
                    plant,
                    controller: ControllerConfig::new(d.r, d.m, fc),
                    reference,
                }
            }
        };
        let name = self.name.clone().unwrap_or_else(|| match self.mode {
            ModeTag::OpenLoop => "open-loop".into(),
            ModeTag::ClosedLoop => "closed-loop".into(),
        });
        Ok(Scenario {
            name,
            params,
            report,
            drive,
            tspan: (t0, t1),
            tol,
            sample_step: self.sample_step,
            cascade0: self.cascade0.clone(),
            sample_times: None,
        })
    }
}

pub fn parse_scenario_str(text: &str) -> Result<LoadedScenario> {
    let file = parse_file_str(text)?;
    Ok(LoadedScenario {
        scenario: file.build()?,
        out_dir: file.out_dir,
    })
}

/// Reads, validates and builds a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}


#[cfg(test)]
mod shipped {
    use super::*;
    use crate::builtin;
    use crate::simloop::Mode;

    fn shipped(name: &str) -> LoadedScenario {
        parse_scenario(Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)).unwrap()
    }

    #[test]
    fn example1_file_matches_builtin() {
        let sc = shipped("example1_s5.json").scenario;
        let b = builtin::precompensator_scenario(5.0).unwrap();
        assert_eq!(sc.mode(), Mode::OpenLoop);
        assert_eq!(sc.params.a, b.params.a);
        assert_eq!(sc.params.p, b.params.p);
        assert_eq!(sc.params.rho, b.params.rho);
        assert_eq!(sc.params.phi.params(), b.params.phi.params());
        assert_eq!(sc.tol, b.tol);
        assert_eq!((sc.tspan, sc.sample_step), (b.tspan, b.sample_step));
    }

    #[test]
    fn example2_file_matches_builtin() {
        let sc = shipped("example2_tracking.json").scenario;
        let b = builtin::tracking_scenario().unwrap();
        assert_eq!(sc.mode(), Mode::ClosedLoop);
        assert_eq!(sc.params.a, b.params.a);
        assert_eq!(sc.params.gamma_tilde, b.params.gamma_tilde);
        assert_eq!(sc.report.checks.len(), b.report.checks.len());
        for (x, y) in sc.report.checks.iter().zip(&b.report.checks) {
            assert_eq!((x.condition, x.status), (y.condition, y.status));
        }
        let (Drive::Plant { controller: c1, reference: r1, .. }, Drive::Plant { controller: c2, reference: r2, .. }) =
            (&sc.drive, &b.drive)
        else {
            panic!("closed loop expected")
        };
        assert_eq!(r1, r2);
        assert_eq!(c1.phi_fc, c2.phi_fc);
        assert_eq!(sc.tol, b.tol);
    }
}
