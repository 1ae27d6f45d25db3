//! Per-step CSV output. Numbers carry 17 significant digits so every
//! double round-trips; lines end in LF.

use std::fmt::Write as _;
use std::path::Path;

use super::CliError;
use crate::oac::GainStatus;

pub const REGRESSION_HEADER: &str = "t,eta,loss,e,V,dV,reg_partial";
pub const OAC_HEADER: &str = "t,cost,cost_opt,reg_partial,sigma_xi,gain_flag";

/// One online round. `e` is NaN for rounds without a regression target.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionRow {
    pub t: u64,
    pub eta: f64,
    pub loss: f64,
    pub e: f64,
    pub v: f64,
    pub dv: f64,
    pub reg_partial: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OacRow {
    pub t: u64,
    pub cost: f64,
    pub cost_opt: f64,
    pub reg_partial: f64,
    pub sigma_xi: f64,
    pub gain_flag: GainStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Trace {
    Regression(Vec<RegressionRow>),
    Oac(Vec<OacRow>),
}

impl Trace {
    pub fn len(&self) -> usize {
        match self {
            Trace::Regression(rows) => rows.len(),
            Trace::Oac(rows) => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn num(out: &mut String, v: f64) {
    let _ = write!(out, ",{v:.16e}");
}

/// Renders the trace; refuses an empty one.
pub fn render_csv(trace: &Trace) -> Result<String, CliError> {
    if trace.is_empty() {
        return Err(CliError::EmptyTrace);
    }
    let mut out = String::with_capacity(128 * (trace.len() + 1));
    match trace {
        Trace::Regression(rows) => {
            out.push_str(REGRESSION_HEADER);
            out.push('\n');
            for r in rows {
                let _ = write!(out, "{}", r.t);
                for v in [r.eta, r.loss, r.e, r.v, r.dv, r.reg_partial] {
                    num(&mut out, v);
                }
                out.push('\n');
            }
        }
        Trace::Oac(rows) => {
            out.push_str(OAC_HEADER);
            out.push('\n');
            for r in rows {
                let _ = write!(out, "{}", r.t);
                for v in [r.cost, r.cost_opt, r.reg_partial, r.sigma_xi] {
                    num(&mut out, v);
                }
                let _ = writeln!(out, ",{}", r.gain_flag as u8);
            }
        }
    }
    Ok(out)
}

pub fn emit_csv(trace: &Trace, path: &Path) -> Result<(), CliError> {
    let body = render_csv(trace)?;
    std::fs::write(path, body).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
