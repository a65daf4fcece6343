//! Plain-text model files.
//!
//! ```text
//! pmi-model 1
//! kernel=rbf:gamma=2.0
//! nu=...
//! rho=...
//! slack=...
//! dimension=2
//! termination=no_oracle
//! queries=0
//! scale_min=...,...        (optional)
//! scale_max=...,...        (optional)
//! terms=3
//! term=<weight>,<x1>,...,<xd>
//! ```
//!
//! Every float is written with 17 significant digits, so a reloaded model
//! evaluates bit-identically.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::data::{format_f64, ScaleParams};
use crate::error::{PmiError, Result};
use crate::kernel::{ExpansionTerm, KernelSpec};
use crate::pmi::fit::{PmiModel, TerminationReason};
use crate::pmi::model::DecisionFunction;

const MAGIC: &str = "pmi-model 1";

/// Everything `predict` needs: the decision function, the scaling fitted at
/// training time, and a summary of how training ended.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub decision: DecisionFunction,
    pub nu: f64,
    pub termination: TerminationReason,
    pub queries: usize,
    pub scale: Option<ScaleParams>,
}

impl SavedModel {
    pub fn from_fit(model: &PmiModel, scale: Option<ScaleParams>) -> Self {
        Self {
            decision: model.model.decision.clone(),
            nu: model.config.nu,
            termination: model.termination,
            queries: model.queries(),
            scale,
        }
    }

    pub fn to_text(&self) -> String {
        let d = &self.decision;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "kernel={}", d.kernel);
        let _ = writeln!(out, "nu={}", format_f64(self.nu));
        let _ = writeln!(out, "rho={}", format_f64(d.rho));
        let _ = writeln!(out, "slack={}", format_f64(d.slack));
        let _ = writeln!(out, "dimension={}", d.dimension);
        let _ = writeln!(out, "termination={}", self.termination);
        let _ = writeln!(out, "queries={}", self.queries);
        if let Some(s) = &self.scale {
            let _ = writeln!(out, "scale_min={}", join(&s.min));
            let _ = writeln!(out, "scale_max={}", join(&s.max));
        }
        let _ = writeln!(out, "terms={}", d.expansion.len());
        for t in &d.expansion {
            let _ = writeln!(out, "term={},{}", format_f64(t.weight), join(&t.point));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, MAGIC)) => {}
            Some((line, _)) => return Err(bad(line, "missing `pmi-model 1` header")),
            None => return Err(bad(1, "empty model file")),
        }
        let mut kernel = None;
        let mut nu = None;
        let mut rho = None;
        let mut slack = None;
        let mut dimension = None;
        let mut termination = None;
        let mut queries = None;
        let mut scale_min = None;
        let mut scale_max = None;
        let mut declared_terms = None;
        let mut expansion = Vec::new();

        for (line, text) in lines {
            let (key, value) = text
                .split_once('=')
                .ok_or_else(|| bad(line, "expected key=value"))?;
            match key {
                "kernel" => kernel = Some(KernelSpec::from_str(value).map_err(|e| bad(line, &e.to_string()))?),
                "nu" => nu = Some(float(line, value)?),
                "rho" => rho = Some(float(line, value)?),
                "slack" => slack = Some(float(line, value)?),
                "dimension" => dimension = Some(int(line, value)?),
                "termination" => {
                    termination = Some(TerminationReason::from_str(value).map_err(|e| bad(line, &e.to_string()))?)
                }
                "queries" => queries = Some(int(line, value)?),
                "scale_min" => scale_min = Some(floats(line, value)?),
                "scale_max" => scale_max = Some(floats(line, value)?),
                "terms" => declared_terms = Some(int(line, value)?),
                "term" => {
                    let mut v = floats(line, value)?;
                    if v.len() < 2 {
                        return Err(bad(line, "term needs a weight and a point"));
                    }
                    let point = v.split_off(1);
                    if let Some(d) = dimension {
                        if point.len() != d {
                            return Err(bad(line, &format!("term has {} coordinates, expected {d}", point.len())));
                        }
                    }
                    expansion.push(ExpansionTerm { weight: v[0], point });
                }
                other => return Err(bad(line, &format!("unknown key `{other}`"))),
            }
        }
        let end = text.lines().count();
        let missing = |name: &str| bad(end, &format!("missing `{name}`"));
        let dimension = dimension.ok_or_else(|| missing("dimension"))?;
        if expansion.iter().any(|t| t.point.len() != dimension) {
            return Err(bad(end, "term dimension does not match `dimension`"));
        }
        if declared_terms.ok_or_else(|| missing("terms"))? != expansion.len() {
            return Err(bad(end, "`terms` does not match the number of term lines"));
        }
        let scale = match (scale_min, scale_max) {
            (None, None) => None,
            (Some(min), Some(max)) if min.len() == dimension && max.len() == dimension => {
                Some(ScaleParams { min, max })
            }
            _ => return Err(bad(end, "scale_min and scale_max must both be present with `dimension` entries")),
        };
        Ok(Self {
            decision: DecisionFunction {
                kernel: kernel.ok_or_else(|| missing("kernel"))?,
                rho: rho.ok_or_else(|| missing("rho"))?,
                slack: slack.ok_or_else(|| missing("slack"))?,
                dimension,
                expansion,
            },
            nu: nu.ok_or_else(|| missing("nu"))?,
            termination: termination.ok_or_else(|| missing("termination"))?,
            queries: queries.ok_or_else(|| missing("queries"))?,
            scale,
        })
    }

    /// Decision value of a raw (unscaled) feature vector.
    pub fn decision_value(&self, features: &[f64]) -> Result<f64> {
        match &self.scale {
            Some(s) => self.decision.decision_value(&s.apply_features(features)?),
            None => self.decision.decision_value(features),
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format_f64(*x)).collect::<Vec<_>>().join(",")
}

fn bad(line: usize, message: &str) -> PmiError {
    PmiError::ModelFormat {
        line,
        message: message.to_string(),
    }
}

fn float(line: usize, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| bad(line, &format!("bad number `{s}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(line, &format!("non-finite number `{s}`")))
    }
}

fn floats(line: usize, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|x| float(line, x)).collect()
}

fn int(line: usize, s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| bad(line, &format!("bad integer `{s}`")))
}
