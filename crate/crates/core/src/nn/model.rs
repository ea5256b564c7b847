use serde::{Deserialize, Serialize};

use super::network::{Inputs, Tape};
use super::{Arch, InputKind, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Prffn,
    PolarOnly,
    RadiomicsOnly,
    EarlyConcat,
    LateResult,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::PolarOnly,
        ModelKind::RadiomicsOnly,
        ModelKind::EarlyConcat,
        ModelKind::LateResult,
        ModelKind::Prffn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Prffn => "prffn",
            ModelKind::PolarOnly => "polar_only",
            ModelKind::RadiomicsOnly => "radiomics_only",
            ModelKind::EarlyConcat => "early_concat",
            ModelKind::LateResult => "late_result",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown model kind {s:?}")))
    }

    /// Architecture of a single-network kind; `None` for the late average.
    pub fn arch(&self, in_p: usize, in_r: usize, hidden: &[usize], classes: usize) -> Option<Arch> {
        let hidden = hidden.to_vec();
        Some(match self {
            ModelKind::Prffn => Arch::Prffn { in_p, in_r, hidden, classes },
            ModelKind::PolarOnly => Arch::Mlp { input: InputKind::Polar, in_dim: in_p, hidden, classes },
            ModelKind::RadiomicsOnly => Arch::Mlp { input: InputKind::Radiomics, in_dim: in_r, hidden, classes },
            ModelKind::EarlyConcat => Arch::Mlp { input: InputKind::Concat, in_dim: in_p + in_r, hidden, classes },
            ModelKind::LateResult => return None,
        })
    }
}

/// A trained classifier in evaluation precision.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Single { kind: ModelKind, net: Network<f64> },
    /// Uniform average of the two single-modality networks' probabilities.
    Late { polar: Network<f64>, radiomics: Network<f64> },
}

/// One sample's classification with its fusion weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub label: usize,
    /// Per-layer head probabilities `X_i` (fusion network only).
    pub head_probs: Vec<Vec<f64>>,
    /// Per-layer `(a_P, a_R)` attention weights (fusion network only).
    pub fusion_weights: Vec<[f64; 2]>,
    /// Late attention weights `b_i` (fusion network only).
    pub late_weights: Vec<f64>,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Single { kind, .. } => *kind,
            Model::Late { .. } => ModelKind::LateResult,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Model::Single { net, .. } => net.classes(),
            Model::Late { polar, .. } => polar.classes(),
        }
    }

    pub fn networks(&self) -> Vec<&Network<f64>> {
        match self {
            Model::Single { net, .. } => vec![net],
            Model::Late { polar, radiomics } => vec![polar, radiomics],
        }
    }

    /// Row-major class probabilities for `n` samples.
    pub fn predict_proba(&self, xp: &[f64], xr: &[f64], n: usize) -> Result<Vec<f64>> {
        let x = Inputs { xp, xr, n };
        match self {
            Model::Single { net, .. } => net.forward(&x),
            Model::Late { polar, radiomics } => {
                let a = polar.forward(&x)?;
                let b = radiomics.forward(&x)?;
                Ok(a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect())
            }
        }
    }

    pub fn predict_labels(&self, xp: &[f64], xr: &[f64], n: usize) -> Result<Vec<u8>> {
        let c = self.classes();
        Ok(self.predict_proba(xp, xr, n)?.chunks(c).map(|r| argmax(r) as u8).collect())
    }

    pub fn predict_one(&self, xp: &[f64], xr: &[f64]) -> Result<Prediction> {
        let x = Inputs { xp, xr, n: 1 };
        if let Model::Single { net, .. } = self {
            if let Tape::Prffn { att, heads, late, out, .. } = net.forward_tape(&x)? {
                return Ok(Prediction {
                    label: argmax(&out),
                    probs: out,
                    head_probs: heads,
                    fusion_weights: att.iter().map(|a| [a[0], a[1]]).collect(),
                    late_weights: late,
                });
            }
        }
        let probs = self.predict_proba(xp, xr, 1)?;
        Ok(Prediction {
            label: argmax(&probs),
            probs,
            head_probs: Vec::new(),
            fusion_weights: Vec::new(),
            late_weights: Vec::new(),
        })
    }
}
