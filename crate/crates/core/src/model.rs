//! Linear scorer `f(x) = ⟨w, x⟩ + b` and its checkpoint format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix};

/// Weights and bias of a linear scorer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ModelParams {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let p = ModelParams { weights, bias };
        p.check_finite()?;
        Ok(p)
    }

    pub fn zeros(dim: usize) -> Self {
        ModelParams {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Weights followed by the bias (length `d + 1`). This is the vector
    /// optimizers and parameter perturbations act on.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        let (bias, weights) = flat
            .split_last()
            .ok_or_else(|| Error::invalid("flat parameter vector is empty"))?;
        ModelParams::new(weights.to_vec(), *bias)
    }

    fn check_finite(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite()) || !self.bias.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Checkpoint text: `d`, then the `d` weights, then the bias, one per line.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", self.dim()).unwrap();
        for v in self.weights.iter().chain(std::iter::once(&self.bias)) {
            writeln!(out, "{v:.17e}").unwrap();
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, message: String| Error::Parse {
            path: "<checkpoint>".into(),
            line: line + 1,
            message,
        };
        let (ln, first) = lines
            .next()
            .ok_or_else(|| Error::invalid("empty model checkpoint"))?;
        let d: usize = first
            .trim()
            .parse()
            .map_err(|e| parse_err(ln, format!("dimension: {e}")))?;
        let values = lines
            .map(|(ln, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(ln, format!("value {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != d + 1 {
            return Err(Error::invalid(format!(
                "checkpoint declares d = {d} but holds {} values (expected {})",
                values.len(),
                d + 1
            )));
        }
        ModelParams::from_flat(&values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ModelParams::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

/// Model scores on every example of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for ScoreVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn score(params: &ModelParams, features: &DenseMatrix) -> Result<ScoreVector> {
    if features.cols() != params.dim() {
        return Err(Error::invalid(format!(
            "features have {} columns but the model has {} weights",
            features.cols(),
            params.dim()
        )));
    }
    Ok(ScoreVector(
        (0..features.rows())
            .map(|i| dot(&params.weights, features.row(i)) + params.bias)
            .collect(),
    ))
}

/// `+1` for strictly positive scores, `-1` otherwise.
pub fn predict(scores: &[f64]) -> Vec<i8> {
    scores.iter().map(|&s| if s > 0.0 { 1 } else { -1 }).collect()
}
