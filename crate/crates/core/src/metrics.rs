//! Evaluation metrics, all expressed as losses to minimize.

use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::predict;
use crate::surrogates::{Profiler, SurrogateSpec};

/// Anything that maps the scores of a model on a dataset to a number.
/// This is the only access the optimizer has to the target metric.
pub trait Metric: Sync {
    fn evaluate(&self, scores: &[f64], ds: &Dataset) -> Result<f64>;
}

impl<M: Metric + ?Sized> Metric for &M {
    fn evaluate(&self, scores: &[f64], ds: &Dataset) -> Result<f64> {
        (**self).evaluate(scores, ds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub tpr: f64,
    pub tnr: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Class-conditional rates overall and, when groups exist, per group.
/// A group rate is `None` when that group lacks one of the classes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfusionRates {
    pub overall: Rates,
    pub per_group: Option<[Option<Rates>; 2]>,
}

fn check_len(scores: &[f64], ds: &Dataset) -> Result<()> {
    if scores.len() != ds.len() {
        return Err(Error::invalid(format!(
            "{} scores for a dataset of {} examples",
            scores.len(),
            ds.len()
        )));
    }
    Ok(())
}

fn rates_over(preds: &[i8], labels: &[i8], keep: impl Fn(usize) -> bool) -> (usize, usize, usize, usize) {
    let (mut tp, mut p, mut tn, mut n) = (0, 0, 0, 0);
    for i in (0..labels.len()).filter(|&i| keep(i)) {
        if labels[i] == 1 {
            p += 1;
            tp += usize::from(preds[i] == 1);
        } else {
            n += 1;
            tn += usize::from(preds[i] == -1);
        }
    }
    (tp, p, tn, n)
}

fn to_rates(tp: usize, p: usize, tn: usize, n: usize) -> Rates {
    let tpr = tp as f64 / p as f64;
    let tnr = tn as f64 / n as f64;
    Rates {
        tpr,
        tnr,
        fpr: (n - tn) as f64 / n as f64,
        fnr: (p - tp) as f64 / p as f64,
    }
}

pub fn confusion_rates(scores: &[f64], ds: &Dataset) -> Result<ConfusionRates> {
    check_len(scores, ds)?;
    let preds = predict(scores);
    let labels = ds.labels();
    let (tp, p, tn, n) = rates_over(&preds, labels, |_| true);
    if p == 0 {
        return Err(Error::invalid("confusion rates: no positive examples"));
    }
    if n == 0 {
        return Err(Error::invalid("confusion rates: no negative examples"));
    }
    let per_group = ds.groups().map(|g| {
        [0u8, 1].map(|grp| {
            let (tp, p, tn, n) = rates_over(&preds, labels, |i| g[i] == grp);
            (p > 0 && n > 0).then(|| to_rates(tp, p, tn, n))
        })
    });
    Ok(ConfusionRates {
        overall: to_rates(tp, p, tn, n),
        per_group,
    })
}

pub fn error_rate(scores: &[f64], ds: &Dataset) -> Result<f64> {
    check_len(scores, ds)?;
    let wrong = predict(scores)
        .iter()
        .zip(ds.labels())
        .filter(|(p, y)| p != y)
        .count();
    Ok(wrong as f64 / ds.len() as f64)
}

/// `1 − √(TPR·TNR)`.
pub fn gmean_loss(scores: &[f64], ds: &Dataset) -> Result<f64> {
    let r = confusion_rates(scores, ds)?.overall;
    Ok(1.0 - (r.tpr * r.tnr).sqrt())
}

/// One minus the average of the two groups' F₁ scores. A group with no
/// predicted positives (or no true positives) has F₁ = 0.
pub fn macro_f_loss(scores: &[f64], ds: &Dataset) -> Result<f64> {
    check_len(scores, ds)?;
    let groups = ds
        .groups()
        .ok_or_else(|| Error::invalid("macro F-measure needs a group column"))?;
    let preds = predict(scores);
    let labels = ds.labels();
    let mut total = 0.0;
    for grp in [0u8, 1] {
        let (mut tp, mut pred_pos, mut pos) = (0usize, 0usize, 0usize);
        for i in (0..ds.len()).filter(|&i| groups[i] == grp) {
            let (p, y) = (preds[i] == 1, labels[i] == 1);
            tp += usize::from(p && y);
            pred_pos += usize::from(p);
            pos += usize::from(y);
        }
        if pos == 0 {
            return Err(Error::invalid(format!("macro F-measure: group {grp} has no positives")));
        }
        if tp > 0 {
            let prec = tp as f64 / pred_pos as f64;
            let rec = tp as f64 / pos as f64;
            total += 2.0 * prec * rec / (prec + rec);
        }
    }
    Ok(1.0 - total / 2.0)
}

/// Example indices ordered by descending score, ties by ascending index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// One minus the fraction of positives among the `k` highest scores.
pub fn precision_at_k_loss(scores: &[f64], ds: &Dataset, k: usize) -> Result<f64> {
    check_len(scores, ds)?;
    if k == 0 || k > ds.len() {
        return Err(Error::invalid(format!("precision@k: k = {k} not in 1..={}", ds.len())));
    }
    let labels = ds.labels();
    let hits = ranking(scores)[..k].iter().filter(|&&i| labels[i] == 1).count();
    Ok(1.0 - hits as f64 / k as f64)
}

/// Precision@k with k equal to the number of positives.
pub fn prbep_loss(scores: &[f64], ds: &Dataset) -> Result<f64> {
    let p = ds.num_positives();
    if p == 0 {
        return Err(Error::invalid("PRBEP: no positive examples"));
    }
    precision_at_k_loss(scores, ds, p)
}

/// A known monotone link from surrogate profiles to metric values.
#[derive(Clone, Debug, PartialEq)]
pub enum Psi {
    /// `⟨a, u⟩` with `a ≥ 0`.
    Linear(Vec<f64>),
    /// `(∏ u_k)^{1/K}` on the positive orthant.
    GeometricMean,
    /// `τ·log Σ exp(u_k / τ)`.
    SmoothMax { temperature: f64 },
}

impl Psi {
    pub fn linear(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("linear link weights must be nonnegative"));
        }
        Ok(Psi::Linear(weights))
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        match self {
            Psi::Linear(a) => a.iter().zip(u).map(|(a, u)| a * u).sum(),
            Psi::GeometricMean => {
                let k = u.len() as f64;
                (u.iter().map(|v| v.ln()).sum::<f64>() / k).exp()
            }
            Psi::SmoothMax { temperature } => {
                let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + temperature * u.iter().map(|v| ((v - m) / temperature).exp()).sum::<f64>().ln()
            }
        }
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Psi::Linear(a) => a.clone(),
            Psi::GeometricMean => {
                let f = self.value(u);
                let k = u.len() as f64;
                u.iter().map(|v| f / (k * v)).collect()
            }
            Psi::SmoothMax { temperature } => {
                let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = u.iter().map(|v| ((v - m) / temperature).exp()).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|v| v / z).collect()
            }
        }
    }
}

/// Bounded additive slack on top of `ψ(ℓ)`, a function of the score vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slack {
    None,
    /// `amplitude · sin(‖scores‖)`.
    Sine { amplitude: f64 },
}

impl Slack {
    pub fn value(&self, scores: &[f64]) -> f64 {
        match self {
            Slack::None => 0.0,
            Slack::Sine { amplitude } => amplitude * scores.iter().map(|s| s * s).sum::<f64>().sqrt().sin(),
        }
    }
}

/// `M = ψ(ℓ(scores)) + slack(scores)` for a known `ψ`; used to check
/// gradient estimators against an exact answer.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticMetric {
    pub psi: Psi,
    pub specs: Vec<SurrogateSpec>,
    pub slack: Slack,
}

pub fn synthetic_metric(psi: Psi, specs: Vec<SurrogateSpec>, slack: Slack) -> SyntheticMetric {
    SyntheticMetric { psi, specs, slack }
}

impl Metric for SyntheticMetric {
    fn evaluate(&self, scores: &[f64], ds: &Dataset) -> Result<f64> {
        let u = Profiler::new(&self.specs, ds)?.profile_from_scores(scores)?;
        Ok(self.psi.value(u.values()) + self.slack.value(scores))
    }
}

/// `scale · M + offset`.
#[derive(Clone, Debug)]
pub struct AffineMetric<M> {
    pub inner: M,
    pub scale: f64,
    pub offset: f64,
}

impl<M: Metric> Metric for AffineMetric<M> {
    fn evaluate(&self, scores: &[f64], ds: &Dataset) -> Result<f64> {
        Ok(self.scale * self.inner.evaluate(scores, ds)? + self.offset)
    }
}

/// The metrics available from configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricSpec {
    ErrorRate,
    GmeanLoss,
    MacroFLoss,
    PrbepLoss,
    PrecisionAtKLoss(usize),
    Synthetic(SyntheticMetric),
}

impl MetricSpec {
    /// Converts a loss into the number reported to users: `1 − loss` for
    /// F-measure and precision metrics, the loss itself otherwise.
    pub fn display_value(&self, loss: f64) -> f64 {
        match self {
            MetricSpec::MacroFLoss | MetricSpec::PrbepLoss | MetricSpec::PrecisionAtKLoss(_) => 1.0 - loss,
            _ => loss,
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            MetricSpec::ErrorRate => "error rate",
            MetricSpec::GmeanLoss => "G-mean loss",
            MetricSpec::MacroFLoss => "macro F-measure",
            MetricSpec::PrbepLoss => "PRBEP",
            MetricSpec::PrecisionAtKLoss(_) => "precision@k",
            MetricSpec::Synthetic(_) => "synthetic",
        }
    }
}

impl Metric for MetricSpec {
    fn evaluate(&self, scores: &[f64], ds: &Dataset) -> Result<f64> {
        match self {
            MetricSpec::ErrorRate => error_rate(scores, ds),
            MetricSpec::GmeanLoss => gmean_loss(scores, ds),
            MetricSpec::MacroFLoss => macro_f_loss(scores, ds),
            MetricSpec::PrbepLoss => prbep_loss(scores, ds),
            MetricSpec::PrecisionAtKLoss(k) => precision_at_k_loss(scores, ds, *k),
            MetricSpec::Synthetic(m) => m.evaluate(scores, ds),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::ErrorRate => write!(f, "error"),
            MetricSpec::GmeanLoss => write!(f, "gmean"),
            MetricSpec::MacroFLoss => write!(f, "macro_f"),
            MetricSpec::PrbepLoss => write!(f, "prbep"),
            MetricSpec::PrecisionAtKLoss(k) => write!(f, "p_at_k:{k}"),
            MetricSpec::Synthetic(_) => write!(f, "synthetic"),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "error" => Ok(MetricSpec::ErrorRate),
            "gmean" => Ok(MetricSpec::GmeanLoss),
            "macro_f" => Ok(MetricSpec::MacroFLoss),
            "prbep" => Ok(MetricSpec::PrbepLoss),
            other => match other.strip_prefix("p_at_k:") {
                Some(k) => match k.parse::<usize>() {
                    Ok(k) if k >= 1 => Ok(MetricSpec::PrecisionAtKLoss(k)),
                    _ => Err(Error::invalid(format!("metric {s:?}: k must be a positive integer"))),
                },
                None => Err(Error::invalid(format!("unknown metric {s:?}"))),
            },
        }
    }
}
