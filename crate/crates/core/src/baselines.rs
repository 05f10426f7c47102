//! Logistic regression and the post-shift (threshold tuning) baseline.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::model::{score, ModelParams};
use crate::numerics::Adagrad;
use crate::surrogates::{Profiler, Subset, SurrogateKind, SurrogateSpec};

/// Minimizes the mean logistic loss with Adagrad from the zero model.
pub fn train_logistic_regression(ds: &Dataset, step: f64, iters: usize) -> Result<ModelParams> {
    let pos = ds.num_positives();
    if pos == 0 || pos == ds.len() {
        return Err(Error::invalid("logistic regression needs both classes"));
    }
    let spec = SurrogateSpec {
        kind: SurrogateKind::Logistic,
        subset: Subset::All,
    };
    let prof = Profiler::new(&[spec], ds)?;
    let mut failure = None;
    let theta = Adagrad::new(step, iters)?.minimize(
        |theta| {
            let grad = ModelParams::from_flat(theta)
                .and_then(|p| score(&p, ds.features()))
                .and_then(|s| prof.values_and_gradients(&s));
            match grad {
                Ok((v, mut g)) if v[0].is_finite() => g.swap_remove(0),
                Ok((v, _)) => {
                    failure.get_or_insert(Error::NonFinite(format!("logistic loss {}", v[0])));
                    vec![f64::NAN; theta.len()]
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    vec![f64::NAN; theta.len()]
                }
            }
        },
        &vec![0.0; ds.dim() + 1],
    );
    if let Some(e) = failure {
        return Err(e);
    }
    ModelParams::from_flat(&theta?)
}

/// Tuned decision threshold: predict `sign(score − threshold)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PostShiftResult {
    pub threshold: f64,
    pub achieved_metric: f64,
}

impl PostShiftResult {
    /// The shifted model: same weights, bias lowered by the threshold.
    pub fn apply(&self, model: &ModelParams) -> ModelParams {
        ModelParams {
            weights: model.weights.clone(),
            bias: model.bias - self.threshold,
        }
    }
}

/// Candidate thresholds: `−∞`, midpoints of consecutive distinct scores,
/// `+∞`. Every distinct prediction pattern of a threshold rule is covered.
pub fn threshold_candidates(scores: &[f64]) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(f64::INFINITY);
    out
}

/// Sweeps every threshold candidate and returns the one minimizing the
/// metric on `tune_ds` (ties resolved toward the smallest threshold).
pub fn post_shift(model: &ModelParams, tune_ds: &Dataset, metric: &dyn Metric) -> Result<PostShiftResult> {
    let scores = score(model, tune_ds.features())?;
    let mut best: Option<PostShiftResult> = None;
    for thr in threshold_candidates(&scores) {
        let shifted: Vec<f64> = scores.iter().map(|s| s - thr).collect();
        let v = metric.evaluate(&shifted, tune_ds)?;
        if best.is_none_or(|b| v < b.achieved_metric) {
            best = Some(PostShiftResult {
                threshold: thr,
                achieved_metric: v,
            });
        }
    }
    // the candidate list is never empty
    Ok(best.expect("threshold candidates"))
}
