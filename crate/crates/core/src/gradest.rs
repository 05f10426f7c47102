//! Zeroth-order estimates of `∇ψ` at the current surrogate profile, using
//! only black-box evaluations of the metric.
//!
//! Three estimators are provided:
//!
//! * [`fd_estimate`]: Gaussian finite differences in surrogate space. Each
//!   perturbed profile `ℓ + σZ` is realized by shifting the scores of the
//!   examples each surrogate averages over, so the metric can be queried at
//!   exactly that profile. Needs surrogates on pairwise disjoint subsets and
//!   the metric on the same sample.
//! * [`interp_estimate`]: local linear interpolation. Parameters are
//!   perturbed in pairs and `ĝ` is the least-squares fit from surrogate
//!   differences to metric differences. The metric may live on a different
//!   sample (e.g. a validation set).
//! * [`two_step_fd_estimate`]: finite differences of the Gaussian-smoothed
//!   link `ψ_σ₁`, for non-smooth metrics.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::model::{score, ModelParams, ScoreVector};
use crate::numerics::{least_squares_solve, norm, DenseMatrix, RandomStream};
use crate::surrogates::{check_disjoint, Profiler, SurrogateProfile, SurrogateSpec};

pub const DEFAULT_PERTURBATIONS: usize = 1000;
/// Fresh draws tried for a perturbation whose target profile is unreachable.
pub const MAX_RESAMPLES: usize = 5;
/// Score shifts are searched in `[-SHIFT_BRACKET, SHIFT_BRACKET]`.
pub const SHIFT_BRACKET: f64 = 1e3;
const SHIFT_TOL: f64 = 1e-10;
const PROFILE_TOL: f64 = 1e-8;

/// Perturbation settings shared by all estimators.
#[derive(Clone, Debug)]
pub struct PerturbationConfig {
    pub m: usize,
    pub sigma: f64,
    /// Second-stage scale, two-step estimator only.
    pub sigma2: Option<f64>,
    /// Examples per minibatch for the interpolation estimator.
    pub minibatch: Option<usize>,
    /// When set, estimates with `‖ĝ‖ > 2√K·L` are replaced by zero.
    pub truncation_l: Option<f64>,
    /// Parameters the interpolation estimator may perturb (all when `None`).
    pub coordinate_mask: Option<Vec<bool>>,
    pub stream: RandomStream,
}

impl PerturbationConfig {
    pub fn new(m: usize, sigma: f64, seed: u64) -> Self {
        PerturbationConfig {
            m,
            sigma,
            sigma2: None,
            minibatch: None,
            truncation_l: None,
            coordinate_mask: None,
            stream: RandomStream::new(seed, 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("number of perturbations must be at least 1"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma {} must be positive", self.sigma)));
        }
        if let Some(s2) = self.sigma2 {
            if !(s2 > 0.0) || !s2.is_finite() {
                return Err(Error::invalid(format!("sigma2 {s2} must be positive")));
            }
        }
        if let Some(l) = self.truncation_l {
            if !(l > 0.0) {
                return Err(Error::invalid(format!("truncation L {l} must be positive")));
            }
        }
        if self.minibatch == Some(0) {
            return Err(Error::invalid("minibatch size must be at least 1"));
        }
        Ok(())
    }

    /// Same settings on a different random stream.
    pub fn with_stream(&self, stream: RandomStream) -> Self {
        PerturbationConfig {
            stream,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EstimateDiagnostics {
    /// Condition number of `HᵀH` (interpolation only).
    pub condition_number: Option<f64>,
    /// `‖Hĝ − M‖` (interpolation only).
    pub residual_norm: Option<f64>,
    pub perturbations_used: usize,
    /// Finite-difference perturbations dropped after exhausting resamples.
    pub skipped: usize,
    pub truncated: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    pub diagnostics: EstimateDiagnostics,
}

/// Which estimator the optimizer calls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    FiniteDifference,
    Interpolation,
    TwoStep,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::FiniteDifference => "fd",
            EstimatorKind::Interpolation => "interp",
            EstimatorKind::TwoStep => "two_step",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fd" => Ok(EstimatorKind::FiniteDifference),
            "interp" => Ok(EstimatorKind::Interpolation),
            "two_step" => Ok(EstimatorKind::TwoStep),
            other => Err(Error::invalid(format!("unknown estimator {other:?} (expected fd, interp or two_step)"))),
        }
    }
}

/// `g` if `‖g‖ ≤ 2√K·L`, otherwise the zero vector.
pub fn truncate_gradient(g: &[f64], l: f64) -> Vec<f64> {
    let bound = 2.0 * (g.len() as f64).sqrt() * l;
    if norm(g) <= bound {
        g.to_vec()
    } else {
        vec![0.0; g.len()]
    }
}

/// `σ₂ = √(σ₁ / (K^{3/2}·L))`.
pub fn default_sigma2(sigma1: f64, k: usize, l: f64) -> f64 {
    (sigma1 / ((k as f64).powf(1.5) * l)).sqrt()
}

fn shift_component(prof: &Profiler<'_>, k: usize, scores: &[f64], target: f64) -> Result<f64> {
    let current = prof.value(k, scores);
    if target == current {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-SHIFT_BRACKET, SHIFT_BRACKET);
    // the map is nonincreasing in the margin shift
    let (high, low) = (prof.shifted_value(k, scores, lo), prof.shifted_value(k, scores, hi));
    let unattainable = || Error::UnattainablePerturbation {
        component: k,
        target,
        low,
        high,
    };
    if !(target >= low && target <= high) {
        return Err(unattainable());
    }
    while hi - lo > SHIFT_TOL {
        let mid = 0.5 * (lo + hi);
        if prof.shifted_value(k, scores, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = 0.5 * (lo + hi);
    if (prof.shifted_value(k, scores, delta) - target).abs() > PROFILE_TOL {
        return Err(unattainable());
    }
    Ok(delta)
}

/// Score perturbation `Δ` with `ℓ(f + Δ) = target`, using one margin shift
/// per surrogate subset (constant on single-label subsets, zero elsewhere).
fn shift_for_profile(prof: &Profiler<'_>, scores: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    let labels = prof.dataset().labels();
    let mut delta = vec![0.0; scores.len()];
    for (k, &t) in target.iter().enumerate() {
        let d = shift_component(prof, k, scores, t)?;
        if d != 0.0 {
            for &i in prof.members(k) {
                delta[i] = f64::from(labels[i]) * d;
            }
        }
    }
    Ok(delta)
}

/// Finds `Δ ∈ Rⁿ` such that `ℓ(scores + Δ) = target_profile`.
pub fn solve_score_shift(
    specs: &[SurrogateSpec],
    scores: &ScoreVector,
    ds: &Dataset,
    target_profile: &SurrogateProfile,
) -> Result<Vec<f64>> {
    check_disjoint(specs)?;
    let prof = Profiler::new(specs, ds)?;
    if target_profile.len() != specs.len() {
        return Err(Error::invalid(format!(
            "target profile has {} entries for {} surrogates",
            target_profile.len(),
            specs.len()
        )));
    }
    shift_for_profile(&prof, scores, target_profile.values())
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| alpha * xi + yi).collect()
}

/// Runs `draw` once per perturbation on its own substream, retrying
/// unattainable targets, and averages the successful contributions.
fn average_score_perturbations<F>(cfg: &PerturbationConfig, k: usize, draw: F) -> Result<GradientEstimate>
where
    F: Fn(&mut RandomStream) -> Result<Vec<f64>> + Sync,
{
    let results: Vec<Result<Option<Vec<f64>>>> = (0..cfg.m)
        .into_par_iter()
        .map(|j| {
            let mut stream = cfg.stream.substream(j as u64);
            for _ in 0..=MAX_RESAMPLES {
                match draw(&mut stream) {
                    Ok(c) => return Ok(Some(c)),
                    Err(Error::UnattainablePerturbation { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok(None)
        })
        .collect();

    let mut sum = vec![0.0; k];
    let mut used = 0usize;
    for r in results {
        if let Some(c) = r? {
            for (s, v) in sum.iter_mut().zip(&c) {
                *s += v;
            }
            used += 1;
        }
    }
    let skipped = cfg.m - used;
    if 2 * skipped > cfg.m {
        return Err(Error::EstimatorFailure(format!(
            "{skipped} of {} perturbations could not be realized by score shifts",
            cfg.m
        )));
    }
    let mut g: Vec<f64> = sum.iter().map(|s| s / used as f64).collect();
    let mut diagnostics = EstimateDiagnostics {
        perturbations_used: used,
        skipped,
        ..Default::default()
    };
    if skipped > 0 {
        diagnostics
            .warnings
            .push(format!("{skipped} unattainable perturbations skipped"));
    }
    if let Some(l) = cfg.truncation_l {
        let t = truncate_gradient(&g, l);
        diagnostics.truncated = t != g;
        g = t;
    }
    Ok(GradientEstimate { g, diagnostics })
}

struct ScoreSpace<'a> {
    prof: Profiler<'a>,
    scores: Vec<f64>,
    base: Vec<f64>,
}

impl<'a> ScoreSpace<'a> {
    fn new(specs: &[SurrogateSpec], params: &ModelParams, ds: &'a Dataset) -> Result<Self> {
        check_disjoint(specs)?;
        let prof = Profiler::new(specs, ds)?;
        let scores = score(params, ds.features())?.0;
        let base = prof.profile_from_scores(&scores)?.0;
        Ok(ScoreSpace { prof, scores, base })
    }

    /// Metric at the scores realizing `target`.
    fn metric_at(&self, metric: &dyn Metric, target: &[f64]) -> Result<f64> {
        let delta = shift_for_profile(&self.prof, &self.scores, target)?;
        metric.evaluate(&add(&self.scores, &delta), self.prof.dataset())
    }
}

/// Finite-difference estimate through score-space perturbations.
pub fn fd_estimate(
    metric: &dyn Metric,
    specs: &[SurrogateSpec],
    params: &ModelParams,
    ds: &Dataset,
    cfg: &PerturbationConfig,
) -> Result<GradientEstimate> {
    cfg.validate()?;
    if cfg.sigma2.is_some() {
        return Err(Error::invalid("sigma2 is only used by the two-step estimator"));
    }
    let space = ScoreSpace::new(specs, params, ds)?;
    let m0 = metric.evaluate(&space.scores, ds)?;
    let k = specs.len();
    average_score_perturbations(cfg, k, |stream| {
        let z = stream.gaussian_vector(k)?;
        let target = axpy(cfg.sigma, &z, &space.base);
        let diff = (space.metric_at(metric, &target)? - m0) / cfg.sigma;
        Ok(z.iter().map(|zi| diff * zi).collect())
    })
}

/// Two-step finite-difference estimate of `∇ψ_σ₁`. `σ₂` comes from
/// `cfg.sigma2`, or from [`default_sigma2`] when only `truncation_l` is set.
pub fn two_step_fd_estimate(
    metric: &dyn Metric,
    specs: &[SurrogateSpec],
    params: &ModelParams,
    ds: &Dataset,
    cfg: &PerturbationConfig,
) -> Result<GradientEstimate> {
    cfg.validate()?;
    let k = specs.len();
    let sigma2 = match (cfg.sigma2, cfg.truncation_l) {
        (Some(s), _) => s,
        (None, Some(l)) => default_sigma2(cfg.sigma, k, l),
        (None, None) => return Err(Error::invalid("two-step estimator needs sigma2 (or truncation L for its default)")),
    };
    let space = ScoreSpace::new(specs, params, ds)?;
    average_score_perturbations(cfg, k, |stream| {
        let z1 = stream.gaussian_vector(k)?;
        let z2 = stream.gaussian_vector(k)?;
        let first = axpy(cfg.sigma, &z1, &space.base);
        let second = axpy(sigma2, &z2, &first);
        let diff = (space.metric_at(metric, &second)? - space.metric_at(metric, &first)?) / sigma2;
        Ok(z2.iter().map(|zi| diff * zi).collect())
    })
}

/// Linear-interpolation estimate over an arbitrary parameter space.
///
/// `profile_fn` maps parameters to the `K` surrogate values and
/// `metric_fn` to the metric; both are evaluated at `θ + σZ₁ʲ` and
/// `θ + σZ₂ʲ` for every perturbation `j`.
pub fn interp_estimate_with<P, M>(
    profile_fn: P,
    metric_fn: M,
    theta: &[f64],
    cfg: &PerturbationConfig,
) -> Result<GradientEstimate>
where
    P: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    M: Fn(&[f64]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    if cfg.sigma2.is_some() {
        return Err(Error::invalid("sigma2 is only used by the two-step estimator"));
    }
    let p = theta.len();
    if p == 0 {
        return Err(Error::invalid("interpolation estimate needs at least one parameter"));
    }
    if let Some(mask) = &cfg.coordinate_mask {
        if mask.len() != p {
            return Err(Error::invalid(format!("coordinate mask has {} entries for {p} parameters", mask.len())));
        }
    }
    let perturbed = |z: &[f64]| -> Vec<f64> {
        theta
            .iter()
            .zip(z)
            .enumerate()
            .map(|(i, (t, zi))| {
                let on = cfg.coordinate_mask.as_ref().is_none_or(|m| m[i]);
                if on {
                    t + cfg.sigma * zi
                } else {
                    *t
                }
            })
            .collect()
    };

    let rows: Vec<(Vec<f64>, f64)> = (0..cfg.m)
        .into_par_iter()
        .map(|j| {
            let mut stream = cfg.stream.substream(j as u64);
            let z1 = stream.gaussian_vector(p)?;
            let z2 = stream.gaussian_vector(p)?;
            let (a, b) = (perturbed(&z1), perturbed(&z2));
            let (la, lb) = (profile_fn(&a)?, profile_fn(&b)?);
            let h: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x - y).collect();
            Ok((h, metric_fn(&a)? - metric_fn(&b)?))
        })
        .collect::<Result<_>>()?;

    let k = rows[0].0.len();
    let mut diagnostics = EstimateDiagnostics {
        perturbations_used: cfg.m,
        ..Default::default()
    };
    let mut data = Vec::with_capacity(cfg.m * k);
    let mut rhs = Vec::with_capacity(cfg.m);
    for (h, mdiff) in rows {
        if h.len() != k {
            return Err(Error::invalid("profile function returned profiles of varying length"));
        }
        data.extend(h);
        rhs.push(mdiff);
    }
    let hm = DenseMatrix::new(cfg.m, k, data)?;
    for c in 0..k {
        if hm.column(c).iter().all(|v| *v == 0.0) {
            let msg = format!("surrogate {c} did not respond to any perturbation; ridge fallback applies");
            log::warn!("{msg}");
            diagnostics.warnings.push(msg);
        }
    }
    if cfg.m < k {
        diagnostics
            .warnings
            .push(format!("underdetermined system: {} perturbations for {k} surrogates", cfg.m));
    }
    let sol = least_squares_solve(&hm, &rhs, 0.0)?;
    if sol.floored(0.0) {
        let msg = format!("ill-conditioned interpolation system (cond = {:.3e}); ridge {:.3e} applied", sol.condition_number, sol.ridge_used);
        log::debug!("{msg}");
        diagnostics.warnings.push(msg);
    }
    diagnostics.condition_number = Some(sol.condition_number);
    diagnostics.residual_norm = Some(sol.residual_norm);
    let mut g = sol.x;
    if let Some(l) = cfg.truncation_l {
        let t = truncate_gradient(&g, l);
        diagnostics.truncated = t != g;
        g = t;
    }
    Ok(GradientEstimate { g, diagnostics })
}

fn sample_minibatch(ds: &Dataset, size: usize, stream: &mut RandomStream) -> Result<Dataset> {
    if size >= ds.len() {
        return Ok(ds.clone());
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    // partial Fisher-Yates
    for i in 0..size {
        let j = i + stream.index(ds.len() - i);
        idx.swap(i, j);
    }
    idx.truncate(size);
    idx.sort_unstable();
    ds.subset(&idx)
}

/// Linear-interpolation estimate for a linear model. Surrogates are
/// evaluated on `surrogate_ds` and the metric on `metric_ds` (which may be
/// the same dataset). Perturbations cover every weight and the bias.
pub fn interp_estimate(
    metric: &dyn Metric,
    specs: &[SurrogateSpec],
    params: &ModelParams,
    surrogate_ds: &Dataset,
    metric_ds: &Dataset,
    cfg: &PerturbationConfig,
) -> Result<GradientEstimate> {
    let (sur, met) = match cfg.minibatch {
        Some(b) => {
            let mut stream = cfg.stream.substream(u64::MAX);
            let sur = sample_minibatch(surrogate_ds, b, &mut stream)?;
            let met = if std::ptr::eq(surrogate_ds, metric_ds) {
                sur.clone()
            } else {
                sample_minibatch(metric_ds, b, &mut stream)?
            };
            (std::borrow::Cow::Owned(sur), std::borrow::Cow::Owned(met))
        }
        None => (std::borrow::Cow::Borrowed(surrogate_ds), std::borrow::Cow::Borrowed(metric_ds)),
    };
    let prof = Profiler::new(specs, &sur)?;
    let met_ds: &Dataset = &met;
    interp_estimate_with(
        |theta| Ok(prof.profile_of(&ModelParams::from_flat(theta)?)?.0),
        |theta| {
            let s = score(&ModelParams::from_flat(theta)?, met_ds.features())?;
            metric.evaluate(&s, met_ds)
        },
        &params.to_flat(),
        cfg,
    )
}
