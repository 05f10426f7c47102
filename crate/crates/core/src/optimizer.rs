//! Projected gradient descent in surrogate space.
//!
//! Each outer iteration estimates `ĝ ≈ ∇ψ(uᵗ)`, takes the step
//! `ũ = uᵗ − η·ĝ` and maps `ũ` back to a realizable profile by solving the
//! over-constrained projection `min_θ ‖(ℓ(θ) − ũ)₊‖²` with Adagrad. Only the
//! violated components are penalized, so the subproblem stays convex for
//! convex surrogates, and its solutions are componentwise no larger than the
//! exact projection onto the epigraph `U = {u : u ≥ ℓ(θ) for some θ}`.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gradest::{fd_estimate, interp_estimate, two_step_fd_estimate, EstimatorKind, GradientEstimate, PerturbationConfig};
use crate::metrics::Metric;
use crate::model::{score, ModelParams};
use crate::numerics::{norm, Adagrad};
use crate::surrogates::{Profiler, SurrogateMap, SurrogateSpec};

pub const DEFAULT_ITERATIONS: usize = 250;

#[derive(Clone, Debug, PartialEq)]
pub enum Initialization {
    Zero,
    Params(ModelParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    Last,
    BestValMetric,
}

#[derive(Clone, Debug)]
pub struct PgdConfig {
    pub iterations: usize,
    pub eta: f64,
    /// Inner solver for the projection step.
    pub projection: Adagrad,
    pub estimator: EstimatorKind,
    pub perturbation: PerturbationConfig,
    pub init: Initialization,
    /// `None` picks `BestValMetric` when a validation set is supplied and
    /// `Last` otherwise.
    pub model_selection: Option<ModelSelection>,
}

impl PgdConfig {
    pub fn new(eta: f64, estimator: EstimatorKind, perturbation: PerturbationConfig) -> Self {
        PgdConfig {
            iterations: DEFAULT_ITERATIONS,
            eta,
            projection: Adagrad::default(),
            estimator,
            perturbation,
            init: Initialization::Zero,
            model_selection: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("at least one outer iteration is required"));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid(format!("step size eta {} must be positive", self.eta)));
        }
        Adagrad::new(self.projection.step, self.projection.iters)?;
        self.perturbation.validate()
    }
}

/// Result of the over-constrained projection.
#[derive(Clone, Debug)]
pub struct Projection {
    pub theta: Vec<f64>,
    /// `ℓ(theta)`, evaluated afresh.
    pub profile: Vec<f64>,
    /// `‖(ℓ(theta) − ũ)₊‖²`.
    pub objective: f64,
    pub initial_objective: f64,
    /// Best objective after each inner iteration.
    pub best_so_far: Vec<f64>,
}

fn clipped_sq(profile: &[f64], u_tilde: &[f64]) -> f64 {
    profile
        .iter()
        .zip(u_tilde)
        .map(|(l, u)| (l - u).max(0.0).powi(2))
        .sum()
}

/// Approximately solves `min_θ ‖(ℓ(θ) − ũ)₊‖²` from `warm_start` with
/// Adagrad, returning the best iterate seen.
pub fn project_inexact<S: SurrogateMap + ?Sized>(
    map: &S,
    u_tilde: &[f64],
    warm_start: &[f64],
    solver: &Adagrad,
) -> Result<Projection> {
    if u_tilde.len() != map.num_surrogates() {
        return Err(Error::invalid(format!(
            "target has {} entries for {} surrogates",
            u_tilde.len(),
            map.num_surrogates()
        )));
    }
    if let Some(v) = u_tilde.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("projection target entry {v}")));
    }
    if warm_start.len() != map.num_params() {
        return Err(Error::invalid("warm start has the wrong number of parameters"));
    }

    let mut failure = None;
    let run = solver.minimize_tracked(
        |theta| match map.profile_and_jacobian(theta) {
            Ok((values, jac)) => {
                let mut grad = vec![0.0; theta.len()];
                let mut obj = 0.0;
                for ((l, u), row) in values.iter().zip(u_tilde).zip(&jac) {
                    let excess = (l - u).max(0.0);
                    if excess > 0.0 {
                        obj += excess * excess;
                        for (g, d) in grad.iter_mut().zip(row) {
                            *g += 2.0 * excess * d;
                        }
                    }
                }
                (obj, grad)
            }
            Err(e) => {
                failure.get_or_insert(e);
                (f64::NAN, vec![0.0; theta.len()])
            }
        },
        warm_start,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let run = run?;
    let profile = map.profile(&run.best)?;
    Ok(Projection {
        objective: clipped_sq(&profile, u_tilde),
        theta: run.best,
        profile,
        initial_objective: run.initial_value,
        best_so_far: run.best_so_far,
    })
}

/// Exact Euclidean projection of `ũ` onto `U`, given a solution of the
/// over-constrained problem: the componentwise maximum.
pub fn complete_exact_projection(u_proj: &[f64], u_tilde: &[f64]) -> Result<Vec<f64>> {
    if u_proj.len() != u_tilde.len() {
        return Err(Error::invalid("profile lengths differ"));
    }
    Ok(u_proj.iter().zip(u_tilde).map(|(a, b)| a.max(*b)).collect())
}

/// `⟨ĝ, ℓ(θ)⟩ + D(θ, θᵗ)`, the projection objective rewritten as a linear
/// combination of surrogates plus a proximal term. It differs from
/// `(1/η)‖(ℓ(θ) − ũ)₊‖²` (with `ũ = ℓ(θᵗ) − ηĝ`) by a constant in `θ`.
pub fn proximal_form_objective<S: SurrogateMap + ?Sized>(
    map: &S,
    theta: &[f64],
    prev: &[f64],
    g_hat: &[f64],
    eta: f64,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::invalid("eta must be positive"));
    }
    let l = map.profile(theta)?;
    let lt = map.profile(prev)?;
    let c = 1.0 / (2.0 * eta);
    let mut lin = 0.0;
    let (mut dist, mut up, mut down) = (0.0, 0.0, 0.0);
    for k in 0..l.len() {
        lin += g_hat[k] * l[k];
        let d = l[k] - lt[k];
        dist += d * d;
        up += (d + eta * g_hat[k]).max(0.0).powi(2);
        down += (-d - eta * g_hat[k]).max(0.0).powi(2);
    }
    Ok(lin + c * (dist + up - down))
}

/// One outer iteration.
#[derive(Clone, Debug, Serialize)]
pub struct PgdRecord {
    pub t: usize,
    /// Profile `uᵗ` at the start of the iteration.
    pub u: Vec<f64>,
    /// Gradient step target `ũᵗ⁺¹`.
    pub u_tilde: Vec<f64>,
    /// Profile `uᵗ⁺¹` after projection.
    pub u_next: Vec<f64>,
    pub g_hat: GradientEstimate,
    pub train_metric: f64,
    pub val_metric: Option<f64>,
    pub proj_objective: f64,
    /// Flat parameters `θᵗ⁺¹`.
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PgdTrace {
    pub records: Vec<PgdRecord>,
}

impl PgdTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct PgdResult {
    pub params: ModelParams,
    pub trace: PgdTrace,
    pub initial_profile: Vec<f64>,
    /// Iteration whose parameters were returned (0 = initialization).
    pub selected_iteration: usize,
}

/// Projected gradient descent over surrogate profiles.
///
/// Surrogates are always evaluated on `train`. The metric is queried on
/// `val` when given (interpolation estimator only) and on `train`
/// otherwise.
pub fn surrogate_pgd(
    metric: &dyn Metric,
    specs: &[SurrogateSpec],
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &PgdConfig,
) -> Result<PgdResult> {
    cfg.validate()?;
    if val.is_some() && cfg.estimator != EstimatorKind::Interpolation {
        return Err(Error::invalid(format!(
            "the {} estimator needs metric and surrogates on the same sample; use interp with a validation set",
            cfg.estimator
        )));
    }
    let selection = match (cfg.model_selection, val) {
        (Some(ModelSelection::BestValMetric), None) => {
            return Err(Error::invalid("best_val_metric model selection needs a validation set"))
        }
        (Some(s), _) => s,
        (None, Some(_)) => ModelSelection::BestValMetric,
        (None, None) => ModelSelection::Last,
    };

    let prof = Profiler::new(specs, train)?;
    let mut params = match &cfg.init {
        Initialization::Zero => ModelParams::zeros(train.dim()),
        Initialization::Params(p) => {
            if p.dim() != train.dim() {
                return Err(Error::invalid("initial model dimension does not match the data"));
            }
            p.clone()
        }
    };
    let mut u = prof.profile_of(&params)?.0;
    let initial_profile = u.clone();
    let metric_ds = val.unwrap_or(train);

    let eval_val = |p: &ModelParams| -> Result<Option<f64>> {
        val.map(|v| metric.evaluate(&score(p, v.features())?, v)).transpose()
    };
    let mut best = (eval_val(&params)?.unwrap_or(f64::INFINITY), 0usize, params.clone());

    let mut trace = PgdTrace::default();
    for t in 1..=cfg.iterations {
        let est_cfg = cfg.perturbation.with_stream(cfg.perturbation.stream.substream(t as u64));
        let g_hat = match cfg.estimator {
            EstimatorKind::FiniteDifference => fd_estimate(metric, specs, &params, train, &est_cfg),
            EstimatorKind::TwoStep => two_step_fd_estimate(metric, specs, &params, train, &est_cfg),
            EstimatorKind::Interpolation => interp_estimate(metric, specs, &params, train, metric_ds, &est_cfg),
        }
        .map_err(|e| e.at_iteration(t))?;

        let u_tilde: Vec<f64> = u.iter().zip(&g_hat.g).map(|(ui, gi)| ui - cfg.eta * gi).collect();
        let proj = project_inexact(&prof, &u_tilde, &params.to_flat(), &cfg.projection).map_err(|e| e.at_iteration(t))?;
        if proj.profile.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("surrogate profile {:?}", proj.profile)).at_iteration(t));
        }
        let next = ModelParams::from_flat(&proj.theta).map_err(|e| e.at_iteration(t))?;
        let train_metric = metric.evaluate(&score(&next, train.features())?, train)?;
        let val_metric = eval_val(&next)?;

        if let Some(v) = val_metric {
            if v < best.0 {
                best = (v, t, next.clone());
            }
        }
        log::debug!("iteration {t}: u = {:?}, train metric {train_metric:.4}", proj.profile);
        trace.records.push(PgdRecord {
            t,
            u: std::mem::replace(&mut u, proj.profile.clone()),
            u_tilde,
            u_next: proj.profile,
            g_hat,
            train_metric,
            val_metric,
            proj_objective: proj.objective,
            theta: proj.theta,
        });
        params = next;
    }

    let (params, selected_iteration) = match selection {
        ModelSelection::Last => (params, cfg.iterations),
        ModelSelection::BestValMetric => (best.2, best.1),
    };
    Ok(PgdResult {
        params,
        trace,
        initial_profile,
        selected_iteration,
    })
}

/// Per-iteration gradient-mapping norm `‖uᵗ − max(ũᵗ⁺¹, uᵗ⁺¹)‖ / η`.
pub fn stationarity_diagnostic(trace: &PgdTrace, eta: f64) -> Result<Vec<f64>> {
    if trace.is_empty() {
        return Err(Error::invalid("empty trace"));
    }
    trace
        .records
        .iter()
        .map(|r| {
            let plus = complete_exact_projection(&r.u_next, &r.u_tilde)?;
            let diff: Vec<f64> = r.u.iter().zip(&plus).map(|(a, b)| a - b).collect();
            Ok(norm(&diff) / eta)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar-parameter surrogates for hand-checkable projections.
    struct Quadratics(Vec<f64>);

    impl SurrogateMap for Quadratics {
        fn num_params(&self) -> usize {
            1
        }
        fn num_surrogates(&self) -> usize {
            self.0.len()
        }
        fn profile(&self, theta: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.iter().map(|c| (theta[0] - c).powi(2)).collect())
        }
        fn profile_and_jacobian(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
            Ok((self.profile(theta)?, self.0.iter().map(|c| vec![2.0 * (theta[0] - c)]).collect()))
        }
    }

    #[test]
    fn feasible_target_leaves_warm_start() {
        let q = Quadratics(vec![1.0, -1.0]);
        let proj = project_inexact(&q, &[10.0, 10.0], &[0.5], &Adagrad::default()).unwrap();
        assert_eq!(proj.theta, vec![0.5]);
        assert_eq!(proj.objective, 0.0);
    }

    #[test]
    fn scalar_square_projection() {
        let q = Quadratics(vec![0.0]);
        let proj = project_inexact(&q, &[4.0], &[3.0], &Adagrad::default()).unwrap();
        let t = proj.theta[0];
        assert!((t * t - 4.0).max(0.0).powi(2) <= 1e-4, "theta {t}");
    }

    #[test]
    fn exact_completion_examples() {
        assert_eq!(complete_exact_projection(&[1.0, 2.0], &[0.5, 3.0]).unwrap(), vec![1.0, 3.0]);
        assert_eq!(complete_exact_projection(&[1.0, 2.0], &[0.5, 1.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(complete_exact_projection(&[1.0, 2.0], &[1.5, 3.0]).unwrap(), vec![1.5, 3.0]);
        assert!(complete_exact_projection(&[1.0], &[1.0, 2.0]).is_err());
    }

    struct Identity;

    impl SurrogateMap for Identity {
        fn num_params(&self) -> usize {
            1
        }
        fn num_surrogates(&self) -> usize {
            1
        }
        fn profile(&self, theta: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![theta[0]])
        }
        fn profile_and_jacobian(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
            Ok((vec![theta[0]], vec![vec![1.0]]))
        }
    }

    #[test]
    fn proximal_form_scalar_value() {
        let v = proximal_form_objective(&Identity, &[0.5], &[0.0], &[1.0], 1.0).unwrap();
        assert!((v - 1.75).abs() < 1e-15, "{v}");
    }

    #[test]
    fn proximal_form_at_previous_iterate() {
        let q = Quadratics(vec![1.0, -0.5]);
        let (theta, g, eta) = ([0.3], [0.7, -0.4], 0.8);
        let lt = q.profile(&theta).unwrap();
        let want: f64 = g.iter().zip(&lt).map(|(a, b)| a * b).sum::<f64>()
            + g.iter().map(|gi| (eta * gi).max(0.0).powi(2)).sum::<f64>() / (2.0 * eta)
            - g.iter().map(|gi| (-eta * gi).max(0.0).powi(2)).sum::<f64>() / (2.0 * eta);
        let got = proximal_form_objective(&q, &theta, &theta, &g, eta).unwrap();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn stationarity_cases() {
        let rec = |u: Vec<f64>, u_tilde: Vec<f64>, u_next: Vec<f64>| PgdRecord {
            t: 1,
            u,
            u_tilde,
            u_next,
            g_hat: GradientEstimate {
                g: vec![],
                diagnostics: Default::default(),
            },
            train_metric: 0.0,
            val_metric: None,
            proj_objective: 0.0,
            theta: vec![],
        };
        // zero gradient: ũ = u, feasible
        let zero = PgdTrace {
            records: vec![rec(vec![1.0, 1.0], vec![1.0, 1.0], vec![0.9, 1.0])],
        };
        assert_eq!(stationarity_diagnostic(&zero, 0.5).unwrap(), vec![0.0]);
        // absorbed step: u_next ≤ ũ ≤ u, diagnostic = ‖ĝ‖ with ĝ = (u − ũ)/η
        let eta = 0.5;
        let absorbed = PgdTrace {
            records: vec![rec(vec![1.0, 1.0], vec![0.8, 0.7], vec![0.6, 0.7])],
        };
        let g_norm = (0.4f64.powi(2) + 0.6f64.powi(2)).sqrt();
        assert!((stationarity_diagnostic(&absorbed, eta).unwrap()[0] - g_norm).abs() < 1e-12);
        assert!(stationarity_diagnostic(&PgdTrace::default(), 1.0).is_err());
    }
}
