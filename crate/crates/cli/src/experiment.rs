//! Runs configured experiments seed by seed and assembles the report.

use std::collections::HashMap;

use rayon::prelude::*;
use surrogate_pgd::baselines::{post_shift, train_logistic_regression};
use surrogate_pgd::data::{generate_simulated, inject_group_noise, load_csv, split, CsvOptions, Dataset};
use surrogate_pgd::gradest::{interp_estimate_with, EstimatorKind, PerturbationConfig};
use surrogate_pgd::metrics::{Metric, MetricSpec};
use surrogate_pgd::model::{score, ModelParams};
use surrogate_pgd::numerics::RandomStream;
use surrogate_pgd::optimizer::{surrogate_pgd, Initialization, PgdConfig, PgdResult};
use surrogate_pgd::{Error, Result};

use crate::config::{DataSource, ExperimentConfig, ExperimentKind, InitKind, StudyConfig};
use crate::report::{Cell, Report, ReportRow, Trace};

const LOGREG: &str = "logreg";
const POST_SHIFT: &str = "post_shift";
const PROPOSED: &str = "proposed";

/// Datasets shared by every seed.
enum Source {
    Simulated { n: usize, positive_frac: f64 },
    Csv(Dataset),
    /// Proxy labels for training and true labels for evaluation, row-aligned.
    Proxy { proxy: Dataset, truth: Dataset },
}

struct Splits {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

#[derive(Default)]
struct SeedOutcome {
    cells: HashMap<String, Cell>,
    traces: Vec<Trace>,
    models: Vec<(String, ModelParams)>,
    notes: Vec<String>,
}

fn load_source(cfg: &ExperimentConfig) -> Result<Source> {
    match &cfg.data {
        DataSource::Simulated { n, positive_frac } => Ok(Source::Simulated {
            n: *n,
            positive_frac: *positive_frac,
        }),
        DataSource::Csv { path, options } => match &cfg.true_label_column {
            None => Ok(Source::Csv(load_csv(path, options)?)),
            Some(truth_col) => {
                let mut proxy_opts = options.clone();
                proxy_opts.ignore_columns.push(truth_col.clone());
                let mut truth_opts: CsvOptions = options.clone();
                truth_opts.ignore_columns.push(options.label_column.clone());
                truth_opts.label_column = truth_col.clone();
                Ok(Source::Proxy {
                    proxy: load_csv(path, &proxy_opts)?,
                    truth: load_csv(path, &truth_opts)?,
                })
            }
        },
    }
}

fn seed_splits(cfg: &ExperimentConfig, source: &Source, seed: u64) -> Result<Splits> {
    let spec = cfg.split.spec(seed);
    let (train, val, test) = match source {
        Source::Simulated { n, positive_frac } => split(&generate_simulated(*n, *positive_frac, seed)?, &spec)?,
        Source::Csv(ds) => split(ds, &spec)?,
        Source::Proxy { proxy, truth } => {
            let (tr, va, te) = spec.partition(proxy.len())?;
            (proxy.subset(&tr)?, truth.subset(&va)?, truth.subset(&te)?)
        }
    };
    Ok(Splits { train, val, test })
}

/// Training sets to run, labelled by variant (one per noise level).
fn variants(cfg: &ExperimentConfig, train: &Dataset, seed: u64) -> Vec<(String, Result<Dataset>)> {
    match &cfg.noise {
        None => vec![(String::new(), Ok(train.clone()))],
        Some(n) => n
            .fractions
            .iter()
            .map(|&f| (format!("@noise={f}"), inject_group_noise(train, n.group, f, n.flip_prob, seed)))
            .collect(),
    }
}

fn variant_labels(cfg: &ExperimentConfig) -> Vec<String> {
    match &cfg.noise {
        None => vec![String::new()],
        Some(n) => n.fractions.iter().map(|f| format!("@noise={f}")).collect(),
    }
}

fn method_rows(cfg: &ExperimentConfig) -> Vec<String> {
    let mut methods = Vec::new();
    for (on, name) in [
        (cfg.baselines.logreg, LOGREG),
        (cfg.baselines.post_shift, POST_SHIFT),
        (cfg.baselines.proposed, PROPOSED),
    ] {
        if on {
            methods.push(name);
        }
    }
    variant_labels(cfg)
        .iter()
        .flat_map(|v| methods.iter().map(move |m| format!("{m}{v}")))
        .collect()
}

fn test_value(metric: &MetricSpec, model: &ModelParams, test: &Dataset) -> Result<f64> {
    let loss = metric.evaluate(&score(model, test.features())?, test)?;
    Ok(metric.display_value(loss))
}

fn pgd_config(cfg: &ExperimentConfig, eta: f64, sigma: f64, seed: u64, init: Option<&ModelParams>) -> PgdConfig {
    let p = &cfg.pgd;
    let mut pert = PerturbationConfig::new(p.perturbations, sigma, seed);
    pert.sigma2 = p.sigma2;
    pert.minibatch = p.minibatch;
    pert.truncation_l = p.truncation_l;
    let mut pc = PgdConfig::new(eta, p.estimator, pert);
    pc.iterations = p.iterations;
    pc.projection = p.projection;
    pc.model_selection = p.model_selection;
    if let Some(m) = init {
        pc.init = Initialization::Params(m.clone());
    }
    pc
}

struct ProposedRun {
    result: PgdResult,
    eta: f64,
    sigma: f64,
}

/// Runs surrogate PGD, grid-searching `eta × sigma` on the validation split
/// when tuning is enabled. The interpolation estimator queries the metric on
/// the validation split; the score-space estimators stay on the training
/// split.
fn run_proposed(cfg: &ExperimentConfig, train: &Dataset, val: &Dataset, seed: u64, init: Option<&ModelParams>) -> Result<ProposedRun> {
    let metric_val = (cfg.pgd.estimator == EstimatorKind::Interpolation).then_some(val);
    let grid: Vec<(f64, f64)> = if cfg.pgd.tune {
        cfg.pgd
            .eta_grid
            .iter()
            .flat_map(|&e| cfg.pgd.sigma_grid.iter().map(move |&s| (e, s)))
            .collect()
    } else {
        vec![(cfg.pgd.eta, cfg.pgd.sigma)]
    };
    let mut best: Option<(f64, ProposedRun)> = None;
    for (eta, sigma) in grid {
        let pc = pgd_config(cfg, eta, sigma, seed, init);
        let result = match surrogate_pgd(&cfg.metric, &cfg.surrogates, train, metric_val, &pc) {
            Ok(r) => r,
            Err(e) if cfg.pgd.tune => {
                log::warn!("seed {seed}: eta {eta}, sigma {sigma} failed: {e}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let run = ProposedRun { result, eta, sigma };
        if !cfg.pgd.tune {
            return Ok(run);
        }
        let v = cfg.metric.evaluate(&score(&run.result.params, val.features())?, val)?;
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, run));
        }
    }
    best.map(|(_, r)| r)
        .ok_or_else(|| Error::EstimatorFailure("every tuning configuration failed".into()))
}

fn trace_lines(result: &PgdResult) -> Vec<String> {
    result
        .trace
        .records
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace records serialize"))
        .collect()
}

fn run_seed(cfg: &ExperimentConfig, source: &Source, seed: u64) -> SeedOutcome {
    let mut out = SeedOutcome::default();
    let splits = match seed_splits(cfg, source, seed) {
        Ok(s) => s,
        Err(e) => {
            for m in method_rows(cfg) {
                out.cells.insert(m, Cell::Failed(format!("data: {e}")));
            }
            return out;
        }
    };
    let b = &cfg.baselines;
    let metric = &cfg.metric;
    for (variant, train) in variants(cfg, &splits.train, seed) {
        let fail_all = |out: &mut SeedOutcome, why: String| {
            for m in [LOGREG, POST_SHIFT, PROPOSED] {
                out.cells.insert(format!("{m}{variant}"), Cell::Failed(why.clone()));
            }
        };
        let train = match train {
            Ok(t) => t,
            Err(e) => {
                fail_all(&mut out, format!("noise: {e}"));
                continue;
            }
        };
        let need_lr = b.logreg || b.post_shift || cfg.pgd.init == InitKind::Logreg;
        let lr: Option<std::result::Result<ModelParams, String>> = need_lr.then(|| {
            train_logistic_regression(&train, b.logreg_step, b.logreg_iters).map_err(|e| format!("logreg: {e}"))
        });
        let lr = lr.as_ref().map(|r| r.as_ref().map_err(Clone::clone));
        let cell = |r: std::result::Result<f64, String>| match r {
            Ok(v) => Cell::Value(v),
            Err(e) => Cell::Failed(e),
        };

        if let (true, Some(lr)) = (b.logreg, &lr) {
            let r = lr.clone().and_then(|m| test_value(metric, m, &splits.test).map_err(|e| e.to_string()));
            out.cells.insert(format!("{LOGREG}{variant}"), cell(r));
        }
        if let (true, Some(lr)) = (b.post_shift, &lr) {
            let r = lr.clone().and_then(|m| {
                let shifted = post_shift(m, &splits.val, metric).map(|s| s.apply(m));
                shifted.and_then(|s| test_value(metric, &s, &splits.test)).map_err(|e| e.to_string())
            });
            out.cells.insert(format!("{POST_SHIFT}{variant}"), cell(r));
        }
        if b.proposed {
            let init = match (cfg.pgd.init, &lr) {
                (InitKind::Logreg, Some(r)) => r.clone().map(Some),
                _ => Ok(None),
            };
            let name = format!("{PROPOSED}{variant}");
            let r = init.and_then(|init| {
                let run = run_proposed(cfg, &train, &splits.val, seed, init).map_err(|e| e.to_string())?;
                let tag = format!("seed{seed}{}", variant.replace("@noise=", "_noise"));
                out.notes.push(format!(
                    "{name} seed {seed}: eta {}, sigma {}, selected iteration {}",
                    run.eta, run.sigma, run.result.selected_iteration
                ));
                out.traces.push(Trace {
                    name: tag.clone(),
                    lines: trace_lines(&run.result),
                });
                out.models.push((tag, run.result.params.clone()));
                test_value(metric, &run.result.params, &splits.test).map_err(|e| e.to_string())
            });
            out.cells.insert(name, cell(r));
        }
    }
    out
}

/// Squared gradient error of the interpolation estimator on
/// `f(z) = (∏ z_k)^{1/K}`, averaged over `draws` points
/// `z_k ~ 0.1 + U(0, 0.9)` and `trials` estimates per point.
pub fn grad_error_mse(k: usize, study: &StudyConfig, seed: u64) -> Result<f64> {
    let geo = |z: &[f64]| -> Result<f64> {
        if z.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidArgument("perturbed point left the positive orthant; lower the study sigma".into()));
        }
        Ok((z.iter().map(|v| v.ln()).sum::<f64>() / z.len() as f64).exp())
    };
    let base = RandomStream::new(seed, k as u64);
    let mut total = 0.0;
    for d in 0..study.draws {
        let draw = base.substream(d as u64);
        let mut zs = draw.substream(0);
        let z: Vec<f64> = (0..k).map(|_| 0.1 + 0.9 * zs.uniform()).collect();
        let f = geo(&z)?;
        let truth: Vec<f64> = z.iter().map(|zk| f / (k as f64 * zk)).collect();
        for t in 0..study.trials {
            let pc = PerturbationConfig::new(study.perturbations, study.sigma, seed).with_stream(draw.substream(1 + t as u64));
            let est = interp_estimate_with(|x| Ok(x.to_vec()), geo, &z, &pc)?;
            total += est.g.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    Ok(total / (study.draws * study.trials) as f64)
}

fn run_study(cfg: &ExperimentConfig) -> Report {
    let s = &cfg.study;
    let ks: Vec<usize> = (s.k_min..=s.k_max).collect();
    let rows = ks
        .iter()
        .map(|&k| ReportRow {
            method: format!("K={k}"),
            cells: cfg
                .seeds
                .par_iter()
                .map(|&seed| match grad_error_mse(k, s, seed) {
                    Ok(v) => Cell::Value(v),
                    Err(e) => Cell::Failed(e.to_string()),
                })
                .collect(),
        })
        .collect();
    Report {
        experiment: cfg.experiment.to_string(),
        value_label: "mean squared gradient error ‖ĝ − ∇f‖²".into(),
        notes: vec![format!(
            "interpolation estimator on f(z) = (prod z_k)^(1/K), z_k ~ 0.1 + U(0, 0.9); {} perturbations, sigma {}, {} draws x {} trials",
            s.perturbations, s.sigma, s.draws, s.trials
        )],
        seeds: cfg.seeds.clone(),
        rows,
        traces: vec![],
        models: vec![],
    }
}

fn protocol_notes(cfg: &ExperimentConfig) -> Vec<String> {
    let p = &cfg.pgd;
    let data = match &cfg.data {
        DataSource::Simulated { n, positive_frac } => format!("simulated data, n {n}, positive fraction {positive_frac}"),
        DataSource::Csv { path, options } => format!(
            "csv data {}, label column {}{}",
            path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned()),
            options.label_column,
            cfg.true_label_column.as_ref().map_or(String::new(), |t| format!(", true labels in {t}"))
        ),
    };
    let surrogates: Vec<String> = cfg.surrogates.iter().map(ToString::to_string).collect();
    let mut notes = vec![
        data,
        format!(
            "split train/val/test {:.4}/{:.4}/{:.4} per seed",
            cfg.split.train, cfg.split.val, cfg.split.test
        ),
        format!("metric {} on test; surrogates {}", cfg.metric, surrogates.join(" ")),
        format!(
            "logreg: adagrad step {} for {} iterations on train; post_shift: threshold tuned on val",
            cfg.baselines.logreg_step, cfg.baselines.logreg_iters
        ),
        format!(
            "proposed: estimator {}, metric queried on {}, T {}, m {}, projection adagrad {} x {}, init {}",
            p.estimator,
            if p.estimator == EstimatorKind::Interpolation { "val" } else { "train" },
            p.iterations,
            p.perturbations,
            p.projection.step,
            p.projection.iters,
            match p.init {
                InitKind::Zero => "zero",
                InitKind::Logreg => "logreg",
            }
        ),
    ];
    if p.tune {
        notes.push(format!("tuning eta over {:?} and sigma over {:?} by val metric", p.eta_grid, p.sigma_grid));
    } else {
        notes.push(format!("eta {}, sigma {}", p.eta, p.sigma));
    }
    if let Some(n) = &cfg.noise {
        notes.push(format!(
            "feature noise on training group {}: fractions {:?}, flip probability {}",
            n.group, n.fractions, n.flip_prob
        ));
    }
    notes
}

/// Runs every seed and merges the results in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Report {
    if cfg.experiment == ExperimentKind::GradErrorVsK {
        return run_study(cfg);
    }
    let value_label = format!("test {}", cfg.metric.display_name());
    let mut notes = protocol_notes(cfg);
    let outcomes: Vec<SeedOutcome> = match load_source(cfg) {
        Ok(source) => cfg.seeds.par_iter().map(|&s| run_seed(cfg, &source, s)).collect(),
        Err(e) => {
            notes.push(format!("data could not be loaded: {e}"));
            cfg.seeds
                .iter()
                .map(|_| SeedOutcome {
                    cells: method_rows(cfg)
                        .into_iter()
                        .map(|m| (m, Cell::Failed(format!("data: {e}"))))
                        .collect(),
                    ..Default::default()
                })
                .collect()
        }
    };
    let rows = method_rows(cfg)
        .into_iter()
        .map(|method| ReportRow {
            cells: outcomes
                .iter()
                .map(|o| o.cells.get(&method).cloned().unwrap_or_else(|| Cell::Failed("not run".into())))
                .collect(),
            method,
        })
        .collect();
    let mut traces = Vec::new();
    let mut models = Vec::new();
    for o in outcomes {
        notes.extend(o.notes);
        traces.extend(o.traces);
        models.extend(o.models);
    }
    Report {
        experiment: cfg.experiment.to_string(),
        value_label,
        notes,
        seeds: cfg.seeds.clone(),
        rows,
        traces,
        models,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::GmeanSim);
        cfg.data = DataSource::Simulated {
            n: 300,
            positive_frac: 0.2,
        };
        cfg.pgd.iterations = 3;
        cfg.pgd.perturbations = 20;
        cfg.seeds = vec![1, 2];
        cfg
    }

    #[test]
    fn tiny_run_fills_every_cell() {
        let r = run_experiment(&tiny());
        assert_eq!(r.rows.len(), 3);
        for row in &r.rows {
            for c in &row.cells {
                let v = c.value().unwrap_or_else(|| panic!("{}: {c:?}", row.method));
                assert!((0.0..=1.0).contains(&v));
            }
        }
        assert_eq!(r.traces.len(), 2);
        assert_eq!(r.traces[0].lines.len(), 3);
    }

    #[test]
    fn identical_configs_give_identical_reports() {
        let a = run_experiment(&tiny());
        let b = run_experiment(&tiny());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.traces, b.traces);
    }

    #[test]
    fn failing_seed_is_marked() {
        let mut cfg = tiny();
        cfg.data = DataSource::Simulated {
            n: 12,
            positive_frac: 0.1,
        };
        let r = run_experiment(&cfg);
        assert!(r.rows.iter().any(|row| row.cells.iter().any(|c| matches!(c, Cell::Failed(_)))));
    }

    #[test]
    fn study_error_is_small_and_finite() {
        let study = StudyConfig {
            k_min: 2,
            k_max: 3,
            perturbations: 20,
            draws: 3,
            trials: 3,
            sigma: 0.01,
        };
        let v = grad_error_mse(3, &study, 0).unwrap();
        assert!(v.is_finite() && v < 1e-3, "{v}");
    }
}
