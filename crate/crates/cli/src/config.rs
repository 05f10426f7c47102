//! Experiment configuration files.
//!
//! A config is a TOML document whose keys all live under section headers:
//!
//! ```toml
//! [experiment]
//! kind = "gmean_sim"
//! seeds = [0, 1, 2, 3, 4]
//!
//! [pgd]
//! eta = 1.0
//! ```
//!
//! Every experiment kind fills in its own defaults, so a config only needs
//! the keys it wants to change. Validation collects every problem it finds
//! and anchors each one to the offending line.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use surrogate_pgd::data::{CsvOptions, SplitSpec, DEFAULT_FLIP_PROB, DEFAULT_POSITIVE_FRAC, DEFAULT_SIMULATED_N};
use surrogate_pgd::gradest::{EstimatorKind, DEFAULT_PERTURBATIONS};
use surrogate_pgd::metrics::MetricSpec;
use surrogate_pgd::numerics::Adagrad;
use surrogate_pgd::optimizer::{ModelSelection, DEFAULT_ITERATIONS};
use surrogate_pgd::surrogates::{check_disjoint, Subset, SurrogateKind, SurrogateSpec};
use toml::{Spanned, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    GmeanSim,
    MacroFNoise,
    Prbep,
    ProxyLabels,
    GradErrorVsK,
    Custom,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::GmeanSim => "gmean_sim",
            ExperimentKind::MacroFNoise => "macro_f_noise",
            ExperimentKind::Prbep => "prbep",
            ExperimentKind::ProxyLabels => "proxy_labels",
            ExperimentKind::GradErrorVsK => "grad_error_vs_k",
            ExperimentKind::Custom => "custom",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "gmean_sim" => ExperimentKind::GmeanSim,
            "macro_f_noise" => ExperimentKind::MacroFNoise,
            "prbep" => ExperimentKind::Prbep,
            "proxy_labels" => ExperimentKind::ProxyLabels,
            "grad_error_vs_k" => ExperimentKind::GradErrorVsK,
            "custom" => ExperimentKind::Custom,
            _ => return Err(format!("unknown experiment kind `{s}`")),
        })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Simulated { n: usize, positive_frac: f64 },
    Csv { path: PathBuf, options: CsvOptions },
}

/// Group-dependent feature noise applied to the training split only.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseConfig {
    pub group: u8,
    pub fractions: Vec<f64>,
    pub flip_prob: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    Zero,
    Logreg,
}

/// Surrogate-PGD settings shared by every seed.
#[derive(Clone, Debug, PartialEq)]
pub struct PgdSettings {
    pub iterations: usize,
    pub eta: f64,
    pub projection: Adagrad,
    pub estimator: EstimatorKind,
    pub perturbations: usize,
    pub sigma: f64,
    pub sigma2: Option<f64>,
    pub minibatch: Option<usize>,
    pub truncation_l: Option<f64>,
    pub init: InitKind,
    pub model_selection: Option<ModelSelection>,
    /// Grid-search `eta × sigma` on the validation split.
    pub tune: bool,
    pub eta_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineToggles {
    pub logreg: bool,
    pub post_shift: bool,
    pub proposed: bool,
    pub logreg_step: f64,
    pub logreg_iters: usize,
}

/// Settings of the gradient-error-versus-K study.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub perturbations: usize,
    pub draws: usize,
    pub trials: usize,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub data: DataSource,
    /// Column holding the true labels for `proxy_labels`; the configured
    /// label column then holds the proxy labels used for training.
    pub true_label_column: Option<String>,
    pub split: SplitFractions,
    pub surrogates: Vec<SurrogateSpec>,
    pub metric: MetricSpec,
    pub pgd: PgdSettings,
    pub baselines: BaselineToggles,
    pub noise: Option<NoiseConfig>,
    pub study: StudyConfig,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train_frac: self.train,
            val_frac: self.val,
            test_frac: self.test,
            seed,
        }
    }
}

/// One validation problem, optionally tied to a line of the config file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every problem found in a config file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ExperimentConfig {
    /// Defaults for an experiment kind before any keys are applied.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let hinge_pn = vec![SurrogateSpec::hinge(Subset::Positives), SurrogateSpec::hinge(Subset::Negatives)];
        let standard = SplitFractions {
            train: 4.0 / 9.0,
            val: 2.0 / 9.0,
            test: 1.0 / 3.0,
        };
        let mut cfg = ExperimentConfig {
            experiment: kind,
            data: DataSource::Simulated {
                n: DEFAULT_SIMULATED_N,
                positive_frac: DEFAULT_POSITIVE_FRAC,
            },
            true_label_column: None,
            split: standard,
            surrogates: hinge_pn.clone(),
            metric: MetricSpec::GmeanLoss,
            pgd: PgdSettings {
                iterations: DEFAULT_ITERATIONS,
                eta: 1.0,
                projection: Adagrad::default(),
                estimator: EstimatorKind::Interpolation,
                perturbations: DEFAULT_PERTURBATIONS,
                sigma: 0.5,
                sigma2: None,
                minibatch: None,
                truncation_l: None,
                init: InitKind::Zero,
                model_selection: None,
                tune: false,
                eta_grid: vec![0.05, 0.1, 0.5, 1.0, 5.0],
                sigma_grid: vec![0.05, 0.1, 0.5],
            },
            baselines: BaselineToggles {
                logreg: true,
                post_shift: true,
                proposed: true,
                logreg_step: 1.0,
                logreg_iters: 1000,
            },
            noise: None,
            study: StudyConfig {
                k_min: 2,
                k_max: 10,
                perturbations: 100,
                draws: 100,
                trials: 100,
                sigma: 0.01,
            },
            seeds: vec![0, 1, 2, 3, 4],
            output: None,
        };
        match kind {
            ExperimentKind::GmeanSim | ExperimentKind::Custom => {}
            ExperimentKind::MacroFNoise => {
                cfg.surrogates = vec![
                    SurrogateSpec::hinge(Subset::GroupPositives(0)),
                    SurrogateSpec::hinge(Subset::GroupNegatives(0)),
                    SurrogateSpec::hinge(Subset::GroupPositives(1)),
                    SurrogateSpec::hinge(Subset::GroupNegatives(1)),
                ];
                cfg.metric = MetricSpec::MacroFLoss;
                cfg.pgd.eta = 0.5;
                cfg.pgd.sigma = 0.1;
                cfg.noise = Some(NoiseConfig {
                    group: 0,
                    fractions: vec![0.0, 0.2, 0.4, 0.6, 0.8],
                    flip_prob: DEFAULT_FLIP_PROB,
                });
            }
            ExperimentKind::Prbep => {
                cfg.surrogates = [0.25, 0.5, 0.75]
                    .iter()
                    .map(|&tau| SurrogateSpec {
                        kind: SurrogateKind::PrecisionAtRecall { tau },
                        subset: Subset::All,
                    })
                    .collect();
                cfg.metric = MetricSpec::PrbepLoss;
                cfg.split = SplitFractions {
                    train: 0.6,
                    val: 0.2,
                    test: 0.2,
                };
                cfg.baselines.post_shift = false;
                cfg.pgd.eta = 0.01;
                cfg.pgd.sigma = 1.5;
                cfg.pgd.eta_grid = vec![0.001, 0.005, 0.01];
                cfg.pgd.sigma_grid = vec![1.5];
            }
            ExperimentKind::ProxyLabels => {
                cfg.metric = MetricSpec::ErrorRate;
                cfg.pgd.eta = 0.1;
                cfg.pgd.sigma = 0.1;
                cfg.pgd.eta_grid = vec![0.01, 0.05, 0.1, 0.5, 1.0];
                cfg.pgd.sigma_grid = vec![0.01, 0.05, 0.1, 0.5, 1.0];
            }
            ExperimentKind::GradErrorVsK => {
                cfg.seeds = vec![0];
            }
        }
        cfg
    }

    /// The subset of keys that differ per seed is built at run time; this
    /// only checks cross-field consistency.
    fn check(&self, lines: &LineIndex, errors: &mut Vec<ConfigError>) {
        let anchor = |section: &str, key: &str| lines.get(section, key);
        if self.seeds.is_empty() {
            errors.push(ConfigError {
                line: anchor("experiment", "seeds"),
                message: "seed list is empty".into(),
            });
        }
        if self.experiment == ExperimentKind::GradErrorVsK {
            if self.study.k_min < 1 || self.study.k_min > self.study.k_max {
                errors.push(ConfigError {
                    line: anchor("study", "k_min").or(anchor("study", "k_max")),
                    message: format!("study K range {}..={} is empty", self.study.k_min, self.study.k_max),
                });
            }
            return;
        }

        if self.surrogates.is_empty() {
            errors.push(ConfigError {
                line: anchor("experiment", "surrogates"),
                message: "no surrogates configured".into(),
            });
        }
        if self.pgd.estimator != EstimatorKind::Interpolation {
            if let Err(e) = check_disjoint(&self.surrogates) {
                errors.push(ConfigError {
                    line: anchor("experiment", "surrogates").or(anchor("pgd", "estimator")),
                    message: format!("estimator {} needs disjoint surrogate subsets: {e}", self.pgd.estimator),
                });
            }
        }
        let two_step = self.pgd.estimator == EstimatorKind::TwoStep;
        if two_step && self.pgd.sigma2.is_none() && self.pgd.truncation_l.is_none() {
            errors.push(ConfigError {
                line: anchor("pgd", "estimator"),
                message: "the two_step estimator needs sigma2 or truncation_l".into(),
            });
        }
        if !two_step && self.pgd.sigma2.is_some() {
            errors.push(ConfigError {
                line: anchor("pgd", "sigma2"),
                message: "sigma2 is only used by the two_step estimator".into(),
            });
        }
        if self.pgd.model_selection == Some(ModelSelection::BestValMetric) && self.pgd.estimator != EstimatorKind::Interpolation {
            errors.push(ConfigError {
                line: anchor("pgd", "model_selection"),
                message: "best_val_metric selection needs the interp estimator".into(),
            });
        }
        let sum = self.split.train + self.split.val + self.split.test;
        if (sum - 1.0).abs() > 1e-6 || [self.split.train, self.split.val, self.split.test].iter().any(|f| *f <= 0.0) {
            errors.push(ConfigError {
                line: anchor("data", "split"),
                message: format!("split fractions must be positive and sum to 1 (sum {sum})"),
            });
        }

        let has_groups = match &self.data {
            DataSource::Simulated { .. } => false,
            DataSource::Csv { path, options } => {
                if !path.is_file() {
                    errors.push(ConfigError {
                        line: anchor("data", "path"),
                        message: format!("data file {} does not exist", path.display()),
                    });
                }
                options.group_column.is_some()
            }
        };
        let needs_groups = self.noise.is_some()
            || matches!(self.metric, MetricSpec::MacroFLoss)
            || self
                .surrogates
                .iter()
                .any(|s| matches!(s.subset, Subset::GroupPositives(_) | Subset::GroupNegatives(_)));
        if needs_groups && !has_groups {
            errors.push(ConfigError {
                line: anchor("data", "source").or(anchor("experiment", "kind")),
                message: "this experiment needs a CSV dataset with a group column".into(),
            });
        }
        if self.experiment == ExperimentKind::ProxyLabels {
            match (&self.data, &self.true_label_column) {
                (DataSource::Csv { .. }, Some(_)) => {}
                _ => errors.push(ConfigError {
                    line: anchor("data", "true_label_column").or(anchor("experiment", "kind")),
                    message: "proxy_labels needs a CSV dataset with true_label_column set".into(),
                }),
            }
        }
        if self.pgd.tune && (self.pgd.eta_grid.is_empty() || self.pgd.sigma_grid.is_empty()) {
            errors.push(ConfigError {
                line: anchor("pgd", "tune"),
                message: "tuning needs nonempty eta_grid and sigma_grid".into(),
            });
        }
        if !(self.baselines.logreg || self.baselines.post_shift || self.baselines.proposed) {
            errors.push(ConfigError {
                line: anchor("baselines", "proposed"),
                message: "every method is disabled".into(),
            });
        }
    }
}

/// Line numbers of every `section.key` in the source text.
#[derive(Default)]
struct LineIndex(HashMap<(String, String), usize>);

impl LineIndex {
    fn get(&self, section: &str, key: &str) -> Option<usize> {
        self.0.get(&(section.to_string(), key.to_string())).copied()
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

type RawConfig = BTreeMap<String, BTreeMap<String, Spanned<Value>>>;

const SECTIONS: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "seeds", "output", "metric", "surrogates"]),
    (
        "data",
        &[
            "source",
            "n",
            "positive_frac",
            "path",
            "label_column",
            "true_label_column",
            "group_column",
            "group_mapping",
            "binary_columns",
            "ignore_columns",
            "split",
        ],
    ),
    ("noise", &["group", "fractions", "flip_prob"]),
    (
        "pgd",
        &[
            "iterations",
            "eta",
            "proj_step",
            "proj_iters",
            "estimator",
            "perturbations",
            "sigma",
            "sigma2",
            "minibatch",
            "truncation_l",
            "init",
            "model_selection",
            "tune",
            "eta_grid",
            "sigma_grid",
        ],
    ),
    ("baselines", &["logreg", "post_shift", "proposed", "logreg_step", "logreg_iters"]),
    ("study", &["k_min", "k_max", "perturbations", "draws", "trials", "sigma"]),
];

/// Typed accessors over one spanned value; each records its own error.
struct Field<'a> {
    value: &'a Value,
    line: usize,
    name: String,
}

impl Field<'_> {
    fn fail(&self, errors: &mut Vec<ConfigError>, message: String) {
        errors.push(ConfigError {
            line: Some(self.line),
            message: format!("{}: {message}", self.name),
        });
    }

    fn string(&self, errors: &mut Vec<ConfigError>) -> Option<String> {
        match self.value {
            Value::String(s) => Some(s.clone()),
            other => {
                self.fail(errors, format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn real(&self, errors: &mut Vec<ConfigError>) -> Option<f64> {
        match self.value {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.fail(errors, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn positive(&self, errors: &mut Vec<ConfigError>) -> Option<f64> {
        let v = self.real(errors)?;
        if v > 0.0 && v.is_finite() {
            Some(v)
        } else {
            self.fail(errors, format!("must be positive, got {v}"));
            None
        }
    }

    fn unit(&self, errors: &mut Vec<ConfigError>) -> Option<f64> {
        let v = self.real(errors)?;
        if (0.0..=1.0).contains(&v) {
            Some(v)
        } else {
            self.fail(errors, format!("must lie in [0, 1], got {v}"));
            None
        }
    }

    fn count(&self, errors: &mut Vec<ConfigError>, min: usize) -> Option<usize> {
        match self.value {
            Value::Integer(i) if *i >= min as i64 => Some(*i as usize),
            Value::Integer(i) => {
                self.fail(errors, format!("must be at least {min}, got {i}"));
                None
            }
            other => {
                self.fail(errors, format!("expected an integer, found {}", other.type_str()));
                None
            }
        }
    }

    fn boolean(&self, errors: &mut Vec<ConfigError>) -> Option<bool> {
        match self.value {
            Value::Boolean(b) => Some(*b),
            other => {
                self.fail(errors, format!("expected true or false, found {}", other.type_str()));
                None
            }
        }
    }

    fn items(&self, errors: &mut Vec<ConfigError>) -> Option<Vec<Field<'_>>> {
        match self.value {
            Value::Array(a) => Some(
                a.iter()
                    .enumerate()
                    .map(|(i, v)| Field {
                        value: v,
                        line: self.line,
                        name: format!("{}[{i}]", self.name),
                    })
                    .collect(),
            ),
            other => {
                self.fail(errors, format!("expected an array, found {}", other.type_str()));
                None
            }
        }
    }

    fn list<T>(&self, errors: &mut Vec<ConfigError>, each: impl Fn(&Field<'_>, &mut Vec<ConfigError>) -> Option<T>) -> Option<Vec<T>> {
        let items = self.items(errors)?;
        let before = errors.len();
        let out: Vec<T> = items.iter().filter_map(|f| each(f, errors)).collect();
        (errors.len() == before).then_some(out)
    }

    fn parsed<T: FromStr>(&self, errors: &mut Vec<ConfigError>) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let s = self.string(errors)?;
        match s.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.fail(errors, e.to_string());
                None
            }
        }
    }
}

/// Parses and validates config text. Relative data and output paths are
/// resolved against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigErrors> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        ConfigErrors(vec![ConfigError {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        }])
    })?;

    let mut errors = Vec::new();
    let mut lines = LineIndex::default();
    for (section, keys) in &raw {
        let Some((_, known)) = SECTIONS.iter().find(|(s, _)| s == section) else {
            let line = keys.values().map(|v| line_of(text, v.span().start)).min();
            errors.push(ConfigError {
                line: line.map(|l| l.saturating_sub(1).max(1)),
                message: format!("unknown section [{section}]"),
            });
            continue;
        };
        for (key, value) in keys {
            let line = line_of(text, value.span().start);
            if known.contains(&key.as_str()) {
                lines.0.insert((section.clone(), key.clone()), line);
            } else {
                errors.push(ConfigError {
                    line: Some(line),
                    message: format!("unknown key `{key}` in [{section}]"),
                });
            }
        }
    }
    let field = |section: &str, key: &str| -> Option<Field<'_>> {
        raw.get(section)?.get(key).map(|v| Field {
            value: v.get_ref(),
            line: line_of(text, v.span().start),
            name: format!("{section}.{key}"),
        })
    };

    let kind = match field("experiment", "kind") {
        Some(f) => f.parsed::<ExperimentKind>(&mut errors),
        None => {
            errors.push(ConfigError {
                line: None,
                message: "missing required key `kind` in [experiment]".into(),
            });
            None
        }
    };
    let Some(kind) = kind else {
        return Err(ConfigErrors(errors));
    };
    let mut cfg = ExperimentConfig::defaults(kind);
    let resolve = |p: String| -> PathBuf {
        let p = PathBuf::from(p);
        if p.is_relative() {
            base_dir.join(p)
        } else {
            p
        }
    };

    // [experiment]
    if let Some(f) = field("experiment", "seeds") {
        let seeds = f.list(&mut errors, |x, e| x.count(e, 0).map(|v| v as u64));
        if let Some(s) = seeds {
            cfg.seeds = s;
        }
    }
    if let Some(f) = field("experiment", "output") {
        cfg.output = f.string(&mut errors).map(resolve);
    }
    if let Some(f) = field("experiment", "metric") {
        if let Some(m) = f.parsed(&mut errors) {
            cfg.metric = m;
        }
    }
    if let Some(f) = field("experiment", "surrogates") {
        if let Some(specs) = f.list(&mut errors, |x, e| x.parsed::<SurrogateSpec>(e)) {
            cfg.surrogates = specs;
        }
    }

    // [data]
    let source = field("data", "source").and_then(|f| {
        let s = f.string(&mut errors)?;
        match s.as_str() {
            "simulated" | "csv" => Some(s),
            _ => {
                f.fail(&mut errors, format!("unknown data source `{s}` (expected simulated or csv)"));
                None
            }
        }
    });
    let path = field("data", "path").and_then(|f| f.string(&mut errors));
    let is_csv = match source.as_deref() {
        Some("csv") => true,
        Some(_) => false,
        None => path.is_some(),
    };
    if is_csv {
        let mut options = CsvOptions {
            label_column: "label".into(),
            ..Default::default()
        };
        if let Some(f) = field("data", "label_column") {
            if let Some(s) = f.string(&mut errors) {
                options.label_column = s;
            }
        }
        if let Some(f) = field("data", "group_column") {
            options.group_column = f.string(&mut errors);
        }
        if let Some(f) = field("data", "group_mapping") {
            options.group_mapping = parse_group_mapping(&f, &mut errors);
        }
        if let Some(f) = field("data", "binary_columns") {
            options.binary_columns = f.list(&mut errors, |x, e| x.string(e)).unwrap_or_default();
        }
        if let Some(f) = field("data", "ignore_columns") {
            options.ignore_columns = f.list(&mut errors, |x, e| x.string(e)).unwrap_or_default();
        }
        match path {
            Some(p) => cfg.data = DataSource::Csv { path: resolve(p), options },
            None => errors.push(ConfigError {
                line: lines.get("data", "source"),
                message: "csv data source needs `path`".into(),
            }),
        }
        if let Some(f) = field("data", "true_label_column") {
            cfg.true_label_column = f.string(&mut errors);
        }
    } else {
        let (mut n, mut frac) = (DEFAULT_SIMULATED_N, DEFAULT_POSITIVE_FRAC);
        if let Some(f) = field("data", "n") {
            n = f.count(&mut errors, 10).unwrap_or(n);
        }
        if let Some(f) = field("data", "positive_frac") {
            match f.real(&mut errors) {
                Some(v) if v > 0.0 && v < 1.0 => frac = v,
                Some(v) => f.fail(&mut errors, format!("must lie in (0, 1), got {v}")),
                None => {}
            }
        }
        cfg.data = DataSource::Simulated { n, positive_frac: frac };
        for key in ["label_column", "true_label_column", "group_column", "group_mapping", "binary_columns", "ignore_columns"] {
            if let Some(line) = lines.get("data", key) {
                errors.push(ConfigError {
                    line: Some(line),
                    message: format!("data.{key} only applies to csv data"),
                });
            }
        }
    }
    if let Some(f) = field("data", "split") {
        if let Some(v) = f.list(&mut errors, |x, e| x.real(e)) {
            if v.len() == 3 {
                cfg.split = SplitFractions {
                    train: v[0],
                    val: v[1],
                    test: v[2],
                };
            } else {
                f.fail(&mut errors, format!("expected [train, val, test], got {} values", v.len()));
            }
        }
    }

    // [noise]
    let noise_keys = ["group", "fractions", "flip_prob"];
    if noise_keys.iter().any(|k| field("noise", k).is_some()) {
        let mut noise = cfg.noise.clone().unwrap_or(NoiseConfig {
            group: 0,
            fractions: vec![0.0],
            flip_prob: DEFAULT_FLIP_PROB,
        });
        if let Some(f) = field("noise", "group") {
            match f.count(&mut errors, 0) {
                Some(g @ 0..=1) => noise.group = g as u8,
                Some(g) => f.fail(&mut errors, format!("group must be 0 or 1, got {g}")),
                None => {}
            }
        }
        if let Some(f) = field("noise", "fractions") {
            if let Some(v) = f.list(&mut errors, |x, e| x.unit(e)) {
                if v.is_empty() {
                    f.fail(&mut errors, "needs at least one fraction".into());
                }
                noise.fractions = v;
            }
        }
        if let Some(f) = field("noise", "flip_prob") {
            noise.flip_prob = f.unit(&mut errors).unwrap_or(noise.flip_prob);
        }
        cfg.noise = Some(noise);
    }

    // [pgd]
    let p = &mut cfg.pgd;
    if let Some(f) = field("pgd", "iterations") {
        p.iterations = f.count(&mut errors, 1).unwrap_or(p.iterations);
    }
    if let Some(f) = field("pgd", "eta") {
        p.eta = f.positive(&mut errors).unwrap_or(p.eta);
    }
    if let Some(f) = field("pgd", "proj_step") {
        p.projection.step = f.positive(&mut errors).unwrap_or(p.projection.step);
    }
    if let Some(f) = field("pgd", "proj_iters") {
        p.projection.iters = f.count(&mut errors, 1).unwrap_or(p.projection.iters);
    }
    if let Some(f) = field("pgd", "estimator") {
        p.estimator = f.parsed(&mut errors).unwrap_or(p.estimator);
    }
    if let Some(f) = field("pgd", "perturbations") {
        p.perturbations = f.count(&mut errors, 1).unwrap_or(p.perturbations);
    }
    if let Some(f) = field("pgd", "sigma") {
        p.sigma = f.positive(&mut errors).unwrap_or(p.sigma);
    }
    if let Some(f) = field("pgd", "sigma2") {
        p.sigma2 = f.positive(&mut errors);
    }
    if let Some(f) = field("pgd", "minibatch") {
        p.minibatch = f.count(&mut errors, 1);
    }
    if let Some(f) = field("pgd", "truncation_l") {
        p.truncation_l = f.positive(&mut errors);
    }
    if let Some(f) = field("pgd", "init") {
        match f.string(&mut errors).as_deref() {
            Some("zero") => p.init = InitKind::Zero,
            Some("logreg") => p.init = InitKind::Logreg,
            Some(other) => f.fail(&mut errors, format!("unknown init `{other}` (expected zero or logreg)")),
            None => {}
        }
    }
    if let Some(f) = field("pgd", "model_selection") {
        match f.string(&mut errors).as_deref() {
            Some("last") => p.model_selection = Some(ModelSelection::Last),
            Some("best_val_metric") => p.model_selection = Some(ModelSelection::BestValMetric),
            Some(other) => f.fail(&mut errors, format!("unknown model selection `{other}` (expected last or best_val_metric)")),
            None => {}
        }
    }
    if let Some(f) = field("pgd", "tune") {
        p.tune = f.boolean(&mut errors).unwrap_or(p.tune);
    }
    if let Some(f) = field("pgd", "eta_grid") {
        p.eta_grid = f.list(&mut errors, |x, e| x.positive(e)).unwrap_or_default();
    }
    if let Some(f) = field("pgd", "sigma_grid") {
        p.sigma_grid = f.list(&mut errors, |x, e| x.positive(e)).unwrap_or_default();
    }

    // [baselines]
    let b = &mut cfg.baselines;
    for (key, slot) in [("logreg", &mut b.logreg), ("post_shift", &mut b.post_shift), ("proposed", &mut b.proposed)] {
        if let Some(f) = field("baselines", key) {
            *slot = f.boolean(&mut errors).unwrap_or(*slot);
        }
    }
    if let Some(f) = field("baselines", "logreg_step") {
        b.logreg_step = f.positive(&mut errors).unwrap_or(b.logreg_step);
    }
    if let Some(f) = field("baselines", "logreg_iters") {
        b.logreg_iters = f.count(&mut errors, 1).unwrap_or(b.logreg_iters);
    }

    // [study]
    let s = &mut cfg.study;
    for (key, slot) in [
        ("k_min", &mut s.k_min),
        ("k_max", &mut s.k_max),
        ("perturbations", &mut s.perturbations),
        ("draws", &mut s.draws),
        ("trials", &mut s.trials),
    ] {
        if let Some(f) = field("study", key) {
            *slot = f.count(&mut errors, 1).unwrap_or(*slot);
        }
    }
    if let Some(f) = field("study", "sigma") {
        s.sigma = f.positive(&mut errors).unwrap_or(s.sigma);
    }

    cfg.check(&lines, &mut errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        errors.sort_by_key(|e| e.line.unwrap_or(0));
        Err(ConfigErrors(errors))
    }
}

fn parse_group_mapping(f: &Field<'_>, errors: &mut Vec<ConfigError>) -> Option<HashMap<String, u8>> {
    match f.value {
        Value::Table(t) => {
            let mut out = HashMap::new();
            for (k, v) in t {
                match v {
                    Value::Integer(g @ 0..=1) => {
                        out.insert(k.clone(), *g as u8);
                    }
                    other => f.fail(errors, format!("group id for `{k}` must be 0 or 1, found {other}")),
                }
            }
            Some(out)
        }
        other => {
            f.fail(errors, format!("expected an inline table like {{ M = 0, F = 1 }}, found {}", other.type_str()));
            None
        }
    }
}

/// Reads and validates a config file.
pub fn validate_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigErrors> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        }])
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}
