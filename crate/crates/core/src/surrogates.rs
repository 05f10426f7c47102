//! Convex surrogate losses and the profile map `θ ↦ (ℓ₁(θ), …, ℓ_K(θ))`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{score, ModelParams, ScoreVector};
use crate::numerics::quantile_rank;

/// Which examples a surrogate averages over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subset {
    All,
    Positives,
    Negatives,
    GroupPositives(u8),
    GroupNegatives(u8),
}

impl Subset {
    fn label(&self) -> Option<i8> {
        match self {
            Subset::All => None,
            Subset::Positives | Subset::GroupPositives(_) => Some(1),
            Subset::Negatives | Subset::GroupNegatives(_) => Some(-1),
        }
    }

    fn group(&self) -> Option<u8> {
        match self {
            Subset::GroupPositives(g) | Subset::GroupNegatives(g) => Some(*g),
            _ => None,
        }
    }

    pub fn contains(&self, label: i8, group: Option<u8>) -> bool {
        self.label().is_none_or(|l| l == label) && self.group().is_none_or(|g| group == Some(g))
    }

    /// Whether some example could belong to both subsets.
    pub fn overlaps(&self, other: &Subset) -> bool {
        let labels_clash = matches!((self.label(), other.label()), (Some(a), Some(b)) if a != b);
        let groups_clash = matches!((self.group(), other.group()), (Some(a), Some(b)) if a != b);
        !(labels_clash || groups_clash)
    }

    /// Indices of the member examples; errors when there are none.
    pub fn indices(&self, ds: &Dataset) -> Result<Vec<usize>> {
        if self.group().is_some() && ds.groups().is_none() {
            return Err(Error::invalid(format!("subset {self} needs a group column")));
        }
        let groups = ds.groups();
        let idx: Vec<usize> = (0..ds.len())
            .filter(|&i| self.contains(ds.labels()[i], groups.map(|g| g[i])))
            .collect();
        if idx.is_empty() {
            return Err(Error::invalid(format!("subset {self} is empty on this dataset")));
        }
        Ok(idx)
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subset::All => write!(f, "all"),
            Subset::Positives => write!(f, "positives"),
            Subset::Negatives => write!(f, "negatives"),
            Subset::GroupPositives(g) => write!(f, "group{g}_positives"),
            Subset::GroupNegatives(g) => write!(f, "group{g}_negatives"),
        }
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => return Ok(Subset::All),
            "positives" => return Ok(Subset::Positives),
            "negatives" => return Ok(Subset::Negatives),
            _ => {}
        }
        let bad = || Error::invalid(format!("unknown subset {s:?}"));
        let rest = s.strip_prefix("group").ok_or_else(bad)?;
        let (g, which) = rest.split_once('_').ok_or_else(bad)?;
        let g: u8 = g.parse().map_err(|_| bad())?;
        if g > 1 {
            return Err(bad());
        }
        match which {
            "positives" => Ok(Subset::GroupPositives(g)),
            "negatives" => Ok(Subset::GroupNegatives(g)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurrogateKind {
    Hinge,
    Logistic,
    /// Non-convex; accepted for experiments but outside the convex theory.
    Sigmoid,
    /// Quantile-hinge surrogate for precision at recall level `tau`.
    PrecisionAtRecall { tau: f64 },
}

impl SurrogateKind {
    fn name(&self) -> &'static str {
        match self {
            SurrogateKind::Hinge => "hinge",
            SurrogateKind::Logistic => "logistic",
            SurrogateKind::Sigmoid => "sigmoid",
            SurrogateKind::PrecisionAtRecall { .. } => "precision_at_recall",
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, SurrogateKind::Sigmoid)
    }

    /// Pointwise loss of the margin `z = y·s`.
    fn phi(&self, z: f64) -> f64 {
        match self {
            SurrogateKind::Hinge => (1.0 - z).max(0.0),
            SurrogateKind::Logistic => {
                if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
            SurrogateKind::Sigmoid => sigmoid(-z),
            SurrogateKind::PrecisionAtRecall { .. } => unreachable!("not a pointwise loss"),
        }
    }

    /// Derivative of `phi`; the hinge kink at `z = 1` takes the value 0.
    fn dphi(&self, z: f64) -> f64 {
        match self {
            SurrogateKind::Hinge => {
                if z < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            SurrogateKind::Logistic => -sigmoid(-z),
            SurrogateKind::Sigmoid => {
                let p = sigmoid(-z);
                -p * (1.0 - p)
            }
            SurrogateKind::PrecisionAtRecall { .. } => unreachable!("not a pointwise loss"),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A surrogate loss restricted to a subset of examples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    pub subset: Subset,
}

impl SurrogateSpec {
    pub fn new(kind: SurrogateKind, subset: Subset) -> Result<Self> {
        if let SurrogateKind::PrecisionAtRecall { tau } = kind {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::invalid(format!("precision_at_recall tau {tau} not in (0, 1)")));
            }
        }
        Ok(SurrogateSpec { kind, subset })
    }

    pub fn hinge(subset: Subset) -> Self {
        SurrogateSpec {
            kind: SurrogateKind::Hinge,
            subset,
        }
    }
}

impl fmt::Display for SurrogateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.subset)?;
        if let SurrogateKind::PrecisionAtRecall { tau } = self.kind {
            write!(f, ":{tau}")?;
        }
        Ok(())
    }
}

impl FromStr for SurrogateSpec {
    type Err = Error;

    /// `kind:subset[:tau]`, e.g. `hinge:positives` or `precision_at_recall:all:0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let (kind, subset, tau) = match parts.as_slice() {
            [k, sub] => (*k, *sub, None),
            [k, sub, t] => (*k, *sub, Some(*t)),
            _ => return Err(Error::invalid(format!("surrogate {s:?} is not kind:subset[:tau]"))),
        };
        let subset: Subset = subset.parse()?;
        let kind = match (kind, tau) {
            ("precision_at_recall", Some(t)) => SurrogateKind::PrecisionAtRecall {
                tau: t
                    .parse()
                    .map_err(|_| Error::invalid(format!("surrogate {s:?}: bad tau {t:?}")))?,
            },
            ("precision_at_recall", None) => {
                return Err(Error::invalid(format!("surrogate {s:?}: precision_at_recall needs a tau")))
            }
            ("hinge" | "logistic" | "sigmoid", Some(_)) => {
                return Err(Error::invalid(format!("surrogate {s:?}: tau is only valid for precision_at_recall")))
            }
            ("hinge", None) => SurrogateKind::Hinge,
            ("logistic", None) => SurrogateKind::Logistic,
            ("sigmoid", None) => SurrogateKind::Sigmoid,
            (k, _) => return Err(Error::invalid(format!("unknown surrogate kind {k:?}"))),
        };
        SurrogateSpec::new(kind, subset)
    }
}

impl Serialize for SurrogateSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SurrogateSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Errors naming the first pair of specs whose subsets can share an example.
pub fn check_disjoint(specs: &[SurrogateSpec]) -> Result<()> {
    for (i, a) in specs.iter().enumerate() {
        for (j, b) in specs.iter().enumerate().skip(i + 1) {
            if a.subset.overlaps(&b.subset) {
                return Err(Error::invalid(format!(
                    "surrogates {i} ({a}) and {j} ({b}) act on overlapping example subsets"
                )));
            }
        }
    }
    Ok(())
}

/// Surrogate values `(ℓ₁, …, ℓ_K)`; all entries are finite and nonnegative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateProfile(pub Vec<f64>);

impl SurrogateProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("surrogate profile entry {v} is not a finite nonnegative value")));
        }
        Ok(SurrogateProfile(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A differentiable map from a parameter vector to `K` surrogate values.
/// The projection step only needs this interface.
pub trait SurrogateMap: Sync {
    fn num_params(&self) -> usize;

    fn num_surrogates(&self) -> usize;

    fn profile(&self, theta: &[f64]) -> Result<Vec<f64>>;

    /// Values and the `K × P` Jacobian (one row per surrogate). Any
    /// subgradient is acceptable at kinks.
    fn profile_and_jacobian(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)>;
}

/// Surrogate specs bound to a dataset, with member indices cached.
#[derive(Clone, Debug)]
pub struct Profiler<'a> {
    specs: Vec<SurrogateSpec>,
    ds: &'a Dataset,
    members: Vec<Vec<usize>>,
}

impl<'a> Profiler<'a> {
    pub fn new(specs: &[SurrogateSpec], ds: &'a Dataset) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("at least one surrogate is required"));
        }
        let members = specs
            .iter()
            .map(|s| {
                let idx = s.subset.indices(ds)?;
                if let SurrogateKind::PrecisionAtRecall { .. } = s.kind {
                    let pos = idx.iter().filter(|&&i| ds.labels()[i] == 1).count();
                    if pos == 0 || pos == idx.len() {
                        return Err(Error::invalid(format!(
                            "surrogate {s} needs both positives and negatives in its subset"
                        )));
                    }
                }
                Ok(idx)
            })
            .collect::<Result<Vec<_>>>()?;
        if specs.iter().any(|s| !s.kind.is_convex()) {
            log::warn!("non-convex sigmoid surrogate in use; the projection step is no longer a convex problem");
        }
        Ok(Profiler {
            specs: specs.to_vec(),
            ds,
            members,
        })
    }

    pub fn specs(&self) -> &[SurrogateSpec] {
        &self.specs
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.ds
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    fn check_scores(&self, scores: &[f64]) -> Result<()> {
        if scores.len() != self.ds.len() {
            return Err(Error::invalid(format!(
                "{} scores for a dataset of {} examples",
                scores.len(),
                self.ds.len()
            )));
        }
        Ok(())
    }

    /// Value of surrogate `k` after adding `delta` to the margin `y_i·s_i` of
    /// every member example. For single-label subsets this is the uniform
    /// score shift `s_i + y·delta`.
    pub fn shifted_value(&self, k: usize, scores: &[f64], delta: f64) -> f64 {
        let spec = &self.specs[k];
        let y = self.ds.labels();
        let idx = &self.members[k];
        match spec.kind {
            SurrogateKind::PrecisionAtRecall { tau } => {
                let shifted: Vec<f64> = idx.iter().map(|&i| scores[i] + f64::from(y[i]) * delta).collect();
                let local_labels: Vec<i8> = idx.iter().map(|&i| y[i]).collect();
                par_value(tau, &shifted, &local_labels).0
            }
            kind => {
                idx.iter()
                    .map(|&i| kind.phi(f64::from(y[i]) * scores[i] + delta))
                    .sum::<f64>()
                    / idx.len() as f64
            }
        }
    }

    pub fn value(&self, k: usize, scores: &[f64]) -> f64 {
        self.shifted_value(k, scores, 0.0)
    }

    pub fn profile_from_scores(&self, scores: &[f64]) -> Result<SurrogateProfile> {
        self.check_scores(scores)?;
        SurrogateProfile::new((0..self.len()).map(|k| self.value(k, scores)).collect())
    }

    pub fn profile_of(&self, params: &ModelParams) -> Result<SurrogateProfile> {
        self.profile_from_scores(&score(params, self.ds.features())?)
    }

    /// Values and gradients with respect to the flat parameters
    /// `(weights, bias)`, from precomputed scores.
    pub fn values_and_gradients(&self, scores: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        self.check_scores(scores)?;
        let x = self.ds.features();
        let y = self.ds.labels();
        let p = x.cols() + 1;
        let mut values = Vec::with_capacity(self.len());
        let mut grads = Vec::with_capacity(self.len());
        for (spec, idx) in self.specs.iter().zip(&self.members) {
            let mut g = vec![0.0; p];
            let mut add = |i: usize, c: f64| {
                for (gj, xj) in g.iter_mut().zip(x.row(i)) {
                    *gj += c * xj;
                }
                g[p - 1] += c;
            };
            let value = match spec.kind {
                SurrogateKind::PrecisionAtRecall { tau } => {
                    let local: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
                    let labels: Vec<i8> = idx.iter().map(|&i| y[i]).collect();
                    let (value, t_local) = par_value(tau, &local, &labels);
                    let t_idx = idx[t_local];
                    let t = scores[t_idx];
                    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
                    let n_neg = labels.len() as f64 - n_pos;
                    let mut t_coef = 0.0;
                    for &i in idx {
                        if y[i] == 1 {
                            if 1.0 + t - scores[i] > 0.0 {
                                add(i, -tau / n_pos);
                                t_coef += tau / n_pos;
                            }
                        } else if 1.0 + scores[i] - t > 0.0 {
                            add(i, 1.0 / n_neg);
                            t_coef -= 1.0 / n_neg;
                        }
                    }
                    add(t_idx, t_coef);
                    value
                }
                kind => {
                    let inv = 1.0 / idx.len() as f64;
                    let mut v = 0.0;
                    for &i in idx {
                        let yi = f64::from(y[i]);
                        let z = yi * scores[i];
                        v += kind.phi(z);
                        add(i, kind.dphi(z) * yi * inv);
                    }
                    v * inv
                }
            };
            values.push(value);
            grads.push(g);
        }
        Ok((values, grads))
    }
}

/// Quantile-hinge value on a local score/label slice, plus the local index
/// of the threshold example.
fn par_value(tau: f64, scores: &[f64], labels: &[i8]) -> (f64, usize) {
    let mut pos: Vec<usize> = (0..scores.len()).filter(|&i| labels[i] == 1).collect();
    pos.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let t_local = pos[quantile_rank(pos.len(), 1.0 - tau)];
    let t = scores[t_local];
    let (mut neg_sum, mut n_neg, mut pos_sum) = (0.0, 0usize, 0.0);
    for (i, &s) in scores.iter().enumerate() {
        if labels[i] == 1 {
            pos_sum += (1.0 + t - s).max(0.0);
        } else {
            neg_sum += (1.0 + s - t).max(0.0);
            n_neg += 1;
        }
    }
    (neg_sum / n_neg as f64 + tau * pos_sum / pos.len() as f64, t_local)
}

impl SurrogateMap for Profiler<'_> {
    fn num_params(&self) -> usize {
        self.ds.dim() + 1
    }

    fn num_surrogates(&self) -> usize {
        self.len()
    }

    fn profile(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.profile_of(&ModelParams::from_flat(theta)?)?.0)
    }

    fn profile_and_jacobian(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let params = ModelParams::from_flat(theta)?;
        self.values_and_gradients(&score(&params, self.ds.features())?)
    }
}

/// Value of one surrogate on a score vector.
pub fn eval_surrogate(spec: &SurrogateSpec, scores: &ScoreVector, ds: &Dataset) -> Result<f64> {
    let p = Profiler::new(std::slice::from_ref(spec), ds)?;
    p.check_scores(scores)?;
    Ok(p.value(0, scores))
}

pub fn eval_profile(specs: &[SurrogateSpec], params: &ModelParams, ds: &Dataset) -> Result<SurrogateProfile> {
    Profiler::new(specs, ds)?.profile_of(params)
}

pub fn eval_profile_from_scores(specs: &[SurrogateSpec], scores: &ScoreVector, ds: &Dataset) -> Result<SurrogateProfile> {
    if scores.is_empty() {
        return Err(Error::invalid("empty score vector"));
    }
    Profiler::new(specs, ds)?.profile_from_scores(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;

    fn ds(rows: &[[f64; 1]], labels: &[i8]) -> Dataset {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        Dataset::new(DenseMatrix::from_rows(&rows).unwrap(), labels.to_vec(), None, vec![false]).unwrap()
    }

    #[test]
    fn hinge_dead_zone_and_value() {
        let d = ds(&[[1.0], [2.0]], &[1, 1]);
        let spec = SurrogateSpec::hinge(Subset::Positives);
        assert_eq!(eval_surrogate(&spec, &ScoreVector(vec![1.0, 3.0]), &d).unwrap(), 0.0);
        let one = ds(&[[0.0]], &[1]);
        assert_eq!(eval_surrogate(&spec, &ScoreVector(vec![-1.0]), &one).unwrap(), 2.0);
    }

    #[test]
    fn logistic_at_zero() {
        let d = ds(&[[1.0], [2.0], [3.0]], &[1, -1, 1]);
        let spec: SurrogateSpec = "logistic:all".parse().unwrap();
        let v = eval_surrogate(&spec, &ScoreVector(vec![0.0; 3]), &d).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn empty_subset_is_named() {
        let d = ds(&[[1.0]], &[1]);
        let e = eval_surrogate(&SurrogateSpec::hinge(Subset::Negatives), &ScoreVector(vec![0.0]), &d).unwrap_err();
        assert!(e.to_string().contains("negatives"), "{e}");
    }

    #[test]
    fn zero_model_profile_is_ones() {
        let d = ds(&[[1.0], [-1.0], [2.0]], &[1, -1, -1]);
        let specs = [SurrogateSpec::hinge(Subset::Positives), SurrogateSpec::hinge(Subset::Negatives)];
        let p = eval_profile(&specs, &ModelParams::zeros(1), &d).unwrap();
        assert_eq!(p.values(), &[1.0, 1.0]);
    }

    #[test]
    fn separated_profile_is_zero() {
        let d = ds(&[[2.0], [-2.0], [3.0]], &[1, -1, 1]);
        let specs = [SurrogateSpec::hinge(Subset::Positives), SurrogateSpec::hinge(Subset::Negatives)];
        let p = eval_profile(&specs, &ModelParams::new(vec![1.0], 0.0).unwrap(), &d).unwrap();
        assert_eq!(p.values(), &[0.0, 0.0]);
    }

    #[test]
    fn duplicate_specs_agree() {
        let d = ds(&[[0.3], [-1.0]], &[1, -1]);
        let s = SurrogateSpec::hinge(Subset::All);
        let p = eval_profile(&[s, s], &ModelParams::new(vec![0.7], 0.1).unwrap(), &d).unwrap();
        assert_eq!(p.0[0], p.0[1]);
    }

    #[test]
    fn from_scores_matches_params() {
        let d = ds(&[[0.3], [-1.0], [2.0]], &[1, -1, 1]);
        let specs: Vec<SurrogateSpec> = ["hinge:positives", "logistic:negatives", "precision_at_recall:all:0.5"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let params = ModelParams::new(vec![0.7], -0.2).unwrap();
        let a = eval_profile(&specs, &params, &d).unwrap();
        let b = eval_profile_from_scores(&specs, &score(&params, d.features()).unwrap(), &d).unwrap();
        assert_eq!(a, b);
        assert!(eval_profile_from_scores(&specs, &ScoreVector(vec![]), &d).is_err());
    }

    #[test]
    fn shifting_positive_scores_decreases_hinge() {
        let d = ds(&[[0.0], [0.0], [0.0]], &[1, 1, -1]);
        let spec = [SurrogateSpec::hinge(Subset::Positives)];
        let s = vec![0.2, 1.5, -0.3];
        let before = eval_profile_from_scores(&spec, &ScoreVector(s.clone()), &d).unwrap().0[0];
        let shifted = vec![0.3, 1.6, -0.3];
        let after = eval_profile_from_scores(&spec, &ScoreVector(shifted), &d).unwrap().0[0];
        assert!(after < before);
    }

    #[test]
    fn spec_parsing() {
        let s: SurrogateSpec = "precision_at_recall:all:0.25".parse().unwrap();
        assert_eq!(s.kind, SurrogateKind::PrecisionAtRecall { tau: 0.25 });
        assert_eq!(s.to_string(), "precision_at_recall:all:0.25");
        let g: SurrogateSpec = "hinge:group1_negatives".parse().unwrap();
        assert_eq!(g.subset, Subset::GroupNegatives(1));
        assert_eq!(g.to_string(), "hinge:group1_negatives");
        assert!("hinge:positives:0.5".parse::<SurrogateSpec>().is_err());
        assert!("precision_at_recall:all".parse::<SurrogateSpec>().is_err());
        assert!("precision_at_recall:all:1.5".parse::<SurrogateSpec>().is_err());
        assert!("hinge:group2_positives".parse::<SurrogateSpec>().is_err());
        assert!("quadratic:all".parse::<SurrogateSpec>().is_err());
    }

    #[test]
    fn disjointness() {
        let parse = |v: &[&str]| v.iter().map(|s| s.parse().unwrap()).collect::<Vec<SurrogateSpec>>();
        assert!(check_disjoint(&parse(&["hinge:positives", "hinge:negatives"])).is_ok());
        assert!(check_disjoint(&parse(&[
            "hinge:group0_positives",
            "hinge:group1_positives",
            "hinge:group0_negatives",
            "hinge:group1_negatives"
        ]))
        .is_ok());
        let e = check_disjoint(&parse(&["hinge:positives", "logistic:group1_positives"])).unwrap_err();
        assert!(e.to_string().contains("0 (hinge:positives)"), "{e}");
        assert!(check_disjoint(&parse(&["hinge:all", "hinge:negatives"])).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        let labels: Vec<i8> = (0..12).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let d = Dataset::new(DenseMatrix::from_rows(&rows).unwrap(), labels, None, vec![false; 2]).unwrap();
        let specs: Vec<SurrogateSpec> = ["logistic:positives", "sigmoid:negatives", "logistic:all"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let prof = Profiler::new(&specs, &d).unwrap();
        let theta = [0.4, -0.3, 0.1];
        let (_, jac) = prof.profile_and_jacobian(&theta).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let mut a = theta;
            let mut b = theta;
            a[j] += h;
            b[j] -= h;
            let (pa, pb) = (prof.profile(&a).unwrap(), prof.profile(&b).unwrap());
            for k in 0..3 {
                let fd = (pa[k] - pb[k]) / (2.0 * h);
                assert!((fd - jac[k][j]).abs() < 1e-6, "k={k} j={j}: {fd} vs {}", jac[k][j]);
            }
        }
    }
}
