//! Datasets: the simulated generator, CSV ingestion, group noise injection
//! and random splitting.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, RandomStream};

/// Labeled examples with optional binary group membership.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: DenseMatrix,
    labels: Vec<i8>,
    groups: Option<Vec<u8>>,
    binary_mask: Vec<bool>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: DenseMatrix,
        labels: Vec<i8>,
        groups: Option<Vec<u8>>,
        binary_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::invalid("empty dataset"));
        }
        if labels.len() != n {
            return Err(Error::invalid(format!("{} labels for {n} examples", labels.len())));
        }
        if let Some(i) = labels.iter().position(|&y| y != 1 && y != -1) {
            return Err(Error::invalid(format!("label {} at example {i} is not ±1", labels[i])));
        }
        if let Some(g) = &groups {
            if g.len() != n {
                return Err(Error::invalid(format!("{} group ids for {n} examples", g.len())));
            }
            if let Some(i) = g.iter().position(|&v| v > 1) {
                return Err(Error::invalid(format!("group id {} at example {i} is not 0/1", g[i])));
            }
        }
        if binary_mask.len() != features.cols() {
            return Err(Error::invalid(format!(
                "binary mask has {} entries for {} features",
                binary_mask.len(),
                features.cols()
            )));
        }
        for (j, _) in binary_mask.iter().enumerate().filter(|(_, b)| **b) {
            if let Some(i) = (0..n).find(|&i| {
                let v = features.get(i, j);
                v != 0.0 && v != 1.0
            }) {
                return Err(Error::invalid(format!(
                    "binary column {j} holds {} at example {i}",
                    features.get(i, j)
                )));
            }
        }
        let feature_names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            features,
            labels,
            groups,
            binary_mask,
            feature_names,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(Error::invalid("feature name count does not match feature count"));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn groups(&self) -> Option<&[u8]> {
        self.groups.as_deref()
    }

    pub fn binary_mask(&self) -> &[bool] {
        &self.binary_mask
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn num_positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    /// Examples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("subset index {bad} out of range")));
        }
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: self.groups.as_ref().map(|g| idx.iter().map(|&i| g[i]).collect()),
            binary_mask: self.binary_mask.clone(),
            feature_names: self.feature_names.clone(),
        }
        .non_empty()
    }

    fn non_empty(self) -> Result<Self> {
        if self.is_empty() {
            Err(Error::invalid("empty dataset"))
        } else {
            Ok(self)
        }
    }

    /// Same features and groups with a different label vector.
    pub fn with_labels(&self, labels: Vec<i8>) -> Result<Dataset> {
        Dataset::new(
            self.features.clone(),
            labels,
            self.groups.clone(),
            self.binary_mask.clone(),
        )?
        .with_feature_names(self.feature_names.clone())
    }

    /// Writes the dataset as CSV with columns `<features…>,label[,group]`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.feature_names.clone();
        header.push("label".into());
        if self.groups.is_some() {
            header.push("group".into());
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| format!("{v}")).collect();
            rec.push(self.labels[i].to_string());
            if let Some(g) = &self.groups {
                rec.push(g[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const DEFAULT_SIMULATED_N: usize = 5000;
pub const DEFAULT_POSITIVE_FRAC: f64 = 0.10;

/// Two-dimensional imbalanced task: positives from `N(0, 0.2·I)`, negatives
/// from an equal-prior mixture of `N((−1,−1), 0.1·I)` and `N((1,1), 0.1·I)`.
/// The positive count is exactly `round(positive_frac·n)`.
pub fn generate_simulated(n: usize, positive_frac: f64, seed: u64) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::invalid(format!("generate_simulated: n = {n} < 10")));
    }
    if !(positive_frac > 0.0 && positive_frac < 1.0) {
        return Err(Error::invalid(format!(
            "generate_simulated: positive_frac {positive_frac} not in (0, 1)"
        )));
    }
    let n_pos = (positive_frac * n as f64).round() as usize;
    let mut rng = RandomStream::new(seed, 0);
    let pos_sd = 0.2f64.sqrt();
    let neg_sd = 0.1f64.sqrt();

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        if i < n_pos {
            rows.push((vec![pos_sd * rng.gaussian(), pos_sd * rng.gaussian()], 1i8));
        } else {
            let c = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            rows.push((vec![c + neg_sd * rng.gaussian(), c + neg_sd * rng.gaussian()], -1i8));
        }
    }
    rows.shuffle(rng.rng_mut());

    let labels = rows.iter().map(|r| r.1).collect();
    let feats: Vec<Vec<f64>> = rows.into_iter().map(|r| r.0).collect();
    Dataset::new(DenseMatrix::from_rows(&feats)?, labels, None, vec![false; 2])
}

/// How to read a CSV file into a [`Dataset`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvOptions {
    pub label_column: String,
    pub group_column: Option<String>,
    /// Maps raw group cell values to group ids. Without a mapping the group
    /// column must hold `0`/`1`.
    pub group_mapping: Option<HashMap<String, u8>>,
    pub binary_columns: Vec<String>,
    /// Columns dropped entirely (neither features nor labels).
    pub ignore_columns: Vec<String>,
}

fn parse_label(raw: &str) -> Option<i8> {
    match raw.trim().parse::<f64>().ok()? {
        v if v == 1.0 => Some(1),
        v if v == 0.0 || v == -1.0 => Some(-1),
        _ => None,
    }
}

/// Reads a comma-separated file whose first row is a header.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("{display}: missing column {name:?}")))
    };
    let label_idx = find(&opts.label_column)?;
    let group_idx = opts.group_column.as_deref().map(find).transpose()?;
    for name in opts.binary_columns.iter().chain(&opts.ignore_columns) {
        find(name)?;
    }
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&j| j != label_idx && Some(j) != group_idx && !opts.ignore_columns.contains(&header[j]))
        .collect();
    let binary_mask: Vec<bool> = feature_cols
        .iter()
        .map(|&j| opts.binary_columns.contains(&header[j]))
        .collect();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec?;
        let err = |message: String| Error::Parse {
            path: display.clone(),
            line,
            message,
        };
        if rec.len() != header.len() {
            return Err(err(format!("{} fields, header has {}", rec.len(), header.len())));
        }
        let raw_label = &rec[label_idx];
        labels.push(parse_label(raw_label).ok_or_else(|| err(format!("bad label {raw_label:?}")))?);
        if let Some(gi) = group_idx {
            let raw = rec[gi].trim();
            let g = match &opts.group_mapping {
                Some(map) => map.get(raw).copied(),
                None => match raw {
                    "0" => Some(0),
                    "1" => Some(1),
                    _ => None,
                },
            };
            groups.push(g.ok_or_else(|| err(format!("unmapped group value {raw:?}")))?);
        }
        for &j in &feature_cols {
            let cell = rec[j].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| err(format!("column {:?}: cannot parse {cell:?}", header[j])))?;
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::invalid(format!("{display}: empty dataset")));
    }
    let features = DenseMatrix::new(labels.len(), feature_cols.len(), data)?;
    let names = feature_cols.iter().map(|&j| header[j].clone()).collect();
    Dataset::new(features, labels, group_idx.map(|_| groups), binary_mask)?.with_feature_names(names)
}

pub const DEFAULT_FLIP_PROB: f64 = 0.9;

/// Corrupts a random `⌊fraction·|group|⌋` examples of `target_group`: real
/// features get additive `N(0, sd_j²)` noise (sd_j is the column's standard
/// deviation over the whole input) and binary features are flipped
/// independently with probability `flip_prob`.
pub fn inject_group_noise(
    ds: &Dataset,
    target_group: u8,
    fraction: f64,
    flip_prob: f64,
    seed: u64,
) -> Result<Dataset> {
    let groups = ds
        .groups()
        .ok_or_else(|| Error::invalid("inject_group_noise: dataset has no group column"))?;
    if !(0.0..=1.0).contains(&fraction) || !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::invalid("inject_group_noise: fraction and flip_prob must lie in [0, 1]"));
    }
    let mut members: Vec<usize> = (0..ds.len()).filter(|&i| groups[i] == target_group).collect();
    let count = (fraction * members.len() as f64).floor() as usize;
    let mut out = ds.clone();
    if count == 0 {
        return Ok(out);
    }

    let n = ds.len() as f64;
    let sds: Vec<f64> = (0..ds.dim())
        .map(|j| {
            let col = ds.features.column(j);
            let mean = col.iter().sum::<f64>() / n;
            (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
        })
        .collect();

    let mut rng = RandomStream::new(seed, 0);
    members.shuffle(rng.rng_mut());
    for &i in &members[..count] {
        let row = out.features.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            if ds.binary_mask[j] {
                if rng.uniform() < flip_prob {
                    *v = 1.0 - *v;
                }
            } else {
                *v += sds[j] * rng.gaussian();
            }
        }
    }
    Ok(out)
}

/// Train/validation/test fractions and the shuffling seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// The 4/9 : 2/9 : 1/3 protocol.
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            train_frac: 4.0 / 9.0,
            val_frac: 2.0 / 9.0,
            test_frac: 1.0 / 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::invalid(format!("split fractions {fr:?} must each lie in (0, 1)")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions {fr:?} do not sum to 1")));
        }
        Ok(())
    }

    /// Index sets of the three parts.
    pub fn partition(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        self.validate()?;
        if n < 3 {
            return Err(Error::invalid(format!("cannot split {n} examples three ways")));
        }
        // the epsilon keeps e.g. (4/9)·9 from flooring to 3
        let n_train = (self.train_frac * n as f64 + 1e-9).floor() as usize;
        let n_val = (self.val_frac * n as f64 + 1e-9).floor() as usize;
        if n_train == 0 || n_val == 0 || n_train + n_val >= n {
            return Err(Error::invalid(format!(
                "split of {n} examples leaves an empty part ({n_train}, {n_val}, {})",
                n.saturating_sub(n_train + n_val)
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(RandomStream::new(self.seed, 0).rng_mut());
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Ok((idx, val, test))
    }
}

/// Random disjoint train/validation/test partition.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let (tr, va, te) = spec.partition(ds.len())?;
    Ok((ds.subset(&tr)?, ds.subset(&va)?, ds.subset(&te)?))
}
