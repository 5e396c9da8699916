//! Dense multi-class datasets, LIBSVM/CSV readers, and the per-feature sorted
//! orderings the tree learner scans.
//!
//! Sparse LIBSVM input is densified on load. Labels are kept 0-based; a file
//! whose labels are exactly `1..=K` is shifted down by one (and the shift is
//! logged). Any other scheme that does not start at 0 is rejected.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Which side of a train/test pair a file is loaded as.
///
/// Training sets must contain every class; test sets may miss some.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Role {
    #[default]
    Train,
    Test,
}

/// How raw integer labels in a file map onto class ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelScheme {
    /// 0-based if the file contains a 0 label, 1-based if the labels are exactly `1..=max`.
    #[default]
    Auto,
    ZeroBased,
    OneBased,
}

impl LabelScheme {
    fn offset(self) -> Option<i64> {
        match self {
            LabelScheme::Auto => None,
            LabelScheme::ZeroBased => Some(0),
            LabelScheme::OneBased => Some(1),
        }
    }

    /// Raw label written for class 0.
    pub fn first_label(self) -> i64 {
        self.offset().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Fix the feature count instead of inferring it from the largest index seen.
    pub expected_features: Option<usize>,
    /// Fix K instead of inferring it as `max label + 1`.
    pub n_classes: Option<usize>,
    pub labels: LabelScheme,
    pub role: Role,
}

impl LoadOptions {
    pub fn train() -> Self {
        Self::default()
    }

    /// Options for a test file that must line up with an already-loaded training set.
    pub fn test_for(train: &Dataset) -> Self {
        LoadOptions {
            expected_features: Some(train.n_features()),
            n_classes: Some(train.n_classes()),
            labels: train.label_scheme(),
            role: Role::Test,
        }
    }
}

/// A dense feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    n_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    label_scheme: LabelScheme,
}

impl Dataset {
    /// Build a dataset from a row-major feature matrix.
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self, DataError> {
        if n_features == 0 {
            return Err(DataError::Shape("dataset needs at least one feature".into()));
        }
        if labels.is_empty() {
            return Err(DataError::Shape("dataset needs at least one sample".into()));
        }
        if features.len() != labels.len() * n_features {
            return Err(DataError::Shape(format!(
                "feature matrix has {} values, expected {} x {}",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if n_classes < 3 {
            return Err(DataError::TooFewClasses(n_classes));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                sample: pos / n_features,
                feature: pos % n_features,
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(DataError::LabelOutOfRange {
                label: bad as i64,
                n_classes,
            });
        }
        Ok(Dataset {
            n_features,
            n_classes,
            features,
            labels,
            label_scheme: LabelScheme::ZeroBased,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Row-major feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.features[i * self.n_features + feature]
    }

    /// The label scheme the file was read with, so a paired test file can reuse it.
    pub fn label_scheme(&self) -> LabelScheme {
        self.label_scheme
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Training sets must contain every class at least once.
    pub fn require_all_classes(&self) -> Result<(), DataError> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(class) => Err(DataError::MissingClass {
                class,
                n_classes: self.n_classes,
            }),
            None => Ok(()),
        }
    }

    fn with_role(self, role: Role) -> Result<Self, DataError> {
        if role == Role::Train {
            self.require_all_classes()?;
        }
        Ok(self)
    }
}

/// Map raw integer labels onto `0..K`. Returns the mapped labels, K and the offset used.
fn resolve_labels(
    raw: &[i64],
    opts: &LoadOptions,
) -> Result<(Vec<usize>, usize, LabelScheme), DataError> {
    let distinct: BTreeSet<i64> = raw.iter().copied().collect();
    let min = *distinct.iter().next().expect("non-empty label set");
    let max = *distinct.iter().next_back().expect("non-empty label set");

    let offset = match opts.labels.offset() {
        Some(o) => o,
        None => {
            if min == 0 {
                0
            } else if min == 1 && distinct.len() as i64 == max {
                info!("labels are 1..{max}; remapping to 0..{}", max - 1);
                1
            } else {
                return Err(DataError::AmbiguousLabels {
                    labels: distinct.into_iter().collect(),
                });
            }
        }
    };
    let scheme = if offset == 0 {
        LabelScheme::ZeroBased
    } else {
        LabelScheme::OneBased
    };

    let n_classes = match opts.n_classes {
        Some(k) => k,
        None if max - offset >= 0 => (max - offset + 1) as usize,
        None => 0,
    };
    let mut labels = Vec::with_capacity(raw.len());
    for &y in raw {
        let shifted = y - offset;
        if shifted < 0 || shifted as usize >= n_classes {
            return Err(DataError::LabelOutOfRange {
                label: y,
                n_classes,
            });
        }
        labels.push(shifted as usize);
    }
    Ok((labels, n_classes, scheme))
}

fn parse_label(token: &str) -> Option<i64> {
    if let Ok(v) = token.parse::<i64>() {
        return Some(v);
    }
    // Some LIBSVM writers emit "3.0".
    let v = token.parse::<f64>().ok()?;
    (v.fract() == 0.0 && v.abs() < 1e15).then_some(v as i64)
}

fn finish(
    path: &Path,
    dense: Vec<f64>,
    n_features: usize,
    raw_labels: Vec<i64>,
    opts: &LoadOptions,
) -> Result<Dataset, DataError> {
    if raw_labels.is_empty() {
        return Err(DataError::Empty {
            path: path.to_path_buf(),
        });
    }
    let (labels, n_classes, scheme) = resolve_labels(&raw_labels, opts)?;
    let mut ds = Dataset::new(dense, n_features, labels, n_classes)?;
    ds.label_scheme = scheme;
    ds.with_role(opts.role)
}

fn open(path: &Path) -> Result<BufReader<File>, DataError> {
    File::open(path).map(BufReader::new).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a LIBSVM file (`label idx:val ...`, 1-based indices, `#` comments).
pub fn load_libsvm(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let malformed = |line: usize, message: String| DataError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut raw_labels = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in open(path)?.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label = parse_label(label_tok)
            .ok_or_else(|| malformed(lineno, format!("label {label_tok:?} is not an integer")))?;

        let mut entries: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| malformed(lineno, format!("expected idx:value, found {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| malformed(lineno, format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(malformed(lineno, "feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| malformed(lineno, format!("bad feature value {val:?}")))?;
            if !val.is_finite() {
                return Err(malformed(lineno, format!("non-finite feature value {val}")));
            }
            if let Some(d) = opts.expected_features {
                if idx > d {
                    return Err(malformed(
                        lineno,
                        format!("feature index {idx} exceeds the expected {d} features"),
                    ));
                }
            }
            if entries.iter().any(|&(i, _)| i == idx - 1) {
                return Err(malformed(lineno, format!("feature {idx} appears twice")));
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push(entries);
        raw_labels.push(label);
    }

    let n_features = opts.expected_features.unwrap_or(max_index);
    let mut dense = vec![0.0; rows.len() * n_features];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            dense[i * n_features + j] = v;
        }
    }
    finish(path, dense, n_features, raw_labels, opts)
}

/// Read a headerless numeric CSV file whose `label_column` holds integer labels.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: usize,
    opts: &LoadOptions,
) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);

    let mut width = None;
    let mut dense = Vec::new();
    let mut raw_labels = Vec::new();
    for (rowno, record) in reader.records().enumerate() {
        let line = rowno + 1;
        let record = record.map_err(|e| DataError::Malformed {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::RaggedRow {
                path: path.to_path_buf(),
                line,
                found: record.len(),
                expected,
            });
        }
        if label_column >= expected {
            return Err(DataError::Shape(format!(
                "label column {label_column} is out of range for {expected} columns"
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            if col == label_column {
                let label = parse_label(cell).ok_or_else(|| DataError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("label {cell:?} is not an integer"),
                })?;
                raw_labels.push(label);
            } else {
                let v: f64 = cell.parse().map_err(|_| DataError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("column {col}: {cell:?} is not numeric"),
                })?;
                dense.push(v);
            }
        }
    }
    let n_features = width.map_or(0, |w| w - 1);
    if let Some(d) = opts.expected_features {
        if d != n_features && !raw_labels.is_empty() {
            return Err(DataError::Shape(format!(
                "{}: file has {n_features} features, expected {d}",
                path.display()
            )));
        }
    }
    finish(path, dense, n_features, raw_labels, opts)
}

/// Write a dataset as LIBSVM text with 0-based labels, omitting zero entries.
pub fn write_libsvm(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for i in 0..ds.n_samples() {
        write!(out, "{}", ds.label(i)).map_err(io_err)?;
        for (j, &v) in ds.row(i).iter().enumerate() {
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v).map_err(io_err)?;
            }
        }
        writeln!(out).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Per feature, the sample indices in ascending feature-value order.
///
/// Ties keep ascending sample order, so the ordering (and everything fitted on
/// top of it) is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedFeatureIndex {
    perms: Vec<Vec<u32>>,
}

impl SortedFeatureIndex {
    pub fn build(ds: &Dataset) -> Self {
        let n = ds.n_samples();
        let perms = (0..ds.n_features())
            .map(|d| {
                let mut perm: Vec<u32> = (0..n as u32).collect();
                perm.sort_by(|&a, &b| {
                    ds.value(a as usize, d)
                        .total_cmp(&ds.value(b as usize, d))
                });
                perm
            })
            .collect();
        SortedFeatureIndex { perms }
    }

    pub fn n_features(&self) -> usize {
        self.perms.len()
    }

    pub fn permutation(&self, feature: usize) -> &[u32] {
        &self.perms[feature]
    }
}

/// Each sample's position among the distinct values of each feature.
///
/// Walking ranks in ascending order is the sorted scan with runs of equal
/// values collapsed, which is where the split search is allowed to cut.
#[derive(Debug, Clone)]
pub struct FeatureRanks {
    n_features: usize,
    /// `offsets[d]..offsets[d + 1]` indexes `values` for feature `d`.
    offsets: Vec<usize>,
    values: Vec<f64>,
    /// Row-major: `ranks[i * n_features + d]`.
    ranks: Vec<u32>,
}

impl FeatureRanks {
    pub fn new(ds: &Dataset, index: &SortedFeatureIndex) -> Self {
        let n = ds.n_samples();
        let d_count = ds.n_features();
        let mut offsets = Vec::with_capacity(d_count + 1);
        let mut values = Vec::new();
        let mut ranks = vec![0u32; n * d_count];
        offsets.push(0);
        for d in 0..d_count {
            let mut rank = 0u32;
            let mut prev: Option<f64> = None;
            for &i in index.permutation(d) {
                let v = ds.value(i as usize, d);
                match prev {
                    None => values.push(v),
                    Some(p) if v != p => {
                        rank += 1;
                        values.push(v);
                    }
                    _ => {}
                }
                prev = Some(v);
                ranks[i as usize * d_count + d] = rank;
            }
            offsets.push(values.len());
        }
        FeatureRanks {
            n_features: d_count,
            offsets,
            values,
            ranks,
        }
    }

    /// Convenience: sort and rank in one go.
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self::new(ds, &SortedFeatureIndex::build(ds))
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_samples(&self) -> usize {
        self.ranks.len() / self.n_features
    }

    /// Number of distinct values of `feature`.
    pub fn n_distinct(&self, feature: usize) -> usize {
        self.offsets[feature + 1] - self.offsets[feature]
    }

    /// Start of `feature`'s block in a flattened per-feature histogram.
    pub fn offset(&self, feature: usize) -> usize {
        self.offsets[feature]
    }

    pub fn total_bins(&self) -> usize {
        self.values.len()
    }

    pub fn sample_ranks(&self, i: usize) -> &[u32] {
        &self.ranks[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rank(&self, i: usize, feature: usize) -> u32 {
        self.ranks[i * self.n_features + feature]
    }

    pub fn distinct_value(&self, feature: usize, rank: u32) -> f64 {
        self.values[self.offsets[feature] + rank as usize]
    }

    /// Threshold separating the values at ranks `lo_rank < hi_rank`: their
    /// midpoint, or the lower value when the midpoint rounds onto the upper one.
    pub fn threshold_between(&self, feature: usize, lo_rank: u32, hi_rank: u32) -> f64 {
        let lo = self.distinct_value(feature, lo_rank);
        let hi = self.distinct_value(feature, hi_rank);
        let mid = lo + (hi - lo) / 2.0;
        if mid < hi {
            mid
        } else {
            lo
        }
    }
}
