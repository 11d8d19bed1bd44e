//! Tabular classification data: CSV ingestion, the two-group toy generator,
//! z-score standardization and stratified train/validation/test splits.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Per-column z-scoring transform fitted on some reference data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero variance; they map to all-zeros.
    pub constant: Vec<bool>,
}

impl Standardization {
    /// Fits population (1/N) mean and standard deviation per column.
    pub fn fit(features: &Array2<f64>) -> Self {
        let n = features.nrows() as f64;
        let mut mean = Vec::with_capacity(features.ncols());
        let mut std = Vec::with_capacity(features.ncols());
        let mut constant = Vec::with_capacity(features.ncols());
        for col in features.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            let is_const = !(s > 1e-12 * (1.0 + m.abs()));
            mean.push(m);
            std.push(if is_const { 1.0 } else { s });
            constant.push(is_const);
        }
        Self { mean, std, constant }
    }

    pub fn transform(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.mean.len() {
            return invalid(format!(
                "standardization fitted on {} columns, data has {}",
                self.mean.len(),
                features.ncols()
            ));
        }
        let mut out = features.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            if self.constant[j] {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
            }
        }
        Ok(out)
    }
}

/// A labelled feature matrix with optional sensitive-group identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    label_names: Vec<String>,
    sensitive: Option<Vec<usize>>,
    group_names: Vec<String>,
    feature_names: Vec<String>,
    standardization: Option<Standardization>,
}

impl Dataset {
    /// Builds a dataset, validating shapes and label range. Labels are named
    /// by their index; group ids by their decimal value.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        sensitive: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n_groups = sensitive
            .as_ref()
            .map(|s| s.iter().copied().max().map_or(0, |m| m + 1))
            .unwrap_or(0);
        let feature_names = (0..features.ncols()).map(|j| format!("x{}", j + 1)).collect();
        Self::with_names(
            features,
            labels,
            (0..n_classes).map(|c| c.to_string()).collect(),
            sensitive,
            (0..n_groups).map(|g| g.to_string()).collect(),
            feature_names,
        )
    }

    pub fn with_names(
        features: Array2<f64>,
        labels: Vec<usize>,
        label_names: Vec<String>,
        sensitive: Option<Vec<usize>>,
        group_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        let n_classes = label_names.len();
        if n == 0 {
            return invalid("dataset must contain at least one instance");
        }
        if labels.len() != n {
            return invalid(format!("{} labels for {} rows", labels.len(), n));
        }
        if feature_names.len() != features.ncols() {
            return invalid("feature name count does not match column count");
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return invalid(format!("label {bad} out of range for {n_classes} classes"));
        }
        if let Some(s) = &sensitive {
            if s.len() != n {
                return invalid(format!("{} group ids for {} rows", s.len(), n));
            }
            if let Some(&bad) = s.iter().find(|&&g| g >= group_names.len()) {
                return invalid(format!("unknown group id {bad}"));
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            label_names,
            sensitive,
            group_names,
            feature_names,
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn sensitive(&self) -> Option<&[usize]> {
        self.sensitive.as_deref()
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Number of distinct labels actually present.
    pub fn distinct_labels(&self) -> usize {
        let mut seen = vec![false; self.n_classes];
        for &y in &self.labels {
            seen[y] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    /// Rows at the given indices, keeping all metadata.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            label_names: self.label_names.clone(),
            sensitive: self
                .sensitive
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
            group_names: self.group_names.clone(),
            feature_names: self.feature_names.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Drops the sensitive column.
    pub fn without_sensitive(&self) -> Dataset {
        let mut out = self.clone();
        out.sensitive = None;
        out.group_names.clear();
        out
    }

    /// Replaces the sensitive column (group names are kept when ids fit).
    pub fn with_sensitive(&self, sensitive: Vec<usize>, group_names: Vec<String>) -> Result<Dataset> {
        let mut out = self.clone();
        if sensitive.len() != self.len() || sensitive.iter().any(|&g| g >= group_names.len()) {
            return invalid("sensitive column does not match dataset");
        }
        out.sensitive = Some(sensitive);
        out.group_names = group_names;
        Ok(out)
    }

    /// Applies an already-fitted transform and records it.
    pub fn apply_standardization(&self, transform: &Standardization) -> Result<Dataset> {
        let mut out = self.clone();
        out.features = transform.transform(&self.features)?;
        out.standardization = Some(transform.clone());
        Ok(out)
    }

    /// Writes the dataset as a headered CSV: features, then `s` (when
    /// present), then `y`. Group and label cells carry their names.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.feature_names.clone();
        if self.sensitive.is_some() {
            header.push("s".into());
        }
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| format!("{v}")).collect();
            if let Some(s) = &self.sensitive {
                rec.push(self.group_names[s[i]].clone());
            }
            rec.push(self.label_names[self.labels[i]].clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Z-scores every column with whole-dataset statistics. Use
/// [`SplitSets::standardize`] to fit on the training portion instead.
pub fn standardize(ds: &Dataset) -> Dataset {
    let t = Standardization::fit(&ds.features);
    ds.apply_standardization(&t).expect("transform fitted on the same columns")
}

/// Samples the two-group toy problem: a 90% majority separable through X1
/// alone and a more dispersed 10% minority that also needs X2.
pub fn generate_toy(n: usize, seed: u64) -> Result<Dataset> {
    if n < 10 {
        return invalid(format!("toy generator needs n >= 10, got {n}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let s = usize::from(rng.random::<f64>() < 0.9);
        let y = usize::from(rng.random::<f64>() < 0.5);
        let (mean, var) = match (s, y) {
            (1, 1) => ([6.0, 0.0], 1.0),
            (1, 0) => ([2.0, 0.0], 1.0),
            (0, 1) => ([-4.0, 2.0], 2.5),
            _ => ([-2.0, 0.0], 2.5),
        };
        let sd: f64 = f64::sqrt(var);
        for (j, m) in mean.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            features[[i, j]] = m + sd * z;
        }
        labels.push(y);
        groups.push(s);
    }
    Dataset::with_names(
        features,
        labels,
        vec!["0".into(), "1".into()],
        Some(groups),
        vec!["0".into(), "1".into()],
        vec!["x1".into(), "x2".into()],
    )
}

/// Column selection for [`load_csv`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label_column: String,
    /// Several columns form intersectional groups.
    #[serde(default)]
    pub sensitive_columns: Vec<String>,
    /// Metadata columns skipped entirely.
    #[serde(default)]
    pub exclude_columns: Vec<String>,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            ..Default::default()
        }
    }

    pub fn sensitive(mut self, column: impl Into<String>) -> Self {
        self.sensitive_columns.push(column.into());
        self
    }

    pub fn exclude(mut self, column: impl Into<String>) -> Self {
        self.exclude_columns.push(column.into());
        self
    }
}

/// Reads a headered CSV. Every column other than the label, sensitive and
/// excluded ones must be numeric. Labels get ids in sorted order of their
/// values (numeric order when all parse as numbers); sensitive groups get
/// ids by first appearance.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 0,
            column: name.to_string(),
            message: "column not found in header".into(),
        })
    };
    let label_idx = find(&opts.label_column)?;
    let sens_idx: Vec<usize> = opts
        .sensitive_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    for c in &opts.exclude_columns {
        find(c)?;
    }
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&j| {
            j != label_idx && !sens_idx.contains(&j) && !opts.exclude_columns.contains(&headers[j])
        })
        .collect();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut raw_groups = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for &j in &feature_idx {
            let cell = rec[j].trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: headers[j].clone(),
                message: if cell.is_empty() {
                    "missing value".into()
                } else {
                    format!("non-numeric value `{cell}`")
                },
            })?;
            values.push(v);
        }
        let label = rec[label_idx].trim();
        if label.is_empty() {
            return Err(Error::Parse {
                row,
                column: headers[label_idx].clone(),
                message: "missing label".into(),
            });
        }
        raw_labels.push(label.to_string());
        if !sens_idx.is_empty() {
            let key: Vec<&str> = sens_idx.iter().map(|&j| rec[j].trim()).collect();
            raw_groups.push(key.join("|"));
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::Parse {
            row: 0,
            column: String::new(),
            message: "file contains no data rows".into(),
        });
    }
    let n = raw_labels.len();
    let features = Array2::from_shape_vec((n, feature_idx.len()), values)
        .map_err(|e| Error::Data(e.to_string()))?;

    let mut label_names: Vec<String> = raw_labels.clone();
    label_names.sort();
    label_names.dedup();
    let numeric: Option<Vec<f64>> = label_names.iter().map(|s| s.parse().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(label_names).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        label_names = pairs.into_iter().map(|p| p.1).collect();
    }
    let label_ids: HashMap<&str, usize> = label_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let labels = raw_labels.iter().map(|s| label_ids[s.as_str()]).collect();

    let (sensitive, group_names) = if sens_idx.is_empty() {
        (None, Vec::new())
    } else {
        let (ids, names) = first_appearance_ids(&raw_groups);
        (Some(ids), names)
    };

    Dataset::with_names(
        features,
        labels,
        label_names,
        sensitive,
        group_names,
        feature_idx.iter().map(|&j| headers[j].clone()).collect(),
    )
}

fn first_appearance_ids(values: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let ids = values
        .iter()
        .map(|v| {
            *index.entry(v.clone()).or_insert_with(|| {
                names.push(v.clone());
                names.len() - 1
            })
        })
        .collect();
    (ids, names)
}

/// Split proportions: `test_fraction` of all rows, then
/// `val_fraction_of_train` of the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction_of_train: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(test_fraction: f64, val_fraction_of_train: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            test_fraction,
            val_fraction_of_train,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("test_fraction", self.test_fraction),
            ("val_fraction_of_train", self.val_fraction_of_train),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return invalid(format!("{name} must lie strictly in (0, 1), got {f}"));
            }
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.3,
            val_fraction_of_train: 0.2,
            seed: 0,
        }
    }
}

/// The three parts of a split together with their source indices.
#[derive(Debug, Clone)]
pub struct SplitSets {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl SplitSets {
    /// Fits the z-score transform on the training part and replays it onto
    /// validation and test.
    pub fn standardize(&self) -> SplitSets {
        let t = Standardization::fit(self.train.features());
        let apply = |d: &Dataset| d.apply_standardization(&t).expect("same columns");
        SplitSets {
            train: apply(&self.train),
            val: apply(&self.val),
            test: apply(&self.test),
            ..self.clone()
        }
    }
}

/// Label-stratified three-way split, reproducible under `spec.seed`. Part
/// sizes are exact roundings of the requested fractions; per-class shares
/// are assigned by largest remainder.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<SplitSets> {
    spec.validate()?;
    let n = ds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for (i, &y) in ds.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    for idx in by_class.iter_mut() {
        idx.shuffle(&mut rng);
    }

    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let test_counts = apportion(&counts, n_test);
    let rest: Vec<usize> = counts.iter().zip(&test_counts).map(|(c, t)| c - t).collect();
    let n_val = ((n - n_test) as f64 * spec.val_fraction_of_train).round() as usize;
    let val_counts = apportion(&rest, n_val);

    let (mut train_idx, mut val_idx, mut test_idx) = (Vec::new(), Vec::new(), Vec::new());
    for (c, idx) in by_class.iter().enumerate() {
        let (t, v) = (test_counts[c], val_counts[c]);
        test_idx.extend_from_slice(&idx[..t]);
        val_idx.extend_from_slice(&idx[t..t + v]);
        train_idx.extend_from_slice(&idx[t + v..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    test_idx.sort_unstable();

    if train_idx.len() < 2 || val_idx.is_empty() || test_idx.is_empty() {
        return invalid(format!(
            "degenerate split of {n} rows: train {}, val {}, test {}",
            train_idx.len(),
            val_idx.len(),
            test_idx.len()
        ));
    }
    let train = ds.subset(&train_idx);
    if train.distinct_labels() < 2 {
        return invalid("training part contains a single class");
    }
    Ok(SplitSets {
        val: ds.subset(&val_idx),
        test: ds.subset(&test_idx),
        train,
        train_idx,
        val_idx,
        test_idx,
    })
}

/// Distributes `total` over buckets proportionally to `sizes` (largest
/// remainder, ties to the lower bucket index), never exceeding a bucket.
fn apportion(sizes: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    if sum == 0 {
        return vec![0; sizes.len()];
    }
    let total = total.min(sum);
    let exact: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 * total as f64 / sum as f64)
        .collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if out[k] < sizes[k] {
            out[k] += 1;
            remaining -= 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn toy_group_proportions() {
        let ds = generate_toy(1000, 7).unwrap();
        let s = ds.sensitive().unwrap();
        let maj = s.iter().filter(|&&g| g == 1).count() as f64 / 1000.0;
        assert!((maj - 0.9).abs() <= 0.03, "majority share {maj}");
    }

    #[test]
    fn toy_majority_positive_mean() {
        let ds = generate_toy(1000, 7).unwrap();
        let s = ds.sensitive().unwrap();
        let xs: Vec<f64> = (0..ds.len())
            .filter(|&i| s[i] == 1 && ds.labels()[i] == 1)
            .map(|i| ds.features()[[i, 0]])
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 6.0).abs() <= 0.2, "mean {mean}");
    }

    #[test]
    fn toy_is_deterministic() {
        assert_eq!(generate_toy(10, 0).unwrap(), generate_toy(10, 0).unwrap());
        assert!(generate_toy(9, 0).is_err());
    }

    #[test]
    fn toy_conditional_means_large_sample() {
        let ds = generate_toy(100_000, 11).unwrap();
        let s = ds.sensitive().unwrap();
        let expected = [
            ((1, 1), [6.0, 0.0]),
            ((1, 0), [2.0, 0.0]),
            ((0, 1), [-4.0, 2.0]),
            ((0, 0), [-2.0, 0.0]),
        ];
        for ((g, y), mean) in expected {
            let rows: Vec<usize> = (0..ds.len())
                .filter(|&i| s[i] == g && ds.labels()[i] == y)
                .collect();
            for j in 0..2 {
                let m = rows.iter().map(|&i| ds.features()[[i, j]]).sum::<f64>() / rows.len() as f64;
                assert!((m - mean[j]).abs() < 0.05, "group {g} label {y} dim {j}: {m}");
            }
        }
    }

    #[test]
    fn standardize_arithmetic() {
        let ds = Dataset::new(array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]], vec![0, 1, 0], 2, None).unwrap();
        let z = standardize(&ds);
        let f = z.features();
        assert_abs_diff_eq!(f[[0, 0]], -1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(f[[1, 0]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[[2, 0]], 1.224744871391589, epsilon = 1e-12);
        assert_eq!(f.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert!(z.standardization().unwrap().constant[1]);

        let again = standardize(&z);
        for (a, b) in again.features().iter().zip(z.features().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn standardized_moments() {
        let ds = standardize(&generate_toy(500, 3).unwrap());
        for col in ds.features().axis_iter(Axis(1)) {
            let n = col.len() as f64;
            let m = col.sum() / n;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(v.sqrt(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn replayed_transform_matches() {
        let ds = generate_toy(200, 5).unwrap();
        let z = standardize(&ds);
        let replay = ds.apply_standardization(z.standardization().unwrap()).unwrap();
        assert_eq!(replay.features(), z.features());
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = generate_toy(1000, 1).unwrap();
        let spec = SplitSpec::new(0.3, 0.2, 42).unwrap();
        let sets = split(&ds, &spec).unwrap();
        assert_eq!((sets.train.len(), sets.val.len(), sets.test.len()), (560, 140, 300));
        let mut all: Vec<usize> = sets
            .train_idx
            .iter()
            .chain(&sets.val_idx)
            .chain(&sets.test_idx)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());

        let again = split(&ds, &spec).unwrap();
        assert_eq!(sets.train_idx, again.train_idx);
        assert_eq!(sets.test_idx, again.test_idx);
    }

    #[test]
    fn split_rejects_single_class() {
        let ds = Dataset::new(array![[0.0], [1.0], [2.0]], vec![0, 0, 0], 1, None).unwrap();
        assert!(split(&ds, &SplitSpec::new(0.3, 0.2, 0).unwrap()).is_err());
        assert!(SplitSpec::new(1.0, 0.2, 0).is_err());
    }

    #[test]
    fn csv_basic_parse() {
        let f = write_tmp("a,b,y\n1,2,0\n3,4,1\n5,6,0\n");
        let ds = load_csv(f.path(), &CsvOptions::new("y")).unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 2));
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn csv_missing_label_column() {
        let f = write_tmp("a,b\n1,2\n");
        let err = load_csv(f.path(), &CsvOptions::new("y")).unwrap_err();
        assert!(err.to_string().contains("`y`"), "{err}");
    }

    #[test]
    fn csv_group_ids_first_appearance() {
        let f = write_tmp("a,race,y\n1,w,0\n2,b,1\n3,w,1\n4,a,0\n");
        let ds = load_csv(f.path(), &CsvOptions::new("y").sensitive("race")).unwrap();
        assert_eq!(ds.sensitive().unwrap(), &[0, 1, 0, 2]);
        assert_eq!(ds.group_names(), &["w".to_string(), "b".into(), "a".into()]);
        assert_eq!(ds.dim(), 1);
    }

    #[test]
    fn csv_intersectional_groups() {
        let f = write_tmp("a,r,g,y\n1,w,m,0\n2,w,f,1\n3,w,m,1\n4,b,f,0\n");
        let ds = load_csv(f.path(), &CsvOptions::new("y").sensitive("r").sensitive("g")).unwrap();
        assert_eq!(ds.sensitive().unwrap(), &[0, 1, 0, 2]);
        assert_eq!(ds.n_groups(), 3);
    }

    #[test]
    fn csv_errors_locate_cell() {
        let f = write_tmp("a,b,y\n1,2,0\n3,oops,1\n");
        match load_csv(f.path(), &CsvOptions::new("y")).unwrap_err() {
            Error::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (2, "b")),
            e => panic!("unexpected {e}"),
        }
        let f = write_tmp("a,b,y\n1,,0\n");
        assert!(load_csv(f.path(), &CsvOptions::new("y")).is_err());
        let f = write_tmp("a,b,y\n");
        assert!(load_csv(f.path(), &CsvOptions::new("y")).is_err());
    }

    #[test]
    fn csv_exclusion_and_roundtrip() {
        let ds = generate_toy(20, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("toy.csv");
        ds.write_csv(&p).unwrap();
        let back = load_csv(&p, &CsvOptions::new("y").exclude("s")).unwrap();
        assert_eq!(back.dim(), 2);
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.features(), ds.features());
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(&[497, 503], 300).iter().sum::<usize>(), 300);
        assert_eq!(apportion(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(apportion(&[0, 4], 3), vec![0, 3]);
    }
}
