//! Observational datasets: ingestion, validation, splitting, and moments.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// A fully observed dataset `(Y_i, W_i, X_i)` with binary treatment.
///
/// All fields are immutable after construction; every entry of `features`
/// and `outcome` is finite and every treatment indicator is 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalDataset {
    pub features: Array2<f64>,
    pub treatment: Vec<u8>,
    pub outcome: Array1<f64>,
    pub feature_names: Vec<String>,
}

impl ObservationalDataset {
    pub fn new(
        features: Array2<f64>,
        treatment: Vec<u8>,
        outcome: Array1<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if treatment.len() != n || outcome.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "features have {n} rows but treatment has {} entries and outcome {}",
                treatment.len(),
                outcome.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        for (row, &w) in treatment.iter().enumerate() {
            if w > 1 {
                return Err(Error::NonBinaryTreatment {
                    row: row + 1,
                    value: w.to_string(),
                });
            }
        }
        for (i, v) in outcome.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: i + 1,
                    column: "outcome".into(),
                    value: v.to_string(),
                });
            }
        }
        for ((i, j), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: i + 1,
                    column: feature_names[j].clone(),
                    value: v.to_string(),
                });
            }
        }
        Ok(Self {
            features,
            treatment,
            outcome,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&w| w == 1).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// Row indices of one arm, in dataset order.
    pub fn arm_indices(&self, treated: bool) -> Vec<usize> {
        let want = u8::from(treated);
        self.treatment
            .iter()
            .enumerate()
            .filter(|(_, &w)| w == want)
            .map(|(i, _)| i)
            .collect()
    }

    /// Feature matrix and outcomes of one arm, in dataset order.
    pub fn arm(&self, treated: bool) -> (Array2<f64>, Array1<f64>) {
        let idx = self.arm_indices(treated);
        let x = select_rows(&self.features.view(), &idx);
        let y = Array1::from_iter(idx.iter().map(|&i| self.outcome[i]));
        (x, y)
    }

    /// A new dataset restricted to the given row indices (kept in order).
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: select_rows(&self.features.view(), indices),
            treatment: indices.iter().map(|&i| self.treatment[i]).collect(),
            outcome: Array1::from_iter(indices.iter().map(|&i| self.outcome[i])),
            feature_names: self.feature_names.clone(),
        }
    }
}

pub fn select_rows(x: &ArrayView2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((indices.len(), x.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}

/// Column means of the targeted population's features.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMoments {
    pub means: Array1<f64>,
}

/// Per-column affine map `x -> (x - center) / scale`.
///
/// Constant columns get scale 1 so the transform is always invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationTransform {
    pub center: Array1<f64>,
    pub scale: Array1<f64>,
}

impl StandardizationTransform {
    pub fn identity(d: usize) -> Self {
        Self {
            center: Array1::zeros(d),
            scale: Array1::ones(d),
        }
    }

    pub fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for j in 0..row.len() {
                row[j] = (row[j] - self.center[j]) / self.scale[j];
            }
        }
        out
    }

    pub fn invert(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for j in 0..row.len() {
                row[j] = row[j] * self.scale[j] + self.center[j];
            }
        }
        out
    }
}

/// Column-name mapping for CSV ingestion. Any column that is neither the
/// outcome nor the treatment is a feature unless an explicit list is given.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub outcome: String,
    pub treatment: String,
    pub features: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            outcome: "y".into(),
            treatment: "w".into(),
            features: None,
        }
    }
}

/// Parse a UTF-8, comma-separated, header-first table into a dataset.
///
/// Rows in errors are 1-based data rows (the header is row 0).
pub fn load_dataset<R: BufRead>(reader: R, schema: &CsvSchema) -> Result<ObservationalDataset> {
    let mut lines = reader.lines();
    let header_line = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::EmptyInput("no header row")),
    };
    let header: Vec<String> = header_line.split(',').map(|s| s.trim().to_string()).collect();

    let col_of = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let outcome_col = col_of(&schema.outcome)?;
    let treatment_col = col_of(&schema.treatment)?;

    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names
            .iter()
            .map(|n| col_of(n))
            .collect::<Result<Vec<_>>>()?,
        None => (0..header.len())
            .filter(|&j| j != outcome_col && j != treatment_col)
            .collect(),
    };
    let feature_names: Vec<String> = feature_cols.iter().map(|&j| header[j].clone()).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut treatment: Vec<u8> = Vec::new();
    let mut outcome: Vec<f64> = Vec::new();

    for (data_row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = data_row + 1;
        let cells: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if cells.len() != header.len() {
            return Err(Error::DimensionMismatch(format!(
                "data row {row} has {} cells, header has {}",
                cells.len(),
                header.len()
            )));
        }
        let parse_cell = |j: usize| -> Result<f64> {
            let raw = cells[j];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonFiniteValue {
                    row,
                    column: header[j].clone(),
                    value: raw.to_string(),
                }),
            }
        };

        let w_raw = cells[treatment_col];
        let w = match w_raw.parse::<f64>() {
            Ok(v) if v == 0.0 || v == 1.0 => v as u8,
            _ => {
                return Err(Error::NonBinaryTreatment {
                    row,
                    value: w_raw.to_string(),
                })
            }
        };
        treatment.push(w);
        outcome.push(parse_cell(outcome_col)?);
        let mut feat_row = Vec::with_capacity(feature_cols.len());
        for &j in &feature_cols {
            feat_row.push(parse_cell(j)?);
        }
        rows.push(feat_row);
    }

    let n = rows.len();
    let d = feature_cols.len();
    let mut features = Array2::<f64>::zeros((n, d));
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            features[[i, j]] = v;
        }
    }
    ObservationalDataset::new(features, treatment, Array1::from_vec(outcome), feature_names)
}

pub fn load_dataset_path<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<ObservationalDataset> {
    load_dataset(BufReader::new(File::open(path)?), schema)
}

/// Write the dataset with header `y,w,<feature names>`.
///
/// Floats are written with the shortest representation that parses back to
/// the same bits, so a save/load round trip is exact.
pub fn save_dataset<W: Write>(ds: &ObservationalDataset, mut writer: W) -> Result<()> {
    write!(writer, "y,w")?;
    for name in &ds.feature_names {
        write!(writer, ",{name}")?;
    }
    writeln!(writer)?;
    for i in 0..ds.n() {
        write!(writer, "{},{}", ds.outcome[i], ds.treatment[i])?;
        for j in 0..ds.d() {
            write!(writer, ",{}", ds.features[[i, j]])?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

pub fn save_dataset_path<P: AsRef<Path>>(ds: &ObservationalDataset, path: P) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save_dataset(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Disjoint uniform-random partition of `0..n`: `(train, test)`, each sorted.
pub fn split_indices(n: usize, test_count: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if test_count == 0 || test_count >= n {
        return Err(Error::InvalidSplit { test_count, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let mut test: Vec<usize> = perm[..test_count].to_vec();
    let mut train: Vec<usize> = perm[test_count..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset(
    ds: &ObservationalDataset,
    test_count: usize,
    seed: u64,
) -> Result<(ObservationalDataset, ObservationalDataset)> {
    let (train_idx, test_idx) = split_indices(ds.n(), test_count, seed)?;
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

/// Column means of a feature matrix (the balancing target over `I_T`).
pub fn target_moments(features: &ArrayView2<f64>) -> Result<TargetMoments> {
    let m = features.nrows();
    if m == 0 {
        return Err(Error::EmptyInput("target_moments on an empty matrix"));
    }
    let means = features.sum_axis(ndarray::Axis(0)) / m as f64;
    Ok(TargetMoments { means })
}

/// Center and scale of each feature column: mean and sample (n-1) standard
/// deviation, with constant columns given scale 1.
pub fn standardization_for(features: &ArrayView2<f64>) -> StandardizationTransform {
    let n = features.nrows();
    let d = features.ncols();
    let mut center = Array1::<f64>::zeros(d);
    let mut scale = Array1::<f64>::ones(d);
    if n == 0 {
        return StandardizationTransform { center, scale };
    }
    for j in 0..d {
        let col = features.column(j);
        let mean = col.sum() / n as f64;
        center[j] = mean;
        if n > 1 {
            let ss: f64 = col.iter().map(|&v| (v - mean) * (v - mean)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            if sd > 0.0 {
                scale[j] = sd;
            }
        }
    }
    StandardizationTransform { center, scale }
}

/// Standardize every feature column of a dataset; the outcome and treatment
/// are left untouched.
pub fn standardize(
    ds: &ObservationalDataset,
) -> (ObservationalDataset, StandardizationTransform) {
    let t = standardization_for(&ds.features.view());
    let ds2 = ObservationalDataset {
        features: t.apply(&ds.features.view()),
        treatment: ds.treatment.clone(),
        outcome: ds.outcome.clone(),
        feature_names: ds.feature_names.clone(),
    };
    (ds2, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn toy_csv() -> &'static str {
        "y,w,x1,x2\n1.5,1,0.1,2.0\n-0.5,0,1.25,-3.5\n2.0,1,0.0,0.0\n0.25,0,-1.0,4.0\n"
    }

    #[test]
    fn load_parses_four_row_file() {
        let ds = load_dataset(toy_csv().as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.treatment, vec![1, 0, 1, 0]);
        assert_eq!(ds.feature_names, vec!["x1", "x2"]);
        assert_abs_diff_eq!(ds.features[[1, 0]], 1.25);
    }

    #[test]
    fn load_honors_feature_subset_in_listed_order() {
        let schema = CsvSchema {
            features: Some(vec!["x2".into(), "x1".into()]),
            ..CsvSchema::default()
        };
        let ds = load_dataset(toy_csv().as_bytes(), &schema).unwrap();
        assert_eq!(ds.feature_names, vec!["x2", "x1"]);
        assert_abs_diff_eq!(ds.features[[0, 0]], 2.0);
        assert_abs_diff_eq!(ds.features[[0, 1]], 0.1);
    }

    #[test]
    fn load_rejects_nonbinary_treatment_with_row() {
        let csv = "y,w,x1\n1.0,0,0.5\n1.0,1,0.5\n1.0,2,0.5\n";
        match load_dataset(csv.as_bytes(), &CsvSchema::default()) {
            Err(Error::NonBinaryTreatment { row, value }) => {
                assert_eq!(row, 3);
                assert_eq!(value, "2");
            }
            other => panic!("expected NonBinaryTreatment, got {other:?}"),
        }
    }

    #[test]
    fn load_reports_missing_column_and_bad_cell() {
        let err = load_dataset(toy_csv().as_bytes(), &CsvSchema {
            outcome: "outcome".into(),
            ..CsvSchema::default()
        })
        .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "outcome"));

        let csv = "y,w,x1\n1.0,0,nan\n";
        match load_dataset(csv.as_bytes(), &CsvSchema::default()) {
            Err(Error::NonFiniteValue { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "x1");
            }
            other => panic!("expected NonFiniteValue, got {other:?}"),
        }
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..10 {
            let n = rng.random_range(2..40);
            let d = rng.random_range(1..6);
            let features =
                Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2e3 - 1e3);
            let treatment: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let outcome = Array1::from_shape_fn(n, |_| {
                (rng.random::<f64>() - 0.5) * 10f64.powi(rng.random_range(-8..8))
            });
            let names = (0..d).map(|j| format!("x{}", j + 1)).collect();
            let ds = ObservationalDataset::new(features, treatment, outcome, names).unwrap();

            let mut buf = Vec::new();
            save_dataset(&ds, &mut buf).unwrap();
            let ds2 = load_dataset(buf.as_slice(), &CsvSchema::default()).unwrap();
            assert_eq!(ds, ds2);

            let mut buf2 = Vec::new();
            save_dataset(&ds2, &mut buf2).unwrap();
            assert_eq!(buf, buf2);
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let n = 1500;
        let (train, test) = split_indices(n, 500, 11).unwrap();
        assert_eq!(train.len(), 1000);
        assert_eq!(test.len(), 500);
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());

        let again = split_indices(n, 500, 11).unwrap();
        assert_eq!((train.clone(), test.clone()), again);

        let other = split_indices(n, 500, 12).unwrap();
        assert_ne!(test, other.1, "different seeds should give different splits");
    }

    #[test]
    fn split_rejects_out_of_range() {
        assert!(matches!(
            split_indices(10, 10, 0),
            Err(Error::InvalidSplit { .. })
        ));
        assert!(matches!(
            split_indices(10, 0, 0),
            Err(Error::InvalidSplit { .. })
        ));
    }

    #[test]
    fn target_moments_examples() {
        let x = array![[0.0, 2.0], [2.0, 0.0]];
        let m = target_moments(&x.view()).unwrap();
        assert_eq!(m.means, array![1.0, 1.0]);

        let single = array![[3.5, -1.0, 0.25]];
        let m = target_moments(&single.view()).unwrap();
        assert_eq!(m.means, array![3.5, -1.0, 0.25]);

        assert!(matches!(
            target_moments(&Array2::<f64>::zeros((0, 3)).view()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn target_moments_equal_uniform_weight_image() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((37, 5), |_| rng.random::<f64>() * 4.0 - 2.0);
        let m = target_moments(&x.view()).unwrap();
        let n = x.nrows() as f64;
        let uniform = Array1::from_elem(x.nrows(), 1.0 / n);
        let image = x.t().dot(&uniform);
        for j in 0..5 {
            assert_abs_diff_eq!(m.means[j], image[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn column_means_of_standard_normal_draw_are_near_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((1000, 100), |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let m = target_moments(&x.view()).unwrap();
        // CLT band: 3 sigma / sqrt(1000) ~ 0.095, relaxed to 0.15.
        assert!(m.means.iter().all(|v| v.abs() < 0.15));
    }

    #[test]
    fn standardize_examples() {
        let ds = ObservationalDataset::new(
            array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]],
            vec![0, 1, 0],
            array![0.0, 0.0, 0.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let (std_ds, t) = standardize(&ds);
        // Column [1,2,3] has sample sd 1, so it is only centered.
        assert_abs_diff_eq!(std_ds.features[[0, 0]], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(std_ds.features[[1, 0]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(std_ds.features[[2, 0]], 1.0, epsilon = 1e-12);
        // Constant column maps to zeros with scale 1.
        assert_eq!(t.scale[1], 1.0);
        assert!(std_ds.features.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_sd() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((50, 10), |_| rng.random::<f64>() * 9.0 - 3.0);
        let ds = ObservationalDataset::new(
            x,
            vec![0; 50],
            Array1::zeros(50),
            (0..10).map(|j| format!("x{j}")).collect(),
        )
        .unwrap();
        let (std_ds, t) = standardize(&ds);
        for j in 0..10 {
            let col = std_ds.features.column(j);
            let mean = col.sum() / 50.0;
            let sd = (col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / 49.0).sqrt();
            assert!(mean.abs() < 1e-10, "column {j} mean {mean}");
            assert!((sd - 1.0).abs() < 1e-10, "column {j} sd {sd}");
        }
        // Applying then inverting recovers the input.
        let back = t.invert(&std_ds.features.view());
        for (a, b) in back.iter().zip(ds.features.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12 * b.abs().max(1.0));
        }
    }
}
