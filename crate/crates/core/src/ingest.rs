//! Count matrices, quantification-unit conversions and the log transform.
//!
//! Raw data enter as a gene × sample matrix of nonnegative counts with a
//! group label per sample. The model consumes natural-log expression values;
//! a pseudocount is added to the raw counts first, then the requested unit
//! conversion is applied, then the log. Applying the pseudocount before the
//! conversion keeps log values for different units apart by exact per-sample
//! or per-gene constants, which the model absorbs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Quantification unit of an expression matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Counts,
    Cpm,
    Rpkm,
    Tpm,
}

impl Unit {
    pub fn needs_lengths(self) -> bool {
        matches!(self, Unit::Rpkm | Unit::Tpm)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Counts => "counts",
            Unit::Cpm => "cpm",
            Unit::Rpkm => "rpkm",
            Unit::Tpm => "tpm",
        };
        f.write_str(s)
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "counts" => Ok(Unit::Counts),
            "cpm" => Ok(Unit::Cpm),
            "rpkm" | "fpkm" => Ok(Unit::Rpkm),
            "tpm" => Ok(Unit::Tpm),
            other => Err(Error::InvalidInput(format!("unknown unit '{other}'"))),
        }
    }
}

/// Raw gene × sample counts with group labels and optional gene lengths.
///
/// Counts may be non-integer (estimated counts from upstream quantifiers are
/// accepted) but must be nonnegative and finite. Group indices are 1-based
/// and every index in `1..=S` must appear at least once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMatrix {
    pub gene_ids: Vec<String>,
    pub counts: Array2<f64>,
    /// 1-based group index per sample (column).
    pub group_of_sample: Vec<usize>,
    /// Effective gene length in nucleotides, when known.
    pub gene_lengths: Option<Vec<f64>>,
}

impl CountMatrix {
    pub fn new(
        gene_ids: Vec<String>,
        counts: Array2<f64>,
        group_of_sample: Vec<usize>,
        gene_lengths: Option<Vec<f64>>,
    ) -> Result<Self> {
        let (m, n) = counts.dim();
        if m == 0 || n == 0 {
            return Err(Error::InvalidInput(
                "count matrix must have at least 1 gene and 1 sample".into(),
            ));
        }
        if gene_ids.len() != m {
            return Err(Error::InvalidInput(format!(
                "{} gene ids for {} rows",
                gene_ids.len(),
                m
            )));
        }
        if group_of_sample.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} group labels for {} samples",
                group_of_sample.len(),
                n
            )));
        }
        for (idx, &c) in counts.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                let (i, j) = (idx / n, idx % n);
                return Err(Error::InvalidInput(format!(
                    "count for gene {} sample {} is {}; counts must be finite and >= 0",
                    gene_ids[i], j, c
                )));
            }
        }
        let s = *group_of_sample.iter().max().unwrap();
        if group_of_sample.iter().any(|&g| g == 0) {
            return Err(Error::InvalidInput("group indices are 1-based".into()));
        }
        for g in 1..=s {
            if !group_of_sample.contains(&g) {
                return Err(Error::InvalidInput(format!(
                    "group {g} has no samples (indices must cover 1..={s})"
                )));
            }
        }
        if let Some(lengths) = &gene_lengths {
            if lengths.len() != m {
                return Err(Error::InvalidInput(format!(
                    "{} gene lengths for {} genes",
                    lengths.len(),
                    m
                )));
            }
            for (i, &l) in lengths.iter().enumerate() {
                if !(l > 0.0) || !l.is_finite() {
                    return Err(Error::NonPositiveLength {
                        gene: gene_ids[i].clone(),
                    });
                }
            }
        }
        Ok(CountMatrix {
            gene_ids,
            counts,
            group_of_sample,
            gene_lengths,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.counts.ncols()
    }

    /// Number of groups S.
    pub fn n_groups(&self) -> usize {
        *self.group_of_sample.iter().max().unwrap()
    }
}

/// Log-transformed expression values ready for model fitting.
///
/// The unit and pseudocount are recorded so any fit is reproducible from the
/// raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogExpressionMatrix {
    pub gene_ids: Vec<String>,
    pub values: Array2<f64>,
    pub unit: Unit,
    pub pseudocount: f64,
    pub group_of_sample: Vec<usize>,
}

impl LogExpressionMatrix {
    pub fn n_genes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_groups(&self) -> usize {
        *self.group_of_sample.iter().max().unwrap()
    }

    /// Column indices of group `s` (1-based), in matrix order.
    pub fn columns_of_group(&self, s: usize) -> Vec<usize> {
        self.group_of_sample
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == s)
            .map(|(j, _)| j)
            .collect()
    }

    /// Sample count per group, indexed by group - 1.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_groups()];
        for &g in &self.group_of_sample {
            sizes[g - 1] += 1;
        }
        sizes
    }
}

/// Counts per million for one sample column: `cpm_i = 1e6 * c_i / sum(c)`.
pub fn to_cpm(column: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = column.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyLibrary { column: 0 });
    }
    Ok(column.iter().map(|&c| 1e6 * c / total).collect())
}

/// Reads per kilobase per million: `rpkm_i = 1e3 * cpm_i / l_i`.
pub fn to_rpkm(cpm: &[f64], lengths: &[f64]) -> Result<Vec<f64>> {
    if cpm.len() != lengths.len() {
        return Err(Error::InvalidInput(format!(
            "{} cpm values for {} lengths",
            cpm.len(),
            lengths.len()
        )));
    }
    cpm.iter()
        .zip(lengths)
        .enumerate()
        .map(|(i, (&v, &l))| {
            if l > 0.0 {
                Ok(1e3 * v / l)
            } else {
                Err(Error::NonPositiveLength {
                    gene: format!("row {i}"),
                })
            }
        })
        .collect()
}

/// Transcripts per million: `tpm_i = 1e6 * rpkm_i / sum(rpkm)`.
pub fn to_tpm(rpkm: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = rpkm.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyLibrary { column: 0 });
    }
    Ok(rpkm.iter().map(|&v| 1e6 * v / total).collect())
}

/// Convert one pseudocounted column to the requested unit.
pub fn convert_column(column: &[f64], unit: Unit, lengths: Option<&[f64]>) -> Result<Vec<f64>> {
    match unit {
        Unit::Counts => Ok(column.to_vec()),
        Unit::Cpm => to_cpm(column),
        Unit::Rpkm => {
            let lengths = lengths.ok_or_else(|| Error::MissingLengths {
                unit: unit.to_string(),
            })?;
            to_rpkm(&to_cpm(column)?, lengths)
        }
        Unit::Tpm => {
            let lengths = lengths.ok_or_else(|| Error::MissingLengths {
                unit: unit.to_string(),
            })?;
            to_tpm(&to_rpkm(&to_cpm(column)?, lengths)?)
        }
    }
}

/// Pseudocount the raw counts, convert to `unit` and take natural logs.
pub fn log_transform(cm: &CountMatrix, unit: Unit, pseudocount: f64) -> Result<LogExpressionMatrix> {
    if !pseudocount.is_finite() || pseudocount < 0.0 {
        return Err(Error::InvalidInput(format!(
            "pseudocount must be finite and >= 0, got {pseudocount}"
        )));
    }
    if unit.needs_lengths() && cm.gene_lengths.is_none() {
        return Err(Error::MissingLengths {
            unit: unit.to_string(),
        });
    }
    let (m, n) = cm.counts.dim();
    let mut values = Array2::zeros((m, n));
    for j in 0..n {
        let column: Vec<f64> = (0..m).map(|i| cm.counts[[i, j]] + pseudocount).collect();
        let converted =
            convert_column(&column, unit, cm.gene_lengths.as_deref()).map_err(|e| match e {
                Error::EmptyLibrary { .. } => Error::EmptyLibrary { column: j },
                other => other,
            })?;
        for i in 0..m {
            let v = converted[i];
            if !(v > 0.0) {
                return Err(Error::NonPositiveUnderLog {
                    gene: cm.gene_ids[i].clone(),
                    sample: j,
                });
            }
            values[[i, j]] = v.ln();
        }
    }
    Ok(LogExpressionMatrix {
        gene_ids: cm.gene_ids.clone(),
        values,
        unit,
        pseudocount,
        group_of_sample: cm.group_of_sample.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn two_group_matrix(counts: Array2<f64>, lengths: Option<Vec<f64>>) -> CountMatrix {
        let m = counts.nrows();
        let n = counts.ncols();
        let ids = (0..m).map(|i| format!("g{i}")).collect();
        let groups = (0..n).map(|j| if j < n / 2 { 1 } else { 2 }).collect();
        CountMatrix::new(ids, counts, groups, lengths).unwrap()
    }

    #[test]
    fn cpm_direct_values() {
        let out = to_cpm(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(out, vec![250_000.0, 250_000.0, 500_000.0]);
    }

    #[test]
    fn cpm_equal_counts_are_uniform() {
        let out = to_cpm(&[7.0; 8]).unwrap();
        for v in out {
            assert!((v - 1e6 / 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cpm_matches_scalar_recomputation() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let column: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..500.0)).collect();
        let out = to_cpm(&column).unwrap();
        let mut total = 0.0;
        for &c in &column {
            total += c;
        }
        for (i, &c) in column.iter().enumerate() {
            let expect = 1e6 * c / total;
            assert!((out[i] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
        let sum: f64 = out.iter().sum();
        assert!((sum - 1e6).abs() <= 1e-12 * 1e6);
    }

    #[test]
    fn cpm_rejects_empty_library() {
        assert!(matches!(
            to_cpm(&[0.0, 0.0]),
            Err(Error::EmptyLibrary { .. })
        ));
    }

    #[test]
    fn rpkm_identity_at_kilobase_length() {
        let cpm = vec![12.0, 88.0, 3.5];
        let out = to_rpkm(&cpm, &[1000.0, 1000.0, 1000.0]).unwrap();
        assert_eq!(out, cpm);
    }

    #[test]
    fn rpkm_direct_value() {
        let out = to_rpkm(&[500.0], &[2000.0]).unwrap();
        assert_eq!(out, vec![250.0]);
    }

    #[test]
    fn rpkm_rejects_nonpositive_length() {
        assert!(matches!(
            to_rpkm(&[1.0, 2.0], &[100.0, 0.0]),
            Err(Error::NonPositiveLength { .. })
        ));
    }

    #[test]
    fn rpkm_matches_scalar_recomputation() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let cpm: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1e4)).collect();
        let lengths: Vec<f64> = (0..200).map(|_| rng.random_range(100.0..1e5)).collect();
        let out = to_rpkm(&cpm, &lengths).unwrap();
        for i in 0..200 {
            let expect = 1e3 * cpm[i] / lengths[i];
            assert!((out[i] - expect).abs() <= 1e-12 * expect.abs().max(1e-12));
        }
    }

    #[test]
    fn tpm_uniform_and_direct() {
        let out = to_tpm(&[5.0; 4]).unwrap();
        for v in out {
            assert!((v - 250_000.0).abs() < 1e-9);
        }
        let out = to_tpm(&[1.0, 3.0]).unwrap();
        assert_eq!(out, vec![250_000.0, 750_000.0]);
    }

    #[test]
    fn unit_pipeline_sums_to_a_million() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let counts: Vec<f64> = (0..300).map(|_| rng.random_range(0.0f64..200.0).round()).collect();
        let lengths: Vec<f64> = (0..300).map(|_| rng.random_range(200.0..5e4)).collect();
        let cpm = to_cpm(&counts).unwrap();
        let rpkm = to_rpkm(&cpm, &lengths).unwrap();
        let tpm = to_tpm(&rpkm).unwrap();
        let sum: f64 = tpm.iter().sum();
        assert!((sum - 1e6).abs() <= 1e-12 * 1e6);
    }

    #[test]
    fn log_transform_zero_count_unit_pseudocount() {
        let cm = two_group_matrix(array![[0.0, 4.0], [3.0, 1.0]], None);
        let x = log_transform(&cm, Unit::Counts, 1.0).unwrap();
        assert_eq!(x.values[[0, 0]], 0.0); // ln(0 + 1)
        assert!((x.values[[1, 0]] - 4.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_transform_zero_pseudocount_rejects_zero_count() {
        let cm = two_group_matrix(array![[0.0, 4.0], [3.0, 1.0]], None);
        let err = log_transform(&cm, Unit::Counts, 0.0).unwrap_err();
        assert!(matches!(err, Error::NonPositiveUnderLog { .. }));
    }

    #[test]
    fn log_transform_matches_hand_scripted_conversion() {
        // Fixed 5x3 matrix; one group per spec minimum is not needed here,
        // grouping is irrelevant to the transform itself.
        let counts = array![
            [0.0, 2.0, 10.0],
            [5.0, 5.0, 5.0],
            [9.0, 0.0, 1.0],
            [2.0, 7.0, 3.0],
            [4.0, 6.0, 1.0]
        ];
        let lengths = vec![500.0, 1500.0, 800.0, 1200.0, 2500.0];
        let ids: Vec<String> = (0..5).map(|i| format!("g{i}")).collect();
        let cm = CountMatrix::new(ids, counts.clone(), vec![1, 1, 2], Some(lengths.clone())).unwrap();
        let x = log_transform(&cm, Unit::Tpm, 1.0).unwrap();
        for j in 0..3 {
            let pseudocounted: Vec<f64> = (0..5).map(|i| counts[[i, j]] + 1.0).collect();
            let total: f64 = pseudocounted.iter().sum();
            let rpk: Vec<f64> = (0..5)
                .map(|i| 1e3 * (1e6 * pseudocounted[i] / total) / lengths[i])
                .collect();
            let rpk_total: f64 = rpk.iter().sum();
            for i in 0..5 {
                let expect = (1e6 * rpk[i] / rpk_total).ln();
                assert!(
                    (x.values[[i, j]] - expect).abs() < 1e-12,
                    "mismatch at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn log_transform_needs_lengths_for_length_units() {
        let cm = two_group_matrix(array![[1.0, 2.0], [3.0, 4.0]], None);
        assert!(matches!(
            log_transform(&cm, Unit::Rpkm, 1.0),
            Err(Error::MissingLengths { .. })
        ));
    }

    #[test]
    fn count_matrix_validates_groups() {
        let err = CountMatrix::new(
            vec!["a".into(), "b".into()],
            array![[1.0, 2.0], [3.0, 4.0]],
            vec![1, 3],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    /// Unit decomposition: log(cpm) - log(counts) constant per sample,
    /// log(rpkm) - log(cpm) constant per gene, log(tpm) - log(rpkm) constant
    /// per sample.
    #[test]
    fn unit_decomposition_constants() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let m = 40;
        let n = 6;
        let counts =
            Array2::from_shape_fn((m, n), |_| rng.random_range(0.0f64..2000.0).round());
        let lengths: Vec<f64> = (0..m).map(|_| rng.random_range(300.0..3e4)).collect();
        let ids: Vec<String> = (0..m).map(|i| format!("g{i}")).collect();
        let groups: Vec<usize> = (0..n).map(|j| if j < 3 { 1 } else { 2 }).collect();
        let cm = CountMatrix::new(ids, counts, groups, Some(lengths)).unwrap();

        let x_counts = log_transform(&cm, Unit::Counts, 1.0).unwrap();
        let x_cpm = log_transform(&cm, Unit::Cpm, 1.0).unwrap();
        let x_rpkm = log_transform(&cm, Unit::Rpkm, 1.0).unwrap();
        let x_tpm = log_transform(&cm, Unit::Tpm, 1.0).unwrap();

        // per-sample constants
        for (a, b) in [(&x_cpm, &x_counts), (&x_tpm, &x_rpkm)] {
            for j in 0..n {
                let c0 = a.values[[0, j]] - b.values[[0, j]];
                for i in 1..m {
                    let c = a.values[[i, j]] - b.values[[i, j]];
                    assert!((c - c0).abs() < 1e-10, "sample constant failed at ({i},{j})");
                }
            }
        }
        // per-gene constant
        for i in 0..m {
            let c0 = x_rpkm.values[[i, 0]] - x_cpm.values[[i, 0]];
            for j in 1..n {
                let c = x_rpkm.values[[i, j]] - x_cpm.values[[i, j]];
                assert!((c - c0).abs() < 1e-10, "gene constant failed at ({i},{j})");
            }
        }
    }

    proptest! {
        /// log_transform is strictly monotone in each count, others fixed.
        #[test]
        fn log_monotone_in_counts(base in 0.0f64..100.0, bump in 0.5f64..50.0) {
            let cm = two_group_matrix(array![[base, 2.0], [3.0, 1.0]], None);
            let cm_bumped = two_group_matrix(array![[base + bump, 2.0], [3.0, 1.0]], None);
            let a = log_transform(&cm, Unit::Counts, 1.0).unwrap();
            let b = log_transform(&cm_bumped, Unit::Counts, 1.0).unwrap();
            prop_assert!(b.values[[0, 0]] > a.values[[0, 0]]);
            prop_assert_eq!(a.values[[1, 0]], b.values[[1, 0]]);
        }

        /// CPM and TPM columns always sum to 1e6 (relative 1e-12).
        #[test]
        fn cpm_tpm_sum_invariant(seed in 0u64..500) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let m = rng.random_range(2usize..40);
            let column: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1e4)).collect();
            prop_assume!(column.iter().sum::<f64>() > 0.0);
            let cpm = to_cpm(&column).unwrap();
            let s: f64 = cpm.iter().sum();
            prop_assert!((s - 1e6).abs() <= 1e-12 * 1e6);
            let lengths: Vec<f64> = (0..m).map(|_| rng.random_range(100.0..1e4)).collect();
            let tpm = to_tpm(&to_rpkm(&cpm, &lengths).unwrap()).unwrap();
            let s: f64 = tpm.iter().sum();
            prop_assert!((s - 1e6).abs() <= 1e-12 * 1e6);
        }
    }
}
