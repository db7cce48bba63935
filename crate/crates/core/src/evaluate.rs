//! Detection scoring against ground truth: exact AUC with tie handling,
//! ROC curves, a median-normalization + t-statistic baseline, and the
//! replicate benchmark that aggregates AUCs over simulated datasets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fitter;
use crate::ingest::{log_transform, LogExpressionMatrix, Unit};
use crate::simulate::{replicate_seed, simulate, SimScenario};

/// Detection methods the benchmark can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The penalized-likelihood fitter, ranking genes by g_i / alpha_i.
    L0Fit,
    /// Median-of-log-ratios normalization followed by a pooled t statistic.
    MedianTtest,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::L0Fit => "l0_fit",
            Method::MedianTtest => "median_ttest",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l0_fit" | "l0fit" | "fit" => Ok(Method::L0Fit),
            "median_ttest" | "baseline" => Ok(Method::MedianTtest),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// Scores and aggregate AUC for one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub method_label: String,
    /// AUC of the first replicate.
    pub auc: f64,
    /// ROC curve of the first replicate.
    pub roc: Vec<(f64, f64)>,
    pub n_replicates: usize,
    pub mean_auc: f64,
    /// Standard error of the mean AUC (sample sd / sqrt(replicates)).
    pub se_auc: f64,
    pub replicate_aucs: Vec<f64>,
}

fn validate_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores contain NaN".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClassLabels);
    }
    Ok((positives, negatives))
}

/// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie), computed exactly
/// from rank sums with midranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (positives, negatives) = validate_scores(scores, labels)?;
    let m = scores.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0f64;
    let mut k = 0;
    while k < m {
        let mut tie_end = k + 1;
        while tie_end < m && scores[order[tie_end]] == scores[order[k]] {
            tie_end += 1;
        }
        // midrank of the tied block, 1-based ranks
        let midrank = (k + 1 + tie_end) as f64 / 2.0;
        for &idx in &order[k..tie_end] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        k = tie_end;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC curve points from highest score to lowest; starts at (0,0), ends at
/// (1,1), tied scores advance jointly.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (positives, negatives) = validate_scores(scores, labels)?;
    let m = scores.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut k = 0;
    while k < m {
        let mut tie_end = k + 1;
        while tie_end < m && scores[order[tie_end]] == scores[order[k]] {
            tie_end += 1;
        }
        for &idx in &order[k..tie_end] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
        k = tie_end;
    }
    Ok(points)
}

/// Trapezoid area under a ROC polyline.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Baseline scorer: subtract each sample's median log-ratio to the first
/// sample, then score each gene by the absolute pooled-variance two-sample
/// t statistic.
pub fn baseline_median_ttest(x: &LogExpressionMatrix) -> Result<Vec<f64>> {
    if x.n_groups() != 2 {
        return Err(Error::UnsupportedGroupCount { s: x.n_groups() });
    }
    let sizes = x.group_sizes();
    for (s, &ns) in sizes.iter().enumerate() {
        if ns < 2 {
            return Err(Error::GroupTooSmall { group: s + 1, size: ns });
        }
    }
    let m = x.n_genes();
    let n = x.n_samples();

    // median-of-log-ratios normalization against sample 1
    let mut normalized = x.values.clone();
    for j in 0..n {
        let mut ratios: Vec<f64> = (0..m)
            .map(|i| x.values[[i, j]] - x.values[[i, 0]])
            .collect();
        ratios.sort_by(f64::total_cmp);
        let median = if m % 2 == 1 {
            ratios[m / 2]
        } else {
            0.5 * (ratios[m / 2 - 1] + ratios[m / 2])
        };
        for i in 0..m {
            normalized[[i, j]] -= median;
        }
    }

    let cols1 = x.columns_of_group(1);
    let cols2 = x.columns_of_group(2);
    let (n1, n2) = (cols1.len() as f64, cols2.len() as f64);
    let scale = (1.0 / n1 + 1.0 / n2).sqrt();
    let df = n1 + n2 - 2.0;
    let mut scores = Vec::with_capacity(m);
    for i in 0..m {
        let mean = |cols: &[usize]| {
            cols.iter().map(|&j| normalized[[i, j]]).sum::<f64>() / cols.len() as f64
        };
        let m1 = mean(&cols1);
        let m2 = mean(&cols2);
        let ss = |cols: &[usize], center: f64| {
            cols.iter()
                .map(|&j| {
                    let r = normalized[[i, j]] - center;
                    r * r
                })
                .sum::<f64>()
        };
        let pooled = ((ss(&cols1, m1) + ss(&cols2, m2)) / df).sqrt();
        let diff = m2 - m1;
        let t = if pooled > 0.0 {
            (diff / (pooled * scale)).abs()
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        scores.push(t);
    }
    Ok(scores)
}

/// Scores of one method on one simulated dataset.
pub fn score_dataset(
    method: Method,
    x: &LogExpressionMatrix,
    q: f64,
) -> Result<Vec<f64>> {
    match method {
        Method::L0Fit => Ok(fitter::fit(x, q)?.score),
        Method::MedianTtest => baseline_median_ttest(x),
    }
}

/// Run `n_replicates` simulations (seeds derived from the scenario seed) and
/// aggregate each method's AUC.
pub fn run_benchmark(
    sc: &SimScenario,
    n_replicates: usize,
    methods: &[Method],
    q: f64,
) -> Result<Vec<EvalResult>> {
    if n_replicates < 2 {
        return Err(Error::InvalidInput(
            "benchmark needs at least 2 replicates".into(),
        ));
    }
    let per_replicate: Vec<(Vec<f64>, Vec<Vec<(f64, f64)>>)> = (0..n_replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(sc.seed, r);
            let wrap = |e: Error| Error::ReplicateFailed { seed, source: Box::new(e) };
            let sim = simulate(&sc.clone().with_seed(seed)).map_err(wrap)?;
            let x = log_transform(&sim.counts, Unit::Counts, 1.0).map_err(wrap)?;
            let mut aucs = Vec::with_capacity(methods.len());
            let mut rocs = Vec::with_capacity(methods.len());
            for &method in methods {
                let scores = score_dataset(method, &x, q).map_err(wrap)?;
                aucs.push(auc(&scores, &sim.truth.is_de).map_err(wrap)?);
                rocs.push(roc_points(&scores, &sim.truth.is_de).map_err(wrap)?);
            }
            Ok((aucs, rocs))
        })
        .collect::<Result<_>>()?;

    Ok(methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let aucs: Vec<f64> = per_replicate.iter().map(|(a, _)| a[k]).collect();
            let mean = aucs.iter().sum::<f64>() / n_replicates as f64;
            let var = aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
                / (n_replicates as f64 - 1.0);
            EvalResult {
                method_label: method.label().to_string(),
                auc: aucs[0],
                roc: per_replicate[0].1[k].clone(),
                n_replicates,
                mean_auc: mean,
                se_auc: (var / n_replicates as f64).sqrt(),
                replicate_aucs: aucs,
            }
        })
        .collect())
}

/// Benchmark table CSV: `de_pct,up_pct,method,mean_auc,se_auc,n_replicates`.
pub fn bench_csv(sc: &SimScenario, results: &[EvalResult]) -> String {
    let mut out = String::from("de_pct,up_pct,method,mean_auc,se_auc,n_replicates\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{}\n",
            (sc.de_fraction * 100.0).round(),
            (sc.up_fraction * 100.0).round(),
            r.method_label,
            r.mean_auc,
            r.se_auc,
            r.n_replicates
        ));
    }
    out
}

/// ROC CSV: `fpr,tpr`.
pub fn roc_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (fpr, tpr) in points {
        out.push_str(&format!("{fpr},{tpr}\n"));
    }
    out
}
