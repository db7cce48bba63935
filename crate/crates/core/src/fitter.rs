//! The L0-penalized joint normalization / differential-expression solver.
//!
//! The penalized negative log-likelihood
//!     f(mu, gamma, d) = l(mu, gamma, d; x) + sum_i alpha_i 1(gene i is DE)
//! with d_11 = 0 admits a closed-form solution: within-group offsets d'_sj
//! and group means mu'_si come from weighted averages, and the remaining
//! between-group offsets (d_2, ..., d_S) minimize
//!     G(d) = sum_i min(g_i(d), alpha_i)
//! where g_i is a per-gene nonnegative quadratic form. For S = 2, G is a sum
//! of capped parabolas in a single variable and is minimized exactly by a
//! breakpoint sweep; for S = 3 a dense grid locates the basin and exact
//! per-coordinate descent refines it. Gene status, effects gamma_si, means
//! mu_i and the ranking score g_i / alpha_i then follow by thresholding.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{LogExpressionMatrix, Unit};
use crate::pwq::{minimize_sum, CappedParabola};
use crate::quantile::{f_quantile, t_quantile};
use crate::variance::estimate_variances;

/// Default significance level for the alpha threshold.
pub const DEFAULT_Q: f64 = 0.01;

/// Grid resolution for the S = 3 search.
const GRID_STEPS: usize = 400;
/// Coordinate-descent convergence tolerance for the S = 3 refinement.
const REFINE_TOL: f64 = 1e-8;

/// Tuning parameters of the penalty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningParams {
    /// Significance level in (0, 1).
    pub q: f64,
    /// Per-gene penalty alpha_i.
    pub alpha: Vec<f64>,
    /// Two-group threshold lambda_i (populated when S = 2).
    pub lambda: Option<Vec<f64>>,
}

/// A fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFit {
    pub gene_ids: Vec<String>,
    pub q: f64,
    /// Final value of the penalized objective f.
    pub objective: f64,
    pub unit: Unit,
    pub pseudocount: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// Within-group offsets d'_sj per sample (d'_s1 = 0).
    pub d_prime: Vec<f64>,
    /// Offset-corrected group means mu'_si (m rows, S columns).
    pub mu_prime: Vec<Vec<f64>>,
    /// Between-group offsets d_s with d_1 = 0.
    pub d_group: Vec<f64>,
    /// Full per-sample offsets d_sj = d_s + d'_sj.
    pub d_full: Vec<f64>,
    /// Expression effects vs group 1, m rows, S - 1 columns; 0 for non-DE.
    pub gamma: Vec<Vec<f64>>,
    /// Baseline log expression per gene.
    pub mu: Vec<f64>,
    /// DE indicator per gene (1 when any gamma_si != 0).
    pub tau: Vec<u8>,
    /// Ranking statistic g_i / alpha_i; >= 1 exactly for DE genes.
    pub score: Vec<f64>,
    /// Variances used by the solver.
    pub sigma2_hat: Vec<f64>,
}

/// Which solver produced the between-group offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPath {
    /// Exact sweep on the two-group threshold form.
    TwoGroup,
    /// General capped-quadratic solver (S = 2 exact sweep, S = 3 grid).
    General,
}

/// alpha for significance level q: ((S-1)/2) F*_{1-q}(S-1, n-S).
pub fn alpha_from_q(q: f64, s_count: usize, n: usize) -> Result<f64> {
    if n <= s_count {
        return Err(Error::NoResidualDf { n, s: s_count });
    }
    if s_count < 2 {
        return Err(Error::UnsupportedGroupCount { s: s_count });
    }
    let f = f_quantile(1.0 - q, (s_count - 1) as f64, (n - s_count) as f64)?;
    Ok((s_count as f64 - 1.0) / 2.0 * f)
}

/// Two-group threshold lambda_i = sqrt(2 n sigma2_i alpha_i / (n1 n2)).
pub fn lambda_from_alpha(alpha: &[f64], sigma2: &[f64], n1: usize, n2: usize) -> Vec<f64> {
    let n = (n1 + n2) as f64;
    alpha
        .iter()
        .zip(sigma2)
        .map(|(&a, &s2)| (2.0 * n * s2 * a / (n1 as f64 * n2 as f64)).sqrt())
        .collect()
}

/// Equivalent lambda route via the t critical value:
/// lambda_i = t*_{1-q/2}(n1+n2-2) sigma_i sqrt(1/n1 + 1/n2).
pub fn lambda_from_q(q: f64, sigma2: &[f64], n1: usize, n2: usize) -> Result<Vec<f64>> {
    let t = t_quantile(1.0 - q / 2.0, (n1 + n2 - 2) as f64)?;
    let scale = (1.0 / n1 as f64 + 1.0 / n2 as f64).sqrt();
    Ok(sigma2.iter().map(|&s2| t * s2.sqrt() * scale).collect())
}

/// Within-group offsets d'_sj: per column, the 1/sigma2-weighted mean over
/// genes of (x_sij - x_si1), where column 1 is the first column of the
/// sample's group. Returns one value per sample column; reference columns
/// are exactly 0.
pub fn compute_dprime(x: &LogExpressionMatrix, sigma2: &[f64]) -> Vec<f64> {
    let m = x.n_genes();
    let weights: Vec<f64> = sigma2.iter().map(|&s| 1.0 / s).collect();
    let weight_total: f64 = weights.iter().sum();
    let mut dprime = vec![0.0; x.n_samples()];
    for s in 1..=x.n_groups() {
        let cols = x.columns_of_group(s);
        let first = cols[0];
        for &j in &cols {
            let mut acc = 0.0;
            for i in 0..m {
                acc += weights[i] * (x.values[[i, j]] - x.values[[i, first]]);
            }
            dprime[j] = acc / weight_total;
        }
    }
    dprime
}

/// Offset-corrected group means mu'_si = (1/n_s) sum_j (x_sij - d'_sj).
pub fn compute_muprime(x: &LogExpressionMatrix, dprime: &[f64]) -> Array2<f64> {
    let m = x.n_genes();
    let s_count = x.n_groups();
    let mut mu_prime = Array2::zeros((m, s_count));
    for s in 1..=s_count {
        let cols = x.columns_of_group(s);
        for i in 0..m {
            let mut acc = 0.0;
            for &j in &cols {
                acc += x.values[[i, j]] - dprime[j];
            }
            mu_prime[[i, s - 1]] = acc / cols.len() as f64;
        }
    }
    mu_prime
}

/// Per-gene quadratic form
/// g = (1/2 sigma2) { sum_s n_s (mu'_s - d_s)^2 - (1/n) [sum_s n_s (mu'_s - d_s)]^2 }.
pub fn g_statistic(mu_prime_row: &[f64], d: &[f64], group_sizes: &[usize], sigma2: f64) -> f64 {
    let n: usize = group_sizes.iter().sum();
    let mut sum_sq = 0.0;
    let mut sum = 0.0;
    for (s, &ns) in group_sizes.iter().enumerate() {
        let v = mu_prime_row[s] - d[s];
        sum_sq += ns as f64 * v * v;
        sum += ns as f64 * v;
    }
    ((sum_sq - sum * sum / n as f64) / (2.0 * sigma2)).max(0.0)
}

/// Coefficients of g_i as a parabola in the single coordinate d_t (0-based
/// group index `t`), holding the other offsets fixed:
/// g_i(d_t) = curvature (d_t - center)^2 + offset.
fn slice_parabola(
    mu_prime_row: &[f64],
    d: &[f64],
    group_sizes: &[usize],
    sigma2: f64,
    t: usize,
) -> (f64, f64, f64) {
    let n: usize = group_sizes.iter().sum();
    let nt = group_sizes[t] as f64;
    let curvature = nt * (n as f64 - nt) / (2.0 * n as f64 * sigma2);
    // rest = sum_{s != t} n_s (mu'_s - d_s)
    let mut rest = 0.0;
    for (s, &ns) in group_sizes.iter().enumerate() {
        if s != t {
            rest += ns as f64 * (mu_prime_row[s] - d[s]);
        }
    }
    let center = mu_prime_row[t] - rest / (n as f64 - nt);
    let mut at_vertex = d.to_vec();
    at_vertex[t] = center;
    let offset = g_statistic(mu_prime_row, &at_vertex, group_sizes, sigma2);
    (curvature, center, offset)
}

/// Exact minimization over one coordinate of G(d) = sum_i min(g_i, alpha_i).
fn minimize_coordinate(
    mu_prime: &Array2<f64>,
    d: &[f64],
    group_sizes: &[usize],
    sigma2: &[f64],
    alpha: &[f64],
    t: usize,
) -> (f64, f64) {
    let m = mu_prime.nrows();
    let terms: Vec<CappedParabola> = (0..m)
        .map(|i| {
            let row: Vec<f64> = mu_prime.row(i).to_vec();
            let (curvature, center, offset) = slice_parabola(&row, d, group_sizes, sigma2[i], t);
            CappedParabola {
                curvature,
                center,
                offset,
                cap: alpha[i],
            }
        })
        .collect();
    minimize_sum(&terms)
}

/// Evaluate G(d) = sum_i min(g_i(d), alpha_i).
pub fn eval_g_objective(
    mu_prime: &Array2<f64>,
    d: &[f64],
    group_sizes: &[usize],
    sigma2: &[f64],
    alpha: &[f64],
) -> f64 {
    let m = mu_prime.nrows();
    (0..m)
        .map(|i| {
            let row: Vec<f64> = mu_prime.row(i).to_vec();
            g_statistic(&row, d, group_sizes, sigma2[i]).min(alpha[i])
        })
        .sum()
}

/// Search bracket for the grid: [min delta - max radius, max delta + max radius]
/// where delta are the between-group contrasts mu'_si - mu'_1i and the radius
/// is each gene's cap half-width along a coordinate.
fn grid_bracket(
    mu_prime: &Array2<f64>,
    group_sizes: &[usize],
    sigma2: &[f64],
    alpha: &[f64],
) -> (f64, f64) {
    let m = mu_prime.nrows();
    let s_count = group_sizes.len();
    let n: usize = group_sizes.iter().sum();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut max_radius = 0.0f64;
    for i in 0..m {
        for s in 1..s_count {
            let delta = mu_prime[[i, s]] - mu_prime[[i, 0]];
            lo = lo.min(delta);
            hi = hi.max(delta);
            let ns = group_sizes[s] as f64;
            let curvature = ns * (n as f64 - ns) / (2.0 * n as f64 * sigma2[i]);
            max_radius = max_radius.max((alpha[i] / curvature).sqrt());
        }
    }
    (lo - max_radius, hi + max_radius)
}

/// Minimize G over (d_2, ..., d_S). Exact breakpoint sweep for S = 2; dense
/// grid plus exact coordinate-descent refinement for S = 3.
pub fn minimize_g(
    mu_prime: &Array2<f64>,
    sigma2: &[f64],
    alpha: &[f64],
    group_sizes: &[usize],
) -> Result<(Vec<f64>, f64)> {
    let s_count = group_sizes.len();
    match s_count {
        2 => {
            let (d2, g_min) =
                minimize_coordinate(mu_prime, &[0.0, 0.0], group_sizes, sigma2, alpha, 1);
            Ok((vec![0.0, d2], g_min))
        }
        3 => {
            let (lo, hi) = grid_bracket(mu_prime, group_sizes, sigma2, alpha);
            let step = (hi - lo) / GRID_STEPS as f64;
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for k2 in 0..=GRID_STEPS {
                let d2 = lo + step * k2 as f64;
                for k3 in 0..=GRID_STEPS {
                    let d3 = lo + step * k3 as f64;
                    let val =
                        eval_g_objective(mu_prime, &[0.0, d2, d3], group_sizes, sigma2, alpha);
                    if val < best.0 {
                        best = (val, d2, d3);
                    }
                }
            }
            // exact per-coordinate refinement from the best grid cell
            let mut d = vec![0.0, best.1, best.2];
            for _ in 0..100 {
                let mut change = 0.0f64;
                for t in [1usize, 2] {
                    let (new_dt, _) =
                        minimize_coordinate(mu_prime, &d, group_sizes, sigma2, alpha, t);
                    change = change.max((new_dt - d[t]).abs());
                    d[t] = new_dt;
                }
                if change < REFINE_TOL {
                    break;
                }
            }
            let g_min = eval_g_objective(mu_prime, &d, group_sizes, sigma2, alpha);
            Ok((d, g_min))
        }
        s => Err(Error::UnsupportedGroupCount { s }),
    }
}

/// Gene-level results produced after the offsets are known.
pub struct Finalized {
    pub gamma: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub tau: Vec<u8>,
    pub g: Vec<f64>,
}

/// Threshold each gene: strictly below alpha means non-DE (gamma = 0,
/// pooled mean); at or above alpha means DE (gamma from the contrasts,
/// mu from group 1).
pub fn finalize(
    mu_prime: &Array2<f64>,
    d_group: &[f64],
    alpha: &[f64],
    sigma2: &[f64],
    group_sizes: &[usize],
) -> Finalized {
    let m = mu_prime.nrows();
    let s_count = group_sizes.len();
    let n: usize = group_sizes.iter().sum();
    let mut gamma = Vec::with_capacity(m);
    let mut mu = Vec::with_capacity(m);
    let mut tau = Vec::with_capacity(m);
    let mut g_all = Vec::with_capacity(m);
    for i in 0..m {
        let row: Vec<f64> = mu_prime.row(i).to_vec();
        let g = g_statistic(&row, d_group, group_sizes, sigma2[i]);
        g_all.push(g);
        if g < alpha[i] {
            gamma.push(vec![0.0; s_count - 1]);
            let pooled = group_sizes
                .iter()
                .enumerate()
                .map(|(s, &ns)| ns as f64 * (row[s] - d_group[s]))
                .sum::<f64>()
                / n as f64;
            mu.push(pooled);
            tau.push(0);
        } else {
            let effects: Vec<f64> = (1..s_count)
                .map(|s| row[s] - row[0] - d_group[s])
                .collect();
            let any_nonzero = effects.iter().any(|&v| v != 0.0);
            tau.push(u8::from(any_nonzero));
            gamma.push(effects);
            mu.push(row[0]);
        }
    }
    Finalized {
        gamma,
        mu,
        tau,
        g: g_all,
    }
}

/// Penalized objective f = l + sum alpha_i tau_i recomputed from a fit.
pub fn penalized_objective(x: &LogExpressionMatrix, fit: &ModelFit, alpha: &[f64]) -> f64 {
    let m = x.n_genes();
    let mut total = 0.0;
    for i in 0..m {
        let inv = 1.0 / (2.0 * fit.sigma2_hat[i]);
        for s in 1..=x.n_groups() {
            let effect = if s == 1 { 0.0 } else { fit.gamma[i][s - 2] };
            for &j in &x.columns_of_group(s) {
                let r = x.values[[i, j]] - fit.mu[i] - effect - fit.d_full[j];
                total += inv * r * r;
            }
        }
        if fit.tau[i] == 1 {
            total += alpha[i];
        }
    }
    total
}

fn validate_fit_input(x: &LogExpressionMatrix) -> Result<(usize, Vec<usize>)> {
    let m = x.n_genes();
    if m < 2 {
        return Err(Error::TooFewGenes { needed: 2, got: m });
    }
    let s_count = x.n_groups();
    if !(2..=3).contains(&s_count) {
        return Err(Error::UnsupportedGroupCount { s: s_count });
    }
    let group_sizes = x.group_sizes();
    for (s, &ns) in group_sizes.iter().enumerate() {
        if ns < 2 {
            return Err(Error::GroupTooSmall { group: s + 1, size: ns });
        }
    }
    Ok((s_count, group_sizes))
}

/// Solve the penalized model with known variances and penalties.
pub fn solve_with_variances(
    x: &LogExpressionMatrix,
    sigma2: &[f64],
    alpha: &[f64],
    q: f64,
    path: SolverPath,
) -> Result<ModelFit> {
    let (s_count, group_sizes) = validate_fit_input(x)?;
    let dprime = compute_dprime(x, sigma2);
    let mu_prime = compute_muprime(x, &dprime);

    let d_group = match (path, s_count) {
        (SolverPath::TwoGroup, 2) => {
            let n1 = group_sizes[0];
            let n2 = group_sizes[1];
            let lambda = lambda_from_alpha(alpha, sigma2, n1, n2);
            let terms: Vec<CappedParabola> = (0..x.n_genes())
                .map(|i| {
                    let delta = mu_prime[[i, 1]] - mu_prime[[i, 0]];
                    let weight = 1.0 / sigma2[i];
                    CappedParabola {
                        curvature: weight,
                        center: delta,
                        offset: 0.0,
                        cap: weight * lambda[i] * lambda[i],
                    }
                })
                .collect();
            let (d2, _) = minimize_sum(&terms);
            vec![0.0, d2]
        }
        (SolverPath::TwoGroup, s) => return Err(Error::UnsupportedGroupCount { s }),
        (SolverPath::General, _) => minimize_g(&mu_prime, sigma2, alpha, &group_sizes)?.0,
    };

    let finalized = finalize(&mu_prime, &d_group, alpha, sigma2, &group_sizes);

    if path == SolverPath::TwoGroup {
        // the threshold form |delta - d| >= lambda must agree with g >= alpha
        let lambda = lambda_from_alpha(alpha, sigma2, group_sizes[0], group_sizes[1]);
        for i in 0..x.n_genes() {
            let delta = mu_prime[[i, 1]] - mu_prime[[i, 0]];
            let by_threshold = (delta - d_group[1]).abs() >= lambda[i];
            let by_alpha = finalized.g[i] >= alpha[i];
            debug_assert!(
                by_threshold == by_alpha
                    || (finalized.g[i] - alpha[i]).abs() <= 1e-9 * alpha[i].max(1.0),
                "threshold and alpha forms disagree at gene {i}"
            );
        }
    }

    let d_full: Vec<f64> = x
        .group_of_sample
        .iter()
        .zip(&dprime)
        .map(|(&g, &dp)| d_group[g - 1] + dp)
        .collect();
    let score: Vec<f64> = finalized
        .g
        .iter()
        .zip(alpha)
        .map(|(&g, &a)| g / a)
        .collect();

    let mut fit = ModelFit {
        gene_ids: x.gene_ids.clone(),
        q,
        objective: 0.0,
        unit: x.unit,
        pseudocount: x.pseudocount,
        seed: None,
        d_prime: dprime,
        mu_prime: (0..x.n_genes()).map(|i| mu_prime.row(i).to_vec()).collect(),
        d_group,
        d_full,
        gamma: finalized.gamma,
        mu: finalized.mu,
        tau: finalized.tau,
        score,
        sigma2_hat: sigma2.to_vec(),
    };
    fit.objective = penalized_objective(x, &fit, alpha);
    Ok(fit)
}

fn fit_with_path(x: &LogExpressionMatrix, q: f64, path: SolverPath) -> Result<ModelFit> {
    let (s_count, group_sizes) = validate_fit_input(x)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidQuantile(format!("q must be in (0, 1), got {q}")));
    }
    let n: usize = group_sizes.iter().sum();
    let variances = estimate_variances(x)?;
    let alpha_value = alpha_from_q(q, s_count, n)?;
    let alpha = vec![alpha_value; x.n_genes()];
    solve_with_variances(x, &variances.sigma2_hat, &alpha, q, path)
}

/// Full pipeline: variance estimation, tuning from q, Proposition-style
/// solve. Uses the exact two-group path when S = 2.
pub fn fit(x: &LogExpressionMatrix, q: f64) -> Result<ModelFit> {
    let path = if x.n_groups() == 2 {
        SolverPath::TwoGroup
    } else {
        SolverPath::General
    };
    fit_with_path(x, q, path)
}

/// Same pipeline but forcing the general solver (useful to cross-check the
/// specialized two-group path).
pub fn fit_general(x: &LogExpressionMatrix, q: f64) -> Result<ModelFit> {
    fit_with_path(x, q, SolverPath::General)
}

/// Requested grid for a landscape export.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.max > self.min) || self.steps < 2 {
            return Err(Error::InvalidInput(format!(
                "grid must satisfy min < max and steps >= 2, got [{}, {}] x {}",
                self.min, self.max, self.steps
            )));
        }
        Ok(())
    }
}

/// Objective values over a grid, plus the located exact minimizer.
#[derive(Debug, Clone)]
pub enum Landscape {
    /// (d, G'(d)) pairs for S = 2 and the exact minimizer.
    OneDim {
        points: Vec<(f64, f64)>,
        minimizer: (f64, f64),
    },
    /// (d2, d3, G) triples for S = 3 and the refined minimizer.
    TwoDim {
        points: Vec<(f64, f64, f64)>,
        minimizer: (f64, f64, f64),
    },
}

/// Export the objective surface for the given inputs. For S = 2 this is
/// G'(d) = sum_i (1/sigma2_i) min((delta_i - d)^2, lambda_i^2); for S = 3 it
/// is G(d2, d3). `uncapped` removes the caps, leaving the pure quadratic.
pub fn export_g_landscape(
    mu_prime: &Array2<f64>,
    sigma2: &[f64],
    alpha: &[f64],
    group_sizes: &[usize],
    grid: GridSpec,
    uncapped: bool,
) -> Result<Landscape> {
    grid.validate()?;
    let s_count = group_sizes.len();
    let m = mu_prime.nrows();
    let alpha: Vec<f64> = if uncapped {
        vec![f64::INFINITY; m]
    } else {
        alpha.to_vec()
    };
    match s_count {
        2 => {
            let n1 = group_sizes[0];
            let n2 = group_sizes[1];
            let terms: Vec<CappedParabola> = (0..m)
                .map(|i| {
                    let delta = mu_prime[[i, 1]] - mu_prime[[i, 0]];
                    let weight = 1.0 / sigma2[i];
                    let lam2 = if alpha[i].is_infinite() {
                        f64::INFINITY
                    } else {
                        2.0 * (n1 + n2) as f64 * sigma2[i] * alpha[i] / (n1 as f64 * n2 as f64)
                    };
                    CappedParabola {
                        curvature: weight,
                        center: delta,
                        offset: 0.0,
                        cap: weight * lam2,
                    }
                })
                .collect();
            let step = (grid.max - grid.min) / (grid.steps - 1) as f64;
            let points: Vec<(f64, f64)> = (0..grid.steps)
                .map(|k| {
                    let d = grid.min + step * k as f64;
                    (d, crate::pwq::eval_sum(&terms, d))
                })
                .collect();
            let minimizer = minimize_sum(&terms);
            Ok(Landscape::OneDim { points, minimizer })
        }
        3 => {
            let step = (grid.max - grid.min) / (grid.steps - 1) as f64;
            let mut points = Vec::with_capacity(grid.steps * grid.steps);
            for k2 in 0..grid.steps {
                let d2 = grid.min + step * k2 as f64;
                for k3 in 0..grid.steps {
                    let d3 = grid.min + step * k3 as f64;
                    let val = eval_g_objective(mu_prime, &[0.0, d2, d3], group_sizes, sigma2, &alpha);
                    points.push((d2, d3, val));
                }
            }
            let (d, g_min) = minimize_g(mu_prime, sigma2, &alpha, group_sizes)?;
            Ok(Landscape::TwoDim {
                points,
                minimizer: (d[1], d[2], g_min),
            })
        }
        s => Err(Error::UnsupportedGroupCount { s }),
    }
}
