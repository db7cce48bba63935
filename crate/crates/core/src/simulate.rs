//! Synthetic two-group count data with known ground truth.
//!
//! Three generators are provided. The multinomial generator draws per-sample
//! read totals and allocates them over genes in proportion to length times
//! expression, then adds one read to every count. The log-normal and
//! negative-binomial generators draw counts around a mean structure built
//! from per-gene base expression, group effects and per-sample library
//! sizes; both are used for the replicate AUC benchmark.
//!
//! Everything is seeded: the same scenario (including its seed) reproduces
//! the output byte for byte. Replicate seeds derive from a master seed via
//! [`replicate_seed`].

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CountMatrix;

/// How to read the second parameter of a normal-distribution literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpreadConvention {
    /// N(a, b) has standard deviation b.
    #[default]
    StdDev,
    /// N(a, b) has variance b.
    Variance,
}

impl SpreadConvention {
    fn sd(self, b: f64) -> f64 {
        match self {
            SpreadConvention::StdDev => b,
            SpreadConvention::Variance => b.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Multinomial read allocation with a +1 floor on every count.
    Multinomial,
    /// Log-normally distributed counts around the mean structure.
    LogNormal,
    /// Negative-binomially distributed counts with per-gene dispersion.
    NegBinomial,
}

/// Log-normal law for per-gene negative-binomial dispersions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionDist {
    pub meanlog: f64,
    pub sdlog: f64,
}

impl Default for DispersionDist {
    fn default() -> Self {
        DispersionDist { meanlog: -2.0, sdlog: 1.0 }
    }
}

/// Generator configuration. `shift_spread` and `noise_spread` are the `b`
/// of their normal literals and are interpreted per `normal_spread`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub kind: ScenarioKind,
    pub m: usize,
    pub n_per_group: Vec<usize>,
    /// Fraction of genes that are differentially expressed.
    pub de_fraction: f64,
    /// Fraction of DE genes up-regulated in group 2 (benchmark kinds only;
    /// the multinomial generator draws signed shifts directly).
    pub up_fraction: f64,
    /// Mean of the group-2 log-expression shift for DE genes.
    pub shift_mean: f64,
    /// Spread of the shift distribution.
    pub shift_spread: f64,
    /// Spread of the per-observation expression noise (multinomial kind).
    pub noise_spread: f64,
    /// Library-size range, drawn uniformly.
    pub depth_range: (f64, f64),
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dispersion: Option<DispersionDist>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma_ln: Option<f64>,
    #[serde(default)]
    pub normal_spread: SpreadConvention,
}

impl SimScenario {
    /// Named presets. `figure3a`..`figure3d` are the multinomial robustness
    /// settings (m = 1000; DE fractions 0.3 / 0.7 / 0.9 / 0.9; shifts
    /// N(0,1), N(1,1), N(1,1), N(3,1); ten samples per group). `table1_*`
    /// are log-normal and `table2_*` negative-binomial benchmark settings
    /// (m = 1000, four samples per group, DE% in {30, 70}, up% in
    /// {50, 70, 90}, shift N(log 3, 1)).
    pub fn preset(name: &str) -> Result<SimScenario> {
        let multinomial = |de: f64, shift_mean: f64| SimScenario {
            kind: ScenarioKind::Multinomial,
            m: 1000,
            n_per_group: vec![10, 10],
            de_fraction: de,
            up_fraction: 0.5,
            shift_mean,
            shift_spread: 1.0,
            noise_spread: 0.2,
            depth_range: (3e7, 5e7),
            seed: 0,
            dispersion: None,
            sigma_ln: None,
            normal_spread: SpreadConvention::StdDev,
        };
        let benchmark = |kind: ScenarioKind, de: f64, up: f64| SimScenario {
            kind,
            m: 1000,
            n_per_group: vec![4, 4],
            de_fraction: de,
            up_fraction: up,
            shift_mean: 3f64.ln(),
            shift_spread: 1.0,
            noise_spread: 0.2,
            depth_range: (3e7, 5e7),
            seed: 0,
            dispersion: matches!(kind, ScenarioKind::NegBinomial).then(DispersionDist::default),
            sigma_ln: matches!(kind, ScenarioKind::LogNormal).then_some(0.5),
            normal_spread: SpreadConvention::StdDev,
        };
        match name {
            "figure3a" => Ok(multinomial(0.3, 0.0)),
            "figure3b" => Ok(multinomial(0.7, 1.0)),
            "figure3c" => Ok(multinomial(0.9, 1.0)),
            "figure3d" => Ok(multinomial(0.9, 3.0)),
            _ => {
                let parts: Vec<&str> = name.split('_').collect();
                if parts.len() == 3 {
                    let kind = match parts[0] {
                        "table1" => Some(ScenarioKind::LogNormal),
                        "table2" => Some(ScenarioKind::NegBinomial),
                        _ => None,
                    };
                    let de = parts[1].parse::<f64>().ok().filter(|v| [30.0, 70.0].contains(v));
                    let up = parts[2]
                        .parse::<f64>()
                        .ok()
                        .filter(|v| [50.0, 70.0, 90.0].contains(v));
                    if let (Some(kind), Some(de), Some(up)) = (kind, de, up) {
                        return Ok(benchmark(kind, de / 100.0, up / 100.0));
                    }
                }
                Err(Error::InvalidScenario(format!(
                    "unknown preset '{name}'; available: {}",
                    preset_names().join(", ")
                )))
            }
        }
    }

    pub fn with_seed(mut self, seed: u64) -> SimScenario {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidScenario("m must be positive".into()));
        }
        if self.n_per_group.len() != 2 || self.n_per_group.iter().any(|&n| n == 0) {
            return Err(Error::InvalidScenario(
                "generators are two-group: n_per_group must be two positive sizes".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.de_fraction) || !(0.0..=1.0).contains(&self.up_fraction) {
            return Err(Error::InvalidScenario(
                "de_fraction and up_fraction must lie in [0, 1]".into(),
            ));
        }
        if !(self.depth_range.0 > 0.0 && self.depth_range.1 >= self.depth_range.0) {
            return Err(Error::InvalidScenario("invalid depth range".into()));
        }
        Ok(())
    }
}

/// All preset names, in display order.
pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = ["figure3a", "figure3b", "figure3c", "figure3d"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for table in ["table1", "table2"] {
        for de in [30, 70] {
            for up in [50, 70, 90] {
                names.push(format!("{table}_{de}_{up}"));
            }
        }
    }
    names
}

/// Ground truth per gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub is_de: Vec<bool>,
    pub mu_group1: Vec<f64>,
    pub mu_group2: Vec<f64>,
    /// True group-2 minus group-1 log expression; exactly 0 for non-DE genes.
    pub gamma: Vec<f64>,
}

/// A simulated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub counts: CountMatrix,
    pub truth: Truth,
    /// Identifiable per-sample log offset (library size and composition
    /// effects included): differences of these are what a normalizer can
    /// recover from the counts.
    pub d_true: Vec<f64>,
    pub scenario: SimScenario,
    /// Number of DE genes after rounding de_fraction * m.
    pub n_de: usize,
}

/// Derive the seed of replicate `index` from a master seed (SplitMix64 of
/// the master XORed with the replicate's golden-ratio increment).
pub fn replicate_seed(master: u64, index: usize) -> u64 {
    let mut z = master ^ (0x9E3779B97F4A7C15u64.wrapping_mul(index as u64 + 1));
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Multinomial draw by conditional binomials; the output sums to `n`.
pub fn multinomial_draw<R: Rng>(rng: &mut R, n: u64, probs: &[f64]) -> Result<Vec<u64>> {
    if probs.is_empty() {
        return Err(Error::InvalidInput("multinomial needs at least one cell".into()));
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) || probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidInput(
            "multinomial probabilities must be nonnegative with positive sum".into(),
        ));
    }
    let mut out = vec![0u64; probs.len()];
    let mut remaining_n = n;
    let mut remaining_p = total;
    for i in 0..probs.len() - 1 {
        if remaining_n == 0 {
            break;
        }
        if remaining_p <= 0.0 {
            break;
        }
        let p = (probs[i] / remaining_p).clamp(0.0, 1.0);
        let k = if p >= 1.0 {
            remaining_n
        } else if p <= 0.0 {
            0
        } else {
            Binomial::new(remaining_n, p)
                .map_err(|e| Error::InvalidInput(e.to_string()))?
                .sample(rng)
        };
        out[i] = k;
        remaining_n -= k;
        remaining_p -= probs[i];
    }
    *out.last_mut().unwrap() = remaining_n;
    Ok(out)
}

/// Negative-binomial draw with the (mean, dispersion) parameterization:
/// variance = mean + dispersion * mean^2, realized as a gamma-mixed Poisson.
pub fn neg_binomial_draw<R: Rng>(rng: &mut R, mean: f64, dispersion: f64) -> Result<u64> {
    if !(mean >= 0.0) || !(dispersion >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "negative binomial needs mean >= 0 and dispersion >= 0, got ({mean}, {dispersion})"
        )));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let rate = if dispersion == 0.0 {
        mean
    } else {
        let shape = 1.0 / dispersion;
        let scale = dispersion * mean;
        Gamma::new(shape, scale)
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .sample(rng)
    };
    if rate <= 0.0 {
        return Ok(0);
    }
    let draw = Poisson::new(rate)
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .sample(rng);
    Ok(draw as u64)
}

fn gene_ids(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("gene_{i}")).collect()
}

fn group_labels(n_per_group: &[usize]) -> Vec<usize> {
    let mut groups = Vec::new();
    for (s, &ns) in n_per_group.iter().enumerate() {
        groups.extend(std::iter::repeat(s + 1).take(ns));
    }
    groups
}

/// ln sum_i exp(t_i), stabilized.
fn log_sum_exp(t: &[f64]) -> f64 {
    let max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + t.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Generate from the scenario.
pub fn simulate(sc: &SimScenario) -> Result<SimOutput> {
    sc.validate()?;
    match sc.kind {
        ScenarioKind::Multinomial => simulate_multinomial(sc),
        ScenarioKind::LogNormal | ScenarioKind::NegBinomial => simulate_benchmark(sc),
    }
}

// Priors of the multinomial generator (log scale).
const BASE_MEAN: f64 = -3.0;
const BASE_SPREAD: f64 = 2.0;
const OFFSET_SPREAD: f64 = 0.5;
const LOG_LENGTH_RANGE: (f64, f64) = (5.0, 10.0);

/// Multinomial generator: expression x_sij = mu_si + d_sj + noise, lengths
/// exp(U(5,10)), library sizes from `depth_range`, counts allocated
/// multinomially over genes with probabilities proportional to
/// l_i exp(x_sij), plus one read everywhere.
pub fn simulate_multinomial(sc: &SimScenario) -> Result<SimOutput> {
    let mut rng = ChaCha12Rng::seed_from_u64(sc.seed);
    let conv = sc.normal_spread;
    let m = sc.m;
    let n: usize = sc.n_per_group.iter().sum();
    let n_de = (sc.de_fraction * m as f64).round() as usize;

    let base = Normal::new(BASE_MEAN, conv.sd(BASE_SPREAD)).unwrap();
    let mu1: Vec<f64> = (0..m).map(|_| base.sample(&mut rng)).collect();

    // DE genes occupy the tail of the gene list; shifts are drawn signed.
    let shift = Normal::new(sc.shift_mean, conv.sd(sc.shift_spread)).unwrap();
    let mut gamma = vec![0.0f64; m];
    for g in gamma.iter_mut().skip(m - n_de) {
        *g = shift.sample(&mut rng);
    }
    let mu2: Vec<f64> = mu1.iter().zip(&gamma).map(|(a, b)| a + b).collect();

    let offset = Normal::new(0.0, conv.sd(OFFSET_SPREAD)).unwrap();
    let d_raw: Vec<f64> = (0..n).map(|_| offset.sample(&mut rng)).collect();

    let groups = group_labels(&sc.n_per_group);
    let noise = Normal::new(0.0, conv.sd(sc.noise_spread)).unwrap();
    let mut x = Array2::zeros((m, n));
    for j in 0..n {
        let mu = if groups[j] == 1 { &mu1 } else { &mu2 };
        for i in 0..m {
            x[[i, j]] = mu[i] + d_raw[j] + noise.sample(&mut rng);
        }
    }

    let lengths: Vec<f64> = (0..m)
        .map(|_| rng.random_range(LOG_LENGTH_RANGE.0..LOG_LENGTH_RANGE.1).exp())
        .collect();
    let totals: Vec<u64> = (0..n)
        .map(|_| rng.random_range(sc.depth_range.0..sc.depth_range.1).round() as u64)
        .collect();

    let mut counts = Array2::zeros((m, n));
    let mut d_true = vec![0.0f64; n];
    for j in 0..n {
        let logits: Vec<f64> = (0..m).map(|i| lengths[i].ln() + x[[i, j]]).collect();
        let log_z = log_sum_exp(&logits);
        let probs: Vec<f64> = logits.iter().map(|&t| (t - log_z).exp()).collect();
        let draw = multinomial_draw(&mut rng, totals[j], &probs)?;
        for i in 0..m {
            counts[[i, j]] = draw[i] as f64 + 1.0;
        }
        d_true[j] = d_raw[j] + (totals[j] as f64).ln() - log_z;
    }

    let cm = CountMatrix::new(gene_ids(m), counts, groups, Some(lengths))?;
    Ok(SimOutput {
        counts: cm,
        truth: Truth {
            is_de: (0..m).map(|i| i >= m - n_de).collect(),
            mu_group1: mu1,
            mu_group2: mu2,
            gamma,
        },
        d_true,
        scenario: sc.clone(),
        n_de,
    })
}

// Surrogate priors of the benchmark generators: base log expression
// N(-3, variance 2), library sizes from `depth_range`.
const BENCH_BASE_MEAN: f64 = -3.0;
const BENCH_BASE_SD: f64 = std::f64::consts::SQRT_2;

/// Benchmark generator behind the replicate AUC tables. The DE tail of the
/// gene list receives signed log-fold changes: magnitudes from
/// N(shift_mean, shift_spread), the first `up_fraction` of DE genes
/// up-regulated in group 2, the rest down-regulated.
pub fn simulate_benchmark(sc: &SimScenario) -> Result<SimOutput> {
    let mut rng = ChaCha12Rng::seed_from_u64(sc.seed);
    let conv = sc.normal_spread;
    let m = sc.m;
    let n: usize = sc.n_per_group.iter().sum();
    let n_de = (sc.de_fraction * m as f64).round() as usize;
    let n_up = (sc.up_fraction * n_de as f64).round() as usize;

    let base = Normal::new(BENCH_BASE_MEAN, BENCH_BASE_SD).unwrap();
    let mu1: Vec<f64> = (0..m).map(|_| base.sample(&mut rng)).collect();

    let shift = Normal::new(sc.shift_mean, conv.sd(sc.shift_spread)).unwrap();
    let mut gamma = vec![0.0f64; m];
    let de_start = m - n_de;
    for (k, g) in gamma.iter_mut().skip(de_start).enumerate() {
        let magnitude = shift.sample(&mut rng);
        *g = if k < n_up { magnitude } else { -magnitude };
    }
    let mu2: Vec<f64> = mu1.iter().zip(&gamma).map(|(a, b)| a + b).collect();

    let dispersions: Option<Vec<f64>> = match sc.kind {
        ScenarioKind::NegBinomial => {
            let dist = sc.dispersion.unwrap_or_default();
            let law = Normal::new(dist.meanlog, dist.sdlog).unwrap();
            Some((0..m).map(|_| law.sample(&mut rng).exp()).collect())
        }
        _ => None,
    };

    let libs: Vec<f64> = (0..n)
        .map(|_| rng.random_range(sc.depth_range.0..sc.depth_range.1))
        .collect();

    // group-level composition normalizers
    let log_z1 = log_sum_exp(&mu1);
    let log_z2 = log_sum_exp(&mu2);

    let groups = group_labels(&sc.n_per_group);
    let sigma_ln = sc.sigma_ln.unwrap_or(0.5);
    let ln_noise = Normal::new(0.0, sigma_ln).unwrap();

    let mut counts = Array2::zeros((m, n));
    let mut d_true = vec![0.0f64; n];
    for j in 0..n {
        let (mu, log_z) = if groups[j] == 1 {
            (&mu1, log_z1)
        } else {
            (&mu2, log_z2)
        };
        d_true[j] = libs[j].ln() - log_z;
        for i in 0..m {
            let log_mean = mu[i] + d_true[j];
            let value = match sc.kind {
                ScenarioKind::LogNormal => {
                    (log_mean + ln_noise.sample(&mut rng)).exp().round()
                }
                ScenarioKind::NegBinomial => {
                    let phi = dispersions.as_ref().unwrap()[i];
                    neg_binomial_draw(&mut rng, log_mean.exp(), phi)? as f64
                }
                ScenarioKind::Multinomial => unreachable!(),
            };
            counts[[i, j]] = value;
        }
    }

    let cm = CountMatrix::new(gene_ids(m), counts, groups, None)?;
    Ok(SimOutput {
        counts: cm,
        truth: Truth {
            is_de: (0..m).map(|i| i >= de_start).collect(),
            mu_group1: mu1,
            mu_group2: mu2,
            gamma,
        },
        d_true,
        scenario: sc.clone(),
        n_de,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_multinomial_scenario() -> SimScenario {
        SimScenario {
            kind: ScenarioKind::Multinomial,
            m: 200,
            n_per_group: vec![3, 3],
            de_fraction: 0.25,
            up_fraction: 0.5,
            shift_mean: 1.0,
            shift_spread: 1.0,
            noise_spread: 0.2,
            depth_range: (1e5, 2e5),
            seed: 99,
            dispersion: None,
            sigma_ln: None,
            normal_spread: SpreadConvention::StdDev,
        }
    }

    #[test]
    fn multinomial_columns_sum_to_total_plus_m() {
        let sim = simulate(&small_multinomial_scenario()).unwrap();
        let m = sim.counts.n_genes();
        for j in 0..sim.counts.n_samples() {
            let total: f64 = (0..m).map(|i| sim.counts.counts[[i, j]]).sum();
            // column sum = N_j + m; N_j is recoverable as sum - m and must be
            // inside the configured depth range
            let n_j = total - m as f64;
            assert_eq!(n_j.fract(), 0.0);
            assert!(n_j >= 1e5 - 1.0 && n_j <= 2e5 + 1.0);
        }
    }

    #[test]
    fn multinomial_counts_have_the_plus_one_floor() {
        let sim = simulate(&small_multinomial_scenario()).unwrap();
        for &c in sim.counts.counts.iter() {
            assert!(c >= 1.0);
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let sc = small_multinomial_scenario();
        let a = simulate(&sc).unwrap();
        let b = simulate(&sc).unwrap();
        assert_eq!(a, b);
        let c = simulate(&sc.clone().with_seed(100)).unwrap();
        assert_ne!(a.counts.counts, c.counts.counts);
    }

    #[test]
    fn non_de_truth_gamma_is_exactly_zero() {
        let sim = simulate(&small_multinomial_scenario()).unwrap();
        assert_eq!(sim.n_de, 50);
        for i in 0..sim.counts.n_genes() {
            if !sim.truth.is_de[i] {
                assert_eq!(sim.truth.gamma[i], 0.0);
                assert_eq!(sim.truth.mu_group1[i], sim.truth.mu_group2[i]);
            }
        }
        assert_eq!(sim.truth.is_de.iter().filter(|&&d| d).count(), 50);
    }

    #[test]
    fn log_count_differences_concentrate_on_true_offsets() {
        // within a group, the per-gene median of log-count differences
        // between two samples tracks the identifiable offset difference
        let mut sc = small_multinomial_scenario();
        sc.m = 1000;
        sc.seed = 7;
        let sim = simulate(&sc).unwrap();
        let m = sc.m;
        for (j, k) in [(0usize, 1usize), (1, 2), (3, 4)] {
            let mut diffs: Vec<f64> = (0..m)
                .map(|i| sim.counts.counts[[i, j]].ln() - sim.counts.counts[[i, k]].ln())
                .collect();
            diffs.sort_by(f64::total_cmp);
            let median = 0.5 * (diffs[m / 2 - 1] + diffs[m / 2]);
            let expect = sim.d_true[j] - sim.d_true[k];
            assert!(
                (median - expect).abs() < 0.1,
                "pair ({j},{k}): median {median}, true {expect}"
            );
        }
    }

    #[test]
    fn benchmark_de_layout_matches_fractions() {
        let sc = SimScenario::preset("table1_30_50").unwrap().with_seed(3);
        let sim = simulate(&sc).unwrap();
        assert_eq!(sim.n_de, 300);
        assert_eq!(sim.truth.is_de.iter().filter(|&&d| d).count(), 300);
        let up = (0..sim.scenario.m)
            .filter(|&i| sim.truth.is_de[i] && sim.truth.gamma[i] > 0.0)
            .count();
        // signs are assigned to 150 up / 150 down; a drawn magnitude can be
        // negative, flipping the realized sign of a few genes
        assert!((up as f64 - 150.0).abs() < 40.0, "up = {up}");
    }

    #[test]
    fn benchmark_shift_magnitudes_obey_clt_bound() {
        for preset in ["table1_70_90", "table2_30_50"] {
            let sc = SimScenario::preset(preset).unwrap().with_seed(11);
            let sim = simulate(&sc).unwrap();
            let n_de = sim.n_de;
            let n_up = (sc.up_fraction * n_de as f64).round() as usize;
            let de_start = sc.m - n_de;
            // recover the drawn magnitudes: +gamma for the up block,
            // -gamma for the down block
            let mut total = 0.0;
            for k in 0..n_de {
                let g = sim.truth.gamma[de_start + k];
                total += if k < n_up { g } else { -g };
            }
            let mean = total / n_de as f64;
            let bound = 3.0 / (n_de as f64).sqrt();
            assert!(
                (mean - 3f64.ln()).abs() < bound,
                "{preset}: mean {mean} outside log3 +- {bound}"
            );
        }
    }

    #[test]
    fn lognormal_residual_sd_matches_sigma() {
        let sc = SimScenario::preset("table1_30_50").unwrap().with_seed(5);
        let sim = simulate(&sc).unwrap();
        let m = sc.m;
        // two-way residual variance inside group 1 (columns 0..4):
        // r_ij = x_ij - row_mean - col_mean + grand_mean
        let cols = [0usize, 1, 2, 3];
        let x = Array2::from_shape_fn((m, 4), |(i, k)| {
            (sim.counts.counts[[i, cols[k]]] + 1.0).ln()
        });
        let row_means: Vec<f64> = (0..m).map(|i| x.row(i).sum() / 4.0).collect();
        let col_means: Vec<f64> = (0..4).map(|k| x.column(k).sum() / m as f64).collect();
        let grand = row_means.iter().sum::<f64>() / m as f64;
        let mut ss = 0.0;
        for i in 0..m {
            for k in 0..4 {
                let r = x[[i, k]] - row_means[i] - col_means[k] + grand;
                ss += r * r;
            }
        }
        let sd = (ss / ((m - 1) as f64 * 3.0)).sqrt();
        assert!((sd - 0.5).abs() < 0.05, "residual sd = {sd}");
    }

    #[test]
    fn negbinomial_counts_are_overdispersed_integers() {
        let sc = SimScenario::preset("table2_30_50").unwrap().with_seed(17);
        let sim = simulate(&sc).unwrap();
        for &c in sim.counts.counts.iter() {
            assert!(c.fract() == 0.0 && c >= 0.0);
        }
    }

    #[test]
    fn multinomial_draw_sums_to_n() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let probs = vec![0.1, 0.4, 0.2, 0.3];
        for n in [0u64, 1, 100, 1_000_000] {
            let out = multinomial_draw(&mut rng, n, &probs).unwrap();
            assert_eq!(out.iter().sum::<u64>(), n);
        }
    }

    #[test]
    fn normal_sample_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let k = 100_000;
        let draws: Vec<f64> = (0..k).map(|_| normal.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / k as f64;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn neg_binomial_moment_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mean = 50.0;
        let phi = 0.3;
        let k = 100_000;
        let draws: Vec<f64> = (0..k)
            .map(|_| neg_binomial_draw(&mut rng, mean, phi).unwrap() as f64)
            .collect();
        let sample_mean = draws.iter().sum::<f64>() / k as f64;
        let sample_var =
            draws.iter().map(|v| (v - sample_mean) * (v - sample_mean)).sum::<f64>() / k as f64;
        let expect_var = mean + phi * mean * mean;
        assert!((sample_mean - mean).abs() < 0.05 * mean);
        assert!(
            (sample_var - expect_var).abs() < 0.05 * expect_var,
            "var {sample_var} vs {expect_var}"
        );
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        assert!(multinomial_draw(&mut rng, 10, &[]).is_err());
        assert!(multinomial_draw(&mut rng, 10, &[0.0, 0.0]).is_err());
        assert!(neg_binomial_draw(&mut rng, -1.0, 0.1).is_err());
        let mut sc = small_multinomial_scenario();
        sc.de_fraction = 1.5;
        assert!(simulate(&sc).is_err());
        assert!(SimScenario::preset("table1_40_50").is_err());
        assert!(SimScenario::preset("nonsense").is_err());
    }

    #[test]
    fn replicate_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..100).map(|i| replicate_seed(42, i)).collect();
        let mut dedup = seeds.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), seeds.len());
    }
}
