//! Monte Carlo site percolation on the triangular lattice.
//!
//! Site `i` of a configuration with seed `s` is occupied iff
//! `unit_uniform(s, i) < p`, so a lazily explored cluster and a fully sampled
//! mask see the same configuration.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterScratch, SiteMask};
use crate::detect::{
    self, max_cluster_test, multi_test_with_scratch, test_with_scratch, FixedPhi, MultiTestConfig, NullSpec,
    TestConfig, TestSide,
};
use crate::error::{Error, Result};
use crate::lattice::{DiscretizedPicture, Lattice};
use crate::noise::{apply_noise, NoiseModel, P_CRITICAL};
use crate::seed::{derive_seed, rng_for, unit_uniform};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const BOOTSTRAP_RESAMPLES: usize = 500;

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("p", format!("occupation probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PercolationSample {
    pub lattice: Lattice,
    pub p: f64,
    pub mask: SiteMask,
    pub seed: u64,
}

pub fn sample_configuration(n: usize, p: f64, seed: u64) -> Result<PercolationSample> {
    check_p(p)?;
    let lattice = Lattice::new(n)?;
    let mask = SiteMask::from_fn(lattice, |i| unit_uniform(seed, i as u64) < p);
    Ok(PercolationSample { lattice, p, mask, seed })
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl LinearFit {
    /// `None` for fewer than two points or constant `x`.
    pub fn fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
        let n = x.len();
        if n < 2 || n != y.len() {
            return None;
        }
        let nf = n as f64;
        let mx = x.iter().sum::<f64>() / nf;
        let my = y.iter().sum::<f64>() / nf;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
        Some(LinearFit {
            slope,
            intercept: my - slope * mx,
            r_squared,
            points: n,
        })
    }
}

/// Size of the occupied cluster containing `start` (0 if unoccupied), found by
/// breadth-first search that only samples the sites it touches.
fn center_cluster_size(
    lattice: Lattice,
    p: f64,
    seed: u64,
    start: usize,
    state: &mut Vec<u8>,
    touched: &mut Vec<usize>,
    queue: &mut VecDeque<usize>,
) -> usize {
    const OPEN: u8 = 1;
    const CLOSED: u8 = 2;
    state.resize(lattice.site_count(), 0);
    let probe = |i: usize, state: &mut Vec<u8>, touched: &mut Vec<usize>| -> bool {
        if state[i] != 0 {
            return false;
        }
        touched.push(i);
        let open = unit_uniform(seed, i as u64) < p;
        state[i] = if open { OPEN } else { CLOSED };
        open
    };
    let mut size = 0;
    if probe(start, state, touched) {
        queue.push_back(start);
        size = 1;
    }
    while let Some(i) = queue.pop_front() {
        for j in lattice.neighbor_indices(i) {
            if probe(j, state, touched) {
                size += 1;
                queue.push_back(j);
            }
        }
    }
    for &i in touched.iter() {
        state[i] = 0;
    }
    touched.clear();
    size
}

/// Sizes of the cluster at the center site over `m` configurations;
/// configuration `i` uses seed `derive_seed(seed, i)`.
pub fn center_cluster_sizes(n: usize, p: f64, m: usize, seed: u64) -> Result<Vec<usize>> {
    check_p(p)?;
    let lattice = Lattice::new(n)?;
    let start = lattice.index(lattice.center());
    Ok((0..m as u64)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new(), VecDeque::new()),
            |(state, touched, queue), i| {
                center_cluster_size(lattice, p, derive_seed(seed, i), start, state, touched, queue)
            },
        )
        .collect())
}

/// `tail[n-1] = P̂(|C| >= n)` for `n = 1..=max`.
fn tail_from_sizes(sizes: &[usize]) -> Vec<f64> {
    let max = sizes.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &s in sizes {
        counts[s] += 1;
    }
    let m = sizes.len() as f64;
    let mut tail = vec![0.0; max];
    let mut above = 0usize;
    for k in (1..=max).rev() {
        above += counts[k];
        tail[k - 1] = above as f64 / m;
    }
    tail
}

/// `min_n -ln(tail(n)) / n`; `None` when the tail is empty.
fn lambda_from_tail(tail: &[f64]) -> Option<f64> {
    tail.iter()
        .enumerate()
        .map(|(k, &t)| -t.ln() / (k + 1) as f64)
        .min_by(f64::total_cmp)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub p: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub replicates: usize,
    pub seed: u64,
    /// `tail[k] = P̂(|C| >= k + 1)`.
    pub tail: Vec<f64>,
    pub chi_hat: f64,
    pub chi_se: f64,
    pub lambda_hat: Option<f64>,
    pub lambda_se: Option<f64>,
    /// `ln tail(n)` against `n` over points with `tail(n) >= 50 / M`.
    pub log_tail_fit: Option<LinearFit>,
    pub occupied_centers: usize,
    pub supercritical: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStatsOptions {
    pub allow_supercritical: bool,
    pub bootstrap: usize,
}

impl Default for ClusterStatsOptions {
    fn default() -> Self {
        ClusterStatsOptions {
            allow_supercritical: false,
            bootstrap: BOOTSTRAP_RESAMPLES,
        }
    }
}

pub fn estimate_cluster_stats(n: usize, p: f64, m: usize, seed: u64) -> Result<ClusterStats> {
    estimate_cluster_stats_with(n, p, m, seed, &ClusterStatsOptions::default())
}

pub fn estimate_cluster_stats_with(
    n: usize,
    p: f64,
    m: usize,
    seed: u64,
    opts: &ClusterStatsOptions,
) -> Result<ClusterStats> {
    check_p(p)?;
    if m == 0 {
        return Err(Error::invalid("M", "need at least one replicate"));
    }
    let supercritical = p >= P_CRITICAL;
    if supercritical && !opts.allow_supercritical {
        return Err(Error::invalid(
            "p",
            format!("p = {p} is not subcritical; pass allow_supercritical to run anyway"),
        ));
    }
    let sizes = center_cluster_sizes(n, p, m, seed)?;
    let tail = tail_from_sizes(&sizes);
    let chi_hat: f64 = tail.iter().sum();
    let lambda_hat = if supercritical { None } else { lambda_from_tail(&tail) };

    let mut notes = vec![format!(
        "finite lattice N = {n}: cluster at the center site, truncated by the boundary"
    )];
    if tail.is_empty() {
        notes.push("no occupied center in any replicate: tail is empty".into());
    }
    if supercritical {
        notes.push("supercritical: tail exponent not fitted".into());
    }

    let floor = 50.0 / m as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = tail
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= floor)
        .map(|(k, &t)| ((k + 1) as f64, t.ln()))
        .unzip();
    let log_tail_fit = if supercritical { None } else { LinearFit::fit(&xs, &ys) };

    // bootstrap over replicates
    let mut rng = rng_for(seed, u64::MAX);
    let mut chis = Vec::with_capacity(opts.bootstrap);
    let mut lambdas = Vec::with_capacity(opts.bootstrap);
    let mut resample = vec![0usize; m];
    for _ in 0..opts.bootstrap {
        for slot in resample.iter_mut() {
            *slot = sizes[rng.random_range(0..m)];
        }
        let t = tail_from_sizes(&resample);
        chis.push(t.iter().sum::<f64>());
        if let Some(l) = lambda_from_tail(&t) {
            lambdas.push(l);
        }
    }
    let chi_se = if chis.len() > 1 { mean_sd(&chis).1 } else { 0.0 };
    let lambda_se = (!supercritical && lambdas.len() > 1).then(|| mean_sd(&lambdas).1);

    Ok(ClusterStats {
        p,
        n,
        replicates: m,
        seed,
        occupied_centers: sizes.iter().filter(|&&s| s > 0).count(),
        tail,
        chi_hat,
        chi_se,
        lambda_hat,
        lambda_se,
        log_tail_fit,
        supercritical,
        notes,
    })
}

impl ClusterStats {
    /// `n,tail` rows preceded by `#` parameter lines.
    pub fn tail_csv(&self) -> String {
        let mut out = format!(
            "# schema_version={REPORT_SCHEMA_VERSION}\n# seed={}\n# p={} N={} M={}\nn,tail\n",
            self.seed, self.p, self.n, self.replicates
        );
        for (k, t) in self.tail.iter().enumerate() {
            let _ = writeln!(out, "{},{}", k + 1, t);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBoundReport {
    pub p: f64,
    pub lambda_hat: f64,
    pub lambda_se: Option<f64>,
    pub chi_hat: f64,
    pub chi_se: f64,
    /// `e^-λ̂ / (1 - e^-λ̂)`.
    pub geometric_sum: f64,
    /// `χ̂ <= e^-λ̂ / (1 - e^-λ̂)`.
    pub definitional_ok: bool,
    /// `ln(1 + 18 |p - p_c|)`.
    pub lambda_bound: f64,
    /// `lambda_bound - λ̂`; nonnegative when the bound holds.
    pub lambda_margin: f64,
    pub lambda_bound_ok: bool,
    /// `1 / (18 |p - p_c|)`.
    pub chi_reference: f64,
    /// `χ̂ + 2 se >= 1 / (18 |p - p_c|)`.
    pub chi_lower_ok: bool,
    /// `χ̂ <= 1 / (18 |p - p_c|)`, reported only.
    pub chi_upper_holds: bool,
}

pub fn verify_lambda_bound(stats: &ClusterStats) -> Result<LambdaBoundReport> {
    let lambda_hat = stats.lambda_hat.ok_or_else(|| {
        Error::invalid("stats", "no tail exponent (empty tail or supercritical run)")
    })?;
    let q = (-lambda_hat).exp();
    let geometric_sum = q / -(-lambda_hat).exp_m1();
    let delta = (stats.p - P_CRITICAL).abs();
    let lambda_bound = (18.0 * delta).ln_1p();
    let chi_reference = 1.0 / (18.0 * delta);
    Ok(LambdaBoundReport {
        p: stats.p,
        lambda_hat,
        lambda_se: stats.lambda_se,
        chi_hat: stats.chi_hat,
        chi_se: stats.chi_se,
        geometric_sum,
        definitional_ok: stats.chi_hat <= geometric_sum,
        lambda_bound,
        lambda_margin: lambda_bound - lambda_hat,
        lambda_bound_ok: lambda_hat <= lambda_bound,
        chi_reference,
        chi_lower_ok: stats.chi_hat + 2.0 * stats.chi_se >= chi_reference,
        chi_upper_holds: stats.chi_hat <= chi_reference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEstimate {
    pub p: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub replicates: usize,
    pub frequency: f64,
    pub std_error: f64,
}

/// Fraction of configurations containing a spanning cluster.
pub fn crossing_frequency(n: usize, p: f64, m: usize, seed: u64) -> Result<CrossingEstimate> {
    check_p(p)?;
    let lattice = Lattice::new(n)?;
    if m == 0 {
        return Err(Error::invalid("M", "need at least one replicate"));
    }
    let hits: usize = (0..m as u64)
        .into_par_iter()
        .map_init(ClusterScratch::new, |scratch, i| {
            let s = derive_seed(seed, i);
            scratch.scan(lattice, |j| unit_uniform(s, j as u64) < p).crossing as usize
        })
        .sum();
    let frequency = hits as f64 / m as f64;
    Ok(CrossingEstimate {
        p,
        n,
        replicates: m,
        frequency,
        std_error: (frequency * (1.0 - frequency) / m as f64).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// error rates

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SquareSide {
    Fixed { side: usize },
    /// `round(fraction * N)`, at least 1.
    Fraction { fraction: f64 },
}

impl SquareSide {
    pub fn for_n(&self, n: usize) -> usize {
        match *self {
            SquareSide::Fixed { side } => side,
            SquareSide::Fraction { fraction } => ((fraction * n as f64).round() as usize).max(1),
        }
    }
}

/// Centered square of constant intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub side: SquareSide,
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RatePhi {
    /// `φ = K₀ ln N` with this `K₀` at every `N`.
    FixedK0 { k0: f64 },
    /// `K₀` from `p_E = P(ε >= τ/σ)`.
    Theory,
    /// Fresh calibration per `N`.
    Calibrated { alpha: f64, replicates: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRatePoint {
    #[serde(rename = "N")]
    pub n: usize,
    pub phi: f64,
    pub square_side: usize,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    /// Rate of 0 or 1, left out of the fit.
    pub alpha_censored: bool,
    pub beta_censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateFit {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(rename = "M")]
    pub replicates: usize,
    pub tau: f64,
    pub sigma: f64,
    pub family: String,
    pub signal: SignalSpec,
    pub phi_mode: RatePhi,
    pub points: Vec<ErrorRatePoint>,
    /// `ln α̂` against `φ(N)`; the slope plays the role of `-C₂`.
    pub alpha_fit: Option<LinearFit>,
    /// `ln β̂` against the square side; the slope plays the role of `-C₁`.
    pub beta_fit: Option<LinearFit>,
    pub alpha_nonincreasing: bool,
    pub beta_nonincreasing: bool,
    /// Signal intensity is zero, so `β̂` carries no information.
    pub beta_meaningless: bool,
}

fn rate_fit(points: &[ErrorRatePoint], x: impl Fn(&ErrorRatePoint) -> f64, y: impl Fn(&ErrorRatePoint) -> f64) -> Option<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| {
            let v = y(p);
            v > 0.0 && v < 1.0
        })
        .map(|p| (x(p), y(p).ln()))
        .unzip();
    LinearFit::fit(&xs, &ys)
}

pub struct ErrorRateRequest<'a> {
    pub ns: &'a [usize],
    pub signal: SignalSpec,
    pub model: &'a NoiseModel,
    pub sigma: f64,
    pub tau: f64,
    pub phi_mode: RatePhi,
    pub replicates: usize,
    pub seed: u64,
}

/// Empirical type I and type II error rates of the single test across `N`.
/// For each `N`, null replicate `i` uses `derive_seed(derive_seed(seed, N), 2i)`
/// and signal replicate `i` uses `... 2i + 1`.
pub fn estimate_error_rates(req: &ErrorRateRequest<'_>) -> Result<ErrorRateFit> {
    if req.ns.is_empty() {
        return Err(Error::invalid("Ns", "need at least one lattice side"));
    }
    if let Some(&n) = req.ns.iter().find(|&&n| n < 8) {
        return Err(Error::invalid("Ns", format!("every N must be >= 8, got {n}")));
    }
    if req.replicates == 0 {
        return Err(Error::invalid("M", "need at least one replicate"));
    }
    let mut points = Vec::with_capacity(req.ns.len());
    for &n in req.ns {
        let lattice = Lattice::new(n)?;
        let base = derive_seed(req.seed, n as u64);
        let phi = match req.phi_mode {
            RatePhi::FixedK0 { k0 } => TestConfig::with_k0(n, req.tau, k0, TestSide::Both)?.phi,
            RatePhi::Theory => TestConfig::theory(n, req.tau, req.model, req.sigma, TestSide::Both)?.phi,
            RatePhi::Calibrated { alpha, replicates } => {
                let spec = NullSpec {
                    n,
                    model: req.model.clone(),
                    sigma: req.sigma,
                    side: TestSide::Both,
                    replicates,
                    seed: derive_seed(base, u64::MAX),
                };
                detect::calibrate_phi(&spec, req.tau, alpha)?.phi
            }
        };
        let side = req.signal.side.for_n(n);
        if side > n {
            return Err(Error::invalid("signal", format!("square side {side} exceeds N = {n}")));
        }
        let config = TestConfig {
            n,
            tau: req.tau,
            phi,
            mode: detect::PhiMode::Theory { k0: phi / (n as f64).ln() },
            side: TestSide::Both,
        };
        let zero = DiscretizedPicture::zero(lattice);
        let signal = DiscretizedPicture::centered_square(lattice, side, req.signal.intensity)?;
        let (false_alarms, misses) = (0..req.replicates as u64)
            .into_par_iter()
            .map_init(ClusterScratch::new, |scratch, i| -> Result<(usize, usize)> {
                let null = apply_noise(&zero, req.sigma, req.model, derive_seed(base, 2 * i))?;
                let alt = apply_noise(&signal, req.sigma, req.model, derive_seed(base, 2 * i + 1))?;
                let fa = test_with_scratch(scratch, &null, &config).reject as usize;
                let miss = !test_with_scratch(scratch, &alt, &config).reject as usize;
                Ok((fa, miss))
            })
            .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
        let m = req.replicates as f64;
        let alpha_hat = false_alarms as f64 / m;
        let beta_hat = misses as f64 / m;
        points.push(ErrorRatePoint {
            n,
            phi,
            square_side: side,
            alpha_hat,
            beta_hat,
            alpha_censored: alpha_hat == 0.0 || alpha_hat == 1.0,
            beta_censored: beta_hat == 0.0 || beta_hat == 1.0,
        });
    }
    let nonincreasing = |f: fn(&ErrorRatePoint) -> f64| points.windows(2).all(|w| f(&w[1]) <= f(&w[0]));
    Ok(ErrorRateFit {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: req.seed,
        replicates: req.replicates,
        tau: req.tau,
        sigma: req.sigma,
        family: req.model.to_string(),
        signal: req.signal,
        phi_mode: req.phi_mode,
        alpha_fit: rate_fit(&points, |p| p.phi, |p| p.alpha_hat),
        beta_fit: rate_fit(&points, |p| p.square_side as f64, |p| p.beta_hat),
        alpha_nonincreasing: nonincreasing(|p| p.alpha_hat),
        beta_nonincreasing: nonincreasing(|p| p.beta_hat),
        beta_meaningless: req.signal.intensity == 0.0,
        points,
    })
}

impl ErrorRateFit {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# schema_version={REPORT_SCHEMA_VERSION}\n# seed={}\n# M={} tau={} sigma={} noise={}\n\
             N,phi,square_side,alpha_hat,beta_hat,alpha_censored,beta_censored\n",
            self.seed, self.replicates, self.tau, self.sigma, self.family
        );
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.n, p.phi, p.square_side, p.alpha_hat, p.beta_hat, p.alpha_censored, p.beta_censored
            );
        }
        out
    }
}

// ---------------------------------------------------------------------------
// complexity

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    #[serde(rename = "N")]
    pub n: usize,
    /// Fastest of the repetitions, in seconds.
    pub elapsed: f64,
    pub op_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityTable {
    pub schema_version: u32,
    pub seed: u64,
    pub mode: ProbeMode,
    pub rows: Vec<ComplexityRow>,
    /// `ln elapsed` against `ln N²`; `None` with fewer than two sizes.
    pub time_slope: Option<LinearFit>,
    /// `ln op_count` against `ln N²`.
    pub op_slope: Option<LinearFit>,
}

impl ComplexityTable {
    /// `c = headroom · ops(N₀) / (N₀² log₂ N₀)` at the smallest measured `N₀`.
    pub fn fitted_constant(&self, headroom: f64) -> Option<f64> {
        let r = self.rows.iter().min_by_key(|r| r.n)?;
        let n = r.n as f64;
        Some(headroom * r.op_count as f64 / (n * n * n.log2()))
    }

    /// Whether `op_count <= c N² log₂ N` holds on every row.
    pub fn ops_within(&self, c: f64) -> bool {
        self.rows.iter().all(|r| {
            let n = r.n as f64;
            r.op_count as f64 <= c * n * n * n.log2()
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# schema_version={REPORT_SCHEMA_VERSION}\n# seed={}\n# mode={:?}\nN,elapsed_s,op_count\n",
            self.seed, self.mode
        );
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.n, r.elapsed, r.op_count);
        }
        out
    }
}

/// Times the single test (`τ = 0.5`, Gaussian noise) or the full dyadic
/// multiple test (`r = 1`, `τ₀` from the uncertainty bound, unreachable `φ`)
/// on one null image per `N`. Noise generation is excluded from the timing.
pub fn complexity_probe(ns: &[usize], mode: ProbeMode, repetitions: usize, seed: u64) -> Result<ComplexityTable> {
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("Ns", "lattice sides must be strictly increasing"));
    }
    let model = NoiseModel::gaussian();
    let reps = repetitions.max(1);
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let lattice = Lattice::new(n)?;
        let image = apply_noise(&DiscretizedPicture::zero(lattice), 1.0, &model, derive_seed(seed, n as u64))?;
        let mut scratch = ClusterScratch::new();
        let mut best = f64::INFINITY;
        let mut ops = 0;
        match mode {
            ProbeMode::Single => {
                let cfg = TestConfig::with_k0(n.max(2), 0.5, 1.0, TestSide::Both)?;
                // warm the scratch buffers
                max_cluster_test(&image, &cfg)?;
                test_with_scratch(&mut scratch, &image, &cfg);
                scratch.take_ops();
                for _ in 0..reps {
                    let t = Instant::now();
                    std::hint::black_box(test_with_scratch(&mut scratch, std::hint::black_box(&image), &cfg));
                    best = best.min(t.elapsed().as_secs_f64());
                    ops = scratch.take_ops();
                }
            }
            ProbeMode::Multi => {
                let device = crate::noise::DetectorDevice::new(1.0)?;
                let image = crate::noise::detector_truncate(&image, &device);
                let tau0 = detect::tau0_from_uncertainty(&model, 1.0, n)?;
                let mut cfg = MultiTestConfig::new(1.0, tau0, 0.05);
                cfg.skip_crossing = false;
                let phi = FixedPhi((n * n) as f64 + 1.0);
                multi_test_with_scratch(&mut scratch, &image, &cfg, &phi)?;
                scratch.take_ops();
                for _ in 0..reps {
                    let t = Instant::now();
                    std::hint::black_box(multi_test_with_scratch(&mut scratch, &image, &cfg, &phi)?);
                    best = best.min(t.elapsed().as_secs_f64());
                    ops = scratch.take_ops();
                }
            }
        }
        rows.push(ComplexityRow {
            n,
            elapsed: best,
            op_count: ops,
        });
    }
    let sq = |n: usize| ((n * n) as f64).ln();
    let (x, t): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (sq(r.n), r.elapsed.ln())).unzip();
    let o: Vec<f64> = rows.iter().map(|r| (r.op_count as f64).ln()).collect();
    Ok(ComplexityTable {
        schema_version: REPORT_SCHEMA_VERSION,
        seed,
        mode,
        time_slope: LinearFit::fit(&x, &t),
        op_slope: LinearFit::fit(&x, &o),
        rows,
    })
}
