//! Maximum-cluster tests.
//!
//! A single test thresholds the image at `τ`, takes the largest cluster of
//! the super level set `{Y >= τ}` and/or the sub level set `{Y <= -τ}`, and
//! rejects "no signal" when that size reaches `φ`. The threshold `φ` either
//! follows the logarithmic rule `K₀ log N` or is calibrated from simulated
//! null images. The multiple test walks the dyadic scale `a_k = 2^-k r`
//! until a rejection or until `a_k` drops below the detectability floor `τ₀`.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{scan_values, ClusterScratch, LevelSide};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::noise::{NoiseModel, ObservedImage, P_CRITICAL};
use crate::seed;

pub const CALIBRATION_SCHEMA_VERSION: u32 = 1;

/// Multiplier in `K₀ = factor / log(1 + 18 |p_E - p_c|)`.
pub const DEFAULT_K0_FACTOR: f64 = 2.0;

/// Which level sets a test looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestSide {
    Plus,
    Minus,
    #[default]
    Both,
}

impl TestSide {
    fn wants(self, side: LevelSide) -> bool {
        matches!(
            (self, side),
            (TestSide::Both, _) | (TestSide::Plus, LevelSide::Plus) | (TestSide::Minus, LevelSide::Minus)
        )
    }
}

impl std::str::FromStr for TestSide {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" | "+" => Ok(TestSide::Plus),
            "minus" | "-" => Ok(TestSide::Minus),
            "both" => Ok(TestSide::Both),
            other => Err(Error::Config(format!("unknown side `{other}` (plus, minus, both)"))),
        }
    }
}

/// `T₊(a)` and/or `T₋(a)` for one image, with crossing flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LevelStatistics {
    pub t_plus: Option<usize>,
    pub t_minus: Option<usize>,
    pub crossing_plus: bool,
    pub crossing_minus: bool,
}

impl LevelStatistics {
    pub fn max(&self) -> usize {
        self.t_plus.unwrap_or(0).max(self.t_minus.unwrap_or(0))
    }

    /// Every evaluated level set contains a spanning cluster.
    pub fn all_crossing(&self) -> bool {
        (self.t_plus.is_none() || self.crossing_plus) && (self.t_minus.is_none() || self.crossing_minus)
    }
}

pub(crate) fn level_statistics(
    scratch: &mut ClusterScratch,
    lattice: Lattice,
    values: &[f64],
    a: f64,
    side: TestSide,
) -> LevelStatistics {
    let mut out = LevelStatistics::default();
    if side.wants(LevelSide::Plus) {
        let s = scan_values(scratch, lattice, values, a, LevelSide::Plus);
        out.t_plus = Some(s.max_cluster_size);
        out.crossing_plus = s.crossing;
    }
    if side.wants(LevelSide::Minus) {
        let s = scan_values(scratch, lattice, values, a, LevelSide::Minus);
        out.t_minus = Some(s.max_cluster_size);
        out.crossing_minus = s.crossing;
    }
    out
}

/// `K₀` and `φ = K₀ ln N` from the lower bound on `λ(p_E)⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryThreshold {
    pub p_e: f64,
    pub k0: f64,
    pub phi: f64,
}

/// `K₀ = factor / ln(1 + 18 (1/2 - p_E))`, infinite as `p_E → 1/2`.
pub fn k0_floor(p_e: f64, factor: f64) -> Result<f64> {
    if !(p_e > 0.0 && p_e < P_CRITICAL) {
        return Err(Error::invalid(
            "p_E",
            format!("error probability must lie in (0, 1/2), got {p_e}"),
        ));
    }
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::invalid("factor", format!("must be positive, got {factor}")));
    }
    Ok(factor / (18.0 * (P_CRITICAL - p_e)).ln_1p())
}

pub fn phi_theory(n: usize, p_e: f64) -> Result<TheoryThreshold> {
    phi_theory_with_factor(n, p_e, DEFAULT_K0_FACTOR)
}

pub fn phi_theory_with_factor(n: usize, p_e: f64, factor: f64) -> Result<TheoryThreshold> {
    if n < 2 {
        return Err(Error::invalid("N", "logarithmic threshold needs N >= 2"));
    }
    let k0 = k0_floor(p_e, factor)?;
    Ok(TheoryThreshold {
        p_e,
        k0,
        phi: k0 * (n as f64).ln(),
    })
}

/// How `φ` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PhiMode {
    Theory { k0: f64 },
    Calibrated { alpha_target: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub n: usize,
    pub tau: f64,
    pub phi: f64,
    pub mode: PhiMode,
    pub side: TestSide,
}

impl TestConfig {
    /// Logarithmic threshold with a user-fixed `K₀`.
    pub fn with_k0(n: usize, tau: f64, k0: f64, side: TestSide) -> Result<Self> {
        if !(k0.is_finite() && k0 > 0.0) {
            return Err(Error::invalid("K0", format!("must be positive, got {k0}")));
        }
        if n < 2 {
            return Err(Error::invalid("N", "logarithmic threshold needs N >= 2"));
        }
        Self::checked(TestConfig {
            n,
            tau,
            phi: k0 * (n as f64).ln(),
            mode: PhiMode::Theory { k0 },
            side,
        })
    }

    /// `K₀` from the noise law: `p_E = P(ε >= τ/σ)`.
    pub fn theory(n: usize, tau: f64, model: &NoiseModel, sigma: f64, side: TestSide) -> Result<Self> {
        let p_e = model.upper_tail(tau / sigma);
        let th = phi_theory(n, p_e)?;
        Self::with_k0(n, tau, th.k0, side)
    }

    pub fn calibrated(table: &CalibrationTable) -> Result<Self> {
        Self::checked(TestConfig {
            n: table.n,
            tau: table.tau,
            phi: table.phi,
            mode: PhiMode::Calibrated {
                alpha_target: table.alpha_target,
            },
            side: table.side,
        })
    }

    fn checked(self) -> Result<Self> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::invalid("tau", format!("threshold must be >= 0, got {}", self.tau)));
        }
        if self.phi.is_nan() || self.phi < 0.0 {
            return Err(Error::invalid("phi", format!("must be >= 0, got {}", self.phi)));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: usize,
    pub t_plus: Option<usize>,
    pub t_minus: Option<usize>,
    pub phi: f64,
    pub reject: bool,
    pub side: TestSide,
    pub tau: f64,
}

/// Rejects iff the largest cluster reaches `φ` (inclusive).
pub fn max_cluster_test(image: &ObservedImage, config: &TestConfig) -> Result<TestResult> {
    let found = image.lattice().side();
    if found != config.n {
        return Err(Error::LatticeMismatch {
            expected: config.n,
            found,
        });
    }
    let mut scratch = ClusterScratch::new();
    Ok(test_with_scratch(&mut scratch, image, config))
}

pub(crate) fn test_with_scratch(scratch: &mut ClusterScratch, image: &ObservedImage, config: &TestConfig) -> TestResult {
    let stats = level_statistics(scratch, image.lattice(), image.values(), config.tau, config.side);
    let statistic = stats.max();
    TestResult {
        statistic,
        t_plus: stats.t_plus,
        t_minus: stats.t_minus,
        phi: config.phi,
        reject: statistic as f64 >= config.phi,
        side: config.side,
        tau: config.tau,
    }
}

/// Sorted sample of the null statistic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullDistribution {
    sorted: Vec<usize>,
}

impl NullDistribution {
    pub fn from_sample(mut sample: Vec<usize>) -> Self {
        sample.sort_unstable();
        NullDistribution { sorted: sample }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[usize] {
        &self.sorted
    }

    /// Empirical quantile `inf{t : F̂(t) >= q}`.
    pub fn quantile(&self, q: f64) -> usize {
        let m = self.sorted.len();
        let rank = ((q * m as f64) - 1e-9).ceil().max(1.0) as usize;
        self.sorted[rank.min(m) - 1]
    }

    /// `φ = q_{1-α} + 1`, so that `T >= φ` rejects at most a fraction `α`
    /// of the sample.
    pub fn phi_at(&self, alpha: f64) -> f64 {
        self.quantile(1.0 - alpha) as f64 + 1.0
    }

    pub fn rejection_rate(&self, phi: f64) -> f64 {
        let above = self.sorted.len() - self.sorted.partition_point(|&t| (t as f64) < phi);
        above as f64 / self.sorted.len() as f64
    }
}

/// Simulation parameters for a null distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpec {
    pub n: usize,
    pub model: NoiseModel,
    pub sigma: f64,
    pub side: TestSide,
    pub replicates: usize,
    pub seed: u64,
}

impl NullSpec {
    fn validate(&self) -> Result<Lattice> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "need at least one replicate"));
        }
        Lattice::new(self.n)
    }

    /// Null statistics at each threshold in `taus`, one column per threshold.
    /// Replicate `i` is the image `σε` drawn from seed `derive_seed(seed, i)`,
    /// identical to `apply_noise(zero, σ, model, derive_seed(seed, i))`.
    pub fn simulate(&self, taus: &[f64]) -> Result<Vec<NullDistribution>> {
        let lattice = self.validate()?;
        let zero = vec![0.0; lattice.site_count()];
        let rows: Vec<Vec<usize>> = (0..self.replicates as u64)
            .into_par_iter()
            .map_init(
                || (ClusterScratch::new(), Vec::new()),
                |(scratch, buf), i| {
                    crate::noise::noisy_values_into(&zero, self.sigma, &self.model, seed::derive_seed(self.seed, i), buf);
                    taus.iter()
                        .map(|&tau| level_statistics(scratch, lattice, buf, tau, self.side).max())
                        .collect()
                },
            )
            .collect();
        Ok((0..taus.len())
            .map(|j| NullDistribution::from_sample(rows.iter().map(|r| r[j]).collect()))
            .collect())
    }
}

/// Levels recorded in every calibration table besides the target.
pub const STANDARD_ALPHAS: [f64; 5] = [0.5, 0.1, 0.05, 0.01, 0.001];

/// Persisted calibration of `φ` for one `(N, noise, σ, τ)` setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub schema_version: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub family: String,
    pub params: serde_json::Value,
    pub sigma: f64,
    pub tau: f64,
    #[serde(rename = "M")]
    pub replicates: usize,
    pub seed: u64,
    pub side: TestSide,
    pub alpha_target: f64,
    pub phi: f64,
    /// `(α, φ)` pairs, α decreasing.
    pub quantiles: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl CalibrationTable {
    pub fn phi_for(&self, alpha: f64) -> Option<f64> {
        self.quantiles.iter().find(|(a, _)| *a == alpha).map(|&(_, p)| p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: CalibrationTable = serde_json::from_str(s)?;
        if t.schema_version != CALIBRATION_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "calibration schema version {} unsupported (expected {CALIBRATION_SCHEMA_VERSION})",
                t.schema_version
            )));
        }
        Ok(t)
    }
}

/// Family parameters as a JSON object (without the family tag).
pub(crate) fn family_params(model: &NoiseModel) -> serde_json::Value {
    let mut v = serde_json::to_value(model.family()).expect("noise family serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("family");
    }
    v
}

/// Calibrates `φ` as the empirical `(1 - α)`-quantile of the null statistic
/// plus one.
pub fn calibrate_phi(spec: &NullSpec, tau: f64, alpha_target: f64) -> Result<CalibrationTable> {
    if !(alpha_target > 0.0 && alpha_target <= 0.5) {
        return Err(Error::invalid(
            "alpha",
            format!("target level must lie in (0, 0.5], got {alpha_target}"),
        ));
    }
    if spec.replicates < 100 {
        return Err(Error::invalid("replicates", format!("need at least 100, got {}", spec.replicates)));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::invalid("tau", format!("must be >= 0, got {tau}")));
    }
    let dist = spec.simulate(&[tau])?.pop().expect("one threshold");
    let mut alphas: Vec<f64> = STANDARD_ALPHAS.to_vec();
    if !alphas.contains(&alpha_target) {
        alphas.push(alpha_target);
    }
    alphas.sort_by(|a, b| b.total_cmp(a));
    let mut warnings = Vec::new();
    if (spec.replicates as f64) * alpha_target < 5.0 {
        warnings.push(format!(
            "M * alpha = {} < 5: the {}-quantile rests on fewer than 5 exceedances",
            spec.replicates as f64 * alpha_target,
            1.0 - alpha_target
        ));
    }
    Ok(CalibrationTable {
        schema_version: CALIBRATION_SCHEMA_VERSION,
        n: spec.n,
        family: spec.model.family_name().to_string(),
        params: family_params(&spec.model),
        sigma: spec.sigma,
        tau,
        replicates: spec.replicates,
        seed: spec.seed,
        side: spec.side,
        alpha_target,
        phi: dist.phi_at(alpha_target),
        quantiles: alphas.iter().map(|&a| (a, dist.phi_at(a))).collect(),
        warnings,
        config_hash: None,
    })
}

// ---------------------------------------------------------------------------
// multiple testing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LevelAdjust {
    #[default]
    Bonferroni,
    None,
}

/// Supplies `φ` for the `k`-th threshold `a` at per-test level `level`.
pub trait PhiProvider {
    fn phi(&self, k: usize, a: f64, level: f64) -> Result<f64>;
}

/// Same `φ` at every threshold.
#[derive(Debug, Clone, Copy)]
pub struct FixedPhi(pub f64);

impl PhiProvider for FixedPhi {
    fn phi(&self, _: usize, _: f64, _: f64) -> Result<f64> {
        Ok(self.0)
    }
}

/// `φ(a) = K₀(p_E(a)) ln N` with `p_E(a) = P(ε >= a/σ)`; ignores the level.
#[derive(Debug, Clone)]
pub struct TheoryPhi {
    pub n: usize,
    pub model: NoiseModel,
    pub sigma: f64,
    pub factor: f64,
}

impl PhiProvider for TheoryPhi {
    fn phi(&self, _: usize, a: f64, _: f64) -> Result<f64> {
        let p_e = self.model.upper_tail(a / self.sigma);
        Ok(phi_theory_with_factor(self.n, p_e, self.factor)?.phi)
    }
}

/// Null distributions simulated at each schedule threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedPhi {
    thresholds: Vec<f64>,
    nulls: Vec<NullDistribution>,
}

impl CalibratedPhi {
    pub fn simulate(spec: &NullSpec, schedule: &Schedule) -> Result<Self> {
        let nulls = spec.simulate(&schedule.thresholds)?;
        Ok(CalibratedPhi {
            thresholds: schedule.thresholds.clone(),
            nulls,
        })
    }

    pub fn null(&self, k: usize) -> Option<&NullDistribution> {
        self.nulls.get(k.checked_sub(1)?)
    }
}

impl PhiProvider for CalibratedPhi {
    fn phi(&self, k: usize, a: f64, level: f64) -> Result<f64> {
        let dist = self
            .null(k)
            .ok_or_else(|| Error::invalid("k", format!("no calibration for threshold index {k}")))?;
        let expected = self.thresholds[k - 1];
        if (expected - a).abs() > 1e-12 * expected.abs().max(1.0) {
            return Err(Error::invalid(
                "schedule",
                format!("calibrated for a_{k} = {expected}, asked for {a}"),
            ));
        }
        Ok(dist.phi_at(level))
    }
}

/// Dyadic thresholds `a_k = 2^-k r`, `k = 1..=k_max`,
/// `k_max = min(ceil(log2(r / τ₀)), N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub r: f64,
    pub tau0: f64,
    pub k_max: usize,
    pub thresholds: Vec<f64>,
}

impl Schedule {
    pub fn new(r: f64, tau0: f64, n: usize) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid("r", format!("detector range must be positive, got {r}")));
        }
        if !(tau0 > 0.0) {
            return Err(Error::invalid("tau0", format!("must be positive, got {tau0}")));
        }
        if tau0 >= r {
            return Err(Error::invalid("tau0", format!("must be below r = {r}, got {tau0}")));
        }
        let k_max = ((r / tau0).log2() - 1e-12).ceil().max(1.0) as usize;
        let k_max = k_max.min(n.max(1));
        let thresholds = (1..=k_max).map(|k| r * 0.5f64.powi(k as i32)).collect();
        Ok(Schedule {
            r,
            tau0,
            k_max,
            thresholds,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiTestConfig {
    pub r: f64,
    pub tau0: f64,
    pub alpha: f64,
    pub level_adjust: LevelAdjust,
    pub side: TestSide,
    /// Leave out thresholds at which every level set already spans the lattice.
    pub skip_crossing: bool,
}

impl MultiTestConfig {
    pub fn new(r: f64, tau0: f64, alpha: f64) -> Self {
        MultiTestConfig {
            r,
            tau0,
            alpha,
            level_adjust: LevelAdjust::Bonferroni,
            side: TestSide::Both,
            skip_crossing: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub k: usize,
    pub a: f64,
    pub t_plus: Option<usize>,
    pub t_minus: Option<usize>,
    pub crossing_plus: bool,
    pub crossing_minus: bool,
    /// Not tested and not counted in the family size.
    pub skipped: bool,
    pub phi: Option<f64>,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTestResult {
    pub decisions: Vec<ThresholdDecision>,
    pub overall_reject: bool,
    pub first_rejecting_k: Option<usize>,
    pub k_max: usize,
    pub family_size: usize,
    pub per_test_level: f64,
}

/// Runs the dyadic multiple test on an image within `[-r, r]`.
pub fn multi_test(
    image: &ObservedImage,
    config: &MultiTestConfig,
    provider: &dyn PhiProvider,
) -> Result<MultiTestResult> {
    let mut scratch = ClusterScratch::new();
    multi_test_with_scratch(&mut scratch, image, config, provider)
}

pub(crate) fn multi_test_with_scratch(
    scratch: &mut ClusterScratch,
    image: &ObservedImage,
    config: &MultiTestConfig,
    provider: &dyn PhiProvider,
) -> Result<MultiTestResult> {
    let lattice = image.lattice();
    let schedule = Schedule::new(config.r, config.tau0, lattice.side())?;
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {}", config.alpha)));
    }
    let r = config.r;
    if !image.range().is_some_and(|range| range <= r) && image.values().iter().any(|v| v.abs() > r) {
        return Err(Error::invalid(
            "image",
            format!("values exceed the detector range {r}; truncate the image first"),
        ));
    }

    // Spanning clusters are an increasing event, so the skipped thresholds
    // form a suffix of the schedule.
    let stats: Vec<LevelStatistics> = schedule
        .thresholds
        .iter()
        .map(|&a| level_statistics(scratch, lattice, image.values(), a, config.side))
        .collect();
    let skipped: Vec<bool> = stats
        .iter()
        .map(|s| config.skip_crossing && s.all_crossing())
        .collect();
    let family_size = skipped.iter().filter(|&&s| !s).count();
    let per_test_level = match config.level_adjust {
        LevelAdjust::Bonferroni if family_size > 0 => config.alpha / family_size as f64,
        _ => config.alpha,
    };

    let mut decisions = Vec::with_capacity(schedule.k_max);
    let mut first_rejecting_k = None;
    for (idx, (&a, s)) in schedule.thresholds.iter().zip(&stats).enumerate() {
        let k = idx + 1;
        let mut d = ThresholdDecision {
            k,
            a,
            t_plus: s.t_plus,
            t_minus: s.t_minus,
            crossing_plus: s.crossing_plus,
            crossing_minus: s.crossing_minus,
            skipped: skipped[idx],
            phi: None,
            reject: false,
        };
        if !d.skipped {
            let phi = provider.phi(k, a, per_test_level)?;
            d.phi = Some(phi);
            d.reject = s.max() as f64 >= phi;
        }
        decisions.push(d);
        if d.reject {
            first_rejecting_k = Some(k);
            break;
        }
    }
    Ok(MultiTestResult {
        decisions,
        overall_reject: first_rejecting_k.is_some(),
        first_rejecting_k,
        k_max: schedule.k_max,
        family_size,
        per_test_level,
    })
}

// ---------------------------------------------------------------------------
// uncertainty

/// `(N²)^(1/N²) - 1`, computed as `expm1(ln(N²) / N²)`.
pub fn lattice_factor(n: usize) -> f64 {
    let sites = (n as f64) * (n as f64);
    (sites.ln() / sites).exp_m1()
}

/// `(1/18)((N²)^(1/N²) - 1)`: if `|p_E - 1/2|` is below this, `φ > N²` and the
/// test can never reject. Zero for `N = 1`.
pub fn never_reject_bound(n: usize) -> f64 {
    lattice_factor(n) / 18.0
}

/// `s(x) = (1/18)(e^{-x ln x} - 1)` on `(0, 1]`.
pub fn s_function(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x <= 1.0, "s(x) is defined on (0, 1], got {x}");
    (-x * x.ln()).exp_m1() / 18.0
}

/// Maximizer and maximum of `g` on `(0, 1]`: grid search then golden-section
/// refinement around the best grid point.
fn maximize_unit(g: impl Fn(f64) -> f64) -> (f64, f64) {
    const GRID: usize = 10_000;
    let step = 1.0 / GRID as f64;
    let mut best = (step, g(step));
    for i in 2..=GRID {
        let x = i as f64 * step;
        let v = g(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let (mut lo, mut hi) = ((best.0 - step).max(f64::MIN_POSITIVE), (best.0 + step).min(1.0));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = hi - inv_phi * (hi - lo);
        let x2 = lo + inv_phi * (hi - lo);
        if g(x1) < g(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    let v = g(x);
    if v >= best.1 { (x, v) } else { best }
}

/// `(argmax, max)` of `s` on `(0, 1]`; analytically `x = 1/e`.
pub fn s_max() -> (f64, f64) {
    static CELL: OnceLock<(f64, f64)> = OnceLock::new();
    *CELL.get_or_init(|| maximize_unit(s_function))
}

/// Smallest `M` with `s(x) <= M √x` on `(0, 1]`.
pub fn weak_bound_constant() -> f64 {
    static CELL: OnceLock<f64> = OnceLock::new();
    *CELL.get_or_init(|| maximize_unit(|x| s_function(x) / x.sqrt()).1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    /// Signal-to-noise ratio `a/σ`.
    pub rho: f64,
    #[serde(rename = "N")]
    pub n: usize,
    /// `P(0 < ε < ρ)`.
    pub lhs: f64,
    /// `((N²)^(1/N²) - 1) / 18`.
    pub rhs: f64,
    pub detectable: bool,
    /// `max s(x)` on `(0, 1]`; any `P(0 < ε < ρ)` above it passes for every `N`.
    pub sufficient_constant: f64,
    pub weak_bound_m: f64,
    /// `M / (f(0) N)`, when the noise has a density.
    pub weak_bound_rho: Option<f64>,
}

fn require_continuous_at_zero(model: &NoiseModel) -> Result<()> {
    let mass = model.atom(0.0);
    if mass > 0.0 {
        return Err(Error::AtomAtZero { mass });
    }
    Ok(())
}

/// Necessary condition for detectability: `18 P(0 < ε < ρ) > (N²)^(1/N²) - 1`.
pub fn uncertainty_check(model: &NoiseModel, rho: f64, n: usize) -> Result<UncertaintyReport> {
    require_continuous_at_zero(model)?;
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::invalid("rho", format!("must be >= 0, got {rho}")));
    }
    if n == 0 {
        return Err(Error::invalid("N", "must be positive"));
    }
    let lhs = model.prob_zero_to(rho);
    let factor = lattice_factor(n);
    Ok(UncertaintyReport {
        rho,
        n,
        lhs,
        rhs: factor / 18.0,
        detectable: 18.0 * lhs > factor,
        sufficient_constant: s_max().1,
        weak_bound_m: weak_bound_constant(),
        weak_bound_rho: weak_uncertainty_bound(model, n).ok(),
    })
}

/// `M / (f(0) N)` with `M = max s(x)/√x`.
pub fn weak_uncertainty_bound(model: &NoiseModel, n: usize) -> Result<f64> {
    let f0 = model.density(0.0).ok_or_else(|| Error::NoDensity {
        family: model.family_name().to_string(),
    })?;
    if f0 <= 0.0 {
        return Err(Error::NoDensity {
            family: model.family_name().to_string(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("N", "must be positive"));
    }
    Ok(weak_bound_constant() / (f0 * n as f64))
}

/// Smallest detectable signal-to-noise ratio `ρ*` times `σ`.
pub fn tau0_from_uncertainty(model: &NoiseModel, sigma: f64, n: usize) -> Result<f64> {
    require_continuous_at_zero(model)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if n == 0 {
        return Err(Error::invalid("N", "must be positive"));
    }
    let factor = lattice_factor(n);
    let ok = |rho: f64| 18.0 * model.prob_zero_to(rho) > factor;
    let mut hi = 1e-6;
    while !ok(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::invalid("noise", "no detectable signal-to-noise ratio exists"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(sigma * hi)
}
