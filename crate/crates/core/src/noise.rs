//! Symmetric unit-variance noise models, the additive observation model
//! `Y = f + σε`, and the bounded detector device `D(Y) = max(min(Y, r), -r)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::lattice::{DiscretizedPicture, Lattice, SiteId};
use crate::seed;

/// Critical probability of site percolation on the triangular lattice.
pub const P_CRITICAL: f64 = 0.5;

/// Tolerance for the construction-time standardization check.
const MOMENT_TOLERANCE: f64 = 1e-6;

/// Tolerance used when comparing cumulative weights of discrete families with
/// exact levels such as `1/2`.
const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Noise family as given by the user, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    Laplace,
    Uniform,
    StudentT { nu: f64 },
    DiscreteSymmetric { support: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug, Clone)]
enum Kind {
    Gaussian(Normal),
    /// Laplace with scale `b = 1/√2`.
    Laplace { b: f64 },
    /// Uniform on `[-h, h]` with `h = √3`.
    Uniform { h: f64 },
    /// Student t scaled by `√((ν-2)/ν)`.
    StudentT {
        nu: f64,
        scale: f64,
        cdf: StudentsT,
        sampler: StudentT<f64>,
    },
    /// Sorted support (already rescaled to unit variance) with probabilities
    /// and running cumulative sums.
    Discrete {
        support: Vec<f64>,
        weights: Vec<f64>,
        cumulative: Vec<f64>,
    },
}

/// A standardized (mean 0, variance 1), symmetric noise distribution.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    family: NoiseFamily,
    kind: Kind,
}

impl PartialEq for NoiseModel {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
    }
}

impl NoiseModel {
    pub fn gaussian() -> Self {
        Self::build(NoiseFamily::Gaussian).expect("gaussian is valid")
    }

    pub fn laplace() -> Self {
        Self::build(NoiseFamily::Laplace).expect("laplace is valid")
    }

    pub fn uniform() -> Self {
        Self::build(NoiseFamily::Uniform).expect("uniform is valid")
    }

    /// Student t with `nu > 2` degrees of freedom, rescaled to unit variance.
    pub fn student_t(nu: f64) -> Result<Self> {
        Self::build(NoiseFamily::StudentT { nu })
    }

    /// Discrete distribution on a symmetric support. Weights are normalized to
    /// sum to one and the support is rescaled to unit variance; the pairs must
    /// be mirror-symmetric around zero.
    pub fn discrete_symmetric(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::build(NoiseFamily::DiscreteSymmetric { support, weights })
    }

    pub fn build(family: NoiseFamily) -> Result<Self> {
        let (kind, family) = match family {
            NoiseFamily::Gaussian => (
                Kind::Gaussian(Normal::new(0.0, 1.0).expect("standard normal")),
                NoiseFamily::Gaussian,
            ),
            NoiseFamily::Laplace => (Kind::Laplace { b: std::f64::consts::FRAC_1_SQRT_2 }, NoiseFamily::Laplace),
            NoiseFamily::Uniform => (Kind::Uniform { h: 3f64.sqrt() }, NoiseFamily::Uniform),
            NoiseFamily::StudentT { nu } => {
                if !(nu.is_finite() && nu > 2.0) {
                    return Err(Error::invalid(
                        "nu",
                        format!("student_t needs finite variance (nu > 2), got {nu}"),
                    ));
                }
                let scale = ((nu - 2.0) / nu).sqrt();
                let cdf = StudentsT::new(0.0, scale, nu)
                    .map_err(|e| Error::invalid("nu", e.to_string()))?;
                let sampler = StudentT::new(nu).map_err(|e| Error::invalid("nu", e.to_string()))?;
                (
                    Kind::StudentT {
                        nu,
                        scale,
                        cdf,
                        sampler,
                    },
                    NoiseFamily::StudentT { nu },
                )
            }
            NoiseFamily::DiscreteSymmetric { support, weights } => {
                let (support, weights) = normalize_discrete(support, weights)?;
                let mut acc = 0.0;
                let cumulative = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                (
                    Kind::Discrete {
                        support: support.clone(),
                        weights: weights.clone(),
                        cumulative,
                    },
                    NoiseFamily::DiscreteSymmetric { support, weights },
                )
            }
        };
        let model = NoiseModel { family, kind };
        let (mean, var) = model.moments();
        if mean.abs() > MOMENT_TOLERANCE || (var - 1.0).abs() > MOMENT_TOLERANCE {
            return Err(Error::invalid(
                "noise",
                format!("standardization failed: mean {mean}, variance {var}"),
            ));
        }
        Ok(model)
    }

    /// Normalized family descriptor (discrete support already rescaled).
    pub fn family(&self) -> &NoiseFamily {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Laplace => "laplace",
            NoiseFamily::Uniform => "uniform",
            NoiseFamily::StudentT { .. } => "student_t",
            NoiseFamily::DiscreteSymmetric { .. } => "discrete",
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, Kind::Discrete { .. })
    }

    /// Mean and variance of the normalized distribution, from closed forms.
    pub fn moments(&self) -> (f64, f64) {
        match &self.kind {
            Kind::Gaussian(_) => (0.0, 1.0),
            Kind::Laplace { b } => (0.0, 2.0 * b * b),
            Kind::Uniform { h } => (0.0, h * h / 3.0),
            Kind::StudentT { nu, scale, .. } => (0.0, scale * scale * nu / (nu - 2.0)),
            Kind::Discrete {
                support, weights, ..
            } => {
                let mean = support.iter().zip(weights).map(|(x, w)| x * w).sum();
                let var = support.iter().zip(weights).map(|(x, w)| x * x * w).sum();
                (mean, var)
            }
        }
    }

    /// Right-continuous distribution function `F(x) = P(ε <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Gaussian(n) => n.cdf(x),
            Kind::Laplace { b } => {
                if x < 0.0 {
                    0.5 * (x / b).exp()
                } else {
                    0.5 - 0.5 * (-(x / b)).exp_m1()
                }
            }
            Kind::Uniform { h } => ((x + h) / (2.0 * h)).clamp(0.0, 1.0),
            Kind::StudentT { cdf, .. } => {
                if x.abs() < 1.0 {
                    0.5 + x.signum() * self.prob_zero_to(x.abs())
                } else {
                    cdf.cdf(x)
                }
            }
            Kind::Discrete {
                support,
                cumulative,
                ..
            } => {
                let k = support.partition_point(|&s| s <= x);
                if k == 0 { 0.0 } else { cumulative[k - 1] }
            }
        }
    }

    /// Left limit `F(x-) = P(ε < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Discrete {
                support,
                cumulative,
                ..
            } => {
                let k = support.partition_point(|&s| s < x);
                if k == 0 { 0.0 } else { cumulative[k - 1] }
            }
            _ => self.cdf(x),
        }
    }

    /// Probability mass of the atom at `x` (zero for continuous families).
    pub fn atom(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Discrete {
                support, weights, ..
            } => support
                .iter()
                .zip(weights)
                .filter(|(s, _)| **s == x)
                .map(|(_, w)| *w)
                .sum(),
            _ => 0.0,
        }
    }

    /// Density, if the family has one.
    pub fn density(&self, x: f64) -> Option<f64> {
        match &self.kind {
            Kind::Gaussian(n) => Some(n.pdf(x)),
            Kind::Laplace { b } => Some((-(x.abs()) / b).exp() / (2.0 * b)),
            Kind::Uniform { h } => Some(if x.abs() <= *h { 1.0 / (2.0 * h) } else { 0.0 }),
            Kind::StudentT { cdf, .. } => Some(cdf.pdf(x)),
            Kind::Discrete { .. } => None,
        }
    }

    /// `P(ε >= x)`.
    pub fn upper_tail(&self, x: f64) -> f64 {
        match &self.kind {
            // symmetric: P(ε >= x) = F(-x)
            Kind::Gaussian(_) | Kind::Laplace { .. } | Kind::Uniform { .. } | Kind::StudentT { .. } => {
                self.cdf(-x)
            }
            Kind::Discrete { .. } => 1.0 - self.cdf_left(x),
        }
    }

    /// `P(0 < ε < x)` for `x >= 0`, evaluated without cancellation where a
    /// closed form exists.
    pub fn prob_zero_to(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Gaussian(_) => 0.5 * statrs::function::erf::erf(x / std::f64::consts::SQRT_2),
            Kind::Laplace { b } => -0.5 * (-(x / b)).exp_m1(),
            Kind::Uniform { h } => x.min(*h) / (2.0 * h),
            Kind::StudentT { nu, scale, .. } => {
                let t = x / scale;
                0.5 * statrs::function::beta::beta_reg(0.5, 0.5 * nu, t * t / (nu + t * t))
            }
            Kind::Discrete {
                support, weights, ..
            } => support
                .iter()
                .zip(weights)
                .filter(|(s, _)| **s > 0.0 && **s < x)
                .map(|(_, w)| *w)
                .sum(),
        }
    }

    /// Generalized inverse `inf{x : F(x) >= u}` for `u` in `(0, 1)`.
    ///
    /// For continuous families the result satisfies `F(q) <= u` and
    /// `F(q) >= u - 1e-9`.
    pub fn quantile(&self, u: f64) -> f64 {
        assert!(u > 0.0 && u < 1.0, "quantile level must lie in (0, 1), got {u}");
        match &self.kind {
            Kind::Discrete {
                support,
                cumulative,
                ..
            } => {
                let k = cumulative.partition_point(|&c| c < u - WEIGHT_TOLERANCE);
                support[k.min(support.len() - 1)]
            }
            _ => self.continuous_quantile(u),
        }
    }

    fn continuous_quantile(&self, u: f64) -> f64 {
        // bracket: F(lo) <= u < F(hi)
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while self.cdf(lo) > u {
            lo *= 2.0;
        }
        while self.cdf(hi) <= u {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) <= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// One draw.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            Kind::Gaussian(_) => StandardNormal.sample(rng),
            Kind::Laplace { b } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                let mag = -(-2.0 * u.abs()).ln_1p();
                b * mag.copysign(u)
            }
            Kind::Uniform { h } => rng.random_range(-*h..*h),
            Kind::StudentT { scale, sampler, .. } => scale * sampler.sample(rng),
            Kind::Discrete {
                support,
                cumulative,
                ..
            } => {
                let u: f64 = rng.random();
                let k = cumulative.partition_point(|&c| c <= u);
                support[k.min(support.len() - 1)]
            }
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out {
            *v = self.sample(rng);
        }
    }
}

fn normalize_discrete(support: Vec<f64>, weights: Vec<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    if support.is_empty() || support.len() != weights.len() {
        return Err(Error::invalid(
            "support",
            "discrete noise needs equally many support points and weights (at least one)",
        ));
    }
    if support.iter().chain(&weights).any(|v| !v.is_finite()) {
        return Err(Error::invalid("support", "support and weights must be finite"));
    }
    if weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::invalid("weights", "weights must be positive"));
    }
    let total: f64 = weights.iter().sum();
    let mut pairs: Vec<(f64, f64)> = support
        .into_iter()
        .zip(weights.into_iter().map(|w| w / total))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // merge duplicate support points
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (x, w) in pairs {
        match merged.last_mut() {
            Some(last) if last.0 == x => last.1 += w,
            _ => merged.push((x, w)),
        }
    }
    let n = merged.len();
    for i in 0..n {
        let (x, w) = merged[i];
        let (mx, mw) = merged[n - 1 - i];
        let tol = 1e-9 * x.abs().max(1.0);
        if (x + mx).abs() > tol || (w - mw).abs() > 1e-9 {
            return Err(Error::invalid(
                "support",
                format!("discrete noise must be symmetric: point {x} (weight {w}) has no mirror"),
            ));
        }
    }
    // exact mirror after the check
    for i in 0..n / 2 {
        let j = n - 1 - i;
        merged[j].0 = -merged[i].0;
        let w = 0.5 * (merged[i].1 + merged[j].1);
        merged[i].1 = w;
        merged[j].1 = w;
    }
    if n % 2 == 1 {
        merged[n / 2].0 = 0.0;
    }
    let var: f64 = merged.iter().map(|(x, w)| x * x * w).sum();
    if var <= 0.0 {
        return Err(Error::invalid("support", "discrete noise is degenerate at zero"));
    }
    let scale = var.sqrt().recip();
    Ok(merged.into_iter().map(|(x, w)| (x * scale, w)).unzip())
}

impl fmt::Display for NoiseModel {
    /// Writes the descriptor accepted by [`FromStr`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            NoiseFamily::StudentT { nu } => write!(f, "student_t nu={nu}"),
            NoiseFamily::DiscreteSymmetric { support, weights } => {
                let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
                write!(f, "discrete support={} weights={}", join(support), join(weights))
            }
            _ => f.write_str(self.family_name()),
        }
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    /// Parses `family [key=value ...]`, e.g. `gaussian`, `student_t nu=5`,
    /// `discrete support=-1,0,1 weights=1,2,1`. Normalization to unit
    /// variance is applied after parsing.
    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s.split_whitespace();
        let name = tokens
            .next()
            .ok_or_else(|| Error::Config("empty noise descriptor".into()))?;
        let mut params = std::collections::BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("noise parameter `{tok}` is not key=value")))?;
            params.insert(k.to_string(), v.to_string());
        }
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{v}` is not a number")))
        };
        let list = |key: &str| -> Result<Vec<f64>> {
            params
                .get(key)
                .ok_or_else(|| Error::Config(format!("noise `{name}` needs `{key}=`")))?
                .split(',')
                .map(num)
                .collect()
        };
        let family = match name {
            "gaussian" | "normal" => NoiseFamily::Gaussian,
            "laplace" => NoiseFamily::Laplace,
            "uniform" => NoiseFamily::Uniform,
            "student_t" | "t" => NoiseFamily::StudentT {
                nu: num(params
                    .get("nu")
                    .ok_or_else(|| Error::Config("student_t needs `nu=`".into()))?)?,
            },
            "discrete" | "discrete_symmetric" => NoiseFamily::DiscreteSymmetric {
                support: list("support")?,
                weights: list("weights")?,
            },
            other => return Err(Error::Config(format!("unknown noise family `{other}`"))),
        };
        NoiseModel::build(family)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NondegeneracyMode {
    Jump,
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub m_plus: f64,
    pub m_minus: f64,
    pub m: Option<f64>,
    pub mode: Option<NondegeneracyMode>,
    pub ok: bool,
    pub reason: Option<String>,
}

/// Checks that the CDF crosses level `1 - p_c = 1/2` at a single point `m`,
/// with a jump or a positive density there.
pub fn validate_nondegeneracy(model: &NoiseModel) -> NondegeneracyReport {
    let level = 1.0 - P_CRITICAL;
    let (m_plus, m_minus) = match &model.kind {
        Kind::Discrete {
            support,
            cumulative,
            ..
        } => {
            // inf{x : F(x) >= 1/2}: first support point whose cumulative reaches 1/2.
            let i = cumulative.partition_point(|&c| c < level - WEIGHT_TOLERANCE);
            // sup{x : F(x) <= 1/2}: F stays <= 1/2 up to the first point where it exceeds 1/2.
            let j = cumulative.partition_point(|&c| c <= level + WEIGHT_TOLERANCE);
            (support[i.min(support.len() - 1)], support[j.min(support.len() - 1)])
        }
        _ => {
            let m_plus = bisect_boundary(|x| model.cdf(x) >= level);
            let m_minus = bisect_boundary(|x| model.cdf(x) > level);
            // a gap at rounding scale is not a plateau
            if (m_minus - m_plus).abs() < 1e-12 {
                let mid = 0.5 * (m_plus + m_minus);
                let mid = if mid.abs() < 1e-12 { 0.0 } else { mid };
                (mid, mid)
            } else {
                (m_plus, m_minus)
            }
        }
    };
    if m_plus != m_minus {
        return NondegeneracyReport {
            m_plus,
            m_minus,
            m: None,
            mode: None,
            ok: false,
            reason: Some(format!(
                "distribution function is flat at level 1/2 on [{m_plus}, {m_minus})"
            )),
        };
    }
    let m = m_plus;
    let jump = model.cdf(m) - model.cdf_left(m);
    let density = model.density(m).unwrap_or(0.0);
    let mode = if jump > 0.0 {
        Some(NondegeneracyMode::Jump)
    } else if density > 0.0 {
        Some(NondegeneracyMode::Density)
    } else {
        None
    };
    NondegeneracyReport {
        m_plus,
        m_minus,
        m: Some(m),
        mode,
        ok: mode.is_some(),
        reason: mode
            .is_none()
            .then(|| format!("no jump and zero density at m = {m}")),
    }
}

/// Smallest `x` where a monotone predicate turns true, to double precision.
fn bisect_boundary(pred: impl Fn(f64) -> bool) -> f64 {
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while pred(lo) {
        lo *= 2.0;
    }
    while !pred(hi) {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // snap to zero when the crossing is there up to rounding
    if hi.abs() < 1e-300 { 0.0 } else { hi }
}

/// Noisy observation on the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedImage {
    lattice: Lattice,
    values: Vec<f64>,
    /// Noise scale when known (simulated images); `None` for ingested data.
    sigma: Option<f64>,
    /// Detector range `r` when the image has been clamped to `[-r, r]`.
    range: Option<f64>,
}

impl ObservedImage {
    pub fn new(lattice: Lattice, values: Vec<f64>, sigma: Option<f64>) -> Result<Self> {
        if values.len() != lattice.site_count() {
            return Err(Error::invalid(
                "values",
                format!("expected {} values, got {}", lattice.site_count(), values.len()),
            ));
        }
        if let Some(s) = sigma {
            check_sigma(s)?;
        }
        Ok(ObservedImage {
            lattice,
            values,
            sigma,
            range: None,
        })
    }

    /// Noiseless observation of a picture.
    pub fn noiseless(picture: &DiscretizedPicture) -> Self {
        ObservedImage {
            lattice: picture.lattice(),
            values: picture.values().to_vec(),
            sigma: None,
            range: None,
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, site: SiteId) -> f64 {
        self.values[self.lattice.index(site)]
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn truncated(&self) -> bool {
        self.range.is_some()
    }

    pub fn range(&self) -> Option<f64> {
        self.range
    }

    pub fn negated(&self) -> Self {
        ObservedImage {
            values: self.values.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("sigma", format!("noise scale must be positive and finite, got {sigma}")))
    }
}

/// `Y(s) = f(s) + σ ε(s)`, with ε drawn from a ChaCha8 stream seeded by `seed`
/// in row-major site order.
pub fn apply_noise(
    picture: &DiscretizedPicture,
    sigma: f64,
    model: &NoiseModel,
    seed: u64,
) -> Result<ObservedImage> {
    check_sigma(sigma)?;
    let mut rng = seed::rng_for(seed, 0);
    let values = picture
        .values()
        .iter()
        .map(|f| f + sigma * model.sample(&mut rng))
        .collect();
    Ok(ObservedImage {
        lattice: picture.lattice(),
        values,
        sigma: Some(sigma),
        range: None,
    })
}

/// Writes `f + σε` into `out` using the same stream as [`apply_noise`].
pub(crate) fn noisy_values_into(
    picture: &[f64],
    sigma: f64,
    model: &NoiseModel,
    seed: u64,
    out: &mut Vec<f64>,
) {
    let mut rng = seed::rng_for(seed, 0);
    out.clear();
    out.extend(picture.iter().map(|f| f + sigma * model.sample(&mut rng)));
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorDevice {
    range: f64,
}

impl DetectorDevice {
    pub fn new(range: f64) -> Result<Self> {
        if range.is_finite() && range > 0.0 {
            Ok(DetectorDevice { range })
        } else {
            Err(Error::invalid("r", format!("detector range must be positive and finite, got {range}")))
        }
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    #[inline]
    pub fn clamp(&self, y: f64) -> f64 {
        y.min(self.range).max(-self.range)
    }
}

pub fn detector_truncate(image: &ObservedImage, device: &DetectorDevice) -> ObservedImage {
    ObservedImage {
        lattice: image.lattice,
        values: image.values.iter().map(|&y| device.clamp(y)).collect(),
        sigma: image.sigma,
        range: Some(device.range()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiDEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: usize,
}

/// Monte Carlo estimate of the probability that the detector never clips,
/// i.e. `|Y(s)| <= r` at every site.
pub fn estimate_pi_d(
    picture: &DiscretizedPicture,
    sigma: f64,
    model: &NoiseModel,
    device: &DetectorDevice,
    replicates: usize,
    seed: u64,
) -> Result<PiDEstimate> {
    check_sigma(sigma)?;
    if replicates == 0 {
        return Err(Error::invalid("replicates", "need at least one replicate"));
    }
    let r = device.range();
    let hits: usize = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng_for(seed::derive_seed(seed, i), 0);
            let inside = picture
                .values()
                .iter()
                .all(|f| (f + sigma * model.sample(&mut rng)).abs() <= r);
            usize::from(inside)
        })
        .sum();
    let m = replicates as f64;
    let estimate = hits as f64 / m;
    Ok(PiDEstimate {
        estimate,
        std_error: (estimate * (1.0 - estimate) / m).sqrt(),
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn all_models() -> Vec<NoiseModel> {
        vec![
            NoiseModel::gaussian(),
            NoiseModel::laplace(),
            NoiseModel::uniform(),
            NoiseModel::student_t(5.0).unwrap(),
            NoiseModel::student_t(2.5).unwrap(),
            NoiseModel::discrete_symmetric(vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]).unwrap(),
        ]
    }

    #[test]
    fn gaussian_is_nondegenerate_by_density() {
        let r = validate_nondegeneracy(&NoiseModel::gaussian());
        assert_eq!(r.m, Some(0.0));
        assert_eq!(r.mode, Some(NondegeneracyMode::Density));
        assert!(r.ok);
    }

    #[test]
    fn continuous_families_cross_at_zero() {
        for m in all_models().iter().filter(|m| m.is_continuous()) {
            let r = validate_nondegeneracy(m);
            assert!(r.ok, "{m}: {r:?}");
            assert_eq!(r.m, Some(0.0));
        }
    }

    #[test]
    fn two_point_noise_has_plateau() {
        // F = 1/2 on [-1, 1): m+ = -1, m- = 1
        let m = NoiseModel::discrete_symmetric(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let r = validate_nondegeneracy(&m);
        assert_eq!(r.m_plus, -1.0);
        assert_eq!(r.m_minus, 1.0);
        assert!(!r.ok);
        assert!(r.reason.unwrap().contains("flat"));
    }

    #[test]
    fn three_point_noise_jumps_at_zero() {
        let m = NoiseModel::discrete_symmetric(vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]).unwrap();
        let r = validate_nondegeneracy(&m);
        assert_eq!(r.m, Some(0.0));
        assert_eq!(r.mode, Some(NondegeneracyMode::Jump));
        assert!(r.ok);
        assert_abs_diff_eq!(m.atom(0.0), 0.5);
    }

    #[test]
    fn discrete_is_rescaled_to_unit_variance() {
        let m = NoiseModel::discrete_symmetric(vec![1.0, -1.0, 0.0], vec![1.0, 1.0, 2.0]).unwrap();
        match m.family() {
            NoiseFamily::DiscreteSymmetric { support, weights } => {
                assert_abs_diff_eq!(support[2], std::f64::consts::SQRT_2, epsilon = 1e-15);
                assert_eq!(weights, &vec![0.25, 0.5, 0.25]);
            }
            _ => unreachable!(),
        }
        let (mean, var) = m.moments();
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseModel::student_t(2.0).is_err());
        assert!(NoiseModel::student_t(1.0).is_err());
        assert!(NoiseModel::discrete_symmetric(vec![0.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(NoiseModel::discrete_symmetric(vec![0.0], vec![1.0]).is_err());
        assert!(NoiseModel::discrete_symmetric(vec![-1.0, 1.0], vec![0.3, 0.7]).is_err());
        assert!(DetectorDevice::new(0.0).is_err());
        assert!(DetectorDevice::new(f64::INFINITY).is_err());
    }

    /// Midpoint rule for `∫ g(x) f(x) dx` under the substitution `x = tan θ`.
    fn integrate(model: &NoiseModel, g: impl Fn(f64) -> f64) -> f64 {
        let steps = 400_000;
        let h = std::f64::consts::PI / steps as f64;
        (0..steps)
            .map(|i| {
                let th = -std::f64::consts::FRAC_PI_2 + (i as f64 + 0.5) * h;
                let x = th.tan();
                let jac = 1.0 / (th.cos() * th.cos());
                g(x) * model.density(x).unwrap() * jac * h
            })
            .sum()
    }

    #[test]
    fn quadrature_confirms_unit_variance() {
        // the uniform density jumps at ±√3, which limits the midpoint rule
        for (m, tol) in [
            (NoiseModel::gaussian(), 1e-6),
            (NoiseModel::laplace(), 1e-6),
            (NoiseModel::uniform(), 1e-4),
            (NoiseModel::student_t(7.0).unwrap(), 1e-6),
        ] {
            let mass = integrate(&m, |_| 1.0);
            let var = integrate(&m, |x| x * x);
            assert!((mass - 1.0).abs() < tol, "{m}: mass {mass}");
            assert!((var - 1.0).abs() < tol, "{m}: variance {var}");
        }
    }

    #[test]
    fn symmetry_of_cdf() {
        for m in all_models() {
            for x in [0.0, 0.3, 0.5, 1.0, 1.5, 2.0, 4.0] {
                assert_abs_diff_eq!(m.cdf(-x), 1.0 - m.cdf_left(x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quantile_cdf_consistency() {
        for m in all_models().iter().filter(|m| m.is_continuous()) {
            for i in 1..2000 {
                let u = i as f64 / 2000.0;
                let q = m.quantile(u);
                let c = m.cdf(q);
                assert!(c <= u && c >= u - 1e-9, "{m}: u={u} q={q} F(q)={c}");
            }
            for u in [1e-12, 1e-6, 1.0 - 1e-6] {
                let c = m.cdf(m.quantile(u));
                assert!(c <= u && c >= u - 1e-9);
            }
        }
    }

    #[test]
    fn discrete_quantile_is_generalized_inverse() {
        let m = NoiseModel::discrete_symmetric(vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]).unwrap();
        let s = std::f64::consts::SQRT_2;
        assert_abs_diff_eq!(m.quantile(0.1), -s, epsilon = 1e-15);
        assert_abs_diff_eq!(m.quantile(0.25), -s, epsilon = 1e-15);
        assert_eq!(m.quantile(0.26), 0.0);
        assert_eq!(m.quantile(0.75), 0.0);
        assert_abs_diff_eq!(m.quantile(0.8), s, epsilon = 1e-15);
    }

    #[test]
    fn empirical_symmetry() {
        let n = 400_000;
        for m in all_models() {
            let mut rng = seed::rng_for(3, 0);
            let draws: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
            for x in [0.5, 1.0, 2.0] {
                let above = draws.iter().filter(|&&d| d > x).count() as f64 / n as f64;
                let below = draws.iter().filter(|&&d| d < -x).count() as f64 / n as f64;
                // difference of two proportions, each at most 1/2
                let se = ((above + below) / n as f64).sqrt().max(1e-6);
                assert!((above - below).abs() < 4.0 * se, "{m} x={x}: {above} vs {below}");
            }
        }
    }

    #[test]
    fn sample_moments_match_model() {
        let n = 400_000;
        for m in all_models() {
            let mut rng = seed::rng_for(5, 0);
            let draws: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() < 0.01, "{m}: mean {mean}");
            // heavy-tailed t(2.5) has infinite fourth moment; keep its band loose
            let tol = if matches!(m.family(), NoiseFamily::StudentT { nu } if *nu < 4.0) { 0.15 } else { 0.02 };
            assert!((var - 1.0).abs() < tol, "{m}: var {var}");
        }
    }

    #[test]
    fn apply_noise_is_deterministic() {
        let l = Lattice::new(16).unwrap();
        let p = DiscretizedPicture::zero(l);
        let m = NoiseModel::laplace();
        let a = apply_noise(&p, 0.7, &m, 99).unwrap();
        let b = apply_noise(&p, 0.7, &m, 99).unwrap();
        let c = apply_noise(&p, 0.7, &m, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(!a.truncated());
        assert!(apply_noise(&p, 0.0, &m, 1).is_err());
    }

    #[test]
    fn apply_noise_gaussian_moments() {
        // 10^6 sites; stderr of the mean is 1e-3, of the variance ~1.4e-3
        let l = Lattice::new(1000).unwrap();
        let img = apply_noise(&DiscretizedPicture::zero(l), 1.0, &NoiseModel::gaussian(), 2024).unwrap();
        let n = img.values().len() as f64;
        let mean = img.values().iter().sum::<f64>() / n;
        let var = img.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");

        let img = apply_noise(&DiscretizedPicture::constant(l, 5.0), 1.0, &NoiseModel::gaussian(), 2025).unwrap();
        let mean = img.values().iter().sum::<f64>() / n;
        assert!((mean - 5.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn truncation_examples() {
        let l = Lattice::new(2).unwrap();
        let img = ObservedImage::new(l, vec![0.5, 2.0, -3.0, 1.0], Some(1.0)).unwrap();
        let d = DetectorDevice::new(1.0).unwrap();
        let t = detector_truncate(&img, &d);
        assert_eq!(t.values(), &[0.5, 1.0, -1.0, 1.0]);
        assert!(t.truncated());
        assert_eq!(t.range(), Some(1.0));
        assert_eq!(detector_truncate(&t, &d), t);
    }

    #[test]
    fn pi_d_wide_range_is_one() {
        let l = Lattice::new(8).unwrap();
        let p = DiscretizedPicture::zero(l);
        let d = DetectorDevice::new(1e6).unwrap();
        let est = estimate_pi_d(&p, 1.0, &NoiseModel::gaussian(), &d, 200, 1).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert!(estimate_pi_d(&p, 1.0, &NoiseModel::gaussian(), &d, 0, 1).is_err());
    }

    #[test]
    fn pi_d_single_site_matches_normal_cdf() {
        // P(|Z| <= 1.96) = 1 - 2 (1 - Φ(1.96)) = 0.950004209703559
        let expected = 0.950_004_209_703_559;
        let l = Lattice::new(1).unwrap();
        let p = DiscretizedPicture::zero(l);
        let d = DetectorDevice::new(1.96).unwrap();
        let est = estimate_pi_d(&p, 1.0, &NoiseModel::gaussian(), &d, 20_000, 8).unwrap();
        assert!((est.estimate - expected).abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn descriptor_roundtrip() {
        for m in all_models() {
            let parsed: NoiseModel = m.to_string().parse().unwrap();
            assert_eq!(parsed.family_name(), m.family_name());
            for x in [-1.3, 0.0, 0.7] {
                assert_abs_diff_eq!(parsed.cdf(x), m.cdf(x), epsilon = 1e-12);
            }
        }
        assert!("cauchy".parse::<NoiseModel>().is_err());
        assert!("student_t".parse::<NoiseModel>().is_err());
    }

    #[test]
    fn prob_zero_to_agrees_with_cdf() {
        for m in all_models() {
            for x in [0.01, 0.3, 1.0, 2.5] {
                let direct = m.cdf_left(x) - m.cdf(0.0);
                assert_abs_diff_eq!(m.prob_zero_to(x), direct, epsilon = 1e-12);
            }
        }
    }
}
