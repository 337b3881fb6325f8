//! Command-line pipeline: configuration, PGM ingestion, report emission.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::{
    self, calibrate_phi, max_cluster_test, multi_test, never_reject_bound, tau0_from_uncertainty,
    uncertainty_check, CalibratedPhi, MultiTestConfig, NullSpec, PhiProvider, Schedule, TestConfig, TestSide,
    TheoryPhi, ThresholdDecision, UncertaintyReport,
};
use crate::error::{Error, Result};
use crate::lattice::{DiscretizedPicture, Lattice};
use crate::noise::{apply_noise, detector_truncate, validate_nondegeneracy, DetectorDevice, NoiseModel, ObservedImage};
use crate::perclab::{
    self, complexity_probe, crossing_frequency, estimate_cluster_stats, estimate_error_rates, verify_lambda_bound,
    ErrorRateRequest, ProbeMode, RatePhi, SignalSpec, SquareSide,
};
use crate::pgm::{load_pgm, save_pgm, GrayscaleImage, PgmFormat};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_DETECTABLE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Detect,
    Simulate,
    Calibrate,
    Uncertainty,
    Errors,
    Perclab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhiModeArg {
    Theory,
    #[default]
    Calibrated,
}

/// Fully resolved run parameters. Every field has a value, so the config
/// hash covers defaults too.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub n: Option<usize>,
    pub sigma: f64,
    pub noise: String,
    pub r: f64,
    pub baseline: Option<f64>,
    pub tau: Option<f64>,
    pub tau0: Option<f64>,
    pub phi_mode: PhiModeArg,
    pub k0: Option<f64>,
    pub k0_factor: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub side: TestSide,
    pub intensity: f64,
    pub square: Option<usize>,
    pub square_fraction: f64,
    pub maxval: u16,
    pub ns: Vec<usize>,
    pub p: Vec<f64>,
    pub complexity: bool,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            input: None,
            n: None,
            sigma: 1.0,
            noise: "gaussian".into(),
            r: 1.0,
            baseline: None,
            tau: None,
            tau0: None,
            phi_mode: PhiModeArg::Calibrated,
            k0: None,
            k0_factor: detect::DEFAULT_K0_FACTOR,
            alpha: 0.05,
            replicates: 1000,
            seed: 0,
            side: TestSide::Both,
            intensity: 1.0,
            square: None,
            square_fraction: 0.25,
            maxval: 255,
            ns: Vec::new(),
            p: Vec::new(),
            complexity: false,
            out: PathBuf::from("out"),
            workers: None,
        }
    }

    /// SHA-256 of the canonical JSON of every result-affecting field
    /// (`out` and `workers` excluded).
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&json))
    }

    pub fn model(&self) -> Result<NoiseModel> {
        self.noise.parse()
    }

    /// Applies one `key = value` setting; keys are the long flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
        }
        fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
            value.split(',').map(|v| num(key, v.trim())).collect()
        }
        match key {
            "command" => {
                self.command = Command::from_str(value, true).map_err(|e| Error::Config(format!("command: {e}")))?
            }
            "input" => self.input = Some(PathBuf::from(value)),
            "n" => self.n = Some(num(key, value)?),
            "sigma" => self.sigma = num(key, value)?,
            "noise" => self.noise = value.to_string(),
            "r" => self.r = num(key, value)?,
            "baseline" => self.baseline = Some(num(key, value)?),
            "tau" => self.tau = Some(num(key, value)?),
            "tau0" => self.tau0 = Some(num(key, value)?),
            "phi-mode" | "phi_mode" => {
                self.phi_mode =
                    PhiModeArg::from_str(value, true).map_err(|e| Error::Config(format!("phi-mode: {e}")))?
            }
            "k0" => self.k0 = Some(num(key, value)?),
            "k0-factor" | "k0_factor" => self.k0_factor = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "replicates" => self.replicates = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "side" => self.side = value.parse()?,
            "intensity" => self.intensity = num(key, value)?,
            "square" => self.square = Some(num(key, value)?),
            "square-fraction" | "square_fraction" => self.square_fraction = num(key, value)?,
            "maxval" => self.maxval = num(key, value)?,
            "ns" => self.ns = list(key, value)?,
            "p" => self.p = list(key, value)?,
            "complexity" => self.complexity = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = Some(num(key, value)?),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Plain `key = value` lines; `#` starts a comment.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Config-file text that reproduces this configuration.
    pub fn to_config_text(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        for (k, val) in v.as_object().expect("object") {
            let text = match val {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Array(a) if a.is_empty() => continue,
                serde_json::Value::Array(a) => a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
                other => other.to_string(),
            };
            let _ = writeln!(out, "{} = {}", k.replace('_', "-"), text);
        }
        let _ = writeln!(out, "out = {}", self.out.display());
        out
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

// ---------------------------------------------------------------------------
// image bridge

/// Center-crops `img` to `n × n` and maps pixels to `((pixel - b) / b) r`,
/// clamped to `[-r, r]`; `b` defaults to `maxval / 2`. Row `y` of the crop is
/// lattice row `y`.
pub fn image_to_observed(img: &GrayscaleImage, r: f64, baseline: Option<f64>, n: usize) -> Result<ObservedImage> {
    let device = DetectorDevice::new(r)?;
    if n == 0 || n > img.width() || n > img.height() {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            side: n,
        });
    }
    let b = baseline.unwrap_or(img.maxval() as f64 / 2.0);
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::invalid("baseline", format!("must be positive, got {b}")));
    }
    let (x0, y0) = ((img.width() - n) / 2, (img.height() - n) / 2);
    let mut values = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            values.push((img.pixel(x0 + x, y0 + y) as f64 - b) / b * r);
        }
    }
    let raw = ObservedImage::new(Lattice::new(n)?, values, None)?;
    Ok(detector_truncate(&raw, &device))
}

/// Inverse of [`image_to_observed`] with the default baseline, rounding to
/// the nearest gray level (error at most `r / maxval`).
pub fn observed_to_image(image: &ObservedImage, r: f64, maxval: u16) -> Result<GrayscaleImage> {
    let device = DetectorDevice::new(r)?;
    let b = maxval as f64 / 2.0;
    let n = image.lattice().side();
    let pixels = image
        .values()
        .iter()
        .map(|&y| (b + device.clamp(y) / r * b).round().clamp(0.0, maxval as f64) as u16)
        .collect();
    Ok(GrayscaleImage::new(n, n, maxval, pixels)?)
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub command: Command,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    fn of(cfg: &RunConfig) -> Self {
        Provenance {
            schema_version: REPORT_SCHEMA_VERSION,
            command: cfg.command,
            seed: cfg.seed,
            config_hash: cfg.config_hash(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    /// `reject` (signal present) or `accept`.
    pub decision: String,
    pub mode: PhiModeArg,
    /// Threshold at the deciding test.
    pub phi: Option<f64>,
    #[serde(rename = "K0", skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    pub statistic: Option<usize>,
    pub side: TestSide,
    #[serde(rename = "N")]
    pub n: usize,
    pub r: f64,
    pub sigma: f64,
    pub noise: String,
    pub tau: Option<f64>,
    pub tau0: Option<f64>,
    pub k_max: Option<usize>,
    pub family_size: Option<usize>,
    pub per_test_level: Option<f64>,
    pub schedule: Vec<ThresholdDecision>,
    pub uncertainty: UncertaintyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ErrorReport<'a> {
    schema_version: u32,
    error: &'a str,
    message: String,
    command: Option<Command>,
    seed: Option<u64>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

// ---------------------------------------------------------------------------
// commands

/// Executes `cfg`, writing artifacts under `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    std::fs::create_dir_all(&cfg.out).map_err(|source| Error::Io {
        path: cfg.out.clone(),
        source,
    })?;
    let body = || match cfg.command {
        Command::Detect => run_detect(cfg),
        Command::Simulate => run_simulate(cfg),
        Command::Calibrate => run_calibrate(cfg),
        Command::Uncertainty => run_uncertainty(cfg),
        Command::Errors => run_errors(cfg),
        Command::Perclab => run_perclab(cfg),
    };
    match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("workers: {e}")))?
            .install(body),
        None => body(),
    }
}

fn side_or_default(cfg: &RunConfig, default: usize) -> usize {
    cfg.n.unwrap_or(default)
}

/// Observed image for `detect`: the PGM input or, without one, an error.
fn load_observed(cfg: &RunConfig) -> Result<ObservedImage> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("detect needs an input PGM (--input)".into()))?;
    let img = load_pgm(path)?;
    let n = cfg.n.unwrap_or(img.width().min(img.height()));
    image_to_observed(&img, cfg.r, cfg.baseline, n)
}

/// Runs the detection pipeline on an in-memory image.
pub fn detect_image(cfg: &RunConfig, image: &ObservedImage) -> Result<DetectionReport> {
    let model = cfg.model()?;
    let n = image.lattice().side();
    let uncertainty = uncertainty_check(&model, cfg.r / cfg.sigma, n)?;
    let mut report = DetectionReport {
        provenance: Provenance::of(cfg),
        decision: "accept".into(),
        mode: cfg.phi_mode,
        phi: None,
        k0: None,
        statistic: None,
        side: cfg.side,
        n,
        r: cfg.r,
        sigma: cfg.sigma,
        noise: model.to_string(),
        tau: cfg.tau,
        tau0: None,
        k_max: None,
        family_size: None,
        per_test_level: None,
        schedule: Vec::new(),
        uncertainty,
    };
    if !report.uncertainty.detectable {
        report.decision = "not_detectable".into();
        return Ok(report);
    }

    if let Some(tau) = cfg.tau {
        let config = match cfg.phi_mode {
            PhiModeArg::Theory => match cfg.k0 {
                Some(k0) => TestConfig::with_k0(n, tau, k0, cfg.side)?,
                None => {
                    let p_e = model.upper_tail(tau / cfg.sigma);
                    let th = detect::phi_theory_with_factor(n, p_e, cfg.k0_factor)?;
                    TestConfig::with_k0(n, tau, th.k0, cfg.side)?
                }
            },
            PhiModeArg::Calibrated => {
                let table = calibrate_phi(&null_spec(cfg, &model, n), tau, cfg.alpha)?;
                TestConfig::calibrated(&table)?
            }
        };
        let res = max_cluster_test(image, &config)?;
        if let detect::PhiMode::Theory { k0 } = config.mode {
            report.k0 = Some(k0);
        }
        report.phi = Some(res.phi);
        report.statistic = Some(res.statistic);
        report.decision = if res.reject { "reject" } else { "accept" }.into();
        return Ok(report);
    }

    let tau0 = match cfg.tau0 {
        Some(t) => t,
        None => tau0_from_uncertainty(&model, cfg.sigma, n)?,
    };
    let schedule = Schedule::new(cfg.r, tau0, n)?;
    let provider: Box<dyn PhiProvider> = match (cfg.phi_mode, cfg.k0) {
        (PhiModeArg::Theory, Some(k0)) => Box::new(detect::FixedPhi(k0 * (n as f64).ln())),
        (PhiModeArg::Theory, None) => Box::new(TheoryPhi {
            n,
            model: model.clone(),
            sigma: cfg.sigma,
            factor: cfg.k0_factor,
        }),
        (PhiModeArg::Calibrated, _) => Box::new(CalibratedPhi::simulate(&null_spec(cfg, &model, n), &schedule)?),
    };
    let mut mt = MultiTestConfig::new(cfg.r, tau0, cfg.alpha);
    mt.side = cfg.side;
    let res = multi_test(image, &mt, provider.as_ref())?;
    // the first rejecting threshold, or the last one actually tested
    let deciding = match res.first_rejecting_k {
        Some(k) => res.decisions.iter().find(|d| d.k == k),
        None => res.decisions.iter().rev().find(|d| !d.skipped),
    };
    if let Some(d) = deciding {
        report.phi = d.phi;
        report.statistic = Some(d.t_plus.unwrap_or(0).max(d.t_minus.unwrap_or(0)));
        if cfg.phi_mode == PhiModeArg::Theory {
            report.k0 = d.phi.map(|phi| phi / (n as f64).ln());
        }
    }
    report.decision = if res.overall_reject { "reject" } else { "accept" }.into();
    report.tau0 = Some(tau0);
    report.k_max = Some(res.k_max);
    report.family_size = Some(res.family_size);
    report.per_test_level = Some(res.per_test_level);
    report.schedule = res.decisions;
    Ok(report)
}

fn null_spec(cfg: &RunConfig, model: &NoiseModel, n: usize) -> NullSpec {
    NullSpec {
        n,
        model: model.clone(),
        sigma: cfg.sigma,
        side: cfg.side,
        replicates: cfg.replicates,
        seed: cfg.seed,
    }
}

fn run_detect(cfg: &RunConfig) -> Result<RunOutcome> {
    let image = load_observed(cfg)?;
    let report = detect_image(cfg, &image)?;
    let path = write_json(&cfg.out, "detection_report.json", &report)?;
    let exit_code = if report.decision == "not_detectable" {
        EXIT_NOT_DETECTABLE
    } else {
        EXIT_OK
    };
    Ok(RunOutcome {
        exit_code,
        artifacts: vec![path],
        summary: format!(
            "decision: {} (statistic {:?}, phi {:?}, N = {})",
            report.decision, report.statistic, report.phi, report.n
        ),
    })
}

/// Noisy, truncated centered-square image described by `cfg`.
pub fn simulate_image(cfg: &RunConfig) -> Result<ObservedImage> {
    let model = cfg.model()?;
    let n = side_or_default(cfg, 64);
    let lattice = Lattice::new(n)?;
    let side = cfg.square.unwrap_or_else(|| SquareSide::Fraction { fraction: cfg.square_fraction }.for_n(n));
    let picture = DiscretizedPicture::centered_square(lattice, side, cfg.intensity)?;
    let noisy = apply_noise(&picture, cfg.sigma, &model, cfg.seed)?;
    Ok(detector_truncate(&noisy, &DetectorDevice::new(cfg.r)?))
}

#[derive(Serialize)]
struct SimulateReport {
    #[serde(flatten)]
    provenance: Provenance,
    #[serde(rename = "N")]
    n: usize,
    square: usize,
    intensity: f64,
    sigma: f64,
    noise: String,
    r: f64,
    maxval: u16,
    image: String,
}

fn run_simulate(cfg: &RunConfig) -> Result<RunOutcome> {
    let image = simulate_image(cfg)?;
    let n = image.lattice().side();
    let pgm = observed_to_image(&image, cfg.r, cfg.maxval)?;
    let pgm_path = cfg.out.join("simulated.pgm");
    save_pgm(&pgm_path, &pgm, PgmFormat::Binary)?;
    let report = SimulateReport {
        provenance: Provenance::of(cfg),
        n,
        square: cfg.square.unwrap_or_else(|| SquareSide::Fraction { fraction: cfg.square_fraction }.for_n(n)),
        intensity: cfg.intensity,
        sigma: cfg.sigma,
        noise: cfg.model()?.to_string(),
        r: cfg.r,
        maxval: cfg.maxval,
        image: "simulated.pgm".into(),
    };
    let json = write_json(&cfg.out, "simulate_report.json", &report)?;
    Ok(RunOutcome {
        exit_code: EXIT_OK,
        artifacts: vec![pgm_path.clone(), json],
        summary: format!("simulated N = {n}, square intensity {}", cfg.intensity),
    })
}

fn run_calibrate(cfg: &RunConfig) -> Result<RunOutcome> {
    let model = cfg.model()?;
    let n = side_or_default(cfg, 64);
    let tau = cfg.tau.unwrap_or(cfg.r / 2.0);
    let mut table = calibrate_phi(&null_spec(cfg, &model, n), tau, cfg.alpha)?;
    table.config_hash = Some(cfg.config_hash());
    let path = write_json(&cfg.out, "calibration.json", &table)?;
    let mut summary = format!("phi = {} at alpha = {} (N = {n}, tau = {tau})", table.phi, table.alpha_target);
    for w in &table.warnings {
        let _ = write!(summary, "\nwarning: {w}");
    }
    Ok(RunOutcome {
        exit_code: EXIT_OK,
        artifacts: vec![path],
        summary,
    })
}

#[derive(Serialize)]
struct UncertaintySummary {
    #[serde(flatten)]
    provenance: Provenance,
    noise: String,
    sigma: f64,
    report: UncertaintyReport,
    never_reject_bound: f64,
    s_argmax: f64,
    tau0: f64,
    nondegeneracy: crate::noise::NondegeneracyReport,
}

fn run_uncertainty(cfg: &RunConfig) -> Result<RunOutcome> {
    let model = cfg.model()?;
    let n = side_or_default(cfg, 64);
    let rho = cfg.r / cfg.sigma;
    let report = uncertainty_check(&model, rho, n)?;
    let summary = UncertaintySummary {
        provenance: Provenance::of(cfg),
        noise: model.to_string(),
        sigma: cfg.sigma,
        never_reject_bound: never_reject_bound(n),
        s_argmax: detect::s_max().0,
        tau0: tau0_from_uncertainty(&model, cfg.sigma, n)?,
        nondegeneracy: validate_nondegeneracy(&model),
        report,
    };
    let path = write_json(&cfg.out, "uncertainty.json", &summary)?;
    Ok(RunOutcome {
        exit_code: EXIT_OK,
        artifacts: vec![path],
        summary: format!(
            "rho = {rho}: P(0 < eps < rho) = {:.6e} vs bound {:.6e}: {}",
            summary.report.lhs,
            summary.report.rhs,
            if summary.report.detectable { "detectable" } else { "not detectable" }
        ),
    })
}

fn run_errors(cfg: &RunConfig) -> Result<RunOutcome> {
    let model = cfg.model()?;
    let ns = if cfg.ns.is_empty() { vec![32, 64, 128] } else { cfg.ns.clone() };
    let phi_mode = match (cfg.phi_mode, cfg.k0) {
        (PhiModeArg::Theory, Some(k0)) => RatePhi::FixedK0 { k0 },
        (PhiModeArg::Theory, None) => RatePhi::Theory,
        (PhiModeArg::Calibrated, _) => RatePhi::Calibrated {
            alpha: cfg.alpha,
            replicates: cfg.replicates.max(100),
        },
    };
    let signal = SignalSpec {
        side: match cfg.square {
            Some(side) => SquareSide::Fixed { side },
            None => SquareSide::Fraction {
                fraction: cfg.square_fraction,
            },
        },
        intensity: cfg.intensity,
    };
    let fit = estimate_error_rates(&ErrorRateRequest {
        ns: &ns,
        signal,
        model: &model,
        sigma: cfg.sigma,
        tau: cfg.tau.unwrap_or(0.5),
        phi_mode,
        replicates: cfg.replicates,
        seed: cfg.seed,
    })?;
    #[derive(Serialize)]
    struct Doc<'a> {
        #[serde(flatten)]
        provenance: Provenance,
        fit: &'a perclab::ErrorRateFit,
    }
    let json = write_json(&cfg.out, "error_rates.json", &Doc { provenance: Provenance::of(cfg), fit: &fit })?;
    let csv = cfg.out.join("error_rates.csv");
    write_file(&csv, with_hash(fit.to_csv(), cfg).as_bytes())?;
    let mut summary = String::new();
    for p in &fit.points {
        let _ = writeln!(summary, "N = {}: alpha = {:.4}, beta = {:.4}", p.n, p.alpha_hat, p.beta_hat);
    }
    Ok(RunOutcome {
        exit_code: EXIT_OK,
        artifacts: vec![json, csv],
        summary: summary.trim_end().to_string(),
    })
}

fn with_hash(csv: String, cfg: &RunConfig) -> String {
    format!("# config_hash={}\n{csv}", cfg.config_hash())
}

#[derive(Serialize)]
struct PerclabEntry {
    #[serde(rename = "N")]
    n: usize,
    p: f64,
    crossing: perclab::CrossingEstimate,
    stats: Option<perclab::ClusterStats>,
    bounds: Option<perclab::LambdaBoundReport>,
}

fn run_perclab(cfg: &RunConfig) -> Result<RunOutcome> {
    let ns = if cfg.ns.is_empty() { vec![128] } else { cfg.ns.clone() };
    let ps = if cfg.p.is_empty() { vec![0.3, 0.4] } else { cfg.p.clone() };
    let mut entries = Vec::new();
    let mut artifacts = Vec::new();
    let mut crossing_csv = String::from("N,p,M,frequency,std_error\n");
    for &n in &ns {
        for &p in &ps {
            let seed = crate::seed::derive_seed(cfg.seed, (n as u64) << 32 | (p * 1e6).round() as u64);
            let crossing = crossing_frequency(n, p, cfg.replicates, seed)?;
            let _ = writeln!(crossing_csv, "{n},{p},{},{},{}", cfg.replicates, crossing.frequency, crossing.std_error);
            let (stats, bounds) = if p < crate::noise::P_CRITICAL {
                let stats = estimate_cluster_stats(n, p, cfg.replicates, seed)?;
                let tail = cfg.out.join(format!("tail_N{n}_p{p}.csv"));
                write_file(&tail, with_hash(stats.tail_csv(), cfg).as_bytes())?;
                artifacts.push(tail);
                let bounds = verify_lambda_bound(&stats).ok();
                (Some(stats), bounds)
            } else {
                (None, None)
            };
            entries.push(PerclabEntry {
                n,
                p,
                crossing,
                stats,
                bounds,
            });
        }
    }
    let path = cfg.out.join("crossing.csv");
    write_file(&path, with_hash(crossing_csv, cfg).as_bytes())?;
    artifacts.push(path);
    let complexity = if cfg.complexity {
        let table = complexity_probe(&ns, ProbeMode::Single, 5, cfg.seed)?;
        let path = cfg.out.join("complexity.csv");
        write_file(&path, with_hash(table.to_csv(), cfg).as_bytes())?;
        artifacts.push(path);
        Some(table)
    } else {
        None
    };
    #[derive(Serialize)]
    struct Doc {
        #[serde(flatten)]
        provenance: Provenance,
        entries: Vec<PerclabEntry>,
        #[serde(skip_serializing_if = "Option::is_none")]
        complexity: Option<perclab::ComplexityTable>,
    }
    let mut summary = String::new();
    for e in &entries {
        let _ = write!(summary, "N = {}, p = {}: crossing {:.3}", e.n, e.p, e.crossing.frequency);
        if let Some(s) = &e.stats {
            let _ = write!(summary, ", chi = {:.4}", s.chi_hat);
        }
        summary.push('\n');
    }
    let json = write_json(
        &cfg.out,
        "perclab.json",
        &Doc {
            provenance: Provenance::of(cfg),
            entries,
            complexity,
        },
    )?;
    artifacts.insert(0, json);
    Ok(RunOutcome {
        exit_code: EXIT_OK,
        artifacts,
        summary: summary.trim_end().to_string(),
    })
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Debug, Parser)]
#[command(name = "percdetect", version, about = "Maximum-cluster detection of objects in noisy images")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Lattice side N.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Noise descriptor, e.g. `gaussian`, `student_t nu=5`, `discrete support=-1,1 weights=1,1`.
    #[arg(long)]
    pub noise: Option<String>,
    /// Detector range.
    #[arg(long)]
    pub r: Option<f64>,
    /// Gray level mapped to zero (default maxval/2).
    #[arg(long)]
    pub baseline: Option<f64>,
    /// Single test at this threshold instead of the dyadic schedule.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub tau0: Option<f64>,
    #[arg(long, value_enum)]
    pub phi_mode: Option<PhiModeArg>,
    #[arg(long)]
    pub k0: Option<f64>,
    #[arg(long)]
    pub k0_factor: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// plus, minus or both.
    #[arg(long)]
    pub side: Option<String>,
    #[arg(long)]
    pub intensity: Option<f64>,
    #[arg(long)]
    pub square: Option<usize>,
    #[arg(long)]
    pub square_fraction: Option<f64>,
    #[arg(long)]
    pub maxval: Option<u16>,
    /// Comma-separated lattice sides.
    #[arg(long)]
    pub ns: Option<String>,
    /// Comma-separated occupation probabilities.
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub complexity: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig> {
        let mut cfg = RunConfig::new(self.command);
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            cfg.apply_config_text(&text)?;
            // the command on the command line wins
            cfg.command = self.command;
        }
        let mut set = |key: &str, v: Option<String>| -> Result<()> {
            match v {
                Some(v) => cfg.set(key, &v),
                None => Ok(()),
            }
        };
        let s = |v: Option<f64>| v.map(|x| x.to_string());
        set("input", self.input.map(|p| p.display().to_string()))?;
        set("n", self.n.map(|x| x.to_string()))?;
        set("sigma", s(self.sigma))?;
        set("noise", self.noise)?;
        set("r", s(self.r))?;
        set("baseline", s(self.baseline))?;
        set("tau", s(self.tau))?;
        set("tau0", s(self.tau0))?;
        set(
            "phi-mode",
            self.phi_mode.map(|m| m.to_possible_value().expect("named").get_name().to_string()),
        )?;
        set("k0", s(self.k0))?;
        set("k0-factor", s(self.k0_factor))?;
        set("alpha", s(self.alpha))?;
        set("replicates", self.replicates.map(|x| x.to_string()))?;
        set("seed", self.seed.map(|x| x.to_string()))?;
        set("side", self.side)?;
        set("intensity", s(self.intensity))?;
        set("square", self.square.map(|x| x.to_string()))?;
        set("square-fraction", s(self.square_fraction))?;
        set("maxval", self.maxval.map(|x| x.to_string()))?;
        set("ns", self.ns)?;
        set("p", self.p)?;
        set("complexity", self.complexity.then(|| "true".to_string()))?;
        set("out", self.out.map(|p| p.display().to_string()))?;
        set("workers", self.workers.map(|x| x.to_string()))?;
        Ok(cfg)
    }
}

fn report_error(err: &Error, cfg: Option<&RunConfig>) {
    eprintln!("error: {err}");
    let doc = ErrorReport {
        schema_version: REPORT_SCHEMA_VERSION,
        error: err.kind(),
        message: err.to_string(),
        command: cfg.map(|c| c.command),
        seed: cfg.map(|c| c.seed),
    };
    let json = serde_json::to_string(&doc).expect("error report serializes");
    eprintln!("{json}");
    if let Some(cfg) = cfg {
        let _ = std::fs::create_dir_all(&cfg.out);
        let _ = write_file(&cfg.out.join("error.json"), format!("{json}\n").as_bytes());
    }
}

/// Parses `args` (program name first), runs, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => {
                    use clap::CommandFactory;
                    eprintln!("\n{}", Cli::command().render_usage());
                    let doc = serde_json::json!({
                        "schema_version": REPORT_SCHEMA_VERSION,
                        "error": "usage",
                        "message": e.kind().to_string(),
                    });
                    eprintln!("{doc}");
                    EXIT_ERROR
                }
            };
        }
    };
    let cfg = match cli.into_config() {
        Ok(cfg) => cfg,
        Err(e) => {
            report_error(&e, None);
            return EXIT_ERROR;
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for a in &outcome.artifacts {
                println!("wrote {}", a.display());
            }
            outcome.exit_code
        }
        Err(e) => {
            report_error(&e, Some(&cfg));
            EXIT_ERROR
        }
    }
}
