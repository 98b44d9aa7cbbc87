//! Command-line front end.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bem::{BemError, BemOptions};
use crate::config::{Config, ConfigError};
use crate::farfield::{assemble_coupling, track_branches, FarFieldError, FarFieldOptions};
use crate::geometry::{validate_assumptions, GeometryError, UnitCell, ValidationOptions, ValidationReport, WaveParams};
use crate::linalg::LinalgError;
use crate::qpgreen::{GreenError, GreenOptions, Method, QpGreen};
use crate::scattering::{
    closest_eigenvalue_pair, resonance_report, sweep, sweep_interpolated, tune_apertures, ResonanceOptions,
    ScatterError, Scatterer,
};
use crate::selftest::{far_field_suite, helmholtz_suite, period_doubling_suite, SelfCheck};

/// Environment variable holding the number of worker threads.
pub const THREADS_ENV: &str = "METASURFACE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "metasurface", version, about = "Plane-wave reflection from periodic Helmholtz-resonator metasurfaces")]
struct Cli {
    /// Tolerance set: strict (finer meshes, tighter tails), default, or fast.
    #[arg(long, value_enum, default_value_t = Profile::Default, global = true)]
    tolerance_profile: Profile,
    /// Output file; standard output when omitted. A manifest is written next
    /// to it as `<output>.manifest.json`.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Print debug logging.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Profile {
    Strict,
    Default,
    Fast,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the standing assumptions and report their margins.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Evaluate the quasi-periodic Green's function on a grid.
    Greens {
        #[arg(long)]
        config: PathBuf,
        /// Source point `x1,x2` (physical units).
        #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
        source: Vec<f64>,
        /// `x1a:x1b:n,x2a:x2b:n`
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long, value_enum, default_value_t = GreenMethod::Auto)]
        method: GreenMethod,
    },
    /// Helmholtz-residual and period-doubling suites of the boundary solvers.
    BemSelftest {
        /// Boundary nodes of the coarse level.
        #[arg(long, default_value_t = 300)]
        nodes: usize,
    },
    /// Eigenvalue branches of the coupling matrix over a k range.
    Coupling {
        #[arg(long)]
        config: PathBuf,
        /// `a:b:n`
        #[arg(long, allow_hyphen_values = true)]
        k_range: String,
        #[arg(long)]
        theta: Option<f64>,
        /// Also dump the coupling data per k as JSON to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Solve the aperture system at one (k, theta) and report I_s as JSON.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Sweep I_s over a (k, theta) grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `a:b:n`
        #[arg(long, allow_hyphen_values = true)]
        k_range: String,
        /// `a:b:n`
        #[arg(long, allow_hyphen_values = true)]
        theta_range: String,
        /// Interpolate the coupling data in k from this many Chebyshev samples
        /// per theta instead of assembling it at every grid point.
        #[arg(long)]
        interpolate: Option<usize>,
    },
    /// Total field on a grid (inside and outside the resonators).
    Field {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        /// `x1a:x1b:n,x2a:x2b:n` in physical units.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
    },
    /// Tune the apertures to an eigenvalue of the coupling matrix and print
    /// the updated configuration.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        /// Index of the eigenvalue (sorted by real part) whose real part is used.
        #[arg(long, conflicts_with_all = ["lambda", "near"])]
        eigenvalue_index: Option<usize>,
        /// Use the eigenvalue whose real part is closest to this value.
        #[arg(long, conflicts_with = "lambda", allow_negative_numbers = true)]
        near: Option<f64>,
        /// Use this value directly.
        #[arg(long, allow_negative_numbers = true)]
        lambda: Option<f64>,
        /// Before tuning, move k within `a:b:n` to where two eigenvalues are closest.
        #[arg(long, allow_hyphen_values = true)]
        seek_multiplicity: Option<String>,
    },
    /// Locate resonances (minima of sigma_min(Q)) across theta and classify the
    /// eigenvalue branches of the coupling matrix as k-stationary or dispersive.
    Resonances {
        #[arg(long)]
        config: PathBuf,
        /// `a:b:n`
        #[arg(long, allow_hyphen_values = true)]
        k_range: String,
        /// `a:b:n`
        #[arg(long, allow_hyphen_values = true)]
        theta_range: String,
        #[arg(long, default_value_t = 1e-2)]
        threshold: f64,
        /// Largest relative variation in `k` of a k-stationary eigenvalue branch.
        #[arg(long, default_value_t = 0.05)]
        branch_tol: f64,
        /// Interpolate the coupling data in `k` from this many Chebyshev samples per angle.
        #[arg(long)]
        interpolate: Option<usize>,
    },
    /// Period-doubling, Helmholtz-residual and far-field suites.
    Selftest {
        #[arg(long, default_value_t = 300)]
        nodes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GreenMethod {
    Auto,
    Spectral,
    Ewald,
}

impl From<GreenMethod> for Method {
    fn from(m: GreenMethod) -> Self {
        match m {
            GreenMethod::Auto => Method::Auto,
            GreenMethod::Spectral => Method::Spectral,
            GreenMethod::Ewald => Method::Ewald,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("assumptions violated: {}", .0.failures().map(|c| format!("{} violated (margin {:.3e})", c.condition, c.margin)).collect::<Vec<_>>().join("; "))]
    Assumptions(ValidationReport),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
    #[error("self-test failed: {0}")]
    SelfTest(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Scatter(e.into())
    }
}

impl From<FarFieldError> for CliError {
    fn from(e: FarFieldError) -> Self {
        CliError::Scatter(e.into())
    }
}

impl From<BemError> for CliError {
    fn from(e: BemError) -> Self {
        CliError::Scatter(e.into())
    }
}

impl From<GreenError> for CliError {
    fn from(e: GreenError) -> Self {
        CliError::Scatter(BemError::from(e).into())
    }
}

fn green_is_numerical(e: &GreenError) -> bool {
    matches!(e, GreenError::SpectralTooSlow { .. } | GreenError::FarMargin { .. })
}

fn bem_is_numerical(e: &BemError) -> bool {
    match e {
        BemError::Linalg(_) | BemError::FitResidual { .. } | BemError::TooFewSamples(_) | BemError::BadSamples => true,
        BemError::Green(g) => green_is_numerical(g),
        _ => false,
    }
}

impl CliError {
    /// 2 for refused input or violated assumptions, 3 for numerical refusals
    /// (resonance hit, conditioning, unconverged extraction).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Assumptions(_) => 2,
            CliError::Io(_) => 1,
            CliError::SelfTest(_) => 3,
            CliError::Scatter(e) => match e {
                ScatterError::ResonanceHit { .. } | ScatterError::Linalg(_) => 3,
                ScatterError::Bem(b) => 2 + bem_is_numerical(b) as i32,
                ScatterError::FarField(f) => match f {
                    FarFieldError::HeightTooSmall { .. } => 3,
                    FarFieldError::Bem(b) | FarFieldError::Resonator { source: b, .. } => 2 + bem_is_numerical(b) as i32,
                    FarFieldError::Green(g) => 2 + green_is_numerical(g) as i32,
                    _ => 2,
                },
                _ => 2,
            },
        }
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        CliError::Scatter(e.into())
    }
}

/// Provenance of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    /// SHA-256 of the configuration file, when one is used.
    pub config_hash: Option<String>,
    pub tolerance_profile: String,
    pub threads: usize,
    pub farfield: FarFieldOptions,
    pub validation: ValidationOptions,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

static WARNINGS: Mutex<Vec<String>> = Mutex::new(Vec::new());

/// Logger writing to standard error and keeping warnings for the manifest.
struct Logger {
    verbose: bool,
}

impl log::Log for Logger {
    fn enabled(&self, m: &log::Metadata) -> bool {
        m.level() <= if self.verbose { log::Level::Debug } else { log::Level::Warn }
    }

    fn log(&self, r: &log::Record) {
        if !self.enabled(r.metadata()) {
            return;
        }
        if r.level() <= log::Level::Warn {
            WARNINGS.lock().expect("warning log").push(r.args().to_string());
        }
        eprintln!("[{}] {}", r.level(), r.args());
    }

    fn flush(&self) {}
}

/// Worker threads from [`THREADS_ENV`]; serial when unset or invalid.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

fn options(profile: Profile, nodes: usize) -> FarFieldOptions {
    let base = FarFieldOptions::default();
    match profile {
        Profile::Default => FarFieldOptions {
            bem: BemOptions { nodes, ..base.bem },
            ..base
        },
        Profile::Strict => FarFieldOptions {
            bem: BemOptions {
                nodes: 2 * nodes,
                ..base.bem
            },
            tail_tol: 1e-14,
            interior_nodes: Some(400),
            ..base
        },
        Profile::Fast => FarFieldOptions {
            bem: BemOptions {
                nodes: (nodes / 2).max(120),
                ..base.bem
            },
            green: GreenOptions {
                spectral_tol: 1e-13,
                ..base.green
            },
            tail_tol: 1e-9,
            ..base
        },
    }
}

/// `a:b:n` as `n` equally spaced values from `a` to `b` inclusive.
pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("expected a:b:n, got {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|j| a + (b - a) * j as f64 / (n - 1) as f64).collect())
}

/// `x1a:x1b:n,x2a:x2b:n` as the grid points, x2-major.
pub fn parse_grid(s: &str) -> Result<Vec<[f64; 2]>, CliError> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| CliError::Usage(format!("expected x1a:x1b:n,x2a:x2b:n, got {s:?}")))?;
    let xs = parse_range(a)?;
    let ys = parse_range(b)?;
    Ok(ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).collect())
}

/// Shortest representation that reads back to the same `f64` (at most 17
/// significant digits).
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    format!("{x:?}")
}

struct Context {
    profile: Profile,
    output: Option<PathBuf>,
    manifest: RunManifest,
    started: Instant,
}

impl Context {
    fn stage(&mut self, name: &str, since: Instant) {
        self.manifest.timings.push((name.into(), since.elapsed().as_secs_f64()));
    }

    fn load(&mut self, path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let hash = Sha256::digest(text.as_bytes());
        self.manifest.config_hash = Some(hash.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }));
        let cfg = Config::parse(&text)?;
        self.manifest.farfield = options(self.profile, cfg.nodes);
        Ok(cfg)
    }

    fn opts(&self) -> FarFieldOptions {
        self.manifest.farfield
    }

    fn emit(&mut self, body: &str) -> Result<(), CliError> {
        self.manifest.timings.push(("total".into(), self.started.elapsed().as_secs_f64()));
        self.manifest.warnings = WARNINGS.lock().expect("warning log").clone();
        match &self.output {
            Some(path) => {
                std::fs::write(path, body)?;
                let mut m = path.as_os_str().to_owned();
                m.push(".manifest.json");
                let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
                std::fs::write(PathBuf::from(m), json + "\n")?;
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(body.as_bytes())?;
                out.flush()?;
            }
        }
        Ok(())
    }
}

fn wave_of(cfg: &Config, k: Option<f64>, theta: Option<f64>) -> Result<WaveParams, CliError> {
    Ok(WaveParams::new(k.unwrap_or(cfg.k), theta.unwrap_or(cfg.theta), cfg.i0)?)
}

fn require_valid(cell: &UnitCell, wave: &WaveParams) -> Result<(), CliError> {
    let report = validate_assumptions(cell, wave, &ValidationOptions::default());
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Assumptions(report))
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serialisable output") + "\n"
}

fn c_json(z: Complex64) -> serde_json::Value {
    serde_json::json!({ "re": z.re, "im": z.im, "abs": z.norm(), "phase": z.arg() })
}

fn print_checks(checks: &[SelfCheck]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(
            s,
            "{} {:<16} {:<60} {:.3e} (limit {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.suite,
            c.name,
            c.value,
            c.limit
        );
    }
    s
}

fn execute(cli: Cli, ctx: &mut Context) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { config, k, theta } => {
            let cfg = ctx.load(&config)?;
            let cell = cfg.cell()?;
            let wave = wave_of(&cfg, k, theta)?;
            let report = validate_assumptions(&cell, &wave, &ValidationOptions::default());
            let mut s = String::new();
            for c in &report.checks {
                let _ = writeln!(
                    s,
                    "{} ({}) {}: margin {}",
                    if c.passed { "ok" } else { "VIOLATED" },
                    c.name,
                    c.condition,
                    fmt_f64(c.margin)
                );
            }
            ctx.emit(&s)?;
            if !report.all_passed() {
                return Err(CliError::Assumptions(report));
            }
        }
        Command::Greens {
            config,
            source,
            grid,
            method,
        } => {
            let cfg = ctx.load(&config)?;
            let wave = wave_of(&cfg, None, None)?;
            let d = cfg.delta;
            let green = QpGreen::from_wave(&wave.scaled(d), ctx.opts().green)?;
            let z = [source[0] / d, source[1] / d];
            let m = Method::from(method);
            let name = match method {
                GreenMethod::Auto => "auto",
                GreenMethod::Spectral => "spectral",
                GreenMethod::Ewald => "ewald",
            };
            let mut s = String::from("x1,x2,re,im,method\n");
            for x in parse_grid(&grid)? {
                let v = green
                    .gamma_plus(z, [x[0] / d, x[1] / d], m)
                    .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
                let _ = writeln!(s, "{},{},{},{},{name}", fmt_f64(x[0]), fmt_f64(x[1]), fmt_f64(v.re), fmt_f64(v.im));
            }
            ctx.emit(&s)?;
        }
        Command::BemSelftest { nodes } => {
            let t = Instant::now();
            let mut checks = helmholtz_suite(nodes)?;
            ctx.stage("helmholtz", t);
            let t = Instant::now();
            checks.extend(period_doubling_suite(nodes)?);
            ctx.stage("period-doubling", t);
            finish_checks(ctx, &checks)?;
        }
        Command::Selftest { nodes } => {
            let t = Instant::now();
            let mut checks = period_doubling_suite(nodes)?;
            ctx.stage("period-doubling", t);
            let t = Instant::now();
            checks.extend(helmholtz_suite(nodes)?);
            ctx.stage("helmholtz", t);
            let t = Instant::now();
            checks.extend(far_field_suite(nodes)?);
            ctx.stage("far-field", t);
            finish_checks(ctx, &checks)?;
        }
        Command::Coupling {
            config,
            k_range,
            theta,
            json: dump,
        } => {
            let cfg = ctx.load(&config)?;
            let cell = cfg.cell()?;
            let theta = theta.unwrap_or(cfg.theta);
            let ks = parse_range(&k_range)?;
            for &k in &ks {
                require_valid(&cell, &WaveParams::new(k, theta, cfg.i0)?)?;
            }
            let t = Instant::now();
            let opts = ctx.opts();
            let data = {
                use rayon::prelude::*;
                ks.par_iter()
                    .map(|&k| assemble_coupling(&cell, &WaveParams::new(k, theta, cfg.i0)?, opts).map_err(CliError::from))
                    .collect::<Result<Vec<_>, CliError>>()?
            };
            ctx.stage("coupling", t);
            let branches = track_branches(&data.iter().map(|c| c.eigenvalues()).collect::<Vec<_>>());
            let mut s = String::from("k,theta,branch,re_eig,im_eig\n");
            for (j, &k) in ks.iter().enumerate() {
                for (b, branch) in branches.iter().enumerate() {
                    let e = branch[j];
                    let _ = writeln!(s, "{},{},{b},{},{}", fmt_f64(k), fmt_f64(theta), fmt_f64(e.re), fmt_f64(e.im));
                }
            }
            if let Some(path) = dump {
                std::fs::write(path, json(&data))?;
            }
            ctx.emit(&s)?;
        }
        Command::Solve { config, k, theta } => {
            let cfg = ctx.load(&config)?;
            let cell = cfg.cell()?;
            let wave = wave_of(&cfg, k, theta)?;
            require_valid(&cell, &wave)?;
            let t = Instant::now();
            let s = Scatterer::new(&cell, &wave, ctx.opts())?;
            ctx.stage("solve", t);
            let sol = s.solution();
            let out = serde_json::json!({
                "k": sol.k,
                "theta": sol.theta,
                "I_s": c_json(sol.i_s),
                "w": sol.weights.iter().map(|w| [w.re, w.im]).collect::<Vec<_>>(),
                "eig_Q": sol.eig_q.iter().map(|w| [w.re, w.im]).collect::<Vec<_>>(),
                "sigma_min_Q": sol.sigma_min,
                "cond_Q": sol.cond_q,
                "error_budget": sol.error_budget,
                "residual": sol.residual,
                "coupling": s.coupling(),
            });
            ctx.emit(&json(&out))?;
        }
        Command::Sweep {
            config,
            k_range,
            theta_range,
            interpolate,
        } => {
            let cfg = ctx.load(&config)?;
            let cell = cfg.cell()?;
            let ks = parse_range(&k_range)?;
            let thetas = parse_range(&theta_range)?;
            for &th in &thetas {
                for &k in &ks {
                    require_valid(&cell, &WaveParams::new(k, th, cfg.i0)?)?;
                }
            }
            let t = Instant::now();
            let points = match interpolate {
                Some(n) => {
                    let (p, check) = sweep_interpolated(&cell, &ks, &thetas, cfg.i0, n, ctx.opts())?;
                    log::info!("coupling interpolation check {check:.3e}");
                    if check > 1e-6 {
                        log::warn!("coupling interpolation deviates by {check:.3e} from direct assembly");
                    }
                    p
                }
                None => sweep(&cell, &ks, &thetas, cfg.i0, ctx.opts())?,
            };
            ctx.stage("sweep", t);
            let mut s = String::from("k,theta,abs_Is,phase_Is,sigma_min_Q\n");
            for p in &points {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    fmt_f64(p.k),
                    fmt_f64(p.theta),
                    fmt_f64(p.abs_i_s),
                    fmt_f64(p.phase_i_s),
                    fmt_f64(p.sigma_min)
                );
            }
            ctx.emit(&s)?;
        }
        Command::Field { config, k, theta, grid } => {
            let cfg = ctx.load(&config)?;
            let cell = cfg.cell()?;
            let wave = wave_of(&cfg, k, theta)?;
            require_valid(&cell, &wave)?;
            let t = Instant::now();
            let s = Scatterer::new(&cell, &wave, ctx.opts())?;
            ctx.stage("solve", t);
            let points = parse_grid(&grid)?;
            let t = Instant::now();
            let values: Vec<Option<Complex64>> = {
                use rayon::prelude::*;
                points.par_iter().map(|&z| s.field(z)).collect()
            };
            ctx.stage("field", t);
            let mut out = String::from("x1,x2,re_U,im_U\n");
            for (z, v) in points.iter().zip(values) {
                let v = v.unwrap_or(Complex64::new(f64::NAN, f64::NAN));
                let _ = writeln!(out, "{},{},{},{}", fmt_f64(z[0]), fmt_f64(z[1]), fmt_f64(v.re), fmt_f64(v.im));
            }
            ctx.emit(&out)?;
        }
        Command::Tune {
            config,
            k,
            theta,
            eigenvalue_index,
            near,
            lambda,
            seek_multiplicity,
        } => {
            let mut cfg = ctx.load(&config)?;
            let cell = cfg.cell()?;
            let mut wave = wave_of(&cfg, k, theta)?;
            if let Some(range) = seek_multiplicity {
                let ks = parse_range(&range)?;
                if let Some((k, gap)) = closest_eigenvalue_pair(&cell, wave.theta, &ks, ctx.opts())? {
                    log::info!("closest eigenvalue pair at k = {k} (distance {gap:.3e})");
                    wave = WaveParams::new(k, wave.theta, wave.i0)?;
                }
            }
            require_valid(&cell, &wave)?;
            let lambda = match lambda {
                Some(l) => l,
                None => {
                    let coupling = assemble_coupling(&cell, &wave, ctx.opts())?;
                    let mut eig = coupling.eigenvalues();
                    eig.sort_by(|a, b| a.re.total_cmp(&b.re));
                    match (eigenvalue_index, near) {
                        (Some(j), _) => {
                            eig.get(j)
                                .ok_or_else(|| CliError::Usage(format!("eigenvalue index {j} out of range ({} eigenvalues)", eig.len())))?
                                .re
                        }
                        (None, Some(target)) => eig
                            .iter()
                            .min_by(|a, b| (a.re - target).abs().total_cmp(&(b.re - target).abs()))
                            .ok_or_else(|| CliError::Usage("the cell has no resonators".into()))?
                            .re,
                        (None, None) => {
                            return Err(CliError::Usage("give --eigenvalue-index, --near or --lambda".into()));
                        }
                    }
                }
            };
            let tuned = tune_apertures(&cell, &wave, lambda)?;
            cfg.k = wave.k;
            cfg.theta = wave.theta;
            cfg.resonators = tuned.resonators;
            let body = format!("# apertures tuned at k = {:?}, lambda = {:?}\n{}", wave.k, lambda, cfg.to_toml());
            ctx.emit(&body)?;
        }
        Command::Resonances {
            config,
            k_range,
            theta_range,
            threshold,
            branch_tol,
            interpolate,
        } => {
            let cfg = ctx.load(&config)?;
            let cell = cfg.cell()?;
            let ks = parse_range(&k_range)?;
            let thetas = parse_range(&theta_range)?;
            let t = Instant::now();
            let ropts = ResonanceOptions {
                threshold,
                branch_tol,
                interpolation_nodes: interpolate,
                ..Default::default()
            };
            let report = resonance_report(&cell, &ks, &thetas, ctx.opts(), &ropts)?;
            ctx.stage("resonances", t);
            ctx.emit(&json(&report))?;
        }
    }
    Ok(())
}

fn finish_checks(ctx: &mut Context, checks: &[SelfCheck]) -> Result<(), CliError> {
    ctx.emit(&print_checks(checks))?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::SelfTest(failed.join(", ")))
    }
}

/// Runs the command line `args` (program name first) and returns the exit status.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let verbose = cli.verbose;
    if log::set_boxed_logger(Box::new(Logger { verbose })).is_ok() {
        log::set_max_level(if verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn });
    }
    WARNINGS.lock().expect("warning log").clear();
    let threads = worker_threads();
    let mut ctx = Context {
        profile: cli.tolerance_profile,
        output: cli.output.clone(),
        manifest: RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: args.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
            config_hash: None,
            tolerance_profile: format!("{:?}", cli.tolerance_profile).to_lowercase(),
            threads,
            farfield: options(cli.tolerance_profile, BemOptions::default().nodes),
            validation: ValidationOptions::default(),
            timings: Vec::new(),
            warnings: Vec::new(),
        },
        started: Instant::now(),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(cli, &mut ctx)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os())
}
