//! Command-line front end.
//!
//! Every command writes plain text: a block of `# key=value` metadata lines
//! (the full run configuration plus informational keys) followed by CSV rows
//! with 17 significant digits. Exit codes: 0 ok, 1 validation error,
//! 2 check failure, 3 resource cap exceeded.

pub mod config;

use std::ffi::OsString;
use std::io::Write as _;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    bare_transfer, exact_state, exact_transfer, strong_coupling_transfer, weak_corrected_transfer, Formula,
    TimeGrid, TransferSeries,
};
use crate::error::{Error, Result};
use crate::model::{homogenize, BathSpec, ChainSpec, DEFAULT_HOMOGENEITY_TOL};
use crate::optimize::{objective_series, search, SearchProblem};
use crate::oracle::{build_full, random_bath, spread_couplings};
use crate::spectra::{dress, eigendecompose, SpectralData};

pub use config::{ChainSource, Command, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_RESOURCE_CAP: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spin-transfer", version, about = "Spin transfer functions with spin baths")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Transfer amplitude f(t) for one formula
    Transfer(Flags),
    /// Exact curves and strong-coupling residuals for a list of G values
    Sweep(Flags),
    /// Cross-check the closed form against the full-sector oracle
    Check(Flags),
    /// Search chain couplings for the highest transfer peak
    Optimize(Flags),
    /// Bare and dressed spectrum
    Spectrum(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// Uniform chain with N sites and J = 1
    #[arg(long, value_name = "N")]
    uniform: Option<usize>,
    /// Engineered chain J_l = sqrt(l (N - l)) with N sites
    #[arg(long, value_name = "N")]
    engineered: Option<usize>,
    /// Rescale engineered couplings to this sum
    #[arg(long)]
    rescale: Option<f64>,
    /// Comma-separated chain couplings J_1..J_{N-1}
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    couplings: Option<String>,
    /// Number of sites (uniform chain unless another chain flag is given)
    #[arg(long = "n", value_name = "N")]
    n_sites: Option<usize>,
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Effective bath coupling G, or a comma-separated list for sweep
    #[arg(long, value_name = "VAL|LIST")]
    g: Option<String>,
    /// File with bath.<site>=g1,g2,... lines
    #[arg(long)]
    bath_spec: Option<PathBuf>,
    /// Source site (1-based, default 1)
    #[arg(long)]
    from: Option<usize>,
    /// Target site (1-based, default N)
    #[arg(long)]
    to: Option<usize>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// bare | exact | strong_approx | weak_corrected | oracle
    #[arg(long)]
    formula: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative spread of generated G_l (check)
    #[arg(long)]
    spread: Option<f64>,
    /// first_peak | global_peak (optimize)
    #[arg(long)]
    objective: Option<String>,
    /// Evaluations per restart (optimize)
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Output file (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))
}

impl Flags {
    fn into_config(self, command: Command) -> Result<RunConfig> {
        let mut config = RunConfig::new(command);
        if let Some(path) = &self.config {
            config.apply_config_str(&read(path)?)?;
            config.command = command;
        }
        if let Some(path) = &self.bath_spec {
            let mut bath_only = RunConfig::new(command);
            bath_only.apply_config_str(&read(path)?)?;
            config.bath_spins = bath_only.bath_spins;
        }
        let chain_flags = [self.uniform.is_some(), self.engineered.is_some(), self.couplings.is_some()];
        if chain_flags.iter().filter(|&&b| b).count() > 1 {
            return Err(Error::validation("give at most one of --uniform, --engineered, --couplings"));
        }
        if let Some(n) = self.uniform {
            config.chain = Some(ChainSource::Uniform(n));
        }
        if let Some(n) = self.engineered {
            config.chain = Some(ChainSource::Engineered {
                n_sites: n,
                rescale: self.rescale,
            });
        } else if let Some(r) = self.rescale {
            match &mut config.chain {
                Some(ChainSource::Engineered { rescale, .. }) => *rescale = Some(r),
                _ => return Err(Error::validation("--rescale applies to engineered chains only")),
            }
        }
        if let Some(list) = &self.couplings {
            config.chain = Some(ChainSource::Couplings(config::parse_list(list).map_err(Error::Validation)?));
        }
        if let Some(n) = self.n_sites {
            match &config.chain {
                None => config.chain = Some(ChainSource::Uniform(n)),
                Some(c) if c.n_sites() != n => {
                    return Err(Error::validation(format!("--n {n} disagrees with the chain ({} sites)", c.n_sites())))
                }
                Some(_) => {}
            }
        }
        if let Some(g) = &self.g {
            config.g = config::parse_list(g).map_err(Error::Validation)?;
        }
        config.from = self.from.or(config.from);
        config.to = self.to.or(config.to);
        config.t_max = self.tmax.or(config.t_max);
        config.dt = self.dt.or(config.dt);
        if let Some(f) = &self.formula {
            config.formula = f.parse()?;
        }
        if let Some(o) = &self.objective {
            config.objective = o.parse()?;
        }
        config.seed = self.seed.unwrap_or(config.seed);
        config.spread = self.spread.unwrap_or(config.spread);
        config.budget = self.budget.unwrap_or(config.budget);
        config.restarts = self.restarts.unwrap_or(config.restarts);
        config.out = self.out;
        Ok(config)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (command, flags) = match cli.command {
        Sub::Transfer(f) => (Command::Transfer, f),
        Sub::Sweep(f) => (Command::Sweep, f),
        Sub::Check(f) => (Command::Check, f),
        Sub::Optimize(f) => (Command::Optimize, f),
        Sub::Spectrum(f) => (Command::Spectrum, f),
    };
    let outcome = flags.into_config(command).and_then(|config| {
        let (text, passed) = execute(&config)?;
        emit(&config, &text)?;
        Ok(passed)
    });
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DimensionCap { .. } => EXIT_RESOURCE_CAP,
        _ => EXIT_VALIDATION,
    }
}

fn emit(config: &RunConfig, text: &str) -> Result<()> {
    match &config.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Error::validation(format!("cannot write output: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

/// Runs a configuration and returns its output text and whether every check
/// passed (always `true` outside `check`).
pub fn execute(config: &RunConfig) -> Result<(String, bool)> {
    match config.command {
        Command::Transfer => cmd_transfer(config).map(|s| (s, true)),
        Command::Sweep => cmd_sweep(config).map(|s| (s, true)),
        Command::Check => cmd_check(config),
        Command::Optimize => cmd_optimize(config).map(|s| (s, true)),
        Command::Spectrum => cmd_spectrum(config).map(|s| (s, true)),
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(config: &RunConfig, info: &[(&str, String)]) -> String {
    let mut s = String::new();
    for line in config.to_config_string().lines() {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "# tool={}", env!("CARGO_PKG_NAME"));
    let _ = writeln!(s, "# version={}", env!("CARGO_PKG_VERSION"));
    for (k, v) in info {
        let _ = writeln!(s, "# {k}={v}");
    }
    s
}

fn write_series(s: &mut String, series: &TransferSeries) {
    s.push_str("t,re,im,abs\n");
    for (t, f) in series.times.iter().zip(&series.amplitudes) {
        let _ = writeln!(s, "{},{},{},{}", num(*t), num(f.re), num(f.im), num(f.norm()));
    }
}

struct Resolved {
    chain: ChainSpec,
    spec: SpectralData,
    source: usize,
    target: usize,
}

fn resolve(config: &RunConfig) -> Result<Resolved> {
    let chain = config.chain_spec()?;
    let n = chain.n_sites();
    let source = config.from.unwrap_or(1);
    let target = config.to.unwrap_or(n);
    chain.check_site(source)?;
    chain.check_site(target)?;
    let spec = eigendecompose(&chain.hopping_matrix())?;
    Ok(Resolved {
        chain,
        spec,
        source,
        target,
    })
}

fn grid(config: &RunConfig, g_max: f64, spec: &SpectralData) -> Result<Vec<f64>> {
    let t_max = config.t_max_or_default();
    let grid = match config.dt {
        Some(dt) => TimeGrid::new(t_max, dt)?,
        None => TimeGrid::auto(t_max, g_max, spec.spectral_norm())?,
    };
    Ok(grid.times())
}

fn first_g(config: &RunConfig) -> Result<f64> {
    let g = config.g.first().copied().unwrap_or(0.0);
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::validation(format!("bath coupling must be >= 0, got {g}")));
    }
    Ok(g)
}

/// `transfer`: one series for the selected formula.
pub fn cmd_transfer(config: &RunConfig) -> Result<String> {
    let r = resolve(config)?;
    let n = r.chain.n_sites();
    let spin_bath = config.spin_bath(n)?;
    let mut info = vec![("chain_hash", r.chain.fingerprint().to_string())];

    let series = if config.formula == Formula::Oracle {
        let bath = match spin_bath {
            Some(b) => b,
            None => BathSpec::homogeneous(n, first_g(config)?)?,
        };
        let g_max = bath.effective_couplings().into_iter().fold(0.0, f64::max);
        let times = grid(config, g_max, &r.spec)?;
        let full = build_full(&r.chain, &bath)?;
        full.propagator()?.transfer(r.source, r.target, &times)?
    } else {
        let g = match &spin_bath {
            Some(b) => homogenize(b, DEFAULT_HOMOGENEITY_TOL)
                .map_err(|e| Error::validation(format!("{e}; use --formula oracle for inhomogeneous baths")))?
                .g_eff(),
            None => first_g(config)?,
        };
        info.push(("g_used", g.to_string()));
        let times = grid(config, g, &r.spec)?;
        match config.formula {
            Formula::Bare => bare_transfer(&r.spec, r.source, r.target, &times)?,
            Formula::Exact => exact_transfer(&dress(&r.spec, g)?, r.source, r.target, &times)?,
            Formula::StrongApprox => strong_coupling_transfer(&r.spec, r.source, r.target, &times, g)?,
            Formula::WeakCorrected => {
                let min_eps = r.spec.eigenvalues().iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
                info.push(("min_abs_eps", num(min_eps)));
                weak_corrected_transfer(&r.spec, r.source, r.target, &times, g)?
            }
            Formula::Oracle => unreachable!(),
        }
    };
    info.push(("points", series.len().to_string()));
    let mut out = header(config, &info);
    write_series(&mut out, &series);
    Ok(out)
}

fn g_label(g: f64) -> String {
    format!("g{g}")
}

/// `sweep`: exact curves for every G plus `|exact - strong_approx|`.
pub fn cmd_sweep(config: &RunConfig) -> Result<String> {
    if config.g.is_empty() {
        return Err(Error::validation("sweep needs at least one G value (--g 0,1,4)"));
    }
    let r = resolve(config)?;
    let g_max = config.g.iter().copied().fold(0.0, f64::max);
    let times = grid(config, g_max, &r.spec)?;

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for &g in &config.g {
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::validation(format!("bath coupling must be >= 0, got {g}")));
        }
        let exact = exact_transfer(&dress(&r.spec, g)?, r.source, r.target, &times)?;
        let label = g_label(g);
        columns.push((format!("re_{label}"), exact.amplitudes.iter().map(|z| z.re).collect()));
        columns.push((format!("im_{label}"), exact.amplitudes.iter().map(|z| z.im).collect()));
        columns.push((format!("abs_{label}"), exact.magnitudes()));
        if g > 0.0 {
            let strong = strong_coupling_transfer(&r.spec, r.source, r.target, &times, g)?;
            let residual = exact
                .amplitudes
                .iter()
                .zip(&strong.amplitudes)
                .map(|(a, b)| (a - b).norm())
                .collect();
            columns.push((format!("residual_{label}"), residual));
        }
    }

    let info = [
        ("chain_hash", r.chain.fingerprint().to_string()),
        ("points", times.len().to_string()),
    ];
    let mut out = header(config, &info);
    out.push('t');
    for (name, _) in &columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, t) in times.iter().enumerate() {
        out.push_str(&num(*t));
        for (_, values) in &columns {
            out.push(',');
            out.push_str(&num(values[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// `spectrum`: bare eigenvalues and dressed energies.
pub fn cmd_spectrum(config: &RunConfig) -> Result<String> {
    let chain = config.chain_spec()?;
    let spec = eigendecompose(&chain.hopping_matrix())?;
    let g = first_g(config)?;
    let dressed = dress(&spec, g)?;
    let info = [
        ("chain_hash", chain.fingerprint().to_string()),
        ("g_used", g.to_string()),
    ];
    let mut out = header(config, &info);
    out.push_str("k,epsilon,delta,e_upper,e_lower\n");
    for (k, m) in dressed.modes().iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            k + 1,
            num(m.epsilon),
            num(m.delta),
            num(m.energy[0]),
            num(m.energy[1])
        );
    }
    Ok(out)
}

/// `optimize`: coupling search and the best curve.
pub fn cmd_optimize(config: &RunConfig) -> Result<String> {
    let n_sites = config
        .chain
        .as_ref()
        .map(ChainSource::n_sites)
        .ok_or_else(|| Error::validation("optimize needs a chain size (--n N)"))?;
    let problem = SearchProblem {
        n_sites,
        g_eff: first_g(config)?,
        t_max: config.t_max_or_default(),
        bounds: config.bounds,
        objective: config.objective,
        seed: config.seed,
        budget: config.budget,
        restarts: config.restarts,
    };
    let result = search(&problem)?;
    let series = objective_series(&result.couplings, problem.g_eff, problem.t_max)?;
    let j: Vec<String> = result.couplings.iter().map(|x| num(*x)).collect();
    let info = [
        ("j_best", j.join(",")),
        ("with_bath", num(result.with_bath)),
        ("without_bath", num(result.without_bath)),
        ("improved", result.improved().to_string()),
        ("evaluations", result.evaluations.to_string()),
        ("best_restart", result.restart.to_string()),
        ("points", series.len().to_string()),
    ];
    eprintln!("improved: {}", result.improved());
    let mut out = header(config, &info);
    write_series(&mut out, &series);
    Ok(out)
}

struct Report {
    lines: Vec<String>,
    passed: bool,
    max_residual: f64,
}

impl Report {
    fn check(&mut self, name: &str, residual: f64, tol: f64) {
        let ok = residual <= tol;
        self.passed &= ok;
        self.max_residual = self.max_residual.max(residual);
        self.lines.push(format!(
            "{name},{},{},{}",
            num(residual),
            num(tol),
            if ok { "PASS" } else { "FAIL" }
        ));
    }

    fn note(&mut self, name: &str, value: f64) {
        self.lines.push(format!("{name},{},,INFO", num(value)));
    }
}

/// The bath `check` runs against: `bath.<site>` entries when given,
/// otherwise a seeded random realization with `G_l` from `--g`/`--spread`.
fn check_bath(config: &RunConfig, n: usize) -> Result<BathSpec> {
    if let Some(b) = config.spin_bath(n)? {
        return Ok(b);
    }
    let g = first_g(config)?;
    if g == 0.0 {
        return BathSpec::none(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let counts: Vec<usize> = (0..n).map(|_| rng.random_range(1..=4)).collect();
    let targets = spread_couplings(&mut rng, n, g, config.spread);
    random_bath(&mut rng, &counts, &targets)
}

/// `check`: closed form versus oracle plus the probability invariants.
pub fn cmd_check(config: &RunConfig) -> Result<(String, bool)> {
    let r = resolve(config)?;
    let n = r.chain.n_sites();
    let bath = check_bath(config, n)?;
    let full = build_full(&r.chain, &bath)?;
    let g_l = bath.effective_couplings();
    let g_max = g_l.iter().copied().fold(0.0, f64::max);
    let times = grid(config, g_max, &r.spec)?;
    let prop = full.propagator()?;
    let mut report = Report {
        lines: Vec::new(),
        passed: true,
        max_residual: 0.0,
    };

    let h = r.chain.hopping_matrix();
    let h_scale = r.spec.spectral_norm().max(1.0);
    let mut eig_residual: f64 = 0.0;
    for (k, &e) in r.spec.eigenvalues().iter().enumerate() {
        let v = r.spec.eigenvectors().row(k).transpose();
        eig_residual = eig_residual.max((&h * &v - v.scale(e)).norm() / h_scale);
    }
    report.check("eigen_residual", eig_residual, 1e-10);

    let mut unitarity: f64 = 0.0;
    let mut contractivity: f64 = 0.0;
    for &t in &times {
        let psi = prop.state(r.source, t)?;
        let total: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let chain: f64 = psi[..n].iter().map(|z| z.norm_sqr()).sum();
        unitarity = unitarity.max((total - 1.0).abs());
        contractivity = contractivity.max(chain - 1.0);
    }
    report.check("oracle_unitarity", unitarity, 1e-10);
    report.check("chain_contractivity", contractivity.max(0.0), 1e-9);

    let mut initial: f64 = 0.0;
    for m in 1..=n {
        let f0 = prop.transfer(r.source, m, &[0.0])?.amplitudes[0];
        let delta = if m == r.source { 1.0 } else { 0.0 };
        initial = initial.max((f0 - crate::C64::new(delta, 0.0)).norm());
    }
    report.check("initial_condition", initial, 1e-12);

    let oracle = prop.transfer(r.source, r.target, &times)?;
    match homogenize(&bath, DEFAULT_HOMOGENEITY_TOL) {
        Ok(hom) if hom.g_eff() == 0.0 => {
            let bare = bare_transfer(&r.spec, r.source, r.target, &times)?;
            report.check("bare_vs_oracle", oracle.sup_distance(&bare), 1e-10);
        }
        Ok(hom) => {
            let dressed = dress(&r.spec, hom.g_eff())?;
            let exact = exact_transfer(&dressed, r.source, r.target, &times)?;
            report.check("exact_vs_oracle", oracle.sup_distance(&exact), 1e-9);
            let mut effective: f64 = 0.0;
            for &t in &times {
                let (chain, bath) = exact_state(&dressed, r.source, t)?;
                let p: f64 = chain.iter().chain(&bath).map(|z| z.norm_sqr()).sum();
                effective = effective.max((p - 1.0).abs());
            }
            report.check("effective_unitarity", effective, 1e-9);
        }
        Err(Error::Heterogeneous { spread, .. }) => {
            let mean = bath.mean_effective_coupling();
            let dressed = dress(&r.spec, mean)?;
            let exact = exact_transfer(&dressed, r.source, r.target, &times)?;
            report.lines.push("regime,approximate,,INFO".into());
            report.note("relative_spread", if mean > 0.0 { spread / mean } else { spread });
            report.note("mean_g", mean);
            report.note("deviation_from_mean_g", oracle.sup_distance(&exact));
        }
        Err(e) => return Err(e),
    }

    let info = [
        ("chain_hash", r.chain.fingerprint().to_string()),
        ("points", times.len().to_string()),
    ];
    let mut out = header(config, &info);
    out.push_str("check,residual,tolerance,status\n");
    for line in &report.lines {
        out.push_str(line);
        out.push('\n');
    }
    let _ = writeln!(out, "max_residual,{},,{}", num(report.max_residual), if report.passed { "PASS" } else { "FAIL" });
    Ok((out, report.passed))
}
