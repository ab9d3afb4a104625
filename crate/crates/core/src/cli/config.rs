//! Run configuration and its line-oriented `key=value` file format.
//!
//! ```text
//! # comment
//! uniform=10            # or engineered=N, couplings=..., n_sites=N, hopping.<row>=...
//! rescale=9             # engineered chains only
//! bath.3=0.5,0.5        # individual bath couplings of site 3
//! bath_eff=4.0          # homogeneous effective coupling (list allowed)
//! from=1
//! to=10
//! tmax=40
//! dt=0.01
//! formula=exact
//! seed=7
//! ```
//!
//! Lists are comma-separated. Hopping entries are `re`, `re+imi` or `re-imi`.
//! Lines of the form `# key=value` with a known key are read as settings, so
//! the metadata block of a CSV produced by this tool is itself a valid config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::DMatrix;

use crate::dynamics::Formula;
use crate::error::{Error, Result};
use crate::model::{BathSpec, ChainSpec};
use crate::optimize::PeakObjective;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Transfer,
    Sweep,
    Check,
    Optimize,
    Spectrum,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Transfer => "transfer",
            Command::Sweep => "sweep",
            Command::Check => "check",
            Command::Optimize => "optimize",
            Command::Spectrum => "spectrum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainSource {
    /// `J_l = 1`.
    Uniform(usize),
    Engineered { n_sites: usize, rescale: Option<f64> },
    Couplings(Vec<f64>),
    Hopping(DMatrix<C64>),
}

impl ChainSource {
    pub fn build(&self) -> Result<ChainSpec> {
        match self {
            ChainSource::Uniform(n) => ChainSpec::uniform(*n, 1.0),
            ChainSource::Engineered { n_sites, rescale } => ChainSpec::engineered(*n_sites, *rescale),
            ChainSource::Couplings(j) => ChainSpec::from_couplings(j.clone()),
            ChainSource::Hopping(h) => ChainSpec::from_hopping(h.clone()),
        }
    }

    pub fn n_sites(&self) -> usize {
        match self {
            ChainSource::Uniform(n) => *n,
            ChainSource::Engineered { n_sites, .. } => *n_sites,
            ChainSource::Couplings(j) => j.len() + 1,
            ChainSource::Hopping(h) => h.nrows(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub chain: Option<ChainSource>,
    /// Individual bath-spin couplings keyed by 1-based site.
    pub bath_spins: BTreeMap<usize, Vec<f64>>,
    /// Homogeneous effective coupling(s) `G`; `sweep` uses all of them.
    pub g: Vec<f64>,
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub formula: Formula,
    pub seed: u64,
    /// Relative spread of `G_l` for generated check baths.
    pub spread: f64,
    pub objective: PeakObjective,
    pub budget: usize,
    pub restarts: usize,
    pub bounds: (f64, f64),
    /// Output file; not part of the serialized form.
    pub out: Option<PathBuf>,
}

pub const DEFAULT_T_MAX: f64 = 20.0;
pub const DEFAULT_OPTIMIZE_T_MAX: f64 = 30.0;

/// Keys written into CSV metadata for information only.
const INFO_KEYS: &[&str] = &[
    "tool",
    "version",
    "chain_hash",
    "points",
    "min_abs_eps",
    "regime",
    "g_used",
    "j_best",
    "with_bath",
    "without_bath",
    "improved",
    "evaluations",
    "best_restart",
    "peak_time",
    "peak_abs",
];

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            chain: None,
            bath_spins: BTreeMap::new(),
            g: Vec::new(),
            from: None,
            to: None,
            t_max: None,
            dt: None,
            formula: Formula::Exact,
            seed: 0,
            spread: 0.0,
            objective: PeakObjective::GlobalPeak,
            budget: 5000,
            restarts: 10,
            bounds: (0.05, 2.0),
            out: None,
        }
    }

    pub fn chain_spec(&self) -> Result<ChainSpec> {
        self.chain
            .as_ref()
            .ok_or_else(|| Error::validation("no chain given (use --uniform, --engineered or --couplings)"))?
            .build()
    }

    /// Bath built from `bath.<site>` entries, sites without an entry bare.
    pub fn spin_bath(&self, n_sites: usize) -> Result<Option<BathSpec>> {
        if self.bath_spins.is_empty() {
            return Ok(None);
        }
        if let Some(&site) = self.bath_spins.keys().find(|&&s| s == 0 || s > n_sites) {
            return Err(Error::SiteIndex { index: site, n_sites });
        }
        let per_site = (1..=n_sites)
            .map(|l| self.bath_spins.get(&l).cloned().unwrap_or_default())
            .collect();
        BathSpec::from_couplings(per_site).map(Some)
    }

    pub fn t_max_or_default(&self) -> f64 {
        self.t_max.unwrap_or(match self.command {
            Command::Optimize => DEFAULT_OPTIMIZE_T_MAX,
            _ => DEFAULT_T_MAX,
        })
    }

    /// Canonical `key=value` form.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        line("command", self.command.name().into());
        match &self.chain {
            Some(ChainSource::Uniform(n)) => line("uniform", n.to_string()),
            Some(ChainSource::Engineered { n_sites, rescale }) => {
                line("engineered", n_sites.to_string());
                if let Some(r) = rescale {
                    line("rescale", r.to_string());
                }
            }
            Some(ChainSource::Couplings(j)) => {
                line("n_sites", (j.len() + 1).to_string());
                line("couplings", join(j));
            }
            Some(ChainSource::Hopping(h)) => {
                for r in 0..h.nrows() {
                    let row: Vec<String> = h.row(r).iter().map(format_complex).collect();
                    line(&format!("hopping.{}", r + 1), row.join(","));
                }
            }
            None => {}
        }
        for (site, g) in &self.bath_spins {
            line(&format!("bath.{site}"), join(g));
        }
        if !self.g.is_empty() {
            line("bath_eff", join(&self.g));
        }
        if let Some(v) = self.from {
            line("from", v.to_string());
        }
        if let Some(v) = self.to {
            line("to", v.to_string());
        }
        if let Some(v) = self.t_max {
            line("tmax", v.to_string());
        }
        if let Some(v) = self.dt {
            line("dt", v.to_string());
        }
        line("formula", self.formula.tag().into());
        line("seed", self.seed.to_string());
        line("spread", self.spread.to_string());
        line("objective", self.objective.to_string());
        line("budget", self.budget.to_string());
        line("restarts", self.restarts.to_string());
        line("bounds", format!("{},{}", self.bounds.0, self.bounds.1));
        s
    }

    /// Applies the settings of a config text on top of `self`.
    pub fn apply_config_str(&mut self, text: &str) -> Result<()> {
        let mut hopping_rows: BTreeMap<usize, Vec<C64>> = BTreeMap::new();
        let mut n_sites: Option<usize> = None;
        let mut rescale: Option<f64> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Config { line: line_no, message };
            let mut line = raw.trim();
            let commented = line.starts_with('#');
            if commented {
                line = line.trim_start_matches('#').trim();
            }
            let Some((key, value)) = line.split_once('=') else {
                if commented || line.is_empty() {
                    continue;
                }
                // first data row of a CSV ends the metadata block
                if line.starts_with(|c: char| c.is_ascii_digit() || c == '-') || line.starts_with("t,") {
                    break;
                }
                return Err(err(format!("expected key=value, got '{line}'")));
            };
            let (key, value) = (key.trim(), value.split('#').next().unwrap_or("").trim());
            if INFO_KEYS.contains(&key) {
                continue;
            }
            if commented && !is_known_key(key) {
                continue;
            }
            match key {
                "command" => self.command = parse_command(value).map_err(err)?,
                "uniform" => self.chain = Some(ChainSource::Uniform(parse_num(value).map_err(err)?)),
                "engineered" => {
                    self.chain = Some(ChainSource::Engineered {
                        n_sites: parse_num(value).map_err(err)?,
                        rescale: None,
                    })
                }
                "rescale" => rescale = Some(parse_num(value).map_err(err)?),
                "n_sites" => n_sites = Some(parse_num(value).map_err(err)?),
                "couplings" => self.chain = Some(ChainSource::Couplings(parse_list(value).map_err(err)?)),
                "bath_eff" | "g" => self.g = parse_list(value).map_err(err)?,
                "from" => self.from = Some(parse_num(value).map_err(err)?),
                "to" => self.to = Some(parse_num(value).map_err(err)?),
                "tmax" => self.t_max = Some(parse_num(value).map_err(err)?),
                "dt" => self.dt = Some(parse_num(value).map_err(err)?),
                "formula" => self.formula = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "seed" => self.seed = parse_num(value).map_err(err)?,
                "spread" => self.spread = parse_num(value).map_err(err)?,
                "objective" => self.objective = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "budget" => self.budget = parse_num(value).map_err(err)?,
                "restarts" => self.restarts = parse_num(value).map_err(err)?,
                "bounds" => {
                    let b: Vec<f64> = parse_list(value).map_err(err)?;
                    if b.len() != 2 {
                        return Err(err("bounds needs exactly two values".into()));
                    }
                    self.bounds = (b[0], b[1]);
                }
                _ => {
                    if let Some(site) = key.strip_prefix("bath.") {
                        let site: usize = parse_num(site).map_err(err)?;
                        self.bath_spins.insert(site, parse_list(value).map_err(err)?);
                    } else if let Some(row) = key.strip_prefix("hopping.") {
                        let row: usize = parse_num(row).map_err(err)?;
                        let entries = value
                            .split(',')
                            .map(|v| parse_complex(v.trim()))
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(err)?;
                        hopping_rows.insert(row, entries);
                    } else {
                        return Err(err(format!("unknown key '{key}'")));
                    }
                }
            }
        }

        if !hopping_rows.is_empty() {
            let n = hopping_rows.len();
            if hopping_rows.keys().copied().ne(1..=n) || hopping_rows.values().any(|r| r.len() != n) {
                return Err(Error::Config {
                    line: 0,
                    message: format!("hopping rows must be hopping.1..hopping.{n} with {n} entries each"),
                });
            }
            let h = DMatrix::from_fn(n, n, |r, c| hopping_rows[&(r + 1)][c]);
            self.chain = Some(ChainSource::Hopping(h));
        }
        if let Some(r) = rescale {
            match &mut self.chain {
                Some(ChainSource::Engineered { rescale, .. }) => *rescale = Some(r),
                _ => {
                    return Err(Error::Config {
                        line: 0,
                        message: "rescale applies to engineered chains only".into(),
                    })
                }
            }
        }
        if let Some(n) = n_sites {
            match &self.chain {
                None => self.chain = Some(ChainSource::Uniform(n)),
                Some(c) if c.n_sites() != n => {
                    return Err(Error::Config {
                        line: 0,
                        message: format!("n_sites={n} disagrees with the chain ({} sites)", c.n_sites()),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn from_config_str(command: Command, text: &str) -> Result<Self> {
        let mut config = Self::new(command);
        config.apply_config_str(text)?;
        Ok(config)
    }
}

fn is_known_key(key: &str) -> bool {
    const KEYS: &[&str] = &[
        "command", "uniform", "engineered", "rescale", "n_sites", "couplings", "bath_eff", "g", "from", "to",
        "tmax", "dt", "formula", "seed", "spread", "objective", "budget", "restarts", "bounds",
    ];
    KEYS.contains(&key) || key.starts_with("bath.") || key.starts_with("hopping.")
}

fn parse_command(s: &str) -> std::result::Result<Command, String> {
    Ok(match s {
        "transfer" => Command::Transfer,
        "sweep" => Command::Sweep,
        "check" => Command::Check,
        "optimize" => Command::Optimize,
        "spectrum" => Command::Spectrum,
        other => return Err(format!("unknown command '{other}'")),
    })
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.trim().parse().map_err(|_| format!("cannot parse '{s}' as a number"))
}

pub(crate) fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_num).collect()
}

fn parse_complex(s: &str) -> std::result::Result<C64, String> {
    let Some(body) = s.strip_suffix('i') else {
        return parse_num(s).map(|re| C64::new(re, 0.0));
    };
    // split at the last sign that is not an exponent sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    match split {
        Some(i) => Ok(C64::new(parse_num(&body[..i])?, parse_num(body[i..].trim_start_matches('+'))?)),
        None => Ok(C64::new(0.0, parse_num(body)?)),
    }
}

fn format_complex(z: &C64) -> String {
    if z.im == 0.0 {
        z.re.to_string()
    } else if z.im.is_sign_negative() {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}
