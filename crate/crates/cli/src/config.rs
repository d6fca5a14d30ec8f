//! Config-file merging and the resolved, hashable run configuration.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser};
use serde::Serialize;
use sha2::{Digest, Sha256};
use stdgm::analysis::{DftMethod, SpectralSettings};
use stdgm::graph::parse_null_spec;
use stdgm::ingest::{BinWidth, ColumnMap, LoadOptions, TimeMode};
use stdgm::simulate::{LinkPair, MarkDist, SimKind, SimSpec, RNG_ALGORITHM};
use stdgm::spectra::Normalisation;

use crate::args::{Cli, Command, CurveArg, DftArg, FormatArg, NormArg, Opts, SimKindArg};

/// Bad flags, config keys or option values; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

/// Long flag names a config file may set.
fn config_keys() -> Vec<String> {
    Cli::command()
        .get_arguments()
        .filter_map(|a| a.get_long())
        .filter(|l| !matches!(*l, "help" | "version" | "config"))
        .map(str::to_string)
        .collect()
}

/// Turns `key = value` lines into `--key=value` arguments. Blank lines and
/// lines starting with `#` are skipped; `_` in keys reads as `-`.
pub fn config_to_args(text: &str) -> Result<Vec<OsString>, UsageError> {
    let keys = config_keys();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return usage(format!("config line {}: expected key = value", n + 1));
        };
        let key = k.trim().replace('_', "-");
        if !keys.contains(&key) {
            return usage(format!("config line {}: unknown key `{}`", n + 1, k.trim()));
        }
        let v = v.trim();
        if v.is_empty() {
            return usage(format!("config line {}: empty value for `{key}`", n + 1));
        }
        out.push(format!("--{key}={v}").into());
    }
    Ok(out)
}

/// Parses the command line, then re-parses with the config file's entries
/// placed ahead of the real arguments so that flags win.
pub fn parse_cli(argv: Vec<OsString>) -> anyhow::Result<Cli> {
    let cli = Cli::try_parse_from(&argv)?;
    let Some(path) = cli.opts.config.clone() else {
        return Ok(cli);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| stdgm::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let mut merged = vec![argv[0].clone()];
    merged.extend(config_to_args(&text)?);
    merged.extend(argv.into_iter().skip(1));
    Ok(Cli::try_parse_from(merged)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum XiSpec {
    Value(f64),
    Null(f64),
}

impl XiSpec {
    pub fn parse(s: &str) -> Result<Self, UsageError> {
        if let Some(q) = parse_null_spec(s) {
            return Ok(XiSpec::Null(q));
        }
        match s.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(XiSpec::Value(v)),
            _ => usage(format!("--xi expects a number or null:qNN, got `{s}`")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Input {
        #[serde(skip)]
        path: PathBuf,
        /// Filled in once the file has been read.
        sha256: String,
        options: LoadOptions,
    },
    Simulation {
        spec: SimSpec,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassicalConfig {
    pub curve: &'static str,
    pub types_c: Option<Vec<usize>>,
    pub types_d: Option<Vec<usize>>,
    pub r_grid: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub homogeneous: bool,
    pub intensity_cells: usize,
}

impl ClassicalConfig {
    pub fn curve(&self) -> CurveArg {
        match self.curve {
            "g" => CurveArg::G,
            "mark_k" => CurveArg::MarkK,
            _ => CurveArg::K,
        }
    }
}

/// Everything that determines the artifacts. Output directory and thread
/// count are deliberately absent: neither may change a byte of output.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub tool: String,
    pub source: Source,
    pub spectral: SpectralSettings,
    pub xi: Option<String>,
    pub null_replicates: usize,
    pub per_slice: bool,
    pub format: &'static str,
    pub classical: ClassicalConfig,
    pub seed: u64,
    pub rng: String,
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run config serialises")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn xi_spec(&self) -> Option<XiSpec> {
        self.xi.as_deref().map(|s| XiSpec::parse(s).expect("validated at resolve"))
    }

    pub fn format(&self) -> FormatArg {
        if self.format == "json" {
            FormatArg::Json
        } else {
            FormatArg::Dot
        }
    }
}

pub struct Resolved {
    pub command: Command,
    pub config: RunConfig,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

pub const DEFAULT_NULL_REPLICATES: usize = 200;

fn parse_list<T: std::str::FromStr>(what: &str, s: &str, sep: char) -> Result<Vec<T>, UsageError> {
    s.split(sep)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().or_else(|_| usage(format!("{what}: cannot parse `{p}`"))))
        .collect()
}

/// 1-based type list `1+2` (or `1,2`) to zero-based indices.
fn parse_types(what: &str, s: &str) -> Result<Vec<usize>, UsageError> {
    let v: Vec<usize> = parse_list(what, &s.replace('+', ","), ',')?;
    if v.is_empty() || v.contains(&0) {
        return usage(format!("{what}: components are numbered from 1"));
    }
    Ok(v.into_iter().map(|k| k - 1).collect())
}

fn parse_links(s: &str) -> Result<Vec<LinkPair>, UsageError> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let v: Vec<f64> = parse_list("--link", p, ',')?;
            if v.len() != 5 || v[0] < 1.0 || v[1] < 1.0 || v[0].fract() != 0.0 || v[1].fract() != 0.0 {
                return usage(format!("--link `{p}` is not i,j,parent_rate,offspring_rate,dispersion"));
            }
            Ok(LinkPair {
                i: v[0] as usize - 1,
                j: v[1] as usize - 1,
                parent_rate: v[2],
                offspring_rate: v[3],
                dispersion: v[4],
            })
        })
        .collect()
}

fn simulation(o: &Opts, seed: u64) -> Result<SimSpec, UsageError> {
    let links = o.link.as_deref().map(parse_links).transpose()?.unwrap_or_default();
    let kind = match o.sim_kind {
        Some(SimKindArg::Poisson) => SimKind::HomogeneousPoisson,
        Some(SimKindArg::LinkedCluster) => SimKind::LinkedCluster,
        None if links.is_empty() => SimKind::HomogeneousPoisson,
        None => SimKind::LinkedCluster,
    };
    let given: Vec<f64> = o.rates.as_deref().map(|r| parse_list("--rates", r, ',')).transpose()?.unwrap_or_default();
    let d = o.components.unwrap_or(if given.len() > 1 { given.len() } else { 3 });
    let rates = match given.len() {
        0 => vec![300.0; d],
        1 => vec![given[0]; d],
        n if n == d => given,
        n => return usage(format!("{n} rates given for {d} components")),
    };
    let marks = o
        .mark_dist
        .as_deref()
        .map(MarkDist::parse)
        .transpose()
        .map_err(|e| UsageError(e.to_string()))?;
    let spec = SimSpec {
        kind,
        d,
        rates,
        t_steps: o.t_steps.unwrap_or(4),
        link_pairs: links,
        seed,
        marks,
    };
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(spec)
}

fn load_options(o: &Opts) -> Result<LoadOptions, UsageError> {
    let columns = match &o.col {
        Some(spec) => ColumnMap::default().with_overrides(spec).map_err(|e| UsageError(e.to_string()))?,
        None => ColumnMap::default(),
    };
    let time = if o.time_is_index.unwrap_or(false) {
        TimeMode::Index
    } else {
        TimeMode::Timestamp {
            origin: o.bin_origin.clone(),
            width: BinWidth::parse(o.bin_width.as_deref().unwrap_or("1month")).map_err(|e| UsageError(e.to_string()))?,
        }
    };
    let window = match &o.window {
        Some(w) => {
            let v: Vec<f64> = parse_list("--window", w, ',')?;
            if v.len() != 4 {
                return usage("--window expects x_min,x_max,y_min,y_max");
            }
            Some((v[0], v[1], v[2], v[3]))
        }
        None => None,
    };
    Ok(LoadOptions { columns, time, window })
}

fn spectral(o: &Opts) -> Result<SpectralSettings, UsageError> {
    let mut s = SpectralSettings::default();
    if let Some(p) = o.p_max {
        s.p_max = p;
    }
    if let Some(q) = o.q_min {
        s.q_min = q;
    }
    if let Some(q) = o.q_max {
        s.q_max = q;
    }
    s.u_range = match (o.u_min, o.u_max) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return usage("--u-min and --u-max must be given together"),
    };
    s.include_dc = o.include_dc.unwrap_or(false);
    if let Some(h) = &o.half_widths {
        let v: Vec<u32> = parse_list("--half-widths", h, ',')?;
        if v.len() != 3 {
            return usage("--half-widths expects hp,hq,hu");
        }
        s.half_widths = Some((v[0], v[1], v[2]));
    }
    s.marked = o.marked.unwrap_or(false);
    s.normalisation = match o.normalisation.unwrap_or(NormArg::SqrtCounts) {
        NormArg::SqrtCounts => Normalisation::SqrtCounts,
        NormArg::Unit => Normalisation::Unit,
    };
    s.method = match o.dft.unwrap_or(DftArg::Separable) {
        DftArg::Direct => DftMethod::Direct,
        DftArg::Separable => DftMethod::Separable,
    };
    Ok(s)
}

fn classical(o: &Opts) -> Result<ClassicalConfig, UsageError> {
    let grid = |what: &str, s: &Option<String>| s.as_deref().map(|g| parse_list::<f64>(what, g, ',')).transpose();
    Ok(ClassicalConfig {
        curve: match o.curve.unwrap_or(CurveArg::K) {
            CurveArg::G => "g",
            CurveArg::K => "k",
            CurveArg::MarkK => "mark_k",
        },
        types_c: o.types_c.as_deref().map(|s| parse_types("--types-c", s)).transpose()?,
        types_d: o.types_d.as_deref().map(|s| parse_types("--types-d", s)).transpose()?,
        r_grid: grid("--r-grid", &o.r_grid)?,
        t_grid: grid("--t-grid", &o.t_grid)?,
        eps: o.eps,
        delta: o.delta,
        homogeneous: o.homogeneous.unwrap_or(true),
        intensity_cells: o.intensity_cells.unwrap_or(64),
    })
}

pub fn resolve(cli: &Cli) -> Result<Resolved, UsageError> {
    let o = &cli.opts;
    let seed = o.seed.unwrap_or(0);
    let wants_sim = o.sim_kind.is_some() || o.components.is_some() || o.rates.is_some() || o.link.is_some();
    let source = match (&o.input, wants_sim || cli.command == Command::Simulate) {
        (Some(_), true) => return usage("give either --input or simulation options, not both"),
        (Some(path), false) => Source::Input {
            path: path.clone(),
            sha256: String::new(),
            options: load_options(o)?,
        },
        (None, true) => Source::Simulation {
            spec: simulation(o, seed)?,
        },
        (None, false) => return usage("no data: give --input FILE or a simulation (--sim-kind)"),
    };
    if let Some(xi) = &o.xi {
        XiSpec::parse(xi)?;
    } else if matches!(cli.command, Command::Graph | Command::Pipeline) {
        return usage("--xi is required: a threshold value or null:qNN");
    }
    if o.threads == Some(0) {
        return usage("--threads must be at least 1");
    }
    let null_replicates = o.null_replicates.unwrap_or(DEFAULT_NULL_REPLICATES);
    if null_replicates == 0 {
        return usage("--null-replicates must be at least 1");
    }
    let config = RunConfig {
        tool: format!("stdgm {}", env!("CARGO_PKG_VERSION")),
        source,
        spectral: spectral(o)?,
        xi: o.xi.clone(),
        null_replicates,
        per_slice: o.per_slice.unwrap_or(false),
        format: match o.format.unwrap_or(FormatArg::Dot) {
            FormatArg::Dot => "dot",
            FormatArg::Json => "json",
        },
        classical: classical(o)?,
        seed,
        rng: RNG_ALGORITHM.to_string(),
    };
    Ok(Resolved {
        command: cli.command,
        config,
        out: o.out.clone().unwrap_or_else(|| Path::new(".").to_path_buf()),
        threads: o.threads,
    })
}
