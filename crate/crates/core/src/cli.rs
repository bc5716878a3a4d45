//! The `gauss-ramsey` command-line harness.
//!
//! Parameters come from `--key value` flags and an optional flat
//! `key=value` file given with `--config`; flags override the file and the
//! last occurrence of a repeated flag wins. Every command prints one record
//! per result (JSON lines by default, CSV with `--format csv`) that echoes
//! the resolved configuration and the library version.
//!
//! Exit status: 0 when every requested check passed, 1 when a check failed
//! (validation, verification, or a search that found nothing), 2 for usage
//! errors, 3 for invalid parameters or I/O failures, 4 when the exact clique
//! engine's capacity is exceeded.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::analytic::{
    clique_log_bound, solve_c_p, solve_p_c, std_normal_pdf, union_bound_report, AnalyticBounds, RamseyParams,
};
use crate::estimators::{
    clique_counts, clique_estimate, conditional_edge_check, correction_scaling, estimate_edge_density,
    log_binomial_reference, CliqueQuery, EstimateResult, Status,
};
use crate::gaussian_core::{
    sample_truncated, truncated_mean, validate_lemma, LemmaCheck, RngStream, Side, TailSide, TruncatedSpec,
};
use crate::geom_graph::{fmt_f64, sample_geometric_graph, PerfectSpec, Sampler};
use crate::parallel::map_chunks;
use crate::ramsey_search::{search_witness, WitnessCertificate, WitnessSampler};
use crate::stats::Moments;
use crate::{Color, Error};

/// Environment variable naming the default directory for output files.
pub const OUT_DIR_ENV: &str = "GAUSS_RAMSEY_OUT_DIR";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const USAGE: &str = "\
usage: gauss-ramsey <command> [--key value]... [--config FILE]

commands:
  solve     p_C, c_p, a and the density-shift terms          (C; D)
  bounds    union-bound bases and main-term log bounds      (C, ell, D; epsilon)
  sample    sample one G(n,d,p) coloring to a graph file     (n, d, p; sampler, stream, graph)
  estimate  Monte-Carlo clique or edge-density estimate      (r or target=density; d, p, color,
                                                              sampler, restrict_perfect, C, ell, alpha)
  validate  empirical check of a Gaussian inequality          (lemma and its keys)
  scaling   log-ratio of clique probabilities vs d^-1/2       (r, p, dims; sampler, plot)
  search    witness coloring without red K_ell, blue K_k      (n, ell, k, sampler, p or C; d, cert)
  verify    re-check a certificate file                       (in)

common keys: trials, seed, threads, format (json|csv), out, config
lemmas: norm_concentration (d, delta), chi_square_tail (freedom, t, side),
        projection_tail (d, ell, s, p, C), exp_square_moment (sigma2, lambda; truncation),
        quadratic_moment (d, lambda, cutoffs), conditional_edge (p, d, inner, diag),
        truncated_mean (b, side, d)
truncations are written b:side (side lower|upper); cutoffs is a comma list of
truncations or none. Output files default to $GAUSS_RAMSEY_OUT_DIR.
";

const KEYS: &[&str] = &[
    "C",
    "D",
    "alpha",
    "b",
    "cert",
    "color",
    "config",
    "cutoffs",
    "d",
    "delta",
    "diag",
    "dims",
    "ell",
    "epsilon",
    "format",
    "freedom",
    "graph",
    "in",
    "inner",
    "k",
    "lambda",
    "lemma",
    "max_attempts",
    "n",
    "out",
    "p",
    "plot",
    "r",
    "restrict_perfect",
    "s",
    "sampler",
    "seed",
    "side",
    "sigma2",
    "stream",
    "t",
    "target",
    "threads",
    "trials",
    "truncation",
];

const BOOL_KEYS: &[&str] = &["restrict_perfect"];

/// Keys that select where output goes or how fast it is computed; they are
/// not echoed so that records compare byte-for-byte across such choices.
const UNECHOED: &[&str] = &["config", "out", "threads", "format"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Bounds,
    Sample,
    Estimate,
    Validate,
    Scaling,
    Search,
    Verify,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Bounds => "bounds",
            Command::Sample => "sample",
            Command::Estimate => "estimate",
            Command::Validate => "validate",
            Command::Scaling => "scaling",
            Command::Search => "search",
            Command::Verify => "verify",
        }
    }

    fn parse(s: &str) -> Option<Command> {
        Some(match s {
            "solve" => Command::Solve,
            "bounds" => Command::Bounds,
            "sample" => Command::Sample,
            "estimate" => Command::Estimate,
            "validate" => Command::Validate,
            "scaling" => Command::Scaling,
            "search" => Command::Search,
            "verify" => Command::Verify,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub values: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn check_key(key: &str, origin: &str) -> Result<(), CliError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(usage(format!("unknown key {key:?} ({origin})")))
    }
}

fn parse_config_file(path: &str) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config file {path}: {e}")))?;
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{path}:{}: expected key=value", i + 1)))?;
        let key = key.trim();
        check_key(key, &format!("{path}:{}", i + 1))?;
        if key == "config" {
            return Err(usage(format!(
                "{path}:{}: config files cannot include other files",
                i + 1
            )));
        }
        values.insert(key.to_string(), value.trim().to_string());
    }
    Ok(values)
}

/// Parse `argv` (without the program name).
pub fn parse_config(argv: &[String]) -> Result<ExperimentConfig, CliError> {
    let first = argv.first().ok_or_else(|| usage("no command given"))?;
    let command = Command::parse(first).ok_or_else(|| usage(format!("unknown command {first:?}")))?;
    let mut flags: BTreeMap<String, String> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut i = 1;
    while i < argv.len() {
        let arg = &argv[i];
        let body = arg
            .strip_prefix("--")
            .ok_or_else(|| usage(format!("expected --key, got {arg:?}")))?;
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let next = argv.get(i + 1).filter(|v| !v.starts_with("--"));
                match next {
                    Some(v) => {
                        i += 1;
                        (body.to_string(), v.clone())
                    }
                    None if BOOL_KEYS.contains(&body) => (body.to_string(), "true".to_string()),
                    None => return Err(usage(format!("missing value for --{body}"))),
                }
            }
        };
        check_key(&key, "command line")?;
        if let Some(old) = flags.insert(key.clone(), value.clone()) {
            warnings.push(format!(
                "--{key} given more than once ({old} then {value}); using the last value"
            ));
        }
        i += 1;
    }
    let mut values = match flags.get("config") {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    values.extend(flags);
    Ok(ExperimentConfig {
        command,
        values,
        warnings,
    })
}

/// A field value in an output record.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    Uint(u64),
    Float(f64),
    Bool(bool),
    Null,
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}
impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}
impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}
impl From<u64> for Value {
    fn from(x: u64) -> Self {
        Value::Uint(x)
    }
}
impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Uint(x as u64)
    }
}
impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}
impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Null, Into::into)
    }
}

impl Value {
    fn json(&self) -> String {
        match self {
            Value::Str(s) => serde_json::to_string(s).expect("strings serialize"),
            Value::Int(x) => x.to_string(),
            Value::Uint(x) => x.to_string(),
            Value::Float(x) if x.is_finite() => fmt_f64(*x),
            Value::Float(_) | Value::Null => "null".to_string(),
            Value::Bool(b) => b.to_string(),
        }
    }

    fn csv(&self) -> String {
        match self {
            Value::Str(s) => csv_escape(s),
            Value::Float(x) => fmt_f64(*x),
            Value::Null => String::new(),
            other => other.json(),
        }
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One output record: ordered fields plus the configuration echo.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub fields: Vec<(String, Value)>,
    pub config: Vec<(String, String)>,
}

impl Record {
    fn new(command: Command, config: &[(String, String)]) -> Self {
        Record {
            fields: vec![
                ("command".to_string(), command.as_str().into()),
                ("version".to_string(), VERSION.into()),
            ],
            config: config.to_vec(),
        }
    }

    fn put(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.fields.push((key.to_string(), v.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn to_json(&self) -> String {
        let mut out = String::from("{");
        for (k, v) in &self.fields {
            let _ = write!(out, "{}:{},", Value::from(k.as_str()).json(), v.json());
        }
        out.push_str("\"config\":{");
        let cfg: Vec<String> = self
            .config
            .iter()
            .map(|(k, v)| format!("{}:{}", Value::from(k.as_str()).json(), Value::from(v.as_str()).json()))
            .collect();
        out.push_str(&cfg.join(","));
        out.push_str("}}");
        out
    }

    fn csv_header(&self) -> String {
        let mut cols: Vec<String> = self.fields.iter().map(|(k, _)| csv_escape(k)).collect();
        cols.extend(self.config.iter().map(|(k, _)| csv_escape(&format!("config.{k}"))));
        cols.join(",")
    }

    fn csv_row(&self) -> String {
        let mut cols: Vec<String> = self.fields.iter().map(|(_, v)| v.csv()).collect();
        cols.extend(self.config.iter().map(|(_, v)| csv_escape(v)));
        cols.join(",")
    }
}

/// Render records; CSV repeats the header whenever the column set changes.
pub fn render(records: &[Record], csv: bool) -> String {
    let mut out = String::new();
    let mut last_header: Option<String> = None;
    for r in records {
        if csv {
            let h = r.csv_header();
            if last_header.as_deref() != Some(h.as_str()) {
                out.push_str(&h);
                out.push('\n');
                last_header = Some(h);
            }
            out.push_str(&r.csv_row());
        } else {
            out.push_str(&r.to_json());
        }
        out.push('\n');
    }
    out
}

/// Result of one command: records, files to write, and whether every
/// requested check passed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub records: Vec<Record>,
    pub files: Vec<(PathBuf, String)>,
    pub passed: bool,
    pub notes: Vec<String>,
}

/// Typed access to configuration values; records every resolved value
/// (given or defaulted) for the echo.
struct Params<'a> {
    values: &'a BTreeMap<String, String>,
    echo: BTreeMap<String, String>,
    notes: Vec<String>,
}

impl<'a> Params<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        let echo = cfg
            .values
            .iter()
            .filter(|(k, _)| !UNECHOED.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Params {
            values: &cfg.values,
            echo,
            notes: Vec::new(),
        }
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.values.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr + ToString>(&mut self, key: &str, default: Option<T>) -> Result<T, CliError> {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|_| usage(format!("invalid value {v:?} for key {key}"))),
            None => {
                let d = default.ok_or_else(|| usage(format!("missing required key {key}")))?;
                self.echo.insert(key.to_string(), d.to_string());
                Ok(d)
            }
        }
    }

    fn req<T: std::str::FromStr + ToString>(&mut self, key: &str) -> Result<T, CliError> {
        self.parse(key, None)
    }

    fn or<T: std::str::FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        self.parse(key, Some(default))
    }

    fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| usage(format!("invalid value {v:?} for key {key}")))
            })
            .transpose()
    }

    fn seed(&mut self) -> Result<u64, CliError> {
        match self.raw("seed") {
            Some(_) => self.req("seed"),
            None => {
                let seed: u64 = rand::rng().random();
                self.notes.push(format!("no --seed given; using random seed {seed}"));
                self.echo.insert("seed".to_string(), seed.to_string());
                Ok(seed)
            }
        }
    }

    fn echo(&self) -> Vec<(String, String)> {
        self.echo.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

/// Resolve an output file: relative paths live in the output directory.
fn artifact_path(given: Option<&str>, default_name: &str) -> PathBuf {
    match given {
        Some(p) if Path::new(p).is_absolute() => PathBuf::from(p),
        Some(p) => out_dir().join(p),
        None => out_dir().join(default_name),
    }
}

fn parse_truncation(s: &str, key: &str) -> Result<Option<(f64, Side)>, CliError> {
    if s == "none" {
        return Ok(None);
    }
    let bad = || {
        usage(format!(
            "invalid truncation {s:?} for key {key}; expected b:lower or b:upper"
        ))
    };
    let (b, side) = s.split_once(':').ok_or_else(bad)?;
    let b: f64 = b.parse().map_err(|_| bad())?;
    let side: Side = side.parse().map_err(|_| bad())?;
    Ok(Some((b, side)))
}

fn run_solve(p: &mut Params) -> Result<Outcome, CliError> {
    let c: f64 = p.req("C")?;
    let d_mult: f64 = p.or("D", 100.0)?;
    let b = AnalyticBounds::compute(c, d_mult)?;
    let mut r = Record::new(Command::Solve, &p.echo());
    r.put("terms", "main-term")
        .put("C", c)
        .put("D", d_mult)
        .put("p_C", b.p_c)
        .put("c_p", b.c_p)
        .put("a", b.a)
        .put("gain_red", b.gain_red)
        .put("loss_blue", b.loss_blue)
        .put("gain_exceeds_loss", b.gain_red > b.loss_blue)
        .put("p_shifted", b.p_shifted)
        .put("epsilon_margin", b.epsilon_margin)
        .put("erdos_base", b.erdos_base);
    Ok(Outcome {
        records: vec![r],
        passed: true,
        ..Outcome::default()
    })
}

fn run_bounds(p: &mut Params) -> Result<Outcome, CliError> {
    let c: f64 = p.req("C")?;
    let ell: usize = p.req("ell")?;
    let d_mult: f64 = p.req("D")?;
    let eps: Option<f64> = p.opt("epsilon")?;
    let params = RamseyParams::new(c, ell, d_mult)?;
    let rep = union_bound_report(params, eps)?;
    let mut r = Record::new(Command::Bounds, &p.echo());
    r.put("terms", "main-term")
        .put("C", c)
        .put("ell", ell)
        .put("k", params.k)
        .put("D", d_mult)
        .put("d", params.d)
        .put("p_C", rep.bounds.p_c)
        .put("c_p", rep.bounds.c_p)
        .put("a", rep.bounds.a)
        .put("epsilon", rep.epsilon)
        .put("epsilon1", rep.epsilon1)
        .put("red_base", rep.red_base)
        .put("blue_base", rep.blue_base)
        .put("bases_below_one", rep.bases_below_one)
        .put("improved_base", rep.improved_base)
        .put("erdos_base", rep.bounds.erdos_base)
        .put("remainder_red", rep.remainder_red)
        .put("remainder_blue", rep.remainder_blue)
        .put("margin_established", rep.margin_established)
        .put("log_n", rep.log_n)
        .put("log_red_union", rep.log_red_union)
        .put("log_blue_union", rep.log_blue_union)
        .put(
            "log_red_clique_bound",
            clique_log_bound(ell, params.d, rep.bounds.p_c, Color::Red)?,
        )
        .put(
            "log_blue_clique_bound",
            clique_log_bound(params.k, params.d, rep.bounds.p_c, Color::Blue)?,
        );
    Ok(Outcome {
        records: vec![r],
        passed: true,
        ..Outcome::default()
    })
}

fn sampler_key(p: &mut Params, default: &str) -> Result<Sampler, CliError> {
    let s: String = p.or("sampler", default.to_string())?;
    s.parse()
        .map_err(|_| usage(format!("invalid value {s:?} for key sampler; expected direct|bartlett")))
}

fn run_sample(p: &mut Params) -> Result<Outcome, CliError> {
    let n: usize = p.req("n")?;
    let d: usize = p.req("d")?;
    let prob: f64 = p.req("p")?;
    let sampler = sampler_key(p, "direct")?;
    let stream: u64 = p.or("stream", 0)?;
    let seed = p.seed()?;
    let path = artifact_path(
        p.raw("graph"),
        &format!("graph_n{n}_d{d}_seed{seed}_stream{stream}.txt"),
    );
    let g = sample_geometric_graph(n, d, prob, sampler, seed, stream)?;
    let pairs = (n * n.saturating_sub(1) / 2) as u64;
    let blue = g.blue_edge_count() as u64;
    let mut r = Record::new(Command::Sample, &p.echo());
    r.put("n", n)
        .put("d", d)
        .put("p", prob)
        .put("c_p", g.provenance.c_p)
        .put("sampler", sampler.as_str())
        .put("seed", seed)
        .put("stream", stream)
        .put("blue_edges", blue)
        .put("red_edges", pairs - blue)
        .put(
            "blue_density",
            if pairs > 0 {
                Some(blue as f64 / pairs as f64)
            } else {
                None
            },
        )
        .put("graph", path.display().to_string());
    Ok(Outcome {
        records: vec![r],
        files: vec![(path, g.to_text())],
        passed: true,
        notes: Vec::new(),
    })
}

fn put_estimate(r: &mut Record, e: &EstimateResult) {
    r.put("point", e.point)
        .put("log_point", e.log_point)
        .put("trials", e.trials)
        .put("successes", e.successes)
        .put("ci_low", e.ci_low)
        .put("ci_high", e.ci_high)
        .put("seed", e.seed)
        .put("status", e.status.as_str());
}

fn run_estimate(p: &mut Params) -> Result<Outcome, CliError> {
    let target: String = p.or("target", "clique".to_string())?;
    let mut notes = Vec::new();
    let record = match target.as_str() {
        "density" => {
            let n: usize = p.or("n", 64)?;
            let d: usize = p.or("d", 100)?;
            let prob: f64 = p.or("p", 0.4)?;
            let clouds: usize = p.or("trials", 1000)?;
            let seed = p.seed()?;
            let e = estimate_edge_density(n, d, prob, clouds, seed)?;
            let mut r = Record::new(Command::Estimate, &p.echo());
            r.put("target", "density")
                .put("n", n)
                .put("d", d)
                .put("p", prob)
                .put("c_p", solve_c_p(prob)?)
                .put("clouds", clouds)
                .put("reference", 1.0 - prob);
            put_estimate(&mut r, &e);
            r
        }
        "clique" => {
            let size: usize = p.req("r")?;
            let d: usize = p.or("d", 100)?;
            let prob: f64 = p.or("p", 0.4)?;
            let color: Color = p.or("color", Color::Red)?;
            let sampler = sampler_key(p, "direct")?;
            let restricted: bool = p.or("restrict_perfect", false)?;
            let trials: usize = p.or("trials", 10_000)?;
            let perfect = if restricted {
                let c: f64 = p.or("C", prob.ln() / (1.0 - prob).ln())?;
                let ell: usize = p.or("ell", size)?;
                Some(match p.opt::<f64>("alpha")? {
                    Some(alpha) => PerfectSpec::with_alpha(c, prob, ell, d, alpha)?,
                    None => PerfectSpec::new(c, ell, d, prob)?,
                })
            } else {
                None
            };
            let seed = p.seed()?;
            let q = CliqueQuery {
                r: size,
                d,
                p: prob,
                sampler,
                perfect,
            };
            let counts = clique_counts(&q, trials, seed)?;
            let e = clique_estimate(&q, &counts, color, restricted, seed);
            if e.status == Status::Underpowered {
                notes.push(format!(
                    "estimate is underpowered: binomial reference predicts fewer than 100 successes in {trials} trials"
                ));
            }
            let mut r = Record::new(Command::Estimate, &p.echo());
            r.put("target", "clique")
                .put("r", size)
                .put("d", d)
                .put("p", prob)
                .put("c_p", solve_c_p(prob)?)
                .put("a", std_normal_pdf(solve_c_p(prob)?))
                .put("color", color.as_str())
                .put("sampler", sampler.as_str())
                .put("restrict_perfect", restricted)
                .put("log_reference", log_binomial_reference(size, prob, color));
            if let Some(spec) = perfect {
                r.put("alpha_proj", spec.alpha_proj)
                    .put("delta", spec.delta)
                    .put("degenerate_spec", spec.is_degenerate())
                    .put("perfect_trials", counts.perfect);
            }
            put_estimate(&mut r, &e);
            r
        }
        other => {
            return Err(usage(format!(
                "invalid value {other:?} for key target; expected clique|density"
            )))
        }
    };
    Ok(Outcome {
        records: vec![record],
        passed: true,
        files: Vec::new(),
        notes,
    })
}

fn run_validate(p: &mut Params) -> Result<Outcome, CliError> {
    let lemma: String = p.req("lemma")?;
    let trials: usize = p.or("trials", 100_000)?;
    let mut r;
    let passed;
    match lemma.as_str() {
        "conditional_edge" => {
            let prob: f64 = p.req("p")?;
            let d: usize = p.req("d")?;
            let inner: f64 = p.req("inner")?;
            let diag: f64 = p.or("diag", 1.0)?;
            let seed = p.seed()?;
            let c = conditional_edge_check(prob, d, inner, diag, trials, seed)?;
            r = Record::new(Command::Validate, &p.echo());
            r.put("lemma", "conditional_edge")
                .put("cutoff", c.cutoff)
                .put("exact", c.exact)
                .put("bound", c.bound)
                .put("empirical", c.empirical)
                .put("std_error", c.std_error)
                .put("trials", c.trials)
                .put("seed", seed)
                .put("pass", c.pass);
            passed = c.pass;
        }
        "truncated_mean" => {
            let b: f64 = p.req("b")?;
            let side_s: String = p.req("side")?;
            let side: Side = side_s
                .parse()
                .map_err(|_| usage(format!("invalid value {side_s:?} for key side")))?;
            let d: usize = p.req("d")?;
            let seed = p.seed()?;
            let spec = TruncatedSpec::new(b, side, d)?;
            let m = map_chunks(trials, |range| {
                let mut m = Moments::default();
                for t in range {
                    m.push(sample_truncated(&spec, &mut RngStream::new(seed, t as u64)));
                }
                m
            })
            .into_iter()
            .fold(Moments::default(), Moments::merge);
            let exact = truncated_mean(&spec);
            let z = (m.mean() - exact) / m.std_error();
            passed = z.abs() <= 4.0;
            r = Record::new(Command::Validate, &p.echo());
            r.put("lemma", "truncated_mean")
                .put("exact", exact)
                .put("empirical", m.mean())
                .put("std_error", m.std_error())
                .put("z", z)
                .put("trials", trials)
                .put("seed", seed)
                .put("pass", passed);
        }
        name => {
            let check = match name {
                "norm_concentration" => LemmaCheck::NormConcentration {
                    d: p.req("d")?,
                    delta: p.req("delta")?,
                },
                "chi_square_tail" => {
                    let side: String = p.or("side", "upper".to_string())?;
                    let side = match side.as_str() {
                        "upper" => TailSide::Upper,
                        "lower" => TailSide::Lower,
                        _ => {
                            return Err(usage(format!(
                                "invalid value {side:?} for key side; expected upper|lower"
                            )))
                        }
                    };
                    LemmaCheck::ChiSquareTail {
                        freedom: p.req("freedom")?,
                        t: p.req("t")?,
                        side,
                    }
                }
                "projection_tail" => LemmaCheck::ProjectionTail {
                    d: p.req("d")?,
                    ell: p.req("ell")?,
                    s: p.req("s")?,
                    p: p.req("p")?,
                    c: p.req("C")?,
                },
                "exp_square_moment" => {
                    let truncation = match p.raw("truncation") {
                        Some(t) => parse_truncation(t, "truncation")?,
                        None => None,
                    };
                    LemmaCheck::ExpSquareMoment {
                        sigma2: p.req("sigma2")?,
                        lambda: p.req("lambda")?,
                        truncation,
                    }
                }
                "quadratic_moment" => {
                    let d: usize = p.req("d")?;
                    let lambda: f64 = p.req("lambda")?;
                    let list: String = p.req("cutoffs")?;
                    let cutoffs = list
                        .split(',')
                        .map(|s| parse_truncation(s.trim(), "cutoffs"))
                        .collect::<Result<Vec<_>, _>>()?;
                    LemmaCheck::QuadraticMoment { d, lambda, cutoffs }
                }
                other => return Err(usage(format!("invalid value {other:?} for key lemma"))),
            };
            let seed = p.seed()?;
            let v = validate_lemma(&check, trials, seed)?;
            r = Record::new(Command::Validate, &p.echo());
            r.put("lemma", v.lemma)
                .put("empirical", v.empirical)
                .put("bound", v.bound)
                .put("log_bound", v.log_bound)
                .put("std_error", v.std_error)
                .put("trials", v.trials)
                .put("seed", seed)
                .put("pass", v.pass)
                .put("vacuous", v.vacuous);
            passed = v.pass;
        }
    }
    Ok(Outcome {
        records: vec![r],
        passed,
        ..Outcome::default()
    })
}

fn run_scaling(p: &mut Params) -> Result<Outcome, CliError> {
    let size: usize = p.or("r", 3)?;
    let prob: f64 = p.or("p", 0.4)?;
    let dims_s: String = p.or("dims", "64,256,1024".to_string())?;
    let dims = dims_s
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| usage(format!("invalid value {dims_s:?} for key dims")))?;
    let trials: usize = p.or("trials", 100_000)?;
    let sampler = sampler_key(p, "bartlett")?;
    let seed = p.seed()?;
    let plot = artifact_path(p.raw("plot"), &format!("scaling_r{size}_seed{seed}.dat"));
    let rep = correction_scaling(size, prob, &dims, trials, sampler, seed)?;
    let echo = p.echo();
    let mut records = Vec::new();
    for row in &rep.rows {
        let mut r = Record::new(Command::Scaling, &echo);
        r.put("kind", "dimension")
            .put("d", row.d)
            .put("x", row.x)
            .put("red_point", row.red.point)
            .put("red_successes", row.red.successes)
            .put("red_log_ratio", row.red_log_ratio)
            .put("red_log_se", row.red.log_std_error())
            .put("red_status", row.red.status.as_str())
            .put("blue_point", row.blue.point)
            .put("blue_successes", row.blue.successes)
            .put("blue_log_ratio", row.blue_log_ratio)
            .put("blue_log_se", row.blue.log_std_error())
            .put("blue_status", row.blue.status.as_str())
            .put("trials", trials)
            .put("seed", seed);
        records.push(r);
    }
    let mut s = Record::new(Command::Scaling, &echo);
    let flagged: Vec<String> = rep.flagged_dims.iter().map(usize::to_string).collect();
    s.put("kind", "fit")
        .put("r", size)
        .put("p", prob)
        .put("red_slope", rep.red_slope)
        .put("red_predicted", rep.red_predicted)
        .put("red_slope_free", rep.red_slope_free)
        .put("blue_slope", rep.blue_slope)
        .put("blue_predicted", rep.blue_predicted)
        .put("blue_slope_free", rep.blue_slope_free)
        .put("flagged_dims", flagged.join(","))
        .put("plot", plot.display().to_string());
    records.push(s);

    let mut data = String::from("# x = d^-1/2, y = ln(P_red / p^C(r,2))\n");
    for row in &rep.rows {
        if let Some(y) = row.red_log_ratio {
            let _ = writeln!(data, "{} {}", fmt_f64(row.x), fmt_f64(y));
        }
    }
    data.push_str("\n\n# x = d^-1/2, y = ln(P_blue / (1-p)^C(r,2))\n");
    for row in &rep.rows {
        if let Some(y) = row.blue_log_ratio {
            let _ = writeln!(data, "{} {}", fmt_f64(row.x), fmt_f64(y));
        }
    }
    let notes = if flagged.is_empty() {
        Vec::new()
    } else {
        vec![format!("underpowered dimensions: {}", flagged.join(","))]
    };
    Ok(Outcome {
        records,
        files: vec![(plot, data)],
        passed: true,
        notes,
    })
}

fn run_search(p: &mut Params) -> Result<Outcome, CliError> {
    let n: usize = p.req("n")?;
    let ell: usize = p.req("ell")?;
    let k: usize = p.req("k")?;
    let sampler_s: String = p.or("sampler", "binomial".to_string())?;
    let prob: f64 = match p.opt::<f64>("p")? {
        Some(_) => p.req("p")?,
        None => {
            let c: f64 = p
                .req("C")
                .map_err(|_| usage("missing required key p (or C to use p = p_C)"))?;
            let pc = solve_p_c(c)?;
            p.echo.insert("p".to_string(), fmt_f64(pc));
            pc
        }
    };
    let sampler = match sampler_s.as_str() {
        "binomial" => WitnessSampler::Binomial { p: prob },
        "direct" | "bartlett" => WitnessSampler::Geometric {
            d: p.req("d")?,
            p: prob,
            sampler: sampler_s.parse()?,
        },
        other => {
            return Err(usage(format!(
                "invalid value {other:?} for key sampler; expected direct|bartlett|binomial"
            )))
        }
    };
    let max_attempts: u64 = p.or("max_attempts", 100_000)?;
    let seed = p.seed()?;
    let path = artifact_path(p.raw("cert"), &format!("certificate_n{n}_l{ell}_k{k}_seed{seed}.txt"));
    let out = search_witness(n, ell, k, sampler, max_attempts, seed)?;
    let mut r = Record::new(Command::Search, &p.echo());
    r.put("n", n)
        .put("ell", ell)
        .put("k", k)
        .put("p", prob)
        .put("sampler", sampler_s.as_str())
        .put("found", out.certificate.is_some())
        .put("attempts", out.attempts)
        .put("max_attempts", max_attempts)
        .put("seed", seed);
    let mut files = Vec::new();
    match &out.certificate {
        Some(cert) => {
            r.put("attempt", cert.attempt)
                .put("blue_edges", cert.graph.blue_edge_count())
                .put("certificate", path.display().to_string());
            files.push((path, cert.to_text()));
        }
        None => {
            r.put("attempt", Value::Null)
                .put("blue_edges", Value::Null)
                .put("certificate", Value::Null);
        }
    }
    Ok(Outcome {
        records: vec![r],
        files,
        passed: out.certificate.is_some(),
        notes: Vec::new(),
    })
}

fn clique_str(c: &Option<Vec<usize>>) -> Value {
    c.as_ref().map_or(Value::Null, |v| {
        Value::Str(v.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
    })
}

fn run_verify(p: &mut Params) -> Result<Outcome, CliError> {
    let input: String = p.req("in")?;
    let text = std::fs::read_to_string(&input).map_err(|e| CliError::Io(format!("cannot read {input}: {e}")))?;
    let cert = WitnessCertificate::from_text(&text)?;
    let mut r = Record::new(Command::Verify, &p.echo());
    r.put("n", cert.n)
        .put("ell", cert.ell)
        .put("k", cert.k)
        .put("checked", cert.checked)
        .put("red_clique", clique_str(&cert.red_clique))
        .put("blue_clique", clique_str(&cert.blue_clique))
        .put("attempt", cert.attempt)
        .put("seed", cert.seed);
    Ok(Outcome {
        records: vec![r],
        passed: cert.checked,
        ..Outcome::default()
    })
}

/// Dispatch a parsed configuration.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut p = Params::new(cfg);
    let mut outcome = match cfg.command {
        Command::Solve => run_solve(&mut p),
        Command::Bounds => run_bounds(&mut p),
        Command::Sample => run_sample(&mut p),
        Command::Estimate => run_estimate(&mut p),
        Command::Validate => run_validate(&mut p),
        Command::Scaling => run_scaling(&mut p),
        Command::Search => run_search(&mut p),
        Command::Verify => run_verify(&mut p),
    }?;
    let mut notes = p.notes;
    notes.append(&mut outcome.notes);
    outcome.notes = notes;
    Ok(outcome)
}

fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Usage(_) => 2,
        CliError::Lib(Error::Capability { .. }) => 4,
        CliError::Lib(_) | CliError::Io(_) => 3,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn run_inner(argv: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<bool, CliError> {
    let cfg = parse_config(argv)?;
    for w in &cfg.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let format = cfg.values.get("format").map_or("json", String::as_str);
    let csv = match format {
        "json" => false,
        "csv" => true,
        other => {
            return Err(usage(format!(
                "invalid value {other:?} for key format; expected json|csv"
            )))
        }
    };
    let threads: Option<usize> = cfg
        .values
        .get("threads")
        .map(|t| {
            t.parse()
                .ok()
                .filter(|&n: &usize| n >= 1)
                .ok_or_else(|| usage(format!("invalid value {t:?} for key threads")))
        })
        .transpose()?;
    let outcome = match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Io(format!("cannot start thread pool: {e}")))?;
            pool.install(|| execute(&cfg))?
        }
        None => execute(&cfg)?,
    };
    for note in &outcome.notes {
        let _ = writeln!(stderr, "note: {note}");
    }
    for (path, contents) in &outcome.files {
        write_file(path, contents)?;
    }
    let text = render(&outcome.records, csv);
    match cfg.values.get("out") {
        Some(path) => write_file(&artifact_path(Some(path), ""), &text)?,
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write output: {e}")))?,
    }
    Ok(outcome.passed)
}

/// Run the harness on `argv` (without the program name) and return the
/// process exit status.
pub fn run(argv: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    if argv.is_empty() {
        let _ = stderr.write_all(USAGE.as_bytes());
        return 2;
    }
    if matches!(argv[0].as_str(), "-h" | "--help" | "help") {
        let _ = stdout.write_all(USAGE.as_bytes());
        return 0;
    }
    match run_inner(argv, stdout, stderr) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let code = exit_code(&e);
            match &e {
                CliError::Usage(m) => {
                    let _ = writeln!(stderr, "error: {m}\n");
                    let _ = stderr.write_all(USAGE.as_bytes());
                }
                CliError::Lib(err) => {
                    let _ = writeln!(stderr, "error: {err}");
                }
                CliError::Io(m) => {
                    let _ = writeln!(stderr, "error: {m}");
                }
            }
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn run_capture(s: &str) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(&args(s), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn empty_argv_is_usage_error() {
        let (code, out, err) = run_capture("");
        assert_eq!(code, 2);
        assert!(out.is_empty());
        assert!(err.starts_with("usage:"));
    }

    #[test]
    fn repeated_flag_last_wins_with_warning() {
        let cfg = parse_config(&args("solve --C 2 --seed 1 --seed 42")).unwrap();
        assert_eq!(cfg.values["seed"], "42");
        assert_eq!(cfg.warnings.len(), 1);
        assert!(cfg.warnings[0].contains("seed"));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.cfg");
        std::fs::write(&path, "# experiment\ntrials=1000000\nr = 3\n").unwrap();
        let cfg = parse_config(&args(&format!("estimate --config {} --trials 1000", path.display()))).unwrap();
        assert_eq!(cfg.values["trials"], "1000");
        assert_eq!(cfg.values["r"], "3");
        std::fs::write(&path, "bogus=1\n").unwrap();
        match parse_config(&args(&format!("estimate --config {}", path.display()))) {
            Err(CliError::Usage(m)) => assert!(m.contains("bogus")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_flag_names_the_key() {
        let (code, _, err) = run_capture("solve --C 2 --frobnicate 3");
        assert_eq!(code, 2);
        assert!(err.contains("frobnicate"));
        let (code, _, err) = run_capture("solve --C two");
        assert_eq!(code, 2);
        assert!(err.contains("key C"));
    }

    #[test]
    fn solve_record() {
        let (code, out, _) = run_capture("solve --C 2");
        assert_eq!(code, 0);
        assert!(out.contains("\"p_C\":3.8196601125010515e-1"), "{out}");
        assert!(out.contains("\"version\":\"0.1.0\""));
        assert!(out.contains("\"config\":{\"C\":\"2\",\"D\":\"100\"}"));
    }

    #[test]
    fn single_vertex_estimate() {
        let (code, out, _) = run_capture("estimate --r 1 --trials 10 --seed 3");
        assert_eq!(code, 0);
        assert!(out.contains("\"point\":1.0000000000000000e0"), "{out}");
    }

    #[test]
    fn csv_output_has_header() {
        let (code, out, _) = run_capture("solve --C 3 --format csv");
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("command,version,terms,C,D,p_C"));
        assert!(lines[0].ends_with("config.C,config.D"));
    }

    #[test]
    fn json_escapes_strings() {
        let mut r = Record::new(Command::Verify, &[("in".into(), "a\"b".into())]);
        r.put("x", f64::NAN).put("y", Value::Null);
        assert_eq!(
            r.to_json(),
            "{\"command\":\"verify\",\"version\":\"0.1.0\",\"x\":null,\"y\":null,\"config\":{\"in\":\"a\\\"b\"}}"
        );
    }
}
