//! Command-line front end: `trace`, `scan`, `find-eps0`, `verify`,
//! `limiting`, `map42` and `cubic`.
//!
//! Settings come from flags, then an optional `--config` file of `key=value`
//! lines (`#` starts a comment), then built-in defaults. Exit codes: 0 on
//! success, 1 for usage or configuration errors, 2 for mathematical failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::curve::{self, BifurcationCurve, Shape, TraceOptions, TurnKind, TurningPoint};
use crate::error::{Error, Result};
use crate::ivp::IntegratorSettings;
use crate::linearized::{self, CertificateReport};
use crate::model::NonlinearityModel;
use crate::shoot;
use crate::transform::{self, LimitingMapper};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

/// Largest relative disagreement accepted between mapped and shot `mu`.
pub const MAP42_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "shootscale", version, about = "Bifurcation curves of radial Dirichlet problems by shoot-and-scale")]
struct Cli {
    /// Run-config file of key=value lines; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Suppress the human-readable summary.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the command's CSV or JSON document here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long)]
    family: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct TraceArgs {
    #[arg(long)]
    n: Option<u32>,
    /// `lo:hi`
    #[arg(long)]
    alpha_range: Option<String>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trace lambda(alpha) and report its shape and turning points.
    Trace {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        trace: TraceArgs,
        /// Also write the Dirichlet profile at `--at-alpha` to this path.
        #[arg(long)]
        dump_profile: Option<PathBuf>,
        #[arg(long)]
        at_alpha: Option<f64>,
    },
    /// Classify the curve over a list of epsilon values.
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        trace: TraceArgs,
        /// `lo:hi:step` or a comma-separated list.
        #[arg(long)]
        epsilons: Option<String>,
    },
    /// Bisect epsilon for the end of the S-shaped regime.
    #[command(name = "find-eps0")]
    FindEps0 {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        trace: TraceArgs,
        /// `lo:hi`
        #[arg(long)]
        bracket: Option<String>,
    },
    /// Certify every turning point of a traced curve.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        trace: TraceArgs,
        /// Certify the solution at this height instead of the traced folds.
        #[arg(long)]
        at_alpha: Option<f64>,
    },
    /// Trace the limiting problem and report its fold.
    Limiting {
        #[command(flatten)]
        trace: TraceArgs,
    },
    /// Map limiting solutions onto the mu-form and cross-check them.
    Map42 {
        #[arg(long, allow_hyphen_values = true)]
        epsilon: Option<f64>,
        /// Heights of the limiting solutions, `lo:hi`.
        #[arg(long)]
        alpha_range: Option<String>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        abs_tol: Option<f64>,
        #[arg(long)]
        rel_tol: Option<f64>,
    },
    /// Trace the cubic family and report its segments.
    Cubic {
        #[arg(long, allow_hyphen_values = true)]
        epsilon: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[command(flatten)]
        trace: TraceArgs,
    },
}

const MODEL_KEYS: &[&str] = &["family", "epsilon", "b", "c", "p", "q", "a", "c0"];
const OTHER_KEYS: &[&str] = &[
    "n",
    "alpha_range",
    "grid_points",
    "abs_tol",
    "rel_tol",
    "r_max",
    "epsilons",
    "bracket",
    "at_alpha",
    "dump_profile",
    "points",
    "format",
    "quiet",
    "jobs",
    "out",
];

/// Merged settings: flags over config file.
#[derive(Debug, Default, Clone)]
struct Params {
    map: BTreeMap<String, String>,
}

impl Params {
    fn parse_config(text: &str) -> Result<Params> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            // several pairs may share a line: `family=cubic epsilon=0.05`
            for tok in line.split_whitespace() {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{tok}`", i + 1)))?;
                let k = k.trim().replace('-', "_");
                if !MODEL_KEYS.contains(&k.as_str()) && !OTHER_KEYS.contains(&k.as_str()) {
                    return Err(Error::Config(format!("line {}: unknown key `{k}`", i + 1)));
                }
                map.insert(k, v.trim().to_string());
            }
        }
        Ok(Params { map })
    }

    fn set<T: ToString>(&mut self, key: &str, v: Option<T>) {
        if let Some(v) = v {
            self.map.insert(key.to_string(), v.to_string());
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`"))))
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn add_model(&mut self, m: &ModelArgs) {
        self.set("family", m.family.as_ref());
        self.set("epsilon", m.epsilon);
        self.set("b", m.b);
        self.set("c", m.c);
        self.set("p", m.p);
        self.set("q", m.q);
        self.set("a", m.a);
        self.set("c0", m.c0);
    }

    fn add_trace(&mut self, t: &TraceArgs) {
        self.set("n", t.n);
        self.set("alpha_range", t.alpha_range.as_ref());
        self.set("grid_points", t.grid_points);
        self.set("abs_tol", t.abs_tol);
        self.set("rel_tol", t.rel_tol);
        self.set("r_max", t.r_max);
    }

    /// Model from the merged keys; `defaults` fill in absent ones.
    fn model(&self, defaults: &[(&str, &str)]) -> Result<NonlinearityModel> {
        let mut pairs: Vec<(&str, &str)> = Vec::new();
        for k in MODEL_KEYS {
            if let Some(v) = self.raw(k) {
                pairs.push((k, v));
            }
        }
        let explicit_family = self.raw("family");
        for (k, v) in defaults {
            // parameter defaults only apply to the default family
            let applies = *k == "family" || explicit_family.is_none() || explicit_family == defaults.iter().find(|d| d.0 == "family").map(|d| d.1);
            if applies && !pairs.iter().any(|(pk, _)| pk == k) {
                pairs.push((k, v));
            }
        }
        NonlinearityModel::from_pairs(pairs)
    }

    fn settings(&self) -> Result<IntegratorSettings> {
        let d = IntegratorSettings::default();
        let s = IntegratorSettings {
            abs_tol: self.get_or("abs_tol", d.abs_tol)?,
            rel_tol: self.get_or("rel_tol", d.rel_tol)?,
            r_max: self.get_or("r_max", d.r_max)?,
            ..d
        };
        s.validate()?;
        Ok(s)
    }

    fn trace_options(&self, model: &NonlinearityModel) -> Result<TraceOptions> {
        let d = TraceOptions::for_model(model);
        let o = TraceOptions { grid_points: self.get_or("grid_points", d.grid_points)?, settings: self.settings()?, ..d };
        o.validate()?;
        Ok(o)
    }

    fn n(&self) -> Result<u32> {
        self.get_or("n", 2)
    }

    fn pair(&self, key: &str) -> Result<Option<(f64, f64)>> {
        self.raw(key).map(|v| parse_pair(key, v)).transpose()
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Config(format!("bad number `{s}` in `{key}`")))
}

fn parse_pair(key: &str, v: &str) -> Result<(f64, f64)> {
    let (a, b) = v.split_once(':').ok_or_else(|| Error::Config(format!("`{key}` expects lo:hi, got `{v}`")))?;
    Ok((parse_f64(key, a)?, parse_f64(key, b)?))
}

/// `lo:hi:step` (inclusive, rounded to 12 digits) or `x,y,z`.
fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = v.split(':').collect();
    match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step) = (parse_f64(key, lo)?, parse_f64(key, hi)?, parse_f64(key, step)?);
            if !(step > 0.0 && hi >= lo) {
                return Err(Error::InvalidParameter(format!("`{key}` needs lo <= hi and step > 0")));
            }
            let k = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=k).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect())
        }
        [one] => one.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_f64(key, s)).collect(),
        _ => Err(Error::Config(format!("`{key}` expects lo:hi:step or a comma list, got `{v}`"))),
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

/// Output sink for one invocation.
struct Io<'a> {
    out: &'a mut (dyn Write + Send),
    err: &'a mut (dyn Write + Send),
    format: Format,
    quiet: bool,
    path: Option<PathBuf>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

impl Io<'_> {
    /// With `--format json` the JSON document goes to `--out` or stdout;
    /// otherwise the CSV document (or the summary, for commands without
    /// one) goes to `--out`. The summary is printed unless `--quiet`.
    fn emit(&mut self, csv: Option<String>, mut doc: Value, command: &str, summary: &str) -> Result<()> {
        doc["schema_version"] = json!("1");
        doc["command"] = json!(command);
        match (self.format, &self.path) {
            (Format::Json, None) => {
                let text = serde_json::to_string_pretty(&doc).expect("json serialises");
                let _ = writeln!(self.out, "{text}");
                return Ok(());
            }
            (Format::Json, Some(p)) => write_file(p, &(serde_json::to_string_pretty(&doc).expect("json serialises") + "\n"))?,
            (Format::Csv, Some(p)) => write_file(p, csv.as_deref().unwrap_or(summary))?,
            (Format::Csv, None) => {}
        }
        if !self.quiet {
            let _ = write!(self.out, "{summary}");
        }
        Ok(())
    }

    fn warn(&mut self, msg: &str) {
        let _ = writeln!(self.err, "warning: {msg}");
    }
}

fn tp_lines(s: &mut String, tps: &[TurningPoint]) {
    for t in tps {
        let kind = match t.kind {
            TurnKind::Max => "max",
            TurnKind::Min => "min",
        };
        let _ = writeln!(s, "turning_point kind={kind} alpha={:.9} lambda={:.9}", t.alpha_star, t.lambda_star);
    }
}

fn curve_summary(c: &BifurcationCurve) -> String {
    let mut s = format!("shape={} turning_points={}\n", c.shape, c.turning_points.len());
    tp_lines(&mut s, &c.turning_points);
    if let Shape::Disconnected(segs) = &c.shape {
        for seg in segs {
            let _ = writeln!(
                s,
                "segment alpha=[{:.9}, {:.9}] shape={} turning_points={}",
                seg.alpha_lo,
                seg.alpha_hi,
                seg.shape,
                seg.turning_points.len()
            );
        }
    }
    for g in &c.gaps {
        let _ = writeln!(s, "gap alpha=({:.9}, {:.9}) reason={}", g.lo, g.hi, g.reason.as_str());
    }
    s
}

fn trace_with(p: &Params, model: &NonlinearityModel, n: u32) -> Result<BifurcationCurve> {
    let (lo, hi) = p.pair("alpha_range")?.unwrap_or_else(|| curve::default_alpha_range(model));
    curve::trace(model, n, lo, hi, &p.trace_options(model)?)
}

const PG_DEFAULT: &[(&str, &str)] = &[("family", "perturbed_gelfand"), ("epsilon", "0.22")];

fn cmd_trace(p: &Params, io: &mut Io) -> Result<()> {
    let model = p.model(PG_DEFAULT)?;
    let n = p.n()?;
    let dump: Option<PathBuf> = p.get("dump_profile")?;
    let at: Option<f64> = p.get("at_alpha")?;
    if dump.is_some() && at.is_none() {
        return Err(Error::Config("--dump-profile needs --at-alpha".into()));
    }
    let c = trace_with(p, &model, n)?;
    if let (Some(path), Some(alpha)) = (dump, at) {
        let sol = shoot::bvp_profile(&model, alpha, n, &p.settings()?)?
            .ok_or_else(|| Error::NotApplicable(format!("no solution at alpha = {alpha}")))?;
        let text = match io.format {
            Format::Csv => sol.profile.to_csv(),
            Format::Json => serde_json::to_string_pretty(&sol.profile.to_json()).expect("json serialises") + "\n",
        };
        write_file(&path, &text)?;
    }
    io.emit(Some(c.to_csv()), c.to_json(), "trace", &curve_summary(&c))
}

fn cmd_scan(p: &Params, io: &mut Io) -> Result<()> {
    let eps = parse_list("epsilons", p.raw("epsilons").unwrap_or("0.05:0.30:0.01"))?;
    let first = *eps.first().ok_or_else(|| Error::InvalidParameter("empty epsilon list".into()))?;
    let mut q = p.clone();
    q.map.entry("epsilon".into()).or_insert_with(|| first.to_string());
    let template = q.model(PG_DEFAULT)?;
    let range = p.pair("alpha_range")?;
    let table = curve::scan_epsilon(&template, &eps, p.n()?, range, &p.trace_options(&template)?)?;
    let mut s = String::new();
    for r in &table.rows {
        let _ = writeln!(s, "epsilon={} shape={} turning_points={}", r.epsilon, r.shape, r.turning_points.len());
    }
    for w in &table.warnings {
        io.warn(w);
    }
    io.emit(Some(table.to_csv()), table.to_json(), "scan", &s)
}

fn cmd_find_eps0(p: &Params, io: &mut Io) -> Result<()> {
    let template = p.model(PG_DEFAULT)?;
    let bracket = p.pair("bracket")?.unwrap_or((0.22, 0.25));
    let e = curve::find_epsilon0(&template, bracket, p.n()?, &p.trace_options(&template)?)?;
    let s = format!("epsilon0={:.6} bracket=[{:.6}, {:.6}] width={:.3e}\n", e.epsilon0, e.lo, e.hi, e.width());
    let doc = json!({ "epsilon0": e.epsilon0, "lo": e.lo, "hi": e.hi, "width": e.width() });
    io.emit(None, doc, "find_eps0", &s)
}

fn cert_lines(s: &mut String, alpha: f64, lambda: f64, certs: &[CertificateReport]) {
    for c in certs {
        let margins: Vec<String> = c.margins.iter().map(|m| format!("{}={:.6e}", m.name, m.value)).collect();
        let kind = serde_json::to_value(c.kind).expect("enum serialises");
        let _ = writeln!(
            s,
            "{alpha:<14.9} {lambda:<14.9} {:<22} {:<4} {}",
            kind.as_str().unwrap_or("?"),
            if c.pass { "pass" } else { "FAIL" },
            margins.join(" ")
        );
    }
}

fn cmd_verify(p: &Params, io: &mut Io) -> Result<()> {
    let model = p.model(PG_DEFAULT)?;
    let n = p.n()?;
    let settings = p.settings()?;
    let tps: Vec<TurningPoint> = match p.get::<f64>("at_alpha")? {
        Some(alpha) => {
            let sol = shoot::bvp_profile(&model, alpha, n, &settings)?
                .ok_or_else(|| Error::NotApplicable(format!("no solution at alpha = {alpha}")))?;
            // kind is a placeholder; the certificates do not use it
            vec![TurningPoint { alpha_star: alpha, lambda_star: sol.lambda, kind: TurnKind::Max, certificates: Vec::new() }]
        }
        None => trace_with(p, &model, n)?.turning_points,
    };
    let certified: Vec<TurningPoint> = tps
        .par_iter()
        .map(|t| -> Result<TurningPoint> {
            let certificates = linearized::certify_turning_point(&model, n, t, &settings)?;
            Ok(TurningPoint { certificates, ..t.clone() })
        })
        .collect::<Result<_>>()?;
    let all_pass = certified.iter().all(|t| t.certificates.iter().all(|c| c.pass));
    let mut s = String::new();
    if certified.is_empty() {
        s.push_str("no folds\n");
    } else {
        let _ = writeln!(s, "{:<14} {:<14} {:<22} {:<4} margins", "alpha", "lambda", "certificate", "");
        for t in &certified {
            cert_lines(&mut s, t.alpha_star, t.lambda_star, &t.certificates);
        }
        let _ = writeln!(s, "all_pass={all_pass}");
    }
    let doc = json!({ "model": model, "n": n, "turning_points": certified, "all_pass": all_pass });
    io.emit(None, doc, "verify", &s)?;
    if all_pass {
        Ok(())
    } else {
        Err(Error::PreconditionFails("a certificate failed".into()))
    }
}

fn cmd_limiting(p: &Params, io: &mut Io) -> Result<()> {
    let n = p.n()?;
    if n != 2 {
        return Err(Error::Config(format!("the limiting problem is two-dimensional; got n = {n}")));
    }
    let model = NonlinearityModel::limiting();
    let c = trace_with(p, &model, n)?;
    let tp = c
        .turning_points
        .iter()
        .find(|t| t.kind == TurnKind::Min)
        .ok_or_else(|| Error::PreconditionFails("limiting curve has no fold in the traced window".into()))?;
    let s = format!("eta0={:.6} v0={:.6}\n", tp.lambda_star, tp.alpha_star);
    let doc = json!({ "eta0": tp.lambda_star, "v0": tp.alpha_star, "curve": c.to_json() });
    io.emit(Some(c.to_csv()), doc, "limiting", &s)
}

fn cmd_map42(p: &Params, io: &mut Io) -> Result<()> {
    let eps: f64 = p.get_or("epsilon", 0.22)?;
    // the lambda equivalents below need e^(1/eps)
    transform::lambda_to_mu(eps, 1.0)?;
    let settings = p.settings()?;
    let mapper = LimitingMapper::new(settings);
    let v0 = mapper.fold_height()?;
    if eps >= v0 {
        return Err(Error::PreconditionFails(format!("eps = {eps} is not below the fold height v0(0) = {v0:.6}")));
    }
    let (lo, hi) = p.pair("alpha_range")?.unwrap_or((v0 + 0.05, 10.0));
    let k: usize = p.get_or("points", 25)?;
    if !(lo > 0.0 && hi > lo && k >= 2) {
        return Err(Error::InvalidParameter("map42 needs 0 < lo < hi and at least two points".into()));
    }
    let alphas = linspace(lo, hi, k);
    let pts = mapper.map_all(&alphas, eps)?;
    let checks: Vec<(f64, f64, f64)> = pts
        .par_iter()
        .map(|pt| -> Result<(f64, f64, f64)> {
            Ok((
                transform::cross_validate(pt, eps, &settings)?,
                transform::reintegration_residual(pt, eps, &settings)?,
                transform::mu_to_lambda(eps, pt.mu)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mono = transform::mu_monotonicity_check(&mapper, eps, &alphas)?;
    let max_disc = checks.iter().map(|c| c.0).fold(0.0, f64::max);
    let pass = mono.pass && max_disc < MAP42_TOLERANCE;
    let s = format!(
        "v0={v0:.6} points={} max_relative_discrepancy={max_disc:.3e} mu_monotone={} pass={pass}\n",
        pts.len(),
        if mono.pass { "pass" } else { "fail" }
    );
    let rows: Vec<Value> = pts
        .iter()
        .zip(&checks)
        .map(|(pt, c)| json!({ "w0": pt.w0, "mu": pt.mu, "source": pt.source, "relative_discrepancy": c.0, "residual": c.1, "lambda": c.2 }))
        .collect();
    let doc = json!({ "epsilon": eps, "v0": v0, "points": rows, "monotonicity": mono, "max_relative_discrepancy": max_disc, "pass": pass });
    io.emit(Some(transform::mu_points_to_csv(&pts)), doc, "map42", &s)?;
    if pass {
        Ok(())
    } else {
        Err(Error::PreconditionFails("map42 checks failed".into()))
    }
}

fn cmd_cubic(p: &Params, io: &mut Io) -> Result<()> {
    let mut q = p.clone();
    q.map.insert("family".into(), "cubic".into());
    let model = q.model(&[("family", "cubic"), ("epsilon", "0.05"), ("b", "1"), ("c", "2.5")])?;
    let hypothesis = model.cubic_hypothesis_holds().unwrap_or(false);
    if !hypothesis {
        io.warn("c <= 2b: the three-solution hypothesis does not hold; tracing anyway");
    }
    let c = trace_with(p, &model, p.n()?)?;
    let mut doc = c.to_json();
    doc["hypothesis_holds"] = json!(hypothesis);
    io.emit(Some(c.to_csv()), doc, "cubic", &curve_summary(&c))
}

fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}

fn dispatch(cli: Cli, io_out: &mut (dyn Write + Send), io_err: &mut (dyn Write + Send)) -> Result<()> {
    let mut p = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            Params::parse_config(&text)?
        }
        None => Params::default(),
    };
    p.set("format", cli.format.map(|f| if f == Format::Json { "json" } else { "csv" }));
    p.set("jobs", cli.jobs);
    p.set("out", cli.out.as_ref().map(|o| o.display().to_string()));
    if cli.quiet {
        p.set("quiet", Some("true"));
    }
    match &cli.command {
        Command::Trace { model, trace, dump_profile, at_alpha } => {
            p.add_model(model);
            p.add_trace(trace);
            p.set("dump_profile", dump_profile.as_ref().map(|d| d.display().to_string()));
            p.set("at_alpha", *at_alpha);
        }
        Command::Scan { model, trace, epsilons } => {
            p.add_model(model);
            p.add_trace(trace);
            p.set("epsilons", epsilons.as_ref());
        }
        Command::FindEps0 { model, trace, bracket } => {
            p.add_model(model);
            p.add_trace(trace);
            p.set("bracket", bracket.as_ref());
        }
        Command::Verify { model, trace, at_alpha } => {
            p.add_model(model);
            p.add_trace(trace);
            p.set("at_alpha", *at_alpha);
        }
        Command::Limiting { trace } => p.add_trace(trace),
        Command::Map42 { epsilon, alpha_range, points, abs_tol, rel_tol } => {
            p.set("epsilon", *epsilon);
            p.set("alpha_range", alpha_range.as_ref());
            p.set("points", *points);
            p.set("abs_tol", *abs_tol);
            p.set("rel_tol", *rel_tol);
        }
        Command::Cubic { epsilon, b, c, trace } => {
            p.set("epsilon", *epsilon);
            p.set("b", *b);
            p.set("c", *c);
            p.add_trace(trace);
        }
    }
    let format = match p.raw("format") {
        None | Some("csv") => Format::Csv,
        Some("json") => Format::Json,
        Some(other) => return Err(Error::Config(format!("unknown format `{other}`"))),
    };
    let mut io = Io { out: io_out, err: io_err, format, quiet: p.get_or("quiet", false)?, path: p.get("out")? };
    let run = |io: &mut Io| match &cli.command {
        Command::Trace { .. } => cmd_trace(&p, io),
        Command::Scan { .. } => cmd_scan(&p, io),
        Command::FindEps0 { .. } => cmd_find_eps0(&p, io),
        Command::Verify { .. } => cmd_verify(&p, io),
        Command::Limiting { .. } => cmd_limiting(&p, io),
        Command::Map42 { .. } => cmd_map42(&p, io),
        Command::Cubic { .. } => cmd_cubic(&p, io),
    };
    match p.get::<usize>("jobs")? {
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {j} workers: {e}")))?;
            pool.install(|| run(&mut io))
        }
        None => run(&mut io),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("shootscale").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn config_lines_and_comments() {
        let p = Params::parse_config("# run\nfamily=cubic epsilon=0.05  # inline\n\nb=1\nc=2.5\n").unwrap();
        assert_eq!(p.raw("family"), Some("cubic"));
        assert_eq!(p.get::<f64>("b").unwrap(), Some(1.0));
        assert!(matches!(Params::parse_config("bogus=1"), Err(Error::Config(_))));
        assert!(matches!(Params::parse_config("epsilon"), Err(Error::Config(_))));
    }

    #[test]
    fn lists_and_pairs() {
        let v = parse_list("e", "0.05:0.30:0.01").unwrap();
        assert_eq!(v.len(), 26);
        assert_eq!(v[1], 0.06);
        assert_eq!(*v.last().unwrap(), 0.3);
        assert_eq!(parse_list("e", "0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_list("e", "").unwrap().is_empty());
        assert_eq!(parse_pair("r", "1e-3:200").unwrap(), (1e-3, 200.0));
        assert!(parse_pair("r", "1e-3").is_err());
    }

    #[test]
    fn model_defaults_only_fill_their_family() {
        let mut p = Params::default();
        p.set("family", Some("gelfand"));
        assert_eq!(p.model(PG_DEFAULT).unwrap(), NonlinearityModel::gelfand());
        let p = Params::default();
        assert_eq!(p.model(PG_DEFAULT).unwrap(), NonlinearityModel::perturbed_gelfand(0.22).unwrap());
    }

    #[test]
    fn bad_flag_is_usage_error() {
        let (code, _, err) = run_str(&["trace", "--no-such-flag"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("Usage"));
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_str(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("trace"));
    }

    #[test]
    fn limiting_rejects_n3() {
        let (code, _, err) = run_str(&["limiting", "--n", "3"]);
        assert_eq!(code, EXIT_USAGE, "{err}");
    }
}
