//! The `smm` command line: argument parsing, run configs and file outputs.
//!
//! Every run is described by a [`RunConfig`]. Outputs are named
//! `<command>-<hash>.<ext>`, where the hash covers the command parameters and
//! output format, and a `<command>-<hash>.manifest.json` echoes the config.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diophantine::{
    best_approx_check, beta_estimate, cf_expand_partial, tm_sequence, AlphaDescriptor, Rotation, DEFAULT_BUDGET_BITS,
    DEFAULT_CF_DEPTH,
};
use crate::ergodic::{strip_grid, verify_lemma_le, verify_lemma_le1, AnalyticObservable};
use crate::error::SmmError;
use crate::green::{default_grid, Energy, FreeFibers};
use crate::io::{config_hash, fmt_float};
use crate::model::{cube, Geometry, ModelParams};
use crate::reduction::{cayley_check, transfer_phi_to_psi, transfer_psi_to_phi, zeta0_curve};
use crate::spectrum::{
    build_finite, cover_sum, eig_window, match_spectra, predict_eigenvalues, reduced_equation_solve, resolvent_check,
    resolvent_check_free, MatchRules, Predictor, ReducedConfig,
};

/// Exit code for malformed flags or configs.
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] SmmError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(e) => e.exit_code(),
        }
    }

    fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Sequence {
    /// continued-fraction denominators q₁, q₂, …
    Qn,
    /// 1, 2, 3, … (negative control)
    Naive,
    /// multiples of the selected Liouville denominators
    Tm,
}

fn parse_geometry(s: &str) -> Result<Geometry, String> {
    match s {
        "full" => Ok(Geometry::FullSpace),
        "half" => Ok(Geometry::HalfSpace),
        _ => Err(format!("geometry must be `full` or `half`, got {s:?}")),
    }
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(T, T), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected `a:b`, got {s:?}"))?;
    let a = a.trim().parse().map_err(|_| format!("bad bound {a:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad bound {b:?}"))?;
    Ok((a, b))
}

fn parse_f64_pair(s: &str) -> Result<(f64, f64), String> {
    parse_pair(s)
}

fn parse_i64_pair(s: &str) -> Result<(i64, i64), String> {
    parse_pair(s)
}

fn parse_usize_pair(s: &str) -> Result<(usize, usize), String> {
    parse_pair(s)
}

fn parse_alpha(s: &str) -> Result<String, String> {
    s.parse::<AlphaDescriptor>().map_err(|e| e.to_string())?;
    Ok(s.trim().to_string())
}

fn parse_observable(s: &str) -> Result<String, String> {
    s.parse::<AnalyticObservable>().map_err(|e| e.to_string())?;
    Ok(s.to_string())
}

fn golden() -> String {
    "golden".into()
}

fn default_alphas() -> Vec<String> {
    vec![golden()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct GreenArgs {
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub z_re: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub z_im: f64,
    /// grid points per axis (default depends on d)
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, value_parser = parse_geometry, default_value = "full")]
    pub geometry: Geometry,
    /// kernel radius in n and depth in x
    #[arg(long, default_value_t = 8)]
    pub radius: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct Zeta0Args {
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub e_min: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub e_max: f64,
    #[arg(long, default_value_t = 101)]
    pub steps: usize,
    #[arg(long, value_parser = parse_geometry, default_value = "full")]
    pub geometry: Geometry,
    #[arg(long, default_value_t = 2048)]
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct PredictArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, value_parser = parse_alpha, default_value = "golden")]
    pub alpha: String,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub theta: f64,
    /// label range `kmin:kmax`
    #[arg(long, value_parser = parse_i64_pair, allow_hyphen_values = true, default_value = "-20:20")]
    pub k: (i64, i64),
    #[arg(long, value_parser = parse_f64_pair, allow_hyphen_values = true)]
    pub e_window: (f64, f64),
    #[arg(long, value_parser = parse_geometry, default_value = "full")]
    pub geometry: Geometry,
    /// also diagonalize the box of this radius and match
    #[arg(long = "validate-L")]
    pub validate_l: Option<i64>,
    #[arg(long, default_value_t = 1e-2)]
    pub match_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct FvArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    pub lambda: f64,
    /// one frequency per surface direction
    #[arg(long, value_parser = parse_alpha, default_values_t = default_alphas())]
    pub alpha: Vec<String>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long = "L")]
    pub l: i64,
    #[arg(long, value_parser = parse_f64_pair, allow_hyphen_values = true)]
    pub e_window: (f64, f64),
    #[arg(long, value_parser = parse_geometry, default_value = "full")]
    pub geometry: Geometry,
    /// also write the matrix as `i j value` triplets
    #[arg(long)]
    #[serde(default)]
    pub matrix: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct ResolventArgs {
    /// `0` compares against the free kernel alone
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, value_parser = parse_alpha, default_values_t = default_alphas())]
    pub alpha: Vec<String>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long = "L")]
    pub l: i64,
    #[arg(long = "W")]
    pub w: i64,
    #[arg(long, allow_hyphen_values = true)]
    pub z_re: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub z_im: f64,
    #[arg(long, value_parser = parse_geometry, default_value = "full")]
    pub geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct CfArgs {
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: String,
    #[arg(long, default_value_t = DEFAULT_CF_DEPTH)]
    pub depth: usize,
    #[arg(long, default_value_t = DEFAULT_BUDGET_BITS)]
    pub budget_bits: u64,
    /// exhaustive best-approximation check up to this K
    #[arg(long)]
    pub best_approx_k: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct ErgodicArgs {
    #[arg(long, value_parser = parse_alpha, default_value = "golden")]
    pub alpha: String,
    #[arg(long, value_parser = parse_observable, default_value = "exp:40")]
    pub modes: String,
    #[arg(long, value_enum, default_value_t = Sequence::Qn)]
    pub sequence: Sequence,
    #[arg(long, default_value_t = 15)]
    pub max_n: usize,
    /// real grid points; the same points are repeated at Im x = ±ρ/2
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub epsilon: f64,
    /// multiples materialized in total for `--sequence tm`
    #[arg(long, default_value_t = 64)]
    pub tm_budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct CoverArgs {
    #[arg(long, value_parser = parse_alpha, default_value = "beta:1.0")]
    pub alpha: String,
    #[arg(long, default_value_t = 1.0 / 30.0)]
    pub rho_bar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// levels `k_first:k_last`
    #[arg(long, value_parser = parse_usize_pair, default_value = "1:8")]
    pub k: (usize, usize),
    #[arg(long, default_value_t = DEFAULT_BUDGET_BITS)]
    pub budget_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct ReduceArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, value_parser = parse_alpha, default_values_t = default_alphas())]
    pub alpha: Vec<String>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long = "W")]
    pub w: i64,
    #[arg(long, value_parser = parse_f64_pair, allow_hyphen_values = true)]
    pub e_window: (f64, f64),
    #[arg(long, value_parser = parse_geometry, default_value = "full")]
    pub geometry: Geometry,
    #[arg(long, default_value_t = 0.01)]
    pub scan_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub reduce: ReduceArgs,
    /// depth of ψ in x
    #[arg(long, default_value_t = 6)]
    pub x_extent: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Subcommand)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Free surface symbols and position kernels
    Green(GreenArgs),
    /// Rotation number ζ₀ along an energy interval
    Zeta0(Zeta0Args),
    /// Eigenvalues from the quantization condition
    Predict(PredictArgs),
    /// Finite-volume eigenpairs in an energy window
    Fv(FvArgs),
    /// Box resolvent against the surface-reduction formula
    Resolvent(ResolventArgs),
    /// Continued-fraction expansion and growth index
    Cf(CfArgs),
    /// Birkhoff-sum deviations along a sequence of lengths
    Ergodic(ErgodicArgs),
    /// Cover sums for the Liouville limsup set
    Cover(CoverArgs),
    /// Solutions of the reduced surface equation
    Reduce(ReduceArgs),
    /// Surface-to-bulk transfer round trip for reduced solutions
    Transfer(TransferArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Green(_) => "green",
            Command::Zeta0(_) => "zeta0",
            Command::Predict(_) => "predict",
            Command::Fv(_) => "fv",
            Command::Resolvent(_) => "resolvent",
            Command::Cf(_) => "cf",
            Command::Ergodic(_) => "ergodic",
            Command::Cover(_) => "cover",
            Command::Reduce(_) => "reduce",
            Command::Transfer(_) => "transfer",
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub command: Command,
    pub format: Format,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Hash of the parameters and format; the output directory is left out.
    pub fn hash(&self) -> String {
        let v = json!({ "params": self.command, "format": self.format });
        config_hash(&v.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "smm", version, about = "Surface Maryland model numerical laboratory")]
pub struct Cli {
    /// output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// run from a saved config instead of a subcommand
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// print the run config as JSON and exit
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

impl Cli {
    pub fn into_config(self) -> CliResult<RunConfig> {
        let mut cfg = match (self.config, self.command) {
            (Some(path), None) => load_config(&path)?,
            (None, Some(command)) => RunConfig {
                command,
                format: Format::Csv,
                output_dir: PathBuf::from("."),
            },
            (Some(_), Some(_)) => return Err(CliError::usage("give either --config or a subcommand, not both")),
            (None, None) => return Err(CliError::usage("no subcommand given (see --help)")),
        };
        if let Some(out) = self.out {
            cfg.output_dir = out;
        }
        if let Some(format) = self.format {
            cfg.format = format;
        }
        Ok(cfg)
    }
}

/// Files and notes produced by one run.
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub warnings: Vec<String>,
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    stem: String,
    files: Vec<PathBuf>,
    warnings: Vec<String>,
    summary: Value,
}

impl<'a> Writer<'a> {
    fn new(cfg: &'a RunConfig) -> CliResult<Self> {
        fs::create_dir_all(&cfg.output_dir).map_err(SmmError::from)?;
        Ok(Writer {
            cfg,
            stem: format!("{}-{}", cfg.command.name(), cfg.hash()),
            files: Vec::new(),
            warnings: Vec::new(),
            summary: Value::Null,
        })
    }

    fn path(&self, part: Option<&str>, ext: &str) -> PathBuf {
        let name = match part {
            Some(p) => format!("{}-{p}.{ext}", self.stem),
            None => format!("{}.{ext}", self.stem),
        };
        self.cfg.output_dir.join(name)
    }

    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> CliResult<()> {
        fs::write(&path, bytes).map_err(SmmError::from)?;
        self.files.push(path);
        Ok(())
    }

    /// A table given as CSV text, written as CSV or as a JSON array of rows.
    fn table(&mut self, part: Option<&str>, csv: &str) -> CliResult<()> {
        match self.cfg.format {
            Format::Csv => self.write(self.path(part, "csv"), csv.as_bytes()),
            Format::Json => {
                let text = serde_json::to_string_pretty(&csv_to_json(csv)).map_err(SmmError::from)? + "\n";
                self.write(self.path(part, "json"), text.as_bytes())
            }
        }
    }

    fn json(&mut self, part: Option<&str>, v: &Value) -> CliResult<()> {
        let text = serde_json::to_string_pretty(v).map_err(SmmError::from)? + "\n";
        self.write(self.path(part, "json"), text.as_bytes())
    }

    fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    fn finish(self) -> CliResult<RunOutput> {
        let manifest = self.cfg.output_dir.join(format!("{}.manifest.json", self.stem));
        let files: Vec<String> = self
            .files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        let v = json!({
            "config": self.cfg,
            "hash": self.cfg.hash(),
            "version": env!("CARGO_PKG_VERSION"),
            "files": files,
            "warnings": self.warnings,
            "summary": self.summary,
        });
        let text = serde_json::to_string_pretty(&v).map_err(SmmError::from)? + "\n";
        fs::write(&manifest, text).map_err(SmmError::from)?;
        Ok(RunOutput {
            files: self.files,
            manifest,
            warnings: self.warnings,
        })
    }
}

fn csv_to_json(csv: &str) -> Value {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let rows: Vec<Value> = lines
        .map(|line| {
            let obj: serde_json::Map<String, Value> = header
                .iter()
                .zip(line.split(','))
                .map(|(h, v)| {
                    let val = v
                        .parse::<i64>()
                        .map(Value::from)
                        .or_else(|_| v.parse::<f64>().map(Value::from))
                        .unwrap_or_else(|_| Value::from(v));
                    (h.to_string(), val)
                })
                .collect();
            Value::Object(obj)
        })
        .collect();
    Value::Array(rows)
}

fn descriptor(text: &str) -> CliResult<AlphaDescriptor> {
    text.parse().map_err(CliError::usage)
}

fn frequencies(w: &mut Writer, texts: &[String]) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for t in texts {
        let d = descriptor(t)?;
        if matches!(d, AlphaDescriptor::Decimal { .. }) {
            w.warn(format!(
                "decimal frequency {t} is exact only to its last digit; deep expansions stop early"
            ));
        }
        out.push(d.value());
    }
    Ok(out)
}

fn model(w: &mut Writer, lambda: f64, alphas: &[String], theta: f64, geometry: Geometry) -> CliResult<ModelParams> {
    let a = frequencies(w, alphas)?;
    Ok(ModelParams::new(lambda, a, theta, geometry)?)
}

fn site_columns(d: usize, prefix: &str) -> String {
    (1..=d).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",")
}

fn join_site(n: &[i64]) -> String {
    n.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn cmd_green(a: &GreenArgs, w: &mut Writer) -> CliResult<()> {
    if a.d == 0 || a.radius < 0 {
        return Err(CliError::usage("need d ≥ 1 and radius ≥ 0"));
    }
    let grid = a.grid.unwrap_or_else(|| default_grid(a.d));
    let fibers = FreeFibers::new(a.d, Energy::new(a.z_re, a.z_im), grid)?;
    let symbol = fibers.surface_symbol(a.geometry);
    let mut buf = Vec::new();
    symbol.write_csv(&mut buf)?;
    w.table(Some("symbol"), &String::from_utf8(buf).expect("utf8"))?;
    let mut csv = format!("{},x,re,im\n", site_columns(a.d, "n"));
    for x in 0..=a.radius {
        let layer = match a.geometry {
            Geometry::FullSpace => fibers.layer_symbol(x),
            Geometry::HalfSpace => fibers.half_layer_symbol(x, 0),
        };
        let kernel = layer.to_kernel();
        for n in cube(a.d, a.radius) {
            let g = kernel.get(&n);
            csv.push_str(&format!(
                "{},{x},{},{}\n",
                join_site(&n),
                fmt_float(g.re),
                fmt_float(g.im)
            ));
        }
    }
    w.table(Some("kernel"), &csv)?;
    w.summary = json!({ "grid": grid, "sup_symbol": symbol.sup_norm() });
    Ok(())
}

fn cmd_zeta0(a: &Zeta0Args, w: &mut Writer) -> CliResult<()> {
    let curve = zeta0_curve(a.e_min, a.e_max, a.steps, a.lambda, a.geometry, a.grid)?;
    if !curve.strictly_monotone {
        w.warn("zeta0 is not strictly monotone on this interval");
    }
    w.table(None, &curve.to_csv())?;
    w.summary = json!({ "strictly_monotone": curve.strictly_monotone });
    Ok(())
}

fn cmd_predict(a: &PredictArgs, w: &mut Writer) -> CliResult<()> {
    let alpha = frequencies(w, std::slice::from_ref(&a.alpha))?[0];
    let p = Predictor::new(a.lambda, alpha, a.theta)?.with_geometry(a.geometry);
    let pred = predict_eigenvalues(&p, a.k, a.e_window)?;
    if pred.non_monotone_zeta {
        w.warn("zeta0 is not monotone on the window; roots came from a dense scan");
    }
    let mut csv = String::from("k,E_predicted,quantization_residual,side\n");
    for e in &pred.predictions {
        let side = match e.side {
            crate::spectrum::Side::BelowBand => "below",
            crate::spectrum::Side::AboveBand => "above",
        };
        csv.push_str(&format!(
            "{},{},{},{side}\n",
            e.k,
            fmt_float(e.energy),
            fmt_float(e.quantization_residual)
        ));
    }
    w.table(None, &csv)?;
    w.summary = json!({ "predictions": pred.predictions.len() });
    if let Some(l) = a.validate_l {
        let params = ModelParams::new(a.lambda, vec![alpha], a.theta, a.geometry)?;
        let op = build_finite(&params, l)?;
        let eigs = eig_window(&op, a.e_window.0, a.e_window.1)?;
        let rules = MatchRules {
            tol: a.match_tol,
            inner: a.e_window,
            ..MatchRules::default()
        };
        let rep = match_spectra(&pred.predictions, &eigs, l, &rules);
        w.table(Some("match"), &rep.to_csv())?;
        w.summary["match"] = json!({
            "bijective": rep.bijective,
            "pairs": rep.pairs.len(),
            "max_error": rep.max_error,
            "unmatched_predictions": rep.unmatched_predictions.iter().map(|p| p.k).collect::<Vec<_>>(),
            "unmatched_eigen": rep.unmatched_eigen,
            "rules": rep.rules,
        });
    }
    Ok(())
}

fn cmd_fv(a: &FvArgs, w: &mut Writer) -> CliResult<()> {
    let params = model(w, a.lambda, &a.alpha, a.theta, a.geometry)?;
    let op = build_finite(&params, a.l)?;
    let eigs = eig_window(&op, a.e_window.0, a.e_window.1)?;
    let d = params.d();
    let mut csv = format!(
        "E,{},center_x,surface_mass,n_slope,x_slope\n",
        site_columns(d, "center_n")
    );
    for e in &eigs {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_float(e.energy),
            join_site(&e.center_n),
            e.center_x,
            fmt_float(e.surface_mass),
            fmt_float(e.n_slope),
            fmt_float(e.x_slope)
        ));
    }
    w.table(None, &csv)?;
    if a.matrix {
        let mut buf = Vec::new();
        op.write_triplets(&mut buf)?;
        let path = w.path(Some("matrix"), "txt");
        w.write(path, &buf)?;
    }
    w.summary = json!({ "operator": op.header_json(), "eigenvalues": eigs.len() });
    Ok(())
}

fn cmd_resolvent(a: &ResolventArgs, w: &mut Writer) -> CliResult<()> {
    let z = Energy::new(a.z_re, a.z_im);
    let rep = if a.lambda == 0.0 {
        resolvent_check_free(a.alpha.len(), a.l, z, a.w, a.geometry)?
    } else {
        let params = model(w, a.lambda, &a.alpha, a.theta, a.geometry)?;
        resolvent_check(&params, a.l, z, a.w)?
    };
    let v = serde_json::to_value(&rep).map_err(SmmError::from)?;
    w.json(None, &v)?;
    w.summary = v;
    Ok(())
}

fn cmd_cf(a: &CfArgs, w: &mut Writer) -> CliResult<()> {
    let desc = descriptor(&a.alpha)?;
    let (cf, stop) = cf_expand_partial(&desc, a.depth, a.budget_bits);
    if cf.depth() == 0 {
        return Err(stop
            .unwrap_or_else(|| SmmError::InvalidParameter("empty expansion".into()))
            .into());
    }
    let mut v = cf.to_json();
    v["beta_estimate"] = serde_json::to_value(beta_estimate(&cf)).map_err(SmmError::from)?;
    v["determinant_identity"] = json!(cf.determinant_identity_holds());
    v["gdc2_sandwich"] = json!(cf.gdc2_sandwich_holds());
    if let Some(k) = a.best_approx_k {
        v["best_approx"] = json!({ "k_max": k, "pass": best_approx_check(&cf, k)? });
    }
    if let Some(e) = &stop {
        w.warn(format!("expansion stopped at depth {}: {}: {e}", cf.depth(), e.kind()));
        v["stopped"] = json!({ "kind": e.kind(), "message": e.to_string() });
    }
    w.json(None, &v)?;
    w.summary = json!({ "depth": cf.depth(), "stopped": stop.map(|e| e.kind()) });
    Ok(())
}

fn cmd_ergodic(a: &ErgodicArgs, w: &mut Writer) -> CliResult<()> {
    let desc = descriptor(&a.alpha)?;
    let f: AnalyticObservable = a.modes.parse().map_err(CliError::usage)?;
    let grid = strip_grid(a.grid, f.rho() / 2.0);
    let rot = Rotation::new(&desc)?;
    match a.sequence {
        Sequence::Qn | Sequence::Naive => {
            let seq: Vec<BigUint> = if a.sequence == Sequence::Qn {
                let (cf, stop) = cf_expand_partial(&desc, a.max_n, DEFAULT_BUDGET_BITS);
                if let Some(e) = stop {
                    w.warn(format!("only {} denominators available: {e}", cf.depth()));
                }
                cf.q[1..].to_vec()
            } else {
                (1..=a.max_n as u64).map(BigUint::from).collect()
            };
            let rep = verify_lemma_le(&f, &rot, &seq, &grid, a.epsilon);
            w.table(None, &rep.to_csv())?;
            w.summary = serde_json::to_value(&rep).map_err(SmmError::from)?;
            w.summary.as_object_mut().unwrap().remove("rows");
        }
        Sequence::Tm => {
            let (cf, _) = cf_expand_partial(&desc, a.max_n, DEFAULT_BUDGET_BITS);
            let beta = match desc {
                AlphaDescriptor::Beta { beta, .. } => beta,
                _ => beta_estimate(&cf).beta_estimate,
            };
            let tm = tm_sequence(&cf, f.rho(), beta, a.tm_budget)?;
            let rep = verify_lemma_le1(&f, &rot, &tm, &grid);
            let mut csv = String::from("k,m,t,sup_tm,generic_n,sup_generic\n");
            for r in &rep.rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.k,
                    r.m,
                    r.t,
                    fmt_float(r.sup_tm),
                    r.generic_n,
                    fmt_float(r.sup_generic)
                ));
            }
            w.table(None, &csv)?;
            w.summary = serde_json::to_value(&rep).map_err(SmmError::from)?;
            w.summary.as_object_mut().unwrap().remove("rows");
        }
    }
    Ok(())
}

fn cmd_cover(a: &CoverArgs, w: &mut Writer) -> CliResult<()> {
    let desc = descriptor(&a.alpha)?;
    let c = cover_sum(&desc, a.rho_bar, a.s, a.k, a.budget_bits)?;
    if let Some(m) = &c.shortfall {
        w.warn(m.clone());
    }
    w.table(None, &c.to_csv())?;
    w.summary = serde_json::to_value(&c).map_err(SmmError::from)?;
    Ok(())
}

fn solve(a: &ReduceArgs, w: &mut Writer) -> CliResult<(ModelParams, Vec<crate::spectrum::ReducedSolution>)> {
    let params = model(w, a.lambda, &a.alpha, a.theta, a.geometry)?;
    let cfg = ReducedConfig {
        scan_step: a.scan_step,
        ..ReducedConfig::default()
    };
    let sols = reduced_equation_solve(&params, a.e_window, a.w, &cfg)?;
    Ok((params, sols))
}

fn cmd_reduce(a: &ReduceArgs, w: &mut Writer) -> CliResult<()> {
    let (params, sols) = solve(a, w)?;
    let d = params.d();
    let mut csv = format!(
        "solution,E,min_singular_value,{},flagged_sites\n",
        site_columns(d, "center_n")
    );
    let mut phi = format!("solution,{},phi_re,phi_im\n", site_columns(d, "n"));
    for (i, s) in sols.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            fmt_float(s.energy),
            fmt_float(s.min_singular_value),
            join_site(&s.center),
            s.flagged_sites.len()
        ));
        for (n, v) in s.phi.sites().iter().zip(&s.phi.values) {
            phi.push_str(&format!(
                "{i},{},{},{}\n",
                join_site(n),
                fmt_float(v.re),
                fmt_float(v.im)
            ));
        }
    }
    w.table(None, &csv)?;
    w.table(Some("phi"), &phi)?;
    w.summary = json!({ "solutions": sols.len() });
    Ok(())
}

fn cmd_transfer(a: &TransferArgs, w: &mut Writer) -> CliResult<()> {
    let (params, sols) = solve(&a.reduce, w)?;
    let inner = a.reduce.w / 2;
    let mut csv = String::from("E,eigen_residual,roundtrip_error,clay_residual,trf3_residual\n");
    let mut worst: f64 = 0.0;
    for s in &sols {
        let psi = transfer_phi_to_psi(&s.phi, s.energy, &params, a.reduce.w, a.x_extent)?;
        let residual = psi.eigen_residual(&params, s.energy)?;
        let back = transfer_psi_to_phi(&psi.surface(), s.energy, &params)?;
        let scale = s.phi.sup_norm();
        let roundtrip = cube(params.d(), inner)
            .iter()
            .map(|n| (back.get(n) - s.phi.get(n)).norm())
            .fold(0.0, f64::max)
            / scale;
        let c = cayley_check(&s.phi, s.energy, &params)?;
        worst = worst.max(residual);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_float(s.energy),
            fmt_float(residual),
            fmt_float(roundtrip),
            fmt_float(c.clay_residual),
            fmt_float(c.trf3_residual)
        ));
    }
    w.table(None, &csv)?;
    w.summary = json!({ "solutions": sols.len(), "max_eigen_residual": worst, "roundtrip_radius": inner });
    Ok(())
}

/// Runs a config and writes its outputs.
pub fn execute(cfg: &RunConfig) -> CliResult<RunOutput> {
    let mut w = Writer::new(cfg)?;
    match &cfg.command {
        Command::Green(a) => cmd_green(a, &mut w)?,
        Command::Zeta0(a) => cmd_zeta0(a, &mut w)?,
        Command::Predict(a) => cmd_predict(a, &mut w)?,
        Command::Fv(a) => cmd_fv(a, &mut w)?,
        Command::Resolvent(a) => cmd_resolvent(a, &mut w)?,
        Command::Cf(a) => cmd_cf(a, &mut w)?,
        Command::Ergodic(a) => cmd_ergodic(a, &mut w)?,
        Command::Cover(a) => cmd_cover(a, &mut w)?,
        Command::Reduce(a) => cmd_reduce(a, &mut w)?,
        Command::Transfer(a) => cmd_transfer(a, &mut w)?,
    }
    w.finish()
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SMM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("SMM_THREADS must be a positive integer, got {v:?}")))?;
    // a pool built earlier in the same process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses arguments, runs, reports on stdout/stderr and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    let dump = cli.dump_config;
    let result = init_threads().and_then(|_| cli.into_config()).and_then(|cfg| {
        if dump {
            println!("{}", serde_json::to_string_pretty(&cfg).map_err(SmmError::from)?);
            return Ok(None);
        }
        execute(&cfg).map(Some)
    });
    match result {
        Ok(Some(out)) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            println!("{}", out.manifest.display());
            0
        }
        Ok(None) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: usage: {m}"),
                CliError::Run(s) => eprintln!("error: {}: {s}", s.kind()),
            }
            e.exit_code()
        }
    }
}

/// Reads a config written by `--dump-config`.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}
