//! Command-line driver: resolves parameters and options, runs one command and
//! writes a versioned JSON report (plus CSV data when asked).

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use dlag_core::calculus::{
    differential_relation_residuals, pde_residual_r, riccati_residuals, sigma_pde_residual, toda_residuals,
    CalculusConfig, FDConfig,
};
use dlag_core::coulomb::{check_density, density_samples, solve_endpoints};
use dlag_core::ladder::{compatibility_residuals, default_z_samples};
use dlag_core::presets::Preset;
use dlag_core::quadrature::{QuadratureSettings, Scheme};
use dlag_core::recurrences::{
    closed_form_residuals, compare_aux, iterate_difference_system, max_abs_diff, write_comparison_csv, De3Variant,
};
use dlag_core::report::ResidualReport;
use dlag_core::scaling::{
    build_scaling_sequence, delta_identity_residual, extrapolate, scaled_pde_residuals, ScalingBase, ScalingConfig,
    DEFAULT_N_LIST,
};
use dlag_core::system::System;
use dlag_core::weights::WeightParams;
use dlag_core::{num, Error};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PRECISION_BITS: u32 = 400;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "dlag", version, about = "Orthogonal polynomials and Painleve identities of the deformed Laguerre weight")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// JSON file with parameters and settings (flags override it).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Named parameter set: n1 or n2.
    #[arg(long, global = true)]
    pub preset: Option<Preset>,
    /// Exponent alpha as a decimal string.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// Shifts t_k, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub t: Vec<String>,
    /// Exponents lambda_k, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda: Vec<String>,
    #[arg(long, global = true)]
    pub precision_bits: Option<u32>,
    /// Node count of the Gauss-Laguerre rule.
    #[arg(long, global = true)]
    pub quad_m: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub quad_scheme: Option<SchemeArg>,
    /// Nodes per panel of the graded rule.
    #[arg(long, global = true)]
    pub panel_nodes: Option<usize>,
    /// Output path (default: dlag-<command>.<format>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Auto,
    GaussLaguerre,
    Graded,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Auto => Scheme::Auto,
            SchemeArg::GaussLaguerre => Scheme::GaussLaguerre,
            SchemeArg::Graded => Scheme::Graded,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualSet {
    Dr,
    Toda,
    Riccati,
    PdeR,
    Sigma,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleCheck {
    Piii,
    PdeR,
    PdeSigma,
    All,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum Command {
    /// Recurrence coefficients, norms and Hankel determinants up to nmax.
    Table {
        #[arg(long, default_value_t = 10)]
        nmax: usize,
    },
    /// Auxiliary quantities R_{n,k}, r_{n,k} up to nmax.
    Aux {
        #[arg(long, default_value_t = 10)]
        nmax: usize,
    },
    /// Auxiliaries from the difference system, optionally against quadrature.
    Iterate {
        #[arg(long, default_value_t = 8)]
        nmax: usize,
        #[arg(long)]
        compare_quadrature: bool,
        /// Denominator of the R_{n,k} ratio step: lambda1 or printed.
        #[arg(long, default_value = "lambda1")]
        de3: String,
        #[arg(long, default_value_t = 1e-20)]
        tol: f64,
    },
    /// Compatibility conditions and closed forms at degree n.
    Verify {
        #[arg(long)]
        n: usize,
        /// Identity names (s1, s2, s2p, s1.1, s2.1, s2p.1, s1.2, s2.2, s2p.2,
        /// alpha_n, beta_n, p, s2p.2, sum_rule, sigma_n) or "all".
        #[arg(long, value_delimiter = ',', default_value = "all")]
        identities: Vec<String>,
        /// Sample points z (default: between the poles and at 1, n, 10n).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        z: Vec<String>,
        #[arg(long, default_value_t = 1e-30)]
        tol: f64,
    },
    /// Finite-difference identities in t at degree n.
    Residuals {
        #[arg(long, value_enum, default_value = "all")]
        set: ResidualSet,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Evaluation point t (replaces the shifts).
        #[arg(long, value_delimiter = ',')]
        point: Vec<String>,
        #[arg(long, default_value_t = 1e-8)]
        step: f64,
        #[arg(long, default_value_t = 4)]
        order: u32,
        #[arg(long)]
        richardson: bool,
        #[arg(long, default_value_t = 1)]
        lattice_points: usize,
        #[arg(long, default_value_t = 0.1)]
        lattice_spread: f64,
        /// Overrides every per-identity tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Double scaling t = s/(4n): sequences, limits and the limiting equations.
    Scale {
        /// Scaled variables as a JSON array, e.g. '["1"]' or '[1, 2]'.
        #[arg(long)]
        s: String,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_N_LIST.to_vec())]
        nlist: Vec<usize>,
        /// Appends n = 128 to the sequence.
        #[arg(long)]
        deep: bool,
        #[arg(long, value_enum, default_value = "all")]
        check: ScaleCheck,
        /// Relative finite-difference step in s.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Equilibrium density of the Coulomb fluid (lambda_k >= 0).
    Density {
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = dlag_core::coulomb::DEFAULT_SOLVER_TOL)]
        tol: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Table { .. } => "table",
            Command::Aux { .. } => "aux",
            Command::Iterate { .. } => "iterate",
            Command::Verify { .. } => "verify",
            Command::Residuals { .. } => "residuals",
            Command::Scale { .. } => "scale",
            Command::Density { .. } => "density",
        }
    }
}

/// Contents of a `--config` file. Reals are decimal strings.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<Preset>,
    pub alpha: Option<String>,
    pub deformations: Option<Vec<DeformationSpec>>,
    pub precision_bits: Option<u32>,
    pub quad_m: Option<usize>,
    pub quad_scheme: Option<SchemeArg>,
    pub panel_nodes: Option<usize>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct DeformationSpec {
    pub t: String,
    pub lambda: String,
}

/// Everything a run depends on, as embedded in the report.
#[derive(Serialize, Debug, Clone)]
pub struct ResolvedConfig {
    pub precision_bits: u32,
    pub alpha: String,
    pub deformations: Vec<DeformationSpec>,
    pub quadrature: QuadratureSettings,
    pub command: Command,
    pub format: Format,
}

/// A failed run with its exit status.
#[derive(Debug)]
pub struct RunError {
    pub code: u8,
    pub message: String,
}

impl RunError {
    fn config(msg: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: msg.into() }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        let code = if e.is_numeric_breakdown() { EXIT_NUMERIC } else { EXIT_CONFIG };
        Self { code, message: e.to_string() }
    }
}

/// Resolves parameters: config file, then preset, then explicit flags.
/// Without any of them the N1 preset is used; `--alpha` alone gives the
/// undeformed weight.
pub fn resolve(global: &GlobalArgs, command: &Command) -> Result<ResolvedConfig, RunError> {
    let file = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| RunError::config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<ConfigFile>(&text)
                .map_err(|e| RunError::config(format!("invalid config {}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let preset = global.preset.or(file.preset);
    let from_preset = |p: Preset| -> (String, Vec<DeformationSpec>) {
        let defs = p.pairs().iter().map(|(t, l)| DeformationSpec { t: t.to_string(), lambda: l.to_string() }).collect();
        (p.alpha().to_string(), defs)
    };
    let (mut alpha, mut deformations) = if let Some(p) = preset {
        let (a, d) = from_preset(p);
        (a, file.deformations.clone().unwrap_or(d))
    } else if file.alpha.is_some() || file.deformations.is_some() || global.alpha.is_some() {
        (file.alpha.clone().unwrap_or_else(|| "1".into()), file.deformations.clone().unwrap_or_default())
    } else {
        from_preset(Preset::N1)
    };
    if let Some(a) = file.alpha.clone().filter(|_| preset.is_some()) {
        alpha = a;
    }
    if let Some(a) = &global.alpha {
        alpha = a.clone();
    }
    if !global.t.is_empty() || !global.lambda.is_empty() {
        if global.t.len() != global.lambda.len() {
            return Err(RunError::config(format!(
                "--t has {} entries but --lambda has {}",
                global.t.len(),
                global.lambda.len()
            )));
        }
        deformations = global
            .t
            .iter()
            .zip(&global.lambda)
            .map(|(t, l)| DeformationSpec { t: t.trim().to_string(), lambda: l.trim().to_string() })
            .collect();
    }
    let precision_bits = global
        .precision_bits
        .or(file.precision_bits)
        .unwrap_or_else(|| default_precision(command));
    let mut quadrature = QuadratureSettings::default();
    if let Some(m) = global.quad_m.or(file.quad_m) {
        quadrature.m = m;
    }
    if let Some(s) = global.quad_scheme.or(file.quad_scheme) {
        quadrature.scheme = s.into();
    }
    quadrature.panel_nodes = global.panel_nodes.or(file.panel_nodes);
    let cfg = ResolvedConfig { precision_bits, alpha, deformations, quadrature, command: command.clone(), format: global.format };
    validate(&cfg)?;
    Ok(cfg)
}

/// At least `DEFAULT_PRECISION_BITS`, raised for the highest degree the
/// command builds.
fn default_precision(command: &Command) -> u32 {
    let n_max = match command {
        Command::Table { nmax } | Command::Aux { nmax } => *nmax,
        Command::Iterate { nmax, .. } => nmax + 1,
        Command::Verify { n, .. } | Command::Residuals { n, .. } => n + 2,
        _ => 0,
    };
    DEFAULT_PRECISION_BITS.max(dlag_core::orthopoly::recommended_precision(n_max))
}

const VERIFY_IDENTITIES: [&str; 15] = [
    "s1", "s2", "s2p", "s1.1", "s2.1", "s2p.1", "s1.2", "s2.2", "s2p.2", "alpha_n", "beta_n", "p", "sum_rule",
    "sigma_n", "all",
];

/// Option checks made before any computation.
fn validate(cfg: &ResolvedConfig) -> Result<(), RunError> {
    params(cfg)?;
    match &cfg.command {
        Command::Table { nmax } | Command::Aux { nmax } if *nmax == 0 => Err(RunError::config("--nmax must be >= 1")),
        Command::Iterate { nmax, de3, tol, .. } => {
            if *nmax == 0 {
                return Err(RunError::config("--nmax must be >= 1"));
            }
            De3Variant::from_str(de3)?;
            check_tol(*tol)
        }
        Command::Verify { n, identities, z, tol } => {
            if *n == 0 {
                return Err(RunError::config("--n must be >= 1"));
            }
            for id in identities {
                if !VERIFY_IDENTITIES.contains(&id.as_str()) {
                    return Err(RunError::config(format!("unknown identity '{id}'; known: {}", VERIFY_IDENTITIES.join(", "))));
                }
            }
            for v in z {
                num::parse(cfg.precision_bits, v)?;
            }
            check_tol(*tol)
        }
        Command::Residuals { n, point, step, order, lattice_points, tol, .. } => {
            if *n == 0 {
                return Err(RunError::config("--n must be >= 1"));
            }
            if !point.is_empty() && point.len() != cfg.deformations.len() {
                return Err(RunError::config(format!("--point needs {} coordinates", cfg.deformations.len())));
            }
            if *lattice_points == 0 {
                return Err(RunError::config("--lattice-points must be >= 1"));
            }
            if cfg.deformations.is_empty() {
                return Err(RunError::config("t-derivatives need at least one deformation"));
            }
            FDConfig { step: *step, order: *order, richardson: false }.validate(cfg.precision_bits)?;
            tol.map(check_tol).transpose().map(|_| ())
        }
        Command::Scale { s, nlist, check, step, .. } => {
            let sv = parse_s(s, cfg.precision_bits)?;
            if sv.len() != cfg.deformations.len() {
                return Err(RunError::config(format!(
                    "--s has {} entries for {} deformations",
                    sv.len(),
                    cfg.deformations.len()
                )));
            }
            if nlist.len() < 3 {
                return Err(RunError::config("--nlist needs at least 3 entries"));
            }
            if *check == ScaleCheck::Piii && cfg.deformations.len() != 1 {
                return Err(RunError::config("the P_III check needs exactly one deformation"));
            }
            if !(*step > 0.0 && *step < 0.1) {
                return Err(RunError::config("--step must lie in (0, 0.1)"));
            }
            Ok(())
        }
        Command::Density { n, samples, tol } => {
            if *n == 0 || *samples == 0 {
                return Err(RunError::config("--n and --samples must be >= 1"));
            }
            let p = params(cfg)?;
            if p.lambdas().iter().any(|l| *l < 0) {
                return Err(RunError::config(
                    "the equilibrium density assumes lambda_k >= 0 (convex potential, single-interval support)",
                ));
            }
            check_tol(*tol)
        }
        _ => Ok(()),
    }
}

fn check_tol(tol: f64) -> Result<(), RunError> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(RunError::config(format!("tolerance must be positive, got {tol}")))
    }
}

fn params(cfg: &ResolvedConfig) -> Result<WeightParams, RunError> {
    let pairs: Vec<(&str, &str)> = cfg.deformations.iter().map(|d| (d.t.as_str(), d.lambda.as_str())).collect();
    WeightParams::from_decimals(&cfg.alpha, &pairs, cfg.precision_bits).map_err(|e| RunError::config(e.to_string()))
}

/// `--s` as a JSON array of decimal strings or numbers.
fn parse_s(s: &str, bits: u32) -> Result<Vec<dlag_core::Float>, RunError> {
    let v: Value = serde_json::from_str(s).map_err(|e| RunError::config(format!("--s is not JSON: {e}")))?;
    let items = v.as_array().ok_or_else(|| RunError::config("--s must be a JSON array"))?;
    items
        .iter()
        .map(|x| {
            let text = match x {
                Value::String(t) => t.clone(),
                Value::Number(n) => n.to_string(),
                _ => return Err(RunError::config("--s entries must be decimal strings or numbers")),
            };
            let f = num::parse(bits, &text)?;
            if f <= 0 {
                return Err(RunError::config("--s entries must be positive"));
            }
            Ok(f)
        })
        .collect()
}

/// Tabular data: CSV or the `data` member of the JSON report.
#[derive(Serialize, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn from_csv(bytes: &[u8]) -> Result<Self, RunError> {
        let mut rd = csv::Reader::from_reader(bytes);
        let columns = rd.headers().map_err(io_err)?.iter().map(str::to_string).collect();
        let rows = rd
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(io_err)?;
        Ok(Self { columns, rows })
    }

    fn from_report(r: &ResidualReport) -> Self {
        let columns = ["name", "absolute", "relative", "tolerance", "uncertainty", "pass", "note"].map(String::from).to_vec();
        let rows = r
            .iter()
            .map(|(name, e)| {
                let note = match &e.verdict {
                    dlag_core::report::Verdict::Skipped(why) => format!("skipped: {why}"),
                    _ => e.note.clone().unwrap_or_default(),
                };
                vec![
                    name.to_string(),
                    num::to_decimal_digits(&e.absolute, dlag_core::report::REPORT_DIGITS),
                    num::to_decimal_digits(&e.relative, dlag_core::report::REPORT_DIGITS),
                    if e.tolerance.is_finite() { format!("{:e}", e.tolerance) } else { String::new() },
                    e.uncertainty.as_ref().map(|u| num::to_decimal_digits(u, dlag_core::report::REPORT_DIGITS)).unwrap_or_default(),
                    e.passed().to_string(),
                    note,
                ]
            })
            .collect();
        Self { columns, rows }
    }

    fn write_csv(&self, path: &Path) -> Result<(), RunError> {
        let mut w = csv::Writer::from_path(path).map_err(io_err)?;
        w.write_record(&self.columns).map_err(io_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(io_err)?;
        }
        w.flush().map_err(|e| io_err(e.into()))?;
        Ok(())
    }
}

fn io_err(e: csv::Error) -> RunError {
    RunError::config(format!("output error: {e}"))
}

/// The outcome of one command before it is written.
#[derive(Debug)]
pub struct Outcome {
    pub report: ResidualReport,
    pub summary: Value,
    pub data: Table,
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema: u32,
    command: &'a str,
    config: &'a ResolvedConfig,
    pass: bool,
    failures: Vec<&'a str>,
    summary: &'a Value,
    report: &'a ResidualReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<&'a Table>,
}

/// Runs the resolved command.
pub fn execute(cfg: &ResolvedConfig) -> Result<Outcome, RunError> {
    let p = params(cfg)?;
    let q = &cfg.quadrature;
    match &cfg.command {
        Command::Table { nmax } => {
            let sys = System::build(&p, *nmax, q)?;
            let mut buf = Vec::new();
            sys.table().write_csv(&mut buf)?;
            Ok(Outcome { report: ResidualReport::new(), summary: json!({ "n_max": nmax }), data: Table::from_csv(&buf)? })
        }
        Command::Aux { nmax } => {
            let sys = System::build(&p, *nmax, q)?;
            let mut buf = Vec::new();
            sys.aux().write_csv(&mut buf)?;
            Ok(Outcome { report: ResidualReport::new(), summary: json!({ "n_max": nmax }), data: Table::from_csv(&buf)? })
        }
        Command::Iterate { nmax, compare_quadrature, de3, tol } => {
            let variant = De3Variant::from_str(de3)?;
            let sys = System::build(&p, *nmax + 1, q)?;
            let iter = iterate_difference_system(&p, sys.aux().big_r(0), *nmax, variant)?;
            let mut report = ResidualReport::new();
            let mut buf = Vec::new();
            let mut summary = json!({ "n_max": nmax, "de3": de3 });
            if *compare_quadrature {
                let rows = compare_aux(&iter, sys.aux());
                let diff = max_abs_diff(&rows, cfg.precision_bits);
                report.record("max_diff", &diff, &num::one(cfg.precision_bits), *tol);
                summary["max_diff"] = json!(num::to_decimal_digits(&diff, dlag_core::report::REPORT_DIGITS));
                write_comparison_csv(&rows, &mut buf)?;
            } else {
                iter.write_csv(&mut buf)?;
            }
            Ok(Outcome { report, summary, data: Table::from_csv(&buf)? })
        }
        Command::Verify { n, identities, z, tol } => {
            let sys = System::build(&p, *n + 1, q)?;
            let zs: Vec<dlag_core::Float> = if z.is_empty() {
                default_z_samples(&p, *n)
            } else {
                z.iter().map(|v| num::parse(cfg.precision_bits, v)).collect::<dlag_core::Result<_>>()?
            };
            let mut report = ResidualReport::new();
            for (i, zv) in zs.iter().enumerate() {
                let r = compatibility_residuals(sys.table(), sys.aux(), *n, zv, *tol)?;
                report.extend_prefixed(&format!("z{}/", i + 1), r);
            }
            report.extend_prefixed("", closed_form_residuals(sys.table(), sys.aux(), *tol)?);
            let report = filter_identities(report, identities);
            let z_text: Vec<String> = zs.iter().map(|v| num::to_decimal_digits(v, 20)).collect();
            let data = Table::from_report(&report);
            Ok(Outcome { report, summary: json!({ "n": n, "z": z_text }), data })
        }
        Command::Residuals { set, n, point, step, order, richardson, lattice_points, lattice_spread, tol } => {
            let p = if point.is_empty() {
                p
            } else {
                let t: Vec<dlag_core::Float> =
                    point.iter().map(|v| num::parse(cfg.precision_bits, v)).collect::<dlag_core::Result<_>>()?;
                p.with_shifts(&t)?
            };
            let calc = CalculusConfig {
                fd: FDConfig { step: *step, order: *order, richardson: *richardson },
                lattice_points: *lattice_points,
                lattice_spread: *lattice_spread,
                tolerance: *tol,
                quadrature: q.clone(),
            };
            let mut report = ResidualReport::new();
            let all = *set == ResidualSet::All;
            if all || *set == ResidualSet::Dr {
                report.extend_prefixed("", differential_relation_residuals(&p, *n, &calc)?);
            }
            if all || *set == ResidualSet::Toda {
                report.extend_prefixed("", toda_residuals(&p, *n, &calc)?);
            }
            if all || *set == ResidualSet::Riccati {
                report.extend_prefixed("", riccati_residuals(&p, *n, &calc)?);
            }
            if all || *set == ResidualSet::PdeR {
                report.extend_prefixed("", pde_residual_r(&p, *n, &calc)?);
            }
            if all || *set == ResidualSet::Sigma {
                report.extend_prefixed("", sigma_pde_residual(&p, *n, &calc)?);
            }
            let data = Table::from_report(&report);
            let t: Vec<String> = p.shifts().iter().map(|v| num::to_decimal_digits(v, 20)).collect();
            let summary = json!({ "n": n, "t": t, "worst_relative": report.worst_relative() });
            Ok(Outcome { report, summary, data })
        }
        Command::Scale { s, nlist, deep, check, step } => {
            let sv = parse_s(s, cfg.precision_bits)?;
            let base = ScalingBase::from_params(&p);
            let mut n_list = nlist.clone();
            if *deep && !n_list.contains(&128) {
                n_list.push(128);
            }
            n_list.sort_unstable();
            n_list.dedup();
            let scfg = ScalingConfig {
                n_list: n_list.clone(),
                fd: FDConfig { step: *step, order: 4, richardson: false },
                quadrature: q.clone(),
                ..ScalingConfig::default()
            };
            let seq = build_scaling_sequence(&base, &sv, &n_list, q)?;
            let mut buf = Vec::new();
            seq.write_csv(&mut buf)?;
            let mut summary = json!({
                "n_list": n_list,
                "converging": seq.converging(),
                "failed_n": seq.failures.iter().map(|(n, why)| json!({ "n": n, "reason": why })).collect::<Vec<_>>(),
                "tolerances": "empirical: propagated extrapolation error",
            });
            if let Ok(e) = extrapolate(&seq) {
                summary["sigma_limit"] = json!(num::to_decimal_digits(&e.value, 20));
                summary["sigma_error"] = json!(num::to_decimal_digits(&e.error, 6));
                summary["order"] = json!(e.order);
                summary["low_confidence"] = json!(e.low_confidence);
            }
            let mut report = scaled_pde_residuals(&base, &sv, &scfg)?;
            report.retain(|name| {
                name.starts_with("lim")
                    || match check {
                        ScaleCheck::All => true,
                        ScaleCheck::Piii => name == "sigma_piii",
                        ScaleCheck::PdeR => name.starts_with("scaled_pde_r") || name == "scaled_pv_y",
                        ScaleCheck::PdeSigma => name == "scaled_sigma_pde",
                    }
            });
            if *check == ScaleCheck::All && !base.lambdas.iter().all(|l| l.is_zero()) {
                report.extend_prefixed("", delta_identity_residual(&base, &sv, n_list[0], &scfg)?);
            }
            Ok(Outcome { report, summary, data: Table::from_csv(&buf)? })
        }
        Command::Density { n, samples, tol } => {
            let interval = solve_endpoints(&p, *n, *tol)?;
            let report = check_density(&interval)?;
            let rows = density_samples(&interval, *samples)?
                .into_iter()
                .map(|(x, psi)| vec![num::to_decimal_digits(&x, 30), num::to_decimal_digits(&psi, 30)])
                .collect();
            let data = Table { columns: vec!["x".into(), "psi".into()], rows };
            Ok(Outcome { report, summary: serde_json::to_value(interval.summary()).unwrap_or(Value::Null), data })
        }
    }
}

/// Keeps the entries whose identity (name without `z<i>/` prefix and `[..]`
/// index) is listed.
fn filter_identities(mut report: ResidualReport, identities: &[String]) -> ResidualReport {
    if identities.iter().any(|i| i == "all") {
        return report;
    }
    report.retain(|name| {
        let base = name.rsplit('/').next().unwrap_or(name);
        let base = base.split('[').next().unwrap_or(base);
        identities.iter().any(|i| i == base)
    });
    report
}

/// Output paths `(main, report)`; with CSV the report goes next to the data.
pub fn output_paths(cfg: &ResolvedConfig, out: Option<&Path>) -> (PathBuf, Option<PathBuf>) {
    let ext = match cfg.format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    let main = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(format!("dlag-{}.{ext}", cfg.command.name())));
    match cfg.format {
        Format::Json => (main, None),
        Format::Csv => {
            let report = if main.extension().is_some_and(|e| e == "json") {
                main.with_extension("report.json")
            } else {
                main.with_extension("json")
            };
            (main, Some(report))
        }
    }
}

/// Serializes the report (with data for JSON output).
pub fn render_report(cfg: &ResolvedConfig, outcome: &Outcome, with_data: bool) -> String {
    let env = Envelope {
        schema: SCHEMA_VERSION,
        command: cfg.command.name(),
        config: cfg,
        pass: outcome.report.all_pass(),
        failures: outcome.report.failures(),
        summary: &outcome.summary,
        report: &outcome.report,
        data: with_data.then_some(&outcome.data),
    };
    let mut text = serde_json::to_string_pretty(&env).expect("report serialization");
    text.push('\n');
    text
}

/// Resolves, runs and writes; returns the exit status and the human summary.
pub fn run(cli: &Cli) -> Result<(u8, String), RunError> {
    let cfg = resolve(&cli.global, &cli.command)?;
    let outcome = execute(&cfg)?;
    let (main, report_path) = output_paths(&cfg, cli.global.out.as_deref());
    let write = |path: &Path, text: &str| {
        fs::write(path, text).map_err(|e| RunError::config(format!("cannot write {}: {e}", path.display())))
    };
    match &report_path {
        None => write(&main, &render_report(&cfg, &outcome, true))?,
        Some(rp) => {
            outcome.data.write_csv(&main)?;
            write(rp, &render_report(&cfg, &outcome, false))?;
        }
    }
    let failures = outcome.report.failures();
    let mut msg = format!("dlag {}: ", cfg.command.name());
    if failures.is_empty() {
        msg.push_str(&format!("PASS ({} checks)", outcome.report.len()));
    } else {
        msg.push_str(&format!("FAIL ({} of {} checks): {}", failures.len(), outcome.report.len(), failures.join(", ")));
    }
    msg.push_str(&format!("\nwrote {}", main.display()));
    if let Some(rp) = report_path {
        msg.push_str(&format!(" and {}", rp.display()));
    }
    let code = if failures.is_empty() { EXIT_OK } else { EXIT_CHECK_FAILED };
    Ok((code, msg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("dlag").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn default_paths() {
        let c = cli(&["table"]);
        let cfg = resolve(&c.global, &c.command).unwrap();
        assert_eq!(output_paths(&cfg, None), (PathBuf::from("dlag-table.json"), None));
        let c = cli(&["--format", "csv", "aux"]);
        let cfg = resolve(&c.global, &c.command).unwrap();
        assert_eq!(output_paths(&cfg, None), (PathBuf::from("dlag-aux.csv"), Some(PathBuf::from("dlag-aux.json"))));
        let (_, report) = output_paths(&cfg, Some(Path::new("x.json")));
        assert_eq!(report, Some(PathBuf::from("x.report.json")));
    }

    #[test]
    fn resolution_order() {
        let c = cli(&["table"]);
        let cfg = resolve(&c.global, &c.command).unwrap();
        assert_eq!((cfg.alpha.as_str(), cfg.deformations.len()), ("1", 1));
        let c = cli(&["--alpha", "3", "table"]);
        let cfg = resolve(&c.global, &c.command).unwrap();
        assert!(cfg.deformations.is_empty());
        let c = cli(&["--preset", "n2", "--alpha", "3", "table"]);
        let cfg = resolve(&c.global, &c.command).unwrap();
        assert_eq!((cfg.alpha.as_str(), cfg.deformations.len()), ("3", 2));
        let c = cli(&["--t", "1", "--lambda", "-0.25", "verify", "--n", "2"]);
        let cfg = resolve(&c.global, &c.command).unwrap();
        assert_eq!(cfg.deformations[0].lambda, "-0.25");
    }

    #[test]
    fn precision_default_grows_with_degree() {
        let c = cli(&["table", "--nmax", "40"]);
        assert_eq!(resolve(&c.global, &c.command).unwrap().precision_bits, 1133);
        let c = cli(&["--precision-bits", "200", "table", "--nmax", "40"]);
        assert_eq!(resolve(&c.global, &c.command).unwrap().precision_bits, 200);
    }

    #[test]
    fn identity_filter_strips_prefix_and_index() {
        let one = num::one(64);
        let mut r = ResidualReport::new();
        for name in ["z1/s1", "z1/s1.1", "z2/s1.2[1]", "alpha_n[3]"] {
            r.record(name, &one, &one, 1.0);
        }
        let kept: Vec<String> = filter_identities(r, &["s1.2".into(), "alpha_n".into()])
            .iter()
            .map(|(n, _)| n.to_string())
            .collect();
        assert_eq!(kept, ["z2/s1.2[1]", "alpha_n[3]"]);
    }
}
