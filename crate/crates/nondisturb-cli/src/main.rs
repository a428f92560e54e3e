//! Command-line front end: parses measurement descriptions from JSON files,
//! dispatches the library analyses, and emits deterministic reports.
//!
//! Exit codes: 0 success, 1 claim or validation failure, 2 input error,
//! 3 solver failure. JSON output is byte-identical for identical inputs,
//! flags, and seed: object keys are sorted and floating-point values are
//! printed with 15 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nondisturb::measurement::{Instrument, Povm};
use nondisturb::mrmeasure::{disturbance, disturbance_fixed, mr_pair, mr_sequence};
use nondisturb::qmat::HermMatrix;
use nondisturb::sdpcore::SeesawConfig;
use nondisturb::sequence::{
    macrorealism_report, prob_table, time_dependent_check, Scenario, StateSet,
};
use nondisturb::{catalog, compat, freeops, tol};
use serde::Serialize;
use serde_json::Value;

const EXIT_CLAIM: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "nondisturb",
    version,
    about = "Quantum measurement compatibility, disturbance, and signaling analyses"
)]
struct Cli {
    #[command(flatten)]
    flags: RunFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Relative eigenvalue floor for positive-semidefiniteness checks.
    #[arg(long, global = true, value_name = "EPS")]
    tol_psd: Option<f64>,
    /// Disturbance value below which a pair counts as nondisturbing.
    #[arg(long, global = true, value_name = "EPS")]
    tol_nd: Option<f64>,
    /// Restarts of the alternating optimization in searching commands.
    #[arg(long, global = true, default_value_t = 5, value_name = "N")]
    seesaw_restarts: usize,
    /// Sweep cap per restart of the alternating optimization.
    #[arg(long, global = true, default_value_t = 200, value_name = "N")]
    seesaw_iters: usize,
    /// Seed for every randomized component.
    #[arg(long, global = true, default_value_t = 0, value_name = "SEED")]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report format; csv exports only the probability table of `nsit`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Check a POVM, instrument, or scenario file and report its defects.
    Validate { input: PathBuf },
    /// Classify the full compatibility hierarchy of two POVMs.
    Compat { a: PathBuf, b: PathBuf },
    /// Disturbance of measuring `a` before `b`: instrument-optimized, or for
    /// the fixed instrument given with --instrument.
    Disturbance {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_name = "PATH")]
        instrument: Option<PathBuf>,
    },
    /// Sequence measure over the given POVMs: exact for two, permutation-
    /// summed alternating optimization beyond.
    Mr {
        #[arg(required = true, num_args = 2..)]
        povms: Vec<PathBuf>,
    },
    /// Probability table with arrow-of-time and signaling conditions; adds
    /// the evolution-aware pair conditions for three-slot scenarios.
    Nsit { scenario: PathBuf },
    /// Reference constructions with machine-checked claims.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Monotonicity margins of the disturbance-free operations.
    Freeops {
        /// Random scenarios per operation.
        #[arg(long, default_value_t = 200, value_name = "N")]
        trials: usize,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    /// List entry ids and summaries.
    List,
    /// Re-derive every claim of one entry.
    Verify { id: String },
}

/// Tolerance set echoed into every report, with command-line overrides
/// applied to the two interpretation thresholds.
#[derive(Serialize)]
struct Tolerances {
    psd: f64,
    nondisturbing: f64,
    hermiticity: f64,
    completeness: f64,
    solver_feasibility: f64,
    solver_gap: f64,
    sdp_gap: f64,
    jm_margin: f64,
    commutator: f64,
    span_residual: f64,
    prob_norm: f64,
    condition: f64,
    repeatable: f64,
    kernel_stochastic: f64,
    free_op_margin: f64,
    seesaw_improve: f64,
    seesaw_monotone: f64,
}

impl Tolerances {
    fn from_flags(flags: &RunFlags) -> Self {
        Self {
            psd: flags.tol_psd.unwrap_or(tol::PSD_REL),
            nondisturbing: flags.tol_nd.unwrap_or(tol::NONDISTURBING),
            hermiticity: tol::HERMITICITY,
            completeness: tol::COMPLETENESS,
            solver_feasibility: tol::SOLVER_FEAS,
            solver_gap: tol::SOLVER_GAP,
            sdp_gap: tol::SDP_GAP,
            jm_margin: tol::JM_MARGIN,
            commutator: tol::COMMUTATOR,
            span_residual: tol::SPAN_RESIDUAL,
            prob_norm: tol::PROB_NORM,
            condition: tol::CONDITION,
            repeatable: tol::REPEATABLE,
            kernel_stochastic: tol::KERNEL_STOCHASTIC,
            free_op_margin: tol::FREE_OP_MARGIN,
            seesaw_improve: tol::SEESAW_IMPROVE,
            seesaw_monotone: tol::SEESAW_MONOTONE,
        }
    }
}

#[derive(Serialize)]
struct Envelope {
    version: &'static str,
    command: String,
    inputs: Vec<String>,
    seed: u64,
    seesaw_restarts: usize,
    seesaw_iters: usize,
    format: &'static str,
    tolerances: Tolerances,
    report: Value,
}

/// A finished command: the rendered output plus the exit code its verdicts
/// imply.
struct Rendered {
    body: String,
    exit: u8,
}

fn main() -> ExitCode {
    // One BLAS thread per solve: concurrent SDPs parallelize at the trial
    // level instead, and reports stay reproducible.
    std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INPUT);
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(r) => {
            if let Err(e) = emit(cli.flags.out.as_deref(), &r.body) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_INPUT);
            }
            ExitCode::from(r.exit)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Caps internal parallelism to NONDISTURB_THREADS when set.
fn configure_threads() -> Result<(), String> {
    match std::env::var("NONDISTURB_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| format!("NONDISTURB_THREADS must be a positive integer, got {raw:?}"))?;
            if n == 0 {
                return Err("NONDISTURB_THREADS must be a positive integer".into());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| format!("thread pool: {e}"))
        }
    }
}

fn exit_code(e: &nondisturb::Error) -> u8 {
    use nondisturb::Error::*;
    match e {
        InvalidInput(_) | DimMismatch(_) | Io(_) | Serde(_) => EXIT_INPUT,
        SolverFailure(_) | Internal(_) => EXIT_SOLVER,
    }
}

fn emit(out: Option<&Path>, body: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> nondisturb::Result<Rendered> {
    let flags = &cli.flags;
    if flags.format == Format::Csv && !matches!(cli.command, Command::Nsit { .. }) {
        return Err(nondisturb::Error::InvalidInput(
            "csv output is only available for the probability table of `nsit`".into(),
        ));
    }
    let (name, inputs, report, exit) = match &cli.command {
        Command::Validate { input } => {
            let (report, exit) = cmd_validate(flags, input)?;
            ("validate", vec![input.clone()], report, exit)
        }
        Command::Compat { a, b } => {
            let report = cmd_compat(flags, a, b)?;
            ("compat", vec![a.clone(), b.clone()], report, 0)
        }
        Command::Disturbance { a, b, instrument } => {
            let report = cmd_disturbance(flags, a, b, instrument.as_deref())?;
            let mut inputs = vec![a.clone(), b.clone()];
            inputs.extend(instrument.clone());
            ("disturbance", inputs, report, 0)
        }
        Command::Mr { povms } => {
            let report = cmd_mr(flags, povms)?;
            ("mr", povms.clone(), report, 0)
        }
        Command::Nsit { scenario } => {
            let (report, csv) = cmd_nsit(flags, scenario)?;
            if flags.format == Format::Csv {
                return Ok(Rendered { body: csv, exit: 0 });
            }
            ("nsit", vec![scenario.clone()], report, 0)
        }
        Command::Catalog { action } => match action {
            CatalogAction::List => {
                let report = serde_json::to_value(catalog::entries())?;
                ("catalog", Vec::new(), report, 0)
            }
            CatalogAction::Verify { id } => {
                let entry = catalog::verify(id)?;
                let exit = if entry.all_passed { 0 } else { EXIT_CLAIM };
                let report = serde_json::to_value(&entry)?;
                ("catalog", Vec::new(), report, exit)
            }
        },
        Command::Freeops { trials } => {
            let suite = freeops::monotonicity_suite(flags.seed, *trials)?;
            let exit = if suite.all_passed { 0 } else { EXIT_CLAIM };
            (
                "freeops",
                Vec::new(),
                serde_json::to_value(&suite)?,
                exit,
            )
        }
    };
    let envelope = Envelope {
        version: env!("CARGO_PKG_VERSION"),
        command: name.to_string(),
        inputs: inputs
            .iter()
            .map(|p| p.to_string_lossy().into_owned())
            .collect(),
        seed: flags.seed,
        seesaw_restarts: flags.seesaw_restarts,
        seesaw_iters: flags.seesaw_iters,
        format: "json",
        tolerances: Tolerances::from_flags(flags),
        report,
    };
    Ok(Rendered {
        body: render_json(&serde_json::to_value(&envelope)?),
        exit,
    })
}

fn seesaw_config(flags: &RunFlags) -> SeesawConfig {
    SeesawConfig {
        max_iters: flags.seesaw_iters,
        restarts: flags.seesaw_restarts,
        seed: flags.seed,
        improve_tol: tol::SEESAW_IMPROVE,
    }
}

fn read_file(path: &Path) -> nondisturb::Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        nondisturb::Error::InvalidInput(format!("{}: {e}", path.display()))
    })
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> nondisturb::Result<T> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(nondisturb::Error::from)
}

#[derive(Serialize)]
struct ElementCheck {
    index: usize,
    min_eigenvalue: f64,
    psd_ok: bool,
}

#[derive(Serialize)]
struct ValidateReport {
    kind: &'static str,
    ok: bool,
    issues: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_outcomes: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    elements: Vec<ElementCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    completeness_defect: Option<f64>,
    /// Trace-norm form of the same defect; scales with dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    completeness_defect_trace: Option<f64>,
}

impl ValidateReport {
    fn failed(kind: &'static str, issue: String) -> Self {
        Self {
            kind,
            ok: false,
            issues: vec![issue],
            dim: None,
            n_outcomes: None,
            elements: Vec::new(),
            completeness_defect: None,
            completeness_defect_trace: None,
        }
    }
}

/// Semantic validation with diagnostics: malformed JSON is an input error,
/// while a well-formed description that fails its invariants is reported
/// with exit code 1.
fn cmd_validate(flags: &RunFlags, input: &Path) -> nondisturb::Result<(Value, u8)> {
    let text = read_file(input)?;
    let raw: Value = serde_json::from_str(&text)?;
    let report = if raw.get("elements").is_some() {
        validate_povm(flags, &raw)
    } else if raw.get("kraus").is_some() || raw.get("choi").is_some() {
        match serde_json::from_value::<Instrument>(raw) {
            Ok(i) => ValidateReport {
                kind: "instrument",
                ok: true,
                issues: Vec::new(),
                dim: Some(i.dim()),
                n_outcomes: Some(i.n_outcomes()),
                elements: Vec::new(),
                completeness_defect: None,
                completeness_defect_trace: None,
            },
            Err(e) => ValidateReport::failed("instrument", e.to_string()),
        }
    } else if raw.get("slots").is_some() {
        match Scenario::from_json(&text) {
            Ok(sc) => ValidateReport {
                kind: "scenario",
                ok: true,
                issues: Vec::new(),
                dim: Some(sc.dim()),
                n_outcomes: Some(sc.n()),
                elements: Vec::new(),
                completeness_defect: None,
                completeness_defect_trace: None,
            },
            Err(e) => ValidateReport::failed("scenario", e.to_string()),
        }
    } else {
        return Err(nondisturb::Error::InvalidInput(
            "unrecognized input: expected a POVM (elements), an instrument (kraus or choi), or a scenario (slots)"
                .into(),
        ));
    };
    let exit = if report.ok { 0 } else { EXIT_CLAIM };
    Ok((serde_json::to_value(&report)?, exit))
}

fn validate_povm(flags: &RunFlags, raw: &Value) -> ValidateReport {
    let elements: Vec<HermMatrix> =
        match serde_json::from_value(raw.get("elements").cloned().unwrap_or(Value::Null)) {
            Ok(e) => e,
            Err(e) => return ValidateReport::failed("povm", format!("elements: {e}")),
        };
    let mut issues = Vec::new();
    if elements.is_empty() {
        return ValidateReport::failed("povm", "no elements".into());
    }
    let dim = elements[0].dim();
    if elements.iter().any(|e| e.dim() != dim) {
        return ValidateReport::failed("povm", "elements differ in dimension".into());
    }
    if let Some(labels) = raw.get("labels") {
        match serde_json::from_value::<Vec<String>>(labels.clone()) {
            Ok(l) if l.len() != elements.len() => {
                issues.push(format!("{} labels for {} elements", l.len(), elements.len()));
            }
            Ok(_) => {}
            Err(e) => issues.push(format!("labels: {e}")),
        }
    }
    let tol_psd = flags.tol_psd.unwrap_or(tol::PSD_REL);
    let checks: Vec<ElementCheck> = elements
        .iter()
        .enumerate()
        .map(|(index, e)| {
            let min_eigenvalue = e.min_eigenvalue();
            let psd_ok = min_eigenvalue >= -tol_psd * e.op_norm().max(1.0);
            if !psd_ok {
                issues.push(format!(
                    "element {index} is not positive semidefinite: min eigenvalue {min_eigenvalue:.3e}"
                ));
            }
            ElementCheck {
                index,
                min_eigenvalue,
                psd_ok,
            }
        })
        .collect();
    let mut sum = HermMatrix::scaled_identity(dim, -1.0);
    for e in &elements {
        sum = sum.add(e).expect("dims checked");
    }
    let completeness_defect = sum.op_norm();
    let completeness_defect_trace: f64 = sum.eigenvalues().iter().map(|l| l.abs()).sum();
    if completeness_defect > tol::COMPLETENESS {
        issues.push(format!(
            "elements do not sum to the identity: defect {completeness_defect:.3e}"
        ));
    }
    ValidateReport {
        kind: "povm",
        ok: issues.is_empty(),
        issues,
        dim: Some(dim),
        n_outcomes: Some(elements.len()),
        elements: checks,
        completeness_defect: Some(completeness_defect),
        completeness_defect_trace: Some(completeness_defect_trace),
    }
}

fn cmd_compat(flags: &RunFlags, a: &Path, b: &Path) -> nondisturb::Result<Value> {
    let a: Povm = load(a)?;
    let b: Povm = load(b)?;
    let mut report = compat::classify(&a, &b)?;
    if let Some(t) = flags.tol_nd {
        report.disturbance_forward.nondisturbing = report.disturbance_forward.value < t;
        report.disturbance_backward.nondisturbing = report.disturbance_backward.value < t;
        report.nondisturbing_forward = report.disturbance_forward.nondisturbing;
        report.nondisturbing_backward = report.disturbance_backward.nondisturbing;
    }
    serde_json::to_value(&report).map_err(nondisturb::Error::from)
}

fn cmd_disturbance(
    flags: &RunFlags,
    a: &Path,
    b: &Path,
    instrument: Option<&Path>,
) -> nondisturb::Result<Value> {
    let a: Povm = load(a)?;
    let b: Povm = load(b)?;
    let mut report = match instrument {
        Some(path) => {
            let i: Instrument = load(path)?;
            disturbance_fixed(&a, &i, &b)?
        }
        None => disturbance(&a, &b)?,
    };
    if let Some(t) = flags.tol_nd {
        report.nondisturbing = report.value < t;
    }
    serde_json::to_value(&report).map_err(nondisturb::Error::from)
}

fn cmd_mr(flags: &RunFlags, paths: &[PathBuf]) -> nondisturb::Result<Value> {
    let povms: Vec<Povm> = paths.iter().map(|p| load(p)).collect::<Result<_, _>>()?;
    let refs: Vec<&Povm> = povms.iter().collect();
    let report = if refs.len() == 2 {
        mr_pair(refs[0], refs[1])?
    } else {
        mr_sequence(&refs, &seesaw_config(flags))?
    };
    serde_json::to_value(&report).map_err(nondisturb::Error::from)
}

#[derive(Serialize)]
struct NsitReport {
    table: nondisturb::sequence::ProbTable,
    conditions: nondisturb::sequence::TableReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_dependent: Option<nondisturb::sequence::PairSequenceReport>,
}

fn cmd_nsit(flags: &RunFlags, path: &Path) -> nondisturb::Result<(Value, String)> {
    let sc = Scenario::from_json(&read_file(path)?)?;
    let table = prob_table(&sc)?;
    let csv = table.to_csv();
    let conditions = macrorealism_report(&table)?;
    let time_dependent = if sc.n() == 3 {
        let identity = nondisturb::measurement::Channel::identity(sc.dim());
        let (ch12, ch23) = match sc.channels() {
            Some(chs) => (chs[0].clone(), chs[1].clone()),
            None => (identity.clone(), identity),
        };
        let mut pair = time_dependent_check(
            &sc.slot(0).povm,
            &sc.slot(1).instrument,
            &sc.slot(2).povm,
            &ch12,
            &ch23,
            StateSet::Full,
        )?;
        if let Some(t) = flags.tol_nd {
            pair.head.threshold = t;
            pair.head.satisfied = pair.head.defect < t;
            pair.tail.threshold = t;
            pair.tail.satisfied = pair.tail.defect < t;
            pair.satisfied = pair.head.satisfied && pair.tail.satisfied;
        }
        Some(pair)
    } else {
        None
    };
    let report = NsitReport {
        table,
        conditions,
        time_dependent,
    };
    Ok((serde_json::to_value(&report)?, csv))
}

/// Serializes with sorted keys and every float at 15 significant digits, so
/// identical runs produce identical bytes.
fn render_json(v: &Value) -> String {
    let mut out = String::new();
    push_json(v, &mut out);
    out.push('\n');
    out
}

fn push_json(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                let f = n.as_f64().expect("number is integral or float");
                let f = if f == 0.0 { 0.0 } else { f };
                let _ = write!(out, "{f:.14e}");
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serializes"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_json(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (key, value)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push(':');
                push_json(value, out);
            }
            out.push('}');
        }
    }
}
