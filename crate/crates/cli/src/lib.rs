//! Command-line front end for the `qidlaw` toolkit.
//!
//! [`execute`] runs one command against an argument vector and returns the
//! captured standard output, diagnostics and exit code, so the binary is a
//! thin wrapper and tests can drive every subcommand in-process.

mod args;
mod table;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;

use qidlaw::lawfit::{self, FitReport, LawParams, Loss16LawParams, QidLawParams};
use qidlaw::laws::{self, TokenRange};
use qidlaw::measurements::{self, DataFormat, Dataset, FitTarget, GroupField};
use qidlaw::synth::{self, SynthSpec};

pub use args::{Cli, Command, Format};
use args::*;
use table::{Cell, Table};

const FIG6_JSON: &str = include_str!("../../../params/fig6.json");
const FIG7_JSON: &str = include_str!("../../../params/fig7.json");

/// Result of one invocation.
#[derive(Debug, Clone, Default)]
pub struct CommandOutcome {
    /// 0 success, 1 runtime or domain failure, 2 usage error.
    pub exit_code: i32,
    /// Files written by the command.
    pub artifacts: Vec<PathBuf>,
    /// Lines destined for standard error.
    pub diagnostics: Vec<String>,
    /// Bytes destined for standard output.
    pub stdout: Vec<u8>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<qidlaw::Error> for Failure {
    fn from(e: qidlaw::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

struct Session {
    out: CommandOutcome,
}

impl Session {
    fn note(&mut self, line: impl Into<String>) {
        self.out.diagnostics.push(line.into());
    }

    /// Routes rendered output to `path` or to standard output.
    fn emit(&mut self, path: Option<&Path>, bytes: Vec<u8>) -> CmdResult {
        match path {
            Some(p) => {
                std::fs::write(p, &bytes)
                    .map_err(|e| Failure::Runtime(format!("writing {}: {e}", p.display())))?;
                self.out.artifacts.push(p.to_path_buf());
            }
            None => self.out.stdout.extend_from_slice(&bytes),
        }
        Ok(())
    }

    fn emit_table(&mut self, t: &Table, out: &OutputArgs) -> CmdResult {
        let mut buf = Vec::new();
        t.write(out.format, &mut buf)?;
        self.emit(out.output.as_deref(), buf)
    }
}

/// Parses a count or measurement: plain or scientific notation, with an
/// optional `T` suffix meaning trillions.
pub fn parse_quantity(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (body, scale) = match t.strip_suffix(['T', 't']) {
        Some(b) => (b, 1e12),
        None => (t, 1.0),
    };
    let v: f64 = body
        .parse()
        .map_err(|_| format!("`{text}` is not a number"))?;
    let v = v * scale;
    if !v.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(v)
}

/// Reads a params document from a path. The bundled `fig6.json` and
/// `fig7.json` are used when no such file exists.
fn read_params(spec: &str) -> Result<LawParams, Failure> {
    let path = Path::new(spec);
    let text = if path.exists() {
        std::fs::read_to_string(path)
            .map_err(|e| Failure::Runtime(format!("reading {spec}: {e}")))?
    } else {
        match path.file_name().and_then(|f| f.to_str()) {
            Some("fig6.json") | Some("fig6") => FIG6_JSON.to_string(),
            Some("fig7.json") | Some("fig7") => FIG7_JSON.to_string(),
            _ => return Err(Failure::Runtime(format!("params file {spec} not found"))),
        }
    };
    LawParams::from_json(&text).map_err(|e| Failure::Runtime(format!("{spec}: {e}")))
}

fn read_qid_params(spec: &str) -> Result<QidLawParams, Failure> {
    match read_params(spec)? {
        LawParams::QidUnified(p) => Ok(p),
        other => Err(Failure::Runtime(format!(
            "{spec} holds a {} law; this command needs qid_unified",
            other.law_name()
        ))),
    }
}

fn read_loss16_params(spec: &str) -> Result<Loss16LawParams, Failure> {
    match read_params(spec)? {
        LawParams::Loss16(p) => Ok(p),
        other => Err(Failure::Runtime(format!(
            "{spec} holds a {} law; expected loss16",
            other.law_name()
        ))),
    }
}

fn load_input(path: &Path, format: Option<Format>) -> Result<Dataset, Failure> {
    let format = format.map(|f| match f {
        Format::Csv => DataFormat::Csv,
        Format::Json => DataFormat::Json,
    });
    measurements::load_dataset_path(path, format)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn to_count(what: &str, v: f64) -> Result<u64, Failure> {
    if v >= 1.0 && v.fract() == 0.0 && v <= 9.007_199_254_740_992e15 {
        Ok(v as u64)
    } else {
        Err(Failure::Runtime(format!("{what} must be a positive whole count, got {v}")))
    }
}

/// Runs one command. `argv[0]` is the program name.
pub fn execute<I, T>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CommandOutcome {
                    stdout: rendered.into_bytes(),
                    ..CommandOutcome::default()
                },
                _ => CommandOutcome {
                    exit_code: 2,
                    diagnostics: rendered.lines().map(str::to_string).collect(),
                    ..CommandOutcome::default()
                },
            };
        }
    };

    let mut session = Session {
        out: CommandOutcome::default(),
    };
    let result = match cli.command {
        Command::Validate(a) => validate(&mut session, a),
        Command::Fit(a) => fit(&mut session, a),
        Command::Predict(a) => predict(&mut session, a),
        Command::Invert(a) => invert(&mut session, a),
        Command::Bits(a) => bits(&mut session, a),
        Command::Table(a) => token_table(&mut session, a),
        Command::Curve(a) => curve(&mut session, a),
        Command::Assess(a) => assess(&mut session, a),
        Command::Synth(a) => synthesize(&mut session, a),
    };
    let mut out = session.out;
    match result {
        Ok(()) => out.exit_code = 0,
        Err(Failure::Usage(msg)) => {
            out.exit_code = 2;
            out.diagnostics.push(format!("error: {msg}"));
            out.diagnostics.push("For more information, try '--help'.".into());
        }
        Err(Failure::Runtime(msg)) => {
            out.exit_code = 1;
            out.diagnostics.push(format!("error: {msg}"));
        }
    }
    out
}

fn validate(s: &mut Session, a: ValidateArgs) -> CmdResult {
    let ds = load_input(&a.input, a.format)?;
    let records = ds.records();
    let baseline = records.iter().filter(|r| r.is_baseline()).count();
    let non_positive = records
        .iter()
        .filter(|r| !r.is_baseline() && r.qid() <= 0.0)
        .count();
    let suites: BTreeSet<&str> = records.iter().map(|r| r.suite()).collect();
    let methods: BTreeSet<&str> = records.iter().map(|r| r.quant_method()).collect();
    let join = |set: BTreeSet<&str>| set.into_iter().collect::<Vec<_>>().join(",");
    let text = format!(
        "records: {}\nquantized: {}\nbaseline: {}\nnon_positive_qid: {}\nsuites: {}\nquant_methods: {}\n",
        records.len(),
        records.len() - baseline,
        baseline,
        non_positive,
        join(suites),
        join(methods),
    );
    s.emit(None, text.into_bytes())
}

#[derive(serde::Serialize)]
#[serde(untagged)]
enum FitEntry {
    Report {
        group: String,
        report: FitReport<LawParams>,
    },
    Empty {
        group: String,
        empty: &'static str,
        excluded_count: usize,
    },
}

fn fit(s: &mut Session, a: FitArgs) -> CmdResult {
    let group_by = a
        .group_by
        .iter()
        .filter(|k| !k.trim().is_empty())
        .map(|k| k.parse::<GroupField>().map_err(|e| Failure::Usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let factor = match (a.law, a.factor) {
        (LawKind::QidMarginal, None) => {
            return Err(Failure::Usage("--law qid-marginal requires --factor".into()))
        }
        (LawKind::QidMarginal, Some(f)) => Some(match f {
            FactorArg::Tokens => lawfit::Factor::Tokens,
            FactorArg::Size => lawfit::Factor::Size,
            FactorArg::Bits => lawfit::Factor::Bits,
        }),
        (_, Some(_)) => return Err(Failure::Usage("--factor applies only to qid-marginal".into())),
        (_, None) => None,
    };

    let ds = load_input(&a.input, a.format)?;
    let target = match a.law {
        LawKind::Loss16 => FitTarget::Loss16,
        _ => FitTarget::Qid,
    };
    let sets = measurements::prepare_fit_points(&ds, target, a.floor, &group_by)?;

    let mut entries = Vec::new();
    for set in &sets {
        let label = set.group.as_ref().map(ToString::to_string);
        let context = |e: qidlaw::Error| match &label {
            Some(g) => Failure::Runtime(format!("group {g}: {e}")),
            None => Failure::Runtime(e.to_string()),
        };
        if let Some(reason) = set.empty_reason() {
            if group_by.is_empty() {
                return Err(Failure::Runtime(format!("no usable points ({reason})")));
            }
            s.note(format!("group {}: no usable points ({reason})", label.as_deref().unwrap_or("")));
            entries.push(FitEntry::Empty {
                group: label.clone().unwrap_or_default(),
                empty: reason,
                excluded_count: set.excluded_count,
            });
            continue;
        }
        let report: FitReport<LawParams> = match (a.law, factor) {
            (LawKind::QidUnified, _) => lawfit::fit_qid_unified(set).map_err(context)?.erase(),
            (LawKind::QidMarginal, Some(f)) => lawfit::fit_qid_marginal(set, f).map_err(context)?.erase(),
            (LawKind::Loss16, _) => lawfit::fit_loss16(set).map_err(context)?.erase(),
            (LawKind::QidMarginal, None) => unreachable!("checked above"),
        };
        if set.excluded_count > 0 {
            s.note(format!(
                "{}excluded {} record(s)",
                label.as_ref().map(|g| format!("group {g}: ")).unwrap_or_default(),
                set.excluded_count
            ));
        }
        if let Some(w) = &report.condition_warning {
            s.note(format!("warning: {w}"));
        }
        for w in &report.warnings {
            s.note(format!("warning: {w}"));
        }
        entries.push(FitEntry::Report {
            group: label.unwrap_or_default(),
            report,
        });
    }

    let mut buf = if group_by.is_empty() {
        match entries.into_iter().next() {
            Some(FitEntry::Report { report, .. }) => serde_json::to_vec_pretty(&report)?,
            _ => return Err(Failure::Runtime("no fit sets".into())),
        }
    } else {
        serde_json::to_vec_pretty(&entries)?
    };
    buf.push(b'\n');
    s.emit(a.output.as_deref(), buf)
}

fn require<T>(v: Option<T>, flag: &str, law: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("{flag} is required for a {law} law")))
}

fn predict(s: &mut Session, a: PredictArgs) -> CmdResult {
    let params = read_params(&a.params)?;
    match params {
        LawParams::QidUnified(q) => {
            let loss16 = a.loss16_params.as_deref().map(read_loss16_params).transpose()?;
            let n = require(a.n, "--n", "qid_unified")?;
            let d = require(a.d, "--d", "qid_unified")?;
            let p = require(a.p, "--p", "qid_unified")?;
            let row = laws::predict_point(&q, loss16.as_ref(), n, d, p, a.vocab)?;
            let mut buf = Vec::new();
            match a.out.format {
                Format::Csv => laws::write_rows_csv(&[row], &mut buf)?,
                Format::Json => laws::write_rows_json(&[row], &mut buf)?,
            }
            s.emit(a.out.output.as_deref(), buf)
        }
        LawParams::QidMarginal(m) => {
            let x = match m.factor {
                lawfit::Factor::Tokens => require(a.d, "--d", "tokens marginal")?,
                lawfit::Factor::Size => require(a.n, "--n", "size marginal")?,
                lawfit::Factor::Bits => require(a.p, "--p", "bits marginal")?,
            };
            let q = laws::eval_marginal(&m, x)?;
            let mut t = Table::new(vec!["factor", "value", "qid"]);
            t.push(vec![m.factor.name().into(), x.into(), q.into()]);
            s.emit_table(&t, &a.out)
        }
        LawParams::Loss16(l) => {
            let n = require(a.n, "--n", "loss16")?;
            let d = require(a.d, "--d", "loss16")?;
            let loss = laws::eval_loss16(&l, n, d)?;
            let mut t = Table::new(vec!["n_nonembed", "tokens", "loss_16"]);
            t.push(vec![n.into(), d.into(), loss.into()]);
            s.emit_table(&t, &a.out)
        }
    }
}

fn invert(s: &mut Session, a: InvertArgs) -> CmdResult {
    let q = read_qid_params(&a.params)?;
    let tokens = laws::invert_tokens(&q, a.qid, a.n, a.p)?;
    let mut t = Table::new(vec!["n_nonembed", "bits", "qid", "tokens", "tokens_trillion"]);
    t.push(vec![a.n.into(), a.p.into(), a.qid.into(), tokens.into(), (tokens / 1e12).into()]);
    s.emit_table(&t, &a.out)
}

fn bits(s: &mut Session, a: BitsArgs) -> CmdResult {
    let q = read_qid_params(&a.params)?;
    let est = laws::invert_bits(&q, a.qid, a.n, a.d)?;
    if est.baseline_suffices {
        s.note("baseline precision suffices: the budget is met only above 16 bits");
    }
    let mut t = Table::new(vec!["n_nonembed", "tokens", "qid", "bits", "baseline_suffices"]);
    t.push(vec![a.n.into(), a.d.into(), a.qid.into(), est.bits.into(), est.baseline_suffices.into()]);
    s.emit_table(&t, &a.out)
}

fn token_table(s: &mut Session, a: TableArgs) -> CmdResult {
    let q = read_qid_params(&a.params)?;
    let mut t = Table::new(vec!["n_nonembed", "qid", "bits", "tokens", "tokens_trillion"]);
    for &n in &a.sizes {
        for &target in &a.qids {
            for &p in &a.bits {
                let tokens = laws::invert_tokens(&q, target, n, p)?;
                t.push(vec![n.into(), target.into(), p.into(), tokens.into(), (tokens / 1e12).into()]);
            }
        }
    }
    s.emit_table(&t, &a.out)
}

fn token_range(r: &TokenRangeArgs) -> TokenRange {
    TokenRange {
        min: r.tokens_min,
        max: r.tokens_max,
        steps: r.steps,
    }
}

fn curve(s: &mut Session, a: CurveArgs) -> CmdResult {
    let q = read_qid_params(&a.params)?;
    let loss16 = a.loss16_params.as_deref().map(read_loss16_params).transpose()?;
    if a.vocab.is_some() && loss16.is_none() {
        s.note("--vocab has no effect without --loss16-params");
    }
    let rows = laws::curve_grid(&q, loss16.as_ref(), &a.sizes, &token_range(&a.range), &a.bits, a.vocab)?;
    let mut buf = Vec::new();
    match a.out.format {
        Format::Csv => laws::write_rows_csv(&rows, &mut buf)?,
        Format::Json => laws::write_rows_json(&rows, &mut buf)?,
    }
    s.emit(a.out.output.as_deref(), buf)
}

const ASSESS_HEADER: [&str; 11] = [
    "model_id",
    "n_nonembed",
    "tokens",
    "bits",
    "measured_qid",
    "threshold_qid",
    "required_tokens",
    "token_ratio",
    "verdict",
    "noise",
    "record",
];

fn assessment_row(model_id: &str, n: u64, bits: f64, a: &laws::TrainingAssessment, record: Option<u64>) -> Vec<Cell> {
    vec![
        model_id.into(),
        n.into(),
        a.actual_tokens.into(),
        bits.into(),
        a.measured_qid.into(),
        a.threshold_qid.into(),
        a.required_tokens.into(),
        a.token_ratio.into(),
        a.verdict.as_str().into(),
        a.noise.into(),
        record.into(),
    ]
}

fn assess(s: &mut Session, a: AssessArgs) -> CmdResult {
    let q = read_qid_params(&a.params)?;
    let mut t = Table::new(ASSESS_HEADER.to_vec());
    match (&a.input, a.n) {
        (Some(path), _) => {
            let ds = load_input(path, None)?;
            let mut skipped = 0;
            for (i, r) in ds.records().iter().enumerate() {
                if r.is_baseline() {
                    skipped += 1;
                    continue;
                }
                let res = laws::assess_training_level(&q, r, a.threshold)?;
                t.push(assessment_row(r.model_id(), r.n_nonembed(), r.bits(), &res, Some(i as u64 + 1)));
            }
            if skipped > 0 {
                s.note(format!("skipped {skipped} baseline (16-bit) record(s)"));
            }
        }
        (None, Some(n)) => {
            let (d, p, qid) = match (a.d, a.p, a.qid) {
                (Some(d), Some(p), Some(qid)) => (d, p, qid),
                _ => return Err(Failure::Usage("--n needs --d, --p and --qid".into())),
            };
            let n = to_count("--n", n)?;
            let d = to_count("--d", d)?;
            let res = laws::assess_measurement(&q, n, d, p, qid, a.threshold)?;
            t.push(assessment_row("", n, p, &res, None));
        }
        (None, None) => {
            return Err(Failure::Usage(
                "assess needs --input, or --n with --d, --p and --qid".into(),
            ))
        }
    }
    s.emit_table(&t, &a.out)
}

fn synthesize(s: &mut Session, a: SynthArgs) -> CmdResult {
    let q = read_qid_params(&a.params)?;
    let loss16 = a.loss16_params.as_deref().map(read_loss16_params).transpose()?;
    let sizes = a
        .sizes
        .iter()
        .map(|&n| to_count("size", n))
        .collect::<Result<Vec<_>, _>>()?;
    let token_steps = token_range(&a.range)
        .values()?
        .into_iter()
        .map(|d| to_count("tokens", d))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SynthSpec {
        qid_params: q,
        loss16_params: loss16,
        sizes,
        token_steps,
        bit_list: a.bits.clone(),
        noise_sigma: a.sigma,
        seed: a.seed,
    };
    let ds = synth::generate_synthetic(&spec)?;
    let format = match a.out.format {
        Format::Csv => DataFormat::Csv,
        Format::Json => DataFormat::Json,
    };
    let mut buf = Vec::new();
    measurements::write_dataset(&ds, format, &mut buf)?;
    s.emit(a.out.output.as_deref(), buf)?;
    match &a.out.output {
        Some(path) => {
            let mut side = path.clone().into_os_string();
            side.push(".meta.json");
            let mut bytes = synth::sidecar_json(&spec).into_bytes();
            bytes.push(b'\n');
            s.emit(Some(Path::new(&side)), bytes)?;
        }
        None => s.note(format!(
            "metadata: generator {}, seed {} (pass --output to write the sidecar file)",
            synth::GENERATOR_ID,
            spec.seed
        )),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities() {
        assert_eq!(parse_quantity("1e9").unwrap(), 1e9);
        assert_eq!(parse_quantity("4.05e11").unwrap(), 4.05e11);
        assert_eq!(parse_quantity("1.5T").unwrap(), 1.5e12);
        assert_eq!(parse_quantity("100T").unwrap(), 1e14);
        assert_eq!(parse_quantity(" 206000000000 ").unwrap(), 2.06e11);
        assert!(parse_quantity("lots").is_err());
        assert!(parse_quantity("1e999").is_err());
    }

    #[test]
    fn bundled_params() {
        assert_eq!(read_qid_params("fig6.json").unwrap(), qidlaw::PYTHIA_GPTQ_QID);
        assert_eq!(read_loss16_params("fig7.json").unwrap(), qidlaw::PYTHIA_LOSS16);
        assert!(read_qid_params("fig7.json").is_err());
        assert!(read_params("nope.json").is_err());
    }
}
