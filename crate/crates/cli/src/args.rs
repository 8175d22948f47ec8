use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Fit and apply scaling laws for quantization-induced degradation.
#[derive(Debug, Parser)]
#[command(name = "qidlaw", version, disable_help_subcommand = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a measurement dataset and summarize it
    Validate(ValidateArgs),
    /// Fit a law to a measurement dataset
    Fit(FitArgs),
    /// Evaluate a fitted law at one point
    Predict(PredictArgs),
    /// Training tokens at which a model reaches a target degradation
    Invert(InvertArgs),
    /// Bit width at which a model meets a degradation budget
    Bits(BitsArgs),
    /// Token budgets for sizes x degradation targets x bit widths
    Table(TableArgs),
    /// Prediction grid over sizes, bit widths and log-spaced token counts
    Curve(CurveArgs),
    /// Judge training level from measured degradation
    Assess(AssessArgs),
    /// Generate a synthetic dataset from known law parameters
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LawKind {
    QidUnified,
    QidMarginal,
    Loss16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FactorArg {
    Tokens,
    Size,
    Bits,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write output here instead of standard output
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; inferred from the file extension when omitted
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub law: LawKind,
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; inferred from the file extension when omitted
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Factor for a marginal fit
    #[arg(long, value_enum)]
    pub factor: Option<FactorArg>,
    /// QiD at or below this is excluded from degradation fits (nats/token)
    #[arg(long, default_value_t = qidlaw::measurements::DEFAULT_POSITIVITY_FLOOR)]
    pub floor: f64,
    /// Comma-separated grouping keys: model_id, suite, quant_method, bits
    #[arg(long, value_delimiter = ',')]
    pub group_by: Vec<String>,
    /// Write the report here instead of standard output
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Law parameters (JSON); `fig6.json` and `fig7.json` are bundled
    #[arg(long)]
    pub params: String,
    /// 16-bit loss law, to add loss_16 and loss_q
    #[arg(long)]
    pub loss16_params: Option<String>,
    /// Non-embedding parameters
    #[arg(long, value_parser = crate::parse_quantity)]
    pub n: Option<f64>,
    /// Training tokens (`T` suffix = trillions)
    #[arg(long, value_parser = crate::parse_quantity)]
    pub d: Option<f64>,
    /// Bit width
    #[arg(long, value_parser = crate::parse_quantity)]
    pub p: Option<f64>,
    /// Vocabulary size for the worse-than-random flag
    #[arg(long)]
    pub vocab: Option<u64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub params: String,
    /// Target degradation (nats/token)
    #[arg(long, allow_negative_numbers = true)]
    pub qid: f64,
    #[arg(long, value_parser = crate::parse_quantity)]
    pub n: f64,
    #[arg(long, value_parser = crate::parse_quantity)]
    pub p: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BitsArgs {
    #[arg(long)]
    pub params: String,
    /// Degradation budget (nats/token)
    #[arg(long, allow_negative_numbers = true)]
    pub qid: f64,
    #[arg(long, value_parser = crate::parse_quantity)]
    pub n: f64,
    #[arg(long, value_parser = crate::parse_quantity)]
    pub d: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long)]
    pub params: String,
    /// Comma-separated model sizes (non-embedding parameters)
    #[arg(long, value_delimiter = ',', value_parser = crate::parse_quantity, required = true)]
    pub sizes: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = crate::parse_quantity, required = true)]
    pub bits: Vec<f64>,
    /// Comma-separated degradation targets
    #[arg(long, value_delimiter = ',', required = true)]
    pub qids: Vec<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TokenRangeArgs {
    #[arg(long, value_parser = crate::parse_quantity, default_value = "1e9")]
    pub tokens_min: f64,
    #[arg(long, value_parser = crate::parse_quantity, default_value = "1e14")]
    pub tokens_max: f64,
    #[arg(long, default_value_t = 51)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub params: String,
    #[arg(long)]
    pub loss16_params: Option<String>,
    #[arg(long, value_delimiter = ',', value_parser = crate::parse_quantity, required = true)]
    pub sizes: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = crate::parse_quantity, required = true)]
    pub bits: Vec<f64>,
    #[command(flatten)]
    pub range: TokenRangeArgs,
    #[arg(long)]
    pub vocab: Option<u64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    #[arg(long)]
    pub params: String,
    /// Degradation that counts as fully trained (nats/token)
    #[arg(long)]
    pub threshold: f64,
    /// Assess every quantized record of this dataset
    #[arg(long, conflicts_with_all = ["n", "d", "p", "qid"])]
    pub input: Option<PathBuf>,
    #[arg(long, value_parser = crate::parse_quantity, requires_all = ["d", "p", "qid"])]
    pub n: Option<f64>,
    #[arg(long, value_parser = crate::parse_quantity)]
    pub d: Option<f64>,
    #[arg(long, value_parser = crate::parse_quantity)]
    pub p: Option<f64>,
    /// Measured degradation
    #[arg(long, allow_negative_numbers = true)]
    pub qid: Option<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub params: String,
    #[arg(long)]
    pub loss16_params: Option<String>,
    #[arg(long, value_delimiter = ',', value_parser = crate::parse_quantity, required = true)]
    pub sizes: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = crate::parse_quantity, required = true)]
    pub bits: Vec<f64>,
    #[command(flatten)]
    pub range: TokenRangeArgs,
    /// Standard deviation of the log-space noise
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}
