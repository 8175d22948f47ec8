//! Scaling laws for quantization-induced degradation (QiD).
//!
//! QiD is the loss increase caused by low-bit weight quantization,
//! `loss_q - loss_16`. The unified law models it as
//! `k * D^beta / (N^alpha * P^gamma)` over non-embedding parameters `N`,
//! training tokens `D` and bit width `P`. Together with the 16-bit loss law
//! `[(n_c/N)^(alpha_n/alpha_d) + d_c/D]^alpha_d` it predicts quantized loss,
//! the token budget at which a model reaches a given degradation, and when
//! a quantized model falls below random guessing.
//!
//! A degradation of `q` nats/token scales per-token likelihood by `e^-q`.

pub mod error;
pub mod lawfit;
pub mod laws;
pub mod linalg;
pub mod measurements;
pub mod simplex;
pub mod synth;

pub use error::{Error, Result};
pub use lawfit::{
    fit_loss16, fit_qid_marginal, fit_qid_unified, Factor, FitReport, LawParams, Loss16LawParams,
    MarginalLawParams, QidLawParams,
};
pub use laws::{
    assess_measurement, assess_training_level, curve_grid, eval_loss16, eval_loss_q, eval_qid, invert_bits,
    invert_tokens, predict_point, random_guess_loss, PredictionRow, TokenRange,
    TrainingAssessment, Verdict,
};
pub use measurements::{
    compute_qid, load_dataset, prepare_fit_points, DataFormat, Dataset, FitSet, FitTarget,
    MeasurementRecord,
};
pub use synth::{generate_synthetic, SynthSpec};

/// Unified-law constants fitted on GPTQ-quantized Pythia checkpoints.
pub const PYTHIA_GPTQ_QID: QidLawParams = QidLawParams {
    k: 0.017,
    alpha: 0.2261,
    beta: 0.5251,
    gamma: 5.4967,
};

/// 16-bit loss-law constants fitted on the Pythia suite.
pub const PYTHIA_LOSS16: Loss16LawParams = Loss16LawParams {
    n_c: 4.74e19,
    d_c: 7.63e10,
    alpha_n: 0.045,
    alpha_d: 0.399,
};
