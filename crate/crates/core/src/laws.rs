//! Forward evaluation and inversion of fitted laws.
//!
//! Everything is computed in natural-log space with a single final
//! exponentiation, so extrapolation to 1e14+ tokens never forms `n^alpha`
//! or `p^gamma` directly.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lawfit::{Factor, Loss16LawParams, MarginalLawParams, QidLawParams};
use crate::measurements::{MeasurementRecord, BASELINE_BITS};

fn check_positive(field: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::domain(format!("{field} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn check_size(n: f64) -> Result<()> {
    if !(n.is_finite() && n >= 1.0) {
        return Err(Error::domain(format!("n must be >= 1, got {n}")));
    }
    Ok(())
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(format!("{what} is not representable (overflow)")))
    }
}

/// `ln qid` for strictly positive `d`.
fn ln_qid(params: &QidLawParams, n: f64, d: f64, p: f64) -> f64 {
    params.k.ln() + params.beta * d.ln() - params.alpha * n.ln() - params.gamma * p.ln()
}

/// Degradation predicted by the unified law. `d = 0` gives exactly 0.
pub fn eval_qid(params: &QidLawParams, n: f64, d: f64, p: f64) -> Result<f64> {
    check_positive("k", params.k)?;
    check_size(n)?;
    if !(d.is_finite() && d >= 0.0) {
        return Err(Error::domain(format!("d must be >= 0, got {d}")));
    }
    check_positive("p", p)?;
    if d == 0.0 {
        return Ok(0.0);
    }
    finite("qid", ln_qid(params, n, d, p).exp())
}

/// Evaluates a marginal law at a value of its factor.
pub fn eval_marginal(params: &MarginalLawParams, x: f64) -> Result<f64> {
    check_positive("coefficient", params.coefficient)?;
    check_positive(params.factor.name(), x)?;
    let sign = match params.factor {
        Factor::Tokens => 1.0,
        Factor::Size | Factor::Bits => -1.0,
    };
    finite("qid", (params.coefficient.ln() + sign * params.exponent * x.ln()).exp())
}

/// 16-bit loss law from log-domain inputs; the two terms are combined with
/// log-sum-exp so neither can overflow.
pub(crate) fn loss16_from_logs(
    ln_n_c: f64,
    ln_d_c: f64,
    alpha_n: f64,
    alpha_d: f64,
    ln_n: f64,
    ln_d: f64,
) -> f64 {
    let size_term = (alpha_n / alpha_d) * (ln_n_c - ln_n);
    let data_term = ln_d_c - ln_d;
    let hi = size_term.max(data_term);
    let lo = size_term.min(data_term);
    let ln_sum = hi + (lo - hi).exp().ln_1p();
    (alpha_d * ln_sum).exp()
}

pub fn eval_loss16(params: &Loss16LawParams, n: f64, d: f64) -> Result<f64> {
    params.validate()?;
    check_size(n)?;
    if !(d.is_finite() && d >= 1.0) {
        return Err(Error::domain(format!("d must be >= 1, got {d}")));
    }
    finite(
        "loss",
        loss16_from_logs(
            params.n_c.ln(),
            params.d_c.ln(),
            params.alpha_n,
            params.alpha_d,
            n.ln(),
            d.ln(),
        ),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub loss_q: f64,
    pub qid: f64,
    pub loss_16: f64,
}

/// Quantized loss as 16-bit loss plus predicted degradation.
pub fn eval_loss_q(
    qid_params: &QidLawParams,
    loss16_params: &Loss16LawParams,
    n: f64,
    d: f64,
    p: f64,
) -> Result<LossBreakdown> {
    let qid = eval_qid(qid_params, n, d, p)?;
    let loss_16 = eval_loss16(loss16_params, n, d)?;
    Ok(LossBreakdown {
        loss_q: loss_16 + qid,
        qid,
        loss_16,
    })
}

/// Training tokens at which the unified law reaches `qid_target`.
pub fn invert_tokens(params: &QidLawParams, qid_target: f64, n: f64, p: f64) -> Result<f64> {
    check_positive("k", params.k)?;
    check_positive("qid target", qid_target)?;
    check_size(n)?;
    check_positive("p", p)?;
    if params.beta.is_nan() || params.beta <= 0.0 {
        return Err(Error::domain(format!(
            "beta must be positive to invert for tokens, got {}",
            params.beta
        )));
    }
    let ln_d = (qid_target.ln() + params.alpha * n.ln() + params.gamma * p.ln() - params.k.ln())
        / params.beta;
    finite("tokens", ln_d.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BitsEstimate {
    pub bits: f64,
    /// The budget is met only above 16 bits, i.e. the unquantized baseline suffices.
    pub baseline_suffices: bool,
}

/// Bit width at which the unified law predicts exactly `qid_budget`.
pub fn invert_bits(params: &QidLawParams, qid_budget: f64, n: f64, d: f64) -> Result<BitsEstimate> {
    check_positive("k", params.k)?;
    check_positive("qid budget", qid_budget)?;
    check_size(n)?;
    check_positive("d", d)?;
    if params.gamma.is_nan() || params.gamma <= 0.0 {
        return Err(Error::domain(format!(
            "gamma must be positive to invert for bits, got {}",
            params.gamma
        )));
    }
    let ln_p = (params.k.ln() + params.beta * d.ln() - qid_budget.ln() - params.alpha * n.ln())
        / params.gamma;
    let bits = finite("bits", ln_p.exp())?;
    Ok(BitsEstimate {
        bits,
        baseline_suffices: bits > BASELINE_BITS,
    })
}

/// Cross-entropy of a uniform guess over the vocabulary, `ln(vocab_size)`.
pub fn random_guess_loss(vocab_size: u64) -> Result<f64> {
    if vocab_size < 1 {
        return Err(Error::domain("vocab size must be >= 1"));
    }
    Ok((vocab_size as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Undertrained,
    FullyTrainedByQid,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Undertrained => "undertrained",
            Verdict::FullyTrainedByQid => "fully-trained-by-qid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainingAssessment {
    pub measured_qid: f64,
    pub threshold_qid: f64,
    /// Tokens at which the law predicts `threshold_qid` for this size and bit width.
    pub required_tokens: f64,
    pub actual_tokens: u64,
    pub token_ratio: f64,
    pub verdict: Verdict,
    /// Measured degradation was negative, i.e. within evaluation noise.
    pub noise: bool,
}

/// Judges training level from a measured degradation: a checkpoint whose
/// QiD has not reached `threshold` still has precision headroom.
pub fn assess_training_level(
    params: &QidLawParams,
    record: &MeasurementRecord,
    threshold: f64,
) -> Result<TrainingAssessment> {
    assess_measurement(
        params,
        record.n_nonembed(),
        record.tokens(),
        record.bits(),
        record.qid(),
        threshold,
    )
}

/// [`assess_training_level`] for a bare measurement.
pub fn assess_measurement(
    params: &QidLawParams,
    n_nonembed: u64,
    tokens: u64,
    bits: f64,
    measured_qid: f64,
    threshold: f64,
) -> Result<TrainingAssessment> {
    check_positive("threshold", threshold)?;
    if !measured_qid.is_finite() {
        return Err(Error::domain(format!("measured qid must be finite, got {measured_qid}")));
    }
    if !(bits > 0.0 && bits < BASELINE_BITS) {
        return Err(Error::domain(format!(
            "assessment needs a quantized measurement (0 < bits < 16), got {bits}"
        )));
    }
    let required_tokens = invert_tokens(params, threshold, n_nonembed as f64, bits)?;
    Ok(TrainingAssessment {
        measured_qid,
        threshold_qid: threshold,
        required_tokens,
        actual_tokens: tokens,
        token_ratio: tokens as f64 / required_tokens,
        verdict: if measured_qid >= threshold {
            Verdict::FullyTrainedByQid
        } else {
            Verdict::Undertrained
        },
        noise: measured_qid < 0.0,
    })
}

/// Log-spaced token counts from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl TokenRange {
    /// The grid values, rounded to whole tokens. Endpoints are exact.
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min.is_finite() && self.min >= 1.0) {
            return Err(Error::domain(format!("token range min must be >= 1, got {}", self.min)));
        }
        if !(self.max.is_finite() && self.max >= self.min) {
            return Err(Error::domain(format!(
                "token range max must be >= min, got {}",
                self.max
            )));
        }
        if self.steps < 2 {
            return Err(Error::domain(format!("token range needs >= 2 steps, got {}", self.steps)));
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        let last = self.steps - 1;
        Ok((0..self.steps)
            .map(|i| match i {
                0 => self.min,
                i if i == last => self.max,
                i => (lo + (hi - lo) * i as f64 / last as f64).exp().round(),
            })
            .collect())
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionRow {
    pub n_nonembed: f64,
    pub tokens: f64,
    pub bits: f64,
    pub qid: f64,
    pub loss_16: Option<f64>,
    pub loss_q: Option<f64>,
    pub worse_than_random: Option<bool>,
}

/// Evaluates every available quantity at one point. The worse-than-random
/// flag needs both a loss law and a vocabulary size.
pub fn predict_point(
    qid_params: &QidLawParams,
    loss16_params: Option<&Loss16LawParams>,
    n: f64,
    d: f64,
    p: f64,
    vocab_size: Option<u64>,
) -> Result<PredictionRow> {
    let (qid, loss_16, loss_q) = match loss16_params {
        Some(l) => {
            let b = eval_loss_q(qid_params, l, n, d, p)?;
            (b.qid, Some(b.loss_16), Some(b.loss_q))
        }
        None => (eval_qid(qid_params, n, d, p)?, None, None),
    };
    let bound = vocab_size.map(random_guess_loss).transpose()?;
    let worse_than_random = match (loss_q, bound) {
        (Some(lq), Some(b)) => Some(lq >= b),
        _ => None,
    };
    Ok(PredictionRow {
        n_nonembed: n,
        tokens: d,
        bits: p,
        qid,
        loss_16,
        loss_q,
        worse_than_random,
    })
}

/// Evaluates the laws over sizes x bit widths x token counts, ordered by
/// size, then bits, then ascending tokens.
pub fn curve_grid(
    qid_params: &QidLawParams,
    loss16_params: Option<&Loss16LawParams>,
    sizes: &[f64],
    tokens: &TokenRange,
    bit_list: &[f64],
    vocab_size: Option<u64>,
) -> Result<Vec<PredictionRow>> {
    if sizes.is_empty() {
        return Err(Error::domain("sizes must not be empty"));
    }
    if bit_list.is_empty() {
        return Err(Error::domain("bit list must not be empty"));
    }
    let token_values = tokens.values()?;
    let mut rows = Vec::with_capacity(sizes.len() * bit_list.len() * token_values.len());
    for &n in sizes {
        for &p in bit_list {
            for &d in &token_values {
                rows.push(predict_point(qid_params, loss16_params, n, d, p, vocab_size)?);
            }
        }
    }
    Ok(rows)
}

pub const GRID_CSV_HEADER: [&str; 7] = [
    "n_nonembed",
    "tokens",
    "bits",
    "qid",
    "loss_16",
    "loss_q",
    "worse_than_random",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Grid rows as CSV; columns that were not computed are left empty.
pub fn write_rows_csv<W: Write>(rows: &[PredictionRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(GRID_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.n_nonembed.to_string(),
            r.tokens.to_string(),
            r.bits.to_string(),
            r.qid.to_string(),
            opt(r.loss_16),
            opt(r.loss_q),
            opt(r.worse_than_random),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_json<W: Write>(rows: &[PredictionRow], mut sink: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut sink, rows)?;
    sink.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig6() -> QidLawParams {
        QidLawParams::new(0.017, 0.2261, 0.5251, 5.4967).unwrap()
    }

    fn fig7() -> Loss16LawParams {
        Loss16LawParams::new(4.74e19, 7.63e10, 0.045, 0.399).unwrap()
    }

    // Expected values below were computed with 40-digit mpmath evaluation of
    // the closed-form laws, independently of this module.

    #[test]
    fn qid_fixtures() {
        let q = eval_qid(&fig6(), 1e9, 1e12, 4.0).unwrap();
        assert!((q - 0.153_959_243).abs() < 1e-9, "{q}");
        let q = eval_qid(&fig6(), 7e9, 1e14, 2.0).unwrap();
        assert!((q - 50.257_476_397).abs() < 1e-7, "{q}");
    }

    #[test]
    fn qid_zero_tokens_is_zero() {
        assert_eq!(eval_qid(&fig6(), 1e9, 0.0, 4.0).unwrap(), 0.0);
        let odd = QidLawParams::new(3.0, 1.0, 2.0, 0.1).unwrap();
        assert_eq!(eval_qid(&odd, 5.0, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn qid_domain_errors() {
        assert!(eval_qid(&fig6(), 1e9, 1e12, 0.0).is_err());
        assert!(eval_qid(&fig6(), 1e9, 1e12, -2.0).is_err());
        assert!(eval_qid(&fig6(), 0.5, 1e12, 4.0).is_err());
        assert!(eval_qid(&fig6(), 1e9, -1.0, 4.0).is_err());
        let bad = QidLawParams { k: 0.0, ..fig6() };
        assert!(eval_qid(&bad, 1e9, 1e12, 4.0).is_err());
    }

    #[test]
    fn loss16_fixtures() {
        let l = eval_loss16(&fig7(), 1e9, 2.06e11).unwrap();
        assert!((l - 3.050_538_090).abs() < 1e-8, "{l}");
        let limit = eval_loss16(&fig7(), 1e9, 1e18).unwrap();
        assert!(((limit - 3.022_804_258) / 3.022_804_258).abs() < 1e-6, "{limit}");
        assert!(eval_loss16(&fig7(), 1e9, 1e10).unwrap() > eval_loss16(&fig7(), 1e9, 1e12).unwrap());
    }

    #[test]
    fn loss_q_composition() {
        let b = eval_loss_q(&fig6(), &fig7(), 1e9, 2.06e11, 4.0).unwrap();
        assert!((b.qid - 0.067_161_045).abs() < 1e-8);
        assert!((b.loss_16 - 3.050_538_090).abs() < 1e-8);
        assert!((b.loss_q - 3.117_699_135).abs() < 1e-8);
        assert_eq!(b.loss_q, b.loss_16 + b.qid);

        let b = eval_loss_q(&fig6(), &fig7(), 1e9, 1e12, 16.0).unwrap();
        assert!((b.qid - 7.552_011e-5).abs() < 1e-10);
        assert!((b.loss_q - b.loss_16).abs() < 1e-4);

        let b = eval_loss_q(&fig6(), &fig7(), 4.05e11, 1e14, 2.0).unwrap();
        assert!((b.qid - 20.078_523).abs() < 1e-5);
        assert!((b.loss_16 - 2.307_229_607).abs() < 1e-8);
        assert!(b.loss_q > random_guess_loss(128_256).unwrap());
    }

    #[test]
    fn token_inversion_fixtures() {
        let d = invert_tokens(&fig6(), 0.2, 1e9, 4.0).unwrap();
        assert!(((d - 1.645_833_454e12) / 1.645_833_454e12).abs() < 1e-8, "{d}");
        let d = invert_tokens(&fig6(), 0.2, 7e10, 2.0).unwrap();
        assert!(((d - 7.239_384_032e9) / 7.239_384_032e9).abs() < 1e-8);
        // within 2% of the published 0.0071 trillion
        assert!((d / 0.0071e12 - 1.0).abs() < 0.02);
    }

    #[test]
    fn token_inversion_needs_positive_beta() {
        let flat = QidLawParams { beta: 0.0, ..fig6() };
        assert!(invert_tokens(&flat, 0.2, 1e9, 4.0).is_err());
        assert!(invert_tokens(&fig6(), 0.0, 1e9, 4.0).is_err());
    }

    #[test]
    fn bits_inversion_fixtures() {
        let b = invert_bits(&fig6(), 0.2, 1e9, 1e12).unwrap();
        assert!((b.bits - 3.814_069_811).abs() < 1e-8);
        assert!(!b.baseline_suffices);
        let q = eval_qid(&fig6(), 1e9, 1e12, b.bits).unwrap();
        assert!(((q - 0.2) / 0.2).abs() < 1e-12);

        let loose = invert_bits(&fig6(), 100.0, 1e9, 1e6).unwrap();
        assert!(loose.bits < 1.0);

        let strict = invert_bits(&fig6(), 1e-9, 1e9, 1e14).unwrap();
        assert!(strict.bits > 16.0 && strict.baseline_suffices);

        let flat = QidLawParams { gamma: -1.0, ..fig6() };
        assert!(invert_bits(&flat, 0.2, 1e9, 1e12).is_err());
    }

    #[test]
    fn random_guess_fixtures() {
        assert!((random_guess_loss(50_304).unwrap() - 10.825_839_876).abs() < 1e-8);
        assert!((random_guess_loss(128_256).unwrap() - 11.761_783_546).abs() < 1e-8);
        assert_eq!(random_guess_loss(1).unwrap(), 0.0);
        assert!(random_guess_loss(0).is_err());
    }

    fn rec(n: u64, tokens: u64, bits: f64, qid: f64) -> MeasurementRecord {
        MeasurementRecord::new("", "s", "gptq", n, tokens, bits, 3.0 + qid, 3.0).unwrap()
    }

    #[test]
    fn assessment_undertrained() {
        let a = assess_training_level(&fig6(), &rec(7_000_000_000, 300_000_000_000, 4.0, 0.01), 0.2).unwrap();
        assert!(((a.required_tokens - 3.804_276_986e12) / 3.804_276_986e12).abs() < 1e-8);
        assert!((a.token_ratio - 0.078_858).abs() < 1e-5);
        assert_eq!(a.verdict, Verdict::Undertrained);
        assert!(!a.noise);
    }

    #[test]
    fn assessment_verdict_follows_measurement() {
        let a = assess_training_level(&fig6(), &rec(7_000_000_000, 1_000, 4.0, 0.25), 0.2).unwrap();
        assert_eq!(a.verdict, Verdict::FullyTrainedByQid);
        assert!(a.token_ratio < 1e-6);

        let a = assess_training_level(&fig6(), &rec(7_000_000_000, 1_000, 4.0, -0.002), 0.2).unwrap();
        assert_eq!(a.verdict, Verdict::Undertrained);
        assert!(a.noise);

        assert!(assess_training_level(&fig6(), &rec(7_000_000_000, 1_000, 16.0, 0.0), 0.2).is_err());
        assert!(assess_training_level(&fig6(), &rec(7_000_000_000, 1_000, 4.0, 0.1), 0.0).is_err());
    }

    #[test]
    fn token_range_values() {
        let r = TokenRange { min: 1e9, max: 1e14, steps: 51 };
        let v = r.values().unwrap();
        assert_eq!(v.len(), 51);
        assert_eq!(v[0], 1e9);
        assert_eq!(v[10], 1e10);
        assert_eq!(v[50], 1e14);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(TokenRange { min: 0.5, max: 10.0, steps: 3 }.values().is_err());
        assert!(TokenRange { min: 1.0, max: 10.0, steps: 1 }.values().is_err());
    }

    #[test]
    fn curve_grid_shape_and_order() {
        let sizes = [7e9, 7e10, 4.05e11];
        let range = TokenRange { min: 1e9, max: 1e14, steps: 51 };
        let rows = curve_grid(&fig6(), Some(&fig7()), &sizes, &range, &[2.0, 3.0, 4.0], Some(128_256)).unwrap();
        assert_eq!(rows.len(), 459);
        assert_eq!((rows[0].n_nonembed, rows[0].bits, rows[0].tokens), (7e9, 2.0, 1e9));
        assert_eq!((rows[51].n_nonembed, rows[51].bits), (7e9, 3.0));
        assert_eq!(rows[153].n_nonembed, 7e10);
        for r in &rows {
            assert_eq!(r.loss_q.unwrap(), r.loss_16.unwrap() + r.qid);
            let single = predict_point(&fig6(), Some(&fig7()), r.n_nonembed, r.tokens, r.bits, Some(128_256)).unwrap();
            assert_eq!(*r, single);
        }
        let at = |n: f64, p: f64| {
            rows.iter()
                .find(|r| r.n_nonembed == n && r.bits == p && r.tokens == 1e14)
                .unwrap()
        };
        for n in sizes {
            assert_eq!(at(n, 2.0).worse_than_random, Some(true));
        }
        let r = at(4.05e11, 4.0);
        assert_eq!(r.worse_than_random, Some(false));
        assert!((r.loss_q.unwrap() - 2.751_922_498).abs() < 1e-8);
    }

    #[test]
    fn curve_grid_without_loss_law() {
        let range = TokenRange { min: 1e9, max: 1e10, steps: 2 };
        let rows = curve_grid(&fig6(), None, &[1e9], &range, &[4.0], Some(50_304)).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].loss_q.is_none() && rows[0].worse_than_random.is_none());
        let mut out = Vec::new();
        write_rows_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n_nonembed,tokens,bits,qid,loss_16,loss_q,worse_than_random"));
        assert!(lines.next().unwrap().ends_with(",,,"));
        assert!(curve_grid(&fig6(), None, &[], &range, &[4.0], None).is_err());
        assert!(curve_grid(&fig6(), None, &[1e9], &range, &[], None).is_err());
    }

    #[test]
    fn marginal_eval_directions() {
        let tok = MarginalLawParams { factor: Factor::Tokens, coefficient: 2.0, exponent: 0.5 };
        assert!((eval_marginal(&tok, 4.0).unwrap() - 4.0).abs() < 1e-12);
        let size = MarginalLawParams { factor: Factor::Size, coefficient: 2.0, exponent: 0.5 };
        assert!((eval_marginal(&size, 4.0).unwrap() - 1.0).abs() < 1e-12);
    }
}
