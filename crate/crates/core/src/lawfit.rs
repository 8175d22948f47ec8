//! Parameter estimation for the degradation and 16-bit loss laws.
//!
//! Degradation laws are power laws, so they are fitted by ordinary least
//! squares on `ln qid` (a multiplicative error model) with no intercept
//! beyond `ln k`. The 16-bit loss law is a sum of two power terms and is
//! fitted in raw loss space with Nelder–Mead.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::laws;
use crate::linalg;
use crate::measurements::{FitSet, FitTarget};
use crate::simplex::{self, SimplexOptions};

/// Normal-equation condition estimates above this attach a warning.
pub const CONDITION_WARNING_THRESHOLD: f64 = 1e8;

/// Constants of the unified degradation law `k * D^beta / (N^alpha * P^gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QidLawParams {
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl QidLawParams {
    pub fn new(k: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = Self { k, alpha, beta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::validation("k", format!("must be positive and finite, got {}", self.k)));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() {
                return Err(Error::validation(name, format!("must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// The single factor a marginal law varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    Tokens,
    Size,
    Bits,
}

impl Factor {
    pub fn name(self) -> &'static str {
        match self {
            Factor::Tokens => "tokens",
            Factor::Size => "size",
            Factor::Bits => "bits",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tokens" => Ok(Factor::Tokens),
            "size" => Ok(Factor::Size),
            "bits" => Ok(Factor::Bits),
            other => Err(Error::validation(
                "factor",
                format!("unknown factor `{other}` (expected tokens, size or bits)"),
            )),
        }
    }
}

/// Single-factor power law. For `tokens` the law is `c * D^e`; for `size`
/// and `bits` it is `c / N^e` and `c / P^e`, so a positive exponent always
/// means the expected direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalLawParams {
    pub factor: Factor,
    pub coefficient: f64,
    pub exponent: f64,
}

/// Constants of the 16-bit loss law `[(n_c/N)^(alpha_n/alpha_d) + d_c/D]^alpha_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Loss16LawParams {
    pub n_c: f64,
    pub d_c: f64,
    pub alpha_n: f64,
    pub alpha_d: f64,
}

impl Loss16LawParams {
    pub fn new(n_c: f64, d_c: f64, alpha_n: f64, alpha_d: f64) -> Result<Self> {
        let p = Self { n_c, d_c, alpha_n, alpha_d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_c", self.n_c),
            ("d_c", self.d_c),
            ("alpha_n", self.alpha_n),
            ("alpha_d", self.alpha_d),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Any of the three laws, in the tagged JSON form used on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LawParams {
    QidUnified(QidLawParams),
    QidMarginal(MarginalLawParams),
    Loss16(Loss16LawParams),
}

impl From<QidLawParams> for LawParams {
    fn from(p: QidLawParams) -> Self {
        LawParams::QidUnified(p)
    }
}

impl From<MarginalLawParams> for LawParams {
    fn from(p: MarginalLawParams) -> Self {
        LawParams::QidMarginal(p)
    }
}

impl From<Loss16LawParams> for LawParams {
    fn from(p: Loss16LawParams) -> Self {
        LawParams::Loss16(p)
    }
}

impl LawParams {
    /// Parses a params document. A fit report (an object with a `params`
    /// member) is accepted too and yields its parameters.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let inner = match value {
            Value::Object(mut obj) if obj.contains_key("params") && !obj.contains_key("law") => {
                obj.remove("params").unwrap_or(Value::Null)
            }
            other => other,
        };
        let params: LawParams = serde_json::from_value(inner)?;
        match &params {
            LawParams::QidUnified(p) => p.validate()?,
            LawParams::Loss16(p) => p.validate()?,
            LawParams::QidMarginal(p) => {
                if !(p.coefficient.is_finite() && p.coefficient > 0.0) {
                    return Err(Error::validation("coefficient", "must be positive and finite"));
                }
                if !p.exponent.is_finite() {
                    return Err(Error::validation("exponent", "must be finite"));
                }
            }
        }
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("law params always serialize")
    }

    pub fn law_name(&self) -> &'static str {
        match self {
            LawParams::QidUnified(_) => "qid_unified",
            LawParams::QidMarginal(_) => "qid_marginal",
            LawParams::Loss16(_) => "loss16",
        }
    }
}

/// Marker for the concrete parameter types a report can carry.
pub trait Law: Copy + Into<LawParams> {}
impl Law for QidLawParams {}
impl Law for MarginalLawParams {}
impl Law for Loss16LawParams {}
impl Law for LawParams {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Squared residuals of `ln qid`, equal weights.
    LogSpaceLeastSquares,
    /// Squared residuals of the loss itself, equal weights.
    LossSpaceLeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport<P: Law> {
    #[serde(serialize_with = "serialize_law")]
    pub params: P,
    pub objective: Objective,
    pub log_space_r2: f64,
    pub rmse_log: f64,
    /// Root-mean-square residual in nats; only for the 16-bit loss fit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_loss: Option<f64>,
    pub n_points: usize,
    pub excluded_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_warning: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<usize>,
}

fn serialize_law<P: Law, S: Serializer>(p: &P, s: S) -> std::result::Result<S::Ok, S::Error> {
    let law: LawParams = (*p).into();
    law.serialize(s)
}

impl<P: Law> FitReport<P> {
    pub fn erase(self) -> FitReport<LawParams> {
        FitReport {
            params: self.params.into(),
            objective: self.objective,
            log_space_r2: self.log_space_r2,
            rmse_log: self.rmse_log,
            rmse_loss: self.rmse_loss,
            n_points: self.n_points,
            excluded_count: self.excluded_count,
            condition_warning: self.condition_warning,
            warnings: self.warnings,
            evaluations: self.evaluations,
        }
    }
}

/// (R^2, RMSE) of `observed` against `predicted`.
fn goodness(observed: &[f64], predicted: &[f64]) -> (f64, f64) {
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    (r2, (ss_res / n).sqrt())
}

fn require_qid_target(set: &FitSet) -> Result<()> {
    if set.target != FitTarget::Qid {
        return Err(Error::validation("fit set", "target must be qid"));
    }
    Ok(())
}

fn log_values(set: &FitSet) -> Result<Vec<f64>> {
    set.points
        .iter()
        .map(|p| {
            if p.value > 0.0 && p.value.is_finite() {
                Ok(p.value.ln())
            } else {
                Err(Error::domain(format!(
                    "qid must be positive for a log-space fit, got {}",
                    p.value
                )))
            }
        })
        .collect()
}

/// Mean and population standard deviation.
fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = moments(a);
    let (mb, sb) = moments(b);
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
    cov / (sa * sb)
}

/// Fits `qid = k * D^beta / (N^alpha * P^gamma)` by least squares on `ln qid`.
///
/// The regressors are centered and scaled to unit variance before the 4x4
/// normal equations are formed and solved with partial pivoting; the
/// coefficients are mapped back afterwards. This is the same minimizer as
/// the raw system, with a far better conditioned matrix.
pub fn fit_qid_unified(set: &FitSet) -> Result<FitReport<QidLawParams>> {
    require_qid_target(set)?;
    let m = set.len();
    if m < 4 {
        return Err(Error::Insufficient(format!(
            "unified fit needs at least 4 points, got {m}"
        )));
    }
    let y = log_values(set)?;
    let ln_n: Vec<f64> = set.points.iter().map(|p| p.n.ln()).collect();
    let ln_d: Vec<f64> = set.points.iter().map(|p| p.d.ln()).collect();
    let ln_p: Vec<f64> = set.points.iter().map(|p| p.bits.ln()).collect();
    let columns = [("size", &ln_n), ("tokens", &ln_d), ("bits", &ln_p)];

    let constant: Vec<&str> = columns
        .iter()
        .filter(|(_, c)| is_constant(c))
        .map(|(name, _)| *name)
        .collect();
    if !constant.is_empty() {
        return Err(Error::RankDeficient(constant.join(", ")));
    }

    let stats: Vec<(f64, f64)> = columns.iter().map(|(_, c)| moments(c)).collect();
    let scaled_row = |i: usize| -> [f64; 4] {
        let mut row = [1.0; 4];
        for (j, (_, col)) in columns.iter().enumerate() {
            row[j + 1] = (col[i] - stats[j].0) / stats[j].1;
        }
        row
    };

    let mut normal = [[0.0; 4]; 4];
    let mut rhs = [0.0; 4];
    for (i, &yi) in y.iter().enumerate() {
        let row = scaled_row(i);
        for a in 0..4 {
            rhs[a] += row[a] * yi;
            for b in 0..4 {
                normal[a][b] += row[a] * row[b];
            }
        }
    }

    let solution = match linalg::solve(normal, rhs) {
        Some(s) => s,
        None => {
            let mut pairs = Vec::new();
            for a in 0..3 {
                for b in a + 1..3 {
                    if correlation(columns[a].1, columns[b].1).abs() > 1.0 - 1e-9 {
                        pairs.push(format!("{} ~ {}", columns[a].0, columns[b].0));
                    }
                }
            }
            let detail = if pairs.is_empty() {
                "size, tokens, bits".to_string()
            } else {
                pairs.join("; ")
            };
            return Err(Error::RankDeficient(detail));
        }
    };

    // back to unscaled coefficients of ln N, ln D, ln P
    let slopes: Vec<f64> = (0..3).map(|j| solution[j + 1] / stats[j].1).collect();
    let ln_k = solution[0] - (0..3).map(|j| slopes[j] * stats[j].0).sum::<f64>();
    let params = QidLawParams {
        k: ln_k.exp(),
        alpha: -slopes[0],
        beta: slopes[1],
        gamma: -slopes[2],
    };

    let predicted: Vec<f64> = (0..m)
        .map(|i| ln_k + params.beta * ln_d[i] - params.alpha * ln_n[i] - params.gamma * ln_p[i])
        .collect();
    let (r2, rmse) = goodness(&y, &predicted);

    let cond = linalg::condition_1(&normal);
    let condition_warning = (cond > CONDITION_WARNING_THRESHOLD)
        .then(|| format!("normal-equation condition estimate {cond:e} exceeds {CONDITION_WARNING_THRESHOLD:e}"));
    let warnings = [("alpha", params.alpha), ("beta", params.beta), ("gamma", params.gamma)]
        .iter()
        .filter(|(_, v)| *v <= 0.0)
        .map(|(name, v)| format!("fitted {name} = {v} is not positive"))
        .collect();

    Ok(FitReport {
        params,
        objective: Objective::LogSpaceLeastSquares,
        log_space_r2: r2,
        rmse_log: rmse,
        rmse_loss: None,
        n_points: m,
        excluded_count: set.excluded_count,
        condition_warning,
        warnings,
        evaluations: None,
    })
}

/// Fits a single-factor power law by simple linear regression of `ln qid`
/// on the log of the chosen factor.
pub fn fit_qid_marginal(set: &FitSet, factor: Factor) -> Result<FitReport<MarginalLawParams>> {
    require_qid_target(set)?;
    let m = set.len();
    if m < 2 {
        return Err(Error::Insufficient(format!(
            "marginal fit needs at least 2 points, got {m}"
        )));
    }
    let y = log_values(set)?;
    let x: Vec<f64> = set
        .points
        .iter()
        .map(|p| match factor {
            Factor::Tokens => p.d,
            Factor::Size => p.n,
            Factor::Bits => p.bits,
        })
        .map(f64::ln)
        .collect();
    if is_constant(&x) {
        return Err(Error::Insufficient(format!(
            "all {factor} values are identical; marginal fit needs at least 2 distinct values"
        )));
    }

    let (x_mean, x_sd) = moments(&x);
    let z: Vec<f64> = x.iter().map(|v| (v - x_mean) / x_sd).collect();
    let mut normal = [[0.0; 2]; 2];
    let mut rhs = [0.0; 2];
    for (zi, yi) in z.iter().zip(&y) {
        let row = [1.0, *zi];
        for a in 0..2 {
            rhs[a] += row[a] * yi;
            for b in 0..2 {
                normal[a][b] += row[a] * row[b];
            }
        }
    }
    let solution = linalg::solve(normal, rhs)
        .ok_or_else(|| Error::RankDeficient(factor.name().to_string()))?;
    let slope = solution[1] / x_sd;
    let intercept = solution[0] - slope * x_mean;

    let exponent = match factor {
        Factor::Tokens => slope,
        Factor::Size | Factor::Bits => -slope,
    };
    let params = MarginalLawParams {
        factor,
        coefficient: intercept.exp(),
        exponent,
    };
    let predicted: Vec<f64> = x.iter().map(|xi| intercept + slope * xi).collect();
    let (r2, rmse) = goodness(&y, &predicted);
    let warnings = if exponent <= 0.0 {
        vec![format!("fitted {factor} exponent {exponent} is not positive")]
    } else {
        Vec::new()
    };

    Ok(FitReport {
        params,
        objective: Objective::LogSpaceLeastSquares,
        log_space_r2: r2,
        rmse_log: rmse,
        rmse_loss: None,
        n_points: m,
        excluded_count: set.excluded_count,
        condition_warning: None,
        warnings,
        evaluations: None,
    })
}

fn loss16_from_vector(theta: &[f64; 4]) -> Loss16LawParams {
    Loss16LawParams {
        n_c: theta[0].exp(),
        d_c: theta[1].exp(),
        alpha_n: theta[2],
        alpha_d: theta[3],
    }
}

/// Options for [`fit_loss16_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Loss16FitOptions {
    pub simplex: SimplexOptions,
}

/// Deterministic starting point `(ln n_c, ln d_c, alpha_n, alpha_d)`.
pub fn loss16_initial_guess(set: &FitSet) -> [f64; 4] {
    let max_n = set.points.iter().map(|p| p.n).fold(f64::MIN, f64::max);
    let mut ds: Vec<f64> = set.points.iter().map(|p| p.d).collect();
    ds.sort_by(f64::total_cmp);
    let mid = ds.len() / 2;
    let median = if ds.len().is_multiple_of(2) {
        0.5 * (ds[mid - 1] + ds[mid])
    } else {
        ds[mid]
    };
    [max_n.ln() + 5.0, median.ln(), 0.05, 0.4]
}

pub fn fit_loss16(set: &FitSet) -> Result<FitReport<Loss16LawParams>> {
    fit_loss16_with(set, Loss16FitOptions::default())
}

/// Fits the 16-bit loss law by Nelder–Mead on the raw squared loss
/// residuals, over `(ln n_c, ln d_c, alpha_n, alpha_d)`.
///
/// When the simplex collapses it is rebuilt around the best vertex and the
/// search continues; the fit ends when a restart no longer moves the best
/// point, or fails once the evaluation budget is spent.
pub fn fit_loss16_with(set: &FitSet, opts: Loss16FitOptions) -> Result<FitReport<Loss16LawParams>> {
    if set.target != FitTarget::Loss16 {
        return Err(Error::validation("fit set", "target must be loss16"));
    }
    let m = set.len();
    if m < 8 {
        return Err(Error::Insufficient(format!(
            "loss16 fit needs at least 8 points, got {m}"
        )));
    }
    let ns: Vec<f64> = set.points.iter().map(|p| p.n).collect();
    let ds: Vec<f64> = set.points.iter().map(|p| p.d).collect();
    if is_constant(&ns) || is_constant(&ds) {
        return Err(Error::Insufficient(
            "loss16 fit needs at least 2 distinct sizes and 2 distinct token counts".into(),
        ));
    }
    for p in &set.points {
        if !(p.value.is_finite() && p.value > 0.0) {
            return Err(Error::domain(format!("loss must be positive and finite, got {}", p.value)));
        }
    }

    let objective = |theta: &[f64; 4]| -> f64 {
        if theta[2] <= 0.0 || theta[3] <= 0.0 {
            return f64::INFINITY;
        }
        set.points
            .iter()
            .map(|p| {
                let pred = laws::loss16_from_logs(theta[0], theta[1], theta[2], theta[3], p.n.ln(), p.d.ln());
                (p.value - pred).powi(2)
            })
            .sum()
    };

    let mut x = loss16_initial_guess(set);
    let mut evaluations = 0usize;
    let mut best_value = f64::INFINITY;
    loop {
        let budget = SimplexOptions {
            max_evaluations: opts.simplex.max_evaluations.saturating_sub(evaluations),
            ..opts.simplex
        };
        let out = simplex::minimize(objective, simplex::initial_simplex(x), budget);
        evaluations += out.evaluations;
        if !out.converged {
            return Err(Error::NotConverged {
                evaluations,
                residual: out.value,
                best: out.x,
            });
        }
        let moved = out
            .x
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let improved = out.value < best_value;
        x = out.x;
        best_value = best_value.min(out.value);
        if !improved || moved < opts.simplex.diameter_tol {
            break;
        }
    }

    let params = loss16_from_vector(&x);
    let predicted: Vec<f64> = set
        .points
        .iter()
        .map(|p| laws::loss16_from_logs(x[0], x[1], x[2], x[3], p.n.ln(), p.d.ln()))
        .collect();
    let observed: Vec<f64> = set.points.iter().map(|p| p.value).collect();
    let (_, rmse_loss) = goodness(&observed, &predicted);
    let ln_obs: Vec<f64> = observed.iter().map(|v| v.ln()).collect();
    let ln_pred: Vec<f64> = predicted.iter().map(|v| v.ln()).collect();
    let (r2, rmse_log) = goodness(&ln_obs, &ln_pred);

    Ok(FitReport {
        params,
        objective: Objective::LossSpaceLeastSquares,
        log_space_r2: r2,
        rmse_log,
        rmse_loss: Some(rmse_loss),
        n_points: m,
        excluded_count: set.excluded_count,
        condition_warning: None,
        warnings: Vec::new(),
        evaluations: Some(evaluations),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::FitPoint;

    fn fig6() -> QidLawParams {
        QidLawParams::new(0.017, 0.2261, 0.5251, 5.4967).unwrap()
    }

    fn fig7() -> Loss16LawParams {
        Loss16LawParams::new(4.74e19, 7.63e10, 0.045, 0.399).unwrap()
    }

    // Direct power-law evaluation, independent of the log-space path in `laws`.
    fn qid_direct(p: &QidLawParams, n: f64, d: f64, bits: f64) -> f64 {
        p.k * d.powf(p.beta) / (n.powf(p.alpha) * bits.powf(p.gamma))
    }

    fn grid(p: &QidLawParams, sizes: &[f64], tokens: &[f64], bits: &[f64]) -> FitSet {
        let mut pts = Vec::new();
        for &n in sizes {
            for &d in tokens {
                for &b in bits {
                    pts.push(FitPoint { n, d, bits: b, value: qid_direct(p, n, d, b) });
                }
            }
        }
        FitSet::from_points(FitTarget::Qid, pts)
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn unified_exact_on_noiseless_grid() {
        let truth = QidLawParams::new(0.02, 0.25, 0.5, 5.0).unwrap();
        let set = grid(&truth, &[1e8, 1e9, 1e10, 1e11], &[1e9, 1e10, 1e11, 1e12, 1e13], &[2.0, 3.0, 4.0]);
        assert_eq!(set.len(), 60);
        let rep = fit_qid_unified(&set).unwrap();
        let p = rep.params;
        assert!(rel(p.k, truth.k) < 1e-9, "{p:?}");
        assert!(rel(p.alpha, truth.alpha) < 1e-9);
        assert!(rel(p.beta, truth.beta) < 1e-9);
        assert!(rel(p.gamma, truth.gamma) < 1e-9);
        assert_eq!(rep.log_space_r2, 1.0);
        assert!(rep.rmse_log < 1e-12);
        assert_eq!(rep.n_points, 60);
        assert!(rep.condition_warning.is_none());
    }

    #[test]
    fn unified_rank_deficient_names_factors() {
        let pts = (0..6)
            .map(|i| FitPoint { n: 1e9, d: 1e10 * (i + 1) as f64, bits: 4.0, value: 0.01 * (i + 1) as f64 })
            .collect();
        let err = fit_qid_unified(&FitSet::from_points(FitTarget::Qid, pts)).unwrap_err();
        assert_eq!(err.to_string(), "rank-deficient design: size, bits");
    }

    #[test]
    fn unified_collinear_pair() {
        // N and D move together, bits vary independently
        let pts = (0..8)
            .map(|i| {
                let s = 10f64.powi(i % 4);
                FitPoint { n: 1e8 * s, d: 1e10 * s, bits: [2.0, 4.0][(i / 4) as usize], value: 0.1 }
            })
            .collect();
        let err = fit_qid_unified(&FitSet::from_points(FitTarget::Qid, pts)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(ref s) if s.contains("size ~ tokens")), "{err}");
    }

    #[test]
    fn unified_needs_four_points() {
        let set = grid(&fig6(), &[1e9, 1e10], &[1e10], &[2.0]);
        assert!(matches!(fit_qid_unified(&set), Err(Error::Insufficient(_))));
    }

    #[test]
    fn unified_rejects_non_positive_qid() {
        let mut set = grid(&fig6(), &[1e9, 1e10], &[1e10, 1e11], &[2.0, 3.0]);
        set.points[3].value = -0.01;
        assert!(matches!(fit_qid_unified(&set), Err(Error::Domain(_))));
    }

    #[test]
    fn token_unit_scaling_moves_only_k() {
        let truth = fig6();
        let sizes = [1.6e8, 4.1e8, 1e9, 2.8e9, 6.9e9, 1.2e10];
        let tokens = [1e9, 5e9, 2e10, 8e10, 2e11];
        let base = grid(&truth, &sizes, &tokens, &[2.0, 3.0, 4.0]);
        // wobble the values so the fit is not trivially exact
        let mut noisy = base.clone();
        for (i, p) in noisy.points.iter_mut().enumerate() {
            p.value *= 1.0 + 0.03 * ((i * 7919 % 13) as f64 - 6.0) / 6.0;
        }
        let c = 1000.0;
        let mut scaled = noisy.clone();
        for p in &mut scaled.points {
            p.d *= c;
        }
        let a = fit_qid_unified(&noisy).unwrap().params;
        let b = fit_qid_unified(&scaled).unwrap().params;
        assert!(rel(b.alpha, a.alpha) < 1e-9);
        assert!(rel(b.beta, a.beta) < 1e-9);
        assert!(rel(b.gamma, a.gamma) < 1e-9);
        assert!(rel(b.k, a.k * c.powf(-a.beta)) < 1e-9);
    }

    #[test]
    fn marginal_exact_recovery() {
        let cases = [(Factor::Tokens, 0.5316), (Factor::Size, 0.2276), (Factor::Bits, 5.4812)];
        for (factor, exponent) in cases {
            let pts: Vec<FitPoint> = (0..10)
                .map(|i| {
                    let x = match factor {
                        Factor::Tokens => 1e9 * 1.7f64.powi(i),
                        Factor::Size => 7e7 * 1.9f64.powi(i),
                        Factor::Bits => 2.0 + 0.25 * i as f64,
                    };
                    let q = match factor {
                        Factor::Tokens => 3e-6 * x.powf(exponent),
                        _ => 40.0 * x.powf(-exponent),
                    };
                    let (n, d, bits) = match factor {
                        Factor::Tokens => (1e9, x, 3.0),
                        Factor::Size => (x, 1e11, 3.0),
                        Factor::Bits => (1e9, 1e11, x),
                    };
                    FitPoint { n, d, bits, value: q }
                })
                .collect();
            let rep = fit_qid_marginal(&FitSet::from_points(FitTarget::Qid, pts), factor).unwrap();
            assert!(rel(rep.params.exponent, exponent) < 1e-10, "{factor}: {:?}", rep.params);
            assert_eq!(rep.params.factor, factor);
            assert!(rep.warnings.is_empty());
        }
    }

    #[test]
    fn marginal_identical_factor_values() {
        let set = grid(&fig6(), &[1e9], &[1e10, 1e11, 1e12], &[4.0]);
        assert!(fit_qid_marginal(&set, Factor::Size).is_err());
        assert!(fit_qid_marginal(&set, Factor::Tokens).is_ok());
    }

    #[test]
    fn marginal_agrees_with_unified_on_token_sweep() {
        let truth = fig6();
        let mut pts = Vec::new();
        for (i, d) in [1e9, 4e9, 1.6e10, 6.4e10, 2.56e11].iter().enumerate() {
            for j in 0..2 {
                // tiny jitter in N and P keeps the unified design full rank
                let n = 1e9 * (1.0 + 1e-6 * ((i + j) % 3) as f64);
                let bits = 3.0 * (1.0 + 1e-6 * (j as f64));
                pts.push(FitPoint { n, d: *d, bits, value: qid_direct(&truth, n, *d, bits) });
            }
        }
        let set = FitSet::from_points(FitTarget::Qid, pts);
        let unified = fit_qid_unified(&set).unwrap().params;
        let marginal = fit_qid_marginal(&set, Factor::Tokens).unwrap().params;
        assert!((unified.beta - marginal.exponent).abs() < 1e-6);
        assert!((unified.beta - truth.beta).abs() < 1e-6);
    }

    fn loss16_grid(p: &Loss16LawParams) -> FitSet {
        let sizes = [7.0e7, 3.0e8, 8.0e8, 2.5e9, 6.5e9, 1.15e10];
        let mut pts = Vec::new();
        for &n in &sizes {
            for i in 0..20 {
                let d = 1e9 * (206.0f64).powf(i as f64 / 19.0);
                let value = (p.n_c / n).powf(p.alpha_n / p.alpha_d) + p.d_c / d;
                pts.push(FitPoint { n, d, bits: 16.0, value: value.powf(p.alpha_d) });
            }
        }
        FitSet::from_points(FitTarget::Loss16, pts)
    }

    #[test]
    fn loss16_noiseless_predictive_match() {
        let truth = fig7();
        let set = loss16_grid(&truth);
        assert_eq!(set.len(), 120);
        let rep = fit_loss16(&set).unwrap();
        assert!(rep.rmse_loss.unwrap() < 1e-3, "{rep:?}");
        assert_eq!(rep.objective, Objective::LossSpaceLeastSquares);
    }

    #[test]
    fn loss16_refit_is_fixed_point() {
        let set = loss16_grid(&fig7());
        let first = fit_loss16(&set).unwrap().params;
        let mut own = set.clone();
        for p in &mut own.points {
            p.value = laws::eval_loss16(&first, p.n, p.d).unwrap();
        }
        let rep = fit_loss16(&own).unwrap();
        assert!(rep.rmse_loss.unwrap() < 1e-6, "{rep:?}");
    }

    #[test]
    fn loss16_needs_eight_points() {
        let mut set = loss16_grid(&fig7());
        set.points.truncate(3);
        assert!(matches!(fit_loss16(&set), Err(Error::Insufficient(_))));
    }

    #[test]
    fn loss16_budget_exhaustion_carries_best() {
        let set = loss16_grid(&fig7());
        let opts = Loss16FitOptions {
            simplex: SimplexOptions { diameter_tol: 1e-10, max_evaluations: 50 },
        };
        match fit_loss16_with(&set, opts) {
            Err(Error::NotConverged { evaluations, residual, best }) => {
                assert!(evaluations >= 50);
                assert!(residual.is_finite());
                assert!(best.iter().all(|v| v.is_finite()));
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn params_json_shapes() {
        let json = LawParams::from(fig6()).to_json();
        assert_eq!(json, r#"{"law":"qid_unified","k":0.017,"alpha":0.2261,"beta":0.5251,"gamma":5.4967}"#);
        let back = LawParams::from_json(&json).unwrap();
        assert_eq!(back, LawParams::QidUnified(fig6()));

        let m = MarginalLawParams { factor: Factor::Bits, coefficient: 12.5, exponent: 5.4812 };
        let json = LawParams::from(m).to_json();
        assert_eq!(json, r#"{"law":"qid_marginal","factor":"bits","coefficient":12.5,"exponent":5.4812}"#);

        let json = LawParams::from(fig7()).to_json();
        assert_eq!(json, r#"{"law":"loss16","n_c":4.74e+19,"d_c":76300000000.0,"alpha_n":0.045,"alpha_d":0.399}"#);
        assert_eq!(LawParams::from_json(&json).unwrap(), LawParams::Loss16(fig7()));
    }

    #[test]
    fn params_json_rejects_bad_documents() {
        assert!(LawParams::from_json(r#"{"law":"qid_unified","k":0.017,"alpha":0.2,"beta":0.5}"#).is_err());
        assert!(LawParams::from_json(r#"{"law":"qid_unified","k":-1,"alpha":0.2,"beta":0.5,"gamma":5}"#).is_err());
        assert!(LawParams::from_json(r#"{"law":"cubic","a":1}"#).is_err());
        assert!(LawParams::from_json(
            r#"{"law":"qid_unified","k":0.017,"alpha":0.2,"beta":0.5,"gamma":5,"delta":1}"#
        )
        .is_err());
    }

    #[test]
    fn report_json_embeds_tagged_params() {
        let set = grid(&fig6(), &[1e8, 1e9, 1e10], &[1e10, 1e11, 1e12], &[2.0, 3.0, 4.0]);
        let rep = fit_qid_unified(&set).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.starts_with(r#"{"params":{"law":"qid_unified","#), "{json}");
        assert!(json.contains(r#""objective":"log_space_least_squares""#));
        let back = LawParams::from_json(&json).unwrap();
        assert_eq!(back, LawParams::QidUnified(rep.params));
    }
}
