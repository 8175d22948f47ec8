//! Synthetic measurement datasets drawn from known law parameters.
//!
//! Degradations get multiplicative lognormal noise, `qid * exp(eps)` with
//! `eps ~ N(0, sigma^2)`, drawn in grid order from a ChaCha8 stream seeded
//! by the spec. The same spec always yields the same dataset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lawfit::{Loss16LawParams, QidLawParams};
use crate::laws::{eval_loss16, eval_qid};
use crate::measurements::{Dataset, DatasetMeta, MeasurementRecord};

/// Identifies the pseudo-random stream in dataset metadata.
pub const GENERATOR_ID: &str = "rand_chacha-0.9/ChaCha8Rng+rand_distr-0.5/Normal";

/// 16-bit loss used when no loss law is supplied. QiD fits never read it.
pub const PLACEHOLDER_LOSS16: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSpec {
    pub qid_params: QidLawParams,
    pub loss16_params: Option<Loss16LawParams>,
    pub sizes: Vec<u64>,
    pub token_steps: Vec<u64>,
    pub bit_list: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        self.qid_params.validate()?;
        if let Some(l) = &self.loss16_params {
            l.validate()?;
        }
        if self.sizes.is_empty() || self.token_steps.is_empty() || self.bit_list.is_empty() {
            return Err(Error::validation("grid", "sizes, token steps and bit list must be non-empty"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::validation(
                "noise_sigma",
                format!("must be finite and >= 0, got {}", self.noise_sigma),
            ));
        }
        Ok(())
    }

    /// Number of records the spec generates.
    pub fn len(&self) -> usize {
        self.sizes.len() * self.token_steps.len() * self.bit_list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sidecar document describing how a synthetic dataset was produced.
#[derive(Debug, Clone, Serialize)]
pub struct SynthSidecar<'a> {
    pub generator: &'static str,
    pub seed: u64,
    pub spec: &'a SynthSpec,
}

pub fn sidecar_json(spec: &SynthSpec) -> String {
    serde_json::to_string_pretty(&SynthSidecar {
        generator: GENERATOR_ID,
        seed: spec.seed,
        spec,
    })
    .expect("synth spec always serializes")
}

/// Generates one record per (size, tokens, bits) point, sizes outermost and
/// bits innermost.
///
/// Each record stores `loss_q = loss_16 + qid_noisy`, and its `qid` is
/// recomputed from the two losses like any loaded record, so it matches the
/// generated degradation up to one rounding of the sum.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::validation("noise_sigma", e.to_string()))?;

    let mut records = Vec::with_capacity(spec.len());
    for &n in &spec.sizes {
        for &d in &spec.token_steps {
            let loss_16 = match &spec.loss16_params {
                Some(l) => eval_loss16(l, n as f64, d as f64)?,
                None => PLACEHOLDER_LOSS16,
            };
            for &p in &spec.bit_list {
                let mut qid = eval_qid(&spec.qid_params, n as f64, d as f64, p)?;
                if spec.noise_sigma > 0.0 {
                    qid *= noise.sample(&mut rng).exp();
                }
                records.push(MeasurementRecord::new(
                    format!("synth-{n}"),
                    "synth",
                    "synthetic",
                    n,
                    d,
                    p,
                    loss_16 + qid,
                    loss_16,
                )?);
            }
        }
    }

    let mut meta = DatasetMeta::default();
    meta.provenance.insert("generator".into(), GENERATOR_ID.into());
    meta.provenance.insert("seed".into(), spec.seed.to_string());
    meta.provenance.insert("noise_sigma".into(), spec.noise_sigma.to_string());
    Dataset::new(records, meta)
}
