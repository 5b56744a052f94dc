use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GprError, Result};
use crate::quantizer::EmbeddingCorpus;
use crate::rng;

/// Seeded definition of the simulated ranking models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub seed: u64,
    pub version: u32,
    pub num_segments: u32,
    /// Dimension of segment and item affinity latents.
    pub latent_dim: usize,
    pub ctr_base: f64,
    pub cvr_base: f64,
    /// Spread of per-item base logits.
    pub item_noise: f64,
    /// Scale of the segment-item affinity term.
    pub affinity: f64,
    pub bid_min: f64,
    pub bid_max: f64,
    pub ecpm_scale: f64,
    /// Per-version perturbation of segment latents.
    pub drift: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            seed: 0,
            version: 0,
            num_segments: 4,
            latent_dim: 4,
            ctr_base: -2.0,
            cvr_base: -1.5,
            item_noise: 0.3,
            affinity: 1.5,
            bid_min: 1.0,
            bid_max: 3.0,
            ecpm_scale: 20.0,
            drift: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ItemParams {
    ctr_logit: f64,
    cvr_logit: f64,
    bid: f64,
    ctr_latent: Array1<f64>,
    cvr_latent: Array1<f64>,
}

/// pCTR, pCVR and eCPM as pure functions of (seed, version, segment, item).
///
/// Item latents are random projections of the item embeddings, so items
/// close in embedding space (and therefore in code space) score alike.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingOracle {
    cfg: OracleConfig,
    segments: Vec<(Array1<f64>, Array1<f64>)>,
    items: BTreeMap<String, ItemParams>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn unit(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

fn gaussian_vec(r: &mut rng::Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| StandardNormal.sample(r))
}

impl RankingOracle {
    pub fn new(cfg: OracleConfig, embeddings: &EmbeddingCorpus) -> Result<Self> {
        if cfg.num_segments == 0 || cfg.latent_dim == 0 {
            return Err(GprError::invalid("oracle needs at least one segment and latent dimension"));
        }
        if !(cfg.bid_min > 0.0 && cfg.bid_max >= cfg.bid_min && cfg.ecpm_scale > 0.0) {
            return Err(GprError::invalid("oracle bids and eCPM scale must be positive"));
        }
        let d = embeddings.dim();
        let r = cfg.latent_dim;
        let mut proj_rng = rng::seeded(rng::derive_seed(cfg.seed, 1));
        let ctr_proj = Array2::from_shape_fn((r, d), |_| StandardNormal.sample(&mut proj_rng));
        let cvr_proj = Array2::from_shape_fn((r, d), |_| StandardNormal.sample(&mut proj_rng));
        let segments = (0..cfg.num_segments)
            .map(|s| {
                let mut base = rng::seeded(rng::derive_seed(cfg.seed, 1_000 + u64::from(s)));
                let mut drift = rng::seeded(rng::derive_seed(
                    rng::derive_seed(cfg.seed, 2_000 + u64::from(s)),
                    u64::from(cfg.version),
                ));
                let mut latent = |b: &mut rng::Rng| {
                    let v = gaussian_vec(b, r);
                    let dv = gaussian_vec(&mut drift, r);
                    unit(unit(v) + dv * (cfg.drift * if cfg.version == 0 { 0.0 } else { 1.0 }))
                };
                (latent(&mut base), latent(&mut base))
            })
            .collect();
        let mut items = BTreeMap::new();
        for (i, id) in embeddings.ids().iter().enumerate() {
            let e = embeddings.row(i);
            let mut ir = rng::seeded(rng::derive_seed(cfg.seed, item_stream(id)));
            let noise_c: f64 = StandardNormal.sample(&mut ir);
            let noise_v: f64 = StandardNormal.sample(&mut ir);
            let bid = if cfg.bid_max > cfg.bid_min {
                ir.random_range(cfg.bid_min..cfg.bid_max)
            } else {
                cfg.bid_min
            };
            items.insert(
                id.clone(),
                ItemParams {
                    ctr_logit: cfg.ctr_base + cfg.item_noise * noise_c,
                    cvr_logit: cfg.cvr_base + cfg.item_noise * noise_v,
                    bid,
                    ctr_latent: project(&ctr_proj, e),
                    cvr_latent: project(&cvr_proj, e),
                },
            );
        }
        Ok(RankingOracle { cfg, segments, items })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn version(&self) -> u32 {
        self.cfg.version
    }

    /// The same oracle definition at another snapshot version.
    pub fn with_version(&self, version: u32, embeddings: &EmbeddingCorpus) -> Result<Self> {
        RankingOracle::new(OracleConfig { version, ..self.cfg.clone() }, embeddings)
    }

    fn lookup(&self, segment: u32, item: &str) -> Result<(&ItemParams, &(Array1<f64>, Array1<f64>))> {
        let p = self
            .items
            .get(item)
            .ok_or_else(|| GprError::invalid(format!("oracle has no item {item:?}")))?;
        let s = self
            .segments
            .get(segment as usize)
            .ok_or_else(|| GprError::invalid(format!("oracle has no segment {segment}")))?;
        Ok((p, s))
    }

    pub fn pctr(&self, segment: u32, item: &str) -> Result<f64> {
        let (p, s) = self.lookup(segment, item)?;
        Ok(sigmoid(p.ctr_logit + self.cfg.affinity * s.0.dot(&p.ctr_latent)))
    }

    pub fn pcvr(&self, segment: u32, item: &str) -> Result<f64> {
        let (p, s) = self.lookup(segment, item)?;
        Ok(sigmoid(p.cvr_logit + self.cfg.affinity * s.1.dot(&p.cvr_latent)))
    }

    pub fn bid(&self, item: &str) -> Result<f64> {
        self.items
            .get(item)
            .map(|p| p.bid)
            .ok_or_else(|| GprError::invalid(format!("oracle has no item {item:?}")))
    }

    /// `bid · pCTR · pCVR · scale`.
    pub fn ecpm(&self, segment: u32, item: &str) -> Result<f64> {
        Ok(self.bid(item)? * self.pctr(segment, item)? * self.pcvr(segment, item)? * self.cfg.ecpm_scale)
    }
}

fn item_stream(id: &str) -> u64 {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    h.write(id.as_bytes());
    h.finish()
}

fn project(p: &Array2<f64>, e: ArrayView1<'_, f64>) -> Array1<f64> {
    unit(p.dot(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> EmbeddingCorpus {
        let ids = (0..6).map(|i| format!("ad{i}")).collect();
        EmbeddingCorpus::new(ids, Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64).sin())).unwrap()
    }

    #[test]
    fn outputs_in_range_and_replayable() {
        let o = RankingOracle::new(OracleConfig::default(), &corpus()).unwrap();
        let o2 = RankingOracle::new(OracleConfig::default(), &corpus()).unwrap();
        for s in 0..4 {
            for i in 0..6 {
                let id = format!("ad{i}");
                let (c, v, e) = (o.pctr(s, &id).unwrap(), o.pcvr(s, &id).unwrap(), o.ecpm(s, &id).unwrap());
                assert!(c > 0.0 && c < 1.0 && v > 0.0 && v < 1.0 && e >= 0.0);
                assert_eq!(e.to_bits(), o2.ecpm(s, &id).unwrap().to_bits());
            }
        }
        assert!(o.pctr(9, "ad0").is_err());
        assert!(o.pctr(0, "nope").is_err());
    }

    #[test]
    fn versions_drift_segments_only() {
        let c = corpus();
        let o = RankingOracle::new(OracleConfig::default(), &c).unwrap();
        let o1 = o.with_version(1, &c).unwrap();
        assert_ne!(o.pctr(0, "ad0").unwrap(), o1.pctr(0, "ad0").unwrap());
        assert_eq!(o.bid("ad0").unwrap(), o1.bid("ad0").unwrap());
    }
}
