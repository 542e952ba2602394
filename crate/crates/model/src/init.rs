use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use talkplay_core::tokenizer::{TokenId, Vocabulary};

use crate::config::ModelConfig;
use crate::scalar::Scalar;
use crate::transformer::Model;
use crate::ModelError;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// Row-major `d × d`.
    Full(Vec<f64>),
    Diagonal(Vec<f64>),
}

/// Mean and covariance of the base token embeddings; new token rows are
/// drawn from the matching Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStats {
    pub mean: Vec<f64>,
    pub cov: Covariance,
}

impl BaseStats {
    pub fn isotropic(mean: Vec<f64>, sigma: f64) -> Self {
        let d = mean.len();
        Self {
            mean,
            cov: Covariance::Diagonal(vec![sigma * sigma; d]),
        }
    }

    /// Sample mean and (biased) full covariance of `rows`.
    pub fn from_rows(rows: &[f64], d: usize) -> Self {
        assert!(d > 0 && rows.len() % d == 0 && !rows.is_empty(), "rows must be a non-empty n × d matrix");
        let n = rows.len() / d;
        let mut mean = vec![0.0; d];
        for r in rows.chunks(d) {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n as f64;
            }
        }
        let mut cov = vec![0.0; d * d];
        for r in rows.chunks(d) {
            for i in 0..d {
                let di = r[i] - mean[i];
                for j in 0..d {
                    cov[i * d + j] += di * (r[j] - mean[j]) / n as f64;
                }
            }
        }
        Self {
            mean,
            cov: Covariance::Full(cov),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ`, row-major.
    pub fn factor(&self) -> Result<Vec<f64>, ModelError> {
        let d = self.dim();
        match &self.cov {
            Covariance::Diagonal(v) => {
                if v.len() != d {
                    return Err(ModelError::Shape(format!("diagonal has {} entries, mean has {d}", v.len())));
                }
                let mut l = vec![0.0; d * d];
                for (i, &s) in v.iter().enumerate() {
                    if !(s >= 0.0) {
                        return Err(ModelError::NotPsd { row: i, pivot: s });
                    }
                    l[i * d + i] = s.sqrt();
                }
                Ok(l)
            }
            Covariance::Full(c) => {
                if c.len() != d * d {
                    return Err(ModelError::Shape(format!("covariance has {} entries, expected {}", c.len(), d * d)));
                }
                cholesky_psd(c, d)
            }
        }
    }
}

/// Cholesky factorization that tolerates singular PSD input: pivots within
/// a small tolerance of zero yield a zero column. Clearly negative pivots
/// are an error.
pub fn cholesky_psd(a: &[f64], d: usize) -> Result<Vec<f64>, ModelError> {
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(1.0f64, f64::max);
    let tol = 1e-10 * scale;
    for i in 0..d {
        for j in 0..i {
            let (x, y) = (a[i * d + j], a[j * d + i]);
            if !x.is_finite() || (x - y).abs() > 1e-9 * scale {
                return Err(ModelError::Shape("covariance must be finite and symmetric".into()));
            }
        }
    }
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let pivot = a[j * d + j] - (0..j).map(|k| l[j * d + k] * l[j * d + k]).sum::<f64>();
        if !(pivot >= -tol) {
            return Err(ModelError::NotPsd { row: j, pivot });
        }
        if pivot <= tol {
            continue;
        }
        let ljj = pivot.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let s = a[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            l[i * d + j] = s / ljj;
        }
    }
    Ok(l)
}

/// Seeded initialization. Matrices get N(0, 0.02²), with the residual output
/// projections further scaled by 1/√(2·layers); layer-norm gains start at 1
/// and biases at 0. With `hewitt`, the given token rows are redrawn from
/// the base-statistics Gaussian.
pub fn init_params<S: Scalar>(
    config: &ModelConfig,
    hewitt: Option<(&BaseStats, Range<TokenId>)>,
) -> Result<Model<S>, ModelError> {
    let mut model = Model::<S>::zeros(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let resid = INIT_STD / (2.0 * config.n_layers as f64).sqrt();
    let resid_normal = Normal::new(0.0, resid).expect("valid std");
    let tensors = model.layout().tensors.clone();
    for t in &tensors {
        let slot = &mut model.params[t.range()];
        if t.name.ends_with(".gain") {
            slot.iter_mut().for_each(|v| *v = S::one());
        } else if t.shape.len() == 2 {
            let dist = if t.name.ends_with("attn.wo") || t.name.ends_with("mlp.w2") {
                &resid_normal
            } else {
                &normal
            };
            slot.iter_mut().for_each(|v| *v = S::c(dist.sample(&mut rng)));
        }
    }
    if let Some((stats, range)) = hewitt {
        let d = config.d_model;
        if stats.dim() != d {
            return Err(ModelError::Shape(format!(
                "base statistics have dimension {}, model has {d}",
                stats.dim()
            )));
        }
        if range.end as usize > config.vocab_size {
            return Err(ModelError::TokenOutOfRange(range.end.saturating_sub(1)));
        }
        let l = stats.factor()?;
        let mut hrng = ChaCha8Rng::seed_from_u64(config.seed);
        hrng.set_stream(1);
        let tok = model.layout().tok_emb;
        let mut z = vec![0.0; d];
        for id in range {
            z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut hrng));
            let row = &mut model.params[tok + id as usize * d..tok + (id as usize + 1) * d];
            for i in 0..d {
                let lz: f64 = (0..=i).map(|k| l[i * d + k] * z[k]).sum();
                row[i] = S::c(stats.mean[i] + lz);
            }
        }
    }
    Ok(model)
}

/// Initializes a model over `vocab` whose music and block-marker rows are
/// drawn from the mean and covariance of its own text-token rows.
pub fn init_expanded<S: Scalar>(config: &ModelConfig, vocab: &Vocabulary) -> Result<Model<S>, ModelError> {
    if config.vocab_size != vocab.size() as usize {
        return Err(ModelError::Config(format!(
            "vocab_size {} differs from tokenizer vocabulary {}",
            config.vocab_size,
            vocab.size()
        )));
    }
    let base = init_params::<f64>(config, None)?;
    let d = config.d_model;
    let tok = base.layout().tok_emb;
    let rows = &base.params[tok..tok + vocab.base_size() as usize * d];
    let stats = BaseStats::from_rows(rows, d);
    init_params(config, Some((&stats, vocab.new_token_range())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(vocab: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            context_len: 16,
            seed: 5,
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let l = cholesky_psd(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_psd_accepted_negative_rejected() {
        // rank one: v vᵀ with v = (1, 2)
        let l = cholesky_psd(&[1.0, 2.0, 2.0, 4.0], 2).unwrap();
        assert_eq!(l[3], 0.0);
        assert!(matches!(
            cholesky_psd(&[1.0, 2.0, 2.0, 1.0], 2),
            Err(ModelError::NotPsd { row: 1, .. })
        ));
        let neg = BaseStats {
            mean: vec![0.0],
            cov: Covariance::Diagonal(vec![-1.0]),
        };
        assert!(init_params::<f32>(&ModelConfig { d_model: 1, n_heads: 1, ..small(4) }, Some((&neg, 0..2))).is_err());
    }

    #[test]
    fn same_seed_same_params() {
        let a = init_params::<f32>(&small(30), None).unwrap();
        let b = init_params::<f32>(&small(30), None).unwrap();
        assert_eq!(a.params, b.params);
        let c = init_params::<f32>(&ModelConfig { seed: 6, ..small(30) }, None).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn from_rows_recovers_moments() {
        let rows = [1.0, 0.0, 3.0, 2.0];
        let s = BaseStats::from_rows(&rows, 2);
        assert_eq!(s.mean, vec![2.0, 1.0]);
        assert_eq!(s.cov, Covariance::Full(vec![1.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let s = BaseStats::isotropic(vec![0.0; 3], 1.0);
        assert!(matches!(init_params::<f64>(&small(10), Some((&s, 2..4))), Err(ModelError::Shape(_))));
    }
}
