//! Pre-norm decoder-only transformer with a hand-written backward pass.
//!
//! Block: `x += attn(ln1(x)); x += mlp(ln2(x))`, learned positional
//! embeddings, tanh-approximated GELU with a 4× hidden layer, final layer
//! norm and an untied output projection without bias.

use talkplay_core::tokenizer::TokenId;

use crate::config::ModelConfig;
use crate::params::{LayerOffsets, Layout, TensorInfo};
use crate::scalar::{gemm, rm, Scalar};
use crate::ModelError;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

#[derive(Debug, Clone)]
pub struct Model<S: Scalar> {
    config: ModelConfig,
    layout: Layout,
    pub params: Vec<S>,
}

struct LnCache<S> {
    xhat: Vec<S>,
    rstd: Vec<S>,
}

struct LayerCache<S> {
    ln1: LnCache<S>,
    a: Vec<S>,
    qkv: Vec<S>,
    probs: Vec<S>,
    att: Vec<S>,
    ln2: LnCache<S>,
    bn: Vec<S>,
    h1: Vec<S>,
    /// Inner tanh of the GELU.
    th: Vec<S>,
    g: Vec<S>,
}

/// Per-layer keys and values for incremental decoding.
#[derive(Debug, Clone)]
pub struct KvCache<S> {
    k: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    len: usize,
}

impl<S: Scalar> KvCache<S> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

fn layer_norm<S: Scalar>(x: &[S], d: usize, g: &[S], b: &[S], out: &mut [S], cache: Option<&mut LnCache<S>>) {
    let n = x.len() / d;
    let mut xhat_all = Vec::new();
    let mut rstd_all = Vec::new();
    let keep = cache.is_some();
    if keep {
        xhat_all.resize(n * d, S::zero());
        rstd_all.resize(n, S::zero());
    }
    let inv_d = S::c(1.0 / d as f64);
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().fold(S::zero(), |s, &v| s + v) * inv_d;
        let var = row.iter().fold(S::zero(), |s, &v| s + (v - mean) * (v - mean)) * inv_d;
        let rstd = S::one() / (var + S::c(LN_EPS)).sqrt();
        for j in 0..d {
            let xh = (row[j] - mean) * rstd;
            out[i * d + j] = xh * g[j] + b[j];
            if keep {
                xhat_all[i * d + j] = xh;
            }
        }
        if keep {
            rstd_all[i] = rstd;
        }
    }
    if let Some(c) = cache {
        c.xhat = xhat_all;
        c.rstd = rstd_all;
    }
}

/// Adds the input gradient into `dx` and parameter gradients into `dg`, `db`.
fn layer_norm_backward<S: Scalar>(
    dy: &[S],
    cache: &LnCache<S>,
    g: &[S],
    d: usize,
    dx: &mut [S],
    dg: &mut [S],
    db: &mut [S],
) {
    let n = dy.len() / d;
    let inv_d = S::c(1.0 / d as f64);
    let mut dxhat = vec![S::zero(); d];
    for i in 0..n {
        let dyr = &dy[i * d..(i + 1) * d];
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let mut mean_dxhat = S::zero();
        let mut mean_dxhat_xhat = S::zero();
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let rstd = cache.rstd[i];
        for j in 0..d {
            dx[i * d + j] += rstd * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
}

fn add_bias<S: Scalar>(y: &mut [S], b: &[S]) {
    for row in y.chunks_mut(b.len()) {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += *bb;
        }
    }
}

fn col_sums_into<S: Scalar>(dy: &[S], cols: usize, db: &mut [S]) {
    for row in dy.chunks(cols) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += *v;
        }
    }
}

/// GELU of `h` into `g`; `th` receives the inner tanh for the backward pass.
fn gelu_rows<S: Scalar>(h: &[S], g: &mut [S], th: &mut [S]) {
    let (lo, hi) = (S::c(-15.0), S::c(15.0));
    let (c, a) = (S::c(GELU_C), S::c(GELU_A));
    for (t, &x) in th.iter_mut().zip(h) {
        let u = (c * (x + a * x * x * x)).max(lo).min(hi);
        *t = u + u;
    }
    S::exp_in_place(th);
    let half = S::c(0.5);
    for ((t, gv), &x) in th.iter_mut().zip(g.iter_mut()).zip(h) {
        *t = (*t - S::one()) / (*t + S::one());
        *gv = half * x * (S::one() + *t);
    }
}

fn gelu_grad<S: Scalar>(x: S, t: S) -> S {
    S::c(0.5) * (S::one() + t)
        + S::c(0.5) * x * (S::one() - t * t) * S::c(GELU_C) * (S::one() + S::c(3.0 * GELU_A) * x * x)
}

/// In-place softmax of the first `upto` entries; the rest become zero.
fn softmax_prefix<S: Scalar>(row: &mut [S], upto: usize) {
    let max = row[..upto].iter().fold(S::neg_infinity(), |m, &v| m.max(v));
    for v in row[..upto].iter_mut() {
        *v -= max;
    }
    S::exp_in_place(&mut row[..upto]);
    let sum = row[..upto].iter().fold(S::zero(), |s, &v| s + v);
    let inv = S::one() / sum;
    for v in row[..upto].iter_mut() {
        *v *= inv;
    }
    for v in row[upto..].iter_mut() {
        *v = S::zero();
    }
}

/// Logits over the vocabulary to log-probabilities, in place.
pub(crate) fn log_softmax_in_place<S: Scalar>(row: &mut [S]) {
    let max = row.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
    let sum = row.iter().fold(S::zero(), |s, &v| s + (v - max).exp());
    let lse = max + sum.ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
}

impl<S: Scalar> Model<S> {
    /// All-zero parameters; see [`crate::init_params`] for a usable start.
    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = vec![S::zero(); layout.total];
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<S>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(ModelError::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn info(&self, name: &str) -> &TensorInfo {
        self.layout.get(name).unwrap_or_else(|| panic!("no tensor named {name}"))
    }

    pub fn tensor(&self, name: &str) -> &[S] {
        let r = self.info(name).range();
        &self.params[r]
    }

    pub fn tensor_mut(&mut self, name: &str) -> &mut [S] {
        let r = self.info(name).range();
        &mut self.params[r]
    }

    /// Same model in another precision.
    pub fn cast<T: Scalar>(&self) -> Model<T> {
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|&p| T::c(p.f64())).collect(),
        }
    }

    fn p(&self, off: usize, len: usize) -> &[S] {
        &self.params[off..off + len]
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<(), ModelError> {
        if ids.len() > self.config.context_len {
            return Err(ModelError::TooLong {
                len: ids.len(),
                context: self.config.context_len,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(ModelError::TokenOutOfRange(bad));
        }
        Ok(())
    }

    /// Runs the blocks and the final norm. Returns the normed hidden states,
    /// and the per-layer caches plus final-norm cache if requested.
    #[allow(clippy::type_complexity)]
    fn trunk(&self, ids: &[TokenId], keep: bool) -> (Vec<S>, Vec<LayerCache<S>>, Option<LnCache<S>>) {
        let cfg = &self.config;
        let (n, d, h) = (ids.len(), cfg.d_model, cfg.n_heads);
        let hd = cfg.head_dim();
        let scale = S::c(1.0 / (hd as f64).sqrt());
        let tok = self.p(self.layout.tok_emb, cfg.vocab_size * d);
        let pos = self.p(self.layout.pos_emb, cfg.context_len * d);
        let mut x = vec![S::zero(); n * d];
        for (i, &t) in ids.iter().enumerate() {
            let t = t as usize;
            for j in 0..d {
                x[i * d + j] = tok[t * d + j] + pos[i * d + j];
            }
        }
        let mut caches = Vec::new();
        for lo in &self.layout.layers {
            let lo: &LayerOffsets = lo;
            let mut ln1 = LnCache {
                xhat: Vec::new(),
                rstd: Vec::new(),
            };
            let mut a = vec![S::zero(); n * d];
            layer_norm(&x, d, self.p(lo.ln1_g, d), self.p(lo.ln1_b, d), &mut a, keep.then_some(&mut ln1));
            let mut qkv = vec![S::zero(); n * 3 * d];
            gemm(n, d, 3 * d, S::one(), &a, rm(d, false), self.p(lo.wqkv, d * 3 * d), rm(3 * d, false), S::zero(), &mut qkv, rm(3 * d, false));
            add_bias(&mut qkv, self.p(lo.bqkv, 3 * d));
            let mut probs = vec![S::zero(); h * n * n];
            let mut att = vec![S::zero(); n * d];
            for head in 0..h {
                let pr = &mut probs[head * n * n..(head + 1) * n * n];
                gemm(n, hd, n, scale, &qkv[head * hd..], (3 * d, 1), &qkv[d + head * hd..], (1, 3 * d), S::zero(), pr, rm(n, false));
                for i in 0..n {
                    softmax_prefix(&mut pr[i * n..(i + 1) * n], i + 1);
                }
                gemm(n, n, hd, S::one(), pr, rm(n, false), &qkv[2 * d + head * hd..], (3 * d, 1), S::zero(), &mut att[head * hd..], (d, 1));
            }
            let mut y = vec![S::zero(); n * d];
            gemm(n, d, d, S::one(), &att, rm(d, false), self.p(lo.wo, d * d), rm(d, false), S::zero(), &mut y, rm(d, false));
            add_bias(&mut y, self.p(lo.bo, d));
            for (xv, yv) in x.iter_mut().zip(&y) {
                *xv += *yv;
            }
            let mut ln2 = LnCache {
                xhat: Vec::new(),
                rstd: Vec::new(),
            };
            let mut bn = vec![S::zero(); n * d];
            layer_norm(&x, d, self.p(lo.ln2_g, d), self.p(lo.ln2_b, d), &mut bn, keep.then_some(&mut ln2));
            let mut h1 = vec![S::zero(); n * 4 * d];
            gemm(n, d, 4 * d, S::one(), &bn, rm(d, false), self.p(lo.w1, d * 4 * d), rm(4 * d, false), S::zero(), &mut h1, rm(4 * d, false));
            add_bias(&mut h1, self.p(lo.b1, 4 * d));
            let mut g = vec![S::zero(); n * 4 * d];
            let mut th = vec![S::zero(); n * 4 * d];
            gelu_rows(&h1, &mut g, &mut th);
            let mut m = vec![S::zero(); n * d];
            gemm(n, 4 * d, d, S::one(), &g, rm(4 * d, false), self.p(lo.w2, 4 * d * d), rm(d, false), S::zero(), &mut m, rm(d, false));
            add_bias(&mut m, self.p(lo.b2, d));
            for (xv, mv) in x.iter_mut().zip(&m) {
                *xv += *mv;
            }
            if keep {
                caches.push(LayerCache {
                    ln1,
                    a,
                    qkv,
                    probs,
                    att,
                    ln2,
                    bn,
                    h1,
                    th,
                    g,
                });
            }
        }
        let mut lnf = LnCache {
            xhat: Vec::new(),
            rstd: Vec::new(),
        };
        let mut f = vec![S::zero(); n * d];
        layer_norm(&x, d, self.p(self.layout.lnf_g, d), self.p(self.layout.lnf_b, d), &mut f, keep.then_some(&mut lnf));
        (f, caches, keep.then_some(lnf))
    }

    /// Logits for every position, row-major `[len × vocab]`.
    pub fn logits(&self, ids: &[TokenId]) -> Result<Vec<S>, ModelError> {
        self.check_ids(ids)?;
        let (v, d) = (self.config.vocab_size, self.config.d_model);
        let n = ids.len();
        let (f, _, _) = self.trunk(ids, false);
        let mut out = vec![S::zero(); n * v];
        gemm(n, d, v, S::one(), &f, rm(d, false), self.p(self.layout.lm_head, d * v), rm(v, false), S::zero(), &mut out, rm(v, false));
        Ok(out)
    }

    /// Mean next-token loss over targets `i ≥ 1` with `mask[i]`.
    pub fn loss(&self, ids: &[TokenId], mask: &[bool]) -> Result<f64, ModelError> {
        let mut sink = Vec::new();
        let (sum, count) = self.run(ids, mask, S::zero(), &mut sink, false)?;
        Ok(if count == 0 { 0.0 } else { sum / count as f64 })
    }

    /// Mean loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, ids: &[TokenId], mask: &[bool]) -> Result<(f64, Vec<S>), ModelError> {
        let count = mask.iter().skip(1).filter(|m| **m).count();
        let mut grads = vec![S::zero(); self.params.len()];
        if count == 0 {
            self.check_ids(ids)?;
            return Ok((0.0, grads));
        }
        let (sum, _) = self.run(ids, mask, S::c(1.0 / count as f64), &mut grads, true)?;
        Ok((sum / count as f64, grads))
    }

    /// Adds `scale · ∂(Σ nll)/∂θ` into `grads`. Returns (Σ nll, #targets).
    pub(crate) fn accumulate(
        &self,
        ids: &[TokenId],
        mask: &[bool],
        scale: S,
        grads: &mut [S],
    ) -> Result<(f64, usize), ModelError> {
        self.run(ids, mask, scale, grads, true)
    }

    fn run(
        &self,
        ids: &[TokenId],
        mask: &[bool],
        scale: S,
        grads: &mut [S],
        backward: bool,
    ) -> Result<(f64, usize), ModelError> {
        self.check_ids(ids)?;
        if mask.len() != ids.len() {
            return Err(ModelError::Shape(format!(
                "mask has {} entries for {} tokens",
                mask.len(),
                ids.len()
            )));
        }
        if backward && grads.len() != self.params.len() {
            return Err(ModelError::Shape("gradient buffer has the wrong length".into()));
        }
        let n = ids.len();
        if n < 2 {
            return Ok((0.0, 0));
        }
        let cfg = &self.config;
        let (v, d) = (cfg.vocab_size, cfg.d_model);
        let rows = n - 1;
        let (f, caches, lnf) = self.trunk(ids, backward);
        let wlm = self.p(self.layout.lm_head, d * v);
        let mut logits = vec![S::zero(); rows * v];
        gemm(rows, d, v, S::one(), &f, rm(d, false), wlm, rm(v, false), S::zero(), &mut logits, rm(v, false));
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..rows {
            let row = &mut logits[i * v..(i + 1) * v];
            let target = ids[i + 1] as usize;
            if !mask[i + 1] {
                row.iter_mut().for_each(|x| *x = S::zero());
                continue;
            }
            log_softmax_in_place(row);
            total -= row[target].f64();
            count += 1;
            if backward {
                // d nll / d logits = softmax - onehot
                for x in row.iter_mut() {
                    *x = x.exp() * scale;
                }
                row[target] -= scale;
            }
        }
        if !backward {
            return Ok((total, count));
        }
        let dlogits = logits;
        let lo = &self.layout;
        gemm(d, rows, v, S::one(), &f, rm(d, true), &dlogits, rm(v, false), S::one(), &mut grads[lo.lm_head..lo.lm_head + d * v], rm(v, false));
        let mut df = vec![S::zero(); n * d];
        gemm(rows, v, d, S::one(), &dlogits, rm(v, false), wlm, rm(v, true), S::zero(), &mut df, rm(d, false));
        let mut dx = vec![S::zero(); n * d];
        let lnf = lnf.expect("cache kept");
        {
            let (gg, rest) = grads[lo.lnf_g..].split_at_mut(d);
            let gb = &mut rest[lo.lnf_b - lo.lnf_g - d..][..d];
            layer_norm_backward(&df, &lnf, self.p(lo.lnf_g, d), d, &mut dx, gg, gb);
        }
        self.backward_blocks(ids, &caches, dx, grads);
        Ok((total, count))
    }

    fn backward_blocks(&self, ids: &[TokenId], caches: &[LayerCache<S>], mut dx: Vec<S>, grads: &mut [S]) {
        let cfg = &self.config;
        let (n, d, h) = (ids.len(), cfg.d_model, cfg.n_heads);
        let hd = cfg.head_dim();
        let scale = S::c(1.0 / (hd as f64).sqrt());
        for (lo, c) in self.layout.layers.iter().zip(caches).rev() {
            // MLP branch
            let mut dg = vec![S::zero(); n * 4 * d];
            gemm(n, d, 4 * d, S::one(), &dx, rm(d, false), self.p(lo.w2, 4 * d * d), rm(d, true), S::zero(), &mut dg, rm(4 * d, false));
            gemm(4 * d, n, d, S::one(), &c.g, rm(4 * d, true), &dx, rm(d, false), S::one(), &mut grads[lo.w2..lo.w2 + 4 * d * d], rm(d, false));
            col_sums_into(&dx, d, &mut grads[lo.b2..lo.b2 + d]);
            for ((gv, hv), tv) in dg.iter_mut().zip(&c.h1).zip(&c.th) {
                *gv *= gelu_grad(*hv, *tv);
            }
            let dh1 = dg;
            let mut dbn = vec![S::zero(); n * d];
            gemm(n, 4 * d, d, S::one(), &dh1, rm(4 * d, false), self.p(lo.w1, d * 4 * d), rm(4 * d, true), S::zero(), &mut dbn, rm(d, false));
            gemm(d, n, 4 * d, S::one(), &c.bn, rm(d, true), &dh1, rm(4 * d, false), S::one(), &mut grads[lo.w1..lo.w1 + d * 4 * d], rm(4 * d, false));
            col_sums_into(&dh1, 4 * d, &mut grads[lo.b1..lo.b1 + 4 * d]);
            {
                let (a, b) = grads.split_at_mut(lo.ln2_b);
                layer_norm_backward(&dbn, &c.ln2, self.p(lo.ln2_g, d), d, &mut dx, &mut a[lo.ln2_g..lo.ln2_g + d], &mut b[..d]);
            }
            // attention branch
            let mut datt = vec![S::zero(); n * d];
            gemm(n, d, d, S::one(), &dx, rm(d, false), self.p(lo.wo, d * d), rm(d, true), S::zero(), &mut datt, rm(d, false));
            gemm(d, n, d, S::one(), &c.att, rm(d, true), &dx, rm(d, false), S::one(), &mut grads[lo.wo..lo.wo + d * d], rm(d, false));
            col_sums_into(&dx, d, &mut grads[lo.bo..lo.bo + d]);
            let mut dqkv = vec![S::zero(); n * 3 * d];
            let mut dp = vec![S::zero(); n * n];
            for head in 0..h {
                let pr = &c.probs[head * n * n..(head + 1) * n * n];
                gemm(n, hd, n, S::one(), &datt[head * hd..], (d, 1), &c.qkv[2 * d + head * hd..], (1, 3 * d), S::zero(), &mut dp, rm(n, false));
                gemm(n, n, hd, S::one(), pr, rm(n, true), &datt[head * hd..], (d, 1), S::zero(), &mut dqkv[2 * d + head * hd..], (3 * d, 1));
                for i in 0..n {
                    let prow = &pr[i * n..(i + 1) * n];
                    let drow = &mut dp[i * n..(i + 1) * n];
                    let dot = (0..=i).fold(S::zero(), |s, j| s + prow[j] * drow[j]);
                    for j in 0..n {
                        drow[j] = if j <= i { prow[j] * (drow[j] - dot) * scale } else { S::zero() };
                    }
                }
                gemm(n, n, hd, S::one(), &dp, rm(n, false), &c.qkv[d + head * hd..], (3 * d, 1), S::zero(), &mut dqkv[head * hd..], (3 * d, 1));
                gemm(n, n, hd, S::one(), &dp, rm(n, true), &c.qkv[head * hd..], (3 * d, 1), S::zero(), &mut dqkv[d + head * hd..], (3 * d, 1));
            }
            let mut da = vec![S::zero(); n * d];
            gemm(n, 3 * d, d, S::one(), &dqkv, rm(3 * d, false), self.p(lo.wqkv, d * 3 * d), rm(3 * d, true), S::zero(), &mut da, rm(d, false));
            gemm(d, n, 3 * d, S::one(), &c.a, rm(d, true), &dqkv, rm(3 * d, false), S::one(), &mut grads[lo.wqkv..lo.wqkv + d * 3 * d], rm(3 * d, false));
            col_sums_into(&dqkv, 3 * d, &mut grads[lo.bqkv..lo.bqkv + 3 * d]);
            {
                let (a, b) = grads.split_at_mut(lo.ln1_b);
                layer_norm_backward(&da, &c.ln1, self.p(lo.ln1_g, d), d, &mut dx, &mut a[lo.ln1_g..lo.ln1_g + d], &mut b[..d]);
            }
        }
        let lo = &self.layout;
        for (i, &t) in ids.iter().enumerate() {
            let t = t as usize;
            for j in 0..d {
                grads[lo.tok_emb + t * d + j] += dx[i * d + j];
                grads[lo.pos_emb + i * d + j] += dx[i * d + j];
            }
        }
    }

    pub fn new_cache(&self) -> KvCache<S> {
        let size = self.config.context_len * self.config.d_model;
        KvCache {
            k: vec![vec![S::zero(); size]; self.config.n_layers],
            v: vec![vec![S::zero(); size]; self.config.n_layers],
            len: 0,
        }
    }

    /// Feeds one token at position `cache.len()` and returns next-token logits.
    pub fn step(&self, token: TokenId, cache: &mut KvCache<S>) -> Result<Vec<S>, ModelError> {
        let cfg = &self.config;
        let (v, d, h) = (cfg.vocab_size, cfg.d_model, cfg.n_heads);
        let hd = cfg.head_dim();
        let pos = cache.len;
        if pos >= cfg.context_len {
            return Err(ModelError::TooLong {
                len: pos + 1,
                context: cfg.context_len,
            });
        }
        if token as usize >= v {
            return Err(ModelError::TokenOutOfRange(token));
        }
        let scale = S::c(1.0 / (hd as f64).sqrt());
        let tok = self.p(self.layout.tok_emb + token as usize * d, d);
        let pe = self.p(self.layout.pos_emb + pos * d, d);
        let mut x: Vec<S> = tok.iter().zip(pe).map(|(a, b)| *a + *b).collect();
        let mut a = vec![S::zero(); d];
        let mut qkv = vec![S::zero(); 3 * d];
        let mut att = vec![S::zero(); d];
        let mut y = vec![S::zero(); d];
        let mut h1 = vec![S::zero(); 4 * d];
        let mut g = vec![S::zero(); 4 * d];
        let mut th = vec![S::zero(); 4 * d];
        let mut scores = vec![S::zero(); pos + 1];
        for (l, lo) in self.layout.layers.iter().enumerate() {
            layer_norm(&x, d, self.p(lo.ln1_g, d), self.p(lo.ln1_b, d), &mut a, None);
            gemm(1, d, 3 * d, S::one(), &a, rm(d, false), self.p(lo.wqkv, d * 3 * d), rm(3 * d, false), S::zero(), &mut qkv, rm(3 * d, false));
            add_bias(&mut qkv, self.p(lo.bqkv, 3 * d));
            cache.k[l][pos * d..(pos + 1) * d].copy_from_slice(&qkv[d..2 * d]);
            cache.v[l][pos * d..(pos + 1) * d].copy_from_slice(&qkv[2 * d..3 * d]);
            let (ks, vs) = (&cache.k[l], &cache.v[l]);
            for head in 0..h {
                let q = &qkv[head * hd..(head + 1) * hd];
                for (j, s) in scores.iter_mut().enumerate() {
                    let k = &ks[j * d + head * hd..j * d + (head + 1) * hd];
                    *s = q.iter().zip(k).fold(S::zero(), |acc, (a, b)| acc + *a * *b) * scale;
                }
                softmax_prefix(&mut scores, pos + 1);
                let o = &mut att[head * hd..(head + 1) * hd];
                o.iter_mut().for_each(|x| *x = S::zero());
                for (j, &p) in scores.iter().enumerate() {
                    let vv = &vs[j * d + head * hd..j * d + (head + 1) * hd];
                    for (ov, vj) in o.iter_mut().zip(vv) {
                        *ov += p * *vj;
                    }
                }
            }
            gemm(1, d, d, S::one(), &att, rm(d, false), self.p(lo.wo, d * d), rm(d, false), S::zero(), &mut y, rm(d, false));
            add_bias(&mut y, self.p(lo.bo, d));
            for (xv, yv) in x.iter_mut().zip(&y) {
                *xv += *yv;
            }
            layer_norm(&x, d, self.p(lo.ln2_g, d), self.p(lo.ln2_b, d), &mut a, None);
            gemm(1, d, 4 * d, S::one(), &a, rm(d, false), self.p(lo.w1, d * 4 * d), rm(4 * d, false), S::zero(), &mut h1, rm(4 * d, false));
            add_bias(&mut h1, self.p(lo.b1, 4 * d));
            gelu_rows(&h1, &mut g, &mut th);
            gemm(1, 4 * d, d, S::one(), &g, rm(4 * d, false), self.p(lo.w2, 4 * d * d), rm(d, false), S::zero(), &mut y, rm(d, false));
            add_bias(&mut y, self.p(lo.b2, d));
            for (xv, yv) in x.iter_mut().zip(&y) {
                *xv += *yv;
            }
        }
        cache.len += 1;
        layer_norm(&x, d, self.p(self.layout.lnf_g, d), self.p(self.layout.lnf_b, d), &mut a, None);
        let mut out = vec![S::zero(); v];
        gemm(1, d, v, S::one(), &a, rm(d, false), self.p(self.layout.lm_head, d * v), rm(v, false), S::zero(), &mut out, rm(v, false));
        Ok(out)
    }
}
