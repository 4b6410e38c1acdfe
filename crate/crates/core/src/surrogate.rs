//! A small fully connected network predicting the two scores `(m̂, ô)` of a
//! rotation from its encoding, trained with the generalized KL divergence
//! against oracle scores. Gradients are written out by hand.

use std::io::{BufRead, BufReader, Read, Write as _};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{precompute_gt_distribution, sample_from_pool, score_rotations, ImageAlignedCloud, ScoredDistribution};
use crate::encoding::EncodingSpec;
use crate::error::{Error, Result};
use crate::exec;
use crate::rotation::Rotation;
use crate::shape::ShapeModel;

pub const HIDDEN: usize = 256;

/// Affine layers with rectifiers between them. `weights[l]` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// `[input_dim, 256, 256, 256, 2]` with Glorot-uniform weights and zero biases.
    pub fn standard(input_dim: usize, seed: u64) -> Result<Self> {
        Self::glorot(&[input_dim, HIDDEN, HIDDEN, HIDDEN, 2], seed)
    }

    pub fn glorot(dims: &[usize], seed: u64) -> Result<Self> {
        let mut mlp = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut mlp.weights {
            let (fan_out, fan_in) = w.dim();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.iter_mut().for_each(|x| *x = rng.random_range(-a..a));
        }
        Ok(mlp)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer sizes {dims:?}")));
        }
        if dims[dims.len() - 1] != 2 {
            return Err(Error::InvalidArgument("the output layer must have 2 units".into()));
        }
        Ok(Self {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|d| Array2::zeros((d[1], d[0]))).collect(),
            biases: dims[1..].iter().map(|&d| Array1::zeros(d)).collect(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn n_params(&self) -> usize {
        self.dims.windows(2).map(|d| d[1] * (d[0] + 1)).sum()
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                left: p.len(),
                right: self.n_params(),
            });
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for x in w.iter_mut().chain(b.iter_mut()) {
                *x = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::LengthMismatch {
                what: "encoding vs network input",
                left: dim,
                right: self.input_dim(),
            });
        }
        Ok(())
    }

    /// `(m̂, ô)` for one encoding.
    pub fn forward(&self, enc: &[f64]) -> Result<(f64, f64)> {
        self.check_input(enc.len())?;
        let x = ArrayView2::from_shape((1, enc.len()), enc).expect("row vector");
        let out = self.forward_batch(x)?;
        Ok((out[[0, 0]], out[[0, 1]]))
    }

    /// Row-wise forward pass: `batch × input_dim` to `batch × 2`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        Ok(self.activations(x).pop().expect("at least one layer"))
    }

    /// Outputs of every layer (after the rectifier on hidden layers).
    fn activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let last = self.weights.len() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = if l == 0 { x } else { acts[l - 1].view() };
            let mut z = input.dot(&w.t()) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dims: Vec<String> = self.dims.iter().map(usize::to_string).collect();
        let mut out = format!("mlp {}\n", dims.join(" ")).into_bytes();
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = BufReader::new(bytes);
        let mut header = String::new();
        reader
            .read_line(&mut header)
            .map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        let mut words = header.split_whitespace();
        if words.next() != Some("mlp") {
            return Err(Error::parse("checkpoint", "missing `mlp` header"));
        }
        let dims = words
            .map(|w| w.parse::<usize>().map_err(|e| Error::parse("checkpoint header", e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let mut mlp = Self::zeros(&dims)?;
        let mut body = Vec::new();
        reader.read_to_end(&mut body).map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        if body.len() != 8 * mlp.n_params() {
            return Err(Error::parse(
                "checkpoint",
                format!("expected {} parameters, found {} bytes", mlp.n_params(), body.len()),
            ));
        }
        let p: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        mlp.set_params(&p)?;
        Ok(mlp)
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Parameter gradients, shaped like the network.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    /// Flattened in the order of [`Mlp::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// GKL between min-shifted exponentials of target scores `t` and predicted
/// scores `u`, and `dL/du`.
///
/// With `a = t − min t`, `b = u − min u`, `μ = e^{−a}`, `ν = e^{−b}`:
/// `L = Σ μ(b − a) − μ + ν`, `∂L/∂b = μ − ν`, and the shift routes
/// `−Σ(μ − ν)` to the argmin of `u`.
pub fn gkl_of_scores(target: &[f64], predicted: &[f64]) -> (f64, Vec<f64>) {
    let t_min = target.iter().copied().fold(f64::INFINITY, f64::min);
    let (k, u_min) = predicted
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, u)| if u < best.1 { (i, u) } else { best });
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(target.len());
    for (t, u) in target.iter().zip(predicted) {
        let (a, b) = (t - t_min, u - u_min);
        let (mu, nu) = ((-a).exp(), (-b).exp());
        loss += mu * (b - a) - mu + nu;
        grad.push(mu - nu);
    }
    let total: f64 = grad.iter().sum();
    grad[k] -= total;
    (loss, grad)
}

/// Loss and gradients for one batch of encodings with oracle scores.
pub fn loss_and_grad(
    mlp: &Mlp,
    enc: ArrayView2<f64>,
    m_target: &[f64],
    o_target: &[f64],
    beta_s: f64,
    beta_f: f64,
) -> Result<(f64, Gradients)> {
    let n = enc.nrows();
    check_batch(mlp, enc, m_target, o_target)?;
    let acts = mlp.activations(enc);
    let out = acts.last().expect("output layer");
    let target: Vec<f64> = m_target.iter().zip(o_target).map(|(m, o)| beta_s * m + beta_f * o).collect();
    let predicted: Vec<f64> = out.rows().into_iter().map(|r| beta_s * r[0] + beta_f * r[1]).collect();
    let (loss, du) = gkl_of_scores(&target, &predicted);

    let mut delta = Array2::from_shape_fn((n, 2), |(i, c)| du[i] * if c == 0 { beta_s } else { beta_f });
    let layers = mlp.weights.len();
    let mut gw = Vec::with_capacity(layers);
    let mut gb = Vec::with_capacity(layers);
    for l in (0..layers).rev() {
        let input = if l == 0 { enc } else { acts[l - 1].view() };
        gw.push(delta.t().dot(&input));
        gb.push(delta.sum_axis(Axis(0)));
        if l > 0 {
            let mut back = delta.dot(&mlp.weights[l]);
            back.zip_mut_with(&acts[l - 1], |d, a| {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    gw.reverse();
    gb.reverse();
    Ok((loss, Gradients { weights: gw, biases: gb }))
}

/// The loss alone (forward pass only).
pub fn loss(mlp: &Mlp, enc: ArrayView2<f64>, m_target: &[f64], o_target: &[f64], beta_s: f64, beta_f: f64) -> Result<f64> {
    check_batch(mlp, enc, m_target, o_target)?;
    let out = mlp.forward_batch(enc)?;
    let target: Vec<f64> = m_target.iter().zip(o_target).map(|(m, o)| beta_s * m + beta_f * o).collect();
    let predicted: Vec<f64> = out.rows().into_iter().map(|r| beta_s * r[0] + beta_f * r[1]).collect();
    Ok(gkl_of_scores(&target, &predicted).0)
}

fn check_batch(mlp: &Mlp, enc: ArrayView2<f64>, m: &[f64], o: &[f64]) -> Result<()> {
    mlp.check_input(enc.ncols())?;
    if enc.nrows() == 0 {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    for (what, len) in [("sdf targets", m.len()), ("feature targets", o.len())] {
        if len != enc.nrows() {
            return Err(Error::LengthMismatch {
                what,
                left: len,
                right: enc.nrows(),
            });
        }
    }
    Ok(())
}

/// Encodings of `rotations`, one per row.
pub fn encode_batch(spec: &EncodingSpec, rotations: &[Rotation]) -> Array2<f64> {
    let dim = spec.dim();
    let mut data = Vec::with_capacity(rotations.len() * dim);
    for r in rotations {
        spec.encode_into(r, &mut data);
    }
    Array2::from_shape_vec((rotations.len(), dim), data).expect("encoding length")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over the run.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub encoding: EncodingSpec,
    pub beta_s: f64,
    pub beta_f: f64,
    pub top_pool: usize,
    pub n_mode: usize,
    pub n_uniform: usize,
    /// The sampling pool: grid level, then rounds refining the top cells.
    pub pool_level: u32,
    pub pool_refine_rounds: u32,
    pub pool_refine_top_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 1e-3,
            optimizer: Optimizer::Sgd,
            schedule: LrSchedule::Constant,
            seed: 0,
            encoding: EncodingSpec::default(),
            beta_s: 50.0,
            beta_f: 50.0,
            top_pool: 20_000,
            n_mode: 3000,
            n_uniform: 1095,
            pool_level: 5,
            pool_refine_rounds: 2,
            pool_refine_top_k: 20_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("train.steps must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("train.learning_rate must be positive".into()));
        }
        if self.n_mode > self.top_pool {
            return Err(Error::InvalidArgument("train.n_mode exceeds train.top_pool".into()));
        }
        if !(self.beta_s >= 0.0 && self.beta_f >= 0.0) {
            return Err(Error::InvalidArgument("temperatures must be nonnegative".into()));
        }
        self.encoding.validate()
    }

    pub fn batch_size(&self) -> usize {
        self.n_mode + self.n_uniform + 1
    }
}

/// Per-parameter optimizer state.
struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn apply_update(params: &mut [f64], grad: &[f64], cfg: &TrainConfig, step: usize, state: &mut OptState) {
    let lr = match cfg.schedule {
        LrSchedule::Constant => cfg.learning_rate,
        LrSchedule::Cosine => 0.5 * cfg.learning_rate * (1.0 + (std::f64::consts::PI * step as f64 / cfg.steps as f64).cos()),
    };
    match cfg.optimizer {
        Optimizer::Sgd => params.iter_mut().zip(grad).for_each(|(p, g)| *p -= lr * g),
        Optimizer::Adam { beta1, beta2, eps } => {
            state.t += 1;
            let (c1, c2) = (1.0 - beta1.powi(state.t), 1.0 - beta2.powi(state.t));
            for i in 0..params.len() {
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                params[i] -= lr * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub mlp: Mlp,
    pub losses: Vec<f64>,
}

/// Builds the sampling pool from `cfg` and trains against `cloud`.
pub fn train(model: &ShapeModel, cloud: &ImageAlignedCloud, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let pool = precompute_gt_distribution(
        model,
        cloud,
        cfg.pool_level,
        cfg.pool_refine_rounds,
        cfg.pool_refine_top_k,
        cfg.beta_s,
        cfg.beta_f,
    )?;
    train_with_pool(model, cloud, &pool.dist, cfg)
}

/// Each step draws a mode-focused batch from the `top_pool` densest entries
/// of `pool`, scores it with the oracle and takes one optimizer step.
pub fn train_with_pool(model: &ShapeModel, cloud: &ImageAlignedCloud, pool: &ScoredDistribution, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if cfg.top_pool > pool.len() {
        return Err(Error::PoolTooLarge {
            pool: cfg.top_pool,
            len: pool.len(),
        });
    }
    let top = pool.top_indices(cfg.top_pool);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp = Mlp::standard(cfg.encoding.dim(), rng.next_u64())?;
    let mut params = mlp.params();
    let mut state = OptState {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let batch = sample_from_pool(pool.rotations(), &top, cloud.source_rotation(), cfg.n_mode, cfg.n_uniform, rng.next_u64())?;
        let (m, o) = score_rotations(model, cloud, &batch)?;
        let enc = encode_batch(&cfg.encoding, &batch);
        let (l, grads) = loss_and_grad(&mlp, enc.view(), &m, &o, cfg.beta_s, cfg.beta_f)?;
        if !l.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at step {} (loss {l})", losses.len())));
        }
        apply_update(&mut params, &grads.flatten(), cfg, losses.len(), &mut state);
        losses.push(l);
        mlp.set_params(&params)?;
    }
    Ok(Trained { mlp, losses })
}

/// CSV `step,loss`.
pub fn loss_trace_csv(losses: &[f64]) -> String {
    let mut s = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{i},{l:.17e}\n"));
    }
    s
}

pub fn write_loss_trace(losses: &[f64], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(loss_trace_csv(losses).as_bytes()).map_err(|e| Error::io(path, e))
}

/// Network scores for every rotation, normalized like a tabulated oracle.
pub fn predict_distribution(
    mlp: &Mlp,
    encoding: &EncodingSpec,
    rotations: &[Rotation],
    beta_s: f64,
    beta_f: f64,
) -> Result<ScoredDistribution> {
    mlp.check_input(encoding.dim())?;
    const CHUNK: usize = 2048;
    let chunks = exec::map_range(rotations.len().div_ceil(CHUNK), |c| {
        let rows = &rotations[c * CHUNK..((c + 1) * CHUNK).min(rotations.len())];
        mlp.forward_batch(encode_batch(encoding, rows).view()).expect("checked input dim")
    });
    let (mut m, mut o) = (Vec::with_capacity(rotations.len()), Vec::with_capacity(rotations.len()));
    for out in &chunks {
        m.extend(out.slice(s![.., 0]).iter());
        o.extend(out.slice(s![.., 1]).iter());
    }
    ScoredDistribution::equivolumetric(rotations.to_vec(), m, o, beta_s, beta_f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::gkl;
    use crate::rotation::sample_haar;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    /// Straightforward per-sample forward pass with explicit loops.
    fn naive_forward(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = mlp.weights().len() - 1;
        for (l, (w, b)) in mlp.weights().iter().zip(mlp.biases()).enumerate() {
            let mut z = vec![0.0; w.nrows()];
            for i in 0..w.nrows() {
                let mut acc = b[i];
                for j in 0..w.ncols() {
                    acc += w[[i, j]] * a[j];
                }
                z[i] = if l < last { acc.max(0.0) } else { acc };
            }
            a = z;
        }
        a
    }

    fn random_batch(n: usize, dim: usize, seed: u64) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0));
        let m = (0..n).map(|_| rng.random_range(0.0..0.2)).collect();
        let o = (0..n).map(|_| rng.random_range(0.0..0.2)).collect();
        (x, m, o)
    }

    /// Central differences carry up to ~ε·|L|/h of rounding noise, which is
    /// arbitrarily large relative to a (near-)zero gradient. The floor keeps
    /// that noise at 1e-5 of the relative tolerance scale.
    fn fd_noise_floor(loss: f64, h: f64) -> f64 {
        1e5 * f64::EPSILON * loss.abs().max(1.0) / h
    }

    /// Which rectifiers are active, plus which batch entry attains the
    /// minimum predicted score: the loss is smooth while these stay fixed.
    fn smooth_piece(mlp: &Mlp, x: ArrayView2<f64>, beta_s: f64, beta_f: f64) -> Vec<bool> {
        let acts = mlp.activations(x);
        let (out, hidden) = acts.split_last().unwrap();
        let mut piece: Vec<bool> = hidden.iter().flat_map(|a| a.iter().map(|v| *v > 0.0)).collect();
        let u: Vec<f64> = out.rows().into_iter().map(|r| beta_s * r[0] + beta_f * r[1]).collect();
        let k = (0..u.len()).min_by(|&a, &b| u[a].total_cmp(&u[b])).unwrap();
        piece.extend((0..u.len()).map(|i| i == k));
        piece
    }

    /// Worst relative error between analytic and numerical gradients over
    /// `coords` coordinates (at least one weight and one bias per layer).
    /// Where a ±h step crosses a kink, the one-sided difference on the
    /// smooth side is used instead; coordinates with kinks on both sides
    /// are replaced by fresh draws.
    fn fd_check(dims: &[usize], seed: u64, coords: usize) -> f64 {
        let (bs, bf) = (3.0, 2.0);
        let mut mlp = Mlp::glorot(dims, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        mlp.biases_mut().iter_mut().for_each(|b| b.iter_mut().for_each(|x| *x = rng.random_range(-0.1..0.1)));
        let (x, m, o) = random_batch(8, dims[0], seed + 2);
        let (l0, g) = loss_and_grad(&mlp, x.view(), &m, &o, bs, bf).unwrap();
        let g = g.flatten();
        let p0 = mlp.params();
        let piece0 = smooth_piece(&mlp, x.view(), bs, bf);
        let (h, h_one) = (1e-5, 1e-7);
        let mut eval = |k: usize, step: f64| {
            let mut p = p0.clone();
            p[k] += step;
            mlp.set_params(&p).unwrap();
            (loss(&mlp, x.view(), &m, &o, bs, bf).unwrap(), smooth_piece(&mlp, x.view(), bs, bf) == piece0)
        };
        let mut picks = Vec::new();
        let mut offset = 0;
        for d in dims.windows(2) {
            picks.push(offset + rng.random_range(0..d[0] * d[1]));
            picks.push(offset + d[0] * d[1] + rng.random_range(0..d[1]));
            offset += d[1] * (d[0] + 1);
        }
        let (mut worst, mut checked, mut i) = (0.0f64, 0, 0);
        while checked < coords {
            assert!(i < 50 * coords, "no smooth coordinates");
            let k = picks.get(i).copied().unwrap_or_else(|| rng.random_range(0..p0.len()));
            i += 1;
            let (up, up_smooth) = eval(k, h);
            let (down, down_smooth) = eval(k, -h);
            let (fd, floor) = match (up_smooth, down_smooth) {
                (true, true) => ((up - down) / (2.0 * h), fd_noise_floor(l0, h)),
                (true, false) => ((eval(k, h_one).0 - l0) / h_one, fd_noise_floor(l0, h_one)),
                (false, true) => ((l0 - eval(k, -h_one).0) / h_one, fd_noise_floor(l0, h_one)),
                (false, false) => continue,
            };
            worst = worst.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(floor));
            checked += 1;
        }
        worst
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mlp = Mlp::zeros(&[5, 4, 2]).unwrap();
        assert_eq!(mlp.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), (0.0, 0.0));
        assert!(matches!(mlp.forward(&[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn single_hidden_unit_is_a_rectifier() {
        let mut mlp = Mlp::zeros(&[2, 1, 2]).unwrap();
        mlp.weights_mut()[0][[0, 0]] = 1.0;
        mlp.weights_mut()[1][[0, 0]] = 1.0;
        assert_eq!(mlp.forward(&[-1.0, 7.0]).unwrap(), (0.0, 0.0));
        assert_eq!(mlp.forward(&[2.0, 7.0]).unwrap(), (2.0, 0.0));
    }

    #[test]
    fn batched_forward_matches_naive_loops() {
        let mlp = Mlp::standard(12, 4).unwrap();
        let (x, _, _) = random_batch(6, 12, 5);
        let out = mlp.forward_batch(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let naive = naive_forward(&mlp, row.as_slice().unwrap());
            assert!((out[[i, 0]] - naive[0]).abs() < 1e-12);
            assert!((out[[i, 1]] - naive[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn glorot_bounds() {
        let mlp = Mlp::standard(144, 9).unwrap();
        assert_eq!(mlp.dims(), &[144, 256, 256, 256, 2]);
        let a = (6.0f64 / 400.0).sqrt();
        assert!(mlp.weights()[0].iter().all(|w| w.abs() < a));
        assert!(mlp.weights()[0].iter().any(|w| w.abs() > 0.9 * a));
        assert_eq!(Mlp::standard(144, 9).unwrap(), mlp);
    }

    #[test]
    fn loss_zero_when_prediction_matches_target() {
        let mut mlp = Mlp::zeros(&[3, 4, 2]).unwrap();
        mlp.biases_mut()[1][0] = 0.25;
        let (x, _, _) = random_batch(5, 3, 6);
        let (l, g) = loss_and_grad(&mlp, x.view(), &[0.25; 5], &[0.0; 5], 2.0, 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_element_batch_reduces_to_scalar_gkl() {
        let mlp = Mlp::standard(3, 1).unwrap();
        let (x, m, o) = random_batch(1, 3, 7);
        let l = loss(&mlp, x.view(), &m, &o, 5.0, 5.0).unwrap();
        // Both weight vectors are [1] after their own min shift.
        assert_eq!(l, gkl(&[1.0], &[1.0]).unwrap());
    }

    #[test]
    fn score_loss_equals_gkl_of_shifted_weights() {
        let t = [0.3, 1.2, 0.0, 2.5];
        let u = [1.0, 0.4, 0.9, 0.6];
        let mu: Vec<f64> = t.iter().map(|x: &f64| (-x).exp()).collect();
        let nu: Vec<f64> = u.iter().map(|x: &f64| (0.4 - x).exp()).collect();
        assert!((gkl_of_scores(&t, &u).0 - gkl(&mu, &nu).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn gradients_match_central_differences_at_full_size() {
        let worst = fd_check(&[144, 256, 256, 256, 2], 21, 50);
        assert!(worst < 1e-4, "relative error {worst}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn gradient_check_every_layer(seed in 0u64..10_000, h1 in 2usize..12, h2 in 2usize..12) {
            let worst = fd_check(&[5, h1, h2, 7, 2], seed, 30);
            prop_assert!(worst < 1e-4, "relative error {}", worst);
        }
    }

    #[test]
    fn loss_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let n = rng.random_range(1..30);
            let t: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert!(gkl_of_scores(&t, &u).0 >= 0.0);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mlp = Mlp::glorot(&[4, 3, 2], 3).unwrap();
        let bytes = mlp.to_bytes();
        assert!(bytes.starts_with(b"mlp 4 3 2\n"));
        assert_eq!(bytes.len(), 10 + 8 * mlp.n_params());
        assert_eq!(Mlp::from_bytes(&bytes).unwrap(), mlp);
        assert!(Mlp::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Mlp::from_bytes(b"nn 4 2\n").is_err());
    }

    #[test]
    fn zero_network_predicts_uniform() {
        let rots = sample_haar(50, 3);
        let spec = EncodingSpec::cube_pe(2);
        let mlp = Mlp::zeros(&[spec.dim(), 8, 2]).unwrap();
        let d = predict_distribution(&mlp, &spec, &rots, 50.0, 50.0).unwrap();
        assert!(d.probs().iter().all(|p| (p - 1.0 / 50.0).abs() < 1e-15));
    }

    #[test]
    fn prediction_commutes_with_permutation() {
        let rots = sample_haar(40, 4);
        let spec = EncodingSpec::cube_pe(2);
        let mlp = Mlp::standard(spec.dim(), 5).unwrap();
        let d = predict_distribution(&mlp, &spec, &rots, 1.0, 1.0).unwrap();
        let perm: Vec<usize> = (0..40).map(|i| (i * 7) % 40).collect();
        let shuffled: Vec<Rotation> = perm.iter().map(|&i| rots[i]).collect();
        let e = predict_distribution(&mlp, &spec, &shuffled, 1.0, 1.0).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(e.sdf_scores()[k], d.sdf_scores()[i]);
            assert!((e.probs()[k] - d.probs()[i]).abs() < 1e-15);
        }
    }

    fn small_training(steps: usize, seed: u64) -> (Trained, Mlp) {
        let model = ShapeModel::preset("cube").unwrap();
        let r_gt = Rotation::from_axis_angle(crate::Vec3::new(0.3, -0.5, 0.8), 0.9);
        let pts: Vec<crate::Vec3> = crate::shape::mesh::box_mesh(1.0, 1).vertices().to_vec();
        let cloud = ImageAlignedCloud::from_model_points(&model, &pts, &r_gt).unwrap();
        let cfg = TrainConfig {
            steps,
            seed,
            top_pool: 200,
            n_mode: 60,
            n_uniform: 40,
            pool_level: 1,
            pool_refine_rounds: 0,
            beta_s: 5.0,
            beta_f: 5.0,
            ..TrainConfig::default()
        };
        let init = {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Mlp::standard(cfg.encoding.dim(), rng.next_u64()).unwrap()
        };
        (train(&model, &cloud, &cfg).unwrap(), init)
    }

    #[test]
    fn one_step_changes_the_weights() {
        let (t, init) = small_training(1, 3);
        assert_eq!(t.losses.len(), 1);
        assert_ne!(t.mlp, init);
    }

    #[test]
    fn training_is_deterministic_and_makes_progress() {
        let (a, _) = small_training(60, 4);
        let (b, _) = small_training(60, 4);
        assert_eq!(a.mlp.to_bytes(), b.mlp.to_bytes());
        assert!(a.losses.iter().all(|l| *l >= 0.0));
        let head: f64 = a.losses[..10].iter().sum();
        let tail: f64 = a.losses[50..].iter().sum();
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn config_guards() {
        assert!(TrainConfig { steps: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert_eq!(TrainConfig::default().batch_size(), 4096);
    }
}
