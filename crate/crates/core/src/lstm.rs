//! Branch-level recurrent classifier: stacked LSTM layers over per-tweet
//! feature vectors, feed-forward ReLU layers, and a per-timestep softmax over
//! the four stance labels.
//!
//! Branches of one thread overlap (they all start at the source tweet), so
//! the cross-entropy loss is masked to each tweet's first occurrence across
//! the thread's branches. Training uses mini-batch Adam with seeded shuffling
//! and dropout on dense-layer inputs; everything is deterministic given the
//! seeds. Hyperparameters are picked by seeded random search over a declared
//! space, scored by macro-F1 on a held-out development event.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::label::{StanceLabel, NUM_LABELS};
use crate::numeric;
use crate::optim::{Adam, AdamConfig};

const L: usize = NUM_LABELS;
/// Gate order: input, forget, output, candidate.
const GATES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum LstmError {
    ShapeMismatch { expected: usize, got: usize },
    /// The loss mask has no active position.
    EmptyMask,
    NonFiniteLoss,
    EmptyTrainingSet,
    InvalidConfig(&'static str),
}

impl core::fmt::Display for LstmError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LstmError::ShapeMismatch { expected, got } => {
                write!(f, "input width {got} does not match model width {expected}")
            }
            LstmError::EmptyMask => f.write_str("novelty mask has no active position"),
            LstmError::NonFiniteLoss => f.write_str("non-finite loss"),
            LstmError::EmptyTrainingSet => f.write_str("no training branches"),
            LstmError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LstmError {}

/// Network shape and regularization knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmArch {
    pub input_dim: usize,
    /// Hidden sizes of the stacked recurrent layers (at least one).
    pub lstm_sizes: Vec<usize>,
    /// Hidden sizes of the feed-forward ReLU layers (may be empty).
    pub dense_sizes: Vec<usize>,
    /// Dropout rate on dense-layer inputs, in [0, 1).
    pub dropout: f64,
    /// L2 strength on weight matrices (biases excluded).
    pub l2: f64,
}

impl LstmArch {
    pub fn validate(&self) -> Result<(), LstmError> {
        if self.lstm_sizes.is_empty() {
            return Err(LstmError::InvalidConfig("need at least one recurrent layer"));
        }
        if self.lstm_sizes.iter().chain(&self.dense_sizes).any(|&s| s == 0) {
            return Err(LstmError::InvalidConfig("zero-width layer"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(LstmError::InvalidConfig("dropout must be in [0, 1)"));
        }
        if self.l2 < 0.0 {
            return Err(LstmError::InvalidConfig("l2 must be non-negative"));
        }
        Ok(())
    }
}

/// A contiguous row-major block inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Block {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Block {
    fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        self.offset + r * self.cols + c
    }
}

#[derive(Debug, Clone)]
struct LstmBlocks {
    input_size: usize,
    hidden: usize,
    /// Per gate: weights on the layer input.
    w: [Block; GATES],
    /// Per gate: weights on the previous hidden state.
    u: [Block; GATES],
    /// Per gate: bias.
    b: [Block; GATES],
}

#[derive(Debug, Clone)]
struct ParamLayout {
    lstm: Vec<LstmBlocks>,
    dense: Vec<(Block, Block)>,
    output: (Block, Block),
    total: usize,
}

impl ParamLayout {
    fn new(arch: &LstmArch) -> Self {
        let mut offset = 0;
        let mut block = |rows: usize, cols: usize| {
            let b = Block { offset, rows, cols };
            offset += b.len();
            b
        };
        let mut lstm = Vec::new();
        let mut in_size = arch.input_dim;
        for &h in &arch.lstm_sizes {
            let w = core::array::from_fn(|_| block(h, in_size));
            let u = core::array::from_fn(|_| block(h, h));
            let b = core::array::from_fn(|_| block(h, 1));
            lstm.push(LstmBlocks {
                input_size: in_size,
                hidden: h,
                w,
                u,
                b,
            });
            in_size = h;
        }
        let mut dense = Vec::new();
        for &g in &arch.dense_sizes {
            let w = block(g, in_size);
            let b = block(g, 1);
            dense.push((w, b));
            in_size = g;
        }
        let output = (block(L, in_size), block(L, 1));
        ParamLayout {
            lstm,
            dense,
            output,
            total: offset,
        }
    }

    /// Indices belonging to weight matrices (for the regularizer).
    fn weight_blocks(&self) -> Vec<Block> {
        let mut blocks = Vec::new();
        for l in &self.lstm {
            blocks.extend_from_slice(&l.w);
            blocks.extend_from_slice(&l.u);
        }
        for (w, _) in &self.dense {
            blocks.push(*w);
        }
        blocks.push(self.output.0);
        blocks
    }
}

/// The model: shape plus a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchLstmModel {
    pub arch: LstmArch,
    pub params: Vec<f64>,
}

impl BranchLstmModel {
    pub fn zeros(arch: LstmArch) -> Result<Self, LstmError> {
        arch.validate()?;
        let layout = ParamLayout::new(&arch);
        Ok(BranchLstmModel {
            arch,
            params: vec![0.0; layout.total],
        })
    }

    /// Glorot-uniform weight matrices, zero biases, seeded.
    pub fn init(arch: LstmArch, seed: u64) -> Result<Self, LstmError> {
        let mut model = Self::zeros(arch)?;
        let layout = ParamLayout::new(&model.arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |params: &mut [f64], b: &Block, fan_in: usize, fan_out: usize| {
            let s = numeric::sqrt(6.0 / (fan_in + fan_out) as f64);
            for k in 0..b.len() {
                params[b.offset + k] = rng.gen_range(-s..s);
            }
        };
        for l in &layout.lstm {
            for g in 0..GATES {
                fill(&mut model.params, &l.w[g], l.input_size, l.hidden);
                fill(&mut model.params, &l.u[g], l.hidden, l.hidden);
            }
        }
        for (w, _) in &layout.dense {
            fill(&mut model.params, w, w.cols, w.rows);
        }
        let (w, _) = layout.output;
        fill(&mut model.params, &w, w.cols, w.rows);
        Ok(model)
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.arch)
    }

    /// Squared norm of the weight matrices (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        let layout = self.layout();
        let mut s = 0.0;
        for b in layout.weight_blocks() {
            for k in 0..b.len() {
                let v = self.params[b.offset + k];
                s += v * v;
            }
        }
        s
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + numeric::exp(-x))
}

/// Everything the backward pass needs, per timestep.
struct Tape {
    /// [layer][t]: gate activations and states.
    gates: Vec<Vec<GateState>>,
    /// [t][dense layer]: post-dropout inputs.
    dense_in: Vec<Vec<Vec<f64>>>,
    /// [t][dense layer]: post-ReLU activations.
    dense_act: Vec<Vec<Vec<f64>>>,
    /// [t][dense layer]: dropout scale per unit (empty in eval mode).
    drop: Vec<Vec<Vec<f64>>>,
    probs: Vec<[f64; L]>,
}

struct GateState {
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
    h: Vec<f64>,
}

fn gate_preactivation(
    params: &[f64],
    w: &Block,
    u: &Block,
    b: &Block,
    x: &[f64],
    h_prev: &[f64],
    out: &mut [f64],
) {
    for r in 0..w.rows {
        let mut acc = params[b.at(r, 0)];
        for (c, &xc) in x.iter().enumerate() {
            acc += params[w.at(r, c)] * xc;
        }
        for (c, &hc) in h_prev.iter().enumerate() {
            acc += params[u.at(r, c)] * hc;
        }
        out[r] = acc;
    }
}

fn run_forward(
    model: &BranchLstmModel,
    layout: &ParamLayout,
    inputs: &[Vec<f64>],
    dropout_seed: Option<u64>,
) -> Result<Tape, LstmError> {
    let steps = inputs.len();
    for x in inputs {
        if x.len() != model.arch.input_dim {
            return Err(LstmError::ShapeMismatch {
                expected: model.arch.input_dim,
                got: x.len(),
            });
        }
    }
    let params = &model.params;
    let mut drop_rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let rate = model.arch.dropout;

    let mut gates: Vec<Vec<GateState>> = layout.lstm.iter().map(|_| Vec::new()).collect();
    let mut dense_in = Vec::with_capacity(steps);
    let mut dense_act = Vec::with_capacity(steps);
    let mut drop = Vec::with_capacity(steps);
    let mut probs = Vec::with_capacity(steps);

    for t in 0..steps {
        let mut x = inputs[t].clone();
        for (li, lb) in layout.lstm.iter().enumerate() {
            let h = lb.hidden;
            let zeros = vec![0.0; h];
            let (h_prev, c_prev) = if t == 0 {
                (zeros.clone(), zeros.clone())
            } else {
                let prev = &gates[li][t - 1];
                (prev.h.clone(), prev.c.clone())
            };
            let mut pre = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
            for g in 0..GATES {
                gate_preactivation(params, &lb.w[g], &lb.u[g], &lb.b[g], &x, &h_prev, &mut pre[g]);
            }
            let i: Vec<f64> = pre[0].iter().map(|&a| sigmoid(a)).collect();
            let f: Vec<f64> = pre[1].iter().map(|&a| sigmoid(a)).collect();
            let o: Vec<f64> = pre[2].iter().map(|&a| sigmoid(a)).collect();
            let g: Vec<f64> = pre[3].iter().map(|&a| numeric::tanh(a)).collect();
            let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
            let tc: Vec<f64> = c.iter().map(|&v| numeric::tanh(v)).collect();
            let hh: Vec<f64> = (0..h).map(|k| o[k] * tc[k]).collect();
            x = hh.clone();
            gates[li].push(GateState {
                i,
                f,
                o,
                g,
                c,
                tc,
                h: hh,
            });
        }

        let mut t_in = Vec::with_capacity(layout.dense.len());
        let mut t_act = Vec::with_capacity(layout.dense.len());
        let mut t_drop = Vec::with_capacity(layout.dense.len());
        for (w, b) in &layout.dense {
            let mask: Vec<f64> = match &mut drop_rng {
                Some(rng) if rate > 0.0 => (0..x.len())
                    .map(|_| {
                        if rng.gen::<f64>() < rate {
                            0.0
                        } else {
                            1.0 / (1.0 - rate)
                        }
                    })
                    .collect(),
                _ => Vec::new(),
            };
            let dropped: Vec<f64> = if mask.is_empty() {
                x.clone()
            } else {
                x.iter().zip(&mask).map(|(v, m)| v * m).collect()
            };
            let mut act = vec![0.0; w.rows];
            for r in 0..w.rows {
                let mut acc = params[b.at(r, 0)];
                for (c, &v) in dropped.iter().enumerate() {
                    acc += params[w.at(r, c)] * v;
                }
                act[r] = numeric::max(acc, 0.0);
            }
            t_in.push(dropped);
            t_drop.push(mask);
            x = act.clone();
            t_act.push(act);
        }

        let (w, b) = &layout.output;
        let mut z = [0.0; L];
        for (r, zr) in z.iter_mut().enumerate() {
            let mut acc = params[b.at(r, 0)];
            for (c, &v) in x.iter().enumerate() {
                acc += params[w.at(r, c)] * v;
            }
            *zr = acc;
        }
        numeric::softmax_in_place(&mut z);
        probs.push(z);
        dense_in.push(t_in);
        dense_act.push(t_act);
        drop.push(t_drop);
    }

    Ok(Tape {
        gates,
        dense_in,
        dense_act,
        drop,
        probs,
    })
}

/// Per-timestep class probabilities. Dropout is applied only in train mode,
/// with masks drawn from the seed.
pub fn forward(
    model: &BranchLstmModel,
    inputs: &[Vec<f64>],
    train_mode: bool,
    dropout_seed: u64,
) -> Result<Vec<[f64; L]>, LstmError> {
    let layout = model.layout();
    let seed = if train_mode { Some(dropout_seed) } else { None };
    Ok(run_forward(model, &layout, inputs, seed)?.probs)
}

/// Mean masked cross-entropy plus (l2/2) * ||weight matrices||^2.
pub fn masked_loss(
    probs: &[[f64; L]],
    gold: &[StanceLabel],
    mask: &[bool],
    model: &BranchLstmModel,
) -> Result<f64, LstmError> {
    if probs.len() != gold.len() || probs.len() != mask.len() {
        return Err(LstmError::ShapeMismatch {
            expected: probs.len(),
            got: gold.len().min(mask.len()),
        });
    }
    let active = mask.iter().filter(|&&m| m).count();
    if active == 0 {
        return Err(LstmError::EmptyMask);
    }
    let mut loss = 0.0;
    for ((p, &y), &m) in probs.iter().zip(gold).zip(mask) {
        if m {
            loss -= numeric::ln(p[y.index()]);
        }
    }
    loss /= active as f64;
    loss += 0.5 * model.arch.l2 * model.weight_sq_norm();
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(LstmError::NonFiniteLoss)
    }
}

/// One training branch: per-tweet inputs, gold labels and the novelty mask.
#[derive(Debug, Clone)]
pub struct LstmBranch {
    pub inputs: Vec<Vec<f64>>,
    pub gold: Vec<StanceLabel>,
    pub mask: Vec<bool>,
}

/// Backpropagation through time for one branch. Adds the gradient of the
/// branch's mean masked cross-entropy into `grad` and returns that data loss.
/// Branches with an all-zero mask contribute nothing.
fn branch_loss_grad(
    model: &BranchLstmModel,
    layout: &ParamLayout,
    branch: &LstmBranch,
    dropout_seed: Option<u64>,
    grad: &mut [f64],
) -> Result<f64, LstmError> {
    let steps = branch.inputs.len();
    if branch.gold.len() != steps || branch.mask.len() != steps {
        return Err(LstmError::ShapeMismatch {
            expected: steps,
            got: branch.gold.len().min(branch.mask.len()),
        });
    }
    let active = branch.mask.iter().filter(|&&m| m).count();
    if active == 0 {
        return Ok(0.0);
    }
    let tape = run_forward(model, layout, &branch.inputs, dropout_seed)?;
    let coeff = 1.0 / active as f64;
    let params = &model.params;

    let mut loss = 0.0;
    for t in 0..steps {
        if branch.mask[t] {
            loss -= numeric::ln(tape.probs[t][branch.gold[t].index()]);
        }
    }
    loss *= coeff;

    let top = layout.lstm.len() - 1;
    // recurrent carries per lstm layer
    let mut dh_next: Vec<Vec<f64>> = layout.lstm.iter().map(|l| vec![0.0; l.hidden]).collect();
    let mut dc_next: Vec<Vec<f64>> = layout.lstm.iter().map(|l| vec![0.0; l.hidden]).collect();

    for t in (0..steps).rev() {
        // head backward: softmax cross-entropy at masked positions
        let head_in = if let Some(act) = tape.dense_act[t].last() {
            act.clone()
        } else {
            tape.gates[top][t].h.clone()
        };
        let mut dz = [0.0; L];
        if branch.mask[t] {
            for y in 0..L {
                dz[y] = coeff
                    * (tape.probs[t][y] - if y == branch.gold[t].index() { 1.0 } else { 0.0 });
            }
        }
        let (w_out, b_out) = &layout.output;
        let mut dvec = vec![0.0; head_in.len()];
        for (y, &dzy) in dz.iter().enumerate() {
            if dzy != 0.0 {
                for (c, &v) in head_in.iter().enumerate() {
                    grad[w_out.at(y, c)] += dzy * v;
                    dvec[c] += params[w_out.at(y, c)] * dzy;
                }
                grad[b_out.at(y, 0)] += dzy;
            }
        }

        // dense stack backward
        for (di, (w, b)) in layout.dense.iter().enumerate().rev() {
            let act = &tape.dense_act[t][di];
            let input = &tape.dense_in[t][di];
            let mut dpre = vec![0.0; act.len()];
            for r in 0..act.len() {
                dpre[r] = if act[r] > 0.0 { dvec[r] } else { 0.0 };
            }
            let mut dinput = vec![0.0; input.len()];
            for (r, &dp) in dpre.iter().enumerate() {
                if dp != 0.0 {
                    for (c, &v) in input.iter().enumerate() {
                        grad[w.at(r, c)] += dp * v;
                        dinput[c] += params[w.at(r, c)] * dp;
                    }
                    grad[b.at(r, 0)] += dp;
                }
            }
            let mask = &tape.drop[t][di];
            if !mask.is_empty() {
                for (d, m) in dinput.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            dvec = dinput;
        }

        // lstm stack backward, top layer first
        let mut dh_from_above = dvec;
        for li in (0..layout.lstm.len()).rev() {
            let lb = &layout.lstm[li];
            let h = lb.hidden;
            let st = &tape.gates[li][t];
            let (h_prev, c_prev) = if t == 0 {
                (vec![0.0; h], vec![0.0; h])
            } else {
                let prev = &tape.gates[li][t - 1];
                (prev.h.clone(), prev.c.clone())
            };
            let x: Vec<f64> = if li == 0 {
                branch.inputs[t].clone()
            } else {
                tape.gates[li - 1][t].h.clone()
            };

            let mut dh = dh_from_above;
            for (a, b) in dh.iter_mut().zip(&dh_next[li]) {
                *a += b;
            }
            let mut da = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
            let mut dc_prev = vec![0.0; h];
            for k in 0..h {
                let do_k = dh[k] * st.tc[k];
                let dc_k = dc_next[li][k] + dh[k] * st.o[k] * (1.0 - st.tc[k] * st.tc[k]);
                let df_k = dc_k * c_prev[k];
                let di_k = dc_k * st.g[k];
                let dg_k = dc_k * st.i[k];
                da[0][k] = di_k * st.i[k] * (1.0 - st.i[k]);
                da[1][k] = df_k * st.f[k] * (1.0 - st.f[k]);
                da[2][k] = do_k * st.o[k] * (1.0 - st.o[k]);
                da[3][k] = dg_k * (1.0 - st.g[k] * st.g[k]);
                dc_prev[k] = dc_k * st.f[k];
            }

            let mut dx = vec![0.0; x.len()];
            let mut dh_prev = vec![0.0; h];
            for g in 0..GATES {
                let (wb, ub, bb) = (&lb.w[g], &lb.u[g], &lb.b[g]);
                for (r, &dar) in da[g].iter().enumerate() {
                    if dar == 0.0 {
                        continue;
                    }
                    for (c, &xc) in x.iter().enumerate() {
                        grad[wb.at(r, c)] += dar * xc;
                        dx[c] += params[wb.at(r, c)] * dar;
                    }
                    for (c, &hc) in h_prev.iter().enumerate() {
                        grad[ub.at(r, c)] += dar * hc;
                        dh_prev[c] += params[ub.at(r, c)] * dar;
                    }
                    grad[bb.at(r, 0)] += dar;
                }
            }
            dh_next[li] = dh_prev;
            dc_next[li] = dc_prev;
            dh_from_above = dx;
        }
    }

    Ok(loss)
}

/// Loss and gradient over a batch: sum over branches of each branch's mean
/// masked cross-entropy plus one L2 term on the weight matrices. Dropout
/// masks are derived deterministically from `dropout_seed` when given.
pub fn gradient(
    model: &BranchLstmModel,
    branches: &[LstmBranch],
    dropout_seed: Option<u64>,
) -> Result<(f64, Vec<f64>), LstmError> {
    let layout = model.layout();
    let mut grad = vec![0.0; layout.total];
    let mut loss = 0.0;
    for (k, branch) in branches.iter().enumerate() {
        let seed = dropout_seed.map(|s| s.wrapping_add(k as u64).wrapping_mul(0x9E3779B97F4A7C15));
        loss += branch_loss_grad(model, &layout, branch, seed, &mut grad)?;
    }
    // L2 on weight matrices only
    for b in layout.weight_blocks() {
        for k in 0..b.len() {
            let v = model.params[b.offset + k];
            loss += 0.5 * model.arch.l2 * v * v;
            grad[b.offset + k] += model.arch.l2 * v;
        }
    }
    if !loss.is_finite() {
        return Err(LstmError::NonFiniteLoss);
    }
    Ok((loss, grad))
}

/// Mean of per-branch data losses in eval mode (no dropout, no regularizer);
/// the early-stopping criterion.
pub fn dev_loss(model: &BranchLstmModel, branches: &[LstmBranch]) -> Result<f64, LstmError> {
    let layout = model.layout();
    let mut total = 0.0;
    let mut count = 0usize;
    for branch in branches {
        let active = branch.mask.iter().filter(|&&m| m).count();
        if active == 0 {
            continue;
        }
        let tape = run_forward(model, &layout, &branch.inputs, None)?;
        let mut loss = 0.0;
        for t in 0..branch.inputs.len() {
            if branch.mask[t] {
                loss -= numeric::ln(tape.probs[t][branch.gold[t].index()]);
            }
        }
        total += loss / active as f64;
        count += 1;
    }
    if count == 0 {
        return Err(LstmError::EmptyMask);
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    /// Early-stop patience on dev loss; None trains for max_epochs.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 16,
            max_epochs: 100,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            patience: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: BranchLstmModel,
    pub epochs_run: usize,
    /// Mean per-batch training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Dev loss per epoch (empty without a dev set).
    pub dev_loss: Vec<f64>,
}

/// Mini-batch Adam over seeded shuffles; per-batch objective is the mean of
/// branch losses plus the regularizer. Early-stops on dev loss when a dev set
/// and patience are given, returning the best dev-loss model.
pub fn train(
    branches: &[LstmBranch],
    dev: Option<&[LstmBranch]>,
    init: BranchLstmModel,
    config: &TrainConfig,
) -> Result<TrainOutcome, LstmError> {
    if branches.is_empty() {
        return Err(LstmError::EmptyTrainingSet);
    }
    if config.batch_size == 0 {
        return Err(LstmError::InvalidConfig("batch size must be positive"));
    }
    let layout = init.layout();
    let mut model = init;
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: 1e-8,
        },
        layout.total,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..branches.len()).collect();

    let mut train_loss = Vec::new();
    let mut dev_losses = Vec::new();
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut epochs_run = 0;

    for epoch in 0..config.max_epochs {
        epochs_run = epoch + 1;
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<LstmBranch> = chunk.iter().map(|&i| branches[i].clone()).collect();
            let dropout_seed = rng.gen::<u64>();
            let (mut loss, mut grad) = gradient(&model, &batch, Some(dropout_seed))?;
            // normalize the data term per branch; the regularizer was added once
            let scale = 1.0 / batch.len() as f64;
            let reg = 0.5 * model.arch.l2 * model.weight_sq_norm();
            loss = (loss - reg) * scale + reg;
            for (k, g) in grad.iter_mut().enumerate() {
                let _ = k;
                *g *= scale;
            }
            // rescale leaves the reg gradient shrunk; restore it
            if model.arch.l2 > 0.0 {
                for b in layout.weight_blocks() {
                    for k in 0..b.len() {
                        grad[b.offset + k] +=
                            (1.0 - scale) * model.arch.l2 * model.params[b.offset + k];
                    }
                }
            }
            if !loss.is_finite() {
                return Err(LstmError::NonFiniteLoss);
            }
            adam.step(&mut model.params, &grad);
            epoch_loss += loss;
            batches += 1;
        }
        train_loss.push(epoch_loss / batches as f64);

        if let Some(dev_set) = dev {
            let dl = dev_loss(&model, dev_set)?;
            dev_losses.push(dl);
            let improved = best.as_ref().map(|(b, _, _)| dl < *b).unwrap_or(true);
            if improved {
                best = Some((dl, model.params.clone(), epoch));
            } else if let (Some(patience), Some((_, _, best_epoch))) = (config.patience, &best) {
                if epoch - best_epoch >= patience {
                    break;
                }
            }
        }
    }

    if let Some((_, params, _)) = best {
        model.params = params;
    }
    Ok(TrainOutcome {
        model,
        epochs_run,
        train_loss,
        dev_loss: dev_losses,
    })
}

/// Eval-mode per-branch argmax labels (canonical tie-break).
pub fn predict_branches(
    model: &BranchLstmModel,
    branches: &[Vec<Vec<f64>>],
) -> Result<Vec<Vec<StanceLabel>>, LstmError> {
    let layout = model.layout();
    branches
        .iter()
        .map(|inputs| {
            let tape = run_forward(model, &layout, inputs, None)?;
            Ok(tape
                .probs
                .iter()
                .map(|p| {
                    let mut best = 0;
                    for y in 1..L {
                        if p[y] > p[best] {
                            best = y;
                        }
                    }
                    StanceLabel::from_index(best).unwrap()
                })
                .collect())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// hyperparameter search
// ---------------------------------------------------------------------------

/// Inclusive integer range.
pub type IntRange = (usize, usize);
/// Inclusive float range; sampled log-uniformly where noted.
pub type FloatRange = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSearchSpace {
    pub lstm_layers: IntRange,
    pub lstm_units: IntRange,
    pub dense_layers: IntRange,
    pub dense_units: IntRange,
    pub dropout: FloatRange,
    /// Sampled log-uniformly.
    pub l2: FloatRange,
    pub batch_size: IntRange,
    /// Sampled log-uniformly.
    pub learning_rate: FloatRange,
    pub max_epochs: usize,
    pub patience: Option<usize>,
    pub trials: usize,
}

impl Default for HyperSearchSpace {
    fn default() -> Self {
        HyperSearchSpace {
            lstm_layers: (1, 2),
            lstm_units: (4, 32),
            dense_layers: (0, 2),
            dense_units: (4, 32),
            dropout: (0.0, 0.5),
            l2: (1e-5, 1e-2),
            batch_size: (8, 32),
            learning_rate: (1e-3, 1e-1),
            max_epochs: 50,
            patience: Some(10),
            trials: 10,
        }
    }
}

/// One sampled configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub lstm_sizes: Vec<usize>,
    pub dense_sizes: Vec<usize>,
    pub dropout: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub config: TrialConfig,
    pub dev_loss: f64,
    pub dev_macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct HyperSearchOutcome {
    pub best_model: BranchLstmModel,
    pub best_config: TrialConfig,
    pub trials: Vec<TrialRecord>,
}

fn sample_int(rng: &mut ChaCha8Rng, range: IntRange) -> usize {
    if range.0 >= range.1 {
        range.0
    } else {
        rng.gen_range(range.0..=range.1)
    }
}

fn sample_log(rng: &mut ChaCha8Rng, range: FloatRange) -> f64 {
    if range.0 >= range.1 {
        return range.0;
    }
    let (lo, hi) = (numeric::ln(range.0), numeric::ln(range.1));
    numeric::exp(rng.gen_range(lo..hi))
}

fn sample_uniform(rng: &mut ChaCha8Rng, range: FloatRange) -> f64 {
    if range.0 >= range.1 {
        range.0
    } else {
        rng.gen_range(range.0..range.1)
    }
}

/// Per-tweet macro-F1 over branches: every mask-1 position is one tweet.
fn branch_macro_f1(model: &BranchLstmModel, branches: &[LstmBranch]) -> Result<f64, LstmError> {
    let inputs: Vec<Vec<Vec<f64>>> = branches.iter().map(|b| b.inputs.clone()).collect();
    let preds = predict_branches(model, &inputs)?;
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for (b, p) in branches.iter().zip(&preds) {
        for t in 0..b.mask.len() {
            if b.mask[t] {
                gold.push(b.gold[t]);
                pred.push(p[t]);
            }
        }
    }
    Ok(crate::eval::macro_f1(&gold, &pred).unwrap_or(0.0))
}

/// Seeded uniform random search; returns the trial with the best dev
/// macro-F1 (first trial wins ties) plus the full trial log.
pub fn hyper_search(
    space: &HyperSearchSpace,
    train_branches: &[LstmBranch],
    dev_branches: &[LstmBranch],
    input_dim: usize,
    seed: u64,
) -> Result<HyperSearchOutcome, LstmError> {
    if space.trials == 0 {
        return Err(LstmError::InvalidConfig("trial budget must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(space.trials);
    let mut best: Option<(f64, BranchLstmModel, TrialConfig)> = None;

    for index in 0..space.trials {
        let n_lstm = sample_int(&mut rng, space.lstm_layers).max(1);
        let lstm_sizes: Vec<usize> = (0..n_lstm)
            .map(|_| sample_int(&mut rng, space.lstm_units).max(1))
            .collect();
        let n_dense = sample_int(&mut rng, space.dense_layers);
        let dense_sizes: Vec<usize> = (0..n_dense)
            .map(|_| sample_int(&mut rng, space.dense_units).max(1))
            .collect();
        let config = TrialConfig {
            lstm_sizes,
            dense_sizes,
            dropout: sample_uniform(&mut rng, space.dropout),
            l2: sample_log(&mut rng, space.l2),
            batch_size: sample_int(&mut rng, space.batch_size).max(1),
            learning_rate: sample_log(&mut rng, space.learning_rate),
            seed: rng.gen(),
        };

        let arch = LstmArch {
            input_dim,
            lstm_sizes: config.lstm_sizes.clone(),
            dense_sizes: config.dense_sizes.clone(),
            dropout: config.dropout,
            l2: config.l2,
        };
        let init = BranchLstmModel::init(arch, config.seed)?;
        let outcome = train(
            train_branches,
            Some(dev_branches),
            init,
            &TrainConfig {
                learning_rate: config.learning_rate,
                batch_size: config.batch_size,
                max_epochs: space.max_epochs,
                seed: config.seed,
                patience: space.patience,
                ..Default::default()
            },
        )?;
        let dl = dev_loss(&outcome.model, dev_branches)?;
        let f1 = branch_macro_f1(&outcome.model, dev_branches)?;
        trials.push(TrialRecord {
            index,
            config: config.clone(),
            dev_loss: dl,
            dev_macro_f1: f1,
        });
        let is_better = best.as_ref().map(|(b, _, _)| f1 > *b).unwrap_or(true);
        if is_better {
            best = Some((f1, outcome.model, config));
        }
    }

    let (_, best_model, best_config) = best.expect("at least one trial ran");
    Ok(HyperSearchOutcome {
        best_model,
        best_config,
        trials,
    })
}
