//! Linear-chain and tree-structured conditional random fields over the four
//! stance labels.
//!
//! Node factors are linear in the feature vector (one weight row per label
//! plus a bias); edges share a single 4x4 parent-to-child transition matrix.
//! Inference is exact: forward-backward on chains, two-pass sum-product on
//! trees, with Viterbi / max-product decoding. Training minimizes a
//! class-weighted negative log-likelihood with L2 regularization by L-BFGS;
//! the weighting applies to the empirical (gold) node terms only, leaving the
//! partition term untouched so the objective stays convex.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::FeatureLayout;
use crate::label::{StanceLabel, NUM_LABELS};
use crate::numeric::{self, logsumexp, Mat};
use crate::optim::{lbfgs, LbfgsConfig};

const L: usize = NUM_LABELS;

#[derive(Debug, Clone, PartialEq)]
pub enum CrfError {
    DimensionMismatch { expected: usize, got: usize },
    /// Training requires every node to carry a gold label.
    UnlabelledNode,
    /// Parent indices do not describe a rooted tree.
    InvalidShape(&'static str),
    /// Category weights must be strictly positive.
    InvalidWeight,
    OptimizationDiverged,
    EmptyTrainingSet,
}

impl core::fmt::Display for CrfError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CrfError::DimensionMismatch { expected, got } => {
                write!(f, "feature width {got} does not match model width {expected}")
            }
            CrfError::UnlabelledNode => f.write_str("training instance has an unlabelled node"),
            CrfError::InvalidShape(msg) => write!(f, "invalid tree shape: {msg}"),
            CrfError::InvalidWeight => f.write_str("category weights must be positive"),
            CrfError::OptimizationDiverged => f.write_str("optimization diverged"),
            CrfError::EmptyTrainingSet => f.write_str("no training instances"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CrfError {}

/// Per-label positive loss weights (inverse-frequency in practice).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryWeights {
    values: [f64; L],
}

impl CategoryWeights {
    pub fn new(values: [f64; L]) -> Result<Self, CrfError> {
        if values.iter().all(|&w| w > 0.0 && w.is_finite()) {
            Ok(CategoryWeights { values })
        } else {
            Err(CrfError::InvalidWeight)
        }
    }

    pub fn uniform() -> Self {
        CategoryWeights { values: [1.0; L] }
    }

    pub fn get(&self, label: StanceLabel) -> f64 {
        self.values[label.index()]
    }

    pub fn values(&self) -> [f64; L] {
        self.values
    }

    /// Scale every weight by a constant.
    pub fn scaled(&self, factor: f64) -> Result<Self, CrfError> {
        let mut values = self.values;
        for v in values.iter_mut() {
            *v *= factor;
        }
        Self::new(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Chain,
    Tree,
}

/// Node weights, bias and the shared transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    /// 4 x d weight matrix.
    pub node_weights: Mat,
    pub node_bias: [f64; L],
    /// Log-potential for parent-label -> child-label.
    pub transition: [[f64; L]; L],
}

impl CrfParams {
    pub fn zeros(dim: usize) -> Self {
        CrfParams {
            node_weights: Mat::zeros(L, dim),
            node_bias: [0.0; L],
            transition: [[0.0; L]; L],
        }
    }

    pub fn dim(&self) -> usize {
        self.node_weights.cols()
    }

    pub fn flat_len(&self) -> usize {
        L * self.dim() + L + L * L
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend_from_slice(self.node_weights.data());
        out.extend_from_slice(&self.node_bias);
        for row in &self.transition {
            out.extend_from_slice(row);
        }
        out
    }

    pub fn from_flat(dim: usize, flat: &[f64]) -> Self {
        let mut p = CrfParams::zeros(dim);
        let nw = L * dim;
        p.node_weights = Mat::from_data(L, dim, flat[..nw].to_vec());
        p.node_bias.copy_from_slice(&flat[nw..nw + L]);
        for (a, row) in p.transition.iter_mut().enumerate() {
            row.copy_from_slice(&flat[nw + L + a * L..nw + L + (a + 1) * L]);
        }
        p
    }
}

/// A trained CRF with the feature layout it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub topology: Topology,
    pub feature_layout: FeatureLayout,
    #[serde(flatten)]
    pub params: CrfParams,
}

/// Unary log-potentials for one node: node_weights . x + bias.
pub fn node_log_potentials(x: &[f64], params: &CrfParams) -> Result<[f64; L], CrfError> {
    if x.len() != params.dim() {
        return Err(CrfError::DimensionMismatch {
            expected: params.dim(),
            got: x.len(),
        });
    }
    let mut pots = params.node_bias;
    for (y, pot) in pots.iter_mut().enumerate() {
        *pot += numeric::dot(params.node_weights.row(y), x);
    }
    Ok(pots)
}

// ---------------------------------------------------------------------------
// chain inference
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ChainInference {
    pub log_z: f64,
    /// logZ recomputed from the backward pass; equals `log_z` up to rounding.
    pub log_z_backward: f64,
    pub node_marginals: Vec<[f64; L]>,
    /// Edge (t, t+1) joint marginals, indexed [label_t][label_{t+1}].
    pub edge_marginals: Vec<[[f64; L]; L]>,
}

/// Log-space forward-backward over a chain of node potentials.
pub fn chain_infer(nodes: &[[f64; L]], trans: &[[f64; L]; L]) -> ChainInference {
    let n = nodes.len();
    assert!(n >= 1, "chain must have at least one node");

    let mut fwd = vec![[0.0; L]; n];
    fwd[0] = nodes[0];
    for t in 1..n {
        for y in 0..L {
            let mut acc = [0.0; L];
            for (p, a) in acc.iter_mut().enumerate() {
                *a = fwd[t - 1][p] + trans[p][y];
            }
            fwd[t][y] = nodes[t][y] + logsumexp(&acc);
        }
    }
    let log_z = logsumexp(&fwd[n - 1]);

    let mut bwd = vec![[0.0; L]; n];
    for t in (0..n - 1).rev() {
        for y in 0..L {
            let mut acc = [0.0; L];
            for (c, a) in acc.iter_mut().enumerate() {
                *a = trans[y][c] + nodes[t + 1][c] + bwd[t + 1][c];
            }
            bwd[t][y] = logsumexp(&acc);
        }
    }
    let mut first = [0.0; L];
    for y in 0..L {
        first[y] = nodes[0][y] + bwd[0][y];
    }
    let log_z_backward = logsumexp(&first);

    let mut node_marginals = vec![[0.0; L]; n];
    for t in 0..n {
        for y in 0..L {
            node_marginals[t][y] = numeric::exp(fwd[t][y] + bwd[t][y] - log_z);
        }
    }

    let mut edge_marginals = vec![[[0.0; L]; L]; n.saturating_sub(1)];
    for t in 0..n.saturating_sub(1) {
        for a in 0..L {
            for b in 0..L {
                edge_marginals[t][a][b] = numeric::exp(
                    fwd[t][a] + trans[a][b] + nodes[t + 1][b] + bwd[t + 1][b] - log_z,
                );
            }
        }
    }

    ChainInference {
        log_z,
        log_z_backward,
        node_marginals,
        edge_marginals,
    }
}

/// Viterbi decoding; ties broken by canonical label order.
pub fn chain_decode(nodes: &[[f64; L]], trans: &[[f64; L]; L]) -> Vec<StanceLabel> {
    let n = nodes.len();
    assert!(n >= 1);
    let mut delta = vec![[0.0; L]; n];
    let mut back = vec![[0usize; L]; n];
    delta[0] = nodes[0];
    for t in 1..n {
        for y in 0..L {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for p in 0..L {
                let score = delta[t - 1][p] + trans[p][y];
                if score > best {
                    best = score;
                    arg = p;
                }
            }
            delta[t][y] = best + nodes[t][y];
            back[t][y] = arg;
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut y = 0;
    for (cand, &score) in delta[n - 1].iter().enumerate() {
        if score > best {
            best = score;
            y = cand;
        }
    }
    let mut labels = vec![StanceLabel::Support; n];
    labels[n - 1] = StanceLabel::from_index(y).unwrap();
    for t in (1..n).rev() {
        y = back[t][y];
        labels[t - 1] = StanceLabel::from_index(y).unwrap();
    }
    labels
}

// ---------------------------------------------------------------------------
// tree inference
// ---------------------------------------------------------------------------

/// A rooted tree over nodes 0..n, described by parent indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeShape {
    parents: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    /// Parents precede children.
    topo: Vec<usize>,
}

impl TreeShape {
    pub fn new(parents: Vec<Option<usize>>) -> Result<Self, CrfError> {
        let n = parents.len();
        if n == 0 {
            return Err(CrfError::InvalidShape("empty tree"));
        }
        let mut root = None;
        let mut children = vec![Vec::new(); n];
        for (i, p) in parents.iter().enumerate() {
            match p {
                None => {
                    if root.replace(i).is_some() {
                        return Err(CrfError::InvalidShape("multiple roots"));
                    }
                }
                Some(p) => {
                    if *p >= n || *p == i {
                        return Err(CrfError::InvalidShape("bad parent index"));
                    }
                    children[*p].push(i);
                }
            }
        }
        let root = root.ok_or(CrfError::InvalidShape("no root"))?;
        let mut topo = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            topo.push(i);
            for &c in children[i].iter().rev() {
                stack.push(c);
            }
        }
        if topo.len() != n {
            return Err(CrfError::InvalidShape("cycle"));
        }
        Ok(TreeShape {
            parents,
            children,
            root,
            topo,
        })
    }

    /// A linear path 0 -> 1 -> ... -> n-1.
    pub fn path(n: usize) -> Self {
        let parents = (0..n).map(|i| if i == 0 { None } else { Some(i - 1) }).collect();
        Self::new(parents).expect("path is a valid tree")
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parents[i]
    }

    pub fn is_path(&self) -> bool {
        self.root == 0 && self.children.iter().all(|c| c.len() <= 1)
    }

    /// Edges as (parent, child), children in traversal order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.topo
            .iter()
            .filter_map(|&i| self.parents[i].map(|p| (p, i)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TreeInference {
    pub log_z: f64,
    pub node_marginals: Vec<[f64; L]>,
    /// (parent, child) edges in traversal order.
    pub edges: Vec<(usize, usize)>,
    /// Joint marginals aligned with `edges`, indexed [parent label][child label].
    pub edge_marginals: Vec<[[f64; L]; L]>,
}

/// Two-pass sum-product over a tree; exact on trees.
pub fn tree_infer(shape: &TreeShape, nodes: &[[f64; L]], trans: &[[f64; L]; L]) -> TreeInference {
    let n = shape.len();
    assert_eq!(nodes.len(), n);

    // upward messages: up[c][y_parent]
    let mut up = vec![[0.0; L]; n];
    // sum of children's upward messages at each node
    let mut up_sum = vec![[0.0; L]; n];
    for &i in shape.topo.iter().rev() {
        for &c in &shape.children[i] {
            for y in 0..L {
                up_sum[i][y] += up[c][y];
            }
        }
        if let Some(_p) = shape.parents[i] {
            for yp in 0..L {
                let mut acc = [0.0; L];
                for (yc, a) in acc.iter_mut().enumerate() {
                    *a = trans[yp][yc] + nodes[i][yc] + up_sum[i][yc];
                }
                up[i][yp] = logsumexp(&acc);
            }
        }
    }

    let root = shape.root;
    let mut root_belief = [0.0; L];
    for y in 0..L {
        root_belief[y] = nodes[root][y] + up_sum[root][y];
    }
    let log_z = logsumexp(&root_belief);

    // downward messages: down[i][y_i], zero at the root
    let mut down = vec![[0.0; L]; n];
    for &p in shape.topo.iter() {
        for &c in &shape.children[p] {
            for yc in 0..L {
                let mut acc = [0.0; L];
                for (yp, a) in acc.iter_mut().enumerate() {
                    *a = trans[yp][yc] + nodes[p][yp] + down[p][yp] + up_sum[p][yp] - up[c][yp];
                }
                down[c][yc] = logsumexp(&acc);
            }
        }
    }

    let mut node_marginals = vec![[0.0; L]; n];
    for i in 0..n {
        for y in 0..L {
            node_marginals[i][y] = numeric::exp(nodes[i][y] + up_sum[i][y] + down[i][y] - log_z);
        }
    }

    let edges = shape.edges();
    let mut edge_marginals = Vec::with_capacity(edges.len());
    for &(p, c) in &edges {
        let mut m = [[0.0; L]; L];
        for (yp, row) in m.iter_mut().enumerate() {
            let p_side = nodes[p][yp] + down[p][yp] + up_sum[p][yp] - up[c][yp];
            for (yc, cell) in row.iter_mut().enumerate() {
                *cell = numeric::exp(
                    p_side + trans[yp][yc] + nodes[c][yc] + up_sum[c][yc] - log_z,
                );
            }
        }
        edge_marginals.push(m);
    }

    TreeInference {
        log_z,
        node_marginals,
        edges,
        edge_marginals,
    }
}

/// Max-product decoding with backpointers; ties broken by canonical order.
pub fn tree_decode(shape: &TreeShape, nodes: &[[f64; L]], trans: &[[f64; L]; L]) -> Vec<StanceLabel> {
    let n = shape.len();
    assert_eq!(nodes.len(), n);

    // upmax[c][y_parent] and the child label realizing it
    let mut upmax = vec![[0.0; L]; n];
    let mut upsum = vec![[0.0; L]; n];
    let mut back = vec![[0usize; L]; n];
    for &i in shape.topo.iter().rev() {
        for &c in &shape.children[i] {
            for y in 0..L {
                upsum[i][y] += upmax[c][y];
            }
        }
        if shape.parents[i].is_some() {
            for yp in 0..L {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for yc in 0..L {
                    let score = trans[yp][yc] + nodes[i][yc] + upsum[i][yc];
                    if score > best {
                        best = score;
                        arg = yc;
                    }
                }
                upmax[i][yp] = best;
                back[i][yp] = arg;
            }
        }
    }

    let root = shape.root;
    let mut best = f64::NEG_INFINITY;
    let mut root_label = 0;
    for y in 0..L {
        let score = nodes[root][y] + upsum[root][y];
        if score > best {
            best = score;
            root_label = y;
        }
    }

    let mut labels = vec![StanceLabel::Support; n];
    let mut assigned = vec![0usize; n];
    assigned[root] = root_label;
    labels[root] = StanceLabel::from_index(root_label).unwrap();
    for &i in shape.topo.iter() {
        if let Some(p) = shape.parents[i] {
            let y = back[i][assigned[p]];
            assigned[i] = y;
            labels[i] = StanceLabel::from_index(y).unwrap();
        }
    }
    labels
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

/// One labelled training instance; chains are path-shaped trees.
#[derive(Debug, Clone)]
pub struct TrainInstance {
    pub shape: TreeShape,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Option<StanceLabel>>,
}

impl TrainInstance {
    pub fn chain(features: Vec<Vec<f64>>, labels: Vec<Option<StanceLabel>>) -> Self {
        let shape = TreeShape::path(features.len());
        TrainInstance {
            shape,
            features,
            labels,
        }
    }
}

/// Class-weighted negative log-likelihood and its gradient.
///
/// loss = sum over nodes of -w(gold) * node_potential(gold)
///      - sum over edges of transition(gold_parent, gold_child)
///      + logZ per instance
///      + (l2/2) * ||params||^2
pub fn nll_and_gradient(
    params: &CrfParams,
    instances: &[TrainInstance],
    weights: &CategoryWeights,
    l2: f64,
) -> Result<(f64, CrfParams), CrfError> {
    let dim = params.dim();
    let mut loss = 0.0;
    let mut grad = CrfParams::zeros(dim);

    for inst in instances {
        if inst.features.len() != inst.shape.len() || inst.labels.len() != inst.shape.len() {
            return Err(CrfError::InvalidShape("instance length mismatch"));
        }
        let mut nodes = Vec::with_capacity(inst.features.len());
        for x in &inst.features {
            nodes.push(node_log_potentials(x, params)?);
        }
        let gold: Vec<StanceLabel> = inst
            .labels
            .iter()
            .map(|l| l.ok_or(CrfError::UnlabelledNode))
            .collect::<Result<_, _>>()?;

        // data terms
        for (i, &y) in gold.iter().enumerate() {
            let w = weights.get(y);
            loss -= w * nodes[i][y.index()];
            let x = &inst.features[i];
            for (j, &xj) in x.iter().enumerate() {
                grad.node_weights.add_at(y.index(), j, -w * xj);
            }
            grad.node_bias[y.index()] -= w;
        }
        for (p, c) in inst.shape.edges() {
            let (a, b) = (gold[p].index(), gold[c].index());
            loss -= params.transition[a][b];
            grad.transition[a][b] -= 1.0;
        }

        // partition term and expectations
        if inst.shape.is_path() {
            let inf = chain_infer(&nodes, &params.transition);
            loss += inf.log_z;
            for (i, marg) in inf.node_marginals.iter().enumerate() {
                let x = &inst.features[i];
                for (y, &m) in marg.iter().enumerate() {
                    for (j, &xj) in x.iter().enumerate() {
                        grad.node_weights.add_at(y, j, m * xj);
                    }
                    grad.node_bias[y] += m;
                }
            }
            for em in &inf.edge_marginals {
                for a in 0..L {
                    for b in 0..L {
                        grad.transition[a][b] += em[a][b];
                    }
                }
            }
        } else {
            let inf = tree_infer(&inst.shape, &nodes, &params.transition);
            loss += inf.log_z;
            for (i, marg) in inf.node_marginals.iter().enumerate() {
                let x = &inst.features[i];
                for (y, &m) in marg.iter().enumerate() {
                    for (j, &xj) in x.iter().enumerate() {
                        grad.node_weights.add_at(y, j, m * xj);
                    }
                    grad.node_bias[y] += m;
                }
            }
            for em in &inf.edge_marginals {
                for a in 0..L {
                    for b in 0..L {
                        grad.transition[a][b] += em[a][b];
                    }
                }
            }
        }
    }

    // L2 over the full parameter vector
    let flat = params.to_flat();
    loss += 0.5 * l2 * numeric::dot(&flat, &flat);
    let mut gflat = grad.to_flat();
    for (g, p) in gflat.iter_mut().zip(&flat) {
        *g += l2 * p;
    }
    Ok((loss, CrfParams::from_flat(dim, &gflat)))
}

#[derive(Debug, Clone)]
pub struct CrfTrainConfig {
    pub topology: Topology,
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for CrfTrainConfig {
    fn default() -> Self {
        CrfTrainConfig {
            topology: Topology::Chain,
            l2: 1e-2,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

/// Minimize the regularized weighted NLL by L-BFGS from zero initialization.
pub fn train(
    instances: &[TrainInstance],
    weights: &CategoryWeights,
    config: &CrfTrainConfig,
    feature_layout: FeatureLayout,
) -> Result<CrfModel, CrfError> {
    let dim = instances
        .first()
        .and_then(|i| i.features.first())
        .map(|x| x.len())
        .ok_or(CrfError::EmptyTrainingSet)?;
    if config.topology == Topology::Chain {
        if let Some(bad) = instances.iter().find(|i| !i.shape.is_path()) {
            let _ = bad;
            return Err(CrfError::InvalidShape("chain topology requires path instances"));
        }
    }

    let mut failure: Option<CrfError> = None;
    let objective = |flat: &[f64], grad_out: &mut [f64]| -> f64 {
        let params = CrfParams::from_flat(dim, flat);
        match nll_and_gradient(&params, instances, weights, config.l2) {
            Ok((loss, grad)) => {
                grad_out.copy_from_slice(&grad.to_flat());
                loss
            }
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        }
    };
    let cfg = LbfgsConfig {
        max_iter: config.max_iter,
        tol: config.tol,
        ..Default::default()
    };
    let init = CrfParams::zeros(dim).to_flat();
    let outcome = lbfgs(objective, init, &cfg);
    if let Some(e) = failure {
        return Err(e);
    }
    let outcome = outcome.map_err(|_| CrfError::OptimizationDiverged)?;
    Ok(CrfModel {
        topology: config.topology,
        feature_layout,
        params: CrfParams::from_flat(dim, &outcome.x),
    })
}

/// Node potentials for a sequence of feature vectors under a model.
pub fn model_node_potentials(
    model: &CrfModel,
    features: &[Vec<f64>],
) -> Result<Vec<[f64; L]>, CrfError> {
    features
        .iter()
        .map(|x| node_log_potentials(x, &model.params))
        .collect()
}

/// Decode one instance with the model's topology.
pub fn decode_instance(
    model: &CrfModel,
    shape: &TreeShape,
    features: &[Vec<f64>],
) -> Result<Vec<StanceLabel>, CrfError> {
    let nodes = model_node_potentials(model, features)?;
    Ok(match model.topology {
        Topology::Chain => chain_decode(&nodes, &model.params.transition),
        Topology::Tree => tree_decode(shape, &nodes, &model.params.transition),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn ln4() -> f64 {
        numeric::ln(4.0)
    }

    // exhaustive enumeration oracle over all 4^n assignments
    fn brute_force(
        shape: &TreeShape,
        nodes: &[[f64; L]],
        trans: &[[f64; L]; L],
    ) -> (f64, Vec<[f64; L]>, Vec<StanceLabel>) {
        let n = shape.len();
        let edges = shape.edges();
        let mut scores = Vec::new();
        let mut assign = vec![0usize; n];
        let total = 4usize.pow(n as u32);
        let mut best_score = f64::NEG_INFINITY;
        let mut best_assign = vec![0usize; n];
        for code in 0..total {
            let mut c = code;
            for a in assign.iter_mut() {
                *a = c % 4;
                c /= 4;
            }
            let mut s = 0.0;
            for (i, &y) in assign.iter().enumerate() {
                s += nodes[i][y];
            }
            for &(p, ch) in &edges {
                s += trans[assign[p]][assign[ch]];
            }
            scores.push((assign.clone(), s));
            if s > best_score {
                best_score = s;
                best_assign = assign.clone();
            }
        }
        let all: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
        let log_z = logsumexp(&all);
        let mut marginals = vec![[0.0; L]; n];
        for (a, s) in &scores {
            let p = numeric::exp(*s - log_z);
            for (i, &y) in a.iter().enumerate() {
                marginals[i][y] += p;
            }
        }
        let labels = best_assign
            .iter()
            .map(|&y| StanceLabel::from_index(y).unwrap())
            .collect();
        (log_z, marginals, labels)
    }

    fn random_nodes(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; L]> {
        (0..n)
            .map(|_| {
                let mut v = [0.0; L];
                for x in v.iter_mut() {
                    *x = rng.gen_range(-2.0..2.0);
                }
                v
            })
            .collect()
    }

    fn random_trans(rng: &mut ChaCha8Rng) -> [[f64; L]; L] {
        let mut t = [[0.0; L]; L];
        for row in t.iter_mut() {
            for x in row.iter_mut() {
                *x = rng.gen_range(-2.0..2.0);
            }
        }
        t
    }

    fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> TreeShape {
        let parents = (0..n)
            .map(|i| if i == 0 { None } else { Some(rng.gen_range(0..i)) })
            .collect();
        TreeShape::new(parents).unwrap()
    }

    #[test]
    fn node_potentials_are_linear() {
        let params = CrfParams::zeros(3);
        assert_eq!(
            node_log_potentials(&[1.0, 2.0, 3.0], &params).unwrap(),
            [0.0; 4]
        );

        let mut params = CrfParams::zeros(3);
        for y in 0..L {
            for j in 0..3 {
                params.node_weights.set(y, j, (y * 3 + j) as f64);
            }
            params.node_bias[y] = 0.5;
        }
        // basis vector picks out column k (+bias)
        let e1 = [0.0, 1.0, 0.0];
        let pots = node_log_potentials(&e1, &params).unwrap();
        for y in 0..L {
            assert_relative_eq!(pots[y], params.node_weights.get(y, 1) + 0.5);
        }
        // doubling x doubles the bias-free potentials
        let x = [0.3, -1.0, 2.0];
        let p1 = node_log_potentials(&x, &params).unwrap();
        let x2: Vec<f64> = x.iter().map(|v| v * 2.0).collect();
        let p2 = node_log_potentials(&x2, &params).unwrap();
        for y in 0..L {
            assert_relative_eq!(p2[y] - 0.5, 2.0 * (p1[y] - 0.5), epsilon = 1e-12);
        }

        assert!(matches!(
            node_log_potentials(&[1.0], &params),
            Err(CrfError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn uniform_chain_has_closed_form() {
        let nodes = vec![[0.0; L]; 3];
        let trans = [[0.0; L]; L];
        let inf = chain_infer(&nodes, &trans);
        assert_relative_eq!(inf.log_z, 3.0 * ln4(), epsilon = 1e-12);
        assert_relative_eq!(inf.log_z_backward, inf.log_z, epsilon = 1e-12);
        for marg in &inf.node_marginals {
            for &m in marg {
                assert_relative_eq!(m, 0.25, epsilon = 1e-12);
            }
        }
        assert_eq!(
            chain_decode(&nodes, &trans),
            vec![StanceLabel::Support; 3]
        );
    }

    #[test]
    fn single_node_chain_is_logsumexp() {
        let nodes = vec![[0.5, -0.2, 1.0, 0.0]];
        let trans = [[0.7; L]; L];
        let inf = chain_infer(&nodes, &trans);
        assert_relative_eq!(inf.log_z, logsumexp(&nodes[0]), epsilon = 1e-12);
        assert!(inf.edge_marginals.is_empty());
    }

    #[test]
    fn chain_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let n = rng.gen_range(1..=6);
            let nodes = random_nodes(&mut rng, n);
            let trans = random_trans(&mut rng);
            let shape = TreeShape::path(n);
            let (bz, bm, bd) = brute_force(&shape, &nodes, &trans);
            let inf = chain_infer(&nodes, &trans);
            assert_relative_eq!(inf.log_z, bz, epsilon = 1e-8);
            for (m, b) in inf.node_marginals.iter().zip(&bm) {
                for y in 0..L {
                    assert_relative_eq!(m[y], b[y], epsilon = 1e-9);
                }
            }
            assert_eq!(chain_decode(&nodes, &trans), bd);
            // edge marginals consistent with node marginals by summation
            for (t, em) in inf.edge_marginals.iter().enumerate() {
                for a in 0..L {
                    let row: f64 = em[a].iter().sum();
                    assert_relative_eq!(row, inf.node_marginals[t][a], epsilon = 1e-9);
                }
                for b in 0..L {
                    let col: f64 = (0..L).map(|a| em[a][b]).sum();
                    assert_relative_eq!(col, inf.node_marginals[t + 1][b], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn dominant_diagonal_decodes_constant_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nodes = random_nodes(&mut rng, 3);
        let mut trans = [[0.0; L]; L];
        for (a, row) in trans.iter_mut().enumerate() {
            row[a] = 10.0;
        }
        let labels = chain_decode(&nodes, &trans);
        assert!(labels.iter().all(|&l| l == labels[0]));
        let shape = TreeShape::path(3);
        let (_, _, brute) = brute_force(&shape, &nodes, &trans);
        assert_eq!(labels, brute);
    }

    #[test]
    fn uniform_star_tree_has_closed_form() {
        let shape = TreeShape::new(vec![None, Some(0), Some(0)]).unwrap();
        let nodes = vec![[0.0; L]; 3];
        let trans = [[0.0; L]; L];
        let inf = tree_infer(&shape, &nodes, &trans);
        assert_relative_eq!(inf.log_z, 3.0 * ln4(), epsilon = 1e-12);
        assert_eq!(
            tree_decode(&shape, &nodes, &trans),
            vec![StanceLabel::Support; 3]
        );
    }

    #[test]
    fn tree_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..40 {
            let n = rng.gen_range(1..=8);
            let shape = random_tree(&mut rng, n);
            let nodes = random_nodes(&mut rng, n);
            let trans = random_trans(&mut rng);
            let (bz, bm, bd) = brute_force(&shape, &nodes, &trans);
            let inf = tree_infer(&shape, &nodes, &trans);
            assert_relative_eq!(inf.log_z, bz, epsilon = 1e-8);
            for (m, b) in inf.node_marginals.iter().zip(&bm) {
                for y in 0..L {
                    assert_relative_eq!(m[y], b[y], epsilon = 1e-9);
                }
            }
            assert_eq!(tree_decode(&shape, &nodes, &trans), bd);
            // node marginals sum to one
            for m in &inf.node_marginals {
                assert_relative_eq!(m.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
                assert!(m.iter().all(|&p| p >= 0.0));
            }
            // edge marginals consistent with node marginals
            for (k, &(p, c)) in inf.edges.iter().enumerate() {
                let em = &inf.edge_marginals[k];
                for a in 0..L {
                    let row: f64 = em[a].iter().sum();
                    assert_relative_eq!(row, inf.node_marginals[p][a], epsilon = 1e-9);
                }
                for b in 0..L {
                    let col: f64 = (0..L).map(|a| em[a][b]).sum();
                    assert_relative_eq!(col, inf.node_marginals[c][b], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn path_tree_equals_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(1..=6);
            let nodes = random_nodes(&mut rng, n);
            let trans = random_trans(&mut rng);
            let shape = TreeShape::path(n);
            let ci = chain_infer(&nodes, &trans);
            let ti = tree_infer(&shape, &nodes, &trans);
            assert_relative_eq!(ci.log_z, ti.log_z, epsilon = 1e-10);
            for (a, b) in ci.node_marginals.iter().zip(&ti.node_marginals) {
                for y in 0..L {
                    assert_relative_eq!(a[y], b[y], epsilon = 1e-10);
                }
            }
            assert_eq!(chain_decode(&nodes, &trans), tree_decode(&shape, &nodes, &trans));
        }
    }

    #[test]
    fn constant_shift_moves_log_z_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 5;
        let shape = random_tree(&mut rng, n);
        let nodes = random_nodes(&mut rng, n);
        let trans = random_trans(&mut rng);
        let base = tree_infer(&shape, &nodes, &trans);
        let decode_base = tree_decode(&shape, &nodes, &trans);

        let mut shifted = nodes.clone();
        let c = 3.7;
        for y in 0..L {
            shifted[2][y] += c;
        }
        let inf = tree_infer(&shape, &shifted, &trans);
        assert_relative_eq!(inf.log_z, base.log_z + c, epsilon = 1e-9);
        for (a, b) in inf.node_marginals.iter().zip(&base.node_marginals) {
            for y in 0..L {
                assert_relative_eq!(a[y], b[y], epsilon = 1e-9);
            }
        }
        assert_eq!(tree_decode(&shape, &shifted, &trans), decode_base);
    }

    fn random_instance(rng: &mut ChaCha8Rng, dim: usize, tree: bool) -> TrainInstance {
        let n = rng.gen_range(1..=5);
        let shape = if tree {
            random_tree(rng, n)
        } else {
            TreeShape::path(n)
        };
        let features = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels = (0..n)
            .map(|_| StanceLabel::from_index(rng.gen_range(0..4)))
            .collect();
        TrainInstance {
            shape,
            features,
            labels,
        }
    }

    #[test]
    fn zero_params_single_node_loss_is_ln4() {
        let inst = TrainInstance::chain(
            vec![vec![0.3, -0.4]],
            vec![Some(StanceLabel::Deny)],
        );
        let params = CrfParams::zeros(2);
        let (loss, _) =
            nll_and_gradient(&params, &[inst], &CategoryWeights::uniform(), 0.0).unwrap();
        assert_relative_eq!(loss, ln4(), epsilon = 1e-12);
    }

    #[test]
    fn unlabelled_node_is_rejected() {
        let inst = TrainInstance::chain(vec![vec![0.0]], vec![None]);
        let params = CrfParams::zeros(1);
        assert_eq!(
            nll_and_gradient(&params, &[inst], &CategoryWeights::uniform(), 0.0).err(),
            Some(CrfError::UnlabelledNode)
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dim = 3;
        for trial in 0..25 {
            let instances = vec![
                random_instance(&mut rng, dim, trial % 2 == 0),
                random_instance(&mut rng, dim, trial % 2 == 1),
            ];
            let weights =
                CategoryWeights::new([0.7, 2.0, 1.3, 0.4]).unwrap();
            let l2 = 0.05;
            let flat0: Vec<f64> = (0..CrfParams::zeros(dim).flat_len())
                .map(|_| rng.gen_range(-0.8..0.8))
                .collect();
            let params = CrfParams::from_flat(dim, &flat0);
            let (_, grad) = nll_and_gradient(&params, &instances, &weights, l2).unwrap();
            let gflat = grad.to_flat();

            let eps = 1e-6;
            for k in 0..flat0.len() {
                let mut plus = flat0.clone();
                plus[k] += eps;
                let mut minus = flat0.clone();
                minus[k] -= eps;
                let (lp, _) = nll_and_gradient(
                    &CrfParams::from_flat(dim, &plus),
                    &instances,
                    &weights,
                    l2,
                )
                .unwrap();
                let (lm, _) = nll_and_gradient(
                    &CrfParams::from_flat(dim, &minus),
                    &instances,
                    &weights,
                    l2,
                )
                .unwrap();
                let fd = (lp - lm) / (2.0 * eps);
                let denom = numeric::max(numeric::max(numeric::abs(fd), numeric::abs(gflat[k])), 1.0);
                assert!(
                    numeric::abs(fd - gflat[k]) / denom < 1e-5,
                    "component {k}: fd={fd} analytic={}",
                    gflat[k]
                );
            }
        }
    }

    #[test]
    fn loss_is_linear_in_category_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let dim = 2;
        let instances = vec![
            random_instance(&mut rng, dim, false),
            random_instance(&mut rng, dim, true),
        ];
        let flat: Vec<f64> = (0..CrfParams::zeros(dim).flat_len())
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        let params = CrfParams::from_flat(dim, &flat);
        let w = CategoryWeights::new([0.5, 1.5, 1.0, 2.0]).unwrap();
        let l = |w: &CategoryWeights| nll_and_gradient(&params, &instances, w, 0.0).unwrap().0;
        let l1 = l(&w);
        let l2_val = l(&w.scaled(2.0).unwrap());
        let l3 = l(&w.scaled(3.0).unwrap());
        // doubling the weights doubles the weighted data term
        assert_relative_eq!(l3 - l2_val, l2_val - l1, epsilon = 1e-9);
    }

    #[test]
    fn training_fits_separable_transitions() {
        // 2-node chains: first node label determined by x, second label is a
        // deterministic function of the first (Support->Deny, Query->Comment)
        let mut instances = Vec::new();
        for _ in 0..10 {
            instances.push(TrainInstance::chain(
                vec![vec![1.0, 0.0], vec![0.0, 0.0]],
                vec![Some(StanceLabel::Support), Some(StanceLabel::Deny)],
            ));
            instances.push(TrainInstance::chain(
                vec![vec![0.0, 1.0], vec![0.0, 0.0]],
                vec![Some(StanceLabel::Query), Some(StanceLabel::Comment)],
            ));
        }
        let model = train(
            &instances,
            &CategoryWeights::uniform(),
            &CrfTrainConfig {
                topology: Topology::Chain,
                l2: 1e-3,
                max_iter: 300,
                tol: 1e-7,
            },
            FeatureLayout::default(),
        )
        .unwrap();
        let mut correct = 0;
        let mut total = 0;
        for inst in &instances {
            let labels = decode_instance(&model, &inst.shape, &inst.features).unwrap();
            for (got, want) in labels.iter().zip(&inst.labels) {
                total += 1;
                if Some(*got) == *want {
                    correct += 1;
                }
            }
        }
        assert_eq!(correct, total, "training accuracy must be 100%");
    }

    #[test]
    fn huge_l2_drives_weights_to_zero() {
        let instances = vec![TrainInstance::chain(
            vec![vec![1.0, -1.0], vec![0.5, 0.2]],
            vec![Some(StanceLabel::Support), Some(StanceLabel::Comment)],
        )];
        let model = train(
            &instances,
            &CategoryWeights::uniform(),
            &CrfTrainConfig {
                topology: Topology::Chain,
                l2: 1e6,
                max_iter: 200,
                tol: 1e-9,
            },
            FeatureLayout::default(),
        )
        .unwrap();
        assert!(numeric::norm2(&model.params.to_flat()) < 1e-3);
    }

    #[test]
    fn chain_and_tree_agree_on_path_datasets() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let instances: Vec<TrainInstance> =
            (0..6).map(|_| random_instance(&mut rng, 2, false)).collect();
        let weights = CategoryWeights::new([1.0, 2.0, 0.5, 1.5]).unwrap();
        let mk = |topology| CrfTrainConfig {
            topology,
            l2: 0.1,
            max_iter: 300,
            tol: 1e-8,
        };
        let chain = train(&instances, &weights, &mk(Topology::Chain), FeatureLayout::default())
            .unwrap();
        let tree = train(&instances, &weights, &mk(Topology::Tree), FeatureLayout::default())
            .unwrap();
        let (nll_chain, _) =
            nll_and_gradient(&chain.params, &instances, &weights, 0.1).unwrap();
        let (nll_tree, _) = nll_and_gradient(&tree.params, &instances, &weights, 0.1).unwrap();
        assert_relative_eq!(nll_chain, nll_tree, epsilon = 1e-6);
    }

    #[test]
    fn training_loss_is_monotone() {
        // replicate the optimizer call to observe the trace
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let instances: Vec<TrainInstance> =
            (0..5).map(|i| random_instance(&mut rng, 2, i % 2 == 0)).collect();
        let weights = CategoryWeights::uniform();
        let dim = 2;
        let objective = |flat: &[f64], grad_out: &mut [f64]| {
            let params = CrfParams::from_flat(dim, flat);
            let (loss, grad) = nll_and_gradient(&params, &instances, &weights, 0.01).unwrap();
            grad_out.copy_from_slice(&grad.to_flat());
            loss
        };
        let out = lbfgs(
            objective,
            CrfParams::zeros(dim).to_flat(),
            &LbfgsConfig::default(),
        )
        .unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn model_serializes_with_flat_params() {
        let model = CrfModel {
            topology: Topology::Tree,
            feature_layout: FeatureLayout::default(),
            params: CrfParams::zeros(2),
        };
        let json = serde_json::to_string(&model).unwrap();
        assert!(json.contains("\"topology\":\"tree\""));
        assert!(json.contains("\"node_weights\""));
        assert!(json.contains("\"transition\""));
        let back: CrfModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
        let _ = "roundtrip".to_string();
    }
}
