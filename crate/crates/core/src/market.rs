//! Finite scenario-tree markets: a riskless bond with price 1, a family of
//! risky assets observed at every node, and a stochastic clock metering
//! consumption.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::scalar::Real;

/// Node identifier. Trees use the ids `0..len`, with 0 the root.
pub type NodeId = usize;

const PROB_TOL: f64 = 1e-9;
const CLOCK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("nonpositive or non-finite price {value} for asset {asset} at node {node}")]
    NonpositivePrice { node: NodeId, asset: usize, value: f64 },
    #[error("clock violation: {0}")]
    ClockViolation(String),
    #[error("model too large: {requested} nodes exceeds limit {limit}")]
    TooLarge { requested: usize, limit: usize },
    #[error("truncation to {requested} assets out of range (model has {available})")]
    TruncationOutOfRange { requested: usize, available: usize },
    #[error("invalid example market: {0}")]
    InvalidExample(String),
}

/// Size guards applied while building models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_nodes: usize,
    pub max_example_assets: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_nodes: 2_000_000, max_example_assets: 20 }
    }
}

impl Limits {
    /// Default limits with `DUALITYLAB_MAX_NODES` applied when set.
    pub fn from_env() -> Self {
        let mut l = Self::default();
        if let Some(n) = std::env::var("DUALITYLAB_MAX_NODES").ok().and_then(|v| v.trim().parse().ok()) {
            l.max_nodes = n;
        }
        l
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec<T> {
    pub id: NodeId,
    pub t: usize,
    pub parent: Option<NodeId>,
    /// Transition probability from the parent. Ignored for the root.
    pub prob: T,
}

/// Unvalidated description of a market, mirroring the JSON model format.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec<T> {
    pub nodes: Vec<NodeSpec<T>>,
    pub prices: BTreeMap<NodeId, Vec<T>>,
    /// Clock increments; missing nodes have increment 0.
    pub clock: BTreeMap<NodeId, T>,
    pub bound: T,
    pub n_active: Option<usize>,
}

/// One branch of a multiplicative lattice step.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T> {
    pub prob: T,
    pub factors: Vec<T>,
}

impl<T: Real> TreeSpec<T> {
    /// Non-recombining tree where every node branches the same way: each
    /// branch multiplies asset prices by its factors. The clock is a unit
    /// mass at the horizon.
    pub fn branching(periods: usize, branches: &[Branch<T>], s0: &[T]) -> Self {
        let mut nodes = vec![NodeSpec { id: 0, t: 0, parent: None, prob: T::one() }];
        let mut prices = BTreeMap::new();
        prices.insert(0, s0.to_vec());
        let mut frontier = vec![0usize];
        for t in 1..=periods {
            let mut next = Vec::new();
            for &p in &frontier {
                for b in branches {
                    let id = nodes.len();
                    nodes.push(NodeSpec { id, t, parent: Some(p), prob: b.prob });
                    let s: Vec<T> = prices[&p].iter().zip(&b.factors).map(|(&s, &f)| s * f).collect();
                    prices.insert(id, s);
                    next.push(id);
                }
            }
            frontier = next;
        }
        let clock = frontier.iter().map(|&l| (l, T::one())).collect();
        Self { nodes, prices, clock, bound: T::one(), n_active: None }
    }

    /// Replaces the clock with increments depending only on the time index.
    pub fn with_clock_by_time(mut self, increments: &[T], bound: T) -> Self {
        self.clock = self
            .nodes
            .iter()
            .filter_map(|n| increments.get(n.t).map(|&d| (n.id, d)))
            .filter(|&(_, d)| d != T::zero())
            .collect();
        self.bound = bound;
        self
    }

    pub fn with_n_active(mut self, n: usize) -> Self {
        self.n_active = Some(n);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree<T> {
    parent: Vec<Option<NodeId>>,
    time: Vec<usize>,
    prob: Vec<T>,
    uncond: Vec<T>,
    children: Vec<Vec<NodeId>>,
    order: Vec<NodeId>,
    leaves: Vec<NodeId>,
    horizon: usize,
}

impl<T: Real> ScenarioTree<T> {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn parent(&self, k: NodeId) -> Option<NodeId> {
        self.parent[k]
    }

    pub fn children(&self, k: NodeId) -> &[NodeId] {
        &self.children[k]
    }

    pub fn is_leaf(&self, k: NodeId) -> bool {
        self.children[k].is_empty()
    }

    pub fn time(&self, k: NodeId) -> usize {
        self.time[k]
    }

    /// Conditional probability of reaching `k` from its parent.
    pub fn transition_prob(&self, k: NodeId) -> T {
        self.prob[k]
    }

    /// Unconditional probability of node `k`.
    pub fn prob(&self, k: NodeId) -> T {
        self.uncond[k]
    }

    /// Nodes sorted so that every parent precedes its children.
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Path from the root to `k`, inclusive.
    pub fn path(&self, k: NodeId) -> Vec<NodeId> {
        let mut p = vec![k];
        let mut cur = k;
        while let Some(q) = self.parent[cur] {
            p.push(q);
            cur = q;
        }
        p.reverse();
        p
    }
}

/// Per-node prices of the risky assets; the bond is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetProcess<T> {
    prices: Vec<Vec<T>>,
    count: usize,
}

impl<T: Real> AssetProcess<T> {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn prices(&self, k: NodeId) -> &[T] {
        &self.prices[k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticClock<T> {
    increments: Vec<T>,
    bound: T,
}

impl<T: Real> StochasticClock<T> {
    pub fn new(increments: Vec<T>, bound: T) -> Self {
        Self { increments, bound }
    }

    pub fn increment(&self, k: NodeId) -> T {
        self.increments[k]
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    pub fn bound(&self) -> T {
        self.bound
    }

    /// Cumulative clock value at every node.
    pub fn cumulative(&self, tree: &ScenarioTree<T>) -> Vec<T> {
        let mut kappa = vec![T::zero(); tree.len()];
        for &k in tree.order() {
            let base = tree.parent(k).map_or(T::zero(), |p| kappa[p]);
            kappa[k] = base + self.increments[k];
        }
        kappa
    }
}

/// Outcome of the clock conditions, one flag per condition.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ClockReport {
    pub starts_at_zero: bool,
    pub nondecreasing: bool,
    pub bounded: bool,
    pub positive_mass: bool,
    pub max_total: f64,
    pub prob_positive_total: f64,
}

impl ClockReport {
    pub fn passed(&self) -> bool {
        self.starts_at_zero && self.nondecreasing && self.bounded && self.positive_mass
    }

    fn failure(&self) -> Option<String> {
        let mut why = Vec::new();
        if !self.starts_at_zero {
            why.push("clock must start at 0".to_string());
        }
        if !self.nondecreasing {
            why.push("negative clock increment".to_string());
        }
        if !self.bounded {
            why.push(format!("clock total {} exceeds bound", self.max_total));
        }
        if !self.positive_mass {
            why.push("clock total is zero almost surely".to_string());
        }
        (!why.is_empty()).then(|| why.join("; "))
    }
}

/// Checks the clock conditions on a tree. Never fails; see the report flags.
pub fn validate_clock<T: Real>(clock: &StochasticClock<T>, tree: &ScenarioTree<T>) -> ClockReport {
    let kappa = clock.cumulative(tree);
    let root = tree.root();
    let starts_at_zero = clock.increment(root) == T::zero();
    let nondecreasing = clock.increments().iter().all(|&d| d >= T::zero() && d.is_finite());
    let max_total = tree.leaves().iter().map(|&l| kappa[l]).fold(T::zero(), T::max);
    let bounded = clock.bound() > T::zero() && max_total <= clock.bound() * (T::one() + T::of(CLOCK_TOL));
    let prob_positive: T = tree.leaves().iter().filter(|&&l| kappa[l] > T::zero()).map(|&l| tree.prob(l)).sum();
    ClockReport {
        starts_at_zero,
        nondecreasing,
        bounded,
        positive_mass: prob_positive > T::zero(),
        max_total: max_total.to_f64_lossy(),
        prob_positive_total: prob_positive.to_f64_lossy(),
    }
}

/// Validated market: tree, prices, clock and the number of tradable assets.
/// Immutable; truncations share the underlying data.
#[derive(Debug, Clone)]
pub struct MarketModel<T> {
    tree: Arc<ScenarioTree<T>>,
    assets: Arc<AssetProcess<T>>,
    clock: Arc<StochasticClock<T>>,
    n_active: usize,
}

impl<T: Real> MarketModel<T> {
    pub fn tree(&self) -> &ScenarioTree<T> {
        &self.tree
    }

    pub fn assets(&self) -> &AssetProcess<T> {
        &self.assets
    }

    pub fn clock(&self) -> &StochasticClock<T> {
        &self.clock
    }

    pub fn n_active(&self) -> usize {
        self.n_active
    }

    pub fn n_assets(&self) -> usize {
        self.assets.count()
    }

    /// Prices of the tradable assets at `k`.
    pub fn tradable_prices(&self, k: NodeId) -> &[T] {
        &self.assets.prices(k)[..self.n_active]
    }

    /// `S_k - S_parent(k)` over tradable assets; zeros at the root.
    pub fn price_increment(&self, k: NodeId) -> Vec<T> {
        match self.tree.parent(k) {
            None => vec![T::zero(); self.n_active],
            Some(p) => self.tradable_prices(k).iter().zip(self.tradable_prices(p)).map(|(&a, &b)| a - b).collect(),
        }
    }

    /// `E[kappa_T]`.
    pub fn expected_clock(&self) -> T {
        (0..self.tree.len()).map(|k| self.tree.prob(k) * self.clock.increment(k)).sum()
    }

    /// Nodes where consumption accrues (positive clock increment).
    pub fn consumption_nodes(&self) -> Vec<NodeId> {
        (0..self.tree.len()).filter(|&k| self.clock.increment(k) > T::zero()).collect()
    }

    /// Same market with only the first `n` assets tradable.
    pub fn truncate(&self, n: usize) -> Result<Self, ModelError> {
        if n > self.n_assets() {
            return Err(ModelError::TruncationOutOfRange { requested: n, available: self.n_assets() });
        }
        Ok(Self { n_active: n, ..self.clone() })
    }

    /// Inverse of [`build_tree`]: the spec that rebuilds this model.
    pub fn to_spec(&self) -> TreeSpec<T> {
        let tr = self.tree();
        TreeSpec {
            nodes: (0..tr.len())
                .map(|k| NodeSpec { id: k, t: tr.time(k), parent: tr.parent(k), prob: tr.transition_prob(k) })
                .collect(),
            prices: (0..tr.len()).map(|k| (k, self.assets.prices(k).to_vec())).collect(),
            clock: (0..tr.len())
                .filter(|&k| self.clock.increment(k) != T::zero())
                .map(|k| (k, self.clock.increment(k)))
                .collect(),
            bound: self.clock.bound(),
            n_active: Some(self.n_active),
        }
    }
}

/// Validates a tree description and assembles the model.
pub fn build_tree<T: Real>(spec: &TreeSpec<T>, limits: &Limits) -> Result<MarketModel<T>, ModelError> {
    let n = spec.nodes.len();
    if n == 0 {
        return Err(ModelError::MalformedTree("no nodes".into()));
    }
    if n > limits.max_nodes {
        return Err(ModelError::TooLarge { requested: n, limit: limits.max_nodes });
    }
    let mut slot: Vec<Option<&NodeSpec<T>>> = vec![None; n];
    for node in &spec.nodes {
        if node.id >= n {
            return Err(ModelError::MalformedTree(format!("node id {} outside 0..{}", node.id, n)));
        }
        if slot[node.id].replace(node).is_some() {
            return Err(ModelError::MalformedTree(format!("duplicate node id {}", node.id)));
        }
    }
    let nodes: Vec<&NodeSpec<T>> = slot.into_iter().map(|s| s.expect("ids are a permutation")).collect();
    if nodes[0].parent.is_some() || nodes[0].t != 0 {
        return Err(ModelError::MalformedTree("node 0 must be the root at t = 0".into()));
    }
    let mut children = vec![Vec::new(); n];
    for node in &nodes {
        match node.parent {
            None if node.id != 0 => {
                return Err(ModelError::MalformedTree(format!("orphan node {}", node.id)));
            }
            None => {}
            Some(p) => {
                if p >= n {
                    return Err(ModelError::MalformedTree(format!("node {} has unknown parent {p}", node.id)));
                }
                if nodes[p].t + 1 != node.t {
                    return Err(ModelError::MalformedTree(format!(
                        "node {} at t = {} cannot follow parent {p} at t = {}",
                        node.id, node.t, nodes[p].t
                    )));
                }
                let prob = node.prob;
                if !(prob > T::zero() && prob <= T::one() + T::of(PROB_TOL)) {
                    return Err(ModelError::MalformedTree(format!("node {} has probability {prob} outside (0, 1]", node.id)));
                }
                children[p].push(node.id);
            }
        }
    }
    // BFS from the root: every node reachable, parents before children
    let mut order = Vec::with_capacity(n);
    order.push(0);
    let mut head = 0;
    while head < order.len() {
        let k = order[head];
        head += 1;
        order.extend_from_slice(&children[k]);
    }
    if order.len() != n {
        return Err(ModelError::MalformedTree("tree is not connected to the root".into()));
    }
    for (k, ch) in children.iter().enumerate() {
        if ch.is_empty() {
            continue;
        }
        let s: T = ch.iter().map(|&c| nodes[c].prob).sum();
        if (s - T::one()).abs() > T::of(PROB_TOL) {
            return Err(ModelError::MalformedTree(format!("children of node {k} have probabilities summing to {s}")));
        }
    }
    let leaves: Vec<NodeId> = (0..n).filter(|&k| children[k].is_empty()).collect();
    let horizon = nodes[leaves[0]].t;
    if let Some(&bad) = leaves.iter().find(|&&l| nodes[l].t != horizon) {
        return Err(ModelError::MalformedTree(format!("leaf {bad} at t = {} but horizon is {horizon}", nodes[bad].t)));
    }
    let mut uncond = vec![T::zero(); n];
    for &k in &order {
        uncond[k] = match nodes[k].parent {
            None => T::one(),
            Some(p) => uncond[p] * nodes[k].prob,
        };
    }
    let tree = ScenarioTree {
        parent: nodes.iter().map(|x| x.parent).collect(),
        time: nodes.iter().map(|x| x.t).collect(),
        prob: nodes.iter().map(|x| if x.parent.is_none() { T::one() } else { x.prob }).collect(),
        uncond,
        children,
        order,
        leaves,
        horizon,
    };

    let count = spec.prices.values().next().map_or(0, Vec::len);
    let mut prices = vec![Vec::new(); n];
    if count > 0 || !spec.prices.is_empty() {
        for (k, slot) in prices.iter_mut().enumerate() {
            let p = spec
                .prices
                .get(&k)
                .ok_or_else(|| ModelError::MalformedTree(format!("node {k} has no prices")))?;
            if p.len() != count {
                return Err(ModelError::MalformedTree(format!("node {k} carries {} prices, expected {count}", p.len())));
            }
            if let Some((i, &v)) = p.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > T::zero())) {
                return Err(ModelError::NonpositivePrice { node: k, asset: i, value: v.to_f64_lossy() });
            }
            *slot = p.clone();
        }
    }
    if let Some(&bad) = spec.prices.keys().find(|&&k| k >= n) {
        return Err(ModelError::MalformedTree(format!("prices given for unknown node {bad}")));
    }
    let assets = AssetProcess { prices, count };

    let mut inc = vec![T::zero(); n];
    for (&k, &d) in &spec.clock {
        if k >= n {
            return Err(ModelError::ClockViolation(format!("increment given for unknown node {k}")));
        }
        inc[k] = d;
    }
    let clock = StochasticClock::new(inc, spec.bound);
    let report = validate_clock(&clock, &tree);
    if let Some(why) = report.failure() {
        return Err(ModelError::ClockViolation(why));
    }
    let n_active = spec.n_active.unwrap_or(count);
    if n_active > count {
        return Err(ModelError::TruncationOutOfRange { requested: n_active, available: count });
    }
    Ok(MarketModel { tree: Arc::new(tree), assets: Arc::new(assets), clock: Arc::new(clock), n_active })
}

/// One-period market of independent binomial assets moving by factor 2 up
/// (probability `p_i`) or 1/2 down, all starting at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleMarketSpec<T> {
    p: Vec<T>,
}

impl<T: Real> ExampleMarketSpec<T> {
    pub fn new(p: Vec<T>) -> Result<Self, ModelError> {
        if p.is_empty() {
            return Err(ModelError::InvalidExample("need at least one asset".into()));
        }
        if let Some(bad) = p.iter().find(|&&q| !(q > T::zero() && q < T::one())) {
            return Err(ModelError::InvalidExample(format!("probability {bad} outside (0, 1)")));
        }
        if let Some(w) = p.windows(2).find(|w| w[1] <= w[0]) {
            return Err(ModelError::InvalidExample(format!("probabilities must increase strictly ({} then {})", w[0], w[1])));
        }
        Ok(Self { p })
    }

    /// `p_i = start + i * step` for `i = 0..n`.
    pub fn arithmetic(n: usize, start: T, step: T) -> Result<Self, ModelError> {
        Self::new((0..n).map(|i| start + step * T::from_usize(i).expect("small")).collect())
    }

    pub fn probabilities(&self) -> &[T] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// First `n` assets of the sequence.
    pub fn prefix(&self, n: usize) -> Result<Self, ModelError> {
        if n == 0 || n > self.p.len() {
            return Err(ModelError::InvalidExample(format!("prefix {n} of {} assets", self.p.len())));
        }
        Ok(Self { p: self.p[..n].to_vec() })
    }
}

/// Builds the independent-binomial example market. Leaf `1 + m` is the
/// outcome where asset `i` moves up exactly when bit `i` of `m` is set.
/// The clock is a unit mass at the horizon.
pub fn build_example_market<T: Real>(spec: &ExampleMarketSpec<T>, limits: &Limits) -> Result<MarketModel<T>, ModelError> {
    let n = spec.len();
    if n > limits.max_example_assets {
        return Err(ModelError::TooLarge { requested: n, limit: limits.max_example_assets });
    }
    let leaves = 1usize << n;
    if leaves + 1 > limits.max_nodes {
        return Err(ModelError::TooLarge { requested: leaves + 1, limit: limits.max_nodes });
    }
    let up = T::two();
    let down = T::half();
    let mut nodes = vec![NodeSpec { id: 0, t: 0, parent: None, prob: T::one() }];
    let mut prices = BTreeMap::new();
    let mut clock = BTreeMap::new();
    prices.insert(0, vec![T::one(); n]);
    for m in 0..leaves {
        let id = 1 + m;
        let mut prob = T::one();
        let mut s = Vec::with_capacity(n);
        for (i, &p) in spec.p.iter().enumerate() {
            if m >> i & 1 == 1 {
                prob *= p;
                s.push(up);
            } else {
                prob *= T::one() - p;
                s.push(down);
            }
        }
        nodes.push(NodeSpec { id, t: 1, parent: Some(0), prob });
        prices.insert(id, s);
        clock.insert(id, T::one());
    }
    build_tree(&TreeSpec { nodes, prices, clock, bound: T::one(), n_active: Some(n) }, limits)
}
