//! Training engine: logistic loss, greedy coordinate descent with
//! Gauss-Southwell selection, and the branch-and-bound search over the
//! extended k-mer feature space.

use std::collections::{BTreeMap, HashMap};

use crate::corpus::{SequenceDataset, SymbolId, POS_LABEL};
use crate::error::{Error, Result};
use crate::groups::GroupSet;
use crate::model::LinearModel;

/// A base alphabet symbol or a group acting as one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtendedSymbol {
    Base(SymbolId),
    Group(usize),
}

impl ExtendedSymbol {
    pub fn matches(&self, id: SymbolId, groups: &GroupSet) -> bool {
        match *self {
            ExtendedSymbol::Base(b) => b == id,
            ExtendedSymbol::Group(g) => groups.get(g).contains(id),
        }
    }

    pub fn display<'a>(&self, alphabet: &'a crate::corpus::Alphabet, groups: &'a GroupSet) -> &'a str {
        match *self {
            ExtendedSymbol::Base(b) => alphabet.name(b),
            ExtendedSymbol::Group(g) => groups.get(g).display(),
        }
    }
}

/// Ordered list of extended symbols, matched by contiguous containment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KmerFeature {
    pub symbols: Vec<ExtendedSymbol>,
}

impl KmerFeature {
    pub fn new(symbols: Vec<ExtendedSymbol>) -> Self {
        assert!(!symbols.is_empty());
        KmerFeature { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn display(&self, alphabet: &crate::corpus::Alphabet, groups: &GroupSet) -> String {
        self.symbols
            .iter()
            .map(|s| s.display(alphabet, groups))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// 1 iff the feature occurs (contiguously) somewhere in the sequence.
pub fn presence(feature: &KmerFeature, seq: &[SymbolId], groups: &GroupSet) -> bool {
    let k = feature.len();
    if k > seq.len() {
        return false;
    }
    'outer: for start in 0..=(seq.len() - k) {
        for (t, sym) in feature.symbols.iter().enumerate() {
            if !sym.matches(seq[start + t], groups) {
                continue 'outer;
            }
        }
        return true;
    }
    false
}

/// Sparse weight vector plus cached per-sequence margins `y_i * beta^T x_i`
/// and the total logistic loss.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub beta: HashMap<KmerFeature, f64>,
    pub margins: Vec<f64>,
    pub loss: f64,
    pub iteration: usize,
}

impl TrainState {
    pub fn new(n: usize) -> Self {
        TrainState {
            beta: HashMap::new(),
            margins: vec![0.0; n],
            loss: n as f64 * std::f64::consts::LN_2,
            iteration: 0,
        }
    }
}

/// log(1 + exp(-m)), overflow-safe.
pub fn logistic_loss_term(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// 1 / (1 + exp(m)), overflow-safe.
pub fn inv_one_plus_exp(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

pub fn labels_to_y(data: &SequenceDataset) -> Vec<f64> {
    data.items
        .iter()
        .map(|it| if it.label == POS_LABEL { 1.0 } else { -1.0 })
        .collect()
}

/// Recomputes margins and loss from scratch for a given weight vector.
pub fn recompute_state(
    beta: &HashMap<KmerFeature, f64>,
    data: &SequenceDataset,
    groups: &GroupSet,
) -> (Vec<f64>, f64) {
    let ys = labels_to_y(data);
    let mut margins = vec![0.0; data.len()];
    for (i, item) in data.items.iter().enumerate() {
        let mut score = 0.0;
        for (f, &w) in beta {
            if presence(f, &item.symbols, groups) {
                score += w;
            }
        }
        margins[i] = ys[i] * score;
    }
    let loss = margins.iter().map(|&m| logistic_loss_term(m)).sum();
    (margins, loss)
}

/// Partial derivative of the total logistic loss w.r.t. the feature's weight:
/// sum over sequences containing the feature of `-y_i / (1 + exp(y_i beta^T x_i))`.
pub fn gradient(
    feature: &KmerFeature,
    state: &TrainState,
    data: &SequenceDataset,
    groups: &GroupSet,
) -> f64 {
    let ys = labels_to_y(data);
    let mut g = 0.0;
    for (i, item) in data.items.iter().enumerate() {
        if presence(feature, &item.symbols, groups) {
            g += -ys[i] * inv_one_plus_exp(state.margins[i]);
        }
    }
    g
}

/// A node of the feature search tree: a feature, every placement of it in
/// the data as a `(sequence, end-position)` pair, and the distinct sequences
/// covered.
#[derive(Debug, Clone)]
pub struct SearchNode {
    pub feature: KmerFeature,
    pub occurrences: Vec<(u32, u32)>,
    pub doc_set: Vec<u32>,
}

impl SearchNode {
    fn from_occurrences(feature: KmerFeature, occurrences: Vec<(u32, u32)>) -> Self {
        let mut doc_set: Vec<u32> = occurrences.iter().map(|&(i, _)| i).collect();
        doc_set.dedup(); // occurrences are built in sequence order
        SearchNode {
            feature,
            occurrences,
            doc_set,
        }
    }
}

/// Upper bound on `|gradient|` of every extension of this node: the larger of
/// the one-sided gradient-magnitude sums over the node's document set. Any
/// extension covers a subset of these documents, so its gradient is a signed
/// subsum capped by the bigger side.
pub fn bound(node: &SearchNode, state: &TrainState, ys: &[f64]) -> f64 {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for &i in &node.doc_set {
        let p = inv_one_plus_exp(state.margins[i as usize]);
        if ys[i as usize] > 0.0 {
            pos += p;
        } else {
            neg += p;
        }
    }
    pos.max(neg)
}

#[derive(Debug, Clone)]
pub struct PrunedNode {
    pub feature: KmerFeature,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub feature: KmerFeature,
    pub gradient: f64,
    pub doc_set: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub max_len: usize,
    pub max_iterations: usize,
    pub convergence_eps: f64,
    pub use_wildcard: bool,
    pub group_set: GroupSet,
    /// Maximum step halvings in the coordinate line search.
    pub line_search: u32,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            max_len: 6,
            max_iterations: 500,
            convergence_eps: 1e-4,
            use_wildcard: false,
            group_set: GroupSet::empty(),
            line_search: 30,
        }
    }
}

impl LearnerConfig {
    /// The group set actually used during search: the configured one, plus
    /// the wildcard group when enabled.
    pub fn effective_groups(&self, alphabet: &crate::corpus::Alphabet) -> Result<GroupSet> {
        if self.use_wildcard {
            self.group_set.with_wildcard(alphabet)
        } else {
            Ok(self.group_set.clone())
        }
    }
}

struct Best {
    abs: f64,
    len: usize,
    display: String,
    node: SearchNode,
    gradient: f64,
}

fn doc_gradient(doc_set: &[u32], grad_terms: &[f64]) -> f64 {
    doc_set.iter().map(|&i| grad_terms[i as usize]).sum()
}

/// Exact Gauss-Southwell selection: the occurring feature of length
/// `<= max_len` with maximum `|gradient|`, ties broken by shortest length
/// then lexicographic display.
pub fn find_best_feature(
    state: &TrainState,
    data: &SequenceDataset,
    config: &LearnerConfig,
) -> Result<(KmerFeature, f64)> {
    let groups = config.effective_groups(&data.alphabet)?;
    let out = search_best(state, data, &groups, config.max_len, None)?;
    Ok((out.feature, out.gradient))
}

/// Same search, additionally recording every node whose subtree was pruned
/// together with its bound.
pub fn find_best_feature_traced(
    state: &TrainState,
    data: &SequenceDataset,
    config: &LearnerConfig,
) -> Result<(SearchOutcome, Vec<PrunedNode>)> {
    let groups = config.effective_groups(&data.alphabet)?;
    let mut pruned = Vec::new();
    let out = search_best(state, data, &groups, config.max_len, Some(&mut pruned))?;
    Ok((out, pruned))
}

pub(crate) fn search_best(
    state: &TrainState,
    data: &SequenceDataset,
    groups: &GroupSet,
    max_len: usize,
    mut trace: Option<&mut Vec<PrunedNode>>,
) -> Result<SearchOutcome> {
    let ys = labels_to_y(data);
    if !(ys.iter().any(|&y| y > 0.0) && ys.iter().any(|&y| y < 0.0)) {
        return Err(Error::DegenerateLabels);
    }
    // per-document gradient contribution of any feature present in it
    let grad_terms: Vec<f64> = ys
        .iter()
        .zip(&state.margins)
        .map(|(&y, &m)| -y * inv_one_plus_exp(m))
        .collect();

    // roots: every occurring extended unigram
    let mut root_occ: BTreeMap<ExtendedSymbol, Vec<(u32, u32)>> = BTreeMap::new();
    for (i, item) in data.items.iter().enumerate() {
        for (t, &sym) in item.symbols.iter().enumerate() {
            let occ = (i as u32, t as u32);
            root_occ.entry(ExtendedSymbol::Base(sym)).or_default().push(occ);
            for &g in groups.groups_of(sym) {
                root_occ.entry(ExtendedSymbol::Group(g)).or_default().push(occ);
            }
        }
    }

    let roots: Vec<SearchNode> = root_occ
        .into_iter()
        .map(|(sym, occ)| SearchNode::from_occurrences(KmerFeature::new(vec![sym]), occ))
        .collect();

    let mut best: Option<Best> = None;
    for node in &roots {
        consider(node, &grad_terms, data, groups, &mut best);
    }

    // depth-first expansion with branch-and-bound pruning
    let mut stack: Vec<SearchNode> = roots.into_iter().rev().collect();
    while let Some(node) = stack.pop() {
        if node.feature.len() >= max_len {
            continue;
        }
        let tau = best.as_ref().map(|b| b.abs).unwrap_or(0.0);
        let mu = bound(&node, state, &ys);
        // An extension can only tie tau, never beat it, when mu == tau; it is
        // also strictly longer than this node, so if the current best is not
        // longer it wins the tie-break anyway and the subtree can go.
        let prunable = mu < tau
            || (mu == tau
                && best
                    .as_ref()
                    .map(|b| b.len <= node.feature.len())
                    .unwrap_or(false));
        if prunable {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(PrunedNode {
                    feature: node.feature.clone(),
                    mu,
                });
            }
            continue;
        }
        let mut children: BTreeMap<ExtendedSymbol, Vec<(u32, u32)>> = BTreeMap::new();
        for &(i, t) in &node.occurrences {
            let seq = &data.items[i as usize].symbols;
            let next = (t + 1) as usize;
            if next >= seq.len() {
                continue;
            }
            let sym = seq[next];
            let occ = (i, t + 1);
            children.entry(ExtendedSymbol::Base(sym)).or_default().push(occ);
            for &g in groups.groups_of(sym) {
                children.entry(ExtendedSymbol::Group(g)).or_default().push(occ);
            }
        }
        let mut expanded: Vec<SearchNode> = Vec::with_capacity(children.len());
        for (sym, occ) in children {
            let mut symbols = node.feature.symbols.clone();
            symbols.push(sym);
            let child = SearchNode::from_occurrences(KmerFeature::new(symbols), occ);
            consider(&child, &grad_terms, data, groups, &mut best);
            expanded.push(child);
        }
        for child in expanded.into_iter().rev() {
            stack.push(child);
        }
    }

    let best = best.expect("non-empty data has at least one unigram");
    Ok(SearchOutcome {
        feature: best.node.feature,
        gradient: best.gradient,
        doc_set: best.node.doc_set,
    })
}

fn consider(
    node: &SearchNode,
    grad_terms: &[f64],
    data: &SequenceDataset,
    groups: &GroupSet,
    best: &mut Option<Best>,
) {
    let g = doc_gradient(&node.doc_set, grad_terms);
    let abs = g.abs();
    let better = match best {
        None => true,
        Some(b) => {
            if abs != b.abs {
                abs > b.abs
            } else {
                let len = node.feature.len();
                if len != b.len {
                    len < b.len
                } else {
                    node.feature.display(&data.alphabet, groups) < b.display
                }
            }
        }
    };
    if better {
        *best = Some(Best {
            abs,
            len: node.feature.len(),
            display: node.feature.display(&data.alphabet, groups),
            node: node.clone(),
            gradient: g,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied { halvings: u32 },
    NoOp,
    Stalled,
}

/// Line-search coordinate update on a single feature: step `-sign(g) * eta`
/// with `eta` halved from 1 until the loss strictly decreases.
pub fn coordinate_step(
    state: &mut TrainState,
    feature: &KmerFeature,
    data: &SequenceDataset,
    groups: &GroupSet,
    line_search: u32,
) -> StepOutcome {
    let docs: Vec<u32> = data
        .items
        .iter()
        .enumerate()
        .filter(|(_, it)| presence(feature, &it.symbols, groups))
        .map(|(i, _)| i as u32)
        .collect();
    let ys = labels_to_y(data);
    step_with_docs(state, feature, &docs, &ys, line_search)
}

pub(crate) fn step_with_docs(
    state: &mut TrainState,
    feature: &KmerFeature,
    docs: &[u32],
    ys: &[f64],
    line_search: u32,
) -> StepOutcome {
    let g: f64 = docs
        .iter()
        .map(|&i| -ys[i as usize] * inv_one_plus_exp(state.margins[i as usize]))
        .sum();
    if g == 0.0 {
        return StepOutcome::NoOp;
    }
    let dir = -g.signum();
    let old_terms: f64 = docs
        .iter()
        .map(|&i| logistic_loss_term(state.margins[i as usize]))
        .sum();
    let mut eta = 1.0;
    for halvings in 0..=line_search {
        let delta = dir * eta;
        let new_terms: f64 = docs
            .iter()
            .map(|&i| logistic_loss_term(state.margins[i as usize] + ys[i as usize] * delta))
            .sum();
        let new_loss = state.loss - old_terms + new_terms;
        if new_loss < state.loss {
            let w = state.beta.entry(feature.clone()).or_insert(0.0);
            *w += delta;
            if *w == 0.0 {
                state.beta.remove(feature);
            }
            for &i in docs {
                state.margins[i as usize] += ys[i as usize] * delta;
            }
            state.loss = new_loss;
            return StepOutcome::Applied { halvings };
        }
        eta *= 0.5;
    }
    StepOutcome::Stalled
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ConvergedGradient,
    ConvergedLoss,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub losses: Vec<f64>,
    pub stop: StopReason,
    pub iterations: usize,
}

/// Full training loop on a binarized dataset (labels `+1`/`-1`). Returns the
/// sparse model of nonzero-weight features plus a per-iteration summary.
pub fn train(data: &SequenceDataset, config: &LearnerConfig) -> Result<(LinearModel, TrainSummary)> {
    let groups = config.effective_groups(&data.alphabet)?;
    let ys = labels_to_y(data);
    if !(ys.iter().any(|&y| y > 0.0) && ys.iter().any(|&y| y < 0.0)) {
        return Err(Error::DegenerateLabels);
    }
    let mut state = TrainState::new(data.len());
    let mut losses = vec![state.loss];
    let mut stop = StopReason::MaxIterations;
    for _ in 0..config.max_iterations {
        let outcome = search_best(&state, data, &groups, config.max_len, None)?;
        if outcome.gradient.abs() < config.convergence_eps {
            stop = StopReason::ConvergedGradient;
            break;
        }
        let prev = state.loss;
        match step_with_docs(
            &mut state,
            &outcome.feature,
            &outcome.doc_set,
            &ys,
            config.line_search,
        ) {
            StepOutcome::Applied { .. } => {}
            StepOutcome::NoOp | StepOutcome::Stalled => {
                stop = StopReason::Stalled;
                break;
            }
        }
        losses.push(state.loss);
        state.iteration += 1;
        let rel = (prev - state.loss) / prev.max(f64::MIN_POSITIVE);
        if rel < config.convergence_eps {
            stop = StopReason::ConvergedLoss;
            break;
        }
    }
    let iterations = state.iteration;
    let model = LinearModel::from_beta(&state.beta, data.alphabet.clone(), groups);
    Ok((
        model,
        TrainSummary {
            losses,
            stop,
            iterations,
        },
    ))
}
