//! Test-only oracles, independent of the library's search path: exhaustive
//! feature enumeration, brute-force group construction, and finite
//! differences. Plus small random-instance generators.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use seqmer::corpus::{Alphabet, LabeledSequence, SequenceDataset, SymbolId};
use seqmer::groups::{Group, GroupSet};
use seqmer::learner::{
    inv_one_plus_exp, logistic_loss_term, recompute_state, ExtendedSymbol, KmerFeature,
    TrainState,
};

/// All distinct extended k-mer features of length <= max_len occurring in the
/// data, each with its document set, built straight from the definition: for
/// every concrete window, every way of generalizing its symbols to groups
/// that contain them.
pub fn enumerate_features(
    data: &SequenceDataset,
    groups: &GroupSet,
    max_len: usize,
) -> BTreeMap<Vec<ExtendedSymbol>, BTreeSet<u32>> {
    let mut out: BTreeMap<Vec<ExtendedSymbol>, BTreeSet<u32>> = BTreeMap::new();
    for (i, item) in data.items.iter().enumerate() {
        let n = item.symbols.len();
        for start in 0..n {
            for k in 1..=max_len.min(n - start) {
                let window = &item.symbols[start..start + k];
                for feat in expand_window(window, groups) {
                    out.entry(feat).or_default().insert(i as u32);
                }
            }
        }
    }
    out
}

fn expand_window(window: &[SymbolId], groups: &GroupSet) -> Vec<Vec<ExtendedSymbol>> {
    let mut acc: Vec<Vec<ExtendedSymbol>> = vec![Vec::new()];
    for &s in window {
        let mut alts = vec![ExtendedSymbol::Base(s)];
        alts.extend(groups.groups_of(s).iter().map(|&g| ExtendedSymbol::Group(g)));
        let mut next = Vec::with_capacity(acc.len() * alts.len());
        for prefix in &acc {
            for &a in &alts {
                let mut q = prefix.clone();
                q.push(a);
                next.push(q);
            }
        }
        acc = next;
    }
    acc
}

/// Gradient from a document set, summed in ascending document order (the
/// same order the implementation uses, so results compare exactly).
pub fn doc_gradient(docs: &BTreeSet<u32>, margins: &[f64], ys: &[f64]) -> f64 {
    docs.iter()
        .map(|&i| -ys[i as usize] * inv_one_plus_exp(margins[i as usize]))
        .sum()
}

/// Exhaustive argmax |gradient| with the (length, display) tie-break.
pub fn oracle_best(
    data: &SequenceDataset,
    groups: &GroupSet,
    state: &TrainState,
    ys: &[f64],
    max_len: usize,
) -> (KmerFeature, f64) {
    let mut best: Option<(f64, usize, String, KmerFeature, f64)> = None;
    for (symbols, docs) in enumerate_features(data, groups, max_len) {
        let g = doc_gradient(&docs, &state.margins, ys);
        let abs = g.abs();
        let feat = KmerFeature::new(symbols);
        let len = feat.len();
        let display = feat.display(&data.alphabet, groups);
        let better = match &best {
            None => true,
            Some((babs, blen, bdisp, _, _)) => {
                if abs != *babs {
                    abs > *babs
                } else if len != *blen {
                    len < *blen
                } else {
                    display < *bdisp
                }
            }
        };
        if better {
            best = Some((abs, len, display, feat, g));
        }
    }
    let (_, _, _, feat, g) = best.expect("data is non-empty");
    (feat, g)
}

/// Brute-force radius grouping: all pairwise distances, candidate sets,
/// singleton discard, dedup, (size, display) order.
pub fn oracle_groups(
    alphabet: &Alphabet,
    vectors: &[(SymbolId, Vec<f64>)],
    radius: f64,
) -> Vec<Vec<SymbolId>> {
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut sets: Vec<Vec<SymbolId>> = Vec::new();
    for (_, center) in vectors {
        let members: Vec<SymbolId> = vectors
            .iter()
            .filter(|(_, v)| dist(v, center) <= radius)
            .map(|&(id, _)| id)
            .collect();
        if members.len() < 2 {
            continue;
        }
        let mut sorted = members;
        sorted.sort_unstable();
        if !sets.contains(&sorted) {
            sets.push(sorted);
        }
    }
    sets.sort_by(|a, b| {
        a.len().cmp(&b.len()).then_with(|| {
            let da = display_of(a, alphabet);
            let db = display_of(b, alphabet);
            da.cmp(&db)
        })
    });
    sets
}

fn display_of(members: &[SymbolId], alphabet: &Alphabet) -> String {
    let mut names: Vec<&str> = members.iter().map(|&m| alphabet.name(m)).collect();
    names.sort_unstable();
    format!("({})", names.join("|"))
}

/// Total logistic loss of a weight vector, computed from scratch.
pub fn total_loss(
    beta: &std::collections::HashMap<KmerFeature, f64>,
    data: &SequenceDataset,
    groups: &GroupSet,
) -> f64 {
    let (_, loss) = recompute_state(beta, data, groups);
    loss
}

/// Central finite difference of the total loss in one feature's coordinate.
pub fn finite_difference_gradient(
    beta: &std::collections::HashMap<KmerFeature, f64>,
    feature: &KmerFeature,
    data: &SequenceDataset,
    groups: &GroupSet,
    h: f64,
) -> f64 {
    let mut plus = beta.clone();
    *plus.entry(feature.clone()).or_insert(0.0) += h;
    let mut minus = beta.clone();
    *minus.entry(feature.clone()).or_insert(0.0) -= h;
    (total_loss(&plus, data, groups) - total_loss(&minus, data, groups)) / (2.0 * h)
}

/// Independent fidelity recomputation straight from the definition, used to
/// cross-check the library's report.
pub fn oracle_fidelity(weighted_distances: &[(f64, f64)]) -> f64 {
    let wmax = weighted_distances
        .iter()
        .map(|(w, _)| w.abs())
        .fold(0.0_f64, f64::max);
    let n = weighted_distances.len() as f64;
    let total: f64 = weighted_distances
        .iter()
        .map(|(w, d)| (w.abs() / wmax) * d)
        .sum();
    1.0 - total / (2.0 * n)
}

pub const SYMBOL_NAMES: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];

/// Random dataset with both classes present: |alphabet| <= 5, N <= 30,
/// lengths <= 8.
pub fn random_dataset(rng: &mut ChaCha8Rng) -> SequenceDataset {
    let sigma = rng.gen_range(2..=5usize);
    let n = rng.gen_range(4..=30usize);
    let mut alphabet = Alphabet::new();
    for name in SYMBOL_NAMES.iter().take(sigma) {
        alphabet.intern(name);
    }
    loop {
        let mut items = Vec::with_capacity(n);
        for _ in 0..n {
            let len = rng.gen_range(1..=8usize);
            let symbols: Vec<SymbolId> =
                (0..len).map(|_| rng.gen_range(0..sigma) as SymbolId).collect();
            let label = if rng.gen_bool(0.5) { "+1" } else { "-1" };
            items.push(LabeledSequence {
                symbols,
                label: label.to_string(),
            });
        }
        let has_pos = items.iter().any(|i| i.label == "+1");
        let has_neg = items.iter().any(|i| i.label == "-1");
        if has_pos && has_neg {
            return SequenceDataset::new(alphabet, items);
        }
    }
}

/// 0 to 3 random groups with distinct member sets.
pub fn random_groups(rng: &mut ChaCha8Rng, alphabet: &Alphabet) -> GroupSet {
    let sigma = alphabet.len();
    let count = rng.gen_range(0..=3usize.min(sigma));
    let mut groups: Vec<Group> = Vec::new();
    let mut tries = 0;
    while groups.len() < count && tries < 50 {
        tries += 1;
        let size = rng.gen_range(2..=sigma);
        let mut ids: Vec<SymbolId> = (0..sigma as SymbolId).collect();
        ids.shuffle(rng);
        ids.truncate(size);
        let g = Group::new(ids, alphabet).unwrap();
        if !groups.iter().any(|o| o.members() == g.members()) {
            groups.push(g);
        }
    }
    GroupSet::new(groups).unwrap()
}

/// Random sparse state: up to 3 occurring features get random weights;
/// margins and loss recomputed from scratch.
pub fn random_state(
    rng: &mut ChaCha8Rng,
    data: &SequenceDataset,
    groups: &GroupSet,
    max_len: usize,
) -> TrainState {
    let mut state = TrainState::new(data.len());
    if rng.gen_bool(0.4) {
        return state; // zero weights
    }
    let features: Vec<Vec<ExtendedSymbol>> = enumerate_features(data, groups, max_len)
        .into_keys()
        .collect();
    let k = rng.gen_range(1..=3usize.min(features.len()));
    for _ in 0..k {
        let f = features[rng.gen_range(0..features.len())].clone();
        let w = rng.gen_range(-2.0..2.0);
        *state.beta.entry(KmerFeature::new(f)).or_insert(0.0) += w;
    }
    let (margins, loss) = recompute_state(&state.beta, data, groups);
    state.margins = margins;
    state.loss = loss;
    state
}

pub fn ln_term_sum(margins: &[f64]) -> f64 {
    margins.iter().map(|&m| logistic_loss_term(m)).sum()
}
