//! Semantic fidelity: scores how close a model's positive-weighted features
//! sit to the target-class concept (and negative-weighted features to the
//! non-target concept) in a background embedding space. 1 is best, 0 worst.

use crate::embeddings::{euclidean, EmbeddingTable};
use crate::error::{Error, Result};
use crate::groups::GroupSet;
use crate::learner::{ExtendedSymbol, KmerFeature};
use crate::model::LinearModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingSymbolPolicy {
    /// Drop features with unresolvable symbols and report them.
    SkipFeature,
    /// Fail on the first unresolvable symbol.
    Error,
}

#[derive(Debug, Clone)]
pub enum NontargetConcept {
    Name(String),
    /// Mean of the named concepts' vectors; an extension for one-vs-all
    /// settings where no single non-target concept exists.
    Centroid(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct FidelityConfig {
    pub target_concept: String,
    pub nontarget: NontargetConcept,
    pub missing_symbol_policy: MissingSymbolPolicy,
    pub joiner: String,
}

impl FidelityConfig {
    pub fn new(target: &str, nontarget: &str) -> Self {
        FidelityConfig {
            target_concept: target.to_string(),
            nontarget: NontargetConcept::Name(nontarget.to_string()),
            missing_symbol_policy: MissingSymbolPolicy::SkipFeature,
            joiner: "_".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureRow {
    pub display: String,
    /// |w| / max |w| over the scored features.
    pub normalized_weight: f64,
    /// Mean symbol distance to the concept chosen by the weight's sign.
    pub distance: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone)]
pub struct FidelityReport {
    pub sf: f64,
    pub per_feature: Vec<FeatureRow>,
    pub skipped: Vec<String>,
}

/// Embedding of one extended symbol: a base symbol resolves through the
/// table (including the composite-token fallback), a group is the mean of
/// its members' resolved embeddings.
pub fn feature_symbol_embedding(
    sym: &ExtendedSymbol,
    alphabet: &crate::corpus::Alphabet,
    groups: &GroupSet,
    table: &EmbeddingTable,
    joiner: &str,
) -> Option<Vec<f64>> {
    match *sym {
        ExtendedSymbol::Base(id) => table.symbol_embedding(alphabet.name(id), joiner),
        ExtendedSymbol::Group(g) => {
            let mut sum = vec![0.0; table.dim()];
            let mut count = 0usize;
            for &m in groups.get(g).members() {
                if let Some(v) = table.symbol_embedding(alphabet.name(m), joiner) {
                    for (s, x) in sum.iter_mut().zip(&v) {
                        *s += x;
                    }
                    count += 1;
                }
            }
            if count == 0 {
                return None;
            }
            for s in sum.iter_mut() {
                *s /= count as f64;
            }
            Some(sum)
        }
    }
}

/// Mean distance between the feature's symbol embeddings and a concept
/// vector; `None` if any symbol fails to resolve.
pub fn feature_distance(
    feature: &KmerFeature,
    concept: &[f64],
    alphabet: &crate::corpus::Alphabet,
    groups: &GroupSet,
    table: &EmbeddingTable,
    joiner: &str,
) -> Option<f64> {
    let mut sum = 0.0;
    for sym in &feature.symbols {
        let e = feature_symbol_embedding(sym, alphabet, groups, table, joiner)?;
        sum += euclidean(&e, concept);
    }
    Some(sum / feature.len() as f64)
}

fn resolve_concept(table: &EmbeddingTable, name: &str, joiner: &str) -> Result<Vec<f64>> {
    table
        .symbol_embedding(name, joiner)
        .ok_or_else(|| Error::InvalidInput(format!("concept `{name}` not in embedding table")))
}

pub fn semantic_fidelity(
    model: &LinearModel,
    table: &EmbeddingTable,
    config: &FidelityConfig,
) -> Result<FidelityReport> {
    if !table.is_normalized() {
        return Err(Error::InvalidInput(
            "semantic fidelity requires a normalized embedding table".into(),
        ));
    }
    let target = resolve_concept(table, &config.target_concept, &config.joiner)?;
    let nontarget = match &config.nontarget {
        NontargetConcept::Name(n) => {
            if *n == config.target_concept {
                return Err(Error::InvalidInput(
                    "target and non-target concepts must differ".into(),
                ));
            }
            resolve_concept(table, n, &config.joiner)?
        }
        NontargetConcept::Centroid(names) => {
            if names.is_empty() {
                return Err(Error::InvalidInput("empty centroid concept list".into()));
            }
            let mut sum = vec![0.0; table.dim()];
            for n in names {
                let v = resolve_concept(table, n, &config.joiner)?;
                for (s, x) in sum.iter_mut().zip(&v) {
                    *s += x;
                }
            }
            for s in sum.iter_mut() {
                *s /= names.len() as f64;
            }
            sum
        }
    };

    // resolve distances first; the weight normalizer is the max |w| over the
    // features that actually score
    let mut scored: Vec<(&KmerFeature, f64, f64)> = Vec::new(); // (feature, w, d)
    let mut skipped = Vec::new();
    for (f, w) in model.features() {
        let concept = if *w >= 0.0 { &target } else { &nontarget };
        match feature_distance(f, concept, &model.alphabet, &model.groups, table, &config.joiner) {
            Some(d) => scored.push((f, *w, d)),
            None => match config.missing_symbol_policy {
                MissingSymbolPolicy::SkipFeature => {
                    skipped.push(f.display(&model.alphabet, &model.groups));
                }
                MissingSymbolPolicy::Error => {
                    return Err(Error::InvalidInput(format!(
                        "feature `{}` has symbols with no embedding",
                        f.display(&model.alphabet, &model.groups)
                    )));
                }
            },
        }
    }
    if scored.is_empty() {
        return Err(Error::InvalidInput(
            "no scorable features: model is empty after missing-symbol filtering".into(),
        ));
    }
    let wmax = scored
        .iter()
        .map(|(_, w, _)| w.abs())
        .fold(0.0_f64, f64::max);
    if wmax == 0.0 {
        return Err(Error::InvalidInput("all feature weights are zero".into()));
    }
    let n = scored.len() as f64;
    let mut per_feature = Vec::with_capacity(scored.len());
    let mut total = 0.0;
    for (f, w, d) in scored {
        let nw = w.abs() / wmax;
        let h = nw * d;
        total += h;
        per_feature.push(FeatureRow {
            display: f.display(&model.alphabet, &model.groups),
            normalized_weight: nw,
            distance: d,
            contribution: h,
        });
    }
    let sf = 1.0 - total / (2.0 * n);
    Ok(FidelityReport {
        sf,
        per_feature,
        skipped,
    })
}
