//! Trained model representation, prediction, evaluation metrics,
//! model-file serialization, and stratified cross-validation.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Alphabet, LabeledSequence, SequenceDataset, SymbolId, NEG_LABEL, POS_LABEL};
use crate::error::{Error, Result};
use crate::groups::{Group, GroupSet, WILDCARD_DISPLAY};
use crate::learner::{presence, ExtendedSymbol, KmerFeature, LearnerConfig};

/// Weighted list of k-mer features; prediction is `sgn(beta^T x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    features: Vec<(KmerFeature, f64)>,
    pub target_class: String,
    pub nontarget_label: String,
    pub alphabet: Alphabet,
    pub groups: GroupSet,
}

impl LinearModel {
    pub fn new(
        features: Vec<(KmerFeature, f64)>,
        alphabet: Alphabet,
        groups: GroupSet,
        target_class: String,
        nontarget_label: String,
    ) -> Self {
        LinearModel {
            features,
            target_class,
            nontarget_label,
            alphabet,
            groups,
        }
    }

    /// Builds a model from a sparse weight map: nonzero weights only, sorted
    /// by descending |weight| then display.
    pub fn from_beta(
        beta: &HashMap<KmerFeature, f64>,
        alphabet: Alphabet,
        groups: GroupSet,
    ) -> Self {
        let mut features: Vec<(KmerFeature, f64)> = beta
            .iter()
            .filter(|(_, &w)| w != 0.0)
            .map(|(f, &w)| (f.clone(), w))
            .collect();
        features.sort_by(|(fa, wa), (fb, wb)| {
            wb.abs()
                .partial_cmp(&wa.abs())
                .unwrap()
                .then_with(|| fa.display(&alphabet, &groups).cmp(&fb.display(&alphabet, &groups)))
        });
        LinearModel {
            features,
            target_class: POS_LABEL.to_string(),
            nontarget_label: NEG_LABEL.to_string(),
            alphabet,
            groups,
        }
    }

    pub fn with_target(mut self, target: &str) -> Self {
        self.target_class = target.to_string();
        self.nontarget_label = format!("NOT_{target}");
        self
    }

    pub fn features(&self) -> &[(KmerFeature, f64)] {
        &self.features
    }

    pub fn score(&self, seq: &[SymbolId]) -> f64 {
        self.features
            .iter()
            .filter(|(f, _)| presence(f, seq, &self.groups))
            .map(|(_, w)| w)
            .sum()
    }

    /// Sign of the score; an exact 0 predicts `-1`.
    pub fn predict_binary(&self, seq: &[SymbolId]) -> i32 {
        if self.score(seq) > 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        out.push_str(&format!("#target {}\n", self.target_class));
        out.push_str(&format!("#nontarget {}\n", self.nontarget_label));
        for (f, w) in &self.features {
            out.push_str(&format!("{w}\t{}\n", f.display(&self.alphabet, &self.groups)));
        }
        let mut file =
            fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        file.write_all(out.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Loads a model, resolving feature displays against a closed alphabet and
/// group set. Unknown symbols or groups are an error.
pub fn load_model(
    path: impl AsRef<Path>,
    alphabet: &Alphabet,
    groups: &GroupSet,
) -> Result<LinearModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_model(&text, &path.display().to_string(), ModelResolution::Closed(alphabet, groups))
}

/// Loads a model with no pre-existing alphabet: base symbols and group
/// members are interned from the model file itself. Wildcard features resolve
/// against the interned alphabet, so this mode suits fidelity scoring rather
/// than prediction over a separate corpus.
pub fn load_model_standalone(path: impl AsRef<Path>) -> Result<LinearModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_model(&text, &path.display().to_string(), ModelResolution::Open(None))
}

/// Loads a model against an existing open alphabet, interning unseen symbols
/// and constructing groups from the member lists in the file.
pub fn load_model_open(path: impl AsRef<Path>, alphabet: &mut Alphabet) -> Result<LinearModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_model(
        &text,
        &path.display().to_string(),
        ModelResolution::Open(Some(alphabet)),
    )
}

enum ModelResolution<'a> {
    Closed(&'a Alphabet, &'a GroupSet),
    Open(Option<&'a mut Alphabet>),
}

fn parse_model(text: &str, origin: &str, resolution: ModelResolution) -> Result<LinearModel> {
    let mut target = None;
    let mut nontarget = None;
    let mut rows: Vec<(f64, Vec<String>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#target ") {
            target = Some(rest.trim().to_string());
            continue;
        }
        if let Some(rest) = line.strip_prefix("#nontarget ") {
            nontarget = Some(rest.trim().to_string());
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (w, display) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "expected `weight<TAB>feature`"))?;
        let w: f64 = w
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("malformed weight `{w}`")))?;
        let tokens: Vec<String> = display.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(Error::parse(origin, lineno, "empty feature"));
        }
        rows.push((w, tokens));
    }
    let target = target.ok_or_else(|| Error::Format(format!("{origin}: missing #target header")))?;
    let nontarget =
        nontarget.ok_or_else(|| Error::Format(format!("{origin}: missing #nontarget header")))?;

    let (alphabet, groups, features) = match resolution {
        ModelResolution::Closed(alphabet, groups) => {
            let mut features = Vec::new();
            for (w, tokens) in rows {
                let mut symbols = Vec::new();
                for tok in &tokens {
                    symbols.push(resolve_token_closed(tok, alphabet, groups)?);
                }
                features.push((KmerFeature::new(symbols), w));
            }
            (alphabet.clone(), groups.clone(), features)
        }
        ModelResolution::Open(alphabet) => {
            let mut fresh = Alphabet::new();
            let alphabet: &mut Alphabet = match alphabet {
                Some(a) => a,
                None => &mut fresh,
            };
            let mut group_list: Vec<Group> = Vec::new();
            let mut wildcard_rows = Vec::new();
            let mut parsed: Vec<(f64, Vec<OpenToken>)> = Vec::new();
            for (w, tokens) in rows {
                let mut toks = Vec::new();
                for tok in &tokens {
                    if tok == WILDCARD_DISPLAY {
                        wildcard_rows.push(());
                        toks.push(OpenToken::Wildcard);
                    } else if let Some(inner) =
                        tok.strip_prefix('(').and_then(|t| t.strip_suffix(')'))
                    {
                        let members: Vec<SymbolId> =
                            inner.split('|').map(|n| alphabet.intern(n)).collect();
                        toks.push(OpenToken::Members(members));
                    } else {
                        toks.push(OpenToken::Base(alphabet.intern(tok)));
                    }
                }
                parsed.push((w, toks));
            }
            // groups are constructed after all base symbols are interned so
            // the wildcard spans the whole alphabet seen in the file
            let wildcard_idx = if !wildcard_rows.is_empty() {
                let wc = Group::wildcard(alphabet)?;
                group_list.push(wc);
                Some(0usize)
            } else {
                None
            };
            let mut features = Vec::new();
            for (w, toks) in parsed {
                let mut symbols = Vec::new();
                for tok in toks {
                    let sym = match tok {
                        OpenToken::Base(id) => ExtendedSymbol::Base(id),
                        OpenToken::Wildcard => ExtendedSymbol::Group(wildcard_idx.unwrap()),
                        OpenToken::Members(mut members) => {
                            members.sort_unstable();
                            members.dedup();
                            let idx = match group_list.iter().position(|g| g.members() == members)
                            {
                                Some(i) => i,
                                None => {
                                    group_list.push(Group::new(members, alphabet)?);
                                    group_list.len() - 1
                                }
                            };
                            ExtendedSymbol::Group(idx)
                        }
                    };
                    symbols.push(sym);
                }
                features.push((KmerFeature::new(symbols), w));
            }
            (alphabet.clone(), GroupSet::new(group_list)?, features)
        }
    };
    Ok(LinearModel::new(features, alphabet, groups, target, nontarget))
}

enum OpenToken {
    Base(SymbolId),
    Wildcard,
    Members(Vec<SymbolId>),
}

fn resolve_token_closed(
    tok: &str,
    alphabet: &Alphabet,
    groups: &GroupSet,
) -> Result<ExtendedSymbol> {
    if tok == WILDCARD_DISPLAY {
        let all: Vec<SymbolId> = alphabet.ids().collect();
        if let Some(i) = groups.find_by_members(&all) {
            return Ok(ExtendedSymbol::Group(i));
        }
        return Err(Error::Format(
            "wildcard feature but no full-alphabet group in the group set".into(),
        ));
    }
    if let Some(inner) = tok.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
        let mut members = Vec::new();
        for name in inner.split('|') {
            members.push(
                alphabet
                    .lookup(name)
                    .ok_or_else(|| Error::UnknownSymbol(name.to_string()))?,
            );
        }
        members.sort_unstable();
        members.dedup();
        return groups
            .find_by_members(&members)
            .map(ExtendedSymbol::Group)
            .ok_or_else(|| Error::Format(format!("group {tok} not in the group set")));
    }
    alphabet
        .lookup(tok)
        .map(ExtendedSymbol::Base)
        .ok_or_else(|| Error::UnknownSymbol(tok.to_string()))
}

/// One binary model per class; multiclass prediction by score argmax.
#[derive(Debug, Clone)]
pub struct OneVsAllModel {
    /// Sorted by class name.
    pub models: Vec<(String, LinearModel)>,
}

impl OneVsAllModel {
    pub fn new(mut models: Vec<(String, LinearModel)>) -> Self {
        models.sort_by(|(a, _), (b, _)| a.cmp(b));
        OneVsAllModel { models }
    }

    pub fn scores(&self, seq: &[SymbolId]) -> Vec<(String, f64)> {
        self.models
            .iter()
            .map(|(c, m)| (c.clone(), m.score(seq)))
            .collect()
    }

    /// Argmax over per-class scores, ties to the lexicographically smallest
    /// class name (models are kept sorted, so the first strict max wins).
    pub fn predict(&self, seq: &[SymbolId]) -> String {
        let mut best: Option<(&str, f64)> = None;
        for (c, m) in &self.models {
            let s = m.score(seq);
            match best {
                Some((_, bs)) if s <= bs => {}
                _ => best = Some((c, s)),
            }
        }
        best.expect("at least one class model").0.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub classes: Vec<String>,
    /// confusion[i][j]: gold class i predicted as class j
    pub confusion: Vec<Vec<usize>>,
    pub excluded_class: Option<String>,
    pub items: usize,
}

/// Computes accuracy, per-class precision/recall/F1, and support-weighted F1.
/// Items whose gold label equals `excluded_class` are dropped first.
pub fn evaluate(
    gold: &[String],
    predictions: &[String],
    excluded_class: Option<&str>,
) -> Result<EvalReport> {
    if gold.len() != predictions.len() {
        return Err(Error::InvalidInput(format!(
            "{} gold labels vs {} predictions",
            gold.len(),
            predictions.len()
        )));
    }
    let pairs: Vec<(&String, &String)> = gold
        .iter()
        .zip(predictions)
        .filter(|(g, _)| excluded_class != Some(g.as_str()))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidInput(
            "no items left to evaluate after class exclusion".into(),
        ));
    }
    let mut classes: Vec<String> = Vec::new();
    for (g, p) in &pairs {
        if !classes.contains(g) {
            classes.push((*g).clone());
        }
        if !classes.contains(p) {
            classes.push((*p).clone());
        }
    }
    classes.sort();
    let index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0usize;
    for (g, p) in &pairs {
        confusion[index[g.as_str()]][index[p.as_str()]] += 1;
        if g == p {
            correct += 1;
        }
    }
    let total = pairs.len();
    let mut per_class = Vec::with_capacity(k);
    let mut weighted_f1 = 0.0;
    let mut support_total = 0usize;
    for (i, class) in classes.iter().enumerate() {
        let support: usize = confusion[i].iter().sum();
        let tp = confusion[i][i];
        let pred_count: usize = (0..k).map(|r| confusion[r][i]).sum();
        let precision = if pred_count > 0 {
            tp as f64 / pred_count as f64
        } else {
            0.0
        };
        let recall = if support > 0 {
            tp as f64 / support as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        weighted_f1 += f1 * support as f64;
        support_total += support;
        per_class.push(ClassMetrics {
            class: class.clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    Ok(EvalReport {
        accuracy: correct as f64 / total as f64,
        weighted_f1: weighted_f1 / support_total as f64,
        per_class,
        classes,
        confusion,
        excluded_class: excluded_class.map(str::to_string),
        items: total,
    })
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub fold_reports: Vec<EvalReport>,
    pub fold_models: Vec<OneVsAllModel>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_weighted_f1: f64,
    pub std_weighted_f1: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Stratified fold assignment: per-class index lists shuffled by a seeded
/// generator, dealt round-robin into `folds` folds.
pub fn stratified_folds(
    ds: &SequenceDataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidInput("need at least 2 folds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Vec::new(); folds];
    for class in &ds.classes {
        let mut idx: Vec<usize> = ds
            .items
            .iter()
            .enumerate()
            .filter(|(_, it)| &it.label == class)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < folds {
            return Err(Error::InvalidInput(format!(
                "class `{class}` has {} items, fewer than {} folds",
                idx.len(),
                folds
            )));
        }
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            assignment[j % folds].push(i);
        }
    }
    for fold in assignment.iter_mut() {
        fold.sort_unstable();
    }
    Ok(assignment)
}

/// Stratified k-fold cross-validation with one-vs-all training per fold.
/// Folds run in parallel; aggregation is by fold index, so the report does
/// not depend on thread count.
pub fn cross_validate(
    ds: &SequenceDataset,
    config: &LearnerConfig,
    folds: usize,
    seed: u64,
    excluded_class: Option<&str>,
) -> Result<CvReport> {
    let assignment = stratified_folds(ds, folds, seed)?;
    let results: Vec<Result<(EvalReport, OneVsAllModel)>> = assignment
        .par_iter()
        .map(|test_idx| {
            let test_set: std::collections::HashSet<usize> = test_idx.iter().copied().collect();
            let train_items: Vec<LabeledSequence> = ds
                .items
                .iter()
                .enumerate()
                .filter(|(i, _)| !test_set.contains(i))
                .map(|(_, it)| it.clone())
                .collect();
            let train_ds = SequenceDataset::new(ds.alphabet.clone(), train_items);
            let mut models = Vec::new();
            for class in &ds.classes {
                let bin = train_ds.binarize(class)?;
                let (model, _) = crate::learner::train(&bin, config)?;
                models.push((class.clone(), model.with_target(class)));
            }
            let ova = OneVsAllModel::new(models);
            let gold: Vec<String> = test_idx.iter().map(|&i| ds.items[i].label.clone()).collect();
            let pred: Vec<String> = test_idx
                .iter()
                .map(|&i| ova.predict(&ds.items[i].symbols))
                .collect();
            let report = evaluate(&gold, &pred, excluded_class)?;
            Ok((report, ova))
        })
        .collect();
    let mut fold_reports = Vec::with_capacity(folds);
    let mut fold_models = Vec::with_capacity(folds);
    for r in results {
        let (rep, ova) = r?;
        fold_reports.push(rep);
        fold_models.push(ova);
    }
    let accs: Vec<f64> = fold_reports.iter().map(|r| r.accuracy).collect();
    let f1s: Vec<f64> = fold_reports.iter().map(|r| r.weighted_f1).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    let (mean_weighted_f1, std_weighted_f1) = mean_std(&f1s);
    Ok(CvReport {
        fold_reports,
        fold_models,
        mean_accuracy,
        std_accuracy,
        mean_weighted_f1,
        std_weighted_f1,
    })
}
