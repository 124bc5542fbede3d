//! Command-line surface: experiment orchestration over the corpus,
//! embedding, learner, model, and fidelity modules.
//!
//! Exit codes: 0 success, 1 usage or parse failure, 2 data-level failure
//! (degenerate labels, bad invariants), 3 training stopped on the iteration
//! cap instead of converging.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::corpus::{self, Alphabet, SequenceDataset};
use crate::embeddings::load_embeddings;
use crate::error::{Error, Result};
use crate::fidelity::{self, FidelityConfig, MissingSymbolPolicy, NontargetConcept};
use crate::groups::{generate_groups, load_groups, GroupSet};
use crate::learner::{self, LearnerConfig, StopReason};
use crate::model::{self, LinearModel, OneVsAllModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "seqmer", version, about = "k-mer sequence classifier with symbol groups")]
pub struct Cli {
    /// Worker thread cap; output is identical for any value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate symbol groups by radius clustering in an embedding space
    Groups(GroupsArgs),
    /// Train a binary model (one-vs-all on --target)
    Train(TrainArgs),
    /// Predict labels for a corpus
    Predict(PredictArgs),
    /// Predict and report accuracy / weighted F1
    Eval(EvalArgs),
    /// Semantic fidelity of a model against an embedding table
    Sf(SfArgs),
    /// Stratified cross-validation with one-vs-all training
    Cv(CvArgs),
    /// Window a multivariate CSV recording into a corpus
    Window(WindowArgs),
}

#[derive(Args, Debug)]
pub struct GroupsArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Corpus TSV supplying the alphabet
    #[arg(long, conflicts_with = "alphabet")]
    pub data: Option<PathBuf>,
    /// Plain list of symbols, one per line, as an alternative alphabet source
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
    #[arg(long)]
    pub radius: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Print group count and size histogram
    #[arg(long)]
    pub stats: bool,
    #[arg(long, default_value = "_")]
    pub joiner: String,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value_t = 6)]
    pub max_len: usize,
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long)]
    pub wildcard: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// One model for binary prediction, several for one-vs-all argmax
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub exclude_class: Option<String>,
    /// Optional predictions TSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SfArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub target_concept: String,
    #[arg(long, conflicts_with = "nontarget_centroid")]
    pub nontarget_concept: Option<String>,
    /// Comma-separated concepts averaged into the non-target vector
    #[arg(long, value_delimiter = ',')]
    pub nontarget_centroid: Option<Vec<String>>,
    #[arg(long, default_value = "_")]
    pub joiner: String,
    /// Fail instead of skipping features with unresolvable symbols
    #[arg(long)]
    pub strict_symbols: bool,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub max_len: usize,
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long)]
    pub wildcard: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long)]
    pub exclude_class: Option<String>,
    /// Embedding table for per-class mean semantic fidelity
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Non-target concept; defaults to the centroid of the other classes
    #[arg(long)]
    pub nontarget_concept: Option<String>,
    #[arg(long, default_value = "_")]
    pub joiner: String,
    /// Report file; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct WindowArgs {
    #[arg(long)]
    pub input_csv: PathBuf,
    #[arg(long)]
    pub size: usize,
    #[arg(long)]
    pub stride: usize,
    #[arg(long, default_value = "_")]
    pub joiner: String,
    /// Drop windows labeled with this class
    #[arg(long)]
    pub drop_class: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Parses argv and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.exit_code() == 0 { EXIT_OK } else { EXIT_USAGE };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // ignore the error when a pool already exists (repeated in-process runs)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Groups(args) => cmd_groups(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Sf(args) => cmd_sf(&args),
        Command::Cv(args) => cmd_cv(&args),
        Command::Window(args) => cmd_window(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn write_manifest(
    explicit: Option<&Path>,
    default_beside: &Path,
    command: &str,
    params: &[(&str, String)],
    inputs: &[&Path],
) -> Result<()> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let mut p = default_beside.as_os_str().to_owned();
            p.push(".manifest");
            PathBuf::from(p)
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "command={command}");
    for (k, v) in params {
        let _ = writeln!(out, "param.{k}={v}");
    }
    for input in inputs {
        let _ = writeln!(out, "input={} sha256={}", input.display(), sha256_file(input)?);
    }
    fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn load_alphabet_source(args: &GroupsArgs) -> Result<Alphabet> {
    if let Some(data) = &args.data {
        return Ok(corpus::load_dataset(data, None)?.alphabet);
    }
    if let Some(list) = &args.alphabet {
        let text =
            fs::read_to_string(list).map_err(|e| Error::io(list.display().to_string(), e))?;
        let mut alpha = Alphabet::new();
        for line in text.lines() {
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                alpha.intern(line);
            }
        }
        if alpha.is_empty() {
            return Err(Error::Format(format!("{}: no symbols", list.display())));
        }
        return Ok(alpha);
    }
    Err(Error::InvalidInput(
        "one of --data or --alphabet is required".into(),
    ))
}

fn cmd_groups(args: &GroupsArgs) -> Result<i32> {
    let alphabet = load_alphabet_source(args)?;
    let (table, dups) = load_embeddings(&args.embeddings)?;
    if dups > 0 {
        eprintln!("warning: {dups} duplicate embedding names, last occurrence kept");
    }
    let table = table.normalize()?;
    let set = generate_groups(&alphabet, &table, args.radius, &args.joiner)?;
    set.save(&alphabet, &args.out)?;
    if args.stats {
        println!("radius {}: {} groups", args.radius, set.len());
        let mut hist: std::collections::BTreeMap<usize, usize> = Default::default();
        for g in set.groups() {
            *hist.entry(g.len()).or_default() += 1;
        }
        for (size, count) in hist {
            println!("size {size}: {count}");
        }
    }
    let mut inputs: Vec<&Path> = vec![args.embeddings.as_path()];
    if let Some(d) = &args.data {
        inputs.push(d);
    }
    if let Some(a) = &args.alphabet {
        inputs.push(a);
    }
    write_manifest(
        args.manifest.as_deref(),
        &args.out,
        "groups",
        &[
            ("radius", args.radius.to_string()),
            ("joiner", args.joiner.clone()),
        ],
        &inputs,
    )?;
    Ok(EXIT_OK)
}

fn learner_config(
    alphabet: &mut Alphabet,
    groups_path: Option<&Path>,
    wildcard: bool,
    max_len: usize,
    eps: f64,
    max_iters: usize,
) -> Result<LearnerConfig> {
    let group_set = match groups_path {
        Some(p) => load_groups(p, alphabet)?,
        None => GroupSet::empty(),
    };
    Ok(LearnerConfig {
        max_len,
        max_iterations: max_iters,
        convergence_eps: eps,
        use_wildcard: wildcard,
        group_set,
        ..Default::default()
    })
}

fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let mut ds = corpus::load_dataset(&args.input, None)?;
    let config = learner_config(
        &mut ds.alphabet,
        args.groups.as_deref(),
        args.wildcard,
        args.max_len,
        args.eps,
        args.max_iters,
    )?;
    let bin = ds.binarize(&args.target)?;
    let (model, summary) = learner::train(&bin, &config)?;
    let model = model.with_target(&args.target);
    model.save(&args.model_out)?;
    let mut inputs: Vec<&Path> = vec![args.input.as_path()];
    if let Some(g) = &args.groups {
        inputs.push(g);
    }
    write_manifest(
        args.manifest.as_deref(),
        &args.model_out,
        "train",
        &[
            ("target", args.target.clone()),
            ("max_len", args.max_len.to_string()),
            ("wildcard", args.wildcard.to_string()),
            ("eps", args.eps.to_string()),
            ("max_iters", args.max_iters.to_string()),
        ],
        &inputs,
    )?;
    eprintln!(
        "trained {} features in {} iterations ({:?})",
        model.features().len(),
        summary.iterations,
        summary.stop
    );
    if summary.stop == StopReason::MaxIterations {
        return Ok(EXIT_NO_CONVERGENCE);
    }
    Ok(EXIT_OK)
}

enum Loaded {
    Binary(LinearModel),
    Multi(OneVsAllModel),
}

fn load_models(paths: &[PathBuf], alphabet: &mut Alphabet) -> Result<Loaded> {
    if paths.len() == 1 {
        return Ok(Loaded::Binary(model::load_model_open(&paths[0], alphabet)?));
    }
    let mut models = Vec::new();
    for p in paths {
        let m = model::load_model_open(p, alphabet)?;
        models.push((m.target_class.clone(), m));
    }
    Ok(Loaded::Multi(OneVsAllModel::new(models)))
}

fn predictions(
    loaded: &Loaded,
    ds: &SequenceDataset,
) -> (Vec<String>, Vec<String>, Vec<String>) {
    // (gold, predicted, score column)
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    let mut scores = Vec::new();
    match loaded {
        Loaded::Binary(m) => {
            for item in &ds.items {
                let s = m.score(&item.symbols);
                let p = if s > 0.0 {
                    m.target_class.clone()
                } else {
                    m.nontarget_label.clone()
                };
                gold.push(if item.label == m.target_class {
                    m.target_class.clone()
                } else {
                    m.nontarget_label.clone()
                });
                pred.push(p);
                scores.push(format!("{s}"));
            }
        }
        Loaded::Multi(ova) => {
            for item in &ds.items {
                let per: Vec<String> = ova
                    .scores(&item.symbols)
                    .into_iter()
                    .map(|(c, s)| format!("{c}={s}"))
                    .collect();
                gold.push(item.label.clone());
                pred.push(ova.predict(&item.symbols));
                scores.push(per.join(","));
            }
        }
    }
    (gold, pred, scores)
}

fn write_predictions(path: &Path, gold: &[String], pred: &[String], scores: &[String]) -> Result<()> {
    let mut out = String::new();
    for ((g, p), s) in gold.iter().zip(pred).zip(scores) {
        let _ = writeln!(out, "{g}\t{p}\t{s}");
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn cmd_predict(args: &PredictArgs) -> Result<i32> {
    let mut ds = corpus::load_dataset(&args.input, None)?;
    let loaded = load_models(&args.model, &mut ds.alphabet)?;
    let (gold, pred, scores) = predictions(&loaded, &ds);
    write_predictions(&args.out, &gold, &pred, &scores)?;
    Ok(EXIT_OK)
}

fn render_report(report: &model::EvalReport) -> String {
    let mut out = String::new();
    if let Some(c) = &report.excluded_class {
        let _ = writeln!(out, "excluded_class={c}");
    }
    let _ = writeln!(out, "items={}", report.items);
    let _ = writeln!(out, "accuracy={:.6}", report.accuracy);
    let _ = writeln!(out, "weighted_f1={:.6}", report.weighted_f1);
    for cm in &report.per_class {
        let _ = writeln!(
            out,
            "class={} precision={:.6} recall={:.6} f1={:.6} support={}",
            cm.class, cm.precision, cm.recall, cm.f1, cm.support
        );
    }
    out
}

fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let mut ds = corpus::load_dataset(&args.input, None)?;
    let loaded = load_models(&args.model, &mut ds.alphabet)?;
    let (gold, pred, scores) = predictions(&loaded, &ds);
    if let Some(out) = &args.out {
        write_predictions(out, &gold, &pred, &scores)?;
    }
    let report = model::evaluate(&gold, &pred, args.exclude_class.as_deref())?;
    print!("{}", render_report(&report));
    Ok(EXIT_OK)
}

fn render_fidelity(report: &fidelity::FidelityReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "semantic fidelity: {:.6}", report.sf);
    let _ = writeln!(out, "{:>10}  {:>10}  {:>10}  feature", "weight", "distance", "h");
    for row in &report.per_feature {
        let _ = writeln!(
            out,
            "{:>10.6}  {:>10.6}  {:>10.6}  {}",
            row.normalized_weight, row.distance, row.contribution, row.display
        );
    }
    for s in &report.skipped {
        let _ = writeln!(out, "skipped (no embedding): {s}");
    }
    // machine-readable block
    let _ = writeln!(out, "sf={}", report.sf);
    for row in &report.per_feature {
        let _ = writeln!(
            out,
            "feature={} w={} d={} h={}",
            row.display, row.normalized_weight, row.distance, row.contribution
        );
    }
    out
}

fn cmd_sf(args: &SfArgs) -> Result<i32> {
    let m = model::load_model_standalone(&args.model)?;
    let (table, _) = load_embeddings(&args.embeddings)?;
    let table = table.normalize()?;
    let nontarget = match (&args.nontarget_concept, &args.nontarget_centroid) {
        (Some(n), _) => NontargetConcept::Name(n.clone()),
        (None, Some(names)) => NontargetConcept::Centroid(names.clone()),
        (None, None) => {
            return Err(Error::InvalidInput(
                "one of --nontarget-concept or --nontarget-centroid is required".into(),
            ))
        }
    };
    let config = FidelityConfig {
        target_concept: args.target_concept.clone(),
        nontarget,
        missing_symbol_policy: if args.strict_symbols {
            MissingSymbolPolicy::Error
        } else {
            MissingSymbolPolicy::SkipFeature
        },
        joiner: args.joiner.clone(),
    };
    let report = fidelity::semantic_fidelity(&m, &table, &config)?;
    print!("{}", render_fidelity(&report));
    Ok(EXIT_OK)
}

fn cmd_cv(args: &CvArgs) -> Result<i32> {
    let mut ds = corpus::load_dataset(&args.input, None)?;
    let config = learner_config(
        &mut ds.alphabet,
        args.groups.as_deref(),
        args.wildcard,
        args.max_len,
        args.eps,
        args.max_iters,
    )?;
    let cv = model::cross_validate(
        &ds,
        &config,
        args.folds,
        args.seed,
        args.exclude_class.as_deref(),
    )?;
    let mut out = String::new();
    let _ = writeln!(out, "folds={} seed={}", args.folds, args.seed);
    let _ = writeln!(
        out,
        "accuracy mean={:.6} std={:.6}",
        cv.mean_accuracy, cv.std_accuracy
    );
    let _ = writeln!(
        out,
        "weighted_f1 mean={:.6} std={:.6}",
        cv.mean_weighted_f1, cv.std_weighted_f1
    );
    for (i, rep) in cv.fold_reports.iter().enumerate() {
        let _ = writeln!(
            out,
            "fold={} accuracy={:.6} weighted_f1={:.6}",
            i, rep.accuracy, rep.weighted_f1
        );
    }
    if let Some(emb) = &args.embeddings {
        let (table, _) = load_embeddings(emb)?;
        let table = table.normalize()?;
        for class in &ds.classes {
            let nontarget = match &args.nontarget_concept {
                Some(n) => NontargetConcept::Name(n.clone()),
                None => NontargetConcept::Centroid(
                    ds.classes.iter().filter(|c| *c != class).cloned().collect(),
                ),
            };
            let config = FidelityConfig {
                target_concept: class.clone(),
                nontarget,
                missing_symbol_policy: MissingSymbolPolicy::SkipFeature,
                joiner: args.joiner.clone(),
            };
            let mut sfs = Vec::new();
            for ova in &cv.fold_models {
                let m = ova
                    .models
                    .iter()
                    .find(|(c, _)| c == class)
                    .map(|(_, m)| m)
                    .expect("model per class");
                if let Ok(rep) = fidelity::semantic_fidelity(m, &table, &config) {
                    sfs.push(rep.sf);
                }
            }
            if sfs.is_empty() {
                let _ = writeln!(out, "sf class={class} mean=n/a");
            } else {
                let mean = sfs.iter().sum::<f64>() / sfs.len() as f64;
                let _ = writeln!(out, "sf class={class} mean={mean:.6} folds={}", sfs.len());
            }
        }
    }
    match &args.out {
        Some(p) => fs::write(p, out).map_err(|e| Error::io(p.display().to_string(), e))?,
        None => print!("{out}"),
    }
    Ok(EXIT_OK)
}

fn cmd_window(args: &WindowArgs) -> Result<i32> {
    if args.size < 1 || args.stride < 1 {
        return Err(Error::InvalidInput("size and stride must be >= 1".into()));
    }
    let rec = corpus::MultivariateRecording::from_csv(&args.input_csv)?;
    let mut alphabet = Alphabet::new();
    let (symbols, labels) = corpus::encode_frames(&rec, &args.joiner, &mut alphabet);
    let mut items = corpus::window_dataset(&symbols, &labels, args.size, args.stride);
    if let Some(drop) = &args.drop_class {
        items.retain(|it| &it.label != drop);
    }
    let ds = SequenceDataset::new(alphabet, items);
    ds.save(&args.out)?;
    write_manifest(
        args.manifest.as_deref(),
        &args.out,
        "window",
        &[
            ("size", args.size.to_string()),
            ("stride", args.stride.to_string()),
            ("joiner", args.joiner.clone()),
            (
                "drop_class",
                args.drop_class.clone().unwrap_or_default(),
            ),
        ],
        &[args.input_csv.as_path()],
    )?;
    Ok(EXIT_OK)
}
