//! Symbol interning, sequence storage, corpus file I/O, and the windowed
//! majority-label preprocessor for multivariate recordings.
//!
//! Corpus files are plain TSV: one `label<TAB>sym1 sym2 ... symk` line per
//! sequence, UTF-8, `#`-prefixed comment lines and blank lines skipped.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub type SymbolId = u32;

pub const POS_LABEL: &str = "+1";
pub const NEG_LABEL: &str = "-1";

/// Bijective mapping between surface strings and dense symbol ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alphabet {
    names: Vec<String>,
    ids: HashMap<String, SymbolId>,
}

impl Alphabet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `name`, interning it if unseen.
    pub fn intern(&mut self, name: &str) -> SymbolId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as SymbolId;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn lookup(&self, name: &str) -> Option<SymbolId> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: SymbolId) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = SymbolId> {
        0..self.len() as SymbolId
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSequence {
    pub symbols: Vec<SymbolId>,
    pub label: String,
}

#[derive(Debug, Clone, Default)]
pub struct SequenceDataset {
    pub alphabet: Alphabet,
    pub items: Vec<LabeledSequence>,
    /// Distinct labels in order of first occurrence.
    pub classes: Vec<String>,
}

impl SequenceDataset {
    pub fn new(alphabet: Alphabet, items: Vec<LabeledSequence>) -> Self {
        let mut classes = Vec::new();
        for item in &items {
            if !classes.contains(&item.label) {
                classes.push(item.label.clone());
            }
        }
        SequenceDataset {
            alphabet,
            items,
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// One-vs-all relabeling: `target` becomes `+1`, everything else `-1`.
    pub fn binarize(&self, target: &str) -> Result<SequenceDataset> {
        if !self.classes.iter().any(|c| c == target) {
            return Err(Error::InvalidInput(format!(
                "target class `{target}` not present in dataset"
            )));
        }
        let items = self
            .items
            .iter()
            .map(|it| LabeledSequence {
                symbols: it.symbols.clone(),
                label: if it.label == target {
                    POS_LABEL.to_string()
                } else {
                    NEG_LABEL.to_string()
                },
            })
            .collect();
        Ok(SequenceDataset::new(self.alphabet.clone(), items))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&item.label);
            out.push('\t');
            let syms: Vec<&str> = item.symbols.iter().map(|&s| self.alphabet.name(s)).collect();
            out.push_str(&syms.join(" "));
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(out.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Parses corpus text. With a closed `alphabet`, unknown symbols are an error;
/// without one, symbols are interned in encounter order.
pub fn parse_dataset(text: &str, origin: &str, alphabet: Option<Alphabet>) -> Result<SequenceDataset> {
    let closed = alphabet.is_some();
    let mut alphabet = alphabet.unwrap_or_default();
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "expected `label<TAB>symbols`"))?;
        if label.is_empty() {
            return Err(Error::parse(origin, lineno, "empty label"));
        }
        let mut symbols = Vec::new();
        for tok in rest.split_whitespace() {
            let id = if closed {
                alphabet
                    .lookup(tok)
                    .ok_or_else(|| Error::UnknownSymbol(tok.to_string()))?
            } else {
                alphabet.intern(tok)
            };
            symbols.push(id);
        }
        if symbols.is_empty() {
            return Err(Error::parse(origin, lineno, "empty symbol list"));
        }
        items.push(LabeledSequence {
            symbols,
            label: label.to_string(),
        });
    }
    if items.is_empty() {
        return Err(Error::Format(format!("{origin}: no sequences")));
    }
    Ok(SequenceDataset::new(alphabet, items))
}

pub fn load_dataset(path: impl AsRef<Path>, alphabet: Option<Alphabet>) -> Result<SequenceDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_dataset(&text, &path.display().to_string(), alphabet)
}

/// Raw multivariate stream before windowing: per-frame channel tuples plus a
/// per-frame label.
#[derive(Debug, Clone)]
pub struct MultivariateRecording {
    pub frames: Vec<Vec<String>>,
    pub frame_labels: Vec<String>,
}

impl MultivariateRecording {
    pub fn new(frames: Vec<Vec<String>>, frame_labels: Vec<String>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("recording has no frames".into()));
        }
        if frames.len() != frame_labels.len() {
            return Err(Error::InvalidInput(
                "frame and label counts differ".into(),
            ));
        }
        let arity = frames[0].len();
        if frames.iter().any(|f| f.len() != arity) {
            return Err(Error::InvalidInput("frames have mixed arity".into()));
        }
        Ok(MultivariateRecording {
            frames,
            frame_labels,
        })
    }

    /// Reads a recording from CSV: m channel columns followed by one label
    /// column, header row required.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let mut frames = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path.display().to_string(), i + 2, e.to_string()))?;
            if rec.len() < 2 {
                return Err(Error::parse(
                    path.display().to_string(),
                    i + 2,
                    "need at least one channel column and a label column",
                ));
            }
            let n = rec.len();
            frames.push(rec.iter().take(n - 1).map(str::to_string).collect());
            labels.push(rec[n - 1].to_string());
        }
        MultivariateRecording::new(frames, labels)
    }
}

/// Encodes each frame tuple as one composite symbol (channel values joined by
/// `joiner`) and collapses runs of identical adjacent composites, keeping the
/// label of the run's first frame. Composites are interned into `alphabet`.
pub fn encode_frames(
    rec: &MultivariateRecording,
    joiner: &str,
    alphabet: &mut Alphabet,
) -> (Vec<SymbolId>, Vec<String>) {
    let mut symbols = Vec::new();
    let mut labels = Vec::new();
    let mut prev: Option<String> = None;
    for (frame, label) in rec.frames.iter().zip(&rec.frame_labels) {
        let composite = frame.join(joiner);
        if prev.as_deref() == Some(composite.as_str()) {
            continue;
        }
        symbols.push(alphabet.intern(&composite));
        labels.push(label.clone());
        prev = Some(composite);
    }
    (symbols, labels)
}

/// Slices a position-labeled sequence into majority-labeled windows.
///
/// Windows start at 0, stride, 2*stride, ...; each is `[start, start+size)`
/// truncated at the end of the sequence. Once a window reaches the end no
/// further (pure-suffix) windows are emitted. The window label is the most
/// frequent per-position label, ties broken by earliest occurrence within
/// the window.
pub fn window_dataset(
    symbols: &[SymbolId],
    pos_labels: &[String],
    size: usize,
    stride: usize,
) -> Vec<LabeledSequence> {
    assert!(size >= 1 && stride >= 1);
    assert_eq!(symbols.len(), pos_labels.len());
    let mut out = Vec::new();
    let mut start = 0;
    while start < symbols.len() {
        let end = (start + size).min(symbols.len());
        let window = &symbols[start..end];
        let labels = &pos_labels[start..end];
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new(); // label -> (count, first pos)
        for (pos, l) in labels.iter().enumerate() {
            let e = counts.entry(l.as_str()).or_insert((0, pos));
            e.0 += 1;
        }
        let best = counts
            .iter()
            .min_by_key(|(_, &(count, first))| (std::cmp::Reverse(count), first))
            .map(|(&l, _)| l.to_string())
            .expect("non-empty window");
        out.push(LabeledSequence {
            symbols: window.to_vec(),
            label: best,
        });
        if end == symbols.len() {
            break;
        }
        start += stride;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_basic() {
        let ds = parse_dataset("+1\tA B A\n-1\tB C\n", "test", None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.alphabet.len(), 3);
        assert_eq!(ds.alphabet.lookup("A"), Some(0));
        assert_eq!(ds.alphabet.lookup("B"), Some(1));
        assert_eq!(ds.alphabet.lookup("C"), Some(2));
        assert_eq!(ds.classes, vec!["+1", "-1"]);
        assert_eq!(ds.items[0].symbols, vec![0, 1, 0]);
    }

    #[test]
    fn parse_empty_file_errors() {
        let err = parse_dataset("", "test", None).unwrap_err();
        assert!(err.to_string().contains("no sequences"));
        let err = parse_dataset("# only a comment\n", "test", None).unwrap_err();
        assert!(err.to_string().contains("no sequences"));
    }

    #[test]
    fn parse_empty_symbols_errors() {
        let err = parse_dataset("+1\tA\n+1\t\n", "test", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn parse_missing_tab_errors() {
        let err = parse_dataset("+1 A B\n", "test", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn closed_alphabet_rejects_unknown() {
        let ds = parse_dataset("+1\tA B\n", "test", None).unwrap();
        let err = parse_dataset("+1\tA C\n", "test", Some(ds.alphabet.clone())).unwrap_err();
        assert!(matches!(err, Error::UnknownSymbol(s) if s == "C"));
    }

    #[test]
    fn roundtrip_save_load() {
        let ds = parse_dataset("+1\tA B A\n-1\tB C\n+1\tC C A\n", "test", None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.tsv");
        ds.save(&p).unwrap();
        let back = load_dataset(&p, None).unwrap();
        assert_eq!(ds.items, back.items);
        assert_eq!(ds.classes, back.classes);
        let names: Vec<&str> = ds.alphabet.names().collect();
        let back_names: Vec<&str> = back.alphabet.names().collect();
        assert_eq!(names, back_names);
    }

    #[test]
    fn encode_merges_adjacent_repeats() {
        let rec = MultivariateRecording::new(
            vec![
                labels(&["a", "x"]),
                labels(&["a", "x"]),
                labels(&["b", "y"]),
            ],
            labels(&["L1", "L1", "L2"]),
        )
        .unwrap();
        let mut alpha = Alphabet::new();
        let (syms, labs) = encode_frames(&rec, "_", &mut alpha);
        assert_eq!(syms.len(), 2);
        assert_eq!(alpha.name(syms[0]), "a_x");
        assert_eq!(alpha.name(syms[1]), "b_y");
        assert_eq!(labs, labels(&["L1", "L2"]));
    }

    #[test]
    fn encode_single_frame() {
        let rec =
            MultivariateRecording::new(vec![labels(&["a", "x"])], labels(&["L"])).unwrap();
        let mut alpha = Alphabet::new();
        let (syms, _) = encode_frames(&rec, "_", &mut alpha);
        assert_eq!(syms.len(), 1);
        assert_eq!(alpha.name(syms[0]), "a_x");
    }

    #[test]
    fn encode_keeps_nonadjacent_repeats() {
        let rec = MultivariateRecording::new(
            vec![labels(&["a", "x"]), labels(&["b", "y"]), labels(&["a", "x"])],
            labels(&["L", "L", "L"]),
        )
        .unwrap();
        let mut alpha = Alphabet::new();
        let (syms, _) = encode_frames(&rec, "_", &mut alpha);
        assert_eq!(syms.len(), 3);
        assert_eq!(syms[0], syms[2]);
    }

    #[test]
    fn window_majority_and_tail() {
        let syms = vec![0, 1, 2, 3, 4];
        let labs = labels(&["X", "X", "Y", "Y", "Y"]);
        let w = window_dataset(&syms, &labs, 3, 2);
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].symbols, vec![0, 1, 2]);
        assert_eq!(w[0].label, "X");
        assert_eq!(w[1].symbols, vec![2, 3, 4]);
        assert_eq!(w[1].label, "Y");
    }

    #[test]
    fn window_truncated_tail_kept() {
        let syms = vec![0, 1, 2, 3, 4];
        let labs = labels(&["X", "X", "X", "X", "Y"]);
        let w = window_dataset(&syms, &labs, 2, 2);
        assert_eq!(w.len(), 3);
        assert_eq!(w[2].symbols, vec![4]);
        assert_eq!(w[2].label, "Y");
    }

    #[test]
    fn window_larger_than_sequence() {
        let syms = vec![0, 1, 2, 3, 4];
        let labs = labels(&["X", "X", "X", "X", "Y"]);
        let w = window_dataset(&syms, &labs, 1000, 50);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].symbols, syms);
        assert_eq!(w[0].label, "X");
    }

    #[test]
    fn window_tie_breaks_by_first_occurrence() {
        let syms = vec![0, 1];
        let labs = labels(&["X", "Y"]);
        let w = window_dataset(&syms, &labs, 2, 2);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].label, "X");
        // and independent of which label sorts first
        let labs = labels(&["Y", "X"]);
        let w = window_dataset(&syms, &labs, 2, 2);
        assert_eq!(w[0].label, "Y");
    }

    #[test]
    fn window_empty_input() {
        let w = window_dataset(&[], &[], 3, 1);
        assert!(w.is_empty());
    }

    #[test]
    fn binarize_one_vs_all() {
        let ds = parse_dataset("A\tx\nB\ty\nC\tz\n", "test", None).unwrap();
        let bin = ds.binarize("A").unwrap();
        let got: Vec<&str> = bin.items.iter().map(|i| i.label.as_str()).collect();
        assert_eq!(got, vec![POS_LABEL, NEG_LABEL, NEG_LABEL]);
        assert_eq!(bin.items[0].symbols, ds.items[0].symbols);
    }

    #[test]
    fn binarize_all_target() {
        let ds = parse_dataset("A\tx\nA\ty\n", "test", None).unwrap();
        let bin = ds.binarize("A").unwrap();
        assert!(bin.items.iter().all(|i| i.label == POS_LABEL));
        assert_eq!(bin.classes, vec![POS_LABEL]);
    }

    #[test]
    fn binarize_unknown_target_errors() {
        let ds = parse_dataset("A\tx\n", "test", None).unwrap();
        assert!(ds.binarize("Z").is_err());
    }
}
