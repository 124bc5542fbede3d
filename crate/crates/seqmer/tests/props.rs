//! Property tests for structural invariants: corpus round-trips, window
//! coverage, group monotonicity in the radius, and score linearity.

mod common;

use proptest::prelude::*;

use seqmer::corpus::{
    self, parse_dataset, Alphabet, LabeledSequence, SequenceDataset, SymbolId,
};
use seqmer::embeddings::parse_embeddings;
use seqmer::groups::{generate_groups, GroupSet};
use seqmer::learner::{presence, ExtendedSymbol, KmerFeature};
use seqmer::model::LinearModel;

fn arb_label() -> impl Strategy<Value = String> {
    prop_oneof![Just("walk".to_string()), Just("run".to_string()), Just("sit".to_string())]
}

fn arb_items(sigma: usize) -> impl Strategy<Value = Vec<(Vec<u8>, String)>> {
    prop::collection::vec(
        (prop::collection::vec(0..sigma as u8, 1..8), arb_label()),
        1..20,
    )
}

proptest! {
    #[test]
    fn corpus_round_trips_through_text(items in arb_items(4)) {
        let mut alphabet = Alphabet::new();
        for name in common::SYMBOL_NAMES.iter().take(4) {
            alphabet.intern(name);
        }
        let items: Vec<LabeledSequence> = items
            .into_iter()
            .map(|(syms, label)| LabeledSequence {
                symbols: syms.into_iter().map(SymbolId::from).collect(),
                label,
            })
            .collect();
        let ds = SequenceDataset::new(alphabet, items);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.tsv");
        ds.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back = parse_dataset(&text, "round-trip", Some(ds.alphabet.clone())).unwrap();
        prop_assert_eq!(back.items, ds.items);
        prop_assert_eq!(back.classes, ds.classes);
    }

    #[test]
    fn windows_cover_the_stream_in_order(
        stream in prop::collection::vec((0..5u32, arb_label()), 1..40),
        size in 1..6usize,
        stride in 1..6usize,
    ) {
        let symbols: Vec<SymbolId> = stream.iter().map(|(s, _)| *s).collect();
        let labels: Vec<String> = stream.iter().map(|(_, l)| l.clone()).collect();
        let windows = corpus::window_dataset(&symbols, &labels, size, stride);
        // every window is a contiguous slice at its expected start offset
        for (w, item) in windows.iter().enumerate() {
            let start = w * stride;
            let end = (start + size).min(symbols.len());
            prop_assert_eq!(&item.symbols[..], &symbols[start..end]);
            // the label is the majority label of the window
            let slice = &labels[start..end];
            let count = slice.iter().filter(|l| **l == item.label).count();
            for other in slice {
                let c = slice.iter().filter(|l| *l == other).count();
                prop_assert!(count >= c);
            }
        }
        // windowing stops once a window reaches the end of the stream or no
        // further start position exists
        let last_start = (windows.len() - 1) * stride;
        let last_end = (last_start + size).min(symbols.len());
        prop_assert!(last_end == symbols.len() || windows.len() * stride >= symbols.len());
    }

    #[test]
    fn groups_grow_with_the_radius(
        coords in prop::collection::vec((-100..100i32, -100..100i32), 3..12),
        r1 in 0.0..1.0f64,
        dr in 0.0..1.0f64,
    ) {
        let r2 = r1 + dr;
        let mut alphabet = Alphabet::new();
        let mut text = String::new();
        for (i, (x, y)) in coords.iter().enumerate() {
            // shift off the origin so normalization never sees a zero vector
            let name = format!("s{i:02}");
            alphabet.intern(&name);
            text.push_str(&format!("{name} {} {} 1\n", *x as f64 / 100.0, *y as f64 / 100.0));
        }
        let (table, _) = parse_embeddings(&text, "prop").unwrap();
        let table = table.normalize().unwrap();
        let small = generate_groups(&alphabet, &table, r1, "_").unwrap();
        let large = generate_groups(&alphabet, &table, r2, "_").unwrap();
        // every group at the smaller radius is contained in one at the larger
        for g in small.groups() {
            let covered = large.groups().iter().any(|h| {
                g.members().iter().all(|m| h.contains(*m))
            });
            prop_assert!(covered, "group {} lost at radius {}", g.display(), r2);
        }
        // membership index agrees with the group lists
        for id in alphabet.ids() {
            for &gi in large.groups_of(id) {
                prop_assert!(large.get(gi).contains(id));
            }
        }
    }

    #[test]
    fn score_is_linear_in_the_weights(
        seq in prop::collection::vec(0..4u32, 1..10),
        weights in prop::collection::vec(-3.0..3.0f64, 1..4),
        scale in -5.0..5.0f64,
    ) {
        let mut alphabet = Alphabet::new();
        for name in common::SYMBOL_NAMES.iter().take(4) {
            alphabet.intern(name);
        }
        let features: Vec<(KmerFeature, f64)> = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                (KmerFeature::new(vec![ExtendedSymbol::Base(i as SymbolId)]), w)
            })
            .collect();
        let groups = GroupSet::empty();
        // score equals the dot product with the presence indicator
        let manual: f64 = features
            .iter()
            .map(|(f, w)| if presence(f, &seq, &groups) { *w } else { 0.0 })
            .sum();
        let model = LinearModel::new(
            features.clone(),
            alphabet.clone(),
            groups,
            "+1".into(),
            "-1".into(),
        );
        prop_assert!((model.score(&seq) - manual).abs() < 1e-12);
        // scaling all weights scales the score
        let scaled: Vec<(KmerFeature, f64)> = features
            .iter()
            .map(|(f, w)| (f.clone(), w * scale))
            .collect();
        let model2 = LinearModel::new(
            scaled,
            alphabet,
            GroupSet::empty(),
            "+1".into(),
            "-1".into(),
        );
        prop_assert!((model2.score(&seq) - scale * model.score(&seq)).abs() < 1e-9);
    }
}
