use std::collections::HashSet;

use earlysib_core::corpus::{cohens_kappa, Kind, Label};
use earlysib_core::earlysib::{EarlySibModel, EncoderSpec, ModelConfig};
use earlysib_core::explain::{complexity_of, exact_values, sampled_values, Game};
use earlysib_core::metrics::compute_metrics;
use earlysib_core::stats::mcnemar;
use earlysib_core::synthgen::{generate_corpus, GenConfig};
use earlysib_core::trainer::stratified_kfold;
use earlysib_core::userset::{build_user_dataset, resample_indices, select_context, ContextConfig};
use proptest::prelude::*;

fn labels(bits: &[bool]) -> Vec<Label> {
    bits.iter().map(|&b| if b { Label::Sib } else { Label::NoSib }).collect()
}

#[derive(Debug)]
struct Table(Vec<f64>);

impl Game for Table {
    fn players(&self) -> usize {
        self.0.len().trailing_zeros() as usize
    }
    fn value(&self, mask: &[bool]) -> f64 {
        self.0[mask.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum::<usize>()]
    }
}

fn game() -> impl Strategy<Value = Table> {
    (1usize..=6).prop_flat_map(|n| prop::collection::vec(-1.0f64..1.0, 1 << n)).prop_map(Table)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kappa_is_symmetric(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..60)) {
        let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let k = cohens_kappa(&a, &b).unwrap();
        prop_assert!((k - cohens_kappa(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(k <= 1.0 + 1e-12);
        prop_assert!((cohens_kappa(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_bounded(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..80)) {
        let (p, y): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let m = compute_metrics(&p, &y).unwrap();
        prop_assert_eq!(m.confusion.total(), p.len() as u64);
        for v in [m.balanced_accuracy, m.recall, m.weighted_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(m.precision.is_some(), p.contains(&1));
    }

    #[test]
    fn folds_partition_and_stratify(bits in prop::collection::vec(any::<bool>(), 20..120), k in 2usize..6, seed: u64) {
        let y = labels(&bits);
        let ones = bits.iter().filter(|&&b| b).count();
        prop_assume!(ones >= k && bits.len() - ones >= k);
        let folds = stratified_kfold(&y, k, seed).unwrap();
        let mut seen: Vec<usize> = folds.concat();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..y.len()).collect::<Vec<_>>());
        let per: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| bits[i]).count()).collect();
        prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(&folds, &stratified_kfold(&y, k, seed).unwrap());
    }

    #[test]
    fn resampling_keeps_every_positive(bits in prop::collection::vec(any::<bool>(), 2..100), target in 0.05f64..0.95, seed: u64) {
        prop_assume!(bits.iter().any(|&b| b) && bits.iter().any(|&b| !b));
        let keep = resample_indices(&labels(&bits), target, seed).unwrap();
        prop_assert!(keep.windows(2).all(|w| w[0] < w[1]));
        let kept: HashSet<usize> = keep.iter().copied().collect();
        for (i, &b) in bits.iter().enumerate() {
            if b {
                prop_assert!(kept.contains(&i));
            }
        }
    }

    #[test]
    fn shapley_efficiency(g in game(), seed: u64) {
        let n = g.players();
        let full = g.0[(1 << n) - 1] - g.0[0];
        let exact = exact_values(&g).unwrap();
        prop_assert!((exact.iter().sum::<f64>() - full).abs() < 1e-9);
        let sampled = sampled_values(&g, 100, seed).unwrap();
        prop_assert!((sampled.iter().sum::<f64>() - full).abs() < 1e-9);
    }

    #[test]
    fn complexity_is_normalized(phi in prop::collection::vec(-1.0f64..1.0, 2..40)) {
        let c = complexity_of(&phi);
        if c.defined {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&c.entropy));
        }
        let scaled: Vec<f64> = phi.iter().map(|p| -3.0 * p).collect();
        prop_assert!((complexity_of(&scaled).entropy - c.entropy).abs() < 1e-9);
    }

    #[test]
    fn mcnemar_swaps_discordant_counts(rows in prop::collection::vec((0u8..2, 0u8..2, 0u8..2), 1..80)) {
        let a: Vec<u8> = rows.iter().map(|r| r.0).collect();
        let b: Vec<u8> = rows.iter().map(|r| r.1).collect();
        let y: Vec<u8> = rows.iter().map(|r| r.2).collect();
        let ab = mcnemar(&a, &b, &y).unwrap();
        let ba = mcnemar(&b, &a, &y).unwrap();
        prop_assert_eq!((ab.b, ab.c), (ba.c, ba.b));
        prop_assert_eq!(ab.chi2, ba.chi2);
        prop_assert!((0.0..=1.0).contains(&ab.p));
    }
}

#[test]
fn context_selection_invariants() {
    let (corpus, _, post_labels) = generate_corpus(&GenConfig { n_users: 150, seed: 4, ..GenConfig::default() }).unwrap();
    let ds = build_user_dataset(&corpus, &post_labels).unwrap();
    for n in [1, 3, 10, 30] {
        for prioritize_posts in [true, false] {
            let cfg = ContextConfig { max_interactions: n, prioritize_posts, ..ContextConfig::default() };
            for rec in &ds.records {
                let ctx = select_context(&corpus, rec, &cfg).unwrap();
                assert_eq!(ctx.len(), n.min(rec.history.len()));
                let pos: Vec<usize> = ctx.iter().map(|i| rec.history.iter().position(|h| h == i).unwrap()).collect();
                assert!(pos.windows(2).all(|w| w[0] < w[1]), "chronological subset");
                if prioritize_posts {
                    let left_out_post = rec.history.iter().any(|i| !ctx.contains(i) && corpus.get(*i).is_post());
                    let has_reply = ctx.iter().any(|&i| corpus.get(i).kind == Kind::Reply);
                    assert!(!(left_out_post && has_reply), "a reply displaced a post");
                } else {
                    assert_eq!(ctx, rec.history[rec.history.len() - ctx.len()..]);
                }
            }
        }
    }
}

#[test]
fn padding_does_not_change_predictions() {
    let enc = EncoderSpec { vocab_size: 512, layers: 1, heads: 2, dim: 8, max_tokens: 16, trainable: true };
    let cfg = ModelConfig {
        body: enc,
        titletag: EncoderSpec { max_tokens: 48, ..enc },
        lstm_hidden: 4,
        attention_dim: 4,
        fusion_dim: 4,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let (corpus, _, post_labels) = generate_corpus(&GenConfig { n_users: 40, seed: 9, ..GenConfig::default() }).unwrap();
    let ds = build_user_dataset(&corpus, &post_labels).unwrap();
    let model = EarlySibModel::new(cfg).unwrap();
    for rec in ds.records.iter().take(10) {
        let ctx = select_context(&corpus, rec, &ContextConfig { max_interactions: 5, ..ContextConfig::default() }).unwrap();
        let p = model.prepare(&corpus, &ctx).unwrap();
        let tight = model.forward_padded(&p, p.len().max(1)).probability_sib;
        for slots in [p.len() + 1, p.len() + 7, 30] {
            assert!((model.forward_padded(&p, slots).probability_sib - tight).abs() < 1e-12);
        }
    }
}
