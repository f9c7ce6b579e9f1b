//! Invariants checked on random inputs.

use fedspeech::data::{generate_synthetic, CorpusFile, SiteSpec};
use fedspeech::eval::{confusion_metrics, paired_t_test, roc_auc, stratified_kfold, student_t_sf};
use fedspeech::federation::{aggregate, AggregationScheme, ClientUpdate};
use fedspeech::nn::{Architecture, ParameterSet};
use fedspeech::pool::{pool_statistics, EmbeddingSequence, Label};
use fedspeech::seed::init_rng;
use ndarray::Array2;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Textbook per-column moments, written independently of the library.
fn brute_force_pool(frames: &Array2<f64>) -> Vec<f64> {
    let (t, d) = frames.dim();
    let n = t as f64;
    let mut stats = vec![Vec::new(); 6];
    for j in 0..d {
        let col: Vec<f64> = frames.column(j).to_vec();
        let mean = col.iter().sum::<f64>() / n;
        let central = |p: i32| col.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
        let var = central(2);
        let (skew, kurt) = if var < 1e-12 {
            (0.0, 0.0)
        } else {
            (central(3) / var.powf(1.5), central(4) / (var * var) - 3.0)
        };
        stats[0].push(mean);
        stats[1].push(var.sqrt());
        stats[2].push(skew);
        stats[3].push(kurt);
        stats[4].push(col.iter().copied().fold(f64::INFINITY, f64::min));
        stats[5].push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    stats.concat()
}

fn frames_strategy() -> impl Strategy<Value = Array2<f64>> {
    (2usize..40, 1usize..6).prop_flat_map(|(t, d)| {
        prop::collection::vec(-5.0f64..5.0, t * d)
            .prop_map(move |v| Array2::from_shape_vec((t, d), v).unwrap())
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

fn labelled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    prop::collection::vec((0u8..20, any::<bool>()), 2..60).prop_map(|pairs| {
        // Coarse scores so ties are common.
        let scores = pairs.iter().map(|p| f64::from(p.0) / 20.0).collect();
        let labels = pairs
            .iter()
            .map(|p| if p.1 { Label::Parkinson } else { Label::Healthy })
            .collect();
        (scores, labels)
    })
}

fn pair_count_auc(scores: &[f64], labels: &[Label]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|p| p.1.is_positive()).map(|p| *p.0).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|p| !p.1.is_positive()).map(|p| *p.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

fn random_update(site: &str, seed: u64, count: usize) -> ClientUpdate {
    let arch = Architecture::classifier(3, &[4]).unwrap();
    ClientUpdate {
        site_id: site.into(),
        params: ParameterSet::he_init(&arch, &mut init_rng(seed)),
        sample_count: count,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pooling_matches_brute_force(frames in frames_strategy()) {
        let seq = EmbeddingSequence::new("p", frames.clone()).unwrap();
        let got = pool_statistics(&seq).unwrap();
        prop_assert!(close(&got, &brute_force_pool(&frames), 1e-9));
    }

    #[test]
    fn pooling_ignores_frame_order(frames in frames_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..frames.nrows()).collect();
        order.shuffle(&mut init_rng(seed));
        let shuffled = frames.select(ndarray::Axis(0), &order);
        let a = pool_statistics(&EmbeddingSequence::new("a", frames).unwrap()).unwrap();
        let b = pool_statistics(&EmbeddingSequence::new("b", shuffled).unwrap()).unwrap();
        prop_assert!(close(&a, &b, 1e-9));
    }

    #[test]
    fn pooling_shift_and_scale(frames in frames_strategy(), shift in -3.0f64..3.0, scale in 0.5f64..4.0) {
        let d = frames.ncols();
        let base = pool_statistics(&EmbeddingSequence::new("a", frames.clone()).unwrap()).unwrap();
        let moved = frames.mapv(|x| scale * x + shift);
        let after = pool_statistics(&EmbeddingSequence::new("b", moved).unwrap()).unwrap();
        for j in 0..d {
            prop_assert!((after[j] - (scale * base[j] + shift)).abs() < 1e-9);
            prop_assert!((after[d + j] - scale * base[d + j]).abs() < 1e-9);
            // Shape statistics are affine-invariant (unless the column is
            // numerically constant).
            if base[d + j] > 1e-3 {
                prop_assert!((after[2 * d + j] - base[2 * d + j]).abs() < 1e-7);
                prop_assert!((after[3 * d + j] - base[3 * d + j]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn auc_trapezoid_and_pair_count_agree((scores, labels) in labelled_scores()) {
        let roc = roc_auc(&scores, &labels).unwrap();
        match (roc, pair_count_auc(&scores, &labels)) {
            (Some(r), Some(want)) => {
                prop_assert!((r.auc - want).abs() < 1e-12);
                prop_assert!((r.trapezoid_area() - want).abs() < 1e-12);
            }
            (None, None) => {}
            (r, w) => prop_assert!(false, "{r:?} vs {w:?}"),
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform((scores, labels) in labelled_scores()) {
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&transformed, &labels).unwrap();
        match (a, b) {
            (Some(a), Some(b)) => {
                prop_assert_eq!(a.auc, b.auc);
                let pa: Vec<(f64, f64)> = a.points.iter().map(|p| (p.fpr, p.tpr)).collect();
                let pb: Vec<(f64, f64)> = b.points.iter().map(|p| (p.fpr, p.tpr)).collect();
                prop_assert_eq!(pa, pb);
            }
            (None, None) => {}
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn t_test_is_antisymmetric(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..50)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.t_statistic, -ba.t_statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn t_tail_monotone_in_t(df in 1u32..80, t1 in 0.0f64..8.0, dt in 0.01f64..3.0) {
        let df = f64::from(df);
        prop_assert!(student_t_sf(t1 + dt, df) <= student_t_sf(t1, df));
        prop_assert_eq!(student_t_sf(-t1, df), student_t_sf(t1, df));
    }

    #[test]
    fn t_tail_matches_reference_cdf(df in 1u32..200, t in -12.0f64..12.0) {
        let dist = StudentsT::new(0.0, 1.0, f64::from(df)).unwrap();
        let want = 2.0 * dist.sf(t.abs());
        prop_assert!((student_t_sf(t, f64::from(df)) - want).abs() < 1e-10);
    }

    #[test]
    fn accuracy_is_prevalence_weighted((scores, labels) in labelled_scores(), threshold in 0.0f64..1.0) {
        let c = confusion_metrics(&scores, &labels, threshold).unwrap();
        if let (Some(se), Some(sp)) = (c.sensitivity, c.specificity) {
            let n = labels.len() as f64;
            let pos = labels.iter().filter(|l| l.is_positive()).count() as f64;
            let mixed = pos / n * se + (n - pos) / n * sp;
            prop_assert!((c.accuracy - mixed).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregation_ignores_arrival_order(counts in prop::collection::vec(1usize..500, 1..6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let updates: Vec<ClientUpdate> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| random_update(&format!("site-{i}"), seed.wrapping_add(i as u64), c))
            .collect();
        let mut shuffled = updates.clone();
        shuffled.shuffle(&mut init_rng(seed));
        for scheme in [AggregationScheme::WeightedBySamples, AggregationScheme::Uniform] {
            prop_assert_eq!(aggregate(&updates, scheme).unwrap(), aggregate(&shuffled, scheme).unwrap());
        }
    }

    #[test]
    fn aggregating_identical_updates_is_identity(k in 1usize..6, seed in any::<u64>()) {
        let updates: Vec<ClientUpdate> = (0..k)
            .map(|i| ClientUpdate { site_id: format!("s{i}"), ..random_update("x", seed, 10 + i) })
            .collect();
        let out = aggregate(&updates, AggregationScheme::WeightedBySamples).unwrap();
        prop_assert_eq!(out, updates[0].params.clone());
    }

    #[test]
    fn folds_partition_and_stratify(pd in 1usize..60, hc in 1usize..60, k in 1usize..12, seed in any::<u64>()) {
        let mut labels = vec![Label::Parkinson; pd];
        labels.extend(vec![Label::Healthy; hc]);
        let result = stratified_kfold(&labels, k, seed);
        if pd < k || hc < k {
            prop_assert!(result.is_err());
        } else {
            let folds = result.unwrap();
            prop_assert_eq!(folds.len(), pd + hc);
            for class in [Label::Parkinson, Label::Healthy] {
                let mut sizes = vec![0usize; k];
                for (l, &f) in labels.iter().zip(&folds) {
                    prop_assert!(f < k);
                    if *l == class {
                        sizes[f] += 1;
                    }
                }
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_corpora_round_trip(seed in any::<u64>(), n_pd in 0usize..4, n_hc in 1usize..4, dim in 1usize..6) {
        let spec = SiteSpec {
            site_id: "rt".into(),
            n_pd,
            n_hc,
            embedding_dim: dim,
            frames_range: (2, 9),
            class_separation: 1.0,
            site_shift: 0.5,
            noise_scale: 1.0,
            seed,
            signal_seed: seed ^ 1,
        };
        let corpus = CorpusFile::new(dim, generate_synthetic(&spec).unwrap()).unwrap();
        let bytes = corpus.encode().unwrap();
        prop_assert_eq!(CorpusFile::decode(&bytes).unwrap(), corpus);
    }
}
