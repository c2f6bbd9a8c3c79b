//! Property tests for invariants that must hold for arbitrary inputs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use fontpair::evaluator::{build_report, Prediction};
use fontpair::explain::{grad_cam_from_grads, overlap_score, upsample, Upsampling};
use fontpair::netmodel::{image_to_input, ModelCheckpoint, ModelConfig, Network, Provenance};
use fontpair::pairgen::{count_pairs, make_folds, split_fonts, PairRecord};
use fontpair::trainer::mean_std;
use fontpair::LETTERS;
use proptest::prelude::*;

fn arb_pair() -> impl Strategy<Value = (PairRecord, f64)> {
    (0usize..26, 1usize..26, 0usize..6, 0usize..6, 0.0f64..=1.0).prop_map(|(a, offset, fa, fb, p)| {
        let b = (a + offset) % 26;
        let label = u8::from(fa == fb);
        let record = PairRecord {
            char_a: LETTERS[a],
            char_b: LETTERS[b],
            font_a: format!("font{fa}"),
            font_b: format!("font{fb}"),
            image_a_path: PathBuf::from(format!("font{fa}/{}.png", LETTERS[a])),
            image_b_path: PathBuf::from(format!("font{fb}/{}.png", LETTERS[b])),
            label,
        };
        (record, p)
    })
}

fn font_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i:03}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn report_is_consistent_and_order_free(
        items in prop::collection::vec(arb_pair(), 1..120),
        rotate in 0usize..120,
    ) {
        let (pairs, probs): (Vec<PairRecord>, Vec<f64>) = items.iter().cloned().unzip();
        let preds: Vec<Prediction> = probs.iter().map(|&p| Prediction::from_p_same(p)).collect();
        let report = build_report(&pairs, &preds).unwrap();

        let n = pairs.len() as u64;
        prop_assert_eq!(report.confusion.total(), n);
        let positives = pairs.iter().filter(|p| p.is_positive()).count() as u64;
        prop_assert_eq!(report.confusion.row_sums(), [positives, n - positives]);
        prop_assert!((report.accuracy - report.confusion.correct() as f64 / n as f64).abs() < 1e-15);

        let mut total_sum = 0;
        for a in 0..26 {
            prop_assert_eq!(report.charpair_totals[a][a], 0);
            for b in 0..26 {
                prop_assert_eq!(report.charpair_totals[a][b], report.charpair_totals[b][a]);
                prop_assert_eq!(report.charpair_errors[a][b], report.charpair_errors[b][a]);
                prop_assert!(report.charpair_errors[a][b] <= report.charpair_totals[a][b]);
                prop_assert_eq!(
                    report.charpair_totals[a][b],
                    report.positive.totals[a][b] + report.negative.totals[a][b]
                );
                prop_assert_eq!(
                    report.charpair_errors[a][b],
                    report.positive.errors[a][b] + report.negative.errors[a][b]
                );
                total_sum += report.charpair_totals[a][b];
            }
        }
        prop_assert_eq!(total_sum, 2 * n);
        prop_assert!(report.ranked_pairs.windows(2).all(|w| w[0].accuracy <= w[1].accuracy));
        let false_negatives = report.confusion.get(1, 0);
        prop_assert_eq!(report.per_font_errors.values().sum::<u64>(), false_negatives);

        let k = rotate % pairs.len();
        let mut pairs2 = pairs.clone();
        let mut preds2 = preds.clone();
        pairs2.rotate_left(k);
        preds2.rotate_left(k);
        pairs2.reverse();
        preds2.reverse();
        prop_assert_eq!(build_report(&pairs2, &preds2).unwrap(), report);
    }

    #[test]
    fn splits_partition_fonts(n in 3usize..80, seed in any::<u64>(), a in 0usize..40, b in 0usize..40) {
        let fonts = font_names(n);
        let train = a.min(n);
        let val = b.min(n - train);
        let test = n - train - val;
        let m = split_fonts(&fonts, (train, val, test), seed).unwrap();
        prop_assert_eq!((m.train_fonts.len(), m.val_fonts.len(), m.test_fonts.len()), (train, val, test));
        let all: BTreeSet<&String> = m.train_fonts.iter().chain(&m.val_fonts).chain(&m.test_fonts).collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(split_fonts(&fonts, (train, val, test), seed).unwrap(), m);
        prop_assert!(split_fonts(&fonts, (train, val, test + 1), seed).is_err());
    }

    #[test]
    fn folds_partition_fonts(n in 2usize..80, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let m = make_folds(&font_names(n), k, seed).unwrap();
        let folds = m.folds.unwrap();
        prop_assert_eq!(folds.len(), k);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let all: BTreeSet<&String> = folds.iter().flatten().collect();
        prop_assert_eq!(all.len(), n);
    }

    #[test]
    fn pair_count_formula(fonts in 0u64..100_000, chars in 2u64..100) {
        let (total, per) = count_pairs(fonts, chars).unwrap();
        prop_assert_eq!(per, (0..chars).sum::<u64>());
        prop_assert_eq!(total, fonts * per);
    }

    #[test]
    fn grad_cam_is_nonnegative_and_scales(
        c in 1usize..5, h in 1usize..6, w in 1usize..6,
        raw in prop::collection::vec(-3.0f64..3.0, 2 * 5 * 6 * 6),
        scale in 0.1f64..10.0,
    ) {
        let len = c * h * w;
        let acts: Vec<f64> = raw[..len].iter().map(|v| v.abs()).collect();
        let grads = raw[len..2 * len].to_vec();
        let (alphas, map) = grad_cam_from_grads(&acts, &grads, (c, h, w)).unwrap();
        prop_assert_eq!(alphas.len(), c);
        prop_assert!(map.iter().all(|&v| v >= 0.0));

        let scaled: Vec<f64> = acts.iter().map(|v| v * scale).collect();
        let (_, map2) = grad_cam_from_grads(&scaled, &grads, (c, h, w)).unwrap();
        for (x, y) in map.iter().zip(&map2) {
            prop_assert!((x * scale - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
        let grads_scaled: Vec<f64> = grads.iter().map(|v| v * scale).collect();
        let (alphas3, map3) = grad_cam_from_grads(&acts, &grads_scaled, (c, h, w)).unwrap();
        for (x, y) in alphas.iter().zip(&alphas3) {
            prop_assert!((x * scale - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
        for (x, y) in map.iter().zip(&map3) {
            prop_assert!((x * scale - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn upsampling_stays_within_input_range(
        h in 1usize..6, w in 1usize..6, size in 1usize..40,
        values in prop::collection::vec(0.0f64..5.0, 36),
    ) {
        let map = &values[..h * w];
        let lo = map.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bilinear = upsample(map, h, w, size, Upsampling::Bilinear);
        prop_assert_eq!(bilinear.len(), size * size);
        prop_assert!(bilinear.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        let nearest = upsample(map, h, w, size, Upsampling::Nearest);
        prop_assert!(nearest.iter().all(|v| map.contains(v)));
    }

    #[test]
    fn overlap_is_bounded_and_symmetric(
        a in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..20),
        b in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..20),
    ) {
        let a: Vec<[f64; 2]> = a.into_iter().map(|(x, y)| [x, y]).collect();
        let b: Vec<[f64; 2]> = b.into_iter().map(|(x, y)| [x, y]).collect();
        let s = overlap_score(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, overlap_score(&b, &a).unwrap());
    }

    #[test]
    fn mean_std_matches_definition(values in prop::collection::vec(-100.0f64..100.0, 2..30)) {
        let (mean, std) = mean_std(&values);
        let n = values.len() as f64;
        prop_assert!((mean * n - values.iter().sum::<f64>()).abs() < 1e-9);
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        prop_assert!((std * std * (n - 1.0) - ss).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn softmax_is_a_distribution_and_checkpoints_round_trip(
        seed in any::<u64>(),
        a in prop::collection::vec(any::<bool>(), 64),
        b in prop::collection::vec(any::<bool>(), 64),
    ) {
        let config = ModelConfig::reduced();
        let net = Network::<f32>::init(config, seed).unwrap();
        let to_img = |bits: &[bool]| image_to_input::<f32>(&bits.iter().map(|&x| if x { 255 } else { 0 }).collect::<Vec<u8>>());
        let (ia, ib) = (to_img(&a), to_img(&b));
        let out = net.forward(&ia, &ib, false, 0).unwrap();
        let probs = [f64::from(out[0]), f64::from(out[1])];
        prop_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((probs[0] + probs[1] - 1.0).abs() < 1e-6);

        let ckpt = ModelCheckpoint::from_network(&net, 0, seed, Provenance::default());
        let back = ModelCheckpoint::from_bytes(&ckpt.to_bytes()).unwrap().network().unwrap();
        let out2 = back.forward(&ia, &ib, false, 0).unwrap();
        prop_assert_eq!(out, out2);
    }
}
