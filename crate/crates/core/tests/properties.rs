//! Property tests over the pure kernels.

use proptest::prelude::*;

use resp_scalogram::dataset::{balanced_batches, split_by_patient, ImageRef, LabelScheme};
use resp_scalogram::ingest::parse_recording_filename;
use resp_scalogram::metrics::{confusion, report};
use resp_scalogram::preprocess::{normalize, Signal};
use resp_scalogram::render::to_db;

fn token() -> impl Strategy<Value = String> {
    "[A-Za-z0-9]{1,8}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filename_round_trip(
        patient in 1u32..100_000,
        rec in token(),
        loc in token(),
        mode in token(),
        equip in token(),
    ) {
        let name = format!("{patient}_{rec}_{loc}_{mode}_{equip}.wav");
        let meta = parse_recording_filename(&name).unwrap();
        prop_assert_eq!(meta.filename(), name.clone());
        let again = parse_recording_filename(&meta.filename()).unwrap();
        prop_assert_eq!(again, meta);
    }

    #[test]
    fn normalize_is_idempotent_and_bounded(
        samples in prop::collection::vec(-1000.0f64..1000.0, 1..256),
        fs in 1.0f64..96000.0,
    ) {
        let sig = Signal::new(samples, fs).unwrap();
        let once = normalize(&sig);
        let peak = once.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        prop_assert!(peak <= 1.0);
        let twice = normalize(&once);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn report_matches_raw_recount(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..128),
        healthy in 0usize..4,
    ) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let names: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let rep = report(&confusion(&truth, &pred, 4, &names).unwrap(), healthy).unwrap();

        let correct = pairs.iter().filter(|(t, p)| t == p).count() as f64;
        prop_assert!((rep.accuracy - correct / pairs.len() as f64).abs() < 1e-12);
        prop_assert!((rep.accuracy - rep.weighted_accuracy).abs() < 1e-12);
        prop_assert!((rep.icbhi_score - (rep.sensitivity + rep.specificity) / 2.0).abs() < 1e-12);
        for c in &rep.per_class {
            prop_assert!((0.0..=1.0).contains(&c.precision));
            prop_assert!((0.0..=1.0).contains(&c.recall));
            prop_assert!((0.0..=1.0).contains(&c.f1));
        }
    }

    #[test]
    fn db_normalization_stays_in_unit_range(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1e12, 1..24), 1..24),
        floor in -120.0f64..-1.0,
    ) {
        let cols = rows[0].len();
        let rect: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { r.resize(cols, 0.0); r }).collect();
        let norm = to_db(&rect, floor);
        let mut saw_one = false;
        for row in &norm {
            for &v in row {
                prop_assert!((0.0..=1.0).contains(&v), "value {v}");
                if v == 1.0 {
                    saw_one = true;
                }
            }
        }
        let peak = rect.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
        prop_assert!(saw_one || peak == 0.0);
    }

    #[test]
    fn split_never_leaks_patients(
        counts in prop::collection::vec((1u32..40, 1usize..12), 2..30),
        seed in 0u64..1000,
    ) {
        let mut images = Vec::new();
        for (i, (patient, n)) in counts.iter().enumerate() {
            let label = LabelScheme::Chronic3.class_names()[i % 3];
            for k in 0..*n {
                images.push(ImageRef {
                    path: format!("{patient}_{k}.png"),
                    patient: *patient,
                    label: label.to_string(),
                });
            }
        }
        let out = split_by_patient(&images, LabelScheme::Chronic3, 0.8, seed).unwrap();
        let train: std::collections::BTreeSet<u32> = out.manifest.train.iter().map(|i| i.patient).collect();
        let val: std::collections::BTreeSet<u32> = out.manifest.val.iter().map(|i| i.patient).collect();
        prop_assert!(train.is_disjoint(&val));
        prop_assert_eq!(out.manifest.train.len() + out.manifest.val.len(), images.len());
    }

    #[test]
    fn balanced_batches_always_balanced(
        sizes in prop::collection::vec(1usize..30, 3..4),
        seed in 0u64..500,
        epoch in 0u64..4,
    ) {
        let mut labels = Vec::new();
        for (c, n) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat(c).take(*n));
        }
        let batches = balanced_batches(&labels, sizes.len(), 2 * sizes.len(), seed, epoch).unwrap();
        for batch in &batches {
            let mut seen = vec![0usize; sizes.len()];
            for &i in batch {
                seen[labels[i]] += 1;
            }
            prop_assert!(seen.iter().all(|&s| s == 2));
        }
    }
}
