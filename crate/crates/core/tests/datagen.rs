use proptest::prelude::*;

use batchol::datagen::{generate_stream, inject_corruption, CorruptionMode, CorruptionSpec, StreamSpec};
use batchol::harness::{read_examples, write_examples};
use batchol::model::Batch;

fn spec(seed: u64) -> StreamSpec {
    StreamSpec {
        dimension: 30,
        days: 5,
        examples_per_day: 400,
        sparsity: 6,
        holiday_days: vec![2],
        seed,
        ..Default::default()
    }
}

fn stream(seed: u64) -> Vec<Batch> {
    generate_stream(&spec(seed)).unwrap().0
}

fn others_untouched(a: &[Batch], b: &[Batch], day: u32) -> bool {
    a.iter().zip(b).all(|(x, y)| x.id == day || x == y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn label_flip_changes_exactly_the_fraction(seed in 0u64..1000, frac in 0.0f64..=1.0, day in 0u32..5) {
        let b = stream(seed);
        let out = inject_corruption(&b, &CorruptionSpec { day, mode: CorruptionMode::LabelFlip { fraction: frac } }, seed).unwrap();
        let d = day as usize;
        let flipped = b[d].examples.iter().zip(&out[d].examples).filter(|(x, y)| x.label != y.label).count();
        prop_assert_eq!(flipped, (frac * 400.0).round() as usize);
        prop_assert!(b[d].examples.iter().zip(&out[d].examples).all(|(x, y)| x.features == y.features));
        prop_assert!(others_untouched(&b, &out, day));
    }

    #[test]
    fn volume_drop_keeps_a_subsequence(seed in 0u64..1000, frac in 0.0f64..=1.0) {
        let b = stream(seed);
        let out = inject_corruption(&b, &CorruptionSpec { day: 1, mode: CorruptionMode::VolumeDrop { fraction: frac } }, 3).unwrap();
        prop_assert_eq!(out[1].len(), 400 - (frac * 400.0).round() as usize);
        let mut it = b[1].examples.iter();
        prop_assert!(out[1].examples.iter().all(|e| it.any(|x| x == e)));
        prop_assert!(others_untouched(&b, &out, 1));
    }

    #[test]
    fn feature_zeroing_only_removes_entries(seed in 0u64..1000, frac in 0.0f64..=1.0) {
        let b = stream(seed);
        let out = inject_corruption(&b, &CorruptionSpec { day: 3, mode: CorruptionMode::FeatureZeroing { fraction: frac } }, 5).unwrap();
        for (x, y) in b[3].examples.iter().zip(&out[3].examples) {
            prop_assert_eq!(x.label, y.label);
            prop_assert!(y.features.iter().all(|(r, v)| x.features.iter().any(|(s, w)| s == r && w == v)));
        }
        prop_assert!(others_untouched(&b, &out, 3));
    }

    #[test]
    fn ctr_spike_only_turns_negatives_positive(seed in 0u64..1000, shift in 0.0f64..4.0) {
        let b = stream(seed);
        let out = inject_corruption(&b, &CorruptionSpec { day: 4, mode: CorruptionMode::CtrSpike { logit_shift: shift } }, 9).unwrap();
        prop_assert!(b[4].examples.iter().zip(&out[4].examples).all(|(x, y)| !x.label || y.label));
        prop_assert!(out[4].ctr() >= b[4].ctr());
    }
}

#[test]
fn corrupting_a_missing_day_is_an_error() {
    let b = stream(1);
    let spec = CorruptionSpec {
        day: 9,
        mode: CorruptionMode::LabelFlip { fraction: 0.4 },
    };
    assert!(inject_corruption(&b, &spec, 1).is_err());
    let bad = CorruptionSpec {
        day: 1,
        mode: CorruptionMode::LabelFlip { fraction: 1.5 },
    };
    assert!(inject_corruption(&b, &bad, 1).is_err());
}

#[test]
fn generated_stream_survives_the_text_format() {
    let b = stream(11);
    let mut buf = Vec::new();
    write_examples(&mut buf, &b).unwrap();
    assert_eq!(read_examples(&buf[..]).unwrap(), b);
}

#[test]
fn stationary_stream_keeps_its_weights() {
    let (_, truth) = generate_stream(&spec(2).stationary()).unwrap();
    assert!(truth.weights.windows(2).all(|w| w[0] == w[1]));
}
