mod support;

use gstds_core::data::{partition_batches, partition_indices, split, FeatureSet, SplitSpec};
use gstds_core::Error;
use proptest::prelude::*;

fn toy(n: usize, classes: u32) -> FeatureSet {
    let rows: Vec<f32> = (0..n * 2).map(|i| 1.0 + i as f32).collect();
    let labels = (0..n as u32).map(|i| i % classes).collect();
    FeatureSet::new((0..n as u64).collect(), rows, 2, labels, None, classes).unwrap()
}

#[test]
fn rejects_bad_rows() {
    let nan = FeatureSet::new((0..9).collect(), {
        let mut v = vec![1.0f32; 18];
        v[14] = f32::NAN;
        v
    }, 2, vec![0; 9], None, 1);
    assert!(matches!(nan, Err(Error::NonFinite { row: 7, .. })));
    let zero = FeatureSet::new(vec![0, 1], vec![1.0, 1.0, 0.0, 0.0], 2, vec![0, 0], None, 1);
    assert!(matches!(zero, Err(Error::ZeroRow { row: 1 })));
    let dup = FeatureSet::new(vec![4, 4], vec![1.0; 4], 2, vec![0, 0], None, 1);
    assert!(matches!(dup, Err(Error::DuplicateId { row: 1, id: 4 })));
    let label = FeatureSet::new(vec![0, 1], vec![1.0; 4], 2, vec![0, 3], None, 2);
    assert!(matches!(label, Err(Error::LabelOutOfRange { row: 1, .. })));
}

#[test]
fn split_examples() {
    let spec = SplitSpec { train_fraction: 0.8, val_fraction: 0.1, test_fraction: 0.1, seed: 0 };
    let (a, b, c) = split(&toy(10, 1), &spec).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
    let (a2, b2, c2) = split(&toy(10, 1), &spec).unwrap();
    assert_eq!((a.ids(), b.ids(), c.ids()), (a2.ids(), b2.ids(), c2.ids()));
    let spec = SplitSpec { train_fraction: 0.4, val_fraction: 0.3, test_fraction: 0.3, seed: 0 };
    assert!(split(&toy(2, 1), &spec).is_err());
}

#[test]
fn batch_examples() {
    let plan = partition_indices(130, 64, 0).unwrap();
    assert_eq!(plan.batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![64, 64, 2]);
    let plan = partition_batches(&toy(64, 2), 64, 0).unwrap();
    let mut only = plan.batches[0].clone();
    only.sort_unstable();
    assert_eq!(only, (0..64).collect::<Vec<_>>());
    assert_ne!(partition_indices(100, 10, 1).unwrap().batches, partition_indices(100, 10, 2).unwrap().batches);
    assert!(partition_indices(10, 0, 0).is_err());
    assert!(partition_indices(10, 11, 0).is_err());
}

proptest! {
    #[test]
    fn batches_cover_exactly_once(n in 1usize..700, bs_seed in any::<u64>(), seed in any::<u64>()) {
        let bs = 1 + (bs_seed as usize % n);
        let plan = partition_indices(n, bs, seed).unwrap();
        prop_assert_eq!(plan.len(), n.div_ceil(bs));
        let (last, full) = plan.batches.split_last().unwrap();
        prop_assert!(full.iter().all(|b| b.len() == bs));
        prop_assert!(!last.is_empty() && last.len() <= bs);
        let mut all: Vec<usize> = plan.batches.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_stratified_partition(
        per_class in prop::collection::vec(3usize..40, 2..6),
        train in 0.3f64..0.8,
        seed in any::<u64>(),
    ) {
        let val = (1.0 - train) / 2.0;
        let mut labels = Vec::new();
        for (c, &k) in per_class.iter().enumerate() {
            labels.extend(std::iter::repeat_n(c as u32, k));
        }
        let n = labels.len();
        let rows: Vec<f32> = (0..n * 2).map(|i| 1.0 + i as f32).collect();
        let ids: Vec<u64> = (0..n as u64).map(|i| 1000 + 7 * i).collect();
        let fs = FeatureSet::new(ids.clone(), rows, 2, labels, None, per_class.len() as u32).unwrap();
        let spec = SplitSpec { train_fraction: train, val_fraction: val, test_fraction: 1.0 - train - val, seed };
        let Ok((a, b, c)) = split(&fs, &spec) else { return Ok(()) };
        let mut all: Vec<u64> = [a.ids(), b.ids(), c.ids()].concat();
        all.sort_unstable();
        prop_assert_eq!(all, ids);
        for (part, frac) in [(&a, train), (&b, val), (&c, 1.0 - train - val)] {
            for (class, &k) in per_class.iter().enumerate() {
                let got = part.class_counts().get(class).copied().unwrap_or(0) as f64;
                prop_assert!((got - frac * k as f64).abs() <= 1.0 + 1e-9, "class {} got {} of {}", class, got, k);
            }
        }
    }
}
