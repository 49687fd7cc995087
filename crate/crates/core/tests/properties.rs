//! Property tests over randomized inputs.

use proptest::prelude::*;

use limeaudit::dataset::{format_svmlight, parse_svmlight, Dataset};
use limeaudit::mmd::mmd_biased;
use limeaudit::numkit::{cosine_kernel, KernelSpec, SparseVector};

fn sparse_vector(dim: usize) -> impl Strategy<Value = SparseVector> {
    prop::collection::vec(any::<bool>(), dim).prop_flat_map(move |mask| {
        let support: Vec<u32> = mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i as u32)
            .collect();
        let len = support.len();
        prop::collection::vec(-100.0f64..100.0, len).prop_map(move |values| {
            SparseVector::new(dim, support.clone(), values).unwrap()
        })
    })
}

fn tf_dataset() -> impl Strategy<Value = Dataset> {
    let dim = 30usize;
    prop::collection::vec(
        (
            prop::collection::btree_set(0u32..dim as u32, 1..10),
            0i32..2,
        ),
        1..12,
    )
    .prop_map(move |rows| {
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for (support, label) in rows {
            let indices: Vec<u32> = support.into_iter().collect();
            let values: Vec<f64> = indices.iter().map(|&i| 1.0 + (i % 5) as f64).collect();
            instances.push(SparseVector::new(dim, indices, values).unwrap());
            labels.push(label);
        }
        Dataset {
            instances,
            labels,
            dim,
        }
    })
}

proptest! {
    #[test]
    fn svmlight_parse_serialize_parse_is_identity(ds in tf_dataset()) {
        let text = format_svmlight(&ds);
        let parsed = parse_svmlight(&text).unwrap();
        prop_assert_eq!(&parsed, &ds);
        prop_assert_eq!(format_svmlight(&parsed), text);
    }

    #[test]
    fn json_round_trip_is_identity(sv in sparse_vector(16)) {
        let json = serde_json::to_string(&sv).unwrap();
        let back: SparseVector = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, sv);
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(u in sparse_vector(12), v in sparse_vector(12)) {
        let uv = cosine_kernel(&u, &v).unwrap();
        let vu = cosine_kernel(&v, &u).unwrap();
        prop_assert_eq!(uv.to_bits(), vu.to_bits());
        prop_assert!(uv.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn mmd_matches_triple_loop(
        xs in prop::collection::vec(sparse_vector(6), 1..20),
        extra in prop::collection::vec(sparse_vector(6), 1..20),
    ) {
        let m = xs.len().min(extra.len());
        let (xs, ys) = (&xs[..m], &extra[..m]);
        for kernel in [KernelSpec::cosine(), KernelSpec::rbf(0.3).unwrap()] {
            let fast = mmd_biased(xs, ys, &kernel).unwrap();
            // naive triple loop over pairwise kernel evaluations
            let mf = m as f64;
            let mut sums = [0.0f64; 3];
            for (slot, (left, right)) in [(xs, xs), (ys, ys), (xs, ys)].into_iter().enumerate() {
                for a in left {
                    for b in right {
                        sums[slot] += kernel.eval(a, b).unwrap();
                    }
                }
            }
            let naive = ((sums[0] + sums[1] - 2.0 * sums[2]) / (mf * mf)).max(0.0).sqrt();
            prop_assert!((fast - naive).abs() < 1e-10, "{} vs {}", fast, naive);
            prop_assert!(fast <= 2.0 + 1e-9);
            let sym = mmd_biased(ys, xs, &kernel).unwrap();
            prop_assert!((fast - sym).abs() < 1e-12);
        }
    }
}
