//! Property tests for addressing, windowing, normalization, and the
//! backend-equivalence contract on randomized shapes.

use proptest::prelude::*;
use relm_core::arch::{ArchKind, ArchitectureSpec, WeightSet};
use relm_core::dataset::{self, RawSeries, TimeSeriesDataset};
use relm_core::hgen::{self, ExecConfig};
use relm_core::tensor::{uniform_fill, DenseTensor, SeededRng};

proptest! {
    /// Row-major addressing: (i, j, k) lands where a naive nested-loop copy
    /// puts it.
    #[test]
    fn row_major_matches_nested_loops(
        a in 1usize..5, b in 1usize..5, c in 1usize..5, seed in 0u64..500
    ) {
        let mut rng = SeededRng::new(seed);
        let t = uniform_fill(&mut rng, &[a, b, c], -1.0, 1.0).unwrap();
        let mut naive = vec![0.0; a * b * c];
        let mut pos = 0;
        for i in 0..a {
            for j in 0..b {
                for k in 0..c {
                    naive[pos] = t.get3(i, j, k);
                    pos += 1;
                }
            }
        }
        prop_assert_eq!(naive.as_slice(), t.data());
    }

    /// Windowing a shifted series equals dropping leading rows of the
    /// windowed design.
    #[test]
    fn windowing_is_shift_equivariant(
        len in 8usize..40, q in 1usize..5, k in 0usize..4, seed in 0u64..500
    ) {
        prop_assume!(len > q + k + 1);
        let mut rng = SeededRng::new(seed);
        let values: Vec<f64> = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let full = dataset::window(&RawSeries::new("s", values.clone()).unwrap(), q).unwrap();
        let shifted =
            dataset::window(&RawSeries::new("s", values[k..].to_vec()).unwrap(), q).unwrap();
        for i in 0..shifted.n() {
            prop_assert_eq!(shifted.x.row(i), full.x.row(i + k));
            prop_assert_eq!(shifted.y.get1(i), full.y.get1(i + k));
        }
    }

    /// Normalize/denormalize round-trips within 1e-12 and the split is
    /// chronological.
    #[test]
    fn normalization_round_trip(len in 12usize..60, seed in 0u64..500) {
        let mut rng = SeededRng::new(seed);
        let scale = rng.uniform(0.5, 20.0);
        let shift = rng.uniform(-10.0, 10.0);
        let values: Vec<f64> =
            (0..len).map(|_| rng.uniform(-1.0, 1.0) * scale + shift).collect();
        let raw = dataset::window(&RawSeries::new("s", values).unwrap(), 3).unwrap();
        let ds = dataset::normalize_split(&raw, 0.75).unwrap();
        let norm = ds.norm.as_ref().unwrap();
        for i in 0..ds.n() {
            let back = norm.denormalize(0, ds.y.get1(i));
            prop_assert!((back - raw.y.get1(i)).abs() < 1e-12);
            for s in 0..ds.s {
                for t in 0..ds.q {
                    let back = norm.denormalize(s, ds.x.get3(i, s, t));
                    prop_assert!((back - raw.x.get3(i, s, t)).abs() < 1e-12);
                }
            }
        }
        prop_assert!(ds.n_train <= ds.n());
        prop_assert!(ds.train_rows().end <= ds.test_rows().start);
    }

    /// All three backends agree within 1e-9 on randomized shapes and seeds.
    #[test]
    fn backends_agree_on_random_shapes(
        arch_idx in 0usize..6,
        n in 1usize..40,
        m in 1usize..20,
        q in 1usize..12,
        s in 1usize..5,
        bs_32 in proptest::bool::ANY,
        seed in 0u64..1000,
    ) {
        let kind = ArchKind::ALL[arch_idx];
        let spec = match kind {
            ArchKind::Narmax => ArchitectureSpec::narmax(m, q, s, 2, 1).unwrap(),
            k => ArchitectureSpec::new(k, m, q, s).unwrap(),
        };
        let mut rng = SeededRng::new(seed);
        let w = WeightSet::sample(&spec, &mut rng).unwrap();
        let x = uniform_fill(&mut rng, &[n, s, q], -1.0, 1.0).unwrap();
        let y = uniform_fill(&mut rng, &[n], -1.0, 1.0).unwrap();
        let ds = TimeSeriesDataset::from_parts(x, y).unwrap();
        let bs = if bs_32 { 32 } else { 16 };
        let h_seq = hgen::compute_h_sequential(&ds, &spec, &w, 0..n).unwrap();
        let h_basic =
            hgen::compute_h_basic_parallel(&ds, &spec, &w, &ExecConfig::basic(bs), 0..n).unwrap();
        let h_tiled =
            hgen::compute_h_tiled_parallel(&ds, &spec, &w, &ExecConfig::tiled(bs), 0..n).unwrap();
        prop_assert!(h_basic.h.max_abs_diff(&h_seq.h) <= 1e-9);
        prop_assert!(h_tiled.h.max_abs_diff(&h_seq.h) <= 1e-9);
    }

    /// Tensor construction rejects inconsistent shapes.
    #[test]
    fn from_vec_rejects_wrong_length(a in 1usize..6, b in 1usize..6, extra in 1usize..4) {
        let data = vec![0.0; a * b + extra];
        prop_assert!(DenseTensor::from_vec(&[a, b], data).is_err());
    }
}
