use pcsbp::config::GeometryName;
use pcsbp::export::{read_matrix_market, write_matrix_market};
use pcsbp::studies::{rates, AccuracyRow};
use pcsbp_core::sparse::Csr;
use proptest::prelude::*;

fn sample(p: usize, resolution: usize, seed: u64, h: f64, error: f64) -> AccuracyRow {
    AccuracyRow {
        geometry: GeometryName::Box,
        seed,
        p,
        resolution,
        n: resolution * resolution,
        h,
        status: "feasible".into(),
        value: 0.0,
        error,
        note: String::new(),
    }
}

proptest! {
    #[test]
    fn matrix_market_round_trip_is_exact(
        n in 1usize..12,
        entries in prop::collection::vec((0usize..12, 0usize..12, -1e6f64..1e6), 0..60),
    ) {
        let trips: Vec<_> = entries.into_iter().map(|(i, j, v)| (i % n, j % n, v)).collect();
        let a = Csr::from_triplets(n, n, &trips);
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &a, "test\nmatrix").unwrap();
        let b = read_matrix_market(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rates_recover_power_laws(
        order in 0.5f64..8.0,
        scale in 1e-6f64..1e3,
        jitter in prop::collection::vec(0.7f64..1.4, 9),
    ) {
        // each sample follows the law exactly, so the geometric means do too
        let mut rows = Vec::new();
        for (k, res) in [10usize, 20, 40].into_iter().enumerate() {
            for seed in 0..3 {
                let h = jitter[3 * k + seed as usize] / res as f64;
                let e = scale * h.powf(order);
                rows.push(sample(2, res, seed, h, e));
            }
        }
        for r in rates(&rows) {
            prop_assert!((r.slope - order).abs() < 1e-9 * order.max(1.0));
        }
    }

    #[test]
    fn rates_skip_failed_samples(order in 1.0f64..4.0) {
        let mut rows = Vec::new();
        for res in [10usize, 20] {
            let h = 1.0 / res as f64;
            rows.push(sample(1, res, 0, h, h.powf(order)));
            rows.push(sample(1, res, 1, h, f64::NAN));
        }
        let r = rates(&rows);
        prop_assert_eq!(r.len(), 1);
        prop_assert_eq!(r[0].samples_coarse, 1);
        prop_assert!((r[0].slope - order).abs() < 1e-9);
    }
}
