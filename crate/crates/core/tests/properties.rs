use std::sync::Arc;

use gwp_core::averages::{AverageEngine, AverageMode};
use gwp_core::harness::checks::random_canonical_state;
use gwp_core::harness::{read_csv, write_csv, CsvRecord};
use gwp_core::integrators::{boris_rotate, mrk4_step};
use gwp_core::observables::{l2_distance, l2_distance_exact, Diagnostics};
use gwp_core::{CanonicalState, Dynamics, TrigField2D};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(seed: u64, eps: f64) -> CanonicalState {
    random_canonical_state(&mut ChaCha8Rng::seed_from_u64(seed), eps).unwrap()
}

fn trig_dynamics(alpha: f64) -> Dynamics {
    Dynamics::new(Arc::new(TrigField2D::new(alpha)), AverageEngine::new(AverageMode::Analytic, 12))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn l2_distance_is_symmetric(a in any::<u64>(), b in any::<u64>()) {
        let (sa, sb) = (state(a, 0.1), state(b, 0.1));
        let ab = l2_distance(&sa, &sb, 20).unwrap();
        let ba = l2_distance(&sb, &sa, 20).unwrap();
        prop_assert!((ab.value - ba.value).abs() <= 1e-12 * (1.0 + ab.value));
    }

    #[test]
    fn l2_distance_satisfies_the_triangle_inequality(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (sa, sb, sc) = (state(a, 0.1), state(b, 0.1), state(c, 0.1));
        let d = |x: &CanonicalState, y: &CanonicalState| l2_distance_exact(x, y).unwrap();
        prop_assert!(d(&sa, &sc) <= d(&sa, &sb) + d(&sb, &sc) + 1e-12);
        prop_assert!(d(&sa, &sa) <= 1e-6);
    }

    #[test]
    fn boris_rotation_keeps_speed_and_solves_the_implicit_relation(
        v in prop::array::uniform3(-5.0..5.0f64),
        b in prop::array::uniform3(-20.0..20.0f64),
        tau in 1e-4..0.5f64,
    ) {
        let vm = DVector::from_row_slice(&v);
        let bv = Vector3::from(b);
        let vp = boris_rotate(&vm, &bv, tau);
        let scale = 1.0 + vm.norm();
        prop_assert!((vp.norm() - vm.norm()).abs() <= 1e-13 * scale);
        let s = (&vp + &vm) * (0.5 * tau);
        let cross = Vector3::new(s[1] * bv[2] - s[2] * bv[1], s[2] * bv[0] - s[0] * bv[2], s[0] * bv[1] - s[1] * bv[0]);
        let residual = (&vp - &vm - DVector::from_column_slice(cross.as_slice())).norm();
        prop_assert!(residual <= 1e-12 * scale * (1.0 + tau * bv.norm()));
    }

    #[test]
    fn mrk4_preserves_the_norm(seed in any::<u64>(), tau in 0.005..0.05f64) {
        let dy = trig_dynamics(1.0);
        let mut s = dy.to_magnetic(&state(seed, 0.05)).unwrap();
        let n0 = dy.packet_norm(&s).unwrap();
        for _ in 0..10 {
            s = mrk4_step(&dy, &s, tau).unwrap();
        }
        prop_assert!((dy.packet_norm(&s).unwrap() - n0).abs() <= 1e-12);
    }

    #[test]
    fn momentum_conversion_round_trips(seed in any::<u64>()) {
        let dy = trig_dynamics(1.0);
        let c = state(seed, 0.05);
        let back = dy.to_canonical(&dy.to_magnetic(&c).unwrap()).unwrap();
        prop_assert!((&back.p - &c.p).norm() <= 1e-14 * (1.0 + c.p.norm()));
        prop_assert!((&back.p_mat - &c.p_mat).norm() <= 1e-14 * (1.0 + c.p_mat.norm()));
    }
}

#[test]
fn trajectory_csv_round_trips_bit_exactly() {
    let dy = trig_dynamics(1.0);
    let mut s = dy.to_magnetic(&state(7, 0.01)).unwrap();
    let e0 = dy.energy(&s).unwrap();
    let mut records = Vec::new();
    for _ in 0..5 {
        records.push(CsvRecord { diag: Diagnostics::of_state(&dy, &s, e0).unwrap(), state: s.clone() });
        s = mrk4_step(&dy, &s, 0.01).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    write_csv(std::fs::File::create(&path).unwrap(), 2, &records).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in back.iter().zip(&records) {
        assert_eq!(a.state.q, b.state.q);
        assert_eq!(a.state.upsilon, b.state.upsilon);
        assert_eq!(a.state.zeta_i.to_bits(), b.state.zeta_i.to_bits());
        assert_eq!(a.diag.energy.to_bits(), b.diag.energy.to_bits());
    }
}
