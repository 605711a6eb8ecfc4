use std::sync::OnceLock;

use nalgebra::DVector;
use proptest::prelude::*;

use pnavier::analysis::{check_gady, monotone_pairing};
use pnavier::basis::build_stream_basis;
use pnavier::field::Discretization;
use pnavier::galerkin::{assemble, Model};
use pnavier::helmholtz::{leray_project_with, GridField};
use pnavier::par::Execution;
use pnavier::quadrature::QuadratureRule;

fn disc() -> &'static Discretization {
    static DISC: OnceLock<Discretization> = OnceLock::new();
    DISC.get_or_init(|| Discretization::new(build_stream_basis(3, true).unwrap(), QuadratureRule::new(24).unwrap()))
}

fn close(a: &DVector<f64>, b: &DVector<f64>, rel: f64) -> bool {
    (a - b).norm() <= rel * b.norm().max(1e-300)
}

fn sym() -> impl Strategy<Value = [[f64; 2]; 2]> {
    (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0).prop_map(|(a, b, c)| [[a, b], [b, c]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn assembly_is_homogeneous_and_symmetric(
        coeffs in prop::collection::vec(-1.0f64..1.0, 9),
        lambda in 0.1f64..10.0,
        p in prop::sample::select(vec![2.0, 2.5, 3.0, 4.0]),
    ) {
        prop_assume!(coeffs.iter().any(|c| c.abs() > 1e-3));
        let x = DVector::from_vec(coeffs);
        let m = Model::new(p, 0.4).unwrap();
        let s1 = assemble(disc(), &x, &m, Execution::Sequential).unwrap();
        let s2 = assemble(disc(), &(lambda * &x), &m, Execution::Sequential).unwrap();
        let a1 = &s1.a_matrix * lambda.powf(p - 2.0);
        prop_assert!((&s2.a_matrix - &a1).norm() <= 1e-11 * a1.norm());
        prop_assert!((&s2.a_matrix - s2.a_matrix.transpose()).norm() <= 1e-13 * s2.a_matrix.norm());
        prop_assert!(close(&s2.f_viscous, &(lambda.powf(p - 1.0) * &s1.f_viscous), 1e-11));
        prop_assert!(close(&s2.f_transport, &(lambda.powf(p) * &s1.f_transport), 1e-11));
    }

    #[test]
    fn stress_is_monotone(a in sym(), b in sym(), p in 2.0f64..6.0) {
        let scale = (a.iter().flatten().chain(b.iter().flatten()).fold(0.0f64, |m, v| m.max(v.abs()))).powf(p);
        prop_assert!(monotone_pairing(p, &a, &b) >= -1e-12 * scale.max(1.0));
    }

    #[test]
    fn leray_projection_properties(
        amps in prop::collection::vec(-2.0f64..2.0, 4),
        freqs in prop::collection::vec(1.0f64..4.0, 4),
    ) {
        let w = GridField::from_fn(16, |x, y| [
            amps[0] * (freqs[0] * x).sin() + amps[1] * y * (freqs[1] * x).cos(),
            amps[2] * (freqs[2] * y).cos() + amps[3] * x * y,
        ]).unwrap();
        prop_assume!(w.max_abs() > 1e-3);
        let d = leray_project_with(&w, 1e-12).unwrap();
        prop_assert!(d.u.add(&d.grad_phi).unwrap().sub(&w).unwrap().max_abs() <= 1e-13 * w.max_abs());
        prop_assert!(d.u.max_boundary_normal() == 0.0);
        let norm2 = w.l2_norm().powi(2);
        prop_assert!(d.u.dot(&d.grad_phi).unwrap().abs() <= 1e-9 * norm2);
        prop_assert!(d.u.divergence().iter().all(|v| v.abs() <= 1e-8 * w.max_abs() * 16.0));
        let again = leray_project_with(&d.u, 1e-12).unwrap();
        prop_assert!(again.u.sub(&d.u).unwrap().max_abs() <= 1e-9 * w.max_abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gady_infimum_is_stable_under_doubling(p in 2.0f64..6.0, seed in 0u64..1000) {
        let a = check_gady(p, 20_000, seed).unwrap().worst;
        let b = check_gady(p, 40_000, seed + 1).unwrap().worst;
        prop_assert!(a > 0.0 && b > 0.0);
        prop_assert!((a - b).abs() <= 0.05 * a.max(b), "{} vs {}", a, b);
    }
}
