use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tpms_cpia::bspline::{
    basis_matrix, greville_collocation, limit_solution, make_knots, max_norm, spectral_radius,
    surface_eval, ControlNet,
};
use tpms_cpia::Error;

/// Cox-de Boor recursion written naively, as an independent route to the
/// basis values computed by the banded evaluator.
fn naive_basis(knots: &[f64], i: usize, p: usize, u: f64, last: f64) -> f64 {
    if p == 0 {
        // half-open spans, closed at the right end of the last span
        let hi = knots[i + 1];
        let inside = u >= knots[i] && (u < hi || (u == last && hi == last));
        return if inside { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = knots[i + p] - knots[i];
    if d1 > 0.0 {
        v += (u - knots[i]) / d1 * naive_basis(knots, i, p - 1, u, last);
    }
    let d2 = knots[i + p + 1] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + p + 1] - u) / d2 * naive_basis(knots, i + 1, p - 1, u, last);
    }
    v
}

#[test]
fn clamped_knots_have_full_end_multiplicity_and_uniform_interior() {
    let kv = make_knots(8, 3).unwrap();
    let t = kv.knots();
    assert_eq!(t.len(), 12);
    assert_eq!(&t[..4], &[0.0; 4]);
    assert_eq!(&t[8..], &[1.0; 4]);
    for (k, expected) in (1..=4).zip([0.2, 0.4, 0.6, 0.8]) {
        assert!((t[3 + k] - expected).abs() < 1e-15);
    }
}

#[test]
fn knot_construction_rejects_degenerate_sizes() {
    assert!(matches!(make_knots(3, 3), Err(Error::InvalidDimensions { .. })));
    assert!(matches!(make_knots(8, 0), Err(Error::InvalidDimensions { .. })));
}

#[test]
fn basis_row_is_a_partition_of_unity() {
    let kv = make_knots(9, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let u: f64 = rng.gen_range(0.0..=1.0);
        let row = kv.basis_row(u);
        assert_eq!(row.len(), 9);
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "sum {sum} at u={u}");
        assert!(row.iter().all(|&v| v >= -1e-14));
    }
}

#[test]
fn banded_basis_matches_naive_recursion() {
    let kv = make_knots(8, 3).unwrap();
    let t = kv.knots();
    let last = *t.last().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..300 {
        let u: f64 = if trial < 2 { trial as f64 } else { rng.gen_range(0.0..=1.0) };
        let row = kv.basis_row(u);
        for (i, &got) in row.iter().enumerate() {
            let want = naive_basis(t, i, 3, u, last);
            assert!((got - want).abs() < 1e-13, "mismatch at u={u}, basis {i}: {got} vs {want}");
        }
    }
}

#[test]
fn greville_sites_average_interior_knots() {
    let kv = make_knots(8, 3).unwrap();
    let t = kv.knots();
    let g = kv.greville();
    assert_eq!(g.len(), 8);
    for (i, &site) in g.iter().enumerate() {
        let want = (t[i + 1] + t[i + 2] + t[i + 3]) / 3.0;
        assert!((site - want).abs() < 1e-15);
    }
    assert_eq!(g[0], 0.0);
    assert_eq!(g[7], 1.0);
}

#[test]
fn collocation_square_and_row_stochastic() {
    let sys = greville_collocation(8, 3).unwrap();
    assert_eq!(sys.size(), 64);
    let b = sys.basis();
    for r in 0..64 {
        let sum: f64 = (0..64).map(|c| b[(r, c)]).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

#[test]
fn non_square_collocation_is_rejected() {
    let ku = make_knots(8, 3).unwrap();
    let kv = make_knots(8, 3).unwrap();
    let params: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 / 9.0, 0.5)).collect();
    assert!(matches!(basis_matrix(&ku, &kv, &params), Err(Error::NonSquareSystem { .. })));
}

#[test]
fn collocation_rejects_out_of_range_sites() {
    let ku = make_knots(8, 3).unwrap();
    let kv = make_knots(8, 3).unwrap();
    let mut params: Vec<(f64, f64)> = Vec::new();
    for i in 0..8 {
        for j in 0..8 {
            params.push((i as f64 / 7.0, j as f64 / 7.0));
        }
    }
    params[5] = (1.2, 0.5);
    assert!(matches!(basis_matrix(&ku, &kv, &params), Err(Error::ParamOutOfRange { .. })));
}

#[test]
fn weights_must_be_positive() {
    let sys = greville_collocation(6, 3).unwrap();
    let mut w = vec![1.0; 36];
    w[7] = 0.0;
    assert!(matches!(sys.with_weights(w), Err(Error::ParamOutOfRange { .. })));
}

#[test]
fn limit_solution_solves_the_collocation_system() {
    let sys = greville_collocation(8, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut q = DMatrix::from_fn(64, 4, |_, _| rng.gen_range(-2.0..2.0));
    for r in 0..64 {
        q[(r, 3)] = 1.0;
    }
    let p = limit_solution(&sys, &q).unwrap();
    let back = sys.apply_bw(p.matrix()).unwrap();
    assert!(max_norm(&(&back - &q)) < 1e-8);
}

#[test]
fn surface_reproduces_data_at_collocation_sites() {
    let sys = greville_collocation(8, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut q = DMatrix::from_fn(64, 4, |_, _| rng.gen_range(-1.0..1.0));
    for r in 0..64 {
        q[(r, 3)] = 1.0;
    }
    let p = limit_solution(&sys, &q).unwrap();
    for (k, &(u, v)) in sys.params().iter().enumerate() {
        let s = surface_eval(&p, u, v, sys.knots_u(), sys.knots_v()).unwrap();
        for c in 0..3 {
            assert!((s[c] - q[(k, c)]).abs() < 1e-8, "site {k} component {c}");
        }
    }
}

#[test]
fn control_net_requires_unit_homogeneous_column() {
    let mut m = DMatrix::zeros(4, 4);
    for r in 0..4 {
        m[(r, 3)] = 1.0;
    }
    assert!(ControlNet::new(m.clone()).is_ok());
    m[(2, 3)] = 0.5;
    assert!(matches!(ControlNet::new(m), Err(Error::InvalidDimensions { .. })));
}

#[test]
fn block_double_stacks_two_independent_copies() {
    let sys = greville_collocation(7, 3).unwrap();
    let twin = sys.block_double();
    assert_eq!(twin.size(), 2 * sys.size());
    let single = sys.bw_dense();
    let double = twin.bw_dense();
    let nn = sys.size();
    for r in 0..nn {
        for c in 0..nn {
            assert_eq!(double[(r, c)], single[(r, c)]);
            assert_eq!(double[(nn + r, nn + c)], single[(r, c)]);
            assert_eq!(double[(r, nn + c)], 0.0);
            assert_eq!(double[(nn + r, c)], 0.0);
        }
    }
}

#[test]
fn radius_estimate_handles_oscillating_real_spectrum() {
    let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.9]);
    let rho = spectral_radius(&m, 1e-10).unwrap();
    assert!((rho - 0.9).abs() < 1e-6, "got {rho}");
}

#[test]
fn radius_estimate_handles_pure_rotation() {
    let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let rho = spectral_radius(&m, 1e-8).unwrap();
    assert!((rho - 1.0).abs() < 1e-6, "got {rho}");
}

#[test]
fn iteration_matrix_radius_is_below_one_and_matches_frozen_values() {
    // frozen by an independent dense eigenvalue computation
    let expected = [(6usize, 0.911155), (8, 0.903279), (10, 0.900129), (12, 0.898508)];
    for (n, want) in expected {
        let sys = greville_collocation(n, 3).unwrap();
        let m = DMatrix::identity(sys.size(), sys.size()) - sys.bw_dense();
        let rho = spectral_radius(&m, 1e-10).unwrap();
        assert!(rho < 1.0);
        assert!((rho - want).abs() < 5e-5, "n={n}: got {rho}, want {want}");
    }
}
