use seplab::doublestate::*;
use seplab::fock::{projector, FockSpace};
use seplab::gaussian::*;
use seplab::linalg::{c, herm_fn, max_abs, max_abs_real, CMatrix, RMatrix};
use seplab::rng::task_rng;

use rand::Rng;

fn random_even_density(n: usize, rng: &mut impl Rng) -> CMatrix {
    let d = 1 << n;
    let g = CMatrix::from_fn(d, d, |_, _| c(rng.gen::<f64>() - 0.5) + seplab::linalg::I * (rng.gen::<f64>() - 0.5));
    let f = FockSpace::new(n).unwrap();
    let p = f.parity();
    let rho = &g * g.adjoint();
    let rho = (&rho + &p * &rho * &p) * c(0.5);
    let tr = rho.trace();
    rho / tr
}

#[test]
fn transport_rules_hold_for_even_states() {
    let mut rng = task_rng(200, 0);
    for n in 1..=3 {
        for _ in 0..3 {
            let rho = random_even_density(n, &mut rng);
            let rep = cj_transport_rules_dense(&rho).unwrap();
            assert!(rep.max() < 1e-12, "{rep:?}");
        }
        let d = 1 << n;
        let mixed = CMatrix::identity(d, d) / c(d as f64);
        assert!(cj_transport_rules_dense(&mixed).unwrap().max() < 1e-12);
    }
    let vac = projector(&FockSpace::new(1).unwrap().basis_state(&[false]).unwrap());
    assert_eq!(cj_transport_rules_dense(&vac).unwrap().max(), 0.0);
}

#[test]
fn parity_odd_input_is_rejected() {
    let f = FockSpace::new(1).unwrap();
    let v = (f.basis_state(&[false]).unwrap() + f.basis_state(&[true]).unwrap()) / c(2f64.sqrt());
    assert!(matches!(cj_transport_rules_dense(&projector(&v)), Err(seplab::error::Error::ParityOdd)));
}

#[test]
fn naive_map_is_not_idempotent() {
    let mut rng = task_rng(201, 0);
    let states: Vec<CMatrix> = (1..=3).map(|n| random_even_density(n, &mut rng)).collect();
    let rep = naive_map_counterexample(&states).unwrap();
    assert!(rep.naive_defect > 0.1, "{rep:?}");
    assert!(rep.channel_defect < 1e-12);
    assert!(rep.corrected_defect < 1e-12);
    assert!(rep.corrected_vs_channel < 1e-12);
}

#[test]
fn purification_matches_dense_vector() {
    let mut rng = task_rng(202, 0);
    for n in 1..=3 {
        let df = DoubledFock::new(n).unwrap();
        let f = FockSpace::new(n).unwrap();
        for m in [random_mixed_covariance(n, 0.9, &mut rng), random_pure_covariance(n, &mut rng)] {
            let rho = f.gaussian_density(&m).unwrap();
            for w in [Weighting::Linear, Weighting::Sqrt] {
                let dense = df.doubled_covariance(&rho, w);
                let closed = purify_covariance(&m, w);
                let d = max_abs_real(&(dense - closed.matrix()));
                assert!(d < 1e-10, "n {n} {w:?}: {d}");
                assert!(closed.covariance().is_pure());
            }
        }
    }
}

#[test]
fn ket_block_recovers_input_for_sqrt_weighting() {
    let m = random_mixed_covariance(4, 0.9, &mut task_rng(203, 0));
    let g = purify_covariance(&m, Weighting::Sqrt);
    assert_eq!(g.ket_block(), *m.matrix());
    let lin = purify_covariance(&m, Weighting::Linear);
    // ρ²/tr ρ² has eigenvalues 2ν/(1+ν²)
    let s1 = MajoranaCovariance::new(lin.ket_block()).unwrap().spectrum();
    let mut want: Vec<f64> = m.spectrum().iter().map(|v| 2.0 * v / (1.0 + v * v)).collect();
    want.sort_by(f64::total_cmp);
    for (a, b) in s1.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn pure_input_gives_product_state() {
    let m = random_pure_covariance(3, &mut task_rng(204, 0));
    let g = purify_covariance(&m, Weighting::Linear);
    let n2 = 6;
    assert!(max_abs_real(&g.matrix().view((0, n2), (n2, n2)).into_owned()) < 1e-7);
}

#[test]
fn doubled_channel_matches_purified_channel_law() {
    let mut rng = task_rng(205, 0);
    for n in 1..=3 {
        let df = DoubledFock::new(n).unwrap();
        let f = FockSpace::new(n).unwrap();
        let m = random_pure_covariance(n, &mut rng);
        let rho = f.gaussian_density(&m).unwrap();
        let p = 0.15;
        let mut v = df.vectorize(&rho);
        for a in 0..2 * n {
            v = df.channel_operator(a, p) * v;
        }
        let v = &v / c(v.norm());
        let dense = df.space.covariance(&(&v * v.adjoint()));
        let law = purify_covariance(&apply_majorana_channel(&m, p).unwrap(), Weighting::Linear);
        assert!(max_abs_real(&(dense - law.matrix())) < 1e-10);
    }
}

#[test]
fn fully_decohered_double_state_is_local_pairs() {
    // M = 0: every ket mode is maximally entangled with its own bra mode
    let df = DoubledFock::new(2).unwrap();
    let rho = CMatrix::identity(4, 4) / c(4.0);
    let dense = df.doubled_covariance(&rho, Weighting::Linear);
    let m = MajoranaCovariance::new(RMatrix::zeros(4, 4)).unwrap();
    let g = purify_covariance(&m, Weighting::Linear);
    assert!(max_abs_real(&(dense - g.matrix())) < 1e-14);
    let region = g.covariance().restrict(&[0, 2]);
    assert!(region.spectrum().iter().all(|v| (v.abs() - 1.0).abs() < 1e-12));
}

#[test]
fn fermionic_transpose_of_diagonal_state() {
    let mut rng = task_rng(206, 0);
    let d = 8;
    let diag: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
    let rho = CMatrix::from_fn(d, d, |i, j| if i == j { c(diag[i]) } else { c(0.0) });
    let t = fermionic_transpose_dense(&rho).unwrap();
    assert!(max_abs(&(t - &rho)) < 1e-12);
}

#[test]
fn fermionic_transpose_matches_substitution_rule() {
    let mut rng = task_rng(207, 0);
    for n in [2, 3] {
        let f = FockSpace::new(n).unwrap();
        let m = random_pure_covariance(n, &mut rng);
        let rho = f.gaussian_density(&m).unwrap();
        let t = fermionic_transpose_dense(&rho).unwrap();
        let got = f.covariance(&t);
        assert!(max_abs_real(&(got - transpose_covariance(m.matrix()))) < 1e-12);
        // twice: back to ρ for parity-even input
        let tt = fermionic_transpose_dense(&t).unwrap();
        assert!(max_abs(&(tt - &rho)) < 1e-12);
    }
}

#[test]
fn double_transpose_is_parity_twist() {
    // applying the substitution twice sends c → -c, i.e. X → PXP
    let mut rng = task_rng(208, 0);
    let f = FockSpace::new(2).unwrap();
    let p = f.parity();
    let x = CMatrix::from_fn(4, 4, |_, _| c(rng.gen::<f64>() - 0.5));
    let x = (&x + &p * &x * &p) * c(0.5);
    let tt = fermionic_transpose_dense(&fermionic_transpose_dense(&x).unwrap()).unwrap();
    assert!(max_abs(&(tt - &p * &x * &p)) < 1e-12);
}

#[test]
fn bosonic_transpose_differs_on_pair_coherences() {
    // u|00⟩ + v|11⟩ has coherences between parity sectors of the pair
    let f = FockSpace::new(2).unwrap();
    let v = f.basis_state(&[false, false]).unwrap() * c(0.8) + f.basis_state(&[true, true]).unwrap() * c(0.6);
    let rho = projector(&v);
    let ferm = fermionic_transpose_dense(&rho).unwrap();
    let bos = bosonic_transpose(&rho);
    assert!(max_abs(&(ferm - bos)) > 0.4);
}

#[test]
fn doubled_strip_matches_dense_purification() {
    let model = BdgModel::p_ip(4, 4).with_bc(Boundary::Antiperiodic, Boundary::Open);
    let strip = model.strip_ground_state().unwrap().scaled(0.8);
    let doubled = purify_strip(&strip, Weighting::Linear);
    let dense = purify_covariance(&strip.dense(), Weighting::Linear);
    let rows = [0usize, 1];
    let mut want: Vec<f64> = {
        let sites: Vec<usize> = (0..8).collect();
        let all: Vec<usize> = sites.iter().copied().chain(sites.iter().map(|s| s + 16)).collect();
        dense.covariance().restrict(&all).spectrum()
    };
    let mut got: Vec<f64> = doubled.rows_spectrum(&rows).into_iter().flat_map(|(_, v)| v).collect();
    want.sort_by(f64::total_cmp);
    got.sort_by(f64::total_cmp);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn double_state_spectrum_is_symmetric() {
    let model = BdgModel::p_ip(12, 8).with_bc(Boundary::Antiperiodic, Boundary::Open);
    for p in [0.0, 0.05, 0.5] {
        let spec = double_state_entanglement_spectrum(&model, p, Weighting::Linear).unwrap();
        let mut all: Vec<f64> = spec.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        for (a, b) in all.iter().zip(all.iter().rev()) {
            assert!((a + b).abs() < 1e-8);
        }
    }
}

#[test]
fn sqrt_of_density_is_used_for_sqrt_weighting() {
    let f = FockSpace::new(2).unwrap();
    let m = random_mixed_covariance(2, 0.7, &mut task_rng(209, 0));
    let rho = f.gaussian_density(&m).unwrap();
    let r = herm_fn(&rho, f64::sqrt);
    assert!(max_abs(&(&r * &r - &rho)) < 1e-12);
}
