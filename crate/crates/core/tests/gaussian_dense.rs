use seplab::fock::{projector, FockSpace};
use seplab::gaussian::*;
use seplab::linalg::{max_abs_real, RMatrix};
use seplab::rng::task_rng;

use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn channel_law_matches_kraus_action() {
    let mut rng = task_rng(100, 0);
    for n in [2, 4, 5] {
        let f = FockSpace::new(n).unwrap();
        for _ in 0..3 {
            let m = random_pure_covariance(n, &mut rng);
            let rho = f.gaussian_density(&m).unwrap();
            for p in [0.0, 0.3, 0.5] {
                let dense = f.covariance(&f.majorana_channel(&rho, p));
                let law = apply_majorana_channel(&m, p).unwrap();
                assert!(max_abs_real(&(dense - law.matrix())) < 1e-10);
            }
        }
    }
}

#[test]
fn channel_law_holds_for_non_gaussian_input() {
    let f = FockSpace::new(3).unwrap();
    let a = f.basis_state(&[false, false, false]).unwrap();
    let b = f.basis_state(&[true, true, true]).unwrap();
    let psi = (a + b) * seplab::linalg::c(std::f64::consts::FRAC_1_SQRT_2);
    let rho = projector(&psi);
    let m0 = f.covariance(&rho);
    let out = f.covariance(&f.majorana_channel(&rho, 0.2));
    assert!(max_abs_real(&(out - m0 * 0.36)) < 1e-12);
}

#[test]
fn thouless_evolution_matches_dense() {
    let mut rng = task_rng(101, 0);
    for trial in 0..12 {
        let n = 2 + trial % 5;
        let f = FockSpace::new(n).unwrap();
        let kernel = if trial % 2 == 0 {
            let m0 = random_pure_covariance(n, &mut rng);
            GibbsKernel::decohered(&m0, rng.gen_range(0.02..0.45)).unwrap()
        } else {
            GibbsKernel::from_covariance(&random_mixed_covariance(n, 0.95, &mut rng), true).unwrap()
        };
        let occ: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let (cov, _) = cda_state_covariance(&kernel, &occ).unwrap();
        let psi = f.evolved_state(&kernel, &occ).unwrap();
        let dense = f.covariance(&projector(&psi));
        let d = max_abs_real(&(dense - cov.matrix()));
        assert!(d < 1e-8, "trial {trial}: {d}");
    }
}

#[test]
fn thouless_log_norm_matches_dense_overlap() {
    let mut rng = task_rng(102, 0);
    let n = 4;
    let f = FockSpace::new(n).unwrap();
    let m0 = random_pure_covariance(n, &mut rng);
    let kernel = GibbsKernel::decohered(&m0, 0.1).unwrap();
    let occ = [false, true, false, true];
    let st = cda_thouless_state(&kernel, &occ).unwrap();
    // ⟨m|ψ⟩ = 1 in the exponential form, so |⟨m|ψ̂⟩|² = e^{-log_norm}
    let psi = f.evolved_state(&kernel, &occ).unwrap();
    let overlap = psi[f.basis_index(&occ)].norm_sqr();
    assert!((overlap - (-st.log_norm).exp()).abs() < 1e-10);
}

#[test]
fn cda_rejects_pure_kernel() {
    let m0 = random_pure_covariance(3, &mut task_rng(103, 0));
    let k = GibbsKernel::from_covariance(&m0, false).unwrap();
    assert!(cda_state_covariance(&k, &[false; 3]).is_err());
    assert!(GibbsKernel::decohered(&m0, 0.0).and_then(|k| cda_state_covariance(&k, &[false; 3])).is_err());
}

#[test]
fn cda_approaches_ground_state_as_p_vanishes() {
    let model = BdgModel::p_ip(4, 4);
    let m0 = model.ground_state_covariance().unwrap();
    let mut last = f64::INFINITY;
    for p in [0.1, 0.03, 0.01, 0.003, 0.001] {
        let k = GibbsKernel::decohered(&m0, p).unwrap();
        let (m, _) = cda_state_covariance(&k, &[false; 16]).unwrap();
        let d = max_abs_real(&(m.matrix() - m0.matrix()));
        assert!(d < last);
        last = d;
    }
    assert!(last < 1e-2);
}

#[test]
fn modular_commutator_matches_dense() {
    let mut rng = task_rng(104, 0);
    for trial in 0..6 {
        let n = if trial < 3 { 5 } else { 6 };
        let f = FockSpace::new(n).unwrap();
        let m = if trial % 2 == 0 {
            random_pure_covariance(n, &mut rng)
        } else {
            random_mixed_covariance(n, 0.95, &mut rng)
        };
        let mut modes: Vec<usize> = (0..n).collect();
        modes.shuffle(&mut rng);
        let (a, b, cc) = (&modes[0..1], &modes[1..2], &modes[2..3]);
        let rho = f.gaussian_density(&m).unwrap();
        let dense = f.modular_commutator(&rho, a, b, cc, 1e-300);
        let fast = modular_commutator(&m, a, b, cc).unwrap();
        assert_eq!(fast.clipped, 0);
        assert!((dense - fast.value).abs() < 1e-6, "trial {trial}: {dense} vs {}", fast.value);
    }
}

#[test]
fn mutated_prefactor_is_caught_by_dense_oracle() {
    let mut rng = task_rng(105, 0);
    let f = FockSpace::new(5).unwrap();
    let m = random_pure_covariance(5, &mut rng);
    let rho = f.gaussian_density(&m).unwrap();
    let dense = f.modular_commutator(&rho, &[0], &[1], &[2], 1e-300);
    let bad = modular_commutator_scaled(&m, &[0], &[1], &[2], 0.5).unwrap().value;
    assert!(dense.abs() > 1e-4);
    assert!((dense - bad).abs() > 1e-6);
}

#[test]
fn ground_state_matches_dense_diagonalisation() {
    let model = BdgModel::p_ip(3, 2);
    let a = model.majorana_matrix().unwrap();
    let f = FockSpace::new(6).unwrap();
    let h = f.quadratic(&a).unwrap();
    let (vals, vecs) = seplab::linalg::eigh(&h);
    assert!(vals[1] - vals[0] > 1e-6);
    let gs = vecs.column(0).into_owned();
    let dense = f.covariance(&projector(&gs));
    let m = model.ground_state_covariance().unwrap();
    assert!(max_abs_real(&(dense - m.matrix())) < 1e-10);
    assert!((vals[0] - model.energy(&m).unwrap()).abs() < 1e-10);
}

#[test]
fn single_mode_pair_covariance_pattern() {
    // a (k, -k) pair in the two-mode Fock space: ⟨c_k† c_k⟩ = |v|², ⟨c_{-k} c_k⟩ = -uv
    let model = BdgModel::p_ip(8, 8);
    let k = (0.7, -0.3);
    let (u, v) = model.bogoliubov(k);
    let xi = model.xi(k);
    let d = model.pair_potential(k);
    // H = ξ(n_k + n_{-k}) + D c_k† c_{-k}† + h.c. on modes (k, -k)
    let f = FockSpace::new(2).unwrap();
    let (ck, cm) = (f.annihilator(0).clone(), f.annihilator(1).clone());
    let pair = ck.adjoint() * cm.adjoint() * d;
    let h = (ck.adjoint() * &ck + cm.adjoint() * &cm) * seplab::linalg::c(xi) + &pair + pair.adjoint();
    let (_, vecs) = seplab::linalg::eigh(&h);
    let rho = projector(&vecs.column(0).into_owned());
    let n = (&rho * ck.adjoint() * &ck).trace().re;
    let fk = (&rho * &cm * &ck).trace();
    assert!((n - v.norm_sqr()).abs() < 1e-12);
    assert!((fk + v * u).norm() < 1e-12);
    let m = f.covariance(&rho);
    // M_{01} = 1 - 2n for the k mode
    assert!((m[(0, 1)] - (u * u - v.norm_sqr())).abs() < 1e-12);
}

#[test]
fn trivial_phase_has_vanishing_modular_commutator() {
    let mut last = f64::INFINITY;
    for l in [8, 12, 16] {
        let m = BdgModel::p_ip(l, l).with_mu(-1.0).ground_state_covariance().unwrap();
        assert!(m.is_pure());
        let (a, b, cc) = tripartition(l).unwrap();
        let j = modular_commutator(&m, &a, &b, &cc).unwrap().value.abs();
        assert!(j < last);
        last = j;
    }
    assert!(last < 0.01 * J0, "{last}");
}

#[test]
fn maximally_mixed_has_flat_entanglement_spectrum() {
    let m = MajoranaCovariance::new(RMatrix::zeros(32, 32)).unwrap();
    let es = entanglement_spectrum(&m, 4, 4, Boundary::Antiperiodic, &[0, 1, 2, 3], false).unwrap();
    assert!(es.values.iter().all(|v| v.abs() < 1e-14));
}
