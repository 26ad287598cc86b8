//! Sector probabilities and observables of the decohered cluster states
//! against independent stat-mech enumerations and closed forms.

use rand::Rng;
use seplab::models::{
    all_sector_probabilities, cda_state_dense, disorder_op_1d_ring, expectation, sector_observable_dense,
    string_order_1d_ring, LatticeModel, SectorLabel,
};
use seplab::rng::task_rng;

mod common;
use common::{beta, bit, enumerated_sectors, plaquette, z_ising, Torus};

#[test]
fn cluster_2d_sectors_match_enumeration() {
    let lm = LatticeModel::cluster_2d(2).unwrap();
    let t = Torus { l: 2 };
    for (g, gen) in lm.generators().iter().enumerate().skip(1) {
        let mut want: Vec<usize> = plaquette(&t, g - 1).iter().map(|e| t.nv() + e).collect();
        want.sort_unstable();
        assert_eq!(gen.op.support(), want);
    }
    let mut rng = task_rng(31, 0);
    let mut points = vec![(0.3, 0.3)];
    points.extend((0..5).map(|_| (rng.gen_range(0.02..0.48), rng.gen_range(0.02..0.48))));
    for (pv, pe) in points {
        let dense = all_sector_probabilities(&lm, &lm.rates(pv, pe)).unwrap();
        let oracle = enumerated_sectors(2, pv, pe);
        for (i, (q, p)) in dense.iter().enumerate() {
            assert_eq!(*q, SectorLabel::from_index(i, 5));
            let dev = (p - oracle[i]).abs();
            assert!(dev <= 1e-10 * oracle[i].max(1e-300) || dev < 1e-15, "{pv} {pe} {q}: {p} vs {}", oracle[i]);
        }
    }
}

#[test]
fn ising_weight_is_gauge_invariant() {
    let t = Torus { l: 2 };
    let mut rng = task_rng(32, 0);
    for _ in 0..10 {
        let xe: usize = rng.gen_range(0..1 << 8);
        let v = rng.gen_range(0..4);
        let flipped = t.star(v).iter().fold(xe, |m, &e| m ^ (1 << e));
        let (a, b) = (z_ising(&t, 0.7, xe), z_ising(&t, 0.7, flipped));
        assert!((a - b).abs() < 1e-12 * a);
    }
}

#[test]
fn membrane_matches_gauge_enumeration() {
    let lm = LatticeModel::cluster_2d(2).unwrap();
    let t = Torus { l: 2 };
    let (pv, pe) = (0.2, 0.15);
    let bv = beta(pv);
    for s in [vec![0usize], vec![0, 1], vec![0, 1, 2]] {
        let m_s = lm.product_of_terms(&s).unwrap();
        let boundary: Vec<usize> = (0..8)
            .filter(|&e| s.iter().filter(|&&v| t.star(v).contains(&e)).count() % 2 == 1)
            .collect();
        for q0 in 0..2u32 {
            let (mut num, mut den) = (0.0, 0.0);
            for xv in (0..16usize).filter(|x| x.count_ones() % 2 == q0) {
                for ze in 0..1usize << 8 {
                    let w: f64 = (0..4)
                        .map(|v| bit(xv, v) * t.star(v).iter().map(|&e| bit(ze, e)).product::<f64>())
                        .sum();
                    let w = (bv * w).exp();
                    let o: f64 = s.iter().map(|&v| bit(xv, v)).product::<f64>()
                        * boundary.iter().map(|&e| bit(ze, e)).product::<f64>();
                    num += o * w;
                    den += w;
                }
            }
            let q = SectorLabel(vec![q0 as u8, 0, 0, 0, 0]);
            let v = sector_observable_dense(&lm, &lm.rates(pv, pe), &q, &m_s).unwrap();
            assert!((v - num / den).abs() < 1e-10, "{s:?} Q0={q0}: {v} vs {}", num / den);
        }
    }
}

#[test]
fn string_order_ring_matches_dense() {
    for n in [3, 4] {
        let lm = LatticeModel::cluster_1d(n).unwrap();
        for p in [0.1, 0.25, 0.4] {
            for len in 1..n {
                for qa in 0..2u8 {
                    let want = string_order_1d_ring(p, len, n, qa).unwrap().unwrap();
                    let q = SectorLabel(vec![qa, 0]);
                    let s = lm.string_a(1, len).unwrap();
                    let got = sector_observable_dense(&lm, &lm.rates(p, 0.3), &q, &s).unwrap();
                    assert!((got - want).abs() < 1e-10, "n={n} p={p} len={len} Q={qa}: {got} vs {want}");
                    let q = SectorLabel(vec![0, qa]);
                    let s = lm.string_b(0, len).unwrap();
                    let got = sector_observable_dense(&lm, &lm.rates(0.2, p), &q, &s).unwrap();
                    assert!((got - want).abs() < 1e-10);
                }
            }
        }
    }
}

fn beta_or_inf(p: f64) -> f64 {
    if p == 0.0 {
        f64::INFINITY
    } else {
        beta(p)
    }
}

#[test]
fn cda_disorder_and_ghz_match_ring_forms() {
    let mut rng = task_rng(33, 0);
    for n in [3, 4] {
        let lm = LatticeModel::cluster_1d(n).unwrap();
        for p in [0.1, 0.25, 0.4] {
            for trial in 0..4 {
                let mut m: Vec<bool> = (0..2 * n).map(|_| rng.gen()).collect();
                // β = ∞ on a sublattice needs its generator to be +1
                m[0] ^= trial == 0 && (0..n).filter(|&j| m[2 * j]).count() % 2 == 1;
                let parity = |off: usize| (0..n).filter(|&j| m[2 * j + off]).count() as u8 % 2;
                // truncated U_a cuts the b terms, so only p_b enters
                let pa = [0.0, 0.2, 0.45, 0.3][trial];
                let betas: Vec<f64> = lm.rates(pa, p).iter().map(|&r| beta_or_inf(r)).collect();
                let psi = cda_state_dense(lm.model(), &betas, &m).unwrap();
                for len in 1..n {
                    let d = lm.disorder_a(1, len).unwrap();
                    let sign: f64 = (1..1 + len).map(|l| if m[2 * (l % n)] { -1.0 } else { 1.0 }).product();
                    let want = sign * disorder_op_1d_ring(p, n, parity(1)).unwrap().unwrap();
                    let got = expectation(&psi, &d).unwrap();
                    assert!((got - want).abs() < 1e-10, "n={n} p={p} len={len}: {got} vs {want}");
                }
                // β_b = ∞ needs U_b = +1
                let mut m = m.clone();
                m[1] ^= parity(1) == 1;
                let betas: Vec<f64> = lm.rates(p, 0.0).iter().map(|&r| beta_or_inf(r)).collect();
                let psi = cda_state_dense(lm.model(), &betas, &m).unwrap();
                let want = disorder_op_1d_ring(p, n, (0..n).filter(|&j| m[2 * j]).count() as u8 % 2).unwrap().unwrap();
                for k in 1..n {
                    let got = expectation(&psi, &lm.ghz_pair_a(0, k).unwrap()).unwrap();
                    assert!((got.abs() - want).abs() < 1e-10, "n={n} p={p} k={k}: {got} vs {want}");
                }
            }
        }
    }
}
