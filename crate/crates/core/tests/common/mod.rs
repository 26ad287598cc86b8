//! Independent stat-mech enumeration for the 2d cluster sectors.
#![allow(dead_code)]

/// Periodic L×L square lattice with its own indexing, independent of the
/// library: vertex `x + L y`, edge `2v + μ`.
pub struct Torus {
    pub l: usize,
}

impl Torus {
    pub fn v(&self, x: usize, y: usize) -> usize {
        x % self.l + self.l * (y % self.l)
    }
    pub fn xy(&self, v: usize) -> (usize, usize) {
        (v % self.l, v / self.l)
    }
    pub fn nv(&self) -> usize {
        self.l * self.l
    }
    pub fn ends(&self, e: usize) -> (usize, usize) {
        let (x, y) = self.xy(e / 2);
        let w = if e % 2 == 0 { self.v(x + 1, y) } else { self.v(x, y + 1) };
        (e / 2, w)
    }
    pub fn star(&self, v: usize) -> Vec<usize> {
        (0..2 * self.nv()).filter(|&e| {
            let (a, b) = self.ends(e);
            a == v || b == v
        }).collect()
    }
}

pub fn bit(mask: usize, i: usize) -> f64 {
    if mask >> i & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// `Z_gauge(x_v) = Σ_{z_e} exp(β_v Σ_v x_v Π_{e∋v} z_e)`.
pub fn z_gauge(t: &Torus, bv: f64, xv: usize) -> f64 {
    let ne = 2 * t.nv();
    let stars: Vec<Vec<usize>> = (0..t.nv()).map(|v| t.star(v)).collect();
    (0..1usize << ne)
        .map(|ze| {
            let s: f64 = (0..t.nv())
                .map(|v| bit(xv, v) * stars[v].iter().map(|&e| bit(ze, e)).product::<f64>())
                .sum();
            (bv * s).exp()
        })
        .sum()
}

/// `Z_Ising(x_e) = Σ_{z_v} exp(β_e Σ_e x_e z_u z_w)`.
pub fn z_ising(t: &Torus, be: f64, xe: usize) -> f64 {
    (0..1usize << t.nv())
        .map(|zv| {
            let s: f64 = (0..2 * t.nv())
                .map(|e| {
                    let (u, w) = t.ends(e);
                    bit(xe, e) * bit(zv, u) * bit(zv, w)
                })
                .sum();
            (be * s).exp()
        })
        .sum()
}

pub fn beta(p: f64) -> f64 {
    (1.0 - 2.0 * p).atanh()
}

/// Plaquette boundary with lower-left corner `v`.
pub fn plaquette(t: &Torus, v: usize) -> [usize; 4] {
    let (x, y) = t.xy(v);
    [2 * v, 2 * t.v(x + 1, y) + 1, 2 * t.v(x, y + 1), 2 * v + 1]
}

/// Sector weights `Σ_{x_v ∈ Q0} Z_gauge · Σ_{x_e ∈ Q1} Z_Ising`, normalised.
pub fn enumerated_sectors(l: usize, pv: f64, pe: f64) -> Vec<f64> {
    let t = Torus { l };
    let (nv, ne) = (t.nv(), 2 * t.nv());
    let mut gauge = [0.0; 2];
    for xv in 0..1usize << nv {
        gauge[(xv.count_ones() % 2) as usize] += z_gauge(&t, beta(pv), xv);
    }
    let mut ising = vec![0.0; 1 << nv];
    for xe in 0..1usize << ne {
        let q1: usize = (0..nv)
            .filter(|&v| plaquette(&t, v).iter().filter(|&&e| xe >> e & 1 == 1).count() % 2 == 1)
            .map(|v| 1 << v)
            .sum();
        ising[q1] += z_ising(&t, beta(pe), xe);
    }
    let total: f64 = gauge.iter().sum::<f64>() * ising.iter().sum::<f64>();
    // label bit 0 is the zero-form charge, bit 1 + v the plaquette at v
    (0..1usize << (nv + 1))
        .map(|i| gauge[i & 1] * ising[i >> 1] / total)
        .collect()
}
