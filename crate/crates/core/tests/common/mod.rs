//! Exhaustive-search oracle for small step problems.

#![allow(dead_code)]

use fracflow::grid::{centered_origin, GridSet};
use fracflow::kernel::{KernelModel, KernelParams};
use fracflow::step::StepProblem;
use rand::Rng;

pub fn with_free(base: &GridSet, cells: &[usize], bits: u32) -> GridSet {
    let mut mask = base.mask().to_vec();
    for (k, &c) in cells.iter().enumerate() {
        mask[c] = bits >> k & 1 == 1;
    }
    base.with_mask(mask).unwrap()
}

/// Perimeter plus dissipation as a quadratic pseudo-boolean function of the
/// free cells, read off from the problem's own energy.
pub struct Quadratic {
    q0: f64,
    q1: Vec<f64>,
    q2: Vec<Vec<f64>>,
}

impl Quadratic {
    pub fn new(p: &StepProblem, base: &GridSet, cells: &[usize]) -> Self {
        let q = |bits: u32| {
            let e = p.energy(&with_free(base, cells, bits)).unwrap();
            e.perimeter + e.dissipation
        };
        let n = cells.len();
        let q0 = q(0);
        let q1: Vec<f64> = (0..n).map(|k| q(1 << k) - q0).collect();
        let mut q2 = vec![vec![0.0; n]; n];
        for k in 0..n {
            for l in k + 1..n {
                let v = q(1 << k | 1 << l) - q0 - q1[k] - q1[l];
                q2[k][l] = v;
                q2[l][k] = v;
            }
        }
        Self { q0, q1, q2 }
    }

    /// Visits every assignment in Gray-code order with the approximate
    /// quadratic value and the number of free cells switched on.
    pub fn gray(&self, mut visit: impl FnMut(u32, f64, usize)) {
        let n = self.q1.len();
        let mut u = vec![false; n];
        let (mut quad, mut ones, mut bits) = (self.q0, 0usize, 0u32);
        visit(0, quad, 0);
        for g in 1u32..(1u32 << n) {
            let k = g.trailing_zeros() as usize;
            let mut delta = self.q1[k];
            for (l, &on) in u.iter().enumerate() {
                if on {
                    delta += self.q2[k][l];
                }
            }
            if u[k] {
                quad -= delta;
                ones -= 1;
            } else {
                quad += delta;
                ones += 1;
            }
            u[k] = !u[k];
            bits ^= 1 << k;
            visit(bits, quad, ones);
        }
    }
}

/// Assignments within a relative tolerance of the approximate minimum of
/// `quad + extra(ones)`.
fn near_minimizers(q: &Quadratic, extra: impl Fn(usize) -> f64) -> Vec<u32> {
    let mut cands: Vec<(f64, u32)> = Vec::new();
    let mut best = f64::INFINITY;
    let mut tol = 0.0;
    q.gray(|bits, quad, ones| {
        let v = quad + extra(ones);
        if best.is_infinite() {
            tol = 1e-9 * v.abs().max(1.0);
        }
        if v <= best + tol {
            best = best.min(v);
            cands.push((v, bits));
        }
    });
    cands.into_iter().filter(|(v, _)| *v <= best + tol).map(|c| c.1).collect()
}

/// Exact minimum of the full penalized energy over all free-cell assignments.
pub fn exhaustive_minimum(p: &StepProblem, base: &GridSet, cells: &[usize]) -> f64 {
    let q = Quadratic::new(p, base, cells);
    let a2 = base.a() * base.a();
    let frozen = base.count() - cells.iter().filter(|&&c| base.mask()[c]).count();
    let penalty = |ones: usize| p.kappa * (((frozen + ones) as f64) * a2 - p.m).abs();
    near_minimizers(&q, penalty)
        .into_iter()
        .map(|b| p.energy(&with_free(base, cells, b)).unwrap().total())
        .fold(f64::INFINITY, f64::min)
}

/// Minimum of the Lagrangian `P + D − λ|F|` over all free-cell assignments.
pub fn exhaustive_lagrangian(p: &StepProblem, base: &GridSet, cells: &[usize], lambda: f64) -> f64 {
    let q = Quadratic::new(p, base, cells);
    let a2 = base.a() * base.a();
    let frozen = base.count() - cells.iter().filter(|&&c| base.mask()[c]).count();
    let lin = |ones: usize| -lambda * (frozen + ones) as f64 * a2;
    let lagr = |g: &GridSet| {
        let e = p.energy(g).unwrap();
        e.perimeter + e.dissipation - lambda * g.volume()
    };
    near_minimizers(&q, lin)
        .into_iter()
        .map(|b| lagr(&with_free(base, cells, b)))
        .fold(f64::INFINITY, f64::min)
}

/// A random problem on an 8x8 window with `n_free` free cells, a random
/// previous set and a random distance field of the right signs.
pub fn random_problem<R: Rng>(rng: &mut R, s: f64, n_free: usize) -> (StepProblem, GridSet, Vec<usize>) {
    let (n, a) = (8usize, 0.125);
    let interior: Vec<usize> = (1..n - 1)
        .flat_map(|j| (1..n - 1).map(move |i| j * n + i))
        .collect();
    let e = loop {
        let mut mask = vec![false; n * n];
        for &c in &interior {
            mask[c] = rng.gen_bool(0.5);
        }
        let g = GridSet::new(n, n, a, centered_origin(n, n, a), mask).unwrap();
        if g.count() > 0 {
            break g;
        }
    };
    let sd: Vec<f64> = e
        .mask()
        .iter()
        .map(|&inside| {
            let d = rng.gen_range(0.2..3.0) * a;
            if inside {
                -d
            } else {
                d
            }
        })
        .collect();
    let mut pool = interior.clone();
    let mut cells = Vec::with_capacity(n_free);
    for _ in 0..n_free {
        cells.push(pool.swap_remove(rng.gen_range(0..pool.len())));
    }
    cells.sort_unstable();
    let mut free = vec![false; n * n];
    for &c in &cells {
        free[c] = true;
    }
    let h = 10f64.powf(rng.gen_range(-2.5..-0.5));
    let count = e.count() as i64 + rng.gen_range(-3i64..=3);
    let m = count.max(1) as f64 * a * a;
    let kernel = KernelModel::new(KernelParams::for_window(s, a, n, n)).unwrap();
    let p = StepProblem::new(e.clone(), kernel, h, m, 3.0)
        .unwrap()
        .with_distance(sd)
        .unwrap()
        .with_free_mask(free)
        .unwrap();
    (p, e, cells)
}
