//! One minimizing-movement step solved exactly by parametric min-cut.
//!
//! The step minimizes `P(F) + (1/h) ∫_{F△E} |sd_E| + κ ||F| − m|` over sets
//! that agree with `E` outside a band around `∂E`. For a fixed multiplier
//! `λ` the Lagrangian `P(F) + (1/h) ∫_F sd_E − λ|F|` is a submodular binary
//! energy; its largest minimizer `F(λ)` is nested in `λ`.

use crate::error::{invalid, Error, Result};
use crate::grid::{signed_distance, GridSet};
use crate::kernel::{face_curvature, KernelModel};
use crate::maxflow::CutGraphBuilder;
use crate::quadrature::pairwise_sum;

pub const DEFAULT_GAMMA: f64 = 3.0;
const MAX_REFINEMENTS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energy {
    pub perimeter: f64,
    pub dissipation: f64,
    pub penalty: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.perimeter + self.dissipation + self.penalty
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepCase {
    /// `|F(κ)| ≤ m`.
    UpperMultiplier,
    /// `|F(−κ)| ≥ m`.
    LowerMultiplier,
    /// Interior multiplier with `|F(λ)| = m`.
    ExactVolume,
    /// Volume jumps across `m` at a single breakpoint.
    Breakpoint,
}

#[derive(Clone, Debug)]
pub struct StepProblem {
    pub e_prev: GridSet,
    pub kernel: KernelModel,
    pub h: f64,
    pub m: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub band_halfwidth: f64,
    sd: Vec<f64>,
    free_override: Option<Vec<bool>>,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub f_next: GridSet,
    pub lambda_star: f64,
    pub energy: Energy,
    pub gap: f64,
    pub band_hit: bool,
    pub cut_count: usize,
    pub case: StepCase,
    pub free_cells: usize,
    pub band_halfwidth: f64,
}

/// Smallest admissible band half-width `2 γ h^{1/(1+s)}`.
pub fn min_band_halfwidth(gamma: f64, h: f64, s: f64) -> f64 {
    2.0 * gamma * h.powf(1.0 / (1.0 + s))
}

impl StepProblem {
    pub fn new(e_prev: GridSet, kernel: KernelModel, h: f64, m: f64, gamma: f64) -> Result<Self> {
        if !(h > 0.0) || !(m > 0.0) || !(gamma > 0.0) {
            return Err(invalid(format!("h = {h}, m = {m}, gamma = {gamma}")));
        }
        if e_prev.a() != kernel.a() {
            return Err(Error::CellSizeMismatch {
                kernel: kernel.a(),
                grid: e_prev.a(),
            });
        }
        if e_prev.is_empty() {
            return Err(Error::DegenerateSet("empty previous set"));
        }
        let s = kernel.s();
        let sd = signed_distance(&e_prev)?.values;
        Ok(Self {
            kappa: h.powf(-s / (1.0 + s)),
            band_halfwidth: min_band_halfwidth(gamma, h, s),
            e_prev,
            kernel,
            h,
            m,
            gamma,
            sd,
            free_override: None,
        })
    }

    pub fn with_band_halfwidth(mut self, b: f64) -> Result<Self> {
        let min = min_band_halfwidth(self.gamma, self.h, self.kernel.s());
        if b < min {
            return Err(invalid(format!("band half-width {b} below {min}")));
        }
        self.band_halfwidth = b;
        Ok(self)
    }

    /// Replaces the distance field; signs must match the previous set
    /// (negative inside, positive outside).
    pub fn with_distance(mut self, sd: Vec<f64>) -> Result<Self> {
        if sd.len() != self.e_prev.len() {
            return Err(Error::GeometryMismatch);
        }
        let ok = sd
            .iter()
            .zip(self.e_prev.mask())
            .all(|(&d, &inside)| if inside { d < 0.0 } else { d > 0.0 });
        if !ok {
            return Err(invalid("distance field sign disagrees with the set"));
        }
        self.sd = sd;
        Ok(self)
    }

    /// Fixes the free cells explicitly instead of using the band.
    pub fn with_free_mask(mut self, free: Vec<bool>) -> Result<Self> {
        if free.len() != self.e_prev.len() {
            return Err(Error::GeometryMismatch);
        }
        self.free_override = Some(free);
        Ok(self)
    }

    pub fn distance(&self) -> &[f64] {
        &self.sd
    }

    /// Free cells for a given half-width; the outer ring is always frozen.
    pub fn free_mask(&self, halfwidth: f64) -> Vec<bool> {
        let g = &self.e_prev;
        let (nx, ny) = (g.nx(), g.ny());
        let mut free = match &self.free_override {
            Some(f) => f.clone(),
            None => self.sd.iter().map(|d| d.abs() <= halfwidth).collect(),
        };
        for j in 0..ny {
            for i in 0..nx {
                if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                    free[j * nx + i] = false;
                }
            }
        }
        free
    }

    /// The penalized energy of `F`, always summed in the same order.
    pub fn energy(&self, f: &GridSet) -> Result<Energy> {
        if !f.same_geometry(&self.e_prev) {
            return Err(Error::GeometryMismatch);
        }
        let perimeter = self.kernel.perimeter(f)?;
        Ok(Energy {
            perimeter,
            dissipation: self.dissipation(f),
            penalty: self.kappa * (f.volume() - self.m).abs(),
        })
    }

    pub fn dissipation(&self, f: &GridSet) -> f64 {
        let a2 = self.e_prev.a() * self.e_prev.a();
        let terms: Vec<f64> = f
            .mask()
            .iter()
            .zip(self.e_prev.mask())
            .zip(&self.sd)
            .filter(|((x, y), _)| x != y)
            .map(|(_, d)| d.abs() * a2 / self.h)
            .collect();
        pairwise_sum(&terms)
    }

    /// Largest minimizer of the Lagrangian at multiplier `lambda` over the band.
    pub fn solve_cut(&self, lambda: f64) -> Result<GridSet> {
        let inst = CutInstance::new(self, self.band_halfwidth)?;
        Ok(inst.solve(lambda, &Fixings::none(inst.free.len())).0)
    }

    pub fn step(&self) -> Result<StepResult> {
        let r = self.step_with_band(self.band_halfwidth)?;
        if !r.band_hit || self.free_override.is_some() {
            return Ok(r);
        }
        let r2 = self.step_with_band(2.0 * self.band_halfwidth)?;
        if r2.band_hit {
            return Err(Error::BandOverflow);
        }
        Ok(r2)
    }

    fn step_with_band(&self, halfwidth: f64) -> Result<StepResult> {
        let inst = CutInstance::new(self, halfwidth)?;
        let nfree = inst.free.len();
        let none = Fixings::none(nfree);
        let a2 = self.e_prev.a() * self.e_prev.a();
        let mut cuts = 0;

        let (g_plus, u_plus) = inst.solve(self.kappa, &none);
        cuts += 1;
        if g_plus.volume() <= self.m {
            return self.finish(&inst, g_plus, self.kappa, 0.0, cuts, StepCase::UpperMultiplier, halfwidth);
        }
        let (g_minus, u_minus) = inst.solve(-self.kappa, &none);
        cuts += 1;
        if g_minus.volume() >= self.m {
            return self.finish(&inst, g_minus, -self.kappa, 0.0, cuts, StepCase::LowerMultiplier, halfwidth);
        }

        let (mut lo, mut f_lo, mut u_lo) = (-self.kappa, g_minus, u_minus);
        let (mut hi, mut f_hi, mut u_hi) = (self.kappa, g_plus, u_plus);
        let mut a_lo = self.unpenalized(&f_lo)?;
        let mut a_hi = self.unpenalized(&f_hi)?;
        let mut lambda = 0.5 * (lo + hi);
        for _ in 0..MAX_REFINEMENTS {
            let dv = (f_hi.count() as f64 - f_lo.count() as f64) * a2;
            lambda = (a_hi - a_lo) / dv;
            if !(lambda > lo && lambda < hi) {
                lambda = 0.5 * (lo + hi);
            }
            let fix = Fixings::between(&u_lo, &u_hi);
            let (f, u) = inst.solve(lambda, &fix);
            cuts += 1;
            if f.volume() == self.m {
                return self.finish(&inst, f, lambda, 0.0, cuts, StepCase::ExactVolume, halfwidth);
            }
            if f == f_lo || f == f_hi {
                break;
            }
            if f.volume() < self.m {
                lo = lambda;
                a_lo = self.unpenalized(&f)?;
                f_lo = f;
                u_lo = u;
            } else {
                hi = lambda;
                a_hi = self.unpenalized(&f)?;
                f_hi = f;
                u_hi = u;
            }
        }

        let lagr = |a: f64, f: &GridSet| a - lambda * (f.volume() - self.m);
        let lower = lagr(a_lo, &f_lo).min(lagr(a_hi, &f_hi));
        let mut best: Option<(GridSet, f64)> = None;
        for cand in [f_lo, f_hi, self.e_prev.clone()] {
            let j = self.energy(&cand)?.total();
            if best.as_ref().map_or(true, |(_, b)| j < *b) {
                best = Some((cand, j));
            }
        }
        let (f, j) = best.expect("three candidates");
        let gap = (j - lower).max(0.0);
        self.finish(&inst, f, lambda, gap, cuts, StepCase::Breakpoint, halfwidth)
    }

    fn unpenalized(&self, f: &GridSet) -> Result<f64> {
        let e = self.energy(f)?;
        Ok(e.perimeter + e.dissipation)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        inst: &CutInstance,
        f: GridSet,
        lambda: f64,
        gap: f64,
        cuts: usize,
        case: StepCase,
        halfwidth: f64,
    ) -> Result<StepResult> {
        let energy = self.energy(&f)?;
        Ok(StepResult {
            band_hit: inst.band_hit(&f),
            f_next: f,
            lambda_star: lambda,
            energy,
            gap,
            cut_count: cuts,
            case,
            free_cells: inst.free.len(),
            band_halfwidth: halfwidth,
        })
    }

    /// Multiplier used by the Euler-Lagrange residual.
    pub fn residual_multiplier(&self, r: &StepResult) -> f64 {
        if r.gap == 0.0 && r.f_next.volume() == self.m {
            r.lambda_star
        } else {
            (self.m - r.f_next.volume()).signum() * self.kappa
        }
    }

    /// `max |sd/h + H − λ|` over the boundary faces of the new set, with
    /// distance and curvature averaged across each face.
    pub fn lagrange_residual(&self, r: &StepResult) -> Result<f64> {
        let f = &r.f_next;
        let sigma = self.kernel.cell_curvature(f)?;
        let lambda = self.residual_multiplier(r);
        let mut worst = 0.0f64;
        for j in 0..f.ny() {
            for i in 0..f.nx() {
                if !f.get(i, j) {
                    continue;
                }
                let p = f.idx(i, j);
                for (ip, jp) in f.neighbors4(i, j).flatten() {
                    if f.get(ip, jp) {
                        continue;
                    }
                    let q = f.idx(ip, jp);
                    let sd = 0.5 * (self.sd[p] + self.sd[q]);
                    let h = 0.5 * (sigma[p] + sigma[q]);
                    worst = worst.max((sd / self.h + h - lambda).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Face curvature at a boundary cell of a step result.
    pub fn curvature_at(&self, f: &GridSet, p: (usize, usize)) -> Result<f64> {
        let sigma = self.kernel.cell_curvature(f)?;
        face_curvature(f, &sigma, p)
    }
}

/// Cells pinned by nestedness while refining the multiplier.
struct Fixings {
    /// `Some(v)` pins free cell `k` to `v`.
    pinned: Vec<Option<bool>>,
}

impl Fixings {
    fn none(n: usize) -> Self {
        Self { pinned: vec![None; n] }
    }

    fn between(lo: &[bool], hi: &[bool]) -> Self {
        Self {
            pinned: lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| {
                    if l {
                        Some(true)
                    } else if !h {
                        Some(false)
                    } else {
                        None
                    }
                })
                .collect(),
        }
    }
}

/// The band-restricted problem with frozen interactions folded into unaries.
struct CutInstance<'a> {
    problem: &'a StepProblem,
    free: Vec<usize>,
    coords: Vec<(isize, isize)>,
    is_free: Vec<bool>,
    /// Unary coefficient at `λ = 0`.
    base: Vec<f64>,
}

impl<'a> CutInstance<'a> {
    fn new(problem: &'a StepProblem, halfwidth: f64) -> Result<Self> {
        let g = &problem.e_prev;
        let is_free = problem.free_mask(halfwidth);
        let free: Vec<usize> = (0..g.len()).filter(|&k| is_free[k]).collect();
        if free.is_empty() {
            return Err(Error::DegenerateBand);
        }
        let nx = g.nx();
        let coords = free
            .iter()
            .map(|&k| ((k % nx) as isize, (k / nx) as isize))
            .collect();
        let frozen = g.with_mask_unchecked(is_free.iter().map(|&f| !f).collect());
        let frozen_in = g.with_mask_unchecked(
            is_free
                .iter()
                .zip(g.mask())
                .map(|(&f, &e)| !f && e)
                .collect(),
        );
        let k_frozen = problem.kernel.convolve(&frozen);
        let k_frozen_in = problem.kernel.convolve(&frozen_in);
        let out = problem.kernel.outside_weights(g.nx(), g.ny());
        let a2 = g.a() * g.a();
        let base = free
            .iter()
            .map(|&k| {
                problem.sd[k] / problem.h * a2 + out[k] + (k_frozen[k] - 2.0 * k_frozen_in[k])
            })
            .collect();
        Ok(Self {
            problem,
            free,
            coords,
            is_free,
            base,
        })
    }

    fn weight(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.coords[a], self.coords[b]);
        self.problem.kernel.offset_weight(p.0 - q.0, p.1 - q.1)
    }

    /// Returns the full new set and the free-cell assignment.
    fn solve(&self, lambda: f64, fix: &Fixings) -> (GridSet, Vec<bool>) {
        let g = &self.problem.e_prev;
        let a2 = g.a() * g.a();
        let open: Vec<usize> = (0..self.free.len())
            .filter(|&k| fix.pinned[k].is_none())
            .collect();
        let pinned: Vec<(usize, bool)> = fix
            .pinned
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.map(|v| (k, v)))
            .collect();
        let mut b = CutGraphBuilder::new(open.len());
        for (slot, &k) in open.iter().enumerate() {
            let mut c = self.base[k] - lambda * a2;
            for &(q, v) in &pinned {
                let w = self.weight(k, q);
                c += if v { -w } else { w };
            }
            b.add_unary(slot, c);
        }
        for (x, &k) in open.iter().enumerate() {
            for (y, &q) in open.iter().enumerate().skip(x + 1) {
                b.add_pair(x, y, self.weight(k, q));
            }
        }
        let mut graph = b.build();
        graph.max_flow();
        let side = graph.source_side();

        let mut assign: Vec<bool> = fix.pinned.iter().map(|p| p.unwrap_or(false)).collect();
        for (slot, &k) in open.iter().enumerate() {
            assign[k] = side[slot];
        }
        let mut mask = g.mask().to_vec();
        for (k, &cell) in self.free.iter().enumerate() {
            mask[cell] = assign[k];
        }
        (g.with_mask_unchecked(mask), assign)
    }

    /// A free cell that changed phase and touches a frozen cell.
    fn band_hit(&self, f: &GridSet) -> bool {
        let g = &self.problem.e_prev;
        let (nx, ny) = (g.nx() as isize, g.ny() as isize);
        self.free.iter().any(|&k| {
            if f.mask()[k] == g.mask()[k] {
                return false;
            }
            let (i, j) = ((k as isize) % nx, (k as isize) / nx);
            (-1..=1).any(|dy| {
                (-1..=1).any(|dx| {
                    let (p, q) = (i + dx, j + dy);
                    p < 0 || q < 0 || p >= nx || q >= ny || !self.is_free[(q * nx + p) as usize]
                })
            })
        })
    }
}
