//! Normal deformations `B_f = { x(1 + f(x)) : x ∈ ∂B }` of the unit disk,
//! with `f` a finite Fourier series, and the nonlocal quantities attached to
//! them: curvature, Gagliardo seminorm, second variation, the
//! representation-formula perimeter and the Alexandrov ratio.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::grid::{centered_origin, GridSet};
use crate::quadrature::{gauss_legendre, integrate, pairwise_sum};
use crate::special::ball_perimeter;

pub const DEFAULT_DELTA: f64 = 0.05;
pub const MAX_MODES: usize = 64;
const NORM_SAMPLES: usize = 4096;
const LEVELS: usize = 14;
const LEVEL_TOL: f64 = 1e-6;
const PIECE_NODES: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Deformation {
    a: Vec<f64>,
    b: Vec<f64>,
    delta: f64,
}

/// Value and first two derivatives of `f` at one angle.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
}

impl Deformation {
    /// `a[k]`, `b[k]` for `k = 0..=K`; `b[0]` must be zero.
    pub fn new(a: Vec<f64>, b: Vec<f64>, delta: f64) -> Result<Self> {
        let d = Self::unchecked(a, b, delta)?;
        let c1 = d.c1_norm();
        if c1 > delta {
            return Err(invalid(format!("C1 norm {c1:.4e} exceeds delta = {delta}")));
        }
        Ok(d)
    }

    fn unchecked(mut a: Vec<f64>, mut b: Vec<f64>, delta: f64) -> Result<Self> {
        if a.len() != b.len() {
            return Err(invalid("coefficient vectors differ in length"));
        }
        if a.len() > MAX_MODES + 1 {
            return Err(invalid(format!("more than {MAX_MODES} modes")));
        }
        if !(delta > 0.0) {
            return Err(invalid("delta must be positive"));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coefficient"));
        }
        if b.first().is_some_and(|&b0| b0 != 0.0) {
            return Err(invalid("b_0 must be zero"));
        }
        if a.is_empty() {
            a.push(0.0);
            b.push(0.0);
        }
        Ok(Self { a, b, delta })
    }

    pub fn zero() -> Self {
        Self {
            a: vec![0.0],
            b: vec![0.0],
            delta: DEFAULT_DELTA,
        }
    }

    /// `a_k cos kθ + b_k sin kθ`.
    pub fn mode(k: usize, ak: f64, bk: f64, delta: f64) -> Result<Self> {
        Self::from_modes(&[(k, ak, bk)], delta)
    }

    pub fn from_modes(modes: &[(usize, f64, f64)], delta: f64) -> Result<Self> {
        let k_max = modes.iter().map(|m| m.0).max().unwrap_or(0);
        if k_max > MAX_MODES {
            return Err(invalid(format!("mode {k_max} exceeds {MAX_MODES}")));
        }
        let (mut a, mut b) = (vec![0.0; k_max + 1], vec![0.0; k_max + 1]);
        for &(k, ak, bk) in modes {
            a[k] += ak;
            b[k] += bk;
        }
        Self::new(a, b, delta)
    }

    /// Random smooth deformation: modes `2..=k_max` with amplitudes
    /// `k^{-4}·U(½, 1)` and uniform phases, rescaled to a C¹ norm drawn from
    /// `[0.2, 1]·δ/2` and then projected onto the constraints.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, k_max: usize, delta: f64) -> Result<Self> {
        if !(2..=MAX_MODES).contains(&k_max) {
            return Err(invalid(format!("k_max = {k_max} outside 2..={MAX_MODES}")));
        }
        let (mut a, mut b) = (vec![0.0; k_max + 1], vec![0.0; k_max + 1]);
        for k in 2..=k_max {
            let amp = (k as f64).powi(-4) * rng.gen_range(0.5..1.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            a[k] = amp * phase.cos();
            b[k] = amp * phase.sin();
        }
        let raw = Self::unchecked(a, b, delta)?;
        let target = rng.gen_range(0.2..1.0) * delta / 2.0;
        raw.scaled(target / raw.c1_norm()).project_constraints()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn k_max(&self) -> usize {
        self.a.len() - 1
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.a
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.b
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().chain(&self.b).all(|&v| v == 0.0)
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            a: self.a.iter().map(|v| v * t).collect(),
            b: self.b.iter().map(|v| v * t).collect(),
            delta: self.delta,
        }
    }

    /// `f + t·g`, without the C¹ check.
    pub fn plus(&self, g: &Deformation, t: f64) -> Self {
        let n = self.a.len().max(g.a.len());
        let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        Self {
            a: (0..n).map(|k| at(&self.a, k) + t * at(&g.a, k)).collect(),
            b: (0..n).map(|k| at(&self.b, k) + t * at(&g.b, k)).collect(),
            delta: self.delta,
        }
    }

    /// `θ ↦ f(θ − c)`.
    pub fn rotated(&self, c: f64) -> Self {
        let mut out = self.clone();
        for k in 1..self.a.len() {
            let (sn, cs) = (k as f64 * c).sin_cos();
            out.a[k] = self.a[k] * cs - self.b[k] * sn;
            out.b[k] = self.a[k] * sn + self.b[k] * cs;
        }
        out
    }

    pub fn jet(&self, theta: f64) -> Jet {
        let (s1, c1) = theta.sin_cos();
        let (mut ck, mut sk) = (1.0, 0.0);
        let mut j = Jet {
            f: self.a[0],
            df: 0.0,
            d2f: 0.0,
        };
        for k in 1..self.a.len() {
            (ck, sk) = (ck * c1 - sk * s1, sk * c1 + ck * s1);
            let kf = k as f64;
            let (a, b) = (self.a[k], self.b[k]);
            j.f += a * ck + b * sk;
            j.df += kf * (b * ck - a * sk);
            j.d2f -= kf * kf * (a * ck + b * sk);
        }
        j
    }

    pub fn value(&self, theta: f64) -> f64 {
        self.jet(theta).f
    }

    fn samples(&self) -> impl Iterator<Item = Jet> + '_ {
        (0..NORM_SAMPLES).map(|i| self.jet(2.0 * PI * i as f64 / NORM_SAMPLES as f64))
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples().fold(0.0, |m, j| m.max(j.f.abs()))
    }

    /// `sup|f| + sup|f'|` on the sample grid.
    pub fn c1_norm(&self) -> f64 {
        let (mut f, mut df) = (0.0f64, 0.0f64);
        for j in self.samples() {
            f = f.max(j.f.abs());
            df = df.max(j.df.abs());
        }
        f + df
    }

    /// `Σ_{k≥1} (a_k² + b_k²)`.
    fn oscillation_sq(&self) -> f64 {
        (1..self.a.len())
            .map(|k| self.a[k] * self.a[k] + self.b[k] * self.b[k])
            .sum()
    }

    /// `‖f‖²_{L²(∂B)}`.
    pub fn l2_sq(&self) -> f64 {
        2.0 * PI * self.a[0] * self.a[0] + PI * self.oscillation_sq()
    }

    /// `‖∇f‖²_{L²(∂B)}`.
    pub fn grad_sq(&self) -> f64 {
        PI * (1..self.a.len())
            .map(|k| (k * k) as f64 * (self.a[k] * self.a[k] + self.b[k] * self.b[k]))
            .sum::<f64>()
    }

    /// `|B_f| = ½∫(1+f)² dθ`.
    pub fn area(&self) -> f64 {
        PI * (1.0 + self.a[0]).powi(2) + 0.5 * PI * self.oscillation_sq()
    }

    /// `(1/|B_f|)·(1/3)∫(1+f)³(cos θ, sin θ) dθ`.
    pub fn barycenter(&self) -> [f64; 2] {
        let n = (8 * self.a.len()).max(256);
        let (mut x, mut y) = (0.0, 0.0);
        for i in 0..n {
            let th = 2.0 * PI * i as f64 / n as f64;
            let r3 = (1.0 + self.value(th)).powi(3);
            x += r3 * th.cos();
            y += r3 * th.sin();
        }
        let scale = 2.0 * PI / n as f64 / 3.0 / self.area();
        [x * scale, y * scale]
    }

    /// Classical perimeter of `B_f`.
    pub fn classical_perimeter(&self) -> f64 {
        let n = nodes_for(self);
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let j = self.jet(2.0 * PI * i as f64 / n as f64);
                ((1.0 + j.f).powi(2) + j.df * j.df).sqrt()
            })
            .collect();
        2.0 * PI / n as f64 * pairwise_sum(&v)
    }

    /// Classical curvature of `∂B_f` at the point of angle `θ`.
    pub fn classical_curvature(&self, theta: f64) -> f64 {
        let j = self.jet(theta);
        let r = 1.0 + j.f;
        (r * r + 2.0 * j.df * j.df - r * j.d2f) / (r * r + j.df * j.df).powf(1.5)
    }

    /// Enforces `|B_f| = π` and `bar(B_f) = 0`.
    pub fn project_constraints(&self) -> Result<Self> {
        if self.c1_norm() > self.delta / 2.0 {
            return Err(invalid(format!(
                "C1 norm {:.4e} exceeds delta/2 before projection",
                self.c1_norm()
            )));
        }
        let mut g = self.clone();
        if g.a.len() < 2 {
            g.a.resize(2, 0.0);
            g.b.resize(2, 0.0);
        }
        let mut converged = false;
        for _ in 0..20 {
            g.fix_area()?;
            let bar = g.barycenter();
            if bar[0].hypot(bar[1]) <= 1e-10 {
                converged = true;
                break;
            }
            g.a[1] -= bar[0];
            g.b[1] -= bar[1];
        }
        if !converged {
            return Err(Error::NoConvergence("barycenter projection".into()));
        }
        let c1 = g.c1_norm();
        if c1 > g.delta {
            return Err(invalid(format!("C1 norm {c1:.4e} exceeds delta after projection")));
        }
        Ok(g)
    }

    fn fix_area(&mut self) -> Result<()> {
        let rest = 1.0 - 0.5 * self.oscillation_sq();
        if rest <= 0.0 {
            return Err(invalid("no volume-preserving constant mode"));
        }
        self.a[0] = rest.sqrt() - 1.0;
        Ok(())
    }

    /// Cells whose centers lie in `B_f`, on an `nx × ny` grid centered at 0.
    pub fn rasterize(&self, nx: usize, ny: usize, a: f64) -> Result<GridSet> {
        GridSet::from_fn(nx, ny, a, centered_origin(nx, ny, a), |x, y| {
            x.hypot(y) <= 1.0 + self.value(y.atan2(x))
        })
    }

    /// Lines `k a_k b_k`; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, delta: f64) -> Result<Self> {
        let mut modes: Vec<(usize, f64, f64)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("line {}: expected `k a_k b_k`", n + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let k: usize = fields[0].parse().map_err(|_| bad())?;
            let ak: f64 = fields[1].parse().map_err(|_| bad())?;
            let bk: f64 = fields[2].parse().map_err(|_| bad())?;
            if modes.iter().any(|m| m.0 == k) {
                return Err(Error::Parse(format!("line {}: mode {k} repeated", n + 1)));
            }
            if k == 0 && bk != 0.0 {
                return Err(Error::Parse(format!("line {}: b_0 must be zero", n + 1)));
            }
            modes.push((k, ak, bk));
        }
        Self::from_modes(&modes, delta)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in 0..self.a.len() {
            if self.a[k] != 0.0 || self.b[k] != 0.0 {
                out.push_str(&format!("{k} {:e} {:e}\n", self.a[k], self.b[k]));
            }
        }
        out
    }
}

/// Default number of angular nodes for trapezoidal sums over `∂B`.
fn nodes_for(f: &Deformation) -> usize {
    (16 * f.k_max()).max(128)
}

/// `∫_0^π g` where `g(τ) ≈ lead·τ^{−s}` as `τ → 0`, on dyadic levels
/// `[π2^{−l−1}, π2^{−l}]` cut into pieces no longer than `h_max`; the part
/// below the last level is the leading term integrated exactly.
fn graded(mut g: impl FnMut(f64) -> f64, lead: f64, s: f64, h_max: f64) -> Result<f64> {
    let rule = gauss_legendre(PIECE_NODES);
    let mut parts = Vec::with_capacity(64);
    let (mut hi, mut prev, mut last) = (PI, f64::NAN, f64::NAN);
    for _ in 0..LEVELS {
        let lo = 0.5 * hi;
        let pieces = ((hi - lo) / h_max).ceil().max(1.0) as usize;
        let step = (hi - lo) / pieces as f64;
        for p in 0..pieces {
            let (c, h) = (lo + (p as f64 + 0.5) * step, 0.5 * step);
            let mut acc = 0.0;
            for &(x, w) in rule.iter() {
                acc += w * g(c + h * x);
            }
            parts.push(acc * h);
        }
        prev = last;
        last = pairwise_sum(&parts) + lead * lo.powf(1.0 - s) / (1.0 - s);
        hi = lo;
    }
    if !last.is_finite() || (last - prev).abs() > LEVEL_TOL * last.abs() {
        return Err(Error::NoConvergence(format!(
            "graded quadrature: last levels differ by {:.3e}",
            (last - prev).abs()
        )));
    }
    Ok(last)
}

fn check_s(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("s = {s} outside (0, 1)")))
    }
}

fn piece_len(f: &Deformation) -> f64 {
    (1.0 / (f.k_max() as f64 + 1.0)).min(0.25)
}

/// `H^s_{B_f}` at the boundary point `(1 + f(θ))(cos θ, sin θ)`, from the
/// boundary form `(2/s)∫_{∂E} (x−p)·ν/|x−p|^{2+s}`.
pub fn curvature_on_deformation(f: &Deformation, s: f64, theta: f64) -> Result<f64> {
    check_s(s)?;
    let p = f.jet(theta);
    let r0 = 1.0 + p.f;
    let speed_sq = r0 * r0 + p.df * p.df;
    let kappa = (r0 * r0 + 2.0 * p.df * p.df - r0 * p.d2f) / speed_sq.powf(1.5);
    let lead = kappa * speed_sq.powf(0.5 * (1.0 - s));
    let e = -(1.0 + 0.5 * s);
    let side = |tau: f64| -> f64 {
        let q = f.jet(theta + tau);
        let r = 1.0 + q.f;
        let dr = q.f - p.f;
        let half = (0.5 * tau).sin();
        let num = r * dr + r0 * (2.0 * r * half * half - q.df * tau.sin());
        num * (dr * dr + 4.0 * r * r0 * half * half).powf(e)
    };
    let v = graded(|t| side(t) + side(-t), lead, s, piece_len(f))?;
    Ok(2.0 / s * v)
}

/// Curvature at `θ_j = 2πj/m`.
pub fn curvature_field(f: &Deformation, s: f64, m: usize) -> Result<Vec<f64>> {
    (0..m)
        .map(|j| curvature_on_deformation(f, s, 2.0 * PI * j as f64 / m as f64))
        .collect()
}

/// Mean of the curvature against `dθ/2π`.
pub fn mean_curvature_average(f: &Deformation, s: f64) -> Result<f64> {
    mean_curvature_average_with(f, s, nodes_for(f))
}

pub fn mean_curvature_average_with(f: &Deformation, s: f64, m: usize) -> Result<f64> {
    Ok(pairwise_sum(&curvature_field(f, s, m)?) / m as f64)
}

/// `μ_k(s) = ∫_0^{2π} 2(1 − cos kτ)/(2 sin(τ/2))^{2+s} dτ`.
pub fn mode_multiplier(k: usize, s: f64) -> Result<f64> {
    check_s(s)?;
    if k == 0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    let g = |t: f64| {
        let num = (0.5 * kf * t).sin();
        8.0 * num * num / (2.0 * (0.5 * t).sin()).powf(2.0 + s)
    };
    graded(g, 2.0 * kf * kf, s, (1.0 / kf).min(0.25))
}

/// `[f]²` as `π Σ μ_k (a_k² + b_k²)`.
pub fn seminorm_spectral(f: &Deformation, s: f64) -> Result<f64> {
    let mut acc = Vec::with_capacity(f.k_max());
    for k in 1..=f.k_max() {
        let c = f.a[k] * f.a[k] + f.b[k] * f.b[k];
        if c != 0.0 {
            acc.push(mode_multiplier(k, s)? * c);
        }
    }
    Ok(PI * pairwise_sum(&acc))
}

/// `[f]²` by double quadrature over the circle with chord distance.
pub fn seminorm_direct(f: &Deformation, s: f64) -> Result<f64> {
    check_s(s)?;
    let m = (4 * f.k_max() + 8).max(32);
    let h = piece_len(f);
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let th = 2.0 * PI * i as f64 / m as f64;
        let p = f.jet(th);
        let g = |t: f64| {
            let up = f.value(th + t) - p.f;
            let down = f.value(th - t) - p.f;
            (up * up + down * down) / (2.0 * (0.5 * t).sin()).powf(2.0 + s)
        };
        rows.push(graded(g, 2.0 * p.df * p.df, s, h)?);
    }
    Ok(2.0 * PI / m as f64 * pairwise_sum(&rows))
}

#[derive(Clone, Copy, Debug)]
pub struct SecondVariation {
    pub value: f64,
    /// `δ²P^s − ¼([f]² + λ₁‖f‖²)`.
    pub slack: f64,
}

/// `λ₁^s = μ_1(s)`.
pub fn first_eigenvalue(s: f64) -> Result<f64> {
    mode_multiplier(1, s)
}

pub fn second_variation(f: &Deformation, s: f64) -> Result<SecondVariation> {
    let semi = seminorm_spectral(f, s)?;
    let l1 = first_eigenvalue(s)?;
    let l2 = f.l2_sq();
    let value = semi - l1 * l2;
    Ok(SecondVariation {
        value,
        slack: value - 0.25 * (semi + l1 * l2),
    })
}

/// `∫_0^c ∫_0^c (1 + (x−y)²)^{−1−s/2}`, the near-diagonal limit of the
/// strip integrand.
fn strip_lead(c: f64, s: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    2.0 * integrate(16, 0.0, c, |u| (c - u) * (1.0 + u * u).powf(-1.0 - 0.5 * s))
}

/// `P^s(B_f)` from the decomposition into a radial part and a double
/// radial strip term.
pub fn perimeter_representation(f: &Deformation, s: f64) -> Result<f64> {
    check_s(s)?;
    let pb = ball_perimeter(s)?;
    let m = nodes_for(f);
    let radial: Vec<f64> = (0..m)
        .map(|i| (1.0 + f.value(2.0 * PI * i as f64 / m as f64)).powf(2.0 - s))
        .collect();
    let radial = pb / (2.0 * PI) * 2.0 * PI / m as f64 * pairwise_sum(&radial);
    if f.is_zero() {
        return Ok(radial);
    }
    let rule = gauss_legendre(4);
    let e = -(1.0 + 0.5 * s);
    let h = piece_len(f);
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let th = 2.0 * PI * i as f64 / m as f64;
        let p = f.jet(th);
        let v = 1.0 + p.f;
        let square = |tau: f64| -> f64 {
            let u = 1.0 + f.value(th + tau);
            let d = v - u;
            if d == 0.0 {
                return 0.0;
            }
            let half = (0.5 * tau).sin();
            let q = 4.0 * half * half;
            let mut acc = 0.0;
            for &(x, wx) in rule.iter() {
                let r = u + 0.5 * d * (1.0 + x);
                for &(y, wy) in rule.iter() {
                    let rho = u + 0.5 * d * (1.0 + y);
                    let diff = r - rho;
                    acc += wx * wy * r * rho * (diff * diff + r * rho * q).powf(e);
                }
            }
            0.25 * d * d * acc
        };
        let lead = 2.0 * v.powf(2.0 - s) * strip_lead(p.df.abs() / v, s);
        rows.push(graded(|t| square(t) + square(-t), lead, s, h)?);
    }
    let strip = 0.5 * 2.0 * PI / m as f64 * pairwise_sum(&rows);
    Ok(radial + strip)
}

#[derive(Clone, Copy, Debug)]
pub struct AlexandrovReport {
    pub s: f64,
    pub seminorm_sq: f64,
    pub l2_sq: f64,
    pub hs_norm_sq: f64,
    pub mean_curvature: f64,
    pub curvature_dev_sq: f64,
    pub ratio: f64,
    pub scaled_hs_norm_sq: f64,
    pub scaled_curvature_dev_sq: f64,
    pub scaled_ratio: f64,
}

pub fn alexandrov_ratio(f: &Deformation, s: f64) -> Result<AlexandrovReport> {
    if f.is_zero() {
        return Err(invalid("Alexandrov ratio needs a nonzero deformation"));
    }
    let seminorm_sq = seminorm_spectral(f, s)?;
    let l2_sq = f.l2_sq();
    let m = nodes_for(f);
    let field = curvature_field(f, s, m)?;
    let mean = pairwise_sum(&field) / m as f64;
    let dev: Vec<f64> = field.iter().map(|h| (h - mean) * (h - mean)).collect();
    let curvature_dev_sq = 2.0 * PI / m as f64 * pairwise_sum(&dev);
    let hs_norm_sq = seminorm_sq + l2_sq;
    let scaled_hs_norm_sq = (1.0 - s) * hs_norm_sq;
    let scaled_curvature_dev_sq = (1.0 - s) * (1.0 - s) * curvature_dev_sq;
    Ok(AlexandrovReport {
        s,
        seminorm_sq,
        l2_sq,
        hs_norm_sq,
        mean_curvature: mean,
        curvature_dev_sq,
        ratio: hs_norm_sq / curvature_dev_sq,
        scaled_hs_norm_sq,
        scaled_curvature_dev_sq,
        scaled_ratio: scaled_hs_norm_sq / scaled_curvature_dev_sq,
    })
}

/// Limit constant of `(1−s)[f]²` against `‖∇f‖²`: `(1−s)μ_k → 2k²`.
pub const SEMINORM_LIMIT_CONSTANT: f64 = 2.0;

/// Angles at which [`classical_limits`] samples the curvature.
pub const LIMIT_SAMPLE_ANGLES: usize = 8;

#[derive(Clone, Debug)]
pub struct LimitRow {
    pub s: f64,
    pub perimeter: f64,
    pub perimeter_target: f64,
    pub perimeter_error: f64,
    pub curvature: Vec<f64>,
    pub curvature_target: Vec<f64>,
    /// Largest relative error over the sample angles.
    pub curvature_error: f64,
    pub seminorm: f64,
    pub seminorm_target: f64,
    /// Relative, or absolute when the target is zero.
    pub seminorm_error: f64,
    pub lambda1: f64,
    pub lambda1_error: f64,
}

fn rel_err(v: f64, target: f64) -> f64 {
    if target == 0.0 {
        v.abs()
    } else {
        (v - target).abs() / target.abs()
    }
}

/// `(1−s)`-scaled perimeter, curvature, seminorm and `λ₁` against their
/// classical limits `2P(B_f)`, `2κ`, `2‖∇f‖²` and `2`.
pub fn classical_limits(f: &Deformation, s_list: &[f64]) -> Result<Vec<LimitRow>> {
    if s_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("s values must increase"));
    }
    let perimeter_target = 2.0 * f.classical_perimeter();
    let seminorm_target = SEMINORM_LIMIT_CONSTANT * f.grad_sq();
    let angles: Vec<f64> = (0..LIMIT_SAMPLE_ANGLES)
        .map(|j| 2.0 * PI * j as f64 / LIMIT_SAMPLE_ANGLES as f64)
        .collect();
    let curvature_target: Vec<f64> = angles.iter().map(|&t| 2.0 * f.classical_curvature(t)).collect();
    let mut rows = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let sc = 1.0 - s;
        let perimeter = sc * perimeter_representation(f, s)?;
        let curvature = angles
            .iter()
            .map(|&t| Ok(sc * curvature_on_deformation(f, s, t)?))
            .collect::<Result<Vec<f64>>>()?;
        let curvature_error = curvature
            .iter()
            .zip(&curvature_target)
            .fold(0.0f64, |m, (v, t)| m.max(rel_err(*v, *t)));
        let seminorm = sc * seminorm_spectral(f, s)?;
        let lambda1 = sc * first_eigenvalue(s)?;
        rows.push(LimitRow {
            s,
            perimeter,
            perimeter_target,
            perimeter_error: rel_err(perimeter, perimeter_target),
            curvature,
            curvature_target: curvature_target.clone(),
            curvature_error,
            seminorm,
            seminorm_target,
            seminorm_error: rel_err(seminorm, seminorm_target),
            lambda1,
            lambda1_error: rel_err(lambda1, 2.0),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_multipliers_match_reference() {
        let cases = [
            (1, 0.25, 6.484_667_883_260_498),
            (2, 0.25, 14.822_098_018_881_138),
            (8, 0.25, 81.371_464_863_811_45),
            (1, 0.5, 7.416_298_709_205_488),
            (5, 0.5, 75.736_141_363_704_53),
        ];
        for (k, s, want) in cases {
            let v = mode_multiplier(k, s).unwrap();
            assert!((v / want - 1.0).abs() < 1e-7, "k={k} s={s}: {v}");
        }
    }

    #[test]
    fn disk_curvature_is_constant() {
        let f = Deformation::zero();
        let want = 1.5 * ball_perimeter(0.5).unwrap() / (2.0 * PI);
        for th in [0.0, 0.7, 2.0] {
            let h = curvature_on_deformation(&f, 0.5, th).unwrap();
            assert!((h / want - 1.0).abs() < 1e-6, "{h} vs {want}");
        }
    }

    #[test]
    fn projection_of_cos2() {
        let eps = 0.02;
        let f = Deformation::mode(2, eps, 0.0, 0.15).unwrap();
        let g = f.project_constraints().unwrap();
        assert!((g.cos_coeffs()[0] + eps * eps / 4.0).abs() < eps.powi(4));
        assert!((g.area() - PI).abs() < 1e-10);
    }

    #[test]
    fn translation_mode_is_removed() {
        let f = Deformation::mode(1, 0.01, 0.0, DEFAULT_DELTA).unwrap();
        let g = f.project_constraints().unwrap();
        assert!(g.sup_norm() < 1e-3, "{}", g.sup_norm());
        let b = g.barycenter();
        assert!(b[0].hypot(b[1]) <= 1e-10);
    }

    #[test]
    fn parse_round_trip() {
        let f = Deformation::from_modes(&[(2, 0.01, -0.003), (5, 0.0, 0.0002)], 0.05).unwrap();
        let g = Deformation::parse(&f.to_text(), 0.05).unwrap();
        assert_eq!(f, g);
        assert!(Deformation::parse("2 0.01 0\n2 0.0 0.0", 0.05).is_err());
        assert!(Deformation::parse("2 0.01", 0.05).is_err());
    }

    #[test]
    fn c1_bound_enforced() {
        assert!(Deformation::mode(3, 0.02, 0.0, 0.05).is_err());
        assert!(Deformation::mode(3, 0.01, 0.0, 0.05).is_ok());
    }
}
