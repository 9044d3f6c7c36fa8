//! Cell-pair weights of the kernel `|x − y|^{−2−s}` and the grid quantities
//! built on them: fractional perimeter, interaction, relative perimeter and
//! fractional mean curvature.
//!
//! Curvature is reported with the convention that convex sets have positive
//! curvature: `H(x) = PV ∫ (χ_{E^c} − χ_E)(y) |x − y|^{−2−s} dy`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use crate::conv::Convolver;
use crate::error::{invalid, Error, Result};
use crate::grid::{sidecar_path, GridSet};
use crate::quadrature::{gauss_legendre, pairwise_sum};

pub const WEIGHT_TABLE_VERSION: &str = "fracflow-weights v1";

#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    pub s: f64,
    pub a: f64,
    pub nearfield_radius: usize,
    pub subdivision_depth: u32,
    pub r_cut: f64,
    /// `None` accepts whatever the cutoff implies.
    pub tail_tolerance: Option<f64>,
    /// Count everything beyond the window, and beyond the cutoff, as complement.
    pub far_field: bool,
}

impl KernelParams {
    pub fn new(s: f64, a: f64, r_cut: f64) -> Self {
        Self {
            s,
            a,
            nearfield_radius: 3,
            subdivision_depth: 3,
            r_cut,
            tail_tolerance: None,
            far_field: true,
        }
    }

    /// Cutoff at the window diagonal, so no pair of window cells is dropped.
    pub fn for_window(s: f64, a: f64, nx: usize, ny: usize) -> Self {
        Self::new(s, a, (nx as f64).hypot(ny as f64) * a)
    }
}

/// Weights for offsets `(|dx|, |dy|)` up to `reach` cells, zero beyond the cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTable {
    pub s: f64,
    pub a: f64,
    pub nearfield_radius: usize,
    pub subdivision_depth: u32,
    pub r_cut: f64,
    pub reach: usize,
    pub values: Vec<f64>,
}

impl WeightTable {
    pub fn build(p: &KernelParams) -> Self {
        let reach = (p.r_cut / p.a + 1e-9).floor() as usize;
        let lim2 = (p.r_cut / p.a) * (p.r_cut / p.a) * (1.0 + 1e-12);
        let nf2 = (p.nearfield_radius * p.nearfield_radius) as f64;
        let scale = p.a.powf(2.0 - p.s);
        let n = reach + 1;
        let mut values = vec![0.0; n * n];
        for dy in 0..n {
            for dx in 0..n {
                let d2 = (dx * dx + dy * dy) as f64;
                if d2 == 0.0 || d2 > lim2 {
                    continue;
                }
                values[dy * n + dx] = if d2 <= nf2 {
                    scale * tent_integral(dx as f64, dy as f64, p.s, p.subdivision_depth)
                } else {
                    scale * d2.powf(-0.5 * (2.0 + p.s))
                };
            }
        }
        Self {
            s: p.s,
            a: p.a,
            nearfield_radius: p.nearfield_radius,
            subdivision_depth: p.subdivision_depth,
            r_cut: p.r_cut,
            reach,
            values,
        }
    }

    #[inline]
    pub fn get(&self, dx: usize, dy: usize) -> f64 {
        if dx > self.reach || dy > self.reach {
            0.0
        } else {
            self.values[dy * (self.reach + 1) + dx]
        }
    }

    /// Sum of the weights over all nonzero offsets in the full plane.
    pub fn total(&self) -> f64 {
        let n = self.reach + 1;
        let mut acc = 0.0;
        for dy in 0..n {
            for dx in 0..n {
                let mult = match (dx == 0, dy == 0) {
                    (true, true) => 0.0,
                    (true, false) | (false, true) => 2.0,
                    (false, false) => 4.0,
                };
                acc += mult * self.values[dy * n + dx];
            }
        }
        acc
    }

    /// Little-endian f64 dump with a `key = value` sidecar at `<path>.meta`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes)?;
        let n = self.reach + 1;
        let mut meta = String::new();
        let _ = writeln!(meta, "{WEIGHT_TABLE_VERSION}");
        let _ = writeln!(meta, "s = {}", self.s);
        let _ = writeln!(meta, "a = {}", self.a);
        let _ = writeln!(meta, "dims = {n} {n}");
        let _ = writeln!(meta, "nearfield = {}", self.nearfield_radius);
        let _ = writeln!(meta, "depth = {}", self.subdivision_depth);
        let _ = writeln!(meta, "r_cut = {}", self.r_cut);
        fs::write(sidecar_path(path), meta)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta = fs::read_to_string(sidecar_path(path))?;
        let mut lines = meta.lines();
        if lines.next().map(str::trim) != Some(WEIGHT_TABLE_VERSION) {
            return Err(Error::Parse("weight table version header".into()));
        }
        let mut kv = std::collections::HashMap::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("sidecar line `{line}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Parse(format!("bad `{k}`")))
        };
        let dims: Vec<usize> = get("dims")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse("bad `dims`".into())))
            .collect::<Result<_>>()?;
        if dims.len() != 2 || dims[0] != dims[1] || dims[0] == 0 {
            return Err(Error::Parse("bad `dims`".into()));
        }
        let bytes = fs::read(path)?;
        if bytes.len() != dims[0] * dims[1] * 8 {
            return Err(Error::Parse("weight table length".into()));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            s: num("s")?,
            a: num("a")?,
            nearfield_radius: num("nearfield")? as usize,
            subdivision_depth: num("depth")? as u32,
            r_cut: num("r_cut")?,
            reach: dims[0] - 1,
            values,
        })
    }
}

/// `∫_{[−1,1]²} (1−|t₁|)(1−|t₂|) |d + t|^{−2−s} dt` for an integer offset `d ≠ 0`.
///
/// This equals the double cell integral divided by `a^{2−s}`. Quadrants whose
/// corner hits the singular point are done in polar coordinates about that
/// corner with the radial integral in closed form.
pub fn tent_integral(dx: f64, dy: f64, s: f64, depth: u32) -> f64 {
    let n = 1usize << (depth + 2).min(10);
    let rule = gauss_legendre(n);
    let mut total = 0.0;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            let corner = |d: f64, sg: f64| -> Option<f64> {
                [0.0, 1.0].into_iter().find(|&u0| d + sg * u0 == 0.0)
            };
            total += match (corner(dx, sx), corner(dy, sy)) {
                (Some(u0), Some(v0)) => singular_quadrant(u0 == 1.0, v0 == 1.0, s, &rule),
                _ => {
                    let mut acc = 0.0;
                    for &(xu, wu) in rule.iter() {
                        let u = 0.5 * (xu + 1.0);
                        let px = dx + sx * u;
                        for &(xv, wv) in rule.iter() {
                            let v = 0.5 * (xv + 1.0);
                            let py = dy + sy * v;
                            let r2 = px * px + py * py;
                            acc += wu * wv * (1.0 - u) * (1.0 - v) * r2.powf(-0.5 * (2.0 + s));
                        }
                    }
                    0.25 * acc
                }
            };
        }
    }
    total
}

/// Unit square with the singular point at the local origin. The tent factor
/// along each axis is `u` when the corner sits at the far edge of the tent,
/// `1 − u` otherwise.
fn singular_quadrant(far_u: bool, far_v: bool, s: f64, rule: &[(f64, f64)]) -> f64 {
    let (a1, b1) = if far_u { (0.0, 1.0) } else { (1.0, -1.0) };
    let (a2, b2) = if far_v { (0.0, 1.0) } else { (1.0, -1.0) };
    debug_assert!(a1 * a2 == 0.0);
    let radial = |th: f64, rmax: f64| {
        let (sn, c) = th.sin_cos();
        let lin = a1 * b2 * sn + b1 * a2 * c;
        let quad = b1 * b2 * c * sn;
        lin * rmax.powf(1.0 - s) / (1.0 - s) + quad * rmax.powf(2.0 - s) / (2.0 - s)
    };
    let h = PI / 8.0;
    let mut acc = 0.0;
    for &(x, w) in rule {
        let t1 = h * (x + 1.0);
        let t2 = PI / 4.0 + t1;
        acc += w * (radial(t1, 1.0 / t1.cos()) + radial(t2, 1.0 / t2.sin()));
    }
    acc * h
}

/// Perimeter split into the in-window interaction with the complement and
/// the contribution of everything beyond the window or the cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerimeterParts {
    pub interaction: f64,
    pub outside: f64,
}

impl PerimeterParts {
    pub fn total(&self) -> f64 {
        self.interaction + self.outside
    }
}

struct WindowCache {
    nx: usize,
    ny: usize,
    conv: Arc<Convolver>,
    ones: Arc<Vec<f64>>,
}

#[derive(Clone)]
pub struct KernelModel {
    params: KernelParams,
    table: Arc<WeightTable>,
    total: f64,
    cache: Arc<Mutex<Vec<WindowCache>>>,
}

impl std::fmt::Debug for KernelModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelModel")
            .field("params", &self.params)
            .field("reach", &self.table.reach)
            .finish()
    }
}

/// `∫_{|y|>R} |y|^{−2−s} dy = 2π R^{−s} / s`.
pub fn tail_bound(s: f64, r: f64) -> f64 {
    2.0 * PI * r.powf(-s) / s
}

impl KernelModel {
    pub fn new(params: KernelParams) -> Result<Self> {
        Self::validate(&params)?;
        let table = WeightTable::build(&params);
        Ok(Self::assemble(params, table))
    }

    /// Reuses a stored table; its metadata must match `params`.
    pub fn with_table(params: KernelParams, table: WeightTable) -> Result<Self> {
        Self::validate(&params)?;
        let fresh = WeightTable {
            values: Vec::new(),
            ..WeightTable::build(&KernelParams { r_cut: 0.0, ..params.clone() })
        };
        if table.s != params.s
            || table.a != params.a
            || table.nearfield_radius != fresh.nearfield_radius
            || table.subdivision_depth != fresh.subdivision_depth
            || table.r_cut != params.r_cut
        {
            return Err(invalid("weight table does not match kernel parameters"));
        }
        Ok(Self::assemble(params, table))
    }

    fn validate(p: &KernelParams) -> Result<()> {
        if !(p.s > 0.0 && p.s < 1.0) {
            return Err(invalid(format!("s = {} outside (0, 1)", p.s)));
        }
        if !(p.a > 0.0) {
            return Err(invalid(format!("a = {}", p.a)));
        }
        if p.nearfield_radius < 2 {
            return Err(invalid("nearfield_radius must be >= 2"));
        }
        if p.subdivision_depth < 1 {
            return Err(invalid("subdivision_depth must be >= 1"));
        }
        if !(p.r_cut >= p.a) {
            return Err(invalid(format!("r_cut = {} below one cell", p.r_cut)));
        }
        if let Some(tol) = p.tail_tolerance {
            let tb = tail_bound(p.s, p.r_cut);
            if tb > tol {
                return Err(invalid(format!(
                    "tail bound {tb} at r_cut = {} exceeds tolerance {tol}",
                    p.r_cut
                )));
            }
        }
        Ok(())
    }

    fn assemble(params: KernelParams, table: WeightTable) -> Self {
        let total = table.total();
        Self {
            params,
            table: Arc::new(table),
            total,
            cache: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn s(&self) -> f64 {
        self.params.s
    }

    pub fn a(&self) -> f64 {
        self.params.a
    }

    pub fn r_cut(&self) -> f64 {
        self.params.r_cut
    }

    pub fn table(&self) -> &WeightTable {
        &self.table
    }

    pub fn tail_bound(&self, r: f64) -> f64 {
        tail_bound(self.params.s, r)
    }

    /// Weight for an integer cell offset.
    #[inline]
    pub fn offset_weight(&self, dx: isize, dy: isize) -> f64 {
        self.table.get(dx.unsigned_abs(), dy.unsigned_abs())
    }

    pub fn pair_weight(&self, i: (usize, usize), j: (usize, usize)) -> Result<f64> {
        if i == j {
            return Err(Error::SelfInteraction);
        }
        Ok(self
            .table
            .get(i.0.abs_diff(j.0), i.1.abs_diff(j.1)))
    }

    fn check(&self, g: &GridSet) -> Result<()> {
        if g.a() != self.params.a {
            return Err(Error::CellSizeMismatch {
                kernel: self.params.a,
                grid: g.a(),
            });
        }
        Ok(())
    }

    fn window(&self, nx: usize, ny: usize) -> (Arc<Convolver>, Arc<Vec<f64>>) {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(w) = cache.iter().find(|w| w.nx == nx && w.ny == ny) {
            return (w.conv.clone(), w.ones.clone());
        }
        let table = self.table.clone();
        let conv = Arc::new(Convolver::new(nx, ny, table.reach, move |dx, dy| {
            table.get(dx, dy)
        }));
        let ones = Arc::new(conv.apply(&vec![1.0; nx * ny]));
        if cache.len() >= 4 {
            cache.remove(0);
        }
        cache.push(WindowCache {
            nx,
            ny,
            conv: conv.clone(),
            ones: ones.clone(),
        });
        (conv, ones)
    }

    /// `(K * χ_G)(p)` for every window cell.
    pub fn convolve(&self, g: &GridSet) -> Vec<f64> {
        self.window(g.nx(), g.ny()).0.apply_mask(g.mask())
    }

    /// Per-cell weight to everything beyond the window and the cutoff.
    pub fn outside_weights(&self, nx: usize, ny: usize) -> Vec<f64> {
        if !self.params.far_field {
            return vec![0.0; nx * ny];
        }
        let (_, ones) = self.window(nx, ny);
        let tail = self.params.a * self.params.a * self.tail_bound(self.params.r_cut);
        ones.iter().map(|&o| (self.total - o) + tail).collect()
    }

    pub fn perimeter_parts(&self, g: &GridSet) -> Result<PerimeterParts> {
        self.check(g)?;
        let (nx, ny) = (g.nx(), g.ny());
        let (conv, ones) = self.window(nx, ny);
        let kg = conv.apply_mask(g.mask());
        let out = self.outside_weights(nx, ny);
        let mut inter = Vec::with_capacity(g.count());
        let mut outside = Vec::with_capacity(g.count());
        for (k, &b) in g.mask().iter().enumerate() {
            if b {
                inter.push(ones[k] - kg[k]);
                outside.push(out[k]);
            }
        }
        Ok(PerimeterParts {
            interaction: crate::quadrature::pairwise_sum(&inter),
            outside: crate::quadrature::pairwise_sum(&outside),
        })
    }

    pub fn perimeter(&self, g: &GridSet) -> Result<f64> {
        Ok(self.perimeter_parts(g)?.total())
    }

    /// `L_s(G₁, G₂)` within the window and the cutoff.
    pub fn interaction(&self, g1: &GridSet, g2: &GridSet) -> Result<f64> {
        self.check(g1)?;
        self.check(g2)?;
        if !g1.same_geometry(g2) {
            return Err(Error::GeometryMismatch);
        }
        if g1.mask().iter().zip(g2.mask()).any(|(&x, &y)| x && y) {
            return Err(Error::Overlap);
        }
        let one_way = |p: &GridSet, q: &GridSet| {
            let kq = self.convolve(q);
            let terms: Vec<f64> = p
                .mask()
                .iter()
                .zip(&kq)
                .filter(|(&b, _)| b)
                .map(|(_, &v)| v)
                .collect();
            crate::quadrature::pairwise_sum(&terms)
        };
        let (x, y) = (one_way(g1, g2), one_way(g2, g1));
        Ok(0.5 * (x + y))
    }

    /// Perimeter of `G` relative to the window region `W`.
    pub fn relative_perimeter(&self, g: &GridSet, w: &GridSet) -> Result<f64> {
        let gc = g.complement();
        let g_in = g.intersection(w)?;
        let g_out = g.difference(w)?;
        let gc_in = gc.intersection(w)?;
        let gc_out = gc.difference(w)?;
        Ok(self.interaction(&g_in, &gc_in)?
            + self.interaction(&g_in, &gc_out)?
            + self.interaction(&g_out, &gc_in)?)
    }

    /// Curvature sampled at every cell center (self cell excluded).
    pub fn cell_curvature(&self, g: &GridSet) -> Result<Vec<f64>> {
        self.check(g)?;
        let (conv, ones) = self.window(g.nx(), g.ny());
        let kg = conv.apply_mask(g.mask());
        let a2 = self.params.a * self.params.a;
        Ok(if self.params.far_field {
            let tail = self.tail_bound(self.params.r_cut);
            kg.iter().map(|&v| (self.total - 2.0 * v) / a2 + tail).collect()
        } else {
            kg.iter()
                .zip(ones.iter())
                .map(|(&v, &o)| (o - 2.0 * v) / a2)
                .collect()
        })
    }

    /// Curvature at a boundary cell: the mean over its opposite-phase
    /// 4-neighbors of the face value `½(σ(p) + σ(q))`.
    pub fn curvature_at(&self, g: &GridSet, p: (usize, usize)) -> Result<f64> {
        let sigma = self.cell_curvature(g)?;
        face_curvature(g, &sigma, p)
    }

    /// Mean of `½(σ(p) + σ(q))` over all faces between a cell of `g` and a
    /// cell of its complement.
    pub fn boundary_mean_curvature(&self, g: &GridSet) -> Result<f64> {
        let sigma = self.cell_curvature(g)?;
        let mut faces = Vec::new();
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let k = g.idx(i, j);
                if i + 1 < g.nx() && g.get(i, j) != g.get(i + 1, j) {
                    faces.push(0.5 * (sigma[k] + sigma[k + 1]));
                }
                if j + 1 < g.ny() && g.get(i, j) != g.get(i, j + 1) {
                    faces.push(0.5 * (sigma[k] + sigma[k + g.nx()]));
                }
            }
        }
        if faces.is_empty() {
            return Err(Error::DegenerateSet("set has no boundary"));
        }
        Ok(pairwise_sum(&faces) / faces.len() as f64)
    }
}

/// Face-averaged curvature at `p` from a precomputed cell field.
pub fn face_curvature(g: &GridSet, sigma: &[f64], p: (usize, usize)) -> Result<f64> {
    let (i, j) = p;
    if i >= g.nx() || j >= g.ny() {
        return Err(Error::NotBoundary(i, j));
    }
    let v = g.get(i, j);
    let kp = g.idx(i, j);
    let (mut acc, mut n) = (0.0, 0usize);
    for (p2, q2) in g.neighbors4(i, j).flatten() {
        if g.get(p2, q2) != v {
            acc += 0.5 * (sigma[kp] + sigma[g.idx(p2, q2)]);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NotBoundary(i, j));
    }
    Ok(acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn far_weight_is_midpoint() {
        let k = KernelModel::new(KernelParams::new(0.5, 0.1, 2.0)).unwrap();
        let w = k.pair_weight((3, 3), (13, 3)).unwrap();
        let want = 0.1f64.powi(4) * (1.0f64).powf(-2.5);
        assert!((w - want).abs() <= 1e-14 * want);
    }

    #[test]
    fn self_pair_rejected() {
        let k = KernelModel::new(KernelParams::new(0.5, 0.1, 1.0)).unwrap();
        assert!(matches!(k.pair_weight((2, 2), (2, 2)), Err(Error::SelfInteraction)));
    }

    #[test]
    fn tail_bound_value() {
        assert!((tail_bound(0.5, 4.0) - 2.0 * PI).abs() < 1e-14);
    }

    fn midpoint_cells(dx: f64, dy: f64, s: f64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let ex = dx + (c as f64 - a as f64) * h;
                        let ey = dy + (d as f64 - b as f64) * h;
                        acc += (ex * ex + ey * ey).powf(-0.5 * (2.0 + s));
                    }
                }
            }
        }
        acc * h.powi(4)
    }

    #[test]
    fn tent_reduction_matches_extrapolated_midpoint() {
        let s = 0.5;
        let coarse = midpoint_cells(4.0, 1.0, s, 16);
        let fine = midpoint_cells(4.0, 1.0, s, 32);
        let oracle = (4.0 * fine - coarse) / 3.0;
        let t = tent_integral(4.0, 1.0, s, 3);
        assert!((t - oracle).abs() < 1e-6 * oracle, "{t} {oracle}");
    }

    #[test]
    fn singular_offsets_match_extended_precision() {
        // extended-precision values: Cartesian tanh-sinh for s <= 0.5, and for
        // s = 0.9 polar about the singular corner with a tanh-sinh angle integral
        let cases = [
            (0.5, 1.0, 0.0, 3.6470875155),
            (0.5, 1.0, 1.0, 0.676008398686),
            (0.5, 2.0, 0.0, 0.203287672146),
            (0.3, 1.0, 0.0, 2.59653024088),
            (0.9, 1.0, 0.0, 19.379525543386584),
            (0.9, 1.0, 1.0, 0.756731413012),
        ];
        for (s, dx, dy, want) in cases {
            let got = tent_integral(dx, dy, s, 3);
            assert!((got - want).abs() < 1e-8 * want, "s={s} d=({dx},{dy}) {got} {want}");
        }
    }
}
