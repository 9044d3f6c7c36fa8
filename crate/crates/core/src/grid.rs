//! Binary sets on uniform square grids.
//!
//! Cells are indexed `(i, j)` with `i` the column and `j` the row; storage is
//! row-major, `idx = j * nx + i`. The center of cell `(i, j)` sits at
//! `origin + a * (i, j)`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GridSet {
    mask: Vec<bool>,
    nx: usize,
    ny: usize,
    a: f64,
    origin: [f64; 2],
}

/// Origin that centers an `nx` by `ny` window on `(0, 0)`.
pub fn centered_origin(nx: usize, ny: usize, a: f64) -> [f64; 2] {
    [-0.5 * (nx as f64 - 1.0) * a, -0.5 * (ny as f64 - 1.0) * a]
}

impl GridSet {
    /// Builds a set and enforces the one-cell padding.
    pub fn new(nx: usize, ny: usize, a: f64, origin: [f64; 2], mask: Vec<bool>) -> Result<Self> {
        let g = Self::new_unpadded(nx, ny, a, origin, mask)?;
        if !g.is_padded() {
            return Err(Error::InvalidParameter(
                "set touches the window boundary".into(),
            ));
        }
        Ok(g)
    }

    /// Builds a set without the padding check. Used for window regions and
    /// half-plane style fixtures.
    pub fn new_unpadded(
        nx: usize,
        ny: usize,
        a: f64,
        origin: [f64; 2],
        mask: Vec<bool>,
    ) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("cell size a = {a}")));
        }
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidParameter(format!("grid {nx}x{ny} below 4x4")));
        }
        if mask.len() != nx * ny {
            return Err(Error::InvalidParameter(format!(
                "mask length {} != {nx}*{ny}",
                mask.len()
            )));
        }
        Ok(Self { mask, nx, ny, a, origin })
    }

    pub fn empty(nx: usize, ny: usize, a: f64, origin: [f64; 2]) -> Result<Self> {
        Self::new(nx, ny, a, origin, vec![false; nx * ny])
    }

    /// Marks every cell whose center satisfies `inside`.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        a: f64,
        origin: [f64; 2],
        inside: impl Fn(f64, f64) -> bool,
    ) -> Result<Self> {
        let mut mask = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let x = origin[0] + a * i as f64;
                let y = origin[1] + a * j as f64;
                mask[j * nx + i] = inside(x, y);
            }
        }
        Self::new(nx, ny, a, origin, mask)
    }

    pub fn disk(nx: usize, ny: usize, a: f64, center: [f64; 2], r: f64) -> Result<Self> {
        Self::from_fn(nx, ny, a, centered_origin(nx, ny, a), |x, y| {
            let (dx, dy) = (x - center[0], y - center[1]);
            dx * dx + dy * dy <= r * r
        })
    }

    pub fn ellipse(
        nx: usize,
        ny: usize,
        a: f64,
        center: [f64; 2],
        rx: f64,
        ry: f64,
    ) -> Result<Self> {
        Self::from_fn(nx, ny, a, centered_origin(nx, ny, a), |x, y| {
            let (u, v) = ((x - center[0]) / rx, (y - center[1]) / ry);
            u * u + v * v <= 1.0
        })
    }

    /// Same geometry, new mask, no padding check.
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        Self::new_unpadded(self.nx, self.ny, self.a, self.origin, mask)
    }

    pub(crate) fn with_mask_unchecked(&self, mask: Vec<bool>) -> Self {
        debug_assert_eq!(mask.len(), self.mask.len());
        Self { mask, nx: self.nx, ny: self.ny, a: self.a, origin: self.origin }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.mask[j * self.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        let k = self.idx(i, j);
        self.mask[k] = v;
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + self.a * i as f64,
            self.origin[1] + self.a * j as f64,
        ]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.a * self.a
    }

    pub fn barycenter(&self) -> Result<[f64; 2]> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for j in 0..self.ny {
            for i in 0..self.nx {
                if self.get(i, j) {
                    let c = self.center(i, j);
                    sx += c[0];
                    sy += c[1];
                    n += 1;
                }
            }
        }
        if n == 0 {
            return Err(Error::DegenerateSet("barycenter of empty set"));
        }
        Ok([sx / n as f64, sy / n as f64])
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.a.to_bits() == other.a.to_bits()
            && self.origin[0].to_bits() == other.origin[0].to_bits()
            && self.origin[1].to_bits() == other.origin[1].to_bits()
    }

    /// True when no cell of the outermost ring is set.
    pub fn is_padded(&self) -> bool {
        let (nx, ny) = (self.nx, self.ny);
        (0..nx).all(|i| !self.get(i, 0) && !self.get(i, ny - 1))
            && (0..ny).all(|j| !self.get(0, j) && !self.get(nx - 1, j))
    }

    /// Smallest distance, in cells, between the set and the window boundary ring.
    pub fn clearance(&self) -> usize {
        let mut best = usize::MAX;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if self.get(i, j) {
                    let d = i.min(j).min(self.nx - 1 - i).min(self.ny - 1 - j);
                    best = best.min(d);
                }
            }
        }
        best
    }

    /// Complement within the window.
    pub fn complement(&self) -> Self {
        self.with_mask_unchecked(self.mask.iter().map(|&b| !b).collect())
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a && !b)
    }

    fn zip(&self, other: &Self, op: impl Fn(bool, bool) -> bool) -> Result<Self> {
        if !self.same_geometry(other) {
            return Err(Error::GeometryMismatch);
        }
        Ok(self.with_mask_unchecked(
            self.mask.iter().zip(&other.mask).map(|(&a, &b)| op(a, b)).collect(),
        ))
    }

    /// Re-embeds the set in a window enlarged by `frac` of its size on every side.
    pub fn embed_with_margin(&self, frac: f64) -> Self {
        let mx = ((self.nx as f64 * frac).ceil() as usize).max(1);
        let my = ((self.ny as f64 * frac).ceil() as usize).max(1);
        let (nx, ny) = (self.nx + 2 * mx, self.ny + 2 * my);
        let mut mask = vec![false; nx * ny];
        for j in 0..self.ny {
            let src = &self.mask[j * self.nx..(j + 1) * self.nx];
            let dst = (j + my) * nx + mx;
            mask[dst..dst + self.nx].copy_from_slice(src);
        }
        Self {
            mask,
            nx,
            ny,
            a: self.a,
            origin: [
                self.origin[0] - mx as f64 * self.a,
                self.origin[1] - my as f64 * self.a,
            ],
        }
    }

    /// Cells with a 4-neighbor of the opposite phase; neighbors outside the
    /// window count as outside the set.
    pub fn is_boundary_cell(&self, i: usize, j: usize) -> bool {
        let v = self.get(i, j);
        self.neighbors4(i, j).any(|n| match n {
            Some((p, q)) => self.get(p, q) != v,
            None => v,
        })
    }

    pub(crate) fn neighbors4(
        &self,
        i: usize,
        j: usize,
    ) -> impl Iterator<Item = Option<(usize, usize)>> + '_ {
        const D: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        D.iter().map(move |&(dx, dy)| {
            let p = i as isize + dx;
            let q = j as isize + dy;
            if p < 0 || q < 0 || p >= self.nx as isize || q >= self.ny as isize {
                None
            } else {
                Some((p as usize, q as usize))
            }
        })
    }

    /// Writes the mask as a binary PBM (P4) with a `key = value` sidecar at
    /// `<path>.meta`. Row `j = 0` is the first row of the bitmap.
    pub fn write_pbm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let row_bytes = self.nx.div_ceil(8);
        let mut out = format!("P4\n{} {}\n", self.nx, self.ny).into_bytes();
        for j in 0..self.ny {
            let mut row = vec![0u8; row_bytes];
            for i in 0..self.nx {
                if self.get(i, j) {
                    row[i / 8] |= 0x80 >> (i % 8);
                }
            }
            out.extend_from_slice(&row);
        }
        fs::write(path, out)?;
        let mut meta = String::new();
        let _ = writeln!(meta, "a = {}", self.a);
        let _ = writeln!(meta, "origin_x = {}", self.origin[0]);
        let _ = writeln!(meta, "origin_y = {}", self.origin[1]);
        fs::write(sidecar_path(path), meta)?;
        Ok(())
    }

    /// Reads a PBM written by [`GridSet::write_pbm`]. The padding check is not applied.
    pub fn read_pbm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        let (nx, ny, body) = parse_p4_header(&bytes)?;
        let row_bytes = nx.div_ceil(8);
        if body.len() < row_bytes * ny {
            return Err(Error::Parse("truncated PBM body".into()));
        }
        let mut mask = vec![false; nx * ny];
        for j in 0..ny {
            let row = &body[j * row_bytes..(j + 1) * row_bytes];
            for i in 0..nx {
                mask[j * nx + i] = row[i / 8] & (0x80 >> (i % 8)) != 0;
            }
        }
        let meta = fs::read_to_string(sidecar_path(path))?;
        let (mut a, mut ox, mut oy) = (None, None, None);
        for line in meta.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("sidecar line `{line}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("sidecar value `{line}`")))?;
            match k.trim() {
                "a" => a = Some(v),
                "origin_x" => ox = Some(v),
                "origin_y" => oy = Some(v),
                other => return Err(Error::Parse(format!("unknown sidecar key `{other}`"))),
            }
        }
        match (a, ox, oy) {
            (Some(a), Some(ox), Some(oy)) => Self::new_unpadded(nx, ny, a, [ox, oy], mask),
            _ => Err(Error::Parse("sidecar needs a, origin_x, origin_y".into())),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn parse_p4_header(bytes: &[u8]) -> Result<(usize, usize, &[u8])> {
    let mut fields = Vec::with_capacity(3);
    let mut pos = 0;
    while fields.len() < 3 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PBM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or(""));
    }
    if fields[0] != "P4" {
        return Err(Error::Parse("not a P4 bitmap".into()));
    }
    let nx = fields[1].parse().map_err(|_| Error::Parse("PBM width".into()))?;
    let ny = fields[2].parse().map_err(|_| Error::Parse("PBM height".into()))?;
    // exactly one whitespace byte separates header and raster
    Ok((nx, ny, &bytes[(pos + 1).min(bytes.len())..]))
}

/// Signed distance between cell centers, negative inside.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    pub values: Vec<f64>,
    pub nx: usize,
    pub ny: usize,
}

impl DistanceField {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }
}

const FAR: f64 = 1e20;

/// Squared distance transform along one line (Felzenszwalb and Huttenlocher).
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

/// Squared distance (in cell units) from every cell to the nearest cell with `seed = true`.
fn squared_edt(seed: &[bool], nx: usize, ny: usize) -> Vec<f64> {
    let mut g = vec![0.0; nx * ny];
    let n = nx.max(ny);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for i in 0..nx {
        for j in 0..ny {
            f[j] = if seed[j * nx + i] { 0.0 } else { FAR };
        }
        edt_1d(&f[..ny], &mut d[..ny], &mut v, &mut z);
        for j in 0..ny {
            g[j * nx + i] = d[j];
        }
    }
    for j in 0..ny {
        f[..nx].copy_from_slice(&g[j * nx..(j + 1) * nx]);
        edt_1d(&f[..nx], &mut d[..nx], &mut v, &mut z);
        g[j * nx..(j + 1) * nx].copy_from_slice(&d[..nx]);
    }
    g
}

pub fn signed_distance(g: &GridSet) -> Result<DistanceField> {
    let n = g.count();
    if n == 0 || n == g.len() {
        return Err(Error::DegenerateSet("signed distance needs both phases"));
    }
    let to_inside = squared_edt(&g.mask, g.nx, g.ny);
    let outside: Vec<bool> = g.mask.iter().map(|&b| !b).collect();
    let to_outside = squared_edt(&outside, g.nx, g.ny);
    let values = g
        .mask
        .iter()
        .enumerate()
        .map(|(k, &inside)| {
            if inside {
                -to_outside[k].sqrt() * g.a
            } else {
                to_inside[k].sqrt() * g.a
            }
        })
        .collect();
    Ok(DistanceField { values, nx: g.nx, ny: g.ny })
}

pub fn sym_diff_volume(g1: &GridSet, g2: &GridSet) -> Result<f64> {
    if !g1.same_geometry(g2) {
        return Err(Error::GeometryMismatch);
    }
    let n = g1.mask.iter().zip(&g2.mask).filter(|(a, b)| a != b).count();
    Ok(n as f64 * g1.a * g1.a)
}

#[derive(Clone, Debug)]
pub struct Component {
    pub set: GridSet,
    pub volume: f64,
    pub diameter: f64,
}

/// 8-connected components, ordered by their first cell in storage order.
pub fn connected_components(g: &GridSet) -> Vec<Component> {
    let (nx, ny) = (g.nx, g.ny);
    let mut label = vec![usize::MAX; nx * ny];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..nx * ny {
        if !g.mask[start] || label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut cells = Vec::new();
        label[start] = id;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            cells.push(k);
            let (i, j) = ((k % nx) as isize, (k / nx) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (p, q) = (i + dx, j + dy);
                    if p < 0 || q < 0 || p >= nx as isize || q >= ny as isize {
                        continue;
                    }
                    let kk = q as usize * nx + p as usize;
                    if g.mask[kk] && label[kk] == usize::MAX {
                        label[kk] = id;
                        queue.push_back(kk);
                    }
                }
            }
        }
        let mut mask = vec![false; nx * ny];
        for &k in &cells {
            mask[k] = true;
        }
        let set = g.with_mask_unchecked(mask);
        let rim: Vec<(i64, i64)> = cells
            .iter()
            .filter(|&&k| set.is_boundary_cell(k % nx, k / nx))
            .map(|&k| ((k % nx) as i64, (k / nx) as i64))
            .collect();
        let mut d2 = 0i64;
        for (u, p) in rim.iter().enumerate() {
            for q in &rim[u + 1..] {
                d2 = d2.max((p.0 - q.0).pow(2) + (p.1 - q.1).pow(2));
            }
        }
        out.push(Component {
            volume: set.volume(),
            diameter: (d2 as f64).sqrt() * g.a,
            set,
        });
    }
    out
}

/// `min_r |G △ B_r(bar G)| / |G|` over rasterized balls on the same grid.
pub fn asphericity(g: &GridSet) -> Result<f64> {
    let c = g.barycenter()?;
    let mut cells: Vec<(f64, bool)> = (0..g.ny)
        .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            let p = g.center(i, j);
            ((p[0] - c[0]).hypot(p[1] - c[1]), g.get(i, j))
        })
        .collect();
    cells.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total = g.count() as i64;
    let mut cur = total;
    let mut best = total;
    let mut k = 0;
    while k < cells.len() {
        let r = cells[k].0;
        while k < cells.len() && cells[k].0 == r {
            cur += if cells[k].1 { -1 } else { 1 };
            k += 1;
        }
        best = best.min(cur);
    }
    Ok(best as f64 / total as f64)
}
