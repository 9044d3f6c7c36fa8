//! Linear 2-D convolution of window fields with an even, radially tabulated kernel.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Convolver {
    nx: usize,
    ny: usize,
    lx: usize,
    ly: usize,
    kernel_hat: Vec<Complex64>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

fn smooth_size(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

impl Convolver {
    /// `weight(dx, dy)` for `dx, dy >= 0`; the kernel is extended evenly and
    /// truncated to `|dx|, |dy| <= reach`.
    pub fn new(nx: usize, ny: usize, reach: usize, weight: impl Fn(usize, usize) -> f64) -> Self {
        let rx = reach.min(nx - 1);
        let ry = reach.min(ny - 1);
        let lx = smooth_size(nx + rx);
        let ly = smooth_size(ny + ry);
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(lx);
        let inv_x = planner.plan_fft_inverse(lx);
        let fwd_y = planner.plan_fft_forward(ly);
        let inv_y = planner.plan_fft_inverse(ly);
        let mut k = vec![Complex64::new(0.0, 0.0); lx * ly];
        for dy in 0..=ry {
            for dx in 0..=rx {
                let w = weight(dx, dy);
                if w == 0.0 {
                    continue;
                }
                for (sx, sy) in [(dx, dy), (lx - dx, dy), (dx, ly - dy), (lx - dx, ly - dy)] {
                    k[(sy % ly) * lx + sx % lx] = Complex64::new(w, 0.0);
                }
            }
        }
        let mut c = Self {
            nx,
            ny,
            lx,
            ly,
            kernel_hat: Vec::new(),
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
        };
        c.transform(&mut k, true);
        c.kernel_hat = k;
        c
    }

    fn transform(&self, buf: &mut [Complex64], forward: bool) {
        let (fx, fy) = if forward {
            (&self.fwd_x, &self.fwd_y)
        } else {
            (&self.inv_x, &self.inv_y)
        };
        for row in buf.chunks_exact_mut(self.lx) {
            fx.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); self.ly];
        for x in 0..self.lx {
            for y in 0..self.ly {
                col[y] = buf[y * self.lx + x];
            }
            fy.process(&mut col);
            for y in 0..self.ly {
                buf[y * self.lx + x] = col[y];
            }
        }
    }

    /// `out(p) = Σ_q K(p − q) field(q)` for every window cell `p`.
    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        assert_eq!(field.len(), self.nx * self.ny);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.lx * self.ly];
        for j in 0..self.ny {
            for i in 0..self.nx {
                buf[j * self.lx + i].re = field[j * self.nx + i];
            }
        }
        self.transform(&mut buf, true);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.transform(&mut buf, false);
        let scale = 1.0 / (self.lx * self.ly) as f64;
        let mut out = vec![0.0; self.nx * self.ny];
        for j in 0..self.ny {
            for i in 0..self.nx {
                out[j * self.nx + i] = buf[j * self.lx + i].re * scale;
            }
        }
        out
    }

    pub fn apply_mask(&self, mask: &[bool]) -> Vec<f64> {
        let f: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        self.apply(&f)
    }
}
