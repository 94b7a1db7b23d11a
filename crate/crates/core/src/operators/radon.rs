//! Parallel-beam Radon transform by rotate-then-sum.
//!
//! For angle `θ_j = j π / m` the image is resampled on a rotated copy of its
//! own pixel lattice with bilinear interpolation (zero outside the image)
//! and summed along columns, giving one detector bin per column. A lattice
//! point at column `c`, row `r` reads the source position
//!
//! ```text
//! x_s = ctr + (c − ctr) cos θ − (r − ctr) sin θ
//! y_s = ctr + (c − ctr) sin θ + (r − ctr) cos θ,   ctr = (n − 1) / 2
//! ```
//!
//! The interpolation weights are stored once as a sparse matrix, so the
//! forward map and its adjoint use identical coefficients. Sums are raw
//! (no pixel-size scaling) and pixels outside the inscribed disk are kept.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::autodiff::{LinearMap, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Precomputed projection geometry for `m` angles over an `n x n` image.
#[derive(Clone, Debug)]
pub struct RadonOperator {
    size: usize,
    angles: Vec<f64>,
    row_start: Vec<usize>,
    pixel: Vec<u32>,
    weight: Vec<f64>,
}

/// Bilinear taps `(pixel index, weight)` of the source position `(xs, ys)`.
pub(crate) fn bilinear_taps(n: usize, xs: f64, ys: f64, out: &mut Vec<(u32, f64)>) {
    let x0 = libm::floor(xs);
    let y0 = libm::floor(ys);
    let (fx, fy) = (xs - x0, ys - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let n = n as i64;
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (x, y) = (x0 + dx, y0 + dy);
            let w = wy * wx;
            if w != 0.0 && (0..n).contains(&x) && (0..n).contains(&y) {
                out.push(((y * n + x) as u32, w));
            }
        }
    }
}

impl RadonOperator {
    /// Square `height x width` images only; detector bins = `height`.
    pub fn new(height: usize, width: usize, angles: usize) -> Result<Self> {
        if height != width || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "Radon operator needs a non-empty square image, got {height}x{width}"
            )));
        }
        if angles == 0 {
            return Err(Error::InvalidArgument("Radon operator needs at least one angle".into()));
        }
        let n = height;
        let angle_list: Vec<f64> = (0..angles).map(|j| j as f64 * PI / angles as f64).collect();
        let ctr = (n as f64 - 1.0) / 2.0;
        let mut row_start = Vec::with_capacity(angles * n + 1);
        let mut pixel = Vec::new();
        let mut weight = Vec::new();
        let mut taps = Vec::with_capacity(4 * n);
        row_start.push(0);
        for &theta in &angle_list {
            let (s, c) = (libm::sin(theta), libm::cos(theta));
            for bin in 0..n {
                taps.clear();
                let x = bin as f64 - ctr;
                for r in 0..n {
                    let y = r as f64 - ctr;
                    bilinear_taps(n, ctr + x * c - y * s, ctr + x * s + y * c, &mut taps);
                }
                taps.sort_unstable_by_key(|t| t.0);
                let mut last: Option<u32> = None;
                for &(p, w) in &taps {
                    if last == Some(p) {
                        *weight.last_mut().expect("merged entry exists") += w;
                    } else {
                        pixel.push(p);
                        weight.push(w);
                        last = Some(p);
                    }
                }
                row_start.push(pixel.len());
            }
        }
        Ok(Self { size: n, angles: angle_list, row_start, pixel, weight })
    }

    pub fn image_size(&self) -> usize {
        self.size
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    /// Stored sparse coefficients of one sinogram entry.
    pub fn row(&self, angle: usize, bin: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = angle * self.size + bin;
        let span = self.row_start[r]..self.row_start[r + 1];
        self.pixel[span.clone()].iter().zip(&self.weight[span]).map(|(&p, &w)| (p as usize, w))
    }

    fn check(&self, t: &Tensor, shape: [usize; 2], what: &str) -> Result<()> {
        if t.shape() != shape {
            return Err(Error::InvalidArgument(format!(
                "{what} of shape {:?} does not match operator ({shape:?})",
                t.shape()
            )));
        }
        Ok(())
    }

    /// Sinogram `m x n` of an `n x n` image.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        self.check(image, [self.size, self.size], "image")?;
        let mut out = vec![0.0; self.num_angles() * self.size];
        self.apply(image.data(), &mut out);
        Tensor::new(vec![self.num_angles(), self.size], out)
    }

    /// Back-projection with the transposed coefficients.
    pub fn adjoint(&self, sino: &Tensor) -> Result<Tensor> {
        self.check(sino, [self.num_angles(), self.size], "sinogram")?;
        let mut out = vec![0.0; self.size * self.size];
        self.apply_adjoint(sino.data(), &mut out);
        Tensor::new(vec![self.size, self.size], out)
    }

    /// Records the transform of an `n x n` image var.
    pub fn record(self: &Arc<Self>, tape: &mut Tape, image: Var) -> Result<Var> {
        tape.linear_map(self.clone(), image)
    }
}

impl LinearMap for RadonOperator {
    fn input_shape(&self) -> Vec<usize> {
        vec![self.size, self.size]
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.num_angles(), self.size]
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.row_start[r]..self.row_start[r + 1];
            *o = self.pixel[span.clone()].iter().zip(&self.weight[span]).map(|(&p, &w)| w * x[p as usize]).sum();
        }
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, &g) in y.iter().enumerate() {
            let span = self.row_start[r]..self.row_start[r + 1];
            for (&p, &w) in self.pixel[span.clone()].iter().zip(&self.weight[span]) {
                out[p as usize] += w * g;
            }
        }
    }
}
