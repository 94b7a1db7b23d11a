//! Raw numeric kernels shared by the tape primitives.

/// Row-major matrix operand, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols, transposed: false }
    }

    pub fn t(self) -> Self {
        Self { transposed: !self.transposed, ..self }
    }

    /// Logical (rows, cols) after transposition.
    pub fn dims(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = beta * out + a * b` with `out` row-major `m x n`.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, out: &mut [f64], beta: f64) {
    let (m, k) = a.dims();
    let (k2, n) = b.dims();
    assert_eq!(k, k2, "gemm inner dimensions");
    assert_eq!(out.len(), m * n, "gemm output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: strides and extents describe in-bounds views of the slices,
    // checked by the MatRef constructor and the assertions above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Interpolation taps for 2x bilinear upsampling with half-pixel centers
/// (align-corners false). Returns `(lo, hi, w_lo, w_hi)` per output index.
pub(crate) fn upsample_taps(n: usize) -> alloc::vec::Vec<(usize, usize, f64, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) * 0.5 - 0.5).max(0.0);
            let lo = (libm::floor(src) as usize).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            let w_hi = src - lo as f64;
            (lo, hi, 1.0 - w_hi, w_hi)
        })
        .collect()
}

/// Bilinear 2x upsampling of an `h x w` raster with `c` interleaved channels.
pub(crate) fn upsample2x(x: &[f64], h: usize, w: usize, c: usize, out: &mut [f64]) {
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let ow = 2 * w;
    for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
        for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
            let dst = &mut out[(oy * ow + ox) * c..][..c];
            let taps = [
                (y0 * w + x0, wy0 * wx0),
                (y0 * w + x1, wy0 * wx1),
                (y1 * w + x0, wy1 * wx0),
                (y1 * w + x1, wy1 * wx1),
            ];
            dst.iter_mut().for_each(|v| *v = 0.0);
            for (idx, wt) in taps {
                if wt != 0.0 {
                    let src = &x[idx * c..][..c];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += wt * s;
                    }
                }
            }
        }
    }
}

/// Adjoint of [`upsample2x`]: accumulates into `grad_in` (`h x w x c`).
pub(crate) fn upsample2x_adjoint(g: &[f64], h: usize, w: usize, c: usize, grad_in: &mut [f64]) {
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let ow = 2 * w;
    for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
        for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
            let src = &g[(oy * ow + ox) * c..][..c];
            let taps = [
                (y0 * w + x0, wy0 * wx0),
                (y0 * w + x1, wy0 * wx1),
                (y1 * w + x0, wy1 * wx0),
                (y1 * w + x1, wy1 * wx1),
            ];
            for (idx, wt) in taps {
                if wt != 0.0 {
                    let dst = &mut grad_in[idx * c..][..c];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += wt * s;
                    }
                }
            }
        }
    }
}

/// Mean over `f x f` blocks of an `h x w x c` raster.
pub(crate) fn box_downsample(x: &[f64], h: usize, w: usize, c: usize, f: usize, out: &mut [f64]) {
    let (oh, ow) = (h / f, w / f);
    let norm = 1.0 / (f * f) as f64;
    out.iter_mut().for_each(|v| *v = 0.0);
    for y in 0..oh * f {
        for xc in 0..ow * f {
            let dst = &mut out[((y / f) * ow + xc / f) * c..][..c];
            let src = &x[(y * w + xc) * c..][..c];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    out.iter_mut().for_each(|v| *v *= norm);
}

/// Adjoint of [`box_downsample`], accumulating into `grad_in`.
pub(crate) fn box_downsample_adjoint(g: &[f64], h: usize, w: usize, c: usize, f: usize, grad_in: &mut [f64]) {
    let ow = w / f;
    let norm = 1.0 / (f * f) as f64;
    for y in 0..h {
        for xc in 0..w {
            let src = &g[((y / f) * ow + xc / f) * c..][..c];
            let dst = &mut grad_in[(y * w + xc) * c..][..c];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += norm * s;
            }
        }
    }
}
