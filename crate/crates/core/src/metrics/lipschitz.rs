//! Per-pixel Jacobians of a coordinate model and the resulting grid-sampled
//! Lipschitz estimate.
//!
//! Channel-norm statistics are held fixed while differentiating with respect
//! to the coordinates, which makes every output row a function of its own
//! input row only. One reverse pass per output channel over a whole chunk of
//! coordinates then yields the Jacobians of all pixels in that chunk.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{NormStats, Tape};
use crate::error::{Error, Result};
use crate::models::{CoordinateModel, NormMode};
use crate::operators::coord_grid;
use crate::tensor::Tensor;

/// Rows per reverse pass; bounds tape memory on fine grids.
const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzReport {
    /// Largest per-pixel singular value.
    pub constant: f64,
    /// Coordinates `(x, y)` where the maximum is attained.
    pub argmax: (f64, f64),
    /// Pixel `(row, col)` of the maximum.
    pub argmax_pixel: (usize, usize),
    /// `σ_max` of the Jacobian at each pixel, `H x W`.
    pub field: Tensor,
}

/// Largest singular value of a `k x 2` matrix via the eigenvalues of the
/// `2 x 2` Gram matrix.
pub fn sigma_max(jac: &Tensor) -> Result<f64> {
    match *jac.shape() {
        [_, 2] => {}
        ref s => return Err(Error::InvalidArgument(format!("sigma_max: expected k x 2, got {s:?}"))),
    }
    Ok(sigma_max_rows(jac.data()))
}

fn sigma_max_rows(rows: &[f64]) -> f64 {
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for r in rows.chunks_exact(2) {
        a += r[0] * r[0];
        b += r[0] * r[1];
        c += r[1] * r[1];
    }
    let half_tr = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let disc = libm::sqrt(half_diff * half_diff + b * b);
    libm::sqrt((half_tr + disc).max(0.0))
}

/// Jacobians `d out / d x` for every coordinate row, as an `N x k_d x 2`
/// tensor. `norm` must not be [`NormMode::Batch`] for models whose rows
/// interact through normalization statistics; use [`NormMode::Frozen`]
/// with statistics from a full-grid pass.
pub fn jacobians<M: CoordinateModel + ?Sized>(model: &M, coords: &Tensor, norm: NormMode<'_>) -> Result<Tensor> {
    let n = match *coords.shape() {
        [n, 2] if n > 0 => n,
        ref s => return Err(Error::InvalidArgument(format!("jacobians: expected N x 2 coordinates, got {s:?}"))),
    };
    let k = model.out_channels();
    let mut out = Vec::with_capacity(n * k * 2);
    for start in (0..n).step_by(CHUNK) {
        let rows = CHUNK.min(n - start);
        let chunk = Tensor::new(alloc::vec![rows, 2], coords.data()[2 * start..2 * (start + rows)].to_vec())?;
        let mut tape = Tape::with_frozen_params();
        let x = tape.leaf(chunk, true);
        let rec = model.record(&mut tape, x, norm)?;
        let mut per_channel = Vec::with_capacity(k);
        for ch in 0..k {
            let mut seed = Tensor::zeros(&[rows, k]);
            seed.data_mut().iter_mut().skip(ch).step_by(k).for_each(|s| *s = 1.0);
            let grads = tape.vjp(rec.output, seed)?;
            let g = grads.get(x).cloned().unwrap_or_else(|| Tensor::zeros(&[rows, 2]));
            per_channel.push(g);
        }
        for r in 0..rows {
            for g in &per_channel {
                out.extend_from_slice(&g.data()[2 * r..2 * r + 2]);
            }
        }
    }
    Tensor::new(alloc::vec![n, k, 2], out)
}

/// Jacobian at a single coordinate, `k_d x 2`.
pub fn jacobian_at<M: CoordinateModel + ?Sized>(model: &M, x: (f64, f64), norm: NormMode<'_>) -> Result<Tensor> {
    let j = jacobians(model, &Tensor::new(alloc::vec![1, 2], alloc::vec![x.0, x.1])?, norm)?;
    j.into_reshaped(&[model.out_channels(), 2])
}

/// Per-pixel `σ_max` of the Jacobian over the `height x width` pixel-center
/// grid, with channel-norm statistics taken from a forward pass over the
/// same grid.
pub fn lipschitz_estimate<M: CoordinateModel + ?Sized>(
    model: &M,
    height: usize,
    width: usize,
) -> Result<LipschitzReport> {
    let grid = coord_grid(height, width)?;
    let (_, stats): (_, Vec<NormStats>) = model.evaluate(&grid, NormMode::Batch)?;
    let jac = jacobians(model, &grid, NormMode::Frozen(&stats))?;
    let k = model.out_channels();
    let values: Vec<f64> = jac.data().chunks_exact(2 * k).map(sigma_max_rows).collect();
    let (best, constant) =
        values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let argmax = (grid.data()[2 * best], grid.data()[2 * best + 1]);
    Ok(LipschitzReport {
        constant,
        argmax,
        argmax_pixel: (best / width, best % width),
        field: Tensor::new(alloc::vec![height, width], values)?,
    })
}
