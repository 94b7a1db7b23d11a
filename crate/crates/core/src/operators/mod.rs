//! Measurement operators and sampling utilities.

mod radon;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Philox;
use crate::tensor::Tensor;

pub use radon::RadonOperator;

/// Gaussian measurement noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
    pub stream: u64,
}

/// `sino + σ z` with `z` standard normal from the `(seed, stream)` Philox stream.
pub fn add_noise(sino: &Tensor, spec: NoiseSpec) -> Result<Tensor> {
    if !(spec.sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {}", spec.sigma)));
    }
    if spec.sigma == 0.0 {
        return Ok(sino.clone());
    }
    let mut rng = Philox::new(spec.seed, spec.stream);
    Ok(sino.map(|x| x + spec.sigma * rng.normal()))
}

fn raster_dims(image: &Tensor) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [h, w] => Ok((h, w, 1)),
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::InvalidArgument(format!("expected an H x W (x C) image, got {s:?}"))),
    }
}

/// Mean over `f x f` blocks; accepts `H x W` or `H x W x C` images.
pub fn box_downsample(image: &Tensor, factor: usize) -> Result<Tensor> {
    let (h, w, c) = raster_dims(image)?;
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::InvalidArgument(format!("downsampling factor {factor} does not divide {h}x{w}")));
    }
    let (oh, ow) = (h / factor, w / factor);
    let mut out = vec![0.0; oh * ow * c];
    crate::kernels::box_downsample(image.data(), h, w, c, factor, &mut out);
    let mut shape = image.shape().to_vec();
    shape[0] = oh;
    shape[1] = ow;
    Tensor::new(shape, out)
}

/// Nearest-neighbour (replication) upsampling by an integer factor.
pub fn replicate_upsample(image: &Tensor, factor: usize) -> Result<Tensor> {
    let (h, w, c) = raster_dims(image)?;
    if factor == 0 {
        return Err(Error::InvalidArgument("upsampling factor must be positive".into()));
    }
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for x in 0..ow {
            let src = ((y / factor) * w + x / factor) * c;
            out.extend_from_slice(&image.data()[src..src + c]);
        }
    }
    let mut shape = image.shape().to_vec();
    shape[0] = oh;
    shape[1] = ow;
    Tensor::new(shape, out)
}

/// Pixel-center coordinates `(x, y)` in `[−1, 1]²`, row-major over pixels:
/// `x = (2j + 1)/W − 1`, `y = (2i + 1)/H − 1`.
pub fn coord_grid(height: usize, width: usize) -> Result<Tensor> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!("empty grid {height}x{width}")));
    }
    let mut data = Vec::with_capacity(2 * height * width);
    for i in 0..height {
        let y = (2 * i + 1) as f64 / height as f64 - 1.0;
        for j in 0..width {
            data.push((2 * j + 1) as f64 / width as f64 - 1.0);
            data.push(y);
        }
    }
    Tensor::new(vec![height * width, 2], data)
}

/// Modified Shepp–Logan phantom with intensities in `[0, 1]`, sampled at
/// pixel centers of the `[−1, 1]²` square (y pointing up).
pub fn shepp_logan(size: usize) -> Result<Tensor> {
    // (intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
    const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
        (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
        (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
        (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
        (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
        (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
        (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
        (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
        (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
        (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
    ];
    let grid = coord_grid(size, size)?;
    let mut img = Tensor::zeros(&[size, size]);
    for (p, out) in grid.data().chunks_exact(2).zip(img.data_mut()) {
        let (x, y) = (p[0], -p[1]);
        for &(val, a, b, x0, y0, deg) in &ELLIPSES {
            let t = deg.to_radians();
            let (s, c) = (libm::sin(t), libm::cos(t));
            let (dx, dy) = (x - x0, y - y0);
            let u = dx * c + dy * s;
            let v = -dx * s + dy * c;
            if (u / a) * (u / a) + (v / b) * (v / b) <= 1.0 {
                *out += val;
            }
        }
        *out = out.clamp(0.0, 1.0);
    }
    Ok(img)
}

#[cfg(test)]
mod tests;
