use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::*;
use crate::autodiff::LinearMap;

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Philox::new(seed, 5);
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|x| *x = rng.uniform(-1.0, 1.0));
    t
}

/// Dense `(m·n) x (n·n)` projection matrix built straight from the
/// rotate-then-sum definition.
fn dense_radon(n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut mat = vec![vec![0.0; n * n]; m * n];
    let ctr = (n as f64 - 1.0) / 2.0;
    for j in 0..m {
        let th = j as f64 * PI / m as f64;
        for bin in 0..n {
            for r in 0..n {
                let (x, y) = (bin as f64 - ctr, r as f64 - ctr);
                let xs = ctr + x * th.cos() - y * th.sin();
                let ys = ctr + x * th.sin() + y * th.cos();
                let (ix, iy) = (xs.floor(), ys.floor());
                for (px, py) in [(ix, iy), (ix + 1.0, iy), (ix, iy + 1.0), (ix + 1.0, iy + 1.0)] {
                    if px < 0.0 || py < 0.0 || px >= n as f64 || py >= n as f64 {
                        continue;
                    }
                    let w = (1.0 - (xs - px).abs()) * (1.0 - (ys - py).abs());
                    mat[j * n + bin][py as usize * n + px as usize] += w;
                }
            }
        }
    }
    mat
}

#[test]
fn radon_matches_dense_oracle() {
    let (n, m) = (16, 8);
    let op = RadonOperator::new(n, n, m).unwrap();
    let mat = dense_radon(n, m);
    for seed in 0..3 {
        let img = random_tensor(&[n, n], seed);
        let sino = op.forward(&img).unwrap();
        for (r, row) in mat.iter().enumerate() {
            let expect: f64 = row.iter().zip(img.data()).map(|(a, b)| a * b).sum();
            assert!((sino.data()[r] - expect).abs() < 1e-10, "row {r}");
        }
    }
    // adjoint of a one-hot sinogram is the matching matrix row
    let mut onehot = Tensor::zeros(&[m, n]);
    onehot.data_mut()[3 * n + 5] = 1.0;
    let back = op.adjoint(&onehot).unwrap();
    for (a, b) in back.data().iter().zip(&mat[3 * n + 5]) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn radon_zero_and_linearity() {
    let op = RadonOperator::new(24, 24, 7).unwrap();
    assert!(op.forward(&Tensor::zeros(&[24, 24])).unwrap().data().iter().all(|v| *v == 0.0));
    assert!(op.adjoint(&Tensor::zeros(&[7, 24])).unwrap().data().iter().all(|v| *v == 0.0));
    let (x, y) = (random_tensor(&[24, 24], 1), random_tensor(&[24, 24], 2));
    let (a, b) = (0.7, -1.3);
    let combo = x.zip_map(&y, |p, q| a * p + b * q);
    let lhs = op.forward(&combo).unwrap();
    let rx = op.forward(&x).unwrap();
    let ry = op.forward(&y).unwrap();
    for i in 0..lhs.len() {
        assert!((lhs.data()[i] - (a * rx.data()[i] + b * ry.data()[i])).abs() < 1e-10);
    }
}

#[test]
fn radon_dot_test() {
    let op = RadonOperator::new(64, 64, 30).unwrap();
    for seed in 0..20 {
        let x = random_tensor(&[64, 64], 100 + seed);
        let s = random_tensor(&[30, 64], 200 + seed);
        let lhs = op.forward(&x).unwrap().dot(&s);
        let rhs = x.dot(&op.adjoint(&s).unwrap());
        assert!((lhs - rhs).abs() / lhs.abs().max(rhs.abs()) < 1e-8, "seed {seed}");
    }
}

fn radial(n: usize, f: impl Fn(f64) -> f64) -> Tensor {
    let ctr = (n as f64 - 1.0) / 2.0;
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let r = ((i as f64 - ctr).powi(2) + (j as f64 - ctr).powi(2)).sqrt();
            t.data_mut()[i * n + j] = f(r);
        }
    }
    t
}

#[test]
fn radon_rotation_symmetry() {
    let n = 32;
    // quarter turns map the lattice onto itself, so a pixelated disk is exact
    let disk = radial(n, |r| if r < 10.0 { 1.0 } else { 0.0 });
    let sino = RadonOperator::new(n, n, 2).unwrap().forward(&disk).unwrap();
    for b in 0..n {
        assert!((sino.at(0, b) - sino.at(1, b)).abs() < 1e-6);
    }
    // at general angles bilinear resampling is only approximately invariant:
    // its error is about h²·|f''|/8, i.e. ~0.5% of the peak for a σ = 5 px blob
    let blob = radial(n, |r| (-(r * r) / 50.0).exp());
    let sino = RadonOperator::new(n, n, 8).unwrap().forward(&blob).unwrap();
    let peak = sino.at(0, n / 2);
    let mut worst: f64 = 0.0;
    for j in 1..8 {
        for b in 0..n {
            worst = worst.max((sino.at(j, b) - sino.at(0, b)).abs() / peak);
        }
    }
    assert!(worst < 1e-2, "{worst}");
}

#[test]
fn radon_preserves_mass_on_disk_support() {
    let n = 64;
    let img = shepp_logan(n).unwrap();
    let total = img.sum();
    let sino = RadonOperator::new(n, n, 12).unwrap().forward(&img).unwrap();
    for j in 0..12 {
        let row: f64 = (0..n).map(|b| sino.at(j, b)).sum();
        assert!((row - total).abs() < 0.01 * total, "angle {j}: {row} vs {total}");
    }
}

#[test]
fn radon_rejects_mismatched_sizes() {
    assert!(RadonOperator::new(8, 6, 3).is_err());
    let op = RadonOperator::new(8, 8, 3).unwrap();
    assert!(op.forward(&Tensor::zeros(&[8, 7])).is_err());
    assert!(op.adjoint(&Tensor::zeros(&[4, 8])).is_err());
    assert_eq!(op.output_shape(), vec![3, 8]);
}

#[test]
fn noise_examples() {
    let sino = random_tensor(&[10, 10], 3);
    let same = add_noise(&sino, NoiseSpec { sigma: 0.0, seed: 1, stream: 0 }).unwrap();
    assert_eq!(same, sino);

    let n = 100_000;
    let zeros = Tensor::zeros(&[n]);
    let spec = NoiseSpec { sigma: 2.0, seed: 11, stream: 3 };
    let noisy = add_noise(&zeros, spec).unwrap();
    assert!(noisy.mean().abs() < 4.0 * 2.0 / (n as f64).sqrt());
    let var = noisy.sum_of_squares() / n as f64;
    assert!((var - 4.0).abs() < 0.1);
    assert_eq!(noisy, add_noise(&zeros, spec).unwrap());
    assert!(add_noise(&zeros, NoiseSpec { sigma: -1.0, seed: 0, stream: 0 }).is_err());
}

#[test]
fn box_downsample_examples() {
    let c = Tensor::full(&[8, 8], 0.3);
    assert!(box_downsample(&c, 4).unwrap().data().iter().all(|v| (v - 0.3).abs() < 1e-15));
    let img = Tensor::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
    assert_eq!(box_downsample(&img, 2).unwrap().data(), &[0.5]);
    assert!(box_downsample(&Tensor::zeros(&[6, 6]), 4).is_err());

    let x = random_tensor(&[5, 3, 3], 9);
    let up = replicate_upsample(&x, 4).unwrap();
    assert_eq!(up.shape(), &[20, 12, 3]);
    for (a, b) in box_downsample(&up, 4).unwrap().data().iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-15);
    }

    let y = random_tensor(&[12, 12, 2], 4);
    let d = box_downsample(&y, 3).unwrap();
    assert!((d.mean() - y.mean()).abs() < 1e-15);
}

#[test]
fn coord_grid_examples() {
    assert_eq!(coord_grid(1, 1).unwrap().data(), &[0.0, 0.0]);
    assert_eq!(coord_grid(2, 2).unwrap().data(), &[-0.5, -0.5, 0.5, -0.5, -0.5, 0.5, 0.5, 0.5]);
    let g = coord_grid(7, 5).unwrap();
    assert_eq!(g.shape(), &[35, 2]);
    assert!(g.data().iter().all(|v| v.abs() < 1.0));
    assert!(coord_grid(0, 3).is_err());
}

#[test]
fn phantom_is_normalized() {
    let p = shepp_logan(64).unwrap();
    assert!(p.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(p.max_abs() > 0.9);
    // corners lie outside the head
    assert_eq!(p.data()[0], 0.0);
}
