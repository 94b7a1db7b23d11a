use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{accumulate, LinearMap, Node, Op, Primitive, Tape, Var};
use crate::error::{Error, Result};
use crate::kernels::{self, MatRef};
use crate::tensor::Tensor;

/// Per-channel batch statistics used by channel normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        libm::log1p(libm::exp(t))
    }
}

impl Tape {
    fn two_d(&self, prim: Primitive, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Tape::shape_error(prim, format!("expected a matrix, got {s:?}"))),
        }
    }

    fn same_shape(&self, prim: Primitive, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Tape::shape_error(prim, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    /// `a · b`, with both operands matrices.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`, the layout used for `out x in` weight matrices.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.two_d(Primitive::MatMul, a)?;
        let (br, bc) = self.two_d(Primitive::MatMul, b)?;
        let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Tape::shape_error(
                Primitive::MatMul,
                format!("inner dims {k} vs {k2} (a {m}x{k}, b {br}x{bc}, transposed {trans_b})"),
            ));
        }
        let mut out = vec![0.0; m * n];
        let bm = MatRef::new(self.value(b).data(), br, bc);
        kernels::gemm(MatRef::new(self.value(a).data(), m, k), if trans_b { bm.t() } else { bm }, &mut out, 0.0);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul { a, b, trans_b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(Primitive::Add, a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(Primitive::Sub, a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| factor * x);
        self.push(value, Op::Scale(a, factor), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        self.push(value, Op::Softplus(a), &[a])
    }

    pub fn sin(&mut self, a: Var) -> Var {
        if !self.needs(a) {
            let value = self.value(a).map(libm::sin);
            return self.push(value, Op::Sin(a, None), &[a]);
        }
        // one argument reduction serves both the value and the derivative
        let x = self.value(a);
        let mut sin = Vec::with_capacity(x.len());
        let mut cos = Vec::with_capacity(x.len());
        for &v in x.data() {
            let (s, c) = libm::sincos(v);
            sin.push(s);
            cos.push(c);
        }
        let value = Tensor::new(x.shape().to_vec(), sin).expect("shape preserved");
        self.push(value, Op::Sin(a, Some(cos)), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a), &[a])
    }

    /// `‖a‖²` as a one-element tensor.
    pub fn sum_of_squares(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum_of_squares());
        self.push(value, Op::SumOfSquares(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).mean());
        self.push(value, Op::Mean(a), &[a])
    }

    /// Adds a length-`k` row to every row of an `N x k` matrix.
    pub fn broadcast_add(&mut self, a: Var, row: Var) -> Result<Var> {
        let (n, k) = self.two_d(Primitive::BroadcastAdd, a)?;
        let r = self.value(row);
        if r.len() != k {
            return Err(Tape::shape_error(
                Primitive::BroadcastAdd,
                format!("row of {} entries added to {n}x{k}", r.len()),
            ));
        }
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_exact_mut(k) {
            for (d, b) in chunk.iter_mut().zip(r.data()) {
                *d += b;
            }
        }
        let value = Tensor::new(vec![n, k], data)?;
        Ok(self.push(value, Op::BroadcastAdd { a, row }, &[a, row]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape).map_err(|_| {
            Tape::shape_error(Primitive::Reshape, format!("cannot view {:?} as {shape:?}", self.shape(a)))
        })?;
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    /// Channel normalization of an `N x k` matrix over its `N` rows.
    ///
    /// Column `j` becomes `γ_j (x_j − μ_j) / sqrt(σ²_j + eps) + β_j` with the
    /// column mean and biased variance. With `frozen` statistics, `μ` and `σ²`
    /// are taken as constants instead of being computed from the batch.
    pub fn channel_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        frozen: Option<&NormStats>,
    ) -> Result<(Var, NormStats)> {
        let (n, k) = self.two_d(Primitive::ChannelNorm, x)?;
        if n == 0 {
            return Err(Error::EmptyBatch("channel_norm"));
        }
        if self.value(gamma).len() != k || self.value(beta).len() != k {
            return Err(Tape::shape_error(
                Primitive::ChannelNorm,
                format!(
                    "{k} channels but gamma has {} and beta {} entries",
                    self.value(gamma).len(),
                    self.value(beta).len()
                ),
            ));
        }
        let xs = self.value(x).data();
        let stats = match frozen {
            Some(s) => {
                if s.mean.len() != k || s.var.len() != k {
                    return Err(Tape::shape_error(
                        Primitive::ChannelNorm,
                        format!("frozen statistics for {} channels, input has {k}", s.mean.len()),
                    ));
                }
                s.clone()
            }
            None => column_stats(xs, n, k),
        };
        let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / libm::sqrt(v + eps)).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; n * k];
        let mut out = vec![0.0; n * k];
        for ((xr, hr), or) in xs.chunks_exact(k).zip(xhat.chunks_exact_mut(k)).zip(out.chunks_exact_mut(k)) {
            for j in 0..k {
                let h = (xr[j] - stats.mean[j]) * inv_std[j];
                hr[j] = h;
                or[j] = g[j] * h + b[j];
            }
        }
        let value = Tensor::new(vec![n, k], out)?;
        let op = Op::ChannelNorm { x, gamma, beta, xhat, inv_std, frozen: frozen.is_some() };
        Ok((self.push(value, op, &[x, gamma, beta]), stats))
    }

    /// Bilinear 2x upsampling of an `(h·w) x c` raster (half-pixel centers).
    pub fn bilinear_upsample(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let (n, c) = self.two_d(Primitive::BilinearUpsample, x)?;
        if n != h * w || n == 0 {
            return Err(Tape::shape_error(
                Primitive::BilinearUpsample,
                format!("{n} rows cannot hold a {h}x{w} raster"),
            ));
        }
        let mut out = vec![0.0; 4 * n * c];
        kernels::upsample2x(self.value(x).data(), h, w, c, &mut out);
        let value = Tensor::new(vec![4 * n, c], out)?;
        Ok(self.push(value, Op::Upsample { x, h, w }, &[x]))
    }

    /// Mean over `f x f` blocks of an `(h·w) x c` raster.
    pub fn downsample_box(&mut self, x: Var, h: usize, w: usize, f: usize) -> Result<Var> {
        let (n, c) = self.two_d(Primitive::DownsampleBox, x)?;
        if n != h * w || f == 0 || !h.is_multiple_of(f) || !w.is_multiple_of(f) {
            return Err(Tape::shape_error(
                Primitive::DownsampleBox,
                format!("{n} rows as {h}x{w} raster with factor {f}"),
            ));
        }
        let m = (h / f) * (w / f);
        let mut out = vec![0.0; m * c];
        kernels::box_downsample(self.value(x).data(), h, w, c, f, &mut out);
        let value = Tensor::new(vec![m, c], out)?;
        Ok(self.push(value, Op::Downsample { x, h, w, f }, &[x]))
    }

    /// Applies a fixed linear map (the Radon transform in practice).
    pub fn linear_map(&mut self, map: Arc<dyn LinearMap>, x: Var) -> Result<Var> {
        let expected = map.input_shape();
        if self.shape(x) != expected.as_slice() {
            return Err(Tape::shape_error(
                Primitive::RadonApply,
                format!("operator expects {expected:?}, got {:?}", self.shape(x)),
            ));
        }
        let out_shape = map.output_shape();
        let mut out = vec![0.0; out_shape.iter().product()];
        map.apply(self.value(x).data(), &mut out);
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::Linear { x, map }, &[x]))
    }
}

pub(crate) fn column_stats(xs: &[f64], n: usize, k: usize) -> NormStats {
    let mut mean = vec![0.0; k];
    for row in xs.chunks_exact(k) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; k];
    for row in xs.chunks_exact(k) {
        for j in 0..k {
            let d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    NormStats { mean, var }
}

fn give(tape: &Tape, pending: &mut [Option<Tensor>], var: Var, g: Tensor) {
    if tape.needs(var) {
        accumulate(&mut pending[var.0], g);
    }
}

fn like(tape: &Tape, var: Var, data: Vec<f64>) -> Tensor {
    Tensor::new(tape.shape(var).to_vec(), data).expect("gradient matches input shape")
}

/// Propagates `g = d(root)/d(node)` into the node's inputs.
pub(super) fn backprop(tape: &Tape, node: &Node, g: Tensor, pending: &mut [Option<Tensor>]) {
    let gd = g.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b, trans_b } => {
            let (a, b, trans_b) = (*a, *b, *trans_b);
            let av = tape.value(a);
            let bv = tape.value(b);
            let (m, k) = (av.shape()[0], av.shape()[1]);
            let (br, bc) = (bv.shape()[0], bv.shape()[1]);
            let n = if trans_b { br } else { bc };
            let gm = MatRef::new(gd, m, n);
            let bm = MatRef::new(bv.data(), br, bc);
            if tape.needs(a) {
                // dA = G Bᵀ, or G B when b was used transposed
                let mut da = vec![0.0; m * k];
                kernels::gemm(gm, if trans_b { bm } else { bm.t() }, &mut da, 0.0);
                give(tape, pending, a, like(tape, a, da));
            }
            if tape.needs(b) {
                let am = MatRef::new(av.data(), m, k);
                let mut db = vec![0.0; br * bc];
                if trans_b {
                    kernels::gemm(gm.t(), am, &mut db, 0.0);
                } else {
                    kernels::gemm(am.t(), gm, &mut db, 0.0);
                }
                give(tape, pending, b, like(tape, b, db));
            }
        }
        Op::Add(a, b) => {
            give(tape, pending, *b, g.clone());
            give(tape, pending, *a, g);
        }
        Op::Sub(a, b) => {
            if tape.needs(*b) {
                give(tape, pending, *b, g.map(|x| -x));
            }
            give(tape, pending, *a, g);
        }
        Op::Scale(a, c) => {
            let c = *c;
            give(tape, pending, *a, g.map(|x| c * x));
        }
        Op::Relu(a) => {
            let y = node.value.data();
            let d = gd.iter().zip(y).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect();
            give(tape, pending, *a, like(tape, *a, d));
        }
        Op::Softplus(a) => {
            let x = tape.value(*a).data();
            let d = gd.iter().zip(x).map(|(g, x)| g * sigmoid(*x)).collect();
            give(tape, pending, *a, like(tape, *a, d));
        }
        Op::Sin(a, cos) => {
            let cos = cos.as_ref().expect("sin input needs a gradient");
            let d = gd.iter().zip(cos).map(|(g, c)| g * c).collect();
            give(tape, pending, *a, like(tape, *a, d));
        }
        Op::Sigmoid(a) => {
            let y = node.value.data();
            let d = gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
            give(tape, pending, *a, like(tape, *a, d));
        }
        Op::SumOfSquares(a) => {
            let s = 2.0 * gd[0];
            give(tape, pending, *a, tape.value(*a).map(|x| s * x));
        }
        Op::Mean(a) => {
            let v = tape.value(*a);
            let s = gd[0] / v.len() as f64;
            give(tape, pending, *a, Tensor::full(v.shape(), s));
        }
        Op::BroadcastAdd { a, row } => {
            if tape.needs(*row) {
                let k = tape.value(*row).len();
                let mut sums = vec![0.0; k];
                for chunk in gd.chunks_exact(k) {
                    for (s, x) in sums.iter_mut().zip(chunk) {
                        *s += x;
                    }
                }
                give(tape, pending, *row, like(tape, *row, sums));
            }
            give(tape, pending, *a, g);
        }
        Op::Reshape(a) => {
            let t = g.into_reshaped(tape.shape(*a)).expect("reshape preserves length");
            give(tape, pending, *a, t);
        }
        Op::ChannelNorm { x, gamma, beta, xhat, inv_std, frozen } => {
            let k = inv_std.len();
            let n = gd.len() / k;
            let gam = tape.value(*gamma).data();
            let mut dgamma = vec![0.0; k];
            let mut dbeta = vec![0.0; k];
            for (gr, hr) in gd.chunks_exact(k).zip(xhat.chunks_exact(k)) {
                for j in 0..k {
                    dgamma[j] += gr[j] * hr[j];
                    dbeta[j] += gr[j];
                }
            }
            if tape.needs(*x) {
                let mut dx = vec![0.0; n * k];
                if *frozen {
                    for (dr, gr) in dx.chunks_exact_mut(k).zip(gd.chunks_exact(k)) {
                        for j in 0..k {
                            dr[j] = gr[j] * gam[j] * inv_std[j];
                        }
                    }
                } else {
                    // dx = inv/N (N dxhat − Σ dxhat − xhat Σ dxhat·xhat),
                    // where dxhat = γ g, so the column sums are γ·dβ and γ·dγ.
                    let nf = n as f64;
                    for ((dr, gr), hr) in dx.chunks_exact_mut(k).zip(gd.chunks_exact(k)).zip(xhat.chunks_exact(k)) {
                        for j in 0..k {
                            dr[j] = gam[j] * inv_std[j] / nf * (nf * gr[j] - dbeta[j] - hr[j] * dgamma[j]);
                        }
                    }
                }
                give(tape, pending, *x, like(tape, *x, dx));
            }
            if tape.needs(*gamma) {
                give(tape, pending, *gamma, like(tape, *gamma, dgamma));
            }
            if tape.needs(*beta) {
                give(tape, pending, *beta, like(tape, *beta, dbeta));
            }
        }
        Op::Upsample { x, h, w } => {
            let c = tape.value(*x).shape()[1];
            let mut dx = vec![0.0; h * w * c];
            kernels::upsample2x_adjoint(gd, *h, *w, c, &mut dx);
            give(tape, pending, *x, like(tape, *x, dx));
        }
        Op::Downsample { x, h, w, f } => {
            let c = tape.value(*x).shape()[1];
            let mut dx = vec![0.0; h * w * c];
            kernels::box_downsample_adjoint(gd, *h, *w, c, *f, &mut dx);
            give(tape, pending, *x, like(tape, *x, dx));
        }
        Op::Linear { x, map } => {
            let mut dx = vec![0.0; tape.value(*x).len()];
            map.apply_adjoint(gd, &mut dx);
            give(tape, pending, *x, like(tape, *x, dx));
        }
    }
}
