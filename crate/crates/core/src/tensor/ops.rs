use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{numel, Backward, BackwardContext, Tensor};
use crate::{Error, Result};

fn dim_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Dimension {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn matrix_dims(op: &'static str, t: &Tensor, other: &[usize]) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(dim_err(op, t.shape(), other)),
    }
}

/// `out[m,n] += a[m,k] * b[k,n]`, ikj loop order.
fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

struct MatMul {
    m: usize,
    k: usize,
    n: usize,
}

impl Backward for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let g = ctx.grad_output;
        let ga = ctx.needs(0).then(|| {
            // dA = dC . B^T
            let b = ctx.inputs[1].data();
            let mut ga = vec![0.0; m * k];
            for i in 0..m {
                let grow = &g[i * n..(i + 1) * n];
                for p in 0..k {
                    let brow = &b[p * n..(p + 1) * n];
                    ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                }
            }
            ga
        });
        let gb = ctx.needs(1).then(|| {
            // dB = A^T . dC
            let a = ctx.inputs[0].data();
            let mut gb = vec![0.0; k * n];
            for i in 0..m {
                let grow = &g[i * n..(i + 1) * n];
                for p in 0..k {
                    let av = a[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                        *o += av * gv;
                    }
                }
            }
            gb
        });
        vec![ga, gb]
    }
}

struct Transpose {
    rows: usize,
    cols: usize,
}

fn transpose_buf(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

impl Backward for Transpose {
    fn name(&self) -> &'static str {
        "transpose"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        // output is (cols, rows)
        vec![Some(transpose_buf(ctx.grad_output, self.cols, self.rows))]
    }
}

struct Identity(&'static str);

impl Backward for Identity {
    fn name(&self) -> &'static str {
        self.0
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        vec![Some(ctx.grad_output.to_vec())]
    }
}

struct AddBroadcast {
    inner: usize,
}

impl Backward for AddBroadcast {
    fn name(&self) -> &'static str {
        "add_broadcast"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let g = ctx.grad_output;
        let ga = ctx.needs(0).then(|| g.to_vec());
        let gb = ctx.needs(1).then(|| {
            let mut gb = vec![0.0; self.inner];
            if self.inner > 0 {
                for chunk in g.chunks(self.inner) {
                    gb.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
                }
            }
            gb
        });
        vec![ga, gb]
    }
}

struct Mul;

impl Backward for Mul {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let g = ctx.grad_output;
        let ga = ctx.needs(0).then(|| {
            let b = ctx.inputs[1].data();
            g.iter().zip(b.iter()).map(|(g, b)| g * b).collect()
        });
        let gb = ctx.needs(1).then(|| {
            let a = ctx.inputs[0].data();
            g.iter().zip(a.iter()).map(|(g, a)| g * a).collect()
        });
        vec![ga, gb]
    }
}

struct MulConst {
    factors: Vec<f64>,
    name: &'static str,
}

impl Backward for MulConst {
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        vec![Some(
            ctx.grad_output
                .iter()
                .zip(&self.factors)
                .map(|(g, f)| g * f)
                .collect(),
        )]
    }
}

struct Scale(f64);

impl Backward for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        vec![Some(ctx.grad_output.iter().map(|g| g * self.0).collect())]
    }
}

struct Relu;

impl Backward for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let x = ctx.inputs[0].data();
        vec![Some(
            ctx.grad_output
                .iter()
                .zip(x.iter())
                .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                .collect(),
        )]
    }
}

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
// 1 / sqrt(2 pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

struct Gelu;

impl Backward for Gelu {
    fn name(&self) -> &'static str {
        "gelu"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let x = ctx.inputs[0].data();
        vec![Some(
            ctx.grad_output
                .iter()
                .zip(x.iter())
                .map(|(g, &x)| {
                    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
                    let pdf = INV_SQRT_2PI * libm::exp(-0.5 * x * x);
                    g * (cdf + x * pdf)
                })
                .collect(),
        )]
    }
}

struct Sum {
    len: usize,
    scale: f64,
}

impl Backward for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        vec![Some(vec![ctx.grad_output[0] * self.scale; self.len])]
    }
}

struct ConcatLast {
    rows: usize,
    p: usize,
    q: usize,
}

impl Backward for ConcatLast {
    fn name(&self) -> &'static str {
        "concat_last"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let (p, q) = (self.p, self.q);
        let g = ctx.grad_output;
        let mut ga = Vec::with_capacity(self.rows * p);
        let mut gb = Vec::with_capacity(self.rows * q);
        for r in 0..self.rows {
            let row = &g[r * (p + q)..(r + 1) * (p + q)];
            ga.extend_from_slice(&row[..p]);
            gb.extend_from_slice(&row[p..]);
        }
        vec![
            ctx.needs(0).then_some(ga),
            ctx.needs(1).then_some(gb),
        ]
    }
}

struct SliceLast {
    rows: usize,
    width: usize,
    start: usize,
    len: usize,
}

impl Backward for SliceLast {
    fn name(&self) -> &'static str {
        "slice_last"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let mut gx = vec![0.0; self.rows * self.width];
        for r in 0..self.rows {
            let dst = &mut gx[r * self.width + self.start..r * self.width + self.start + self.len];
            dst.copy_from_slice(&ctx.grad_output[r * self.len..(r + 1) * self.len]);
        }
        vec![Some(gx)]
    }
}

struct SoftmaxRows {
    width: usize,
}

impl Backward for SoftmaxRows {
    fn name(&self) -> &'static str {
        "softmax_rows"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let y = ctx.output;
        let g = ctx.grad_output;
        let mut gx = vec![0.0; y.len()];
        for ((yr, gr), out) in y
            .chunks(self.width)
            .zip(g.chunks(self.width))
            .zip(gx.chunks_mut(self.width))
        {
            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
            for ((o, yv), gv) in out.iter_mut().zip(yr).zip(gr) {
                *o = yv * (gv - dot);
            }
        }
        vec![Some(gx)]
    }
}

struct LayerNorm {
    width: usize,
    // per row: normalized values and 1/std
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Backward for LayerNorm {
    fn name(&self) -> &'static str {
        "layer_norm"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let d = self.width;
        let g = ctx.grad_output;
        let gain = ctx.inputs[1].data();
        let gx = ctx.needs(0).then(|| {
            let mut gx = vec![0.0; g.len()];
            for (r, out) in gx.chunks_mut(d).enumerate() {
                let gr = &g[r * d..(r + 1) * d];
                let xh = &self.normalized[r * d..(r + 1) * d];
                let gxh: Vec<f64> = gr.iter().zip(gain.iter()).map(|(a, b)| a * b).collect();
                let mean_g = gxh.iter().sum::<f64>() / d as f64;
                let mean_gx = gxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                for j in 0..d {
                    out[j] = self.inv_std[r] * (gxh[j] - mean_g - xh[j] * mean_gx);
                }
            }
            gx
        });
        let ggain = ctx.needs(1).then(|| {
            let mut acc = vec![0.0; d];
            for (gr, xh) in g.chunks(d).zip(self.normalized.chunks(d)) {
                for j in 0..d {
                    acc[j] += gr[j] * xh[j];
                }
            }
            acc
        });
        let gbias = ctx.needs(2).then(|| {
            let mut acc = vec![0.0; d];
            for gr in g.chunks(d) {
                acc.iter_mut().zip(gr).for_each(|(a, b)| *a += b);
            }
            acc
        });
        vec![gx, ggain, gbias]
    }
}

struct Gather {
    ids: Vec<usize>,
    rows: usize,
    width: usize,
}

impl Backward for Gather {
    fn name(&self) -> &'static str {
        "embedding_lookup"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let d = self.width;
        let mut gt = vec![0.0; self.rows * d];
        for (k, &id) in self.ids.iter().enumerate() {
            let src = &ctx.grad_output[k * d..(k + 1) * d];
            gt[id * d..(id + 1) * d]
                .iter_mut()
                .zip(src)
                .for_each(|(a, b)| *a += b);
        }
        vec![Some(gt)]
    }
}

struct CrossEntropy {
    classes: usize,
    gold: Vec<usize>,
    probs: Vec<f64>,
}

impl Backward for CrossEntropy {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let n = self.gold.len();
        let scale = ctx.grad_output[0] / n as f64;
        let mut g: Vec<f64> = self.probs.iter().map(|p| p * scale).collect();
        for (i, &y) in self.gold.iter().enumerate() {
            g[i * self.classes + y] -= scale;
        }
        vec![Some(g)]
    }
}

struct BilinearPairs {
    n: usize,
    labels: usize,
    a: usize,
    b: usize,
}

impl Backward for BilinearPairs {
    fn name(&self) -> &'static str {
        "bilinear_pairs"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let (n, labels, da, db) = (self.n, self.labels, self.a, self.b);
        let left = ctx.inputs[0].data();
        let weight = ctx.inputs[1].data();
        let right = ctx.inputs[2].data();
        let g = ctx.grad_output;
        let mut gl = vec![0.0; n * da];
        let mut gw = vec![0.0; labels * da * db];
        let mut gr = vec![0.0; n * db];
        for i in 0..n {
            let li = &left[i * da..(i + 1) * da];
            let ri = &right[i * db..(i + 1) * db];
            for l in 0..labels {
                let go = g[i * labels + l];
                if go == 0.0 {
                    continue;
                }
                let w = &weight[l * da * db..(l + 1) * da * db];
                for p in 0..da {
                    let wrow = &w[p * db..(p + 1) * db];
                    let mut acc = 0.0;
                    for q in 0..db {
                        acc += wrow[q] * ri[q];
                        gr[i * db + q] += go * li[p] * wrow[q];
                        gw[l * da * db + p * db + q] += go * li[p] * ri[q];
                    }
                    gl[i * da + p] += go * acc;
                }
            }
        }
        vec![
            ctx.needs(0).then_some(gl),
            ctx.needs(1).then_some(gw),
            ctx.needs(2).then_some(gr),
        ]
    }
}

struct ConcatRows {
    sizes: Vec<usize>,
}

impl Backward for ConcatRows {
    fn name(&self) -> &'static str {
        "concat_rows"
    }

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>> {
        let mut offset = 0;
        self.sizes
            .iter()
            .enumerate()
            .map(|(i, &len)| {
                let g = ctx.needs(i).then(|| ctx.grad_output[offset..offset + len].to_vec());
                offset += len;
                g
            })
            .collect()
    }
}

/// Inverted-dropout multipliers: 0 with probability `p`, else `1/(1-p)`.
pub fn dropout_mask<R: Rng + ?Sized>(rng: &mut R, len: usize, p: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

impl Tensor {
    /// Matrix product of `(m,k)` and `(k,n)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = matrix_dims("matmul", self, other.shape())?;
        let (k2, n) = matrix_dims("matmul", other, self.shape())?;
        if k != k2 {
            return Err(dim_err("matmul", self.shape(), other.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(&self.data(), &other.data(), &mut out, m, k, n);
        Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            Box::new(MatMul { m, k, n }),
        )
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (rows, cols) = matrix_dims("transpose", self, &[])?;
        let out = transpose_buf(&self.data(), rows, cols);
        Tensor::from_op(
            vec![cols, rows],
            out,
            vec![self.clone()],
            Box::new(Transpose { rows, cols }),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(dim_err("reshape", self.shape(), shape));
        }
        Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(Identity("reshape")),
        )
    }

    /// Elementwise sum where `other`'s shape is a suffix of (or equal to)
    /// this tensor's shape; `other` is repeated along the leading axes.
    pub fn add_broadcast(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape(), other.shape());
        if b.len() > a.len() || a[a.len() - b.len()..] != *b {
            return Err(dim_err("add_broadcast", a, b));
        }
        let inner = other.numel();
        let bd = other.data();
        let mut out = self.to_vec();
        if inner > 0 {
            for chunk in out.chunks_mut(inner) {
                chunk.iter_mut().zip(bd.iter()).for_each(|(x, y)| *x += y);
            }
        }
        drop(bd);
        Tensor::from_op(
            a.to_vec(),
            out,
            vec![self.clone(), other.clone()],
            Box::new(AddBroadcast { inner }),
        )
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.add_broadcast(other)
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(dim_err("mul", self.shape(), other.shape()));
        }
        let out = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a * b)
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            Box::new(Mul),
        )
    }

    /// Multiplies by fixed per-element factors (no gradient for the factors).
    pub fn mul_const(&self, factors: Vec<f64>) -> Result<Tensor> {
        self.mul_const_named(factors, "mul_const")
    }

    fn mul_const_named(&self, factors: Vec<f64>, name: &'static str) -> Result<Tensor> {
        if factors.len() != self.numel() {
            return Err(dim_err(name, self.shape(), &[factors.len()]));
        }
        let out = self
            .data()
            .iter()
            .zip(&factors)
            .map(|(a, b)| a * b)
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(MulConst { factors, name }),
        )
    }

    /// Inverted dropout with drop probability `p`.
    pub fn dropout<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> Result<Tensor> {
        if p <= 0.0 {
            return Ok(self.clone());
        }
        let mask = dropout_mask(rng, self.numel(), p);
        self.mul_const_named(mask, "dropout")
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let out = self.data().iter().map(|x| x * factor).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(Scale(factor)),
        )
        .expect("shape preserved")
    }

    pub fn relu(&self) -> Tensor {
        let out = self.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], Box::new(Relu))
            .expect("shape preserved")
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&self) -> Tensor {
        let out = self.data().iter().map(|&x| gelu(x)).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], Box::new(Gelu))
            .expect("shape preserved")
    }

    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        Tensor::from_op(
            Vec::new(),
            vec![s],
            vec![self.clone()],
            Box::new(Sum {
                len: self.numel(),
                scale: 1.0,
            }),
        )
        .expect("scalar")
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1) as f64;
        let s: f64 = self.data().iter().sum::<f64>() / n;
        Tensor::from_op(
            Vec::new(),
            vec![s],
            vec![self.clone()],
            Box::new(Sum {
                len: self.numel(),
                scale: 1.0 / n,
            }),
        )
        .expect("scalar")
    }

    fn rows_and_width(&self) -> (usize, usize) {
        let width = self.shape().last().copied().unwrap_or(1);
        let rows = if width == 0 {
            numel(&self.shape()[..self.ndim().saturating_sub(1)])
        } else {
            self.numel() / width
        };
        (rows, width)
    }

    /// Concatenation along the last axis; all leading dimensions must agree.
    pub fn concat_last(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape(), other.shape());
        if a.is_empty() || a.len() != b.len() || a[..a.len() - 1] != b[..b.len() - 1] {
            return Err(dim_err("concat_last", a, b));
        }
        let (rows, p) = self.rows_and_width();
        let q = *b.last().unwrap();
        let ad = self.data();
        let bd = other.data();
        let mut out = Vec::with_capacity(rows * (p + q));
        for r in 0..rows {
            out.extend_from_slice(&ad[r * p..(r + 1) * p]);
            out.extend_from_slice(&bd[r * q..(r + 1) * q]);
        }
        drop((ad, bd));
        let mut shape = a.to_vec();
        *shape.last_mut().unwrap() = p + q;
        Tensor::from_op(
            shape,
            out,
            vec![self.clone(), other.clone()],
            Box::new(ConcatLast { rows, p, q }),
        )
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return Err(dim_err("concat_rows", &[], &[]));
        };
        let (_, width) = matrix_dims("concat_rows", first, &[])?;
        let mut rows = 0;
        let mut out = Vec::new();
        for p in parts {
            let (r, w) = matrix_dims("concat_rows", p, first.shape())?;
            if w != width {
                return Err(dim_err("concat_rows", first.shape(), p.shape()));
            }
            rows += r;
            out.extend_from_slice(&p.data());
        }
        Tensor::from_op(
            vec![rows, width],
            out,
            parts.to_vec(),
            Box::new(ConcatRows {
                sizes: parts.iter().map(Tensor::numel).collect(),
            }),
        )
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_last(&self, start: usize, len: usize) -> Result<Tensor> {
        let (rows, width) = self.rows_and_width();
        if self.ndim() == 0 || start + len > width {
            return Err(dim_err("slice_last", self.shape(), &[start, len]));
        }
        let d = self.data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&d[r * width + start..r * width + start + len]);
        }
        drop(d);
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(SliceLast {
                rows,
                width,
                start,
                len,
            }),
        )
    }

    /// Softmax over the last axis. `valid`, when given, has one flag per
    /// element; `false` entries are excluded and come out as exactly zero.
    pub fn softmax_rows(&self, valid: Option<&[bool]>) -> Result<Tensor> {
        if self.ndim() == 0 {
            return Err(dim_err("softmax_rows", self.shape(), &[]));
        }
        if let Some(v) = valid {
            if v.len() != self.numel() {
                return Err(dim_err("softmax_rows", self.shape(), &[v.len()]));
            }
        }
        let (_, width) = self.rows_and_width();
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for (r, (xr, yr)) in x.chunks(width).zip(out.chunks_mut(width)).enumerate() {
            let ok = |j: usize| valid.is_none_or(|v| v[r * width + j]);
            let max = (0..width)
                .filter(|&j| ok(j))
                .map(|j| xr[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::Numeric(format!(
                    "softmax row {r} has no valid entry"
                )));
            }
            let mut z = 0.0;
            for j in 0..width {
                if ok(j) {
                    let e = libm::exp(xr[j] - max);
                    yr[j] = e;
                    z += e;
                }
            }
            yr.iter_mut().for_each(|y| *y /= z);
        }
        drop(x);
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(SoftmaxRows { width }),
        )
    }

    /// Standardizes every vector along the last axis, then applies
    /// `gain * x + bias`.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, epsilon: f64) -> Result<Tensor> {
        let (rows, d) = self.rows_and_width();
        if self.ndim() == 0 || d < 2 || gain.shape() != [d] || bias.shape() != [d] {
            return Err(dim_err("layer_norm", self.shape(), gain.shape()));
        }
        let x = self.data();
        let gv = gain.data();
        let bv = bias.data();
        let mut normalized = vec![0.0; rows * d];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * d];
        for r in 0..rows {
            let xr = &x[r * d..(r + 1) * d];
            let mean = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / libm::sqrt(var + epsilon);
            inv_std[r] = is;
            for j in 0..d {
                let h = (xr[j] - mean) * is;
                normalized[r * d + j] = h;
                out[r * d + j] = gv[j] * h + bv[j];
            }
        }
        drop((x, gv, bv));
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gain.clone(), bias.clone()],
            Box::new(LayerNorm {
                width: d,
                normalized,
                inv_std,
            }),
        )
    }

    /// Row gather from a `(V, d)` table; backward scatter-adds into the rows
    /// that were used.
    pub fn embedding_lookup(&self, ids: &[usize]) -> Result<Tensor> {
        let (rows, width) = matrix_dims("embedding_lookup", self, &[ids.len()])?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::Index {
                what: "embedding table",
                index: bad,
                size: rows,
            });
        }
        let t = self.data();
        let mut out = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            out.extend_from_slice(&t[id * width..(id + 1) * width]);
        }
        drop(t);
        Tensor::from_op(
            vec![ids.len(), width],
            out,
            vec![self.clone()],
            Box::new(Gather {
                ids: ids.to_vec(),
                rows,
                width,
            }),
        )
    }

    /// Mean negative log-likelihood of `gold` under row-wise softmax of
    /// these `(n, k)` logits.
    pub fn cross_entropy(&self, gold: &[usize]) -> Result<Tensor> {
        let (n, k) = matrix_dims("cross_entropy", self, &[gold.len()])?;
        if n != gold.len() || n == 0 {
            return Err(dim_err("cross_entropy", self.shape(), &[gold.len()]));
        }
        if let Some(&bad) = gold.iter().find(|&&g| g >= k) {
            return Err(Error::Index {
                what: "gold class",
                index: bad,
                size: k,
            });
        }
        let x = self.data();
        let mut probs = vec![0.0; n * k];
        let mut total = 0.0;
        for i in 0..n {
            let row = &x[i * k..(i + 1) * k];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| libm::exp(v - max)).sum();
            let log_z = max + libm::log(z);
            for j in 0..k {
                probs[i * k + j] = libm::exp(row[j] - log_z);
            }
            total += log_z - row[gold[i]];
        }
        drop(x);
        Tensor::from_op(
            Vec::new(),
            vec![total / n as f64],
            vec![self.clone()],
            Box::new(CrossEntropy {
                classes: k,
                gold: gold.to_vec(),
                probs,
            }),
        )
    }

    /// Row-paired bilinear forms: for `left (n,a)`, `weight (L,a,b)` and
    /// `right (n,b)`, `out[i,l] = left[i]ᵀ · weight[l] · right[i]`.
    pub fn bilinear_pairs(left: &Tensor, weight: &Tensor, right: &Tensor) -> Result<Tensor> {
        let (n, da) = matrix_dims("bilinear_pairs", left, right.shape())?;
        let (n2, db) = matrix_dims("bilinear_pairs", right, left.shape())?;
        let [labels, wa, wb] = *weight.shape() else {
            return Err(dim_err("bilinear_pairs", weight.shape(), left.shape()));
        };
        if n != n2 || wa != da || wb != db {
            return Err(dim_err("bilinear_pairs", weight.shape(), &[n, da, n2, db]));
        }
        let l = left.data();
        let w = weight.data();
        let r = right.data();
        let mut out = vec![0.0; n * labels];
        for i in 0..n {
            let li = &l[i * da..(i + 1) * da];
            let ri = &r[i * db..(i + 1) * db];
            for lab in 0..labels {
                let wl = &w[lab * da * db..(lab + 1) * da * db];
                let mut s = 0.0;
                for p in 0..da {
                    let wrow = &wl[p * db..(p + 1) * db];
                    let inner: f64 = wrow.iter().zip(ri).map(|(a, b)| a * b).sum();
                    s += li[p] * inner;
                }
                out[i * labels + lab] = s;
            }
        }
        drop((l, w, r));
        Tensor::from_op(
            vec![n, labels],
            out,
            vec![left.clone(), weight.clone(), right.clone()],
            Box::new(BilinearPairs {
                n,
                labels,
                a: da,
                b: db,
            }),
        )
    }
}
