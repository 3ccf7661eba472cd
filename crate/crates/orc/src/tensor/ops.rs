//! Elementwise, reduction, and linear-algebra ops with their backward rules.
//!
//! Broadcasting follows the usual rightmost-aligned convention: shapes are
//! padded on the left with 1s and a dimension of size 1 expands to match.
//! Gradients of broadcast operands are summed back down to the operand shape.

use super::{BackwardFn, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da != db && da != 1 && db != 1 {
            return Err(Error::broadcast(format!(
                "shapes {a:?} and {b:?} are not broadcast-compatible"
            )));
        }
        out[i] = da.max(db);
    }
    Ok(out)
}

fn pad_left(shape: &[usize], rank: usize) -> Vec<usize> {
    let mut padded = vec![1usize; rank];
    padded[rank - shape.len()..].copy_from_slice(shape);
    padded
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Expands `data` of `shape` to the broadcast `out_shape`.
fn expand_to(data: &[f64], shape: &[usize], out_shape: &[usize]) -> Vec<f64> {
    if shape == out_shape {
        return data.to_vec();
    }
    let rank = out_shape.len();
    let padded = pad_left(shape, rank);
    let src_strides = row_major_strides(&padded);
    let numel: usize = out_shape.iter().product();
    let mut out = vec![0.0; numel];
    let mut coords = vec![0usize; rank];
    for slot in out.iter_mut() {
        let mut src = 0;
        for d in 0..rank {
            if padded[d] != 1 {
                src += coords[d] * src_strides[d];
            }
        }
        *slot = data[src];
        for d in (0..rank).rev() {
            coords[d] += 1;
            if coords[d] < out_shape[d] {
                break;
            }
            coords[d] = 0;
        }
    }
    out
}

/// Sums `grad` of `grad_shape` down to `shape` (the inverse of broadcasting).
pub(crate) fn reduce_to_shape(grad: &[f64], grad_shape: &[usize], shape: &[usize]) -> Vec<f64> {
    if grad_shape == shape {
        return grad.to_vec();
    }
    let rank = grad_shape.len();
    let padded = pad_left(shape, rank);
    let dst_strides = row_major_strides(&padded);
    let numel: usize = shape.iter().product();
    let mut out = vec![0.0; numel];
    let mut coords = vec![0usize; rank];
    for g in grad {
        let mut dst = 0;
        for d in 0..rank {
            if padded[d] != 1 {
                dst += coords[d] * dst_strides[d];
            }
        }
        out[dst] += g;
        for d in (0..rank).rev() {
            coords[d] += 1;
            if coords[d] < grad_shape[d] {
                break;
            }
            coords[d] = 0;
        }
    }
    out
}

impl Tensor {
    fn binary(&self, other: &Tensor, kind: BinaryKind) -> Result<Tensor> {
        let a_shape = self.shape();
        let b_shape = other.shape();
        let out_shape = broadcast_shape(&a_shape, &b_shape)?;
        let a_exp = expand_to(&self.values(), &a_shape, &out_shape);
        let b_exp = expand_to(&other.values(), &b_shape, &out_shape);
        if kind == BinaryKind::Div && b_exp.iter().any(|v| *v == 0.0) {
            return Err(Error::domain("division by zero"));
        }
        let data: Vec<f64> = a_exp
            .iter()
            .zip(&b_exp)
            .map(|(x, y)| match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
                BinaryKind::Div => x / y,
            })
            .collect();
        let (a, b) = (self.clone(), other.clone());
        let grad_shape = out_shape.clone();
        Ok(Tensor::from_op(data, out_shape, &[self, other], move || {
            Box::new(move |dout: &[f64]| {
                if a.requires_grad() {
                    let da: Vec<f64> = match kind {
                        BinaryKind::Add | BinaryKind::Sub => dout.to_vec(),
                        BinaryKind::Mul => dout.iter().zip(&b_exp).map(|(d, y)| d * y).collect(),
                        BinaryKind::Div => dout.iter().zip(&b_exp).map(|(d, y)| d / y).collect(),
                    };
                    a.accumulate_grad(&reduce_to_shape(&da, &grad_shape, &a.shape()));
                }
                if b.requires_grad() {
                    let db: Vec<f64> = match kind {
                        BinaryKind::Add => dout.to_vec(),
                        BinaryKind::Sub => dout.iter().map(|d| -d).collect(),
                        BinaryKind::Mul => dout.iter().zip(&a_exp).map(|(d, x)| d * x).collect(),
                        BinaryKind::Div => dout
                            .iter()
                            .zip(a_exp.iter().zip(&b_exp))
                            .map(|(d, (x, y))| -d * x / (y * y))
                            .collect(),
                    };
                    b.accumulate_grad(&reduce_to_shape(&db, &grad_shape, &b.shape()));
                }
            }) as BackwardFn
        }))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinaryKind::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinaryKind::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinaryKind::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinaryKind::Div)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        let data = self.values().iter().map(|v| v + s).collect();
        let a = self.clone();
        Tensor::from_op(data, self.shape(), &[self], move || {
            Box::new(move |dout: &[f64]| a.accumulate_grad(dout)) as BackwardFn
        })
    }

    pub fn mul_scalar(&self, s: f64) -> Tensor {
        let data = self.values().iter().map(|v| v * s).collect();
        let a = self.clone();
        Tensor::from_op(data, self.shape(), &[self], move || {
            Box::new(move |dout: &[f64]| {
                let da: Vec<f64> = dout.iter().map(|d| d * s).collect();
                a.accumulate_grad(&da);
            }) as BackwardFn
        })
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    pub fn relu(&self) -> Tensor {
        let input = self.values();
        let data = input.iter().map(|v| v.max(0.0)).collect();
        let a = self.clone();
        Tensor::from_op(data, self.shape(), &[self], move || {
            Box::new(move |dout: &[f64]| {
                let da: Vec<f64> = dout
                    .iter()
                    .zip(&input)
                    .map(|(d, x)| if *x > 0.0 { *d } else { 0.0 })
                    .collect();
                a.accumulate_grad(&da);
            }) as BackwardFn
        })
    }

    pub fn exp(&self) -> Tensor {
        let out: Vec<f64> = self.values().iter().map(|v| v.exp()).collect();
        let a = self.clone();
        let out_copy = out.clone();
        Tensor::from_op(out, self.shape(), &[self], move || {
            Box::new(move |dout: &[f64]| {
                let da: Vec<f64> = dout.iter().zip(&out_copy).map(|(d, y)| d * y).collect();
                a.accumulate_grad(&da);
            }) as BackwardFn
        })
    }

    pub fn log(&self) -> Result<Tensor> {
        let input = self.values();
        if input.iter().any(|v| *v <= 0.0) {
            return Err(Error::domain("log of a non-positive value"));
        }
        let data = input.iter().map(|v| v.ln()).collect();
        let a = self.clone();
        Ok(Tensor::from_op(data, self.shape(), &[self], move || {
            Box::new(move |dout: &[f64]| {
                let da: Vec<f64> = dout.iter().zip(&input).map(|(d, x)| d / x).collect();
                a.accumulate_grad(&da);
            }) as BackwardFn
        }))
    }

    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor> {
        let numel: usize = new_shape.iter().product();
        if numel != self.numel() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape(),
                self.numel(),
                new_shape,
                numel
            )));
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            self.values(),
            new_shape.to_vec(),
            &[self],
            move || Box::new(move |dout: &[f64]| a.accumulate_grad(dout)) as BackwardFn,
        ))
    }

    /// Selects rows along axis 0, duplicates allowed.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let shape = self.shape();
        if shape.is_empty() {
            return Err(Error::shape("gather_rows on a scalar"));
        }
        let rows = shape[0];
        let row_len: usize = shape[1..].iter().product();
        if let Some(bad) = indices.iter().find(|i| **i >= rows) {
            return Err(Error::shape(format!(
                "gather index {bad} out of range for {rows} rows"
            )));
        }
        let data = self.values();
        let mut out = Vec::with_capacity(indices.len() * row_len);
        for &i in indices {
            out.extend_from_slice(&data[i * row_len..(i + 1) * row_len]);
        }
        let mut out_shape = shape.clone();
        out_shape[0] = indices.len();
        let a = self.clone();
        let idx = indices.to_vec();
        let parent_numel = self.numel();
        Ok(Tensor::from_op(out, out_shape, &[self], move || {
            Box::new(move |dout: &[f64]| {
                let mut da = vec![0.0; parent_numel];
                for (slot, &i) in idx.iter().enumerate() {
                    let src = &dout[slot * row_len..(slot + 1) * row_len];
                    for (d, s) in da[i * row_len..(i + 1) * row_len].iter_mut().zip(src) {
                        *d += s;
                    }
                }
                a.accumulate_grad(&da);
            }) as BackwardFn
        }))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let a_shape = self.shape();
        let b_shape = other.shape();
        if a_shape.len() != 2 || b_shape.len() != 2 {
            return Err(Error::shape(format!(
                "matmul requires rank-2 operands, got {a_shape:?} and {b_shape:?}"
            )));
        }
        let (m, k) = (a_shape[0], a_shape[1]);
        let (k2, n) = (b_shape[0], b_shape[1]);
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dimensions differ: {a_shape:?} vs {b_shape:?}"
            )));
        }
        let a_data = self.values();
        let b_data = other.values();
        let out = mm(&a_data, &b_data, m, k, n);
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            vec![m, n],
            &[self, other],
            move || {
                Box::new(move |dout: &[f64]| {
                    if a.requires_grad() {
                        a.accumulate_grad(&mm_nt(dout, &b_data, m, n, k));
                    }
                    if b.requires_grad() {
                        b.accumulate_grad(&mm_tn(&a_data, dout, m, k, n));
                    }
                }) as BackwardFn
            },
        ))
    }

    fn reduce(
        &self,
        axis: Option<usize>,
        keepdims: bool,
        kind: ReduceKind,
    ) -> Result<Tensor> {
        let shape = self.shape();
        let data = self.values();
        match axis {
            None => {
                if data.is_empty() {
                    return Err(Error::shape("reduce over an empty tensor"));
                }
                let (value, argmax) = fold_all(&data, kind);
                let a = self.clone();
                let n = data.len();
                Ok(Tensor::from_op(vec![value], Vec::new(), &[self], move || {
                    Box::new(move |dout: &[f64]| {
                        let d = dout[0];
                        let da: Vec<f64> = match kind {
                            ReduceKind::Sum => vec![d; n],
                            ReduceKind::Mean => vec![d / n as f64; n],
                            ReduceKind::Max => {
                                let mut g = vec![0.0; n];
                                g[argmax] = d;
                                g
                            }
                        };
                        a.accumulate_grad(&da);
                    }) as BackwardFn
                }))
            }
            Some(ax) => {
                if ax >= shape.len() {
                    return Err(Error::shape(format!(
                        "axis {ax} out of range for shape {shape:?}"
                    )));
                }
                let axis_len = shape[ax];
                if axis_len == 0 {
                    return Err(Error::shape("reduce over an empty axis"));
                }
                let outer: usize = shape[..ax].iter().product();
                let inner: usize = shape[ax + 1..].iter().product();
                let mut out = vec![0.0; outer * inner];
                let mut argmaxes = vec![0usize; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * axis_len * inner + i;
                        let mut acc = match kind {
                            ReduceKind::Max => f64::NEG_INFINITY,
                            _ => 0.0,
                        };
                        let mut arg = 0usize;
                        for j in 0..axis_len {
                            let v = data[base + j * inner];
                            match kind {
                                ReduceKind::Sum | ReduceKind::Mean => acc += v,
                                ReduceKind::Max => {
                                    if v > acc {
                                        acc = v;
                                        arg = j;
                                    }
                                }
                            }
                        }
                        if kind == ReduceKind::Mean {
                            acc /= axis_len as f64;
                        }
                        out[o * inner + i] = acc;
                        argmaxes[o * inner + i] = arg;
                    }
                }
                let mut out_shape: Vec<usize> = shape.clone();
                if keepdims {
                    out_shape[ax] = 1;
                } else {
                    out_shape.remove(ax);
                }
                let a = self.clone();
                let parent_numel = data.len();
                Ok(Tensor::from_op(out, out_shape, &[self], move || {
                    Box::new(move |dout: &[f64]| {
                        let mut da = vec![0.0; parent_numel];
                        for o in 0..outer {
                            for i in 0..inner {
                                let d = dout[o * inner + i];
                                let base = o * axis_len * inner + i;
                                match kind {
                                    ReduceKind::Sum => {
                                        for j in 0..axis_len {
                                            da[base + j * inner] += d;
                                        }
                                    }
                                    ReduceKind::Mean => {
                                        let d = d / axis_len as f64;
                                        for j in 0..axis_len {
                                            da[base + j * inner] += d;
                                        }
                                    }
                                    ReduceKind::Max => {
                                        da[base + argmaxes[o * inner + i] * inner] += d;
                                    }
                                }
                            }
                        }
                        a.accumulate_grad(&da);
                    }) as BackwardFn
                }))
            }
        }
    }

    pub fn sum(&self, axis: Option<usize>, keepdims: bool) -> Result<Tensor> {
        self.reduce(axis, keepdims, ReduceKind::Sum)
    }

    pub fn mean(&self, axis: Option<usize>, keepdims: bool) -> Result<Tensor> {
        self.reduce(axis, keepdims, ReduceKind::Mean)
    }

    /// Max-reduction; the gradient routes to the first position attaining the
    /// maximum (subgradient convention).
    pub fn max(&self, axis: Option<usize>, keepdims: bool) -> Result<Tensor> {
        self.reduce(axis, keepdims, ReduceKind::Max)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ReduceKind {
    Sum,
    Mean,
    Max,
}

fn fold_all(data: &[f64], kind: ReduceKind) -> (f64, usize) {
    match kind {
        ReduceKind::Sum => (data.iter().fold(0.0, |a, v| a + v), 0),
        ReduceKind::Mean => (data.iter().fold(0.0, |a, v| a + v) / data.len() as f64, 0),
        ReduceKind::Max => {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, v) in data.iter().enumerate() {
                if *v > best {
                    best = *v;
                    arg = i;
                }
            }
            (best, arg)
        }
    }
}

/// C[m,n] = A[m,k] · B[k,n]
fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// C[m,k] = A[m,n] · Bᵀ where B is [k,n]
fn mm_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                s += av * bv;
            }
            c[i * k + p] = s;
        }
    }
    c
}

/// C[k,n] = Aᵀ · B where A is [m,k], B is [m,n]
fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}
