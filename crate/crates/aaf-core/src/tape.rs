//! Reverse-mode gradient tape.
//!
//! Operations record themselves onto a [`GradTape`] during the forward pass;
//! replaying the record in reverse propagates adjoints back to every leaf
//! that requires a gradient. A tape lives for one forward/backward cycle:
//! training loops create a fresh tape per step.

use crate::error::AafError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value stored on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Global pooling mode over spatial positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

/// Point-wise binary op selector for [`GradTape::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EwOp {
    Add,
    Sub,
    Mul,
}

/// Geometry of a strided square-kernel patch extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }
}

#[derive(Debug, Clone)]
enum Op<S: Scalar> {
    Leaf,
    Matmul { a: Var, b: Var },
    Transpose { t: Var },
    Scale { t: Var, c: S },
    AddConst { t: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Div { a: Var, b: Var },
    Min { a: Var, b: Var },
    AddRow { t: Var, row: Var },
    MulRow { t: Var, row: Var },
    BroadcastRows { row: Var },
    ConcatCols { parts: Vec<Var> },
    Pool { t: Var, mode: PoolMode },
    Softmax { t: Var, axis: usize },
    Sigmoid { t: Var },
    Exp { t: Var },
    Ln { t: Var },
    Relu { t: Var },
    Softplus { t: Var },
    Sum { t: Var },
    Im2col { t: Var, geom: ConvGeom },
    Reshape { t: Var },
    SliceCols { t: Var, start: usize, len: usize },
    GatherRows { t: Var, rows: Vec<usize> },
}

struct Node<S: Scalar> {
    op: Op<S>,
    value: Tensor<S>,
    needs_grad: bool,
}

/// Wengert tape: ordered record of executed operations.
pub struct GradTape<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
    backward_done: bool,
}

impl<S: Scalar> Default for GradTape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> GradTape<S> {
    pub fn new() -> Self {
        GradTape {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf; gradient tracking follows `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: &Tensor<S>) -> Var {
        self.push(Op::Leaf, tensor.clone(), tensor.requires_grad)
    }

    /// Registers a non-differentiable leaf.
    pub fn constant(&mut self, tensor: &Tensor<S>) -> Var {
        self.push(Op::Leaf, tensor.clone(), false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape_of(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated at `v` by the last [`GradTape::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor<S>> {
        let g = self.grad(v)?;
        Some(
            Tensor::new(self.shape_of(v).to_vec(), g.to_vec())
                .expect("gradient matches value shape"),
        )
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>, needs_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(id)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn rank2(&self, op: &'static str, v: Var) -> Result<(usize, usize), AafError> {
        let shape = self.shape_of(v);
        if shape.len() != 2 {
            return Err(AafError::RankMismatch {
                op,
                expected: 2,
                shape: shape.to_vec(),
            });
        }
        Ok((shape[0], shape[1]))
    }

    // ---- forward ops ------------------------------------------------------

    /// Matrix product of rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AafError> {
        let (m, k) = self.rank2("matmul", a)?;
        let (k2, n) = self.rank2("matmul", b)?;
        if k != k2 {
            return Err(AafError::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let data = kernels::mm_nn(
            self.value(a).data(),
            self.value(b).data(),
            m,
            k,
            n,
        );
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Op::Matmul { a, b },
            Tensor::new(vec![m, n], data)?,
            needs,
        ))
    }

    pub fn transpose(&mut self, t: Var) -> Result<Var, AafError> {
        let (m, n) = self.rank2("transpose", t)?;
        let src = self.value(t).data();
        let mut data = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let needs = self.needs(t);
        Ok(self.push(Op::Transpose { t }, Tensor::new(vec![n, m], data)?, needs))
    }

    pub fn scale(&mut self, t: Var, c: S) -> Var {
        let data: Vec<S> = self.value(t).data().iter().map(|&v| v * c).collect();
        let shape = self.shape_of(t).to_vec();
        let needs = self.needs(t);
        self.push(
            Op::Scale { t, c },
            Tensor::new(shape, data).expect("same shape"),
            needs,
        )
    }

    pub fn add_const(&mut self, t: Var, c: S) -> Var {
        let data: Vec<S> = self.value(t).data().iter().map(|&v| v + c).collect();
        let shape = self.shape_of(t).to_vec();
        let needs = self.needs(t);
        self.push(
            Op::AddConst { t },
            Tensor::new(shape, data).expect("same shape"),
            needs,
        )
    }

    fn same_shape_binary(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
    ) -> Result<(), AafError> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(AafError::ShapeMismatch {
                op: op_name,
                lhs: self.shape_of(a).to_vec(),
                rhs: self.shape_of(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AafError> {
        self.same_shape_binary("add", a, b)?;
        self.zip_op(a, b, Op::Add { a, b }, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AafError> {
        self.same_shape_binary("sub", a, b)?;
        self.zip_op(a, b, Op::Sub { a, b }, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AafError> {
        self.same_shape_binary("mul", a, b)?;
        self.zip_op(a, b, Op::Mul { a, b }, |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AafError> {
        self.same_shape_binary("div", a, b)?;
        self.zip_op(a, b, Op::Div { a, b }, |x, y| x / y)
    }

    /// Elementwise minimum; ties route the gradient to the first argument.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, AafError> {
        self.same_shape_binary("min", a, b)?;
        self.zip_op(a, b, Op::Min { a, b }, |x, y| if y < x { y } else { x })
    }

    fn zip_op(
        &mut self,
        a: Var,
        b: Var,
        op: Op<S>,
        f: impl Fn(S, S) -> S,
    ) -> Result<Var, AafError> {
        let data: Vec<S> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape_of(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(op, Tensor::new(shape, data)?, needs))
    }

    fn row_op(
        &mut self,
        op_name: &'static str,
        t: Var,
        row: Var,
        op: Op<S>,
        f: impl Fn(S, S) -> S,
    ) -> Result<Var, AafError> {
        let (m, d) = self.rank2(op_name, t)?;
        let (one, d2) = self.rank2(op_name, row)?;
        if one != 1 || d2 != d {
            return Err(AafError::ShapeMismatch {
                op: op_name,
                lhs: vec![m, d],
                rhs: vec![one, d2],
            });
        }
        let td = self.value(t).data();
        let rd = self.value(row).data();
        let mut data = vec![S::zero(); m * d];
        for i in 0..m {
            for j in 0..d {
                data[i * d + j] = f(td[i * d + j], rd[j]);
            }
        }
        let needs = self.needs(t) || self.needs(row);
        Ok(self.push(op, Tensor::new(vec![m, d], data)?, needs))
    }

    /// Adds a `[1, d]` row vector to every row of a `[m, d]` tensor.
    pub fn add_row(&mut self, t: Var, row: Var) -> Result<Var, AafError> {
        self.row_op("add_row", t, row, Op::AddRow { t, row }, |x, y| x + y)
    }

    /// Multiplies every row of a `[m, d]` tensor by a `[1, d]` row vector.
    pub fn mul_row(&mut self, t: Var, row: Var) -> Result<Var, AafError> {
        self.row_op("mul_row", t, row, Op::MulRow { t, row }, |x, y| x * y)
    }

    /// Tiles a `[1, d]` row vector into a `[rows, d]` tensor.
    pub fn broadcast_rows(&mut self, row: Var, rows: usize) -> Result<Var, AafError> {
        let (one, d) = self.rank2("broadcast_rows", row)?;
        if one != 1 {
            return Err(AafError::RankMismatch {
                op: "broadcast_rows",
                expected: 2,
                shape: vec![one, d],
            });
        }
        if rows == 0 {
            return Err(AafError::EmptySpatial {
                op: "broadcast_rows",
            });
        }
        let rd = self.value(row).data().to_vec();
        let mut data = Vec::with_capacity(rows * d);
        for _ in 0..rows {
            data.extend_from_slice(&rd);
        }
        let needs = self.needs(row);
        Ok(self.push(
            Op::BroadcastRows { row },
            Tensor::new(vec![rows, d], data)?,
            needs,
        ))
    }

    /// Point-wise add/sub/mul; the second operand may be a `[1, d]`
    /// per-channel vector broadcast against a `[m, d]` feature map.
    pub fn elementwise(&mut self, op: EwOp, a: Var, b: Var) -> Result<Var, AafError> {
        if self.shape_of(a) == self.shape_of(b) {
            return match op {
                EwOp::Add => self.add(a, b),
                EwOp::Sub => self.sub(a, b),
                EwOp::Mul => self.mul(a, b),
            };
        }
        let sa = self.shape_of(a).to_vec();
        let sb = self.shape_of(b).to_vec();
        let broadcastable =
            sa.len() == 2 && sb.len() == 2 && sb[0] == 1 && sa[1] == sb[1] && sa[0] > 1;
        if !broadcastable {
            return Err(AafError::ShapeMismatch {
                op: "elementwise",
                lhs: sa,
                rhs: sb,
            });
        }
        match op {
            EwOp::Add => self.add_row(a, b),
            EwOp::Mul => self.mul_row(a, b),
            EwOp::Sub => {
                let neg = self.scale(b, -S::one());
                self.add_row(a, neg)
            }
        }
    }

    /// Concatenates `[m, d_i]` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var, AafError> {
        let first = *parts.first().ok_or(AafError::EmptyFusion)?;
        let (m, _) = self.rank2("concat_channels", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (mp, dp) = self.rank2("concat_channels", p)?;
            if mp != m {
                return Err(AafError::ShapeMismatch {
                    op: "concat_channels",
                    lhs: self.shape_of(first).to_vec(),
                    rhs: self.shape_of(p).to_vec(),
                });
            }
            widths.push(dp);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![S::zero(); m * total];
        let mut offset = 0;
        for (&p, &dp) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for i in 0..m {
                data[i * total + offset..i * total + offset + dp]
                    .copy_from_slice(&src[i * dp..(i + 1) * dp]);
            }
            offset += dp;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            Tensor::new(vec![m, total], data)?,
            needs,
        ))
    }

    /// Per-channel max or mean over spatial positions: `[m, d] -> [1, d]`.
    ///
    /// Max gradients route to the first argmax position in row-major order.
    pub fn global_pool(&mut self, t: Var, mode: PoolMode) -> Result<Var, AafError> {
        let (m, d) = self.rank2("global_pool", t)?;
        if m == 0 {
            return Err(AafError::EmptySpatial { op: "global_pool" });
        }
        let src = self.value(t).data();
        let mut data = vec![S::zero(); d];
        match mode {
            PoolMode::Max => {
                for j in 0..d {
                    let mut best = src[j];
                    for i in 1..m {
                        let v = src[i * d + j];
                        if v > best {
                            best = v;
                        }
                    }
                    data[j] = best;
                }
            }
            PoolMode::Avg => {
                let inv = S::one() / S::from_usize(m).expect("extent fits scalar");
                for j in 0..d {
                    let mut acc = S::zero();
                    for i in 0..m {
                        acc += src[i * d + j];
                    }
                    data[j] = acc * inv;
                }
            }
        }
        let needs = self.needs(t);
        Ok(self.push(
            Op::Pool { t, mode },
            Tensor::new(vec![1, d], data)?,
            needs,
        ))
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, t: Var, axis: usize) -> Result<Var, AafError> {
        let shape = self.shape_of(t).to_vec();
        if axis >= shape.len() {
            return Err(AafError::InvalidAxis {
                op: "softmax",
                axis,
                shape,
            });
        }
        let data = kernels::softmax_axis(self.value(t).data(), &shape, axis);
        let needs = self.needs(t);
        Ok(self.push(Op::Softmax { t, axis }, Tensor::new(shape, data)?, needs))
    }

    pub fn sigmoid(&mut self, t: Var) -> Var {
        self.unary(t, |x| {
            if x >= S::zero() {
                S::one() / (S::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (S::one() + e)
            }
        }, Op::Sigmoid { t })
    }

    pub fn exp(&mut self, t: Var) -> Var {
        self.unary(t, |x| x.exp(), Op::Exp { t })
    }

    pub fn ln(&mut self, t: Var) -> Var {
        self.unary(t, |x| x.ln(), Op::Ln { t })
    }

    pub fn relu(&mut self, t: Var) -> Var {
        self.unary(t, |x| if x > S::zero() { x } else { S::zero() }, Op::Relu { t })
    }

    /// `ln(1 + e^x)` computed without overflow.
    pub fn softplus(&mut self, t: Var) -> Var {
        self.unary(
            t,
            |x| {
                let zero = S::zero();
                let positive_part = if x > zero { x } else { zero };
                positive_part + (-x.abs()).exp().ln_1p()
            },
            Op::Softplus { t },
        )
    }

    fn unary(&mut self, t: Var, f: impl Fn(S) -> S, op: Op<S>) -> Var {
        let data: Vec<S> = self.value(t).data().iter().map(|&v| f(v)).collect();
        let shape = self.shape_of(t).to_vec();
        let needs = self.needs(t);
        self.push(op, Tensor::new(shape, data).expect("same shape"), needs)
    }

    /// Reduces all elements to a `[1]` scalar.
    pub fn sum(&mut self, t: Var) -> Var {
        let total: S = self.value(t).data().iter().copied().sum();
        let needs = self.needs(t);
        self.push(Op::Sum { t }, Tensor::scalar(total), needs)
    }

    /// Extracts sliding square patches from a `[h, w, c]` tensor into a
    /// `[out_h * out_w, k * k * c]` matrix (zero padding outside the image).
    pub fn im2col(&mut self, t: Var, geom: ConvGeom) -> Result<Var, AafError> {
        let shape = self.shape_of(t).to_vec();
        if shape != [geom.in_h, geom.in_w, geom.in_c] {
            return Err(AafError::ShapeMismatch {
                op: "im2col",
                lhs: shape,
                rhs: vec![geom.in_h, geom.in_w, geom.in_c],
            });
        }
        let src = self.value(t).data();
        let (oh, ow) = (geom.out_h(), geom.out_w());
        let plen = geom.patch_len();
        let mut data = vec![S::zero(); oh * ow * plen];
        kernels::im2col_apply(&geom, |patch_row, patch_col, src_idx| {
            data[patch_row * plen + patch_col] = src[src_idx];
        });
        let needs = self.needs(t);
        Ok(self.push(
            Op::Im2col { t, geom },
            Tensor::new(vec![oh * ow, plen], data)?,
            needs,
        ))
    }

    /// Reinterprets the value under a new shape with the same element count.
    pub fn reshape(&mut self, t: Var, shape: Vec<usize>) -> Result<Var, AafError> {
        let numel: usize = shape.iter().product();
        if numel != self.value(t).numel() {
            return Err(AafError::DataLength {
                len: self.value(t).numel(),
                shape,
            });
        }
        let data = self.value(t).data().to_vec();
        let needs = self.needs(t);
        Ok(self.push(Op::Reshape { t }, Tensor::new(shape, data)?, needs))
    }

    /// Contiguous column range of a rank-2 tensor.
    pub fn slice_cols(&mut self, t: Var, start: usize, len: usize) -> Result<Var, AafError> {
        let (m, d) = self.rank2("slice_cols", t)?;
        if start + len > d || len == 0 {
            return Err(AafError::InvalidAxis {
                op: "slice_cols",
                axis: start + len,
                shape: vec![m, d],
            });
        }
        let src = self.value(t).data();
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&src[i * d + start..i * d + start + len]);
        }
        let needs = self.needs(t);
        Ok(self.push(
            Op::SliceCols { t, start, len },
            Tensor::new(vec![m, len], data)?,
            needs,
        ))
    }

    /// Selects rows by index (duplicates allowed); adjoint scatter-adds.
    pub fn gather_rows(&mut self, t: Var, rows: &[usize]) -> Result<Var, AafError> {
        let (m, d) = self.rank2("gather_rows", t)?;
        if rows.is_empty() {
            return Err(AafError::EmptySpatial { op: "gather_rows" });
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(AafError::InvalidAxis {
                op: "gather_rows",
                axis: bad,
                shape: vec![m, d],
            });
        }
        let src = self.value(t).data();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        let needs = self.needs(t);
        Ok(self.push(
            Op::GatherRows {
                t,
                rows: rows.to_vec(),
            },
            Tensor::new(vec![rows.len(), d], data)?,
            needs,
        ))
    }

    /// Per-position affine map: `t[m, d_in] * w[d_in, d_out] + b[1, d_out]`.
    pub fn pointwise_linear(&mut self, t: Var, w: Var, b: Var) -> Result<Var, AafError> {
        let (_, d_in) = self.rank2("pointwise_linear", t)?;
        let (wr, d_out) = self.rank2("pointwise_linear", w)?;
        if wr != d_in {
            return Err(AafError::ChannelMismatch {
                op: "pointwise_linear",
                lhs: d_in,
                rhs: wr,
            });
        }
        let (br, bc) = self.rank2("pointwise_linear", b)?;
        if br != 1 || bc != d_out {
            return Err(AafError::ShapeMismatch {
                op: "pointwise_linear",
                lhs: vec![1, d_out],
                rhs: vec![br, bc],
            });
        }
        let prod = self.matmul(t, w)?;
        self.add_row(prod, b)
    }

    // ---- backward ---------------------------------------------------------

    /// Replays the tape in reverse from a scalar loss, accumulating adjoints
    /// into every recorded value that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<(), AafError> {
        if self.backward_done {
            return Err(AafError::BackwardAlreadyRun);
        }
        if self.value(loss).numel() != 1 {
            return Err(AafError::NonScalarLoss {
                shape: self.shape_of(loss).to_vec(),
            });
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![S::one()]);

        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = self.grads[idx].clone() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            self.adjoint(&op, Var(idx), &g);
        }
        Ok(())
    }

    fn accum(&mut self, v: Var, delta: Vec<S>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(&delta) {
                    *gi += *di;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn adjoint(&mut self, op: &Op<S>, out: Var, g: &[S]) {
        match *op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = {
                    let s = self.shape_of(a);
                    (s[0], s[1])
                };
                let n = self.shape_of(b)[1];
                let da = kernels::mm_nt(g, self.value(b).data(), m, n, k);
                self.accum(a, da);
                let db = kernels::mm_tn(self.value(a).data(), g, m, k, n);
                self.accum(b, db);
            }
            Op::Transpose { t } => {
                let (n, m) = {
                    let s = self.shape_of(out);
                    (s[0], s[1])
                };
                let mut dt = vec![S::zero(); m * n];
                for i in 0..n {
                    for j in 0..m {
                        dt[j * n + i] = g[i * m + j];
                    }
                }
                self.accum(t, dt);
            }
            Op::Scale { t, c } => {
                self.accum(t, g.iter().map(|&v| v * c).collect());
            }
            Op::AddConst { t } => {
                self.accum(t, g.to_vec());
            }
            Op::Add { a, b } => {
                self.accum(a, g.to_vec());
                self.accum(b, g.to_vec());
            }
            Op::Sub { a, b } => {
                self.accum(a, g.to_vec());
                self.accum(b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul { a, b } => {
                let da: Vec<S> = g
                    .iter()
                    .zip(self.value(b).data())
                    .map(|(&gi, &bi)| gi * bi)
                    .collect();
                self.accum(a, da);
                let db: Vec<S> = g
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(&gi, &ai)| gi * ai)
                    .collect();
                self.accum(b, db);
            }
            Op::Div { a, b } => {
                let da: Vec<S> = g
                    .iter()
                    .zip(self.value(b).data())
                    .map(|(&gi, &bi)| gi / bi)
                    .collect();
                self.accum(a, da);
                let db: Vec<S> = g
                    .iter()
                    .zip(self.value(a).data().iter().zip(self.value(b).data()))
                    .map(|(&gi, (&ai, &bi))| -gi * ai / (bi * bi))
                    .collect();
                self.accum(b, db);
            }
            Op::Min { a, b } => {
                // Tie gradients go to the first argument.
                let (da, db): (Vec<S>, Vec<S>) = g
                    .iter()
                    .zip(self.value(a).data().iter().zip(self.value(b).data()))
                    .map(|(&gi, (&ai, &bi))| {
                        if bi < ai {
                            (S::zero(), gi)
                        } else {
                            (gi, S::zero())
                        }
                    })
                    .unzip();
                self.accum(a, da);
                self.accum(b, db);
            }
            Op::AddRow { t, row } => {
                let (m, d) = {
                    let s = self.shape_of(t);
                    (s[0], s[1])
                };
                self.accum(t, g.to_vec());
                let mut drow = vec![S::zero(); d];
                for i in 0..m {
                    for j in 0..d {
                        drow[j] += g[i * d + j];
                    }
                }
                self.accum(row, drow);
            }
            Op::MulRow { t, row } => {
                let (m, d) = {
                    let s = self.shape_of(t);
                    (s[0], s[1])
                };
                let rd = self.value(row).data();
                let td = self.value(t).data();
                let mut dt = vec![S::zero(); m * d];
                let mut drow = vec![S::zero(); d];
                for i in 0..m {
                    for j in 0..d {
                        dt[i * d + j] = g[i * d + j] * rd[j];
                        drow[j] += g[i * d + j] * td[i * d + j];
                    }
                }
                self.accum(t, dt);
                self.accum(row, drow);
            }
            Op::BroadcastRows { row } => {
                let (m, d) = {
                    let s = self.shape_of(out);
                    (s[0], s[1])
                };
                let mut drow = vec![S::zero(); d];
                for i in 0..m {
                    for j in 0..d {
                        drow[j] += g[i * d + j];
                    }
                }
                self.accum(row, drow);
            }
            Op::ConcatCols { ref parts } => {
                let parts = parts.clone();
                let m = self.shape_of(out)[0];
                let total = self.shape_of(out)[1];
                let mut offset = 0;
                for p in parts {
                    let dp = self.shape_of(p)[1];
                    let mut dpart = vec![S::zero(); m * dp];
                    for i in 0..m {
                        dpart[i * dp..(i + 1) * dp]
                            .copy_from_slice(&g[i * total + offset..i * total + offset + dp]);
                    }
                    self.accum(p, dpart);
                    offset += dp;
                }
            }
            Op::Pool { t, mode } => {
                let (m, d) = {
                    let s = self.shape_of(t);
                    (s[0], s[1])
                };
                let mut dt = vec![S::zero(); m * d];
                match mode {
                    PoolMode::Max => {
                        let src = self.value(t).data();
                        for j in 0..d {
                            let mut best_i = 0;
                            let mut best = src[j];
                            for i in 1..m {
                                if src[i * d + j] > best {
                                    best = src[i * d + j];
                                    best_i = i;
                                }
                            }
                            dt[best_i * d + j] = g[j];
                        }
                    }
                    PoolMode::Avg => {
                        let inv = S::one() / S::from_usize(m).expect("extent fits scalar");
                        for i in 0..m {
                            for j in 0..d {
                                dt[i * d + j] = g[j] * inv;
                            }
                        }
                    }
                }
                self.accum(t, dt);
            }
            Op::Softmax { t, axis } => {
                let shape = self.shape_of(out).to_vec();
                let s = self.value(out).data();
                let dt = kernels::softmax_adjoint(s, g, &shape, axis);
                self.accum(t, dt);
            }
            Op::Sigmoid { t } => {
                let s = self.value(out).data();
                let dt: Vec<S> = g
                    .iter()
                    .zip(s)
                    .map(|(&gi, &si)| gi * si * (S::one() - si))
                    .collect();
                self.accum(t, dt);
            }
            Op::Exp { t } => {
                let s = self.value(out).data();
                let dt: Vec<S> = g.iter().zip(s).map(|(&gi, &si)| gi * si).collect();
                self.accum(t, dt);
            }
            Op::Ln { t } => {
                let x = self.value(t).data();
                let dt: Vec<S> = g.iter().zip(x).map(|(&gi, &xi)| gi / xi).collect();
                self.accum(t, dt);
            }
            Op::Relu { t } => {
                let x = self.value(t).data();
                let dt: Vec<S> = g
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| if xi > S::zero() { gi } else { S::zero() })
                    .collect();
                self.accum(t, dt);
            }
            Op::Softplus { t } => {
                let x = self.value(t).data();
                let dt: Vec<S> = g
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| {
                        let s = if xi >= S::zero() {
                            S::one() / (S::one() + (-xi).exp())
                        } else {
                            let e = xi.exp();
                            e / (S::one() + e)
                        };
                        gi * s
                    })
                    .collect();
                self.accum(t, dt);
            }
            Op::Sum { t } => {
                let n = self.value(t).numel();
                self.accum(t, vec![g[0]; n]);
            }
            Op::Im2col { t, geom } => {
                let mut dt = vec![S::zero(); geom.in_h * geom.in_w * geom.in_c];
                let plen = geom.patch_len();
                kernels::im2col_apply(&geom, |patch_row, patch_col, src_idx| {
                    dt[src_idx] += g[patch_row * plen + patch_col];
                });
                self.accum(t, dt);
            }
            Op::Reshape { t } => {
                self.accum(t, g.to_vec());
            }
            Op::SliceCols { t, start, len } => {
                let (m, d) = {
                    let s = self.shape_of(t);
                    (s[0], s[1])
                };
                let mut dt = vec![S::zero(); m * d];
                for i in 0..m {
                    dt[i * d + start..i * d + start + len]
                        .copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                self.accum(t, dt);
            }
            Op::GatherRows { t, ref rows } => {
                let rows = rows.clone();
                let (m, d) = {
                    let s = self.shape_of(t);
                    (s[0], s[1])
                };
                let mut dt = vec![S::zero(); m * d];
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..d {
                        dt[r * d + j] += g[i * d + j];
                    }
                }
                self.accum(t, dt);
            }
        }
    }
}

/// Dense kernels shared by forward and adjoint paths.
pub(crate) mod kernels {
    use super::ConvGeom;
    use crate::scalar::Scalar;

    /// C[m,n] = A[m,k] * B[k,n]
    pub fn mm_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
        let mut c = vec![S::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let av = a[i * k + p];
                if av == S::zero() {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                let crow = &mut c[i * n..(i + 1) * n];
                for j in 0..n {
                    crow[j] += av * brow[j];
                }
            }
        }
        c
    }

    /// C[m,k] = A[m,n] * B[k,n]^T
    pub fn mm_nt<S: Scalar>(a: &[S], b: &[S], m: usize, n: usize, k: usize) -> Vec<S> {
        let mut c = vec![S::zero(); m * k];
        for i in 0..m {
            let arow = &a[i * n..(i + 1) * n];
            for j in 0..k {
                let brow = &b[j * n..(j + 1) * n];
                let mut acc = S::zero();
                for p in 0..n {
                    acc += arow[p] * brow[p];
                }
                c[i * k + j] = acc;
            }
        }
        c
    }

    /// C[k,n] = A[m,k]^T * B[m,n]
    pub fn mm_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
        let mut c = vec![S::zero(); k * n];
        for p in 0..m {
            let brow = &b[p * n..(p + 1) * n];
            for i in 0..k {
                let av = a[p * k + i];
                if av == S::zero() {
                    continue;
                }
                let crow = &mut c[i * n..(i + 1) * n];
                for j in 0..n {
                    crow[j] += av * brow[j];
                }
            }
        }
        c
    }

    fn lanes(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        let axis_len = shape[axis];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        (outer, axis_len, inner)
    }

    pub fn softmax_axis<S: Scalar>(data: &[S], shape: &[usize], axis: usize) -> Vec<S> {
        let (outer, axis_len, inner) = lanes(shape, axis);
        let mut out = vec![S::zero(); data.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * axis_len * inner + i;
                let mut max = data[base];
                for a in 1..axis_len {
                    let v = data[base + a * inner];
                    if v > max {
                        max = v;
                    }
                }
                let mut total = S::zero();
                for a in 0..axis_len {
                    let e = (data[base + a * inner] - max).exp();
                    out[base + a * inner] = e;
                    total += e;
                }
                for a in 0..axis_len {
                    out[base + a * inner] = out[base + a * inner] / total;
                }
            }
        }
        out
    }

    /// dL/dx_i = s_i * (g_i - sum_j g_j s_j) along the softmax axis.
    pub fn softmax_adjoint<S: Scalar>(
        s: &[S],
        g: &[S],
        shape: &[usize],
        axis: usize,
    ) -> Vec<S> {
        let (outer, axis_len, inner) = lanes(shape, axis);
        let mut out = vec![S::zero(); s.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * axis_len * inner + i;
                let mut dot = S::zero();
                for a in 0..axis_len {
                    let idx = base + a * inner;
                    dot += g[idx] * s[idx];
                }
                for a in 0..axis_len {
                    let idx = base + a * inner;
                    out[idx] = s[idx] * (g[idx] - dot);
                }
            }
        }
        out
    }

    /// Visits every in-bounds (patch position, source index) pair of a
    /// patch extraction; padding cells are skipped (they stay zero).
    pub fn im2col_apply(geom: &ConvGeom, mut visit: impl FnMut(usize, usize, usize)) {
        let (oh, ow) = (geom.out_h(), geom.out_w());
        for oy in 0..oh {
            for ox in 0..ow {
                let patch_row = oy * ow + ox;
                for ky in 0..geom.kernel {
                    let in_y = (oy * geom.stride + ky) as isize - geom.pad as isize;
                    if in_y < 0 || in_y >= geom.in_h as isize {
                        continue;
                    }
                    for kx in 0..geom.kernel {
                        let in_x = (ox * geom.stride + kx) as isize - geom.pad as isize;
                        if in_x < 0 || in_x >= geom.in_w as isize {
                            continue;
                        }
                        let src_base =
                            (in_y as usize * geom.in_w + in_x as usize) * geom.in_c;
                        let patch_base = (ky * geom.kernel + kx) * geom.in_c;
                        for ch in 0..geom.in_c {
                            visit(patch_row, patch_base + ch, src_base + ch);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = GradTape::new();
        let i = tape.constant(&t2(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let v = tape.constant(&t2(&[vec![5.0], vec![7.0]]));
        let out = tape.matmul(i, v).unwrap();
        assert_eq!(tape.value(out).data(), &[5.0, 7.0]);
    }

    #[test]
    fn matmul_hand_oracle() {
        // 1*3 + 2*4 = 11
        let mut tape = GradTape::new();
        let a = tape.constant(&t2(&[vec![1.0, 2.0]]));
        let b = tape.constant(&t2(&[vec![3.0], vec![4.0]]));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = GradTape::<f64>::new();
        let a = tape.constant(&Tensor::zeros(vec![2, 3]));
        let b = tape.constant(&Tensor::zeros(vec![4, 5]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    }

    #[test]
    fn softmax_symmetry() {
        let mut tape = GradTape::new();
        let x = tape.constant(&t2(&[vec![0.0, 0.0]]));
        let s = tape.softmax(x, 1).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_direct_evaluation() {
        let mut tape = GradTape::new();
        let x = tape.constant(&t2(&[vec![0.0, 2.0]]));
        let s = tape.softmax(x, 1).unwrap();
        let e2 = 2.0f64.exp();
        let expect = [1.0 / (1.0 + e2), e2 / (1.0 + e2)];
        for (got, want) in tape.value(s).data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn softmax_large_inputs_stable() {
        let mut tape = GradTape::new();
        let x = tape.constant(&t2(&[vec![1000.0, 1000.0]]));
        let s = tape.softmax(x, 1).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rejects_bad_axis() {
        let mut tape = GradTape::new();
        let x = tape.constant(&t2(&[vec![0.0, 1.0]]));
        assert!(matches!(
            tape.softmax(x, 2),
            Err(AafError::InvalidAxis { .. })
        ));
    }

    #[test]
    fn softmax_sums_to_one_along_axis0() {
        let mut tape = GradTape::new();
        let x = tape.constant(&t2(&[vec![1.0, -3.0], vec![0.5, 2.0], vec![-1.0, 0.0]]));
        let s = tape.softmax(x, 0).unwrap();
        let v = tape.value(s);
        for j in 0..2 {
            let col: f64 = (0..3).map(|i| v.at2(i, j)).sum();
            assert!((col - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn elementwise_hand_values() {
        let mut tape = GradTape::new();
        let a = tape.constant(&t2(&[vec![1.0, 2.0]]));
        let b = tape.constant(&t2(&[vec![3.0, 4.0]]));
        let m = tape.elementwise(EwOp::Mul, a, b).unwrap();
        assert_eq!(tape.value(m).data(), &[3.0, 8.0]);
        let z = tape.elementwise(EwOp::Sub, a, a).unwrap();
        assert_eq!(tape.value(z).data(), &[0.0, 0.0]);
    }

    #[test]
    fn elementwise_broadcasts_channel_vector() {
        // 4-position, 3-channel map against a [1, 3] vector.
        let mut tape = GradTape::new();
        let map = tape.constant(&Tensor::new(vec![4, 3], (0..12).map(f64::from).collect()).unwrap());
        let vec3 = tape.constant(&t2(&[vec![1.0, 10.0, 100.0]]));
        let out = tape.elementwise(EwOp::Mul, map, vec3).unwrap();
        assert_eq!(tape.value(out).at2(0, 0), 0.0);
        assert_eq!(tape.value(out).at2(1, 1), 40.0);
        assert_eq!(tape.value(out).at2(3, 2), 1100.0);
    }

    #[test]
    fn elementwise_rejects_non_broadcastable() {
        let mut tape = GradTape::<f64>::new();
        let a = tape.constant(&Tensor::zeros(vec![4, 3]));
        let b = tape.constant(&Tensor::zeros(vec![2, 3]));
        assert!(tape.elementwise(EwOp::Add, a, b).is_err());
    }

    #[test]
    fn concat_widths_add_up() {
        let mut tape = GradTape::<f64>::new();
        let a = tape.constant(&Tensor::full(vec![3, 4], 1.0));
        let b = tape.constant(&Tensor::full(vec![3, 4], 2.0));
        let c = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.shape_of(c), &[3, 8]);
        assert_eq!(tape.value(c).at2(1, 3), 1.0);
        assert_eq!(tape.value(c).at2(1, 4), 2.0);
    }

    #[test]
    fn concat_single_part_is_identity() {
        let mut tape = GradTape::new();
        let a = tape.constant(&t2(&[vec![1.5, -2.0], vec![0.25, 9.0]]));
        let c = tape.concat_channels(&[a]).unwrap();
        assert_eq!(tape.value(c), tape.value(a));
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let mut tape = GradTape::<f64>::new();
        let a = tape.constant(&Tensor::zeros(vec![2, 3]));
        let b = tape.constant(&Tensor::zeros(vec![3, 3]));
        assert!(tape.concat_channels(&[a, b]).is_err());
    }

    #[test]
    fn global_pool_oracles() {
        // Per-column max of [[2,1],[0,5]] is [2,5]; per-column mean is [1,3].
        let mut tape = GradTape::new();
        let m = tape.constant(&t2(&[vec![2.0, 1.0], vec![0.0, 5.0]]));
        let mx = tape.global_pool(m, PoolMode::Max).unwrap();
        assert_eq!(tape.value(mx).data(), &[2.0, 5.0]);
        let av = tape.global_pool(m, PoolMode::Avg).unwrap();
        assert_eq!(tape.value(av).data(), &[1.0, 3.0]);
    }

    #[test]
    fn global_pool_single_position() {
        let mut tape = GradTape::new();
        let m = tape.constant(&t2(&[vec![7.0, -2.0, 0.5]]));
        let mx = tape.global_pool(m, PoolMode::Max).unwrap();
        let av = tape.global_pool(m, PoolMode::Avg).unwrap();
        assert_eq!(tape.value(mx).data(), &[7.0, -2.0, 0.5]);
        assert_eq!(tape.value(av).data(), &[7.0, -2.0, 0.5]);
    }

    #[test]
    fn pointwise_linear_identity_and_bias() {
        let mut tape = GradTape::new();
        let x = tape.constant(&t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let eye = tape.constant(&Tensor::eye(2));
        let zero_b = tape.constant(&Tensor::zeros(vec![1, 2]));
        let same = tape.pointwise_linear(x, eye, zero_b).unwrap();
        assert_eq!(tape.value(same).data(), tape.value(x).data());

        let zero_w = tape.constant(&Tensor::zeros(vec![2, 2]));
        let bias = tape.constant(&t2(&[vec![5.0, -1.0]]));
        let biased = tape.pointwise_linear(x, zero_w, bias).unwrap();
        assert_eq!(tape.value(biased).data(), &[5.0, -1.0, 5.0, -1.0]);
    }

    #[test]
    fn pointwise_linear_matches_matmul_oracle() {
        let mut tape = GradTape::new();
        let x = tape.constant(&t2(&[vec![0.5, -1.0, 2.0]]));
        let w = tape.constant(&t2(&[
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 6.0],
        ]));
        let b = tape.constant(&Tensor::zeros(vec![1, 2]));
        let y = tape.pointwise_linear(x, w, b).unwrap();
        // 0.5*1 - 1*3 + 2*5 = 7.5 ; 0.5*2 - 1*4 + 2*6 = 9.0
        assert_eq!(tape.value(y).data(), &[7.5, 9.0]);
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut tape = GradTape::new();
        let x = tape.leaf(&t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]).with_grad());
        let loss = tape.sum(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_product_rule() {
        let mut tape = GradTape::new();
        let x = tape.leaf(&t2(&[vec![1.0, 2.0]]).with_grad());
        let y = tape.leaf(&t2(&[vec![3.0, 4.0]]).with_grad());
        let p = tape.mul(x, y).unwrap();
        let loss = tape.sum(p);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[3.0, 4.0]);
        assert_eq!(tape.grad(y).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = GradTape::new();
        let x = tape.leaf(&t2(&[vec![1.0, 2.0]]).with_grad());
        assert!(matches!(
            tape.backward(x),
            Err(AafError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn backward_twice_rejected() {
        let mut tape = GradTape::new();
        let x = tape.leaf(&Tensor::scalar(2.0).with_grad());
        let loss = tape.sum(x);
        tape.backward(loss).unwrap();
        assert!(matches!(
            tape.backward(loss),
            Err(AafError::BackwardAlreadyRun)
        ));
    }

    #[test]
    fn max_pool_ties_route_to_first_position() {
        let mut tape = GradTape::new();
        let x = tape.leaf(&t2(&[vec![3.0], vec![3.0]]).with_grad());
        let p = tape.global_pool(x, PoolMode::Max).unwrap();
        let loss = tape.sum(p);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn constants_collect_no_gradient() {
        let mut tape = GradTape::new();
        let x = tape.leaf(&Tensor::scalar(2.0).with_grad());
        let c = tape.constant(&Tensor::scalar(5.0));
        let p = tape.mul(x, c).unwrap();
        let loss = tape.sum(p);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[5.0]);
        assert!(tape.grad(c).is_none());
    }

    #[test]
    fn im2col_hand_case() {
        // 2x2 single-channel input, 3x3 kernel, stride 1, pad 1: center tap
        // of the first patch is input[0,0].
        let mut tape = GradTape::new();
        let x = tape.constant(
            &Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        );
        let geom = ConvGeom {
            in_h: 2,
            in_w: 2,
            in_c: 1,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let cols = tape.im2col(x, geom).unwrap();
        assert_eq!(tape.shape_of(cols), &[4, 9]);
        let v = tape.value(cols);
        assert_eq!(v.at2(0, 4), 1.0); // center of patch at (0,0)
        assert_eq!(v.at2(0, 5), 2.0); // right neighbour
        assert_eq!(v.at2(0, 0), 0.0); // padding
        assert_eq!(v.at2(3, 4), 4.0); // center of patch at (1,1)
    }

    #[test]
    fn slice_and_gather() {
        let mut tape = GradTape::new();
        let x = tape.constant(&t2(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]));
        let cols = tape.slice_cols(x, 1, 2).unwrap();
        assert_eq!(tape.value(cols).data(), &[2.0, 3.0, 5.0, 6.0]);
        let rows = tape.gather_rows(x, &[1, 1, 0]).unwrap();
        assert_eq!(tape.shape_of(rows), &[3, 3]);
        assert_eq!(tape.value(rows).at2(0, 0), 4.0);
        assert_eq!(tape.value(rows).at2(2, 2), 3.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut tape = GradTape::new();
            let x = tape.constant(&t2(&[vec![0.3, -1.2], vec![2.5, 0.07]]));
            let s = tape.softmax(x, 0).unwrap();
            let e = tape.exp(s);
            let p = tape.global_pool(e, PoolMode::Avg).unwrap();
            tape.value(p).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn f32_instantiation_works() {
        let mut tape = GradTape::<f32>::new();
        let a = tape.constant(&Tensor::from_rows(&[vec![1.0f32, 2.0]]).unwrap());
        let b = tape.constant(&Tensor::from_rows(&[vec![3.0f32], vec![4.0]]).unwrap());
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).data(), &[11.0f32]);
    }
}
