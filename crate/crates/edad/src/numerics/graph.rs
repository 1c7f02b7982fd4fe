//! Eager tape for reverse-mode gradients.
//!
//! Every operation runs immediately and records itself on the tape; a
//! single `backward` replay in reverse order accumulates vector-Jacobian
//! products into per-buffer gradient slots. Buffers registered through
//! [`Graph::param`] are snapshotted, so later mutation of the source tensor
//! cannot affect an in-flight graph. One graph serves one forward/backward
//! pass and is single-threaded; parallel window evaluation uses one graph
//! per worker.

use std::collections::BTreeMap;

use crate::{Error, Result};

use super::tensor::{
    matmul_acc, matmul_nt_acc, matmul_tn_acc, softmax_rows_kernel, softplus, Tensor,
};
use super::Real;

/// Handle to a buffer on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

struct Buf {
    rows: usize,
    cols: usize,
    data: Vec<Real>,
}

enum Op {
    MatMul { a: usize, b: usize },
    MatMulNT { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    MulElem { a: usize, b: usize },
    Scale { x: usize, c: Real },
    AddConst { x: usize },
    PowConst { x: usize, p: Real },
    Relu { x: usize },
    Exp { x: usize },
    Ln { x: usize },
    Softplus { x: usize },
    Clamp { x: usize, lo: Real, hi: Real },
    SoftmaxRows { x: usize },
    SumAll { x: usize },
    BroadcastAddScalar { x: usize, s: usize },
    BroadcastMulScalar { x: usize, s: usize },
    MulRowVec { x: usize, v: usize },
    AddRowVec { x: usize, v: usize },
    ConcatCols { a: usize, b: usize },
    SliceCols { x: usize, from: usize },
    PermuteRows { x: usize, perm: Vec<usize> },
    RepeatEachRow { x: usize, times: usize },
    TileRows { x: usize, times: usize },
    Reshape { x: usize },
}

struct Record {
    op: Op,
    out: usize,
}

/// Gradient tape over dense rank-2 buffers.
pub struct Graph {
    bufs: Vec<Buf>,
    ops: Vec<Record>,
    grads: Vec<Option<Vec<Real>>>,
    params: BTreeMap<String, Var>,
    act_sig: u64,
    clamp_events: usize,
    backward_done: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            bufs: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
            params: BTreeMap::new(),
            act_sig: 0xcbf2_9ce4_8422_2325,
            clamp_events: 0,
            backward_done: false,
        }
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<Real>) -> Var {
        debug_assert_eq!(rows * cols, data.len());
        self.bufs.push(Buf { rows, cols, data });
        self.grads.push(None);
        Var(self.bufs.len() - 1)
    }

    /// Register an untracked input. Gradients still flow through it, but it
    /// has no name and is never reported.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.rows(), t.cols(), t.data().to_vec())
    }

    pub fn constant_scalar(&mut self, v: Real) -> Var {
        self.push(1, 1, vec![v])
    }

    /// Register a named parameter (snapshot copy).
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        let var = self.push(t.rows(), t.cols(), t.data().to_vec());
        self.params.insert(name.to_string(), var);
        var
    }

    pub fn rows(&self, v: Var) -> usize {
        self.bufs[v.0].rows
    }

    pub fn cols(&self, v: Var) -> usize {
        self.bufs[v.0].cols
    }

    pub fn data(&self, v: Var) -> &[Real] {
        &self.bufs[v.0].data
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let b = &self.bufs[v.0];
        Tensor::new(vec![b.rows, b.cols], b.data.clone()).expect("buffer shape consistent")
    }

    pub fn scalar_value(&self, v: Var) -> Result<Real> {
        let b = &self.bufs[v.0];
        if b.data.len() == 1 {
            Ok(b.data[0])
        } else {
            Err(Error::Contract(format!(
                "expected scalar buffer, got {}x{}",
                b.rows, b.cols
            )))
        }
    }

    /// Hash of the relu/clamp activation pattern of this forward pass.
    /// Finite-difference checks compare signatures of the two perturbed
    /// passes and skip elements whose perturbation crosses a kink.
    pub fn activation_signature(&self) -> u64 {
        self.act_sig
    }

    /// Number of values saturated by `clamp` during this pass.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    fn sig_feed(&mut self, bit: bool) {
        self.act_sig ^= bit as u64;
        self.act_sig = self.act_sig.wrapping_mul(0x0000_0100_0000_01b3);
    }

    fn record(&mut self, op: Op, rows: usize, cols: usize, data: Vec<Real>) -> Var {
        let out = self.push(rows, cols, data);
        self.ops.push(Record { op, out: out.0 });
        out
    }

    fn dim_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Dimension {
            op,
            detail: format!(
                "{}x{} vs {}x{}",
                self.rows(a),
                self.cols(a),
                self.rows(b),
                self.cols(b)
            ),
        }
    }

    // ── binary linear algebra ────────────────────────────────────────

    /// `a[m,k] * b[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = (self.rows(a), self.cols(a));
        let (k2, n) = (self.rows(b), self.cols(b));
        if k != k2 {
            return Err(self.dim_err("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(&self.bufs[a.0].data, &self.bufs[b.0].data, &mut out, m, k, n);
        Ok(self.record(Op::MatMul { a: a.0, b: b.0 }, m, n, out))
    }

    /// `a[m,k] * b[n,k]^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = (self.rows(a), self.cols(a));
        let (n, k2) = (self.rows(b), self.cols(b));
        if k != k2 {
            return Err(self.dim_err("matmul_nt", a, b));
        }
        let mut out = vec![0.0; m * n];
        matmul_nt_acc(&self.bufs[a.0].data, &self.bufs[b.0].data, &mut out, m, k, n);
        Ok(self.record(Op::MatMulNT { a: a.0, b: b.0 }, m, n, out))
    }

    // ── elementwise ──────────────────────────────────────────────────

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        if self.rows(a) != self.rows(b) || self.cols(a) != self.cols(b) {
            return Err(self.dim_err(op, a, b));
        }
        Ok((self.rows(a), self.cols(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("add", a, b)?;
        let out: Vec<Real> = self.bufs[a.0]
            .data
            .iter()
            .zip(&self.bufs[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.record(Op::Add { a: a.0, b: b.0 }, r, c, out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("sub", a, b)?;
        let out: Vec<Real> = self.bufs[a.0]
            .data
            .iter()
            .zip(&self.bufs[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.record(Op::Sub { a: a.0, b: b.0 }, r, c, out))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("mul_elem", a, b)?;
        let out: Vec<Real> = self.bufs[a.0]
            .data
            .iter()
            .zip(&self.bufs[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.record(Op::MulElem { a: a.0, b: b.0 }, r, c, out))
    }

    pub fn scale(&mut self, x: Var, c: Real) -> Var {
        let (r, cl) = (self.rows(x), self.cols(x));
        let out: Vec<Real> = self.bufs[x.0].data.iter().map(|v| v * c).collect();
        self.record(Op::Scale { x: x.0, c }, r, cl, out)
    }

    pub fn add_const(&mut self, x: Var, c: Real) -> Var {
        let (r, cl) = (self.rows(x), self.cols(x));
        let out: Vec<Real> = self.bufs[x.0].data.iter().map(|v| v + c).collect();
        self.record(Op::AddConst { x: x.0 }, r, cl, out)
    }

    /// Elementwise `x^p`; requires strictly positive input.
    pub fn pow_const(&mut self, x: Var, p: Real) -> Result<Var> {
        if self.bufs[x.0].data.iter().any(|&v| v <= 0.0) {
            return Err(Error::NonFinite("pow_const on non-positive input".into()));
        }
        let (r, c) = (self.rows(x), self.cols(x));
        let out: Vec<Real> = self.bufs[x.0].data.iter().map(|v| v.powf(p)).collect();
        Ok(self.record(Op::PowConst { x: x.0, p }, r, c, out))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        let src = std::mem::take(&mut self.bufs[x.0].data);
        let mut out = Vec::with_capacity(src.len());
        for &v in &src {
            self.sig_feed(v > 0.0);
            out.push(v.max(0.0));
        }
        self.bufs[x.0].data = src;
        self.record(Op::Relu { x: x.0 }, r, c, out)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let (r, c) = (self.rows(x), self.cols(x));
        let out: Vec<Real> = self.bufs[x.0].data.iter().map(|v| v.exp()).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("exp overflow".into()));
        }
        Ok(self.record(Op::Exp { x: x.0 }, r, c, out))
    }

    /// Elementwise natural log; requires strictly positive input.
    pub fn ln(&mut self, x: Var) -> Result<Var> {
        if self.bufs[x.0].data.iter().any(|&v| v <= 0.0) {
            return Err(Error::NonFinite("ln on non-positive input".into()));
        }
        let (r, c) = (self.rows(x), self.cols(x));
        let out: Vec<Real> = self.bufs[x.0].data.iter().map(|v| v.ln()).collect();
        Ok(self.record(Op::Ln { x: x.0 }, r, c, out))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        let out: Vec<Real> = self.bufs[x.0].data.iter().map(|&v| softplus(v)).collect();
        self.record(Op::Softplus { x: x.0 }, r, c, out)
    }

    pub fn clamp(&mut self, x: Var, lo: Real, hi: Real) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        let src = std::mem::take(&mut self.bufs[x.0].data);
        let mut out = Vec::with_capacity(src.len());
        let mut events = 0;
        for &v in &src {
            let saturated = v <= lo || v >= hi;
            self.sig_feed(saturated);
            if saturated {
                events += 1;
            }
            out.push(v.clamp(lo, hi));
        }
        self.bufs[x.0].data = src;
        self.clamp_events += events;
        self.record(Op::Clamp { x: x.0, lo, hi }, r, c, out)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        let mut out = vec![0.0; r * c];
        softmax_rows_kernel(&self.bufs[x.0].data, &mut out, r, c);
        self.record(Op::SoftmaxRows { x: x.0 }, r, c, out)
    }

    // ── reductions and broadcasts ────────────────────────────────────

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: Real = self.bufs[x.0].data.iter().sum();
        self.record(Op::SumAll { x: x.0 }, 1, 1, vec![s])
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.bufs[x.0].data.len() as Real;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n)
    }

    /// `x + s` with `s` a tracked 1x1 buffer broadcast to every element.
    pub fn broadcast_add_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.scalar_value(s)?;
        let (r, c) = (self.rows(x), self.cols(x));
        let out: Vec<Real> = self.bufs[x.0].data.iter().map(|v| v + sv).collect();
        Ok(self.record(Op::BroadcastAddScalar { x: x.0, s: s.0 }, r, c, out))
    }

    /// `x * s` with `s` a tracked 1x1 buffer.
    pub fn broadcast_mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.scalar_value(s)?;
        let (r, c) = (self.rows(x), self.cols(x));
        let out: Vec<Real> = self.bufs[x.0].data.iter().map(|v| v * sv).collect();
        Ok(self.record(Op::BroadcastMulScalar { x: x.0, s: s.0 }, r, c, out))
    }

    /// Columnwise scale: `out[i,j] = x[i,j] * v[0,j]`.
    pub fn mul_row_vec(&mut self, x: Var, v: Var) -> Result<Var> {
        let (r, c) = (self.rows(x), self.cols(x));
        if self.rows(v) != 1 || self.cols(v) != c {
            return Err(self.dim_err("mul_row_vec", x, v));
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = self.bufs[x.0].data[i * c + j] * self.bufs[v.0].data[j];
            }
        }
        Ok(self.record(Op::MulRowVec { x: x.0, v: v.0 }, r, c, out))
    }

    /// Columnwise shift: `out[i,j] = x[i,j] + v[0,j]`.
    pub fn add_row_vec(&mut self, x: Var, v: Var) -> Result<Var> {
        let (r, c) = (self.rows(x), self.cols(x));
        if self.rows(v) != 1 || self.cols(v) != c {
            return Err(self.dim_err("add_row_vec", x, v));
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = self.bufs[x.0].data[i * c + j] + self.bufs[v.0].data[j];
            }
        }
        Ok(self.record(Op::AddRowVec { x: x.0, v: v.0 }, r, c, out))
    }

    // ── structural ───────────────────────────────────────────────────

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, ca) = (self.rows(a), self.cols(a));
        let (rb, cb) = (self.rows(b), self.cols(b));
        if r != rb {
            return Err(self.dim_err("concat_cols", a, b));
        }
        let mut out = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            out.extend_from_slice(&self.bufs[a.0].data[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&self.bufs[b.0].data[i * cb..(i + 1) * cb]);
        }
        Ok(self.record(Op::ConcatCols { a: a.0, b: b.0 }, r, ca + cb, out))
    }

    pub fn slice_cols(&mut self, x: Var, from: usize, to: usize) -> Result<Var> {
        let (r, c) = (self.rows(x), self.cols(x));
        if from >= to || to > c {
            return Err(Error::Dimension {
                op: "slice_cols",
                detail: format!("range {from}..{to} out of 0..{c}"),
            });
        }
        let w = to - from;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&self.bufs[x.0].data[i * c + from..i * c + to]);
        }
        Ok(self.record(Op::SliceCols { x: x.0, from }, r, w, out))
    }

    /// `out[i,:] = x[perm[i],:]`; `perm` must be a bijection on the rows.
    pub fn permute_rows(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let (r, c) = (self.rows(x), self.cols(x));
        validate_perm(perm, r)?;
        let mut out = Vec::with_capacity(r * c);
        for &src in perm {
            out.extend_from_slice(&self.bufs[x.0].data[src * c..(src + 1) * c]);
        }
        Ok(self.record(Op::PermuteRows { x: x.0, perm: perm.to_vec() }, r, c, out))
    }

    /// Each row of `x` repeated `times` consecutively.
    pub fn repeat_each_row(&mut self, x: Var, times: usize) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        let mut out = Vec::with_capacity(r * times * c);
        for i in 0..r {
            for _ in 0..times {
                out.extend_from_slice(&self.bufs[x.0].data[i * c..(i + 1) * c]);
            }
        }
        self.record(Op::RepeatEachRow { x: x.0, times }, r * times, c, out)
    }

    /// Whole matrix stacked `times` times.
    pub fn tile_rows(&mut self, x: Var, times: usize) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        let mut out = Vec::with_capacity(r * times * c);
        for _ in 0..times {
            out.extend_from_slice(&self.bufs[x.0].data);
        }
        self.record(Op::TileRows { x: x.0, times }, r * times, c, out)
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        if rows * cols != self.bufs[x.0].data.len() {
            return Err(Error::Dimension {
                op: "reshape",
                detail: format!("{rows}x{cols} vs {} values", self.bufs[x.0].data.len()),
            });
        }
        let out = self.bufs[x.0].data.clone();
        Ok(self.record(Op::Reshape { x: x.0 }, rows, cols, out))
    }

    // ── compositions ─────────────────────────────────────────────────

    /// Squared Frobenius norm of `a - b`.
    pub fn frob_sq_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul_elem(d, d)?;
        Ok(self.sum_all(sq))
    }

    // ── backward ─────────────────────────────────────────────────────

    fn acc(&mut self, id: usize, grad: &[Real]) {
        match &mut self.grads[id] {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(grad) {
                    *gi += di;
                }
            }
            None => self.grads[id] = Some(grad.to_vec()),
        }
    }

    /// Reverse replay from a scalar loss. Seeds d(loss)=1.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract("backward already run on this graph".into()));
        }
        if self.bufs[loss.0].data.len() != 1 {
            return Err(Error::Contract(format!(
                "loss must be scalar, got {}x{}",
                self.rows(loss),
                self.cols(loss)
            )));
        }
        self.backward_done = true;
        self.grads[loss.0] = Some(vec![1.0]);

        for idx in (0..self.ops.len()).rev() {
            let out = self.ops[idx].out;
            let d = match self.grads[out].take() {
                Some(d) => d,
                None => continue,
            };
            // Re-insert so repeated reads (e.g. diagnostics) still see it.
            self.grads[out] = Some(d.clone());
            self.backward_op(idx, &d);
        }
        Ok(())
    }

    fn backward_op(&mut self, idx: usize, d: &[Real]) {
        let out = self.ops[idx].out;
        // Ops are disjoint records; split borrows via raw indices.
        match &self.ops[idx].op {
            &Op::MatMul { a, b } => {
                let (m, k) = (self.bufs[a].rows, self.bufs[a].cols);
                let n = self.bufs[b].cols;
                let mut da = vec![0.0; m * k];
                matmul_nt_acc(d, &self.bufs[b].data, &mut da, m, n, k);
                let mut db = vec![0.0; k * n];
                matmul_tn_acc(&self.bufs[a].data, d, &mut db, m, k, n);
                self.acc(a, &da);
                self.acc(b, &db);
            }
            &Op::MatMulNT { a, b } => {
                let (m, k) = (self.bufs[a].rows, self.bufs[a].cols);
                let n = self.bufs[b].rows;
                let mut da = vec![0.0; m * k];
                matmul_acc(d, &self.bufs[b].data, &mut da, m, n, k);
                let mut db = vec![0.0; n * k];
                matmul_tn_acc(d, &self.bufs[a].data, &mut db, m, n, k);
                self.acc(a, &da);
                self.acc(b, &db);
            }
            &Op::Add { a, b } => {
                self.acc(a, d);
                self.acc(b, d);
            }
            &Op::Sub { a, b } => {
                self.acc(a, d);
                let neg: Vec<Real> = d.iter().map(|v| -v).collect();
                self.acc(b, &neg);
            }
            &Op::MulElem { a, b } => {
                let da: Vec<Real> = d.iter().zip(&self.bufs[b].data).map(|(x, y)| x * y).collect();
                let db: Vec<Real> = d.iter().zip(&self.bufs[a].data).map(|(x, y)| x * y).collect();
                self.acc(a, &da);
                self.acc(b, &db);
            }
            &Op::Scale { x, c } => {
                let dx: Vec<Real> = d.iter().map(|v| v * c).collect();
                self.acc(x, &dx);
            }
            &Op::AddConst { x } => self.acc(x, d),
            &Op::PowConst { x, p } => {
                let dx: Vec<Real> = d
                    .iter()
                    .zip(&self.bufs[x].data)
                    .map(|(dv, xv)| dv * p * xv.powf(p - 1.0))
                    .collect();
                self.acc(x, &dx);
            }
            &Op::Relu { x } => {
                let dx: Vec<Real> = d
                    .iter()
                    .zip(&self.bufs[x].data)
                    .map(|(dv, xv)| if *xv > 0.0 { *dv } else { 0.0 })
                    .collect();
                self.acc(x, &dx);
            }
            &Op::Exp { x } => {
                let dx: Vec<Real> = d.iter().zip(&self.bufs[out].data).map(|(dv, ov)| dv * ov).collect();
                self.acc(x, &dx);
            }
            &Op::Ln { x } => {
                let dx: Vec<Real> = d.iter().zip(&self.bufs[x].data).map(|(dv, xv)| dv / xv).collect();
                self.acc(x, &dx);
            }
            &Op::Softplus { x } => {
                let dx: Vec<Real> = d
                    .iter()
                    .zip(&self.bufs[x].data)
                    .map(|(dv, xv)| dv / (1.0 + (-xv).exp()))
                    .collect();
                self.acc(x, &dx);
            }
            &Op::Clamp { x, lo, hi } => {
                let dx: Vec<Real> = d
                    .iter()
                    .zip(&self.bufs[x].data)
                    .map(|(dv, xv)| if *xv > lo && *xv < hi { *dv } else { 0.0 })
                    .collect();
                self.acc(x, &dx);
            }
            &Op::SoftmaxRows { x } => {
                let (r, c) = (self.bufs[out].rows, self.bufs[out].cols);
                let s = &self.bufs[out].data;
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let base = i * c;
                    let mut dot = 0.0;
                    for j in 0..c {
                        dot += d[base + j] * s[base + j];
                    }
                    for j in 0..c {
                        dx[base + j] = s[base + j] * (d[base + j] - dot);
                    }
                }
                self.acc(x, &dx);
            }
            &Op::SumAll { x } => {
                let dx = vec![d[0]; self.bufs[x].data.len()];
                self.acc(x, &dx);
            }
            &Op::BroadcastAddScalar { x, s } => {
                self.acc(x, d);
                let ds: Real = d.iter().sum();
                self.acc(s, &[ds]);
            }
            &Op::BroadcastMulScalar { x, s } => {
                let sv = self.bufs[s].data[0];
                let dx: Vec<Real> = d.iter().map(|v| v * sv).collect();
                self.acc(x, &dx);
                let ds: Real = d.iter().zip(&self.bufs[x].data).map(|(dv, xv)| dv * xv).sum();
                self.acc(s, &[ds]);
            }
            &Op::MulRowVec { x, v } => {
                let (r, c) = (self.bufs[x].rows, self.bufs[x].cols);
                let mut dx = vec![0.0; r * c];
                let mut dv = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] = d[i * c + j] * self.bufs[v].data[j];
                        dv[j] += d[i * c + j] * self.bufs[x].data[i * c + j];
                    }
                }
                self.acc(x, &dx);
                self.acc(v, &dv);
            }
            &Op::AddRowVec { x, v } => {
                let (r, c) = (self.bufs[x].rows, self.bufs[x].cols);
                self.acc(x, d);
                let mut dv = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        dv[j] += d[i * c + j];
                    }
                }
                self.acc(v, &dv);
            }
            &Op::ConcatCols { a, b } => {
                let (r, ca) = (self.bufs[a].rows, self.bufs[a].cols);
                let cb = self.bufs[b].cols;
                let w = ca + cb;
                let mut da = vec![0.0; r * ca];
                let mut db = vec![0.0; r * cb];
                for i in 0..r {
                    da[i * ca..(i + 1) * ca].copy_from_slice(&d[i * w..i * w + ca]);
                    db[i * cb..(i + 1) * cb].copy_from_slice(&d[i * w + ca..(i + 1) * w]);
                }
                self.acc(a, &da);
                self.acc(b, &db);
            }
            &Op::SliceCols { x, from } => {
                let (r, c) = (self.bufs[x].rows, self.bufs[x].cols);
                let w = self.bufs[out].cols;
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    dx[i * c + from..i * c + from + w].copy_from_slice(&d[i * w..(i + 1) * w]);
                }
                self.acc(x, &dx);
            }
            Op::PermuteRows { x, perm } => {
                let x = *x;
                let c = self.bufs[x].cols;
                let mut dx = vec![0.0; self.bufs[x].data.len()];
                for (i, &src) in perm.iter().enumerate() {
                    for j in 0..c {
                        dx[src * c + j] += d[i * c + j];
                    }
                }
                self.acc(x, &dx);
            }
            &Op::RepeatEachRow { x, times } => {
                let (r, c) = (self.bufs[x].rows, self.bufs[x].cols);
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for t in 0..times {
                        let base = (i * times + t) * c;
                        for j in 0..c {
                            dx[i * c + j] += d[base + j];
                        }
                    }
                }
                self.acc(x, &dx);
            }
            &Op::TileRows { x, times } => {
                let (r, c) = (self.bufs[x].rows, self.bufs[x].cols);
                let mut dx = vec![0.0; r * c];
                for t in 0..times {
                    let base = t * r * c;
                    for i in 0..r * c {
                        dx[i] += d[base + i];
                    }
                }
                self.acc(x, &dx);
            }
            &Op::Reshape { x } => self.acc(x, d),
        }
    }

    /// Gradient of a scalar loss with respect to every registered
    /// parameter. Parameters the loss does not reach receive zeros.
    pub fn gradient(&mut self, loss: Var) -> Result<BTreeMap<String, Tensor>> {
        self.backward(loss)?;
        let mut out = BTreeMap::new();
        for (name, var) in &self.params {
            let b = &self.bufs[var.0];
            let data = match &self.grads[var.0] {
                Some(g) => g.clone(),
                None => vec![0.0; b.data.len()],
            };
            out.insert(
                name.clone(),
                Tensor::new(vec![b.rows, b.cols], data).expect("grad shape mirrors buffer"),
            );
        }
        Ok(out)
    }

    /// Raw gradient slot of any buffer (None if no gradient flowed).
    pub fn grad(&self, v: Var) -> Option<&[Real]> {
        self.grads[v.0].as_deref()
    }
}

pub(crate) fn validate_perm(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Contract(format!(
            "permutation length {} does not match row count {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::Contract("permutation is not a bijection".into()));
        }
        seen[p] = true;
    }
    Ok(())
}
