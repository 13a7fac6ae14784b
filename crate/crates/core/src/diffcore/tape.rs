//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Operations append nodes during the forward pass; `backward` replays them
//! in reverse, accumulating vector-Jacobian products into per-node gradient
//! buffers. Nodes are created in topological order by construction, so the
//! reverse sweep visits each node exactly once.
//!
//! Forward values come from the pure kernels in [`super::tensor`]; this
//! module only adds the backward rules.

use crate::error::{Error, Result};

use super::tensor::{self, Tensor};

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { is_param: bool },
    Matmul { a: VarId, b: VarId },
    Transpose { a: VarId },
    Add { a: VarId, b: VarId },
    Sub { a: VarId, b: VarId },
    Mul { a: VarId, b: VarId },
    Div { a: VarId, b: VarId },
    Exp { a: VarId },
    Ln { a: VarId },
    Tanh { a: VarId },
    Sigmoid { a: VarId },
    Softplus { a: VarId },
    Scale { a: VarId, c: f64 },
    AddScalar { a: VarId },
    AddBias { x: VarId, b: VarId },
    MulChannels { x: VarId, s: VarId },
    Sum { a: VarId },
    Mean { a: VarId },
    RowSums { a: VarId },
    BroadcastCols { a: VarId },
    BroadcastRow { a: VarId },
    SliceCols { a: VarId, from: usize, to: usize },
    ConcatCols { a: VarId, b: VarId },
    Conv1d { x: VarId, w: VarId, b: VarId, k: usize },
    GatherRows { table: VarId, indices: Vec<usize> },
    Diag { a: VarId },
    Reshape { a: VarId },
}

/// Recording tape: forward values plus enough structure to run backward.
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<Tensor>,
    grads: Vec<Option<Tensor>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            vals: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, val: Tensor) -> VarId {
        let id = VarId(self.ops.len());
        self.ops.push(op);
        self.vals.push(val);
        self.grads.push(None);
        id
    }

    /// Constant input; receives no gradient of interest.
    pub fn leaf(&mut self, t: Tensor) -> VarId {
        self.push(Op::Leaf { is_param: false }, t)
    }

    /// Trainable parameter; gradient retrievable after `backward`.
    pub fn param(&mut self, t: Tensor) -> VarId {
        self.push(Op::Leaf { is_param: true }, t)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.vals[id.0]
    }

    /// Gradient accumulated into `id` by the last `backward`, if any flowed.
    pub fn grad(&self, id: VarId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient for a parameter, zeros if untouched by the backward sweep.
    pub fn param_grad(&self, id: VarId) -> Tensor {
        debug_assert!(
            matches!(self.ops[id.0], Op::Leaf { is_param: true }),
            "param_grad on a non-parameter var"
        );
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.vals[id.0].shape()),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    // ── Recorded operations ──────────────────────────────────────────

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let val = tensor::matmul(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(Op::Matmul { a, b }, val))
    }

    pub fn transpose(&mut self, a: VarId) -> VarId {
        let val = tensor::transpose(&self.vals[a.0]);
        self.push(Op::Transpose { a }, val)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let val = tensor::add(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(Op::Add { a, b }, val))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let val = tensor::sub(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(Op::Sub { a, b }, val))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let val = tensor::mul(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(Op::Mul { a, b }, val))
    }

    pub fn div(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let val = tensor::div(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(Op::Div { a, b }, val))
    }

    pub fn exp(&mut self, a: VarId) -> VarId {
        let val = tensor::exp(&self.vals[a.0]);
        self.push(Op::Exp { a }, val)
    }

    pub fn ln(&mut self, a: VarId) -> VarId {
        let val = tensor::ln(&self.vals[a.0]);
        self.push(Op::Ln { a }, val)
    }

    pub fn tanh(&mut self, a: VarId) -> VarId {
        let val = tensor::tanh(&self.vals[a.0]);
        self.push(Op::Tanh { a }, val)
    }

    pub fn sigmoid(&mut self, a: VarId) -> VarId {
        let val = tensor::sigmoid(&self.vals[a.0]);
        self.push(Op::Sigmoid { a }, val)
    }

    pub fn softplus(&mut self, a: VarId) -> VarId {
        let val = tensor::softplus(&self.vals[a.0]);
        self.push(Op::Softplus { a }, val)
    }

    pub fn scale(&mut self, a: VarId, c: f64) -> VarId {
        let val = tensor::scale(&self.vals[a.0], c);
        self.push(Op::Scale { a, c }, val)
    }

    pub fn add_scalar(&mut self, a: VarId, c: f64) -> VarId {
        let val = tensor::add_scalar(&self.vals[a.0], c);
        self.push(Op::AddScalar { a }, val)
    }

    pub fn add_bias(&mut self, x: VarId, b: VarId) -> Result<VarId> {
        let val = tensor::add_bias(&self.vals[x.0], &self.vals[b.0])?;
        Ok(self.push(Op::AddBias { x, b }, val))
    }

    pub fn mul_channels(&mut self, x: VarId, s: VarId) -> Result<VarId> {
        let val = tensor::mul_channels(&self.vals[x.0], &self.vals[s.0])?;
        Ok(self.push(Op::MulChannels { x, s }, val))
    }

    pub fn sum(&mut self, a: VarId) -> VarId {
        let val = tensor::sum(&self.vals[a.0]);
        self.push(Op::Sum { a }, val)
    }

    pub fn mean(&mut self, a: VarId) -> VarId {
        let val = tensor::mean(&self.vals[a.0]);
        self.push(Op::Mean { a }, val)
    }

    pub fn row_sums(&mut self, a: VarId) -> VarId {
        let val = tensor::row_sums(&self.vals[a.0]);
        self.push(Op::RowSums { a }, val)
    }

    pub fn broadcast_cols(&mut self, a: VarId, n: usize) -> Result<VarId> {
        let val = tensor::broadcast_cols(&self.vals[a.0], n)?;
        Ok(self.push(Op::BroadcastCols { a }, val))
    }

    pub fn broadcast_row(&mut self, a: VarId, r: usize) -> Result<VarId> {
        let val = tensor::broadcast_row(&self.vals[a.0], r)?;
        Ok(self.push(Op::BroadcastRow { a }, val))
    }

    pub fn slice_cols(&mut self, a: VarId, from: usize, to: usize) -> Result<VarId> {
        let val = tensor::slice_cols(&self.vals[a.0], from, to)?;
        Ok(self.push(Op::SliceCols { a, from, to }, val))
    }

    pub fn concat_cols(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let val = tensor::concat_cols(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(Op::ConcatCols { a, b }, val))
    }

    pub fn conv1d(&mut self, x: VarId, w: VarId, b: VarId, k: usize) -> Result<VarId> {
        let val = tensor::conv1d(&self.vals[x.0], &self.vals[w.0], &self.vals[b.0], k)?;
        Ok(self.push(Op::Conv1d { x, w, b, k }, val))
    }

    pub fn gather_rows(&mut self, table: VarId, indices: &[usize]) -> Result<VarId> {
        let val = tensor::gather_rows(&self.vals[table.0], indices)?;
        Ok(self.push(
            Op::GatherRows {
                table,
                indices: indices.to_vec(),
            },
            val,
        ))
    }

    pub fn diag(&mut self, a: VarId) -> VarId {
        let val = tensor::diag(&self.vals[a.0]);
        self.push(Op::Diag { a }, val)
    }

    pub fn reshape(&mut self, a: VarId, shape: &[usize]) -> Result<VarId> {
        let val = self.vals[a.0].reshaped(shape)?;
        Ok(self.push(Op::Reshape { a }, val))
    }

    // ── Backward pass ────────────────────────────────────────────────

    fn accumulate(&mut self, id: VarId, delta: Tensor) {
        match &mut self.grads[id.0] {
            Some(g) => {
                debug_assert_eq!(g.shape(), delta.shape());
                for (gv, dv) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gv += dv;
                }
            }
            None => self.grads[id.0] = Some(delta),
        }
    }

    /// Propagate gradients from a scalar output back to every leaf.
    pub fn backward(&mut self, out: VarId) -> Result<()> {
        if !self.vals[out.0].is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: self.vals[out.0].shape().to_vec(),
                rhs: vec![1],
            });
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[out.0] = Some(Tensor::scalar(1.0));

        for idx in (0..self.ops.len()).rev() {
            let Some(dout) = self.grads[idx].clone() else {
                continue;
            };
            let op = self.ops[idx].clone();
            match op {
                Op::Leaf { .. } => {}
                Op::Matmul { a, b } => {
                    let da = tensor::matmul(&dout, &tensor::transpose(&self.vals[b.0]))?;
                    let db = tensor::matmul(&tensor::transpose(&self.vals[a.0]), &dout)?;
                    // Left operand may have been a 1-D vector; mirror its shape.
                    self.accumulate(a, da.reshaped(self.vals[a.0].shape())?);
                    self.accumulate(b, db);
                }
                Op::Transpose { a } => {
                    self.accumulate(a, tensor::transpose(&dout));
                }
                Op::Add { a, b } => {
                    self.accumulate(a, dout.clone());
                    self.accumulate(b, dout);
                }
                Op::Sub { a, b } => {
                    self.accumulate(a, dout.clone());
                    self.accumulate(b, tensor::scale(&dout, -1.0));
                }
                Op::Mul { a, b } => {
                    let da = tensor::mul(&dout, &self.vals[b.0])?;
                    let db = tensor::mul(&dout, &self.vals[a.0])?;
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Div { a, b } => {
                    let bv = &self.vals[b.0];
                    let da = tensor::div(&dout, bv)?;
                    let y = &self.vals[idx]; // a/b
                    let db = tensor::scale(&tensor::div(&tensor::mul(&dout, y)?, bv)?, -1.0);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Exp { a } => {
                    let da = tensor::mul(&dout, &self.vals[idx])?;
                    self.accumulate(a, da);
                }
                Op::Ln { a } => {
                    let da = tensor::div(&dout, &self.vals[a.0])?;
                    self.accumulate(a, da);
                }
                Op::Tanh { a } => {
                    let y = &self.vals[idx];
                    let da = tensor::mul(&dout, &y.map(|v| 1.0 - v * v))?;
                    self.accumulate(a, da);
                }
                Op::Sigmoid { a } => {
                    let y = &self.vals[idx];
                    let da = tensor::mul(&dout, &y.map(|v| v * (1.0 - v)))?;
                    self.accumulate(a, da);
                }
                Op::Softplus { a } => {
                    let da = tensor::mul(&dout, &tensor::sigmoid(&self.vals[a.0]))?;
                    self.accumulate(a, da);
                }
                Op::Scale { a, c } => {
                    self.accumulate(a, tensor::scale(&dout, c));
                }
                Op::AddScalar { a } => {
                    self.accumulate(a, dout);
                }
                Op::AddBias { x, b } => {
                    let (r, c) = (dout.rows(), dout.cols());
                    let mut db = Tensor::zeros(self.vals[b.0].shape());
                    for i in 0..r {
                        for j in 0..c {
                            db.data_mut()[j] += dout.get2(i, j);
                        }
                    }
                    self.accumulate(x, dout);
                    self.accumulate(b, db);
                }
                Op::MulChannels { x, s } => {
                    let xv = self.vals[x.0].clone();
                    let sv = self.vals[s.0].clone();
                    let dx = tensor::mul_channels(&dout, &sv)?;
                    let (r, c) = (dout.rows(), dout.cols());
                    let mut ds = Tensor::zeros(sv.shape());
                    for i in 0..r {
                        for j in 0..c {
                            ds.data_mut()[j] += dout.get2(i, j) * xv.get2(i, j);
                        }
                    }
                    self.accumulate(x, dx);
                    self.accumulate(s, ds);
                }
                Op::Sum { a } => {
                    let g = dout.item();
                    self.accumulate(a, Tensor::full(self.vals[a.0].shape(), g));
                }
                Op::Mean { a } => {
                    let n = self.vals[a.0].numel() as f64;
                    let g = dout.item() / n;
                    self.accumulate(a, Tensor::full(self.vals[a.0].shape(), g));
                }
                Op::RowSums { a } => {
                    let (r, c) = (self.vals[a.0].rows(), self.vals[a.0].cols());
                    let mut da = Tensor::zeros(&[r, c]);
                    for i in 0..r {
                        for j in 0..c {
                            da.set2(i, j, dout.data()[i]);
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::BroadcastCols { a } => {
                    self.accumulate(a, tensor::row_sums(&dout));
                }
                Op::BroadcastRow { a } => {
                    let (r, c) = (dout.rows(), dout.cols());
                    let mut da = Tensor::zeros(self.vals[a.0].shape());
                    for i in 0..r {
                        for j in 0..c {
                            da.data_mut()[j] += dout.get2(i, j);
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::SliceCols { a, from, to } => {
                    let (r, c) = (self.vals[a.0].rows(), self.vals[a.0].cols());
                    let mut da = Tensor::zeros(&[r, c]);
                    for i in 0..r {
                        for j in from..to {
                            da.set2(i, j, dout.get2(i, j - from));
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::ConcatCols { a, b } => {
                    let ca = self.vals[a.0].cols();
                    let cb = self.vals[b.0].cols();
                    let da = tensor::slice_cols(&dout, 0, ca)?;
                    let db = tensor::slice_cols(&dout, ca, ca + cb)?;
                    self.accumulate(a, da.reshaped(self.vals[a.0].shape())?);
                    self.accumulate(b, db.reshaped(self.vals[b.0].shape())?);
                }
                Op::Conv1d { x, w, b, k } => {
                    let xv = self.vals[x.0].clone();
                    let wv = self.vals[w.0].clone();
                    let (t, c_in) = (xv.rows(), xv.cols());
                    let c_out = wv.cols();
                    let pad = k / 2;
                    let mut dx = Tensor::zeros(&[t, c_in]);
                    let mut dw = Tensor::zeros(&[k * c_in, c_out]);
                    let mut db = Tensor::zeros(self.vals[b.0].shape());
                    for ti in 0..t {
                        for co in 0..c_out {
                            let g = dout.get2(ti, co);
                            if g == 0.0 {
                                continue;
                            }
                            db.data_mut()[co] += g;
                            for tap in 0..k {
                                let src = ti as isize + tap as isize - pad as isize;
                                if src < 0 || src >= t as isize {
                                    continue;
                                }
                                let src = src as usize;
                                for ci in 0..c_in {
                                    let widx = (tap * c_in + ci) * c_out + co;
                                    dx.data_mut()[src * c_in + ci] += g * wv.data()[widx];
                                    dw.data_mut()[widx] += g * xv.get2(src, ci);
                                }
                            }
                        }
                    }
                    self.accumulate(x, dx);
                    self.accumulate(w, dw);
                    self.accumulate(b, db);
                }
                Op::GatherRows { table, indices } => {
                    let c = self.vals[table.0].cols();
                    let mut dt = Tensor::zeros(self.vals[table.0].shape());
                    for (row, &idx) in indices.iter().enumerate() {
                        for j in 0..c {
                            dt.data_mut()[idx * c + j] += dout.get2(row, j);
                        }
                    }
                    self.accumulate(table, dt);
                }
                Op::Diag { a } => {
                    let d = self.vals[a.0].numel();
                    let mut da = Tensor::zeros(self.vals[a.0].shape());
                    for i in 0..d {
                        da.data_mut()[i] = dout.get2(i, i);
                    }
                    self.accumulate(a, da);
                }
                Op::Reshape { a } => {
                    self.accumulate(a, dout.reshaped(self.vals[a.0].shape())?);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Central finite difference of `f` at `x`, one element at a time.
    fn finite_diff(x: &Tensor, f: &mut dyn FnMut(&Tensor) -> f64) -> Tensor {
        let h = 1e-4;
        let mut g = Tensor::zeros(x.shape());
        for i in 0..x.numel() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let fp = f(&xp);
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fm = f(&xm);
            g.data_mut()[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
        let num = a.max_abs_diff(b);
        let den = b
            .data()
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max)
            .max(1e-6);
        num / den
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        tape.backward(y).unwrap();
        assert!((tape.param_grad(x).item() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_sum_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[4]));
        let y = tape.sigmoid(x);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        for g in tape.param_grad(x).data() {
            assert!((g - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_output() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2, 2]));
        let y = tape.exp(x);
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn two_layer_net_matches_finite_differences() {
        let mut r = rng::seeded(11);
        let x0 = Tensor::randn(&[3, 4], 0.5, &mut r);
        let w1 = Tensor::randn(&[4, 5], 0.5, &mut r);
        let b1 = Tensor::randn(&[5], 0.2, &mut r);
        let w2 = Tensor::randn(&[5, 2], 0.5, &mut r);

        let run = |x0: &Tensor, w1: &Tensor, b1: &Tensor, w2: &Tensor| -> (Tape, VarId, [VarId; 4]) {
            let mut tape = Tape::new();
            let xv = tape.param(x0.clone());
            let w1v = tape.param(w1.clone());
            let b1v = tape.param(b1.clone());
            let w2v = tape.param(w2.clone());
            let h = tape.matmul(xv, w1v).unwrap();
            let h = tape.add_bias(h, b1v).unwrap();
            let h = tape.tanh(h);
            let o = tape.matmul(h, w2v).unwrap();
            let sq = tape.mul(o, o).unwrap();
            let loss = tape.mean(sq);
            (tape, loss, [xv, w1v, b1v, w2v])
        };

        let (mut tape, loss, vars) = run(&x0, &w1, &b1, &w2);
        tape.backward(loss).unwrap();
        let analytic: Vec<Tensor> = vars.iter().map(|&v| tape.param_grad(v)).collect();

        let params = [&x0, &w1, &b1, &w2];
        for (pi, p) in params.iter().enumerate() {
            let fd = finite_diff(p, &mut |pert| {
                let mut ts = [x0.clone(), w1.clone(), b1.clone(), w2.clone()];
                ts[pi] = pert.clone();
                let (t, l, _) = run(&ts[0], &ts[1], &ts[2], &ts[3]);
                t.value(l).item()
            });
            assert!(
                rel_err(&analytic[pi], &fd) <= 1e-3,
                "param {pi}: rel err {}",
                rel_err(&analytic[pi], &fd)
            );
        }
    }

    #[test]
    fn determinism_same_seed_bit_identical() {
        let build = || {
            let mut r = rng::seeded(21);
            let x = Tensor::randn(&[4, 4], 1.0, &mut r);
            let mut tape = Tape::new();
            let xv = tape.param(x);
            let e = tape.exp(xv);
            let s = tape.sum(e);
            tape.backward(s).unwrap();
            (tape.value(s).item(), tape.param_grad(xv))
        };
        let (v1, g1) = build();
        let (v2, g2) = build();
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert_eq!(g1, g2);
    }
}
