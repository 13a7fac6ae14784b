//! Dense row-major tensors and the pure numeric kernels built on them.
//!
//! `Tensor` is the value type everywhere: model parameters, activations,
//! frame matrices. Kernels here are plain functions of their inputs; the
//! tape in [`super::tape`] records them and adds the backward rules, and the
//! flow inverses call them directly.

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;

/// Dense tensor of `f64` values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build from shape and data; extents must multiply to the data length
    /// and every value must be finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.contains(&0) {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor constructed with NaN/Inf".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Normal(0, std^2) entries from a seeded stream.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..numel).map(|_| std * rng::standard_normal(rng)).collect(),
        }
    }

    /// Identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Rows of a 2-D tensor; a 1-D tensor counts as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on tensor of rank {}", self.shape.len()),
        }
    }

    /// Columns of a 2-D tensor; a 1-D tensor's length.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data, new shape (extents must multiply to the same length).
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    Ok(())
}

// ── Pure kernels ─────────────────────────────────────────────────────

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("add", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    })
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("sub", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
    })
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("mul", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

pub fn div(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("div", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x / y).collect(),
    })
}

/// `a @ b` for 2-D operands (a 1-D left operand is treated as one row).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    // i-k-j order keeps the inner loop contiguous on both `b` and `out`.
    for i in 0..m {
        for kk in 0..k {
            let av = a.data[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[kk * n..(kk + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn transpose(a: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Tensor {
        shape: vec![n, m],
        data: out,
    }
}

/// Add a length-`c` bias to every row of a `r x c` matrix.
pub fn add_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (r, c) = (x.rows(), x.cols());
    if bias.numel() != c {
        return Err(Error::ShapeMismatch {
            op: "add_bias",
            lhs: x.shape.clone(),
            rhs: bias.shape.clone(),
        });
    }
    let mut out = x.data.clone();
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] += bias.data[j];
        }
    }
    Ok(Tensor {
        shape: x.shape.clone(),
        data: out,
    })
}

/// Scale every row of a `r x c` matrix by a length-`c` per-channel factor.
pub fn mul_channels(x: &Tensor, scale: &Tensor) -> Result<Tensor> {
    let (r, c) = (x.rows(), x.cols());
    if scale.numel() != c {
        return Err(Error::ShapeMismatch {
            op: "mul_channels",
            lhs: x.shape.clone(),
            rhs: scale.shape.clone(),
        });
    }
    let mut out = x.data.clone();
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] *= scale.data[j];
        }
    }
    Ok(Tensor {
        shape: x.shape.clone(),
        data: out,
    })
}

/// Columns `[from, to)` of a 2-D tensor.
pub fn slice_cols(x: &Tensor, from: usize, to: usize) -> Result<Tensor> {
    let (r, c) = (x.rows(), x.cols());
    if from >= to || to > c {
        return Err(Error::ShapeMismatch {
            op: "slice_cols",
            lhs: x.shape.clone(),
            rhs: vec![from, to],
        });
    }
    let w = to - from;
    let mut out = Vec::with_capacity(r * w);
    for i in 0..r {
        out.extend_from_slice(&x.data[i * c + from..i * c + to]);
    }
    Tensor::new(vec![r, w], out)
}

/// Concatenate two 2-D tensors along the channel (column) axis.
pub fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ra, ca) = (a.rows(), a.cols());
    let (rb, cb) = (b.rows(), b.cols());
    if ra != rb {
        return Err(Error::ShapeMismatch {
            op: "concat_cols",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let mut out = Vec::with_capacity(ra * (ca + cb));
    for i in 0..ra {
        out.extend_from_slice(&a.data[i * ca..(i + 1) * ca]);
        out.extend_from_slice(&b.data[i * cb..(i + 1) * cb]);
    }
    Tensor::new(vec![ra, ca + cb], out)
}

/// 1-D convolution over the time (row) axis with zero padding, stride 1.
///
/// `x` is `t x c_in`, `w` is `(k * c_in) x c_out` with the tap index major,
/// `bias` has length `c_out`, `k` must be odd.
pub fn conv1d(x: &Tensor, w: &Tensor, bias: &Tensor, k: usize) -> Result<Tensor> {
    let (t, c_in) = (x.rows(), x.cols());
    let c_out = w.cols();
    if k.is_multiple_of(2) || w.rows() != k * c_in || bias.numel() != c_out {
        return Err(Error::ShapeMismatch {
            op: "conv1d",
            lhs: x.shape.clone(),
            rhs: w.shape.clone(),
        });
    }
    let pad = k / 2;
    let mut out = vec![0.0; t * c_out];
    for ti in 0..t {
        let orow = &mut out[ti * c_out..(ti + 1) * c_out];
        orow.copy_from_slice(&bias.data[..c_out]);
        for tap in 0..k {
            let src = ti as isize + tap as isize - pad as isize;
            if src < 0 || src >= t as isize {
                continue;
            }
            let xrow = &x.data[src as usize * c_in..(src as usize + 1) * c_in];
            for ci in 0..c_in {
                let xv = xrow[ci];
                if xv == 0.0 {
                    continue;
                }
                let wrow = &w.data[(tap * c_in + ci) * c_out..(tap * c_in + ci + 1) * c_out];
                for co in 0..c_out {
                    orow[co] += xv * wrow[co];
                }
            }
        }
    }
    Tensor::new(vec![t, c_out], out)
}

/// Rows of `table` selected by `indices`, stacked.
pub fn gather_rows(table: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let (rows, c) = (table.rows(), table.cols());
    let mut out = Vec::with_capacity(indices.len() * c);
    for &idx in indices {
        if idx >= rows {
            return Err(Error::Data(format!(
                "gather index {idx} out of range for table with {rows} rows"
            )));
        }
        out.extend_from_slice(&table.data[idx * c..(idx + 1) * c]);
    }
    Tensor::new(vec![indices.len(), c], out)
}

pub fn sum(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data.iter().sum())
}

pub fn mean(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data.iter().sum::<f64>() / x.numel() as f64)
}

/// Per-row sums of a `r x c` matrix as a `r x 1` column.
pub fn row_sums(x: &Tensor) -> Tensor {
    let (r, c) = (x.rows(), x.cols());
    let data = (0..r)
        .map(|i| x.data[i * c..(i + 1) * c].iter().sum())
        .collect();
    Tensor {
        shape: vec![r, 1],
        data,
    }
}

/// Repeat a `r x 1` column across `n` columns.
pub fn broadcast_cols(x: &Tensor, n: usize) -> Result<Tensor> {
    if x.cols() != 1 {
        return Err(Error::ShapeMismatch {
            op: "broadcast_cols",
            lhs: x.shape.clone(),
            rhs: vec![n],
        });
    }
    let r = x.rows();
    let mut out = Vec::with_capacity(r * n);
    for i in 0..r {
        for _ in 0..n {
            out.push(x.data[i]);
        }
    }
    Tensor::new(vec![r, n], out)
}

/// Repeat a length-`c` vector (or `1 x c` row) across `r` rows.
pub fn broadcast_row(x: &Tensor, r: usize) -> Result<Tensor> {
    if x.rows() != 1 {
        return Err(Error::ShapeMismatch {
            op: "broadcast_row",
            lhs: x.shape.clone(),
            rhs: vec![r],
        });
    }
    let c = x.cols();
    let mut out = Vec::with_capacity(r * c);
    for _ in 0..r {
        out.extend_from_slice(&x.data);
    }
    Tensor::new(vec![r, c], out)
}

/// Diagonal matrix from a length-`d` vector.
pub fn diag(v: &Tensor) -> Tensor {
    let d = v.numel();
    let mut out = Tensor::zeros(&[d, d]);
    for i in 0..d {
        out.data[i * d + i] = v.data[i];
    }
    out
}

pub fn exp(x: &Tensor) -> Tensor {
    x.map(f64::exp)
}

pub fn ln(x: &Tensor) -> Tensor {
    x.map(f64::ln)
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn softplus_scalar(v: f64) -> f64 {
    // log(1 + e^v) without overflow for large |v|.
    if v > 30.0 {
        v
    } else if v < -30.0 {
        v.exp()
    } else {
        v.exp().ln_1p()
    }
}

pub fn softplus(x: &Tensor) -> Tensor {
    x.map(softplus_scalar)
}

pub fn scale(x: &Tensor, c: f64) -> Tensor {
    x.map(|v| v * c)
}

pub fn add_scalar(x: &Tensor, c: f64) -> Tensor {
    x.map(|v| v + c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_passthrough() {
        let x = Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = matmul(&Tensor::eye(3), &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn sum_exp_log_inverse_pair() {
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = sum(&exp(&ln(&x)));
        assert!((y.item() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn conv1d_kernel_one_identity_map() {
        let x = Tensor::new(vec![4, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let w = Tensor::eye(2); // k=1, c_in=2, c_out=2
        let b = Tensor::zeros(&[2]);
        let y = conv1d(&x, &w, &b, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 5]);
        let err = add(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    }

    #[test]
    fn constructor_rejects_non_finite() {
        assert!(Tensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn slice_concat_roundtrip() {
        let x = Tensor::new(vec![2, 4], (0..8).map(|v| v as f64).collect()).unwrap();
        let a = slice_cols(&x, 0, 2).unwrap();
        let b = slice_cols(&x, 2, 4).unwrap();
        assert_eq!(concat_cols(&a, &b).unwrap(), x);
    }

    #[test]
    fn outputs_do_not_alias_inputs() {
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut y = add(&x, &x).unwrap();
        y.data_mut()[0] = 99.0;
        assert_eq!(x.data()[0], 1.0);
    }
}
