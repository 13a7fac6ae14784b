//! Invertible per-frame channel mixing (the 1x1-convolution role).
//!
//! The weight matrix is kept in factored form `W = P * L * V`: a fixed
//! permutation, a unit lower-triangular factor, and an upper-triangular
//! factor whose diagonal is `sign .* exp(log_diag)` with fixed signs. The
//! log-determinant is then `t * sum(log_diag)`, exact and O(d), and the
//! inverse is two triangular solves per frame.

use crate::diffcore::tape::{Tape, VarId};
use crate::diffcore::tensor::{self, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct InvertibleLinear {
    /// Row permutation: `P[i, perm[i]] = 1`.
    pub perm: Vec<usize>,
    /// Fixed diagonal signs (+1/-1).
    pub sign: Vec<f64>,
    /// Strictly lower-triangular entries (others ignored).
    pub lower: Tensor,
    /// Strictly upper-triangular entries (others ignored).
    pub upper: Tensor,
    /// log |diagonal| of the upper factor.
    pub log_diag: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct InvertibleLinearVars {
    pub lower: VarId,
    pub upper: VarId,
    pub log_diag: VarId,
}

impl InvertibleLinear {
    /// Identity map: `W = I`, logdet 0.
    pub fn identity(dim: usize) -> Self {
        Self {
            perm: (0..dim).collect(),
            sign: vec![1.0; dim],
            lower: Tensor::zeros(&[dim, dim]),
            upper: Tensor::zeros(&[dim, dim]),
            log_diag: Tensor::zeros(&[dim]),
        }
    }

    /// Factor an explicit matrix. Rejects singular input.
    pub fn from_matrix(w: &Tensor) -> Result<Self> {
        let d = w.rows();
        if w.cols() != d {
            return Err(Error::ShapeMismatch {
                op: "invertible_linear",
                lhs: w.shape().to_vec(),
                rhs: vec![d, d],
            });
        }
        // LU with partial pivoting: rows[i] tracks which original row sits at i.
        let mut a = w.clone();
        let mut rows: Vec<usize> = (0..d).collect();
        let scale_ref = w.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for k in 0..d {
            let (mut pivot_row, mut pivot_abs) = (k, a.get2(k, k).abs());
            for i in k + 1..d {
                let v = a.get2(i, k).abs();
                if v > pivot_abs {
                    pivot_row = i;
                    pivot_abs = v;
                }
            }
            if pivot_abs < 1e-12 * scale_ref {
                return Err(Error::Singular(format!(
                    "pivot {pivot_abs:.3e} at column {k} below tolerance"
                )));
            }
            if pivot_row != k {
                for j in 0..d {
                    let tmp = a.get2(k, j);
                    a.set2(k, j, a.get2(pivot_row, j));
                    a.set2(pivot_row, j, tmp);
                }
                rows.swap(k, pivot_row);
            }
            for i in k + 1..d {
                let factor = a.get2(i, k) / a.get2(k, k);
                a.set2(i, k, factor);
                for j in k + 1..d {
                    let v = a.get2(i, j) - factor * a.get2(k, j);
                    a.set2(i, j, v);
                }
            }
        }
        // After elimination: P_piv * W = L * U with (P_piv)[i, rows[i]] = 1,
        // so W = P_piv^T * L * U; our stored perm satisfies perm[rows[i]] = i.
        let mut perm = vec![0usize; d];
        for (i, &r) in rows.iter().enumerate() {
            perm[r] = i;
        }
        let mut lower = Tensor::zeros(&[d, d]);
        let mut upper = Tensor::zeros(&[d, d]);
        let mut sign = vec![1.0; d];
        let mut log_diag = Tensor::zeros(&[d]);
        for i in 0..d {
            for j in 0..i {
                lower.set2(i, j, a.get2(i, j));
            }
            let diag = a.get2(i, i);
            sign[i] = if diag < 0.0 { -1.0 } else { 1.0 };
            log_diag.data_mut()[i] = diag.abs().ln();
            for j in i + 1..d {
                upper.set2(i, j, a.get2(i, j));
            }
        }
        Ok(Self {
            perm,
            sign,
            lower,
            upper,
            log_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    fn lower_factor(&self) -> Tensor {
        let d = self.dim();
        let mut l = Tensor::eye(d);
        for i in 0..d {
            for j in 0..i {
                l.set2(i, j, self.lower.get2(i, j));
            }
        }
        l
    }

    fn upper_factor(&self) -> Tensor {
        let d = self.dim();
        let mut v = Tensor::zeros(&[d, d]);
        for i in 0..d {
            v.set2(i, i, self.sign[i] * self.log_diag.data()[i].exp());
            for j in i + 1..d {
                v.set2(i, j, self.upper.get2(i, j));
            }
        }
        v
    }

    fn perm_matrix(&self) -> Tensor {
        let d = self.dim();
        let mut p = Tensor::zeros(&[d, d]);
        for (i, &j) in self.perm.iter().enumerate() {
            p.set2(i, j, 1.0);
        }
        p
    }

    /// Dense `W`, assembled from the factors.
    pub fn weight(&self) -> Result<Tensor> {
        let lv = tensor::matmul(&self.lower_factor(), &self.upper_factor())?;
        tensor::matmul(&self.perm_matrix(), &lv)
    }

    /// `y_frame = W x_frame` for every frame; logdet is `t * sum(log_diag)`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, f64)> {
        let w = self.weight()?;
        let y = tensor::matmul(x, &tensor::transpose(&w))?;
        let logdet = x.rows() as f64 * self.log_diag.data().iter().sum::<f64>();
        Ok((y, logdet))
    }

    /// Exact inverse via the triangular factors.
    pub fn inverse(&self, y: &Tensor) -> Result<Tensor> {
        let d = self.dim();
        if y.cols() != d {
            return Err(Error::ShapeMismatch {
                op: "invertible_linear inverse",
                lhs: y.shape().to_vec(),
                rhs: vec![d],
            });
        }
        let t = y.rows();
        let mut out = Tensor::zeros(&[t, d]);
        let mut u = vec![0.0; d];
        let mut z = vec![0.0; d];
        for f in 0..t {
            // u = P^T y
            for i in 0..d {
                u[self.perm[i]] = y.get2(f, i);
            }
            // L z = u (unit diagonal forward substitution)
            for i in 0..d {
                let mut acc = u[i];
                for j in 0..i {
                    acc -= self.lower.get2(i, j) * z[j];
                }
                z[i] = acc;
            }
            // V x = z (back substitution)
            for i in (0..d).rev() {
                let mut acc = z[i];
                for j in i + 1..d {
                    acc -= self.upper.get2(i, j) * out.get2(f, j);
                }
                let diag = self.sign[i] * self.log_diag.data()[i].exp();
                out.set2(f, i, acc / diag);
            }
        }
        Ok(out)
    }

    pub fn bind(&self, tape: &mut Tape) -> InvertibleLinearVars {
        InvertibleLinearVars {
            lower: tape.param(self.lower.clone()),
            upper: tape.param(self.upper.clone()),
            log_diag: tape.param(self.log_diag.clone()),
        }
    }

    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        x: VarId,
        vars: InvertibleLinearVars,
    ) -> Result<(VarId, VarId)> {
        let d = self.dim();
        let t = tape.value(x).rows() as f64;
        let mut l_mask = Tensor::zeros(&[d, d]);
        let mut u_mask = Tensor::zeros(&[d, d]);
        for i in 0..d {
            for j in 0..i {
                l_mask.set2(i, j, 1.0);
            }
            for j in i + 1..d {
                u_mask.set2(i, j, 1.0);
            }
        }
        let l_mask = tape.leaf(l_mask);
        let u_mask = tape.leaf(u_mask);
        let eye = tape.leaf(Tensor::eye(d));
        let p = tape.leaf(self.perm_matrix());
        let sign = tape.leaf(Tensor::new(vec![d], self.sign.clone())?);

        let l_strict = tape.mul(vars.lower, l_mask)?;
        let l = tape.add(eye, l_strict)?;
        let diag_vec = {
            let e = tape.exp(vars.log_diag);
            tape.mul(sign, e)?
        };
        let diag_m = tape.diag(diag_vec);
        let u_strict = tape.mul(vars.upper, u_mask)?;
        let v = tape.add(u_strict, diag_m)?;
        let lv = tape.matmul(l, v)?;
        let w = tape.matmul(p, lv)?;
        let wt = tape.transpose(w);
        let y = tape.matmul(x, wt)?;
        let ld_sum = tape.sum(vars.log_diag);
        let logdet = tape.scale(ld_sum, t);
        Ok((y, logdet))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Dense determinant by LU with partial pivoting (the test-side oracle).
    fn det_oracle(m: &Tensor) -> f64 {
        let d = m.rows();
        let mut a = m.clone();
        let mut det = 1.0;
        for k in 0..d {
            let mut pivot = k;
            for i in k + 1..d {
                if a.get2(i, k).abs() > a.get2(pivot, k).abs() {
                    pivot = i;
                }
            }
            if a.get2(pivot, k) == 0.0 {
                return 0.0;
            }
            if pivot != k {
                for j in 0..d {
                    let tmp = a.get2(k, j);
                    a.set2(k, j, a.get2(pivot, j));
                    a.set2(pivot, j, tmp);
                }
                det = -det;
            }
            det *= a.get2(k, k);
            for i in k + 1..d {
                let f = a.get2(i, k) / a.get2(k, k);
                for j in k..d {
                    let v = a.get2(i, j) - f * a.get2(k, j);
                    a.set2(i, j, v);
                }
            }
        }
        det
    }

    #[test]
    fn identity_is_identity() {
        let lin = InvertibleLinear::identity(4);
        let x = Tensor::randn(&[5, 4], 1.0, &mut rng::seeded(1));
        let (y, logdet) = lin.forward(&x).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-15);
        assert_eq!(logdet, 0.0);
    }

    #[test]
    fn swap_matrix_swaps_channels_logdet_zero() {
        let w = Tensor::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let lin = InvertibleLinear::from_matrix(&w).unwrap();
        let x = Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let (y, logdet) = lin.forward(&x).unwrap();
        for f in 0..3 {
            assert!((y.get2(f, 0) - x.get2(f, 1)).abs() < 1e-12);
            assert!((y.get2(f, 1) - x.get2(f, 0)).abs() < 1e-12);
        }
        // |det| = 1 so t * ln|det| = 0
        assert!(logdet.abs() < 1e-12);
    }

    #[test]
    fn factorization_reconstructs_w_and_logdet_matches_dense_oracle() {
        let mut r = rng::seeded(7);
        for trial in 0..8 {
            let w = loop {
                let cand = Tensor::randn(&[4, 4], 1.0, &mut r);
                if det_oracle(&cand).abs() > 1e-3 {
                    break cand;
                }
            };
            let lin = InvertibleLinear::from_matrix(&w).unwrap();
            let rebuilt = lin.weight().unwrap();
            assert!(
                rebuilt.max_abs_diff(&w) < 1e-9,
                "trial {trial}: reconstruction off by {}",
                rebuilt.max_abs_diff(&w)
            );
            let t = 3usize;
            let x = Tensor::randn(&[t, 4], 1.0, &mut r);
            let (_, logdet) = lin.forward(&x).unwrap();
            let expect = t as f64 * det_oracle(&w).abs().ln();
            assert!(
                (logdet - expect).abs() < 1e-9,
                "trial {trial}: {logdet} vs {expect}"
            );
        }
    }

    #[test]
    fn singular_matrix_rejected_at_construction() {
        let w = Tensor::new(vec![2, 2], vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        match InvertibleLinear::from_matrix(&w) {
            Err(Error::Singular(_)) => {}
            other => panic!("expected Singular, got {other:?}"),
        }
    }

    #[test]
    fn inverse_exact_roundtrip() {
        let mut r = rng::seeded(9);
        let w = Tensor::randn(&[6, 6], 1.0, &mut r);
        let lin = InvertibleLinear::from_matrix(&w).unwrap();
        let x = Tensor::randn(&[10, 6], 2.0, &mut r);
        let (y, _) = lin.forward(&x).unwrap();
        let back = lin.inverse(&y).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-9, "{}", back.max_abs_diff(&x));
    }

    #[test]
    fn tape_forward_matches_pure_forward() {
        let mut r = rng::seeded(10);
        let w = Tensor::randn(&[3, 3], 1.0, &mut r);
        let lin = InvertibleLinear::from_matrix(&w).unwrap();
        let x = Tensor::randn(&[4, 3], 1.0, &mut r);
        let (y_pure, ld_pure) = lin.forward(&x).unwrap();

        let mut tape = Tape::new();
        let vars = lin.bind(&mut tape);
        let xv = tape.leaf(x);
        let (yv, ldv) = lin.forward_on_tape(&mut tape, xv, vars).unwrap();
        assert!(tape.value(yv).max_abs_diff(&y_pure) < 1e-12);
        assert!((tape.value(ldv).item() - ld_pure).abs() < 1e-12);
    }
}
