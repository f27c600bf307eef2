//! Forward operations and the recorded graph node for each.

use std::sync::Arc;

use rand::Rng;

use super::kernel;
use super::{Result, Scalar, Tensor, TensorError};

pub(crate) enum Op<E: Scalar> {
    Add(Tensor<E>, Tensor<E>),
    Sub(Tensor<E>, Tensor<E>),
    Mul(Tensor<E>, Tensor<E>),
    Div(Tensor<E>, Tensor<E>),
    Neg(Tensor<E>),
    Exp(Tensor<E>),
    Ln(Tensor<E>),
    Sqrt(Tensor<E>),
    Recip(Tensor<E>),
    Silu(Tensor<E>),
    Elu(Tensor<E>),
    AddScalar(Tensor<E>),
    MulScalar(Tensor<E>, E),
    MatMul(Tensor<E>, Tensor<E>),
    Bmm(Tensor<E>, Tensor<E>),
    Transpose(Tensor<E>),
    Reshape(Tensor<E>),
    Concat(Vec<Tensor<E>>, usize),
    Narrow(Tensor<E>, usize, usize, usize),
    GatherRows(Tensor<E>, Arc<[usize]>),
    ScaleRows(Tensor<E>, Tensor<E>),
    MulRowVec(Tensor<E>, Tensor<E>),
    RowSums(Tensor<E>),
    ColSums(Tensor<E>),
    SumAll(Tensor<E>),
    MeanAll(Tensor<E>),
}

impl<E: Scalar> Op<E> {
    pub(crate) fn inputs(&self) -> Vec<&Tensor<E>> {
        match self {
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::MatMul(a, b)
            | Op::Bmm(a, b)
            | Op::ScaleRows(a, b)
            | Op::MulRowVec(a, b) => vec![a, b],
            Op::Neg(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::Silu(a)
            | Op::Elu(a)
            | Op::AddScalar(a)
            | Op::MulScalar(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Narrow(a, _, _, _)
            | Op::GatherRows(a, _)
            | Op::RowSums(a)
            | Op::ColSums(a)
            | Op::SumAll(a)
            | Op::MeanAll(a) => vec![a],
            Op::Concat(parts, _) => parts.iter().collect(),
        }
    }

    pub(crate) fn into_inputs(self) -> Vec<Tensor<E>> {
        match self {
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::MatMul(a, b)
            | Op::Bmm(a, b)
            | Op::ScaleRows(a, b)
            | Op::MulRowVec(a, b) => vec![a, b],
            Op::Neg(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::Silu(a)
            | Op::Elu(a)
            | Op::AddScalar(a)
            | Op::MulScalar(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Narrow(a, _, _, _)
            | Op::GatherRows(a, _)
            | Op::RowSums(a)
            | Op::ColSums(a)
            | Op::SumAll(a)
            | Op::MeanAll(a) => vec![a],
            Op::Concat(parts, _) => parts,
        }
    }
}

fn any_tracked<E: Scalar>(inputs: &[&Tensor<E>]) -> bool {
    inputs.iter().any(|t| t.tracked())
}

impl<E: Scalar> Tensor<E> {
    fn unary(&self, data: Vec<E>, op: impl FnOnce(Tensor<E>) -> Op<E>) -> Tensor<E> {
        let node = if self.tracked() {
            Some(op(self.clone()))
        } else {
            None
        };
        Tensor::make(self.dims().to_vec(), data, node, false)
    }

    fn same_shape(&self, other: &Tensor<E>, op: &'static str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.dims().to_vec(),
                rhs: other.dims().to_vec(),
            });
        }
        Ok(())
    }

    fn zip(
        &self,
        other: &Tensor<E>,
        name: &'static str,
        f: impl Fn(E, E) -> E,
        op: impl FnOnce(Tensor<E>, Tensor<E>) -> Op<E>,
    ) -> Result<Tensor<E>> {
        self.same_shape(other, name)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        let node = if any_tracked(&[self, other]) {
            Some(op(self.clone(), other.clone()))
        } else {
            None
        };
        Ok(Tensor::make(self.dims().to_vec(), data, node, false))
    }

    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.zip(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.zip(other, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.zip(other, "mul", |a, b| a * b, Op::Mul)
    }

    pub fn div(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.zip(other, "div", |a, b| a / b, Op::Div)
    }

    pub fn neg(&self) -> Tensor<E> {
        self.unary(self.data().iter().map(|&a| -a).collect(), Op::Neg)
    }

    pub fn exp(&self) -> Tensor<E> {
        self.unary(self.data().iter().map(|a| a.exp()).collect(), Op::Exp)
    }

    pub fn ln(&self) -> Tensor<E> {
        self.unary(self.data().iter().map(|a| a.ln()).collect(), Op::Ln)
    }

    pub fn sqrt(&self) -> Tensor<E> {
        self.unary(self.data().iter().map(|a| a.sqrt()).collect(), Op::Sqrt)
    }

    pub fn recip(&self) -> Tensor<E> {
        self.unary(
            self.data().iter().map(|&a| E::one() / a).collect(),
            Op::Recip,
        )
    }

    /// Sigmoid-weighted linear unit: `x · σ(x)`.
    pub fn silu(&self) -> Tensor<E> {
        self.unary(
            self.data().iter().map(|&a| kernel::silu(a)).collect(),
            Op::Silu,
        )
    }

    /// Exponential linear unit with α = 1.
    pub fn elu(&self) -> Tensor<E> {
        self.unary(
            self.data().iter().map(|&a| kernel::elu(a)).collect(),
            Op::Elu,
        )
    }

    pub fn add_scalar(&self, c: E) -> Tensor<E> {
        self.unary(self.data().iter().map(|&a| a + c).collect(), Op::AddScalar)
    }

    pub fn mul_scalar(&self, c: E) -> Tensor<E> {
        self.unary(self.data().iter().map(|&a| a * c).collect(), |t| {
            Op::MulScalar(t, c)
        })
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        let (m, k) = match self.dims() {
            [m, k] => (*m, *k),
            _ => {
                return Err(TensorError::BadRank {
                    op: "matmul",
                    expected: 2,
                    shape: self.dims().to_vec(),
                })
            }
        };
        let (k2, n) = match other.dims() {
            [k2, n] => (*k2, *n),
            _ => {
                return Err(TensorError::BadRank {
                    op: "matmul",
                    expected: 2,
                    shape: other.dims().to_vec(),
                })
            }
        };
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.dims().to_vec(),
                rhs: other.dims().to_vec(),
            });
        }
        let data = kernel::matmul(self.data(), other.data(), m, k, n);
        let node = if any_tracked(&[self, other]) {
            Some(Op::MatMul(self.clone(), other.clone()))
        } else {
            None
        };
        Ok(Tensor::make(vec![m, n], data, node, false))
    }

    /// Batched matrix product of two rank-3 tensors, sharing the batch axis.
    pub fn bmm(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        let (b, m, k) = match self.dims() {
            [b, m, k] => (*b, *m, *k),
            _ => {
                return Err(TensorError::BadRank {
                    op: "bmm",
                    expected: 3,
                    shape: self.dims().to_vec(),
                })
            }
        };
        let (b2, k2, n) = match other.dims() {
            [b2, k2, n] => (*b2, *k2, *n),
            _ => {
                return Err(TensorError::BadRank {
                    op: "bmm",
                    expected: 3,
                    shape: other.dims().to_vec(),
                })
            }
        };
        if b != b2 || k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "bmm",
                lhs: self.dims().to_vec(),
                rhs: other.dims().to_vec(),
            });
        }
        let mut data = vec![E::zero(); b * m * n];
        for i in 0..b {
            kernel::matmul_acc(
                &mut data[i * m * n..(i + 1) * m * n],
                &self.data()[i * m * k..(i + 1) * m * k],
                &other.data()[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
            );
        }
        let node = if any_tracked(&[self, other]) {
            Some(Op::Bmm(self.clone(), other.clone()))
        } else {
            None
        };
        Ok(Tensor::make(vec![b, m, n], data, node, false))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor<E>> {
        let (m, n) = match self.dims() {
            [m, n] => (*m, *n),
            _ => {
                return Err(TensorError::BadRank {
                    op: "transpose",
                    expected: 2,
                    shape: self.dims().to_vec(),
                })
            }
        };
        let data = kernel::transpose(self.data(), m, n);
        let node = self.tracked().then(|| Op::Transpose(self.clone()));
        Ok(Tensor::make(vec![n, m], data, node, false))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor<E>> {
        let shape = shape.into();
        let to_len = shape.iter().product::<usize>();
        if to_len != self.len() {
            return Err(TensorError::BadReshape {
                from: self.dims().to_vec(),
                from_len: self.len(),
                to: shape,
                to_len,
            });
        }
        let node = self.tracked().then(|| Op::Reshape(self.clone()));
        Ok(Tensor::make(shape, self.to_vec(), node, false))
    }

    /// Flattens to a rank-1 tensor.
    pub fn flatten(&self) -> Tensor<E> {
        self.reshape(vec![self.len()])
            .expect("flatten preserves the element count")
    }

    /// Concatenation along `axis` (0 for rank-1, 0 or 1 for rank-2 inputs).
    pub fn concat(parts: &[&Tensor<E>], axis: usize) -> Result<Tensor<E>> {
        let first = parts.first().ok_or(TensorError::EmptyConcat)?;
        let rank = first.rank();
        if axis >= rank.max(1) || rank > 2 {
            return Err(TensorError::BadRank {
                op: "concat",
                expected: axis + 1,
                shape: first.dims().to_vec(),
            });
        }
        for p in parts {
            if p.rank() != rank
                || (0..rank).any(|d| d != axis && p.dims()[d] != first.dims()[d])
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.dims().to_vec(),
                    rhs: p.dims().to_vec(),
                });
            }
        }
        let mut shape = first.dims().to_vec();
        shape[axis] = parts.iter().map(|p| p.dims()[axis]).sum();
        let mut data = Vec::with_capacity(shape.iter().product());
        if axis == 0 {
            for p in parts {
                data.extend_from_slice(p.data());
            }
        } else {
            let rows = shape[0];
            for i in 0..rows {
                for p in parts {
                    let cols = p.dims()[1];
                    data.extend_from_slice(&p.data()[i * cols..(i + 1) * cols]);
                }
            }
        }
        let node = if parts.iter().any(|p| p.tracked()) {
            Some(Op::Concat(
                parts.iter().map(|&p| p.clone()).collect(),
                axis,
            ))
        } else {
            None
        };
        Ok(Tensor::make(shape, data, node, false))
    }

    /// Contiguous slice of `len` indices starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<E>> {
        if axis >= self.rank() || self.rank() > 2 {
            return Err(TensorError::BadRank {
                op: "narrow",
                expected: axis + 1,
                shape: self.dims().to_vec(),
            });
        }
        if start + len > self.dims()[axis] {
            return Err(TensorError::NarrowOutOfRange {
                axis,
                start,
                len,
                shape: self.dims().to_vec(),
            });
        }
        let mut shape = self.dims().to_vec();
        shape[axis] = len;
        let data = if self.rank() == 1 || axis == 0 {
            let width: usize = self.dims()[1..].iter().product();
            self.data()[start * width..(start + len) * width].to_vec()
        } else {
            let cols = self.dims()[1];
            let mut out = Vec::with_capacity(self.dims()[0] * len);
            for i in 0..self.dims()[0] {
                out.extend_from_slice(&self.data()[i * cols + start..i * cols + start + len]);
            }
            out
        };
        let node = self
            .tracked()
            .then(|| Op::Narrow(self.clone(), axis, start, len));
        Ok(Tensor::make(shape, data, node, false))
    }

    /// Copies the given rows of a rank-2 tensor, in order (repeats allowed).
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor<E>> {
        let (rows, cols) = match self.dims() {
            [r, c] => (*r, *c),
            _ => {
                return Err(TensorError::BadRank {
                    op: "gather_rows",
                    expected: 2,
                    shape: self.dims().to_vec(),
                })
            }
        };
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::RowOutOfRange { index: i, rows });
            }
            data.extend_from_slice(&self.data()[i * cols..(i + 1) * cols]);
        }
        let idx: Arc<[usize]> = indices.to_vec().into();
        let node = self.tracked().then(|| Op::GatherRows(self.clone(), idx));
        Ok(Tensor::make(vec![indices.len(), cols], data, node, false))
    }

    /// Multiplies row `i` of a rank-2 tensor by `scale[i]`.
    pub fn scale_rows(&self, scale: &Tensor<E>) -> Result<Tensor<E>> {
        let (rows, cols) = match self.dims() {
            [r, c] => (*r, *c),
            _ => {
                return Err(TensorError::BadRank {
                    op: "scale_rows",
                    expected: 2,
                    shape: self.dims().to_vec(),
                })
            }
        };
        if scale.dims() != [rows] {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                lhs: self.dims().to_vec(),
                rhs: scale.dims().to_vec(),
            });
        }
        let mut data = self.to_vec();
        for i in 0..rows {
            let s = scale.data()[i];
            for v in &mut data[i * cols..(i + 1) * cols] {
                *v = *v * s;
            }
        }
        let node = if any_tracked(&[self, scale]) {
            Some(Op::ScaleRows(self.clone(), scale.clone()))
        } else {
            None
        };
        Ok(Tensor::make(vec![rows, cols], data, node, false))
    }

    /// Multiplies every row of a rank-2 tensor elementwise by a length-`cols` vector.
    pub fn mul_row_vec(&self, v: &Tensor<E>) -> Result<Tensor<E>> {
        let (rows, cols) = match self.dims() {
            [r, c] => (*r, *c),
            _ => {
                return Err(TensorError::BadRank {
                    op: "mul_row_vec",
                    expected: 2,
                    shape: self.dims().to_vec(),
                })
            }
        };
        if v.dims() != [cols] {
            return Err(TensorError::ShapeMismatch {
                op: "mul_row_vec",
                lhs: self.dims().to_vec(),
                rhs: v.dims().to_vec(),
            });
        }
        let mut data = self.to_vec();
        for i in 0..rows {
            for j in 0..cols {
                data[i * cols + j] = data[i * cols + j] * v.data()[j];
            }
        }
        let node = if any_tracked(&[self, v]) {
            Some(Op::MulRowVec(self.clone(), v.clone()))
        } else {
            None
        };
        Ok(Tensor::make(vec![rows, cols], data, node, false))
    }

    /// Per-row sum of a rank-2 tensor, yielding a length-`rows` vector.
    pub fn row_sums(&self) -> Result<Tensor<E>> {
        let (rows, cols) = match self.dims() {
            [r, c] => (*r, *c),
            _ => {
                return Err(TensorError::BadRank {
                    op: "row_sums",
                    expected: 2,
                    shape: self.dims().to_vec(),
                })
            }
        };
        let data = (0..rows)
            .map(|i| {
                self.data()[i * cols..(i + 1) * cols]
                    .iter()
                    .fold(E::zero(), |acc, &v| acc + v)
            })
            .collect();
        let node = self.tracked().then(|| Op::RowSums(self.clone()));
        Ok(Tensor::make(vec![rows], data, node, false))
    }

    /// Per-column sum of a rank-2 tensor, yielding a length-`cols` vector.
    pub fn col_sums(&self) -> Result<Tensor<E>> {
        let (rows, cols) = match self.dims() {
            [r, c] => (*r, *c),
            _ => {
                return Err(TensorError::BadRank {
                    op: "col_sums",
                    expected: 2,
                    shape: self.dims().to_vec(),
                })
            }
        };
        let mut data = vec![E::zero(); cols];
        for i in 0..rows {
            for j in 0..cols {
                data[j] = data[j] + self.data()[i * cols + j];
            }
        }
        let node = self.tracked().then(|| Op::ColSums(self.clone()));
        Ok(Tensor::make(vec![cols], data, node, false))
    }

    /// Sum of all elements, as a scalar-shaped tensor.
    pub fn sum_all(&self) -> Tensor<E> {
        let total = self.data().iter().fold(E::zero(), |acc, &v| acc + v);
        let node = self.tracked().then(|| Op::SumAll(self.clone()));
        Tensor::make(vec![], vec![total], node, false)
    }

    /// Mean of all elements, as a scalar-shaped tensor.
    pub fn mean_all(&self) -> Tensor<E> {
        let total = self.data().iter().fold(E::zero(), |acc, &v| acc + v);
        let node = self.tracked().then(|| Op::MeanAll(self.clone()));
        Tensor::make(
            vec![],
            vec![total / E::from_usize(self.len())],
            node,
            false,
        )
    }

    /// Outer product of two rank-1 tensors.
    pub fn outer(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        let m = match self.dims() {
            [m] => *m,
            _ => {
                return Err(TensorError::BadRank {
                    op: "outer",
                    expected: 1,
                    shape: self.dims().to_vec(),
                })
            }
        };
        let n = match other.dims() {
            [n] => *n,
            _ => {
                return Err(TensorError::BadRank {
                    op: "outer",
                    expected: 1,
                    shape: other.dims().to_vec(),
                })
            }
        };
        self.reshape(vec![m, 1])?.matmul(&other.reshape(vec![1, n])?)
    }

    /// Dot product of two same-shape tensors.
    pub fn dot(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(self.mul(other)?.sum_all())
    }

    /// Matrix–vector product of a rank-2 and a rank-1 tensor.
    pub fn matvec(&self, v: &Tensor<E>) -> Result<Tensor<E>> {
        let k = match v.dims() {
            [k] => *k,
            _ => {
                return Err(TensorError::BadRank {
                    op: "matvec",
                    expected: 1,
                    shape: v.dims().to_vec(),
                })
            }
        };
        let rows = self.dims()[0];
        self.matmul(&v.reshape(vec![k, 1])?)?.reshape(vec![rows])
    }

    /// Root-mean-square normalization over the last axis of a rank-2 tensor,
    /// scaled per feature by `gain`.
    pub fn rms_norm(&self, gain: &Tensor<E>, eps: E) -> Result<Tensor<E>> {
        let cols = match self.dims() {
            [_, c] => *c,
            _ => {
                return Err(TensorError::BadRank {
                    op: "rms_norm",
                    expected: 2,
                    shape: self.dims().to_vec(),
                })
            }
        };
        let mean_sq = self
            .mul(self)?
            .row_sums()?
            .mul_scalar(E::one() / E::from_usize(cols));
        let inv_rms = mean_sq.add_scalar(eps).sqrt().recip();
        self.scale_rows(&inv_rms)?.mul_row_vec(gain)
    }

    /// Inverted dropout: keeps each element with probability `1 − p`, scaling
    /// survivors by `1/(1 − p)`. With `p == 0` this is the identity.
    pub fn dropout(&self, p: f64, rng: &mut impl Rng) -> Tensor<E> {
        if p <= 0.0 {
            return self.clone();
        }
        let keep = E::from_f64(1.0 / (1.0 - p));
        let mask: Vec<E> = (0..self.len())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    E::zero()
                } else {
                    keep
                }
            })
            .collect();
        let mask = Tensor::constant(self.dims().to_vec(), mask);
        self.mul(&mask).expect("mask matches shape")
    }
}
