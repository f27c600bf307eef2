//! Raw buffer kernels shared by the forward ops and the backward pass.

use super::Scalar;

/// C = A(m×k) · B(k×n), row-major.
pub(crate) fn matmul<E: Scalar>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let mut out = vec![E::zero(); m * n];
    matmul_acc(&mut out, a, b, m, k, n);
    out
}

/// out += A(m×k) · B(k×n).
pub(crate) fn matmul_acc<E: Scalar>(out: &mut [E], a: &[E], b: &[E], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] = out_row[j] + a_ip * b_row[j];
            }
        }
    }
}

/// out += A(m×k) · B(n×k)ᵀ; both operands are traversed row-contiguously.
pub(crate) fn matmul_nt_acc<E: Scalar>(
    out: &mut [E],
    a: &[E],
    b: &[E],
    m: usize,
    k: usize,
    n: usize,
) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = E::zero();
            for p in 0..k {
                acc = acc + a_row[p] * b_row[p];
            }
            out[i * n + j] = out[i * n + j] + acc;
        }
    }
}

/// out += A(k×m)ᵀ · B(k×n).
pub(crate) fn matmul_tn_acc<E: Scalar>(
    out: &mut [E],
    a: &[E],
    b: &[E],
    m: usize,
    k: usize,
    n: usize,
) {
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let a_pi = a_row[i];
            let out_row = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                out_row[j] = out_row[j] + a_pi * b_row[j];
            }
        }
    }
}

pub(crate) fn transpose<E: Scalar>(a: &[E], rows: usize, cols: usize) -> Vec<E> {
    let mut out = vec![E::zero(); a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

pub(crate) fn sigmoid<E: Scalar>(x: E) -> E {
    E::one() / (E::one() + (-x).exp())
}

pub(crate) fn silu<E: Scalar>(x: E) -> E {
    x * sigmoid(x)
}

pub(crate) fn elu<E: Scalar>(x: E) -> E {
    if x > E::zero() {
        x
    } else {
        x.exp() - E::one()
    }
}
