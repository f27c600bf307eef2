//! Reverse-mode gradient propagation over the recorded graph.

use std::collections::{HashMap, HashSet};

use super::kernel;
use super::{Op, Result, Scalar, Tensor, TensorError};

/// Gradients keyed by tensor, produced by [`Tensor::backward`].
///
/// Only leaves retain their gradient; intermediate buffers are released as
/// soon as they have been propagated.
pub struct Gradients<E: Scalar> {
    map: HashMap<u64, Vec<E>>,
}

impl<E: Scalar> Gradients<E> {
    pub fn get(&self, t: &Tensor<E>) -> Option<&[E]> {
        self.map.get(&t.id()).map(|v| v.as_slice())
    }

    /// The gradient of `t`, or zeros when `t` was unreachable from the loss.
    pub fn get_or_zeros(&self, t: &Tensor<E>) -> Vec<E> {
        self.map
            .get(&t.id())
            .cloned()
            .unwrap_or_else(|| vec![E::zero(); t.len()])
    }
}

fn accumulate<E: Scalar>(store: &mut HashMap<u64, Vec<E>>, t: &Tensor<E>, update: &[E]) {
    let slot = store
        .entry(t.id())
        .or_insert_with(|| vec![E::zero(); t.len()]);
    for (s, &u) in slot.iter_mut().zip(update) {
        *s = *s + u;
    }
}

fn accumulate_with<E: Scalar>(
    store: &mut HashMap<u64, Vec<E>>,
    t: &Tensor<E>,
    f: impl Fn(&mut [E]),
) {
    let slot = store
        .entry(t.id())
        .or_insert_with(|| vec![E::zero(); t.len()]);
    f(slot);
}

impl<E: Scalar> Tensor<E> {
    /// Topological order of the tracked subgraph, producers first.
    fn toposort(&self) -> Vec<Tensor<E>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(op) = node.op() {
                for input in op.inputs() {
                    if input.tracked() && !visited.contains(&input.id()) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }
        order
    }

    /// Populates `∂self/∂leaf` for every trainable leaf reachable from `self`.
    ///
    /// `self` must be scalar-shaped. Leaves that do not influence the loss are
    /// simply absent from the result; [`Gradients::get_or_zeros`] treats them
    /// as zero.
    pub fn backward(&self) -> Result<Gradients<E>> {
        if self.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.dims().to_vec(),
            });
        }
        let order = self.toposort();
        let mut grads: HashMap<u64, Vec<E>> = HashMap::new();
        grads.insert(self.id(), vec![E::one()]);

        for node in order.iter().rev() {
            let Some(grad) = grads.get(&node.id()).cloned() else {
                continue;
            };
            if let Some(op) = node.op() {
                propagate(op, node, &grad, &mut grads);
                grads.remove(&node.id());
            } else if !node.is_leaf() {
                grads.remove(&node.id());
            }
        }
        Ok(Gradients { map: grads })
    }
}

fn propagate<E: Scalar>(
    op: &Op<E>,
    node: &Tensor<E>,
    grad: &[E],
    grads: &mut HashMap<u64, Vec<E>>,
) {
    match op {
        Op::Add(a, b) => {
            if a.tracked() {
                accumulate(grads, a, grad);
            }
            if b.tracked() {
                accumulate(grads, b, grad);
            }
        }
        Op::Sub(a, b) => {
            if a.tracked() {
                accumulate(grads, a, grad);
            }
            if b.tracked() {
                accumulate_with(grads, b, |slot| {
                    for (s, &g) in slot.iter_mut().zip(grad) {
                        *s = *s - g;
                    }
                });
            }
        }
        Op::Mul(a, b) => {
            if a.tracked() {
                accumulate_with(grads, a, |slot| {
                    for ((s, &g), &bv) in slot.iter_mut().zip(grad).zip(b.data()) {
                        *s = *s + g * bv;
                    }
                });
            }
            if b.tracked() {
                accumulate_with(grads, b, |slot| {
                    for ((s, &g), &av) in slot.iter_mut().zip(grad).zip(a.data()) {
                        *s = *s + g * av;
                    }
                });
            }
        }
        Op::Div(a, b) => {
            if a.tracked() {
                accumulate_with(grads, a, |slot| {
                    for ((s, &g), &bv) in slot.iter_mut().zip(grad).zip(b.data()) {
                        *s = *s + g / bv;
                    }
                });
            }
            if b.tracked() {
                accumulate_with(grads, b, |slot| {
                    for (i, s) in slot.iter_mut().enumerate() {
                        let bv = b.data()[i];
                        *s = *s - grad[i] * a.data()[i] / (bv * bv);
                    }
                });
            }
        }
        Op::Neg(a) => {
            if a.tracked() {
                accumulate_with(grads, a, |slot| {
                    for (s, &g) in slot.iter_mut().zip(grad) {
                        *s = *s - g;
                    }
                });
            }
        }
        Op::Exp(a) => {
            if a.tracked() {
                accumulate_with(grads, a, |slot| {
                    for ((s, &g), &y) in slot.iter_mut().zip(grad).zip(node.data()) {
                        *s = *s + g * y;
                    }
                });
            }
        }
        Op::Ln(a) => {
            if a.tracked() {
                accumulate_with(grads, a, |slot| {
                    for ((s, &g), &x) in slot.iter_mut().zip(grad).zip(a.data()) {
                        *s = *s + g / x;
                    }
                });
            }
        }
        Op::Sqrt(a) => {
            if a.tracked() {
                let two = E::from_f64(2.0);
                accumulate_with(grads, a, |slot| {
                    for ((s, &g), &y) in slot.iter_mut().zip(grad).zip(node.data()) {
                        *s = *s + g / (two * y);
                    }
                });
            }
        }
        Op::Recip(a) => {
            if a.tracked() {
                accumulate_with(grads, a, |slot| {
                    for ((s, &g), &y) in slot.iter_mut().zip(grad).zip(node.data()) {
                        *s = *s - g * y * y;
                    }
                });
            }
        }
        Op::Silu(a) => {
            if a.tracked() {
                accumulate_with(grads, a, |slot| {
                    for ((s, &g), &x) in slot.iter_mut().zip(grad).zip(a.data()) {
                        let sig = kernel::sigmoid(x);
                        let d = sig * (E::one() + x * (E::one() - sig));
                        *s = *s + g * d;
                    }
                });
            }
        }
        Op::Elu(a) => {
            if a.tracked() {
                accumulate_with(grads, a, |slot| {
                    for ((s, &g), &x) in slot.iter_mut().zip(grad).zip(a.data()) {
                        let d = if x > E::zero() { E::one() } else { x.exp() };
                        *s = *s + g * d;
                    }
                });
            }
        }
        Op::AddScalar(a) => {
            if a.tracked() {
                accumulate(grads, a, grad);
            }
        }
        Op::MulScalar(a, c) => {
            if a.tracked() {
                accumulate_with(grads, a, |slot| {
                    for (s, &g) in slot.iter_mut().zip(grad) {
                        *s = *s + g * *c;
                    }
                });
            }
        }
        Op::MatMul(a, b) => {
            let (m, k) = (a.dims()[0], a.dims()[1]);
            let n = b.dims()[1];
            if a.tracked() {
                // dA = G · Bᵀ
                accumulate_with(grads, a, |slot| {
                    kernel::matmul_nt_acc(slot, grad, b.data(), m, n, k);
                });
            }
            if b.tracked() {
                // dB = Aᵀ · G
                accumulate_with(grads, b, |slot| {
                    kernel::matmul_tn_acc(slot, a.data(), grad, k, m, n);
                });
            }
        }
        Op::Bmm(a, b) => {
            let (bs, m, k) = (a.dims()[0], a.dims()[1], a.dims()[2]);
            let n = b.dims()[2];
            if a.tracked() {
                accumulate_with(grads, a, |slot| {
                    for i in 0..bs {
                        kernel::matmul_nt_acc(
                            &mut slot[i * m * k..(i + 1) * m * k],
                            &grad[i * m * n..(i + 1) * m * n],
                            &b.data()[i * k * n..(i + 1) * k * n],
                            m,
                            n,
                            k,
                        );
                    }
                });
            }
            if b.tracked() {
                accumulate_with(grads, b, |slot| {
                    for i in 0..bs {
                        kernel::matmul_tn_acc(
                            &mut slot[i * k * n..(i + 1) * k * n],
                            &a.data()[i * m * k..(i + 1) * m * k],
                            &grad[i * m * n..(i + 1) * m * n],
                            k,
                            m,
                            n,
                        );
                    }
                });
            }
        }
        Op::Transpose(a) => {
            if a.tracked() {
                let (n, m) = (node.dims()[0], node.dims()[1]);
                let gt = kernel::transpose(grad, n, m);
                accumulate(grads, a, &gt);
            }
        }
        Op::Reshape(a) => {
            if a.tracked() {
                accumulate(grads, a, grad);
            }
        }
        Op::Concat(parts, axis) => {
            if *axis == 0 {
                let mut offset = 0;
                for p in parts {
                    let len = p.len();
                    if p.tracked() {
                        accumulate(grads, p, &grad[offset..offset + len]);
                    }
                    offset += len;
                }
            } else {
                let rows = node.dims()[0];
                let total_cols = node.dims()[1];
                let mut col_offset = 0;
                for p in parts {
                    let cols = p.dims()[1];
                    if p.tracked() {
                        accumulate_with(grads, p, |slot| {
                            for i in 0..rows {
                                for j in 0..cols {
                                    slot[i * cols + j] = slot[i * cols + j]
                                        + grad[i * total_cols + col_offset + j];
                                }
                            }
                        });
                    }
                    col_offset += cols;
                }
            }
        }
        Op::Narrow(a, axis, start, len) => {
            if a.tracked() {
                if a.rank() == 1 || *axis == 0 {
                    let width: usize = a.dims()[1..].iter().product::<usize>().max(1);
                    accumulate_with(grads, a, |slot| {
                        for (s, &g) in slot[start * width..(start + len) * width]
                            .iter_mut()
                            .zip(grad)
                        {
                            *s = *s + g;
                        }
                    });
                } else {
                    let rows = a.dims()[0];
                    let cols = a.dims()[1];
                    accumulate_with(grads, a, |slot| {
                        for i in 0..rows {
                            for j in 0..*len {
                                slot[i * cols + start + j] =
                                    slot[i * cols + start + j] + grad[i * len + j];
                            }
                        }
                    });
                }
            }
        }
        Op::GatherRows(a, idx) => {
            if a.tracked() {
                let cols = a.dims()[1];
                accumulate_with(grads, a, |slot| {
                    for (r, &i) in idx.iter().enumerate() {
                        for j in 0..cols {
                            slot[i * cols + j] = slot[i * cols + j] + grad[r * cols + j];
                        }
                    }
                });
            }
        }
        Op::ScaleRows(x, s) => {
            let (rows, cols) = (x.dims()[0], x.dims()[1]);
            if x.tracked() {
                accumulate_with(grads, x, |slot| {
                    for i in 0..rows {
                        let sv = s.data()[i];
                        for j in 0..cols {
                            slot[i * cols + j] = slot[i * cols + j] + grad[i * cols + j] * sv;
                        }
                    }
                });
            }
            if s.tracked() {
                accumulate_with(grads, s, |slot| {
                    for i in 0..rows {
                        let mut acc = E::zero();
                        for j in 0..cols {
                            acc = acc + grad[i * cols + j] * x.data()[i * cols + j];
                        }
                        slot[i] = slot[i] + acc;
                    }
                });
            }
        }
        Op::MulRowVec(x, v) => {
            let (rows, cols) = (x.dims()[0], x.dims()[1]);
            if x.tracked() {
                accumulate_with(grads, x, |slot| {
                    for i in 0..rows {
                        for j in 0..cols {
                            slot[i * cols + j] =
                                slot[i * cols + j] + grad[i * cols + j] * v.data()[j];
                        }
                    }
                });
            }
            if v.tracked() {
                accumulate_with(grads, v, |slot| {
                    for i in 0..rows {
                        for j in 0..cols {
                            slot[j] = slot[j] + grad[i * cols + j] * x.data()[i * cols + j];
                        }
                    }
                });
            }
        }
        Op::RowSums(a) => {
            if a.tracked() {
                let (rows, cols) = (a.dims()[0], a.dims()[1]);
                accumulate_with(grads, a, |slot| {
                    for i in 0..rows {
                        let g = grad[i];
                        for j in 0..cols {
                            slot[i * cols + j] = slot[i * cols + j] + g;
                        }
                    }
                });
            }
        }
        Op::ColSums(a) => {
            if a.tracked() {
                let (rows, cols) = (a.dims()[0], a.dims()[1]);
                accumulate_with(grads, a, |slot| {
                    for i in 0..rows {
                        for j in 0..cols {
                            slot[i * cols + j] = slot[i * cols + j] + grad[j];
                        }
                    }
                });
            }
        }
        Op::SumAll(a) => {
            if a.tracked() {
                let g = grad[0];
                accumulate_with(grads, a, |slot| {
                    for s in slot.iter_mut() {
                        *s = *s + g;
                    }
                });
            }
        }
        Op::MeanAll(a) => {
            if a.tracked() {
                let g = grad[0] / E::from_usize(a.len());
                accumulate_with(grads, a, |slot| {
                    for s in slot.iter_mut() {
                        *s = *s + g;
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::Tensor;

    #[test]
    fn sum_of_squares_gradient() {
        let w = Tensor::<f64>::param([3], vec![1.0, 2.0, 3.0]);
        let loss = w.mul(&w).unwrap().sum_all();
        let grads = loss.backward().unwrap();
        assert_eq!(grads.get(&w).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn unreachable_parameter_reads_as_zero() {
        let w = Tensor::<f64>::param([2], vec![1.0, 1.0]);
        let p = Tensor::<f64>::param([2], vec![5.0, 5.0]);
        let loss = w.sum_all();
        let grads = loss.backward().unwrap();
        assert!(grads.get(&p).is_none());
        assert_eq!(grads.get_or_zeros(&p), vec![0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let w = Tensor::<f64>::param([2], vec![1.0, 1.0]);
        assert!(w.mul(&w).unwrap().backward().is_err());
    }

    #[test]
    fn matmul_shapes_and_gradient() {
        let a = Tensor::<f64>::param([2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let b = Tensor::<f64>::param([3, 4], (0..12).map(|v| v as f64).collect());
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.dims(), &[2, 4]);
        let grads = c.sum_all().backward().unwrap();
        // d(sum)/dA = ones · Bᵀ: each entry is the corresponding row-sum of B.
        let ga = grads.get(&a).unwrap();
        assert_eq!(ga[0], 0. + 1. + 2. + 3.);
        assert_eq!(ga[1], 4. + 5. + 6. + 7.);
        assert_eq!(ga[2], 8. + 9. + 10. + 11.);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let w = Tensor::<f64>::param([], vec![3.0]);
        let y = w.mul(&w).unwrap(); // w²
        let loss = y.add(&y).unwrap().sum_all(); // 2w² → d/dw = 4w = 12
        let grads = loss.backward().unwrap();
        assert_eq!(grads.get(&w).unwrap(), &[12.0]);
    }

    #[test]
    fn deep_graph_drops_without_overflow() {
        let mut t = Tensor::<f64>::param([4], vec![1.0; 4]);
        for _ in 0..200_000 {
            t = t.add_scalar(0.0);
        }
        drop(t);
    }

    #[test]
    fn no_grad_suppresses_graph() {
        let w = Tensor::<f64>::param([2], vec![1.0, 2.0]);
        let y = super::super::no_grad(|| w.mul(&w).unwrap());
        assert!(!y.tracked());
    }
}
