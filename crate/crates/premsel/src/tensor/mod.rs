//! A minimal dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Tensors are immutable, reference-counted buffers. Every operation runs
//! eagerly and, when gradients are being tracked, records the producing
//! operation so that [`Tensor::backward`] can replay the graph in reverse.
//! The element type is generic: the model trains at `f32`, while gradient
//! checks run the identical graph at `f64`.

mod backward;
mod kernel;
mod op;

pub use backward::Gradients;
pub(crate) use op::Op;

use std::cell::Cell;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point element of a [`Tensor`]; implemented for `f32` and `f64`.
pub trait Scalar:
    num_traits::Float + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: lhs {lhs:?} vs rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects rank {expected}, got shape {shape:?}")]
    BadRank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("reshape from {from:?} ({from_len} elements) to {to:?} ({to_len} elements)")]
    BadReshape {
        from: Vec<usize>,
        from_len: usize,
        to: Vec<usize>,
        to_len: usize,
    },
    #[error("narrow out of range: axis {axis}, start {start}, len {len}, shape {shape:?}")]
    NarrowOutOfRange {
        axis: usize,
        start: usize,
        len: usize,
        shape: Vec<usize>,
    },
    #[error("row index {index} out of range for {rows} rows")]
    RowOutOfRange { index: usize, rows: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("concat needs at least one input")]
    EmptyConcat,
}

pub type Result<T> = std::result::Result<T, TensorError>;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static NO_GRAD: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with gradient tracking disabled on the current thread.
///
/// Operations executed inside the closure produce constant tensors that hold
/// no reference to their inputs, which keeps inference passes free of graph
/// bookkeeping.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Reset(bool);
    impl Drop for Reset {
        fn drop(&mut self) {
            NO_GRAD.with(|c| c.set(self.0));
        }
    }
    let _reset = Reset(NO_GRAD.with(|c| c.replace(true)));
    f()
}

pub(crate) fn grad_enabled() -> bool {
    NO_GRAD.with(|c| !c.get())
}

pub(crate) struct Inner<E: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<E>,
    op: Option<Op<E>>,
    leaf: bool,
}

/// Dense n-dimensional array participating in a reverse-mode gradient graph.
pub struct Tensor<E: Scalar>(Arc<Inner<E>>);

impl<E: Scalar> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor(Arc::clone(&self.0))
    }
}

impl<E: Scalar> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("leaf", &self.0.leaf)
            .finish()
    }
}

// Graphs can grow into long chains (one per dependency level and layer), so
// the reference chain is unwound iteratively instead of by recursive drops.
impl<E: Scalar> Drop for Inner<E> {
    fn drop(&mut self) {
        let mut stack: Vec<Op<E>> = self.op.take().into_iter().collect();
        while let Some(op) = stack.pop() {
            for parent in op.into_inputs() {
                if let Some(mut inner) = Arc::into_inner(parent.0) {
                    if let Some(op) = inner.op.take() {
                        stack.push(op);
                    }
                }
            }
        }
    }
}

impl<E: Scalar> Tensor<E> {
    pub(crate) fn make(shape: Vec<usize>, data: Vec<E>, op: Option<Op<E>>, leaf: bool) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            op: if grad_enabled() { op } else { None },
            leaf,
        }))
    }

    /// A constant tensor: participates in computation but receives no gradient.
    pub fn constant(shape: impl Into<Vec<usize>>, data: Vec<E>) -> Self {
        let shape = shape.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "constant: shape {shape:?} does not match {} elements",
            data.len()
        );
        Tensor::make(shape, data, None, false)
    }

    /// A trainable leaf: gradients accumulate here during [`Tensor::backward`].
    pub fn param(shape: impl Into<Vec<usize>>, data: Vec<E>) -> Self {
        let shape = shape.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "param: shape {shape:?} does not match {} elements",
            data.len()
        );
        Tensor::make(shape, data, None, true)
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Tensor::constant(shape, vec![E::zero(); len])
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Tensor::constant(shape, vec![E::one(); len])
    }

    pub fn scalar(v: E) -> Self {
        Tensor::constant(vec![], vec![v])
    }

    /// Identity matrix of size d×d.
    pub fn eye(d: usize) -> Self {
        let mut data = vec![E::zero(); d * d];
        for i in 0..d {
            data[i * d + i] = E::one();
        }
        Tensor::constant([d, d], data)
    }

    /// Gaussian-initialized constant with standard deviation `std`.
    ///
    /// Values are drawn at `f64` and cast down, so a given seed produces the
    /// same initialization regardless of the element type.
    pub fn randn(shape: impl Into<Vec<usize>>, std: f64, rng: &mut impl Rng) -> Self {
        let shape = shape.into();
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|_| E::from_f64(rng.sample::<f64, _>(StandardNormal) * std))
            .collect();
        Tensor::constant(shape, data)
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn dims(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn len(&self) -> usize {
        self.0.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<E> {
        self.0.data.clone()
    }

    pub fn is_leaf(&self) -> bool {
        self.0.leaf
    }

    pub(crate) fn op(&self) -> Option<&Op<E>> {
        self.0.op.as_ref()
    }

    /// Whether this tensor is connected to any trainable leaf.
    pub fn tracked(&self) -> bool {
        self.0.leaf || self.0.op.is_some()
    }

    /// The single element of a scalar-shaped tensor.
    pub fn scalar_value(&self) -> E {
        assert_eq!(self.len(), 1, "scalar_value on shape {:?}", self.dims());
        self.0.data[0]
    }

    /// Same data, detached from the graph.
    pub fn detach(&self) -> Self {
        Tensor::constant(self.0.shape.clone(), self.0.data.clone())
    }

    /// Re-wraps the same data as a trainable leaf.
    pub fn to_param(&self) -> Self {
        Tensor::param(self.0.shape.clone(), self.0.data.clone())
    }
}
