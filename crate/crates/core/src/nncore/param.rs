use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::scalar::Real;

/// A trainable tensor with its gradient and Adam moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Real> {
    pub value: Array2<T>,
    pub grad: Array2<T>,
    pub m: Array2<T>,
    pub v: Array2<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Array2<T>) -> Self {
        let z = Array2::zeros(value.raw_dim());
        Self {
            grad: z.clone(),
            m: z.clone(),
            v: z,
            value,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    pub fn filled(rows: usize, cols: usize, x: T) -> Self {
        Self::new(Array2::from_elem((rows, cols), x))
    }

    /// Entries drawn uniformly from `[-bound, bound]`.
    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut RngStream) -> Self {
        Self::new(Array2::from_shape_fn((rows, cols), |_| {
            T::lit(rng.uniform_in(-bound, bound))
        }))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Anything that owns named parameters.
///
/// Visiting order is fixed per type; checkpoints, soft updates and the
/// gradient checker all rely on it.
pub trait Parameterized<T: Real> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>));
}

pub fn zero_grads<T: Real>(model: &mut (impl Parameterized<T> + ?Sized)) {
    model.visit_mut(&mut |_, p| p.zero_grad());
}

pub fn param_count<T: Real>(model: &(impl Parameterized<T> + ?Sized)) -> usize {
    let mut n = 0;
    model.visit(&mut |_, p| n += p.len());
    n
}

pub fn flat_values<T: Real>(model: &(impl Parameterized<T> + ?Sized)) -> Vec<T> {
    let mut out = Vec::new();
    model.visit(&mut |_, p| out.extend(p.value.iter().copied()));
    out
}

pub fn any_non_finite<T: Real>(model: &(impl Parameterized<T> + ?Sized)) -> bool {
    let mut bad = false;
    model.visit(&mut |_, p| bad |= p.value.iter().any(|x| !x.is_finite()));
    bad
}

/// `target <- (1 - tau) target + tau online`, tensor by tensor.
pub fn soft_update<T: Real>(
    target: &mut (impl Parameterized<T> + ?Sized),
    online: &(impl Parameterized<T> + ?Sized),
    tau: T,
) -> Result<()> {
    let mut sources = Vec::new();
    online.visit(&mut |_, p| sources.push(p.value.clone()));
    let mut k = 0;
    let mut err = None;
    target.visit_mut(&mut |name, p| {
        if err.is_some() {
            return;
        }
        match sources.get(k) {
            Some(src) if src.dim() == p.value.dim() => {
                let keep = T::one() - tau;
                p.value.zip_mut_with(src, |t, &s| *t = keep * *t + tau * s);
            }
            other => {
                err = Some(Error::Shape {
                    context: "soft_update",
                    expected: format!("{name}: {:?}", p.value.dim()),
                    got: format!("{:?}", other.map(|s| s.dim())),
                });
            }
        }
        k += 1;
    });
    if let Some(e) = err {
        return Err(e);
    }
    if k != sources.len() {
        return Err(Error::shape("soft_update tensor count", k, sources.len()));
    }
    Ok(())
}

/// Hard copy, used to initialize target networks.
pub fn copy_params<T: Real>(
    target: &mut (impl Parameterized<T> + ?Sized),
    online: &(impl Parameterized<T> + ?Sized),
) -> Result<()> {
    soft_update(target, online, T::one())
}
