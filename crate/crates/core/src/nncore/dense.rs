use ndarray::{Array2, Axis};

use super::param::{Param, Parameterized};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::scalar::Real;

/// Affine map `y = x W + b` with `W` stored as `(in, out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T: Real> {
    pub w: Param<T>,
    pub b: Param<T>,
}

impl<T: Real> Dense<T> {
    /// Uniform fan-in initialization, `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn new(input: usize, output: usize, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self {
            w: Param::uniform(input, output, bound, rng),
            b: Param::uniform(1, output, bound, rng),
        }
    }

    pub fn from_parts(w: Array2<T>, b: Array2<T>) -> Result<Self> {
        if b.nrows() != 1 || b.ncols() != w.ncols() {
            return Err(Error::shape(
                "dense bias",
                format!("(1, {})", w.ncols()),
                format!("{:?}", b.dim()),
            ));
        }
        Ok(Self {
            w: Param::new(w),
            b: Param::new(b),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn forward(&self, x: &Array2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape("dense input", self.input_dim(), x.ncols()));
        }
        Ok(x.dot(&self.w.value) + &self.b.value)
    }

    /// Returns `dL/dx`; adds `dL/dW`, `dL/db` into the gradients when
    /// `accumulate` is set.
    pub fn backward(&mut self, x: &Array2<T>, dy: &Array2<T>, accumulate: bool) -> Array2<T> {
        if accumulate {
            self.w.grad += &x.t().dot(dy);
            self.b.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        dy.dot(&self.w.value.t())
    }
}

impl<T: Real> Parameterized<T> for Dense<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("w", &self.w);
        f("b", &self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("w", &mut self.w);
        f("b", &mut self.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck;
    use ndarray::array;

    #[test]
    fn identity_passthrough() {
        let d = Dense::from_parts(Array2::<f64>::eye(3), Array2::zeros((1, 3))).unwrap();
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, 1.0]];
        assert_eq!(d.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = RngStream::new(0, 0);
        let d = Dense::<f64>::new(4, 3, &mut rng);
        let y = d.forward(&Array2::zeros((2, 4))).unwrap();
        for row in y.rows() {
            assert_eq!(row, d.b.value.row(0));
        }
    }

    #[test]
    fn shape_mismatch() {
        let d = Dense::<f64>::new(4, 3, &mut RngStream::new(0, 0));
        assert!(matches!(
            d.forward(&Array2::zeros((2, 5))),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(3, 0);
        for (i, o, b) in [(1, 1, 1), (3, 5, 4), (7, 2, 3)] {
            let mut d = Dense::<f64>::new(i, o, &mut rng);
            let x = gradcheck::random_matrix(b, i, &mut rng);
            let coef = gradcheck::random_matrix(b, o, &mut rng);
            let loss = |d: &Dense<f64>, x: &Array2<f64>| (d.forward(x).unwrap() * &coef).sum();
            let dx = d.backward(&x, &coef, true);
            let err_p = gradcheck::check_params(&mut d, |m| loss(m, &x));
            let err_x = gradcheck::check_input(&x, &dx, |x| loss(&d, x));
            assert!(err_p <= 1e-4 && err_x <= 1e-4, "{err_p} {err_x}");
        }
    }
}
