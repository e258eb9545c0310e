use ndarray::{Array2, Axis};

use super::param::{Param, Parameterized};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const LN_EPS: f64 = 1e-5;

/// Per-row normalization followed by a learned gain and offset.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm<T: Real> {
    pub gain: Param<T>,
    pub offset: Param<T>,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache<T: Real> {
    xhat: Array2<T>,
    inv_std: Vec<T>,
}

impl<T: Real> LayerNormCache<T> {
    /// The normalized input before gain and offset.
    pub fn normalized(&self) -> &Array2<T> {
        &self.xhat
    }
}

impl<T: Real> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: Param::filled(1, dim, T::one()),
            offset: Param::zeros(1, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.value.ncols()
    }

    pub fn forward(&self, x: &Array2<T>) -> Result<(Array2<T>, LayerNormCache<T>)> {
        let d = self.dim();
        if d < 2 {
            return Err(Error::param(
                "layer_norm",
                "feature dimension must be at least 2",
            ));
        }
        if x.ncols() != d {
            return Err(Error::shape("layer_norm input", d, x.ncols()));
        }
        let nf = T::from_usize(d).expect("usize");
        let eps = T::lit(LN_EPS);
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / nf;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().fold(T::zero(), |a, &v| a + v * v) / nf;
            let s = T::one() / (var + eps).sqrt();
            row.mapv_inplace(|v| v * s);
            inv_std.push(s);
        }
        let y = &xhat * &self.gain.value + &self.offset.value;
        Ok((y, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(
        &mut self,
        cache: &LayerNormCache<T>,
        dy: &Array2<T>,
        accumulate: bool,
    ) -> Array2<T> {
        if accumulate {
            self.gain.grad += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
            self.offset.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        let nf = T::from_usize(self.dim()).expect("usize");
        let dxhat = dy * &self.gain.value;
        let mut dx = dxhat.clone();
        for (r, mut row) in dx.rows_mut().into_iter().enumerate() {
            let xh = cache.xhat.row(r);
            let sum_d = row.sum();
            let sum_dx = row
                .iter()
                .zip(xh.iter())
                .fold(T::zero(), |a, (&d, &x)| a + d * x);
            let s = cache.inv_std[r] / nf;
            for (d, &x) in row.iter_mut().zip(xh.iter()) {
                *d = s * (nf * *d - sum_d - x * sum_dx);
            }
        }
        dx
    }
}

impl<T: Real> Parameterized<T> for LayerNorm<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("gain", &self.gain);
        f("offset", &self.offset);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("gain", &mut self.gain);
        f("offset", &mut self.offset);
    }
}
