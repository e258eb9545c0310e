use ndarray::Array2;

use super::activation::{relu, relu_backward};
use super::dense::Dense;
use super::norm::{LayerNorm, LayerNormCache};
use super::param::{Param, Parameterized};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::scalar::Real;

/// Hidden blocks of `Dense -> LayerNorm -> ReLU`, then a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T: Real> {
    hidden: Vec<(Dense<T>, LayerNorm<T>)>,
    out: Dense<T>,
}

#[derive(Clone, Debug)]
pub struct MlpCache<T: Real> {
    /// Input to each dense layer, the output layer last.
    inputs: Vec<Array2<T>>,
    norms: Vec<LayerNormCache<T>>,
    /// Post-norm pre-activation of each hidden block.
    pre_relu: Vec<Array2<T>>,
}

impl<T: Real> Mlp<T> {
    pub fn new(input: usize, hidden: &[usize], output: usize, rng: &mut RngStream) -> Result<Self> {
        if input == 0 || output == 0 || hidden.iter().any(|&h| h < 2) {
            return Err(Error::param(
                "mlp",
                format!("bad layer sizes {input} -> {hidden:?} -> {output}"),
            ));
        }
        let mut prev = input;
        let mut layers = Vec::with_capacity(hidden.len());
        for &h in hidden {
            layers.push((Dense::new(prev, h, rng), LayerNorm::new(h)));
            prev = h;
        }
        Ok(Self {
            hidden: layers,
            out: Dense::new(prev, output, rng),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map_or(self.out.input_dim(), |(d, _)| d.input_dim())
    }

    pub fn output_dim(&self) -> usize {
        self.out.output_dim()
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense<T> {
        &mut self.out
    }

    pub fn forward(&self, x: &Array2<T>) -> Result<(Array2<T>, MlpCache<T>)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.hidden.len() + 1),
            norms: Vec::with_capacity(self.hidden.len()),
            pre_relu: Vec::with_capacity(self.hidden.len()),
        };
        let mut h = x.clone();
        for (dense, ln) in &self.hidden {
            let z = dense.forward(&h)?;
            cache.inputs.push(h);
            let (n, nc) = ln.forward(&z)?;
            h = relu(&n);
            cache.norms.push(nc);
            cache.pre_relu.push(n);
        }
        let y = self.out.forward(&h)?;
        cache.inputs.push(h);
        Ok((y, cache))
    }

    pub fn predict(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Backpropagates `dy`; with `accumulate == false` only the input
    /// gradient is produced and the parameters' gradients are left alone.
    pub fn backward(&mut self, cache: &MlpCache<T>, dy: &Array2<T>, accumulate: bool) -> Array2<T> {
        let last = cache.inputs.len() - 1;
        let mut g = self.out.backward(&cache.inputs[last], dy, accumulate);
        for k in (0..self.hidden.len()).rev() {
            let (dense, ln) = &mut self.hidden[k];
            g = relu_backward(&cache.pre_relu[k], &g);
            g = ln.backward(&cache.norms[k], &g, accumulate);
            g = dense.backward(&cache.inputs[k], &g, accumulate);
        }
        g
    }
}

impl<T: Real> Parameterized<T> for Mlp<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (k, (d, ln)) in self.hidden.iter().enumerate() {
            d.visit(&mut |n, p| f(&format!("dense{k}.{n}"), p));
            ln.visit(&mut |n, p| f(&format!("norm{k}.{n}"), p));
        }
        self.out.visit(&mut |n, p| f(&format!("out.{n}"), p));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (k, (d, ln)) in self.hidden.iter_mut().enumerate() {
            d.visit_mut(&mut |n, p| f(&format!("dense{k}.{n}"), p));
            ln.visit_mut(&mut |n, p| f(&format!("norm{k}.{n}"), p));
        }
        self.out.visit_mut(&mut |n, p| f(&format!("out.{n}"), p));
    }
}
