use ndarray::{s, Array2, Axis};

use super::activation::sigmoid;
use super::param::{Param, Parameterized};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::scalar::Real;

/// Single-layer LSTM. Gate blocks are laid out `[input, forget, cell, output]`
/// along the columns of the `4H`-wide weight matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm<T: Real> {
    pub w_x: Param<T>,
    pub w_h: Param<T>,
    pub b: Param<T>,
}

#[derive(Clone, Debug)]
pub struct LstmStepCache<T: Real> {
    x: Array2<T>,
    h_prev: Array2<T>,
    c_prev: Array2<T>,
    i: Array2<T>,
    f: Array2<T>,
    g: Array2<T>,
    o: Array2<T>,
    tanh_c: Array2<T>,
}

#[derive(Clone, Debug)]
pub struct LstmCache<T: Real> {
    steps: Vec<LstmStepCache<T>>,
}

impl<T: Real> LstmCache<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl<T: Real> Lstm<T> {
    pub fn new(input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (hidden.max(1) as f64).sqrt();
        Self {
            w_x: Param::uniform(input, 4 * hidden, bound, rng),
            w_h: Param::uniform(hidden, 4 * hidden, bound, rng),
            b: Param::uniform(1, 4 * hidden, bound, rng),
        }
    }

    pub fn zeroed(input: usize, hidden: usize) -> Self {
        Self {
            w_x: Param::zeros(input, 4 * hidden),
            w_h: Param::zeros(hidden, 4 * hidden),
            b: Param::zeros(1, 4 * hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.value.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.value.nrows()
    }

    pub fn step(
        &self,
        x: &Array2<T>,
        h: &Array2<T>,
        c: &Array2<T>,
    ) -> Result<(Array2<T>, Array2<T>, LstmStepCache<T>)> {
        let hd = self.hidden_dim();
        if x.ncols() != self.input_dim() {
            return Err(Error::shape("lstm input", self.input_dim(), x.ncols()));
        }
        if h.dim() != (x.nrows(), hd) || c.dim() != h.dim() {
            return Err(Error::shape(
                "lstm state",
                format!("({}, {hd})", x.nrows()),
                format!("{:?}/{:?}", h.dim(), c.dim()),
            ));
        }
        let z = x.dot(&self.w_x.value) + h.dot(&self.w_h.value) + &self.b.value;
        let i = z.slice(s![.., 0..hd]).mapv(sigmoid);
        let f = z.slice(s![.., hd..2 * hd]).mapv(sigmoid);
        let g = z.slice(s![.., 2 * hd..3 * hd]).mapv(T::tanh);
        let o = z.slice(s![.., 3 * hd..]).mapv(sigmoid);
        let c_new = &f * c + &i * &g;
        let tanh_c = c_new.mapv(T::tanh);
        let h_new = &o * &tanh_c;
        let cache = LstmStepCache {
            x: x.clone(),
            h_prev: h.clone(),
            c_prev: c.clone(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        Ok((h_new, c_new, cache))
    }

    /// Runs a sequence from zero state. Returns the hidden state after every step.
    pub fn forward(&self, xs: &[Array2<T>]) -> Result<(Vec<Array2<T>>, LstmCache<T>)> {
        let b = xs.first().map_or(0, |x| x.nrows());
        let mut h = Array2::zeros((b, self.hidden_dim()));
        let mut c = h.clone();
        let mut hs = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let (h2, c2, sc) = self.step(x, &h, &c)?;
            hs.push(h2.clone());
            steps.push(sc);
            h = h2;
            c = c2;
        }
        Ok((hs, LstmCache { steps }))
    }

    /// Backpropagation through time. `dhs[t]` is the upstream gradient on the
    /// hidden state emitted at step `t`; returns the input gradients per step.
    pub fn backward(&mut self, cache: &LstmCache<T>, dhs: &[Array2<T>]) -> Vec<Array2<T>> {
        assert_eq!(
            cache.steps.len(),
            dhs.len(),
            "one upstream gradient per step"
        );
        let hd = self.hidden_dim();
        let one = T::one();
        let mut dxs = vec![Array2::zeros((0, 0)); dhs.len()];
        let Some(first) = cache.steps.first() else {
            return dxs;
        };
        let mut dh_next = Array2::zeros(first.h_prev.raw_dim());
        let mut dc_next = Array2::zeros(first.c_prev.raw_dim());
        for t in (0..cache.steps.len()).rev() {
            let sc = &cache.steps[t];
            let dh = &dhs[t] + &dh_next;
            let d_o = &dh * &sc.tanh_c;
            let dc = &dc_next + &(&dh * &sc.o * &sc.tanh_c.mapv(|v| one - v * v));
            let di = &dc * &sc.g;
            let dg = &dc * &sc.i;
            let df = &dc * &sc.c_prev;
            dc_next = &dc * &sc.f;

            let mut dz = Array2::zeros((dh.nrows(), 4 * hd));
            dz.slice_mut(s![.., 0..hd])
                .assign(&(&di * &sc.i.mapv(|v| v * (one - v))));
            dz.slice_mut(s![.., hd..2 * hd])
                .assign(&(&df * &sc.f.mapv(|v| v * (one - v))));
            dz.slice_mut(s![.., 2 * hd..3 * hd])
                .assign(&(&dg * &sc.g.mapv(|v| one - v * v)));
            dz.slice_mut(s![.., 3 * hd..])
                .assign(&(&d_o * &sc.o.mapv(|v| v * (one - v))));

            self.w_x.grad += &sc.x.t().dot(&dz);
            self.w_h.grad += &sc.h_prev.t().dot(&dz);
            self.b.grad += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            dxs[t] = dz.dot(&self.w_x.value.t());
            dh_next = dz.dot(&self.w_h.value.t());
        }
        dxs
    }
}

impl<T: Real> Parameterized<T> for Lstm<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("w_x", &self.w_x);
        f("w_h", &self.w_h);
        f("b", &self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("w_x", &mut self.w_x);
        f("w_h", &mut self.w_h);
        f("b", &mut self.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck;

    #[test]
    fn zero_weights_give_zero_hidden() {
        let lstm = Lstm::<f64>::zeroed(4, 6);
        let mut rng = RngStream::new(0, 0);
        let x = gradcheck::random_matrix(3, 4, &mut rng);
        let h = gradcheck::random_matrix(3, 6, &mut rng);
        let c = gradcheck::random_matrix(3, 6, &mut rng);
        let (h1, c1, _) = lstm.step(&x, &h, &c).unwrap();
        assert_eq!(c1, &c * 0.5);
        let (h0, c0, _) = lstm
            .step(&x, &Array2::zeros((3, 6)), &Array2::zeros((3, 6)))
            .unwrap();
        assert!(h0.iter().chain(c0.iter()).all(|&v| v == 0.0));
        assert!(h1
            .iter()
            .zip(c.iter())
            .all(|(&h, &c)| (h - 0.5 * (0.5 * c).tanh()).abs() < 1e-15));
    }

    #[test]
    fn hidden_64_shapes() {
        let lstm = Lstm::<f64>::new(4, 64, &mut RngStream::new(0, 0));
        let (hs, cache) = lstm.forward(&vec![Array2::ones((2, 4)); 8]).unwrap();
        assert_eq!(hs.len(), 8);
        assert_eq!(cache.len(), 8);
        assert_eq!(hs[7].dim(), (2, 64));
    }

    #[test]
    fn rejects_bad_shapes() {
        let lstm = Lstm::<f64>::new(4, 3, &mut RngStream::new(0, 0));
        assert!(lstm
            .step(
                &Array2::zeros((1, 5)),
                &Array2::zeros((1, 3)),
                &Array2::zeros((1, 3))
            )
            .is_err());
        assert!(lstm
            .step(
                &Array2::zeros((1, 4)),
                &Array2::zeros((1, 2)),
                &Array2::zeros((1, 3))
            )
            .is_err());
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = RngStream::new(5, 0);
        let mut lstm = Lstm::<f64>::new(3, 5, &mut rng);
        let xs: Vec<_> = (0..8)
            .map(|_| gradcheck::random_matrix(2, 3, &mut rng))
            .collect();
        let coefs: Vec<_> = (0..8)
            .map(|_| gradcheck::random_matrix(2, 5, &mut rng))
            .collect();
        let loss = |m: &Lstm<f64>| {
            let (hs, _) = m.forward(&xs).unwrap();
            hs.iter()
                .zip(&coefs)
                .map(|(h, c)| (h * c).sum())
                .sum::<f64>()
        };
        let (_, cache) = lstm.forward(&xs).unwrap();
        let dxs = lstm.backward(&cache, &coefs);
        let ep = gradcheck::check_params(&mut lstm, loss);
        assert!(ep <= 1e-4, "{ep}");
        for t in [0, 4, 7] {
            let ex = gradcheck::check_input(&xs[t], &dxs[t], |x| {
                let mut seq = xs.clone();
                seq[t] = x.clone();
                let (hs, _) = lstm.forward(&seq).unwrap();
                hs.iter()
                    .zip(&coefs)
                    .map(|(h, c)| (h * c).sum())
                    .sum::<f64>()
            });
            assert!(ex <= 1e-4, "step {t}: {ex}");
        }
    }
}
