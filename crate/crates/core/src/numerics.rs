//! Complex vectors and matrices, seeded random streams, and the dominant
//! singular pair by power iteration.

use std::ops::Index;

use num_complex::Complex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Iteration cap for [`power_iteration_top_pair`] when callers have no
/// better choice.
pub const DEFAULT_POWER_ITERS: usize = 200;
/// Convergence tolerance on the singular value estimate.
pub const DEFAULT_POWER_TOL: f64 = 1e-10;

/// A reproducible random stream identified by `(seed, stream)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so streams with the same seed and different ids never overlap.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// A fresh stream sharing this stream's seed.
    pub fn sibling(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }

    /// One standard normal draw.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `[lo, hi)`.
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Circularly-symmetric complex Gaussian with total variance `variance`.
    #[inline]
    pub fn cgauss<T: Real>(&mut self, variance: f64) -> Complex<T> {
        let s = (variance / 2.0).sqrt();
        let re = self.normal() * s;
        let im = self.normal() * s;
        Complex::new(T::lit(re), T::lit(im))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer; used to derive child seeds from a parent seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Dense complex column vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CVec<T: Real>(Vec<Complex<T>>);

impl<T: Real> CVec<T> {
    pub fn new(entries: Vec<Complex<T>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::param("entries", "vector must be nonempty"));
        }
        if entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::param("entries", "non-finite entry"));
        }
        Ok(Self(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![Complex::new(T::zero(), T::zero()); n])
    }

    /// The `i`-th standard basis vector of length `n`.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = Complex::new(T::one(), T::zero());
        v
    }

    /// Every entry equal to `1/sqrt(n)`.
    pub fn uniform(n: usize) -> Self {
        let a = T::one() / T::from_usize(n).unwrap().sqrt();
        Self(vec![Complex::new(a, T::zero()); n])
    }

    pub fn from_reals(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(re, im)| Complex::new(T::lit(re), T::lit(im)))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<Complex<T>> {
        self.0
    }

    pub fn norm_sqr(&self) -> T {
        self.0.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    /// `self^H other`.
    pub fn dot_h(&self, other: &Self) -> Complex<T> {
        self.0
            .iter()
            .zip(&other.0)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| {
                acc + a.conj() * b
            })
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        Self(self.0.iter().map(|z| z * c).collect())
    }

    /// Unit-norm copy, or `None` when the norm is below `floor`.
    pub fn normalized(&self, floor: T) -> Option<Self> {
        let n = self.norm();
        if n < floor || !n.is_finite() {
            return None;
        }
        Some(Self(self.0.iter().map(|z| z / n).collect()))
    }
}

impl<T: Real> Index<usize> for CVec<T> {
    type Output = Complex<T>;

    fn index(&self, i: usize) -> &Complex<T> {
        &self.0[i]
    }
}

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat<T: Real> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMat<T> {
    pub fn new(n: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::shape("CMat::new", format!("{n}x{n}"), data.len()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::param("entries", "non-finite entry"));
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::new(T::zero(), T::zero()); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn diag(values: &[Complex<T>]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn frobenius_sqr(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }

    /// `H v`.
    pub fn mul_vec(&self, v: &CVec<T>) -> Result<CVec<T>> {
        if v.len() != self.n {
            return Err(Error::shape("CMat::mul_vec", self.n, v.len()));
        }
        let out = (0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                row.iter()
                    .zip(v.as_slice())
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (h, x)| {
                        acc + h * x
                    })
            })
            .collect();
        Ok(CVec(out))
    }

    /// `H^H v`.
    pub fn herm_mul_vec(&self, v: &CVec<T>) -> Result<CVec<T>> {
        if v.len() != self.n {
            return Err(Error::shape("CMat::herm_mul_vec", self.n, v.len()));
        }
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.n];
        for i in 0..self.n {
            let vi = v[i];
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.data[i * self.n + j].conj() * vi;
            }
        }
        Ok(CVec(out))
    }
}

/// `n` i.i.d. circularly-symmetric complex Gaussian entries of total variance
/// `variance`.
pub fn cgauss_vector<T: Real>(n: usize, variance: f64, rng: &mut RngStream) -> Result<CVec<T>> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::param(
            "variance",
            format!("must be positive, got {variance}"),
        ));
    }
    Ok(CVec((0..n).map(|_| rng.cgauss(variance)).collect()))
}

/// `n x n` matrix with i.i.d. complex Gaussian entries of variance `variance`.
pub fn cgauss_matrix<T: Real>(n: usize, variance: f64, rng: &mut RngStream) -> Result<CMat<T>> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::param(
            "variance",
            format!("must be positive, got {variance}"),
        ));
    }
    Ok(CMat::from_fn(n, |_, _| rng.cgauss(variance)))
}

/// `wb^H H wa`.
pub fn bilinear_form<T: Real>(wb: &CVec<T>, h: &CMat<T>, wa: &CVec<T>) -> Result<Complex<T>> {
    let n = h.dim();
    if wa.len() != n || wb.len() != n {
        return Err(Error::shape(
            "bilinear_form",
            format!("vectors of length {n}"),
            format!("wa={}, wb={}", wa.len(), wb.len()),
        ));
    }
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..n {
        let row = &h.as_slice()[i * n..(i + 1) * n];
        let hi = row
            .iter()
            .zip(wa.as_slice())
            .fold(Complex::new(T::zero(), T::zero()), |s, (hij, a)| {
                s + hij * a
            });
        acc += wb[i].conj() * hi;
    }
    Ok(acc)
}

/// Dominant singular triple of a square matrix.
#[derive(Clone, Debug)]
pub struct TopPair<T: Real> {
    /// Right singular vector (transmit side).
    pub wa: CVec<T>,
    /// Left singular vector (receive side).
    pub wb: CVec<T>,
    pub sigma: T,
    pub iterations: usize,
}

/// Power iteration on `H^H H` for the dominant singular pair.
///
/// The returned vectors are unit norm and phase-aligned so that
/// `wb^H H wa = sigma` is real and positive.
pub fn power_iteration_top_pair<T: Real>(
    h: &CMat<T>,
    iters: usize,
    tol: T,
    rng: &mut RngStream,
) -> Result<TopPair<T>> {
    let n = h.dim();
    if h.frobenius_sqr() <= T::min_positive_value() {
        return Err(Error::Degenerate(
            "power iteration on an all-zero matrix".into(),
        ));
    }
    let tiny = T::lit(1e-300).max(T::min_positive_value());
    let mut v = loop {
        // A start vector orthogonal to the dominant pair has probability zero,
        // but a zero draw is still rejected.
        if let Some(v) = cgauss_vector::<T>(n, 1.0, rng)?.normalized(tiny) {
            break v;
        }
    };
    let mut sigma = T::zero();
    let mut used = 0;
    for k in 0..iters.max(1) {
        used = k + 1;
        let u = h.mul_vec(&v)?;
        let s = u.norm();
        if s <= tiny {
            // Start vector landed in the null space; restart from a basis axis.
            v = CVec::basis(n, k % n);
            continue;
        }
        let w = h.herm_mul_vec(&u)?;
        let wn = w.norm();
        v = CVec(w.as_slice().iter().map(|z| z / wn).collect());
        let prev = sigma;
        sigma = h.mul_vec(&v)?.norm();
        if (sigma - prev).abs() < tol {
            break;
        }
    }
    let hv = h.mul_vec(&v)?;
    let s = hv.norm();
    if s <= tiny {
        return Err(Error::Degenerate(
            "power iteration collapsed to zero".into(),
        ));
    }
    let wb = CVec(hv.as_slice().iter().map(|z| z / s).collect());
    Ok(TopPair {
        wa: v,
        wb,
        sigma: s,
        iterations: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn same_seed_same_stream_is_reproducible() {
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        let va = cgauss_vector::<f64>(4, 1.0, &mut a).unwrap();
        let vb = cgauss_vector::<f64>(4, 1.0, &mut b).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn cgauss_rejects_non_positive_variance() {
        let mut rng = RngStream::new(0, 0);
        assert!(cgauss_vector::<f64>(1, 0.0, &mut rng).is_err());
        assert!(cgauss_vector::<f64>(1, -1.0, &mut rng).is_err());
        assert!(cgauss_vector::<f64>(0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn cgauss_moments() {
        let mut rng = RngStream::new(7, 0);
        let draws = 1_000_000 / 4;
        let (mut s, mut ss, mut sre2) = (c(0.0, 0.0), 0.0, 0.0);
        for _ in 0..draws {
            for z in cgauss_vector::<f64>(4, 1.0, &mut rng).unwrap().as_slice() {
                s += z;
                ss += z.norm_sqr();
                sre2 += z.re * z.re;
            }
        }
        let n = (draws * 4) as f64;
        assert!((ss / n - 1.0).abs() < 0.01, "variance {}", ss / n);
        assert!((sre2 / n - 0.5).abs() < 0.01);
        assert!((s / n).norm() < 0.01);
    }

    #[test]
    fn bilinear_identity_cases() {
        let h = CMat::<f64>::identity(3);
        let e1 = CVec::basis(3, 0);
        let e2 = CVec::basis(3, 1);
        assert_eq!(bilinear_form(&e1, &h, &e1).unwrap(), c(1.0, 0.0));
        assert_eq!(bilinear_form(&e2, &h, &e1).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn bilinear_shape_error() {
        let h = CMat::<f64>::identity(3);
        let a = CVec::basis(3, 0);
        let b = CVec::basis(2, 0);
        assert!(matches!(
            bilinear_form(&b, &h, &a),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn bilinear_matches_triple_loop() {
        let mut rng = RngStream::new(11, 0);
        for n in 1..=8 {
            let h = cgauss_matrix::<f64>(n, 1.0, &mut rng).unwrap();
            let wa = cgauss_vector::<f64>(n, 1.0, &mut rng).unwrap();
            let wb = cgauss_vector::<f64>(n, 1.0, &mut rng).unwrap();
            let mut expect = c(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    expect += wb[i].conj() * h.get(i, j) * wa[j];
                }
            }
            let got = bilinear_form(&wb, &h, &wa).unwrap();
            assert!((got - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn bilinear_conjugate_linear_in_left() {
        let mut rng = RngStream::new(12, 0);
        let h = cgauss_matrix::<f64>(4, 1.0, &mut rng).unwrap();
        let wa = cgauss_vector::<f64>(4, 1.0, &mut rng).unwrap();
        let wb = cgauss_vector::<f64>(4, 1.0, &mut rng).unwrap();
        let base = bilinear_form(&wb, &h, &wa).unwrap();
        for k in 0..20 {
            let s = c(0.3 * k as f64 - 2.0, 1.0 - 0.17 * k as f64);
            let lhs = bilinear_form(&wb.scaled(s), &h, &wa).unwrap();
            assert!((lhs - s.conj() * base).norm() < 1e-12);
            let rhs = bilinear_form(&wb, &h, &wa.scaled(s)).unwrap();
            assert!((rhs - s * base).norm() < 1e-12);
        }
    }

    #[test]
    fn power_iteration_diagonal() {
        let h = CMat::diag(&[c(3.0, 0.0), c(1.0, 0.0)]);
        let mut rng = RngStream::new(1, 0);
        let p =
            power_iteration_top_pair(&h, DEFAULT_POWER_ITERS, DEFAULT_POWER_TOL, &mut rng).unwrap();
        assert!((p.sigma - 3.0).abs() < 1e-9);
        assert!((p.wa[0].norm() - 1.0).abs() < 1e-9);
        assert!((p.wb[0].norm() - 1.0).abs() < 1e-9);
        let g = bilinear_form(&p.wb, &h, &p.wa).unwrap();
        assert!((g - c(3.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn power_iteration_scalar() {
        let h = CMat::new(1, vec![c(0.0, 2.0)]).unwrap();
        let mut rng = RngStream::new(1, 0);
        let p =
            power_iteration_top_pair(&h, DEFAULT_POWER_ITERS, DEFAULT_POWER_TOL, &mut rng).unwrap();
        assert!((p.sigma - 2.0).abs() < 1e-12);
        assert!((bilinear_form(&p.wb, &h, &p.wa).unwrap().norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_rejects_zero_matrix() {
        let mut rng = RngStream::new(1, 0);
        let h = CMat::<f64>::zeros(3);
        assert!(matches!(
            power_iteration_top_pair(&h, 10, 1e-10, &mut rng),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn power_iteration_dominates_random_pairs() {
        let mut rng = RngStream::new(5, 0);
        let h = cgauss_matrix::<f64>(8, 1.0, &mut rng).unwrap();
        let p =
            power_iteration_top_pair(&h, DEFAULT_POWER_ITERS, DEFAULT_POWER_TOL, &mut rng).unwrap();
        let best = bilinear_form(&p.wb, &h, &p.wa).unwrap().norm_sqr();
        assert!((best.sqrt() - p.sigma).abs() < 1e-9);
        for _ in 0..10_000 {
            let u = cgauss_vector::<f64>(8, 1.0, &mut rng)
                .unwrap()
                .normalized(1e-12)
                .unwrap();
            let v = cgauss_vector::<f64>(8, 1.0, &mut rng)
                .unwrap()
                .normalized(1e-12)
                .unwrap();
            let g = bilinear_form(&v, &h, &u).unwrap().norm_sqr();
            assert!(best >= g);
        }
    }

    #[test]
    fn power_iteration_gain_invariant_under_column_phases() {
        let mut rng = RngStream::new(9, 0);
        let h = cgauss_matrix::<f64>(6, 1.0, &mut rng).unwrap();
        let phases: Vec<C> = (0..6).map(|k| C::from_polar(1.0, 0.7 * k as f64)).collect();
        let rotated = CMat::from_fn(6, |i, j| h.get(i, j) * phases[j]);
        let a = power_iteration_top_pair(&h, 500, 1e-12, &mut rng).unwrap();
        let b = power_iteration_top_pair(&rotated, 500, 1e-12, &mut rng).unwrap();
        assert!((a.sigma - b.sigma).abs() < 1e-8);
    }

    #[test]
    fn works_in_single_precision() {
        let h = CMat::<f32>::diag(&[Complex::new(3.0, 0.0), Complex::new(1.0, 0.0)]);
        let mut rng = RngStream::new(1, 0);
        let p = power_iteration_top_pair(&h, 200, 1e-6, &mut rng).unwrap();
        assert!((p.sigma - 3.0).abs() < 1e-5);
    }
}
