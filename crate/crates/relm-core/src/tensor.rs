//! Dense 1-D/2-D/3-D numeric containers, deterministic RNG, and the
//! elementwise activations used by every other module.
//!
//! All storage is 64-bit floats, row-major with the last axis fastest:
//! element `(i, j, k)` of dims `[A, B, C]` lives at flat index
//! `i*B*C + j*C + k`.

use crate::error::{Error, Result};

/// Identifier of the RNG algorithm, recorded in model files so a saved model
/// pins the exact draw sequence it was initialized from.
pub const RNG_ID: &str = "splitmix64-v1";

/// Contiguous row-major tensor of 1 to 3 axes.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Zero-filled tensor. Every extent must be nonzero.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        let len = dims.iter().product();
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        })
    }

    /// Wrap existing data; `product(dims)` must equal `data.len()` and every
    /// element must be finite.
    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::check_dims(dims)?;
        let expect: usize = dims.iter().product();
        if expect != data.len() {
            return Err(Error::Dimension(format!(
                "dims {:?} require {} elements, got {}",
                dims,
                expect,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("tensor data"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::Dimension(format!(
                "tensors have 1-3 axes, got {:?}",
                dims
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!("zero extent in dims {:?}", dims)));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat index of `(i, j)` in a 2-axis tensor.
    #[inline]
    pub fn idx2(&self, i: usize, j: usize) -> usize {
        debug_assert_eq!(self.dims.len(), 2);
        i * self.dims[1] + j
    }

    /// Flat index of `(i, j, k)` in a 3-axis tensor.
    #[inline]
    pub fn idx3(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert_eq!(self.dims.len(), 3);
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get1(&self, i: usize) -> f64 {
        self.data[i]
    }

    #[inline]
    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx2(i, j)]
    }

    #[inline]
    pub fn get3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx3(i, j, k)]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.idx2(i, j);
        self.data[idx] = v;
    }

    #[inline]
    pub fn set3(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.idx3(i, j, k);
        self.data[idx] = v;
    }

    /// Contiguous slice holding row `i` of the leading axis.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let stride: usize = self.dims[1..].iter().product();
        &self.data[i * stride..(i + 1) * stride]
    }

    /// Largest absolute elementwise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims, other.dims, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn assert_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }
}

/// Deterministic splittable RNG (splitmix64). Same seed yields a bit-identical
/// draw sequence on every platform and backend; the stream is a pure function
/// of the 64-bit state.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: u64,
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal draw via Box-Muller (one value per call; the spare is
    /// discarded to keep the stream position a simple function of call count).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Fill a fresh tensor with i.i.d. uniform `[lo, hi)` draws.
pub fn uniform_fill(rng: &mut SeededRng, dims: &[usize], lo: f64, hi: f64) -> Result<DenseTensor> {
    if !(lo < hi) {
        return Err(Error::Config(format!(
            "uniform_fill requires lo < hi, got [{lo}, {hi})"
        )));
    }
    let mut t = DenseTensor::zeros(dims)?;
    for v in t.data_mut() {
        *v = rng.uniform(lo, hi);
    }
    Ok(t)
}

/// Activation function kinds used by hidden neurons and gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed in terms of the activation *output*.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Logistic sigmoid; saturates cleanly at the extremes.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_fill_is_reproducible() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        let ta = uniform_fill(&mut a, &[2, 2], -1.0, 1.0).unwrap();
        let tb = uniform_fill(&mut b, &[2, 2], -1.0, 1.0).unwrap();
        assert_eq!(ta.data(), tb.data());
    }

    #[test]
    fn uniform_fill_advances_stream() {
        let mut rng = SeededRng::new(42);
        let first = uniform_fill(&mut rng, &[2, 2], -1.0, 1.0).unwrap();
        let second = uniform_fill(&mut rng, &[2, 2], -1.0, 1.0).unwrap();
        assert_ne!(first.data(), second.data());
    }

    #[test]
    fn uniform_fill_empty_range_rejected() {
        let mut rng = SeededRng::new(42);
        assert!(uniform_fill(&mut rng, &[2], 0.0, 0.0).is_err());
    }

    #[test]
    fn uniform_fill_zero_extent_rejected() {
        let mut rng = SeededRng::new(42);
        assert!(matches!(
            uniform_fill(&mut rng, &[2, 0], -1.0, 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(43);
        let ta = uniform_fill(&mut a, &[4], -1.0, 1.0).unwrap();
        let tb = uniform_fill(&mut b, &[4], -1.0, 1.0).unwrap();
        assert!(ta.data().iter().zip(tb.data()).any(|(x, y)| x != y));
    }

    #[test]
    fn draws_stay_in_range() {
        let mut rng = SeededRng::new(7);
        for _ in 0..10_000 {
            let v = rng.uniform(-1.0, 1.0);
            assert!((-1.0..1.0).contains(&v));
        }
    }

    #[test]
    fn activation_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(0.0_f64.tanh(), 0.0);
        // 1/(1+e^-2), high-precision reference
        assert!((sigmoid(2.0) - 0.880797077977882444).abs() < 1e-15);
        // monotone and bounded
        let mut prev = f64::NEG_INFINITY;
        for i in -100..=100 {
            let y = sigmoid(i as f64 * 0.1);
            assert!(y > 0.0 && y < 1.0 && y >= prev);
            prev = y;
        }
        assert!(sigmoid(1000.0).is_finite());
        assert!(sigmoid(-1000.0).is_finite());
    }

    #[test]
    fn from_vec_shape_checked() {
        assert!(DenseTensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(DenseTensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(DenseTensor::from_vec(&[2], vec![f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn row_slices() {
        let t = DenseTensor::from_vec(&[2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.row(0), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(t.row(1), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(t.get3(1, 0, 1), 5.0);
    }
}
