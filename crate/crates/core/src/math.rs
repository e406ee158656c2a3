//! Numerically stable sigmoid/softmax primitives and the seeded random stream.
//!
//! Every log-probability used by the losses goes through [`softplus`], which is
//! evaluated as `max(x, 0) + ln(1 + e^{-|x|})` so that neither tail overflows.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Raw classifier scores over `K >= 2` classes, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T> {
    values: Vec<T>,
}

impl<T: Scalar> Logits<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid_input(format!(
                "logits need at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid_input(format!("logit {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn from_slice(values: &[T]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    /// Number of classes.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }
}

/// Per-class probabilities. `normalized` is set when the entries come from a
/// softmax and therefore sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<T> {
    values: Vec<T>,
    normalized: bool,
}

impl<T: Scalar> ProbVector<T> {
    pub fn new(values: Vec<T>, normalized: bool) -> Result<Self> {
        if let Some(i) = values
            .iter()
            .position(|&v| !(v >= T::zero() && v <= T::one()))
        {
            return Err(Error::invalid_input(format!(
                "probability {i} = {} outside [0, 1]",
                values[i]
            )));
        }
        if normalized {
            let total = values.iter().fold(0.0, |acc, v| acc + v.as_f64());
            // f32 vectors cannot meet a 1e-12 sum tolerance, scale it with epsilon.
            let tol = (T::epsilon().as_f64() * values.len() as f64).max(1e-12);
            if (total - 1.0).abs() > tol {
                return Err(Error::invalid_input(format!(
                    "normalized probabilities sum to {total}"
                )));
            }
        }
        Ok(Self { values, normalized })
    }

    /// Element-wise sigmoid of the logits (independent per-class Bernoulli).
    pub fn from_sigmoid(z: &Logits<T>) -> Self {
        Self {
            values: z.as_slice().iter().map(|&v| sigmoid_unchecked(v)).collect(),
            normalized: false,
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

fn check_finite<T: Scalar>(z: T) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid_input(format!("non-finite input {z}")))
    }
}

/// `ln(1 + e^x)`.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid_unchecked<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn log_sigmoid_unchecked<T: Scalar>(z: T) -> T {
    -softplus(-z)
}

/// Logistic function `1 / (1 + e^{-z})`.
pub fn sigmoid<T: Scalar>(z: T) -> Result<T> {
    check_finite(z)?;
    Ok(sigmoid_unchecked(z))
}

/// `ln σ(z)`; `ln(1 - σ(z))` is `log_sigmoid(-z)`.
pub fn log_sigmoid<T: Scalar>(z: T) -> Result<T> {
    check_finite(z)?;
    Ok(log_sigmoid_unchecked(z))
}

pub(crate) fn max_of<T: Scalar>(z: &[T]) -> T {
    z.iter().copied().fold(T::neg_infinity(), T::max)
}

/// `ln Σ e^{z_j}` with the maximum factored out.
pub(crate) fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let max = max_of(z);
    let sum: T = z.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

pub(crate) fn softmax_slice<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = max_of(z);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn log_softmax_slice<T: Scalar>(z: &[T]) -> Vec<T> {
    let lse = log_sum_exp(z);
    z.iter().map(|&v| v - lse).collect()
}

pub fn softmax<T: Scalar>(z: &Logits<T>) -> ProbVector<T> {
    ProbVector {
        values: softmax_slice(z.as_slice()),
        normalized: true,
    }
}

pub fn log_softmax<T: Scalar>(z: &Logits<T>) -> Vec<T> {
    log_softmax_slice(z.as_slice())
}

/// Deterministic random stream.
///
/// Backed by ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), a portable
/// generator whose output is identical on every platform for a given seed.
/// The 64-bit seed is expanded to the 256-bit ChaCha key with
/// `SeedableRng::seed_from_u64` (a PCG32 stream, also portable). Uniform
/// draws are 53-bit floats in `[0, 1)`; standard normals use the Ziggurat
/// method of `rand_distr::StandardNormal`.
///
/// Independent sub-streams for the same seed are selected with
/// [`SeededRng::with_stream`], which sets the ChaCha stream id.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<E>(&mut self, items: &mut [E]) {
        items.shuffle(&mut self.inner);
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}
