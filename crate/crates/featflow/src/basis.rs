//! Random feature functions per subdomain.
//!
//! Each subdomain carries `J` features `σ(W·x̃ + b)` with `x̃` the normalized
//! coordinates and `(W, b)` drawn once from `U(−R, R)` by a counter-based
//! deterministic stream. Spatial derivatives up to total order 4 are
//! evaluated from closed-form tables (polynomial-in-tanh recurrence, or
//! quadrant shifts for cosine) rather than automatic differentiation; the
//! affine normalization contributes the factors `(W_k / r_k)^{α_k}` so all
//! derivatives are with respect to physical coordinates.

use std::sync::Arc;

use faer::Mat;
use thiserror::Error;

use crate::geometry::{GeometryError, Partition};
use crate::jets::MultiIndex;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BasisError {
    #[error("need at least one feature per subdomain")]
    TooFewFeatures,
    #[error("parameter magnitude bound must be positive")]
    NonPositiveMagnitude,
    #[error("subdomain index {index} out of range ({count})")]
    SubdomainIndex { index: usize, count: usize },
    #[error("feature index {index} out of range ({count})")]
    FeatureIndex { index: usize, count: usize },
    #[error("point {point_index} does not lie in subdomain {subdomain}")]
    PointOutsideSubdomain { subdomain: usize, point_index: usize },
    #[error("parameter arrays have wrong length: {0}")]
    ParameterShape(String),
}

impl From<GeometryError> for BasisError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::SubdomainIndex { index, count } => BasisError::SubdomainIndex { index, count },
            other => BasisError::ParameterShape(other.to_string()),
        }
    }
}

/// Feature nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Cos,
}

/// Small integer power by sequential multiplication. Used everywhere the
/// chain factors are formed so that batched and single evaluations agree
/// bitwise.
#[inline]
fn int_pow<T: Real>(x: T, k: usize) -> T {
    let mut acc = T::one();
    for _ in 0..k {
        acc *= x;
    }
    acc
}

/// σ^(order)(u) for the supported activations, orders 0..=4.
///
/// Every tanh derivative is a polynomial in `t = tanh(u)`; cosine derivatives
/// are the quadrant shift `cos(u + order·π/2)`, applied as an exact rotation
/// of `(cos u, sin u)`.
pub fn activation_derivative<T: Real>(activation: Activation, u: T, order: usize) -> T {
    match activation {
        Activation::Tanh => tanh_derivative(u.tanh(), order),
        Activation::Cos => cos_derivative(u.cos(), u.sin(), order),
    }
}

#[inline]
fn tanh_derivative<T: Real>(t: T, order: usize) -> T {
    let t2 = t * t;
    match order {
        0 => t,
        1 => T::one() - t2,
        2 => T::of(-2.0) * t * (T::one() - t2),
        3 => T::of(-2.0) + t2 * (T::of(8.0) - T::of(6.0) * t2),
        4 => t * (T::of(16.0) + t2 * (T::of(-40.0) + T::of(24.0) * t2)),
        _ => unreachable!("derivative order above MAX_ORDER"),
    }
}

#[inline]
fn cos_derivative<T: Real>(c: T, s: T, order: usize) -> T {
    match order % 4 {
        0 => c,
        1 => -s,
        2 => -c,
        _ => s,
    }
}

/// All `σ^(k)(u)` for `k = 0..=order`, sharing one activation evaluation.
fn activation_derivatives<T: Real>(activation: Activation, u: T, order: usize, out: &mut [T]) {
    match activation {
        Activation::Tanh => {
            let t = u.tanh();
            for (k, o) in out.iter_mut().enumerate().take(order + 1) {
                *o = tanh_derivative(t, k);
            }
        }
        Activation::Cos => {
            let (c, s) = (u.cos(), u.sin());
            for (k, o) in out.iter_mut().enumerate().take(order + 1) {
                *o = cos_derivative(c, s, k);
            }
        }
    }
}

/// Deterministic counter-based parameter stream.
///
/// Values depend only on the key tuple, never on call order, so bases can be
/// regenerated per time step (and in parallel) reproducibly.
#[derive(Debug, Clone, Copy)]
pub struct ParamStream {
    seed: u64,
}

impl ParamStream {
    pub fn new(seed: u64) -> Self {
        ParamStream { seed }
    }

    #[inline]
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Raw word for a key tuple.
    pub fn word(&self, keys: &[u64]) -> u64 {
        let mut h = Self::mix(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        for &k in keys {
            h = Self::mix(h ^ k.wrapping_mul(0x2545_f491_4f6c_dd1d));
        }
        h
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open(&self, keys: &[u64]) -> f64 {
        ((self.word(keys) >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Uniform draw on the open interval (−bound, bound).
    pub fn symmetric<T: Real>(&self, keys: &[u64], bound: T) -> T {
        let u = self.uniform_open(keys);
        T::of(2.0 * u - 1.0) * bound
    }
}

// Key slots for the feature parameter tuple (seed, step, subdomain, feature, slot, stream).
const SLOT_WEIGHT_X: u64 = 0;
const SLOT_WEIGHT_Y: u64 = 1;
const SLOT_BIAS: u64 = 2;

/// Random feature functions for every subdomain of a partition, sampled for
/// one time-step index. One basis is shared by all solution components
/// unless a per-component stream is requested.
#[derive(Debug, Clone)]
pub struct FeatureBasis<T> {
    partition: Arc<Partition<T>>,
    features: usize,
    activation: Activation,
    magnitude: T,
    seed: u64,
    step: u64,
    stream: u64,
    weights: Vec<[T; 2]>,
    biases: Vec<T>,
}

/// Draws the feature parameters for `(seed, step)`; `stream` selects a
/// per-component substream (0 when one basis serves every component).
pub fn sample_basis<T: Real>(
    partition: Arc<Partition<T>>,
    features: usize,
    magnitude: T,
    activation: Activation,
    seed: u64,
    step: u64,
    stream: u64,
) -> Result<FeatureBasis<T>, BasisError> {
    if features == 0 {
        return Err(BasisError::TooFewFeatures);
    }
    if !(magnitude > T::zero()) {
        return Err(BasisError::NonPositiveMagnitude);
    }
    let rng = ParamStream::new(seed);
    let n_sub = partition.n_subdomains();
    let mut weights = Vec::with_capacity(n_sub * features);
    let mut biases = Vec::with_capacity(n_sub * features);
    for n in 0..n_sub {
        for j in 0..features {
            let key = |slot: u64| [step, n as u64, j as u64, slot, stream];
            weights.push([
                rng.symmetric(&key(SLOT_WEIGHT_X), magnitude),
                rng.symmetric(&key(SLOT_WEIGHT_Y), magnitude),
            ]);
            biases.push(rng.symmetric(&key(SLOT_BIAS), magnitude));
        }
    }
    Ok(FeatureBasis {
        partition,
        features,
        activation,
        magnitude,
        seed,
        step,
        stream,
        weights,
        biases,
    })
}

impl<T: Real> FeatureBasis<T> {
    /// Builds a basis from explicit parameters (mainly for tests and
    /// constructed examples).
    pub fn from_parts(
        partition: Arc<Partition<T>>,
        activation: Activation,
        weights: Vec<[T; 2]>,
        biases: Vec<T>,
    ) -> Result<Self, BasisError> {
        let n_sub = partition.n_subdomains();
        if weights.is_empty() || weights.len() % n_sub != 0 || weights.len() != biases.len() {
            return Err(BasisError::ParameterShape(format!(
                "{} weights / {} biases over {} subdomains",
                weights.len(),
                biases.len(),
                n_sub
            )));
        }
        let features = weights.len() / n_sub;
        let magnitude = weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(biases.iter())
            .fold(T::zero(), |m, &v| m.max(v.abs()));
        Ok(FeatureBasis {
            partition,
            features,
            activation,
            magnitude,
            seed: 0,
            step: 0,
            stream: 0,
            weights,
            biases,
        })
    }

    pub fn partition(&self) -> &Arc<Partition<T>> {
        &self.partition
    }

    /// Features per subdomain.
    pub fn features_per_subdomain(&self) -> usize {
        self.features
    }

    /// Total number of coefficients (columns of the least-squares system).
    pub fn n_columns(&self) -> usize {
        self.features * self.partition.n_subdomains()
    }

    /// First column of subdomain `n`'s coefficient block.
    #[inline]
    pub fn column_offset(&self, n: usize) -> usize {
        n * self.features
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn magnitude(&self) -> T {
        self.magnitude
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn weight(&self, n: usize, j: usize) -> Result<[T; 2], BasisError> {
        self.check_indices(n, j)?;
        Ok(self.weights[n * self.features + j])
    }

    pub fn bias(&self, n: usize, j: usize) -> Result<T, BasisError> {
        self.check_indices(n, j)?;
        Ok(self.biases[n * self.features + j])
    }

    fn check_indices(&self, n: usize, j: usize) -> Result<(), BasisError> {
        let count = self.partition.n_subdomains();
        if n >= count {
            return Err(BasisError::SubdomainIndex { index: n, count });
        }
        if j >= self.features {
            return Err(BasisError::FeatureIndex {
                index: j,
                count: self.features,
            });
        }
        Ok(())
    }

    /// `∂^midx [σ(W·x̃ + b)]` at a physical point, derivatives taken with
    /// respect to physical coordinates.
    pub fn eval_feature(
        &self,
        n: usize,
        j: usize,
        point: [T; 2],
        midx: MultiIndex,
    ) -> Result<T, BasisError> {
        self.check_indices(n, j)?;
        let sub = self.partition.subdomain(n)?;
        let xt = sub.normalize(point);
        let w = self.weights[n * self.features + j];
        let b = self.biases[n * self.features + j];
        let u = w[0] * xt[0] + w[1] * xt[1] + b;
        let sigma = activation_derivative(self.activation, u, midx.order());
        let cx = int_pow(w[0] / sub.radius[0], midx.x());
        let cy = int_pow(w[1] / sub.radius[1], midx.y());
        Ok(sigma * (cx * cy))
    }

    /// Design block of subdomain `n` for one derivative multi-index:
    /// entry `(q, j) = ∂^midx φ_{nj}(points[q])`.
    ///
    /// Points must lie in the closed subdomain (its own collocation points,
    /// including edges).
    pub fn eval_design_block(
        &self,
        n: usize,
        points: &[[T; 2]],
        midx: MultiIndex,
    ) -> Result<Mat<T>, BasisError> {
        let mut out = Mat::zeros(points.len(), self.features);
        self.fill_design_block(n, points, midx, &mut out, 0)?;
        Ok(out)
    }

    /// Writes the design block into `out` starting at `col0`; used by the
    /// assembly to fill preallocated stacked systems.
    pub fn fill_design_block(
        &self,
        n: usize,
        points: &[[T; 2]],
        midx: MultiIndex,
        out: &mut Mat<T>,
        col0: usize,
    ) -> Result<(), BasisError> {
        self.check_indices(n, 0)?;
        let sub = self.partition.subdomain(n)?;
        let slack = T::of(1e-9);
        for (q, &p) in points.iter().enumerate() {
            if !sub.contains_closed(p, slack) {
                return Err(BasisError::PointOutsideSubdomain {
                    subdomain: n,
                    point_index: q,
                });
            }
            let xt = sub.normalize(p);
            let base = n * self.features;
            for j in 0..self.features {
                let w = self.weights[base + j];
                let u = w[0] * xt[0] + w[1] * xt[1] + self.biases[base + j];
                let sigma = activation_derivative(self.activation, u, midx.order());
                let cx = int_pow(w[0] / sub.radius[0], midx.x());
                let cy = int_pow(w[1] / sub.radius[1], midx.y());
                out[(q, col0 + j)] = sigma * (cx * cy);
            }
        }
        Ok(())
    }

    /// Design blocks for all multi-indices up to `order` in one pass,
    /// sharing the activation argument per (point, feature).
    pub fn eval_design_jets(
        &self,
        n: usize,
        points: &[[T; 2]],
        order: usize,
    ) -> Result<Vec<Mat<T>>, BasisError> {
        self.check_indices(n, 0)?;
        let sub = self.partition.subdomain(n)?;
        let slack = T::of(1e-9);
        let midxs: Vec<MultiIndex> = MultiIndex::all_up_to(order).collect();
        let mut blocks: Vec<Mat<T>> = midxs
            .iter()
            .map(|_| Mat::zeros(points.len(), self.features))
            .collect();
        let base = n * self.features;
        let inv_rx = T::one() / sub.radius[0];
        let inv_ry = T::one() / sub.radius[1];
        let mut xts = Vec::with_capacity(points.len());
        for (q, &p) in points.iter().enumerate() {
            if !sub.contains_closed(p, slack) {
                return Err(BasisError::PointOutsideSubdomain {
                    subdomain: n,
                    point_index: q,
                });
            }
            xts.push(sub.normalize(p));
        }
        // feature-major loops: writes are contiguous down each block column
        let mut sig = vec![T::zero(); (order + 1) * points.len()];
        for j in 0..self.features {
            let w = self.weights[base + j];
            let b = self.biases[base + j];
            let fx = w[0] * inv_rx;
            let fy = w[1] * inv_ry;
            let mut px = [T::one(); 5];
            let mut py = [T::one(); 5];
            for k in 1..=order.min(4) {
                px[k] = px[k - 1] * fx;
                py[k] = py[k - 1] * fy;
            }
            let mut sig_point = [T::zero(); 5];
            for (q, xt) in xts.iter().enumerate() {
                let u = w[0] * xt[0] + w[1] * xt[1] + b;
                activation_derivatives(self.activation, u, order, &mut sig_point);
                for d in 0..=order {
                    sig[d * points.len() + q] = sig_point[d];
                }
            }
            for (bi, m) in midxs.iter().enumerate() {
                let chain = px[m.x()] * py[m.y()];
                let src = &sig[m.order() * points.len()..(m.order() + 1) * points.len()];
                let col = blocks[bi].col_as_slice_mut(j);
                for (dst, s) in col.iter_mut().zip(src) {
                    *dst = *s * chain;
                }
            }
        }
        Ok(blocks)
    }
}
