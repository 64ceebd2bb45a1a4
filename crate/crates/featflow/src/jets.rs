//! Truncated derivative jets over point sets.
//!
//! A [`Jets`] value stores, for every point in a set and every field
//! component, the partial derivatives `∂^(a,b)` up to a fixed total order.
//! Runge-Kutta stages are computed in this representation: applying a
//! second-order spatial operator inside a p-stage scheme consumes jets of
//! order `2p`, so products (Leibniz rule), Laplacians, and directional
//! derivatives all operate order-by-order here instead of going through
//! symbolic or automatic differentiation.

use thiserror::Error;

use crate::scalar::Real;

/// Highest supported total derivative order (second-order operator inside a
/// two-stage scheme). The derivative tables in `basis` stop here as well.
pub const MAX_ORDER: usize = 4;

/// Number of 2-D multi-indices with total order `<= order`.
pub const fn midx_count(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// A 2-D derivative multi-index `(a, b)` with `a + b <= MAX_ORDER`.
///
/// Flat indices enumerate multi-indices by total order, then by increasing
/// `b`: `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    x: u8,
    y: u8,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JetError {
    #[error("derivative order {requested} exceeds the supported maximum {max}")]
    OrderTooHigh { requested: usize, max: usize },
    #[error("jet of order {have} cannot supply order {needed}")]
    InsufficientOrder { needed: usize, have: usize },
    #[error("jet shapes disagree: {0}")]
    ShapeMismatch(String),
}

impl MultiIndex {
    pub const VALUE: MultiIndex = MultiIndex { x: 0, y: 0 };
    pub const DX: MultiIndex = MultiIndex { x: 1, y: 0 };
    pub const DY: MultiIndex = MultiIndex { x: 0, y: 1 };
    pub const DXX: MultiIndex = MultiIndex { x: 2, y: 0 };
    pub const DYY: MultiIndex = MultiIndex { x: 0, y: 2 };

    pub fn new(x: usize, y: usize) -> Result<Self, JetError> {
        if x + y > MAX_ORDER {
            return Err(JetError::OrderTooHigh {
                requested: x + y,
                max: MAX_ORDER,
            });
        }
        Ok(MultiIndex {
            x: x as u8,
            y: y as u8,
        })
    }

    #[inline]
    pub fn x(self) -> usize {
        self.x as usize
    }

    #[inline]
    pub fn y(self) -> usize {
        self.y as usize
    }

    /// Total derivative order `a + b`.
    #[inline]
    pub fn order(self) -> usize {
        self.x as usize + self.y as usize
    }

    /// Position in the flat order-major enumeration.
    #[inline]
    pub fn flat(self) -> usize {
        let o = self.order();
        o * (o + 1) / 2 + self.y as usize
    }

    /// All multi-indices with total order `<= order`, in flat order.
    pub fn all_up_to(order: usize) -> impl Iterator<Item = MultiIndex> {
        (0..=order).flat_map(|o| {
            (0..=o).map(move |b| MultiIndex {
                x: (o - b) as u8,
                y: b as u8,
            })
        })
    }
}

const BINOM: [[f64; MAX_ORDER + 1]; MAX_ORDER + 1] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0],
];

/// Derivative jets of a multi-component field over a point set.
///
/// Storage is `[multi-index][component][point]`, so truncating to a lower
/// order is a prefix of the buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Jets<T> {
    order: usize,
    n_points: usize,
    n_comps: usize,
    data: Vec<T>,
}

impl<T: Real> Jets<T> {
    pub fn zeros(order: usize, n_points: usize, n_comps: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} above MAX_ORDER");
        Jets {
            order,
            n_points,
            n_comps,
            data: vec![T::zero(); midx_count(order) * n_points * n_comps],
        }
    }

    /// Builds jets by evaluating `f(midx, component, point index)`.
    pub fn from_fn(
        order: usize,
        n_points: usize,
        n_comps: usize,
        mut f: impl FnMut(MultiIndex, usize, usize) -> T,
    ) -> Self {
        let mut jets = Self::zeros(order, n_points, n_comps);
        for midx in MultiIndex::all_up_to(order) {
            for c in 0..n_comps {
                let s = jets.slice_mut(midx, c);
                for (p, v) in s.iter_mut().enumerate() {
                    *v = f(midx, c, p);
                }
            }
        }
        jets
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    #[inline]
    pub fn n_comps(&self) -> usize {
        self.n_comps
    }

    #[inline]
    fn base(&self, midx: MultiIndex, comp: usize) -> usize {
        debug_assert!(midx.order() <= self.order);
        debug_assert!(comp < self.n_comps);
        (midx.flat() * self.n_comps + comp) * self.n_points
    }

    #[inline]
    pub fn slice(&self, midx: MultiIndex, comp: usize) -> &[T] {
        let b = self.base(midx, comp);
        &self.data[b..b + self.n_points]
    }

    #[inline]
    pub fn slice_mut(&mut self, midx: MultiIndex, comp: usize) -> &mut [T] {
        let b = self.base(midx, comp);
        &mut self.data[b..b + self.n_points]
    }

    pub fn values(&self, comp: usize) -> &[T] {
        self.slice(MultiIndex::VALUE, comp)
    }

    /// Clones the prefix holding orders `<= order`.
    pub fn truncated(&self, order: usize) -> Result<Jets<T>, JetError> {
        if order > self.order {
            return Err(JetError::InsufficientOrder {
                needed: order,
                have: self.order,
            });
        }
        let len = midx_count(order) * self.n_points * self.n_comps;
        Ok(Jets {
            order,
            n_points: self.n_points,
            n_comps: self.n_comps,
            data: self.data[..len].to_vec(),
        })
    }

    fn check_same_shape(&self, other: &Jets<T>) -> Result<(), JetError> {
        if self.n_points != other.n_points || self.n_comps != other.n_comps {
            return Err(JetError::ShapeMismatch(format!(
                "{}x{} vs {}x{} (points x comps)",
                self.n_points, self.n_comps, other.n_points, other.n_comps
            )));
        }
        Ok(())
    }

    /// `self += factor * other`, over the orders `self` stores.
    pub fn add_scaled(&mut self, other: &Jets<T>, factor: T) -> Result<(), JetError> {
        self.check_same_shape(other)?;
        if other.order < self.order {
            return Err(JetError::InsufficientOrder {
                needed: self.order,
                have: other.order,
            });
        }
        let n = self.data.len();
        for (dst, src) in self.data.iter_mut().zip(&other.data[..n]) {
            *dst += factor * *src;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Leibniz product of component `ca` of `a` and component `cb` of `b`,
    /// written into component `co` of `self`:
    /// `(fg)^(α) = Σ_{β≤α} C(α,β) f^(β) g^(α−β)`.
    pub fn leibniz_mul_from(
        &mut self,
        a: &Jets<T>,
        ca: usize,
        b: &Jets<T>,
        cb: usize,
        co: usize,
    ) -> Result<(), JetError> {
        if a.order < self.order || b.order < self.order {
            return Err(JetError::InsufficientOrder {
                needed: self.order,
                have: a.order.min(b.order),
            });
        }
        if a.n_points != self.n_points || b.n_points != self.n_points {
            return Err(JetError::ShapeMismatch(format!(
                "points {} / {} vs {}",
                a.n_points, b.n_points, self.n_points
            )));
        }
        for midx in MultiIndex::all_up_to(self.order) {
            let (ax, ay) = (midx.x(), midx.y());
            let base = self.base(midx, co);
            self.data[base..base + self.n_points].fill(T::zero());
            for i in 0..=ax {
                for j in 0..=ay {
                    let coeff = T::of(BINOM[ax][i] * BINOM[ay][j]);
                    let fa = a.slice(MultiIndex::new(i, j).expect("within order"), ca);
                    let gb = b.slice(MultiIndex::new(ax - i, ay - j).expect("within order"), cb);
                    let out = &mut self.data[base..base + self.n_points];
                    for p in 0..out.len() {
                        out[p] += coeff * fa[p] * gb[p];
                    }
                }
            }
        }
        Ok(())
    }

    /// Laplacian `∂xx + ∂yy` applied jet-wise; `self.order` must be at least
    /// `out_order + 2`.
    pub fn laplacian(&self, comp: usize, out_order: usize) -> Result<Jets<T>, JetError> {
        if self.order < out_order + 2 {
            return Err(JetError::InsufficientOrder {
                needed: out_order + 2,
                have: self.order,
            });
        }
        let mut out = Jets::zeros(out_order, self.n_points, 1);
        for midx in MultiIndex::all_up_to(out_order) {
            let xx = self.slice(MultiIndex::new(midx.x() + 2, midx.y()).expect("bounded"), comp);
            let yy = self.slice(MultiIndex::new(midx.x(), midx.y() + 2).expect("bounded"), comp);
            let dst = out.slice_mut(midx, 0);
            for p in 0..dst.len() {
                dst[p] = xx[p] + yy[p];
            }
        }
        Ok(out)
    }

    /// Directional derivative `v · ∇` with a spatially constant vector `v`.
    pub fn directional(
        &self,
        comp: usize,
        v: [T; 2],
        out_order: usize,
    ) -> Result<Jets<T>, JetError> {
        if self.order < out_order + 1 {
            return Err(JetError::InsufficientOrder {
                needed: out_order + 1,
                have: self.order,
            });
        }
        let mut out = Jets::zeros(out_order, self.n_points, 1);
        for midx in MultiIndex::all_up_to(out_order) {
            let dx = self.slice(MultiIndex::new(midx.x() + 1, midx.y()).expect("bounded"), comp);
            let dy = self.slice(MultiIndex::new(midx.x(), midx.y() + 1).expect("bounded"), comp);
            let dst = out.slice_mut(midx, 0);
            for p in 0..dst.len() {
                dst[p] = v[0] * dx[p] + v[1] * dy[p];
            }
        }
        Ok(out)
    }

    /// Extracts one component as a single-component jet of the same order.
    pub fn component(&self, comp: usize) -> Result<Jets<T>, JetError> {
        if comp >= self.n_comps {
            return Err(JetError::ShapeMismatch(format!(
                "component {comp} of {}",
                self.n_comps
            )));
        }
        let mut out = Jets::zeros(self.order, self.n_points, 1);
        for midx in MultiIndex::all_up_to(self.order) {
            out.slice_mut(midx, 0).copy_from_slice(self.slice(midx, comp));
        }
        Ok(out)
    }

    /// Copies component `from` of `src` into component `to` of `self`.
    pub fn assign_component(
        &mut self,
        to: usize,
        src: &Jets<T>,
        from: usize,
    ) -> Result<(), JetError> {
        if src.order < self.order {
            return Err(JetError::InsufficientOrder {
                needed: self.order,
                have: src.order,
            });
        }
        if src.n_points != self.n_points {
            return Err(JetError::ShapeMismatch(format!(
                "points {} vs {}",
                src.n_points, self.n_points
            )));
        }
        for midx in MultiIndex::all_up_to(self.order) {
            let b = self.base(midx, to);
            let n = self.n_points;
            self.data[b..b + n].copy_from_slice(src.slice(midx, from));
        }
        Ok(())
    }

    pub fn iter_all(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }
}
