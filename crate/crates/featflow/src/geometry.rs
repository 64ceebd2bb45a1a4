//! Domain partition, partition-of-unity weights, and point sets.
//!
//! The rectangular domain is tiled by `nx × ny` equal subdomains. Each
//! subdomain carries a tensor grid of collocation points (edges included,
//! so neighboring subdomains share interface points bitwise), and the whole
//! domain carries a uniform test grid used for error norms and global
//! quadrature.

use std::sync::Arc;

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("partition counts must be at least 1 (got {nx} x {ny})")]
    NonPositiveCounts { nx: usize, ny: usize },
    #[error("domain box is degenerate: upper must exceed lower componentwise")]
    DegenerateDomain,
    #[error("collocation grid needs at least 2 points per direction (got {qx} x {qy})")]
    CollocationTooCoarse { qx: usize, qy: usize },
    #[error("test grid needs at least 2 points per direction (got {qx} x {qy})")]
    TestGridTooCoarse { qx: usize, qy: usize },
    #[error("subdomain radius is zero")]
    ZeroRadius,
    #[error("subdomain index {index} out of range ({count} subdomains)")]
    SubdomainIndex { index: usize, count: usize },
}

/// Axis-aligned rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainBox<T> {
    lower: [T; 2],
    upper: [T; 2],
}

impl<T: Real> DomainBox<T> {
    pub fn new(lower: [T; 2], upper: [T; 2]) -> Result<Self, GeometryError> {
        if !(upper[0] > lower[0] && upper[1] > lower[1]) {
            return Err(GeometryError::DegenerateDomain);
        }
        Ok(DomainBox { lower, upper })
    }

    /// The square `(0, side)^2`.
    pub fn square(side: T) -> Result<Self, GeometryError> {
        Self::new([T::zero(); 2], [side; 2])
    }

    pub fn lower(&self) -> [T; 2] {
        self.lower
    }

    pub fn upper(&self) -> [T; 2] {
        self.upper
    }

    pub fn extent(&self) -> [T; 2] {
        [self.upper[0] - self.lower[0], self.upper[1] - self.lower[1]]
    }

    pub fn area(&self) -> T {
        let e = self.extent();
        e[0] * e[1]
    }

    /// Closed-domain membership.
    pub fn contains(&self, p: [T; 2]) -> bool {
        p[0] >= self.lower[0] && p[0] <= self.upper[0] && p[1] >= self.lower[1] && p[1] <= self.upper[1]
    }
}

/// Partition-of-unity weight family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PouKind {
    /// Characteristic function of the owning subdomain; continuity between
    /// subdomains is enforced through explicit constraint rows instead.
    Indicator,
    /// Sine-ramp blend overlapping a quarter subdomain width on each side.
    SinBlend,
}

/// One tile of the partition: center and half-widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subdomain<T> {
    pub center: [T; 2],
    pub radius: [T; 2],
}

impl<T: Real> Subdomain<T> {
    /// Affine map onto `[-1, 1]^2`: `x̃ = (x − center) / radius`.
    #[inline]
    pub fn normalize(&self, p: [T; 2]) -> [T; 2] {
        [
            (p[0] - self.center[0]) / self.radius[0],
            (p[1] - self.center[1]) / self.radius[1],
        ]
    }

    /// Whether `p` lies in the closed tile, with a small relative slack for
    /// points constructed on the edges.
    pub fn contains_closed(&self, p: [T; 2], rel_slack: T) -> bool {
        let n = self.normalize(p);
        let lim = T::one() + rel_slack;
        n[0].abs() <= lim && n[1].abs() <= lim
    }
}

/// Checked form of the normalizing map; rejects zero radii.
pub fn normalize_point<T: Real>(p: [T; 2], sub: &Subdomain<T>) -> Result<[T; 2], GeometryError> {
    if sub.radius[0] == T::zero() || sub.radius[1] == T::zero() {
        return Err(GeometryError::ZeroRadius);
    }
    Ok(sub.normalize(p))
}

/// Uniform tiling of a rectangular domain into `nx × ny` subdomains.
///
/// Subdomain `n` sits at grid position `(ix, iy) = (n / ny, n % ny)`, i.e.
/// the index runs fastest in `y`. Ownership of a point follows the half-open
/// rule: tiles own `[left, right) × [bottom, top)` except along the global
/// upper/right boundary, where the closed edge belongs to the last tile.
#[derive(Debug, Clone)]
pub struct Partition<T> {
    domain: DomainBox<T>,
    nx: usize,
    ny: usize,
    subdomains: Vec<Subdomain<T>>,
    pou: PouKind,
}

pub fn build_partition<T: Real>(
    domain: DomainBox<T>,
    nx: usize,
    ny: usize,
    pou: PouKind,
) -> Result<Arc<Partition<T>>, GeometryError> {
    if nx < 1 || ny < 1 {
        return Err(GeometryError::NonPositiveCounts { nx, ny });
    }
    let ext = domain.extent();
    let hx = ext[0] / T::of(nx as f64);
    let hy = ext[1] / T::of(ny as f64);
    if hx <= T::zero() || hy <= T::zero() {
        return Err(GeometryError::DegenerateDomain);
    }
    let half = T::of(0.5);
    let mut subdomains = Vec::with_capacity(nx * ny);
    for ix in 0..nx {
        for iy in 0..ny {
            let center = [
                domain.lower[0] + (T::of(ix as f64) + half) * hx,
                domain.lower[1] + (T::of(iy as f64) + half) * hy,
            ];
            subdomains.push(Subdomain {
                center,
                radius: [half * hx, half * hy],
            });
        }
    }
    Ok(Arc::new(Partition {
        domain,
        nx,
        ny,
        subdomains,
        pou,
    }))
}

impl<T: Real> Partition<T> {
    pub fn domain(&self) -> &DomainBox<T> {
        &self.domain
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn pou(&self) -> PouKind {
        self.pou
    }

    pub fn subdomain(&self, n: usize) -> Result<&Subdomain<T>, GeometryError> {
        self.subdomains.get(n).ok_or(GeometryError::SubdomainIndex {
            index: n,
            count: self.subdomains.len(),
        })
    }

    pub fn subdomains(&self) -> &[Subdomain<T>] {
        &self.subdomains
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    #[inline]
    pub fn grid_pos(&self, n: usize) -> (usize, usize) {
        (n / self.ny, n % self.ny)
    }

    /// Normalized coordinates of `p` with respect to subdomain `n`.
    pub fn normalize(&self, n: usize, p: [T; 2]) -> [T; 2] {
        self.subdomains[n].normalize(p)
    }

    /// Owner under the half-open rule, or `None` outside the closed domain.
    pub fn owner_of(&self, p: [T; 2]) -> Option<usize> {
        if !self.domain.contains(p) {
            return None;
        }
        let ext = self.domain.extent();
        let fx = (p[0] - self.domain.lower[0]) / ext[0] * T::of(self.nx as f64);
        let fy = (p[1] - self.domain.lower[1]) / ext[1] * T::of(self.ny as f64);
        let ix = (fx.floor().to_f64() as usize).min(self.nx - 1);
        let iy = (fy.floor().to_f64() as usize).min(self.ny - 1);
        Some(self.index(ix, iy))
    }

    /// Partition-of-unity weight of subdomain `n` at `p`.
    pub fn pou_value(&self, n: usize, p: [T; 2]) -> Result<T, GeometryError> {
        if n >= self.subdomains.len() {
            return Err(GeometryError::SubdomainIndex {
                index: n,
                count: self.subdomains.len(),
            });
        }
        match self.pou {
            PouKind::Indicator => Ok(if self.owner_of(p) == Some(n) {
                T::one()
            } else {
                T::zero()
            }),
            PouKind::SinBlend => {
                let x = self.subdomains[n].normalize(p);
                Ok(sin_blend_1d(x[0]) * sin_blend_1d(x[1]))
            }
        }
    }
}

/// One-dimensional sine blend: ramps up over `[-5/4, -3/4]`, plateaus at 1
/// over `[-3/4, 3/4]`, ramps down over `[3/4, 5/4]`.
fn sin_blend_1d<T: Real>(x: T) -> T {
    let q = T::of(0.75);
    let lim = T::of(1.25);
    let half = T::of(0.5);
    let two_pi = T::of(2.0) * T::PI();
    if x < -lim || x > lim {
        T::zero()
    } else if x < -q {
        half * (T::one() + (two_pi * x).sin())
    } else if x <= q {
        T::one()
    } else {
        half * (T::one() - (two_pi * x).sin())
    }
}

/// Sides of a subdomain or of the domain boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Role tags of a collocation point within its subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PointRole(u8);

impl PointRole {
    const DOM: [u8; 4] = [1, 2, 4, 8];
    const IFACE: [u8; 4] = [16, 32, 64, 128];

    fn side_bit(side: Side) -> usize {
        match side {
            Side::Left => 0,
            Side::Right => 1,
            Side::Bottom => 2,
            Side::Top => 3,
        }
    }

    fn set_domain(&mut self, side: Side) {
        self.0 |= Self::DOM[Self::side_bit(side)];
    }

    fn set_interface(&mut self, side: Side) {
        self.0 |= Self::IFACE[Self::side_bit(side)];
    }

    pub fn is_interior(self) -> bool {
        self.0 == 0
    }

    pub fn on_domain_boundary(self, side: Side) -> bool {
        self.0 & Self::DOM[Self::side_bit(side)] != 0
    }

    pub fn on_any_domain_boundary(self) -> bool {
        self.0 & 0x0f != 0
    }

    pub fn on_interface(self, side: Side) -> bool {
        self.0 & Self::IFACE[Self::side_bit(side)] != 0
    }

    pub fn on_any_interface(self) -> bool {
        self.0 & 0xf0 != 0
    }
}

/// A boundary collocation point in canonical boundary-block order.
#[derive(Debug, Clone, Copy)]
pub struct BoundarySample {
    pub subdomain: usize,
    /// Index into the global collocation point list.
    pub point: usize,
    /// Which domain edge the point sits on (the block it was emitted for).
    pub side: Side,
}

/// Tensor-product collocation grids over all subdomains, with role tags and
/// trapezoidal quadrature weights.
#[derive(Debug, Clone)]
pub struct CollocationSet<T> {
    nx: usize,
    ny: usize,
    qx: usize,
    qy: usize,
    points: Vec<[T; 2]>,
    weights: Vec<T>,
    roles: Vec<PointRole>,
}

pub fn build_collocation<T: Real>(
    partition: &Partition<T>,
    qx: usize,
    qy: usize,
) -> Result<CollocationSet<T>, GeometryError> {
    if qx < 2 || qy < 2 {
        return Err(GeometryError::CollocationTooCoarse { qx, qy });
    }
    let (nx, ny) = (partition.nx(), partition.ny());
    let domain = partition.domain();
    let lower = domain.lower();
    let ext = domain.extent();
    // Coordinates come from global grid-line indices so that an interface
    // point is the same bit pattern in both adjacent subdomains.
    let gx = T::of((nx * (qx - 1)) as f64);
    let gy = T::of((ny * (qy - 1)) as f64);
    let coord_x = |ix: usize, px: usize| lower[0] + T::of((ix * (qx - 1) + px) as f64) * ext[0] / gx;
    let coord_y = |iy: usize, py: usize| lower[1] + T::of((iy * (qy - 1) + py) as f64) * ext[1] / gy;

    let hx_sub = ext[0] / T::of(nx as f64);
    let hy_sub = ext[1] / T::of(ny as f64);
    let step_x = hx_sub / T::of((qx - 1) as f64);
    let step_y = hy_sub / T::of((qy - 1) as f64);
    let trap = |i: usize, q: usize, step: T| {
        if i == 0 || i == q - 1 {
            T::of(0.5) * step
        } else {
            step
        }
    };

    let n_sub = partition.n_subdomains();
    let q = qx * qy;
    let mut points = Vec::with_capacity(n_sub * q);
    let mut weights = Vec::with_capacity(n_sub * q);
    let mut roles = Vec::with_capacity(n_sub * q);
    for n in 0..n_sub {
        let (ix, iy) = partition.grid_pos(n);
        for py in 0..qy {
            for px in 0..qx {
                points.push([coord_x(ix, px), coord_y(iy, py)]);
                weights.push(trap(px, qx, step_x) * trap(py, qy, step_y));
                let mut role = PointRole::default();
                if px == 0 {
                    if ix == 0 {
                        role.set_domain(Side::Left);
                    } else {
                        role.set_interface(Side::Left);
                    }
                }
                if px == qx - 1 {
                    if ix == nx - 1 {
                        role.set_domain(Side::Right);
                    } else {
                        role.set_interface(Side::Right);
                    }
                }
                if py == 0 {
                    if iy == 0 {
                        role.set_domain(Side::Bottom);
                    } else {
                        role.set_interface(Side::Bottom);
                    }
                }
                if py == qy - 1 {
                    if iy == ny - 1 {
                        role.set_domain(Side::Top);
                    } else {
                        role.set_interface(Side::Top);
                    }
                }
                roles.push(role);
            }
        }
    }
    Ok(CollocationSet {
        nx,
        ny,
        qx,
        qy,
        points,
        weights,
        roles,
    })
}

impl<T: Real> CollocationSet<T> {
    pub fn qx(&self) -> usize {
        self.qx
    }

    pub fn qy(&self) -> usize {
        self.qy
    }

    /// Points per subdomain.
    pub fn points_per_subdomain(&self) -> usize {
        self.qx * self.qy
    }

    pub fn n_subdomains(&self) -> usize {
        self.nx * self.ny
    }

    pub fn total_points(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[[T; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn role(&self, global_index: usize) -> PointRole {
        self.roles[global_index]
    }

    /// Global index of the `(px, py)` grid point of subdomain `n`.
    #[inline]
    pub fn point_index(&self, n: usize, px: usize, py: usize) -> usize {
        n * self.points_per_subdomain() + py * self.qx + px
    }

    /// Global indices of subdomain `n`'s points, grid order (`py` outer).
    pub fn subdomain_range(&self, n: usize) -> std::ops::Range<usize> {
        let q = self.points_per_subdomain();
        n * q..(n + 1) * q
    }

    pub fn subdomain_points(&self, n: usize) -> &[[T; 2]] {
        &self.points[self.subdomain_range(n)]
    }

    /// Global indices along one edge of subdomain `n`, in increasing grid order.
    pub fn edge_indices(&self, n: usize, side: Side) -> Vec<usize> {
        match side {
            Side::Left => (0..self.qy).map(|py| self.point_index(n, 0, py)).collect(),
            Side::Right => (0..self.qy)
                .map(|py| self.point_index(n, self.qx - 1, py))
                .collect(),
            Side::Bottom => (0..self.qx).map(|px| self.point_index(n, px, 0)).collect(),
            Side::Top => (0..self.qx)
                .map(|px| self.point_index(n, px, self.qy - 1))
                .collect(),
        }
    }

    /// Neighbor subdomain across an interface side, if any.
    pub fn interface_neighbor(&self, n: usize, side: Side) -> Option<usize> {
        let (ix, iy) = (n / self.ny, n % self.ny);
        match side {
            Side::Left if ix > 0 => Some(n - self.ny),
            Side::Right if ix + 1 < self.nx => Some(n + self.ny),
            Side::Bottom if iy > 0 => Some(n - 1),
            Side::Top if iy + 1 < self.ny => Some(n + 1),
            _ => None,
        }
    }

    /// Domain-boundary points in canonical boundary-block order: all
    /// x-perpendicular edges first (left-edge subdomains bottom-to-top, then
    /// right-edge), then y-perpendicular edges (per x-column: bottom edge,
    /// then top edge).
    pub fn boundary_samples(&self) -> Vec<BoundarySample> {
        let mut out = Vec::new();
        for iy in 0..self.ny {
            let n = iy; // ix = 0
            for p in self.edge_indices(n, Side::Left) {
                out.push(BoundarySample {
                    subdomain: n,
                    point: p,
                    side: Side::Left,
                });
            }
        }
        for iy in 0..self.ny {
            let n = (self.nx - 1) * self.ny + iy;
            for p in self.edge_indices(n, Side::Right) {
                out.push(BoundarySample {
                    subdomain: n,
                    point: p,
                    side: Side::Right,
                });
            }
        }
        for ix in 0..self.nx {
            let n_bottom = ix * self.ny;
            for p in self.edge_indices(n_bottom, Side::Bottom) {
                out.push(BoundarySample {
                    subdomain: n_bottom,
                    point: p,
                    side: Side::Bottom,
                });
            }
            let n_top = ix * self.ny + self.ny - 1;
            for p in self.edge_indices(n_top, Side::Top) {
                out.push(BoundarySample {
                    subdomain: n_top,
                    point: p,
                    side: Side::Top,
                });
            }
        }
        out
    }

    /// Interfaces perpendicular to `x`: `(left subdomain, right subdomain)`
    /// in owner order (owned by the lower-index, i.e. left, subdomain).
    pub fn x_interfaces(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for ix in 0..self.nx.saturating_sub(1) {
            for iy in 0..self.ny {
                let n = ix * self.ny + iy;
                out.push((n, n + self.ny));
            }
        }
        out
    }

    /// Interfaces perpendicular to `y`: `(bottom subdomain, top subdomain)`.
    pub fn y_interfaces(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for ix in 0..self.nx {
            for iy in 0..self.ny.saturating_sub(1) {
                let n = ix * self.ny + iy;
                out.push((n, n + 1));
            }
        }
        out
    }
}

/// Node placement of a [`TestGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLayout {
    /// Endpoints included (`x_i = lo + i·L/(q−1)`); used for error norms.
    Vertex,
    /// Cell centers (`x_i = lo + (i+½)·L/q`); the exact midpoint rule, and
    /// the right choice for integrals on periodic domains where a vertex
    /// grid would double-count the seam.
    Midpoint,
}

/// Uniform grid over the whole domain with equal quadrature weights
/// `area / (qx·qy)`; used for error norms and global integrals.
#[derive(Debug, Clone)]
pub struct TestGrid<T> {
    domain: DomainBox<T>,
    layout: GridLayout,
    qx: usize,
    qy: usize,
    points: Vec<[T; 2]>,
    weight: T,
}

fn grid_with_layout<T: Real>(
    domain: DomainBox<T>,
    qx: usize,
    qy: usize,
    layout: GridLayout,
) -> Result<Arc<TestGrid<T>>, GeometryError> {
    if qx < 2 || qy < 2 {
        return Err(GeometryError::TestGridTooCoarse { qx, qy });
    }
    let lower = domain.lower();
    let ext = domain.extent();
    let half = T::of(0.5);
    let coord = |i: usize, q: usize, axis: usize| match layout {
        GridLayout::Vertex => lower[axis] + T::of(i as f64) * ext[axis] / T::of((q - 1) as f64),
        GridLayout::Midpoint => {
            lower[axis] + (T::of(i as f64) + half) * ext[axis] / T::of(q as f64)
        }
    };
    let mut points = Vec::with_capacity(qx * qy);
    for iy in 0..qy {
        for ix in 0..qx {
            points.push([coord(ix, qx, 0), coord(iy, qy, 1)]);
        }
    }
    let weight = domain.area() / T::of((qx * qy) as f64);
    Ok(Arc::new(TestGrid {
        domain,
        layout,
        qx,
        qy,
        points,
        weight,
    }))
}

/// Vertex-layout test grid (endpoints included).
pub fn build_test_grid<T: Real>(
    domain: DomainBox<T>,
    qx: usize,
    qy: usize,
) -> Result<Arc<TestGrid<T>>, GeometryError> {
    grid_with_layout(domain, qx, qy, GridLayout::Vertex)
}

/// Midpoint-layout quadrature grid (cell centers).
pub fn build_midpoint_grid<T: Real>(
    domain: DomainBox<T>,
    qx: usize,
    qy: usize,
) -> Result<Arc<TestGrid<T>>, GeometryError> {
    grid_with_layout(domain, qx, qy, GridLayout::Midpoint)
}

impl<T: Real> TestGrid<T> {
    pub fn domain(&self) -> &DomainBox<T> {
        &self.domain
    }

    pub fn layout(&self) -> GridLayout {
        self.layout
    }

    pub fn qx(&self) -> usize {
        self.qx
    }

    pub fn qy(&self) -> usize {
        self.qy
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[T; 2]] {
        &self.points
    }

    /// Uniform quadrature weight per point.
    pub fn weight(&self) -> T {
        self.weight
    }

    /// Quadrature of sampled values: `Σ w·f`.
    pub fn integrate(&self, values: &[T]) -> T {
        debug_assert_eq!(values.len(), self.points.len());
        let mut acc = T::zero();
        for &v in values {
            acc += v;
        }
        acc * self.weight
    }
}
