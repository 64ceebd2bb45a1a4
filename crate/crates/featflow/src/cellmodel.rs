//! Multiphase cell model: free-energy variations, force balance, and the
//! tissue observables.
//!
//! Each cell is a phase field `φ_i` (1 inside, 0 outside, interface width
//! `λ_w`). The dynamics are `∂_t φ_i = −v_i·∇φ_i − δF/δφ_i` with a free
//! energy made of a Cahn-Hilliard interface term, a soft area constraint
//! toward `πR²`, and a pairwise overlap penalty. The cell velocity comes
//! from the force balance `ξ v_i = F_i^int`, where the interface force is
//! the tissue stress `σ = −P·I − ζ·Q` integrated against `∇φ_i`; `P` sums
//! the free-energy variations over all cells and `Q` weights each cell's
//! deformation tensor by its phase field.

use rayon::prelude::*;

use crate::assembly::FittedField;
use crate::basis::ParamStream;
use crate::geometry::{DomainBox, TestGrid};
use crate::integrator::{ModelError, RhsModel};
use crate::jets::{Jets, MultiIndex};
use crate::scalar::Real;

/// Physical parameters of the cell ensemble.
#[derive(Debug, Clone, Copy)]
pub struct CellParams<T> {
    /// Shape-relaxation coefficient of the interface energy.
    pub shape_relax: T,
    /// Interface width.
    pub interface_width: T,
    /// Area stiffness.
    pub area_stiffness: T,
    /// Overlap repulsion strength.
    pub repulsion: T,
    /// Target cell radius (the soft area constraint pulls toward `πR²`).
    pub target_radius: T,
    /// Substrate friction.
    pub friction: T,
    /// Activity converting the nematic tensor into active stress.
    pub activity: T,
    /// Number of cells.
    pub n_cells: usize,
}

impl<T: Real> CellParams<T> {
    pub fn validated(self) -> Result<Self, ModelError> {
        if !(self.interface_width > T::zero())
            || !(self.target_radius > T::zero())
            || !(self.friction > T::zero())
        {
            return Err(ModelError::Invalid(
                "interface width, target radius, and friction must be positive".to_string(),
            ));
        }
        if self.n_cells == 0 {
            return Err(ModelError::Invalid("need at least one cell".to_string()));
        }
        Ok(self)
    }

    /// Target area `πR²`.
    pub fn target_area(&self) -> T {
        T::PI() * self.target_radius * self.target_radius
    }
}

/// Per-cell global quantities of one stage state.
#[derive(Debug, Clone)]
pub struct CellGlobals<T> {
    /// `A_i = ∫ φ_i²`.
    pub areas: Vec<T>,
    /// Deformation tensor entries (traceless symmetric, two scalars each).
    pub s11: Vec<T>,
    pub s12: Vec<T>,
    /// Interface force on each cell.
    pub interface_force: Vec<[T; 2]>,
    /// `v_i = F_i^int / ξ`.
    pub velocity: Vec<[T; 2]>,
}

/// Pointwise tissue fields on the quadrature grid.
#[derive(Debug, Clone)]
pub struct TissueFields<T> {
    pub pressure: Vec<T>,
    pub q11: Vec<T>,
    pub q12: Vec<T>,
}

/// Interface (Cahn-Hilliard) variation:
/// `(8γ/λ)·φ(1−φ)(1−2φ) − 2γλ·Δφ`, as jets of order `out_order`.
pub fn variation_ch<T: Real>(
    state: &Jets<T>,
    comp: usize,
    params: &CellParams<T>,
    out_order: usize,
) -> Result<Jets<T>, ModelError> {
    let np = state.n_points();
    let mut sq = Jets::zeros(out_order, np, 1);
    sq.leibniz_mul_from(state, comp, state, comp, 0)?;
    let mut cube = Jets::zeros(out_order, np, 1);
    cube.leibniz_mul_from(&sq, 0, state, comp, 0)?;
    // φ − 3φ² + 2φ³
    let mut poly = state.truncated(out_order)?.component(comp)?;
    poly.add_scaled(&sq, T::of(-3.0))?;
    poly.add_scaled(&cube, T::of(2.0))?;
    let c_poly = T::of(8.0) * params.shape_relax / params.interface_width;
    poly.scale(c_poly);
    let mut lap = state.laplacian(comp, out_order)?;
    lap.scale(T::of(-2.0) * params.shape_relax * params.interface_width);
    poly.add_scaled(&lap, T::one())?;
    Ok(poly)
}

/// Area variation: `−(4μ/πR²)·φ·(1 − A/πR²)` with the stage-constant area
/// integral `A`.
pub fn variation_area<T: Real>(
    state: &Jets<T>,
    comp: usize,
    area: T,
    params: &CellParams<T>,
    out_order: usize,
) -> Result<Jets<T>, ModelError> {
    let target = params.target_area();
    let factor = T::of(-4.0) * params.area_stiffness / target * (T::one() - area / target);
    let mut out = state.truncated(out_order)?.component(comp)?;
    out.scale(factor);
    Ok(out)
}

/// Repulsion variation: `(2κ/λ)·(Σ_{k≠i} φ_k²)·φ_i`.
pub fn variation_rep<T: Real>(
    state: &Jets<T>,
    comp: usize,
    params: &CellParams<T>,
    out_order: usize,
) -> Result<Jets<T>, ModelError> {
    let total = sum_of_squares(state, out_order)?;
    variation_rep_with_total(state, comp, &total, params, out_order)
}

/// `Σ_k φ_k²` as jets; shared across cells inside one right-hand-side
/// evaluation.
pub fn sum_of_squares<T: Real>(state: &Jets<T>, out_order: usize) -> Result<Jets<T>, ModelError> {
    let np = state.n_points();
    let mut total = Jets::zeros(out_order, np, 1);
    let mut sq = Jets::zeros(out_order, np, 1);
    for k in 0..state.n_comps() {
        sq.leibniz_mul_from(state, k, state, k, 0)?;
        total.add_scaled(&sq, T::one())?;
    }
    Ok(total)
}

fn variation_rep_with_total<T: Real>(
    state: &Jets<T>,
    comp: usize,
    total: &Jets<T>,
    params: &CellParams<T>,
    out_order: usize,
) -> Result<Jets<T>, ModelError> {
    let np = state.n_points();
    // Σ_{k≠i} φ_k² = total − φ_i²
    let mut other = total.truncated(out_order)?;
    let mut sq = Jets::zeros(out_order, np, 1);
    sq.leibniz_mul_from(state, comp, state, comp, 0)?;
    other.add_scaled(&sq, -T::one())?;
    let mut out = Jets::zeros(out_order, np, 1);
    out.leibniz_mul_from(&other, 0, state, comp, 0)?;
    out.scale(T::of(2.0) * params.repulsion / params.interface_width);
    Ok(out)
}

fn check_finite<T: Real>(values: &[T], cell: usize) -> Result<(), ModelError> {
    for (point, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(ModelError::NonFiniteIntegrand { cell, point });
        }
    }
    Ok(())
}

/// Pointwise pressure and tissue nematic tensor of a stage state.
///
/// The pressure sums `δF_rep − δF_CH − δF_area` over all cells; the nematic
/// tensor is `Q(x) = Σ_i φ_i(x) S_i` built from the per-cell deformation
/// tensors.
pub fn tissue_fields<T: Real>(
    state: &Jets<T>,
    s11: &[T],
    s12: &[T],
    params: &CellParams<T>,
    areas: &[T],
) -> Result<TissueFields<T>, ModelError> {
    let np = state.n_points();
    let d = state.n_comps();
    let mut pressure = vec![T::zero(); np];
    let total = sum_of_squares(state, 0)?;
    for i in 0..d {
        let rep = variation_rep_with_total(state, i, &total, params, 0)?;
        let ch = variation_ch(state, i, params, 0)?;
        let area = variation_area(state, i, areas[i], params, 0)?;
        let (r, c, a) = (rep.values(0), ch.values(0), area.values(0));
        for p in 0..np {
            pressure[p] += r[p] - c[p] - a[p];
        }
    }
    let mut q11 = vec![T::zero(); np];
    let mut q12 = vec![T::zero(); np];
    for i in 0..d {
        let phi = state.values(i);
        for p in 0..np {
            q11[p] += phi[p] * s11[i];
            q12[p] += phi[p] * s12[i];
        }
    }
    Ok(TissueFields { pressure, q11, q12 })
}

/// Integrates the per-cell areas, deformation tensors, interface forces,
/// and velocities of a stage state sampled (with derivatives up to order 2)
/// on the quadrature grid.
pub fn cell_globals<T: Real>(
    state: &Jets<T>,
    grid: &TestGrid<T>,
    params: &CellParams<T>,
) -> Result<CellGlobals<T>, ModelError> {
    let d = state.n_comps();
    let np = state.n_points();
    let w = grid.weight();
    let half = T::of(0.5);

    let mut areas = Vec::with_capacity(d);
    let mut s11 = Vec::with_capacity(d);
    let mut s12 = Vec::with_capacity(d);
    for i in 0..d {
        let phi = state.values(i);
        let dx = state.slice(MultiIndex::DX, i);
        let dy = state.slice(MultiIndex::DY, i);
        check_finite(phi, i)?;
        check_finite(dx, i)?;
        check_finite(dy, i)?;
        let mut a = T::zero();
        let mut t11 = T::zero();
        let mut t12 = T::zero();
        for p in 0..np {
            a += phi[p] * phi[p];
            t11 += half * (dy[p] * dy[p] - dx[p] * dx[p]);
            t12 += -(dx[p] * dy[p]);
        }
        areas.push(a * w);
        s11.push(t11 * w);
        s12.push(t12 * w);
    }

    let tissue = tissue_fields(state, &s11, &s12, params, &areas)?;
    check_finite(&tissue.pressure, 0)?;

    // σ = −P·I − ζ·Q, applied to ∇φ_i and integrated:
    // F_i^int = −∫ σ·∇φ_i.
    let zeta = params.activity;
    let mut interface_force = Vec::with_capacity(d);
    let mut velocity = Vec::with_capacity(d);
    for i in 0..d {
        let dx = state.slice(MultiIndex::DX, i);
        let dy = state.slice(MultiIndex::DY, i);
        let mut fx = T::zero();
        let mut fy = T::zero();
        for p in 0..np {
            let s11p = -tissue.pressure[p] - zeta * tissue.q11[p];
            let s22p = -tissue.pressure[p] + zeta * tissue.q11[p];
            let s12p = -zeta * tissue.q12[p];
            fx += s11p * dx[p] + s12p * dy[p];
            fy += s12p * dx[p] + s22p * dy[p];
        }
        let f = [-fx * w, -fy * w];
        interface_force.push(f);
        velocity.push([f[0] / params.friction, f[1] / params.friction]);
    }
    Ok(CellGlobals {
        areas,
        s11,
        s12,
        interface_force,
        velocity,
    })
}

/// The cell dynamics as a right-hand-side model of spatial order 2.
#[derive(Debug, Clone)]
pub struct CellModel<T> {
    params: CellParams<T>,
}

impl<T: Real> CellModel<T> {
    pub fn new(params: CellParams<T>) -> Result<Self, ModelError> {
        Ok(CellModel {
            params: params.validated()?,
        })
    }

    pub fn params(&self) -> &CellParams<T> {
        &self.params
    }
}

impl<T: Real> RhsModel<T> for CellModel<T> {
    type Globals = CellGlobals<T>;

    fn spatial_order(&self) -> usize {
        2
    }

    fn n_components(&self) -> usize {
        self.params.n_cells
    }

    fn globals(
        &self,
        stage: &Jets<T>,
        quad: &TestGrid<T>,
        _t: T,
    ) -> Result<CellGlobals<T>, ModelError> {
        cell_globals(stage, quad, &self.params)
    }

    fn rhs(
        &self,
        stage: &Jets<T>,
        _points: &[[T; 2]],
        _t: T,
        globals: &CellGlobals<T>,
        out_order: usize,
    ) -> Result<Jets<T>, ModelError> {
        let d = self.params.n_cells;
        let np = stage.n_points();
        let total = sum_of_squares(stage, out_order)?;
        let per_cell: Vec<Jets<T>> = (0..d)
            .into_par_iter()
            .map(|i| -> Result<Jets<T>, ModelError> {
                // −v_i·∇φ_i − (δF_CH + δF_area + δF_rep)
                let mut out = stage.directional(i, globals.velocity[i], out_order)?;
                out.scale(-T::one());
                let ch = variation_ch(stage, i, &self.params, out_order)?;
                out.add_scaled(&ch, -T::one())?;
                let area =
                    variation_area(stage, i, globals.areas[i], &self.params, out_order)?;
                out.add_scaled(&area, -T::one())?;
                let rep = variation_rep_with_total(stage, i, &total, &self.params, out_order)?;
                out.add_scaled(&rep, -T::one())?;
                Ok(out)
            })
            .collect::<Result<_, _>>()?;
        let mut out = Jets::zeros(out_order, np, d);
        for (i, jet) in per_cell.iter().enumerate() {
            out.assign_component(i, jet, 0)?;
        }
        Ok(out)
    }
}

/// Time-point observables of the cell ensemble.
#[derive(Debug, Clone, Copy)]
pub struct ObservableRecord<T> {
    /// Root-mean-square tissue velocity `(⟨v²⟩)^{1/2}`.
    pub v_rms: T,
    /// Nematic order `(⟨Q₁₁² + Q₁₂²⟩)^{1/2}`.
    pub s_rms: T,
    /// Mean speed `⟨|v|⟩`.
    pub mean_v: T,
    /// `(⟨v_x⟩² + ⟨v_y⟩²)^{1/2}`.
    pub mean_component_speed: T,
    /// `(⟨Q₁₁⟩² + ⟨Q₁₂⟩²)^{1/2}`.
    pub mean_component_order: T,
    /// Mean director angle `⟨atan2(Q₁₂, Q₁₁)⟩`.
    pub mean_angle: T,
}

/// Mean director angle of pointwise nematic components.
pub fn mean_director_angle<T: Real>(q11: &[T], q12: &[T]) -> T {
    let mut acc = T::zero();
    for (a, b) in q11.iter().zip(q12) {
        acc += b.atan2(*a);
    }
    acc / T::of(q11.len() as f64)
}

/// Computes the tissue observables of a fitted ensemble on the quadrature
/// grid: the tissue velocity is `v(x) = Σ_i φ_i(x) v_i` with the per-cell
/// velocities from the force balance.
pub fn observables<T: Real>(
    field: &FittedField<T>,
    grid: &TestGrid<T>,
    params: &CellParams<T>,
) -> Result<ObservableRecord<T>, ModelError> {
    let state = field
        .eval_jets(grid.points(), 2)
        .map_err(|e| ModelError::Invalid(e.to_string()))?;
    let globals = cell_globals(&state, grid, params)?;
    let tissue = tissue_fields(&state, &globals.s11, &globals.s12, params, &globals.areas)?;
    let np = grid.len();
    let d = state.n_comps();
    let inv_n = T::one() / T::of(np as f64);

    let mut sum_v2 = T::zero();
    let mut sum_speed = T::zero();
    let mut sum_vx = T::zero();
    let mut sum_vy = T::zero();
    for p in 0..np {
        let mut vx = T::zero();
        let mut vy = T::zero();
        for i in 0..d {
            let phi = state.values(i)[p];
            vx += phi * globals.velocity[i][0];
            vy += phi * globals.velocity[i][1];
        }
        sum_v2 += vx * vx + vy * vy;
        sum_speed += (vx * vx + vy * vy).sqrt();
        sum_vx += vx;
        sum_vy += vy;
    }
    let mut sum_q2 = T::zero();
    let mut sum_q11 = T::zero();
    let mut sum_q12 = T::zero();
    for p in 0..np {
        sum_q2 += tissue.q11[p] * tissue.q11[p] + tissue.q12[p] * tissue.q12[p];
        sum_q11 += tissue.q11[p];
        sum_q12 += tissue.q12[p];
    }
    let mean = |x: T| x * inv_n;
    Ok(ObservableRecord {
        v_rms: mean(sum_v2).sqrt(),
        s_rms: mean(sum_q2).sqrt(),
        mean_v: mean(sum_speed),
        mean_component_speed: (mean(sum_vx) * mean(sum_vx) + mean(sum_vy) * mean(sum_vy)).sqrt(),
        mean_component_order: (mean(sum_q11) * mean(sum_q11) + mean(sum_q12) * mean(sum_q12)).sqrt(),
        mean_angle: mean_director_angle(&tissue.q11, &tissue.q12),
    })
}

/// Distance respecting periodic wrapping when requested.
fn cell_distance<T: Real>(p: [T; 2], center: [T; 2], domain: Option<&DomainBox<T>>) -> T {
    let mut dx = p[0] - center[0];
    let mut dy = p[1] - center[1];
    if let Some(dom) = domain {
        let ext = dom.extent();
        let half_x = ext[0] * T::of(0.5);
        let half_y = ext[1] * T::of(0.5);
        while dx > half_x {
            dx -= ext[0];
        }
        while dx < -half_x {
            dx += ext[0];
        }
        while dy > half_y {
            dy -= ext[1];
        }
        while dy < -half_y {
            dy += ext[1];
        }
    }
    (dx * dx + dy * dy).sqrt()
}

/// Initial phase-field profile of one cell: `(1 + tanh((r − ‖x−C‖)/λ)) / 2`.
/// Pass the domain to wrap distances on periodic runs.
pub fn tanh_disc<T: Real>(
    point: [T; 2],
    center: [T; 2],
    radius: T,
    interface_width: T,
    periodic: Option<&DomainBox<T>>,
) -> T {
    let dist = cell_distance(point, center, periodic);
    (T::one() + ((radius - dist) / interface_width).tanh()) * T::of(0.5)
}

/// Draws cell centers uniformly in the domain from the seeded deterministic
/// stream. With a minimum separation, candidates too close to an accepted
/// center are rejected and redrawn (cells may still overlap — the profile
/// radius is independent of the separation).
pub fn random_centers<T: Real>(
    domain: &DomainBox<T>,
    count: usize,
    seed: u64,
    min_separation: Option<T>,
    periodic: bool,
) -> Result<Vec<[T; 2]>, ModelError> {
    const PURPOSE: u64 = 0x6365_6c6c; // stream tag for cell placement
    let rng = ParamStream::new(seed);
    let lower = domain.lower();
    let ext = domain.extent();
    let wrap = periodic.then_some(domain);
    let mut centers: Vec<[T; 2]> = Vec::with_capacity(count);
    for i in 0..count {
        let mut placed = false;
        for attempt in 0..10_000u64 {
            let ux = rng.uniform_open(&[PURPOSE, i as u64, attempt, 0]);
            let uy = rng.uniform_open(&[PURPOSE, i as u64, attempt, 1]);
            let cand = [lower[0] + T::of(ux) * ext[0], lower[1] + T::of(uy) * ext[1]];
            let ok = match min_separation {
                None => true,
                Some(sep) => centers
                    .iter()
                    .all(|c| cell_distance(cand, *c, wrap) >= sep),
            };
            if ok {
                centers.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(ModelError::Invalid(format!(
                "could not place cell {i} with the requested separation"
            )));
        }
    }
    Ok(centers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use crate::geometry::build_test_grid;

    fn params(n_cells: usize) -> CellParams<f64> {
        CellParams {
            shape_relax: 0.01,
            interface_width: 2.5,
            area_stiffness: 3.0,
            repulsion: 0.1,
            target_radius: 8.0,
            friction: 2.0,
            activity: 0.005,
            n_cells,
        }
    }

    fn constant_jets(value: f64, np: usize, comps: usize, order: usize) -> Jets<f64> {
        Jets::from_fn(order, np, comps, |m, _, _| {
            if m == MultiIndex::VALUE {
                value
            } else {
                0.0
            }
        })
    }

    #[test]
    fn params_validation_rejects_nonpositive_scales() {
        let mut p = params(4);
        p.friction = 0.0;
        assert!(p.validated().is_err());
        let mut p = params(4);
        p.n_cells = 0;
        assert!(p.validated().is_err());
    }

    #[test]
    fn ch_variation_vanishes_at_the_three_constant_states() {
        let p = params(1);
        for value in [0.0, 1.0, 0.5] {
            let state = constant_jets(value, 5, 1, 2);
            let out = variation_ch(&state, 0, &p, 0).unwrap();
            for &v in out.values(0) {
                assert_eq!(v, 0.0, "state {value}");
            }
        }
    }

    #[test]
    fn area_variation_vanishes_at_target_area() {
        let p = params(1);
        let state = constant_jets(0.7, 4, 1, 2);
        let out = variation_area(&state, 0, p.target_area(), &p, 0).unwrap();
        for &v in out.values(0) {
            assert_eq!(v, 0.0);
        }
        let zero = constant_jets(0.0, 4, 1, 2);
        let out = variation_area(&zero, 0, 0.0, &p, 0).unwrap();
        for &v in out.values(0) {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn area_variation_value_matches_hand_arithmetic() {
        // R = 8, μ = 3, φ = 1, A = 0  →  −12/(64π)
        let mut p = params(1);
        p.area_stiffness = 3.0;
        p.target_radius = 8.0;
        let state = constant_jets(1.0, 1, 1, 2);
        let out = variation_area(&state, 0, 0.0, &p, 0).unwrap();
        assert_relative_eq!(out.values(0)[0], -3.0 / (16.0 * std::f64::consts::PI), max_relative = 1e-14);
    }

    #[test]
    fn repulsion_is_empty_for_a_single_cell() {
        let p = params(1);
        let state = constant_jets(0.8, 6, 1, 2);
        let out = variation_rep(&state, 0, &p, 0).unwrap();
        for &v in out.values(0) {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn repulsion_value_matches_hand_arithmetic() {
        // φ_k = φ_i = 1, κ = 0.1, λ = 2.5  →  2·0.1/2.5 = 0.08
        let mut p = params(2);
        p.repulsion = 0.1;
        p.interface_width = 2.5;
        let state = constant_jets(1.0, 3, 2, 2);
        let out = variation_rep(&state, 0, &p, 0).unwrap();
        for &v in out.values(0) {
            assert_relative_eq!(v, 0.08, max_relative = 1e-14);
        }
    }

    /// Order-2 jets of a 1-D tanh step profile embedded in 2-D.
    fn tanh_profile_jets(xs: &[f64], x0: f64, width: f64) -> Jets<f64> {
        Jets::from_fn(2, xs.len(), 1, |m, _, p| {
            let u = (xs[p] - x0) / width;
            let t = u.tanh();
            let sech2 = 1.0 - t * t;
            match (m.x(), m.y()) {
                (0, 0) => 0.5 * (1.0 + t),
                (1, 0) => 0.5 * sech2 / width,
                (2, 0) => -t * sech2 / (width * width),
                _ => 0.0,
            }
        })
    }

    #[test]
    fn equilibrium_tanh_profile_annihilates_the_ch_variation() {
        // dense 1-D evaluation: the interface profile is stationary for the
        // interface energy alone
        let p = params(1);
        let xs: Vec<f64> = (0..2000).map(|i| i as f64 * 0.01).collect();
        let state = tanh_profile_jets(&xs, 10.0, p.interface_width);
        let out = variation_ch(&state, 0, &p, 0).unwrap();
        let scale = 8.0 * p.shape_relax / p.interface_width;
        let sup = out.values(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup <= 1e-3 * scale, "sup {sup:e} vs scale {scale:e}");
    }

    #[test]
    fn disjoint_cells_have_negligible_repulsion() {
        // two tanh discs four diameters apart, dense grid quadrature oracle
        let mut p = params(2);
        p.interface_width = 1.0;
        let r = 3.0;
        let (c1, c2) = (10.0, 34.0);
        let xs: Vec<f64> = (0..4400).map(|i| i as f64 * 0.01).collect();
        let state = Jets::from_fn(2, xs.len(), 2, |m, c, pidx| {
            let x0 = if c == 0 { c1 } else { c2 };
            // radial profile along the line through both centers
            let u = (r - (xs[pidx] - x0).abs()) / p.interface_width;
            let t = u.tanh();
            let sech2 = 1.0 - t * t;
            let sign = -(xs[pidx] - x0).signum();
            match (m.x(), m.y()) {
                (0, 0) => 0.5 * (1.0 + t),
                (1, 0) => 0.5 * sech2 * sign / p.interface_width,
                (2, 0) => -t * sech2 / (p.interface_width * p.interface_width),
                _ => 0.0,
            }
        });
        let rep = variation_rep(&state, 0, &p, 0).unwrap();
        let rep_sup = rep.values(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // scale of the interface polynomial term (the net CH variation of an
        // equilibrium profile nearly vanishes, so scale by one of its terms)
        let ch_scale = state
            .values(0)
            .iter()
            .map(|&phi| (8.0 * p.shape_relax / p.interface_width) * (phi - 3.0 * phi * phi + 2.0 * phi * phi * phi).abs())
            .fold(0.0f64, f64::max);
        assert!(rep_sup <= 1e-8 * ch_scale, "rep {rep_sup:e} vs ch scale {ch_scale:e}");
    }

    /// Order-2 jets of a radially symmetric tanh disc on a grid.
    fn disc_jets(grid: &TestGrid<f64>, center: [f64; 2], r: f64, width: f64) -> Jets<f64> {
        Jets::from_fn(2, grid.len(), 1, |m, _, p| {
            let [x, y] = grid.points()[p];
            let (dx, dy) = (x - center[0], y - center[1]);
            let rho = (dx * dx + dy * dy).sqrt();
            let u = (r - rho) / width;
            let t = u.tanh();
            let sech2 = 1.0 - t * t;
            // φ(ρ) = (1 + tanh((r−ρ)/w))/2
            let dphi = -0.5 * sech2 / width; // dφ/dρ
            let d2phi = -t * sech2 / (width * width); // d²φ/dρ²
            if rho == 0.0 {
                return match (m.x(), m.y()) {
                    (0, 0) => 0.5 * (1.0 + (r / width).tanh()),
                    _ => 0.0,
                };
            }
            let (ex, ey) = (dx / rho, dy / rho);
            match (m.x(), m.y()) {
                (0, 0) => 0.5 * (1.0 + t),
                (1, 0) => dphi * ex,
                (0, 1) => dphi * ey,
                (2, 0) => d2phi * ex * ex + dphi * ey * ey / rho,
                (0, 2) => d2phi * ey * ey + dphi * ex * ex / rho,
                (1, 1) => d2phi * ex * ey - dphi * ex * ey / rho,
                _ => 0.0,
            }
        })
    }

    #[test]
    fn symmetric_cell_has_vanishing_deformation_and_force() {
        let p = params(1);
        let domain = DomainBox::square(50.0).unwrap();
        let grid = build_test_grid(domain, 64, 64).unwrap();
        let state = disc_jets(&grid, [25.0, 25.0], p.target_radius, p.interface_width);
        let globals = cell_globals(&state, &grid, &p).unwrap();
        // scale: ∫ |∇φ|²
        let mut grad2 = 0.0;
        for pidx in 0..grid.len() {
            let dx = state.slice(MultiIndex::DX, 0)[pidx];
            let dy = state.slice(MultiIndex::DY, 0)[pidx];
            grad2 += dx * dx + dy * dy;
        }
        grad2 *= grid.weight();
        assert!(globals.s11[0].abs() <= 1e-3 * grad2);
        assert!(globals.s12[0].abs() <= 1e-3 * grad2);
        let fnorm = (globals.interface_force[0][0].powi(2)
            + globals.interface_force[0][1].powi(2))
        .sqrt();
        // domain-scale force: sup|σ| · ∫|∇φ|
        let mut grad1 = 0.0;
        for pidx in 0..grid.len() {
            let dx = state.slice(MultiIndex::DX, 0)[pidx];
            let dy = state.slice(MultiIndex::DY, 0)[pidx];
            grad1 += (dx * dx + dy * dy).sqrt();
        }
        grad1 *= grid.weight();
        let tissue = tissue_fields(&state, &globals.s11, &globals.s12, &p, &globals.areas).unwrap();
        let sup_sigma = tissue
            .pressure
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(fnorm <= 1e-3 * sup_sigma * grad1 + 1e-12);
        // ∫φ² sits below the sharp-disc area πR² for this interface width
        assert_relative_eq!(globals.areas[0], std::f64::consts::PI * 64.0, max_relative = 0.35);
        assert!(globals.areas[0] > 100.0);
    }

    #[test]
    fn friction_scales_velocity_exactly() {
        let mut p = params(1);
        p.activity = 0.0;
        let domain = DomainBox::square(50.0).unwrap();
        let grid = build_test_grid(domain, 48, 48).unwrap();
        // off-center cell so the force does not vanish by symmetry
        let state = disc_jets(&grid, [18.0, 30.0], p.target_radius, p.interface_width);
        let g1 = cell_globals(&state, &grid, &p).unwrap();
        p.friction *= 2.0;
        let g2 = cell_globals(&state, &grid, &p).unwrap();
        assert_eq!(g1.interface_force[0], g2.interface_force[0]);
        for k in 0..2 {
            assert_eq!(g2.velocity[0][k], g1.velocity[0][k] / 2.0);
        }
    }

    #[test]
    fn rhs_of_zero_state_is_exactly_zero() {
        let p = params(3);
        let domain = DomainBox::square(50.0).unwrap();
        let grid = build_test_grid(domain, 8, 8).unwrap();
        let model = CellModel::new(p).unwrap();
        let state = constant_jets(0.0, grid.len(), 3, 2);
        let globals = cell_globals(&state, &grid, &p).unwrap();
        let out = model
            .rhs(&state, grid.points(), 0.0, &globals, 0)
            .unwrap();
        for c in 0..3 {
            for &v in out.values(c) {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn relabeling_cells_permutes_the_rhs() {
        let p = params(3);
        let domain = DomainBox::square(50.0).unwrap();
        let grid = build_test_grid(domain, 24, 24).unwrap();
        let model = CellModel::new(p).unwrap();
        let centers = [[15.0, 20.0], [28.0, 30.0], [35.0, 12.0]];
        let discs: Vec<Jets<f64>> = centers
            .iter()
            .map(|c| disc_jets(&grid, *c, 6.0, 2.5))
            .collect();
        let build = |perm: [usize; 3]| {
            Jets::from_fn(2, grid.len(), 3, |m, c, pidx| {
                discs[perm[c]].slice(m, 0)[pidx]
            })
        };
        let fwd = build([0, 1, 2]);
        let rot = build([1, 2, 0]);
        let g_fwd = cell_globals(&fwd, &grid, &p).unwrap();
        let g_rot = cell_globals(&rot, &grid, &p).unwrap();
        let rhs_fwd = model.rhs(&fwd, grid.points(), 0.0, &g_fwd, 0).unwrap();
        let rhs_rot = model.rhs(&rot, grid.points(), 0.0, &g_rot, 0).unwrap();
        for c in 0..3 {
            let a = rhs_fwd.values((c + 1) % 3);
            let b = rhs_rot.values(c);
            for pidx in 0..grid.len() {
                assert_abs_diff_eq!(a[pidx], b[pidx], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn repulsion_is_symmetric_under_cell_swap() {
        let p = params(2);
        let domain = DomainBox::square(50.0).unwrap();
        let grid = build_test_grid(domain, 20, 20).unwrap();
        let disc_a = disc_jets(&grid, [20.0, 25.0], 6.0, 2.5);
        let disc_b = disc_jets(&grid, [26.0, 25.0], 6.0, 2.5);
        let build = |flip: bool| {
            Jets::from_fn(2, grid.len(), 2, |m, c, pidx| {
                let disc = if (c == 0) != flip { &disc_a } else { &disc_b };
                disc.slice(m, 0)[pidx]
            })
        };
        let ab = build(false);
        let ba = build(true);
        let rep_0 = variation_rep(&ab, 0, &p, 0).unwrap();
        let rep_1 = variation_rep(&ba, 1, &p, 0).unwrap();
        for pidx in 0..grid.len() {
            assert_abs_diff_eq!(rep_0.values(0)[pidx], rep_1.values(0)[pidx], epsilon = 1e-14);
        }
    }

    #[test]
    fn mean_angle_of_aligned_tensor_is_zero() {
        let q11 = vec![1.0; 100];
        let q12 = vec![0.0; 100];
        assert_eq!(mean_director_angle(&q11, &q12), 0.0);
    }

    #[test]
    fn tanh_disc_profile_has_the_right_interface() {
        let center = [25.0, 25.0];
        assert_relative_eq!(tanh_disc([25.0, 25.0], center, 6.0, 2.5, None), 1.0, epsilon = 0.01);
        // the half level sits on the circle of radius r
        assert_relative_eq!(tanh_disc([31.0, 25.0], center, 6.0, 2.5, None), 0.5);
        assert!(tanh_disc([45.0, 25.0], center, 6.0, 2.5, None) < 0.01);
        // periodic wrap: a point across the seam is close to the cell
        let domain = DomainBox::square(50.0).unwrap();
        let near = tanh_disc([49.0, 10.0], [1.0, 10.0], 6.0, 2.5, Some(&domain));
        assert!(near > 0.9, "wrapped distance should be 2, got {near}");
    }

    #[test]
    fn random_centers_are_deterministic_and_separated() {
        let domain = DomainBox::square(50.0).unwrap();
        let a = random_centers(&domain, 8, 42, Some(10.0), true).unwrap();
        let b = random_centers(&domain, 8, 42, Some(10.0), true).unwrap();
        assert_eq!(a, b);
        for i in 0..8 {
            assert!(domain.contains(a[i]));
            for j in 0..i {
                assert!(cell_distance(a[i], a[j], Some(&domain)) >= 10.0);
            }
        }
        // unconstrained placement accepts the first draw
        let c = random_centers(&domain, 3, 42, None, false).unwrap();
        assert_eq!(c.len(), 3);
        // an impossible separation is reported
        assert!(random_centers(&domain, 50, 42, Some(30.0), true).is_err());
    }

    #[test]
    fn integration_by_parts_identity_for_the_interface_force() {
        // Periodic trigonometric ensemble with closed-form jets; the
        // implemented force form −∫σ·∇φ is checked against ∫φ∇·σ with a
        // fourth-order finite-difference divergence on the same midpoint
        // grid (where the wrap is clean and the rule is spectrally exact).
        let mut p = params(2);
        p.activity = 0.7;
        let l = 2.0 * std::f64::consts::PI;
        let domain = DomainBox::new([0.0, 0.0], [l, l]).unwrap();
        let n = 256;
        let grid = crate::geometry::build_midpoint_grid(domain, n, n).unwrap();
        let state = Jets::from_fn(2, grid.len(), 2, |m, c, pidx| {
            let [x, y] = grid.points()[pidx];
            // smooth periodic analytic fields, asymmetric enough for a
            // nonzero net interface force
            match (c, m.x(), m.y()) {
                (0, 0, 0) => 0.55 + 0.3 * x.sin() * y.sin() + 0.15 * (x + 2.0 * y).cos(),
                (0, 1, 0) => 0.3 * x.cos() * y.sin() - 0.15 * (x + 2.0 * y).sin(),
                (0, 0, 1) => 0.3 * x.sin() * y.cos() - 0.3 * (x + 2.0 * y).sin(),
                (0, 2, 0) => -0.3 * x.sin() * y.sin() - 0.15 * (x + 2.0 * y).cos(),
                (0, 0, 2) => -0.3 * x.sin() * y.sin() - 0.6 * (x + 2.0 * y).cos(),
                (0, 1, 1) => 0.3 * x.cos() * y.cos() - 0.3 * (x + 2.0 * y).cos(),
                (1, 0, 0) => 0.5 + 0.25 * x.cos() * (2.0 * y).sin() + 0.2 * (2.0 * x + y).sin(),
                (1, 1, 0) => -0.25 * x.sin() * (2.0 * y).sin() + 0.4 * (2.0 * x + y).cos(),
                (1, 0, 1) => 0.5 * x.cos() * (2.0 * y).cos() + 0.2 * (2.0 * x + y).cos(),
                (1, 2, 0) => -0.25 * x.cos() * (2.0 * y).sin() - 0.8 * (2.0 * x + y).sin(),
                (1, 0, 2) => -x.cos() * (2.0 * y).sin() - 0.2 * (2.0 * x + y).sin(),
                (1, 1, 1) => -0.5 * x.sin() * (2.0 * y).cos() - 0.4 * (2.0 * x + y).sin(),
                _ => 0.0,
            }
        });
        let globals = cell_globals(&state, &grid, &p).unwrap();
        let tissue = tissue_fields(&state, &globals.s11, &globals.s12, &p, &globals.areas).unwrap();

        // periodic 4th-order central difference along one axis
        let idx = |ix: usize, iy: usize| iy * n + ix;
        let step = l / n as f64;
        let diff = |vals: &dyn Fn(usize) -> f64, ix: usize, iy: usize, axis: usize| -> f64 {
            let at = |dx: i64| {
                let (mut jx, mut jy) = (ix as i64, iy as i64);
                if axis == 0 {
                    jx = (jx + dx).rem_euclid(n as i64);
                } else {
                    jy = (jy + dx).rem_euclid(n as i64);
                }
                vals(idx(jx as usize, jy as usize))
            };
            (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * step)
        };
        let zeta = p.activity;
        let s11 = |q: usize| -tissue.pressure[q] - zeta * tissue.q11[q];
        let s22 = |q: usize| -tissue.pressure[q] + zeta * tissue.q11[q];
        let s12 = |q: usize| -zeta * tissue.q12[q];
        for cell in 0..2 {
            let mut lhs = [0.0, 0.0];
            for iy in 0..n {
                for ix in 0..n {
                    let q = idx(ix, iy);
                    let phi = state.values(cell)[q];
                    let div_x = diff(&s11, ix, iy, 0) + diff(&s12, ix, iy, 1);
                    let div_y = diff(&s12, ix, iy, 0) + diff(&s22, ix, iy, 1);
                    lhs[0] += phi * div_x;
                    lhs[1] += phi * div_y;
                }
            }
            lhs[0] *= grid.weight();
            lhs[1] *= grid.weight();
            let rhs = globals.interface_force[cell];
            let scale = (rhs[0] * rhs[0] + rhs[1] * rhs[1])
                .sqrt()
                .max((lhs[0] * lhs[0] + lhs[1] * lhs[1]).sqrt());
            for k in 0..2 {
                assert!(
                    (lhs[k] - rhs[k]).abs() <= 1e-6 * scale,
                    "cell {cell} component {k}: {:.6e} vs {:.6e}",
                    lhs[k],
                    rhs[k]
                );
            }
        }
    }
}
