//! Manufactured-solution harness, error norms, and convergence studies.
//!
//! The manufactured case wraps the cell model with an analytic two-component
//! solution (separable trigonometric fields decaying as `e^{−t}`) and the
//! compensating source `s = ∂_t φ^e − F(φ^e)`, so the modified equation
//! `∂_t φ = F(φ) + s` has a known exact solution. The source is evaluated
//! semi-analytically: closed-form jets of the exact fields, global integrals
//! by quadrature — the same quadrature the solver itself uses, so the two
//! sides cancel identically and the residual check is definitional.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use faer::Mat;
use thiserror::Error;

use crate::assembly::{FittedField, SolveOptions};
use crate::basis::Activation;
use crate::cellmodel::{cell_globals, CellGlobals, CellModel, CellParams};
use crate::geometry::{
    build_collocation, build_midpoint_grid, build_partition, build_test_grid, DomainBox, PouKind,
    TestGrid,
};
use crate::integrator::{
    advance, AdvanceConfig, BasisSpec, BoundarySpec, DiscardSink, IntegratorError, ModelError,
    RKTableau, RhsModel, TimeGrid,
};
use crate::jets::{Jets, MultiIndex};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("exact field has zero norm on the test grid")]
    ZeroNormExact,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// sin with the derivative quadrant shift: `sin^{(k)}(x) = sin(x + kπ/2)`.
fn sin_k<T: Real>(x: T, k: usize) -> T {
    (x + T::of(k as f64) * T::FRAC_PI_2()).sin()
}

/// cos with the derivative quadrant shift.
fn cos_k<T: Real>(x: T, k: usize) -> T {
    (x + T::of(k as f64) * T::FRAC_PI_2()).cos()
}

/// Closed-form jets of the exact two-component solution
/// `(sin x sin y, cos x cos y) · e^{−t}` up to the requested order.
pub fn exact_jets<T: Real>(points: &[[T; 2]], t: T, order: usize) -> Jets<T> {
    let decay = (-t).exp();
    Jets::from_fn(order, points.len(), 2, |m, c, p| {
        let [x, y] = points[p];
        let v = if c == 0 {
            sin_k(x, m.x()) * sin_k(y, m.y())
        } else {
            cos_k(x, m.x()) * cos_k(y, m.y())
        };
        v * decay
    })
}

/// Time derivative of the exact solution (`∂_t φ^e = −φ^e`).
pub fn exact_dt_jets<T: Real>(points: &[[T; 2]], t: T, order: usize) -> Jets<T> {
    let mut jets = exact_jets(points, t, order);
    jets.scale(-T::one());
    jets
}

/// The manufactured problem: cell model with the convergence-test
/// parameters plus the compensating source term.
pub struct ManufacturedCase<T> {
    model: CellModel<T>,
    quad: Arc<TestGrid<T>>,
}

impl<T: Real> ManufacturedCase<T> {
    /// Convergence-test parameters: weak relaxation/area/repulsion couplings
    /// and unit radius, friction, width, and activity, with two components.
    pub fn params() -> CellParams<T> {
        CellParams {
            shape_relax: T::of(0.001),
            interface_width: T::one(),
            area_stiffness: T::of(0.001),
            repulsion: T::of(0.001),
            target_radius: T::one(),
            friction: T::one(),
            activity: T::one(),
            n_cells: 2,
        }
    }

    /// `quad` is the quadrature grid used for all global integrals (both in
    /// the source and during stage evaluation).
    pub fn new(quad: Arc<TestGrid<T>>) -> Self {
        ManufacturedCase {
            model: CellModel::new(Self::params()).expect("fixed parameters validate"),
            quad,
        }
    }

    pub fn with_params(params: CellParams<T>, quad: Arc<TestGrid<T>>) -> Result<Self, ModelError> {
        Ok(ManufacturedCase {
            model: CellModel::new(params)?,
            quad,
        })
    }

    pub fn domain() -> DomainBox<T> {
        DomainBox::square(T::of(2.0) * T::PI()).expect("positive side")
    }

    /// Exact solution values and jets.
    pub fn exact_solution(&self, points: &[[T; 2]], t: T, order: usize) -> Jets<T> {
        exact_jets(points, t, order)
    }

    /// Globals of the exact state at time `t`, by quadrature.
    pub fn exact_globals(&self, t: T) -> Result<CellGlobals<T>, ModelError> {
        let state = exact_jets(self.quad.points(), t, 2);
        cell_globals(&state, &self.quad, self.model.params())
    }

    /// The compensating source `s(x, t) = ∂_t φ^e − F(x, t, φ^e)` as jets.
    pub fn source_jets(&self, points: &[[T; 2]], t: T, order: usize) -> Result<Jets<T>, ModelError> {
        let globals = self.exact_globals(t)?;
        let state = exact_jets(points, t, order + 2);
        let f = self.model.rhs(&state, points, t, &globals, order)?;
        let mut s = exact_dt_jets(points, t, order);
        s.add_scaled(&f, -T::one())?;
        Ok(s)
    }

    /// Source values only.
    pub fn manufactured_source(&self, points: &[[T; 2]], t: T) -> Result<Mat<T>, ModelError> {
        let jets = self.source_jets(points, t, 0)?;
        let mut out = Mat::zeros(points.len(), 2);
        for c in 0..2 {
            for (i, &v) in jets.values(c).iter().enumerate() {
                out[(i, c)] = v;
            }
        }
        Ok(out)
    }

    /// `∂_t φ^e − F(φ^e) − s` at the given points; identically zero up to
    /// rounding by construction.
    pub fn residual(&self, points: &[[T; 2]], t: T) -> Result<Vec<T>, ModelError> {
        let globals = self.exact_globals(t)?;
        let state = exact_jets(points, t, 2);
        let f = self.model.rhs(&state, points, t, &globals, 0)?;
        let s = self.source_jets(points, t, 0)?;
        let dt = exact_dt_jets(points, t, 0);
        let mut out = Vec::with_capacity(points.len() * 2);
        for c in 0..2 {
            for i in 0..points.len() {
                out.push(dt.values(c)[i] - f.values(c)[i] - s.values(c)[i]);
            }
        }
        Ok(out)
    }

    /// Dirichlet trace of the exact solution.
    pub fn boundary_spec(&self) -> BoundarySpec<T> {
        BoundarySpec::Dirichlet(Arc::new(|p: [T; 2], t: T| {
            let decay = (-t).exp();
            vec![
                p[0].sin() * p[1].sin() * decay,
                p[0].cos() * p[1].cos() * decay,
            ]
        }))
    }

    /// Initial condition `h(x) = φ^e(x, 0)`.
    pub fn initial(&self) -> impl Fn([T; 2]) -> Vec<T> + Sync {
        |p: [T; 2]| vec![p[0].sin() * p[1].sin(), p[0].cos() * p[1].cos()]
    }
}

impl<T: Real> RhsModel<T> for ManufacturedCase<T> {
    type Globals = CellGlobals<T>;

    fn spatial_order(&self) -> usize {
        2
    }

    fn n_components(&self) -> usize {
        2
    }

    fn globals(&self, stage: &Jets<T>, quad: &TestGrid<T>, t: T) -> Result<CellGlobals<T>, ModelError> {
        self.model.globals(stage, quad, t)
    }

    fn rhs(
        &self,
        stage: &Jets<T>,
        points: &[[T; 2]],
        t: T,
        globals: &CellGlobals<T>,
        out_order: usize,
    ) -> Result<Jets<T>, ModelError> {
        let mut out = self.model.rhs(stage, points, t, globals, out_order)?;
        let source = self.source_jets(points, t, out_order)?;
        out.add_scaled(&source, T::one())?;
        Ok(out)
    }
}

/// Relative error norms of one comparison.
#[derive(Debug, Clone, Copy)]
pub struct ErrorReport {
    pub l_inf: f64,
    pub l2: f64,
    pub seconds: f64,
}

/// Relative discrete norms over all grid points and components:
/// `max|e| / max|φ^e|` and `‖e‖₂ / ‖φ^e‖₂`.
pub fn relative_error_values<T: Real>(
    approx: faer::MatRef<'_, T>,
    exact: faer::MatRef<'_, T>,
) -> Result<ErrorReport, VerifyError> {
    if approx.nrows() != exact.nrows() || approx.ncols() != exact.ncols() {
        return Err(VerifyError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            approx.nrows(),
            approx.ncols(),
            exact.nrows(),
            exact.ncols()
        )));
    }
    let mut max_err = T::zero();
    let mut max_exact = T::zero();
    let mut sq_err = T::zero();
    let mut sq_exact = T::zero();
    for j in 0..exact.ncols() {
        for i in 0..exact.nrows() {
            let e = approx[(i, j)] - exact[(i, j)];
            max_err = max_err.max(e.abs());
            max_exact = max_exact.max(exact[(i, j)].abs());
            sq_err += e * e;
            sq_exact += exact[(i, j)] * exact[(i, j)];
        }
    }
    if max_exact == T::zero() || sq_exact == T::zero() {
        return Err(VerifyError::ZeroNormExact);
    }
    Ok(ErrorReport {
        l_inf: (max_err / max_exact).to_f64(),
        l2: (sq_err / sq_exact).sqrt().to_f64(),
        seconds: 0.0,
    })
}

/// Relative errors of a fitted field against the exact solution on the
/// test grid.
pub fn relative_errors<T: Real>(
    fitted: &FittedField<T>,
    exact: &Jets<T>,
    grid: &TestGrid<T>,
) -> Result<ErrorReport, VerifyError> {
    let approx = fitted
        .eval(grid.points(), MultiIndex::VALUE)
        .map_err(|e| VerifyError::ShapeMismatch(e.to_string()))?;
    let d = fitted.n_components();
    let exact_mat = Mat::from_fn(grid.len(), d, |i, c| exact.values(c)[i]);
    relative_error_values(approx.as_ref(), exact_mat.as_ref())
}

/// Least-squares slope of `log y` against `log x`; `None` when fewer than
/// two distinct abscissae survive.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let first = pts[0].0;
    if pts.iter().all(|(x, _)| (*x - first).abs() < 1e-300) {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

/// One row of a convergence study.
#[derive(Debug)]
pub struct StudyRow {
    /// Swept parameter value.
    pub value: f64,
    pub outcome: Result<ErrorReport, String>,
}

/// Sweep results with the fitted log-log slope of the relative L2 error.
#[derive(Debug)]
pub struct StudyResult {
    pub parameter: String,
    pub rows: Vec<StudyRow>,
    pub slope: Option<f64>,
}

impl StudyResult {
    /// CSV with one row per sweep point: parameter, errors, wall time.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{},l_inf,l2,seconds", self.parameter)?;
        for row in &self.rows {
            match &row.outcome {
                Ok(r) => writeln!(out, "{},{:e},{:e},{:.3}", row.value, r.l_inf, r.l2, r.seconds)?,
                Err(e) => writeln!(out, "{},failed,failed,{:?}", row.value, e)?,
            }
        }
        Ok(())
    }
}

/// Runs a sweep: each row is produced by its own closure; failures are
/// recorded and the sweep continues.
pub fn convergence_study(
    parameter: &str,
    rows: Vec<(f64, Box<dyn FnOnce() -> Result<ErrorReport, String>>)>,
) -> StudyResult {
    let rows: Vec<StudyRow> = rows
        .into_iter()
        .map(|(value, run)| StudyRow {
            value,
            outcome: run(),
        })
        .collect();
    let xs: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|_| r.value))
        .collect();
    let ys: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|rep| rep.l2))
        .collect();
    StudyResult {
        parameter: parameter.to_string(),
        rows,
        slope: fit_loglog_slope(&xs, &ys),
    }
}

/// Central finite differences composed per axis; order-2 accurate in the
/// step. The test oracle for analytic derivatives.
pub fn fd_oracle<T: Real>(
    f: &dyn Fn([T; 2]) -> T,
    point: [T; 2],
    midx: MultiIndex,
    step: T,
) -> T {
    fn go<T: Real>(f: &dyn Fn([T; 2]) -> T, p: [T; 2], ax: usize, ay: usize, h: T) -> T {
        if ax > 0 {
            let up = go(f, [p[0] + h, p[1]], ax - 1, ay, h);
            let dn = go(f, [p[0] - h, p[1]], ax - 1, ay, h);
            (up - dn) / (T::of(2.0) * h)
        } else if ay > 0 {
            let up = go(f, [p[0], p[1] + h], ax, ay - 1, h);
            let dn = go(f, [p[0], p[1] - h], ax, ay - 1, h);
            (up - dn) / (T::of(2.0) * h)
        } else {
            f(p)
        }
    }
    go(f, point, midx.x(), midx.y(), step)
}

/// Configuration of one manufactured-problem run.
#[derive(Debug, Clone)]
pub struct ManufacturedRunSpec<T> {
    pub nx: usize,
    pub ny: usize,
    pub features: usize,
    pub magnitude: T,
    pub activation: Activation,
    pub seed: u64,
    pub regenerate_each_step: bool,
    pub qx: usize,
    pub qy: usize,
    pub qtest_x: usize,
    pub qtest_y: usize,
    pub t_final: T,
    pub steps: usize,
    pub rescale: T,
    pub solve: SolveOptions<T>,
    pub tableau: RKTableau<T>,
}

impl ManufacturedRunSpec<f64> {
    /// The temporal-convergence configuration (3×3 partition, 200 features,
    /// 20×20 collocation, 40×40 test points).
    pub fn baseline(seed: u64) -> Self {
        ManufacturedRunSpec {
            nx: 3,
            ny: 3,
            features: 200,
            magnitude: 1.7,
            activation: Activation::Tanh,
            seed,
            regenerate_each_step: true,
            qx: 20,
            qy: 20,
            qtest_x: 40,
            qtest_y: 40,
            t_final: 1.0,
            steps: 2000,
            rescale: 100.0,
            solve: SolveOptions::default(),
            tableau: RKTableau::heun(),
        }
    }
}

/// Runs the manufactured problem end to end and reports the final-time
/// relative errors on the (vertex) test grid.
pub fn run_manufactured<T: Real>(spec: &ManufacturedRunSpec<T>) -> Result<ErrorReport, IntegratorError> {
    let started = Instant::now();
    let domain = ManufacturedCase::<T>::domain();
    let partition = build_partition(domain, spec.nx, spec.ny, PouKind::Indicator)
        .map_err(|e| IntegratorError::Setup(e.to_string()))?;
    let collocation = build_collocation(&partition, spec.qx, spec.qy)
        .map_err(|e| IntegratorError::Setup(e.to_string()))?;
    let norm_grid = build_test_grid(domain, spec.qtest_x, spec.qtest_y)
        .map_err(|e| IntegratorError::Setup(e.to_string()))?;
    let quad = build_midpoint_grid(domain, spec.qtest_x, spec.qtest_y)
        .map_err(|e| IntegratorError::Setup(e.to_string()))?;
    let case = ManufacturedCase::new(quad.clone());
    let config = AdvanceConfig {
        partition,
        collocation,
        quad,
        basis: BasisSpec {
            features: spec.features,
            magnitude: spec.magnitude,
            activation: spec.activation,
            seed: spec.seed,
            regenerate_each_step: spec.regenerate_each_step,
        },
        boundary: case.boundary_spec(),
        tableau: spec.tableau.clone(),
        time: TimeGrid::new(spec.t_final, spec.steps),
        rescale: spec.rescale,
        solve: spec.solve,
    };
    let initial = case.initial();
    let field = advance(&config, &case, &initial, &mut DiscardSink)?;
    let exact = exact_jets(norm_grid.points(), field.time(), 0);
    let mut report = relative_errors(&field, &exact, &norm_grid)
        .map_err(|e| IntegratorError::Setup(e.to_string()))?;
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn quad_grid() -> Arc<TestGrid<f64>> {
        build_midpoint_grid(ManufacturedCase::<f64>::domain(), 40, 40).unwrap()
    }

    #[test]
    fn exact_solution_at_the_center_of_the_first_quadrant() {
        let p = [[std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2]];
        let jets = exact_jets(&p, 0.0, 0);
        assert_relative_eq!(jets.values(0)[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(jets.values(1)[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exact_fields_are_laplacian_eigenfunctions() {
        let pts = [[0.7, 1.3], [2.0, 5.1], [4.4, 0.2]];
        let jets = exact_jets(&pts, 0.3, 4);
        for c in 0..2 {
            let lap = jets.laplacian(c, 0).unwrap();
            for i in 0..pts.len() {
                assert_relative_eq!(lap.values(0)[i], -2.0 * jets.values(c)[i], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn exact_solution_decays_exponentially_in_time() {
        let pts = [[1.0, 2.0]];
        let at0 = exact_jets(&pts, 0.0, 0);
        let at1 = exact_jets(&pts, 1.0, 0);
        for c in 0..2 {
            assert_relative_eq!(
                at1.values(c)[0],
                at0.values(c)[0] * (-1.0f64).exp(),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn source_reduces_to_minus_phi_when_the_dynamics_vanish() {
        // all couplings zero and no activity: F ≡ 0, so s = ∂_t φ^e = −φ^e
        let params = CellParams {
            shape_relax: 0.0,
            interface_width: 1.0,
            area_stiffness: 0.0,
            repulsion: 0.0,
            target_radius: 1.0,
            friction: 1.0,
            activity: 0.0,
            n_cells: 2,
        };
        let case = ManufacturedCase::with_params(params, quad_grid()).unwrap();
        let pts = [[0.5, 1.0], [3.0, 4.0]];
        let t = 0.7;
        let s = case.manufactured_source(&pts, t).unwrap();
        let exact = exact_jets(&pts, t, 0);
        for c in 0..2 {
            for i in 0..2 {
                assert_abs_diff_eq!(s[(i, c)], -exact.values(c)[i], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn manufactured_residual_vanishes_at_random_space_time_samples() {
        let case = ManufacturedCase::new(quad_grid());
        let rng = crate::basis::ParamStream::new(99);
        let two_pi = 2.0 * std::f64::consts::PI;
        for trial in 0..100u64 {
            let x = rng.uniform_open(&[trial, 0]) * two_pi;
            let y = rng.uniform_open(&[trial, 1]) * two_pi;
            let t = rng.uniform_open(&[trial, 2]);
            let r = case.residual(&[[x, y]], t).unwrap();
            for v in r {
                assert!(v.abs() <= 1e-12, "residual {v:e} at ({x}, {y}, {t})");
            }
        }
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let a = Mat::<f64>::from_fn(10, 2, |i, c| ((i + c) as f64 * 0.31).sin() + 0.5);
        let report = relative_error_values(a.as_ref(), a.as_ref()).unwrap();
        assert_eq!(report.l_inf, 0.0);
        assert_eq!(report.l2, 0.0);
    }

    #[test]
    fn uniform_scaling_gives_the_scale_offset_in_both_norms() {
        let exact = Mat::<f64>::from_fn(50, 2, |i, c| ((i * 3 + c) as f64 * 0.17).sin() + 0.2);
        let approx = Mat::from_fn(50, 2, |i, c| 1.01 * exact[(i, c)]);
        let report = relative_error_values(approx.as_ref(), exact.as_ref()).unwrap();
        assert_relative_eq!(report.l_inf, 0.01, max_relative = 1e-10);
        assert_relative_eq!(report.l2, 0.01, max_relative = 1e-10);
    }

    #[test]
    fn zero_exact_fields_are_rejected() {
        let z = Mat::<f64>::zeros(4, 1);
        assert!(matches!(
            relative_error_values(z.as_ref(), z.as_ref()),
            Err(VerifyError::ZeroNormExact)
        ));
    }

    proptest! {
        #[test]
        fn error_norms_are_scale_covariant(scale in 0.001f64..1000.0) {
            let exact = Mat::<f64>::from_fn(20, 1, |i, _| ((i as f64) * 0.37).sin() + 0.4);
            let approx = Mat::from_fn(20, 1, |i, _| exact[(i, 0)] + 0.01 * ((i as f64) * 0.11).cos());
            let base = relative_error_values(approx.as_ref(), exact.as_ref()).unwrap();
            let sa = Mat::from_fn(20, 1, |i, _| scale * approx[(i, 0)]);
            let se = Mat::from_fn(20, 1, |i, _| scale * exact[(i, 0)]);
            let scaled = relative_error_values(sa.as_ref(), se.as_ref()).unwrap();
            prop_assert!((base.l_inf - scaled.l_inf).abs() <= 1e-12 * base.l_inf.max(1e-300));
            prop_assert!((base.l2 - scaled.l2).abs() <= 1e-12 * base.l2.max(1e-300));
        }
    }

    #[test]
    fn slope_of_synthetic_quadratic_decay_is_two() {
        let xs = [0.5, 0.05, 0.005];
        let ys: Vec<f64> = xs.iter().map(|x| 3.7 * x * x).collect();
        let slope = fit_loglog_slope(&xs, &ys).unwrap();
        assert_abs_diff_eq!(slope, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_sweeps_have_no_slope() {
        assert!(fit_loglog_slope(&[0.1, 0.1], &[1.0, 2.0]).is_none());
        assert!(fit_loglog_slope(&[0.1], &[1.0]).is_none());
    }

    #[test]
    fn study_rows_survive_failures() {
        let study = convergence_study(
            "dt",
            vec![
                (
                    0.1,
                    Box::new(|| {
                        Ok(ErrorReport {
                            l_inf: 1e-2,
                            l2: 1e-2,
                            seconds: 0.0,
                        })
                    }) as Box<dyn FnOnce() -> Result<ErrorReport, String>>,
                ),
                (0.01, Box::new(|| Err("solver blew up".to_string()))),
                (
                    0.001,
                    Box::new(|| {
                        Ok(ErrorReport {
                            l_inf: 1e-6,
                            l2: 1e-6,
                            seconds: 0.0,
                        })
                    }),
                ),
            ],
        );
        assert_eq!(study.rows.len(), 3);
        assert!(study.rows[1].outcome.is_err());
        assert!(study.slope.is_some());
        let mut csv = Vec::new();
        study.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("dt,l_inf,l2,seconds"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn fd_oracle_differentiates_a_parabola_exactly_enough() {
        let f = |p: [f64; 2]| p[0] * p[0];
        let d2 = fd_oracle(&f, [0.3, 0.9], MultiIndex::DXX, 1e-4);
        assert_abs_diff_eq!(d2, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn fd_oracle_of_a_constant_vanishes() {
        let f = |_: [f64; 2]| 4.2;
        for m in MultiIndex::all_up_to(2) {
            if m.order() == 0 {
                continue;
            }
            assert_abs_diff_eq!(fd_oracle(&f, [0.5, 0.5], m, 1e-4), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn fd_oracle_confirms_tanh_feature_mixed_derivative() {
        use crate::basis::{sample_basis, Activation};
        let part = build_partition(ManufacturedCase::<f64>::domain(), 3, 3, PouKind::Indicator).unwrap();
        let basis = sample_basis(part.clone(), 6, 1.7, Activation::Tanh, 21, 0, 0).unwrap();
        let m11 = MultiIndex::new(1, 1).unwrap();
        let n = 4;
        let sub = part.subdomain(n).unwrap();
        for j in 0..6 {
            let p = [sub.center[0] + 0.4, sub.center[1] - 0.3];
            // difference the analytic ∂x along y: keeps the quotient scale at
            // the first-derivative level, so cancellation stays below 1e-6
            let f_dx = |q: [f64; 2]| basis.eval_feature(n, j, q, MultiIndex::DX).unwrap();
            // step in physical coordinates equivalent to 1e-5 normalized
            let h = 1e-5 * sub.radius[1];
            let fd = fd_oracle(&f_dx, p, MultiIndex::DY, h);
            let analytic = basis.eval_feature(n, j, p, m11).unwrap();
            assert_relative_eq!(fd, analytic, max_relative = 1e-6);
        }
    }

    #[test]
    fn first_derivatives_match_central_differences_at_random_points() {
        use crate::basis::{sample_basis, Activation};
        let part = build_partition(ManufacturedCase::<f64>::domain(), 3, 3, PouKind::Indicator).unwrap();
        let basis = sample_basis(part.clone(), 5, 1.7, Activation::Tanh, 77, 0, 0).unwrap();
        let rng = crate::basis::ParamStream::new(5);
        let m10 = MultiIndex::DX;
        for trial in 0..20u64 {
            let n = (rng.word(&[trial, 9]) % 9) as usize;
            let j = (rng.word(&[trial, 8]) % 5) as usize;
            let sub = part.subdomain(n).unwrap();
            let px = sub.center[0] + (rng.uniform_open(&[trial, 0]) - 0.5) * sub.radius[0];
            let py = sub.center[1] + (rng.uniform_open(&[trial, 1]) - 0.5) * sub.radius[1];
            let f = |q: [f64; 2]| basis.eval_feature(n, j, q, MultiIndex::VALUE).unwrap();
            let h = 1e-5 * sub.radius[0];
            let fd = fd_oracle(&f, [px, py], m10, h);
            let analytic = basis.eval_feature(n, j, [px, py], m10).unwrap();
            assert_relative_eq!(fd, analytic, max_relative = 1e-6);
        }
    }
}
