//! Explicit Runge-Kutta stepping over fitted fields.
//!
//! Each step evaluates the current fitted field as derivative jets at the
//! collocation points (for the update) and on the quadrature grid (for the
//! model's global integrals), runs the explicit stages in jet arithmetic,
//! and refits the pointwise update as a fresh random-feature field. Stage
//! `i` of a `p`-stage scheme with an order-`m` spatial operator is computed
//! at jet order `m·(p−1−i)`, which is why the basis carries derivatives up
//! to order `m·p`.

use std::sync::Arc;
use std::time::Instant;

use faer::Mat;
use thiserror::Error;

use crate::assembly::{
    apply_rescaling, assemble_boundary, assemble_continuity, assemble_interior,
    solver::relative_residual, solver::BlockStructure, solver::CachedLstsq, AssemblyError,
    BoundaryCondition, FittedField, LinearSystem, SolveOptions,
};
use crate::basis::{sample_basis, Activation, BasisError};
use crate::geometry::{CollocationSet, Partition, TestGrid};
use crate::jets::{JetError, Jets, MAX_ORDER};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("integrand for cell {cell} is not finite at quadrature point {point}")]
    NonFiniteIntegrand { cell: usize, point: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("tableau is inconsistent: {0}")]
    BadTableau(String),
    #[error("run setup: {0}")]
    Setup(String),
    #[error("scheme needs basis derivatives up to order {required}, supported maximum is {max}")]
    DerivativeCap { required: usize, max: usize },
    #[error("stage {stage} produced a non-finite value at point {point}")]
    NonFiniteStage { stage: usize, point: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<IntegratorError>,
    },
}

/// Coefficients of an explicit Runge-Kutta scheme. Row `i` of `a` holds the
/// `i` couplings to earlier stages, so the tableau is strictly lower
/// triangular by construction.
#[derive(Debug, Clone)]
pub struct RKTableau<T> {
    a: Vec<Vec<T>>,
    b: Vec<T>,
    c: Vec<T>,
}

impl<T: Real> RKTableau<T> {
    pub fn new(a: Vec<Vec<T>>, b: Vec<T>, c: Vec<T>) -> Result<Self, IntegratorError> {
        let p = b.len();
        if a.len() != p || c.len() != p {
            return Err(IntegratorError::BadTableau(format!(
                "{} stage couplings / {} weights / {} abscissae",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != i {
                return Err(IntegratorError::BadTableau(format!(
                    "stage {i} couples to {} stages; an explicit scheme allows {i}",
                    row.len()
                )));
            }
        }
        let sum = b.iter().fold(T::zero(), |s, &v| s + v);
        if (sum - T::one()).abs() > T::of(1e-14) {
            return Err(IntegratorError::BadTableau(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(RKTableau { a, b, c })
    }

    /// Heun's two-stage second-order scheme (the default).
    pub fn heun() -> Self {
        RKTableau {
            a: vec![vec![], vec![T::one()]],
            b: vec![T::of(0.5), T::of(0.5)],
            c: vec![T::zero(), T::one()],
        }
    }

    /// Explicit midpoint, the other common two-stage second-order scheme.
    pub fn midpoint() -> Self {
        RKTableau {
            a: vec![vec![], vec![T::of(0.5)]],
            b: vec![T::zero(), T::one()],
            c: vec![T::zero(), T::of(0.5)],
        }
    }

    /// Forward Euler (one stage, first order).
    pub fn euler() -> Self {
        RKTableau {
            a: vec![vec![]],
            b: vec![T::one()],
            c: vec![T::zero()],
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn coupling(&self, stage: usize) -> &[T] {
        &self.a[stage]
    }

    pub fn weight(&self, stage: usize) -> T {
        self.b[stage]
    }

    pub fn abscissa(&self, stage: usize) -> T {
        self.c[stage]
    }
}

/// Uniform partition of `[0, T]` into `K` steps.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid<T> {
    t_final: T,
    steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_final: T, steps: usize) -> Self {
        TimeGrid { t_final, steps }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t_final(&self) -> T {
        self.t_final
    }

    pub fn dt(&self) -> T {
        self.t_final / T::of(self.steps as f64)
    }

    /// `t_k = T · k / K`, so `t_K` is exactly `T`.
    pub fn time(&self, k: usize) -> T {
        self.t_final * T::of(k as f64) / T::of(self.steps as f64)
    }
}

/// Right-hand side of `∂_t φ = F(x, t, φ)`, evaluated in jet arithmetic.
///
/// `rhs` must produce jets of order `r` from state jets of order `r + m`,
/// where `m` is the declared spatial order. Global quantities (integrals
/// over the domain) are recomputed per stage from the stage state sampled
/// on the quadrature grid and passed back in.
pub trait RhsModel<T: Real>: Sync {
    type Globals: Send + Sync;

    /// Order of the spatial differential operator inside `F`.
    fn spatial_order(&self) -> usize;

    fn n_components(&self) -> usize;

    /// Global (integral) quantities of a stage state; `stage` holds jets of
    /// order at least `spatial_order()` at the quadrature points.
    fn globals(&self, stage: &Jets<T>, quad: &TestGrid<T>, t: T) -> Result<Self::Globals, ModelError>;

    /// Applies `F` pointwise; `out_order + spatial_order()` jet orders of
    /// `stage` are consumed.
    fn rhs(
        &self,
        stage: &Jets<T>,
        points: &[[T; 2]],
        t: T,
        globals: &Self::Globals,
        out_order: usize,
    ) -> Result<Jets<T>, ModelError>;
}

/// The zero right-hand side; fitted fields advect nowhere.
pub struct ZeroRhs {
    pub components: usize,
}

impl<T: Real> RhsModel<T> for ZeroRhs {
    type Globals = ();

    fn spatial_order(&self) -> usize {
        0
    }

    fn n_components(&self) -> usize {
        self.components
    }

    fn globals(&self, _: &Jets<T>, _: &TestGrid<T>, _: T) -> Result<(), ModelError> {
        Ok(())
    }

    fn rhs(
        &self,
        stage: &Jets<T>,
        _: &[[T; 2]],
        _: T,
        _: &(),
        out_order: usize,
    ) -> Result<Jets<T>, ModelError> {
        Ok(Jets::zeros(out_order, stage.n_points(), stage.n_comps()))
    }
}

/// `F(φ) = rate · φ`, spatially local; useful for order checks.
pub struct LinearRhs<T> {
    pub rate: T,
    pub components: usize,
}

impl<T: Real> RhsModel<T> for LinearRhs<T> {
    type Globals = ();

    fn spatial_order(&self) -> usize {
        0
    }

    fn n_components(&self) -> usize {
        self.components
    }

    fn globals(&self, _: &Jets<T>, _: &TestGrid<T>, _: T) -> Result<(), ModelError> {
        Ok(())
    }

    fn rhs(
        &self,
        stage: &Jets<T>,
        _: &[[T; 2]],
        _: T,
        _: &(),
        out_order: usize,
    ) -> Result<Jets<T>, ModelError> {
        let mut out = stage.truncated(out_order)?;
        out.scale(self.rate);
        Ok(out)
    }
}

fn check_finite_stage<T: Real>(stage: usize, jets: &Jets<T>) -> Result<(), IntegratorError> {
    for c in 0..jets.n_comps() {
        let vals = jets.values(c);
        for (point, v) in vals.iter().enumerate() {
            if !v.is_finite() {
                return Err(IntegratorError::NonFiniteStage { stage, point });
            }
        }
    }
    Ok(())
}

/// One explicit update evaluated at the collocation points: returns
/// `φ(t_k) + Δt Σ b_i D_i` as a values matrix (points × components).
///
/// Stage jets are carried at order `m·(p−1−i)` on both the collocation
/// points and the quadrature grid; the grid feeds each stage's global
/// integrals.
pub fn rk_target<T: Real, M: RhsModel<T>>(
    model: &M,
    field: &FittedField<T>,
    tableau: &RKTableau<T>,
    t: T,
    dt: T,
    colloc_points: &[[T; 2]],
    quad: &TestGrid<T>,
) -> Result<Mat<T>, IntegratorError> {
    let m = model.spatial_order();
    let p = tableau.stages();
    let cap = m * p;
    if cap > MAX_ORDER {
        return Err(IntegratorError::DerivativeCap {
            required: cap,
            max: MAX_ORDER,
        });
    }
    let d = model.n_components();
    let base_colloc = field.eval_jets(colloc_points, cap)?;
    let base_quad = field.eval_jets(quad.points(), cap)?;

    let mut d_colloc: Vec<Jets<T>> = Vec::with_capacity(p);
    let mut d_quad: Vec<Jets<T>> = Vec::with_capacity(p);
    for i in 0..p {
        let out_order = m * (p - 1 - i);
        let state_order = out_order + m;
        let t_stage = t + tableau.abscissa(i) * dt;

        let mut state_quad = base_quad.truncated(state_order)?;
        for (j, &a_ij) in tableau.coupling(i).iter().enumerate() {
            if a_ij != T::zero() {
                state_quad.add_scaled(&d_quad[j], dt * a_ij)?;
            }
        }
        let globals = model.globals(&state_quad, quad, t_stage)?;

        let mut state_colloc = base_colloc.truncated(state_order)?;
        for (j, &a_ij) in tableau.coupling(i).iter().enumerate() {
            if a_ij != T::zero() {
                state_colloc.add_scaled(&d_colloc[j], dt * a_ij)?;
            }
        }
        let di = model.rhs(&state_colloc, colloc_points, t_stage, &globals, out_order)?;
        check_finite_stage(i, &di)?;
        d_colloc.push(di);
        if i + 1 < p {
            let di_quad = model.rhs(&state_quad, quad.points(), t_stage, &globals, out_order)?;
            d_quad.push(di_quad);
        }
    }

    let mut target = Mat::<T>::zeros(colloc_points.len(), d);
    for c in 0..d {
        let base = base_colloc.values(c);
        for (row, &v) in base.iter().enumerate() {
            target[(row, c)] = v;
        }
    }
    for (i, di) in d_colloc.iter().enumerate() {
        let w = dt * tableau.weight(i);
        if w == T::zero() {
            continue;
        }
        for c in 0..d {
            let vals = di.values(c);
            for (row, &v) in vals.iter().enumerate() {
                target[(row, c)] += w * v;
            }
        }
    }
    Ok(target)
}

/// One explicit step of the scalar reduction `y' = f(t, y)`, following the
/// same accumulation order as the field update.
pub fn rk_scalar_step<T: Real>(
    tableau: &RKTableau<T>,
    f: impl Fn(T, T) -> T,
    t: T,
    y: T,
    dt: T,
) -> T {
    let p = tableau.stages();
    let mut d = Vec::with_capacity(p);
    for i in 0..p {
        let mut stage = y;
        for (j, &a_ij) in tableau.coupling(i).iter().enumerate() {
            stage += dt * a_ij * d[j];
        }
        d.push(f(t + tableau.abscissa(i) * dt, stage));
    }
    let mut out = y;
    for (i, &di) in d.iter().enumerate() {
        out += dt * tableau.weight(i) * di;
    }
    out
}

/// Basis sampling policy for a run.
#[derive(Debug, Clone)]
pub struct BasisSpec<T> {
    pub features: usize,
    pub magnitude: T,
    pub activation: Activation,
    pub seed: u64,
    /// Draw a fresh basis every step (the default); otherwise the step-0
    /// basis and its factorization are reused and only targets change.
    pub regenerate_each_step: bool,
}

/// Boundary data provider for a run.
#[derive(Clone)]
pub enum BoundarySpec<T> {
    /// Dirichlet trace `g(x, t)`, sampled at the boundary collocation
    /// points each step.
    Dirichlet(Arc<dyn Fn([T; 2], T) -> Vec<T> + Send + Sync>),
    Periodic,
}

/// Everything fixed across a run.
pub struct AdvanceConfig<T> {
    pub partition: Arc<Partition<T>>,
    pub collocation: CollocationSet<T>,
    pub quad: Arc<TestGrid<T>>,
    pub basis: BasisSpec<T>,
    pub boundary: BoundarySpec<T>,
    pub tableau: RKTableau<T>,
    pub time: TimeGrid<T>,
    /// Row rescaling constant.
    pub rescale: T,
    pub solve: SolveOptions<T>,
}

/// Per-step diagnostics handed to sinks.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo<T> {
    pub step: usize,
    pub time: T,
    /// Relative Frobenius residual of the rescaled fit.
    pub residual: T,
    pub seconds: f64,
    pub solver_rank: usize,
}

/// Receives every fitted field (step 0 is the fitted initial condition).
pub trait StepSink<T: Real> {
    fn on_step(&mut self, info: &StepInfo<T>, field: &FittedField<T>);
}

/// No-op sink.
pub struct DiscardSink;

impl<T: Real> StepSink<T> for DiscardSink {
    fn on_step(&mut self, _: &StepInfo<T>, _: &FittedField<T>) {}
}

impl<T: Real, F: FnMut(&StepInfo<T>, &FittedField<T>)> StepSink<T> for F {
    fn on_step(&mut self, info: &StepInfo<T>, field: &FittedField<T>) {
        self(info, field);
    }
}

fn boundary_condition<T: Real>(
    spec: &BoundarySpec<T>,
    colloc: &CollocationSet<T>,
    t: T,
    d: usize,
) -> BoundaryCondition<T> {
    match spec {
        BoundarySpec::Dirichlet(g) => {
            let samples = colloc.boundary_samples();
            let mut values = Mat::zeros(samples.len(), d);
            for (i, s) in samples.iter().enumerate() {
                let v = g(colloc.points()[s.point], t);
                for c in 0..d {
                    values[(i, c)] = v[c];
                }
            }
            BoundaryCondition::DirichletSampled { values }
        }
        BoundarySpec::Periodic => BoundaryCondition::Periodic,
    }
}

fn fit_targets<T: Real>(
    config: &AdvanceConfig<T>,
    basis: &Arc<crate::basis::FeatureBasis<T>>,
    targets: faer::MatRef<'_, T>,
    bc: &BoundaryCondition<T>,
) -> Result<LinearSystem<T>, AssemblyError> {
    let mut blocks = vec![assemble_interior(basis, &config.collocation, targets)?];
    blocks.extend(assemble_boundary(basis, &config.collocation, bc)?);
    blocks.extend(assemble_continuity(basis, &config.collocation)?);
    let mut system = LinearSystem::from_blocks(basis.n_columns(), blocks)?;
    apply_rescaling(&mut system, config.rescale)?;
    Ok(system)
}

/// The interior block is block-diagonal over subdomains; handing its layout
/// to the solver lets each subdomain's rows be compressed orthogonally
/// before the global factorization.
fn interior_structure<T: Real>(
    config: &AdvanceConfig<T>,
    basis: &crate::basis::FeatureBasis<T>,
) -> BlockStructure {
    let q = config.collocation.points_per_subdomain();
    let jn = basis.features_per_subdomain();
    BlockStructure {
        groups: (0..config.collocation.n_subdomains())
            .map(|n| (n * q..(n + 1) * q, n * jn..(n + 1) * jn))
            .collect(),
    }
}

fn at_step(step: usize) -> impl FnOnce(IntegratorError) -> IntegratorError {
    move |source| IntegratorError::AtStep {
        step,
        source: Box::new(source),
    }
}

/// Runs the full outer loop: fit the initial condition, then per step
/// sample a basis, evaluate the explicit update, assemble, rescale, solve,
/// and hand the new field to the sink. Returns the final field.
pub fn advance<T: Real, M: RhsModel<T>>(
    config: &AdvanceConfig<T>,
    model: &M,
    initial: &(dyn Fn([T; 2]) -> Vec<T> + Sync),
    sink: &mut dyn StepSink<T>,
) -> Result<FittedField<T>, IntegratorError> {
    let m = model.spatial_order();
    let p = config.tableau.stages();
    if m * p > MAX_ORDER {
        return Err(IntegratorError::DerivativeCap {
            required: m * p,
            max: MAX_ORDER,
        });
    }
    // fits and field evaluation follow the indicator semantics (one owning
    // subdomain per point); the sine blend exists as a weight function but
    // has no solve path
    if config.partition.pou() != crate::geometry::PouKind::Indicator {
        return Err(IntegratorError::Setup(
            "time stepping requires the indicator partition of unity".to_string(),
        ));
    }
    let d = model.n_components();
    let sample = |step: u64| {
        sample_basis(
            config.partition.clone(),
            config.basis.features,
            config.basis.magnitude,
            config.basis.activation,
            config.basis.seed,
            step,
            0,
        )
    };

    // Fit the initial condition at t = 0.
    let started = Instant::now();
    let basis0 = Arc::new(sample(0)?);
    let mut targets = Mat::<T>::zeros(config.collocation.total_points(), d);
    for (i, &pt) in config.collocation.points().iter().enumerate() {
        let v = initial(pt);
        for c in 0..d {
            targets[(i, c)] = v[c];
        }
    }
    let bc0 = boundary_condition(&config.boundary, &config.collocation, T::zero(), d);
    let system0 = fit_targets(config, &basis0, targets.as_ref(), &bc0).map_err(|e| at_step(0)(e.into()))?;
    let structure = interior_structure(config, &basis0);
    let factors0 = CachedLstsq::factor_structured(system0.matrix(), &structure, config.solve)
        .map_err(|e| at_step(0)(AssemblyError::from(e).into()))?;
    let sol0 = factors0
        .solve(system0.rhs())
        .map_err(|e| at_step(0)(AssemblyError::from(e).into()))?;
    let residual0 = relative_residual(system0.matrix(), sol0.x.as_ref(), system0.rhs());
    let mut field =
        FittedField::new(basis0.clone(), sol0.x, T::zero()).map_err(|e| at_step(0)(e.into()))?;
    sink.on_step(
        &StepInfo {
            step: 0,
            time: T::zero(),
            residual: residual0,
            seconds: started.elapsed().as_secs_f64(),
            solver_rank: sol0.rank,
        },
        &field,
    );

    let mut frozen_system = (!config.basis.regenerate_each_step).then_some((system0, factors0));

    let dt = config.time.dt();
    for k in 0..config.time.steps() {
        let wrap = at_step(k + 1);
        let started = Instant::now();
        let t_k = config.time.time(k);
        let t_next = config.time.time(k + 1);
        let target = rk_target(
            model,
            &field,
            &config.tableau,
            t_k,
            dt,
            config.collocation.points(),
            config.quad.as_ref(),
        )
        .map_err(wrap)?;
        let wrap = at_step(k + 1);
        let bc = boundary_condition(&config.boundary, &config.collocation, t_next, d);

        let (basis_k, sol, residual) = if let Some((system, factors)) = frozen_system.as_mut() {
            // Frozen basis: same matrix and factorization, new targets.
            let mut raw = target;
            if let BoundaryCondition::DirichletSampled { values } = &bc {
                let rows = system.n_rows();
                let mut rhs = Mat::<T>::zeros(rows, d);
                rhs.get_mut(..raw.nrows(), ..).copy_from(raw.as_ref());
                rhs.get_mut(raw.nrows()..raw.nrows() + values.nrows(), ..)
                    .copy_from(values.as_ref());
                raw = rhs;
            } else {
                let rows = system.n_rows();
                let mut rhs = Mat::<T>::zeros(rows, d);
                rhs.get_mut(..raw.nrows(), ..).copy_from(raw.as_ref());
                raw = rhs;
            }
            system.set_rhs(raw.as_ref()).map_err(|e| at_step(k + 1)(e.into()))?;
            let sol = factors
                .solve(system.rhs())
                .map_err(|e| at_step(k + 1)(AssemblyError::from(e).into()))?;
            let residual = relative_residual(system.matrix(), sol.x.as_ref(), system.rhs());
            (basis0.clone(), sol, residual)
        } else {
            let basis_k = Arc::new(sample(k as u64 + 1).map_err(|e| wrap(e.into()))?);
            let system = fit_targets(config, &basis_k, target.as_ref(), &bc)
                .map_err(|e| at_step(k + 1)(e.into()))?;
            let factors = CachedLstsq::factor_structured(system.matrix(), &structure, config.solve)
                .map_err(|e| at_step(k + 1)(AssemblyError::from(e).into()))?;
            let sol = factors
                .solve(system.rhs())
                .map_err(|e| at_step(k + 1)(AssemblyError::from(e).into()))?;
            let residual = relative_residual(system.matrix(), sol.x.as_ref(), system.rhs());
            (basis_k, sol, residual)
        };

        field = FittedField::new(basis_k, sol.x, t_next).map_err(|e| at_step(k + 1)(e.into()))?;
        sink.on_step(
            &StepInfo {
                step: k + 1,
                time: t_next,
                residual,
                seconds: started.elapsed().as_secs_f64(),
                solver_rank: sol.rank,
            },
            &field,
        );
    }
    Ok(field)
}
