//! Command implementations: static fits, convergence sweeps, cell runs, and
//! observable sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use faer::Mat;
use featflow::assembly::{FittedField, AssemblyError, SolveError};
use featflow::cellmodel::{
    cell_globals, observables, random_centers, tanh_disc, CellModel, CellParams, ObservableRecord,
};
use featflow::geometry::{
    build_collocation, build_midpoint_grid, build_partition, build_test_grid, DomainBox, TestGrid,
};
use featflow::integrator::{
    advance, AdvanceConfig, BasisSpec, BoundarySpec, IntegratorError, ModelError, RKTableau,
    StepInfo, TimeGrid,
};
use featflow::jets::MultiIndex;
use featflow::verify::{
    convergence_study, exact_jets, relative_errors, ErrorReport, ManufacturedCase, StudyResult,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ModelKind, RunConfig};
use crate::snapshot::{Snapshot, SnapshotError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Exit codes: 0 success, 2 configuration, 3 numerical failure (NaN),
/// 4 solver failure.
pub fn exit_code(err: &RunError) -> i32 {
    fn integrator_code(err: &IntegratorError) -> i32 {
        match err {
            IntegratorError::AtStep { source, .. } => integrator_code(source),
            IntegratorError::NonFiniteStage { .. } => 3,
            IntegratorError::Model(ModelError::NonFiniteIntegrand { .. }) => 3,
            IntegratorError::Assembly(AssemblyError::Solve(
                SolveError::NonFiniteMatrix { .. } | SolveError::NonFiniteRhs { .. },
            )) => 3,
            IntegratorError::Assembly(_) => 4,
            _ => 2,
        }
    }
    match err {
        RunError::Config(_) | RunError::Invalid(_) => 2,
        RunError::Integrator(e) => integrator_code(e),
        RunError::Model(ModelError::NonFiniteIntegrand { .. }) => 3,
        RunError::Model(_) => 2,
        RunError::Snapshot(_) | RunError::Io(_) => 2,
    }
}

fn tableau(config: &RunConfig) -> RKTableau<f64> {
    match config.tableau.as_str() {
        "midpoint" => RKTableau::midpoint(),
        "euler" => RKTableau::euler(),
        _ => RKTableau::heun(),
    }
}

fn domain_of(config: &RunConfig) -> Result<DomainBox<f64>, RunError> {
    DomainBox::new([config.domain[0], config.domain[2]], [config.domain[1], config.domain[3]])
        .map_err(|e| RunError::Invalid(e.to_string()))
}

fn advance_config(
    config: &RunConfig,
    boundary: BoundarySpec<f64>,
) -> Result<(AdvanceConfig<f64>, Arc<TestGrid<f64>>), RunError> {
    let domain = domain_of(config)?;
    let partition = build_partition(domain, config.nx, config.ny, config.pou)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    let collocation = build_collocation(&partition, config.qx, config.qy)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    let quad = build_midpoint_grid(domain, config.qtest_x, config.qtest_y)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    let norm_grid = build_test_grid(domain, config.qtest_x, config.qtest_y)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    Ok((
        AdvanceConfig {
            partition,
            collocation,
            quad,
            basis: BasisSpec {
                features: config.features,
                magnitude: config.magnitude,
                activation: config.activation,
                seed: config.seed,
                regenerate_each_step: config.regenerate_each_step,
            },
            boundary,
            tableau: tableau(config),
            time: TimeGrid::new(config.t_final, config.steps),
            rescale: config.rescale_c,
            solve: config.solve_options(),
        },
        norm_grid,
    ))
}

fn require_manufactured_domain(config: &RunConfig) -> Result<(), RunError> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = config.domain;
    if d[0] != 0.0 || d[2] != 0.0 || (d[1] - two_pi).abs() > 1e-12 || (d[3] - two_pi).abs() > 1e-12 {
        return Err(RunError::Invalid(
            "the manufactured problem is defined on (0, 2*pi)^2".to_string(),
        ));
    }
    Ok(())
}

fn cell_setup(config: &RunConfig) -> Result<(CellModel<f64>, Vec<[f64; 2]>, f64), RunError> {
    let cells = config
        .cells
        .as_ref()
        .ok_or_else(|| RunError::Invalid("cell run without a [cells] section".to_string()))?;
    let params = CellParams {
        shape_relax: cells.shape_relax,
        interface_width: cells.interface_width,
        area_stiffness: cells.area_stiffness,
        repulsion: cells.repulsion,
        target_radius: cells.target_radius,
        friction: cells.friction,
        activity: cells.activity,
        n_cells: cells.count,
    };
    let model = CellModel::new(params)?;
    let domain = domain_of(config)?;
    let centers = if cells.centers.is_empty() {
        random_centers(&domain, cells.count, config.seed, cells.min_separation, true)?
    } else {
        cells.centers.clone()
    };
    Ok((model, centers, cells.initial_radius))
}

/// One manufactured-problem run driven entirely by a [`RunConfig`]; returns
/// final-time relative errors.
pub fn manufactured_run(config: &RunConfig) -> Result<ErrorReport, RunError> {
    require_manufactured_domain(config)?;
    let started = std::time::Instant::now();
    let case_quad = build_midpoint_grid(domain_of(config)?, config.qtest_x, config.qtest_y)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    let case = ManufacturedCase::new(case_quad);
    let (advance_cfg, norm_grid) = advance_config(config, case.boundary_spec())?;
    let initial = case.initial();
    let field = advance(&advance_cfg, &case, &initial, &mut featflow::integrator::DiscardSink)?;
    let exact = exact_jets(norm_grid.points(), field.time(), 0);
    let mut report = relative_errors(&field, &exact, &norm_grid)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Static fit of the initial condition (no time stepping); returns the
/// fitted field plus the fit's relative errors when an exact solution
/// exists.
pub fn run_fit(config: &RunConfig, out_dir: &Path) -> Result<Option<ErrorReport>, RunError> {
    let mut cfg = config.clone();
    cfg.steps = 0;
    match config.model {
        ModelKind::Manufactured => {
            let report = manufactured_run(&cfg)?;
            println!(
                "fit: relative errors l_inf = {:.3e}, l2 = {:.3e} ({:.2} s)",
                report.l_inf, report.l2, report.seconds
            );
            Ok(Some(report))
        }
        ModelKind::Cells => {
            let (model, centers, radius) = cell_setup(&cfg)?;
            let (advance_cfg, norm_grid) = advance_config(&cfg, BoundarySpec::Periodic)?;
            let width = model.params().interface_width;
            let domain = *norm_grid.domain();
            let initial = move |p: [f64; 2]| -> Vec<f64> {
                centers
                    .iter()
                    .map(|c| tanh_disc(p, *c, radius, width, Some(&domain)))
                    .collect()
            };
            let mut residual = 0.0;
            let field = advance(&advance_cfg, &model, &initial, &mut |info: &StepInfo<f64>,
                                                                      _: &FittedField<f64>| {
                residual = info.residual;
            })?;
            fs::create_dir_all(out_dir)?;
            write_field_snapshot(&field, &norm_grid, 0, out_dir, false)?;
            println!("fit: residual {residual:.3e}, snapshot written to {}", out_dir.display());
            Ok(None)
        }
    }
}

/// Sweep knob for convergence studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKnob {
    Dt,
    Features,
    Partition,
    Collocation,
}

pub fn parse_sweep(spec: &str) -> Result<(SweepKnob, Vec<f64>), RunError> {
    let (name, list) = spec
        .split_once('=')
        .ok_or_else(|| RunError::Invalid(format!("sweep '{spec}' is not 'knob=v1,v2,...'")))?;
    let knob = match name.trim() {
        "dt" => SweepKnob::Dt,
        "features" => SweepKnob::Features,
        "partition" => SweepKnob::Partition,
        "q" => SweepKnob::Collocation,
        other => return Err(RunError::Invalid(format!("unknown sweep knob '{other}'"))),
    };
    let values: Result<Vec<f64>, _> = list.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| RunError::Invalid(format!("bad sweep value: {e}")))?;
    if values.is_empty() {
        return Err(RunError::Invalid("empty sweep".to_string()));
    }
    Ok((knob, values))
}

fn apply_knob(config: &RunConfig, knob: SweepKnob, value: f64) -> Result<RunConfig, RunError> {
    let mut out = config.clone();
    match knob {
        SweepKnob::Dt => {
            if !(value > 0.0) {
                return Err(RunError::Invalid("time step must be positive".to_string()));
            }
            out.steps = (config.t_final / value).round().max(1.0) as usize;
        }
        SweepKnob::Features => out.features = value as usize,
        SweepKnob::Partition => {
            out.nx = value as usize;
            out.ny = value as usize;
        }
        SweepKnob::Collocation => {
            out.qx = value as usize;
            out.qy = value as usize;
            out.qtest_x = 2 * out.qx;
            out.qtest_y = 2 * out.qy;
        }
    }
    out.validate()?;
    Ok(out)
}

/// Convergence study over exactly one knob; emits the CSV and a summary
/// line with the fitted slope.
pub fn run_converge(
    config: &RunConfig,
    knob: SweepKnob,
    values: &[f64],
    out_dir: &Path,
) -> Result<StudyResult, RunError> {
    if config.model != ModelKind::Manufactured {
        return Err(RunError::Invalid(
            "convergence studies run the manufactured problem".to_string(),
        ));
    }
    require_manufactured_domain(config)?;
    let rows: Vec<(f64, Box<dyn FnOnce() -> Result<ErrorReport, String>>)> = values
        .iter()
        .map(|&v| {
            let config = config.clone();
            let run: Box<dyn FnOnce() -> Result<ErrorReport, String>> = Box::new(move || {
                let cfg = apply_knob(&config, knob, v).map_err(|e| e.to_string())?;
                manufactured_run(&cfg).map_err(|e| e.to_string())
            });
            (v, run)
        })
        .collect();
    let parameter = match knob {
        SweepKnob::Dt => "dt",
        SweepKnob::Features => "features",
        SweepKnob::Partition => "partition",
        SweepKnob::Collocation => "q",
    };
    let study = convergence_study(parameter, rows);
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("convergence.csv");
    let mut file = fs::File::create(&path)?;
    study.write_csv(&mut file)?;
    for row in &study.rows {
        match &row.outcome {
            Ok(r) => println!(
                "{parameter} = {:<10} l_inf = {:.3e}  l2 = {:.3e}  ({:.1} s)",
                row.value, r.l_inf, r.l2, r.seconds
            ),
            Err(e) => println!("{parameter} = {:<10} failed: {e}", row.value),
        }
    }
    match study.slope {
        Some(slope) => println!("fitted log-log slope of l2: {slope:.3}"),
        None => println!("fitted log-log slope of l2: undefined (degenerate sweep)"),
    }
    println!("wrote {}", path.display());
    Ok(study)
}

fn write_field_snapshot(
    field: &FittedField<f64>,
    grid: &TestGrid<f64>,
    step: usize,
    out_dir: &Path,
    also_csv: bool,
) -> Result<PathBuf, RunError> {
    let values = field
        .eval(grid.points(), MultiIndex::VALUE)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    let d = values.ncols();
    let n = grid.len();
    let mut data = Vec::with_capacity(n * d);
    for c in 0..d {
        for i in 0..n {
            data.push(values[(i, c)]);
        }
    }
    let snap = Snapshot::new(
        field.time(),
        grid.qy() as u32,
        grid.qx() as u32,
        d as u32,
        data,
    );
    let path = out_dir.join(format!("snapshot_{step:06}.bin"));
    let mut file = fs::File::create(&path)?;
    snap.write(&mut file)?;
    if also_csv {
        let mut csv = fs::File::create(out_dir.join(format!("snapshot_{step:06}.csv")))?;
        snap.write_csv(&mut csv)?;
    }
    Ok(path)
}

/// Cell simulation with snapshot and observable emission. Returns the final
/// observables.
pub fn run_cells(
    config: &RunConfig,
    out_dir: &Path,
    csv_snapshots: bool,
) -> Result<ObservableRecord<f64>, RunError> {
    let (model, centers, radius) = cell_setup(config)?;
    let (advance_cfg, norm_grid) = advance_config(config, BoundarySpec::Periodic)?;
    let width = model.params().interface_width;
    let domain = *norm_grid.domain();
    let centers_for_init = centers.clone();
    let initial = move |p: [f64; 2]| -> Vec<f64> {
        centers_for_init
            .iter()
            .map(|c| tanh_disc(p, *c, radius, width, Some(&domain)))
            .collect()
    };
    fs::create_dir_all(out_dir)?;
    let quad = advance_cfg.quad.clone();
    let stride = config.snapshot_stride.max(1);
    let steps = config.steps;
    let params = *model.params();

    let mut obs_file = fs::File::create(out_dir.join("observables.csv"))?;
    writeln!(
        obs_file,
        "step,time,v_rms,s_rms,mean_v,mean_component_speed,mean_component_order,mean_angle"
    )?;
    let mut area_file = fs::File::create(out_dir.join("areas.csv"))?;
    write!(area_file, "step,time")?;
    for c in 0..params.n_cells {
        write!(area_file, ",area_{c}")?;
    }
    writeln!(area_file)?;

    let mut failure: Option<RunError> = None;
    let result = {
        let mut sink = |info: &StepInfo<f64>, field: &FittedField<f64>| {
            if failure.is_some() || (info.step % stride != 0 && info.step != steps) {
                return;
            }
            let out = (|| -> Result<(), RunError> {
                write_field_snapshot(field, &norm_grid, info.step, out_dir, csv_snapshots)?;
                let record = observables(field, &quad, &params)?;
                writeln!(
                    obs_file,
                    "{},{:.6},{:e},{:e},{:e},{:e},{:e},{:e}",
                    info.step,
                    info.time,
                    record.v_rms,
                    record.s_rms,
                    record.mean_v,
                    record.mean_component_speed,
                    record.mean_component_order,
                    record.mean_angle
                )?;
                let state = field
                    .eval_jets(quad.points(), 2)
                    .map_err(|e| RunError::Invalid(e.to_string()))?;
                let globals = cell_globals(&state, &quad, &params)?;
                write!(area_file, "{},{:.6}", info.step, info.time)?;
                for a in &globals.areas {
                    write!(area_file, ",{a:e}")?;
                }
                writeln!(area_file)?;
                Ok(())
            })();
            if let Err(e) = out {
                failure = Some(e);
            }
        };
        advance(&advance_cfg, &model, &initial, &mut sink)
    };
    let field = result?;
    if let Some(e) = failure {
        return Err(e);
    }
    let record = observables(&field, &quad, &params)?;
    println!(
        "final observables: v_rms = {:.4e}, s_rms = {:.4e}, mean speed = {:.4e}, mean angle = {:.3}",
        record.v_rms, record.s_rms, record.mean_v, record.mean_angle
    );
    println!("snapshots and observables written to {}", out_dir.display());
    Ok(record)
}

/// One aggregated sweep cell: mean and standard deviation of the final
/// observables over the repetitions.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub shape_relax: f64,
    pub activity: f64,
    pub v_rms: (f64, f64),
    pub s_rms: (f64, f64),
    pub s_rms_minus_baseline: f64,
    pub mean_v: (f64, f64),
    pub mean_component_speed: (f64, f64),
    pub mean_component_order: (f64, f64),
    pub mean_angle: (f64, f64),
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Observable sweep over activity and shape-relaxation grids with
/// repetitions; the zero-activity row of each relaxation value defines the
/// nematic-order baseline.
pub fn run_observable_sweep(
    config: &RunConfig,
    zetas: &[f64],
    gammas: &[f64],
    repetitions: usize,
    out_dir: &Path,
) -> Result<Vec<SweepCell>, RunError> {
    if repetitions == 0 {
        return Err(RunError::Invalid("need at least one repetition".to_string()));
    }
    if config.model != ModelKind::Cells {
        return Err(RunError::Invalid("observable sweeps run the cell model".to_string()));
    }
    let mut zetas = zetas.to_vec();
    if !zetas.contains(&0.0) {
        zetas.insert(0, 0.0);
    }
    let gammas = if gammas.is_empty() {
        vec![config.cells.as_ref().map(|c| c.shape_relax).unwrap_or(0.01)]
    } else {
        gammas.to_vec()
    };

    let jobs: Vec<(f64, f64, usize)> = gammas
        .iter()
        .flat_map(|&g| zetas.iter().map(move |&z| (g, z)))
        .flat_map(|(g, z)| (0..repetitions).map(move |rep| (g, z, rep)))
        .collect();
    let outcomes: Vec<((f64, f64), Result<ObservableRecord<f64>, String>)> = jobs
        .par_iter()
        .map(|&(gamma, zeta, rep)| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(1000 * rep as u64);
            if let Some(cells) = cfg.cells.as_mut() {
                cells.shape_relax = gamma;
                cells.activity = zeta;
            }
            let run = (|| -> Result<ObservableRecord<f64>, RunError> {
                let (model, centers, radius) = cell_setup(&cfg)?;
                let (advance_cfg, norm_grid) = advance_config(&cfg, BoundarySpec::Periodic)?;
                let width = model.params().interface_width;
                let domain = *norm_grid.domain();
                let initial = move |p: [f64; 2]| -> Vec<f64> {
                    centers
                        .iter()
                        .map(|c| tanh_disc(p, *c, radius, width, Some(&domain)))
                        .collect()
                };
                let field =
                    advance(&advance_cfg, &model, &initial, &mut featflow::integrator::DiscardSink)?;
                Ok(observables(&field, &advance_cfg.quad, model.params())?)
            })();
            ((gamma, zeta), run.map_err(|e| e.to_string()))
        })
        .collect();

    let mut cells_out = Vec::new();
    for &gamma in &gammas {
        let baseline: Vec<f64> = outcomes
            .iter()
            .filter(|((g, z), r)| *g == gamma && *z == 0.0 && r.is_ok())
            .map(|(_, r)| r.as_ref().unwrap().s_rms)
            .collect();
        let s0 = mean_std(&baseline).0;
        for &zeta in &zetas {
            let rows: Vec<&ObservableRecord<f64>> = outcomes
                .iter()
                .filter(|((g, z), r)| *g == gamma && *z == zeta && r.is_ok())
                .map(|(_, r)| r.as_ref().unwrap())
                .collect();
            if rows.is_empty() {
                eprintln!("sweep cell gamma = {gamma}, zeta = {zeta}: every repetition failed");
                continue;
            }
            let collect = |f: &dyn Fn(&ObservableRecord<f64>) -> f64| -> Vec<f64> {
                rows.iter().map(|r| f(r)).collect()
            };
            let s_rms = mean_std(&collect(&|r| r.s_rms));
            cells_out.push(SweepCell {
                shape_relax: gamma,
                activity: zeta,
                v_rms: mean_std(&collect(&|r| r.v_rms)),
                s_rms,
                s_rms_minus_baseline: s_rms.0 - s0,
                mean_v: mean_std(&collect(&|r| r.mean_v)),
                mean_component_speed: mean_std(&collect(&|r| r.mean_component_speed)),
                mean_component_order: mean_std(&collect(&|r| r.mean_component_order)),
                mean_angle: mean_std(&collect(&|r| r.mean_angle)),
            });
        }
    }

    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("observable_sweep.csv");
    let mut file = fs::File::create(&path)?;
    writeln!(
        file,
        "shape_relax,activity,v_rms_mean,v_rms_std,s_rms_mean,s_rms_std,s_rms_minus_baseline,\
         mean_v_mean,mean_v_std,component_speed_mean,component_speed_std,\
         component_order_mean,component_order_std,mean_angle_mean,mean_angle_std"
    )?;
    for c in &cells_out {
        writeln!(
            file,
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            c.shape_relax,
            c.activity,
            c.v_rms.0,
            c.v_rms.1,
            c.s_rms.0,
            c.s_rms.1,
            c.s_rms_minus_baseline,
            c.mean_v.0,
            c.mean_v.1,
            c.mean_component_speed.0,
            c.mean_component_speed.1,
            c.mean_component_order.0,
            c.mean_component_order.1,
            c.mean_angle.0,
            c.mean_angle.1,
        )?;
    }
    println!("wrote {}", path.display());
    Ok(cells_out)
}

/// Matrix/coefficient dump for the fit subcommand's debugging flag.
pub fn dump_fit_system(config: &RunConfig, out_dir: &Path) -> Result<(), RunError> {
    use featflow::assembly::{
        apply_rescaling, assemble_boundary, assemble_continuity, assemble_interior, dump_system,
        solve_least_squares, write_matrix_binary, BoundaryCondition, LinearSystem,
    };
    use featflow::basis::sample_basis;

    let domain = domain_of(config)?;
    let partition = build_partition(domain, config.nx, config.ny, config.pou)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    let collocation = build_collocation(&partition, config.qx, config.qy)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    let basis = Arc::new(
        sample_basis(
            partition.clone(),
            config.features,
            config.magnitude,
            config.activation,
            config.seed,
            0,
            0,
        )
        .map_err(|e| RunError::Invalid(e.to_string()))?,
    );
    // initial-condition targets for the configured model
    let d;
    let values = |p: [f64; 2]| -> Vec<f64> {
        vec![p[0].sin() * p[1].sin(), p[0].cos() * p[1].cos()]
    };
    let mut cell_values: Option<Box<dyn FnMut([f64; 2]) -> Vec<f64>>> = None;
    match config.model {
        ModelKind::Manufactured => d = 2,
        ModelKind::Cells => {
            let (model, centers, radius) = cell_setup(config)?;
            let width = model.params().interface_width;
            d = model.params().n_cells;
            cell_values = Some(Box::new(move |p: [f64; 2]| {
                centers
                    .iter()
                    .map(|c| tanh_disc(p, *c, radius, width, Some(&domain)))
                    .collect()
            }));
        }
    }
    let mut eval = move |p: [f64; 2]| match &mut cell_values {
        Some(f) => f(p),
        None => values(p),
    };
    let targets = Mat::from_fn(collocation.total_points(), d, |i, c| {
        eval(collocation.points()[i])[c]
    });
    let bc = match config.model {
        ModelKind::Manufactured => {
            let samples = collocation.boundary_samples();
            let mut vals = Mat::zeros(samples.len(), d);
            for (i, s) in samples.iter().enumerate() {
                let p = collocation.points()[s.point];
                vals[(i, 0)] = p[0].sin() * p[1].sin();
                vals[(i, 1)] = p[0].cos() * p[1].cos();
            }
            BoundaryCondition::DirichletSampled { values: vals }
        }
        ModelKind::Cells => BoundaryCondition::Periodic,
    };
    let mut blocks = vec![
        assemble_interior(&basis, &collocation, targets.as_ref())
            .map_err(|e| RunError::Invalid(e.to_string()))?,
    ];
    blocks.extend(
        assemble_boundary(&basis, &collocation, &bc).map_err(|e| RunError::Invalid(e.to_string()))?,
    );
    blocks.extend(
        assemble_continuity(&basis, &collocation).map_err(|e| RunError::Invalid(e.to_string()))?,
    );
    let mut system = LinearSystem::from_blocks(basis.n_columns(), blocks)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    apply_rescaling(&mut system, config.rescale_c).map_err(|e| RunError::Invalid(e.to_string()))?;
    let sol = solve_least_squares(&system, config.solve_options())
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    fs::create_dir_all(out_dir)?;
    let mut sys_file = fs::File::create(out_dir.join("system.bin"))?;
    dump_system(&system, &mut sys_file).map_err(|e| RunError::Invalid(e.to_string()))?;
    let mut coeff_file = fs::File::create(out_dir.join("coefficients.bin"))?;
    write_matrix_binary(sol.x.as_ref(), &mut coeff_file)
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    println!("wrote system.bin and coefficients.bin to {}", out_dir.display());
    Ok(())
}
