//! Block least-squares assembly and the fitted field representation.
//!
//! Every time step produces one stacked system
//! `[A; B_x; B_y; C⁰_x; C⁰_y; C¹_x; C¹_y] · U = f`:
//! a block-diagonal interior value fit, boundary rows (Dirichlet value
//! sampling, or periodic value/normal-derivative difference rows), and
//! interface continuity rows between neighboring subdomains. All rows are
//! rescaled so their largest entry is a common constant before the solve;
//! the multi-column right-hand side carries every solution component through
//! a single factorization.

pub mod rpqr;
pub mod solver;

use std::io::{Read, Write};
use std::sync::Arc;

use faer::{Mat, MatRef};
use rayon::prelude::*;
use thiserror::Error;

use crate::basis::{BasisError, FeatureBasis};
use crate::geometry::{CollocationSet, Partition, PouKind, Side};
use crate::jets::{Jets, JetError, MultiIndex};
use crate::scalar::Real;
pub use solver::{LstsqBackend, LstsqSolution, SolveError, SolveOptions};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("boundary values have {got} rows, expected {expected}")]
    BoundaryValues { expected: usize, got: usize },
    #[error("row {row} of block {block:?} is identically zero")]
    ZeroRow { block: BlockKind, row: usize },
    #[error("point {index} lies outside the domain")]
    PointOutsideDomain { index: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Identity of a row block in the stacked system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Interior,
    BoundaryX,
    BoundaryY,
    C0X,
    C0Y,
    C1X,
    C1Y,
}

/// Boundary condition attached to the fit.
#[derive(Debug, Clone)]
pub enum BoundaryCondition<T> {
    /// Values sampled at the boundary collocation points, in the canonical
    /// order of [`CollocationSet::boundary_samples`], one column per
    /// component.
    DirichletSampled { values: Mat<T> },
    /// Value and first normal-derivative equality between paired points on
    /// opposite domain edges, encoded as zero-right-hand-side difference
    /// rows.
    Periodic,
}

/// A contiguous group of rows with its right-hand side.
#[derive(Debug, Clone)]
pub struct RowBlock<T> {
    pub kind: BlockKind,
    pub matrix: Mat<T>,
    pub rhs: Mat<T>,
}

/// Interior value-fit rows: block-diagonal design blocks against the target
/// values (ordered like the collocation enumeration).
pub fn assemble_interior<T: Real>(
    basis: &FeatureBasis<T>,
    colloc: &CollocationSet<T>,
    targets: MatRef<'_, T>,
) -> Result<RowBlock<T>, AssemblyError> {
    let n_sub = colloc.n_subdomains();
    let q = colloc.points_per_subdomain();
    if targets.nrows() != n_sub * q {
        return Err(AssemblyError::ShapeMismatch(format!(
            "targets have {} rows, collocation has {} points",
            targets.nrows(),
            n_sub * q
        )));
    }
    let n_cols = basis.n_columns();
    let blocks: Vec<(usize, Mat<T>)> = (0..n_sub)
        .into_par_iter()
        .map(|n| {
            let block = basis
                .eval_design_block(n, colloc.subdomain_points(n), MultiIndex::VALUE)
                .expect("collocation points lie in their subdomain");
            (n, block)
        })
        .collect();
    let mut matrix = Mat::zeros(n_sub * q, n_cols);
    let jn = basis.features_per_subdomain();
    for (n, block) in blocks {
        let col0 = basis.column_offset(n);
        matrix
            .get_mut(n * q..(n + 1) * q, col0..col0 + jn)
            .copy_from(block.as_ref());
    }
    Ok(RowBlock {
        kind: BlockKind::Interior,
        matrix,
        rhs: targets.to_owned(),
    })
}

fn edge_points<T: Real>(colloc: &CollocationSet<T>, n: usize, side: Side) -> Vec<[T; 2]> {
    colloc
        .edge_indices(n, side)
        .into_iter()
        .map(|i| colloc.points()[i])
        .collect()
}

/// Boundary rows. Dirichlet sampling produces one value row per boundary
/// collocation point, split into the x-perpendicular and y-perpendicular
/// blocks; periodic conditions produce difference rows (value and first
/// normal derivative) between paired opposite-edge points with zero
/// right-hand side.
pub fn assemble_boundary<T: Real>(
    basis: &FeatureBasis<T>,
    colloc: &CollocationSet<T>,
    bc: &BoundaryCondition<T>,
) -> Result<Vec<RowBlock<T>>, AssemblyError> {
    let n_cols = basis.n_columns();
    let jn = basis.features_per_subdomain();
    match bc {
        BoundaryCondition::DirichletSampled { values } => {
            let samples = colloc.boundary_samples();
            if values.nrows() != samples.len() {
                return Err(AssemblyError::BoundaryValues {
                    expected: samples.len(),
                    got: values.nrows(),
                });
            }
            let n_x = samples
                .iter()
                .filter(|s| matches!(s.side, Side::Left | Side::Right))
                .count();
            let d = values.ncols();
            let make = |range: std::ops::Range<usize>, kind: BlockKind| -> Result<RowBlock<T>, AssemblyError> {
                let mut matrix = Mat::zeros(range.len(), n_cols);
                let mut rhs = Mat::zeros(range.len(), d);
                for (row, si) in range.clone().enumerate() {
                    let s = samples[si];
                    let pt = colloc.points()[s.point];
                    let col0 = basis.column_offset(s.subdomain);
                    for j in 0..jn {
                        matrix[(row, col0 + j)] =
                            basis.eval_feature(s.subdomain, j, pt, MultiIndex::VALUE)?;
                    }
                    for c in 0..d {
                        rhs[(row, c)] = values[(si, c)];
                    }
                }
                Ok(RowBlock { kind, matrix, rhs })
            };
            Ok(vec![
                make(0..n_x, BlockKind::BoundaryX)?,
                make(n_x..samples.len(), BlockKind::BoundaryY)?,
            ])
        }
        BoundaryCondition::Periodic => {
            let nx = basis.partition().nx();
            let ny = basis.partition().ny();
            let d = 1; // zero rhs; column count fixed up by the caller
            let _ = d;
            let mut blocks = Vec::new();
            for (kind, deriv) in [
                (BlockKind::BoundaryX, MultiIndex::DX),
                (BlockKind::BoundaryY, MultiIndex::DY),
            ] {
                let pairs: Vec<(usize, usize, Side, Side)> = match kind {
                    BlockKind::BoundaryX => (0..ny)
                        .map(|iy| (iy, (nx - 1) * ny + iy, Side::Left, Side::Right))
                        .collect(),
                    _ => (0..nx)
                        .map(|ix| (ix * ny, ix * ny + ny - 1, Side::Bottom, Side::Top))
                        .collect(),
                };
                let edge_len = match kind {
                    BlockKind::BoundaryX => colloc.qy(),
                    _ => colloc.qx(),
                };
                let rows = 2 * pairs.len() * edge_len;
                let mut matrix = Mat::zeros(rows, n_cols);
                let mut row = 0;
                for midx in [MultiIndex::VALUE, deriv] {
                    for &(na, nb, sa, sb) in &pairs {
                        let pa = edge_points(colloc, na, sa);
                        let pb = edge_points(colloc, nb, sb);
                        let block_a = basis.eval_design_block(na, &pa, midx)?;
                        let block_b = basis.eval_design_block(nb, &pb, midx)?;
                        let (ca, cb) = (basis.column_offset(na), basis.column_offset(nb));
                        // accumulate: with a single subdomain across the
                        // domain both sides land in the same column block
                        for i in 0..edge_len {
                            for j in 0..jn {
                                matrix[(row, ca + j)] += block_a[(i, j)];
                                matrix[(row, cb + j)] -= block_b[(i, j)];
                            }
                            row += 1;
                        }
                    }
                }
                debug_assert_eq!(row, rows);
                let rhs = Mat::zeros(rows, 0);
                blocks.push(RowBlock { kind, matrix, rhs });
            }
            Ok(blocks)
        }
    }
}

/// Interface continuity rows (value and first normal derivative) between
/// neighboring subdomains, one group per shared edge owned by the
/// lower-index subdomain. Requires the indicator partition of unity; with
/// the sine blend the constraints are unnecessary and this is a warned
/// no-op.
pub fn assemble_continuity<T: Real>(
    basis: &FeatureBasis<T>,
    colloc: &CollocationSet<T>,
) -> Result<Vec<RowBlock<T>>, AssemblyError> {
    if basis.partition().pou() == PouKind::SinBlend {
        eprintln!("featflow: continuity constraints skipped for the sine-blend partition of unity");
        return Ok(Vec::new());
    }
    let n_cols = basis.n_columns();
    let jn = basis.features_per_subdomain();
    let mut blocks = Vec::new();
    for (kind, midx, pairs, sides, edge_len) in [
        (
            BlockKind::C0X,
            MultiIndex::VALUE,
            colloc.x_interfaces(),
            (Side::Right, Side::Left),
            colloc.qy(),
        ),
        (
            BlockKind::C0Y,
            MultiIndex::VALUE,
            colloc.y_interfaces(),
            (Side::Top, Side::Bottom),
            colloc.qx(),
        ),
        (
            BlockKind::C1X,
            MultiIndex::DX,
            colloc.x_interfaces(),
            (Side::Right, Side::Left),
            colloc.qy(),
        ),
        (
            BlockKind::C1Y,
            MultiIndex::DY,
            colloc.y_interfaces(),
            (Side::Top, Side::Bottom),
            colloc.qx(),
        ),
    ] {
        let rows = pairs.len() * edge_len;
        let mut matrix = Mat::zeros(rows, n_cols);
        let mut row = 0;
        for &(na, nb) in &pairs {
            let pa = edge_points(colloc, na, sides.0);
            let pb = edge_points(colloc, nb, sides.1);
            let block_a = basis.eval_design_block(na, &pa, midx)?;
            let block_b = basis.eval_design_block(nb, &pb, midx)?;
            let (ca, cb) = (basis.column_offset(na), basis.column_offset(nb));
            for i in 0..edge_len {
                for j in 0..jn {
                    matrix[(row, ca + j)] = block_a[(i, j)];
                    matrix[(row, cb + j)] = -block_b[(i, j)];
                }
                row += 1;
            }
        }
        debug_assert_eq!(row, rows);
        blocks.push(RowBlock {
            kind,
            matrix,
            rhs: Mat::zeros(rows, 0),
        });
    }
    Ok(blocks)
}

/// The stacked rescaled system with its per-row scale factors.
#[derive(Debug, Clone)]
pub struct LinearSystem<T> {
    matrix: Mat<T>,
    rhs: Mat<T>,
    row_scales: Vec<T>,
    blocks: Vec<(BlockKind, std::ops::Range<usize>)>,
}

impl<T: Real> LinearSystem<T> {
    /// Stacks row blocks; blocks with zero-column right-hand sides
    /// contribute zero rows to the shared right-hand side.
    pub fn from_blocks(n_cols: usize, blocks: Vec<RowBlock<T>>) -> Result<Self, AssemblyError> {
        let d = blocks
            .iter()
            .map(|b| b.rhs.ncols())
            .max()
            .unwrap_or(0);
        let rows: usize = blocks.iter().map(|b| b.matrix.nrows()).sum();
        let mut matrix = Mat::zeros(rows, n_cols);
        let mut rhs = Mat::zeros(rows, d);
        let mut index = Vec::with_capacity(blocks.len());
        let mut at = 0;
        for b in blocks {
            if b.matrix.ncols() != n_cols {
                return Err(AssemblyError::ShapeMismatch(format!(
                    "block {:?} has {} columns, system has {}",
                    b.kind,
                    b.matrix.ncols(),
                    n_cols
                )));
            }
            if b.rhs.ncols() != 0 && b.rhs.ncols() != d {
                return Err(AssemblyError::ShapeMismatch(format!(
                    "block {:?} has {} rhs columns, system has {}",
                    b.kind,
                    b.rhs.ncols(),
                    d
                )));
            }
            let r = b.matrix.nrows();
            matrix
                .get_mut(at..at + r, ..)
                .copy_from(b.matrix.as_ref());
            if b.rhs.ncols() == d && d > 0 {
                rhs.get_mut(at..at + r, ..).copy_from(b.rhs.as_ref());
            }
            index.push((b.kind, at..at + r));
            at += r;
        }
        Ok(LinearSystem {
            matrix,
            rhs,
            row_scales: Vec::new(),
            blocks: index,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_rhs(&self) -> usize {
        self.rhs.ncols()
    }

    pub fn matrix(&self) -> MatRef<'_, T> {
        self.matrix.as_ref()
    }

    pub fn rhs(&self) -> MatRef<'_, T> {
        self.rhs.as_ref()
    }

    /// Scale factors applied by [`apply_rescaling`]; empty before rescaling.
    pub fn row_scales(&self) -> &[T] {
        &self.row_scales
    }

    pub fn blocks(&self) -> &[(BlockKind, std::ops::Range<usize>)] {
        &self.blocks
    }

    fn block_of_row(&self, row: usize) -> (BlockKind, usize) {
        for (kind, range) in &self.blocks {
            if range.contains(&row) {
                return (*kind, row - range.start);
            }
        }
        (BlockKind::Interior, row)
    }

    /// Replaces the right-hand side (frozen-basis stepping refits new targets
    /// against the same matrix). The stored row scales are reapplied.
    pub fn set_rhs(&mut self, rhs: MatRef<'_, T>) -> Result<(), AssemblyError> {
        if rhs.nrows() != self.matrix.nrows() {
            return Err(AssemblyError::ShapeMismatch(format!(
                "rhs has {} rows, system has {}",
                rhs.nrows(),
                self.matrix.nrows()
            )));
        }
        self.rhs = rhs.to_owned();
        if !self.row_scales.is_empty() {
            for i in 0..self.rhs.nrows() {
                let s = self.row_scales[i];
                for c in 0..self.rhs.ncols() {
                    self.rhs[(i, c)] *= s;
                }
            }
        }
        Ok(())
    }
}

/// Rescales each row (over the full concatenated column range) and its
/// right-hand side entries by `c / max_j |row_j|`, so every row's largest
/// entry becomes exactly `c`.
pub fn apply_rescaling<T: Real>(system: &mut LinearSystem<T>, c: T) -> Result<(), AssemblyError> {
    let (rows, cols) = (system.matrix.nrows(), system.matrix.ncols());
    // column-major passes with a row-indexed accumulator
    let mut maxima = vec![T::zero(); rows];
    for j in 0..cols {
        let col = system.matrix.col_as_slice(j);
        for (m, &v) in maxima.iter_mut().zip(col) {
            *m = m.max(v.abs());
        }
    }
    let mut scales = Vec::with_capacity(rows);
    for (i, &max) in maxima.iter().enumerate() {
        if max == T::zero() {
            let (block, row) = system.block_of_row(i);
            return Err(AssemblyError::ZeroRow { block, row });
        }
        scales.push(c / max);
    }
    for j in 0..cols {
        let col = system.matrix.col_as_slice_mut(j);
        for (v, &s) in col.iter_mut().zip(&scales) {
            *v *= s;
        }
    }
    for j in 0..system.rhs.ncols() {
        let col = system.rhs.col_as_slice_mut(j);
        for (v, &s) in col.iter_mut().zip(&scales) {
            *v *= s;
        }
    }
    system.row_scales = scales;
    Ok(())
}

/// Solves the (rescaled) system for the full coefficient matrix.
pub fn solve_least_squares<T: Real>(
    system: &LinearSystem<T>,
    options: SolveOptions<T>,
) -> Result<LstsqSolution<T>, AssemblyError> {
    Ok(solver::solve_dense_lstsq(
        system.matrix.as_ref(),
        system.rhs.as_ref(),
        options,
    )?)
}

/// A solved random-feature representation: coefficients for every subdomain
/// and component, evaluable with spatial derivatives anywhere in the domain.
#[derive(Debug, Clone)]
pub struct FittedField<T> {
    partition: Arc<Partition<T>>,
    basis: Arc<FeatureBasis<T>>,
    coeffs: Mat<T>,
    time: T,
}

impl<T: Real> FittedField<T> {
    pub fn new(basis: Arc<FeatureBasis<T>>, coeffs: Mat<T>, time: T) -> Result<Self, AssemblyError> {
        if coeffs.nrows() != basis.n_columns() {
            return Err(AssemblyError::ShapeMismatch(format!(
                "coefficients have {} rows, basis has {} columns",
                coeffs.nrows(),
                basis.n_columns()
            )));
        }
        Ok(FittedField {
            partition: basis.partition().clone(),
            basis,
            coeffs,
            time,
        })
    }

    pub fn zero(basis: Arc<FeatureBasis<T>>, n_components: usize, time: T) -> Self {
        let coeffs = Mat::zeros(basis.n_columns(), n_components);
        FittedField {
            partition: basis.partition().clone(),
            basis,
            coeffs,
            time,
        }
    }

    pub fn partition(&self) -> &Arc<Partition<T>> {
        &self.partition
    }

    pub fn basis(&self) -> &Arc<FeatureBasis<T>> {
        &self.basis
    }

    pub fn coefficients(&self) -> MatRef<'_, T> {
        self.coeffs.as_ref()
    }

    pub fn n_components(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn time(&self) -> T {
        self.time
    }

    /// Evaluates one derivative of every component at the given points,
    /// using the owning subdomain's representation at each point.
    pub fn eval(&self, points: &[[T; 2]], midx: MultiIndex) -> Result<Mat<T>, AssemblyError> {
        let jets = self.eval_jets_orders(points, midx.order(), &[midx])?;
        let d = self.n_components();
        let mut out = Mat::zeros(points.len(), d);
        for c in 0..d {
            let vals = jets.slice(midx, c);
            for (i, &v) in vals.iter().enumerate() {
                out[(i, c)] = v;
            }
        }
        Ok(out)
    }

    /// Evaluates with subdomain `n`'s features regardless of ownership
    /// (restricted to the closed subdomain); used to measure interface jumps.
    pub fn eval_in_subdomain(
        &self,
        n: usize,
        points: &[[T; 2]],
        midx: MultiIndex,
    ) -> Result<Mat<T>, AssemblyError> {
        let block = self.basis.eval_design_block(n, points, midx)?;
        let col0 = self.basis.column_offset(n);
        let jn = self.basis.features_per_subdomain();
        let mut out = Mat::zeros(points.len(), self.n_components());
        faer::linalg::matmul::matmul(
            out.as_mut(),
            faer::Accum::Replace,
            block.as_ref(),
            self.coeffs.get(col0..col0 + jn, ..),
            T::one(),
            faer::get_global_parallelism(),
        );
        Ok(out)
    }

    /// Full derivative jets of every component at the given points.
    pub fn eval_jets(&self, points: &[[T; 2]], order: usize) -> Result<Jets<T>, AssemblyError> {
        let midxs: Vec<MultiIndex> = MultiIndex::all_up_to(order).collect();
        self.eval_jets_orders(points, order, &midxs)
    }

    fn eval_jets_orders(
        &self,
        points: &[[T; 2]],
        order: usize,
        midxs: &[MultiIndex],
    ) -> Result<Jets<T>, AssemblyError> {
        let n_sub = self.partition.n_subdomains();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_sub];
        for (i, &p) in points.iter().enumerate() {
            let owner = self
                .partition
                .owner_of(p)
                .ok_or(AssemblyError::PointOutsideDomain { index: i })?;
            groups[owner].push(i);
        }
        let d = self.n_components();
        let jn = self.basis.features_per_subdomain();
        let par = faer::get_global_parallelism();
        let partial: Vec<(usize, Vec<Mat<T>>)> = groups
            .par_iter()
            .enumerate()
            .filter(|(_, idxs)| !idxs.is_empty())
            .map(|(n, idxs)| {
                let pts: Vec<[T; 2]> = idxs.iter().map(|&i| points[i]).collect();
                let design = self
                    .basis
                    .eval_design_jets(n, &pts, order)
                    .expect("owned points lie in their subdomain");
                let col0 = self.basis.column_offset(n);
                let values: Vec<Mat<T>> = midxs
                    .iter()
                    .map(|m| {
                        let mut local = Mat::zeros(idxs.len(), d);
                        faer::linalg::matmul::matmul(
                            local.as_mut(),
                            faer::Accum::Replace,
                            design[m.flat()].as_ref(),
                            self.coeffs.get(col0..col0 + jn, ..),
                            T::one(),
                            par,
                        );
                        local
                    })
                    .collect();
                (n, values)
            })
            .collect();
        let mut jets = Jets::zeros(order, points.len(), d);
        for (n, values) in partial {
            let idxs = &groups[n];
            for (mi, m) in midxs.iter().enumerate() {
                for c in 0..d {
                    let dst = jets.slice_mut(*m, c);
                    for (local_row, &global) in idxs.iter().enumerate() {
                        dst[global] = values[mi][(local_row, c)];
                    }
                }
            }
        }
        Ok(jets)
    }
}

/// Writes a matrix as flat binary: 8-byte magic, row and column counts as
/// little-endian u64, then row-major 64-bit floats.
pub fn write_matrix_binary<T: Real>(
    mat: MatRef<'_, T>,
    out: &mut impl Write,
) -> Result<(), AssemblyError> {
    out.write_all(b"FFMATRIX")?;
    out.write_all(&(mat.nrows() as u64).to_le_bytes())?;
    out.write_all(&(mat.ncols() as u64).to_le_bytes())?;
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            out.write_all(&mat[(i, j)].to_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a matrix written by [`write_matrix_binary`].
pub fn read_matrix_binary(input: &mut impl Read) -> Result<Mat<f64>, AssemblyError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != b"FFMATRIX" {
        return Err(AssemblyError::ShapeMismatch(
            "bad matrix file magic".to_string(),
        ));
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let mut mat = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            input.read_exact(&mut word)?;
            mat[(i, j)] = f64::from_le_bytes(word);
        }
    }
    Ok(mat)
}

/// Dumps the assembled system (matrix, then right-hand side) for debugging.
pub fn dump_system<T: Real>(
    system: &LinearSystem<T>,
    out: &mut impl Write,
) -> Result<(), AssemblyError> {
    write_matrix_binary(system.matrix(), out)?;
    write_matrix_binary(system.rhs(), out)?;
    Ok(())
}
