//! Dense rank-revealing least-squares backends.
//!
//! Both backends minimize the Frobenius residual over all right-hand-side
//! columns jointly and return the minimum-norm solution when the numerical
//! rank (singular values, or pivoted-QR diagonals, below `rtol` times the
//! largest) falls short of the column count.
//!
//! The pivoted-QR backend runs in two stages on tall systems: a blocked
//! Householder triangularization first, then a column-pivoted factorization
//! of the square triangular factor. The composition is itself a
//! column-pivoted orthogonal factorization of the input, but the expensive
//! unblocked pivoting pass only ever sees an `n × n` matrix.
//!
//! Factorizations can be kept and reapplied to fresh right-hand sides, which
//! is what the frozen-basis stepping mode does when only the fit targets
//! change between time steps.

use dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::{Qr, Svd};
use faer::linalg::{householder, triangular_solve};
use faer::{unzip, zip, Conj, Mat, MatMut, MatRef};
use rayon::prelude::*;
use thiserror::Error;

use super::rpqr::RpQr;
use crate::scalar::Real;

/// Which factorization carries the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LstsqBackend {
    /// Householder QR with column pivoting and truncated-rank completion.
    #[default]
    QrColPiv,
    /// Thin singular value decomposition with spectral truncation.
    Svd,
}

/// Solver options; `rtol` is relative to the largest singular value (or
/// pivoted diagonal).
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<T> {
    pub backend: LstsqBackend,
    pub rtol: T,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            backend: LstsqBackend::QrColPiv,
            rtol: T::of(1e-12),
        }
    }
}

/// Least-squares solution with rank diagnostics.
#[derive(Debug, Clone)]
pub struct LstsqSolution<T> {
    pub x: Mat<T>,
    /// Numerical rank at the requested truncation tolerance.
    pub rank: usize,
    /// Columns of the system.
    pub n_cols: usize,
    /// True when the system had fewer rows than columns.
    pub underdetermined: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFiniteMatrix { row: usize, col: usize },
    #[error("right-hand side entry ({row}, {col}) is not finite")]
    NonFiniteRhs { row: usize, col: usize },
    #[error("dimension mismatch: matrix has {rows} rows, rhs has {rhs_rows}")]
    ShapeMismatch { rows: usize, rhs_rows: usize },
    #[error("singular value decomposition did not converge")]
    SvdFailed,
}

fn check_finite<T: Real>(m: MatRef<'_, T>, rhs: bool) -> Result<(), SolveError> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(if rhs {
                    SolveError::NonFiniteRhs { row: i, col: j }
                } else {
                    SolveError::NonFiniteMatrix { row: i, col: j }
                });
            }
        }
    }
    Ok(())
}

/// Applies `Qᵀ` (from a block Householder sequence) to `rhs` in place.
fn apply_q_transpose<T: Real>(basis: MatRef<'_, T>, coeff: MatRef<'_, T>, rhs: MatMut<'_, T>) {
    let par = faer::get_global_parallelism();
    let mut buf = MemBuffer::new(
        householder::apply_block_householder_sequence_transpose_on_the_left_in_place_scratch::<T>(
            basis.nrows(),
            coeff.nrows(),
            rhs.ncols(),
        ),
    );
    householder::apply_block_householder_sequence_transpose_on_the_left_in_place_with_conj(
        basis,
        coeff,
        Conj::No,
        rhs,
        par,
        MemStack::new(&mut buf),
    );
}

/// Right-side Householder sequence turning an upper trapezoid `[T₁ G]`
/// (r×n, `T₁` upper triangular) into `[T 0]`. Each reflector touches one
/// diagonal column and the trailing `n − r` columns, so the cost is
/// `O(r²(n−r))` — cheap for the small rank deficiencies the truncation
/// produces.
struct RzFactors<T> {
    /// Annihilated trapezoid: triangular factor in the first `r` columns,
    /// reflector tails in the last `n − r`.
    t: Mat<T>,
    taus: Vec<T>,
    n: usize,
    rank: usize,
}

impl<T: Real> RzFactors<T> {
    fn factor(trapezoid: MatRef<'_, T>) -> Self {
        let r = trapezoid.nrows();
        let n = trapezoid.ncols();
        debug_assert!(r < n);
        let tail = n - r;
        let mut t = trapezoid.to_owned();
        let mut taus = vec![T::zero(); r];
        for i in (0..r).rev() {
            // Householder on (t[i,i], t[i, r..n]) zeroing the tail.
            let alpha = t[(i, i)];
            let mut tail_norm2 = T::zero();
            for j in 0..tail {
                let v = t[(i, r + j)];
                tail_norm2 += v * v;
            }
            if tail_norm2 == T::zero() {
                taus[i] = T::zero();
                continue;
            }
            let norm = (alpha * alpha + tail_norm2).sqrt();
            let beta = if alpha >= T::zero() { -norm } else { norm };
            let tau = (beta - alpha) / beta;
            let scale = T::one() / (alpha - beta);
            for j in 0..tail {
                t[(i, r + j)] *= scale;
            }
            t[(i, i)] = beta;
            taus[i] = tau;
            // apply to the rows above: row_k ← row_k − τ (row_k·u) uᵀ with
            // u = (e_i, tail); below-diagonal entries stay zero.
            for k in 0..i {
                let mut dot = t[(k, i)];
                for j in 0..tail {
                    dot += t[(k, r + j)] * t[(i, r + j)];
                }
                let delta = tau * dot;
                t[(k, i)] -= delta;
                for j in 0..tail {
                    let u = t[(i, r + j)];
                    t[(k, r + j)] -= delta * u;
                }
            }
        }
        RzFactors { t, taus, n, rank: r }
    }

    /// Minimum-norm solution of `[T₁ G] y = d` given `d` (rank rows):
    /// `w = [T⁻¹ d; 0]`, then `y = Zᵀ w` by applying the reflectors.
    fn solve(&self, d: MatRef<'_, T>) -> Mat<T> {
        let par = faer::get_global_parallelism();
        let r = self.rank;
        let n = self.n;
        let tail = n - r;
        let k = d.ncols();
        let mut z = d.to_owned();
        triangular_solve::solve_upper_triangular_in_place(
            self.t.get(..r, ..r),
            z.as_mut(),
            par,
        );
        let mut y = Mat::<T>::zeros(n, k);
        y.get_mut(..r, ..).copy_from(&z);
        for i in 0..r {
            let tau = self.taus[i];
            if tau == T::zero() {
                continue;
            }
            for col in 0..k {
                let mut dot = y[(i, col)];
                for j in 0..tail {
                    dot += self.t[(i, r + j)] * y[(r + j, col)];
                }
                let delta = tau * dot;
                y[(i, col)] -= delta;
                for j in 0..tail {
                    let u = self.t[(i, r + j)];
                    y[(r + j, col)] -= delta * u;
                }
            }
        }
        y
    }
}

struct QrFactors<T> {
    /// Blocked triangularization of the tall input, if one was needed.
    tall: Option<Qr<T>>,
    /// Randomized-pivot blocked factorization of the (at most square)
    /// triangular factor.
    pivoted: RpQr<T>,
    /// Upper-triangular leading block of `R`, kept for the full-rank solve.
    r_full: Option<Mat<T>>,
    /// Trapezoid annihilation for the minimum-norm completion when the
    /// numerical rank is deficient.
    completion: Option<RzFactors<T>>,
    rank: usize,
    n: usize,
}

impl<T: Real> QrFactors<T> {
    fn factor(a: MatRef<'_, T>, rtol: T) -> Self {
        let m = a.nrows();
        let n = a.ncols();
        // Stage A on tall systems: unpivoted blocked triangularization.
        let (tall, pivoted) = if m > n {
            let qr = Qr::new(a);
            let rp = RpQr::factor(qr.R(), rtol);
            (Some(qr), rp)
        } else {
            (None, RpQr::factor(a, rtol))
        };
        // Pivoting keeps the large columns leading; the numerical rank is
        // the leading diagonal run above rtol times the largest magnitude.
        let size = pivoted.size();
        let maxdiag = (0..size).fold(T::zero(), |acc, i| acc.max(pivoted.diag(i).abs()));
        let cutoff = rtol * maxdiag;
        let mut rank = 0;
        while rank < size && pivoted.diag(rank).abs() > cutoff {
            rank += 1;
        }
        let (r_full, completion) = if rank == n {
            (Some(pivoted.r_rows(0..n)), None)
        } else if rank > 0 {
            (None, Some(RzFactors::factor(pivoted.r_rows(0..rank).as_ref())))
        } else {
            (None, None)
        };
        QrFactors {
            tall,
            pivoted,
            r_full,
            completion,
            rank,
            n,
        }
    }

    fn solve(&self, b: MatRef<'_, T>) -> Mat<T> {
        let par = faer::get_global_parallelism();
        let n = self.n;
        let k = b.ncols();
        let mut d = b.to_owned();
        if let Some(tall) = &self.tall {
            apply_q_transpose(tall.Q_basis(), tall.Q_coeff(), d.as_mut());
            d = d.get(..n, ..).to_owned();
        }
        self.pivoted.apply_q_transpose(&mut d);

        let y;
        if self.rank == n {
            let mut top = d.get(..n, ..).to_owned();
            triangular_solve::solve_upper_triangular_in_place(
                self.r_full.as_ref().expect("full-rank factor kept").as_ref(),
                top.as_mut(),
                par,
            );
            y = top;
        } else if self.rank > 0 {
            let rz = self.completion.as_ref().expect("completion factor present");
            y = rz.solve(d.get(..self.rank, ..));
        } else {
            y = Mat::zeros(n, k);
        }
        self.pivoted.unpivot(y.as_ref())
    }
}

struct SvdFactors<T> {
    svd: Svd<T>,
    rank: usize,
    n: usize,
}

impl<T: Real> SvdFactors<T> {
    fn factor(a: MatRef<'_, T>, rtol: T) -> Result<Self, SolveError> {
        let svd = Svd::new_thin(a).map_err(|_| SolveError::SvdFailed)?;
        let s = svd.S();
        let size = s.dim();
        let smax = if size > 0 { s[0].abs() } else { T::zero() };
        let cutoff = rtol * smax;
        let mut rank = 0;
        while rank < size && s[rank].abs() > cutoff && s[rank] != T::zero() {
            rank += 1;
        }
        Ok(SvdFactors {
            svd,
            rank,
            n: a.ncols(),
        })
    }

    fn solve(&self, b: MatRef<'_, T>) -> Mat<T> {
        let par = faer::get_global_parallelism();
        let k = b.ncols();
        if self.rank == 0 {
            return Mat::zeros(self.n, k);
        }
        let u = self.svd.U().get(.., ..self.rank);
        let v = self.svd.V().get(.., ..self.rank);
        let s = self.svd.S();
        let mut tmp = Mat::<T>::zeros(self.rank, k);
        faer::linalg::matmul::matmul(tmp.as_mut(), faer::Accum::Replace, u.transpose(), b, T::one(), par);
        for j in 0..k {
            for i in 0..self.rank {
                tmp[(i, j)] = tmp[(i, j)] / s[i];
            }
        }
        let mut x = Mat::<T>::zeros(self.n, k);
        faer::linalg::matmul::matmul(x.as_mut(), faer::Accum::Replace, v, tmp.as_ref(), T::one(), par);
        x
    }
}

enum Factors<T> {
    Qr(QrFactors<T>),
    Svd(SvdFactors<T>),
}

impl<T: Real> Factors<T> {
    fn factor(a: MatRef<'_, T>, options: SolveOptions<T>) -> Result<Self, SolveError> {
        Ok(match options.backend {
            LstsqBackend::QrColPiv => Factors::Qr(QrFactors::factor(a, options.rtol)),
            LstsqBackend::Svd => Factors::Svd(SvdFactors::factor(a, options.rtol)?),
        })
    }

    fn rank(&self) -> usize {
        match self {
            Factors::Qr(f) => f.rank,
            Factors::Svd(f) => f.rank,
        }
    }

    fn solve(&self, b: MatRef<'_, T>) -> Mat<T> {
        match self {
            Factors::Qr(f) => f.solve(b),
            Factors::Svd(f) => f.solve(b),
        }
    }
}

/// Disjoint row/column groups whose rows touch no other columns (the
/// block-diagonal interior of the stacked system). Rows outside every group
/// couple the groups and pass through untouched.
#[derive(Debug, Clone, Default)]
pub struct BlockStructure {
    pub groups: Vec<(std::ops::Range<usize>, std::ops::Range<usize>)>,
}

/// Per-group orthogonal compression: the rows of each group are reduced to
/// their triangular factor before the global factorization, which shrinks
/// the expensive dense stages without changing the minimizer.
struct GroupCompression<T> {
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    qr: Qr<T>,
    reduced_rows: usize,
}

struct StructuredFactors<T> {
    groups: Vec<GroupCompression<T>>,
    coupling_rows: Vec<usize>,
    inner: Factors<T>,
}

impl<T: Real> StructuredFactors<T> {
    fn factor(
        a: MatRef<'_, T>,
        structure: &BlockStructure,
        options: SolveOptions<T>,
    ) -> Result<Self, SolveError> {
        let m = a.nrows();
        let n = a.ncols();
        let mut in_group = vec![false; m];
        for (rows, _) in &structure.groups {
            for i in rows.clone() {
                in_group[i] = true;
            }
        }
        let coupling_rows: Vec<usize> = (0..m).filter(|&i| !in_group[i]).collect();
        let groups: Vec<GroupCompression<T>> = structure
            .groups
            .par_iter()
            .map(|(rows, cols)| {
                let block = a.get(rows.clone(), cols.clone());
                let qr = Qr::new(block);
                GroupCompression {
                    rows: rows.clone(),
                    cols: cols.clone(),
                    reduced_rows: rows.len().min(cols.len()),
                    qr,
                }
            })
            .collect();
        let reduced_m: usize =
            groups.iter().map(|g| g.reduced_rows).sum::<usize>() + coupling_rows.len();
        let mut reduced = Mat::<T>::zeros(reduced_m, n);
        let mut at = 0;
        for g in &groups {
            reduced
                .get_mut(at..at + g.reduced_rows, g.cols.clone())
                .copy_from(g.qr.R().get(..g.reduced_rows, ..));
            at += g.reduced_rows;
        }
        for (k, &row) in coupling_rows.iter().enumerate() {
            for j in 0..n {
                reduced[(at + k, j)] = a[(row, j)];
            }
        }
        let inner = Factors::factor(reduced.as_ref(), options)?;
        Ok(StructuredFactors {
            groups,
            coupling_rows,
            inner,
        })
    }

    fn solve(&self, b: MatRef<'_, T>) -> Mat<T> {
        let k = b.ncols();
        let reduced_m: usize =
            self.groups.iter().map(|g| g.reduced_rows).sum::<usize>() + self.coupling_rows.len();
        let mut reduced = Mat::<T>::zeros(reduced_m, k);
        let mut at = 0;
        for g in &self.groups {
            let mut d = b.get(g.rows.clone(), ..).to_owned();
            apply_q_transpose(g.qr.Q_basis(), g.qr.Q_coeff(), d.as_mut());
            reduced
                .get_mut(at..at + g.reduced_rows, ..)
                .copy_from(d.get(..g.reduced_rows, ..));
            at += g.reduced_rows;
        }
        for (i, &row) in self.coupling_rows.iter().enumerate() {
            for c in 0..k {
                reduced[(at + i, c)] = b[(row, c)];
            }
        }
        self.inner.solve(reduced.as_ref())
    }
}

enum AnyFactors<T> {
    Plain(Factors<T>),
    Structured(StructuredFactors<T>),
}

/// A factorized system, reusable across right-hand sides.
pub struct CachedLstsq<T> {
    factors: AnyFactors<T>,
    n_rows: usize,
    n_cols: usize,
}

impl<T: Real> CachedLstsq<T> {
    pub fn factor(a: MatRef<'_, T>, options: SolveOptions<T>) -> Result<Self, SolveError> {
        check_finite(a, false)?;
        if a.nrows() < a.ncols() {
            eprintln!(
                "featflow: least-squares system has {} rows < {} columns; solution is not unique",
                a.nrows(),
                a.ncols()
            );
        }
        Ok(CachedLstsq {
            factors: AnyFactors::Plain(Factors::factor(a, options)?),
            n_rows: a.nrows(),
            n_cols: a.ncols(),
        })
    }

    /// Factors with per-group pre-compression of block-diagonal rows.
    pub fn factor_structured(
        a: MatRef<'_, T>,
        structure: &BlockStructure,
        options: SolveOptions<T>,
    ) -> Result<Self, SolveError> {
        if structure.groups.is_empty() {
            return Self::factor(a, options);
        }
        check_finite(a, false)?;
        Ok(CachedLstsq {
            factors: AnyFactors::Structured(StructuredFactors::factor(a, structure, options)?),
            n_rows: a.nrows(),
            n_cols: a.ncols(),
        })
    }

    pub fn rank(&self) -> usize {
        match &self.factors {
            AnyFactors::Plain(f) => f.rank(),
            AnyFactors::Structured(s) => s.inner.rank(),
        }
    }

    pub fn solve(&self, b: MatRef<'_, T>) -> Result<LstsqSolution<T>, SolveError> {
        if b.nrows() != self.n_rows {
            return Err(SolveError::ShapeMismatch {
                rows: self.n_rows,
                rhs_rows: b.nrows(),
            });
        }
        check_finite(b, true)?;
        let x = match &self.factors {
            AnyFactors::Plain(f) => f.solve(b),
            AnyFactors::Structured(s) => s.solve(b),
        };
        Ok(LstsqSolution {
            x,
            rank: self.rank(),
            n_cols: self.n_cols,
            underdetermined: self.n_rows < self.n_cols,
        })
    }
}

/// Minimizes `‖A·X − B‖_F` over all columns of `B` jointly.
pub fn solve_dense_lstsq<T: Real>(
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    options: SolveOptions<T>,
) -> Result<LstsqSolution<T>, SolveError> {
    if a.nrows() != b.nrows() {
        return Err(SolveError::ShapeMismatch {
            rows: a.nrows(),
            rhs_rows: b.nrows(),
        });
    }
    CachedLstsq::factor(a, options)?.solve(b)
}

/// Frobenius norm of `A·X − B` divided by the Frobenius norm of `B`
/// (absolute norm when `B` vanishes).
pub fn relative_residual<T: Real>(a: MatRef<'_, T>, x: MatRef<'_, T>, b: MatRef<'_, T>) -> T {
    let par = faer::get_global_parallelism();
    let mut r = b.to_owned();
    faer::linalg::matmul::matmul(r.as_mut(), faer::Accum::Add, a, x, -T::one(), par);
    let mut num = T::zero();
    zip!(&r).for_each(|unzip!(v)| num += *v * *v);
    let mut den = T::zero();
    zip!(&b).for_each(|unzip!(v)| den += *v * *v);
    if den > T::zero() {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}
