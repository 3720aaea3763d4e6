//! The two-dimensional continuous-time Markov chain over states
//! `(i, j)` = (primary packets in system, secondary packets in system),
//! its truncated stationary solve, and the PMFs/moments/delays extracted
//! from it.
//!
//! Transitions out of `(i, j)`:
//!
//! * `(i, j+1)` at `lambda_su`: secondary arrival;
//! * `(i+1, j)` at `lambda_pu`: primary arrival;
//! * `(i, j-1)` at `mu_su * min(j, max(N-i, 0))`: secondary departures run
//!   only on servers the primary class leaves free;
//! * `(i-1, j)` at `mu_pu * min(i, N)`: primary departures.
//!
//! The infinite lattice is truncated by dropping arrival transitions at the
//! boundary (reflecting truncation), which keeps the truncated generator a
//! proper CTMC; the mass observed on the boundary is recorded so callers can
//! judge the truncation quality.
//!
//! The solve sweeps secondary-count levels with block elimination (each level
//! couples only to its neighbours), then falls back to Gauss-Seidel sweeps in
//! the rare case the direct pass misses the requested balance residual.

use nalgebra::{DMatrix, DVector, RealField, RowDVector};
use num_traits::Float;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::NetworkModel;
use crate::scalar::{as_f64, count, num, Scalar};

/// Default bound on the stationary mass allowed outside the truncated lattice.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-9;

/// Default bound on the state-wise global-balance residual, in units of
/// probability mass flow (probability x rate).
pub const DEFAULT_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Hard cap on each truncation axis during the adaptive search.
pub const DEFAULT_AXIS_CAP: usize = 16384;

/// Budget of polish sweeps before the solver gives up.
pub const SWEEP_BUDGET: u64 = 1_000_000;

// The level-elimination pass stores one dense block per level; refuse
// lattices whose block storage would exceed this many scalars (~1 GiB f64).
const MAX_BLOCK_SCALARS: u64 = 1 << 27;

/// Truncation bounds plus the tail mass they are supposed to respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec<F> {
    pub i_max: usize,
    pub j_max: usize,
    pub tail_tolerance: F,
}

impl<F: Scalar> TruncationSpec<F> {
    pub fn validate(&self, n_servers: u32) -> Result<()> {
        let n = n_servers as usize;
        if self.i_max < n || self.j_max < n {
            return Err(Error::InvalidParameter(format!(
                "truncation bounds ({}, {}) must be at least the server count {n}",
                self.i_max, self.j_max
            )));
        }
        let tol = self.tail_tolerance;
        if tol.is_nan() || tol <= F::zero() || tol > num(1e-3) {
            return Err(Error::InvalidParameter(format!(
                "tail tolerance {tol} must lie in (0, 1e-3]"
            )));
        }
        Ok(())
    }
}

/// Truncated stationary distribution over `(i, j)`.
///
/// Probabilities are stored row-major by `i` then `j`, and every serialized
/// form iterates in that order, so equal inputs produce bit-identical files.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf<F> {
    probs: Vec<F>,
    trunc: TruncationSpec<F>,
    achieved_tail_mass: F,
    model: NetworkModel<F>,
}

/// Per-class mean total delays read off a stationary distribution; a class
/// with no arrivals has no defined delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassDelays<F> {
    pub pu: Option<F>,
    pub su: Option<F>,
}

impl<F: Scalar> JointPmf<F> {
    pub fn i_max(&self) -> usize {
        self.trunc.i_max
    }

    pub fn j_max(&self) -> usize {
        self.trunc.j_max
    }

    pub fn truncation(&self) -> &TruncationSpec<F> {
        &self.trunc
    }

    /// Stationary mass observed on the outer boundary of the lattice.
    pub fn achieved_tail_mass(&self) -> F {
        self.achieved_tail_mass
    }

    pub fn model(&self) -> &NetworkModel<F> {
        &self.model
    }

    pub fn p(&self, i: usize, j: usize) -> F {
        self.probs[i * (self.trunc.j_max + 1) + j]
    }

    pub fn total_mass(&self) -> F {
        self.probs.iter().copied().sum()
    }

    /// Row/column sums: `(primary marginal, secondary marginal)`.
    pub fn marginals(&self) -> (Vec<F>, Vec<F>) {
        let cols = self.trunc.j_max + 1;
        let mut pu = vec![F::zero(); self.trunc.i_max + 1];
        let mut su = vec![F::zero(); cols];
        for (i, row) in self.probs.chunks(cols).enumerate() {
            for (j, &p) in row.iter().enumerate() {
                pu[i] += p;
                su[j] += p;
            }
        }
        (pu, su)
    }

    /// Mean primary packet count.
    pub fn mean_pu(&self) -> F {
        let (pu, _) = self.marginals();
        pu.iter()
            .enumerate()
            .map(|(i, &p)| count::<F>(i) * p)
            .sum()
    }

    /// Mean secondary packet count.
    pub fn mean_su(&self) -> F {
        let (_, su) = self.marginals();
        su.iter()
            .enumerate()
            .map(|(j, &p)| count::<F>(j) * p)
            .sum()
    }

    /// Mean total delays via Little's law on each class.
    pub fn delays(&self) -> ClassDelays<F> {
        let pu = (self.model.pu.lambda > F::zero()).then(|| self.mean_pu() / self.model.pu.lambda);
        let su = (self.model.su.lambda > F::zero()).then(|| self.mean_su() / self.model.su.lambda);
        ClassDelays { pu, su }
    }

    /// Writes `i,j,p` triples, row-major, behind the versioned header.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", crate::CSV_VERSION_HEADER)?;
        writeln!(out, "i,j,p")?;
        let cols = self.trunc.j_max + 1;
        for i in 0..=self.trunc.i_max {
            for j in 0..cols {
                writeln!(out, "{},{},{}", i, j, self.probs[i * cols + j])?;
            }
        }
        Ok(())
    }
}

impl<F: Scalar + Serialize> Serialize for JointPmf<F> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let cols = self.trunc.j_max + 1;
        let rows: Vec<&[F]> = self.probs.chunks(cols).collect();
        let mut s = serializer.serialize_struct("JointPmf", 4)?;
        s.serialize_field("model", &self.model)?;
        s.serialize_field("truncation", &self.trunc)?;
        s.serialize_field("achieved_tail_mass", &self.achieved_tail_mass)?;
        s.serialize_field("probabilities", &rows)?;
        s.end()
    }
}

fn pu_service_rate<F: Scalar>(model: &NetworkModel<F>, i: usize) -> F {
    model.pu.mu * count::<F>(i.min(model.n_servers as usize))
}

fn su_service_rate<F: Scalar>(model: &NetworkModel<F>, i: usize, j: usize) -> F {
    let free = (model.n_servers as usize).saturating_sub(i);
    model.su.mu * count::<F>(j.min(free))
}

/// Outgoing transitions of `(i, j)` on the infinite lattice, omitting
/// zero-rate and out-of-domain entries.
pub fn transition_rates<F: Scalar>(
    state: (usize, usize),
    model: &NetworkModel<F>,
) -> Vec<((usize, usize), F)> {
    let (i, j) = state;
    let mut out = Vec::with_capacity(4);
    if model.su.lambda > F::zero() {
        out.push(((i, j + 1), model.su.lambda));
    }
    if model.pu.lambda > F::zero() {
        out.push(((i + 1, j), model.pu.lambda));
    }
    if j > 0 {
        let rate = su_service_rate(model, i, j);
        if rate > F::zero() {
            out.push(((i, j - 1), rate));
        }
    }
    if i > 0 {
        let rate = pu_service_rate(model, i);
        if rate > F::zero() {
            out.push(((i - 1, j), rate));
        }
    }
    out
}

/// Total outflow rate of `(i, j)` on the lattice truncated at
/// `(i_max, j_max)` (boundary arrivals removed).
fn truncated_outflow<F: Scalar>(
    model: &NetworkModel<F>,
    i: usize,
    j: usize,
    i_max: usize,
    j_max: usize,
) -> F {
    let mut rate = F::zero();
    if j < j_max {
        rate += model.su.lambda;
    }
    if i < i_max {
        rate += model.pu.lambda;
    }
    if j > 0 {
        rate += su_service_rate(model, i, j);
    }
    if i > 0 {
        rate += pu_service_rate(model, i);
    }
    rate
}

/// Raw level-elimination solve. Returns the normalized stationary vector,
/// flat row-major by `i` then `j`.
fn solve_levels<F: Scalar + RealField>(
    model: &NetworkModel<F>,
    i_max: usize,
    j_max: usize,
) -> Result<Vec<F>> {
    let phases = i_max + 1;
    let levels = j_max + 1;
    if (levels as u64) * (phases as u64) * (phases as u64) > MAX_BLOCK_SCALARS {
        return Err(Error::TruncationCapExceeded {
            achieved_tail_mass: f64::NAN,
            tail_tolerance: f64::NAN,
        });
    }
    let lambda_su = model.su.lambda;

    // Local block of level j: primary birth-death plus the diagonal of total
    // outflow (including the level-coupling rates removed at the borders).
    let local_block = |j: usize| -> DMatrix<F> {
        let mut block = DMatrix::zeros(phases, phases);
        for i in 0..phases {
            if i < i_max {
                block[(i, i + 1)] = model.pu.lambda;
            }
            if i > 0 {
                block[(i, i - 1)] = pu_service_rate(model, i);
            }
            block[(i, i)] = -truncated_outflow(model, i, j, i_max, j_max);
        }
        block
    };
    // Diagonal of the down-block of level j (secondary departures).
    let down_diag = |j: usize| -> Vec<F> {
        (0..phases).map(|i| su_service_rate(model, i, j)).collect()
    };

    // Backward elimination: express each level in terms of the one below.
    // ratio[j] (for j >= 1) maps level j-1 onto level j.
    let mut ratio: Vec<DMatrix<F>> = Vec::with_capacity(j_max);
    if lambda_su > F::zero() {
        let mut above: Option<DMatrix<F>> = None;
        for j in (1..=j_max).rev() {
            let mut m = -local_block(j);
            if let Some(r_above) = &above {
                let down = down_diag(j + 1);
                // m -= ratio_above * diag(down)
                for c in 0..phases {
                    if down[c] > F::zero() {
                        for r in 0..phases {
                            let delta = r_above[(r, c)] * down[c];
                            m[(r, c)] -= delta;
                        }
                    }
                }
            }
            let inv = m
                .lu()
                .try_inverse()
                .ok_or(Error::SolverDidNotConverge {
                    residual: f64::NAN,
                    tolerance: f64::NAN,
                })?;
            let r = inv * lambda_su;
            ratio.push(r.clone());
            above = Some(r);
        }
        ratio.reverse(); // ratio[j - 1] now maps level j-1 -> level j
    }

    // Censored generator of level 0; its left null vector is pi_0.
    let mut censored = local_block(0);
    if let Some(r1) = ratio.first() {
        let down = down_diag(1);
        for c in 0..phases {
            if down[c] > F::zero() {
                for r in 0..phases {
                    let delta = r1[(r, c)] * down[c];
                    censored[(r, c)] += delta;
                }
            }
        }
    }
    let mut system = censored.transpose();
    for c in 0..phases {
        system[(0, c)] = F::one();
    }
    let mut rhs = DVector::zeros(phases);
    rhs[0] = F::one();
    let pi_0 = system.lu().solve(&rhs).ok_or(Error::SolverDidNotConverge {
        residual: f64::NAN,
        tolerance: f64::NAN,
    })?;

    // Forward pass: roll pi up level by level, then normalize.
    let mut level = RowDVector::from_iterator(phases, pi_0.iter().copied());
    let mut flat = vec![F::zero(); phases * levels];
    let store = |flat: &mut Vec<F>, level: &RowDVector<F>, j: usize| {
        for i in 0..phases {
            flat[i * levels + j] = level[i];
        }
    };
    store(&mut flat, &level, 0);
    for j in 1..=j_max {
        if let Some(r) = ratio.get(j - 1) {
            level = &level * r;
        } else {
            level = RowDVector::zeros(phases);
        }
        store(&mut flat, &level, j);
    }

    for p in flat.iter_mut() {
        if *p < F::zero() {
            *p = F::zero();
        }
    }
    let total: F = flat.iter().copied().sum();
    if !Float::is_finite(total) || total <= F::zero() {
        return Err(Error::SolverDidNotConverge {
            residual: f64::NAN,
            tolerance: f64::NAN,
        });
    }
    for p in flat.iter_mut() {
        *p /= total;
    }
    Ok(flat)
}

/// State-wise global-balance residual `max |inflow - outflow|` of the
/// truncated chain, in probability-flow units.
fn balance_residual<F: Scalar>(
    model: &NetworkModel<F>,
    probs: &[F],
    i_max: usize,
    j_max: usize,
) -> F {
    let cols = j_max + 1;
    let mut worst = F::zero();
    for i in 0..=i_max {
        for j in 0..cols {
            let outflow = probs[i * cols + j] * truncated_outflow(model, i, j, i_max, j_max);
            let mut inflow = F::zero();
            if j > 0 {
                inflow += probs[i * cols + j - 1] * model.su.lambda;
            }
            if i > 0 {
                inflow += probs[(i - 1) * cols + j] * model.pu.lambda;
            }
            if j < j_max {
                inflow += probs[i * cols + j + 1] * su_service_rate(model, i, j + 1);
            }
            if i < i_max {
                inflow += probs[(i + 1) * cols + j] * pu_service_rate(model, i + 1);
            }
            let gap = Float::abs(inflow - outflow);
            if gap > worst {
                worst = gap;
            }
        }
    }
    worst
}

/// One Gauss-Seidel sweep in fixed lexicographic order, followed by
/// renormalization.
fn polish_sweep<F: Scalar>(model: &NetworkModel<F>, probs: &mut [F], i_max: usize, j_max: usize) {
    let cols = j_max + 1;
    for i in 0..=i_max {
        for j in 0..cols {
            let outflow_rate = truncated_outflow(model, i, j, i_max, j_max);
            if outflow_rate <= F::zero() {
                continue;
            }
            let mut inflow = F::zero();
            if j > 0 {
                inflow += probs[i * cols + j - 1] * model.su.lambda;
            }
            if i > 0 {
                inflow += probs[(i - 1) * cols + j] * model.pu.lambda;
            }
            if j < j_max {
                inflow += probs[i * cols + j + 1] * su_service_rate(model, i, j + 1);
            }
            if i < i_max {
                inflow += probs[(i + 1) * cols + j] * pu_service_rate(model, i + 1);
            }
            probs[i * cols + j] = inflow / outflow_rate;
        }
    }
    let total: F = probs.iter().copied().sum();
    if total > F::zero() {
        for p in probs.iter_mut() {
            *p /= total;
        }
    }
}

fn boundary_mass<F: Scalar>(probs: &[F], i_max: usize, j_max: usize) -> (F, F, F) {
    let cols = j_max + 1;
    let mut row = F::zero();
    for j in 0..cols {
        row += probs[i_max * cols + j];
    }
    let mut col = F::zero();
    for i in 0..=i_max {
        col += probs[i * cols + j_max];
    }
    // Union of the two boundary strips (corner counted once).
    let union = row + col - probs[i_max * cols + j_max];
    (row, col, union)
}

/// Enforces the residual tolerance on a solved distribution, polishing with
/// Gauss-Seidel sweeps when the direct pass is not quite there.
fn enforce_residual<F: Scalar>(
    model: &NetworkModel<F>,
    probs: &mut [F],
    i_max: usize,
    j_max: usize,
    residual_tolerance: F,
) -> Result<()> {
    let mut residual = balance_residual(model, probs, i_max, j_max);
    if residual <= residual_tolerance {
        return Ok(());
    }
    let mut sweeps: u64 = 0;
    let mut last_checked = residual;
    while sweeps < SWEEP_BUDGET {
        for _ in 0..8 {
            polish_sweep(model, probs, i_max, j_max);
            sweeps += 1;
        }
        residual = balance_residual(model, probs, i_max, j_max);
        if residual <= residual_tolerance {
            return Ok(());
        }
        // Bail out once the sweeps stop making progress: the residual has
        // hit its numerical floor for this lattice.
        if residual > last_checked * num(0.9999) {
            break;
        }
        last_checked = residual;
    }
    Err(Error::SolverDidNotConverge {
        residual: as_f64(residual),
        tolerance: as_f64(residual_tolerance),
    })
}

fn solve_checked<F: Scalar + RealField>(
    model: &NetworkModel<F>,
    i_max: usize,
    j_max: usize,
    residual_tolerance: F,
) -> Result<Vec<F>> {
    let mut probs = solve_levels(model, i_max, j_max)?;
    enforce_residual(model, &mut probs, i_max, j_max, residual_tolerance)?;
    Ok(probs)
}

/// Solves the stationary distribution on an explicitly chosen truncation.
///
/// The returned probabilities are nonnegative, sum to one, satisfy global
/// balance within `residual_tolerance` state-wise, and leave less than the
/// spec's tail tolerance on the lattice boundary (otherwise
/// [`Error::TruncationInsufficient`] reports the achieved mass). The result
/// is deterministic for fixed inputs.
pub fn stationary_distribution<F: Scalar + RealField>(
    model: &NetworkModel<F>,
    trunc: &TruncationSpec<F>,
    residual_tolerance: F,
) -> Result<JointPmf<F>> {
    model.validate()?;
    model.require_stable()?;
    trunc.validate(model.n_servers)?;
    if residual_tolerance <= F::zero() || Float::is_nan(residual_tolerance) {
        return Err(Error::InvalidParameter(format!(
            "residual tolerance {residual_tolerance} must be > 0"
        )));
    }
    let probs = solve_checked(model, trunc.i_max, trunc.j_max, residual_tolerance)?;
    let (_, _, union) = boundary_mass(&probs, trunc.i_max, trunc.j_max);
    if union >= trunc.tail_tolerance {
        return Err(Error::TruncationInsufficient {
            achieved_tail_mass: as_f64(union),
            tail_tolerance: as_f64(trunc.tail_tolerance),
        });
    }
    Ok(JointPmf {
        probs,
        trunc: *trunc,
        achieved_tail_mass: union,
        model: *model,
    })
}

/// Adaptive solve: grows the lattice by doubling whichever axis still holds
/// too much boundary mass until the tail tolerance is met, then enforces the
/// residual tolerance on the final lattice.
pub fn solve_adaptive<F: Scalar + RealField>(
    model: &NetworkModel<F>,
    tail_tolerance: F,
    residual_tolerance: F,
) -> Result<JointPmf<F>> {
    solve_adaptive_with_cap(model, tail_tolerance, residual_tolerance, DEFAULT_AXIS_CAP)
}

/// [`solve_adaptive`] with an explicit per-axis hard cap.
pub fn solve_adaptive_with_cap<F: Scalar + RealField>(
    model: &NetworkModel<F>,
    tail_tolerance: F,
    residual_tolerance: F,
    axis_cap: usize,
) -> Result<JointPmf<F>> {
    model.validate()?;
    model.require_stable()?;
    if tail_tolerance.is_nan() || tail_tolerance <= F::zero() || tail_tolerance > num(1e-3) {
        return Err(Error::InvalidParameter(format!(
            "tail tolerance {tail_tolerance} must lie in (0, 1e-3]"
        )));
    }
    if axis_cap < model.n_servers as usize {
        return Err(Error::InvalidParameter(format!(
            "axis cap {axis_cap} must be at least the server count {}",
            model.n_servers
        )));
    }
    let start = (model.n_servers as usize + 2).max(8);
    let mut i_max = start.min(axis_cap);
    let mut j_max = start.min(axis_cap);
    let half = tail_tolerance / num(2.0);
    loop {
        let mut probs = solve_levels(model, i_max, j_max)?;
        let (row, col, union) = boundary_mass(&probs, i_max, j_max);
        if union < tail_tolerance {
            enforce_residual(model, &mut probs, i_max, j_max, residual_tolerance)?;
            let (_, _, union) = boundary_mass(&probs, i_max, j_max);
            return Ok(JointPmf {
                probs,
                trunc: TruncationSpec {
                    i_max,
                    j_max,
                    tail_tolerance,
                },
                achieved_tail_mass: union,
                model: *model,
            });
        }
        let grow_i = row >= half;
        let grow_j = col >= half;
        let (next_i, next_j) = (
            if grow_i || !grow_j { i_max * 2 } else { i_max },
            if grow_j || !grow_i { j_max * 2 } else { j_max },
        );
        if next_i > axis_cap || next_j > axis_cap {
            return Err(Error::TruncationCapExceeded {
                achieved_tail_mass: as_f64(union),
                tail_tolerance: as_f64(tail_tolerance),
            });
        }
        i_max = next_i;
        j_max = next_j;
    }
}

/// Finds truncation bounds capturing at least `1 - tail_tolerance` of the
/// stationary mass, by doubling from a near-minimal lattice.
pub fn choose_truncation<F: Scalar + RealField>(
    model: &NetworkModel<F>,
    tail_tolerance: F,
) -> Result<TruncationSpec<F>> {
    solve_adaptive(model, tail_tolerance, num(DEFAULT_RESIDUAL_TOLERANCE)).map(|pmf| pmf.trunc)
}

/// State-wise global-balance residual `max |inflow - outflow|` of a solved
/// distribution on its truncated lattice, in probability-flow units
/// (probability x rate).
pub fn global_balance_residual<F: Scalar>(pmf: &JointPmf<F>) -> F {
    balance_residual(&pmf.model, &pmf.probs, pmf.trunc.i_max, pmf.trunc.j_max)
}

/// Free-function form of [`JointPmf::marginals`].
pub fn marginals<F: Scalar>(pmf: &JointPmf<F>) -> (Vec<F>, Vec<F>) {
    pmf.marginals()
}

/// Free-function form of [`JointPmf::delays`].
pub fn delays_from_pmf<F: Scalar>(pmf: &JointPmf<F>) -> ClassDelays<F> {
    pmf.delays()
}
