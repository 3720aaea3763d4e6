//! Cost of a mixed priority strategy and its constrained minimizer.
//!
//! The cost of operating at mixing parameter `alpha` is the Euclidean norm of
//! the mixed waiting-time vector, which trades the interference conceded to
//! the primary against the secondary's quality of service. Squaring the norm
//! gives a quadratic in `alpha` whose minimizer is clamped to the feasible
//! interval.

use serde::Serialize;

use crate::conservation::RegionVertices;
use crate::error::{Error, Result};
use crate::scalar::{num, Scalar};
use crate::synthesis::{mixed_waiting, FeasibleInterval};

/// Coefficients of the squared cost `c1 * alpha^2 - c2 * alpha + c3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostCoefficients<F> {
    pub c1: F,
    pub c2: F,
    pub c3: F,
}

/// Where the constrained minimizer landed relative to the feasible interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Clamped {
    /// The unconstrained minimizer sat below the interval.
    Lower,
    /// The unconstrained minimizer sat above the interval.
    Upper,
    /// The unconstrained minimizer was feasible as-is.
    Interior,
}

/// Constrained cost minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalMix<F> {
    pub alpha_min: F,
    /// Unconstrained quadratic minimizer; may lie outside [0, 1].
    pub beta_unconstrained: F,
    pub cost_at_min: F,
    pub clamped: Clamped,
}

/// Euclidean norm of the mixed waiting-time vector at `alpha`.
pub fn cost<F: Scalar>(v: &RegionVertices<F>, alpha: F) -> Result<F> {
    let (w_pu, w_su) = mixed_waiting(v, alpha)?;
    Ok(w_pu.hypot(w_su))
}

/// Quadratic coefficients of the squared cost.
pub fn coefficients<F: Scalar>(v: &RegionVertices<F>) -> CostCoefficients<F> {
    let pu_span = v.b - v.a;
    let su_span = v.c - v.d;
    let two = num::<F>(2.0);
    CostCoefficients {
        c1: pu_span * pu_span + su_span * su_span,
        c2: two * (v.b * pu_span - v.d * su_span),
        c3: v.b * v.b + v.d * v.d,
    }
}

/// Unconstrained minimizer `beta = c2 / (2 c1)` of the squared cost. May be
/// negative, positive, or zero.
pub fn unconstrained_minimizer<F: Scalar>(coeffs: &CostCoefficients<F>) -> Result<F> {
    if coeffs.c1 <= F::zero() || coeffs.c1.is_nan() {
        return Err(Error::DegenerateRegion);
    }
    Ok(coeffs.c2 / (num::<F>(2.0) * coeffs.c1))
}

/// Clamps the unconstrained minimizer to a feasible interval. Ties at the
/// interval endpoints resolve to `Interior` with `alpha_min = beta`.
pub fn optimal_alpha<F: Scalar>(
    v: &RegionVertices<F>,
    interval: &FeasibleInterval<F>,
) -> Result<OptimalMix<F>> {
    if !interval.feasible {
        return Err(Error::InfeasibleThresholds);
    }
    let beta = unconstrained_minimizer(&coefficients(v))?;
    let (alpha_min, clamped) = if beta < interval.a1 {
        (interval.a1, Clamped::Lower)
    } else if beta > interval.a2 {
        (interval.a2, Clamped::Upper)
    } else {
        (beta, Clamped::Interior)
    };
    Ok(OptimalMix {
        alpha_min,
        beta_unconstrained: beta,
        cost_at_min: cost(v, alpha_min)?,
        clamped,
    })
}

/// Samples `(alpha, cost)` pairs uniformly across the feasible interval.
pub fn cost_curve<F: Scalar>(
    v: &RegionVertices<F>,
    interval: &FeasibleInterval<F>,
    samples: usize,
) -> Result<Vec<(F, F)>> {
    if !interval.feasible {
        return Err(Error::InfeasibleThresholds);
    }
    if samples < 2 {
        return Err(Error::InvalidParameter(
            "cost curve needs at least two samples".into(),
        ));
    }
    let span = interval.a2 - interval.a1;
    let step = span / num::<F>((samples - 1) as f64);
    let mut curve = Vec::with_capacity(samples);
    for k in 0..samples {
        let alpha = if k == samples - 1 {
            interval.a2
        } else {
            interval.a1 + num::<F>(k as f64) * step
        };
        curve.push((alpha, cost(v, alpha)?));
    }
    Ok(curve)
}
