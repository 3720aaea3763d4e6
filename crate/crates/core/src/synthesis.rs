//! Achievable-region synthesis: given waiting-time thresholds for both
//! classes, decide whether some priority mixing satisfies them, characterize
//! the feasible mixing interval, and locate the frontier point that gives the
//! secondary the best waiting time the primary constraint allows.
//!
//! The mixing parameter `alpha` is the fraction of priority granted to the
//! primary class: `alpha = 1` is the primary-priority vertex `(a, c)`,
//! `alpha = 0` the secondary-priority vertex `(b, d)`.

use serde::{Deserialize, Serialize};

use crate::conservation::RegionVertices;
use crate::error::{Error, Result};
use crate::scalar::{as_f64, Scalar};

/// Waiting-time targets for the two classes, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds<F> {
    pub th_pu: F,
    pub th_su: F,
}

impl<F: Scalar> Thresholds<F> {
    pub fn new(th_pu: F, th_su: F) -> Result<Self> {
        for (name, th) in [("primary", th_pu), ("secondary", th_su)] {
            if !th.is_finite() || th <= F::zero() {
                return Err(Error::InvalidParameter(format!(
                    "{name} threshold {th} must be finite and > 0"
                )));
            }
        }
        Ok(Self { th_pu, th_su })
    }
}

/// Mixing-parameter interval satisfying both thresholds. `a1` comes from the
/// primary constraint (lower end), `a2` from the secondary constraint (upper
/// end). Feasibility is decided on open intervals; an interval that collapses
/// to a single point is reported infeasible with `boundary` set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibleInterval<F> {
    pub a1: F,
    pub a2: F,
    pub feasible: bool,
    pub boundary: bool,
}

/// Best-for-the-secondary operating point when the primary threshold binds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontierPoint<F> {
    /// Secondary waiting time at the frontier.
    pub eta: F,
    /// Slope of the mixing segment, `(c - d) / (b - a)`.
    pub slope: F,
    /// Extra primary waiting time conceded when the secondary threshold sits
    /// between the frontier and the primary-priority vertex; zero when the
    /// secondary constraint never binds; absent when the thresholds are
    /// jointly infeasible.
    pub excess_delay_pu: Option<F>,
}

/// Outcome of solving the mixing equation for a target waiting-time vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum AlphaForTarget<F> {
    /// The target lies on the mixing segment; this is its unique alpha.
    OnSegment { alpha: F },
    /// The per-coordinate alphas disagree: the target is off the segment.
    OffSegment { alpha_pu: F, alpha_su: F },
}

fn check_alpha<F: Scalar>(alpha: F) -> Result<()> {
    if !(alpha >= F::zero() && alpha <= F::one()) {
        return Err(Error::AlphaOutOfRange(as_f64(alpha)));
    }
    Ok(())
}

/// Waiting times of both classes under mixing parameter `alpha`.
pub fn mixed_waiting<F: Scalar>(v: &RegionVertices<F>, alpha: F) -> Result<(F, F)> {
    check_alpha(alpha)?;
    let complement = F::one() - alpha;
    Ok((
        alpha * v.a + complement * v.b,
        alpha * v.c + complement * v.d,
    ))
}

/// The mixing-parameter interval `(a1, a2)` induced by the thresholds.
///
/// `a1` is clamped below at 0 (a primary threshold above `b` binds nowhere)
/// and `a2` above at 1 (a secondary threshold above `c` binds nowhere), so
/// non-binding thresholds yield sensible intervals instead of out-of-range
/// endpoints. Infeasibility is an answer, not an error.
pub fn feasible_interval<F: Scalar>(
    v: &RegionVertices<F>,
    th: &Thresholds<F>,
) -> FeasibleInterval<F> {
    let a1_raw = (v.b - th.th_pu) / (v.b - v.a);
    let a2_raw = (th.th_su - v.d) / (v.c - v.d);
    let a1 = a1_raw.max(F::zero());
    let a2 = a2_raw.min(F::one());
    let feasible = a1 < a2;
    let boundary = !feasible && a1 == a2 && a2 > F::zero() && a1 < F::one();
    FeasibleInterval {
        a1,
        a2,
        feasible,
        boundary,
    }
}

/// Relative tolerance for deciding that a target lies on the mixing segment.
pub const ON_SEGMENT_TOLERANCE: f64 = 1e-9;

/// Solves the mixing equation for a target `(w_pu, w_su)` vector.
///
/// Each coordinate determines its own alpha; the target is on the segment
/// only when the two agree (within [`ON_SEGMENT_TOLERANCE`], relative, per
/// coordinate) and the common value lies in [0, 1].
pub fn unique_alpha_for_target<F: Scalar>(
    v: &RegionVertices<F>,
    target: (F, F),
) -> Result<AlphaForTarget<F>> {
    if v.b - v.a == F::zero() && v.c - v.d == F::zero() {
        return Err(Error::DegenerateRegion);
    }
    let (w_pu, w_su) = target;
    let alpha_pu = (v.b - w_pu) / (v.b - v.a);
    let alpha_su = (w_su - v.d) / (v.c - v.d);
    let tol = F::from_f64(ON_SEGMENT_TOLERANCE).unwrap();
    // Agreement is judged on the reconstructed coordinates so the tolerance
    // is relative to the waiting times, not to alpha.
    let w_su_back = alpha_pu * v.c + (F::one() - alpha_pu) * v.d;
    let w_pu_back = alpha_su * v.a + (F::one() - alpha_su) * v.b;
    let pu_scale = w_pu.abs().max(v.b.abs());
    let su_scale = w_su.abs().max(v.c.abs());
    let coordinates_agree =
        (w_su_back - w_su).abs() <= tol * su_scale && (w_pu_back - w_pu).abs() <= tol * pu_scale;
    let in_range = alpha_pu >= -tol && alpha_pu <= F::one() + tol;
    if coordinates_agree && in_range {
        Ok(AlphaForTarget::OnSegment {
            alpha: alpha_pu.max(F::zero()).min(F::one()),
        })
    } else {
        Ok(AlphaForTarget::OffSegment { alpha_pu, alpha_su })
    }
}

/// Frontier point for a binding primary threshold `th_pu` in `(a, b)`.
pub fn frontier_point<F: Scalar>(
    v: &RegionVertices<F>,
    th: &Thresholds<F>,
) -> Result<FrontierPoint<F>> {
    if th.th_pu <= v.a {
        return Err(Error::PuThresholdImpossible {
            th_pu: as_f64(th.th_pu),
            vertex_a: as_f64(v.a),
        });
    }
    if th.th_pu >= v.b {
        return Err(Error::PuThresholdNonBinding {
            th_pu: as_f64(th.th_pu),
            vertex_b: as_f64(v.b),
        });
    }
    let slope = (v.c - v.d) / (v.b - v.a);
    let eta = slope * (v.b - th.th_pu) + v.d;
    let excess_delay_pu = if th.th_su >= v.c {
        Some(F::zero())
    } else if th.th_su > eta {
        Some((v.c - th.th_su) / slope)
    } else {
        None
    };
    Ok(FrontierPoint {
        eta,
        slope,
        excess_delay_pu,
    })
}

/// One labeled point of the region polyline export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionPoint<F> {
    pub label: &'static str,
    pub w_pu: F,
    pub w_su: F,
}

/// Candidate corners of the constrained achievable region, for plotting.
/// Emits the two priority vertices, the threshold crossings of the mixing
/// segment, the threshold corner, and the frontier point when the primary
/// threshold binds; consumers clip against the threshold lines themselves.
pub fn region_polyline<F: Scalar>(
    v: &RegionVertices<F>,
    th: &Thresholds<F>,
) -> Vec<RegionPoint<F>> {
    let mut points = vec![
        RegionPoint {
            label: "vertex_pu_priority",
            w_pu: v.a,
            w_su: v.c,
        },
        RegionPoint {
            label: "vertex_su_priority",
            w_pu: v.b,
            w_su: v.d,
        },
        RegionPoint {
            label: "threshold_corner",
            w_pu: th.th_pu,
            w_su: th.th_su,
        },
    ];
    let interval = feasible_interval(v, th);
    for (label, alpha) in [
        ("segment_at_pu_threshold", interval.a1),
        ("segment_at_su_threshold", interval.a2),
    ] {
        if let Ok((w_pu, w_su)) = mixed_waiting(v, alpha) {
            points.push(RegionPoint { label, w_pu, w_su });
        }
    }
    if let Ok(frontier) = frontier_point(v, th) {
        points.push(RegionPoint {
            label: "frontier",
            w_pu: th.th_pu,
            w_su: frontier.eta,
        });
    }
    points
}
