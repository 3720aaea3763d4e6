//! Analytics and simulation for multi-channel cognitive radio networks
//! modeled as two-class, N-server preemptive-resume priority queues.
//!
//! The licensed (primary) users of `N` spectrum channels aggregate into one
//! high-priority class; the opportunistic (secondary) users form a
//! low-priority class that transmits on whatever channels the primaries leave
//! free and is preempted on their return. On top of that model the crate
//! provides:
//!
//! * [`model`]: network parameters, utilization and stability checks, and
//!   the rate transforms for access delay, sensing overhead, and
//!   detection/channel imperfections;
//! * [`mmn`]: closed-form M/M/N quantities for the primary class, which is
//!   oblivious to secondary traffic;
//! * [`ctmc`]: exact steady-state joint queue-length PMFs from the
//!   two-dimensional Markov chain on a truncated lattice;
//! * [`conservation`]: the invariant weighted delay sum and the closed-form
//!   performance vectors it yields under either priority ordering;
//! * [`synthesis`]: achievability of waiting-time thresholds and the
//!   feasible priority-mixing interval;
//! * [`optimize`]: the mixed-strategy cost and its clamped minimizer;
//! * [`sim`]: a discrete-event simulator (both the decoupled two-class
//!   model and the original coupled multi-station topology) serving as an
//!   independent oracle for every analytic result.
//!
//! All math is generic over the floating-point type through [`Scalar`];
//! `f64` aliases for the main types are exported at the crate root.
//!
//! ```
//! use crn_queues::{ClassParams64, NetworkModel64};
//!
//! let model = NetworkModel64::new(
//!     10,
//!     ClassParams64::new(0.3e4, 0.5e4).unwrap(), // primary: lambda, mu
//!     ClassParams64::new(4.0e4, 1.0e4).unwrap(), // secondary
//! )
//! .unwrap();
//! assert!(model.check_stability().is_stable());
//! let delay = crn_queues::mmn::total_delay(&model.pu, model.n_servers).unwrap();
//! assert!((delay - 2.0e-4).abs() < 1e-9);
//! ```

pub mod conservation;
pub mod ctmc;
pub mod error;
pub mod mmn;
pub mod model;
pub mod optimize;
pub mod scalar;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Version comment placed on the first line of every CSV this crate emits.
pub const CSV_VERSION_HEADER: &str = "# crn-queues v1";

// Concrete f64 aliases for the main domain types.
pub type ClassParams64 = model::ClassParams<f64>;
pub type NetworkModel64 = model::NetworkModel<f64>;
pub type AccessTiming64 = model::AccessTiming<f64>;
pub type SensingConfig64 = model::SensingConfig<f64>;
pub type ImperfectionConfig64 = model::ImperfectionConfig<f64>;
pub type MmnResult64 = mmn::MmnResult<f64>;
pub type TruncationSpec64 = ctmc::TruncationSpec<f64>;
pub type JointPmf64 = ctmc::JointPmf<f64>;
pub type PerformanceVector64 = conservation::PerformanceVector<f64>;
pub type RegionVertices64 = conservation::RegionVertices<f64>;
pub type Thresholds64 = synthesis::Thresholds<f64>;
pub type FeasibleInterval64 = synthesis::FeasibleInterval<f64>;
pub type FrontierPoint64 = synthesis::FrontierPoint<f64>;
pub type OptimalMix64 = optimize::OptimalMix<f64>;
pub type SimEstimate64 = sim::SimEstimate<f64>;
pub type CoupledSpec64 = sim::CoupledSpec<f64>;
