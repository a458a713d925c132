//! Atom-cavity dynamics: single transits, the pumped-cavity steady state,
//! a dense master-equation oracle and Monte Carlo trajectories.

pub mod oracle;
pub mod steady;
pub mod trajectory;
pub mod transit;

pub use oracle::{lindblad_steady_state_oracle, PumpModel, ORACLE_MAX_PHOTONS};
pub use steady::{
    micromaser_steady_state, micromaser_steady_state_for, InjectionModel, PhotonDistribution, RabiAngles,
    HARD_PHOTON_CAP, TAIL_BOUND,
};
pub use trajectory::{
    single_transit, trajectory_ensemble, trajectory_simulate, EnsembleResult, Event, EventKind, FixedPath,
    PathSampler, SimRng, TrajectoryConfig, TrajectoryResult, TransitOutcome,
};
pub use transit::{
    effective_interaction_time, emission_probability, transit_amplitude_vs_detuning, AtomPath, TransitProfile,
    LINEAR_REGIME_LIMIT,
};
