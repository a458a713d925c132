//! Synthetic experiment: atoms from a nanohole array crossing the cavity
//! mode, and the resulting cavity output versus array position or detuning.

mod aperture;
mod scan;

pub use aperture::{
    de_broglie_wavelength, mean_atom_number, point_spread_function, sample_arrivals, ApertureSampler, BeamModel,
    Kernel2D, NanoholeArray,
};
pub use scan::{
    linspace, simulate_detuning_scan, simulate_position_scan, steady_state_at_origin, trajectory_config,
    transit_angles, Engine, ExperimentConfig, NoiseModel, ResonatorSpec, ScanAxis, ScanTrace, TraceMetadata,
    TrajectorySettings,
};
