//! Analysis: deconvolution, curve fits, transverse profiles, calibration
//! of the vacuum amplitude, and 3D assembly.

mod deconv;
mod fits;
mod isosurface;
mod lsq;
mod nonlinear;
mod pipeline;
mod volume;
mod yprofile;

pub use deconv::{
    circular_convolve, kl_divergence, reflective_convolve, resample_kernel, richardson_lucy, richardson_lucy_2d,
    wiener_spectral_inverse, RlOptions, RlResult,
};
pub use fits::{fit_gaussian, fit_gaussian_data, fit_sine_squared, fit_sine_squared_data, GaussianOptions};
pub use isosurface::{isosurface, Mesh};
pub use lsq::{finite_difference_jacobian, levenberg_marquardt, FitResult, LmOptions, LmProblem, LmSolution};
pub use nonlinear::{
    fit_nonlinear_master, MasterFit, MasterFitOptions, MasterModel, MasterTrace, DEGENERACY_THRESHOLD,
};
pub use pipeline::{reconstruct, DeconvolvedRow, Deconvolution, Reconstruction, ReconstructionOptions, RowFit, WIENER_EPSILON};
pub use volume::{assemble_volume, AxisProfiles, Calibration, GridSpec, VacuumVolume, VolumeManifest};
pub use yprofile::{y_profile_from_detuning, YProfile, YProfileOptions};
