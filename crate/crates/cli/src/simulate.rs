use std::path::PathBuf;

use clap::ValueEnum;
use vacimg::beamsim::{simulate_detuning_scan, simulate_position_scan, ScanAxis, ScanTrace};
use vacimg::config::RunConfig;
use vacimg::io::write_trace;
use vacimg::seed::derive_seed;

use crate::run::{load_config, update_manifest};
use crate::{output_dir, CliResult, EngineArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Z,
    X,
    Detuning,
    /// z rows, the x scan and the detuning scan.
    All,
    /// Node-to-antinode z traces at each calibration atom number.
    Calibration,
}

#[derive(clap::Args)]
pub struct Args {
    /// Run configuration (JSON).
    config: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    axis: AxisArg,
    /// Points per trace, replacing the configured count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    points: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Output directory [default: $VACIMG_OUT_DIR, then the config's].
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Seed index of each trace family, fixed so a trace does not change when
/// others are added to the run.
const X_SCAN_INDEX: u64 = 1_000;
const DETUNING_INDEX: u64 = 1_001;
const CALIBRATION_BASE: u64 = 2_000;

pub fn run(args: Args) -> CliResult<u8> {
    let mut cfg = load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.engine {
        cfg.engine = e.into();
    }
    if let Some(p) = args.points {
        let p = p as usize;
        match args.axis {
            AxisArg::Z => cfg.scans.z_points = p,
            AxisArg::X => cfg.scans.x_points = p,
            AxisArg::Detuning => cfg.scans.detuning_points = p,
            AxisArg::Calibration => cfg.scans.calibration_points = p,
            AxisArg::All => {
                cfg.scans.z_points = p;
                cfg.scans.x_points = p;
                cfg.scans.detuning_points = p;
            }
        }
    }
    cfg.validate()?;
    let dir = output_dir(args.out, cfg.output_dir.as_deref());

    let traces = simulate(&cfg, args.axis)?;
    let mut stems = Vec::new();
    for (stem, trace) in &traces {
        let path = write_trace(&dir, stem, trace)?;
        println!("{}", path.display());
        stems.push(stem.clone());
    }
    let manifest = update_manifest(&dir, &cfg, &stems)?;
    println!("{}", manifest.display());
    Ok(0)
}

pub fn simulate(cfg: &RunConfig, axis: AxisArg) -> CliResult<Vec<(String, ScanTrace)>> {
    let exp = &cfg.experiment;
    let plan = &cfg.scans;
    let mut out = Vec::new();
    if matches!(axis, AxisArg::Z | AxisArg::All) {
        let z = plan.z_positions();
        for (i, x) in plan.x_rows.iter().enumerate() {
            let mut c = *exp;
            c.array.origin = [*x, 0.0];
            let t = simulate_position_scan(&c, ScanAxis::Z, &z, cfg.engine, derive_seed(cfg.seed, i as u64))?;
            out.push((format!("z_row{i:02}"), t));
        }
    }
    if matches!(axis, AxisArg::X | AxisArg::All) {
        let t = simulate_position_scan(exp, ScanAxis::X, &plan.x_positions(), cfg.engine, derive_seed(cfg.seed, X_SCAN_INDEX))?;
        out.push(("x_scan".into(), t));
    }
    if matches!(axis, AxisArg::Detuning | AxisArg::All) {
        let t = simulate_detuning_scan(exp, &plan.detunings(), derive_seed(cfg.seed, DETUNING_INDEX))?;
        out.push(("detuning".into(), t));
    }
    if axis == AxisArg::Calibration {
        let z = plan.calibration_positions(exp.resonator.wavelength);
        for (k, n) in plan.calibration_atom_numbers.iter().enumerate() {
            let c = exp.with_mean_atom_number(*n)?;
            let t = simulate_position_scan(&c, ScanAxis::Z, &z, cfg.engine, derive_seed(cfg.seed, CALIBRATION_BASE + k as u64))?;
            out.push((format!("calib{k:02}"), t));
        }
    }
    Ok(out)
}
