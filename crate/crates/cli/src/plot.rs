use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use vacimg::beamsim::{Engine, ScanAxis, ScanTrace, TraceMetadata};
use vacimg::io::{read_trace, trace_from_csv, write_atomic, TraceSidecar};
use vacimg::recon::VacuumVolume;

use crate::svg::{heatmaps, line_plot, Panel, Series};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Svg,
    Csv,
}

#[derive(clap::Args)]
pub struct Args {
    /// Trace CSV (sidecar optional) or volume manifest JSON.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "svg")]
    format: Format,
    /// Samples per resampled trace.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(2..))]
    points: u64,
    /// Output file [default: next to the input].
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Input {
    Trace(ScanTrace),
    Volume(VacuumVolume),
}

fn with_path(path: &Path, e: vacimg::Error) -> CliError {
    let mut err = CliError::from(e);
    err.message = format!("{}: {}", path.display(), err.message);
    err
}

fn load(path: &Path) -> CliResult<Input> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::runtime("io", format!("{}: {e}", path.display())))?;
        if serde_json::from_str::<TraceSidecar>(&text).is_ok() {
            return read_trace(&path.with_extension("csv")).map(Input::Trace).map_err(|e| with_path(path, e));
        }
        return VacuumVolume::read(path).map(Input::Volume).map_err(|e| with_path(path, e));
    }
    if path.with_extension("json").exists() {
        return read_trace(path).map(Input::Trace).map_err(|e| with_path(path, e));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::runtime("io", format!("{}: {e}", path.display())))?;
    let placeholder = TraceMetadata {
        mean_atom_number: 0.0,
        seed: 0,
        config_hash: String::new(),
        engine: Engine::SteadyState,
        fixed_position: [0.0, 0.0],
        mean_velocity: 0.0,
    };
    trace_from_csv(&text, placeholder).map(Input::Trace).map_err(|e| with_path(path, e))
}

pub fn run(args: Args) -> CliResult<u8> {
    let input = load(&args.input)?;
    let stem = args.input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let (default_name, body) = match (&input, args.format) {
        (Input::Trace(t), Format::Svg) => (format!("{stem}.svg"), trace_svg(t)),
        (Input::Trace(t), Format::Csv) => (format!("{stem}_resampled.csv"), trace_csv(t, args.points as usize)),
        (Input::Volume(v), Format::Svg) => (format!("{stem}_slices.svg"), volume_svg(v)),
        (Input::Volume(v), Format::Csv) => (format!("{stem}_slices.csv"), volume_csv(v)),
    };
    let out = args.out.unwrap_or_else(|| args.input.with_file_name(default_name));
    write_atomic(&out, body.as_bytes())?;
    println!("{}", out.display());
    Ok(0)
}

/// Display scale and label for a trace coordinate.
fn axis_units(axis: ScanAxis) -> (f64, &'static str) {
    match axis {
        ScanAxis::Z => (1e6, "array z position (um)"),
        ScanAxis::X => (1e6, "array x position (um)"),
        ScanAxis::Detuning => (1.0 / (2.0 * PI * 1e3), "detuning / 2pi (kHz)"),
    }
}

fn trace_svg(t: &ScanTrace) -> String {
    let (scale, xlabel) = axis_units(t.axis);
    let x: Vec<f64> = t.coordinates.iter().map(|c| c * scale).collect();
    let m = &t.metadata;
    let title = format!("{}-scan, <N> = {:.3}, seed {}", t.axis.as_str(), m.mean_atom_number, m.seed);
    line_plot(&Series { x: &x, y: &t.values, err: &t.stderr }, &title, xlabel, "mean photon number <n>")
}

fn interpolate(x: &[f64], y: &[f64], at: f64) -> f64 {
    let i = x.partition_point(|v| *v <= at).clamp(1, x.len() - 1);
    let (x0, x1) = (x[i - 1], x[i]);
    let f = if x1 > x0 { ((at - x0) / (x1 - x0)).clamp(0.0, 1.0) } else { 0.0 };
    y[i - 1] + f * (y[i] - y[i - 1])
}

fn trace_csv(t: &ScanTrace, points: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# config_hash={} seed={}", t.metadata.config_hash, t.metadata.seed);
    s.push_str("coordinate,mean_photon,stderr\n");
    // Traces may run in either direction; interpolate on ascending order.
    let mut idx: Vec<usize> = (0..t.coordinates.len()).collect();
    idx.sort_by(|a, b| t.coordinates[*a].total_cmp(&t.coordinates[*b]));
    let x: Vec<f64> = idx.iter().map(|i| t.coordinates[*i]).collect();
    let y: Vec<f64> = idx.iter().map(|i| t.values[*i]).collect();
    let e: Vec<f64> = idx.iter().map(|i| t.stderr[*i]).collect();
    let (lo, hi) = (x[0], x[x.len() - 1]);
    for k in 0..points {
        let at = if points > 1 { lo + (hi - lo) * k as f64 / (points - 1) as f64 } else { lo };
        let (v, err) = if x.len() == 1 { (y[0], e[0]) } else { (interpolate(&x, &y, at), interpolate(&x, &e, at)) };
        let _ = writeln!(s, "{at:.16e},{v:.16e},{err:.16e}");
    }
    s
}

/// Slices through the grid point nearest the mode center: x–z, y–z, x–y.
fn slices(v: &VacuumVolume) -> Vec<(&'static str, [usize; 2], Vec<f64>, Vec<f64>, Vec<f64>)> {
    let c = v.center();
    let coords = |a: usize| (0..v.dims[a]).map(|i| v.coordinate(a, i)).collect::<Vec<f64>>();
    let plane = |ua: usize, va: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(v.dims[ua] * v.dims[va]);
        for iv in 0..v.dims[va] {
            for iu in 0..v.dims[ua] {
                let mut i = c;
                i[ua] = iu;
                i[va] = iv;
                out.push(v.value(i[0], i[1], i[2]));
            }
        }
        out
    };
    vec![
        ("xz", [2, 0], coords(2), coords(0), plane(2, 0)),
        ("yz", [2, 1], coords(2), coords(1), plane(2, 1)),
        ("xy", [0, 1], coords(0), coords(1), plane(0, 1)),
    ]
}

fn volume_svg(v: &VacuumVolume) -> String {
    let names = ["x (um)", "y (um)", "z (um)"];
    let peak = v.max().max(f64::MIN_POSITIVE);
    let panels: Vec<Panel> = slices(v)
        .into_iter()
        .map(|(name, [ua, va], u, w, vals)| Panel {
            title: format!("{name} slice"),
            xlabel: names[ua].into(),
            ylabel: names[va].into(),
            u: u.iter().map(|c| c * 1e6).collect(),
            v: w.iter().map(|c| c * 1e6).collect(),
            values: vals.iter().map(|x| x / peak).collect(),
        })
        .collect();
    heatmaps(&panels, "relative vacuum intensity [E(r)/E(0)]^2")
}

fn volume_csv(v: &VacuumVolume) -> String {
    let mut s = String::new();
    s.push_str("plane,u,v,value\n");
    for (name, _, u, w, vals) in slices(v) {
        for (iv, vv) in w.iter().enumerate() {
            for (iu, uu) in u.iter().enumerate() {
                let _ = writeln!(s, "{name},{uu:.16e},{vv:.16e},{:.16e}", vals[iv * u.len() + iu]);
            }
        }
    }
    s
}
