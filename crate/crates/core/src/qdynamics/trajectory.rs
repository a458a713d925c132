//! Monte Carlo wavefunction simulation of the cavity mode and every atom
//! currently crossing it.
//!
//! The state lives on `Fock ⊗ (two-level)^k` with `k` the number of atoms in
//! the interaction window. Amplitudes are stored at `n · 2^k + mask`, bit `i`
//! of `mask` set when atom `i` is excited. Excitation number is conserved by
//! the coherent evolution and lowered by every jump, so the Fock space only
//! needs `K + 1` levels for total excitation `K`.
//!
//! While atoms are present the non-Hermitian Hamiltonian is held constant
//! over each step (RK4 inside the step) and a jump is drawn from the norm
//! loss. With no atoms present the no-jump evolution is diagonal and the next
//! cavity decay time is solved for directly.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::steady::InjectionModel;
use super::transit::AtomPath;
use crate::error::{ensure_positive, Error, Result};
use crate::modegeom::{mode_amplitude, ModeGeometry};
use crate::seed::derive_seed;

pub type SimRng = ChaCha8Rng;

/// Source of straight atom paths through the mode.
pub trait PathSampler: Sync {
    fn sample_path(&self, rng: &mut SimRng) -> AtomPath;
}

/// Every atom follows the same path.
#[derive(Debug, Clone, Copy)]
pub struct FixedPath(pub AtomPath);

impl PathSampler for FixedPath {
    fn sample_path(&self, _rng: &mut SimRng) -> AtomPath {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub geometry: ModeGeometry,
    /// `g0 = μ E_vac(0) / ħ`, rad/s.
    pub peak_coupling: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// Atom-cavity detuning, rad/s.
    pub detuning: f64,
    pub injection: InjectionModel,
    pub max_atoms: usize,
    /// Largest total excitation (photons plus excited atoms) allowed.
    pub photon_cap: usize,
    /// Atoms are tracked over `±window_half_widths · w0` along the beam.
    pub window_half_widths: f64,
    /// Time step bound `w0 / (samples_per_waist · v)`.
    pub samples_per_waist: usize,
    /// Bound on the total jump probability per step.
    pub max_jump_probability: f64,
}

impl TrajectoryConfig {
    pub fn new(geometry: ModeGeometry, peak_coupling: f64, kappa: f64, gamma: f64, injection: InjectionModel) -> Self {
        Self {
            geometry,
            peak_coupling,
            kappa,
            gamma,
            detuning: 0.0,
            injection,
            max_atoms: 12,
            photon_cap: 60,
            window_half_widths: 3.0,
            samples_per_waist: 50,
            max_jump_probability: 1e-2,
        }
    }

    fn validate(&self) -> Result<()> {
        self.injection.validate()?;
        ensure_positive(self.window_half_widths, "interaction window")?;
        if !(self.kappa >= 0.0 && self.gamma >= 0.0 && self.peak_coupling.is_finite()) {
            return Err(Error::InvalidInput("rates must be finite and non-negative".into()));
        }
        if self.max_atoms == 0 || self.max_atoms > 16 {
            return Err(Error::InvalidInput("max_atoms must lie in 1..=16".into()));
        }
        if self.samples_per_waist < 50 {
            return Err(Error::InvalidInput("samples_per_waist must be at least 50".into()));
        }
        if !(self.max_jump_probability > 0.0 && self.max_jump_probability <= 1e-2) {
            return Err(Error::InvalidInput("max_jump_probability must lie in (0, 0.01]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    ExitExcited,
    ExitGround,
    CavityDecay,
    AtomDecay,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::ExitExcited => "exit_excited",
            EventKind::ExitGround => "exit_ground",
            EventKind::CavityDecay => "cavity_decay",
            EventKind::AtomDecay => "atom_decay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Atom involved; `None` for cavity decay.
    pub atom_id: Option<u64>,
    /// `⟨n⟩` of the state right after the event.
    pub photon_number_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    /// Time-averaged `⟨n⟩` after warm-up.
    pub mean_photon: f64,
    /// Batch-means standard error of `mean_photon`.
    pub stderr: f64,
    /// Time-averaged probability of an empty cavity.
    pub vacuum_probability: f64,
    pub transits: u64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub mean_photon: f64,
    /// Standard error across independent trajectories.
    pub stderr: f64,
    pub vacuum_probability: f64,
    pub transits: u64,
    pub runs: Vec<TrajectoryResult>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitOutcome {
    pub exited_excited: bool,
    pub photons_after: f64,
}

const BATCHES: usize = 20;

/// Runs one trajectory of length `duration` (after a warm-up of `10/κ`,
/// capped at a tenth of the duration, which is excluded from averages).
pub fn trajectory_simulate(
    cfg: &TrajectoryConfig,
    sampler: &dyn PathSampler,
    duration: f64,
    seed: u64,
) -> Result<TrajectoryResult> {
    cfg.validate()?;
    ensure_positive(duration, "duration")?;
    let mut rng = SimRng::seed_from_u64(seed);
    let warmup = if cfg.kappa > 0.0 { (10.0 / cfg.kappa).min(0.1 * duration) } else { 0.0 };
    let total = duration + warmup;
    let mut engine = Engine::new(cfg);
    let mut acc = Averages::new(warmup, duration);
    let mut events = Vec::new();
    let rate = cfg.injection.arrival_rate;
    let inter_arrival = if rate > 0.0 { Some(Exp::new(rate).expect("positive rate")) } else { None };
    let mut next_arrival = inter_arrival.as_ref().map_or(f64::INFINITY, |d| d.sample(&mut rng));
    let mut next_id = 0u64;
    let mut transits = 0u64;
    let mut t = 0.0;

    while t < total {
        let exit = engine.next_exit();
        let t_end = next_arrival.min(exit.map_or(f64::INFINITY, |(_, te)| te)).min(total);
        if engine.atoms.is_empty() {
            engine.free_decay(t, t_end, &mut rng, &mut acc, &mut events);
        } else {
            engine.evolve(t, t_end, &mut rng, &mut acc, &mut events)?;
        }
        t = t_end;
        if t >= total {
            break;
        }
        if let Some((j, te)) = exit {
            if te <= t {
                let id = engine.atoms[j].id;
                let excited = engine.remove_atom(j, &mut rng);
                if t >= warmup {
                    transits += 1;
                }
                events.push(Event {
                    time: t,
                    kind: if excited { EventKind::ExitExcited } else { EventKind::ExitGround },
                    atom_id: Some(id),
                    photon_number_after: engine.photon_mean(),
                });
                continue;
            }
        }
        if next_arrival <= t {
            let path = sampler.sample_path(&mut rng);
            let excited = rng.random::<f64>() < cfg.injection.excited_fraction;
            engine.add_atom(next_id, path, t, excited)?;
            events.push(Event {
                time: t,
                kind: EventKind::Arrival,
                atom_id: Some(next_id),
                photon_number_after: engine.photon_mean(),
            });
            next_id += 1;
            next_arrival = t + inter_arrival.as_ref().map_or(f64::INFINITY, |d| d.sample(&mut rng));
        }
    }

    let (mean_photon, stderr, vacuum_probability) = acc.summary();
    Ok(TrajectoryResult { mean_photon, stderr, vacuum_probability, transits, events })
}

/// Independent trajectories with seeds split from `seed`; the result does not
/// depend on thread scheduling.
pub fn trajectory_ensemble(
    cfg: &TrajectoryConfig,
    sampler: &dyn PathSampler,
    duration_each: f64,
    count: usize,
    seed: u64,
) -> Result<EnsembleResult> {
    if count == 0 {
        return Err(Error::InvalidInput("ensemble needs at least one trajectory".into()));
    }
    let runs: Vec<TrajectoryResult> = (0..count)
        .into_par_iter()
        .map(|i| trajectory_simulate(cfg, sampler, duration_each, derive_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    let m = count as f64;
    let mean_photon = runs.iter().map(|r| r.mean_photon).sum::<f64>() / m;
    let vacuum_probability = runs.iter().map(|r| r.vacuum_probability).sum::<f64>() / m;
    let stderr = if count > 1 {
        let var = runs.iter().map(|r| (r.mean_photon - mean_photon).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        runs[0].stderr
    };
    let transits = runs.iter().map(|r| r.transits).sum();
    Ok(EnsembleResult { mean_photon, stderr, vacuum_probability, transits, runs })
}

/// One atom crossing a cavity prepared in Fock state `initial_photons`.
pub fn single_transit(
    cfg: &TrajectoryConfig,
    path: &AtomPath,
    initial_photons: usize,
    rng: &mut SimRng,
) -> Result<TransitOutcome> {
    cfg.validate()?;
    let mut engine = Engine::new(cfg);
    engine.set_fock(initial_photons)?;
    engine.add_atom(0, *path, 0.0, true)?;
    let exit = engine.atoms[0].exit;
    let mut acc = Averages::new(0.0, exit);
    let mut events = Vec::new();
    engine.evolve(0.0, exit, rng, &mut acc, &mut events)?;
    let exited_excited = engine.remove_atom(0, rng);
    Ok(TransitOutcome { exited_excited, photons_after: engine.photon_mean() })
}

struct ActiveAtom {
    id: u64,
    path: AtomPath,
    /// Time at which the atom crosses `y = 0`.
    center: f64,
    exit: f64,
}

struct Engine<'a> {
    cfg: &'a TrajectoryConfig,
    amps: Vec<Complex64>,
    fock_dim: usize,
    excitation: usize,
    atoms: Vec<ActiveAtom>,
    couplings: Vec<f64>,
    scratch: [Vec<Complex64>; 5],
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a TrajectoryConfig) -> Self {
        Self {
            cfg,
            amps: vec![Complex64::new(1.0, 0.0)],
            fock_dim: 1,
            excitation: 0,
            atoms: Vec::new(),
            couplings: Vec::new(),
            scratch: Default::default(),
        }
    }

    fn set_fock(&mut self, n: usize) -> Result<()> {
        if n > self.cfg.photon_cap {
            return Err(Error::Truncation { n_max: self.cfg.photon_cap, tail: 1.0 });
        }
        self.fock_dim = n + 1;
        self.excitation = n;
        self.amps = vec![Complex64::new(0.0, 0.0); n + 1];
        self.amps[n] = Complex64::new(1.0, 0.0);
        Ok(())
    }

    fn stride(&self) -> usize {
        1 << self.atoms.len()
    }

    fn photon_mean(&self) -> f64 {
        let stride = self.stride();
        self.amps.iter().enumerate().map(|(i, a)| (i / stride) as f64 * a.norm_sqr()).sum()
    }

    fn vacuum_population(&self) -> f64 {
        self.amps[..self.stride()].iter().map(|a| a.norm_sqr()).sum()
    }

    fn next_exit(&self) -> Option<(usize, f64)> {
        self.atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, a.exit))
            .fold(None, |best, (i, t)| match best {
                Some((_, bt)) if bt <= t => best,
                _ => Some((i, t)),
            })
    }

    fn add_atom(&mut self, id: u64, path: AtomPath, now: f64, excited: bool) -> Result<()> {
        if self.atoms.len() >= self.cfg.max_atoms {
            return Err(Error::AtomOverflow { count: self.atoms.len() + 1, max: self.cfg.max_atoms });
        }
        if excited {
            self.excitation += 1;
            if self.excitation > self.cfg.photon_cap {
                return Err(Error::Truncation { n_max: self.cfg.photon_cap, tail: 1.0 });
            }
            if self.excitation + 1 > self.fock_dim {
                self.fock_dim = self.excitation + 1;
                self.amps.resize(self.fock_dim * self.stride(), Complex64::new(0.0, 0.0));
            }
        }
        let old_stride = self.stride();
        let new_stride = 2 * old_stride;
        let bit = if excited { old_stride } else { 0 };
        let mut next = vec![Complex64::new(0.0, 0.0); self.fock_dim * new_stride];
        for (i, a) in self.amps.iter().enumerate() {
            let (n, mask) = (i / old_stride, i % old_stride);
            next[n * new_stride + (mask | bit)] = *a;
        }
        self.amps = next;
        let vy = path.velocity[1];
        let half = self.cfg.window_half_widths * self.cfg.geometry.waist / vy;
        self.atoms.push(ActiveAtom { id, path, center: now + half, exit: now + 2.0 * half });
        Ok(())
    }

    /// Measures atom `j` on exit, projects, and removes it. Returns whether
    /// it was found excited.
    fn remove_atom(&mut self, j: usize, rng: &mut SimRng) -> bool {
        let stride = self.stride();
        let bit = 1 << j;
        let p_excited: f64 = self.amps.iter().enumerate().filter(|(i, _)| i % stride & bit != 0).map(|(_, a)| a.norm_sqr()).sum();
        let total: f64 = self.amps.iter().map(|a| a.norm_sqr()).sum();
        let excited = rng.random::<f64>() * total < p_excited;
        let new_stride = stride / 2;
        let low = bit - 1;
        let mut next = vec![Complex64::new(0.0, 0.0); self.fock_dim * new_stride];
        let mut norm = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            let (n, mask) = (i / stride, i % stride);
            if (mask & bit != 0) != excited {
                continue;
            }
            let reduced = (mask & low) | ((mask >> 1) & !low);
            next[n * new_stride + reduced] = *a;
            norm += a.norm_sqr();
        }
        let scale = 1.0 / norm.sqrt();
        next.iter_mut().for_each(|a| *a *= scale);
        self.amps = next;
        self.atoms.remove(j);
        if excited {
            self.excitation -= 1;
        }
        excited
    }

    fn update_couplings(&mut self, t: f64) {
        let g0 = self.cfg.peak_coupling;
        let geom = &self.cfg.geometry;
        self.couplings.clear();
        self.couplings.extend(self.atoms.iter().map(|a| g0 * mode_amplitude(a.path.position(t - a.center), geom)));
    }

    /// `out = −i H_eff ψ`.
    fn derivative(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let stride = self.stride();
        let k = self.atoms.len();
        let half_kappa = 0.5 * self.cfg.kappa;
        let half_gamma = 0.5 * self.cfg.gamma;
        let delta = self.cfg.detuning;
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for (i, &a) in psi.iter().enumerate() {
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            let (n, mask) = (i / stride, i % stride);
            let excited = mask.count_ones() as f64;
            // Hermitian diagonal part and decay.
            let diag = Complex64::new(-(half_kappa * n as f64 + half_gamma * excited), -delta * excited);
            out[i] += diag * a;
            for atom in 0..k {
                let g = self.couplings[atom];
                let bit = 1 << atom;
                if mask & bit != 0 {
                    if n + 1 < self.fock_dim {
                        let target = (n + 1) * stride + (mask ^ bit);
                        out[target] += Complex64::new(0.0, -g * ((n + 1) as f64).sqrt()) * a;
                    }
                } else if n > 0 {
                    let target = (n - 1) * stride + (mask | bit);
                    out[target] += Complex64::new(0.0, -g * (n as f64).sqrt()) * a;
                }
            }
        }
    }

    fn rk4(&mut self, dt: f64) {
        let len = self.amps.len();
        let mut s = std::mem::take(&mut self.scratch);
        for v in s.iter_mut() {
            v.resize(len, Complex64::new(0.0, 0.0));
        }
        let [k1, k2, k3, k4, tmp] = &mut s;
        self.derivative(&self.amps, k1);
        for i in 0..len {
            tmp[i] = self.amps[i] + k1[i] * (0.5 * dt);
        }
        self.derivative(tmp, k2);
        for i in 0..len {
            tmp[i] = self.amps[i] + k2[i] * (0.5 * dt);
        }
        self.derivative(tmp, k3);
        for i in 0..len {
            tmp[i] = self.amps[i] + k3[i] * dt;
        }
        self.derivative(tmp, k4);
        for i in 0..len {
            tmp[i] = self.amps[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
        }
        self.scratch = s;
    }

    fn step_bound(&self) -> f64 {
        let vmax = self.atoms.iter().map(|a| a.path.velocity[1]).fold(0.0f64, f64::max);
        let geometric = self.cfg.geometry.waist / (self.cfg.samples_per_waist as f64 * vmax);
        let rate = self.cfg.kappa * self.excitation as f64 + self.cfg.gamma * self.atoms.len() as f64;
        if rate > 0.0 {
            geometric.min(self.cfg.max_jump_probability / rate)
        } else {
            geometric
        }
    }

    fn evolve(
        &mut self,
        t0: f64,
        t1: f64,
        rng: &mut SimRng,
        acc: &mut Averages,
        events: &mut Vec<Event>,
    ) -> Result<()> {
        let mut t = t0;
        while t < t1 {
            let remaining = t1 - t;
            let bound = self.step_bound();
            let dt = if remaining <= bound { remaining } else { remaining / (remaining / bound).ceil() };
            let n_before = self.photon_mean();
            let p0_before = self.vacuum_population();
            self.update_couplings(t + 0.5 * dt);
            self.rk4(dt);
            let evolved_norm: f64 = self.scratch[4].iter().map(|a| a.norm_sqr()).sum();
            let jump_probability = 1.0 - evolved_norm;
            if rng.random::<f64>() < jump_probability {
                self.jump(rng, t + dt, events);
            } else {
                let scale = 1.0 / evolved_norm.sqrt();
                for (a, b) in self.amps.iter_mut().zip(&self.scratch[4]) {
                    *a = b * scale;
                }
            }
            let n_after = self.photon_mean();
            let p0_after = self.vacuum_population();
            acc.add(t, dt, 0.5 * (n_before + n_after), 0.5 * (p0_before + p0_after));
            t += dt;
            if t1 - t < 1e-9 * dt {
                t = t1;
            }
        }
        Ok(())
    }

    fn jump(&mut self, rng: &mut SimRng, time: f64, events: &mut Vec<Event>) {
        let stride = self.stride();
        let k = self.atoms.len();
        let mut weights = Vec::with_capacity(k + 1);
        weights.push(self.cfg.kappa * self.photon_mean());
        for atom in 0..k {
            let bit = 1 << atom;
            let pop: f64 = self.amps.iter().enumerate().filter(|(i, _)| i % stride & bit != 0).map(|(_, a)| a.norm_sqr()).sum();
            weights.push(self.cfg.gamma * pop);
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut channel = weights.len() - 1;
        for (c, w) in weights.iter().enumerate() {
            if pick < *w {
                channel = c;
                break;
            }
            pick -= w;
        }
        let mut next = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        let (kind, atom_id) = if channel == 0 {
            for (i, a) in self.amps.iter().enumerate() {
                let n = i / stride;
                if n > 0 {
                    next[i - stride] = a * (n as f64).sqrt();
                }
            }
            (EventKind::CavityDecay, None)
        } else {
            let bit = 1 << (channel - 1);
            for (i, a) in self.amps.iter().enumerate() {
                if i % stride & bit != 0 {
                    next[i - bit] = *a;
                }
            }
            (EventKind::AtomDecay, Some(self.atoms[channel - 1].id))
        };
        let norm: f64 = next.iter().map(|a| a.norm_sqr()).sum();
        let scale = 1.0 / norm.sqrt();
        next.iter_mut().for_each(|a| *a *= scale);
        self.amps = next;
        self.excitation = self.excitation.saturating_sub(1);
        events.push(Event { time, kind, atom_id, photon_number_after: self.photon_mean() });
    }

    /// Cavity-only evolution between `t0` and `t1`: the no-jump norm is
    /// `Σ |c_n|² e^{−κ n s}`, inverted for the next decay time.
    fn free_decay(&mut self, t0: f64, t1: f64, rng: &mut SimRng, acc: &mut Averages, events: &mut Vec<Event>) {
        let kappa = self.cfg.kappa;
        let mut t = t0;
        while t < t1 {
            if self.excitation == 0 || kappa == 0.0 {
                let n = self.photon_mean();
                acc.add(t, t1 - t, n, self.vacuum_population());
                return;
            }
            let pops: Vec<f64> = self.amps.iter().map(|a| a.norm_sqr()).collect();
            let norm_at = |s: f64| -> f64 {
                pops.iter().enumerate().map(|(n, p)| p * (-kappa * n as f64 * s).exp()).sum()
            };
            let target: f64 = rng.random();
            let span = t1 - t;
            let jump_at = if norm_at(span) > target {
                None
            } else {
                let (mut lo, mut hi) = (0.0, span);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if norm_at(mid) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(hi)
            };
            let s = jump_at.unwrap_or(span);
            let (mean_n, mean_p0) = decay_averages(&pops, kappa, s);
            acc.add(t, s, mean_n, mean_p0);
            let norm_end = norm_at(s);
            for (n, a) in self.amps.iter_mut().enumerate() {
                *a *= (-0.5 * kappa * n as f64 * s).exp() / norm_end.sqrt();
            }
            t += s;
            if jump_at.is_some() {
                self.jump(rng, t, events);
            }
        }
    }
}

/// Time averages of `⟨n⟩` and `p(0)` over `[0, s]` for a freely decaying
/// field with initial populations `pops` (Simpson's rule).
fn decay_averages(pops: &[f64], kappa: f64, s: f64) -> (f64, f64) {
    if s <= 0.0 {
        let total: f64 = pops.iter().sum();
        let n = pops.iter().enumerate().map(|(n, p)| n as f64 * p).sum::<f64>() / total;
        return (n, pops[0] / total);
    }
    const PANELS: usize = 16;
    let h = s / PANELS as f64;
    let (mut sum_n, mut sum_p0) = (0.0, 0.0);
    for i in 0..=PANELS {
        let tt = i as f64 * h;
        let w = if i == 0 || i == PANELS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let mut norm = 0.0;
        let mut mean = 0.0;
        for (n, p) in pops.iter().enumerate() {
            let q = p * (-kappa * n as f64 * tt).exp();
            norm += q;
            mean += n as f64 * q;
        }
        sum_n += w * mean / norm;
        sum_p0 += w * pops[0] / norm;
    }
    (sum_n / (3.0 * PANELS as f64), sum_p0 / (3.0 * PANELS as f64))
}

struct Averages {
    warmup: f64,
    batch_len: f64,
    photon: [f64; BATCHES],
    vacuum: [f64; BATCHES],
    time: [f64; BATCHES],
}

impl Averages {
    fn new(warmup: f64, duration: f64) -> Self {
        Self {
            warmup,
            batch_len: duration / BATCHES as f64,
            photon: [0.0; BATCHES],
            vacuum: [0.0; BATCHES],
            time: [0.0; BATCHES],
        }
    }

    /// Adds an interval starting at `t` of length `dt` with average values.
    fn add(&mut self, t: f64, dt: f64, mean_n: f64, p0: f64) {
        let mid = t + 0.5 * dt;
        if mid < self.warmup || dt <= 0.0 {
            return;
        }
        let b = (((mid - self.warmup) / self.batch_len) as usize).min(BATCHES - 1);
        self.photon[b] += mean_n * dt;
        self.vacuum[b] += p0 * dt;
        self.time[b] += dt;
    }

    fn summary(&self) -> (f64, f64, f64) {
        let total_time: f64 = self.time.iter().sum();
        if total_time <= 0.0 {
            return (0.0, 0.0, 1.0);
        }
        let mean = self.photon.iter().sum::<f64>() / total_time;
        let p0 = self.vacuum.iter().sum::<f64>() / total_time;
        let batch_means: Vec<f64> =
            self.photon.iter().zip(&self.time).filter(|(_, t)| **t > 0.0).map(|(p, t)| p / t).collect();
        let m = batch_means.len() as f64;
        let stderr = if batch_means.len() > 1 {
            let var = batch_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        };
        (mean, stderr, p0)
    }
}
