//! Brute-force steady state of the coarse-grained pumped-cavity master
//! equation, used only to check the detailed-balance recursion.
//!
//! Each atom transit is a completely positive map on the field, obtained by
//! exponentiating the atom⊗Fock Liouvillian (Jaynes-Cummings Hamiltonian plus
//! free-space decay of the atom) and tracing out the atom. Arrivals at rate
//! `R` and cavity damping `κ` give the generator
//! `L = R (M − 1) + κ D[a]`, whose null vector is found by SVD.
//!
//! The Liouvillian is built on the operator subspace `|i⟩⟨j|` with equal
//! excitation number on both sides, which every term preserves and which
//! contains the initial `|e,n⟩⟨e,n|`. Only field populations enter the
//! steady state because the map never creates coherences from a diagonal
//! input.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::steady::{PhotonDistribution, TAIL_BOUND};
use crate::error::{ensure_positive, Error, Result};

/// Largest Fock truncation the dense oracle accepts.
pub const ORACLE_MAX_PHOTONS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpModel {
    pub arrival_rate: f64,
    /// Interaction time with constant coupling.
    pub interaction_time: f64,
    pub excited_fraction: f64,
    /// Atom-cavity detuning during the transit, rad/s.
    pub detuning: f64,
}

pub fn lindblad_steady_state_oracle(
    g_eff: f64,
    pump: &PumpModel,
    kappa: f64,
    gamma: f64,
    n_max: usize,
) -> Result<PhotonDistribution> {
    if n_max == 0 || n_max > ORACLE_MAX_PHOTONS {
        return Err(Error::InvalidInput(format!("oracle truncation must lie in 1..={ORACLE_MAX_PHOTONS}")));
    }
    if !(kappa >= 0.0 && gamma >= 0.0 && pump.arrival_rate >= 0.0) {
        return Err(Error::InvalidInput("rates must be non-negative".into()));
    }
    ensure_positive(pump.interaction_time, "interaction time")?;

    let transfer = transit_map(g_eff, pump, gamma, n_max);
    let dim = n_max + 1;
    let mut generator = DMatrix::<f64>::zeros(dim, dim);
    for to in 0..dim {
        for from in 0..dim {
            let identity = if to == from { 1.0 } else { 0.0 };
            generator[(to, from)] = pump.arrival_rate * (transfer[(to, from)] - identity);
        }
    }
    for n in 1..dim {
        let rate = kappa * n as f64;
        generator[(n - 1, n)] += rate;
        generator[(n, n)] -= rate;
    }

    let svd = generator.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.max();
    let threshold = 1e-12 * sigma_max.max(f64::MIN_POSITIVE);
    let null_dim = svd.singular_values.iter().filter(|s| **s <= threshold).count();
    if null_dim != 1 {
        return Err(Error::DegenerateNullSpace(null_dim));
    }
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, s)| if *s < best.1 { (i, *s) } else { best });
    let row = v_t.row(idx);
    let total: f64 = row.iter().sum();
    let probabilities: Vec<f64> = row.iter().map(|v| (v / total).max(0.0)).collect();
    let norm: f64 = probabilities.iter().sum();
    let dist = PhotonDistribution { probabilities: probabilities.into_iter().map(|p| p / norm).collect() };
    if dist.tail() >= TAIL_BOUND {
        return Err(Error::Truncation { n_max, tail: dist.tail() });
    }
    Ok(dist)
}

fn state(excited: bool, n: usize) -> usize {
    2 * n + excited as usize
}

fn excitation(idx: usize) -> usize {
    idx / 2 + idx % 2
}

/// Column-stochastic matrix `T[(m, n)]`: probability that one transit takes
/// the field from `n` to `m` photons.
fn transit_map(g: f64, pump: &PumpModel, gamma: f64, n_max: usize) -> DMatrix<f64> {
    let d = 2 * (n_max + 1);
    let mut h = DMatrix::<f64>::zeros(d, d);
    let mut lower = DMatrix::<f64>::zeros(d, d);
    for n in 0..=n_max {
        h[(state(true, n), state(true, n))] = pump.detuning;
        lower[(state(false, n), state(true, n))] = 1.0;
        if n < n_max {
            let c = g * ((n + 1) as f64).sqrt();
            h[(state(false, n + 1), state(true, n))] = c;
            h[(state(true, n), state(false, n + 1))] = c;
        }
    }
    let excited_proj = lower.transpose() * &lower;

    let mut index = vec![usize::MAX; d * d];
    let mut pairs = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if excitation(i) == excitation(j) {
                index[i * d + j] = pairs.len();
                pairs.push((i, j));
            }
        }
    }
    let s = pairs.len();
    let minus_i = Complex64::new(0.0, -1.0);
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut liouvillian = DMatrix::<Complex64>::zeros(s, s);
    for (col, &(i, j)) in pairs.iter().enumerate() {
        for (row, &(k, l)) in pairs.iter().enumerate() {
            let commutator = h[(k, i)] * delta(j, l) - delta(k, i) * h[(j, l)];
            let jump = lower[(k, i)] * lower[(l, j)];
            let anti = 0.5 * (excited_proj[(k, i)] * delta(j, l) + delta(k, i) * excited_proj[(j, l)]);
            let value = minus_i * commutator + Complex64::new(gamma * (jump - anti), 0.0);
            if value != Complex64::new(0.0, 0.0) {
                liouvillian[(row, col)] = value;
            }
        }
    }
    let propagator = (liouvillian * Complex64::new(pump.interaction_time, 0.0)).exp();

    let field_dim = n_max + 1;
    let mut transfer = DMatrix::<f64>::zeros(field_dim, field_dim);
    let f = pump.excited_fraction;
    for n in 0..field_dim {
        for (excited, weight) in [(true, f), (false, 1.0 - f)] {
            if weight == 0.0 {
                continue;
            }
            let s_in = state(excited, n);
            let col = index[s_in * d + s_in];
            for m in 0..field_dim {
                let mut pop = 0.0;
                for a in [false, true] {
                    let s_out = state(a, m);
                    pop += propagator[(index[s_out * d + s_out], col)].re;
                }
                transfer[(m, n)] += weight * pop;
            }
        }
    }
    transfer
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qdynamics::steady::{micromaser_steady_state, InjectionModel};
    use crate::qdynamics::transit::emission_probability;
    use std::f64::consts::PI;

    const KAPPA: f64 = 2.0 * PI * 140e3;
    const TAU: f64 = 9.2e-8;

    fn pump(rate: f64) -> PumpModel {
        PumpModel { arrival_rate: rate, interaction_time: TAU, excited_fraction: 1.0, detuning: 0.0 }
    }

    #[test]
    fn no_coupling_leaves_vacuum() {
        let d = lindblad_steady_state_oracle(0.0, &pump(1e7), KAPPA, 0.0, 10).unwrap();
        assert!((d.vacuum_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transit_map_reproduces_rabi_formula() {
        let g = 0.4 / TAU;
        let t = transit_map(g, &pump(1.0), 0.0, 6);
        for n in 0..6 {
            let p = emission_probability(g, TAU, n, 0.0);
            assert!((t[(n + 1, n)] - p).abs() < 1e-10, "n={n}");
            assert!((t[(n, n)] - (1.0 - p)).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_recursion_without_atomic_decay() {
        let g = 0.15 / TAU;
        let rate = 3e6;
        let oracle = lindblad_steady_state_oracle(g, &pump(rate), KAPPA, 0.0, 25).unwrap();
        let inj = InjectionModel::from_rate(rate, TAU).unwrap();
        let rec = micromaser_steady_state(&inj, KAPPA, g, TAU, 25).unwrap();
        assert!((oracle.mean() / rec.mean() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn stronger_damping_empties_cavity() {
        let g = 0.15 / TAU;
        let means: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|s| lindblad_steady_state_oracle(g, &pump(5e6), s * KAPPA, 2.0 * PI * 50e3, 20).unwrap().mean())
            .collect();
        assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
    }

    #[test]
    fn undamped_uncoupled_generator_is_degenerate() {
        let res = lindblad_steady_state_oracle(0.0, &pump(1e6), 0.0, 0.0, 5);
        assert!(matches!(res, Err(Error::DegenerateNullSpace(6))));
    }

    #[test]
    fn truncation_limit_enforced() {
        assert!(lindblad_steady_state_oracle(1e6, &pump(1e6), KAPPA, 0.0, 31).is_err());
    }
}
