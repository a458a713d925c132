//! Damped least squares (Levenberg-Marquardt with Marquardt's diagonal
//! scaling) and the fit report shared by every curve fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step ends the search.
    pub ftol: f64,
    /// Relative step size below which an accepted step ends the search.
    pub xtol: f64,
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, ftol: 1e-14, xtol: 1e-12, gtol: 1e-300 }
    }
}

/// Residual function, optional analytic Jacobian, and optional box bounds.
pub struct LmProblem<'a> {
    pub residuals: &'a dyn Fn(&[f64]) -> Vec<f64>,
    pub jacobian: Option<&'a dyn Fn(&[f64]) -> DMatrix<f64>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl<'a> LmProblem<'a> {
    pub fn new(residuals: &'a dyn Fn(&[f64]) -> Vec<f64>) -> Self {
        Self { residuals, jacobian: None, lower: None, upper: None }
    }

    pub fn with_jacobian(mut self, jacobian: &'a dyn Fn(&[f64]) -> DMatrix<f64>) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = Some(lower);
        self.upper = Some(upper);
        self
    }

    fn clamp(&self, p: &mut [f64]) {
        if let Some(lo) = &self.lower {
            p.iter_mut().zip(lo).for_each(|(v, l)| *v = v.max(*l));
        }
        if let Some(hi) = &self.upper {
            p.iter_mut().zip(hi).for_each(|(v, h)| *v = v.min(*h));
        }
    }

    fn jacobian_at(&self, p: &[f64], r: &[f64]) -> DMatrix<f64> {
        match self.jacobian {
            Some(j) => j(p),
            None => finite_difference_jacobian(self.residuals, p, r.len()),
        }
    }
}

/// Central differences with step `max(1e-6 |p|, 1e-9)`.
pub fn finite_difference_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, p: &[f64], m: usize) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = (1e-6 * p[j].abs()).max(1e-9);
        q[j] = p[j] + h;
        let up = f(&q);
        q[j] = p[j] - h;
        let down = f(&q);
        q[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `Σ r²`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub jacobian: DMatrix<f64>,
}

impl LmSolution {
    /// `(JᵀJ)⁻¹`, the inverse Fisher information for unit-variance residuals.
    pub fn fisher_inverse(&self) -> Option<DMatrix<f64>> {
        let jtj = self.jacobian.transpose() * &self.jacobian;
        pseudo_inverse_spd(&jtj)
    }

    /// Fisher inverse scaled by the reduced chi-square.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let dof = self.residuals.len().saturating_sub(self.params.len()).max(1);
        self.fisher_inverse().map(|c| c * (self.cost / dof as f64))
    }

    /// Condition number of `JᵀJ` after scaling every column to unit norm.
    pub fn condition_number(&self) -> f64 {
        let mut j = self.jacobian.clone();
        for mut col in j.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        let eig = (j.transpose() * &j).symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

fn pseudo_inverse_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    // Symmetric scaling keeps the inversion well conditioned when parameters
    // have very different magnitudes.
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)].abs().sqrt()).collect();
    if d.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return None;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]));
    let inv = scaled.try_inverse()?;
    Some(DMatrix::from_fn(n, n, |i, j| inv[(i, j)] / (d[i] * d[j])))
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub fn levenberg_marquardt(problem: &LmProblem, start: &[f64], opts: &LmOptions) -> LmSolution {
    let mut p = start.to_vec();
    problem.clamp(&mut p);
    let mut r = (problem.residuals)(&p);
    let mut cost = sum_sq(&r);
    let mut jac = problem.jacobian_at(&p, &r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let n = p.len();

    while iterations < opts.max_iterations {
        iterations += 1;
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        if g.amax() <= opts.gtol || cost == 0.0 {
            converged = true;
            break;
        }
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].max(1e-300)).collect();
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * diag[i];
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            problem.clamp(&mut trial);
            let r_trial = (problem.residuals)(&trial);
            let cost_trial = sum_sq(&r_trial);
            if cost_trial.is_finite() && cost_trial < cost {
                let step_norm: f64 = trial.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let p_norm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let decrease = (cost - cost_trial) / cost;
                p = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if decrease <= opts.ftol || step_norm <= opts.xtol * (p_norm + opts.xtol) {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No downhill step at any damping: a minimum to working precision.
            converged = true;
            break;
        }
        jac = problem.jacobian_at(&p, &r);
        if converged {
            break;
        }
    }
    if converged {
        polish(problem, &mut p, &mut r, &mut cost, &mut jac);
    }
    LmSolution { params: p, residuals: r, cost, iterations, converged, jacobian: jac }
}

/// Undamped Gauss-Newton steps from a converged point. Near the minimum the
/// cost is flat to rounding, so steps are taken on the gradient condition
/// alone while they keep shrinking; this pins the stationary point far more
/// tightly than cost comparisons can.
fn polish(problem: &LmProblem, p: &mut Vec<f64>, r: &mut Vec<f64>, cost: &mut f64, jac: &mut DMatrix<f64>) {
    let mut last_step = f64::INFINITY;
    for _ in 0..8 {
        let jt = jac.transpose();
        let a = &jt * &*jac;
        let g = &jt * DVector::from_column_slice(r);
        let Some(ch) = a.cholesky() else { return };
        let step = ch.solve(&(-g));
        let size = step.norm();
        if !(size < last_step) || size == 0.0 {
            return;
        }
        let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        problem.clamp(&mut trial);
        let r_trial = (problem.residuals)(&trial);
        let cost_trial = sum_sq(&r_trial);
        if !(cost_trial <= *cost * (1.0 + 1e-9) + 1e-300) {
            return;
        }
        *p = trial;
        *r = r_trial;
        *cost = cost_trial;
        *jac = problem.jacobian_at(p, r);
        last_step = size;
    }
}

/// Parameter estimates of one fit, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// One-standard-deviation uncertainties.
    pub sigmas: Vec<f64>,
    /// `√Σ r²` of the (weighted) residuals in data units.
    pub residual_norm: f64,
    pub converged: bool,
    pub condition_number: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.sigmas[i])
    }

    /// Values of a non-converged fit must not be reported.
    pub fn reportable(&self) -> bool {
        self.converged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fits_exponential_decay() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-1.3 * t).exp() + 0.2).collect();
        let f = |p: &[f64]| t.iter().zip(&y).map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y).collect::<Vec<_>>();
        let sol = levenberg_marquardt(&LmProblem::new(&f), &[1.0, 0.5, 0.0], &LmOptions::default());
        assert!(sol.converged);
        assert_relative_eq!(sol.params[0], 2.5, max_relative = 1e-9);
        assert_relative_eq!(sol.params[1], 1.3, max_relative = 1e-9);
        assert_relative_eq!(sol.params[2], 0.2, max_relative = 1e-9);
    }

    #[test]
    fn bounds_are_respected() {
        let f = |p: &[f64]| vec![p[0] + 3.0];
        let sol = levenberg_marquardt(
            &LmProblem::new(&f).with_bounds(vec![0.0], vec![10.0]),
            &[5.0],
            &LmOptions::default(),
        );
        assert_eq!(sol.params[0], 0.0);
    }

    #[test]
    fn covariance_of_straight_line() {
        // y = a + b x with unit residual noise: cov = σ² (XᵀX)⁻¹.
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let noise = [0.1, -0.2, 0.05, 0.3, -0.1, 0.0, -0.25, 0.15, 0.1, -0.15];
        let y: Vec<f64> = x.iter().zip(&noise).map(|(x, e)| 1.0 + 2.0 * x + e).collect();
        let f = |p: &[f64]| x.iter().zip(&y).map(|(x, y)| p[0] + p[1] * x - y).collect::<Vec<_>>();
        let sol = levenberg_marquardt(&LmProblem::new(&f), &[0.0, 0.0], &LmOptions::default());
        let cov = sol.covariance().unwrap();
        let s2 = sol.cost / 8.0;
        let sxx: f64 = x.iter().map(|x| (x - 4.5).powi(2)).sum();
        assert_relative_eq!(cov[(1, 1)], s2 / sxx, max_relative = 1e-6);
    }

    #[test]
    fn finite_differences_match_analytic() {
        let f = |p: &[f64]| vec![p[0].sin() * p[1], p[1].powi(3)];
        let j = finite_difference_jacobian(&f, &[0.7, 1.3], 2);
        assert_relative_eq!(j[(0, 0)], 0.7f64.cos() * 1.3, max_relative = 1e-8);
        assert_relative_eq!(j[(0, 1)], 0.7f64.sin(), max_relative = 1e-8);
        assert_relative_eq!(j[(1, 1)], 3.0 * 1.69, max_relative = 1e-8);
    }
}
