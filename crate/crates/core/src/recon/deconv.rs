//! Richardson-Lucy deconvolution and the regularized spectral inverse.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlOptions {
    pub max_iterations: usize,
    /// Stop when `Σ|u_new − u| / Σu` falls below this.
    pub tolerance: f64,
}

impl Default for RlOptions {
    fn default() -> Self {
        Self { max_iterations: 500, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlResult {
    pub estimate: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration cap was reached first.
    pub converged: bool,
    /// Kullback-Leibler divergence between data and re-blurred estimate,
    /// before the first update and after each one.
    pub kl_history: Vec<f64>,
    /// Per-point spread (max − min) over the last ten iterates.
    pub numerical_error: Vec<f64>,
}

/// Blur with a centered kernel on a 2D grid, mirroring the data about the
/// edges (half-sample symmetric), together with its exact adjoint.
struct Blur<'a> {
    rows: usize,
    cols: usize,
    kernel: &'a [f64],
    krows: usize,
    kcols: usize,
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut j = i;
    loop {
        if j < 0 {
            j = -j - 1;
        } else if j >= n {
            j = 2 * n - j - 1;
        } else {
            return j as usize;
        }
    }
}

impl Blur<'_> {
    fn taps(&self) -> impl Iterator<Item = (isize, isize, f64)> + '_ {
        let hr = (self.krows / 2) as isize;
        let hc = (self.kcols / 2) as isize;
        (0..self.krows).flat_map(move |a| {
            (0..self.kcols).filter_map(move |b| {
                let k = self.kernel[a * self.kcols + b];
                (k != 0.0).then_some((a as isize - hr, b as isize - hc, k))
            })
        })
    }

    fn forward(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (da, db, k) in self.taps() {
            for i in 0..self.rows {
                let si = reflect(i as isize + da, self.rows);
                for j in 0..self.cols {
                    let sj = reflect(j as isize + db, self.cols);
                    out[i * self.cols + j] += k * u[si * self.cols + sj];
                }
            }
        }
    }

    fn adjoint(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (da, db, k) in self.taps() {
            for i in 0..self.rows {
                let si = reflect(i as isize + da, self.rows);
                for j in 0..self.cols {
                    let sj = reflect(j as isize + db, self.cols);
                    out[si * self.cols + sj] += k * v[i * self.cols + j];
                }
            }
        }
    }
}

fn check_inputs(data: &[f64], kernel: &[f64]) -> Result<()> {
    ensure_finite(data, "deconvolution data")?;
    ensure_finite(kernel, "point-spread function")?;
    if let Some((index, value)) = data.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeInput { index, value: *value });
    }
    if kernel.iter().any(|k| *k < 0.0) {
        return Err(Error::InvalidInput("point-spread function has negative entries".into()));
    }
    let total: f64 = kernel.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::PsfNotNormalized(total));
    }
    Ok(())
}

/// `Σ d ln(d / m) − d + m`.
pub fn kl_divergence(data: &[f64], model: &[f64]) -> f64 {
    data.iter()
        .zip(model)
        .map(|(d, m)| {
            let log_term = if *d > 0.0 { d * (d / m).ln() } else { 0.0 };
            log_term - d + m
        })
        .sum()
}

/// One-dimensional Richardson-Lucy with an odd-length centered kernel.
pub fn richardson_lucy(data: &[f64], psf: &[f64], opts: &RlOptions) -> Result<RlResult> {
    if psf.len() % 2 == 0 {
        return Err(Error::InvalidInput("kernel length must be odd".into()));
    }
    richardson_lucy_2d(data, 1, data.len(), psf, 1, psf.len(), opts)
}

/// Two-dimensional Richardson-Lucy on a row-major `rows × cols` grid with a
/// centered `krows × kcols` kernel.
pub fn richardson_lucy_2d(
    data: &[f64],
    rows: usize,
    cols: usize,
    psf: &[f64],
    krows: usize,
    kcols: usize,
    opts: &RlOptions,
) -> Result<RlResult> {
    if rows * cols != data.len() || data.is_empty() || krows * kcols != psf.len() {
        return Err(Error::InvalidInput("array dimensions do not match their lengths".into()));
    }
    if krows % 2 == 0 || kcols % 2 == 0 || krows / 2 > rows || kcols / 2 > cols {
        return Err(Error::InvalidInput("kernel must have odd sides no wider than the data".into()));
    }
    if opts.max_iterations == 0 {
        return Err(Error::InvalidInput("at least one iteration is required".into()));
    }
    check_inputs(data, psf)?;
    let blur = Blur { rows, cols, kernel: psf, krows, kcols };
    let n = data.len();
    let flux: f64 = data.iter().sum();
    if flux == 0.0 {
        return Ok(RlResult {
            estimate: vec![0.0; n],
            iterations: 0,
            converged: true,
            kl_history: vec![0.0],
            numerical_error: vec![0.0; n],
        });
    }
    let mut norm = vec![0.0; n];
    blur.adjoint(&vec![1.0; n], &mut norm);
    let mut u = vec![flux / n as f64; n];
    let mut model = vec![0.0; n];
    let mut ratio = vec![0.0; n];
    let mut correction = vec![0.0; n];
    blur.forward(&u, &mut model);
    let mut kl_history = vec![kl_divergence(data, &model)];
    let mut recent: Vec<Vec<f64>> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        for i in 0..n {
            ratio[i] = if model[i] > 0.0 { data[i] / model[i] } else { 0.0 };
        }
        blur.adjoint(&ratio, &mut correction);
        let mut change = 0.0;
        let mut total = 0.0;
        for i in 0..n {
            let next = if norm[i] > 0.0 { u[i] * correction[i] / norm[i] } else { u[i] };
            change += (next - u[i]).abs();
            total += next;
            u[i] = next;
        }
        blur.forward(&u, &mut model);
        kl_history.push(kl_divergence(data, &model));
        recent.push(u.clone());
        if recent.len() > 10 {
            recent.remove(0);
        }
        if change <= opts.tolerance * total {
            converged = true;
            break;
        }
    }
    let numerical_error = (0..n)
        .map(|i| {
            let (lo, hi) = recent.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[i]), hi.max(v[i])));
            hi - lo
        })
        .collect();
    Ok(RlResult { estimate: u, iterations, converged, kl_history, numerical_error })
}

/// Blurs `data` with the same boundary handling Richardson-Lucy assumes.
pub fn reflective_convolve(data: &[f64], psf: &[f64]) -> Result<Vec<f64>> {
    if psf.len() % 2 == 0 || psf.len() / 2 > data.len() {
        return Err(Error::InvalidInput("kernel must be odd and no wider than the data".into()));
    }
    let blur = Blur { rows: 1, cols: data.len(), kernel: psf, krows: 1, kcols: psf.len() };
    let mut out = vec![0.0; data.len()];
    blur.forward(data, &mut out);
    Ok(out)
}

/// Circular convolution of `data` with `response` centered at index
/// `len / 2`, computed directly.
pub fn circular_convolve(data: &[f64], response: &[f64]) -> Result<Vec<f64>> {
    let n = data.len();
    if response.len() != n {
        return Err(Error::InvalidInput("response must have the data length".into()));
    }
    let c = n / 2;
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|k| {
                    let src = (i + n + c - k) % n;
                    response[k] * data[src]
                })
                .sum()
        })
        .collect())
}

/// Estimate of the underlying profile from a trace blurred by `response`
/// (same grid, centered at index `len / 2`, periodic boundary):
/// `F⁻¹[F(d)·conj(F(r)) / (|F(r)|² + ε²·max|F(r)|²)]`.
pub fn wiener_spectral_inverse(data: &[f64], response: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let n = data.len();
    if n == 0 || response.len() != n {
        return Err(Error::InvalidInput("data and response must be non-empty and equal length".into()));
    }
    ensure_finite(data, "data")?;
    ensure_finite(response, "response")?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput("regularization must be finite and non-negative".into()));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let c = n / 2;
    let mut d: Vec<Complex64> = data.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    // Move the response center to index 0.
    let mut r: Vec<Complex64> = (0..n).map(|i| Complex64::new(response[(i + c) % n], 0.0)).collect();
    fft.process(&mut d);
    fft.process(&mut r);
    let r_max = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let d_power: Vec<f64> = d.iter().map(|v| v.norm_sqr()).collect();
    let p_max = d_power.iter().cloned().fold(0.0, f64::max);
    let floor = epsilon * r_max;
    let carried = |i: usize| d_power[i] > 0.01 * p_max;
    let any_signal = (0..n).any(carried);
    if r_max == 0.0 || (any_signal && (0..n).filter(|i| carried(*i)).all(|i| r[i].norm() < floor)) {
        return Err(Error::ZeroResponse);
    }
    let reg = (epsilon * r_max).powi(2);
    let mut out: Vec<Complex64> = d
        .iter()
        .zip(&r)
        .map(|(dv, rv)| {
            let denom = rv.norm_sqr() + reg;
            if denom == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                dv * rv.conj() / denom
            }
        })
        .collect();
    ifft.process(&mut out);
    Ok(out.iter().map(|v| v.re / n as f64).collect())
}

/// Resamples a centered kernel from one grid spacing to another by
/// differencing its piecewise-linear cumulative distribution. The result is
/// odd-length, symmetric about the center when the input is, and sums to 1.
pub fn resample_kernel(kernel: &[f64], from_spacing: f64, to_spacing: f64) -> Result<Vec<f64>> {
    if kernel.is_empty() || kernel.len() % 2 == 0 {
        return Err(Error::InvalidInput("kernel length must be odd".into()));
    }
    if !(from_spacing > 0.0 && to_spacing > 0.0) {
        return Err(Error::InvalidInput("spacings must be positive".into()));
    }
    let half_in = (kernel.len() / 2) as f64;
    let extent = (half_in + 0.5) * from_spacing;
    // Cumulative mass at position x (kernel cells span ±spacing/2).
    let total: f64 = kernel.iter().sum();
    let cdf = |x: f64| -> f64 {
        let pos = x / from_spacing + half_in + 0.5;
        if pos <= 0.0 {
            return 0.0;
        }
        let full = pos.floor() as usize;
        let mut acc: f64 = kernel.iter().take(full.min(kernel.len())).sum();
        if full < kernel.len() {
            acc += kernel[full] * (pos - full as f64);
        }
        acc / total
    };
    let half_out = (extent / to_spacing - 0.5).ceil().max(0.0) as usize;
    let out: Vec<f64> = (0..=2 * half_out)
        .map(|i| {
            let center = (i as f64 - half_out as f64) * to_spacing;
            cdf(center + 0.5 * to_spacing) - cdf(center - 0.5 * to_spacing)
        })
        .collect();
    let sum: f64 = out.iter().sum();
    Ok(out.into_iter().map(|v| v / sum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gaussian_kernel(sigma_cells: f64, half: usize) -> Vec<f64> {
        let k: Vec<f64> = (0..=2 * half).map(|i| (-0.5 * ((i as f64 - half as f64) / sigma_cells).powi(2)).exp()).collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let data = [1.0, 3.0, 0.5, 2.0, 0.0];
        let r = richardson_lucy(&data, &[1.0], &RlOptions::default()).unwrap();
        for (a, b) in r.estimate.iter().zip(&data) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        assert!(r.converged);
    }

    #[test]
    fn constant_is_fixed_point() {
        let data = vec![2.0; 40];
        let r = richardson_lucy(&data, &gaussian_kernel(2.0, 6), &RlOptions::default()).unwrap();
        assert!(r.estimate.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn adjoint_is_exact() {
        let k = [0.1, 0.5, 0.15, 0.25, 0.0];
        let blur = Blur { rows: 1, cols: 7, kernel: &k, krows: 1, kcols: 5 };
        let u = [1.0, -2.0, 0.3, 4.0, 0.7, -1.1, 2.2];
        let v = [0.4, 1.5, -0.2, 0.9, 3.0, -0.6, 1.0];
        let (mut hu, mut htv) = ([0.0; 7], [0.0; 7]);
        blur.forward(&u, &mut hu);
        blur.adjoint(&v, &mut htv);
        let lhs: f64 = hu.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&htv).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            richardson_lucy(&[1.0, -0.5], &[1.0], &RlOptions::default()),
            Err(Error::NegativeInput { index: 1, .. })
        ));
        assert!(matches!(
            richardson_lucy(&[1.0, 0.5], &[0.5, 0.2, 0.2], &RlOptions::default()),
            Err(Error::PsfNotNormalized(_))
        ));
    }

    #[test]
    fn two_dimensional_conserves_flux() {
        let (rows, cols) = (12, 15);
        let data: Vec<f64> = (0..rows * cols).map(|i| 1.0 + ((i * 7) % 11) as f64).collect();
        let k1 = gaussian_kernel(1.0, 2);
        let k2: Vec<f64> = k1.iter().flat_map(|a| k1.iter().map(move |b| a * b)).collect();
        let r = richardson_lucy_2d(&data, rows, cols, &k2, 5, 5, &RlOptions { max_iterations: 50, tolerance: 1e-6 }).unwrap();
        let sd: f64 = data.iter().sum();
        let su: f64 = r.estimate.iter().sum();
        assert!((su / sd - 1.0).abs() < 1e-10);
    }

    #[test]
    fn wiener_identity_for_delta() {
        let data: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).sin() + 2.0).collect();
        let mut delta = vec![0.0; 32];
        delta[16] = 1.0;
        let out = wiener_spectral_inverse(&data, &delta, 0.0).unwrap();
        for (a, b) in out.iter().zip(&data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wiener_inverts_known_blur() {
        let n = 128;
        let truth: Vec<f64> = (0..n).map(|i| 1.0 + (2.0 * std::f64::consts::PI * 5.0 * i as f64 / n as f64).cos()).collect();
        let mut resp = vec![0.0; n];
        for (k, v) in gaussian_kernel(1.5, 8).iter().enumerate() {
            resp[n / 2 - 8 + k] = *v;
        }
        let blurred = circular_convolve(&truth, &resp).unwrap();
        let out = wiener_spectral_inverse(&blurred, &resp, 1e-6).unwrap();
        for (a, b) in out.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-6);
        }
        // Larger ε flattens the estimate toward the mean.
        let errs: Vec<f64> = [1e-3, 0.1, 0.3, 0.6, 0.9]
            .iter()
            .map(|e| {
                let o = wiener_spectral_inverse(&blurred, &resp, *e).unwrap();
                o.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] >= w[0]), "{errs:?}");
    }

    #[test]
    fn zero_response_rejected() {
        assert!(matches!(wiener_spectral_inverse(&[1.0, 2.0, 3.0], &[0.0; 3], 1e-3), Err(Error::ZeroResponse)));
    }

    #[test]
    fn resampled_kernel_preserves_moments() {
        let k = gaussian_kernel(4.0, 20);
        let r = resample_kernel(&k, 1.0, 2.5).unwrap();
        assert_eq!(r.len() % 2, 1);
        assert_relative_eq!(r.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        let h = (r.len() / 2) as f64;
        let var: f64 = r.iter().enumerate().map(|(i, v)| v * ((i as f64 - h) * 2.5).powi(2)).sum();
        let var_in: f64 = k.iter().enumerate().map(|(i, v)| v * (i as f64 - 20.0).powi(2)).sum();
        // Cell smoothing adds roughly (Δ² + Δ'²)/12.
        assert!((var - var_in).abs() < 1.0, "{var} vs {var_in}");
        for i in 0..r.len() {
            assert_relative_eq!(r[i], r[r.len() - 1 - i], max_relative = 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rl_is_nonnegative_flux_preserving_and_kl_monotone(
            data in prop::collection::vec(0.0f64..10.0, 8..40), sigma in 0.3f64..3.0
        ) {
            let k = gaussian_kernel(sigma, 4.min(data.len() / 2));
            let r = richardson_lucy(&data, &k, &RlOptions { max_iterations: 60, tolerance: 1e-9 }).unwrap();
            prop_assert!(r.estimate.iter().all(|v| *v >= 0.0));
            let sd: f64 = data.iter().sum();
            let su: f64 = r.estimate.iter().sum();
            prop_assert!((su - sd).abs() <= 1e-6 * sd.max(1e-300));
            for w in r.kl_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", r.kl_history);
            }
        }
    }
}
