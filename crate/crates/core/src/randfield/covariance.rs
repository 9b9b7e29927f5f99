use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CovarianceKind {
    Exponential,
    Matern { nu: f64 },
}

/// Stationary isotropic covariance of the log-permeability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub sigma2: f64,
    pub lambda: f64,
}

impl CovarianceSpec {
    pub fn exponential(sigma2: f64, lambda: f64) -> Result<Self> {
        let spec = CovarianceSpec { kind: CovarianceKind::Exponential, sigma2, lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn matern(sigma2: f64, lambda: f64, nu: f64) -> Result<Self> {
        let spec = CovarianceSpec { kind: CovarianceKind::Matern { nu }, sigma2, lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if let CovarianceKind::Matern { nu } = self.kind {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::invalid(format!("nu must be > 0, got {nu}")));
            }
        }
        Ok(())
    }

    /// Length scale entering the kernel argument: `lambda` for the exponential
    /// kernel and `lambda / (2 sqrt(nu))` for Matérn.
    pub fn scaled_length(&self) -> f64 {
        match self.kind {
            CovarianceKind::Exponential => self.lambda,
            CovarianceKind::Matern { nu } => self.lambda / (2.0 * nu.sqrt()),
        }
    }

    /// Covariance at distance `r >= 0`.
    pub fn covariance(&self, r: f64) -> f64 {
        let r = r.abs();
        match self.kind {
            CovarianceKind::Exponential => self.sigma2 * (-r / self.lambda).exp(),
            CovarianceKind::Matern { nu } => self.sigma2 * matern_correlation(nu, r / self.scaled_length()),
        }
    }
}

/// `2^{1-nu} / Gamma(nu) x^nu K_nu(x)`, which tends to 1 as `x -> 0`.
pub fn matern_correlation(nu: f64, x: f64) -> f64 {
    if x < 1e-12 {
        return 1.0;
    }
    let log_prefactor = (1.0 - nu) * 2f64.ln() - gamma(nu).ln() + nu * x.ln();
    let scaled = bessel_k_scaled(nu, x);
    if scaled == 0.0 {
        return 0.0;
    }
    (log_prefactor + scaled.ln() - x).exp().min(1.0)
}

/// `e^x K_nu(x)` for `x > 0`, from `K_nu(x) = ∫_0^∞ exp(-x cosh t) cosh(nu t) dt`.
///
/// The integrand is analytic and doubly-exponentially decaying, so the plain
/// trapezoidal rule converges geometrically in the step size.
pub fn bessel_k_scaled(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k_scaled needs x > 0");
    if nu.abs() == 0.5 {
        return (PI / (2.0 * x)).sqrt();
    }
    let step = 0.05;
    let mut sum = 0.5; // t = 0 term: exp(-x (cosh 0 - 1)) cosh 0 = 1, halved.
    let mut k = 1;
    loop {
        let t = k as f64 * step;
        let term = (-x * (t.cosh() - 1.0) + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
        sum += term;
        if term < 1e-17 * sum || t > 60.0 {
            break;
        }
        k += 1;
    }
    sum * step
}

/// Piecewise-cubic table of a kernel on `[0, r_max]`, used to speed up the
/// many Matérn evaluations needed by the KLE.
#[derive(Clone, Debug)]
pub(crate) struct KernelTable {
    step: f64,
    values: Vec<f64>,
}

impl KernelTable {
    pub(crate) fn new(spec: &CovarianceSpec, r_max: f64, intervals: usize) -> Self {
        let step = r_max / intervals as f64;
        // Two guard nodes on each side so every lookup has four neighbours.
        let values = (0..intervals + 4)
            .map(|k| spec.covariance((k as f64 - 1.0) * step))
            .collect();
        KernelTable { step, values }
    }

    pub(crate) fn eval(&self, r: f64) -> f64 {
        let s = r / self.step + 1.0;
        let k = (s.floor() as usize).clamp(1, self.values.len() - 3);
        let u = s - k as f64;
        let [f0, f1, f2, f3] = [
            self.values[k - 1],
            self.values[k],
            self.values[k + 1],
            self.values[k + 2],
        ];
        // Lagrange cubic through nodes k-1..k+2.
        let l0 = -u * (u - 1.0) * (u - 2.0) / 6.0;
        let l1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        let l2 = -(u + 1.0) * u * (u - 2.0) / 2.0;
        let l3 = (u + 1.0) * u * (u - 1.0) / 6.0;
        f0 * l0 + f1 * l1 + f2 * l2 + f3 * l3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_values() {
        let spec = CovarianceSpec::exponential(1.0, 1.0).unwrap();
        assert_eq!(spec.covariance(0.0), 1.0);
        assert!((spec.covariance(1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn matern_half_is_exponential_with_scaled_length() {
        let m = CovarianceSpec::matern(1.3, 0.7, 0.5).unwrap();
        let e = CovarianceSpec::exponential(1.3, 0.7 / (2.0 * 0.5f64.sqrt())).unwrap();
        for r in [0.0, 1e-6, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0] {
            assert!((m.covariance(r) - e.covariance(r)).abs() < 1e-13, "r = {r}");
        }
    }

    #[test]
    fn bessel_k_against_closed_forms() {
        // K_{3/2}(x) = sqrt(pi/(2x)) e^{-x} (1 + 1/x).
        for x in [0.01, 0.3, 1.0, 4.0, 25.0] {
            let exact = (PI / (2.0 * x)).sqrt() * (1.0 + 1.0 / x);
            let got = bessel_k_scaled(1.5, x);
            assert!((got / exact - 1.0).abs() < 1e-12, "x = {x}: {got} vs {exact}");
        }
        // Tabulated K_0(1) = 0.42102443824070834, K_2(1) = 1.6248388986351774.
        assert!((bessel_k_scaled(0.0, 1.0) * (-1f64).exp() - 0.421_024_438_240_708_34).abs() < 1e-14);
        assert!((bessel_k_scaled(2.0, 1.0) * (-1f64).exp() - 1.624_838_898_635_177_4).abs() < 1e-13);
    }

    #[test]
    fn matern_nu2_is_smooth_at_origin() {
        let spec = CovarianceSpec::matern(1.0, 0.5, 2.0).unwrap();
        assert_eq!(spec.covariance(0.0), 1.0);
        let c = spec.covariance(1e-4);
        assert!(c < 1.0 && c > 1.0 - 1e-6);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(CovarianceSpec::exponential(1.0, -1.0).is_err());
        assert!(CovarianceSpec::exponential(0.0, 1.0).is_err());
        assert!(CovarianceSpec::matern(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn kernel_table_is_accurate() {
        let spec = CovarianceSpec::matern(1.0, 0.5, 2.0).unwrap();
        let table = KernelTable::new(&spec, 1.5, 20_000);
        for k in 0..1000 {
            let r = 1.5 * k as f64 / 999.0;
            assert!((table.eval(r) - spec.covariance(r)).abs() < 1e-12, "r = {r}");
        }
    }
}
