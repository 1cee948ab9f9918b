//! Generalized extreme value distribution
//! `F(x) = exp(−[1 + k(x−μ)/σ]^{−1/k})`, with `k > 0` bounded below
//! (Fréchet type), `k < 0` bounded above (Weibull type) and the Gumbel limit
//! for `|k| < 1e−9`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::simplex;
use crate::{Error, Result};

/// Shapes closer to zero than this use the Gumbel form.
pub const GUMBEL_THRESHOLD: f64 = 1e-9;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    /// k, dimensionless.
    pub shape: f64,
    /// σ, in the unit of the data (dB).
    pub scale: f64,
    /// μ, in the unit of the data (dBW).
    pub location: f64,
}

impl GevParams {
    pub fn new(shape: f64, scale: f64, location: f64) -> Result<Self> {
        let p = Self { shape, scale, location };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.shape.is_finite() || !self.location.is_finite() || !self.scale.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid GEV parameters {self:?}")));
        }
        Ok(())
    }

    fn is_gumbel(&self) -> bool {
        self.shape.abs() < GUMBEL_THRESHOLD
    }

    /// `1 + k(x−μ)/σ`; the support is where this is positive.
    fn bracket(&self, x: f64) -> f64 {
        1.0 + self.shape * (x - self.location) / self.scale
    }

    pub fn in_support(&self, x: f64) -> bool {
        self.is_gumbel() || self.bracket(x) > 0.0
    }

    /// `t(x)` such that `F = e^{−t}`.
    fn t(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        if self.is_gumbel() {
            (-z).exp()
        } else {
            (1.0 + self.shape * z).powf(-1.0 / self.shape)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !self.in_support(x) {
            return if self.shape > 0.0 { 0.0 } else { 1.0 };
        }
        (-self.t(x)).exp()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !self.in_support(x) {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.location) / self.scale;
        if self.is_gumbel() {
            -self.scale.ln() - z - (-z).exp()
        } else {
            let s = 1.0 + self.shape * z;
            -self.scale.ln() - (1.0 + 1.0 / self.shape) * s.ln() - s.powf(-1.0 / self.shape)
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Inverse CDF on `(0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let y = -p.ln();
        if self.is_gumbel() {
            self.location - self.scale * y.ln()
        } else {
            self.location + self.scale / self.shape * (y.powf(-self.shape) - 1.0)
        }
    }

    /// One draw by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        // `random` is on [0, 1); map 0 away from the singular end.
        self.quantile(if u > 0.0 { u } else { f64::MIN_POSITIVE })
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| self.ln_pdf(x)).sum()
    }
}

/// The GEV CDF as a free function.
pub fn gev_cdf(x: f64, p: &GevParams) -> f64 {
    p.cdf(x)
}

/// Hosking's probability-weighted-moment estimates, the starting point of the
/// likelihood search.
pub fn pwm_estimate(samples: &[f64]) -> Result<GevParams> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::InvalidArgument("PWM estimate needs at least 3 samples".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let j = i as f64;
        b0 += v;
        b1 += v * j / (nf - 1.0);
        b2 += v * j * (j - 1.0) / ((nf - 1.0) * (nf - 2.0));
    }
    b0 /= nf;
    b1 /= nf;
    b2 /= nf;
    let l2 = 2.0 * b1 - b0;
    if !(l2 > 0.0) {
        return Err(Error::Fit("samples have no spread".into()));
    }
    let c = l2 / (3.0 * b2 - b0) - 2f64.ln() / 3f64.ln();
    // Hosking's shape has the opposite sign to the one used here.
    let kh = 7.8590 * c + 2.9554 * c * c;
    let params = if kh.abs() < 1e-6 {
        let scale = l2 / 2f64.ln();
        GevParams {
            shape: 0.0,
            scale,
            location: b0 - EULER_GAMMA * scale,
        }
    } else {
        let g = gamma(1.0 + kh);
        let scale = l2 * kh / (g * (1.0 - 2f64.powf(-kh)));
        GevParams {
            shape: -kh,
            scale,
            location: b0 - scale * (1.0 - g) / kh,
        }
    };
    params.validate()?;
    Ok(params)
}

/// Options of the likelihood search.
#[derive(Debug, Clone, Copy)]
pub struct GevFitOptions {
    /// Simplex diameter below which the search stops, in the scaled
    /// coordinates `(k, ln σ/σ₀, (μ−μ₀)/σ₀)`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GevFitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 5_000,
        }
    }
}

/// Maximum-likelihood GEV fit by Nelder-Mead from the PWM estimate. Points
/// outside the support are penalized rather than rejected, which keeps the
/// simplex moving back towards feasible parameters.
pub fn fit_gev(samples: &[f64]) -> Result<GevParams> {
    fit_gev_with(samples, &GevFitOptions::default())
}

pub fn fit_gev_with(samples: &[f64], options: &GevFitOptions) -> Result<GevParams> {
    if samples.len() < 50 {
        return Err(Error::InvalidArgument(format!(
            "GEV fit needs at least 50 samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite sample {bad}")));
    }
    let init = pwm_estimate(samples)?;
    let (s0, m0) = (init.scale, init.location);
    let decode = |u: &[f64]| GevParams {
        shape: u[0],
        scale: s0 * u[1].exp(),
        location: m0 + s0 * u[2],
    };
    let nll = |u: &[f64]| -> f64 {
        let p = decode(u);
        let mut total = 0.0;
        let mut violation = 0.0;
        for &x in samples {
            if p.in_support(x) {
                total -= p.ln_pdf(x);
            } else {
                violation += 1.0 - p.bracket(x);
            }
        }
        if violation > 0.0 {
            // Worse than any feasible point and growing with the violation.
            1e12 * (1.0 + violation)
        } else {
            total
        }
    };
    let min = simplex::minimize(
        nll,
        &[init.shape, 0.0, 0.0],
        &[0.05, 0.05, 0.05],
        options.tolerance,
        options.max_iterations,
    );
    let best = decode(&min.x);
    if !min.converged {
        return Err(Error::FitNotConverged {
            iterations: min.iterations,
            best,
        });
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_at_location() {
        for k in [-0.5, -1e-12, 0.0, 0.5] {
            let p = GevParams::new(k, 3.0, -10.0).unwrap();
            assert!((p.cdf(-10.0) - (-1f64).exp()).abs() < 1e-12, "k={k}");
        }
        let g = GevParams::new(1e-12, 2.0, 1.0).unwrap();
        assert!((g.cdf(3.0) - (-(-1f64).exp()).exp()).abs() < 1e-12);
        assert!((g.cdf(3.0) - 0.6922).abs() < 1e-4);
    }

    #[test]
    fn outside_support() {
        let p = GevParams::new(0.5, 1.0, 0.0).unwrap();
        assert_eq!(p.cdf(-2.5), 0.0);
        assert_eq!(p.pdf(-2.5), 0.0);
        let q = GevParams::new(-0.5, 1.0, 0.0).unwrap();
        assert_eq!(q.cdf(2.5), 1.0);
        assert!(GevParams::new(0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn monotone_scan() {
        for k in [-0.5, 0.0, 0.5] {
            let p = GevParams::new(k, 2.0, 0.0).unwrap();
            let mut prev = 0.0;
            for i in 0..1000 {
                let x = -20.0 + 40.0 * i as f64 / 999.0;
                let f = p.cdf(x);
                assert!(f >= prev && (0.0..=1.0).contains(&f), "k={k} x={x}");
                prev = f;
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for k in [-0.3, 0.0, 0.2] {
            let p = GevParams::new(k, 8.0, -120.0).unwrap();
            for q in [0.01, 0.3, 0.5, 0.9, 0.999] {
                assert!((p.cdf(p.quantile(q)) - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn density_integrates_to_cdf() {
        for k in [-0.3, 1e-12, 0.3] {
            let p = GevParams::new(k, 2.0, 1.0).unwrap();
            let (a, b) = (p.quantile(0.01), p.quantile(0.99));
            let steps = 20_000;
            let h = (b - a) / steps as f64;
            // Simpson's rule on the central-difference derivative of the CDF.
            let d = |x: f64| {
                let e = 1e-5 * p.scale;
                (p.cdf(x + e) - p.cdf(x - e)) / (2.0 * e)
            };
            let mut s = d(a) + d(b);
            for i in 1..steps {
                s += d(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = s * h / 3.0;
            assert!((integral - (p.cdf(b) - p.cdf(a))).abs() < 1e-6, "k={k}");
            assert!((d(p.location) - p.pdf(p.location)).abs() < 1e-6);
        }
    }

    #[test]
    fn pwm_is_close() {
        let truth = GevParams::new(-0.15, 8.3, -122.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..20_000).map(|_| truth.sample(&mut rng)).collect();
        let p = pwm_estimate(&xs).unwrap();
        assert!((p.shape - truth.shape).abs() < 0.05);
        assert!((p.scale - truth.scale).abs() < 0.3);
        assert!((p.location - truth.location).abs() < 0.3);
    }

    #[test]
    fn recovers_synthetic_parameters() {
        let truth = GevParams::new(-0.15, 8.3, -122.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let xs: Vec<f64> = (0..100_000).map(|_| truth.sample(&mut rng)).collect();
        let fit = fit_gev(&xs).unwrap();
        assert!((fit.shape - truth.shape).abs() <= 0.02, "{fit:?}");
        assert!((fit.scale - truth.scale).abs() <= 0.15, "{fit:?}");
        assert!((fit.location - truth.location).abs() <= 0.15, "{fit:?}");
        assert!(xs.iter().all(|&x| fit.in_support(x)));
        let init = pwm_estimate(&xs).unwrap();
        assert!(fit.log_likelihood(&xs) >= init.log_likelihood(&xs));
    }

    #[test]
    fn fit_contracts() {
        assert!(fit_gev(&[1.0; 49]).is_err());
        assert!(matches!(fit_gev(&[1.0; 60]), Err(Error::Fit(_))));
        let truth = GevParams::new(0.1, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..500).map(|_| truth.sample(&mut rng)).collect();
        let capped = GevFitOptions {
            max_iterations: 2,
            ..Default::default()
        };
        match fit_gev_with(&xs, &capped) {
            Err(Error::FitNotConverged { iterations, best }) => {
                assert_eq!(iterations, 2);
                assert!(best.scale > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
