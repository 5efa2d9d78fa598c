//! Exponential-family priors over continuous visible units.
//!
//! A prior has density `exp(c(v) - A(theta))` with
//! `c(v) = theta^T s(v) + log g(v)`. Units are independent; each contributes
//! a fixed block of sufficient statistics, laid out unit by unit. Only the
//! Gaussian family ships: unit `i` contributes `(v_i, v_i^2)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};

/// Per-unit behaviour of a family.
pub trait UnitFamily {
    /// Number of sufficient statistics contributed by one unit.
    fn stats_per_unit(&self) -> usize;
    fn stats(&self, v: f64, out: &mut [f64]);
    /// Derivative of each statistic with respect to `v`.
    fn dstats(&self, v: f64, out: &mut [f64]);
    /// Checks that the unit's natural parameters are normalizable.
    fn check(&self, theta: &[f64]) -> std::result::Result<(), f64>;
    /// `log ∫ exp(theta^T s(v)) dv` for one unit, base measure excluded.
    fn log_partition(&self, theta: &[f64]) -> f64;
    fn sample<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gaussian;

impl Gaussian {
    pub fn natural_from_moments(mu: f64, sigma: f64) -> [f64; 2] {
        let var = sigma * sigma;
        [mu / var, -0.5 / var]
    }

    pub fn moments_from_natural(theta: &[f64]) -> (f64, f64) {
        let mu = -theta[0] / (2.0 * theta[1]);
        let var = -0.5 / theta[1];
        (mu, var.sqrt())
    }
}

impl UnitFamily for Gaussian {
    fn stats_per_unit(&self) -> usize {
        2
    }

    fn stats(&self, v: f64, out: &mut [f64]) {
        out[0] = v;
        out[1] = v * v;
    }

    fn dstats(&self, v: f64, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = 2.0 * v;
    }

    fn check(&self, theta: &[f64]) -> std::result::Result<(), f64> {
        if theta[1] < 0.0 && theta[1].is_finite() && theta[0].is_finite() {
            Ok(())
        } else {
            Err(theta[1])
        }
    }

    fn log_partition(&self, theta: &[f64]) -> f64 {
        -theta[0] * theta[0] / (4.0 * theta[1]) + 0.5 * (std::f64::consts::PI / -theta[1]).ln()
    }

    fn sample<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> f64 {
        let (mu, sigma) = Self::moments_from_natural(theta);
        let z: f64 = rng.sample(StandardNormal);
        mu + sigma * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Gaussian,
}

impl Family {
    fn unit(&self) -> &Gaussian {
        match self {
            Family::Gaussian => &Gaussian,
        }
    }

    pub fn stats_per_unit(&self) -> usize {
        self.unit().stats_per_unit()
    }

    /// Index of the quadratic statistic within a unit block, if any.
    pub fn quadratic_slot(&self) -> Option<usize> {
        match self {
            Family::Gaussian => Some(1),
        }
    }
}

/// Natural parameters of an independent-unit family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    family: Family,
    values: Vec<f64>,
}

impl NaturalParams {
    pub fn new(family: Family, values: Vec<f64>) -> Result<Self> {
        let k = family.stats_per_unit();
        if values.is_empty() || !values.len().is_multiple_of(k) {
            return Err(Error::InvalidArgument(format!(
                "natural parameter length {} is not a positive multiple of {k}",
                values.len()
            )));
        }
        Ok(Self { family, values })
    }

    pub fn gaussian(mu: &[f64], sigma: &[f64]) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::DimensionMismatch { expected: mu.len(), got: sigma.len() });
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {s}")));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("prior mean".into()));
        }
        let values = mu
            .iter()
            .zip(sigma)
            .flat_map(|(&m, &s)| Gaussian::natural_from_moments(m, s))
            .collect();
        Ok(Self { family: Family::Gaussian, values })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn num_units(&self) -> usize {
        self.values.len() / self.family.stats_per_unit()
    }

    pub fn stat_dim(&self) -> usize {
        self.values.len()
    }

    fn unit_block(&self, i: usize) -> &[f64] {
        let k = self.family.stats_per_unit();
        &self.values[i * k..(i + 1) * k]
    }

    /// Errors on the first unit whose parameters are not normalizable.
    pub fn check_normalizable(&self) -> Result<()> {
        for i in 0..self.num_units() {
            if let Err(value) = self.family.unit().check(self.unit_block(i)) {
                return Err(Error::NonNormalizable { unit: i, value });
            }
        }
        Ok(())
    }

    /// Per-unit `(mean, std)`; Gaussian only.
    pub fn moments(&self) -> Result<Vec<(f64, f64)>> {
        self.check_normalizable()?;
        Ok((0..self.num_units()).map(|i| Gaussian::moments_from_natural(self.unit_block(i))).collect())
    }

    /// `A(theta)` with unit base measure.
    pub fn log_partition(&self) -> Result<f64> {
        self.check_normalizable()?;
        Ok((0..self.num_units()).map(|i| self.family.unit().log_partition(self.unit_block(i))).sum())
    }

    /// `beta * (theta + W h)`.
    pub fn tilt(&self, w: &CouplingMatrix, h: &[f64], beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidBeta(beta));
        }
        if w.rows() != self.stat_dim() {
            return Err(Error::DimensionMismatch { expected: self.stat_dim(), got: w.rows() });
        }
        let shift = w.apply(h)?;
        let values = self.values.iter().zip(&shift).map(|(t, s)| beta * (t + s)).collect();
        let tilted = Self { family: self.family, values };
        tilted.check_normalizable()?;
        Ok(tilted)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.check_normalizable()?;
        Ok((0..self.num_units()).map(|i| self.family.unit().sample(self.unit_block(i), rng)).collect())
    }

    /// Draws only the listed units, in the given order.
    pub fn sample_units<R: Rng + ?Sized>(&self, units: &[usize], rng: &mut R) -> Result<Vec<f64>> {
        for &i in units {
            if let Err(value) = self.family.unit().check(self.unit_block(i)) {
                return Err(Error::NonNormalizable { unit: i, value });
            }
        }
        Ok(units.iter().map(|&i| self.family.unit().sample(self.unit_block(i), rng)).collect())
    }

    /// `theta^T s(v) - A(theta)` under unit base measure.
    pub fn log_density(&self, v: &[f64]) -> Result<f64> {
        Ok(self.dot_stats(v)? - self.log_partition()?)
    }

    /// Log density of one unit's marginal.
    pub fn unit_log_density(&self, unit: usize, x: f64) -> Result<f64> {
        let b = self.unit_block(unit);
        self.family.unit().check(b).map_err(|value| Error::NonNormalizable { unit, value })?;
        let mut s = [0.0; 2];
        self.family.unit().stats(x, &mut s);
        Ok(b.iter().zip(&s).map(|(t, s)| t * s).sum::<f64>() - self.family.unit().log_partition(b))
    }

    fn dot_stats(&self, v: &[f64]) -> Result<f64> {
        let s = sufficient_stats(self.family, v, self.num_units())?;
        Ok(self.values.iter().zip(&s).map(|(t, s)| t * s).sum())
    }
}

/// `s(v)` in the layout `(v_1, v_1^2, v_2, v_2^2, ...)`.
pub fn sufficient_stats(family: Family, v: &[f64], n: usize) -> Result<Vec<f64>> {
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("visible vector".into()));
    }
    let k = family.stats_per_unit();
    let mut out = vec![0.0; n * k];
    for (i, &x) in v.iter().enumerate() {
        family.unit().stats(x, &mut out[i * k..(i + 1) * k]);
    }
    Ok(out)
}

/// `d s_{i,r} / d v_i`, same layout as [`sufficient_stats`].
pub fn sufficient_stats_derivative(family: Family, v: &[f64]) -> Vec<f64> {
    let k = family.stats_per_unit();
    let mut out = vec![0.0; v.len() * k];
    for (i, &x) in v.iter().enumerate() {
        family.unit().dstats(x, &mut out[i * k..(i + 1) * k]);
    }
    out
}

/// Prior `exp(c(v) - A)` with `log g(v)` equal to the family base measure
/// plus a constant `log_base_shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFamilyPrior {
    theta: NaturalParams,
    #[serde(default)]
    log_base_shift: f64,
}

impl ExpFamilyPrior {
    pub fn new(theta: NaturalParams) -> Result<Self> {
        theta.check_normalizable()?;
        Ok(Self { theta, log_base_shift: 0.0 })
    }

    pub fn gaussian(mu: &[f64], sigma: &[f64]) -> Result<Self> {
        Self::new(NaturalParams::gaussian(mu, sigma)?)
    }

    /// Multiplies the base measure by `exp(k)`, shifting `c` by `k`.
    pub fn with_log_base_shift(mut self, k: f64) -> Self {
        self.log_base_shift = k;
        self
    }

    pub fn family(&self) -> Family {
        self.theta.family
    }

    pub fn theta(&self) -> &NaturalParams {
        &self.theta
    }

    pub fn set_theta(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.theta.values.len() {
            return Err(Error::DimensionMismatch { expected: self.theta.values.len(), got: values.len() });
        }
        let candidate = NaturalParams { family: self.theta.family, values: values.to_vec() };
        candidate.check_normalizable()?;
        self.theta = candidate;
        Ok(())
    }

    pub fn log_base_shift(&self) -> f64 {
        self.log_base_shift
    }

    pub fn n(&self) -> usize {
        self.theta.num_units()
    }

    pub fn stat_dim(&self) -> usize {
        self.theta.stat_dim()
    }

    pub fn stats(&self, v: &[f64]) -> Result<Vec<f64>> {
        sufficient_stats(self.family(), v, self.n())
    }

    /// `c(v) = theta^T s(v) + log g(v)`.
    pub fn c_value(&self, v: &[f64]) -> Result<f64> {
        Ok(self.theta.dot_stats(v)? + self.log_base_shift)
    }

    /// `dc/dv`.
    pub fn grad_c_v(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: v.len() });
        }
        let k = self.family().stats_per_unit();
        let ds = sufficient_stats_derivative(self.family(), v);
        Ok((0..self.n())
            .map(|i| (0..k).map(|r| self.theta.values[i * k + r] * ds[i * k + r]).sum())
            .collect())
    }

    /// `dc/dtheta = s(v)`.
    pub fn grad_c_theta(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.stats(v)
    }
}
