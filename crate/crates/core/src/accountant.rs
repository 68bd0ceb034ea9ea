//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Per-step RDP at integer orders uses the exact binomial expansion
//!
//! ```text
//! A_a = sum_{i=0..a} C(a,i) (1-q)^(a-i) q^i exp((i^2 - i) / (2 z^2)),  rdp(a) = ln(A_a) / (a-1)
//! ```
//!
//! evaluated in log space. Fractional orders use the two-sided series with
//! complementary error functions, which coincides with the binomial form at
//! integer orders. Composition over `T` steps is additive.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Default order grid: 1.25..4.5 in quarter/half steps, 5..=64, 128, 256, 512.
pub fn default_orders() -> Vec<f64> {
    let mut v = vec![1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0, 3.5, 4.0, 4.5];
    v.extend((5..=64).map(f64::from));
    v.extend([128.0, 256.0, 512.0]);
    v
}

/// Parameters of one accounting query.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountantInput {
    pub sampling_probability: f64,
    pub noise_multiplier: f64,
    pub steps: u64,
    pub orders: Vec<f64>,
}

impl AccountantInput {
    /// Poisson sampling with mean cohort `expected_cohort` out of `population`.
    pub fn poisson(expected_cohort: f64, population: usize, noise_multiplier: f64, steps: u64) -> Self {
        Self {
            sampling_probability: expected_cohort / population as f64,
            noise_multiplier,
            steps,
            orders: default_orders(),
        }
    }
}

/// An (epsilon, delta) guarantee and the order that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    pub optimal_order: f64,
}

/// RDP-to-(epsilon, delta) conversion rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Conversion {
    /// `eps = rdp + ln(1/delta) / (a - 1)`.
    Classic,
    /// `eps = rdp + ln((a-1)/a) - (ln(delta) + ln(a)) / (a - 1)`, floored at 0.
    #[default]
    Tight,
}

impl std::str::FromStr for Conversion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classic" => Ok(Self::Classic),
            "tight" => Ok(Self::Tight),
            other => Err(format!("unknown conversion `{other}` (expected classic or tight)")),
        }
    }
}

impl std::fmt::Display for Conversion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Classic => "classic",
            Self::Tight => "tight",
        })
    }
}

impl Conversion {
    pub fn epsilon(self, rdp: f64, order: f64, delta: f64) -> f64 {
        match self {
            Self::Classic => rdp + (1.0 / delta).ln() / (order - 1.0),
            Self::Tight => {
                let e = rdp + (-1.0 / order).ln_1p() - (delta.ln() + order.ln()) / (order - 1.0);
                e.max(0.0)
            }
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// `ln(erfc(x))`, switching to the asymptotic series where erfc underflows.
fn log_erfc(x: f64) -> f64 {
    let r = erfc(x);
    if r > 1e-300 {
        r.ln()
    } else {
        let x2 = x * x;
        -std::f64::consts::PI.ln() / 2.0 - x.ln() - x2 - 0.5 / x2 + 0.625 / (x2 * x2) - 37.0 / 24.0 / (x2 * x2 * x2)
            + 353.0 / 64.0 / (x2 * x2 * x2 * x2)
    }
}

fn log_a_integer(q: f64, sigma: f64, order: u64) -> f64 {
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let a = order as f64;
    let mut log_binom = 0.0;
    let mut acc = f64::NEG_INFINITY;
    for i in 0..=order {
        if i > 0 {
            log_binom += (a - i as f64 + 1.0).ln() - (i as f64).ln();
        }
        let fi = i as f64;
        let term = log_binom + fi * lq + (a - fi) * l1q + (fi * fi - fi) / (2.0 * sigma * sigma);
        acc = log_add(acc, term);
    }
    acc
}

fn log_a_fractional(q: f64, sigma: f64, order: f64) -> f64 {
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let s2 = sigma * sigma;
    let z0 = s2 * (1.0 / q - 1.0).ln() + 0.5;
    let (mut a0, mut a1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut log_binom = 0.0;
    let mut sign = 1.0;
    let mut i = 0u64;
    loop {
        let fi = i as f64;
        if i > 0 {
            let factor = (order - fi + 1.0) / fi;
            if factor < 0.0 {
                sign = -sign;
            }
            log_binom += factor.abs().ln();
        }
        let j = order - fi;
        let t0 = log_binom + fi * lq + j * l1q;
        let t1 = log_binom + j * lq + fi * l1q;
        let e0 = 0.5f64.ln() + log_erfc((fi - z0) / (std::f64::consts::SQRT_2 * sigma));
        let e1 = 0.5f64.ln() + log_erfc((z0 - j) / (std::f64::consts::SQRT_2 * sigma));
        let s0 = t0 + (fi * fi - fi) / (2.0 * s2) + e0;
        let s1 = t1 + (j * j - j) / (2.0 * s2) + e1;
        if sign > 0.0 {
            a0 = log_add(a0, s0);
            a1 = log_add(a1, s1);
        } else {
            a0 = log_sub(a0, s0);
            a1 = log_sub(a1, s1);
        }
        i += 1;
        if s0.max(s1) < -30.0 || i > 10_000 {
            break;
        }
    }
    log_add(a0, a1)
}

fn rdp_one_step(q: f64, z: f64, order: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    if z == 0.0 {
        return f64::INFINITY;
    }
    if q == 1.0 {
        return order / (2.0 * z * z);
    }
    if order.fract() == 0.0 {
        log_a_integer(q, z, order as u64) / (order - 1.0)
    } else {
        log_a_fractional(q, z, order) / (order - 1.0)
    }
}

/// RDP of `steps` compositions of the subsampled Gaussian, one value per order.
pub fn rdp_subsampled_gaussian(q: f64, z: f64, steps: u64, orders: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param("sampling_probability", "must lie in [0, 1]"));
    }
    if !(z >= 0.0) {
        return Err(Error::param("noise_multiplier", "must be non-negative"));
    }
    if let Some(&a) = orders.iter().find(|&&a| !(a > 1.0)) {
        return Err(Error::param("orders", format!("order {a} is not > 1")));
    }
    Ok(orders.iter().map(|&a| rdp_one_step(q, z, a) * steps as f64).collect())
}

/// Per-order epsilon for the given RDP curve.
pub fn epsilons_per_order(rdp: &[f64], orders: &[f64], delta: f64, conversion: Conversion) -> Vec<f64> {
    rdp.iter()
        .zip(orders)
        .map(|(&r, &a)| conversion.epsilon(r, a, delta))
        .collect()
}

/// Smallest epsilon over the order grid.
pub fn rdp_to_epsilon(rdp: &[f64], orders: &[f64], delta: f64, conversion: Conversion) -> Result<PrivacySpec> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", "must lie in (0, 1)"));
    }
    if rdp.len() != orders.len() {
        return Err(Error::DimensionMismatch {
            expected: orders.len(),
            actual: rdp.len(),
        });
    }
    epsilons_per_order(rdp, orders, delta, conversion)
        .into_iter()
        .zip(orders)
        .filter(|(e, _)| e.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(epsilon, &optimal_order)| PrivacySpec {
            epsilon,
            delta,
            optimal_order,
        })
        .ok_or(Error::NonFinite("epsilon at every order".into()))
}

/// Forward accounting: parameters to (epsilon, delta).
pub fn report_epsilon(input: &AccountantInput, delta: f64, conversion: Conversion) -> Result<PrivacySpec> {
    let rdp = rdp_subsampled_gaussian(
        input.sampling_probability,
        input.noise_multiplier,
        input.steps,
        &input.orders,
    )?;
    rdp_to_epsilon(&rdp, &input.orders, delta, conversion)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    pub z_min: f64,
    pub z_max: f64,
    pub relative_tolerance: f64,
    pub orders: Vec<f64>,
    pub conversion: Conversion,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            z_min: 0.01,
            z_max: 100.0,
            relative_tolerance: 1e-4,
            orders: default_orders(),
            conversion: Conversion::default(),
        }
    }
}

/// Smallest noise multiplier whose epsilon does not exceed `target_epsilon`.
///
/// Bisection on `z`, using that epsilon is non-increasing in `z`.
pub fn calibrate_noise(
    target_epsilon: f64,
    delta: f64,
    q: f64,
    steps: u64,
    options: &CalibrationOptions,
) -> Result<f64> {
    if !(target_epsilon > 0.0) {
        return Err(Error::param("target_epsilon", "must be positive"));
    }
    let eps = |z: f64| -> Result<f64> {
        let rdp = rdp_subsampled_gaussian(q, z, steps, &options.orders)?;
        Ok(rdp_to_epsilon(&rdp, &options.orders, delta, options.conversion)
            .map(|p| p.epsilon)
            .unwrap_or(f64::INFINITY))
    };
    let (mut lo, mut hi) = (options.z_min, options.z_max);
    if eps(lo)? <= target_epsilon {
        return Ok(lo);
    }
    let at_max = eps(hi)?;
    if at_max > target_epsilon {
        return Err(Error::Unreachable {
            target: target_epsilon,
            z_max: hi,
            epsilon_at_max: at_max,
        });
    }
    while (hi - lo) > options.relative_tolerance * hi {
        let mid = 0.5 * (lo + hi);
        if eps(mid)? <= target_epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
