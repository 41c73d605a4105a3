//! Analytic uplink latency model.
//!
//! A raw payload of `D_f` bits is compressed at ratio `Q` and then sent over a
//! quasi-static Rayleigh link at the ε-outage rate. Compression cycles per bit
//! are Gamma(κ, C(Q)/κ), so the total latency is a Gamma variable shifted by the
//! deterministic transmission time. All quantities here are SI.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::specfun::{inv_reg_lower_gamma, ln_gamma, reg_lower_gamma};

/// How the mean SNR scale γ0 is formed from the link budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
#[derive(Default)]
pub enum Gamma0Mode {
    /// γ0 = K0·P_tx / (d²·N0·B)
    #[default]
    Numerator,
    /// γ0 = P_tx / (K0·d²·N0·B)
    Denominator,
    /// γ0 given directly (e.g. from a calibration run).
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Friis path-gain constant, linear.
    pub k0_linear: f64,
    pub distance_m: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_w_per_hz: f64,
    pub tx_power_w: f64,
    /// Duration of one channel use (T0).
    pub channel_use_s: f64,
    /// Gamma shape of the cycles-per-bit law.
    pub kappa: f64,
    /// Compression cost exponent.
    pub psi: f64,
    /// Processor clock f_R in cycles per second.
    pub clock_hz: f64,
    /// Raw data volume D_f.
    pub data_bits: f64,
    pub gamma0_mode: Gamma0Mode,
}

impl SystemParams {
    /// Reference operating point: K0 = −27 dB, d = 2 km, B = 10 MHz,
    /// N0 = −110 dBm/Hz, T0 = 0.5 µs, P_tx = 0.5 W, κ = 1.5, ψ = 3.5, D_f = 1 Mb.
    pub fn reference(clock_hz: f64) -> Self {
        Self {
            k0_linear: db_to_linear(-27.0),
            distance_m: 2_000.0,
            bandwidth_hz: 10e6,
            noise_psd_w_per_hz: dbm_to_watts(-110.0),
            tx_power_w: 0.5,
            channel_use_s: 0.5e-6,
            kappa: 1.5,
            psi: 3.5,
            clock_hz,
            data_bits: 1e6,
            gamma0_mode: Gamma0Mode::Numerator,
        }
    }

    pub fn with_gamma0(mut self, mode: Gamma0Mode) -> Self {
        self.gamma0_mode = mode;
        self
    }

    pub fn with_clock_hz(mut self, clock_hz: f64) -> Self {
        self.clock_hz = clock_hz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k0_linear", self.k0_linear),
            ("distance_m", self.distance_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_psd_w_per_hz", self.noise_psd_w_per_hz),
            ("tx_power_w", self.tx_power_w),
            ("channel_use_s", self.channel_use_s),
            ("psi", self.psi),
            ("clock_hz", self.clock_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(domain(name, v, "finite and > 0"));
            }
        }
        if !(self.kappa >= 0.5) || !self.kappa.is_finite() {
            return Err(domain("kappa", self.kappa, "kappa >= 0.5"));
        }
        if !(self.data_bits >= 1.0) || !self.data_bits.is_finite() {
            return Err(domain("data_bits", self.data_bits, "data_bits >= 1"));
        }
        if let Gamma0Mode::Fixed(g) = self.gamma0_mode {
            if !(g > 0.0) || !g.is_finite() {
                return Err(domain("gamma0", g, "gamma0 > 0"));
            }
        }
        Ok(())
    }

    pub fn gamma0(&self) -> f64 {
        gamma0(self)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// A candidate operating pair (Q, ε).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub q: f64,
    pub epsilon: f64,
}

impl DesignPoint {
    pub fn new(q: f64, epsilon: f64) -> Result<Self> {
        let dp = Self { q, epsilon };
        dp.validate()?;
        Ok(dp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 1.0) || !self.q.is_finite() {
            return Err(domain("q", self.q, "q >= 1"));
        }
        if self.epsilon == 0.0 {
            return Err(Error::Infeasible(
                "zero outage gives zero rate and unbounded transmission time".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(domain("epsilon", self.epsilon, "0 < epsilon < 1"));
        }
        Ok(())
    }

    pub fn rate(&self, gamma0: f64) -> Result<f64> {
        rate_of_epsilon(self.epsilon, gamma0)
    }

    pub fn channel_uses(&self, data_bits: f64, gamma0: f64) -> Result<f64> {
        channel_uses(data_bits / self.q, self.epsilon, gamma0)
    }
}

/// Law of T = shift + Gamma(shape, scale).
///
/// `scale_s == 0` is a point mass at `shift_s` (no compression, Q = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedGamma {
    pub shape: f64,
    pub scale_s: f64,
    pub shift_s: f64,
}

impl ShiftedGamma {
    pub fn is_degenerate(&self) -> bool {
        self.scale_s == 0.0
    }

    pub fn mean(&self) -> f64 {
        self.shift_s + self.shape * self.scale_s
    }

    /// Standardized argument (t − shift) / scale of the Gamma CDF.
    pub fn standardize(&self, t: f64) -> f64 {
        (t - self.shift_s) / self.scale_s
    }

    pub fn cdf(&self, t: f64) -> f64 {
        total_cdf(self, t)
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        total_pdf(self, t)
    }

    pub fn quantile(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(domain("rho", rho, "0 < rho < 1"));
        }
        if self.is_degenerate() {
            return Ok(self.shift_s);
        }
        Ok(self.shift_s + self.scale_s * inv_reg_lower_gamma(self.shape, rho)?)
    }
}

/// Mean compression cycles per raw bit, C(Q) = e^(Qψ) − e^ψ.
pub fn cycles_per_bit(q: f64, psi: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(domain("q", q, "q >= 1"));
    }
    if !(psi > 0.0) {
        return Err(domain("psi", psi, "psi > 0"));
    }
    // e^ψ (e^((Q−1)ψ) − 1) keeps C(1) exactly zero and avoids cancellation near 1
    Ok(psi.exp() * ((q - 1.0) * psi).exp_m1())
}

/// Mean SNR scale γ0 under the configured link-budget convention.
pub fn gamma0(p: &SystemParams) -> f64 {
    let path = p.distance_m * p.distance_m * p.noise_psd_w_per_hz * p.bandwidth_hz;
    match p.gamma0_mode {
        Gamma0Mode::Numerator => p.k0_linear * p.tx_power_w / path,
        Gamma0Mode::Denominator => p.tx_power_w / (p.k0_linear * path),
        Gamma0Mode::Fixed(g) => g,
    }
}

/// ε-outage rate R(ε) = log2(1 + γ0·ln(1/(1−ε))) in bits per channel use.
pub fn rate_of_epsilon(epsilon: f64, gamma0: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(domain("epsilon", epsilon, "0 <= epsilon < 1"));
    }
    if !(gamma0 > 0.0) {
        return Err(domain("gamma0", gamma0, "gamma0 > 0"));
    }
    let snr_threshold = gamma0 * -(-epsilon).ln_1p();
    Ok(snr_threshold.ln_1p() / std::f64::consts::LN_2)
}

/// Inverse of [`rate_of_epsilon`]: ε = 1 − exp(−(2^R − 1)/γ0).
pub fn epsilon_of_rate(rate: f64, gamma0: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(domain("rate", rate, "rate > 0"));
    }
    if !(gamma0 > 0.0) {
        return Err(domain("gamma0", gamma0, "gamma0 > 0"));
    }
    let snr_threshold = (rate * std::f64::consts::LN_2).exp_m1();
    Ok(-(-snr_threshold / gamma0).exp_m1())
}

/// Channel uses N_tx = D / R(ε) for a payload of `data_bits`.
pub fn channel_uses(data_bits: f64, epsilon: f64, gamma0: f64) -> Result<f64> {
    if !(data_bits > 0.0) {
        return Err(domain("data_bits", data_bits, "data_bits > 0"));
    }
    let rate = rate_of_epsilon(epsilon, gamma0)?;
    if rate == 0.0 {
        return Err(Error::Infeasible(
            "zero rate needs infinitely many channel uses".into(),
        ));
    }
    Ok(data_bits / rate)
}

/// Deterministic transmission time D_f·T0 / (Q·R(ε)).
pub fn transmission_time(p: &SystemParams, dp: &DesignPoint) -> Result<f64> {
    dp.validate()?;
    Ok(p.channel_use_s * dp.channel_uses(p.data_bits, gamma0(p))?)
}

/// Exact law of the total uplink latency at a design point.
pub fn total_latency_law(p: &SystemParams, dp: &DesignPoint) -> Result<ShiftedGamma> {
    p.validate()?;
    let shift_s = transmission_time(p, dp)?;
    let c = cycles_per_bit(dp.q, p.psi)?;
    Ok(ShiftedGamma {
        shape: p.kappa,
        scale_s: p.data_bits * c / (p.kappa * p.clock_hz),
        shift_s,
    })
}

/// CDF of the total latency; a right-continuous unit step at `shift_s` for the
/// point-mass law.
pub fn total_cdf(law: &ShiftedGamma, t: f64) -> f64 {
    if law.is_degenerate() {
        // right-continuous step
        return if t >= law.shift_s { 1.0 } else { 0.0 };
    }
    if t.is_nan() || t <= law.shift_s {
        return 0.0;
    }
    // the arguments are valid by construction
    reg_lower_gamma(law.shape, law.standardize(t)).unwrap_or(1.0)
}

/// Density of the total latency in 1/s.
pub fn total_pdf(law: &ShiftedGamma, t: f64) -> Result<f64> {
    if law.is_degenerate() {
        return Err(Error::DegenerateLaw {
            shift_s: law.shift_s,
        });
    }
    if t <= law.shift_s {
        return Ok(0.0);
    }
    let z = law.standardize(t);
    let ln_density = (law.shape - 1.0) * z.ln() - z - ln_gamma(law.shape)? - law.scale_s.ln();
    Ok(ln_density.exp())
}

/// The ρ-quantile of total latency, W(Q, ε).
pub fn latency_quantile(p: &SystemParams, dp: &DesignPoint, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(domain("rho", rho, "0 < rho < 1"));
    }
    let tau0 = inv_reg_lower_gamma(p.kappa, rho)?;
    let compression = tau0 * p.data_bits * cycles_per_bit(dp.q, p.psi)? / (p.kappa * p.clock_hz);
    Ok(compression + transmission_time(p, dp)?)
}

/// Mean total latency D_f·[C(Q)/f_R + T0/(Q·R(ε))].
pub fn expected_latency(p: &SystemParams, dp: &DesignPoint) -> Result<f64> {
    let compression = p.data_bits * cycles_per_bit(dp.q, p.psi)? / p.clock_hz;
    Ok(compression + transmission_time(p, dp)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params_5ghz() -> SystemParams {
        SystemParams::reference(5e9).with_gamma0(Gamma0Mode::Fixed(2.5e4))
    }

    #[test]
    fn cycles_per_bit_values() {
        assert_eq!(cycles_per_bit(1.0, 3.5).unwrap(), 0.0);
        // high-precision reference: e^7 − e^3.5
        let oracle = 1_096.633_158_428_458_6 - 33.115_451_958_692_31;
        assert!((cycles_per_bit(2.0, 3.5).unwrap() - oracle).abs() < 1e-9);
        assert!((cycles_per_bit(2.0, 3.5).unwrap() - 1063.518).abs() < 1e-3);
        assert!(cycles_per_bit(2.5, 3.5).unwrap() > cycles_per_bit(2.0, 3.5).unwrap());
        assert!(cycles_per_bit(0.99, 3.5).is_err());
    }

    #[test]
    fn gamma0_scaling() {
        let base = SystemParams::reference(1e9);
        let g = gamma0(&base);
        let mut louder = base.clone();
        louder.tx_power_w *= 2.0;
        assert!((gamma0(&louder) / g - 2.0).abs() < 1e-12);
        let mut farther = base.clone();
        farther.distance_m *= 2.0;
        assert!((gamma0(&farther) / g - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gamma0_reference_conversions() {
        // hand conversion: -27 dB -> 10^-2.7, -110 dBm/Hz -> 1e-14 W/Hz
        let k0 = 10f64.powf(-2.7);
        let n0 = 1e-14;
        let denom = 2000.0 * 2000.0 * n0 * 10e6;
        let numerator_form = k0 * 0.5 / denom;
        let denominator_form = 0.5 / (k0 * denom);
        let p = SystemParams::reference(5e9);
        let g_num = gamma0(&p);
        let g_den = gamma0(&p.clone().with_gamma0(Gamma0Mode::Denominator));
        println!("gamma0 numerator form = {g_num:.6e}, denominator form = {g_den:.6e}");
        assert!((g_num / numerator_form - 1.0).abs() < 1e-12);
        assert!((g_den / denominator_form - 1.0).abs() < 1e-12);
        assert!((g_num - 2.494_08e-3).abs() < 1e-8);
        assert!((g_den - 626.484).abs() < 1e-3);
    }

    #[test]
    fn rate_values() {
        assert_eq!(rate_of_epsilon(0.0, 3.0).unwrap(), 0.0);
        let e = 1.0 - (-1.0f64).exp();
        assert!((rate_of_epsilon(e, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let oracle = (1.0 + 2.5e4 * (1.0f64 / 0.9).ln()).log2();
        let r = rate_of_epsilon(0.1, 2.5e4).unwrap();
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 11.364).abs() < 1e-3);
        assert!(rate_of_epsilon(1.0, 1.0).is_err());
    }

    #[test]
    fn epsilon_values() {
        let g0 = 2.5e4;
        let r = rate_of_epsilon(0.3, g0).unwrap();
        assert!((epsilon_of_rate(r, g0).unwrap() - 0.3).abs() < 1e-12);
        assert!((epsilon_of_rate(1.0, 1.0).unwrap() - 0.632_12).abs() < 1e-5);
        assert!((epsilon_of_rate(11.364, g0).unwrap() - 0.1).abs() < 1e-4);
        assert!(epsilon_of_rate(0.0, g0).is_err());
    }

    #[test]
    fn channel_use_values() {
        let g0 = 1.0;
        let eps = 1.0 - (-1.0f64).exp();
        assert!((channel_uses(1000.0, eps, g0).unwrap() - 1000.0).abs() < 1e-9);
        let full = channel_uses(1000.0, 0.2, 7.0).unwrap();
        let half = channel_uses(500.0, 0.2, 7.0).unwrap();
        assert!((full / half - 2.0).abs() < 1e-12);
        let r = rate_of_epsilon(0.1, 2.5e4).unwrap();
        let n = channel_uses(5e5, 0.1, 2.5e4).unwrap();
        assert!((n - 5e5 / r).abs() < 1e-6);
        assert!((n - 43_999.6).abs() < 5.0, "{n}");
        assert!(matches!(
            channel_uses(1.0, 0.0, 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn law_at_reference_point() {
        let p = params_5ghz();
        let dp = DesignPoint::new(2.0, 0.1).unwrap();
        let law = total_latency_law(&p, &dp).unwrap();
        let comp = 1e6 * cycles_per_bit(2.0, 3.5).unwrap() / 5e9;
        let tx = 1e6 * 0.5e-6 / (2.0 * rate_of_epsilon(0.1, 2.5e4).unwrap());
        assert!((comp - 0.21270).abs() < 1e-5);
        assert!((tx - 0.0220).abs() < 1e-4);
        assert!((law.mean() - (comp + tx)).abs() < 1e-15);
        assert!((law.mean() - 0.2347).abs() < 1e-4);
        assert!((expected_latency(&p, &dp).unwrap() - law.mean()).abs() < 1e-15);
        assert_eq!(law.shift_s, transmission_time(&p, &dp).unwrap());
    }

    #[test]
    fn no_compression_is_point_mass() {
        let p = params_5ghz();
        let dp = DesignPoint::new(1.0, 0.01).unwrap();
        let law = total_latency_law(&p, &dp).unwrap();
        assert!(law.is_degenerate());
        assert_eq!(law.cdf(law.shift_s * (1.0 - 1e-12)), 0.0);
        assert_eq!(law.cdf(law.shift_s), 1.0);
        assert!(matches!(
            law.pdf(law.shift_s + 1.0),
            Err(Error::DegenerateLaw { .. })
        ));
        let w = latency_quantile(&p, &dp, 0.999).unwrap();
        let direct = p.data_bits * p.channel_use_s / rate_of_epsilon(0.01, 2.5e4).unwrap();
        assert!((w - direct).abs() < 1e-15);
        assert_eq!(w, latency_quantile(&p, &dp, 0.5).unwrap());
        assert!((expected_latency(&p, &dp).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn zero_outage_is_infeasible() {
        let p = params_5ghz();
        let dp = DesignPoint {
            q: 2.0,
            epsilon: 0.0,
        };
        assert!(matches!(
            total_latency_law(&p, &dp),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            expected_latency(&p, &dp),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn cdf_limits_and_chi_square_point() {
        let law = ShiftedGamma {
            shape: 1.5,
            scale_s: 0.04,
            shift_s: 0.02,
        };
        assert_eq!(law.cdf(law.shift_s), 0.0);
        assert!((law.cdf(1e3) - 1.0).abs() < 1e-15);
        assert!((law.cdf(law.shift_s + law.scale_s * 3.9074) - 0.95).abs() < 1e-4);
    }

    #[test]
    fn pdf_normalization_and_derivative() {
        let law = ShiftedGamma {
            shape: 1.5,
            scale_s: 0.04,
            shift_s: 0.02,
        };
        // integrate in u = sqrt(t - shift) to remove the sqrt singularity
        let n = 200_000;
        let umax = (50.0 * law.scale_s).sqrt();
        let h = umax / n as f64;
        let g = |u: f64| 2.0 * u * law.pdf(law.shift_s + u * u).unwrap();
        let mut acc = g(0.0) + g(umax);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        let mass = acc * h / 3.0;
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");

        for i in 1..=20 {
            let t = law.shift_s + law.scale_s * 0.25 * i as f64;
            let dh = 1e-6 * law.scale_s;
            let fd = (law.cdf(t + dh) - law.cdf(t - dh)) / (2.0 * dh);
            let f = law.pdf(t).unwrap();
            assert!(((fd - f) / f).abs() < 1e-6, "t={t}: {fd} vs {f}");
        }
    }

    #[test]
    fn pdf_mode_by_grid_search() {
        let law = ShiftedGamma {
            shape: 1.5,
            scale_s: 0.04,
            shift_s: 0.02,
        };
        let expected = law.shift_s + (law.shape - 1.0) * law.scale_s;
        let step = law.scale_s * 1e-4;
        let mode = (1..100_000)
            .map(|i| law.shift_s + step * i as f64)
            .max_by(|a, b| law.pdf(*a).unwrap().total_cmp(&law.pdf(*b).unwrap()))
            .unwrap();
        assert!((mode - expected).abs() <= step);
    }

    #[test]
    fn quantile_round_trip_and_tau_ratio() {
        let p = SystemParams::reference(5e9).with_gamma0(Gamma0Mode::Fixed(2.5e4));
        let dp = DesignPoint::new(2.0, 1e-3).unwrap();
        let law = total_latency_law(&p, &dp).unwrap();
        for rho in [0.9, 0.95, 0.99, 0.999] {
            let w = latency_quantile(&p, &dp, rho).unwrap();
            assert!((total_cdf(&law, w) - rho).abs() < 1e-9, "rho {rho}");
        }
        let tau0 = inv_reg_lower_gamma(1.5, 0.95).unwrap();
        assert!((tau0 / 1.5 - 2.605).abs() < 1e-3);
        let w = latency_quantile(&p, &dp, 0.95).unwrap();
        let mean_comp = p.data_bits * cycles_per_bit(2.0, 3.5).unwrap() / p.clock_hz;
        let ratio = (w - law.shift_s) / mean_comp;
        assert!((ratio - tau0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn cdf_is_neither_convex_nor_concave() {
        let law = ShiftedGamma {
            shape: 1.5,
            scale_s: 0.04,
            shift_s: 0.02,
        };
        let h = 1e-4 * law.scale_s;
        let second = |t: f64| (law.cdf(t + h) - 2.0 * law.cdf(t) + law.cdf(t - h)) / (h * h);
        let ts: Vec<f64> = (1..1000)
            .map(|i| law.shift_s + law.scale_s * 10.0 * i as f64 / 1000.0)
            .collect();
        let convex_at = ts.iter().copied().find(|&t| second(t) > 0.0);
        let concave_at = ts.iter().copied().find(|&t| second(t) < 0.0);
        let (t1, t2) = (convex_at.unwrap(), concave_at.unwrap());
        assert!(t1 < t2);
        // the inflection of the CDF is the density mode
        let inflection = law.shift_s + (law.shape - 1.0) * law.scale_s;
        assert!(t1 < inflection && t2 > inflection);
    }

    proptest! {
        #[test]
        fn cost_strictly_convex(q in 1.0f64..4.0) {
            let h = 1e-3;
            let c = |x: f64| cycles_per_bit(x.max(1.0), 3.5).unwrap();
            let q = q.max(1.0 + h);
            let d2 = (c(q + h) - 2.0 * c(q) + c(q - h)) / (h * h);
            prop_assert!(d2 > 0.0);
        }

        #[test]
        fn rate_increasing(e1 in 1e-9f64..0.99, frac in 0.001f64..1.0, g0 in 1e-3f64..1e6) {
            let e2 = e1 + frac * (0.999_999 - e1);
            prop_assert!(rate_of_epsilon(e2, g0).unwrap() > rate_of_epsilon(e1, g0).unwrap());
        }

        #[test]
        fn rate_epsilon_inverse(eps in 1e-9f64..0.999, g0 in 1e-2f64..1e6) {
            let r = rate_of_epsilon(eps, g0).unwrap();
            let back = epsilon_of_rate(r, g0).unwrap();
            prop_assert!(((back - eps) / eps).abs() < 1e-9);
        }
    }
}
