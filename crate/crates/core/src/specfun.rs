//! Special functions and seeded samplers.
//!
//! The incomplete gamma function exposed here is the *regularized lower*
//! incomplete gamma `P(s, x) = (1/Γ(s)) ∫₀ˣ t^(s-1) e^(-t) dt`. Some texts write
//! the unnormalized lower integral with the upper-incomplete symbol `Γ(s, x)`;
//! the ratio `Γ(s, x) / Γ(s)` in that notation is exactly `P(s, x)`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};

use crate::error::{domain, Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

const SERIES_EPS: f64 = 1e-16;
const SERIES_MAX_ITER: usize = 10_000;
const INVERSE_MAX_ITER: usize = 200;

/// Natural log of the gamma function for `s > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(domain("s", s, "s > 0"));
    }
    Ok(ln_gamma_unchecked(s))
}

fn ln_gamma_unchecked(s: f64) -> f64 {
    if s < 0.5 {
        // reflection: Γ(s)Γ(1-s) = π / sin(πs)
        let pi = std::f64::consts::PI;
        return (pi / (pi * s).sin()).ln() - ln_gamma_unchecked(1.0 - s);
    }
    let z = s - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(s, x)`.
///
/// Series expansion below `x = s + 1`, modified Lentz continued fraction for the
/// complement above it.
pub fn reg_lower_gamma(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(domain("s", s, "s > 0"));
    }
    if !(x >= 0.0) {
        return Err(domain("x", x, "x >= 0"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let ln_gs = ln_gamma_unchecked(s);
    if x < s + 1.0 {
        lower_series(s, x, ln_gs)
    } else {
        upper_continued_fraction(s, x, ln_gs).map(|q| (1.0 - q).clamp(0.0, 1.0))
    }
}

fn lower_series(s: f64, x: f64, ln_gs: f64) -> Result<f64> {
    let mut ap = s;
    let mut term = 1.0 / s;
    let mut sum = term;
    for _ in 0..SERIES_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * SERIES_EPS {
            let p = sum * (-x + s * x.ln() - ln_gs).exp();
            return Ok(p.clamp(0.0, 1.0));
        }
    }
    Err(Error::NonConvergence {
        routine: "reg_lower_gamma series",
        iterations: SERIES_MAX_ITER,
    })
}

// Q(s, x) by modified Lentz.
fn upper_continued_fraction(s: f64, x: f64, ln_gs: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=SERIES_MAX_ITER {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < SERIES_EPS {
            return Ok((-x + s * x.ln() - ln_gs).exp() * h);
        }
    }
    Err(Error::NonConvergence {
        routine: "reg_lower_gamma continued fraction",
        iterations: SERIES_MAX_ITER,
    })
}

/// Inverse of [`reg_lower_gamma`] in its second argument.
///
/// Brackets the root by doubling, narrows it by bisection, then polishes with
/// Newton steps that fall back to bisection whenever they leave the bracket.
pub fn inv_reg_lower_gamma(s: f64, p: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(domain("s", s, "s > 0"));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(domain("p", p, "0 <= p < 1"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let ln_gs = ln_gamma_unchecked(s);

    let mut lo = 0.0_f64;
    let mut hi = s.max(1.0);
    let mut iterations = 0;
    while reg_lower_gamma(s, hi)? < p {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
        if iterations > INVERSE_MAX_ITER || !hi.is_finite() {
            return Err(Error::NonConvergence {
                routine: "inv_reg_lower_gamma bracket",
                iterations,
            });
        }
    }

    // coarse bisection so Newton starts inside the basin
    for _ in 0..8 {
        let mid = 0.5 * (lo + hi);
        if reg_lower_gamma(s, mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    let mut x = 0.5 * (lo + hi);
    while iterations < INVERSE_MAX_ITER {
        iterations += 1;
        let f = reg_lower_gamma(s, x)? - p;
        if f.abs() <= 1e-15 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = ((s - 1.0) * x.ln() - x - ln_gs).exp();
        let newton = x - f / density;
        let next = if density > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= f64::EPSILON * hi {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NonConvergence {
        routine: "inv_reg_lower_gamma",
        iterations,
    })
}

/// Seeded random stream.
///
/// Backed by ChaCha8 keyed by `seed`; `stream_id` selects one of 2^64
/// independent ChaCha streams under the same key, so parallel workers sharing a
/// seed never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A sibling stream with the same seed.
    pub fn substream(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    fn open01(&mut self) -> f64 {
        self.inner.sample(Open01)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Draw from Gamma(shape, scale).
///
/// Marsaglia–Tsang squeeze/rejection for `shape >= 1`; for `shape < 1` a draw at
/// `shape + 1` is multiplied by `U^(1/shape)`.
pub fn sample_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(domain("shape", shape, "shape > 0"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(domain("scale", scale, "scale > 0"));
    }
    Ok(scale * standard_gamma(shape, rng))
}

pub(crate) fn standard_gamma(shape: f64, rng: &mut RngStream) -> f64 {
    if shape < 1.0 {
        let boost = rng.open01().powf(1.0 / shape);
        return standard_gamma(shape + 1.0, rng) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = rng.inner.sample(StandardNormal);
        let t = 1.0 + c * z;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.open01();
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 {
            return d * v;
        }
        if u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Draw from the exponential law with the given mean by CDF inversion.
pub fn sample_exponential(mean: f64, rng: &mut RngStream) -> Result<f64> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(domain("mean", mean, "mean > 0"));
    }
    Ok(mean * standard_exponential(rng))
}

pub(crate) fn standard_exponential(rng: &mut RngStream) -> f64 {
    -rng.open01().ln()
}
