//! Run configuration: a flat `key = value` document with unit-suffixed keys.
//!
//! ```text
//! # link budget
//! k0_db = -27
//! distance_m = 2000
//! bandwidth_mhz = 10
//! noise_psd_dbm_per_hz = -110
//! fr_ghz = 1, 5, 10
//! ```
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated. Unknown
//! keys are rejected, and physical quantities given without a unit suffix are
//! reported as unit errors.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{db_to_linear, dbm_to_watts, DesignPoint, Gamma0Mode, SystemParams};
use crate::optimizer::{calibrate_gamma0, LatencyCriterion};

/// Reference configuration reproducing the published operating point.
pub const REFERENCE_CONFIG: &str = include_str!("../config/reference.conf");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveP1,
    SolveP2,
    SolveBaseline,
    Sweep,
    Validate,
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "solve-p1" => Ok(Command::SolveP1),
            "solve-p2" => Ok(Command::SolveP2),
            "solve-baseline" => Ok(Command::SolveBaseline),
            "sweep" => Ok(Command::Sweep),
            "validate" => Ok(Command::Validate),
            other => Err(format!("unknown command `{other}`")),
        }
    }
}

/// γ0 convention as configured, before any calibration is run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Gamma0Setting {
    Numerator,
    Denominator,
    Fixed {
        value: f64,
    },
    /// Pick γ0 so the mean-latency budget needed for `epsilon` at
    /// `clock_hz` equals `target_s`.
    Calibrated {
        target_s: f64,
        epsilon: f64,
        clock_hz: f64,
    },
}

/// γ0 as actually used by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gamma0Resolution {
    pub setting: Gamma0Setting,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisVariable {
    EpsTh,
    TThS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisScale {
    Lin,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub variable: AxisVariable,
    /// Bounds in SI (seconds for latency budgets).
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub scale: AxisScale,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        match self.scale {
            AxisScale::Lin => {
                let h = (self.max - self.min) / (self.points - 1) as f64;
                (0..self.points)
                    .map(|i| {
                        if i + 1 == self.points {
                            self.max
                        } else {
                            self.min + h * i as f64
                        }
                    })
                    .collect()
            }
            AxisScale::Log => crate::optimizer::log_space(self.min, self.max, self.points),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.variable {
            AxisVariable::EpsTh => "eps_th",
            AxisVariable::TThS => "t_th_s",
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.points < 2 {
            return Err("sweep needs at least 2 points".into());
        }
        if !(self.min < self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err("sweep needs finite min < max".into());
        }
        match self.variable {
            AxisVariable::EpsTh if !(self.min > 0.0 && self.max < 1.0) => {
                Err("eps_th sweep must lie in (0, 1)".into())
            }
            AxisVariable::TThS if !(self.min > 0.0) => {
                Err("latency budgets must be positive".into())
            }
            _ if self.scale == AxisScale::Log && !(self.min > 0.0) => {
                Err("log sweep needs a positive lower bound".into())
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    /// `name:min:max:points:lin|log`, e.g. `eps_th:1e-5:0.5:40:log` or
    /// `t_th_ms:150:600:46:lin`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 5 {
            return Err(format!("axis `{s}` is not name:min:max:points:lin|log"));
        }
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        let (variable, to_si) = match parts[0].trim() {
            "eps_th" => (AxisVariable::EpsTh, 1.0),
            "t_th_s" => (AxisVariable::TThS, 1.0),
            "t_th_ms" => (AxisVariable::TThS, 1e-3),
            "t_th" => return Err("axis `t_th` needs a unit: t_th_s or t_th_ms".into()),
            other => return Err(format!("unknown axis variable `{other}`")),
        };
        let axis = SweepAxis {
            variable,
            min: num(parts[1])? * to_si,
            max: num(parts[2])? * to_si,
            points: parts[3]
                .trim()
                .parse()
                .map_err(|e| format!("`{}`: {e}", parts[3]))?,
            scale: match parts[4].trim() {
                "lin" => AxisScale::Lin,
                "log" => AxisScale::Log,
                other => return Err(format!("unknown axis scale `{other}`")),
            },
        };
        axis.validate()?;
        Ok(axis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Physical parameters in SI; `clock_hz` holds the first configured clock.
    pub params: SystemParams,
    pub gamma0: Gamma0Setting,
    pub command: Option<Command>,
    pub clocks_hz: Vec<f64>,
    pub rho_th: Vec<f64>,
    pub eps_th: Option<f64>,
    pub t_th_s: Option<f64>,
    pub axis: Option<SweepAxis>,
    pub include_baseline: bool,
    pub seed: u64,
    pub n_samples: usize,
    pub design: Option<DesignPoint>,
    /// Where results go; not part of the reproducible configuration.
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let params = SystemParams::reference(5e9);
        Self {
            clocks_hz: vec![params.clock_hz],
            params,
            gamma0: Gamma0Setting::Numerator,
            command: None,
            rho_th: vec![0.95],
            eps_th: None,
            t_th_s: None,
            axis: None,
            include_baseline: false,
            seed: 0,
            n_samples: 1_000_000,
            design: None,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn reference() -> Self {
        parse_config(REFERENCE_CONFIG).expect("bundled reference config parses")
    }

    /// Resolve γ0, running the calibration when configured.
    pub fn resolve_gamma0(&self) -> Result<Gamma0Resolution> {
        let value = match self.gamma0 {
            Gamma0Setting::Numerator => {
                crate::model::gamma0(&self.params.clone().with_gamma0(Gamma0Mode::Numerator))
            }
            Gamma0Setting::Denominator => {
                crate::model::gamma0(&self.params.clone().with_gamma0(Gamma0Mode::Denominator))
            }
            Gamma0Setting::Fixed { value } => value,
            Gamma0Setting::Calibrated {
                target_s,
                epsilon,
                clock_hz,
            } => calibrate_gamma0(
                &self.params.clone().with_clock_hz(clock_hz),
                epsilon,
                target_s,
                LatencyCriterion::Mean,
            )?,
        };
        Ok(Gamma0Resolution {
            setting: self.gamma0,
            value,
        })
    }

    /// System parameters at `clock_hz` with γ0 pinned to the resolved value.
    pub fn params_at(&self, clock_hz: f64, g0: &Gamma0Resolution) -> SystemParams {
        self.params
            .clone()
            .with_clock_hz(clock_hz)
            .with_gamma0(Gamma0Mode::Fixed(g0.value))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, msg: String| Error::Config {
            line: 0,
            key: key.into(),
            msg,
        };
        self.params
            .validate()
            .map_err(|e| err("params", e.to_string()))?;
        if self.clocks_hz.is_empty() || self.clocks_hz.iter().any(|&f| !(f > 0.0)) {
            return Err(err(
                "fr_ghz",
                "clock list must be non-empty and positive".into(),
            ));
        }
        if self.rho_th.is_empty() || self.rho_th.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return Err(err("rho_th", "values must lie in (0, 1)".into()));
        }
        if let Some(a) = &self.axis {
            a.validate().map_err(|m| err("axis", m))?;
        }
        if self.n_samples == 0 {
            return Err(err("n_samples", "must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the normalized configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}

// keys that name a physical quantity and therefore need a unit suffix
const UNITLESS_PHYSICAL: &[&str] = &[
    "k0",
    "distance",
    "bandwidth",
    "noise_psd",
    "n0",
    "tx_power",
    "channel_use",
    "t0",
    "data",
    "fr",
    "clock",
    "t_th",
    "calibration_target",
];

/// Parse and validate a configuration document, normalizing all units to SI.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = BTreeSet::new();
    let mut gamma0_mode: Option<(usize, String)> = None;
    let mut gamma0_value: Option<f64> = None;
    let mut cal_target_s = 0.347;
    let mut cal_epsilon = 2e-4;
    let mut cal_clock_hz = 5e9;
    let mut design_q: Option<(usize, f64)> = None;
    let mut design_eps: Option<(usize, f64)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            key: content.to_string(),
            msg: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        let fail = |msg: String| Error::Config {
            line,
            key: key.to_string(),
            msg,
        };
        if !seen.insert(key.to_string()) {
            return Err(fail("duplicate key".into()));
        }
        let num = || -> Result<f64> {
            let v: f64 = value.parse().map_err(|e| fail(format!("`{value}`: {e}")))?;
            if !v.is_finite() {
                return Err(fail(format!("`{value}` is not finite")));
            }
            Ok(v)
        };
        let positive = || -> Result<f64> {
            let v = num()?;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(fail(format!("must be positive, got {v}")))
            }
        };
        let list = || -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| fail(format!("`{}`: {e}", x.trim())))
                })
                .collect()
        };

        match key {
            "k0_db" => cfg.params.k0_linear = db_to_linear(num()?),
            "distance_m" => cfg.params.distance_m = positive()?,
            "distance_km" => cfg.params.distance_m = positive()? * 1e3,
            "bandwidth_hz" => cfg.params.bandwidth_hz = positive()?,
            "bandwidth_mhz" => cfg.params.bandwidth_hz = positive()? * 1e6,
            "noise_psd_dbm_per_hz" => cfg.params.noise_psd_w_per_hz = dbm_to_watts(num()?),
            "noise_psd_w_per_hz" => cfg.params.noise_psd_w_per_hz = positive()?,
            "tx_power_w" => cfg.params.tx_power_w = positive()?,
            "tx_power_dbm" => cfg.params.tx_power_w = dbm_to_watts(num()?),
            "channel_use_s" => cfg.params.channel_use_s = positive()?,
            "channel_use_us" => cfg.params.channel_use_s = positive()? * 1e-6,
            "kappa" => {
                let k = num()?;
                if !(k >= 0.5) {
                    return Err(fail(format!("must be at least 0.5, got {k}")));
                }
                cfg.params.kappa = k;
            }
            "psi" => cfg.params.psi = positive()?,
            "data_bits" => cfg.params.data_bits = positive()?,
            "data_mbit" => cfg.params.data_bits = positive()? * 1e6,
            "fr_ghz" | "fr_hz" => {
                let scale = if key == "fr_ghz" { 1e9 } else { 1.0 };
                let v = list()?;
                if v.is_empty() || v.iter().any(|&f| !(f > 0.0)) {
                    return Err(fail("clocks must be positive".into()));
                }
                cfg.clocks_hz = v.iter().map(|f| f * scale).collect();
            }
            "gamma0_mode" => gamma0_mode = Some((line, value.to_string())),
            "gamma0" => gamma0_value = Some(positive()?),
            "calibration_target_ms" => cal_target_s = positive()? * 1e-3,
            "calibration_target_s" => cal_target_s = positive()?,
            "calibration_epsilon" => {
                let e = num()?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(fail(format!("must lie in (0, 1), got {e}")));
                }
                cal_epsilon = e;
            }
            "calibration_fr_ghz" => cal_clock_hz = positive()? * 1e9,
            "rho_th" => {
                let v = list()?;
                if v.is_empty() || v.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
                    return Err(fail("values must lie in (0, 1)".into()));
                }
                cfg.rho_th = v;
            }
            "eps_th" => {
                let e = num()?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(fail(format!("must lie in (0, 1), got {e}")));
                }
                cfg.eps_th = Some(e);
            }
            "t_th_s" => cfg.t_th_s = Some(positive()?),
            "t_th_ms" => cfg.t_th_s = Some(positive()? * 1e-3),
            "axis" => cfg.axis = Some(value.parse().map_err(fail)?),
            "include_baseline" => {
                cfg.include_baseline = value
                    .parse()
                    .map_err(|_| fail(format!("expected true or false, got `{value}`")))?
            }
            "seed" => cfg.seed = value.parse().map_err(|e| fail(format!("`{value}`: {e}")))?,
            "n_samples" => {
                let n: usize = value.parse().map_err(|e| fail(format!("`{value}`: {e}")))?;
                if n == 0 {
                    return Err(fail("must be at least 1".into()));
                }
                cfg.n_samples = n;
            }
            "design_q" => design_q = Some((line, num()?)),
            "design_epsilon" => design_eps = Some((line, num()?)),
            "command" => cfg.command = Some(value.parse().map_err(fail)?),
            "output" => cfg.output = Some(PathBuf::from(value)),
            k if UNITLESS_PHYSICAL.contains(&k) => {
                return Err(fail(
                    "missing unit annotation (use a suffixed key such as _db, _dbm_per_hz, _m, _mhz, _ghz, _us, _ms)"
                        .into(),
                ))
            }
            _ => return Err(fail("unknown key".into())),
        }
    }

    cfg.gamma0 = match gamma0_mode {
        None => match gamma0_value {
            Some(value) => Gamma0Setting::Fixed { value },
            None => Gamma0Setting::Numerator,
        },
        Some((line, mode)) => {
            let fail = |msg: &str| Error::Config {
                line,
                key: "gamma0_mode".into(),
                msg: msg.into(),
            };
            match mode.as_str() {
                "numerator" => Gamma0Setting::Numerator,
                "denominator" => Gamma0Setting::Denominator,
                "fixed" => Gamma0Setting::Fixed {
                    value: gamma0_value.ok_or_else(|| fail("fixed mode needs `gamma0`"))?,
                },
                "calibrated" => Gamma0Setting::Calibrated {
                    target_s: cal_target_s,
                    epsilon: cal_epsilon,
                    clock_hz: cal_clock_hz,
                },
                _ => return Err(fail("expected numerator, denominator, fixed or calibrated")),
            }
        }
    };

    cfg.design = match (design_q, design_eps) {
        (None, None) => None,
        (Some((line, q)), Some((_, e))) => {
            Some(DesignPoint::new(q, e).map_err(|err| Error::Config {
                line,
                key: "design_q".into(),
                msg: err.to_string(),
            })?)
        }
        (Some((line, _)), None) | (None, Some((line, _))) => {
            return Err(Error::Config {
                line,
                key: "design_q".into(),
                msg: "design_q and design_epsilon must be given together".into(),
            })
        }
    };

    cfg.params.clock_hz = cfg.clocks_hz[0];
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_document_matches_operating_point() {
        let cfg = RunConfig::reference();
        let p = &cfg.params;
        let r = SystemParams::reference(1e9);
        assert!((p.k0_linear - r.k0_linear).abs() < 1e-18);
        assert_eq!(p.distance_m, 2000.0);
        assert_eq!(p.bandwidth_hz, 10e6);
        assert!((p.noise_psd_w_per_hz - 1e-14).abs() < 1e-26);
        assert!((p.channel_use_s - 0.5e-6).abs() < 1e-18);
        assert_eq!(p.tx_power_w, 0.5);
        assert_eq!(p.kappa, 1.5);
        assert_eq!(p.psi, 3.5);
        assert_eq!(p.data_bits, 1e6);
        assert_eq!(cfg.clocks_hz, vec![1e9, 5e9, 10e9]);
        assert!(matches!(cfg.gamma0, Gamma0Setting::Calibrated { .. }));
    }

    #[test]
    fn db_conversion() {
        let cfg = parse_config("k0_db = -27").unwrap();
        assert!((cfg.params.k0_linear - 10f64.powf(-2.7)).abs() < 1e-18);
    }

    #[test]
    fn negative_bandwidth_names_the_key() {
        let err = parse_config("kappa = 1.5\nbandwidth_hz = -10\n").unwrap_err();
        match err {
            Error::Config { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "bandwidth_hz");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_unit_is_a_unit_error() {
        let err = parse_config("k0 = -27").unwrap_err().to_string();
        assert!(err.contains("missing unit"), "{err}");
        let err = parse_config("axis = t_th:1:2:3:lin")
            .unwrap_err()
            .to_string();
        assert!(err.contains("unit"), "{err}");
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(parse_config("warp_factor = 9")
            .unwrap_err()
            .to_string()
            .contains("unknown key"));
        let dup = parse_config("psi = 3\npsi = 4").unwrap_err().to_string();
        assert!(dup.contains("duplicate"));
        assert!(parse_config("just words").is_err());
    }

    #[test]
    fn axis_parsing() {
        let a: SweepAxis = "t_th_ms:150:600:10:lin".parse().unwrap();
        assert_eq!(a.variable, AxisVariable::TThS);
        assert!((a.min - 0.15).abs() < 1e-15);
        let v = a.values();
        assert_eq!(v.len(), 10);
        assert_eq!(*v.last().unwrap(), 0.6);
        let l: SweepAxis = "eps_th:1e-5:0.5:3:log".parse().unwrap();
        let v = l.values();
        assert!((v[0] - 1e-5).abs() < 1e-18 && v[2] == 0.5);
        assert!("eps_th:0:0.5:3:log".parse::<SweepAxis>().is_err());
        assert!("eps_th:1e-5:0.5:1:log".parse::<SweepAxis>().is_err());
        assert!("eps_th:1e-5:0.5:3".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn gamma0_settings() {
        let c = parse_config("gamma0 = 1234").unwrap();
        assert_eq!(c.gamma0, Gamma0Setting::Fixed { value: 1234.0 });
        assert_eq!(c.resolve_gamma0().unwrap().value, 1234.0);
        assert!(parse_config("gamma0_mode = fixed").is_err());
        assert!(parse_config("gamma0_mode = sideways").is_err());
        let d = parse_config("gamma0_mode = denominator").unwrap();
        assert!((d.resolve_gamma0().unwrap().value - 626.484).abs() < 1e-3);
        let cal = parse_config("gamma0_mode = calibrated\ncalibration_target_ms = 347").unwrap();
        let g = cal.resolve_gamma0().unwrap().value;
        assert!(g > 1e3 && g < 1e4, "{g}");
    }

    #[test]
    fn design_point_pairing() {
        let c = parse_config("design_q = 2\ndesign_epsilon = 0.01").unwrap();
        assert_eq!(
            c.design,
            Some(DesignPoint {
                q: 2.0,
                epsilon: 0.01
            })
        );
        assert!(parse_config("design_q = 2").is_err());
        assert!(parse_config("design_q = 0.5\ndesign_epsilon = 0.01").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse_config("seed = 1").unwrap();
        let b = parse_config("seed = 1").unwrap();
        let c = parse_config("seed = 2").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
