//! Configuration files: strict-schema TOML (or JSON) describing the
//! converter, the control scheme, and per-command options.
//!
//! All quantities are SI. The switching rate may be given either as the
//! period `T` in seconds or as `f_s_hz` in hertz, not both.

use serde::Deserialize;
use snb_core::converter::{ControlScheme, ConverterSpec};
use snb_core::tf::RationalTf;
use std::path::Path;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub converter: ConverterSection,
    pub control: ControlSection,
    #[serde(default)]
    pub analyze: AnalyzeSection,
    #[serde(default)]
    pub splot: CurveSection,
    #[serde(default)]
    pub lplot: CurveSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub boundary: Option<BoundarySection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterSection {
    pub v_s: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "R_c", default)]
    pub r_c: f64,
    /// Switching period in seconds; alternative to `f_s_hz`.
    #[serde(rename = "T", default)]
    pub t: Option<f64>,
    /// Switching frequency in hertz; alternative to `T`.
    #[serde(default)]
    pub f_s_hz: Option<f64>,
    #[serde(rename = "V_m")]
    pub v_m: f64,
    pub v_r: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSection {
    StateFeedback {
        k_i: f64,
        k_v: f64,
    },
    Cmc,
    Vmc {
        g_c_num: Vec<f64>,
        g_c_den: Vec<f64>,
    },
    Custom {
        f_num: Vec<f64>,
        f_den: Vec<f64>,
        dc_offset_gain: f64,
    },
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    /// Duty-grid size for the fold scan.
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    /// Number of interior duty points.
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub start: f64,
    pub stop: f64,
    #[serde(default = "default_sweep_steps")]
    pub steps: usize,
    #[serde(default = "default_settle_cycles")]
    pub settle_cycles: usize,
    #[serde(default = "default_direction")]
    pub direction: String,
}

fn default_sweep_steps() -> usize {
    50
}

fn default_settle_cycles() -> usize {
    400
}

fn default_direction() -> String {
    "both".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_cycles")]
    pub cycles: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            cycles: default_cycles(),
        }
    }
}

fn default_cycles() -> usize {
    200
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub x: String,
    pub x_min: f64,
    pub x_max: f64,
    pub y: String,
    pub y_min: f64,
    pub y_max: f64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_resolution() -> usize {
    20
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("JSON parse error: {e}")))?
    } else {
        toml::from_str(&text).map_err(|e| ConfigError(format!("TOML parse error: {e}")))?
    };
    // Cross-field checks serde cannot express.
    match (cfg.converter.t, cfg.converter.f_s_hz) {
        (Some(_), Some(_)) => return Err(ConfigError("give either T or f_s_hz, not both".into())),
        (None, None) => return Err(ConfigError("missing field `T` (or `f_s_hz`)".into())),
        _ => {}
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn converter_spec(&self) -> Result<ConverterSpec, ConfigError> {
        let c = &self.converter;
        let t = match (c.t, c.f_s_hz) {
            (Some(t), None) => t,
            (None, Some(f)) => {
                if f <= 0.0 {
                    return Err(ConfigError("f_s_hz must be positive".into()));
                }
                1.0 / f
            }
            _ => unreachable!("validated at load"),
        };
        let scheme = match &self.control {
            ControlSection::StateFeedback { k_i, k_v } => ControlScheme::StateFeedback {
                k_i: *k_i,
                k_v: *k_v,
            },
            ControlSection::Cmc => ControlScheme::Cmc,
            ControlSection::Vmc { g_c_num, g_c_den } => ControlScheme::Vmc {
                g_c: RationalTf::new(g_c_num, g_c_den)
                    .map_err(|e| ConfigError(format!("invalid G_c: {e}")))?,
            },
            ControlSection::Custom {
                f_num,
                f_den,
                dc_offset_gain,
            } => ControlScheme::Custom {
                f: RationalTf::new(f_num, f_den)
                    .map_err(|e| ConfigError(format!("invalid F: {e}")))?,
                dc_offset_gain: *dc_offset_gain,
            },
        };
        let spec = ConverterSpec {
            v_s: c.v_s,
            r: c.r,
            l: c.l,
            c: c.c,
            r_c: c.r_c,
            t,
            v_m: c.v_m,
            v_r: c.v_r,
            scheme,
        };
        spec.validate()
            .map_err(|e| ConfigError(format!("invalid converter parameters: {e}")))?;
        Ok(spec)
    }
}
