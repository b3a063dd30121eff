//! Command implementations: each produces a CSV or JSON artifact.

use crate::config::RunConfig;
use crate::csvout::{emit_csv, Field};
use crate::error::CliError;
use nalgebra::DVector;
use serde::Serialize;
use snb_core::converter::{ControlScheme, ConverterSpec};
use snb_core::critical::{
    closed_form_cmc, find_snb_with, min_stabilizing_ramp_with, s_curve_with, HarmonicSums,
    SnbMethod, StabilityHint, StateFeedbackClosedForm, SweepAxis, SweepParam, DEFAULT_SERIES_TERMS,
};
use snb_core::error::CriticalError;
use snb_core::sim::{build_pwl, simulate_cycles, sweep_hysteresis, Stage, SweepDirection};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub series_n: Option<usize>,
    pub grid: Option<usize>,
}

fn write_artifact(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        }
        None => {
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
        }
    }
    Ok(())
}

fn harmonic_sums(spec: &ConverterSpec, opts: &Options) -> Result<HarmonicSums, CliError> {
    let n = opts.series_n.unwrap_or(DEFAULT_SERIES_TERMS);
    Ok(HarmonicSums::with_terms(spec, n)?)
}

fn hint_label(hint: StabilityHint) -> &'static str {
    match hint {
        StabilityHint::Stable => "stable",
        StabilityHint::Unstable => "unstable",
        StabilityHint::Boundary => "boundary",
    }
}

#[derive(Serialize)]
struct SnbOut {
    duty: f64,
    d_star_s: f64,
    v_s_star: f64,
    residual_5: f64,
    residual_8: f64,
    method: &'static str,
}

#[derive(Serialize)]
struct ClosedFormOut {
    /// Source voltage the closed forms were evaluated at: the primary fold
    /// voltage when a fold exists, else the configured operating point.
    evaluated_at_v_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    duty_eq17: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    duty_eq18: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ripple_term_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ripple_warning: Option<bool>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    t0: Option<f64>,
    infinite_loop_gain: bool,
    g0: f64,
    m_a: f64,
    snb: Vec<SnbOut>,
    min_stabilizing_ramp: f64,
    closed_form: ClosedFormOut,
    series_terms: usize,
}

pub fn analyze(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let spec = cfg.converter_spec()?;
    let hs = harmonic_sums(&spec, opts)?;
    let grid = opts.grid.or(cfg.analyze.grid).unwrap_or(2000);
    let folds = find_snb_with(&hs, &spec, grid)?;
    let ramp = min_stabilizing_ramp_with(&hs, &spec)?;
    let g0 = hs.g_dc();
    let t0 = (spec.v_m > 0.0).then(|| spec.v_s * g0 / spec.v_m);

    // The explicit duty formulas predict the fold duty at a given source
    // voltage; evaluate them where the fold actually sits.
    let v_at_fold = folds
        .iter()
        .map(|s| s.v_s_star)
        .fold(f64::NEG_INFINITY, f64::max);
    let eval_v_s = if v_at_fold.is_finite() {
        v_at_fold
    } else {
        spec.v_s
    };
    let spec_at_fold = ConverterSpec {
        v_s: eval_v_s,
        ..spec.clone()
    };
    let closed_form = match &spec.scheme {
        ControlScheme::StateFeedback { .. } => {
            let cf = StateFeedbackClosedForm::new(&spec_at_fold)?;
            ClosedFormOut {
                evaluated_at_v_s: eval_v_s,
                duty_eq17: cf.duty_17().ok(),
                duty_eq18: None,
                ripple_term_ratio: Some(cf.ripple_term_ratio()),
                ripple_warning: Some(cf.ripple_warning()),
            }
        }
        ControlScheme::Cmc => {
            let cf = StateFeedbackClosedForm::new(&spec_at_fold)?;
            ClosedFormOut {
                evaluated_at_v_s: eval_v_s,
                duty_eq17: cf.duty_17().ok(),
                duty_eq18: Some(closed_form_cmc(&spec_at_fold)?),
                ripple_term_ratio: Some(cf.ripple_term_ratio()),
                ripple_warning: Some(cf.ripple_warning()),
            }
        }
        _ => ClosedFormOut {
            evaluated_at_v_s: eval_v_s,
            duty_eq17: None,
            duty_eq18: None,
            ripple_term_ratio: None,
            ripple_warning: None,
        },
    };

    let report = AnalyzeReport {
        t0,
        infinite_loop_gain: spec.v_m == 0.0,
        g0,
        m_a: spec.ramp_slope(),
        snb: folds
            .iter()
            .map(|s| SnbOut {
                duty: s.duty,
                d_star_s: s.d_star,
                v_s_star: s.v_s_star,
                residual_5: s.residual_5,
                residual_8: s.residual_8,
                method: match s.method {
                    SnbMethod::ExactSeries => "exact_series",
                    SnbMethod::ClosedForm15 => "closed_form_15",
                    SnbMethod::ClosedForm17 => "closed_form_17",
                    SnbMethod::ClosedForm18 => "closed_form_18",
                },
            })
            .collect(),
        min_stabilizing_ramp: ramp,
        closed_form,
        series_terms: hs.terms(),
    };
    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    write_artifact(&opts.out, &bytes)
}

fn duty_grid(spec: &ConverterSpec, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| spec.t * i as f64 / (n + 1) as f64)
        .collect()
}

pub fn splot(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let spec = cfg.converter_spec()?;
    let hs = harmonic_sums(&spec, opts)?;
    let n = opts.grid.or(cfg.splot.grid).unwrap_or(800);
    let pts = s_curve_with(&hs, &spec, &duty_grid(&spec, n))?;
    let rows: Vec<Vec<Field>> = pts
        .iter()
        .map(|p| {
            vec![
                p.duty.into(),
                p.v_s_implied.into(),
                p.s_value.into(),
                hint_label(p.stable_hint).into(),
            ]
        })
        .collect();
    let mut buf = Vec::new();
    emit_csv(
        &mut buf,
        &["D", "v_s_implied", "s_value", "stable_hint"],
        &rows,
    )
    .map_err(|e| CliError::io(Path::new("<buffer>"), e))?;
    write_artifact(&opts.out, &buf)
}

pub fn lplot(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let spec = cfg.converter_spec()?;
    if spec.v_m == 0.0 {
        return Err(CriticalError::InfiniteLoopGain.into());
    }
    let hs = harmonic_sums(&spec, opts)?;
    let n = opts.grid.or(cfg.lplot.grid).unwrap_or(800);
    let pts = s_curve_with(&hs, &spec, &duty_grid(&spec, n))?;
    let m_a = spec.ramp_slope();
    let g0 = hs.g_dc();
    let rows: Vec<Vec<Field>> = pts
        .iter()
        .map(|p| {
            let v = p.v_s_implied.unwrap_or(spec.v_s);
            let t0 = v * g0 / spec.v_m;
            let l_value = p.s_value / m_a + t0;
            vec![
                p.duty.into(),
                p.v_s_implied.into(),
                l_value.into(),
                hint_label(p.stable_hint).into(),
            ]
        })
        .collect();
    let mut buf = Vec::new();
    emit_csv(
        &mut buf,
        &["D", "v_s_implied", "l_value", "stable_hint"],
        &rows,
    )
    .map_err(|e| CliError::io(Path::new("<buffer>"), e))?;
    write_artifact(&opts.out, &buf)
}

fn sweep_rows(points: &[snb_core::sim::SweepPoint]) -> Vec<Vec<Field>> {
    points
        .iter()
        .map(|p| {
            vec![
                p.v_s.into(),
                p.v_o_avg.into(),
                p.duty.into(),
                p.classification.label().into(),
            ]
        })
        .collect()
}

pub fn sweep(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let spec = cfg.converter_spec()?;
    let section = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::config("missing [sweep] section"))?;
    if section.stop <= section.start {
        return Err(CliError::config("sweep stop must exceed start"));
    }
    let steps = opts.grid.unwrap_or(section.steps);
    let header = ["v_s", "v_o_avg", "duty", "classification"];
    let run = |dir: SweepDirection| -> Result<Vec<u8>, CliError> {
        let pts = sweep_hysteresis(
            &spec,
            (section.start, section.stop),
            steps,
            dir,
            section.settle_cycles,
        )?;
        let mut buf = Vec::new();
        emit_csv(&mut buf, &header, &sweep_rows(&pts))
            .map_err(|e| CliError::io(Path::new("<buffer>"), e))?;
        Ok(buf)
    };
    match section.direction.as_str() {
        "up" => write_artifact(&opts.out, &run(SweepDirection::Up)?),
        "down" => write_artifact(&opts.out, &run(SweepDirection::Down)?),
        "both" => {
            let up = run(SweepDirection::Up)?;
            let down = run(SweepDirection::Down)?;
            match &opts.out {
                Some(path) => {
                    let up_path = path.with_extension("up.csv");
                    let down_path = path.with_extension("down.csv");
                    std::fs::write(&up_path, up).map_err(|e| CliError::io(&up_path, e))?;
                    std::fs::write(&down_path, down).map_err(|e| CliError::io(&down_path, e))?;
                    Ok(())
                }
                None => {
                    write_artifact(&None, &up)?;
                    write_artifact(&None, b"\n")?;
                    write_artifact(&None, &down)
                }
            }
        }
        other => Err(CliError::config(format!(
            "sweep direction must be up, down, or both, got {other}"
        ))),
    }
}

pub fn simulate(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let spec = cfg.converter_spec()?;
    let sys = build_pwl(&spec)?;
    let x0 = DVector::zeros(sys.state_dim);
    let traj = simulate_cycles(&sys, &spec, &x0, cfg.simulate.cycles)?;
    let rows: Vec<Vec<Field>> = traj
        .samples
        .iter()
        .map(|s| {
            vec![
                s.t.into(),
                s.state[0].into(),
                s.state[1].into(),
                s.y.into(),
                s.h.into(),
                match s.stage {
                    Stage::On => "on",
                    Stage::Off => "off",
                }
                .into(),
            ]
        })
        .collect();
    let mut buf = Vec::new();
    emit_csv(&mut buf, &["t", "i_L", "v_C", "y", "h", "stage"], &rows)
        .map_err(|e| CliError::io(Path::new("<buffer>"), e))?;
    write_artifact(&opts.out, &buf)
}

pub fn boundary(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let spec = cfg.converter_spec()?;
    let section = cfg
        .boundary
        .as_ref()
        .ok_or_else(|| CliError::config("missing [boundary] section"))?;
    let x_axis = SweepAxis {
        param: SweepParam::parse(&section.x)?,
        min: section.x_min,
        max: section.x_max,
    };
    let y_axis = SweepAxis {
        param: SweepParam::parse(&section.y)?,
        min: section.y_min,
        max: section.y_max,
    };
    let resolution = opts.grid.unwrap_or(section.resolution);
    let pts = snb_core::critical::trace_boundary(&spec, x_axis, y_axis, resolution)?;
    let rows: Vec<Vec<Field>> = pts
        .iter()
        .map(|p| {
            vec![
                p.x.into(),
                p.y.into(),
                match p.stable_side {
                    Some(snb_core::critical::StableSide::LowY) => "low".into(),
                    Some(snb_core::critical::StableSide::HighY) => "high".into(),
                    None => Field::Hole,
                },
            ]
        })
        .collect();
    let mut buf = Vec::new();
    emit_csv(&mut buf, &["x", "y", "stable_side"], &rows)
        .map_err(|e| CliError::io(Path::new("<buffer>"), e))?;
    write_artifact(&opts.out, &buf)
}
