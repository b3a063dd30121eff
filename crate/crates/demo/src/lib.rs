//! Interactive browser demo for the fold-analysis toolkit.
//!
//! Three operations are exposed to JavaScript, all over a multi-loop
//! state-feedback buck converter: the S-plot with its ramp-slope criterion,
//! the duty-parameterized solution branch with the fold marked, and a
//! cycle-exact switching waveform. Build with
//! `wasm-pack build --target web` and open `www/index.html`.

use nalgebra::DVector;
use snb_core::converter::{ControlScheme, ConverterSpec};
use snb_core::critical::{find_snb_with, HarmonicSums};
use snb_core::sim::{build_pwl, simulate_cycles};
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
#[derive(Clone, Copy)]
pub struct ConverterParams {
    pub v_s: f64,
    pub r: f64,
    pub l: f64,
    pub c: f64,
    pub t: f64,
    pub v_m: f64,
    pub v_r: f64,
    pub k_i: f64,
    pub k_v: f64,
}

#[wasm_bindgen]
impl ConverterParams {
    /// The worked multi-loop example: fold at about 20 V source, duty 0.70.
    #[wasm_bindgen(constructor)]
    pub fn example() -> ConverterParams {
        ConverterParams {
            v_s: 15.0,
            r: 22.0,
            l: 20e-3,
            c: 47e-6,
            t: 400e-6,
            v_m: 1.0,
            v_r: 0.2152,
            k_i: 2.1435,
            k_v: -0.1383,
        }
    }
}

impl ConverterParams {
    fn spec(&self) -> ConverterSpec {
        ConverterSpec {
            v_s: self.v_s,
            r: self.r,
            l: self.l,
            c: self.c,
            r_c: 0.0,
            t: self.t,
            v_m: self.v_m,
            v_r: self.v_r,
            scheme: ControlScheme::StateFeedback {
                k_i: self.k_i,
                k_v: self.k_v,
            },
        }
    }
}

pub struct SplotCurve {
    pub duty: Vec<f64>,
    pub s_value: Vec<f64>,
    pub v_s_implied: Vec<f64>,
    pub m_a: f64,
    pub fold_duty: f64,
    pub fold_v_s: f64,
    pub min_ramp: f64,
}

pub fn splot_curve(params: &ConverterParams, points: usize) -> Result<SplotCurve, String> {
    let spec = params.spec();
    let hs = HarmonicSums::new(&spec).map_err(|e| e.to_string())?;
    let n = points.clamp(16, 4000);
    let mut duty = Vec::with_capacity(n);
    let mut s_value = Vec::with_capacity(n);
    let mut v_implied = Vec::with_capacity(n);
    let mut min_ramp = 0.0_f64;
    for i in 1..=n {
        let dd = i as f64 / (n + 1) as f64;
        let d = dd * spec.t;
        let v = hs.vs_of_d(&spec, d).unwrap_or(f64::NAN);
        let s = hs
            .snb_lhs(&spec, d, if v.is_nan() { spec.v_s } else { v })
            .map_err(|e| e.to_string())?;
        duty.push(dd);
        s_value.push(s);
        v_implied.push(v);
        if s.is_finite() {
            min_ramp = min_ramp.max(s);
        }
    }
    let folds = find_snb_with(&hs, &spec, 1000).map_err(|e| e.to_string())?;
    let primary = folds
        .iter()
        .max_by(|a, b| a.v_s_star.partial_cmp(&b.v_s_star).unwrap());
    Ok(SplotCurve {
        duty,
        s_value,
        v_s_implied: v_implied,
        m_a: spec.ramp_slope(),
        fold_duty: primary.map_or(f64::NAN, |s| s.duty),
        fold_v_s: primary.map_or(f64::NAN, |s| s.v_s_star),
        min_ramp,
    })
}

#[wasm_bindgen]
pub struct SplotData(SplotCurve);

#[wasm_bindgen]
impl SplotData {
    pub fn duty(&self) -> Vec<f64> {
        self.0.duty.clone()
    }
    pub fn s_value(&self) -> Vec<f64> {
        self.0.s_value.clone()
    }
    pub fn v_s_implied(&self) -> Vec<f64> {
        self.0.v_s_implied.clone()
    }
    pub fn m_a(&self) -> f64 {
        self.0.m_a
    }
    pub fn fold_duty(&self) -> f64 {
        self.0.fold_duty
    }
    pub fn fold_v_s(&self) -> f64 {
        self.0.fold_v_s
    }
    pub fn min_ramp(&self) -> f64 {
        self.0.min_ramp
    }
}

/// S-plot along the branch plus the fold location and minimum ramp slope.
#[wasm_bindgen]
pub fn splot(params: &ConverterParams, points: usize) -> Result<SplotData, JsValue> {
    splot_curve(params, points)
        .map(SplotData)
        .map_err(|e| JsValue::from_str(&e))
}

pub struct BranchData {
    pub v_s: Vec<f64>,
    pub v_o: Vec<f64>,
    pub stable: Vec<u8>,
    pub fold_v_s: f64,
    pub fold_v_o: f64,
    /// Source voltage where the always-on solution appears (y = V_m).
    pub saturation_v_s: f64,
}

pub fn branch_data(params: &ConverterParams, points: usize) -> Result<BranchData, String> {
    let spec = params.spec();
    let hs = HarmonicSums::new(&spec).map_err(|e| e.to_string())?;
    let m_a = spec.ramp_slope();
    let n = points.clamp(16, 4000);
    let mut v_s = Vec::new();
    let mut v_o = Vec::new();
    let mut stable = Vec::new();
    for i in 1..=n {
        let dd = i as f64 / (n + 1) as f64;
        let d = dd * spec.t;
        if let Ok(v) = hs.vs_of_d(&spec, d) {
            if !(0.0..=1e4).contains(&v) {
                continue;
            }
            let s = hs.snb_lhs(&spec, d, v).map_err(|e| e.to_string())?;
            v_s.push(v);
            v_o.push(dd * v);
            stable.push(u8::from(s < m_a));
        }
    }
    let folds = find_snb_with(&hs, &spec, 1000).map_err(|e| e.to_string())?;
    let primary = folds
        .iter()
        .max_by(|a, b| a.v_s_star.partial_cmp(&b.v_s_star).unwrap());
    // The always-on branch exists where the constant comparator output
    // clears the ramp peak: v_r - (k_i/R + k_v) v_s >= V_m.
    let g0 = hs.g_dc();
    let saturation_v_s = if g0 < 0.0 {
        (spec.v_m - spec.v_r) / (-g0)
    } else {
        f64::NAN
    };
    Ok(BranchData {
        v_s,
        v_o,
        stable,
        fold_v_s: primary.map_or(f64::NAN, |s| s.v_s_star),
        fold_v_o: primary.map_or(f64::NAN, |s| s.duty * s.v_s_star),
        saturation_v_s,
    })
}

#[wasm_bindgen]
pub struct Branch(BranchData);

#[wasm_bindgen]
impl Branch {
    pub fn v_s(&self) -> Vec<f64> {
        self.0.v_s.clone()
    }
    pub fn v_o(&self) -> Vec<f64> {
        self.0.v_o.clone()
    }
    pub fn stable(&self) -> Vec<u8> {
        self.0.stable.clone()
    }
    pub fn fold_v_s(&self) -> f64 {
        self.0.fold_v_s
    }
    pub fn fold_v_o(&self) -> f64 {
        self.0.fold_v_o
    }
    pub fn saturation_v_s(&self) -> f64 {
        self.0.saturation_v_s
    }
}

/// Duty-parameterized solution branch in the (v_s, v_o) plane with the fold
/// marked and stability from the ramp-slope sign rule.
#[wasm_bindgen]
pub fn branch(params: &ConverterParams, points: usize) -> Result<Branch, JsValue> {
    branch_data(params, points)
        .map(Branch)
        .map_err(|e| JsValue::from_str(&e))
}

pub struct WaveformData {
    pub t: Vec<f64>,
    pub v_o: Vec<f64>,
    pub i_l: Vec<f64>,
    pub y: Vec<f64>,
    pub h: Vec<f64>,
    pub duty_last: f64,
}

pub fn waveform_data(
    params: &ConverterParams,
    settle_cycles: usize,
    show_cycles: usize,
) -> Result<WaveformData, String> {
    let spec = params.spec();
    let sys = build_pwl(&spec).map_err(|e| e.to_string())?;
    let settle = settle_cycles.min(2000);
    let show = show_cycles.clamp(1, 50);
    let x0 = DVector::zeros(sys.state_dim);
    let settled = if settle > 0 {
        simulate_cycles(&sys, &spec, &x0, settle)
            .map_err(|e| e.to_string())?
            .end_state
    } else {
        x0
    };
    let traj = simulate_cycles(&sys, &spec, &settled, show).map_err(|e| e.to_string())?;
    let mut out = WaveformData {
        t: Vec::new(),
        v_o: Vec::new(),
        i_l: Vec::new(),
        y: Vec::new(),
        h: Vec::new(),
        duty_last: *traj.duties.last().unwrap_or(&f64::NAN),
    };
    for s in &traj.samples {
        out.t.push(s.t);
        out.v_o.push(sys.output_voltage(&s.state));
        out.i_l.push(s.state[0]);
        out.y.push(s.y);
        out.h.push(s.h);
    }
    Ok(out)
}

#[wasm_bindgen]
pub struct Waveform(WaveformData);

#[wasm_bindgen]
impl Waveform {
    pub fn t(&self) -> Vec<f64> {
        self.0.t.clone()
    }
    pub fn v_o(&self) -> Vec<f64> {
        self.0.v_o.clone()
    }
    pub fn i_l(&self) -> Vec<f64> {
        self.0.i_l.clone()
    }
    pub fn y(&self) -> Vec<f64> {
        self.0.y.clone()
    }
    pub fn h(&self) -> Vec<f64> {
        self.0.h.clone()
    }
    pub fn duty_last(&self) -> f64 {
        self.0.duty_last
    }
}

/// Cycle-exact switching waveform: settle from rest, then record a few
/// periods of v_o, i_L, the comparator output, and the ramp.
#[wasm_bindgen]
pub fn waveform(
    params: &ConverterParams,
    settle_cycles: usize,
    show_cycles: usize,
) -> Result<Waveform, JsValue> {
    waveform_data(params, settle_cycles, show_cycles)
        .map(Waveform)
        .map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splot_marks_the_example_fold() {
        let p = ConverterParams::example();
        let curve = splot_curve(&p, 200).unwrap();
        assert!((curve.fold_duty - 0.7035).abs() < 0.01);
        assert!((curve.fold_v_s - 19.97).abs() < 0.1);
        assert_eq!(curve.duty.len(), 200);
        assert!((curve.m_a - 2500.0).abs() < 1e-9);
        assert!(curve.min_ramp > 2500.0 && curve.min_ramp < 3000.0);
    }

    #[test]
    fn branch_has_fold_and_saturation_edge() {
        let p = ConverterParams::example();
        let b = branch_data(&p, 300).unwrap();
        assert!((b.fold_v_s - 19.97).abs() < 0.1);
        assert!((b.fold_v_o - 14.0).abs() < 0.2);
        assert!((b.saturation_v_s - 19.2).abs() < 0.1);
        assert!(b.stable.contains(&1));
        assert!(b.stable.contains(&0));
    }

    #[test]
    fn waveform_settles_to_interior_duty() {
        let p = ConverterParams::example();
        let w = waveform_data(&p, 200, 3).unwrap();
        assert!(
            w.duty_last > 0.2 && w.duty_last < 0.8,
            "duty {}",
            w.duty_last
        );
        assert_eq!(w.t.len(), w.v_o.len());
        assert!(w.t.len() > 3 * 64);
        // comparator crosses the ramp every cycle
        let crossings =
            w.y.iter()
                .zip(w.h.iter())
                .filter(|(y, h)| (*y - *h).abs() < 1e-3)
                .count();
        assert!(crossings >= 3);
    }
}
