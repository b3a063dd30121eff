//! Converter parameters, control schemes, power-stage models, and the loop
//! transfer function they assemble into.

use crate::error::SpecError;
use crate::tf::{dc_gain, DcGain, RationalTf};
use std::f64::consts::PI;

/// Which power-stage output feeds the compensator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutput {
    /// Diode voltage to output voltage, v_d -> v_o.
    OutputVoltage,
    /// Diode voltage to inductor current, v_d -> i_L.
    InductorCurrent,
}

/// Feedback arrangement around the PWM comparator.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlScheme {
    /// Voltage-mode: y = G_c (v_r - v_o).
    Vmc { g_c: RationalTf },
    /// Current-mode: y = i_c - i_L (the reference field acts as i_c).
    Cmc,
    /// Multi-loop state feedback: y = v_r - k_i i_L - k_v v_o.
    StateFeedback { k_i: f64, k_v: f64 },
    /// A caller-supplied v_d -> y transfer function with an explicit gain on
    /// the reference offset term.
    Custom { f: RationalTf, dc_offset_gain: f64 },
}

/// Physical converter parameters. Derived quantities are always recomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterSpec {
    /// Source voltage, V.
    pub v_s: f64,
    /// Load resistance, ohm.
    pub r: f64,
    /// Inductance, H.
    pub l: f64,
    /// Output capacitance, F.
    pub c: f64,
    /// Capacitor ESR, ohm.
    pub r_c: f64,
    /// Switching period, s.
    pub t: f64,
    /// Ramp amplitude, V.
    pub v_m: f64,
    /// Reference (or current command for CMC), V or A.
    pub v_r: f64,
    pub scheme: ControlScheme,
}

impl ConverterSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let positive = [("R", self.r), ("L", self.l), ("C", self.c), ("T", self.t)];
        for (name, value) in positive {
            if !value.is_finite() {
                return Err(SpecError::NonFinite { name });
            }
            if value <= 0.0 {
                return Err(SpecError::NonPositive { name, value });
            }
        }
        for (name, value) in [("R_c", self.r_c), ("V_m", self.v_m)] {
            if !value.is_finite() {
                return Err(SpecError::NonFinite { name });
            }
            if value < 0.0 {
                return Err(SpecError::Negative { name, value });
            }
        }
        for (name, value) in [("v_s", self.v_s), ("v_r", self.v_r)] {
            if !value.is_finite() {
                return Err(SpecError::NonFinite { name });
            }
        }
        if let ControlScheme::Vmc { g_c } = &self.scheme {
            if !g_c.is_zero() && g_c.num_coeffs().len() > g_c.den_coeffs().len() {
                return Err(SpecError::ImproperCompensator);
            }
            if dc_gain(g_c).map_err(|_| SpecError::ImproperCompensator)? == DcGain::Infinite {
                return Err(SpecError::IntegratingCompensator);
            }
        }
        Ok(())
    }

    /// Switching angular frequency, rad/s.
    pub fn omega_s(&self) -> f64 {
        2.0 * PI / self.t
    }

    /// Compensation ramp slope m_a = V_m / T, V/s.
    pub fn ramp_slope(&self) -> f64 {
        self.v_m / self.t
    }

    /// Dimensionless load parameter K = 2L/(RT).
    pub fn k_load(&self) -> f64 {
        2.0 * self.l / (self.r * self.t)
    }

    /// ESR divider rho = R/(R + R_c).
    pub fn rho(&self) -> f64 {
        self.r / (self.r + self.r_c)
    }

    /// Gain applied to the reference in the steady-state balance (the
    /// compensator DC gain for VMC, 1 for current/state feedback).
    pub fn dc_offset_gain(&self) -> Result<f64, SpecError> {
        match &self.scheme {
            ControlScheme::Vmc { g_c } => dc_gain(g_c)
                .ok()
                .and_then(|g| g.finite())
                .ok_or(SpecError::IntegratingCompensator),
            ControlScheme::Cmc | ControlScheme::StateFeedback { .. } => Ok(1.0),
            ControlScheme::Custom { dc_offset_gain, .. } => Ok(*dc_offset_gain),
        }
    }
}

/// Power-stage transfer function from the diode voltage to the selected
/// output:
///
///   v_d -> v_o:  (s R_c C + 1) / (L C s^2 / rho + (L/R + R_c C) s + 1)
///   v_d -> i_L:  (C s / rho + 1/R) / (same denominator)
pub fn make_power_stage(
    spec: &ConverterSpec,
    output: StageOutput,
) -> Result<RationalTf, SpecError> {
    spec.validate()?;
    let rho = spec.rho();
    let den = [
        1.0,
        spec.l / spec.r + spec.r_c * spec.c,
        spec.l * spec.c / rho,
    ];
    let num = match output {
        StageOutput::OutputVoltage => vec![1.0, spec.r_c * spec.c],
        StageOutput::InductorCurrent => vec![1.0 / spec.r, spec.c / rho],
    };
    Ok(RationalTf::new(&num, &den).expect("power stage is proper by construction"))
}

/// Loop gain T(s) = v_s G(s)/V_m, or the infinite-gain marker when V_m = 0.
#[derive(Debug, Clone, PartialEq)]
pub enum LoopGain {
    Finite(RationalTf),
    /// V_m = 0: the loop gain is unbounded and criteria must use the
    /// ramp-slope form directly in terms of G.
    Infinite,
}

/// Assemble the linear path G(s) = v_d -> y (sign per the comparator input)
/// and the loop gain for the configured scheme.
pub fn build_loop_gain(spec: &ConverterSpec) -> Result<(RationalTf, LoopGain), SpecError> {
    spec.validate()?;
    let g = match &spec.scheme {
        ControlScheme::Vmc { g_c } => make_power_stage(spec, StageOutput::OutputVoltage)?.mul(g_c),
        ControlScheme::Cmc => make_power_stage(spec, StageOutput::InductorCurrent)?,
        ControlScheme::StateFeedback { k_i, k_v } => {
            let gi = make_power_stage(spec, StageOutput::InductorCurrent)?;
            let gv = make_power_stage(spec, StageOutput::OutputVoltage)?;
            gi.scale(*k_i).add(&gv.scale(*k_v))
        }
        ControlScheme::Custom { f, .. } => f.clone(),
    };
    let t = if spec.v_m > 0.0 {
        LoopGain::Finite(g.scale(spec.v_s / spec.v_m))
    } else {
        LoopGain::Infinite
    };
    Ok((g, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::multiloop_example;
    use crate::tf::eval_jomega;
    use num_complex::Complex64;

    #[test]
    fn power_stage_dc_gains() {
        let spec = multiloop_example();
        let gv = make_power_stage(&spec, StageOutput::OutputVoltage).unwrap();
        let gi = make_power_stage(&spec, StageOutput::InductorCurrent).unwrap();
        // With R_c = 0 the v_o stage is 1/(LC s^2 + (L/R) s + 1): unity DC gain.
        assert_eq!(gv.num_coeffs(), &[1.0]);
        assert!((dc_gain(&gv).unwrap().finite().unwrap() - 1.0).abs() < 1e-15);
        assert!((dc_gain(&gi).unwrap().finite().unwrap() - 1.0 / 22.0).abs() < 1e-15);
    }

    /// Double-double helpers built on fused multiply-add, used as the
    /// extended-precision oracle for polynomial evaluation.
    mod dd {
        #[derive(Clone, Copy)]
        pub struct Dd(pub f64, pub f64);

        pub fn two_sum(a: f64, b: f64) -> Dd {
            let s = a + b;
            let bb = s - a;
            Dd(s, (a - (s - bb)) + (b - bb))
        }

        pub fn two_prod(a: f64, b: f64) -> Dd {
            let p = a * b;
            Dd(p, a.mul_add(b, -p))
        }

        pub fn add(x: Dd, y: Dd) -> Dd {
            let s = two_sum(x.0, y.0);
            let e = s.1 + x.1 + y.1;
            two_sum(s.0, e)
        }

        pub fn mul(x: Dd, y: Dd) -> Dd {
            let p = two_prod(x.0, y.0);
            let e = p.1 + x.0 * y.1 + x.1 * y.0;
            two_sum(p.0, e)
        }
    }

    /// Evaluate num/den at j*omega entirely in double-double arithmetic.
    fn eval_jomega_dd(num: &[f64], den: &[f64], omega: f64) -> Complex64 {
        use dd::{add, mul, Dd};
        let horner = |p: &[f64]| -> (Dd, Dd) {
            // p(j w) split into real and imaginary parts by even/odd powers.
            let mut re = Dd(0.0, 0.0);
            let mut im = Dd(0.0, 0.0);
            let w = Dd(omega, 0.0);
            let mut pw = Dd(1.0, 0.0); // w^k
            for (k, &c) in p.iter().enumerate() {
                let term = mul(Dd(c, 0.0), pw);
                match k % 4 {
                    0 => re = add(re, term),
                    1 => im = add(im, term),
                    2 => re = add(re, mul(term, Dd(-1.0, 0.0))),
                    _ => im = add(im, mul(term, Dd(-1.0, 0.0))),
                }
                pw = mul(pw, w);
            }
            (re, im)
        };
        let (nr, ni) = horner(num);
        let (dr, di) = horner(den);
        // Complex division in dd, collapsed to f64 at the end.
        let denom = add(mul(dr, dr), mul(di, di));
        let re = add(mul(nr, dr), mul(ni, di));
        let im = add(mul(ni, dr), mul(mul(nr, di), Dd(-1.0, 0.0)));
        Complex64::new(
            (re.0 + re.1) / (denom.0 + denom.1),
            (im.0 + im.1) / (denom.0 + denom.1),
        )
    }

    #[test]
    fn current_stage_at_switching_frequency_matches_dd_oracle() {
        let spec = multiloop_example();
        let gi = make_power_stage(&spec, StageOutput::InductorCurrent).unwrap();
        let w = spec.omega_s();
        let got = eval_jomega(&gi, w).unwrap();
        let want = eval_jomega_dd(gi.num_coeffs(), gi.den_coeffs(), w);
        assert!((got - want).norm() <= 1e-12 * want.norm());
    }

    #[test]
    fn voltage_stage_at_twice_switching_frequency_matches_dd_oracle() {
        let spec = multiloop_example();
        let gv = make_power_stage(&spec, StageOutput::OutputVoltage).unwrap();
        let w = 2.0 * spec.omega_s();
        let got = eval_jomega(&gv, w).unwrap();
        let want = eval_jomega_dd(gv.num_coeffs(), gv.den_coeffs(), w);
        assert!((got - want).norm() <= 1e-12 * want.norm());
    }

    #[test]
    fn state_feedback_loop_dc_gain() {
        let spec = multiloop_example();
        let (g, t) = build_loop_gain(&spec).unwrap();
        let g0 = dc_gain(&g).unwrap().finite().unwrap();
        assert!((g0 - (2.1435 / 22.0 - 0.1383)).abs() < 1e-12);
        match t {
            LoopGain::Finite(t) => {
                let t0 = dc_gain(&t).unwrap().finite().unwrap();
                // T(0) = (v_s/V_m)(k_i/R + k_v) = -0.81736...
                assert!((t0 - 20.0 * (2.1435 / 22.0 - 0.1383)).abs() < 1e-9);
                assert!((t0 - (-0.8173636363636364)).abs() < 1e-9);
            }
            LoopGain::Infinite => panic!("V_m > 0 must give a finite loop gain"),
        }
    }

    #[test]
    fn cmc_high_frequency_limit() {
        // s G(s) -> 1/L for the current loop.
        let spec = ConverterSpec {
            scheme: ControlScheme::Cmc,
            ..multiloop_example()
        };
        let (g, _) = build_loop_gain(&spec).unwrap();
        let s = Complex64::new(0.0, 1e6 * spec.omega_s());
        let sg = s * g.eval(s).unwrap();
        assert!((sg.re - 1.0 / spec.l).abs() < 1e-3 / spec.l);
        assert!(sg.im.abs() < 1e-3 / spec.l);
    }

    #[test]
    fn zero_ramp_flags_infinite_loop_gain() {
        let spec = ConverterSpec {
            v_m: 0.0,
            ..multiloop_example()
        };
        let (_, t) = build_loop_gain(&spec).unwrap();
        assert_eq!(t, LoopGain::Infinite);
    }

    #[test]
    fn cmc_equals_unit_current_feedback() {
        let base = multiloop_example();
        let cmc = ConverterSpec {
            scheme: ControlScheme::Cmc,
            ..base.clone()
        };
        let sf = ConverterSpec {
            scheme: ControlScheme::StateFeedback { k_i: 1.0, k_v: 0.0 },
            ..base
        };
        let (g1, _) = build_loop_gain(&cmc).unwrap();
        let (g2, _) = build_loop_gain(&sf).unwrap();
        for k in 0..100 {
            let w = cmc.omega_s() * 10f64.powf(-2.0 + 4.0 * k as f64 / 99.0);
            let a = eval_jomega(&g1, w).unwrap();
            let b = eval_jomega(&g2, w).unwrap();
            assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn rejects_integrating_vmc_compensator() {
        let spec = ConverterSpec {
            scheme: ControlScheme::Vmc {
                g_c: RationalTf::new(&[1.0], &[0.0, 1.0]).unwrap(),
            },
            ..multiloop_example()
        };
        assert_eq!(
            spec.validate().unwrap_err(),
            SpecError::IntegratingCompensator
        );
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        let mut spec = multiloop_example();
        spec.c = -1e-6;
        assert!(matches!(
            spec.validate().unwrap_err(),
            SpecError::NonPositive { name: "C", .. }
        ));
    }
}
