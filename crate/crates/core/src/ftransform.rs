//! The spectral-sum calculus behind the critical conditions.
//!
//! The central object is the weighted sum
//!
//!   F[T] = -2 Re sum_{n>=1} e^{j 2 pi n D} T(j n omega_s)
//!
//! evaluated either in closed form through the building block
//! alpha(D, p) = 1/p - pi e^{pi p (1 - 2D)} csch(pi p) applied to a
//! partial-fraction decomposition, or directly as a truncated series with
//! Cesaro stabilization. The two paths are kept independent so the series can
//! serve as an oracle for the closed forms.

use crate::error::FtError;
use crate::tf::{PartialFractionForm, RationalTf};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Below this |p| the direct formula loses digits to cancellation and the
/// order-8 Taylor expansion is used instead (error < 1e-14 there).
pub const P_SWITCH: f64 = 1e-3;

const MAX_TAYLOR_ORDER: usize = 8;

/// Bernoulli polynomials B_1..B_9, ascending coefficients.
/// alpha_k(D) = (-1)^{k+1} (2 pi)^{k+1} B_{k+1}(1 - D) / (k+1)!.
const BERNOULLI: [&[f64]; 9] = [
    &[-0.5, 1.0],
    &[1.0 / 6.0, -1.0, 1.0],
    &[0.0, 0.5, -1.5, 1.0],
    &[-1.0 / 30.0, 0.0, 1.0, -2.0, 1.0],
    &[0.0, -1.0 / 6.0, 0.0, 5.0 / 3.0, -2.5, 1.0],
    &[1.0 / 42.0, 0.0, -0.5, 0.0, 2.5, -3.0, 1.0],
    &[0.0, 1.0 / 6.0, 0.0, -7.0 / 6.0, 0.0, 3.5, -3.5, 1.0],
    &[
        -1.0 / 30.0,
        0.0,
        2.0 / 3.0,
        0.0,
        -7.0 / 3.0,
        0.0,
        14.0 / 3.0,
        -4.0,
        1.0,
    ],
    &[0.0, -0.3, 0.0, 2.0, 0.0, -4.2, 0.0, 6.0, -4.5, 1.0],
];

fn check_duty(d: f64) -> Result<(), FtError> {
    if !(d > 0.0 && d < 1.0) {
        return Err(FtError::DutyRange(d));
    }
    Ok(())
}

/// Taylor coefficient alpha_k(D) of alpha(D, p) = sum (-1)^k alpha_k(D) p^k.
///
/// k = 0 and 1 reduce to pi(2D - 1) and pi^2(2D^2 - 2D + 1/3); the higher
/// orders come from the same Bernoulli-polynomial generating function and are
/// validated against Richardson-extrapolated limits of alpha in the tests.
pub fn alpha_taylor(duty: f64, k: usize) -> Result<f64, FtError> {
    check_duty(duty)?;
    if k > MAX_TAYLOR_ORDER {
        return Err(FtError::UnsupportedOrder(k));
    }
    let x = 1.0 - duty;
    let b = BERNOULLI[k].iter().rev().fold(0.0, |acc, &c| acc * x + c);
    let mut factorial = 1.0;
    for i in 2..=(k + 1) {
        factorial *= i as f64;
    }
    let sign = if k.is_multiple_of(2) { -1.0 } else { 1.0 };
    Ok(sign * (2.0 * PI).powi(k as i32 + 1) * b / factorial)
}

fn alpha_taylor_sum(duty: f64, p: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut pk = Complex64::new(1.0, 0.0);
    for k in 0..=MAX_TAYLOR_ORDER {
        let ak = alpha_taylor(duty, k).expect("duty checked by caller");
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * ak * pk;
        pk *= p;
    }
    acc
}

fn check_axis_pole(p: Complex64) -> Result<(), FtError> {
    let k = p.im.round();
    if k != 0.0 && (p - Complex64::new(0.0, k)).norm() < 1e-9 * (1.0 + p.norm()) {
        return Err(FtError::PoleOnAxis { re: p.re, im: p.im });
    }
    Ok(())
}

/// The closed-form building block
///
///   alpha(D, p) = 1/p - pi e^{pi p (1 - 2D)} csch(pi p)
///
/// for a normalized pole p = omega_p / omega_s. Accepts complex p away from
/// the csch poles at nonzero integer points of the imaginary axis. The
/// exponentials are arranged so no intermediate overflows for large |Re p|,
/// and |p| < P_SWITCH falls back to the Taylor form; the two branches agree
/// to better than 1e-12 at the switch.
pub fn alpha(duty: f64, p: Complex64) -> Result<Complex64, FtError> {
    check_duty(duty)?;
    check_axis_pole(p)?;
    if p.norm() < P_SWITCH {
        return Ok(alpha_taylor_sum(duty, p));
    }
    let z = p * PI;
    if p.norm() < 0.5 {
        // Cancellation-free ratio form on the mid range: with A = 1 - e^{-2z}
        // evaluated through expm1,
        //   alpha = (A - 2 z e^{-2Dz}) / (p A)
        // keeps the 1/p-scale terms from being subtracted in floating point.
        let a = -expm1_complex(-2.0 * z);
        let n = a - 2.0 * z * (-2.0 * duty * z).exp();
        return Ok(n / (p * a));
    }
    let val = if z.re >= 0.0 {
        // pi e^{z(1-2D)} csch z = 2 pi e^{-2Dz} / (1 - e^{-2z})
        let inv_p = 1.0 / p;
        inv_p - 2.0 * PI * (-2.0 * duty * z).exp() / (1.0 - (-2.0 * z).exp())
    } else {
        // mirrored form keeps every exponent's real part non-positive
        let inv_p = 1.0 / p;
        inv_p + 2.0 * PI * (2.0 * (1.0 - duty) * z).exp() / (1.0 - (2.0 * z).exp())
    };
    Ok(val)
}

/// e^w - 1 without cancellation for small |w|.
fn expm1_complex(w: Complex64) -> Complex64 {
    if w.norm() > 0.7 {
        return w.exp() - 1.0;
    }
    let mut term = w;
    let mut acc = w;
    let mut k = 2.0;
    while term.norm() > 1e-18 * (1.0 + acc.norm()) {
        term = term * w / k;
        acc += term;
        k += 1.0;
    }
    acc
}

/// Correction term c(D, p) = alpha - alpha_0 + alpha_1 p, the part of alpha
/// beyond its first-order expansion. Small-|p| inputs are summed directly in
/// Taylor form to avoid cancellation.
pub fn correction(duty: f64, p: Complex64) -> Result<Complex64, FtError> {
    check_duty(duty)?;
    check_axis_pole(p)?;
    if p.norm() < P_SWITCH {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut pk = p * p;
        for k in 2..=MAX_TAYLOR_ORDER {
            let ak = alpha_taylor(duty, k)?;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * ak * pk;
            pk *= p;
        }
        return Ok(acc);
    }
    let a = alpha(duty, p)?;
    let a0 = alpha_taylor(duty, 0)?;
    let a1 = alpha_taylor(duty, 1)?;
    Ok(a - a0 + a1 * p)
}

/// How an F-transform value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtMethod {
    ClosedForm,
    Series,
}

/// An F-transform value with provenance.
#[derive(Debug, Clone, Copy)]
pub struct FTransformResult {
    pub value: f64,
    pub method: FtMethod,
    /// Number of harmonics summed (series only).
    pub terms_used: Option<usize>,
    /// Window-dispersion estimate of the remaining error (series only).
    pub tail_estimate: Option<f64>,
}

/// Closed-form F-transform of a decomposed loop gain.
///
/// Constants transform to zero (the DC path enters the critical conditions
/// separately through T(0), so the feedthrough carries no spectral weight);
/// 1/s and 1/s^2 contribute alpha_0 and alpha_1; each simple pole p_k
/// contributes its residue times alpha(D, -p_k/omega_s). Conjugate pairs sum
/// to a real number.
pub fn f_closed(
    pf: &PartialFractionForm,
    duty: f64,
    omega_s: f64,
) -> Result<FTransformResult, FtError> {
    check_duty(duty)?;
    let a0 = alpha_taylor(duty, 0)?;
    let a1 = alpha_taylor(duty, 1)?;
    let mut acc = Complex64::new(pf.b1 * a0 / omega_s + pf.b2 * a1 / (omega_s * omega_s), 0.0);
    for (pole, residue) in &pf.simple_poles {
        let p = -pole / omega_s;
        acc += residue / omega_s * alpha(duty, p)?;
    }
    debug_assert!(
        acc.im.abs() < 1e-12 * (1.0 + acc.re.abs()),
        "conjugate closure must make the transform real"
    );
    Ok(FTransformResult {
        value: acc.re,
        method: FtMethod::ClosedForm,
        terms_used: None,
        tail_estimate: None,
    })
}

/// Direct series evaluation of the F-transform, the oracle for `f_closed`.
///
/// Bi-proper inputs have their feedthrough stripped first so both paths
/// transform the same object. Partial sums over the trailing tenth of the
/// range are Cesaro-averaged to damp the O(1/n) oscillation of
/// relative-degree-one inputs.
pub fn f_series(
    tf: &RationalTf,
    duty: f64,
    omega_s: f64,
    n_terms: usize,
) -> Result<FTransformResult, FtError> {
    check_duty(duty)?;
    if n_terms < 1000 {
        return Err(FtError::SeriesTooShort(n_terms));
    }
    // Strip feedthrough: F[1] = 0 by convention.
    let stripped;
    let tf = if !tf.is_zero() && tf.relative_degree() == 0 {
        let lead = tf.num_coeffs().last().unwrap() / tf.den_coeffs().last().unwrap();
        stripped = tf.add(&RationalTf::constant(-lead));
        &stripped
    } else {
        tf
    };

    let theta = 2.0 * PI * duty;
    let step = Complex64::from_polar(1.0, theta);
    let mut phase = step;
    let window = n_terms / 10;
    let mut partial = 0.0_f64;
    let mut window_sum = 0.0_f64;
    let mut window_min = f64::INFINITY;
    let mut window_max = f64::NEG_INFINITY;
    let mut last_term = 0.0_f64;
    for n in 1..=n_terms {
        if n % 4096 == 0 {
            // re-anchor the rotation recurrence
            phase = Complex64::from_polar(1.0, theta * n as f64);
        }
        let g = tf.eval(Complex64::new(0.0, n as f64 * omega_s))?;
        last_term = -2.0 * (phase * g).re;
        partial += last_term;
        if n > n_terms - window {
            window_sum += partial;
            window_min = window_min.min(partial);
            window_max = window_max.max(partial);
        }
        phase *= step;
    }
    let value = window_sum / window as f64;
    let spread = (window_max - value).max(value - window_min);
    let tail = spread.max(last_term.abs());
    Ok(FTransformResult {
        value,
        method: FtMethod::Series,
        terms_used: Some(n_terms),
        tail_estimate: Some(tail),
    })
}

/// The nine tabulated loop-gain shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableCase {
    /// 1/(s + omega_p)
    C1,
    /// 1/s
    C2,
    /// 1/(1 + s/omega_p)
    C3,
    /// (1 + s/omega_z)/(1 + s/omega_p)
    C4,
    /// 1/(s (1 + s/omega_p))
    C5,
    /// 1/s^2
    C6,
    /// (1 + s/omega_z)/s^2
    C7,
    /// (1 + s/omega_z)/(s (1 + s/omega_p))
    C8,
    /// (1 + s/omega_z)/(s^2 (1 + s/omega_p))
    C9,
}

impl TableCase {
    pub const ALL: [TableCase; 9] = [
        TableCase::C1,
        TableCase::C2,
        TableCase::C3,
        TableCase::C4,
        TableCase::C5,
        TableCase::C6,
        TableCase::C7,
        TableCase::C8,
        TableCase::C9,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TableCase::C1 => "C1",
            TableCase::C2 => "C2",
            TableCase::C3 => "C3",
            TableCase::C4 => "C4",
            TableCase::C5 => "C5",
            TableCase::C6 => "C6",
            TableCase::C7 => "C7",
            TableCase::C8 => "C8",
            TableCase::C9 => "C9",
        }
    }

    pub fn needs_p(&self) -> bool {
        !matches!(self, TableCase::C2 | TableCase::C6 | TableCase::C7)
    }

    pub fn needs_z(&self) -> bool {
        matches!(
            self,
            TableCase::C4 | TableCase::C7 | TableCase::C8 | TableCase::C9
        )
    }

    /// The transfer function the row tabulates, with omega_p = p omega_s and
    /// omega_z = z omega_s.
    pub fn transfer_function(
        &self,
        p: Option<f64>,
        z: Option<f64>,
        omega_s: f64,
    ) -> Result<RationalTf, FtError> {
        let wp = p.map(|p| p * omega_s);
        let wz = z.map(|z| z * omega_s);
        let missing = |param: &'static str| FtError::MissingParameter {
            case: self.name(),
            param,
        };
        let wp_val = || wp.ok_or(missing("p"));
        let wz_val = || wz.ok_or(missing("z"));
        let tf = match self {
            TableCase::C1 => RationalTf::new(&[1.0], &[wp_val()?, 1.0]),
            TableCase::C2 => RationalTf::new(&[1.0], &[0.0, 1.0]),
            TableCase::C3 => RationalTf::new(&[1.0], &[1.0, 1.0 / wp_val()?]),
            TableCase::C4 => RationalTf::new(&[1.0, 1.0 / wz_val()?], &[1.0, 1.0 / wp_val()?]),
            TableCase::C5 => RationalTf::new(&[1.0], &[0.0, 1.0, 1.0 / wp_val()?]),
            TableCase::C6 => RationalTf::new(&[1.0], &[0.0, 0.0, 1.0]),
            TableCase::C7 => RationalTf::new(&[1.0, 1.0 / wz_val()?], &[0.0, 0.0, 1.0]),
            TableCase::C8 => RationalTf::new(&[1.0, 1.0 / wz_val()?], &[0.0, 1.0, 1.0 / wp_val()?]),
            TableCase::C9 => {
                RationalTf::new(&[1.0, 1.0 / wz_val()?], &[0.0, 0.0, 1.0, 1.0 / wp_val()?])
            }
        };
        Ok(tf.expect("table shapes are proper"))
    }
}

/// Evaluate a table row's printed closed form verbatim.
pub fn table_case(
    case: TableCase,
    duty: f64,
    p: Option<f64>,
    z: Option<f64>,
    omega_s: f64,
) -> Result<f64, FtError> {
    check_duty(duty)?;
    let missing = |param: &'static str| FtError::MissingParameter {
        case: case.name(),
        param,
    };
    let need_p = || p.ok_or(missing("p"));
    let need_z = || z.ok_or(missing("z"));
    let a0 = alpha_taylor(duty, 0)?;
    let a1 = alpha_taylor(duty, 1)?;
    let al = |p: f64| alpha(duty, Complex64::new(p, 0.0)).map(|v| v.re);
    let co = |p: f64| correction(duty, Complex64::new(p, 0.0)).map(|v| v.re);
    let ws2 = omega_s * omega_s;
    let v = match case {
        TableCase::C1 => al(need_p()?)? / omega_s,
        TableCase::C2 => a0 / omega_s,
        TableCase::C3 => {
            let p = need_p()?;
            p * al(p)?
        }
        TableCase::C4 => {
            let (p, z) = (need_p()?, need_z()?);
            p * (1.0 - p / z) * al(p)?
        }
        TableCase::C5 => {
            let p = need_p()?;
            (a1 * p - co(p)?) / omega_s
        }
        TableCase::C6 => a1 / ws2,
        TableCase::C7 => (a0 / need_z()? + a1) / ws2,
        TableCase::C8 => {
            let (p, z) = (need_p()?, need_z()?);
            (p / z * a0 - (p / z - 1.0) * (a1 * p - co(p)?)) / omega_s
        }
        TableCase::C9 => {
            let (p, z) = (need_p()?, need_z()?);
            (p / z * a1 + (1.0 / p - 1.0 / z) * co(p)?) / ws2
        }
    };
    Ok(v)
}
