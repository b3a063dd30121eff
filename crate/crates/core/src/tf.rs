//! Rational transfer-function algebra and partial-fraction decomposition.

use crate::error::TfError;
use crate::poly;
use num_complex::Complex64;

/// Real-coefficient rational function of the Laplace variable.
///
/// Coefficients are stored in ascending powers of s. Proper and bi-proper
/// functions are accepted; improper ones are rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTf {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RationalTf {
    pub fn new(num: &[f64], den: &[f64]) -> Result<Self, TfError> {
        let num = poly::trim(num);
        let den = poly::trim(den);
        if poly::is_zero(&den) {
            return Err(TfError::ZeroDenominator);
        }
        if !poly::is_zero(&num) && num.len() > den.len() {
            return Err(TfError::Improper {
                num: num.len() - 1,
                den: den.len() - 1,
            });
        }
        Ok(Self { num, den })
    }

    /// The zero function 0/1.
    pub fn zero() -> Self {
        Self {
            num: vec![0.0],
            den: vec![1.0],
        }
    }

    pub fn constant(k: f64) -> Self {
        Self {
            num: vec![k],
            den: vec![1.0],
        }
    }

    pub fn num_coeffs(&self) -> &[f64] {
        &self.num
    }

    pub fn den_coeffs(&self) -> &[f64] {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        poly::is_zero(&self.num)
    }

    /// Relative degree deg(den) - deg(num); zero for bi-proper functions.
    pub fn relative_degree(&self) -> usize {
        if self.is_zero() {
            usize::MAX
        } else {
            self.den.len() - self.num.len()
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            num: poly::trim(&poly::scale(&self.num, k)),
            den: self.den.clone(),
        }
    }

    /// Sum with a common-denominator fast path (the two power-stage
    /// transfer functions share one denominator).
    pub fn add(&self, other: &Self) -> Self {
        if self.den == other.den {
            return Self {
                num: poly::trim(&poly::add(&self.num, &other.num)),
                den: self.den.clone(),
            };
        }
        let num = poly::add(
            &poly::mul(&self.num, &other.den),
            &poly::mul(&other.num, &self.den),
        );
        Self {
            num: poly::trim(&num),
            den: poly::trim(&poly::mul(&self.den, &other.den)),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            num: poly::trim(&poly::mul(&self.num, &other.num)),
            den: poly::trim(&poly::mul(&self.den, &other.den)),
        }
    }

    /// Evaluate at an arbitrary complex point.
    pub fn eval(&self, s: Complex64) -> Result<Complex64, TfError> {
        let d = poly::eval_complex(&self.den, s);
        if d.norm() < 1e-300 {
            return Err(TfError::PoleProximity { mag: d.norm() });
        }
        Ok(poly::eval_complex(&self.num, s) / d)
    }

    /// Leading high-frequency coefficients: G(s) = a1/s + a2/s^2 + O(1/s^3).
    ///
    /// Returns (a1, a2) with a1 = lim s G(s) and a2 = lim s^2 (G - a1/s).
    /// Both vanish when the relative degree is larger; bi-proper inputs have
    /// their feedthrough removed first.
    pub fn asymptotic_coeffs(&self) -> (f64, f64) {
        if self.is_zero() {
            return (0.0, 0.0);
        }
        let n = self.den.len();
        let lead = self.den[n - 1];
        // Strip feedthrough so the expansion starts at 1/s.
        let mut num = self.num.clone();
        if num.len() == n {
            let d = num[n - 1] / lead;
            num = poly::trim(&poly::add(&num, &poly::scale(&self.den, -d)));
        }
        if n < 2 {
            return (0.0, 0.0);
        }
        let c = |p: &[f64], k: i64| -> f64 {
            if k >= 0 && (k as usize) < p.len() {
                p[k as usize]
            } else {
                0.0
            }
        };
        let m = n as i64;
        let a1 = c(&num, m - 2) / lead;
        // Next order: lim s^2 (G - a1/s) = (num_{m-2} - a1 den_{m-1}) / den_m.
        let a2 = c(&num, m - 3) / lead - a1 * c(&self.den, m - 2) / lead;
        (a1, a2)
    }
}

/// DC gain of a rational function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DcGain {
    Finite(f64),
    Infinite,
}

impl DcGain {
    pub fn finite(&self) -> Option<f64> {
        match self {
            DcGain::Finite(v) => Some(*v),
            DcGain::Infinite => None,
        }
    }
}

/// num(0)/den(0), reducing a common factor of s at most twice.
pub fn dc_gain(tf: &RationalTf) -> Result<DcGain, TfError> {
    let mut num = tf.num.clone();
    let mut den = tf.den.clone();
    for _ in 0..=2 {
        let n0 = num[0];
        let d0 = den[0];
        if d0 != 0.0 {
            return Ok(DcGain::Finite(n0 / d0));
        }
        if n0 != 0.0 {
            return Ok(DcGain::Infinite);
        }
        // 0/0: cancel one factor of s.
        num = if num.len() > 1 {
            num[1..].to_vec()
        } else {
            vec![0.0]
        };
        den = if den.len() > 1 {
            den[1..].to_vec()
        } else {
            return Err(TfError::ZeroDenominator);
        };
        if poly::is_zero(&num) {
            return Ok(DcGain::Finite(0.0));
        }
    }
    Err(TfError::IndeterminateDcGain)
}

/// Evaluate a transfer function on the imaginary axis at `omega` rad/s.
pub fn eval_jomega(tf: &RationalTf, omega: f64) -> Result<Complex64, TfError> {
    tf.eval(Complex64::new(0.0, omega))
}

/// Partial-fraction decomposition of a proper rational function:
/// feedthrough + b1/s + b2/s^2 + sum r_k/(s - p_k) over simple poles.
#[derive(Debug, Clone)]
pub struct PartialFractionForm {
    pub feedthrough: f64,
    pub b1: f64,
    pub b2: f64,
    /// Simple non-origin poles with residues; closed under conjugation.
    pub simple_poles: Vec<(Complex64, Complex64)>,
}

impl PartialFractionForm {
    /// Evaluate the recomposed form at a complex point.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(self.feedthrough, 0.0);
        if self.b1 != 0.0 {
            acc += self.b1 / s;
        }
        if self.b2 != 0.0 {
            acc += self.b2 / (s * s);
        }
        for (p, r) in &self.simple_poles {
            acc += r / (s - p);
        }
        acc
    }
}

const CANCEL_RTOL: f64 = 1e-7;
const CLUSTER_RTOL: f64 = 1e-8;

/// Decompose a proper rational function into partial fractions.
///
/// Near-coincident numerator/denominator roots are cancelled first
/// (compensators are routinely designed to cancel plant poles). Non-origin
/// poles must be simple; the origin pole may have multiplicity up to 2.
pub fn partial_fractions(tf: &RationalTf) -> Result<PartialFractionForm, TfError> {
    if tf.is_zero() {
        return Ok(PartialFractionForm {
            feedthrough: 0.0,
            b1: 0.0,
            b2: 0.0,
            simple_poles: Vec::new(),
        });
    }
    let num = tf.num.clone();
    let den = tf.den.clone();

    // Structural origin factors: trailing zero coefficients.
    let num_s_order = num.iter().take_while(|c| **c == 0.0).count();
    let den_s_order = den.iter().take_while(|c| **c == 0.0).count();
    let common = num_s_order.min(den_s_order);
    let num = num[common..].to_vec();
    let den = den[common..].to_vec();
    let origin_mult = den_s_order - common;
    if origin_mult > 2 {
        return Err(TfError::OriginMultiplicity(origin_mult));
    }
    let q = den[origin_mult..].to_vec(); // den = s^m * q, q(0) != 0

    // Cancel nearly common non-origin roots.
    let mut num_roots = poly::roots(&num);
    let mut den_roots = poly::roots(&q);
    let root_scale = den_roots
        .iter()
        .chain(num_roots.iter())
        .fold(1.0_f64, |m, r| m.max(r.norm()));
    let mut i = 0;
    while i < num_roots.len() {
        let mut cancelled = false;
        for j in 0..den_roots.len() {
            if (num_roots[i] - den_roots[j]).norm() < CANCEL_RTOL * root_scale {
                num_roots.remove(i);
                den_roots.remove(j);
                cancelled = true;
                break;
            }
        }
        if !cancelled {
            i += 1;
        }
    }
    let num_lead = *num.last().unwrap();
    let den_lead = *q.last().unwrap();
    let num = poly::from_roots(num_lead, &num_roots);
    let q = poly::from_roots(den_lead, &den_roots);

    // Reject repeated non-origin poles (cluster detection).
    for (j, pj) in den_roots.iter().enumerate() {
        let mult = den_roots
            .iter()
            .filter(|pk| (*pk - pj).norm() < CLUSTER_RTOL * root_scale)
            .count();
        if mult > 1 {
            return Err(TfError::RepeatedPole {
                pole_re: pj.re,
                pole_im: pj.im,
                multiplicity: mult,
            });
        }
        let _ = j;
    }

    // Feedthrough (bi-proper only), then the strictly proper remainder.
    let full_den = {
        let mut d = vec![0.0; origin_mult];
        d.extend_from_slice(&q);
        d
    };
    let mut num_sp = num.clone();
    let feedthrough = if num_sp.len() == full_den.len() {
        let d = num_sp.last().unwrap() / full_den.last().unwrap();
        num_sp = poly::trim(&poly::add(&num_sp, &poly::scale(&full_den, -d)));
        d
    } else if num_sp.len() > full_den.len() {
        return Err(TfError::Improper {
            num: num_sp.len() - 1,
            den: full_den.len() - 1,
        });
    } else {
        0.0
    };

    // Origin-pole coefficients from the Taylor expansion of num_sp/q at 0.
    let (b1, b2) = match origin_mult {
        0 => (0.0, 0.0),
        1 => (
            poly::eval_real(&num_sp, 0.0) / poly::eval_real(&q, 0.0),
            0.0,
        ),
        2 => {
            let q0 = poly::eval_real(&q, 0.0);
            let n0 = poly::eval_real(&num_sp, 0.0);
            let n1 = poly::eval_real(&poly::derivative(&num_sp), 0.0);
            let q1 = poly::eval_real(&poly::derivative(&q), 0.0);
            let c0 = n0 / q0;
            let c1 = (n1 * q0 - n0 * q1) / (q0 * q0);
            (c1, c0)
        }
        _ => unreachable!(),
    };

    // Residues at simple poles: r = num_sp(p) / den'(p).
    let den_deriv = poly::derivative(&full_den);
    let mut simple_poles = Vec::with_capacity(den_roots.len());
    for p in &den_roots {
        let p = if p.im.abs() < 1e-12 * root_scale {
            Complex64::new(p.re, 0.0)
        } else {
            *p
        };
        let r = poly::eval_complex(&num_sp, p) / poly::eval_complex(&den_deriv, p);
        simple_poles.push((p, r));
    }
    // Enforce exact conjugate symmetry by averaging paired entries.
    symmetrize_conjugates(&mut simple_poles);

    Ok(PartialFractionForm {
        feedthrough,
        b1,
        b2,
        simple_poles,
    })
}

fn symmetrize_conjugates(poles: &mut [(Complex64, Complex64)]) {
    let n = poles.len();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || poles[i].0.im == 0.0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if j == i || used[j] || poles[j].0.im * poles[i].0.im >= 0.0 {
                continue;
            }
            let d = (poles[j].0 - poles[i].0.conj()).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            let p = 0.5 * (poles[i].0 + poles[j].0.conj());
            let r = 0.5 * (poles[i].1 + poles[j].1.conj());
            poles[i] = (p, r);
            poles[j] = (p.conj(), r.conj());
            used[i] = true;
            used[j] = true;
        }
    }
}
