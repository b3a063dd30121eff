//! Dense real polynomials in ascending powers of s.
//!
//! Systems here stay at order <= 6, so dense coefficient vectors and
//! companion-matrix root finding are adequate.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Drop trailing coefficients that are negligible relative to the largest one.
pub fn trim(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return vec![0.0];
    }
    let tol = scale * 1e-14;
    let mut end = coeffs.len();
    while end > 1 && coeffs[end - 1].abs() <= tol {
        end -= 1;
    }
    coeffs[..end].to_vec()
}

pub fn degree(coeffs: &[f64]) -> usize {
    trim(coeffs).len() - 1
}

pub fn is_zero(coeffs: &[f64]) -> bool {
    coeffs.iter().all(|c| *c == 0.0)
}

/// Horner evaluation at a complex point.
pub fn eval_complex(coeffs: &[f64], s: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * s + c;
    }
    acc
}

pub fn eval_real(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Coefficients of the derivative polynomial.
pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * k as f64)
        .collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| a.get(k).copied().unwrap_or(0.0) + b.get(k).copied().unwrap_or(0.0))
        .collect()
}

pub fn scale(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|c| c * k).collect()
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if is_zero(a) || is_zero(b) {
        return vec![0.0];
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Roots via the companion matrix of the monic polynomial.
///
/// Returns an empty vector for constants. The input is trimmed first.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let c = trim(coeffs);
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    let eig = m.complex_eigenvalues();
    let mut rs: Vec<Complex64> = eig.iter().copied().collect();
    // Deterministic order: by real part, then imaginary part.
    rs.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    rs
}

/// Rebuild a real-coefficient polynomial `lead * prod (s - r_k)` from roots.
///
/// Roots with small imaginary part are treated as real; the rest must pair up
/// into complex conjugates (paired greedily by distance).
pub fn from_roots(lead: f64, roots: &[Complex64]) -> Vec<f64> {
    let scale_mag = roots.iter().fold(1.0_f64, |m, r| m.max(r.norm()));
    let mut reals: Vec<f64> = Vec::new();
    let mut cplx: Vec<Complex64> = Vec::new();
    for r in roots {
        if r.im.abs() <= 1e-9 * scale_mag {
            reals.push(r.re);
        } else {
            cplx.push(*r);
        }
    }
    let mut poly = vec![lead];
    for r in reals {
        poly = mul(&poly, &[-r, 1.0]);
    }
    // Pair each positive-imaginary root with its nearest conjugate partner.
    let mut upper: Vec<Complex64> = cplx.iter().copied().filter(|r| r.im > 0.0).collect();
    let mut lower: Vec<Complex64> = cplx.iter().copied().filter(|r| r.im < 0.0).collect();
    for u in upper.drain(..) {
        let (idx, _) = lower
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (u.conj() - *a)
                    .norm()
                    .partial_cmp(&(u.conj() - *b).norm())
                    .unwrap()
            })
            .expect("complex roots of a real polynomial must pair into conjugates");
        let l = lower.swap_remove(idx);
        let re = 0.5 * (u.re + l.re);
        let mag2 = (u.norm() * l.norm()).max(0.0);
        // (s - u)(s - conj(u)) = s^2 - 2 Re(u) s + |u|^2
        poly = mul(&poly, &[mag2, -2.0 * re, 1.0]);
    }
    assert!(lower.is_empty(), "unpaired complex root");
    poly
}
