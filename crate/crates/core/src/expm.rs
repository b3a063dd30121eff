//! Dense matrix exponential by scaling and squaring with Pade approximants,
//! after Higham (2005), plus augmented-matrix propagators for affine systems.
//!
//! State dimensions here are tiny (<= 6 plus augmentation), so the dense
//! algorithm with exact LU solves keeps the switching simulation free of
//! integrator error.

use nalgebra::{DMatrix, DVector};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.53939833006323e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

fn pade_uv(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let mut even = &id * b[0];
    let mut odd = &id * b[1];
    let mut pow = id;
    for k in (2..b.len()).step_by(2) {
        pow = &pow * &a2;
        even += &pow * b[k];
        if k + 1 < b.len() {
            odd += &pow * b[k + 1];
        }
    }
    (a * odd, even)
}

fn pade13_uv(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_high = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]);
    let u_low = &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1];
    let u = a * (u_high + u_low);
    let v_high = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]);
    let v = v_high + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    (u, v)
}

/// exp(A) for a square real matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), a.ncols(), "expm needs a square matrix");
    let norm = a.abs().column_sum().max();
    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = pade_uv(a, &[120.0, 60.0, 12.0, 1.0]);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = pade_uv(a, &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0]);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = pade_uv(
            a,
            &[
                17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
            ],
        );
        (u, v, 0)
    } else if norm <= THETA_9 {
        let (u, v) = pade_uv(
            a,
            &[
                17643225600.0,
                8821612800.0,
                2075673600.0,
                302702400.0,
                30270240.0,
                2162160.0,
                110880.0,
                3960.0,
                90.0,
                1.0,
            ],
        );
        (u, v, 0)
    } else {
        let squarings = ((norm / THETA_13).log2().ceil() as i32).max(0);
        let scaled = a / 2f64.powi(squarings);
        let (u, v) = pade13_uv(&scaled);
        (u, v, squarings)
    };
    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator is nonsingular for scaled inputs");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// One-step propagator for the affine system x' = A x + b over a duration.
///
/// Returns (E, w) with x(t + dt) = E x(t) + w, computed exactly through the
/// exponential of the augmented matrix [[A, b], [0, 0]].
pub fn affine_step(a: &DMatrix<f64>, b: &DVector<f64>, dt: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    m.view_mut((0, n), (n, 1)).copy_from(&(b * dt));
    let e = expm(&m);
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, 1)).column(0).into_owned(),
    )
}

/// Propagate the affine system and accumulate the exact state integral:
/// returns (x(dt), integral of x over [0, dt]).
///
/// Uses the doubled augmentation
///   [ A  b  0 ]        [ x ]
///   [ 0  0  0 ]  on    [ 1 ]
///   [ I  0  0 ]        [ z ]
/// whose exponential advances x and accumulates z' = x.
pub fn affine_step_with_integral(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    dt: f64,
    x: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(2 * n + 1, 2 * n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    m.view_mut((0, n), (n, 1)).copy_from(&(b * dt));
    for i in 0..n {
        m[(n + 1 + i, i)] = dt;
    }
    let e = expm(&m);
    let mut v = DVector::<f64>::zeros(2 * n + 1);
    v.rows_mut(0, n).copy_from(x);
    v[n] = 1.0;
    let out = e * v;
    (out.rows(0, n).into_owned(), out.rows(n + 1, n).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(max_abs_diff(&expm(&z), &DMatrix::identity(3, 3)), 0.0);
    }

    #[test]
    fn exp_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0, 0.5]));
        let e = expm(&a);
        for (i, want) in [1.0f64.exp(), (-2.0f64).exp(), 0.5f64.exp()]
            .iter()
            .enumerate()
        {
            assert!((e[(i, i)] - want).abs() < 1e-14 * want);
        }
    }

    #[test]
    fn exp_of_rotation_block() {
        // exp([[0, -w], [w, 0]] t) = rotation by w t
        let w = 3.7;
        let t = 0.9;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0]) * t;
        let e = expm(&a);
        let (c, s) = ((w * t).cos(), (w * t).sin());
        let want = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!(max_abs_diff(&e, &want) < 1e-14);
    }

    #[test]
    fn semigroup_property() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[-120.0, 30.0, 7.0, 14.0, -260.0, 1.0, 0.4, 2.0, -55.0],
        );
        let e1 = expm(&(&a * 0.013));
        let e2 = expm(&(&a * 0.029));
        let e3 = expm(&(&a * 0.042));
        assert!(max_abs_diff(&(&e2 * &e1), &e3) < 1e-13 * e3.abs().max().max(1.0));
    }

    #[test]
    fn large_norm_uses_squaring() {
        let a = DMatrix::from_row_slice(2, 2, &[-800.0, 200.0, 100.0, -900.0]);
        let dt = 1e-2;
        let direct = expm(&(&a * dt));
        let half = expm(&(&a * (dt / 2.0)));
        let via = &half * &half;
        assert!(max_abs_diff(&direct, &via) < 1e-12);
    }

    #[test]
    fn affine_step_matches_scalar_solution() {
        // x' = -k x + u: x(t) = x0 e^{-kt} + (u/k)(1 - e^{-kt})
        let k = 140.0;
        let u = 7.0;
        let a = DMatrix::from_row_slice(1, 1, &[-k]);
        let b = DVector::from_vec(vec![u]);
        let dt = 3.3e-3;
        let (e, w) = affine_step(&a, &b, dt);
        let x0 = 0.4;
        let got = e[(0, 0)] * x0 + w[0];
        let want = x0 * (-k * dt).exp() + u / k * (1.0 - (-k * dt).exp());
        assert!((got - want).abs() < 1e-13 * (1.0 + want.abs()));
    }

    #[test]
    fn integral_augmentation_matches_quadrature() {
        let a = DMatrix::from_row_slice(2, 2, &[-30.0, 10.0, 5.0, -80.0]);
        let b = DVector::from_vec(vec![3.0, -1.0]);
        let x0 = DVector::from_vec(vec![0.2, -0.7]);
        let dt = 0.05;
        let (x_end, integral) = affine_step_with_integral(&a, &b, dt, &x0);
        // exact end state via plain affine step
        let (e, w) = affine_step(&a, &b, dt);
        let want_end = &e * &x0 + &w;
        assert!((&x_end - &want_end).abs().max() < 1e-12);
        // fine-grained Simpson quadrature of the trajectory
        let steps = 2000;
        let h = dt / steps as f64;
        let (eh, wh) = affine_step(&a, &b, h);
        let mut x = x0.clone();
        let mut acc = DVector::<f64>::zeros(2);
        for _ in 0..steps {
            let x_next = &eh * &x + &wh;
            let (em, wm) = affine_step(&a, &b, h / 2.0);
            let x_mid = &em * &x + &wm;
            acc += (x.clone() + x_mid * 4.0 + x_next.clone()) * (h / 6.0);
            x = x_next;
        }
        assert!(
            (&integral - &acc).abs().max() < 1e-9,
            "integral {integral:?} vs quadrature {acc:?}"
        );
    }
}
