//! Dormand–Prince 5(4) stepping and a PI step-size controller.

use crate::error::Result;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Scratch stages for one system size.
#[derive(Debug, Clone)]
pub(crate) struct Dopri5 {
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    k5: Vec<f64>,
    k6: Vec<f64>,
    tmp: Vec<f64>,
}

impl Dopri5 {
    pub fn new(n: usize) -> Self {
        let z = vec![0.0; n];
        Self { k2: z.clone(), k3: z.clone(), k4: z.clone(), k5: z.clone(), k6: z.clone(), tmp: z }
    }

    /// One trial step from `(t, y)` with `f0 = f(t, y)`. Writes the fifth-order
    /// solution, its derivative (FSAL) and the error estimate.
    #[allow(clippy::too_many_arguments)]
    pub fn step<F>(
        &mut self,
        f: &mut F,
        t: f64,
        h: f64,
        y: &[f64],
        f0: &[f64],
        y_new: &mut [f64],
        f_new: &mut [f64],
        err: &mut [f64],
    ) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        for i in 0..n {
            self.tmp[i] = y[i] + h * A21 * f0[i];
        }
        f(t + C2 * h, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = y[i] + h * (A31 * f0[i] + A32 * self.k2[i]);
        }
        f(t + C3 * h, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = y[i] + h * (A41 * f0[i] + A42 * self.k2[i] + A43 * self.k3[i]);
        }
        f(t + C4 * h, &self.tmp, &mut self.k4)?;
        for i in 0..n {
            self.tmp[i] = y[i] + h * (A51 * f0[i] + A52 * self.k2[i] + A53 * self.k3[i] + A54 * self.k4[i]);
        }
        f(t + C5 * h, &self.tmp, &mut self.k5)?;
        for i in 0..n {
            self.tmp[i] =
                y[i] + h * (A61 * f0[i] + A62 * self.k2[i] + A63 * self.k3[i] + A64 * self.k4[i] + A65 * self.k5[i]);
        }
        f(t + h, &self.tmp, &mut self.k6)?;
        for i in 0..n {
            y_new[i] = y[i] + h * (A71 * f0[i] + A73 * self.k3[i] + A74 * self.k4[i] + A75 * self.k5[i] + A76 * self.k6[i]);
        }
        f(t + h, y_new, f_new)?;
        for i in 0..n {
            err[i] = h
                * (E1 * f0[i] + E3 * self.k3[i] + E4 * self.k4[i] + E5 * self.k5[i] + E6 * self.k6[i] + E7 * f_new[i]);
        }
        Ok(())
    }
}

/// Max-norm of `err` scaled by `abs_tol + rel_tol·max(|y|, |y_new|)`.
pub(crate) fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], rel_tol: f64, abs_tol: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for ((a, b), e) in y.iter().zip(y_new).zip(err) {
        let scale = abs_tol + rel_tol * a.abs().max(b.abs());
        worst = worst.max(e.abs() / scale);
    }
    if worst.is_nan() {
        f64::INFINITY
    } else {
        worst
    }
}

/// Proportional-integral controller with the usual 5(4) exponents.
#[derive(Debug, Clone)]
pub(crate) struct PiController {
    err_prev: f64,
}

impl PiController {
    const ALPHA: f64 = 0.17;
    const BETA: f64 = 0.04;
    const SAFETY: f64 = 0.9;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;

    pub fn new() -> Self {
        Self { err_prev: 1e-4 }
    }

    /// Step factor after an accepted step (`err ≤ 1`).
    pub fn accept(&mut self, err: f64) -> f64 {
        let err = err.max(1e-10);
        let fac = Self::SAFETY * err.powf(-Self::ALPHA) * self.err_prev.powf(Self::BETA);
        self.err_prev = err;
        fac.clamp(Self::FAC_MIN, Self::FAC_MAX)
    }

    /// Step factor after a rejected step.
    pub fn reject(&mut self, err: f64) -> f64 {
        if !err.is_finite() {
            return Self::FAC_MIN;
        }
        (Self::SAFETY * err.powf(-Self::ALPHA)).clamp(Self::FAC_MIN, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate_exp(h: f64, steps: usize) -> f64 {
        let mut st = Dopri5::new(1);
        let mut f = |_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = -y[0];
            Ok(())
        };
        let (mut y, mut dy) = (vec![1.0], vec![-1.0]);
        let (mut yn, mut dn, mut e) = (vec![0.0], vec![0.0], vec![0.0]);
        for k in 0..steps {
            st.step(&mut f, k as f64 * h, h, &y, &dy, &mut yn, &mut dn, &mut e).unwrap();
            std::mem::swap(&mut y, &mut yn);
            std::mem::swap(&mut dy, &mut dn);
        }
        y[0]
    }

    #[test]
    fn fifth_order_convergence() {
        let exact = (-1f64).exp();
        let e1 = (integrate_exp(0.1, 10) - exact).abs();
        let e2 = (integrate_exp(0.05, 20) - exact).abs();
        let ratio = e1 / e2;
        assert!(ratio > 25.0 && ratio < 40.0, "ratio {ratio}");
    }

    #[test]
    fn error_estimate_vanishes_on_polynomials() {
        // y' = t^3 is integrated exactly by both embedded solutions
        let mut st = Dopri5::new(1);
        let mut f = |t: f64, _y: &[f64], out: &mut [f64]| {
            out[0] = t * t * t;
            Ok(())
        };
        let (mut yn, mut dn, mut e) = (vec![0.0], vec![0.0], vec![0.0]);
        st.step(&mut f, 0.0, 1.0, &[0.0], &[0.0], &mut yn, &mut dn, &mut e).unwrap();
        assert!((yn[0] - 0.25).abs() < 1e-15);
        assert!(e[0].abs() < 1e-15);
    }

    #[test]
    fn controller_shrinks_on_large_error() {
        let mut c = PiController::new();
        assert!(c.reject(100.0) < 1.0);
        assert_eq!(c.reject(f64::NAN), 0.2);
        assert!(c.accept(1e-6) > 1.0);
    }
}
