//! Cubic Hermite interpolation between accepted steps.

/// Value of the cubic Hermite interpolant at `t0 + θh`.
#[inline]
pub(crate) fn hermite(y0: f64, f0: f64, y1: f64, f1: f64, h: f64, theta: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
}

/// Time derivative of [`hermite`].
#[inline]
pub(crate) fn hermite_deriv(y0: f64, f0: f64, y1: f64, f1: f64, h: f64, theta: f64) -> f64 {
    let t2 = theta * theta;
    let d00 = 6.0 * t2 - 6.0 * theta;
    let d10 = 3.0 * t2 - 4.0 * theta + 1.0;
    let d01 = -6.0 * t2 + 6.0 * theta;
    let d11 = 3.0 * t2 - 2.0 * theta;
    (d00 * y0 + d01 * y1) / h + d10 * f0 + d11 * f1
}

/// One accepted step, kept for interpolation.
#[derive(Debug, Clone)]
pub(crate) struct DenseStep<'a> {
    pub t0: f64,
    pub h: f64,
    pub y0: &'a [f64],
    pub f0: &'a [f64],
    pub y1: &'a [f64],
    pub f1: &'a [f64],
}

impl DenseStep<'_> {
    #[inline]
    pub fn theta(&self, t: f64) -> f64 {
        ((t - self.t0) / self.h).clamp(0.0, 1.0)
    }

    #[inline]
    pub fn value(&self, k: usize, t: f64) -> f64 {
        hermite(self.y0[k], self.f0[k], self.y1[k], self.f1[k], self.h, self.theta(t))
    }

    #[inline]
    pub fn deriv(&self, k: usize, t: f64) -> f64 {
        hermite_deriv(self.y0[k], self.f0[k], self.y1[k], self.f1[k], self.h, self.theta(t))
    }

    pub fn values_into(&self, t: f64, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.value(k, t);
        }
    }
}
