use crate::error::{Error, Result};
use crate::num::Real;

/// Radius of a ball evolving under a constant source `Q`: `Ṙ = Q − R/3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialOracle<T> {
    pub q: T,
    pub r0: T,
}

impl<T: Real> RadialOracle<T> {
    pub fn new(q: T, r0: T) -> Self {
        Self { q, r0 }
    }

    /// `R(t) = 3Q + (R₀ − 3Q) e^{−t/3}`.
    pub fn radius(&self, t: T) -> T {
        let three = T::lit(3.0);
        three * self.q + (self.r0 - three * self.q) * (-t / three).exp()
    }

    /// Right-hand side of the radial ODE.
    pub fn rate(&self, r: T) -> T {
        self.q - r / T::lit(3.0)
    }
}

/// `R(t)` from the closed form.
pub fn radial_oracle<T: Real>(q: T, r0: T, t: T) -> T {
    RadialOracle::new(q, r0).radius(t)
}

/// Integrates a scalar ODE `y' = f(t, y)` from `t0` to `t1` with the adaptive
/// Dormand–Prince 5(4) pair.
pub fn integrate_scalar<F>(f: F, y0: f64, t0: f64, t1: f64, tolerance: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument("integrator tolerance must be positive".into()));
    }
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut h = dir * (span.abs() * 1e-3).max(1e-12);
    for _ in 0..1_000_000 {
        if (t1 - t) * dir <= 0.0 {
            return Ok(y);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut k = [0.0; 7];
        for s in 0..7 {
            let ys = y + h * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
            k[s] = f(t + C[s] * h, ys);
        }
        let y5 = y + h * (0..7).map(|s| B5[s] * k[s]).sum::<f64>();
        let y4 = y + h * (0..7).map(|s| B4[s] * k[s]).sum::<f64>();
        let err = (y5 - y4).abs();
        let scale = tolerance * (1.0 + y.abs().max(y5.abs()));
        if err <= scale {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * (scale / err).powf(0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Err(Error::InvalidArgument("scalar integrator exceeded its step budget".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(radial_oracle(0.2, 1.0, 0.0), 1.0);
        assert!((radial_oracle(0.2f64, 1.0, 200.0) - 0.6).abs() < 1e-12);
        let r = radial_oracle(-1.5f64, 1.0, 0.1);
        assert!((r - 0.819_688_552_651_032_7).abs() < 1e-15);
        let ode = integrate_scalar(|_, r| -1.5 - r / 3.0, 1.0, 0.0, 0.1, 1e-13).unwrap();
        assert!((r - ode).abs() < 1e-12);
    }

    #[test]
    fn integrator_solves_exponential_decay() {
        let y = integrate_scalar(|_, y| -y, 1.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((y - (-2.0f64).exp()).abs() < 1e-11);
        let back = integrate_scalar(|_, y| -y, y, 2.0, 0.0, 1e-12).unwrap();
        assert!((back - 1.0).abs() < 1e-10);
    }
}
