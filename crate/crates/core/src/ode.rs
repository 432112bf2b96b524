//! Adaptive Dormand–Prince 5(4) for small fixed-size systems.

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub type State = [f64; 2];

fn lin(y: &State, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += c * k[0];
        out[1] += c * k[1];
    }
    out
}

/// One trial step; returns the fifth-order solution and error estimate.
fn trial<F: FnMut(f64, &State) -> State>(f: &mut F, t: f64, y: &State, h: f64) -> (State, State) {
    let k1 = f(t, y);
    let k2 = f(t + C2 * h, &lin(y, &[(h * A21, &k1)]));
    let k3 = f(t + C3 * h, &lin(y, &[(h * A31, &k1), (h * A32, &k2)]));
    let k4 = f(t + C4 * h, &lin(y, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]));
    let k5 = f(
        t + C5 * h,
        &lin(y, &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)]),
    );
    let k6 = f(
        t + h,
        &lin(y, &[(h * A61, &k1), (h * A62, &k2), (h * A63, &k3), (h * A64, &k4), (h * A65, &k5)]),
    );
    let y5 = lin(y, &[(h * B1, &k1), (h * B3, &k3), (h * B4, &k4), (h * B5, &k5), (h * B6, &k6)]);
    let k7 = f(t + h, &y5);
    let mut err = [0.0; 2];
    for i in 0..2 {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, err)
}

#[derive(Debug, Clone, Copy)]
pub struct Stepper {
    pub rtol: f64,
    pub atol: f64,
    pub h: f64,
    pub h_min: f64,
}

impl Stepper {
    pub fn new(rtol: f64, atol: f64, h0: f64) -> Self {
        Self {
            rtol,
            atol,
            h: h0,
            h_min: 1e-14 * h0.abs().max(1e-300),
        }
    }

    /// Advances one accepted step, never past `t_end`. Returns the new
    /// time, or `None` if the step size underflows or the state blows up.
    pub fn step<F: FnMut(f64, &State) -> State>(&mut self, f: &mut F, t: f64, y: &mut State, t_end: f64) -> Option<f64> {
        loop {
            let mut h = self.h.min(t_end - t);
            let last = h >= t_end - t;
            if last {
                h = t_end - t;
            }
            let (y5, e) = trial(f, t, y, h);
            let mut err: f64 = 0.0;
            for i in 0..2 {
                let sc = self.atol + self.rtol * y[i].abs().max(y5[i].abs());
                err = err.max((e[i] / sc).abs());
            }
            if !err.is_finite() || !y5[0].is_finite() || !y5[1].is_finite() {
                self.h = 0.25 * h;
                if self.h < self.h_min {
                    return None;
                }
                continue;
            }
            if err <= 1.0 {
                *y = y5;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    self.h = h * fac;
                }
                return Some(if last { t_end } else { t + h });
            }
            self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            if self.h < self.h_min {
                return None;
            }
        }
    }

    /// Integrates from `t` to `t_end`.
    pub fn advance<F: FnMut(f64, &State) -> State>(&mut self, f: &mut F, mut t: f64, y: &mut State, t_end: f64) -> Option<()> {
        while t < t_end {
            t = self.step(f, t, y, t_end)?;
        }
        Some(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let mut f = |_t: f64, y: &State| [y[1], -y[0]];
        let mut y = [1.0, 0.0];
        let mut s = Stepper::new(1e-12, 1e-14, 0.1);
        s.advance(&mut f, 0.0, &mut y, 10.0).unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-10);
        assert!((y[1] + 10f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn fifth_order() {
        // fixed-step error ratio on y' = y
        let mut f = |_t: f64, y: &State| [y[0], 0.0];
        let mut err = |n: usize| {
            let mut y = [1.0, 0.0];
            let h = 1.0 / n as f64;
            for k in 0..n {
                let (y5, _) = trial(&mut f, k as f64 * h, &y, h);
                y = y5;
            }
            (y[0] - 1f64.exp()).abs()
        };
        let order = (err(8) / err(16)).log2();
        assert!(order > 4.5, "order {order}");
    }
}
