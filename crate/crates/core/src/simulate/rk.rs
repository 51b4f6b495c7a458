//! Dormand–Prince 5(4) embedded pair with a PI step-size controller.

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

// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Continuous extension of order 4.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub(crate) struct StepResult {
    pub x_new: Vec<f64>,
    pub f_new: Vec<f64>,
    /// Correction added to the cubic Hermite interpolant, see [`super::Segment`].
    pub dense: Vec<f64>,
    /// Scaled RMS error; the step is acceptable when `<= 1`.
    pub err: f64,
}

/// Scratch space for one embedded step.
pub(crate) struct Dopri5 {
    k: [Vec<f64>; 6],
    tmp: Vec<f64>,
}

impl Dopri5 {
    pub fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    /// One trial step of size `h` from `(t, x)` with `f0 = f(t, x)`.
    #[allow(clippy::too_many_arguments)]
    pub fn step<E>(
        &mut self,
        f: &mut impl FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
        t: f64,
        x: &[f64],
        f0: &[f64],
        h: f64,
        rtol: f64,
        atol: f64,
    ) -> Result<StepResult, E> {
        let n = x.len();
        let [k2, k3, k4, k5, k6, _] = &mut self.k;
        let tmp = &mut self.tmp;

        for i in 0..n {
            tmp[i] = x[i] + h * A21 * f0[i];
        }
        f(t + C2 * h, tmp, k2)?;
        for i in 0..n {
            tmp[i] = x[i] + h * (A31 * f0[i] + A32 * k2[i]);
        }
        f(t + C3 * h, tmp, k3)?;
        for i in 0..n {
            tmp[i] = x[i] + h * (A41 * f0[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, tmp, k4)?;
        for i in 0..n {
            tmp[i] = x[i] + h * (A51 * f0[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, tmp, k5)?;
        for i in 0..n {
            tmp[i] = x[i] + h * (A61 * f0[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, tmp, k6)?;
        let mut x_new = vec![0.0; n];
        for i in 0..n {
            x_new[i] = x[i] + h * (A71 * f0[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        let mut f_new = vec![0.0; n];
        f(t + h, &x_new, &mut f_new)?;

        let mut acc = 0.0;
        for i in 0..n {
            let e = h * (E1 * f0[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * f_new[i]);
            let sc = atol + rtol * x[i].abs().max(x_new[i].abs());
            acc += (e / sc) * (e / sc);
        }
        let err = if n == 0 { 0.0 } else { (acc / n as f64).sqrt() };
        let dense = (0..n)
            .map(|i| h * (D1 * f0[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * f_new[i]))
            .collect();
        Ok(StepResult { x_new, f_new, dense, err })
    }
}

/// PI controller in the form used by classic DOPRI5 codes.
pub(crate) struct PiController {
    err_old: f64,
}

const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - BETA * 0.75;
const SAFETY: f64 = 0.9;
const MAX_SHRINK: f64 = 5.0; // h_new >= h / 5
const MAX_GROW: f64 = 10.0; // h_new <= 10 h

impl PiController {
    pub fn new() -> Self {
        Self { err_old: 1e-4 }
    }

    /// Step-size factor after an accepted step.
    pub fn accept(&mut self, err: f64) -> f64 {
        let err = err.max(1e-16);
        let fac = err.powf(ALPHA) / self.err_old.powf(BETA) / SAFETY;
        self.err_old = err.max(1e-4);
        1.0 / fac.clamp(1.0 / MAX_GROW, MAX_SHRINK)
    }

    /// Step-size factor after a rejected step.
    pub fn reject(&self, err: f64) -> f64 {
        let fac = err.powf(ALPHA) / SAFETY;
        1.0 / fac.clamp(1.0, MAX_SHRINK)
    }
}
