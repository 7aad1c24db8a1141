use serde::{Deserialize, Serialize};

/// Width of the window around a removable singularity in which the limit
/// value is substituted (mV).
const SINGULAR_WINDOW: f64 = 1e-7;

/// Voltage-dependent transition rate (1/ms) in one of the three classic
/// Hodgkin–Huxley shapes, all written in terms of `x = (V - v_half) / slope`.
///
/// * `exp`: `rate * exp(x)`
/// * `sigmoid`: `rate / (1 + exp(x))`
/// * `linexp`: `rate * x / (exp(x) - 1)`, equal to `rate` at `V = v_half`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase", deny_unknown_fields)]
pub enum RateFunction {
    Exp { rate: f64, v_half: f64, slope: f64 },
    Sigmoid { rate: f64, v_half: f64, slope: f64 },
    LinExp { rate: f64, v_half: f64, slope: f64 },
}

impl RateFunction {
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            RateFunction::Exp {
                rate,
                v_half,
                slope,
            } => rate * ((v - v_half) / slope).exp(),
            RateFunction::Sigmoid {
                rate,
                v_half,
                slope,
            } => rate / (1.0 + ((v - v_half) / slope).exp()),
            RateFunction::LinExp {
                rate,
                v_half,
                slope,
            } => {
                if (v - v_half).abs() < SINGULAR_WINDOW {
                    rate
                } else {
                    let x = (v - v_half) / slope;
                    rate * x / x.exp_m1()
                }
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let (RateFunction::Exp { rate, v_half, slope }
        | RateFunction::Sigmoid { rate, v_half, slope }
        | RateFunction::LinExp { rate, v_half, slope }) = *self;
        if !(rate.is_finite() && v_half.is_finite() && slope.is_finite()) {
            return Err("rate constants must be finite".into());
        }
        if slope == 0.0 {
            return Err("slope must be nonzero".into());
        }
        Ok(())
    }
}

/// First-order gate kinetics `dx/dt = alpha(V) (1 - x) - beta(V) x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatingKinetics {
    pub alpha: RateFunction,
    pub beta: RateFunction,
}

impl GatingKinetics {
    #[inline]
    pub fn derivative(&self, v: f64, x: f64) -> f64 {
        self.alpha.eval(v) * (1.0 - x) - self.beta.eval(v) * x
    }

    /// Steady-state open fraction `alpha / (alpha + beta)`.
    pub fn steady_state(&self, v: f64) -> f64 {
        let a = self.alpha.eval(v);
        let b = self.beta.eval(v);
        a / (a + b)
    }
}
