//! Stiff ODE integration under piecewise-constant inputs.
//!
//! Steps never straddle a switch of the input: every switch time is a forced
//! step endpoint and, when the input value actually changes there, the BDF
//! method restarts at order one. Requested sample times are filled in by cubic
//! Hermite interpolation on accepted steps.

mod bdf;
pub(crate) mod linalg;

use serde::{Deserialize, Serialize};

use crate::controls::PiecewiseConstantControl;
use crate::error::{check_dim, Error, Result};
use bdf::Bdf;

/// Right-hand side `f(x, u)` of an autonomous control system.
pub trait VectorField: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn eval(&self, state: &[f64], input: &[f64], out: &mut [f64]);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_order: usize,
    /// Smallest admissible step (ms).
    pub dt_min: f64,
    /// Largest admissible step (ms); the input period when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    /// Newton convergence tolerance in the error-weighted RMS norm; derived
    /// from `rtol` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    pub newton_max_iters: usize,
    /// Force a step endpoint at every sample time instead of interpolating.
    #[serde(default)]
    pub land_on_samples: bool,
    /// Keep the list of accepted step intervals in the statistics.
    #[serde(default)]
    pub record_steps: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            max_order: 5,
            dt_min: 1e-12,
            dt_max: None,
            newton_tol: None,
            newton_max_iters: 4,
            land_on_samples: false,
            record_steps: false,
        }
    }
}

impl IntegratorConfig {
    pub fn with_rtol(rtol: f64) -> Self {
        Self {
            rtol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::contract("tolerances must be positive"));
        }
        if !(1..=bdf::MAX_ORDER).contains(&self.max_order) {
            return Err(Error::contract("BDF order cap must be in 1..=5"));
        }
        if !(self.dt_min > 0.0) || self.dt_max.is_some_and(|m| !(self.dt_min < m)) {
            return Err(Error::contract("need 0 < dt_min < dt_max"));
        }
        if self.newton_max_iters == 0 {
            return Err(Error::contract("Newton iteration cap must be positive"));
        }
        Ok(())
    }

    pub(crate) fn newton_tol(&self) -> f64 {
        self.newton_tol
            .unwrap_or_else(|| (10.0 * f64::EPSILON / self.rtol).max(0.03f64.min(self.rtol.sqrt())))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_iters: usize,
    pub jacobian_evals: usize,
    pub factorizations: usize,
    pub rhs_evals: usize,
    pub restarts: usize,
    /// Accepted step intervals, only filled when `record_steps` is set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<(f64, f64)>,
}

impl IntegratorStats {
    fn absorb(&mut self, other: &IntegratorStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.newton_iters += other.newton_iters;
        self.jacobian_evals += other.jacobian_evals;
        self.factorizations += other.factorizations;
        self.rhs_evals += other.rhs_evals;
    }
}

/// States at the requested sample times.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: IntegratorStats,
}

fn hermite(t0: f64, y0: &[f64], f0: &[f64], t1: f64, y1: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    if t == t1 {
        return y1.to_vec();
    }
    if t == t0 {
        return y0.to_vec();
    }
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}

/// Integrates `x' = f(x, u(t))` from `x0` at `t = 0` and returns the states at
/// `sample_times` (ascending, within `[0, t_final]`).
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    u: &PiecewiseConstantControl,
    t_final: f64,
    sample_times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<SolutionPath> {
    cfg.validate()?;
    check_dim("initial state", field.state_dim(), x0.len())?;
    check_dim("control", field.input_dim(), u.dim())?;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::contract(format!("invalid final time {t_final}")));
    }
    if sample_times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::contract("sample times must be strictly increasing"));
    }
    if let (Some(&first), Some(&last)) = (sample_times.first(), sample_times.last()) {
        if !(first >= 0.0 && last <= t_final) {
            return Err(Error::contract("sample times must lie in [0, t_final]"));
        }
    }

    let mut states = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] == 0.0 {
        states.push(x0.to_vec());
        next_sample += 1;
    }
    let mut stats = IntegratorStats::default();
    if next_sample == sample_times.len() || t_final == 0.0 {
        return Ok(SolutionPath {
            times: sample_times.to_vec(),
            states,
            stats,
        });
    }
    // Only integrate as far as the last sample.
    let t_end = *sample_times.last().expect("non-empty");

    // (time, restart) breakpoints
    let mut breaks: Vec<(f64, bool)> = u
        .switch_times(t_end)
        .into_iter()
        .map(|s| {
            let before = u.value(u.index_at(s) - 1);
            let after = u.value(u.index_at(s));
            (s, before != after)
        })
        .collect();
    if cfg.land_on_samples {
        breaks.extend(
            sample_times[next_sample..]
                .iter()
                .filter(|&&s| s < t_end)
                .map(|&s| (s, false)),
        );
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        breaks.dedup_by(|b, a| a.0 == b.0);
    }
    breaks.push((t_end, false));

    let max_step = cfg.dt_max.unwrap_or(u.delta());
    let first_bound = breaks[0].0;
    let mut bdf = Bdf::new(
        field,
        0.0,
        x0.to_vec(),
        u.value(0).to_vec(),
        first_bound,
        max_step,
        cfg,
    )?;

    for &(bound, restart) in &breaks {
        while bdf.t < bound {
            let (t0, y0, f0) = (bdf.t, bdf.y.clone(), bdf.f.clone());
            bdf.step(bound)?;
            if cfg.record_steps {
                stats.steps.push((t0, bdf.t));
            }
            while next_sample < sample_times.len() && sample_times[next_sample] <= bdf.t {
                states.push(hermite(
                    t0,
                    &y0,
                    &f0,
                    bdf.t,
                    &bdf.y,
                    &bdf.f,
                    sample_times[next_sample],
                ));
                next_sample += 1;
            }
        }
        if restart && bound < t_end {
            let next_bound = breaks
                .iter()
                .find(|b| b.0 > bound)
                .map_or(t_end, |b| b.0);
            stats.restarts += 1;
            bdf.restart(u.value(u.index_at(bound)).to_vec(), next_bound)?;
        }
    }
    stats.absorb(&bdf.stats);
    debug_assert_eq!(states.len(), sample_times.len());
    Ok(SolutionPath {
        times: sample_times.to_vec(),
        states,
        stats,
    })
}

/// Errors of two looser runs measured against the tightest of three runs at
/// tolerances `rtol`, `rtol / 10` and `rtol / 100`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub rtols: [f64; 3],
    /// Max-norm deviation from the tightest run, loosest first.
    pub errors: [f64; 2],
    /// `errors[0] / errors[1]`; about 10 when error tracks tolerance.
    pub ratio: f64,
}

impl ConvergenceReport {
    /// Decades of error reduction per decade of tolerance.
    pub fn observed_order(&self) -> f64 {
        self.ratio.log10()
    }
}

pub fn self_convergence<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    u: &PiecewiseConstantControl,
    t_final: f64,
    sample_times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<ConvergenceReport> {
    let rtols = [cfg.rtol, cfg.rtol / 10.0, cfg.rtol / 100.0];
    let runs = rtols
        .iter()
        .enumerate()
        .map(|(k, &rtol)| {
            let c = IntegratorConfig {
                rtol,
                atol: cfg.atol / 10f64.powi(k as i32),
                ..cfg.clone()
            };
            integrate(field, x0, u, t_final, sample_times, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    let deviation = |a: &SolutionPath| {
        a.states
            .iter()
            .zip(&runs[2].states)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
            .fold(0.0f64, f64::max)
    };
    let errors = [deviation(&runs[0]), deviation(&runs[1])];
    Ok(ConvergenceReport {
        rtols,
        errors,
        ratio: errors[0] / errors[1],
    })
}
