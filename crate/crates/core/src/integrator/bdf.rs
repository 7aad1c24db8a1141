//! Variable-order, variable-step BDF stepper in backward-difference form.
//!
//! Step changes rescale the difference table so the method keeps a fixed
//! leading coefficient (quasi-constant step size). The corrector is a modified
//! Newton iteration with a finite-difference Jacobian that is only refreshed
//! when the iteration fails to converge.

use super::linalg::Lu;
use super::{IntegratorConfig, IntegratorStats, VectorField};
use crate::error::{Error, Result};

pub(crate) const MAX_ORDER: usize = 5;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

fn gamma(k: usize) -> f64 {
    (1..=k).map(|j| 1.0 / j as f64).sum()
}

fn error_const(k: usize) -> f64 {
    1.0 / (k as f64 + 1.0)
}

fn rms_norm(x: impl Iterator<Item = f64>, n: usize) -> f64 {
    (x.map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

/// `R` matrix for rescaling the difference table by `factor`.
fn compute_r(order: usize, factor: f64) -> Vec<Vec<f64>> {
    let m = order + 1;
    let mut r = vec![vec![0.0; m]; m];
    r[0].iter_mut().for_each(|v| *v = 1.0);
    for i in 1..m {
        for j in 0..m {
            let entry = if j == 0 {
                0.0
            } else {
                (i as f64 - 1.0 - factor * j as f64) / i as f64
            };
            r[i][j] = r[i - 1][j] * entry;
        }
    }
    r
}

pub(crate) struct Bdf<'a, F: ?Sized> {
    field: &'a F,
    input: Vec<f64>,
    n: usize,
    pub(crate) t: f64,
    pub(crate) y: Vec<f64>,
    /// Derivative at `(t, y)`, kept for dense output.
    pub(crate) f: Vec<f64>,
    d: Vec<Vec<f64>>,
    order: usize,
    max_order: usize,
    h_abs: f64,
    n_equal_steps: usize,
    jac: Vec<f64>,
    jac_current: bool,
    lu: Option<Lu>,
    rtol: f64,
    atol: f64,
    newton_tol: f64,
    newton_max_iters: usize,
    max_step: f64,
    dt_min: f64,
    pub(crate) stats: IntegratorStats,
}

impl<'a, F: VectorField + ?Sized> Bdf<'a, F> {
    pub(crate) fn new(
        field: &'a F,
        t: f64,
        y: Vec<f64>,
        input: Vec<f64>,
        t_bound: f64,
        max_step: f64,
        cfg: &IntegratorConfig,
    ) -> Result<Self> {
        let n = y.len();
        let mut s = Self {
            field,
            input,
            n,
            t,
            f: vec![0.0; n],
            y,
            d: vec![vec![0.0; n]; MAX_ORDER + 3],
            order: 1,
            max_order: cfg.max_order,
            h_abs: 0.0,
            n_equal_steps: 0,
            jac: vec![0.0; n * n],
            jac_current: false,
            lu: None,
            rtol: cfg.rtol,
            atol: cfg.atol,
            newton_tol: cfg.newton_tol(),
            newton_max_iters: cfg.newton_max_iters,
            max_step,
            dt_min: cfg.dt_min,
            stats: IntegratorStats::default(),
        };
        s.restart(s.input.clone(), t_bound)?;
        Ok(s)
    }

    fn eval(&mut self, y: &[f64], out: &mut [f64]) {
        self.stats.rhs_evals += 1;
        self.field.eval(y, &self.input, out);
    }

    fn failure(&self, h: f64, reason: impl Into<String>) -> Error {
        Error::Stiffness {
            t: self.t,
            h,
            reason: reason.into(),
            state: self.y.clone(),
        }
    }

    /// Resets the method to order one at the current point, e.g. after the
    /// input jumps.
    pub(crate) fn restart(&mut self, input: Vec<f64>, t_bound: f64) -> Result<()> {
        self.input = input;
        let y = self.y.clone();
        let mut f = vec![0.0; self.n];
        self.eval(&y, &mut f);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(self.failure(0.0, "non-finite derivative"));
        }
        self.f = f;
        self.h_abs = self.initial_step(t_bound - self.t);
        self.order = 1;
        self.n_equal_steps = 0;
        self.lu = None;
        self.compute_jacobian();
        for row in self.d.iter_mut() {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        self.d[0].copy_from_slice(&self.y);
        for i in 0..self.n {
            self.d[1][i] = self.f[i] * self.h_abs;
        }
        Ok(())
    }

    fn initial_step(&mut self, interval: f64) -> f64 {
        let n = self.n;
        if interval <= 0.0 {
            return 0.0;
        }
        let scale: Vec<f64> = self.y.iter().map(|y| self.atol + self.rtol * y.abs()).collect();
        let d0 = rms_norm(self.y.iter().zip(&scale).map(|(y, s)| y / s), n);
        let d1 = rms_norm(self.f.iter().zip(&scale).map(|(f, s)| f / s), n);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(interval);
        let y1: Vec<f64> = self.y.iter().zip(&self.f).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; n];
        self.eval(&y1, &mut f1);
        let d2 = rms_norm(
            f1.iter().zip(&self.f).zip(&scale).map(|((a, b), s)| (a - b) / s),
            n,
        ) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.5)
        };
        (100.0 * h0).min(h1).min(interval).min(self.max_step)
    }

    fn compute_jacobian(&mut self) {
        let n = self.n;
        let y = self.y.clone();
        let f0 = self.f.clone();
        let mut yp = y.clone();
        let mut fp = vec![0.0; n];
        for j in 0..n {
            let delta = f64::EPSILON.sqrt() * y[j].abs().max(1.0);
            yp[j] = y[j] + delta;
            let delta = yp[j] - y[j];
            self.eval(&yp, &mut fp);
            for i in 0..n {
                self.jac[i * n + j] = (fp[i] - f0[i]) / delta;
            }
            yp[j] = y[j];
        }
        self.stats.jacobian_evals += 1;
        self.jac_current = true;
    }

    fn change_d(&mut self, factor: f64) {
        let order = self.order;
        let r = compute_r(order, factor);
        let u = compute_r(order, 1.0);
        let m = order + 1;
        // RU = R U; D[..m] = RU^T D[..m]
        let mut ru = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                ru[i][j] = (0..m).map(|k| r[i][k] * u[k][j]).sum();
            }
        }
        let old: Vec<Vec<f64>> = self.d[..m].to_vec();
        for i in 0..m {
            for c in 0..self.n {
                self.d[i][c] = (0..m).map(|j| ru[j][i] * old[j][c]).sum();
            }
        }
    }

    /// Newton iteration for the BDF corrector. Returns convergence flag,
    /// iteration count, corrected state and the accumulated correction.
    fn solve_system(
        &mut self,
        y_predict: &[f64],
        c: f64,
        psi: &[f64],
        scale: &[f64],
    ) -> (bool, usize, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut d = vec![0.0; n];
        let mut y = y_predict.to_vec();
        let mut f = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut dy = vec![0.0; n];
        let mut dy_norm_old: Option<f64> = None;
        let mut converged = false;
        let mut iters = 0;
        for k in 0..self.newton_max_iters {
            iters = k + 1;
            self.eval(&y, &mut f);
            self.stats.newton_iters += 1;
            if f.iter().any(|v| !v.is_finite()) {
                break;
            }
            for i in 0..n {
                rhs[i] = c * f[i] - psi[i] - d[i];
            }
            self.lu.as_ref().expect("factorised").solve(&rhs, &mut dy);
            let dy_norm = rms_norm(dy.iter().zip(scale).map(|(a, s)| a / s), n);
            let rate = dy_norm_old.map(|old| dy_norm / old);
            if let Some(rate) = rate {
                if rate >= 1.0
                    || rate.powi((self.newton_max_iters - k) as i32) / (1.0 - rate) * dy_norm
                        > self.newton_tol
                {
                    break;
                }
            }
            for i in 0..n {
                y[i] += dy[i];
                d[i] += dy[i];
            }
            if dy_norm == 0.0
                || rate.is_some_and(|rate| rate / (1.0 - rate) * dy_norm < self.newton_tol)
            {
                converged = true;
                break;
            }
            dy_norm_old = Some(dy_norm);
        }
        (converged, iters, y, d)
    }

    /// Advances one accepted step without passing `t_bound`.
    pub(crate) fn step(&mut self, t_bound: f64) -> Result<()> {
        let n = self.n;
        let t = self.t;
        let min_step = (10.0 * (next_up(t) - t)).max(self.dt_min);

        let mut h_abs = self.h_abs;
        if h_abs > self.max_step {
            self.change_d(self.max_step / h_abs);
            h_abs = self.max_step;
            self.n_equal_steps = 0;
        } else if h_abs < min_step {
            self.change_d(min_step / h_abs);
            h_abs = min_step;
            self.n_equal_steps = 0;
        }

        let order = self.order;
        let alpha = gamma(order);
        let mut t_new;
        let mut y_new;
        let mut d;
        let mut n_iter;
        let mut error_norm;
        let mut scale;
        loop {
            if h_abs < min_step {
                return Err(self.failure(h_abs, "step size underflow"));
            }
            t_new = t + h_abs;
            // snap to the bound rather than leave a sliver step behind
            if t_new > t_bound || t_bound - t_new < 1e-3 * h_abs {
                t_new = t_bound;
                self.change_d((t_new - t) / h_abs);
                self.n_equal_steps = 0;
                self.lu = None;
            }
            h_abs = t_new - t;

            let mut y_predict = vec![0.0; n];
            for row in &self.d[..=order] {
                for i in 0..n {
                    y_predict[i] += row[i];
                }
            }
            scale = y_predict
                .iter()
                .map(|y| self.atol + self.rtol * y.abs())
                .collect::<Vec<_>>();
            let mut psi = vec![0.0; n];
            for (k, row) in self.d[1..=order].iter().enumerate() {
                let g = gamma(k + 1);
                for i in 0..n {
                    psi[i] += row[i] * g;
                }
            }
            psi.iter_mut().for_each(|v| *v /= alpha);

            let c = h_abs / alpha;
            let mut converged;
            loop {
                if self.lu.is_none() {
                    let mut m = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            m[i * n + j] = -c * self.jac[i * n + j];
                        }
                        m[i * n + i] += 1.0;
                    }
                    self.lu = Lu::factor(m, n);
                    self.stats.factorizations += 1;
                    if self.lu.is_none() {
                        return Err(self.failure(h_abs, "singular Newton matrix"));
                    }
                }
                let (ok, it, y, dd) = self.solve_system(&y_predict, c, &psi, &scale);
                converged = ok;
                n_iter = it;
                y_new = y;
                d = dd;
                if converged || self.jac_current {
                    break;
                }
                // refresh the Jacobian at the predicted point
                let (y_save, f_save) = (self.y.clone(), self.f.clone());
                self.y = y_predict.clone();
                let mut fp = vec![0.0; n];
                self.eval(&y_predict, &mut fp);
                self.f = fp;
                self.compute_jacobian();
                self.y = y_save;
                self.f = f_save;
                self.lu = None;
            }
            if !converged {
                self.stats.rejected += 1;
                h_abs *= 0.5;
                self.change_d(0.5);
                self.n_equal_steps = 0;
                self.lu = None;
                continue;
            }

            let safety =
                0.9 * (2 * self.newton_max_iters + 1) as f64
                / (2 * self.newton_max_iters + n_iter) as f64;
            scale = y_new
                .iter()
                .map(|y| self.atol + self.rtol * y.abs())
                .collect();
            let ec = error_const(order);
            error_norm = rms_norm(d.iter().zip(&scale).map(|(e, s)| ec * e / s), n);
            if error_norm > 1.0 {
                self.stats.rejected += 1;
                let factor = MIN_FACTOR.max(safety * error_norm.powf(-1.0 / (order as f64 + 1.0)));
                h_abs *= factor;
                self.change_d(factor);
                self.n_equal_steps = 0;
                continue;
            }

            // accepted
            self.stats.accepted += 1;
            self.n_equal_steps += 1;
            self.t = t_new;
            self.y = y_new;
            self.h_abs = h_abs;
            self.jac_current = false;
            let y_now = self.y.clone();
            let mut f_now = vec![0.0; n];
            self.eval(&y_now, &mut f_now);
            self.f = f_now;
            if self.y.iter().any(|v| !v.is_finite()) {
                return Err(self.failure(h_abs, "non-finite state"));
            }

            for i in 0..n {
                self.d[order + 2][i] = d[i] - self.d[order + 1][i];
                self.d[order + 1][i] = d[i];
            }
            for k in (0..=order).rev() {
                for i in 0..n {
                    let add = self.d[k + 1][i];
                    self.d[k][i] += add;
                }
            }

            if self.n_equal_steps < order + 1 {
                return Ok(());
            }

            let error_m_norm = if order > 1 {
                let ec = error_const(order - 1);
                rms_norm(
                    self.d[order].iter().zip(&scale).map(|(e, s)| ec * e / s),
                    n,
                )
            } else {
                f64::INFINITY
            };
            let error_p_norm = if order < self.max_order {
                let ec = error_const(order + 1);
                rms_norm(
                    self.d[order + 2].iter().zip(&scale).map(|(e, s)| ec * e / s),
                    n,
                )
            } else {
                f64::INFINITY
            };
            let norms = [error_m_norm, error_norm, error_p_norm];
            let mut best = 0;
            let mut best_factor = f64::NEG_INFINITY;
            for (k, e) in norms.iter().enumerate() {
                let factor = if *e == 0.0 {
                    f64::INFINITY
                } else {
                    e.powf(-1.0 / (order + k) as f64)
                };
                if factor > best_factor {
                    best_factor = factor;
                    best = k;
                }
            }
            self.order = order + best - 1;
            let factor = MAX_FACTOR.min(safety * best_factor);
            self.h_abs *= factor;
            self.change_d(factor);
            self.n_equal_steps = 0;
            self.lu = None;
            return Ok(());
        }
    }
}

fn next_up(t: f64) -> f64 {
    let t = t.abs();
    f64::from_bits(t.to_bits() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_matrix_identity_for_unit_factor_squared() {
        // U = R(1) satisfies U U = I
        for order in 1..=5 {
            let u = compute_r(order, 1.0);
            let m = order + 1;
            for i in 0..m {
                for j in 0..m {
                    let v: f64 = (0..m).map(|k| u[i][k] * u[k][j]).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expected).abs() < 1e-12, "order {order} ({i},{j}) = {v}");
                }
            }
        }
    }

    #[test]
    fn gamma_is_harmonic() {
        assert_eq!(gamma(0), 0.0);
        assert_eq!(gamma(1), 1.0);
        assert!((gamma(3) - 11.0 / 6.0).abs() < 1e-15);
    }
}
