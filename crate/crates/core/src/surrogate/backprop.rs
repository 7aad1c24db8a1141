//! Reverse-mode gradient of the 1-norm prediction error.

use super::{complete_steps, final_step, prefix_step, Dense, Surrogate, SurrogateParams};
use crate::controls::PiecewiseConstantControl;
use crate::error::{check_dim, Error, Result};

/// Expected output `y` at time `t` after the initial state.
#[derive(Clone, Copy, Debug)]
pub struct Target<'a> {
    pub t: f64,
    pub y: &'a [f64],
}

struct StepCache {
    z: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Dense {
    /// Accumulates parameter gradients and writes the input gradient.
    /// `d_out` is the gradient with respect to the layer output and is
    /// overwritten with the pre-activation gradient.
    fn backward(&self, p: &[f64], x: &[f64], a: &[f64], d_out: &mut [f64], grad: &mut [f64], d_in: &mut [f64]) {
        if let Some(act) = self.act {
            for (d, a) in d_out.iter_mut().zip(a) {
                *d *= act.slope(*a);
            }
        }
        d_in.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.n_out {
            let d = d_out[r];
            if d == 0.0 {
                continue;
            }
            grad[self.b + r] += d;
            let row = self.w + r * self.n_in;
            for c in 0..self.n_in {
                grad[row + c] += d * x[c];
                d_in[c] += d * p[row + c];
            }
        }
    }
}

impl Surrogate {
    fn mlp_forward(&self, p: &[f64], layers: &[Dense], input: Vec<f64>) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(layers.len() + 1);
        acts.push(input);
        for layer in layers {
            let mut out = vec![0.0; layer.n_out];
            layer.forward(p, acts.last().expect("non-empty"), &mut out);
            acts.push(out);
        }
        acts
    }

    /// Backpropagates `d` (gradient at the MLP output) and returns the
    /// gradient at its input.
    fn mlp_backward(&self, p: &[f64], layers: &[Dense], acts: &[Vec<f64>], mut d: Vec<f64>, grad: &mut [f64]) -> Vec<f64> {
        for (l, layer) in layers.iter().enumerate().rev() {
            let mut d_in = vec![0.0; layer.n_in];
            layer.backward(p, &acts[l], &acts[l + 1], &mut d, grad, &mut d_in);
            d = d_in;
        }
        d
    }

    fn step_cached(&self, p: &[f64], h: &[f64], c: &[f64], tau: f64, omega: &[f64]) -> StepCache {
        let hs = self.config.hidden_size;
        let mut s = StepCache {
            z: vec![0.0; self.layout.lstm.n_in],
            gates: vec![0.0; 4 * hs],
            c: vec![0.0; hs],
            h: vec![0.0; hs],
        };
        self.cell_input(tau, omega, &mut s.z);
        self.lstm_forward(p, &s.z, h, c, &mut s.gates, &mut s.c, &mut s.h);
        s
    }

    /// Gradient through one cell step. `dh`/`dc` are gradients at the step
    /// outputs; the gradients at its inputs are added to `dh_prev`/`dc_prev`.
    #[allow(clippy::too_many_arguments)]
    fn step_backward(
        &self,
        p: &[f64],
        s: &StepCache,
        h_prev: &[f64],
        c_prev: &[f64],
        dh: &[f64],
        dc: &[f64],
        grad: &mut [f64],
        dh_prev: &mut [f64],
        dc_prev: &mut [f64],
    ) {
        let l = &self.layout.lstm;
        let hs = l.hidden;
        let mut da = vec![0.0; 4 * hs];
        for j in 0..hs {
            let (i, f, g, o) = (s.gates[j], s.gates[hs + j], s.gates[2 * hs + j], s.gates[3 * hs + j]);
            let tc = s.c[j].tanh();
            let d_o = dh[j] * tc;
            let d_c = dc[j] + dh[j] * o * (1.0 - tc * tc);
            da[j] = d_c * g * i * (1.0 - i);
            da[hs + j] = d_c * c_prev[j] * f * (1.0 - f);
            da[2 * hs + j] = d_c * i * (1.0 - g * g);
            da[3 * hs + j] = d_o * o * (1.0 - o);
            dc_prev[j] += d_c * f;
        }
        for (r, &d) in da.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[l.b + r] += d;
            let ih = l.w_ih + r * l.n_in;
            for (c, z) in s.z.iter().enumerate() {
                grad[ih + c] += d * z;
            }
            let hh = l.w_hh + r * hs;
            for c in 0..hs {
                grad[hh + c] += d * h_prev[c];
                dh_prev[c] += d * p[hh + c];
            }
        }
    }

    /// Sum over targets of the 1-norm prediction error from initial state
    /// `x` under `u`.
    pub fn loss(
        &self,
        params: &SurrogateParams,
        x: &[f64],
        u: &PiecewiseConstantControl,
        targets: &[Target<'_>],
    ) -> Result<f64> {
        let times: Vec<f64> = targets.iter().map(|t| t.t).collect();
        let pred = self.predict(params, x, u, &times)?;
        let mut total = 0.0;
        for (target, y) in targets.iter().zip(&pred) {
            check_dim("target", self.config.output_dim, target.y.len())?;
            for (a, b) in y.iter().zip(target.y) {
                total += (a - b).abs();
            }
        }
        Ok(total)
    }

    /// Same value as [`Surrogate::loss`]; additionally adds `weight` times
    /// its gradient into `grad`. The subgradient of `|e|` at `e = 0` is 0.
    pub fn loss_and_grad(
        &self,
        params: &SurrogateParams,
        x: &[f64],
        u: &PiecewiseConstantControl,
        targets: &[Target<'_>],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_params(params)?;
        self.check_control(u)?;
        check_dim("state", self.config.state_dim, x.len())?;
        check_dim("gradient", self.layout.len, grad.len())?;
        if targets.iter().any(|t| !(t.t >= 0.0)) {
            return Err(Error::contract("target times must be nonnegative"));
        }
        for t in targets {
            check_dim("target", self.config.output_dim, t.y.len())?;
        }
        let p = &params.values;
        let hs = self.config.hidden_size;

        let mut xn = vec![0.0; x.len()];
        self.norm.state.forward_into(x, &mut xn);
        let enc = self.mlp_forward(p, &self.layout.encoder, xn);
        let h0 = enc.last().expect("encoder has layers").clone();
        let c0 = vec![0.0; hs];

        let n_max = targets.iter().map(|t| complete_steps(t.t, u)).max().unwrap_or(0);
        let mut prefix: Vec<StepCache> = Vec::with_capacity(n_max);
        for k in 0..n_max {
            let (h, c) = match k {
                0 => (&h0, &c0),
                _ => (&prefix[k - 1].h, &prefix[k - 1].c),
            };
            let st = prefix_step(k, u);
            let cache = self.step_cached(p, h, c, st.tau, u.value(st.input));
            prefix.push(cache);
        }
        let state_at = |k: usize| -> (&[f64], &[f64]) {
            if k == 0 {
                (&h0, &c0)
            } else {
                (&prefix[k - 1].h, &prefix[k - 1].c)
            }
        };

        let mut dh = vec![vec![0.0; hs]; n_max + 1];
        let mut dc = vec![vec![0.0; hs]; n_max + 1];
        let zeros = vec![0.0; hs];
        let mut total = 0.0;
        for target in targets {
            let n = complete_steps(target.t, u);
            let st = final_step(target.t, n, u);
            let (h, c) = state_at(n);
            let last = self.step_cached(p, h, c, st.tau, u.value(st.input));
            let dec = self.mlp_forward(p, &self.layout.decoder, last.h.clone());
            let out = dec.last().expect("decoder has layers");
            let mut d_out = vec![0.0; out.len()];
            for i in 0..out.len() {
                let e = self.norm.output.offset[i] + self.norm.output.scale[i] * out[i] - target.y[i];
                total += e.abs();
                d_out[i] = weight * sign(e) * self.norm.output.scale[i];
            }
            let d_h = self.mlp_backward(p, &self.layout.decoder, &dec, d_out, grad);
            let (dh_n, dc_n) = (&mut dh[n], &mut dc[n]);
            self.step_backward(p, &last, h, c, &d_h, &zeros, grad, dh_n, dc_n);
        }
        for k in (0..n_max).rev() {
            let (h, c) = state_at(k);
            let (before, after) = dh.split_at_mut(k + 1);
            let (dc_before, dc_after) = dc.split_at_mut(k + 1);
            self.step_backward(
                p,
                &prefix[k],
                h,
                c,
                &after[0],
                &dc_after[0],
                grad,
                &mut before[k],
                &mut dc_before[k],
            );
        }
        self.mlp_backward(p, &self.layout.encoder, &enc, std::mem::take(&mut dh[0]), grad);
        Ok(total)
    }
}
