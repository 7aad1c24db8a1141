//! Encoder / LSTM / decoder approximation of the flow map.
//!
//! The encoder maps the (normalised) initial state to the initial hidden
//! state, the cell state starts at zero, and the cell is stepped once per input
//! period with input `(tau, omega)`: whole periods use `tau = 1`, the last step
//! uses the fraction of a period that remains. The decoder reads the final
//! hidden state.

mod backprop;
mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controls::PiecewiseConstantControl;
use crate::dataset::Manifest;
use crate::error::{check_dim, Error, Result};
use crate::util::stream_rng;

pub use backprop::Target;
pub use checkpoint::{Checkpoint, Encoding};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation value `a`.
    #[inline]
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub hidden_size: usize,
    /// Hidden layer widths of the encoder; its output layer has `hidden_size` units.
    pub encoder_layers: Vec<usize>,
    /// Hidden layer widths of the decoder; its output layer is linear.
    pub decoder_layers: Vec<usize>,
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Input period (ms) the recurrence steps over.
    pub delta: f64,
    pub activation: Activation,
}

impl SurrogateConfig {
    /// Three hidden layers of width `2 * hidden_size` on both sides.
    pub fn new(hidden_size: usize, state_dim: usize, input_dim: usize, output_dim: usize, delta: f64) -> Self {
        Self {
            hidden_size,
            encoder_layers: vec![2 * hidden_size; 3],
            decoder_layers: vec![2 * hidden_size; 3],
            state_dim,
            input_dim,
            output_dim,
            delta,
            activation: Activation::Tanh,
        }
    }

    pub fn for_manifest(hidden_size: usize, m: &Manifest) -> Self {
        Self::new(hidden_size, m.state_dim, m.input_dim, m.output_dim, m.generation.delta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(Error::contract("hidden_size must be positive"));
        }
        if self.encoder_layers.iter().chain(&self.decoder_layers).any(|&w| w == 0) {
            return Err(Error::contract("layer widths must be positive"));
        }
        if self.state_dim == 0 || self.output_dim == 0 {
            return Err(Error::contract("state and output dimensions must be positive"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::contract("input period must be positive"));
        }
        Ok(())
    }
}

/// `normalised = (raw - offset) / scale`, coordinatewise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Maps each `[lo, hi]` onto `[-1, 1]`; degenerate ranges get unit scale.
    pub fn from_ranges(ranges: &[[f64; 2]]) -> Self {
        let (offset, scale) = ranges
            .iter()
            .map(|&[lo, hi]| {
                let half = 0.5 * (hi - lo);
                (0.5 * (lo + hi), if half > 0.0 { half } else { 1.0 })
            })
            .unzip();
        Self { offset, scale }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    #[inline]
    fn forward_into(&self, raw: &[f64], out: &mut [f64]) {
        for i in 0..raw.len() {
            out[i] = (raw[i] - self.offset[i]) / self.scale[i];
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalisation {
    pub state: Affine,
    pub input: Affine,
    pub output: Affine,
}

impl Normalisation {
    pub fn identity(cfg: &SurrogateConfig) -> Self {
        Self {
            state: Affine::identity(cfg.state_dim),
            input: Affine::identity(cfg.input_dim),
            output: Affine::identity(cfg.output_dim),
        }
    }

    /// Scales from the sampling ranges recorded in a dataset manifest.
    pub fn from_manifest(m: &Manifest) -> Self {
        let g = &m.generation;
        let state: Vec<[f64; 2]> = (0..m.state_dim)
            .map(|i| {
                if m.output_indices.contains(&i) {
                    g.initial.voltage
                } else {
                    g.initial.gate
                }
            })
            .collect();
        Self {
            state: Affine::from_ranges(&state),
            input: Affine::from_ranges(&vec![g.input.amplitude; m.input_dim]),
            output: Affine::from_ranges(&vec![g.initial.voltage; m.output_dim]),
        }
    }
}

/// Name, shape and position of one tensor in the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
    act: Option<Activation>,
}

impl Dense {
    /// `out = act(W x + b)`
    #[inline]
    fn forward(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        let w = &p[self.w..self.w + self.n_in * self.n_out];
        let b = &p[self.b..self.b + self.n_out];
        for (r, o) in out.iter_mut().enumerate().take(self.n_out) {
            let row = &w[r * self.n_in..(r + 1) * self.n_in];
            let mut s = b[r];
            for (a, v) in row.iter().zip(x) {
                s += a * v;
            }
            *o = match self.act {
                Some(a) => a.apply(s),
                None => s,
            };
        }
    }
}

#[derive(Clone, Debug)]
struct Lstm {
    w_ih: usize,
    w_hh: usize,
    b: usize,
    n_in: usize,
    hidden: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    tensors: Vec<TensorSpec>,
    encoder: Vec<Dense>,
    lstm: Lstm,
    decoder: Vec<Dense>,
    len: usize,
}

struct LayoutBuilder {
    tensors: Vec<TensorSpec>,
    offset: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let offset = self.offset;
        self.tensors.push(TensorSpec {
            name,
            rows,
            cols,
            offset,
        });
        self.offset += rows * cols;
        offset
    }

    fn mlp(&mut self, prefix: &str, widths: &[usize], act: Activation, last: Option<Activation>) -> Vec<Dense> {
        let n = widths.len() - 1;
        (0..n)
            .map(|l| {
                let (n_in, n_out) = (widths[l], widths[l + 1]);
                let w = self.push(format!("{prefix}.{l}.weight"), n_out, n_in);
                let b = self.push(format!("{prefix}.{l}.bias"), n_out, 1);
                Dense {
                    w,
                    b,
                    n_in,
                    n_out,
                    act: if l + 1 == n { last } else { Some(act) },
                }
            })
            .collect()
    }
}

impl Layout {
    fn new(cfg: &SurrogateConfig) -> Self {
        let h = cfg.hidden_size;
        let mut b = LayoutBuilder {
            tensors: Vec::new(),
            offset: 0,
        };
        let enc: Vec<usize> = std::iter::once(cfg.state_dim)
            .chain(cfg.encoder_layers.iter().copied())
            .chain([h])
            .collect();
        let encoder = b.mlp("encoder", &enc, cfg.activation, Some(Activation::Tanh));
        let n_in = 1 + cfg.input_dim;
        let lstm = Lstm {
            w_ih: b.push("lstm.weight_ih".into(), 4 * h, n_in),
            w_hh: b.push("lstm.weight_hh".into(), 4 * h, h),
            b: b.push("lstm.bias".into(), 4 * h, 1),
            n_in,
            hidden: h,
        };
        let dec: Vec<usize> = std::iter::once(h)
            .chain(cfg.decoder_layers.iter().copied())
            .chain([cfg.output_dim])
            .collect();
        let decoder = b.mlp("decoder", &dec, cfg.activation, None);
        Self {
            len: b.offset,
            tensors: b.tensors,
            encoder,
            lstm,
            decoder,
        }
    }
}

/// Flat parameter vector; see [`Surrogate::tensors`] for its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateParams {
    pub values: Vec<f64>,
}

/// One recurrent step: fraction of a period and the index of the input value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub tau: f64,
    pub input: usize,
}

/// `(k_t, tau sequence)` for an unshifted input: `k_t = floor(t / delta)` whole
/// steps followed by the fractional step.
pub fn steps_for(t: f64, delta: f64) -> (usize, Vec<f64>) {
    let k = (t / delta).floor() as usize;
    let mut tau = vec![1.0; k];
    tau.push(((t - k as f64 * delta) / delta).clamp(0.0, 1.0));
    (k, tau)
}

/// Number of complete steps before the final one when evaluating at `t`
/// under `u`.
pub fn complete_steps(t: f64, u: &PiecewiseConstantControl) -> usize {
    u.index_at(t)
}

/// Step `k < n` of the shared prefix when `u` may be shifted: the first step
/// only covers what remains of the current period.
#[inline]
fn prefix_step(k: usize, u: &PiecewiseConstantControl) -> Step {
    let tau = if k == 0 {
        (u.delta() - u.phase()) / u.delta()
    } else {
        1.0
    };
    Step { tau, input: k }
}

#[inline]
fn final_step(t: f64, n: usize, u: &PiecewiseConstantControl) -> Step {
    let elapsed = if n == 0 {
        t
    } else {
        t + u.phase() - n as f64 * u.delta()
    };
    let tau = (elapsed / u.delta()).clamp(0.0, 1.0);
    Step { tau, input: n }
}

/// Full step sequence for evaluation at time `t`: `index_at(t) + 1` steps.
pub fn schedule(t: f64, u: &PiecewiseConstantControl) -> Vec<Step> {
    let n = complete_steps(t, u);
    let mut s: Vec<Step> = (0..n).map(|k| prefix_step(k, u)).collect();
    s.push(final_step(t, n, u));
    s
}

/// LSTM hidden and cell state.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub y: Vec<f64>,
    /// Hidden state after each recurrent step.
    pub hidden: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Surrogate {
    config: SurrogateConfig,
    norm: Normalisation,
    layout: Layout,
}

impl Surrogate {
    pub fn new(config: SurrogateConfig, norm: Normalisation) -> Result<Self> {
        config.validate()?;
        check_dim("state normalisation", config.state_dim, norm.state.dim())?;
        check_dim("input normalisation", config.input_dim, norm.input.dim())?;
        check_dim("output normalisation", config.output_dim, norm.output.dim())?;
        let all = norm.state.scale.iter().chain(&norm.input.scale).chain(&norm.output.scale);
        if all.clone().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::contract("normalisation scales must be positive"));
        }
        let layout = Layout::new(&config);
        Ok(Self {
            config,
            norm,
            layout,
        })
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn normalisation(&self) -> &Normalisation {
        &self.norm
    }

    pub fn param_count(&self) -> usize {
        self.layout.len
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.layout.tensors
    }

    pub fn tensor<'a>(&self, params: &'a SurrogateParams, name: &str) -> Option<&'a [f64]> {
        let t = self.layout.tensors.iter().find(|t| t.name == name)?;
        Some(&params.values[t.range()])
    }

    /// Splits the flat vector into named tensors.
    pub fn unflatten(&self, params: &SurrogateParams) -> Result<Vec<(String, Vec<f64>)>> {
        self.check_params(params)?;
        Ok(self
            .layout
            .tensors
            .iter()
            .map(|t| (t.name.clone(), params.values[t.range()].to_vec()))
            .collect())
    }

    pub fn flatten(&self, tensors: &[(String, Vec<f64>)]) -> Result<SurrogateParams> {
        check_dim("tensor count", self.layout.tensors.len(), tensors.len())?;
        let mut values = Vec::with_capacity(self.layout.len);
        for (spec, (name, v)) in self.layout.tensors.iter().zip(tensors) {
            if &spec.name != name {
                return Err(Error::contract(format!("expected tensor {}, found {name}", spec.name)));
            }
            check_dim("tensor", spec.len(), v.len())?;
            values.extend_from_slice(v);
        }
        Ok(SurrogateParams { values })
    }

    /// Uniform `±1/sqrt(fan_in)` weights and biases; the forget-gate bias is
    /// shifted by one.
    pub fn init_params(&self, seed: u64) -> SurrogateParams {
        let mut rng = stream_rng(seed, 0);
        let mut values = vec![0.0; self.layout.len];
        let h = self.config.hidden_size;
        for t in &self.layout.tensors {
            let fan_in = if t.name.starts_with("lstm.") {
                h
            } else if t.name.ends_with(".bias") {
                // bias of a dense layer: fan-in of its weight
                self.layout
                    .tensors
                    .iter()
                    .find(|w| w.name == t.name.replace(".bias", ".weight"))
                    .map_or(1, |w| w.cols)
            } else {
                t.cols
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut values[t.range()] {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        let b = self.layout.lstm.b;
        for v in &mut values[b + h..b + 2 * h] {
            *v += 1.0;
        }
        SurrogateParams { values }
    }

    pub(crate) fn check_params(&self, params: &SurrogateParams) -> Result<()> {
        check_dim("parameter vector", self.layout.len, params.values.len())
    }

    fn check_control(&self, u: &PiecewiseConstantControl) -> Result<()> {
        check_dim("input", self.config.input_dim, u.dim())?;
        if u.delta() != self.config.delta {
            return Err(Error::contract(format!(
                "control period {} differs from the surrogate period {}",
                u.delta(),
                self.config.delta
            )));
        }
        Ok(())
    }

    /// Initial cell state from a raw initial condition.
    pub fn encode(&self, params: &SurrogateParams, x: &[f64]) -> Result<CellState> {
        self.check_params(params)?;
        check_dim("state", self.config.state_dim, x.len())?;
        let mut a = vec![0.0; x.len()];
        self.norm.state.forward_into(x, &mut a);
        for layer in &self.layout.encoder {
            let mut next = vec![0.0; layer.n_out];
            layer.forward(&params.values, &a, &mut next);
            a = next;
        }
        Ok(CellState {
            c: vec![0.0; self.config.hidden_size],
            h: a,
        })
    }

    /// One recurrent step with fraction `tau` and raw input `omega`.
    pub fn step(&self, params: &SurrogateParams, s: &CellState, tau: f64, omega: &[f64]) -> CellState {
        let mut z = vec![0.0; self.layout.lstm.n_in];
        self.cell_input(tau, omega, &mut z);
        let mut gates = vec![0.0; 4 * self.config.hidden_size];
        let mut out = CellState {
            h: vec![0.0; self.config.hidden_size],
            c: vec![0.0; self.config.hidden_size],
        };
        self.lstm_forward(&params.values, &z, &s.h, &s.c, &mut gates, &mut out.c, &mut out.h);
        out
    }

    /// Runs `steps` from `s`, returning the hidden state after each of them.
    pub fn run(
        &self,
        params: &SurrogateParams,
        s: &CellState,
        steps: &[Step],
        u: &PiecewiseConstantControl,
    ) -> Result<(CellState, Vec<Vec<f64>>)> {
        self.check_params(params)?;
        self.check_control(u)?;
        let mut s = s.clone();
        let mut trace = Vec::with_capacity(steps.len());
        for st in steps {
            s = self.step(params, &s, st.tau, u.value(st.input));
            trace.push(s.h.clone());
        }
        Ok((s, trace))
    }

    /// De-normalised decoder output for hidden state `h`.
    pub fn decode(&self, params: &SurrogateParams, h: &[f64]) -> Vec<f64> {
        let mut a = h.to_vec();
        for layer in &self.layout.decoder {
            let mut next = vec![0.0; layer.n_out];
            layer.forward(&params.values, &a, &mut next);
            a = next;
        }
        for (i, v) in a.iter_mut().enumerate() {
            *v = self.norm.output.offset[i] + self.norm.output.scale[i] * *v;
        }
        a
    }

    /// Prediction of the output at time `t` from initial state `x` under `u`.
    pub fn forward(
        &self,
        params: &SurrogateParams,
        x: &[f64],
        u: &PiecewiseConstantControl,
        t: f64,
    ) -> Result<Prediction> {
        if !(t >= 0.0) {
            return Err(Error::contract(format!("prediction time {t} < 0")));
        }
        let s0 = self.encode(params, x)?;
        let (s, hidden) = self.run(params, &s0, &schedule(t, u), u)?;
        Ok(Prediction {
            y: self.decode(params, &s.h),
            hidden,
        })
    }

    /// Predictions at several times, sharing the recurrent prefix.
    pub fn predict(
        &self,
        params: &SurrogateParams,
        x: &[f64],
        u: &PiecewiseConstantControl,
        times: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        if times.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::contract("prediction times must be nonnegative"));
        }
        self.check_control(u)?;
        let n_max = times.iter().map(|&t| complete_steps(t, u)).max().unwrap_or(0);
        let mut states = Vec::with_capacity(n_max + 1);
        states.push(self.encode(params, x)?);
        for k in 0..n_max {
            let st = prefix_step(k, u);
            let next = self.step(params, &states[k], st.tau, u.value(st.input));
            states.push(next);
        }
        Ok(times
            .iter()
            .map(|&t| {
                let n = complete_steps(t, u);
                let st = final_step(t, n, u);
                let s = self.step(params, &states[n], st.tau, u.value(st.input));
                self.decode(params, &s.h)
            })
            .collect())
    }

    #[inline]
    fn cell_input(&self, tau: f64, omega: &[f64], z: &mut [f64]) {
        z[0] = tau;
        self.norm.input.forward_into(omega, &mut z[1..]);
    }

    /// Gate order is input, forget, candidate, output; `gates` receives the
    /// activated values.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn lstm_forward(
        &self,
        p: &[f64],
        z: &[f64],
        h: &[f64],
        c: &[f64],
        gates: &mut [f64],
        c_out: &mut [f64],
        h_out: &mut [f64],
    ) {
        let l = &self.layout.lstm;
        let hs = l.hidden;
        let w_ih = &p[l.w_ih..l.w_ih + 4 * hs * l.n_in];
        let w_hh = &p[l.w_hh..l.w_hh + 4 * hs * hs];
        let b = &p[l.b..l.b + 4 * hs];
        for r in 0..4 * hs {
            let mut s = b[r];
            for (a, v) in w_ih[r * l.n_in..(r + 1) * l.n_in].iter().zip(z) {
                s += a * v;
            }
            for (a, v) in w_hh[r * hs..(r + 1) * hs].iter().zip(h) {
                s += a * v;
            }
            gates[r] = if (2 * hs..3 * hs).contains(&r) {
                s.tanh()
            } else {
                sigmoid(s)
            };
        }
        for j in 0..hs {
            let (i, f, g, o) = (gates[j], gates[hs + j], gates[2 * hs + j], gates[3 * hs + j]);
            c_out[j] = f * c[j] + i * g;
            h_out[j] = o * c_out[j].tanh();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Surrogate {
        let cfg = SurrogateConfig {
            encoder_layers: vec![5, 6],
            decoder_layers: vec![7],
            ..SurrogateConfig::new(4, 3, 2, 2, 10.0)
        };
        let norm = Normalisation::identity(&cfg);
        Surrogate::new(cfg, norm).unwrap()
    }

    fn control() -> PiecewiseConstantControl {
        PiecewiseConstantControl::new(10.0, (0..10).map(|k| vec![0.1 * k as f64, 0.5]).collect()).unwrap()
    }

    #[test]
    fn steps_for_examples() {
        assert_eq!(steps_for(25.0, 10.0), (2, vec![1.0, 1.0, 0.5]));
        assert_eq!(steps_for(0.0, 10.0), (0, vec![0.0]));
        assert_eq!(steps_for(20.0, 10.0), (2, vec![1.0, 1.0, 0.0]));
    }

    #[test]
    fn schedule_with_phase() {
        let u = control().shift(4.0).unwrap();
        let s = schedule(3.0, &u);
        assert_eq!(s.len(), 1);
        assert!((s[0].tau - 0.3).abs() < 1e-15);
        let s = schedule(17.0, &u);
        assert_eq!(s.len(), 3);
        assert!((s[0].tau - 0.6).abs() < 1e-15);
        assert_eq!(s[1], Step { tau: 1.0, input: 1 });
        assert!((s[2].tau - 0.1).abs() < 1e-12 && s[2].input == 2);
    }

    #[test]
    fn layout_is_contiguous_and_named() {
        let s = small();
        let mut offset = 0;
        for t in s.tensors() {
            assert_eq!(t.offset, offset);
            offset += t.len();
        }
        assert_eq!(offset, s.param_count());
        let names: Vec<&str> = s.tensors().iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names[0], "encoder.0.weight");
        assert!(names.contains(&"lstm.weight_hh"));
        assert_eq!(*names.last().unwrap(), "decoder.1.bias");
        let hh = s.tensors().iter().find(|t| t.name == "lstm.weight_hh").unwrap();
        assert_eq!((hh.rows, hh.cols), (16, 4));
    }

    #[test]
    fn flatten_round_trip() {
        let s = small();
        let p = s.init_params(3);
        assert_eq!(s.flatten(&s.unflatten(&p).unwrap()).unwrap(), p);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let s = small();
        assert_eq!(s.init_params(1), s.init_params(1));
        assert_ne!(s.init_params(1), s.init_params(2));
        let p = s.init_params(1);
        for t in s.tensors() {
            let bound = if t.name.starts_with("lstm.") {
                0.5
            } else {
                let w = s.tensors().iter().find(|w| w.name == t.name.replace(".bias", ".weight")).unwrap();
                1.0 / (w.cols as f64).sqrt()
            };
            for (k, v) in p.values[t.range()].iter().enumerate() {
                let shifted = t.name == "lstm.bias" && (4..8).contains(&k);
                let v = if shifted { v - 1.0 } else { *v };
                assert!(v.is_finite() && v.abs() <= bound, "{} {v}", t.name);
            }
        }
    }

    #[test]
    fn forward_runs_floor_plus_one_steps() {
        let s = small();
        let p = s.init_params(0);
        for (t, n) in [(0.0, 1), (9.99, 1), (10.0, 2), (35.0, 4)] {
            assert_eq!(s.forward(&p, &[1.0, 0.0, -1.0], &control(), t).unwrap().hidden.len(), n);
        }
    }

    #[test]
    fn zero_weights_give_constant_output() {
        let s = small();
        let mut p = s.init_params(0);
        p.values.iter_mut().for_each(|v| *v = 0.0);
        let bias = s.tensors().iter().find(|t| t.name == "decoder.1.bias").unwrap().range();
        p.values[bias.start] = 0.25;
        p.values[bias.start + 1] = -3.0;
        for t in [0.0, 13.0, 77.0] {
            let y = s.forward(&p, &[5.0, 1.0, 2.0], &control(), t).unwrap().y;
            assert_eq!(y, vec![0.25, -3.0]);
        }
    }

    #[test]
    fn predict_matches_forward() {
        let s = small();
        let p = s.init_params(4);
        let x = [0.3, -0.2, 0.9];
        let times = [0.0, 4.0, 10.0, 33.3, 61.0];
        let u = control().shift(2.5).unwrap();
        let many = s.predict(&p, &x, &u, &times).unwrap();
        for (t, y) in times.iter().zip(&many) {
            assert_eq!(&s.forward(&p, &x, &u, *t).unwrap().y, y);
        }
    }

    #[test]
    fn continuation_is_bitwise() {
        let s = small();
        let p = s.init_params(8);
        let u = control();
        let steps = schedule(47.0, &u);
        let s0 = s.encode(&p, &[0.1, 0.2, 0.3]).unwrap();
        let (_, whole) = s.run(&p, &s0, &steps, &u).unwrap();
        for split in 0..steps.len() {
            let (mid, mut a) = s.run(&p, &s0, &steps[..split], &u).unwrap();
            let (_, b) = s.run(&p, &mid, &steps[split..], &u).unwrap();
            a.extend(b);
            assert_eq!(a, whole);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let s = small();
        let p = s.init_params(0);
        assert!(s.forward(&p, &[1.0], &control(), 1.0).is_err());
        let u = PiecewiseConstantControl::new(5.0, vec![vec![0.0, 0.0]]).unwrap();
        assert!(s.forward(&p, &[1.0, 0.0, 0.0], &u, 1.0).is_err());
        assert!(s.forward(&p, &[1.0, 0.0, 0.0], &control(), -1.0).is_err());
        let short = SurrogateParams { values: vec![0.0; 3] };
        assert!(s.forward(&short, &[1.0, 0.0, 0.0], &control(), 1.0).is_err());
    }
}
