//! Conductance-based neuron models and electrical-synapse interconnections.
//!
//! Every model is a vector field `f(x, u)` over a state that stacks, neuron by
//! neuron, the membrane voltage followed by the active gates of each ionic
//! current (`m` before `n`). Gates whose exponent is zero carry no state.

mod catalogue;
mod rates;

pub use catalogue::{Catalogue, BUILTIN_CATALOGUE};
pub use rates::{GatingKinetics, RateFunction};

use crate::error::{check_dim, Error, Result};
use crate::integrator::VectorField;

/// Voltage range (mV) over which gate rates must be nonnegative.
pub const RATE_CHECK_RANGE: (f64, f64) = (-120.0, 80.0);

/// `I = g m^a n^b (V - V_rev)`, with `a = m_exponent` and `b = n_exponent`.
#[derive(Clone, Debug, PartialEq)]
pub struct IonicCurrent {
    pub name: String,
    /// Maximal conductance (mS).
    pub g: f64,
    /// Reversal potential (mV).
    pub v_rev: f64,
    pub m_exponent: u32,
    pub n_exponent: u32,
    pub m_gate: Option<GatingKinetics>,
    pub n_gate: Option<GatingKinetics>,
}

impl IonicCurrent {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Catalogue(format!("current {}: {msg}", self.name)));
        if !(self.g > 0.0) {
            return bad("conductance must be positive");
        }
        if (self.m_exponent == 0) != self.m_gate.is_none() {
            return bad("m gate kinetics present iff m exponent is nonzero");
        }
        if (self.n_exponent == 0) != self.n_gate.is_none() {
            return bad("n gate kinetics present iff n exponent is nonzero");
        }
        for kin in self.m_gate.iter().chain(self.n_gate.iter()) {
            for rate in [kin.alpha, kin.beta] {
                if let Err(msg) = rate.validate() {
                    return bad(&msg);
                }
                let (lo, hi) = RATE_CHECK_RANGE;
                for i in 0..=2000 {
                    let v = lo + (hi - lo) * i as f64 / 2000.0;
                    if !(rate.eval(v) >= 0.0) {
                        return bad(&format!("negative or non-finite rate at {v} mV"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronParams {
    /// Membrane capacitance (uF).
    pub capacitance: f64,
    /// Leak conductance (mS).
    pub g_leak: f64,
    /// Leak reversal potential (mV).
    pub v_leak: f64,
    pub currents: Vec<IonicCurrent>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StateVariable {
    Voltage,
    /// `m` gate of the current with this index.
    M(usize),
    /// `n` gate of the current with this index.
    N(usize),
}

/// Bijection between `(neuron, variable)` pairs and state indices.
#[derive(Clone, Debug, PartialEq)]
pub struct StateLayout {
    entries: Vec<(usize, StateVariable)>,
    voltage: Vec<usize>,
    // per neuron, per current: (m index, n index)
    gates: Vec<Vec<(Option<usize>, Option<usize>)>>,
}

impl StateLayout {
    fn new(neurons: &[NeuronParams]) -> Self {
        let mut entries = Vec::new();
        let mut voltage = Vec::new();
        let mut gates = Vec::new();
        for (i, neuron) in neurons.iter().enumerate() {
            voltage.push(entries.len());
            entries.push((i, StateVariable::Voltage));
            let mut per_current = Vec::new();
            for (k, current) in neuron.currents.iter().enumerate() {
                let m = (current.m_exponent > 0).then(|| {
                    entries.push((i, StateVariable::M(k)));
                    entries.len() - 1
                });
                let n = (current.n_exponent > 0).then(|| {
                    entries.push((i, StateVariable::N(k)));
                    entries.len() - 1
                });
                per_current.push((m, n));
            }
            gates.push(per_current);
        }
        Self {
            entries,
            voltage,
            gates,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, neuron: usize, var: StateVariable) -> Option<usize> {
        match var {
            StateVariable::Voltage => self.voltage.get(neuron).copied(),
            StateVariable::M(k) => self.gates.get(neuron)?.get(k)?.0,
            StateVariable::N(k) => self.gates.get(neuron)?.get(k)?.1,
        }
    }

    pub fn variable_at(&self, index: usize) -> Option<(usize, StateVariable)> {
        self.entries.get(index).copied()
    }

    /// State indices of the membrane voltages, in neuron order.
    pub fn voltage_indices(&self) -> &[usize] {
        &self.voltage
    }

    pub fn is_gate(&self, index: usize) -> bool {
        !matches!(self.entries[index].1, StateVariable::Voltage)
    }
}

/// A network of conductance-based neurons coupled by electrical synapses.
///
/// `coupling[i][j]` is the synaptic conductance (mS) through which neuron `i`
/// drives neuron `j`: neuron `j` receives `coupling[i][j] * (V_i - V_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductanceModel {
    name: String,
    neurons: Vec<NeuronParams>,
    coupling: Vec<Vec<f64>>,
    layout: StateLayout,
}

impl ConductanceModel {
    pub fn new(
        name: impl Into<String>,
        neurons: Vec<NeuronParams>,
        coupling: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = neurons.len();
        if n == 0 {
            return Err(Error::Catalogue("a model needs at least one neuron".into()));
        }
        for neuron in &neurons {
            if !(neuron.capacitance > 0.0) {
                return Err(Error::Catalogue("capacitance must be positive".into()));
            }
            if !(neuron.g_leak >= 0.0) {
                return Err(Error::Catalogue("leak conductance must be nonnegative".into()));
            }
            neuron.currents.iter().try_for_each(IonicCurrent::validate)?;
        }
        if coupling.len() != n || coupling.iter().any(|row| row.len() != n) {
            return Err(Error::Catalogue(format!("coupling must be {n}x{n}")));
        }
        for (i, row) in coupling.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(Error::Catalogue("coupling diagonal must be zero".into()));
            }
            if row.iter().any(|e| !(*e >= 0.0)) {
                return Err(Error::Catalogue("coupling entries must be nonnegative".into()));
            }
        }
        let layout = StateLayout::new(&neurons);
        Ok(Self {
            name: name.into(),
            neurons,
            coupling,
            layout,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn neurons(&self) -> &[NeuronParams] {
        &self.neurons
    }

    /// Coupling matrix in mS.
    pub fn coupling(&self) -> &[Vec<f64>] {
        &self.coupling
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn state_dim(&self) -> usize {
        self.layout.len()
    }

    pub fn input_dim(&self) -> usize {
        self.neurons.len()
    }

    pub fn output_dim(&self) -> usize {
        self.neurons.len()
    }

    /// Copy of this model with every synaptic conductance replaced.
    pub fn with_coupling(&self, coupling: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.name.clone(), self.neurons.clone(), coupling)
    }

    pub fn vector_field(&self, state: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.state_dim(), state.len())?;
        check_dim("input", self.input_dim(), input.len())?;
        let mut out = vec![0.0; state.len()];
        self.eval_into(state, input, &mut out);
        Ok(out)
    }

    /// Membrane voltages in neuron order.
    pub fn output_map(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.state_dim(), state.len())?;
        Ok(self.layout.voltage.iter().map(|&i| state[i]).collect())
    }

    fn eval_into(&self, state: &[f64], input: &[f64], out: &mut [f64]) {
        for (i, neuron) in self.neurons.iter().enumerate() {
            let vi = self.layout.voltage[i];
            let v = state[vi];
            let mut ionic = 0.0;
            for (current, &(m_idx, n_idx)) in neuron.currents.iter().zip(&self.layout.gates[i]) {
                let mut g = current.g;
                if let (Some(mi), Some(kin)) = (m_idx, current.m_gate.as_ref()) {
                    let m = state[mi];
                    g *= m.powi(current.m_exponent as i32);
                    out[mi] = kin.derivative(v, m);
                }
                if let (Some(ni), Some(kin)) = (n_idx, current.n_gate.as_ref()) {
                    let n = state[ni];
                    g *= n.powi(current.n_exponent as i32);
                    out[ni] = kin.derivative(v, n);
                }
                ionic += g * (v - current.v_rev);
            }
            let mut synaptic = 0.0;
            for (s, row) in self.coupling.iter().enumerate() {
                if row[i] != 0.0 {
                    synaptic += row[i] * (state[self.layout.voltage[s]] - v);
                }
            }
            out[vi] = (input[i] - neuron.g_leak * (v - neuron.v_leak) - ionic + synaptic)
                / neuron.capacitance;
        }
    }

    /// Full state with every gate at its steady-state value for the given
    /// voltages.
    pub fn steady_gates(&self, voltages: &[f64]) -> Result<Vec<f64>> {
        check_dim("voltages", self.neurons.len(), voltages.len())?;
        let mut state = vec![0.0; self.state_dim()];
        for (i, neuron) in self.neurons.iter().enumerate() {
            let v = voltages[i];
            state[self.layout.voltage[i]] = v;
            for (current, &(m_idx, n_idx)) in neuron.currents.iter().zip(&self.layout.gates[i]) {
                if let (Some(mi), Some(kin)) = (m_idx, current.m_gate.as_ref()) {
                    state[mi] = kin.steady_state(v);
                }
                if let (Some(ni), Some(kin)) = (n_idx, current.n_gate.as_ref()) {
                    state[ni] = kin.steady_state(v);
                }
            }
        }
        Ok(state)
    }

    /// Equilibrium under a constant input.
    ///
    /// Gates are eliminated through their steady states, leaving one current
    /// balance equation per neuron which is solved by damped Newton iteration
    /// starting from the leak reversal potentials.
    pub fn resting_state(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("input", self.input_dim(), input.len())?;
        let n = self.neurons.len();
        let residual = |v: &[f64]| -> Vec<f64> {
            let x = self.steady_gates(v).expect("dimension checked");
            let mut f = vec![0.0; x.len()];
            self.eval_into(&x, input, &mut f);
            self.layout.voltage.iter().map(|&i| f[i]).collect()
        };
        let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, e| m.max(e.abs()));

        let mut v: Vec<f64> = self.neurons.iter().map(|p| p.v_leak).collect();
        let mut r = residual(&v);
        for _ in 0..200 {
            if norm(&r) < 1e-13 {
                return self.steady_gates(&v);
            }
            let mut jac = vec![0.0; n * n];
            for j in 0..n {
                let h = 1e-6 * v[j].abs().max(1.0);
                let mut vp = v.clone();
                vp[j] += h;
                let rp = residual(&vp);
                for i in 0..n {
                    jac[i * n + j] = (rp[i] - r[i]) / h;
                }
            }
            let step = crate::integrator::linalg::solve_dense(&mut jac, n, &r)
                .ok_or_else(|| Error::contract("singular Jacobian while locating rest"))?;
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = v.iter().zip(&step).map(|(a, d)| a - lambda * d).collect();
                let rt = residual(&trial);
                if norm(&rt) < norm(&r) || lambda < 1e-6 {
                    v = trial;
                    r = rt;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if norm(&r) < 1e-9 {
            return self.steady_gates(&v);
        }
        Err(Error::contract("resting-state Newton iteration did not converge"))
    }
}

impl VectorField for ConductanceModel {
    fn state_dim(&self) -> usize {
        self.layout.len()
    }

    fn input_dim(&self) -> usize {
        self.neurons.len()
    }

    fn eval(&self, state: &[f64], input: &[f64], out: &mut [f64]) {
        self.eval_into(state, input, out)
    }
}

/// Single Hodgkin–Huxley fast-spiking neuron: sodium `g m^3 h (V - V_Na)` and
/// delayed-rectifier potassium `g n^4 (V - V_K)`, four states.
pub fn build_fast_spiking() -> ConductanceModel {
    Catalogue::builtin()
        .build("fs")
        .expect("built-in fast-spiking model is valid")
}

/// Two regular-spiking neurons with an adapting slow potassium current, neuron
/// 1 driving neuron 2 through a 0.1 S electrical synapse; ten states.
pub fn build_feedforward_pair() -> ConductanceModel {
    Catalogue::builtin()
        .build("ffpair")
        .expect("built-in feedforward pair is valid")
}

/// Builds a catalogue model by name (`fs` or `ffpair`).
pub fn build_named(name: &str) -> Result<ConductanceModel> {
    Catalogue::builtin().build(name)
}
