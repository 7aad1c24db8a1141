//! Reference implementations used as test oracles. None of them call into the
//! library code they are compared against.
#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use spikeflow::surrogate::{Surrogate, SurrogateParams};
use spikeflow::{ConductanceModel, PiecewiseConstantControl};

// ---------------------------------------------------------------------------
// Fast-spiking neuron written out from the textbook squid-axon equations
// (per cm^2; the library model is the same cell on a 0.05 cm^2 patch).

pub const PATCH_AREA: f64 = 0.05;

pub fn textbook_fs_rhs(x: &[f64], u_ua: f64) -> [f64; 4] {
    let (v, m, h, n) = (x[0], x[1], x[2], x[3]);
    let am = 0.1 * (v + 40.0) / (1.0 - (-(v + 40.0) / 10.0).exp());
    let bm = 4.0 * (-(v + 65.0) / 18.0).exp();
    let ah = 0.07 * (-(v + 65.0) / 20.0).exp();
    let bh = 1.0 / (1.0 + (-(v + 35.0) / 10.0).exp());
    let an = 0.01 * (v + 55.0) / (1.0 - (-(v + 55.0) / 10.0).exp());
    let bn = 0.125 * (-(v + 65.0) / 80.0).exp();
    let i_ion = 120.0 * m.powi(3) * h * (v - 50.0) + 36.0 * n.powi(4) * (v + 77.0) + 0.3 * (v + 54.387);
    [
        u_ua / PATCH_AREA - i_ion,
        am * (1.0 - m) - bm * m,
        ah * (1.0 - h) - bh * h,
        an * (1.0 - n) - bn * n,
    ]
}

// ---------------------------------------------------------------------------
// Fixed-step classical Runge-Kutta.

pub struct Rk4Path {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Integrates with step `dt`; `dt` must divide the input period so that no
/// step crosses a switch of `u`.
pub fn rk4(model: &ConductanceModel, x0: &[f64], u: &PiecewiseConstantControl, t_final: f64, dt: f64) -> Rk4Path {
    let n = (t_final / dt).round() as usize;
    let per = (u.delta() / dt).round() as usize;
    assert!((per as f64 * dt - u.delta()).abs() < 1e-9 * u.delta(), "dt must divide the period");
    let d = x0.len();
    let f = |x: &[f64], w: &[f64]| model.vector_field(x, w).unwrap();
    let mut x = x0.to_vec();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(0.0);
    states.push(x.clone());
    let mut tmp = vec![0.0; d];
    for k in 0..n {
        let w = u.value(k / per);
        let k1 = f(&x, w);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        let k2 = f(&tmp, w);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        let k3 = f(&tmp, w);
        for i in 0..d {
            tmp[i] = x[i] + dt * k3[i];
        }
        let k4 = f(&tmp, w);
        for i in 0..d {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        times.push((k + 1) as f64 * dt);
        states.push(x.clone());
    }
    Rk4Path { times, states }
}

// ---------------------------------------------------------------------------
// Newton's method on the full state with a finite-difference Jacobian.

pub fn newton_equilibrium(model: &ConductanceModel, guess: &[f64], input: &[f64]) -> Vec<f64> {
    let d = guess.len();
    let mut x = guess.to_vec();
    for _ in 0..100 {
        let f = model.vector_field(&x, input).unwrap();
        let norm = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if norm < 1e-13 {
            break;
        }
        let mut jac = vec![vec![0.0; d]; d];
        for j in 0..d {
            let h = 1e-7 * x[j].abs().max(1e-3);
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let fp = model.vector_field(&xp, input).unwrap();
            let fm = model.vector_field(&xm, input).unwrap();
            for i in 0..d {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let dx = solve(jac, f.iter().map(|v| -v).collect());
        for i in 0..d {
            x[i] += dx[i];
        }
    }
    x
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.

pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Double-double arithmetic: an unevaluated sum hi + lo carrying about 106
// bits. Enough for central differences with tiny steps to be exact to well
// below the precision of an f64 gradient.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: DD = DD {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

impl DD {
    pub fn new(x: f64) -> Self {
        DD { hi: x, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        DD { hi, lo }
    }

    fn scale_pow2(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        DD {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }
}

impl Add for DD {
    type Output = DD;
    fn add(self, y: DD) -> DD {
        let (s, e) = two_sum(self.hi, y.hi);
        let (t, f) = two_sum(self.lo, y.lo);
        let (s, e) = quick_two_sum(s, e + t);
        DD::norm(s, e + f)
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DD {
    type Output = DD;
    fn sub(self, y: DD) -> DD {
        self + (-y)
    }
}

impl Mul for DD {
    type Output = DD;
    fn mul(self, y: DD) -> DD {
        let (p, e) = two_prod(self.hi, y.hi);
        DD::norm(p, e + (self.hi * y.lo + self.lo * y.hi))
    }
}

impl Div for DD {
    type Output = DD;
    fn div(self, y: DD) -> DD {
        let q1 = self.hi / y.hi;
        let r = self - y * DD::new(q1);
        let q2 = r.hi / y.hi;
        let r = r - y * DD::new(q2);
        let q3 = r.hi / y.hi;
        DD::norm(q1, q2) + DD::new(q3)
    }
}

/// Scalar operations the oracle forward pass needs.
pub trait Real: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self> {
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;

    fn abs(self) -> Self {
        if self.to_f64() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn sigmoid(self) -> Self {
        Self::of(1.0) / (Self::of(1.0) + (-self).exp())
    }

    fn tanh(self) -> Self {
        let a = self.abs();
        let e = (Self::of(-2.0) * a).exp();
        let t = (Self::of(1.0) - e) / (Self::of(1.0) + e);
        if self.to_f64() < 0.0 {
            -t
        } else {
            t
        }
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

impl Real for DD {
    fn of(x: f64) -> Self {
        DD::new(x)
    }
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
    fn exp(self) -> Self {
        if self.hi > 700.0 {
            return DD::new(f64::INFINITY);
        }
        if self.hi < -700.0 {
            return DD::new(0.0);
        }
        // x = k ln2 + r, then exp(r) = exp(r / 2^10)^(2^10)
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * DD::new(k)).scale_pow2(-10);
        let mut term = DD::new(1.0);
        let mut sum = DD::new(1.0);
        for i in 1..=16 {
            term = term * r / DD::new(i as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.scale_pow2(k as i32)
    }
}

// ---------------------------------------------------------------------------
// Surrogate forward pass written directly from the architecture description:
// tanh MLP encoder to (h0, c0 = 0), LSTM over (tau, normalised input) with
// gates in order input, forget, candidate, output, tanh MLP decoder with a
// linear last layer, then de-normalisation.

fn tensor<'a, N>(s: &Surrogate, p: &'a [N], name: &str) -> (&'a [N], usize, usize) {
    let t = s
        .tensors()
        .iter()
        .find(|t| t.name == name)
        .unwrap_or_else(|| panic!("no tensor {name}"));
    (&p[t.offset..t.offset + t.rows * t.cols], t.rows, t.cols)
}

fn affine<N: Real>(w: (&[N], usize, usize), b: &[N], x: &[N]) -> Vec<N> {
    let (w, rows, cols) = w;
    assert_eq!(cols, x.len());
    (0..rows)
        .map(|r| {
            let mut acc = b[r];
            for c in 0..cols {
                acc = acc + w[r * cols + c] * x[c];
            }
            acc
        })
        .collect()
}

fn mlp<N: Real>(s: &Surrogate, p: &[N], prefix: &str, x: Vec<N>, tanh_last: bool) -> Vec<N> {
    let n = s.tensors().iter().filter(|t| t.name.starts_with(prefix) && t.name.ends_with(".weight")).count();
    let mut a = x;
    for l in 0..n {
        let w = tensor(s, p, &format!("{prefix}.{l}.weight"));
        let (b, _, _) = tensor(s, p, &format!("{prefix}.{l}.bias"));
        a = affine(w, b, &a);
        if l + 1 < n || tanh_last {
            a = a.into_iter().map(Real::tanh).collect();
        }
    }
    a
}

/// `(tau, input index)` per recurrent step for evaluation at `t`: one step
/// per input interval overlapping `(0, t]`, plus a (possibly empty) step in
/// the interval containing `t`.
pub fn oracle_steps(t: f64, u: &PiecewiseConstantControl) -> Vec<(f64, usize)> {
    let (d, ph) = (u.delta(), u.phase());
    let mut steps = Vec::new();
    let mut start = 0.0;
    let mut k = 0;
    loop {
        let end = (k + 1) as f64 * d - ph;
        if end > t {
            steps.push(((t - start) / d, k));
            return steps;
        }
        steps.push(((end - start) / d, k));
        start = end;
        k += 1;
    }
}

pub fn oracle_predict<N: Real>(s: &Surrogate, p: &[N], x: &[f64], u: &PiecewiseConstantControl, t: f64) -> Vec<N> {
    let norm = s.normalisation();
    let hs = s.config().hidden_size;
    let xn: Vec<N> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| (N::of(v) - N::of(norm.state.offset[i])) / N::of(norm.state.scale[i]))
        .collect();
    let mut h = mlp(s, p, "encoder", xn, true);
    let mut c = vec![N::of(0.0); hs];
    let w_ih = tensor(s, p, "lstm.weight_ih");
    let w_hh = tensor(s, p, "lstm.weight_hh");
    let (bias, _, _) = tensor(s, p, "lstm.bias");
    for (tau, k) in oracle_steps(t, u) {
        let mut z = vec![N::of(tau)];
        z.extend(
            u.value(k)
                .iter()
                .enumerate()
                .map(|(i, &w)| (N::of(w) - N::of(norm.input.offset[i])) / N::of(norm.input.scale[i])),
        );
        let a = affine(w_ih, bias, &z);
        let zero = vec![N::of(0.0); 4 * hs];
        let b = affine(w_hh, &zero, &h);
        let pre: Vec<N> = a.iter().zip(&b).map(|(x, y)| *x + *y).collect();
        for j in 0..hs {
            let i = pre[j].sigmoid();
            let f = pre[hs + j].sigmoid();
            let g = pre[2 * hs + j].tanh();
            let o = pre[3 * hs + j].sigmoid();
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
    }
    mlp(s, p, "decoder", h, false)
        .into_iter()
        .enumerate()
        .map(|(i, y)| N::of(norm.output.offset[i]) + N::of(norm.output.scale[i]) * y)
        .collect()
}

pub fn oracle_loss<N: Real>(
    s: &Surrogate,
    p: &[N],
    x: &[f64],
    u: &PiecewiseConstantControl,
    targets: &[(f64, Vec<f64>)],
) -> N {
    let mut total = N::of(0.0);
    for (t, y) in targets {
        for (a, b) in oracle_predict(s, p, x, u, *t).into_iter().zip(y) {
            total = total + (a - N::of(*b)).abs();
        }
    }
    total
}

/// Central-difference gradient of the loss, evaluated in double-double with
/// step `h`.
pub fn fd_gradient(
    s: &Surrogate,
    params: &SurrogateParams,
    x: &[f64],
    u: &PiecewiseConstantControl,
    targets: &[(f64, Vec<f64>)],
    h: f64,
) -> Vec<f64> {
    let base: Vec<DD> = params.values.iter().map(|&v| DD::new(v)).collect();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + DD::new(h);
            let up = oracle_loss(s, &p, x, u, targets);
            p[i] = base[i] - DD::new(h);
            let down = oracle_loss(s, &p, x, u, targets);
            ((up - down) / DD::new(2.0 * h)).to_f64()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random datasets for serialisation tests: arbitrary finite bit patterns,
// including subnormals and signed zeros.

pub fn any_finite<R: rand::Rng>(rng: &mut R) -> f64 {
    loop {
        let v = match rng.gen_range(0..4) {
            0 => f64::from_bits(rng.gen()),
            1 => rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-320..300)),
            2 => [0.0, -0.0, f64::MIN_POSITIVE, f64::MAX, -f64::MAX, 5e-324][rng.gen_range(0..6)],
            _ => rng.gen_range(-100.0..100.0),
        };
        if v.is_finite() {
            return v;
        }
    }
}

pub fn random_dataset(n: usize, seed: u64) -> spikeflow::Dataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let model = spikeflow::build_fast_spiking();
    let gen = spikeflow::GenerationConfig {
        n_traj: 1,
        samples_per_traj: 3,
        horizon: 50.0,
        ..spikeflow::GenerationConfig::fast_spiking(seed)
    };
    let mut ds = spikeflow::dataset::generate(&model, &gen, &spikeflow::IntegratorConfig::default()).unwrap();
    ds.records = (0..n)
        .map(|id| {
            let k = rng.gen_range(1..12);
            let mut times: Vec<f64> = (1..k).map(|_| rng.gen_range(0.0..=50.0)).collect();
            times.push(0.0);
            times.sort_by(f64::total_cmp);
            times.dedup();
            let states: Vec<Vec<f64>> = times.iter().map(|_| (0..4).map(|_| any_finite(&mut rng)).collect()).collect();
            let values = (0..5).map(|_| vec![any_finite(&mut rng)]).collect();
            // the initial condition is the t = 0 row
            spikeflow::TrajectoryRecord {
                id,
                x0: states[0].clone(),
                control: PiecewiseConstantControl::new(10.0, values).unwrap(),
                times,
                states,
            }
        })
        .collect();
    ds
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Field-by-field bitwise equality of two record lists.
pub fn records_bitwise_equal(a: &[spikeflow::TrajectoryRecord], b: &[spikeflow::TrajectoryRecord]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(r, s)| {
            r.id == s.id
                && bits(&r.x0) == bits(&s.x0)
                && bits(&r.times) == bits(&s.times)
                && r.states.iter().map(|x| bits(x)).eq(s.states.iter().map(|x| bits(x)))
                && r.control.values().iter().map(|x| bits(x)).eq(s.control.values().iter().map(|x| bits(x)))
                && r.control.delta().to_bits() == s.control.delta().to_bits()
        })
}
