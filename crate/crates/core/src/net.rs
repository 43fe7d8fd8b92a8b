//! Dense Q-network with an optional value/advantage split.
//!
//! Two ReLU hidden layers feed an advantage head and, in dueling mode, a
//! scalar value head. Dueling outputs are `Q = V + A - mean(A)`; plain mode
//! outputs `Q = A`. Gradients are computed by hand for the squared TD error
//! of the taken action only.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("input has {found} features, network expects {expected}")]
    Shape { expected: usize, found: usize },
    #[error("action {action} out of range for {count} actions")]
    Action { action: usize, count: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss is not finite ({loss}); max |target| {max_target}, max |q| {max_q}")]
    NonFinite {
        loss: f64,
        max_target: f64,
        max_q: f64,
    },
    #[error("checkpoint parse error on line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    #[default]
    Dueling,
    Plain,
}

impl Head {
    fn name(self) -> &'static str {
        match self {
            Head::Dueling => "dueling",
            Head::Plain => "plain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub inputs: usize,
    pub hidden: [usize; 2],
    pub actions: usize,
    pub head: Head,
}

impl NetShape {
    pub fn new(inputs: usize, actions: usize, head: Head) -> Self {
        Self {
            inputs,
            hidden: [256, 256],
            actions,
            head,
        }
    }
}

/// Fully connected layer computing `x W + b` for row-vector inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.random_range(-bound..bound);
        Self {
            weight: Array2::from_shape_simple_fn((inputs, outputs), &mut draw),
            bias: Array1::from_shape_simple_fn(outputs, &mut draw),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub head: Head,
    pub hidden1: Dense,
    pub hidden2: Dense,
    /// Width 1 in dueling mode, width 0 in plain mode.
    pub value: Dense,
    pub advantage: Dense,
}

/// Outputs for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub q: Vec<f64>,
    pub value: f64,
    pub advantages: Vec<f64>,
}

/// One training example: state, taken action and regression target.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub target: f64,
}

struct Activations {
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    value: Array2<f64>,
    advantage: Array2<f64>,
    q: Array2<f64>,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

impl NetParams {
    pub fn init<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Self {
        let [h1, h2] = shape.hidden;
        let value_width = match shape.head {
            Head::Dueling => 1,
            Head::Plain => 0,
        };
        Self {
            head: shape.head,
            hidden1: Dense::uniform(shape.inputs, h1, rng),
            hidden2: Dense::uniform(h1, h2, rng),
            value: Dense::uniform(h2, value_width, rng),
            advantage: Dense::uniform(h2, shape.actions, rng),
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.inputs(), d.outputs());
        Self {
            head: self.head,
            hidden1: z(&self.hidden1),
            hidden2: z(&self.hidden2),
            value: z(&self.value),
            advantage: z(&self.advantage),
        }
    }

    pub fn shape(&self) -> NetShape {
        NetShape {
            inputs: self.hidden1.inputs(),
            hidden: [self.hidden1.outputs(), self.hidden2.outputs()],
            actions: self.advantage.outputs(),
            head: self.head,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.advantage.outputs()
    }

    fn layers(&self) -> [(&'static str, &Dense); 4] {
        [
            ("hidden1", &self.hidden1),
            ("hidden2", &self.hidden2),
            ("value", &self.value),
            ("advantage", &self.advantage),
        ]
    }

    fn layers_mut(&mut self) -> [&mut Dense; 4] {
        [
            &mut self.hidden1,
            &mut self.hidden2,
            &mut self.value,
            &mut self.advantage,
        ]
    }

    /// Every parameter tensor as a flat mutable slice, in checkpoint order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(8);
        for d in self.layers_mut() {
            out.push(d.weight.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(8);
        for (_, d) in self.layers() {
            out.push(d.weight.as_slice().expect("standard layout"));
            out.push(d.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, found: usize) -> Result<(), NetError> {
        let expected = self.hidden1.inputs();
        if found != expected {
            return Err(NetError::Shape { expected, found });
        }
        Ok(())
    }

    fn activations(&self, x: &Array2<f64>) -> Activations {
        let z1 = self.hidden1.apply(x);
        let h1 = relu(&z1);
        let z2 = self.hidden2.apply(&h1);
        let h2 = relu(&z2);
        let value = self.value.apply(&h2);
        let advantage = self.advantage.apply(&h2);
        let q = match self.head {
            Head::Dueling => {
                let mean = advantage.mean_axis(Axis(1)).expect("at least one action");
                let mut q = &advantage - &mean.insert_axis(Axis(1));
                q += &value;
                q
            }
            Head::Plain => advantage.clone(),
        };
        Activations {
            z1,
            h1,
            z2,
            h2,
            value,
            advantage,
            q,
        }
    }

    pub fn forward(&self, state: &[f64]) -> Result<Forward, NetError> {
        self.check_input(state.len())?;
        let x = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("row vector");
        let act = self.activations(&x);
        Ok(Forward {
            q: act.q.row(0).to_vec(),
            value: if self.head == Head::Dueling {
                act.value[[0, 0]]
            } else {
                0.0
            },
            advantages: act.advantage.row(0).to_vec(),
        })
    }

    /// Q-values for a batch of row-stacked states.
    pub fn q_batch(&self, states: &Array2<f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(states.ncols())?;
        Ok(self.activations(states).q)
    }

    /// Mean squared TD error over the batch and its gradient.
    pub fn loss_and_gradient(&self, batch: &[Example<'_>]) -> Result<(f64, NetParams), NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let n = batch.len();
        let d = self.hidden1.inputs();
        let actions = self.num_actions();
        let mut x = Array2::zeros((n, d));
        for (i, ex) in batch.iter().enumerate() {
            self.check_input(ex.state.len())?;
            if ex.action >= actions {
                return Err(NetError::Action {
                    action: ex.action,
                    count: actions,
                });
            }
            x.row_mut(i).assign(&ndarray::ArrayView1::from(ex.state));
        }
        let act = self.activations(&x);

        let mut loss = 0.0;
        let mut dq = Array1::zeros(n);
        for (i, ex) in batch.iter().enumerate() {
            let err = ex.target - act.q[[i, ex.action]];
            loss += err * err;
            dq[i] = -2.0 * err / n as f64;
        }
        loss /= n as f64;
        if !loss.is_finite() {
            let max_target = batch.iter().map(|e| e.target.abs()).fold(0.0, f64::max);
            let max_q = act.q.iter().map(|v| v.abs()).fold(0.0, f64::max);
            return Err(NetError::NonFinite {
                loss,
                max_target,
                max_q,
            });
        }

        let mut d_adv = Array2::zeros((n, actions));
        let mut d_val = Array2::zeros((n, self.value.outputs()));
        for (i, ex) in batch.iter().enumerate() {
            match self.head {
                Head::Dueling => {
                    let share = dq[i] / actions as f64;
                    d_adv.row_mut(i).fill(-share);
                    d_adv[[i, ex.action]] += dq[i];
                    d_val[[i, 0]] = dq[i];
                }
                Head::Plain => d_adv[[i, ex.action]] = dq[i],
            }
        }

        let mut g = self.zeros_like();
        g.advantage.weight = act.h2.t().dot(&d_adv);
        g.advantage.bias = d_adv.sum_axis(Axis(0));
        g.value.weight = act.h2.t().dot(&d_val);
        g.value.bias = d_val.sum_axis(Axis(0));

        let mut dh2 = d_adv.dot(&self.advantage.weight.t());
        if self.head == Head::Dueling {
            dh2 += &d_val.dot(&self.value.weight.t());
        }
        let dz2 = dh2 * act.z2.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
        g.hidden2.weight = act.h1.t().dot(&dz2);
        g.hidden2.bias = dz2.sum_axis(Axis(0));

        let dh1 = dz2.dot(&self.hidden2.weight.t());
        let dz1 = dh1 * act.z1.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
        g.hidden1.weight = x.t().dot(&dz1);
        g.hidden1.bias = dz1.sum_axis(Axis(0));

        Ok((loss, g))
    }

    /// Writes a text checkpoint: a header, then one line of shape and one
    /// line of row-major values per tensor.
    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        writeln!(s, "aoi-qnet 1").unwrap();
        writeln!(s, "head {}", self.head.name()).unwrap();
        for (name, d) in self.layers() {
            for (suffix, rows, cols, values) in [
                ("weight", d.inputs(), d.outputs(), d.weight.as_slice().unwrap()),
                ("bias", 1, d.outputs(), d.bias.as_slice().unwrap()),
            ] {
                writeln!(s, "{name}.{suffix} {rows} {cols}").unwrap();
                let line: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                writeln!(s, "{}", line.join(" ")).unwrap();
            }
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, NetError> {
        let err = |line: usize, reason: &str| NetError::Checkpoint {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, "aoi-qnet 1")) => {}
            _ => return Err(err(1, "missing or unsupported header")),
        }
        let head = match lines.next() {
            Some((_, "head dueling")) => Head::Dueling,
            Some((_, "head plain")) => Head::Plain,
            Some((n, _)) => return Err(err(n, "expected head line")),
            None => return Err(err(2, "truncated")),
        };
        let mut tensors = Vec::with_capacity(8);
        for _ in 0..8 {
            let (n, meta) = lines.next().ok_or_else(|| err(0, "truncated"))?;
            let parts: Vec<&str> = meta.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(err(n, "expected '<name> <rows> <cols>'"));
            }
            let rows = usize::from_str(parts[1]).map_err(|_| err(n, "bad row count"))?;
            let cols = usize::from_str(parts[2]).map_err(|_| err(n, "bad column count"))?;
            let (n, body) = lines.next().ok_or_else(|| err(n, "missing values"))?;
            let values = body
                .split_whitespace()
                .map(f64::from_str)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| err(n, "bad number"))?;
            if values.len() != rows * cols {
                return Err(err(n, "value count does not match shape"));
            }
            tensors.push((rows, cols, values));
        }
        let mut it = tensors.into_iter();
        let mut dense = || -> Result<Dense, NetError> {
            let (r, c, w) = it.next().expect("eight tensors");
            let (_, bc, b) = it.next().expect("eight tensors");
            if bc != c {
                return Err(err(0, "bias width does not match weight"));
            }
            Ok(Dense {
                weight: Array2::from_shape_vec((r, c), w).map_err(|e| err(0, &e.to_string()))?,
                bias: Array1::from_vec(b),
            })
        };
        let p = Self {
            head,
            hidden1: dense()?,
            hidden2: dense()?,
            value: dense()?,
            advantage: dense()?,
        };
        let chain = p.hidden1.outputs() == p.hidden2.inputs()
            && p.hidden2.outputs() == p.value.inputs()
            && p.hidden2.outputs() == p.advantage.inputs();
        if !chain {
            return Err(err(0, "layer shapes do not chain"));
        }
        Ok(p)
    }
}

/// Frozen copy of the online network used for bootstrapped targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetParams(NetParams);

impl TargetParams {
    pub fn new(p: &NetParams) -> Self {
        Self(p.clone())
    }

    pub fn sync(&mut self, p: &NetParams) {
        self.0.clone_from(p);
    }

    pub fn params(&self) -> &NetParams {
        &self.0
    }
}

/// `r` for terminal transitions, `r + γ max_a Q_target(s', a)` otherwise.
pub fn td_target(
    reward: f64,
    next_state: &[f64],
    target: &TargetParams,
    gamma: f64,
    done: bool,
) -> Result<f64, NetError> {
    if done {
        return Ok(reward);
    }
    let q = target.params().forward(next_state)?.q;
    Ok(reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// `θ ← θ - lr ∇L`.
pub fn apply_update(p: &mut NetParams, grads: &NetParams, lr: f64) {
    for (t, g) in p.tensors_mut().into_iter().zip(grads.tensors()) {
        for (v, dv) in t.iter_mut().zip(g) {
            *v -= lr * dv;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    moments: Option<(NetParams, NetParams)>,
    steps: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            moments: None,
            steps: 0,
        }
    }

    pub fn step(&mut self, p: &mut NetParams, g: &NetParams) {
        match self.kind {
            OptimizerKind::Sgd => apply_update(p, g, self.lr),
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let (m, v) = self
                    .moments
                    .get_or_insert_with(|| (p.zeros_like(), p.zeros_like()));
                self.steps += 1;
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                let tensors = p
                    .tensors_mut()
                    .into_iter()
                    .zip(g.tensors())
                    .zip(m.tensors_mut().into_iter().zip(v.tensors_mut()));
                for ((pt, gt), (mt, vt)) in tensors {
                    for i in 0..pt.len() {
                        mt[i] = beta1 * mt[i] + (1.0 - beta1) * gt[i];
                        vt[i] = beta2 * vt[i] + (1.0 - beta2) * gt[i] * gt[i];
                        let mhat = mt[i] / c1;
                        let vhat = vt[i] / c2;
                        pt[i] -= self.lr * mhat / (vhat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}
