use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix, Op, View};
use crate::error::{Error, Result};

pub const HIDDEN_WIDTH: usize = 128;
pub const N_LAYERS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Identity,
    /// Elementwise `1 / (1 + e^-z)`, squashing outputs into `(0, 1)`.
    Logistic,
}

impl OutputActivation {
    pub fn code(self) -> u32 {
        match self {
            OutputActivation::Identity => 0,
            OutputActivation::Logistic => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(OutputActivation::Identity),
            1 => Some(OutputActivation::Logistic),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Logistic => logistic(z),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative(self, y: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Logistic => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Two rectified hidden layers followed by an output layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub output_dim: usize,
    pub output: OutputActivation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize, output: OutputActivation) -> Self {
        MlpSpec {
            input_dim,
            hidden: [HIDDEN_WIDTH, HIDDEN_WIDTH],
            output_dim,
            output,
        }
    }

    pub fn with_hidden(mut self, h1: usize, h2: usize) -> Self {
        self.hidden = [h1, h2];
        self
    }

    /// `(fan_in, fan_out)` of each layer.
    pub fn layer_dims(&self) -> [(usize, usize); N_LAYERS] {
        [
            (self.input_dim, self.hidden[0]),
            (self.hidden[0], self.hidden[1]),
            (self.hidden[1], self.output_dim),
        ]
    }

    /// Offset of each layer's weights in the flat parameter vector. Layers
    /// are stored in order, each as `fan_out x fan_in` row-major weights
    /// followed by `fan_out` biases.
    pub fn layer_offsets(&self) -> [usize; N_LAYERS] {
        let mut offsets = [0; N_LAYERS];
        let mut at = 0;
        for (l, (i, o)) in self.layer_dims().into_iter().enumerate() {
            offsets[l] = at;
            at += i * o + o;
        }
        offsets
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Ranges of each parameter tensor (weights, bias, weights, ...).
    pub fn tensor_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(2 * N_LAYERS);
        for ((i, o), off) in self.layer_dims().into_iter().zip(self.layer_offsets()) {
            out.push(off..off + i * o);
            out.push(off + i * o..off + i * o + o);
        }
        out
    }
}

/// Activations of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    /// Output layer before the output activation.
    pub pre_output: Vec<f64>,
    pub output: Vec<f64>,
}

/// Activations of a batched forward pass, one row per sample.
#[derive(Clone, Debug)]
pub struct BatchTrace {
    pub input: Matrix,
    pub h1: Matrix,
    pub h2: Matrix,
    pub pre_output: Matrix,
    pub output: Matrix,
}

/// Gradients produced by a backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// Same layout as [`Mlp::params`]; `None` if not requested.
    pub params: Option<Vec<f64>>,
    pub input: Option<Matrix>,
}

/// Which gradients [`Mlp::backward_batch`] should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Want {
    pub params: bool,
    pub input: bool,
}

impl Want {
    pub const PARAMS: Want = Want { params: true, input: false };
    pub const INPUT: Want = Want { params: false, input: true };
    pub const BOTH: Want = Want { params: true, input: true };
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Self {
        Mlp {
            params: vec![0.0; spec.param_count()],
            spec,
        }
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut net = Mlp::zeros(spec);
        for ((fan_in, fan_out), off) in spec.layer_dims().into_iter().zip(spec.layer_offsets()) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::Dimension {
                context: "Mlp::from_params",
                expected: spec.param_count(),
                actual: params.len(),
            });
        }
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let (i, o) = self.spec.layer_dims()[layer];
        let off = self.spec.layer_offsets()[layer];
        &self.params[off..off + i * o]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (i, o) = self.spec.layer_dims()[layer];
        let off = self.spec.layer_offsets()[layer] + i * o;
        &self.params[off..off + o]
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardTrace> {
        check_len("Mlp::forward input", self.spec.input_dim, input.len())?;
        let mut h1 = self.affine(0, input);
        relu_in_place(&mut h1);
        let mut h2 = self.affine(1, &h1);
        relu_in_place(&mut h2);
        let pre_output = self.affine(2, &h2);
        let output = pre_output.iter().map(|&z| self.spec.output.apply(z)).collect();
        Ok(ForwardTrace {
            input: input.to_vec(),
            h1,
            h2,
            pre_output,
            output,
        })
    }

    fn affine(&self, layer: usize, x: &[f64]) -> Vec<f64> {
        let (fan_in, _) = self.spec.layer_dims()[layer];
        self.weights(layer)
            .chunks_exact(fan_in)
            .zip(self.bias(layer))
            .map(|(w, b)| w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    pub fn forward_batch(&self, input: &Matrix) -> Result<BatchTrace> {
        check_len("Mlp::forward_batch input", self.spec.input_dim, input.cols())?;
        let mut h1 = self.affine_batch(0, input);
        relu_in_place(h1.as_mut_slice());
        let mut h2 = self.affine_batch(1, &h1);
        relu_in_place(h2.as_mut_slice());
        let pre_output = self.affine_batch(2, &h2);
        let mut output = pre_output.clone();
        let act = self.spec.output;
        if act != OutputActivation::Identity {
            for v in output.as_mut_slice() {
                *v = act.apply(*v);
            }
        }
        Ok(BatchTrace {
            input: input.clone(),
            h1,
            h2,
            pre_output,
            output,
        })
    }

    /// Output only, without keeping intermediate activations around.
    pub fn predict_batch(&self, input: &Matrix) -> Result<Matrix> {
        Ok(self.forward_batch(input)?.output)
    }

    fn affine_batch(&self, layer: usize, x: &Matrix) -> Matrix {
        let (fan_in, fan_out) = self.spec.layer_dims()[layer];
        let mut out = Matrix::zeros(x.rows(), fan_out);
        let bias = self.bias(layer);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(bias);
        }
        let cols = out.cols();
        gemm(
            1.0,
            x.into(),
            Op::N,
            View::new(self.weights(layer), fan_out, fan_in),
            Op::T,
            1.0,
            out.as_mut_slice(),
            cols,
        );
        out
    }

    /// Reverse-mode gradients of `sum(output * output_grad)` for one sample.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let batch = BatchTrace {
            input: Matrix::from_vec(1, trace.input.len(), trace.input.clone())?,
            h1: Matrix::from_vec(1, trace.h1.len(), trace.h1.clone())?,
            h2: Matrix::from_vec(1, trace.h2.len(), trace.h2.clone())?,
            pre_output: Matrix::from_vec(1, trace.pre_output.len(), trace.pre_output.clone())?,
            output: Matrix::from_vec(1, trace.output.len(), trace.output.clone())?,
        };
        check_len("Mlp::backward output_grad", self.spec.output_dim, output_grad.len())?;
        let g = Matrix::from_vec(1, output_grad.len(), output_grad.to_vec())?;
        let grads = self.backward_batch(&batch, &g, Want::BOTH)?;
        Ok((
            grads.params.expect("requested"),
            grads.input.expect("requested").into_vec(),
        ))
    }

    /// Reverse-mode gradients of `sum_{rows} output . output_grad`.
    pub fn backward_batch(&self, trace: &BatchTrace, output_grad: &Matrix, want: Want) -> Result<Gradients> {
        check_len("Mlp::backward_batch rows", trace.output.rows(), output_grad.rows())?;
        check_len("Mlp::backward_batch cols", self.spec.output_dim, output_grad.cols())?;
        let mut dz = output_grad.clone();
        let act = self.spec.output;
        if act != OutputActivation::Identity {
            for (g, y) in dz.as_mut_slice().iter_mut().zip(trace.output.as_slice()) {
                *g *= act.derivative(*y);
            }
        }
        self.backward_preactivation(trace, dz, want)
    }

    /// Like [`Mlp::backward_batch`] but starting from the gradient with
    /// respect to the output layer's pre-activation.
    pub fn backward_preactivation(&self, trace: &BatchTrace, d_out: Matrix, want: Want) -> Result<Gradients> {
        check_len("Mlp::backward_preactivation rows", trace.output.rows(), d_out.rows())?;
        check_len("Mlp::backward_preactivation cols", self.spec.output_dim, d_out.cols())?;
        let mut grads = want.params.then(|| vec![0.0; self.params.len()]);
        let offsets = self.spec.layer_offsets();
        let dims = self.spec.layer_dims();
        let layer_inputs = [&trace.input, &trace.h1, &trace.h2];

        let mut dz = d_out;
        let mut input_grad = None;
        for layer in (0..N_LAYERS).rev() {
            let (fan_in, fan_out) = dims[layer];
            let x = layer_inputs[layer];
            if let Some(g) = grads.as_mut() {
                let off = offsets[layer];
                let (gw, rest) = g[off..].split_at_mut(fan_in * fan_out);
                gemm(1.0, (&dz).into(), Op::T, x.into(), Op::N, 0.0, gw, fan_in);
                let gb = &mut rest[..fan_out];
                for r in 0..dz.rows() {
                    for (b, d) in gb.iter_mut().zip(dz.row(r)) {
                        *b += d;
                    }
                }
            }
            if layer == 0 && !want.input {
                break;
            }
            let mut dx = Matrix::zeros(dz.rows(), fan_in);
            gemm(
                1.0,
                (&dz).into(),
                Op::N,
                View::new(self.weights(layer), fan_out, fan_in),
                Op::N,
                0.0,
                dx.as_mut_slice(),
                fan_in,
            );
            if layer == 0 {
                input_grad = Some(dx);
                break;
            }
            // rectifier gate: zero where the unit was inactive
            for (g, h) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                if *h <= 0.0 {
                    *g = 0.0;
                }
            }
            dz = dx;
        }
        Ok(Gradients {
            params: grads,
            input: input_grad,
        })
    }
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// `target <- (1 - tau) * target + tau * source`.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if target.spec != source.spec {
        return Err(Error::Dimension {
            context: "soft_update",
            expected: target.params.len(),
            actual: source.params.len(),
        });
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau {tau} outside [0, 1]")));
    }
    if tau == 1.0 {
        target.params.copy_from_slice(&source.params);
        return Ok(());
    }
    for (t, s) in target.params.iter_mut().zip(&source.params) {
        *t = (1.0 - tau) * *t + tau * s;
    }
    Ok(())
}

/// Rescales each parameter tensor whose L2 norm exceeds `max_norm`.
pub fn clip_per_tensor(spec: &MlpSpec, grads: &mut [f64], max_norm: f64) {
    for range in spec.tensor_ranges() {
        let g = &mut grads[range];
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > max_norm {
            let k = max_norm / norm;
            g.iter_mut().for_each(|v| *v *= k);
        }
    }
}
