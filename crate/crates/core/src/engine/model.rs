//! Softmax-linear and one-hidden-layer ReLU models.
//!
//! The objective is mean softmax cross-entropy plus `weight_decay · ½‖θ‖²`
//! over every parameter (weights and biases).

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::metrics::PredictionBatch;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    SoftmaxLinear,
    /// One hidden ReLU layer.
    Mlp { hidden_units: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    XavierUniform,
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub init: Init,
    #[serde(default)]
    pub weight_decay: f64,
}

impl ModelSpec {
    pub fn softmax_linear() -> Self {
        ModelSpec { arch: Arch::SoftmaxLinear, init: Init::XavierUniform, weight_decay: 0.0 }
    }

    pub fn mlp(hidden_units: usize) -> Self {
        ModelSpec { arch: Arch::Mlp { hidden_units }, init: Init::XavierUniform, weight_decay: 0.0 }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if let Arch::Mlp { hidden_units: 0 } = self.arch {
            return Err(EngineError::InvalidSpec("hidden_units must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(EngineError::InvalidSpec("weight_decay must be >= 0".into()));
        }
        if let Init::Gaussian { sigma } = self.init {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(EngineError::InvalidSpec("gaussian sigma must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Short identifier such as `linear` or `mlp-100`.
    pub fn id(&self) -> String {
        match self.arch {
            Arch::SoftmaxLinear => "linear".to_string(),
            Arch::Mlp { hidden_units } => format!("mlp-{hidden_units}"),
        }
    }
}

/// Affine layer `x W + b`, with `W` shaped `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense { w: Array2::zeros(self.w.raw_dim()), b: Array1::zeros(self.b.len()) }
    }
}

/// Parameters of a model; ReLU sits between consecutive layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub layers: Vec<Dense>,
    pub weight_decay: f64,
}

/// Gradients share the layout of the parameters.
pub type Gradients = Vec<Dense>;

impl ModelState {
    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().chain(l.b.iter()).map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.layers.iter().map(Dense::zeros_like).collect()
    }

    /// All parameters in layer order, weights (row-major) before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.n_params());
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            layer.w.iter_mut().chain(layer.b.iter_mut()).for_each(|x| *x = it.next().unwrap());
        }
    }
}

pub fn flatten_gradients(grads: &Gradients) -> Vec<f64> {
    grads.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied()).collect()
}

/// Initializes weights per `spec.init` with zero biases.
///
/// Xavier-uniform draws from `±sqrt(6 / (fan_in + fan_out))`.
pub fn init_model(spec: &ModelSpec, dim: usize, classes: usize, seed: u64) -> Result<ModelState, EngineError> {
    spec.validate()?;
    if dim == 0 || classes < 2 {
        return Err(EngineError::InvalidSpec(format!(
            "need input dim >= 1 and classes >= 2, got {dim} and {classes}"
        )));
    }
    let shapes = match spec.arch {
        Arch::SoftmaxLinear => vec![(dim, classes)],
        Arch::Mlp { hidden_units } => vec![(dim, hidden_units), (hidden_units, classes)],
    };
    let mut rng = rng::stream(seed, "init");
    let layers = shapes
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let w = match spec.init {
                Init::XavierUniform => {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                    Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut rng))
                }
                Init::Gaussian { sigma } => {
                    let dist = Normal::new(0.0, sigma).expect("validated sigma");
                    Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut rng))
                }
            };
            Dense { w, b: Array1::zeros(fan_out) }
        })
        .collect();
    Ok(ModelState { layers, weight_decay: spec.weight_decay })
}

/// Result of a forward pass over a batch.
#[derive(Debug, Clone)]
pub struct Forward {
    pub predictions: PredictionBatch,
    /// Mean cross-entropy.
    pub data_loss: f64,
    /// `data_loss` plus the weight-decay penalty.
    pub loss: f64,
}

struct Pass {
    /// Inputs to each layer (`inputs[0]` is the batch itself).
    inputs: Vec<Array2<f64>>,
    probs: Array2<f64>,
    data_loss: f64,
}

fn check_shapes(model: &ModelState, x: &ArrayView2<f64>, labels: &[usize]) -> Result<(), EngineError> {
    if x.ncols() != model.input_dim() {
        return Err(EngineError::DimensionMismatch { expected: model.input_dim(), found: x.ncols() });
    }
    if x.nrows() != labels.len() || x.nrows() == 0 {
        return Err(EngineError::InvalidConfig(format!(
            "batch has {} rows and {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= model.n_classes()) {
        return Err(EngineError::InvalidConfig(format!("label {y} outside model's classes")));
    }
    Ok(())
}

fn run(model: &ModelState, x: ArrayView2<f64>, labels: &[usize]) -> Pass {
    let mut inputs = vec![x.to_owned()];
    let last = model.layers.len() - 1;
    let mut logits = Array2::zeros((0, 0));
    for (i, layer) in model.layers.iter().enumerate() {
        let z = inputs[i].dot(&layer.w) + &layer.b;
        if i == last {
            logits = z;
        } else {
            inputs.push(z.mapv(|v| v.max(0.0)));
        }
    }
    // Stabilized softmax; -ln p_y = logsumexp(z) - z_y.
    let mut probs = logits;
    let mut loss_sum = 0.0;
    for (mut row, &y) in probs.rows_mut().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let zy = row[y] - max;
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
        loss_sum += sum.ln() - zy;
    }
    let data_loss = loss_sum / labels.len() as f64;
    Pass { inputs, probs, data_loss }
}

fn penalty(model: &ModelState) -> f64 {
    0.5 * model.weight_decay * model.squared_norm()
}

/// Mean cross-entropy and regularized loss without building a
/// [`PredictionBatch`]; usable on diverging parameters.
pub fn losses(model: &ModelState, x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, f64), EngineError> {
    check_shapes(model, &x, labels)?;
    let pass = run(model, x, labels);
    Ok((pass.data_loss, pass.data_loss + penalty(model)))
}

pub fn forward(model: &ModelState, x: ArrayView2<f64>, labels: &[usize]) -> Result<Forward, EngineError> {
    check_shapes(model, &x, labels)?;
    let pass = run(model, x, labels);
    let loss = pass.data_loss + penalty(model);
    let predictions = PredictionBatch::new(pass.probs, labels.to_vec())?;
    Ok(Forward { predictions, data_loss: pass.data_loss, loss })
}

/// Analytic gradient of the regularized loss, together with the loss itself.
pub fn loss_and_gradients(
    model: &ModelState,
    x: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(f64, Gradients), EngineError> {
    check_shapes(model, &x, labels)?;
    let Pass { inputs, probs, data_loss } = run(model, x, labels);
    let n = labels.len() as f64;

    // dL/dz for the logits: (P - onehot) / n.
    let mut delta = probs;
    for (mut row, &y) in delta.rows_mut().into_iter().zip(labels) {
        row[y] -= 1.0;
    }
    delta /= n;

    let mut grads = model.zero_gradients();
    for i in (0..model.layers.len()).rev() {
        let layer = &model.layers[i];
        grads[i].w = inputs[i].t().dot(&delta) + &(&layer.w * model.weight_decay);
        grads[i].b = delta.sum_axis(Axis(0)) + &(&layer.b * model.weight_decay);
        if i > 0 {
            let mut upstream = delta.dot(&layer.w.t());
            // inputs[i] is relu(z); its derivative is 1 where the output is positive.
            Zip::from(&mut upstream).and(&inputs[i]).for_each(|d, &h| {
                if h <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = upstream;
        }
    }
    Ok((data_loss + penalty(model), grads))
}

pub fn backward(model: &ModelState, x: ArrayView2<f64>, labels: &[usize]) -> Result<Gradients, EngineError> {
    loss_and_gradients(model, x, labels).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn xavier_respects_bound() {
        let m = init_model(&ModelSpec::softmax_linear(), 4, 2, 3).unwrap();
        assert!(m.layers[0].w.iter().all(|w| w.abs() <= 1.0));
        assert!(m.layers[0].b.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn gaussian_zero_sigma_is_all_zero() {
        let spec = ModelSpec::mlp(5).with_init(Init::Gaussian { sigma: 0.0 });
        let m = init_model(&spec, 3, 2, 3).unwrap();
        assert!(m.flatten().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn init_is_seeded() {
        let spec = ModelSpec::mlp(8).with_init(Init::Gaussian { sigma: 0.1 });
        assert_eq!(init_model(&spec, 3, 4, 9).unwrap(), init_model(&spec, 3, 4, 9).unwrap());
        assert_ne!(init_model(&spec, 3, 4, 9).unwrap(), init_model(&spec, 3, 4, 10).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(ModelSpec::mlp(0).validate().is_err());
        assert!(ModelSpec::softmax_linear().with_weight_decay(-1.0).validate().is_err());
    }

    #[test]
    fn zero_weights_give_uniform_probs_and_ln_c_loss() {
        let spec = ModelSpec::softmax_linear().with_init(Init::Gaussian { sigma: 0.0 });
        let m = init_model(&spec, 3, 4, 0).unwrap();
        let x = array![[0.1, 0.2, 0.3], [0.9, 0.0, 0.5]];
        let f = forward(&m, x.view(), &[0, 3]).unwrap();
        assert!(f.predictions.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert_abs_diff_eq!(f.loss, 4f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn favoured_logit_concentrates_probability() {
        let spec = ModelSpec::softmax_linear().with_init(Init::Gaussian { sigma: 0.0 });
        let mut m = init_model(&spec, 2, 3, 0).unwrap();
        m.layers[0].b[1] = 10.0;
        let f = forward(&m, array![[0.5, 0.5]].view(), &[1]).unwrap();
        assert_eq!(f.predictions.predicted(0), 1);
        assert!(f.predictions.probs()[[0, 1]] > 0.99);
    }

    #[test]
    fn zero_weight_bias_gradient_is_mean_residual() {
        let spec = ModelSpec::softmax_linear().with_init(Init::Gaussian { sigma: 0.0 });
        let m = init_model(&spec, 2, 2, 0).unwrap();
        let x = array![[0.2, 0.4], [0.6, 0.8]];
        let g = backward(&m, x.view(), &[0, 1]).unwrap();
        // probs are all 0.5, so mean(probs - onehot) = 0 per class.
        assert_abs_diff_eq!(g[0].b[0], 0.0, epsilon = 1e-15);
        let g = backward(&m, x.view(), &[0, 0]).unwrap();
        assert_abs_diff_eq!(g[0].b[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0].b[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn weight_decay_adds_lambda_theta() {
        let spec = ModelSpec::mlp(4).with_init(Init::Gaussian { sigma: 0.5 });
        let plain = init_model(&spec, 3, 3, 1).unwrap();
        let mut decayed = plain.clone();
        decayed.weight_decay = 0.01;
        let x = array![[0.1, 0.5, 0.9], [0.3, 0.3, 0.2]];
        let g0 = flatten_gradients(&backward(&plain, x.view(), &[2, 0]).unwrap());
        let g1 = flatten_gradients(&backward(&decayed, x.view(), &[2, 0]).unwrap());
        for ((a, b), theta) in g0.iter().zip(&g1).zip(plain.flatten()) {
            assert_abs_diff_eq!(b - a, 0.01 * theta, epsilon = 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let m = init_model(&ModelSpec::softmax_linear(), 3, 2, 0).unwrap();
        assert!(matches!(
            forward(&m, array![[0.1, 0.2]].view(), &[0]),
            Err(EngineError::DimensionMismatch { expected: 3, found: 2 })
        ));
        assert!(forward(&m, array![[0.1, 0.2, 0.3]].view(), &[5]).is_err());
    }
}
