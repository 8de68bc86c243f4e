//! Multilayer perceptron: `L` stacks of fully-connected, ReLU and inverted
//! dropout, then a linear softmax head.
//!
//! Weights are stored `fan_in x fan_out`, so a batch `X` (rows are samples)
//! maps to `X W + b`. Everything is generic over `f32` and `f64`.

mod checkpoint;
mod train;

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::LearningRecord;
use crate::util::top_n_indices;
use crate::{Error, Result};

pub use checkpoint::{checkpoint_precision, load_checkpoint, save_checkpoint, Checkpoint, CheckpointInfo};
pub use train::{learning_rate, train, EpochRecord, TrainConfig, TrainHistory};

/// Floating-point type a model can be built on.
pub trait Scalar:
    LinalgScalar
    + num_traits::Float
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;
    const BYTES: usize;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
    const BYTES: usize = 4;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
    const BYTES: usize = 8;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    /// `fan_in x fan_out`.
    pub weights: Array2<T>,
    pub biases: Array1<T>,
}

impl<T: Scalar> Layer<T> {
    fn he(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
            let z: f64 = rng.sample(StandardNormal);
            T::from_f64(z * std)
        });
        Self {
            weights,
            biases: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let mut z = x.dot(&self.weights);
        z += &self.biases;
        z
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.biases.iter()).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel<T> {
    pub base: Vec<Layer<T>>,
    pub head: Layer<T>,
    pub dropout_rate: f64,
}

/// Forward-pass state needed by [`MlpModel::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    /// Input of every base stack and of the head.
    inputs: Vec<Array2<T>>,
    /// `d activation / d pre-activation` per stack: ReLU gate times dropout scale.
    gates: Vec<Array2<T>>,
    pub probabilities: Array2<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout masks drawn from the given seed.
    Train(u64),
    Infer,
}

/// Gradients with the same layout as the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub base: Vec<Layer<T>>,
    pub head: Layer<T>,
}

pub fn init_model<T: Scalar>(
    input_dim: usize,
    hidden_layers: usize,
    width: usize,
    output_dim: usize,
    dropout_rate: f64,
    seed: u64,
) -> Result<MlpModel<T>> {
    if input_dim == 0 || width == 0 || output_dim == 0 {
        return Err(Error::invalid("network dimensions must be positive"));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::invalid(format!("dropout rate {dropout_rate} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = Vec::with_capacity(hidden_layers);
    let mut fan_in = input_dim;
    for _ in 0..hidden_layers {
        base.push(Layer::he(fan_in, width, &mut rng));
        fan_in = width;
    }
    let head = Layer::he(fan_in, output_dim, &mut rng);
    Ok(MlpModel {
        base,
        head,
        dropout_rate,
    })
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.iter().copied().fold(T::zero(), |a, b| a + b);
        row.mapv_inplace(|v| v / sum);
    }
    out
}

const PROB_FLOOR: f64 = 1e-30;

/// `-sum_d t_d log2(p_d)` with `p` clamped at 1e-30.
pub fn cross_entropy<T: Scalar>(probabilities: &[T], target: &[T]) -> f64 {
    probabilities
        .iter()
        .zip(target)
        .filter(|(_, t)| t.as_f64() != 0.0)
        .map(|(p, t)| -t.as_f64() * p.as_f64().max(PROB_FLOOR).log2())
        .sum()
}

/// Mean cross-entropy over the rows of a batch.
pub fn batch_cross_entropy<T: Scalar>(probabilities: &Array2<T>, targets: ArrayView2<'_, T>) -> f64 {
    let n = probabilities.nrows();
    let total: f64 = probabilities
        .rows()
        .into_iter()
        .zip(targets.rows())
        .map(|(p, t)| cross_entropy(&p.to_vec(), &t.to_vec()))
        .sum();
    total / n as f64
}

/// Gradient of the mean base-2 cross-entropy with respect to the logits.
pub fn logit_gradient<T: Scalar>(probabilities: &Array2<T>, targets: ArrayView2<'_, T>) -> Array2<T> {
    let scale = T::from_f64(1.0 / (std::f64::consts::LN_2 * probabilities.nrows() as f64));
    let mut g = probabilities - &targets;
    g.mapv_inplace(|v| v * scale);
    g
}

impl<T: Scalar> MlpModel<T> {
    pub fn input_dim(&self) -> usize {
        self.base.first().unwrap_or(&self.head).fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.head.fan_out()
    }

    pub fn hidden_layers(&self) -> usize {
        self.base.len()
    }

    pub fn width(&self) -> usize {
        self.base.first().map_or(0, Layer::fan_out)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer<T>> {
        self.base.iter().chain(std::iter::once(&self.head))
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<T>> {
        self.base.iter_mut().chain(std::iter::once(&mut self.head))
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(Layer::is_finite)
    }

    /// Checks that the layer dimensions chain.
    pub fn validate(&self) -> Result<()> {
        let mut fan_in = self.input_dim();
        for (i, l) in self.layers().enumerate() {
            if l.fan_in() != fan_in || l.biases.len() != l.fan_out() {
                return Err(Error::Schema(format!("layer {i} dimensions do not chain")));
            }
            fan_in = l.fan_out();
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Schema("dropout rate outside [0, 1)".into()));
        }
        Ok(())
    }

    /// Batched forward pass; rows of `inputs` are samples.
    pub fn forward(&self, inputs: ArrayView2<'_, T>, mode: Mode) -> Result<ForwardCache<T>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} features, model expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite network input"));
        }
        let mut rng = match mode {
            Mode::Train(seed) if self.dropout_rate > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        let keep_scale = T::from_f64(1.0 / (1.0 - self.dropout_rate));
        let mut cache_inputs = Vec::with_capacity(self.base.len() + 1);
        let mut gates = Vec::with_capacity(self.base.len());
        let mut x = inputs.to_owned();
        for layer in &self.base {
            let mut z = layer.apply(x.view());
            let mut gate = z.mapv(|v| if v > T::zero() { T::one() } else { T::zero() });
            if let Some(rng) = rng.as_mut() {
                for g in gate.iter_mut() {
                    let keep = rng.random::<f64>() >= self.dropout_rate;
                    *g = if keep { *g * keep_scale } else { T::zero() };
                }
            }
            Zip::from(&mut z).and(&gate).for_each(|v, &g| *v = *v * g);
            cache_inputs.push(x);
            gates.push(gate);
            x = z;
        }
        let logits = self.head.apply(x.view());
        cache_inputs.push(x);
        Ok(ForwardCache {
            inputs: cache_inputs,
            gates,
            probabilities: softmax(&logits),
        })
    }

    /// Class probabilities in inference mode.
    pub fn predict(&self, inputs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.forward(inputs, Mode::Infer)?.probabilities)
    }

    /// Exact gradients of the mean base-2 cross-entropy plus `(l2/2)|W|^2`.
    pub fn backward(&self, cache: &ForwardCache<T>, targets: ArrayView2<'_, T>, l2: f64) -> Gradients<T> {
        let l2 = T::from_f64(l2);
        let grad = |layer: &Layer<T>, input: &Array2<T>, delta: &Array2<T>| {
            let mut weights = input.t().dot(delta);
            if l2 != T::zero() {
                weights.scaled_add(l2, &layer.weights);
            }
            Layer {
                weights,
                biases: delta.sum_axis(Axis(0)),
            }
        };
        let mut delta = logit_gradient(&cache.probabilities, targets);
        let head = grad(&self.head, &cache.inputs[self.base.len()], &delta);
        let mut next = &self.head;
        let mut base = Vec::with_capacity(self.base.len());
        for i in (0..self.base.len()).rev() {
            let mut d = delta.dot(&next.weights.t());
            d *= &cache.gates[i];
            base.push(grad(&self.base[i], &cache.inputs[i], &d));
            delta = d;
            next = &self.base[i];
        }
        base.reverse();
        Gradients { base, head }
    }

    /// Keeps the base stacks and attaches a freshly initialized head.
    pub fn transfer_head(&self, output_dim: usize, seed: u64) -> Result<MlpModel<T>> {
        if output_dim == 0 {
            return Err(Error::invalid("output dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(MlpModel {
            base: self.base.clone(),
            head: Layer::he(self.head.fan_in(), output_dim, &mut rng),
            dropout_rate: self.dropout_rate,
        })
    }

    /// Indices of the `n` most probable classes for one input.
    pub fn predict_top_n(&self, input: &[T], n: usize) -> Result<Vec<usize>> {
        if n == 0 || n > self.output_dim() {
            return Err(Error::invalid(format!("n = {n} outside 1..={}", self.output_dim())));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::invalid(e.to_string()))?;
        let p = self.predict(x)?;
        let row: Vec<f64> = p.row(0).iter().map(|v| v.as_f64()).collect();
        Ok(top_n_indices(&row, n))
    }

    /// Ranked class lists for a batch, `n` entries each.
    pub fn rank_batch(&self, inputs: ArrayView2<'_, T>, n: usize, chunk: usize) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::with_capacity(inputs.nrows());
        for block in inputs.axis_chunks_iter(Axis(0), chunk.max(1)) {
            let p = self.predict(block)?;
            for row in p.rows() {
                let row: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
                out.push(top_n_indices(&row, n));
            }
        }
        Ok(out)
    }
}

/// Inputs and one-hot targets as matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples<T> {
    pub inputs: Array2<T>,
    pub targets: Array2<T>,
}

impl<T: Scalar> Samples<T> {
    pub fn new(inputs: Array2<T>, targets: Array2<T>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::invalid("inputs and targets differ in sample count"));
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_records(records: &[LearningRecord]) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::invalid("no records"));
        };
        let (di, dl) = (first.input.len(), first.label.len());
        let mut inputs = Array2::zeros((records.len(), di));
        let mut targets = Array2::zeros((records.len(), dl));
        for (i, r) in records.iter().enumerate() {
            if r.input.len() != di || r.label.len() != dl {
                return Err(Error::invalid(format!("record {i} has inconsistent dimensions")));
            }
            inputs.row_mut(i).iter_mut().zip(&r.input).for_each(|(a, &b)| *a = T::from_f64(b as f64));
            targets.row_mut(i).iter_mut().zip(&r.label).for_each(|(a, &b)| *a = T::from_f64(b as f64));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Target class of every row.
    pub fn classes(&self) -> Vec<usize> {
        self.targets
            .rows()
            .into_iter()
            .map(|r| r.iter().position(|&v| v == T::one()).unwrap_or(0))
            .collect()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
        }
    }
}

/// Fraction of rows whose most probable class is the target.
pub fn top1_accuracy<T: Scalar>(model: &MlpModel<T>, samples: &Samples<T>) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let ranked = model.rank_batch(samples.inputs.view(), 1, 1024)?;
    let hits = ranked
        .iter()
        .zip(samples.classes())
        .filter(|(r, c)| r[0] == *c)
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny(seed: u64, dropout: f64) -> MlpModel<f64> {
        init_model::<f64>(6, 2, 8, 3, dropout, seed).unwrap()
    }

    fn batch(seed: u64, n: usize) -> (Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, 6), || rng.random::<f64>() * 2.0 - 1.0);
        let mut t = Array2::zeros((n, 3));
        for i in 0..n {
            t[[i, rng.random_range(0..3)]] = 1.0;
        }
        (x, t)
    }

    fn objective(m: &MlpModel<f64>, x: &Array2<f64>, t: &Array2<f64>, l2: f64, mode: Mode) -> f64 {
        let p = m.forward(x.view(), mode).unwrap().probabilities;
        let reg: f64 = m.layers().map(|l| l.weights.iter().map(|w| w * w).sum::<f64>()).sum();
        batch_cross_entropy(&p, t.view()) + 0.5 * l2 * reg
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let a = tiny(1, 0.0);
        assert_eq!(a, tiny(1, 0.0));
        assert_ne!(a, tiny(2, 0.0));
        assert!(a.layers().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn he_variance() {
        let m = init_model::<f64>(512, 1, 512, 4, 0.0, 3).unwrap();
        let w = &m.base[0].weights;
        let mean = w.mean().unwrap();
        let var = w.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
        let expected = 2.0 / 512.0;
        assert!((var / expected - 1.0).abs() < 0.2, "{var} vs {expected}");
    }

    #[test]
    fn softmax_examples() {
        let equal = softmax(&array![[0.3f64, 0.3, 0.3, 0.3]]);
        assert!(equal.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let p = softmax(&array![[std::f64::consts::LN_2, 0.0]]);
        assert!((p[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[[0, 1]] - 1.0 / 3.0).abs() < 1e-12);
        let z = array![[0.1f64, -2.0, 3.5]];
        let shifted = softmax(&z.mapv(|v| v + 1234.5));
        for (a, b) in softmax(&z).iter().zip(shifted.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // max subtraction keeps huge logits finite
        assert!(softmax(&array![[1e308f64, 0.0]]).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn loss_examples() {
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]), 0.0);
        let uniform = vec![1.0 / 64.0; 64];
        let mut t = vec![0.0; 64];
        t[17] = 1.0;
        assert!((cross_entropy(&uniform, &t) - 6.0).abs() < 1e-12);
        assert!((cross_entropy(&[0.75, 0.25], &[1.0, 0.0]) - 0.415_037_499_278_843_8).abs() < 1e-12);
        assert!(cross_entropy(&[0.0, 1.0], &[1.0, 0.0]).is_finite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Non-zero biases keep pre-activations of all-dropped rows off the ReLU kink.
        let mut m = tiny(5, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for l in m.layers_mut() {
            l.biases.mapv_inplace(|_| rng.random::<f64>() * 0.2 - 0.1);
        }
        let (x, t) = batch(6, 5);
        let l2 = 1e-2;
        let mode = Mode::Train(99);
        let cache = m.forward(x.view(), mode).unwrap();
        let g = m.backward(&cache, t.view(), l2);
        let h = 1e-6;
        let mut worst = 0.0f64;
        let analytic: Vec<&Layer<f64>> = g.base.iter().chain(std::iter::once(&g.head)).collect();
        for (li, ga) in analytic.iter().enumerate() {
            for which in 0..2 {
                let n = if which == 0 { ga.weights.len() } else { ga.biases.len() };
                for idx in 0..n {
                    let perturb = |delta: f64| {
                        let mut p = m.clone();
                        let layer = p.layers_mut().nth(li).unwrap();
                        if which == 0 {
                            let v = layer.weights.as_slice_mut().unwrap();
                            v[idx] += delta;
                        } else {
                            layer.biases[idx] += delta;
                        }
                        objective(&p, &x, &t, l2, mode)
                    };
                    let numeric = (perturb(h) - perturb(-h)) / (2.0 * h);
                    let exact = if which == 0 {
                        ga.weights.as_slice().unwrap()[idx]
                    } else {
                        ga.biases[idx]
                    };
                    let denom = exact.abs().max(numeric.abs()).max(1e-3);
                    worst = worst.max((exact - numeric).abs() / denom);
                }
            }
        }
        assert!(worst <= 1e-6, "max relative error {worst:e}");
    }

    #[test]
    fn duplicated_inputs_get_identical_gradients() {
        let m = tiny(7, 0.0);
        let (x1, t1) = batch(8, 1);
        let one = m.backward(&m.forward(x1.view(), Mode::Train(1)).unwrap(), t1.view(), 0.0);
        let x2 = ndarray::concatenate![Axis(0), x1, x1];
        let t2 = ndarray::concatenate![Axis(0), t1, t1];
        let two = m.backward(&m.forward(x2.view(), Mode::Train(1)).unwrap(), t2.view(), 0.0);
        for (a, b) in one.base.iter().chain([&one.head]).zip(two.base.iter().chain([&two.head])) {
            for (u, v) in a.weights.iter().zip(b.weights.iter()) {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn head_input_gradient_is_softmax_shortcut() {
        let p = array![[0.2, 0.5, 0.3]];
        let t = array![[0.0, 1.0, 0.0]];
        let g = logit_gradient(&p, t.view());
        for (gi, (pi, ti)) in g.iter().zip(p.iter().zip(t.iter())) {
            assert!((gi - (pi - ti) / std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn infer_mode_ignores_dropout() {
        let m = tiny(9, 0.5);
        let (x, _) = batch(1, 4);
        let a = m.forward(x.view(), Mode::Infer).unwrap().probabilities;
        let b = m.forward(x.view(), Mode::Infer).unwrap().probabilities;
        assert_eq!(a, b);
        let c = m.forward(x.view(), Mode::Train(3)).unwrap().probabilities;
        assert_ne!(a, c);
    }

    #[test]
    fn dropout_preserves_expected_pre_activation() {
        // Single stack feeding the head: the head pre-activation is linear in
        // the dropped activations, so its mean over masks must match inference.
        let m = init_model::<f64>(6, 1, 16, 3, 0.4, 2).unwrap();
        let (x, _) = batch(3, 1);
        let infer = m.forward(x.view(), Mode::Infer).unwrap();
        let reference = m.head.apply(infer.inputs[1].view());
        let mut mean = Array2::<f64>::zeros(reference.raw_dim());
        let draws = 10_000;
        for s in 0..draws {
            let c = m.forward(x.view(), Mode::Train(s)).unwrap();
            mean += &m.head.apply(c.inputs[1].view());
        }
        mean /= draws as f64;
        let scale = reference.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in mean.iter().zip(reference.iter()) {
            assert!((a - b).abs() <= 0.02 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn permuting_head_rows_permutes_probabilities() {
        let m = tiny(11, 0.0);
        let (x, _) = batch(12, 3);
        let perm = [2usize, 0, 1];
        let mut p = m.clone();
        p.head.weights = m.head.weights.select(Axis(1), &perm);
        p.head.biases = m.head.biases.select(Axis(0), &perm);
        let a = m.predict(x.view()).unwrap();
        let b = p.predict(x.view()).unwrap();
        for i in 0..3 {
            for (j, &pj) in perm.iter().enumerate() {
                assert!((b[[i, j]] - a[[i, pj]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let m = tiny(1, 0.0);
        let mut x = Array2::zeros((1, 6));
        x[[0, 2]] = f64::NAN;
        assert!(matches!(m.forward(x.view(), Mode::Infer), Err(Error::InvalidInput(_))));
        assert!(m.forward(Array2::zeros((1, 5)).view(), Mode::Infer).is_err());
    }

    #[test]
    fn transfer_keeps_base() {
        let m = init_model::<f32>(10, 3, 16, 64, 0.2, 1).unwrap();
        let t = m.transfer_head(2, 5).unwrap();
        assert_eq!(t.base, m.base);
        assert_eq!(t.head.weights.dim(), (16, 2));
        assert_eq!(t.output_dim(), 2);
        t.validate().unwrap();
    }

    #[test]
    fn top_n_from_probabilities() {
        // Identity-like net: zero base, head biases set the logits.
        let mut m = init_model::<f64>(2, 0, 1, 4, 0.0, 0).unwrap();
        m.head.weights.fill(0.0);
        m.head.biases = array![0.1, 0.9, 0.5, 0.9];
        assert_eq!(m.predict_top_n(&[0.0, 0.0], 3).unwrap(), vec![1, 3, 2]);
        assert_eq!(m.predict_top_n(&[0.0, 0.0], 1).unwrap(), vec![1]);
        assert!(m.predict_top_n(&[0.0, 0.0], 5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn outputs_lie_on_the_simplex(seed in any::<u64>(), scale in 0.01..100.0f64) {
                let m = tiny(seed, 0.0);
                let (x, t) = batch(seed ^ 1, 4);
                let p = m.predict(x.mapv(|v| v * scale).view()).unwrap();
                for row in p.rows() {
                    prop_assert!((row.sum() - 1.0).abs() < 1e-9);
                    prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
                prop_assert!(batch_cross_entropy(&p, t.view()) >= 0.0);
            }

            #[test]
            fn loss_zero_only_at_exact_one_hot(p0 in 0.0..1.0f64) {
                let loss = cross_entropy(&[p0, 1.0 - p0], &[1.0, 0.0]);
                prop_assert!(loss >= 0.0);
                prop_assert_eq!(loss == 0.0, p0 == 1.0);
            }
        }
    }
}
