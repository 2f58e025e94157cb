use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::Stream;

/// Affine layer `x -> x W + b` with `W` stored as `inputs x outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weights: Array2::zeros((inputs, outputs)), bias: Array1::zeros(outputs) }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut Stream) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        layer.weights.mapv_inplace(|_| rng.random_range(-bound..=bound));
        layer.bias.mapv_inplace(|_| rng.random_range(-bound..=bound));
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

/// Layer widths. `encoder` starts at 3 and ends at the feature width F;
/// `head` starts at F and ends at the class count C.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub encoder: Vec<usize>,
    pub head: Vec<usize>,
}

impl Architecture {
    pub fn new(encoder_hidden: &[usize], head_hidden: &[usize], classes: usize) -> Result<Self> {
        if encoder_hidden.is_empty() {
            return Err(Error::BadConfig("encoder needs at least one layer".into()));
        }
        if classes < 2 {
            return Err(Error::BadConfig(format!("need at least 2 classes, got {classes}")));
        }
        if encoder_hidden.iter().chain(head_hidden).any(|&w| w == 0) {
            return Err(Error::BadConfig("layer widths must be positive".into()));
        }
        let mut encoder = vec![3];
        encoder.extend_from_slice(encoder_hidden);
        let mut head = vec![*encoder.last().unwrap()];
        head.extend_from_slice(head_hidden);
        head.push(classes);
        Ok(Self { encoder, head })
    }

    pub fn features(&self) -> usize {
        *self.encoder.last().unwrap()
    }

    pub fn classes(&self) -> usize {
        *self.head.last().unwrap()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.encoder.len() >= 2
            && self.encoder[0] == 3
            && self.head.len() >= 2
            && self.head[0] == self.features()
            && self.classes() >= 2
            && self.encoder.iter().chain(&self.head).all(|&w| w > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::BadConfig(format!("invalid architecture {self:?}")))
        }
    }
}

/// Softmax output for one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionVector(pub Vec<f64>);

impl PredictionVector {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Result of a single-cloud forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Per-point features, `N x F`.
    pub features: Array2<f64>,
    /// Column-wise maximum of `features`.
    pub pooled: Array1<f64>,
    pub prediction: PredictionVector,
}

/// Point-set classifier: a shared per-point MLP encoder, max pooling over
/// points, and an MLP head producing class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSetModel {
    pub encoder: Vec<Dense>,
    pub head: Vec<Dense>,
}

/// Parameter gradients, congruent with [`PointSetModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<Dense>,
    pub head: Vec<Dense>,
}

fn flat_slices(layers: &[Dense]) -> impl Iterator<Item = &[f64]> {
    layers.iter().flat_map(|l| {
        [l.weights.as_slice().expect("standard layout"), l.bias.as_slice().expect("standard layout")]
    })
}

impl Gradients {
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        flat_slices(&self.encoder).chain(flat_slices(&self.head))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().flatten().copied().collect()
    }
}

/// Intermediate values of a batched forward pass kept for backpropagation.
struct BatchTrace {
    /// Encoder activations: `[X, relu(X W1 + b1), ...]`, each `P x width`.
    enc: Vec<Array2<f64>>,
    /// Stacked row index of the argmax point, `B x F`.
    argmax: Array2<usize>,
    /// Head activations: `[pooled, hidden..., logits]`, each `B x width`.
    head: Vec<Array2<f64>>,
    probs: Array2<f64>,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    p
}

fn log_softmax_at(logits: ndarray::ArrayView1<f64>, label: usize) -> f64 {
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + logits.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    logits[label] - lse
}

impl PointSetModel {
    pub fn new(arch: &Architecture, rng: &mut Stream) -> Result<Self> {
        arch.validate()?;
        let encoder = arch.encoder.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        let head = arch.head.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Ok(Self { encoder, head })
    }

    pub fn from_layers(encoder: Vec<Dense>, head: Vec<Dense>) -> Result<Self> {
        let model = Self { encoder, head };
        let arch = model.architecture();
        arch.validate()?;
        let chained = |layers: &[Dense]| layers.windows(2).all(|w| w[0].outputs() == w[1].inputs());
        if !chained(&model.encoder) || !chained(&model.head) {
            return Err(Error::BadConfig("layer shapes do not chain".into()));
        }
        for l in model.encoder.iter().chain(&model.head) {
            if l.bias.len() != l.outputs() {
                return Err(Error::BadConfig("bias length does not match layer width".into()));
            }
        }
        Ok(model)
    }

    pub fn architecture(&self) -> Architecture {
        let widths = |layers: &[Dense]| {
            let mut w: Vec<usize> = layers.first().map(|l| vec![l.inputs()]).unwrap_or_default();
            w.extend(layers.iter().map(Dense::outputs));
            w
        };
        Architecture { encoder: widths(&self.encoder), head: widths(&self.head) }
    }

    pub fn features(&self) -> usize {
        self.encoder.last().map_or(0, Dense::outputs)
    }

    pub fn classes(&self) -> usize {
        self.head.last().map_or(0, Dense::outputs)
    }

    pub fn param_count(&self) -> usize {
        self.encoder.iter().chain(&self.head).map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        flat_slices(&self.encoder).chain(flat_slices(&self.head))
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.encoder.iter_mut().chain(self.head.iter_mut()).flat_map(|l| {
            [l.weights.as_slice_mut().expect("standard layout"), l.bias.as_slice_mut().expect("standard layout")]
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().flatten().copied().collect()
    }

    /// Overwrites parameter `index` in flat order (encoder then head; per
    /// layer, weights row-major then bias).
    pub fn set_param(&mut self, mut index: usize, value: f64) {
        for s in self.slices_mut() {
            if index < s.len() {
                s[index] = value;
                return;
            }
            index -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.slices().flatten().all(|v| v.is_finite())
    }

    fn stack(clouds: &[&PointCloud]) -> (Array2<f64>, Vec<usize>) {
        let total: usize = clouds.iter().map(|c| c.len()).sum();
        let mut x = Array2::zeros((total, 3));
        let mut offsets = Vec::with_capacity(clouds.len() + 1);
        let mut row = 0;
        offsets.push(0);
        for c in clouds {
            for p in c.points() {
                x.row_mut(row).assign(&ndarray::aview1(p));
                row += 1;
            }
            offsets.push(row);
        }
        (x, offsets)
    }

    fn encode(&self, x: Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.encoder.len() + 1);
        acts.push(x);
        for layer in &self.encoder {
            let mut a = layer.apply(acts.last().unwrap());
            relu_inplace(&mut a);
            acts.push(a);
        }
        acts
    }

    /// Per-point encoder output, `N x F`.
    pub fn pointwise_features(&self, points: &PointCloud) -> Array2<f64> {
        let (x, _) = Self::stack(&[points]);
        self.encode(x).pop().unwrap()
    }

    fn trace(&self, clouds: &[&PointCloud]) -> BatchTrace {
        let (x, offsets) = Self::stack(clouds);
        let enc = self.encode(x);
        let feats = enc.last().unwrap();
        let f = feats.ncols();
        let b = clouds.len();
        let mut pooled = Array2::zeros((b, f));
        let mut argmax = Array2::zeros((b, f));
        for i in 0..b {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            let mut best = feats.row(lo).to_owned();
            let mut arg = Array1::from_elem(f, lo);
            for r in lo + 1..hi {
                for (k, &v) in feats.row(r).iter().enumerate() {
                    if v > best[k] {
                        best[k] = v;
                        arg[k] = r;
                    }
                }
            }
            pooled.row_mut(i).assign(&best);
            argmax.row_mut(i).assign(&arg);
        }
        let mut head = Vec::with_capacity(self.head.len() + 1);
        head.push(pooled);
        for (li, layer) in self.head.iter().enumerate() {
            let mut a = layer.apply(head.last().unwrap());
            if li + 1 < self.head.len() {
                relu_inplace(&mut a);
            }
            head.push(a);
        }
        let probs = softmax_rows(head.last().unwrap());
        BatchTrace { enc, argmax, head, probs }
    }

    pub fn forward(&self, points: &PointCloud) -> Forward {
        let mut t = self.trace(&[points]);
        Forward {
            features: t.enc.pop().unwrap(),
            pooled: t.head[0].row(0).to_owned(),
            prediction: PredictionVector(t.probs.row(0).to_vec()),
        }
    }

    /// Batched prediction; each cloud is pooled independently.
    pub fn predict_batch(&self, clouds: &[&PointCloud]) -> Vec<PredictionVector> {
        if clouds.is_empty() {
            return Vec::new();
        }
        let t = self.trace(clouds);
        t.probs.rows().into_iter().map(|r| PredictionVector(r.to_vec())).collect()
    }

    /// Mean cross-entropy over the batch and its analytic gradient.
    pub fn loss_and_gradients(&self, batch: &[(&PointCloud, usize)]) -> (f64, Gradients) {
        let (loss, grads, _) = self.loss_gradients_probs(batch);
        (loss, grads)
    }

    pub(crate) fn loss_gradients_probs(&self, batch: &[(&PointCloud, usize)]) -> (f64, Gradients, Array2<f64>) {
        let clouds: Vec<&PointCloud> = batch.iter().map(|(c, _)| *c).collect();
        let t = self.trace(&clouds);
        let b = batch.len();
        let scale = 1.0 / b as f64;
        let logits = t.head.last().unwrap();
        let loss = -batch
            .iter()
            .enumerate()
            .map(|(i, &(_, y))| log_softmax_at(logits.row(i), y))
            .sum::<f64>()
            * scale;

        // d loss / d logits = (softmax - onehot) / B
        let mut dz = t.probs.clone();
        for (i, &(_, y)) in batch.iter().enumerate() {
            dz[[i, y]] -= 1.0;
        }
        dz.mapv_inplace(|v| v * scale);

        let mut head_grads = vec![Dense::zeros(0, 0); self.head.len()];
        for li in (0..self.head.len()).rev() {
            let input = &t.head[li];
            head_grads[li] = Dense { weights: input.t().dot(&dz), bias: dz.sum_axis(Axis(0)) };
            let mut da = dz.dot(&self.head[li].weights.t());
            if li > 0 {
                // input is a rectified activation
                ndarray::Zip::from(&mut da).and(input).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            dz = da;
        }
        let d_pooled = dz;

        // Route pooled gradients to the argmax rows only.
        let f = self.features();
        let mut compact_of = std::collections::BTreeMap::new();
        for &r in t.argmax.iter() {
            let next = compact_of.len();
            compact_of.entry(r).or_insert(next);
        }
        let rows: Vec<usize> = {
            let mut v = vec![0; compact_of.len()];
            for (&r, &c) in &compact_of {
                v[c] = r;
            }
            v
        };
        let mut dh = Array2::<f64>::zeros((rows.len(), f));
        for i in 0..b {
            for k in 0..f {
                let c = compact_of[&t.argmax[[i, k]]];
                dh[[c, k]] += d_pooled[[i, k]];
            }
        }
        let gather = |a: &Array2<f64>| a.select(Axis(0), &rows);

        let mut enc_grads = vec![Dense::zeros(0, 0); self.encoder.len()];
        let mut upper = gather(&t.enc[self.encoder.len()]);
        for li in (0..self.encoder.len()).rev() {
            ndarray::Zip::from(&mut dh).and(&upper).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            let input = gather(&t.enc[li]);
            enc_grads[li] = Dense { weights: input.t().dot(&dh), bias: dh.sum_axis(Axis(0)) };
            if li > 0 {
                dh = dh.dot(&self.encoder[li].weights.t());
            }
            upper = input;
        }
        (loss, Gradients { encoder: enc_grads, head: head_grads }, t.probs)
    }
}
