use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::rng_from_seed;

use super::Dataset;

pub const MAGIC: &[u8; 4] = b"HMLP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// `x_normalized = (x - offset) * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Affine {
    pub fn identity(n: usize) -> Self {
        Self {
            offset: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }
}

/// Fully connected network, ReLU on hidden layers, identity output.
///
/// Inputs are mapped by `input`; raw network outputs `y` are returned as
/// `y / output.scale + output.offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub input: Affine,
    pub output: Affine,
}

impl MlpModel {
    /// He-initialized hidden weights, zero output weights and biases,
    /// identity normalization. A fresh network predicts `output.offset`.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid(format!("bad layer sizes {sizes:?}")));
        }
        let mut rng = rng_from_seed(seed);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let sd = if k == last { 0.0 } else { (2.0 / w[0] as f64).sqrt() };
                Layer {
                    weights: Array2::from_shape_simple_fn((w[1], w[0]), || {
                        sd * rng.sample::<f64, _>(StandardNormal)
                    }),
                    biases: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self {
            layers,
            input: Affine::identity(sizes[0]),
            output: Affine::identity(sizes[sizes.len() - 1]),
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.n_in()];
        s.extend(self.layers.iter().map(|l| l.biases.len()));
        s
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.biases.len())
    }

    fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Format("network has no layers".into()));
        }
        for w in self.layers.windows(2) {
            if w[0].weights.nrows() != w[1].weights.ncols() {
                return Err(Error::Format("layer shapes do not chain".into()));
            }
        }
        for l in &self.layers {
            if l.biases.len() != l.weights.nrows() {
                return Err(Error::Format("bias length does not match layer".into()));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::Format("non-finite network parameter".into()));
            }
        }
        if self.input.offset.len() != self.n_in()
            || self.input.scale.len() != self.n_in()
            || self.output.offset.len() != self.n_out()
            || self.output.scale.len() != self.n_out()
        {
            return Err(Error::Format("normalization size mismatch".into()));
        }
        Ok(())
    }

    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n_in() {
            return Err(Error::DimensionMismatch {
                expected: self.n_in(),
                got: z.len(),
            });
        }
        let mut a: Array1<f64> = z
            .iter()
            .zip(&self.input.offset)
            .zip(&self.input.scale)
            .map(|((x, o), s)| (x - o) * s)
            .collect();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            a = l.weights.dot(&a) + &l.biases;
            if k < last {
                a.mapv_inplace(relu);
            }
        }
        Ok(a.iter()
            .zip(&self.output.offset)
            .zip(&self.output.scale)
            .map(|((y, o), s)| y / s + o)
            .collect())
    }

    /// Raw outputs for a batch of normalized inputs (rows), keeping
    /// pre-activations for backpropagation.
    fn forward_batch(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&l.weights.t()) + &l.biases;
            if k < last {
                z.mapv_inplace(relu);
            }
            acts.push(z);
        }
        acts
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.layers.len() as u32);
        for l in &self.layers {
            put_u32(&mut out, l.weights.nrows() as u32);
            put_u32(&mut out, l.weights.ncols() as u32);
            for row in l.weights.rows() {
                row.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
            l.biases.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        for a in [&self.input, &self.output] {
            put_u32(&mut out, a.offset.len() as u32);
            a.offset.iter().chain(&a.scale).for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = get_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let n_layers = get_u32(&mut r)? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(64));
        for _ in 0..n_layers {
            let rows = get_u32(&mut r)? as usize;
            let cols = get_u32(&mut r)? as usize;
            let w = get_f64s(&mut r, rows * cols)?;
            let b = get_f64s(&mut r, rows)?;
            layers.push(Layer {
                weights: Array2::from_shape_vec((rows, cols), w).map_err(|e| Error::Format(e.to_string()))?,
                biases: Array1::from(b),
            });
        }
        let mut affine = || -> Result<Affine> {
            let n = get_u32(&mut r)? as usize;
            Ok(Affine {
                offset: get_f64s(&mut r, n)?,
                scale: get_f64s(&mut r, n)?,
            })
        };
        let input = affine()?;
        let output = affine()?;
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        let m = Self { layers, input, output };
        m.check()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn truncated(_: std::io::Error) -> Error {
    Error::Format("truncated model file".into())
}

fn get_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64s(r: &mut &[u8], n: usize) -> Result<Vec<f64>> {
    if r.len() < 8 * n {
        return Err(Error::Format("truncated model file".into()));
    }
    let (head, tail) = r.split_at(8 * n);
    *r = tail;
    Ok(head
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    #[serde(default)]
    pub adam: AdamParams,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden layers must be non-empty"));
        }
        let a = self.adam;
        if !(a.learning_rate > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(invalid(format!("bad Adam parameters {a:?}")));
        }
        Ok(())
    }
}

/// Losses are mean squared errors of normalized targets; test metrics are
/// in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    /// Training loss at the start of every epoch.
    pub loss_history: Vec<f64>,
    pub validation_history: Vec<f64>,
    pub final_train_loss: f64,
    pub final_validation_loss: Option<f64>,
    pub test: Option<TestMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub count: usize,
    pub mse: f64,
    /// `1 - SS_res / SS_tot`, pooled over outputs.
    pub r2: f64,
    /// Mean Euclidean norm of the prediction error.
    pub mean_l2_gap: f64,
}

fn to_matrix(rows: &[&[f64]], t: &Affine) -> Array2<f64> {
    let cols = t.offset.len();
    Array2::from_shape_fn((rows.len(), cols), |(i, j)| (rows[i][j] - t.offset[j]) * t.scale[j])
}

/// Input map onto `[-1, 1]` over the training range; output standardized.
fn fit_normalization(x: &[&[f64]], y: &[&[f64]]) -> (Affine, Affine) {
    let n_in = x[0].len();
    let n_out = y[0].len();
    let mut input = Affine::identity(n_in);
    for j in 0..n_in {
        let lo = x.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
        let hi = x.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        input.offset[j] = 0.5 * (lo + hi);
        if hi > lo {
            input.scale[j] = 2.0 / (hi - lo);
        }
    }
    let mut output = Affine::identity(n_out);
    let n = y.len() as f64;
    for j in 0..n_out {
        let m = y.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = y.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
        output.offset[j] = m;
        if var > 0.0 {
            output.scale[j] = 1.0 / var.sqrt();
        }
    }
    (input, output)
}

fn mse(pred: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let d = pred - y;
    d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64
}

/// Full-batch Adam on the training split.
pub fn train_mlp(data: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    if data.split.train.is_empty() {
        return Err(Error::Empty);
    }
    let (xr, yr) = data.subset(&data.split.train);
    let (input, output) = fit_normalization(&xr, &yr);
    let mut sizes = vec![data.n_inputs()];
    sizes.extend(&cfg.hidden);
    sizes.push(data.n_targets());
    let mut model = MlpModel::new(&sizes, cfg.seed)?;
    model.input = input;
    model.output = output;

    let x = to_matrix(&xr, &model.input);
    let y = to_matrix(&yr, &model.output);
    let (xv, yv) = {
        let (a, b) = data.subset(&data.split.validation);
        (to_matrix(&a, &model.input), to_matrix(&b, &model.output))
    };

    let a = cfg.adam;
    let mut m: Vec<(Array2<f64>, Array1<f64>)> = model
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.biases.len())))
        .collect();
    let mut v = m.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut val_history = Vec::new();
    let norm = 2.0 / y.len() as f64;
    for epoch in 0..cfg.epochs {
        let acts = model.forward_batch(x.view());
        let out = acts.last().expect("output layer");
        let loss = mse(out, &y);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(loss);
        if !yv.is_empty() {
            val_history.push(mse(model.forward_batch(xv.view()).last().expect("output"), &yv));
        }

        let t = (epoch + 1) as i32;
        let c1 = 1.0 - a.beta1.powi(t);
        let c2 = 1.0 - a.beta2.powi(t);
        let mut delta = (out - &y) * norm;
        for k in (0..model.layers.len()).rev() {
            let gw = delta.t().dot(&acts[k]);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&model.layers[k].weights);
                back.zip_mut_with(&acts[k], |d, &act| {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            let (mw, mb) = &mut m[k];
            let (vw, vb) = &mut v[k];
            let layer = &mut model.layers[k];
            adam_update(&mut layer.weights, &gw, mw, vw, a, c1, c2);
            adam_update(&mut layer.biases, &gb, mb, vb, a, c1, c2);
        }
    }

    let final_train_loss = mse(model.forward_batch(x.view()).last().expect("output"), &y);
    if !final_train_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs });
    }
    let final_validation_loss =
        (!yv.is_empty()).then(|| mse(model.forward_batch(xv.view()).last().expect("output"), &yv));
    let test = test_metrics(&model, data, &data.split.test)?;
    let report = TrainReport {
        epochs: cfg.epochs,
        seed: cfg.seed,
        layer_sizes: sizes,
        loss_history: history,
        validation_history: val_history,
        final_train_loss,
        final_validation_loss,
        test,
    };
    Ok((model, report))
}

fn adam_update<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    a: AdamParams,
    c1: f64,
    c2: f64,
) {
    ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = a.beta1 * *m + (1.0 - a.beta1) * g;
        *v = a.beta2 * *v + (1.0 - a.beta2) * g * g;
        *p -= a.learning_rate * (*m / c1) / ((*v / c2).sqrt() + a.eps);
    });
}

/// Physical-unit metrics of `model` on records `idx`; `None` when empty.
pub fn test_metrics(model: &MlpModel, data: &Dataset, idx: &[usize]) -> Result<Option<TestMetrics>> {
    if idx.is_empty() {
        return Ok(None);
    }
    let k = data.n_targets();
    let mut mean_t = vec![0.0; k];
    for &i in idx {
        mean_t.iter_mut().zip(&data.targets[i]).for_each(|(m, t)| *m += t / idx.len() as f64);
    }
    let (mut ss_res, mut ss_tot, mut gap) = (0.0, 0.0, 0.0);
    for &i in idx {
        let p = model.predict(&data.inputs[i])?;
        let mut sq = 0.0;
        for ((p, t), m) in p.iter().zip(&data.targets[i]).zip(&mean_t) {
            sq += (p - t) * (p - t);
            ss_tot += (t - m) * (t - m);
        }
        ss_res += sq;
        gap += sq.sqrt();
    }
    let n = idx.len() as f64;
    Ok(Some(TestMetrics {
        count: idx.len(),
        mse: ss_res / (n * k as f64),
        r2: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NAN },
        mean_l2_gap: gap / n,
    }))
}
