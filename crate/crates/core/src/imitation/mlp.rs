use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense layer, weights row-major `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-a..a)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *y = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Per-feature affine input normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    /// Mean and population standard deviation per feature; constant features
    /// get unit scale.
    pub fn fit(rows: &[Vec<f64>], dim: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for i in 0..dim {
                var[i] += (r[i] - mean[i]).powi(2) / n;
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let s = v.sqrt();
                if s > 1e-9 * (1.0 + m.abs()) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = (x[i] - self.mean[i]) / self.scale[i];
        }
    }
}

/// Feedforward network with tanh hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub normalization: Normalization,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 1e-3,
            batch: 64,
            seed: 0,
        }
    }
}

impl Mlp {
    pub fn new<R: Rng>(sizes: &[usize], normalization: Normalization, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("network needs at least an input and an output size"));
        }
        if normalization.mean.len() != sizes[0] || normalization.scale.len() != sizes[0] {
            return Err(Error::DimensionMismatch {
                expected: sizes[0],
                found: normalization.mean.len(),
            });
        }
        let layers = sizes.windows(2).map(|w| Layer::glorot(w[0], w[1], rng)).collect();
        Ok(Self { layers, normalization })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for w in self.layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::DimensionMismatch {
                    expected: w[0].outputs,
                    found: w[1].inputs,
                });
            }
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::invalid("layer parameter count does not match its shape"));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network weights"));
            }
        }
        let n = self.input_dim();
        if self.normalization.mean.len() != n || self.normalization.scale.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.normalization.mean.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; x.len()];
        self.normalization.apply(x, &mut a);
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs];
            layer.forward(&a, &mut z);
            if k + 1 < self.layers.len() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        a
    }

    /// Mean squared error over all outputs.
    pub fn loss(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            let out = self.forward(x);
            total += out.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        total / (inputs.len().max(1) * self.output_dim()) as f64
    }

    /// Mini-batch Adam on the mean squared error. Returns the training-set
    /// loss before the first epoch followed by the mean mini-batch loss of
    /// each epoch.
    pub fn train(&mut self, inputs: &[Vec<f64>], targets: &[Vec<f64>], config: &TrainConfig) -> Result<Vec<f64>> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        if inputs.iter().any(|x| x.len() != self.input_dim()) || targets.iter().any(|y| y.len() != self.output_dim()) {
            return Err(Error::invalid("sample dimensions do not match the network"));
        }
        if config.batch == 0 || !(config.lr > 0.0) {
            return Err(Error::invalid("batch size and learning rate must be positive"));
        }
        let mut losses = vec![self.loss(inputs, targets)];
        if inputs.is_empty() || config.epochs == 0 {
            return Ok(losses);
        }
        let normalized: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| {
                let mut z = vec![0.0; x.len()];
                self.normalization.apply(x, &mut z);
                z
            })
            .collect();
        let mut params = Params::from_layers(&self.layers);
        let mut adam = Adam::new(&params, config.lr);
        let mut ws = Workspace::default();
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let per_sample = self.output_dim() as f64;
        for epoch in 0..config.epochs {
            let mut rng = crate::seed::rng(config.seed, "shuffle", epoch as u64);
            // Fisher-Yates
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut sse = 0.0;
            for batch in order.chunks(config.batch) {
                ws.load(batch, &normalized, targets);
                let (batch_sse, mut grads) = params.gradient(&mut ws);
                sse += batch_sse;
                grads.scale(1.0 / (batch.len() as f64 * per_sample));
                adam.update(&mut params, &grads);
            }
            losses.push(sse / (inputs.len() as f64 * per_sample));
        }
        params.store(&mut self.layers);
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("training loss"));
        }
        Ok(losses)
    }
}

/// Training-time parameters; `wt` mirrors `w` transposed.
struct Params {
    w: Vec<DMatrix<f64>>,
    wt: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
}

impl Params {
    fn from_layers(layers: &[Layer]) -> Self {
        let w: Vec<DMatrix<f64>> = layers
            .iter()
            .map(|l| DMatrix::from_row_slice(l.outputs, l.inputs, &l.weights))
            .collect();
        Self {
            wt: w.iter().map(|m| m.transpose()).collect(),
            b: layers.iter().map(|l| DVector::from_column_slice(&l.bias)).collect(),
            w,
        }
    }

    fn store(&self, layers: &mut [Layer]) {
        for (k, l) in layers.iter_mut().enumerate() {
            // wt is column-major in × out, i.e. w row-major
            l.weights.copy_from_slice(self.wt[k].as_slice());
            l.bias.copy_from_slice(self.b[k].as_slice());
        }
    }

    fn sync_transposes(&mut self) {
        for (w, wt) in self.w.iter().zip(self.wt.iter_mut()) {
            w.transpose_to(wt);
        }
    }

    /// Sum of squared errors over the loaded batch and its gradient.
    fn gradient(&self, ws: &mut Workspace) -> (f64, Grads) {
        let nl = self.w.len();
        let rows = ws.acts[0].nrows();
        ws.acts.truncate(1);
        for k in 0..nl {
            let mut z = DMatrix::zeros(rows, self.w[k].nrows());
            z.gemm(1.0, &ws.acts[k], &self.wt[k], 0.0);
            for (j, mut col) in z.column_iter_mut().enumerate() {
                col.add_scalar_mut(self.b[k][j]);
            }
            if k + 1 < nl {
                z.apply(|v| *v = v.tanh());
            }
            ws.acts.push(z);
        }
        let mut delta = &ws.acts[nl] - &ws.targets;
        let sse = delta.norm_squared();
        delta *= 2.0;
        let mut grads = Grads {
            w: Vec::with_capacity(nl),
            b: Vec::with_capacity(nl),
        };
        for k in (0..nl).rev() {
            let mut gw = DMatrix::zeros(self.w[k].nrows(), self.w[k].ncols());
            gw.gemm_tr(1.0, &delta, &ws.acts[k], 0.0);
            let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            grads.w.push(gw);
            grads.b.push(gb);
            if k > 0 {
                let mut prev = DMatrix::zeros(rows, self.w[k].ncols());
                prev.gemm(1.0, &delta, &self.w[k], 0.0);
                prev.zip_apply(&ws.acts[k], |p, a| *p *= 1.0 - a * a);
                delta = prev;
            }
        }
        grads.w.reverse();
        grads.b.reverse();
        (sse, grads)
    }
}

#[derive(Default)]
struct Workspace {
    /// Batch inputs followed by each layer's activations, one row per sample.
    acts: Vec<DMatrix<f64>>,
    targets: DMatrix<f64>,
}

impl Workspace {
    fn load(&mut self, batch: &[usize], inputs: &[Vec<f64>], targets: &[Vec<f64>]) {
        let (nin, nout) = (inputs[batch[0]].len(), targets[batch[0]].len());
        self.acts.truncate(1);
        if self.acts.is_empty() || self.acts[0].nrows() != batch.len() {
            self.acts = vec![DMatrix::zeros(batch.len(), nin)];
            self.targets = DMatrix::zeros(batch.len(), nout);
        }
        for (r, &s) in batch.iter().enumerate() {
            for c in 0..nin {
                self.acts[0][(r, c)] = inputs[s][c];
            }
            for c in 0..nout {
                self.targets[(r, c)] = targets[s][c];
            }
        }
    }
}

struct Grads {
    w: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
}

impl Grads {
    fn scale(&mut self, s: f64) {
        self.w.iter_mut().for_each(|m| *m *= s);
        self.b.iter_mut().for_each(|v| *v *= s);
    }
}

struct Adam {
    lr: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(p: &Params, lr: f64) -> Self {
        let zeros = || Grads {
            w: p.w.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect(),
            b: p.b.iter().map(|v| DVector::zeros(v.len())).collect(),
        };
        Self {
            lr,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    fn update(&mut self, p: &mut Params, g: &Grads) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let lr = self.lr;
        let step = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        };
        for k in 0..p.w.len() {
            step(p.w[k].as_mut_slice(), g.w[k].as_slice(), self.m.w[k].as_mut_slice(), self.v.w[k].as_mut_slice());
            step(p.b[k].as_mut_slice(), g.b[k].as_slice(), self.m.b[k].as_mut_slice(), self.v.b[k].as_mut_slice());
        }
        p.sync_transposes();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(sizes: &[usize], seed: u64) -> Mlp {
        let mut rng = crate::seed::rng(seed, "init", 0);
        Mlp::new(sizes, Normalization::identity(sizes[0]), &mut rng).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = net(&[3, 4, 4, 2], 1);
        let x = vec![vec![0.3, -0.7, 1.1], vec![-0.2, 0.4, 0.9]];
        let y = vec![vec![0.5, -0.2], vec![0.1, 0.3]];
        let sse = |m: &Mlp| {
            x.iter()
                .zip(&y)
                .map(|(x, y)| m.forward(x).iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum::<f64>()
        };
        let params = Params::from_layers(&m.layers);
        let mut ws = Workspace::default();
        ws.load(&[0, 1], &x, &y);
        let (value, grads) = params.gradient(&mut ws);
        assert!((value - sse(&m)).abs() < 1e-12);
        for k in 0..m.layers.len() {
            let (rows, cols) = (m.layers[k].outputs, m.layers[k].inputs);
            for i in 0..rows * cols {
                let h = 1e-6;
                let mut up = m.clone();
                let mut dn = m.clone();
                up.layers[k].weights[i] += h;
                dn.layers[k].weights[i] -= h;
                let fd = (sse(&up) - sse(&dn)) / (2.0 * h);
                let g = grads.w[k][(i / cols, i % cols)];
                assert!((fd - g).abs() < 1e-6, "layer {k} weight {i}: {fd} vs {g}");
            }
            for i in 0..rows {
                let h = 1e-6;
                let mut up = m.clone();
                let mut dn = m.clone();
                up.layers[k].bias[i] += h;
                dn.layers[k].bias[i] -= h;
                let fd = (sse(&up) - sse(&dn)) / (2.0 * h);
                assert!((fd - grads.b[k][i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn parameters_round_trip_through_training_layout() {
        let m = net(&[3, 5, 2], 6);
        let mut layers = m.layers.clone();
        layers.iter_mut().for_each(|l| l.weights.fill(0.0));
        Params::from_layers(&m.layers).store(&mut layers);
        assert_eq!(layers, m.layers);
    }

    #[test]
    fn single_pair_is_memorized() {
        let mut m = net(&[4, 16, 16, 2], 2);
        let x = vec![vec![0.1, 0.2, -0.3, 0.4]; 64];
        let y = vec![vec![0.7, -0.4]; 64];
        let losses = m
            .train(&x, &y, &TrainConfig { epochs: 400, ..Default::default() })
            .unwrap();
        let out = m.forward(&x[0]);
        assert!((out[0] - 0.7).abs() < 1e-3 && (out[1] + 0.4).abs() < 1e-3, "{out:?}");
        assert!(losses.last().unwrap() < &losses[0]);
    }

    #[test]
    fn zero_epochs_leave_weights() {
        let mut m = net(&[2, 3, 1], 3);
        let before = m.clone();
        m.train(&[vec![1.0, 2.0]], &[vec![3.0]], &TrainConfig { epochs: 0, ..Default::default() })
            .unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn training_is_reproducible() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 200.0, (i as f64).sin()]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|v| vec![v[0] - 0.5 * v[1]]).collect();
        let mut a = net(&[2, 8, 8, 1], 4);
        let mut b = a.clone();
        let cfg = TrainConfig { epochs: 5, seed: 9, ..Default::default() };
        assert_eq!(a.train(&x, &y, &cfg).unwrap(), b.train(&x, &y, &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn normalization_handles_constant_features() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let n = Normalization::fit(&rows, 2);
        assert_eq!(n.mean, vec![2.0, 5.0]);
        assert_eq!(n.scale, vec![1.0, 1.0]);
        let rows = vec![vec![0.0, 5.0], vec![4.0, 5.0]];
        assert_eq!(Normalization::fit(&rows, 2).scale, vec![2.0, 1.0]);
    }
}
