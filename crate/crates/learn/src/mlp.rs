//! Fully connected networks with tanh hidden layers and a linear output,
//! parameters kept in one flat vector.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::LearnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass: `acts[0]` is the input and
/// `acts[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Tape {
    acts: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("tape holds at least the input")
    }
}

impl Mlp {
    /// All-zero network with layer widths `sizes` (input first).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        }
    }

    /// Orthogonal weights scaled by `hidden_gain` (hidden layers) and
    /// `output_gain` (last layer); zero biases.
    pub fn orthogonal<R: Rng>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(sizes);
        let layers = m.layer_count();
        for l in 0..layers {
            let (n_in, n_out) = (m.sizes[l], m.sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(n_out, n_in, rng);
            let off = m.layer_start(l);
            for r in 0..n_out {
                for c in 0..n_in {
                    m.params[off + r * n_in + c] = gain * w[(r, c)];
                }
            }
        }
        m
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, LearnError> {
        let m = Self::zeros(sizes);
        if params.len() != m.params.len() {
            return Err(LearnError::Shape(format!(
                "expected {} parameters for {:?}, got {}",
                m.params.len(),
                sizes,
                params.len()
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layer_start(&self, layer: usize) -> usize {
        self.sizes.windows(2).take(layer).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let s = self.layer_start(layer);
        ArrayView2::from_shape((n_out, n_in), &self.params[s..s + n_in * n_out]).unwrap()
    }

    fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let s = self.layer_start(layer) + n_in * n_out;
        ArrayView1::from(&self.params[s..s + n_out])
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), LearnError> {
        if x.ncols() != self.input_dim() {
            return Err(LearnError::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Batch forward pass; one row per sample.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LearnError> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for l in 0..self.layer_count() {
            h = self.layer(&h.view(), l);
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        let x = ArrayView2::from_shape((1, x.len()), x).map_err(|e| LearnError::Shape(e.to_string()))?;
        Ok(self.forward(x)?.into_raw_vec_and_offset().0)
    }

    fn layer(&self, x: &ArrayView2<f64>, l: usize) -> Array2<f64> {
        let mut z = x.dot(&self.weight(l).t());
        z += &self.bias(l);
        if l + 1 < self.layer_count() {
            z.mapv_inplace(f64::tanh);
        }
        z
    }

    pub fn forward_tape(&self, x: ArrayView2<f64>) -> Result<Tape, LearnError> {
        self.check_input(&x)?;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_owned());
        for l in 0..self.layer_count() {
            let next = self.layer(&acts[l].view(), l);
            acts.push(next);
        }
        Ok(Tape { acts })
    }

    /// Reverse pass for a scalar loss whose gradient with respect to the
    /// network output is `grad_out`. Returns the parameter gradient (same
    /// layout as `params`) and the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, grad_out: ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut g = grad_out.to_owned();
        for l in (0..self.layer_count()).rev() {
            if l + 1 < self.layer_count() {
                // tanh' = 1 - tanh²
                g.zip_mut_with(&tape.acts[l + 1], |gi, &h| *gi *= 1.0 - h * h);
            }
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let s = self.layer_start(l);
            let dw = g.t().dot(&tape.acts[l]);
            for (dst, v) in grad[s..s + n_in * n_out].iter_mut().zip(dw.iter()) {
                *dst = *v;
            }
            let db = g.sum_axis(Axis(0));
            for (dst, v) in grad[s + n_in * n_out..s + n_in * n_out + n_out].iter_mut().zip(db.iter()) {
                *dst = *v;
            }
            g = g.dot(&self.weight(l));
        }
        (grad, g)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

fn orthogonal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix makes the distribution uniform over orthogonal matrices
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

/// Stack rows into a batch matrix.
pub fn batch(rows: &[&[f64]]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut a = Array2::zeros((rows.len(), cols));
    for (i, r) in rows.iter().enumerate() {
        a.row_mut(i).assign(&ArrayView1::from(*r));
    }
    a
}

/// Column of a single-output network as a vector.
pub fn column(a: &Array2<f64>, j: usize) -> Array1<f64> {
    a.column(j).to_owned()
}
