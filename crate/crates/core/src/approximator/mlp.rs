use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone)]
struct Cache {
    /// Input of every layer (`activations[0]` is the network input).
    activations: Vec<Array2<f64>>,
    output: Array2<f64>,
}

/// Multi-layer perceptron with ReLU hidden units.
///
/// All weights and biases live in one flat vector; layer `l` stores its
/// `(in, out)` weight matrix row-major followed by its `out` biases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
    #[serde(skip)]
    cache: Option<Cache>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.widths == other.widths && self.output == other.output && self.params == other.params
    }
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Fan-in uniform initialization: every weight and bias of a layer with
    /// `n` inputs is drawn from U(-1/√n, 1/√n).
    pub fn new<R: Rng + ?Sized>(widths: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config(format!("invalid layer widths {widths:?}")));
        }
        let mut params = Vec::with_capacity(param_count(widths));
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Ok(Self { widths: widths.to_vec(), output, params, cache: None })
    }

    pub fn from_params(widths: &[usize], output: OutputActivation, params: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config(format!("invalid layer widths {widths:?}")));
        }
        if params.len() != param_count(widths) {
            return Err(Error::config(format!(
                "expected {} parameters for widths {widths:?}, got {}",
                param_count(widths),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("non-finite parameter"));
        }
        Ok(Self { widths: widths.to_vec(), output, params, cache: None })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn layer_offset(&self, layer: usize) -> usize {
        param_count(&self.widths[..=layer])
    }

    fn layer(&self, layer: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (n_in, n_out) = (self.widths[layer], self.widths[layer + 1]);
        let off = self.layer_offset(layer);
        let w = ArrayView2::from_shape((n_in, n_out), &self.params[off..off + n_in * n_out]).unwrap();
        let b = ArrayView1::from(&self.params[off + n_in * n_out..off + n_in * n_out + n_out]);
        (w, b)
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::config(format!("input has {} columns, network expects {}", x.ncols(), self.input_dim())));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<f64>, mut cache: Option<&mut Cache>) -> Array2<f64> {
        let last = self.num_layers() - 1;
        let mut a: Option<Array2<f64>> = None;
        for l in 0..=last {
            let (w, b) = self.layer(l);
            let mut z = match &a {
                Some(h) => h.dot(&w),
                None => x.dot(&w),
            };
            if l < last {
                for mut row in z.rows_mut() {
                    row.zip_mut_with(&b, |v, bias| *v = (*v + bias).max(0.0));
                }
            } else {
                z += &b;
            }
            if let Some(c) = cache.as_deref_mut() {
                c.activations.push(a.take().unwrap_or_else(|| x.to_owned()));
            }
            a = Some(if l == last && self.output == OutputActivation::Tanh { z.mapv(f64::tanh) } else { z });
        }
        a.expect("at least one layer")
    }

    /// Inference pass; does not touch the gradient cache.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(self.run(x, None))
    }

    /// Single-row convenience wrapper around [`Mlp::forward`].
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::config(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass that records the activations needed by [`Mlp::backward`].
    pub fn forward_train(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut cache = Cache {
            activations: Vec::with_capacity(self.num_layers()),
            output: Array2::zeros((0, 0)),
        };
        let out = self.run(x, Some(&mut cache));
        cache.output = out.clone();
        self.cache = Some(cache);
        Ok(out)
    }

    /// Back-propagate `grad_out = ∂L/∂output` through the last
    /// [`Mlp::forward_train`] batch. Parameter gradients are **added** to
    /// `grads` (flat, same layout as [`Mlp::params`]); the gradient with respect
    /// to the network input is returned.
    pub fn backward_into(&self, grad_out: ArrayView2<f64>, grads: &mut [f64]) -> Result<Array2<f64>> {
        self.propagate(grad_out, Some(grads))
    }

    /// Gradient with respect to the network input only.
    pub fn backward_input(&self, grad_out: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.propagate(grad_out, None)
    }

    fn propagate(&self, grad_out: ArrayView2<f64>, mut grads: Option<&mut [f64]>) -> Result<Array2<f64>> {
        let cache = self.cache.as_ref().ok_or_else(|| Error::state("backward called without a cached forward pass"))?;
        if grad_out.dim() != cache.output.dim() {
            return Err(Error::config(format!(
                "output gradient has shape {:?}, cached output has {:?}",
                grad_out.dim(),
                cache.output.dim()
            )));
        }
        if grads.as_ref().is_some_and(|g| g.len() != self.params.len()) {
            return Err(Error::config("gradient buffer has the wrong length"));
        }
        let mut delta = match self.output {
            OutputActivation::Identity => grad_out.to_owned(),
            OutputActivation::Tanh => {
                let mut d = grad_out.to_owned();
                d.zip_mut_with(&cache.output, |g, y| *g *= 1.0 - y * y);
                d
            }
        };
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let off = self.layer_offset(l);
            if let Some(grads) = grads.as_deref_mut() {
                let input = &cache.activations[l];
                let gw = input.t().dot(&delta);
                let gb = delta.sum_axis(Axis(0));
                let slot = &mut grads[off..off + n_in * n_out];
                for (g, v) in slot.iter_mut().zip(gw.iter()) {
                    *g += v;
                }
                let slot = &mut grads[off + n_in * n_out..off + n_in * n_out + n_out];
                for (g, v) in slot.iter_mut().zip(gb.iter()) {
                    *g += v;
                }
            }
            let (w, _) = self.layer(l);
            let mut back = delta.dot(&w.t());
            if l > 0 {
                back.zip_mut_with(&cache.activations[l], |g, h| {
                    if *h <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            delta = back;
        }
        Ok(delta)
    }

    /// Fresh parameter gradient for `grad_out` plus the input gradient.
    pub fn backward(&self, grad_out: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
        let mut grads = vec![0.0; self.params.len()];
        let input_grad = self.backward_into(grad_out, &mut grads)?;
        Ok((grads, input_grad))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Weight matrix and bias vector of layer `l` as owned arrays.
    pub fn layer_arrays(&self, l: usize) -> (Array2<f64>, Array1<f64>) {
        let (w, b) = self.layer(l);
        (w.to_owned(), b.to_owned())
    }
}
