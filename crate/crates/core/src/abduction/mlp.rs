use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected network with ReLU hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `(weights [out, in], bias [out])` per layer.
    layers: Vec<(Array2<f64>, Array1<f64>)>,
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct Cache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Mlp {
    /// Xavier-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-a..a));
                (weights, Array1::zeros(fan_out))
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.0.nrows())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    /// Forward pass over a batch `[batch, in]`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub(crate) fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, Cache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let mut z = h.dot(&w.t()) + b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut h, z));
        }
        (h, Cache { inputs })
    }

    /// Gradients of a scalar loss given `d loss / d output`, in layer order.
    pub(crate) fn backward(&self, cache: &Cache, grad_out: Array2<f64>) -> Vec<(Array2<f64>, Array1<f64>)> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out;
        for (i, (w, _)) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            grads.push((g.t().dot(input), g.sum_axis(Axis(0))));
            if i > 0 {
                let mut gi = g.dot(w);
                // The stored input of layer i is the ReLU output of layer i-1.
                gi.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                g = gi;
            }
        }
        grads.reverse();
        grads
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = (&mut Array2<f64>, &mut Array1<f64>)> {
        self.layers.iter_mut().map(|(w, b)| (w, b))
    }

    /// Flat parameter access (weights then bias, layer by layer), for
    /// finite-difference checks.
    pub fn param(&self, mut idx: usize) -> f64 {
        for (w, b) in &self.layers {
            if idx < w.len() {
                return w.as_slice().expect("standard layout")[idx];
            }
            idx -= w.len();
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_param(&mut self, mut idx: usize, v: f64) {
        for (w, b) in &mut self.layers {
            if idx < w.len() {
                w.as_slice_mut().expect("standard layout")[idx] = v;
                return;
            }
            idx -= w.len();
            if idx < b.len() {
                b[idx] = v;
                return;
            }
            idx -= b.len();
        }
        panic!("parameter index out of range")
    }

    pub(crate) fn flatten_grads(grads: &[(Array2<f64>, Array1<f64>)]) -> Vec<f64> {
        grads
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect()
    }
}

impl Serialize for Mlp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr: Vec<LayerRepr> = self
            .layers
            .iter()
            .map(|(w, b)| LayerRepr {
                weights: w.outer_iter().map(|r| r.to_vec()).collect(),
                bias: b.to_vec(),
            })
            .collect();
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = Vec::<LayerRepr>::deserialize(d)?;
        Mlp::from_repr(repr).map_err(serde::de::Error::custom)
    }
}

impl Mlp {
    fn from_repr(repr: Vec<LayerRepr>) -> Result<Self> {
        if repr.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        let mut layers = Vec::with_capacity(repr.len());
        for l in repr {
            let rows = l.weights.len();
            let cols = l.weights.first().map_or(0, Vec::len);
            if rows != l.bias.len() || l.weights.iter().any(|r| r.len() != cols) {
                return Err(Error::invalid("ragged layer"));
            }
            let w = Array2::from_shape_vec((rows, cols), l.weights.into_iter().flatten().collect())
                .map_err(|e| Error::invalid(e.to_string()))?;
            if let Some((prev, _)) = layers.last() {
                let prev: &Array2<f64> = prev;
                if prev.nrows() != cols {
                    return Err(Error::invalid("layer sizes do not chain"));
                }
            }
            layers.push((w, Array1::from(l.bias)));
        }
        Ok(Self { layers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    #[test]
    fn shapes_and_serde() {
        let m = Mlp::new(&[3, 5, 2], &mut seeded(1));
        assert_eq!(m.num_params(), 3 * 5 + 5 + 5 * 2 + 2);
        let y = m.forward(array![[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]].view());
        assert_eq!(y.dim(), (2, 2));
        let back: Mlp = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn param_indexing_roundtrip() {
        let mut m = Mlp::new(&[2, 3, 1], &mut seeded(2));
        for i in 0..m.num_params() {
            m.set_param(i, i as f64);
        }
        for i in 0..m.num_params() {
            assert_eq!(m.param(i), i as f64);
        }
    }

    #[test]
    fn backward_matches_finite_differences_for_sum_of_outputs() {
        let mut m = Mlp::new(&[4, 6, 6, 3], &mut seeded(3));
        let x = array![[0.3, -1.0, 2.0, 0.5], [1.0, 0.2, -0.4, 0.0]];
        let (y, cache) = m.forward_cached(x.view());
        let grads = Mlp::flatten_grads(&m.backward(&cache, Array2::ones(y.dim())));
        let h = 1e-6;
        for i in (0..m.num_params()).step_by(7) {
            let p = m.param(i);
            m.set_param(i, p + h);
            let up = m.forward(x.view()).sum();
            m.set_param(i, p - h);
            let dn = m.forward(x.view()).sum();
            m.set_param(i, p);
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - grads[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grads[i]);
        }
    }
}
