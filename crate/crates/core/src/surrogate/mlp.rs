//! Dense tanh network with hand-written reverse mode.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `out × in`) followed by the bias vector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Layer widths including input and output, e.g. `[10, 64, 64, 6]`.
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `acts[0]` is the input; `acts[l]` the output of layer `l`
    /// (post-tanh for hidden layers, linear for the last).
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds the input at least")
    }
}

impl Mlp {
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "need input and output widths");
        let n = Self::param_count(dims);
        Self { dims: dims.to_vec(), params: vec![0.0; n] }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut m = Self::zeros(dims);
        let mut off = 0;
        for l in 0..m.layers() {
            let (i, o) = (m.dims[l], m.dims[l + 1]);
            let limit = (6.0 / (i + o) as f64).sqrt();
            for w in &mut m.params[off..off + i * o] {
                *w = rng.random_range(-limit..limit);
            }
            off += i * o + o;
        }
        m
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Option<Self> {
        (dims.len() >= 2 && params.len() == Self::param_count(dims))
            .then(|| Self { dims: dims.to_vec(), params })
    }

    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of layer `l`'s weight block in the flat parameter vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.dims[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = self.layer_offset(l);
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        (&self.params[off..off + i * o], &self.params[off + i * o..off + i * o + o])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let off = self.layer_offset(l);
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        let (w, rest) = self.params[off..off + i * o + o].split_at_mut(i * o);
        (w, rest)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).acts.pop().expect("non-empty cache")
    }

    pub fn forward_cached(&self, x: &[f64]) -> MlpCache {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(x.to_vec());
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (w, b) = self.layer(l);
            let input = &acts[l];
            let n_in = input.len();
            let mut out = b.to_vec();
            for (j, o) in out.iter_mut().enumerate() {
                let row = &w[j * n_in..(j + 1) * n_in];
                *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if l != last {
                for o in &mut out {
                    *o = o.tanh();
                }
            }
            acts.push(out);
        }
        MlpCache { acts }
    }

    /// Reverse pass for the output cotangent `gy`. Returns the input
    /// gradient and, when `param_grads` is given, accumulates the parameter
    /// gradient into it.
    pub fn backward(&self, cache: &MlpCache, gy: &[f64], mut param_grads: Option<&mut [f64]>) -> Vec<f64> {
        assert_eq!(gy.len(), self.output_dim(), "cotangent dimension");
        let mut g = gy.to_vec();
        for l in (0..self.layers()).rev() {
            let off = self.layer_offset(l);
            let (w, _) = self.layer(l);
            let input = &cache.acts[l];
            let n_in = input.len();
            if let Some(pg) = param_grads.as_deref_mut() {
                let (gw, gb) = pg[off..off + n_in * g.len() + g.len()].split_at_mut(n_in * g.len());
                for (j, gj) in g.iter().enumerate() {
                    if *gj == 0.0 {
                        continue;
                    }
                    for (gwi, xi) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(input) {
                        *gwi += gj * xi;
                    }
                    gb[j] += gj;
                }
            }
            let mut gin = vec![0.0; n_in];
            for (j, gj) in g.iter().enumerate() {
                if *gj == 0.0 {
                    continue;
                }
                for (gi, wi) in gin.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                    *gi += gj * wi;
                }
            }
            if l > 0 {
                // through the tanh of the previous layer: d tanh = 1 - tanh²
                for (gi, a) in gin.iter_mut().zip(input) {
                    *gi *= 1.0 - a * a;
                }
            }
            g = gin;
        }
        g
    }
}
