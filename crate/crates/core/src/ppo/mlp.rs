use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Fully connected network with `tanh` hidden layers and a linear output.
///
/// Parameters live in one flat vector; layer `l` stores its `out x in`
/// row-major weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_cached`], input first.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Orthonormal rows (or columns, when `rows > cols`) scaled by `gain`.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while vecs.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for u in &vecs {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            vecs.push(v);
        }
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            w[r * cols + c] = gain * if rows <= cols { vecs[r][c] } else { vecs[c][r] };
        }
    }
    w
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Orthogonal weights, zero biases; hidden layers use `hidden_gain`.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let mut off = 0;
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (i, o) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let w = orthogonal(o, i, gain, rng);
            net.params[off..off + o * i].copy_from_slice(&w);
            off += o * i + o;
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn param_len(&self) -> usize {
        self.params.len()
    }

    /// Sets the last layer's weights and biases to zero.
    pub fn zero_output_layer(&mut self) {
        let l = self.sizes.len() - 2;
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let len = self.params.len();
        self.params[len - (o * i + o)..].iter_mut().for_each(|p| *p = 0.0);
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            cur = self.layer(l, off, &cur, l + 1 < layers);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        cur
    }

    fn layer(&self, l: usize, off: usize, x: &[f64], hidden: bool) -> Vec<f64> {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[off..off + o * i];
        let b = &self.params[off + o * i..off + o * i + o];
        (0..o)
            .map(|r| {
                let z = b[r] + w[r * i..(r + 1) * i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut MlpCache) {
        cache.activations.clear();
        cache.activations.push(x.to_vec());
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let next = self.layer(l, off, cache.activations.last().expect("input pushed"), l + 1 < layers);
            cache.activations.push(next);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            if l + 1 < layers {
                // tanh' = 1 - tanh^2 on the stored activation.
                for (d, a) in delta.iter_mut().zip(&cache.activations[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &cache.activations[l];
            for r in 0..o {
                let g = &mut grad[off + r * i..off + (r + 1) * i];
                for (gw, x) in g.iter_mut().zip(input) {
                    *gw += delta[r] * x;
                }
                grad[off + o * i + r] += delta[r];
            }
            if l > 0 {
                let w = &self.params[off..off + o * i];
                let mut prev = vec![0.0; i];
                for r in 0..o {
                    for (p, wv) in prev.iter_mut().zip(&w[r * i..(r + 1) * i]) {
                        *p += delta[r] * wv;
                    }
                }
                delta = prev;
            }
        }
    }
}
