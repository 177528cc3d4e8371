//! Small fully connected networks on flat parameter vectors.

use rand::Rng;

use crate::error::{Error, Result};

/// Layer sizes of a tanh MLP with a linear output layer.
///
/// Parameters are stored flat, layer by layer, as the row-major weight
/// matrix (`out × in`) followed by the bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds at least the input")
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for w in self.sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            p.extend((0..w[0] * w[1]).map(|_| rng.random_range(-limit..limit)));
            p.extend(std::iter::repeat_n(0.0, w[1]));
        }
        p
    }

    fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Internal(format!(
                "parameter vector has {} entries, network needs {}",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> ForwardCache {
        debug_assert_eq!(params.len(), self.param_count());
        debug_assert_eq!(input.len(), self.input_dim());
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[offset..offset + n_in * n_out];
            let b = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &acts[l];
            let mut y: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(y);
            offset += n_in * n_out + n_out;
        }
        ForwardCache { acts }
    }

    pub fn output(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        self.forward(params, input).acts.pop().expect("non-empty")
    }

    /// Backpropagates `d_out`, adding the parameter gradient into `grad` when
    /// given, and returns the gradient with respect to the input.
    pub fn backward(&self, params: &[f64], cache: &ForwardCache, d_out: &[f64], mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut o = 0;
        for w in self.sizes.windows(2) {
            offsets.push(o);
            o += w[0] * w[1] + w[1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                // Hidden layers store tanh outputs.
                for (d, a) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let off = offsets[l];
            let x = &cache.acts[l];
            if let Some(g) = grad.as_deref_mut() {
                for (out, &d) in delta.iter().enumerate() {
                    let row = &mut g[off + out * n_in..off + (out + 1) * n_in];
                    for (gw, xi) in row.iter_mut().zip(x) {
                        *gw += d * xi;
                    }
                    g[off + n_in * n_out + out] += d;
                }
            }
            let w = &params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (out, &d) in delta.iter().enumerate() {
                for (p, wi) in prev.iter_mut().zip(&w[out * n_in..(out + 1) * n_in]) {
                    *p += d * wi;
                }
            }
            delta = prev;
        }
        delta
    }

    pub fn checked_forward(&self, params: &[f64], input: &[f64]) -> Result<ForwardCache> {
        self.check(params)?;
        if input.len() != self.input_dim() {
            return Err(Error::Internal("input width mismatch".into()));
        }
        Ok(self.forward(params, input))
    }
}

/// Adam optimiser state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// `target ← τ·source + (1-τ)·target`.
pub fn soft_update(target: &mut [f64], source: &[f64], tau: f64) -> Result<()> {
    if target.len() != source.len() {
        return Err(Error::Internal(format!(
            "soft update between {} and {} parameters",
            target.len(),
            source.len()
        )));
    }
    if tau == 1.0 {
        target.copy_from_slice(source);
        return Ok(());
    }
    for (t, s) in target.iter_mut().zip(source) {
        *t = tau * s + (1.0 - tau) * *t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn parameter_count() {
        let net = Mlp::new(vec![1, 64, 64, 2]).unwrap();
        assert_eq!(net.param_count(), 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = Mlp::new(vec![2, 5, 4, 1]).unwrap();
        let p = net.init(&mut substream(1, &[0]));
        let x = [0.3, -0.7];
        let cache = net.forward(&p, &x);
        let mut g = vec![0.0; p.len()];
        let dx = net.backward(&p, &cache, &[1.0], Some(&mut g));
        let h = 1e-6;
        for k in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[k] += h;
            b[k] -= h;
            let fd = (net.output(&a, &x)[0] - net.output(&b, &x)[0]) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8, "param {k}: {fd} vs {}", g[k]);
        }
        for i in 0..2 {
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            let fd = (net.output(&p, &a)[0] - net.output(&p, &b)[0]) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn soft_update_cases() {
        let src = vec![1.0; 3];
        let mut t = vec![0.0; 3];
        soft_update(&mut t, &src, 0.0).unwrap();
        assert_eq!(t, vec![0.0; 3]);
        soft_update(&mut t, &src, 1e-3).unwrap();
        assert!(t.iter().all(|v| (v - 0.001).abs() < 1e-18));
        soft_update(&mut t, &src, 1.0).unwrap();
        assert_eq!(t, src);
        assert!(matches!(soft_update(&mut t, &[1.0], 0.5), Err(Error::Internal(_))));
    }

    #[test]
    fn soft_update_converges_geometrically() {
        let src = vec![2.0, -1.0];
        let mut t = vec![0.0, 0.0];
        let tau = 0.01;
        let dist = |t: &[f64]| ((t[0] - 2.0f64).powi(2) + (t[1] + 1.0f64).powi(2)).sqrt();
        let mut prev = dist(&t);
        for _ in 0..500 {
            soft_update(&mut t, &src, tau).unwrap();
            let d = dist(&t);
            assert!((d / prev - (1.0 - tau)).abs() < 1e-9);
            prev = d;
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut p = vec![3.0];
        let mut opt = Adam::new(1, 0.9, 0.999, 1e-8);
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0)];
            opt.step(&mut p, &g, 0.01);
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }
}
