use crate::error::{Error, Result};
use crate::nn::{Gradients, Group, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam over one selection of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    /// Completed updates.
    pub step: u64,
    selection: Vec<ParamId>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, selection: Vec<ParamId>, config: AdamConfig) -> Self {
        let m: Vec<Vec<f64>> = selection.iter().map(|&p| vec![0.0; store.tensor(p).len()]).collect();
        let v = m.clone();
        Self { config, step: 0, selection, m, v }
    }

    /// Optimizer over every parameter of a trainable group.
    pub fn for_group(store: &ParamStore, group: Group, config: AdamConfig) -> Result<Self> {
        if group == Group::Frozen {
            return Err(Error::Config("the FROZEN group is never optimized".into()));
        }
        Ok(Self::new(store, store.ids_in(group), config))
    }

    pub fn selection(&self) -> &[ParamId] {
        &self.selection
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Replaces the moment buffers (checkpoint restore). Shapes must match.
    pub fn set_moments(&mut self, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<()> {
        let ok = |bufs: &[Vec<f64>]| {
            bufs.len() == self.m.len() && bufs.iter().zip(&self.m).all(|(a, b)| a.len() == b.len())
        };
        if !ok(&m) || !ok(&v) {
            return Err(Error::Corrupt("adam moment buffers do not match the parameter selection".into()));
        }
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// Applies one update to the selected parameters only.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for &pid in &self.selection {
            if pid.0 >= grads.len() || grads.get(pid).len() != store.tensor(pid).len() {
                return Err(Error::Internal(format!(
                    "no gradient for selected parameter `{}`",
                    store.get(pid).id()
                )));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (k, &pid) in self.selection.iter().enumerate() {
            let g = grads.get(pid).values();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let w = store.tensor_mut(pid).values_mut();
            for j in 0..w.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                w[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
