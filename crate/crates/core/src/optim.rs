//! Adam with bias correction, applied once per window.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moments for every tensor of a [`ModelParams`], in traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        let mut m = Vec::new();
        params.visit(&mut |_, _, t| m.push(Tensor::zeros(t.rows(), t.cols())));
        AdamState {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// Restores moments, e.g. from a checkpoint.
    pub fn load(&mut self, step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Result<()> {
        let shapes: Vec<_> = self.m.iter().map(Tensor::shape).collect();
        let ok = |xs: &[Tensor]| xs.len() == shapes.len() && xs.iter().zip(&shapes).all(|(t, s)| t.shape() == *s);
        if !ok(&m) || !ok(&v) {
            return Err(Error::Consistency("optimizer moments do not match the parameters".into()));
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }
}

/// One bias-corrected Adam step over every parameter.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
    let mut gs = Vec::with_capacity(state.m.len());
    grads.visit(&mut |name, _, g| gs.push((name.to_string(), g)));
    if gs.len() != state.m.len() {
        return Err(Error::Consistency(format!(
            "{} gradients for {} optimizer slots",
            gs.len(),
            state.m.len()
        )));
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let step = state.step + 1;
    let c1 = 1.0 - beta1.powi(step as i32);
    let c2 = 1.0 - beta2.powi(step as i32);
    let mut updated = Vec::with_capacity(gs.len());
    let mut failure = None;
    let mut i = 0;
    params.visit(&mut |name, _, p| {
        let (gname, g) = &gs[i];
        let (m, v) = (&state.m[i], &state.v[i]);
        i += 1;
        if failure.is_some() {
            return;
        }
        if gname != name || g.shape() != p.shape() || m.shape() != p.shape() {
            failure = Some(Error::Consistency(format!(
                "gradient {gname} {:?} does not match parameter {name} {:?}",
                g.shape(),
                p.shape()
            )));
            return;
        }
        let n = p.len();
        let (mut pn, mut mn, mut vn) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for k in 0..n {
            let gk = g.data()[k];
            let mk = beta1 * m.data()[k] + (1.0 - beta1) * gk;
            let vk = beta2 * v.data()[k] + (1.0 - beta2) * gk * gk;
            let x = p.data()[k] - lr * (mk / c1) / ((vk / c2).sqrt() + eps);
            mn.push(mk);
            vn.push(vk);
            pn.push(x);
        }
        if pn.iter().any(|x| !x.is_finite()) {
            failure = Some(Error::Numeric(format!("Adam update of {name} is not finite")));
            return;
        }
        let shape = p.shape();
        let mk = |d| Tensor::from_vec(shape.0, shape.1, d).expect("shape preserved");
        updated.push((mk(pn), mk(mn), mk(vn)));
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let mut it = updated.into_iter();
    let (mut ms, mut vs) = (Vec::new(), Vec::new());
    params.visit_mut(&mut |_, _, p| {
        let (pn, mn, vn) = it.next().expect("one update per parameter");
        *p = pn;
        ms.push(mn);
        vs.push(vn);
    });
    state.m = ms;
    state.v = vs;
    state.step = step;
    Ok(())
}
