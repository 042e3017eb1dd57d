use crate::error::{Error, Result};

use super::network::{Gradients, ModelParams};

/// `lr0 · e^(k·t)`; decays for negative `k`.
pub fn lr_schedule(lr0: f64, k: f64, t: u64) -> f64 {
    lr0 * (k * t as f64).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. Rejects non-finite gradients before touching the parameters.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.tensors.len() || state.m.len() != params.tensors.len() {
        return Err(Error::Shape(format!(
            "{} gradient tensors and {} moment tensors for {} parameter tensors",
            grads.len(),
            state.m.len(),
            params.tensors.len()
        )));
    }
    for (g, p) in grads.iter().zip(&params.tensors) {
        if g.data.len() != p.data.len() {
            return Err(Error::Shape(format!(
                "gradient for {} has {} values, parameter has {}",
                p.name,
                g.data.len(),
                p.data.len()
            )));
        }
        if g.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in tensor {}", p.name)));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (i, (p, g)) in params.tensors.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.data.len() {
            let gj = g.data[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p.data[j] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    params.bump();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::InputShape;

    fn tiny() -> ModelParams {
        ModelParams::init(InputShape::new(4, 4, 1).unwrap(), 0.0, 3).unwrap()
    }

    fn filled(params: &ModelParams, value: f64) -> Gradients {
        let mut g = params.zero_grads();
        g.iter_mut().for_each(|t| t.data.iter_mut().for_each(|x| *x = value));
        g
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_schedule(0.001, -0.1, 0), 0.001);
        assert_eq!(lr_schedule(0.001, 0.0, 57), 0.001);
        assert!((lr_schedule(0.001, -0.1, 10) - 3.6788e-4).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = tiny();
        let before = p.tensors.clone();
        let mut s = AdamState::new(&p);
        let g = p.zero_grads();
        adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        assert_eq!(p.tensors, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_matches_hand_formula() {
        let mut p = tiny();
        let before = p.tensors.clone();
        let g = filled(&p, -0.37);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        // m̂ = g and v̂ = g² after bias correction
        let expected = -0.01 * -0.37 / (0.37 + 1e-8);
        for (a, b) in p.tensors.iter().zip(&before) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let mut p = tiny();
        let g = filled(&p, 2.5);
        let mut s = AdamState::new(&p);
        let lr = 0.003;
        let mut last = 0.0;
        for _ in 0..100 {
            let before = p.tensors[0].data[0];
            adam_step(&mut p, &g, &mut s, lr).unwrap();
            last = before - p.tensors[0].data[0];
        }
        assert!((last - lr).abs() / lr < 0.01);
    }

    #[test]
    fn non_finite_gradient_is_named() {
        let mut p = tiny();
        let before = p.clone();
        let mut g = p.zero_grads();
        g[4].data[0] = f64::NAN;
        let mut s = AdamState::new(&p);
        match adam_step(&mut p, &g, &mut s, 0.01) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("fc1.weight")),
            other => panic!("expected numeric error, got {other:?}"),
        }
        assert_eq!(p, before);
    }
}
