//! Named parameter store with Adam updates and Xavier initialization.

use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::rng::RngState;
use crate::tensor::DenseTensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

struct ParamEntry {
    name: String,
    tensor: DenseTensor,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Ordered map from names to trainable tensors, plus Adam moment state.
/// Iteration order is registration order, which keeps serialized layouts
/// and update sequences deterministic.
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
    step: u64,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            step: 0,
        }
    }

    /// Register a gradient-tracking tensor under a unique name. The store
    /// keeps a handle to the same storage, so optimizer updates are visible
    /// through every clone of the tensor.
    pub fn register(&mut self, name: &str, tensor: DenseTensor) -> Result<()> {
        if !tensor.requires_grad() {
            return Err(TensorError::Contract(format!(
                "parameter {name} must track gradients"
            )));
        }
        if self.index.contains_key(name) {
            return Err(TensorError::Contract(format!(
                "parameter {name} registered twice"
            )));
        }
        let n = tensor.len();
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tensor,
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&DenseTensor> {
        self.index.get(name).map(|&i| &self.entries[i].tensor)
    }

    /// Parameters in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseTensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.tensor))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// Number of completed optimizer steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&self) {
        for e in &self.entries {
            e.tensor.zero_grad();
        }
    }

    /// One Adam step with decoupled weight decay: each parameter first
    /// shrinks by `lr * weight_decay * theta`, then moves by the
    /// bias-corrected Adam delta. Every parameter must carry a gradient.
    pub fn adam_step(&mut self, lr: f64, weight_decay: f64) -> Result<()> {
        if !(lr.is_finite() && lr >= 0.0) || !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(TensorError::Contract(
                "adam_step: lr and weight_decay must be finite and non-negative".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for e in &mut self.entries {
            let grad = e.tensor.grad().ok_or_else(|| {
                TensorError::Contract(format!("adam_step: parameter {} has no gradient", e.name))
            })?;
            let mut theta = e.tensor.to_vec();
            for i in 0..theta.len() {
                theta[i] -= lr * weight_decay * theta[i];
                e.m[i] = ADAM_BETA1 * e.m[i] + (1.0 - ADAM_BETA1) * grad[i];
                e.v[i] = ADAM_BETA2 * e.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                let m_hat = e.m[i] / bc1;
                let v_hat = e.v[i] / bc2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
            e.tensor.set_data(theta)?;
        }
        Ok(())
    }
}

/// Xavier (Glorot) uniform initialization for a rank-2 weight: entries drawn
/// uniformly from `[-b, b]` with `b = sqrt(6 / (rows + cols))`. Returns a
/// gradient-tracking tensor. Identical seeds yield identical draws.
pub fn xavier_init(shape: &[usize], rng: &mut RngState) -> Result<DenseTensor> {
    if shape.len() != 2 {
        return Err(TensorError::Contract(format!(
            "xavier_init requires a rank-2 shape, got {shape:?}"
        )));
    }
    let (rows, cols) = (shape[0], shape[1]);
    if rows == 0 || cols == 0 {
        return Err(TensorError::Dimension("xavier_init with a zero extent".into()));
    }
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = rng.uniform_vec(rows * cols, -bound, bound);
    DenseTensor::parameter(data, shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_respects_bound_and_rank() {
        let mut rng = RngState::new(3);
        let w = xavier_init(&[4, 4], &mut rng).unwrap();
        let bound = (6.0_f64 / 8.0).sqrt();
        for &v in w.data().iter() {
            assert!(v.abs() <= bound, "|{v}| exceeds xavier bound {bound}");
        }
        assert!(xavier_init(&[4], &mut rng).is_err());
        assert!(xavier_init(&[2, 2, 2], &mut rng).is_err());
    }

    #[test]
    fn xavier_same_seed_identical() {
        let a = xavier_init(&[5, 7], &mut RngState::new(11)).unwrap();
        let b = xavier_init(&[5, 7], &mut RngState::new(11)).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn xavier_monte_carlo_variance() {
        // Uniform on [-b, b] has variance b^2/3 = 2/(rows+cols).
        let mut rng = RngState::new(42);
        let rows = 250;
        let cols = 400;
        let w = xavier_init(&[rows, cols], &mut rng).unwrap();
        let n = (rows * cols) as f64;
        let mean: f64 = w.data().iter().sum::<f64>() / n;
        let var: f64 = w.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let expected = 2.0 / (rows + cols) as f64;
        let rel = (var - expected).abs() / expected;
        assert!(rel < 0.05, "empirical variance {var} vs expected {expected} (rel {rel})");
    }

    #[test]
    fn adam_first_step_matches_hand_calculation() {
        // theta=1, g=1, lr=0.1, wd=0: bias-corrected m_hat=v_hat=1, so the
        // first step moves theta to 1 - 0.1/(1 + eps) ~ 0.9.
        let theta = DenseTensor::parameter(vec![1.0], &[1]).unwrap();
        let mut store = ParamStore::new();
        store.register("theta", theta.clone()).unwrap();
        theta.accumulate_grad(&[1.0]).unwrap();
        store.adam_step(0.1, 0.0).unwrap();
        assert!((theta.at(0) - 0.9).abs() < 1e-6, "got {}", theta.at(0));
    }

    #[test]
    fn adam_zero_grad_only_decays() {
        // With g=0 the Adam delta is exactly zero, so the update reduces to
        // the decoupled shrink theta * (1 - lr*wd) per step.
        let theta = DenseTensor::parameter(vec![2.0], &[1]).unwrap();
        let mut store = ParamStore::new();
        store.register("theta", theta.clone()).unwrap();
        theta.accumulate_grad(&[0.0]).unwrap();
        store.adam_step(1e-4, 0.1).unwrap();
        let expected = 2.0 * (1.0 - 1e-5);
        assert!((theta.at(0) - expected).abs() < 1e-15, "got {}", theta.at(0));
    }

    #[test]
    fn adam_missing_grad_is_an_error() {
        let theta = DenseTensor::parameter(vec![1.0], &[1]).unwrap();
        let mut store = ParamStore::new();
        store.register("theta", theta).unwrap();
        assert!(store.adam_step(0.1, 0.0).is_err());
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut store = ParamStore::new();
        store
            .register("w", DenseTensor::parameter(vec![1.0], &[1]).unwrap())
            .unwrap();
        let again = store.register("w", DenseTensor::parameter(vec![2.0], &[1]).unwrap());
        assert!(again.is_err());
    }

    #[test]
    fn store_iterates_in_registration_order() {
        let mut store = ParamStore::new();
        for name in ["c", "a", "b"] {
            store
                .register(name, DenseTensor::parameter(vec![0.0], &[1]).unwrap())
                .unwrap();
        }
        let names: Vec<&str> = store.iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["c", "a", "b"]);
        assert_eq!(store.num_values(), 3);
    }
}
