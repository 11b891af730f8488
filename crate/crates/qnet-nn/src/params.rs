//! Named parameter tensors with their Adam moment accumulators.

use crate::mat::Mat;
use crate::NnError;

/// Index of a tensor inside a [`ParameterSet`]. Stable for the set's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
struct ParamEntry {
    name: String,
    value: Mat,
    m: Mat,
    v: Mat,
}

/// Flat ordered collection of all trainable tensors of one network, plus the
/// Adam first/second-moment accumulators and the update-step counter.
#[derive(Debug, Clone)]
pub struct ParameterSet {
    entries: Vec<ParamEntry>,
    step: u64,
}

/// Gradients aligned index-for-index with a [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub(crate) mats: Vec<Mat>,
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParameterSet {
    pub fn new() -> Self {
        ParameterSet {
            entries: Vec::new(),
            step: 0,
        }
    }

    /// Registers a tensor initialized by `init(row, col)`.
    pub fn add_with(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        mut init: impl FnMut(usize, usize) -> f64,
    ) -> ParamId {
        let mut value = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                *value.at_mut(r, c) = init(r, c);
            }
        }
        self.entries.push(ParamEntry {
            name: name.to_string(),
            m: Mat::zeros(rows, cols),
            v: Mat::zeros(rows, cols),
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add_with(name, rows, cols, |_, _| 0.0)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn tensor_count(&self) -> usize {
        self.entries.len()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Fresh zero gradients aligned with this set.
    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            mats: self
                .entries
                .iter()
                .map(|e| Mat::zeros(e.value.rows, e.value.cols))
                .collect(),
        }
    }

    /// One Adam update with bias correction. Rejects non-finite gradients so
    /// a bad step never corrupts the parameters.
    pub fn adam_step(&mut self, grads: &Gradients, cfg: &AdamConfig) -> Result<(), NnError> {
        assert_eq!(grads.mats.len(), self.entries.len(), "gradient alignment");
        for g in &grads.mats {
            if !g.is_finite() {
                return Err(NnError::NonFinite {
                    context: "adam gradients",
                });
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for (entry, grad) in self.entries.iter_mut().zip(grads.mats.iter()) {
            for i in 0..entry.value.data.len() {
                let g = grad.data[i];
                let m = cfg.beta1 * entry.m.data[i] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * entry.v.data[i] + (1.0 - cfg.beta2) * g * g;
                entry.m.data[i] = m;
                entry.v.data[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                entry.value.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    /// Polyak average: self = (1 - tau) * self + tau * other. Shapes must match.
    pub fn polyak_from(&mut self, other: &ParameterSet, tau: f64) {
        assert_eq!(self.entries.len(), other.entries.len());
        for (dst, src) in self.entries.iter_mut().zip(other.entries.iter()) {
            for (d, s) in dst.value.data.iter_mut().zip(src.value.data.iter()) {
                *d = (1.0 - tau) * *d + tau * s;
            }
        }
    }

    /// Copies values (not moments) from another set with identical layout.
    pub fn copy_values_from(&mut self, other: &ParameterSet) {
        self.polyak_from(other, 1.0);
    }

    /// Raw little-endian byte image of values, moments and step counter.
    /// Two sets with identical state produce identical bytes.
    pub fn byte_image(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.step.to_le_bytes());
        for e in &self.entries {
            for part in [&e.value, &e.m, &e.v] {
                for x in &part.data {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub(crate) fn entries_for_io(&self) -> impl Iterator<Item = (&str, &Mat, &Mat, &Mat)> {
        self.entries
            .iter()
            .map(|e| (e.name.as_str(), &e.value, &e.m, &e.v))
    }

    pub(crate) fn push_entry_for_io(&mut self, name: String, value: Mat, m: Mat, v: Mat) {
        self.entries.push(ParamEntry { name, value, m, v });
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Mat {
        &self.mats[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.mats[id.0]
    }

    pub fn zero(&mut self) {
        for m in &mut self.mats {
            m.fill(0.0);
        }
    }

    /// Global L2 norm over every gradient scalar.
    pub fn global_norm(&self) -> f64 {
        self.mats
            .iter()
            .flat_map(|m| m.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Scales all gradients so the global norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for m in &mut self.mats {
                m.data.iter_mut().for_each(|x| *x *= s);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_set(w: f64) -> (ParameterSet, ParamId) {
        let mut ps = ParameterSet::new();
        let id = ps.add_with("w", 1, 1, |_, _| w);
        (ps, id)
    }

    #[test]
    fn adam_first_step_moves_by_lr_sign() {
        // On step 1 the bias-corrected update is lr * g / (|g| + eps'), i.e.
        // almost exactly lr in the direction opposite the gradient sign,
        // independent of gradient magnitude.
        for &g in &[0.003, 1.0, 250.0, -42.0] {
            let (mut ps, id) = scalar_set(1.0);
            let mut grads = ps.zero_grads();
            grads.get_mut(id).data[0] = g;
            ps.adam_step(&grads, &AdamConfig::with_lr(0.01)).unwrap();
            let moved = ps.get(id).data[0] - 1.0;
            assert!((moved + 0.01 * g.signum()).abs() < 1e-6, "g={g} moved={moved}");
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let (mut ps, id) = scalar_set(0.7);
        let grads = ps.zero_grads();
        ps.adam_step(&grads, &AdamConfig::with_lr(0.1)).unwrap();
        assert_eq!(ps.get(id).data[0], 0.7);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // 200 steps on f(w) = w^2 from w = 1 with lr 0.1.
        let (mut ps, id) = scalar_set(1.0);
        for _ in 0..200 {
            let w = ps.get(id).data[0];
            let mut grads = ps.zero_grads();
            grads.get_mut(id).data[0] = 2.0 * w;
            ps.adam_step(&grads, &AdamConfig::with_lr(0.1)).unwrap();
        }
        assert!(ps.get(id).data[0].abs() < 0.05);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let (mut ps, id) = scalar_set(1.0);
        let mut grads = ps.zero_grads();
        grads.get_mut(id).data[0] = f64::NAN;
        assert!(ps.adam_step(&grads, &AdamConfig::with_lr(0.1)).is_err());
        assert_eq!(ps.get(id).data[0], 1.0);
        assert_eq!(ps.step_count(), 0);
    }

    #[test]
    fn clip_global_norm() {
        let mut ps = ParameterSet::new();
        let a = ps.add_zeros("a", 2, 1);
        let mut g = ps.zero_grads();
        g.get_mut(a).data.copy_from_slice(&[3.0, 4.0]);
        g.clip_global_norm(1.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
        g.clip_global_norm(10.0); // already below, untouched
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }
}
