// SPDX-License-Identifier: Apache-2.0

//! Die-to-die and within-die process variation.
//!
//! Each die draws one global speed deviate and a spatially correlated local
//! field. A positive deviate makes cells faster and leakier at the same time:
//! delay multipliers are `exp(-β z - β²/2)` and leakage multipliers
//! `exp(α z - α²/2)`, both with unit mean.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessModel {
    pub global_leakage_sigma: f64,
    pub global_delay_sigma: f64,
    pub local_leakage_sigma: f64,
    pub local_delay_sigma: f64,
    /// Correlation length of the local field, µm.
    pub lambda_um: f64,
}

impl Default for ProcessModel {
    fn default() -> Self {
        ProcessModel {
            global_leakage_sigma: 0.035,
            global_delay_sigma: 0.02,
            local_leakage_sigma: 0.03,
            local_delay_sigma: 0.012,
            lambda_um: 50.0,
        }
    }
}

impl ProcessModel {
    pub fn nominal() -> Self {
        ProcessModel {
            global_leakage_sigma: 0.0,
            global_delay_sigma: 0.0,
            local_leakage_sigma: 0.0,
            local_delay_sigma: 0.0,
            lambda_um: 50.0,
        }
    }
}

fn leak_mult(sigma: f64, z: f64) -> f64 {
    (sigma * z - 0.5 * sigma * sigma).exp()
}

fn delay_mult(sigma: f64, z: f64) -> f64 {
    (-sigma * z - 0.5 * sigma * sigma).exp()
}

/// Deterministic RNG for sample `index` of a run seeded with `seed`.
pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Correlated Gaussian field on a square grid with pitch `λ/2`, evaluated
/// off-grid by normalised bilinear interpolation.
#[derive(Debug)]
pub struct LocalGrid {
    nx: usize,
    ny: usize,
    pitch: f64,
    lambda: f64,
    chol: DMatrix<f64>,
}

impl LocalGrid {
    pub fn new(width_um: f64, height_um: f64, lambda_um: f64) -> Self {
        let pitch = lambda_um / 2.0;
        let nx = (width_um / pitch).ceil() as usize + 1;
        let ny = (height_um / pitch).ceil() as usize + 1;
        let n = nx * ny;
        let pos = |i: usize| ((i % nx) as f64 * pitch, (i / nx) as f64 * pitch);
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (pos(i), pos(j));
            let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            (-d / lambda_um).exp() + if i == j { 1e-9 } else { 0.0 }
        });
        let chol = nalgebra::Cholesky::new(cov)
            .expect("exponential covariance is positive definite")
            .l();
        LocalGrid {
            nx,
            ny,
            pitch,
            lambda: lambda_um,
            chol,
        }
    }

    pub fn nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn sample_nodes(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let w = DVector::from_fn(self.nodes(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.chol * w).iter().copied().collect()
    }

    fn node_pos(&self, i: usize) -> (f64, f64) {
        (
            (i % self.nx) as f64 * self.pitch,
            (i / self.nx) as f64 * self.pitch,
        )
    }

    /// Interpolation weights at `(x, y)` scaled so the field keeps unit variance.
    pub fn weights(&self, x: f64, y: f64) -> [(usize, f64); 4] {
        let fx = (x / self.pitch).clamp(0.0, (self.nx - 1) as f64);
        let fy = (y / self.pitch).clamp(0.0, (self.ny - 1) as f64);
        let ix = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let iy = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let ix1 = (ix + 1).min(self.nx - 1);
        let iy1 = (iy + 1).min(self.ny - 1);
        let mut w = [
            (iy * self.nx + ix, (1.0 - tx) * (1.0 - ty)),
            (iy * self.nx + ix1, tx * (1.0 - ty)),
            (iy1 * self.nx + ix, (1.0 - tx) * ty),
            (iy1 * self.nx + ix1, tx * ty),
        ];
        let mut var = 0.0;
        for &(i, wi) in &w {
            for &(j, wj) in &w {
                let (a, b) = (self.node_pos(i), self.node_pos(j));
                let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                var += wi * wj * (-d / self.lambda).exp();
            }
        }
        let s = var.sqrt();
        for e in &mut w {
            e.1 /= s;
        }
        w
    }
}

/// One die.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessSample {
    pub seed: u64,
    pub index: u64,
    pub model: ProcessModel,
    /// Global speed deviate.
    pub global_z: f64,
    /// Local field at the grid nodes; empty for global-only samples.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub local_nodes: Vec<f64>,
    #[serde(skip)]
    grid: Option<Arc<LocalGrid>>,
    /// Forced global multipliers (corner analysis), overriding `global_z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced: Option<(f64, f64)>,
}

impl ProcessSample {
    pub fn nominal() -> Self {
        ProcessSample {
            seed: 0,
            index: 0,
            model: ProcessModel::nominal(),
            global_z: 0.0,
            local_nodes: Vec::new(),
            grid: None,
            forced: None,
        }
    }

    /// Global-only sample with explicit `(leakage, delay)` multipliers.
    pub fn corner(leakage: f64, delay: f64) -> Self {
        ProcessSample {
            forced: Some((leakage, delay)),
            ..Self::nominal()
        }
    }

    pub fn global_leakage(&self) -> f64 {
        match self.forced {
            Some((l, _)) => l,
            None => leak_mult(self.model.global_leakage_sigma, self.global_z),
        }
    }

    pub fn global_delay(&self) -> f64 {
        match self.forced {
            Some((_, d)) => d,
            None => delay_mult(self.model.global_delay_sigma, self.global_z),
        }
    }

    /// Local field value at a point in µm; zero without a field.
    pub fn local_z(&self, x: f64, y: f64) -> f64 {
        match &self.grid {
            Some(g) if !self.local_nodes.is_empty() => g
                .weights(x, y)
                .iter()
                .map(|&(i, w)| w * self.local_nodes[i])
                .sum(),
            _ => 0.0,
        }
    }

    pub fn leakage_at(&self, x: f64, y: f64) -> f64 {
        self.global_leakage() * leak_mult(self.model.local_leakage_sigma, self.local_z(x, y))
    }

    pub fn delay_at(&self, x: f64, y: f64) -> f64 {
        self.global_delay() * delay_mult(self.model.local_delay_sigma, self.local_z(x, y))
    }

    /// Multipliers from a precomputed local deviate.
    pub fn leakage_for_z(&self, z: f64) -> f64 {
        self.global_leakage() * leak_mult(self.model.local_leakage_sigma, z)
    }

    pub fn delay_for_z(&self, z: f64) -> f64 {
        self.global_delay() * delay_mult(self.model.local_delay_sigma, z)
    }
}

/// Draws reproducible dies for one core geometry.
#[derive(Debug, Clone)]
pub struct ProcessSampler {
    pub model: ProcessModel,
    grid: Option<Arc<LocalGrid>>,
}

impl ProcessSampler {
    pub fn new(model: ProcessModel, width_um: f64, height_um: f64) -> Self {
        let local = model.local_leakage_sigma > 0.0 || model.local_delay_sigma > 0.0;
        ProcessSampler {
            model,
            grid: local.then(|| Arc::new(LocalGrid::new(width_um, height_um, model.lambda_um))),
        }
    }

    pub fn grid(&self) -> Option<&LocalGrid> {
        self.grid.as_deref()
    }

    pub fn sample(&self, seed: u64, index: u64) -> ProcessSample {
        let mut rng = rng_for(seed, index);
        let global_z: f64 = rng.sample(StandardNormal);
        let local_nodes = self
            .grid
            .as_ref()
            .map(|g| g.sample_nodes(&mut rng))
            .unwrap_or_default();
        ProcessSample {
            seed,
            index,
            model: self.model,
            global_z,
            local_nodes,
            grid: self.grid.clone(),
            forced: None,
        }
    }
}

/// Local deviates at fixed points for one sample, using precomputed weights.
pub fn local_z_at(sample: &ProcessSample, weights: &[[(usize, f64); 4]]) -> Vec<f64> {
    if sample.local_nodes.is_empty() {
        return vec![0.0; weights.len()];
    }
    weights
        .iter()
        .map(|w| w.iter().map(|&(i, wi)| wi * sample.local_nodes[i]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_is_unity() {
        let s = ProcessSample::nominal();
        assert_eq!(s.leakage_at(3.0, 4.0), 1.0);
        assert_eq!(s.delay_at(3.0, 4.0), 1.0);
    }

    #[test]
    fn same_seed_same_die() {
        let sp = ProcessSampler::new(ProcessModel::default(), 100.0, 60.0);
        let a = sp.sample(7, 3);
        let b = sp.sample(7, 3);
        assert_eq!(a.global_z, b.global_z);
        assert_eq!(a.local_nodes, b.local_nodes);
        assert_ne!(sp.sample(7, 4).global_z, a.global_z);
    }

    #[test]
    fn interpolated_field_has_unit_variance() {
        let sp = ProcessSampler::new(ProcessModel::default(), 100.0, 100.0);
        let w = sp.grid().unwrap().weights(37.0, 61.0);
        let n = 4000;
        let mut acc = 0.0;
        for i in 0..n {
            let s = sp.sample(1, i);
            let z: f64 = w.iter().map(|&(k, wk)| wk * s.local_nodes[k]).sum();
            acc += z * z;
        }
        let var = acc / n as f64;
        assert!((var - 1.0).abs() < 0.08, "{var}");
    }
}
