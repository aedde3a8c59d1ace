//! Classical dephasing environments and reproducible trajectory sampling.
//!
//! A field `b` (rad/us) adds `H = b . sigma / 2` to the Hamiltonian, so a
//! static z field of spread `sigma` gives the free-induction decay
//! `exp(-sigma^2 t^2 / 2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DdError, Result};

/// Grid cells per correlation time for Ornstein-Uhlenbeck sampling.
pub const OU_CELLS_PER_TAU: f64 = 16.0;

/// RNG stream used for environment fields.
pub const NOISE_STREAM: u64 = 0;
/// RNG stream used for per-trajectory pulse-error draws.
pub const ERROR_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseModel {
    #[default]
    None,
    /// Quasi-static z field drawn once per trajectory.
    StaticDephasing { sigma: f64 },
    /// Stationary Ornstein-Uhlenbeck z field.
    OrnsteinUhlenbeck { sigma: f64, tau_corr: f64 },
    /// Quasi-static field with independent spreads per axis.
    StaticVector { sigma: [f64; 3] },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s >= 0.0;
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::StaticDephasing { sigma } if ok(sigma) => Ok(()),
            NoiseModel::OrnsteinUhlenbeck { sigma, tau_corr } if ok(sigma) && tau_corr.is_finite() && tau_corr > 0.0 => {
                Ok(())
            }
            NoiseModel::StaticVector { sigma } if sigma.iter().all(|&s| ok(s)) => Ok(()),
            other => Err(DdError::invalid(format!("invalid noise parameters: {other:?}"))),
        }
    }

    pub fn is_none(&self) -> bool {
        match *self {
            NoiseModel::None => true,
            NoiseModel::StaticDephasing { sigma } | NoiseModel::OrnsteinUhlenbeck { sigma, .. } => sigma == 0.0,
            NoiseModel::StaticVector { sigma } => sigma == [0.0; 3],
        }
    }

    /// Largest time step that resolves the noise, if it has one.
    pub fn max_step(&self) -> Option<f64> {
        match *self {
            NoiseModel::OrnsteinUhlenbeck { tau_corr, .. } => Some(tau_corr / OU_CELLS_PER_TAU),
            _ => None,
        }
    }

    /// Expected free-induction decay `<cos phi(t)>` of a transverse spin.
    pub fn fid(&self, t: f64) -> f64 {
        match *self {
            NoiseModel::None => 1.0,
            NoiseModel::StaticDephasing { sigma } => (-0.5 * sigma * sigma * t * t).exp(),
            NoiseModel::OrnsteinUhlenbeck { sigma, tau_corr } => ou_fid(sigma, tau_corr, t),
            NoiseModel::StaticVector { sigma } => (-0.5 * sigma[2] * sigma[2] * t * t).exp(),
        }
    }
}

/// Free-induction decay under Ornstein-Uhlenbeck dephasing.
pub fn ou_fid(sigma: f64, tau_corr: f64, t: f64) -> f64 {
    let x = t / tau_corr;
    (-(sigma * tau_corr).powi(2) * (x - 1.0 + (-x).exp())).exp()
}

/// Noise amplitude for which the Ornstein-Uhlenbeck FID reaches 1/e at `t_e`.
pub fn ou_sigma_for_decay(tau_corr: f64, t_e: f64) -> Result<f64> {
    if !(tau_corr > 0.0 && t_e > 0.0) {
        return Err(DdError::invalid("correlation and decay times must be positive"));
    }
    let x = t_e / tau_corr;
    // x - 1 + e^-x loses precision for small x; use the series there
    let g = if x < 1e-4 { x * x / 2.0 - x * x * x / 6.0 } else { x - 1.0 + (-x).exp() };
    Ok(1.0 / (tau_corr * g.sqrt()))
}

/// Seeded generator for one trajectory. Seed and index fill separate halves of
/// the key, so every (seed, index) pair gets its own stream.
pub fn trajectory_rng(seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// One realisation of the environment field.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseTrajectory {
    /// Same field at all times.
    Constant([f64; 3]),
    /// Piecewise-constant z field: `values[k]` holds on `[knots[k], knots[k + 1])`.
    Grid { knots: Vec<f64>, values: Vec<f64> },
}

impl NoiseTrajectory {
    pub fn zero() -> Self {
        NoiseTrajectory::Constant([0.0; 3])
    }

    pub fn field_in_cell(&self, cell: usize) -> [f64; 3] {
        match self {
            NoiseTrajectory::Constant(b) => *b,
            NoiseTrajectory::Grid { values, .. } => [0.0, 0.0, values[cell.min(values.len() - 1)]],
        }
    }

    pub fn field_at(&self, t: f64) -> [f64; 3] {
        self.field_in_cell(self.cell_of(t))
    }

    pub fn cell_of(&self, t: f64) -> usize {
        match self {
            NoiseTrajectory::Constant(_) => 0,
            NoiseTrajectory::Grid { knots, values } => {
                knots.partition_point(|&k| k <= t).saturating_sub(1).min(values.len() - 1)
            }
        }
    }

    /// End of the cell containing index `cell`, or infinity for a constant field.
    pub fn cell_end(&self, cell: usize) -> f64 {
        match self {
            NoiseTrajectory::Constant(_) => f64::INFINITY,
            NoiseTrajectory::Grid { knots, .. } => knots[cell + 1],
        }
    }

    /// Time span over which the trajectory is defined.
    pub fn span(&self) -> (f64, f64) {
        match self {
            NoiseTrajectory::Constant(_) => (f64::NEG_INFINITY, f64::INFINITY),
            NoiseTrajectory::Grid { knots, .. } => (knots[0], knots[knots.len() - 1]),
        }
    }
}

/// Uniform grid on `[0, duration]` with cells no longer than `max_step`.
pub fn uniform_grid(duration: f64, max_step: f64) -> Result<Vec<f64>> {
    if !(duration.is_finite() && duration > 0.0 && max_step > 0.0) {
        return Err(DdError::invalid(format!("cannot grid duration {duration} with step {max_step}")));
    }
    let cells = ((duration / max_step).ceil() as usize).max(1);
    let step = duration / cells as f64;
    let mut grid: Vec<f64> = (0..cells).map(|k| k as f64 * step).collect();
    grid.push(duration);
    Ok(grid)
}

/// Grid that resolves `model` over `[0, duration]`.
pub fn default_grid(model: &NoiseModel, duration: f64) -> Result<Vec<f64>> {
    match model.max_step() {
        Some(h) if duration > 0.0 => uniform_grid(duration, h),
        // a zero-length span still needs one cell
        _ => Ok(vec![0.0, duration.max(1.0)]),
    }
}

/// Sample one trajectory on the segment boundaries `grid`.
///
/// Static variants draw a single value. Ornstein-Uhlenbeck values are drawn
/// at segment midpoints with the exact discrete-time update, so their
/// covariance is `sigma^2 exp(-|dt| / tau)` for any grid.
pub fn sample_trajectory(model: &NoiseModel, grid: &[f64], seed: u64, index: u64) -> Result<NoiseTrajectory> {
    model.validate()?;
    if grid.len() < 2 || grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DdError::invalid("noise grid must be finite, strictly increasing, with at least two points"));
    }
    if model.is_none() {
        return Ok(NoiseTrajectory::zero());
    }
    let mut rng = trajectory_rng(seed, index, NOISE_STREAM);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    Ok(match *model {
        NoiseModel::None => NoiseTrajectory::zero(),
        NoiseModel::StaticDephasing { sigma } => NoiseTrajectory::Constant([0.0, 0.0, sigma * normal()]),
        NoiseModel::StaticVector { sigma } => {
            // z first, so zero transverse spreads reproduce the dephasing draw
            let bz = sigma[2] * normal();
            let bx = sigma[0] * normal();
            let by = sigma[1] * normal();
            NoiseTrajectory::Constant([bx, by, bz])
        }
        NoiseModel::OrnsteinUhlenbeck { sigma, tau_corr } => {
            let mut values = Vec::with_capacity(grid.len() - 1);
            let mut b = sigma * normal();
            values.push(b);
            for k in 1..grid.len() - 1 {
                let dt = 0.5 * (grid[k + 1] - grid[k - 1]);
                let rho = (-dt / tau_corr).exp();
                b = rho * b + sigma * (1.0 - rho * rho).sqrt() * normal();
                values.push(b);
            }
            NoiseTrajectory::Grid { knots: grid.to_vec(), values }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_amplitude() {
        let s = ou_sigma_for_decay(200.0, 120.0).unwrap();
        assert!((s - 0.012961).abs() < 1e-6, "{s}");
        assert!((ou_fid(s, 200.0, 120.0) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn ou_fid_limits() {
        // fast noise: exp(-sigma^2 tau t); slow noise: exp(-sigma^2 t^2 / 2)
        let (s, tau) = (0.3, 1e-3);
        let t = 5.0;
        assert!((ou_fid(s, tau, t).ln() + s * s * tau * t).abs() < 1e-5);
        let (s, tau) = (0.1, 1e6);
        assert!((ou_fid(s, tau, t).ln() + 0.5 * s * s * t * t).abs() < 1e-6);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = NoiseModel::OrnsteinUhlenbeck { sigma: 0.1, tau_corr: 5.0 };
        let grid = default_grid(&m, 20.0).unwrap();
        let a = sample_trajectory(&m, &grid, 7, 3).unwrap();
        let b = sample_trajectory(&m, &grid, 7, 3).unwrap();
        let c = sample_trajectory(&m, &grid, 7, 4).unwrap();
        let d = sample_trajectory(&m, &grid, 8, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn streams_are_independent() {
        let mut a = trajectory_rng(1, 2, NOISE_STREAM);
        let mut b = trajectory_rng(1, 2, ERROR_STREAM);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn grids() {
        let m = NoiseModel::OrnsteinUhlenbeck { sigma: 0.1, tau_corr: 16.0 };
        let g = default_grid(&m, 10.0).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 10.0);
        assert_eq!(default_grid(&NoiseModel::None, 3.0).unwrap(), vec![0.0, 3.0]);
        assert_eq!(default_grid(&m, 0.0).unwrap(), vec![0.0, 1.0]);
        let t = sample_trajectory(&m, &g, 0, 0).unwrap();
        assert_eq!(t.span(), (0.0, 10.0));
        assert_eq!(t.cell_of(0.0), 0);
        assert_eq!(t.cell_of(1.0), 1);
        assert_eq!(t.cell_of(9.99), 9);
        assert_eq!(t.cell_end(9), 10.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(NoiseModel::StaticDephasing { sigma: -1.0 }.validate().is_err());
        assert!(NoiseModel::OrnsteinUhlenbeck { sigma: 1.0, tau_corr: 0.0 }.validate().is_err());
        assert!(sample_trajectory(&NoiseModel::None, &[0.0, 1.0, 1.0], 0, 0).is_err());
        assert!(sample_trajectory(&NoiseModel::None, &[0.0], 0, 0).is_err());
    }

    #[test]
    fn static_vector_without_transverse_spread_is_dephasing() {
        let a = sample_trajectory(&NoiseModel::StaticVector { sigma: [0.0, 0.0, 0.3] }, &[0.0, 1.0], 4, 2).unwrap();
        let b = sample_trajectory(&NoiseModel::StaticDephasing { sigma: 0.3 }, &[0.0, 1.0], 4, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn static_dephasing_spread() {
        let sigma = 0.4;
        let m = NoiseModel::StaticDephasing { sigma };
        let n = 20_000;
        let var: f64 = (0..n)
            .map(|i| sample_trajectory(&m, &[0.0, 1.0], 11, i).unwrap().field_at(0.0)[2].powi(2))
            .sum::<f64>()
            / n as f64;
        // var of the sample variance estimate is 2 sigma^4 / n
        let se = (2.0f64 / n as f64).sqrt() * sigma * sigma;
        assert!((var - sigma * sigma).abs() < 5.0 * se);
    }

    #[test]
    fn ou_autocovariance() {
        let (sigma, tau) = (0.05, 4.0);
        let m = NoiseModel::OrnsteinUhlenbeck { sigma, tau_corr: tau };
        let n = 100_000u64;
        let lags = [0usize, 4, 16, 48];
        let mut sums = [0.0f64; 4];
        let mut sq = [0.0f64; 4];
        let grid = default_grid(&m, 16.0).unwrap();
        for i in 0..n {
            let traj = sample_trajectory(&m, &grid, 99, i).unwrap();
            let b0 = traj.field_in_cell(8)[2];
            for (k, &lag) in lags.iter().enumerate() {
                let p = b0 * traj.field_in_cell(8 + lag)[2];
                sums[k] += p;
                sq[k] += p * p;
            }
        }
        let step = tau / OU_CELLS_PER_TAU;
        for (k, &lag) in lags.iter().enumerate() {
            let mean = sums[k] / n as f64;
            let se = ((sq[k] / n as f64 - mean * mean) / n as f64).sqrt();
            let expected = sigma * sigma * (-(lag as f64) * step / tau).exp();
            assert!((mean - expected).abs() < 5.0 * se, "lag {lag}: {mean} vs {expected} (se {se})");
        }
    }
}
