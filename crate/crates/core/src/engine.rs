//! Time evolution of single trajectories and ensemble reduction.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DdError, Result};
use crate::noise::{default_grid, sample_trajectory, trajectory_rng, NoiseModel, NoiseTrajectory, ERROR_STREAM};
use crate::process::QuantumMap;
use crate::pulse_errors::{pulse_propagator, pulse_rate_vector, timeline_segments, PulseErrorModel, Schedule, SegmentKind};
use crate::su2::{rotation_from_rate, Operator2};
use crate::timeline::Timeline;

/// Trajectories per reduction chunk. Fixed so results do not depend on the thread count.
const CHUNK: usize = 32;

/// Spread of the pulse errors across trajectories (inhomogeneous control).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSpread {
    pub epsilon: f64,
    pub delta: f64,
}

impl ErrorSpread {
    pub fn is_zero(&self) -> bool {
        self.epsilon == 0.0 && self.delta == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub size: usize,
    pub seed: u64,
    #[serde(default)]
    pub error_spread: ErrorSpread,
}

impl EnsembleConfig {
    pub fn new(size: usize, seed: u64) -> Self {
        EnsembleConfig { size, seed, error_spread: ErrorSpread::default() }
    }

    pub fn with_spread(mut self, epsilon: f64, delta: f64) -> Self {
        self.error_spread = ErrorSpread { epsilon, delta };
        self
    }
}

/// Error model seen by trajectory `index`.
pub fn trajectory_error_model(base: &PulseErrorModel, spread: &ErrorSpread, seed: u64, index: u64) -> PulseErrorModel {
    if spread.is_zero() {
        return *base;
    }
    let mut rng = trajectory_rng(seed, index, ERROR_STREAM);
    let de: f64 = rng.sample(StandardNormal);
    let dd: f64 = rng.sample(StandardNormal);
    PulseErrorModel {
        // keep the flip-angle factor positive
        epsilon: (base.epsilon + spread.epsilon * de).max(-0.999),
        delta: base.delta + spread.delta * dd,
        mode: base.mode,
    }
}

/// Tolerance used to snap checkpoints onto segment boundaries.
pub fn snap_eps(total: f64) -> f64 {
    1e-9 * total.max(1.0)
}

/// Propagators at the given (sorted) checkpoint times for one trajectory.
///
/// A checkpoint at the instant of an instantaneous pulse includes that pulse.
/// Checkpoints inside a finite pulse split it.
pub fn evolve_checkpoints(
    schedule: &Schedule,
    em: &PulseErrorModel,
    noise: &NoiseTrajectory,
    checkpoints: &[f64],
) -> Result<Vec<Operator2>> {
    let eps = snap_eps(schedule.total);
    if checkpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(DdError::invalid("checkpoints must be sorted"));
    }
    if let Some(&c) = checkpoints.iter().find(|&&c| !(c >= -eps && c <= schedule.total + eps)) {
        return Err(DdError::invalid(format!("checkpoint {c} outside [0, {}]", schedule.total)));
    }
    let (lo, hi) = noise.span();
    if lo > eps || hi < schedule.total - eps {
        return Err(DdError::CoverageMismatch { start: lo, end: hi, span: schedule.total });
    }
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    let mut u = Operator2::identity();
    let mut clock = 0.0;
    for seg in &schedule.segments {
        if (seg.start - clock).abs() > eps {
            return Err(DdError::CoverageMismatch { start: clock, end: seg.start, span: schedule.total });
        }
        let end = seg.start + seg.duration;
        clock = end;
        if seg.duration == 0.0 {
            if let SegmentKind::Pulse { spec, .. } = seg.kind {
                u = pulse_propagator(&spec, em, [0.0; 3]).op * u;
            }
            continue;
        }
        while next < checkpoints.len() && checkpoints[next] <= seg.start + eps {
            out.push(u);
            next += 1;
        }
        let mut t = seg.start;
        while t < end - eps {
            let cell = noise.cell_of(t + eps);
            let mut piece_end = noise.cell_end(cell).min(end);
            if end - piece_end <= eps {
                piece_end = end;
            }
            let field = noise.field_in_cell(cell);
            let w = match seg.kind {
                SegmentKind::Free => em.free_rate_vector(field),
                SegmentKind::Pulse { spec, .. } => {
                    pulse_rate_vector(&spec, em, field).expect("finite pulse segment in finite mode")
                }
            };
            while next < checkpoints.len() && checkpoints[next] < piece_end - eps {
                let c = checkpoints[next].max(t);
                u = rotation_from_rate(w, c - t) * u;
                t = c;
                out.push(u);
                next += 1;
            }
            u = rotation_from_rate(w, piece_end - t) * u;
            t = piece_end;
        }
    }
    if (clock - schedule.total).abs() > eps {
        return Err(DdError::CoverageMismatch { start: clock, end: schedule.total, span: schedule.total });
    }
    while next < checkpoints.len() {
        out.push(u);
        next += 1;
    }
    Ok(out)
}

/// Full propagator of one trajectory.
pub fn evolve_trajectory(schedule: &Schedule, em: &PulseErrorModel, noise: &NoiseTrajectory) -> Result<Operator2> {
    Ok(evolve_checkpoints(schedule, em, noise, &[schedule.total])?[0])
}

/// Noise-free propagator of a whole timeline.
pub fn timeline_propagator(t: &Timeline, em: &PulseErrorModel) -> Result<Operator2> {
    let schedule = timeline_segments(t, em)?;
    evolve_trajectory(&schedule, em, &NoiseTrajectory::zero())
}

/// Noise-free propagator of the ideal timeline (perfect instantaneous pulses).
pub fn ideal_propagator(t: &Timeline) -> Result<Operator2> {
    timeline_propagator(t, &PulseErrorModel::ideal())
}

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var("DDSIM_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to build thread pool")
    })
}

/// Evaluate `f(0..n)` on the shared pool, keeping index order.
pub fn par_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    pool().install(|| (0..n).into_par_iter().map(f).collect())
}

/// Ensemble-averaged maps at each checkpoint.
///
/// Trajectory `i` uses noise and error draws keyed by `(seed, i)`. Sums are
/// taken in index order within fixed chunks and chunks are combined in order,
/// so the result is identical for any thread count.
pub fn ensemble_maps(
    timeline: &Timeline,
    em: &PulseErrorModel,
    noise: &NoiseModel,
    ensemble: &EnsembleConfig,
    checkpoints: &[f64],
) -> Result<Vec<QuantumMap>> {
    em.validate()?;
    noise.validate()?;
    if ensemble.size == 0 {
        return Err(DdError::invalid("ensemble size must be >= 1"));
    }
    let schedule = timeline_segments(timeline, em)?;
    // a deterministic ensemble collapses to one member
    let size = if noise.is_none() && ensemble.error_spread.is_zero() { 1 } else { ensemble.size };
    let grid = default_grid(noise, schedule.total)?;
    let run_one = |i: usize| -> Result<Vec<QuantumMap>> {
        let traj = sample_trajectory(noise, &grid, ensemble.seed, i as u64)?;
        let em_i = trajectory_error_model(em, &ensemble.error_spread, ensemble.seed, i as u64);
        let ops = evolve_checkpoints(&schedule, &em_i, &traj, checkpoints)?;
        Ok(ops.iter().map(QuantumMap::from_unitary).collect())
    };
    let chunks = size.div_ceil(CHUNK);
    let partial: Vec<Result<Vec<QuantumMap>>> = pool().install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![QuantumMap::zero(); checkpoints.len()];
                for i in c * CHUNK..((c + 1) * CHUNK).min(size) {
                    for (a, m) in acc.iter_mut().zip(run_one(i)?) {
                        a.add_assign(&m);
                    }
                }
                Ok(acc)
            })
            .collect()
    });
    let mut total = vec![QuantumMap::zero(); checkpoints.len()];
    for chunk in partial {
        for (a, m) in total.iter_mut().zip(chunk?) {
            a.add_assign(&m);
        }
    }
    let inv = 1.0 / size as f64;
    Ok(total.iter().map(|m| m.scaled(inv)).collect())
}

/// Ensemble-averaged map of the whole timeline.
pub fn ensemble_map(
    timeline: &Timeline,
    em: &PulseErrorModel,
    noise: &NoiseModel,
    ensemble: &EnsembleConfig,
) -> Result<QuantumMap> {
    let total = timeline.duration();
    Ok(ensemble_maps(timeline, em, noise, ensemble, &[total])?.remove(0))
}

/// Ensemble-averaged maps at every cycle boundary.
pub fn ensemble_cycle_maps(
    timeline: &Timeline,
    em: &PulseErrorModel,
    noise: &NoiseModel,
    ensemble: &EnsembleConfig,
) -> Result<Vec<QuantumMap>> {
    ensemble_maps(timeline, em, noise, ensemble, &timeline.cycle_boundaries())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::{build_basic, BasicKind};
    use crate::su2::rotation;
    use crate::timeline::{Event, PulseSpec};
    use std::f64::consts::PI;

    #[test]
    fn free_precession_under_static_field() {
        let t = Timeline::from_cycle("free", vec![Event::Delay(2.0)]).unwrap();
        let s = timeline_segments(&t, &PulseErrorModel::ideal()).unwrap();
        let u = evolve_trajectory(&s, &PulseErrorModel::ideal(), &NoiseTrajectory::Constant([0.0, 0.0, 0.3])).unwrap();
        assert!(u.max_abs_diff(&rotation([0.0, 0.0, 1.0], 0.6).unwrap()) < 1e-15);
    }

    #[test]
    fn hahn_echo_refocuses_static_field() {
        let t = build_basic(BasicKind::Hahn, 3.0, 1).unwrap();
        let em = PulseErrorModel::ideal();
        let s = timeline_segments(&t, &em).unwrap();
        let u = evolve_trajectory(&s, &em, &NoiseTrajectory::Constant([0.0, 0.0, 0.7])).unwrap();
        let ideal = ideal_propagator(&t).unwrap();
        assert!(u.approx_eq_up_to_phase(&ideal, 1e-12));
    }

    #[test]
    fn grid_noise_is_split_at_cells() {
        let t = Timeline::from_cycle("free", vec![Event::Delay(1.0)]).unwrap();
        let em = PulseErrorModel::ideal();
        let s = timeline_segments(&t, &em).unwrap();
        let noise = NoiseTrajectory::Grid { knots: vec![0.0, 0.25, 0.5, 0.75, 1.0], values: vec![0.1, -0.2, 0.3, 0.4] };
        let u = evolve_trajectory(&s, &em, &noise).unwrap();
        let phase = 0.25 * (0.1 - 0.2 + 0.3 + 0.4);
        assert!(u.max_abs_diff(&rotation([0.0, 0.0, 1.0], phase).unwrap()) < 1e-14);
        let short = NoiseTrajectory::Grid { knots: vec![0.0, 0.5], values: vec![0.1] };
        assert!(matches!(evolve_trajectory(&s, &em, &short), Err(DdError::CoverageMismatch { .. })));
    }

    #[test]
    fn checkpoints_include_pulses_at_their_instant() {
        let t = build_basic(BasicKind::Cpmg, 2.0, 2).unwrap();
        let em = PulseErrorModel::ideal();
        let s = timeline_segments(&t, &em).unwrap();
        let ops = evolve_checkpoints(&s, &em, &NoiseTrajectory::zero(), &[0.0, 1.0, 2.0, 4.0]).unwrap();
        let y = pulse_propagator(&PulseSpec::y(), &em, [0.0; 3]).op;
        assert_eq!(ops[0], Operator2::identity());
        assert!(ops[1].max_abs_diff(&y) < 1e-15);
        assert!(ops[2].max_abs_diff(&y) < 1e-15);
        assert!(ops[3].approx_eq_up_to_phase(&Operator2::identity(), 1e-14));
        assert!(evolve_checkpoints(&s, &em, &NoiseTrajectory::zero(), &[9.0]).is_err());
        assert!(evolve_checkpoints(&s, &em, &NoiseTrajectory::zero(), &[2.0, 1.0]).is_err());
    }

    #[test]
    fn checkpoint_inside_finite_pulse() {
        let t = build_basic(BasicKind::Cpmg, 1.0, 1).unwrap();
        let em = PulseErrorModel::finite(0.0, 0.0, 0.2).unwrap();
        let s = timeline_segments(&t, &em).unwrap();
        // the first pulse runs over [0.4, 0.6]; at 0.5 it is a half turn
        let ops = evolve_checkpoints(&s, &em, &NoiseTrajectory::zero(), &[0.5]).unwrap();
        assert!(ops[0].max_abs_diff(&rotation([0.0, 1.0, 0.0], PI / 2.0).unwrap()) < 1e-12);
    }

    #[test]
    fn ensemble_is_deterministic_and_thread_independent() {
        let t = build_basic(BasicKind::Xy4Sym, 2.0, 3).unwrap();
        let em = PulseErrorModel::instantaneous(0.02, 0.0).unwrap();
        let noise = NoiseModel::OrnsteinUhlenbeck { sigma: 0.1, tau_corr: 3.0 };
        let cfg = EnsembleConfig::new(70, 5);
        let a = ensemble_map(&t, &em, &noise, &cfg).unwrap();
        let b = ensemble_map(&t, &em, &noise, &cfg).unwrap();
        assert_eq!(a, b);
        // sequential reference in the same chunked order
        let schedule = timeline_segments(&t, &em).unwrap();
        let grid = default_grid(&noise, schedule.total).unwrap();
        let mut chunks = Vec::new();
        for c in 0..cfg.size.div_ceil(CHUNK) {
            let mut acc = QuantumMap::zero();
            for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.size) {
                let traj = sample_trajectory(&noise, &grid, cfg.seed, i as u64).unwrap();
                acc.add_assign(&QuantumMap::from_unitary(&evolve_trajectory(&schedule, &em, &traj).unwrap()));
            }
            chunks.push(acc);
        }
        let mut total = QuantumMap::zero();
        chunks.iter().for_each(|c| total.add_assign(c));
        assert_eq!(a, total.scaled(1.0 / cfg.size as f64));
    }

    #[test]
    fn error_spread_draws_are_reproducible() {
        let base = PulseErrorModel::instantaneous(0.01, 0.0).unwrap();
        let spread = ErrorSpread { epsilon: 0.05, delta: 0.0 };
        let a = trajectory_error_model(&base, &spread, 3, 9);
        assert_eq!(a, trajectory_error_model(&base, &spread, 3, 9));
        assert_ne!(a, trajectory_error_model(&base, &spread, 3, 10));
        assert_eq!(a.delta, 0.0);
        assert_eq!(trajectory_error_model(&base, &ErrorSpread::default(), 3, 9), base);
    }

    #[test]
    fn static_dephasing_fid_matches_gaussian_decay() {
        let sigma = 0.5;
        let t = Timeline::from_cycle("free", vec![Event::Delay(2.0)]).unwrap();
        let noise = NoiseModel::StaticDephasing { sigma };
        let map = ensemble_map(&t, &PulseErrorModel::ideal(), &noise, &EnsembleConfig::new(4000, 1)).unwrap();
        let mx = map.apply_bloch([1.0, 0.0, 0.0])[0];
        // spread of cos(b t) over the ensemble is at most 1/sqrt(2)
        assert!((mx - noise.fid(2.0)).abs() < 5.0 * (0.5f64 / 4000.0).sqrt(), "{mx}");
    }
}
