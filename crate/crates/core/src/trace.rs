//! Magnetization traces, echo detection and decoherence times.

use serde::{Deserialize, Serialize};

use crate::engine::{ensemble_maps, EnsembleConfig};
use crate::error::{DdError, Result};
use crate::noise::NoiseModel;
use crate::pulse_errors::PulseErrorModel;
use crate::timeline::Timeline;

/// Samples required per pulse-free window for echo detection.
pub const SAMPLES_PER_WINDOW: f64 = 8.0;

/// Default minimum prominence of an echo maximum.
pub const ECHO_PROMINENCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub sequence: String,
    pub initial: [f64; 3],
    pub error_model: PulseErrorModel,
    pub noise: NoiseModel,
    pub ensemble_size: usize,
    pub seed: u64,
    /// Shortest non-zero pulse-free window of the timeline.
    pub min_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub mx: Vec<f64>,
    pub my: Vec<f64>,
    pub mz: Vec<f64>,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Transverse magnitude `sqrt(mx^2 + my^2)` per sample.
    pub fn transverse(&self) -> Vec<f64> {
        self.mx.iter().zip(&self.my).map(|(x, y)| x.hypot(*y)).collect()
    }

    /// Component along the initial Bloch direction per sample.
    pub fn along_initial(&self) -> Vec<f64> {
        let n = self.meta.initial;
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt().max(f64::MIN_POSITIVE);
        (0..self.len())
            .map(|k| (self.mx[k] * n[0] + self.my[k] * n[1] + self.mz[k] * n[2]) / norm)
            .collect()
    }
}

/// Shortest non-zero pulse-free window.
pub fn min_window(t: &Timeline) -> f64 {
    t.windows().into_iter().filter(|&w| w > 0.0).fold(f64::INFINITY, f64::min)
}

/// Ensemble-averaged Bloch vector at each sample time, starting from `initial`.
pub fn magnetization_trace(
    t: &Timeline,
    em: &PulseErrorModel,
    noise: &NoiseModel,
    initial: [f64; 3],
    sample_times: &[f64],
    ensemble: &EnsembleConfig,
) -> Result<Trace> {
    let norm = (initial[0].powi(2) + initial[1].powi(2) + initial[2].powi(2)).sqrt();
    if !(norm > 0.0 && norm <= 1.0 + 1e-12) {
        return Err(DdError::invalid(format!("initial Bloch vector must have norm in (0, 1], got {norm}")));
    }
    let maps = ensemble_maps(t, em, noise, ensemble, sample_times)?;
    let mut trace = Trace {
        times: sample_times.to_vec(),
        mx: Vec::with_capacity(maps.len()),
        my: Vec::with_capacity(maps.len()),
        mz: Vec::with_capacity(maps.len()),
        meta: TraceMeta {
            sequence: t.label().to_string(),
            initial,
            error_model: *em,
            noise: *noise,
            ensemble_size: ensemble.size,
            seed: ensemble.seed,
            min_window: min_window(t),
        },
    };
    for m in &maps {
        let r = m.apply_bloch(initial);
        trace.mx.push(r[0]);
        trace.my.push(r[1]);
        trace.mz.push(r[2]);
    }
    Ok(trace)
}

/// `n + 1` evenly spaced times on `[0, end]`.
pub fn uniform_times(end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| end * k as f64 / n as f64).collect()
}

/// Echo times with the default prominence.
pub fn echo_positions(trace: &Trace) -> Result<Vec<f64>> {
    echo_positions_with(trace, ECHO_PROMINENCE)
}

/// Local maxima of the transverse magnitude, refined by a parabola through
/// the three samples around each one.
///
/// The first sample is never an echo; the last one can be. A maximum must rise
/// at least `prominence` above the lowest point separating it from any higher
/// maximum.
pub fn echo_positions_with(trace: &Trace, prominence: f64) -> Result<Vec<f64>> {
    let n = trace.len();
    if n < 3 {
        return Err(DdError::invalid("echo detection needs at least three samples"));
    }
    let step = trace.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let window = trace.meta.min_window;
    if window.is_finite() {
        let max_step = window / SAMPLES_PER_WINDOW;
        if step > max_step * (1.0 + 1e-9) {
            return Err(DdError::InsufficientSampling { step, max_step, window });
        }
    }
    let s = trace.transverse();
    let mut out = Vec::new();
    for k in 1..n {
        let is_peak = if k == n - 1 { s[k] > s[k - 1] } else { s[k] > s[k - 1] && s[k] >= s[k + 1] };
        if !is_peak || prominence_of(&s, k) < prominence {
            continue;
        }
        if k == n - 1 {
            out.push(trace.times[k]);
        } else {
            out.push(parabola_vertex(
                [trace.times[k - 1], trace.times[k], trace.times[k + 1]],
                [s[k - 1], s[k], s[k + 1]],
            ));
        }
    }
    Ok(out)
}

fn prominence_of(s: &[f64], k: usize) -> f64 {
    let peak = s[k];
    // lowest point on each side before the signal climbs above the peak
    let base = |side: &mut dyn Iterator<Item = &f64>| {
        side.take_while(|&&v| v <= peak).fold(peak, |m, &v| m.min(v))
    };
    let left = base(&mut s[..k].iter().rev());
    if k + 1 == s.len() {
        return peak - left;
    }
    let right = base(&mut s[k + 1..].iter());
    peak - left.max(right)
}

fn parabola_vertex(t: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (t[1] - t[0]);
    let d2 = (y[2] - y[1]) / (t[2] - t[1]);
    let curvature = (d2 - d1) / (t[2] - t[0]);
    if curvature >= 0.0 {
        return t[1];
    }
    // vertex of y = y1 + a (t - t1) + c (t - t1)^2, with a the central slope
    let a = d1 + curvature * (t[1] - t[0]);
    let v = t[1] - a / (2.0 * curvature);
    v.clamp(t[0], t[2])
}

/// First downward crossing of `threshold` by the component along the initial
/// axis, linearly interpolated. Infinite if the trace never drops below it.
pub fn decoherence_time(trace: &Trace, threshold: f64) -> Result<f64> {
    let s: Vec<f64> = trace.along_initial().iter().map(|v| v.abs()).collect();
    if s.is_empty() {
        return Err(DdError::invalid("empty trace"));
    }
    if s[0] < threshold {
        return Err(DdError::invalid(format!("trace starts at {} below threshold {threshold}", s[0])));
    }
    for k in 1..s.len() {
        if s[k] < threshold {
            let (t0, t1) = (trace.times[k - 1], trace.times[k]);
            let frac = (s[k - 1] - threshold) / (s[k - 1] - s[k]);
            return Ok(t0 + frac * (t1 - t0));
        }
    }
    Ok(f64::INFINITY)
}

/// Decoherence time at the conventional `1/e` threshold.
pub fn decoherence_time_1e(trace: &Trace) -> Result<f64> {
    decoherence_time(trace, (-1.0f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::{build_basic, BasicKind};

    fn synthetic(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Trace {
        let mx: Vec<f64> = times.iter().map(|&t| f(t)).collect();
        let n = times.len();
        Trace {
            times,
            mx,
            my: vec![0.0; n],
            mz: vec![0.0; n],
            meta: TraceMeta {
                sequence: "synthetic".into(),
                initial: [1.0, 0.0, 0.0],
                error_model: PulseErrorModel::ideal(),
                noise: NoiseModel::None,
                ensemble_size: 1,
                seed: 0,
                min_window: f64::INFINITY,
            },
        }
    }

    #[test]
    fn exponential_decay_time() {
        for big_t in [3.0, 17.0, 60.0] {
            let tr = synthetic(uniform_times(100.0, 400), |t| (-t / big_t).exp());
            let t = decoherence_time_1e(&tr).unwrap();
            assert!((t - big_t).abs() < 0.01 * big_t, "{t} vs {big_t}");
        }
    }

    #[test]
    fn gaussian_decay_time() {
        let sigma = 0.2;
        let tr = synthetic(uniform_times(20.0, 200), |t| (-0.5 * sigma * sigma * t * t).exp());
        let t = decoherence_time_1e(&tr).unwrap();
        assert!((t - 2f64.sqrt() / sigma).abs() < 0.1);
    }

    #[test]
    fn constant_trace_never_decays() {
        let tr = synthetic(uniform_times(10.0, 10), |_| 1.0);
        assert_eq!(decoherence_time_1e(&tr).unwrap(), f64::INFINITY);
        let low = synthetic(uniform_times(10.0, 10), |_| 0.1);
        assert!(decoherence_time_1e(&low).is_err());
    }

    #[test]
    fn parabola_recovers_vertex() {
        let v = parabola_vertex([0.0, 1.0, 2.5], [1.0 - 0.3f64.powi(2), 1.0 - 0.7f64.powi(2), 1.0 - 2.2f64.powi(2)]);
        assert!((v - 0.3).abs() < 1e-12);
    }

    #[test]
    fn echo_detection_on_synthetic_peaks() {
        let tr = synthetic(uniform_times(10.0, 1000), |t| (-(t - 3.0).powi(2)).exp() + (-(t - 7.01).powi(2)).exp());
        let e = echo_positions(&tr).unwrap();
        assert_eq!(e.len(), 2);
        assert!((e[0] - 3.0).abs() < 0.01 && (e[1] - 7.01).abs() < 0.01, "{e:?}");
    }

    #[test]
    fn hahn_echo_at_end() {
        let t = build_basic(BasicKind::Hahn, 5.0, 1).unwrap();
        let noise = NoiseModel::StaticDephasing { sigma: 1.0 };
        let times = uniform_times(10.0, 100);
        let tr = magnetization_trace(&t, &PulseErrorModel::ideal(), &noise, [1.0, 0.0, 0.0], &times, &EnsembleConfig::new(256, 3))
            .unwrap();
        let e = echo_positions(&tr).unwrap();
        assert_eq!(e, vec![10.0]);
    }

    #[test]
    fn coarse_sampling_is_rejected() {
        let t = build_basic(BasicKind::Cpmg, 1.0, 2).unwrap();
        let times = uniform_times(4.0, 8);
        let tr = magnetization_trace(&t, &PulseErrorModel::ideal(), &NoiseModel::None, [1.0, 0.0, 0.0], &times, &EnsembleConfig::new(1, 0))
            .unwrap();
        assert!(matches!(echo_positions(&tr), Err(DdError::InsufficientSampling { .. })));
    }

    #[test]
    fn longitudinal_state_flips_with_each_pulse() {
        let t = build_basic(BasicKind::Cpmg, 1.0, 2).unwrap();
        let times = [0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.25, 3.75];
        let tr = magnetization_trace(&t, &PulseErrorModel::ideal(), &NoiseModel::None, [0.0, 0.0, 1.0], &times, &EnsembleConfig::new(1, 0))
            .unwrap();
        let expected = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0];
        for (m, e) in tr.mz.iter().zip(expected) {
            assert!((m - e).abs() < 1e-12);
        }
    }
}
