//! Imperfect pulses: flip-angle error, resonance offset and finite duration.
//!
//! A pulse of phase `phi` is the evolution under the rate vector
//! `Omega * ((1 + eps) cos phi, (1 + eps) sin phi, delta) + b`, where `b` is
//! the environment field (finite mode only). The resulting rotation angle is
//! `theta_nominal * sqrt((1 + eps)^2 + (delta + b_z / Omega)^2)`.

use serde::{Deserialize, Serialize};

use crate::error::{DdError, Result};
use crate::su2::{rotation_from_rate, Operator2};
use crate::timeline::{Event, PulseSpec, Timeline};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PulseMode {
    /// Zero-duration pulses; the environment field is ignored during the pulse.
    Instantaneous,
    /// Pulses of length `pulse_duration` for a nominal pi rotation.
    Finite { pulse_duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseErrorModel {
    /// Fractional flip-angle error; the implemented angle is `nominal * (1 + epsilon)`.
    pub epsilon: f64,
    /// Resonance offset normalised by the control amplitude.
    pub delta: f64,
    pub mode: PulseMode,
}

impl Default for PulseErrorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl PulseErrorModel {
    pub const fn ideal() -> Self {
        PulseErrorModel { epsilon: 0.0, delta: 0.0, mode: PulseMode::Instantaneous }
    }

    pub fn new(epsilon: f64, delta: f64, mode: PulseMode) -> Result<Self> {
        let em = PulseErrorModel { epsilon, delta, mode };
        em.validate()?;
        Ok(em)
    }

    pub fn instantaneous(epsilon: f64, delta: f64) -> Result<Self> {
        Self::new(epsilon, delta, PulseMode::Instantaneous)
    }

    pub fn finite(epsilon: f64, delta: f64, pulse_duration: f64) -> Result<Self> {
        Self::new(epsilon, delta, PulseMode::Finite { pulse_duration })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= -1.0 {
            return Err(DdError::invalid(format!("flip-angle error must be > -1, got {}", self.epsilon)));
        }
        if !self.delta.is_finite() {
            return Err(DdError::invalid("offset must be finite"));
        }
        if let PulseMode::Finite { pulse_duration } = self.mode {
            if !(pulse_duration > 0.0) || !pulse_duration.is_finite() {
                return Err(DdError::invalid(format!(
                    "finite pulses need a positive duration, got {pulse_duration}"
                )));
            }
        }
        Ok(())
    }

    /// Nominal control amplitude `pi / t_p` (finite mode only).
    pub fn omega(&self) -> Option<f64> {
        match self.mode {
            PulseMode::Instantaneous => None,
            PulseMode::Finite { pulse_duration } => Some(std::f64::consts::PI / pulse_duration),
        }
    }

    /// Duration of a pi pulse (zero when instantaneous).
    pub fn pi_pulse_duration(&self) -> f64 {
        match self.mode {
            PulseMode::Instantaneous => 0.0,
            PulseMode::Finite { pulse_duration } => pulse_duration,
        }
    }

    /// Duration of a pulse with the given nominal flip.
    pub fn duration_of(&self, p: &PulseSpec) -> f64 {
        self.pi_pulse_duration() * p.flip_deg() / 180.0
    }

    /// Rate vector during free evolution: the field plus, in finite mode, the offset `delta * Omega` along z.
    pub fn free_rate_vector(&self, field: [f64; 3]) -> [f64; 3] {
        match self.omega() {
            None => field,
            Some(omega) => [field[0], field[1], field[2] + self.delta * omega],
        }
    }
}

/// A pulse's unitary and the wall-clock time it takes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulsePropagator {
    pub op: Operator2,
    pub elapsed: f64,
}

/// Rate vector of a finite pulse under the error model and field.
pub fn pulse_rate_vector(p: &PulseSpec, em: &PulseErrorModel, field: [f64; 3]) -> Option<[f64; 3]> {
    let omega = em.omega()?;
    let (s, c) = p.phase().sin_cos();
    let amp = omega * (1.0 + em.epsilon);
    Some([amp * c + field[0], amp * s + field[1], omega * em.delta + field[2]])
}

/// Actual propagator of one pulse. In instantaneous mode `field` is ignored.
pub fn pulse_propagator(p: &PulseSpec, em: &PulseErrorModel, field: [f64; 3]) -> PulsePropagator {
    match pulse_rate_vector(p, em, field) {
        Some(w) => {
            let elapsed = em.duration_of(p);
            PulsePropagator { op: rotation_from_rate(w, elapsed), elapsed }
        }
        None => {
            let (s, c) = p.phase().sin_cos();
            let a = 1.0 + em.epsilon;
            // rate vector scaled so that |w| * 1 = flip * sqrt(a^2 + delta^2)
            let w = [a * c * p.flip(), a * s * p.flip(), em.delta * p.flip()];
            PulsePropagator { op: rotation_from_rate(w, 1.0), elapsed: 0.0 }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    Free,
    /// `index` counts pulses from zero in timeline order.
    Pulse { spec: PulseSpec, index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub duration: f64,
    pub kind: SegmentKind,
}

/// Time-resolved evolution plan for one timeline under one error model.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub segments: Vec<Segment>,
    pub error_model: PulseErrorModel,
    pub total: f64,
}

impl Schedule {
    pub fn pulse_time(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::Pulse { .. }))
            .map(|s| s.duration)
            .sum()
    }

    /// Fraction of the total time spent pulsing.
    pub fn duty_cycle(&self) -> f64 {
        if self.total > 0.0 {
            self.pulse_time() / self.total
        } else {
            0.0
        }
    }
}

/// Turn a timeline into evolution segments.
///
/// In finite mode each run of back-to-back pulses is centred on its nominal
/// instant: half its duration is taken from the preceding delay and half from
/// the following one (all of it from the single neighbour at a timeline edge),
/// so the total duration is unchanged.
pub fn timeline_segments(t: &Timeline, em: &PulseErrorModel) -> Result<Schedule> {
    em.validate()?;
    let events = t.events();
    let mut delays: Vec<f64> = events
        .iter()
        .map(|e| if let Event::Delay(d) = e { *d } else { 0.0 })
        .collect();

    if em.pi_pulse_duration() > 0.0 {
        // demand placed on each delay, and the first pulse index of the blocks touching it
        let mut demand = vec![0.0; events.len()];
        let mut owner: Vec<Option<usize>> = vec![None; events.len()];
        let mut pulse_index = 0;
        let mut i = 0;
        while i < events.len() {
            if let Event::Pulse(_) = events[i] {
                let start = i;
                let first_pulse = pulse_index;
                let mut need = 0.0;
                while i < events.len() {
                    match &events[i] {
                        Event::Pulse(p) => {
                            need += em.duration_of(&p.spec);
                            pulse_index += 1;
                            i += 1;
                        }
                        Event::Delay(_) => break,
                    }
                }
                let left = start.checked_sub(1);
                let right = (i < events.len()).then_some(i);
                let mut charge = |k: usize, amount: f64| {
                    demand[k] += amount;
                    owner[k] = Some(owner[k].map_or(first_pulse, |o: usize| o.min(first_pulse)));
                };
                match (left, right) {
                    (Some(l), Some(r)) => {
                        charge(l, need / 2.0);
                        charge(r, need / 2.0);
                    }
                    (Some(l), None) => charge(l, need),
                    (None, Some(r)) => charge(r, need),
                    (None, None) => {
                        return Err(DdError::InfeasibleSchedule {
                            pulse_index: first_pulse,
                            required: need,
                            available: 0.0,
                        })
                    }
                }
            } else {
                i += 1;
            }
        }
        for k in 0..events.len() {
            if demand[k] == 0.0 {
                continue;
            }
            let remaining = delays[k] - demand[k];
            if remaining < -1e-12 * delays[k].max(1.0) {
                return Err(DdError::InfeasibleSchedule {
                    pulse_index: owner[k].unwrap_or(0),
                    required: demand[k],
                    available: delays[k],
                });
            }
            delays[k] = remaining.max(0.0);
        }
    }

    let mut segments = Vec::with_capacity(events.len());
    let mut time = 0.0;
    let mut pulse_index = 0;
    for (k, ev) in events.iter().enumerate() {
        match ev {
            Event::Delay(_) => {
                if delays[k] > 0.0 {
                    segments.push(Segment { start: time, duration: delays[k], kind: SegmentKind::Free });
                    time += delays[k];
                }
            }
            Event::Pulse(p) => {
                let duration = em.duration_of(&p.spec);
                segments.push(Segment {
                    start: time,
                    duration,
                    kind: SegmentKind::Pulse { spec: p.spec, index: pulse_index },
                });
                pulse_index += 1;
                time += duration;
            }
        }
    }
    Ok(Schedule { segments, error_model: *em, total: time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::{build_basic, BasicKind};
    use crate::su2::rotation;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn expm_series(a: &Operator2, order: usize) -> Operator2 {
        let mut term = Operator2::identity();
        let mut sum = Operator2::identity();
        for k in 1..=order {
            term = (term * *a).scale(Complex64::new(1.0 / k as f64, 0.0));
            sum = sum + term;
        }
        sum
    }

    #[test]
    fn ideal_pulse_is_minus_i_sigma_x() {
        let u = pulse_propagator(&PulseSpec::x(), &PulseErrorModel::ideal(), [0.0; 3]);
        assert!(u.op.max_abs_diff(&Operator2::pauli_x().scale(Complex64::new(0.0, -1.0))) < 1e-15);
        assert_eq!(u.elapsed, 0.0);
    }

    #[test]
    fn flip_error_scales_angle() {
        let em = PulseErrorModel::instantaneous(0.1, 0.0).unwrap();
        let u = pulse_propagator(&PulseSpec::x(), &em, [0.0; 3]);
        assert!(u.op.max_abs_diff(&rotation([1.0, 0.0, 0.0], 1.1 * PI).unwrap()) < 1e-14);
    }

    #[test]
    fn offset_tilts_axis() {
        let em = PulseErrorModel::instantaneous(0.0, 0.2).unwrap();
        let u = pulse_propagator(&PulseSpec::y(), &em, [0.0; 3]).op;
        let norm = 1.04f64.sqrt();
        let axis = [0.0, 1.0 / norm, 0.2 / norm];
        assert!((axis[1] - 0.98058).abs() < 1e-5 && (axis[2] - 0.19612).abs() < 1e-5);
        let angle = PI * norm;
        // series oracle on -i angle/2 (n . sigma)
        let gen = (Operator2::pauli_y().scale(axis[1].into()) + Operator2::pauli_z().scale(axis[2].into()))
            .scale(Complex64::new(0.0, -angle / 2.0));
        // the phase of Y is 90 deg, so cos(phase) is ~6e-17 rather than 0
        assert!(u.max_abs_diff(&expm_series(&gen, 30)) < 1e-12);
    }

    #[test]
    fn finite_mode_matches_instantaneous_without_field() {
        let inst = PulseErrorModel::instantaneous(0.05, 0.1).unwrap();
        let fin = PulseErrorModel::finite(0.05, 0.1, 0.3).unwrap();
        let p = PulseSpec::pi(30.0);
        let a = pulse_propagator(&p, &inst, [0.0; 3]);
        let b = pulse_propagator(&p, &fin, [0.0; 3]);
        assert!(a.op.max_abs_diff(&b.op) < 1e-13);
        assert_eq!(b.elapsed, 0.3);
        // instantaneous ignores the field, finite does not
        let c = pulse_propagator(&p, &inst, [0.0, 0.0, 1.0]);
        assert_eq!(a.op, c.op);
        let d = pulse_propagator(&p, &fin, [0.0, 0.0, 1.0]);
        assert!(d.op.max_abs_diff(&b.op) > 1e-3);
    }

    #[test]
    fn finite_field_enters_as_normalised_offset() {
        // bz / Omega acts exactly like delta
        let t_p = 0.5;
        let omega = PI / t_p;
        let with_field = pulse_propagator(&PulseSpec::x(), &PulseErrorModel::finite(0.0, 0.0, t_p).unwrap(), [0.0, 0.0, 0.2 * omega]);
        let with_delta = pulse_propagator(&PulseSpec::x(), &PulseErrorModel::finite(0.0, 0.2, t_p).unwrap(), [0.0; 3]);
        assert!(with_field.op.max_abs_diff(&with_delta.op) < 1e-14);
    }

    #[test]
    fn invalid_models() {
        assert!(PulseErrorModel::instantaneous(-1.0, 0.0).is_err());
        assert!(PulseErrorModel::finite(0.0, 0.0, 0.0).is_err());
        assert!(PulseErrorModel::instantaneous(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn instantaneous_cpmg_segments() {
        let t = build_basic(BasicKind::Cpmg, 1.0, 1).unwrap();
        let s = timeline_segments(&t, &PulseErrorModel::ideal()).unwrap();
        let d: Vec<f64> = s.segments.iter().map(|x| x.duration).collect();
        assert_eq!(d, vec![0.5, 0.0, 1.0, 0.0, 0.5]);
        assert!(matches!(s.segments[1].kind, SegmentKind::Pulse { index: 0, .. }));
        assert_eq!(s.total, 2.0);
    }

    #[test]
    fn finite_cpmg_absorbs_pulse_time() {
        let t = build_basic(BasicKind::Cpmg, 1.0, 1).unwrap();
        let em = PulseErrorModel::finite(0.0, 0.0, 0.2).unwrap();
        let s = timeline_segments(&t, &em).unwrap();
        let d: Vec<f64> = s.segments.iter().map(|x| x.duration).collect();
        let expected = [0.4, 0.2, 0.8, 0.2, 0.4];
        for (a, b) in d.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((s.total - 2.0).abs() < 1e-15);
        assert!((s.duty_cycle() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn infeasible_schedule_reports_pulse() {
        let t = build_basic(BasicKind::Xy4Sym, 0.1, 1).unwrap();
        let em = PulseErrorModel::finite(0.0, 0.0, 0.3).unwrap();
        match timeline_segments(&t, &em) {
            Err(DdError::InfeasibleSchedule { pulse_index, .. }) => assert_eq!(pulse_index, 0),
            other => panic!("expected infeasible schedule, got {other:?}"),
        }
    }

    #[test]
    fn trailing_pulse_takes_time_from_one_side() {
        let t = build_basic(BasicKind::Xy4Asym, 1.0, 1).unwrap();
        let em = PulseErrorModel::finite(0.0, 0.0, 0.2).unwrap();
        let s = timeline_segments(&t, &em).unwrap();
        let d: Vec<f64> = s.segments.iter().map(|x| x.duration).collect();
        let expected = [0.9, 0.2, 0.8, 0.2, 0.8, 0.2, 0.7, 0.2];
        for (a, b) in d.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{d:?}");
        }
        assert!((s.total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn composite_block_is_centred() {
        let cpmg = build_basic(BasicKind::Cpmg, 2.0, 1).unwrap();
        let wrapped = crate::sequences::wrap_robust_pulses(&cpmg).unwrap();
        let em = PulseErrorModel::finite(0.0, 0.0, 0.1).unwrap();
        let s = timeline_segments(&wrapped, &em).unwrap();
        assert!((s.segments[0].duration - 0.75).abs() < 1e-12);
        assert!((s.segments[6].duration - 1.5).abs() < 1e-12);
        assert!((s.total - 4.0).abs() < 1e-12);
    }
}
