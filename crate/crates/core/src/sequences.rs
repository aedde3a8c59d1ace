//! Builders for the decoupling families and timeline statistics.
//!
//! Phase conventions: X = 0 deg, Y = 90 deg. Builders emit events in time
//! order. Operator products written as `Y C X C` (rightmost acts first) are
//! translated to the time order `C X C Y`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DdError, Result};
use crate::timeline::{Event, Pulse, PulseSpec, Timeline};

/// Phase offsets (deg) of the five-pulse Knill composite.
pub const KNILL_PHASES_DEG: [f64; 5] = [30.0, 0.0, 90.0, 0.0, 30.0];

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(DdError::invalid(format!("delay must be positive and finite, got {tau}")));
    }
    Ok(())
}

fn check_cycles(cycles: usize) -> Result<()> {
    if cycles == 0 {
        return Err(DdError::invalid("cycle count must be >= 1"));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `sin^2(pi * num / den)`, exact at the rational points 1/4, 1/2, 3/4.
fn sin_sq_pi_fraction(num: usize, den: usize) -> f64 {
    let g = gcd(num, den);
    match (num / g, den / g) {
        (1, 6) | (5, 6) => 0.25,
        (1, 4) | (3, 4) => 0.5,
        (1, 3) | (2, 3) => 0.75,
        (1, 2) => 1.0,
        (0, _) => 0.0,
        _ => {
            let s = (std::f64::consts::PI * num as f64 / den as f64).sin();
            s * s
        }
    }
}

/// Uhrig pulse instants `t_i = tau_c sin^2(pi i / (2 (n + 1)))`, i = 1..n.
///
/// The second half is mirrored from the first so that `t_i + t_{n+1-i} = tau_c`.
pub fn udd_times(n: usize, cycle_time: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(DdError::invalid("UDD needs at least one pulse"));
    }
    check_tau(cycle_time)?;
    let den = 2 * (n + 1);
    let mut t = vec![0.0; n];
    for i in 1..=n {
        let mirror = n + 1 - i;
        if i <= mirror {
            t[i - 1] = cycle_time * sin_sq_pi_fraction(i, den);
        } else {
            t[i - 1] = cycle_time - t[mirror - 1];
        }
    }
    Ok(t)
}

/// Single-axis and XY-4 families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasicKind {
    /// `f_tau X f_tau`.
    Hahn,
    /// CPMG timing with x pulses.
    Cp,
    /// `f_{tau/2} Y f_tau Y f_{tau/2}`.
    Cpmg,
    /// Uhrig sequence with the given pulse count; `tau` is the cycle time.
    Udd(usize),
    /// `f_{tau/2} X f_tau Y f_tau X f_tau Y f_{tau/2}`.
    Xy4Sym,
    /// `f_tau X f_tau Y f_tau X f_tau Y`.
    Xy4Asym,
}

fn pulse(phase_deg: f64) -> Event {
    Event::pulse(PulseSpec::pi(phase_deg))
}

fn basic_cycle(kind: BasicKind, tau: f64) -> Result<Vec<Event>> {
    use Event::Delay as D;
    Ok(match kind {
        BasicKind::Hahn => vec![D(tau), pulse(0.0), D(tau)],
        BasicKind::Cp => vec![D(tau / 2.0), pulse(0.0), D(tau), pulse(0.0), D(tau / 2.0)],
        BasicKind::Cpmg => vec![D(tau / 2.0), pulse(90.0), D(tau), pulse(90.0), D(tau / 2.0)],
        BasicKind::Udd(n) => {
            let times = udd_times(n, tau)?;
            let mut events = Vec::with_capacity(2 * n + 1);
            let mut prev = 0.0;
            for t in times {
                events.push(D(t - prev));
                events.push(pulse(90.0));
                prev = t;
            }
            events.push(D(tau - prev));
            events
        }
        BasicKind::Xy4Sym => vec![
            D(tau / 2.0),
            pulse(0.0),
            D(tau),
            pulse(90.0),
            D(tau),
            pulse(0.0),
            D(tau),
            pulse(90.0),
            D(tau / 2.0),
        ],
        BasicKind::Xy4Asym => vec![
            D(tau),
            pulse(0.0),
            D(tau),
            pulse(90.0),
            D(tau),
            pulse(0.0),
            D(tau),
            pulse(90.0),
        ],
    })
}

fn basic_label(kind: BasicKind) -> String {
    match kind {
        BasicKind::Hahn => "hahn".into(),
        BasicKind::Cp => "cp".into(),
        BasicKind::Cpmg => "cpmg".into(),
        BasicKind::Udd(n) => format!("udd{n}"),
        BasicKind::Xy4Sym => "xy4s".into(),
        BasicKind::Xy4Asym => "xy4a".into(),
    }
}

/// Build `cycles` repetitions of a basic sequence with inter-pulse delay `tau`
/// (cycle time for UDD).
pub fn build_basic(kind: BasicKind, tau: f64, cycles: usize) -> Result<Timeline> {
    check_tau(tau)?;
    check_cycles(cycles)?;
    Timeline::from_cycle(basic_label(kind), basic_cycle(kind, tau)?)?.repeat(cycles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CddScheme {
    /// `C_n = Y C_{n-1} X C_{n-1} Y C_{n-1} X C_{n-1}`, `C_0 = f_tau`.
    Standard,
    /// `CDD_{n+1} = [sqrt(CDD_n) X CDD_n Y sqrt(CDD_n)]^2`.
    Symmetric,
}

fn concat(parts: &[&[Event]]) -> Vec<Event> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// One cycle of concatenated DD of the given order.
pub fn concatenate_cdd(order: usize, tau: f64, scheme: CddScheme) -> Result<Timeline> {
    if order < 1 {
        return Err(DdError::invalid("CDD order must be >= 1"));
    }
    check_tau(tau)?;
    let x = [pulse(0.0)];
    let y = [pulse(90.0)];
    match scheme {
        CddScheme::Standard => {
            let mut c = vec![Event::Delay(tau)];
            for _ in 0..order {
                c = concat(&[&c, &x, &c, &y, &c, &x, &c, &y]);
            }
            Timeline::from_cycle(format!("cdd{order}a"), c)
        }
        CddScheme::Symmetric => {
            let mut cdd = Timeline::from_cycle("", vec![Event::Delay(tau)])?;
            for _ in 0..order {
                let root = cdd.first_half()?;
                let half = concat(&[root.events(), &x, cdd.events(), &y, root.events()]);
                cdd = Timeline::from_cycle("", concat(&[&half, &half]))?;
            }
            Ok(cdd.with_label(format!("cdd{order}s")))
        }
    }
}

/// Five-pulse Knill block with delays: `f_{tau/2} (pi)_{30+phi} f_tau ... (pi)_{30+phi} f_{tau/2}`.
pub fn kdd_block(phi_deg: f64, tau: f64) -> Vec<Event> {
    let mut events = vec![Event::Delay(tau / 2.0)];
    for (i, offset) in KNILL_PHASES_DEG.iter().enumerate() {
        if i > 0 {
            events.push(Event::Delay(tau));
        }
        events.push(pulse(offset + phi_deg));
    }
    events.push(Event::Delay(tau / 2.0));
    events
}

/// KDD: `[KDD_phi KDD_{phi+90}]^2`, 20 pulses per cycle.
pub fn build_kdd(phi0_deg: f64, tau: f64, cycles: usize) -> Result<Timeline> {
    check_tau(tau)?;
    check_cycles(cycles)?;
    let a = kdd_block(phi0_deg, tau);
    let b = kdd_block(phi0_deg + 90.0, tau);
    Timeline::from_cycle("kdd", concat(&[&a, &b, &a, &b]))?.repeat(cycles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    Symmetric,
    Asymmetric,
}

/// How the second XY-4 of an XY-8 is derived from the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reversal {
    /// Full time reversal of the event list (delays and pulses).
    #[default]
    Literal,
    /// Pulse phases reversed, delay positions kept.
    PulsePattern,
}

fn reverse_block(block: &Timeline, reversal: Reversal) -> Result<Timeline> {
    match reversal {
        Reversal::Literal => Ok(block.reversed()),
        Reversal::PulsePattern => {
            let mut phases: Vec<Pulse> = block.pulses().copied().collect();
            phases.reverse();
            let mut it = phases.into_iter();
            let events = block
                .events()
                .iter()
                .map(|e| match e {
                    Event::Pulse(_) => Event::Pulse(it.next().expect("same pulse count")),
                    d => *d,
                })
                .collect();
            Timeline::from_cycle(block.label(), events)
        }
    }
}

/// XY-8 (XY-4 plus its time-reversed image) or XY-16 (XY-8 plus its
/// pi-shifted copy), using literal time reversal.
pub fn compose_xy(order: usize, base: Symmetry, tau: f64, cycles: usize) -> Result<Timeline> {
    compose_xy_with(order, base, tau, cycles, Reversal::Literal)
}

pub fn compose_xy_with(
    order: usize,
    base: Symmetry,
    tau: f64,
    cycles: usize,
    reversal: Reversal,
) -> Result<Timeline> {
    if order != 8 && order != 16 {
        return Err(DdError::invalid(format!("XY order must be 8 or 16, got {order}")));
    }
    check_tau(tau)?;
    check_cycles(cycles)?;
    let kind = match base {
        Symmetry::Symmetric => BasicKind::Xy4Sym,
        Symmetry::Asymmetric => BasicKind::Xy4Asym,
    };
    let xy4 = build_basic(kind, tau, 1)?;
    let back = reverse_block(&xy4, reversal)?;
    let xy8 = concat(&[xy4.events(), back.events()]);
    let suffix = match base {
        Symmetry::Symmetric => "s",
        Symmetry::Asymmetric => "a",
    };
    let cycle = if order == 8 {
        Timeline::from_cycle(format!("xy8{suffix}"), xy8)?
    } else {
        let x8 = Timeline::from_cycle("", xy8)?;
        let shifted = x8.phase_shifted(180.0);
        Timeline::from_cycle(format!("xy16{suffix}"), concat(&[x8.events(), shifted.events()]))?
    };
    cycle.repeat(cycles)
}

/// Replace every pi pulse of phase phi by the zero-delay Knill composite
/// `(pi)_{30+phi} (pi)_phi (pi)_{90+phi} (pi)_phi (pi)_{30+phi}`.
pub fn wrap_robust_pulses(t: &Timeline) -> Result<Timeline> {
    let mut events = Vec::with_capacity(t.events().len() + 4 * t.pulse_count());
    for (index, p) in t.pulses().enumerate() {
        if !p.spec.is_pi() {
            return Err(DdError::NotAPiPulse { index, flip_deg: p.spec.flip_deg() });
        }
        if p.part.is_some() {
            return Err(DdError::invalid(format!("pulse {index} is already part of a composite")));
        }
    }
    for ev in t.events() {
        match ev {
            Event::Delay(_) => events.push(*ev),
            Event::Pulse(p) => {
                for (k, offset) in KNILL_PHASES_DEG.iter().enumerate() {
                    events.push(Event::Pulse(Pulse {
                        spec: p.spec.shifted(*offset),
                        part: Some(k as u8),
                    }));
                }
            }
        }
    }
    let c = t.cycle();
    let info = crate::timeline::CycleInfo { pulses_per_cycle: c.pulses_per_cycle * 5, ..c };
    Timeline::with_cycle_info(format!("{}+rp", t.label()), events, info)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceStats {
    pub pulse_count: usize,
    pub logical_pulse_count: usize,
    pub cycle_time: f64,
    /// `pulses * t_p / (pulses * t_p + total delay)`, delays counted as pure free evolution.
    pub duty_cycle: f64,
}

pub fn stats(t: &Timeline, pulse_duration: f64) -> Result<SequenceStats> {
    if !(pulse_duration >= 0.0) || !pulse_duration.is_finite() {
        return Err(DdError::invalid(format!("pulse duration must be >= 0, got {pulse_duration}")));
    }
    let n = t.pulse_count();
    let pulse_time = n as f64 * pulse_duration;
    let total = pulse_time + t.total_delay();
    Ok(SequenceStats {
        pulse_count: n,
        logical_pulse_count: t.logical_pulse_count(),
        cycle_time: t.cycle().duration,
        duty_cycle: if total > 0.0 { pulse_time / total } else { 0.0 },
    })
}

/// Sequence families addressable by name from configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Hahn,
    Cp,
    Cpmg,
    Udd,
    Xy4,
    Xy8,
    Xy16,
    Cdd,
    Kdd,
}

impl FromStr for Family {
    type Err = DdError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "hahn" => Family::Hahn,
            "cp" => Family::Cp,
            "cpmg" => Family::Cpmg,
            "udd" => Family::Udd,
            "xy4" => Family::Xy4,
            "xy8" => Family::Xy8,
            "xy16" => Family::Xy16,
            "cdd" => Family::Cdd,
            "kdd" => Family::Kdd,
            other => return Err(DdError::Config(format!("unknown sequence family '{other}'"))),
        })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Hahn => "hahn",
            Family::Cp => "cp",
            Family::Cpmg => "cpmg",
            Family::Udd => "udd",
            Family::Xy4 => "xy4",
            Family::Xy8 => "xy8",
            Family::Xy16 => "xy16",
            Family::Cdd => "cdd",
            Family::Kdd => "kdd",
        };
        f.write_str(s)
    }
}

/// A complete, buildable sequence description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub family: Family,
    /// UDD pulse count or CDD order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Block symmetry for XY and CDD families (XY defaults to symmetric, CDD to standard).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<Symmetry>,
    pub tau: f64,
    pub cycles: usize,
    #[serde(default)]
    pub robust: bool,
    /// Global phase offset (deg) for KDD.
    #[serde(default)]
    pub phase_deg: f64,
}

impl SequenceSpec {
    pub fn new(family: Family, tau: f64, cycles: usize) -> Self {
        SequenceSpec { family, order: None, symmetry: None, tau, cycles, robust: false, phase_deg: 0.0 }
    }

    pub fn order(mut self, order: usize) -> Self {
        self.order = Some(order);
        self
    }

    pub fn symmetry(mut self, symmetry: Symmetry) -> Self {
        self.symmetry = Some(symmetry);
        self
    }

    pub fn robust(mut self, robust: bool) -> Self {
        self.robust = robust;
        self
    }

    fn xy_symmetry(&self) -> Symmetry {
        self.symmetry.unwrap_or(Symmetry::Symmetric)
    }

    fn need_order(&self) -> Result<usize> {
        self.order
            .ok_or_else(|| DdError::Config(format!("sequence '{}' needs an order", self.family)))
    }

    pub fn build(&self) -> Result<Timeline> {
        check_tau(self.tau).map_err(|e| DdError::Config(e.to_string()))?;
        check_cycles(self.cycles).map_err(|e| DdError::Config(e.to_string()))?;
        let t = match self.family {
            Family::Hahn => build_basic(BasicKind::Hahn, self.tau, self.cycles)?,
            Family::Cp => build_basic(BasicKind::Cp, self.tau, self.cycles)?,
            Family::Cpmg => build_basic(BasicKind::Cpmg, self.tau, self.cycles)?,
            Family::Udd => build_basic(BasicKind::Udd(self.need_order()?), self.tau, self.cycles)?,
            Family::Xy4 => {
                let kind = match self.xy_symmetry() {
                    Symmetry::Symmetric => BasicKind::Xy4Sym,
                    Symmetry::Asymmetric => BasicKind::Xy4Asym,
                };
                build_basic(kind, self.tau, self.cycles)?
            }
            Family::Xy8 => compose_xy(8, self.xy_symmetry(), self.tau, self.cycles)?,
            Family::Xy16 => compose_xy(16, self.xy_symmetry(), self.tau, self.cycles)?,
            Family::Cdd => {
                let scheme = match self.symmetry.unwrap_or(Symmetry::Asymmetric) {
                    Symmetry::Symmetric => CddScheme::Symmetric,
                    Symmetry::Asymmetric => CddScheme::Standard,
                };
                concatenate_cdd(self.need_order()?, self.tau, scheme)?.repeat(self.cycles)?
            }
            Family::Kdd => build_kdd(self.phase_deg, self.tau, self.cycles)?,
        };
        if self.robust {
            wrap_robust_pulses(&t)
        } else {
            Ok(t)
        }
    }
}

/// Parse a short sequence name such as `cpmg`, `udd5`, `xy16a`, `cdd2s` or
/// `kdd+rp`. These are the labels the builders attach to their timelines.
pub fn parse_sequence_name(name: &str, tau: f64, cycles: usize) -> Result<SequenceSpec> {
    let lower = name.trim().to_ascii_lowercase();
    let (base, robust) = match lower.strip_suffix("+rp") {
        Some(b) => (b, true),
        None => (lower.as_str(), false),
    };
    let bad = || DdError::Config(format!("unrecognised sequence name '{name}'"));
    let letters: String = base.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    let rest = &base[letters.len()..];
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    let suffix = &rest[digits.len()..];
    let symmetry = match suffix {
        "" => None,
        "s" => Some(Symmetry::Symmetric),
        "a" => Some(Symmetry::Asymmetric),
        _ => return Err(bad()),
    };
    let number = if digits.is_empty() { None } else { Some(digits.parse::<usize>().map_err(|_| bad())?) };
    let (family, order) = match (letters.as_str(), number) {
        ("xy", Some(4)) => (Family::Xy4, None),
        ("xy", Some(8)) => (Family::Xy8, None),
        ("xy", Some(16)) => (Family::Xy16, None),
        ("udd", Some(n)) if symmetry.is_none() => (Family::Udd, Some(n)),
        ("cdd", Some(n)) => (Family::Cdd, Some(n)),
        (f @ ("hahn" | "cp" | "cpmg" | "kdd"), None) if symmetry.is_none() => (f.parse()?, None),
        _ => return Err(bad()),
    };
    let mut spec = SequenceSpec::new(family, tau, cycles).robust(robust);
    spec.order = order;
    spec.symmetry = symmetry;
    Ok(spec)
}
