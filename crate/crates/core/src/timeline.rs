//! Pulse timelines: an ordered alternation of free-evolution delays and pulses.
//!
//! Timelines are always kept normalised: no zero-length delays and no two
//! adjacent delays. Time is in abstract units; the scenario layer binds µs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{DdError, Result};

/// One nominal rotation about `(cos phase, sin phase, 0)`.
///
/// Angles are stored in degrees so that the text form round-trips exactly;
/// the phase is folded into `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    phase_deg: f64,
    flip_deg: f64,
}

fn fold_degrees(phase: f64) -> f64 {
    let r = phase.rem_euclid(360.0);
    if r >= 360.0 {
        r - 360.0
    } else {
        r + 0.0
    }
}

impl PulseSpec {
    pub fn new(phase_deg: f64, flip_deg: f64) -> Result<Self> {
        if !phase_deg.is_finite() || !flip_deg.is_finite() || flip_deg <= 0.0 {
            return Err(DdError::invalid(format!(
                "pulse needs a finite phase and a positive flip angle, got ({phase_deg}, {flip_deg})"
            )));
        }
        Ok(PulseSpec { phase_deg: fold_degrees(phase_deg), flip_deg })
    }

    /// A pi pulse with the given phase in degrees.
    pub fn pi(phase_deg: f64) -> Self {
        PulseSpec { phase_deg: fold_degrees(phase_deg), flip_deg: 180.0 }
    }

    pub fn x() -> Self {
        Self::pi(0.0)
    }

    pub fn y() -> Self {
        Self::pi(90.0)
    }

    pub fn phase_deg(&self) -> f64 {
        self.phase_deg
    }

    pub fn flip_deg(&self) -> f64 {
        self.flip_deg
    }

    /// Phase in radians.
    pub fn phase(&self) -> f64 {
        self.phase_deg.to_radians()
    }

    /// Nominal flip angle in radians.
    pub fn flip(&self) -> f64 {
        self.flip_deg.to_radians()
    }

    pub fn is_pi(&self) -> bool {
        (self.flip_deg - 180.0).abs() < 1e-9
    }

    pub fn shifted(&self, delta_deg: f64) -> Self {
        PulseSpec { phase_deg: fold_degrees(self.phase_deg + delta_deg), flip_deg: self.flip_deg }
    }
}

/// A pulse event; `part` is set when the pulse is one element of a composite pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub spec: PulseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<u8>,
}

impl Pulse {
    pub fn plain(spec: PulseSpec) -> Self {
        Pulse { spec, part: None }
    }

    /// True for pulses that start a logical pulse (plain pulses or first composite element).
    pub fn is_logical_start(&self) -> bool {
        matches!(self.part, None | Some(0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Delay(f64),
    Pulse(Pulse),
}

impl Event {
    pub fn pulse(spec: PulseSpec) -> Self {
        Event::Pulse(Pulse::plain(spec))
    }
}

/// Cycle bookkeeping carried alongside the event list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleInfo {
    /// Duration of one cycle (sum of its delays).
    pub duration: f64,
    pub pulses_per_cycle: usize,
    pub cycles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    #[serde(default)]
    label: String,
    cycle: CycleInfo,
    events: Vec<Event>,
}

/// Merge adjacent delays and drop zero-length ones.
fn normalize_events(events: impl IntoIterator<Item = Event>) -> Vec<Event> {
    let mut out: Vec<Event> = Vec::new();
    for ev in events {
        match ev {
            Event::Delay(d) if d == 0.0 => {}
            Event::Delay(d) => {
                if let Some(Event::Delay(prev)) = out.last_mut() {
                    *prev += d;
                } else {
                    out.push(Event::Delay(d));
                }
            }
            pulse => out.push(pulse),
        }
    }
    out
}

fn check_delays(events: &[Event]) -> Result<()> {
    for ev in events {
        if let Event::Delay(d) = ev {
            if !d.is_finite() || *d < 0.0 {
                return Err(DdError::invalid(format!("delays must be finite and >= 0, got {d}")));
            }
        }
    }
    Ok(())
}

impl Timeline {
    /// The empty timeline (zero duration, no pulses).
    pub fn empty() -> Self {
        Timeline {
            label: String::new(),
            cycle: CycleInfo { duration: 0.0, pulses_per_cycle: 0, cycles: 1 },
            events: Vec::new(),
        }
    }

    /// A single-cycle timeline from raw events.
    pub fn from_cycle(label: impl Into<String>, events: Vec<Event>) -> Result<Self> {
        check_delays(&events)?;
        let events = normalize_events(events);
        let duration = events
            .iter()
            .map(|e| if let Event::Delay(d) = e { *d } else { 0.0 })
            .sum();
        let pulses = events.iter().filter(|e| matches!(e, Event::Pulse(_))).count();
        Ok(Timeline {
            label: label.into(),
            cycle: CycleInfo { duration, pulses_per_cycle: pulses, cycles: 1 },
            events,
        })
    }

    /// Full constructor used by deserialisation; validates the cycle bookkeeping.
    pub fn with_cycle_info(label: impl Into<String>, events: Vec<Event>, cycle: CycleInfo) -> Result<Self> {
        check_delays(&events)?;
        let t = Timeline { label: label.into(), cycle, events: normalize_events(events) };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.cycle;
        if c.cycles == 0 {
            return Err(DdError::invalid("timeline must have at least one cycle"));
        }
        if c.pulses_per_cycle * c.cycles != self.pulse_count() {
            return Err(DdError::invalid(format!(
                "pulses_per_cycle ({}) x cycles ({}) != pulse count ({})",
                c.pulses_per_cycle,
                c.cycles,
                self.pulse_count()
            )));
        }
        let total = self.total_delay();
        if (c.duration * c.cycles as f64 - total).abs() > 1e-9 * total.max(1.0) {
            return Err(DdError::invalid(format!(
                "cycle duration {} x {} cycles != total delay {total}",
                c.duration, c.cycles
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn cycle(&self) -> CycleInfo {
        self.cycle
    }

    pub fn pulses(&self) -> impl Iterator<Item = &Pulse> + '_ {
        self.events.iter().filter_map(|e| match e {
            Event::Pulse(p) => Some(p),
            Event::Delay(_) => None,
        })
    }

    pub fn pulse_count(&self) -> usize {
        self.pulses().count()
    }

    /// Pulses counting each composite as one.
    pub fn logical_pulse_count(&self) -> usize {
        self.pulses().filter(|p| p.is_logical_start()).count()
    }

    pub fn total_delay(&self) -> f64 {
        self.events
            .iter()
            .map(|e| if let Event::Delay(d) = e { *d } else { 0.0 })
            .sum()
    }

    /// Duration with instantaneous pulses.
    pub fn duration(&self) -> f64 {
        self.total_delay()
    }

    /// End time of each cycle.
    pub fn cycle_boundaries(&self) -> Vec<f64> {
        (1..=self.cycle.cycles).map(|k| k as f64 * self.cycle.duration).collect()
    }

    /// Time of each pulse (instantaneous pulses).
    pub fn pulse_instants(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for ev in &self.events {
            match ev {
                Event::Delay(d) => t += d,
                Event::Pulse(_) => out.push(t),
            }
        }
        out
    }

    /// Lengths of the pulse-free windows, including leading and trailing ones.
    pub fn windows(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut current = 0.0;
        for ev in &self.events {
            match ev {
                Event::Delay(d) => current += d,
                Event::Pulse(_) => {
                    out.push(current);
                    current = 0.0;
                }
            }
        }
        out.push(current);
        out
    }

    /// Repeat the whole timeline `n` times.
    pub fn repeat(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(DdError::invalid("cycle count must be >= 1"));
        }
        let events = normalize_events(self.events.iter().copied().cycle().take(self.events.len() * n));
        Ok(Timeline {
            label: self.label.clone(),
            cycle: CycleInfo { cycles: self.cycle.cycles * n, ..self.cycle },
            events,
        })
    }

    /// Time-reversed event order.
    pub fn reversed(&self) -> Self {
        Timeline {
            label: self.label.clone(),
            cycle: self.cycle,
            events: self.events.iter().rev().copied().collect(),
        }
    }

    /// Every pulse phase shifted by `delta_deg`.
    pub fn phase_shifted(&self, delta_deg: f64) -> Self {
        let events = self
            .events
            .iter()
            .map(|e| match e {
                Event::Pulse(p) => Event::Pulse(Pulse { spec: p.spec.shifted(delta_deg), part: p.part }),
                d => *d,
            })
            .collect();
        Timeline { label: self.label.clone(), cycle: self.cycle, events }
    }

    /// Time-ordered first half, splitting the delay that straddles the midpoint.
    pub fn first_half(&self) -> Result<Self> {
        let mid = self.duration() / 2.0;
        let mut t = 0.0;
        let mut events = Vec::new();
        for ev in &self.events {
            match *ev {
                Event::Delay(d) => {
                    if t + d >= mid {
                        events.push(Event::Delay(mid - t));
                        return Timeline::from_cycle(self.label.clone(), events);
                    }
                    t += d;
                    events.push(Event::Delay(d));
                }
                Event::Pulse(p) => events.push(Event::Pulse(p)),
            }
        }
        Timeline::from_cycle(self.label.clone(), events)
    }

    pub fn pulse_phases_deg(&self) -> Vec<f64> {
        self.pulses().map(|p| p.spec.phase_deg()).collect()
    }

    /// Timing reflection audit: the pulse instants are symmetric about the
    /// timeline centre and the phase multiset is unchanged under reversal.
    pub fn is_reflection_symmetric(&self, tol: f64) -> bool {
        let instants = self.pulse_instants();
        let total = self.duration();
        let n = instants.len();
        let timing = (0..n).all(|i| (instants[i] + instants[n - 1 - i] - total).abs() <= tol);
        let mut fwd = self.pulse_phases_deg();
        let mut rev: Vec<f64> = self.reversed().pulse_phases_deg();
        fwd.sort_by(f64::total_cmp);
        rev.sort_by(f64::total_cmp);
        timing && fwd == rev
    }

    /// Phases read the same forwards and backwards.
    pub fn is_phase_palindrome(&self) -> bool {
        let p = self.pulse_phases_deg();
        p.iter().eq(p.iter().rev())
    }

    /// Line-oriented text form: `D <duration>` / `P <phase_deg> <flip_deg> [c<part>]`,
    /// preceded by `#` metadata lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if !self.label.is_empty() {
            let _ = writeln!(s, "# label {}", self.label);
        }
        let _ = writeln!(s, "# cycles {}", self.cycle.cycles);
        let _ = writeln!(s, "# pulses_per_cycle {}", self.cycle.pulses_per_cycle);
        let _ = writeln!(s, "# cycle_duration {}", self.cycle.duration);
        for ev in &self.events {
            match ev {
                Event::Delay(d) => {
                    let _ = writeln!(s, "D {d}");
                }
                Event::Pulse(p) => {
                    let _ = write!(s, "P {} {}", p.spec.phase_deg(), p.spec.flip_deg());
                    if let Some(part) = p.part {
                        let _ = write!(s, " c{part}");
                    }
                    s.push('\n');
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut label = String::new();
        let mut cycles = None;
        let mut per_cycle = None;
        let mut cycle_duration = None;
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| DdError::Parse { line: line_no, message };
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let mut parts = meta.trim().splitn(2, ' ');
                let key = parts.next().unwrap_or("");
                let value = parts.next().unwrap_or("").trim();
                match key {
                    "label" => label = value.to_string(),
                    "cycles" => cycles = Some(value.parse::<usize>().map_err(|e| err(e.to_string()))?),
                    "pulses_per_cycle" => {
                        per_cycle = Some(value.parse::<usize>().map_err(|e| err(e.to_string()))?)
                    }
                    "cycle_duration" => {
                        cycle_duration = Some(value.parse::<f64>().map_err(|e| err(e.to_string()))?)
                    }
                    _ => {}
                }
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}")));
            match tokens.as_slice() {
                ["D", d] => events.push(Event::Delay(num(d)?)),
                ["P", phase, flip, rest @ ..] => {
                    let spec = PulseSpec::new(num(phase)?, num(flip)?).map_err(|e| err(e.to_string()))?;
                    let part = match rest {
                        [] => None,
                        [tag] => Some(
                            tag.strip_prefix('c')
                                .and_then(|p| p.parse::<u8>().ok())
                                .ok_or_else(|| err(format!("bad composite tag '{tag}'")))?,
                        ),
                        _ => return Err(err("too many fields".into())),
                    };
                    events.push(Event::Pulse(Pulse { spec, part }));
                }
                _ => return Err(err(format!("unrecognised line '{line}'"))),
            }
        }
        let mut t = Timeline::from_cycle(label.clone(), events)?;
        if cycles.is_some() || per_cycle.is_some() || cycle_duration.is_some() {
            let info = CycleInfo {
                duration: cycle_duration.unwrap_or(t.cycle.duration),
                pulses_per_cycle: per_cycle.unwrap_or(t.cycle.pulses_per_cycle),
                cycles: cycles.unwrap_or(1),
            };
            t = Timeline::with_cycle_info(label, t.events, info)?;
        }
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("timeline serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Timeline =
            serde_json::from_str(text).map_err(|e| DdError::Parse { line: e.line(), message: e.to_string() })?;
        Timeline::with_cycle_info(raw.label, raw.events, raw.cycle)
    }
}
