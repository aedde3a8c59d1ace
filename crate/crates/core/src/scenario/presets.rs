//! Preset registry and the runners behind each preset.

use crate::engine::{
    ensemble_maps, evolve_checkpoints, ideal_propagator, par_map, timeline_propagator, ErrorSpread,
};
use crate::error::{DdError, Result};
use crate::noise::{NoiseModel, NoiseTrajectory};
use crate::process::{chi_fidelity, unitary_fidelity, ChiMatrix, QuantumMap};
use crate::pulse_errors::{timeline_segments, PulseErrorModel, PulseMode};
use crate::sequences::{parse_sequence_name, SequenceSpec};
use crate::su2::{effective_generator, Operator2};
use crate::timeline::Timeline;
use crate::trace::{decoherence_time_1e, echo_positions, magnetization_trace, min_window, uniform_times};

use super::table::{ResultTable, Value};
use super::{linspace, preset_ou_noise, Params};

/// Name of the free-form sweep used when no preset is given.
pub const CUSTOM: &str = "custom";

/// Pulse budget of the robustness maps.
pub const FIG5_PULSES: usize = 1680;
/// Fixed total time of the cycle-time sweep (us).
pub const CYCLE_TIME_TOTAL: f64 = 1280.0;
/// Cycle counts of the cycle-time sweep.
pub const CYCLE_TIME_CYCLES: [usize; 8] = [1, 2, 4, 8, 16, 32, 64, 128];
/// Duty cycles of the decoherence-time sweep.
pub const FIG7_DUTY: [f64; 6] = [0.02, 0.05, 0.1, 0.2, 0.3, 0.5];
/// Simulated span per duty-cycle point (us).
pub const FIG7_SPAN: f64 = 6000.0;

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// False for presets that are noise-free by construction.
    pub accepts_noise: bool,
    pub defaults: fn() -> Params,
    pub run: fn(&Params) -> Result<Vec<ResultTable>>,
}

pub static PRESETS: &[Preset] = &[
    Preset {
        name: "fig2",
        description: "CPMG vs XY-4 magnetization decays and chi matrices after 1 and 40 cycles",
        accepts_noise: true,
        defaults: fig2_defaults,
        run: fig2,
    },
    Preset {
        name: "fig3",
        description: "echo positions of Hahn, symmetric and asymmetric XY-4 under static dephasing",
        accepts_noise: true,
        defaults: fig3_defaults,
        run: fig3,
    },
    Preset {
        name: "fig4",
        description: "fidelity after 20 pulses vs flip-angle error for CPMG, XY-4 and KDD",
        accepts_noise: true,
        defaults: fig4_defaults,
        run: fig4,
    },
    Preset {
        name: "fig5",
        description: "fidelity after 1680 pulses on an (epsilon, delta) grid for CDD1-3, XY-8, XY-16 and KDD",
        accepts_noise: false,
        defaults: fig5_defaults,
        run: fig5,
    },
    Preset {
        name: "fig6",
        description: "XY-16 from symmetric vs asymmetric blocks: fidelity decay, Bloch track, generator",
        accepts_noise: true,
        defaults: fig6_defaults,
        run: symmetry_comparison,
    },
    Preset {
        name: "fig_cdd_sym",
        description: "CDD2 standard vs symmetric: fidelity decay and generator",
        accepts_noise: true,
        defaults: fig_cdd_sym_defaults,
        run: symmetry_comparison,
    },
    Preset {
        name: "fig7",
        description: "decoherence time vs duty cycle with finite pulses",
        accepts_noise: true,
        defaults: fig7_defaults,
        run: fig7,
    },
    Preset {
        name: "cycle_time",
        description: "fidelity at fixed total time vs cycle time (XY-4, OU noise)",
        accepts_noise: true,
        defaults: cycle_time_defaults,
        run: cycle_time,
    },
];

static CUSTOM_PRESET: Preset = Preset {
    name: CUSTOM,
    description: "sweep the given sequences over the error grid",
    accepts_noise: true,
    defaults: custom_defaults,
    run: custom,
};

pub fn find_preset(name: &str) -> Result<&'static Preset> {
    if name == CUSTOM {
        return Ok(&CUSTOM_PRESET);
    }
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| DdError::UnknownPreset(name.to_string()))
}

/// Registered presets with one-line descriptions, in a fixed order.
pub fn list_presets() -> Vec<(&'static str, &'static str)> {
    PRESETS.iter().map(|p| (p.name, p.description)).collect()
}

fn spec(name: &str, tau: f64, cycles: usize) -> SequenceSpec {
    parse_sequence_name(name, tau, cycles).expect("preset sequence names are valid")
}

fn base(sequences: Vec<SequenceSpec>, noise: NoiseModel) -> Params {
    Params {
        sequences,
        epsilon: vec![0.0],
        delta: vec![0.0],
        pulse_mode: PulseMode::Instantaneous,
        error_spread: ErrorSpread::default(),
        noise,
        ensemble: 256,
        seed: 1,
    }
}

fn single(values: &[f64], what: &str, preset: &str) -> Result<f64> {
    match values {
        [v] => Ok(*v),
        _ => Err(DdError::Config(format!("{preset} takes a single {what} value"))),
    }
}

/// Time zero followed by every cycle boundary.
fn stroboscopic(t: &Timeline) -> Vec<f64> {
    std::iter::once(0.0).chain(t.cycle_boundaries()).collect()
}

/// Ideal propagators at the given times.
fn ideal_at(t: &Timeline, times: &[f64]) -> Result<Vec<Operator2>> {
    let em = PulseErrorModel::ideal();
    let schedule = timeline_segments(t, &em)?;
    evolve_checkpoints(&schedule, &em, &NoiseTrajectory::zero(), times)
}

fn chi_fid(map: &QuantumMap, ideal: &Operator2) -> Result<f64> {
    chi_fidelity(&map.to_chi(), &ChiMatrix::from_unitary(ideal))
}

fn deterministic(p: &Params) -> bool {
    p.noise.is_none() && p.error_spread.is_zero()
}

fn custom_defaults() -> Params {
    base(Vec::new(), NoiseModel::None)
}

fn custom(p: &Params) -> Result<Vec<ResultTable>> {
    let mut table =
        ResultTable::new("sweep", &["sequence", "epsilon", "delta", "fidelity_propagator", "fidelity_chi"]);
    for s in &p.sequences {
        let t = p.build(s)?;
        let ideal = ideal_propagator(&t)?;
        let points: Vec<(f64, f64)> =
            p.epsilon.iter().flat_map(|&e| p.delta.iter().map(move |&d| (e, d))).collect();
        let rows = par_map(points.len(), |k| {
            let (e, d) = points[k];
            let em = p.error_model(e, d)?;
            let u = timeline_propagator(&t, &em)?;
            let f_prop = unitary_fidelity(&u, &ideal)?;
            let f_chi = if deterministic(p) {
                chi_fidelity(&ChiMatrix::from_unitary(&u), &ChiMatrix::from_unitary(&ideal))?
            } else {
                let map = ensemble_maps(&t, &em, &p.noise, &p.ensemble_config(), &[t.duration()])?;
                chi_fid(&map[0], &ideal)?
            };
            Ok((e, d, f_prop, f_chi))
        })?;
        for (e, d, fp, fc) in rows {
            table.push(vec![t.label().into(), e.into(), d.into(), fp.into(), fc.into()]);
        }
    }
    Ok(vec![table])
}

fn fig2_defaults() -> Params {
    let mut p = base(vec![spec("cpmg", 40.0, 40), spec("xy4s", 40.0, 40)], preset_ou_noise());
    p.epsilon = vec![0.02];
    p
}

fn push_chi(table: &mut ResultTable, case: &str, label: &str, cycles: usize, chi: &ChiMatrix) {
    for m in 0..4 {
        for n in 0..4 {
            let c = chi.m[m][n];
            table.push(vec![
                case.into(),
                label.into(),
                cycles.into(),
                m.into(),
                n.into(),
                c.re.into(),
                c.im.into(),
            ]);
        }
    }
}

/// Chi matrices after the first and the last cycle.
fn chi_first_last(t: &Timeline, em: &PulseErrorModel, noise: &NoiseModel, p: &Params, spread: ErrorSpread) -> Result<[(usize, ChiMatrix); 2]> {
    let cycles = t.cycle().cycles;
    let bounds = t.cycle_boundaries();
    let mut cfg = p.ensemble_config();
    cfg.error_spread = spread;
    let maps = ensemble_maps(t, em, noise, &cfg, &[bounds[0], bounds[cycles - 1]])?;
    Ok([(1, maps[0].to_chi()), (cycles, maps[1].to_chi())])
}

fn fig2(p: &Params) -> Result<Vec<ResultTable>> {
    let eps = single(&p.epsilon, "epsilon", "fig2")?;
    let delta = single(&p.delta, "delta", "fig2")?;
    let em = p.error_model(eps, delta)?;
    let mut decay = ResultTable::new("decay", &["sequence", "initial", "cycle", "time", "mx", "my", "mz"]);
    let mut chi = ResultTable::new("chi", &["case", "sequence", "cycles", "m", "n", "re", "im"]);
    for s in &p.sequences {
        let t = p.build(s)?;
        let times = stroboscopic(&t);
        let maps = ensemble_maps(&t, &em, &p.noise, &p.ensemble_config(), &times)?;
        for (name, init) in [("x", [1.0, 0.0, 0.0]), ("y", [0.0, 1.0, 0.0])] {
            for (k, m) in maps.iter().enumerate() {
                let r = m.apply_bloch(init);
                decay.push(vec![
                    t.label().into(),
                    name.into(),
                    k.into(),
                    times[k].into(),
                    r[0].into(),
                    r[1].into(),
                    r[2].into(),
                ]);
            }
        }
        let last = maps.len() - 1;
        push_chi(&mut chi, "preset", t.label(), 1, &maps[1.min(last)].to_chi());
        push_chi(&mut chi, "preset", t.label(), last, &maps[last].to_chi());
    }
    // reference cases for the two limiting chi forms
    let cp = spec("cp", 40.0, 40).build()?;
    let inhomogeneous = PulseErrorModel::instantaneous(0.0, 0.0)?;
    let spread = ErrorSpread { epsilon: 0.05, delta: 0.0 };
    for (cycles, c) in chi_first_last(&cp, &inhomogeneous, &NoiseModel::None, p, spread)? {
        push_chi(&mut chi, "inhomogeneous", cp.label(), cycles, &c);
    }
    let xy4 = spec("xy4s", 40.0, 40).build()?;
    let strong = NoiseModel::OrnsteinUhlenbeck { sigma: 0.05, tau_corr: 20.0 };
    let em = PulseErrorModel::instantaneous(0.02, 0.0)?;
    for (cycles, c) in chi_first_last(&xy4, &em, &strong, p, ErrorSpread::default())? {
        push_chi(&mut chi, "dephasing", xy4.label(), cycles, &c);
    }
    Ok(vec![decay, chi])
}

fn fig3_defaults() -> Params {
    let mut p = base(
        vec![spec("hahn", 10.0, 1), spec("xy4s", 10.0, 2), spec("xy4a", 10.0, 2)],
        NoiseModel::StaticDephasing { sigma: 0.5 },
    );
    p.ensemble = 1024;
    p
}

fn fig3(p: &Params) -> Result<Vec<ResultTable>> {
    let eps = single(&p.epsilon, "epsilon", "fig3")?;
    let delta = single(&p.delta, "delta", "fig3")?;
    let em = p.error_model(eps, delta)?;
    let mut table = ResultTable::new("echo", &["sequence", "kind", "index", "time"]);
    for s in &p.sequences {
        let t = p.build(s)?;
        let total = t.duration();
        let samples = (16.0 * total / min_window(&t)).ceil() as usize;
        let times = uniform_times(total, samples);
        let trace = magnetization_trace(&t, &em, &p.noise, [1.0, 0.0, 0.0], &times, &p.ensemble_config())?;
        for (k, time) in t.pulse_instants().into_iter().enumerate() {
            table.push(vec![t.label().into(), "pulse".into(), k.into(), time.into()]);
        }
        for (k, time) in echo_positions(&trace)?.into_iter().enumerate() {
            table.push(vec![t.label().into(), "echo".into(), k.into(), time.into()]);
        }
    }
    Ok(vec![table])
}

fn fig4_defaults() -> Params {
    let mut p = base(vec![spec("cpmg", 1.0, 10), spec("xy4s", 1.0, 5), spec("kdd", 1.0, 1)], NoiseModel::None);
    p.epsilon = linspace(-0.5, 0.5, 401);
    p.ensemble = 1;
    p
}

fn fig4(p: &Params) -> Result<Vec<ResultTable>> {
    let delta = single(&p.delta, "delta", "fig4")?;
    let mut table = ResultTable::new("fidelity", &["sequence", "epsilon", "fidelity_propagator", "fidelity_chi"]);
    for s in &p.sequences {
        let t = p.build(s)?;
        let ideal = ideal_propagator(&t)?;
        let rows = par_map(p.epsilon.len(), |k| {
            let em = p.error_model(p.epsilon[k], delta)?;
            let u = timeline_propagator(&t, &em)?;
            let f_prop = unitary_fidelity(&u, &ideal)?;
            let f_chi = if deterministic(p) {
                chi_fidelity(&ChiMatrix::from_unitary(&u), &ChiMatrix::from_unitary(&ideal))?
            } else {
                let map = ensemble_maps(&t, &em, &p.noise, &p.ensemble_config(), &[t.duration()])?;
                chi_fid(&map[0], &ideal)?
            };
            Ok((f_prop, f_chi))
        })?;
        for (k, (fp, fc)) in rows.into_iter().enumerate() {
            table.push(vec![t.label().into(), p.epsilon[k].into(), fp.into(), fc.into()]);
        }
    }
    Ok(vec![table])
}

fn fig5_defaults() -> Params {
    let names = ["cdd1", "cdd2", "cdd3", "xy8s", "xy16s", "kdd"];
    let mut p = base(names.iter().map(|n| spec(n, 1.0, 1)).collect(), NoiseModel::None);
    p.epsilon = linspace(-0.4, 0.4, 81);
    p.delta = linspace(-0.4, 0.4, 81);
    p.ensemble = 1;
    p
}

/// Cycles needed to spend the fixed pulse budget.
pub fn budget_cycles(spec: &SequenceSpec, budget: usize) -> Result<usize> {
    let mut one = spec.clone();
    one.cycles = 1;
    let per_cycle = one.build()?.logical_pulse_count();
    if per_cycle == 0 || !budget.is_multiple_of(per_cycle) {
        return Err(DdError::Config(format!(
            "{budget} pulses are not a whole number of {}-pulse cycles",
            per_cycle
        )));
    }
    Ok(budget / per_cycle)
}

fn fig5(p: &Params) -> Result<Vec<ResultTable>> {
    let mut table = ResultTable::new("robustness", &["sequence", "epsilon", "delta", "fidelity"]);
    let points: Vec<(f64, f64)> = p.epsilon.iter().flat_map(|&e| p.delta.iter().map(move |&d| (e, d))).collect();
    for s in &p.sequences {
        let mut s = s.clone();
        s.cycles = budget_cycles(&s, FIG5_PULSES)?;
        let t = p.build(&s)?;
        let ideal = ideal_propagator(&t)?;
        let fids = par_map(points.len(), |k| {
            let (e, d) = points[k];
            let u = timeline_propagator(&t, &p.error_model(e, d)?)?;
            unitary_fidelity(&u, &ideal)
        })?;
        for ((e, d), f) in points.iter().zip(fids) {
            table.push(vec![t.label().into(), (*e).into(), (*d).into(), f.into()]);
        }
    }
    Ok(vec![table])
}

fn symmetry_defaults(names: [&str; 2]) -> Params {
    let mut p = base(names.iter().map(|n| spec(n, 10.0, 40)).collect(), preset_ou_noise());
    p.epsilon = vec![0.01, 0.03, 0.05];
    p.delta = vec![0.01];
    p.pulse_mode = PulseMode::Finite { pulse_duration: 1.0 };
    p
}

fn fig6_defaults() -> Params {
    symmetry_defaults(["xy16s", "xy16a"])
}

fn fig_cdd_sym_defaults() -> Params {
    symmetry_defaults(["cdd2s", "cdd2a"])
}

fn symmetry_comparison(p: &Params) -> Result<Vec<ResultTable>> {
    let mut decay = ResultTable::new(
        "decay",
        &["sequence", "epsilon", "delta", "cycle", "time", "fidelity", "mx", "my"],
    );
    let mut generator = ResultTable::new(
        "generator",
        &["sequence", "epsilon", "delta", "axis_x", "axis_y", "axis_z", "rate", "z_rate"],
    );
    for s in &p.sequences {
        let t = p.build(s)?;
        let times = stroboscopic(&t);
        let ideal = ideal_at(&t, &times)?;
        for &e in &p.epsilon {
            for &d in &p.delta {
                let em = p.error_model(e, d)?;
                let maps = ensemble_maps(&t, &em, &p.noise, &p.ensemble_config(), &times)?;
                for (k, m) in maps.iter().enumerate() {
                    let r = m.apply_bloch([1.0, 0.0, 0.0]);
                    decay.push(vec![
                        t.label().into(),
                        e.into(),
                        d.into(),
                        k.into(),
                        times[k].into(),
                        chi_fid(m, &ideal[k])?.into(),
                        r[0].into(),
                        r[1].into(),
                    ]);
                }
                let u = timeline_propagator(&t, &em)?;
                let g = effective_generator(&u, t.duration())?;
                let v = g.vector();
                generator.push(vec![
                    t.label().into(),
                    e.into(),
                    d.into(),
                    g.axis[0].into(),
                    g.axis[1].into(),
                    g.axis[2].into(),
                    g.rate.into(),
                    v[2].into(),
                ]);
            }
        }
    }
    Ok(vec![decay, generator])
}

fn fig7_defaults() -> Params {
    let mut p = base(vec![spec("xy4s", 10.0, 1), spec("kdd", 10.0, 1)], preset_ou_noise());
    p.epsilon = vec![0.02];
    p.pulse_mode = PulseMode::Finite { pulse_duration: 1.0 };
    p
}

fn fig7(p: &Params) -> Result<Vec<ResultTable>> {
    let eps = single(&p.epsilon, "epsilon", "fig7")?;
    let delta = single(&p.delta, "delta", "fig7")?;
    let em = p.error_model(eps, delta)?;
    let t_p = match p.pulse_mode {
        PulseMode::Finite { pulse_duration } => pulse_duration,
        PulseMode::Instantaneous => return Err(DdError::Config("fig7 needs finite pulses".into())),
    };
    let mut table = ResultTable::new(
        "t2",
        &["sequence", "epsilon", "duty_cycle", "tau", "pulse_duration", "cycles", "t2"],
    );
    for s in &p.sequences {
        let mut unit = s.clone();
        unit.tau = 1.0;
        unit.cycles = 1;
        let one = p.build(&unit)?;
        let pulse_time: f64 = one.pulses().map(|q| em.duration_of(&q.spec)).sum();
        let delay_per_tau = one.duration();
        for duty in FIG7_DUTY {
            let tau = pulse_time / (duty * delay_per_tau);
            let cycles = ((FIG7_SPAN / (delay_per_tau * tau)).round() as usize).max(1);
            let mut run = s.clone();
            run.tau = tau;
            run.cycles = cycles;
            let t = p.build(&run)?;
            let times = stroboscopic(&t);
            let trace = magnetization_trace(&t, &em, &p.noise, [1.0, 0.0, 0.0], &times, &p.ensemble_config())?;
            let t2 = decoherence_time_1e(&trace)?;
            table.push(vec![
                t.label().into(),
                eps.into(),
                duty.into(),
                tau.into(),
                t_p.into(),
                cycles.into(),
                Value::Float(t2),
            ]);
        }
    }
    Ok(vec![table])
}

fn cycle_time_defaults() -> Params {
    let mut p = base(vec![spec("xy4s", 10.0, 1)], preset_ou_noise());
    p.epsilon = vec![0.03];
    p
}

fn cycle_time(p: &Params) -> Result<Vec<ResultTable>> {
    let mut table = ResultTable::new("optimum", &["sequence", "epsilon", "delta", "cycles", "tau", "fidelity"]);
    for s in &p.sequences {
        let mut unit = s.clone();
        unit.tau = 1.0;
        unit.cycles = 1;
        let delay_per_tau = p.build(&unit)?.duration();
        for &e in &p.epsilon {
            for &d in &p.delta {
                let em = p.error_model(e, d)?;
                for cycles in CYCLE_TIME_CYCLES {
                    let mut run = s.clone();
                    run.tau = CYCLE_TIME_TOTAL / (cycles as f64 * delay_per_tau);
                    run.cycles = cycles;
                    let t = p.build(&run)?;
                    let ideal = ideal_propagator(&t)?;
                    let map = ensemble_maps(&t, &em, &p.noise, &p.ensemble_config(), &[t.duration()])?;
                    table.push(vec![
                        t.label().into(),
                        e.into(),
                        d.into(),
                        cycles.into(),
                        run.tau.into(),
                        chi_fid(&map[0], &ideal)?.into(),
                    ]);
                }
            }
        }
    }
    Ok(vec![table])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_order_and_lookup() {
        let names: Vec<&str> = list_presets().iter().map(|(n, _)| *n).collect();
        assert_eq!(&names[..7], &["fig2", "fig3", "fig4", "fig5", "fig6", "fig_cdd_sym", "fig7"]);
        assert!(find_preset("fig5").is_ok());
        assert!(find_preset(CUSTOM).is_ok());
        assert!(matches!(find_preset("nope"), Err(DdError::UnknownPreset(_))));
    }

    #[test]
    fn defaults_validate() {
        for p in PRESETS {
            let params = (p.defaults)();
            params.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }

    #[test]
    fn pulse_budget() {
        assert_eq!(budget_cycles(&spec("cdd3", 1.0, 1), FIG5_PULSES).unwrap(), 20);
        assert_eq!(budget_cycles(&spec("xy16s", 1.0, 1), FIG5_PULSES).unwrap(), 105);
        assert_eq!(budget_cycles(&spec("kdd", 1.0, 1), FIG5_PULSES).unwrap(), 84);
        assert!(budget_cycles(&spec("udd11", 1.0, 1), FIG5_PULSES).is_err());
    }

    #[test]
    fn small_custom_sweep() {
        let mut p = custom_defaults();
        p.sequences = vec![spec("xy4s", 1.0, 2)];
        p.epsilon = vec![0.0, 0.1];
        let t = &custom(&p).unwrap()[0];
        let f = t.f64_column("fidelity_propagator").unwrap();
        assert!((f[0] - 1.0).abs() < 1e-12 && f[1] < 1.0);
        let fc = t.f64_column("fidelity_chi").unwrap();
        assert!((fc[1] - f[1] * f[1]).abs() < 1e-12);
    }
}
