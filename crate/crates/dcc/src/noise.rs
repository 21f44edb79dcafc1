//! Circuit-level noise channels and models.
//!
//! Channels are the standard gate-error vocabulary: single- and two-qubit
//! depolarizing, deterministic-basis flips, and measurement record flips. A
//! [`NoiseModel`] assigns a strength to each circuit location class;
//! [`apply_noise`] rewrites a noiseless circuit into its noisy counterpart:
//!
//! - every two-qubit gate is followed by two-qubit depolarizing noise,
//! - every single-qubit gate and reset is followed by single-qubit
//!   depolarizing noise,
//! - every measurement has its record flipped with the measurement-error
//!   probability and is followed by single-qubit depolarizing noise,
//! - mid-circuit resets optionally acquire an X flip (reset infidelity),
//! - qubits untouched in a tick-delimited layer idle with their own
//!   depolarizing strength.
//!
//! The uniform model ties every strength to a single parameter `p`; the
//! asymmetric model exposes the two-qubit, measurement, and idle strengths
//! separately while pinning single-qubit depolarizing to 0.02%.

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Instruction};
use crate::{Error, Result};

/// Elementary channel kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    /// Flip a recorded X-basis measurement outcome.
    MerrX,
    /// Flip a recorded Z-basis measurement outcome.
    MerrZ,
    /// Flip a recorded joint XX parity outcome.
    MerrXx,
    /// Flip a recorded joint ZZ parity outcome.
    MerrZz,
    /// Apply X with probability p.
    Xerr,
    /// Apply Z with probability p.
    Zerr,
    /// Apply X, Y, or Z each with probability p/3.
    Dep1,
    /// Apply each of the 15 non-identity two-qubit Paulis with probability p/15.
    Dep2,
}

/// One elementary noise channel at strength `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseChannel {
    pub kind: ChannelKind,
    pub p: f64,
}

impl NoiseChannel {
    pub fn new(kind: ChannelKind, p: f64) -> Result<Self> {
        check_probability(p)?;
        Ok(NoiseChannel { kind, p })
    }

    /// The channel's outcome distribution, identity outcome first.
    pub fn outcome_probabilities(&self) -> Vec<f64> {
        let p = self.p;
        match self.kind {
            ChannelKind::Dep1 => {
                let mut v = vec![1.0 - p];
                v.extend(std::iter::repeat(p / 3.0).take(3));
                v
            }
            ChannelKind::Dep2 => {
                let mut v = vec![1.0 - p];
                v.extend(std::iter::repeat(p / 15.0).take(15));
                v
            }
            _ => vec![1.0 - p, p],
        }
    }
}

/// Strength of each circuit location class. `mode` is a free-form label
/// carried into result files ("uniform", "asymmetric", or custom).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Depolarizing strength for qubits idling through a layer.
    pub idle: f64,
    /// Measurement record flip probability.
    pub meas_flip: f64,
    /// Depolarizing strength accompanying each measurement.
    pub meas_dep1: f64,
    /// Depolarizing strength after each two-qubit gate.
    pub two_qubit_dep: f64,
    /// Depolarizing strength after each single-qubit gate and reset.
    pub single_qubit_dep: f64,
    /// X-flip probability after each mid-circuit reset (0 = ideal resets).
    pub reset_flip: f64,
    pub mode: String,
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::BadProbability(p));
    }
    Ok(())
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for p in [
            self.idle,
            self.meas_flip,
            self.meas_dep1,
            self.two_qubit_dep,
            self.single_qubit_dep,
            self.reset_flip,
        ] {
            check_probability(p)?;
        }
        Ok(())
    }
}

/// Uniform model: every location class at strength `p`, ideal resets.
pub fn uniform_model(p: f64) -> Result<NoiseModel> {
    check_probability(p)?;
    Ok(NoiseModel {
        idle: p,
        meas_flip: p,
        meas_dep1: p,
        two_qubit_dep: p,
        single_qubit_dep: p,
        reset_flip: 0.0,
        mode: "uniform".into(),
    })
}

/// Asymmetric model: two-qubit, measurement, and idle strengths free;
/// single-qubit depolarizing (gates, resets, and the measurement companion)
/// fixed at 0.02%.
pub fn asymmetric_model(p_dep2: f64, p_meas: f64, p_idle: f64) -> Result<NoiseModel> {
    for p in [p_dep2, p_meas, p_idle] {
        check_probability(p)?;
    }
    const FIXED_DEP1: f64 = 2e-4;
    Ok(NoiseModel {
        idle: p_idle,
        meas_flip: p_meas,
        meas_dep1: FIXED_DEP1,
        two_qubit_dep: p_dep2,
        single_qubit_dep: FIXED_DEP1,
        reset_flip: 0.0,
        mode: "asymmetric".into(),
    })
}

fn gate_targets(inst: &Instruction) -> Option<Vec<u32>> {
    match inst {
        Instruction::Rz(t) | Instruction::Rx(t) | Instruction::H(t) => Some(t.clone()),
        Instruction::Cx(pairs) => {
            Some(pairs.iter().flat_map(|&(c, t)| [c, t]).collect())
        }
        Instruction::Mz { targets, .. } | Instruction::Mx { targets, .. } => {
            Some(targets.clone())
        }
        _ => None,
    }
}

/// Rewrite a noiseless circuit into its noisy counterpart under `model`.
/// Deterministic transformation: gates keep their positions and only noise
/// instructions are added (zero-strength channels are omitted). Fails if the
/// circuit already carries probabilistic noise.
pub fn apply_noise(circuit: &Circuit, model: &NoiseModel) -> Result<Circuit> {
    model.validate()?;
    if circuit.is_noised() {
        return Err(Error::AlreadyNoised);
    }
    let n = circuit.num_qubits;
    let mut out: Vec<Instruction> = Vec::with_capacity(circuit.instructions.len() * 2);
    // Instructions of the current tick-delimited layer, with the set of
    // qubits its gates touch; flushed (with idle noise) at each Tick.
    let mut layer: Vec<Instruction> = Vec::new();
    let mut touched: Vec<bool> = vec![false; n as usize];
    let mut layer_has_gates = false;
    let mut measured_yet = false;

    let flush = |layer: &mut Vec<Instruction>,
                 touched: &mut Vec<bool>,
                 layer_has_gates: &mut bool,
                 out: &mut Vec<Instruction>| {
        out.append(layer);
        if *layer_has_gates && model.idle > 0.0 {
            let idle: Vec<u32> =
                (0..n).filter(|&q| !touched[q as usize]).collect();
            if !idle.is_empty() {
                out.push(Instruction::Dep1 { p: model.idle, targets: idle });
            }
        }
        touched.iter_mut().for_each(|t| *t = false);
        *layer_has_gates = false;
        out.push(Instruction::Tick);
    };

    for inst in &circuit.instructions {
        if matches!(inst, Instruction::Tick) {
            flush(&mut layer, &mut touched, &mut layer_has_gates, &mut out);
            continue;
        }
        if let Some(targets) = gate_targets(inst) {
            layer_has_gates = true;
            for &q in &targets {
                touched[q as usize] = true;
            }
            match inst {
                Instruction::Mz { targets, .. } => {
                    measured_yet = true;
                    layer.push(Instruction::Mz {
                        flip: model.meas_flip,
                        targets: targets.clone(),
                    });
                    if model.meas_dep1 > 0.0 {
                        layer.push(Instruction::Dep1 {
                            p: model.meas_dep1,
                            targets: targets.clone(),
                        });
                    }
                }
                Instruction::Mx { targets, .. } => {
                    measured_yet = true;
                    layer.push(Instruction::Mx {
                        flip: model.meas_flip,
                        targets: targets.clone(),
                    });
                    if model.meas_dep1 > 0.0 {
                        layer.push(Instruction::Dep1 {
                            p: model.meas_dep1,
                            targets: targets.clone(),
                        });
                    }
                }
                Instruction::Cx(pairs) => {
                    layer.push(inst.clone());
                    if model.two_qubit_dep > 0.0 {
                        layer.push(Instruction::Dep2 {
                            p: model.two_qubit_dep,
                            pairs: pairs.clone(),
                        });
                    }
                }
                Instruction::Rz(t) => {
                    layer.push(inst.clone());
                    if measured_yet && model.reset_flip > 0.0 {
                        layer.push(Instruction::XError {
                            p: model.reset_flip,
                            targets: t.clone(),
                        });
                    }
                    if model.single_qubit_dep > 0.0 {
                        layer.push(Instruction::Dep1 {
                            p: model.single_qubit_dep,
                            targets: t.clone(),
                        });
                    }
                }
                Instruction::Rx(t) | Instruction::H(t) => {
                    layer.push(inst.clone());
                    if model.single_qubit_dep > 0.0 {
                        layer.push(Instruction::Dep1 {
                            p: model.single_qubit_dep,
                            targets: t.clone(),
                        });
                    }
                }
                _ => unreachable!("gate_targets covered all gate kinds"),
            }
        } else {
            // Detectors, observables, and deterministic flip injections pass
            // through untouched and do not affect idle accounting.
            layer.push(inst.clone());
        }
    }
    if !layer.is_empty() {
        out.append(&mut layer);
    }
    let mut noisy = Circuit { instructions: out, num_qubits: n, meta: circuit.meta.clone() };
    noisy.meta.name = circuit.meta.name.clone();
    Ok(noisy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{memory_circuit, Basis, ResetMode};
    use crate::lattice::build_rect_patch;
    use crate::schedule::{build_schedule, ScheduleKind};

    fn small_memory(mode: ResetMode) -> Circuit {
        let layout = build_rect_patch(3, 3);
        let sched = build_schedule(&layout, ScheduleKind::C);
        memory_circuit(&layout, &sched, Basis::Z, 2, mode).unwrap()
    }

    #[test]
    fn channel_distributions_sum_to_one() {
        for kind in [
            ChannelKind::MerrX,
            ChannelKind::MerrZ,
            ChannelKind::MerrXx,
            ChannelKind::MerrZz,
            ChannelKind::Xerr,
            ChannelKind::Zerr,
            ChannelKind::Dep1,
            ChannelKind::Dep2,
        ] {
            let ch = NoiseChannel::new(kind, 0.37).unwrap();
            let probs = ch.outcome_probabilities();
            let total: f64 = probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "{kind:?} sums to {total}");
            let expected = match kind {
                ChannelKind::Dep1 => 4,
                ChannelKind::Dep2 => 16,
                _ => 2,
            };
            assert_eq!(probs.len(), expected);
        }
    }

    #[test]
    fn probability_range_checked() {
        assert!(uniform_model(-0.1).is_err());
        assert!(uniform_model(1.5).is_err());
        assert!(asymmetric_model(0.5, 2.0, 0.0).is_err());
        assert!(NoiseChannel::new(ChannelKind::Dep1, f64::NAN).is_err());
    }

    #[test]
    fn asymmetric_with_overridden_dep1_equals_uniform() {
        let p = 3e-3;
        let mut asym = asymmetric_model(p, p, p).unwrap();
        asym.single_qubit_dep = p;
        asym.meas_dep1 = p;
        asym.mode = "uniform".into();
        assert_eq!(asym, uniform_model(p).unwrap());
    }

    #[test]
    fn zero_strength_model_is_identity() {
        let c = small_memory(ResetMode::Reset);
        let noisy = apply_noise(&c, &uniform_model(0.0).unwrap()).unwrap();
        assert_eq!(c.instructions, noisy.instructions);
    }

    #[test]
    fn double_application_errors() {
        let c = small_memory(ResetMode::Reset);
        let model = uniform_model(1e-3).unwrap();
        let noisy = apply_noise(&c, &model).unwrap();
        assert!(noisy.is_noised());
        assert!(matches!(apply_noise(&noisy, &model), Err(Error::AlreadyNoised)));
    }

    #[test]
    fn gates_preserved_and_noise_placed() {
        let c = small_memory(ResetMode::NoReset);
        let model = uniform_model(1e-3).unwrap();
        let noisy = apply_noise(&c, &model).unwrap();

        let count = |c: &Circuit, pred: &dyn Fn(&Instruction) -> bool| {
            c.instructions.iter().filter(|i| pred(i)).count()
        };
        let is_gate = |i: &Instruction| {
            matches!(
                i,
                Instruction::Rz(_)
                    | Instruction::Rx(_)
                    | Instruction::H(_)
                    | Instruction::Cx(_)
                    | Instruction::Mz { .. }
                    | Instruction::Mx { .. }
            )
        };
        assert_eq!(count(&c, &is_gate), count(&noisy, &is_gate));
        assert_eq!(
            count(&c, &|i| matches!(i, Instruction::Cx(_))),
            count(&noisy, &|i| matches!(i, Instruction::Dep2 { .. }))
        );
        // Every measurement layer carries its companion depolarizing noise.
        let mz = count(&noisy, &|i| matches!(i, Instruction::Mz { flip, .. } if *flip == 1e-3));
        assert_eq!(mz, count(&c, &|i| matches!(i, Instruction::Mz { .. })));
        assert!(count(&noisy, &|i| matches!(i, Instruction::Dep1 { .. })) > 0);
    }

    #[test]
    fn idle_noise_targets_untouched_qubits_only() {
        let mut c = Circuit::new(4);
        c.instructions.push(Instruction::H(vec![0]));
        c.instructions.push(Instruction::Tick);
        c.instructions.push(Instruction::Cx(vec![(0, 1)]));
        c.instructions.push(Instruction::Tick);
        let model = uniform_model(0.01).unwrap();
        let noisy = apply_noise(&c, &model).unwrap();
        let idles: Vec<Vec<u32>> = noisy
            .instructions
            .iter()
            .filter_map(|i| match i {
                Instruction::Dep1 { targets, .. } => Some(targets.clone()),
                _ => None,
            })
            .collect();
        // Layer 1: H on 0 -> gate dep1 on [0], idle dep1 on [1,2,3].
        // Layer 2: CX(0,1) -> idle dep1 on [2,3].
        assert_eq!(idles[0], vec![0]);
        assert_eq!(idles[1], vec![1, 2, 3]);
        assert_eq!(idles[2], vec![2, 3]);
    }

    #[test]
    fn reset_flip_only_after_first_measurement() {
        let c = small_memory(ResetMode::Reset);
        let mut model = uniform_model(1e-3).unwrap();
        model.reset_flip = 0.01;
        let noisy = apply_noise(&c, &model).unwrap();
        let mut seen_meas = false;
        let (mut pre, mut post) = (0usize, 0usize);
        for inst in &noisy.instructions {
            match inst {
                Instruction::Mz { .. } | Instruction::Mx { .. } => seen_meas = true,
                Instruction::XError { p, .. } if *p == 0.01 => {
                    if seen_meas {
                        post += 1;
                    } else {
                        pre += 1;
                    }
                }
                _ => {}
            }
        }
        assert_eq!(pre, 0, "prep resets must stay ideal");
        assert!(post > 0, "ancilla resets must acquire the flip");
    }
}
