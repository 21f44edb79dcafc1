//! Period-4 measurement schedules over a layout's gauge checks.
//!
//! A schedule lists, for each of the four steps in a cycle, which checks are
//! measured. Steps 1 and 3 measure every X check; steps 2 and 4 measure
//! subsets of the Z checks subject to two structural rules:
//!
//! - **pair rule**: the two edge checks of a bulk Z face are measured together
//!   or not at all within a step;
//! - **boundary rule**: boundary Z singles are measured at every even step.
//!
//! The named schedules differ only in which bulk pairs each even step omits,
//! controlled per face row by the face's rank (its position among the Z faces
//! of its row, counted from the left):
//!
//! - `schedule_a`: omits nothing — all Z checks, both even steps. Measuring
//!   every edge every even step collapses the surviving X structure to full
//!   row strips, so X detectors grow with the patch width (the static
//!   comparator).
//! - `schedule_b`: step 2 omits ranks ≡ 0 (mod 3), step 4 omits ranks ≡ 1
//!   (mod 3); every pair is still measured at least once per cycle.
//! - `schedule_c`: step 2 omits odd ranks, step 4 omits even ranks, so each
//!   bulk pair is measured exactly once per cycle while boundary singles run
//!   twice. This keeps every detector at constant size.

use crate::circuit::Basis;
use crate::lattice::HeavyHexLayout;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ScheduleKind {
    A,
    B,
    C,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScheduleKind::A => write!(f, "A"),
            ScheduleKind::B => write!(f, "B"),
            ScheduleKind::C => write!(f, "C"),
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(ScheduleKind::A),
            "B" | "b" => Ok(ScheduleKind::B),
            "C" | "c" => Ok(ScheduleKind::C),
            other => Err(Error::Invalid(format!("unknown schedule {other:?} (expected A, B, or C)"))),
        }
    }
}

/// One step of a cycle: `step_index` is 1-based (1..=4).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasurementStep {
    pub step_index: usize,
    /// Check ids measured this step, sorted.
    pub checks: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Schedule {
    pub name: String,
    pub steps: Vec<MeasurementStep>,
}

impl Schedule {
    /// Checks measured at 1-based step `i` (1..=4).
    pub fn step(&self, i: usize) -> &MeasurementStep {
        &self.steps[i - 1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleViolation {
    /// An odd step omits an X check or includes a Z check.
    XStepViolation { step: usize },
    /// A bulk pair split within one step.
    PairRuleViolation { step: usize, check: usize },
    /// A boundary single missing from an even step.
    BoundaryRuleViolation { step: usize, check: usize },
    /// A Z check never measured in the whole cycle.
    Uncovered { check: usize },
    BadStepCount { count: usize },
    UnknownCheck { step: usize, check: usize },
}

/// Rank of each bulk Z face within its face row: position among that row's
/// Z faces counted from column 0. Both edge checks of a face share its rank.
fn pair_ranks(layout: &HeavyHexLayout) -> HashMap<usize, usize> {
    // z_pairs are built face-row-major, so group by face row via the pair's
    // top-edge coordinate and count left to right.
    let mut by_row: HashMap<i32, Vec<(i32, usize, usize)>> = HashMap::new();
    for &(a, b) in &layout.z_pairs {
        let (ra, ca) = layout.checks[a].coord;
        let (rb, _) = layout.checks[b].coord;
        // Face row = the smaller edge row (top edge of the face).
        let face_row = ra.min(rb);
        by_row.entry(face_row).or_default().push((ca, a, b));
    }
    let mut ranks = HashMap::new();
    for (_, mut faces) in by_row {
        faces.sort_unstable();
        for (rank, (_, a, b)) in faces.into_iter().enumerate() {
            ranks.insert(a, rank);
            ranks.insert(b, rank);
        }
    }
    ranks
}

/// Build one of the named period-4 schedules for a layout.
pub fn build_schedule(layout: &HeavyHexLayout, kind: ScheduleKind) -> Schedule {
    let omit = |rank: usize, even_step: usize| -> bool {
        match kind {
            ScheduleKind::A => false,
            ScheduleKind::B => {
                if even_step == 2 {
                    rank % 3 == 0
                } else {
                    rank % 3 == 1
                }
            }
            ScheduleKind::C => {
                if even_step == 2 {
                    rank % 2 == 1
                } else {
                    rank % 2 == 0
                }
            }
        }
    };
    let ranks = pair_ranks(layout);
    let x_all = layout.x_check_ids();
    let mut steps = Vec::with_capacity(4);
    for step_index in 1..=4 {
        let checks = if step_index % 2 == 1 {
            x_all.clone()
        } else {
            let mut z = Vec::new();
            for ch in &layout.checks {
                if ch.basis != Basis::Z {
                    continue;
                }
                let keep = match ranks.get(&ch.id) {
                    Some(&rank) => !omit(rank, step_index),
                    None => true, // boundary single: every even step
                };
                if keep {
                    z.push(ch.id);
                }
            }
            z.sort_unstable();
            z
        };
        steps.push(MeasurementStep { step_index, checks });
    }
    Schedule { name: kind.to_string(), steps }
}

/// Build a schedule from explicit per-step check sets (1-based step order).
pub fn custom_schedule(name: &str, step_checks: [Vec<usize>; 4]) -> Schedule {
    let steps = step_checks
        .into_iter()
        .enumerate()
        .map(|(i, mut checks)| {
            checks.sort_unstable();
            checks.dedup();
            MeasurementStep { step_index: i + 1, checks }
        })
        .collect();
    Schedule { name: name.to_string(), steps }
}

pub fn validate_schedule(layout: &HeavyHexLayout, schedule: &Schedule) -> Vec<ScheduleViolation> {
    let mut v = Vec::new();
    if schedule.steps.len() != 4 {
        v.push(ScheduleViolation::BadStepCount { count: schedule.steps.len() });
        return v;
    }
    let x_all: HashSet<usize> = layout.x_check_ids().into_iter().collect();
    let mut z_seen: HashSet<usize> = HashSet::new();
    for step in &schedule.steps {
        let set: HashSet<usize> = step.checks.iter().copied().collect();
        for &ch in &step.checks {
            if ch >= layout.checks.len() {
                v.push(ScheduleViolation::UnknownCheck { step: step.step_index, check: ch });
            }
        }
        if v.iter().any(|x| matches!(x, ScheduleViolation::UnknownCheck { .. })) {
            return v;
        }
        if step.step_index % 2 == 1 {
            if set != x_all {
                v.push(ScheduleViolation::XStepViolation { step: step.step_index });
            }
        } else {
            for &ch in &step.checks {
                if layout.checks[ch].basis != Basis::Z {
                    v.push(ScheduleViolation::XStepViolation { step: step.step_index });
                    continue;
                }
                z_seen.insert(ch);
                if let Some(partner) = layout.pair_partner(ch) {
                    if !set.contains(&partner) {
                        v.push(ScheduleViolation::PairRuleViolation { step: step.step_index, check: ch });
                    }
                }
            }
            for ch in &layout.checks {
                if ch.basis == Basis::Z && ch.is_boundary && !set.contains(&ch.id) {
                    v.push(ScheduleViolation::BoundaryRuleViolation { step: step.step_index, check: ch.id });
                }
            }
        }
    }
    for ch in &layout.checks {
        if ch.basis == Basis::Z && !z_seen.contains(&ch.id) {
            v.push(ScheduleViolation::Uncovered { check: ch.id });
        }
    }
    v
}

#[derive(Serialize, Deserialize)]
struct ScheduleJson {
    version: u32,
    name: String,
    steps: Vec<StepJson>,
}

#[derive(Serialize, Deserialize)]
struct StepJson {
    step: usize,
    check_ids: Vec<usize>,
}

impl Schedule {
    pub fn to_json(&self) -> String {
        let doc = ScheduleJson {
            version: 1,
            name: self.name.clone(),
            steps: self
                .steps
                .iter()
                .map(|s| StepJson { step: s.step_index, check_ids: s.checks.clone() })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("schedule serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Schedule> {
        let doc: ScheduleJson = serde_json::from_str(text)?;
        let steps = doc
            .steps
            .into_iter()
            .map(|s| MeasurementStep { step_index: s.step, checks: s.check_ids })
            .collect();
        Ok(Schedule { name: doc.name, steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_memory_layout;

    #[test]
    fn all_named_schedules_validate() {
        for d in [3, 5, 7, 9] {
            let layout = build_memory_layout(d).unwrap();
            for kind in [ScheduleKind::A, ScheduleKind::B, ScheduleKind::C] {
                let s = build_schedule(&layout, kind);
                let v = validate_schedule(&layout, &s);
                assert!(v.is_empty(), "d={d} {kind}: {v:?}");
            }
        }
    }

    #[test]
    fn schedule_a_measures_everything_every_even_step() {
        let layout = build_memory_layout(5).unwrap();
        let s = build_schedule(&layout, ScheduleKind::A);
        let all_z = layout.z_check_ids();
        assert_eq!(s.step(2).checks, all_z);
        assert_eq!(s.step(4).checks, all_z);
        assert_eq!(s.step(1).checks, layout.x_check_ids());
        assert_eq!(s.step(3).checks, layout.x_check_ids());
    }

    #[test]
    fn schedule_c_alternates_bulk_pairs() {
        let layout = build_memory_layout(5).unwrap();
        let s = build_schedule(&layout, ScheduleKind::C);
        let step2: std::collections::HashSet<_> = s.step(2).checks.iter().copied().collect();
        let step4: std::collections::HashSet<_> = s.step(4).checks.iter().copied().collect();
        for &(a, b) in &layout.z_pairs {
            let in2 = step2.contains(&a);
            assert_eq!(step2.contains(&a), step2.contains(&b), "pair rule step 2");
            assert_eq!(step4.contains(&a), step4.contains(&b), "pair rule step 4");
            // Bulk pairs appear in exactly one of the two even steps.
            assert_ne!(in2, step4.contains(&a), "bulk pair measured exactly once per cycle");
        }
        // Boundary singles in both.
        for ch in &layout.checks {
            if ch.basis == Basis::Z && ch.is_boundary {
                assert!(step2.contains(&ch.id) && step4.contains(&ch.id));
            }
        }
    }

    #[test]
    fn schedule_b_covers_every_pair_with_phase_disjoint_omissions() {
        let layout = build_memory_layout(7).unwrap();
        let s = build_schedule(&layout, ScheduleKind::B);
        let step2: std::collections::HashSet<_> = s.step(2).checks.iter().copied().collect();
        let step4: std::collections::HashSet<_> = s.step(4).checks.iter().copied().collect();
        for &(a, _) in &layout.z_pairs {
            assert!(step2.contains(&a) || step4.contains(&a), "pair covered in cycle");
        }
        // B omits a strict subset: step 2 smaller than the full Z set.
        assert!(step2.len() < layout.z_check_ids().len());
        assert!(step4.len() < layout.z_check_ids().len());
    }

    #[test]
    fn validator_flags_split_pair() {
        let layout = build_memory_layout(5).unwrap();
        let mut s = build_schedule(&layout, ScheduleKind::A);
        let (a, _) = layout.z_pairs[0];
        s.steps[1].checks.retain(|&c| c != a);
        let v = validate_schedule(&layout, &s);
        assert!(v.iter().any(|x| matches!(x, ScheduleViolation::PairRuleViolation { .. })), "{v:?}");
    }

    #[test]
    fn validator_flags_missing_boundary_single() {
        let layout = build_memory_layout(5).unwrap();
        let mut s = build_schedule(&layout, ScheduleKind::C);
        let single = layout
            .checks
            .iter()
            .find(|c| c.basis == Basis::Z && c.is_boundary)
            .unwrap()
            .id;
        s.steps[3].checks.retain(|&c| c != single);
        let v = validate_schedule(&layout, &s);
        assert!(v.iter().any(|x| matches!(x, ScheduleViolation::BoundaryRuleViolation { .. })));
    }

    #[test]
    fn validator_flags_incomplete_x_step() {
        let layout = build_memory_layout(3).unwrap();
        let mut s = build_schedule(&layout, ScheduleKind::C);
        s.steps[0].checks.pop();
        let v = validate_schedule(&layout, &s);
        assert!(v.iter().any(|x| matches!(x, ScheduleViolation::XStepViolation { step: 1 })));
    }

    #[test]
    fn json_round_trip() {
        let layout = build_memory_layout(5).unwrap();
        let s = build_schedule(&layout, ScheduleKind::B);
        let parsed = Schedule::from_json(&s.to_json()).unwrap();
        assert_eq!(parsed.name, s.name);
        for i in 1..=4 {
            assert_eq!(parsed.step(i), s.step(i));
        }
    }
}
