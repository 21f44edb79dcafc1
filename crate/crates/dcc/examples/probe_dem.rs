use dcc::circuit::{memory_circuit, stability_circuit, Basis, ResetMode};
use dcc::lattice::build_rect_patch;
use dcc::noise::{apply_noise, uniform_model};
use dcc::sampler::extract_dem;
use dcc::schedule::{build_schedule, ScheduleKind};

fn report(tag: &str, c: &dcc::circuit::Circuit) {
    let noisy = apply_noise(c, &uniform_model(1e-3).unwrap()).unwrap();
    let dem = extract_dem(&noisy).unwrap();
    let det_is_x: Vec<bool> = dem.detector_coords.iter().map(|c| c.0 % 2 == 0).collect();
    let mut unresolved = 0usize;
    let mut max_side = 0usize;
    for m in &dem.mechanisms {
        let x = m.dets.iter().filter(|&&d| det_is_x[d as usize]).count();
        let z = m.dets.len() - x;
        max_side = max_side.max(x).max(z);
        let graphlike = m.dets.len() <= 2 && (x == 0 || z == 0);
        if !graphlike && m.components.is_empty() {
            unresolved += 1;
        }
        if !m.components.is_empty() && m.components.iter().any(|c| c.dets.len() > 2) {
            unresolved += 1;
        }
    }
    let biggest = dem.mechanisms.iter().map(|m| m.dets.len()).max().unwrap_or(0);
    println!(
        "{tag}: {} dets, {} mechs, {} unresolved, biggest symptom {}, max side {}",
        dem.num_detectors,
        dem.mechanisms.len(),
        unresolved,
        biggest,
        max_side
    );
}

fn main() {
    for d in [3usize, 5, 7] {
        for basis in [Basis::Z, Basis::X] {
            for kind in [ScheduleKind::A, ScheduleKind::C] {
                let layout = build_rect_patch(d, d);
                let sched = build_schedule(&layout, kind);
                for reset in [ResetMode::Reset, ResetMode::NoReset] {
                    let c = memory_circuit(&layout, &sched, basis, 2, reset).unwrap();
                    report(&format!("memory d={d} {basis:?} {kind:?} {reset:?}"), &c);
                }
            }
        }
        let c = stability_circuit(d, ScheduleKind::C, 3, ResetMode::Reset).unwrap();
        report(&format!("stability d={d}"), &c);
        let c = stability_circuit(d, ScheduleKind::C, 3, ResetMode::NoReset).unwrap();
        report(&format!("stability d={d} NoReset"), &c);
    }
}
