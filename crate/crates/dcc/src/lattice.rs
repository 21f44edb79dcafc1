//! Heavy-hex layouts for compass-code patches: data qubits on a square grid,
//! measurement ancillas on edges and faces, weight-4 X plaquettes with their
//! two edge relays, weight-2 Z edge checks, and the boundary completions for
//! memory and stability patches.
//!
//! Coordinates are doubled integers so every qubit has an exact grid position:
//! data qubit (r, c) sits at (2r+1, 2c+1), the ancilla of a horizontal edge at
//! (2r+1, 2c+2), an X-face ancilla at (2s+2, 2c+2), a vertical cap ancilla at
//! (2s+2, 2c+1), and stability perimeter ancillas on the outer boundary lines
//! (row 0, row 2R, col 0, col 2C). All coordinates are non-negative.
//!
//! Construction rules (R rows, C cols of data):
//! - face (s, c) hosts a weight-4 X check iff (s + c) is even, with the two
//!   horizontal-edge ancillas above and below it as relays;
//! - every strip s gets one weight-2 vertical X cap on the column its faces
//!   miss: the right column for s even, the left for s odd (memory patches);
//! - every horizontal edge belongs to exactly one face's Z side: the one of
//!   its two adjacent faces with odd parity. Those edges carry weight-2 Z
//!   checks, paired per Z face in the bulk; edges on the top/bottom data rows
//!   adjacent to an X face become boundary Z singles (memory patches);
//! - stability patches replace caps and boundary singles with a perimeter of
//!   weight-2 X checks (top/bottom edges at odd c, left/right edges at even
//!   r), which jointly cover every boundary qubit an even number of times so
//!   that the product of all X checks is the identity.

use crate::circuit::Basis;
use crate::pauli::Pauli;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Doubled-integer grid position (row, col).
pub type Coord = (i32, i32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum QubitRole {
    Data,
    AncillaX,
    AncillaZ,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum PatchKind {
    Memory,
    Stability,
}

#[derive(Clone, Debug)]
pub struct Qubit {
    pub id: usize,
    pub coord: Coord,
    pub role: QubitRole,
}

#[derive(Clone, Debug)]
pub struct GaugeCheck {
    pub id: usize,
    pub basis: Basis,
    /// Data qubit ids, sorted.
    pub support: Vec<usize>,
    /// The ancilla whose measurement reads this check out.
    pub ancilla: usize,
    /// Edge ancillas a weight-4 X check routes through (top edge, bottom edge).
    pub relays: Vec<usize>,
    pub is_boundary: bool,
    /// Spatial anchor: face centre or edge midpoint.
    pub coord: Coord,
}

#[derive(Clone, Debug)]
pub struct HeavyHexLayout {
    pub kind: PatchKind,
    /// Code distance: min(rows, cols) for memory, patch size for stability.
    pub d: usize,
    pub rows: usize,
    pub cols: usize,
    pub qubits: Vec<Qubit>,
    pub checks: Vec<GaugeCheck>,
    pub couplings: Vec<(usize, usize)>,
    /// Bulk Z-check pairs (the two edges of one Z face).
    pub z_pairs: Vec<(usize, usize)>,
    /// Data-qubit ids of the logical X representative (top data row).
    pub logical_x: Vec<usize>,
    /// Data-qubit ids of the logical Z representative (left data column).
    pub logical_z: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayoutViolation {
    DegreeExceeded { qubit: usize, degree: usize },
    BadSupportSize { check: usize, size: usize },
    DataInTooManyChecks { qubit: usize, basis: Basis, count: usize },
    MissingRelay { check: usize },
    AncillaInMultipleChecks { qubit: usize },
    DataDataCoupling { a: usize, b: usize },
    PairProductNotCentral { check_a: usize, check_b: usize },
    StripProductNotCentral { strip: usize },
    LogicalsDoNotAnticommute,
    LogicalAnticommutesWithCheck { check: usize },
    XProductNotIdentity,
}

pub fn build_memory_layout(d: usize) -> Result<HeavyHexLayout> {
    if d == 0 || d % 2 == 0 {
        return Err(Error::UnsupportedDistance(d, 1));
    }
    Ok(build_rect_patch(d, d))
}

/// Memory-style rectangular patch (used directly for memory codes with
/// rows = cols = d, and for the merged patch of an XX surgery with 2d rows).
/// Both dimensions must be odd.
pub fn build_rect_patch(rows: usize, cols: usize) -> HeavyHexLayout {
    assert!(rows % 2 == 1 || cols % 2 == 1, "patch needs one odd dimension");
    let mut b = Builder::new(rows, cols);
    b.add_bulk_faces();
    b.add_caps();
    b.add_z_edges(true);
    b.finish(PatchKind::Memory, rows.min(cols))
}

/// Two d x d patches sharing one grid, with a one-column channel between
/// them: patch 1 on columns 0..d-1, the channel on column d, patch 2 on
/// columns d+1..2d+1. The grid carries the fully merged check set (faces and
/// edges spanning the channel included) plus each patch's own channel-facing
/// vertical caps, so both the split and merged phases of a joint ZZ
/// measurement draw their checks from this one layout. Data on the columns
/// flanking the channel sit in three X checks (interior face, spanning face,
/// cap), which is why this layout is not interchangeable with a plain
/// rectangular patch; the split and merged phases each use a commuting
/// subset.
pub fn build_zz_pair_layout(d: usize) -> Result<HeavyHexLayout> {
    if d < 3 || d % 2 == 0 {
        return Err(Error::UnsupportedDistance(d, 3));
    }
    let mut b = Builder::new(d, 2 * d + 1);
    b.add_bulk_faces();
    b.add_caps();
    // Channel-facing caps: patch 1's right column caps the strips its own
    // faces miss on that side (even s), patch 2's left column the odd strips.
    for s in 0..d - 1 {
        b.add_cap(s, if s % 2 == 0 { d - 1 } else { d + 1 });
    }
    b.add_z_edges(true);
    Ok(b.finish(PatchKind::Memory, d))
}

pub fn build_stability_layout(r: usize) -> Result<HeavyHexLayout> {
    if r < 3 {
        return Err(Error::UnsupportedDistance(r, 3));
    }
    if r % 2 == 0 {
        // The alternating perimeter cover has no even-width solution: the
        // boundary parity equations force one double-covered and one
        // uncovered corner, which only closes for odd r.
        return Err(Error::UnsupportedDistance(r, 3));
    }
    let mut b = Builder::new(r, r);
    b.add_bulk_faces();
    b.add_perimeter_x();
    b.add_z_edges(false);
    Ok(b.finish(PatchKind::Stability, r))
}

struct Builder {
    rows: usize,
    cols: usize,
    qubits: Vec<Qubit>,
    by_coord: HashMap<Coord, usize>,
    checks: Vec<GaugeCheck>,
    couplings: Vec<(usize, usize)>,
    z_pairs: Vec<(usize, usize)>,
    /// Z check id per horizontal edge key (r, c) meaning edge (r,c)-(r,c+1).
    edge_check: HashMap<(usize, usize), usize>,
}

fn data_coord(r: usize, c: usize) -> Coord {
    (2 * r as i32 + 1, 2 * c as i32 + 1)
}

fn edge_coord(r: usize, c: usize) -> Coord {
    (2 * r as i32 + 1, 2 * c as i32 + 2)
}

fn face_coord(s: usize, c: usize) -> Coord {
    (2 * s as i32 + 2, 2 * c as i32 + 2)
}

fn is_x_face(s: usize, c: usize) -> bool {
    (s + c) % 2 == 0
}

impl Builder {
    fn new(rows: usize, cols: usize) -> Self {
        let mut b = Builder {
            rows,
            cols,
            qubits: Vec::new(),
            by_coord: HashMap::new(),
            checks: Vec::new(),
            couplings: Vec::new(),
            z_pairs: Vec::new(),
            edge_check: HashMap::new(),
        };
        for r in 0..rows {
            for c in 0..cols {
                b.intern(data_coord(r, c), QubitRole::Data);
            }
        }
        b
    }

    fn intern(&mut self, coord: Coord, role: QubitRole) -> usize {
        if let Some(&id) = self.by_coord.get(&coord) {
            return id;
        }
        let id = self.qubits.len();
        self.qubits.push(Qubit { id, coord, role });
        self.by_coord.insert(coord, id);
        id
    }

    fn data(&self, r: usize, c: usize) -> usize {
        self.by_coord[&data_coord(r, c)]
    }

    /// Edge ancilla for the horizontal edge (r,c)-(r,c+1), creating it (and
    /// its data couplings) on first use.
    fn edge_ancilla(&mut self, r: usize, c: usize) -> usize {
        let coord = edge_coord(r, c);
        if let Some(&id) = self.by_coord.get(&coord) {
            return id;
        }
        let id = self.intern(coord, QubitRole::AncillaZ);
        let (a, b) = (self.data(r, c), self.data(r, c + 1));
        self.couplings.push((a, id));
        self.couplings.push((b, id));
        id
    }

    fn add_bulk_faces(&mut self) {
        for s in 0..self.rows - 1 {
            for c in 0..self.cols - 1 {
                if !is_x_face(s, c) {
                    continue;
                }
                let anc = self.intern(face_coord(s, c), QubitRole::AncillaX);
                let top = self.edge_ancilla(s, c);
                let bot = self.edge_ancilla(s + 1, c);
                self.couplings.push((anc, top));
                self.couplings.push((anc, bot));
                let mut support =
                    vec![self.data(s, c), self.data(s, c + 1), self.data(s + 1, c), self.data(s + 1, c + 1)];
                support.sort_unstable();
                self.checks.push(GaugeCheck {
                    id: self.checks.len(),
                    basis: Basis::X,
                    support,
                    ancilla: anc,
                    relays: vec![top, bot],
                    is_boundary: false,
                    coord: face_coord(s, c),
                });
            }
        }
    }

    /// One vertical weight-2 X cap per strip, on the column its faces miss.
    fn add_caps(&mut self) {
        for s in 0..self.rows - 1 {
            let col = if s % 2 == 0 { self.cols - 1 } else { 0 };
            self.add_cap(s, col);
        }
    }

    /// A single vertical weight-2 X cap on column `col` of strip `s`.
    fn add_cap(&mut self, s: usize, col: usize) {
        let coord = (2 * s as i32 + 2, 2 * col as i32 + 1);
        let anc = self.intern(coord, QubitRole::AncillaX);
        let (a, b) = (self.data(s, col), self.data(s + 1, col));
        self.couplings.push((a, anc));
        self.couplings.push((b, anc));
        let mut support = vec![a, b];
        support.sort_unstable();
        self.checks.push(GaugeCheck {
            id: self.checks.len(),
            basis: Basis::X,
            support,
            ancilla: anc,
            relays: Vec::new(),
            is_boundary: true,
            coord,
        });
    }

    /// Stability perimeter: weight-2 X checks on top/bottom edges at odd c and
    /// left/right edges at even r. Together with the bulk faces this covers
    /// every data qubit an even number of times (zero at corner (rows-1, 0)).
    fn add_perimeter_x(&mut self) {
        let (rows, cols) = (self.rows, self.cols);
        let add = |b: &mut Builder, coord: Coord, q1: (usize, usize), q2: (usize, usize)| {
            let anc = b.intern(coord, QubitRole::AncillaX);
            let (a, bq) = (b.data(q1.0, q1.1), b.data(q2.0, q2.1));
            b.couplings.push((a, anc));
            b.couplings.push((bq, anc));
            let mut support = vec![a, bq];
            support.sort_unstable();
            b.checks.push(GaugeCheck {
                id: b.checks.len(),
                basis: Basis::X,
                support,
                ancilla: anc,
                relays: Vec::new(),
                is_boundary: true,
                coord,
            });
        };
        for c in (1..cols - 1).step_by(2) {
            add(self, (0, 2 * c as i32 + 2), (0, c), (0, c + 1));
        }
        for c in (1..cols - 1).step_by(2) {
            add(self, (2 * rows as i32, 2 * c as i32 + 2), (rows - 1, c), (rows - 1, c + 1));
        }
        for r in (0..rows - 1).step_by(2) {
            add(self, (2 * r as i32 + 2, 0), (r, 0), (r + 1, 0));
        }
        for r in (0..rows - 1).step_by(2) {
            add(self, (2 * r as i32 + 2, 2 * cols as i32), (r, cols - 1), (r + 1, cols - 1));
        }
    }

    /// Weight-2 Z checks on horizontal edges. Every edge belongs to the Z face
    /// adjacent to it (bulk pairs); with `boundary_singles`, top/bottom edges
    /// adjacent to an X face become boundary singles measured every even step.
    fn add_z_edges(&mut self, boundary_singles: bool) {
        let (rows, cols) = (self.rows, self.cols);
        let mut pair_edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for r in 0..rows {
            for c in 0..cols - 1 {
                // Owning Z face: of the faces above (r-1, c) and below (r, c),
                // exactly one has odd parity where both exist.
                let above = r.checked_sub(1).filter(|&s| !is_x_face(s, c)).map(|s| (s, c));
                let below = (r < rows - 1 && !is_x_face(r, c)).then_some((r, c));
                let owner = above.or(below);
                let is_boundary = owner.is_none();
                if is_boundary && !boundary_singles {
                    // Stability patches have no boundary Z singles; the edge
                    // still hosts a relay ancilla if an X face needs it, which
                    // edge_ancilla() creates on demand.
                    continue;
                }
                let anc = self.edge_ancilla(r, c);
                let mut support = vec![self.data(r, c), self.data(r, c + 1)];
                support.sort_unstable();
                let id = self.checks.len();
                self.checks.push(GaugeCheck {
                    id,
                    basis: Basis::Z,
                    support,
                    ancilla: anc,
                    relays: Vec::new(),
                    is_boundary,
                    coord: edge_coord(r, c),
                });
                self.edge_check.insert((r, c), id);
                if let Some(face) = owner {
                    pair_edges.entry(face).or_default().push(id);
                }
            }
        }
        let mut faces: Vec<_> = pair_edges.into_iter().collect();
        faces.sort_unstable_by_key(|(f, _)| *f);
        for (face, edges) in faces {
            assert_eq!(edges.len(), 2, "Z face {face:?} must own exactly two edges");
            self.z_pairs.push((edges[0], edges[1]));
        }
    }

    fn finish(mut self, kind: PatchKind, d: usize) -> HeavyHexLayout {
        let logical_x = (0..self.cols).map(|c| self.data(0, c)).collect();
        let logical_z = (0..self.rows).map(|r| self.data(r, 0)).collect();
        self.couplings.sort_unstable();
        self.couplings.dedup();
        HeavyHexLayout {
            kind,
            d,
            rows: self.rows,
            cols: self.cols,
            qubits: self.qubits,
            checks: self.checks,
            couplings: self.couplings,
            z_pairs: self.z_pairs,
            logical_x,
            logical_z,
        }
    }
}

impl HeavyHexLayout {
    pub fn num_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn data_ids(&self) -> Vec<usize> {
        self.qubits.iter().filter(|q| q.role == QubitRole::Data).map(|q| q.id).collect()
    }

    pub fn num_data(&self) -> usize {
        self.qubits.iter().filter(|q| q.role == QubitRole::Data).count()
    }

    /// Dense index of each data qubit within Pauli vectors (id order).
    pub fn data_index(&self) -> HashMap<usize, usize> {
        self.data_ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect()
    }

    /// Grid position of a data qubit.
    pub fn grid_pos(&self, qubit: usize) -> (usize, usize) {
        let (r, c) = self.qubits[qubit].coord;
        debug_assert_eq!(self.qubits[qubit].role, QubitRole::Data);
        (((r - 1) / 2) as usize, ((c - 1) / 2) as usize)
    }

    pub fn data_at(&self, r: usize, c: usize) -> Option<usize> {
        let coord = data_coord(r, c);
        self.qubits.iter().find(|q| q.coord == coord && q.role == QubitRole::Data).map(|q| q.id)
    }

    /// The check's operator over dense data-index space.
    pub fn check_pauli(&self, check: &GaugeCheck, index: &HashMap<usize, usize>) -> Pauli {
        let n = index.len();
        let supp: Vec<usize> = check.support.iter().map(|q| index[q]).collect();
        match check.basis {
            Basis::X => Pauli::from_supports(n, &supp, &[]),
            Basis::Z => Pauli::from_supports(n, &[], &supp),
        }
    }

    pub fn logical_pauli(&self, basis: Basis, index: &HashMap<usize, usize>) -> Pauli {
        let n = index.len();
        let ids = match basis {
            Basis::X => &self.logical_x,
            Basis::Z => &self.logical_z,
        };
        let supp: Vec<usize> = ids.iter().map(|q| index[q]).collect();
        match basis {
            Basis::X => Pauli::from_supports(n, &supp, &[]),
            Basis::Z => Pauli::from_supports(n, &[], &supp),
        }
    }

    /// Bulk pair partner of a Z check, if it has one.
    pub fn pair_partner(&self, check_id: usize) -> Option<usize> {
        self.z_pairs.iter().find_map(|&(a, b)| {
            if a == check_id {
                Some(b)
            } else if b == check_id {
                Some(a)
            } else {
                None
            }
        })
    }

    pub fn x_check_ids(&self) -> Vec<usize> {
        self.checks.iter().filter(|c| c.basis == Basis::X).map(|c| c.id).collect()
    }

    pub fn z_check_ids(&self) -> Vec<usize> {
        self.checks.iter().filter(|c| c.basis == Basis::Z).map(|c| c.id).collect()
    }
}

pub fn validate_layout(layout: &HeavyHexLayout) -> Vec<LayoutViolation> {
    let mut v = Vec::new();
    let index = layout.data_index();

    let mut degree = vec![0usize; layout.qubits.len()];
    for &(a, b) in &layout.couplings {
        degree[a] += 1;
        degree[b] += 1;
        if layout.qubits[a].role == QubitRole::Data && layout.qubits[b].role == QubitRole::Data {
            v.push(LayoutViolation::DataDataCoupling { a, b });
        }
    }
    for q in &layout.qubits {
        if degree[q.id] > 3 {
            v.push(LayoutViolation::DegreeExceeded { qubit: q.id, degree: degree[q.id] });
        }
    }

    let mut x_count = vec![0usize; layout.qubits.len()];
    let mut z_count = vec![0usize; layout.qubits.len()];
    let mut anc_count = vec![0usize; layout.qubits.len()];
    for ch in &layout.checks {
        let ok_size = match ch.basis {
            Basis::X => ch.support.len() == 4 || ch.support.len() == 2,
            Basis::Z => ch.support.len() == 2,
        };
        if !ok_size {
            v.push(LayoutViolation::BadSupportSize { check: ch.id, size: ch.support.len() });
        }
        if ch.basis == Basis::X && ch.support.len() == 4 && ch.relays.len() != 2 {
            v.push(LayoutViolation::MissingRelay { check: ch.id });
        }
        anc_count[ch.ancilla] += 1;
        for &q in &ch.support {
            match ch.basis {
                Basis::X => x_count[q] += 1,
                Basis::Z => z_count[q] += 1,
            }
        }
    }
    for q in &layout.qubits {
        if x_count[q.id] > 2 {
            v.push(LayoutViolation::DataInTooManyChecks { qubit: q.id, basis: Basis::X, count: x_count[q.id] });
        }
        if z_count[q.id] > 2 {
            v.push(LayoutViolation::DataInTooManyChecks { qubit: q.id, basis: Basis::Z, count: z_count[q.id] });
        }
        if anc_count[q.id] > 1 {
            v.push(LayoutViolation::AncillaInMultipleChecks { qubit: q.id });
        }
    }

    let paulis: Vec<Pauli> = layout.checks.iter().map(|c| layout.check_pauli(c, &index)).collect();

    match layout.kind {
        PatchKind::Memory => {
            // Centre condition: each bulk Z pair's product commutes with every
            // check. (Stability patches deliberately break this near the two
            // perimeter sides whose X edges sit over X faces: the identity
            // X-product requirement on a square patch forces it, and the lost
            // Z detectors are irrelevant to the X-type stability observable.)
            for &(a, b) in &layout.z_pairs {
                let mut prod = paulis[a].clone();
                prod.mul_assign(&paulis[b]);
                if paulis.iter().any(|p| !p.commutes(&prod)) {
                    v.push(LayoutViolation::PairProductNotCentral { check_a: a, check_b: b });
                }
            }
            // Strip products: all X checks supported on rows {s, s+1} multiply
            // to X on those two full rows, which must be central.
            for s in 0..layout.rows - 1 {
                let mut prod = Pauli::identity(index.len());
                for (ch, p) in layout.checks.iter().zip(&paulis) {
                    if ch.basis != Basis::X {
                        continue;
                    }
                    let rows_ok = ch
                        .support
                        .iter()
                        .all(|&q| matches!(layout.grid_pos(q).0, r if r == s || r == s + 1));
                    if rows_ok {
                        prod.mul_assign(p);
                    }
                }
                if paulis.iter().any(|p| !p.commutes(&prod)) {
                    v.push(LayoutViolation::StripProductNotCentral { strip: s });
                }
            }
            let lx = layout.logical_pauli(Basis::X, &index);
            let lz = layout.logical_pauli(Basis::Z, &index);
            if lx.commutes(&lz) {
                v.push(LayoutViolation::LogicalsDoNotAnticommute);
            }
            for (ch, p) in layout.checks.iter().zip(&paulis) {
                if !p.commutes(&lx) || !p.commutes(&lz) {
                    v.push(LayoutViolation::LogicalAnticommutesWithCheck { check: ch.id });
                }
            }
        }
        PatchKind::Stability => {
            let mut prod = Pauli::identity(index.len());
            for (ch, p) in layout.checks.iter().zip(&paulis) {
                if ch.basis == Basis::X {
                    prod.mul_assign(p);
                }
            }
            if !prod.is_identity() {
                v.push(LayoutViolation::XProductNotIdentity);
            }
        }
    }
    v
}

/// JSON mirror with coordinate-based references and stable field order.
#[derive(Serialize, Deserialize)]
struct LayoutJson {
    version: u32,
    d: usize,
    kind: PatchKind,
    rows: usize,
    cols: usize,
    qubits: Vec<(Coord, QubitRole)>,
    checks: Vec<CheckJson>,
    couplings: Vec<(Coord, Coord)>,
    z_pairs: Vec<(usize, usize)>,
    logical_x: Vec<Coord>,
    logical_z: Vec<Coord>,
}

#[derive(Serialize, Deserialize)]
struct CheckJson {
    id: usize,
    basis: Basis,
    support: Vec<Coord>,
    ancilla: Coord,
    relays: Vec<Coord>,
    is_boundary: bool,
    coord: Coord,
}

impl HeavyHexLayout {
    pub fn to_json(&self) -> String {
        let co = |id: &usize| self.qubits[*id].coord;
        let doc = LayoutJson {
            version: 1,
            d: self.d,
            kind: self.kind,
            rows: self.rows,
            cols: self.cols,
            qubits: self.qubits.iter().map(|q| (q.coord, q.role)).collect(),
            checks: self
                .checks
                .iter()
                .map(|c| CheckJson {
                    id: c.id,
                    basis: c.basis,
                    support: c.support.iter().map(co).collect(),
                    ancilla: co(&c.ancilla),
                    relays: c.relays.iter().map(co).collect(),
                    is_boundary: c.is_boundary,
                    coord: c.coord,
                })
                .collect(),
            couplings: self.couplings.iter().map(|(a, b)| (co(a), co(b))).collect(),
            z_pairs: self.z_pairs.clone(),
            logical_x: self.logical_x.iter().map(co).collect(),
            logical_z: self.logical_z.iter().map(co).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("layout serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d1_is_a_bare_qubit() {
        let l = build_memory_layout(1).unwrap();
        assert_eq!(l.num_data(), 1);
        assert_eq!(l.checks.len(), 0);
        assert!(validate_layout(&l).is_empty());
    }

    #[test]
    fn even_d_rejected() {
        assert!(build_memory_layout(4).is_err());
        assert!(build_memory_layout(0).is_err());
    }

    /// Hand-enumerated d=3 fixture: X faces at (0,0) and (1,1); right cap on
    /// strip 0 and left cap on strip 1; four bulk pair edges from Z faces
    /// (0,1) and (1,0); boundary singles on the top (0,0)-(0,1) and bottom
    /// (2,1)-(2,2) edges. 9 data + 6 edge + 2 face + 2 cap = 19 qubits.
    #[test]
    fn d3_fixture() {
        let l = build_memory_layout(3).unwrap();
        assert_eq!(l.num_data(), 9);
        assert_eq!(l.num_qubits(), 19);
        let x: Vec<_> = l.checks.iter().filter(|c| c.basis == Basis::X).collect();
        let z: Vec<_> = l.checks.iter().filter(|c| c.basis == Basis::Z).collect();
        assert_eq!(x.len(), 4);
        assert_eq!(z.len(), 6);
        assert_eq!(x.iter().filter(|c| c.support.len() == 4).count(), 2);
        assert_eq!(x.iter().filter(|c| c.support.len() == 2).count(), 2);
        assert_eq!(z.iter().filter(|c| c.is_boundary).count(), 2);
        assert_eq!(l.z_pairs.len(), 2);
        // Weight-4 plaquettes exactly at grid faces (0,0) and (1,1).
        let plaq_coords: Vec<Coord> =
            x.iter().filter(|c| c.support.len() == 4).map(|c| c.coord).collect();
        assert_eq!(plaq_coords, vec![(2, 2), (4, 4)]);
        assert!(validate_layout(&l).is_empty());
    }

    #[test]
    fn memory_layouts_validate_up_to_d11() {
        for d in [3, 5, 7, 9, 11] {
            let l = build_memory_layout(d).unwrap();
            assert!(validate_layout(&l).is_empty(), "d={d}");
            assert_eq!(l.num_data(), d * d);
            // Every strip has exactly one cap.
            let caps = l.checks.iter().filter(|c| c.basis == Basis::X && c.support.len() == 2).count();
            assert_eq!(caps, d - 1);
            // d(d-1) horizontal edges, all carrying Z checks.
            assert_eq!(l.z_check_ids().len(), d * (d - 1));
        }
    }

    #[test]
    fn stability_layouts_validate_and_x_product_is_identity() {
        for r in [3, 5, 7, 9] {
            let l = build_stability_layout(r).unwrap();
            let violations = validate_layout(&l);
            assert!(violations.is_empty(), "r={r}: {violations:?}");
        }
    }

    #[test]
    fn stability_rejects_even_and_small() {
        assert!(build_stability_layout(2).is_err());
        assert!(build_stability_layout(4).is_err());
        assert!(build_stability_layout(1).is_err());
    }

    #[test]
    fn stability_has_no_boundary_z() {
        let l = build_stability_layout(5).unwrap();
        assert!(l.checks.iter().all(|c| c.basis != Basis::Z || !c.is_boundary));
        // Uncovered corner: bottom-left data qubit is in zero X checks.
        let corner = l.data_at(4, 0).unwrap();
        let in_x = l
            .checks
            .iter()
            .filter(|c| c.basis == Basis::X)
            .filter(|c| c.support.contains(&corner))
            .count();
        assert_eq!(in_x, 0);
    }

    #[test]
    fn injected_degree_violation_is_reported() {
        let mut l = build_memory_layout(3).unwrap();
        let anc = l.checks[0].ancilla;
        let d0 = l.data_ids()[0];
        l.couplings.push((d0, anc));
        l.couplings.push((l.data_ids()[1], anc));
        let v = validate_layout(&l);
        assert!(v.iter().any(|x| matches!(x, LayoutViolation::DegreeExceeded { .. })), "{v:?}");
    }

    #[test]
    fn injected_weight3_check_is_reported() {
        let mut l = build_memory_layout(3).unwrap();
        let big = l.checks.iter().position(|c| c.support.len() == 4).unwrap();
        l.checks[big].support.pop();
        let v = validate_layout(&l);
        assert!(v.iter().any(|x| matches!(x, LayoutViolation::BadSupportSize { .. })));
    }

    #[test]
    fn rect_patch_for_merged_surgery_validates() {
        let d = 3;
        let l = build_rect_patch(2 * d, d);
        assert!(validate_layout(&l).is_empty());
        assert_eq!(l.num_data(), 2 * d * d);
        assert_eq!(l.d, d);
    }

    #[test]
    fn json_export_is_stable_and_nonempty() {
        let l = build_memory_layout(3).unwrap();
        let a = l.to_json();
        let b = build_memory_layout(3).unwrap().to_json();
        assert_eq!(a, b);
        assert!(a.contains("\"version\": 1"));
        assert!(a.contains("\"Memory\""));
    }
}
