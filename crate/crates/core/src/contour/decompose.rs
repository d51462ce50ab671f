//! Thickening, boundary decomposition, winding vectors, interiors, and the
//! configuration ↔ matching-collection bijection.

use crate::bitset::BitSet;
use crate::error::Error;
use crate::lattice::{EdgeConfig, TorusGraph};
use crate::Result;

use super::dual::Dual;
use super::{Contour, Label};

/// One connected component of the boundary of the thickened occupied region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryComponent {
    /// Sorted face ids.
    pub faces: Vec<u32>,
    /// Bit i set when the component crosses the i-th fundamental loop an odd
    /// number of times; zero means the component is a contour.
    pub winding: u32,
    /// ‖·‖: number of transversal intersections with torus edges.
    pub size: u32,
}

impl BoundaryComponent {
    pub fn is_contour(&self) -> bool {
        self.winding == 0
    }
}

/// A complement component of the boundary, with its label.
#[derive(Clone, Debug)]
pub struct RegionPiece {
    pub label: Label,
    pub cells: BitSet,
    pub n_vertices: u32,
    pub rep_cell: u32,
}

/// Full decomposition of an edge configuration: boundary components and
/// labelled complement regions.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub components: Vec<BoundaryComponent>,
    pub regions: Vec<RegionPiece>,
    pub region_of_cell: Vec<u32>,
    /// All boundary faces (union over components).
    pub face_set: BitSet,
}

impl Decomposition {
    pub fn has_interfaces(&self) -> bool {
        self.components.iter().any(|c| !c.is_contour())
    }

    pub fn interfaces(&self) -> impl Iterator<Item = &BoundaryComponent> {
        self.components.iter().filter(|c| !c.is_contour())
    }

    pub fn contour_components(&self) -> impl Iterator<Item = &BoundaryComponent> {
        self.components.iter().filter(|c| c.is_contour())
    }
}

/// Occupied cells of the thickened configuration.
pub fn occupied_cells(dual: &Dual, a: &EdgeConfig) -> BitSet {
    let mut occ = BitSet::new(dual.n_cells);
    for e in a.iter() {
        for &c in &dual.edge_cells[e] {
            occ.insert(c as usize);
        }
    }
    for (center, edges) in &dual.filled_cells {
        if edges.iter().all(|&e| a.contains(e as usize)) {
            occ.insert(*center as usize);
        }
    }
    occ
}

/// Faces of the boundary: cell pairs with opposite occupancy.
fn boundary_faces(dual: &Dual, occ: &BitSet) -> BitSet {
    let mut faces = BitSet::new(dual.n_faces);
    for f in 0..dual.n_faces {
        let (lo, hi) = dual.face_cells(f);
        if occ.contains(lo) != occ.contains(hi) {
            faces.insert(f);
        }
    }
    faces
}

fn component_of_faces(dual: &Dual, in_set: &BitSet, start: usize, seen: &mut BitSet) -> BoundaryComponent {
    let mut stack = vec![start as u32];
    seen.insert(start);
    let mut faces = Vec::new();
    let mut size = 0u32;
    let mut winding = 0u32;
    while let Some(f) = stack.pop() {
        faces.push(f);
        let fu = f as usize;
        if dual.face_edge[fu].is_some() {
            size += 1;
        }
        if let Some(axis) = dual.face_loop_axis[fu] {
            winding ^= 1 << axis;
        }
        for &g in &dual.face_neighbors[fu] {
            if in_set.contains(g as usize) && !seen.contains(g as usize) {
                seen.insert(g as usize);
                stack.push(g);
            }
        }
    }
    faces.sort_unstable();
    BoundaryComponent { faces, winding, size }
}

/// Splits the boundary of the thickened configuration into connected
/// components on the dual graph. Both A = ∅ and A = E yield no components.
pub fn thicken_boundary(dual: &Dual, a: &EdgeConfig) -> Vec<BoundaryComponent> {
    let occ = occupied_cells(dual, a);
    let faces = boundary_faces(dual, &occ);
    let mut seen = BitSet::new(dual.n_faces);
    let mut out = Vec::new();
    for f in faces.iter() {
        if !seen.contains(f) {
            out.push(component_of_faces(dual, &faces, f, &mut seen));
        }
    }
    out
}

/// Winding vector of a face set, recomputed from scratch: component i is the
/// parity of intersections with the i-th fundamental loop.
pub fn winding_vector(dual: &Dual, faces: &[u32]) -> u32 {
    let mut w = 0u32;
    for &f in faces {
        if let Some(axis) = dual.face_loop_axis[f as usize] {
            w ^= 1 << axis;
        }
    }
    w
}

/// Decomposes a configuration into boundary components plus labelled
/// complement regions.
pub fn decompose(dual: &Dual, a: &EdgeConfig) -> Decomposition {
    let occ = occupied_cells(dual, a);
    let face_set = boundary_faces(dual, &occ);
    let mut seen = BitSet::new(dual.n_faces);
    let mut components = Vec::new();
    for f in face_set.iter() {
        if !seen.contains(f) {
            components.push(component_of_faces(dual, &face_set, f, &mut seen));
        }
    }

    // complement regions: cells connected across non-boundary faces, i.e.
    // across faces whose two cells have equal occupancy
    let mut region_of_cell = vec![u32::MAX; dual.n_cells];
    let mut regions = Vec::new();
    for c0 in 0..dual.n_cells {
        if region_of_cell[c0] != u32::MAX {
            continue;
        }
        let id = regions.len() as u32;
        let label = if occ.contains(c0) { Label::Ord } else { Label::Dis };
        let mut cells = BitSet::new(dual.n_cells);
        let mut n_vertices = 0u32;
        let mut stack = vec![c0];
        region_of_cell[c0] = id;
        while let Some(c) = stack.pop() {
            cells.insert(c);
            if dual.cell_vertex[c].is_some() {
                n_vertices += 1;
            }
            for axis in 0..dual.d {
                for f in [c * dual.d + axis, {
                    let mut x = dual.cell_coords(c);
                    x[axis] = (x[axis] + dual.side - 1) % dual.side;
                    dual.cell_index(&x) * dual.d + axis
                }] {
                    if face_set.contains(f) {
                        continue;
                    }
                    let (lo, hi) = dual.face_cells(f);
                    let other = if lo == c { hi } else { lo };
                    if region_of_cell[other] == u32::MAX {
                        region_of_cell[other] = id;
                        stack.push(other);
                    }
                }
            }
        }
        regions.push(RegionPiece { label, cells, n_vertices, rep_cell: c0 as u32 });
    }

    Decomposition { components, regions, region_of_cell, face_set }
}

/// Interior of a contour: cells, vertex count, vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interior {
    pub cells: BitSet,
    pub n_vertices: u32,
    pub vertices: Vec<u32>,
}

/// Splits the torus along the faces of a single contour and returns the
/// interior side.
///
/// The side with fewer torus vertices is the interior; the greedy
/// exploration of a side stops once it has collected more than
/// min(‖γ‖², (n/2)‖γ‖) vertices, at which point that side is known to be
/// the exterior. Ties are broken by the reference point with all coordinates
/// 1/8, which lies in cell 0 and on no contour: the side containing cell 0
/// is the exterior.
pub fn interior(dual: &Dual, component: &BoundaryComponent) -> Interior {
    debug_assert!(component.is_contour());
    let mut blocked = BitSet::new(dual.n_faces);
    for &f in &component.faces {
        blocked.insert(f as usize);
    }
    let size = component.size as usize;
    let cap = (size * size).min(dual.n / 2 * size);

    let (lo, hi) = dual.face_cells(component.faces[0] as usize);
    let side_a = explore_side(dual, &blocked, lo, Some(cap));
    let interior_side = match side_a {
        None => explore_side(dual, &blocked, hi, None).expect("side exploration cannot overflow without a cap"),
        Some(a) => {
            debug_assert!(!a.cells.contains(hi), "contour must separate its two sides");
            let b = explore_side(dual, &blocked, hi, Some(cap));
            match b {
                None => a,
                Some(b) => {
                    use std::cmp::Ordering;
                    match a.n_vertices.cmp(&b.n_vertices) {
                        Ordering::Less => a,
                        Ordering::Greater => b,
                        Ordering::Equal => {
                            // the exterior is the side holding the reference
                            // point in cell 0
                            if a.cells.contains(0) {
                                b
                            } else {
                                a
                            }
                        }
                    }
                }
            }
        }
    };
    interior_side
}

fn explore_side(
    dual: &Dual,
    blocked: &BitSet,
    start: usize,
    vertex_cap: Option<usize>,
) -> Option<Interior> {
    let mut cells = BitSet::new(dual.n_cells);
    let mut vertices = Vec::new();
    let mut stack = vec![start];
    cells.insert(start);
    while let Some(c) = stack.pop() {
        if let Some(v) = dual.cell_vertex[c] {
            vertices.push(v);
            if let Some(cap) = vertex_cap {
                if vertices.len() > cap {
                    return None; // this side is the exterior
                }
            }
        }
        for axis in 0..dual.d {
            let back = {
                let mut x = dual.cell_coords(c);
                x[axis] = (x[axis] + dual.side - 1) % dual.side;
                dual.cell_index(&x) * dual.d + axis
            };
            for f in [c * dual.d + axis, back] {
                if blocked.contains(f) {
                    continue;
                }
                let (lo, hi) = dual.face_cells(f);
                let other = if lo == c { hi } else { lo };
                if !cells.contains(other) {
                    cells.insert(other);
                    stack.push(other);
                }
            }
        }
    }
    vertices.sort_unstable();
    Some(Interior { n_vertices: vertices.len() as u32, cells, vertices })
}

/// Compatibility of two face sets: ℓ∞ distance at least 1/2 (2 quarter
/// units), computed pairwise over precomputed face boxes.
pub fn compatible_faces(dual: &Dual, a: &[u32], b: &[u32]) -> bool {
    for &fb in b {
        let bx = &dual.face_boxes[fb as usize];
        for &fa in a {
            if dual.box_distance(&dual.face_boxes[fa as usize], bx) < 2 {
                return false;
            }
        }
    }
    true
}

/// Builds a full `Contour` (with interior and exterior label) from a
/// winding-zero boundary component of a decomposition.
pub fn contour_from_component(
    dual: &Dual,
    dec: &Decomposition,
    comp: &BoundaryComponent,
) -> Contour {
    debug_assert!(comp.is_contour());
    let int = interior(dual, comp);
    // exterior label: label of the region adjacent to the contour from the
    // outside
    let f0 = comp.faces[0] as usize;
    let (lo, hi) = dual.face_cells(f0);
    let ext_cell = if int.cells.contains(lo) { hi } else { lo };
    let label = dec.regions[dec.region_of_cell[ext_cell] as usize].label;
    Contour {
        faces: comp.faces.clone(),
        size: comp.size,
        label,
        interior_cells: int.cells,
        interior_vertices: int.vertices,
        level: 0,
    }
}

/// Inverse of [`decompose`]: rebuilds the unique edge configuration from the
/// labelled regions of a matching collection. An edge is present exactly
/// when its midpoint cell lies in an ordered region.
pub fn reconstruct(g: &TorusGraph, dual: &Dual, dec: &Decomposition) -> Result<EdgeConfig> {
    // labels must differ across every boundary face
    for comp in &dec.components {
        for &f in &comp.faces {
            let (lo, hi) = dual.face_cells(f as usize);
            let rl = dec.regions[dec.region_of_cell[lo] as usize].label;
            let rh = dec.regions[dec.region_of_cell[hi] as usize].label;
            if rl == rh {
                return Err(Error::InvalidCollection(format!(
                    "face {f} has label {rl:?} on both sides"
                )));
            }
        }
    }
    let mut a = EdgeConfig::empty(g);
    for e in 0..g.n_edges() {
        let mid = dual.edge_cells[e][1] as usize;
        let region = dec.region_of_cell[mid] as usize;
        if dec.regions[region].label == Label::Ord {
            a.insert(e);
        }
    }
    Ok(a)
}
