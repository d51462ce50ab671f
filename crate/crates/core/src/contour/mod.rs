//! Contour geometry: thickened edge configurations on the dual half-lattice,
//! boundary components, winding vectors, contour/interface classification,
//! labels, interiors, enumeration and the embedding of simply connected
//! lattice regions.

pub mod decompose;
pub mod dual;
pub mod enumerate;

use serde::{Deserialize, Serialize};

use crate::bitset::BitSet;

pub use decompose::{
    compatible_faces, contour_from_component, decompose, interior, occupied_cells, reconstruct,
    thicken_boundary, winding_vector, BoundaryComponent, Decomposition, Interior, RegionPiece,
};
pub use dual::Dual;
pub use enumerate::{
    construct_from_interior, embed_simply_connected, enumerate_contours,
    harvest_contours_in_region, Bc, ContourSet, Embedding,
};

/// Phase label of a complement region: ordered regions lie inside the
/// thickened configuration, disordered ones outside.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Ord,
    Dis,
}

impl Label {
    pub fn flip(self) -> Label {
        match self {
            Label::Ord => Label::Dis,
            Label::Dis => Label::Ord,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Ord => write!(f, "ord"),
            Label::Dis => write!(f, "dis"),
        }
    }
}

/// A labelled contour: a winding-zero boundary component together with its
/// interior and exterior label. The interior label is the opposite.
#[derive(Clone, Debug)]
pub struct Contour {
    /// Sorted face ids; the identity of the contour.
    pub faces: Vec<u32>,
    /// ‖γ‖: transversal edge intersections.
    pub size: u32,
    /// Exterior label.
    pub label: Label,
    pub interior_cells: BitSet,
    /// Torus vertices strictly inside, sorted.
    pub interior_vertices: Vec<u32>,
    /// Nesting depth among enumerated contours: 0 when the interior holds no
    /// contour.
    pub level: u32,
}

impl Contour {
    pub fn n_interior_vertices(&self) -> usize {
        self.interior_vertices.len()
    }

    /// Identity key: label plus face list.
    pub fn key(&self) -> (Label, Vec<u32>) {
        (self.label, self.faces.clone())
    }

    /// True when `other` lies strictly inside this contour's interior
    /// (compatible and nested).
    pub fn contains(&self, dual: &Dual, other: &Contour) -> bool {
        // cheap cell test first; the distance test decides only near-misses
        let nested = other.faces.iter().all(|&f| {
            let (lo, hi) = dual.face_cells(f as usize);
            self.interior_cells.contains(lo) && self.interior_cells.contains(hi)
        });
        nested && compatible_faces(dual, &self.faces, &other.faces)
    }
}

impl PartialEq for Contour {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.faces == other.faces
    }
}
impl Eq for Contour {}

impl std::hash::Hash for Contour {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.label.hash(state);
        self.faces.hash(state);
    }
}

/// A region: the whole torus, or one complement component of some boundary
/// (in particular the interior of a contour), given by its cell set.
#[derive(Clone, Debug)]
pub struct Region {
    pub cells: BitSet,
    /// Torus vertices inside, sorted.
    pub vertices: Vec<u32>,
    /// Faces of the bounding boundary; empty for the whole torus.
    pub boundary_faces: Vec<u32>,
    /// Dual-graph size: faces with both incident cells inside.
    pub dual_size: usize,
    pub whole: bool,
}

impl Region {
    pub fn whole_torus(dual: &Dual) -> Region {
        let mut cells = BitSet::new(dual.n_cells);
        for c in 0..dual.n_cells {
            cells.insert(c);
        }
        let mut vertices: Vec<u32> =
            (0..dual.n_cells).filter_map(|c| dual.cell_vertex[c]).collect();
        vertices.sort_unstable();
        Region {
            cells,
            vertices,
            boundary_faces: Vec::new(),
            dual_size: dual.n_faces,
            whole: true,
        }
    }

    pub fn from_interior(dual: &Dual, contour: &Contour) -> Region {
        Self::from_cells(dual, contour.interior_cells.clone(), contour.faces.clone())
    }

    pub fn from_cells(dual: &Dual, cells: BitSet, boundary_faces: Vec<u32>) -> Region {
        let mut vertices: Vec<u32> = cells.iter().filter_map(|c| dual.cell_vertex[c]).collect();
        vertices.sort_unstable();
        let dual_size = (0..dual.n_faces)
            .filter(|&f| {
                let (lo, hi) = dual.face_cells(f);
                cells.contains(lo) && cells.contains(hi)
            })
            .count();
        Region { cells, vertices, boundary_faces, dual_size, whole: false }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Edges whose full segment (all three covering cells) lies inside.
    pub fn contained_edges(&self, dual: &Dual) -> Vec<usize> {
        if self.whole {
            return (0..dual.edge_cells.len()).collect();
        }
        (0..dual.edge_cells.len())
            .filter(|&e| dual.edge_cells[e].iter().all(|&c| self.cells.contains(c as usize)))
            .collect()
    }

    /// Edges whose midpoint cell lies inside.
    pub fn midpoint_edges(&self, dual: &Dual) -> Vec<usize> {
        (0..dual.edge_cells.len())
            .filter(|&e| self.cells.contains(dual.edge_cells[e][1] as usize))
            .collect()
    }

    /// Edges with at least one covering cell inside.
    pub fn touching_edges(&self, dual: &Dual) -> Vec<usize> {
        if self.whole {
            return (0..dual.edge_cells.len()).collect();
        }
        (0..dual.edge_cells.len())
            .filter(|&e| dual.edge_cells[e].iter().any(|&c| self.cells.contains(c as usize)))
            .collect()
    }

    /// A face set is "in" the region when it keeps ℓ∞ distance ≥ 1/2 from
    /// the complement. The complement is a union of closed cells, so a
    /// cell-wise distance test is exact.
    pub fn contains_faces(&self, dual: &Dual, faces: &[u32]) -> bool {
        if self.whole {
            return true;
        }
        let complement: Vec<_> = (0..dual.n_cells)
            .filter(|&c| !self.cells.contains(c))
            .map(|c| dual.cell_box(c))
            .collect();
        faces.iter().all(|&f| {
            let fb = dual.face_box(f as usize);
            complement.iter().all(|cb| dual.box_distance(&fb, cb) >= 2)
        })
    }
}
