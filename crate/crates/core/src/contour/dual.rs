//! Static geometry of the half-lattice dual to a torus.
//!
//! The torus (Z/nZ)^d embeds in the continuum torus; the thickened occupied
//! region of an edge configuration is a union of closed d-cubes of side 1/2
//! centered at the vertices of the half-lattice (Z/2nZ)^d (cells). Boundaries
//! are made of (d−1)-dimensional faces between adjacent cells; two faces are
//! adjacent when they intersect in a (d−2)-cube. All geometry is done in
//! integer quarter-unit coordinates.

use crate::lattice::TorusGraph;

/// Precomputed cell/face tables for one torus.
pub struct Dual {
    pub d: usize,
    pub n: usize,
    /// side of the cell grid: 2n
    pub side: usize,
    pub n_cells: usize,
    pub n_faces: usize,
    /// face -> adjacent faces (degree 6(d−1))
    pub face_neighbors: Vec<Vec<u32>>,
    /// face -> torus edge crossing it, if any
    pub face_edge: Vec<Option<u32>>,
    /// face -> axis whose fundamental loop it crosses, if any
    pub face_loop_axis: Vec<Option<u8>>,
    /// centered cells of 2-cubes (plaquettes) and, for d = 3, 3-cubes,
    /// together with their edge lists; a cube's center cell is occupied when
    /// all its edges are present
    pub filled_cells: Vec<(u32, Vec<u32>)>,
    /// cell -> torus vertex when every coordinate is even
    pub cell_vertex: Vec<Option<u32>>,
    /// torus edge -> its three cells (endpoint, midpoint, endpoint)
    pub edge_cells: Vec<[u32; 3]>,
    /// face -> quarter-unit bounding box, per axis (lo, len)
    pub face_boxes: Vec<Vec<(usize, usize)>>,
    strides: Vec<usize>,
}

impl Dual {
    pub fn new(g: &TorusGraph) -> Self {
        let d = g.d;
        let n = g.n;
        assert!((2..=3).contains(&d), "dual geometry supports d = 2 and d = 3");
        let side = 2 * n;
        let n_cells = side.pow(d as u32);
        let n_faces = d * n_cells;
        let mut strides = vec![1usize; d];
        for i in 1..d {
            strides[i] = strides[i - 1] * side;
        }
        let cell_index = |coords: &[usize]| -> usize {
            coords.iter().zip(&strides).map(|(&c, &s)| (c % side) * s).sum()
        };
        let cell_coords = |mut c: usize| -> Vec<usize> {
            let mut out = Vec::with_capacity(d);
            for _ in 0..d {
                out.push(c % side);
                c /= side;
            }
            out
        };

        let mut face_neighbors = vec![Vec::with_capacity(6 * (d - 1)); n_faces];
        let mut face_edge = vec![None; n_faces];
        let mut face_loop_axis = vec![None; n_faces];
        for f in 0..n_faces {
            let cell = f / d;
            let axis = f % d;
            let x = cell_coords(cell);
            // parallel neighbors: same axis, shifted by ±1 along j ≠ axis
            for j in 0..d {
                if j == axis {
                    continue;
                }
                for dir in [side - 1, 1] {
                    let mut y = x.clone();
                    y[j] = (y[j] + dir) % side;
                    face_neighbors[f].push((cell_index(&y) * d + axis) as u32);
                }
                // perpendicular neighbors (y, j) with y_axis ∈ {x_axis, x_axis+1},
                // y_j ∈ {x_j − 1, x_j}
                for a in 0..2 {
                    for b in 0..2 {
                        let mut y = x.clone();
                        y[axis] = (y[axis] + a) % side;
                        y[j] = (y[j] + side - b) % side;
                        face_neighbors[f].push((cell_index(&y) * d + j) as u32);
                    }
                }
            }
            // transversal edge: all tangential coordinates even
            if (0..d).filter(|&j| j != axis).all(|j| x[j] % 2 == 0) {
                let mut vcoords = Vec::with_capacity(d);
                for j in 0..d {
                    if j == axis {
                        // the crossing edge starts at the even coordinate at or
                        // below the face
                        vcoords.push((x[j] - x[j] % 2) / 2);
                    } else {
                        vcoords.push(x[j] / 2);
                    }
                }
                let v = g.vertex_index(&vcoords);
                face_edge[f] = Some(g.edge_index(v, axis) as u32);
            }
            // fundamental loop L_axis runs along `axis` at coordinate 1 in all
            // other axes (half-unit coordinate 2)
            if (0..d).filter(|&j| j != axis).all(|j| x[j] == 2) {
                face_loop_axis[f] = Some(axis as u8);
            }
        }

        // cell -> vertex
        let mut cell_vertex = vec![None; n_cells];
        for c in 0..n_cells {
            let x = cell_coords(c);
            if x.iter().all(|&v| v % 2 == 0) {
                let vcoords: Vec<usize> = x.iter().map(|&v| v / 2).collect();
                cell_vertex[c] = Some(g.vertex_index(&vcoords) as u32);
            }
        }

        // edge -> three covering cells
        let mut edge_cells = Vec::with_capacity(g.n_edges());
        for e in 0..g.n_edges() {
            let (v, _) = g.edge_endpoints(e);
            let axis = g.edge_axis(e);
            let vc = g.vertex_coords(v);
            let base: Vec<usize> = vc.iter().map(|&c| 2 * c).collect();
            let mut cells = [0u32; 3];
            for (k, cell) in cells.iter_mut().enumerate() {
                let mut y = base.clone();
                y[axis] = (y[axis] + k) % side;
                *cell = cell_index(&y) as u32;
            }
            edge_cells.push(cells);
        }

        // filled centers of k-cubes, k = 2..d
        let mut filled_cells = Vec::new();
        let axis_pairs: Vec<(usize, usize)> =
            (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
        for v in 0..g.n_vertices() {
            let vc = g.vertex_coords(v);
            for &(i, j) in &axis_pairs {
                // plaquette with corner v spanning axes i, j
                let vi = g.neighbor(v, i, 1);
                let vj = g.neighbor(v, j, 1);
                let edges = vec![
                    g.edge_index(v, i) as u32,
                    g.edge_index(v, j) as u32,
                    g.edge_index(vj, i) as u32,
                    g.edge_index(vi, j) as u32,
                ];
                let mut y: Vec<usize> = vc.iter().map(|&c| 2 * c).collect();
                y[i] = (y[i] + 1) % side;
                y[j] = (y[j] + 1) % side;
                filled_cells.push((cell_index(&y) as u32, edges));
            }
            if d == 3 {
                // 3-cube with corner v: all 12 edges
                let mut edges = Vec::with_capacity(12);
                for axis in 0..3 {
                    let (a, b) = match axis {
                        0 => (1, 2),
                        1 => (0, 2),
                        _ => (0, 1),
                    };
                    for da in 0..2 {
                        for db in 0..2 {
                            let mut w = v;
                            if da == 1 {
                                w = g.neighbor(w, a, 1);
                            }
                            if db == 1 {
                                w = g.neighbor(w, b, 1);
                            }
                            edges.push(g.edge_index(w, axis) as u32);
                        }
                    }
                }
                let y: Vec<usize> = vc.iter().map(|&c| (2 * c + 1) % side).collect();
                filled_cells.push((cell_index(&y) as u32, edges));
            }
        }
        let mut dual = Dual {
            d,
            n,
            side,
            n_cells,
            n_faces,
            face_neighbors,
            face_edge,
            face_loop_axis,
            filled_cells,
            cell_vertex,
            edge_cells,
            face_boxes: Vec::new(),
            strides,
        };
        dual.face_boxes = (0..n_faces).map(|f| dual.face_box(f)).collect();
        dual
    }

    pub fn cell_coords(&self, mut c: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            out.push(c % self.side);
            c /= self.side;
        }
        out
    }

    pub fn cell_index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(&c, &s)| (c % self.side) * s).sum()
    }

    /// The two cells separated by a face: (lower, upper along the face axis).
    pub fn face_cells(&self, f: usize) -> (usize, usize) {
        let cell = f / self.d;
        let axis = f % self.d;
        let mut x = self.cell_coords(cell);
        x[axis] = (x[axis] + 1) % self.side;
        (cell, self.cell_index(&x))
    }

    pub fn face_axis(&self, f: usize) -> usize {
        f % self.d
    }

    /// Face bounding box in quarter units: per-axis (lo, len).
    pub fn face_box(&self, f: usize) -> Vec<(usize, usize)> {
        let cell = f / self.d;
        let axis = f % self.d;
        let x = self.cell_coords(cell);
        (0..self.d)
            .map(|j| {
                if j == axis {
                    (2 * x[j] + 1, 0)
                } else {
                    // wrap-safe lower corner at 2x_j − 1
                    ((2 * x[j] + 4 * self.n - 1) % (4 * self.n), 2)
                }
            })
            .collect()
    }

    /// Cell bounding box in quarter units.
    pub fn cell_box(&self, c: usize) -> Vec<(usize, usize)> {
        let x = self.cell_coords(c);
        (0..self.d)
            .map(|j| (((2 * x[j] + 4 * self.n - 1) % (4 * self.n)), 2))
            .collect()
    }

    /// ℓ∞ distance between two quarter-unit boxes on the torus, in quarter
    /// units.
    pub fn box_distance(&self, a: &[(usize, usize)], b: &[(usize, usize)]) -> usize {
        let period = 4 * self.n;
        let mut dist = 0usize;
        for j in 0..self.d {
            let (a0, al) = a[j];
            let (b0, bl) = b[j];
            let mut best = usize::MAX;
            for shift in [-(period as isize), 0, period as isize] {
                let b0s = b0 as isize + shift;
                let b1s = b0s + bl as isize;
                let a1 = (a0 + al) as isize;
                let dd = if b0s > a1 {
                    (b0s - a1) as usize
                } else if (a0 as isize) > b1s {
                    (a0 as isize - b1s) as usize
                } else {
                    0
                };
                best = best.min(dd);
            }
            dist = dist.max(best);
        }
        dist
    }
}
