//! Contour enumeration, construction from interiors, and the embedding of
//! simply connected lattice regions as contour interiors.

use std::collections::HashSet;

use crate::bitset::BitSet;
use crate::error::Error;
use crate::lattice::{
    enumerate_connected_edge_sets, enumerate_connected_vertex_sets, EdgeAdjacency, EdgeConfig,
    TorusGraph,
};
use crate::Result;

use super::decompose::{contour_from_component, decompose, interior};
use super::dual::Dual;
use super::{Contour, Label, Region};

/// Contours of a region up to a size bound, sorted consistently with their
/// levels (level-0 contours first).
#[derive(Clone, Debug)]
pub struct ContourSet {
    pub contours: Vec<Contour>,
    pub max_size: u32,
}

impl ContourSet {
    pub fn of_label(&self, label: Label) -> impl Iterator<Item = (usize, &Contour)> {
        self.contours.iter().enumerate().filter(move |(_, c)| c.label == label)
    }
}

/// Extracts the outermost contour of a decomposition: the contour whose
/// interior holds every other boundary component. Returns `None` when the
/// boundary is empty, holds interfaces, or has no unique outermost contour.
fn outermost_contour(dual: &Dual, a: &EdgeConfig) -> Option<Contour> {
    let dec = decompose(dual, a);
    if dec.components.is_empty() || dec.has_interfaces() {
        return None;
    }
    let mut outer = None;
    for (i, comp) in dec.components.iter().enumerate() {
        let int = interior(dual, comp);
        let holds_all = dec.components.iter().enumerate().all(|(j, other)| {
            j == i
                || other.faces.iter().all(|&f| {
                    let (lo, hi) = dual.face_cells(f as usize);
                    int.cells.contains(lo) && int.cells.contains(hi)
                })
        });
        if holds_all {
            if outer.is_some() {
                return None;
            }
            outer = Some(i);
        }
    }
    outer.map(|i| contour_from_component(dual, &dec, &dec.components[i]))
}

/// Enumerates every contour of size at most `m` in the region, both labels,
/// duplicate-free, with levels assigned relative to the enumerated set.
///
/// A disordered contour is the boundary of the thickened filling of its
/// interior, A = E′(Int γ); that filling is dense in its vertex set W
/// because ‖γ‖ = 2d|W| − 2|A| ≤ m. Candidates are therefore generated as
/// connected vertex sets W (capped by the interior bounds min(m², (n/2)m)
/// and ⌊n^d/2⌋) together with near-complete edge fills. Ordered contours are
/// generated from 1-connected edge sets of at most m edges whose complement
/// is taken in the full torus.
pub fn enumerate_contours(
    g: &TorusGraph,
    dual: &Dual,
    region: &Region,
    m: u32,
) -> Result<ContourSet> {
    let mut seen: HashSet<(Label, Vec<u32>)> = HashSet::new();
    let mut contours: Vec<Contour> = Vec::new();
    let mut budget: u64 = 1 << 26;
    let mut out_of_budget = false;

    let consider = |cand: Option<Contour>,
                        want: Label,
                        contours: &mut Vec<Contour>,
                        seen: &mut HashSet<(Label, Vec<u32>)>| {
        if let Some(c) = cand {
            if c.label == want
                && c.size <= m
                && region.contains_faces(dual, &c.faces)
                && seen.insert(c.key())
            {
                contours.push(c);
            }
        }
    };

    // disordered contours: dense connected fillings inside the region
    let window_dis = region.contained_edges(dual);
    let window_set: HashSet<usize> = window_dis.iter().cloned().collect();
    let m_us = m as usize;
    let vmax = (m_us * m_us)
        .min(g.n * m_us / 2)
        .min(g.n_vertices() / 2)
        .min(region.n_vertices());
    // adjacency restricted to region vertices joined by window edges
    let mut adjacency = vec![Vec::new(); g.n_vertices()];
    for &e in &window_dis {
        let (u, v) = g.edge_endpoints(e);
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    for a in &mut adjacency {
        a.sort_unstable();
        a.dedup();
    }
    for &w0 in &region.vertices {
        let w0 = w0 as usize;
        enumerate_connected_vertex_sets(&adjacency, w0, vmax, |wset| {
            if budget == 0 {
                out_of_budget = true;
                return false;
            }
            budget -= 1;
            // canonical: only sets whose minimum vertex is the seed
            if wset.iter().any(|&v| v < w0) {
                return false;
            }
            // edges induced inside the window
            let mut internal: Vec<usize> = Vec::new();
            let inw: HashSet<usize> = wset.iter().cloned().collect();
            for &v in wset {
                for axis in 0..g.d {
                    let e = g.edge_index(v, axis);
                    let (_, u) = g.edge_endpoints(e);
                    if inw.contains(&u) && window_set.contains(&e) {
                        internal.push(e);
                    }
                }
            }
            // boundary size of the full fill: 2d|W| − 2|E(W)|; removing a
            // fill edge adds 2, so at most `slack` edges may be dropped
            let full_delta = 2 * g.d * wset.len() - 2 * internal.len();
            if full_delta > m_us {
                return true; // keep growing: larger W may get denser
            }
            let slack = (m_us - full_delta) / 2;
            let mut drop = vec![false; internal.len()];
            enumerate_drops(&internal, &mut drop, 0, slack, &mut |dropped| {
                let edges: Vec<usize> = internal
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| !dropped[i])
                    .map(|(_, &e)| e)
                    .collect();
                if !spans_and_connected(g, &edges, wset) {
                    return;
                }
                let a = EdgeConfig::from_edges(g, &edges);
                consider(outermost_contour(dual, &a), Label::Dis, &mut contours, &mut seen);
            });
            true
        });
        if out_of_budget {
            return Err(Error::BudgetExceeded(format!(
                "contour enumeration at size bound {m} exceeded its candidate budget"
            )));
        }
    }

    // ordered contours: 1-connected holes, complement in the full torus
    let window_ord = region.touching_edges(dual);
    let mut allowed = BitSet::new(g.n_edges());
    for &e in &window_ord {
        allowed.insert(e);
    }
    for &seedge in &window_ord {
        enumerate_connected_edge_sets(
            g,
            seedge,
            m as usize,
            EdgeAdjacency::OneAdjacent,
            Some(&allowed),
            |set| {
                if budget == 0 {
                    out_of_budget = true;
                    return false;
                }
                budget -= 1;
                if set.iter().any(|&e| e < seedge) {
                    return false;
                }
                let mut a = g.full_config();
                for &e in set {
                    a.bits.remove(e);
                }
                consider(outermost_contour(dual, &a), Label::Ord, &mut contours, &mut seen);
                true
            },
        );
        if out_of_budget {
            return Err(Error::BudgetExceeded(format!(
                "contour enumeration at size bound {m} exceeded its candidate budget"
            )));
        }
    }

    assign_levels(dual, &mut contours, m);
    contours.sort_by(|a, b| {
        a.level.cmp(&b.level).then_with(|| a.label.cmp(&b.label)).then_with(|| a.faces.cmp(&b.faces))
    });
    Ok(ContourSet { contours, max_size: m })
}

/// Harvests every contour lying in the region, of any size, by scanning all
/// subsets of the edges contained in the region and collecting the
/// winding-zero boundary components that keep distance ≥ 1/2 from the
/// complement. Complete: a disordered contour in the region arises from the
/// filling of its own interior, an ordered one from the region filling with
/// the edges midpointed in its interior removed — both subsets of E′(Λ).
pub fn harvest_contours_in_region(
    g: &TorusGraph,
    dual: &Dual,
    region: &Region,
) -> Result<Vec<Contour>> {
    let window = region.contained_edges(dual);
    if window.len() > 22 {
        return Err(Error::BudgetExceeded(format!(
            "region holds {} edges; the exhaustive harvest is capped at 22",
            window.len()
        )));
    }
    let mut seen: HashSet<(Label, Vec<u32>)> = HashSet::new();
    let mut out = Vec::new();
    for mask in 0u64..(1 << window.len()) {
        let edges: Vec<usize> =
            window.iter().enumerate().filter(|&(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e).collect();
        let a = EdgeConfig::from_edges(g, &edges);
        let dec = decompose(dual, &a);
        for comp in dec.contour_components() {
            if !region.contains_faces(dual, &comp.faces) {
                continue;
            }
            let c = contour_from_component(dual, &dec, comp);
            if seen.insert(c.key()) {
                out.push(c);
            }
        }
    }
    out.sort_by(|a, b| a.label.cmp(&b.label).then_with(|| a.faces.cmp(&b.faces)));
    Ok(out)
}

/// Enumerates all ways to drop at most `slack` edges, by index recursion.
fn enumerate_drops(
    internal: &[usize],
    drop: &mut [bool],
    from: usize,
    slack: usize,
    visit: &mut impl FnMut(&[bool]),
) {
    visit(drop);
    if slack == 0 {
        return;
    }
    for i in from..internal.len() {
        drop[i] = true;
        enumerate_drops(internal, drop, i + 1, slack - 1, visit);
        drop[i] = false;
    }
}

/// The edge set spans exactly `wset` and is connected.
fn spans_and_connected(g: &TorusGraph, edges: &[usize], wset: &[usize]) -> bool {
    if edges.is_empty() {
        return false;
    }
    let mut uf = crate::lattice::UnionFind::new(g.n_vertices());
    let mut touched: HashSet<usize> = HashSet::new();
    for &e in edges {
        let (u, v) = g.edge_endpoints(e);
        uf.union(u, v);
        touched.insert(u);
        touched.insert(v);
    }
    if touched.len() != wset.len() || !wset.iter().all(|v| touched.contains(v)) {
        return false;
    }
    let root = uf.find(wset[0]);
    wset.iter().all(|&v| uf.find(v) == root)
}

impl std::cmp::Ord for Label {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}
impl std::cmp::PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// The level of a contour counts nesting among the given contours: 0 when no
/// listed contour lies in its interior, else 1 + the maximum inner level.
fn assign_levels(dual: &Dual, contours: &mut [Contour], m: u32) {
    let n = contours.len();
    // inner[i]: indices nested strictly inside contour i
    let mut inner: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && contours[i].contains(dual, &contours[j]) {
                inner[i].push(j);
            }
        }
    }
    let mut level = vec![u32::MAX; n];
    // interiors shrink strictly, so m² rounds always suffice
    for _round in 0..=(m as usize * m as usize) {
        let mut progressed = false;
        for i in 0..n {
            if level[i] != u32::MAX {
                continue;
            }
            if inner[i].iter().all(|&j| level[j] != u32::MAX) {
                level[i] =
                    inner[i].iter().map(|&j| level[j] + 1).max().unwrap_or(0);
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    for (c, l) in contours.iter_mut().zip(level) {
        debug_assert!(l != u32::MAX, "level assignment must terminate");
        c.level = l;
    }
}

/// Rebuilds the unique contour with the given exterior label whose interior
/// is the given region.
///
/// For a disordered contour the generating configuration consists of all
/// edges contained in the region; for an ordered contour, of all torus edges
/// except those with midpoint in the region.
pub fn construct_from_interior(
    g: &TorusGraph,
    dual: &Dual,
    label: Label,
    region: &Region,
) -> Result<Contour> {
    let a = match label {
        Label::Dis => EdgeConfig::from_edges(g, &region.contained_edges(dual)),
        Label::Ord => {
            let mut a = g.full_config();
            for e in region.midpoint_edges(dual) {
                a.bits.remove(e);
            }
            a
        }
    };
    let cand = outermost_contour(dual, &a).ok_or_else(|| {
        Error::InvalidParameter("region is not the interior of a contour".into())
    })?;
    if cand.label != label || cand.interior_cells != region.cells {
        return Err(Error::InvalidParameter(
            "region does not reconstruct the requested contour".into(),
        ));
    }
    Ok(cand)
}

/// Boundary condition for lattice regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    Free,
    Wired,
}

/// A simply connected set Λ ⊂ Z^d embedded into a torus of side 3|Λ|, with
/// the contour whose interior carries the free or wired partition function.
pub struct Embedding {
    pub torus: TorusGraph,
    pub dual: Dual,
    pub contour: Contour,
    pub bc: Bc,
    /// Torus vertex ids of Λ.
    pub lambda_vertices: Vec<usize>,
    /// Torus edge ids of E(G_Λ).
    pub lambda_edges: Vec<usize>,
}

impl Embedding {
    /// Label of the contour partition function carried by the interior.
    pub fn inner_label(&self) -> Label {
        match self.bc {
            Bc::Free => Label::Dis,
            Bc::Wired => Label::Ord,
        }
    }

    /// Exponents (a, b, c) of the exact prefactor
    /// Z^{bc}_Λ = q^a · p^b · (1−p)^c · Z_{inner}(Int γ).
    pub fn prefactor_exponents(&self) -> (i64, i64, i64) {
        match self.bc {
            // Z^f_Λ = (1−p)^{−‖γ‖/2} Z_dis(Int γ_ord): the empty configuration
            // contributes q^{|Λ|}(1−p)^{|E(Λ)|} on the free side and
            // q^{|Λ|}(1−p)^{d|Λ|} on the contour side, and
            // d|Λ| − |E(Λ)| = ‖γ‖/2.
            Bc::Free => (0, 0, -(self.contour.size as i64) / 2),
            // Z^w_Λ = q·p^{|E(Λ)| − d|Int γ|} Z_ord(Int γ_dis): the fully
            // occupied configuration contributes q·p^{|E(Λ)|} on the wired
            // side and p^{d|Int γ|} on the contour side.
            Bc::Wired => (
                1,
                self.lambda_edges.len() as i64
                    - (self.torus.d as i64) * self.contour.n_interior_vertices() as i64,
                0,
            ),
        }
    }
}

/// Embeds a simply connected Λ ⊂ Z^d (given by integer coordinates) into a
/// torus of side 3|Λ| and constructs the bounding contour for the requested
/// boundary condition.
pub fn embed_simply_connected(coords: &[Vec<i64>], bc: Bc) -> Result<Embedding> {
    if coords.is_empty() {
        return Err(Error::InvalidParameter("empty region".into()));
    }
    let d = coords[0].len();
    if !(2..=3).contains(&d) {
        return Err(Error::InvalidParameter(format!("region dimension {d} not in 2..=3")));
    }
    if coords.iter().any(|c| c.len() != d) {
        return Err(Error::InvalidParameter("inconsistent coordinate dimensions".into()));
    }
    let set: HashSet<&Vec<i64>> = coords.iter().collect();
    if set.len() != coords.len() {
        return Err(Error::InvalidParameter("duplicate coordinates".into()));
    }
    check_simply_connected(coords, &set, d)?;

    let n = (3 * coords.len()).max(3);
    let torus = TorusGraph::new(d, n)?;
    let dual = Dual::new(&torus);
    // shift so the minimum coordinate sits at 2, away from the fundamental
    // loops at coordinate 1
    let mins: Vec<i64> =
        (0..d).map(|i| coords.iter().map(|c| c[i]).min().unwrap()).collect();
    let lambda_vertices: Vec<usize> = coords
        .iter()
        .map(|c| {
            let shifted: Vec<usize> =
                (0..d).map(|i| (c[i] - mins[i] + 2) as usize).collect();
            torus.vertex_index(&shifted)
        })
        .collect();
    let vset: HashSet<usize> = lambda_vertices.iter().cloned().collect();
    let lambda_edges: Vec<usize> = (0..torus.n_edges())
        .filter(|&e| {
            let (u, v) = torus.edge_endpoints(e);
            vset.contains(&u) && vset.contains(&v)
        })
        .collect();

    let contour = match bc {
        Bc::Free => {
            // occupy every edge avoiding Λ; the unique boundary contour
            // encloses Λ with ordered exterior
            let mut a = torus.full_config();
            for e in 0..torus.n_edges() {
                let (u, v) = torus.edge_endpoints(e);
                if vset.contains(&u) || vset.contains(&v) {
                    a.bits.remove(e);
                }
            }
            outermost_contour(&dual, &a).ok_or_else(|| {
                Error::NotSimplyConnected("free embedding produced no unique contour".into())
            })?
        }
        Bc::Wired => {
            // the ordered contour around Λ's filled edges
            let mut sea = torus.full_config();
            for &e in &lambda_edges {
                sea.bits.remove(e);
            }
            let gamma1 = outermost_contour(&dual, &sea).ok_or_else(|| {
                Error::NotSimplyConnected("wired embedding produced no unique contour".into())
            })?;
            // enlarge: also occupy edges whose midpoint is inside that
            // contour or within distance 1/2 of it
            let mut a = EdgeConfig::from_edges(&torus, &lambda_edges);
            let face_boxes: Vec<_> =
                gamma1.faces.iter().map(|&f| dual.face_box(f as usize)).collect();
            for e in 0..torus.n_edges() {
                let mid = dual.edge_cells[e][1] as usize;
                if gamma1.interior_cells.contains(mid) {
                    a.insert(e);
                    continue;
                }
                let mb = dual.cell_box(mid);
                if face_boxes.iter().any(|fb| dual.box_distance(&mb, fb) <= 2) {
                    a.insert(e);
                }
            }
            outermost_contour(&dual, &a).ok_or_else(|| {
                Error::NotSimplyConnected("wired enlargement produced no unique contour".into())
            })?
        }
    };
    let want = match bc {
        Bc::Free => Label::Ord,
        Bc::Wired => Label::Dis,
    };
    if contour.label != want {
        return Err(Error::NotSimplyConnected(format!(
            "embedding contour has label {} (expected {})",
            contour.label, want
        )));
    }
    Ok(Embedding { torus, dual, contour, bc, lambda_vertices, lambda_edges })
}

fn check_simply_connected(
    coords: &[Vec<i64>],
    set: &HashSet<&Vec<i64>>,
    d: usize,
) -> Result<()> {
    // Λ connected in Z^d
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut stack = vec![coords[0].clone()];
    seen.insert(coords[0].clone());
    while let Some(c) = stack.pop() {
        for axis in 0..d {
            for dir in [-1i64, 1] {
                let mut nb = c.clone();
                nb[axis] += dir;
                if set.contains(&nb) && !seen.contains(&nb) {
                    seen.insert(nb.clone());
                    stack.push(nb);
                }
            }
        }
    }
    if seen.len() != coords.len() {
        return Err(Error::NotSimplyConnected("region is not connected".into()));
    }
    // complement connected: BFS box-complement cells from the margin shell
    let lo: Vec<i64> = (0..d).map(|i| coords.iter().map(|c| c[i]).min().unwrap() - 2).collect();
    let hi: Vec<i64> = (0..d).map(|i| coords.iter().map(|c| c[i]).max().unwrap() + 2).collect();
    let in_box = |c: &Vec<i64>| (0..d).all(|i| c[i] >= lo[i] && c[i] <= hi[i]);
    let on_shell = |c: &Vec<i64>| (0..d).any(|i| c[i] == lo[i] || c[i] == hi[i]);
    let mut comp_seen: HashSet<Vec<i64>> = HashSet::new();
    let mut stack: Vec<Vec<i64>> = Vec::new();
    // seed with the whole shell
    let mut cur = lo.clone();
    loop {
        if on_shell(&cur) && !set.contains(&cur) {
            comp_seen.insert(cur.clone());
            stack.push(cur.clone());
        }
        let mut axis = 0;
        loop {
            cur[axis] += 1;
            if cur[axis] <= hi[axis] {
                break;
            }
            cur[axis] = lo[axis];
            axis += 1;
            if axis == d {
                break;
            }
        }
        if axis == d {
            break;
        }
    }
    while let Some(c) = stack.pop() {
        for axis in 0..d {
            for dir in [-1i64, 1] {
                let mut nb = c.clone();
                nb[axis] += dir;
                if in_box(&nb) && !set.contains(&nb) && !comp_seen.contains(&nb) {
                    comp_seen.insert(nb.clone());
                    stack.push(nb);
                }
            }
        }
    }
    // every box cell is either in Λ or reached
    let mut cur = lo.clone();
    loop {
        if !set.contains(&cur) && !comp_seen.contains(&cur) {
            return Err(Error::NotSimplyConnected(
                "complement is not connected (region has a hole)".into(),
            ));
        }
        let mut axis = 0;
        loop {
            cur[axis] += 1;
            if cur[axis] <= hi[axis] {
                break;
            }
            cur[axis] = lo[axis];
            axis += 1;
            if axis == d {
                break;
            }
        }
        if axis == d {
            break;
        }
    }
    Ok(())
}
