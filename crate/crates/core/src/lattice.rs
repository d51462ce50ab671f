//! Discrete torus and bounded-degree graph substrate.

use crate::bitset::BitSet;
use crate::error::Error;
use crate::Result;

/// The discrete torus (Z/nZ)^d as a graph.
///
/// Vertices are indexed by mixed-radix coordinates (coordinate 0 is the
/// fastest-varying digit); edge `v*d + axis` joins `v` to its positive
/// neighbor along `axis`. The indexing is deterministic given `(d, n)`.
#[derive(Clone, Debug)]
pub struct TorusGraph {
    pub d: usize,
    pub n: usize,
    n_vertices: usize,
    n_edges: usize,
}

impl TorusGraph {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("torus dimension {d} < 2")));
        }
        if n < 3 {
            return Err(Error::InvalidParameter(format!(
                "torus side {n} < 3 (n = 2 would create parallel edges)"
            )));
        }
        let n_vertices = n.checked_pow(d as u32).ok_or_else(|| {
            Error::InvalidParameter(format!("torus volume {n}^{d} overflows"))
        })?;
        Ok(TorusGraph { d, n, n_vertices, n_edges: d * n_vertices })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn vertex_coords(&self, v: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.d);
        let mut v = v;
        for _ in 0..self.d {
            c.push(v % self.n);
            v /= self.n;
        }
        c
    }

    pub fn vertex_index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.d);
        let mut v = 0;
        for i in (0..self.d).rev() {
            v = v * self.n + (coords[i] % self.n);
        }
        v
    }

    /// Neighbor of `v` one step along `axis`; `dir` is +1 or -1.
    pub fn neighbor(&self, v: usize, axis: usize, dir: isize) -> usize {
        let stride = self.n.pow(axis as u32);
        let c = (v / stride) % self.n;
        let c2 = if dir > 0 { (c + 1) % self.n } else { (c + self.n - 1) % self.n };
        v - c * stride + c2 * stride
    }

    pub fn edge_endpoints(&self, e: usize) -> (usize, usize) {
        let v = e / self.d;
        let axis = e % self.d;
        (v, self.neighbor(v, axis, 1))
    }

    pub fn edge_axis(&self, e: usize) -> usize {
        e % self.d
    }

    /// Edge from `v` in positive direction along `axis`.
    pub fn edge_index(&self, v: usize, axis: usize) -> usize {
        v * self.d + axis
    }

    /// The 2d edges incident to `v`.
    pub fn incident_edges(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.d);
        for axis in 0..self.d {
            out.push(self.edge_index(v, axis));
            out.push(self.edge_index(self.neighbor(v, axis, -1), axis));
        }
        out
    }

    pub fn empty_config(&self) -> EdgeConfig {
        EdgeConfig::empty(self)
    }

    pub fn full_config(&self) -> EdgeConfig {
        let mut c = EdgeConfig::empty(self);
        for e in 0..self.n_edges {
            c.insert(e);
        }
        c
    }

    /// View as a plain graph (for the high-temperature machinery).
    pub fn as_simple_graph(&self) -> SimpleGraph {
        let edges = (0..self.n_edges).map(|e| self.edge_endpoints(e)).collect();
        SimpleGraph::from_edges(self.n_vertices, edges)
    }

    /// Stable identifier mixed from (d, n); ties an `EdgeConfig` to its host.
    pub fn graph_id(&self) -> u64 {
        (self.d as u64) << 32 | self.n as u64
    }
}

/// A subset A ⊆ E as a bitset over the host graph's edge indices.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct EdgeConfig {
    pub owner: u64,
    pub bits: BitSet,
}

impl EdgeConfig {
    pub fn empty(g: &TorusGraph) -> Self {
        EdgeConfig { owner: g.graph_id(), bits: BitSet::new(g.n_edges()) }
    }

    pub fn from_edges(g: &TorusGraph, edges: &[usize]) -> Self {
        let mut c = Self::empty(g);
        for &e in edges {
            c.insert(e);
        }
        c
    }

    pub fn from_mask(g: &TorusGraph, mask: u64) -> Self {
        debug_assert!(g.n_edges() <= 64);
        EdgeConfig { owner: g.graph_id(), bits: BitSet::from_mask(mask, g.n_edges()) }
    }

    pub fn insert(&mut self, e: usize) {
        self.bits.insert(e);
    }

    pub fn contains(&self, e: usize) -> bool {
        self.bits.contains(e)
    }

    pub fn count(&self) -> usize {
        self.bits.count()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter()
    }
}

/// A simple graph with explicit adjacency; hosts polymer models.
#[derive(Clone, Debug)]
pub struct SimpleGraph {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub adj: Vec<Vec<(usize, usize)>>, // vertex -> (neighbor, edge id)
    pub max_degree: usize,
}

impl SimpleGraph {
    pub fn from_edges(n_vertices: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n_vertices];
        for (i, &(u, v)) in edges.iter().enumerate() {
            assert_ne!(u, v, "self loops are not allowed");
            adj[u].push((v, i));
            adj[v].push((u, i));
        }
        let max_degree = adj.iter().map(|a| a.len()).max().unwrap_or(0);
        SimpleGraph { n_vertices, edges, adj, max_degree }
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn path(len_edges: usize) -> Self {
        Self::from_edges(len_edges + 1, (0..len_edges).map(|i| (i, i + 1)).collect())
    }

    pub fn cycle(k: usize) -> Self {
        Self::from_edges(k, (0..k).map(|i| (i, (i + 1) % k)).collect())
    }

    /// w×h grid with free boundary (a finite patch of Z^2).
    pub fn grid(w: usize, h: usize) -> Self {
        let idx = |x: usize, y: usize| y * w + x;
        let mut edges = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    edges.push((idx(x, y), idx(x + 1, y)));
                }
                if y + 1 < h {
                    edges.push((idx(x, y), idx(x, y + 1)));
                }
            }
        }
        Self::from_edges(w * h, edges)
    }

    /// Number of connected components counting isolated vertices, under the
    /// edge subset given by `keep`.
    pub fn component_count(&self, keep: impl Fn(usize) -> bool) -> usize {
        let mut uf = UnionFind::new(self.n_vertices);
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if keep(i) {
                uf.union(u, v);
            }
        }
        uf.count()
    }

    /// Component partition: id per vertex plus component count.
    pub fn components(&self, keep: impl Fn(usize) -> bool) -> (Vec<usize>, usize) {
        let mut uf = UnionFind::new(self.n_vertices);
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if keep(i) {
                uf.union(u, v);
            }
        }
        uf.partition()
    }
}

/// c(V, A) on the torus: components spanned by A plus isolated vertices.
pub fn connected_components(g: &TorusGraph, a: &EdgeConfig) -> (Vec<usize>, usize) {
    debug_assert_eq!(a.owner, g.graph_id());
    let mut uf = UnionFind::new(g.n_vertices());
    for e in a.iter() {
        let (u, v) = g.edge_endpoints(e);
        uf.union(u, v);
    }
    uf.partition()
}

/// Path-compressed union-find.
pub struct UnionFind {
    parent: Vec<u32>,
    n_sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), n_sets: n }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb as u32;
            self.n_sets -= 1;
        }
    }

    pub fn count(&self) -> usize {
        self.n_sets
    }

    pub fn partition(mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut out = vec![0; n];
        for v in 0..n {
            let r = self.find(v);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            out[v] = label[r];
        }
        (out, next)
    }
}

/// Adjacency notion for connected edge-set enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeAdjacency {
    /// Edges are adjacent when they share an endpoint.
    EdgeSharing,
    /// Edges are adjacent when their segments are within ℓ∞ distance 1
    /// (torus hosts only).
    OneAdjacent,
}

/// Neighbor lists for the chosen edge adjacency, restricted to `allowed`.
fn edge_neighbor_lists(
    g: &TorusGraph,
    adjacency: EdgeAdjacency,
    allowed: &BitSet,
) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); g.n_edges()];
    match adjacency {
        EdgeAdjacency::EdgeSharing => {
            for e in 0..g.n_edges() {
                if !allowed.contains(e) {
                    continue;
                }
                let (u, v) = g.edge_endpoints(e);
                for w in [u, v] {
                    for f in g.incident_edges(w) {
                        if f != e && allowed.contains(f) {
                            out[e].push(f);
                        }
                    }
                }
                out[e].sort_unstable();
                out[e].dedup();
            }
        }
        EdgeAdjacency::OneAdjacent => {
            // Two unit segments are 1-adjacent iff every coordinate interval
            // pair is within distance 1 on the circle of length n.
            let dist1 = |e: usize, f: usize| -> bool {
                let (ue, _) = g.edge_endpoints(e);
                let (uf, _) = g.edge_endpoints(f);
                let ae = g.edge_axis(e);
                let af = g.edge_axis(f);
                let ce = g.vertex_coords(ue);
                let cf = g.vertex_coords(uf);
                for i in 0..g.d {
                    // interval of edge along axis i, in units of 1 (length 0 or 1)
                    let (lo_e, len_e) = (ce[i], usize::from(i == ae));
                    let (lo_f, len_f) = (cf[i], usize::from(i == af));
                    if circ_interval_dist(lo_e, len_e, lo_f, len_f, g.n) > 1 {
                        return false;
                    }
                }
                true
            };
            // Candidate pruning: endpoints within graph distance 3.
            for e in 0..g.n_edges() {
                if !allowed.contains(e) {
                    continue;
                }
                let (u, _) = g.edge_endpoints(e);
                let mut cands = std::collections::BTreeSet::new();
                let mut ball = vec![u];
                for _ in 0..3 {
                    let mut next = Vec::new();
                    for &w in &ball {
                        for axis in 0..g.d {
                            next.push(g.neighbor(w, axis, 1));
                            next.push(g.neighbor(w, axis, -1));
                        }
                    }
                    ball.extend(next);
                    ball.sort_unstable();
                    ball.dedup();
                }
                for &w in &ball {
                    for f in g.incident_edges(w) {
                        cands.insert(f);
                    }
                }
                for f in cands {
                    if f != e && allowed.contains(f) && dist1(e, f) {
                        out[e].push(f);
                    }
                }
            }
        }
    }
    out
}

/// Distance between integer intervals [a, a+la] and [b, b+lb] on Z/nZ.
fn circ_interval_dist(a: usize, la: usize, b: usize, lb: usize, n: usize) -> usize {
    let (x0, x1) = (a as isize, (a + la) as isize);
    let mut best = usize::MAX;
    // unwrap the second interval across the seam by shifting ±n
    for shift in [-(n as isize), 0, n as isize] {
        let y0 = b as isize + shift;
        let y1 = (b + lb) as isize + shift;
        let d = if y0 > x1 {
            (y0 - x1) as usize
        } else if x0 > y1 {
            (x0 - y1) as usize
        } else {
            0
        };
        best = best.min(d);
    }
    best
}

/// Enumerates connected edge sets that contain `seed`, with at most
/// `max_edges` edges, restricted to `allowed` edges, connected under the
/// chosen adjacency.
///
/// Canonical-extension search: each set is produced exactly once, in a
/// deterministic order, without a dedup hash set. The visitor returns
/// whether the current set may be extended further; returning false prunes
/// every superset on this branch, which is complete for any monotone
/// predicate.
pub fn enumerate_connected_edge_sets(
    g: &TorusGraph,
    seed: usize,
    max_edges: usize,
    adjacency: EdgeAdjacency,
    allowed: Option<&BitSet>,
    mut visit: impl FnMut(&[usize]) -> bool,
) {
    let all;
    let allowed = match allowed {
        Some(a) => a,
        None => {
            let mut s = BitSet::new(g.n_edges());
            for e in 0..g.n_edges() {
                s.insert(e);
            }
            all = s;
            &all
        }
    };
    if max_edges == 0 || !allowed.contains(seed) {
        return;
    }
    let nbrs = edge_neighbor_lists(g, adjacency, allowed);
    // Extension lists hold candidate edges, in discovery order; an edge
    // enters the extension list of the step that first reaches it.
    let mut current = vec![seed];
    let mut seen = BitSet::new(g.n_edges()); // reached at some earlier step on this path
    seen.insert(seed);
    // The seed is treated as the minimum of the (relabeled) edge order, so
    // every connected set containing it is reached exactly once.
    let init_ext: Vec<usize> = nbrs[seed].to_vec();
    for &f in &init_ext {
        seen.insert(f);
    }
    if !visit(&current) {
        return;
    }

    fn recurse(
        nbrs: &[Vec<usize>],
        max_edges: usize,
        current: &mut Vec<usize>,
        seen: &mut BitSet,
        ext: &[usize],
        seed: usize,
        visit: &mut impl FnMut(&[usize]) -> bool,
    ) {
        if current.len() == max_edges {
            return;
        }
        for (i, &e) in ext.iter().enumerate() {
            current.push(e);
            // new frontier: neighbors of e not seen before on this path
            let mut new_ext: Vec<usize> = ext[i + 1..].to_vec();
            let mut added = Vec::new();
            for &f in &nbrs[e] {
                if f != seed && !seen.contains(f) {
                    seen.insert(f);
                    added.push(f);
                    new_ext.push(f);
                }
            }
            if visit(current) {
                recurse(nbrs, max_edges, current, seen, &new_ext, seed, visit);
            }
            for f in added {
                seen.remove(f);
            }
            current.pop();
        }
    }

    recurse(&nbrs, max_edges, &mut current, &mut seen, &init_ext, seed, &mut visit);
}

/// Enumerates connected vertex sets containing `seed`, of at most
/// `max_vertices` vertices, over an arbitrary adjacency. Same
/// canonical-extension guarantees and pruning contract as the edge-set
/// variant.
pub fn enumerate_connected_vertex_sets(
    adjacency: &[Vec<usize>],
    seed: usize,
    max_vertices: usize,
    mut visit: impl FnMut(&[usize]) -> bool,
) {
    let n = adjacency.len();
    if max_vertices == 0 {
        return;
    }
    let mut current = vec![seed];
    let mut seen = BitSet::new(n);
    seen.insert(seed);
    let init_ext: Vec<usize> = adjacency[seed].clone();
    for &w in &init_ext {
        seen.insert(w);
    }
    if !visit(&current) {
        return;
    }

    fn recurse(
        adjacency: &[Vec<usize>],
        max_vertices: usize,
        current: &mut Vec<usize>,
        seen: &mut BitSet,
        ext: &[usize],
        seed: usize,
        visit: &mut impl FnMut(&[usize]) -> bool,
    ) {
        if current.len() == max_vertices {
            return;
        }
        for (i, &v) in ext.iter().enumerate() {
            current.push(v);
            let mut new_ext: Vec<usize> = ext[i + 1..].to_vec();
            let mut added = Vec::new();
            for &w in &adjacency[v] {
                if w != seed && !seen.contains(w) {
                    seen.insert(w);
                    added.push(w);
                    new_ext.push(w);
                }
            }
            if visit(current) {
                recurse(adjacency, max_vertices, current, seen, &new_ext, seed, visit);
            }
            for w in added {
                seen.remove(w);
            }
            current.pop();
        }
    }

    recurse(adjacency, max_vertices, &mut current, &mut seen, &init_ext, seed, &mut visit);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_counts() {
        let t = TorusGraph::new(2, 3).unwrap();
        assert_eq!(t.n_vertices(), 9);
        assert_eq!(t.n_edges(), 18);
        let t = TorusGraph::new(2, 4).unwrap();
        assert_eq!(t.n_vertices(), 16);
        assert_eq!(t.n_edges(), 32);
        let t = TorusGraph::new(3, 3).unwrap();
        assert_eq!(t.n_vertices(), 27);
        assert_eq!(t.n_edges(), 81);
        assert!(TorusGraph::new(1, 5).is_err());
        assert!(TorusGraph::new(2, 2).is_err());
    }

    #[test]
    fn degrees_and_indexing_deterministic() {
        for (d, n) in [(2, 3), (2, 4), (3, 3)] {
            let t = TorusGraph::new(d, n).unwrap();
            let mut deg = vec![0usize; t.n_vertices()];
            for e in 0..t.n_edges() {
                let (u, v) = t.edge_endpoints(e);
                assert_ne!(u, v);
                deg[u] += 1;
                deg[v] += 1;
            }
            assert!(deg.iter().all(|&x| x == 2 * d));
            // round-trip coordinates
            for v in 0..t.n_vertices() {
                assert_eq!(t.vertex_index(&t.vertex_coords(v)), v);
            }
        }
    }

    #[test]
    fn component_counts_on_t23() {
        let t = TorusGraph::new(2, 3).unwrap();
        let empty = t.empty_config();
        assert_eq!(connected_components(&t, &empty).1, 9);
        let full = t.full_config();
        assert_eq!(connected_components(&t, &full).1, 1);
        let one = EdgeConfig::from_edges(&t, &[0]);
        assert_eq!(connected_components(&t, &one).1, 8);
    }

    #[test]
    fn enumeration_on_path() {
        // path u-v-w, seed = {u,v}, max 2, edge sharing -> {uv}, {uv,vw}
        let t = TorusGraph::new(2, 3).unwrap();
        // use torus edges 0 (v0 axis0) and its neighbor sharing v1
        let seed = 0;
        let mut sets = Vec::new();
        enumerate_connected_edge_sets(&t, seed, 2, EdgeAdjacency::EdgeSharing, None, |s| {
            sets.push(s.to_vec());
            true
        });
        // all sets contain the seed and are unique
        assert!(sets.iter().all(|s| s.contains(&seed)));
        let mut sorted: Vec<Vec<usize>> = sets
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.sort_unstable();
                s
            })
            .collect();
        sorted.sort();
        let len_before = sorted.len();
        sorted.dedup();
        assert_eq!(len_before, sorted.len());
    }

    #[test]
    fn enumeration_complete_vs_bruteforce_t23() {
        let t = TorusGraph::new(2, 3).unwrap();
        let seed = 4;
        for max in 1..=3 {
            let mut got = Vec::new();
            enumerate_connected_edge_sets(&t, seed, max, EdgeAdjacency::EdgeSharing, None, |s| {
                let mut s = s.to_vec();
                s.sort_unstable();
                got.push(s);
                true
            });
            got.sort();
            // brute force: all subsets of size <= max containing seed, connected
            let mut want = Vec::new();
            for mask in 0u32..(1 << 18) {
                if mask.count_ones() as usize > max || mask & (1 << seed) == 0 {
                    continue;
                }
                let edges: Vec<usize> = (0..18).filter(|&e| mask >> e & 1 == 1).collect();
                if edge_set_connected(&t, &edges) {
                    want.push(edges);
                }
            }
            want.sort();
            assert_eq!(got, want, "max_edges = {max}");
        }
    }

    fn edge_set_connected(t: &TorusGraph, edges: &[usize]) -> bool {
        if edges.is_empty() {
            return false;
        }
        let mut uf = UnionFind::new(t.n_vertices());
        for &e in edges {
            let (u, v) = t.edge_endpoints(e);
            uf.union(u, v);
        }
        let vset: std::collections::BTreeSet<usize> =
            edges.iter().flat_map(|&e| {
                let (u, v) = t.edge_endpoints(e);
                [u, v]
            }).collect();
        let root = uf.find(*vset.iter().next().unwrap());
        vset.into_iter().all(|v| uf.find(v) == root)
    }

    #[test]
    fn delta_boundary_identity_all_configs_t23() {
        // 2|A| = 2d|V(A)| - ||δA|| with ||δA|| = |δ1A| + 2|δ2A|, for all A.
        let t = TorusGraph::new(2, 3).unwrap();
        for mask in 0u32..(1 << 18) {
            let mut vset = vec![false; 9];
            let mut edge_in = [false; 18];
            for e in 0..18 {
                if mask >> e & 1 == 1 {
                    edge_in[e] = true;
                    let (u, v) = t.edge_endpoints(e);
                    vset[u] = true;
                    vset[v] = true;
                }
            }
            let a_count = mask.count_ones() as usize;
            let v_count = vset.iter().filter(|&&b| b).count();
            let mut delta = 0usize;
            for e in 0..18 {
                if edge_in[e] {
                    continue;
                }
                let (u, v) = t.edge_endpoints(e);
                let k = usize::from(vset[u]) + usize::from(vset[v]);
                delta += match k {
                    1 => 1,
                    2 => 2,
                    _ => 0,
                };
            }
            assert_eq!(2 * a_count, 2 * 2 * v_count - delta);
        }
    }
}
