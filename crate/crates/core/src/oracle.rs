//! Exact ground truth at desk scale: random cluster, Potts and contour-split
//! partition functions by exhaustive enumeration, exact when the edge
//! probability is rational, plus exact distributions and total-variation
//! distances for sampler validation.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::bitset::BitSet;
use crate::contour::{decompose, interior, Dual, Label};
use crate::error::Error;
use crate::lattice::{EdgeConfig, SimpleGraph, TorusGraph, UnionFind};
use crate::logsum::{kahan_sum, log_sum_exp};
use crate::Result;

/// Enumeration budget: subset scans are capped at 2^26 configurations.
pub const MAX_EDGES: usize = 26;

/// Aggregated subset counts by (edge count, component count); enough to
/// evaluate Σ p^{|A|}(1−p)^{|E|−|A|}q^{c} exactly or in log space.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub counts: BTreeMap<(u32, u32), u64>,
    pub n_edges: usize,
}

impl ClassCounts {
    fn add(&mut self, edges: u32, comps: u32) {
        *self.counts.entry((edges, comps)).or_insert(0) += 1;
    }

    fn merge(&mut self, other: &ClassCounts) {
        for (&k, &v) in &other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
    }

    pub fn total_configs(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Exact rational value of the class sum.
    pub fn eval_rational(&self, p: &BigRational, q: &BigRational) -> BigRational {
        let one = BigRational::one();
        let mut z = BigRational::zero();
        for (&(a, c), &n) in &self.counts {
            let term = pow_rational(p, a as i64)
                * pow_rational(&(&one - p), (self.n_edges - a as usize) as i64)
                * pow_rational(q, c as i64)
                * BigRational::from_integer(BigInt::from(n));
            z += term;
        }
        z
    }

    /// log of the class sum for arbitrary real parameters.
    pub fn eval_log(&self, ln_p: f64, ln_1mp: f64, ln_q: f64) -> f64 {
        let terms: Vec<f64> = self
            .counts
            .iter()
            .map(|(&(a, c), &n)| {
                (n as f64).ln()
                    + a as f64 * ln_p
                    + (self.n_edges - a as usize) as f64 * ln_1mp
                    + c as f64 * ln_q
            })
            .collect();
        log_sum_exp(&terms)
    }
}

pub fn pow_rational(x: &BigRational, e: i64) -> BigRational {
    if e >= 0 {
        num_traits::pow::pow(x.clone(), e as usize)
    } else {
        num_traits::pow::pow(x.clone(), (-e) as usize).recip()
    }
}

fn check_budget(n_edges: usize) -> Result<()> {
    if n_edges > MAX_EDGES {
        return Err(Error::BudgetExceeded(format!(
            "{n_edges} edges exceeds the exhaustive cap of {MAX_EDGES}"
        )));
    }
    Ok(())
}

const CHUNK: u64 = 1 << 14;

/// Subset counts of a simple graph, classified by component count
/// (isolated vertices included).
pub fn rc_class_counts(g: &SimpleGraph) -> Result<ClassCounts> {
    check_budget(g.n_edges())?;
    let n_edges = g.n_edges();
    let total: u64 = 1 << n_edges;
    let chunks: Vec<ClassCounts> = (0..=(total - 1) / CHUNK)
        .into_par_iter()
        .map(|chunk| {
            let mut cc = ClassCounts { n_edges, ..Default::default() };
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(total);
            for mask in lo..hi {
                let mut uf = UnionFind::new(g.n_vertices);
                for (i, &(u, v)) in g.edges.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        uf.union(u, v);
                    }
                }
                cc.add(mask.count_ones(), uf.count() as u32);
            }
            cc
        })
        .collect();
    let mut out = ClassCounts { n_edges, ..Default::default() };
    for c in &chunks {
        out.merge(c);
    }
    Ok(out)
}

/// Exact Z^RC by exhaustive enumeration, rational parameters.
pub fn exact_z_rc(g: &SimpleGraph, p: &BigRational, q: &BigRational) -> Result<BigRational> {
    Ok(rc_class_counts(g)?.eval_rational(p, q))
}

/// log Z^RC for arbitrary real parameters.
pub fn exact_log_z_rc(g: &SimpleGraph, p: f64, q: f64) -> Result<f64> {
    Ok(rc_class_counts(g)?.eval_log(p.ln(), (1.0 - p).ln(), q.ln()))
}

/// A multigraph given by an edge list over identified vertices; wired
/// boundary conditions keep edge multiplicities (self-loops contribute to
/// the edge count but never merge components).
pub struct MultiGraph {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

impl MultiGraph {
    pub fn class_counts(&self) -> Result<ClassCounts> {
        check_budget(self.edges.len())?;
        let n_edges = self.edges.len();
        let mut cc = ClassCounts { n_edges, ..Default::default() };
        for mask in 0u64..(1 << n_edges) {
            let mut uf = UnionFind::new(self.n_vertices);
            for (i, &(u, v)) in self.edges.iter().enumerate() {
                if mask >> i & 1 == 1 && u != v {
                    uf.union(u, v);
                }
            }
            cc.add(mask.count_ones(), uf.count() as u32);
        }
        Ok(cc)
    }
}

/// Subset counts for Λ ⊂ Z^d with free or wired boundary conditions.
/// Free: the induced subgraph. Wired: every boundary vertex (one with a
/// neighbor outside Λ) identified to a single vertex, multiplicities kept.
pub fn boundary_class_counts(coords: &[Vec<i64>], wired: bool) -> Result<ClassCounts> {
    let d = coords[0].len();
    let index: std::collections::HashMap<&Vec<i64>, usize> =
        coords.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut edges = Vec::new();
    for (i, c) in coords.iter().enumerate() {
        for axis in 0..d {
            let mut nb = c.clone();
            nb[axis] += 1;
            if let Some(&j) = index.get(&nb) {
                edges.push((i, j));
            }
        }
    }
    if !wired {
        return rc_class_counts(&SimpleGraph::from_edges(coords.len(), edges));
    }
    let is_boundary: Vec<bool> = coords
        .iter()
        .map(|c| {
            (0..d).any(|axis| {
                [-1i64, 1].iter().any(|&dir| {
                    let mut nb = c.clone();
                    nb[axis] += dir;
                    !index.contains_key(&nb)
                })
            })
        })
        .collect();
    // identified vertex space: boundary -> 0, interior -> 1..
    let mut map = vec![0usize; coords.len()];
    let mut next = 1;
    for (i, &b) in is_boundary.iter().enumerate() {
        if !b {
            map[i] = next;
            next += 1;
        }
    }
    let edges = edges.into_iter().map(|(u, v)| (map[u], map[v])).collect();
    MultiGraph { n_vertices: next, edges }.class_counts()
}

/// Histogram of bichromatic-edge counts over all q-colorings.
pub fn potts_energy_histogram(g: &SimpleGraph, q: u32) -> Result<Vec<u64>> {
    let states = (q as f64).powi(g.n_vertices as i32);
    if states > 1e8 {
        return Err(Error::BudgetExceeded(format!(
            "{q}^{} colorings exceed the exhaustive cap of 1e8",
            g.n_vertices
        )));
    }
    let mut hist = vec![0u64; g.n_edges() + 1];
    let mut coloring = vec![0u32; g.n_vertices];
    loop {
        let h = g.edges.iter().filter(|&&(u, v)| coloring[u] != coloring[v]).count();
        hist[h] += 1;
        let mut pos = 0;
        loop {
            coloring[pos] += 1;
            if coloring[pos] < q {
                break;
            }
            coloring[pos] = 0;
            pos += 1;
            if pos == g.n_vertices {
                return Ok(hist);
            }
        }
    }
}

/// Z^Potts = Σ_σ exp(−β · #bichromatic edges).
pub fn exact_z_potts(g: &SimpleGraph, beta: f64, q: u32) -> Result<f64> {
    let hist = potts_energy_histogram(g, q)?;
    Ok(kahan_sum(hist.iter().enumerate().map(|(h, &n)| n as f64 * (-beta * h as f64).exp())))
}

/// The ferromagnetically scaled sum Σ_σ exp(β · #monochromatic edges)
/// = e^{β|E|} · Z^Potts.
pub fn exact_z_potts_scaled(g: &SimpleGraph, beta: f64, q: u32) -> Result<f64> {
    let hist = potts_energy_histogram(g, q)?;
    let m = g.n_edges();
    Ok(kahan_sum(
        hist.iter().enumerate().map(|(h, &n)| n as f64 * (beta * (m - h) as f64).exp()),
    ))
}

/// Exact Potts probability vector over all q^|V| colorings (mixed-radix
/// index, digit v = color of vertex v).
pub fn exact_potts_distribution(g: &SimpleGraph, beta: f64, q: u32) -> Result<Vec<f64>> {
    let states = (q as f64).powi(g.n_vertices as i32);
    if states > 1e7 {
        return Err(Error::BudgetExceeded("coloring space too large".into()));
    }
    let n_states = states as usize;
    let mut logw = Vec::with_capacity(n_states);
    let mut coloring = vec![0u32; g.n_vertices];
    for _ in 0..n_states {
        let h = g.edges.iter().filter(|&&(u, v)| coloring[u] != coloring[v]).count();
        logw.push(-beta * h as f64);
        let mut pos = 0;
        while pos < g.n_vertices {
            coloring[pos] += 1;
            if coloring[pos] < q {
                break;
            }
            coloring[pos] = 0;
            pos += 1;
        }
    }
    let z = log_sum_exp(&logw);
    Ok(logw.into_iter().map(|l| (l - z).exp()).collect())
}

/// Configuration class under the contour decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigClass {
    /// At least one interface present.
    Tunnel,
    /// No interfaces; the common exterior is ordered.
    ExtOrd,
    /// No interfaces; the common exterior is disordered.
    ExtDis,
}

/// Classifies a configuration: tunnel when interfaces exist; otherwise by
/// the label of the region lying in the exterior of every contour.
pub fn classify_config(dual: &Dual, a: &EdgeConfig) -> ConfigClass {
    let dec = decompose(dual, a);
    classify_decomposition(dual, &dec)
}

pub fn classify_decomposition(dual: &Dual, dec: &crate::contour::Decomposition) -> ConfigClass {
    if dec.has_interfaces() {
        return ConfigClass::Tunnel;
    }
    // mark cells covered by some contour interior; the external region is
    // the one whose representative cell is covered by none
    let mut covered = BitSet::new(dual.n_cells);
    for comp in &dec.components {
        let int = interior(dual, comp);
        covered.union_with(&int.cells);
    }
    for r in &dec.regions {
        if !covered.contains(r.rep_cell as usize) {
            return match r.label {
                Label::Ord => ConfigClass::ExtOrd,
                Label::Dis => ConfigClass::ExtDis,
            };
        }
    }
    unreachable!("some region must lie outside all contour interiors")
}

/// Exact decomposition of Z^RC on a torus into tunnel, ordered-exterior and
/// disordered-exterior class sums: Z_tunnel + (Σ over Ω_ord) + (Σ over
/// Ω_dis) = Z^RC identically, and the ordered class sum equals q·Z_ord.
pub struct ContourSplit {
    pub tunnel: ClassCounts,
    /// Σ over Ω_ord of w(A) = q·Z_ord.
    pub ord: ClassCounts,
    pub dis: ClassCounts,
    /// Configuration masks per class (tunnel, ord, dis), increasing, when
    /// collected.
    pub configs: Option<[Vec<u64>; 3]>,
}

pub fn exact_contour_split(
    g: &TorusGraph,
    dual: &Dual,
    collect_configs: bool,
) -> Result<ContourSplit> {
    check_budget(g.n_edges())?;
    let n_edges = g.n_edges();
    let total: u64 = 1 << n_edges;
    struct Part {
        tunnel: ClassCounts,
        ord: ClassCounts,
        dis: ClassCounts,
        configs: Option<[Vec<u64>; 3]>,
    }
    let parts: Vec<Part> = (0..=(total - 1) / CHUNK)
        .into_par_iter()
        .map(|chunk| {
            let mut part = Part {
                tunnel: ClassCounts { n_edges, ..Default::default() },
                ord: ClassCounts { n_edges, ..Default::default() },
                dis: ClassCounts { n_edges, ..Default::default() },
                configs: collect_configs.then(|| [Vec::new(), Vec::new(), Vec::new()]),
            };
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(total);
            for mask in lo..hi {
                let a = EdgeConfig::from_mask(g, mask);
                let mut uf = UnionFind::new(g.n_vertices());
                for e in a.iter() {
                    let (u, v) = g.edge_endpoints(e);
                    uf.union(u, v);
                }
                let comps = uf.count() as u32;
                let class = classify_config(dual, &a);
                let (cc, slot) = match class {
                    ConfigClass::Tunnel => (&mut part.tunnel, 0),
                    ConfigClass::ExtOrd => (&mut part.ord, 1),
                    ConfigClass::ExtDis => (&mut part.dis, 2),
                };
                cc.add(mask.count_ones(), comps);
                if let Some(cfg) = &mut part.configs {
                    cfg[slot].push(mask);
                }
            }
            part
        })
        .collect();
    let mut out = ContourSplit {
        tunnel: ClassCounts { n_edges, ..Default::default() },
        ord: ClassCounts { n_edges, ..Default::default() },
        dis: ClassCounts { n_edges, ..Default::default() },
        configs: collect_configs.then(|| [Vec::new(), Vec::new(), Vec::new()]),
    };
    for p in &parts {
        out.tunnel.merge(&p.tunnel);
        out.ord.merge(&p.ord);
        out.dis.merge(&p.dis);
        if let (Some(dst), Some(src)) = (&mut out.configs, &p.configs) {
            for (d, s) in dst.iter_mut().zip(src) {
                d.extend_from_slice(s);
            }
        }
    }
    Ok(out)
}

/// Exact probability vector of μ^RC over all 2^|E| configurations, indexed
/// by edge mask, for arbitrary real parameters.
pub fn exact_rc_distribution(g: &TorusGraph, p: f64, q: f64) -> Result<Vec<f64>> {
    check_budget(g.n_edges())?;
    let n = g.n_edges();
    let ln_p = p.ln();
    let ln_1mp = (1.0 - p).ln();
    let ln_q = q.ln();
    let logw: Vec<f64> = (0u64..(1 << n))
        .into_par_iter()
        .map(|mask| {
            let a = EdgeConfig::from_mask(g, mask);
            let mut uf = UnionFind::new(g.n_vertices());
            for e in a.iter() {
                let (u, v) = g.edge_endpoints(e);
                uf.union(u, v);
            }
            mask.count_ones() as f64 * ln_p
                + (n - mask.count_ones() as usize) as f64 * ln_1mp
                + uf.count() as f64 * ln_q
        })
        .collect();
    let z = log_sum_exp(&logw);
    Ok(logw.into_iter().map(|l| (l - z).exp()).collect())
}

/// Restricts an exact distribution to a configuration class and
/// renormalizes.
pub fn restrict_distribution(dist: &[f64], members: &[u64]) -> Vec<f64> {
    let total: f64 = members.iter().map(|&m| dist[m as usize]).sum();
    let mut out = vec![0.0; dist.len()];
    for &m in members {
        out[m as usize] = dist[m as usize] / total;
    }
    out
}

/// Total-variation distance ½ Σ |p_i − p̂_i| between an exact vector and
/// empirical counts over the same index space.
pub fn tv_distance_counts(exact: &[f64], counts: &BTreeMap<u64, u64>, n_samples: u64) -> f64 {
    let mut tv = 0.0;
    let mut seen_mass = 0.0;
    for (&idx, &c) in counts {
        let p = exact[idx as usize];
        let ph = c as f64 / n_samples as f64;
        tv += (p - ph).abs();
        seen_mass += p;
    }
    tv += 1.0 - seen_mass; // exact mass on never-sampled configurations
    tv / 2.0
}

/// TV distance between two distributions on a small finite space.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
}

/// Shorthand rational constructor.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_rc_k2() {
        // single edge: Z = pq + (1−p)q² = 3 at p = 1/2, q = 2
        let g = SimpleGraph::from_edges(2, vec![(0, 1)]);
        let z = exact_z_rc(&g, &rational(1, 2), &rational(2, 1)).unwrap();
        assert_eq!(z, rational(3, 1));
    }

    #[test]
    fn z_rc_isolated_vertex() {
        let g = SimpleGraph::from_edges(1, vec![]);
        let z = exact_z_rc(&g, &rational(1, 3), &rational(5, 1)).unwrap();
        assert_eq!(z, rational(5, 1));
    }

    #[test]
    fn z_potts_k2_and_beta_zero() {
        let g = SimpleGraph::from_edges(2, vec![(0, 1)]);
        let z = exact_z_potts(&g, 1.0, 2).unwrap();
        assert!((z - (2.0 * (-1.0f64).exp() + 2.0)).abs() < 1e-12);
        let z0 = exact_z_potts(&g, 0.0, 3).unwrap();
        assert!((z0 - 9.0).abs() < 1e-12);
    }

    #[test]
    fn potts_rc_coupling_identities() {
        // Σ_σ e^{−β·#bichromatic} = Z^RC(1−e^{−β}, q), and the scaled form
        // Σ_σ e^{β·#monochromatic} = e^{β|E|} Z^RC(1−e^{−β}, q)
        for (g, q) in [
            (SimpleGraph::from_edges(2, vec![(0, 1)]), 2u32),
            (SimpleGraph::cycle(3), 3),
            (SimpleGraph::grid(2, 2), 3),
        ] {
            let beta = 1.0;
            let p = 1.0 - (-1.0f64).exp();
            let z_potts = exact_z_potts(&g, beta, q).unwrap();
            let z_rc = exact_log_z_rc(&g, p, q as f64).unwrap().exp();
            assert!(
                (z_potts - z_rc).abs() / z_rc < 1e-12,
                "bichromatic form: {z_potts} vs {z_rc}"
            );
            let z_scaled = exact_z_potts_scaled(&g, beta, q).unwrap();
            let rhs = (beta * g.n_edges() as f64).exp() * z_rc;
            assert!((z_scaled - rhs).abs() / rhs < 1e-12, "scaled form: {z_scaled} vs {rhs}");
        }
    }

    #[test]
    fn boundary_single_vertex() {
        let coords = vec![vec![0, 0]];
        let free = boundary_class_counts(&coords, false).unwrap();
        let wired = boundary_class_counts(&coords, true).unwrap();
        let q = rational(7, 1);
        let p = rational(1, 2);
        assert_eq!(free.eval_rational(&p, &q), q);
        assert_eq!(wired.eval_rational(&p, &q), q);
    }

    #[test]
    fn boundary_wired_pair_keeps_multiplicity() {
        // two adjacent vertices, both on the boundary: identification turns
        // the edge into a loop and Z^w = q·(p + (1−p)) = q
        let coords = vec![vec![0, 0], vec![1, 0]];
        let wired = boundary_class_counts(&coords, true).unwrap();
        let z = wired.eval_rational(&rational(1, 3), &rational(4, 1));
        assert_eq!(z, rational(4, 1));
        // free: pq + (1−p)q² = 4/3 + 32/3 = 12
        let free = boundary_class_counts(&coords, false).unwrap();
        let z = free.eval_rational(&rational(1, 3), &rational(4, 1));
        assert_eq!(z, rational(12, 1));
    }

    #[test]
    fn contour_split_reconciles_t23() {
        let g = TorusGraph::new(2, 3).unwrap();
        let dual = Dual::new(&g);
        let split = exact_contour_split(&g, &dual, false).unwrap();
        for (pn, pd, qn) in [(1i64, 2i64, 2i64), (1, 3, 5)] {
            let p = rational(pn, pd);
            let q = rational(qn, 1);
            let z_split = split.tunnel.eval_rational(&p, &q)
                + split.ord.eval_rational(&p, &q)
                + split.dis.eval_rational(&p, &q);
            let z = exact_z_rc(&g.as_simple_graph(), &p, &q).unwrap();
            assert_eq!(z_split, z);
        }
        assert_eq!(classify_config(&dual, &g.empty_config()), ConfigClass::ExtDis);
        assert_eq!(classify_config(&dual, &g.full_config()), ConfigClass::ExtOrd);
    }

    #[test]
    fn full_ring_is_tunnel() {
        let g = TorusGraph::new(2, 3).unwrap();
        let dual = Dual::new(&g);
        let mut edges = Vec::new();
        let mut v = 0usize;
        for _ in 0..3 {
            edges.push(g.edge_index(v, 0));
            v = g.neighbor(v, 0, 1);
        }
        let a = EdgeConfig::from_edges(&g, &edges);
        assert_eq!(classify_config(&dual, &a), ConfigClass::Tunnel);
    }

    #[test]
    fn tv_distances() {
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.5, 0.5]), 0.5);
        let mut counts = BTreeMap::new();
        counts.insert(0u64, 5u64);
        counts.insert(1, 5);
        let tv = tv_distance_counts(&[0.5, 0.5], &counts, 10);
        assert!(tv.abs() < 1e-12);
    }
}
