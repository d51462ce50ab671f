//! Abstract polymer models and the truncated cluster expansion.
//!
//! A polymer model here is a finite, materialized universe: every polymer of
//! size below the truncation bound, with its size ‖γ‖, vertex count |γ|,
//! log-weight and host-vertex support. Incompatibility is an explicit
//! symmetric relation; every polymer is incompatible with itself.
//!
//! log Z is approximated by the truncated cluster expansion
//! T_m = Σ_{‖Γ‖<m} φ(H_Γ) Π w_γ over clusters (multisets of polymers whose
//! incompatibility graph is connected), with exact-rational Ursell
//! coefficients and log-space weight products.

use std::collections::HashMap;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitset::BitSet;
use crate::error::Error;
use crate::logsum::log_sum_exp;
use crate::rng::SeedTree;
use crate::Result;

/// Cap on Ursell-function graph order; the signed subset sums fit in i128
/// comfortably below this.
pub const URSELL_CAP: usize = 12;

/// A small undirected graph given by adjacency bitmasks, for Ursell values.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SmallGraph {
    pub n: usize,
    pub adj: Vec<u16>,
}

impl SmallGraph {
    pub fn new(n: usize) -> Self {
        SmallGraph { n, adj: vec![0; n] }
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        assert!(u != v && u < self.n && v < self.n);
        self.adj[u] |= 1 << v;
        self.adj[v] |= 1 << u;
    }

    pub fn complete(n: usize) -> Self {
        let mut g = SmallGraph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                g.add_edge(u, v);
            }
        }
        g
    }

    /// Key invariant under relabeling for small orders; falls back to the
    /// raw adjacency for larger graphs (still a valid memo key, just with
    /// fewer cache hits).
    fn canonical_key(&self) -> (usize, Vec<u16>) {
        if self.n > 8 {
            return (self.n, self.adj.clone());
        }
        let mut best: Option<Vec<u16>> = None;
        let mut perm: Vec<usize> = (0..self.n).collect();
        heap_permute(&mut perm, self.n, &mut |p| {
            let mut adj = vec![0u16; self.n];
            for u in 0..self.n {
                for v in 0..self.n {
                    if self.adj[u] >> v & 1 == 1 {
                        adj[p[u]] |= 1 << p[v];
                    }
                }
            }
            if best.as_ref().map_or(true, |b| adj < *b) {
                best = Some(adj);
            }
        });
        (self.n, best.unwrap_or_default())
    }
}

fn heap_permute(perm: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        f(perm);
        return;
    }
    for i in 0..k {
        heap_permute(perm, k - 1, f);
        if k % 2 == 0 {
            perm.swap(i, k - 1);
        } else {
            perm.swap(0, k - 1);
        }
    }
}

static URSELL_MEMO: Mutex<Option<HashMap<(usize, Vec<u16>), BigRational>>> = Mutex::new(None);

/// Ursell function φ(H) = (1/|V|!) Σ_{A spanning, (V,A) connected} (−1)^{|A|},
/// as an exact rational. Memoized under a canonical graph key; the memo is
/// safe for concurrent insert-or-read.
pub fn ursell(h: &SmallGraph) -> Result<BigRational> {
    if h.n == 0 {
        return Ok(BigRational::zero());
    }
    if h.n > URSELL_CAP {
        return Err(Error::UrsellCap(h.n, URSELL_CAP));
    }
    let key = h.canonical_key();
    {
        let guard = URSELL_MEMO.lock().unwrap();
        if let Some(map) = guard.as_ref() {
            if let Some(v) = map.get(&key) {
                return Ok(v.clone());
            }
        }
    }
    let value = ursell_uncached(h);
    let mut guard = URSELL_MEMO.lock().unwrap();
    guard.get_or_insert_with(HashMap::new).insert(key, value.clone());
    Ok(value)
}

fn ursell_uncached(h: &SmallGraph) -> BigRational {
    let n = h.n;
    let full: u32 = (1u32 << n) - 1;
    // has_edge[mask]: the induced subgraph on `mask` has at least one edge
    let mut has_edge = vec![false; 1 << n];
    for mask in 1u32..=full {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        has_edge[mask as usize] = has_edge[rest as usize] || (h.adj[low] as u32 & mask) != 0;
    }
    // f[S] = Σ_{A ⊆ E[S], (S,A) connected spanning} (−1)^{|A|}
    let mut f = vec![0i128; 1 << n];
    for mask in 1u32..=full {
        let low_bit = mask & mask.wrapping_neg();
        if mask == low_bit {
            f[mask as usize] = 1; // single vertex: only A = ∅
            continue;
        }
        // f(S) = [E[S]=∅] − Σ_{T ∋ low, T ⊊ S, E[S∖T]=∅} f(T)
        let mut acc: i128 = if has_edge[mask as usize] { 0 } else { 1 };
        let rest = mask ^ low_bit;
        let mut u = (rest.wrapping_sub(1)) & rest;
        loop {
            let t = low_bit | u;
            let comp = mask ^ t;
            if !has_edge[comp as usize] {
                acc -= f[t as usize];
            }
            if u == 0 {
                break;
            }
            u = (u.wrapping_sub(1)) & rest;
        }
        f[mask as usize] = acc;
    }
    let mut fact = BigInt::one();
    for k in 2..=n {
        fact *= BigInt::from(k);
    }
    BigRational::new(BigInt::from(f[full as usize]), fact)
}

/// One polymer in a materialized universe.
#[derive(Clone, Debug)]
pub struct PolymerItem {
    /// Size ‖γ‖ > 0 entering the truncation bound.
    pub size: f64,
    /// Vertex count |γ| in the host graph (Peierls condition).
    pub n_vertices: u32,
    /// ln w_γ; `NEG_INFINITY` encodes weight zero.
    pub log_weight: f64,
    /// Host vertices covered by the polymer; drives default compatibility
    /// and the vertex-by-vertex sampler.
    pub support: BitSet,
}

/// A finite polymer universe with an explicit incompatibility relation.
#[derive(Clone, Debug)]
pub struct PolymerSet {
    pub host_vertices: usize,
    pub items: Vec<PolymerItem>,
    incompat: Vec<BitSet>,
}

impl PolymerSet {
    pub fn new(host_vertices: usize) -> Self {
        PolymerSet { host_vertices, items: Vec::new(), incompat: Vec::new() }
    }

    pub fn push(&mut self, item: PolymerItem) -> usize {
        assert!(item.size > 0.0, "polymer sizes must be positive");
        self.items.push(item);
        self.items.len() - 1
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Incompatibility from support overlap (vertex-disjointness default).
    /// Call after all pushes.
    pub fn finalize_by_support(&mut self) {
        let items = std::mem::take(&mut self.items);
        self.incompat = incompat_table(items.len(), |i, j| {
            !items[i].support.is_disjoint(&items[j].support)
        });
        self.items = items;
    }

    /// Incompatibility from an arbitrary symmetric predicate.
    pub fn finalize_by(&mut self, mut incompatible: impl FnMut(usize, usize) -> bool) {
        self.incompat = incompat_table(self.items.len(), |i, j| incompatible(i, j));
    }

    pub fn incompatible(&self, i: usize, j: usize) -> bool {
        i == j || self.incompat[i].contains(j)
    }

    pub fn incompatible_set(&self, i: usize) -> &BitSet {
        &self.incompat[i]
    }

    fn assert_finalized(&self) {
        assert_eq!(self.incompat.len(), self.items.len(), "PolymerSet not finalized");
    }
}

fn incompat_table(n: usize, mut pred: impl FnMut(usize, usize) -> bool) -> Vec<BitSet> {
    let mut table = vec![BitSet::new(n); n];
    for i in 0..n {
        table[i].insert(i);
        for j in i + 1..n {
            if pred(i, j) {
                table[i].insert(j);
                table[j].insert(i);
            }
        }
    }
    table
}

/// A cluster: a multiset of polymers whose incompatibility graph is
/// connected, stored with multiplicities.
#[derive(Clone, Debug)]
pub struct Cluster {
    /// Distinct polymer indices, increasing.
    pub support: Vec<usize>,
    /// Multiplicities aligned with `support`.
    pub mult: Vec<u32>,
    pub total_size: f64,
    /// Ursell coefficient summed over tuple orderings of the multiset:
    /// f(H_Γ)/Π mult_i! in exact arithmetic.
    pub coeff: BigRational,
    /// Σ mult_i · ln w_i.
    pub log_weight: f64,
}

impl Cluster {
    /// coeff · Π w as f64.
    pub fn term(&self) -> f64 {
        let c = self.coeff.to_f64().unwrap_or(0.0);
        if c == 0.0 {
            0.0
        } else {
            c * self.log_weight.exp()
        }
    }
}

/// Enumerates every cluster with total size < m exactly once, in a
/// deterministic order.
pub fn enumerate_clusters(set: &PolymerSet, m: f64) -> Result<Vec<Cluster>> {
    set.assert_finalized();
    let n = set.items.len();
    let mut out = Vec::new();
    // Connected supports via canonical extension over the incompatibility
    // graph, anchored at their minimum index.
    for anchor in 0..n {
        if set.items[anchor].size >= m {
            continue;
        }
        let mut support = vec![anchor];
        let mut seen = BitSet::new(n);
        seen.insert(anchor);
        let init_ext: Vec<usize> = set.incompat[anchor].iter().filter(|&j| j > anchor).collect();
        for &j in &init_ext {
            seen.insert(j);
        }
        extend_support(set, m, anchor, &mut support, &mut seen, &init_ext, &mut out)?;
    }
    Ok(out)
}

fn extend_support(
    set: &PolymerSet,
    m: f64,
    anchor: usize,
    support: &mut Vec<usize>,
    seen: &mut BitSet,
    ext: &[usize],
    out: &mut Vec<Cluster>,
) -> Result<()> {
    let base: f64 = support.iter().map(|&i| set.items[i].size).sum();
    if base < m {
        assign_multiplicities(set, m, support, out)?;
    }
    for (i, &j) in ext.iter().enumerate() {
        if base + set.items[j].size >= m {
            continue;
        }
        support.push(j);
        let mut new_ext: Vec<usize> = ext[i + 1..].to_vec();
        let mut added = Vec::new();
        for k in set.incompat[j].iter() {
            if k > anchor && !seen.contains(k) {
                seen.insert(k);
                added.push(k);
                new_ext.push(k);
            }
        }
        extend_support(set, m, anchor, support, seen, &new_ext, out)?;
        for k in added {
            seen.remove(k);
        }
        support.pop();
    }
    Ok(())
}

fn assign_multiplicities(
    set: &PolymerSet,
    m: f64,
    support: &[usize],
    out: &mut Vec<Cluster>,
) -> Result<()> {
    // Copies of one polymer are pairwise incompatible, so any multiplicities
    // ≥ 1 on a connected support keep the blown-up graph connected.
    let total = |mult: &[u32]| -> f64 {
        support.iter().zip(mult).map(|(&i, &c)| set.items[i].size * c as f64).sum()
    };
    let mut mult = vec![1u32; support.len()];
    loop {
        if total(&mult) < m {
            out.push(build_cluster(set, support, &mult)?);
            mult[0] += 1;
        } else {
            let mut pos = 0;
            loop {
                mult[pos] = 1;
                pos += 1;
                if pos == mult.len() {
                    return Ok(());
                }
                mult[pos] += 1;
                if total(&mult) < m {
                    break;
                }
            }
        }
    }
}

fn build_cluster(set: &PolymerSet, support: &[usize], mult: &[u32]) -> Result<Cluster> {
    let copies: u32 = mult.iter().sum();
    if copies as usize > URSELL_CAP {
        return Err(Error::UrsellCap(copies as usize, URSELL_CAP));
    }
    // blown-up incompatibility graph on individual copies
    let mut owner = Vec::with_capacity(copies as usize);
    for (si, &c) in mult.iter().enumerate() {
        for _ in 0..c {
            owner.push(si);
        }
    }
    let mut h = SmallGraph::new(copies as usize);
    for a in 0..owner.len() {
        for b in a + 1..owner.len() {
            let (pa, pb) = (support[owner[a]], support[owner[b]]);
            if pa == pb || set.incompatible(pa, pb) {
                h.add_edge(a, b);
            }
        }
    }
    let phi = ursell(&h)?; // f(H)/copies!
    // orderings of the multiset: copies!/Π mult_i!
    let mut numer = BigInt::one();
    for k in 2..=copies {
        numer *= BigInt::from(k);
    }
    let mut denom = BigInt::one();
    for &c in mult {
        for k in 2..=c {
            denom *= BigInt::from(k);
        }
    }
    let coeff = phi * BigRational::new(numer, denom);
    let log_weight: f64 = support
        .iter()
        .zip(mult)
        .map(|(&i, &c)| set.items[i].log_weight * c as f64)
        .sum();
    let total_size = support
        .iter()
        .zip(mult)
        .map(|(&i, &c)| set.items[i].size * c as f64)
        .sum();
    Ok(Cluster { support: support.to_vec(), mult: mult.to_vec(), total_size, coeff, log_weight })
}

/// T_m(C, w): value of the truncated cluster expansion.
pub fn truncated_expansion(set: &PolymerSet, m: f64) -> Result<f64> {
    Ok(enumerate_clusters(set, m)?.iter().map(Cluster::term).sum())
}

/// Precomputed cluster terms for fast evaluation on sub-universes.
pub struct ClusterBasis {
    entries: Vec<(BitSet, f64)>,
}

impl ClusterBasis {
    pub fn build(set: &PolymerSet, m: f64) -> Result<Self> {
        let clusters = enumerate_clusters(set, m)?;
        let n = set.items.len();
        let entries = clusters
            .iter()
            .map(|c| {
                let mut bits = BitSet::new(n);
                for &i in &c.support {
                    bits.insert(i);
                }
                (bits, c.term())
            })
            .collect();
        Ok(ClusterBasis { entries })
    }

    /// T_m restricted to clusters supported inside `allowed`.
    pub fn eval(&self, allowed: &BitSet) -> f64 {
        self.entries
            .iter()
            .filter(|(bits, _)| bits.is_subset(allowed))
            .map(|&(_, t)| t)
            .sum()
    }
}

/// Outcome of the finite Kotecký–Preiss check.
#[derive(Clone, Debug)]
pub struct KpReport {
    pub pass: bool,
    /// First violating polymer and a description.
    pub witness: Option<(usize, String)>,
    /// Largest polymer size present in the checked universe.
    pub checked_up_to: f64,
}

/// Checks, for every enumerated polymer, the Peierls condition ‖γ‖ ≥ b|γ|
/// and the weight bound |w_γ| ≤ exp(−((3+log Δ)/b + 3)‖γ‖).
///
/// This is a finite check over the materialized universe, not a proof for
/// all sizes; callers pair it with a model-specific analytic bound when one
/// is available.
pub fn kp_verify(set: &PolymerSet, b: f64, max_degree: usize) -> KpReport {
    let rate = (3.0 + (max_degree.max(1) as f64).ln()) / b + 3.0;
    let mut checked_up_to: f64 = 0.0;
    for (i, it) in set.items.iter().enumerate() {
        checked_up_to = checked_up_to.max(it.size);
        if it.size < b * it.n_vertices as f64 {
            return KpReport {
                pass: false,
                witness: Some((
                    i,
                    format!("size {} < b·|γ| = {}", it.size, b * it.n_vertices as f64),
                )),
                checked_up_to,
            };
        }
        let bound = -rate * it.size;
        if it.log_weight > bound {
            return KpReport {
                pass: false,
                witness: Some((
                    i,
                    format!(
                        "log w = {:.6} exceeds KP bound {:.6} at size {}",
                        it.log_weight, bound, it.size
                    ),
                )),
                checked_up_to,
            };
        }
    }
    KpReport { pass: true, witness: None, checked_up_to }
}

/// Tail bound N·e^{−3m} for the truncated expansion under the KP condition.
pub fn truncation_error_bound(host_vertices: usize, m: f64) -> f64 {
    host_vertices as f64 * (-3.0 * m).exp()
}

/// Smallest integer m with N e^{−3m} ≤ ε.
pub fn truncation_depth(host_vertices: usize, eps: f64) -> u32 {
    (((host_vertices as f64) / eps).ln() / 3.0).ceil().max(1.0) as u32
}

/// Samples a pairwise-compatible collection from the Gibbs distribution
/// ∝ Π w_γ by conditioning host vertex by host vertex; conditional
/// probabilities are ratios of truncated expansions on shrinking
/// sub-universes, so the output law is within TV distance ~ε of the target
/// when the KP condition holds at depth m.
pub fn sample_compatible_collection(
    set: &PolymerSet,
    m: f64,
    seed: SeedTree,
) -> Result<Vec<usize>> {
    set.assert_finalized();
    let basis = ClusterBasis::build(set, m)?;
    let mut rng = seed.rng();
    let n = set.items.len();

    // allowed[i]: polymer i still selectable given the history
    let mut allowed = BitSet::new(n);
    for i in 0..n {
        allowed.insert(i);
    }
    let mut chosen = Vec::new();
    for v in 0..set.host_vertices {
        let cands: Vec<usize> =
            allowed.iter().filter(|&i| set.items[i].support.contains(v)).collect();
        // after this step no polymer covering v may be selected
        let mut allowed_none = allowed.clone();
        for &i in &cands {
            allowed_none.remove(i);
        }
        if cands.is_empty() {
            allowed = allowed_none;
            continue;
        }
        let mut logs = vec![basis.eval(&allowed_none)]; // option: no polymer at v
        let mut restricted = Vec::with_capacity(cands.len());
        for &i in &cands {
            let mut a = allowed_none.clone();
            for j in set.incompat[i].iter() {
                a.remove(j);
            }
            logs.push(set.items[i].log_weight + basis.eval(&a));
            restricted.push(a);
        }
        let total = log_sum_exp(&logs);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = logs.len() - 1;
        for (k, &l) in logs.iter().enumerate() {
            acc += (l - total).exp();
            if u < acc {
                pick = k;
                break;
            }
        }
        if pick == 0 {
            allowed = allowed_none;
        } else {
            chosen.push(cands[pick - 1]);
            allowed = restricted[pick - 1].clone();
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// A log-space partition value with an attached relative-error bound and
/// provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub log_value: f64,
    /// exp(log_value ± rel_error_bound) brackets the target when the
    /// producing operation's preconditions hold.
    pub rel_error_bound: f64,
    pub method: Method,
    pub truncation_m: u32,
    /// Set when a runtime gate (KP check or decay envelope) failed and the
    /// run proceeded anyway.
    pub heuristic: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    HighTemperature,
    ContourCritical,
    ContourSupercritical,
    ContourMid,
    Annealing,
}

impl PartitionEstimate {
    pub fn exact(log_value: f64) -> Self {
        PartitionEstimate {
            log_value,
            rel_error_bound: 0.0,
            method: Method::Exact,
            truncation_m: 0,
            heuristic: false,
            notes: Vec::new(),
        }
    }
}

/// Exhaustive log-partition function of a finite polymer universe:
/// enumeration over all pairwise-compatible subsets. Test-scale oracle,
/// independent of the expansion path.
pub fn log_z_exhaustive(set: &PolymerSet) -> f64 {
    set.assert_finalized();
    let n = set.items.len();
    let mut terms = vec![0.0f64]; // empty collection
    let mut stack: Vec<(usize, BitSet, f64)> = vec![(0, BitSet::new(n), 0.0)];
    while let Some((next, blocked, logw)) = stack.pop() {
        for i in next..n {
            if blocked.contains(i) {
                continue;
            }
            let lw = logw + set.items[i].log_weight;
            if lw == f64::NEG_INFINITY {
                continue;
            }
            terms.push(lw);
            let mut b = blocked.clone();
            b.union_with(&set.incompat[i]);
            stack.push((i + 1, b, lw));
        }
    }
    log_sum_exp(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Signed;

    #[test]
    fn ursell_base_cases() {
        assert_eq!(ursell(&SmallGraph::new(1)).unwrap(), BigRational::one());
        let k2 = SmallGraph::complete(2);
        assert_eq!(ursell(&k2).unwrap(), BigRational::new(BigInt::from(-1), BigInt::from(2)));
        let k3 = SmallGraph::complete(3);
        assert_eq!(ursell(&k3).unwrap(), BigRational::new(BigInt::from(1), BigInt::from(3)));
    }

    #[test]
    fn ursell_complete_closed_form_and_sign() {
        // φ(K_k) = (−1)^{k−1}/k; sign alternates with the vertex count
        for k in 1..=7 {
            let phi = ursell(&SmallGraph::complete(k)).unwrap();
            let want =
                BigRational::new(BigInt::from(if k % 2 == 1 { 1 } else { -1 }), BigInt::from(k));
            assert_eq!(phi, want, "k = {k}");
            assert!(phi.abs() > BigRational::zero());
        }
    }

    #[test]
    fn ursell_disconnected_is_zero() {
        let mut g = SmallGraph::new(2);
        assert!(ursell(&g).unwrap().is_zero());
        g = SmallGraph::new(3);
        g.add_edge(0, 1);
        assert!(ursell(&g).unwrap().is_zero());
    }

    #[test]
    fn ursell_cap() {
        assert!(matches!(ursell(&SmallGraph::new(13)), Err(Error::UrsellCap(13, _))));
    }

    fn unit_polymer(w: f64, host: usize, v: usize) -> PolymerItem {
        let mut support = BitSet::new(host);
        support.insert(v);
        PolymerItem { size: 1.0, n_vertices: 1, log_weight: w.ln(), support }
    }

    #[test]
    fn clusters_empty_universe() {
        let mut set = PolymerSet::new(1);
        set.finalize_by_support();
        assert!(enumerate_clusters(&set, 5.0).unwrap().is_empty());
        assert_eq!(truncated_expansion(&set, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn clusters_single_polymer() {
        let mut set = PolymerSet::new(1);
        set.push(unit_polymer(0.1, 1, 0));
        set.finalize_by_support();
        let cl = enumerate_clusters(&set, 4.0).unwrap();
        let mults: Vec<u32> = cl.iter().map(|c| c.mult[0]).collect();
        assert_eq!(mults, vec![1, 2, 3]);
        let t = truncated_expansion(&set, 4.0).unwrap();
        let want = 0.1 - 0.1f64.powi(2) / 2.0 + 0.1f64.powi(3) / 3.0;
        assert!((t - want).abs() < 1e-15, "{t} vs {want}");
        assert!((t - 0.0953333).abs() < 1e-6);
    }

    #[test]
    fn compatible_pair_has_no_mixed_cluster() {
        let mut set = PolymerSet::new(2);
        set.push(unit_polymer(0.2, 2, 0));
        set.push(unit_polymer(0.3, 2, 1));
        set.finalize_by_support();
        let cl = enumerate_clusters(&set, 6.0).unwrap();
        assert!(cl.iter().all(|c| c.support.len() == 1));
    }

    #[test]
    fn cluster_multiset_completeness_vs_tuple_bruteforce() {
        // Directly sum φ over ordered tuples on a tiny universe and compare
        // with the multiset enumeration.
        let mut set = PolymerSet::new(3);
        set.push(unit_polymer(0.11, 3, 0));
        set.push(unit_polymer(0.07, 3, 0)); // incompatible with #0
        set.push(unit_polymer(0.05, 3, 1));
        set.finalize_by_support();
        let m = 4.0;
        let multiset_total = truncated_expansion(&set, m).unwrap();
        // ordered tuples up to length 3 (sizes all 1, so ‖Γ‖ = len < 4)
        let idx = [0usize, 1, 2];
        let mut tuple_total = 0.0;
        for len in 1..=3usize {
            let mut tuple = vec![0usize; len];
            loop {
                let mut h = SmallGraph::new(len);
                for a in 0..len {
                    for b in a + 1..len {
                        if set.incompatible(idx[tuple[a]], idx[tuple[b]]) {
                            h.add_edge(a, b);
                        }
                    }
                }
                let phi = ursell(&h).unwrap().to_f64().unwrap();
                if phi != 0.0 {
                    let w: f64 =
                        tuple.iter().map(|&t| set.items[idx[t]].log_weight).sum::<f64>().exp();
                    // ordered-tuple convention carries 1/len! inside φ
                    tuple_total += phi * w;
                }
                // next tuple in lexicographic order
                let mut pos = 0;
                loop {
                    tuple[pos] += 1;
                    if tuple[pos] < 3 {
                        break;
                    }
                    tuple[pos] = 0;
                    pos += 1;
                    if pos == len {
                        break;
                    }
                }
                if pos == len {
                    break;
                }
            }
        }
        assert!(
            (multiset_total - tuple_total).abs() < 1e-12,
            "{multiset_total} vs {tuple_total}"
        );
    }

    #[test]
    fn expansion_converges_to_exhaustive() {
        // weights at the KP boundary for b = 1, Δ = 2: |w| ≤ e^{-(3+ln2+3)}
        let w_max = (-(6.0 + 2.0f64.ln())).exp();
        let mut set = PolymerSet::new(2);
        set.push(unit_polymer(w_max * 0.9, 2, 0));
        set.push(unit_polymer(w_max * 0.4, 2, 0));
        set.push(unit_polymer(w_max * 0.7, 2, 1));
        set.finalize_by_support();
        assert!(kp_verify(&set, 1.0, 2).pass);
        let logz = log_z_exhaustive(&set);
        let direct =
            ((1.0 + w_max * 0.9 + w_max * 0.4) * (1.0f64 + w_max * 0.7)).ln();
        assert!((logz - direct).abs() < 1e-12);
        for m in 1..=8 {
            let t = truncated_expansion(&set, m as f64).unwrap();
            assert!(
                (t - logz).abs() <= truncation_error_bound(2, m as f64) + 1e-15,
                "m = {m}: |{t} - {logz}| > {}",
                truncation_error_bound(2, m as f64)
            );
        }
    }

    #[test]
    fn kp_examples() {
        // single-edge polymer of the high-temperature model at q = 10^4,
        // β = 0.05, d = 2: passes at size 1
        let w = (0.05f64.exp() - 1.0) / 1.0e4;
        let mut set = PolymerSet::new(2);
        let mut support = BitSet::new(2);
        support.insert(0);
        support.insert(1);
        set.push(PolymerItem { size: 1.0, n_vertices: 2, log_weight: w.ln(), support });
        set.finalize_by_support();
        let rep = kp_verify(&set, 0.5, 4);
        assert!(rep.pass, "{:?}", rep.witness);

        // a weight-1 size-1 polymer always fails
        let mut bad = PolymerSet::new(1);
        bad.push(unit_polymer(1.0, 1, 0));
        bad.finalize_by_support();
        let rep = kp_verify(&bad, 0.5, 4);
        assert!(!rep.pass);
        assert_eq!(rep.witness.unwrap().0, 0);

        // weight-zero model passes
        let mut zero = PolymerSet::new(1);
        let mut s = BitSet::new(1);
        s.insert(0);
        zero.push(PolymerItem {
            size: 1.0,
            n_vertices: 1,
            log_weight: f64::NEG_INFINITY,
            support: s,
        });
        zero.finalize_by_support();
        assert!(kp_verify(&zero, 1.0, 4).pass);
    }

    #[test]
    fn truncation_bound_values() {
        assert!((truncation_error_bound(1, 0.0) - 1.0).abs() < 1e-15);
        let b = truncation_error_bound(18, 5.0);
        assert!((b - 18.0 * (-15.0f64).exp()).abs() < 1e-18);
        // N = 100, m = ln(8·100/ε)/3 with ε = 0.8: bound = ε/8 = 0.1
        let eps = 0.8f64;
        let m = (8.0 * 100.0 / eps).ln() / 3.0;
        assert!((truncation_error_bound(100, m) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn sample_zero_weight_always_empty() {
        let mut set = PolymerSet::new(3);
        for v in 0..3 {
            let mut s = BitSet::new(3);
            s.insert(v);
            set.push(PolymerItem {
                size: 1.0,
                n_vertices: 1,
                log_weight: f64::NEG_INFINITY,
                support: s,
            });
        }
        set.finalize_by_support();
        for k in 0..5 {
            let got = sample_compatible_collection(&set, 6.0, SeedTree::new(k)).unwrap();
            assert!(got.is_empty());
        }
    }

    #[test]
    fn sample_single_polymer_two_state() {
        let w = 0.1;
        let mut set = PolymerSet::new(1);
        set.push(unit_polymer(w, 1, 0));
        set.finalize_by_support();
        let n = 20_000;
        let mut hits = 0;
        let root = SeedTree::new(42);
        for k in 0..n {
            if !sample_compatible_collection(&set, 8.0, root.child(k)).unwrap().is_empty() {
                hits += 1;
            }
        }
        let p = hits as f64 / n as f64;
        let want = w / (1.0 + w);
        assert!((p - want).abs() < 0.01, "p = {p}, want {want}");
    }

    #[test]
    fn approximate_weight_stability() {
        // perturbing weights by relative ε·‖γ‖² with ε < 1/N moves T_m by
        // at most Nε/4 for m = log(8/ε)/3
        let host = 4;
        let mut set = PolymerSet::new(host);
        for v in 0..4 {
            let mut s = BitSet::new(host);
            s.insert(v);
            s.insert((v + 1) % 4);
            set.push(PolymerItem {
                size: 2.0,
                n_vertices: 2,
                log_weight: (0.001 * (v + 1) as f64).ln(),
                support: s,
            });
        }
        set.finalize_by_support();
        let n = host as f64;
        let eps = 1.0 / (2.0 * n);
        let m = (8.0 / eps).ln() / 3.0;
        let t0 = truncated_expansion(&set, m).unwrap();
        let mut pert = set.clone();
        for it in &mut pert.items {
            it.log_weight += eps * it.size * it.size; // v(γ) = ‖γ‖²
        }
        let t1 = truncated_expansion(&pert, m).unwrap();
        assert!((t1 - t0).abs() <= n * eps / 4.0 + 1e-12);
    }

    #[test]
    fn determinism_same_seed_same_output() {
        let mut set = PolymerSet::new(2);
        set.push(unit_polymer(0.3, 2, 0));
        set.push(unit_polymer(0.2, 2, 1));
        set.finalize_by_support();
        let a = sample_compatible_collection(&set, 6.0, SeedTree::new(9)).unwrap();
        let b = sample_compatible_collection(&set, 6.0, SeedTree::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
