//! Bond, flow and current configurations, cluster labelings, sources and
//! the percolation events used throughout the toolkit.

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::FiniteGraph;
use crate::unionfind::UnionFind;

/// One bit per edge id. Bit `e` of an enumeration index is edge `e`
/// (little-endian).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BondConfig {
    words: Vec<u64>,
    len: usize,
}

impl BondConfig {
    pub fn empty(len: usize) -> Self {
        BondConfig {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut c = Self::empty(len);
        for w in c.words.iter_mut() {
            *w = !0;
        }
        c.mask_tail();
        c
    }

    /// Configuration whose open edges are the bits of `index`.
    pub fn from_index(len: usize, index: u64) -> Self {
        assert!(len <= 64 || index >> 63 == 0);
        let mut c = Self::empty(len);
        if len > 0 {
            c.words[0] = index;
        }
        c.mask_tail();
        c
    }

    pub fn from_edges(len: usize, edges: &[usize]) -> Self {
        let mut c = Self::empty(len);
        for &e in edges {
            c.set(e, true);
        }
        c
    }

    /// Parses a `0`/`1` string in edge-id order.
    pub fn from_bits(bits: &str) -> Option<Self> {
        let mut c = Self::empty(bits.len());
        for (i, ch) in bits.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => c.set(i, true),
                _ => return None,
            }
        }
        Some(c)
    }

    fn mask_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Enumeration index (only for at most 64 edges).
    pub fn index(&self) -> u64 {
        debug_assert!(self.len <= 64);
        self.words.first().copied().unwrap_or(0)
    }

    #[inline]
    pub fn get(&self, e: usize) -> bool {
        debug_assert!(e < self.len);
        self.words[e >> 6] >> (e & 63) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, e: usize, open: bool) {
        debug_assert!(e < self.len);
        let bit = 1u64 << (e & 63);
        if open {
            self.words[e >> 6] |= bit;
        } else {
            self.words[e >> 6] &= !bit;
        }
    }

    pub fn count_open(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn open_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&e| self.get(e))
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.len == other.len {
            Ok(())
        } else {
            Err(Error::Mismatch(format!(
                "configurations of length {} and {}",
                self.len, other.len
            )))
        }
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(self.zip(other, |a, b| a | b))
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(self.zip(other, |a, b| a & b))
    }

    /// Edges open here but closed in `other`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(self.zip(other, |a, b| a & !b))
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(self.zip(other, |a, b| a ^ b))
    }

    fn zip(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        BondConfig {
            words: self.words.iter().zip(&other.words).map(|(&a, &b)| f(a, b)).collect(),
            len: self.len,
        }
    }

    pub fn union_with(&mut self, other: &Self) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// `self ⪯ other` (every edge open here is open there).
    pub fn is_subset(&self, other: &Self) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(&a, &b)| a & !b == 0)
    }

    /// `0`/`1` string in edge-id order.
    pub fn to_bits(&self) -> String {
        (0..self.len).map(|e| if self.get(e) { '1' } else { '0' }).collect()
    }
}

impl fmt::Debug for BondConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BondConfig({})", self.to_bits())
    }
}

/// Exterior condition for connectivity inside a box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    Free,
    /// All boundary vertices connected through the exterior.
    Wired,
    /// Boundary vertices connected through the exterior class by class.
    Partition(Vec<Vec<usize>>),
}

impl BoundaryCondition {
    /// Exterior identifications as a list of vertex classes.
    pub fn classes(&self, g: &FiniteGraph) -> Result<Vec<Vec<usize>>> {
        match self {
            BoundaryCondition::Free => Ok(Vec::new()),
            BoundaryCondition::Wired => Ok(vec![g.boundary_vertices()]),
            BoundaryCondition::Partition(parts) => {
                for part in parts {
                    for &v in part {
                        if v >= g.vertex_count() || !g.is_boundary(v) {
                            return Err(Error::pre(format!(
                                "boundary partition mentions non-boundary vertex {v}"
                            )));
                        }
                    }
                }
                Ok(parts.clone())
            }
        }
    }
}

/// Cluster id per vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterLabeling {
    /// Cluster id of each vertex; ids are `0..count` in order of first vertex.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl ClusterLabeling {
    /// `κ`: number of clusters.
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn largest(&self) -> Option<usize> {
        (0..self.sizes.len()).max_by_key(|&c| (self.sizes[c], std::cmp::Reverse(c)))
    }

    /// Vertices of cluster `c` in index order.
    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&v| self.labels[v] == c).collect()
    }
}

/// Union-find over the open edges of `omega` (plus exterior classes).
pub fn union_find(g: &FiniteGraph, omega: &BondConfig, bc: &BoundaryCondition) -> Result<UnionFind> {
    if omega.len() != g.edge_count() {
        return Err(Error::Mismatch("configuration length differs from edge count".into()));
    }
    let mut uf = UnionFind::new(g.vertex_count());
    for class in bc.classes(g)? {
        for w in class.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    for e in omega.open_edges() {
        let (u, v) = g.edge(e);
        uf.union(u, v);
    }
    Ok(uf)
}

/// Clusters of `omega` under boundary condition `bc`; the count is `κ^ξ(ω)`.
pub fn clusters(g: &FiniteGraph, omega: &BondConfig, bc: &BoundaryCondition) -> Result<ClusterLabeling> {
    let mut uf = union_find(g, omega, bc)?;
    Ok(labeling(&mut uf))
}

pub(crate) fn labeling(uf: &mut UnionFind) -> ClusterLabeling {
    let n = uf.len();
    let mut root_label = vec![usize::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    for v in 0..n {
        let r = uf.find(v);
        if root_label[r] == usize::MAX {
            root_label[r] = sizes.len();
            sizes.push(0);
        }
        labels.push(root_label[r]);
        sizes[root_label[r]] += 1;
    }
    ClusterLabeling { labels, sizes }
}

/// `κ^ξ(ω)` without building a labeling.
pub fn cluster_count(g: &FiniteGraph, omega: &BondConfig, bc: &BoundaryCondition) -> Result<usize> {
    Ok(union_find(g, omega, bc)?.classes())
}

/// Source labels in `Z/qZ` per vertex; for `q = 2` a vertex subset.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SourceSpec {
    q: u32,
    labels: Vec<u32>,
}

impl SourceSpec {
    pub fn new(q: u32, labels: Vec<u32>) -> Result<Self> {
        if q < 2 {
            return Err(Error::param("q", "modulus must be at least 2"));
        }
        Ok(SourceSpec {
            q,
            labels: labels.into_iter().map(|l| l % q).collect(),
        })
    }

    /// No sources.
    pub fn none(q: u32, vertex_count: usize) -> Self {
        SourceSpec {
            q,
            labels: vec![0; vertex_count],
        }
    }

    /// `q = 2` sources on a vertex subset. Repeated vertices cancel.
    pub fn from_set(vertex_count: usize, set: &[usize]) -> Self {
        let mut labels = vec![0; vertex_count];
        for &v in set {
            labels[v] ^= 1;
        }
        SourceSpec { q: 2, labels }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> u32 {
        self.labels[v]
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    /// Vertices with a nonzero label.
    pub fn support(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&v| self.labels[v] != 0).collect()
    }

    pub fn total(&self) -> u32 {
        (self.labels.iter().map(|&l| l as u64).sum::<u64>() % self.q as u64) as u32
    }

    /// Closed-case validity: the labels sum to zero mod `q` (`|A|` even for `q = 2`).
    pub fn is_valid(&self) -> bool {
        self.total() == 0
    }

    pub fn is_empty(&self) -> bool {
        self.labels.iter().all(|&l| l == 0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.q != other.q || self.labels.len() != other.labels.len() {
            return Err(Error::Mismatch("source specs over different spaces".into()));
        }
        Ok(SourceSpec {
            q: self.q,
            labels: self
                .labels
                .iter()
                .zip(&other.labels)
                .map(|(&a, &b)| (a + b) % self.q)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        SourceSpec {
            q: self.q,
            labels: self.labels.iter().map(|&l| (self.q - l) % self.q).collect(),
        }
    }

    /// Pushes the labels forward along a vertex map (sums within classes).
    pub fn pushforward(&self, map: &[usize], count: usize) -> Self {
        let mut labels = vec![0; count];
        for (v, &l) in self.labels.iter().enumerate() {
            labels[map[v]] = (labels[map[v]] + l) % self.q;
        }
        SourceSpec { q: self.q, labels }
    }
}

/// A `Z/qZ` 1-form stored once per edge along the edge's reference
/// orientation `(u, v)` as listed in the graph; the reverse orientation
/// reads the negation.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FlowConfig {
    q: u32,
    values: Vec<u32>,
}

impl FlowConfig {
    pub fn zero(q: u32, edges: usize) -> Self {
        FlowConfig {
            q,
            values: vec![0; edges],
        }
    }

    pub fn new(q: u32, values: Vec<u32>) -> Self {
        assert!(q >= 2);
        FlowConfig {
            q,
            values: values.into_iter().map(|v| v % q).collect(),
        }
    }

    /// `q = 2` flow with the given support.
    pub fn from_bonds(bonds: &BondConfig) -> Self {
        FlowConfig {
            q: 2,
            values: (0..bonds.len()).map(|e| bonds.get(e) as u32).collect(),
        }
    }

    /// Decodes an enumeration index in base `q` (edge 0 least significant).
    pub fn from_index(q: u32, edges: usize, mut index: u64) -> Self {
        let mut values = Vec::with_capacity(edges);
        for _ in 0..edges {
            values.push((index % q as u64) as u32);
            index /= q as u64;
        }
        FlowConfig { q, values }
    }

    pub fn index(&self) -> u64 {
        self.values
            .iter()
            .rev()
            .fold(0u64, |acc, &v| acc * self.q as u64 + v as u64)
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn value(&self, e: usize) -> u32 {
        self.values[e]
    }

    pub fn set(&mut self, e: usize, value: u32) {
        self.values[e] = value % self.q;
    }

    /// Value read along the orientation `from -> to` of edge `e`.
    pub fn oriented(&self, g: &FiniteGraph, e: usize, from: usize) -> u32 {
        let (u, _) = g.edge(e);
        let v = self.values[e];
        if from == u {
            v
        } else {
            (self.q - v) % self.q
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.q, other.q);
        FlowConfig {
            q: self.q,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| (a + b) % self.q)
                .collect(),
        }
    }

    /// Trace `η̂`: the edges carrying a nonzero value.
    pub fn trace(&self) -> BondConfig {
        let mut c = BondConfig::empty(self.values.len());
        for (e, &v) in self.values.iter().enumerate() {
            if v != 0 {
                c.set(e, true);
            }
        }
        c
    }
}

impl fmt::Debug for FlowConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FlowConfig(q={}, {:?})", self.q, self.values)
    }
}

/// Nonnegative integer per edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CurrentConfig {
    pub values: Vec<u32>,
}

impl CurrentConfig {
    pub fn new(values: Vec<u32>) -> Self {
        CurrentConfig { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `n^odd`: edges with odd multiplicity.
pub fn odd_part(n: &CurrentConfig) -> BondConfig {
    let mut c = BondConfig::empty(n.len());
    for (e, &v) in n.values.iter().enumerate() {
        c.set(e, v % 2 == 1);
    }
    c
}

/// `n̂`: edges with positive multiplicity.
pub fn trace(n: &CurrentConfig) -> BondConfig {
    let mut c = BondConfig::empty(n.len());
    for (e, &v) in n.values.iter().enumerate() {
        c.set(e, v >= 1);
    }
    c
}

/// Divergence `(∂η)_v = Σ_{w∼v} η_(v,w)` mod `q`. For `q = 2` the support is
/// the set of odd-degree vertices of `η̂`.
pub fn sources(g: &FiniteGraph, eta: &FlowConfig) -> SourceSpec {
    let q = eta.q;
    let mut labels = vec![0u32; g.vertex_count()];
    for (e, &val) in eta.values.iter().enumerate() {
        if val == 0 {
            continue;
        }
        let (u, v) = g.edge(e);
        labels[u] = (labels[u] + val) % q;
        labels[v] = (labels[v] + q - val) % q;
    }
    SourceSpec { q, labels }
}

/// Odd-degree vertices of a bond configuration (`q = 2` sources).
pub fn bond_sources(g: &FiniteGraph, eta: &BondConfig) -> SourceSpec {
    let mut labels = vec![0u32; g.vertex_count()];
    for e in eta.open_edges() {
        let (u, v) = g.edge(e);
        labels[u] ^= 1;
        labels[v] ^= 1;
    }
    SourceSpec { q: 2, labels }
}

/// Per-cluster label sums of `A` under the clustering `uf`.
fn cluster_sums(uf: &mut UnionFind, a: &SourceSpec) -> Vec<u32> {
    let mut sums = vec![0u32; uf.len()];
    for v in 0..uf.len() {
        let l = a.labels[v];
        if l != 0 {
            let r = uf.find(v);
            sums[r] = (sums[r] + l) % a.q;
        }
    }
    sums
}

/// `F_A` under boundary condition `bc`: every cluster's `A`-labels sum to
/// zero mod `q`.
pub fn event_f_a_with(g: &FiniteGraph, omega: &BondConfig, a: &SourceSpec, bc: &BoundaryCondition) -> Result<bool> {
    if a.vertex_count() != g.vertex_count() {
        return Err(Error::Mismatch("source spec and graph differ in vertex count".into()));
    }
    if !a.is_valid() {
        return Err(Error::pre("source labels do not sum to zero"));
    }
    let mut uf = union_find(g, omega, bc)?;
    Ok(cluster_sums(&mut uf, a).iter().all(|&s| s == 0))
}

/// `F_A`: a flow with sources `A` exists inside `ω` (free boundary).
pub fn event_f_a(g: &FiniteGraph, omega: &BondConfig, a: &SourceSpec) -> Result<bool> {
    event_f_a_with(g, omega, a, &BoundaryCondition::Free)
}

/// Unique crossing of `Λ_outer ∖ Λ_inner`: exactly one cluster of `ω`
/// restricted to the annulus meets both its inner and outer vertex boundary.
pub fn event_uc(g: &FiniteGraph, omega: &BondConfig, inner: usize, outer: usize) -> Result<bool> {
    Ok(crossing_clusters(g, omega, inner, outer)? == 1)
}

/// Number of clusters of `ω|_{Λ_outer ∖ Λ_inner}` meeting both boundaries.
pub fn crossing_clusters(g: &FiniteGraph, omega: &BondConfig, inner: usize, outer: usize) -> Result<usize> {
    let spec = g.box_spec().ok_or_else(|| Error::pre("crossing events need a box graph"))?;
    if inner >= outer || outer > spec.radius {
        return Err(Error::pre(format!(
            "need inner < outer <= box radius, got {inner}, {outer}, {}",
            spec.radius
        )));
    }
    let norms: Vec<usize> = (0..g.vertex_count()).map(|v| g.sup_norm(v).unwrap()).collect();
    let mut uf = UnionFind::new(g.vertex_count());
    for e in omega.open_edges() {
        let (u, v) = g.edge(e);
        let (a, b) = (norms[u], norms[v]);
        if a <= outer && b <= outer && (a > inner || b > inner) {
            uf.union(u, v);
        }
    }
    let mut touches_inner = vec![false; g.vertex_count()];
    let mut touches_outer = vec![false; g.vertex_count()];
    for v in 0..g.vertex_count() {
        if norms[v] == inner {
            let r = uf.find(v);
            touches_inner[r] = true;
        } else if norms[v] == outer {
            let r = uf.find(v);
            touches_outer[r] = true;
        }
    }
    Ok((0..g.vertex_count())
        .filter(|&r| touches_inner[r] && touches_outer[r])
        .count())
}

/// Parameters of the Pisztora event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PisztoraThresholds {
    pub epsilon: f64,
    pub theta: f64,
    pub l0: usize,
}

impl PisztoraThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::param("theta", format!("{} is outside (0, 1]", self.theta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.theta) {
            return Err(Error::param("epsilon", format!("{} is outside (0, theta)", self.epsilon)));
        }
        if self.l0 == 0 {
            return Err(Error::param("L0", "must be at least 1"));
        }
        Ok(())
    }
}

/// The Pisztora event on a box graph: a cluster touching all `2d` faces with
/// at least `(θ − ε)|B|` vertices, while at most `ε|B|` vertices outside it
/// lie in clusters of size `>= L0`. Returns the giant (the largest cluster
/// touching all faces) on success and an empty set otherwise.
pub fn event_pis(g: &FiniteGraph, omega: &BondConfig, params: &PisztoraThresholds) -> Result<(bool, Vec<usize>)> {
    params.validate()?;
    let spec = g.box_spec().ok_or_else(|| Error::pre("Pisztora event needs a box graph"))?.clone();
    let d = spec.dim;
    let lab = clusters(g, omega, &BoundaryCondition::Free)?;
    // faces touched: bit 2a for x_a = min, 2a+1 for x_a = max
    let mut faces = vec![0u64; lab.count()];
    let n = spec.radius as i32;
    for v in 0..g.vertex_count() {
        let c = g.coord(v).unwrap();
        for (a, &x) in c.iter().enumerate() {
            let rel = x - spec.center.as_ref().map_or(0, |cc| cc[a]);
            if rel == -n {
                faces[lab.labels[v]] |= 1 << (2 * a);
            }
            if rel == n {
                faces[lab.labels[v]] |= 1 << (2 * a + 1);
            }
        }
    }
    let all_faces = (1u64 << (2 * d)) - 1;
    let giant = (0..lab.count())
        .filter(|&c| faces[c] == all_faces)
        .max_by_key(|&c| (lab.sizes[c], std::cmp::Reverse(c)));
    let Some(giant) = giant else {
        return Ok((false, Vec::new()));
    };
    let volume = g.vertex_count() as f64;
    let dense = lab.sizes[giant] as f64 >= (params.theta - params.epsilon) * volume;
    let others: usize = (0..lab.count())
        .filter(|&c| c != giant && lab.sizes[c] >= params.l0)
        .map(|c| lab.sizes[c])
        .sum();
    let small_rest = others as f64 <= params.epsilon * volume;
    if dense && small_rest {
        Ok((true, lab.members(giant)))
    } else {
        Ok((false, Vec::new()))
    }
}

/// Mode of the bulk-source event `G_A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaMode {
    /// `F_A` itself; `|A|` must be even.
    Closed,
    /// Sources may be completed by boundary vertices: `∃η ⊆ ω` with
    /// `∂η ∖ ∂_v G = A ∖ ∂_v G`. Equivalent to `F` on the wired graph.
    BoundaryRelaxed,
}

/// `q = 2` source set on the wired graph `G¹` for `A` on `G`: labels pushed
/// forward, and `δ` absorbs the parity deficit.
pub fn wired_sources(wired: &FiniteGraph, a: &SourceSpec) -> Result<SourceSpec> {
    let info = wired
        .merge_info()
        .and_then(|m| m.delta.map(|d| (m.map.clone(), d)))
        .ok_or_else(|| Error::pre("expected a wired graph"))?;
    let (map, delta) = info;
    let mut pushed = a.pushforward(&map, wired.vertex_count());
    let total = pushed.total();
    if total != 0 {
        pushed.labels[delta] = (pushed.labels[delta] + a.q - total) % a.q;
    }
    Ok(pushed)
}

/// Event `G_A` for `q = 2` sources.
pub fn event_g_a(g: &FiniteGraph, omega: &BondConfig, a: &SourceSpec, mode: GaMode) -> Result<bool> {
    if a.q != 2 {
        return Err(Error::param("q", "G_A is defined for q = 2"));
    }
    match mode {
        GaMode::Closed => {
            if !a.is_valid() {
                return Err(Error::pre("|A| is odd in closed mode"));
            }
            event_f_a(g, omega, a)
        }
        GaMode::BoundaryRelaxed => {
            let wired = g.wire()?;
            let aw = wired_sources(&wired, a)?;
            event_f_a(&wired, omega, &aw)
        }
    }
}
