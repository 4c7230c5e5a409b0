//! Finite graphs: lattice boxes, small test graphs, wired quotients,
//! annuli and tilings.
//!
//! Vertices of a box are ordered lexicographically on their coordinates
//! (first coordinate most significant). Edges are ordered by
//! `(lower endpoint, axis)`, so edge ids are stable and replayable.

use crate::error::{Error, Result};

/// Largest vertex or edge count a graph may have (ids are stored as `u32`).
pub const MAX_INDEX: u128 = u32::MAX as u128;

/// The box `Λ_n = [-n, n]^d`, optionally translated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxSpec {
    pub dim: usize,
    pub radius: usize,
    pub center: Option<Vec<i32>>,
}

impl BoxSpec {
    pub fn new(dim: usize, radius: usize) -> Self {
        BoxSpec {
            dim,
            radius,
            center: None,
        }
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn vertex_count(&self) -> u128 {
        (self.side() as u128).pow(self.dim as u32)
    }

    pub fn edge_count(&self) -> u128 {
        if self.dim == 0 {
            return 0;
        }
        self.dim as u128 * (self.side() as u128).pow(self.dim as u32 - 1) * 2 * self.radius as u128
    }

    fn center_coord(&self, axis: usize) -> i32 {
        self.center.as_ref().map_or(0, |c| c[axis])
    }
}

/// Bookkeeping for a graph obtained by merging vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeInfo {
    /// Original vertex -> quotient vertex.
    pub map: Vec<usize>,
    /// The merged boundary vertex `δ` (wired quotients only).
    pub delta: Option<usize>,
}

/// A finite (multi)graph with stable vertex and edge ids.
///
/// Graphs built by [`FiniteGraph::new`] and the lattice constructors are
/// simple. Quotients ([`FiniteGraph::wire`], [`FiniteGraph::quotient`]) may
/// carry parallel edges and self-loops so that configuration spaces of the
/// original graph and of the quotient share one edge index space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteGraph {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    dim: usize,
    coords: Option<Vec<i32>>,
    boundary: Vec<bool>,
    adjacency: Vec<Vec<(usize, usize)>>,
    box_spec: Option<BoxSpec>,
    merge: Option<MergeInfo>,
}

impl FiniteGraph {
    /// A simple graph with an empty boundary.
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if vertex_count as u128 > MAX_INDEX || edges.len() as u128 > MAX_INDEX {
            return Err(Error::Capacity {
                what: "graph size",
                size: vertex_count.max(edges.len()) as u128,
                limit: MAX_INDEX,
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for (id, &(u, v)) in edges.iter().enumerate() {
            if u >= vertex_count || v >= vertex_count {
                return Err(Error::pre(format!("edge {id} has an endpoint out of range")));
            }
            if u == v {
                return Err(Error::pre(format!("edge {id} is a self-loop")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::pre(format!("edge {id} duplicates an earlier edge")));
            }
        }
        Ok(Self::assemble(vertex_count, edges, vec![false; vertex_count]))
    }

    fn assemble(vertex_count: usize, edges: Vec<(usize, usize)>, boundary: Vec<bool>) -> Self {
        let mut adjacency = vec![Vec::new(); vertex_count];
        for (id, &(u, v)) in edges.iter().enumerate() {
            adjacency[u].push((v, id));
            if u != v {
                adjacency[v].push((u, id));
            }
        }
        FiniteGraph {
            vertex_count,
            edges,
            dim: 0,
            coords: None,
            boundary,
            adjacency,
            box_spec: None,
            merge: None,
        }
    }

    /// Replaces the boundary vertex set.
    pub fn with_boundary(mut self, boundary: &[usize]) -> Result<Self> {
        let mut flags = vec![false; self.vertex_count];
        for &v in boundary {
            if v >= self.vertex_count {
                return Err(Error::pre(format!("boundary vertex {v} out of range")));
            }
            flags[v] = true;
        }
        self.boundary = flags;
        Ok(self)
    }

    /// Path on `n` vertices; the boundary is the two endpoints.
    pub fn path(n: usize) -> Self {
        assert!(n >= 1);
        let edges = (1..n).map(|i| (i - 1, i)).collect();
        let g = Self::new(n, edges).expect("path is simple");
        g.with_boundary(&[0, n - 1]).expect("endpoints exist")
    }

    /// Cycle on `n >= 3` vertices; every vertex is a boundary vertex.
    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3);
        let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let all: Vec<usize> = (0..n).collect();
        Self::new(n, edges).expect("cycle is simple").with_boundary(&all).unwrap()
    }

    /// Complete graph; every vertex is a boundary vertex.
    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        let all: Vec<usize> = (0..n).collect();
        Self::new(n, edges).expect("complete graph is simple").with_boundary(&all).unwrap()
    }

    /// `rows x cols` grid with lexicographic vertex order; the boundary is the
    /// outer rim.
    pub fn grid(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1);
        let id = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
            }
        }
        let rim: Vec<usize> = (0..rows * cols)
            .filter(|&v| {
                let (r, c) = (v / cols, v % cols);
                r == 0 || c == 0 || r + 1 == rows || c + 1 == cols
            })
            .collect();
        let mut g = Self::new(rows * cols, edges).expect("grid is simple");
        g.dim = 2;
        g.coords = Some(
            (0..rows * cols)
                .flat_map(|v| [(v / cols) as i32, (v % cols) as i32])
                .collect(),
        );
        g.with_boundary(&rim).unwrap()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> (usize, usize) {
        self.edges[id]
    }

    /// `(neighbour, edge id)` pairs in edge-id order. A self-loop appears once.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coord(&self, v: usize) -> Option<&[i32]> {
        self.coords
            .as_ref()
            .map(|c| &c[v * self.dim..(v + 1) * self.dim])
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertex_count).filter(|&v| self.boundary[v]).collect()
    }

    pub fn box_spec(&self) -> Option<&BoxSpec> {
        self.box_spec.as_ref()
    }

    pub fn merge_info(&self) -> Option<&MergeInfo> {
        self.merge.as_ref()
    }

    /// True when some edge is a self-loop (only possible for quotients).
    pub fn has_self_loops(&self) -> bool {
        self.edges.iter().any(|&(u, v)| u == v)
    }

    /// Sup-norm distance of `v` from the box centre.
    pub fn sup_norm(&self, v: usize) -> Option<usize> {
        let spec = self.box_spec.as_ref()?;
        let c = self.coord(v)?;
        Some(
            c.iter()
                .enumerate()
                .map(|(a, &x)| (x - spec.center_coord(a)).unsigned_abs() as usize)
                .max()
                .unwrap_or(0),
        )
    }

    /// Vertex at the given absolute coordinates of a box, if inside.
    pub fn vertex_at(&self, coord: &[i32]) -> Option<usize> {
        let spec = self.box_spec.as_ref()?;
        let side = spec.side() as i64;
        let mut idx: i64 = 0;
        for (a, &x) in coord.iter().enumerate() {
            let off = (x - spec.center_coord(a)) as i64 + spec.radius as i64;
            if off < 0 || off >= side {
                return None;
            }
            idx = idx * side + off;
        }
        Some(idx as usize)
    }

    /// Looks up the edge joining `u` and `v` (first match in id order).
    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.adjacency[u]
            .iter()
            .find(|&&(w, _)| w == v)
            .map(|&(_, id)| id)
    }

    /// Quotient by a vertex map onto `0..count`. Edge ids are preserved;
    /// edges inside one class become self-loops.
    pub fn quotient(&self, map: &[usize], count: usize) -> Result<FiniteGraph> {
        if map.len() != self.vertex_count {
            return Err(Error::Mismatch("quotient map length".into()));
        }
        if map.iter().any(|&m| m >= count) {
            return Err(Error::pre("quotient map target out of range"));
        }
        let edges = self.edges.iter().map(|&(u, v)| (map[u], map[v])).collect();
        let mut boundary = vec![false; count];
        for v in 0..self.vertex_count {
            if self.boundary[v] {
                boundary[map[v]] = true;
            }
        }
        let mut g = Self::assemble(count, edges, boundary);
        g.merge = Some(MergeInfo {
            map: map.to_vec(),
            delta: None,
        });
        Ok(g)
    }

    /// The wired graph `G¹`: all boundary vertices merged into one vertex `δ`.
    ///
    /// Interior vertices keep their relative order and come first; `δ` is the
    /// last vertex. Edges between boundary vertices become `δ–δ` self-loops
    /// that never affect connectivity but keep their ids.
    pub fn wire(&self) -> Result<FiniteGraph> {
        if !self.boundary.iter().any(|&b| b) {
            return Err(Error::pre("cannot wire a graph with an empty boundary"));
        }
        let interior = self.boundary.iter().filter(|&&b| !b).count();
        let delta = interior;
        let mut next = 0;
        let map: Vec<usize> = self
            .boundary
            .iter()
            .map(|&b| {
                if b {
                    delta
                } else {
                    next += 1;
                    next - 1
                }
            })
            .collect();
        let mut g = self.quotient(&map, interior + 1)?;
        g.merge = Some(MergeInfo {
            map,
            delta: Some(delta),
        });
        Ok(g)
    }
}

/// Builds the box `Λ_n` with nearest-neighbour edges.
pub fn build_box(spec: &BoxSpec) -> Result<FiniteGraph> {
    if spec.dim == 0 {
        return Err(Error::param("d", "dimension must be at least 1"));
    }
    if let Some(c) = &spec.center {
        if c.len() != spec.dim {
            return Err(Error::param("center", "length differs from the dimension"));
        }
    }
    let nv = spec.vertex_count();
    let ne = spec.edge_count();
    let total = (spec.dim as u128).checked_mul(nv);
    if nv > MAX_INDEX || ne > MAX_INDEX || total.is_none_or(|t| t > usize::MAX as u128) {
        return Err(Error::Capacity {
            what: "box size",
            size: nv.max(ne),
            limit: MAX_INDEX,
        });
    }
    let d = spec.dim;
    let side = spec.side();
    let n = spec.radius as i32;
    let nv = nv as usize;
    let mut coords = Vec::with_capacity(nv * d);
    let mut boundary = vec![false; nv];
    let mut stride = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        stride[a] = stride[a + 1] * side;
    }
    for (v, flag) in boundary.iter_mut().enumerate() {
        let mut on_boundary = false;
        for a in 0..d {
            let off = (v / stride[a]) % side;
            let x = off as i32 - n;
            on_boundary |= x.abs() == n;
            coords.push(x + spec.center_coord(a));
        }
        *flag = on_boundary;
    }
    let mut edges = Vec::with_capacity(ne as usize);
    for v in 0..nv {
        for &s in stride.iter() {
            if (v / s) % side + 1 < side {
                edges.push((v, v + s));
            }
        }
    }
    let mut g = FiniteGraph::assemble(nv, edges, boundary);
    g.dim = d;
    g.coords = Some(coords);
    g.box_spec = Some(spec.clone());
    Ok(g)
}

/// Vertices of a box graph with `inner <= |x|_inf <= outer`.
pub fn annulus_vertices(g: &FiniteGraph, inner: usize, outer: usize) -> Vec<usize> {
    (0..g.vertex_count())
        .filter(|&v| {
            let r = g.sup_norm(v).expect("box graph");
            r >= inner && r <= outer
        })
        .collect()
}

/// Edges of `Λ_outer ∖ Λ_inner`: both endpoints in `Λ_outer`, not both in
/// `Λ_inner`. With `inner = None` this is every edge of `Λ_outer`.
pub fn annulus_edges(g: &FiniteGraph, inner: Option<usize>, outer: usize) -> Vec<usize> {
    let norms: Vec<usize> = (0..g.vertex_count())
        .map(|v| g.sup_norm(v).expect("box graph"))
        .collect();
    g.edges()
        .iter()
        .enumerate()
        .filter(|&(_, &(u, v))| {
            let (a, b) = (norms[u], norms[v]);
            a <= outer && b <= outer && inner.is_none_or(|i| a > i || b > i)
        })
        .map(|(id, _)| id)
        .collect()
}

/// Scale radii `N_k = N - k·w` for the annulus decomposition of `Λ_N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnulusPlan {
    pub outer: usize,
    pub width: usize,
    /// Smallest admissible scale radius; `N_{k_fin}` is the last radius not
    /// below it.
    pub inner_stop: usize,
}

impl AnnulusPlan {
    /// Default plan: width `max(1, ⌈ln N⌉)`, stop at `⌈3N/4⌉`.
    pub fn new(outer: usize) -> Result<Self> {
        let width = ((outer as f64).ln().ceil() as usize).max(1);
        Self::with(outer, width, (3 * outer).div_ceil(4))
    }

    pub fn with(outer: usize, width: usize, inner_stop: usize) -> Result<Self> {
        if outer < 2 {
            return Err(Error::param("N", "annulus plan needs N >= 2"));
        }
        if width == 0 {
            return Err(Error::param("width", "must be at least 1"));
        }
        if inner_stop < outer.div_ceil(2) || inner_stop > outer {
            return Err(Error::param("inner_stop", "must lie in [N/2, N]"));
        }
        Ok(AnnulusPlan {
            outer,
            width,
            inner_stop,
        })
    }

    /// Index of the last annulus.
    pub fn k_fin(&self) -> usize {
        (self.outer - self.inner_stop) / self.width
    }

    /// `N_k`.
    pub fn radius(&self, k: usize) -> usize {
        self.outer - k * self.width
    }

    /// `N_0 > N_1 > … > N_{k_fin}`.
    pub fn radii(&self) -> Vec<usize> {
        (0..=self.k_fin()).map(|k| self.radius(k)).collect()
    }
}

/// One tile: the axis-aligned vertex box `[lo, hi]` and the edge ids it owns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tile {
    pub lo: Vec<i32>,
    pub hi: Vec<i32>,
    pub edges: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tiling {
    pub side: usize,
    pub tiles: Vec<Tile>,
}

impl Tiling {
    /// True when no edge id belongs to two tiles.
    pub fn is_edge_disjoint(&self) -> bool {
        let mut all: Vec<usize> = self.tiles.iter().flat_map(|t| t.edges.iter().copied()).collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == n
    }
}

fn require_box(g: &FiniteGraph) -> Result<&BoxSpec> {
    g.box_spec()
        .ok_or_else(|| Error::pre("tiling needs a box graph"))
}

/// Edges along `+axis` from vertices of `[lo, hi]` that stay inside it,
/// skipping those for which `skip(v_coords, axis)` holds.
fn box_edges(
    g: &FiniteGraph,
    lo: &[i32],
    hi: &[i32],
    mut skip: impl FnMut(&[i32], usize) -> bool,
) -> Vec<usize> {
    let d = lo.len();
    let mut out = Vec::new();
    let mut x = lo.to_vec();
    loop {
        let v = g.vertex_at(&x).expect("tile inside box");
        for a in 0..d {
            if x[a] < hi[a] && !skip(&x, a) {
                let mut y = x.clone();
                y[a] += 1;
                let w = g.vertex_at(&y).expect("tile inside box");
                out.push(g.edge_between(v, w).expect("lattice edge"));
            }
        }
        // odometer, last axis fastest
        let mut a = d;
        loop {
            if a == 0 {
                out.sort_unstable();
                return out;
            }
            a -= 1;
            if x[a] < hi[a] {
                x[a] += 1;
                break;
            }
            x[a] = lo[a];
        }
    }
}

/// Recursive hyperoctant split of a box into tiles of side at least `L`.
///
/// A box of side `s >= 2L` is split at its midpoint into `2^d` children;
/// splitting stops once the side is below `2L`. Every tile drops the edges
/// lying in its minimal faces that are interior to the box, which makes the
/// tiles pairwise edge-disjoint.
pub fn dyadic_tiling(g: &FiniteGraph, side_len: usize) -> Result<Tiling> {
    let spec = require_box(g)?;
    let width = 2 * spec.radius;
    if side_len == 0 {
        return Err(Error::param("L", "must be at least 1"));
    }
    if side_len > width {
        return Err(Error::param(
            "L",
            format!("{side_len} exceeds the region width {width}"),
        ));
    }
    let d = spec.dim;
    let region_lo: Vec<i32> = (0..d)
        .map(|a| spec.center_coord(a) - spec.radius as i32)
        .collect();
    let region_hi: Vec<i32> = (0..d)
        .map(|a| spec.center_coord(a) + spec.radius as i32)
        .collect();
    let mut pending = vec![(region_lo.clone(), region_hi)];
    let mut leaves = Vec::new();
    while let Some((lo, hi)) = pending.pop() {
        let side = (hi[0] - lo[0]) as usize;
        if side < 2 * side_len {
            leaves.push((lo, hi));
            continue;
        }
        // children pushed in reverse so they pop in lexicographic order
        let mut children = Vec::with_capacity(1 << d);
        for mask in 0..(1usize << d) {
            let mut clo = lo.clone();
            let mut chi = hi.clone();
            for a in 0..d {
                let mid = lo[a] + (hi[a] - lo[a]) / 2;
                if mask >> (d - 1 - a) & 1 == 0 {
                    chi[a] = mid;
                } else {
                    clo[a] = mid;
                }
            }
            children.push((clo, chi));
        }
        pending.extend(children.into_iter().rev());
    }
    leaves.sort();
    let tiles = leaves
        .into_iter()
        .map(|(lo, hi)| {
            let edges = box_edges(g, &lo, &hi, |x, axis| {
                (0..d).any(|j| j != axis && x[j] == lo[j] && lo[j] > region_lo[j])
            });
            Tile { lo, hi, edges }
        })
        .collect();
    Ok(Tiling {
        side: side_len,
        tiles,
    })
}

/// Greedy lexicographic packing of annulus `k` of `plan` by boxes of side `L`.
///
/// A box is kept when it avoids the open inner box `|x|_inf < N_k` and its
/// annulus edges are unused by earlier tiles; the tile owns those edges.
pub fn annulus_tiling(g: &FiniteGraph, plan: &AnnulusPlan, k: usize, side_len: usize) -> Result<Tiling> {
    let spec = require_box(g)?;
    if k == 0 || k > plan.k_fin() {
        return Err(Error::param("k", format!("must lie in 1..={}", plan.k_fin())));
    }
    if plan.outer > spec.radius {
        return Err(Error::pre("annulus plan exceeds the box"));
    }
    if side_len == 0 {
        return Err(Error::param("L", "must be at least 1"));
    }
    if side_len > plan.width {
        return Err(Error::param(
            "L",
            format!("{side_len} exceeds the annulus width {}", plan.width),
        ));
    }
    let outer = plan.radius(k - 1) as i32;
    let inner = plan.radius(k) as i32;
    let d = spec.dim;
    let mut in_annulus = vec![false; g.edge_count()];
    for e in annulus_edges(g, Some(inner as usize), outer as usize) {
        in_annulus[e] = true;
    }
    let mut used = vec![false; g.edge_count()];
    let mut tiles = Vec::new();
    let l = side_len as i32;
    let mut corner = vec![-outer; d];
    loop {
        let lo: Vec<i32> = (0..d).map(|a| corner[a] + spec.center_coord(a)).collect();
        let hi: Vec<i32> = lo.iter().map(|&x| x + l).collect();
        let inside = (0..d).all(|a| corner[a] < inner && corner[a] + l > -inner);
        let edges: Vec<usize> = box_edges(g, &lo, &hi, |_, _| false)
            .into_iter()
            .filter(|&e| in_annulus[e])
            .collect();
        if !inside && edges.iter().all(|&e| !used[e]) {
            for &e in &edges {
                used[e] = true;
            }
            tiles.push(Tile { lo, hi, edges });
        }
        let mut a = d;
        loop {
            if a == 0 {
                return Ok(Tiling {
                    side: side_len,
                    tiles,
                });
            }
            a -= 1;
            if corner[a] + l < outer {
                corner[a] += 1;
                break;
            }
            corner[a] = -outer;
        }
    }
}
