//! Exact samplers on cycle spaces through spanning-forest bases.
//!
//! Every flow supported in `ω` with divergence `A` is the unique tree
//! solution for its values on the non-tree edges, so uniform values on the
//! non-tree edges followed by a leaf-to-root solve give the uniform element
//! of the coset.

use crate::config::{self, BondConfig, FlowConfig, SourceSpec};
use crate::error::{Error, Result};
use crate::graph::FiniteGraph;
use crate::rng::StreamRng;

const NO_EDGE: usize = usize::MAX;

/// BFS spanning forest of the open subgraph `ω`.
#[derive(Clone, Debug)]
pub struct ForestBasis {
    /// Tree edge towards the parent, `NO_EDGE` at roots.
    parent_edge: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    /// Vertices in BFS order, component by component.
    order: Vec<usize>,
    roots: Vec<usize>,
    non_tree: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl ForestBasis {
    /// Deterministic forest: components rooted at their least vertex, BFS
    /// over incident edges in edge-id order.
    pub fn new(g: &FiniteGraph, omega: &BondConfig) -> Self {
        let n = g.vertex_count();
        let mut parent_edge = vec![NO_EDGE; n];
        let mut parent = (0..n).collect::<Vec<_>>();
        let mut depth = vec![0; n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut roots = Vec::new();
        let mut tree = vec![false; g.edge_count()];
        for root in 0..n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            roots.push(root);
            let start = order.len();
            order.push(root);
            let mut head = start;
            while head < order.len() {
                let u = order[head];
                head += 1;
                let mut inc: Vec<(usize, usize)> = g
                    .neighbors(u)
                    .iter()
                    .filter(|&&(_, e)| omega.get(e))
                    .map(|&(w, e)| (e, w))
                    .collect();
                inc.sort_unstable();
                for (e, w) in inc {
                    if !seen[w] {
                        seen[w] = true;
                        parent[w] = u;
                        parent_edge[w] = e;
                        depth[w] = depth[u] + 1;
                        tree[e] = true;
                        order.push(w);
                    }
                }
            }
        }
        let non_tree = omega.open_edges().filter(|&e| !tree[e]).collect();
        ForestBasis {
            parent_edge,
            parent,
            depth,
            order,
            roots,
            non_tree,
            edges: g.edges().to_vec(),
        }
    }

    /// Non-tree edges of `ω`, in increasing id.
    pub fn non_tree_edges(&self) -> &[usize] {
        &self.non_tree
    }

    /// `|ω| + κ(ω) - |V|`.
    pub fn dimension(&self) -> usize {
        self.non_tree.len()
    }

    pub fn component_count(&self) -> usize {
        self.roots.len()
    }

    /// Fundamental cycle of non-tree edge number `k`, as `(edge, sign)` pairs
    /// read along the orientation of the non-tree edge (`+1` when the edge is
    /// traversed from its first to its second endpoint).
    pub fn fundamental_cycle(&self, k: usize) -> Vec<(usize, i8)> {
        let e = self.non_tree[k];
        let (u, v) = self.edges[e];
        let mut out = vec![(e, 1)];
        if u == v {
            return out;
        }
        // walk v -> lca -> u
        let (mut a, mut b) = (v, u);
        let mut from_v = Vec::new();
        let mut from_u = Vec::new();
        while a != b {
            if self.depth[a] >= self.depth[b] {
                let pe = self.parent_edge[a];
                from_v.push((pe, self.sign(pe, a)));
                a = self.parent[a];
            } else {
                let pe = self.parent_edge[b];
                // traversed parent -> b on the way to u
                from_u.push((pe, -self.sign(pe, b)));
                b = self.parent[b];
            }
        }
        out.extend(from_v);
        out.extend(from_u.into_iter().rev());
        out
    }

    /// Sign of traversing tree edge `pe` from child `c` towards its parent.
    fn sign(&self, pe: usize, c: usize) -> i8 {
        if self.edges[pe].0 == c {
            1
        } else {
            -1
        }
    }

    /// Completes `eta` (values on non-tree edges, tree edges ignored) to the
    /// unique flow with divergence `a` by solving tree edges leaf to root.
    pub fn solve_tree(&self, mut eta: FlowConfig, a: &SourceSpec) -> Result<FlowConfig> {
        let q = a.q();
        assert_eq!(eta.q(), q);
        for &pe in &self.parent_edge {
            if pe != NO_EDGE {
                eta.set(pe, 0);
            }
        }
        let mut residual: Vec<u32> = a.labels().to_vec();
        // subtract contributions of non-tree edges
        for &e in &self.non_tree {
            let val = eta.value(e);
            if val == 0 {
                continue;
            }
            let (u, v) = self.edges[e];
            residual[u] = (residual[u] + q - val) % q;
            residual[v] = (residual[v] + val) % q;
        }
        for &v in self.order.iter().rev() {
            let pe = self.parent_edge[v];
            if pe == NO_EDGE {
                if residual[v] != 0 {
                    return Err(Error::InfeasibleSources(format!(
                        "cluster rooted at vertex {v} has source sum {} mod {q}",
                        residual[v]
                    )));
                }
                continue;
            }
            let need = residual[v];
            if need == 0 {
                continue;
            }
            let (x, _) = self.edges[pe];
            let val = if x == v { need } else { (q - need) % q };
            eta.set(pe, val);
            let p = self.parent[v];
            // the edge adds `need` at v and `-need` at the parent
            residual[v] = 0;
            residual[p] = (residual[p] + need) % q;
        }
        Ok(eta)
    }

    /// Cycle-space element with coefficient `coeffs[k]` on fundamental cycle `k`.
    pub fn kernel_element(&self, q: u32, coeffs: &[u32]) -> FlowConfig {
        assert_eq!(coeffs.len(), self.non_tree.len());
        let mut eta = FlowConfig::zero(q, self.edges.len());
        for (&e, &c) in self.non_tree.iter().zip(coeffs) {
            eta.set(e, c);
        }
        let zero = SourceSpec::none(q, self.parent.len());
        self.solve_tree(eta, &zero).expect("zero sources are always feasible")
    }

    /// Uniform element of the cycle space `ker ∂` over `Z/qZ`.
    pub fn sample_kernel(&self, q: u32, rng: &mut StreamRng) -> FlowConfig {
        let coeffs: Vec<u32> = self.non_tree.iter().map(|_| rng.below(q as u64) as u32).collect();
        self.kernel_element(q, &coeffs)
    }
}

/// Spanning-forest basis of `ω`.
pub fn forest_basis(g: &FiniteGraph, omega: &BondConfig) -> ForestBasis {
    ForestBasis::new(g, omega)
}

/// Uniform even subgraph of `ω`.
pub fn sample_ueg(basis: &ForestBasis, rng: &mut StreamRng) -> BondConfig {
    basis.sample_kernel(2, rng).trace()
}

/// The tree-supported flow with divergence `A` inside `ω`. For `q = 2` this
/// is the XOR of the tree paths joining the sources of each cluster in pairs.
pub fn representative(g: &FiniteGraph, omega: &BondConfig, a: &SourceSpec) -> Result<FlowConfig> {
    let basis = ForestBasis::new(g, omega);
    representative_in(&basis, g, a)
}

fn representative_in(basis: &ForestBasis, g: &FiniteGraph, a: &SourceSpec) -> Result<FlowConfig> {
    if a.vertex_count() != g.vertex_count() {
        return Err(Error::Mismatch("sources and graph differ in vertex count".into()));
    }
    basis.solve_tree(FlowConfig::zero(a.q(), g.edge_count()), a)
}

/// Uniform flow `η ⊆ ω` with `∂η = A` (`UG^A_ω` for `q = 2`).
pub fn sample_ug(g: &FiniteGraph, omega: &BondConfig, a: &SourceSpec, rng: &mut StreamRng) -> Result<FlowConfig> {
    let basis = ForestBasis::new(g, omega);
    sample_ug_with(&basis, g, a, rng)
}

/// As [`sample_ug`] with a precomputed basis of `ω`.
pub fn sample_ug_with(basis: &ForestBasis, g: &FiniteGraph, a: &SourceSpec, rng: &mut StreamRng) -> Result<FlowConfig> {
    let eta0 = representative_in(basis, g, a)?;
    let eta = eta0.add(&basis.sample_kernel(a.q(), rng));
    assert_eq!(config::sources(g, &eta), *a, "sampled flow has wrong sources");
    Ok(eta)
}

/// `q = 2` uniform subgraph of `ω` whose odd vertices are `A` up to boundary
/// vertices: uniform over `{η ⊆ ω : ∂η = A ∪ B, B ⊆ ∂_v G}`. Sampled as the
/// uniform subgraph on the wired graph with `δ` absorbing the parity of `A`.
/// `A` must avoid the boundary.
pub fn sample_ug_delta(g: &FiniteGraph, omega: &BondConfig, a: &SourceSpec, rng: &mut StreamRng) -> Result<BondConfig> {
    if a.q() != 2 {
        return Err(Error::param("q", "boundary-relaxed sampling is defined for q = 2"));
    }
    if a.support().iter().any(|&v| g.is_boundary(v)) {
        return Err(Error::pre("sources on boundary vertices are absorbed by the wiring"));
    }
    let wired = g.wire()?;
    let aw = config::wired_sources(&wired, a)?;
    Ok(sample_ug(&wired, omega, &aw, rng)?.trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{cluster_count, BoundaryCondition};
    use crate::oracle::{self, MeasureSpec};
    use crate::stats;

    fn bits(s: &str) -> BondConfig {
        BondConfig::from_bits(s).unwrap()
    }

    #[test]
    fn basis_examples() {
        let path = FiniteGraph::path(4);
        assert_eq!(forest_basis(&path, &BondConfig::full(3)).dimension(), 0);
        let sq = FiniteGraph::cycle(4);
        let b = forest_basis(&sq, &BondConfig::full(4));
        assert_eq!(b.dimension(), 1);
        let cyc = b.fundamental_cycle(0);
        let mut es: Vec<usize> = cyc.iter().map(|&(e, _)| e).collect();
        es.sort();
        assert_eq!(es, vec![0, 1, 2, 3]);
        let two = FiniteGraph::new(6, vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]).unwrap();
        let b = forest_basis(&two, &BondConfig::full(6));
        assert_eq!(b.dimension(), 2);
        assert_eq!(b.component_count(), 2);
    }

    #[test]
    fn fundamental_cycles_are_circulations() {
        let g = FiniteGraph::grid(3, 3);
        let omega = BondConfig::full(g.edge_count());
        let b = forest_basis(&g, &omega);
        for k in 0..b.dimension() {
            let mut eta = FlowConfig::zero(5, g.edge_count());
            for (e, s) in b.fundamental_cycle(k) {
                eta.set(e, if s > 0 { 1 } else { 4 });
            }
            assert!(config::sources(&g, &eta).is_empty());
            let mut coeffs = vec![0; b.dimension()];
            coeffs[k] = 1;
            assert_eq!(b.kernel_element(5, &coeffs), eta);
        }
    }

    #[test]
    fn representative_examples() {
        let g = FiniteGraph::path(3);
        let a = SourceSpec::from_set(3, &[0, 2]);
        let eta = representative(&g, &BondConfig::full(2), &a).unwrap();
        assert_eq!(eta.trace(), BondConfig::full(2));
        let a3 = SourceSpec::new(3, vec![1, 1, 1]).unwrap();
        let eta = representative(&g, &BondConfig::full(2), &a3).unwrap();
        assert_eq!(config::sources(&g, &eta), a3);
        assert_eq!(eta.values(), &[1, 2]);
        let split = representative(&g, &bits("10"), &a);
        assert!(matches!(split, Err(Error::InfeasibleSources(_))));
    }

    #[test]
    fn triangle_ug_is_uniform_on_two_outcomes() {
        let g = FiniteGraph::cycle(3);
        let omega = BondConfig::full(3);
        let a = SourceSpec::from_set(3, &[0, 1]);
        let basis = forest_basis(&g, &omega);
        let mut rng = StreamRng::new(3, 0);
        let mut counts = vec![0u64; 8];
        for _ in 0..100_000 {
            counts[sample_ug_with(&basis, &g, &a, &mut rng).unwrap().trace().index() as usize] += 1;
        }
        let exact = oracle::enumerate(&MeasureSpec::uniform_flow(&g, a, omega)).unwrap();
        assert_eq!(counts.iter().filter(|&&c| c > 0).count(), 2);
        assert!(stats::chi_square_pvalue(&counts, &exact.probs) > 1e-4);
    }

    #[test]
    fn ueg_on_square_matches_oracle() {
        let g = FiniteGraph::cycle(4);
        let omega = BondConfig::full(4);
        let basis = forest_basis(&g, &omega);
        let mut rng = StreamRng::new(4, 0);
        let mut counts = vec![0u64; 16];
        for _ in 0..100_000 {
            counts[sample_ueg(&basis, &mut rng).index() as usize] += 1;
        }
        let exact = oracle::enumerate(&MeasureSpec::uniform_flow(&g, SourceSpec::none(2, 4), omega)).unwrap();
        assert!(stats::empirical_tv(&counts, &exact.probs) < 0.01);
    }

    #[test]
    fn ueg_of_tree_is_empty() {
        let g = FiniteGraph::path(5);
        let b = forest_basis(&g, &BondConfig::full(4));
        let mut rng = StreamRng::new(5, 0);
        for _ in 0..10 {
            assert_eq!(sample_ueg(&b, &mut rng), BondConfig::empty(4));
        }
    }

    #[test]
    fn q3_circulations_on_square() {
        let g = FiniteGraph::cycle(4);
        let omega = BondConfig::full(4);
        let b = forest_basis(&g, &omega);
        let mut seen = std::collections::BTreeSet::new();
        for c in 0..3 {
            seen.insert(b.kernel_element(3, &[c]).values().to_vec());
        }
        assert_eq!(seen.len(), 3);
    }

    /// Connected test graphs with at most `max_edges` edges.
    fn small_graphs(max_edges: usize) -> Vec<FiniteGraph> {
        let mut out = Vec::new();
        for n in 2..=max_edges + 1 {
            out.push(FiniteGraph::path(n));
        }
        for n in 3..=max_edges {
            out.push(FiniteGraph::cycle(n));
        }
        for k in 2..=8 {
            let g = FiniteGraph::grid(2, k);
            if g.edge_count() <= max_edges {
                out.push(g);
            }
        }
        if max_edges >= 6 {
            out.push(FiniteGraph::complete(4));
        }
        out
    }

    #[test]
    fn kernel_cardinality_formula() {
        for g in small_graphs(8) {
            let m = g.edge_count();
            for w in 0..(1u64 << m) {
                let omega = BondConfig::from_index(m, w);
                let b = forest_basis(&g, &omega);
                let kappa = cluster_count(&g, &omega, &BoundaryCondition::Free).unwrap();
                let dim = omega.count_open() + kappa - g.vertex_count();
                for q in [2u32, 3] {
                    let mut distinct = std::collections::HashSet::new();
                    let total = (q as u64).pow(b.dimension() as u32);
                    for idx in 0..total {
                        let coeffs: Vec<u32> =
                            (0..b.dimension()).map(|k| ((idx / (q as u64).pow(k as u32)) % q as u64) as u32).collect();
                        distinct.insert(b.kernel_element(q, &coeffs).values().to_vec());
                    }
                    assert_eq!(distinct.len() as u64, (q as u64).pow(dim as u32));
                }
            }
        }
    }

    #[test]
    fn ug_support_and_sources() {
        let g = FiniteGraph::grid(3, 4);
        let m = g.edge_count();
        let mut rng = StreamRng::new(6, 0);
        for trial in 0..200 {
            let omega = BondConfig::from_index(m, rng.below(1 << m));
            for q in [2u32, 3, 4] {
                let labels: Vec<u32> = (0..g.vertex_count()).map(|_| rng.below(q as u64) as u32).collect();
                let mut a = SourceSpec::new(q, labels).unwrap();
                // fix the total to zero on vertex 0
                let t = a.total();
                let mut l = a.labels().to_vec();
                l[0] = (l[0] + q - t) % q;
                a = SourceSpec::new(q, l).unwrap();
                match sample_ug(&g, &omega, &a, &mut rng) {
                    Ok(eta) => {
                        assert!(eta.trace().is_subset(&omega));
                        assert_eq!(config::sources(&g, &eta), a);
                        assert!(config::event_f_a(&g, &omega, &a).unwrap());
                    }
                    Err(Error::InfeasibleSources(_)) => {
                        assert!(!config::event_f_a(&g, &omega, &a).unwrap(), "trial {trial}")
                    }
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn decoupling_across_open_separator() {
        // 2x5 strip, every edge open; vertical edge of column 2 separates
        let g = FiniteGraph::grid(2, 5);
        let omega = BondConfig::full(g.edge_count());
        let at = |r: usize, c: usize| r * 5 + c;
        let sep = g.edge_between(at(0, 2), at(1, 2)).unwrap();
        let left: Vec<usize> = (0..g.edge_count())
            .filter(|&e| {
                let (u, v) = g.edge(e);
                e != sep && u % 5 <= 2 && v % 5 <= 2
            })
            .collect();
        let law = |set: &[usize]| {
            let a = SourceSpec::from_set(g.vertex_count(), set);
            let d = oracle::enumerate(&MeasureSpec::uniform_flow(&g, a, omega.clone())).unwrap();
            oracle::marginal(&d, &left).unwrap()
        };
        let l1 = law(&[at(0, 0), at(0, 4)]);
        let l2 = law(&[at(0, 0), at(1, 3)]);
        let l3 = law(&[at(0, 0), at(0, 3), at(1, 3), at(1, 4)]);
        assert!(oracle::max_abs_diff(&l1, &l2).unwrap() < 1e-12);
        assert!(oracle::max_abs_diff(&l1, &l3).unwrap() < 1e-12);
    }

    #[test]
    fn ug_delta_on_path() {
        let g = FiniteGraph::path(3);
        let a = SourceSpec::from_set(3, &[1]);
        let mut rng = StreamRng::new(7, 0);
        let mut counts = [0u64; 4];
        for _ in 0..20_000 {
            counts[sample_ug_delta(&g, &BondConfig::full(2), &a, &mut rng).unwrap().index() as usize] += 1;
        }
        assert_eq!(counts[0] + counts[3], 0);
        assert!(stats::chi_square_pvalue(&counts, &[0.0, 0.5, 0.5, 0.0]) > 1e-4);
        // isolated source cluster away from the boundary
        let g5 = FiniteGraph::path(5);
        let a = SourceSpec::from_set(5, &[2]);
        assert!(sample_ug_delta(&g5, &bits("0000"), &a, &mut rng).is_err());
        assert!(sample_ug_delta(&g5, &bits("1000"), &SourceSpec::from_set(5, &[0]), &mut rng).is_err());
    }

    #[test]
    fn ug_delta_law_restricts_to_ug() {
        // wired uniform law conditioned on no boundary sources equals UG^A on G
        for g in [FiniteGraph::grid(3, 3), FiniteGraph::grid(3, 4)] {
            let m = g.edge_count();
            let interior: Vec<usize> = (0..g.vertex_count()).filter(|&v| !g.is_boundary(v)).collect();
            let wired = g.wire().unwrap();
            let omega = BondConfig::full(m);
            for set in [vec![], interior.clone()] {
                let a = SourceSpec::from_set(g.vertex_count(), &set);
                let aw = config::wired_sources(&wired, &a).unwrap();
                let wl = oracle::enumerate(&MeasureSpec::uniform_flow(&wired, aw, omega.clone())).unwrap();
                let post = wl.prob_of(|eta| {
                    let b = config::bond_sources(&g, eta);
                    (0..g.vertex_count()).all(|v| g.is_boundary(v) || b.label(v) == a.label(v))
                });
                assert!((post - 1.0).abs() < 1e-12);
                if a.is_valid() {
                    let cond = oracle::condition_bonds(&wl, |eta| config::bond_sources(&g, eta) == a).unwrap();
                    let ug = oracle::enumerate(&MeasureSpec::uniform_flow(&g, a.clone(), omega.clone())).unwrap();
                    assert!(oracle::max_abs_diff(&cond, &ug).unwrap() < 1e-12);
                }
            }
        }
    }
}
