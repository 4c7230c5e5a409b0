//! Exact enumeration of every model on small graphs.
//!
//! Tables are indexed by configuration: bit `e` of a bond index is edge `e`;
//! flow indices are base `q` with edge 0 least significant; current indices
//! are base 3 over the per-edge classes `0 = {n_e = 0}`, `1 = {n_e odd}`,
//! `2 = {n_e even, >= 2}`.

mod domination;
pub mod identities;

use rayon::prelude::*;

use crate::config::{self, BondConfig, BoundaryCondition, FlowConfig, SourceSpec};
use crate::error::{check_open_unit, Error, Result};
use crate::graph::FiniteGraph;

pub use domination::{max_flow_domination, stochastically_dominates, strongly_dominates, PLAIN_EDGE_LIMIT, STRONG_EDGE_LIMIT};

/// Largest bond space the oracle enumerates.
pub const MAX_BOND_EDGES: usize = 20;
/// Largest flow / current table size.
pub const MAX_TABLE: u64 = 1 << 24;

/// Index space of an exact table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateSpace {
    Bond { edges: usize },
    Flow { edges: usize, q: u32 },
    CurrentClass { edges: usize },
}

impl StateSpace {
    /// Flow spaces with `q = 2` coincide with bond spaces.
    pub fn flow(edges: usize, q: u32) -> Self {
        if q == 2 {
            StateSpace::Bond { edges }
        } else {
            StateSpace::Flow { edges, q }
        }
    }

    pub fn edges(&self) -> usize {
        match *self {
            StateSpace::Bond { edges } | StateSpace::Flow { edges, .. } | StateSpace::CurrentClass { edges } => edges,
        }
    }

    pub fn radix(&self) -> u64 {
        match *self {
            StateSpace::Bond { .. } => 2,
            StateSpace::Flow { q, .. } => q as u64,
            StateSpace::CurrentClass { .. } => 3,
        }
    }

    pub fn size(&self) -> Option<u64> {
        self.radix().checked_pow(self.edges() as u32)
    }

    /// Bond view of a state: the configuration itself, the trace of a flow,
    /// or the trace of a current class.
    pub fn trace_of(&self, index: u64) -> BondConfig {
        match *self {
            StateSpace::Bond { edges } => BondConfig::from_index(edges, index),
            _ => {
                let r = self.radix();
                let mut c = BondConfig::empty(self.edges());
                let mut i = index;
                for e in 0..self.edges() {
                    if !i.is_multiple_of(r) {
                        c.set(e, true);
                    }
                    i /= r;
                }
                c
            }
        }
    }
}

/// Model families with exact weights.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// Product measure with `P[e open] = p`.
    Bernoulli { p: f64 },
    /// Random-cluster weights `(p/(1-p))^{|ω|} q^{κ^ξ(ω)}`.
    Fk { p: f64, q: f64, boundary: BoundaryCondition },
    /// Loop O(1): `x^{|η|} 1[∂η = A]` (`q = 2` sources).
    Loop { x: f64, sources: SourceSpec },
    /// `Z/qZ` flows: `x^{|η̂|} 1[∂η = A]`.
    QFlow { x: f64, sources: SourceSpec },
    /// Single random current over (odd part, trace) classes:
    /// `1[∂n^odd = A] sinh(β)^{|n^odd|} (cosh(β) - 1)^{|n̂ ∖ n^odd|}`.
    Current { beta: f64, sources: SourceSpec },
    /// Uniform flow with sources `A` supported inside `within`
    /// (`UG^A_ω` for `q = 2`, the uniform coset element in general).
    UniformFlow { sources: SourceSpec, within: BondConfig },
}

/// Events usable as a conditioning in [`MeasureSpec`], evaluated on the bond
/// view (trace) of a state.
#[derive(Clone, Debug, PartialEq)]
pub enum Conditioning {
    /// `F_A` under the family's boundary condition (free if none).
    FA(SourceSpec),
    EdgeOpen(usize),
    /// The edges of `mask` agree with `values`.
    Pattern { mask: BondConfig, values: BondConfig },
}

/// A measure on a small graph, possibly restricted and conditioned.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSpec {
    pub family: Family,
    pub graph: FiniteGraph,
    /// Edges allowed to be open; every other edge is deterministically closed.
    pub support: Option<BondConfig>,
    pub conditioning: Option<Conditioning>,
}

impl MeasureSpec {
    pub fn new(graph: &FiniteGraph, family: Family) -> Self {
        MeasureSpec {
            family,
            graph: graph.clone(),
            support: None,
            conditioning: None,
        }
    }

    pub fn bernoulli(graph: &FiniteGraph, p: f64) -> Self {
        Self::new(graph, Family::Bernoulli { p })
    }

    pub fn fk(graph: &FiniteGraph, p: f64, q: f64, boundary: BoundaryCondition) -> Self {
        Self::new(graph, Family::Fk { p, q, boundary })
    }

    pub fn loop_o1(graph: &FiniteGraph, x: f64, sources: SourceSpec) -> Self {
        Self::new(graph, Family::Loop { x, sources })
    }

    pub fn qflow(graph: &FiniteGraph, x: f64, sources: SourceSpec) -> Self {
        Self::new(graph, Family::QFlow { x, sources })
    }

    pub fn current(graph: &FiniteGraph, beta: f64, sources: SourceSpec) -> Self {
        Self::new(graph, Family::Current { beta, sources })
    }

    pub fn uniform_flow(graph: &FiniteGraph, sources: SourceSpec, within: BondConfig) -> Self {
        Self::new(graph, Family::UniformFlow { sources, within })
    }

    pub fn conditioned(mut self, event: Conditioning) -> Self {
        self.conditioning = Some(event);
        self
    }

    pub fn restricted(mut self, support: BondConfig) -> Self {
        self.support = Some(support);
        self
    }

    pub fn space(&self) -> StateSpace {
        let edges = self.graph.edge_count();
        match &self.family {
            Family::Bernoulli { .. } | Family::Fk { .. } | Family::Loop { .. } => StateSpace::Bond { edges },
            Family::QFlow { sources, .. } | Family::UniformFlow { sources, .. } => StateSpace::flow(edges, sources.q()),
            Family::Current { .. } => StateSpace::CurrentClass { edges },
        }
    }

    fn boundary(&self) -> BoundaryCondition {
        match &self.family {
            Family::Fk { boundary, .. } => boundary.clone(),
            _ => BoundaryCondition::Free,
        }
    }

    /// Parameter and source validation.
    pub fn validate(&self) -> Result<()> {
        let nv = self.graph.vertex_count();
        let check_sources = |a: &SourceSpec, want_q: Option<u32>| -> Result<()> {
            if a.vertex_count() != nv {
                return Err(Error::Mismatch("sources and graph differ in vertex count".into()));
            }
            if let Some(q) = want_q {
                if a.q() != q {
                    return Err(Error::param("q", format!("expected modulus {q}, got {}", a.q())));
                }
            }
            Ok(())
        };
        match &self.family {
            Family::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::param("p", format!("{p} is outside [0, 1]")));
                }
            }
            Family::Fk { p, q, boundary } => {
                check_open_unit("p", *p)?;
                if q.is_nan() || *q <= 0.0 {
                    return Err(Error::param("q", format!("{q} must be positive")));
                }
                boundary.classes(&self.graph)?;
            }
            Family::Loop { x, sources } => {
                check_open_unit("x", *x)?;
                check_sources(sources, Some(2))?;
            }
            Family::QFlow { x, sources } => {
                check_open_unit("x", *x)?;
                check_sources(sources, None)?;
            }
            Family::Current { beta, sources } => {
                if !(*beta > 0.0 && beta.is_finite()) {
                    return Err(Error::param("beta", format!("{beta} must be positive")));
                }
                check_sources(sources, Some(2))?;
            }
            Family::UniformFlow { sources, within } => {
                check_sources(sources, None)?;
                if within.len() != self.graph.edge_count() {
                    return Err(Error::Mismatch("`within` length differs from edge count".into()));
                }
            }
        }
        if let Some(s) = &self.support {
            if s.len() != self.graph.edge_count() {
                return Err(Error::Mismatch("support length differs from edge count".into()));
            }
        }
        if let Some(Conditioning::FA(a)) = &self.conditioning {
            check_sources(a, None)?;
            if !a.is_valid() {
                return Err(Error::pre("conditioning sources do not sum to zero"));
            }
        }
        Ok(())
    }
}

/// Exact normalized table.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDistribution {
    pub space: StateSpace,
    pub probs: Vec<f64>,
    /// `ln Z` of the unnormalized weights.
    pub log_normalizer: f64,
}

impl ExactDistribution {
    /// Builds a table from log weights (`-inf` for zero weight).
    pub fn from_log_weights(space: StateSpace, logw: Vec<f64>, what: &str) -> Result<Self> {
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::EmptySupport(what.to_string()));
        }
        let scaled: Vec<f64> = logw.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = scaled.iter().sum();
        Ok(ExactDistribution {
            space,
            probs: scaled.iter().map(|&w| w / sum).collect(),
            log_normalizer: max + sum.ln(),
        })
    }

    /// Builds a table from nonnegative weights.
    pub fn from_weights(space: StateSpace, w: Vec<f64>, what: &str) -> Result<Self> {
        Self::from_log_weights(space, w.into_iter().map(f64::ln).collect(), what)
    }

    /// Point mass on `index`.
    pub fn point(space: StateSpace, index: u64) -> Self {
        let mut probs = vec![0.0; space.size().expect("small space") as usize];
        probs[index as usize] = 1.0;
        ExactDistribution {
            space,
            probs,
            log_normalizer: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, index: u64) -> f64 {
        self.probs[index as usize]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability that the bond view satisfies `event`.
    pub fn prob_of(&self, mut event: impl FnMut(&BondConfig) -> bool) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p > 0.0)
            .filter(|&(i, _)| event(&self.space.trace_of(i as u64)))
            .map(|(_, &p)| p)
            .sum()
    }

    /// `P[e open]` of the bond view.
    pub fn edge_marginal(&self, e: usize) -> f64 {
        self.prob_of(|c| c.get(e))
    }

    /// Debug export: header comment, then `index,probability` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# {:?}; index digits are little-endian: edge 0 is the least significant digit\nindex,probability\n",
            self.space
        );
        for (i, p) in self.probs.iter().enumerate() {
            out.push_str(&format!("{i},{p:.17e}\n"));
        }
        out
    }
}

fn check_capacity(space: StateSpace) -> Result<u64> {
    match space {
        StateSpace::Bond { edges } if edges > MAX_BOND_EDGES => Err(Error::Capacity {
            what: "bond enumeration edges",
            size: edges as u128,
            limit: MAX_BOND_EDGES as u128,
        }),
        _ => match space.size() {
            Some(n) if n <= MAX_TABLE => Ok(n),
            other => Err(Error::Capacity {
                what: "enumeration table size",
                size: other.map_or(u128::MAX, |n| n as u128),
                limit: MAX_TABLE as u128,
            }),
        },
    }
}

/// Exact normalized table of `spec`.
pub fn enumerate(spec: &MeasureSpec) -> Result<ExactDistribution> {
    spec.validate()?;
    let space = spec.space();
    let size = check_capacity(space)?;
    let g = &spec.graph;
    let m = g.edge_count();
    let bc = spec.boundary();
    let exterior = bc.classes(g)?;

    let log_weight = |index: u64| -> f64 {
        let bonds = space.trace_of(index);
        if let Some(s) = &spec.support {
            if !bonds.is_subset(s) {
                return f64::NEG_INFINITY;
            }
        }
        if let Some(cond) = &spec.conditioning {
            let holds = match cond {
                Conditioning::FA(a) => config::event_f_a_with(g, &bonds, a, &bc).expect("validated"),
                Conditioning::EdgeOpen(e) => bonds.get(*e),
                Conditioning::Pattern { mask, values } => {
                    mask.open_edges().all(|e| bonds.get(e) == values.get(e))
                }
            };
            if !holds {
                return f64::NEG_INFINITY;
            }
        }
        match &spec.family {
            Family::Bernoulli { p } => {
                let open = bonds.count_open() as f64;
                open * p.ln() + (m as f64 - open) * (1.0 - p).ln()
            }
            Family::Fk { p, q, .. } => {
                let mut uf = crate::unionfind::UnionFind::new(g.vertex_count());
                for class in &exterior {
                    for w in class.windows(2) {
                        uf.union(w[0], w[1]);
                    }
                }
                for e in bonds.open_edges() {
                    let (u, v) = g.edge(e);
                    uf.union(u, v);
                }
                bonds.count_open() as f64 * (p / (1.0 - p)).ln() + uf.classes() as f64 * q.ln()
            }
            Family::Loop { x, sources } => {
                if config::bond_sources(g, &bonds) == *sources {
                    bonds.count_open() as f64 * x.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::QFlow { x, sources } => {
                let eta = FlowConfig::from_index(sources.q(), m, index);
                if config::sources(g, &eta) == *sources {
                    bonds.count_open() as f64 * x.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::UniformFlow { sources, within } => {
                let eta = FlowConfig::from_index(sources.q(), m, index);
                if bonds.is_subset(within) && config::sources(g, &eta) == *sources {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::Current { beta, sources } => {
                let (odd, even) = current_class_parts(m, index);
                if config::bond_sources(g, &odd) != *sources {
                    return f64::NEG_INFINITY;
                }
                odd.count_open() as f64 * beta.sinh().ln()
                    + even.count_open() as f64 * (beta.cosh() - 1.0).ln()
            }
        }
    };

    let logw: Vec<f64> = (0..size).into_par_iter().map(log_weight).collect();
    ExactDistribution::from_log_weights(space, logw, &empty_reason(spec))
}

fn empty_reason(spec: &MeasureSpec) -> String {
    let odd_sources = match &spec.family {
        Family::Loop { sources, .. }
        | Family::QFlow { sources, .. }
        | Family::Current { sources, .. }
        | Family::UniformFlow { sources, .. } => !sources.is_valid(),
        _ => false,
    };
    if odd_sources {
        "source labels do not sum to zero (|A| odd), so no configuration has these sources".into()
    } else {
        "no configuration satisfies the constraints".into()
    }
}

/// Splits a current-class index into (odd part, even-positive part).
pub fn current_class_parts(edges: usize, mut index: u64) -> (BondConfig, BondConfig) {
    let mut odd = BondConfig::empty(edges);
    let mut even = BondConfig::empty(edges);
    for e in 0..edges {
        match index % 3 {
            1 => odd.set(e, true),
            2 => even.set(e, true),
            _ => {}
        }
        index /= 3;
    }
    (odd, even)
}

/// Restriction to `event` (a predicate on the state index), renormalized.
pub fn condition(dist: &ExactDistribution, mut event: impl FnMut(u64) -> bool) -> Result<ExactDistribution> {
    let mut probs: Vec<f64> = dist
        .probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if event(i as u64) { p } else { 0.0 })
        .collect();
    let mass: f64 = probs.iter().sum();
    if mass.is_nan() || mass <= 0.0 {
        return Err(Error::EmptySupport("conditioning event has zero mass".into()));
    }
    for p in probs.iter_mut() {
        *p /= mass;
    }
    Ok(ExactDistribution {
        space: dist.space,
        probs,
        log_normalizer: dist.log_normalizer + mass.ln(),
    })
}

/// Conditioning on an event of the bond view.
pub fn condition_bonds(dist: &ExactDistribution, mut event: impl FnMut(&BondConfig) -> bool) -> Result<ExactDistribution> {
    let space = dist.space;
    condition(dist, |i| event(&space.trace_of(i)))
}

/// `½ Σ |p - q|`.
pub fn tv_distance(a: &ExactDistribution, b: &ExactDistribution) -> Result<f64> {
    if a.space != b.space || a.len() != b.len() {
        return Err(Error::Mismatch(format!("{:?} vs {:?}", a.space, b.space)));
    }
    Ok(0.5 * a.probs.iter().zip(&b.probs).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Largest entrywise difference.
pub fn max_abs_diff(a: &ExactDistribution, b: &ExactDistribution) -> Result<f64> {
    if a.space != b.space || a.len() != b.len() {
        return Err(Error::Mismatch(format!("{:?} vs {:?}", a.space, b.space)));
    }
    Ok(a.probs.iter().zip(&b.probs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Law of `f(state)` for a map into another space.
pub fn pushforward(dist: &ExactDistribution, target: StateSpace, f: impl Fn(u64) -> u64) -> Result<ExactDistribution> {
    let size = check_capacity(target)? as usize;
    let mut probs = vec![0.0; size];
    for (i, &p) in dist.probs.iter().enumerate() {
        if p > 0.0 {
            probs[f(i as u64) as usize] += p;
        }
    }
    Ok(ExactDistribution {
        space: target,
        probs,
        log_normalizer: 0.0,
    })
}

/// Marginal on the listed edges (in the listed order).
pub fn marginal(dist: &ExactDistribution, edges: &[usize]) -> Result<ExactDistribution> {
    let m = dist.space.edges();
    if edges.iter().any(|&e| e >= m) {
        return Err(Error::Mismatch("marginal edge outside the space".into()));
    }
    let r = dist.space.radix();
    let target = match dist.space {
        StateSpace::Bond { .. } => StateSpace::Bond { edges: edges.len() },
        StateSpace::Flow { q, .. } => StateSpace::Flow { edges: edges.len(), q },
        StateSpace::CurrentClass { .. } => StateSpace::CurrentClass { edges: edges.len() },
    };
    let pow: Vec<u64> = (0..m).map(|e| r.pow(e as u32)).collect();
    pushforward(dist, target, |i| {
        edges
            .iter()
            .rev()
            .fold(0u64, |acc, &e| acc * r + (i / pow[e]) % r)
    })
}

/// Trace (bond view) of a flow or current-class table.
pub fn trace_law(dist: &ExactDistribution) -> Result<ExactDistribution> {
    let edges = dist.space.edges();
    let space = dist.space;
    pushforward(dist, StateSpace::Bond { edges }, |i| space.trace_of(i).index())
}

/// Law of the odd part of a current-class table.
pub fn odd_part_law(dist: &ExactDistribution) -> Result<ExactDistribution> {
    let StateSpace::CurrentClass { edges } = dist.space else {
        return Err(Error::Mismatch("odd part needs a current table".into()));
    };
    pushforward(dist, StateSpace::Bond { edges }, |i| current_class_parts(edges, i).0.index())
}

/// `μ ∪ ν`: law of the union of independent samples (bond spaces).
pub fn union_law(a: &ExactDistribution, b: &ExactDistribution) -> Result<ExactDistribution> {
    let (StateSpace::Bond { edges }, StateSpace::Bond { edges: eb }) = (a.space, b.space) else {
        return Err(Error::Mismatch("union needs bond tables".into()));
    };
    if edges != eb {
        return Err(Error::Mismatch("union of tables over different edge sets".into()));
    }
    let nz_b: Vec<(usize, f64)> = b.probs.iter().copied().enumerate().filter(|&(_, p)| p > 0.0).collect();
    let mut probs = vec![0.0; a.len()];
    for (i, &pa) in a.probs.iter().enumerate() {
        if pa > 0.0 {
            for &(j, pb) in &nz_b {
                probs[i | j] += pa * pb;
            }
        }
    }
    Ok(ExactDistribution {
        space: a.space,
        probs,
        log_normalizer: 0.0,
    })
}

/// `μ ∪ P_r`: sprinkling with independent Bernoulli(`r`) edges, computed by
/// enumerating the supersets of each configuration.
pub fn sprinkle_law(a: &ExactDistribution, r: f64) -> Result<ExactDistribution> {
    let StateSpace::Bond { edges } = a.space else {
        return Err(Error::Mismatch("sprinkling needs a bond table".into()));
    };
    let full: u64 = if edges == 64 { !0 } else { (1u64 << edges) - 1 };
    let mut probs = vec![0.0; a.len()];
    for (i, &p) in a.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let rest = full & !(i as u64);
        let free = rest.count_ones() as i32;
        // iterate submasks of the closed edges: each becomes open w.p. r
        let mut sub = rest;
        loop {
            let k = sub.count_ones() as i32;
            probs[(i as u64 | sub) as usize] += p * r.powi(k) * (1.0 - r).powi(free - k);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    Ok(ExactDistribution {
        space: a.space,
        probs,
        log_normalizer: 0.0,
    })
}

/// Smallest `n` with `P[Poisson(β) > n] < 1e-14`.
pub fn current_truncation(beta: f64) -> usize {
    let mut term = (-beta).exp();
    let mut cdf = term;
    let mut n = 0;
    while 1.0 - cdf >= 1e-14 && n < 10_000 {
        n += 1;
        term *= beta / n as f64;
        cdf += term;
    }
    n
}

/// Integer currents `n ∈ {0..=n_max}^E` with weights `Π β^{n_e}/n_e!` and
/// `∂n = A`, pushed onto the class space.
pub fn enumerate_current_truncated(g: &FiniteGraph, beta: f64, sources: &SourceSpec, n_max: usize) -> Result<ExactDistribution> {
    let m = g.edge_count();
    let radix = n_max as u64 + 1;
    let size = radix.checked_pow(m as u32).filter(|&n| n <= MAX_TABLE).ok_or(Error::Capacity {
        what: "truncated current table size",
        size: (radix as u128).saturating_pow(m as u32),
        limit: MAX_TABLE as u128,
    })?;
    let log_fact: Vec<f64> = (0..=n_max)
        .scan(0.0, |acc, k| {
            if k > 0 {
                *acc += (k as f64).ln();
            }
            Some(*acc)
        })
        .collect();
    let space = StateSpace::CurrentClass { edges: m };
    let mut weights = vec![0.0; space.size().expect("small") as usize];
    for index in 0..size {
        let mut i = index;
        let mut odd = BondConfig::empty(m);
        let mut class = 0u64;
        let mut pow3 = 1u64;
        let mut logw = 0.0;
        for e in 0..m {
            let n = (i % radix) as usize;
            i /= radix;
            if n % 2 == 1 {
                odd.set(e, true);
            }
            class += pow3 * if n == 0 { 0 } else if n % 2 == 1 { 1 } else { 2 };
            pow3 *= 3;
            logw += n as f64 * beta.ln() - log_fact[n];
        }
        if config::bond_sources(g, &odd) == *sources {
            weights[class as usize] += logw.exp();
        }
    }
    ExactDistribution::from_weights(space, weights, "no truncated current has these sources")
}
