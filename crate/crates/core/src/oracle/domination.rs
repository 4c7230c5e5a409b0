//! Stochastic domination on `{0,1}^E` via monotone-coupling feasibility.
//!
//! The coupling exists iff the network `S → s (lo[s])`, `s → s ∪ {e} (∞)`,
//! `t → T (hi[t])` carries all of the mass.

use super::{ExactDistribution, StateSpace};
use crate::error::{Error, Result};

/// Edge limit for plain domination.
pub const PLAIN_EDGE_LIMIT: usize = 12;
/// Edge limit for strong domination.
pub const STRONG_EDGE_LIMIT: usize = 8;

const FLOW_TOL: f64 = 1e-9;
const RESIDUAL_EPS: f64 = 1e-15;

struct Dinic {
    head: Vec<usize>,
    next: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

const NIL: usize = usize::MAX;

impl Dinic {
    fn new(n: usize) -> Self {
        Dinic {
            head: vec![NIL; n],
            next: Vec::new(),
            to: Vec::new(),
            cap: Vec::new(),
            level: vec![0; n],
            iter: vec![0; n],
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: f64) {
        for (a, b, cap) in [(u, v, c), (v, u, 0.0)] {
            self.to.push(b);
            self.cap.push(cap);
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() - 1;
        }
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.fill(-1);
        self.level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            let mut a = self.head[u];
            while a != NIL {
                let v = self.to[a];
                if self.cap[a] > RESIDUAL_EPS && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
                a = self.next[a];
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, f: f64) -> f64 {
        if u == t {
            return f;
        }
        while self.iter[u] != NIL {
            let a = self.iter[u];
            let v = self.to[a];
            if self.cap[a] > RESIDUAL_EPS && self.level[v] == self.level[u] + 1 {
                let d = self.dfs(v, t, f.min(self.cap[a]));
                if d > 0.0 {
                    self.cap[a] -= d;
                    self.cap[a ^ 1] += d;
                    return d;
                }
            }
            self.iter[u] = self.next[a];
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(s, t) {
            self.iter.clone_from(&self.head);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= 0.0 {
                    break;
                }
                flow += f;
            }
        }
        flow
    }
}

/// Decides `lo ⪯ hi` for two mass vectors on `{0,1}^m` (bit `e` = edge `e`).
/// Masses need not be normalized but must have equal totals.
pub fn max_flow_domination(hi: &[f64], lo: &[f64], m: usize) -> bool {
    let n = 1usize << m;
    assert_eq!(hi.len(), n);
    assert_eq!(lo.len(), n);
    let total: f64 = lo.iter().sum();
    let (s, t) = (n, n + 1);
    let mut net = Dinic::new(n + 2);
    for state in 0..n {
        if lo[state] > 0.0 {
            net.add_edge(s, state, lo[state]);
        }
        if hi[state] > 0.0 {
            net.add_edge(state, t, hi[state]);
        }
        for e in 0..m {
            if state & (1 << e) == 0 {
                net.add_edge(state, state | (1 << e), f64::INFINITY);
            }
        }
    }
    net.max_flow(s, t) >= total - FLOW_TOL
}

fn bond_edges(d: &ExactDistribution, limit: usize) -> Result<usize> {
    let StateSpace::Bond { edges } = d.space else {
        return Err(Error::Mismatch("domination needs bond tables".into()));
    };
    if edges > limit {
        return Err(Error::Capacity {
            what: "domination edges",
            size: edges as u128,
            limit: limit as u128,
        });
    }
    Ok(edges)
}

fn same_space(hi: &ExactDistribution, lo: &ExactDistribution, limit: usize) -> Result<usize> {
    let m = bond_edges(hi, limit)?;
    if bond_edges(lo, limit)? != m {
        return Err(Error::Mismatch("domination tables over different edge sets".into()));
    }
    Ok(m)
}

/// `d_lo ⪯ d_hi`.
pub fn stochastically_dominates(d_hi: &ExactDistribution, d_lo: &ExactDistribution) -> Result<bool> {
    let m = same_space(d_hi, d_lo, PLAIN_EDGE_LIMIT)?;
    Ok(max_flow_domination(&d_hi.probs, &d_lo.probs, m))
}

/// Collapses `probs` onto the edges outside `mask`, keeping only states whose
/// restriction to `mask` equals `xi`.
fn restricted(probs: &[f64], m: usize, mask: usize, xi: usize) -> Vec<f64> {
    let free: Vec<usize> = (0..m).filter(|&e| mask & (1 << e) == 0).collect();
    let mut out = vec![0.0; 1 << free.len()];
    for (state, &p) in probs.iter().enumerate() {
        if p == 0.0 || state & mask != xi {
            continue;
        }
        let mut j = 0;
        for (k, &e) in free.iter().enumerate() {
            if state & (1 << e) != 0 {
                j |= 1 << k;
            }
        }
        out[j] += p;
    }
    out
}

/// Strong domination: for every `E'` and every `ξ ⪯ ξ'` on `E'` with positive
/// mass, `d_lo(· | ξ) ⪯ d_hi(· | ξ')`.
pub fn strongly_dominates(d_hi: &ExactDistribution, d_lo: &ExactDistribution) -> Result<bool> {
    let m = same_space(d_hi, d_lo, STRONG_EDGE_LIMIT)?;
    let full = (1usize << m) - 1;
    for mask in 0..=full {
        let k = m - mask.count_ones() as usize;
        // conditional tables for every pattern on the mask
        let mut patterns = Vec::new();
        let mut xi = mask;
        loop {
            patterns.push(xi);
            if xi == 0 {
                break;
            }
            xi = (xi - 1) & mask;
        }
        let cond = |probs: &[f64], xi: usize| -> Option<Vec<f64>> {
            let mut r = restricted(probs, m, mask, xi);
            let z: f64 = r.iter().sum();
            if z > 0.0 {
                r.iter_mut().for_each(|p| *p /= z);
                Some(r)
            } else {
                None
            }
        };
        let hi_c: Vec<(usize, Option<Vec<f64>>)> = patterns.iter().map(|&x| (x, cond(&d_hi.probs, x))).collect();
        let lo_c: Vec<(usize, Option<Vec<f64>>)> = patterns.iter().map(|&x| (x, cond(&d_lo.probs, x))).collect();
        for (xl, lo) in &lo_c {
            let Some(lo) = lo else { continue };
            for (xh, hi) in &hi_c {
                if xl & !xh != 0 {
                    continue;
                }
                let Some(hi) = hi else { continue };
                if !max_flow_domination(hi, lo, k) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use crate::config::{BoundaryCondition, SourceSpec};
    use crate::graph::FiniteGraph;

    /// Independent check: `lo ⪯ hi` iff `lo(U) ≤ hi(U)` for every up-set `U`.
    fn upset_dominates(hi: &[f64], lo: &[f64], m: usize) -> bool {
        let n = 1usize << m;
        assert!(n <= 16);
        for set in 0u32..(1u32 << n) {
            let is_up = (0..n).all(|s| {
                set & (1 << s) == 0 || (0..m).all(|e| set & (1 << (s | (1 << e))) != 0)
            });
            if !is_up {
                continue;
            }
            let mass = |d: &[f64]| (0..n).filter(|&s| set & (1 << s) != 0).map(|s| d[s]).sum::<f64>();
            if mass(lo) > mass(hi) + 1e-12 {
                return false;
            }
        }
        true
    }

    #[test]
    fn bernoulli_products() {
        let g = FiniteGraph::path(3);
        let hi = enumerate(&MeasureSpec::bernoulli(&g, 0.7)).unwrap();
        let lo = enumerate(&MeasureSpec::bernoulli(&g, 0.3)).unwrap();
        assert!(stochastically_dominates(&hi, &lo).unwrap());
        assert!(!stochastically_dominates(&lo, &hi).unwrap());
        assert!(strongly_dominates(&hi, &lo).unwrap());
    }

    #[test]
    fn wired_dominates_free_on_square() {
        let g = FiniteGraph::cycle(4);
        for &p in &[0.3, 0.6, 0.9] {
            let w = enumerate(&MeasureSpec::fk(&g, p, 2.0, BoundaryCondition::Wired)).unwrap();
            let f = enumerate(&MeasureSpec::fk(&g, p, 2.0, BoundaryCondition::Free)).unwrap();
            assert!(stochastically_dominates(&w, &f).unwrap());
            assert!(!stochastically_dominates(&f, &w).unwrap());
        }
    }

    #[test]
    fn conditioned_on_sources_strongly_dominates() {
        let g = FiniteGraph::cycle(4);
        let a = SourceSpec::from_set(4, &[0, 2]);
        let base = MeasureSpec::fk(&g, 0.5, 2.0, BoundaryCondition::Free);
        let f = enumerate(&base).unwrap();
        let fa = enumerate(&base.clone().conditioned(Conditioning::FA(a))).unwrap();
        assert!(strongly_dominates(&fa, &f).unwrap());
    }

    #[test]
    fn fkg_increasing_event() {
        let g = FiniteGraph::cycle(4);
        let base = MeasureSpec::fk(&g, 0.4, 2.0, BoundaryCondition::Free);
        let f = enumerate(&base).unwrap();
        let up = enumerate(&base.clone().conditioned(Conditioning::EdgeOpen(0))).unwrap();
        assert!(stochastically_dominates(&up, &f).unwrap());
    }

    #[test]
    fn flow_matches_upset_check() {
        let g = FiniteGraph::cycle(4);
        let mut tables = Vec::new();
        for &p in &[0.2, 0.5, 0.8] {
            for bc in [BoundaryCondition::Free, BoundaryCondition::Wired] {
                tables.push(enumerate(&MeasureSpec::fk(&g, p, 2.0, bc)).unwrap());
            }
            tables.push(enumerate(&MeasureSpec::bernoulli(&g, p)).unwrap());
            tables.push(enumerate(&MeasureSpec::fk(&g, p, 0.5, BoundaryCondition::Free)).unwrap());
        }
        tables.push(enumerate(&MeasureSpec::loop_o1(&g, 0.5, SourceSpec::none(2, 4))).unwrap());
        for a in &tables {
            for b in &tables {
                assert_eq!(
                    max_flow_domination(&a.probs, &b.probs, 4),
                    upset_dominates(&a.probs, &b.probs, 4)
                );
            }
        }
    }

    #[test]
    fn strong_fails_when_conditioning_breaks_order() {
        // the loop measure is not monotone: an open edge forces the others
        let g = FiniteGraph::cycle(3);
        let lp = enumerate(&MeasureSpec::loop_o1(&g, 0.5, SourceSpec::none(2, 3))).unwrap();
        let bern = enumerate(&MeasureSpec::bernoulli(&g, 0.01)).unwrap();
        assert!(!strongly_dominates(&bern, &lp).unwrap());
    }

    #[test]
    fn capacity_checked() {
        let d = ExactDistribution::point(StateSpace::Bond { edges: 13 }, 0);
        assert!(matches!(stochastically_dominates(&d, &d), Err(Error::Capacity { .. })));
        let g9 = FiniteGraph::path(10);
        let d9 = enumerate(&MeasureSpec::bernoulli(&g9, 0.5)).unwrap();
        assert!(matches!(strongly_dominates(&d9, &d9), Err(Error::Capacity { .. })));
    }
}
