//! Exploration coupling: edges are revealed in a fixed order and every
//! participant opens `e` iff `U_e < ν[e open | revealed past]`, all with the
//! same uniforms.

use crate::config::BondConfig;
use crate::error::{Error, Result};
use crate::mcmc::{ChainState, Schedule};
use crate::oracle::{self, Family, MeasureSpec, StateSpace};
use crate::rng::StreamRng;

/// Revelation order and participants, all on one edge index space.
#[derive(Clone, Debug)]
pub struct CouplingPlan {
    pub order: Vec<usize>,
    pub participants: Vec<MeasureSpec>,
}

impl CouplingPlan {
    /// Edge-id revelation order.
    pub fn new(participants: Vec<MeasureSpec>) -> Result<Self> {
        let m = participants
            .first()
            .map(|s| s.graph.edge_count())
            .ok_or_else(|| Error::pre("a coupling needs at least one participant"))?;
        Self::with_order((0..m).collect(), participants)
    }

    pub fn with_order(order: Vec<usize>, participants: Vec<MeasureSpec>) -> Result<Self> {
        let m = order.len();
        let mut seen = vec![false; m];
        for &e in &order {
            if e >= m || std::mem::replace(&mut seen[e], true) {
                return Err(Error::pre("revelation order must list every edge exactly once"));
            }
        }
        if participants.iter().any(|s| s.graph.edge_count() != m) {
            return Err(Error::Mismatch("participants must share the edge index space".into()));
        }
        Ok(CouplingPlan { order, participants })
    }
}

/// Prefix masses of one participant: `levels[j][b]` is the probability that
/// the first `j` revealed edges read the bits of `b` (first edge most
/// significant).
#[derive(Clone, Debug)]
struct PrefixTree {
    levels: Vec<Vec<f64>>,
}

impl PrefixTree {
    fn new(probs: &[f64], order: &[usize]) -> Self {
        let m = order.len();
        let mut leaves = vec![0.0; probs.len()];
        for (state, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut r = 0usize;
            for &e in order {
                r = (r << 1) | ((state >> e) & 1);
            }
            leaves[r] = p;
        }
        let mut levels = vec![leaves];
        for _ in 0..m {
            let last = levels.last().expect("non-empty");
            let up: Vec<f64> = last.chunks(2).map(|c| c[0] + c[1]).collect();
            levels.push(up);
        }
        levels.reverse();
        PrefixTree { levels }
    }

    /// `ν[next open | prefix b of length j]`.
    fn open_given(&self, j: usize, b: usize) -> f64 {
        let mass = self.levels[j][b];
        if mass <= 0.0 {
            return 0.0;
        }
        (self.levels[j + 1][2 * b + 1] / mass).min(1.0)
    }
}

/// Exact exploration coupling built from oracle tables.
#[derive(Clone, Debug)]
pub struct Explorer {
    order: Vec<usize>,
    trees: Vec<PrefixTree>,
}

impl Explorer {
    pub fn new(plan: &CouplingPlan) -> Result<Self> {
        let mut trees = Vec::with_capacity(plan.participants.len());
        for spec in &plan.participants {
            let dist = oracle::enumerate(spec)?;
            if !matches!(dist.space, StateSpace::Bond { .. }) {
                return Err(Error::pre("exploration participants must be bond measures"));
            }
            trees.push(PrefixTree::new(&dist.probs, &plan.order));
        }
        Ok(Explorer {
            order: plan.order.clone(),
            trees,
        })
    }

    /// One coupled draw from uniforms `U_e` indexed by edge id.
    pub fn draw_with(&self, uniforms: &[f64]) -> Vec<BondConfig> {
        let m = self.order.len();
        assert_eq!(uniforms.len(), m);
        self.trees
            .iter()
            .map(|tree| {
                let mut omega = BondConfig::empty(m);
                let mut b = 0usize;
                for (j, &e) in self.order.iter().enumerate() {
                    let open = uniforms[e] < tree.open_given(j, b);
                    omega.set(e, open);
                    b = (b << 1) | open as usize;
                }
                omega
            })
            .collect()
    }

    pub fn draw(&self, rng: &mut StreamRng) -> Vec<BondConfig> {
        let uniforms: Vec<f64> = (0..self.order.len()).map(|_| rng.uniform()).collect();
        self.draw_with(&uniforms)
    }
}

/// One coupled draw for `plan`.
pub fn explore(plan: &CouplingPlan, rng: &mut StreamRng) -> Result<Vec<BondConfig>> {
    Ok(Explorer::new(plan)?.draw(rng))
}

/// Output of [`grand_couple`].
#[derive(Clone, Debug, PartialEq)]
pub struct GrandCoupling {
    pub configs: Vec<BondConfig>,
    /// `ordered[i]`: participant `i` stayed below participant `i + 1` at
    /// every sweep.
    pub ordered: Vec<bool>,
}

/// Heat-bath chains for FK specs driven by one scan order and one uniform per
/// edge per sweep, run for `schedule.burn_in` sweeps.
pub fn grand_couple(specs: &[MeasureSpec], schedule: Schedule, mut rng: StreamRng) -> Result<GrandCoupling> {
    let first = specs.first().ok_or_else(|| Error::pre("no participants"))?;
    let m = first.graph.edge_count();
    for s in specs {
        match &s.family {
            Family::Fk { q, .. } if *q >= 1.0 => {}
            _ => return Err(Error::pre("grand coupling needs FK specs with q >= 1")),
        }
        if s.graph.edge_count() != m {
            return Err(Error::Mismatch("participants must share the edge index space".into()));
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut order);
    let mut chains = specs
        .iter()
        .enumerate()
        .map(|(i, s)| ChainState::with_order(s, order.clone(), rng.child(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut ordered = vec![true; specs.len().saturating_sub(1)];
    let mut uniforms = vec![0.0; m];
    for _ in 0..schedule.burn_in {
        for u in uniforms.iter_mut() {
            *u = rng.uniform();
        }
        for c in chains.iter_mut() {
            c.sweep_with(&uniforms);
        }
        for (i, flag) in ordered.iter_mut().enumerate() {
            if *flag {
                *flag = chains[i].config().is_subset(&chains[i + 1].config());
            }
        }
    }
    Ok(GrandCoupling {
        configs: chains.iter().map(|c| c.config()).collect(),
        ordered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BoundaryCondition, SourceSpec};
    use crate::graph::{annulus_edges, build_box, BoxSpec, FiniteGraph};
    use crate::oracle::{enumerate, Conditioning};
    use crate::stats;

    #[test]
    fn single_edge_example() {
        let g = FiniteGraph::path(2);
        let plan = CouplingPlan::new(vec![MeasureSpec::bernoulli(&g, 0.3), MeasureSpec::bernoulli(&g, 0.7)]).unwrap();
        let out = Explorer::new(&plan).unwrap().draw_with(&[0.5]);
        assert!(!out[0].get(0));
        assert!(out[1].get(0));
    }

    #[test]
    fn free_below_conditioned_and_marginals() {
        let g = FiniteGraph::cycle(4);
        let a = SourceSpec::from_set(4, &[0, 2]);
        let free = MeasureSpec::fk(&g, 0.5, 2.0, BoundaryCondition::Free);
        let cond = free.clone().conditioned(Conditioning::FA(a));
        assert!(oracle::strongly_dominates(&enumerate(&cond).unwrap(), &enumerate(&free).unwrap()).unwrap());
        let plan = CouplingPlan::new(vec![free.clone(), cond.clone()]).unwrap();
        let ex = Explorer::new(&plan).unwrap();
        let mut rng = StreamRng::new(1, 0);
        let mut counts = [vec![0u64; 16], vec![0u64; 16]];
        for _ in 0..100_000 {
            let out = ex.draw(&mut rng);
            assert!(out[0].is_subset(&out[1]));
            counts[0][out[0].index() as usize] += 1;
            counts[1][out[1].index() as usize] += 1;
        }
        for (c, s) in counts.iter().zip([&free, &cond]) {
            assert!(stats::empirical_tv(c, &enumerate(s).unwrap().probs) < 0.02);
        }
    }

    #[test]
    fn order_does_not_change_marginals() {
        let g = FiniteGraph::cycle(4);
        let spec = MeasureSpec::fk(&g, 0.6, 2.0, BoundaryCondition::Wired);
        let exact = enumerate(&spec).unwrap();
        for order in [vec![0, 1, 2, 3], vec![3, 1, 0, 2]] {
            let ex = Explorer::new(&CouplingPlan::with_order(order, vec![spec.clone()]).unwrap()).unwrap();
            let mut rng = StreamRng::new(2, 0);
            let mut counts = vec![0u64; 16];
            for _ in 0..100_000 {
                counts[ex.draw(&mut rng)[0].index() as usize] += 1;
            }
            assert!(stats::empirical_tv(&counts, &exact.probs) < 0.02);
        }
    }

    #[test]
    fn nested_boxes_ordered_and_disjoint_boxes_independent() {
        // 2x2 squares inside the 3x3 grid (12 edges)
        let g = FiniteGraph::grid(3, 3);
        let square = |r: usize, c: usize| {
            let v = |a: usize, b: usize| a * 3 + b;
            let es = [
                g.edge_between(v(r, c), v(r, c + 1)).unwrap(),
                g.edge_between(v(r + 1, c), v(r + 1, c + 1)).unwrap(),
                g.edge_between(v(r, c), v(r + 1, c)).unwrap(),
                g.edge_between(v(r, c + 1), v(r + 1, c + 1)).unwrap(),
            ];
            BondConfig::from_edges(g.edge_count(), &es)
        };
        let full = MeasureSpec::fk(&g, 0.5, 2.0, BoundaryCondition::Free);
        let sub = full.clone().restricted(square(0, 0));
        let far = full.clone().restricted(square(1, 1));
        let plan = CouplingPlan::new(vec![sub, full, far]).unwrap();
        let ex = Explorer::new(&plan).unwrap();
        let mut rng = StreamRng::new(3, 0);
        let n = 100_000;
        // joint law of one edge of each disjoint square
        let e1 = square(0, 0).open_edges().next().unwrap();
        let e2 = square(1, 1).open_edges().last().unwrap();
        let mut joint = [0u64; 4];
        for _ in 0..n {
            let out = ex.draw(&mut rng);
            assert!(out[0].is_subset(&out[1]));
            assert!(out[2].is_subset(&out[1]));
            joint[(out[0].get(e1) as usize) * 2 + out[2].get(e2) as usize] += 1;
        }
        let p1 = (joint[2] + joint[3]) as f64 / n as f64;
        let p2 = (joint[1] + joint[3]) as f64 / n as f64;
        let expect = [(1.0 - p1) * (1.0 - p2), (1.0 - p1) * p2, p1 * (1.0 - p2), p1 * p2];
        assert!(stats::chi_square_pvalue(&joint, &expect) > 1e-4);
    }

    #[test]
    fn grand_coupling_monotone_pairs() {
        let g = build_box(&BoxSpec::new(2, 8)).unwrap();
        let free = MeasureSpec::fk(&g, 0.7, 2.0, BoundaryCondition::Free);
        let wired = MeasureSpec::fk(&g, 0.7, 2.0, BoundaryCondition::Wired);
        let r = grand_couple(&[free, wired], Schedule::new(100, 1), StreamRng::new(4, 0)).unwrap();
        assert_eq!(r.ordered, vec![true]);
        let lo = MeasureSpec::fk(&g, 0.4, 2.0, BoundaryCondition::Free);
        let hi = MeasureSpec::fk(&g, 0.7, 2.0, BoundaryCondition::Free);
        let r = grand_couple(&[lo, hi], Schedule::new(100, 1), StreamRng::new(5, 0)).unwrap();
        assert_eq!(r.ordered, vec![true]);
    }

    #[test]
    fn grand_coupling_nested_boxes() {
        let g = build_box(&BoxSpec::new(2, 20)).unwrap();
        let m = g.edge_count();
        let specs: Vec<MeasureSpec> = (1..=10)
            .map(|k| {
                let support = BondConfig::from_edges(m, &annulus_edges(&g, None, 2 * k));
                MeasureSpec::fk(&g, 0.55, 2.0, BoundaryCondition::Free).restricted(support)
            })
            .collect();
        let mut ok = 0;
        let reps = 20;
        for r in 0..reps {
            let out = grand_couple(&specs, Schedule::new(30, 1), StreamRng::new(6, r)).unwrap();
            if out.configs.windows(2).all(|w| w[0].is_subset(&w[1])) {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.99 * reps as f64);
    }
}
