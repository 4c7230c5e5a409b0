use proptest::prelude::*;

use fkloop::config::{self, BoundaryCondition, FlowConfig};
use fkloop::cyclespace::{forest_basis, representative, sample_ug};
use fkloop::mcmc::{p_from_x, x_from_p, ChainState};
use fkloop::oracle::{self, MeasureSpec, StateSpace};
use fkloop::{BondConfig, FiniteGraph, StreamRng};

fn graph(kind: u8, size: usize) -> FiniteGraph {
    match kind % 4 {
        0 => FiniteGraph::path(size + 1),
        1 => FiniteGraph::cycle(size.max(3)),
        2 => FiniteGraph::grid(2, size.clamp(1, 4)),
        _ => FiniteGraph::complete(size.clamp(2, 5)),
    }
}

fn bonds(m: usize, bits: u64) -> BondConfig {
    BondConfig::from_index(m, bits & ((1u64 << m) - 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn any_flow_has_valid_sources(kind in 0u8..4, size in 2usize..7, q in 2u32..5, seed in any::<u64>()) {
        let g = graph(kind, size);
        let mut rng = StreamRng::new(seed, 0);
        let values = (0..g.edge_count()).map(|_| rng.below(q as u64) as u32).collect();
        let a = config::sources(&g, &FlowConfig::new(q, values));
        prop_assert!(a.is_valid());
    }

    #[test]
    fn ug_hits_prescribed_sources(kind in 0u8..4, size in 2usize..7, q in 2u32..4, bits in any::<u64>(), seed in any::<u64>()) {
        let g = graph(kind, size);
        let omega = bonds(g.edge_count(), bits);
        let mut rng = StreamRng::new(seed, 1);
        let mut seedflow = FlowConfig::zero(q, g.edge_count());
        for e in omega.open_edges() {
            seedflow.set(e, rng.below(q as u64) as u32);
        }
        let a = config::sources(&g, &seedflow);
        let eta = sample_ug(&g, &omega, &a, &mut rng).unwrap();
        prop_assert_eq!(config::sources(&g, &eta), a.clone());
        prop_assert!(eta.trace().is_subset(&omega));
        let rep = representative(&g, &omega, &a).unwrap();
        prop_assert_eq!(config::sources(&g, &rep), a);
    }

    #[test]
    fn basis_dimension_is_cyclomatic(kind in 0u8..4, size in 2usize..7, bits in any::<u64>()) {
        let g = graph(kind, size);
        let omega = bonds(g.edge_count(), bits);
        let kappa = config::cluster_count(&g, &omega, &BoundaryCondition::Free).unwrap();
        let basis = forest_basis(&g, &omega);
        prop_assert_eq!(basis.dimension() + g.vertex_count(), omega.count_open() + kappa);
        prop_assert_eq!(basis.component_count(), kappa);
    }

    #[test]
    fn bond_set_algebra(m in 1usize..20, a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (bonds(m, a), bonds(m, b));
        let u = x.union(&y).unwrap();
        let i = x.intersection(&y).unwrap();
        prop_assert!(x.is_subset(&u) && i.is_subset(&x));
        prop_assert_eq!(u.count_open() + i.count_open(), x.count_open() + y.count_open());
        prop_assert_eq!(x.xor(&y).unwrap(), u.difference(&i).unwrap());
        prop_assert_eq!(BondConfig::from_bits(&x.to_bits()).unwrap(), x.clone());
        prop_assert_eq!(BondConfig::from_index(m, x.index()), x);
    }

    #[test]
    fn parameter_maps_invert(x in 0.001f64..0.999, q in 1.0f64..6.0) {
        let p = p_from_x(x, q);
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!((x_from_p(p, q) - x).abs() < 1e-12);
    }

    #[test]
    fn union_of_point_masses_is_or(m in 1usize..8, a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (bonds(m, a), bonds(m, b));
        let space = StateSpace::Bond { edges: m };
        let u = oracle::union_law(&oracle::ExactDistribution::point(space, x.index()), &oracle::ExactDistribution::point(space, y.index())).unwrap();
        prop_assert_eq!(u.prob(x.union(&y).unwrap().index()), 1.0);
    }

    #[test]
    fn heat_bath_preserves_order(p in 0.05f64..0.95, bits in any::<u64>(), seed in any::<u64>()) {
        let g = FiniteGraph::grid(3, 3);
        let m = g.edge_count();
        let spec = MeasureSpec::fk(&g, p, 2.0, BoundaryCondition::Free);
        let order: Vec<usize> = (0..m).collect();
        let mut lo = ChainState::with_order(&spec, order.clone(), StreamRng::new(seed, 0)).unwrap();
        let mut hi = ChainState::with_order(&spec, order, StreamRng::new(seed, 1)).unwrap();
        let start = bonds(m, bits);
        lo.set_config(&start).unwrap();
        hi.set_config(&BondConfig::full(m)).unwrap();
        let mut rng = StreamRng::new(seed, 2);
        for _ in 0..5 {
            let u: Vec<f64> = (0..m).map(|_| rng.uniform()).collect();
            lo.sweep_with(&u);
            hi.sweep_with(&u);
            prop_assert!(lo.config().is_subset(&hi.config()));
        }
    }
}
