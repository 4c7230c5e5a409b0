use fkloop::config::{BoundaryCondition, SourceSpec};
use fkloop::experiments::{mixing_gap, mixing_gap_oracle, MixingSetup, SourcePattern};
use fkloop::mcmc::{self, Schedule};
use fkloop::oracle::identities::{run_suite, Identity};
use fkloop::oracle::{self, Conditioning, MeasureSpec};
use fkloop::stats;
use fkloop::{FiniteGraph, StreamRng};

#[test]
fn identity_suites_on_small_graphs() {
    for id in [Identity::FkLoop, Identity::CurrentOdd, Identity::CurrentTrace] {
        let checks = run_suite(id, 6, &[0.35, 0.7], 1e-12).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{id}");
    }
    let checks = run_suite(Identity::QFlow(3), 4, &[0.6], 1e-12).unwrap();
    assert!(checks.iter().all(|c| c.passed));
}

#[test]
fn conditioned_chain_matches_oracle_on_grid() {
    let g = FiniteGraph::grid(2, 3);
    let a = SourceSpec::from_set(6, &[0, 5]);
    let spec = MeasureSpec::fk(&g, 0.55, 2.0, BoundaryCondition::Free).conditioned(Conditioning::FA(a));
    let exact = oracle::enumerate(&spec).unwrap();
    let draws = mcmc::sample_fk_many(&spec, Schedule::new(100, 3), 40_000, StreamRng::new(11, 0)).unwrap();
    let mut counts = vec![0u64; exact.len()];
    for d in &draws {
        counts[d.index() as usize] += 1;
    }
    assert!(stats::empirical_tv(&counts, &exact.probs) < 0.03);
}

#[test]
fn mixing_modes_agree_on_small_box() {
    let setup = MixingSetup {
        d: 2,
        x: 0.6,
        n: 1,
        k: 1,
        a1: SourcePattern::None,
        a2: SourcePattern::Dense,
    };
    let exact = mixing_gap_oracle(&setup, 0).unwrap();
    let mc = mixing_gap(&setup, 8_000, 5, Schedule::new(100, 1)).unwrap();
    assert!(mc.ci_lo <= exact.estimate && exact.estimate <= mc.ci_hi, "{exact:?} {mc:?}");
}

#[test]
fn free_and_wired_chains_stay_ordered() {
    let g = FiniteGraph::grid(4, 4);
    let specs = [
        MeasureSpec::fk(&g, 0.5, 2.0, BoundaryCondition::Free),
        MeasureSpec::fk(&g, 0.5, 2.0, BoundaryCondition::Wired),
    ];
    let r = fkloop::coupling::grand_couple(&specs, Schedule::new(50, 1), StreamRng::new(2, 0)).unwrap();
    assert!(r.ordered.iter().all(|&o| o));
    assert!(r.configs[0].is_subset(&r.configs[1]));
}
