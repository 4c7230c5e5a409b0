//! Exact distributional identities between the graphical representations,
//! checked by comparing oracle tables.

use std::fmt;

use crate::config::{BoundaryCondition, SourceSpec};
use crate::error::{Error, Result};
use crate::graph::FiniteGraph;
use crate::mcmc::{beta_from_x, p_from_x, sprinkle_rate};

use super::{enumerate, max_abs_diff, odd_part_law, trace_law, union_law, Conditioning, MeasureSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Identity {
    /// `FK(2x/(1+x), 2 | F_A) = loop(x, A) ∪ Bernoulli(x)`.
    FkLoop,
    /// Odd part of `current(artanh x, A)` is `loop(x, A)`.
    CurrentOdd,
    /// Trace of `current(artanh x, A)` is `loop(x, A) ∪ Bernoulli(1 − √(1 − x²))`.
    CurrentTrace,
    /// `FK(qx/(1−x+qx), q | F_A) = trace(qflow(x, A)) ∪ Bernoulli(x)`.
    QFlow(u32),
}

impl Identity {
    pub const ALL_BINARY: [Identity; 3] = [Identity::FkLoop, Identity::CurrentOdd, Identity::CurrentTrace];

    pub fn q(&self) -> u32 {
        match self {
            Identity::QFlow(q) => *q,
            _ => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fk-loop" => Ok(Identity::FkLoop),
            "current-odd" => Ok(Identity::CurrentOdd),
            "current-trace" => Ok(Identity::CurrentTrace),
            other => match other.strip_prefix("qflow-") {
                Some(q) => match q.parse::<u32>() {
                    Ok(q) if q >= 2 => Ok(Identity::QFlow(q)),
                    _ => Err(Error::param("suite", format!("bad modulus in `{other}`"))),
                },
                None => Err(Error::param(
                    "suite",
                    format!("unknown identity `{other}` (fk-loop, current-odd, current-trace, qflow-<q>)"),
                )),
            },
        }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Identity::FkLoop => f.write_str("fk-loop"),
            Identity::CurrentOdd => f.write_str("current-odd"),
            Identity::CurrentTrace => f.write_str("current-trace"),
            Identity::QFlow(q) => write!(f, "qflow-{q}"),
        }
    }
}

/// Paths, cycles, `2×k` grids and `K4` with at most `max_edges` edges.
pub fn standard_graphs(max_edges: usize) -> Vec<(String, FiniteGraph)> {
    let mut out = Vec::new();
    for n in 2..=max_edges + 1 {
        out.push((format!("path{n}"), FiniteGraph::path(n)));
    }
    for n in 3..=max_edges {
        out.push((format!("cycle{n}"), FiniteGraph::cycle(n)));
    }
    for k in 2.. {
        if 3 * k - 2 > max_edges {
            break;
        }
        out.push((format!("grid2x{k}"), FiniteGraph::grid(2, k)));
    }
    if max_edges >= 6 {
        out.push(("K4".to_string(), FiniteGraph::complete(4)));
    }
    out
}

/// Every label vector in `(Z/q)^n` with zero total.
pub fn valid_sources(q: u32, n: usize) -> Vec<SourceSpec> {
    if n == 0 {
        return vec![SourceSpec::none(q, 0)];
    }
    let free = (q as u64).pow(n as u32 - 1);
    (0..free)
        .map(|mut idx| {
            let mut labels = Vec::with_capacity(n);
            let mut sum = 0;
            for _ in 0..n - 1 {
                let l = (idx % q as u64) as u32;
                idx /= q as u64;
                sum = (sum + l) % q;
                labels.push(l);
            }
            labels.push((q - sum) % q);
            SourceSpec::new(q, labels).expect("labels below q")
        })
        .collect()
}

/// Largest absolute difference between the two sides of `id`.
pub fn check(id: Identity, g: &FiniteGraph, x: f64, a: &SourceSpec) -> Result<f64> {
    let m = g.edge_count();
    let fk_side = |q: u32| -> Result<_> {
        let p = p_from_x(x, q as f64);
        enumerate(&MeasureSpec::fk(g, p, q as f64, BoundaryCondition::Free).conditioned(Conditioning::FA(a.clone())))
    };
    let loop_law = || enumerate(&MeasureSpec::loop_o1(g, x, a.clone()));
    let bernoulli = |r: f64| enumerate(&MeasureSpec::bernoulli(g, r));
    let current = || enumerate(&MeasureSpec::current(g, beta_from_x(x), a.clone()));
    let (lhs, rhs) = match id {
        Identity::FkLoop => (fk_side(2)?, union_law(&loop_law()?, &bernoulli(x)?)?),
        Identity::CurrentOdd => (odd_part_law(&current()?)?, loop_law()?),
        Identity::CurrentTrace => (
            trace_law(&current()?)?,
            union_law(&loop_law()?, &bernoulli(sprinkle_rate(x))?)?,
        ),
        Identity::QFlow(q) => {
            if a.q() != q {
                return Err(Error::Mismatch(format!("sources are mod {} but the identity is mod {q}", a.q())));
            }
            let flow = trace_law(&enumerate(&MeasureSpec::qflow(g, x, a.clone()))?)?;
            (fk_side(q)?, union_law(&flow, &bernoulli(x)?)?)
        }
    };
    debug_assert_eq!(lhs.space.edges(), m);
    max_abs_diff(&lhs, &rhs)
}

/// One identity on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityCheck {
    pub identity: Identity,
    pub graph: String,
    pub x: f64,
    pub sources: Vec<u32>,
    pub max_diff: f64,
    pub passed: bool,
}

/// Runs `id` on every standard graph with at most `max_edges` edges, every
/// `x` and every valid source labelling.
pub fn run_suite(id: Identity, max_edges: usize, xs: &[f64], tolerance: f64) -> Result<Vec<IdentityCheck>> {
    let mut out = Vec::new();
    for (name, g) in standard_graphs(max_edges) {
        for a in valid_sources(id.q(), g.vertex_count()) {
            for &x in xs {
                let max_diff = check(id, &g, x, &a)?;
                out.push(IdentityCheck {
                    identity: id,
                    graph: name.clone(),
                    x,
                    sources: a.labels().to_vec(),
                    max_diff,
                    passed: max_diff <= tolerance,
                });
            }
        }
    }
    Ok(out)
}
