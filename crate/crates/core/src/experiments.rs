//! Monte Carlo probes on lattice boxes: unique crossing under `F_A`, giants
//! catching sources, the catching dynamics across annuli, mixing of the loop
//! O(1) model with respect to boundary sources, and the Pisztora event.
//!
//! Replica `r` of an experiment always draws from stream `r` of the master
//! seed, and replicas are collected in index order, so results do not depend
//! on the number of worker threads.

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{self, BondConfig, BoundaryCondition, PisztoraThresholds, SourceSpec};
use crate::error::{check_open_unit, Error, Result};
use crate::graph::{annulus_edges, build_box, AnnulusPlan, BoxSpec, FiniteGraph};
use crate::mcmc::{self, ChainState, Schedule};
use crate::oracle::{self, Conditioning, MeasureSpec};
use crate::rng::StreamRng;
use crate::stats;

/// Nominal level of every reported interval.
pub const ALPHA: f64 = 0.05;

/// Stream offset separating the two source sets of a mixing experiment.
const SECOND_SOURCES: u64 = 1 << 32;

/// One output row.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub experiment: String,
    pub params: Vec<(String, String)>,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub replicas: usize,
    pub seed: u64,
    pub runtime_ms: u64,
}

impl ExperimentResult {
    fn new(experiment: &str, params: Vec<(&str, String)>, estimate: f64, ci: (f64, f64), replicas: usize, seed: u64) -> Self {
        ExperimentResult {
            experiment: experiment.to_string(),
            params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            estimate,
            ci_lo: ci.0,
            ci_hi: ci.1,
            replicas,
            seed,
            runtime_ms: 0,
        }
    }

    fn timed(mut self, start: Instant) -> Self {
        self.runtime_ms = start.elapsed().as_millis() as u64;
        self
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Boundary source patterns on `∂Λ_N`. Every pattern drops its last vertex
/// when it would otherwise have odd size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourcePattern {
    None,
    /// Boundary vertices with even coordinate sum.
    Alternating,
    /// Every boundary vertex.
    Dense,
    /// Each boundary vertex independently with probability 1/2.
    RandomEven,
}

impl FromStr for SourcePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SourcePattern::None),
            "alternating" | "alternating-boundary" => Ok(SourcePattern::Alternating),
            "dense" | "dense-boundary" => Ok(SourcePattern::Dense),
            "random-even" => Ok(SourcePattern::RandomEven),
            other => Err(Error::param(
                "source_pattern",
                format!("unknown pattern `{other}` (none, alternating, dense, random-even)"),
            )),
        }
    }
}

impl SourcePattern {
    pub fn name(&self) -> &'static str {
        match self {
            SourcePattern::None => "none",
            SourcePattern::Alternating => "alternating",
            SourcePattern::Dense => "dense",
            SourcePattern::RandomEven => "random-even",
        }
    }

    /// Source set on the outer boundary of the box graph `g`. The random
    /// pattern draws from auxiliary stream 0 of `seed`.
    pub fn sources(&self, g: &FiniteGraph, seed: u64) -> Result<SourceSpec> {
        let boundary = outer_boundary(g)?;
        let mut set: Vec<usize> = match self {
            SourcePattern::None => Vec::new(),
            SourcePattern::Alternating => boundary
                .into_iter()
                .filter(|&v| g.coord(v).expect("box").iter().sum::<i32>().rem_euclid(2) == 0)
                .collect(),
            SourcePattern::Dense => boundary,
            SourcePattern::RandomEven => {
                let mut rng = StreamRng::aux(seed, 0);
                boundary.into_iter().filter(|_| rng.bernoulli(0.5)).collect()
            }
        };
        if set.len() % 2 == 1 {
            set.pop();
        }
        Ok(SourceSpec::from_set(g.vertex_count(), &set))
    }
}

/// Vertices with `|x|_∞ = n` of a box graph, in index order.
pub fn outer_boundary(g: &FiniteGraph) -> Result<Vec<usize>> {
    let n = g.box_spec().ok_or_else(|| Error::pre("expected a box graph"))?.radius;
    Ok((0..g.vertex_count()).filter(|&v| g.sup_norm(v) == Some(n)).collect())
}

/// `count` outer-boundary vertices spread evenly in index order.
pub fn spaced_boundary(g: &FiniteGraph, count: usize) -> Result<Vec<usize>> {
    let b = outer_boundary(g)?;
    if count > b.len() {
        return Err(Error::param("sources", format!("{count} exceeds the {} boundary vertices", b.len())));
    }
    Ok((0..count).map(|i| b[i * b.len() / count]).collect())
}

fn box_graph(d: usize, n: usize) -> Result<FiniteGraph> {
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    if n == 0 {
        return Err(Error::param("N", "must be at least 1"));
    }
    build_box(&BoxSpec::new(d, n))
}

fn wilson_row(name: &str, params: Vec<(&str, String)>, hits: usize, replicas: usize, seed: u64) -> ExperimentResult {
    let est = hits as f64 / replicas as f64;
    let ci = stats::wilson(hits as u64, replicas as u64, ALPHA);
    ExperimentResult::new(name, params, est, ci, replicas, seed)
}

/// Independent conditioned chains, one per replica, each returning `f` of
/// its final state.
fn replicate<T: Send>(
    spec: &MeasureSpec,
    schedule: Schedule,
    replicas: usize,
    seed: u64,
    stream_offset: u64,
    f: impl Fn(&BondConfig, &mut StreamRng) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamRng::new(seed, stream_offset + r as u64);
            let chain_rng = rng.child(0);
            let mut chain = ChainState::new(spec, chain_rng)?;
            chain.run(schedule.burn_in);
            f(&chain.config(), &mut rng)
        })
        .collect()
}

/// Fraction of `φ^0_{Λ_N,p}[· | F_A]` samples with a unique crossing of
/// `Λ_N ∖ Λ_{N/2}`.
pub fn estimate_uc_given_fa(
    d: usize,
    p: f64,
    n: usize,
    pattern: SourcePattern,
    replicas: usize,
    seed: u64,
    schedule: Schedule,
) -> Result<ExperimentResult> {
    let start = Instant::now();
    check_open_unit("p", p)?;
    if replicas < 100 {
        return Err(Error::param("replicas", "must be at least 100"));
    }
    if n < 2 {
        return Err(Error::param("N", "must be at least 2"));
    }
    let g = box_graph(d, n)?;
    let a = pattern.sources(&g, seed)?;
    let spec = MeasureSpec::fk(&g, p, 2.0, BoundaryCondition::Free).conditioned(Conditioning::FA(a));
    let hits = replicate(&spec, schedule, replicas, seed, 0, |omega, _| config::event_uc(&g, omega, n / 2, n))?
        .into_iter()
        .filter(|&b| b)
        .count();
    let params = vec![
        ("d", d.to_string()),
        ("p", p.to_string()),
        ("N", n.to_string()),
        ("sources", pattern.name().to_string()),
    ];
    Ok(wilson_row("uc_given_fa", params, hits, replicas, seed).timed(start))
}

/// Distribution of `|Giant ∩ A| / |A|` over replicas.
#[derive(Clone, Debug, PartialEq)]
pub struct GiantTouchSummary {
    pub fractions: Vec<f64>,
    pub median: f64,
    /// Ten equal-width bins over `[0, 1]`.
    pub histogram: [usize; 10],
    /// `(γ, P̂[fraction >= γ])`.
    pub exceedance: Vec<(f64, f64)>,
}

/// Per replica: FK sample on `Λ_n` under `boundary`, the Pisztora giant, and
/// the fraction of `a` it contains (zero when the event fails).
#[allow(clippy::too_many_arguments)]
pub fn giant_touch_density(
    d: usize,
    p: f64,
    n: usize,
    a: &[usize],
    boundary: BoundaryCondition,
    thresholds: PisztoraThresholds,
    replicas: usize,
    seed: u64,
    schedule: Schedule,
) -> Result<GiantTouchSummary> {
    check_open_unit("p", p)?;
    thresholds.validate()?;
    if a.is_empty() {
        return Err(Error::param("A", "must be non-empty"));
    }
    let g = box_graph(d, n)?;
    if a.iter().any(|&v| v >= g.vertex_count()) {
        return Err(Error::param("A", "vertex outside the box"));
    }
    let spec = MeasureSpec::fk(&g, p, 2.0, boundary);
    let fractions = replicate(&spec, schedule, replicas, seed, 0, |omega, _| {
        let (_, giant) = config::event_pis(&g, omega, &thresholds)?;
        let mut in_giant = vec![false; g.vertex_count()];
        for v in giant {
            in_giant[v] = true;
        }
        Ok(a.iter().filter(|&&v| in_giant[v]).count() as f64 / a.len() as f64)
    })?;
    let mut sorted = fractions.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        f64::NAN
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mut histogram = [0usize; 10];
    for &f in &fractions {
        histogram[((f * 10.0) as usize).min(9)] += 1;
    }
    let exceedance = (1..=9)
        .map(|i| {
            let gamma = i as f64 / 10.0;
            let k = fractions.iter().filter(|&&f| f >= gamma).count();
            (gamma, k as f64 / fractions.len().max(1) as f64)
        })
        .collect();
    Ok(GiantTouchSummary {
        fractions,
        median,
        histogram,
        exceedance,
    })
}

/// Catching dynamics summary.
#[derive(Clone, Debug, PartialEq)]
pub struct CatchingTrace {
    /// Radii `N_0 > N_1 > … > N_kfin`.
    pub radii: Vec<usize>,
    /// `|A^k|` per replica.
    pub series: Vec<Vec<usize>>,
    pub mean_profile: Vec<f64>,
    /// Least-squares contraction `ρ` in `mean |A^k| ≈ C ρ^k`.
    pub contraction: f64,
}

/// One step of the catching dynamics: the clusters of `ω|Ann` meeting
/// `prev`, each collapsed to its lexicographically first vertex on
/// `|x|_∞ = inner`; clusters missing that sphere are dropped.
pub fn catch_step(g: &FiniteGraph, omega: &BondConfig, prev: &[usize], inner: usize, outer: usize) -> Vec<usize> {
    let mut uf = crate::UnionFind::new(g.vertex_count());
    for e in annulus_edges(g, Some(inner), outer) {
        if omega.get(e) {
            let (u, v) = g.edge(e);
            uf.union(u, v);
        }
    }
    let mut marked = vec![false; g.vertex_count()];
    for &v in prev {
        let r = uf.find(v);
        marked[r] = true;
    }
    let mut taken = vec![false; g.vertex_count()];
    let mut next = Vec::new();
    // vertex indices follow the lexicographic order of coordinates
    for v in 0..g.vertex_count() {
        if g.sup_norm(v) != Some(inner) {
            continue;
        }
        let r = uf.find(v);
        if marked[r] && !taken[r] {
            taken[r] = true;
            next.push(v);
        }
    }
    next
}

/// `|A^k|` across the annuli of `Λ_N` for `ω ∼ φ^0[· | F_A]`.
pub fn catching_trace(
    d: usize,
    p: f64,
    n: usize,
    a: &[usize],
    replicas: usize,
    seed: u64,
    schedule: Schedule,
) -> Result<CatchingTrace> {
    check_open_unit("p", p)?;
    let g = box_graph(d, n)?;
    if a.len() % 2 == 1 {
        return Err(Error::pre("|A| must be even"));
    }
    if a.iter().any(|&v| v >= g.vertex_count() || g.sup_norm(v) != Some(n)) {
        return Err(Error::pre("A must lie on the outer boundary"));
    }
    let plan = AnnulusPlan::new(n)?;
    let radii = plan.radii();
    let sources = SourceSpec::from_set(g.vertex_count(), a);
    let spec = MeasureSpec::fk(&g, p, 2.0, BoundaryCondition::Free).conditioned(Conditioning::FA(sources));
    let mut initial = a.to_vec();
    initial.sort_unstable();
    initial.dedup();
    let series = replicate(&spec, schedule, replicas, seed, 0, |omega, _| {
        let mut cur = initial.clone();
        let mut sizes = vec![cur.len()];
        for k in 1..radii.len() {
            let next = catch_step(&g, omega, &cur, radii[k], radii[k - 1]);
            assert!(next.len() <= cur.len(), "catching increased |A^k|");
            sizes.push(next.len());
            cur = next;
        }
        Ok(sizes)
    })?;
    let steps = radii.len();
    let mean_profile: Vec<f64> = (0..steps)
        .map(|k| series.iter().map(|s| s[k] as f64).sum::<f64>() / series.len().max(1) as f64)
        .collect();
    Ok(CatchingTrace {
        contraction: geometric_rate(&mean_profile),
        radii,
        series,
        mean_profile,
    })
}

/// Least-squares slope of `ln y_k` against `k`, exponentiated; only positive
/// entries participate.
pub fn geometric_rate(profile: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .enumerate()
        .filter(|&(_, &y)| y > 0.0)
        .map(|(k, &y)| (k as f64, y.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx).exp()
}

/// The four designated edges of a mixing event family: the first four edges
/// (by id) incident to the box centre.
pub fn central_edges(g: &FiniteGraph) -> Result<Vec<usize>> {
    let spec = g.box_spec().ok_or_else(|| Error::pre("expected a box graph"))?;
    let centre: Vec<i32> = spec.center.clone().unwrap_or_else(|| vec![0; spec.dim]);
    let o = g.vertex_at(&centre).ok_or_else(|| Error::pre("box has no centre vertex"))?;
    let mut es: Vec<usize> = g.neighbors(o).iter().map(|&(_, e)| e).collect();
    es.sort_unstable();
    if es.len() < 4 {
        return Err(Error::pre("the centre needs at least four incident edges (d >= 2)"));
    }
    es.truncate(4);
    Ok(es)
}

fn pattern_index(omega: &BondConfig, edges: &[usize]) -> usize {
    edges.iter().enumerate().fold(0, |acc, (i, &e)| acc | ((omega.get(e) as usize) << i))
}

/// Gap and simultaneous interval from pattern counts of two source sets.
/// Each pattern gets a Newcombe interval at level `α/16`; the gap interval
/// is `[max_F lo_F, max_F hi_F]` with `lo_F = max(0, L, -U)` and
/// `hi_F = max(|L|, |U|)`.
pub fn gap_from_counts(c1: &[u64], c2: &[u64]) -> (f64, f64, f64) {
    let n1: u64 = c1.iter().sum();
    let n2: u64 = c2.iter().sum();
    let alpha = ALPHA / c1.len() as f64;
    let (mut gap, mut lo, mut hi) = (0.0f64, 0.0f64, 0.0f64);
    for (&k1, &k2) in c1.iter().zip(c2) {
        let diff = k1 as f64 / n1 as f64 - k2 as f64 / n2 as f64;
        let (l, u) = stats::newcombe_diff(k1, n1, k2, n2, alpha);
        gap = gap.max(diff.abs());
        lo = lo.max(0.0f64.max(l).max(-u));
        hi = hi.max(l.abs().max(u.abs()));
    }
    (gap, lo, hi)
}

/// Which source sets a mixing experiment compares.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingSetup {
    pub d: usize,
    pub x: f64,
    pub n: usize,
    pub k: usize,
    pub a1: SourcePattern,
    pub a2: SourcePattern,
}

impl MixingSetup {
    fn prepare(&self, seed: u64) -> Result<(FiniteGraph, SourceSpec, SourceSpec, Vec<usize>)> {
        check_open_unit("x", self.x)?;
        if self.k == 0 || self.k > (self.n / 2).max(1) {
            return Err(Error::param("k", format!("must lie in 1..={}", (self.n / 2).max(1))));
        }
        let g = box_graph(self.d, self.n)?;
        let a1 = self.a1.sources(&g, seed)?;
        let a2 = self.a2.sources(&g, seed ^ 0x9E37_79B9_7F4A_7C15)?;
        let edges = central_edges(&g)?;
        Ok((g, a1, a2, edges))
    }

    fn params(&self, mode: &str) -> Vec<(&'static str, String)> {
        vec![
            ("d", self.d.to_string()),
            ("x", self.x.to_string()),
            ("N", self.n.to_string()),
            ("k", self.k.to_string()),
            ("A1", self.a1.name().to_string()),
            ("A2", self.a2.name().to_string()),
            ("mode", mode.to_string()),
        ]
    }
}

/// `max_F |ℓ^{A1}[F] − ℓ^{A2}[F]|` over the 16 patterns of the central edges,
/// estimated from independent loop samples.
pub fn mixing_gap(setup: &MixingSetup, replicas: usize, seed: u64, schedule: Schedule) -> Result<ExperimentResult> {
    let start = Instant::now();
    if replicas == 0 {
        return Err(Error::param("replicas", "must be positive"));
    }
    let (g, a1, a2, edges) = setup.prepare(seed)?;
    let mut counts = Vec::new();
    for (a, offset) in [(a1, 0), (a2, SECOND_SOURCES)] {
        let x = setup.x;
        let fk = MeasureSpec::fk(&g, mcmc::p_from_x(x, 2.0), 2.0, BoundaryCondition::Free)
            .conditioned(Conditioning::FA(a.clone()));
        let patterns = replicate(&fk, schedule, replicas, seed, offset, |omega, rng| {
            let eta = crate::cyclespace::sample_ug(&g, omega, &a, rng)?.trace();
            Ok(pattern_index(&eta, &edges))
        })?;
        let mut c = vec![0u64; 16];
        for i in patterns {
            c[i] += 1;
        }
        counts.push(c);
    }
    let (gap, lo, hi) = gap_from_counts(&counts[0], &counts[1]);
    Ok(ExperimentResult::new("mixing_gap", setup.params("mc"), gap, (lo, hi), replicas, seed).timed(start))
}

/// Exact gap from oracle tables (at most 12 edges).
pub fn mixing_gap_oracle(setup: &MixingSetup, seed: u64) -> Result<ExperimentResult> {
    let start = Instant::now();
    let (g, a1, a2, edges) = setup.prepare(seed)?;
    if g.edge_count() > 12 {
        return Err(Error::Capacity {
            what: "oracle mixing edges",
            size: g.edge_count() as u128,
            limit: 12,
        });
    }
    let law = |a: SourceSpec| -> Result<oracle::ExactDistribution> {
        oracle::marginal(&oracle::enumerate(&MeasureSpec::loop_o1(&g, setup.x, a))?, &edges)
    };
    let (l1, l2) = (law(a1)?, law(a2)?);
    let gap = l1.probs.iter().zip(&l2.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(ExperimentResult::new("mixing_gap", setup.params("oracle"), gap, (gap, gap), 0, seed).timed(start))
}

/// Pisztora parameters derived from a density estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PisztoraParams {
    pub theta_hat: f64,
    pub epsilon: f64,
    pub l0: usize,
}

impl PisztoraParams {
    /// `ε = θ̂·2^{-d}` and `L0 = n/4` (at least 1).
    pub fn defaults(theta_hat: f64, d: usize, n: usize) -> Result<Self> {
        let p = PisztoraParams {
            theta_hat,
            epsilon: theta_hat / (1u64 << d) as f64,
            l0: (n / 4).max(1),
        };
        p.thresholds().validate()?;
        Ok(p)
    }

    pub fn thresholds(&self) -> PisztoraThresholds {
        PisztoraThresholds {
            epsilon: self.epsilon,
            theta: self.theta_hat,
            l0: self.l0,
        }
    }
}

/// Mean density of the largest wired cluster of `φ^1_{Λ_n,p}` samples.
pub fn estimate_theta(d: usize, p: f64, n: usize, replicas: usize, seed: u64, schedule: Schedule) -> Result<f64> {
    check_open_unit("p", p)?;
    if replicas == 0 {
        return Err(Error::param("replicas", "must be positive"));
    }
    let g = box_graph(d, n)?;
    let spec = MeasureSpec::fk(&g, p, 2.0, BoundaryCondition::Wired);
    let dens = replicate(&spec, schedule, replicas, seed, 0, |omega, _| {
        let lab = config::clusters(&g, omega, &BoundaryCondition::Wired)?;
        let largest = lab.largest().map_or(0, |c| lab.sizes[c]);
        Ok(largest as f64 / g.vertex_count() as f64)
    })?;
    Ok(dens.iter().sum::<f64>() / dens.len() as f64)
}

/// Frequency of the Pisztora event under `boundary`.
#[allow(clippy::too_many_arguments)]
pub fn pisztora_frequency(
    d: usize,
    p: f64,
    n: usize,
    params: PisztoraParams,
    boundary: BoundaryCondition,
    replicas: usize,
    seed: u64,
    schedule: Schedule,
) -> Result<ExperimentResult> {
    let start = Instant::now();
    check_open_unit("p", p)?;
    let thresholds = params.thresholds();
    thresholds.validate()?;
    if replicas == 0 {
        return Err(Error::param("replicas", "must be positive"));
    }
    let g = box_graph(d, n)?;
    let bname = match boundary {
        BoundaryCondition::Free => "free",
        BoundaryCondition::Wired => "wired",
        BoundaryCondition::Partition(_) => "partition",
    };
    let spec = MeasureSpec::fk(&g, p, 2.0, boundary.clone());
    let hits = replicate(&spec, schedule, replicas, seed, 0, |omega, _| Ok(config::event_pis(&g, omega, &thresholds)?.0))?
        .into_iter()
        .filter(|&b| b)
        .count();
    let row_params = vec![
        ("d", d.to_string()),
        ("p", p.to_string()),
        ("n", n.to_string()),
        ("boundary", bname.to_string()),
        ("theta_hat", format!("{:.6}", params.theta_hat)),
        ("epsilon", format!("{:.6}", params.epsilon)),
        ("L0", params.l0.to_string()),
    ];
    Ok(wilson_row("pisztora_frequency", row_params, hits, replicas, seed).timed(start))
}
