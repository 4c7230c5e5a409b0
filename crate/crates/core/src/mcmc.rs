//! Heat-bath dynamics for the random-cluster model, optionally conditioned
//! on `F_A`, and the loop / flow / current samplers built on top of it.

use crate::config::{self, BondConfig, BoundaryCondition, CurrentConfig, FlowConfig, SourceSpec};
use crate::cyclespace;
use crate::error::{check_open_unit, Error, Result};
use crate::graph::FiniteGraph;
use crate::oracle::{Conditioning, Family, MeasureSpec};
use crate::rng::StreamRng;

/// `p` for flow weight `x` at cluster weight `q`: `p = qx / (1 - x + qx)`.
/// For `q = 2` this is `2x / (1 + x)`.
pub fn p_from_x(x: f64, q: f64) -> f64 {
    q * x / (1.0 - x + q * x)
}

/// `x = p / (p + q(1 - p))`.
pub fn x_from_p(p: f64, q: f64) -> f64 {
    p / (p + q * (1.0 - p))
}

/// `x = tanh β`.
pub fn x_from_beta(beta: f64) -> f64 {
    beta.tanh()
}

/// `β = artanh x`.
pub fn beta_from_x(x: f64) -> f64 {
    x.atanh()
}

/// Rate that sprinkles a loop configuration into a traced current:
/// `1 - √(1 - x²) = 1 - 1/cosh β`.
pub fn sprinkle_rate(x: f64) -> f64 {
    1.0 - (1.0 - x * x).sqrt()
}

/// A consistent parameter point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub p: f64,
    pub q: f64,
    pub x: f64,
    /// Present when `q = 2`.
    pub beta: Option<f64>,
}

impl ModelParams {
    pub fn from_p(p: f64, q: f64) -> Result<Self> {
        check_open_unit("p", p)?;
        if q.is_nan() || q <= 0.0 {
            return Err(Error::param("q", format!("{q} must be positive")));
        }
        let x = x_from_p(p, q);
        Ok(ModelParams {
            p,
            q,
            x,
            beta: (q == 2.0).then(|| beta_from_x(x)),
        })
    }

    pub fn from_x(x: f64, q: f64) -> Result<Self> {
        check_open_unit("x", x)?;
        let mut m = Self::from_p(p_from_x(x, q), q)?;
        m.x = x;
        Ok(m)
    }

    pub fn from_beta(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", format!("{beta} must be positive")));
        }
        let mut m = Self::from_x(x_from_beta(beta), 2.0)?;
        m.beta = Some(beta);
        Ok(m)
    }

    pub fn sprinkle_rate(&self) -> f64 {
        sprinkle_rate(self.x)
    }
}

/// Sweep schedule: `burn_in` sweeps, then one sample every `thinning` sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            burn_in: 200,
            thinning: 10,
        }
    }
}

impl Schedule {
    pub fn new(burn_in: usize, thinning: usize) -> Self {
        Schedule {
            burn_in,
            thinning: thinning.max(1),
        }
    }

    /// Burn-in `max(200, 2·t)` where `t` is the diagnostic's coalescence (or
    /// statistic agreement) time for `spec`.
    pub fn calibrated(spec: &MeasureSpec, seed: u64, budget: usize) -> Result<Self> {
        let report = convergence_diagnostic(spec, seed, budget)?;
        let t = report.coalesced_at.or(report.agreement_at).unwrap_or(budget);
        Ok(Schedule::new(200.max(2 * t), 10))
    }
}

const VIRTUAL: u32 = u32::MAX;

/// Outcome of the off-edge connectivity search.
enum Reach {
    Connected,
    /// Endpoints disconnected; the exhausted side is left in `queue_a`.
    Split,
}

/// Heat-bath chain for `φ^ξ_{p,q}` on a graph with virtual wiring vertices,
/// optionally conditioned on `F_A`.
#[derive(Clone, Debug)]
pub struct ChainState {
    m: usize,
    edges: Vec<(u32, u32)>,
    offsets: Vec<u32>,
    /// `(neighbour, edge id or VIRTUAL)`; virtual edges are always open.
    adj: Vec<(u32, u32)>,
    open: Vec<bool>,
    allowed: Vec<bool>,
    p_connected: f64,
    p_split: f64,
    /// Source labels on the augmented vertex set and their modulus.
    sources: Option<(Vec<u32>, u32)>,
    order: Vec<usize>,
    sweeps: usize,
    rng: StreamRng,
    stamp_a: Vec<u32>,
    stamp_b: Vec<u32>,
    epoch: u32,
    queue_a: Vec<u32>,
    queue_b: Vec<u32>,
}

impl ChainState {
    /// Chain for an FK spec (optionally restricted and conditioned), started
    /// from all-open (within the support). The scan order is a permutation
    /// drawn from `rng`.
    pub fn new(spec: &MeasureSpec, mut rng: StreamRng) -> Result<Self> {
        let mut order: Vec<usize> = (0..spec.graph.edge_count()).collect();
        rng.shuffle(&mut order);
        Self::with_order(spec, order, rng)
    }

    /// As [`ChainState::new`] with an explicit scan order.
    pub fn with_order(spec: &MeasureSpec, order: Vec<usize>, rng: StreamRng) -> Result<Self> {
        let Family::Fk { p, q, boundary } = &spec.family else {
            return Err(Error::pre("heat-bath chains need an FK spec"));
        };
        spec.validate()?;
        let (p, q) = (*p, *q);
        let g = &spec.graph;
        let m = g.edge_count();
        if order.len() != m {
            return Err(Error::Mismatch("scan order must list every edge".into()));
        }
        let classes = boundary.classes(g)?;
        let nv = g.vertex_count() + classes.len();
        let mut lists: Vec<Vec<(u32, u32)>> = vec![Vec::new(); nv];
        let mut edges = Vec::with_capacity(m);
        for (e, &(u, v)) in g.edges().iter().enumerate() {
            edges.push((u as u32, v as u32));
            lists[u].push((v as u32, e as u32));
            if u != v {
                lists[v].push((u as u32, e as u32));
            }
        }
        for (k, class) in classes.iter().enumerate() {
            let hub = g.vertex_count() + k;
            for &v in class {
                lists[v].push((hub as u32, VIRTUAL));
                lists[hub].push((v as u32, VIRTUAL));
            }
        }
        let mut offsets = Vec::with_capacity(nv + 1);
        let mut adj = Vec::new();
        offsets.push(0);
        for l in lists {
            adj.extend(l);
            offsets.push(adj.len() as u32);
        }
        let allowed = match &spec.support {
            Some(s) => (0..m).map(|e| s.get(e)).collect(),
            None => vec![true; m],
        };
        let sources = match &spec.conditioning {
            None => None,
            Some(Conditioning::FA(a)) => {
                if q < 1.0 {
                    return Err(Error::param("q", "conditioned chains need q >= 1"));
                }
                let mut labels = a.labels().to_vec();
                labels.resize(nv, 0);
                Some((labels, a.q()))
            }
            Some(other) => return Err(Error::pre(format!("unsupported chain conditioning {other:?}"))),
        };
        let chain = ChainState {
            m,
            edges,
            offsets,
            adj,
            open: allowed.clone(),
            allowed,
            p_connected: p,
            p_split: x_from_p(p, q),
            sources,
            order,
            sweeps: 0,
            rng,
            stamp_a: vec![0; nv],
            stamp_b: vec![0; nv],
            epoch: 0,
            queue_a: Vec::new(),
            queue_b: Vec::new(),
        };
        if chain.sources.is_some() && !chain.in_event() {
            return Err(Error::InfeasibleSources(
                "the fully open support does not satisfy F_A".into(),
            ));
        }
        Ok(chain)
    }

    pub fn edge_count(&self) -> usize {
        self.m
    }

    pub fn config(&self) -> BondConfig {
        let mut c = BondConfig::empty(self.m);
        for (e, &o) in self.open.iter().enumerate() {
            if o {
                c.set(e, true);
            }
        }
        c
    }

    pub fn is_open(&self, e: usize) -> bool {
        self.open[e]
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    /// Replaces the state. Edges outside the support must be closed and the
    /// configuration must satisfy the conditioning.
    pub fn set_config(&mut self, omega: &BondConfig) -> Result<()> {
        if omega.len() != self.m {
            return Err(Error::Mismatch("configuration length differs from edge count".into()));
        }
        if (0..self.m).any(|e| omega.get(e) && !self.allowed[e]) {
            return Err(Error::pre("configuration opens edges outside the support"));
        }
        let old = std::mem::replace(&mut self.open, (0..self.m).map(|e| omega.get(e)).collect());
        if self.sources.is_some() && !self.in_event() {
            self.open = old;
            return Err(Error::InfeasibleSources("configuration violates F_A".into()));
        }
        Ok(())
    }

    /// Whether the current configuration satisfies the conditioning.
    pub fn in_event(&self) -> bool {
        let Some((labels, q)) = &self.sources else {
            return true;
        };
        let n = self.stamp_a.len();
        let mut uf = crate::unionfind::UnionFind::new(n);
        for v in 0..n {
            for &(w, e) in self.neighbours(v as u32) {
                if e == VIRTUAL || self.open[e as usize] {
                    uf.union(v, w as usize);
                }
            }
        }
        let mut sums = vec![0u32; n];
        for v in 0..n {
            let r = uf.find(v);
            sums[r] = (sums[r] + labels[v]) % q;
        }
        sums.iter().all(|&s| s == 0)
    }

    fn neighbours(&self, v: u32) -> &[(u32, u32)] {
        &self.adj[self.offsets[v as usize] as usize..self.offsets[v as usize + 1] as usize]
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp_a.fill(0);
            self.stamp_b.fill(0);
            self.epoch = 1;
        }
    }

    /// Bidirectional search between the endpoints of `skip` avoiding `skip`.
    /// On a split, the exhausted (smaller) side is left in `queue_a`.
    fn reach(&mut self, skip: usize) -> Reach {
        let (u, v) = self.edges[skip];
        if u == v {
            return Reach::Connected;
        }
        self.next_epoch();
        let ep = self.epoch;
        self.queue_a.clear();
        self.queue_b.clear();
        self.queue_a.push(u);
        self.queue_b.push(v);
        self.stamp_a[u as usize] = ep;
        self.stamp_b[v as usize] = ep;
        let (mut ha, mut hb) = (0usize, 0usize);
        loop {
            // expand one vertex on each side
            for side in 0..2 {
                let (queue, head) = if side == 0 {
                    (&mut self.queue_a, &mut ha)
                } else {
                    (&mut self.queue_b, &mut hb)
                };
                if *head == queue.len() {
                    if side == 1 {
                        std::mem::swap(&mut self.queue_a, &mut self.queue_b);
                    }
                    return Reach::Split;
                }
                let x = queue[*head];
                *head += 1;
                let (own, other) = if side == 0 {
                    (&mut self.stamp_a, &self.stamp_b)
                } else {
                    (&mut self.stamp_b, &self.stamp_a)
                };
                let lo = self.offsets[x as usize] as usize;
                let hi = self.offsets[x as usize + 1] as usize;
                for &(w, e) in &self.adj[lo..hi] {
                    if e != VIRTUAL && (e as usize == skip || !self.open[e as usize]) {
                        continue;
                    }
                    if other[w as usize] == ep {
                        return Reach::Connected;
                    }
                    if own[w as usize] != ep {
                        own[w as usize] = ep;
                        queue.push(w);
                    }
                }
            }
        }
    }

    /// Whether closing `e` keeps `F_A`, given a split with the exhausted side
    /// in `queue_a`.
    fn split_side_balanced(&self) -> bool {
        let Some((labels, q)) = &self.sources else {
            return true;
        };
        let s = self.queue_a.iter().fold(0u32, |acc, &v| (acc + labels[v as usize]) % q);
        s == 0
    }

    /// Exact conditional probability that `e` is open given the other edges.
    pub fn open_probability(&mut self, e: usize) -> f64 {
        if !self.allowed[e] {
            return 0.0;
        }
        match self.reach(e) {
            Reach::Connected => self.p_connected,
            Reach::Split => {
                if self.split_side_balanced() {
                    self.p_split
                } else {
                    1.0
                }
            }
        }
    }

    /// Resamples `e` with uniform `u`: open iff `u < P[e open | rest]`.
    pub fn heatbath_step(&mut self, e: usize, u: f64) {
        if !self.allowed[e] {
            return;
        }
        let (lo, hi) = if self.p_connected <= self.p_split {
            (self.p_connected, self.p_split)
        } else {
            (self.p_split, self.p_connected)
        };
        if u < lo {
            self.open[e] = true;
            return;
        }
        if u >= hi {
            // closure; only conditioning can veto it
            if self.sources.is_none() || !self.open[e] {
                self.open[e] = false;
                return;
            }
        }
        let p = self.open_probability(e);
        self.open[e] = u < p;
    }

    /// One systematic-scan sweep with fresh uniforms from the chain's stream.
    pub fn sweep(&mut self) {
        for i in 0..self.m {
            let e = self.order[i];
            let u = self.rng.uniform();
            self.heatbath_step(e, u);
        }
        self.sweeps += 1;
    }

    /// One sweep driven by external uniforms indexed by edge id.
    pub fn sweep_with(&mut self, uniforms: &[f64]) {
        assert_eq!(uniforms.len(), self.m);
        for i in 0..self.m {
            let e = self.order[i];
            self.heatbath_step(e, uniforms[e]);
        }
        self.sweeps += 1;
    }

    pub fn run(&mut self, sweeps: usize) {
        for _ in 0..sweeps {
            self.sweep();
        }
    }
}

/// Fresh chain for `spec` on stream `rng`, burnt in per `schedule`, returning
/// its final state.
pub fn sample_fk(spec: &MeasureSpec, schedule: Schedule, rng: StreamRng) -> Result<BondConfig> {
    let mut chain = ChainState::new(spec, rng)?;
    chain.run(schedule.burn_in);
    Ok(chain.config())
}

/// `count` thinned samples from one chain.
pub fn sample_fk_many(spec: &MeasureSpec, schedule: Schedule, count: usize, rng: StreamRng) -> Result<Vec<BondConfig>> {
    let mut chain = ChainState::new(spec, rng)?;
    chain.run(schedule.burn_in);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        chain.run(schedule.thinning);
        out.push(chain.config());
    }
    Ok(out)
}

/// Conditioned FK spec coupled to a loop or flow spec.
fn coupled_fk(spec: &MeasureSpec) -> Result<(MeasureSpec, SourceSpec)> {
    spec.validate()?;
    let (x, a) = match &spec.family {
        Family::Loop { x, sources } | Family::QFlow { x, sources } => (*x, sources.clone()),
        _ => return Err(Error::pre("expected a loop or q-flow spec")),
    };
    if !a.is_valid() {
        return Err(Error::pre("source labels do not sum to zero"));
    }
    let q = a.q() as f64;
    let mut fk = MeasureSpec::fk(&spec.graph, p_from_x(x, q), q, BoundaryCondition::Free)
        .conditioned(Conditioning::FA(a.clone()));
    fk.support = spec.support.clone();
    Ok((fk, a))
}

/// Loop O(1) / q-flow samples: conditioned FK followed by a uniform flow on
/// each thinned configuration.
pub fn sample_loop_many(spec: &MeasureSpec, schedule: Schedule, count: usize, rng: StreamRng) -> Result<Vec<FlowConfig>> {
    let (fk, a) = coupled_fk(spec)?;
    let mut flow_rng = rng.child(1);
    let mut chain = ChainState::new(&fk, rng)?;
    chain.run(schedule.burn_in);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        chain.run(schedule.thinning);
        out.push(cyclespace::sample_ug(&spec.graph, &chain.config(), &a, &mut flow_rng)?);
    }
    Ok(out)
}

/// Single loop / flow sample.
pub fn sample_loop(spec: &MeasureSpec, schedule: Schedule, rng: StreamRng) -> Result<FlowConfig> {
    let (fk, a) = coupled_fk(spec)?;
    let mut flow_rng = rng.child(1);
    let omega = sample_fk(&fk, schedule, rng)?;
    cyclespace::sample_ug(&spec.graph, &omega, &a, &mut flow_rng)
}

/// Union with an independent Bernoulli(`rate`) configuration.
pub fn sprinkle(config: &BondConfig, rate: f64, rng: &mut StreamRng) -> BondConfig {
    let mut out = config.clone();
    for e in 0..config.len() {
        let u = rng.uniform();
        if u < rate {
            out.set(e, true);
        }
    }
    out
}

/// Parity-restricted Poisson quantile tables.
#[derive(Clone, Debug)]
pub struct ParityQuantiles {
    pub beta: f64,
    /// Cumulative probabilities of `n = 0, 2, 4, ...` given `n` even.
    even: Vec<f64>,
    /// Cumulative probabilities of `n = 1, 3, 5, ...` given `n` odd.
    odd: Vec<f64>,
}

impl ParityQuantiles {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", format!("{beta} must be positive")));
        }
        let (ch, sh) = (beta.cosh(), beta.sinh());
        let mut even = Vec::new();
        let mut odd = Vec::new();
        let (mut term, mut n) = (1.0f64, 0u32);
        let (mut ce, mut co) = (0.0, 0.0);
        loop {
            if n % 2 == 0 {
                ce += term / ch;
                even.push(ce.min(1.0));
            } else {
                co += term / sh;
                odd.push(co.min(1.0));
            }
            if n >= 1 && ce >= 1.0 - 1e-14 && co >= 1.0 - 1e-14 {
                break;
            }
            n += 1;
            term *= beta / n as f64;
            if n > 100_000 {
                break;
            }
        }
        Ok(ParityQuantiles { beta, even, odd })
    }

    /// Smallest even `n` with `P[N <= n | N even] > u`.
    pub fn f_even(&self, u: f64) -> u32 {
        2 * Self::search(&self.even, u)
    }

    /// Smallest odd `n` with `P[N <= n | N odd] > u`.
    pub fn f_odd(&self, u: f64) -> u32 {
        2 * Self::search(&self.odd, u) + 1
    }

    fn search(table: &[f64], u: f64) -> u32 {
        let i = table.partition_point(|&c| c <= u);
        i.min(table.len() - 1) as u32
    }

    pub fn even_table(&self) -> &[f64] {
        &self.even
    }

    pub fn odd_table(&self) -> &[f64] {
        &self.odd
    }
}

/// Random current from a loop configuration: `n_e = f_even(U_e)` off `η`,
/// `f_odd(U_e)` on `η`.
pub fn current_from_loop(eta: &BondConfig, quantiles: &ParityQuantiles, rng: &mut StreamRng) -> CurrentConfig {
    let values = (0..eta.len())
        .map(|e| {
            let u = rng.uniform();
            if eta.get(e) {
                quantiles.f_odd(u)
            } else {
                quantiles.f_even(u)
            }
        })
        .collect();
    CurrentConfig::new(values)
}

/// Single random currents with sources `A` at inverse temperature `β`.
pub fn sample_current_many(
    g: &FiniteGraph,
    beta: f64,
    a: &SourceSpec,
    schedule: Schedule,
    count: usize,
    rng: StreamRng,
) -> Result<Vec<CurrentConfig>> {
    let params = ModelParams::from_beta(beta)?;
    let quantiles = ParityQuantiles::new(beta)?;
    let mut current_rng = rng.child(2);
    let loops = sample_loop_many(&MeasureSpec::loop_o1(g, params.x, a.clone()), schedule, count, rng)?;
    Ok(loops
        .into_iter()
        .map(|eta| current_from_loop(&eta.trace(), &quantiles, &mut current_rng))
        .collect())
}

/// Single random current sample.
pub fn sample_current(g: &FiniteGraph, beta: f64, a: &SourceSpec, schedule: Schedule, rng: StreamRng) -> Result<CurrentConfig> {
    Ok(sample_current_many(g, beta, a, schedule, 1, rng)?.remove(0))
}

/// Twin-chain convergence report.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticReport {
    pub sweeps_run: usize,
    /// First sweep after which the two configurations were identical.
    pub coalesced_at: Option<usize>,
    /// First sweep after which open fraction and cluster density agreed
    /// within `tolerance`.
    pub agreement_at: Option<usize>,
    pub tolerance: f64,
    /// Whether sweep-by-sweep ordering was checked (q >= 1, unconditioned).
    pub monotone_checked: bool,
    /// Whether the ordering held at every checked sweep.
    pub monotone_held: bool,
}

impl DiagnosticReport {
    pub fn converged(&self) -> bool {
        self.coalesced_at.is_some() || self.agreement_at.is_some()
    }
}

/// Runs a top and a bottom chain with shared scan order and uniforms for at
/// most `budget` sweeps. The top starts all-open; the bottom all-closed, or
/// (under `F_A`) at a Bernoulli(1/2) configuration united with a source
/// representative.
pub fn convergence_diagnostic(spec: &MeasureSpec, seed: u64, budget: usize) -> Result<DiagnosticReport> {
    let Family::Fk { q, .. } = &spec.family else {
        return Err(Error::pre("diagnostic needs an FK spec"));
    };
    let q = *q;
    let mut driver = StreamRng::aux(seed, 0);
    let mut top = ChainState::new(spec, StreamRng::aux(seed, 1))?;
    let order = top.order().to_vec();
    let mut bottom = ChainState::with_order(spec, order, StreamRng::aux(seed, 2))?;
    let m = spec.graph.edge_count();
    let support = spec.support.clone().unwrap_or_else(|| BondConfig::full(m));
    let conditioned = matches!(spec.conditioning, Some(Conditioning::FA(_)));
    if let Some(Conditioning::FA(a)) = &spec.conditioning {
        let eta0 = cyclespace::representative(&spec.graph, &support, a)?.trace();
        let mut start = BondConfig::empty(m);
        for e in support.open_edges() {
            if driver.bernoulli(0.5) {
                start.set(e, true);
            }
        }
        start.union_with(&eta0);
        bottom.set_config(&start)?;
    } else {
        bottom.set_config(&BondConfig::empty(m))?;
    }
    let monotone_checked = q >= 1.0 && !conditioned;
    let mut monotone_held = true;
    let tolerance = 0.01;
    let nv = spec.graph.vertex_count() as f64;
    let bc = match &spec.family {
        Family::Fk { boundary, .. } => boundary.clone(),
        _ => unreachable!(),
    };
    let mut coalesced_at = None;
    let mut agreement_at = None;
    let mut uniforms = vec![0.0; m];
    let mut sweeps_run = 0;
    for s in 1..=budget {
        for u in uniforms.iter_mut() {
            *u = driver.uniform();
        }
        top.sweep_with(&uniforms);
        bottom.sweep_with(&uniforms);
        sweeps_run = s;
        let (ct, cb) = (top.config(), bottom.config());
        if monotone_checked {
            let ordered = cb.is_subset(&ct);
            monotone_held &= ordered;
            assert!(ordered, "monotone coupling broke at sweep {s}");
        }
        if agreement_at.is_none() {
            let df = (ct.count_open() as f64 - cb.count_open() as f64).abs() / m.max(1) as f64;
            let kt = config::cluster_count(&spec.graph, &ct, &bc)? as f64;
            let kb = config::cluster_count(&spec.graph, &cb, &bc)? as f64;
            if df <= tolerance && (kt - kb).abs() / nv <= tolerance {
                agreement_at = Some(s);
            }
        }
        if ct == cb {
            coalesced_at = Some(s);
            break;
        }
    }
    Ok(DiagnosticReport {
        sweeps_run,
        coalesced_at,
        agreement_at,
        tolerance,
        monotone_checked,
        monotone_held,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_box, BoxSpec};
    use crate::oracle::{self, enumerate};
    use crate::stats;

    #[test]
    fn parameter_round_trips() {
        for i in 1..=10 {
            for j in 0..10 {
                let x = i as f64 / 11.0;
                let q = 1.0 + j as f64 * 0.5;
                assert!((x_from_p(p_from_x(x, q), q) - x).abs() < 1e-15);
            }
        }
        let x: f64 = 0.3;
        assert!((p_from_x(x, 2.0) - 2.0 * x / (1.0 + x)).abs() < 1e-16);
        let m = ModelParams::from_beta(0.7).unwrap();
        assert!((m.x - 0.7f64.tanh()).abs() < 1e-16);
        assert!((m.sprinkle_rate() - (1.0 - 1.0 / 0.7f64.cosh())).abs() < 1e-15);
        assert!(ModelParams::from_p(1.0, 2.0).is_err());
    }

    #[test]
    fn parity_quantile_examples() {
        let pq = ParityQuantiles::new(1.0).unwrap();
        assert_eq!(pq.f_even(0.5), 0);
        assert_eq!(pq.f_odd(0.1), 1);
        for t in [pq.even_table(), pq.odd_table()] {
            assert!(t.windows(2).all(|w| w[0] <= w[1]));
            assert!(*t.last().unwrap() >= 1.0 - 1e-14);
        }
        assert!(pq.f_even(0.9) >= 2);
    }

    #[test]
    fn open_probability_cases() {
        let tri = FiniteGraph::cycle(3);
        let spec = MeasureSpec::fk(&tri, 0.4, 2.0, BoundaryCondition::Free);
        let mut c = ChainState::new(&spec, StreamRng::new(1, 0)).unwrap();
        assert!((c.open_probability(0) - 0.4).abs() < 1e-15);
        let single = MeasureSpec::fk(&FiniteGraph::path(2), 0.4, 2.0, BoundaryCondition::Free);
        let mut c = ChainState::new(&single, StreamRng::new(1, 0)).unwrap();
        assert!((c.open_probability(0) - x_from_p(0.4, 2.0)).abs() < 1e-15);
    }

    fn small_graphs() -> Vec<FiniteGraph> {
        vec![
            FiniteGraph::path(2),
            FiniteGraph::path(3),
            FiniteGraph::path(4),
            FiniteGraph::path(5),
            FiniteGraph::cycle(3),
            FiniteGraph::cycle(4),
            FiniteGraph::new(4, vec![(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap().with_boundary(&[0, 3]).unwrap(),
        ]
    }

    #[test]
    fn detailed_balance_exhaustive() {
        for g in small_graphs() {
            let m = g.edge_count();
            let mut specs = vec![];
            for bc in [BoundaryCondition::Free, BoundaryCondition::Wired] {
                for &(p, q) in &[(0.3, 2.0), (0.6, 3.0), (0.5, 0.5)] {
                    specs.push(MeasureSpec::fk(&g, p, q, bc.clone()));
                }
            }
            let a = SourceSpec::from_set(g.vertex_count(), &[0, g.vertex_count() - 1]);
            specs.push(MeasureSpec::fk(&g, 0.45, 2.0, BoundaryCondition::Free).conditioned(Conditioning::FA(a)));
            for spec in specs {
                let pi = enumerate(&spec).unwrap();
                let mut chain = ChainState::new(&spec, StreamRng::new(2, 0)).unwrap();
                for w in 0..(1u64 << m) {
                    let omega = BondConfig::from_index(m, w);
                    if pi.prob(w) == 0.0 {
                        continue;
                    }
                    chain.set_config(&omega).unwrap();
                    for e in 0..m {
                        if omega.get(e) {
                            continue;
                        }
                        let mut up = omega.clone();
                        up.set(e, true);
                        let p_up = chain.open_probability(e);
                        let lhs = pi.prob(w) * p_up;
                        let rhs = pi.prob(up.index()) * (1.0 - p_up);
                        assert!((lhs - rhs).abs() < 1e-12, "{spec:?} {w} {e}");
                    }
                }
            }
        }
    }

    #[test]
    fn conditioned_chain_reachability() {
        for g in small_graphs() {
            let m = g.edge_count();
            let n = g.vertex_count();
            for set in [vec![0, n - 1], vec![0, 1]] {
                let a = SourceSpec::from_set(n, &set);
                let in_fa = |w: u64| config::event_f_a(&g, &BondConfig::from_index(m, w), &a).unwrap();
                // every F_A state reaches all-open by single openings inside F_A
                for w in 0..(1u64 << m) {
                    if !in_fa(w) {
                        continue;
                    }
                    let mut cur = w;
                    for e in 0..m {
                        cur |= 1 << e;
                        assert!(in_fa(cur));
                    }
                }
            }
        }
    }

    #[test]
    fn four_cycle_all_open_frequency() {
        let g = FiniteGraph::cycle(4);
        let spec = MeasureSpec::fk(&g, 0.5, 2.0, BoundaryCondition::Free);
        let mut chain = ChainState::new(&spec, StreamRng::new(3, 0)).unwrap();
        let n = 1_000_000u64;
        let mut hits = 0u64;
        for _ in 0..n {
            chain.sweep();
            if chain.open_count() == 4 {
                hits += 1;
            }
        }
        // consecutive sweeps are correlated; allow a 5σ binomial band
        let p = 1.0 / 41.0;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((hits as f64 / n as f64) - p).abs() < 5.0 * sd, "{hits}");
    }

    #[test]
    fn conditioned_fk_matches_oracle() {
        let g = FiniteGraph::cycle(4);
        let a = SourceSpec::from_set(4, &[0, 2]);
        let spec = MeasureSpec::fk(&g, 0.5, 2.0, BoundaryCondition::Free).conditioned(Conditioning::FA(a));
        let exact = enumerate(&spec).unwrap();
        let samples = sample_fk_many(&spec, Schedule::new(50, 3), 100_000, StreamRng::new(4, 0)).unwrap();
        let mut counts = vec![0u64; 16];
        for s in samples {
            counts[s.index() as usize] += 1;
        }
        assert!(stats::empirical_tv(&counts, &exact.probs) < 0.02);
    }

    #[test]
    fn near_saturation() {
        let g = build_box(&BoxSpec::new(2, 1)).unwrap();
        let spec = MeasureSpec::fk(&g, 0.999, 2.0, BoundaryCondition::Free);
        let samples = sample_fk_many(&spec, Schedule::default(), 100, StreamRng::new(5, 0)).unwrap();
        let frac = samples.iter().map(|s| s.count_open()).sum::<usize>() as f64 / (100.0 * 12.0);
        assert!(frac >= 0.99);
    }

    #[test]
    fn loop_on_triangle() {
        let g = FiniteGraph::cycle(3);
        let spec = MeasureSpec::loop_o1(&g, 0.5, SourceSpec::none(2, 3));
        let n = 100_000;
        let samples = sample_loop_many(&spec, Schedule::new(50, 2), n, StreamRng::new(6, 0)).unwrap();
        let full = samples.iter().filter(|s| s.trace().count_open() == 3).count() as f64 / n as f64;
        let p = 1.0 / 9.0;
        // thinning keeps autocorrelation small; 4σ band
        assert!((full - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{full}");
    }

    #[test]
    fn qflow_trace_on_square() {
        let g = FiniteGraph::cycle(4);
        let a = SourceSpec::none(3, 4);
        let spec = MeasureSpec::qflow(&g, 0.4, a);
        let exact = oracle::enumerate(&spec).unwrap();
        let samples = sample_loop_many(&spec, Schedule::new(50, 3), 100_000, StreamRng::new(7, 0)).unwrap();
        let mut counts = vec![0u64; exact.len()];
        for s in samples {
            counts[s.index() as usize] += 1;
        }
        assert!(stats::empirical_tv(&counts, &exact.probs) < 0.02);
    }

    #[test]
    fn current_on_single_edge() {
        let g = FiniteGraph::path(2);
        let a = SourceSpec::from_set(2, &[0, 1]);
        let beta: f64 = 0.8;
        let n = 100_000;
        let cur = sample_current_many(&g, beta, &a, Schedule::new(10, 1), n, StreamRng::new(8, 0)).unwrap();
        assert!(cur.iter().all(|c| c.values[0] % 2 == 1));
        let ones = cur.iter().filter(|c| c.values[0] == 1).count() as f64 / n as f64;
        let p = beta / beta.sinh();
        assert!((ones - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn sprinkle_extremes() {
        let mut rng = StreamRng::new(9, 0);
        let c = BondConfig::from_bits("0101").unwrap();
        assert_eq!(sprinkle(&c, 0.0, &mut rng), c);
        assert_eq!(sprinkle(&c, 1.0, &mut rng), BondConfig::full(4));
    }

    #[test]
    fn diagnostic_regressions() {
        let g = build_box(&BoxSpec::new(2, 1)).unwrap();
        let hi = convergence_diagnostic(&MeasureSpec::fk(&g, 0.999, 2.0, BoundaryCondition::Free), 1, 1000).unwrap();
        assert!(hi.monotone_checked && hi.monotone_held);
        assert!(hi.coalesced_at.unwrap() <= 10, "{hi:?}");
        let lo = convergence_diagnostic(&MeasureSpec::fk(&g, 0.05, 2.0, BoundaryCondition::Free), 1, 1000).unwrap();
        assert!(lo.coalesced_at.unwrap() <= 10, "{lo:?}");
        let sub = convergence_diagnostic(&MeasureSpec::fk(&g, 0.5, 0.5, BoundaryCondition::Free), 1, 1000).unwrap();
        assert!(!sub.monotone_checked);
        let a = SourceSpec::from_set(9, &[0, 8]);
        let cond = MeasureSpec::fk(&g, 0.6, 2.0, BoundaryCondition::Free).conditioned(Conditioning::FA(a));
        let rep = convergence_diagnostic(&cond, 1, 1000).unwrap();
        assert!(!rep.monotone_checked && rep.converged());
    }

    #[test]
    fn conditioned_chain_stays_in_event() {
        let g = build_box(&BoxSpec::new(2, 3)).unwrap();
        let a = SourceSpec::from_set(g.vertex_count(), &[0, g.vertex_count() - 1, 3, 10]);
        let spec = MeasureSpec::fk(&g, 0.4, 2.0, BoundaryCondition::Free).conditioned(Conditioning::FA(a.clone()));
        let mut chain = ChainState::new(&spec, StreamRng::new(10, 0)).unwrap();
        for _ in 0..200 {
            chain.sweep();
            assert!(config::event_f_a(&g, &chain.config(), &a).unwrap());
        }
    }
}
