use std::fmt::Write as _;
use std::path::Path;

use fkloop::config::SourceSpec;
use fkloop::cyclespace::{forest_basis, sample_ueg};
use fkloop::experiments::{self, ExperimentResult, MixingSetup, PisztoraParams, SourcePattern};
use fkloop::graph::{build_box, BoxSpec};
use fkloop::mcmc::{self, Schedule};
use fkloop::oracle::identities::{run_suite, Identity};
use fkloop::oracle::{Conditioning, MeasureSpec};
use fkloop::stats;
use fkloop::{BondConfig, BoundaryCondition, FiniteGraph, StreamRng};

use crate::spec::{required, ExperimentSection, OracleCheckSection, ReportSection, SampleSection, Timing};
use crate::CliError;

/// Offset separating the density pre-run from the main replicas.
const THETA_SEED_OFFSET: u64 = 0x0074_6865_7461;

fn cfg(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// `path:n`, `cycle:n`, `complete:n`, `grid:RxC`, `box:d:radius`.
pub fn parse_graph(s: &str) -> Result<FiniteGraph, CliError> {
    let bad = || cfg(format!("field `graph`: cannot parse `{s}` (path:n, cycle:n, complete:n, grid:RxC, box:d:radius)"));
    let mut parts = s.split(':');
    let kind = parts.next().ok_or_else(bad)?;
    let rest: Vec<&str> = parts.collect();
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let g = match (kind, rest.as_slice()) {
        ("path", [n]) if num(n)? >= 1 => FiniteGraph::path(num(n)?),
        ("cycle", [n]) if num(n)? >= 3 => FiniteGraph::cycle(num(n)?),
        ("complete", [n]) if num(n)? >= 1 => FiniteGraph::complete(num(n)?),
        ("grid", [rc]) => {
            let (r, c) = rc.split_once('x').ok_or_else(bad)?;
            let (r, c) = (num(r)?, num(c)?);
            if r == 0 || c == 0 {
                return Err(bad());
            }
            FiniteGraph::grid(r, c)
        }
        ("box", [d, n]) => build_box(&BoxSpec::new(num(d)?, num(n)?))?,
        _ => return Err(bad()),
    };
    Ok(g)
}

fn parse_boundary(s: &str) -> Result<BoundaryCondition, CliError> {
    match s {
        "free" => Ok(BoundaryCondition::Free),
        "wired" => Ok(BoundaryCondition::Wired),
        other => Err(cfg(format!("field `boundary`: unknown boundary `{other}` (free, wired)"))),
    }
}

fn sample_sources(sec: &SampleSection, g: &FiniteGraph) -> Result<SourceSpec, CliError> {
    match (&sec.sources, &sec.labels) {
        (Some(_), Some(_)) => Err(cfg("fields `sources` and `labels` are mutually exclusive")),
        (Some(set), None) => {
            if sec.q != 2 {
                return Err(cfg("field `sources` lists vertices mod 2; use `labels` when q > 2"));
            }
            if let Some(&v) = set.iter().find(|&&v| v >= g.vertex_count()) {
                return Err(cfg(format!("field `sources`: vertex {v} is not in the graph")));
            }
            Ok(SourceSpec::from_set(g.vertex_count(), set))
        }
        (None, Some(labels)) => {
            if labels.len() != g.vertex_count() {
                return Err(cfg(format!(
                    "field `labels`: expected {} entries, found {}",
                    g.vertex_count(),
                    labels.len()
                )));
            }
            SourceSpec::new(sec.q, labels.clone()).map_err(CliError::from)
        }
        (None, None) => Ok(SourceSpec::none(sec.q, g.vertex_count())),
    }
}

fn values_line(values: &[u32]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// One configuration per line after a `#` header recording the seed.
pub fn sample(sec: &SampleSection, seed: u64) -> Result<String, CliError> {
    let g = parse_graph(&sec.graph)?;
    let a = sample_sources(sec, &g)?;
    let schedule = Schedule::new(sec.burn_in, sec.thinning);
    let rng = StreamRng::new(seed, 0);
    let lines: Vec<String> = match sec.model.as_str() {
        "fk" => {
            let p = required(&sec.p, "p", "sample")?;
            let mut spec = MeasureSpec::fk(&g, p, sec.q as f64, parse_boundary(&sec.boundary)?);
            if sec.conditioned {
                spec = spec.conditioned(Conditioning::FA(a));
            }
            mcmc::sample_fk_many(&spec, schedule, sec.count, rng)?
                .iter()
                .map(BondConfig::to_bits)
                .collect()
        }
        "loop" => {
            let x = required(&sec.x, "x", "sample")?;
            mcmc::sample_loop_many(&MeasureSpec::loop_o1(&g, x, a), schedule, sec.count, rng)?
                .iter()
                .map(|eta| eta.trace().to_bits())
                .collect()
        }
        "qflow" => {
            let x = required(&sec.x, "x", "sample")?;
            mcmc::sample_loop_many(&MeasureSpec::qflow(&g, x, a), schedule, sec.count, rng)?
                .iter()
                .map(|eta| values_line(eta.values()))
                .collect()
        }
        "current" => {
            let beta = required(&sec.beta, "beta", "sample")?;
            mcmc::sample_current_many(&g, beta, &a, schedule, sec.count, rng)?
                .iter()
                .map(|n| values_line(&n.values))
                .collect()
        }
        "ueg" => {
            let basis = forest_basis(&g, &BondConfig::full(g.edge_count()));
            let mut rng = rng;
            (0..sec.count).map(|_| sample_ueg(&basis, &mut rng).to_bits()).collect()
        }
        other => {
            return Err(cfg(format!(
                "field `model`: unknown model `{other}` (fk, loop, qflow, current, ueg)"
            )))
        }
    };
    let mut out = format!("# model={} graph={} seed={seed}\n", sec.model, sec.graph);
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    Ok(out)
}

/// Pass/fail table, one row per identity, graph and `x`.
pub fn oracle_check(sec: &OracleCheckSection) -> Result<(String, bool), CliError> {
    if sec.tolerance.is_nan() || sec.tolerance < 0.0 {
        return Err(cfg("field `tolerance` must be non-negative"));
    }
    let mut out = String::from("identity,graph,x,instances,max_diff,status\n");
    let mut all = true;
    for name in &sec.suites {
        let id = Identity::parse(name)?;
        let edges = match id {
            Identity::QFlow(_) => sec.qflow_max_edges,
            _ => sec.max_edges,
        };
        let checks = run_suite(id, edges, &sec.x, sec.tolerance)?;
        let mut groups: Vec<(String, f64, usize, f64, bool)> = Vec::new();
        for c in &checks {
            match groups.iter_mut().find(|g| g.0 == c.graph && g.1 == c.x) {
                Some(g) => {
                    g.2 += 1;
                    g.3 = g.3.max(c.max_diff);
                    g.4 &= c.passed;
                }
                None => groups.push((c.graph.clone(), c.x, 1, c.max_diff, c.passed)),
            }
        }
        for (graph, x, n, worst, ok) in groups {
            all &= ok;
            let _ = writeln!(out, "{id},{graph},{x},{n},{worst:e},{}", if ok { "PASS" } else { "FAIL" });
        }
    }
    Ok((out, all))
}

/// Vertex sets for catching and giant experiments: `face`, `spaced-K`, or a
/// boundary pattern name.
fn vertex_set(spec: &str, g: &FiniteGraph, seed: u64) -> Result<Vec<usize>, CliError> {
    let n = g.box_spec().map(|b| b.radius as i32).unwrap_or(0);
    if spec == "face" {
        return Ok((0..g.vertex_count())
            .filter(|&v| g.coord(v).is_some_and(|c| c[0] == -n))
            .collect());
    }
    if let Some(k) = spec.strip_prefix("spaced-") {
        let k = k
            .parse::<usize>()
            .map_err(|_| cfg(format!("field `sources`: bad count in `{spec}`")))?;
        return Ok(experiments::spaced_boundary(g, k)?);
    }
    let pat: SourcePattern = spec.parse()?;
    Ok(pat.sources(g, seed)?.support())
}

fn pisztora_params(sec: &ExperimentSection, p: f64, n: usize, seed: u64) -> Result<PisztoraParams, CliError> {
    let theta = match sec.theta_hat {
        Some(t) => t,
        None => experiments::estimate_theta(
            sec.d,
            p,
            n,
            sec.theta_replicas,
            seed.wrapping_add(THETA_SEED_OFFSET),
            Schedule::new(sec.burn_in, 1),
        )?,
    };
    let mut params = PisztoraParams {
        theta_hat: theta,
        epsilon: theta / (1u64 << sec.d) as f64,
        l0: (n / 4).max(1),
    };
    if let Some(e) = sec.epsilon {
        params.epsilon = e;
    }
    if let Some(l0) = sec.l0 {
        params.l0 = l0;
    }
    params
        .thresholds()
        .validate()
        .map_err(|e| cfg(format!("Pisztora parameters (`theta_hat`, `epsilon`, `L0`): {e}")))?;
    Ok(params)
}

fn row(name: &str, params: Vec<(&str, String)>, est: f64, ci: (f64, f64), replicas: usize, seed: u64) -> ExperimentResult {
    ExperimentResult {
        experiment: name.to_string(),
        params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        estimate: est,
        ci_lo: ci.0,
        ci_hi: ci.1,
        replicas,
        seed,
        runtime_ms: 0,
    }
}

/// Rows of one experiment section over its `N` grid.
pub fn experiment(sec: &ExperimentSection, seed: u64) -> Result<Vec<ExperimentResult>, CliError> {
    const S: &str = "experiment";
    let sizes = required(&sec.size, "N", S)?.to_vec();
    let schedule = Schedule::new(sec.burn_in, 1);
    let mut rows = Vec::new();
    for &n in &sizes {
        let start = std::time::Instant::now();
        let mut batch: Vec<ExperimentResult> = match sec.name.as_str() {
            "uc_given_fa" => {
                let pat: SourcePattern = sec.sources.as_deref().unwrap_or("alternating").parse()?;
                vec![experiments::estimate_uc_given_fa(
                    sec.d,
                    required(&sec.p, "p", S)?,
                    n,
                    pat,
                    required(&sec.replicas, "replicas", S)?,
                    seed,
                    schedule,
                )?]
            }
            "mixing_gap" => {
                let setup = MixingSetup {
                    d: sec.d,
                    x: required(&sec.x, "x", S)?,
                    n,
                    k: sec.k.unwrap_or_else(|| 4.min((n / 2).max(1))),
                    a1: sec.a1.as_deref().unwrap_or("none").parse()?,
                    a2: sec.a2.as_deref().unwrap_or("alternating").parse()?,
                };
                let edges = 2 * sec.d * n * (2 * n + 1).pow(sec.d as u32 - 1);
                let mode = sec.mode.as_deref().unwrap_or("auto");
                let oracle = match mode {
                    "auto" => edges <= 12,
                    "oracle" => true,
                    "mc" => false,
                    other => return Err(cfg(format!("field `mode`: unknown mode `{other}` (auto, mc, oracle)"))),
                };
                if oracle {
                    vec![experiments::mixing_gap_oracle(&setup, seed)?]
                } else {
                    vec![experiments::mixing_gap(&setup, required(&sec.replicas, "replicas", S)?, seed, schedule)?]
                }
            }
            "pisztora_frequency" => {
                let p = required(&sec.p, "p", S)?;
                let params = pisztora_params(sec, p, n, seed)?;
                let bounds = sec
                    .boundary
                    .clone()
                    .map(|b| b.to_vec())
                    .unwrap_or_else(|| vec!["free".into(), "wired".into()]);
                let mut v = Vec::new();
                for b in bounds {
                    v.push(experiments::pisztora_frequency(
                        sec.d,
                        p,
                        n,
                        params,
                        parse_boundary(&b)?,
                        required(&sec.replicas, "replicas", S)?,
                        seed,
                        schedule,
                    )?);
                }
                v
            }
            "giant_touch_density" => giant_rows(sec, n, seed, schedule)?,
            "catching_trace" => catching_rows(sec, n, seed, schedule)?,
            other => {
                return Err(cfg(format!(
                    "field `name`: unknown experiment `{other}` (uc_given_fa, mixing_gap, pisztora_frequency, giant_touch_density, catching_trace)"
                )))
            }
        };
        let ms = start.elapsed().as_millis() as u64;
        eprintln!("{} N={n}: {} row(s) in {ms} ms", sec.name, batch.len());
        for r in &mut batch {
            r.runtime_ms = match sec.timing {
                Timing::Off => 0,
                Timing::Wall if r.runtime_ms > 0 => r.runtime_ms,
                Timing::Wall => ms,
            };
        }
        rows.extend(batch);
    }
    Ok(rows)
}

fn giant_rows(sec: &ExperimentSection, n: usize, seed: u64, schedule: Schedule) -> Result<Vec<ExperimentResult>, CliError> {
    const S: &str = "experiment";
    let p = required(&sec.p, "p", S)?;
    let replicas = required(&sec.replicas, "replicas", S)?;
    let g = build_box(&BoxSpec::new(sec.d, n))?;
    let set_name = sec.sources.clone().unwrap_or_else(|| "face".into());
    let a = vertex_set(&set_name, &g, seed)?;
    let bname = sec.boundary.clone().map(|b| b.to_vec()).unwrap_or_else(|| vec!["free".into()]);
    let params = pisztora_params(sec, p, n, seed)?;
    let mut rows = Vec::new();
    for b in bname {
        let s = experiments::giant_touch_density(
            sec.d,
            p,
            n,
            &a,
            parse_boundary(&b)?,
            params.thresholds(),
            replicas,
            seed,
            schedule,
        )?;
        let base = |stat: &str| {
            vec![
                ("d", sec.d.to_string()),
                ("p", p.to_string()),
                ("n", n.to_string()),
                ("A", set_name.clone()),
                ("boundary", b.clone()),
                ("statistic", stat.to_string()),
                ("bin", String::new()),
            ]
        };
        let (m, lo, hi) = stats::median_ci(&s.fractions, experiments::ALPHA);
        rows.push(row("giant_touch_density", base("median"), m, (lo, hi), replicas, seed));
        let (m, lo, hi) = stats::mean_ci(&s.fractions, experiments::ALPHA);
        rows.push(row("giant_touch_density", base("mean"), m, (lo.min(m), hi.max(m)), replicas, seed));
        for (gamma, frac) in &s.exceedance {
            let k = (frac * replicas as f64).round() as u64;
            let mut ps = base("exceed");
            ps[6].1 = gamma.to_string();
            rows.push(row("giant_touch_density", ps, *frac, stats::wilson(k, replicas as u64, experiments::ALPHA), replicas, seed));
        }
        for (i, &c) in s.histogram.iter().enumerate() {
            let mut ps = base("histogram");
            ps[6].1 = format!("{:.1}", i as f64 / 10.0);
            let est = c as f64 / replicas as f64;
            rows.push(row("giant_touch_density", ps, est, stats::wilson(c as u64, replicas as u64, experiments::ALPHA), replicas, seed));
        }
    }
    Ok(rows)
}

fn catching_rows(sec: &ExperimentSection, n: usize, seed: u64, schedule: Schedule) -> Result<Vec<ExperimentResult>, CliError> {
    const S: &str = "experiment";
    let p = required(&sec.p, "p", S)?;
    let replicas = required(&sec.replicas, "replicas", S)?;
    let g = build_box(&BoxSpec::new(sec.d, n))?;
    let set_name = sec.sources.clone().unwrap_or_else(|| "spaced-32".into());
    let a = vertex_set(&set_name, &g, seed)?;
    let t = experiments::catching_trace(sec.d, p, n, &a, replicas, seed, schedule)?;
    let base = |stat: &str, k: String, radius: String| {
        vec![
            ("d", sec.d.to_string()),
            ("p", p.to_string()),
            ("N", n.to_string()),
            ("A", set_name.clone()),
            ("statistic", stat.to_string()),
            ("k", k),
            ("radius", radius),
        ]
    };
    let mut rows = Vec::new();
    for (k, &r) in t.radii.iter().enumerate() {
        let sizes: Vec<f64> = t.series.iter().map(|s| s[k] as f64).collect();
        let (m, lo, hi) = stats::mean_ci(&sizes, experiments::ALPHA);
        rows.push(row("catching_trace", base("mean_size", k.to_string(), r.to_string()), m, (lo.min(m), hi.max(m)), replicas, seed));
    }
    let c = t.contraction;
    rows.push(row("catching_trace", base("contraction", String::new(), String::new()), c, (c, c), replicas, seed));
    Ok(rows)
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// CSV with columns `experiment,<params>,estimate,ci_lo,ci_hi,replicas,seed,runtime_ms`;
/// the parameter columns are the union of keys in first-seen order.
pub fn results_csv(rows: &[ExperimentResult]) -> Result<String, CliError> {
    let mut keys: Vec<String> = Vec::new();
    for r in rows {
        for (k, _) in &r.params {
            if !keys.contains(k) {
                keys.push(k.clone());
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["experiment".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(["estimate", "ci_lo", "ci_hi", "replicas", "seed", "runtime_ms"].map(String::from));
    w.write_record(&header).map_err(|e| CliError::Csv(e.to_string()))?;
    for r in rows {
        let mut rec = vec![r.experiment.clone()];
        rec.extend(keys.iter().map(|k| r.param(k).unwrap_or("").to_string()));
        rec.extend([
            fmt_f64(r.estimate),
            fmt_f64(r.ci_lo),
            fmt_f64(r.ci_hi),
            r.replicas.to_string(),
            r.seed.to_string(),
            r.runtime_ms.to_string(),
        ]);
        w.write_record(&rec).map_err(|e| CliError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Csv(e.to_string()))
}

/// Plain-text summary of a results CSV.
pub fn report(sec: &ReportSection, base: &Path) -> Result<String, CliError> {
    let path = if sec.input.is_absolute() { sec.input.clone() } else { base.join(&sec.input) };
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| cfg(format!("field `input` ({}): {e}", path.display())))?;
    let header = rdr.headers().map_err(|e| CliError::Csv(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(ie), Some(ilo), Some(ihi), Some(ir), Some(is)) =
        (col("estimate"), col("ci_lo"), col("ci_hi"), col("replicas"), col("seed"))
    else {
        return Err(cfg(format!("field `input`: {} is not a results CSV", path.display())));
    };
    let mut out = String::new();
    let mut count = 0usize;
    let mut names: Vec<String> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Csv(e.to_string()))?;
        count += 1;
        let name = rec.get(0).unwrap_or("").to_string();
        if !names.contains(&name) {
            names.push(name.clone());
        }
        let params: Vec<String> = (1..ie)
            .filter(|&i| !rec[i].is_empty())
            .map(|i| format!("{}={}", &header[i], &rec[i]))
            .collect();
        let _ = writeln!(
            out,
            "{name:<22} {:<60} {:>10} [{}, {}]  n={} seed={}",
            params.join(" "),
            short(&rec[ie]),
            short(&rec[ilo]),
            short(&rec[ihi]),
            &rec[ir],
            &rec[is]
        );
    }
    let _ = writeln!(out, "{count} row(s); experiments: {}", names.join(", "));
    Ok(out)
}

fn short(s: &str) -> String {
    s.parse::<f64>().map_or_else(|_| s.to_string(), |v| format!("{v:.4}"))
}
