//! Statistical verification suites, shared by the experiment runner and the
//! acceptance tests. Each suite is a pure function of its config and root
//! seed; replicas run in parallel on derived seeds and are merged in index
//! order, so results do not depend on the thread count.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    chi_squared_test, energy_distance, energy_permutation_test, ks_test, rayleigh_cdf, rayleigh_mean,
    reduced_density_normalization, sample_bcrt_reduced_exact, MultiSample, Rule, TestReport,
};
use crate::error::{Error, Result};
use crate::excursion::{ExcursionTree, DEFAULT_RESOLUTION};
use crate::fixed_point::{apply_f, coupled_pair_with, coupled_reduced_trees, iterate_f, sample_n, BaseLawSpec, ResolveOptions};
use crate::randomness::{replica_seed, sample_uniform_shape, Stream};
use crate::smoothing::{eventually_decreasing, iterate_fsm, nu, nu_prime, sample_weights, trace_csv, EmpiricalDist, DEFAULT_MEAN_BAND};
use crate::tree::{
    distance_matrix, four_point_check, gromov_triple, reconstruct_reduced_tree, sample_points, MeasuredTree, ReducedTree,
    EXACT_EPS,
};

/// Caveat attached to every report built on a stick base law.
pub const STICK_CAVEAT: &str =
    "stick base law has atomic mass off the leaves, so it is only a finite stand-in for a continuum tree";
/// Caveat attached to reports using the energy distance.
pub const ENERGY_CAVEAT: &str = "energy distance (V-statistic) used as the multivariate two-sample comparator";

/// A named CSV body produced by a suite.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SuiteOutcome {
    pub reports: Vec<TestReport>,
    pub tables: Vec<Table>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(TestReport::passed)
    }

    pub fn report(&self, name: &str) -> Option<&TestReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    pub fn extend(&mut self, other: SuiteOutcome) {
        self.reports.extend(other.reports);
        self.tables.extend(other.tables);
    }

    fn push(&mut self, r: TestReport) {
        self.reports.push(r);
    }

    fn table(&mut self, name: &str, csv: String) {
        self.tables.push(Table { name: name.into(), csv });
    }
}

fn positive(name: &'static str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::invalid(name, "must be positive"));
    }
    Ok(())
}

fn replicas<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(f).collect()
}

fn samples_csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn rayleigh(x: f64) -> f64 {
    rayleigh_cdf(x).unwrap_or(0.0)
}

fn exact_triples(count: usize, seed: u64, tag: &str) -> Result<Vec<[f64; 3]>> {
    replicas(count, |i| {
        let mut s = Stream::from_seed(replica_seed(seed, tag, i as u64), "exact");
        let t = sample_bcrt_reduced_exact(3, &mut s)?;
        let l = t.lengths();
        Ok([l[0], l[1], l[2]])
    })
}

/// Two-point distances of excursion-encoded BCRT samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPointConfig {
    pub replicas: usize,
    pub resolution: usize,
    pub ks_threshold: f64,
    pub mean_tolerance: f64,
}

impl Default for TwoPointConfig {
    fn default() -> Self {
        TwoPointConfig { replicas: 10_000, resolution: DEFAULT_RESOLUTION, ks_threshold: 0.02, mean_tolerance: 0.02 }
    }
}

pub fn two_point_law(cfg: &TwoPointConfig, seed: u64) -> Result<SuiteOutcome> {
    positive("replicas", cfg.replicas)?;
    let d = replicas(cfg.replicas, |i| {
        let mut s = Stream::from_seed(replica_seed(seed, "two-point", i as u64), "excursion");
        let t = ExcursionTree::sample(&mut s, cfg.resolution)?;
        let (p, q) = (t.sample_point(&mut s), t.sample_point(&mut s));
        t.distance(&p, &q)
    })?;
    let ks = ks_test(&d, rayleigh);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let mut out = SuiteOutcome::default();
    out.push(
        TestReport::new("two-point ks vs rayleigh", ks.statistic, ks.p_value, Rule::Below { threshold: cfg.ks_threshold }, seed)
            .size("replicas", cfg.replicas)
            .size("resolution", cfg.resolution),
    );
    out.push(
        TestReport::new(
            "two-point mean",
            mean,
            None,
            Rule::Within { target: rayleigh_mean(), tolerance: cfg.mean_tolerance },
            seed,
        )
        .size("replicas", cfg.replicas),
    );
    out.table("two_point", samples_csv("replica,distance", d.iter().enumerate().map(|(i, x)| format!("{i},{x:.12}"))));
    Ok(out)
}

/// One gluing step applied to independent base trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneStepConfig {
    pub replicas: usize,
    pub base: BaseLawSpec,
    pub permutations: usize,
    pub level: f64,
    pub ks_threshold: f64,
    pub alpha: f64,
}

impl Default for OneStepConfig {
    fn default() -> Self {
        OneStepConfig {
            replicas: 10_000,
            base: BaseLawSpec::BcrtExcursion { resolution: DEFAULT_RESOLUTION },
            permutations: 99,
            level: 0.99,
            ks_threshold: 0.02,
            alpha: 0.01,
        }
    }
}

struct OneStepSample {
    two: f64,
    triple: [f64; 3],
    quartet: Option<usize>,
}

/// Index 0, 1 or 2 of the quartet split `12|34`, `13|24` or `14|23`.
pub fn quartet_index(t: &ReducedTree) -> Option<usize> {
    match t.shape().splits() {
        [s] => match s.0 {
            0b0011 => Some(0),
            0b0101 => Some(1),
            0b1001 => Some(2),
            _ => None,
        },
        _ => None,
    }
}

pub fn one_step_invariance(cfg: &OneStepConfig, seed: u64) -> Result<SuiteOutcome> {
    positive("replicas", cfg.replicas)?;
    let law = cfg.base.instantiate()?;
    let draws = replicas(cfg.replicas, |i| {
        let rs = replica_seed(seed, "one-step", i as u64);
        let g = apply_f(&law, Stream::from_seed(rs, "tree"))?;
        let mut q = Stream::from_seed(rs, "points");
        let p = sample_points(&g, 2, &mut q);
        let two = g.distance(&p[0], &p[1])?;
        let triple = gromov_triple(&distance_matrix(&g, &sample_points(&g, 3, &mut q))?)?;
        let four = distance_matrix(&g, &sample_points(&g, 4, &mut q))?;
        let quartet = reconstruct_reduced_tree(&four, EXACT_EPS).ok().as_ref().and_then(quartet_index);
        Ok(OneStepSample { two, triple, quartet })
    })?;
    let mut out = SuiteOutcome::default();
    let caveat = |r: TestReport| if cfg.base.is_bcrt() { r } else { r.caveat("base law is not the BCRT") };

    let two: Vec<f64> = draws.iter().map(|d| d.two).collect();
    let ks = ks_test(&two, rayleigh);
    out.push(caveat(
        TestReport::new("one-step m=2 ks vs rayleigh", ks.statistic, ks.p_value, Rule::Below { threshold: cfg.ks_threshold }, seed)
            .size("replicas", cfg.replicas),
    ));

    let mut counts = [0u64; 3];
    for q in draws.iter().filter_map(|d| d.quartet) {
        counts[q] += 1;
    }
    let resolved: u64 = counts.iter().sum();
    let chi = chi_squared_test(&counts, &[1.0 / 3.0; 3])?;
    out.push(caveat(
        TestReport::new("one-step m=4 quartet chi-squared", chi.statistic, Some(chi.p_value), Rule::PValueAtLeast { alpha: cfg.alpha }, seed)
            .size("replicas", cfg.replicas)
            .size("degenerate", cfg.replicas - resolved as usize),
    ));

    let exact = exact_triples(cfg.replicas, seed, "one-step-exact")?;
    let a = MultiSample::from_rows(&draws.iter().map(|d| d.triple).collect::<Vec<_>>())?;
    let b = MultiSample::from_rows(&exact)?;
    let mut s = Stream::from_seed(seed, "one-step-permutation");
    let perm = energy_permutation_test(&a, &b, cfg.permutations, cfg.level, &mut s)?;
    out.push(caveat(
        TestReport::new(
            "one-step m=3 energy vs exact",
            perm.statistic,
            Some(perm.p_value),
            Rule::Below { threshold: perm.null_quantile },
            seed,
        )
        .size("replicas", cfg.replicas)
        .size("permutations", cfg.permutations)
        .caveat(ENERGY_CAVEAT),
    ));
    out.table(
        "one_step",
        samples_csv(
            "replica,distance,arm1,arm2,arm3,quartet",
            draws.iter().enumerate().map(|(i, d)| {
                let q = d.quartet.map_or(String::from("degenerate"), |q| q.to_string());
                format!("{i},{:.12},{:.12},{:.12},{:.12},{q}", d.two, d.triple[0], d.triple[1], d.triple[2])
            }),
        ),
    );
    Ok(out)
}

/// Normalization of the reduced-tree density and the law of its total
/// length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub draws: usize,
    pub m_values: Vec<usize>,
    pub normalization_tolerance: f64,
    pub ks_threshold: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { draws: 100_000, m_values: vec![2, 3, 4], normalization_tolerance: 1e-6, ks_threshold: 0.01 }
    }
}

pub fn reduced_density(cfg: &DensityConfig, seed: u64) -> Result<SuiteOutcome> {
    positive("draws", cfg.draws)?;
    let mut out = SuiteOutcome::default();
    for &m in &cfg.m_values {
        let z = reduced_density_normalization(m)?;
        out.push(TestReport::new(
            format!("density normalization m={m}"),
            z,
            None,
            Rule::Within { target: 1.0, tolerance: cfg.normalization_tolerance },
            seed,
        ));
    }
    let s2 = replicas(cfg.draws, |i| {
        let mut s = Stream::from_seed(replica_seed(seed, "density", i as u64), "exact");
        let t = sample_bcrt_reduced_exact(3, &mut s)?;
        Ok(t.total_length().powi(2))
    })?;
    // chi-squared with 4 degrees of freedom
    let ks = ks_test(&s2, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-x / 2.0).exp() * (1.0 + x / 2.0) });
    out.push(
        TestReport::new("m=3 squared total length ks vs chi-squared(4)", ks.statistic, ks.p_value, Rule::Below { threshold: cfg.ks_threshold }, seed)
            .size("draws", cfg.draws),
    );
    out.table("density_s2", samples_csv("draw,s2", s2.iter().enumerate().map(|(i, x)| format!("{i},{x:.12}"))));
    Ok(out)
}

/// Closed forms of the weight-moment function and their Monte Carlo check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuConfig {
    pub draws: usize,
    pub s_values: Vec<f64>,
    pub exact_tolerance: f64,
    pub standard_errors: f64,
}

impl Default for NuConfig {
    fn default() -> Self {
        NuConfig { draws: 1_000_000, s_values: vec![0.0, 0.5, 1.0, 2.0, 4.0], exact_tolerance: 1e-12, standard_errors: 3.0 }
    }
}

const NU_CHUNK: usize = 10_000;

pub fn nu_moments(cfg: &NuConfig, seed: u64) -> Result<SuiteOutcome> {
    positive("draws", cfg.draws)?;
    let mut out = SuiteOutcome::default();
    out.push(TestReport::new("nu(1)", nu(1.0)?, None, Rule::Within { target: 0.0, tolerance: cfg.exact_tolerance }, seed));
    out.push(TestReport::new(
        "nu'(1)",
        nu_prime(1.0)?,
        None,
        Rule::Within { target: -7.0 / 24.0, tolerance: cfg.exact_tolerance },
        seed,
    ));
    let chunks = cfg.draws.div_ceil(NU_CHUNK);
    let w1 = replicas(chunks, |c| {
        let mut s = Stream::from_seed(replica_seed(seed, "weights", c as u64), "weights");
        let n = NU_CHUNK.min(cfg.draws - c * NU_CHUNK);
        Ok((0..n).map(|_| sample_weights(&mut s).0[0]).collect::<Vec<_>>())
    })?
    .concat();
    let mut rows = Vec::new();
    for &s in &cfg.s_values {
        let target = nu(s)?.exp();
        let vals: Vec<f64> = w1.iter().map(|&w| if w > 0.0 { 3.0 * w.powf(s) } else { 0.0 }).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let z = (mean - target).abs() / se;
        rows.push(format!("{s},{mean:.10},{target:.10},{se:.3e}"));
        out.push(
            TestReport::new(format!("weight moment s={s} (standard errors)"), z, None, Rule::Below { threshold: cfg.standard_errors }, seed)
                .size("draws", cfg.draws),
        );
    }
    out.table("nu_moments", samples_csv("s,monte_carlo,closed_form,standard_error", rows));
    Ok(out)
}

/// Law of the number of gluing levels separating `m` points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthConfig {
    pub draws: usize,
    pub max_m: u32,
    pub bins: usize,
    pub alpha: f64,
    pub mean_tolerance: f64,
}

impl Default for DepthConfig {
    fn default() -> Self {
        DepthConfig { draws: 100_000, max_m: 6, bins: 15, alpha: 0.01, mean_tolerance: 0.2 }
    }
}

pub fn separation_depth(cfg: &DepthConfig, seed: u64) -> Result<SuiteOutcome> {
    positive("draws", cfg.draws)?;
    positive("bins", cfg.bins)?;
    if cfg.max_m < 3 || cfg.max_m > 64 {
        return Err(Error::invalid("max_m", "must lie in 3..=64"));
    }
    let mut out = SuiteOutcome::default();
    let mut means = Vec::new();
    for m in 3..=cfg.max_m {
        let draws = replicas(cfg.draws, |i| {
            let mut s = Stream::from_seed(replica_seed(seed, &format!("depth:{m}"), i as u64), "n");
            Ok(sample_n(m, &mut s))
        })?;
        let mean = draws.iter().map(|&k| k as f64).sum::<f64>() / draws.len() as f64;
        means.push(mean);
        if m == 3 {
            let mut counts = vec![0u64; cfg.bins + 1];
            for &k in &draws {
                let cell = (k as usize).clamp(1, cfg.bins + 1) - 1;
                counts[cell] += 1;
            }
            let q: f64 = 33.0 / 35.0;
            let mut probs: Vec<f64> = (1..=cfg.bins).map(|k| (2.0 / 35.0) * q.powi(k as i32 - 1)).collect();
            probs.push(q.powi(cfg.bins as i32));
            let chi = chi_squared_test(&counts, &probs)?;
            out.push(
                TestReport::new("m=3 depth chi-squared vs geometric", chi.statistic, Some(chi.p_value), Rule::PValueAtLeast { alpha: cfg.alpha }, seed)
                    .size("draws", cfg.draws)
                    .size("bins", cfg.bins),
            );
            out.push(
                TestReport::new("m=3 depth mean", mean, None, Rule::Within { target: 17.5, tolerance: cfg.mean_tolerance }, seed)
                    .size("draws", cfg.draws),
            );
            out.table(
                "depth_histogram",
                samples_csv(
                    "level,count,expected",
                    counts.iter().zip(&probs).enumerate().map(|(i, (c, p))| {
                        let level = if i == cfg.bins { format!("{}+", cfg.bins + 1) } else { (i + 1).to_string() };
                        format!("{level},{c},{:.3}", p * cfg.draws as f64)
                    }),
                ),
            );
        } else {
            out.push(TestReport::new(format!("m={m} depth mean"), mean, None, Rule::Monitor, seed).size("draws", cfg.draws));
        }
    }
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    out.push(TestReport::new("depth mean nondecreasing in m", f64::from(u8::from(monotone)), None, Rule::Holds, seed));
    out.table(
        "depth_means",
        samples_csv("m,mean", means.iter().enumerate().map(|(i, m)| format!("{},{m:.6}", i + 3))),
    );
    Ok(out)
}

/// Iteration of the scalar smoothing transform from a point mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub pool: usize,
    pub iterations: usize,
    pub start: f64,
    pub ks_threshold: f64,
    pub mean_band: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { pool: 100_000, iterations: 30, start: rayleigh_mean(), ks_threshold: 0.02, mean_band: DEFAULT_MEAN_BAND }
    }
}

pub fn smoothing_attraction(cfg: &SmoothingConfig, seed: u64) -> Result<SuiteOutcome> {
    positive("pool", cfg.pool)?;
    let initial = EmpiricalDist::point_mass(cfg.start, cfg.pool)?;
    let mut s = Stream::from_seed(seed, "smoothing");
    let run = iterate_fsm(&initial, cfg.iterations, cfg.pool, &mut s, cfg.mean_band)?;
    let ks: Vec<f64> = run.trace.iter().map(|r| r.ks_stat).collect();
    let last = *ks.last().expect("trace has the initial row");
    let mut out = SuiteOutcome::default();
    out.push(
        TestReport::new("smoothing final ks vs rayleigh", last, None, Rule::Below { threshold: cfg.ks_threshold }, seed)
            .size("pool", cfg.pool)
            .size("iterations", cfg.iterations),
    );
    let trend_ok = eventually_decreasing(&ks, cfg.ks_threshold);
    let mut trend = TestReport::new("smoothing ks eventually decreasing", f64::from(u8::from(trend_ok)), None, Rule::Holds, seed)
        .size("pool", cfg.pool);
    if run.trace.iter().any(|r| r.mean_warning) {
        trend = trend.caveat("pool mean left the band around the Rayleigh mean");
    }
    out.push(trend);
    out.table("smoothing_trace", trace_csv(&run.trace));
    Ok(out)
}

/// Reduced trees of iterates of the gluing operator over a base law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub base: BaseLawSpec,
    pub depths: Vec<usize>,
    pub replicas: usize,
    pub energy_threshold: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig { base: BaseLawSpec::stick(), depths: vec![0, 2, 4, 8, 12], replicas: 10_000, energy_threshold: 0.05 }
    }
}

pub fn tree_convergence(cfg: &ConvergeConfig, seed: u64) -> Result<SuiteOutcome> {
    positive("replicas", cfg.replicas)?;
    if cfg.depths.is_empty() {
        return Err(Error::invalid("depths", "need at least one depth"));
    }
    let base = Arc::new(cfg.base.instantiate()?);
    let exact = MultiSample::from_rows(&exact_triples(cfg.replicas, seed, "converge-exact")?)?;
    let mut out = SuiteOutcome::default();
    let mut energies = Vec::new();
    let with_caveats = |mut r: TestReport| {
        if matches!(cfg.base, BaseLawSpec::Stick { .. }) {
            r = r.caveat(STICK_CAVEAT);
        }
        r.caveat(ENERGY_CAVEAT)
    };
    for &n in &cfg.depths {
        let triples = replicas(cfg.replicas, |i| {
            let tree = iterate_f(base.clone(), n, replica_seed(seed, &format!("converge:{n}"), i as u64));
            let r = tree.resolve_samples(3, replica_seed(seed, &format!("converge-query:{n}"), i as u64), ResolveOptions::exact())?;
            gromov_triple(&r.matrix)
        })?;
        let e = energy_distance(&MultiSample::from_rows(&triples)?, &exact)?;
        energies.push(e);
        out.push(with_caveats(
            TestReport::new(format!("depth {n} energy vs exact"), e, None, Rule::Monitor, seed).size("replicas", cfg.replicas),
        ));
    }
    let decreasing = energies.windows(2).all(|w| w[1] < w[0]);
    out.push(with_caveats(TestReport::new("energy decreasing over depths", f64::from(u8::from(decreasing)), None, Rule::Holds, seed)));
    let last = *energies.last().expect("nonempty");
    out.push(with_caveats(
        TestReport::new(
            format!("depth {} energy below threshold", cfg.depths.last().expect("nonempty")),
            last,
            None,
            Rule::Below { threshold: cfg.energy_threshold },
            seed,
        )
        .size("replicas", cfg.replicas),
    ));
    out.table(
        "converge",
        samples_csv("depth,energy", cfg.depths.iter().zip(&energies).map(|(n, e)| format!("{n},{e:.8}"))),
    );
    Ok(out)
}

/// Shape agreement between the two sides of a coupled pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub base: BaseLawSpec,
    pub tilde: BaseLawSpec,
    /// Gluing levels minus one: the pair is built with `depth + 1` levels.
    pub depth: usize,
    pub replicas: usize,
    pub m: usize,
    /// Two-point sub-problems with more levels than this below them are
    /// drawn from their law instead of being built.
    pub exact_levels: usize,
    pub fraction_tolerance: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            base: BaseLawSpec::stick(),
            tilde: BaseLawSpec::BcrtExcursion { resolution: crate::fixed_point::COUPLED_FLOOR_RESOLUTION },
            depth: 78,
            replicas: 10_000,
            m: 3,
            exact_levels: 4,
            fraction_tolerance: 0.01,
        }
    }
}

pub fn coupling_check(cfg: &CouplingConfig, seed: u64) -> Result<SuiteOutcome> {
    positive("replicas", cfg.replicas)?;
    if cfg.m < 2 {
        return Err(Error::invalid("m", "need at least two points"));
    }
    let base = Arc::new(cfg.base.instantiate()?);
    let tilde = Arc::new(cfg.tilde.instantiate()?);
    let opts = ResolveOptions { exact_levels: cfg.exact_levels };
    let results = replicas(cfg.replicas, |i| {
        let pair = coupled_pair_with(base.clone(), tilde.clone(), cfg.depth, replica_seed(seed, "coupling", i as u64));
        let r = coupled_reduced_trees(&pair, cfg.m, replica_seed(seed, "coupling-query", i as u64), opts, EXACT_EPS)?;
        Ok((r.separated, r.shapes_agree()))
    })?;
    let separated = results.iter().filter(|r| r.0).count();
    let degenerate = results.iter().filter(|r| r.0 && r.1.is_none()).count();
    let disagree = results.iter().filter(|r| r.0 && r.1 == Some(false)).count();
    let mut out = SuiteOutcome::default();
    let mut agree = TestReport::new(
        format!("m={} shapes agree on separated replicas", cfg.m),
        f64::from(u8::from(disagree == 0)),
        None,
        Rule::Holds,
        seed,
    )
    .size("separated", separated)
    .size("disagreements", disagree)
    .size("degenerate", degenerate);
    if matches!(cfg.base, BaseLawSpec::Stick { .. }) {
        agree = agree.caveat(STICK_CAVEAT);
    }
    out.push(agree);
    let fraction = separated as f64 / cfg.replicas as f64;
    if cfg.m == 3 {
        let target = 1.0 - (33.0f64 / 35.0).powi(cfg.depth as i32 + 1);
        out.push(
            TestReport::new("separated fraction", fraction, None, Rule::Within { target, tolerance: cfg.fraction_tolerance }, seed)
                .size("replicas", cfg.replicas)
                .size("levels", cfg.depth + 1),
        );
    } else {
        out.push(TestReport::new("separated fraction", fraction, None, Rule::Monitor, seed).size("replicas", cfg.replicas));
    }
    out.table(
        "coupling",
        samples_csv(
            "replica,separated,shapes",
            results.iter().enumerate().map(|(i, (s, a))| {
                let a = match a {
                    Some(true) => "agree",
                    Some(false) => "differ",
                    None => "degenerate",
                };
                format!("{i},{s},{a}")
            }),
        ),
    );
    Ok(out)
}

/// Round trip through distance matrices of random trees with dyadic edge
/// lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub trees: usize,
    pub max_m: usize,
    pub tolerance: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig { trees: 1000, max_m: 12, tolerance: 1e-9 }
    }
}

/// Random tree on `m` leaves with uniform shape and lengths `k / 2^20`,
/// `1 <= k <= 2^21`, so every path sum is exact in floating point.
pub fn synthetic_tree(m: usize, rng: &mut Stream) -> Result<ReducedTree> {
    use rand::Rng;
    let shape = sample_uniform_shape(rng, m)?;
    let lengths = (0..shape.edge_count()).map(|_| rng.random_range(1..=1u64 << 21) as f64 / (1u64 << 20) as f64).collect();
    ReducedTree::new(shape, lengths)
}

pub fn reconstruction_oracle(cfg: &ReconstructionConfig, seed: u64) -> Result<SuiteOutcome> {
    positive("trees", cfg.trees)?;
    if cfg.max_m < 2 {
        return Err(Error::invalid("max_m", "need at least two leaves"));
    }
    let rows = replicas(cfg.trees, |i| {
        use rand::Rng;
        let mut s = Stream::from_seed(replica_seed(seed, "synthetic", i as u64), "tree");
        let m = s.random_range(2..=cfg.max_m);
        let t = synthetic_tree(m, &mut s)?;
        let mat = t.distance_matrix();
        let four = four_point_check(&mat).max_violation;
        let (shape_ok, err) = match reconstruct_reduced_tree(&mat, EXACT_EPS) {
            Ok(r) => {
                let err = r.lengths().iter().zip(t.lengths()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                (r.shape() == t.shape(), err)
            }
            Err(_) => (false, f64::INFINITY),
        };
        Ok((m, four, shape_ok, err))
    })?;
    let mismatches = rows.iter().filter(|r| !r.2).count();
    let max_err = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    let max_four = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let mut out = SuiteOutcome::default();
    out.push(
        TestReport::new("reconstructed shapes match", f64::from(u8::from(mismatches == 0)), None, Rule::Holds, seed)
            .size("trees", cfg.trees)
            .size("mismatches", mismatches),
    );
    out.push(
        TestReport::new("reconstructed length error", max_err, None, Rule::Within { target: 0.0, tolerance: cfg.tolerance }, seed)
            .size("trees", cfg.trees),
    );
    out.push(
        TestReport::new("four-point violation", max_four, None, Rule::Within { target: 0.0, tolerance: 0.0 }, seed).size("trees", cfg.trees),
    );
    out.table(
        "reconstruction",
        samples_csv(
            "tree,m,four_point,shape_ok,max_length_error",
            rows.iter().enumerate().map(|(i, (m, f, ok, e))| format!("{i},{m},{f:e},{ok},{e:e}")),
        ),
    );
    Ok(out)
}
