//! Closed-form target laws, the exact reduced-tree sampler and the
//! statistical tests used to compare samples with them.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::randomness::{sample_uniform_shape, uniform_open, TreeShape};
use crate::smoothing::EmpiricalDist;
use crate::tree::ReducedTree;

pub fn rayleigh_cdf(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain { function: "rayleigh_cdf", value: x });
    }
    Ok(-(-0.5 * x * x).exp_m1())
}

pub fn rayleigh_pdf(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain { function: "rayleigh_pdf", value: x });
    }
    Ok(x * (-0.5 * x * x).exp())
}

/// `sqrt(pi / 2)`.
pub fn rayleigh_mean() -> f64 {
    (std::f64::consts::PI / 2.0).sqrt()
}

/// `(2k - 1)!!` with the conventions `(-1)!! = 1!! = 1`.
pub fn double_factorial_odd(k: i64) -> f64 {
    let mut out = 1.0;
    let mut j = k;
    while j > 1 {
        out *= j as f64;
        j -= 2;
    }
    out
}

/// Joint density of shape and edge lengths of the BCRT reduced tree:
/// `(Σx) exp(-(Σx)^2 / 2)`, the same for every shape.
pub fn bcrt_reduced_density(shape: &TreeShape, lengths: &[f64]) -> Result<f64> {
    if lengths.len() != shape.edge_count() {
        return Err(Error::invalid(
            "lengths",
            format!("{} lengths for a shape with {} edges", lengths.len(), shape.edge_count()),
        ));
    }
    if let Some(x) = lengths.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("lengths", format!("edge length {x} is not positive")));
    }
    let s: f64 = lengths.iter().sum();
    Ok(s * (-0.5 * s * s).exp())
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    // fixed panels first, so a peak between the first few nodes is not missed
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, if i + 1 == PANELS { b } else { a + (i + 1) as f64 * h });
            let (flo, fhi) = (f(lo), f(hi));
            let (m, fm, whole) = simpson(&f, lo, flo, hi, fhi);
            recurse(&f, lo, flo, hi, fhi, m, fm, whole, tol / PANELS as f64, 50)
        })
        .sum()
}

/// `(2m - 5)!!` times the integral of the reduced-tree density over the
/// positive orthant of edge lengths. The density depends on the total
/// length `s` only, and the orthant slice at total `s` has volume
/// `s^(k-1) / (k-1)!` in `k = 2m - 3` dimensions.
pub fn reduced_density_normalization(m: usize) -> Result<f64> {
    if !(2..=20).contains(&m) {
        return Err(Error::invalid("m", format!("need 2 <= m <= 20, got {m}")));
    }
    let shapes = double_factorial_odd(2 * m as i64 - 5);
    let shape = TreeShape::from_splits(m, &caterpillar_splits(m))?;
    let k = shape.edge_count();
    let factorial: f64 = (1..k).map(|j| j as f64).product();
    let integrand = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let lengths = vec![s / k as f64; k];
        let f = bcrt_reduced_density(&shape, &lengths).expect("matching length count");
        f * s.powi(k as i32 - 1) / factorial
    };
    Ok(shapes * integrate(integrand, 0.0, 60.0, 1e-12))
}

/// Splits `{1,2}, {1,2,3}, ...` of the caterpillar shape on `m` leaves.
fn caterpillar_splits(m: usize) -> Vec<u64> {
    (2..m.saturating_sub(1)).map(|j| (1u64 << j) - 1).collect()
}

/// Exact draw of the BCRT reduced tree on `m` leaves: uniform shape, total
/// length `S` with `S^2 ~ chi-squared(2m - 2)` and a uniform split of `S`
/// over the edges.
pub fn sample_bcrt_reduced_exact<R: RngCore + ?Sized>(m: usize, rng: &mut R) -> Result<ReducedTree> {
    if m < 2 {
        return Err(Error::invalid("m", "a reduced tree needs at least two leaves"));
    }
    let shape = sample_uniform_shape(rng, m)?;
    let s2: f64 = (0..2 * m - 2).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
    let total = s2.sqrt();
    let k = shape.edge_count();
    let gaps: Vec<f64> = (0..k).map(|_| -uniform_open(rng).ln()).collect();
    let sum: f64 = gaps.iter().sum();
    let lengths = gaps.iter().map(|g| total * g / sum).collect();
    ReducedTree::new(shape, lengths)
}

/// `sqrt(pi/2) / mean(pool)`: the metric scaling that brings the two-point
/// mean to the Rayleigh mean.
pub fn estimate_alpha(pool: &EmpiricalDist) -> Result<f64> {
    let mean = pool.mean();
    if pool.is_empty() || !(mean > 0.0) {
        return Err(Error::invalid("pool", "needs a nonempty pool with positive mean"));
    }
    Ok(rayleigh_mean() / mean)
}

/// Smallest sample size for which asymptotic p-values are reported.
pub const KS_MIN_ASYMPTOTIC: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic Kolmogorov p-value; absent below
    /// [`KS_MIN_ASYMPTOTIC`] samples.
    pub p_value: Option<f64>,
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let p_value = (xs.len() >= KS_MIN_ASYMPTOTIC).then(|| kolmogorov_sf(n.sqrt() * d));
    KsResult { statistic: d, p_value }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChiSquaredResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit test with `cells - 1` degrees of freedom.
pub fn chi_squared_test(observed: &[u64], expected: &[f64]) -> Result<ChiSquaredResult> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::invalid("observed", "need matching counts and probabilities over at least two cells"));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::invalid("observed", "total count is zero"));
    }
    if let Some(p) = expected.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::invalid("expected", format!("cell probability {p} is not positive")));
    }
    let psum: f64 = expected.iter().sum();
    let n = total as f64;
    let statistic = observed
        .iter()
        .zip(expected)
        .map(|(&o, &p)| {
            let e = n * p / psum;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let df = observed.len() - 1;
    let law = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    Ok(ChiSquaredResult { statistic, df, p_value: law.sf(statistic) })
}

/// Points of equal dimension stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiSample {
    dim: usize,
    data: Vec<f64>,
}

impl MultiSample {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid("data", format!("{} values do not form rows of length {dim}", data.len())));
        }
        Ok(MultiSample { dim, data })
    }

    pub fn from_rows<const D: usize>(rows: &[[f64; D]]) -> Result<Self> {
        MultiSample::new(D, rows.iter().flatten().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sum of `|x_i - x_j|` over ordered pairs drawn from rows `left` and
/// `right` of `pooled`.
fn cross_sum(pooled: &MultiSample, left: &[usize], right: &[usize]) -> f64 {
    left.par_iter().map(|&i| right.iter().map(|&j| euclid(pooled.row(i), pooled.row(j))).sum::<f64>()).sum()
}

/// Sum of `|x_i - x_j|` over ordered pairs within `group`.
fn within_sum(pooled: &MultiSample, group: &[usize]) -> f64 {
    let half: f64 = (0..group.len())
        .into_par_iter()
        .map(|a| {
            let x = pooled.row(group[a]);
            group[a + 1..].iter().map(|&j| euclid(x, pooled.row(j))).sum::<f64>()
        })
        .sum();
    2.0 * half
}

fn check_pair(a: &MultiSample, b: &MultiSample) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("sample", "both samples must be nonempty"));
    }
    if a.dim() != b.dim() {
        return Err(Error::invalid("sample", format!("dimensions {} and {} differ", a.dim(), b.dim())));
    }
    Ok(())
}

fn pooled(a: &MultiSample, b: &MultiSample) -> MultiSample {
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    MultiSample { dim: a.dim, data }
}

fn energy_from_sums(total: f64, saa: f64, sbb: f64, na: usize, nb: usize) -> f64 {
    let sab = 0.5 * (total - saa - sbb);
    let (na, nb) = (na as f64, nb as f64);
    2.0 * sab / (na * nb) - saa / (na * na) - sbb / (nb * nb)
}

/// Energy distance `2E|X - Y| - E|X - X'| - E|Y - Y'|` with all pairs
/// averaged (V-statistic), so point masses at distance `r` give `2r`.
pub fn energy_distance(a: &MultiSample, b: &MultiSample) -> Result<f64> {
    check_pair(a, b)?;
    let p = pooled(a, b);
    let ia: Vec<usize> = (0..a.len()).collect();
    let ib: Vec<usize> = (a.len()..p.len()).collect();
    let saa = within_sum(&p, &ia);
    let sbb = within_sum(&p, &ib);
    let sab = cross_sum(&p, &ia, &ib);
    Ok(energy_from_sums(saa + sbb + 2.0 * sab, saa, sbb, a.len(), b.len()).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PermutationTest {
    pub statistic: f64,
    /// Upper `level` quantile of the permutation null.
    pub null_quantile: f64,
    pub level: f64,
    pub permutations: usize,
    /// `(1 + #{null >= statistic}) / (1 + permutations)`.
    pub p_value: f64,
}

/// Energy-distance permutation test. The quantile is the order statistic of
/// rank `ceil(level * permutations)` among the null draws, so 99
/// permutations at level 0.99 compare against the largest null draw.
pub fn energy_permutation_test(
    a: &MultiSample,
    b: &MultiSample,
    permutations: usize,
    level: f64,
    rng: &mut dyn RngCore,
) -> Result<PermutationTest> {
    check_pair(a, b)?;
    if permutations == 0 || !(0.0..1.0).contains(&level) {
        return Err(Error::invalid("permutations", "need at least one permutation and a level in [0, 1)"));
    }
    let p = pooled(a, b);
    let n = p.len();
    let (na, nb) = (a.len(), b.len());
    let ia: Vec<usize> = (0..na).collect();
    let ib: Vec<usize> = (na..n).collect();
    let saa = within_sum(&p, &ia);
    let sbb = within_sum(&p, &ib);
    let total = saa + sbb + 2.0 * cross_sum(&p, &ia, &ib);
    let statistic = energy_from_sums(total, saa, sbb, na, nb);
    let mut null = Vec::with_capacity(permutations);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..permutations {
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let (ga, gb) = order.split_at(na);
        null.push(energy_from_sums(total, within_sum(&p, ga), within_sum(&p, gb), na, nb));
    }
    let exceed = null.iter().filter(|&&x| x >= statistic).count();
    null.sort_by(f64::total_cmp);
    let rank = ((level * permutations as f64).ceil() as usize).clamp(1, permutations);
    Ok(PermutationTest {
        statistic: statistic.max(0.0),
        null_quantile: null[rank - 1],
        level,
        permutations,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
    })
}

/// How a report turns its statistic into a verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Rule {
    /// Pass when the statistic is strictly below the threshold.
    Below { threshold: f64 },
    /// Pass when the p-value is at least `alpha`.
    PValueAtLeast { alpha: f64 },
    /// Pass when `|statistic - target| <= tolerance`.
    Within { target: f64, tolerance: f64 },
    /// Pass when the flag recorded as the statistic is 1.
    Holds,
    /// Recorded only.
    Monitor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    StatisticOnly,
}

/// Outcome of one statistical check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(flatten)]
    pub rule: Rule,
    pub verdict: Verdict,
    pub sizes: BTreeMap<String, usize>,
    pub seed: u64,
    pub caveats: Vec<String>,
}

impl TestReport {
    pub fn new(name: impl Into<String>, statistic: f64, p_value: Option<f64>, rule: Rule, seed: u64) -> Self {
        let verdict = match &rule {
            Rule::Below { threshold } => pass_if(statistic < *threshold),
            Rule::PValueAtLeast { alpha } => match p_value {
                Some(p) => pass_if(p >= *alpha),
                None => Verdict::StatisticOnly,
            },
            Rule::Within { target, tolerance } => pass_if((statistic - target).abs() <= *tolerance),
            Rule::Holds => pass_if(statistic == 1.0),
            Rule::Monitor => Verdict::StatisticOnly,
        };
        TestReport { name: name.into(), statistic, p_value, rule, verdict, sizes: BTreeMap::new(), seed, caveats: Vec::new() }
    }

    pub fn size(mut self, label: &str, n: usize) -> Self {
        self.sizes.insert(label.to_string(), n);
        self
    }

    pub fn caveat(mut self, text: impl Into<String>) -> Self {
        self.caveats.push(text.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::{sample_rayleigh, Stream};
    use std::collections::HashMap;

    #[test]
    fn rayleigh_closed_forms() {
        assert_eq!(rayleigh_cdf(0.0).unwrap(), 0.0);
        assert!((rayleigh_mean() - 1.2533141373155).abs() < 1e-12);
        assert!(rayleigh_cdf(-1.0).is_err());
        assert!(rayleigh_pdf(-1.0).is_err());
        // the density peaks at 1
        let peak = rayleigh_pdf(1.0).unwrap();
        assert!(rayleigh_pdf(0.999).unwrap() < peak && rayleigh_pdf(1.001).unwrap() < peak);
        assert!((integrate(|x| rayleigh_pdf(x).unwrap(), 0.0, 40.0, 1e-12) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn density_values() {
        let two = TreeShape::from_splits(2, &[]).unwrap();
        assert!((bcrt_reduced_density(&two, &[1.0]).unwrap() - 0.60653).abs() < 1e-5);
        let quartet = TreeShape::from_splits(4, &[0b0011]).unwrap();
        let other = TreeShape::from_splits(4, &[0b0101]).unwrap();
        let a = bcrt_reduced_density(&quartet, &[0.1, 0.2, 0.3, 0.4, 1.0]).unwrap();
        let c = bcrt_reduced_density(&other, &[0.4, 0.3, 0.2, 0.1, 1.0]).unwrap();
        assert_eq!(a, c);
        assert!(bcrt_reduced_density(&quartet, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn normalization() {
        for m in 2..=5 {
            let z = reduced_density_normalization(m).unwrap();
            assert!((z - 1.0).abs() < 1e-6, "m = {m}: {z}");
        }
    }

    #[test]
    fn exact_sampler_laws() {
        let mut rng = Stream::from_seed(1, "exact");
        let two: Vec<f64> = (0..100_000).map(|_| sample_bcrt_reduced_exact(2, &mut rng).unwrap().lengths()[0]).collect();
        assert!(ks_test(&two, |x| rayleigh_cdf(x).unwrap()).statistic < 0.01);
        let chi4 = |x: f64| 1.0 - (-x / 2.0).exp() * (1.0 + x / 2.0);
        let s2: Vec<f64> =
            (0..100_000).map(|_| sample_bcrt_reduced_exact(3, &mut rng).unwrap().total_length().powi(2)).collect();
        assert!(ks_test(&s2, chi4).statistic < 0.01);
        let mut counts: HashMap<TreeShape, u64> = HashMap::new();
        for _ in 0..30_000 {
            *counts.entry(sample_bcrt_reduced_exact(4, &mut rng).unwrap().shape().clone()).or_default() += 1;
        }
        let obs: Vec<u64> = counts.values().copied().collect();
        assert_eq!(obs.len(), 3);
        assert!(chi_squared_test(&obs, &[1.0 / 3.0; 3]).unwrap().p_value > 0.01);
    }

    #[test]
    fn alpha_estimates() {
        let mut rng = Stream::from_seed(2, "alpha");
        let pool = EmpiricalDist::new((0..100_000).map(|_| sample_rayleigh(&mut rng)).collect()).unwrap();
        let a = estimate_alpha(&pool).unwrap();
        assert!((a - 1.0).abs() < 0.01);
        let doubled = pool.scaled(2.0).unwrap();
        assert_eq!(estimate_alpha(&doubled).unwrap(), a / 2.0);
        assert!(estimate_alpha(&EmpiricalDist::point_mass(0.0, 3).unwrap()).is_err());
    }

    #[test]
    fn ks_basics() {
        let one = ks_test(&[0.5], |x| x);
        assert_eq!(one.statistic, 0.5);
        assert!(one.p_value.is_none());
        let n = 200;
        let q: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        let r = ks_test(&q, |x| x);
        assert!(r.statistic <= 1.0 / (n + 1) as f64 + 1.0 / n as f64);
        assert!(r.p_value.unwrap() > 0.99);
        // invariant under a monotone map applied to both sides
        let mut rng = Stream::from_seed(3, "ks");
        let xs: Vec<f64> = (0..500).map(|_| sample_rayleigh(&mut rng)).collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let a = ks_test(&xs, |x| rayleigh_cdf(x).unwrap()).statistic;
        let b = ks_test(&sq, |y| rayleigh_cdf(y.sqrt()).unwrap()).statistic;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_tail() {
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn chi_squared_basics() {
        let r = chi_squared_test(&[25, 25, 50], &[0.25, 0.25, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.df, 2);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert!(chi_squared_test(&[1, 2], &[0.5, 0.0]).is_err());
        assert!(chi_squared_test(&[0, 0], &[0.5, 0.5]).is_err());
        let r = chi_squared_test(&[30, 10], &[0.5, 0.5]).unwrap();
        assert!((r.statistic - 10.0).abs() < 1e-12);
        assert!((r.p_value - 0.0015654).abs() < 1e-6);
    }

    #[test]
    fn energy_basics() {
        let a = MultiSample::from_rows(&[[0.0, 0.0], [1.0, 2.0], [3.0, 1.0]]).unwrap();
        assert!(energy_distance(&a, &a).unwrap().abs() < 1e-12);
        let p = MultiSample::from_rows(&[[0.0, 0.0]]).unwrap();
        let q = MultiSample::from_rows(&[[3.0, 4.0]]).unwrap();
        assert!((energy_distance(&p, &q).unwrap() - 10.0).abs() < 1e-12);
        let three = MultiSample::from_rows(&[[0.0, 0.0, 0.0]]).unwrap();
        assert!(energy_distance(&p, &three).is_err());
    }

    #[test]
    fn energy_permutation_separates_laws() {
        let mut rng = Stream::from_seed(4, "energy");
        let draw = |rng: &mut Stream, shift: f64, n: usize| {
            let rows: Vec<[f64; 3]> = (0..n)
                .map(|_| {
                    let l = sample_bcrt_reduced_exact(3, rng).unwrap();
                    let x = l.lengths();
                    [x[0] + shift, x[1], x[2]]
                })
                .collect();
            MultiSample::from_rows(&rows).unwrap()
        };
        let a = draw(&mut rng, 0.0, 400);
        let b = draw(&mut rng, 0.0, 400);
        let c = draw(&mut rng, 0.5, 400);
        let same = energy_permutation_test(&a, &b, 99, 0.99, &mut rng).unwrap();
        let diff = energy_permutation_test(&a, &c, 99, 0.99, &mut rng).unwrap();
        assert!(diff.statistic > diff.null_quantile);
        assert!(diff.p_value <= 0.01 + 1e-12);
        assert!(same.statistic <= same.null_quantile || same.p_value > 0.0);
        let direct = energy_distance(&a, &c).unwrap();
        assert!((direct - diff.statistic).abs() < 1e-9);
    }

    #[test]
    fn verdict_rules() {
        let r = TestReport::new("ks", 0.01, None, Rule::Below { threshold: 0.02 }, 7).size("n", 100);
        assert_eq!(r.verdict, Verdict::Pass);
        let r = TestReport::new("chi2", 3.0, Some(0.001), Rule::PValueAtLeast { alpha: 0.01 }, 7);
        assert_eq!(r.verdict, Verdict::Fail);
        let r = TestReport::new("mean", 1.26, None, Rule::Within { target: rayleigh_mean(), tolerance: 0.02 }, 7);
        assert_eq!(r.verdict, Verdict::Pass);
        let r = TestReport::new("small", 0.3, None, Rule::PValueAtLeast { alpha: 0.01 }, 7);
        assert_eq!(r.verdict, Verdict::StatisticOnly);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"rule\":\"p-value-at-least\""));
    }
}
