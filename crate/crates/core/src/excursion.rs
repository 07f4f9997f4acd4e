//! Discretized Brownian excursions and the real tree they encode.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{MeasuredTree, PointRef};

/// Default grid resolution.
pub const DEFAULT_RESOLUTION: usize = 1 << 16;

/// Path values `h(0..=n)` on the uniform grid of `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Excursion {
    values: Vec<f64>,
}

impl Excursion {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("values", "an excursion needs at least two grid values"));
        }
        if values[0] != 0.0 || values[values.len() - 1] != 0.0 {
            return Err(Error::invalid("values", "an excursion must vanish at both ends"));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("values", format!("entry {i} is negative or not finite")));
        }
        Ok(Excursion { values })
    }

    /// The constant-zero excursion, whose tree is a single point.
    pub fn zero(n: usize) -> Self {
        Excursion { values: vec![0.0; n.max(1) + 1] }
    }

    pub fn resolution(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// CSV column format: a version header, then `index,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# bcrt-excursion v1 resolution={}", self.resolution())?;
        writeln!(out, "index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{v:e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut lines = reader.lines().enumerate();
        let resolution = match lines.next() {
            Some((_, line)) => parse_header(&line?)?,
            None => return Err(Error::parse("line 1", "missing header")),
        };
        match lines.next() {
            Some((_, line)) if line.as_ref().map(|l| l.trim() == "index,value").unwrap_or(false) => {}
            _ => return Err(Error::parse("line 2", "expected column header `index,value`")),
        }
        let mut values = Vec::with_capacity(resolution + 1);
        for (lineno, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let loc = format!("line {}", lineno + 1);
            let (idx, val) = line.split_once(',').ok_or_else(|| Error::parse(&loc, "expected `index,value`"))?;
            let idx: usize = idx.trim().parse().map_err(|_| Error::parse(&loc, "bad index"))?;
            let val: f64 = val.trim().parse().map_err(|_| Error::parse(&loc, "bad value"))?;
            if idx != values.len() {
                return Err(Error::parse(&loc, format!("expected index {}, found {idx}", values.len())));
            }
            values.push(val);
        }
        if values.len() != resolution + 1 {
            return Err(Error::parse(
                "end of input",
                format!("header promises {} values, found {}", resolution + 1, values.len()),
            ));
        }
        Excursion::new(values)
    }

    /// Binary format: magic `BCRTEXC1`, the resolution as u64 LE, then the
    /// `n + 1` values as f64 LE.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&(self.resolution() as u64).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != BINARY_MAGIC {
            return Err(Error::parse("byte 0", "missing BCRTEXC1 magic"));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        let want = n.checked_add(1).and_then(|k| k.checked_mul(8));
        if want != Some(body.len()) {
            return Err(Error::parse(
                format!("byte {}", 16 + body.len()),
                format!("payload holds {} bytes, resolution {n} needs {}", body.len(), (n + 1) * 8),
            ));
        }
        let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Excursion::new(values)
    }

    /// Reads either format, chosen by the file's leading bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(BINARY_MAGIC) {
            Excursion::read_binary(&bytes)
        } else {
            Excursion::read_csv(&bytes[..])
        }
    }
}

const BINARY_MAGIC: &[u8; 8] = b"BCRTEXC1";

fn parse_header(line: &str) -> Result<usize> {
    let rest = line
        .strip_prefix("# bcrt-excursion v1 resolution=")
        .ok_or_else(|| Error::parse("line 1", "expected `# bcrt-excursion v1 resolution=<n>`"))?;
    rest.trim().parse().map_err(|_| Error::parse("line 1", "bad resolution"))
}

impl TryFrom<Vec<f64>> for Excursion {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Excursion::new(values)
    }
}

impl From<Excursion> for Vec<f64> {
    fn from(e: Excursion) -> Self {
        e.values
    }
}

/// Random-walk bridge on `n` steps: `W_i = n^{-1/2} Σ Z`, pinned by
/// `B_i = W_i - (i/n) W_n`.
pub fn sample_brownian_bridge<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid("n", format!("resolution must be at least 2, got {n}")));
    }
    let scale = (n as f64).sqrt().recip();
    let mut path = Vec::with_capacity(n + 1);
    let mut w = 0.0;
    path.push(0.0);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        w += z * scale;
        path.push(w);
    }
    let end = path[n];
    let nf = n as f64;
    for (i, b) in path.iter_mut().enumerate() {
        *b -= (i as f64 / nf) * end;
    }
    path[n] = 0.0;
    Ok(path)
}

/// Cyclic shift of a bridge at its first minimum.
pub fn vervaat(bridge: &[f64]) -> Result<Excursion> {
    let n = bridge.len().checked_sub(1).filter(|&n| n >= 1).ok_or_else(|| Error::invalid("bridge", "too short"))?;
    if bridge[0] != bridge[n] {
        return Err(Error::invalid("bridge", "endpoints differ"));
    }
    let mut k = 0;
    for i in 1..n {
        if bridge[i] < bridge[k] {
            k = i;
        }
    }
    let floor = bridge[k];
    let mut values: Vec<f64> = (0..=n).map(|t| (bridge[(k + t) % n] - floor).max(0.0)).collect();
    values[0] = 0.0;
    values[n] = 0.0;
    Ok(Excursion { values })
}

pub fn sample_excursion<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Result<Excursion> {
    vervaat(&sample_brownian_bridge(rng, n)?)
}

const BLOCK: usize = 32;

/// Range-minimum index: block minima with a sparse table over the blocks,
/// and linear scans inside the (at most two) partial blocks.
#[derive(Clone, Debug)]
pub struct RmqIndex {
    len: usize,
    table: Vec<Vec<f64>>,
}

impl RmqIndex {
    pub fn build(values: &[f64]) -> Self {
        let blocks: Vec<f64> = values.chunks(BLOCK).map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect();
        let mut table = vec![blocks];
        let mut width = 1;
        while 2 * width <= table[0].len() {
            let prev = table.last().expect("nonempty");
            let next: Vec<f64> = (0..prev.len() - width).map(|i| prev[i].min(prev[i + width])).collect();
            table.push(next);
            width *= 2;
        }
        RmqIndex { len: values.len(), table }
    }

    fn blocks_min(&self, lo: usize, hi: usize) -> f64 {
        let span = hi - lo + 1;
        let level = (usize::BITS - 1 - span.leading_zeros()) as usize;
        let row = &self.table[level];
        row[lo].min(row[hi + 1 - (1 << level)])
    }

    /// `min values[i..=j]` for `i <= j`.
    pub fn query(&self, values: &[f64], i: usize, j: usize) -> f64 {
        debug_assert_eq!(values.len(), self.len);
        let (bi, bj) = (i / BLOCK, j / BLOCK);
        if bj <= bi + 1 {
            return values[i..=j].iter().copied().fold(f64::INFINITY, f64::min);
        }
        let head = values[i..(bi + 1) * BLOCK].iter().copied().fold(f64::INFINITY, f64::min);
        let tail = values[bj * BLOCK..=j].iter().copied().fold(f64::INFINITY, f64::min);
        head.min(tail).min(self.blocks_min(bi + 1, bj - 1))
    }
}

/// `h(i) + h(j) - 2 min h` over the grid range between `i` and `j`.
pub fn tree_distance(exc: &Excursion, idx: &RmqIndex, i: usize, j: usize) -> Result<f64> {
    let n = exc.resolution();
    for index in [i, j] {
        if index > n {
            return Err(Error::IndexOutOfRange { index, resolution: n });
        }
    }
    if i == j {
        return Ok(0.0);
    }
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let h = exc.values();
    let m = idx.query(h, lo, hi);
    Ok(((h[i] - m) + (h[j] - m)).max(0.0))
}

/// The measured real tree encoded by `h = 2e` with the uniform measure on
/// grid indices `0..n`.
#[derive(Clone, Debug)]
pub struct ExcursionTree {
    excursion: Arc<Excursion>,
    index: Arc<RmqIndex>,
}

impl ExcursionTree {
    pub fn new(excursion: Arc<Excursion>) -> Self {
        let index = Arc::new(RmqIndex::build(excursion.values()));
        ExcursionTree { excursion, index }
    }

    pub fn sample<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Result<Self> {
        Ok(ExcursionTree::new(Arc::new(sample_excursion(rng, n)?)))
    }

    pub fn excursion(&self) -> &Arc<Excursion> {
        &self.excursion
    }

    pub fn grid_distance(&self, i: usize, j: usize) -> Result<f64> {
        Ok(2.0 * tree_distance(&self.excursion, &self.index, i, j)?)
    }
}

impl PartialEq for ExcursionTree {
    fn eq(&self, other: &Self) -> bool {
        self.excursion == other.excursion
    }
}

fn rng_index(rng: &mut dyn RngCore, n: usize) -> usize {
    rng.random_range(0..n)
}

impl MeasuredTree for ExcursionTree {
    fn sample_point(&self, rng: &mut dyn RngCore) -> PointRef {
        PointRef::Grid(rng_index(rng, self.excursion.resolution()))
    }

    fn distance(&self, p: &PointRef, q: &PointRef) -> Result<f64> {
        match (p, q) {
            (PointRef::Grid(i), PointRef::Grid(j)) => self.grid_distance(*i, *j),
            _ => Err(Error::ForeignPoint(format!("{p:?} or {q:?} is not a grid index"))),
        }
    }

    fn contains(&self, p: &PointRef) -> bool {
        matches!(p, PointRef::Grid(i) if *i <= self.excursion.resolution())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::Stream;

    fn tent(n: usize) -> Excursion {
        let half = n / 2;
        let values = (0..=n).map(|i| 1.0 - (i as f64 - half as f64).abs() / half as f64).collect();
        Excursion::new(values).unwrap()
    }

    #[test]
    fn bridge_is_pinned() {
        let mut rng = Stream::from_seed(1, "bridge");
        for n in [2, 3, 100, 1024] {
            let b = sample_brownian_bridge(&mut rng, n).unwrap();
            assert_eq!(b.len(), n + 1);
            assert_eq!(b[0], 0.0);
            assert_eq!(b[n], 0.0);
        }
        assert!(sample_brownian_bridge(&mut rng, 1).is_err());
    }

    #[test]
    fn bridge_midpoint_variance_and_quarter_mean() {
        let mut rng = Stream::from_seed(2, "bridge");
        let n = 1024;
        let reps = 100_000;
        let (mut s2, mut q, mut q2) = (0.0, 0.0, 0.0);
        for _ in 0..reps {
            let b = sample_brownian_bridge(&mut rng, n).unwrap();
            s2 += b[n / 2] * b[n / 2];
            q += b[n / 4];
            q2 += b[n / 4] * b[n / 4];
        }
        let var_mid = s2 / reps as f64;
        assert!((var_mid - 0.25).abs() < 0.01, "Var(B_1/2) = {var_mid}");
        let mean_q = q / reps as f64;
        let se = (q2 / reps as f64 - mean_q * mean_q).sqrt() / (reps as f64).sqrt();
        assert!(mean_q.abs() < 3.0 * se);
    }

    #[test]
    fn vervaat_of_zero_is_zero() {
        let e = vervaat(&[0.0; 9]).unwrap();
        assert!(e.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vervaat_shifts_at_unique_minimum() {
        let bridge = [0.0, 0.5, -1.0, 0.25, 0.0];
        let e = vervaat(&bridge).unwrap();
        assert_eq!(e.values(), &[0.0, 1.25, 1.0, 1.5, 0.0]);
        let inner = &e.values()[1..e.resolution()];
        assert!(inner.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn vervaat_ties_pick_first_minimum() {
        let bridge = [0.0, -1.0, 0.5, -1.0, 0.0];
        let e = vervaat(&bridge).unwrap();
        assert_eq!(e.values(), &[0.0, 1.5, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn tent_distances() {
        let e = tent(8);
        let idx = RmqIndex::build(e.values());
        assert_eq!(tree_distance(&e, &idx, 2, 4).unwrap(), 0.5);
        assert_eq!(tree_distance(&e, &idx, 2, 6).unwrap(), 0.0);
        assert_eq!(tree_distance(&e, &idx, 3, 3).unwrap(), 0.0);
        assert!(matches!(tree_distance(&e, &idx, 0, 9), Err(Error::IndexOutOfRange { index: 9, .. })));
    }

    #[test]
    fn zero_excursion_tree_is_a_point() {
        let t = ExcursionTree::new(Arc::new(Excursion::zero(64)));
        let mut rng = Stream::from_seed(3, "zero");
        for _ in 0..50 {
            let p = t.sample_point(&mut rng);
            let q = t.sample_point(&mut rng);
            assert_eq!(t.distance(&p, &q).unwrap(), 0.0);
        }
    }

    #[test]
    fn rmq_matches_linear_scan() {
        let mut rng = Stream::from_seed(4, "rmq");
        let e = sample_excursion(&mut rng, 5000).unwrap();
        let idx = RmqIndex::build(e.values());
        let h = e.values();
        for _ in 0..1000 {
            let a = rng.random_range(0..=5000);
            let b = rng.random_range(0..=5000);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let naive = h[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(idx.query(h, lo, hi), naive);
        }
    }

    #[test]
    fn metric_axioms_and_four_point_on_sampled_points() {
        let mut rng = Stream::from_seed(5, "axioms");
        let t = ExcursionTree::sample(&mut rng, 4096).unwrap();
        for _ in 0..500 {
            let p: Vec<PointRef> = (0..4).map(|_| t.sample_point(&mut rng)).collect();
            let d = |a: usize, b: usize| t.distance(&p[a], &p[b]).unwrap();
            for a in 0..4 {
                assert_eq!(d(a, a), 0.0);
                for b in 0..4 {
                    assert!(d(a, b) >= 0.0);
                    assert_eq!(d(a, b), d(b, a));
                    for c in 0..4 {
                        assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
                    }
                }
            }
            let mut sums = [d(0, 1) + d(2, 3), d(0, 2) + d(1, 3), d(0, 3) + d(1, 2)];
            sums.sort_by(f64::total_cmp);
            assert!((sums[2] - sums[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let mut rng = Stream::from_seed(6, "io");
        let e = sample_excursion(&mut rng, 257).unwrap();
        let mut csv = Vec::new();
        e.write_csv(&mut csv).unwrap();
        assert_eq!(Excursion::read_csv(&csv[..]).unwrap(), e);
        let mut bin = Vec::new();
        e.write_binary(&mut bin).unwrap();
        assert_eq!(Excursion::read_binary(&bin).unwrap(), e);
        assert!(matches!(Excursion::read_binary(&bin[..bin.len() - 3]), Err(Error::Parse { .. })));
        let truncated = &csv[..csv.len() / 2];
        assert!(matches!(Excursion::read_csv(truncated), Err(Error::Parse { .. })));
    }

    #[test]
    fn invalid_excursions_rejected() {
        assert!(Excursion::new(vec![0.0, -0.1, 0.0]).is_err());
        assert!(Excursion::new(vec![0.1, 0.0]).is_err());
        assert!(Excursion::new(vec![0.0]).is_err());
    }
}
