//! Symmetric tensor algebra over R^d: storage against sorted multi-indices,
//! symmetric powers and products, multilinear evaluation, metric
//! contraction, and the residual of the McMullen linear relations.
//!
//! Components are stored once per non-decreasing multi-index; multinomial
//! multiplicities enter at evaluation time, never in storage, so equality
//! and comparison are unambiguous.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Index of a Minkowski tensor: curvature-measure degree `k`, position
/// exponent `r`, normal exponent `s`.
///
/// Volume tensors (`k == d`) carry no normal part, so `s == 0` there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TensorIndex {
    pub k: u32,
    pub r: u32,
    pub s: u32,
}

impl TensorIndex {
    pub fn new(k: u32, r: u32, s: u32) -> Self {
        TensorIndex { k, r, s }
    }

    pub fn rank(&self) -> usize {
        (self.r + self.s) as usize
    }
}

/// A symmetric tensor of the given rank over R^dim.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor {
    dim: usize,
    rank: usize,
    comps: Vec<f64>,
}

/// All non-decreasing multi-indices of length `rank` over `0..dim`, in
/// lexicographic order. This fixes the storage layout of [`SymTensor`].
pub fn multi_indices(dim: usize, rank: usize) -> Vec<Vec<u8>> {
    multi_indices_cached(dim, rank).to_vec()
}

const MAX_DIM: usize = 3;
const MAX_RANK: usize = 8;

/// Cached multi-index tables for the dimensions and ranks in play.
fn multi_indices_cached(dim: usize, rank: usize) -> &'static [Vec<u8>] {
    use std::sync::OnceLock;
    static TABLES: OnceLock<Vec<Vec<Vec<Vec<u8>>>>> = OnceLock::new();
    assert!(
        (1..=MAX_DIM).contains(&dim) && rank <= MAX_RANK,
        "multi-index table supports dim 1..=3, rank 0..=8 (got {dim}, {rank})"
    );
    let tables = TABLES.get_or_init(|| {
        (0..=MAX_DIM)
            .map(|d| (0..=MAX_RANK).map(|r| build_multi_indices(d.max(1), r)).collect())
            .collect()
    });
    &tables[dim][rank]
}

fn build_multi_indices(dim: usize, rank: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(rank);
    fn rec(dim: usize, rank: usize, start: u8, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == rank {
            out.push(cur.clone());
            return;
        }
        for i in start..dim as u8 {
            cur.push(i);
            rec(dim, rank, i, cur, out);
            cur.pop();
        }
    }
    rec(dim, rank, 0, &mut cur, &mut out);
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num = 1usize;
    for i in 0..k {
        num = num * (n - i) / (i + 1);
    }
    num
}

/// Number of stored components: C(dim + rank - 1, rank).
pub fn component_count(dim: usize, rank: usize) -> usize {
    binomial(dim + rank - 1, rank)
}

impl SymTensor {
    /// Zero tensor.
    pub fn zeros(dim: usize, rank: usize) -> Self {
        assert!(dim >= 1, "dim must be at least 1");
        SymTensor {
            dim,
            rank,
            comps: vec![0.0; component_count(dim, rank)],
        }
    }

    /// Rank-0 tensor holding a scalar.
    pub fn scalar(dim: usize, value: f64) -> Self {
        let mut t = SymTensor::zeros(dim, 0);
        t.comps[0] = value;
        t
    }

    /// The metric tensor Q (identity bilinear form).
    pub fn metric(dim: usize) -> Self {
        let mut t = SymTensor::zeros(dim, 2);
        for i in 0..dim {
            t.set(&[i as u8, i as u8], 1.0);
        }
        t
    }

    /// r-fold symmetric power of a vector: component at a sorted
    /// multi-index is the plain product of the entries.
    pub fn sym_pow(x: &[f64], r: usize) -> Self {
        let dim = x.len();
        let mut t = SymTensor::zeros(dim, r);
        for (slot, mi) in multi_indices(dim, r).into_iter().enumerate() {
            t.comps[slot] = mi.iter().map(|&i| x[i as usize]).product();
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Storage slot of a (not necessarily sorted) multi-index.
    fn slot(&self, idx: &[u8]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        // Lexicographic rank of the sorted index among non-decreasing
        // sequences; linear scan of the cached table is fine at these ranks.
        multi_indices_cached(self.dim, self.rank)
            .iter()
            .position(|m| m[..] == sorted[..])
            .expect("multi-index within range")
    }

    pub fn get(&self, idx: &[u8]) -> f64 {
        self.comps[self.slot(idx)]
    }

    pub fn set(&mut self, idx: &[u8], value: f64) {
        let s = self.slot(idx);
        self.comps[s] = value;
    }

    pub fn components(&self) -> &[f64] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [f64] {
        &mut self.comps
    }

    /// Multilinear evaluation on `rank` vectors.
    pub fn eval(&self, args: &[&[f64]]) -> Result<f64> {
        if args.len() != self.rank {
            return Err(Error::Tensor(format!(
                "eval needs {} arguments, got {}",
                self.rank,
                args.len()
            )));
        }
        for a in args {
            if a.len() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    got: a.len(),
                });
            }
        }
        if self.rank == 0 {
            return Ok(self.comps[0]);
        }
        // Sum over all d^rank full index tuples.
        let mut tuple = vec![0u8; self.rank];
        let mut sum = 0.0;
        loop {
            let mut prod = self.get(&tuple);
            if prod != 0.0 {
                for (k, &j) in tuple.iter().enumerate() {
                    prod *= args[k][j as usize];
                }
                sum += prod;
            }
            // Odometer increment.
            let mut pos = self.rank;
            loop {
                if pos == 0 {
                    return Ok(sum);
                }
                pos -= 1;
                tuple[pos] += 1;
                if (tuple[pos] as usize) < self.dim {
                    break;
                }
                tuple[pos] = 0;
            }
        }
    }

    /// Contraction of the last two slots against the metric.
    pub fn trace_contract(&self) -> Result<SymTensor> {
        if self.rank < 2 {
            return Err(Error::Tensor(format!(
                "trace_contract needs rank >= 2, got {}",
                self.rank
            )));
        }
        let mut out = SymTensor::zeros(self.dim, self.rank - 2);
        for mi in multi_indices(self.dim, self.rank - 2) {
            let mut v = 0.0;
            let mut full = mi.clone();
            full.push(0);
            full.push(0);
            for j in 0..self.dim as u8 {
                let n = full.len();
                full[n - 2] = j;
                full[n - 1] = j;
                v += self.get(&full);
            }
            out.set(&mi, v);
        }
        Ok(out)
    }

    /// Normalized symmetric tensor product, i.e. the product of the
    /// associated polynomials: eval of the result on (w,..,w) equals the
    /// product of the factors' evals.
    pub fn sym_product(&self, other: &SymTensor) -> Result<SymTensor> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let (p, q) = (self.rank, other.rank);
        let mut out = SymTensor::zeros(self.dim, p + q);
        let norm = binomial(p + q, p) as f64;
        for (slot, alpha) in multi_indices(self.dim, p + q).into_iter().enumerate() {
            let mut sum = 0.0;
            // All ways to hand p of the slots to `self`.
            for mask in 0u32..(1 << (p + q)) {
                if mask.count_ones() as usize != p {
                    continue;
                }
                let mut left = Vec::with_capacity(p);
                let mut right = Vec::with_capacity(q);
                for (bit, &i) in alpha.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        left.push(i);
                    } else {
                        right.push(i);
                    }
                }
                sum += self.get(&left) * other.get(&right);
            }
            out.comps[slot] = sum / norm;
        }
        Ok(out)
    }

    pub fn add(&self, other: &SymTensor) -> Result<SymTensor> {
        if self.dim != other.dim || self.rank != other.rank {
            return Err(Error::Tensor("add: shape mismatch".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.comps.iter_mut().zip(&other.comps) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> SymTensor {
        let mut out = self.clone();
        for a in &mut out.comps {
            *a *= factor;
        }
        out
    }

    /// Max-norm over distinct stored components.
    pub fn max_norm(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Max-norm of the component-wise difference.
    pub fn max_component_diff(&self, other: &SymTensor) -> Result<f64> {
        if self.dim != other.dim || self.rank != other.rank {
            return Err(Error::Tensor("compare: shape mismatch".into()));
        }
        Ok(self
            .comps
            .iter()
            .zip(&other.comps)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Text record: dim, rank, then one line per sorted multi-index
    /// (1-based) with its value at 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "dim {}", self.dim).unwrap();
        writeln!(s, "rank {}", self.rank).unwrap();
        for (slot, mi) in multi_indices(self.dim, self.rank).into_iter().enumerate() {
            for i in &mi {
                write!(s, "{} ", i + 1).unwrap();
            }
            writeln!(s, "{:.16e}", self.comps[slot]).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<SymTensor> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let parse_header = |line: Option<&str>, key: &str| -> Result<usize> {
            let line = line.ok_or_else(|| Error::Tensor("truncated tensor record".into()))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::Tensor(format!("expected `{key}` line")));
            }
            it.next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Tensor(format!("bad `{key}` value")))
        };
        let dim = parse_header(lines.next(), "dim")?;
        let rank = parse_header(lines.next(), "rank")?;
        if dim == 0 {
            return Err(Error::Tensor("dim must be >= 1".into()));
        }
        let mut t = SymTensor::zeros(dim, rank);
        for (slot, line) in lines.enumerate() {
            if slot >= t.comps.len() {
                return Err(Error::Tensor("too many component lines".into()));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != rank + 1 {
                return Err(Error::Tensor(format!("bad component line `{line}`")));
            }
            let mut mi = Vec::with_capacity(rank);
            for f in &fields[..rank] {
                let i: usize = f
                    .parse()
                    .map_err(|_| Error::Tensor(format!("bad index `{f}`")))?;
                if i < 1 || i > dim {
                    return Err(Error::Tensor(format!("index {i} out of 1..{dim}")));
                }
                mi.push((i - 1) as u8);
            }
            let v: f64 = fields[rank]
                .parse()
                .map_err(|_| Error::Tensor(format!("bad value in `{line}`")))?;
            t.set(&mi, v);
        }
        Ok(t)
    }
}

/// Family members that must be supplied (with nonzero coefficient) to
/// evaluate the McMullen relation at (k, r) in dimension `dim`.
pub fn mcmullen_required(dim: usize, k: u32, r: u32) -> Vec<TensorIndex> {
    let d = dim as i64;
    let mut need = Vec::new();
    for s in 1..=r {
        let kk = k as i64 - r as i64 + s as i64;
        // k-index d with s > 0 is undefined (zero by convention); outside
        // 0..=d undefined as well.
        if kk >= 0 && kk < d {
            need.push(TensorIndex::new(kk as u32, r - s, s));
        }
    }
    for s in 2..=r {
        let kk = k as i64 - r as i64 + s as i64;
        if kk >= 0 && kk < d || (kk == d && s == 2) {
            need.push(TensorIndex::new(kk as u32, r - s, s - 2));
        }
    }
    need.sort();
    need.dedup();
    need
}

/// Max-norm residual of the McMullen relation
/// `2 pi sum_s s T[k-r+s, r-s, s]  -  Q sum_s T[k-r+s, r-s, s-2]`
/// over the supplied family, with indices that are undefined by convention
/// treated as zero.
///
/// The identity holds for tensors in the support-measure normalization.
/// Surface tensors (`k == d-1`) in this crate carry the full boundary
/// measure, twice the support-measure value, and are rescaled internally.
pub fn mcmullen_residual(
    dim: usize,
    k: u32,
    r: u32,
    family: &BTreeMap<TensorIndex, SymTensor>,
) -> Result<f64> {
    let d = dim as i64;
    let rank = r as usize;
    let fetch = |idx: TensorIndex| -> Result<SymTensor> {
        let t = family
            .get(&idx)
            .ok_or(Error::MissingFamilyMember {
                k: idx.k as i64,
                r: idx.r,
                s: idx.s,
            })?
            .clone();
        if t.dim() != dim || t.rank() != idx.rank() {
            return Err(Error::Tensor(format!(
                "family member ({},{},{}) has wrong shape",
                idx.k, idx.r, idx.s
            )));
        }
        Ok(if idx.k as i64 == d - 1 { t.scale(0.5) } else { t })
    };

    let mut lhs = SymTensor::zeros(dim, rank);
    for s in 1..=r {
        let kk = k as i64 - r as i64 + s as i64;
        if kk < 0 || kk >= d {
            continue; // undefined or volume-with-normal-part: zero
        }
        let t = fetch(TensorIndex::new(kk as u32, r - s, s))?;
        lhs = lhs.add(&t.scale(2.0 * PI * s as f64))?;
    }

    let mut rhs_inner = SymTensor::zeros(dim, rank.saturating_sub(2));
    let mut any_rhs = false;
    for s in 2..=r {
        let kk = k as i64 - r as i64 + s as i64;
        let defined = (kk >= 0 && kk < d) || (kk == d && s == 2);
        if !defined {
            continue;
        }
        let t = fetch(TensorIndex::new(kk as u32, r - s, s - 2))?;
        rhs_inner = rhs_inner.add(&t)?;
        any_rhs = true;
    }

    let residual = if any_rhs {
        let rhs = SymTensor::metric(dim).sym_product(&rhs_inner)?;
        lhs.add(&rhs.scale(-1.0))?
    } else {
        lhs
    };
    Ok(residual.max_norm())
}
