//! Periodicity-aware distances on the motor torus and the modified
//! Hausdorff distance between sampled kernel manifolds.

use std::f64::consts::{PI, TAU};
use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::kernel::KernelManifold;
use crate::kinematics::N_JOINTS;

/// Default edge length of the square tiles the upper triangle is split into.
pub const DEFAULT_BLOCK: usize = 64;

const MATRIX_MAGIC: &[u8; 4] = b"SMDM";
const MATRIX_VERSION: u32 = 1;

/// Wraps a difference of canonical angles into [-π, π].
///
/// Follows the wrapping rule literally: `2π - u` above π and `-2π - u` below -π,
/// identity otherwise. The wrapped branches flip sign relative to the usual
/// `u ∓ 2π`, which is immaterial once squared.
#[inline(always)]
pub fn wrap_diff(u: f64) -> f64 {
    if u > PI {
        TAU - u
    } else if u < -PI {
        -TAU - u
    } else {
        u
    }
}

#[inline(always)]
pub fn canonical_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Distance between two motor configurations with every joint taken modulo 2π.
pub fn motor_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&p, &q)| {
            let u = wrap_diff(canonical_angle(p) - canonical_angle(q));
            u * u
        })
        .sum();
    Ok(s.sqrt())
}

#[inline(always)]
fn wrapped_sq(a: &[f64; N_JOINTS], b: &[f64; N_JOINTS]) -> f64 {
    let mut s = 0.0;
    for k in 0..N_JOINTS {
        let u = wrap_diff(a[k] - b[k]);
        s += u * u;
    }
    s
}

/// A manifold's samples reduced to [0, 2π) per joint, ready for the inner loops.
#[derive(Clone, Debug)]
pub struct CanonicalSet(Vec<[f64; N_JOINTS]>);

impl CanonicalSet {
    pub fn from_points(points: &[[f64; N_JOINTS]]) -> Self {
        CanonicalSet(
            points
                .iter()
                .map(|p| p.map(canonical_angle))
                .collect(),
        )
    }

    pub fn from_manifold(m: &KernelManifold) -> Self {
        CanonicalSet(
            m.samples
                .iter()
                .map(|p| p.0.map(canonical_angle))
                .collect(),
        )
    }

    pub fn points(&self) -> &[[f64; N_JOINTS]] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Squared directed distance max_a min_b g(a, b)².
///
/// An inner scan stops as soon as its running minimum drops below the current
/// outer maximum, since that point can no longer raise the result.
fn directed_sq(a: &[[f64; N_JOINTS]], b: &[[f64; N_JOINTS]]) -> f64 {
    let mut worst = 0.0_f64;
    for p in a {
        let mut best = f64::INFINITY;
        for q in b {
            let d = wrapped_sq(p, q);
            if d < best {
                best = d;
                if best < worst {
                    break;
                }
            }
        }
        if best > worst {
            worst = best;
        }
    }
    worst
}

fn directed_sq_exhaustive(a: &[[f64; N_JOINTS]], b: &[[f64; N_JOINTS]]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| wrapped_sq(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

pub fn hausdorff_canonical(a: &CanonicalSet, b: &CanonicalSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyManifold);
    }
    let ab = directed_sq(&a.0, &b.0);
    let ba = directed_sq(&b.0, &a.0);
    Ok(ab.max(ba).sqrt())
}

/// Modified Hausdorff distance between two kernel manifolds.
pub fn hausdorff(a: &KernelManifold, b: &KernelManifold) -> Result<f64> {
    hausdorff_canonical(&CanonicalSet::from_manifold(a), &CanonicalSet::from_manifold(b))
}

/// Same value as [`hausdorff_canonical`] computed with the plain double loop.
pub fn hausdorff_exhaustive(a: &CanonicalSet, b: &CanonicalSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyManifold);
    }
    let ab = directed_sq_exhaustive(&a.0, &b.0);
    let ba = directed_sq_exhaustive(&b.0, &a.0);
    Ok(ab.max(ba).sqrt())
}

/// Symmetric matrix of pairwise manifold distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    manifold_ids: Vec<u64>,
}

impl DistanceMatrix {
    /// Builds a matrix from the strict upper triangle (row-major, i < j).
    pub fn from_upper(n: usize, upper: &[f64], manifold_ids: Vec<u64>) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::invalid(format!(
                "{} upper-triangle entries for n = {n}",
                upper.len()
            )));
        }
        if manifold_ids.len() != n {
            return Err(Error::DimensionMismatch {
                left: manifold_ids.len(),
                right: n,
            });
        }
        let mut values = vec![0.0; n * n];
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().unwrap();
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Ok(DistanceMatrix {
            n,
            values,
            manifold_ids,
        })
    }

    /// Builds a matrix from a full row-major array; fails unless it is
    /// exactly symmetric with a zero diagonal.
    pub fn from_full(n: usize, values: Vec<f64>, manifold_ids: Vec<u64>) -> Result<Self> {
        if values.len() != n * n || manifold_ids.len() != n {
            return Err(Error::invalid("distance matrix shape mismatch"));
        }
        let dm = DistanceMatrix {
            n,
            values,
            manifold_ids,
        };
        for i in 0..n {
            if dm.get(i, i) != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at {i}")));
            }
            for j in i + 1..n {
                if dm.get(i, j).to_bits() != dm.get(j, i).to_bits() {
                    return Err(Error::invalid(format!("asymmetric entry ({i}, {j})")));
                }
            }
        }
        Ok(dm)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn manifold_ids(&self) -> &[u64] {
        &self.manifold_ids
    }

    /// Strict upper triangle, row-major.
    pub fn upper(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            out.extend_from_slice(&self.row(i)[i + 1..]);
        }
        out
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        let u = self.upper();
        if u.is_empty() {
            0.0
        } else {
            u.iter().sum::<f64>() / u.len() as f64
        }
    }

    /// Sub-matrix over the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> DistanceMatrix {
        let n = idx.len();
        let mut values = vec![0.0; n * n];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                values[a * n + b] = self.get(i, j);
            }
        }
        DistanceMatrix {
            n,
            values,
            manifold_ids: idx.iter().map(|&i| self.manifold_ids[i]).collect(),
        }
    }

    /// Compact binary form: magic, format version, `n`, the ids, then the
    /// strict upper triangle as little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MATRIX_MAGIC)?;
        w.write_all(&MATRIX_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for id in &self.manifold_ids {
            w.write_all(&id.to_le_bytes())?;
        }
        for v in self.upper() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MATRIX_MAGIC {
            return Err(Error::format("distance matrix", "bad magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != MATRIX_VERSION {
            return Err(Error::format("distance matrix", format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            ids.push(u64::from_le_bytes(b8));
        }
        let m = n * n.saturating_sub(1) / 2;
        let mut upper = Vec::with_capacity(m);
        for _ in 0..m {
            r.read_exact(&mut b8)?;
            upper.push(f64::from_le_bytes(b8));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::format("distance matrix", "trailing bytes"));
        }
        Self::from_upper(n, &upper, ids)
    }

    /// Full matrix as CSV with a header row of ids; values use shortest
    /// round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "id")?;
        for id in &self.manifold_ids {
            write!(w, ",{id}")?;
        }
        writeln!(w)?;
        for i in 0..self.n {
            write!(w, "{}", self.manifold_ids[i])?;
            for v in self.row(i) {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |reason: String| Error::format("distance matrix csv", reason);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let mut fields = header.split(',');
        if fields.next() != Some("id") {
            return Err(bad("header must start with `id`".into()));
        }
        let ids: Vec<u64> = fields
            .map(|f| f.trim().parse::<u64>().map_err(|e| bad(e.to_string())))
            .collect::<Result<_>>()?;
        let n = ids.len();
        let mut values = Vec::with_capacity(n * n);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let id: u64 = fields
                .next()
                .unwrap_or_default()
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            if ids.get(i) != Some(&id) {
                return Err(bad(format!("row {i} has id {id}")));
            }
            let row: Vec<f64> = fields
                .map(|f| f.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(bad(format!("row {i} has {} columns", row.len())));
            }
            values.extend(row);
        }
        Self::from_full(n, values, ids)
    }
}

fn check_uniform(sets: &[CanonicalSet]) -> Result<()> {
    if sets.len() < 2 {
        return Err(Error::invalid("distance matrix needs at least two manifolds"));
    }
    let count = sets[0].len();
    for (i, s) in sets.iter().enumerate() {
        if s.len() != count {
            return Err(Error::invalid(format!(
                "manifold {i} has {} samples, expected {count}",
                s.len()
            )));
        }
    }
    Ok(())
}

fn pair_distance(sets: &[CanonicalSet], i: usize, j: usize) -> Result<f64> {
    hausdorff_canonical(&sets[i], &sets[j]).map_err(|e| Error::Pair {
        i,
        j,
        source: Box::new(e),
    })
}

fn tile_values(sets: &[CanonicalSet], block: usize, bi: usize, bj: usize) -> Result<Vec<f64>> {
    let n = sets.len();
    let rows = bi * block..((bi + 1) * block).min(n);
    let cols = bj * block..((bj + 1) * block).min(n);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for i in rows {
        for j in cols.clone() {
            if j > i {
                out.push(pair_distance(sets, i, j)?);
            }
        }
    }
    Ok(out)
}

/// Pairwise distances over all manifolds, using the default tile size.
pub fn distance_matrix(manifolds: &[KernelManifold]) -> Result<DistanceMatrix> {
    let ids = (0..manifolds.len() as u64).collect();
    distance_matrix_tiled(manifolds, ids, DEFAULT_BLOCK)
}

/// Pairwise distances with the upper triangle split into `block`×`block`
/// tiles. Tiles run on the current rayon pool when the `parallel` feature is
/// on; each tile writes a disjoint set of entries, so the result does not
/// depend on the schedule.
pub fn distance_matrix_tiled(
    manifolds: &[KernelManifold],
    manifold_ids: Vec<u64>,
    block: usize,
) -> Result<DistanceMatrix> {
    if block == 0 {
        return Err(Error::invalid("block size must be positive"));
    }
    let sets: Vec<CanonicalSet> = manifolds.iter().map(CanonicalSet::from_manifold).collect();
    check_uniform(&sets)?;
    let n = sets.len();
    let nb = n.div_ceil(block);
    let tiles: Vec<(usize, usize)> = (0..nb)
        .flat_map(|bi| (bi..nb).map(move |bj| (bi, bj)))
        .collect();

    #[cfg(feature = "parallel")]
    let computed: Vec<Result<Vec<f64>>> = {
        use rayon::prelude::*;
        tiles
            .par_iter()
            .map(|&(bi, bj)| tile_values(&sets, block, bi, bj))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let computed: Vec<Result<Vec<f64>>> = tiles
        .iter()
        .map(|&(bi, bj)| tile_values(&sets, block, bi, bj))
        .collect();

    let mut values = vec![0.0; n * n];
    for (&(bi, bj), tile) in tiles.iter().zip(computed) {
        let mut it = tile?.into_iter();
        for i in bi * block..((bi + 1) * block).min(n) {
            for j in bj * block..((bj + 1) * block).min(n) {
                if j > i {
                    let v = it.next().unwrap();
                    values[i * n + j] = v;
                    values[j * n + i] = v;
                }
            }
        }
    }
    Ok(DistanceMatrix {
        n,
        values,
        manifold_ids,
    })
}

/// Reference implementation: one thread, plain double loops, no pruning.
pub fn distance_matrix_serial(manifolds: &[KernelManifold]) -> Result<DistanceMatrix> {
    let sets: Vec<CanonicalSet> = manifolds.iter().map(CanonicalSet::from_manifold).collect();
    check_uniform(&sets)?;
    let n = sets.len();
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            upper.push(hausdorff_exhaustive(&sets[i], &sets[j]).map_err(|e| Error::Pair {
                i,
                j,
                source: Box::new(e),
            })?);
        }
    }
    DistanceMatrix::from_upper(n, &upper, (0..n as u64).collect())
}
