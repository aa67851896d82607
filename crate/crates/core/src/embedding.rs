//! Low-dimensional projections of a distance matrix.
//!
//! [`cca`] is Curvilinear Component Analysis: stochastic descent that moves
//! output points so their distances match the input distances, restricted to
//! pairs closer than a shrinking neighbourhood radius. [`classical_mds`] is
//! the linear eigen-decomposition projection used as its warm start and as a
//! cross-check.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::DistanceMatrix;

/// Annealing schedule for [`cca`]. Radius and step size decay geometrically
/// from their start to their end value over the epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcaSchedule {
    pub epochs: usize,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub rate_start: f64,
    pub rate_end: f64,
    pub seed: u64,
    /// Amplitude of the uniform noise added to the warm start, as a fraction
    /// of the mean input distance.
    pub init_noise: f64,
}

impl CcaSchedule {
    /// Defaults derived from the data: radius from the 90th to the 10th
    /// percentile of the off-diagonal distances, step from 0.5 to 0.01, 50
    /// epochs.
    pub fn for_distances(dm: &DistanceMatrix, seed: u64) -> Self {
        let mut u = dm.upper();
        u.sort_by(f64::total_cmp);
        let pct = |p: f64| {
            if u.is_empty() {
                1.0
            } else {
                u[((u.len() - 1) as f64 * p).round() as usize]
            }
        };
        let hi = pct(0.9).max(f64::MIN_POSITIVE);
        let lo = pct(0.1).clamp(f64::MIN_POSITIVE, hi);
        CcaSchedule {
            epochs: 50,
            lambda_start: hi,
            lambda_end: lo,
            rate_start: 0.5,
            rate_end: 0.01,
            seed,
            init_noise: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("cca needs at least one epoch"));
        }
        if !(self.lambda_end > 0.0 && self.lambda_start >= self.lambda_end && self.lambda_start.is_finite()) {
            return Err(Error::invalid("cca radius must satisfy lambda_start >= lambda_end > 0"));
        }
        if !(self.rate_end > 0.0 && self.rate_start >= self.rate_end && self.rate_start.is_finite()) {
            return Err(Error::invalid("cca rate must satisfy rate_start >= rate_end > 0"));
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return Err(Error::invalid("cca init noise must be non-negative"));
        }
        Ok(())
    }

    fn at(&self, epoch: usize) -> (f64, f64) {
        let f = if self.epochs > 1 {
            epoch as f64 / (self.epochs - 1) as f64
        } else {
            1.0
        };
        let geo = |a: f64, b: f64| a * (b / a).powf(f);
        (geo(self.lambda_start, self.lambda_end), geo(self.rate_start, self.rate_end))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    /// One row per input point, `d` columns.
    pub coords: Vec<Vec<f64>>,
    pub schedule: Option<CcaSchedule>,
    /// RMS of (input - output) distance over pairs inside the final radius
    /// (all pairs for MDS).
    pub final_stress: f64,
    /// Per-epoch stress, CCA only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stress_history: Vec<f64>,
}

impl EmbeddingResult {
    pub fn dim(&self) -> usize {
        self.coords.first().map_or(0, Vec::len)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclid(&self.coords[i], &self.coords[j])
    }

    /// One row per point: `id,c1,..,cd`.
    pub fn write_csv<W: Write>(&self, ids: &[u64], mut w: W) -> Result<()> {
        write!(w, "id")?;
        for k in 1..=self.dim() {
            write!(w, ",c{k}")?;
        }
        writeln!(w)?;
        for (id, row) in ids.iter().zip(&self.coords) {
            write!(w, "{id}")?;
            for v in row {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[inline]
fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_finite(dm: &DistanceMatrix) -> Result<()> {
    for i in 0..dm.len() {
        if dm.row(i).iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!("distance row {i} has a non-finite or negative entry")));
        }
    }
    Ok(())
}

/// Eigenvalues of the double-centred Gram matrix, in decreasing order, with
/// the matching eigenvectors as columns.
fn centred_gram_eigen(dm: &DistanceMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let n = dm.len();
    let sq = DMatrix::from_fn(n, n, |i, j| dm.get(i, j).powi(2));
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    (values, vectors)
}

/// Classical MDS spectrum (eigenvalues of the centred Gram matrix, decreasing).
pub fn mds_spectrum(dm: &DistanceMatrix) -> Result<Vec<f64>> {
    check_finite(dm)?;
    Ok(centred_gram_eigen(dm).0)
}

/// Share of positive spectral mass beyond the leading `k` components.
pub fn residual_variance(spectrum: &[f64], k: usize) -> f64 {
    let total: f64 = spectrum.iter().filter(|v| **v > 0.0).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let tail: f64 = spectrum.iter().skip(k).filter(|v| **v > 0.0).sum();
    tail / total
}

pub fn classical_mds(dm: &DistanceMatrix, d: usize) -> Result<EmbeddingResult> {
    if d == 0 {
        return Err(Error::invalid("embedding dimension must be at least 1"));
    }
    check_finite(dm)?;
    let n = dm.len();
    let (values, vectors) = centred_gram_eigen(dm);
    let mut coords = vec![vec![0.0; d]; n];
    for c in 0..d.min(n) {
        let scale = values[c].max(0.0).sqrt();
        let col = vectors.column(c);
        // Sign: largest-magnitude component positive (first on ties).
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][c] = sign * scale * col[i];
        }
    }
    let mut out = EmbeddingResult {
        coords,
        schedule: None,
        final_stress: 0.0,
        stress_history: Vec::new(),
    };
    out.final_stress = neighbourhood_stress(dm, &out.coords, f64::INFINITY);
    Ok(out)
}

fn neighbourhood_stress(dm: &DistanceMatrix, coords: &[Vec<f64>], lambda: f64) -> f64 {
    let n = dm.len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let y = euclid(&coords[i], &coords[j]);
            if y <= lambda {
                let e = dm.get(i, j) - y;
                sum += e * e;
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// Curvilinear Component Analysis, warm-started from classical MDS.
///
/// Each epoch visits every point once in a seeded random order; the visited
/// point stays fixed while every other point within the current radius moves
/// along their connecting line by `rate * (X_ij - Y_ij)`.
pub fn cca(dm: &DistanceMatrix, d: usize, schedule: &CcaSchedule) -> Result<EmbeddingResult> {
    schedule.validate()?;
    let mut y = classical_mds(dm, d)?.coords;
    let n = dm.len();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let noise = schedule.init_noise * dm.mean_off_diagonal();
    for row in &mut y {
        for v in row.iter_mut() {
            *v += noise * rng.random_range(-1.0..1.0);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(schedule.epochs);
    let mut delta = vec![0.0; d];
    for epoch in 0..schedule.epochs {
        let (lambda, rate) = schedule.at(epoch);
        order.shuffle(&mut rng);
        for &i in &order {
            let anchor = y[i].clone();
            for (j, yj) in y.iter_mut().enumerate() {
                if j == i {
                    continue;
                }
                let mut dist2 = 0.0;
                for k in 0..d {
                    delta[k] = yj[k] - anchor[k];
                    dist2 += delta[k] * delta[k];
                }
                let dist = dist2.sqrt();
                if dist == 0.0 || dist > lambda {
                    continue;
                }
                let step = rate * (dm.get(i, j) - dist) / dist;
                for k in 0..d {
                    yj[k] += step * delta[k];
                }
            }
        }
        history.push(neighbourhood_stress(dm, &y, lambda));
    }
    let final_stress = neighbourhood_stress(dm, &y, schedule.lambda_end);
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cca diverged"));
    }
    Ok(EmbeddingResult {
        coords: y,
        schedule: Some(*schedule),
        final_stress,
        stress_history: history,
    })
}

/// RMS distance between corresponding rows after the best rigid alignment
/// (translation plus orthogonal map, reflections allowed) of `b` onto `a`.
pub fn procrustes_residual(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid("procrustes needs two non-empty sets of equal size"));
    }
    let d = a[0].len().max(b[0].len());
    let n = a.len();
    let to_mat = |s: &[Vec<f64>]| DMatrix::from_fn(n, d, |i, k| s[i].get(k).copied().unwrap_or(0.0));
    let (mut ma, mut mb) = (to_mat(a), to_mat(b));
    for m in [&mut ma, &mut mb] {
        for k in 0..d {
            let mean = m.column(k).mean();
            m.column_mut(k).add_scalar_mut(-mean);
        }
    }
    let h = mb.transpose() * &ma;
    let svd = h.svd(true, true);
    let r = svd.u.unwrap() * svd.v_t.unwrap();
    let diff = mb * r - ma;
    Ok((diff.norm_squared() / n as f64).sqrt())
}

/// Indices of the `k` nearest neighbours of `i` under `dist`, ties broken by index.
fn knn(n: usize, i: usize, k: usize, dist: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    idx.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Mean Jaccard overlap between each point's `k`-nearest-neighbour set in the
/// input distances and in the embedding.
pub fn neighborhood_preservation(dm: &DistanceMatrix, emb: &EmbeddingResult, k: usize) -> Result<f64> {
    let n = dm.len();
    if emb.coords.len() != n {
        return Err(Error::DimensionMismatch {
            left: emb.coords.len(),
            right: n,
        });
    }
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k must lie in [1, {}]", n.saturating_sub(1))));
    }
    let mut total = 0.0;
    for i in 0..n {
        let a = knn(n, i, k, |j| dm.get(i, j));
        let b = knn(n, i, k, |j| emb.distance(i, j));
        let inter = a.iter().filter(|j| b.binary_search(j).is_ok()).count();
        total += inter as f64 / (2 * k - inter) as f64;
    }
    Ok(total / n as f64)
}
