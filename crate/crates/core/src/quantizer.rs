//! Per-modality K-means codebooks.
//!
//! Codebook file layout (little-endian):
//!
//! ```text
//! "TPCBK1" | modality: u8 | k: u32 | dim: u32 | k·dim × f32 centroids | inertia: f64
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::EmbeddingMatrix;
use crate::Modality;

const MAGIC: &[u8; 6] = b"TPCBK1";

#[derive(Debug, thiserror::Error)]
pub enum QuantizerError {
    #[error("cannot fit {k} clusters on {rows} rows")]
    TooFewRows { k: usize, rows: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("vector has dimension {got}, codebook expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("not a codebook file (bad magic)")]
    BadMagic,
    #[error("codebook file truncated or malformed")]
    Truncated,
    #[error("unknown modality byte {0}")]
    BadModality(u8),
    #[error("non-finite centroid value")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    modality: Modality,
    k: usize,
    dim: usize,
    centroids: Vec<f32>,
    inertia: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the largest centroid displacement (Euclidean) drops below this.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 16,
            seed: 0,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// A fitted codebook plus the per-iteration objective trace.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Sum of squared distances after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Codebook {
    pub fn from_centroids(
        modality: Modality,
        dim: usize,
        centroids: Vec<f32>,
        inertia: f64,
    ) -> Result<Self, QuantizerError> {
        if dim == 0 || centroids.is_empty() || centroids.len() % dim != 0 {
            return Err(QuantizerError::ZeroK);
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(QuantizerError::NonFinite);
        }
        Ok(Self {
            modality,
            k: centroids.len() / dim,
            dim,
            centroids,
            inertia,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest centroid by squared Euclidean distance; ties go to the lower index.
    pub fn assign(&self, vector: &[f32]) -> Result<usize, QuantizerError> {
        if vector.len() != self.dim {
            return Err(QuantizerError::DimMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..self.k {
            let d: f64 = self
                .centroid(c)
                .iter()
                .zip(vector)
                .map(|(a, b)| {
                    let diff = *a as f64 - *b as f64;
                    diff * diff
                })
                .sum();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        Ok(best)
    }

    pub fn save(&self, path: &Path) -> Result<(), QuantizerError> {
        let mut buf = Vec::with_capacity(23 + self.centroids.len() * 4);
        buf.extend_from_slice(MAGIC);
        buf.push(self.modality.code());
        buf.extend_from_slice(&(self.k as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.centroids {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.inertia.to_le_bytes());
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, QuantizerError> {
        Self::decode(&std::fs::read(path)?)
    }

    fn decode(bytes: &[u8]) -> Result<Self, QuantizerError> {
        if bytes.len() < 15 {
            return Err(if bytes.len() >= 6 && &bytes[..6] != MAGIC {
                QuantizerError::BadMagic
            } else {
                QuantizerError::Truncated
            });
        }
        if &bytes[..6] != MAGIC {
            return Err(QuantizerError::BadMagic);
        }
        let modality = Modality::from_code(bytes[6]).ok_or(QuantizerError::BadModality(bytes[6]))?;
        let k = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
        let body = k
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or(QuantizerError::Truncated)?;
        if bytes.len() != 15 + body + 8 || k == 0 || dim == 0 {
            return Err(QuantizerError::Truncated);
        }
        let centroids = bytes[15..15 + body]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let inertia = f64::from_le_bytes(bytes[15 + body..].try_into().unwrap());
        Self::from_centroids(modality, dim, centroids, inertia)
    }
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// An empty cluster is reseeded to the point farthest from its assigned
/// centroid, so with at least `k` distinct points every cluster ends up
/// non-empty.
pub fn fit_kmeans(matrix: &EmbeddingMatrix, params: &KMeansParams) -> Result<KMeansFit, QuantizerError> {
    let k = params.k;
    if k == 0 {
        return Err(QuantizerError::ZeroK);
    }
    let n = matrix.len();
    if n < k || n == 0 {
        return Err(QuantizerError::TooFewRows { k, rows: n });
    }
    let dim = matrix.dim();
    let points: Vec<f64> = matrix.as_flat().iter().map(|&v| v as f64).collect();
    let point = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = plus_plus_init(&points, dim, k, &mut rng);
    let mut assignment = vec![0usize; n];
    let mut dists = vec![0f64; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        // assignment step
        let mut inertia = 0.0;
        for i in 0..n {
            let (best, d) = nearest(&centroids, dim, point(i));
            assignment[i] = best;
            dists[i] = d;
            inertia += d;
        }
        trace.push(inertia);
        if iterations >= params.max_iters {
            break;
        }
        iterations += 1;

        // update step
        let mut sums = vec![0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(point(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // Repair: steal the worst-served point whose cluster can spare it.
            let victim = (0..n)
                .filter(|&i| !taken[i] && counts[assignment[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = victim {
                let from = assignment[i];
                counts[from] -= 1;
                for (s, v) in sums[from * dim..(from + 1) * dim].iter_mut().zip(point(i)) {
                    *s -= v;
                }
                sums[c * dim..(c + 1) * dim].copy_from_slice(point(i));
                counts[c] = 1;
                assignment[i] = c;
                taken[i] = true;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let new: Vec<f64> = sums[c * dim..(c + 1) * dim].iter().map(|s| s * inv).collect();
            shift = shift.max(sq_dist(&new, &centroids[c * dim..(c + 1) * dim]).sqrt());
            centroids[c * dim..(c + 1) * dim].copy_from_slice(&new);
        }
        if shift < params.tol {
            let mut inertia = 0.0;
            for i in 0..n {
                inertia += nearest(&centroids, dim, point(i)).1;
            }
            trace.push(inertia);
            break;
        }
    }

    let inertia = *trace.last().expect("at least one assignment step");
    let codebook = Codebook::from_centroids(
        matrix.modality(),
        dim,
        centroids.iter().map(|&v| v as f32).collect(),
        inertia,
    )?;
    Ok(KMeansFit {
        codebook,
        inertia_trace: trace,
        iterations,
    })
}

fn nearest(centroids: &[f64], dim: usize, p: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, cen) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(cen, p);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

fn plus_plus_init(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(point(i), point(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(point(chosen));
        let c = &centroids[centroids.len() - dim..];
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(point(i), c));
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn matrix(rows: &[Vec<f32>]) -> EmbeddingMatrix {
        let mut m = EmbeddingMatrix::new(Modality::Audio, rows[0].len()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            m.push(format!("t{i}"), r).unwrap();
        }
        m
    }

    #[test]
    fn square_corners_are_their_own_centroids() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let fit = fit_kmeans(&matrix(&pts), &KMeansParams { k: 4, ..Default::default() }).unwrap();
        assert_eq!(fit.codebook.inertia(), 0.0);
        let mut cs: Vec<Vec<f32>> = (0..4).map(|i| fit.codebook.centroid(i).to_vec()).collect();
        cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected = pts.clone();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(cs, expected);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f32>> = (0..37)
            .map(|_| (0..5).map(|_| rng.random_range(-3.0f32..3.0)).collect())
            .collect();
        let fit = fit_kmeans(&matrix(&pts), &KMeansParams { k: 1, ..Default::default() }).unwrap();
        for j in 0..5 {
            let mean = pts.iter().map(|p| p[j] as f64).sum::<f64>() / pts.len() as f64;
            assert!((fit.codebook.centroid(0)[j] as f64 - mean).abs() < 1e-5);
        }
    }

    #[test]
    fn too_few_rows_and_zero_k() {
        let pts = vec![vec![0.0f32, 0.0]];
        assert!(matches!(
            fit_kmeans(&matrix(&pts), &KMeansParams { k: 2, ..Default::default() }),
            Err(QuantizerError::TooFewRows { .. })
        ));
        assert!(matches!(
            fit_kmeans(&matrix(&pts), &KMeansParams { k: 0, ..Default::default() }),
            Err(QuantizerError::ZeroK)
        ));
        let empty = EmbeddingMatrix::new(Modality::Audio, 2).unwrap();
        assert!(fit_kmeans(&empty, &KMeansParams { k: 1, ..Default::default() }).is_err());
    }

    #[test]
    fn assign_exact_and_ties() {
        let cb = Codebook::from_centroids(
            Modality::Metadata,
            1,
            vec![-5.0, 0.0, 2.0, 7.0],
            0.0,
        )
        .unwrap();
        assert_eq!(cb.assign(&[7.0]).unwrap(), 3);
        assert_eq!(cb.assign(&[1.0]).unwrap(), 1);
        assert!(matches!(cb.assign(&[1.0, 2.0]), Err(QuantizerError::DimMismatch { .. })));
    }

    #[test]
    fn all_clusters_nonempty_with_duplicate_heavy_input() {
        // 40 copies of one point plus 5 distinct others, k = 6.
        let mut pts: Vec<Vec<f32>> = (0..40).map(|_| vec![0.0, 0.0]).collect();
        for i in 1..=5 {
            pts.push(vec![i as f32 * 0.01, 0.0]);
        }
        for seed in 0..10 {
            let m = matrix(&pts);
            let fit = fit_kmeans(&m, &KMeansParams { k: 6, seed, ..Default::default() }).unwrap();
            let mut used = vec![false; 6];
            for (_, row) in m.rows() {
                used[fit.codebook.assign(row).unwrap()] = true;
            }
            assert!(used.iter().all(|u| *u), "seed {seed}");
        }
    }

    #[test]
    fn codebook_file_round_trip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(0.0f32, 1.0).unwrap();
        let pts: Vec<Vec<f32>> = (0..200).map(|_| (0..8).map(|_| normal.sample(&mut rng)).collect()).collect();
        let fit = fit_kmeans(&matrix(&pts), &KMeansParams { k: 5, seed: 4, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audio.cbk");
        fit.codebook.save(&path).unwrap();
        let loaded = Codebook::load(&path).unwrap();
        assert_eq!(loaded, fit.codebook);
        let probes: Vec<Vec<f32>> = (0..100).map(|_| (0..8).map(|_| normal.sample(&mut rng)).collect()).collect();
        for p in &probes {
            assert_eq!(loaded.assign(p).unwrap(), fit.codebook.assign(p).unwrap());
        }

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(Codebook::load(&path), Err(QuantizerError::Truncated)));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(Codebook::load(&path), Err(QuantizerError::BadMagic)));
    }
}
