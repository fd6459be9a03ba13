//! Two-sample distances between empirical distributions.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::noise::{NoiseStream, Purpose};

/// Row-major set of `len()` points in `dim` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(domain("SampleSet::from_rows", "rows differ in length"));
        }
        Self::new(dim, rows.concat())
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

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn project(&self, u: &[f64]) -> Vec<f64> {
        self.rows().map(|r| r.iter().zip(u).map(|(a, b)| a * b).sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    SlicedWasserstein,
    EnergyDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub value: f64,
    pub n_samples: usize,
    pub n_projections: usize,
    pub seed: u64,
}

/// Sum with pairwise (cascade) reduction; rounding grows like `log n`.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Squared 2-Wasserstein distance between two 1D empirical distributions,
/// integrating the squared quantile difference exactly.
pub fn wasserstein2_sq_1d(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let terms: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).collect();
        return pairwise_sum(&terms) / a.len() as f64;
    }
    let (n, m) = (a.len(), b.len());
    let mut terms = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0.0f64;
    while i < n && j < m {
        // next quantile breakpoint, compared as exact rationals
        let (na, nb) = ((i + 1) * m, (j + 1) * n);
        let next = na.min(nb) as f64 / (n * m) as f64;
        let diff = a[i] - b[j];
        terms.push((next - prev) * diff * diff);
        prev = next;
        if na <= nb {
            i += 1;
        }
        if nb <= na {
            j += 1;
        }
    }
    pairwise_sum(&terms)
}

fn check_pair(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.is_empty() || b.is_empty() {
        return Err(domain("metric", "sample sets must be non-empty"));
    }
    Ok(())
}

/// Random unit directions, reproducible from `seed`.
pub fn projection_directions(dim: usize, n_projections: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut stream = NoiseStream::new(seed, Purpose::Projection, 0);
    (0..n_projections)
        .map(|_| loop {
            let mut u = vec![0.0; dim];
            stream.step_normals(&mut u);
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                u.iter_mut().for_each(|v| *v /= norm);
                break u;
            }
        })
        .collect()
}

/// Mean over projections of the 1D 2-Wasserstein distance.
pub fn sliced_wasserstein_with(a: &SampleSet, b: &SampleSet, directions: &[Vec<f64>]) -> Result<f64> {
    check_pair(a, b)?;
    if directions.is_empty() {
        return Err(domain("sliced_wasserstein", "need at least one projection"));
    }
    let per: Vec<f64> = directions
        .iter()
        .map(|u| wasserstein2_sq_1d(a.project(u), b.project(u)).sqrt())
        .collect();
    Ok(pairwise_sum(&per) / per.len() as f64)
}

pub fn sliced_wasserstein(a: &SampleSet, b: &SampleSet, n_projections: usize, seed: u64) -> Result<MetricReport> {
    check_pair(a, b)?;
    let dirs = projection_directions(a.dim(), n_projections, seed);
    Ok(MetricReport {
        metric: MetricKind::SlicedWasserstein,
        value: sliced_wasserstein_with(a, b, &dirs)?,
        n_samples: a.len().min(b.len()),
        n_projections,
        seed,
    })
}

fn mean_distance(a: &SampleSet, b: &SampleSet) -> f64 {
    let rows: Vec<f64> = a
        .rows()
        .map(|x| {
            let d: Vec<f64> = b
                .rows()
                .map(|y| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
                .collect();
            pairwise_sum(&d)
        })
        .collect();
    pairwise_sum(&rows) / (a.len() * b.len()) as f64
}

/// `2 E|X - Y| - E|X - X'| - E|Y - Y'|` over all pairs (V-statistic, so
/// identical sets give exactly 0 up to rounding).
pub fn energy_distance(a: &SampleSet, b: &SampleSet) -> Result<MetricReport> {
    check_pair(a, b)?;
    let value = 2.0 * mean_distance(a, b) - mean_distance(a, a) - mean_distance(b, b);
    Ok(MetricReport {
        metric: MetricKind::EnergyDistance,
        value: value.max(0.0),
        n_samples: a.len().min(b.len()),
        n_projections: 0,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_1d(n: usize, mean: f64, seed: u64) -> SampleSet {
        let mut s = NoiseStream::new(seed, Purpose::Prior, 0);
        SampleSet::new(1, (0..n).map(|_| mean + s.normal()).collect()).unwrap()
    }

    #[test]
    fn identical_sets_are_zero() {
        let a = gaussian_1d(500, 0.0, 1);
        assert_eq!(sliced_wasserstein(&a, &a, 16, 0).unwrap().value, 0.0);
        assert!(energy_distance(&a, &a).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn axis_shift_is_recovered() {
        let mut s = NoiseStream::new(3, Purpose::Prior, 0);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![s.normal(), s.normal()]).collect();
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] + 0.7, r[1]]).collect();
        let (a, b) = (
            SampleSet::from_rows(&rows).unwrap(),
            SampleSet::from_rows(&shifted).unwrap(),
        );
        let v = sliced_wasserstein_with(&a, &b, &[vec![1.0, 0.0]]).unwrap();
        assert!((v - 0.7).abs() < 1e-12);
        let v = sliced_wasserstein_with(&a, &b, &[vec![0.0, 1.0]]).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn unit_gaussian_shift() {
        let a = gaussian_1d(10_000, 0.0, 1);
        let b = gaussian_1d(10_000, 1.0, 2);
        let v = sliced_wasserstein(&a, &b, 8, 0).unwrap().value;
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn unequal_sizes_match_replicated_equal_sizes() {
        let a = vec![0.0, 1.0, 5.0];
        let b = vec![2.0, 3.0];
        // replicate to a common size of 6
        let a6 = vec![0.0, 0.0, 1.0, 1.0, 5.0, 5.0];
        let b6 = vec![2.0, 2.0, 2.0, 3.0, 3.0, 3.0];
        let x = wasserstein2_sq_1d(a, b);
        let y = wasserstein2_sq_1d(a6, b6);
        assert!((x - y).abs() < 1e-14);
    }

    #[test]
    fn symmetric_and_seeded() {
        let a = gaussian_1d(300, 0.0, 4);
        let b = gaussian_1d(300, 0.3, 5);
        let ab = sliced_wasserstein(&a, &b, 32, 7).unwrap().value;
        let ba = sliced_wasserstein(&b, &a, 32, 7).unwrap().value;
        assert_eq!(ab, ba);
        assert_eq!(ab, sliced_wasserstein(&a, &b, 32, 7).unwrap().value);
        let e1 = energy_distance(&a, &b).unwrap().value;
        let e2 = energy_distance(&b, &a).unwrap().value;
        assert!((e1 - e2).abs() < 1e-14 && e1 > 0.0);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), 249_750.0);
    }
}
