//! Plain-domain Fisherfaces: mean centering, PCA through the sample Gram
//! matrix, Fisher's discriminant in PCA space, and nearest-neighbour
//! classification by squared Euclidean distance.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataset::{Dataset, ImageVector};
use crate::linalg::{self, dot, fix_sign, norm, LinalgError, Matrix};
use crate::par::Exec;

pub use crate::dataset::vectorize;

/// Eigenvalues of the total scatter below this fraction of the largest are
/// treated as zero when sizing the PCA basis.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Within-class scatter eigenvalues below this fraction of its trace make
/// the Fisher step singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FldaError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("expected a vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("total scatter is zero; every training image is identical")]
    ZeroScatter,
    #[error("requested {requested} principal components but the scatter has rank {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("class {label} has {count} sample(s); at least 2 are required")]
    ClassTooSmall { label: usize, count: usize },
    #[error("PCA dimension must be in 1..={max}, got {requested}")]
    InvalidPcaDims { requested: usize, max: usize },
    #[error("Fisher dimension must be in 1..={max}, got {requested}")]
    InvalidFisherDims { requested: usize, max: usize },
    #[error("within-class scatter is singular (condition estimate {condition:e})")]
    SingularWithinScatter { condition: f64 },
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("mean vector is invalid: {0}")]
    InvalidMean(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Exact per-pixel mean stored as integer column sums over a common count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeanVector {
    sums: Vec<u64>,
    count: u64,
}

impl MeanVector {
    pub fn from_parts(sums: Vec<u64>, count: u64) -> Result<Self, FldaError> {
        if count == 0 {
            return Err(FldaError::InvalidMean("zero sample count"));
        }
        if sums.iter().any(|&s| s > 255 * count) {
            return Err(FldaError::InvalidMean("column sum exceeds 255 * count"));
        }
        Ok(MeanVector { sums, count })
    }

    pub fn sums(&self) -> &[u64] {
        &self.sums
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }

    /// Component `j` as the closest double.
    pub fn value(&self, j: usize) -> f64 {
        self.sums[j] as f64 / self.count as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.value(j)).collect()
    }

    /// Component `j` rounded half away from zero.
    pub fn rounded(&self, j: usize) -> i64 {
        ((2 * self.sums[j] + self.count) / (2 * self.count)) as i64
    }

    /// `v - mean`, each component the closest double to the exact rational.
    pub fn center(&self, v: &ImageVector) -> Result<Vec<f64>, FldaError> {
        if v.len() != self.len() {
            return Err(FldaError::DimensionMismatch {
                expected: self.len(),
                found: v.len(),
            });
        }
        let m = self.count as i128;
        Ok(v.pixels()
            .iter()
            .zip(&self.sums)
            .map(|(&x, &s)| (m * x as i128 - s as i128) as f64 / self.count as f64)
            .collect())
    }
}

pub fn compute_mean(train: &Dataset) -> Result<MeanVector, FldaError> {
    if train.is_empty() {
        return Err(FldaError::EmptyDataset);
    }
    let mut sums = vec![0u64; train.pixel_count()];
    for s in train.samples() {
        for (acc, &p) in sums.iter_mut().zip(s.image.pixels()) {
            *acc += p as u64;
        }
    }
    MeanVector::from_parts(sums, train.len() as u64)
}

/// Orthonormal PCA basis, one component per row.
#[derive(Clone, Debug)]
pub struct PcaBasis {
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Numerical rank of the total scatter.
    pub rank: usize,
}

/// Top `m_pca` eigenvectors of the total scatter `sum c_i c_i^T`, computed
/// from the `M x M` Gram matrix of the centered samples.
pub fn pca_fit(centered: &[Vec<f64>], m_pca: usize, exec: Exec) -> Result<PcaBasis, FldaError> {
    let m = centered.len();
    if m == 0 {
        return Err(FldaError::EmptyDataset);
    }
    let rows = exec.map_range(m, |i| {
        (0..m)
            .map(|j| if j < i { 0.0 } else { dot(&centered[i], &centered[j]) })
            .collect::<Vec<f64>>()
    });
    let mut gram = Matrix::from_rows(&rows);
    for i in 0..m {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    let eig = linalg::symmetric_eigen(&gram)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Err(FldaError::ZeroScatter);
    }
    let rank = eig.values.iter().filter(|&&l| l > RANK_TOLERANCE * top).count();
    if m_pca == 0 || m_pca > rank {
        return Err(FldaError::RankDeficient {
            requested: m_pca,
            rank,
        });
    }

    let n = centered[0].len();
    let mut components: Vec<Vec<f64>> = exec.map_range(m_pca, |k| {
        let scale = eig.values[k].sqrt();
        let mut u = vec![0.0; n];
        for (coef, c) in eig.vectors[k].iter().zip(centered) {
            for (acc, x) in u.iter_mut().zip(c) {
                *acc += coef * x;
            }
        }
        u.iter_mut().for_each(|x| *x /= scale);
        u
    });
    // one modified Gram-Schmidt pass to remove residual rounding
    for k in 0..components.len() {
        let (done, rest) = components.split_at_mut(k);
        let u = &mut rest[0];
        for prev in done.iter() {
            let proj = dot(u, prev);
            u.iter_mut().zip(prev).for_each(|(x, p)| *x -= proj * p);
        }
        let len = norm(u);
        u.iter_mut().for_each(|x| *x /= len);
        fix_sign(u);
    }
    Ok(PcaBasis {
        components,
        eigenvalues: eig.values[..m_pca].to_vec(),
        rank,
    })
}

/// Between-class and within-class scatter of already-projected samples.
pub fn scatter_matrices(
    projected: &[Vec<f64>],
    labels: &[usize],
) -> Result<(Matrix, Matrix), FldaError> {
    assert_eq!(projected.len(), labels.len());
    let mut groups: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
    for (x, &l) in projected.iter().zip(labels) {
        groups.entry(l).or_default().push(x);
    }
    if groups.len() < 2 {
        return Err(FldaError::TooFewClasses(groups.len()));
    }
    let dim = projected[0].len();
    let mean_of = |xs: &[&Vec<f64>]| {
        let mut mu = vec![0.0; dim];
        for x in xs {
            mu.iter_mut().zip(x.iter()).for_each(|(a, b)| *a += b);
        }
        mu.iter_mut().for_each(|a| *a /= xs.len() as f64);
        mu
    };
    let all: Vec<&Vec<f64>> = projected.iter().collect();
    let global = mean_of(&all);

    let mut sb = Matrix::zeros(dim, dim);
    let mut sw = Matrix::zeros(dim, dim);
    for members in groups.values() {
        let mu = mean_of(members);
        let diff: Vec<f64> = mu.iter().zip(&global).map(|(a, b)| a - b).collect();
        add_outer(&mut sb, &diff, members.len() as f64);
        for x in members {
            let d: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
            add_outer(&mut sw, &d, 1.0);
        }
    }
    Ok((sb, sw))
}

fn add_outer(m: &mut Matrix, v: &[f64], weight: f64) {
    for i in 0..v.len() {
        for j in 0..v.len() {
            m[(i, j)] += weight * v[i] * v[j];
        }
    }
}

/// Unit-length Fisher directions in PCA coordinates, one per row.
#[derive(Clone, Debug)]
pub struct FisherBasis {
    pub directions: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

/// Top `d` generalized eigenvectors of `(between, within)`, found by
/// whitening `within` and solving an ordinary symmetric problem.
pub fn flda_fit(
    between: &Matrix,
    within: &Matrix,
    d: usize,
    class_count: usize,
) -> Result<FisherBasis, FldaError> {
    let max = class_count.saturating_sub(1).min(between.rows());
    if d == 0 || d > max {
        return Err(FldaError::InvalidFisherDims { requested: d, max });
    }
    let w_eig = linalg::symmetric_eigen(within)?;
    let trace: f64 = w_eig.values.iter().sum();
    let smallest = w_eig.values.last().copied().unwrap_or(0.0);
    if trace <= 0.0 || smallest <= SINGULAR_TOLERANCE * trace {
        let largest = w_eig.values.first().copied().unwrap_or(0.0);
        let condition = if smallest > 0.0 {
            largest / smallest
        } else {
            f64::INFINITY
        };
        return Err(FldaError::SingularWithinScatter { condition });
    }

    let dim = within.rows();
    // whitening map, column k = q_k / sqrt(lambda_k)
    let mut whiten = Matrix::zeros(dim, dim);
    for (k, (q, l)) in w_eig.vectors.iter().zip(&w_eig.values).enumerate() {
        let s = l.sqrt();
        for i in 0..dim {
            whiten[(i, k)] = q[i] / s;
        }
    }
    let reduced = whiten.transpose().matmul(between).matmul(&whiten);
    // symmetrize away rounding before the eigensolve
    let reduced = {
        let t = reduced.transpose();
        let mut s = reduced.clone();
        for i in 0..dim {
            for j in 0..dim {
                s[(i, j)] = 0.5 * (reduced[(i, j)] + t[(i, j)]);
            }
        }
        s
    };
    let b_eig = linalg::symmetric_eigen(&reduced)?;
    let directions = b_eig.vectors[..d]
        .iter()
        .map(|v| {
            let mut dir = whiten.mul_vec(v);
            let len = norm(&dir);
            dir.iter_mut().for_each(|x| *x /= len);
            fix_sign(&mut dir);
            dir
        })
        .collect();
    Ok(FisherBasis {
        directions,
        eigenvalues: b_eig.values[..d].to_vec(),
    })
}

/// Generalized Rayleigh quotient `w^T B w / w^T W w`.
pub fn rayleigh_quotient(between: &Matrix, within: &Matrix, w: &[f64]) -> f64 {
    dot(w, &between.mul_vec(w)) / dot(w, &within.mul_vec(w))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn squared_distance(&self, other: &FeatureVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GalleryEntry {
    pub features: FeatureVector,
    pub label: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub m_pca: usize,
    pub m_out: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions {
    /// Defaults to `M - c`.
    pub pca_dims: Option<usize>,
    /// Defaults to `c - 1`.
    pub flda_dims: Option<usize>,
    pub exec: Exec,
}

/// Trained Fisherfaces model. The training images are kept so the integer
/// gallery can be rebuilt exactly after quantization.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub mean: MeanVector,
    /// `m_out x n`; each row is a unit-norm combined Fisher-PCA direction.
    pub projection: Vec<Vec<f64>>,
    pub gallery: Vec<GalleryEntry>,
    pub dims: Dims,
    pub label_names: Vec<String>,
    pub training: Vec<ImageVector>,
}

pub fn train(train: &Dataset, opts: &TrainOptions) -> Result<TrainedModel, FldaError> {
    let m = train.len();
    if m == 0 {
        return Err(FldaError::EmptyDataset);
    }
    let counts = train.class_counts();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(FldaError::TooFewClasses(present));
    }
    if let Some((label, &count)) = counts.iter().enumerate().find(|(_, &c)| c == 1) {
        return Err(FldaError::ClassTooSmall { label, count });
    }
    let max_pca = m - present;
    let m_pca = opts.pca_dims.unwrap_or(max_pca);
    if m_pca == 0 || m_pca > max_pca {
        return Err(FldaError::InvalidPcaDims {
            requested: m_pca,
            max: max_pca,
        });
    }
    let d = opts.flda_dims.unwrap_or(present - 1);

    let mean = compute_mean(train)?;
    let exec = opts.exec;
    let samples = train.samples();
    let centered = exec.try_map(samples, |s| mean.center(&s.image))?;

    let pca = pca_fit(&centered, m_pca, exec)?;
    let in_pca: Vec<Vec<f64>> = exec.map(&centered, |c| {
        pca.components.iter().map(|u| dot(u, c)).collect()
    });
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let (sb, sw) = scatter_matrices(&in_pca, &labels)?;
    let fisher = flda_fit(&sb, &sw, d, present)?;

    let n = train.pixel_count();
    let projection: Vec<Vec<f64>> = fisher
        .directions
        .iter()
        .map(|f| {
            let mut w = vec![0.0; n];
            for (coef, u) in f.iter().zip(&pca.components) {
                w.iter_mut().zip(u).for_each(|(acc, x)| *acc += coef * x);
            }
            let len = norm(&w);
            w.iter_mut().for_each(|x| *x /= len);
            w
        })
        .collect();

    let gallery = exec.map(&centered, |c| project_centered(&projection, c));
    let gallery = gallery
        .into_iter()
        .zip(&labels)
        .map(|(features, &label)| GalleryEntry { features, label })
        .collect();

    Ok(TrainedModel {
        mean,
        projection,
        gallery,
        dims: Dims { m_pca, m_out: d },
        label_names: train.label_names().to_vec(),
        training: samples.iter().map(|s| s.image.clone()).collect(),
    })
}

fn project_centered(projection: &[Vec<f64>], centered: &[f64]) -> FeatureVector {
    FeatureVector(projection.iter().map(|w| dot(w, centered)).collect())
}

/// `W_opt^T (v - mean)`.
pub fn project(model: &TrainedModel, v: &ImageVector) -> Result<FeatureVector, FldaError> {
    let centered = model.mean.center(v)?;
    Ok(project_centered(&model.projection, &centered))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlainDecision {
    pub label: usize,
    /// Gallery index of the nearest neighbour.
    pub index: usize,
    pub distances: Vec<f64>,
}

/// Index of the smallest value; the lowest index wins ties.
pub fn argmin_lowest<T: PartialOrd>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v < &values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Nearest gallery entry by squared Euclidean distance in feature space.
pub fn classify_plain(model: &TrainedModel, v: &ImageVector) -> Result<PlainDecision, FldaError> {
    if model.gallery.is_empty() {
        return Err(FldaError::EmptyGallery);
    }
    let omega = project(model, v)?;
    let distances: Vec<f64> = model
        .gallery
        .iter()
        .map(|g| omega.squared_distance(&g.features))
        .collect();
    let index = argmin_lowest(&distances).expect("nonempty gallery");
    Ok(PlainDecision {
        label: model.gallery[index].label,
        index,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;

    fn dataset(rows: &[(&[u8], usize)], classes: usize) -> Dataset {
        let names = (0..classes).map(|c| format!("c{c}")).collect();
        let samples = rows
            .iter()
            .map(|(px, l)| Sample {
                image: ImageVector::new(px.to_vec()),
                label: *l,
                subject: None,
            })
            .collect();
        Dataset::new(names, samples).unwrap()
    }

    #[test]
    fn mean_is_exact() {
        let ds = dataset(&[(&[0, 0], 0), (&[4, 2], 1)], 2);
        assert_eq!(compute_mean(&ds).unwrap().values(), vec![2.0, 1.0]);
        let ds = dataset(&[(&[9, 3], 0)], 1);
        assert_eq!(compute_mean(&ds).unwrap().values(), vec![9.0, 3.0]);
        let ds = dataset(&[(&[0], 0), (&[1], 0), (&[1], 0)], 1);
        let mean = compute_mean(&ds).unwrap();
        assert_eq!((mean.sums(), mean.count()), (&[2u64][..], 3));
        assert_eq!(mean.value(0), 2.0 / 3.0);
        assert_eq!(mean.rounded(0), 1);
        let empty = Dataset::new(vec!["a".into()], vec![]).unwrap();
        assert_eq!(compute_mean(&empty).unwrap_err(), FldaError::EmptyDataset);
    }

    #[test]
    fn rounded_mean_is_half_away_from_zero() {
        let m = MeanVector::from_parts(vec![1, 3, 5], 2).unwrap();
        assert_eq!((m.rounded(0), m.rounded(1), m.rounded(2)), (1, 2, 3));
        let m = MeanVector::from_parts(vec![1, 2], 3).unwrap();
        assert_eq!((m.rounded(0), m.rounded(1)), (0, 1));
    }

    #[test]
    fn pca_on_rectangle_corners() {
        // S_T = [[16,0],[0,4]] for the four corners of a 4x2 rectangle
        let centered = vec![
            vec![-2.0, -1.0],
            vec![-2.0, 1.0],
            vec![2.0, -1.0],
            vec![2.0, 1.0],
        ];
        let pca = pca_fit(&centered, 1, Exec::Sequential).unwrap();
        assert!((pca.eigenvalues[0] - 16.0).abs() < 1e-12);
        assert!((pca.components[0][0] - 1.0).abs() < 1e-12);
        assert!(pca.components[0][1].abs() < 1e-12);
        assert_eq!(pca.rank, 2);
        let full = pca_fit(&centered, 2, Exec::Sequential).unwrap();
        assert!((full.eigenvalues[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pca_full_rank_reconstructs_samples() {
        let centered = vec![
            vec![1.0, -2.0, 0.5, 3.0],
            vec![-0.5, 1.0, 2.0, -1.0],
            vec![-0.5, 1.0, -2.5, -2.0],
        ];
        let pca = pca_fit(&centered, 2, Exec::Sequential).unwrap();
        assert_eq!(pca.rank, 2);
        for c in &centered {
            let coords: Vec<f64> = pca.components.iter().map(|u| dot(u, c)).collect();
            let mut back = vec![0.0; 4];
            for (a, u) in coords.iter().zip(&pca.components) {
                back.iter_mut().zip(u).for_each(|(b, x)| *b += a * x);
            }
            for (x, y) in back.iter().zip(c) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        assert!(matches!(
            pca_fit(&centered, 3, Exec::Sequential),
            Err(FldaError::RankDeficient { requested: 3, rank: 2 })
        ));
    }

    #[test]
    fn pca_of_repeated_point_fails() {
        let centered = vec![vec![0.0, 0.0]; 3];
        assert_eq!(
            pca_fit(&centered, 1, Exec::Sequential).unwrap_err(),
            FldaError::ZeroScatter
        );
    }

    #[test]
    fn scatter_in_one_dimension() {
        let x = vec![vec![0.0], vec![2.0], vec![4.0], vec![6.0]];
        let (sb, sw) = scatter_matrices(&x, &[0, 0, 1, 1]).unwrap();
        assert_eq!(sb[(0, 0)], 16.0);
        assert_eq!(sw[(0, 0)], 4.0);
        let f = flda_fit(&sb, &sw, 1, 2).unwrap();
        assert_eq!(f.directions, vec![vec![1.0]]);
    }

    #[test]
    fn scatter_degenerate_cases() {
        // identical class means
        let x = vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0]];
        let (sb, _) = scatter_matrices(&x, &[0, 0, 1, 1]).unwrap();
        assert!(sb.frobenius_norm() < 1e-15);
        // each class a repeated point
        let x = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![5.0, 0.0], vec![5.0, 0.0]];
        let (_, sw) = scatter_matrices(&x, &[0, 0, 1, 1]).unwrap();
        assert_eq!(sw.frobenius_norm(), 0.0);
        assert_eq!(
            scatter_matrices(&x, &[1, 1, 1, 1]).unwrap_err(),
            FldaError::TooFewClasses(1)
        );
    }

    #[test]
    fn fisher_direction_for_diagonal_between_scatter() {
        let sb = Matrix::from_diagonal(&[9.0, 1.0]);
        let sw = Matrix::identity(2);
        let f = flda_fit(&sb, &sw, 1, 2).unwrap();
        assert!((f.directions[0][0] - 1.0).abs() < 1e-12);
        assert!(f.directions[0][1].abs() < 1e-12);
        // brute-force Rayleigh maximization over a fine angular grid
        let best = (0..3600)
            .map(|k| {
                let t = k as f64 * std::f64::consts::PI / 3600.0;
                (rayleigh_quotient(&sb, &sw, &[t.cos(), t.sin()]), t)
            })
            .fold((f64::MIN, 0.0), |a, b| if b.0 > a.0 { b } else { a });
        assert_eq!(best.1, 0.0);
        assert!(matches!(
            flda_fit(&sb, &sw, 2, 2),
            Err(FldaError::InvalidFisherDims { requested: 2, max: 1 })
        ));
        assert!(matches!(
            flda_fit(&sb, &Matrix::zeros(2, 2), 1, 2),
            Err(FldaError::SingularWithinScatter { .. })
        ));
    }

    const TOY: [([u8; 4], usize); 6] = [
        ([10, 12, 9, 11], 0),
        ([12, 9, 10, 13], 0),
        ([9, 11, 13, 10], 0),
        ([50, 11, 10, 12], 1),
        ([53, 10, 12, 9], 1),
        ([51, 13, 9, 11], 1),
    ];

    fn toy() -> Dataset {
        let rows: Vec<(&[u8], usize)> = TOY.iter().map(|(p, l)| (&p[..], *l)).collect();
        dataset(&rows, 2)
    }

    /// Two-class Fisher direction `S_W^{-1} (mu_1 - mu_0)` in exact rationals.
    fn exact_fisher_direction() -> Vec<f64> {
        use num_bigint::BigInt;
        use num_rational::BigRational;
        use num_traits::{ToPrimitive, Zero};

        let q = |x: i64| BigRational::from_integer(BigInt::from(x));
        let n = 4;
        let mut means = vec![vec![q(0); n]; 2];
        for (px, l) in &TOY {
            for j in 0..n {
                means[*l][j] += q(px[j] as i64) / q(3);
            }
        }
        let mut sw = vec![vec![q(0); n]; n];
        for (px, l) in &TOY {
            let d: Vec<BigRational> = (0..n).map(|j| q(px[j] as i64) - &means[*l][j]).collect();
            for i in 0..n {
                for j in 0..n {
                    sw[i][j] += &d[i] * &d[j];
                }
            }
        }
        // Gauss-Jordan on [S_W | mu_1 - mu_0]
        let mut aug: Vec<Vec<BigRational>> = (0..n)
            .map(|i| {
                let mut row = sw[i].clone();
                row.push(&means[1][i] - &means[0][i]);
                row
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n).find(|&r| !aug[r][col].is_zero()).unwrap();
            aug.swap(col, pivot);
            let p = aug[col][col].clone();
            aug[col].iter_mut().for_each(|x| *x /= &p);
            for r in 0..n {
                if r != col {
                    let f = aug[r][col].clone();
                    let pivot_row = aug[col].clone();
                    aug[r].iter_mut().zip(&pivot_row).for_each(|(x, y)| *x -= &f * y);
                }
            }
        }
        let mut w: Vec<f64> = aug.iter().map(|row| row[n].to_f64().unwrap()).collect();
        let len = norm(&w);
        w.iter_mut().for_each(|x| *x /= len);
        w
    }

    #[test]
    fn toy_training_matches_exact_fisher_direction() {
        let model = train(&toy(), &TrainOptions::default()).unwrap();
        assert_eq!(model.dims, Dims { m_pca: 4, m_out: 1 });
        assert_eq!(model.gallery.len(), 6);
        assert!(model.gallery.iter().all(|g| g.features.0.len() == 1));
        assert!((norm(&model.projection[0]) - 1.0).abs() < 1e-12);

        let exact = exact_fisher_direction();
        let cos = dot(&exact, &model.projection[0]).abs();
        assert!((cos - 1.0).abs() < 1e-9, "cos = {cos}");

        for (i, s) in toy().samples().iter().enumerate() {
            assert_eq!(project(&model, &s.image).unwrap(), model.gallery[i].features);
            let d = classify_plain(&model, &s.image).unwrap();
            assert_eq!(d.distances[i], 0.0);
            assert_eq!(d.label, s.label);
        }
    }

    #[test]
    fn fewer_pca_components_still_train() {
        let opts = TrainOptions {
            pca_dims: Some(2),
            ..Default::default()
        };
        let model = train(&toy(), &opts).unwrap();
        assert_eq!(model.dims, Dims { m_pca: 2, m_out: 1 });
        let probe = ImageVector::new(vec![52, 11, 11, 10]);
        assert_eq!(classify_plain(&model, &probe).unwrap().label, 1);
    }

    #[test]
    fn relabeling_permutes_predictions() {
        let swapped: Vec<(&[u8], usize)> =
            TOY.iter().map(|(p, l)| (&p[..], 1 - *l)).collect();
        let a = train(&toy(), &TrainOptions::default()).unwrap();
        let b = train(&dataset(&swapped, 2), &TrainOptions::default()).unwrap();
        for probe in [[11u8, 10, 11, 12], [49, 12, 11, 10], [30, 11, 11, 11]] {
            let v = ImageVector::new(probe.to_vec());
            let la = classify_plain(&a, &v).unwrap().label;
            let lb = classify_plain(&b, &v).unwrap().label;
            assert_eq!(la, 1 - lb);
        }
    }

    #[test]
    fn training_is_deterministic_across_strategies() {
        let seq = train(
            &toy(),
            &TrainOptions {
                exec: Exec::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        let par = train(
            &toy(),
            &TrainOptions {
                exec: Exec::Parallel,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn training_validates_inputs() {
        let one_class = dataset(&[(&[0, 0], 0), (&[1, 1], 0)], 2);
        assert_eq!(
            train(&one_class, &TrainOptions::default()).unwrap_err(),
            FldaError::TooFewClasses(1)
        );
        let lonely = dataset(&[(&[0, 0], 0), (&[1, 1], 0), (&[5, 5], 1)], 2);
        assert!(matches!(
            train(&lonely, &TrainOptions::default()),
            Err(FldaError::ClassTooSmall { label: 1, count: 1 })
        ));
        let opts = TrainOptions {
            pca_dims: Some(5),
            ..Default::default()
        };
        assert!(matches!(
            train(&toy(), &opts),
            Err(FldaError::InvalidPcaDims { requested: 5, max: 4 })
        ));
        let model = train(&toy(), &TrainOptions::default()).unwrap();
        assert!(matches!(
            project(&model, &ImageVector::new(vec![1, 2, 3])),
            Err(FldaError::DimensionMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn argmin_prefers_lowest_index() {
        assert_eq!(argmin_lowest(&[3.0, 1.0, 1.0]), Some(1));
        assert_eq!(argmin_lowest(&[4, 4]), Some(0));
        assert_eq!(argmin_lowest::<i32>(&[]), None);
    }
}
