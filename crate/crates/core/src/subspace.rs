//! PCA and class subspaces compared through canonical correlations.
//!
//! PCA centres the data; a class subspace is spanned by the raw vectorised
//! images of one class. Both keep the top-`d` left singular vectors, signed
//! so that each column's largest-magnitude entry is positive.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::envelope::{FeatureKind, FeatureVector};
use crate::error::{Error, Result};
use crate::linalg;
use crate::simulate::GestureLabel;
use crate::tfr::{vectorize, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `Q x d`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn input_len(&self) -> usize {
        self.mean.len()
    }
}

fn sample_matrix(rows: &[&[f64]]) -> Result<DMatrix<f64>> {
    let q = rows.first().ok_or(Error::EmptyInput("samples"))?.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != q) {
        return Err(Error::DimensionMismatch {
            expected: q,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(q, rows.len(), |i, j| rows[j][i]))
}

fn check_dim(d: usize, q: usize, m: usize) -> Result<()> {
    if d == 0 || d > q.min(m) {
        return Err(Error::InvalidConfig(format!(
            "subspace dimension {d} must be in 1..={}",
            q.min(m)
        )));
    }
    Ok(())
}

/// Centred PCA keeping `d` components.
pub fn fit_pca(samples: &[FeatureVector], d: usize) -> Result<PcaModel> {
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.values.as_slice()).collect();
    let mut x = sample_matrix(&rows)?;
    let (q, m) = x.shape();
    check_dim(d, q, m)?;
    let mean: DVector<f64> = x.column_mean();
    for mut col in x.column_iter_mut() {
        col -= &mean;
    }
    let (basis, singular_values) = linalg::leading_left_singular(&x, d);
    Ok(PcaModel {
        mean: mean.iter().copied().collect(),
        basis,
        singular_values,
    })
}

/// `basis^T (x - mean)`; the label is carried over.
pub fn project(model: &PcaModel, x: &FeatureVector) -> Result<FeatureVector> {
    if x.len() != model.input_len() {
        return Err(Error::DimensionMismatch {
            expected: model.input_len(),
            got: x.len(),
        });
    }
    let values = model
        .basis
        .column_iter()
        .map(|u| {
            u.iter()
                .zip(x.values.iter().zip(&model.mean))
                .map(|(ui, (xi, mi))| ui * (xi - mi))
                .sum()
        })
        .collect();
    Ok(FeatureVector {
        values,
        label: x.label,
        kind: FeatureKind::Pca,
    })
}

/// Orthonormal basis of one class's image subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSubspace {
    pub basis: DMatrix<f64>,
}

impl ClassSubspace {
    /// Wraps a basis, orthonormalising its columns.
    pub fn from_basis(mut basis: DMatrix<f64>) -> Result<Self> {
        if basis.ncols() == 0 || basis.ncols() > basis.nrows() {
            return Err(Error::InvalidConfig("basis must have 1..=Q columns".into()));
        }
        linalg::orthonormalize(&mut basis);
        Ok(Self { basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Squared norm of the component of `x` orthogonal to the subspace.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        let c = self.basis.tr_mul(&v);
        (v.norm_squared() - c.norm_squared()).max(0.0)
    }
}

/// Uncentred subspace of raw vectorised images.
pub fn class_subspace(images: &[GrayImage], d: usize) -> Result<ClassSubspace> {
    let vectors: Vec<FeatureVector> = images.iter().map(vectorize).collect();
    class_subspace_of(&vectors, d)
}

pub fn class_subspace_of(vectors: &[FeatureVector], d: usize) -> Result<ClassSubspace> {
    let rows: Vec<&[f64]> = vectors.iter().map(|s| s.values.as_slice()).collect();
    let x = sample_matrix(&rows)?;
    let (q, m) = x.shape();
    check_dim(d, q, m)?;
    let (basis, _) = linalg::leading_left_singular(&x, d);
    Ok(ClassSubspace { basis })
}

/// Singular values of `U^T V`, clamped to `[0, 1]`, descending.
pub fn canonical_correlations(a: &ClassSubspace, b: &ClassSubspace) -> Result<Vec<f64>> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.ambient_dim(),
            got: b.ambient_dim(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let c = a.basis.tr_mul(&b.basis);
    let mut s: Vec<f64> = c
        .singular_values()
        .iter()
        .map(|&v| v.clamp(0.0, 1.0))
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Largest canonical correlation of every class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub values: [[f64; GestureLabel::COUNT]; GestureLabel::COUNT],
    pub d: usize,
}

impl SimilarityMatrix {
    pub fn get(&self, a: GestureLabel, b: GestureLabel) -> f64 {
        self.values[a.index()][b.index()]
    }

    /// Upper-triangular table; the lower triangle is left blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for l in GestureLabel::ALL {
            out.push_str(&format!(",{}", l.letter()));
        }
        out.push('\n');
        for (i, a) in GestureLabel::ALL.iter().enumerate() {
            out.push(a.letter());
            for j in 0..GestureLabel::COUNT {
                if j >= i {
                    out.push_str(&format!(",{:.4}", self.values[i][j]));
                } else {
                    out.push(',');
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Class subspaces of `d` dimensions from labelled image vectors, then the
/// pairwise largest canonical correlations.
pub fn similarity_table(samples: &[FeatureVector], d: usize) -> Result<SimilarityMatrix> {
    let mut by_class: Vec<Vec<FeatureVector>> = vec![Vec::new(); GestureLabel::COUNT];
    for s in samples {
        let label = s
            .label
            .ok_or_else(|| Error::Data("similarity table needs labelled samples".into()))?;
        by_class[label.index()].push(s.clone());
    }
    let mut spaces = Vec::with_capacity(GestureLabel::COUNT);
    for (label, class) in GestureLabel::ALL.iter().zip(&by_class) {
        if class.len() < d {
            return Err(Error::ClassTooSmall {
                label: label.letter(),
                have: class.len(),
                need: d,
            });
        }
        spaces.push(class_subspace_of(class, d)?);
    }
    let mut values = [[0.0; GestureLabel::COUNT]; GestureLabel::COUNT];
    for i in 0..GestureLabel::COUNT {
        values[i][i] = 1.0;
        for j in i + 1..GestureLabel::COUNT {
            let v = canonical_correlations(&spaces[i], &spaces[j])?[0];
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(SimilarityMatrix { values, d })
}
