//! Dense complex Hermitian linear algebra on tensor-product spaces.
//!
//! Operators carry a [`SubsystemLayout`]: an ordered list of labelled
//! factors. Kronecker products use the big-endian convention, so the first
//! factor of a layout is the most significant digit of a basis index.
//! Transposes are taken in the computational basis, where the maximally
//! entangled vector `sum_i |ii>` is real.

use crate::error::{QbcError, Result};
use faer::{c64, Mat, Side};
use std::fmt;

/// Absolute tolerance (scaled by the largest entry) used when checking
/// Hermiticity on construction.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Ordered, labelled tensor factors.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct SubsystemLayout {
    labels: Vec<String>,
    dims: Vec<usize>,
}

impl fmt::Debug for SubsystemLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .labels
            .iter()
            .zip(&self.dims)
            .map(|(l, d)| format!("{l}:{d}"))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

impl SubsystemLayout {
    /// Builds a layout from `(label, dimension)` pairs.
    pub fn new<S: Into<String>>(parts: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut layout = Self::default();
        for (label, dim) in parts {
            let label = label.into();
            if dim == 0 {
                return Err(QbcError::InvalidArgument(format!(
                    "factor `{label}` has dimension 0"
                )));
            }
            if layout.labels.contains(&label) {
                return Err(QbcError::DuplicateLabel(label));
            }
            layout.labels.push(label);
            layout.dims.push(dim);
        }
        Ok(layout)
    }

    /// The layout with no factors; operators on it are 1x1.
    pub fn scalar() -> Self {
        Self::default()
    }

    /// A single labelled factor.
    pub fn single(label: &str, dim: usize) -> Self {
        Self::new([(label, dim)]).expect("single factor layout")
    }

    /// Factor labels in order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Factor dimensions in order.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of factors.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// True when the layout has no factors.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Total dimension (product of factor dimensions).
    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Whether `label` is a factor of this layout.
    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    /// Position of `label`.
    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| QbcError::UnknownLabel(label.to_string()))
    }

    /// Dimension of the factor called `label`.
    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.dims[self.position(label)?])
    }

    /// Product of the dimensions of the listed factors.
    pub fn dim_of_all(&self, labels: &[&str]) -> Result<usize> {
        labels.iter().try_fold(1, |acc, l| Ok(acc * self.dim_of(l)?))
    }

    /// Concatenation `self ⊗ other`.
    pub fn concat(&self, other: &SubsystemLayout) -> Result<Self> {
        Self::new(
            self.labels
                .iter()
                .cloned()
                .zip(self.dims.iter().copied())
                .chain(other.labels.iter().cloned().zip(other.dims.iter().copied())),
        )
    }

    /// The layout with the listed factors removed (order of the rest kept).
    pub fn without(&self, drop: &[&str]) -> Result<Self> {
        for l in drop {
            self.position(l)?;
        }
        Self::new(
            self.labels
                .iter()
                .zip(&self.dims)
                .filter(|(l, _)| !drop.contains(&l.as_str()))
                .map(|(l, d)| (l.clone(), *d)),
        )
    }

    /// The layout made of the listed factors, in the listed order.
    pub fn select(&self, keep: &[&str]) -> Result<Self> {
        let mut parts = Vec::with_capacity(keep.len());
        for l in keep {
            parts.push((l.to_string(), self.dim_of(l)?));
        }
        Self::new(parts)
    }

    /// A copy with one label renamed.
    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        let pos = self.position(from)?;
        let mut labels = self.labels.clone();
        labels[pos] = to.to_string();
        Self::new(labels.into_iter().zip(self.dims.iter().copied()))
    }

    /// Labels as string slices.
    pub fn label_refs(&self) -> Vec<&str> {
        self.labels.iter().map(String::as_str).collect()
    }

    /// Big-endian strides of the factors.
    pub(crate) fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.dims[i + 1];
        }
        strides
    }

    /// Offsets (indices into the full space) of every configuration of the
    /// factors at `positions`, enumerated big-endian in the given order.
    pub(crate) fn offsets(&self, positions: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut out = vec![0usize];
        for &p in positions {
            let mut next = Vec::with_capacity(out.len() * self.dims[p]);
            for &base in &out {
                for d in 0..self.dims[p] {
                    next.push(base + d * strides[p]);
                }
            }
            out = next;
        }
        out
    }

    pub(crate) fn positions(&self, labels: &[&str]) -> Result<Vec<usize>> {
        let mut seen = Vec::with_capacity(labels.len());
        for l in labels {
            let p = self.position(l)?;
            if seen.contains(&p) {
                return Err(QbcError::DuplicateLabel(l.to_string()));
            }
            seen.push(p);
        }
        Ok(seen)
    }

    /// Positions not contained in `positions`, in layout order.
    pub(crate) fn complement(&self, positions: &[usize]) -> Vec<usize> {
        (0..self.len()).filter(|p| !positions.contains(p)).collect()
    }
}

/// Index plans shared by dense operators and sparse linear maps.
pub(crate) mod plan {
    use super::*;

    /// For a partial trace: offsets of kept configurations and traced ones.
    pub(crate) fn partial_trace(
        layout: &SubsystemLayout,
        drop: &[&str],
    ) -> Result<(SubsystemLayout, Vec<usize>, Vec<usize>)> {
        let dropped = layout.positions(drop)?;
        let kept = layout.complement(&dropped);
        let out = layout.without(drop)?;
        Ok((out, layout.offsets(&kept), layout.offsets(&dropped)))
    }

    /// For a partial transpose: per index, the offset carried by the
    /// transposed factors (the remainder is `index - offset`).
    pub(crate) fn transposed_part(layout: &SubsystemLayout, subset: &[&str]) -> Result<Vec<usize>> {
        let pos = layout.positions(subset)?;
        let strides = layout.strides();
        let n = layout.dim();
        let mut part = vec![0usize; n];
        for (idx, slot) in part.iter_mut().enumerate() {
            let mut s = 0;
            for &p in &pos {
                let digit = (idx / strides[p]) % layout.dims[p];
                s += digit * strides[p];
            }
            *slot = s;
        }
        Ok(part)
    }

    /// For a permutation: old index of every new index.
    pub(crate) fn permutation(
        layout: &SubsystemLayout,
        order: &[&str],
    ) -> Result<(SubsystemLayout, Vec<usize>)> {
        if order.len() != layout.len() {
            return Err(QbcError::DimensionMismatch(format!(
                "permutation {order:?} does not cover layout {layout:?}"
            )));
        }
        let pos = layout.positions(order)?;
        Ok((layout.select(order)?, layout.offsets(&pos)))
    }

    /// For an expansion of an operator on `inner` into `target` (identity on
    /// the other factors): target offsets of inner configurations and of the
    /// complementary configurations.
    pub(crate) fn expansion(
        inner: &SubsystemLayout,
        target: &SubsystemLayout,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        for (l, d) in inner.labels.iter().zip(&inner.dims) {
            if target.dim_of(l)? != *d {
                return Err(QbcError::DimensionMismatch(format!(
                    "factor `{l}` has dimension {d} but {} in target",
                    target.dim_of(l)?
                )));
            }
        }
        let inner_pos = target.positions(&inner.label_refs())?;
        let rest = target.complement(&inner_pos);
        Ok((target.offsets(&inner_pos), target.offsets(&rest)))
    }
}

/// A complex Hermitian matrix annotated with a subsystem layout.
#[derive(Clone)]
pub struct HermitianOperator {
    layout: SubsystemLayout,
    mat: Mat<c64>,
}

impl fmt::Debug for HermitianOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "HermitianOperator {:?}", self.layout)?;
        for i in 0..self.side() {
            let row: Vec<String> = (0..self.side())
                .map(|j| {
                    let z = self.mat[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Largest entry of `|m - m^dagger|`.
pub fn hermitian_defect(m: &Mat<c64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m^dagger) / 2`.
pub fn hermitian_part(m: &Mat<c64>) -> Mat<c64> {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat<c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            worst = worst.max(m[(i, j)].norm());
        }
    }
    worst
}

/// Kronecker product with the left factor most significant.
pub fn kron(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// `k * m` for a real scalar.
pub fn scaled(m: &Mat<c64>, k: f64) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * k)
}

/// Trace of a square matrix.
pub fn trace(m: &Mat<c64>) -> c64 {
    (0..m.nrows()).fold(c64::new(0.0, 0.0), |acc, i| acc + m[(i, i)])
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn eigh(m: &Mat<c64>) -> (Vec<f64>, Mat<c64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    let h = hermitian_part(m);
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .expect("Hermitian eigendecomposition converges");
    let s = evd.S().column_vector();
    let vals = (0..n).map(|i| s[i].re).collect();
    (vals, evd.U().to_owned())
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn eigvalsh(m: &Mat<c64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let h = hermitian_part(m);
    h.self_adjoint_eigenvalues(Side::Lower)
        .expect("Hermitian eigendecomposition converges")
}

impl HermitianOperator {
    /// Wraps a matrix, checking that it is Hermitian to [`HERMITIAN_TOL`]
    /// (relative to its largest entry) and symmetrizing it.
    pub fn new(layout: SubsystemLayout, mat: Mat<c64>) -> Result<Self> {
        check_side(&layout, &mat)?;
        let defect = hermitian_defect(&mat);
        if defect > HERMITIAN_TOL * max_abs(&mat).max(1.0) {
            return Err(QbcError::NotHermitian(defect));
        }
        Ok(Self {
            layout,
            mat: hermitian_part(&mat),
        })
    }

    /// Wraps a matrix that is Hermitian up to arbitrary roundoff, replacing
    /// it by its Hermitian part. Used for values produced by algorithms whose
    /// output is Hermitian in exact arithmetic.
    pub fn from_hermitian_part(layout: SubsystemLayout, mat: Mat<c64>) -> Result<Self> {
        check_side(&layout, &mat)?;
        Ok(Self {
            layout,
            mat: hermitian_part(&mat),
        })
    }

    /// Builds an operator from a real-valued entry function.
    pub fn from_real_fn(layout: SubsystemLayout, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let n = layout.dim();
        Self::new(layout, Mat::from_fn(n, n, |i, j| c64::new(f(i, j), 0.0)))
    }

    /// The identity on `layout`.
    pub fn identity(layout: SubsystemLayout) -> Self {
        let n = layout.dim();
        Self {
            layout,
            mat: Mat::from_fn(n, n, |i, j| {
                if i == j {
                    c64::new(1.0, 0.0)
                } else {
                    c64::new(0.0, 0.0)
                }
            }),
        }
    }

    /// The zero operator on `layout`.
    pub fn zeros(layout: SubsystemLayout) -> Self {
        let n = layout.dim();
        Self {
            layout,
            mat: Mat::zeros(n, n),
        }
    }

    /// The 1x1 operator holding `x`.
    pub fn scalar(x: f64) -> Self {
        Self {
            layout: SubsystemLayout::scalar(),
            mat: Mat::from_fn(1, 1, |_, _| c64::new(x, 0.0)),
        }
    }

    /// Layout of the operator.
    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    /// Entries.
    pub fn matrix(&self) -> &Mat<c64> {
        &self.mat
    }

    /// Consumes the operator and returns its entries.
    pub fn into_matrix(self) -> Mat<c64> {
        self.mat
    }

    /// Side length.
    pub fn side(&self) -> usize {
        self.mat.nrows()
    }

    /// Entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> c64 {
        self.mat[(i, j)]
    }

    /// Trace (real for Hermitian operators).
    pub fn trace(&self) -> f64 {
        trace(&self.mat).re
    }

    /// Renames the factors while keeping dimensions.
    pub fn with_layout(&self, layout: SubsystemLayout) -> Result<Self> {
        if layout.dims() != self.layout.dims() {
            return Err(QbcError::DimensionMismatch(format!(
                "cannot relabel {:?} as {:?}",
                self.layout, layout
            )));
        }
        Ok(Self {
            layout,
            mat: self.mat.clone(),
        })
    }

    /// Replaces the layout by any layout of the same total dimension.
    pub fn regroup(&self, layout: SubsystemLayout) -> Result<Self> {
        if layout.dim() != self.layout.dim() {
            return Err(QbcError::DimensionMismatch(format!(
                "cannot regroup {:?} as {:?}",
                self.layout, layout
            )));
        }
        Ok(Self {
            layout,
            mat: self.mat.clone(),
        })
    }

    /// Renames a single factor.
    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        self.with_layout(self.layout.relabel(from, to)?)
    }

    fn same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(QbcError::DimensionMismatch(format!(
                "layouts {:?} and {:?} differ",
                self.layout, other.layout
            )));
        }
        Ok(())
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            mat: &self.mat + &other.mat,
        })
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            mat: &self.mat - &other.mat,
        })
    }

    /// `k * self`.
    pub fn scale(&self, k: f64) -> Self {
        Self {
            layout: self.layout.clone(),
            mat: scaled(&self.mat, k),
        }
    }

    /// `Re Tr(self * other)`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.side() != other.side() {
            return Err(QbcError::DimensionMismatch(format!(
                "sides {} and {} differ",
                self.side(),
                other.side()
            )));
        }
        let n = self.side();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.mat[(i, j)] * other.mat[(j, i)]).re;
            }
        }
        Ok(acc)
    }

    /// `U self U^dagger` for a unitary (or any square) `u` of matching side.
    pub fn conjugate_by(&self, u: &Mat<c64>) -> Result<Self> {
        if u.ncols() != self.side() || u.nrows() != self.side() {
            return Err(QbcError::DimensionMismatch(format!(
                "conjugation by a {}x{} matrix on side {}",
                u.nrows(),
                u.ncols(),
                self.side()
            )));
        }
        let m = u * &self.mat * u.adjoint();
        Self::from_hermitian_part(self.layout.clone(), m)
    }

    /// Full transpose in the computational basis.
    pub fn transpose(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            mat: self.mat.transpose().to_owned(),
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        eigvalsh(&self.mat)
    }

    /// Eigenvalues (ascending) and eigenvectors as columns.
    pub fn eigh(&self) -> (Vec<f64>, Mat<c64>) {
        eigh(&self.mat)
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Largest eigenvalue.
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    /// Trace norm.
    pub fn trace_norm(&self) -> f64 {
        self.eigenvalues().iter().map(|x| x.abs()).sum()
    }

    /// Largest absolute entry.
    pub fn max_abs_entry(&self) -> f64 {
        max_abs(&self.mat)
    }

    /// Positive part (eigenvalues clipped at zero).
    pub fn positive_part(&self) -> Self {
        let (vals, vecs) = self.eigh();
        let n = self.side();
        let mut m = Mat::<c64>::zeros(n, n);
        for (k, &v) in vals.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += vecs[(i, k)] * vecs[(j, k)].conj() * v;
                }
            }
        }
        Self {
            layout: self.layout.clone(),
            mat: hermitian_part(&m),
        }
    }

    /// Tensor product `self ⊗ other`.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        tensor_product(self, other)
    }

    /// Partial trace over the listed factors.
    pub fn ptrace(&self, drop: &[&str]) -> Result<Self> {
        partial_trace(self, drop)
    }

    /// Partial transpose on the listed factors.
    pub fn ptranspose(&self, subset: &[&str]) -> Result<Self> {
        partial_transpose(self, subset)
    }

    /// Reorders the factors into `order` (a permutation of the labels).
    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        let (layout, map) = plan::permutation(&self.layout, order)?;
        let n = self.side();
        let mat = Mat::from_fn(n, n, |i, j| self.mat[(map[i], map[j])]);
        Ok(Self { layout, mat })
    }

    /// Embeds `self` into `target`, acting as the identity on the factors of
    /// `target` that `self` does not carry.
    pub fn expand_to(&self, target: &SubsystemLayout) -> Result<Self> {
        let (inner, rest) = plan::expansion(&self.layout, target)?;
        let n = target.dim();
        let mut mat = Mat::<c64>::zeros(n, n);
        for &u in &rest {
            for (a, &oa) in inner.iter().enumerate() {
                for (b, &ob) in inner.iter().enumerate() {
                    mat[(oa + u, ob + u)] = self.mat[(a, b)];
                }
            }
        }
        Ok(Self {
            layout: target.clone(),
            mat,
        })
    }
}

fn check_side(layout: &SubsystemLayout, mat: &Mat<c64>) -> Result<()> {
    if mat.nrows() != layout.dim() || mat.ncols() != layout.dim() {
        return Err(QbcError::DimensionMismatch(format!(
            "matrix is {}x{} but layout {:?} has dimension {}",
            mat.nrows(),
            mat.ncols(),
            layout,
            layout.dim()
        )));
    }
    Ok(())
}

/// Kronecker product; the layout is the concatenation of both layouts.
pub fn tensor_product(a: &HermitianOperator, b: &HermitianOperator) -> Result<HermitianOperator> {
    Ok(HermitianOperator {
        layout: a.layout.concat(&b.layout)?,
        mat: kron(&a.mat, &b.mat),
    })
}

/// Partial trace over the factors in `drop`.
pub fn partial_trace(x: &HermitianOperator, drop: &[&str]) -> Result<HermitianOperator> {
    let (layout, kept, traced) = plan::partial_trace(&x.layout, drop)?;
    let n = kept.len();
    let mat = Mat::from_fn(n, n, |i, j| {
        traced.iter().fold(c64::new(0.0, 0.0), |acc, &t| {
            acc + x.mat[(kept[i] + t, kept[j] + t)]
        })
    });
    Ok(HermitianOperator { layout, mat })
}

/// Partial transpose on the factors in `subset`, in the computational basis.
pub fn partial_transpose(x: &HermitianOperator, subset: &[&str]) -> Result<HermitianOperator> {
    let part = plan::transposed_part(&x.layout, subset)?;
    let n = x.side();
    let mat = Mat::from_fn(n, n, |r, c| {
        let (sr, sc) = (part[r], part[c]);
        x.mat[(r - sr + sc, c - sc + sr)]
    });
    Ok(HermitianOperator {
        layout: x.layout.clone(),
        mat,
    })
}

/// A pure state vector with a layout and a normalization flag.
#[derive(Clone, Debug)]
pub struct PureVector {
    layout: SubsystemLayout,
    amplitudes: Vec<c64>,
    normalized: bool,
}

impl PureVector {
    /// Wraps amplitudes; `normalized` records whether the norm is one.
    pub fn new(layout: SubsystemLayout, amplitudes: Vec<c64>, normalized: bool) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(QbcError::DimensionMismatch(format!(
                "{} amplitudes for layout {:?}",
                amplitudes.len(),
                layout
            )));
        }
        Ok(Self {
            layout,
            amplitudes,
            normalized,
        })
    }

    /// Layout of the vector.
    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    /// Amplitudes in big-endian order.
    pub fn amplitudes(&self) -> &[c64] {
        &self.amplitudes
    }

    /// Whether the vector has unit norm.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureVector) -> Result<c64> {
        if self.amplitudes.len() != other.amplitudes.len() {
            return Err(QbcError::DimensionMismatch("vector lengths differ".into()));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .fold(c64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b))
    }

    /// `|v><v|`.
    pub fn projector(&self) -> HermitianOperator {
        let n = self.amplitudes.len();
        let v = &self.amplitudes;
        HermitianOperator {
            layout: self.layout.clone(),
            mat: Mat::from_fn(n, n, |i, j| v[i] * v[j].conj()),
        }
    }

    /// `<v| X |v>` (real for Hermitian `X`).
    pub fn expectation(&self, x: &HermitianOperator) -> Result<f64> {
        let n = self.amplitudes.len();
        if x.side() != n {
            return Err(QbcError::DimensionMismatch("operator side differs".into()));
        }
        let v = &self.amplitudes;
        let mut acc = c64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += v[i].conj() * x.mat[(i, j)] * v[j];
            }
        }
        Ok(acc.re)
    }

    /// Applies a matrix to the vector (same layout on both sides).
    pub fn apply(&self, m: &Mat<c64>) -> Result<PureVector> {
        let n = self.amplitudes.len();
        if m.nrows() != n || m.ncols() != n {
            return Err(QbcError::DimensionMismatch("matrix side differs".into()));
        }
        let amplitudes = (0..n)
            .map(|i| {
                (0..n).fold(c64::new(0.0, 0.0), |acc, j| {
                    acc + m[(i, j)] * self.amplitudes[j]
                })
            })
            .collect();
        Ok(PureVector {
            layout: self.layout.clone(),
            amplitudes,
            normalized: self.normalized,
        })
    }
}

/// Default labels of the two halves of [`max_entangled`] and
/// [`sym_antisym_projectors`].
pub const PAIR_LABELS: (&str, &str) = ("A", "~A");

/// `sum_i |ii>` on `d ⊗ d`, divided by `sqrt(d)` when `normalized`.
/// The halves are labelled [`PAIR_LABELS`].
pub fn max_entangled(d: usize, normalized: bool) -> Result<PureVector> {
    max_entangled_on(PAIR_LABELS.0, PAIR_LABELS.1, d, normalized)
}

/// [`max_entangled`] with explicit labels for the two halves.
pub fn max_entangled_on(a: &str, b: &str, d: usize, normalized: bool) -> Result<PureVector> {
    if d < 1 {
        return Err(QbcError::InvalidArgument("dimension must be at least 1".into()));
    }
    let layout = SubsystemLayout::new([(a, d), (b, d)])?;
    let w = if normalized { 1.0 / (d as f64).sqrt() } else { 1.0 };
    let mut amplitudes = vec![c64::new(0.0, 0.0); d * d];
    for i in 0..d {
        amplitudes[i * d + i] = c64::new(w, 0.0);
    }
    PureVector::new(layout, amplitudes, normalized)
}

/// Projector onto the maximally entangled state `phi` on the given labels.
pub fn epr_projector(a: &str, b: &str, d: usize) -> Result<HermitianOperator> {
    Ok(max_entangled_on(a, b, d, true)?.projector())
}

/// The flip (swap) operator on `d ⊗ d` with [`PAIR_LABELS`].
pub fn flip_operator(d: usize) -> Result<HermitianOperator> {
    if d < 1 {
        return Err(QbcError::InvalidArgument("dimension must be at least 1".into()));
    }
    let layout = SubsystemLayout::new([(PAIR_LABELS.0, d), (PAIR_LABELS.1, d)])?;
    HermitianOperator::from_real_fn(layout, |r, c| {
        let (i, j) = (r / d, r % d);
        if c == j * d + i {
            1.0
        } else {
            0.0
        }
    })
}

/// Projectors `(S, A) = ((1 + F)/2, (1 - F)/2)` onto the symmetric and
/// antisymmetric subspaces of `d ⊗ d`.
pub fn sym_antisym_projectors(d: usize) -> Result<(HermitianOperator, HermitianOperator)> {
    let f = flip_operator(d)?;
    let one = HermitianOperator::identity(f.layout().clone());
    let s = one.add(&f)?.scale(0.5);
    let a = one.sub(&f)?.scale(0.5);
    Ok((s, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, Rng};

    fn lay(parts: &[(&str, usize)]) -> SubsystemLayout {
        SubsystemLayout::new(parts.iter().copied()).unwrap()
    }

    fn sigma_z() -> HermitianOperator {
        HermitianOperator::from_real_fn(lay(&[("X", 2)]), |i, j| {
            if i != j {
                0.0
            } else if i == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .unwrap()
    }

    #[test]
    fn layout_rejects_duplicates_and_zero_dims() {
        assert!(SubsystemLayout::new([("A", 2), ("A", 3)]).is_err());
        assert!(SubsystemLayout::new([("A", 0)]).is_err());
        assert_eq!(lay(&[("A", 2), ("B", 3)]).dim(), 6);
        assert_eq!(SubsystemLayout::scalar().dim(), 1);
    }

    #[test]
    fn identity_tensor_identity_is_identity() {
        let one = HermitianOperator::identity(lay(&[("A", 2)]));
        let two = HermitianOperator::identity(lay(&[("B", 2)]));
        let p = tensor_product(&one, &two).unwrap();
        let expected = HermitianOperator::identity(lay(&[("A", 2), ("B", 2)]));
        assert!(p.sub(&expected).unwrap().max_abs_entry() < 1e-15);
    }

    #[test]
    fn epr_tensor_epr_has_unit_trace() {
        let a = epr_projector("A", "B", 2).unwrap();
        let b = epr_projector("C", "D", 2).unwrap();
        assert!((tensor_product(&a, &b).unwrap().trace() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sigma_z_squared_spectrum() {
        let z1 = sigma_z();
        let z2 = sigma_z().relabel("X", "Y").unwrap();
        let ev = tensor_product(&z1, &z2).unwrap().eigenvalues();
        let expected = [-1.0, -1.0, 1.0, 1.0];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn marginal_of_epr_is_maximally_mixed() {
        let phi = epr_projector("A", "B", 2).unwrap();
        let m = phi.ptrace(&["B"]).unwrap();
        let half = HermitianOperator::identity(lay(&[("A", 2)])).scale(0.5);
        assert!(m.sub(&half).unwrap().max_abs_entry() < 1e-15);
        assert_eq!(m.layout().labels(), &["A".to_string()]);
    }

    #[test]
    fn partial_trace_of_product_factorizes() {
        let mut rng = Rng::seed(11);
        let x = random_hermitian(&mut rng, lay(&[("A", 3)]));
        let y = random_hermitian(&mut rng, lay(&[("B", 2)]));
        let xy = tensor_product(&x, &y).unwrap();
        let got = xy.ptrace(&["A"]).unwrap();
        let want = y.scale(x.trace());
        assert!(got.sub(&want).unwrap().max_abs_entry() < 1e-12);
        let got = xy.ptrace(&["B"]).unwrap();
        let want = x.scale(y.trace());
        assert!(got.sub(&want).unwrap().max_abs_entry() < 1e-12);
    }

    #[test]
    fn unknown_labels_are_reported() {
        let x = HermitianOperator::identity(lay(&[("A", 2)]));
        assert!(matches!(x.ptrace(&["Q"]), Err(QbcError::UnknownLabel(_))));
        assert!(matches!(x.ptranspose(&["Q"]), Err(QbcError::UnknownLabel(_))));
    }

    #[test]
    fn epr_partial_transpose_spectrum() {
        for d in 1..=4 {
            let phi = max_entangled(d, true).unwrap().projector();
            let ev = phi.ptranspose(&[PAIR_LABELS.0]).unwrap().eigenvalues();
            let neg = ev.iter().filter(|&&v| (v + 1.0 / d as f64).abs() < 1e-12).count();
            let pos = ev.iter().filter(|&&v| (v - 1.0 / d as f64).abs() < 1e-12).count();
            assert_eq!(neg, d * (d - 1) / 2);
            assert_eq!(pos, d * (d + 1) / 2);
        }
    }

    #[test]
    fn epr_partial_transpose_is_flip_over_d() {
        let d = 3;
        let phi = max_entangled(d, true).unwrap().projector();
        let (s, a) = sym_antisym_projectors(d).unwrap();
        let want = s.sub(&a).unwrap().scale(1.0 / d as f64);
        let got = phi.ptranspose(&[PAIR_LABELS.0]).unwrap();
        assert!(got.sub(&want).unwrap().max_abs_entry() < 1e-15);
    }

    #[test]
    fn partial_transpose_is_involution() {
        let mut rng = Rng::seed(3);
        let x = random_hermitian(&mut rng, lay(&[("A", 2), ("B", 3), ("C", 2)]));
        let y = x.ptranspose(&["B", "C"]).unwrap().ptranspose(&["B", "C"]).unwrap();
        assert!(x.sub(&y).unwrap().max_abs_entry() < 1e-15);
    }

    #[test]
    fn transpose_trick_literal() {
        let mut rng = Rng::seed(5);
        let d = 3;
        let phi = max_entangled(d, false).unwrap();
        let x = crate::random::random_complex_matrix(&mut rng, d, d);
        let eye = Mat::<c64>::identity(d, d);
        let lhs = phi.apply(&kron(&x.transpose().to_owned(), &eye)).unwrap();
        let rhs = phi.apply(&kron(&eye, &x)).unwrap();
        for (a, b) in lhs.amplitudes().iter().zip(rhs.amplitudes()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn max_entangled_values() {
        let v = max_entangled(2, true).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let expected = [s, 0.0, 0.0, s];
        for (a, b) in v.amplitudes().iter().zip(expected) {
            assert!((a.re - b).abs() < 1e-15 && a.im == 0.0);
        }
        for d in 1..5 {
            let n = max_entangled(d, true).unwrap();
            let u = max_entangled(d, false).unwrap();
            assert!((n.inner(&u).unwrap().re - (d as f64).sqrt()).abs() < 1e-12);
        }
        assert!(max_entangled(0, true).is_err());
    }

    #[test]
    fn trace_via_epr_expectation() {
        let mut rng = Rng::seed(17);
        let d = 3;
        let x = random_hermitian(&mut rng, lay(&[(PAIR_LABELS.0, d)]));
        let big = x.expand_to(&lay(&[(PAIR_LABELS.0, d), (PAIR_LABELS.1, d)])).unwrap();
        let phi = max_entangled(d, true).unwrap();
        let via = d as f64 * phi.expectation(&big).unwrap();
        assert!((via - x.trace()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_antisymmetric_projectors() {
        for d in 1..=4 {
            let (s, a) = sym_antisym_projectors(d).unwrap();
            let one = HermitianOperator::identity(s.layout().clone());
            assert!(s.add(&a).unwrap().sub(&one).unwrap().max_abs_entry() < 1e-15);
            assert!((s.trace() - (d * (d + 1)) as f64 / 2.0).abs() < 1e-12);
            assert!((a.trace() - (d * (d - 1)) as f64 / 2.0).abs() < 1e-12);
            let prod = s.matrix() * a.matrix();
            assert!(max_abs(&prod) < 1e-15);
        }
    }

    #[test]
    fn permute_then_back_is_identity_and_matches_kron_order() {
        let mut rng = Rng::seed(23);
        let x = random_hermitian(&mut rng, lay(&[("A", 2)]));
        let y = random_hermitian(&mut rng, lay(&[("B", 3)]));
        let xy = tensor_product(&x, &y).unwrap();
        let yx = tensor_product(&y, &x).unwrap();
        let p = xy.permute(&["B", "A"]).unwrap();
        assert!(p.sub(&yx).unwrap().max_abs_entry() < 1e-15);
        let back = p.permute(&["A", "B"]).unwrap();
        assert!(back.sub(&xy).unwrap().max_abs_entry() < 1e-15);
    }

    #[test]
    fn expand_matches_tensor_with_identity() {
        let mut rng = Rng::seed(29);
        let x = random_hermitian(&mut rng, lay(&[("B", 2)]));
        let target = lay(&[("A", 3), ("B", 2), ("C", 2)]);
        let got = x.expand_to(&target).unwrap();
        let a = HermitianOperator::identity(lay(&[("A", 3)]));
        let c = HermitianOperator::identity(lay(&[("C", 2)]));
        let want = tensor_product(&tensor_product(&a, &x).unwrap(), &c).unwrap();
        assert!(got.sub(&want).unwrap().max_abs_entry() < 1e-15);
    }

    #[test]
    fn construction_rejects_non_hermitian() {
        let m = Mat::from_fn(2, 2, |i, j| c64::new((i + 2 * j) as f64, 0.0));
        assert!(matches!(
            HermitianOperator::new(lay(&[("A", 2)]), m),
            Err(QbcError::NotHermitian(_))
        ));
        let m = Mat::from_fn(2, 2, |i, j| c64::new(1.0, if i < j { 1e-14 } else { 0.0 }));
        assert!(HermitianOperator::new(lay(&[("A", 2)]), m).is_ok());
    }
}
