//! Sparse complex-linear maps between square matrices.
//!
//! A map sends each input entry `(r, c)` to a short list of output entries
//! with complex weights. Partial traces, partial transposes, permutations,
//! expansions by identities, trace functionals and the real embedding all
//! have this form, so affine expressions stay sparse however they are
//! composed.

use crate::error::Result;
use crate::tensor::{plan, SubsystemLayout};
use faer::{c64, Mat};
use std::collections::HashMap;

/// One weighted target of an input entry: output vector index and weight.
pub(crate) type Target = (u32, c64);

/// A linear map from `n_in x n_in` matrices to `n_out x n_out` matrices.
///
/// Entry `(r, c)` of a side-`n` matrix has vector index `r * n + c`.
#[derive(Clone, Debug)]
pub struct LinMap {
    n_in: usize,
    n_out: usize,
    cols: Vec<Vec<Target>>,
}

fn one() -> c64 {
    c64::new(1.0, 0.0)
}

impl LinMap {
    fn empty(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            cols: vec![Vec::new(); n_in * n_in],
        }
    }

    /// Input side length.
    pub fn n_in(&self) -> usize {
        self.n_in
    }

    /// Output side length.
    pub fn n_out(&self) -> usize {
        self.n_out
    }

    /// Targets of input entry `(r, c)`.
    pub(crate) fn targets(&self, r: usize, c: usize) -> &[Target] {
        &self.cols[r * self.n_in + c]
    }

    fn push(&mut self, in_r: usize, in_c: usize, out_r: usize, out_c: usize, w: c64) {
        let idx = (out_r * self.n_out + out_c) as u32;
        self.cols[in_r * self.n_in + in_c].push((idx, w));
    }

    /// The identity map on side `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::empty(n, n);
        for r in 0..n {
            for c in 0..n {
                m.push(r, c, r, c, one());
            }
        }
        m
    }

    /// Whether this is exactly the identity map.
    pub fn is_identity(&self) -> bool {
        self.n_in == self.n_out
            && self.cols.iter().enumerate().all(|(i, t)| {
                t.len() == 1 && t[0].0 as usize == i && t[0].1 == one()
            })
    }

    /// Partial trace over `drop`; returns the map and the output layout.
    pub fn partial_trace(layout: &SubsystemLayout, drop: &[&str]) -> Result<(Self, SubsystemLayout)> {
        let (out, kept, traced) = plan::partial_trace(layout, drop)?;
        let mut m = Self::empty(layout.dim(), out.dim());
        for (i, &bi) in kept.iter().enumerate() {
            for (j, &bj) in kept.iter().enumerate() {
                for &t in &traced {
                    m.push(bi + t, bj + t, i, j, one());
                }
            }
        }
        Ok((m, out))
    }

    /// Partial transpose on `subset`.
    pub fn partial_transpose(layout: &SubsystemLayout, subset: &[&str]) -> Result<Self> {
        let part = plan::transposed_part(layout, subset)?;
        let n = layout.dim();
        let mut m = Self::empty(n, n);
        for r in 0..n {
            for c in 0..n {
                let (sr, sc) = (part[r], part[c]);
                m.push(r, c, r - sr + sc, c - sc + sr, one());
            }
        }
        Ok(m)
    }

    /// Reordering of factors; returns the map and the output layout.
    pub fn permutation(layout: &SubsystemLayout, order: &[&str]) -> Result<(Self, SubsystemLayout)> {
        let (out, map) = plan::permutation(layout, order)?;
        let n = layout.dim();
        let mut m = Self::empty(n, n);
        for (i, &oi) in map.iter().enumerate() {
            for (j, &oj) in map.iter().enumerate() {
                m.push(oi, oj, i, j, one());
            }
        }
        Ok((m, out))
    }

    /// `X -> X ⊗ 1` placed into `target`.
    pub fn expansion(inner: &SubsystemLayout, target: &SubsystemLayout) -> Result<Self> {
        let (offs, rest) = plan::expansion(inner, target)?;
        let mut m = Self::empty(inner.dim(), target.dim());
        for (a, &oa) in offs.iter().enumerate() {
            for (b, &ob) in offs.iter().enumerate() {
                for &u in &rest {
                    m.push(a, b, oa + u, ob + u, one());
                }
            }
        }
        Ok(m)
    }

    /// `X -> Tr(C X)` as a map to 1x1 matrices.
    pub fn trace_against(c: &Mat<c64>) -> Self {
        let n = c.nrows();
        let mut m = Self::empty(n, 1);
        for r in 0..n {
            for col in 0..n {
                let w = c[(col, r)];
                if w != c64::new(0.0, 0.0) {
                    m.push(r, col, 0, 0, w);
                }
            }
        }
        m
    }

    /// The map `H -> [[Re H, -Im H], [Im H, Re H]]`, written complex-linearly
    /// for Hermitian inputs via `Re H = (H + H^T)/2`, `Im H = (H - H^T)/(2i)`.
    pub fn real_embedding(n: usize) -> Self {
        let mut m = Self::empty(n, 2 * n);
        let half = c64::new(0.5, 0.0);
        let half_i = c64::new(0.0, -0.5); // 1/(2i)
        for r in 0..n {
            for c in 0..n {
                // Contributions of H[r,c] to Re H[r,c] and Re H[c,r].
                for (a, b) in [(r, c), (c, r)] {
                    m.push(r, c, a, b, half);
                    m.push(r, c, a + n, b + n, half);
                }
                // Im H[a,b] = (H[a,b] - H[b,a]) / (2i).
                // Lower-left block holds Im H, upper-right holds -Im H.
                m.push(r, c, r + n, c, half_i);
                m.push(r, c, c + n, r, -half_i);
                m.push(r, c, r, c + n, -half_i);
                m.push(r, c, c, r + n, half_i);
            }
        }
        m.canonicalize();
        m
    }

    /// Multiplies every weight by `k`.
    pub fn scale(&self, k: f64) -> Self {
        let mut m = self.clone();
        for col in &mut m.cols {
            for t in col.iter_mut() {
                t.1 *= k;
            }
        }
        m
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n_in, other.n_in);
        assert_eq!(self.n_out, other.n_out);
        let mut m = self.clone();
        for (a, b) in m.cols.iter_mut().zip(&other.cols) {
            a.extend_from_slice(b);
        }
        m.canonicalize();
        m
    }

    /// The composition `then ∘ self`.
    pub fn then(&self, then: &Self) -> Self {
        assert_eq!(self.n_out, then.n_in);
        let mut m = Self::empty(self.n_in, then.n_out);
        let mut acc: HashMap<u32, c64> = HashMap::new();
        for (i, col) in self.cols.iter().enumerate() {
            acc.clear();
            for &(mid, w) in col {
                for &(out, v) in &then.cols[mid as usize] {
                    *acc.entry(out).or_insert(c64::new(0.0, 0.0)) += w * v;
                }
            }
            let mut targets: Vec<Target> = acc
                .iter()
                .filter(|(_, v)| v.norm() > 0.0)
                .map(|(&k, &v)| (k, v))
                .collect();
            targets.sort_by_key(|t| t.0);
            m.cols[i] = targets;
        }
        m
    }

    /// Merges duplicate targets and drops zero weights.
    fn canonicalize(&mut self) {
        for col in &mut self.cols {
            col.sort_by_key(|t| t.0);
            let mut merged: Vec<Target> = Vec::with_capacity(col.len());
            for &(k, v) in col.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == k => last.1 += v,
                    _ => merged.push((k, v)),
                }
            }
            merged.retain(|t| t.1.norm() > 0.0);
            *col = merged;
        }
    }

    /// Applies the map to a dense matrix.
    pub fn apply(&self, x: &Mat<c64>) -> Mat<c64> {
        assert_eq!(x.nrows(), self.n_in);
        let mut out = Mat::<c64>::zeros(self.n_out, self.n_out);
        for r in 0..self.n_in {
            for c in 0..self.n_in {
                let v = x[(r, c)];
                if v == c64::new(0.0, 0.0) {
                    continue;
                }
                for &(o, w) in self.targets(r, c) {
                    let o = o as usize;
                    out[(o / self.n_out, o % self.n_out)] += w * v;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, Rng};
    use crate::tensor::{eigvalsh, max_abs, HermitianOperator};

    fn lay() -> SubsystemLayout {
        SubsystemLayout::new([("A", 2), ("B", 3), ("C", 2)]).unwrap()
    }

    #[test]
    fn structural_maps_match_dense_operations() {
        let mut rng = Rng::seed(4);
        let x = random_hermitian(&mut rng, lay());
        let (pt, out) = LinMap::partial_trace(&lay(), &["B"]).unwrap();
        let want = x.ptrace(&["B"]).unwrap();
        assert_eq!(&out, want.layout());
        assert!(max_abs(&(&pt.apply(x.matrix()) - want.matrix())) < 1e-13);

        let tr = LinMap::partial_transpose(&lay(), &["A", "C"]).unwrap();
        let want = x.ptranspose(&["A", "C"]).unwrap();
        assert!(max_abs(&(&tr.apply(x.matrix()) - want.matrix())) < 1e-15);

        let (perm, _) = LinMap::permutation(&lay(), &["C", "A", "B"]).unwrap();
        let want = x.permute(&["C", "A", "B"]).unwrap();
        assert!(max_abs(&(&perm.apply(x.matrix()) - want.matrix())) < 1e-15);

        let small = x.ptrace(&["A"]).unwrap();
        let ex = LinMap::expansion(small.layout(), &lay()).unwrap();
        let want = small.expand_to(&lay()).unwrap();
        assert!(max_abs(&(&ex.apply(small.matrix()) - want.matrix())) < 1e-15);
    }

    #[test]
    fn composition_matches_sequential_application() {
        let mut rng = Rng::seed(6);
        let x = random_hermitian(&mut rng, lay());
        let tr = LinMap::partial_transpose(&lay(), &["B"]).unwrap();
        let (pt, _) = LinMap::partial_trace(&lay(), &["C"]).unwrap();
        let both = tr.then(&pt);
        let seq = pt.apply(&tr.apply(x.matrix()));
        assert!(max_abs(&(&both.apply(x.matrix()) - &seq)) < 1e-13);
        let sum = tr.add(&tr.scale(-1.0));
        assert!(max_abs(&sum.apply(x.matrix())) < 1e-15);
    }

    #[test]
    fn trace_functional() {
        let mut rng = Rng::seed(8);
        let x = random_hermitian(&mut rng, lay());
        let c = random_hermitian(&mut rng, lay());
        let f = LinMap::trace_against(c.matrix());
        let got = f.apply(x.matrix())[(0, 0)];
        assert!((got.re - c.inner(&x).unwrap()).abs() < 1e-12);
        assert!(got.im.abs() < 1e-12);
    }

    #[test]
    fn real_embedding_doubles_spectrum() {
        let mut rng = Rng::seed(10);
        let single = SubsystemLayout::new([("A", 3)]).unwrap();
        let h: HermitianOperator = random_hermitian(&mut rng, single);
        let e = LinMap::real_embedding(3).apply(h.matrix());
        for j in 0..6 {
            for i in 0..6 {
                assert!(e[(i, j)].im.abs() < 1e-15);
                assert!((e[(i, j)] - e[(j, i)]).norm() < 1e-15);
            }
        }
        let ev = eigvalsh(&e);
        let base = h.eigenvalues();
        for k in 0..3 {
            assert!((ev[2 * k] - base[k]).abs() < 1e-12);
            assert!((ev[2 * k + 1] - base[k]).abs() < 1e-12);
        }
    }
}
