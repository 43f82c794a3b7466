//! Lowering of a [`ConicProgram`] to the block-diagonal core form.
//!
//! Every Hermitian variable of side `n` is described by `n^2` real
//! coordinates in the orthonormal basis
//! `E_aa`, `(E_ab + E_ba)/sqrt(2)`, `i(E_ab - E_ba)/sqrt(2)` (`a < b`).
//! Equality constraints are expanded on a generalized Gell-Mann basis of
//! their output space, and linearly dependent rows are removed.
//!
//! Two lowerings are available. In the *LMI* direction the coordinates are
//! the dual vector `y` of the core problem and every PSD constraint is a
//! block of `Z`. In the *standard* direction every variable that carries a
//! plain `X ⪰ 0` constraint becomes a block of `X`, the remaining PSD
//! constraints get slack blocks, and all other coordinates are free.

use super::ipm::{CoreSdp, Entry};
use super::model::{ConicProgram, Sense};
use faer::{c64, Mat};
use std::f64::consts::SQRT_2;

/// Coordinates of Hermitian matrices of one side length.
#[derive(Clone, Debug)]
pub(crate) struct HermBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl HermBasis {
    pub fn new(n: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for a in 0..n {
            for b in a + 1..n {
                pairs.push((a, b));
            }
        }
        Self { n, pairs }
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    fn pair_index(&self, a: usize, b: usize) -> usize {
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    /// Entries `(r, c, value)` of basis element `local`.
    pub fn entries(&self, local: usize) -> Vec<(usize, usize, c64)> {
        let h = 1.0 / SQRT_2;
        if local < self.n {
            return vec![(local, local, c64::new(1.0, 0.0))];
        }
        let idx = local - self.n;
        let (a, b) = self.pairs[idx / 2];
        if idx % 2 == 0 {
            vec![(a, b, c64::new(h, 0.0)), (b, a, c64::new(h, 0.0))]
        } else {
            vec![(a, b, c64::new(0.0, h)), (b, a, c64::new(0.0, -h))]
        }
    }

    /// Coordinates `<B_l, H>` contributed by the upper-triangle entries of
    /// a sparse Hermitian matrix.
    pub fn sparse_coords(&self, entries: &[(usize, usize, c64)]) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for &(r, c, v) in entries {
            if r == c {
                out.push((r, v.re));
            } else if r < c {
                let p = self.pair_index(r, c);
                out.push((self.n + 2 * p, SQRT_2 * v.re));
                out.push((self.n + 2 * p + 1, SQRT_2 * v.im));
            }
        }
        out
    }

    pub fn coords(&self, h: &Mat<c64>) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for a in 0..self.n {
            out[a] = h[(a, a)].re;
        }
        for (p, &(a, b)) in self.pairs.iter().enumerate() {
            let v = (h[(a, b)] + h[(b, a)].conj()) * 0.5;
            out[self.n + 2 * p] = SQRT_2 * v.re;
            out[self.n + 2 * p + 1] = SQRT_2 * v.im;
        }
        out
    }

    pub fn matrix(&self, coords: &[f64]) -> Mat<c64> {
        let mut h = Mat::<c64>::zeros(self.n, self.n);
        for a in 0..self.n {
            h[(a, a)] = c64::new(coords[a], 0.0);
        }
        for (p, &(a, b)) in self.pairs.iter().enumerate() {
            let v = c64::new(coords[self.n + 2 * p], coords[self.n + 2 * p + 1]) / SQRT_2;
            h[(a, b)] = v;
            h[(b, a)] = v.conj();
        }
        h
    }

    /// Generalized Gell-Mann coordinates of a sparse Hermitian matrix.
    ///
    /// Row 0 is `1/sqrt(n)`, rows `1..n` are the diagonal elements
    /// `(sum_{j<l} E_jj - l E_ll)/sqrt(l(l+1))`, followed by the symmetric
    /// and antisymmetric off-diagonal elements of each pair `a < b`.
    pub fn ggm_coords(&self, entries: &[(usize, usize, c64)]) -> Vec<(usize, f64)> {
        let n = self.n;
        let mut out = Vec::new();
        for &(r, c, v) in entries {
            if r == c {
                out.push((0, v.re / (n as f64).sqrt()));
                if r >= 1 {
                    let l = r as f64;
                    out.push((r, -l * v.re / (l * (l + 1.0)).sqrt()));
                }
                for l in r + 1..n {
                    let lf = l as f64;
                    out.push((l, v.re / (lf * (lf + 1.0)).sqrt()));
                }
            } else if r < c {
                let p = self.pair_index(r, c);
                out.push((n + 2 * p, SQRT_2 * v.re));
                out.push((n + 2 * p + 1, -SQRT_2 * v.im));
            }
        }
        out
    }

    /// Matrix `sum_i coords_i G_i` for Gell-Mann coordinates.
    pub fn ggm_matrix(&self, coords: &[f64]) -> Mat<c64> {
        let n = self.n;
        let mut h = Mat::<c64>::zeros(n, n);
        for a in 0..n {
            h[(a, a)] += c64::new(coords[0] / (n as f64).sqrt(), 0.0);
        }
        for l in 1..n {
            let lf = l as f64;
            let s = coords[l] / (lf * (lf + 1.0)).sqrt();
            for j in 0..l {
                h[(j, j)] += c64::new(s, 0.0);
            }
            h[(l, l)] += c64::new(-lf * s, 0.0);
        }
        for (p, &(a, b)) in self.pairs.iter().enumerate() {
            let sym = coords[n + 2 * p] / SQRT_2;
            let anti = coords[n + 2 * p + 1] / SQRT_2;
            // (E_ab + E_ba) sym + (-i E_ab + i E_ba) anti
            h[(a, b)] += c64::new(sym, -anti);
            h[(b, a)] += c64::new(sym, anti);
        }
        h
    }
}

fn merge_sparse<K: Ord + Copy>(mut v: Vec<(K, f64)>) -> Vec<(K, f64)> {
    v.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(K, f64)> = Vec::with_capacity(v.len());
    for (k, x) in v {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += x,
            _ => out.push((k, x)),
        }
    }
    out.retain(|e| e.1.abs() > 1e-15);
    out
}

/// A PSD constraint in coordinates.
#[derive(Clone, Debug)]
pub(crate) struct LoweredPsd {
    pub side: usize,
    pub constant: Mat<c64>,
    /// Image of each coordinate's basis element, as entries.
    pub images: Vec<(usize, Vec<(usize, usize, c64)>)>,
    /// The variable index if the constraint is exactly `X_v ⪰ 0`.
    pub plain: Option<usize>,
}

/// One scalar equality row `coeffs . theta = rhs`.
#[derive(Clone, Debug)]
pub(crate) struct EqRow {
    pub constraint: usize,
    pub ggm_index: usize,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// The program in coordinates, objective written for maximization.
#[derive(Clone, Debug)]
pub(crate) struct Lowered {
    pub n_params: usize,
    pub offsets: Vec<usize>,
    pub bases: Vec<HermBasis>,
    pub objective: Vec<f64>,
    pub objective_const: f64,
    pub psd: Vec<LoweredPsd>,
    pub eq_rows: Vec<EqRow>,
    pub eq_sides: Vec<usize>,
}

/// Outcome of removing dependent rows.
pub(crate) enum Reduced {
    /// Indices of the rows that were kept.
    Kept(Vec<usize>),
    /// Some dependent row has an inconsistent right-hand side.
    Inconsistent,
}

/// Modified Gram-Schmidt over sparse rows of dimension `dim`, carrying the
/// right-hand sides along.
pub(crate) fn independent_rows(rows: &[(Vec<(usize, f64)>, f64)], dim: usize) -> Reduced {
    let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut kept = Vec::new();
    let scale = rows.iter().map(|r| r.1.abs()).fold(1.0, f64::max);
    for (i, (coeffs, rhs)) in rows.iter().enumerate() {
        let norm0 = coeffs.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt();
        let mut v = vec![0.0; dim];
        for &(k, x) in coeffs {
            v[k] += x;
        }
        let mut g = *rhs;
        for (q, gq) in &basis {
            let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            if dot != 0.0 {
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
                g -= dot * gq;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-9 * norm0.max(1e-300) || norm0 == 0.0 {
            if g.abs() > 1e-9 * scale {
                return Reduced::Inconsistent;
            }
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push((v, g / norm));
        kept.push(i);
    }
    Reduced::Kept(kept)
}

fn image_of(
    map: &super::linmap::LinMap,
    basis_entries: &[(usize, usize, c64)],
) -> Vec<(usize, usize, c64)> {
    let n_out = map.n_out();
    let mut acc: Vec<(u32, c64)> = Vec::new();
    for &(r, c, v) in basis_entries {
        for &(o, w) in map.targets(r, c) {
            acc.push((o, v * w));
        }
    }
    acc.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, usize, c64)> = Vec::with_capacity(acc.len());
    let mut last: Option<u32> = None;
    for (o, v) in acc {
        if last == Some(o) {
            out.last_mut().expect("nonempty").2 += v;
        } else {
            out.push((o as usize / n_out, o as usize % n_out, v));
            last = Some(o);
        }
    }
    out.retain(|e| e.2.norm() > 1e-15);
    out
}

/// Lowers a program to coordinates. `detect_plain` enables recognition
/// of plain `X ⪰ 0` constraints.
pub(crate) fn lower(p: &ConicProgram, detect_plain: bool) -> Lowered {
    let vars = p.variables();
    let mut offsets = Vec::with_capacity(vars.len());
    let mut bases = Vec::with_capacity(vars.len());
    let mut n_params = 0;
    for v in vars {
        offsets.push(n_params);
        let b = HermBasis::new(v.layout.dim());
        n_params += b.len();
        bases.push(b);
    }
    let sign = match p.sense() {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };

    let mut objective = vec![0.0; n_params];
    let obj = p.objective();
    for (v, map) in obj.terms() {
        let b = &bases[v.index()];
        for l in 0..b.len() {
            let img = image_of(map, &b.entries(l));
            let val: f64 = img.iter().map(|e| e.2.re).sum();
            objective[offsets[v.index()] + l] += sign * val;
        }
    }
    let objective_const = sign * obj.constant_part()[(0, 0)].re;

    let mut psd = Vec::with_capacity(p.psd_constraints().len());
    for c in p.psd_constraints() {
        let e = &c.expr;
        let mut images = Vec::new();
        for (v, map) in e.terms() {
            let b = &bases[v.index()];
            for l in 0..b.len() {
                let img = image_of(map, &b.entries(l));
                if !img.is_empty() {
                    images.push((offsets[v.index()] + l, img));
                }
            }
        }
        images.sort_by_key(|i| i.0);
        psd.push(LoweredPsd {
            side: e.side(),
            constant: e.constant_part().clone(),
            images,
            plain: if detect_plain {
                e.as_plain_variable().map(|v| v.index())
            } else {
                None
            },
        });
    }

    let mut eq_rows = Vec::new();
    let mut eq_sides = Vec::new();
    for (ci, c) in p.eq_constraints().iter().enumerate() {
        let e = &c.expr;
        let s = e.side();
        eq_sides.push(s);
        let hb = HermBasis::new(s);
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); s * s];
        for (v, map) in e.terms() {
            let b = &bases[v.index()];
            for l in 0..b.len() {
                let img = image_of(map, &b.entries(l));
                for (row, x) in hb.ggm_coords(&img) {
                    per_row[row].push((offsets[v.index()] + l, x));
                }
            }
        }
        let k = e.constant_part();
        let mut const_entries = Vec::new();
        for cc in 0..s {
            for r in 0..s {
                if k[(r, cc)] != c64::new(0.0, 0.0) {
                    const_entries.push((r, cc, k[(r, cc)]));
                }
            }
        }
        let mut rhs = vec![0.0; s * s];
        for (row, x) in hb.ggm_coords(&const_entries) {
            rhs[row] -= x;
        }
        for (row, coeffs) in per_row.into_iter().enumerate() {
            let coeffs = merge_sparse(coeffs);
            if coeffs.is_empty() && rhs[row].abs() <= 1e-15 {
                continue;
            }
            eq_rows.push(EqRow {
                constraint: ci,
                ggm_index: row,
                coeffs,
                rhs: rhs[row],
            });
        }
    }

    Lowered {
        n_params,
        offsets,
        bases,
        objective,
        objective_const,
        psd,
        eq_rows,
        eq_sides,
    }
}

/// Which formulation feeds the interior-point core.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    /// Coordinates are the dual vector; PSD constraints are LMIs.
    Lmi,
    /// Plain PSD variables are cone blocks; other constraints use slacks.
    Standard,
}

/// A lowered program ready for the interior-point core, with the
/// bookkeeping needed to map results back.
pub(crate) struct Compiled {
    pub direction: Direction,
    pub core: CoreSdp,
    /// LMI: kept equality rows (index into `eq_rows`) as `F` columns.
    /// Standard: kept equality rows as the leading rows of `A`.
    pub kept_eq: Vec<usize>,
    /// Standard: block of each cone variable.
    pub cone_block: Vec<Option<usize>>,
    /// Standard: block of each PSD constraint.
    pub psd_block: Vec<usize>,
    /// Standard: free coordinate index of each non-cone coordinate.
    pub free_index: Vec<Option<usize>>,
    /// Standard: `F` columns that were kept (index into free coordinates).
    pub kept_free: Vec<usize>,
}

/// Size of the Newton system for each direction, given the kept equality
/// rows: `(lmi, standard)`.
pub(crate) fn newton_sizes(low: &Lowered, n_eq: usize) -> (usize, usize) {
    let lmi = low.n_params + n_eq;
    let (claim, claimed) = cone_assignment(low);
    let mut rows = n_eq;
    for (j, c) in low.psd.iter().enumerate() {
        if !claimed.contains(&j) {
            rows += c.side * c.side;
        }
    }
    let free: usize = (0..low.offsets.len())
        .filter(|v| claim[*v].is_none())
        .map(|v| low.bases[v].len())
        .sum();
    (lmi, rows + free)
}

/// For each variable, the PSD constraint claiming it as a cone block; and
/// the set of claimed constraints.
fn cone_assignment(low: &Lowered) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut claim = vec![None; low.offsets.len()];
    let mut claimed = Vec::new();
    for (j, c) in low.psd.iter().enumerate() {
        if let Some(v) = c.plain {
            if claim[v].is_none() {
                claim[v] = Some(j);
                claimed.push(j);
            }
        }
    }
    (claim, claimed)
}

pub(crate) fn compile_lmi(low: &Lowered, kept_eq: Vec<usize>) -> Compiled {
    let m = low.n_params;
    let mut a: Vec<Vec<Entry>> = vec![Vec::new(); m];
    for (j, c) in low.psd.iter().enumerate() {
        for (k, img) in &c.images {
            for &(r, cc, v) in img {
                a[*k].push(Entry {
                    block: j as u32,
                    r: r as u32,
                    c: cc as u32,
                    v: -v,
                });
            }
        }
    }
    let f = kept_eq.iter().map(|&i| low.eq_rows[i].coeffs.clone()).collect();
    let g = kept_eq.iter().map(|&i| low.eq_rows[i].rhs).collect();
    let core = CoreSdp {
        blocks: low.psd.iter().map(|c| c.side).collect(),
        a,
        c: low.psd.iter().map(|c| c.constant.clone()).collect(),
        b: low.objective.clone(),
        f,
        g,
    };
    Compiled {
        direction: Direction::Lmi,
        core,
        kept_eq,
        cone_block: Vec::new(),
        psd_block: (0..low.psd.len()).collect(),
        free_index: Vec::new(),
        kept_free: Vec::new(),
    }
}

/// Standard-direction lowering. Returns `None` if the free columns are
/// inconsistent with the objective (the program is unbounded).
pub(crate) fn compile_standard(low: &Lowered, kept_eq: Vec<usize>) -> Option<Compiled> {
    let (claim, claimed) = cone_assignment(low);
    let nvars = low.offsets.len();
    let mut blocks = Vec::new();
    let mut cone_block = vec![None; nvars];
    let mut psd_block = vec![usize::MAX; low.psd.len()];
    for v in 0..nvars {
        if let Some(j) = claim[v] {
            cone_block[v] = Some(blocks.len());
            psd_block[j] = blocks.len();
            blocks.push(low.bases[v].len().isqrt());
        }
    }
    let mut slack = Vec::new();
    for (j, c) in low.psd.iter().enumerate() {
        if !claimed.contains(&j) {
            psd_block[j] = blocks.len();
            slack.push(j);
            blocks.push(c.side);
        }
    }
    // Coordinate ownership.
    let mut owner = vec![(usize::MAX, 0usize); low.n_params];
    let mut free_index = vec![None; low.n_params];
    let mut n_free = 0;
    for v in 0..nvars {
        for l in 0..low.bases[v].len() {
            let k = low.offsets[v] + l;
            owner[k] = (v, l);
            if cone_block[v].is_none() {
                free_index[k] = Some(n_free);
                n_free += 1;
            }
        }
    }

    let mut rows: Vec<Vec<Entry>> = Vec::new();
    let mut b = Vec::new();
    let mut fcols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_free];

    let mut push_row = |coeffs: &[(usize, f64)],
                        extra: Vec<Entry>,
                        rhs: f64,
                        rows: &mut Vec<Vec<Entry>>,
                        b: &mut Vec<f64>| {
        let row = rows.len();
        let mut entries = extra;
        for &(k, x) in coeffs {
            let (v, l) = owner[k];
            match cone_block[v] {
                Some(blk) => {
                    for (r, c, val) in low.bases[v].entries(l) {
                        entries.push(Entry {
                            block: blk as u32,
                            r: r as u32,
                            c: c as u32,
                            v: val * x,
                        });
                    }
                }
                None => fcols[free_index[k].expect("free")].push((row, x)),
            }
        }
        entries.sort_by_key(|e| (e.block, e.r, e.c));
        let mut merged: Vec<Entry> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if (last.block, last.r, last.c) == (e.block, e.r, e.c) => {
                    last.v += e.v
                }
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.v.norm() > 1e-15);
        rows.push(merged);
        b.push(rhs);
    };

    for &i in &kept_eq {
        let r = &low.eq_rows[i];
        push_row(&r.coeffs, Vec::new(), r.rhs, &mut rows, &mut b);
    }
    for &j in &slack {
        let c = &low.psd[j];
        let hb = HermBasis::new(c.side);
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); hb.len()];
        for (k, img) in &c.images {
            for (beta, x) in hb.sparse_coords(img) {
                per_row[beta].push((*k, -x));
            }
        }
        let kc = hb.coords(&c.constant);
        let blk = psd_block[j];
        for (beta, coeffs) in per_row.into_iter().enumerate() {
            let coeffs = merge_sparse(coeffs);
            let extra = hb
                .entries(beta)
                .into_iter()
                .map(|(r, cc, v)| Entry {
                    block: blk as u32,
                    r: r as u32,
                    c: cc as u32,
                    v,
                })
                .collect();
            push_row(&coeffs, extra, kc[beta], &mut rows, &mut b);
        }
    }

    let m = rows.len();
    // Cost: minimize the negated objective.
    let mut cmats: Vec<Mat<c64>> = blocks.iter().map(|&n| Mat::zeros(n, n)).collect();
    let mut gfree = vec![0.0; n_free];
    for (k, &ck) in low.objective.iter().enumerate() {
        if ck == 0.0 {
            continue;
        }
        let (v, l) = owner[k];
        match cone_block[v] {
            Some(blk) => {
                for (r, c, val) in low.bases[v].entries(l) {
                    cmats[blk][(r, c)] -= val * ck;
                }
            }
            None => gfree[free_index[k].expect("free")] -= ck,
        }
    }
    let free_rows: Vec<(Vec<(usize, f64)>, f64)> = fcols
        .iter()
        .zip(&gfree)
        .map(|(c, g)| (c.clone(), *g))
        .collect();
    let kept_free = match independent_rows(&free_rows, m) {
        Reduced::Kept(k) => k,
        Reduced::Inconsistent => return None,
    };
    let core = CoreSdp {
        blocks,
        a: rows,
        c: cmats,
        b,
        f: kept_free.iter().map(|&i| fcols[i].clone()).collect(),
        g: kept_free.iter().map(|&i| gfree[i]).collect(),
    };
    Some(Compiled {
        direction: Direction::Standard,
        core,
        kept_eq,
        cone_block,
        psd_block,
        free_index,
        kept_free,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, Rng};
    use crate::tensor::SubsystemLayout;

    #[test]
    fn coordinates_round_trip() {
        let mut rng = Rng::seed(5);
        let h = random_hermitian(&mut rng, SubsystemLayout::single("A", 4));
        let b = HermBasis::new(4);
        let c = b.coords(h.matrix());
        let back = b.matrix(&c);
        assert!(crate::tensor::max_abs(&(&back - h.matrix())) < 1e-14);
        // Orthonormality: the Frobenius norm equals the coordinate norm.
        let fro: f64 = h.inner(&h).unwrap();
        let cn: f64 = c.iter().map(|x| x * x).sum();
        assert!((fro - cn).abs() < 1e-12);
    }

    #[test]
    fn gell_mann_round_trip() {
        let mut rng = Rng::seed(6);
        let h = random_hermitian(&mut rng, SubsystemLayout::single("A", 3));
        let b = HermBasis::new(3);
        let mut entries = Vec::new();
        for c in 0..3 {
            for r in 0..3 {
                entries.push((r, c, h.entry(r, c)));
            }
        }
        let mut coords = vec![0.0; 9];
        for (i, x) in b.ggm_coords(&entries) {
            coords[i] += x;
        }
        let back = b.ggm_matrix(&coords);
        assert!(crate::tensor::max_abs(&(&back - h.matrix())) < 1e-13);
        let cn: f64 = coords.iter().map(|x| x * x).sum();
        assert!((cn - h.inner(&h).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn dependent_rows_are_dropped_and_inconsistency_found() {
        let rows = vec![
            (vec![(0, 1.0), (1, 1.0)], 1.0),
            (vec![(0, 2.0), (1, 2.0)], 2.0),
            (vec![(1, 1.0)], 0.5),
        ];
        match independent_rows(&rows, 2) {
            Reduced::Kept(k) => assert_eq!(k, vec![0, 2]),
            Reduced::Inconsistent => panic!("consistent system"),
        }
        let bad = vec![(vec![(0, 1.0)], 1.0), (vec![(0, 1.0)], 2.0)];
        assert!(matches!(independent_rows(&bad, 1), Reduced::Inconsistent));
    }
}
