//! Infeasible-start primal-dual interior-point method for block-diagonal
//! complex Hermitian semidefinite programs.
//!
//! The solver works on the pair
//!
//! ```text
//! (P)  min <C, X> + g'w   s.t.  A(X) + F w = b,  X ⪰ 0
//! (D)  max b'y            s.t.  A*(y) + Z = C,   F'y = g,  Z ⪰ 0
//! ```
//!
//! where `X`, `Z` and `C` are block diagonal, `A(X)_k = Re Tr(A_k X)` and
//! `A*(y) = sum_k y_k A_k`. Search directions use the HKM scaling with a
//! Mehrotra predictor-corrector step.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, Side};
use rayon::prelude::*;
use std::ops::Range;

/// One nonzero entry of a constraint matrix `A_k`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Entry {
    pub block: u32,
    pub r: u32,
    pub c: u32,
    pub v: c64,
}

/// A block-diagonal SDP in the form above.
#[derive(Clone, Debug, Default)]
pub(crate) struct CoreSdp {
    /// Side of every block.
    pub blocks: Vec<usize>,
    /// Nonzero entries of each `A_k` (both triangles), grouped by block.
    pub a: Vec<Vec<Entry>>,
    /// Cost blocks.
    pub c: Vec<Mat<c64>>,
    /// Right-hand side of the primal equalities.
    pub b: Vec<f64>,
    /// Columns of `F`, sparse over the `m` rows.
    pub f: Vec<Vec<(usize, f64)>>,
    /// Cost of the free variables.
    pub g: Vec<f64>,
}

/// Solver settings.
#[derive(Clone, Copy, Debug)]
pub(crate) struct IpmSettings {
    pub tol: f64,
    pub max_iter: usize,
}

/// How the iteration ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum IpmOutcome {
    Converged,
    /// A ray certifying that (P) has no feasible point was found.
    PrimalInfeasible,
    /// A ray certifying that (D) has no feasible point was found.
    DualInfeasible,
    MaxIterations,
    Stalled,
}

/// Final iterate.
#[derive(Clone, Debug)]
pub(crate) struct IpmResult {
    pub outcome: IpmOutcome,
    pub x: Vec<Mat<c64>>,
    pub z: Vec<Mat<c64>>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub pobj: f64,
    pub dobj: f64,
    pub iterations: usize,
}

/// `Re Tr(a b)`.
fn inner(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        let acol = a.col_as_slice(j);
        for (i, av) in acol.iter().enumerate() {
            let bv = b[(j, i)];
            acc += av.re * bv.re - av.im * bv.im;
        }
    }
    acc
}

fn frob_sq(a: &Mat<c64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for v in a.col_as_slice(j) {
            acc += v.norm_sqr();
        }
    }
    acc
}

fn herm(a: &Mat<c64>) -> Mat<c64> {
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn chol_lower(a: &Mat<c64>) -> Option<Mat<c64>> {
    a.llt(Side::Lower).ok().map(|l| l.L().to_owned())
}

fn lower_inverse(l: &Mat<c64>) -> Mat<c64> {
    let n = l.nrows();
    let mut inv = Mat::<c64>::identity(n, n);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(
        l.as_ref(),
        inv.as_mut(),
        faer::Par::Seq,
    );
    inv
}

/// Largest `alpha` with `X + alpha dX ⪰ 0`, given the Cholesky factor of `X`.
fn max_step(l: &Mat<c64>, dx: &Mat<c64>) -> f64 {
    let linv = lower_inverse(l);
    let s = &linv * dx * linv.adjoint();
    let lam = crate::tensor::eigvalsh(&s);
    match lam.first() {
        Some(&min) if min < 0.0 => -1.0 / min,
        _ => f64::INFINITY,
    }
}

struct Layout {
    /// For each row: the blocks it touches with the entry range.
    row_blocks: Vec<Vec<(usize, Range<usize>)>>,
    /// For each block: the rows touching it, in increasing order.
    block_rows: Vec<Vec<(usize, Range<usize>)>>,
}

impl CoreSdp {
    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn p(&self) -> usize {
        self.g.len()
    }

    fn layout(&self) -> Layout {
        let mut row_blocks = Vec::with_capacity(self.m());
        let mut block_rows = vec![Vec::new(); self.blocks.len()];
        for (k, row) in self.a.iter().enumerate() {
            let mut spans = Vec::new();
            let mut start = 0;
            while start < row.len() {
                let blk = row[start].block as usize;
                let mut end = start;
                while end < row.len() && row[end].block as usize == blk {
                    end += 1;
                }
                spans.push((blk, start..end));
                block_rows[blk].push((k, start..end));
                start = end;
            }
            row_blocks.push(spans);
        }
        Layout {
            row_blocks,
            block_rows,
        }
    }

    fn apply_a(&self, x: &[Mat<c64>]) -> Vec<f64> {
        self.a
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| (e.v * x[e.block as usize][(e.c as usize, e.r as usize)]).re)
                    .sum()
            })
            .collect()
    }

    fn apply_at(&self, y: &[f64]) -> Vec<Mat<c64>> {
        let mut out: Vec<Mat<c64>> = self.blocks.iter().map(|&n| Mat::zeros(n, n)).collect();
        for (k, row) in self.a.iter().enumerate() {
            if y[k] == 0.0 {
                continue;
            }
            for e in row {
                out[e.block as usize][(e.r as usize, e.c as usize)] += e.v * y[k];
            }
        }
        out
    }

    fn f_mul(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for (i, col) in self.f.iter().enumerate() {
            for &(k, v) in col {
                out[k] += v * w[i];
            }
        }
        out
    }

    fn ft_mul(&self, y: &[f64]) -> Vec<f64> {
        self.f
            .iter()
            .map(|col| col.iter().map(|&(k, v)| v * y[k]).sum())
            .collect()
    }

    /// Schur complement `M_kl = Re Tr(A_k X A_l Z^-1)`.
    fn schur(&self, lay: &Layout, x: &[Mat<c64>], zinv: &[Mat<c64>]) -> Mat<f64> {
        let m = self.m();
        let cols: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|l| {
                let mut col = vec![0.0; l + 1];
                for (j, range) in &lay.row_blocks[l] {
                    let n = self.blocks[*j];
                    let xj = &x[*j];
                    let zj = &zinv[*j];
                    // G = X A_l Z^-1, accumulated one entry of A_l at a time.
                    let mut g = Mat::<c64>::zeros(n, n);
                    for e in &self.a[l][range.clone()] {
                        let (r, s) = (e.r as usize, e.c as usize);
                        let xr = xj.col_as_slice(r);
                        for ci in 0..n {
                            let zs = zj[(s, ci)] * e.v;
                            let gcol = g.col_as_slice_mut(ci);
                            for (gv, xv) in gcol.iter_mut().zip(xr) {
                                *gv += *xv * zs;
                            }
                        }
                    }
                    for (k, rk) in &lay.block_rows[*j] {
                        if *k > l {
                            break;
                        }
                        let mut acc = 0.0;
                        for e in &self.a[*k][rk.clone()] {
                            let gv = g[(e.c as usize, e.r as usize)];
                            acc += e.v.re * gv.re - e.v.im * gv.im;
                        }
                        col[*k] += acc;
                    }
                }
                col
            })
            .collect();
        let mut mm = Mat::<f64>::zeros(m, m);
        for (l, col) in cols.iter().enumerate() {
            for (k, v) in col.iter().enumerate() {
                mm[(k, l)] = *v;
                mm[(l, k)] = *v;
            }
        }
        mm
    }
}

/// Factorized Newton system `[M F; F' 0]`.
///
/// `M` is factored by Cholesky when possible. The free columns `F` are then
/// eliminated through the small dense matrix `F' M^-1 F`. The bordered
/// system falls back to a Bunch-Kaufman factorization when `M` is not
/// numerically positive definite.
struct Newton<'a> {
    sdp: &'a CoreSdp,
    mm: Mat<f64>,
    llt: Option<faer::linalg::solvers::Llt<f64>>,
    /// `M^-1 F`, one column per free variable.
    minv_f: Mat<f64>,
    /// Factorization of `F' M^-1 F`.
    border: Option<faer::linalg::solvers::Lblt<f64>>,
    lblt: Option<faer::linalg::solvers::Lblt<f64>>,
}

impl<'a> Newton<'a> {
    fn new(sdp: &'a CoreSdp, mut mm: Mat<f64>) -> Self {
        let (m, p) = (sdp.m(), sdp.p());
        let maxdiag = (0..m).map(|i| mm[(i, i)].abs()).fold(0.0, f64::max);
        let reg = 1e-14 * (1.0 + maxdiag);
        // Coordinates absent from every block leave an empty row in `M`;
        // only the bordered factorization can pin them through `F`.
        let mindiag = (0..m).map(|i| mm[(i, i)]).fold(f64::INFINITY, f64::min);
        for i in 0..m {
            mm[(i, i)] += reg;
        }
        let llt = if mindiag > 1e3 * reg || p == 0 {
            mm.llt(Side::Lower).ok()
        } else {
            None
        };
        for i in 0..m {
            mm[(i, i)] -= reg;
        }
        if let Some(llt) = llt {
            let mut minv_f = Mat::<f64>::zeros(m, p);
            for (i, col) in sdp.f.iter().enumerate() {
                for &(r, v) in col {
                    minv_f[(r, i)] = v;
                }
            }
            llt.solve_in_place(minv_f.as_mut());
            let mut schur = Mat::<f64>::zeros(p, p);
            for (i, col) in sdp.f.iter().enumerate() {
                for j in 0..p {
                    schur[(i, j)] = col.iter().map(|&(r, v)| v * minv_f[(r, j)]).sum();
                }
            }
            let border = (p > 0).then(|| schur.lblt(Side::Lower));
            return Self {
                sdp,
                mm,
                llt: Some(llt),
                minv_f,
                border,
                lblt: None,
            };
        }
        let mut k = Mat::<f64>::zeros(m + p, m + p);
        for j in 0..m {
            for i in 0..m {
                k[(i, j)] = mm[(i, j)];
            }
            k[(j, j)] += reg;
        }
        for (i, col) in sdp.f.iter().enumerate() {
            for &(r, v) in col {
                k[(r, m + i)] = v;
                k[(m + i, r)] = v;
            }
            k[(m + i, m + i)] = -reg;
        }
        let lblt = k.lblt(Side::Lower);
        Self {
            sdp,
            mm,
            llt: None,
            minv_f: Mat::zeros(0, 0),
            border: None,
            lblt: Some(lblt),
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (m, p) = (self.sdp.m(), self.sdp.p());
        let mut out = vec![0.0; m + p];
        for j in 0..m {
            let vj = v[j];
            if vj == 0.0 {
                continue;
            }
            let col = self.mm.col_as_slice(j);
            for (o, c) in out[..m].iter_mut().zip(col) {
                *o += c * vj;
            }
        }
        let fw = self.sdp.f_mul(&v[m..]);
        for i in 0..m {
            out[i] += fw[i];
        }
        let fty = self.sdp.ft_mul(&v[..m]);
        out[m..].copy_from_slice(&fty);
        out
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (m, p) = (self.sdp.m(), self.sdp.p());
        if let Some(llt) = &self.llt {
            // M u = r1, then (F' M^-1 F) dw = F' u - r2 and dy = u - M^-1 F dw.
            let mut u = Mat::<f64>::from_fn(m, 1, |i, _| rhs[i]);
            llt.solve_in_place(u.as_mut());
            let mut dy: Vec<f64> = (0..m).map(|i| u[(i, 0)]).collect();
            if let Some(border) = &self.border {
                let ftu = self.sdp.ft_mul(&dy);
                let mut dw = Mat::<f64>::from_fn(p, 1, |i, _| ftu[i] - rhs[m + i]);
                border.solve_in_place(dw.as_mut());
                for j in 0..p {
                    let wj = dw[(j, 0)];
                    for (yi, c) in dy.iter_mut().zip(self.minv_f.col_as_slice(j)) {
                        *yi -= c * wj;
                    }
                }
                dy.extend((0..p).map(|j| dw[(j, 0)]));
            }
            return dy;
        }
        let n = rhs.len();
        let mut r = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        if let Some(lblt) = &self.lblt {
            lblt.solve_in_place(r.as_mut());
        }
        (0..n).map(|i| r[(i, 0)]).collect()
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut sol = self.raw_solve(rhs);
        for _ in 0..2 {
            let applied = self.apply(&sol);
            let res: Vec<f64> = rhs.iter().zip(&applied).map(|(a, b)| a - b).collect();
            let d = self.raw_solve(&res);
            for (s, di) in sol.iter_mut().zip(d) {
                *s += di;
            }
        }
        sol
    }
}

/// Runs the interior-point iteration.
pub(crate) fn solve(sdp: &CoreSdp, settings: IpmSettings) -> IpmResult {
    let (m, p) = (sdp.m(), sdp.p());
    let nb = sdp.blocks.len();
    let ntot: usize = sdp.blocks.iter().sum::<usize>().max(1);
    let lay = sdp.layout();

    // Starting point scaled to the data.
    let mut x = Vec::with_capacity(nb);
    let mut z = Vec::with_capacity(nb);
    for (j, &n) in sdp.blocks.iter().enumerate() {
        let nf = n as f64;
        let mut ratio: f64 = 0.0;
        let mut anorm: f64 = 0.0;
        for (k, range) in &lay.block_rows[j] {
            let fro = sdp.a[*k][range.clone()]
                .iter()
                .map(|e| e.v.norm_sqr())
                .sum::<f64>()
                .sqrt();
            ratio = ratio.max((1.0 + sdp.b[*k].abs()) / (1.0 + fro));
            anorm = anorm.max(fro);
        }
        let cnorm = frob_sq(&sdp.c[j]).sqrt();
        let xi = 10f64.max(nf.sqrt()).max(nf * ratio);
        let eta = 10f64.max(nf.sqrt()).max(anorm).max(cnorm);
        x.push(Mat::<c64>::identity(n, n) * faer::Scale(c64::new(xi, 0.0)));
        z.push(Mat::<c64>::identity(n, n) * faer::Scale(c64::new(eta, 0.0)));
    }
    let mut y = vec![0.0; m];
    let mut w = vec![0.0; p];

    let bnorm = norm2(&sdp.b);
    let cnorm = sdp.c.iter().map(frob_sq).sum::<f64>().sqrt() + norm2(&sdp.g);

    let mut outcome = IpmOutcome::MaxIterations;
    let mut iterations = 0;
    let mut tau = 0.9;
    let mut stalls = 0;

    let objectives = |x: &[Mat<c64>], y: &[f64], w: &[f64]| {
        let pobj: f64 = x.iter().zip(&sdp.c).map(|(a, b)| inner(a, b)).sum::<f64>()
            + sdp.g.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let dobj: f64 = sdp.b.iter().zip(y).map(|(a, b)| a * b).sum();
        (pobj, dobj)
    };

    for it in 0..settings.max_iter {
        iterations = it;
        // Residuals.
        let ax = sdp.apply_a(&x);
        let fw = sdp.f_mul(&w);
        let rp: Vec<f64> = (0..m).map(|k| sdp.b[k] - ax[k] - fw[k]).collect();
        let aty = sdp.apply_at(&y);
        let rd: Vec<Mat<c64>> = (0..nb).map(|j| &sdp.c[j] - &aty[j] - &z[j]).collect();
        let fty = sdp.ft_mul(&y);
        let rg: Vec<f64> = (0..p).map(|i| sdp.g[i] - fty[i]).collect();
        let (pobj, dobj) = objectives(&x, &y, &w);
        let mu = x.iter().zip(&z).map(|(a, b)| inner(a, b)).sum::<f64>() / ntot as f64;

        let pinf = norm2(&rp) / (1.0 + bnorm);
        let dinf = (rd.iter().map(frob_sq).sum::<f64>() + rg.iter().map(|v| v * v).sum::<f64>())
            .sqrt()
            / (1.0 + cnorm);
        let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if pinf < settings.tol && dinf < settings.tol && relgap < settings.tol {
            outcome = IpmOutcome::Converged;
            break;
        }

        // Infeasibility certificates from diverging iterates.
        if dobj > 0.0 {
            let ray = (0..nb)
                .map(|j| frob_sq(&(&aty[j] + &z[j])))
                .sum::<f64>()
                .sqrt()
                + norm2(&fty);
            if ray / dobj < 1e-8 {
                outcome = IpmOutcome::PrimalInfeasible;
                break;
            }
        }
        if pobj < 0.0 {
            let ray: f64 = norm2(&(0..m).map(|k| ax[k] + fw[k]).collect::<Vec<_>>());
            if ray / -pobj < 1e-8 {
                outcome = IpmOutcome::DualInfeasible;
                break;
            }
        }

        // Factorizations.
        let mut zinv = Vec::with_capacity(nb);
        let mut lx = Vec::with_capacity(nb);
        let mut lz = Vec::with_capacity(nb);
        let mut ok = true;
        for j in 0..nb {
            match (chol_lower(&x[j]), chol_lower(&z[j])) {
                (Some(a), Some(b)) => {
                    let linv = lower_inverse(&b);
                    zinv.push(linv.adjoint() * &linv);
                    lx.push(a);
                    lz.push(b);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            outcome = IpmOutcome::Stalled;
            break;
        }
        let mm = sdp.schur(&lay, &x, &zinv);
        let newton = Newton::new(sdp, mm);

        // Solves for one right-hand side `R_c` of the complementarity equation.
        let direction = |rc: &[Mat<c64>]| {
            let t: Vec<Mat<c64>> = (0..nb)
                .map(|j| (&rc[j] - &x[j] * &rd[j]) * &zinv[j])
                .collect();
            let at = sdp.apply_a(&t);
            let mut rhs: Vec<f64> = (0..m).map(|k| rp[k] - at[k]).collect();
            rhs.extend_from_slice(&rg);
            let sol = newton.solve(&rhs);
            let dy = sol[..m].to_vec();
            let dw = sol[m..].to_vec();
            let atdy = sdp.apply_at(&dy);
            let dz: Vec<Mat<c64>> = (0..nb).map(|j| &rd[j] - &atdy[j]).collect();
            let dx: Vec<Mat<c64>> = (0..nb)
                .map(|j| herm(&((&rc[j] - &x[j] * &dz[j]) * &zinv[j])))
                .collect();
            (dx, dy, dz, dw)
        };
        let steps = |dx: &[Mat<c64>], dz: &[Mat<c64>]| {
            let ap = (0..nb).map(|j| max_step(&lx[j], &dx[j])).fold(f64::INFINITY, f64::min);
            let ad = (0..nb).map(|j| max_step(&lz[j], &dz[j])).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // Predictor.
        let rc_aff: Vec<Mat<c64>> = (0..nb).map(|j| -(&x[j] * &z[j])).collect();
        let (dxa, _, dza, _) = direction(&rc_aff);
        let (ap, ad) = steps(&dxa, &dza);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff = (0..nb)
            .map(|j| {
                inner(
                    &(&x[j] + &dxa[j] * faer::Scale(c64::new(ap, 0.0))),
                    &(&z[j] + &dza[j] * faer::Scale(c64::new(ad, 0.0))),
                )
            })
            .sum::<f64>()
            / ntot as f64;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // Corrector.
        let rc: Vec<Mat<c64>> = (0..nb)
            .map(|j| {
                let n = sdp.blocks[j];
                Mat::<c64>::identity(n, n) * faer::Scale(c64::new(sigma * mu, 0.0))
                    - &x[j] * &z[j]
                    - &dxa[j] * &dza[j]
            })
            .collect();
        let (dx, dy, dz, dw) = direction(&rc);
        let (ap, ad) = steps(&dx, &dz);
        let ap = (tau * ap).min(1.0);
        let ad = (tau * ad).min(1.0);
        tau = (0.9 + 0.09 * ap.min(ad)).min(0.99);

        for j in 0..nb {
            x[j] += &dx[j] * faer::Scale(c64::new(ap, 0.0));
            z[j] += &dz[j] * faer::Scale(c64::new(ad, 0.0));
            x[j] = herm(&x[j]);
            z[j] = herm(&z[j]);
        }
        for (wi, d) in w.iter_mut().zip(&dw) {
            *wi += ap * d;
        }
        for (yi, d) in y.iter_mut().zip(&dy) {
            *yi += ad * d;
        }
        if ap < 1e-9 && ad < 1e-9 {
            stalls += 1;
            if stalls >= 3 {
                outcome = IpmOutcome::Stalled;
                break;
            }
        } else {
            stalls = 0;
        }
        iterations = it + 1;
    }

    let (pobj, dobj) = objectives(&x, &y, &w);
    IpmResult {
        outcome,
        x,
        z,
        y,
        w,
        pobj,
        dobj,
        iterations,
    }
}
