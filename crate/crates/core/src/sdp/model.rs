//! Conic programs over complex Hermitian matrix variables.
//!
//! A [`ConicProgram`] holds Hermitian variables (each with a subsystem
//! layout), a real linear objective, affine constraints required to be
//! positive semidefinite, and affine constraints required to vanish.
//! Affine expressions are built with [`Expr`], whose structural operations
//! (partial trace, partial transpose, expansion, permutation) mirror those
//! of [`HermitianOperator`].

use super::linmap::LinMap;
use crate::error::{QbcError, Result};
use crate::tensor::{hermitian_part, HermitianOperator, SubsystemLayout};
use faer::{c64, Mat};
use serde_json::json;
use std::ops::{Add, Mul, Neg, Sub};

/// Handle of a variable inside one [`ConicProgram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    /// Position of the variable in declaration order.
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle of a constraint inside one [`ConicProgram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintId {
    /// Index into the PSD constraints.
    Psd(usize),
    /// Index into the equality constraints.
    Eq(usize),
}

/// Optimization direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    /// Maximize the objective.
    Maximize,
    /// Minimize the objective.
    Minimize,
}

/// A declared Hermitian variable.
#[derive(Clone, Debug)]
pub struct Variable {
    /// Display name.
    pub name: String,
    /// Layout (side length is its dimension).
    pub layout: SubsystemLayout,
}

/// An affine Hermitian-valued expression `sum_v L_v(X_v) + K`.
#[derive(Clone, Debug)]
pub struct Expr {
    layout: SubsystemLayout,
    terms: Vec<(VarId, LinMap)>,
    constant: Mat<c64>,
}

impl Expr {
    /// The zero expression on `layout`.
    pub fn zero(layout: SubsystemLayout) -> Self {
        let n = layout.dim();
        Self {
            layout,
            terms: Vec::new(),
            constant: Mat::zeros(n, n),
        }
    }

    /// A constant expression.
    pub fn constant(op: &HermitianOperator) -> Self {
        Self {
            layout: op.layout().clone(),
            terms: Vec::new(),
            constant: op.matrix().clone(),
        }
    }

    /// The constant `k * 1` on `layout`.
    pub fn identity(layout: SubsystemLayout, k: f64) -> Self {
        Self::constant(&HermitianOperator::identity(layout).scale(k))
    }

    /// The 1x1 constant `k`.
    pub fn scalar(k: f64) -> Self {
        Self::constant(&HermitianOperator::scalar(k))
    }

    /// Layout of the expression's value.
    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    /// Side length of the expression's value.
    pub fn side(&self) -> usize {
        self.layout.dim()
    }

    /// Terms `(variable, linear map)`.
    pub fn terms(&self) -> &[(VarId, LinMap)] {
        &self.terms
    }

    /// Constant part.
    pub fn constant_part(&self) -> &Mat<c64> {
        &self.constant
    }

    /// Variables referenced by the expression.
    pub fn variables(&self) -> Vec<VarId> {
        self.terms.iter().map(|t| t.0).collect()
    }

    fn map_all(&self, map: &LinMap, layout: SubsystemLayout) -> Self {
        Self {
            layout,
            terms: self.terms.iter().map(|(v, l)| (*v, l.then(map))).collect(),
            constant: map.apply(&self.constant),
        }
    }

    /// Partial trace over `drop`.
    pub fn ptrace(&self, drop: &[&str]) -> Result<Self> {
        let (map, layout) = LinMap::partial_trace(&self.layout, drop)?;
        Ok(self.map_all(&map, layout))
    }

    /// Partial transpose on `subset`.
    pub fn ptranspose(&self, subset: &[&str]) -> Result<Self> {
        let map = LinMap::partial_transpose(&self.layout, subset)?;
        Ok(self.map_all(&map, self.layout.clone()))
    }

    /// Reorders factors.
    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        let (map, layout) = LinMap::permutation(&self.layout, order)?;
        Ok(self.map_all(&map, layout))
    }

    /// Tensors with identities on the missing factors of `target`.
    pub fn expand_to(&self, target: &SubsystemLayout) -> Result<Self> {
        if &self.layout == target {
            return Ok(self.clone());
        }
        let map = LinMap::expansion(&self.layout, target)?;
        Ok(self.map_all(&map, target.clone()))
    }

    /// Full trace as a 1x1 expression.
    pub fn trace(&self) -> Self {
        let labels = self.layout.label_refs();
        self.ptrace(&labels).expect("own labels")
    }

    /// `Tr(C X)` as a 1x1 expression, for a constant `C` of the same side.
    pub fn inner(&self, c: &HermitianOperator) -> Result<Self> {
        if c.side() != self.side() {
            return Err(QbcError::DimensionMismatch(format!(
                "inner product of side {} with side {}",
                self.side(),
                c.side()
            )));
        }
        let map = LinMap::trace_against(c.matrix());
        Ok(self.map_all(&map, SubsystemLayout::scalar()))
    }

    /// Renames the factors (dimensions must agree).
    pub fn with_layout(&self, layout: SubsystemLayout) -> Result<Self> {
        if layout.dims() != self.layout.dims() {
            return Err(QbcError::DimensionMismatch(format!(
                "cannot relabel {:?} as {:?}",
                self.layout, layout
            )));
        }
        let mut e = self.clone();
        e.layout = layout;
        Ok(e)
    }

    /// Real embedding `H -> [[Re H, -Im H], [Im H, Re H]]`; the new leading
    /// factor is labelled [`EMBED_LABEL`].
    pub fn real_embedding(&self) -> Self {
        let map = LinMap::real_embedding(self.side());
        let layout = SubsystemLayout::single(EMBED_LABEL, 2)
            .concat(&self.layout)
            .expect("embedding label is reserved");
        self.map_all(&map, layout)
    }

    /// `k * self`.
    pub fn scale(&self, k: f64) -> Self {
        Self {
            layout: self.layout.clone(),
            terms: self.terms.iter().map(|(v, l)| (*v, l.scale(k))).collect(),
            constant: crate::tensor::scaled(&self.constant, k),
        }
    }

    /// `self + other`; layouts must agree.
    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.layout != other.layout {
            return Err(QbcError::DimensionMismatch(format!(
                "adding expressions on {:?} and {:?}",
                self.layout, other.layout
            )));
        }
        let mut terms = self.terms.clone();
        for (v, l) in &other.terms {
            match terms.iter_mut().find(|(w, _)| w == v) {
                Some(slot) => slot.1 = slot.1.add(l),
                None => terms.push((*v, l.clone())),
            }
        }
        Ok(Self {
            layout: self.layout.clone(),
            terms,
            constant: &self.constant + &other.constant,
        })
    }

    /// `self - other`; layouts must agree.
    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(-1.0))
    }

    /// Evaluates the expression at the given variable values (indexed by
    /// variable position).
    pub fn eval(&self, values: &[HermitianOperator]) -> HermitianOperator {
        let mut acc = self.constant.clone();
        for (v, l) in &self.terms {
            acc += l.apply(values[v.0].matrix());
        }
        HermitianOperator::from_hermitian_part(self.layout.clone(), hermitian_part(&acc))
            .expect("side matches layout")
    }

    /// Whether the expression is exactly one variable (identity map, zero
    /// constant).
    pub(crate) fn as_plain_variable(&self) -> Option<VarId> {
        if self.terms.len() == 1
            && self.terms[0].1.is_identity()
            && crate::tensor::max_abs(&self.constant) == 0.0
        {
            Some(self.terms[0].0)
        } else {
            None
        }
    }
}

/// Label of the factor added by [`Expr::real_embedding`].
pub const EMBED_LABEL: &str = "re|im";

impl Add for Expr {
    type Output = Expr;
    /// Panics on layout mismatch; use [`Expr::try_add`] for a fallible sum.
    fn add(self, rhs: Expr) -> Expr {
        self.try_add(&rhs).expect("expression layouts agree")
    }
}

impl Sub for Expr {
    type Output = Expr;
    /// Panics on layout mismatch; use [`Expr::try_sub`] for a fallible difference.
    fn sub(self, rhs: Expr) -> Expr {
        self.try_sub(&rhs).expect("expression layouts agree")
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.scale(-1.0)
    }
}

impl Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        rhs.scale(self)
    }
}

/// A named constraint.
#[derive(Clone, Debug)]
pub struct Constraint {
    /// Display name.
    pub name: String,
    /// The constrained expression.
    pub expr: Expr,
}

/// A semidefinite program over Hermitian variables.
#[derive(Clone, Debug)]
pub struct ConicProgram {
    name: String,
    vars: Vec<Variable>,
    sense: Sense,
    objective: Expr,
    psd: Vec<Constraint>,
    eqs: Vec<Constraint>,
}

impl ConicProgram {
    /// An empty program (objective zero, sense maximize).
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            vars: Vec::new(),
            sense: Sense::Maximize,
            objective: Expr::scalar(0.0),
            psd: Vec::new(),
            eqs: Vec::new(),
        }
    }

    /// Program name.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Declares a free Hermitian variable.
    pub fn hermitian(&mut self, name: &str, layout: SubsystemLayout) -> VarId {
        self.vars.push(Variable {
            name: name.to_string(),
            layout,
        });
        VarId(self.vars.len() - 1)
    }

    /// Declares a Hermitian variable constrained to be PSD.
    pub fn psd_variable(&mut self, name: &str, layout: SubsystemLayout) -> VarId {
        let v = self.hermitian(name, layout);
        let e = self.var(v);
        self.add_psd(&format!("{name} >= 0"), e)
            .expect("fresh variable");
        v
    }

    /// Declares a free real scalar variable.
    pub fn scalar(&mut self, name: &str) -> VarId {
        self.hermitian(name, SubsystemLayout::scalar())
    }

    /// Declares a nonnegative real scalar variable.
    pub fn nonneg_scalar(&mut self, name: &str) -> VarId {
        self.psd_variable(name, SubsystemLayout::scalar())
    }

    /// The expression consisting of variable `v`.
    pub fn var(&self, v: VarId) -> Expr {
        let layout = self.vars[v.0].layout.clone();
        let n = layout.dim();
        Expr {
            layout,
            terms: vec![(v, LinMap::identity(n))],
            constant: Mat::zeros(n, n),
        }
    }

    fn check_expr(&self, e: &Expr) -> Result<()> {
        for (v, l) in &e.terms {
            let var = self.vars.get(v.0).ok_or_else(|| {
                QbcError::InvalidArgument(format!("undeclared variable handle {}", v.0))
            })?;
            if var.layout.dim() != l.n_in() || e.side() != l.n_out() {
                return Err(QbcError::DimensionMismatch(format!(
                    "term on `{}` has inconsistent sides",
                    var.name
                )));
            }
        }
        Ok(())
    }

    /// Requires `expr ⪰ 0`.
    pub fn add_psd(&mut self, name: &str, expr: Expr) -> Result<ConstraintId> {
        self.check_expr(&expr)?;
        self.psd.push(Constraint {
            name: name.to_string(),
            expr,
        });
        Ok(ConstraintId::Psd(self.psd.len() - 1))
    }

    /// Requires `lhs ⪯ rhs`.
    pub fn add_le(&mut self, name: &str, lhs: Expr, rhs: Expr) -> Result<ConstraintId> {
        let e = rhs.try_sub(&lhs)?;
        self.add_psd(name, e)
    }

    /// Requires `-bound ⪯ x ⪯ bound` as two PSD constraints.
    pub fn add_abs_le(&mut self, name: &str, x: Expr, bound: Expr) -> Result<()> {
        self.add_psd(&format!("{name} (upper)"), bound.try_sub(&x)?)?;
        self.add_psd(&format!("{name} (lower)"), bound.try_add(&x)?)?;
        Ok(())
    }

    /// Requires `expr = 0`.
    pub fn add_eq(&mut self, name: &str, expr: Expr) -> Result<ConstraintId> {
        self.check_expr(&expr)?;
        self.eqs.push(Constraint {
            name: name.to_string(),
            expr,
        });
        Ok(ConstraintId::Eq(self.eqs.len() - 1))
    }

    /// Requires `lhs = rhs`.
    pub fn add_eq_between(&mut self, name: &str, lhs: Expr, rhs: Expr) -> Result<ConstraintId> {
        let e = lhs.try_sub(&rhs)?;
        self.add_eq(name, e)
    }

    fn set_objective(&mut self, sense: Sense, objective: Expr) -> Result<()> {
        if objective.side() != 1 {
            return Err(QbcError::DimensionMismatch(
                "objective must be a 1x1 expression".into(),
            ));
        }
        self.check_expr(&objective)?;
        self.sense = sense;
        self.objective = objective;
        Ok(())
    }

    /// Sets a 1x1 objective to maximize.
    pub fn maximize(&mut self, objective: Expr) -> Result<()> {
        self.set_objective(Sense::Maximize, objective)
    }

    /// Sets a 1x1 objective to minimize.
    pub fn minimize(&mut self, objective: Expr) -> Result<()> {
        self.set_objective(Sense::Minimize, objective)
    }

    /// Declared variables.
    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    /// Objective sense.
    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Objective expression.
    pub fn objective(&self) -> &Expr {
        &self.objective
    }

    /// PSD constraints.
    pub fn psd_constraints(&self) -> &[Constraint] {
        &self.psd
    }

    /// Equality constraints.
    pub fn eq_constraints(&self) -> &[Constraint] {
        &self.eqs
    }

    /// Objective value at the given variable values.
    pub fn objective_value(&self, values: &[HermitianOperator]) -> f64 {
        self.objective.eval(values).entry(0, 0).re
    }

    /// A self-describing JSON dump (dense coefficient matrices of every
    /// term) for debugging. Not a stable interchange format.
    pub fn to_debug_json(&self) -> serde_json::Value {
        fn mat_json(m: &Mat<c64>) -> serde_json::Value {
            let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect();
            json!(rows)
        }
        let vars = &self.vars;
        let expr_json = |e: &Expr| {
            let terms: Vec<serde_json::Value> = e
                .terms
                .iter()
                .map(|(v, l)| {
                    let n = l.n_in();
                    let images: Vec<serde_json::Value> = (0..n * n)
                        .map(|idx| {
                            let mut unit = Mat::<c64>::zeros(n, n);
                            unit[(idx / n, idx % n)] = c64::new(1.0, 0.0);
                            mat_json(&l.apply(&unit))
                        })
                        .collect();
                    json!({"variable": vars[v.0].name, "unit_images": images})
                })
                .collect();
            json!({
                "layout": format!("{:?}", e.layout),
                "terms": terms,
                "constant": mat_json(&e.constant),
            })
        };
        json!({
            "name": self.name,
            "sense": format!("{:?}", self.sense),
            "variables": self.vars.iter().map(|v| json!({
                "name": v.name,
                "layout": format!("{:?}", v.layout),
            })).collect::<Vec<_>>(),
            "objective": expr_json(&self.objective),
            "psd": self.psd.iter().map(|c| json!({"name": c.name, "expr": expr_json(&c.expr)})).collect::<Vec<_>>(),
            "eq": self.eqs.iter().map(|c| json!({"name": c.name, "expr": expr_json(&c.expr)})).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, Rng};

    #[test]
    fn expressions_evaluate_like_dense_operations() {
        let mut rng = Rng::seed(12);
        let lay = SubsystemLayout::new([("A", 2), ("B", 2)]).unwrap();
        let mut p = ConicProgram::new("t");
        let x = p.hermitian("X", lay.clone());
        let r = p.hermitian("r", SubsystemLayout::single("A", 2));
        let e = p.var(x).ptranspose(&["B"]).unwrap() + 2.0 * p.var(r).expand_to(&lay).unwrap();
        let xv = random_hermitian(&mut rng, lay.clone());
        let rv = random_hermitian(&mut rng, SubsystemLayout::single("A", 2));
        let got = e.eval(&[xv.clone(), rv.clone()]);
        let want = xv
            .ptranspose(&["B"])
            .unwrap()
            .add(&rv.expand_to(&lay).unwrap().scale(2.0))
            .unwrap();
        assert!(got.sub(&want).unwrap().max_abs_entry() < 1e-13);
        let tr = e.trace().eval(&[xv.clone(), rv.clone()]);
        assert!((tr.entry(0, 0).re - want.trace()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_layouts_are_rejected() {
        let mut p = ConicProgram::new("t");
        let x = p.hermitian("X", SubsystemLayout::single("A", 2));
        let y = p.hermitian("Y", SubsystemLayout::single("B", 2));
        assert!(p.var(x).try_add(&p.var(y)).is_err());
        assert!(p.maximize(p.var(x)).is_err());
    }

    #[test]
    fn plain_variable_detection() {
        let mut p = ConicProgram::new("t");
        let x = p.hermitian("X", SubsystemLayout::single("A", 2));
        assert_eq!(p.var(x).as_plain_variable(), Some(x));
        assert_eq!(p.var(x).scale(2.0).as_plain_variable(), None);
        assert_eq!(p.var(x).ptranspose(&["A"]).unwrap().as_plain_variable(), None);
    }
}
