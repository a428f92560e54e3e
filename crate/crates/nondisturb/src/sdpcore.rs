//! Conic SDP assembly and solution: Hermitian matrix variables over a real
//! interior-point backend, plus the alternating-optimization driver used by
//! the nonconvex searches.
//!
//! Hermitian-valued affine constraints are lowered to real form: equality
//! constraints become one real row per independent matrix entry, and
//! `expr >= 0` becomes a PSD-triangle cone on the realification
//! `[[Re, -Im], [Im, Re]]`, which is PSD exactly when the input is.

use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::qmat::{c, CMat, HermMatrix};
use crate::{tol, Error, Result};

/// Realification `[[Re(H), -Im(H)], [Im(H), Re(H)]]`; symmetric and PSD
/// exactly when the Hermitian input is, with each eigenvalue doubled.
pub fn realify(h: &CMat) -> DMatrix<f64> {
    let d = h.nrows();
    DMatrix::from_fn(2 * d, 2 * d, |r, s| {
        let z = h[(r % d, s % d)];
        match (r / d, s / d) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    })
}

/// Declared variable shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Hermitian PSD matrix of the given dimension.
    HermPsd(usize),
    /// Hermitian matrix of the given dimension, no sign constraint.
    Herm(usize),
    /// Free real scalar.
    Scalar,
}

impl VarKind {
    fn n_params(&self) -> usize {
        match self {
            VarKind::HermPsd(d) | VarKind::Herm(d) => d * d,
            VarKind::Scalar => 1,
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            VarKind::HermPsd(d) | VarKind::Herm(d) => Some(*d),
            VarKind::Scalar => None,
        }
    }
}

/// Nonzero entries of the `p`-th real parameter basis matrix for Hermitian
/// matrices of dimension `d`: diagonal units, symmetric pairs, and
/// antisymmetric imaginary pairs, scanned over the upper triangle.
fn param_entries(d: usize, p: usize) -> Vec<(usize, usize, Complex64)> {
    let mut idx = 0;
    for j in 0..d {
        for i in 0..=j {
            if i < j {
                if idx == p {
                    return vec![(i, j, c(1.0, 0.0)), (j, i, c(1.0, 0.0))];
                }
                idx += 1;
                if idx == p {
                    return vec![(i, j, c(0.0, 1.0)), (j, i, c(0.0, -1.0))];
                }
                idx += 1;
            } else {
                if idx == p {
                    return vec![(j, j, c(1.0, 0.0))];
                }
                idx += 1;
            }
        }
    }
    unreachable!("parameter index {p} out of range for dim {d}")
}

fn matrix_from_params(d: usize, params: &[f64]) -> CMat {
    let mut m = CMat::zeros(d, d);
    for (p, &v) in params.iter().enumerate() {
        for (r, s, w) in param_entries(d, p) {
            m[(r, s)] += w * c(v, 0.0);
        }
    }
    m
}

/// Linear operator on a Hermitian matrix variable, evaluated sparsely during
/// assembly so that large Choi variables stay cheap.
#[derive(Clone)]
pub enum LinOp {
    /// `X -> X`.
    Id,
    /// `X -> a X`.
    Scale(f64),
    /// `X -> tr_2[X]` keeping a first factor of dimension `d`; the second
    /// factor's dimension is inferred from the input.
    PTrace2 { d: usize },
    /// `X -> tr_2[X (1 (x) C^T)]`: Heisenberg action of the branch with Choi
    /// `X` on the fixed operator `C`. The first factor has dimension `d`, the
    /// second matches `C`.
    ContractTail { d: usize, c: CMat },
    /// `T -> tr_2[W (1 (x) T^T)]`: Heisenberg action of a fixed branch with
    /// Choi `W` on the (variable-dependent) operator `T`. The output has
    /// dimension `d`; the input matches the second factor of `W`.
    FixedAdjoint { d: usize, w: CMat },
    /// `X -> V X V^†` for a fixed, possibly rectangular `V`; the input
    /// dimension matches `V`'s columns, the output its rows.
    Conjugate { v: CMat },
    /// Left-to-right composition: `Chain([f, g])` is `X -> g(f(X))`.
    Chain(Vec<LinOp>),
}

impl LinOp {
    fn out_dim(&self, in_dim: usize) -> usize {
        match self {
            LinOp::Id | LinOp::Scale(_) => in_dim,
            LinOp::PTrace2 { d } | LinOp::ContractTail { d, .. } => *d,
            LinOp::FixedAdjoint { d, .. } => *d,
            LinOp::Conjugate { v } => v.nrows(),
            LinOp::Chain(ops) => ops.iter().fold(in_dim, |acc, op| op.out_dim(acc)),
        }
    }

    /// Applies to a sparse input given as nonzero entries `(row, col, value)`.
    fn apply_entries(&self, in_dim: usize, entries: &[(usize, usize, Complex64)]) -> CMat {
        match self {
            LinOp::Id => {
                let mut out = CMat::zeros(in_dim, in_dim);
                for &(r, s, v) in entries {
                    out[(r, s)] += v;
                }
                out
            }
            LinOp::Scale(a) => {
                let mut out = CMat::zeros(in_dim, in_dim);
                for &(r, s, v) in entries {
                    out[(r, s)] += v * c(*a, 0.0);
                }
                out
            }
            LinOp::PTrace2 { d } => {
                let tail = in_dim / d;
                let mut out = CMat::zeros(*d, *d);
                for &(r, s, v) in entries {
                    if r % tail == s % tail {
                        out[(r / tail, s / tail)] += v;
                    }
                }
                out
            }
            LinOp::ContractTail { d, c: cm } => {
                let tail = cm.nrows();
                let mut out = CMat::zeros(*d, *d);
                for &(r, s, v) in entries {
                    out[(r / tail, s / tail)] += v * cm[(r % tail, s % tail)];
                }
                out
            }
            LinOp::FixedAdjoint { d, w } => {
                let tail = in_dim;
                let mut out = CMat::zeros(*d, *d);
                for &(i, ip, v) in entries {
                    for a in 0..*d {
                        for b in 0..*d {
                            out[(a, b)] += w[(a * tail + i, b * tail + ip)] * v;
                        }
                    }
                }
                out
            }
            LinOp::Conjugate { v } => {
                let n = v.nrows();
                let mut out = CMat::zeros(n, n);
                for &(r, s, val) in entries {
                    for i in 0..n {
                        let vi = v[(i, r)] * val;
                        if vi != c(0.0, 0.0) {
                            for j in 0..n {
                                out[(i, j)] += vi * v[(j, s)].conj();
                            }
                        }
                    }
                }
                out
            }
            LinOp::Chain(ops) => {
                let (first, rest) = ops.split_first().expect("nonempty chain");
                let mut cur = first.apply_entries(in_dim, entries);
                let mut dim = first.out_dim(in_dim);
                for op in rest {
                    cur = op.apply_dense(&cur);
                    dim = op.out_dim(dim);
                }
                debug_assert_eq!(cur.nrows(), dim);
                cur
            }
        }
    }

    /// Dense application, used for constants and post-solve evaluation.
    pub fn apply_dense(&self, x: &CMat) -> CMat {
        match self {
            LinOp::Id => x.clone(),
            LinOp::Scale(a) => x.scale(*a),
            LinOp::PTrace2 { d } => {
                let tail = x.nrows() / d;
                CMat::from_fn(*d, *d, |a, b| {
                    (0..tail).map(|i| x[(a * tail + i, b * tail + i)]).sum()
                })
            }
            LinOp::ContractTail { d, c: cm } => {
                let tail = cm.nrows();
                CMat::from_fn(*d, *d, |a, b| {
                    let mut acc = c(0.0, 0.0);
                    for i in 0..tail {
                        for ip in 0..tail {
                            acc += x[(a * tail + i, b * tail + ip)] * cm[(i, ip)];
                        }
                    }
                    acc
                })
            }
            LinOp::FixedAdjoint { d, w } => {
                let tail = x.nrows();
                CMat::from_fn(*d, *d, |a, b| {
                    let mut acc = c(0.0, 0.0);
                    for i in 0..tail {
                        for ip in 0..tail {
                            acc += w[(a * tail + i, b * tail + ip)] * x[(i, ip)];
                        }
                    }
                    acc
                })
            }
            LinOp::Conjugate { v } => v * x * v.adjoint(),
            LinOp::Chain(ops) => {
                let mut cur = x.clone();
                for op in ops {
                    cur = op.apply_dense(&cur);
                }
                cur
            }
        }
    }
}

/// Hermitian-matrix-valued affine expression in the declared variables.
#[derive(Clone)]
pub struct AffineExpr {
    dim: usize,
    constant: CMat,
    terms: Vec<(usize, LinOp)>,
    scalar_terms: Vec<(usize, CMat)>,
}

impl AffineExpr {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            constant: CMat::zeros(dim, dim),
            terms: Vec::new(),
            scalar_terms: Vec::new(),
        }
    }

    pub fn constant(m: &HermMatrix) -> Self {
        Self {
            dim: m.dim(),
            constant: m.matrix().clone(),
            terms: Vec::new(),
            scalar_terms: Vec::new(),
        }
    }

    /// The matrix variable itself.
    pub fn var(var: usize, dim: usize) -> Self {
        Self::map_var(var, dim, LinOp::Id)
    }

    /// A linear image of a matrix variable; `dim` is the operand dimension.
    pub fn map_var(var: usize, dim: usize, op: LinOp) -> Self {
        Self {
            dim: op.out_dim(dim),
            constant: CMat::zeros(op.out_dim(dim), op.out_dim(dim)),
            terms: vec![(var, op)],
            scalar_terms: Vec::new(),
        }
    }

    /// `s * C` for a scalar variable `s` and Hermitian coefficient `C`.
    pub fn scalar_times(var: usize, coeff: &HermMatrix) -> Self {
        Self {
            dim: coeff.dim(),
            constant: CMat::zeros(coeff.dim(), coeff.dim()),
            terms: Vec::new(),
            scalar_terms: vec![(var, coeff.matrix().clone())],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add(mut self, other: &AffineExpr) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch(format!(
                "affine dims {} vs {}",
                self.dim, other.dim
            )));
        }
        self.constant += &other.constant;
        self.terms.extend(other.terms.iter().cloned());
        self.scalar_terms.extend(other.scalar_terms.iter().cloned());
        Ok(self)
    }

    pub fn sub(self, other: &AffineExpr) -> Result<Self> {
        self.add(&other.clone().scale(-1.0))
    }

    pub fn add_const(mut self, m: &HermMatrix, weight: f64) -> Result<Self> {
        if self.dim != m.dim() {
            return Err(Error::DimMismatch("constant dim mismatch".into()));
        }
        self.constant += m.matrix().scale(weight);
        Ok(self)
    }

    pub fn scale(mut self, a: f64) -> Self {
        self.constant.scale_mut(a);
        let terms = std::mem::take(&mut self.terms);
        self.terms = terms
            .into_iter()
            .map(|(v, op)| (v, LinOp::Chain(vec![op, LinOp::Scale(a)])))
            .collect();
        for (_, m) in &mut self.scalar_terms {
            m.scale_mut(a);
        }
        self
    }

    /// Evaluates against concrete variable values.
    pub fn eval(&self, values: &[VarValue]) -> Result<CMat> {
        let mut out = self.constant.clone();
        for (v, op) in &self.terms {
            match &values[*v] {
                VarValue::Matrix(m) => out += op.apply_dense(m.matrix()),
                VarValue::Scalar(_) => {
                    return Err(Error::Internal("matrix term bound to scalar var".into()))
                }
            }
        }
        for (v, coeff) in &self.scalar_terms {
            match &values[*v] {
                VarValue::Scalar(s) => out += coeff.scale(*s),
                VarValue::Matrix(_) => {
                    return Err(Error::Internal("scalar term bound to matrix var".into()))
                }
            }
        }
        Ok(out)
    }
}

/// Linear objective contribution.
#[derive(Clone)]
pub enum ObjTerm {
    /// `tr(C X)` against a matrix variable.
    Inner(usize, HermMatrix),
    /// `a s` against a scalar variable.
    Scalar(usize, f64),
}

/// Solver verdict; `NumericalFailure` carries the backend status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure(String),
}

/// Concrete value of one declared variable.
#[derive(Debug, Clone)]
pub enum VarValue {
    Matrix(HermMatrix),
    Scalar(f64),
}

impl VarValue {
    pub fn as_matrix(&self) -> Result<&HermMatrix> {
        match self {
            VarValue::Matrix(m) => Ok(m),
            VarValue::Scalar(_) => Err(Error::Internal("expected matrix variable".into())),
        }
    }

    pub fn as_scalar(&self) -> Result<f64> {
        match self {
            VarValue::Scalar(s) => Ok(*s),
            VarValue::Matrix(_) => Err(Error::Internal("expected scalar variable".into())),
        }
    }
}

/// Solved problem: status, objective (with constant), primal values, and the
/// duality gap reported by the backend.
pub struct SdpSolution {
    pub status: SdpStatus,
    pub objective: f64,
    pub values: Vec<VarValue>,
    pub duality_gap: f64,
    /// Dual equality multipliers, one Hermitian matrix per `eq_zero`
    /// constraint; for an infeasible problem these are the certificate.
    pub eq_duals: Vec<HermMatrix>,
}

impl SdpSolution {
    pub fn matrix_value(&self, var: usize) -> Result<&HermMatrix> {
        self.values[var].as_matrix()
    }

    pub fn scalar_value(&self, var: usize) -> Result<f64> {
        self.values[var].as_scalar()
    }

    pub fn require_optimal(&self) -> Result<()> {
        match &self.status {
            SdpStatus::Optimal => Ok(()),
            SdpStatus::Infeasible => Err(Error::SolverFailure("problem infeasible".into())),
            SdpStatus::NumericalFailure(s) => {
                Err(Error::SolverFailure(format!("solver failed: {s}")))
            }
        }
    }
}

/// Assembled real conic data: minimize `q'x` subject to `Ax + s = b` with
/// `s` in a zero cone (all equality rows first) followed by PSD cones.
pub struct Assembled {
    pub ncols: usize,
    pub nrows: usize,
    pub q: Vec<f64>,
    pub a_triplets: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub n_eq_rows: usize,
    pub psd_sizes: Vec<usize>,
}

impl Assembled {
    /// Human-readable dump of the conic data for debugging.
    pub fn write_debug(&self, out: &mut String) {
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "eq-rows {}", self.n_eq_rows);
        let _ = writeln!(out, "psd-cones {:?}", self.psd_sizes);
        let _ = writeln!(out, "objective");
        for (i, v) in self.q.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, "  q[{i}] = {v:.17e}");
            }
        }
        let _ = writeln!(out, "matrix");
        for (r, cidx, v) in &self.a_triplets {
            let _ = writeln!(out, "  A[{r},{cidx}] = {v:.17e}");
        }
        let _ = writeln!(out, "offset");
        for (i, v) in self.b.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, "  b[{i}] = {v:.17e}");
            }
        }
    }
}

/// Incremental problem builder over Hermitian and scalar variables.
#[derive(Clone)]
pub struct SdpBuilder {
    vars: Vec<VarKind>,
    obj_terms: Vec<ObjTerm>,
    obj_const: f64,
    eq_constraints: Vec<AffineExpr>,
    psd_constraints: Vec<AffineExpr>,
}

impl Default for SdpBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl SdpBuilder {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            obj_terms: Vec::new(),
            obj_const: 0.0,
            eq_constraints: Vec::new(),
            psd_constraints: Vec::new(),
        }
    }

    pub fn add_var(&mut self, kind: VarKind) -> usize {
        self.vars.push(kind);
        self.vars.len() - 1
    }

    pub fn var_dim(&self, var: usize) -> Option<usize> {
        self.vars[var].dim()
    }

    /// Sets the objective `minimize constant + sum(terms)`.
    pub fn minimize(&mut self, terms: Vec<ObjTerm>, constant: f64) {
        self.obj_terms = terms;
        self.obj_const = constant;
    }

    /// Constrains a Hermitian-valued expression to vanish.
    pub fn eq_zero(&mut self, expr: AffineExpr) {
        self.eq_constraints.push(expr);
    }

    /// Constrains `expr >= 0` in the PSD order.
    pub fn psd(&mut self, expr: AffineExpr) {
        self.psd_constraints.push(expr);
    }

    fn col_offsets(&self) -> (Vec<usize>, usize) {
        let mut offsets = Vec::with_capacity(self.vars.len());
        let mut acc = 0;
        for v in &self.vars {
            offsets.push(acc);
            acc += v.n_params();
        }
        (offsets, acc)
    }

    /// Lowers to real conic form. PSD-ness of `HermPsd` variables is added
    /// as trailing cones in declaration order.
    pub fn assemble(&self) -> Result<Assembled> {
        let (offsets, ncols) = self.col_offsets();
        let mut q = vec![0.0; ncols];
        for term in &self.obj_terms {
            match term {
                ObjTerm::Inner(var, coeff) => {
                    let d = self.vars[*var]
                        .dim()
                        .ok_or_else(|| Error::Internal("Inner on scalar var".into()))?;
                    if coeff.dim() != d {
                        return Err(Error::DimMismatch("objective coefficient dim".into()));
                    }
                    for p in 0..d * d {
                        let mut acc = c(0.0, 0.0);
                        for (r, s, v) in param_entries(d, p) {
                            acc += coeff.matrix()[(s, r)] * v;
                        }
                        q[offsets[*var] + p] += acc.re;
                    }
                }
                ObjTerm::Scalar(var, a) => {
                    if self.vars[*var] != VarKind::Scalar {
                        return Err(Error::Internal("Scalar objective on matrix var".into()));
                    }
                    q[offsets[*var]] += a;
                }
            }
        }

        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut row0 = 0;

        // Equality block: expr = 0 lowered to A x = b with one real row per
        // diagonal entry and two per strict upper entry.
        for expr in &self.eq_constraints {
            let m = expr.dim;
            let row_of = |i: usize, j: usize, which: usize| -> usize {
                // Rows are laid out in the same scan order as param_entries.
                let mut idx = 0;
                for jj in 0..m {
                    for ii in 0..=jj {
                        if ii < jj {
                            if (ii, jj) == (i, j) {
                                return row0 + idx + which;
                            }
                            idx += 2;
                        } else {
                            if (ii, jj) == (i, j) {
                                return row0 + idx;
                            }
                            idx += 1;
                        }
                    }
                }
                unreachable!("entry ({i},{j}) outside dim {m}")
            };
            let push_matrix = |col: usize, mat: &CMat, trips: &mut Vec<(usize, usize, f64)>| {
                for j in 0..m {
                    for i in 0..=j {
                        if i < j {
                            let z = mat[(i, j)];
                            if z.re != 0.0 {
                                trips.push((row_of(i, j, 0), col, z.re));
                            }
                            if z.im != 0.0 {
                                trips.push((row_of(i, j, 1), col, z.im));
                            }
                        } else {
                            let v = mat[(j, j)].re;
                            if v != 0.0 {
                                trips.push((row_of(j, j, 0), col, v));
                            }
                        }
                    }
                }
            };
            for (var, op) in &expr.terms {
                let d = self.vars[*var]
                    .dim()
                    .ok_or_else(|| Error::Internal("matrix term on scalar var".into()))?;
                for p in 0..d * d {
                    let img = op.apply_entries(d, &param_entries(d, p));
                    push_matrix(offsets[*var] + p, &img, &mut trips);
                }
            }
            for (var, coeff) in &expr.scalar_terms {
                push_matrix(offsets[*var], coeff, &mut trips);
            }
            for j in 0..m {
                for i in 0..=j {
                    if i < j {
                        b.push(-expr.constant[(i, j)].re);
                        b.push(-expr.constant[(i, j)].im);
                    } else {
                        b.push(-expr.constant[(j, j)].re);
                    }
                }
            }
            row0 += m * m;
        }
        let n_eq_rows = row0;

        // PSD blocks: expr >= 0 becomes b - Ax = svec(realify(expr)) in the
        // scaled-triangle cone.
        let mut psd_sizes = Vec::new();
        for expr in &self.psd_constraints {
            let m = expr.dim;
            let n_real = 2 * m;
            let tri = n_real * (n_real + 1) / 2;
            let svec_rows = |mat: &CMat, sign: f64, col: Option<usize>,
                             trips: &mut Vec<(usize, usize, f64)>,
                             b: &mut Vec<f64>| {
                let real = realify(mat);
                let mut idx = 0;
                for j in 0..n_real {
                    for i in 0..=j {
                        let v = if i == j {
                            real[(i, j)]
                        } else {
                            real[(i, j)] * std::f64::consts::SQRT_2
                        };
                        match col {
                            Some(cidx) => {
                                if v != 0.0 {
                                    trips.push((row0 + idx, cidx, sign * v));
                                }
                            }
                            None => b.push(sign * v),
                        }
                        idx += 1;
                    }
                }
            };
            for (var, op) in &expr.terms {
                let d = self.vars[*var]
                    .dim()
                    .ok_or_else(|| Error::Internal("matrix term on scalar var".into()))?;
                for p in 0..d * d {
                    let img = op.apply_entries(d, &param_entries(d, p));
                    svec_rows(&img, -1.0, Some(offsets[*var] + p), &mut trips, &mut b);
                }
            }
            for (var, coeff) in &expr.scalar_terms {
                svec_rows(coeff, -1.0, Some(offsets[*var]), &mut trips, &mut b);
            }
            svec_rows(&expr.constant, 1.0, None, &mut trips, &mut b);
            psd_sizes.push(n_real);
            row0 += tri;
        }

        Ok(Assembled {
            ncols,
            nrows: row0,
            q,
            a_triplets: trips,
            b,
            n_eq_rows,
            psd_sizes,
        })
    }

    /// Assembles with implicit PSD cones for `HermPsd` variables and solves.
    pub fn solve(&self) -> Result<SdpSolution> {
        let mut full = self.clone();
        for (idx, kind) in self.vars.iter().enumerate() {
            if let VarKind::HermPsd(d) = kind {
                full.psd_constraints.push(AffineExpr::var(idx, *d));
            }
        }
        let assembled = full.assemble()?;
        full.run(&assembled)
    }

    fn run(&self, assembled: &Assembled) -> Result<SdpSolution> {
        let a = csc_from_triplets(assembled.nrows, assembled.ncols, &assembled.a_triplets);
        let p = CscMatrix::new(
            assembled.ncols,
            assembled.ncols,
            vec![0; assembled.ncols + 1],
            vec![],
            vec![],
        );
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if assembled.n_eq_rows > 0 {
            cones.push(SupportedConeT::ZeroConeT(assembled.n_eq_rows));
        }
        for sz in &assembled.psd_sizes {
            cones.push(SupportedConeT::PSDTriangleConeT(*sz));
        }
        let settings = DefaultSettings {
            verbose: false,
            max_iter: 200,
            tol_gap_abs: tol::SOLVER_GAP,
            tol_gap_rel: tol::SOLVER_GAP,
            tol_feas: tol::SOLVER_FEAS,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &assembled.q, &a, &assembled.b, &cones, settings);
        solver.solve();

        let raw_status = solver.solution.status;
        let gap = {
            let p = solver.solution.obj_val;
            let d = solver.solution.obj_val_dual;
            if p.is_finite() && d.is_finite() {
                (p - d).abs()
            } else {
                f64::INFINITY
            }
        };
        let status = match raw_status {
            SolverStatus::Solved => SdpStatus::Optimal,
            SolverStatus::AlmostSolved if gap < tol::SDP_GAP => SdpStatus::Optimal,
            SolverStatus::PrimalInfeasible => SdpStatus::Infeasible,
            other => SdpStatus::NumericalFailure(format!("{other:?}")),
        };

        let (offsets, _) = self.col_offsets();
        let values = self
            .vars
            .iter()
            .enumerate()
            .map(|(i, kind)| match kind {
                VarKind::Scalar => VarValue::Scalar(solver.solution.x[offsets[i]]),
                VarKind::HermPsd(d) | VarKind::Herm(d) => {
                    let params = &solver.solution.x[offsets[i]..offsets[i] + d * d];
                    let m = matrix_from_params(*d, params);
                    VarValue::Matrix(
                        HermMatrix::new(m).expect("parameterized matrix is Hermitian"),
                    )
                }
            })
            .collect();

        let mut eq_duals = Vec::new();
        let mut row = 0;
        for expr in &self.eq_constraints {
            let m = expr.dim;
            let mut y = CMat::zeros(m, m);
            for j in 0..m {
                for i in 0..=j {
                    if i < j {
                        let a = solver.solution.z[row];
                        let bb = solver.solution.z[row + 1];
                        y[(i, j)] = c(a / 2.0, bb / 2.0);
                        y[(j, i)] = c(a / 2.0, -bb / 2.0);
                        row += 2;
                    } else {
                        y[(j, j)] = c(solver.solution.z[row], 0.0);
                        row += 1;
                    }
                }
            }
            eq_duals.push(HermMatrix::new(y).expect("dual reconstruction is Hermitian"));
        }

        Ok(SdpSolution {
            status,
            objective: solver.solution.obj_val + self.obj_const,
            values,
            duality_gap: gap,
            eq_duals,
        })
    }
}

fn csc_from_triplets(nrows: usize, ncols: usize, trips: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut sorted: Vec<(usize, usize, f64)> = trips.to_vec();
    sorted.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut colptr = vec![0usize; ncols + 1];
    let mut rowval: Vec<usize> = Vec::with_capacity(sorted.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(sorted.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, col, v) in sorted {
        if last == Some((col, r)) {
            *nzval.last_mut().expect("duplicate follows an entry") += v;
        } else {
            rowval.push(r);
            nzval.push(v);
            colptr[col + 1] += 1;
            last = Some((col, r));
        }
    }
    for i in 0..ncols {
        colptr[i + 1] += colptr[i];
    }
    CscMatrix::new(nrows, ncols, colptr, rowval, nzval)
}

/// Knobs for the alternating-optimization driver.
#[derive(Debug, Clone, Serialize)]
pub struct SeesawConfig {
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    pub improve_tol: f64,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            restarts: 5,
            seed: 0,
            improve_tol: tol::SEESAW_IMPROVE,
        }
    }
}

/// Outcome of one alternating-optimization run.
pub struct SeesawResult<T> {
    pub state: T,
    pub value: f64,
    /// Objective after every block solve of the winning restart.
    pub trace: Vec<f64>,
    /// Objective traces of all restarts, in restart order.
    pub restart_traces: Vec<Vec<f64>>,
    pub best_restart: usize,
    pub converged: bool,
}

/// Minimizes a blockwise-convex objective by cycling over blocks. `init`
/// produces the starting state for each restart (restart 0 should be the
/// deterministic start) and `step` re-solves one block, returning the updated
/// state and the objective after that solve. A block re-solve can only match
/// or improve the incumbent in exact arithmetic, so a step whose value rises
/// above the monotonicity guard is solver noise: the step is rejected and the
/// restart stops at the last accepted state. Recorded traces are therefore
/// monotone up to the guard.
pub fn seesaw<T: Clone>(
    cfg: &SeesawConfig,
    n_blocks: usize,
    mut init: impl FnMut(usize, &mut ChaCha8Rng) -> Result<T>,
    mut step: impl FnMut(usize, &T) -> Result<(T, f64)>,
) -> Result<SeesawResult<T>> {
    use rand::SeedableRng;

    if cfg.max_iters == 0 || n_blocks == 0 {
        return Err(Error::InvalidInput(
            "see-saw needs at least one sweep and one block".into(),
        ));
    }
    let mut best: Option<SeesawResult<T>> = None;
    let mut restart_traces: Vec<Vec<f64>> = Vec::new();
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(restart as u64));
        let mut state = init(restart, &mut rng)?;
        let mut trace: Vec<f64> = Vec::new();
        let mut converged = false;
        let mut sweep_last: Option<f64> = None;
        'sweeps: for _ in 0..cfg.max_iters {
            for block in 0..n_blocks {
                let (next, value) = step(block, &state)?;
                if let Some(&prev) = trace.last() {
                    if value > prev + tol::SEESAW_MONOTONE {
                        converged = value <= prev + cfg.improve_tol;
                        break 'sweeps;
                    }
                }
                trace.push(value);
                state = next;
            }
            let value = *trace.last().expect("at least one block ran");
            if let Some(prev) = sweep_last {
                if prev - value < cfg.improve_tol {
                    converged = true;
                    break;
                }
            }
            sweep_last = Some(value);
        }
        restart_traces.push(trace.clone());
        let value = *trace.last().expect("trace nonempty");
        let better = match &best {
            None => true,
            Some(b) => value < b.value,
        };
        if better {
            best = Some(SeesawResult {
                state,
                value,
                trace,
                restart_traces: Vec::new(),
                best_restart: restart,
                converged,
            });
        }
    }
    match best {
        Some(mut b) => {
            b.restart_traces = restart_traces;
            Ok(b)
        }
        None => Err(Error::SolverFailure(
            "no restart produced a usable trace".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::pauli_z;

    #[test]
    fn realify_preserves_spectrum() {
        let h = crate::qmat::HermMatrix::from_parts(
            &[vec![1.0, 0.0], vec![0.0, -1.0]],
            &[vec![0.0, 0.5], vec![-0.5, 0.0]],
        )
        .unwrap();
        let r = realify(h.matrix());
        assert!((r.clone() - r.transpose()).abs().max() < 1e-15, "realification symmetric");
        let eig = r.symmetric_eigen();
        let mut got: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        let want = h.eigenvalues();
        for (k, w) in [want[0], want[0], want[1], want[1]].iter().enumerate() {
            assert!((got[k] - w).abs() < 1e-12, "each eigenvalue doubled");
        }
    }

    #[test]
    fn param_basis_round_trips() {
        for d in [2usize, 3] {
            for p in 0..d * d {
                let entries = param_entries(d, p);
                let mut m = CMat::zeros(d, d);
                for (r, s, v) in entries {
                    m[(r, s)] += v;
                }
                let h = HermMatrix::new(m).expect("basis Hermitian");
                assert!(h.op_norm() > 0.0, "basis nonzero");
            }
            let params: Vec<f64> = (0..d * d).map(|i| i as f64 - 1.5).collect();
            let m = matrix_from_params(d, &params);
            let h = HermMatrix::new(m.clone()).unwrap();
            assert_eq!(h.dim(), d, "reconstruction square");
        }
    }

    #[test]
    fn min_eigenvalue_sdp_matches_eigensolver() {
        // maximize t s.t. Z - t 1 >= 0 gives the smallest eigenvalue.
        let mut b = SdpBuilder::new();
        let t = b.add_var(VarKind::Scalar);
        let target = pauli_z();
        let expr = AffineExpr::constant(&target)
            .add(&AffineExpr::scalar_times(t, &crate::qmat::HermMatrix::scaled_identity(2, -1.0)))
            .unwrap();
        b.psd(expr);
        b.minimize(vec![ObjTerm::Scalar(t, -1.0)], 0.0);
        let sol = b.solve().unwrap();
        sol.require_optimal().unwrap();
        let tval = sol.scalar_value(t).unwrap();
        assert!((tval - (-1.0)).abs() < 1e-7, "min eig of pauli_z is -1, got {tval}");
        assert!(sol.duality_gap < tol::SDP_GAP, "gap small");
    }

    #[test]
    fn psd_projection_sdp() {
        // min tr(X) s.t. X >= C with C = diag(1, -1): optimum tr = 1.
        let mut b = SdpBuilder::new();
        let x = b.add_var(VarKind::HermPsd(2));
        let cmat = crate::qmat::HermMatrix::from_diag(&[1.0, -1.0]);
        let expr = AffineExpr::var(x, 2).add_const(&cmat, -1.0).unwrap();
        b.psd(expr);
        b.minimize(vec![ObjTerm::Inner(x, crate::qmat::HermMatrix::identity(2))], 0.0);
        let sol = b.solve().unwrap();
        sol.require_optimal().unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-7, "objective 1, got {}", sol.objective);
        let xv = sol.matrix_value(x).unwrap();
        assert!((xv.entry(0, 0).re - 1.0).abs() < 1e-6, "X_00 = 1");
    }

    #[test]
    fn equality_constraints_fix_marginals() {
        // Feasibility: find PSD W on C^2 (x) C^2 with tr_2[W] = diag(0.3, 0.7).
        let mut b = SdpBuilder::new();
        let w = b.add_var(VarKind::HermPsd(4));
        let target = crate::qmat::HermMatrix::from_diag(&[0.3, 0.7]);
        let expr = AffineExpr::map_var(w, 4, LinOp::PTrace2 { d: 2 })
            .add_const(&target, -1.0)
            .unwrap();
        b.eq_zero(expr);
        b.minimize(vec![], 0.0);
        let sol = b.solve().unwrap();
        sol.require_optimal().unwrap();
        let wv = sol.matrix_value(w).unwrap();
        let marg = wv.partial_trace_2(2, 2).unwrap();
        assert!(
            crate::qmat::max_entry_diff(&marg, &target) < 1e-7,
            "marginal enforced"
        );
    }

    #[test]
    fn infeasible_problem_certified() {
        // X >= 1 and tr(X) = 1 cannot hold in dim 2.
        let mut b = SdpBuilder::new();
        let x = b.add_var(VarKind::HermPsd(2));
        let lower = AffineExpr::var(x, 2)
            .add_const(&crate::qmat::HermMatrix::identity(2), -1.0)
            .unwrap();
        b.psd(lower);
        // tr(X) - 1 = 0 encoded as a 1x1 equality via a contraction.
        let tr_expr = AffineExpr::map_var(x, 2, LinOp::PTrace2 { d: 1 });
        let one = crate::qmat::HermMatrix::from_diag(&[1.0]);
        b.eq_zero(tr_expr.add_const(&one, -1.0).unwrap());
        b.minimize(vec![], 0.0);
        let sol = b.solve().unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible, "contradiction detected");
        assert_eq!(sol.eq_duals.len(), 1, "equality dual reported");
    }

    #[test]
    fn contract_tail_matches_dense() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let d = 3;
        let cmat = crate::random::herm(&mut rng, d).into_matrix();
        let op = LinOp::ContractTail { d, c: cmat.clone() };
        let w = crate::random::herm(&mut rng, d * d).into_matrix();
        let dense = op.apply_dense(&w);
        // Reference: tr_2[W (1 (x) C^T)].
        let idc = CMat::identity(d, d).kronecker(&cmat.transpose());
        let prod = &w * idc;
        let want = CMat::from_fn(d, d, |a, b| (0..d).map(|i| prod[(a * d + i, b * d + i)]).sum());
        assert!(
            (dense - want).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12,
            "sparse-aware contraction agrees with kron product"
        );
    }

    #[test]
    fn conjugate_matches_dense() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let d = 3;
        let v = crate::random::ginibre(&mut rng, d).rows(0, 2).into_owned();
        let op = LinOp::Conjugate { v: v.clone() };
        assert_eq!(op.out_dim(d), 2, "output dimension is the row count");
        let x = crate::random::herm(&mut rng, d).into_matrix();
        let entries: Vec<(usize, usize, Complex64)> = (0..d)
            .flat_map(|r| (0..d).map(move |s| (r, s)))
            .map(|(r, s)| (r, s, x[(r, s)]))
            .collect();
        let sparse = op.apply_entries(d, &entries);
        let dense = op.apply_dense(&x);
        assert!(
            (sparse - dense).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12,
            "entrywise application agrees with V X V^adj"
        );
    }

    #[test]
    fn seesaw_minimizes_separable_quadratic() {
        // f(a, b) = (a - 3)^2 + (b + 2)^2 with exact block minimizers.
        let cfg = SeesawConfig {
            max_iters: 50,
            restarts: 2,
            seed: 7,
            improve_tol: 1e-12,
        };
        let result = seesaw(
            &cfg,
            2,
            |restart, _rng| Ok((restart as f64 * 10.0, -(restart as f64) * 10.0)),
            |block, &(a, b)| {
                let next = if block == 0 { (3.0, b) } else { (a, -2.0) };
                let f = (next.0 - 3.0_f64).powi(2) + (next.1 + 2.0_f64).powi(2);
                Ok((next, f))
            },
        )
        .unwrap();
        assert!(result.value.abs() < 1e-12, "global minimum reached");
        assert!(result.converged, "converged flag set");
        assert_eq!(result.restart_traces.len(), 2, "all traces kept");
        for t in &result.restart_traces {
            for w in t.windows(2) {
                assert!(w[1] <= w[0] + tol::SEESAW_MONOTONE, "trace monotone");
            }
        }
    }
}
