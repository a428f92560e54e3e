//! Shared assembly for uniform-deviation SDPs: optimize over instruments
//! with fixed induced POVMs while minimizing a sum of operator-norm
//! deviations of affine matrix expressions.

use crate::measurement::{Instrument, Povm};
use crate::qmat::{CMat, HermMatrix};
use crate::sdpcore::{AffineExpr, LinOp, ObjTerm, SdpBuilder, VarKind, VarValue};
use crate::{tol, Error, Result};

struct InstrVar {
    choi_vars: Vec<usize>,
    dim: usize,
    head: Povm,
    /// Support isometry per outcome when the head element is rank deficient;
    /// `None` keeps the full-size variable.
    supports: Vec<Option<CMat>>,
}

pub(crate) struct DeviationSolved {
    pub sdp_objective: f64,
    pub duality_gap: f64,
    /// Sum of exact operator norms of the deviation rows, evaluated at the
    /// cleaned feasible instruments.
    pub value: f64,
    pub per_row: Vec<f64>,
    pub instruments: Vec<Instrument>,
    pub certified: bool,
}

/// One SDP: instrument variables with fixed induced POVMs plus deviation
/// rows `|expr| <= lambda` in the operator order, minimizing the lambda sum.
pub(crate) struct DeviationSdp {
    builder: SdpBuilder,
    instruments: Vec<InstrVar>,
    rows: Vec<(usize, AffineExpr)>,
}

impl DeviationSdp {
    pub fn new() -> Self {
        Self {
            builder: SdpBuilder::new(),
            instruments: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Adds one Choi variable per outcome with the marginal constraint
    /// `tr_2[W^x] = A_x`; returns the instrument's index. A rank-deficient
    /// head element compresses its variable onto `supp(A_x) (x) H`, which is
    /// lossless: a PSD matrix whose first marginal vanishes outside the
    /// support vanishes there too. The compression keeps the marginal full
    /// rank, which the interior-point solver needs to stay well centered.
    pub fn add_instrument(&mut self, head: &Povm) -> usize {
        let d = head.dim();
        let mut choi_vars = Vec::with_capacity(head.n_outcomes());
        let mut supports = Vec::with_capacity(head.n_outcomes());
        for a in head.elements() {
            match support_isometry(a) {
                Some(v) => {
                    let r = v.ncols();
                    let compressed = HermMatrix::new(v.adjoint() * a.matrix() * &v)
                        .expect("compressed head element stays Hermitian");
                    let w = self.builder.add_var(VarKind::HermPsd(r * d));
                    let marginal = AffineExpr::map_var(w, r * d, LinOp::PTrace2 { d: r })
                        .add_const(&compressed, -1.0)
                        .expect("marginal dims agree");
                    self.builder.eq_zero(marginal);
                    choi_vars.push(w);
                    supports.push(Some(v));
                }
                None => {
                    let w = self.builder.add_var(VarKind::HermPsd(d * d));
                    let marginal = AffineExpr::map_var(w, d * d, LinOp::PTrace2 { d })
                        .add_const(a, -1.0)
                        .expect("marginal dims agree");
                    self.builder.eq_zero(marginal);
                    choi_vars.push(w);
                    supports.push(None);
                }
            }
        }
        self.instruments.push(InstrVar {
            choi_vars,
            dim: d,
            head: head.clone(),
            supports,
        });
        self.instruments.len() - 1
    }

    /// Variable index, variable dimension, and operator prefix computing the
    /// branch adjoint `(I^x)*(C)`; callers may chain further operators after
    /// the prefix.
    pub fn branch_adjoint_ops(&self, inst: usize, x: usize, c: &CMat) -> (usize, usize, Vec<LinOp>) {
        let iv = &self.instruments[inst];
        let d = iv.dim;
        match &iv.supports[x] {
            Some(v) => {
                let r = v.ncols();
                (
                    iv.choi_vars[x],
                    r * d,
                    vec![
                        LinOp::ContractTail { d: r, c: c.clone() },
                        LinOp::Conjugate { v: v.clone() },
                    ],
                )
            }
            None => (
                iv.choi_vars[x],
                d * d,
                vec![LinOp::ContractTail { d, c: c.clone() }],
            ),
        }
    }

    /// Affine expression for the Heisenberg action of the whole instrument
    /// on a fixed operator: `sum_x tr_2[W^x (1 (x) C^T)]`.
    pub fn total_adjoint_expr(&self, inst: usize, c: &HermMatrix) -> AffineExpr {
        let iv = &self.instruments[inst];
        let d = iv.dim;
        let mut expr = AffineExpr::zero(d);
        for x in 0..iv.choi_vars.len() {
            let (var, vdim, ops) = self.branch_adjoint_ops(inst, x, c.matrix());
            expr = expr
                .add(&AffineExpr::map_var(var, vdim, LinOp::Chain(ops)))
                .expect("adjoint expression dims agree");
        }
        expr
    }

    /// Registers `|expr| <= lambda` and adds lambda to the objective sum.
    pub fn add_deviation(&mut self, expr: AffineExpr) {
        let m = expr.dim();
        let lam = self.builder.add_var(VarKind::Scalar);
        let lam_id = AffineExpr::scalar_times(lam, &HermMatrix::identity(m));
        self.builder
            .psd(lam_id.clone().sub(&expr).expect("deviation upper side"));
        self.builder
            .psd(lam_id.add(&expr).expect("deviation lower side"));
        self.rows.push((lam, expr));
    }

    /// Plain nondisturbance rows: the instrument's total adjoint must fix
    /// every element of the tail family.
    pub fn add_tail_rows(&mut self, inst: usize, tail: &[HermMatrix]) {
        for b in tail {
            let expr = self
                .total_adjoint_expr(inst, b)
                .add_const(b, -1.0)
                .expect("tail dims agree");
            self.add_deviation(expr);
        }
    }

    pub fn solve(&self) -> Result<DeviationSolved> {
        let builder = {
            let terms = self
                .rows
                .iter()
                .map(|(lam, _)| ObjTerm::Scalar(*lam, 1.0))
                .collect();
            let mut b = self.builder.clone();
            b.minimize(terms, 0.0);
            b
        };
        let sol = builder.solve()?;
        sol.require_optimal()?;

        let mut values: Vec<VarValue> = sol.values.clone();
        let mut instruments = Vec::with_capacity(self.instruments.len());
        for iv in &self.instruments {
            let choi: Vec<HermMatrix> = iv
                .choi_vars
                .iter()
                .zip(&iv.supports)
                .map(|(&w, support)| {
                    let raw = sol.matrix_value(w)?;
                    match support {
                        Some(v) => lift_support(raw, v, iv.dim),
                        None => Ok(raw.clone()),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let cleaned = instrument_from_solution(&iv.head, choi)?;
            for ((&w, cl), support) in iv
                .choi_vars
                .iter()
                .zip(cleaned.choi_list())
                .zip(&iv.supports)
            {
                let stored = match support {
                    Some(v) => compress_support(cl, v, iv.dim)?,
                    None => cl.clone(),
                };
                values[w] = VarValue::Matrix(stored);
            }
            instruments.push(cleaned);
        }

        let mut per_row = Vec::with_capacity(self.rows.len());
        for (_, expr) in &self.rows {
            let m = expr.eval(&values)?;
            per_row.push(HermMatrix::new(m)?.op_norm());
        }
        let value: f64 = per_row.iter().sum();
        let certified = sol.duality_gap < tol::SDP_GAP;
        Ok(DeviationSolved {
            sdp_objective: sol.objective,
            duality_gap: sol.duality_gap,
            value,
            per_row,
            instruments,
            certified,
        })
    }

}

/// Isometry onto the support of `a` when it is rank deficient: columns are
/// the eigenvectors with eigenvalue above `1e-12 * max(1, op_norm)`. A zero
/// element keeps its largest eigendirection so the variable stays nonempty.
fn support_isometry(a: &HermMatrix) -> Option<CMat> {
    let d = a.dim();
    let cut = 1e-12 * a.op_norm().max(1.0);
    let eig = a.matrix().clone().symmetric_eigen();
    let mut kept: Vec<usize> = (0..d).filter(|&k| eig.eigenvalues[k] > cut).collect();
    if kept.len() == d {
        return None;
    }
    if kept.is_empty() {
        let top = (0..d)
            .max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]))
            .expect("nonzero dimension");
        kept.push(top);
    }
    let mut v = CMat::zeros(d, kept.len());
    for (col, &k) in kept.iter().enumerate() {
        v.set_column(col, &eig.eigenvectors.column(k));
    }
    Some(v)
}

/// `W -> (V (x) 1) W (V (x) 1)^†`: full-size Choi matrix from its
/// support-compressed representation.
fn lift_support(w: &HermMatrix, v: &CMat, d: usize) -> Result<HermMatrix> {
    let vk = v.kronecker(&CMat::identity(d, d));
    HermMatrix::new(&vk * w.matrix() * vk.adjoint())
}

fn compress_support(w: &HermMatrix, v: &CMat, d: usize) -> Result<HermMatrix> {
    let vk = v.kronecker(&CMat::identity(d, d));
    HermMatrix::new(vk.adjoint() * w.matrix() * &vk)
}

/// Repairs solver output into an exactly feasible instrument: eigenvalue
/// clamping restores complete positivity, then a marginal correction of the
/// form `(A_x - tr_2[W]) (x) 1/d` restores the induced POVM exactly. The
/// correction can reintroduce a sliver of negativity, so the two steps
/// alternate until the branch is clean; the correction spreads its spectrum
/// over the tail factor, which shrinks the defect each round.
pub(crate) fn instrument_from_solution(head: &Povm, choi: Vec<HermMatrix>) -> Result<Instrument> {
    let d = head.dim();
    let repaired = choi
        .into_iter()
        .zip(head.elements())
        .map(|(w, a)| {
            let mut cur = w;
            eprintln!("REPAIR start min_eig {:.3e} head_min {:.3e} head_norm {:.3e}",
                cur.min_eigenvalue(), a.min_eigenvalue(), a.op_norm());
            for round in 0..32 {
                let clamped = clamp_psd(&cur);
                let marginal = clamped.partial_trace_2(d, d)?;
                let delta = a.sub(&marginal)?;
                let correction = delta.kron(&HermMatrix::scaled_identity(d, 1.0 / d as f64));
                cur = clamped.add(&correction)?;
                eprintln!("REPAIR round {round} min_eig {:.3e} delta_norm {:.3e}",
                    cur.min_eigenvalue(), delta.op_norm());
                if cur.min_eigenvalue() >= -1e-14 * cur.op_norm().max(1.0) {
                    break;
                }
            }
            Ok(cur)
        })
        .collect::<Result<Vec<_>>>()?;
    Instrument::from_choi_labeled(head.labels().to_vec(), repaired).map_err(|e| {
        Error::Internal(format!("solver instrument failed validation after repair: {e}"))
    })
}

fn clamp_psd(h: &HermMatrix) -> HermMatrix {
    if h.min_eigenvalue() >= 0.0 {
        return h.clone();
    }
    let eig = h.matrix().clone().symmetric_eigen();
    let d = h.dim();
    let mut m = crate::qmat::CMat::zeros(d, d);
    for k in 0..d {
        let lam = eig.eigenvalues[k].max(0.0);
        if lam > 0.0 {
            let col = eig.eigenvectors.column(k);
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] += crate::qmat::c(lam, 0.0) * col[i] * col[j].conj();
                }
            }
        }
    }
    HermMatrix::new(m).expect("clamped eigendecomposition is Hermitian")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::lueders_instrument;
    use crate::qmat::max_entry_diff;

    #[test]
    fn commuting_pair_has_zero_deviation() {
        let a = Povm::computational(2);
        let b = Povm::computational(2);
        let mut sdp = DeviationSdp::new();
        let inst = sdp.add_instrument(&a);
        sdp.add_tail_rows(inst, b.elements());
        let solved = sdp.solve().unwrap();
        assert!(
            solved.value < 1e-7,
            "commuting tail is preserved, got {}",
            solved.value
        );
        assert!(solved.certified, "gap {} certifies", solved.duality_gap);
        let induced = solved.instruments[0].induced_povm();
        for (got, want) in induced.elements().iter().zip(a.elements()) {
            assert!(max_entry_diff(got, want) < 1e-9, "marginals enforced");
        }
    }

    #[test]
    fn repair_restores_exact_marginals() {
        let p = Povm::computational(2);
        let i = lueders_instrument(&p);
        // Perturb the Choi matrices slightly below validation tolerances.
        let noisy: Vec<HermMatrix> = i
            .choi_list()
            .iter()
            .map(|w| {
                w.add(&HermMatrix::scaled_identity(4, -1e-10).clone())
                    .unwrap()
            })
            .collect();
        let repaired = instrument_from_solution(&p, noisy).unwrap();
        for (got, want) in repaired.induced_povm().elements().iter().zip(p.elements()) {
            assert!(
                max_entry_diff(got, want) < 1e-14,
                "marginal correction exact"
            );
        }
    }
}
