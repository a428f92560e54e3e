//! Compatibility relations between POVMs: commutation, joint measurability,
//! nondisturbance in both directions, first-kindness, and an algebraic span
//! criterion that settles disturbance without solving an SDP.
//!
//! The relations form a strict hierarchy: commuting families are mutually
//! nondisturbing, and a nondisturbing direction yields a joint measurement by
//! measuring sequentially. [`classify`] checks the hierarchy on its outputs
//! and reports an internal error if the numerical verdicts ever invert it.

use itertools::Itertools;
use serde::Serialize;

use crate::measurement::Povm;
use crate::mrmeasure::{disturbance, DisturbanceReport};
use crate::qmat::{c, commutator_norm, max_entry_diff, span_membership, CMat, HermMatrix};
use crate::sdpcore::{AffineExpr, ObjTerm, SdpBuilder, VarKind};
use crate::{tol, Error, Result};

/// Pairwise commutation verdict for two POVMs.
#[derive(Debug, Clone, Serialize)]
pub struct Commutation {
    /// True when every cross pair of elements commutes within
    /// [`tol::COMMUTATOR`].
    pub commuting: bool,
    /// Largest operator norm of a cross commutator.
    pub max_commutator_norm: f64,
}

/// Checks `[A_i, B_j] = 0` over all element pairs.
pub fn commutes(a: &Povm, b: &Povm) -> Commutation {
    let max = a
        .elements()
        .iter()
        .flat_map(|ea| b.elements().iter().map(move |eb| commutator_norm(ea, eb)))
        .fold(0.0, f64::max);
    Commutation {
        commuting: max < tol::COMMUTATOR,
        max_commutator_norm: max,
    }
}

/// Joint-measurability margin and, when nonnegative, an extracted joint POVM.
#[derive(Debug, Clone, Serialize)]
pub struct JmReport {
    /// Optimal value of `max t` such that some Hermitian grid family with the
    /// prescribed marginals satisfies `G_w >= t 1`. Nonnegative exactly when
    /// the POVMs are jointly measurable.
    pub margin: f64,
    /// `margin >= -`[`tol::JM_MARGIN`].
    pub jointly_measurable: bool,
    pub duality_gap: f64,
    /// Joint POVM with outcome labels joined by commas, present when jointly
    /// measurable. Eigenvalue clamping and a symmetric normalization make the
    /// elements exactly PSD and exactly complete.
    pub joint: Option<Povm>,
    /// Largest entry deviation of the extracted joint's marginals from the
    /// input POVMs; absent together with `joint`.
    pub marginal_defect: Option<f64>,
}

fn eig_map(h: &HermMatrix, f: impl Fn(f64) -> f64) -> HermMatrix {
    let eig = h.matrix().clone().symmetric_eigen();
    let d = h.dim();
    let mut m = CMat::zeros(d, d);
    for k in 0..d {
        let v = eig.eigenvectors.column(k);
        let s = c(f(eig.eigenvalues[k]), 0.0);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += s * v[i] * v[j].conj();
            }
        }
    }
    HermMatrix::new(m).expect("eigenbasis reconstruction is Hermitian")
}

/// Joint-measurability margin for two or more POVMs on one system.
///
/// The margin SDP maximizes `t` over Hermitian `G_w`, one per outcome tuple
/// `w`, subject to `G_w >= t 1` and the marginal constraints. The first
/// family's marginals are imposed in full; every later family drops its last
/// outcome, whose constraint is implied by completeness. The problem is
/// always feasible and bounded, so the margin is defined for any inputs.
pub fn jm_margin(povms: &[&Povm]) -> Result<JmReport> {
    if povms.len() < 2 {
        return Err(Error::InvalidInput(
            "joint measurability needs at least two POVMs".into(),
        ));
    }
    let d = povms[0].dim();
    if povms.iter().any(|p| p.dim() != d) {
        return Err(Error::DimMismatch("POVMs on different systems".into()));
    }

    let grid: Vec<Vec<usize>> = povms
        .iter()
        .map(|p| 0..p.n_outcomes())
        .multi_cartesian_product()
        .collect();

    let mut sdp = SdpBuilder::new();
    let g_vars: Vec<usize> = grid.iter().map(|_| sdp.add_var(VarKind::Herm(d))).collect();
    let t = sdp.add_var(VarKind::Scalar);

    for (i, povm) in povms.iter().enumerate() {
        let last_dropped = if i == 0 { povm.n_outcomes() } else { povm.n_outcomes() - 1 };
        for b in 0..last_dropped {
            let mut expr = AffineExpr::zero(d);
            for (widx, w) in grid.iter().enumerate() {
                if w[i] == b {
                    expr = expr.add(&AffineExpr::var(g_vars[widx], d))?;
                }
            }
            sdp.eq_zero(expr.add_const(povm.element(b), -1.0)?);
        }
    }
    let neg_id = HermMatrix::scaled_identity(d, -1.0);
    for &g in &g_vars {
        sdp.psd(AffineExpr::var(g, d).add(&AffineExpr::scalar_times(t, &neg_id))?);
    }
    sdp.minimize(vec![ObjTerm::Scalar(t, -1.0)], 0.0);

    let sol = sdp.solve()?;
    sol.require_optimal()?;
    let margin = sol.scalar_value(t)?;
    let jointly_measurable = margin >= -tol::JM_MARGIN;

    let (joint, marginal_defect) = if jointly_measurable {
        let clamped: Vec<HermMatrix> = g_vars
            .iter()
            .map(|&g| Ok(eig_map(sol.matrix_value(g)?, |l| l.max(0.0))))
            .collect::<Result<_>>()?;
        let total = HermMatrix::linear_combination(
            &clamped.iter().map(|h| (1.0, h)).collect::<Vec<_>>(),
        )?;
        let norm = eig_map(&total, |l| 1.0 / l.max(1e-12).sqrt());
        let elements: Vec<HermMatrix> = clamped
            .iter()
            .map(|h| {
                HermMatrix::new(norm.matrix() * h.matrix() * norm.matrix())
                    .expect("conjugation keeps Hermitian")
            })
            .collect();
        let labels: Vec<String> = grid
            .iter()
            .map(|w| {
                w.iter()
                    .enumerate()
                    .map(|(i, &b)| povms[i].labels()[b].clone())
                    .join(",")
            })
            .collect();
        let defect = povms
            .iter()
            .enumerate()
            .flat_map(|(i, povm)| {
                let elements = &elements;
                let grid = &grid;
                (0..povm.n_outcomes()).map(move |b| {
                    let marg = HermMatrix::linear_combination(
                        &grid
                            .iter()
                            .enumerate()
                            .filter(|(_, w)| w[i] == b)
                            .map(|(widx, _)| (1.0, &elements[widx]))
                            .collect::<Vec<_>>(),
                    )
                    .expect("marginal combination");
                    max_entry_diff(&marg, povm.element(b))
                })
            })
            .fold(0.0, f64::max);
        (Some(Povm::new(labels, elements)?), Some(defect))
    } else {
        (None, None)
    };

    Ok(JmReport {
        margin,
        jointly_measurable,
        duality_gap: sol.duality_gap,
        joint,
        marginal_defect,
    })
}

/// Pair convenience wrapper around [`jm_margin`].
pub fn jointly_measurable(a: &Povm, b: &Povm) -> Result<JmReport> {
    jm_margin(&[a, b])
}

/// Self-disturbance: a POVM is of the first kind when some implementation
/// leaves all of its own elements invariant.
pub fn first_kind(a: &Povm) -> Result<DisturbanceReport> {
    disturbance(a, a)
}

/// Spectral necessary condition for repeatability: every element must have
/// maximal eigenvalue 1 within [`tol::REPEATABLE`].
#[derive(Debug, Clone, Serialize)]
pub struct Repeatability {
    pub possible: bool,
    pub element_max_eigs: Vec<f64>,
}

pub fn repeatable_eigenvalue_check(a: &Povm) -> Repeatability {
    let element_max_eigs: Vec<f64> =
        a.elements().iter().map(|e| e.max_eigenvalue()).collect();
    Repeatability {
        possible: element_max_eigs.iter().all(|l| *l >= 1.0 - tol::REPEATABLE),
        element_max_eigs,
    }
}

/// Algebraic disturbance verdict for measuring `e` before observing `a`.
#[derive(Debug, Clone, Serialize)]
pub struct SpanCriterion {
    /// True when every squared element of the measured POVM lies in the real
    /// span of its elements; only then is the verdict decided algebraically.
    pub applicable: bool,
    pub max_span_residual: f64,
    pub max_commutator: f64,
    /// When applicable: `Some(true)` means every implementation of the
    /// measured POVM disturbs `a`, `Some(false)` means a nondisturbing
    /// implementation exists. `None` when not applicable.
    pub disturbing: Option<bool>,
}

/// Checks whether `e`'s square-span structure reduces disturbance of `a` to
/// commutation. When each `E_k^2` lies in `span{E_j}`, the fixed points of
/// every channel implementing `e` are contained in the commutant of `e`, so
/// `a` survives some implementation of `e` exactly when the families commute.
pub fn span_commutativity_criterion(a: &Povm, e: &Povm) -> SpanCriterion {
    let max_span_residual = e
        .elements()
        .iter()
        .map(|ek| {
            let sq = HermMatrix::new(ek.matrix() * ek.matrix()).expect("E^2 Hermitian");
            span_membership(&sq, e.elements()).1
        })
        .fold(0.0, f64::max);
    let applicable = max_span_residual < tol::SPAN_RESIDUAL;
    let commutation = commutes(a, e);
    SpanCriterion {
        applicable,
        max_span_residual,
        max_commutator: commutation.max_commutator_norm,
        disturbing: applicable.then_some(!commutation.commuting),
    }
}

/// Full pairwise compatibility classification.
#[derive(Debug, Clone, Serialize)]
pub struct CompatReport {
    pub commuting: bool,
    pub max_commutator_norm: f64,
    pub jointly_measurable: bool,
    pub jm_margin: f64,
    pub joint: Option<Povm>,
    /// Measuring `a` first can leave `b` undisturbed.
    pub nondisturbing_forward: bool,
    /// Measuring `b` first can leave `a` undisturbed.
    pub nondisturbing_backward: bool,
    pub disturbance_forward: DisturbanceReport,
    pub disturbance_backward: DisturbanceReport,
    pub first_kind_a: bool,
    pub first_kind_b: bool,
}

/// Runs every pairwise relation and cross-checks the hierarchy: commutation
/// implies nondisturbance both ways, and nondisturbance in either direction
/// implies joint measurability. A violated implication is an internal error,
/// not a property of the inputs.
pub fn classify(a: &Povm, b: &Povm) -> Result<CompatReport> {
    let commutation = commutes(a, b);
    let jm = jointly_measurable(a, b)?;
    let forward = disturbance(a, b)?;
    let backward = disturbance(b, a)?;
    let fk_a = first_kind(a)?;
    let fk_b = first_kind(b)?;

    if commutation.commuting && !(forward.nondisturbing && backward.nondisturbing) {
        return Err(Error::Internal(format!(
            "commuting pair classified disturbing: forward {:.3e}, backward {:.3e}",
            forward.value, backward.value
        )));
    }
    if (forward.nondisturbing || backward.nondisturbing) && !jm.jointly_measurable {
        return Err(Error::Internal(format!(
            "nondisturbing pair classified not jointly measurable: margin {:.3e}",
            jm.margin
        )));
    }

    Ok(CompatReport {
        commuting: commutation.commuting,
        max_commutator_norm: commutation.max_commutator_norm,
        jointly_measurable: jm.jointly_measurable,
        jm_margin: jm.margin,
        joint: jm.joint,
        nondisturbing_forward: forward.nondisturbing,
        nondisturbing_backward: backward.nondisturbing,
        disturbance_forward: forward,
        disturbance_backward: backward,
        first_kind_a: fk_a.nondisturbing,
        first_kind_b: fk_b.nondisturbing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{pauli_x, pauli_z};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noisy_pair(eta: f64) -> (Povm, Povm) {
        let smear = |s: &HermMatrix, sign: f64| {
            HermMatrix::linear_combination(&[
                (0.5, &HermMatrix::identity(2)),
                (sign * eta / 2.0, s),
            ])
            .unwrap()
        };
        let z = Povm::from_elements(vec![smear(&pauli_z(), 1.0), smear(&pauli_z(), -1.0)])
            .expect("noisy z POVM valid");
        let x = Povm::from_elements(vec![smear(&pauli_x(), 1.0), smear(&pauli_x(), -1.0)])
            .expect("noisy x POVM valid");
        (z, x)
    }

    #[test]
    fn noisy_pair_margin_matches_reference_below_threshold() {
        let (z, x) = noisy_pair(0.6);
        let r = jm_margin(&[&z, &x]).unwrap();
        assert!(
            (r.margin - 0.03786796543904423).abs() < 1e-6,
            "margin at visibility 0.6, got {}",
            r.margin
        );
        assert!(r.jointly_measurable, "below the compatibility threshold");
        assert!(r.duality_gap < tol::SDP_GAP, "certified optimum");
        let joint = r.joint.expect("joint POVM extracted");
        assert_eq!(joint.n_outcomes(), 4, "product grid outcomes");
        assert!(joint.labels()[0].contains(','), "labels joined per family");
        assert!(
            r.marginal_defect.expect("defect reported") < 1e-6,
            "extracted marginals reproduce the inputs"
        );
    }

    #[test]
    fn noisy_pair_margin_matches_reference_above_threshold() {
        let (z, x) = noisy_pair(0.8);
        let r = jm_margin(&[&z, &x]).unwrap();
        assert!(
            (r.margin - (-0.03284271366242487)).abs() < 1e-6,
            "margin at visibility 0.8, got {}",
            r.margin
        );
        assert!(!r.jointly_measurable, "above the compatibility threshold");
        assert!(r.joint.is_none(), "no joint POVM for incompatible pair");
    }

    #[test]
    fn jm_margin_rejects_single_family_and_mixed_dims() {
        let a = Povm::computational(2);
        assert!(jm_margin(&[&a]).is_err(), "need at least two POVMs");
        let b = Povm::computational(3);
        assert!(jm_margin(&[&a, &b]).is_err(), "dimension mismatch rejected");
    }

    #[test]
    fn pvm_joint_measurability_iff_commutation() {
        let comp = Povm::computational(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let other = crate::random::pvm(&mut rng, 3);
        assert!(!commutes(&comp, &other).commuting, "generic PVM pair noncommuting");
        assert!(
            !jm_margin(&[&comp, &other]).unwrap().jointly_measurable,
            "noncommuting PVMs are incompatible"
        );
        let relabeled = Povm::new(
            vec!["c".into(), "a".into(), "b".into()],
            comp.elements().to_vec(),
        )
        .unwrap();
        assert!(
            jm_margin(&[&comp, &relabeled]).unwrap().jointly_measurable,
            "commuting PVMs are compatible"
        );
    }

    #[test]
    fn commuting_triple_margin_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, b) = crate::random::commuting_pair(&mut rng, 3, 2, 3);
        let r = jm_margin(&[&a, &b, &a]).unwrap();
        assert!(
            r.margin >= -tol::JM_MARGIN,
            "commuting triple jointly measurable, margin {}",
            r.margin
        );
        let joint = r.joint.expect("joint for triple");
        assert_eq!(joint.n_outcomes(), 2 * 3 * 2, "triple product grid");
    }

    #[test]
    fn classify_commuting_pair_sets_whole_hierarchy() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (a, b) = crate::random::commuting_pair(&mut rng, 3, 2, 2);
        let rep = classify(&a, &b).unwrap();
        assert!(rep.commuting, "constructed pair commutes");
        assert!(rep.nondisturbing_forward && rep.nondisturbing_backward);
        assert!(rep.jointly_measurable);
        assert!(rep.first_kind_a && rep.first_kind_b, "abelian POVMs are first kind");
    }

    #[test]
    fn qubit_nondisturbance_matches_commutation() {
        for seed in 0..12u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = crate::random::povm(&mut rng, 2, 2);
            let b = crate::random::povm(&mut rng, 2, 3);
            let comm = commutes(&a, &b);
            let dist = disturbance(&a, &b).unwrap();
            assert_eq!(
                comm.commuting,
                dist.value < tol::NONDISTURBING,
                "qubit equivalence at seed {seed}: commutator {:.3e}, disturbance {:.3e}",
                comm.max_commutator_norm,
                dist.value
            );
        }
    }

    #[test]
    fn classify_incompatible_pair_clears_every_flag() {
        let (z, x) = noisy_pair(0.8);
        let rep = classify(&z, &x).unwrap();
        assert!(!rep.commuting);
        assert!(!rep.jointly_measurable);
        assert!(!rep.nondisturbing_forward && !rep.nondisturbing_backward);
        assert!(rep.first_kind_a && rep.first_kind_b, "noisy binary POVMs are abelian");
    }

    #[test]
    fn first_kind_separates_projective_from_trine() {
        let comp = first_kind(&Povm::computational(2)).unwrap();
        assert!(comp.nondisturbing, "projective measurements are first kind");
        let third = 2.0 / 3.0;
        let trine = Povm::from_elements(vec![
            HermMatrix::outer(&[c(1.0, 0.0), c(0.0, 0.0)]).scale(third),
            HermMatrix::outer(&[c(0.5, 0.0), c(0.75f64.sqrt(), 0.0)]).scale(third),
            HermMatrix::outer(&[c(-0.5, 0.0), c(0.75f64.sqrt(), 0.0)]).scale(third),
        ])
        .expect("trine POVM valid");
        let rep = first_kind(&trine).unwrap();
        assert!(!rep.nondisturbing, "trine disturbs itself");
        assert!(rep.value > 0.4, "self-disturbance near one half, got {}", rep.value);
    }

    #[test]
    fn repeatability_requires_unit_eigenvalues() {
        assert!(repeatable_eigenvalue_check(&Povm::computational(3)).possible);
        let (z, _) = noisy_pair(0.6);
        let rep = repeatable_eigenvalue_check(&z);
        assert!(!rep.possible, "smeared elements peak at 0.8");
        assert!((rep.element_max_eigs[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn span_criterion_decides_projective_cases() {
        let comp = Povm::computational(2);
        let xbasis = Povm::projective_from_eigenbasis(&pauli_x());
        let cross = span_commutativity_criterion(&xbasis, &comp);
        assert!(cross.applicable, "projector squares stay in span");
        assert_eq!(cross.disturbing, Some(true), "noncommuting PVM pair");
        let same = span_commutativity_criterion(&comp, &comp);
        assert_eq!(same.disturbing, Some(false), "self measurement undisturbed");
    }

    #[test]
    fn span_criterion_declines_generic_qutrit_povm() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let e = crate::random::povm(&mut rng, 3, 3);
        let a = Povm::computational(3);
        let crit = span_commutativity_criterion(&a, &e);
        assert!(!crit.applicable, "generic squares leave the span");
        assert!(crit.disturbing.is_none(), "no algebraic verdict");
        assert!(crit.max_span_residual > tol::SPAN_RESIDUAL);
    }
}
