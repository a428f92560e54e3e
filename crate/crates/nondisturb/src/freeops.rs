//! Operations that cannot create disturbance: classical postprocessing of
//! outcomes, unitary preprocessing of the state, qubit channel preprocessing,
//! and local depolarizing noise. Each operation carries an instrument
//! transport that turns any instrument for the original POVM into one for the
//! transported POVM whose fixed-instrument disturbance is no larger, which
//! makes the optimized measures monotone under these operations.
//!
//! [`monotonicity_suite`] checks the transported-feasible-point inequalities
//! on random inputs; they hold exactly, so the margins are floating-point
//! noise around zero or better.

use serde::Serialize;

use crate::measurement::{Channel, Instrument, Povm};
use crate::mrmeasure::{disturbance_seq_fixed, total_adjoint_deviation};
use crate::qmat::HermMatrix;
use crate::{tol, Error, Result};

fn validate_kernel(kernel: &[Vec<f64>], n_old: usize) -> Result<()> {
    if kernel.is_empty() {
        return Err(Error::InvalidInput("empty postprocessing kernel".into()));
    }
    if kernel.iter().any(|row| row.len() != n_old) {
        return Err(Error::InvalidInput(format!(
            "kernel rows must have {n_old} entries, one per original outcome"
        )));
    }
    for j in 0..n_old {
        let mut col = 0.0;
        for row in kernel {
            if row[j] < -tol::KERNEL_STOCHASTIC {
                return Err(Error::InvalidInput(format!(
                    "negative kernel entry {} for original outcome {}",
                    row[j],
                    j + 1
                )));
            }
            col += row[j];
        }
        if (col - 1.0).abs() > tol::KERNEL_STOCHASTIC {
            return Err(Error::InvalidInput(format!(
                "kernel column {} sums to {col}, not 1",
                j + 1
            )));
        }
    }
    Ok(())
}

/// Classical postprocessing: new element `a` mixes the originals with the
/// conditional weights `kernel[a][a']`. Kernel columns must sum to 1.
pub fn post_process(a: &Povm, kernel: &[Vec<f64>]) -> Result<Povm> {
    validate_kernel(kernel, a.n_outcomes())?;
    let elements = kernel
        .iter()
        .map(|row| {
            let terms: Vec<(f64, &HermMatrix)> = row
                .iter()
                .zip(a.elements())
                .map(|(&w, e)| (w.max(0.0), e))
                .collect();
            HermMatrix::linear_combination(&terms)
        })
        .collect::<Result<Vec<_>>>()?;
    Povm::from_elements(elements)
}

/// Instrument transport for postprocessing: the branch for a new outcome is
/// the kernel-weighted sum of the original branches, so the total channel is
/// unchanged and the induced POVM is the postprocessed one.
pub fn post_process_instrument(i: &Instrument, kernel: &[Vec<f64>]) -> Result<Instrument> {
    validate_kernel(kernel, i.n_outcomes())?;
    let choi = kernel
        .iter()
        .map(|row| {
            let terms: Vec<(f64, &HermMatrix)> = row
                .iter()
                .enumerate()
                .map(|(x, &w)| (w.max(0.0), i.choi(x)))
                .collect();
            HermMatrix::linear_combination(&terms)
        })
        .collect::<Result<Vec<_>>>()?;
    Instrument::from_choi(choi)
}

/// POVMs conjugated by a preprocessing channel, with the flag saying whether
/// that transport is guaranteed monotone.
#[derive(Debug, Clone, Serialize)]
pub struct PreProcessed {
    pub povms: Vec<Povm>,
    /// Unitary channels admit an exact instrument transport in any dimension;
    /// for qubits every channel works because unital positive qubit maps
    /// preserve commutativity, so the compatibility hierarchy is stable.
    pub monotonicity_guaranteed: bool,
}

/// State preprocessing by a channel: measuring `A` on `ch(rho)` is measuring
/// the adjoint image of `A` on `rho`, applied to every POVM of a scenario.
pub fn pre_process_global(povms: &[&Povm], ch: &Channel) -> Result<PreProcessed> {
    if povms.is_empty() {
        return Err(Error::InvalidInput("no POVMs to transport".into()));
    }
    if povms.iter().any(|p| p.dim() != ch.dim()) {
        return Err(Error::DimMismatch("channel does not fit the POVMs".into()));
    }
    let transported = povms
        .iter()
        .map(|p| {
            let elements = p.elements().iter().map(|e| ch.adjoint_apply(e)).collect();
            Povm::new(p.labels().to_vec(), elements)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreProcessed {
        povms: transported,
        monotonicity_guaranteed: ch.as_unitary().is_some() || ch.dim() == 2,
    })
}

/// Instrument transport for unitary preprocessing: rotate in, apply the
/// branch, rotate back. The fixed-instrument disturbance is invariant.
/// Only unitary channels admit this transport.
pub fn pre_process_instrument(i: &Instrument, ch: &Channel) -> Result<Instrument> {
    let u = ch.as_unitary().ok_or_else(|| {
        Error::InvalidInput("instrument transport needs a unitary preprocessing channel".into())
    })?;
    if i.dim() != ch.dim() {
        return Err(Error::DimMismatch("channel does not fit the instrument".into()));
    }
    let forward = Channel::unitary(u.clone())?;
    let backward = Channel::unitary(u.adjoint())?;
    i.after_channel(&forward)?.then_channel(&backward)
}

/// Local depolarizing noise on the observed POVM: each element keeps an
/// `alpha` fraction and smears the rest over the identity.
pub fn depolarize_povm(a: &Povm, alpha: f64) -> Result<Povm> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "depolarizing weight {alpha} outside [0, 1]"
        )));
    }
    let d = a.dim();
    let id = HermMatrix::identity(d);
    let elements = a
        .elements()
        .iter()
        .map(|e| {
            HermMatrix::linear_combination(&[
                (alpha, e),
                ((1.0 - alpha) * e.trace() / d as f64, &id),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Povm::new(a.labels().to_vec(), elements)
}

/// Instrument transport for depolarizing noise: each branch keeps an `alpha`
/// fraction and routes the smeared weight through `lambda_d` (the original
/// total channel when `None`). The induced POVM is the depolarized one, and
/// with the default the total channel is unchanged.
pub fn depolarize_instrument(
    i: &Instrument,
    alpha: f64,
    lambda_d: Option<&Channel>,
) -> Result<Instrument> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "depolarizing weight {alpha} outside [0, 1]"
        )));
    }
    let default = lambda_d.is_none().then(|| i.total_channel());
    let route = lambda_d.unwrap_or_else(|| default.as_ref().expect("just built"));
    if route.dim() != i.dim() {
        return Err(Error::DimMismatch("routing channel does not fit".into()));
    }
    let d = i.dim() as f64;
    let choi = (0..i.n_outcomes())
        .map(|x| {
            let w = i.choi(x);
            HermMatrix::linear_combination(&[
                (alpha, w),
                ((1.0 - alpha) * w.trace() / d, route.choi()),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Instrument::from_choi_labeled(i.labels().to_vec(), choi)
}

/// Margins of one operation over the random trials: each margin is the
/// original fixed-instrument disturbance minus the transported one.
#[derive(Debug, Clone, Serialize)]
pub struct OpMargins {
    pub op: String,
    pub trials: usize,
    pub min_margin: f64,
    /// `min_margin >= -1e-7`.
    pub passed: bool,
}

impl OpMargins {
    fn new(op: String, margins: &[f64]) -> Self {
        let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            op,
            trials: margins.len(),
            min_margin,
            passed: min_margin >= -tol::FREE_OP_MARGIN,
        }
    }
}

/// Outcome of [`monotonicity_suite`].
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub seed: u64,
    pub ops: Vec<OpMargins>,
    pub all_passed: bool,
}

fn fixed_value(i: &Instrument, tail: &Povm) -> f64 {
    total_adjoint_deviation(i, tail.elements()).iter().sum()
}

struct TrialMargins {
    post: f64,
    unitary: f64,
    depol: [f64; 3],
    triple: f64,
}

/// Checks every transport on random scenarios: for each trial a random POVM
/// pair with a random instrument on dimension 2 or 3, plus a random triple
/// for the sequential measure. The inequalities are exact, so any margin
/// below the floating-point floor is a real defect. Trials draw from
/// independent per-trial streams and run in parallel; the report does not
/// depend on the thread count.
pub fn monotonicity_suite(seed: u64, trials: usize) -> Result<MonotonicityReport> {
    use rand::SeedableRng;
    use rayon::prelude::*;

    const ALPHAS: [f64; 3] = [0.25, 0.5, 0.75];
    let run_trial = |t: usize| -> Result<TrialMargins> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let d = 2 + t % 2;
        let a = crate::random::povm(&mut rng, d, 2);
        let b = crate::random::povm(&mut rng, d, 3);
        let ia = crate::random::instrument(&mut rng, &a);
        let before = fixed_value(&ia, &b);

        let kernel_a = crate::random::stochastic_kernel(&mut rng, 2, a.n_outcomes());
        let kernel_b = crate::random::stochastic_kernel(&mut rng, 2, b.n_outcomes());
        let post_i = post_process_instrument(&ia, &kernel_a)?;
        let post_b = post_process(&b, &kernel_b)?;
        let post = before - fixed_value(&post_i, &post_b);

        let ch = Channel::unitary(crate::random::unitary(&mut rng, d))?;
        let pre_i = pre_process_instrument(&ia, &ch)?;
        let pre_b = pre_process_global(&[&b], &ch)?.povms.remove(0);
        let unitary = before - fixed_value(&pre_i, &pre_b);

        let mut depol = [0.0; 3];
        for (k, &alpha) in ALPHAS.iter().enumerate() {
            let dep_i = depolarize_instrument(&ia, alpha, None)?;
            let dep_b = depolarize_povm(&b, alpha)?;
            depol[k] = before - fixed_value(&dep_i, &dep_b);
        }

        let q3 = crate::random::povm(&mut rng, d, 2);
        let i2 = crate::random::instrument(&mut rng, &b);
        let f_before =
            fixed_value(&i2, &q3) + disturbance_seq_fixed(&a, &ia, &i2, &q3)?.value;
        let alpha = ALPHAS[t % ALPHAS.len()];
        let dep_q3 = depolarize_povm(&q3, alpha)?;
        let dep_i2 = depolarize_instrument(&i2, alpha, None)?;
        let dep_ia = depolarize_instrument(&ia, alpha, None)?;
        let dep_a = depolarize_povm(&a, alpha)?;
        let f_after = fixed_value(&dep_i2, &dep_q3)
            + disturbance_seq_fixed(&dep_a, &dep_ia, &dep_i2, &dep_q3)?.value;
        let triple = f_before - f_after;

        Ok(TrialMargins {
            post,
            unitary,
            depol,
            triple,
        })
    };

    let results: Vec<TrialMargins> = (0..trials)
        .into_par_iter()
        .map(run_trial)
        .collect::<Result<Vec<_>>>()?;

    let column = |f: &dyn Fn(&TrialMargins) -> f64| -> Vec<f64> {
        results.iter().map(f).collect()
    };
    let mut ops = vec![
        OpMargins::new("post-process".into(), &column(&|r| r.post)),
        OpMargins::new("pre-process-unitary".into(), &column(&|r| r.unitary)),
    ];
    for (k, &alpha) in ALPHAS.iter().enumerate() {
        ops.push(OpMargins::new(
            format!("depolarize(alpha={alpha})"),
            &column(&|r| r.depol[k]),
        ));
    }
    ops.push(OpMargins::new(
        "depolarize-sequential".into(),
        &column(&|r| r.triple),
    ));
    let all_passed = ops.iter().all(|o| o.passed);
    Ok(MonotonicityReport {
        seed,
        ops,
        all_passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compat::commutes;
    use crate::measurement::lueders_instrument;
    use crate::qmat::{max_entry_diff, pauli_x, pauli_z};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_validation_rejects_bad_shapes() {
        let a = Povm::computational(2);
        assert!(post_process(&a, &[]).is_err(), "empty kernel");
        assert!(
            post_process(&a, &[vec![1.0], vec![0.0]]).is_err(),
            "short rows"
        );
        assert!(
            post_process(&a, &[vec![0.9, 0.5], vec![0.0, 0.5]]).is_err(),
            "column sum below one"
        );
        assert!(
            post_process(&a, &[vec![1.5, 0.0], vec![-0.5, 1.0]]).is_err(),
            "negative weight"
        );
    }

    #[test]
    fn post_process_merges_outcomes() {
        let a = Povm::computational(3);
        let kernel = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]];
        let merged = post_process(&a, &kernel).unwrap();
        assert_eq!(merged.n_outcomes(), 2);
        assert!(
            max_entry_diff(merged.element(1), &HermMatrix::from_diag(&[0.0, 1.0, 1.0])) < 1e-14,
            "second element collects two projectors"
        );

        let i = lueders_instrument(&a);
        let merged_i = post_process_instrument(&i, &kernel).unwrap();
        assert_eq!(merged_i.n_outcomes(), 2);
        assert!(
            max_entry_diff(
                merged_i.induced_povm().element(1),
                merged.element(1)
            ) < 1e-12,
            "transported instrument implements the merged POVM"
        );
        assert!(
            max_entry_diff(merged_i.total_channel().choi(), i.total_channel().choi()) < 1e-12,
            "postprocessing never touches the total channel"
        );
    }

    #[test]
    fn unitary_transport_is_an_exact_isometry_of_the_deviation() {
        let a = Povm::computational(2);
        let b = Povm::projective_from_eigenbasis(&pauli_x());
        let ia = lueders_instrument(&a);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ch = Channel::unitary(crate::random::unitary(&mut rng, 2)).unwrap();
        let ia_t = pre_process_instrument(&ia, &ch).unwrap();
        let b_t = pre_process_global(&[&b], &ch).unwrap().povms.remove(0);
        let before = total_adjoint_deviation(&ia, b.elements());
        let after = total_adjoint_deviation(&ia_t, b_t.elements());
        for (x, (u, v)) in before.iter().zip(&after).enumerate() {
            assert!((u - v).abs() < 1e-12, "norm preserved on element {x}");
        }
        assert!(
            max_entry_diff(
                ia_t.induced_povm().element(0),
                &ch.adjoint_apply(a.element(0))
            ) < 1e-12,
            "transported instrument implements the rotated POVM"
        );
    }

    #[test]
    fn pre_process_flags_follow_dimension_and_unitarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let qutrit = Povm::computational(3);
        let noisy3 = crate::random::channel(&mut rng, 3, 3);
        assert!(!pre_process_global(&[&qutrit], &noisy3).unwrap().monotonicity_guaranteed);
        let rot3 = Channel::unitary(crate::random::unitary(&mut rng, 3)).unwrap();
        assert!(pre_process_global(&[&qutrit], &rot3).unwrap().monotonicity_guaranteed);
        let qubit = Povm::computational(2);
        let noisy2 = crate::random::channel(&mut rng, 2, 4);
        assert!(pre_process_global(&[&qubit], &noisy2).unwrap().monotonicity_guaranteed);
        assert!(
            pre_process_instrument(&lueders_instrument(&qubit), &noisy2).is_err(),
            "nonunitary channels have no instrument transport"
        );
    }

    #[test]
    fn qubit_channels_preserve_commutativity() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = crate::random::commuting_pair(&mut rng, 2, 2, 3);
            let ch = crate::random::channel(&mut rng, 2, 1 + (seed % 4) as usize);
            let moved = pre_process_global(&[&a, &b], &ch).unwrap();
            let report = commutes(&moved.povms[0], &moved.povms[1]);
            assert!(
                report.commuting,
                "seed {seed}: qubit image stays abelian, commutator {}",
                report.max_commutator_norm
            );
        }
    }

    #[test]
    fn depolarize_povm_matches_formula_and_endpoints() {
        let a = Povm::projective_from_eigenbasis(&pauli_z());
        let dep = depolarize_povm(&a, 0.25).unwrap();
        let expect = HermMatrix::linear_combination(&[
            (0.25, a.element(0)),
            (0.75 * 0.5, &HermMatrix::identity(2)),
        ])
        .unwrap();
        assert!(max_entry_diff(dep.element(0), &expect) < 1e-14, "convex formula");
        let same = depolarize_povm(&a, 1.0).unwrap();
        assert!(max_entry_diff(same.element(0), a.element(0)) < 1e-14, "alpha 1 is identity");
        let flat = depolarize_povm(&a, 0.0).unwrap();
        assert!(
            max_entry_diff(flat.element(0), &HermMatrix::scaled_identity(2, 0.5)) < 1e-14,
            "alpha 0 forgets the element"
        );
        assert!(depolarize_povm(&a, 1.2).is_err(), "weight above one rejected");
    }

    #[test]
    fn depolarize_instrument_routes_and_implements() {
        let a = Povm::computational(2);
        let ia = lueders_instrument(&a);
        let dep = depolarize_instrument(&ia, 0.5, None).unwrap();
        let induced = dep.induced_povm();
        let target = depolarize_povm(&a, 0.5).unwrap();
        for x in 0..2 {
            assert!(
                max_entry_diff(induced.element(x), target.element(x)) < 1e-12,
                "induced element {x} is the depolarized one"
            );
        }
        assert!(
            max_entry_diff(dep.total_channel().choi(), ia.total_channel().choi()) < 1e-12,
            "default routing keeps the total channel"
        );
        let id = Channel::identity(2);
        let routed = depolarize_instrument(&ia, 0.5, Some(&id)).unwrap();
        let mixed = HermMatrix::linear_combination(&[
            (0.5, ia.total_channel().choi()),
            (0.5, id.choi()),
        ])
        .unwrap();
        assert!(
            max_entry_diff(routed.total_channel().choi(), &mixed) < 1e-12,
            "identity routing mixes the total channel"
        );
    }

    #[test]
    fn identity_routing_scales_deviations_by_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = crate::random::povm(&mut rng, 2, 2);
        let b = crate::random::povm(&mut rng, 2, 3);
        let ia = crate::random::instrument(&mut rng, &a);
        let id = Channel::identity(2);
        let base = total_adjoint_deviation(&ia, b.elements());
        for alpha in [0.25, 0.5, 0.75] {
            let head = depolarize_instrument(&ia, alpha, Some(&id)).unwrap();
            for (x, dev) in total_adjoint_deviation(&head, b.elements()).iter().enumerate() {
                assert!(
                    (dev - alpha * base[x]).abs() < 1e-9,
                    "head side scales by alpha on element {x}"
                );
            }
            let tail = depolarize_povm(&b, alpha).unwrap();
            for (x, dev) in total_adjoint_deviation(&ia, tail.elements()).iter().enumerate() {
                assert!(
                    (dev - alpha * base[x]).abs() < 1e-9,
                    "tail side scales by alpha on element {x}"
                );
            }
        }
    }

    #[test]
    fn suite_margins_stay_nonnegative() {
        let report = monotonicity_suite(11, 6).unwrap();
        assert_eq!(report.ops.len(), 6, "one row per operation");
        for op in &report.ops {
            assert!(
                op.passed,
                "{} min margin {} below the floor",
                op.op, op.min_margin
            );
        }
        assert!(report.all_passed);
    }
}
