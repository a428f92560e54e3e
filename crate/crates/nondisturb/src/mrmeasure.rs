//! Quantitative disturbance measures: fixed-instrument evaluation, the
//! instrument-optimized disturbance SDP, the symmetrized pair measure, and
//! the permutation-summed sequence measure driven by alternating
//! optimization over instrument tuples.

use itertools::Itertools;
use serde::Serialize;

use crate::dsdp::DeviationSdp;
use crate::measurement::{lueders_instrument, Instrument, Povm};
use crate::qmat::{max_entry_diff, HermMatrix};
use crate::sdpcore::{seesaw, AffineExpr, LinOp, SeesawConfig};
use crate::{tol, Error, Result};

/// Result of one disturbance evaluation (fixed or optimized).
#[derive(Debug, Clone, Serialize)]
pub struct DisturbanceReport {
    /// Sum of per-element operator-norm deviations.
    pub value: f64,
    pub per_element: Vec<f64>,
    pub element_labels: Vec<String>,
    pub nondisturbing: bool,
    /// True when the value is exact (fixed instrument) or the solver closed
    /// its duality gap below tolerance.
    pub certified: bool,
    pub duality_gap: f64,
    pub sdp_objective: f64,
    /// The instrument achieving `value` (the optimum for SDP reports).
    pub instrument: Instrument,
}

impl DisturbanceReport {
    fn from_exact(per: Vec<f64>, labels: Vec<String>, instrument: Instrument) -> Self {
        let value: f64 = per.iter().sum();
        Self {
            value,
            per_element: per,
            element_labels: labels,
            nondisturbing: value < tol::NONDISTURBING,
            certified: true,
            duality_gap: 0.0,
            sdp_objective: value,
            instrument,
        }
    }
}

/// Per-element Heisenberg fixed-point defects `||L*(B_y) - B_y||` of the
/// instrument's total channel over a Hermitian family.
pub fn total_adjoint_deviation(i: &Instrument, tail: &[HermMatrix]) -> Vec<f64> {
    let total = i.total_channel();
    tail.iter()
        .map(|b| {
            total
                .adjoint_apply(b)
                .sub(b)
                .expect("dims agree")
                .op_norm()
        })
        .collect()
}

pub(crate) fn require_implements(i: &Instrument, a: &Povm) -> Result<()> {
    if i.dim() != a.dim() || i.n_outcomes() != a.n_outcomes() {
        return Err(Error::DimMismatch(
            "instrument outcome structure does not match POVM".into(),
        ));
    }
    for (got, want) in i.induced_povm().elements().iter().zip(a.elements()) {
        if max_entry_diff(got, want) > tol::COMPLETENESS {
            return Err(Error::InvalidInput(
                "instrument does not implement the declared POVM".into(),
            ));
        }
    }
    Ok(())
}

/// Exact disturbance of a fixed instrument for `a` on the POVM `b`.
pub fn disturbance_fixed(a: &Povm, i: &Instrument, b: &Povm) -> Result<DisturbanceReport> {
    require_implements(i, a)?;
    if b.dim() != a.dim() {
        return Err(Error::DimMismatch("POVM dims differ".into()));
    }
    let per = total_adjoint_deviation(i, b.elements());
    Ok(DisturbanceReport::from_exact(
        per,
        b.labels().to_vec(),
        i.clone(),
    ))
}

/// Instrument-optimized disturbance of `a` on an arbitrary Hermitian family.
pub fn disturbance_vs_family(
    a: &Povm,
    tail: &[HermMatrix],
    labels: Vec<String>,
) -> Result<DisturbanceReport> {
    if tail.is_empty() || labels.len() != tail.len() {
        return Err(Error::InvalidInput("empty or mislabeled tail family".into()));
    }
    if tail.iter().any(|b| b.dim() != a.dim()) {
        return Err(Error::DimMismatch("tail dims differ from head".into()));
    }
    let mut sdp = DeviationSdp::new();
    let inst = sdp.add_instrument(a);
    sdp.add_tail_rows(inst, tail);
    let solved = sdp.solve()?;
    let value = solved.value;
    Ok(DisturbanceReport {
        value,
        per_element: solved.per_row,
        element_labels: labels,
        nondisturbing: value < tol::NONDISTURBING,
        certified: solved.certified,
        duality_gap: solved.duality_gap,
        sdp_objective: solved.sdp_objective,
        instrument: solved.instruments.into_iter().next().expect("one instrument"),
    })
}

/// Infimum over instruments implementing `a` of the disturbance on `b`.
pub fn disturbance(a: &Povm, b: &Povm) -> Result<DisturbanceReport> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch("POVM dims differ".into()));
    }
    disturbance_vs_family(a, b.elements(), b.labels().to_vec())
}

/// Exact two-step disturbance: deviation of `ia`'s total channel on the
/// sequential family `{(I_b^y)*(C_z)}`.
pub fn disturbance_seq_fixed(
    a: &Povm,
    ia: &Instrument,
    ib: &Instrument,
    c: &Povm,
) -> Result<DisturbanceReport> {
    require_implements(ia, a)?;
    if ib.dim() != a.dim() || c.dim() != a.dim() {
        return Err(Error::DimMismatch("sequence dims differ".into()));
    }
    let mut tail = Vec::new();
    let mut labels = Vec::new();
    for (y, ly) in ib.labels().iter().enumerate() {
        for (z, lz) in c.labels().iter().enumerate() {
            tail.push(ib.adjoint_apply_idx(y, c.element(z)));
            labels.push(format!("{ly},{lz}"));
        }
    }
    let per = total_adjoint_deviation(ia, &tail);
    Ok(DisturbanceReport::from_exact(per, labels, ia.clone()))
}

/// One permutation's outcome within a sequence-measure report.
#[derive(Debug, Clone, Serialize)]
pub struct MrPermutation {
    /// Measurement order as indices into the input POVM list.
    pub order: Vec<usize>,
    pub value: f64,
    /// Exact objective after every block solve of the winning restart.
    pub trace: Vec<f64>,
    /// Final objective of each restart (NaN when discarded for
    /// non-monotonicity).
    pub restart_values: Vec<f64>,
    pub best_restart: usize,
    pub converged: bool,
}

/// Permutation-summed measure report; values are converged upper bounds.
#[derive(Debug, Clone, Serialize)]
pub struct MrReport {
    pub total: f64,
    pub permutations: Vec<MrPermutation>,
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
}

/// Symmetrized pair measure `D(a, b) + D(b, a)`; both directions are convex
/// SDPs, so no alternating search is involved.
pub fn mr_pair(a: &Povm, b: &Povm) -> Result<MrReport> {
    let fwd = disturbance(a, b)?;
    let rev = disturbance(b, a)?;
    let permutations = vec![
        MrPermutation {
            order: vec![0, 1],
            value: fwd.value,
            trace: vec![fwd.value],
            restart_values: vec![fwd.value],
            best_restart: 0,
            converged: true,
        },
        MrPermutation {
            order: vec![1, 0],
            value: rev.value,
            trace: vec![rev.value],
            restart_values: vec![rev.value],
            best_restart: 0,
            converged: true,
        },
    ];
    Ok(MrReport {
        total: fwd.value + rev.value,
        permutations,
        seed: 0,
        restarts: 1,
        max_iters: 1,
    })
}

/// Sequential tail family for `order[start..]`: outcome-resolved Heisenberg
/// images of the final POVM through the fixed instruments.
fn tail_family(
    povms: &[&Povm],
    order: &[usize],
    instruments: &[Instrument],
    start: usize,
) -> Vec<HermMatrix> {
    let n = order.len();
    if start == n - 1 {
        return povms[order[n - 1]].elements().to_vec();
    }
    let deeper = tail_family(povms, order, instruments, start + 1);
    let inst = &instruments[start];
    (0..inst.n_outcomes())
        .flat_map(|y| deeper.iter().map(move |e| inst.adjoint_apply_idx(y, e)))
        .collect()
}

/// Exact sequence objective: `sum_k D_k(tail after k)` over head positions.
fn sequence_objective(povms: &[&Povm], order: &[usize], instruments: &[Instrument]) -> f64 {
    (0..order.len() - 1)
        .map(|k| {
            let tail = tail_family(povms, order, instruments, k + 1);
            total_adjoint_deviation(&instruments[k], &tail)
                .iter()
                .sum::<f64>()
        })
        .sum()
}

/// Outcome strings over instrument positions `from..=to` within the order.
fn outcome_strings(instruments: &[Instrument], from: usize, to: usize) -> Vec<Vec<usize>> {
    (from..=to)
        .map(|m| 0..instruments[m].n_outcomes())
        .multi_cartesian_product()
        .collect()
}

fn solve_block(
    povms: &[&Povm],
    order: &[usize],
    instruments: &[Instrument],
    j: usize,
) -> Result<Instrument> {
    let d = povms[0].dim();
    let head = povms[order[j]];
    let mut sdp = DeviationSdp::new();
    let inst_var = sdp.add_instrument(head);

    // Own term: deviation on the fixed tail after position j. Terms for
    // positions after j do not involve this block and are left out; they
    // re-enter through the exact objective evaluated after the solve.
    let inner_tail = tail_family(povms, order, instruments, j + 1);
    sdp.add_tail_rows(inst_var, &inner_tail);

    // Earlier terms: position k < j sees the variable instrument inside its
    // tail family; each outcome string contributes one deviation row.
    for k in 0..j {
        let w_k_tot = instruments[k].total_channel().choi().matrix().clone();
        let strings = if k + 1 < j {
            outcome_strings(instruments, k + 1, j - 1)
        } else {
            vec![Vec::new()]
        };
        for mid in &strings {
            for yj in 0..head.n_outcomes() {
                for e in &inner_tail {
                    // E = (I_{k+1})* ... (I_{j-1})* (W_j-branch)* (E_inner).
                    let (var, vdim, mut ops) = sdp.branch_adjoint_ops(inst_var, yj, e.matrix());
                    for (offset, &ym) in mid.iter().enumerate().rev() {
                        let m = k + 1 + offset;
                        ops.push(LinOp::FixedAdjoint {
                            d,
                            w: instruments[m].choi(ym).matrix().clone(),
                        });
                    }
                    let e_expr = AffineExpr::map_var(var, vdim, LinOp::Chain(ops.clone()));
                    let mut mapped_ops = ops;
                    mapped_ops.push(LinOp::FixedAdjoint {
                        d,
                        w: w_k_tot.clone(),
                    });
                    let mapped = AffineExpr::map_var(var, vdim, LinOp::Chain(mapped_ops));
                    sdp.add_deviation(mapped.sub(&e_expr)?);
                }
            }
        }
    }

    let solved = sdp.solve()?;
    Ok(solved.instruments.into_iter().next().expect("one instrument"))
}

fn permutation_value(
    povms: &[&Povm],
    order: &[usize],
    cfg: &SeesawConfig,
) -> Result<MrPermutation> {
    let n = order.len();
    let n_blocks = n - 1;
    let lueders: Vec<Instrument> = (0..n_blocks)
        .map(|j| lueders_instrument(povms[order[j]]))
        .collect();

    let result = seesaw(
        cfg,
        n_blocks,
        |restart, rng| {
            if restart == 0 {
                Ok(lueders.clone())
            } else {
                lueders
                    .iter()
                    .enumerate()
                    .map(|(j, l)| {
                        let random = crate::random::instrument(rng, povms[order[j]]);
                        Instrument::mix(l, &random, 0.9)
                    })
                    .collect()
            }
        },
        |block, state: &Vec<Instrument>| {
            let updated = solve_block(povms, order, state, block)?;
            let mut next = state.clone();
            next[block] = updated;
            let value = sequence_objective(povms, order, &next);
            Ok((next, value))
        },
    )?;

    let restart_values: Vec<f64> = result
        .restart_traces
        .iter()
        .map(|t| t.last().copied().unwrap_or(f64::NAN))
        .collect();
    Ok(MrPermutation {
        order: order.to_vec(),
        value: result.value,
        trace: result.trace,
        restart_values,
        best_restart: result.best_restart,
        converged: result.converged,
    })
}

/// Alternating optimization of the sequence objective in the given order of
/// the inputs, without summing over permutations. The value is an upper
/// bound on the coupled-instrument infimum for that order.
pub fn ordered_sequence_value(povms: &[&Povm], cfg: &SeesawConfig) -> Result<MrPermutation> {
    if povms.len() < 2 {
        return Err(Error::InvalidInput("need at least two POVMs".into()));
    }
    let d = povms[0].dim();
    if povms.iter().any(|p| p.dim() != d) {
        return Err(Error::DimMismatch("POVM dims differ".into()));
    }
    let order: Vec<usize> = (0..povms.len()).collect();
    permutation_value(povms, &order, cfg)
}

/// Permutation-summed sequence measure over all orderings of the inputs.
/// Each permutation value is an alternating-optimization upper bound on the
/// coupled-instrument infimum; lengths above 3 are experimental.
pub fn mr_sequence(povms: &[&Povm], cfg: &SeesawConfig) -> Result<MrReport> {
    if povms.len() < 2 {
        return Err(Error::InvalidInput("need at least two POVMs".into()));
    }
    let d = povms[0].dim();
    if povms.iter().any(|p| p.dim() != d) {
        return Err(Error::DimMismatch("POVM dims differ".into()));
    }
    let mut permutations = Vec::new();
    for order in (0..povms.len()).permutations(povms.len()) {
        permutations.push(permutation_value(povms, &order, cfg)?);
    }
    let total = permutations.iter().map(|p| p.value).sum();
    Ok(MrReport {
        total,
        permutations,
        seed: cfg.seed,
        restarts: cfg.restarts,
        max_iters: cfg.max_iters,
    })
}

/// Three-POVM sequence measure.
pub fn mr_triple(a: &Povm, b: &Povm, c: &Povm, cfg: &SeesawConfig) -> Result<MrReport> {
    mr_sequence(&[a, b, c], cfg)
}
