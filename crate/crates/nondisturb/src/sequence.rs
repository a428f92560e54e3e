//! Sequential measurement scenarios: probability tables over measure/skip
//! settings, the statistical signaling conditions on those tables, the
//! operator-level nondisturbance conditions that guarantee them for every
//! initial state, time-dependent variants with evolution between slots, and
//! channel existence between POVMs.
//!
//! Table keys pair a settings vector (one bit per slot) with an outcome
//! vector whose entries are 1-based for measured slots and 0 for skipped
//! slots. Statistical conditions compare entries of one table; operator
//! conditions act on the scenario's instruments and hold state-independently.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::measurement::{Channel, Instrument, Povm};
use crate::mrmeasure::{
    disturbance_vs_family, ordered_sequence_value, require_implements, total_adjoint_deviation,
    MrPermutation,
};
use crate::qmat::{c, CMat, DensityMatrix, HermMatrix};
use crate::sdpcore::{AffineExpr, LinOp, SdpBuilder, SdpStatus, SeesawConfig, VarKind};
use crate::{tol, Error, Result};

/// One measurement slot: the observed POVM and the instrument implementing it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Slot {
    pub povm: Povm,
    pub instrument: Instrument,
}

/// Sequential scenario: slots in temporal order, optional evolution channels
/// between consecutive slots, and the initial state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ScenarioJson", into = "ScenarioJson")]
pub struct Scenario {
    slots: Vec<Slot>,
    channels: Option<Vec<Channel>>,
    initial: DensityMatrix,
}

#[derive(Clone, Serialize, Deserialize)]
struct ScenarioJson {
    slots: Vec<Slot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channels: Option<Vec<Channel>>,
    initial: DensityMatrix,
}

impl TryFrom<ScenarioJson> for Scenario {
    type Error = Error;

    fn try_from(j: ScenarioJson) -> Result<Self> {
        Scenario::new(j.slots, j.channels, j.initial)
    }
}

impl From<Scenario> for ScenarioJson {
    fn from(s: Scenario) -> Self {
        Self {
            slots: s.slots,
            channels: s.channels,
            initial: s.initial,
        }
    }
}

impl Scenario {
    /// Validates dimensions, the channel count, and that every instrument
    /// implements its slot's POVM.
    pub fn new(
        slots: Vec<Slot>,
        channels: Option<Vec<Channel>>,
        initial: DensityMatrix,
    ) -> Result<Self> {
        let n = slots.len();
        if n == 0 {
            return Err(Error::InvalidInput("scenario needs at least one slot".into()));
        }
        let d = slots[0].povm.dim();
        if initial.dim() != d {
            return Err(Error::DimMismatch("initial state dimension".into()));
        }
        for (i, slot) in slots.iter().enumerate() {
            if slot.povm.dim() != d || slot.instrument.dim() != d {
                return Err(Error::DimMismatch(format!("slot {} dimension", i + 1)));
            }
            require_implements(&slot.instrument, &slot.povm)?;
        }
        if let Some(chs) = &channels {
            if chs.len() != n - 1 {
                return Err(Error::InvalidInput(format!(
                    "{} channels for {} slots; need one between each pair",
                    chs.len(),
                    n
                )));
            }
            if chs.iter().any(|ch| ch.dim() != d) {
                return Err(Error::DimMismatch("channel dimension".into()));
            }
        }
        Ok(Self {
            slots,
            channels,
            initial,
        })
    }

    pub fn n(&self) -> usize {
        self.slots.len()
    }

    pub fn dim(&self) -> usize {
        self.slots[0].povm.dim()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, i: usize) -> &Slot {
        &self.slots[i]
    }

    pub fn channels(&self) -> Option<&[Channel]> {
        self.channels.as_deref()
    }

    pub fn initial(&self) -> &DensityMatrix {
        &self.initial
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(Error::from)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }
}

#[derive(Clone, Serialize)]
struct ProbRow {
    settings: String,
    outcomes: String,
    probability: f64,
}

#[derive(Clone, Serialize)]
struct ProbTableJson {
    n: usize,
    outcome_counts: Vec<usize>,
    rows: Vec<ProbRow>,
}

/// Joint outcome distribution for every measure/skip settings vector.
#[derive(Debug, Clone, Serialize)]
#[serde(into = "ProbTableJson")]
pub struct ProbTable {
    n: usize,
    outcome_counts: Vec<usize>,
    entries: BTreeMap<(Vec<u8>, Vec<usize>), f64>,
}

impl From<ProbTable> for ProbTableJson {
    fn from(t: ProbTable) -> Self {
        let rows = t
            .entries
            .iter()
            .map(|((s, q), p)| ProbRow {
                settings: bits(s),
                outcomes: q.iter().map(usize::to_string).join(","),
                probability: *p,
            })
            .collect();
        Self {
            n: t.n,
            outcome_counts: t.outcome_counts,
            rows,
        }
    }
}

fn bits(settings: &[u8]) -> String {
    settings.iter().map(u8::to_string).collect()
}

impl ProbTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn outcome_counts(&self) -> &[usize] {
        &self.outcome_counts
    }

    /// Probability of an outcome vector under a settings vector; outcome
    /// entries must be 0 exactly at skipped slots. Unknown keys read as 0.
    pub fn prob(&self, settings: &[u8], outcomes: &[usize]) -> f64 {
        self.entries
            .get(&(settings.to_vec(), outcomes.to_vec()))
            .copied()
            .unwrap_or(0.0)
    }

    /// CSV export with one row per table entry, in deterministic key order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("settings,outcomes,probability\n");
        for ((s, q), p) in &self.entries {
            let _ = writeln!(
                out,
                "{},\"{}\",{:.15e}",
                bits(s),
                q.iter().map(usize::to_string).join(","),
                p
            );
        }
        out
    }
}

fn settings_vectors(n: usize) -> Vec<Vec<u8>> {
    (0..n).map(|_| 0u8..=1).multi_cartesian_product().collect()
}

/// Valid outcome vectors for the given settings: 1-based ranges at measured
/// slots, the placeholder 0 at skipped slots.
fn outcome_assignments(counts: &[usize], settings: &[u8]) -> Vec<Vec<usize>> {
    settings
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            if s == 1 {
                (1..=counts[j]).collect::<Vec<_>>()
            } else {
                vec![0]
            }
        })
        .multi_cartesian_product()
        .collect()
}

fn fill_backward(
    sc: &Scenario,
    settings: &[u8],
    i: usize,
    x: &HermMatrix,
    outcomes: &mut [usize],
    total: &mut f64,
    entries: &mut BTreeMap<(Vec<u8>, Vec<usize>), f64>,
) {
    if i == 0 {
        let p = (sc.initial().matrix().matrix() * x.matrix()).trace().re;
        *total += p;
        entries.insert((settings.to_vec(), outcomes.to_vec()), p);
        return;
    }
    let slot = i - 1;
    let pull = |y: HermMatrix| -> HermMatrix {
        match (slot, sc.channels()) {
            (0, _) | (_, None) => y,
            (_, Some(chs)) => chs[slot - 1].adjoint_apply(&y),
        }
    };
    if settings[slot] == 1 {
        for q in 0..sc.slot(slot).povm.n_outcomes() {
            let pulled = pull(sc.slot(slot).instrument.adjoint_apply_idx(q, x));
            outcomes[slot] = q + 1;
            fill_backward(sc, settings, slot, &pulled, outcomes, total, entries);
        }
        outcomes[slot] = 0;
    } else {
        let pulled = pull(x.clone());
        outcomes[slot] = 0;
        fill_backward(sc, settings, slot, &pulled, outcomes, total, entries);
    }
}

/// Computes the full table by pulling each final operator backward through
/// the slots in the Heisenberg picture; a skipped slot acts as the identity.
/// Every settings vector is checked to sum to 1 within [`tol::PROB_NORM`].
pub fn prob_table(sc: &Scenario) -> Result<ProbTable> {
    let n = sc.n();
    let outcome_counts: Vec<usize> = sc.slots().iter().map(|s| s.povm.n_outcomes()).collect();
    let mut entries = BTreeMap::new();
    let id = HermMatrix::identity(sc.dim());
    for settings in settings_vectors(n) {
        let mut outcomes = vec![0usize; n];
        let mut total = 0.0;
        fill_backward(sc, &settings, n, &id, &mut outcomes, &mut total, &mut entries);
        if (total - 1.0).abs() > tol::PROB_NORM {
            return Err(Error::Internal(format!(
                "settings {} sum to {total}, not 1",
                bits(&settings)
            )));
        }
    }
    Ok(ProbTable {
        n,
        outcome_counts,
        entries,
    })
}

/// Verdict on one statistical condition of a probability table.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub id: String,
    pub defect: f64,
    /// `defect <` [`tol::CONDITION`].
    pub satisfied: bool,
}

impl ConditionReport {
    fn new(id: String, defect: f64) -> Self {
        Self {
            id,
            defect,
            satisfied: defect < tol::CONDITION,
        }
    }
}

/// Arrow-of-time conditions: adding one measured slot directly after a
/// prefix, with everything later skipped, must not change the prefix
/// statistics. One instance per nonempty prefix settings vector; a table
/// over `n` slots has `2^n - 2` instances.
pub fn aot_check(t: &ProbTable) -> Vec<ConditionReport> {
    let n = t.n;
    let mut out = Vec::new();
    for len in 1..n {
        for prefix in settings_vectors(len) {
            let mut lhs_settings = vec![0u8; n];
            lhs_settings[..len].copy_from_slice(&prefix);
            let mut rhs_settings = lhs_settings.clone();
            rhs_settings[len] = 1;
            let mut defect = 0.0f64;
            for q in outcome_assignments(&t.outcome_counts[..len], &prefix) {
                let mut key = vec![0usize; n];
                key[..len].copy_from_slice(&q);
                let lhs = t.prob(&lhs_settings, &key);
                let mut rhs = 0.0;
                for qm in 1..=t.outcome_counts[len] {
                    key[len] = qm;
                    rhs += t.prob(&rhs_settings, &key);
                }
                key[len] = 0;
                defect = defect.max((lhs - rhs).abs());
            }
            out.push(ConditionReport::new(format!("aot(prefix={})", bits(&prefix)), defect));
        }
    }
    out
}

/// No-signaling-in-time conditions: skipping slot `i` must reproduce the
/// marginal over its outcomes, for every surrounding settings vector that
/// measures at least one later slot (instances with no later measurement are
/// arrow-of-time conditions and are excluded).
///
/// With `reduced`, only the instances with all later slots measured are kept;
/// for tables satisfying [`aot_check`], this subset decides the full set.
pub fn nsit_check(t: &ProbTable, reduced: bool) -> Vec<ConditionReport> {
    let n = t.n;
    let mut out = Vec::new();
    for i in 0..n {
        for other in settings_vectors(n - 1) {
            let mut s = Vec::with_capacity(n);
            s.extend_from_slice(&other[..i]);
            s.push(0);
            s.extend_from_slice(&other[i..]);
            let later = &s[i + 1..];
            let keep = if reduced {
                !later.is_empty() && later.iter().all(|&b| b == 1)
            } else {
                later.iter().any(|&b| b == 1)
            };
            if !keep {
                continue;
            }
            let mut rhs_settings = s.clone();
            rhs_settings[i] = 1;
            let mut defect = 0.0f64;
            for q_other in outcome_assignments(&other_counts(&t.outcome_counts, i), &other) {
                let mut key = Vec::with_capacity(n);
                key.extend_from_slice(&q_other[..i]);
                key.push(0);
                key.extend_from_slice(&q_other[i..]);
                let lhs = t.prob(&s, &key);
                let mut rhs = 0.0;
                for qi in 1..=t.outcome_counts[i] {
                    key[i] = qi;
                    rhs += t.prob(&rhs_settings, &key);
                }
                key[i] = 0;
                defect = defect.max((lhs - rhs).abs());
            }
            let pattern: String = s
                .iter()
                .enumerate()
                .map(|(j, &b)| if j == i { '*'.to_string() } else { b.to_string() })
                .collect();
            out.push(ConditionReport::new(
                format!("nsit(i={}, s={pattern})", i + 1),
                defect,
            ));
        }
    }
    out
}

fn other_counts(counts: &[usize], skip: usize) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(_, k)| *k)
        .collect()
}

/// Every statistical condition of a table, with the cross-check that on
/// arrow-of-time-satisfying tables the reduced signaling set and the full
/// set reach the same verdict.
#[derive(Debug, Clone, Serialize)]
pub struct TableReport {
    pub aot: Vec<ConditionReport>,
    pub nsit_full: Vec<ConditionReport>,
    pub nsit_reduced: Vec<ConditionReport>,
    pub aot_satisfied: bool,
    pub nsit_satisfied: bool,
}

pub fn macrorealism_report(t: &ProbTable) -> Result<TableReport> {
    let aot = aot_check(t);
    let nsit_full = nsit_check(t, false);
    let nsit_reduced = nsit_check(t, true);
    let aot_satisfied = aot.iter().all(|r| r.satisfied);
    let full_ok = nsit_full.iter().all(|r| r.satisfied);
    let reduced_ok = nsit_reduced.iter().all(|r| r.satisfied);
    if aot_satisfied && full_ok != reduced_ok {
        return Err(Error::Internal(format!(
            "reduced signaling set (ok: {reduced_ok}) disagrees with the full set (ok: {full_ok})"
        )));
    }
    Ok(TableReport {
        aot,
        nsit_full,
        nsit_reduced,
        aot_satisfied,
        nsit_satisfied: full_ok,
    })
}

/// Verdict on one operator-level nondisturbance condition.
#[derive(Debug, Clone, Serialize)]
pub struct NdCondition {
    pub id: String,
    pub defect: f64,
    pub threshold: f64,
    pub satisfied: bool,
    /// True when the defect is an instrument-optimized SDP value rather than
    /// a fixed-instrument operator identity.
    pub via_sdp: bool,
}

impl NdCondition {
    fn exact(id: String, defect: f64) -> Self {
        Self {
            id,
            defect,
            threshold: tol::CONDITION,
            satisfied: defect < tol::CONDITION,
            via_sdp: false,
        }
    }

    fn from_sdp(id: String, defect: f64) -> Self {
        Self {
            id,
            defect,
            threshold: tol::NONDISTURBING,
            satisfied: defect < tol::NONDISTURBING,
            via_sdp: true,
        }
    }
}

/// Heisenberg images of the final POVM through the given instrument chain,
/// with comma-joined outcome labels; earlier outcomes vary slowest.
fn heisenberg_family(
    instruments: &[&Instrument],
    final_povm: &Povm,
) -> (Vec<HermMatrix>, Vec<String>) {
    match instruments.split_first() {
        None => (
            final_povm.elements().to_vec(),
            final_povm.labels().to_vec(),
        ),
        Some((first, rest)) => {
            let (deeper, deeper_labels) = heisenberg_family(rest, final_povm);
            let mut ops = Vec::with_capacity(first.n_outcomes() * deeper.len());
            let mut labels = Vec::with_capacity(ops.capacity());
            for y in 0..first.n_outcomes() {
                for (e, l) in deeper.iter().zip(&deeper_labels) {
                    ops.push(first.adjoint_apply_idx(y, e));
                    labels.push(format!("{},{l}", first.labels()[y]));
                }
            }
            (ops, labels)
        }
    }
}

fn max_fixed_deviation(i: &Instrument, family: &[HermMatrix]) -> f64 {
    total_adjoint_deviation(i, family)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Head and tail conditions for a two-condition pair sequence.
#[derive(Debug, Clone, Serialize)]
pub struct PairSequenceReport {
    pub head: NdCondition,
    pub tail: NdCondition,
    pub satisfied: bool,
}

/// State-independent conditions for a three-slot sequence with the middle
/// instrument fixed: a head SDP searching instruments for the first POVM
/// against the branch images of the third, and a fixed operator identity for
/// the middle instrument's total channel on the third POVM.
pub fn obs1_conditions(q1: &Povm, i2: &Instrument, q3: &Povm) -> Result<PairSequenceReport> {
    if q1.dim() != i2.dim() || q1.dim() != q3.dim() {
        return Err(Error::DimMismatch("sequence dims differ".into()));
    }
    let mut family = Vec::with_capacity(i2.n_outcomes() * q3.n_outcomes());
    let mut labels = Vec::with_capacity(family.capacity());
    for y in 0..i2.n_outcomes() {
        for z in 0..q3.n_outcomes() {
            family.push(i2.adjoint_apply_idx(y, q3.element(z)));
            labels.push(format!("{},{}", i2.labels()[y], q3.labels()[z]));
        }
    }
    let head_rep = disturbance_vs_family(q1, &family, labels)?;
    let head = NdCondition::from_sdp("head".into(), head_rep.value);
    let tail_defect = total_adjoint_deviation(i2, q3.elements())
        .into_iter()
        .fold(0.0, f64::max);
    let tail = NdCondition::exact("tail".into(), tail_defect);
    let satisfied = head.satisfied && tail.satisfied;
    Ok(PairSequenceReport {
        head,
        tail,
        satisfied,
    })
}

/// Joint search over both instruments of the three-slot sequence: minimizes
/// the summed head and tail deviations by alternating optimization.
pub fn obs1_joint_search(
    q1: &Povm,
    q2: &Povm,
    q3: &Povm,
    cfg: &SeesawConfig,
) -> Result<MrPermutation> {
    ordered_sequence_value(&[q1, q2, q3], cfg)
}

/// Fixed-order nondisturbance conditions for an `n`-slot sequence: for each
/// slot `k` before the last, the slot's total channel must leave the joint
/// branch family of everything after it invariant. `instruments` carries one
/// instrument per slot except the last. With `head_sdp`, the first condition
/// is instead optimized over instruments implementing the first POVM.
pub fn obs2_conditions(
    povms: &[&Povm],
    instruments: &[&Instrument],
    head_sdp: bool,
) -> Result<Vec<NdCondition>> {
    let n = povms.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two slots".into()));
    }
    if instruments.len() != n - 1 {
        return Err(Error::InvalidInput(format!(
            "{} instruments for {} slots; need one per slot except the last",
            instruments.len(),
            n
        )));
    }
    let d = povms[0].dim();
    if povms.iter().any(|p| p.dim() != d) {
        return Err(Error::DimMismatch("POVM dims differ".into()));
    }
    for (k, i) in instruments.iter().enumerate() {
        require_implements(i, povms[k])?;
    }
    let mut out = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let (family, labels) = heisenberg_family(&instruments[k + 1..], povms[n - 1]);
        let id = format!("nd({})", k + 1);
        if k == 0 && head_sdp {
            let rep = disturbance_vs_family(povms[0], &family, labels)?;
            out.push(NdCondition::from_sdp(id, rep.value));
        } else {
            out.push(NdCondition::exact(id, max_fixed_deviation(instruments[k], &family)));
        }
    }
    Ok(out)
}

/// Order-free nondisturbance conditions and the adroitness level.
#[derive(Debug, Clone, Serialize)]
pub struct OrderedConditionsReport {
    /// One condition per ordered subsequence of length >= 2; the full-length
    /// orders are the entries whose id lists all slots.
    pub conditions: Vec<NdCondition>,
    /// Largest `k` such that every ordered subsequence of length <= `k`
    /// satisfies its head condition; single slots pass trivially.
    pub adroit_level: usize,
}

/// Evaluates the head condition of every ordered subsequence with the given
/// fixed instruments (one per POVM; the last instrument in any order is
/// never used). No optimization over instruments is performed.
pub fn obs3_all_orders(
    povms: &[&Povm],
    instruments: &[&Instrument],
) -> Result<OrderedConditionsReport> {
    let n = povms.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two slots".into()));
    }
    if instruments.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} instruments for {} POVMs; need one each",
            instruments.len(),
            n
        )));
    }
    let d = povms[0].dim();
    if povms.iter().any(|p| p.dim() != d) {
        return Err(Error::DimMismatch("POVM dims differ".into()));
    }
    for (k, i) in instruments.iter().enumerate() {
        require_implements(i, povms[k])?;
    }
    let mut conditions = Vec::new();
    let mut adroit_level = 1;
    let mut level_open = true;
    for m in 2..=n {
        let mut all_ok = true;
        for sub in (0..n).permutations(m) {
            let middles: Vec<&Instrument> =
                sub[1..m - 1].iter().map(|&j| instruments[j]).collect();
            let (family, _) = heisenberg_family(&middles, povms[sub[m - 1]]);
            let defect = max_fixed_deviation(instruments[sub[0]], &family);
            let id = format!(
                "order {}",
                sub.iter().map(|j| (j + 1).to_string()).join(">")
            );
            let cond = NdCondition::exact(id, defect);
            all_ok &= cond.satisfied;
            conditions.push(cond);
        }
        if level_open && all_ok {
            adroit_level = m;
        } else {
            level_open = false;
        }
    }
    Ok(OrderedConditionsReport {
        conditions,
        adroit_level,
    })
}

/// Which initial states the tail identity of [`time_dependent_check`] must
/// cover: every state, or only states reachable through the first evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StateSet {
    Full,
    ChannelImage,
}

/// Conditions for a three-slot sequence with evolution channels between
/// slots. The head condition optimizes instruments for the first POVM
/// against the evolved branch images of the third; the tail condition is the
/// middle instrument's operator identity, composed with the first evolution
/// when only its image states matter.
pub fn time_dependent_check(
    q1: &Povm,
    i2: &Instrument,
    q3: &Povm,
    ch12: &Channel,
    ch23: &Channel,
    states: StateSet,
) -> Result<PairSequenceReport> {
    let d = q1.dim();
    if [i2.dim(), q3.dim(), ch12.dim(), ch23.dim()].iter().any(|&x| x != d) {
        return Err(Error::DimMismatch("sequence dims differ".into()));
    }
    let evolved_q3: Vec<HermMatrix> = q3
        .elements()
        .iter()
        .map(|e| ch23.adjoint_apply(e))
        .collect();
    let mut family = Vec::with_capacity(i2.n_outcomes() * q3.n_outcomes());
    let mut labels = Vec::with_capacity(family.capacity());
    for y in 0..i2.n_outcomes() {
        for (z, x) in evolved_q3.iter().enumerate() {
            family.push(ch12.adjoint_apply(&i2.adjoint_apply_idx(y, x)));
            labels.push(format!("{},{}", i2.labels()[y], q3.labels()[z]));
        }
    }
    let head_rep = disturbance_vs_family(q1, &family, labels)?;
    let head = NdCondition::from_sdp("head".into(), head_rep.value);

    let lam2 = i2.total_channel();
    let mut tail_defect = 0.0f64;
    for x in &evolved_q3 {
        let y = lam2.adjoint_apply(x).sub(x)?;
        let defect = match states {
            StateSet::Full => y.op_norm(),
            StateSet::ChannelImage => ch12.adjoint_apply(&y).op_norm(),
        };
        tail_defect = tail_defect.max(defect);
    }
    let tail = NdCondition::exact("tail".into(), tail_defect);
    let satisfied = head.satisfied && tail.satisfied;
    Ok(PairSequenceReport {
        head,
        tail,
        satisfied,
    })
}

/// Existence verdict for a channel transporting one POVM onto another.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelExistence {
    pub feasible: bool,
    /// True when the verdict carries a solver certificate: an optimal point
    /// when feasible, infeasibility certificates for every tried relabeling
    /// otherwise.
    pub certified: bool,
    /// Outcome relabeling `to[perm[x]] = adjoint(from[x])` that admitted a
    /// channel; `None` when infeasible.
    pub permutation: Option<Vec<usize>>,
    /// True when the unital-positivity eigenvalue bounds already rule out
    /// every relabeling: an adjoint channel can never raise a maximal or
    /// lower a minimal eigenvalue.
    pub prefilter_obstruction: bool,
    pub channel: Option<Channel>,
}

fn eig_blocked(from: &Povm, to: &Povm, perm: &[usize]) -> bool {
    (0..from.n_outcomes()).any(|x| {
        let source = from.element(x);
        let target = to.element(perm[x]);
        target.max_eigenvalue() > source.max_eigenvalue() + tol::SOLVER_FEAS
            || target.min_eigenvalue() < source.min_eigenvalue() - tol::SOLVER_FEAS
    })
}

/// Kraus operators from a process matrix eigendecomposition, with a final
/// symmetric normalization that restores exact trace preservation.
fn channel_from_process_matrix(w: &HermMatrix, d: usize) -> Result<Channel> {
    let eig = w.matrix().clone().symmetric_eigen();
    let mut kraus: Vec<CMat> = Vec::new();
    for k in 0..d * d {
        let lam = eig.eigenvalues[k];
        if lam <= tol::PSD_REL {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let kdag = CMat::from_fn(d, d, |a, b| v[a * d + b] * c(lam.sqrt(), 0.0));
        kraus.push(kdag.adjoint());
    }
    if kraus.is_empty() {
        return Err(Error::Internal("process matrix has no positive part".into()));
    }
    let mut s = CMat::zeros(d, d);
    for k in &kraus {
        s += k.adjoint() * k;
    }
    let norm = HermMatrix::new(s)?;
    let inv_sqrt = {
        let eig = norm.matrix().clone().symmetric_eigen();
        let mut m = CMat::zeros(d, d);
        for k in 0..d {
            let v = eig.eigenvectors.column(k);
            let s = c(1.0 / eig.eigenvalues[k].max(1e-12).sqrt(), 0.0);
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] += s * v[i] * v[j].conj();
                }
            }
        }
        m
    };
    Channel::from_kraus(kraus.into_iter().map(|k| k * &inv_sqrt).collect())
}

enum Transport {
    Found(Channel),
    Ruled,
    Undecided,
}

fn solve_transport(from: &Povm, to: &Povm, perm: &[usize]) -> Result<Transport> {
    let d = from.dim();
    let k = from.n_outcomes();
    let mut b = SdpBuilder::new();
    let w = b.add_var(VarKind::HermPsd(d * d));
    b.eq_zero(
        AffineExpr::map_var(w, d * d, LinOp::PTrace2 { d })
            .add_const(&HermMatrix::identity(d), -1.0)?,
    );
    // The last transport row is implied by trace preservation and
    // completeness of both POVMs.
    for x in 0..k - 1 {
        b.eq_zero(
            AffineExpr::map_var(
                w,
                d * d,
                LinOp::ContractTail {
                    d,
                    c: from.element(x).matrix().clone(),
                },
            )
            .add_const(to.element(perm[x]), -1.0)?,
        );
    }
    b.minimize(vec![], 0.0);
    let sol = b.solve()?;
    match sol.status {
        SdpStatus::Optimal => Ok(Transport::Found(channel_from_process_matrix(
            sol.matrix_value(w)?,
            d,
        )?)),
        SdpStatus::Infeasible => Ok(Transport::Ruled),
        SdpStatus::NumericalFailure(_) => Ok(Transport::Undecided),
    }
}

/// Decides whether some channel's adjoint maps `from` elementwise onto `to`,
/// optionally over all outcome relabelings. The eigenvalue prefilter and the
/// solver verdict must agree; a disagreement is an internal error.
pub fn channel_exists(from: &Povm, to: &Povm, allow_relabel: bool) -> Result<ChannelExistence> {
    if from.dim() != to.dim() {
        return Err(Error::DimMismatch("POVMs on different systems".into()));
    }
    let k = from.n_outcomes();
    if to.n_outcomes() != k {
        return Err(Error::InvalidInput(
            "outcome counts differ; relabeling is a bijection".into(),
        ));
    }
    let perms: Vec<Vec<usize>> = if allow_relabel {
        (0..k).permutations(k).collect()
    } else {
        vec![(0..k).collect()]
    };
    let mut prefilter_obstruction = true;
    let mut all_ruled = true;
    for perm in &perms {
        let blocked = eig_blocked(from, to, perm);
        if !blocked {
            prefilter_obstruction = false;
        }
        match solve_transport(from, to, perm)? {
            Transport::Found(channel) => {
                if blocked {
                    return Err(Error::Internal(
                        "eigenvalue prefilter contradicts a feasible transport".into(),
                    ));
                }
                return Ok(ChannelExistence {
                    feasible: true,
                    certified: true,
                    permutation: Some(perm.clone()),
                    prefilter_obstruction: false,
                    channel: Some(channel),
                });
            }
            Transport::Ruled => {}
            Transport::Undecided => all_ruled = false,
        }
    }
    Ok(ChannelExistence {
        feasible: false,
        certified: all_ruled,
        permutation: None,
        prefilter_obstruction,
        channel: None,
    })
}
