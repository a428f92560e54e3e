//! End-to-end gates: each test checks one headline guarantee of the library
//! and prints a single pass or fail line with the measured figures.

use std::time::Instant;

use nondisturb::catalog::{self, TwoTimeInput};
use nondisturb::compat::{commutes, jm_margin};
use nondisturb::freeops::{depolarize_instrument, depolarize_povm, monotonicity_suite};
use nondisturb::measurement::{lueders_instrument, Channel, Povm};
use nondisturb::mrmeasure::{disturbance, mr_triple, total_adjoint_deviation, MrReport};
use nondisturb::qmat::{max_entry_diff, pauli_x, HermMatrix};
use nondisturb::random;
use nondisturb::sdpcore::SeesawConfig;
use nondisturb::sequence::{
    aot_check, channel_exists, nsit_check, prob_table, Scenario, Slot,
};
use nondisturb::tol;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gate(number: u32, name: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("criterion {number:02} {name}: {verdict} ({detail})");
    assert!(passed, "criterion {number:02} {name}: {detail}");
}

#[test]
fn criterion_01_catalog_fidelity() {
    let start = Instant::now();
    let q = catalog::qutrit_triple();

    let induced = q.instrument_a.induced_povm();
    let induced_diff = (0..2)
        .map(|x| max_entry_diff(induced.element(x), q.a.element(x)))
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut map_diff = 0.0f64;
    for _ in 0..20 {
        let x = random::herm(&mut rng, 3);
        let y = q.channel.adjoint_apply(&x);
        let m = x.matrix();
        let expect = HermMatrix::from_diag(&[
            m[(0, 0)].re,
            m[(1, 1)].re,
            (m[(0, 0)].re + m[(1, 1)].re) / 2.0,
        ]);
        map_diff = map_diff.max(max_entry_diff(&y, &expect));
    }

    let c1 = HermMatrix::from_diag(&[4.0 / 12.0, 6.0 / 12.0, 5.0 / 12.0]);
    let c2 = HermMatrix::from_diag(&[8.0 / 12.0, 6.0 / 12.0, 7.0 / 12.0]);
    let c_diff = max_entry_diff(q.c.element(0), &c1).max(max_entry_diff(q.c.element(1), &c2));

    let secs = start.elapsed().as_secs_f64();
    let passed = induced_diff < 1e-10 && map_diff < 1e-10 && c_diff == 0.0 && secs < 1.0;
    gate(
        1,
        "catalog-fidelity",
        passed,
        &format!(
            "induced deviation {induced_diff:.2e}, channel map deviation {map_diff:.2e}, \
             third-observable deviation {c_diff:.1e}, {secs:.2}s"
        ),
    );
}

#[test]
fn criterion_02_coarse_pair_nondisturbance() {
    let start = Instant::now();
    let (fine, coarse) = catalog::coarse_grained_pair().expect("pair builds at dimension 5");
    let fwd = disturbance(&fine, &coarse).expect("forward level solves");
    let rev = disturbance(&coarse, &fine).expect("reverse level solves");
    let com = commutes(&fine, &coarse);
    let secs = start.elapsed().as_secs_f64();
    let passed = fwd.value < 1e-6
        && rev.value < 1e-6
        && fwd.certified
        && rev.certified
        && fwd.duality_gap < 1e-7
        && rev.duality_gap < 1e-7
        && com.max_commutator_norm > 0.1
        && secs < 30.0;
    gate(
        2,
        "coarse-pair-nondisturbance",
        passed,
        &format!(
            "levels {:.2e} and {:.2e}, gaps {:.2e} and {:.2e}, commutator {:.3}, {secs:.1}s",
            fwd.value, rev.value, fwd.duality_gap, rev.duality_gap, com.max_commutator_norm
        ),
    );
}

#[test]
fn criterion_03_hollow_triangles() {
    let start = Instant::now();
    let five = catalog::verify("hollow-triangle-5").expect("entry is listed");
    let three = catalog::verify("qutrit-hollow-triangle").expect("entry is listed");
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<&str> = five
        .claims
        .iter()
        .chain(three.claims.iter())
        .filter(|c| !c.passed)
        .map(|c| c.claim.as_str())
        .collect();
    let n_claims = five.claims.len() + three.claims.len();
    let passed = five.all_passed && three.all_passed && secs < 120.0;
    gate(
        3,
        "hollow-triangles",
        passed,
        &format!("{n_claims} claims, failed {failed:?}, {secs:.1}s"),
    );
}

fn max_nsit_defect(sc: &Scenario) -> f64 {
    let t = prob_table(sc).expect("table builds");
    nsit_check(&t, false)
        .iter()
        .map(|c| c.defect)
        .fold(0.0, f64::max)
}

#[test]
fn criterion_04_two_time_defects() {
    let from_plus = max_nsit_defect(&catalog::two_time_scenario(TwoTimeInput::XPlus));
    let from_up = max_nsit_defect(&catalog::two_time_scenario(TwoTimeInput::ZUp));
    let reprepared = max_nsit_defect(&catalog::two_time_reprepare());
    let passed =
        (from_plus - 0.5).abs() <= 1e-12 && from_up <= 1e-12 && reprepared <= 1e-12;
    gate(
        4,
        "two-time-defects",
        passed,
        &format!(
            "superposition input {from_plus:.15}, basis input {from_up:.1e}, \
             reprepared {reprepared:.1e}"
        ),
    );
}

#[test]
fn criterion_05_hierarchy_sweep() {
    let start = Instant::now();
    let per_dim = 500usize;
    let mut violations: Vec<String> = Vec::new();
    for d in [2usize, 3] {
        for t in 0..per_dim {
            let mut rng = ChaCha8Rng::seed_from_u64(5_000 + (d as u64) * 1_000_000 + t as u64);
            let (a, b) = if t % 2 == 0 {
                random::commuting_pair(&mut rng, d, 2, 3)
            } else {
                (random::povm(&mut rng, d, 2), random::povm(&mut rng, d, 3))
            };
            let com = commutes(&a, &b).commuting;
            let fwd = disturbance(&a, &b).expect("forward level solves");
            let rev = disturbance(&b, &a).expect("reverse level solves");
            if !fwd.certified || !rev.certified {
                violations.push(format!("d={d} t={t}: uncertified level"));
                continue;
            }
            let fwd_nd = fwd.value < tol::NONDISTURBING;
            let rev_nd = rev.value < tol::NONDISTURBING;
            if com && !(fwd_nd && rev_nd) {
                violations.push(format!(
                    "d={d} t={t}: commuting pair disturbed ({:.2e}, {:.2e})",
                    fwd.value, rev.value
                ));
            }
            if fwd_nd || rev_nd {
                let jm = jm_margin(&[&a, &b]).expect("margin solves");
                if !jm.jointly_measurable {
                    violations.push(format!(
                        "d={d} t={t}: nondisturbing pair not jointly measurable \
                         (margin {:.2e})",
                        jm.margin
                    ));
                }
            }
            if d == 2 && (fwd_nd != com || rev_nd != com) {
                violations.push(format!(
                    "d=2 t={t}: commutation {com} but levels {:.2e}, {:.2e}",
                    fwd.value, rev.value
                ));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = violations.is_empty() && secs < 600.0;
    gate(
        5,
        "hierarchy-sweep",
        passed,
        &format!(
            "{} pairs, {} violations{}{}, {secs:.0}s",
            2 * per_dim,
            violations.len(),
            if violations.is_empty() { "" } else { ", first: " },
            violations.first().map(String::as_str).unwrap_or("")
        ),
    );
}

/// Random scenario with faithful instruments; even trials add random
/// interleaved channels.
fn random_scenario(rng: &mut ChaCha8Rng, n: usize, d: usize, with_channels: bool) -> Scenario {
    let slots: Vec<Slot> = (0..n)
        .map(|_| {
            let povm = random::povm(rng, d, 2);
            let instrument = random::instrument(rng, &povm);
            Slot { povm, instrument }
        })
        .collect();
    let channels =
        with_channels.then(|| (1..n).map(|_| random::channel(rng, d, 2)).collect());
    Scenario::new(slots, channels, random::state(rng, d)).expect("random scenario is valid")
}

/// Scenario whose slots all measure smeared functions of one basis through
/// their square-root instruments, so nothing signals to later slots.
fn codiagonal_scenario(rng: &mut ChaCha8Rng, d: usize) -> Scenario {
    let (a, b) = random::commuting_pair(rng, d, 2, 2);
    let slots = [&a, &b, &a]
        .into_iter()
        .map(|p| Slot {
            povm: p.clone(),
            instrument: lueders_instrument(p),
        })
        .collect();
    Scenario::new(slots, None, random::state(rng, d)).expect("codiagonal scenario is valid")
}

#[test]
fn criterion_06_reduced_signaling_equivalence() {
    let start = Instant::now();
    let cases = 1000usize;
    let mut mismatches = 0usize;
    let mut satisfied_cases = 0usize;
    for t in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(6_000 + t as u64);
        let d = 2 + t % 2;
        let sc = if t % 5 == 0 {
            codiagonal_scenario(&mut rng, d)
        } else {
            random_scenario(&mut rng, 3, d, t % 2 == 0)
        };
        let table = prob_table(&sc).expect("table builds");
        let full_ok = nsit_check(&table, false).iter().all(|c| c.satisfied);
        let reduced_ok = nsit_check(&table, true).iter().all(|c| c.satisfied);
        if full_ok != reduced_ok {
            mismatches += 1;
        }
        if full_ok {
            satisfied_cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = mismatches == 0 && satisfied_cases > 0 && satisfied_cases < cases;
    gate(
        6,
        "reduced-signaling-equivalence",
        passed,
        &format!(
            "{cases} scenarios, {mismatches} verdict mismatches, \
             {satisfied_cases} satisfied, {secs:.0}s"
        ),
    );
}

#[test]
fn criterion_07_arrow_of_time_self_test() {
    let start = Instant::now();
    let cases = 10_000usize;
    let mut worst = 0.0f64;
    for t in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(7_000 + t as u64);
        let n = 2 + t % 3;
        let d = 2 + t % 2;
        let sc = random_scenario(&mut rng, n, d, t % 4 == 0);
        let table = prob_table(&sc).expect("table builds");
        let defect = aot_check(&table)
            .iter()
            .map(|c| c.defect)
            .fold(0.0, f64::max);
        worst = worst.max(defect);
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = worst < 1e-10;
    gate(
        7,
        "arrow-of-time-self-test",
        passed,
        &format!("{cases} scenarios, worst defect {worst:.2e}, {secs:.0}s"),
    );
}

#[test]
fn criterion_08_free_operation_monotonicity() {
    let start = Instant::now();
    let report = monotonicity_suite(8, 200).expect("suite runs");
    let floor = report
        .ops
        .iter()
        .map(|o| o.min_margin)
        .fold(f64::INFINITY, f64::min);
    let rows_ok = report.ops.len() == 6 && report.ops.iter().all(|o| o.trials == 200);

    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut scale_diff = 0.0f64;
    for t in 0..20 {
        let d = 2 + t % 2;
        let a = random::povm(&mut rng, d, 2);
        let b = random::povm(&mut rng, d, 3);
        let ia = random::instrument(&mut rng, &a);
        let id = Channel::identity(d);
        let base = total_adjoint_deviation(&ia, b.elements());
        for alpha in [0.25, 0.5, 0.75] {
            let head = depolarize_instrument(&ia, alpha, Some(&id)).expect("head transport");
            for (x, dev) in total_adjoint_deviation(&head, b.elements()).iter().enumerate() {
                scale_diff = scale_diff.max((dev - alpha * base[x]).abs());
            }
            let tail = depolarize_povm(&b, alpha).expect("tail transport");
            for (x, dev) in total_adjoint_deviation(&ia, tail.elements()).iter().enumerate() {
                scale_diff = scale_diff.max((dev - alpha * base[x]).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = report.all_passed && rows_ok && floor >= -1e-7 && scale_diff < 1e-9;
    gate(
        8,
        "free-operation-monotonicity",
        passed,
        &format!(
            "margin floor {floor:.2e} over 200 trials and 6 transports, \
             scaling deviation {scale_diff:.2e}, {secs:.0}s"
        ),
    );
}

#[test]
fn criterion_09_channel_reachability() {
    let start = Instant::now();
    let z = Povm::computational(2);
    let mild = depolarize_povm(&z, 0.5).expect("smeared basis");
    let sharp = depolarize_povm(&z, 0.9).expect("less smeared basis");
    let up = channel_exists(&mild, &sharp, false).expect("sharpening instance solves");

    let coin = Povm::trivial(2, 2);
    let from_coin = channel_exists(&coin, &z, false).expect("coin instance solves");

    let x = Povm::projective_from_eigenbasis(&pauli_x());
    let rotated = channel_exists(&z, &x, false).expect("rotated instance solves");
    let transport_diff = rotated
        .channel
        .as_ref()
        .map(|ch| {
            (0..2)
                .map(|i| max_entry_diff(&ch.adjoint_apply(z.element(i)), x.element(i)))
                .fold(0.0, f64::max)
        })
        .unwrap_or(f64::INFINITY);

    let secs = start.elapsed().as_secs_f64();
    let passed = !up.feasible
        && up.certified
        && up.prefilter_obstruction
        && !from_coin.feasible
        && from_coin.certified
        && from_coin.prefilter_obstruction
        && rotated.feasible
        && rotated.certified
        && transport_diff < 1e-6
        && secs < 10.0;
    gate(
        9,
        "channel-reachability",
        passed,
        &format!(
            "sharpening feasible={} certified={}, coin-source feasible={} certified={}, \
             rotated feasible={} transport deviation {transport_diff:.2e}, {secs:.1}s",
            up.feasible, up.certified, from_coin.feasible, from_coin.certified, rotated.feasible
        ),
    );
}

fn worst_trace_rise(r: &MrReport) -> f64 {
    r.permutations
        .iter()
        .flat_map(|p| p.trace.windows(2).map(|w| w[1] - w[0]))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn bitwise_equal(a: &MrReport, b: &MrReport) -> bool {
    a.total.to_bits() == b.total.to_bits()
        && a.permutations.len() == b.permutations.len()
        && a.permutations.iter().zip(&b.permutations).all(|(p, q)| {
            p.order == q.order
                && p.value.to_bits() == q.value.to_bits()
                && p.trace.len() == q.trace.len()
                && p.trace
                    .iter()
                    .zip(&q.trace)
                    .all(|(x, y)| x.to_bits() == y.to_bits())
                && p.restart_values.len() == q.restart_values.len()
                && p.restart_values
                    .iter()
                    .zip(&q.restart_values)
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        })
}

#[test]
fn criterion_10_seesaw_contract() {
    let start = Instant::now();
    let cfg = SeesawConfig {
        max_iters: 6,
        restarts: 2,
        seed: 10,
        improve_tol: tol::SEESAW_IMPROVE,
    };
    let q = catalog::qutrit_triple();
    let qutrit_a = mr_triple(&q.a, &q.b, &q.c, &cfg).expect("qutrit run solves");
    let qutrit_b = mr_triple(&q.a, &q.b, &q.c, &cfg).expect("qutrit rerun solves");

    let z = Povm::computational(2);
    let x = Povm::projective_from_eigenbasis(&pauli_x());
    let coin = Povm::trivial(2, 2);
    let qubit_a = mr_triple(&z, &x, &coin, &cfg).expect("qubit run solves");
    let qubit_b = mr_triple(&z, &x, &coin, &cfg).expect("qubit rerun solves");

    let rise = worst_trace_rise(&qutrit_a)
        .max(worst_trace_rise(&qutrit_b))
        .max(worst_trace_rise(&qubit_a))
        .max(worst_trace_rise(&qubit_b));
    let reproducible = bitwise_equal(&qutrit_a, &qutrit_b) && bitwise_equal(&qubit_a, &qubit_b);
    let secs = start.elapsed().as_secs_f64();
    let passed = rise < 1e-9 && reproducible;
    gate(
        10,
        "seesaw-contract",
        passed,
        &format!(
            "worst per-step rise {rise:.2e}, bitwise reproducible {reproducible}, \
             totals {:.6} and {:.6}, {secs:.0}s",
            qutrit_a.total, qubit_a.total
        ),
    );
}
