//! Acceptance suite: every release-gating behaviour checked end to end,
//! one test per criterion, each printing a single PASS line (run with
//! `--nocapture` to see them).
//!
//! The heavy incident battery (criteria 5 and 6) runs once and is
//! shared; everything else builds its own fixtures. Oracles here are
//! written against dense representations, independent of the library
//! internals they check.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::LazyLock;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ccsim_core::decision::{vp_decide, Method, Report};
use ccsim_core::evidence::{
    combine_all, conjunctive_combine, dempster_combine, mass_from_cause_vector, pignistic,
    validate_mass, Cause, CauseSet, CauseVector, CombinationRule, MassFunction,
};
use ccsim_core::ids::{SegmentId, VehicleId};
use ccsim_core::metrics::{
    compare_methods, gap_percentile, mean, penetration_sweep, stddev, write_sweep_csv, RunMetrics,
};
use ccsim_core::rules::{
    apriori_frequent, generate_rules, max_one_itemset, mine_supervised, transaction_from_vector,
    Dataset, MiningConfig,
};
use ccsim_core::trafficsim::{classify_surrogate, load_scenario, load_scenario_str, run};

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

/// Per-method aggregates of the shared incident battery.
struct Battery {
    rows: Vec<RunMetrics>,
}

impl Battery {
    fn finals(&self, m: Method) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == m)
            .map(|r| r.final_accuracy)
            .collect()
    }

    fn mean_final(&self, m: Method) -> f64 {
        mean(self.finals(m)).unwrap()
    }

    fn mean_detection(&self, m: Method) -> f64 {
        mean(self
            .rows
            .iter()
            .filter(|r| r.method == m)
            .filter_map(|r| r.detection_time))
        .expect("every run detects in this battery")
    }

    fn mean_false_alarm(&self, m: Method) -> f64 {
        mean(self
            .rows
            .iter()
            .filter(|r| r.method == m)
            .map(|r| r.false_alarm_pct))
        .unwrap()
    }

    /// Two-sample pooled t statistic for the difference of mean final
    /// accuracy (equal run counts per method).
    fn gap_t(&self, a: Method, b: Method) -> f64 {
        let (fa, fb) = (self.finals(a), self.finals(b));
        let n = fa.len() as f64;
        let gap = mean(fa.iter().copied()).unwrap() - mean(fb.iter().copied()).unwrap();
        let pooled = ((stddev(&fa).powi(2) + stddev(&fb).powi(2)) / 2.0).sqrt();
        if pooled == 0.0 {
            return if gap >= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        gap / (pooled * (2.0 / n).sqrt())
    }
}

static BATTERY: LazyLock<Battery> = LazyLock::new(|| {
    let cfg = load_scenario(scenario_dir().join("incident_1.1.toml")).expect("bundled scenario");
    assert_eq!(cfg.network.cols, 10, "incident_1.1 is a 10-segment corridor");
    let methods = [
        Method::Bp,
        Method::Vp,
        Method::Bf,
        Method::Dat,
        Method::BetaDat,
    ];
    let rows = compare_methods(&cfg, &methods, &seeds(20));
    Battery { rows }
});

// -- criterion 1 -------------------------------------------------------------

type Dense = [f64; 32];

fn to_dense(m: &MassFunction) -> Dense {
    let mut d = [0.0; 32];
    for (set, mass) in m.focal() {
        d[set.bits() as usize] = mass;
    }
    d
}

fn oracle_conjunctive(a: &Dense, b: &Dense) -> Dense {
    let mut out = [0.0; 32];
    for i in 0..32 {
        for j in 0..32 {
            out[i & j] += a[i] * b[j];
        }
    }
    out
}

fn random_mass(rng: &mut ChaCha8Rng) -> MassFunction {
    let n = rng.gen_range(1..=6usize);
    let mut weights = std::collections::BTreeMap::new();
    let mut total = 0.0;
    for _ in 0..n {
        let bits = rng.gen_range(1..32u8);
        let w: f64 = rng.gen_range(0.01..1.0);
        *weights.entry(bits).or_insert(0.0) += w;
        total += w;
    }
    MassFunction::from_pairs(
        weights
            .into_iter()
            .map(|(bits, w)| (CauseSet::from_bits(bits).unwrap(), w / total)),
    )
}

#[test]
fn acceptance_01_evidence_oracle_equivalence() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let a = random_mass(&mut rng);
        let b = random_mass(&mut rng);
        let (da, db) = (to_dense(&a), to_dense(&b));
        let want = oracle_conjunctive(&da, &db);

        let got = to_dense(&conjunctive_combine(&a, &b).unwrap());
        for i in 0..32 {
            worst = worst.max((got[i] - want[i]).abs());
        }

        let k = want[0];
        if k < 1.0 - 1e-9 {
            let got = to_dense(&dempster_combine(&a, &b).unwrap());
            for i in 1..32 {
                worst = worst.max((got[i] - want[i] / (1.0 - k)).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(worst <= 1e-12, "max focal-mass error {worst}");
    assert!(elapsed.as_secs_f64() < 10.0, "oracle sweep took {elapsed:?}");
    println!(
        "ACCEPTANCE 01 PASS: 10k mass pairs match the dense oracle (max err {worst:.2e}, {elapsed:.2?})"
    );
}

// -- criterion 2 -------------------------------------------------------------

fn table_masses() -> Vec<MassFunction> {
    let we = CauseSet::singleton(Cause::Weather);
    let re = CauseSet::singleton(Cause::Recurrent);
    let we_re = we.with(Cause::Recurrent);
    let i_we = we.with(Cause::Incident);
    let omega = CauseSet::OMEGA;
    vec![
        MassFunction::from_pairs([(we, 0.4), (we_re, 0.3), (omega, 0.3)]),
        MassFunction::from_pairs([(we, 0.62), (we_re, 0.3), (omega, 0.08)]),
        MassFunction::from_pairs([(we, 0.7), (i_we, 0.2), (omega, 0.1)]),
        MassFunction::from_pairs([(we, 0.6), (i_we, 0.1), (omega, 0.3)]),
        MassFunction::from_pairs([(re, 0.61), (we_re, 0.34), (omega, 0.05)]),
        MassFunction::from_pairs([(we, 0.67), (i_we, 0.3), (omega, 0.03)]),
    ]
}

#[test]
fn acceptance_02_fusion_table_partial_reproduction() {
    // the six printed message columns fold inside a closed subset family
    let folded = combine_all(&table_masses(), CombinationRule::Conjunctive).unwrap();
    let allowed = [
        CauseSet::EMPTY,
        CauseSet::singleton(Cause::Weather),
        CauseSet::singleton(Cause::Recurrent),
        CauseSet::singleton(Cause::Incident).with(Cause::Weather),
        CauseSet::singleton(Cause::Weather).with(Cause::Recurrent),
        CauseSet::OMEGA,
    ];
    for (set, _) in folded.focal() {
        assert!(allowed.contains(&set), "unexpected focal element {set}");
    }
    assert!(folded.mass(CauseSet::EMPTY) > 0.0, "expected real conflict");
    assert!(validate_mass(&folded).is_ok());

    // the printed combined column (normalized; as printed it sums to
    // 0.99990) transformed per the definition, not the printed BetP
    let printed = MassFunction::from_pairs([
        (CauseSet::EMPTY, 0.652),
        (CauseSet::singleton(Cause::Incident), 0.022),
        (CauseSet::singleton(Cause::Weather), 0.1637),
        (CauseSet::singleton(Cause::Recurrent), 0.1068),
        (CauseSet::singleton(Cause::Incident).with(Cause::Weather), 0.0234),
        (CauseSet::singleton(Cause::Weather).with(Cause::Recurrent), 0.032),
        (CauseSet::OMEGA, 0.0000011),
    ])
    .normalized()
    .unwrap();
    let betp = pignistic(&printed).unwrap();
    let we = betp.get(Cause::Weather);
    assert!(
        (we - 0.549).abs() <= 0.005,
        "BetP(We) = {we}, expected 0.549 +/- 0.005"
    );
    assert!(
        (we - 0.85).abs() > 0.2,
        "the printed 0.85 would contradict the transform definition"
    );
    println!(
        "ACCEPTANCE 02 PASS: fold stays in the closed family; BetP(We) = {we:.4} (documented divergence from the printed 0.85)"
    );
}

// -- criterion 3 -------------------------------------------------------------

#[test]
fn acceptance_03_mining_oracle_equivalence() {
    use ccsim_core::evidence::ALL_CAUSES;
    use ccsim_core::rules::Transaction;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC3);
    for case in 0..1_000 {
        let n = rng.gen_range(5..=100);
        let mut d = Dataset::default();
        for _ in 0..n {
            let first = ALL_CAUSES[rng.gen_range(0..5)];
            let second = loop {
                let c = ALL_CAUSES[rng.gen_range(0..5)];
                if c != first {
                    break c;
                }
            };
            d.push(Transaction::new(first, second, None).unwrap());
        }
        let minsup = rng.gen_range(0.05..=1.0f64);
        let frequent = apriori_frequent(&d, minsup).unwrap();
        let mut got: Vec<(CauseSet, usize)> = frequent
            .f1
            .iter()
            .chain(frequent.f2.iter())
            .copied()
            .collect();
        got.sort_by_key(|(s, _)| s.bits());

        // brute force over all 31 non-empty subsets
        let threshold = d.len() as f64 * minsup;
        let mut want = Vec::new();
        for bits in 1..32u8 {
            let set = CauseSet::from_bits(bits).unwrap();
            let count = d
                .transactions()
                .iter()
                .filter(|t| set.is_subset_of(t.items()))
                .count();
            if count as f64 >= threshold {
                want.push((set, count));
            }
        }
        assert_eq!(got, want, "case {case}");

        let mincon = rng.gen_range(0.1..=1.0f64);
        let book = generate_rules(&frequent, &d, mincon);
        for r in book.rules() {
            assert!(r.confidence >= mincon, "rule {r} below mincon {mincon}");
        }
    }
    println!("ACCEPTANCE 03 PASS: Apriori matches brute force on 1000 datasets; no rule below mincon");
}

// -- criterion 4 -------------------------------------------------------------

#[test]
fn acceptance_04_rule_rediscovery() {
    // default classifier and biases
    let base = load_scenario_str(
        "[network]\nsegments = 2\n[demand]\narrival_rate = 0.1\nhorizon = 10.0\n",
        "defaults",
        None,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    let mut d = Dataset::default();
    for k in 0..500 {
        let truth = if k % 2 == 0 { Cause::Incident } else { Cause::Workzone };
        let v = classify_surrogate(Some(truth), &base.classifier, &mut rng);
        d.push(transaction_from_vector(&v, None));
    }
    let frequent = apriori_frequent(&d, 0.25).unwrap();
    let book = generate_rules(&frequent, &d, 0.8);
    let has = |a: Cause, b: Cause| {
        book.rules().iter().any(|r| {
            r.antecedent == CauseSet::singleton(a) && r.consequent == CauseSet::singleton(b)
        })
    };
    assert!(has(Cause::Incident, Cause::SpecialEvent), "I -> SE missing: {book:?}");
    assert!(has(Cause::Workzone, Cause::SpecialEvent), "Wo -> SE missing");

    // a 30 % misprediction pattern surfaces the correction rule
    let mut spec = base.classifier.clone();
    spec.confusion[Cause::Incident.index()] = [0.7, 0.0, 0.0, 0.0, 0.3];
    let mut d = Dataset::default();
    for _ in 0..500 {
        let v = classify_surrogate(Some(Cause::Incident), &spec, &mut rng);
        d.push(transaction_from_vector(&v, Some(Cause::Incident)));
    }
    let book = mine_supervised(&d, &MiningConfig::new(0.25, 0.8).unwrap()).unwrap();
    let correction = book
        .rules()
        .iter()
        .find(|r| r.is_correction() && r.correction_guess() == Some(Cause::Recurrent))
        .expect("{Re,I} -> {I} correction missing");
    assert_eq!(correction.correction_label(), Some(Cause::Incident));
    println!(
        "ACCEPTANCE 04 PASS: rules I->SE and Wo->SE rediscovered; correction {} mined from 30% mispredictions",
        correction
    );
}

// -- criteria 5 and 6 --------------------------------------------------------

#[test]
fn acceptance_05_method_ordering() {
    let b = &*BATTERY;
    let (bp, vp, bf, dat) = (
        b.mean_final(Method::Bp),
        b.mean_final(Method::Vp),
        b.mean_final(Method::Bf),
        b.mean_final(Method::Dat),
    );
    assert!(dat >= bf && bf >= vp && vp > bp, "ordering broken: DAT {dat:.3} BF {bf:.3} VP {vp:.3} BP {bp:.3}");

    let t_dat_bf = b.gap_t(Method::Dat, Method::Bf);
    let t_bf_vp = b.gap_t(Method::Bf, Method::Vp);
    let t_vp_bp = b.gap_t(Method::Vp, Method::Bp);
    assert!(t_dat_bf >= 1.0, "DAT-BF gap not significant: t = {t_dat_bf:.2}");
    assert!(t_bf_vp >= 1.0, "BF-VP gap not significant: t = {t_bf_vp:.2}");
    assert!(t_vp_bp >= 1.0, "VP-BP gap not significant: t = {t_vp_bp:.2}");

    let bp_det = b.mean_detection(Method::Bp);
    for m in [Method::Vp, Method::Bf, Method::Dat] {
        let det = b.mean_detection(m);
        assert!(det < bp_det, "{m} detection {det:.0}s not below BP {bp_det:.0}s");
    }
    println!(
        "ACCEPTANCE 05 PASS: final accuracy DAT {dat:.3} >= BF {bf:.3} >= VP {vp:.3} > BP {bp:.3} (t = {t_dat_bf:.1}/{t_bf_vp:.1}/{t_vp_bp:.1}); detection VP/BF/DAT < BP"
    );
}

#[test]
fn acceptance_06_beta_dat_tradeoff() {
    let b = &*BATTERY;
    let cfg = load_scenario(scenario_dir().join("incident_1.1.toml")).unwrap();
    let beta = cfg.method.beta;
    let sample_period = ccsim_core::metrics::SAMPLE_INTERVAL;

    let fa_beta = b.mean_false_alarm(Method::BetaDat);
    let fa_dat = b.mean_false_alarm(Method::Dat);
    assert!(
        fa_beta < fa_dat,
        "beta-DAT false alarms {fa_beta:.2}% not below DAT {fa_dat:.2}%"
    );

    let det_gap = b.mean_detection(Method::BetaDat) - b.mean_detection(Method::Dat);
    assert!(
        (det_gap - beta).abs() <= sample_period,
        "detection delay {det_gap:.0}s not within one sample period of beta = {beta}s"
    );

    let acc_gap = (b.mean_final(Method::BetaDat) - b.mean_final(Method::Dat)).abs();
    assert!(
        acc_gap <= 0.02,
        "beta-DAT final accuracy differs from DAT by {acc_gap:.3}"
    );
    println!(
        "ACCEPTANCE 06 PASS: beta-DAT false alarms {fa_beta:.2}% < DAT {fa_dat:.2}%; detection +{det_gap:.0}s ~ beta {beta}s; accuracy gap {acc_gap:.3} <= 0.02"
    );
}

// -- criterion 7 -------------------------------------------------------------

#[test]
fn acceptance_07_penetration_monotonicity() {
    let cfg = load_scenario(scenario_dir().join("incident_1.1.toml")).unwrap();
    let rates = [0.1, 0.5, 0.75, 1.0];
    let rows = penetration_sweep(&cfg, &rates, &seeds(20), Method::Dat).unwrap();
    let mut detections = Vec::new();
    let mut accuracies = Vec::new();
    for &rate in &rates {
        let det = mean(
            rows.iter()
                .filter(|r| r.rate == rate)
                .filter_map(|r| r.metrics.detection_time),
        )
        .expect("detections at every rate");
        let acc = mean(
            rows.iter()
                .filter(|r| r.rate == rate)
                .map(|r| r.metrics.final_accuracy),
        )
        .unwrap();
        detections.push(det);
        accuracies.push(acc);
    }
    for pair in detections.windows(2) {
        assert!(
            pair[1] <= pair[0],
            "mean detection time increased with penetration: {detections:?}"
        );
    }
    for pair in accuracies.windows(2) {
        assert!(
            pair[1] >= pair[0],
            "mean final accuracy decreased with penetration: {accuracies:?}"
        );
    }
    assert!(
        detections[3] < detections[0],
        "full penetration must detect strictly earlier than 10%"
    );
    println!(
        "ACCEPTANCE 07 PASS: detection {:.0} >= {:.0} >= {:.0} >= {:.0} s and accuracy {:.3} <= {:.3} <= {:.3} <= {:.3} across rates 0.1/0.5/0.75/1.0",
        detections[0], detections[1], detections[2], detections[3],
        accuracies[0], accuracies[1], accuracies[2], accuracies[3]
    );
}

// -- criterion 8 -------------------------------------------------------------

#[test]
fn acceptance_08_weather_gap_effect() {
    let weather = load_scenario(scenario_dir().join("weather_3.1.toml")).unwrap();
    let baseline = weather.without_events();
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let w = gap_percentile(&run(&weather, seed), 85.0).unwrap();
        let b = gap_percentile(&run(&baseline, seed), 85.0).unwrap();
        assert!(
            w > b,
            "seed {seed}: weather p85 {w:.2} m not above baseline {b:.2} m"
        );
        lines.push(format!("{w:.1}>{b:.1}"));
    }
    println!(
        "ACCEPTANCE 08 PASS: weather 85th-percentile gap exceeds the no-event baseline for all 10 seeds ({})",
        lines.join(", ")
    );
}

// -- criterion 9 -------------------------------------------------------------

#[test]
fn acceptance_09_determinism() {
    let scenario = scenario_dir().join("incident_1.1.toml");
    let bin = env!("CARGO_BIN_EXE_ccsim");
    let dirs = [
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    ];
    for dir in &dirs {
        let status = Command::new(bin)
            .args([
                "run",
                "--scenario",
                scenario.to_str().unwrap(),
                "--method",
                "bf",
                "--seed",
                "3",
                "--out",
                dir.path().to_str().unwrap(),
            ])
            .status()
            .expect("run the ccsim binary");
        assert!(status.success());
    }
    for file in [
        "incident_1.1_BF_3.log.csv",
        "incident_1.1_BF_3.metrics.csv",
        "incident_1.1_BF_3.accuracy.csv",
    ] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical invocations");
    }

    // sweep output is independent of the parallelism degree
    let cfg = load_scenario(&scenario).unwrap();
    let sweep_csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let rows = penetration_sweep(&cfg, &[0.5, 1.0], &[0, 1], Method::Vp).unwrap();
            let mut buf = Vec::new();
            write_sweep_csv(&mut buf, &rows).unwrap();
            buf
        })
    };
    assert_eq!(sweep_csv(1), sweep_csv(4), "sweep depends on parallelism");
    println!("ACCEPTANCE 09 PASS: byte-identical reruns; sweep independent of the thread count");
}

// -- criterion 10 ------------------------------------------------------------

#[test]
fn acceptance_10_vote_mining_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC10);
    for case in 0..1_000 {
        let n = rng.gen_range(1..=40);
        let reports: Vec<Report> = (0..n)
            .map(|i| {
                let mut p = [0.0; 5];
                let mut total = 0.0;
                for v in p.iter_mut() {
                    *v = rng.gen_range(0.01..1.0);
                    total += *v;
                }
                for v in p.iter_mut() {
                    *v /= total;
                }
                Report::new(
                    VehicleId(i),
                    SegmentId(0),
                    i as f64,
                    CauseVector::new(p).unwrap(),
                    0.1,
                )
                .unwrap()
            })
            .collect();
        let decision = vp_decide(&reports).unwrap();
        let dataset = Dataset::new(
            reports
                .iter()
                .map(|r| transaction_from_vector(&r.vector, None))
                .collect(),
        );
        assert_eq!(
            max_one_itemset(&dataset).unwrap(),
            CauseSet::singleton(decision.cause),
            "case {case}: voting and mining disagree"
        );
    }
    println!("ACCEPTANCE 10 PASS: vp_decide equals max_one_itemset on 1000 random report sets");
}

// a derived sanity floor from the metrics module contract: full
// penetration with noise disabled reaches 90 % final accuracy
#[test]
fn sanity_floor_full_penetration_no_noise() {
    let cfg = load_scenario(scenario_dir().join("incident_1.1.toml")).unwrap();
    let mut cfg = cfg;
    cfg.method.spontaneous_rate = 0.0;
    cfg.method.method = Method::Dat;
    let truth = cfg.truth();
    let log = run(&cfg, 0);
    let metrics = ccsim_core::metrics::compute_run_metrics(&log, &truth, 0);
    assert!(
        metrics.final_accuracy >= 0.9,
        "pipeline sanity floor violated: {}",
        metrics.final_accuracy
    );
}

// mass construction consistency for the six fusion-table messages: the
// battery relies on reports carrying the printed masses exactly
#[test]
fn table_masses_are_valid_and_derivable() {
    for (i, m) in table_masses().iter().enumerate() {
        assert!(validate_mass(m).is_ok(), "table mass {i} invalid");
    }
    // a vector matching column m2 derives the printed mass under the
    // construction used by the reports
    let c = CauseVector::new([0.08 / 3.0, 0.08 / 3.0, 0.62, 0.08 / 3.0, 0.3]).unwrap();
    let m = mass_from_cause_vector(&c, 0.08).unwrap();
    assert!((m.mass(CauseSet::singleton(Cause::Weather)) - 0.62).abs() < 1e-9);
}
