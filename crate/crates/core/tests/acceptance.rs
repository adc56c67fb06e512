//! Acceptance run: one PASS/FAIL line per criterion, exact arithmetic
//! throughout. Exits nonzero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ceforge::approx::{decode_real, encode_real, gen_scenario, CERealApprox, GenParams, Scenario};
use ceforge::audit::{audit, AuditReport};
use ceforge::bitcore::{BitString, Dyadic};
use ceforge::engine::Engine;
use ceforge::machines::PrefixFreeMachine;
use ceforge::trace::{EngineKind, Trace};

const STAGES: u64 = 10_000;
const RUNS: u64 = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(rel)
}

struct Run {
    seed: u64,
    elapsed: Duration,
    report: AuditReport,
}

fn batch(kind: EngineKind) -> Vec<Run> {
    let next = AtomicUsize::new(0);
    let out = Mutex::new(Vec::new());
    let workers = std::thread::available_parallelism()
        .map_or(2, |n| n.get())
        .min(8);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let seed = next.fetch_add(1, Ordering::Relaxed) as u64;
                if seed >= RUNS {
                    break;
                }
                let start = Instant::now();
                let sc = gen_scenario(seed, &GenParams::for_stages(STAGES));
                let trace = Engine::run(kind, &sc, STAGES)
                    .unwrap_or_else(|e| panic!("{kind} seed {seed}: {e}"));
                let report = audit(&sc, &trace);
                out.lock().unwrap().push(Run {
                    seed,
                    elapsed: start.elapsed(),
                    report,
                });
            });
        }
    });
    let mut runs = out.into_inner().unwrap();
    runs.sort_by_key(|r| r.seed);
    runs
}

/// Passes when `names` pass in every run; reports the first failure.
fn all_pass(runs: &[Run], names: &[&str]) -> (bool, u64, Option<String>) {
    let mut evaluated = 0;
    for r in runs {
        for &n in names {
            let c = r
                .report
                .check(n)
                .unwrap_or_else(|| panic!("check {n} missing"));
            evaluated += c.evaluated;
            if !c.pass {
                let w = c.witness.clone().unwrap_or_default();
                return (false, evaluated, Some(format!("seed {}: {n}: {w}", r.seed)));
            }
        }
    }
    (true, evaluated, None)
}

/// Least slack `bound - value` over the runs for a weight check.
fn tightest(runs: &[Run], name: &str) -> String {
    runs.iter()
        .filter_map(|r| {
            let c = r.report.check(name)?;
            Some((c.value.clone()?, c.bound.clone()?))
        })
        .min_by(|(v1, b1), (v2, b2)| (b1.clone() + v2.clone()).cmp(&(b2.clone() + v1.clone())))
        .map_or("none evaluated".into(), |(v, b)| {
            format!("tightest {v} vs {b}")
        })
}

fn verdict(ok: bool, evaluated: u64, failure: Option<String>, extra: String) -> Outcome {
    match failure {
        Some(f) => outcome(false, f),
        None => outcome(ok, format!("{evaluated} evaluations; {extra}")),
    }
}

fn is_prefix(a: &BitString, b: &BitString) -> bool {
    a.len() <= b.len() && (0..a.len()).all(|i| a.get(i) == b.get(i))
}

fn kraft_chaitin() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b63);
    let mut requests = 0usize;
    for stream in 0..1000 {
        let mut m = PrefixFreeMachine::new(0);
        let mut weight = Dyadic::zero();
        let wanted = rng.gen_range(1..80);
        for i in 0..wanted {
            let len: u32 = rng.gen_range(1..=24);
            let w = Dyadic::pow2_neg(len);
            if weight.clone() + w.clone() >= Dyadic::one() {
                continue;
            }
            weight += &w;
            let target = BitString::from_ones(rng.gen_range(0..6), []);
            match m.enumerate(target, len, i) {
                Ok(e) if e.codeword.len() == len as usize => {}
                Ok(e) => {
                    return outcome(
                        false,
                        format!("stream {stream}: asked {len}, got {}", e.codeword),
                    )
                }
                Err(e) => return outcome(false, format!("stream {stream}: {e}")),
            }
            requests += 1;
        }
        let cws: Vec<&BitString> = m.entries().iter().map(|e| &e.codeword).collect();
        for (i, a) in cws.iter().enumerate() {
            for b in &cws[i + 1..] {
                if is_prefix(a, b) || is_prefix(b, a) {
                    return outcome(
                        false,
                        format!("stream {stream}: {a} and {b} are comparable"),
                    );
                }
            }
        }
    }
    outcome(
        true,
        format!("1000 streams, {requests} requests, exact lengths, prefix-free"),
    )
}

fn random_real(rng: &mut ChaCha8Rng) -> CERealApprox {
    let width = rng.gen_range(1..=7);
    let stages = rng.gen_range(1..=60);
    let mut cur = BitString::zeros(width);
    let mut changes = vec![0u64; width];
    let mut out = Vec::with_capacity(stages);
    for _ in 0..stages {
        if rng.gen_bool(0.6) {
            // raise bit k and clear every less significant bit that is set
            let legal: Vec<usize> = (0..width)
                .filter(|&k| {
                    !cur.get(k)
                        && changes[k] < 1 << k
                        && (k + 1..width).all(|j| !cur.get(j) || changes[j] < 1 << j)
                })
                .collect();
            if !legal.is_empty() {
                let k = legal[rng.gen_range(0..legal.len())];
                cur.set(k, true);
                changes[k] += 1;
                for (j, count) in changes.iter_mut().enumerate().skip(k + 1) {
                    if cur.get(j) {
                        cur.set(j, false);
                        *count += 1;
                    }
                }
            }
        }
        out.push(cur.clone());
    }
    CERealApprox::new(out).expect("generator keeps the carry rule and the 2^k bound")
}

fn lemma3_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4c33);
    let start = Instant::now();
    let mut checked = 0usize;
    for i in 0..200 {
        let real = random_real(&mut rng);
        let set = encode_real(&real);
        for (s, bits) in real.stages().iter().enumerate() {
            let got = decode_real(&set, s as u64, real.width());
            if &got != bits {
                return outcome(
                    false,
                    format!("real {i} stage {s}: decoded {got}, expected {bits}"),
                );
            }
            checked += 1;
        }
        for k in 0..real.width() {
            let lo = (1u64 << k) - 1;
            let hi = (1u64 << (k + 1)) - 1;
            let n = set.schedule().filter(|&(e, _)| e >= lo && e < hi).count();
            if n > 1 << k {
                return outcome(false, format!("real {i}: block {k} holds {n} elements"));
            }
        }
    }
    let t = start.elapsed();
    outcome(
        t < Duration::from_secs(5),
        format!("200 reals, {checked} stage decodes, {t:.2?}"),
    )
}

fn scripted() -> Outcome {
    for (file, kind) in [("single6", EngineKind::Single), ("dual8", EngineKind::Dual)] {
        let sc = Scenario::from_json(
            &std::fs::read_to_string(data(&format!("scripted/{file}.json"))).unwrap(),
        )
        .unwrap();
        let reference =
            std::fs::read_to_string(data(&format!("scripted/{file}.trace.jsonl"))).unwrap();
        let got = Engine::run(kind, &sc, sc.stages).unwrap().to_jsonl();
        if got != reference {
            let line = got
                .lines()
                .zip(reference.lines())
                .position(|(a, b)| a != b)
                .map_or("length".into(), |l| format!("line {}", l + 1));
            return outcome(false, format!("{file}: differs at {line}"));
        }
    }
    outcome(
        true,
        "single 6-stage and dual 8-stage traces byte-identical",
    )
}

fn determinism() -> Outcome {
    for kind in [EngineKind::Single, EngineKind::Dual] {
        let params = GenParams::for_stages(3000);
        let a = gen_scenario(77, &params);
        let b = gen_scenario(77, &params);
        if a.to_json() != b.to_json() {
            return outcome(false, "scenario differs");
        }
        let ta = Engine::run(kind, &a, 3000).unwrap();
        let tb = Engine::run(kind, &b, 3000).unwrap();
        if ta.to_jsonl() != tb.to_jsonl() {
            return outcome(false, format!("{kind} trace differs"));
        }
        if audit(&a, &ta).to_json() != audit(&b, &tb).to_json() {
            return outcome(false, format!("{kind} report differs"));
        }
    }
    outcome(
        true,
        "scenario, trace and report byte-identical for both engines",
    )
}

const MARKER_CHECKS: &[&str] = &[
    "marker_monotonicity",
    "marker_order",
    "abandoned_in_b",
    "attention_gate",
    "clause_justified",
    "injury_set",
    "place_fresh",
    "t_below_marker",
    "t_monotone",
    "n_requests_justified",
    "n_versions_consistent",
    "n_weights_match",
    "m_entries_justified",
    "m_weight_match",
    "stage_sequence",
    "trace_header",
];

fn marker_discipline(single: &[Run], dual: &[Run]) -> Outcome {
    let (ok_s, n_s, f_s) = all_pass(single, MARKER_CHECKS);
    let (ok_d, n_d, f_d) = all_pass(dual, MARKER_CHECKS);
    if let Some(f) = f_s.or(f_d) {
        return outcome(false, f);
    }
    let sc = Scenario::from_json(&std::fs::read_to_string(data("scripted/single6.json")).unwrap())
        .unwrap();
    let neg = Trace::from_jsonl(
        &std::fs::read_to_string(data("negative/marker_decrease.trace.jsonl")).unwrap(),
    )
    .unwrap();
    let report = audit(&sc, &neg);
    let caught = report.check("marker_monotonicity").is_some_and(|c| !c.pass);
    let witness = report
        .check("marker_monotonicity")
        .and_then(|c| c.witness.clone())
        .unwrap_or_default();
    outcome(
        ok_s && ok_d && caught,
        format!(
            "{} evaluations over 100 runs; negative control: {}",
            n_s + n_d,
            if caught { witness } else { "NOT caught".into() }
        ),
    )
}

fn coding(runs: &[Run]) -> Outcome {
    let (ok, _, f) = all_pass(runs, &["coding"]);
    let stable: usize = runs
        .iter()
        .map(|r| r.report.markers.iter().filter(|m| m.stable).count())
        .sum();
    let yes: usize = runs
        .iter()
        .map(|r| {
            r.report
                .markers
                .iter()
                .filter(|m| m.stable && m.halting)
                .count()
        })
        .sum();
    verdict(
        ok && stable > 0,
        stable as u64,
        f,
        format!("{stable} stable markers ({yes} in the halting set), all agree"),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let single = batch(EngineKind::Single);
    let dual = batch(EngineKind::Dual);
    let max_single = single.iter().map(|r| r.elapsed).max().unwrap_or_default();
    let max_dual = dual.iter().map(|r| r.elapsed).max().unwrap_or_default();
    let budget = Duration::from_secs(5);

    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("Kraft-Chaitin soundness", kraft_chaitin()));

    let (ok, n, f) = all_pass(&single, &["n_machine_bound", "n_refresh_bound"]);
    results.push((
        "N-machine bound (single)",
        verdict(
            ok && max_single < budget,
            n,
            f,
            format!(
                "{RUNS} runs of {STAGES} stages, {}; slowest run+audit {max_single:.2?}",
                tightest(&single, "n_machine_bound")
            ),
        ),
    ));

    let (ok, n, f) = all_pass(
        &single,
        &[
            "decanter_s0",
            "decanter_sk",
            "m_weight_vs_containers",
            "containers_nested",
            "reuse_has_cause",
            "reuse_bound",
        ],
    );
    results.push((
        "Decanter bounds (single)",
        verdict(
            ok,
            n,
            f,
            format!(
                "S_0 {}; S_k {}; reuse {}",
                tightest(&single, "decanter_s0"),
                tightest(&single, "decanter_sk"),
                tightest(&single, "reuse_bound")
            ),
        ),
    ));

    results.push(("Marker discipline", marker_discipline(&single, &dual)));
    results.push(("Finite coding", coding(&single)));

    let (ok, n, f) = all_pass(&single, &["description_coverage"]);
    results.push((
        "Description coverage (single)",
        verdict(ok, n, f, "K_M(B|n) <= K(A|n) on the stable region".into()),
    ));

    let dual_checks = [
        "n_machine_bound",
        "n_refresh_bound",
        "decanter_s0",
        "decanter_sk",
        "m_weight_vs_containers",
        "containers_nested",
        "reuse_has_cause",
        "reuse_bound",
        "description_coverage",
        "deficits_match",
        "deficit_bound",
        "deficit_cap",
        "coding",
    ];
    let (ok, n, f) = all_pass(&dual, &dual_checks);
    results.push((
        "Dual-engine analogues",
        verdict(
            ok && max_dual < budget,
            n,
            f,
            format!(
                "{RUNS} runs, N {}, S_0 {}; slowest run+audit {max_dual:.2?}",
                tightest(&dual, "n_machine_bound"),
                tightest(&dual, "decanter_s0")
            ),
        ),
    ));

    results.push(("Lemma 3 round trip", lemma3_round_trip()));
    results.push(("Scripted-oracle replays", scripted()));
    results.push(("Determinism", determinism()));

    let mut all = true;
    for (i, (name, o)) in results.iter().enumerate() {
        all &= o.pass;
        println!(
            "criterion {:>2} [{}] {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance finished in {:.1?}", started.elapsed());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
