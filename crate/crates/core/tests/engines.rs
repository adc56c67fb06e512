use std::path::PathBuf;

use ceforge::approx::{gen_scenario, GenParams, Scenario};
use ceforge::bitcore::Dyadic;
use ceforge::dual::{DualAttention, DualEngine};
use ceforge::engine::Engine;
use ceforge::single::{self, Attention, SingleEngine};
use ceforge::trace::{Action, EngineKind, NKind, SideTag};

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(rel)
}

fn scenario(rel: &str) -> Scenario {
    Scenario::from_json(&std::fs::read_to_string(data(rel)).unwrap()).unwrap()
}

fn json_scenario(events: &str, a: &str, d: &str, halting: &str) -> Scenario {
    Scenario::from_json(&format!(
        r#"{{"stages": 10, "universal_events": [{events}], "set_a": [{a}], "set_d": [{d}], "halting": [{halting}]}}"#
    ))
    .unwrap()
}

#[test]
fn stage_zero_places_m0_on_one() {
    for kind in [EngineKind::Single, EngineKind::Dual] {
        let e = Engine::new(kind, &Scenario::empty(1));
        assert_eq!(e.marker_position(0), Some(1));
        assert_eq!(e.first_record().to, Some(1));
    }
}

#[test]
fn empty_scenario_is_quiet() {
    let trace = single::run(&Scenario::empty(10), 10).unwrap();
    assert_eq!(trace.records.len(), 11);
    assert!(trace.records[1..].iter().all(|r| r.action == Action::Noop));
    let mut e = SingleEngine::new(&Scenario::empty(10));
    for _ in 0..10 {
        e.step().unwrap();
    }
    assert!(e.engine().b_set().is_empty());
    assert_eq!(e.engine().marker_position(1), None);
}

#[test]
fn t_and_q_for_fresh_marker() {
    // K(0) = 3 from stage 0; N_0 is empty so t_0 = 0 and q_0 = 2^{-3-3}.
    let sc = json_scenario(r#"[0, "000", ""]"#, "", "", "");
    let mut e = SingleEngine::new(&sc);
    e.prepare().unwrap();
    assert_eq!(e.t_of(0), Some(0));
    assert_eq!(e.q_of(0), Some(Dyadic::pow2_neg(6)));

    let mut e = SingleEngine::new(&Scenario::empty(3));
    e.prepare().unwrap();
    assert_eq!(e.t_of(0), None);
    assert_eq!(e.q_of(0), None);
}

#[test]
fn t_moves_past_a_repaired_length() {
    let sc = scenario("scripted/single6.json");
    let mut e = SingleEngine::new(&sc);
    for _ in 0..2 {
        e.step().unwrap();
    }
    e.prepare().unwrap();
    assert_eq!(e.t_of(0), Some(0));
    assert_eq!(e.requires_attention(0), Attention::ClauseB);
    let rec = e.commit().unwrap();
    assert_eq!(rec.sides[0].n_enum[0].target.len(), 0);
    e.prepare().unwrap();
    assert_eq!(e.t_of(0), Some(1));
}

#[test]
fn halting_entry_codes_and_then_gates() {
    let sc = scenario("scripted/single6.json");
    let mut e = SingleEngine::new(&sc);
    for _ in 0..4 {
        e.step().unwrap();
    }
    e.prepare().unwrap();
    assert_eq!(e.requires_attention(0), Attention::ClauseA);
    let rec = e.commit().unwrap();
    assert_eq!((rec.from, rec.to, rec.b_enum), (Some(5), Some(5), Some(5)));
    e.prepare().unwrap();
    assert_eq!(e.requires_attention(0), Attention::No);
    assert!(e.engine().b_set().contains(5, 5));
}

#[test]
fn refresh_when_t_is_undefined() {
    // Nothing is finite at stage 1, so t_0 is undefined and the drop of K(2)
    // to 5 at stage 2 is refreshed with length 5 + c_0 = 8.
    let sc = json_scenario(r#"[2, "00100", "00"]"#, "", "", "");
    let mut e = SingleEngine::new(&sc);
    e.step().unwrap();
    e.prepare().unwrap();
    assert_eq!(e.t_of(0), None);
    let rec = e.commit().unwrap();
    let n = &rec.sides[0].n_enum;
    assert_eq!(n.len(), 1);
    assert_eq!(
        (n[0].target.to_string().as_str(), n[0].length, n[0].kind),
        ("00", 8, NKind::Refresh)
    );
}

#[test]
fn refresh_below_defined_t_in_generated_run() {
    let sc = gen_scenario(5, &GenParams::for_stages(4000));
    let trace = single::run(&sc, 4000).unwrap();
    let mut seen = 0;
    for rec in &trace.records {
        let side = &rec.sides[0];
        for e in side.n_enum.iter().filter(|e| e.kind == NKind::Refresh) {
            let t = side.t.iter().find(|(i, _)| *i == e.marker).unwrap().1;
            if let Some(t) = t {
                assert!((e.target.len() as u64) < t);
                seen += 1;
            }
        }
    }
    assert!(seen > 0, "no refresh below a defined t");
}

#[test]
fn dual_sides_are_independent() {
    let sc = scenario("scripted/dual8.json");
    let mut e = DualEngine::new(&sc);
    e.prepare().unwrap();
    assert_eq!(e.t_of(0, SideTag::A), Some(0));
    assert_eq!(e.t_of(0, SideTag::D), Some(0));
    e.commit().unwrap();
    for _ in 0..2 {
        e.step().unwrap();
    }
    // stage 3 was a (b)-only move: t^a moves on, t^d stays
    e.prepare().unwrap();
    assert_eq!(e.t_of(0, SideTag::A), Some(1));
    assert_eq!(e.t_of(0, SideTag::D), Some(0));
    assert_eq!(e.deficit(0, SideTag::A), Dyadic::zero());
    assert_eq!(e.deficit(0, SideTag::D), Dyadic::pow2_neg(10));
}

#[test]
fn accumulated_d_weight_fires_clause_c() {
    let sc = scenario("scripted/dual8.json");
    let mut e = DualEngine::new(&sc);
    for _ in 0..6 {
        e.step().unwrap();
    }
    e.prepare().unwrap();
    assert_eq!(e.q_of(0, SideTag::D), Some(Dyadic::pow2_neg(8)));
    assert_eq!(e.requires_attention(0), DualAttention::CClause);
    e.commit().unwrap();
    assert_eq!(e.deficit(0, SideTag::D), Dyadic::zero());
}

#[test]
fn disabled_side_does_not_disable_the_other() {
    // Only K(0) is finite. A (b)-only move at stage 3 covers it in N^a_0, so
    // t^a becomes undefined while t^d stays at 0.
    let sc = json_scenario(r#"[0, "0000", ""], [0, "00100", "01"]"#, "[1, 0]", "", "");
    let mut e = DualEngine::new(&sc);
    for _ in 0..2 {
        e.step().unwrap();
    }
    e.prepare().unwrap();
    assert_eq!(e.requires_attention(0), DualAttention::BClause);
    e.commit().unwrap();
    e.prepare().unwrap();
    assert_eq!(e.t_of(0, SideTag::A), None);
    assert_eq!(e.q_of(0, SideTag::A), None);
    assert_eq!(e.t_of(0, SideTag::D), Some(0));
    assert_eq!(e.q_of(0, SideTag::D), Some(Dyadic::pow2_neg(8)));
}

#[test]
fn d_only_descriptions_leave_m_a_empty() {
    let sc = json_scenario(
        r#"[0, "0001", "1"], [1, "0010", "10"], [3, "0011", "101"]"#,
        "",
        "[0, 0], [2, 2]",
        "",
    );
    let trace = Engine::run(EngineKind::Dual, &sc, 10).unwrap();
    assert!(trace.records.iter().all(|r| r.sides[0].m_enum.is_empty()));
    assert!(trace.records.iter().any(|r| !r.sides[1].m_enum.is_empty()));
}

#[test]
fn runs_are_deterministic() {
    let sc = gen_scenario(9, &GenParams::for_stages(1500));
    for kind in [EngineKind::Single, EngineKind::Dual] {
        let a = Engine::run(kind, &sc, 1500).unwrap().to_jsonl();
        let b = Engine::run(kind, &sc, 1500).unwrap().to_jsonl();
        assert_eq!(a, b);
    }
}

#[test]
fn retreating_t_forces_a_move_on_an_empty_sum() {
    // A changes below t^a_0 at stage 1938, so t^a_0 drops to a length whose
    // q^a_0 is below the accrued p^a_0. Clause (b) then holds with no M_a
    // weight above m_0 and the deficit is cleared.
    let sc = gen_scenario(26, &GenParams::for_stages(10_000));
    let mut e = DualEngine::new(&sc);
    for _ in 0..1937 {
        e.step().unwrap();
    }
    e.prepare().unwrap();
    let p = e.deficit(0, SideTag::A);
    let q = e.q_of(0, SideTag::A).unwrap();
    assert!(p > q);
    assert_eq!(e.requires_attention(0), DualAttention::BClause);
    e.commit().unwrap();
    assert_eq!(e.deficit(0, SideTag::A), Dyadic::zero());
}
