//! One check per acceptance criterion. Each returns a one-line summary on
//! success and the first failure otherwise.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use cevo_core::adapter::convert;
use cevo_core::analyzer::{aggregate, parse_log, PAPER_FIXTURE};
use cevo_core::compat::type_compatible;
use cevo_core::manager::Registry;
use cevo_core::model::*;
use cevo_core::runtime::{trace_to_ndjson, Event, SchedulerPolicy};
use cevo_core::scenario::{parse_scenario, run_scenario, ScenarioReport};
use cevo_core::syntax::{parse_module, parse_modules, parse_value, render_module, render_value};
use cevo_core::wire::{decode_from_str, encode_to_string};
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::evolve::{run_history, Stats};
use super::fixture;
use super::gen::*;
use super::oracle::*;

pub type Outcome = Result<String, String>;

pub fn run_fixture_scenario(name: &str, seed: Option<u64>) -> (ScenarioReport, Registry) {
    let cmds = parse_scenario(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    let mut registry = Registry::new();
    let load = |f: &str| std::fs::read_to_string(super::fixtures_dir().join(f)).map_err(|e| e.to_string());
    let report = run_scenario(&cmds, &mut registry, load, seed, None).unwrap_or_else(|e| panic!("{name}: {e}"));
    (report, registry)
}

fn modules(files: &[&str]) -> Vec<Module> {
    files.iter().flat_map(|f| parse_modules(&fixture(&format!("{f}.cem"))).unwrap()).collect()
}

/// Running-example verdicts.
pub fn ac1() -> Outcome {
    enum V {
        Accept,
        Reject(Option<&'static str>),
    }
    use V::*;
    const V1: &[&str] = &["catalog_v1", "marketing_v1", "backoffice_v1"];
    const V2: &[&str] = &["catalog_v2", "marketing_v2"];
    type Steps = Vec<(&'static [&'static str], V)>;
    let cases: Vec<(&str, Steps)> = vec![
        ("v1 trio", vec![(V1, Accept)]),
        ("v2 pair together", vec![(V1, Accept), (V2, Accept)]),
        ("CatalogV2 then MarketingV2", vec![(V1, Accept), (&["catalog_v2"], Accept), (&["marketing_v2"], Accept)]),
        ("MarketingV2 then CatalogV2", vec![(V1, Accept), (&["marketing_v2"], Accept), (&["catalog_v2"], Accept)]),
        ("CatalogV3 under MarketingV2", vec![(V1, Accept), (V2, Accept), (&["catalog_v3"], Reject(Some("k5")))]),
        ("v3 pair together", vec![(V1, Accept), (V2, Accept), (&["catalog_v3", "marketing_v3"], Accept)]),
        (
            "MarketingV3 then CatalogV3",
            vec![(V1, Accept), (V2, Accept), (&["marketing_v3"], Accept), (&["catalog_v3"], Accept)],
        ),
        ("CatalogV3 first", vec![(V1, Accept), (&["catalog_v3"], Reject(Some("k5")))]),
    ];
    let start = Instant::now();
    let mut verdicts = 0;
    for (name, steps) in &cases {
        let mut r = Registry::new();
        for (i, (files, want)) in steps.iter().enumerate() {
            let got = r.preflight_deploy(&modules(files));
            verdicts += 1;
            match (want, &got) {
                (Accept, Ok(_)) | (Reject(None), Err(_)) => {}
                (Reject(Some(k)), Err(rej)) if rej.cites(&Key::new(*k)) => {}
                (Reject(Some(k)), Err(rej)) => {
                    return Err(format!(
                        "{name} step {}: rejection does not cite {k}: {}",
                        i + 1,
                        rej.lines().join("; ")
                    ))
                }
                (Accept, Err(rej)) => {
                    return Err(format!("{name} step {}: rejected: {}", i + 1, rej.lines().join("; ")))
                }
                (Reject(_), Ok(_)) => return Err(format!("{name} step {}: accepted", i + 1)),
            }
        }
    }
    let (blocked, _) = run_fixture_scenario("catalog_v3_blocked.ces", None);
    if !blocked.passed() {
        return Err(format!("catalog_v3_blocked.ces: {}", blocked.failures.join("; ")));
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("{} cases, {verdicts} verdicts in {} ms", cases.len(), elapsed.as_millis()))
}

fn count(trace: &[cevo_core::runtime::TraceEntry], kind: &str) -> usize {
    trace.iter().filter(|t| t.event.kind() == kind).count()
}

/// Handshake on the first call after version 2 goes live.
pub fn ac2() -> Outcome {
    let mut r = Registry::new();
    for batch in [&["catalog_v1", "marketing_v1", "backoffice_v1"][..], &["catalog_v2", "marketing_v2"]] {
        r.preflight_deploy(&modules(batch)).map_err(|e| e.lines().join("; "))?;
    }
    let mut counts = Vec::new();
    for expect_rejected in [2, 0] {
        let out = r
            .call_endpoint("Backoffice", "Improve", &Value::Int(1), SchedulerPolicy::RoundRobin, 10_000)
            .map_err(|e| e.to_string())?;
        if out.value != Some(Value::str("OK")) {
            return Err(format!("Improve(1) = {:?}", out.value));
        }
        let (rej, gen) = (count(&out.report.trace, "Rejected"), count(&out.report.trace, "ProxyGenerated"));
        let expect_generated = expect_rejected;
        if rej != expect_rejected || gen != expect_generated {
            return Err(format!("{rej} Rejected and {gen} ProxyGenerated, expected {expect_rejected} of each"));
        }
        counts.push(format!("{rej} rejected/{gen} generated"));
    }
    let (report, _) = run_fixture_scenario("fig4.ces", None);
    if !report.passed() {
        return Err(format!("fig4.ces: {}", report.failures.join("; ")));
    }
    Ok(format!("\"OK\" twice, {} then {}", counts[0], counts[1]))
}

pub fn save_payload() -> Option<String> {
    let (report, _) = run_fixture_scenario("fig4.ces", None);
    report.trace.iter().find_map(|t| match &t.event {
        Event::Invoked { remote, payload, .. } if remote == "Save" => Some(payload.clone()),
        _ => None,
    })
}

/// One round-trip case: `home` evolves into `away`, a value of `home`
/// travels there and back.
pub fn round_trip_case(shape: &Shape, seed: u64) -> Result<(), String> {
    let mut keys = Keys::default();
    let home = to_type(shape, &mut keys);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let away = evolve(&home, &mut rng, &mut keys, 3);
    let mu = random_subset(&all_keys(&home), &mut rng);
    let (home_t, away_t) = (Type::Base(home.clone()), Type::Base(away.clone()));
    if !type_compatible(&away_t, &home_t, &mu) {
        return Err(format!("generated pair is not compatible: {away} / {home}"));
    }
    let v = value_of(&home, &mut rng);
    let there = convert(&v, &home_t, &away_t).map_err(|e| e.to_string())?;
    let back = convert(&there, &away_t, &home_t).map_err(|e| e.to_string())?;
    round_trip_holds(&v, &home, Some(&away), &back).map_err(|e| format!("{v} via {away}: {e}"))
}

pub fn lemma_round_trips(cases: u32) -> Result<u32, String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner
        .run(&(record_shape(3, 4), proptest::num::u64::ANY), |(shape, seed)| {
            round_trip_case(&shape, seed).map_err(TestCaseError::fail)
        })
        .map_err(|e| e.to_string())?;
    Ok(cases)
}

/// Unknown members survive the boundary.
pub fn ac3() -> Outcome {
    let payload = save_payload().ok_or("Save was never invoked")?;
    let json: serde_json::Value = serde_json::from_str(&payload).map_err(|e| e.to_string())?;
    if json.get("k10") != Some(&serde_json::Value::String("2TB".into())) {
        return Err(format!("Save payload {payload} lacks k10 = \"2TB\""));
    }
    let n = lemma_round_trips(1000)?;
    Ok(format!("Save payload carries k10=\"2TB\"; {n} round-trip cases"))
}

pub const HISTORIES: u64 = 200;
pub const SEEDS: u64 = 10;
pub const STEPS: usize = 10;

pub fn preservation(histories: u64, seeds: u64) -> Stats {
    let mut total = Stats::default();
    for h in 0..histories {
        for s in 0..seeds {
            total.merge(run_history(h, SchedulerPolicy::Seeded(h * 1_000 + s), STEPS));
        }
    }
    total
}

/// Every reachable state of every accepted history typechecks.
pub fn ac4() -> Outcome {
    let start = Instant::now();
    let stats = preservation(HISTORIES, SEEDS);
    let elapsed = start.elapsed();
    if let Some(f) = stats.failures.first() {
        return Err(format!("{} failures, first: {f}", stats.failures.len()));
    }
    if stats.accepted == 0 || stats.rejected == 0 {
        return Err(format!("degenerate run: {} accepted, {} rejected", stats.accepted, stats.rejected));
    }
    if elapsed >= Duration::from_secs(120) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "{HISTORIES} histories x {SEEDS} seeds: {} accepted, {} rejected, {} calls, {} states in {:.1} s",
        stats.accepted,
        stats.rejected,
        stats.calls,
        stats.states_checked,
        elapsed.as_secs_f64()
    ))
}

/// Agreement with the brute-force relation over a label alphabet.
pub fn exhaustive(labels: &[char]) -> Result<usize, String> {
    let space = flat_space(labels);
    let types: Vec<Type> = space.iter().map(flat_to_type).collect();
    let mut checked = 0;
    for mask in 0..(1u32 << UNIVERSE) {
        let rel = brute_force_relation(&space, mask);
        let mu = mu_of(mask);
        for (i, a) in types.iter().enumerate() {
            for (j, b) in types.iter().enumerate() {
                checked += 1;
                if type_compatible(a, b, &mu) != rel.contains(&(i, j)) {
                    return Err(format!("disagree on {a} ~> {b} under {mu:?}"));
                }
            }
        }
    }
    Ok(checked)
}

pub fn ac5() -> Outcome {
    let fixed = exhaustive(&['a'])?;
    let relabelled = exhaustive(&['a', 'b'])?;
    Ok(format!("{fixed} triples agree; {relabelled} with relabelling"))
}

/// Published worst-case arithmetic.
pub fn ac6() -> Outcome {
    let report = aggregate(&parse_log(PAPER_FIXTURE).map_err(|e| e.to_string())?);
    let row = |name: &str| report.rows.iter().find(|r| r.factory == name).ok_or(format!("no row {name}"));
    for (name, broken, safe, pct) in [("Factory 1", 2426, 1333, 3546), ("Factory 2", 1305, 3354, 7199)] {
        let r = row(name)?;
        if (r.broken, r.safe, r.safe_pct) != (broken, safe, pct) || r.discrepancy() {
            return Err(format!("{name}: broken {} safe {} pct {}", r.broken, r.safe, r.safe_pct));
        }
    }
    let f3 = row("Factory 3")?;
    if f3.broken != 127 || f3.published_broken != Some(105) || !f3.discrepancy() {
        return Err(format!("Factory 3: broken {} published {:?}", f3.broken, f3.published_broken));
    }
    let total = report.published_total.as_ref().ok_or("no published total")?;
    if (total.safe, total.safe_pct) != (5053, 5685) {
        return Err(format!("published total: safe {} pct {}", total.safe, total.safe_pct));
    }
    let text = report.render_text();
    for needle in ["35.46%", "71.99%", "56.85%", "note: Factory 3 published broken 105"] {
        if !text.contains(needle) {
            return Err(format!("rendered table lacks {needle:?}"));
        }
    }
    Ok("F1 2426/1333/35.46%, F2 1305/3354/71.99%, total 5053/56.85%, F3 127 vs 105 flagged".into())
}

pub fn module_round_trips(n: u64) -> Result<u64, String> {
    for seed in 0..n {
        let m = random_module(&mut ChaCha8Rng::seed_from_u64(seed));
        let text = render_module(&m);
        match parse_module(&text) {
            Ok(back) if back == m => {}
            Ok(back) => return Err(format!("module {seed} changed:\n{text}\n{}", render_module(&back))),
            Err(e) => return Err(format!("module {seed} does not parse: {e}\n{text}")),
        }
    }
    Ok(n)
}

pub fn value_round_trips(n: u32) -> Result<u32, String> {
    let mut runner = TestRunner::new(Config { cases: n, failure_persistence: None, ..Config::default() });
    runner
        .run(&(record_shape(3, 4), proptest::num::u64::ANY), |(shape, seed)| {
            let mut keys = Keys::default();
            let ty = to_type(&shape, &mut keys);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = value_with_unknowns(&ty, &mut rng, &mut keys);
            let bytes = encode_to_string(&v, &ty).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let again = encode_to_string(&v.clone(), &ty).map_err(|e| TestCaseError::fail(e.to_string()))?;
            proptest::prop_assert_eq!(&bytes, &again);
            let back = decode_from_str(&bytes, &ty).map_err(|e| TestCaseError::fail(e.to_string()))?;
            proptest::prop_assert_eq!(&back, &v);
            let text = render_value(&v);
            let parsed = parse_value(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
            proptest::prop_assert_eq!(&parsed, &v);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(n)
}

/// Wire bytes do not depend on member order.
pub fn wire_bytes_are_canonical() -> Result<(), String> {
    let ty = BaseType::Record(vec![Field::new("Id", "k2", BaseType::Int), Field::new("Name", "k3", BaseType::Str)]);
    let a = Value::record(vec![("Id", "k2", Value::Int(1)), ("Name", "k3", Value::str("x"))]);
    let b = Value::record(vec![("Name", "k3", Value::str("x")), ("Id", "k2", Value::Int(1))]);
    let (ea, eb) =
        (encode_to_string(&a, &ty).map_err(|e| e.to_string())?, encode_to_string(&b, &ty).map_err(|e| e.to_string())?);
    if ea != eb {
        return Err(format!("{ea} != {eb}"));
    }
    Ok(())
}

pub fn ac7() -> Outcome {
    let m = module_round_trips(1000)?;
    let v = value_round_trips(1000)?;
    wire_bytes_are_canonical()?;
    Ok(format!("{m} modules, {v} values round-trip; wire bytes canonical"))
}

fn scenario_trace(name: &str, seed: u64) -> String {
    let (report, _) = run_fixture_scenario(name, Some(seed));
    trace_to_ndjson(&report.trace)
}

/// Equal seeds, equal bytes.
pub fn ac8() -> Outcome {
    let mut compared = 0;
    for name in ["fig4.ces", "evolution.ces", "catalog_v3_blocked.ces"] {
        for seed in [0, 7, 99] {
            let (a, b) = (scenario_trace(name, seed), scenario_trace(name, seed));
            if a.is_empty() && name != "catalog_v3_blocked.ces" {
                return Err(format!("{name}: empty trace"));
            }
            if a != b {
                return Err(format!("{name} seed {seed}: traces differ"));
            }
            compared += 1;
        }
    }
    let mut distinct = BTreeSet::new();
    for h in 0..20 {
        let a = run_history(h, SchedulerPolicy::Seeded(h), STEPS).trace;
        let b = run_history(h, SchedulerPolicy::Seeded(h), STEPS).trace;
        if a != b {
            return Err(format!("history {h}: traces differ"));
        }
        distinct.insert(a);
        compared += 1;
    }
    Ok(format!("{compared} scenario/seed pairs replay byte-identically ({} distinct histories)", distinct.len()))
}

pub type Criterion = (&'static str, &'static str, fn() -> Outcome);

pub fn all() -> Vec<Criterion> {
    vec![
        ("AC1", "running-example verdicts", ac1),
        ("AC2", "handshake on first call", ac2),
        ("AC3", "unknown-field conservation", ac3),
        ("AC4", "preservation under random evolution", ac4),
        ("AC5", "compatibility oracle equivalence", ac5),
        ("AC6", "change-analysis arithmetic", ac6),
        ("AC7", "codec and parser round trips", ac7),
        ("AC8", "seeded determinism", ac8),
    ]
}
