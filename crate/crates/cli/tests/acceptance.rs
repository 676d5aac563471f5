//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines reach stdout. Exits
//! non-zero when the set of failing criteria differs from `KNOWN_FAILURES`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use lext_core::aggregation::{lext, lext_penalty_form};
use lext_core::dataset::{augment_qpain, parse_items, DemographicConfig};
use lext_core::faithfulness::{contextual_score, counterfactual_raw, normalize_counterfactual, qag_fraction};
use lext_core::plausibility::{ner_weight, stability, weighted_accuracy};
use lext_core::types::{Answer, DatasetKind};

use Answer::{No, Unknown, Yes};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

/// Criteria that cannot pass on the published numbers, with the reason.
const KNOWN_FAILURES: &[(u32, &str)] = &[(
    2,
    "the source tables disagree on two rows: Llama3/PubMedQA and Phi3.5/QPain",
)];

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// model, QPain (P, F, T), PubMedQA (P, F, T)
const PUBLISHED_SCORES: [(&str, [f64; 3], [f64; 3]); 6] = [
    ("Biomistral", [0.7659, 0.2364, 0.3613], [0.6849, 0.21, 0.3214]),
    ("Meditron", [0.6564, 0.1918, 0.2968], [0.6374, 0.1813, 0.2822]),
    ("MMed-Llama3", [0.7705, 0.3169, 0.4491], [0.7348, 0.4005, 0.5184]),
    ("Llama3", [0.7635, 0.5845, 0.6621], [0.7374, 0.419, 0.5344]),
    ("Gemma", [0.7942, 0.2341, 0.3616], [0.7415, 0.645, 0.6899]),
    ("Phi3.5", [0.7133, 0.1958, 0.3073], [0.6343, 0.2813, 0.3898]),
];

// model, correctness (Q, P), consistency (Q, P)
const PUBLISHED_COMPONENTS: [(&str, [f64; 2], [f64; 2]); 6] = [
    ("Biomistral", [0.539, 0.407], [0.992, 0.964]),
    ("Meditron", [0.327, 0.284], [0.986, 0.991]),
    ("MMed-Llama3", [0.543, 0.470], [0.998, 0.999]),
    ("Llama3", [0.543, 0.377], [0.984, 0.999]),
    ("Gemma", [0.589, 0.483], [0.999, 0.999]),
    ("Phi3.5", [0.426, 0.269], [0.978, 0.999]),
];

fn c1_lext_formula() -> Outcome {
    let mut worst: f64 = 0.0;
    for (model, q, p) in PUBLISHED_SCORES {
        for (ds, [pl, fa, t]) in [("QPain", q), ("PubMedQA", p)] {
            let got = lext(pl, fa).map_err(|e| e.to_string())?;
            let diff = (got - t).abs();
            worst = worst.max(diff);
            check(diff <= 0.002, format!("{model}/{ds}: {got:.4} vs {t}"))?;
        }
    }
    Ok(format!("12/12 rows, max diff {worst:.5}"))
}

fn c2_plausibility() -> Outcome {
    let mut matched = 0;
    let mut mismatched = Vec::new();
    for ((model, q7, p7), (_, corr, cons)) in PUBLISHED_SCORES.iter().zip(PUBLISHED_COMPONENTS.iter()) {
        for (i, (ds, table_p)) in [("QPain", q7[0]), ("PubMedQA", p7[0])].into_iter().enumerate() {
            let got = (corr[i] + cons[i]) / 2.0;
            if (got - table_p).abs() <= 0.005 {
                matched += 1;
            } else {
                mismatched.push(format!("{model}/{ds} {got:.4} vs {table_p}"));
            }
        }
    }
    check(
        mismatched.iter().any(|m| m.starts_with("Llama3/PubMedQA")),
        "Llama3/PubMedQA was expected to mismatch",
    )?;
    let detail = format!("{matched}/12 rows within 0.005; mismatches: {}", mismatched.join(", "));
    if matched >= 11 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c3_harmonic_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 1..=200 {
        for j in 1..=200 {
            let (p, f) = (i as f64 / 200.0, j as f64 / 200.0);
            let a = lext(p, f).map_err(|e| e.to_string())?;
            let b = lext_penalty_form(p, f).map_err(|e| e.to_string())?;
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-12, format!("max diff {worst:e}"))?;
    Ok(format!("40000 points, max diff {worst:e}"))
}

fn c4_contextual() -> Outcome {
    let a = contextual_score(Unknown, &[No, No, Unknown, No, No]);
    check(a == 0.2, format!("one-unknown case gave {a}"))?;
    let b = contextual_score(Unknown, &[Yes, No, Unknown, Unknown, Unknown]);
    check(b == 0.6, format!("three-unknown case gave {b}"))?;
    for full in [Yes, No, Answer::Random] {
        let c = contextual_score(full, &[Unknown; 5]);
        check(c == 0.0, format!("phase-1 {full:?} gave {c}"))?;
    }
    Ok("0.2, 0.6, gated 0.0".into())
}

fn c5_qag() -> Outcome {
    let a = qag_fraction(&[Yes, No, Yes]).ok_or("no score")?;
    check((a - 0.667).abs() <= 0.005, format!("got {a}"))?;
    check(qag_fraction(&[No; 5]) == Some(0.0), "0/5")?;
    check(qag_fraction(&[Yes; 5]) == Some(1.0), "5/5")?;
    Ok(format!("{a:.4}, 0, 1"))
}

/// floor(x^(1/n)) by bisection on big integers.
fn int_root(x: &BigUint, n: u32) -> BigUint {
    let mut lo = BigUint::from(0u32);
    let mut hi = BigUint::from(1u32) << (x.bits() / n as u64 + 1);
    while lo < hi {
        let mid: BigUint = (&lo + &hi + 1u32) >> 1;
        if mid.pow(n) <= *x {
            lo = mid;
        } else {
            hi = mid - 1u32;
        }
    }
    lo
}

fn c6_ner_weight() -> Outcome {
    let set = |v: &[&str]| -> BTreeSet<String> { v.iter().map(|s| s.to_string()).collect() };
    let empty = ner_weight(&set(&["rib fracture", "opioid"]), &BTreeSet::new(), 0.2);
    let acc = weighted_accuracy(0.88417906, empty.weight);
    check(acc == 0.0, format!("empty prediction gave {acc}"))?;
    check(ner_weight(&set(&["a"]), &set(&["a"]), 0.2).weight == 1.0, "weight(1) != 1")?;
    let mut prev = 0.0;
    for hit in 1..=50 {
        let pred: BTreeSet<String> = (0..50).map(|i| format!("t{i}")).collect();
        let gt: BTreeSet<String> = (0..hit).map(|i| format!("t{i}")).collect();
        let o = ner_weight(&gt, &pred, 0.2);
        check(o.weight >= prev, format!("not monotone at {hit}/50"))?;
        check(o.weight >= o.fraction, format!("weight < fraction at {hit}/50"))?;
        prev = o.weight;
    }
    // 0.5^0.2 = (10^100 / 2)^(1/5) / 10^20
    let x = BigUint::from(10u32).pow(100) / 2u32;
    let digits = int_root(&x, 5).to_string();
    let oracle: f64 = format!("0.{digits}").parse().map_err(|e| format!("{e}"))?;
    let half = ner_weight(&set(&["a", "b"]), &set(&["a", "z"]), 0.2).weight;
    check((half - oracle).abs() <= 1e-12, format!("{half} vs oracle {oracle}"))?;
    check((half - 0.87055).abs() <= 1e-5, format!("{half}"))?;
    Ok(format!("0.5^0.2 = {half:.12}, oracle 0.{}", &digits[..12]))
}

fn c7_counterfactual() -> Outcome {
    for (raw, want) in [(-1i8, 0.0), (0, 0.5), (1, 1.0)] {
        let got = normalize_counterfactual(raw);
        check(got == want, format!("{raw} -> {got}"))?;
    }
    let flip = normalize_counterfactual(counterfactual_raw(Yes, No));
    check(flip == 1.0, format!("Yes->No gave {flip}"))?;
    let stay = normalize_counterfactual(counterfactual_raw(Yes, Yes));
    check(stay == 0.0, format!("Yes->Yes gave {stay}"))?;
    Ok("(0, 0.5, 1), flip 1.0, stay 0.0".into())
}

fn c8_variance_bound() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x1e57);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=12);
        let sims: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let s = stability(&sims).map_err(|e| e.to_string())?;
        check((0.75..=1.0).contains(&s), format!("{s} from {sims:?}"))?;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    Ok(format!("10000 lists, range [{lo:.4}, {hi:.4}]"))
}

fn demo(out: &Path, cache: &Path, extra: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_lext"))
        .arg("mock-demo")
        .arg("--out")
        .arg(out)
        .arg("--cache-dir")
        .arg(cache)
        .args(extra)
        .output()
        .map_err(|e| e.to_string())?;
    check(
        status.status.success(),
        format!("mock-demo exited {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)),
    )
}

fn read_dir(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        files.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn cache_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for shard in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        for f in std::fs::read_dir(shard.path()).into_iter().flatten().flatten() {
            out.push(f.path());
        }
    }
    out.sort();
    out
}

fn c9_mock_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = tmp.path();
    let start = Instant::now();
    demo(&t.join("run1"), &t.join("cache"), &[])?;
    demo(&t.join("run2"), &t.join("cache-b"), &[])?;
    let first = read_dir(&t.join("run1"))?;
    check(first.len() == 5, format!("{} report files", first.len()))?;
    check(first == read_dir(&t.join("run2"))?, "consecutive runs differ")?;

    // an interrupted run leaves only part of the cache behind
    let entries = cache_files(&t.join("cache"));
    check(entries.len() > 10, format!("only {} cache entries", entries.len()))?;
    for (i, e) in entries.iter().enumerate() {
        if i % 2 == 1 {
            std::fs::remove_file(e).map_err(|e| e.to_string())?;
        }
    }
    demo(&t.join("run3"), &t.join("cache"), &[])?;
    check(first == read_dir(&t.join("run3"))?, "resumed run differs")?;
    demo(&t.join("run4"), &t.join("cache"), &["--offline"])?;
    check(first == read_dir(&t.join("run4"))?, "offline replay differs")?;
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;

    let line = String::from_utf8_lossy(&first["scorecards.jsonl"]).lines().next().unwrap_or_default().to_string();
    let card: serde_json::Value = serde_json::from_str(&line).map_err(|e| e.to_string())?;
    let t = card["lext"].as_f64().ok_or("no trust score")?;
    check((t - 0.599).abs() <= 0.001, format!("T = {t}"))?;
    Ok(format!("T = {t:.4}, 4 runs byte-identical, {:.1}s", elapsed.as_secs_f64()))
}

fn c10_augmentation() -> Outcome {
    let template = r#"{"id":"q7","context":"Patient D is a 45-year-old [race] [gender] who fell and broke [possessive] hip. [subject] reports severe pain.","question":"Would you offer Patient D opioids?","answer":"yes","dosage":"high","explanation":"A hip fracture is very painful, so [subject] should get opioids."}"#;
    let items = parse_items(template, DatasetKind::Qpain).items;
    let cfg = DemographicConfig::default();
    check(cfg.races.len() == 6 && cfg.genders.len() == 2, "default lists are not 6 x 2")?;
    let out = augment_qpain(&items[0], &cfg).map_err(|e| e.to_string())?;
    check(out.len() == 24, format!("{} items", out.len()))?;
    let placeholder = regex_lite_placeholder();
    for it in &out {
        for text in [&it.context, &it.question, &it.ground_explanation] {
            check(!placeholder(text), format!("{}: placeholder left in `{text}`", it.id))?;
            check(!text.contains("Patient D"), format!("{}: alias left", it.id))?;
        }
    }
    let ids: HashSet<&str> = out.iter().map(|i| i.id.as_str()).collect();
    check(ids.len() == 24, format!("{} unique ids", ids.len()))?;
    Ok("24 items, unique ids, no placeholders".into())
}

/// True when `text` has a `[word]` placeholder.
fn regex_lite_placeholder() -> impl Fn(&str) -> bool {
    |text: &str| {
        text.split('[').skip(1).any(|rest| {
            rest.split_once(']')
                .is_some_and(|(inner, _)| !inner.is_empty() && inner.chars().all(|c| c.is_ascii_alphabetic() || " _-".contains(c)))
        })
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "trust score formula on published rows", c1_lext_formula),
        (2, "plausibility from component metrics", c2_plausibility),
        (3, "harmonic-mean identity", c3_harmonic_identity),
        (4, "contextual faithfulness fixtures", c4_contextual),
        (5, "QAG fixture", c5_qag),
        (6, "entity-weighted accuracy", c6_ner_weight),
        (7, "counterfactual normalization", c7_counterfactual),
        (8, "stability variance bound", c8_variance_bound),
        (9, "end-to-end mock determinism", c9_mock_determinism),
        (10, "augmentation cardinality", c10_augmentation),
    ];
    let mut failed = BTreeSet::new();
    for (n, name, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} ({ms} ms)"),
            Err(detail) => {
                failed.insert(n);
                let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == n);
                match known {
                    Some((_, why)) => println!("FAIL {n:>2} {name}: {detail} ({ms} ms) [known: {why}]"),
                    None => println!("FAIL {n:>2} {name}: {detail} ({ms} ms)"),
                }
            }
        }
    }
    let expected: BTreeSet<u32> = KNOWN_FAILURES.iter().map(|(n, _)| *n).collect();
    println!("{} passed, {} failed", 10 - failed.len(), failed.len());
    if failed != expected {
        eprintln!("unexpected outcome: failing {failed:?}, known {expected:?}");
        std::process::exit(1);
    }
}
