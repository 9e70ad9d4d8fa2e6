use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde::de::DeserializeOwned;
use tempfile::TempDir;

#[path = "../src/report.rs"]
#[allow(dead_code)]
mod report;

use report::{CheckSummary, DimSummary, RenderSummary, SimulationSummary};

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_affine-recur"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json<V: DeserializeOwned>(path: &Path) -> V {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const CANTOR: &str = r#"{
  "system": { "maps": [
    { "linear": [[0.3333333333333333]], "translation": [0.0] },
    { "linear": [[0.3333333333333333]], "translation": [0.6666666666666666] }
  ] },
  "target": { "period": [0] },
  "schedule": { "kind": "linear", "L": 1.0 },
  "task": { "render": { "mode": "words", "depth": 9 } }
}"#;

fn similarity(schedule: &str, task: &str) -> String {
    format!(
        r#"{{
  "system": {{ "maps": [
    {{ "linear": [[0.3, 0.0], [0.0, 0.3]] }},
    {{ "linear": [[0.0, -0.3], [0.3, 0.0]], "translation": [0.5, 0.0] }},
    {{ "linear": [[0.3, 0.0], [0.0, 0.3]], "translation": [0.0, 0.5] }}
  ] }},
  "target": {{ "period": [1, 2] }},
  "schedule": {schedule},
  "task": {task}
}}"#
    )
}

#[test]
fn check_accepts_clean_system_and_reports_exact_d() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &similarity(r#"{ "kind": "linear", "L": 1 }"#, "{}"));
    let o = run("check", &cfg, dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let summary: CheckSummary = read_json(&dir.path().join("check.json"));
    assert!(summary.strict_ok && summary.violations.is_empty());
    assert!(summary.cone_searched);
    let q = &summary.quasi_multiplicativity[0];
    assert!(q.exact && q.d == 1.0 && q.t == 1.0);
}

#[test]
fn check_names_a_large_singular_value() {
    let dir = TempDir::new().unwrap();
    let body = r#"{ "system": { "maps": [
        { "linear": [[0.6, 0.0], [0.0, 0.2]] },
        { "linear": [[0.3, 0.0], [0.0, 0.3]], "translation": [0.5, 0.5] }
    ] } }"#;
    let cfg = write_config(&dir, "c.json", body);
    let o = run("check", &cfg, dir.path(), &[]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("map 0"), "{}", stdout(&o));
    let summary: CheckSummary = read_json(&dir.path().join("check.json"));
    assert!(!summary.strict_ok);
    assert!(summary.violations.iter().any(|v| v.contains("0.6")));
    // dim refuses to run on it.
    assert_eq!(code(&run("dim", &cfg, dir.path(), &[])), 1);
}

#[test]
fn dim_encloses_similarity_dimension() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &similarity(r#"{ "kind": "linear", "L": 1 }"#, r#"{ "depth": 12 }"#));
    let o = run("dim", &cfg, dir.path(), &["--tol", "1e-4"]);
    assert_eq!(code(&o), 0);
    let s: DimSummary = read_json(&dir.path().join("dim.json"));
    let exact = 3f64.ln() / (1.0 / 0.3f64).ln();
    assert_eq!(s.kind, "affinity");
    assert!(s.lower <= exact && exact <= s.upper && s.upper - s.lower <= 1e-4);
    assert_eq!(s.regime, None);
}

#[test]
fn starget_follows_the_schedule_regime() {
    let dir = TempDir::new().unwrap();
    let affinity = 3f64.ln() / (1.0 / 0.3f64).ln();

    let cfg = write_config(&dir, "lin.json", &similarity(r#"{ "kind": "linear", "L": 2 }"#, "{}"));
    assert_eq!(code(&run("starget", &cfg, dir.path(), &[])), 0);
    let s: DimSummary = read_json(&dir.path().join("starget.json"));
    assert_eq!((s.regime.as_deref(), s.linear_rate), (Some("linear"), Some(2.0)));
    assert!(s.lower <= affinity / 3.0 && affinity / 3.0 <= s.upper);

    let cfg = write_config(&dir, "sub.json", &similarity(r#"{ "kind": "power", "alpha": 0.5 }"#, "{}"));
    assert_eq!(code(&run("starget", &cfg, dir.path(), &[])), 0);
    let s: DimSummary = read_json(&dir.path().join("starget.json"));
    assert_eq!(s.regime.as_deref(), Some("sublinear"));
    assert!(s.lower <= affinity && affinity <= s.upper);

    let cfg = write_config(&dir, "sup.json", &similarity(r#"{ "kind": "power", "alpha": 2 }"#, "{}"));
    assert_eq!(code(&run("starget", &cfg, dir.path(), &[])), 0);
    let s: DimSummary = read_json(&dir.path().join("starget.json"));
    assert_eq!(s.regime.as_deref(), Some("superlinear"));
    assert_eq!((s.lower, s.upper), (0.0, 0.0));
}

#[test]
fn pressure_at_zero_is_log_m() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &similarity(r#"{ "kind": "linear", "L": 1 }"#, r#"{ "s_grid": [0.0] }"#));
    assert_eq!(code(&run("pressure", &cfg, dir.path(), &[])), 0);
    let text = fs::read_to_string(dir.path().join("pressure.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "s,lower,upper,heuristic");
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    let (lo, hi): (f64, f64) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    assert_eq!(lo, hi);
    assert!((lo - 3f64.ln()).abs() < 1e-12);
    assert!(!text.contains('\r'));
}

#[test]
fn conformal_pressure_profile_is_affine() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &similarity(r#"{ "kind": "linear", "L": 1 }"#, "{}"));
    assert_eq!(code(&run("pressure", &cfg, dir.path(), &[])), 0);
    let mut reader = csv::Reader::from_path(dir.path().join("pressure.csv")).unwrap();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let s: f64 = rec[0].parse().unwrap();
        let (lo, hi): (f64, f64) = (rec[1].parse().unwrap(), rec[2].parse().unwrap());
        let exact = 3f64.ln() + s * 0.3f64.ln();
        assert!(lo <= exact + 1e-12 && exact <= hi + 1e-12 && hi - lo < 1e-9, "{s}: [{lo}, {hi}]");
        rows += 1;
    }
    assert_eq!(rows, 17);
}

#[test]
fn simulate_fair_coin_constant_length() {
    let dir = TempDir::new().unwrap();
    let body = r#"{
      "system": { "maps": [ { "linear": [[0.4]] }, { "linear": [[0.4]], "translation": [0.6] } ] },
      "target": { "period": [0] },
      "schedule": { "kind": "explicit", "values": [1] },
      "task": { "samples": 100000, "horizon": 64, "seed": 3,
                "measure": { "kind": "bernoulli", "weights": [0.5, 0.5] } }
    }"#;
    let cfg = write_config(&dir, "c.json", body);
    assert_eq!(code(&run("simulate", &cfg, dir.path(), &[])), 0);
    let s: SimulationSummary = read_json(&dir.path().join("simulate.json"));
    assert_eq!(s.partial_sum, 32.0);
    assert!(s.max_deviation <= 3.0 + 1.5, "{}", s.max_deviation);
    let mut reader = csv::Reader::from_path(dir.path().join("simulate.csv")).unwrap();
    let mut within = 0;
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let (rate, se): (f64, f64) = (rec[3].parse().unwrap(), rec[5].parse().unwrap());
        if (rate - 0.5).abs() <= 3.0 * se {
            within += 1;
        }
        rows += 1;
    }
    assert_eq!(rows, 64);
    // 3 standard errors holds for each k with probability 0.997.
    assert!(within >= 62, "{within} of 64");
}

#[test]
fn simulate_is_deterministic_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let body = r#"{
      "system": { "maps": [ { "linear": [[0.4]] }, { "linear": [[0.4]], "translation": [0.6] } ] },
      "target": { "period": [0, 1] },
      "schedule": { "kind": "log_ceil", "c": 1 },
      "task": { "samples": 5000, "horizon": 32, "seed": 11 }
    }"#;
    let cfg = write_config(&dir, "c.json", body);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run("simulate", &cfg, &a, &["--threads", "1"])), 0);
    assert_eq!(code(&run("simulate", &cfg, &b, &["--threads", "3"])), 0);
    for f in ["simulate.csv", "simulate.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    assert_eq!(code(&run("simulate", &cfg, &c, &["--seed", "12"])), 0);
    assert_ne!(fs::read(a.join("simulate.csv")).unwrap(), fs::read(c.join("simulate.csv")).unwrap());
}

#[test]
fn render_words_gives_the_cantor_set() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", CANTOR);
    assert_eq!(code(&run("render", &cfg, dir.path(), &[])), 0);
    let mut reader = csv::Reader::from_path(dir.path().join("points.csv")).unwrap();
    let mut n = 0;
    for rec in reader.records() {
        let x: f64 = rec.unwrap()[0].parse().unwrap();
        assert!((0.0..=1.0).contains(&x));
        assert!(!(x > 1.0 / 3.0 + 1e-12 && x < 2.0 / 3.0 - 1e-12), "{x} in the middle gap");
        assert!(!(x > 1.0 / 9.0 + 1e-12 && x < 2.0 / 9.0 - 1e-12), "{x} in a second-level gap");
        n += 1;
    }
    assert_eq!(n, 512);
    let summary: RenderSummary = read_json(&dir.path().join("render.json"));
    assert_eq!(summary.points, 512);
    let ppm = fs::read(dir.path().join("render.ppm")).unwrap();
    let header = b"P6\n512 512\n255\n";
    assert_eq!(&ppm[..header.len()], header);
    assert_eq!(ppm.len(), header.len() + 512 * 512 * 3);
}

#[test]
fn render_rejects_empty_budgets_and_oversized_trees() {
    let dir = TempDir::new().unwrap();
    let empty = write_config(&dir, "e.json", &CANTOR.replace(r#""depth": 9"#, r#""depth": 0"#));
    assert_eq!(code(&run("render", &empty, dir.path(), &[])), 3);
    let chaos = write_config(
        &dir,
        "z.json",
        &CANTOR.replace(r#""mode": "words", "depth": 9"#, r#""mode": "chaos", "points": 0"#),
    );
    assert_eq!(code(&run("render", &chaos, dir.path(), &[])), 3);
    let huge = write_config(&dir, "h.json", &CANTOR.replace(r#""depth": 9"#, r#""depth": 40"#));
    assert_eq!(code(&run("render", &huge, dir.path(), &[])), 2);
}

#[test]
fn chaos_game_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let body = similarity(
        r#"{ "kind": "linear", "L": 1 }"#,
        r#"{ "seed": 5, "render": { "mode": "chaos", "points": 20000, "width": 128, "height": 96 } }"#,
    );
    let cfg = write_config(&dir, "c.json", &body);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run("render", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("render", &cfg, &b, &[])), 0);
    for f in ["render.ppm", "points.csv", "render.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary: RenderSummary = read_json(&a.join("render.json"));
    assert_eq!((summary.mode.as_str(), summary.points, summary.width, summary.height), ("chaos", 20000, 128, 96));
}

#[test]
fn config_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let unknown = write_config(&dir, "u.json", "{\n  \"system\": { \"maps\": [] },\n  \"colour\": 1\n}");
    let o = run("check", &unknown, dir.path(), &[]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("colour") && err.contains("line 3"), "{err}");

    let bad_matrix = write_config(
        &dir,
        "m.json",
        r#"{ "system": { "maps": [ { "linear": [[0.1]] }, { "linear": [[0.1, 0.2]] } ] } }"#,
    );
    let o = run("check", &bad_matrix, dir.path(), &[]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.maps[1].linear"));

    assert_eq!(code(&run("dim", &dir.path().join("missing.json"), dir.path(), &[])), 3);
    let cfg = write_config(&dir, "c.json", CANTOR);
    assert_eq!(code(&run("dim", &cfg, dir.path(), &["--depth", "lots"])), 3);
    assert_eq!(code(&run("dim", &cfg, dir.path(), &["--threads", "0"])), 3);
}

#[test]
fn summaries_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &similarity(r#"{ "kind": "linear", "L": 1 }"#, r#"{ "samples": 200 }"#));
    for cmd in ["check", "dim", "starget", "simulate"] {
        assert_eq!(code(&run(cmd, &cfg, dir.path(), &[])), 0, "{cmd}");
    }
    fn round_trip<V: DeserializeOwned + serde::Serialize + PartialEq + std::fmt::Debug>(path: &Path) {
        let v: V = read_json(path);
        let again: V = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(v, again);
    }
    round_trip::<CheckSummary>(&dir.path().join("check.json"));
    round_trip::<DimSummary>(&dir.path().join("dim.json"));
    round_trip::<DimSummary>(&dir.path().join("starget.json"));
    round_trip::<SimulationSummary>(&dir.path().join("simulate.json"));
}
