use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use capfi::engine::{BaselineReport, CrossReport};
use capfi::{generate, load_manifest, GeneratorSpec, ImportanceReport, Metric};

const BIN: &str = env!("CARGO_BIN_EXE_capfi");

fn capfi(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn capfi")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(n: usize, seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = GeneratorSpec::new(n, seed);
        spec.dependency.bbox = 0.6;
        spec.dependency.speed = 0.4;
        spec.noise = 0.1;
        generate(&spec).unwrap().save(dir.path().join("m.json")).unwrap();
        std::fs::write(dir.path().join("lr.json"), r#"{"name":"lr","epochs":60}"#).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }

    fn builtin(&self) -> String {
        format!("builtin:{}", self.path("lr.json"))
    }
}

fn constant_oracle(score: f64) -> String {
    format!("exec:{BIN} serve-oracle --constant {score}")
}

#[test]
fn unknown_notation_exits_2_and_names_it() {
    let f = Fixture::new(60, 1);
    let o = capfi(&[
        "baseline", "--dataset", &f.path("m.json"), "--oracle", &f.builtin(), "--seed", "1",
        "--out", &f.path("out"), "--contexts", "S_C,S_Bogus",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("S_Bogus"), "{}", stderr(&o));
}

#[test]
fn flag_errors_exit_2_and_help_exits_0() {
    assert_eq!(capfi(&["importance", "--seed", "x"]).status.code(), Some(2));
    assert_eq!(capfi(&["baseline", "--dataset", "m.json", "--out", "o", "--oracle", "builtin:x"]).status.code(), Some(2));
    assert_eq!(capfi(&["--help"]).status.code(), Some(0));
    assert_eq!(capfi(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_config_error() {
    let o = capfi(&["baseline", "--dataset", "/nonexistent.json", "--oracle", "exec:true", "--seed", "1", "--out", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn baseline_writes_rows_for_intersections() {
    let f = Fixture::new(200, 2);
    let contexts = "S_C ∩ S_Acc, S_NC ∩ S_CP, (S_C ∪ S_NC) ∩ S_Red, S_FW";
    let o = capfi(&[
        "baseline", "--dataset", &f.path("m.json"), "--oracle", &f.builtin(), "--seed", "3",
        "--out", &f.path("out"), "--contexts", contexts,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: BaselineReport = serde_json::from_str(&std::fs::read_to_string(f.path("out/baseline.json")).unwrap()).unwrap();
    assert_eq!(r.rows.len(), 4);
    assert_eq!(r.rows[0].context, "S_C ∩ S_Acc");
    for row in &r.rows {
        assert!((0.0..=1.0).contains(&row.metrics.acc));
        assert!((0.0..=1.0).contains(&row.metrics.f1));
        assert_eq!(row.n, row.positives + row.negatives);
    }
    // single-class scenarios carry no AUC
    assert!(r.rows[0].metrics.auc.is_none());
    let csv = std::fs::read_to_string(f.path("out/baseline.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(std::fs::read_to_string(f.path("out/run.log")).unwrap().contains("started_unix="));
}

#[test]
fn importance_renders_one_plot_per_context() {
    let f = Fixture::new(150, 4);
    let o = capfi(&[
        "importance", "--dataset", &f.path("m.json"), "--oracle", &f.builtin(), "--seed", "9",
        "--out", &f.path("out"), "--repetitions", "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let plots: Vec<PathBuf> = std::fs::read_dir(f.path("out/plots")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(plots.len(), 17);
    for p in &plots {
        let svg = std::fs::read_to_string(p).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    let csv = std::fs::read_to_string(f.path("out/importance.csv")).unwrap();
    let r = ImportanceReport::from_json(&std::fs::read_to_string(f.path("out/importance.json")).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), r.records.len() + 1);
}

#[test]
fn format_selects_outputs() {
    let f = Fixture::new(80, 5);
    let o = capfi(&[
        "capfi", "--dataset", &f.path("m.json"), "--oracle", &f.builtin(), "--seed", "1",
        "--out", &f.path("out"), "--repetitions", "2", "--format", "tabular", "--contexts", "S_FW",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(Path::new(&f.path("out/importance.csv")).exists());
    assert!(!Path::new(&f.path("out/importance.json")).exists());
    assert!(!Path::new(&f.path("out/plots")).exists());
}

#[test]
fn constant_external_oracle_has_zero_importance() {
    let f = Fixture::new(60, 6);
    let o = capfi(&[
        "importance", "--dataset", &f.path("m.json"), "--oracle", &constant_oracle(0.9), "--seed", "2",
        "--out", &f.path("out"), "--contexts", "S_FW,S_C ∪ S_NC", "--repetitions", "4", "--metrics", "acc,f1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = ImportanceReport::from_json(&std::fs::read_to_string(f.path("out/importance.json")).unwrap()).unwrap();
    assert_eq!(r.records.len(), 2 * 4 * 2);
    for rec in &r.records {
        assert_eq!(rec.pi, 0.0);
        let b = capfi::render::box_plot_data(rec).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (0.0, 0.0, 0.0));
    }
    assert_eq!(r.header.oracles[0].name, "constant");
}

#[test]
fn served_weights_match_the_builtin_oracle() {
    let f = Fixture::new(120, 7);
    let t = capfi(&["train", "--dataset", &f.path("m.json"), "--out", &f.path("w.json"), "--epochs", "40", "--name", "w"]);
    assert!(t.status.success(), "{}", stderr(&t));
    std::fs::write(f.path("w_cfg.json"), format!(r#"{{"weights":"{}","name":"inproc"}}"#, f.path("w.json"))).unwrap();
    let run = |oracle: &str, out: &str| {
        let o = capfi(&[
            "importance", "--dataset", &f.path("m.json"), "--oracle", oracle, "--seed", "5", "--out", &f.path(out),
            "--contexts", "S_FW, S_C ∪ S_NC", "--repetitions", "3",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        ImportanceReport::from_json(&std::fs::read_to_string(f.path(&format!("{out}/importance.json"))).unwrap()).unwrap()
    };
    let inproc = run(&format!("builtin:{}", f.path("w_cfg.json")), "a");
    let served = run(&format!("exec:{BIN} serve-oracle --weights {}", f.path("w.json")), "b");
    assert_eq!(inproc.records.len(), served.records.len());
    for (a, b) in inproc.records.iter().zip(&served.records) {
        assert_eq!((a.context.as_str(), a.feature, a.metric), (b.context.as_str(), b.feature, b.metric));
        assert_eq!(a.shuffle_digest, b.shuffle_digest);
        assert!((a.pi - b.pi).abs() < 1e-12, "{} {} {}: {} vs {}", a.context, a.feature, a.metric, a.pi, b.pi);
    }
}

#[test]
fn failing_external_oracle_is_a_runtime_error() {
    let f = Fixture::new(40, 8);
    let o = capfi(&["baseline", "--dataset", &f.path("m.json"), "--oracle", "exec:exit 3", "--seed", "1", "--out", &f.path("o")]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn layout_mismatch_is_a_config_error() {
    let f = Fixture::new(80, 9);
    let t = capfi(&["train", "--dataset", &f.path("m.json"), "--out", &f.path("w.json"), "--epochs", "5", "--inputs", "bbox,speed"]);
    assert!(t.status.success(), "{}", stderr(&t));
    std::fs::write(f.path("w_cfg.json"), format!(r#"{{"weights":"{}"}}"#, f.path("w.json"))).unwrap();
    let o = capfi(&[
        "baseline", "--dataset", &f.path("m.json"), "--oracle", &format!("builtin:{}", f.path("w_cfg.json")),
        "--seed", "1", "--out", &f.path("o"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("layout"), "{}", stderr(&o));
    let ok = capfi(&[
        "baseline", "--dataset", &f.path("m.json"), "--oracle", &format!("builtin:{}", f.path("w_cfg.json")),
        "--seed", "1", "--out", &f.path("o"), "--inputs", "speed,bbox",
    ]);
    assert!(ok.status.success(), "{}", stderr(&ok));
}

#[test]
fn cross_reports_deltas_and_rejects_empty_sets() {
    let f = Fixture::new(150, 10);
    let o = capfi(&[
        "cross", "--dataset", &f.path("m.json"), "--oracle", &f.builtin(), "--oracle", &constant_oracle(0.3),
        "--seed", "4", "--out", &f.path("out"), "--source", "S_C ∪ S_Dec", "--donor", "S_Const", "--feature", "speed",
        "--repetitions", "6",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: CrossReport = serde_json::from_str(&std::fs::read_to_string(f.path("out/cross.json")).unwrap()).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert_eq!(r.repetitions, 6);
    let constant = r.rows.iter().find(|row| row.model == "constant").unwrap();
    for m in Metric::ALL {
        assert_eq!(constant.delta.get(m), Some(0.0));
    }
    assert_eq!(std::fs::read_to_string(f.path("out/cross.csv")).unwrap().lines().count(), 3);

    let empty = capfi(&[
        "cross", "--dataset", &f.path("m.json"), "--oracle", &f.builtin(), "--seed", "4", "--out", &f.path("o2"),
        "--source", "S_C", "--donor", "S_C ∩ S_NC", "--feature", "speed",
    ]);
    assert_eq!(empty.status.code(), Some(2));
    assert!(stderr(&empty).contains("empty"), "{}", stderr(&empty));
}

#[test]
fn synth_round_trip_and_seed_variation() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    std::fs::write(p("s1.json"), r#"{"n_samples":90,"seed":1,"dependency":{"speed":1.0}}"#).unwrap();
    std::fs::write(p("s2.json"), r#"{"n_samples":90,"seed":2,"dependency":{"speed":1.0}}"#).unwrap();
    let o = capfi(&["synth", &p("s1.json"), "--out", &p("a/m1.json")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("S_Stopped"));
    let m = load_manifest(p("a/m1.json")).unwrap();
    assert_eq!(m.len(), 90);
    assert!(capfi(&["synth", &p("s2.json"), "--out", &p("m2.json")]).status.success());
    assert_ne!(std::fs::read(p("a/m1.json")).unwrap(), std::fs::read(p("m2.json")).unwrap());

    let side = capfi(&["synth", &p("s1.json"), "--out", &p("side.json"), "--sidecar"]);
    assert!(side.status.success(), "{}", stderr(&side));
    assert!(Path::new(&p("side.embeddings.bin")).exists());
    let ms = load_manifest(p("side.json")).unwrap();
    assert_eq!(ms.labels(), m.labels());

    std::fs::write(p("bad.json"), r#"{"n_samples":10,"seed":1,"noise":1.5}"#).unwrap();
    assert_eq!(capfi(&["synth", &p("bad.json"), "--out", &p("x.json")]).status.code(), Some(2));
}

#[test]
fn synth_prints_fixture_cardinalities() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{
        "n_samples": 892, "seed": 3, "allocation": "exact", "positive_fraction": 0.2892376681614350,
        "dependency": {"bbox": 0.5, "speed": 0.5}, "noise": 0.1,
        "tags": {
            "roadway": {"four_way": 0.4943946188340807, "midblock": 0.1838565022421525, "t_junction": 0.1154708520179372, "other": 0.2062780269058296},
            "light": {"red": 0.1042600896860987, "yellow": 0.0414798206278027, "green": 0.2713004484304933, "none": 0.5829596412556053},
            "crosswalk": {"zebra": 0.2679372197309417, "non_zebra": 0.7320627802690583},
            "proximity": {"close": 0.0661434977578475, "medium": 0.6076233183856502, "far": 0.3262331838565022},
            "ego_speed_state": {"accelerating": 0.2421524663677130, "constant": 0.3340807174887892, "stopped": 0.2073991031390135, "decelerating": 0.2163677130044843}
        }
    }"#;
    let sp = dir.path().join("tags.json");
    std::fs::write(&sp, spec).unwrap();
    let o = capfi(&["synth", sp.to_str().unwrap(), "--out", dir.path().join("m.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let column: Vec<usize> = table
        .lines()
        .filter(|l| l.contains("| S_"))
        .map(|l| l.rsplit('|').next().unwrap().trim().parse().unwrap())
        .collect();
    assert_eq!(column, [258, 634, 441, 164, 103, 93, 37, 242, 239, 653, 59, 542, 291, 216, 298, 185, 193]);
}
