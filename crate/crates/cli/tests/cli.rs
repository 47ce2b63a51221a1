use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kdlandmark::io::{self, Checkpoint};
use kdlandmark::pipeline::{generate_synthetic, Dataset, SyntheticSpec};
use kdlandmark::regressor::{Layer, MlpParams, Regressor};
use kdlandmark::{Activation, MlpSpec};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kdlandmark"));
    c.env_remove("KDLANDMARK_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr_error(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not a JSON line: {text}"))
}

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        k: 6,
        n_train: 60,
        n_test: 20,
        latent_modes: 3,
        noise_sigma: 0.02,
        occlusion_fraction: 0.1,
        seed: 3,
    }
}

fn write_dataset(dir: &Path, spec: &SyntheticSpec) -> PathBuf {
    let ds: Dataset<f64> = generate_synthetic(spec).unwrap();
    let path = dir.join("dataset.json");
    io::save_dataset(&ds, &path).unwrap();
    path
}

const FAST: &[&str] = &["--teacher-epochs", "2", "--student-epochs", "2"];

#[test]
fn loss_sweep_reports_the_boundary_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let res = run(&["loss-sweep", "--gt", "0", "--te", "0.4", "--grid", "100", "--out", p(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("pr,region,omega,aloss,kd_loss"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 101);
    let at = |pr: f64| {
        rows.iter()
            .find(|r| (r[0].parse::<f64>().unwrap() - pr).abs() < 1e-12)
            .unwrap()
            .clone()
    };
    let boundary = at(0.16);
    assert!((boundary[3].parse::<f64>().unwrap() + 0.12).abs() < 1e-12, "{boundary:?}");
    let inside = at(0.3);
    assert_eq!(inside[1], "negative");
    assert!((inside[3].parse::<f64>().unwrap() + 0.05).abs() < 1e-12);
    assert_eq!(at(0.0)[3].parse::<f64>().unwrap(), 0.0);
    // the resolved configuration is echoed on stdout
    let echo: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(echo["command"], "loss-sweep");
}

#[test]
fn eval_of_a_perfect_model_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        noise_sigma: 0.0,
        occlusion_fraction: 0.0,
        ..small_spec()
    };
    let data = write_dataset(dir.path(), &spec);
    let d = 2 * spec.k;
    let mut weights = vec![0.0; d * d];
    for i in 0..d {
        weights[i * d + i] = 1.0;
    }
    let model_spec = MlpSpec::new(d, vec![], d, Activation::Relu, 0);
    let params = MlpParams {
        layers: vec![Layer {
            in_dim: d,
            out_dim: d,
            weights,
            bias: vec![0.0; d],
        }],
    };
    let model = Regressor::from_parts(model_spec, params).unwrap();
    let ckpt = dir.path().join("identity.json");
    io::save_checkpoint(&Checkpoint { model, adam_state: None }, &ckpt).unwrap();

    let eval = dir.path().join("eval.json");
    let res = run(&["eval", "--model", p(&ckpt), "--data", p(&data), "--out", p(&eval)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&eval).unwrap()).unwrap();
    assert_eq!(v["report"]["nme_percent"], 0.0);
    assert_eq!(v["report"]["fr_percent"], 0.0);
    assert_eq!(v["report"]["n_images"], 20);
    assert_eq!(v["errors"].as_array().unwrap().len(), 20);

    let ced = dir.path().join("ced.csv");
    let svg = dir.path().join("ced.svg");
    let res = run(&[
        "ced", "--from-eval", p(&eval), "--samples", "11", "--out", p(&ced), "--svg", p(&svg),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&ced).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1")), "{text}");
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn ablate_writes_every_row_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), &small_spec());
    let mut csvs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "2")] {
        let out = dir.path().join(name);
        let mut args = vec!["ablate", "--data", p(&data), "--seeds", "5", "--jobs", jobs, "--out", p(&out)];
        args.extend_from_slice(FAST);
        let res = run(&args);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        csvs.push(std::fs::read(out.join("ablation.csv")).unwrap());
        assert!(out.join("ablation_summary.csv").exists());
        assert!(out.join("config.json").exists());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert_eq!(text.lines().count(), 31);
    assert_eq!(text.lines().next(), Some("variant,seed,nme,fr,auc"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string(&small_spec()).unwrap()).unwrap();
    let res = bin()
        .args(["gen-data", "--spec", p(&spec_path), "--seed", "11"])
        .env("KDLANDMARK_OUT", dir.path())
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let ds = io::load_dataset::<f64>(&dir.path().join("gen-data/dataset.json")).unwrap();
    assert_eq!(ds.len(), 80);
    // without the variable or --out the command is a usage error
    let res = run(&["gen-data", "--spec", p(&spec_path)]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn stepwise_flow_produces_a_student() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), &small_spec());
    let path = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let (asm, soft_path, tough, tolerant, student, eval) = (
        path("asm.json"),
        path("soft.json"),
        path("tough.json"),
        path("tolerant.json"),
        path("student.json"),
        path("eval.json"),
    );
    let ok = |args: &[&str]| {
        let res = run(args);
        assert!(res.status.success(), "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
        res
    };
    ok(&["fit-asm", "--data", p(&data), "--out", &asm]);
    ok(&["gen-soft", "--data", p(&data), "--model", &asm, "--m-tilde", "0.9", "--out", &soft_path]);
    let soft = io::load_dataset::<f64>(Path::new(&soft_path)).unwrap();
    assert!(soft.has_soft_labels());
    for (labels, out) in [("hard", &tough), ("soft", &tolerant)] {
        let mut args = vec!["train-teacher", "--data", &soft_path, "--labels", labels, "--out", out];
        args.extend_from_slice(FAST);
        ok(&args);
    }
    let mut args = vec![
        "train-student", "--data", &soft_path, "--tough", &tough, "--tolerant", &tolerant,
        "--variant", "kd_tol", "--out", &student,
    ];
    args.extend_from_slice(FAST);
    let res = ok(&args);
    let stdout = String::from_utf8_lossy(&res.stdout);
    let echo: serde_json::Value = serde_json::from_str(stdout.lines().next().unwrap()).unwrap();
    assert_eq!(echo["resolved_config"]["student_epochs"], 2);
    ok(&[
        "eval", "--model", &student, "--data", &soft_path, "--split", "train", "--norm-pair", "0,3",
        "--out", &eval,
    ]);
}

#[test]
fn run_writes_the_full_layout() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), &small_spec());
    let out = dir.path().join("run");
    let mut args = vec!["run", "--data", p(&data), "--out", p(&out)];
    args.extend_from_slice(FAST);
    let res = run(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in [
        "config.json",
        "shape_model.json",
        "teacher_preds.json",
        "teacher_tough.json",
        "teacher_tolerant.json",
        "student.json",
        "ced_student.csv",
        "report.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let res = run(&["loss-sweep", "--out", "x.csv", "--frobnicate"]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(stderr_error(&res)["error"]["kind"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let res = run(&["loss-sweep", "--sigma", "1.5", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(1));
    let e = stderr_error(&res);
    assert_eq!(e["error"]["exit_code"], 1);
    assert!(!out.exists());

    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&[
        "fit-asm", "--data", p(&dir.path().join("missing.json")), "--out", p(&dir.path().join("m.json")),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(stderr_error(&res)["error"]["kind"], "data");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"version":1,"k":2,"input_dim":4,"samples":[{"input":[0,0,0,0],"hard":[[0,0]],"split":"train"}]}"#).unwrap();
    let res = run(&["fit-asm", "--data", p(&bad), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(res.status.code(), Some(2));
    let msg = stderr_error(&res)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("/samples/0/hard"), "{msg}");
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), &small_spec());
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"adam":{"learning_rate":1e300,"beta1":0.9,"beta2":0.999,"decay":0.0,"epsilon":1e-8}}"#).unwrap();
    let res = run(&[
        "train-teacher", "--data", p(&data), "--labels", "hard", "--config", p(&config),
        "--teacher-epochs", "3", "--out", p(&dir.path().join("t.json")),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(stderr_error(&res)["error"]["kind"], "numerical");
}
