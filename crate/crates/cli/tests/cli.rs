mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Stdio};

use common::{ok, read_json, s, thermosynth, BIN};

/// Toy preset cut down to a handful of steps.
const TINY: &[&str] = &[
    "--toy",
    "--seed",
    "3",
    "--set",
    "train.gan.max_steps=4",
    "--set",
    "train.gan.batch_size=4",
    "--set",
    "train.inversion.max_steps=3",
    "--set",
    "train.inversion.batch_size=4",
    "--set",
    "probe.probes=4",
    "--set",
    "privacy.frames=20",
];

fn tiny(args: &[&str]) -> serde_json::Value {
    ok(&[TINY, args].concat())
}

fn pipeline(root: &Path) {
    let p = |name: &str| root.join(name);
    tiny(&["synth-data", "--out", s(&p("data")), "--count", "8"]);
    tiny(&["train-gan", "--data", s(&p("data")), "--out", s(&p("gan"))]);
    tiny(&["train-inversion", "--data", s(&p("data")), "--bundle", s(&p("gan/model.bundle")), "--out", s(&p("inv"))]);
}

#[test]
fn full_pipeline_and_rerun_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    for f in ["data/manifest.json", "gan/history.jsonl", "inv/history.jsonl", "gan/model.bundle", "inv/model.bundle"] {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        assert!(x == y, "{f} differs between identical runs");
    }
    let history = std::fs::read_to_string(a.path().join("gan/history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(history.lines().next().unwrap()).unwrap();
    assert_eq!(first["phase"], "gan");
    assert_eq!(first["step"], 1);
    assert!(first["d_total"].is_number() && first["g_total"].is_number());

    let p = |name: &str| a.path().join(name);
    let bundle = p("inv/model.bundle");
    let lat = tiny(&["build-latents", "--data", s(&p("data")), "--bundle", s(&bundle), "--out", s(&p("lat"))]);
    assert_eq!(lat["codes"], 8);
    let latents = p("lat/latents.json");

    let fid = tiny(&["eval-fid", "--real", s(&p("data")), "--bundle", s(&bundle), "--out", s(&p("fid"))]);
    assert!(fid["fid"].as_f64().unwrap() > 0.0);
    let same = tiny(&["eval-fid", "--real", s(&p("data")), "--fake", s(&p("data")), "--out", s(&p("fid_same"))]);
    assert!(same["fid"].as_f64().unwrap().abs() < 1e-4);

    let grid = tiny(&[
        "grid", "--bundle", s(&bundle), "--latents", s(&latents), "--data", s(&p("data")), "--codes", "2", "--heatmaps", "3",
        "--out", s(&p("grid")),
    ]);
    assert_eq!((grid["rows"].as_u64(), grid["cols"].as_u64()), (Some(2), Some(3)));
    assert!(p("grid/grid.png").exists());
    assert_eq!(read_json(&p("grid/grid.json"))["header_column"], "source images");

    let probe = tiny(&["probe", "--bundle", s(&bundle), "--latents", s(&latents), "--out", s(&p("probe"))]);
    assert!(probe["direction_rate"].as_f64().is_some());
    assert_eq!(read_json(&p("probe/probe.json"))["outcomes"].as_array().unwrap().len(), 4);

    tiny(&["privacy", "--out", s(&p("privacy"))]);
    let csv = std::fs::read_to_string(p("privacy/privacy.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("resolution,accuracy,degree"));
    assert_eq!(csv.lines().count(), 4);

    let bench = tiny(&["bench", "--bundle", s(&bundle), "--batch", "1,2", "--iters", "1", "--warmup", "0", "--out", s(&p("bench"))]);
    assert_eq!(bench["rows"].as_array().unwrap().len(), 2);

    let pre = tiny(&["preprocess", "--data", s(&p("data")), "--out", s(&p("pre"))]);
    assert_eq!(pre["samples"], 8);
    let index = read_json(&p("pre/index.json"));
    let e0 = &index["entries"][0];
    assert_eq!(e0["heatmap"]["shape"], serde_json::json!([6, 8]));
    assert_eq!(std::fs::metadata(p("pre").join(e0["heatmap"]["path"].as_str().unwrap())).unwrap().len(), 6 * 8 * 4);

    let manifest = read_json(&p("gan/run_manifest.json"));
    assert_eq!(manifest["command"], "train-gan");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["train"]["gan"]["max_steps"], 4);
    assert_eq!(manifest["outputs"]["history"], "history.jsonl");
}

#[test]
fn stop_and_resume_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    tiny(&["synth-data", "--out", s(&p("data")), "--count", "8"]);
    tiny(&["train-gan", "--data", s(&p("data")), "--out", s(&p("full"))]);
    tiny(&["train-gan", "--data", s(&p("data")), "--out", s(&p("part")), "--stop-at", "2"]);
    let resumed = tiny(&["train-gan", "--data", s(&p("data")), "--out", s(&p("part")), "--resume", s(&p("part/model.bundle"))]);
    assert_eq!(resumed["steps_run"], 2);
    for f in ["history.jsonl", "model.bundle"] {
        assert!(std::fs::read(p("full").join(f)).unwrap() == std::fs::read(p("part").join(f)).unwrap(), "{f}");
    }
}

fn error_json(stderr: &[u8]) -> serde_json::Value {
    let text = String::from_utf8_lossy(stderr);
    serde_json::from_str(text.lines().last().expect("error line")).unwrap()
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = thermosynth(&["train-gan", "--data", "/nonexistent/data", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out.stderr);
    assert_eq!(err["kind"], "io");
    assert!(err["error"].as_str().unwrap().contains("nonexistent"));

    let out = thermosynth(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out.stderr)["kind"], "usage");

    let out = thermosynth(&["--set", "train.gan.learning_rate=1", "print-config"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out.stderr)["kind"], "config");

    let out = thermosynth(&["privacy", "--detector", "external", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn print_config_honours_overrides_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.json");
    std::fs::write(&file, r#"{"train": {"gan": {"batch_size": 2}}}"#).unwrap();
    let out = thermosynth(&["--toy", "--config", s(&file), "--set", "probe.probes=5", "--seed", "9", "print-config"]);
    assert!(out.status.success());
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["train"]["gan"]["batch_size"], 2);
    assert_eq!(cfg["probe"]["probes"], 5);
    assert_eq!((cfg["seed"].as_u64(), cfg["train"]["seed"].as_u64()), (Some(9), Some(9)));
    assert_eq!(cfg["model"]["heatmap_height"], 6);
}

#[test]
fn unavailable_external_detector_reports_skipped_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    ok(&["--set", "privacy.frames=3", "privacy", "--detector", "external", "--detector-cmd", "/nonexistent/detector", "--out", s(&out)]);
    let csv = std::fs::read_to_string(out.join("privacy.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",skipped,skipped")), "{csv}");
}

fn http_get(addr: &str, path: &str) -> (String, Vec<u8>) {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut buf = Vec::new();
    stream.read_to_end(&mut buf).unwrap();
    let split = buf.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    (String::from_utf8_lossy(&buf[..split]).into_owned(), buf[split + 4..].to_vec())
}

#[test]
fn serve_answers_control_requests() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    pipeline(dir.path());
    tiny(&["build-latents", "--data", s(&p("data")), "--bundle", s(&p("inv/model.bundle")), "--out", s(&p("lat"))]);

    let (bundle, latents, data, out) = (p("inv/model.bundle"), p("lat/latents.json"), p("data"), p("serve"));
    let args = [
        TINY,
        &[
            "serve", "--bundle", s(&bundle), "--latents", s(&latents), "--replay", s(&data),
            "--loop", "--port", "0", "--duration", "3", "--out", s(&out),
        ],
    ]
    .concat();
    let mut child = Command::new(BIN).args(&args).env("RUST_LOG", "warn").stdout(Stdio::piped()).spawn().unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let listening: serde_json::Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    let url = listening["listening"].as_str().unwrap();
    let addr = url.trim_start_matches("http://").to_string();
    assert!(listening["ws"].as_str().unwrap().ends_with("/ws"));

    let (head, body) = http_get(&addr, "/codes");
    assert!(head.starts_with("HTTP/1.1 200"), "{head}");
    let codes: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(codes.as_array().unwrap().len(), 8);
    let (head, _) = http_get(&addr, "/codes/99/preview.png");
    assert!(head.starts_with("HTTP/1.1 404"), "{head}");
    std::thread::sleep(std::time::Duration::from_millis(500));
    let (_, body) = http_get(&addr, "/stats");
    let stats: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert!(stats["frames_out"].as_u64().unwrap() > 0);

    assert!(child.wait().unwrap().success());
    let summary: serde_json::Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert!(summary["frames_out"].as_u64().unwrap() > 0);
    assert!(p("serve/serve_stats.json").exists());
}
