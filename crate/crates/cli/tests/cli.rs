use std::net::TcpListener;
use std::path::PathBuf;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn intentbridge() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_intentbridge"));
    cmd.env_remove("INTENTBRIDGE_CONFIG")
        .env_remove("INTENTBRIDGE_BACKEND_URL")
        .env_remove("INTENTBRIDGE_SERVER")
        .env_remove("RUST_BACKTRACE");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evaluate_writes_a_report_with_both_averages() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = run(intentbridge()
        .arg("--config")
        .arg(data("demo.toml"))
        .args(["evaluate", "--system", "proposed", "--dataset"])
        .arg(data("test.jsonl"))
        .arg("--catalog")
        .arg(data("apps.json"))
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("micro"));

    let report = read_json(&out);
    assert_eq!(report["metadata"]["system"], "proposed");
    assert_eq!(report["metadata"]["examples"], 6);
    assert_eq!(report["metadata"]["failed_examples"], 0);
    assert_eq!(report["primary_mode"], "micro");
    // 7 category hits over 11 predicted and 10 gold categories.
    let micro = &report["micro"];
    assert!((micro["precision"].as_f64().unwrap() - 7.0 / 11.0).abs() < 1e-12);
    assert!((micro["recall"].as_f64().unwrap() - 0.7).abs() < 1e-12);
    let macro_p = (0.5 + 1.0 + 0.5 + 1.0 / 3.0 + 1.0 + 1.0) / 6.0;
    assert!((report["macro"]["precision"].as_f64().unwrap() - macro_p).abs() < 1e-12);
}

#[test]
fn evaluate_baseline_and_macro_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = run(intentbridge()
        .arg("--config")
        .arg(data("demo.toml"))
        .args(["evaluate", "--system", "one-stage", "--mode", "macro", "--dataset"])
        .arg(data("test.jsonl"))
        .arg("--catalog")
        .arg(data("apps.json"))
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&out);
    assert_eq!(report["metadata"]["system"], "one-stage");
    assert_eq!(report["primary_mode"], "macro");
}

#[test]
fn missing_catalog_fails_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-catalog.json");
    let o = run(intentbridge()
        .arg("--config")
        .arg(data("demo.toml"))
        .args(["evaluate", "--dataset"])
        .arg(data("test.jsonl"))
        .arg("--catalog")
        .arg(&missing)
        .arg("--out")
        .arg(dir.path().join("r.json")));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no-such-catalog.json"), "{}", stderr(&o));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn unreachable_backend_counts_examples_as_failed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = run(intentbridge()
        .arg("--config")
        .arg(data("demo.toml"))
        .args(["--backend-url", "http://127.0.0.1:9", "evaluate", "--dataset"])
        .arg(data("test.jsonl"))
        .arg("--catalog")
        .arg(data("apps.json"))
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&out);
    assert_eq!(report["metadata"]["failed_examples"], 6);
    assert_eq!(report["micro"]["precision"], 0.0);
    assert_eq!(report["errors"].as_array().unwrap().len(), 6);
}

#[test]
fn select_relations_ranks_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scores.json");
    let o = run(intentbridge()
        .arg("--config")
        .arg(data("demo.toml"))
        .args(["select-relations", "--top", "5", "--corpus"])
        .arg(data("trigger_corpus.jsonl"))
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("selected: xNeed, xWant, isAfter, xIntent, isBefore"));
    let doc = read_json(&out);
    assert_eq!(doc["scores"].as_array().unwrap().len(), 23);
    assert_eq!(doc["aggregation"], "sum_mean_logprob");
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn recommend_talks_to_a_running_service() {
    let port = free_port();
    let url = format!("http://127.0.0.1:{port}");
    let _server = Server(
        intentbridge()
            .arg("--config")
            .arg(data("demo.toml"))
            .args(["serve", "--listen", &format!("127.0.0.1:{port}")])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let deadline = Instant::now() + Duration::from_secs(20);
    while std::net::TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "service did not start");
        std::thread::sleep(Duration::from_millis(50));
    }

    let o = run(intentbridge().args([
        "recommend",
        "--server",
        &url,
        "We are planning to celebrate friend's birthday at a restaurant.",
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("- OpenTable (Food & Drink) [xNeed]"), "{text}");
    assert!(text.contains("OpenTable can help book a table at the restaurant and go to the restaurant."));

    let o = run(intentbridge().args([
        "recommend",
        "--server",
        &url,
        "--json",
        "--relations",
        "xWant",
        "My notebook was broken. I need to get a new one.",
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let resp: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(resp["recommendations"][0]["app"], "Amazon");
    assert_eq!(resp["recommendations"].as_array().unwrap().len(), 1);

    let o = run(intentbridge().args(["recommend", "--server", &url, " "]));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("400"));
}
