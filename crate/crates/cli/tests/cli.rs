use std::process::{Command, Output};

use skyrmion_lab::energy::EnergyBreakdown;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skyrmion-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_with_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skyrmion-lab"))
        .args(args)
        .env("SKYRMION_LAB_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn energy_json_round_trips() {
    let o = run(&[
        "energy",
        "--family",
        "skyrmion:r=0.5",
        "--r",
        "0.5",
        "--N",
        "129",
        "--S",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let b = EnergyBreakdown::from_json(&text).unwrap();
    assert_eq!(b.q_int, -1);
    assert_eq!((b.n, b.s, b.r), (129, 10.0, 0.5));
    assert_eq!(b.to_json() + "\n", text);
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let args = ["energy", "--family", "meromorphic:k=2,a=0.1i", "--N", "257", "--S", "8"];
    let one = run_with_threads(&args, "1");
    let four = run_with_threads(&args, "4");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = run_with_threads(&["energy", "--family", "homogeneous"], "zero");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nfamily = skyrmion:r=0.5\nr = 0.5\nN = 65\nS = 8\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let from_file = EnergyBreakdown::from_json(&stdout(&run(&["energy", "--config", cfg]))).unwrap();
    assert_eq!((from_file.n, from_file.r), (65, 0.5));

    let overridden = EnergyBreakdown::from_json(&stdout(&run(&["energy", "--config", cfg, "--N", "129"]))).unwrap();
    assert_eq!(overridden.n, 129);
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "family = homogeneous\nradius = 3\n").unwrap();
    let o = run(&["energy", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown key"));

    let missing = dir.path().join("missing.cfg");
    assert_eq!(
        run(&["energy", "--config", missing.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["energy", "--family", "bogus"]).status.code(), Some(2));
    assert_eq!(run(&["energy"]).status.code(), Some(2));
    assert_eq!(
        run(&["energy", "--family", "homogeneous", "--r", "-1"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["sweep", "--r", ""]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--r", "0.5,1.5"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn moduli_refuses_k_one() {
    let o = run(&["moduli", "--k", "1", "--a", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("distorted"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("no/such/dir/e.json");
    let o = run(&["energy", "--family", "homogeneous", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn moduli_scan_reports_expected_counts() {
    let o = run(&["moduli", "scan", "--k", "2", "--N", "257"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ratio,a_abs,count,nested,resolved,expected"));
    let counts: Vec<&str> = lines.map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(counts, ["4", "1"]);
}

#[test]
fn moduli_writes_figure_files() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("z.svg");
    let csv = dir.path().join("z.csv");
    let o = run(&[
        "moduli",
        "--k",
        "-2",
        "--a",
        "0.1i",
        "--N",
        "257",
        "--svg",
        svg.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("resolved=true"));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert!(std::fs::read_to_string(&csv)
        .unwrap()
        .starts_with("set,component,x1,x2"));
}

#[test]
fn sweep_writes_csv() {
    let o = run(&["sweep", "--r", "0.5", "--k", "-1,0", "--L", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("r,k,scale,E,theorem_value,gap\n"));
    assert_eq!(text.lines().count(), 3);
    assert!(stderr(&o).contains("within 2%"));
}

#[test]
fn homogeneous_stability_verdicts() {
    let stable = stdout(&run(&["stability", "--r", "0.8", "--h", "0.2"]));
    assert!(stable.contains("stable (all probes positive)"), "{stable}");
    let unstable = stdout(&run(&["stability", "--r", "0.8", "--h", "-0.1"]));
    assert!(unstable.contains("unstable (witness"), "{unstable}");
}

#[test]
fn flow_stability_separates_r_below_and_above_one() {
    let low = stdout(&run(&[
        "stability",
        "--r",
        "0.5",
        "--family",
        "skyrmion:r=0.5",
        "--N",
        "65",
    ]));
    assert!(low.contains("stable under flow"), "{low}");
    let high = stdout(&run(&[
        "stability",
        "--r",
        "1.5",
        "--family",
        "skyrmion:r=1.5",
        "--N",
        "65",
    ]));
    assert!(high.contains(" unstable:"), "{high}");
}
