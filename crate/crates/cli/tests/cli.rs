use std::path::Path;
use std::process::Command as Process;

use cosim_cli::commands::{converge_table, run_table, stability_table};
use cosim_cli::{RunConfig, Table};

fn cosim(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_cosim")).args(args).output().unwrap()
}

fn cfg(text: &str) -> RunConfig {
    RunConfig::parse(text).unwrap()
}

#[test]
fn plain_run_has_state_and_energy_columns() {
    let t = run_table(&cfg("t_end = 2")).unwrap();
    assert_eq!(t.columns, ["t", "x_1", "x_2", "E"]);
    assert_eq!(t.rows.len(), 10 * 10 + 1);
    assert!(t.spans.is_empty());
    assert_eq!(t.rows.last().unwrap()[0], 2.0);
    assert!(t.header[0].starts_with("cosim "));
}

#[test]
fn negotiated_run_adds_power_column_and_spans() {
    let t = run_table(&cfg("scheme = power_negotiated\nextrap = 1\nhermite = true\nt_end = 4")).unwrap();
    assert_eq!(t.columns, ["t", "x_1", "x_2", "E", "P_hat_1"]);
    assert!(!t.spans.is_empty());
    let csv = t.to_csv();
    assert!(csv.lines().any(|l| l.starts_with("# span: block=")));
}

#[test]
fn balance_corrected_run_adds_balance_columns() {
    let t = run_table(&cfg("scheme = balance_corrected\nt_end = 2")).unwrap();
    assert_eq!(t.columns, ["t", "x_1", "x_2", "E", "dE_1", "dE_2"]);
}

#[test]
fn written_trace_parses_back_exactly() {
    for text in ["t_end = 3", "scheme = power_negotiated\nextrap = 1\nhermite = true\nt_end = 6"] {
        let t = run_table(&cfg(text)).unwrap();
        let back = Table::parse(&t.to_csv()).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.header, t.header);
        assert_eq!(back.spans, t.spans);
        assert_eq!(back.footer, t.footer);
        let bits = |t: &Table| -> Vec<u64> { t.rows.iter().flatten().map(|x| x.to_bits()).collect() };
        assert_eq!(bits(&back), bits(&t));
    }
}

#[test]
fn header_reproduces_the_run() {
    let original = run_table(&cfg("model = linear-mutual\nscheme = balance_corrected\nextrap = 1\nH = 0.1\nt_end = 2"))
        .unwrap()
        .to_csv();
    let parsed = Table::parse(&original).unwrap();
    let echo: String = parsed
        .header_settings()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    let rerun = run_table(&cfg(&echo)).unwrap().to_csv();
    assert_eq!(rerun, original);
}

#[test]
fn converge_reports_rows_and_slope() {
    let t = converge_table(&cfg("extrap = 1")).unwrap();
    assert_eq!(t.rows.len(), 5);
    assert_eq!(&t.columns[..2], ["H", "error"]);
    let slope = t.footer_value("slope").unwrap();
    assert!((1.7..=2.3).contains(&slope), "{slope}");
}

#[test]
fn converge_on_unidirectional_keeps_first_component_exact() {
    let t = converge_table(&cfg("model = linear-uni\nt_end = 2")).unwrap();
    for e in t.column("error_x_1").unwrap() {
        assert!(e <= 1e-10, "{e}");
    }
}

#[test]
fn stability_footer_summarizes_energy() {
    let plain = stability_table(&cfg("extrap = 1\nt_end = 75")).unwrap();
    assert!(plain.footer_value("drift").unwrap() > 0.05);
    let pn = stability_table(&cfg("scheme = power_negotiated\nextrap = 1\nhermite = true\nt_end = 75")).unwrap();
    assert!(pn.footer_value("drift").unwrap() <= 0.02);
    assert!(pn.footer_value("span_count").unwrap() > 0.0);
    assert_eq!(pn.rows.len(), 376);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let out_s = out.to_str().unwrap();
    let args = ["run", "--scheme", "power_negotiated", "--extrap", "1", "--hermite", "--t-end", "6", "--out", out_s];
    assert!(cosim(&args).status.success());
    let first = std::fs::read(&out).unwrap();
    assert!(cosim(&args).status.success());
    assert_eq!(std::fs::read(&out).unwrap(), first);
    assert!(!Path::new(&format!("{out_s}.partial")).exists());
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "H = 0.1\nt_end = 1\nscheme = balance_corrected\n").unwrap();
    let out = cosim(&["run", "--config", path.to_str().unwrap(), "--scheme", "plain"]);
    assert!(out.status.success());
    let t = Table::parse(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let settings: Vec<(&str, &str)> = t.header_settings().collect();
    assert!(settings.contains(&("scheme", "plain")));
    assert!(settings.contains(&("H", "0.1")));
    assert_eq!(t.rows.len(), 101);
}

#[test]
fn failures_exit_nonzero_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never.csv");
    // a tolerance no step size can meet aborts the simulation
    let r = cosim(&[
        "run", "--set", "abs_tol=1e-300", "--set", "rel_tol=0", "--t-end", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(!r.status.success());
    assert!(!out.exists());
    assert!(!dir.path().join("never.csv.partial").exists());

    let r = cosim(&["run", "--H", "-1"]);
    assert!(!r.status.success());
    let msg = String::from_utf8_lossy(&r.stderr);
    assert!(msg.contains("`H`") && msg.contains("positive"), "{msg}");

    let cfg_path = dir.path().join("bad.cfg");
    std::fs::write(&cfg_path, "model = spring-mass\nspeed = 3\n").unwrap();
    let r = cosim(&["run", "--config", cfg_path.to_str().unwrap()]);
    assert!(!r.status.success());
    let msg = String::from_utf8_lossy(&r.stderr);
    assert!(msg.contains("line 2") && msg.contains("speed"), "{msg}");
}
