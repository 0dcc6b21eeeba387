use std::path::Path;
use std::process::{Command, Output};

use cmgnd::sim::sample_mixture;
use cmgnd::{GndParams, MixtureModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn cmgnd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmgnd")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Writes a date,value CSV drawn from a two-component mixture.
fn write_sample(path: &Path, n: usize) {
    let m = MixtureModel::unconstrained(
        vec![0.86, 0.14],
        vec![GndParams::new(0.02, 1.35, 1.38).unwrap(), GndParams::new(0.02, 1.35, 0.79).unwrap()],
    )
    .unwrap();
    let (x, _) = sample_mixture(&m, n, &mut ChaCha8Rng::seed_from_u64(3));
    let mut text = String::from("date,ret\n");
    for (i, v) in x.iter().enumerate() {
        text.push_str(&format!("d{i},{v}\n"));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn returns_and_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("p.csv");
    std::fs::write(&prices, "date,ABC\n2020-01-01,100\n2020-01-02,105\n2020-01-03,100\n2020-01-06,101\n2020-01-07,99\n2020-01-08,102\n").unwrap();
    let out = cmgnd(&["returns", prices.to_str().unwrap(), "--describe"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let first = text.lines().nth(1).unwrap();
    assert!(first.starts_with("2020-01-02,4.8790164169432"), "{first}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("JB"));

    std::fs::write(&prices, "date,ABC\na,100\nb,-1\n").unwrap();
    let out = cmgnd(&["returns", prices.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("index 1"));
}

#[test]
fn fit_then_density_integrates_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("r.csv");
    write_sample(&data, 800);
    let result = dir.path().join("fit.json");
    let out = cmgnd(&["fit", data.to_str().unwrap(), "--k", "2", "--constraints", "CCU", "--out", result.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fit: Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    let comps = &fit["model"]["components"];
    assert_eq!(comps[0]["mu"], comps[1]["mu"]);
    assert_eq!(comps[0]["sigma"], comps[1]["sigma"]);

    let model = dir.path().join("model.json");
    std::fs::write(&model, fit["model"].to_string()).unwrap();
    let out = cmgnd(&["density", "--model", model.to_str().unwrap(), "--grid", "-40,40,20001"]);
    assert_eq!(code(&out), 0);
    let rows: Vec<(f64, f64)> = stdout(&out)
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',').map(|v| v.parse::<f64>().unwrap());
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect();
    let area: f64 = rows.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    assert!((area - 1.0).abs() < 1e-4, "{area}");
}

#[test]
fn select_reports_consistent_bic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("r.csv");
    write_sample(&data, 600);
    let report = dir.path().join("sel.json");
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "n_starts = 2\nseed = 4\n").unwrap();
    let out = cmgnd(&[
        "select",
        data.to_str().unwrap(),
        "--k",
        "2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = stdout(&out);
    assert_eq!(table.lines().count(), 8);
    assert_eq!(table.matches('*').count(), 1);

    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let n = json["n_obs"].as_f64().unwrap();
    for e in json["entries"].as_array().unwrap() {
        let p = e["n_params"].as_f64().unwrap();
        let ll = e["log_lik"].as_f64().unwrap();
        let bic = e["bic"].as_f64().unwrap();
        assert!((p * n.ln() - 2.0 * ll - bic).abs() < 1e-9);
    }
}

#[test]
fn sample_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    std::fs::write(
        &model,
        r#"{"weights":[0.5,0.5],"components":[{"mu":0,"sigma":1,"nu":2},{"mu":5,"sigma":1,"nu":1}]}"#,
    )
    .unwrap();
    let a = cmgnd(&["sample", "--model", model.to_str().unwrap(), "--n", "50", "--seed", "9"]);
    let b = cmgnd(&["sample", "--model", model.to_str().unwrap(), "--n", "50", "--seed", "9"]);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a).lines().count(), 51);
    assert_eq!(a.stdout, b.stdout);

    let scenario = dir.path().join("sc.toml");
    std::fs::write(&scenario, "true_spec = \"UCC\"\noverlap = \"low\"\nn = 200\nseed = 1\n[fit]\nn_starts = 1\n").unwrap();
    let json = dir.path().join("out.json");
    let out = cmgnd(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--experiment",
        "bic",
        "--reps",
        "2",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("true_spec,overlap,n,reps,candidate,wins,proportion"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["experiment"], "bic");
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("r.csv");
    std::fs::write(&data, "date,x\na,1\nb,2\nc,3\n").unwrap();
    assert_eq!(code(&cmgnd(&["fit", data.to_str().unwrap(), "--k", "2"])), 1);
    assert_eq!(code(&cmgnd(&["fit", "/nonexistent.csv", "--k", "2"])), 1);
    assert_eq!(code(&cmgnd(&["fit"])), 1);
    assert_eq!(code(&cmgnd(&["density", "--model", "/nonexistent.json", "--grid", "0,1,2"])), 1);
    assert_eq!(code(&cmgnd(&["--help"])), 0);
}
