//! End-to-end tests of the batch CLI: subcommand plumbing, exit codes,
//! stderr error JSON, file artifacts, and determinism under a fixed seed.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dose_did::baseline::TwoPeriodPanel;
use dose_did::panel::GridConfig;
use dose_did::simlab::{generate, DgpSpec};
use dose_did::twfe::twfe_beta_2p;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dose-did"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn dose-did");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_stdout(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn simulate_is_deterministic_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.csv");
    let p2 = dir.path().join("b.csv");
    let o1 = dir.path().join("a.json");

    run_ok(&[
        "simulate",
        "--family",
        "two-period-exp",
        "--seed",
        "7",
        "--out",
        p1.to_str().unwrap(),
        "--oracle",
        o1.to_str().unwrap(),
    ]);
    run_ok(&[
        "simulate",
        "--family",
        "two-period-exp",
        "--seed",
        "7",
        "--out",
        p2.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());

    let oracle: serde_json::Value = serde_json::from_slice(&fs::read(&o1).unwrap()).unwrap();
    assert_eq!(oracle["family"], "two-period-exp");
    assert!(oracle["twfe_target"].as_f64().unwrap() > 1.0);
    assert_eq!(
        oracle["dose_grid"].as_array().unwrap().len(),
        oracle["att_dd"].as_array().unwrap().len()
    );
}

#[test]
fn decompose_pipeline_reports_identity() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("p.csv");
    run_ok(&[
        "simulate",
        "--family",
        "two-period-exp",
        "--seed",
        "3",
        "--out",
        panel.to_str().unwrap(),
    ]);

    for method in ["mechanical", "wald2x2", "alt-acr", "levels"] {
        let out = run_ok(&[
            "decompose",
            "--method",
            method,
            "--in",
            panel.to_str().unwrap(),
            "--seed",
            "1",
        ]);
        let v = json_stdout(&out);
        assert!(
            v["residual"].as_f64().unwrap().abs() < 1e-8,
            "{method}: residual {}",
            v["residual"]
        );
    }

    // Weight curve artifact for plotting.
    let weights = dir.path().join("w.csv");
    run_ok(&[
        "decompose",
        "--method",
        "mechanical",
        "--in",
        panel.to_str().unwrap(),
        "--emit-weights",
        weights.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    let text = fs::read_to_string(&weights).unwrap();
    assert!(text.starts_with("dose,weight,density"));
    assert!(text.lines().count() > 100);
}

#[test]
fn estimate_mp_star_with_bootstrap_covers_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("staggered.csv");
    // Constant-response design: the scalar slope aggregate is exactly 2.
    run_ok(&[
        "simulate",
        "--family",
        "constant-acr",
        "--theta",
        "2.0",
        "--noise-sd",
        "0.4",
        "--n",
        "200",
        "--seed",
        "5",
        "--out",
        panel.to_str().unwrap(),
    ]);

    let out = run_ok(&[
        "estimate-mp",
        "--in",
        panel.to_str().unwrap(),
        "--aggregate",
        "star",
        "--comparison",
        "nyt",
        "--bootstrap",
        "reps=199,seed=11",
        "--seed",
        "2",
    ]);
    let v = json_stdout(&out);
    let agg = &v["aggregate"];
    let value = agg["value"].as_f64().unwrap();
    let lo = agg["ci_lower"].as_f64().unwrap();
    let hi = agg["ci_upper"].as_f64().unwrap();
    assert!((value - 2.0).abs() < 0.2, "star {value}");
    assert!(lo <= 2.0 && 2.0 <= hi, "CI [{lo}, {hi}] misses 2.0");
    assert!(agg["se"].as_f64().unwrap() > 0.0);
    assert!(!v["cells"].as_array().unwrap().is_empty());
}

#[test]
fn estimate_emits_csv_with_contract_columns() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("p.csv");
    run_ok(&[
        "simulate",
        "--family",
        "two-period-exp",
        "--seed",
        "9",
        "--out",
        panel.to_str().unwrap(),
    ]);
    let out_csv = dir.path().join("est.csv");
    run_ok(&[
        "estimate",
        "--in",
        panel.to_str().unwrap(),
        "--estimand",
        "acr",
        "--assume",
        "strong-pt",
        "--format",
        "csv",
        "--out",
        out_csv.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    let text = fs::read_to_string(&out_csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "estimand,dose,value,se,n_eff,comparison,assumption"
    );
    assert!(lines.next().is_some());
}

#[test]
fn domain_errors_exit_1_with_error_name_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    // Panel without untreated units: level effects are unavailable.
    let csv = dir.path().join("nountreated.csv");
    fs::write(
        &csv,
        "unit,period,dose,outcome\n\
         a,1,0,0.0\na,2,1,1.0\n\
         b,1,0,0.0\nb,2,2,2.0\n\
         c,1,0,0.0\nc,2,3,3.5\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "estimate",
            "--in",
            csv.to_str().unwrap(),
            "--estimand",
            "att",
            "--at",
            "2",
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "NoUntreatedUnits");

    // Usage errors exit 2.
    let out = bin().args(["estimate", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_defaults_yield_same_artifacts_as_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# defaults\nseed=5\nn=60\n").unwrap();

    let via_cfg = dir.path().join("cfg.csv");
    run_ok(&[
        "simulate",
        "--family",
        "four-group-staggered",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        via_cfg.to_str().unwrap(),
    ]);
    let via_flags = dir.path().join("flags.csv");
    run_ok(&[
        "simulate",
        "--family",
        "four-group-staggered",
        "--seed",
        "5",
        "--n",
        "60",
        "--out",
        via_flags.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(&via_cfg).unwrap(), fs::read(&via_flags).unwrap());

    // Flags win over the config file.
    let via_override = dir.path().join("override.csv");
    run_ok(&[
        "simulate",
        "--family",
        "four-group-staggered",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "6",
        "--out",
        via_override.to_str().unwrap(),
    ]);
    assert_ne!(
        fs::read(&via_cfg).unwrap(),
        fs::read(&via_override).unwrap()
    );
}

fn read_csv_columns(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for line in lines {
        for (i, field) in line.split(',').enumerate() {
            cols[i].push(field.parse::<f64>().unwrap_or(f64::NAN));
        }
    }
    (header, cols)
}

#[test]
fn replicate_figure_series() {
    let dir = tempfile::tempdir().unwrap();

    // fig4: the fitted line's slope equals the TWFE coefficient of the
    // same seeded panel, exactly.
    let fig4 = dir.path().join("fig4.csv");
    run_ok(&[
        "replicate",
        "--figure",
        "fig4",
        "--seed",
        "21",
        "--out",
        fig4.to_str().unwrap(),
    ]);
    let (header, cols) = read_csv_columns(&fig4);
    assert_eq!(
        header,
        ["dose", "dy", "cell_mean", "twfe_line", "true_acrt_line"]
    );
    let (panel, _) = generate(&DgpSpec::two_period_exponential(21)).unwrap();
    let two = TwoPeriodPanel::new(&panel, GridConfig::default()).unwrap();
    let beta = twfe_beta_2p(&two).unwrap();
    let (doses, line) = (&cols[0], &cols[3]);
    let (i, j) = {
        let i = 0;
        let j = doses.iter().position(|&d| d != doses[0]).unwrap();
        (i, j)
    };
    let slope = (line[j] - line[i]) / (doses[j] - doses[i]);
    assert!(
        (slope - beta).abs() < 1e-10,
        "fig4 slope {slope} vs beta {beta}"
    );

    // fig5: weight curve peaks within one grid step of the mean dose.
    let fig5 = dir.path().join("fig5.csv");
    run_ok(&[
        "replicate",
        "--figure",
        "fig5",
        "--seed",
        "21",
        "--out",
        fig5.to_str().unwrap(),
    ]);
    let (header, cols) = read_csv_columns(&fig5);
    assert_eq!(header, ["dose", "weight", "density"]);
    let (doses, weights) = (&cols[0], &cols[1]);
    let argmax = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    // The empirical weight curve is a step function that is flat between
    // dose atoms, so "one grid step" means one step of the dose grid
    // (0.5 in this design), not one step of the emission grid.
    let mean_dose = dose_did::numeric::mean(two.doses());
    let pts = &two.grid().points;
    let bracket = pts
        .windows(2)
        .find(|w| w[0] <= mean_dose && mean_dose < w[1]);
    let atom_step = bracket.map_or(0.5, |w| w[1] - w[0]);
    assert!(
        (doses[argmax] - mean_dose).abs() <= atom_step + 1e-12,
        "w1 argmax {} vs mean dose {mean_dose} (atom step {atom_step})",
        doses[argmax]
    );

    // fig6: weights of the four-comparison table sum to one.
    let fig6 = dir.path().join("fig6.csv");
    run_ok(&[
        "replicate",
        "--figure",
        "fig6-decomp",
        "--seed",
        "21",
        "--out",
        fig6.to_str().unwrap(),
    ]);
    let (header, cols) = read_csv_columns(&fig6);
    assert_eq!(
        header,
        ["term_type", "g", "k", "weight", "delta", "beta_twfe"]
    );
    let wsum: f64 = cols[3].iter().sum();
    assert!((wsum - 1.0).abs() < 1e-10, "fig6 weight sum {wsum}");
}

#[test]
fn threads_env_var_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let res = bin()
        .env("DOSE_DID_THREADS", "2")
        .args([
            "simulate",
            "--family",
            "two-period-exp",
            "--seed",
            "1",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(res.status.success());
    assert!(out.exists());
}

#[test]
fn decompose_mp_emit_terms() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("stag.csv");
    run_ok(&[
        "simulate",
        "--family",
        "four-group-staggered",
        "--seed",
        "2",
        "--out",
        panel.to_str().unwrap(),
    ]);
    let terms = dir.path().join("terms.csv");
    let out = run_ok(&[
        "decompose-mp",
        "--in",
        panel.to_str().unwrap(),
        "--emit-terms",
        terms.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    let v = json_stdout(&out);
    assert!(v["residual"].as_f64().unwrap().abs() < 1e-8);
    let text = fs::read_to_string(&terms).unwrap();
    assert!(text.starts_with("term_type,g,k,weight,delta,nuisance_dynamics,nuisance_heterogeneity"));
}
