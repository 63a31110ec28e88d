use std::fs;
use std::path::Path;
use std::process::Command as Process;

use goal_calib::bayes::{write_chain_csv, ChainRecord};
use goal_calib::fem::Field;
use goal_calib::Mesh;
use goal_calib::goal::ErrorEstimateReport;
use goal_calib_cli::{parse_config_str, run_experiment, Command, RunOptions, RunStatus};

const SMALL_ELLIPTIC: &str = "application = \"elliptic\"
[mesh]
nx = 12
ny = 12
[mcmc]
chains = 1
max_samples = 50
seed = 7
";

fn files_under(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel: Vec<String> = path
                    .strip_prefix(root)
                    .unwrap()
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect();
                out.push(rel.join("/"));
            }
        }
    }
    out.sort();
    out
}

fn assert_manifest_complete(dir: &Path, manifest: &goal_calib_cli::RunManifest) {
    let mut listed: Vec<String> = manifest.artifacts.iter().map(|a| a.path.clone()).collect();
    listed.push("manifest.json".into());
    listed.sort();
    assert_eq!(files_under(dir), listed);
}

#[test]
fn coinciding_models_give_an_all_zero_table() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "application = \"elliptic\"
[mesh]
nx = 16
ny = 16
[elliptic]
kappa0 = 0.25
kappa = 0.25
alpha = 0.0
";
    let cfg = parse_config_str(text).unwrap();
    let out = tmp.path().join("verify");
    let outcome = run_experiment(
        Command::Verify,
        &cfg,
        text.as_bytes(),
        &RunOptions {
            out: Some(out.clone()),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(outcome.dir, out);
    assert_eq!(outcome.manifest.status, RunStatus::Complete);
    assert_manifest_complete(&out, &outcome.manifest);

    #[derive(serde::Deserialize)]
    struct Report {
        reports: Vec<ErrorEstimateReport>,
    }
    let report: Report = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.reports.len(), 3);
    for r in &report.reports {
        for v in [r.exact_error.unwrap(), r.xi1, r.xi2, r.q_ehat] {
            assert!(v.abs() < 1e-12, "{:?}: {v}", r.error_source);
        }
    }
}

#[test]
fn verify_artifacts_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(SMALL_ELLIPTIC).unwrap();
    let out = tmp.path().join("verify");
    run_experiment(
        Command::Verify,
        &cfg,
        SMALL_ELLIPTIC.as_bytes(),
        &RunOptions {
            out: Some(out.clone()),
            ..Default::default()
        },
    )
    .unwrap();

    #[derive(serde::Deserialize, serde::Serialize)]
    struct Report {
        reports: Vec<ErrorEstimateReport>,
    }
    let text = fs::read_to_string(out.join("report.json")).unwrap();
    let report: Report = serde_json::from_str(&text).unwrap();
    let again: Report = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(report.reports, again.reports);

    // CSV numbers parse back to the exact JSON values
    let csv = fs::read_to_string(out.join("estimates.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "error_source,q_coarse,q_fine,exact_error,xi1,xi2,q_ehat");
    for (line, r) in lines.zip(&report.reports) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], r.error_source.to_string());
        assert_eq!(cols[1].parse::<f64>().unwrap(), r.q_coarse);
        assert_eq!(cols[4].parse::<f64>().unwrap(), r.xi1);
        assert_eq!(cols[5].parse::<f64>().unwrap(), r.xi2);
        assert_eq!(cols[6].parse::<f64>().unwrap(), r.q_ehat);
    }
    assert!(!csv.contains('\r'));

    let mesh = std::sync::Arc::new(Mesh::unit_square(12, 12).unwrap());
    let file = fs::File::open(out.join("fields/u0.csv")).unwrap();
    let u0 = Field::read_csv(mesh, std::io::BufReader::new(file)).unwrap();
    let mut buf = Vec::new();
    u0.write_csv(&mut buf).unwrap();
    assert_eq!(buf, fs::read(out.join("fields/u0.csv")).unwrap());
}

#[test]
fn calibration_is_deterministic_under_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(SMALL_ELLIPTIC).unwrap();
    let run = |name: &str| {
        run_experiment(
            Command::Calibrate,
            &cfg,
            SMALL_ELLIPTIC.as_bytes(),
            &RunOptions {
                out: Some(tmp.path().join(name)),
                ..Default::default()
            },
        )
        .unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a.manifest.content_digest, b.manifest.content_digest);
    assert_eq!(a.manifest.artifacts, b.manifest.artifacts);
    assert_eq!(a.manifest.config_sha256, b.manifest.config_sha256);
    assert_eq!(a.manifest.seed, Some(7));
    assert_manifest_complete(&a.dir, &a.manifest);
    let names: Vec<&str> = a.manifest.artifacts.iter().map(|x| x.path.as_str()).collect();
    assert_eq!(names, ["chain_0.csv", "diagnostics_0.csv", "summary.json"]);

    let c = run_experiment(
        Command::Calibrate,
        &cfg,
        SMALL_ELLIPTIC.as_bytes(),
        &RunOptions {
            out: Some(tmp.path().join("c")),
            seed: Some(8),
        },
    )
    .unwrap();
    assert_ne!(a.manifest.content_digest, c.manifest.content_digest);
    assert_eq!(c.manifest.seed, Some(8));

    // rerunning into an existing run directory replaces it
    let again = run("a");
    assert_eq!(again.manifest.content_digest, a.manifest.content_digest);
}

#[test]
fn empty_chain_gives_header_only_csv() {
    let chain = ChainRecord {
        chain: 0,
        seed: 0,
        initial_theta: vec![1.0, 2.0],
        accepted: Vec::new(),
        proposals: 0,
        cost_series: Vec::new(),
        qoi_error_series: Vec::new(),
        running_acceptance: Vec::new(),
        final_scale: vec![0.1, 0.1],
        adaptation_window: 0,
        post_adaptation_acceptance: 0.0,
        low_acceptance: false,
    };
    let mut buf = Vec::new();
    write_chain_csv(&chain, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "sample_index,theta_1,theta_2,cost,qoi_error,accepted_count\n");
}

#[test]
fn foreign_output_directory_is_not_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mine");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("notes.txt"), "keep").unwrap();
    let cfg = parse_config_str(SMALL_ELLIPTIC).unwrap();
    let err = run_experiment(
        Command::Verify,
        &cfg,
        b"",
        &RunOptions {
            out: Some(out.clone()),
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(err.to_string().contains("exists"));
    assert_eq!(fs::read_to_string(out.join("notes.txt")).unwrap(), "keep");
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_goal-calib"))
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "application = \"elliptic\"\n[mcmc]\nburn_in = 1.5\n").unwrap();
    let status = binary()
        .args(["calibrate", "--config"])
        .arg(&bad)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let missing = binary()
        .args(["verify", "--config"])
        .arg(tmp.path().join("nope.toml"))
        .status()
        .unwrap();
    assert_eq!(missing.code(), Some(2));

    let second = tmp.path().join("second.toml");
    fs::write(&second, "application = \"elliptic\"\nestimator = \"second-order\"\n").unwrap();
    let status = binary().args(["calibrate", "--config"]).arg(&second).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // a fine Newton solve that cannot converge is a solver failure
    let diverge = tmp.path().join("diverge.toml");
    fs::write(
        &diverge,
        "application = \"elliptic\"\n[mesh]\nnx = 10\nny = 10\n[elliptic]\nnonlinearity = \"exponential\"\nalpha = 400.0\n",
    )
    .unwrap();
    let out = tmp.path().join("run");
    let status = binary()
        .args(["verify", "--config"])
        .arg(&diverge)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    assert!(!out.exists());
    let partial = tmp.path().join("run.partial");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(partial.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "failed");
    assert_eq!(manifest["failed_phase"], "estimates");

    let good = tmp.path().join("good.toml");
    fs::write(&good, SMALL_ELLIPTIC).unwrap();
    let out = tmp.path().join("ok");
    let result = binary()
        .args(["calibrate", "--seed", "3", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&result.stdout).contains("posterior mean"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
}
