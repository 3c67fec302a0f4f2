use std::path::Path;
use std::process::{Command, Output};

use nngcp::mcmc::{ChainConfig, Draw, PosteriorDraws};
use nngcp::{CovParams, Domain, Point, SpaceTimeCovParams};
use rand::Rng;
use serde::Serialize;
use serde_json::Value;

fn nngcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nngcp"))
        .args(args)
        .output()
        .unwrap()
}

fn code(args: &[&str]) -> i32 {
    nngcp(args).status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_events(path: &Path, pts: &[(usize, f64, f64)]) {
    let mut s = String::from("t,x,y\n");
    for (t, x, y) in pts {
        s.push_str(&format!("{t},{x},{y}\n"));
    }
    std::fs::write(path, s).unwrap();
}

/// Same layout as the draws file written by `fit`.
#[derive(Serialize)]
struct DrawsFile {
    version: String,
    chain_config: String,
    draws: PosteriorDraws,
}

#[test]
fn missing_seed_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["simulate", "--out", path(&tmp.path().join("s"))]), 2);
    assert_eq!(code(&["bench", "--out", path(&tmp.path().join("b"))]), 2);
}

#[test]
fn zero_neighbor_budget_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let events = tmp.path().join("events.csv");
    write_events(&events, &[(1, 0.5, 0.5), (1, 0.2, 0.8)]);
    let out = tmp.path().join("fit");
    let args = [
        "fit",
        "--seed",
        "1",
        "--events",
        path(&events),
        "--domain",
        "0,1,0,1",
        "--m",
        "0",
        "--out",
        path(&out),
    ];
    assert_eq!(code(&args), 2);
}

#[test]
fn predict_needs_a_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("p");
    let args = [
        "predict",
        "--seed",
        "1",
        "--draws",
        "draws.bin",
        "--out",
        path(&out_dir),
    ];
    let out = nngcp(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));
}

#[test]
fn manifest_of_another_command_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert!(nngcp(&[
        "simulate",
        "--seed",
        "2",
        "--domain",
        "0,2,0,2",
        "--out",
        path(&sim)
    ])
    .status
    .success());
    let manifest = sim.join("manifest.json");
    assert_eq!(
        code(&[
            "fit",
            "--config",
            path(&manifest),
            "--out",
            path(&tmp.path().join("f"))
        ]),
        2
    );
}

#[test]
fn runaway_thinning_exits_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    let events = tmp.path().join("events.csv");
    write_events(&events, &[(1, 1.0, 1.0), (1, 2.0, 3.0), (1, 4.0, 2.0)]);
    let config = tmp.path().join("fit.json");
    std::fs::write(
        &config,
        r#"{"chain": {"max_thinned_points": 2, "n_iter": 20, "burn_in": 0}}"#,
    )
    .unwrap();
    let out = tmp.path().join("fit");
    let args = [
        "fit",
        "--config",
        path(&config),
        "--seed",
        "1",
        "--events",
        path(&events),
        "--domain",
        "0,5,0,5",
        "--out",
        path(&out),
    ];
    assert_eq!(code(&args), 4);
}

#[test]
fn zero_latent_field_renders_half_the_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let domain = Domain::new(0.0, 4.0, 0.0, 2.0).unwrap();
    let observed = vec![
        Point::new(0.5, 0.5),
        Point::new(3.0, 1.5),
        Point::new(2.0, 1.0),
    ];
    let theta = SpaceTimeCovParams::spatial(CovParams::new(1.0, 2.0).unwrap());
    let draws = PosteriorDraws {
        domain,
        observed: vec![observed.clone()],
        draws: (0..4)
            .map(|i| Draw {
                iteration: i + 1,
                lambda_star: vec![12.0],
                k: vec![observed.len()],
                z_obs: vec![vec![0.0; observed.len()]],
                thinned: vec![Vec::new()],
                z_thin: vec![Vec::new()],
                theta,
            })
            .collect(),
        trace: Vec::new(),
        thinned_stats: Vec::new(),
        theta_accepted: [0, 0],
        theta_proposed: [0, 0],
    };
    let file = DrawsFile {
        version: env!("CARGO_PKG_VERSION").to_string(),
        chain_config: serde_json::to_string(&ChainConfig::default()).unwrap(),
        draws,
    };
    let bin = tmp.path().join("draws.bin");
    std::fs::write(&bin, bincode::serialize(&file).unwrap()).unwrap();

    let out = tmp.path().join("render");
    let status = nngcp(&[
        "render",
        "--draws",
        path(&bin),
        "--out",
        path(&out),
        "--nx",
        "8",
        "--ny",
        "5",
        "--ppm",
        "true",
    ]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let text = std::fs::read_to_string(out.join("intensity_t1.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# nx=8 ny=5"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    for row in &rows {
        assert_eq!(row.len(), 8);
        for v in row {
            assert!((v - 6.0).abs() < 1e-12, "{v}");
        }
    }
    let ppm = std::fs::read(out.join("intensity_t1.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n8 5\n255\n"));
    assert_eq!(ppm.len(), b"P6\n8 5\n255\n".len() + 8 * 5 * 3);
    let sidecar: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("intensity_t1.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["t"], 1);
}

#[test]
fn diag_recovers_the_inefficiency_of_an_ar1_series() {
    let tmp = tempfile::tempdir().unwrap();
    let rho: f64 = 0.6;
    let mut rng = nngcp::rng::substream(3, 0, 0, 0);
    let mut x = 0.0;
    let mut csv = String::from("ar1,white\n");
    for _ in 0..40_000 {
        let e = nngcp::special::standard_normal(&mut rng);
        x = rho * x + (1.0 - rho * rho).sqrt() * e;
        csv.push_str(&format!("{x},{}\n", rng.gen::<f64>()));
    }
    let input = tmp.path().join("series.csv");
    std::fs::write(&input, csv).unwrap();
    let out = tmp.path().join("diag");
    assert!(nngcp(&[
        "diag",
        "--input",
        path(&input),
        "--out",
        path(&out),
        "--max-lag",
        "5"
    ])
    .status
    .success());
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diag.json")).unwrap()).unwrap();
    let want = (1.0 + rho) / (1.0 - rho);
    let got = report[0]["inefficiency"].as_f64().unwrap();
    assert_eq!(report[0]["series"], "ar1");
    assert!(
        (got - want).abs() / want < 0.15,
        "inefficiency {got} vs {want}"
    );
    let white = report[1]["inefficiency"].as_f64().unwrap();
    assert!(
        (white - 1.0).abs() < 0.15,
        "white-noise inefficiency {white}"
    );

    let acf = std::fs::read_to_string(out.join("acf.csv")).unwrap();
    let lag1: f64 = acf
        .lines()
        .find(|l| l.starts_with("ar1,1,"))
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((lag1 - rho).abs() < 0.03, "lag-1 autocorrelation {lag1}");
}
