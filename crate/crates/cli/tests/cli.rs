use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use num_complex::Complex64;
use rac_loraks::container::{read_grid, save_dataset};
use rac_loraks::sim::{build_dataset, PhantomSpec, Scenario, ScenarioSpec};
use rac_loraks::{Dataset, KSpaceGrid, Polarity, SamplingPattern};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_racloraks"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn manifest_value(path: &Path, key: &str) -> Option<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")).map(str::to_string))
}

fn small_sim(dir: &Path, scenario: &str, out: &str) {
    ok(
        dir,
        &[
            "simulate",
            "--scenario",
            scenario,
            "--R",
            "2",
            "--seed",
            "3",
            "--ny",
            "16",
            "--nx",
            "16",
            "--nch",
            "3",
            "--out",
            out,
        ],
    );
}

#[test]
fn simulate_emits_six_grids_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "hyperintensity",
            "--R",
            "3",
            "--seed",
            "7",
            "--out",
            "a",
        ],
    );
    let grids = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "kspc")
        })
        .count();
    assert_eq!(grids, 6);
    let m = dir.path().join("a/manifest.txt");
    assert_eq!(
        manifest_value(&m, "kind").as_deref(),
        Some("hyperintensity")
    );
    assert_eq!(manifest_value(&m, "where").as_deref(), Some("epi"));
    assert_eq!(manifest_value(&m, "R").as_deref(), Some("3"));

    ok(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "hyperintensity",
            "--R",
            "3",
            "--seed",
            "7",
            "--out",
            "b",
        ],
    );
    for e in fs::read_dir(dir.path().join("a")).unwrap() {
        let name = e.unwrap().file_name();
        let a = fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = fs::read(dir.path().join("b").join(&name)).unwrap();
        if name == "manifest.txt" {
            // Only the recorded output path differs.
            let strip = |t: &[u8]| {
                String::from_utf8_lossy(t)
                    .lines()
                    .filter(|l| *l != "arg: a" && *l != "arg: b" && !l.starts_with("out: "))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(strip(&a), strip(&b));
        } else {
            assert_eq!(a, b, "{name:?} differs");
        }
    }
}

#[test]
fn inverted_contrast_manifest_names_target() {
    let dir = tempfile::tempdir().unwrap();
    small_sim(dir.path(), "inverted-contrast", "ds");
    let m = dir.path().join("ds/manifest.txt");
    assert_eq!(
        manifest_value(&m, "kind").as_deref(),
        Some("inverted_contrast")
    );
    assert_eq!(manifest_value(&m, "where").as_deref(), Some("acs"));
}

#[test]
fn zero_fill_on_fully_sampled_data_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ScenarioSpec::new(Scenario::Matched, PhantomSpec::new(16, 16, 2, 4), 1);
    let mut ds = build_dataset(&spec).unwrap();
    let (gp, gn) = ds.gold.clone().unwrap();
    ds.pattern = SamplingPattern::both_polarities(16);
    ds.epi_pos = gp.clone();
    ds.epi_neg = gn.clone();
    save_dataset(dir.path().join("full"), &ds).unwrap();
    ok(
        dir.path(),
        &[
            "recon",
            "--data",
            "full",
            "--out",
            "rec",
            "--method",
            "zero-fill",
            "--rank-s",
            "10",
            "--nullspace-p",
            "8",
        ],
    );
    let pos = read_grid(dir.path().join("rec/recon_pos.kspc"))
        .unwrap()
        .grid;
    let neg = read_grid(dir.path().join("rec/recon_neg.kspc"))
        .unwrap()
        .grid;
    assert_eq!(pos.data(), gp.data());
    assert_eq!(neg.data(), gn.data());
}

#[test]
fn recon_echoes_config_and_trace_decreases() {
    let dir = tempfile::tempdir().unwrap();
    small_sim(dir.path(), "shot-ghost", "ds");
    ok(
        dir.path(),
        &[
            "recon",
            "--data",
            "ds",
            "--out",
            "rec",
            "--method",
            "rac-loraks",
            "--eta",
            "1e-3",
            "--max-outer",
            "5",
            "--cg-max",
            "10",
        ],
    );
    let m = dir.path().join("rec/manifest.txt");
    assert_eq!(
        manifest_value(&m, "eta").as_deref(),
        Some("1.0000000000000000e-3")
    );
    for key in [
        "lambda",
        "rank_s",
        "nullspace_p",
        "radius",
        "tol",
        "max_outer",
    ] {
        assert!(manifest_value(&m, key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(
        manifest_value(&m, "rank_source").as_deref(),
        Some("suggested")
    );
    let csv = fs::read_to_string(dir.path().join("rec/objective_trace.csv")).unwrap();
    let values: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 6);
    assert!(values.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
}

#[test]
fn rerun_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    small_sim(dir.path(), "matched", "ds");
    ok(
        dir.path(),
        &[
            "recon",
            "--data",
            "ds",
            "--out",
            "rec",
            "--method",
            "ac-loraks",
            "--max-outer",
            "3",
            "--cg-max",
            "5",
        ],
    );
    let before: Vec<_> = [
        "recon_pos.kspc",
        "recon_neg.kspc",
        "objective_trace.csv",
        "manifest.txt",
    ]
    .iter()
    .map(|f| fs::read(dir.path().join("rec").join(f)).unwrap())
    .collect();
    fs::copy(
        dir.path().join("rec/manifest.txt"),
        dir.path().join("saved.txt"),
    )
    .unwrap();
    fs::remove_dir_all(dir.path().join("rec")).unwrap();
    ok(dir.path(), &["rerun", "--manifest", "saved.txt"]);
    let after: Vec<_> = [
        "recon_pos.kspc",
        "recon_neg.kspc",
        "objective_trace.csv",
        "manifest.txt",
    ]
    .iter()
    .map(|f| fs::read(dir.path().join("rec").join(f)).unwrap())
    .collect();
    assert_eq!(before, after);
}

#[test]
fn eval_of_gold_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    small_sim(dir.path(), "matched", "ds");
    ok(
        dir.path(),
        &[
            "eval", "--data", "ds", "--recon", "ds", "--prefix", "gold", "--out", "ev",
        ],
    );
    let text = fs::read_to_string(dir.path().join("ev/nrmse.txt")).unwrap();
    assert_eq!(text.trim().parse::<f64>().unwrap(), 0.0);
    let esp = fs::read_to_string(dir.path().join("ev/esp.csv")).unwrap();
    assert_eq!(esp.lines().next(), Some("radius,value,count"));
    assert!(esp
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() == 0.0));
    let pgm = fs::read(dir.path().join("ev/ssos.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n65535\n"));
    assert_eq!(pgm.len(), b"P5\n16 16\n65535\n".len() + 2 * 16 * 16);
}

fn csv_column(text: &str, col: usize) -> Vec<f64> {
    text.lines()
        .skip(1)
        .filter_map(|l| {
            l.split(',')
                .nth(col)
                .filter(|v| !v.is_empty())
                .map(|v| v.parse().unwrap())
        })
        .collect()
}

#[test]
fn svplot_of_constant_acs_has_one_nonzero_value() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ScenarioSpec::new(Scenario::Matched, PhantomSpec::new(16, 16, 1, 2), 2);
    let base = build_dataset(&spec).unwrap();
    let ones =
        |pol| KSpaceGrid::from_data(1, 16, 16, pol, vec![Complex64::new(1.0, 0.0); 256]).unwrap();
    let ds = Dataset {
        acs_pos: ones(Polarity::Positive),
        acs_neg: ones(Polarity::Negative),
        ..base
    };
    save_dataset(dir.path().join("ds"), &ds).unwrap();
    ok(dir.path(), &["svplot", "--data", "ds", "--out", "sv"]);
    let csv = fs::read_to_string(dir.path().join("sv/singular_values.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("index,c,s"));
    let c = csv_column(&csv, 1);
    assert_eq!(c.len(), 13);
    assert_eq!(c.iter().filter(|v| **v > 0.0).count(), 1);
    let suggestion = fs::read_to_string(dir.path().join("sv/suggestion.txt")).unwrap();
    assert!(suggestion.contains("nullspace_p: 12\n"));
}

#[test]
fn svplot_curves_descend() {
    let dir = tempfile::tempdir().unwrap();
    small_sim(dir.path(), "hyperintensity-acs", "ds");
    ok(dir.path(), &["svplot", "--data", "ds", "--out", "sv"]);
    let csv = fs::read_to_string(dir.path().join("sv/singular_values.csv")).unwrap();
    for col in [1, 2] {
        let v = csv_column(&csv, col);
        assert!(!v.is_empty());
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
        let positive: Vec<_> = v.iter().filter(|x| **x > 0.0).collect();
        assert!(positive.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    small_sim(dir.path(), "matched", "ds");
    let code = |args: &[&str]| cli(dir.path(), args).status.code();
    assert_eq!(
        code(&["recon", "--data", "ds", "--out", "x", "--method", "bogus"]),
        Some(2)
    );
    assert_eq!(
        code(&["simulate", "--scenario", "nope", "--out", "x"]),
        Some(2)
    );
    assert_eq!(code(&["simulate", "-R", "2", "--out", "x"]), Some(2));
    assert_eq!(
        code(&[
            "recon",
            "--data",
            "ds",
            "--out",
            "x",
            "--rank-s",
            "0",
            "--nullspace-p",
            "3"
        ]),
        Some(2)
    );
    assert_eq!(code(&["recon", "--data", "missing", "--out", "x"]), Some(3));
    fs::write(dir.path().join("ds/epi_pos.kspc"), b"version:1\n").unwrap();
    assert_eq!(code(&["recon", "--data", "ds", "--out", "x"]), Some(3));
    assert_eq!(
        code(&["eval", "--data", "ds", "--recon", "nowhere", "--out", "x"]),
        Some(3)
    );
}
