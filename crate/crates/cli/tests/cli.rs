use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "world_extent = 100
world_blobs = 30
world_queries = 4
world_outside_queries = 3
world_image_w = 80
world_image_h = 60
world_horizon = 20
world_focal = 50
grid_interval = 8
grid_margin = 4
max_iter = 3
";

fn satloc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satloc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run satloc")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), SMALL).unwrap();
    dir
}

fn prepare(d: &Path) {
    ok(&satloc(d, &["--config", "run.conf", "synth-gen", "--out", "data"]));
    ok(&satloc(
        d,
        &[
            "--config",
            "run.conf",
            "build-dict",
            "--data",
            "data",
            "--out",
            "dict.gsd",
        ],
    ));
}

#[test]
fn full_pipeline() {
    let dir = setup();
    let d = dir.path();
    prepare(d);
    ok(&satloc(
        d,
        &[
            "--config",
            "run.conf",
            "--seed",
            "0",
            "learn-proj",
            "--dict",
            "dict.gsd",
            "--out",
            "proj",
        ],
    ));
    let full = [
        "--config",
        "run.conf",
        "--threads",
        "1",
        "localize",
        "--dict",
        "dict.gsd",
        "--data",
        "data",
        "--out",
        "full.csv",
        "--w-ground",
        "proj/w_ground.proj",
        "--w-sat",
        "proj/w_sat.proj",
    ];
    ok(&satloc(d, &full));
    let np = [
        "--config",
        "run.conf",
        "localize",
        "--dict",
        "dict.gsd",
        "--data",
        "data",
        "--out",
        "np.csv",
        "--no-projection",
    ];
    ok(&satloc(d, &np));
    let go = [
        "--config",
        "run.conf",
        "localize",
        "--dict",
        "dict.gsd",
        "--data",
        "data",
        "--out",
        "go.csv",
        "--method",
        "ground-only",
    ];
    ok(&satloc(d, &go));
    for est in ["full.csv", "np.csv", "go.csv"] {
        let report = format!("{est}.report.csv");
        ok(&satloc(
            d,
            &[
                "evaluate",
                "--estimates",
                est,
                "--truth",
                "data/queries/truth.csv",
                "--out",
                &report,
            ],
        ));
        let pr = format!("{est}.pr.csv");
        ok(&satloc(
            d,
            &[
                "pr-sweep",
                "--estimates",
                est,
                "--truth",
                "data/queries/truth.csv",
                "--out",
                &pr,
            ],
        ));
    }
    let est = std::fs::read_to_string(d.join("full.csv")).unwrap();
    assert!(est.starts_with("query_id,est_x,est_y,est_theta,confidence,inlier\n"));
    assert_eq!(est.lines().count(), 1 + 7);
    let pr = std::fs::read_to_string(d.join("full.csv.pr.csv")).unwrap();
    assert!(pr.starts_with("tau,precision,recall,best\n"));
    for f in [
        "dict.gsd",
        "proj/learning.csv",
        "full.csv",
        "full.csv.report.csv",
        "data/dataset",
    ] {
        let manifest = std::fs::read_to_string(d.join(format!("{f}.manifest.txt"))).unwrap();
        assert!(manifest.starts_with("tool=satloc "), "{f}");
        assert!(manifest.contains("[config]\n"));
    }
    let manifest = std::fs::read_to_string(d.join("full.csv.manifest.txt")).unwrap();
    assert!(manifest.contains("method=full\n"));
    assert!(manifest.contains("\nworld_extent=100\n"));
}

#[test]
fn overrides_and_seed_reach_the_manifest() {
    let dir = setup();
    let d = dir.path();
    ok(&satloc(
        d,
        &[
            "--config",
            "run.conf",
            "--seed",
            "5",
            "--set",
            "world_noise=0",
            "synth-gen",
            "--out",
            "data",
        ],
    ));
    let manifest = std::fs::read_to_string(d.join("data/dataset.manifest.txt")).unwrap();
    assert!(manifest.contains("\nseed=5\n"));
    assert!(manifest.contains("\nworld_noise=0\n"));
}

#[test]
fn validation_errors_exit_2() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("bad.conf"), "no_such_key = 1\n").unwrap();
    let out = satloc(d, &["--config", "bad.conf", "synth-gen", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let out = satloc(d, &["--set", "grid_interval=0", "synth-gen", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));

    prepare(d);
    let out = satloc(
        d,
        &[
            "--config", "run.conf", "localize", "--dict", "dict.gsd", "--data", "data", "--out", "e.csv", "--method",
            "full",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn projection_for_another_dictionary_is_rejected() {
    let dir = setup();
    let d = dir.path();
    prepare(d);
    ok(&satloc(
        d,
        &[
            "--config",
            "run.conf",
            "learn-proj",
            "--dict",
            "dict.gsd",
            "--out",
            "proj",
        ],
    ));
    ok(&satloc(
        d,
        &[
            "--config",
            "run.conf",
            "--set",
            "max_range=30",
            "build-dict",
            "--data",
            "data",
            "--out",
            "other.gsd",
        ],
    ));
    let out = satloc(
        d,
        &[
            "--config",
            "run.conf",
            "--set",
            "max_range=30",
            "localize",
            "--dict",
            "other.gsd",
            "--data",
            "data",
            "--out",
            "e.csv",
            "--w-ground",
            "proj/w_ground.proj",
            "--w-sat",
            "proj/w_sat.proj",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn runtime_errors_exit_3() {
    let dir = setup();
    let out = satloc(dir.path(), &["build-dict", "--data", "missing", "--out", "dict.gsd"]);
    assert_eq!(out.status.code(), Some(3));
    let out = satloc(dir.path(), &["learn-proj", "--dict", "missing.gsd", "--out", "proj"]);
    assert_eq!(out.status.code(), Some(3));
}
