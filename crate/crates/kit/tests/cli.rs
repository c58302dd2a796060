use std::fs;
use std::process::Command;

fn glimpsekit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glimpsekit"))
}

#[test]
fn run_rejects_empty_policy_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(
        &cfg_path,
        r#"{
            "mode": "closedset",
            "scenes": {"generator": {"count": 1, "width": 256, "height": 256,
                "classes": 1, "clusters": 1, "objects_per_cluster": [1, 2],
                "object_size": [8, 16], "cluster_radius": 20.0,
                "background_texture_std": 0.0}},
            "geometry": {"d_gist": 32, "d_glimpse": 64},
            "master_seed": 0
        }"#,
    )
    .unwrap();
    let out = glimpsekit()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no policies configured"), "stderr: {stderr}");
}

#[test]
fn run_seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(
        &cfg_path,
        r#"{
            "mode": "closedset",
            "scenes": {"generator": {"count": 1, "width": 256, "height": 256,
                "classes": 2, "clusters": 2, "objects_per_cluster": [2, 4],
                "object_size": [8, 16], "cluster_radius": 32.0,
                "background_texture_std": 0.05}},
            "policies": [{"kind": "random", "n_glimpse": 3}],
            "geometry": {"d_gist": 64, "d_glimpse": 64},
            "master_seed": 1
        }"#,
    )
    .unwrap();
    let run = |out_dir: &std::path::Path, seed: &str| {
        let status = glimpsekit()
            .args(["run", "--config"])
            .arg(&cfg_path)
            .arg("--out-dir")
            .arg(out_dir)
            .args(["--seed", seed])
            .status()
            .unwrap();
        assert!(status.success());
        fs::read_to_string(out_dir.join("glimpses_random.csv")).unwrap()
    };
    let a = run(&dir.path().join("a"), "5");
    let b = run(&dir.path().join("b"), "5");
    let c = run(&dir.path().join("c"), "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
}
