use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ppt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppt"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(
        &path,
        "task = \"pushing\"\nvariant = \"PPT\"\nnum_envs = 2\n\n[ppo]\nhidden = [16, 16]\n\n[eval]\nepisodes = 2\nexport_episodes = 1\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn train_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    for out in ["a", "b"] {
        let o = ppt(&["train", "--config", &cfg, "--seed", "7", "--episodes", "2", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["manifest.json", "curve.csv", "curve_smoothed.csv"] {
        let a = fs::read(dir.path().join("a/pushing_PPT_seed7").join(f)).unwrap();
        let b = fs::read(dir.path().join("b/pushing_PPT_seed7").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }

    let o = ppt(&["eval", "a/pushing_PPT_seed7", "--episodes", "2", "--out", "ev"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("ev/evaluation.json").is_file());

    let o = ppt(&["export-plots", "a", "--out", "plots"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("plots/pushing_PPT_seed7_curve_smoothed.csv").is_file());
}

#[test]
fn defaults_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let o = ppt(&["defaults", "--task", "maze", "--out", "maze.toml"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() > 20);
    assert!(text.lines().all(|l| l.ends_with("[paper]") || l.ends_with("[spec-default]")), "{text}");
    assert!(text.contains("[paper]") && text.contains("[spec-default]"));
    let written = fs::read_to_string(dir.path().join("maze.toml")).unwrap();
    assert!(written.contains("task = \"maze\""));
}

#[test]
fn gen_maze_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = ppt(&["gen-maze", "--seed", "4", "--episodes", "3", "--out", "m"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in 4..7 {
        let text = fs::read_to_string(dir.path().join(format!("m/maze_{seed:06}.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["vertices"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn bad_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!ppt(&["train", "--variant", "XYZ"], dir.path()).status.success());
    assert!(!ppt(&["train", "--task", "walking"], dir.path()).status.success());
    fs::write(dir.path().join("bad.toml"), "task = \"pushing\"\n[ppo]\nclip = -1.0\n").unwrap();
    let o = ppt(&["train", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = ppt(&["eval", "missing.ckpt"], dir.path());
    assert!(!o.status.success());
}
