use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dvt_core::model::load_checkpoint;
use dvt_core::numerics::Tensor;
use dvt_core::tokenization::{write_clip, ClipTensor};

const TINY: &str = "\
layers = 1
dim = 8
heads = 2
mlp_ratio = 2
frames = 4
height = 8
width = 8
patch = 4
samples = 2
subclips = 2
ms_samples = 2
scales = 2
radius = 2
gop = 4
epochs = 2
batch = 4
";

fn dvt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dvt"))
        .args(args)
        .env_remove("DVT_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Value of `key` in the first `---` block named `block`.
fn field(out: &str, block: &str, key: &str) -> Option<String> {
    let start = out.find(&format!("--- {block}\n"))?;
    out[start..]
        .lines()
        .skip(1)
        .take_while(|l| *l != "---")
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_data(dir: &Path, name: &str, clips: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    let o = dvt(&[
        "gen-data",
        "--out",
        p(&out),
        "--num-clips",
        &clips.to_string(),
        "--frames",
        "4",
        "--height",
        "8",
        "--width",
        "8",
        "--square",
        "3",
        "--speed-min",
        "1",
        "--speed-max",
        "1",
        "--seed",
        &seed.to_string(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.cfg");
    fs::write(&path, TINY).unwrap();
    path
}

#[test]
fn gen_data_counts_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny_data(dir.path(), "a", 4, 7);
    let b = tiny_data(dir.path(), "b", 4, 7);
    let manifest = fs::read_to_string(a.join("manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 4);
    for line in manifest.lines() {
        let name = line.split('\t').next().unwrap();
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn gen_data_defaults_to_500_clips() {
    let dir = tempfile::tempdir().unwrap();
    let o = dvt(&["gen-data", "--out", p(dir.path())]);
    assert!(o.status.success());
    assert_eq!(field(&stdout(&o), "dataset", "clips").as_deref(), Some("500"));
    assert_eq!(
        fs::read_to_string(dir.path().join("manifest.tsv"))
            .unwrap()
            .lines()
            .count(),
        500
    );
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.cfg");
    fs::write(&spec, "num_clips = 1\nseed = 5\n").unwrap();
    let seed_of = |extra: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_dvt"));
        c.args(["gen-data", "--out", p(&dir.path().join("x")), "--num-clips", "1"])
            .args(extra);
        match env {
            Some(v) => c.env("DVT_SEED", v),
            None => c.env_remove("DVT_SEED"),
        };
        field(&stdout(&c.output().unwrap()), "config", "seed").unwrap()
    };
    assert_eq!(seed_of(&[], Some("9")), "9");
    assert_eq!(seed_of(&["--spec", p(&spec)], Some("9")), "5");
    assert_eq!(seed_of(&["--spec", p(&spec), "--seed", "3"], Some("9")), "3");
    assert_eq!(seed_of(&[], None), "0");
}

#[test]
fn rejects_unknown_flags_and_keys() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!dvt(&["gen-data", "--out", p(dir.path()), "--bogus"]).status.success());
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "nonsense = 1\n").unwrap();
    let o = dvt(&["gen-data", "--out", p(dir.path()), "--spec", p(&bad)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `nonsense`"));
}

#[test]
fn encode_static_clip() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f32> = (0..16 * 16 * 3).map(|i| ((i * 37) % 101) as f32 / 101.0).collect();
    let frame = Tensor::new(&[16, 16, 3], data).unwrap();
    let clip = ClipTensor::from_frames(&vec![frame; 4]).unwrap();
    let path = dir.path().join("static.dvt-clip");
    write_clip(&path, &clip).unwrap();
    let o = dvt(&["encode", "--clip", p(&path)]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(field(&out, "encode", "md_all_zero").as_deref(), Some("true"));
    assert_eq!(field(&out, "encode", "roundtrip").as_deref(), Some("pass"));
    let err: f64 = field(&out, "encode", "max_abs_err").unwrap().parse().unwrap();
    assert!(err < 1e-6);
    assert!(dir.path().join("static.dvt-gop").exists());
}

#[test]
fn encode_moving_clip_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path(), "d", 1, 2);
    let o = dvt(&[
        "encode",
        "--clip",
        p(&data.join("clip_00000.dvt-clip")),
        "--radius",
        "2",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(field(&out, "encode", "md_all_zero").as_deref(), Some("false"));
    assert!(field(&out, "encode", "max_abs_err").unwrap().parse::<f64>().unwrap() < 1e-6);
}

#[test]
fn encode_bad_magic_names_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.dvt-clip");
    fs::write(&path, b"NOPE0000").unwrap();
    let o = dvt(&["encode", "--clip", p(&path)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("offset 0"));
}

fn train_tiny(dir: &Path, ckpt: &str, extra: &[&str]) -> Output {
    let cfg = tiny_config(dir);
    let data = dir.join("train");
    if !data.exists() {
        tiny_data(dir, "train", 8, 1);
        tiny_data(dir, "val", 4, 2);
    }
    let ckpt = dir.join(ckpt);
    let mut args = vec!["train", "--config", p(&cfg), "--data", p(&data), "--ckpt", p(&ckpt)];
    let val = dir.join("val");
    args.extend(["--val", p(&val)]);
    args.extend(extra);
    dvt(&args)
}

#[test]
fn training_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_tiny(dir.path(), "a.dvtk", &["--seed", "4"]);
    let b = train_tiny(dir.path(), "b.dvtk", &["--seed", "4"]);
    assert!(b.status.success());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(
        fs::read(dir.path().join("a.dvtk")).unwrap(),
        fs::read(dir.path().join("b.dvtk")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("a.dvtk.log")).unwrap(),
        fs::read(dir.path().join("b.dvtk.log")).unwrap()
    );
    let c = train_tiny(dir.path(), "c.dvtk", &["--seed", "5"]);
    assert!(c.status.success());
    assert_ne!(
        fs::read(dir.path().join("a.dvtk")).unwrap(),
        fs::read(dir.path().join("c.dvtk")).unwrap()
    );
}

#[test]
fn zero_learning_rate_keeps_init() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_tiny(dir.path(), "init.dvtk", &["--epochs", "0"]).status.success());
    assert!(train_tiny(dir.path(), "lr0.dvtk", &["--lr", "0"]).status.success());
    let init = load_checkpoint(&dir.path().join("init.dvtk")).unwrap();
    let lr0 = load_checkpoint(&dir.path().join("lr0.dvtk")).unwrap();
    assert_eq!(init.params, lr0.params);
    assert_eq!(lr0.epoch, 2);
}

#[test]
fn eval_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_tiny(dir.path(), "m.dvtk", &[]).status.success());
    let run = |workers: &str| {
        let o = dvt(&[
            "eval",
            "--ckpt",
            p(&dir.path().join("m.dvtk")),
            "--data",
            p(&dir.path().join("val")),
            "--workers",
            workers,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    let a = run("0");
    assert_eq!(a, run("0"));
    assert_eq!(a, run("2"));
    assert_eq!(field(&a, "eval", "clips").as_deref(), Some("4"));
}

#[test]
fn train_reports_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = dvt(&[
        "train",
        "--data",
        p(&dir.path().join("nowhere")),
        "--ckpt",
        p(&dir.path().join("x")),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
}

#[test]
fn gradcheck_tiny_passes_and_zero_tolerance_fails() {
    let o = dvt(&["gradcheck"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(field(&stdout(&o), "gradcheck", "status").as_deref(), Some("pass"));
    let o = dvt(&["gradcheck", "--tol", "0", "--max-coords", "4"]);
    assert!(!o.status.success());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flops_global_example() {
    let o = dvt(&["flops", "--scheme", "global", "--sites", "4", "--frames", "2"]);
    assert!(o.status.success());
    assert_eq!(field(&stdout(&o), "flops", "comparisons").as_deref(), Some("64"));
}

#[test]
fn flops_paper_scale_ratio_and_verify() {
    let o = dvt(&[
        "flops",
        "--sites",
        "3136",
        "--frames",
        "16",
        "--samples",
        "8",
        "--subclips",
        "4",
    ]);
    assert!(o.status.success());
    assert_eq!(field(&stdout(&o), "flops", "global_over_dsta").as_deref(), Some("1568"));
    let o = dvt(&[
        "flops", "--verify", "--trials", "3", "--set", "dim=8", "--set", "height=8", "--set", "width=8",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("status = fail"));
}

#[test]
fn trace_emits_n_markers_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("trace");
    let o = dvt(&["trace", "--config", p(&cfg), "--out", p(&out), "--t", "1"]);
    assert!(
        o.status.success(),
        "{}{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    // T=4, B=2: query frame 1 samples frames 0 and 1, N=2 each
    assert_eq!(
        field(&stdout(&o), "trace", "markers_per_frame").as_deref(),
        Some("[2, 2, 0, 0]")
    );
    assert!(out.join("trace.jsonl").exists());
    assert_eq!(fs::read_dir(&out).unwrap().count(), 5);
    let o = dvt(&["trace", "--config", p(&cfg), "--out", p(&out), "--scheme", "global"]);
    assert!(!o.status.success());
}
