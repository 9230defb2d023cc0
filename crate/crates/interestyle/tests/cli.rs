use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use interestyle::checkpoint::Checkpoint;
use interestyle::config::RunConfig;
use interestyle::container::ArrayContainer;
use interestyle::dataset::Dataset;
use interestyle_core::evalkit::score_recons;
use interestyle_core::nn::ParamTree;

/// 16x16 model and scenes small enough to train in seconds.
const SMALL: &str = "\
model.channels = 8,8,4
model.z_dim = 16
model.latent_dim = 16
model.mapping_layers = 2
model.encoder_stages = 4,8,8,8
model.head_channels = 8
model.proxy_channels = 4,8,8
train.w0_samples = 200
train.batch_size = 2
train.max_steps = 4
train.checkpoint_every = 2
train.dilation_radius = 1
scene.count = 12
scene.eval_fraction = 0.25
scene.noise_scales = 4,2
scene.pattern_period_min = 2
scene.pattern_period_max = 4
scene.semi_axis_min = 4
scene.semi_axis_max = 6
scene.position_jitter = 1
scene.occluder_size_min = 3
scene.occluder_size_max = 6
scene.bar_thickness_min = 1
scene.bar_thickness_max = 2
scene.dilation_radius = 1
";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_interestyle"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("small.txt");
    std::fs::write(&config, SMALL).unwrap();
    let data = root.join("data");
    ok(&["scene-gen", "--config", s(&config), "--out", s(&data)]);
    Fixture {
        _dir: dir,
        root,
        config,
        data,
    }
}

fn train(f: &Fixture, out: &str, extra: &[&str]) -> PathBuf {
    let dir = f.root.join(out);
    let mut args = vec!["train", "--config", s(&f.config), "--data", s(&f.data), "--out", s(&dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir
}

fn log_without_clock(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("train_log.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn scene_gen_writes_a_verified_manifest() {
    let f = fixture();
    let ds = Dataset::open(&f.data).unwrap();
    assert_eq!(ds.records.len(), 12);
    assert_eq!(ds.split("eval").len(), 3);
    ds.verify().unwrap();
    assert!(f.data.join("config.txt").exists());

    let again = f.root.join("again");
    ok(&["scene-gen", "--config", s(&f.config), "--out", s(&again)]);
    let m1 = std::fs::read(f.data.join("manifest.jsonl")).unwrap();
    assert_eq!(m1, std::fs::read(again.join("manifest.jsonl")).unwrap());

    // The resolved config alone reproduces the run.
    let replay = f.root.join("replay");
    ok(&["scene-gen", "--config", s(&f.data.join("config.txt")), "--out", s(&replay)]);
    assert_eq!(m1, std::fs::read(replay.join("manifest.jsonl")).unwrap());

    let other = f.root.join("other");
    ok(&["scene-gen", "--config", s(&f.config), "--seed", "9", "--out", s(&other)]);
    assert_ne!(m1, std::fs::read(other.join("manifest.jsonl")).unwrap());

    let tiny = f.root.join("ten");
    ok(&["scene-gen", "--config", s(&f.config), "--set", "scene.count=10", "--out", s(&tiny)]);
    assert_eq!(std::fs::read_to_string(tiny.join("manifest.jsonl")).unwrap().lines().count(), 10);
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let out = run(&["scene-gen", "--set", "scene.count=1", "--out", s(&file.join("sub"))]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let out = run(&["scene-gen", "--set", "scene.nonsense=1", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene.nonsense"));

    let out = run(&["eval", "--checkpoint", s(&dir.path().join("none.ckpt")), "--data", s(dir.path())]);
    assert!(!out.status.success());

    let out = run(&["train", "--ablation", "+everything", "--data", s(dir.path()), "--out", s(dir.path())]);
    assert!(!out.status.success());
}

#[test]
fn zero_step_training_matches_initialisation() {
    let f = fixture();
    let dir = train(&f, "zero", &["--set", "train.max_steps=0"]);
    let ck = Checkpoint::load(&dir.join("final.ckpt")).unwrap();
    let cfg = RunConfig::from_file(&dir.join("config.txt")).unwrap();
    assert_eq!(ck, Checkpoint::init(&cfg).unwrap());
}

#[test]
fn ablation_flags_are_recorded() {
    let f = fixture();
    let dir = train(&f, "base", &["--ablation", "baseline", "--set", "train.max_steps=1"]);
    let cfg = RunConfig::from_file(&dir.join("config.txt")).unwrap();
    assert_eq!(cfg.get("train.mask_losses"), "false");
    assert_eq!(cfg.get("train.use_ind"), "false");
    assert_eq!(cfg.get("train.use_unf"), "false");
}

#[test]
fn training_is_deterministic_resumable_and_leaves_frozen_parts_alone() {
    let f = fixture();
    let a = train(&f, "a", &[]);
    let b = train(&f, "b", &[]);
    let final_a = std::fs::read(a.join("final.ckpt")).unwrap();
    assert_eq!(final_a, std::fs::read(b.join("final.ckpt")).unwrap());
    assert_eq!(log_without_clock(&a), log_without_clock(&b));
    assert_eq!(log_without_clock(&a).len(), 5);
    assert_eq!(log_without_clock(&a)[0], "step,total_loss,recon_loss,ind_loss");

    let mid = a.join("checkpoints").join("step_000002.ckpt");
    let r = train(&f, "resumed", &["--resume", s(&mid)]);
    assert_eq!(final_a, std::fs::read(r.join("final.ckpt")).unwrap());

    let init = Checkpoint::init(&RunConfig::from_file(&a.join("config.txt")).unwrap()).unwrap();
    let done = Checkpoint::load(&a.join("final.ckpt")).unwrap();
    assert_eq!(done.gen, init.gen);
    assert_eq!(done.proxy, init.proxy);
    assert_eq!(done.w0, init.w0);
    assert_ne!(done.trainer.encoder, init.trainer.encoder);
    let c = ArrayContainer::load(&a.join("final.ckpt")).unwrap();
    let mut same = true;
    init.gen.net.visit("generator", &mut |name, t| same &= c.tensor(name).as_ref() == Some(t));
    assert!(same);

    let png = f.root.join("loss.png");
    ok(&["plot", "--csv", s(&a.join("train_log.csv")), "--png", s(&png)]);
    assert!(std::fs::metadata(&png).unwrap().len() > 0);
}

#[test]
fn zero_init_eval_equals_the_w0_baseline() {
    let f = fixture();
    let ck_dir = train(&f, "zero", &["--set", "train.max_steps=0"]);
    let ckpt = ck_dir.join("final.ckpt");
    let out = f.root.join("eval");
    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&f.data), "--out", s(&out)]);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();

    let ck = Checkpoint::load(&ckpt).unwrap();
    let ds = Dataset::open(&f.data).unwrap();
    let y0 = ck.gen.synthesize(&ck.w0).unwrap();
    let recs = ds.split("eval");
    let mut l2 = 0.0;
    for r in &recs {
        let smp = ds.load(r, None).unwrap();
        let lat = [&ck.w0, &ck.w0, &ck.w0, &ck.w0];
        let rec = [&y0, &y0, &y0, &y0];
        l2 += score_recons(&smp.image, &smp.mask, &smp.dilated_mask, &lat, &rec, &ck.proxy).unwrap().interest_l2;
    }
    l2 /= recs.len() as f64;
    let got = summary["interest_l2"].as_f64().unwrap();
    assert!((got - l2).abs() <= 1e-12, "{got} vs {l2}");
    assert!(summary["variance"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));

    let again = f.root.join("eval2");
    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&f.data), "--out", s(&again)]);
    assert_eq!(
        std::fs::read(out.join("metrics.csv")).unwrap(),
        std::fs::read(again.join("metrics.csv")).unwrap()
    );

    let var = f.root.join("var");
    ok(&["variance", "--checkpoint", s(&ckpt), "--data", s(&f.data), "--out", s(&var)]);
    let text = std::fs::read_to_string(var.join("variance.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn invert_mix_and_edit_write_their_artifacts() {
    let f = fixture();
    let ck_dir = train(&f, "t", &[]);
    let ckpt = ck_dir.join("final.ckpt");
    let img = f.data.join("images").join("s000000.png");
    let other = f.data.join("images").join("s000001.png");

    let inv = f.root.join("inv");
    ok(&["invert", "--checkpoint", s(&ckpt), "--image", s(&img), "--out", s(&inv)]);
    for name in ["recon.png", "recon_0.png", "recon_3.png", "trace.csv", "latents.arr"] {
        assert!(inv.join(name).exists(), "{name} missing");
    }
    let lat = ArrayContainer::load(&inv.join("latents.arr")).unwrap();
    assert_eq!(lat.tensor("w_3").unwrap().dims(), &[6, 16]);

    let same = f.root.join("same");
    ok(&["mix", "--checkpoint", s(&ckpt), "--a", s(&img), "--b", s(&img), "--range", "coarse", "--out", s(&same)]);
    assert_eq!(std::fs::read(same.join("mixed.png")).unwrap(), std::fs::read(same.join("a.png")).unwrap());
    assert_eq!(std::fs::read(same.join("a.png")).unwrap(), std::fs::read(inv.join("recon.png")).unwrap());

    let mixed = f.root.join("mixed");
    ok(&["mix", "--checkpoint", s(&ckpt), "--a", s(&img), "--b", s(&other), "--range", "fine", "--out", s(&mixed)]);
    assert!(mixed.join("grid.png").exists());
    assert!(!run(&["mix", "--checkpoint", s(&ckpt), "--a", s(&img), "--b", s(&other), "--range", "ultra", "--out", s(&mixed)])
        .status
        .success());

    let edit = f.root.join("edit");
    ok(&["edit", "--checkpoint", s(&ckpt), "--data", s(&f.data), "--image", s(&img), "--dim", "2", "--out", s(&edit)]);
    assert!(edit.join("edit.png").exists() && edit.join("edit.arr").exists());
}

#[test]
fn plot_accepts_lines_and_rejects_empty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("line.csv");
    std::fs::write(&csv, "x,y\n0,0\n1,1\n2,2\n3,3\n").unwrap();
    ok(&["plot", "--csv", s(&csv), "--out", s(dir.path())]);
    assert!(std::fs::metadata(dir.path().join("line.png")).unwrap().len() > 0);

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(!run(&["plot", "--csv", s(&empty), "--out", s(dir.path())]).status.success());
}
