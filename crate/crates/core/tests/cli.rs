use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use monet::geom::PointCloud;
use monet::io::{pcsq_len, read_pcsq, write_pcsq};
use monet::model::{load_model, save_model};
use monet::{ModelConfig, Monet};

fn monet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monet")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = monet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str]) -> i32 {
    monet(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 64-point sequences of 6 frames: 2 train, 1 val, 1 test.
fn small_data(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&["gen-data", "--out", s(&data), "--seed", "3", "--frames", "6", "--points", "64", "--split-counts", "2,1,1"]);
    data
}

fn train_args<'a>(data: &'a Path, out: &'a Path, iters: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--data", s(data), "--out", s(out), "--iters", iters, "--layer-points", "32,16", "--widths", "6,8", "--k", "4",
        "--input-frames", "3", "--predict-frames", "3", "--seed", "1",
    ]
}

fn curve(dir: &Path) -> Vec<f64> {
    fs::read_to_string(dir.join("loss.csv")).unwrap().lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect()
}

#[test]
fn gen_data_is_deterministic_and_sized_by_the_format() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["gen-data", "--out", s(d), "--seed", "5", "--frames", "10", "--points", "512", "--split-counts", "1,1,1"]);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4);
    for n in &names {
        let (x, y) = (fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap());
        assert_eq!(x, y);
        if n.to_str().unwrap().ends_with(".pcsq") {
            assert_eq!(x.len(), 14 + 10 * 512 * 12);
            assert_eq!(x.len(), pcsq_len(10, 512));
            let frames = read_pcsq(a.join(n)).unwrap();
            write_pcsq(dir.path().join("copy.pcsq"), &frames).unwrap();
            assert_eq!(fs::read(dir.path().join("copy.pcsq")).unwrap(), x);
        }
    }
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().next(), Some("path\tsplit\tseed"));
    assert_eq!(manifest.lines().count(), 4);

    let still = dir.path().join("still");
    ok(&["gen-data", "--out", s(&still), "--objects", "0", "--frames", "3", "--points", "64", "--split-counts", "1,0,0"]);
    let frames = read_pcsq(still.join("train_0000.pcsq")).unwrap();
    assert!(frames.iter().all(|f| f.points().iter().all(|p| p[2] == 0.0)));
    ok(&["gen-data", "--out", s(&still), "--objects", "0", "--frames", "3", "--points", "64", "--split-counts", "1,0,0", "--no-resample"]);
    let frames = read_pcsq(still.join("train_0000.pcsq")).unwrap();
    assert!(frames.iter().all(|f| f == &frames[0]));
}

#[test]
fn train_with_zero_iterations_writes_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let run = dir.path().join("run");
    ok(&train_args(&data, &run, "0"));
    assert_eq!(fs::read_to_string(run.join("loss.csv")).unwrap(), "iteration,sample,loss,grad_norm\n");
    let (model, params) = load_model(&run).unwrap();
    assert_eq!(params, model.init_params(1).unwrap());
}

#[test]
fn training_runs_are_reproducible_and_resume_smoothly() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&train_args(&data, &a, "6"));
    ok(&train_args(&data, &b, "6"));
    assert_eq!(fs::read(a.join("loss.csv")).unwrap(), fs::read(b.join("loss.csv")).unwrap());
    assert_eq!(curve(&a).len(), 6);

    ok(&train_args(&data, &c, "3"));
    let mut resume = train_args(&data, &c, "3");
    resume.push("--resume");
    ok(&resume);
    let (full, split) = (curve(&a), curve(&c));
    assert_eq!(full, split);
    assert_eq!(fs::read(a.join("checkpoint.bin")).unwrap(), fs::read(c.join("checkpoint.bin")).unwrap());
}

#[test]
fn cell_variants_give_distinct_loadable_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let mut dirs = Vec::new();
    for v in ["gru", "lstm"] {
        let run = dir.path().join(v);
        let mut args = train_args(&data, &run, "1");
        args.extend(["--variant", v]);
        ok(&args);
        dirs.push(run);
    }
    let (gm, gp) = load_model(&dirs[0]).unwrap();
    let (lm, lp) = load_model(&dirs[1]).unwrap();
    assert_ne!(gm, lm);
    assert_ne!(gp.names().collect::<Vec<_>>(), lp.names().collect::<Vec<_>>());
    for run in &dirs {
        let out = run.join("pred.pcsq");
        ok(&["predict", "--model", s(run), "--input", s(&data.join("test_0000.pcsq")), "--observed", "3", "--horizon", "2", "--out", s(&out)]);
        assert_eq!(read_pcsq(&out).unwrap().len(), 2);
    }
}

#[test]
fn divergence_exits_with_code_two_and_keeps_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let run = dir.path().join("run");
    let mut args = train_args(&data, &run, "50");
    args.extend(["--lr", "1e150", "--no-clip"]);
    assert_eq!(code(&args), 2);
    let (_, params) = load_model(&run).unwrap();
    assert!(params.iter().all(|(_, p)| p.value.is_finite()));
}

fn zero_model(dir: &Path, points: usize) -> PathBuf {
    let run = dir.join("zero");
    let model = Monet::new(ModelConfig::uniform_k(points, &[32, 16], 4, &[6, 8])).unwrap();
    let mut params = model.init_params(0).unwrap();
    params.zero_values();
    save_model(&run, &model, &params).unwrap();
    run
}

#[test]
fn predict_examples() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let run = zero_model(dir.path(), 64);
    let input = data.join("test_0000.pcsq");
    let out = dir.path().join("pred.pcsq");
    ok(&["predict", "--model", s(&run), "--input", s(&input), "--horizon", "5", "--out", s(&out)]);
    let frames = read_pcsq(&input).unwrap();
    let preds = read_pcsq(&out).unwrap();
    assert_eq!(preds.len(), 5);
    assert!(preds.iter().all(|p| p == frames.last().unwrap()));

    let other = zero_model(&dir.path().join("other"), 32);
    assert_eq!(code(&["predict", "--model", s(&other), "--input", s(&input), "--out", s(&out)]), 3);
    assert_eq!(code(&["predict", "--model", s(&run), "--input", s(&input), "--observed", "1", "--out", s(&out)]), 3);
}

#[test]
fn predict_is_translation_equivariant_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let run = dir.path().join("run");
    ok(&train_args(&data, &run, "2"));
    let frames: Vec<PointCloud> = read_pcsq(data.join("test_0000.pcsq")).unwrap()[..5].to_vec();
    let c = [2.0, -1.0, 0.5];
    let (plain, moved) = (dir.path().join("plain.pcsq"), dir.path().join("moved.pcsq"));
    write_pcsq(&plain, &frames).unwrap();
    write_pcsq(&moved, &frames.iter().map(|f| f.translated(c)).collect::<Vec<_>>()).unwrap();
    let moved_in = read_pcsq(&moved).unwrap();
    let outs: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("out{i}.pcsq"))).collect();
    for (inp, out) in [(&plain, &outs[0]), (&plain, &outs[1]), (&moved, &outs[2])] {
        ok(&["predict", "--model", s(&run), "--input", s(inp), "--horizon", "3", "--out", s(out)]);
    }
    assert_eq!(fs::read(&outs[0]).unwrap(), fs::read(&outs[1]).unwrap());
    // compare flows so the f32 rounding of the shifted input cancels
    let base = read_pcsq(&outs[0]).unwrap();
    let shifted = read_pcsq(&outs[2]).unwrap();
    let last = frames.last().unwrap();
    let last_moved = moved_in.last().unwrap();
    for (p, q) in base.iter().zip(&shifted) {
        for i in 0..p.len() {
            for k in 0..3 {
                let fa = p.point(i)[k] - last.point(i)[k];
                let fb = q.point(i)[k] - last_moved.point(i)[k];
                assert!((fa - fb).abs() < 1e-5, "{fa} vs {fb}");
            }
        }
    }
}

#[test]
fn eval_examples() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let truth = data.join("test_0000.pcsq");
    let csv = dir.path().join("m.csv");
    ok(&["eval", "--pred", s(&truth), "--truth", s(&truth), "--out", s(&csv), "--emd-cap", "32"]);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "frame,cd,emd");
    assert_eq!(rows.len(), 7);
    assert!(rows[1..].iter().enumerate().all(|(i, r)| *r == format!("{},0,0", i + 1)));

    let (p, q) = (dir.path().join("p.pcsq"), dir.path().join("q.pcsq"));
    write_pcsq(&p, &[PointCloud::new(vec![[0.0, 0.0, 0.0]]).unwrap()]).unwrap();
    write_pcsq(&q, &[PointCloud::new(vec![[3.0, 4.0, 0.0]]).unwrap()]).unwrap();
    ok(&["eval", "--pred", s(&p), "--truth", s(&q), "--out", s(&csv)]);
    assert_eq!(fs::read_to_string(&csv).unwrap(), "frame,cd,emd\n1,10,5\n");
    assert_eq!(code(&["eval", "--pred", s(&p), "--truth", s(&truth), "--out", s(&csv)]), 3);

    assert_eq!(code(&["eval", "--pred", s(&truth), "--truth", s(&truth), "--truth-skip", "2", "--out", s(&csv)]), 3);
}

#[test]
fn to_csv_lists_every_coordinate() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let csv = dir.path().join("seq.csv");
    ok(&["to-csv", "--input", s(&data.join("val_0000.pcsq")), "--out", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("frame,point,x,y,z"));
    assert_eq!(text.lines().count(), 1 + 6 * 64);
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.pcsq");
    fs::write(&junk, b"not a sequence").unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&["to-csv", "--input", s(&junk), "--out", s(&out)]), 1);
    assert_eq!(code(&["to-csv", "--input", s(&dir.path().join("missing")), "--out", s(&out)]), 1);
    assert_eq!(code(&["gen-data", "--out", s(&out), "--split-counts", "1,2"]), 1);
    assert_ne!(code(&["frobnicate"]), 0);
}
