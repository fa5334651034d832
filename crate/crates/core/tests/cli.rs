use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const DESK: [&str; 10] = [
    "--channel-div", "8", "--fc1-width", "32", "--fc2-width", "16", "--weight-init", "he:1", "--dropout", "0",
];

fn dcnv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcnv"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn synth(out: &Path) {
    let o = out.to_str().unwrap();
    let r = dcnv(&["synth", "--out", o, "--run-name", "data", "--image-count", "24", "--heldout-count", "12", "--video-count", "4", "--frames", "8", "--format", "ppm"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn pretrain_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = dir.path().to_str().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 9\n[train]\nepochs = 5\nbatch_size = 4\n").unwrap();
    let images = format!("{o}/data/images.txt");
    let heldout = format!("{o}/data/heldout.txt");
    let mut args = vec!["pretrain", "--config", cfg.to_str().unwrap(), "--out", o, "--images", &images, "--heldout", &heldout, "--epochs", "2"];
    args.extend(DESK);
    let r = dcnv(&args);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let runs: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("pretrain-"))
        .collect();
    assert_eq!(runs.len(), 1, "{runs:?}");
    let run = dir.path().join(&runs[0]);
    for f in ["config.toml", "checkpoint.bin", "metrics.csv", "report.txt", "report.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    // flags override the file, file overrides the defaults
    let snapshot = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(snapshot.contains("seed = 9"));
    assert!(snapshot.contains("epochs = 2"));
    assert!(snapshot.contains("batch_size = 4"));
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    let r = dcnv(&["report", "--metrics", run.join("metrics.csv").to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    assert!(String::from_utf8_lossy(&r.stdout).contains("image"));
    let plot = fs::read_to_string(run.join("plot_image.dat")).unwrap();
    assert_eq!(plot.lines().count(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    // usage
    assert_eq!(code(&dcnv(&["pretrain", "--resolution", "48"])), 2);
    assert_eq!(code(&dcnv(&["transfer", "--fps", "0"])), 2);
    // missing and malformed inputs
    assert_eq!(code(&dcnv(&["pretrain", "--out", o, "--images", "/no/such/manifest.txt"])), 2);
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "classes 3\nmissing.ppm 1\n").unwrap();
    let r = dcnv(&["pretrain", "--out", o, "--images", bad.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains(":2:"), "{}", String::from_utf8_lossy(&r.stderr));
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&dcnv(&["pretrain", "--config", cfg.to_str().unwrap()])), 2);
    // gradient check pass and injected failure
    assert_eq!(code(&dcnv(&["gradcheck"])), 0);
    let r = dcnv(&["gradcheck", "--inject-conv-fault"]);
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stderr).contains("conv"));
}

#[test]
fn transfer_and_incompatible_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = dir.path().to_str().unwrap();
    let images = format!("{o}/data/images.txt");
    let videos = format!("{o}/data/videos.txt");
    let mut pre = vec!["pretrain", "--out", o, "--run-name", "pre", "--images", &images, "--epochs", "1"];
    pre.extend(DESK);
    assert_eq!(code(&dcnv(&pre)), 0);
    let ckpt = format!("{o}/pre/checkpoint.bin");

    for (policy, name) in [("fc", "a"), ("fc+conv", "b")] {
        let mut tr = vec!["transfer", "--out", o, "--run-name", name, "--videos", &videos, "--init", &ckpt, "--policy", policy, "--epochs", "1", "--fps", "4"];
        tr.extend(DESK);
        let r = dcnv(&tr);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        assert!(dir.path().join(name).join("transplant.txt").exists());
    }
    let table = fs::read_to_string(dir.path().join("transfer_results.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "depth,initialization,training_set,update,map");
    assert!(rows[1].starts_with("2,pretrained,video,FC,"));
    assert!(rows[2].starts_with("2,pretrained,video,FC+CONV,"));
    assert!(dir.path().join("transfer_results.txt").exists());

    let mut deeper = vec!["transfer", "--out", o, "--run-name", "c", "--videos", &videos, "--init", &ckpt, "--depth", "3", "--epochs", "1"];
    deeper.extend(DESK);
    let r = dcnv(&deeper);
    assert_eq!(code(&r), 3);
    assert!(String::from_utf8_lossy(&r.stderr).contains("conv1"));

    let r = dcnv(&["eval", "--out", o, "--run-name", "e", "--checkpoint", &format!("{o}/a/checkpoint.bin"), "--videos", &videos]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(fs::read_to_string(dir.path().join("e/report.txt")).unwrap().contains("map"));
}

#[test]
fn sweep_marks_infeasible_cells() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = dir.path().to_str().unwrap();
    let images = format!("{o}/data/images.txt");
    let heldout = format!("{o}/data/heldout.txt");
    let mut args = vec!["sweep", "--out", o, "--run-name", "s", "--images", &images, "--heldout", &heldout, "--depths", "2,4", "--train-sizes", "8,full", "--epochs", "1"];
    args.extend(DESK);
    let r = dcnv(&args);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("32,2,8,-,8,"));
    assert!(lines[2].starts_with("32,2,full,-,24,"));
    assert!(lines[3].contains("infeasible"));
    assert!(dir.path().join("s/sweep.txt").exists());
}
