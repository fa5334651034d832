//! Acceptance criteria 1-10, run in order by a plain `main` so every
//! `criterion N: PASS|FAIL` line reaches the output. Exits non-zero if any
//! criterion fails.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dcnv::checkpoint::Checkpoint;
use dcnv::cli;
use dcnv::data::{synth_images, synth_two_domain, Dataset, ImageSource, SynthConfig};
use dcnv::layers::conv::{conv2d_as_dense, conv2d_backward, conv2d_forward_ctx, conv_output_size, ConvParams};
use dcnv::layers::gradcheck;
use dcnv::metrics::{average_precision, mean_ap};
use dcnv::netspec::{
    build_architecture, build_with, init_params, init_params_with, supported_architectures, ArchitectureConfig,
    HeadSpec, Init, NetworkSpec, ParamKind,
};
use dcnv::network::Network;
use dcnv::trainer::{center_crop, train, HeldOut, TrainConfig, TrainData, TrainOutcome, IMAGE_HEAD, VIDEO_HEAD};
use dcnv::transfer::{transfer_train, FreezePolicy};
use dcnv::video::{frame_dataset, predict_frames, predict_video, sample_frames, Frame, Split, VideoRecord};
use dcnv::Tensor;

fn verdict(n: usize, pass: bool, detail: &str) -> bool {
    println!("criterion {n}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}

/// Desk-scale two-convolution network on 32x32 inputs.
fn desk_arch(heads: Vec<HeadSpec>) -> NetworkSpec {
    let cfg = ArchitectureConfig {
        fc1_width: 64,
        kernel_divisor: 8,
        dropout: 0.0,
        ..ArchitectureConfig::new(2, 32, 32)
    };
    build_with(&cfg, heads).unwrap()
}

const DESK_INIT: Init = Init::He(1.0);

fn criterion_01_gradient_suite() -> bool {
    let t = Instant::now();
    let results = gradcheck::run_suite(0).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let names: Vec<&str> = results.iter().map(|r| r.name.as_str()).collect();
    let covered = ["conv", "maxpool", "fc", "dropout", "softmax_xent", "sigmoid_bce"]
        .iter()
        .all(|n| names.contains(n));
    let worst = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let all_pass = results.iter().all(|r| r.passed());
    let faulty = gradcheck::run_suite_with_conv(0, &gradcheck::conv_backward_sign_fault).unwrap();
    let fault_caught = faulty.iter().any(|r| r.name == "conv" && !r.passed());
    verdict(
        1,
        covered && all_pass && fault_caught && secs < 60.0,
        &format!("{} checks, worst rel error {worst:.2e}, injected fault caught {fault_caught}, {secs:.2}s", results.len()),
    )
}

fn criterion_02_dense_oracle() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut configs, mut worst, mut structure_ok) = (0, 0.0f64, true);
    while configs < 150 {
        let c = rng.random_range(1..=3);
        let h = rng.random_range(3..=8);
        let w = rng.random_range(3..=8);
        let k = rng.random_range(1..=3);
        let nw = rng.random_range(1..=4);
        let stride = rng.random_range(1..=3);
        let pad = rng.random_range(0..=2);
        let (Some(oh), Some(ow)) = (conv_output_size(h, nw, stride, pad), conv_output_size(w, nw, stride, pad)) else {
            continue;
        };
        configs += 1;
        let rand_t = |shape: &[usize], rng: &mut ChaCha8Rng| {
            let n = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let x = rand_t(&[c, h, w], &mut rng);
        let kern = rand_t(&[k, c, nw, nw], &mut rng);
        let bias = rand_t(&[k], &mut rng);
        let up = rand_t(&[k, oh, ow], &mut rng);
        let p = ConvParams::new(&kern, &bias, stride, pad).unwrap();
        let (y, ctx) = conv2d_forward_ctx(&x, p).unwrap();
        let dense = conv2d_as_dense(&[c, h, w], p).unwrap();
        let yd = dense.apply(&x).unwrap();
        let (dx, grads) = conv2d_backward(ctx, p, &up, true).unwrap();
        let dxd = dense.input_gradient(&up, &[c, h, w]).unwrap();
        let dwd = dense.kernel_gradient(&x, &up, kern.len());
        let dbd: Vec<f64> = up.data().chunks(oh * ow).map(|r| r.iter().sum()).collect();
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        worst = worst
            .max(diff(y.data(), yd.data()))
            .max(diff(dx.unwrap().data(), dxd.data()))
            .max(diff(grads.weight.data(), &dwd))
            .max(diff(grads.bias.data(), &dbd));

        // Every entry is zero outside the unit's receptive field and, inside
        // it, a copy of the kernel element at the same offset.
        let cols = c * h * w;
        for kk in 0..k {
            for i in 0..oh {
                for j in 0..ow {
                    let row = (kk * oh + i) * ow + j;
                    for cc in 0..c {
                        for yy in 0..h {
                            for xx in 0..w {
                                let col = (cc * h + yy) * w + xx;
                                let m = dense.matrix.data()[row * cols + col];
                                let r = yy as isize + pad as isize - (i * stride) as isize;
                                let s = xx as isize + pad as isize - (j * stride) as isize;
                                let inside = (0..nw as isize).contains(&r) && (0..nw as isize).contains(&s);
                                let tie = dense.ties[row * cols + col];
                                if inside {
                                    let kidx = ((kk * c + cc) * nw + r as usize) * nw + s as usize;
                                    structure_ok &= tie == Some(kidx) && m == kern.data()[kidx];
                                } else {
                                    structure_ok &= tie.is_none() && m == 0.0;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    verdict(
        2,
        worst <= 1e-12 && structure_ok,
        &format!("{configs} configurations, max deviation {worst:.2e}, zero pattern and ties hold {structure_ok}"),
    )
}

fn criterion_03_architecture_table() -> bool {
    let heads = || vec![HeadSpec::single("image", 10)];
    let combos = supported_architectures();
    let all_build = combos.len() == 10
        && combos.iter().all(|&(d, r)| {
            build_architecture(d, r, heads(), 2048)
                .and_then(|s| s.infer_shapes().map(|_| ()))
                .is_ok()
        });
    let eight = [2, 3].iter().all(|&d| [32, 64, 128, 256].iter().all(|r| combos.contains(&(d, *r))));
    let deep_restricted = [4, 5].iter().all(|&d| {
        [32, 64, 128].iter().all(|&r| build_architecture(d, r, heads(), 2048).is_err())
            && build_architecture(d, 256, heads(), 2048).is_ok()
    });
    let s = build_architecture(2, 256, heads(), 2048).unwrap();
    let shapes = s.infer_shapes().unwrap();
    let chain: Vec<Vec<usize>> = ["conv1", "pool1", "conv2", "pool2", "fc1"]
        .iter()
        .map(|n| {
            let i = (0..s.trunk.len()).find(|&i| s.layer_name(i) == *n).unwrap();
            shapes[i].clone()
        })
        .collect();
    let expected = vec![vec![64, 55, 55], vec![64, 27, 27], vec![128, 27, 27], vec![128, 13, 13], vec![4096]];
    let chain_ok = s.input_shape() == [3, 227, 227] && chain == expected;
    verdict(
        3,
        all_build && eight && deep_restricted && chain_ok,
        &format!("{} builds infer shapes, (2,256) chain {:?}, depth 4/5 need 256 input {deep_restricted}", combos.len(), chain),
    )
}

fn small_two_domain(seed: u64) -> (Dataset, Vec<VideoRecord>) {
    let cfg = SynthConfig {
        seed,
        image_domain_size: 120,
        video_count: 12,
        frames_per_video: 8,
        ..SynthConfig::default()
    };
    let out = synth_two_domain(&cfg).unwrap();
    (out.images, out.videos)
}

fn criterion_04_freeze_and_transplant() -> bool {
    let (images, videos) = small_two_domain(4);
    let source_spec = desk_arch(vec![HeadSpec::single(IMAGE_HEAD, 6)]);
    let p0 = init_params_with(&source_spec, &mut ChaCha8Rng::seed_from_u64(4), DESK_INIT).unwrap();
    let cfg = TrainConfig { epochs: 2, eval_every: 0, ..TrainConfig::default() };
    let pre = TrainData { images, frames: Dataset::default(), heldout: vec![] };
    let pretrained = train(&source_spec, p0, &pre, &cfg, |_| {}).unwrap().params;
    let ckpt = Checkpoint::new(source_spec, pretrained).unwrap();

    let target = desk_arch(vec![HeadSpec::multi(VIDEO_HEAD, 6)]);
    let frames = frame_dataset(&videos, Split::Train, 4.0, 6).unwrap();
    let data = TrainData { images: Dataset::default(), frames, heldout: vec![] };
    let cfg = TrainConfig { epochs: 10, eval_every: 0, ..TrainConfig::default() };
    let convs_equal = |o: &TrainOutcome| -> Vec<bool> {
        o.params
            .layers
            .iter()
            .zip(ckpt.trunk_layers())
            .filter(|(l, _)| l.kind == ParamKind::Conv)
            .map(|(l, s)| l.weight == s.weight && l.bias == s.bias)
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let fc = transfer_train(&ckpt, &target, FreezePolicy::FcOnly, &data, &cfg, &mut rng, DESK_INIT, |_| {}).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let all = transfer_train(&ckpt, &target, FreezePolicy::FcPlusConv, &data, &cfg, &mut rng, DESK_INIT, |_| {}).unwrap();
    let fc_frozen = convs_equal(&fc.training);
    let fc_changed = fc
        .training
        .params
        .layers
        .iter()
        .filter(|l| l.kind == ParamKind::Fc)
        .zip(ckpt.trunk_layers().filter(|l| l.kind == ParamKind::Fc))
        .any(|(a, b)| a.weight != b.weight);
    let unfrozen = convs_equal(&all.training);
    let pass = !fc_frozen.is_empty() && fc_frozen.iter().all(|&b| b) && fc_changed && unfrozen.iter().any(|&b| !b);
    verdict(
        4,
        pass,
        &format!("FC_ONLY conv tensors identical {fc_frozen:?}, fc layers moved {fc_changed}, FC_PLUS_CONV identical {unfrozen:?}"),
    )
}

fn criterion_05_overfitting() -> bool {
    let t = Instant::now();
    let spec = desk_arch(vec![HeadSpec::single(IMAGE_HEAD, 6)]);
    let (full_n, shrink, full_epochs) = (480, 8, 10);
    let mut shown = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let cfg = SynthConfig { seed, noise: 0.3, image_domain_size: full_n, ..SynthConfig::default() };
        let images = synth_images(&cfg, full_n, 0).unwrap();
        let held = synth_images(&cfg, 240, 7).unwrap();
        let run = |ds: Dataset, epochs: usize| {
            let params = init_params_with(&spec, &mut ChaCha8Rng::seed_from_u64(seed), DESK_INIT).unwrap();
            let tc = TrainConfig { epochs, seed, eval_every: 0, ..TrainConfig::default() };
            let data = TrainData {
                images: ds,
                frames: Dataset::default(),
                heldout: vec![HeldOut::Images { head: IMAGE_HEAD.into(), dataset: held.clone() }],
            };
            let out = train(&spec, params, &data, &tc, |_| {}).unwrap();
            let r = out.records.last().unwrap().clone();
            (r.train_loss.unwrap(), r.heldout_loss.unwrap())
        };
        // equal optimizer steps: eight times the epochs on an eighth of the data
        let (ft, fh) = run(images.clone(), full_epochs);
        let (st, sh) = run(images.truncated(full_n / shrink), full_epochs * shrink);
        let ok = st < 0.5 * sh && fh < 2.0 * ft;
        shown += ok as usize;
        lines.push(format!("seed {seed}: small {st:.3}/{sh:.3} full {ft:.3}/{fh:.3} {}", if ok { "ok" } else { "no" }));
    }
    let secs = t.elapsed().as_secs_f64();
    for l in &lines {
        println!("  {l}");
    }
    verdict(
        5,
        shown >= 4 && secs < 600.0,
        &format!("{shown}/5 seeds show the ordering (train/held-out loss), {secs:.0}s"),
    )
}

fn criterion_06_transfer_benefit() -> bool {
    let t = Instant::now();
    let (mut transfer_wins, mut mixed_wins, mut ratio_ok) = (0, 0, true);
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let cfg = SynthConfig {
            seed,
            noise: 0.2,
            image_domain_size: 1200,
            video_count: 48,
            ..SynthConfig::default()
        };
        let out = synth_two_domain(&cfg).unwrap();
        let frames = frame_dataset(&out.videos, Split::Train, 1.0, cfg.class_count).unwrap();
        ratio_ok &= out.images.len() >= 10 * frames.len();
        let heldout = || vec![HeldOut::Videos { head: VIDEO_HEAD.into(), videos: out.videos.clone(), split: Split::Test }];
        let tc = |epochs| TrainConfig { epochs, seed, eval_every: 0, ..TrainConfig::default() };
        let map = |o: &TrainOutcome| o.final_reports[VIDEO_HEAD].map.unwrap();

        let image_spec = desk_arch(vec![HeadSpec::single(IMAGE_HEAD, cfg.class_count)]);
        let p0 = init_params_with(&image_spec, &mut ChaCha8Rng::seed_from_u64(seed), DESK_INIT).unwrap();
        let pre_data = TrainData { images: out.images.clone(), frames: Dataset::default(), heldout: vec![] };
        let pre = train(&image_spec, p0, &pre_data, &tc(8), |_| {}).unwrap();
        let ckpt = Checkpoint::new(image_spec, pre.params).unwrap();

        let video_spec = desk_arch(vec![HeadSpec::multi(VIDEO_HEAD, cfg.class_count)]);
        let video_only = TrainData { images: Dataset::default(), frames: frames.clone(), heldout: heldout() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let tr = transfer_train(&ckpt, &video_spec, FreezePolicy::FcOnly, &video_only, &tc(20), &mut rng, DESK_INIT, |_| {})
            .unwrap();
        let rp = init_params_with(&video_spec, &mut ChaCha8Rng::seed_from_u64(seed + 100), DESK_INIT).unwrap();
        let random = train(&video_spec, rp, &video_only, &tc(20), |_| {}).unwrap();

        let mixed_spec = desk_arch(vec![
            HeadSpec::single(IMAGE_HEAD, cfg.class_count),
            HeadSpec::multi(VIDEO_HEAD, cfg.class_count),
        ]);
        let mp = init_params_with(&mixed_spec, &mut ChaCha8Rng::seed_from_u64(seed + 100), DESK_INIT).unwrap();
        let mixed_data = TrainData { images: out.images.clone(), frames, heldout: heldout() };
        let mixed = train(&mixed_spec, mp, &mixed_data, &tc(20), |_| {}).unwrap();

        let (a, b, c) = (map(&tr.training), map(&random), map(&mixed));
        transfer_wins += (a > b) as usize;
        mixed_wins += (c > b) as usize;
        lines.push(format!("seed {seed}: transfer FC {a:.3} random {b:.3} mixed {c:.3}"));
    }
    let secs = t.elapsed().as_secs_f64();
    for l in &lines {
        println!("  {l}");
    }
    verdict(
        6,
        ratio_ok && transfer_wins >= 4 && mixed_wins >= 4 && secs < 900.0,
        &format!("transfer beats random {transfer_wins}/5, mixed beats video-only {mixed_wins}/5, {secs:.0}s"),
    )
}

/// Direct O(n^2) evaluation: precision at every positive, counting every
/// item ranked at or above it (ties broken by index, as in a stable sort).
fn brute_force_ap(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    let positives: Vec<usize> = (0..scores.len()).filter(|&i| relevant[i]).collect();
    if positives.is_empty() {
        return None;
    }
    let above = |j: usize, p: usize| scores[j] > scores[p] || (scores[j] == scores[p] && j <= p);
    let mut terms: Vec<(usize, f64)> = positives
        .iter()
        .map(|&p| {
            let rank = (0..scores.len()).filter(|&j| above(j, p)).count();
            let hits = positives.iter().filter(|&&j| above(j, p)).count();
            (rank, hits as f64 / rank as f64)
        })
        .collect();
    // accumulate in rank order so rounding matches a single ranked pass
    terms.sort_by_key(|t| t.0);
    let sum = terms.iter().fold(0.0, |acc, t| acc + t.1);
    Some(sum / positives.len() as f64)
}

fn criterion_07_metrics_oracle() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=200);
        // coarse scores force ties
        let levels = rng.random_range(2..=50);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let p = rng.random_range(0.05..0.95);
        let relevant: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        match (average_precision(&scores, &relevant).ok(), brute_force_ap(&scores, &relevant)) {
            (Some(a), Some(b)) if a == b => {}
            (None, None) => {}
            _ => mismatches += 1,
        }
    }
    let hand = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    let map = mean_ap(&[hand, 1.0]).unwrap();
    verdict(
        7,
        mismatches == 0 && (hand - 5.0 / 6.0).abs() <= f64::EPSILON && (map - 11.0 / 12.0).abs() <= f64::EPSILON,
        &format!("{mismatches} mismatches in 1000 instances, hand case {hand}"),
    )
}

fn criterion_08_fusion_contracts() -> bool {
    let spec = desk_arch(vec![HeadSpec::multi(VIDEO_HEAD, 5)]);
    let params = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(8), 0.1).unwrap();
    let net = Network::new(&spec, &params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let frames: Vec<Frame> = (0..6)
        .map(|i| {
            let data = (0..3 * 32 * 32).map(|_| rng.random::<f64>()).collect();
            Frame {
                timestamp: i as f64 * 0.5,
                source: ImageSource::Memory(Arc::new(Tensor::from_vec(&[3, 32, 32], data).unwrap())),
            }
        })
        .collect();
    let per_frame: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let ImageSource::Memory(t) = &f.source else { unreachable!() };
            net.predict(0, &center_crop(t, spec.crop_resolution).unwrap()).unwrap()
        })
        .collect();
    let keys = vec![0, 2, 3, 5];
    let video = VideoRecord::new("v", frames, vec![1], Split::Test, Some(keys.clone())).unwrap();
    let fused = predict_video(&net, 0, &video).unwrap().scores;
    let mean: Vec<f64> = (0..5)
        .map(|c| keys.iter().map(|&k| per_frame[k][c]).sum::<f64>() / keys.len() as f64)
        .collect();
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12);
    let mean_ok = close(&fused, &mean);
    let mut perm_ok = true;
    for _ in 0..10 {
        let mut k = keys.clone();
        k.shuffle(&mut rng);
        perm_ok &= close(&predict_frames(&net, 0, &video, &k).unwrap().scores, &fused);
    }
    let single_ok = (0..6).all(|i| predict_frames(&net, 0, &video, &[i]).unwrap().scores == per_frame[i]);
    verdict(
        8,
        mean_ok && perm_ok && single_ok,
        &format!("mean of keyframe scores {mean_ok}, permutation invariant {perm_ok}, single-frame identity {single_ok}"),
    )
}

fn cli_ok(args: &[&str]) {
    let mut full = vec!["dcnv"];
    full.extend_from_slice(args);
    assert_eq!(cli::run(full), cli::EXIT_OK, "command failed: {args:?}");
}

const DESK_FLAGS: [&str; 10] = [
    "--channel-div", "8", "--fc1-width", "64", "--fc2-width", "32", "--weight-init", "he:1", "--dropout", "0",
];

/// synth, pretrain, transfer, eval, sweep and gradcheck under `out`.
fn cli_pipeline(out: &Path) {
    let o = out.to_str().unwrap();
    let d = format!("{o}/data");
    cli_ok(&["synth", "--out", o, "--run-name", "data", "--seed", "3", "--image-count", "96", "--heldout-count", "24", "--video-count", "8", "--frames", "8"]);
    let mut pre = vec!["pretrain", "--out", o, "--run-name", "pre", "--seed", "3", "--epochs", "2"];
    let (images, heldout, videos) = (format!("{d}/images.txt"), format!("{d}/heldout.txt"), format!("{d}/videos.txt"));
    pre.extend(["--images", &images, "--heldout", &heldout]);
    pre.extend(DESK_FLAGS);
    cli_ok(&pre);
    let ckpt = format!("{o}/pre/checkpoint.bin");
    let mut tr = vec!["transfer", "--out", o, "--run-name", "tr", "--seed", "3", "--epochs", "2", "--policy", "fc"];
    tr.extend(["--videos", &videos, "--init", &ckpt, "--augment", &images]);
    tr.extend(DESK_FLAGS);
    cli_ok(&tr);
    let tr_ckpt = format!("{o}/tr/checkpoint.bin");
    cli_ok(&["eval", "--out", o, "--run-name", "ev", "--checkpoint", &tr_ckpt, "--videos", &videos]);
    let mut sw = vec!["sweep", "--out", o, "--run-name", "sw", "--seed", "3", "--epochs", "1", "--workers", "2"];
    sw.extend(["--videos", &videos, "--fps-list", "1,4", "--depths", "2,3"]);
    sw.extend(DESK_FLAGS);
    cli_ok(&sw);
    let gc = format!("{o}/gradcheck.txt");
    cli_ok(&["gradcheck", "--seed", "3", "--output", &gc]);
}

fn tree_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "config.toml" {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_09_determinism() -> bool {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cli_pipeline(a.path());
    cli_pipeline(b.path());
    let (fa, fb) = (tree_files(a.path()), tree_files(b.path()));
    let names = |f: &[(String, Vec<u8>)]| f.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    let same_set = names(&fa) == names(&fb);
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let key = ["pre/checkpoint.bin", "tr/checkpoint.bin", "ev/report.txt", "sw/sweep.csv", "transfer_results.csv"];
    let has_key = key.iter().all(|k| fa.iter().any(|(n, _)| n == k));
    verdict(
        9,
        same_set && has_key && differing.is_empty(),
        &format!("{} artifacts compared byte for byte, differing {differing:?}", fa.len()),
    )
}

fn criterion_10_frame_sampling() -> bool {
    let cfg = SynthConfig {
        seed: 10,
        video_count: 8,
        frames_per_video: 40,
        source_fps: 4.0,
        image_domain_size: 16,
        ..SynthConfig::default()
    };
    let out = synth_two_domain(&cfg).unwrap();
    let v = &out.videos[0];
    let uniform = v.frames.iter().enumerate().all(|(i, f)| (f.timestamp - i as f64 * 0.25).abs() < 1e-12);
    let (one, four) = (sample_frames(v, 1.0).unwrap().len(), sample_frames(v, 4.0).unwrap().len());

    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    cli_ok(&["synth", "--out", o, "--run-name", "data", "--seed", "10", "--image-count", "16", "--heldout-count", "0", "--video-count", "8", "--frames", "40"]);
    let videos = format!("{o}/data/videos.txt");
    let mut sw = vec!["sweep", "--out", o, "--run-name", "sw", "--epochs", "2", "--fps-list", "1,4", "--videos", &videos];
    sw.extend(DESK_FLAGS);
    cli_ok(&sw);
    let table = cli::Table::from_csv(&fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap()).unwrap();
    let col = |name: &str| table.headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<(String, usize, String)> = table
        .rows
        .iter()
        .filter(|r| r[col("status")] == "ok")
        .map(|r| (r[col("fps")].clone(), r[col("samples")].parse().unwrap(), r[col("value")].clone()))
        .collect();
    let both = rows.len() == 2 && rows[0].0 == "1" && rows[1].0 == "4" && rows[1].1 == 4 * rows[0].1;
    verdict(
        10,
        uniform && one * 4 == four && both,
        &format!("40-frame video gives {one} frames at 1 fps and {four} at 4 fps; sweep rows (fps, frames, test MAP) {rows:?}"),
    )
}


fn main() {
    let criteria: [(usize, fn() -> bool); 10] = [
        (1, criterion_01_gradient_suite),
        (2, criterion_02_dense_oracle),
        (3, criterion_03_architecture_table),
        (4, criterion_04_freeze_and_transplant),
        (5, criterion_05_overfitting),
        (6, criterion_06_transfer_benefit),
        (7, criterion_07_metrics_oracle),
        (8, criterion_08_fusion_contracts),
        (9, criterion_09_determinism),
        (10, criterion_10_frame_sampling),
    ];
    let mut failed = Vec::new();
    for (n, f) in criteria {
        let t = Instant::now();
        let ok = std::panic::catch_unwind(f).unwrap_or_else(|_| {
            println!("criterion {n}: FAIL (panicked)");
            false
        });
        println!("  criterion {n} took {:.1}s", t.elapsed().as_secs_f64());
        if !ok {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria PASS");
    } else {
        println!("acceptance: FAIL {failed:?}");
        std::process::exit(1);
    }
}
