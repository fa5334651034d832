//! Seeded two-domain corpus: single-label images and multi-label videos that
//! share per-class corner motifs but differ in background texture.
//!
//! Class `c` is a corner of two bars meeting at a vertex, opening upward for
//! even `c` and downward for odd `c`, with an opening angle that grows with
//! `c / 2`. Every motif is symmetric about the vertical axis, so horizontal
//! mirroring never changes a sample's class.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Domain, Entry, ImageSource};
use crate::error::{Error, Result};
use crate::netspec::RESOLUTIONS;
use crate::tensor::Tensor;
use crate::video::{Frame, Split, VideoRecord};

const IMAGE_STREAM: u64 = 0;
const VIDEO_STREAM: u64 = 1;

/// Background of one domain: a per-channel base level plus a sum of
/// sinusoidal gratings with random orientation and phase per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStyle {
    pub base: [f64; 3],
    pub texture_amplitude: f64,
    /// Grating period as a fraction of the image side.
    pub texture_period: f64,
    pub gratings: usize,
}

impl DomainStyle {
    /// Smooth, warm backgrounds.
    pub fn domain_a() -> Self {
        Self {
            base: [0.30, 0.25, 0.20],
            texture_amplitude: 0.10,
            texture_period: 1.5,
            gratings: 1,
        }
    }

    /// Finely textured, cool backgrounds.
    pub fn domain_b() -> Self {
        Self {
            base: [0.18, 0.24, 0.30],
            texture_amplitude: 0.15,
            texture_period: 0.2,
            gratings: 2,
        }
    }

    fn validate(&self) -> Result<()> {
        let a = self.texture_amplitude;
        if !(a >= 0.0) || self.base.iter().any(|&b| !(b - a >= 0.0 && b + a <= 0.5)) {
            return Err(Error::config("domain background must stay within [0, 0.5]"));
        }
        if !(self.texture_period > 0.0) || self.gratings == 0 {
            return Err(Error::config("texture needs a positive period and at least one grating"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub class_count: usize,
    pub image_domain_size: usize,
    pub video_count: usize,
    pub frames_per_video: usize,
    pub resolution: usize,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    /// Probability that an image's label is replaced by another class.
    pub label_noise: f64,
    /// Probability that a video frame shows no motif at all.
    pub irrelevant_fraction: f64,
    /// Probability that a video carries a second label.
    pub second_label_prob: f64,
    pub test_fraction: f64,
    /// Source frame rate of generated videos.
    pub source_fps: f64,
    /// Uniform motif offset range, as a fraction of the image side.
    pub position_jitter: f64,
    /// Per-frame random-walk step of video motifs, in pixels.
    pub frame_drift: f64,
    pub motif_intensity: f64,
    pub image_style: DomainStyle,
    pub video_style: DomainStyle,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            class_count: 6,
            image_domain_size: 600,
            video_count: 24,
            frames_per_video: 16,
            resolution: 32,
            noise: 0.1,
            label_noise: 0.0,
            irrelevant_fraction: 0.15,
            second_label_prob: 0.3,
            test_fraction: 0.5,
            source_fps: 4.0,
            position_jitter: 0.12,
            frame_drift: 1.0,
            motif_intensity: 0.5,
            image_style: DomainStyle::domain_a(),
            video_style: DomainStyle::domain_b(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("class_count", self.class_count),
            ("image_domain_size", self.image_domain_size),
            ("video_count", self.video_count),
            ("frames_per_video", self.frames_per_video),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if self.class_count < 2 {
            return Err(Error::config("synthetic corpus needs at least 2 classes"));
        }
        if !RESOLUTIONS.iter().any(|&(r, _)| r == self.resolution) {
            return Err(Error::config(format!("resolution {} unsupported", self.resolution)));
        }
        let probs = [
            ("label_noise", self.label_noise),
            ("irrelevant_fraction", self.irrelevant_fraction),
            ("second_label_prob", self.second_label_prob),
            ("test_fraction", self.test_fraction),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.noise >= 0.0) || !(self.frame_drift >= 0.0) || !(self.position_jitter >= 0.0) {
            return Err(Error::config("noise, drift and jitter must be non-negative"));
        }
        if !(self.source_fps > 0.0) {
            return Err(Error::config("source_fps must be positive"));
        }
        if !(self.motif_intensity > 0.0 && self.motif_intensity <= 0.5) {
            return Err(Error::config("motif_intensity must lie in (0, 0.5]"));
        }
        self.image_style.validate()?;
        self.video_style.validate()
    }
}

pub struct SynthOutput {
    pub images: Dataset,
    pub videos: Vec<VideoRecord>,
}

/// Arm directions of class `c`'s corner, in radians (y axis pointing down).
pub fn motif_arms(class: usize, class_count: usize) -> (f64, f64) {
    let pairs = class_count.div_ceil(2);
    let opening = if pairs == 1 {
        PI / 2.0
    } else {
        let k = (class / 2) as f64 / (pairs - 1) as f64;
        (40.0 + 100.0 * k).to_radians()
    };
    // Upward corners open toward -y (the top of the image).
    let axis = if class % 2 == 0 { -PI / 2.0 } else { PI / 2.0 };
    (axis - opening / 2.0, axis + opening / 2.0)
}

fn segment_distance(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let t = (((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    let (cx, cy) = (ax + t * dx - px, ay + t * dy - py);
    (cx * cx + cy * cy).sqrt()
}

/// Coverage mask (`[R, R]`, values in `[0, 1]`) of class `c`'s corner with
/// its arm-midpoint centroid at `(cx, cy)`.
pub fn motif_mask(class: usize, class_count: usize, resolution: usize, cx: f64, cy: f64) -> Vec<f64> {
    let r = resolution as f64;
    let len = 0.3 * r;
    let half_width = (0.035 * r).max(0.75);
    let (a1, a2) = motif_arms(class, class_count);
    let (e1, e2) = ((a1.cos(), a1.sin()), (a2.cos(), a2.sin()));
    let vx = cx - 0.5 * len * (e1.0 + e2.0) / 2.0;
    let vy = cy - 0.5 * len * (e1.1 + e2.1) / 2.0;
    let ends = [
        (vx + len * e1.0, vy + len * e1.1),
        (vx + len * e2.0, vy + len * e2.1),
    ];
    let mut mask = vec![0.0; resolution * resolution];
    for y in 0..resolution {
        for x in 0..resolution {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let d = ends
                .iter()
                .map(|&(bx, by)| segment_distance(px, py, vx, vy, bx, by))
                .fold(f64::INFINITY, f64::min);
            // one-pixel linear edge for anti-aliasing
            mask[y * resolution + x] = (half_width + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    mask
}

fn background(style: &DomainStyle, resolution: usize, rng: &mut impl Rng) -> Vec<f64> {
    let plane = resolution * resolution;
    let period = style.texture_period * resolution as f64;
    let gratings: Vec<(f64, f64, f64)> = (0..style.gratings)
        .map(|_| {
            let phi = rng.random_range(0.0..PI);
            (phi.cos(), phi.sin(), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let mut field = vec![0.0; plane];
    for y in 0..resolution {
        for x in 0..resolution {
            let s: f64 = gratings
                .iter()
                .map(|&(c, s, ph)| (2.0 * PI * (x as f64 * c + y as f64 * s) / period + ph).sin())
                .sum();
            field[y * resolution + x] = s / style.gratings as f64;
        }
    }
    let mut out = vec![0.0; 3 * plane];
    for ch in 0..3 {
        for (o, f) in out[ch * plane..(ch + 1) * plane].iter_mut().zip(&field) {
            *o = style.base[ch] + style.texture_amplitude * f;
        }
    }
    out
}

struct Painter<'a> {
    cfg: &'a SynthConfig,
    noise: Option<Normal<f64>>,
}

impl<'a> Painter<'a> {
    fn new(cfg: &'a SynthConfig) -> Self {
        Self {
            cfg,
            noise: (cfg.noise > 0.0).then(|| Normal::new(0.0, cfg.noise).expect("validated noise")),
        }
    }

    fn jittered_center(&self, rng: &mut impl Rng, dx: f64) -> (f64, f64) {
        let r = self.cfg.resolution as f64;
        let j = self.cfg.position_jitter * r;
        let mut u = || if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
        (r / 2.0 + dx + u(), r / 2.0 + u())
    }

    fn render(
        &self,
        style: &DomainStyle,
        motifs: &[(usize, f64, f64)],
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        let res = self.cfg.resolution;
        let plane = res * res;
        let mut px = background(style, res, rng);
        let mut cover = vec![0.0f64; plane];
        for &(class, cx, cy) in motifs {
            let m = motif_mask(class, self.cfg.class_count, res, cx, cy);
            cover.iter_mut().zip(&m).for_each(|(c, v)| *c = c.max(*v));
        }
        for ch in 0..3 {
            for (p, c) in px[ch * plane..(ch + 1) * plane].iter_mut().zip(&cover) {
                *p += self.cfg.motif_intensity * c;
            }
        }
        if let Some(n) = &self.noise {
            for p in &mut px {
                *p = (*p + n.sample(rng)).clamp(0.0, 1.0);
            }
        }
        Tensor::from_vec(&[3, res, res], px)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `count` domain-A images with balanced (pre-noise) labels `i mod K`; each
/// `stream` gives an independent draw for the same seed.
pub fn synth_images(cfg: &SynthConfig, count: usize, stream: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, stream);
    let painter = Painter::new(cfg);
    let k = cfg.class_count;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % k;
        let (cx, cy) = painter.jittered_center(&mut rng, 0.0);
        let img = painter.render(&cfg.image_style, &[(class, cx, cy)], &mut rng)?;
        let mut label = class;
        if cfg.label_noise > 0.0 && rng.random_bool(cfg.label_noise) {
            label = (class + rng.random_range(1..k)) % k;
        }
        entries.push(Entry::new(ImageSource::Memory(Arc::new(img)), vec![label], Domain::Image));
    }
    Dataset::new(k, entries)
}

fn synth_video(
    cfg: &SynthConfig,
    painter: &Painter<'_>,
    index: usize,
    split: Split,
    rng: &mut ChaCha8Rng,
) -> Result<VideoRecord> {
    let k = cfg.class_count;
    let res = cfg.resolution as f64;
    let mut labels = vec![index % k];
    if k > 1 && rng.random_bool(cfg.second_label_prob) {
        labels.push((index % k + rng.random_range(1..k)) % k);
    }
    let spread = if labels.len() == 2 { res / 5.0 } else { 0.0 };
    let mut centers: Vec<(f64, f64)> = labels
        .iter()
        .enumerate()
        .map(|(j, _)| painter.jittered_center(rng, if j == 0 { -spread } else { spread }))
        .collect();
    let limit = |v: f64| v.clamp(0.3 * res, 0.7 * res);
    let mut frames = Vec::with_capacity(cfg.frames_per_video);
    for f in 0..cfg.frames_per_video {
        if f > 0 && cfg.frame_drift > 0.0 {
            for c in &mut centers {
                let d = cfg.frame_drift;
                c.0 = limit(c.0 + rng.random_range(-d..=d));
                c.1 = limit(c.1 + rng.random_range(-d..=d));
            }
        }
        let irrelevant = cfg.irrelevant_fraction > 0.0 && rng.random_bool(cfg.irrelevant_fraction);
        let motifs: Vec<(usize, f64, f64)> = if irrelevant {
            Vec::new()
        } else {
            labels.iter().zip(&centers).map(|(&l, &(x, y))| (l, x, y)).collect()
        };
        let img = painter.render(&cfg.video_style, &motifs, rng)?;
        frames.push(Frame {
            timestamp: f as f64 / cfg.source_fps,
            source: ImageSource::Memory(Arc::new(img)),
        });
    }
    VideoRecord::new(format!("video{index:04}"), frames, labels, split, None)
}

/// The image domain (stream 0) and the video domain (stream 1). Video `i`
/// always carries class `i mod K`; the last `round(test_fraction * n)`
/// videos form the test split.
pub fn synth_two_domain(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let images = synth_images(cfg, cfg.image_domain_size, IMAGE_STREAM)?;
    let mut rng = stream_rng(cfg.seed, VIDEO_STREAM);
    let painter = Painter::new(cfg);
    let n_test = (cfg.test_fraction * cfg.video_count as f64).round() as usize;
    let videos = (0..cfg.video_count)
        .map(|i| {
            let split = if i + n_test >= cfg.video_count { Split::Test } else { Split::Train };
            synth_video(cfg, &painter, i, split, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(SynthOutput { images, videos })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_of(e: &Entry) -> Tensor {
        e.source.load(32).unwrap()
    }

    #[test]
    fn same_seed_is_identical() {
        let cfg = SynthConfig {
            image_domain_size: 20,
            video_count: 4,
            frames_per_video: 3,
            ..SynthConfig::default()
        };
        let a = synth_two_domain(&cfg).unwrap();
        let b = synth_two_domain(&cfg).unwrap();
        assert_eq!(a.images, b.images);
        assert_eq!(a.videos, b.videos);
        let c = synth_two_domain(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn noiseless_samples_are_motif_translates() {
        let cfg = SynthConfig {
            noise: 0.0,
            image_style: DomainStyle {
                texture_amplitude: 0.0,
                ..DomainStyle::domain_a()
            },
            ..SynthConfig::default()
        };
        let ds = synth_images(&cfg, 12, 0).unwrap();
        let k = cfg.class_count;
        for c in 0..k {
            let a = image_of(&ds.entries[c]);
            let b = image_of(&ds.entries[c + k]);
            let bg = cfg.image_style.base[0];
            let mass = |t: &Tensor| t.data()[..1024].iter().map(|v| v - bg).sum::<f64>();
            // same motif, different position: equal ink up to edge sampling
            assert!((mass(&a) - mass(&b)).abs() / mass(&a) < 0.1);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { class_count: 1, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { resolution: 48, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { label_noise: 1.5, ..SynthConfig::default() }.validate().is_err());
        let loud = DomainStyle { texture_amplitude: 0.4, ..DomainStyle::domain_a() };
        assert!(SynthConfig { video_style: loud, ..SynthConfig::default() }.validate().is_err());
    }

    #[test]
    fn videos_are_split_and_timed() {
        let cfg = SynthConfig {
            image_domain_size: 1,
            video_count: 10,
            frames_per_video: 8,
            ..SynthConfig::default()
        };
        let out = synth_two_domain(&cfg).unwrap();
        let test = out.videos.iter().filter(|v| v.split == Split::Test).count();
        assert_eq!(test, 5);
        assert!(out.videos[9].split == Split::Test && out.videos[0].split == Split::Train);
        let ts: Vec<f64> = out.videos[0].frames.iter().map(|f| f.timestamp).collect();
        assert_eq!(ts, (0..8).map(|i| i as f64 * 0.25).collect::<Vec<_>>());
        assert!(out.videos.iter().all(|v| v.labels.contains(&(v.id[5..].parse::<usize>().unwrap() % 6))));
    }

    /// Best zero-mean template correlation over translations of the
    /// luminance, per class.
    fn matched_filter(img: &Tensor, k: usize) -> usize {
        let r = 32;
        let lum: Vec<f64> = (0..r * r)
            .map(|p| (0..3).map(|c| img.data()[c * r * r + p]).sum::<f64>() / 3.0)
            .collect();
        let mut best = (f64::NEG_INFINITY, 0);
        for c in 0..k {
            let mut t = motif_mask(c, k, r, 16.0, 16.0);
            let mean = t.iter().sum::<f64>() / t.len() as f64;
            t.iter_mut().for_each(|v| *v -= mean);
            for dy in -5i32..=5 {
                for dx in -5i32..=5 {
                    let mut s = 0.0;
                    for y in 0..r as i32 {
                        for x in 0..r as i32 {
                            let (sy, sx) = (y + dy, x + dx);
                            if (0..r as i32).contains(&sy) && (0..r as i32).contains(&sx) {
                                s += t[(y * 32 + x) as usize] * lum[(sy * 32 + sx) as usize];
                            }
                        }
                    }
                    if s > best.0 {
                        best = (s, c);
                    }
                }
            }
        }
        best.1
    }

    #[test]
    fn class_is_recoverable_by_matched_filtering() {
        let cfg = SynthConfig::default();
        let ds = synth_images(&cfg, 60, 3).unwrap();
        let hits = ds
            .entries
            .iter()
            .filter(|e| matched_filter(&image_of(e), cfg.class_count) == e.labels[0])
            .count();
        assert!(hits >= 54, "matched filter recovered {hits}/60");
    }
}
