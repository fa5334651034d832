//! SGD with momentum, crop/mirror augmentation, and mixed-domain multi-head
//! training.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::metrics::EvalReport;
use crate::netspec::{LabelMode, NetworkSpec, ParamStore};
use crate::network::{head_loss, Gradients, Network};
use crate::tensor::Tensor;
use crate::video::{evaluate_split, Split, VideoRecord};

/// Head that trains on image-domain samples.
pub const IMAGE_HEAD: &str = "image";
/// Head that trains on video frames.
pub const VIDEO_HEAD: &str = "video";

/// Multiply the learning rate by `factor` every `every` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub every: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Random crops and mirroring during training; center crops otherwise.
    pub augment: bool,
    pub lr_decay: Option<StepDecay>,
    /// Held-out evaluation every this many epochs (0: final epoch only).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            augment: true,
            lr_decay: None,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if let Some(d) = self.lr_decay {
            if d.every == 0 || !(d.factor > 0.0) {
                return Err(Error::config("step decay needs every >= 1 and factor > 0"));
            }
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate * d.factor.powi((epoch / d.every) as i32),
            None => self.learning_rate,
        }
    }
}

fn update_tensor(w: &mut Tensor, v: &mut Tensor, g: &Tensor, cfg: &TrainConfig) -> Result<()> {
    if w.shape() != g.shape() || v.shape() != w.shape() {
        return Err(Error::shape(format!(
            "gradient {:?} does not match parameter {:?}",
            g.shape(),
            w.shape()
        )));
    }
    let (lr, m, wd) = (cfg.learning_rate, cfg.momentum, cfg.weight_decay);
    for ((wi, vi), gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
        *vi = m * *vi - lr * (gi + wd * *wi);
        *wi += *vi;
    }
    Ok(())
}

fn sgd_update(params: &mut ParamStore, grads: &Gradients, cfg: &TrainConfig, skip: &[bool]) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(Error::shape(format!(
            "{} gradient layers for {} parameter layers",
            grads.layers.len(),
            params.layers.len()
        )));
    }
    for (i, (l, g)) in params.layers.iter_mut().zip(&grads.layers).enumerate() {
        if l.frozen || skip.get(i).copied().unwrap_or(false) {
            continue;
        }
        update_tensor(&mut l.weight, &mut l.weight_velocity, &g.weight, cfg)?;
        update_tensor(&mut l.bias, &mut l.bias_velocity, &g.bias, cfg)?;
    }
    Ok(())
}

/// `v <- momentum * v - lr * (g + weight_decay * w); w <- w + v` on every
/// unfrozen tensor. Frozen layers keep weights and velocities untouched.
pub fn sgd_momentum_step(params: &mut ParamStore, grads: &Gradients, cfg: &TrainConfig) -> Result<()> {
    sgd_update(params, grads, cfg, &[])
}

/// Center `crop x crop` window (offsets rounded down).
pub fn center_crop(image: &Tensor, crop: usize) -> Result<Tensor> {
    let &[_, h, w] = image.shape() else {
        return Err(Error::shape(format!("crop needs [C, H, W], got {:?}", image.shape())));
    };
    if crop > h || crop > w {
        return Err(Error::param(format!("crop {crop} larger than image {h}x{w}")));
    }
    image.crop((h - crop) / 2, (w - crop) / 2, crop, crop)
}

/// Train mode: uniform random crop offset and a mirror with probability 1/2.
/// Eval mode: center crop without mirroring.
pub fn augment_sample(image: &Tensor, crop: usize, rng: &mut impl Rng, mode: Mode) -> Result<Tensor> {
    let &[_, h, w] = image.shape() else {
        return Err(Error::shape(format!("augment needs [C, H, W], got {:?}", image.shape())));
    };
    if crop > h || crop > w {
        return Err(Error::param(format!("crop {crop} larger than image {h}x{w}")));
    }
    match mode {
        Mode::Eval => center_crop(image, crop),
        Mode::Train => {
            let top = rng.random_range(0..=h - crop);
            let left = rng.random_range(0..=w - crop);
            let out = image.crop(top, left, crop, crop)?;
            if rng.random_bool(0.5) {
                out.mirror_horizontal()
            } else {
                Ok(out)
            }
        }
    }
}

/// Which head each domain trains. A single-head network routes both domains
/// to its only head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadRouting {
    pub image: Option<usize>,
    pub video: Option<usize>,
}

impl HeadRouting {
    pub fn for_spec(spec: &NetworkSpec) -> Self {
        if spec.heads.len() == 1 {
            return Self {
                image: Some(0),
                video: Some(0),
            };
        }
        Self {
            image: spec.head_index(IMAGE_HEAD),
            video: spec.head_index(VIDEO_HEAD),
        }
    }

    pub fn head_for(&self, domain: Domain) -> Result<usize> {
        let (h, name) = match domain {
            Domain::Image => (self.image, IMAGE_HEAD),
            Domain::VideoFrame => (self.video, VIDEO_HEAD),
        };
        h.ok_or_else(|| Error::config(format!("network has no {name} head for {domain:?} samples")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub head: usize,
    pub labels: Vec<usize>,
    pub domain: Domain,
}

/// Stacked `[B, C, h, w]` inputs with per-sample routing and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub samples: Vec<SampleMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleRef {
    Image(usize),
    Frame(usize),
}

/// One epoch's sample order. With frames present, images are subsampled to
/// the frame count: without replacement when there are enough, otherwise
/// all images plus the deficit drawn with replacement. Without frames every
/// image is used once.
fn epoch_plan(images: usize, frames: usize, rng: &mut impl Rng) -> Vec<SampleRef> {
    let mut plan: Vec<SampleRef> = Vec::with_capacity(2 * frames.max(images));
    if frames == 0 {
        plan.extend((0..images).map(SampleRef::Image));
    } else {
        plan.extend((0..frames).map(SampleRef::Frame));
        if images >= frames {
            plan.extend(index::sample(rng, images, frames).into_iter().map(SampleRef::Image));
        } else if images > 0 {
            plan.extend((0..images).map(SampleRef::Image));
            plan.extend((images..frames).map(|_| SampleRef::Image(rng.random_range(0..images))));
        }
    }
    plan.shuffle(rng);
    plan
}

struct BatchSource<'a> {
    images: &'a Dataset,
    frames: &'a Dataset,
    routing: HeadRouting,
    resolution: usize,
    crop: usize,
    mode: Mode,
}

impl BatchSource<'_> {
    fn build(&self, refs: &[SampleRef], rng: &mut impl Rng) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(refs.len());
        let mut samples = Vec::with_capacity(refs.len());
        for r in refs {
            let e = match *r {
                SampleRef::Image(i) => &self.images.entries[i],
                SampleRef::Frame(i) => &self.frames.entries[i],
            };
            let img = e.source.load(self.resolution)?;
            inputs.push(augment_sample(&img, self.crop, rng, self.mode)?);
            samples.push(SampleMeta {
                head: self.routing.head_for(e.domain)?,
                labels: e.labels.clone(),
                domain: e.domain,
            });
        }
        Ok(Batch {
            inputs: Tensor::stack(&inputs)?,
            samples,
        })
    }
}

/// One epoch of shuffled mixed-domain batches, images subsampled to the
/// frame count.
pub fn mixed_batch_iterator<'a, R: Rng>(
    image_ds: &'a Dataset,
    frame_ds: &'a Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    rng: &'a mut R,
) -> Result<impl Iterator<Item = Result<Batch>> + 'a> {
    if frame_ds.is_empty() {
        return Err(Error::config("mixed-domain training needs video frames"));
    }
    batches(image_ds, frame_ds, spec, cfg, rng)
}

fn batches<'a, R: Rng>(
    image_ds: &'a Dataset,
    frame_ds: &'a Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    rng: &'a mut R,
) -> Result<impl Iterator<Item = Result<Batch>> + 'a> {
    cfg.validate()?;
    let plan = epoch_plan(image_ds.len(), frame_ds.len(), rng);
    let source = BatchSource {
        images: image_ds,
        frames: frame_ds,
        routing: HeadRouting::for_spec(spec),
        resolution: spec.input_resolution,
        crop: spec.crop_resolution,
        mode: if cfg.augment { Mode::Train } else { Mode::Eval },
    };
    let bs = cfg.batch_size;
    let mut start = 0;
    Ok(std::iter::from_fn(move || {
        if start >= plan.len() {
            return None;
        }
        let end = (start + bs).min(plan.len());
        let b = source.build(&plan[start..end], rng);
        start = end;
        Some(b)
    }))
}

/// Per-head mean training loss and sample count of one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepLoss {
    pub per_head: BTreeMap<usize, (f64, usize)>,
}

/// Gradient of the batch-mean loss; each sample's loss comes from its own head only.
pub fn batch_gradient(
    spec: &NetworkSpec,
    params: &ParamStore,
    batch: &Batch,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Gradients, StepLoss)> {
    let net = Network::new(spec, params)?;
    let n = batch.samples.len();
    if n == 0 || batch.inputs.shape().first() != Some(&n) {
        return Err(Error::shape("batch inputs and samples disagree"));
    }
    let mut grads = Gradients::zeros_for(params);
    let mut loss = StepLoss::default();
    for (i, s) in batch.samples.iter().enumerate() {
        if s.head >= spec.heads.len() {
            return Err(Error::config(format!("sample routed to unknown head {}", s.head)));
        }
        let x = batch.inputs.slice_outer(i)?;
        let l = net.accumulate_sample(&x, s.head, &s.labels, mode, rng, 1.0 / n as f64, &mut grads)?;
        let e = loss.per_head.entry(s.head).or_insert((0.0, 0));
        e.0 += l;
        e.1 += 1;
    }
    for v in loss.per_head.values_mut() {
        v.0 /= v.1 as f64;
    }
    Ok((grads, loss))
}

/// Forward/backward over the batch and one optimizer step. Heads that
/// received no samples are left completely untouched.
pub fn multi_head_step(
    spec: &NetworkSpec,
    params: &mut ParamStore,
    batch: &Batch,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<StepLoss> {
    let (grads, loss) = batch_gradient(spec, params, batch, Mode::Train, rng)?;
    let first_head = params.layers.len() - spec.heads.len();
    let skip: Vec<bool> = (0..params.layers.len())
        .map(|i| i >= first_head && !loss.per_head.contains_key(&(i - first_head)))
        .collect();
    sgd_update(params, &grads, cfg, &skip)?;
    Ok(loss)
}

/// A held-out set evaluated after training epochs.
#[derive(Debug, Clone)]
pub enum HeldOut {
    /// Images scored by accuracy (single-label head) or MAP (multi-label).
    Images { head: String, dataset: Dataset },
    /// Videos of one split scored by video-level MAP; the loss is the mean
    /// keyframe loss.
    Videos { head: String, videos: Vec<VideoRecord>, split: Split },
}

#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub images: Dataset,
    pub frames: Dataset,
    pub heldout: Vec<HeldOut>,
}

/// One metrics-log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub head: String,
    pub train_loss: Option<f64>,
    pub heldout_loss: Option<f64>,
    pub heldout_metric: Option<f64>,
}

pub struct TrainOutcome {
    pub params: ParamStore,
    pub records: Vec<EpochRecord>,
    /// Reports of the last held-out evaluation, keyed by head name.
    pub final_reports: BTreeMap<String, EvalReport>,
}

/// Mean eval-mode loss and report of a head on an image set.
pub fn evaluate_images(spec: &NetworkSpec, params: &ParamStore, head: usize, ds: &Dataset) -> Result<EvalReport> {
    let net = Network::new(spec, params)?;
    let h = &spec.heads[head];
    let mut rows = Vec::with_capacity(ds.len());
    let mut labels = Vec::with_capacity(ds.len());
    let mut total = 0.0;
    for e in &ds.entries {
        let x = center_crop(&e.source.load(spec.input_resolution)?, spec.crop_resolution)?;
        let z = net.logits(head, &x)?;
        total += head_loss(h, &z, &e.labels)?.0;
        rows.push(crate::network::head_scores(h, z.data()));
        labels.push(e.labels.clone());
    }
    let mut report = EvalReport::from_scores(&rows, &labels, h.class_count, h.label_mode == LabelMode::Single)?;
    report.loss = Some(total / ds.len() as f64);
    Ok(report)
}

fn evaluate_videos(
    spec: &NetworkSpec,
    params: &ParamStore,
    head: usize,
    videos: &[VideoRecord],
    split: Split,
) -> Result<EvalReport> {
    let net = Network::new(spec, params)?;
    let mut report = evaluate_split(&net, head, videos, split)?;
    let h = &spec.heads[head];
    let (mut total, mut count) = (0.0, 0usize);
    for v in videos.iter().filter(|v| v.split == split) {
        for k in v.keyframe_indices()? {
            let x = center_crop(&v.frames[k].source.load(spec.input_resolution)?, spec.crop_resolution)?;
            total += head_loss(h, &net.logits(head, &x)?, &v.labels)?.0;
            count += 1;
        }
    }
    report.loss = (count > 0).then(|| total / count as f64);
    Ok(report)
}

fn headline(report: &EvalReport, mode: LabelMode) -> Option<f64> {
    match mode {
        LabelMode::Single => report.top1,
        LabelMode::Multi => report.map,
    }
}

/// `cfg.epochs` passes over the training data. Records one row per head
/// per epoch: training-mode loss of the head's samples and, on evaluation
/// epochs, held-out loss and metric.
pub fn train(
    spec: &NetworkSpec,
    mut params: ParamStore,
    data: &TrainData,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&[EpochRecord]),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    params.matches(spec)?;
    if cfg.epochs > 0 && data.images.is_empty() && data.frames.is_empty() {
        return Err(Error::config("training needs at least one sample"));
    }
    let routing = HeadRouting::for_spec(spec);
    if !data.images.is_empty() {
        routing.head_for(Domain::Image)?;
    }
    if !data.frames.is_empty() {
        routing.head_for(Domain::VideoFrame)?;
    }
    let heldout: Vec<(usize, &HeldOut)> = data
        .heldout
        .iter()
        .map(|h| {
            let name = match h {
                HeldOut::Images { head, .. } | HeldOut::Videos { head, .. } => head,
            };
            spec.head_index(name)
                .map(|i| (i, h))
                .ok_or_else(|| Error::config(format!("held-out set for unknown head {name}")))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut final_reports = BTreeMap::new();
    for epoch in 0..cfg.epochs {
        let step_cfg = TrainConfig {
            learning_rate: cfg.learning_rate_at(epoch),
            ..cfg.clone()
        };
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        let mut batch_rng = ChaCha8Rng::from_rng(&mut rng);
        let mut step_rng = ChaCha8Rng::from_rng(&mut rng);
        for batch in batches(&data.images, &data.frames, spec, cfg, &mut batch_rng)? {
            let loss = multi_head_step(spec, &mut params, &batch?, &step_cfg, &mut step_rng)?;
            for (h, (l, n)) in loss.per_head {
                let e = sums.entry(h).or_insert((0.0, 0));
                e.0 += l * n as f64;
                e.1 += n;
            }
        }
        let evaluate = epoch + 1 == cfg.epochs || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0);
        let mut rows: BTreeMap<usize, EpochRecord> = sums
            .iter()
            .map(|(&h, &(l, n))| {
                (
                    h,
                    EpochRecord {
                        epoch: epoch + 1,
                        head: spec.heads[h].name.clone(),
                        train_loss: Some(l / n as f64),
                        heldout_loss: None,
                        heldout_metric: None,
                    },
                )
            })
            .collect();
        if evaluate {
            for &(h, set) in &heldout {
                let report = match set {
                    HeldOut::Images { dataset, .. } => evaluate_images(spec, &params, h, dataset)?,
                    HeldOut::Videos { videos, split, .. } => evaluate_videos(spec, &params, h, videos, *split)?,
                };
                let row = rows.entry(h).or_insert_with(|| EpochRecord {
                    epoch: epoch + 1,
                    head: spec.heads[h].name.clone(),
                    train_loss: None,
                    heldout_loss: None,
                    heldout_metric: None,
                });
                row.heldout_loss = report.loss;
                row.heldout_metric = headline(&report, spec.heads[h].label_mode);
                final_reports.insert(spec.heads[h].name.clone(), report);
            }
        }
        let rows: Vec<EpochRecord> = rows.into_values().collect();
        on_epoch(&rows);
        records.extend(rows);
    }
    Ok(TrainOutcome {
        params,
        records,
        final_reports,
    })
}

pub const METRICS_HEADER: &str = "epoch,head,train_loss,heldout_loss,heldout_metric";

/// Metrics log as CSV; missing values are empty fields.
pub fn format_metrics_log(records: &[EpochRecord]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut s = format!("{METRICS_HEADER}\n");
    for r in records {
        writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch,
            r.head,
            f(r.train_loss),
            f(r.heldout_loss),
            f(r.heldout_metric)
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Entry, ImageSource};
    use crate::netspec::{init_params, HeadSpec, LayerSpec};
    use std::sync::Arc;

    fn one_layer_store(w: f64) -> (ParamStore, Gradients) {
        let spec = NetworkSpec::new(32, 1, vec![], vec![HeadSpec::single("h", 2)]).unwrap();
        let mut p = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(0), 0.0).unwrap();
        p.layers[0].weight.data_mut().fill(w);
        let mut g = Gradients::zeros_for(&p);
        g.layers[0].weight.data_mut().fill(0.5);
        (p, g)
    }

    #[test]
    fn momentum_recurrence() {
        let (mut p, g) = one_layer_store(1.0);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        sgd_momentum_step(&mut p, &g, &cfg).unwrap();
        assert!((p.layers[0].weight.data()[0] - 0.95).abs() < 1e-15);
        sgd_momentum_step(&mut p, &g, &cfg).unwrap();
        assert!((p.layers[0].weight.data()[0] - 0.855).abs() < 1e-15);
    }

    #[test]
    fn plain_sgd_and_frozen_layers() {
        let (mut p, g) = one_layer_store(1.0);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        sgd_momentum_step(&mut p, &g, &cfg).unwrap();
        assert!((p.layers[0].weight.data()[0] - 0.95).abs() < 1e-15);
        p.layers[0].frozen = true;
        let before = p.clone();
        for _ in 0..5 {
            sgd_momentum_step(&mut p, &g, &cfg).unwrap();
        }
        assert_eq!(p, before);
        let bad = Gradients { layers: vec![] };
        assert!(sgd_momentum_step(&mut p, &bad, &cfg).is_err());
    }

    #[test]
    fn augment_modes() {
        let img = Tensor::from_vec(&[1, 4, 4], (0..16).map(f64::from).collect()).unwrap();
        let c = augment_sample(&img, 2, &mut ChaCha8Rng::seed_from_u64(0), Mode::Eval).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
        assert!(augment_sample(&img, 5, &mut ChaCha8Rng::seed_from_u64(0), Mode::Train).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = augment_sample(&img, 2, &mut rng, Mode::Train).unwrap();
            assert_eq!(t.shape(), &[1, 2, 2]);
        }
        // left-right symmetric image: the centered window is mirror-invariant
        let sym = Tensor::from_vec(&[1, 4, 4], (0..16).map(|i| f64::from([1, 2, 2, 1][i % 4] * (i / 4 + 1) as i32)).collect()).unwrap();
        let centered = sym.crop(1, 1, 2, 2).unwrap();
        let eval = augment_sample(&sym, 2, &mut rng, Mode::Eval).unwrap();
        assert_eq!(eval, centered);
        assert_eq!(eval, centered.mirror_horizontal().unwrap());
    }

    fn memory_ds(n: usize, domain: Domain, class_count: usize) -> Dataset {
        let entries = (0..n)
            .map(|i| {
                let v = (i % class_count) as f64 / class_count as f64;
                let img = Tensor::full(&[3, 32, 32], v).unwrap();
                Entry::new(ImageSource::Memory(Arc::new(img)), vec![i % class_count], domain)
            })
            .collect();
        Dataset::new(class_count, entries).unwrap()
    }

    fn two_head_spec() -> NetworkSpec {
        let trunk = vec![LayerSpec::conv(2, 5, 4, 0), LayerSpec::Relu, LayerSpec::Fc { width: 4 }];
        NetworkSpec::new(32, 3, trunk, vec![HeadSpec::single("image", 3), HeadSpec::multi("video", 3)]).unwrap()
    }

    #[test]
    fn epoch_balances_domains() {
        let images = memory_ds(1000, Domain::Image, 3);
        let frames = memory_ds(100, Domain::VideoFrame, 3);
        let spec = two_head_spec();
        let cfg = TrainConfig { batch_size: 7, ..TrainConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = (0, 0);
        for b in mixed_batch_iterator(&images, &frames, &spec, &cfg, &mut rng).unwrap() {
            for s in b.unwrap().samples {
                match s.domain {
                    Domain::Image => counts.0 += 1,
                    Domain::VideoFrame => counts.1 += 1,
                }
            }
        }
        assert_eq!(counts, (100, 100));
        let empty = Dataset::default();
        let n: usize = mixed_batch_iterator(&empty, &frames, &spec, &cfg, &mut rng)
            .unwrap()
            .map(|b| b.unwrap().samples.len())
            .sum();
        assert_eq!(n, 100);
        assert!(mixed_batch_iterator(&images, &empty, &spec, &cfg, &mut rng).is_err());
    }

    #[test]
    fn small_image_pool_is_topped_up_with_replacement() {
        let plan = epoch_plan(3, 10, &mut ChaCha8Rng::seed_from_u64(0));
        let imgs: Vec<usize> = plan
            .iter()
            .filter_map(|r| match r {
                SampleRef::Image(i) => Some(*i),
                _ => None,
            })
            .collect();
        assert_eq!(imgs.len(), 10);
        for i in 0..3 {
            assert!(imgs.contains(&i));
        }
    }

    #[test]
    fn batches_are_deterministic() {
        let images = memory_ds(30, Domain::Image, 3);
        let frames = memory_ds(10, Domain::VideoFrame, 3);
        let spec = two_head_spec();
        let cfg = TrainConfig::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            mixed_batch_iterator(&images, &frames, &spec, &cfg, &mut rng)
                .unwrap()
                .map(|b| b.unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn idle_head_is_untouched() {
        let spec = two_head_spec();
        let mut params = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(0), 0.1).unwrap();
        let images = memory_ds(8, Domain::Image, 3);
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut step_rng = ChaCha8Rng::seed_from_u64(1);
        let before = params.clone();
        let empty = Dataset::default();
        for b in batches(&images, &empty, &spec, &cfg, &mut rng).unwrap() {
            multi_head_step(&spec, &mut params, &b.unwrap(), &cfg, &mut step_rng).unwrap();
        }
        let video = params.get("head:video").unwrap();
        assert_eq!(video, before.get("head:video").unwrap());
        assert!(video.weight_velocity.data().iter().all(|&v| v == 0.0));
        assert_ne!(params.get("head:image"), before.get("head:image"));
    }

    #[test]
    fn unknown_head_is_a_config_error() {
        let spec = NetworkSpec::new(32, 3, vec![], vec![HeadSpec::single("image", 3), HeadSpec::single("other", 3)]).unwrap();
        let params = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(0), 0.1).unwrap();
        let data = TrainData {
            frames: memory_ds(4, Domain::VideoFrame, 3),
            ..TrainData::default()
        };
        let r = train(&spec, params, &data, &TrainConfig::default(), |_| {});
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let spec = two_head_spec();
        let params = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(0), 0.1).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(&spec, params.clone(), &TrainData::default(), &cfg, |_| {}).unwrap();
        assert_eq!(out.params, params);
        assert!(out.records.is_empty());
    }

    #[test]
    fn metrics_log_format() {
        let r = EpochRecord {
            epoch: 1,
            head: "image".into(),
            train_loss: Some(0.5),
            heldout_loss: None,
            heldout_metric: Some(0.25),
        };
        assert_eq!(format_metrics_log(&[r]), format!("{METRICS_HEADER}\n1,image,0.500000,,0.250000\n"));
    }
}
