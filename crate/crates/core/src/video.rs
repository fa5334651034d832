//! Video records, frame sampling, label propagation, and average-pooling
//! late fusion of per-keyframe scores.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Domain, Entry, ImageSource};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::netspec::LabelMode;
use crate::network::Network;
use crate::trainer::center_crop;

/// Slack when comparing frame timestamps against sampling targets.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub source: ImageSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub frames: Vec<Frame>,
    /// Sorted, unique class indices.
    pub labels: Vec<usize>,
    pub split: Split,
    pub keyframes: Option<Vec<usize>>,
}

impl VideoRecord {
    pub fn new(
        id: impl Into<String>,
        frames: Vec<Frame>,
        mut labels: Vec<usize>,
        split: Split,
        keyframes: Option<Vec<usize>>,
    ) -> Result<Self> {
        labels.sort_unstable();
        labels.dedup();
        let v = Self {
            id: id.into(),
            frames,
            labels,
            split,
            keyframes,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.frames.windows(2) {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::config(format!(
                    "video {}: timestamps must strictly increase ({} then {})",
                    self.id, w[0].timestamp, w[1].timestamp
                )));
            }
        }
        if self.frames.iter().any(|f| !f.timestamp.is_finite()) {
            return Err(Error::config(format!("video {}: non-finite timestamp", self.id)));
        }
        if let Some(k) = &self.keyframes {
            let mut seen = BTreeSet::new();
            for &i in k {
                if i >= self.frames.len() {
                    return Err(Error::config(format!(
                        "video {}: keyframe {i} beyond {} frames",
                        self.id,
                        self.frames.len()
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::config(format!("video {}: duplicate keyframe {i}", self.id)));
                }
            }
        }
        Ok(())
    }

    /// Explicit keyframes, or 1-fps samples when none are annotated.
    pub fn keyframe_indices(&self) -> Result<Vec<usize>> {
        match &self.keyframes {
            Some(k) => Ok(k.clone()),
            None => sample_frames(self, 1.0),
        }
    }
}

/// Per-class video-level scores.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoScore {
    pub id: String,
    pub scores: Vec<f64>,
}

/// Indices of the frames sampled at timestamps `0, 1/fps, 2/fps, ...`, each
/// resolved to the latest frame at or before the target. No frame repeats.
pub fn sample_frames(video: &VideoRecord, fps: f64) -> Result<Vec<usize>> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::param(format!("fps must be positive, got {fps}")));
    }
    let Some(last) = video.frames.last() else {
        return Ok(Vec::new());
    };
    let end = last.timestamp + TIME_EPS;
    let mut out: Vec<usize> = Vec::new();
    let mut cursor = 0usize;
    for k in 0u64.. {
        let target = k as f64 / fps;
        if target > end {
            break;
        }
        while cursor + 1 < video.frames.len()
            && video.frames[cursor + 1].timestamp <= target + TIME_EPS
        {
            cursor += 1;
        }
        if video.frames[cursor].timestamp > target + TIME_EPS {
            continue;
        }
        if out.last() != Some(&cursor) {
            out.push(cursor);
        }
    }
    Ok(out)
}

/// Frame entries carrying the full video label set.
pub fn propagate_labels(video: &VideoRecord, frames: &[usize]) -> Result<Vec<Entry>> {
    if video.labels.is_empty() {
        return Err(Error::config(format!("video {} has no labels", video.id)));
    }
    frames
        .iter()
        .map(|&i| {
            let f = video
                .frames
                .get(i)
                .ok_or_else(|| Error::param(format!("video {}: no frame {i}", video.id)))?;
            Ok(Entry::new(f.source.clone(), video.labels.clone(), Domain::VideoFrame))
        })
        .collect()
}

/// Frame dataset of every video in `split`, sampled at `fps`.
pub fn frame_dataset(
    videos: &[VideoRecord],
    split: Split,
    fps: f64,
    class_count: usize,
) -> Result<Dataset> {
    let mut entries = Vec::new();
    for v in videos.iter().filter(|v| v.split == split) {
        entries.extend(propagate_labels(v, &sample_frames(v, fps)?)?);
    }
    Dataset::new(class_count, entries)
}

/// Mean of the head's post-activation keyframe scores (center crop, eval mode).
pub fn predict_video(net: &Network<'_>, head: usize, video: &VideoRecord) -> Result<VideoScore> {
    let keys = video.keyframe_indices()?;
    predict_frames(net, head, video, &keys)
}

/// Late fusion over an explicit duplicate-free list of frame indices.
pub fn predict_frames(
    net: &Network<'_>,
    head: usize,
    video: &VideoRecord,
    frames: &[usize],
) -> Result<VideoScore> {
    if frames.is_empty() {
        return Err(Error::EmptyVideo(video.id.clone()));
    }
    let mut seen = BTreeSet::new();
    let res = net.spec.input_resolution;
    let crop = net.spec.crop_resolution;
    let mut sum: Vec<f64> = Vec::new();
    for &i in frames {
        if !seen.insert(i) {
            return Err(Error::param(format!("video {}: keyframe {i} repeated", video.id)));
        }
        let f = video
            .frames
            .get(i)
            .ok_or_else(|| Error::param(format!("video {}: no frame {i}", video.id)))?;
        let img = center_crop(&f.source.load(res)?, crop)?;
        let s = net.predict(head, &img)?;
        if sum.is_empty() {
            sum = s;
        } else {
            sum.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        }
    }
    let n = frames.len() as f64;
    Ok(VideoScore {
        id: video.id.clone(),
        scores: sum.into_iter().map(|v| v / n).collect(),
    })
}

/// Video-level AP/MAP (and top-k for single-label heads) over one split.
pub fn evaluate_split(
    net: &Network<'_>,
    head: usize,
    videos: &[VideoRecord],
    split: Split,
) -> Result<EvalReport> {
    let selected: Vec<&VideoRecord> = videos.iter().filter(|v| v.split == split).collect();
    if selected.is_empty() {
        return Err(Error::config(format!("no {} videos to evaluate", split.tag())));
    }
    let h = &net.spec.heads[head];
    let mut rows = Vec::with_capacity(selected.len());
    let mut labels = Vec::with_capacity(selected.len());
    for v in selected {
        if v.labels.is_empty() {
            return Err(Error::config(format!("video {} has no labels", v.id)));
        }
        rows.push(predict_video(net, head, v)?.scores);
        labels.push(v.labels.clone());
    }
    EvalReport::from_scores(&rows, &labels, h.class_count, h.label_mode == LabelMode::Single)
}
