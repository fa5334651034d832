//! Datasets, image decoding, manifests, and the synthetic two-domain corpus.

pub mod image;
pub mod manifest;
pub mod synth;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use image::{decode_ppm, encode_ppm, load_image, resize_bilinear};
pub use manifest::{load_manifest, load_video_manifest, write_manifest, write_video_manifest};
pub use synth::{synth_images, synth_two_domain, DomainStyle, SynthConfig, SynthOutput};

/// Where a sample came from; selects the head it trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Image,
    VideoFrame,
}

impl Domain {
    pub fn tag(self) -> &'static str {
        match self {
            Domain::Image => "image",
            Domain::VideoFrame => "frame",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "image" => Some(Domain::Image),
            "frame" | "video_frame" => Some(Domain::VideoFrame),
            _ => None,
        }
    }
}

/// An image file or an already decoded `[3, H, W]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Path(PathBuf),
    Memory(Arc<Tensor>),
}

impl ImageSource {
    /// Decode (if needed) and resize to `resolution x resolution`.
    pub fn load(&self, resolution: usize) -> Result<Tensor> {
        match self {
            ImageSource::Path(p) => load_image(p, resolution),
            ImageSource::Memory(t) => {
                let s = t.shape();
                if s.len() != 3 {
                    return Err(Error::shape(format!("image tensor of shape {s:?}")));
                }
                if s[1] == resolution && s[2] == resolution {
                    Ok((**t).clone())
                } else {
                    resize_bilinear(t, resolution, resolution)
                }
            }
        }
    }
}

/// One labeled sample. Labels are sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub source: ImageSource,
    pub labels: Vec<usize>,
    pub domain: Domain,
}

impl Entry {
    pub fn new(source: ImageSource, mut labels: Vec<usize>, domain: Domain) -> Self {
        labels.sort_unstable();
        labels.dedup();
        Self {
            source,
            labels,
            domain,
        }
    }
}

/// Labeled samples over a vocabulary of `class_count` classes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub class_count: usize,
    pub entries: Vec<Entry>,
}

impl Dataset {
    pub fn new(class_count: usize, entries: Vec<Entry>) -> Result<Self> {
        let ds = Self {
            class_count,
            entries,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.labels.is_empty() {
                return Err(Error::config(format!("entry {i} has no labels")));
            }
            if let Some(&bad) = e.labels.iter().find(|&&l| l >= self.class_count) {
                return Err(Error::config(format!(
                    "entry {i}: label {bad} outside {} classes",
                    self.class_count
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy with every file decoded into memory at `resolution`.
    pub fn materialize(&self, resolution: usize) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let t = e.source.load(resolution)?;
                Ok(Entry {
                    source: ImageSource::Memory(Arc::new(t)),
                    ..e.clone()
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            class_count: self.class_count,
            entries,
        })
    }

    /// First `n` entries (all of them if fewer).
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            class_count: self.class_count,
            entries: self.entries.iter().take(n).cloned().collect(),
        }
    }

    /// Mean of every pixel of each channel at `resolution`.
    pub fn channel_means(&self, resolution: usize) -> Result<Vec<f64>> {
        let mut sums: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for e in &self.entries {
            let t = e.source.load(resolution)?;
            let c = t.shape()[0];
            if sums.is_empty() {
                sums = vec![0.0; c];
            } else if sums.len() != c {
                return Err(Error::shape("images with different channel counts"));
            }
            let plane = t.len() / c;
            for (ch, s) in sums.iter_mut().enumerate() {
                *s += t.data()[ch * plane..(ch + 1) * plane].iter().sum::<f64>();
            }
            count += plane;
        }
        if count == 0 {
            return Err(Error::config("channel means of an empty dataset"));
        }
        Ok(sums.into_iter().map(|s| s / count as f64).collect())
    }
}
