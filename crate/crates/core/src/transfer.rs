//! Transplanting pre-trained parameters into a target network, freeze
//! policies, and transfer fine-tuning.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::netspec::{Init, NetworkSpec, ParamKind, ParamStore};
use crate::trainer::{train, TrainConfig, TrainData, TrainOutcome};

/// Which parameter groups the optimizer may update while fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FreezePolicy {
    /// Update every layer.
    #[serde(rename = "fc+conv")]
    FcPlusConv,
    /// Freeze every convolution layer.
    #[serde(rename = "fc")]
    FcOnly,
}

impl fmt::Display for FreezePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreezePolicy::FcPlusConv => "fc+conv",
            FreezePolicy::FcOnly => "fc",
        })
    }
}

impl FromStr for FreezePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fc+conv" | "fc_plus_conv" | "all" => Ok(FreezePolicy::FcPlusConv),
            "fc" | "fc_only" => Ok(FreezePolicy::FcOnly),
            other => Err(Error::config(format!("unknown update policy {other:?} (fc, fc+conv)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransplantAction {
    Copied,
    Reinitialized,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransplantEntry {
    pub target_layer: String,
    pub source_layer: Option<String>,
    pub action: TransplantAction,
    pub source_shape: Option<Vec<usize>>,
    pub target_shape: Vec<usize>,
}

/// One entry per learnable target layer, in parameter order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransplantReport {
    pub entries: Vec<TransplantEntry>,
}

impl TransplantReport {
    pub fn count(&self, action: TransplantAction) -> usize {
        self.entries.iter().filter(|e| e.action == action).count()
    }

    /// Aligned text table, one row per target layer.
    pub fn to_text(&self) -> String {
        let shape = |s: &Option<Vec<usize>>| s.as_ref().map(|v| format!("{v:?}")).unwrap_or_else(|| "-".into());
        let mut s = format!("{:<14} {:<14} {:<14} {:<22} {}\n", "target", "source", "action", "source_shape", "target_shape");
        for e in &self.entries {
            let action = match e.action {
                TransplantAction::Copied => "copied",
                TransplantAction::Reinitialized => "reinitialized",
                TransplantAction::Skipped => "skipped",
            };
            writeln!(
                s,
                "{:<14} {:<14} {:<14} {:<22} {:?}",
                e.target_layer,
                e.source_layer.as_deref().unwrap_or("-"),
                action,
                shape(&e.source_shape),
                e.target_shape
            )
            .unwrap();
        }
        s
    }
}

/// Copy every position- and shape-matching trunk layer of `source` into a
/// fresh parameter set for `target`; heads and unmatched layers are freshly
/// initialized and every velocity starts at zero. All convolution layers
/// must match.
pub fn transplant(
    source: &Checkpoint,
    target: &NetworkSpec,
    rng: &mut impl Rng,
    init: Init,
) -> Result<(ParamStore, TransplantReport)> {
    let src: Vec<_> = source.trunk_layers().collect();
    let shapes = target.param_shapes()?;
    let mut layers = Vec::with_capacity(shapes.len());
    let mut report = TransplantReport::default();
    let mut position = 0usize;
    for shape in &shapes {
        let fresh = init.layer(shape, rng)?;
        if shape.kind == ParamKind::Head {
            report.entries.push(TransplantEntry {
                target_layer: shape.name.clone(),
                source_layer: None,
                action: TransplantAction::Reinitialized,
                source_shape: None,
                target_shape: shape.weight.clone(),
            });
            layers.push(fresh);
            continue;
        }
        let candidate = src.get(position).copied();
        position += 1;
        let matched = candidate.filter(|s| {
            s.kind == shape.kind && s.weight.shape() == shape.weight && s.bias.shape() == shape.bias
        });
        if shape.kind == ParamKind::Conv && matched.is_none() {
            return Err(Error::Incompatible {
                layer: shape.name.clone(),
                source_desc: candidate
                    .map(|s| format!("{} {:?} weight {:?}", s.name, s.kind, s.weight.shape()))
                    .unwrap_or_else(|| "no layer".into()),
                target_desc: format!("{:?} weight {:?}", shape.kind, shape.weight),
            });
        }
        match matched {
            Some(s) => {
                let mut l = s.clone();
                l.name = shape.name.clone();
                l.frozen = false;
                l.reset_velocity();
                report.entries.push(TransplantEntry {
                    target_layer: shape.name.clone(),
                    source_layer: Some(s.name.clone()),
                    action: TransplantAction::Copied,
                    source_shape: Some(s.weight.shape().to_vec()),
                    target_shape: shape.weight.clone(),
                });
                layers.push(l);
            }
            None => {
                report.entries.push(TransplantEntry {
                    target_layer: shape.name.clone(),
                    source_layer: candidate.map(|s| s.name.clone()),
                    action: TransplantAction::Reinitialized,
                    source_shape: candidate.map(|s| s.weight.shape().to_vec()),
                    target_shape: shape.weight.clone(),
                });
                layers.push(fresh);
            }
        }
    }
    // leftover source layers beyond the target's trunk
    for s in src.iter().skip(position) {
        report.entries.push(TransplantEntry {
            target_layer: String::new(),
            source_layer: Some(s.name.clone()),
            action: TransplantAction::Skipped,
            source_shape: Some(s.weight.shape().to_vec()),
            target_shape: Vec::new(),
        });
    }
    let params = ParamStore { layers };
    params.matches(target)?;
    Ok((params, report))
}

/// Set freeze flags: every convolution under [`FreezePolicy::FcOnly`],
/// nothing under [`FreezePolicy::FcPlusConv`]. Heads are never frozen.
pub fn apply_freeze_policy(params: &mut ParamStore, policy: FreezePolicy) {
    for l in &mut params.layers {
        l.frozen = policy == FreezePolicy::FcOnly && l.kind == ParamKind::Conv;
    }
}

pub struct TransferOutcome {
    pub report: TransplantReport,
    pub training: TrainOutcome,
}

/// Transplant, apply the freeze policy, then train on `data` (mixed-domain
/// when `data.images` is non-empty).
pub fn transfer_train(
    source: &Checkpoint,
    target: &NetworkSpec,
    policy: FreezePolicy,
    data: &TrainData,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    init: Init,
    on_epoch: impl FnMut(&[crate::trainer::EpochRecord]),
) -> Result<TransferOutcome> {
    let (mut params, report) = transplant(source, target, rng, init)?;
    apply_freeze_policy(&mut params, policy);
    let training = train(target, params, data, cfg, on_epoch)?;
    Ok(TransferOutcome { report, training })
}
