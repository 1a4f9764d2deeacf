//! Resolution of run configuration: defaults, then a JSON config file,
//! then explicit command-line flags, in that precedence order.

use clap::Args;
use inceptoformer_core::error::{Error, Result};
use inceptoformer_core::eval::{Averaging, CrossValConfig, SmoteMode};
use inceptoformer_core::model::{ablation_variant, AblationVariant, ModelConfig};
use inceptoformer_core::train::TrainConfig;
use std::path::PathBuf;

#[derive(Args, Debug, Clone, Default)]
pub struct ModelFlags {
    /// JSON config file: {"model": {...}, "train": {...}} with any subset of fields
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub cascade_depth: Option<usize>,
    /// Comma-separated odd kernel sizes, e.g. 1,3,5
    #[arg(long)]
    pub kernel_sizes: Option<String>,
    #[arg(long)]
    pub temporal_heads: Option<usize>,
    #[arg(long)]
    pub spatial_heads: Option<usize>,
    #[arg(long)]
    pub reduced_dim: Option<usize>,
    /// Comma-separated hidden widths, e.g. 128,64
    #[arg(long)]
    pub classifier_widths: Option<String>,
    #[arg(long)]
    pub n_classes: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub pe_scale: Option<f64>,
    /// Ablation variant: model1 (inception only), model2 (transformers only), model3 (full)
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub min_delta: Option<f64>,
    /// Global-norm gradient clipping threshold
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

fn parse_usize_list(field: &str, text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(field, format!("bad entry {t:?} in {text:?}")))
        })
        .collect()
}

/// Overlay `patch` onto `base`, rejecting unknown keys.
fn merge_json(field: &str, base: &mut serde_json::Value, patch: &serde_json::Value) -> Result<()> {
    let (Some(base_map), Some(patch_map)) = (base.as_object_mut(), patch.as_object()) else {
        return Err(Error::config(field, "config file sections must be JSON objects"));
    };
    for (k, v) in patch_map {
        if !base_map.contains_key(k) {
            return Err(Error::config(field, format!("unknown field {k:?}")));
        }
        base_map.insert(k.clone(), v.clone());
    }
    Ok(())
}

fn load_file_config(path: &PathBuf) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::format(path.to_str(), format!("cannot read config file: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format(path.to_str(), format!("bad config json: {e}")))
}

/// The fully resolved configuration for a run, recorded in the manifest.
pub fn resolve(model_flags: &ModelFlags, train_flags: &TrainFlags, seed: u64) -> Result<(ModelConfig, TrainConfig)> {
    let mut model_value = serde_json::to_value(ModelConfig::default()).expect("serializes");
    let mut train_value = serde_json::to_value(TrainConfig::default()).expect("serializes");
    if let Some(path) = &model_flags.config {
        let file = load_file_config(path)?;
        if let Some(obj) = file.as_object() {
            for key in obj.keys() {
                if key != "model" && key != "train" {
                    return Err(Error::config("config", format!("unknown section {key:?}")));
                }
            }
        }
        if let Some(m) = file.get("model") {
            merge_json("model", &mut model_value, m)?;
        }
        if let Some(t) = file.get("train") {
            merge_json("train", &mut train_value, t)?;
        }
    }
    let mut model: ModelConfig = serde_json::from_value(model_value)
        .map_err(|e| Error::config("model", format!("invalid config file values: {e}")))?;
    let mut train: TrainConfig = serde_json::from_value(train_value)
        .map_err(|e| Error::config("train", format!("invalid config file values: {e}")))?;

    if let Some(v) = model_flags.filters {
        model.filters_per_stream = v;
    }
    if let Some(v) = model_flags.cascade_depth {
        model.cascade_depth = v;
    }
    if let Some(v) = &model_flags.kernel_sizes {
        model.kernel_sizes = parse_usize_list("kernel_sizes", v)?;
    }
    if let Some(v) = model_flags.temporal_heads {
        model.temporal_heads = v;
    }
    if let Some(v) = model_flags.spatial_heads {
        model.spatial_heads = v;
    }
    if let Some(v) = model_flags.reduced_dim {
        model.reduced_dim = v;
    }
    if let Some(v) = &model_flags.classifier_widths {
        model.classifier_widths = parse_usize_list("classifier_widths", v)?;
    }
    if let Some(v) = model_flags.n_classes {
        model.n_classes = v;
    }
    if let Some(v) = model_flags.dropout {
        model.dropout = v;
        train.dropout = v;
    }
    if let Some(v) = model_flags.pe_scale {
        model.pe_scale = v;
    }
    if let Some(v) = &model_flags.variant {
        let variant: AblationVariant = v.parse()?;
        model = ablation_variant(&model, variant);
    }

    if let Some(v) = train_flags.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = train_flags.lr {
        train.learning_rate = v;
    }
    if let Some(v) = train_flags.max_epochs {
        train.max_epochs = v;
    }
    if let Some(v) = train_flags.patience {
        train.early_stop_patience = v;
    }
    if let Some(v) = train_flags.min_delta {
        train.early_stop_min_delta = v;
    }
    if let Some(v) = train_flags.clip_norm {
        train.clip_norm = Some(v);
    }
    train.seed = seed;
    model.validate()?;
    train.validate()?;
    Ok((model, train))
}

#[derive(Args, Debug, Clone)]
pub struct CvFlags {
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Cross-validation unit: segment | subject
    #[arg(long, default_value = "segment")]
    pub unit: String,
    /// Oversampling mode: per-fold | global | off
    #[arg(long, default_value = "per-fold")]
    pub smote: String,
    #[arg(long, default_value_t = 5)]
    pub k_neighbors: usize,
    /// Aggregate averaging: macro | weighted
    #[arg(long, default_value = "macro")]
    pub averaging: String,
    /// Run folds sequentially instead of in parallel
    #[arg(long)]
    pub serial_folds: bool,
}

impl CvFlags {
    pub fn resolve(&self, seed: u64) -> Result<CrossValConfig> {
        Ok(CrossValConfig {
            k: self.k,
            unit: self.unit.parse()?,
            seed,
            smote: self.smote.parse::<SmoteMode>()?,
            k_neighbors: self.k_neighbors,
            averaging: self.averaging.parse::<Averaging>()?,
            parallel: !self.serial_folds,
        })
    }
}
