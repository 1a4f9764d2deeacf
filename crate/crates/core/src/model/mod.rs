//! The full multi-signal model: per-signal Inception cascades feeding
//! temporal transformers, dimensionality reduction, a spatial transformer
//! across sensor tokens, and a dense classifier head.

pub mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{
    Dense, Forward, InceptionBlock1D, Mode, ParamId, Params, PositionalEncoding,
    TransformerEncoderBlock,
};
use crate::scalar::Scalar;
use crate::tensor::{concat, Tape, Tensor};

/// Every architectural hyperparameter, plus the ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_signals: usize,
    pub segment_len: usize,
    pub filters_per_stream: usize,
    pub kernel_sizes: Vec<usize>,
    pub cascade_depth: usize,
    pub temporal_heads: usize,
    pub spatial_heads: usize,
    pub reduced_dim: usize,
    pub classifier_widths: Vec<usize>,
    pub n_classes: usize,
    pub dropout: f64,
    pub pe_scale: f64,
    pub use_inception: bool,
    pub use_transformers: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_signals: 18,
            segment_len: 100,
            filters_per_stream: 32,
            kernel_sizes: vec![1, 3, 5],
            cascade_depth: 3,
            temporal_heads: 2,
            spatial_heads: 2,
            reduced_dim: 32,
            classifier_widths: vec![128, 64],
            n_classes: 4,
            dropout: 0.2,
            pe_scale: 0.1,
            use_inception: true,
            use_transformers: true,
        }
    }
}

impl ModelConfig {
    /// Width of the per-signal feature sequence entering the temporal
    /// transformer: one stream of `filters_per_stream` per kernel size.
    pub fn d_model(&self) -> usize {
        self.filters_per_stream * self.kernel_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_signals == 0 {
            return Err(Error::config("n_signals", "must be at least 1"));
        }
        if self.segment_len == 0 {
            return Err(Error::config("segment_len", "must be at least 1"));
        }
        if self.filters_per_stream == 0 {
            return Err(Error::config("filters_per_stream", "must be at least 1"));
        }
        if self.kernel_sizes.is_empty() {
            return Err(Error::config("kernel_sizes", "must not be empty"));
        }
        if let Some(&k) = self.kernel_sizes.iter().find(|&&k| k % 2 == 0) {
            return Err(Error::config("kernel_sizes", format!("all must be odd, got {k}")));
        }
        if self.cascade_depth == 0 {
            return Err(Error::config("cascade_depth", "must be at least 1"));
        }
        if self.n_classes < 2 {
            return Err(Error::config("n_classes", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("must be in [0,1), got {}", self.dropout)));
        }
        if !self.use_inception && !self.use_transformers {
            return Err(Error::config(
                "use_inception/use_transformers",
                "at least one component must be enabled",
            ));
        }
        if self.reduced_dim == 0 {
            return Err(Error::config("reduced_dim", "must be at least 1"));
        }
        if self.classifier_widths.is_empty() || self.classifier_widths.contains(&0) {
            return Err(Error::config("classifier_widths", "must be non-empty and positive"));
        }
        if self.use_transformers {
            if self.temporal_heads == 0 || self.d_model() % self.temporal_heads != 0 {
                return Err(Error::config(
                    "temporal_heads",
                    format!("d_model {} must be divisible by heads {}", self.d_model(), self.temporal_heads),
                ));
            }
            if self.spatial_heads == 0 || self.reduced_dim % self.spatial_heads != 0 {
                return Err(Error::config(
                    "spatial_heads",
                    format!("reduced_dim {} must be divisible by heads {}", self.reduced_dim, self.spatial_heads),
                ));
            }
        }
        Ok(())
    }

    /// Stable hex digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Table 2 ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariant {
    /// Inception only; both transformers replaced by identity.
    Model1,
    /// Transformers only; the Inception cascade replaced by a per-timestep
    /// width-lifting dense layer.
    Model2,
    /// The full model.
    Model3,
}

impl AblationVariant {
    pub fn all() -> [AblationVariant; 3] {
        [AblationVariant::Model1, AblationVariant::Model2, AblationVariant::Model3]
    }

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::Model1 => "model1",
            AblationVariant::Model2 => "model2",
            AblationVariant::Model3 => "model3",
        }
    }
}

impl std::str::FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "model1" | "1" => Ok(AblationVariant::Model1),
            "model2" | "2" => Ok(AblationVariant::Model2),
            "model3" | "3" | "full" => Ok(AblationVariant::Model3),
            other => Err(Error::config("variant", format!("unknown variant {other:?}"))),
        }
    }
}

/// Apply an ablation variant's switches to a base configuration.
pub fn ablation_variant(base: &ModelConfig, variant: AblationVariant) -> ModelConfig {
    let mut config = base.clone();
    match variant {
        AblationVariant::Model1 => {
            config.use_inception = true;
            config.use_transformers = false;
        }
        AblationVariant::Model2 => {
            config.use_inception = false;
            config.use_transformers = true;
        }
        AblationVariant::Model3 => {
            config.use_inception = true;
            config.use_transformers = true;
        }
    }
    config
}

/// One sensor's processing stack.
struct SignalStack<S: Scalar> {
    inception: Vec<InceptionBlock1D>,
    lift: Option<Dense>,
    temporal_pe: Option<PositionalEncoding<S>>,
    temporal: Option<TransformerEncoderBlock>,
    reduce: Dense,
}

/// Layer wiring, separate from the parameter store so gradient checking can
/// borrow both halves independently.
pub(crate) struct Arch<S: Scalar> {
    stacks: Vec<SignalStack<S>>,
    spatial_pe: Option<PositionalEncoding<S>>,
    spatial: Option<TransformerEncoderBlock>,
    classifier: Vec<Dense>,
    output: Dense,
    n_signals: usize,
    segment_len: usize,
    reduced_dim: usize,
    dropout: f64,
    use_inception: bool,
    use_transformers: bool,
}

/// Prediction for a batch: argmax classes (ties break to the lowest index)
/// and row-major `[B, n_classes]` probabilities.
pub struct Prediction<S> {
    pub classes: Vec<usize>,
    pub probabilities: Vec<S>,
}

/// Result of a recorded forward pass.
pub struct ModelOutput<S: Scalar> {
    pub logits: Tensor<S>,
    pub bindings: Vec<(ParamId, Tensor<S>)>,
}

pub struct InceptoFormer<S: Scalar> {
    config: ModelConfig,
    arch: Arch<S>,
    params: Params<S>,
}

impl<S: Scalar> std::fmt::Debug for InceptoFormer<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InceptoFormer")
            .field("config", &self.config)
            .field("parameters", &self.params.n_scalars())
            .finish()
    }
}

impl<S: Scalar> InceptoFormer<S> {
    /// Build a model with freshly initialized weights. The same config and
    /// seed always produce identical parameters.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_model = config.d_model();
        let mut stacks = Vec::with_capacity(config.n_signals);
        for s in 0..config.n_signals {
            let prefix = format!("signals.{s:02}");
            let mut inception = Vec::new();
            let mut lift = None;
            if config.use_inception {
                let mut cin = 1;
                for i in 0..config.cascade_depth {
                    let block = InceptionBlock1D::new(
                        &mut params,
                        &mut rng,
                        &format!("{prefix}.inception.{i}"),
                        cin,
                        config.filters_per_stream,
                        &config.kernel_sizes,
                    )?;
                    cin = block.cout;
                    inception.push(block);
                }
            } else {
                lift = Some(Dense::new(&mut params, &mut rng, &format!("{prefix}.lift"), 1, d_model));
            }
            let (temporal_pe, temporal) = if config.use_transformers {
                (
                    Some(PositionalEncoding::new(config.segment_len, d_model, config.pe_scale)),
                    Some(TransformerEncoderBlock::new(
                        &mut params,
                        &mut rng,
                        &format!("{prefix}.temporal"),
                        d_model,
                        config.temporal_heads,
                        config.dropout,
                    )?),
                )
            } else {
                (None, None)
            };
            let reduce =
                Dense::new(&mut params, &mut rng, &format!("{prefix}.reduce"), d_model, config.reduced_dim);
            stacks.push(SignalStack { inception, lift, temporal_pe, temporal, reduce });
        }
        let (spatial_pe, spatial) = if config.use_transformers {
            (
                Some(PositionalEncoding::new(config.n_signals, config.reduced_dim, config.pe_scale)),
                Some(TransformerEncoderBlock::new(
                    &mut params,
                    &mut rng,
                    "spatial",
                    config.reduced_dim,
                    config.spatial_heads,
                    config.dropout,
                )?),
            )
        } else {
            (None, None)
        };
        let mut classifier = Vec::new();
        let mut width = config.n_signals * config.reduced_dim;
        for (i, &hidden) in config.classifier_widths.iter().enumerate() {
            classifier.push(Dense::new(&mut params, &mut rng, &format!("classifier.{i}"), width, hidden));
            width = hidden;
        }
        let output = Dense::new(&mut params, &mut rng, "output", width, config.n_classes);
        let arch = Arch {
            stacks,
            spatial_pe,
            spatial,
            classifier,
            output,
            n_signals: config.n_signals,
            segment_len: config.segment_len,
            reduced_dim: config.reduced_dim,
            dropout: config.dropout,
            use_inception: config.use_inception,
            use_transformers: config.use_transformers,
        };
        Ok(InceptoFormer { config: config.clone(), arch, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<S> {
        &mut self.params
    }

    /// Trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.params.n_trainable_scalars()
    }

    /// Trainable parameters inside attention projections.
    pub fn attention_param_count(&self) -> usize {
        self.params.n_trainable_scalars_where(|p| p.contains(".attn."))
    }

    /// Trainable parameters inside convolution streams.
    pub fn convolution_param_count(&self) -> usize {
        self.params.n_trainable_scalars_where(|p| p.contains(".conv_k"))
    }

    /// Override the dropout rate everywhere it applies (train-time only).
    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config("dropout", format!("must be in [0,1), got {rate}")));
        }
        self.config.dropout = rate;
        self.arch.dropout = rate;
        for stack in &mut self.arch.stacks {
            if let Some(t) = &mut stack.temporal {
                t.dropout = rate;
            }
        }
        if let Some(sp) = &mut self.arch.spatial {
            sp.dropout = rate;
        }
        Ok(())
    }

    /// Record one forward pass of a `[B, n_signals, segment_len]` batch.
    pub fn forward(
        &mut self,
        tape: &Tape<S>,
        x: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<ModelOutput<S>> {
        let mut fwd = Forward::new(tape, &mut self.params, mode, rng);
        let logits = self.arch.forward(&mut fwd, x)?;
        Ok(ModelOutput { logits, bindings: fwd.bindings })
    }

    /// Classify a raw `[B, n_signals, segment_len]` batch in eval mode.
    pub fn predict(&mut self, batch: &[S], bsz: usize) -> Result<Prediction<S>> {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = tape.constant(
            batch.to_vec(),
            &[bsz, self.config.n_signals, self.config.segment_len],
        )?;
        let out = self.forward(&tape, &x, Mode::Eval, &mut rng)?;
        let probs = out.logits.softmax()?.data();
        let c = self.config.n_classes;
        let classes = probs
            .chunks(c)
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect();
        Ok(Prediction { classes, probabilities: probs })
    }

    pub(crate) fn split_mut(&mut self) -> (&Arch<S>, &mut Params<S>) {
        (&self.arch, &mut self.params)
    }
}

impl<S: Scalar> Arch<S> {
    pub(crate) fn forward(&self, fwd: &mut Forward<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        if x.rank() != 3 || x.shape()[1] != self.n_signals || x.shape()[2] != self.segment_len {
            return Err(Error::dim(
                "model_forward",
                x.shape(),
                [self.n_signals, self.segment_len],
            ));
        }
        let bsz = x.shape()[0];
        let mut tokens = Vec::with_capacity(self.n_signals);
        for (s, stack) in self.stacks.iter().enumerate() {
            let xs = x.slice_axis1(s, 1)?; // [B, 1, T]
            // feature sequence [B, T, d_model]
            let mut h = if self.use_inception {
                let mut h = xs;
                for block in &stack.inception {
                    h = block.forward(fwd, &h)?;
                }
                h.swap_axes12()?
            } else {
                let lift = stack.lift.as_ref().expect("lift exists when inception is off");
                lift.forward(fwd, &xs.swap_axes12()?)?
            };
            if self.use_transformers {
                let pe = stack.temporal_pe.as_ref().expect("temporal pe");
                let block = stack.temporal.as_ref().expect("temporal block");
                h = block.forward(fwd, &pe.apply(&h)?)?;
            }
            let pooled = h.mean_axis1()?; // [B, d_model]
            let z = stack.reduce.forward(fwd, &pooled)?.selu()?; // [B, reduced]
            tokens.push(z.reshape(&[bsz, 1, self.reduced_dim])?);
        }
        let mut seq = concat(1, &tokens)?; // [B, n_signals, reduced]
        if self.use_transformers {
            let pe = self.spatial_pe.as_ref().expect("spatial pe");
            let block = self.spatial.as_ref().expect("spatial block");
            seq = block.forward(fwd, &pe.apply(&seq)?)?;
        }
        let mut h = seq.reshape(&[bsz, self.n_signals * self.reduced_dim])?;
        for dense in &self.classifier {
            h = dense.forward(fwd, &h)?.selu()?;
            h = fwd.maybe_dropout(&h, self.dropout)?;
        }
        self.output.forward(fwd, &h)
    }
}

/// Gradient-check the full model through cross-entropy at the given batch.
pub fn gradcheck_model<S: Scalar>(
    model: &mut InceptoFormer<S>,
    batch: &[S],
    bsz: usize,
    labels: &[usize],
    eps: f64,
    tol: f64,
) -> Result<crate::tensor::gradcheck::GradCheckReport> {
    let (n_signals, segment_len) = (model.config.n_signals, model.config.segment_len);
    let (arch, params) = model.split_mut();
    crate::nn::gradcheck_module(
        params,
        |fwd| {
            let x = fwd.tape.constant(batch.to_vec(), &[bsz, n_signals, segment_len])?;
            let logits = arch.forward(fwd, &x)?;
            logits.cross_entropy(labels)
        },
        eps,
        tol,
    )
}
