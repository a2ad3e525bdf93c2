//! Run configuration: one TOML-serializable tree covering every stage.
//!
//! Defaults reproduce the reference training recipe; any subset of fields may
//! be given in a TOML file and the rest fill from defaults. Unknown keys are
//! rejected so typos fail loudly instead of silently training with a default.

use crate::error::CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Model architecture dimensions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Input channels per window (3 accel + 3 gyro + 2 derived norms).
    pub in_channels: usize,
    pub n_actions: usize,
    pub n_scenarios: usize,
    /// Samples per window.
    pub window_len: usize,
    /// Windows per sequence fed to the sequence transformer.
    pub seq_len: usize,
    /// Stem convolution output width.
    pub stem_width: usize,
    /// Output widths of the three multi-dilation blocks.
    pub block_widths: [usize; 3],
    /// Squeeze-and-excitation bottleneck divisor.
    pub se_reduction: usize,
    /// Per-direction GRU hidden size.
    pub gru_hidden: usize,
    /// Attention-pooling projection size.
    pub attn_pool_dim: usize,
    /// Window embedding size (also the transformer width).
    pub embed_dim: usize,
    pub wat_heads: usize,
    pub wat_ff: usize,
    /// Hidden width of the action-gate MLP.
    pub gate_hidden: usize,
    /// Dropout after each conv block output.
    pub dropout_wle: f64,
    /// Dropout after the attention and feed-forward sublayer outputs.
    pub dropout_wat: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 8,
            n_actions: 5,
            n_scenarios: 8,
            window_len: 50,
            seq_len: 30,
            stem_width: 64,
            block_widths: [96, 128, 128],
            se_reduction: 8,
            gru_hidden: 96,
            attn_pool_dim: 64,
            embed_dim: 128,
            wat_heads: 4,
            wat_ff: 512,
            gate_hidden: 64,
            dropout_wle: 0.3,
            dropout_wat: 0.2,
        }
    }
}

impl ModelConfig {
    /// Miniature configuration for finite-difference gradient checking:
    /// small enough that a full parameter sweep runs in seconds, with
    /// dropout off so the loss is deterministic and smooth.
    pub fn tiny() -> Self {
        ModelConfig {
            in_channels: 8,
            n_actions: 5,
            n_scenarios: 8,
            window_len: 20,
            seq_len: 4,
            stem_width: 12,
            block_widths: [16, 16, 16],
            se_reduction: 4,
            gru_hidden: 12,
            attn_pool_dim: 8,
            embed_dim: 16,
            wat_heads: 2,
            wat_ff: 32,
            gate_hidden: 8,
            dropout_wle: 0.0,
            dropout_wat: 0.0,
        }
    }

    /// Reduced-width configuration for CPU-budget end-to-end runs (~99K
    /// parameters). Same topology and recipe, smaller widths.
    pub fn compact() -> Self {
        ModelConfig {
            in_channels: 8,
            n_actions: 5,
            n_scenarios: 8,
            window_len: 50,
            seq_len: 30,
            stem_width: 24,
            block_widths: [32, 48, 48],
            se_reduction: 8,
            gru_hidden: 32,
            attn_pool_dim: 24,
            embed_dim: 48,
            wat_heads: 4,
            wat_ff: 192,
            gate_hidden: 32,
            dropout_wle: 0.3,
            dropout_wat: 0.2,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.wat_heads
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let err = |m: String| Err(CoreError::InvalidConfig(m));
        if self.embed_dim % self.wat_heads != 0 {
            return err(format!(
                "embed_dim {} not divisible by wat_heads {}",
                self.embed_dim, self.wat_heads
            ));
        }
        for &w in &self.block_widths {
            if w == 0 || w % self.se_reduction != 0 {
                return err(format!(
                    "block width {w} must be a positive multiple of se_reduction {}",
                    self.se_reduction
                ));
            }
        }
        if self.window_len == 0 || self.seq_len == 0 || self.in_channels == 0 {
            return err("window_len, seq_len, in_channels must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_wle) || !(0.0..1.0).contains(&self.dropout_wat) {
            return err("dropout rates must be in [0, 1)".into());
        }
        Ok(())
    }
}

/// Loss shaping: multi-task mix, focal focusing, smoothing, class weights.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Scenario-loss share in the multi-task objective; the action loss gets
    /// `1 - beta`.
    pub beta: f64,
    /// Focal focusing exponent.
    pub gamma: f64,
    /// Label smoothing mass spread uniformly over classes.
    pub label_smoothing: f64,
    /// Per-class action weights, canonical class order.
    pub action_class_weights: Vec<f64>,
    /// Per-class scenario weights, canonical scenario order.
    pub scenario_class_weights: Vec<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 0.3,
            gamma: 2.0,
            label_smoothing: 0.05,
            action_class_weights: vec![0.95, 1.0, 1.6, 1.2, 3.0],
            scenario_class_weights: vec![1.9, 1.0, 1.4, 2.0, 7.6, 1.2, 2.1, 1.6],
        }
    }
}

impl LossConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<(), CoreError> {
        let err = |m: String| Err(CoreError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.beta) {
            return err(format!("beta {} outside [0,1]", self.beta));
        }
        if self.gamma < 0.0 {
            return err("gamma must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return err("label_smoothing must be in [0,1)".into());
        }
        if self.action_class_weights.len() != model.n_actions {
            return err(format!(
                "action_class_weights has {} entries, model has {} actions",
                self.action_class_weights.len(),
                model.n_actions
            ));
        }
        if self.scenario_class_weights.len() != model.n_scenarios {
            return err(format!(
                "scenario_class_weights has {} entries, model has {} scenarios",
                self.scenario_class_weights.len(),
                model.n_scenarios
            ));
        }
        Ok(())
    }
}

/// Optimizer and schedule.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling applied before each update.
    pub clip_norm: f64,
    /// EMA decay for the evaluation shadow weights.
    pub ema_decay: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    /// Cosine floor as a fraction of the base learning rate.
    pub min_lr_factor: f64,
    pub batch_size: usize,
    /// Early-stopping patience in epochs, judged on validation action F1.
    pub patience: usize,
    /// Sequences processed per tape to bound graph memory.
    pub micro_batch: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            ema_decay: 0.999,
            epochs: 40,
            warmup_epochs: 3,
            min_lr_factor: 0.2,
            batch_size: 128,
            patience: 15,
            micro_batch: 4,
        }
    }
}

/// Augmentation knobs (applied to raw windows during training only).
/// Each transform has its own enable flag; `enabled` is the master switch.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub rotation: bool,
    pub scaling: bool,
    pub jitter: bool,
    pub masking: bool,
    /// Additive white-noise sigma on raw channels.
    pub jitter_sigma: f64,
    pub scale_lo: f64,
    pub scale_hi: f64,
    /// Max rotation half-angle in degrees.
    pub rotation_deg: f64,
    /// Probability a window gets one zeroed time segment.
    pub mask_prob: f64,
    pub mask_min: usize,
    pub mask_max: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            rotation: true,
            scaling: true,
            jitter: true,
            masking: true,
            jitter_sigma: 0.02,
            scale_lo: 0.9,
            scale_hi: 1.1,
            rotation_deg: 15.0,
            mask_prob: 0.5,
            mask_min: 5,
            mask_max: 15,
        }
    }
}

impl AugmentConfig {
    /// All transforms switched off (identity augmentation).
    pub fn off() -> Self {
        AugmentConfig {
            enabled: false,
            ..AugmentConfig::default()
        }
    }
}

/// Windowing, splits, and normalization.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub sample_rate: f64,
    pub window_len: usize,
    pub window_stride: usize,
    /// Minimum labeled-overlap fraction for a window to carry a label.
    pub min_overlap: f64,
    pub train_frac: f64,
    pub val_frac: f64,
    /// Channel std floor to keep z-scoring finite on dead channels.
    pub std_floor: f64,
    pub augment: AugmentConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            sample_rate: 50.0,
            window_len: 50,
            window_stride: 10,
            min_overlap: 0.5,
            train_frac: 0.7,
            val_frac: 0.15,
            std_floor: 1e-6,
            augment: AugmentConfig::default(),
        }
    }
}

/// Synthetic corpus generation. Signal amplitudes are in g (accelerometer)
/// and rad/s (gyroscope); frequencies in Hz.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub videos: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    /// Fraction of search segments spent visually still (no head sweep).
    pub static_fraction: f64,
    /// Length of one behavioral state slot; label spans follow slot runs.
    pub label_span_s: f64,
    /// Write IMU as "csv" or "bin".
    pub format: String,
    /// Restrict the corpus to one scenario (by name) instead of cycling
    /// through all eight.
    pub scenario_filter: Option<String>,
    /// Force every slot to one action class (bypasses the Markov chain);
    /// used for single-class calibration corpora.
    pub force_class: Option<String>,
    /// Baseline sensor noise.
    pub noise_acc: f64,
    pub noise_gyro: f64,
    /// Gait oscillation (locomotion).
    pub gait_hz: f64,
    pub gait_amp: f64,
    /// Sustained micro-tremor (task operation).
    pub tremor_hz: f64,
    pub tremor_amp: f64,
    /// Intermittent reach/handover bursts (object transfer): expected bursts
    /// per slot and peak gyro amplitude.
    pub burst_rate: f64,
    pub burst_amp: f64,
    /// Slow head sweep in active search. The default amplitude is chosen
    /// well under noise_gyro·√2 so the yaw channel's per-timestep variance
    /// (with the matched noise reduction applied) equals the stationary
    /// channel's.
    pub search_yaw_hz: f64,
    pub search_yaw_amp: f64,
    /// Relative spread of per-scenario frequency/rate modulation; gives the
    /// eight scenarios distinct signal texture within shared class shapes.
    pub scenario_texture: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            videos: 240,
            duration_s: 6.8,
            sample_rate: 50.0,
            static_fraction: 0.8,
            label_span_s: 1.0,
            format: "csv".into(),
            scenario_filter: None,
            force_class: None,
            noise_acc: 0.03,
            noise_gyro: 0.06,
            gait_hz: 2.0,
            gait_amp: 0.45,
            tremor_hz: 10.0,
            tremor_amp: 0.08,
            burst_rate: 0.9,
            burst_amp: 0.55,
            search_yaw_hz: 0.35,
            search_yaw_amp: 0.04,
            scenario_texture: 0.12,
        }
    }
}

/// Distribution-analysis knobs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// Window stride used when re-windowing for analysis (non-overlapping by
    /// default so transition estimates see each span once).
    pub window_stride: usize,
    pub permutations: usize,
    /// Cap on per-class windows entering feature extraction.
    pub per_class_cap: usize,
    /// Cap on per-class timestep vectors entering the MMD kernel matrix.
    pub mmd_max_per_class: usize,
    /// Timesteps subsampled per window for the MMD sample set.
    pub mmd_timesteps_per_window: usize,
    /// Covariance regularization scale for the Gaussian overlap statistic.
    pub cov_reg: f64,
    pub knn_k: usize,
    pub knn_folds: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            window_stride: 50,
            permutations: 1000,
            per_class_cap: 5000,
            mmd_max_per_class: 400,
            mmd_timesteps_per_window: 4,
            cov_reg: 1e-6,
            knn_k: 5,
            knn_folds: 5,
        }
    }
}

/// Annotation-pipeline knobs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DatapipeConfig {
    /// Weight given to human-corrected labels (tier 3). Defensible settings
    /// sit between the skip weight and the secondary-choice weight, so the
    /// accepted range is [0.5, 0.7].
    pub corrected_weight: f64,
    /// Token-set Jaccard similarity above which a verified narration's label
    /// spreads to an unverified near-duplicate.
    pub similarity_threshold: f64,
    /// Multiplier applied to the source weight when a label is propagated.
    pub propagated_discount: f64,
    /// Time span one timestamped annotation is assumed to label, centered on
    /// its timestamp.
    pub annotation_span_s: f64,
}

impl Default for DatapipeConfig {
    fn default() -> Self {
        DatapipeConfig {
            corrected_weight: 0.6,
            similarity_threshold: 0.8,
            propagated_discount: 0.9,
            annotation_span_s: 2.0,
        }
    }
}

/// Mixing-weight sweep.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
    /// Optional shorter epoch budget per sweep point (0 = use optim.epochs).
    pub epochs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            betas: vec![0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
            epochs: 0,
        }
    }
}

/// Schema version written into outputs and checkpoints; bump on any breaking
/// change to the config tree or serialized formats.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// The full run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads (0 = all available).
    pub threads: usize,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub datapipe: DatapipeConfig,
    pub analyze: AnalyzeConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, CoreError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CoreError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        self.model.validate()?;
        self.loss.validate(&self.model)?;
        if self.model.window_len != self.data.window_len {
            return Err(CoreError::InvalidConfig(format!(
                "model.window_len {} != data.window_len {}",
                self.model.window_len, self.data.window_len
            )));
        }
        if self.data.train_frac + self.data.val_frac >= 1.0 {
            return Err(CoreError::InvalidConfig(
                "train_frac + val_frac must leave room for a test split".into(),
            ));
        }
        if self.data.window_stride == 0 {
            return Err(CoreError::InvalidConfig("window_stride must be positive".into()));
        }
        let aug = &self.data.augment;
        if aug.scale_lo > aug.scale_hi || aug.scale_lo <= 0.0 {
            return Err(CoreError::InvalidConfig(format!(
                "augment scale range [{}, {}] invalid",
                aug.scale_lo, aug.scale_hi
            )));
        }
        if aug.mask_min == 0 || aug.mask_min > aug.mask_max {
            return Err(CoreError::InvalidConfig(format!(
                "augment mask length range [{}, {}] invalid",
                aug.mask_min, aug.mask_max
            )));
        }
        if !(0.0..=1.0).contains(&self.synth.static_fraction) {
            return Err(CoreError::InvalidConfig(format!(
                "synth.static_fraction {} outside [0,1]",
                self.synth.static_fraction
            )));
        }
        if self.synth.search_yaw_amp * self.synth.search_yaw_amp / 2.0
            > self.synth.noise_gyro * self.synth.noise_gyro
        {
            return Err(CoreError::InvalidConfig(
                "synth.search_yaw_amp too large to variance-match noise_gyro \
                 (requires amp ≤ noise_gyro·√2)"
                    .into(),
            ));
        }
        let dp = &self.datapipe;
        if !(0.5..=0.7).contains(&dp.corrected_weight) {
            return Err(CoreError::InvalidConfig(format!(
                "datapipe.corrected_weight {} outside [0.5, 0.7]",
                dp.corrected_weight
            )));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(dp.similarity_threshold)
            || !positive(dp.propagated_discount)
            || dp.propagated_discount > 1.0
            || !positive(dp.annotation_span_s)
        {
            return Err(CoreError::InvalidConfig(
                "datapipe thresholds, discount, and span must be positive \
                 (discount at most 1)"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Stable content hash of the configuration, embedded in every output so
    /// downstream artifacts can be traced to the exact settings.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}
