//! Flat `key = value` run configuration shared by every subcommand.

use std::path::PathBuf;

use crate::error::{Result, RoseError};
use crate::model::{ExtractorConfig, MatcherConfig, ModelConfig, Variant};
use crate::stereo::LossWeights;
use crate::weather::{Condition, SceneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Step1,
    Step2,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Step1 => "step1",
            Stage::Step2 => "step2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskPolicy {
    All,
    Noc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainLoss {
    Supervised,
    Photometric,
}

/// One config key: name, default (as written in a config file), subcommands
/// it applies to, and a help line. The table drives parsing, validation, and
/// `--help` output.
pub struct KeySpec {
    pub name: &'static str,
    pub default: &'static str,
    pub commands: &'static [&'static str],
    pub help: &'static str,
}

const TRAIN: &[&str] = &["pretrain", "step1", "step2"];
const ALL: &[&str] = &["pretrain", "step1", "step2", "eval", "generate"];

pub const CONFIG_KEYS: &[KeySpec] = &[
    KeySpec { name: "stage", default: "", commands: TRAIN, help: "pretrain|step1|step2; must match the subcommand" },
    KeySpec { name: "seed", default: "0", commands: ALL, help: "master seed; every stream derives from it" },
    KeySpec { name: "iterations", default: "300", commands: TRAIN, help: "optimizer steps" },
    KeySpec { name: "batch_size", default: "4", commands: TRAIN, help: "scene pairs per step (≥ 2 when batch-norm runs)" },
    KeySpec { name: "lr", default: "0.001", commands: TRAIN, help: "peak learning rate" },
    KeySpec { name: "warmup_frac", default: "0.05", commands: TRAIN, help: "fraction of steps spent in linear warmup before cosine decay" },
    KeySpec { name: "weight_decay", default: "0.0001", commands: TRAIN, help: "decoupled weight decay" },
    KeySpec { name: "pool_size", default: "64", commands: TRAIN, help: "distinct training scenes in the sampling pool" },
    KeySpec { name: "alpha", default: "0.85", commands: TRAIN, help: "SSIM weight inside the photometric loss" },
    KeySpec { name: "lambda1", default: "1", commands: TRAIN, help: "photometric loss weight" },
    KeySpec { name: "lambda2", default: "10", commands: TRAIN, help: "smoothness loss weight" },
    KeySpec { name: "lambda3", default: "1", commands: TRAIN, help: "feature-consistency loss weight" },
    KeySpec { name: "lambda4", default: "1", commands: TRAIN, help: "disparity-consistency loss weight" },
    KeySpec { name: "beta", default: "0.9", commands: TRAIN, help: "decay over the refinement sequence in sequence losses" },
    KeySpec { name: "tau", default: "1.0", commands: ALL, help: "left-right agreement threshold (px) for the confidence mask" },
    KeySpec { name: "collapse_std", default: "0.05", commands: &["step1"], help: "abort when the final disparity std (px) falls below this" },
    KeySpec { name: "pretrain_loss", default: "supervised", commands: &["pretrain"], help: "supervised|photometric pretraining objective" },
    KeySpec { name: "init", default: "", commands: &["step1"], help: "path to the pretrained checkpoint (required)" },
    KeySpec { name: "teacher", default: "", commands: &["step2"], help: "path to the frozen teacher checkpoint (required)" },
    KeySpec { name: "from_scratch", default: "false", commands: &["step2"], help: "initialize the student fresh instead of from the teacher weights" },
    KeySpec { name: "augment", default: "true", commands: &["pretrain"], help: "apply asymmetric patch augmentation during pretraining" },
    KeySpec { name: "aug_max_patches", default: "4", commands: &["pretrain", "step2"], help: "max pasted patches per augmented sample (0 disables)" },
    KeySpec { name: "aug_max_frac", default: "0.2", commands: &["pretrain", "step2"], help: "max fraction of the view patches may cover" },
    KeySpec { name: "conditions", default: "fog,rain,night", commands: &["step1"], help: "degraded conditions paired with clear scenes" },
    KeySpec { name: "mix_conditions", default: "clear,fog,rain,night", commands: &["step2"], help: "student input conditions, drawn uniformly" },
    KeySpec { name: "base_channels", default: "16", commands: ALL, help: "encoder width" },
    KeySpec { name: "feature_channels", default: "32", commands: ALL, help: "fused feature channels at 1/4 resolution" },
    KeySpec { name: "afem_enabled", default: "true", commands: ALL, help: "create the adverse feature-enhancement block" },
    KeySpec { name: "k_iters", default: "4", commands: ALL, help: "matcher refinement iterations (1..=16)" },
    KeySpec { name: "hidden", default: "32", commands: ALL, help: "matcher hidden channels" },
    KeySpec { name: "radius", default: "2", commands: ALL, help: "correlation lookup half-width in bins" },
    KeySpec { name: "d_max_quarter", default: "8", commands: ALL, help: "disparity bins searched at 1/4 resolution" },
    KeySpec { name: "height", default: "64", commands: ALL, help: "scene height (divisible by 16)" },
    KeySpec { name: "width", default: "128", commands: ALL, help: "scene width (divisible by 16)" },
    KeySpec { name: "scene_d_max", default: "12", commands: ALL, help: "exclusive upper bound on scene disparities" },
    KeySpec { name: "n_layers", default: "4", commands: ALL, help: "foreground layers per scene" },
    KeySpec { name: "integer_disparities", default: "true", commands: ALL, help: "restrict layer disparities to integers (exact warps)" },
    KeySpec { name: "fog_beta", default: "0.12", commands: ALL, help: "fog scattering coefficient" },
    KeySpec { name: "fog_airlight", default: "0.9", commands: ALL, help: "fog airlight intensity in [0,1]" },
    KeySpec { name: "fog_focal_baseline", default: "40", commands: ALL, help: "focal·baseline product mapping disparity to depth" },
    KeySpec { name: "night_gamma", default: "2.2", commands: ALL, help: "night gamma (≥ 1)" },
    KeySpec { name: "night_gain", default: "0.35", commands: ALL, help: "night brightness gain in (0,1]" },
    KeySpec { name: "night_sigma", default: "0.03", commands: ALL, help: "night sensor noise std" },
    KeySpec { name: "rain_count", default: "40", commands: ALL, help: "rain streaks per view" },
    KeySpec { name: "rain_length", default: "9", commands: ALL, help: "mean streak length (px)" },
    KeySpec { name: "rain_angle", default: "0.15", commands: ALL, help: "streak angle from vertical (radians)" },
    KeySpec { name: "rain_brightness", default: "0.95", commands: ALL, help: "streak brightness in [0,1]" },
    KeySpec { name: "rain_blur", default: "1", commands: ALL, help: "box-blur radius applied after streaks" },
    KeySpec { name: "eval_samples", default: "10", commands: &["eval", "generate"], help: "held-out scenes per condition" },
    KeySpec { name: "eval_conditions", default: "clear,fog,rain,night", commands: &["eval", "generate"], help: "conditions to evaluate or generate" },
    KeySpec { name: "eval_mask", default: "noc", commands: &["eval"], help: "all|noc pixel policy for metrics" },
    KeySpec { name: "variant", default: "adverse", commands: &["eval"], help: "adverse|clear extractor used at evaluation" },
    KeySpec { name: "float_images", default: "false", commands: &["generate"], help: "additionally write float PFM views" },
];

pub fn keys_for_command(command: &str) -> impl Iterator<Item = &'static KeySpec> + '_ {
    CONFIG_KEYS.iter().filter(move |k| k.commands.contains(&command))
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub stage: Option<Stage>,
    pub seed: u64,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub pool_size: usize,
    pub loss: LossWeights,
    pub collapse_std: f64,
    pub pretrain_loss: PretrainLoss,
    pub init: Option<PathBuf>,
    pub teacher: Option<PathBuf>,
    pub from_scratch: bool,
    pub augment: bool,
    pub aug_max_patches: usize,
    pub aug_max_frac: f64,
    pub conditions: Vec<Condition>,
    pub mix_conditions: Vec<Condition>,
    pub model: ModelConfig,
    pub scene: SceneConfig,
    pub fog_beta: f64,
    pub fog_airlight: f64,
    pub fog_focal_baseline: f64,
    pub night_gamma: f64,
    pub night_gain: f64,
    pub night_sigma: f64,
    pub rain_count: usize,
    pub rain_length: f64,
    pub rain_angle: f64,
    pub rain_brightness: f64,
    pub rain_blur: usize,
    pub eval_samples: usize,
    pub eval_conditions: Vec<Condition>,
    pub eval_mask: MaskPolicy,
    pub variant: Variant,
    pub float_images: bool,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        parse_config("", "eval").expect("defaults parse")
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(RoseError::config(format!("{key}: expected true|false, got {v:?}"))),
    }
}

fn parse_conditions(key: &str, v: &str) -> Result<Vec<Condition>> {
    let list: Result<Vec<Condition>> =
        v.split(',').map(|s| Condition::parse(s.trim())).collect();
    let list = list.map_err(|e| RoseError::config(format!("{key}: {e}")))?;
    if list.is_empty() {
        return Err(RoseError::config(format!("{key}: empty condition list")));
    }
    Ok(list)
}

/// Parses `key = value` lines (`#` starts a comment) against the key table
/// for `command`. Unknown and duplicate keys are errors; omitted keys take
/// their documented defaults.
pub fn parse_config(text: &str, command: &str) -> Result<PipelineConfig> {
    let mut values: std::collections::BTreeMap<&'static str, String> =
        keys_for_command(command).map(|k| (k.name, k.default.to_string())).collect();
    let mut seen: Vec<&str> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            RoseError::config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let spec = values
            .keys()
            .find(|k| **k == key)
            .copied()
            .ok_or_else(|| {
                RoseError::config(format!("line {}: unknown key {key:?} for `{command}`", lineno + 1))
            })?;
        if seen.contains(&spec) {
            return Err(RoseError::config(format!("line {}: duplicate key {key:?}", lineno + 1)));
        }
        seen.push(spec);
        values.insert(spec, value.to_string());
    }

    let get = |name: &str| values.get(name).cloned().unwrap_or_default();
    let num = |name: &str| -> Result<f64> {
        get(name)
            .parse::<f64>()
            .map_err(|_| RoseError::config(format!("{name}: expected a number, got {:?}", get(name))))
    };
    let int = |name: &str| -> Result<usize> {
        get(name)
            .parse::<usize>()
            .map_err(|_| RoseError::config(format!("{name}: expected an integer, got {:?}", get(name))))
    };
    let boolean = |name: &str| parse_bool(name, &get(name));
    let has = |name: &str| values.contains_key(name);

    let stage = if has("stage") {
        match get("stage").as_str() {
            "pretrain" => Some(Stage::Pretrain),
            "step1" => Some(Stage::Step1),
            "step2" => Some(Stage::Step2),
            "" => None,
            other => {
                return Err(RoseError::config(format!(
                    "stage: expected pretrain|step1|step2, got {other:?}"
                )))
            }
        }
    } else {
        None
    };

    let k_iters = int("k_iters")?;
    let loss = LossWeights {
        alpha: if has("alpha") { num("alpha")? } else { 0.85 },
        lambda1: if has("lambda1") { num("lambda1")? } else { 1.0 },
        lambda2: if has("lambda2") { num("lambda2")? } else { 10.0 },
        lambda3: if has("lambda3") { num("lambda3")? } else { 1.0 },
        lambda4: if has("lambda4") { num("lambda4")? } else { 1.0 },
        beta: if has("beta") { num("beta")? } else { 0.9 },
        tau: num("tau")?,
        n_iters: k_iters,
    };

    let model = ModelConfig {
        extractor: ExtractorConfig {
            base_channels: int("base_channels")?,
            feature_channels: int("feature_channels")?,
            afem_enabled: boolean("afem_enabled")?,
            prior_tap_depths: [2, 3, 4],
        },
        matcher: MatcherConfig {
            d_max_quarter: int("d_max_quarter")?,
            k_iters,
            hidden: int("hidden")?,
            radius: int("radius")?,
        },
    };
    model.validate()?;

    let scene = SceneConfig {
        h: int("height")?,
        w: int("width")?,
        d_max: num("scene_d_max")?,
        n_layers: int("n_layers")?,
        integer_disparity: boolean("integer_disparities")?,
        ..SceneConfig::default()
    };
    if scene.h % 16 != 0 || scene.w % 16 != 0 {
        return Err(RoseError::config(format!(
            "scene size {}×{} must be divisible by 16",
            scene.h, scene.w
        )));
    }

    let opt_path = |name: &str| -> Option<PathBuf> {
        let v = get(name);
        if v.is_empty() {
            None
        } else {
            Some(PathBuf::from(v))
        }
    };

    let cfg = PipelineConfig {
        stage,
        seed: get("seed")
            .parse::<u64>()
            .map_err(|_| RoseError::config("seed: expected an unsigned integer"))?,
        iterations: if has("iterations") { int("iterations")? } else { 300 },
        batch_size: if has("batch_size") { int("batch_size")? } else { 4 },
        lr: if has("lr") { num("lr")? } else { 1e-3 },
        warmup_frac: if has("warmup_frac") { num("warmup_frac")? } else { 0.05 },
        weight_decay: if has("weight_decay") { num("weight_decay")? } else { 1e-4 },
        pool_size: if has("pool_size") { int("pool_size")? } else { 64 },
        loss,
        collapse_std: if has("collapse_std") { num("collapse_std")? } else { 0.05 },
        pretrain_loss: if has("pretrain_loss") {
            match get("pretrain_loss").as_str() {
                "supervised" => PretrainLoss::Supervised,
                "photometric" => PretrainLoss::Photometric,
                other => {
                    return Err(RoseError::config(format!(
                        "pretrain_loss: expected supervised|photometric, got {other:?}"
                    )))
                }
            }
        } else {
            PretrainLoss::Supervised
        },
        init: if has("init") { opt_path("init") } else { None },
        teacher: if has("teacher") { opt_path("teacher") } else { None },
        from_scratch: if has("from_scratch") { boolean("from_scratch")? } else { false },
        augment: if has("augment") { boolean("augment")? } else { true },
        aug_max_patches: if has("aug_max_patches") { int("aug_max_patches")? } else { 4 },
        aug_max_frac: if has("aug_max_frac") { num("aug_max_frac")? } else { 0.2 },
        conditions: if has("conditions") {
            parse_conditions("conditions", &get("conditions"))?
        } else {
            vec![Condition::Fog, Condition::Rain, Condition::Night]
        },
        mix_conditions: if has("mix_conditions") {
            parse_conditions("mix_conditions", &get("mix_conditions"))?
        } else {
            Condition::ALL.to_vec()
        },
        model,
        scene,
        fog_beta: num("fog_beta")?,
        fog_airlight: num("fog_airlight")?,
        fog_focal_baseline: num("fog_focal_baseline")?,
        night_gamma: num("night_gamma")?,
        night_gain: num("night_gain")?,
        night_sigma: num("night_sigma")?,
        rain_count: int("rain_count")?,
        rain_length: num("rain_length")?,
        rain_angle: num("rain_angle")?,
        rain_brightness: num("rain_brightness")?,
        rain_blur: int("rain_blur")?,
        eval_samples: if has("eval_samples") { int("eval_samples")? } else { 10 },
        eval_conditions: if has("eval_conditions") {
            parse_conditions("eval_conditions", &get("eval_conditions"))?
        } else {
            Condition::ALL.to_vec()
        },
        eval_mask: if has("eval_mask") {
            match get("eval_mask").as_str() {
                "all" => MaskPolicy::All,
                "noc" => MaskPolicy::Noc,
                other => {
                    return Err(RoseError::config(format!(
                        "eval_mask: expected all|noc, got {other:?}"
                    )))
                }
            }
        } else {
            MaskPolicy::Noc
        },
        variant: if has("variant") {
            match get("variant").as_str() {
                "adverse" => Variant::Adverse,
                "clear" => Variant::Clear,
                other => {
                    return Err(RoseError::config(format!(
                        "variant: expected adverse|clear, got {other:?}"
                    )))
                }
            }
        } else {
            Variant::Adverse
        },
        float_images: if has("float_images") { boolean("float_images")? } else { false },
    };

    if cfg.batch_size == 0 {
        return Err(RoseError::config("batch_size must be ≥ 1"));
    }
    if cfg.pool_size == 0 {
        return Err(RoseError::config("pool_size must be ≥ 1"));
    }
    if !(0.0..=0.5).contains(&cfg.warmup_frac) {
        return Err(RoseError::config("warmup_frac must lie in [0, 0.5]"));
    }
    Ok(cfg)
}

/// Validates the stage key against the invoked subcommand.
pub fn require_stage(cfg: &PipelineConfig, expected: Stage) -> Result<()> {
    match cfg.stage {
        Some(s) if s == expected => Ok(()),
        Some(s) => Err(RoseError::config(format!(
            "config declares stage = {}, but the {} subcommand was invoked",
            s.as_str(),
            expected.as_str()
        ))),
        None => Err(RoseError::config(format!(
            "config must declare `stage = {}`",
            expected.as_str()
        ))),
    }
}
