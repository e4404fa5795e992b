//! The three-stage training procedure.
//!
//! Stage 0 ("pretrain") fits the matcher on clear synthetic scenes. Stage 1
//! ("step1") adapts it to degraded imagery by holding each degraded scene
//! against its clear counterpart. Stage 2 ("step2") distills a frozen stage-1
//! teacher into a student under a geometric confidence mask.
//!
//! Every stage is a pure function of (config, seed, initial weights): batches,
//! conditions, degradations and augmentations all come from salted
//! deterministic streams, so reruns produce byte-identical checkpoints.

use crate::array::Array;
use crate::autodiff::{Graph, Tensor};
use crate::error::{Result, RoseError};
use crate::model::{
    forward_pair, has_prior, init_weights, install_prior_from_encoder, ModelBinding, Variant,
    WeightStore,
};
use crate::pipeline::artifacts::{base_manifest, write_manifest, CsvLog};
use crate::pipeline::config::{PipelineConfig, PretrainLoss};
use crate::pipeline::data::{
    build_pool, degrade, stack_gt_left, stack_views, SALT_AUGMENT, SALT_CONDITION, SALT_DEGRADE,
    SALT_DRAW, SALT_TRAIN_SCENES,
};
use crate::pipeline::eval::{flip_predict_right, slice_batch};
use crate::pipeline::optim::{lr_at, AdamW};
use crate::rng::Rng;
use crate::stereo::{
    disparity_consistency_loss, feature_consistency_loss, geometric_confidence_mask, kd_loss,
    photometric_loss, smoothness_loss, warp_right_to_left, ConfidenceMask, LossWeights,
};
use crate::weather::{asymmetric_augment, AugmentConfig, StereoSample};
use std::collections::BTreeMap;
use std::path::Path;

/// Norm guard for the feature-consistency cosine.
pub const FEATURE_EPS: f64 = 1e-8;

pub const CHECKPOINT_NAME: &str = "weights.ckpt";
pub const LOSS_CURVE_NAME: &str = "loss_curve.csv";

/// Collects gradients off a binding after `backward`. Parameters that did not
/// participate in the loss are simply absent, which the optimizer treats as
/// "leave bitwise unchanged".
fn gradients(bind: &ModelBinding) -> BTreeMap<String, Array> {
    let mut out = BTreeMap::new();
    for (name, t) in bind.iter() {
        if let Some(g) = t.grad() {
            out.insert(name.clone(), g);
        }
    }
    out
}

fn check_finite(loss: f64, stage: &str, iter: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(RoseError::training(format!(
            "{stage}: non-finite loss {loss} at iteration {iter}; aborting"
        )))
    }
}

/// Population standard deviation of all entries.
fn std_of(a: &Array) -> f64 {
    let m = a.mean();
    (a.data().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / a.len() as f64).sqrt()
}

fn weighted_sequence_l1(seq: &[Tensor], target: &Tensor, beta: f64) -> Tensor {
    let k = seq.len();
    let mut total: Option<Tensor> = None;
    for (i, d) in seq.iter().enumerate() {
        let w = beta.powi((k - 1 - i) as i32);
        let term = d.sub(target).abs().mean().mul_scalar(w);
        total = Some(match total {
            Some(t) => t.add(&term),
            None => term,
        });
    }
    total.expect("empty disparity sequence")
}

/// λ1·photometric + λ2·smoothness on one sample's final disparity. Either
/// term is skipped entirely when its weight is zero, so ablation runs do not
/// even build the corresponding graph nodes. Returns the weighted tensor (if
/// any) and the raw per-term values for logging.
fn self_supervised_terms(
    i_l: &Tensor,
    i_r: &Tensor,
    d: &Tensor,
    w: &LossWeights,
) -> Result<(Option<Tensor>, f64, f64)> {
    let mut total: Option<Tensor> = None;
    let mut photo = 0.0;
    let mut smooth = 0.0;
    if w.lambda1 != 0.0 {
        let (i_hat, validity) = warp_right_to_left(i_r, d)?;
        let lp = photometric_loss(i_l, &i_hat, &validity, w)?;
        photo = lp.item();
        total = Some(lp.mul_scalar(w.lambda1));
    }
    if w.lambda2 != 0.0 {
        let ls = smoothness_loss(d, i_l);
        smooth = ls.item();
        let t = ls.mul_scalar(w.lambda2);
        total = Some(match total {
            Some(acc) => acc.add(&t),
            None => t,
        });
    }
    Ok((total, photo, smooth))
}

fn add_opt(acc: Option<Tensor>, t: Option<Tensor>) -> Option<Tensor> {
    match (acc, t) {
        (Some(a), Some(b)) => Some(a.add(&b)),
        (a, None) => a,
        (None, b) => b,
    }
}

fn augment_cfg(cfg: &PipelineConfig) -> AugmentConfig {
    AugmentConfig { max_patches: cfg.aug_max_patches, max_frac: cfg.aug_max_frac }
}

fn save_stage(
    store: &WeightStore,
    cfg: &PipelineConfig,
    out: &Path,
    command: &str,
    config_bytes: &[u8],
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    store.save(&out.join(CHECKPOINT_NAME))?;
    let mut entries = base_manifest(command, cfg.seed, config_bytes);
    entries.push(("iterations", cfg.iterations.to_string()));
    entries.push(("parameters", store.len().to_string()));
    write_manifest(out, &entries)?;
    Ok(())
}

/// Stage 0: supervised (or optionally photometric) pretraining on clear
/// scenes with the plain extractor. Zero iterations is a valid no-op that
/// still writes the initial weights.
pub fn run_pretrain(cfg: &PipelineConfig, out: &Path, config_bytes: &[u8]) -> Result<WeightStore> {
    let mut store = init_weights(&cfg.model, cfg.seed);
    let pool = build_pool(cfg, SALT_TRAIN_SCENES, cfg.pool_size)?;
    let mut opt = AdamW::new(cfg.weight_decay);
    let mut draw = Rng::derive(cfg.seed, SALT_DRAW);
    let mut aug = Rng::derive(cfg.seed, SALT_AUGMENT);
    let aug_cfg = augment_cfg(cfg);
    let mut curve = CsvLog::create(out, LOSS_CURVE_NAME, "iter,lr,loss")?;

    for it in 0..cfg.iterations {
        let lr = lr_at(it, cfg.iterations, cfg.lr, cfg.warmup_frac);
        let mut items: Vec<StereoSample> =
            (0..cfg.batch_size).map(|_| pool[draw.below(pool.len())].clone()).collect();
        if cfg.augment {
            items = items
                .iter()
                .map(|s| asymmetric_augment(s, aug.next_u64(), &aug_cfg).0)
                .collect();
        }
        let (il, ir) = stack_views(&items);
        let gt = stack_gt_left(&items);

        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let (tl, tr) = (g.constant(il), g.constant(ir));
        let (_, _, seq) = forward_pair(&bind, &cfg.model, &tl, &tr, Variant::Clear)?;

        let loss = match cfg.pretrain_loss {
            PretrainLoss::Supervised => {
                let target = g.constant(gt);
                weighted_sequence_l1(&seq.steps, &target, cfg.loss.beta)
            }
            PretrainLoss::Photometric => {
                let mut total: Option<Tensor> = None;
                for b in 0..cfg.batch_size {
                    let (t, _, _) = self_supervised_terms(
                        &tl.select_batch(b),
                        &tr.select_batch(b),
                        &seq.final_step().select_batch(b),
                        &cfg.loss,
                    )?;
                    total = add_opt(total, t);
                }
                total
                    .ok_or_else(|| {
                        RoseError::config("photometric pretraining needs lambda1 or lambda2 > 0")
                    })?
                    .mul_scalar(1.0 / cfg.batch_size as f64)
            }
        };

        let lv = loss.item();
        curve.row(&[it.to_string(), lr.to_string(), lv.to_string()])?;
        check_finite(lv, "pretrain", it)?;
        loss.backward();
        opt.step(&mut store, &gradients(&bind), lr);
    }

    curve.finish()?;
    save_stage(&store, cfg, out, "pretrain", config_bytes)?;
    Ok(store)
}

/// Stage 1: scene-correspondence adaptation. Each batch pairs clear scenes
/// with degraded copies of the same geometry; the adverse branch (enhanced
/// extractor) is pulled toward the clear branch through feature and disparity
/// consistency while both keep their own photometric and smoothness terms.
pub fn run_step1(
    cfg: &PipelineConfig,
    init: WeightStore,
    out: &Path,
    config_bytes: &[u8],
) -> Result<WeightStore> {
    let mut store = init;
    if !has_prior(&store) {
        install_prior_from_encoder(&mut store);
    }
    if cfg.batch_size < 2 {
        return Err(RoseError::config(
            "step1 needs batch_size >= 2: the enhancement block computes batch statistics",
        ));
    }
    if cfg.conditions.is_empty() {
        return Err(RoseError::config("step1 needs at least one adverse condition"));
    }
    let pool = build_pool(cfg, SALT_TRAIN_SCENES, cfg.pool_size)?;
    let mut opt = AdamW::new(cfg.weight_decay);
    let mut draw = Rng::derive(cfg.seed, SALT_DRAW);
    let mut cond_rng = Rng::derive(cfg.seed, SALT_CONDITION);
    let mut deg_rng = Rng::derive(cfg.seed, SALT_DEGRADE);
    let w = &cfg.loss;
    let mut curve = CsvLog::create(
        out,
        LOSS_CURVE_NAME,
        "iter,lr,total,photo_adv,smooth_adv,fc,dc,photo_clr,smooth_clr,mv_density,dk_std",
    )?;

    for it in 0..cfg.iterations {
        let lr = lr_at(it, cfg.iterations, cfg.lr, cfg.warmup_frac);
        let clear: Vec<StereoSample> =
            (0..cfg.batch_size).map(|_| pool[draw.below(pool.len())].clone()).collect();
        let adverse: Vec<StereoSample> = clear
            .iter()
            .map(|s| {
                let c = cfg.conditions[cond_rng.below(cfg.conditions.len())];
                degrade(cfg, s, c, deg_rng.next_u64())
            })
            .collect();
        let (cl_l, cl_r) = stack_views(&clear);
        let (ad_l, ad_r) = stack_views(&adverse);

        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let (tcl_l, tcl_r) = (g.constant(cl_l.clone()), g.constant(cl_r.clone()));
        let (tad_l, tad_r) = (g.constant(ad_l), g.constant(ad_r));
        let (f_cl_l, f_cl_r, seq_cl) =
            forward_pair(&bind, &cfg.model, &tcl_l, &tcl_r, Variant::Clear)?;
        let (f_ad_l, f_ad_r, seq_ad) =
            forward_pair(&bind, &cfg.model, &tad_l, &tad_r, Variant::Adverse)?;

        // Collapse monitor: consistency terms alone admit the degenerate fix
        // of predicting a constant everywhere. Catch it before stepping.
        let dk = seq_ad.final_step().value();
        let dk_std = std_of(&dk);
        if dk_std < cfg.collapse_std {
            curve.finish()?;
            return Err(RoseError::training(format!(
                "consistency-only collapse: adverse disparity std {dk_std:.5} px fell below \
                 {} at iteration {it}",
                cfg.collapse_std
            )));
        }

        // Confidence masks from the clear branch's left/right agreement.
        let masks: Option<Vec<ConfidenceMask>> = if w.lambda4 != 0.0 {
            let d_l = seq_cl.final_step().value();
            let d_r = flip_predict_right(&store, &cfg.model, &cl_l, &cl_r, Variant::Clear)?;
            Some(
                (0..cfg.batch_size)
                    .map(|b| {
                        geometric_confidence_mask(
                            &slice_batch(&d_l, b),
                            &slice_batch(&d_r, b),
                            w.tau,
                        )
                    })
                    .collect(),
            )
        } else {
            None
        };

        let mut total: Option<Tensor> = None;
        let mut log = [0.0f64; 7]; // photo_adv, smooth_adv, fc, dc, photo_clr, smooth_clr, mv
        for b in 0..cfg.batch_size {
            let d_ad = seq_ad.final_step().select_batch(b);
            let (adv_terms, pa, sa) = self_supervised_terms(
                &tad_l.select_batch(b),
                &tad_r.select_batch(b),
                &d_ad,
                w,
            )?;
            total = add_opt(total, adv_terms);
            let d_cl = seq_cl.final_step().select_batch(b);
            let (clr_terms, pc, sc) = self_supervised_terms(
                &tcl_l.select_batch(b),
                &tcl_r.select_batch(b),
                &d_cl,
                w,
            )?;
            total = add_opt(total, clr_terms);
            log[0] += pa;
            log[1] += sa;
            log[4] += pc;
            log[5] += sc;

            if w.lambda3 != 0.0 {
                let fc = feature_consistency_loss(
                    (&f_ad_l.select_batch(b), &f_ad_r.select_batch(b)),
                    (&f_cl_l.select_batch(b), &f_cl_r.select_batch(b)),
                    FEATURE_EPS,
                );
                log[2] += fc.item();
                total = add_opt(total, Some(fc.mul_scalar(w.lambda3)));
            }
            if let Some(masks) = &masks {
                let steps: Vec<Tensor> =
                    seq_ad.steps.iter().map(|s| s.select_batch(b)).collect();
                let dc = disparity_consistency_loss(&d_cl, &steps, &masks[b], w)?;
                log[3] += dc.item();
                log[6] += masks[b].density;
                total = add_opt(total, Some(dc.mul_scalar(w.lambda4)));
            }
        }

        let loss = total
            .ok_or_else(|| RoseError::config("step1: all loss weights are zero"))?
            .mul_scalar(1.0 / cfg.batch_size as f64);
        let lv = loss.item();
        let nb = cfg.batch_size as f64;
        curve.row(&[
            it.to_string(),
            lr.to_string(),
            lv.to_string(),
            (log[0] / nb).to_string(),
            (log[1] / nb).to_string(),
            (log[2] / nb).to_string(),
            (log[3] / nb).to_string(),
            (log[4] / nb).to_string(),
            (log[5] / nb).to_string(),
            (log[6] / nb).to_string(),
            dk_std.to_string(),
        ])?;
        check_finite(lv, "step1", it)?;
        loss.backward();
        opt.step(&mut store, &gradients(&bind), lr);
    }

    curve.finish()?;
    save_stage(&store, cfg, out, "step1", config_bytes)?;
    Ok(store)
}

/// Stage 2: confidence-masked distillation. The teacher (which must arrive
/// fully frozen) predicts on clear pairs; the student sees degraded and
/// augmented copies of the same scenes and regresses the teacher's disparity
/// where the teacher's left/right predictions agree. Distillation is the
/// only objective here — no photometric term ever touches the degraded pair.
pub fn run_step2(
    cfg: &PipelineConfig,
    teacher: &WeightStore,
    out: &Path,
    config_bytes: &[u8],
) -> Result<WeightStore> {
    if !teacher.all_frozen() {
        return Err(RoseError::training(
            "distillation requires a fully frozen teacher; freeze every parameter first",
        ));
    }
    if cfg.batch_size < 2 {
        return Err(RoseError::config(
            "step2 needs batch_size >= 2: the enhancement block computes batch statistics",
        ));
    }
    if cfg.mix_conditions.is_empty() {
        return Err(RoseError::config("step2 needs at least one student condition"));
    }

    let mut student = if cfg.from_scratch {
        // Fresh random weights, but the frozen stage-0 prior transfers: it is
        // the fixed reference the enhanced extractor was aligned against.
        let mut s = init_weights(&cfg.model, cfg.seed);
        for name in teacher.names() {
            if name.starts_with("prior.") {
                if s.contains(&name) {
                    s.set_value(&name, teacher.value(&name).clone());
                } else {
                    s.insert(&name, teacher.value(&name).clone());
                }
                s.freeze(&name);
            }
        }
        s
    } else {
        let mut s = teacher.clone();
        for (name, p) in s.iter_mut() {
            p.frozen = name.starts_with("prior.");
        }
        s
    };
    if !has_prior(&student) {
        install_prior_from_encoder(&mut student);
    }

    let pool = build_pool(cfg, SALT_TRAIN_SCENES, cfg.pool_size)?;
    let mut opt = AdamW::new(cfg.weight_decay);
    let mut draw = Rng::derive(cfg.seed, SALT_DRAW);
    let mut cond_rng = Rng::derive(cfg.seed, SALT_CONDITION);
    let mut deg_rng = Rng::derive(cfg.seed, SALT_DEGRADE);
    let mut aug = Rng::derive(cfg.seed, SALT_AUGMENT);
    let aug_cfg = augment_cfg(cfg);
    let w = &cfg.loss;
    let mut curve = CsvLog::create(out, LOSS_CURVE_NAME, "iter,lr,kd,mv_density,used_samples")?;

    for it in 0..cfg.iterations {
        let lr = lr_at(it, cfg.iterations, cfg.lr, cfg.warmup_frac);
        let clear: Vec<StereoSample> =
            (0..cfg.batch_size).map(|_| pool[draw.below(pool.len())].clone()).collect();
        let (cl_l, cl_r) = stack_views(&clear);

        // Teacher targets and confidence, gradient-free by construction.
        let t_l = crate::pipeline::eval::forward_final(
            teacher,
            &cfg.model,
            &cl_l,
            &cl_r,
            Variant::Clear,
        )?;
        let t_r = flip_predict_right(teacher, &cfg.model, &cl_l, &cl_r, Variant::Clear)?;
        let masks: Vec<ConfidenceMask> = (0..cfg.batch_size)
            .map(|b| geometric_confidence_mask(&slice_batch(&t_l, b), &slice_batch(&t_r, b), w.tau))
            .collect();
        let kept: Vec<usize> = (0..cfg.batch_size).filter(|&b| masks[b].density > 0.0).collect();
        for b in 0..cfg.batch_size {
            if masks[b].density == 0.0 {
                eprintln!(
                    "warning: step2 iteration {it}: dropping sample {b} (empty confidence mask)"
                );
            }
        }
        let density =
            masks.iter().map(|m| m.density).sum::<f64>() / cfg.batch_size as f64;
        if kept.is_empty() {
            // The schedule still advances; the batch just contributes nothing.
            curve.row(&[
                it.to_string(),
                lr.to_string(),
                "skipped".to_string(),
                density.to_string(),
                "0".to_string(),
            ])?;
            continue;
        }

        // Student inputs: degraded (mix of conditions, possibly clear) and
        // always asymmetrically augmented.
        let student_in: Vec<StereoSample> = clear
            .iter()
            .map(|s| {
                let c = cfg.mix_conditions[cond_rng.below(cfg.mix_conditions.len())];
                let d = degrade(cfg, s, c, deg_rng.next_u64());
                asymmetric_augment(&d, aug.next_u64(), &aug_cfg).0
            })
            .collect();
        let (st_l, st_r) = stack_views(&student_in);

        let g = Graph::new();
        let bind = ModelBinding::bind(&student, &g);
        let (_, _, seq) = forward_pair(
            &bind,
            &cfg.model,
            &g.constant(st_l),
            &g.constant(st_r),
            Variant::Adverse,
        )?;

        let mut total: Option<Tensor> = None;
        for &b in &kept {
            let steps: Vec<Tensor> = seq.steps.iter().map(|s| s.select_batch(b)).collect();
            let term = kd_loss(&steps, &slice_batch(&t_l, b), &masks[b], w)?;
            total = add_opt(total, Some(term));
        }
        let loss = total.unwrap().mul_scalar(1.0 / kept.len() as f64);
        let lv = loss.item();
        curve.row(&[
            it.to_string(),
            lr.to_string(),
            lv.to_string(),
            density.to_string(),
            kept.len().to_string(),
        ])?;
        check_finite(lv, "step2", it)?;
        loss.backward();
        opt.step(&mut student, &gradients(&bind), lr);
    }

    curve.finish()?;
    save_stage(&student, cfg, out, "step2", config_bytes)?;
    Ok(student)
}
