//! Evaluation harness: disparity predictors and per-condition metric reports.

use crate::array::Array;
use crate::autodiff::Graph;
use crate::error::{Result, RoseError};
use crate::model::{forward_pair, ModelBinding, ModelConfig, Variant, WeightStore};
use crate::pipeline::config::{MaskPolicy, PipelineConfig};
use crate::pipeline::data::{build_pool, degrade, SALT_EVAL_DEGRADE, SALT_EVAL_SCENES};
use crate::rng::Rng;
use crate::sgm::{sgm_match, CostKind};
use crate::stereo::{
    geometric_confidence_mask, metric_bad, metric_d1, metric_epe, D1Combine,
};
use crate::weather::{Condition, StereoSample};
use std::fs;
use std::path::Path;

/// Flips the last axis of an array (pure; no graph involved).
pub fn hflip_array(a: &Array) -> Array {
    let w = *a.shape().last().expect("hflip_array: scalar input");
    let rows = a.len() / w;
    let x = a.data();
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        for i in 0..w {
            out[r * w + i] = x[r * w + (w - 1 - i)];
        }
    }
    Array::new(a.shape(), out)
}

/// Extracts entry `b` of a batched array: [B, ...] → [...].
pub fn slice_batch(a: &Array, b: usize) -> Array {
    assert!(a.ndim() >= 2 && b < a.shape()[0], "slice_batch: index {b} for {:?}", a.shape());
    let rest: usize = a.shape()[1..].iter().product();
    Array::new(&a.shape()[1..], a.data()[b * rest..(b + 1) * rest].to_vec())
}

fn tile2(a: &Array) -> Array {
    let mut data = a.data().to_vec();
    data.extend_from_slice(a.data());
    let mut shape = a.shape().to_vec();
    shape[0] *= 2;
    Array::new(&shape, data)
}

/// Runs a forward pass on value-level inputs and returns the final disparity
/// [B,H,W]. A batch of one is duplicated internally (and the copy discarded)
/// so the enhancement block's batch statistics are defined; every other layer
/// is per-sample, so the duplication cannot change the surviving row.
pub fn forward_final(
    store: &WeightStore,
    cfg: &ModelConfig,
    i_l: &Array,
    i_r: &Array,
    variant: Variant,
) -> Result<Array> {
    let single = i_l.shape()[0] == 1;
    let (il, ir) = if single { (tile2(i_l), tile2(i_r)) } else { (i_l.clone(), i_r.clone()) };
    let g = Graph::new();
    let bind = ModelBinding::bind(store, &g);
    let (_, _, seq) = forward_pair(&bind, cfg, &g.constant(il), &g.constant(ir), variant)?;
    let d = seq.final_step().value();
    Ok(if single {
        let row = slice_batch(&d, 0);
        let mut shape = vec![1];
        shape.extend_from_slice(row.shape());
        row.reshaped(&shape)
    } else {
        d
    })
}

/// Right-view disparity via the horizontal-flip trick:
/// D_R = hflip(forward(hflip(I_R), hflip(I_L))). Flipping swaps the roles of
/// the two views, so the network only ever learns the left-reference task.
pub fn flip_predict_right(
    store: &WeightStore,
    cfg: &ModelConfig,
    i_l: &Array,
    i_r: &Array,
    variant: Variant,
) -> Result<Array> {
    let d = forward_final(store, cfg, &hflip_array(i_r), &hflip_array(i_l), variant)?;
    Ok(hflip_array(&d))
}

/// A source of full-resolution left and right disparity maps for one sample.
pub trait DisparityPredictor {
    fn name(&self) -> &'static str;
    fn predict(&mut self, s: &StereoSample) -> Result<(Array, Array)>;
}

pub struct ModelPredictor<'a> {
    pub store: &'a WeightStore,
    pub model: ModelConfig,
    pub variant: Variant,
}

impl DisparityPredictor for ModelPredictor<'_> {
    fn name(&self) -> &'static str {
        "model"
    }

    fn predict(&mut self, s: &StereoSample) -> Result<(Array, Array)> {
        let batch = |a: &Array| {
            let mut shape = vec![1];
            shape.extend_from_slice(a.shape());
            a.clone().reshaped(&shape)
        };
        let (il, ir) = (batch(&s.i_l), batch(&s.i_r));
        let dl = forward_final(self.store, &self.model, &il, &ir, self.variant)?;
        let dr = flip_predict_right(self.store, &self.model, &il, &ir, self.variant)?;
        Ok((slice_batch(&dl, 0), slice_batch(&dr, 0)))
    }
}

pub struct SgmPredictor {
    pub d_max: usize,
    pub kind: CostKind,
    pub p1: f64,
    pub p2: f64,
    pub paths: usize,
}

impl DisparityPredictor for SgmPredictor {
    fn name(&self) -> &'static str {
        "sgm"
    }

    fn predict(&mut self, s: &StereoSample) -> Result<(Array, Array)> {
        let dl = sgm_match(&s.i_l, &s.i_r, self.d_max, self.kind, self.p1, self.p2, self.paths);
        let dr = hflip_array(&sgm_match(
            &hflip_array(&s.i_r),
            &hflip_array(&s.i_l),
            self.d_max,
            self.kind,
            self.p1,
            self.p2,
            self.paths,
        ));
        Ok((dl, dr))
    }
}

/// Returns the ground truth itself; a floor for what "perfect" looks like and
/// a sanity check that the harness introduces no error of its own.
pub struct OraclePredictor;

impl DisparityPredictor for OraclePredictor {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn predict(&mut self, s: &StereoSample) -> Result<(Array, Array)> {
        Ok((s.d_gt_l.clone(), s.d_gt_r.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct ConditionMetrics {
    pub condition: Condition,
    pub epe: f64,
    pub bad1: f64,
    pub bad2: f64,
    pub bad3: f64,
    pub d1_or: f64,
    pub d1_and: f64,
    pub mask_density: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub rows: Vec<ConditionMetrics>,
    pub mask: MaskPolicy,
}

pub const METRICS_HEADER: &str =
    "condition,epe,bad1,bad2,bad3,d1_or,d1_and,mask_density,samples";

impl MetricsReport {
    pub fn row(&self, condition: Condition) -> Option<&ConditionMetrics> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.condition.as_str(),
                r.epe,
                r.bad1,
                r.bad2,
                r.bad3,
                r.d1_or,
                r.d1_and,
                r.mask_density,
                r.samples
            ));
        }
        out
    }
}

/// Evaluates a predictor over the held-out pool, one row per condition. The
/// same base scenes (and, per condition, the same degradation draws) are used
/// for every predictor and every run at a given seed, so comparisons are
/// paired.
pub fn evaluate(
    pred: &mut dyn DisparityPredictor,
    cfg: &PipelineConfig,
) -> Result<MetricsReport> {
    let pool = build_pool(cfg, SALT_EVAL_SCENES, cfg.eval_samples)?;
    let mut rows = Vec::new();
    for (ci, cond) in cfg.eval_conditions.iter().enumerate() {
        let mut deg = Rng::derive(cfg.seed, SALT_EVAL_DEGRADE ^ ((ci as u64) << 8));
        let mut acc = [0.0f64; 7];
        for base in &pool {
            let s = degrade(cfg, base, *cond, deg.next_u64());
            let (dl, dr) = pred.predict(&s)?;
            let mask = match cfg.eval_mask {
                MaskPolicy::All => Array::full(s.d_gt_l.shape(), 1.0),
                MaskPolicy::Noc => s.occ_l.map(|o| 1.0 - o),
            };
            let vals = [
                metric_epe(&dl, &s.d_gt_l, &mask)?,
                metric_bad(&dl, &s.d_gt_l, &mask, 1.0)?,
                metric_bad(&dl, &s.d_gt_l, &mask, 2.0)?,
                metric_bad(&dl, &s.d_gt_l, &mask, 3.0)?,
                metric_d1(&dl, &s.d_gt_l, &mask, D1Combine::Or)?,
                metric_d1(&dl, &s.d_gt_l, &mask, D1Combine::And)?,
                geometric_confidence_mask(&dl, &dr, cfg.loss.tau).density,
            ];
            for v in vals {
                if !v.is_finite() {
                    return Err(RoseError::invalid(format!(
                        "non-finite metric for {} under {}",
                        pred.name(),
                        cond.as_str()
                    )));
                }
            }
            for (a, v) in acc.iter_mut().zip(vals) {
                *a += v;
            }
        }
        let n = pool.len() as f64;
        rows.push(ConditionMetrics {
            condition: *cond,
            epe: acc[0] / n,
            bad1: acc[1] / n,
            bad2: acc[2] / n,
            bad3: acc[3] / n,
            d1_or: acc[4] / n,
            d1_and: acc[5] / n,
            mask_density: acc[6] / n,
            samples: pool.len(),
        });
    }
    Ok(MetricsReport { rows, mask: cfg.eval_mask })
}

pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), report.to_csv())?;
    Ok(())
}
