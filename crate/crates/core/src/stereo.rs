//! Warp, loss, mask, and metric formulas shared by training and evaluation.
//!
//! Differentiable operations take per-sample tensors (images [C,H,W],
//! disparities [H,W]); pure operations (masks, metrics) work on plain arrays.
//! Every masked mean divides by the count of valid pixels, not H·W.

use crate::array::Array;
use crate::autodiff::{Graph, Tensor};
use crate::error::{Result, RoseError};

/// Loss weighting and matcher-sequence parameters.
#[derive(Debug, Clone)]
pub struct LossWeights {
    /// SSIM / L1 mix in the photometric loss.
    pub alpha: f64,
    /// Photometric weight.
    pub lambda1: f64,
    /// Smoothness weight.
    pub lambda2: f64,
    /// Feature-consistency weight.
    pub lambda3: f64,
    /// Disparity-consistency weight.
    pub lambda4: f64,
    /// Exponential decay over the refinement sequence.
    pub beta: f64,
    /// Left-right consistency threshold in pixels.
    pub tau: f64,
    /// Matcher refinement iterations K.
    pub n_iters: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.85,
            lambda1: 1.0,
            lambda2: 10.0,
            lambda3: 1.0,
            lambda4: 1.0,
            beta: 0.9,
            tau: 1.0,
            n_iters: 4,
        }
    }
}

/// Binary left-right consistency mask with its fraction of valid pixels.
#[derive(Debug, Clone)]
pub struct ConfidenceMask {
    pub values: Array,
    pub density: f64,
}

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn assert_image_pair(a: &Tensor, b: &Tensor, op: &str) {
    assert!(
        a.ndim() == 3 && a.shape() == b.shape(),
        "{op}: expected matching [C,H,W] images, got {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

/// Reconstructs the left view by sampling the right image at x − D_L with
/// bilinear weights. Returns the warped image and a pure validity mask that
/// is 1 where the sample coordinate lies inside [0, W−1] (out-of-range
/// samples are edge-clamped, and excluded from losses via the mask).
pub fn warp_right_to_left(i_r: &Tensor, d_l: &Tensor) -> Result<(Tensor, Array)> {
    assert!(
        i_r.ndim() == 3 && d_l.ndim() == 2,
        "warp_right_to_left: expected image [C,H,W] and disparity [H,W], got {:?} {:?}",
        i_r.shape(),
        d_l.shape()
    );
    let d_vals = d_l.value();
    if d_vals.data().iter().any(|&v| v < 0.0) {
        return Err(RoseError::invalid(
            "warp_right_to_left: negative disparity entries",
        ));
    }
    let w = i_r.shape()[2];
    let validity = crate::autodiff::hsample_validity(&d_vals, w);
    Ok((i_r.hsample(d_l), validity))
}

/// Windowed SSIM with a 3×3 uniform window (replicate-padded), computed per
/// channel and averaged over channels: [C,H,W] × [C,H,W] → [H,W] in [−1, 1].
pub fn ssim_map(a: &Tensor, b: &Tensor, c1: f64, c2: f64) -> Tensor {
    assert_image_pair(a, b, "ssim_map");
    let mu_a = a.box3();
    let mu_b = b.box3();
    let sig_a = a.mul(a).box3().sub(&mu_a.mul(&mu_a));
    let sig_b = b.mul(b).box3().sub(&mu_b.mul(&mu_b));
    let sig_ab = a.mul(b).box3().sub(&mu_a.mul(&mu_b));
    let num = mu_a
        .mul(&mu_b)
        .mul_scalar(2.0)
        .add_scalar(c1)
        .mul(&sig_ab.mul_scalar(2.0).add_scalar(c2));
    let den = mu_a
        .mul(&mu_a)
        .add(&mu_b.mul(&mu_b))
        .add_scalar(c1)
        .mul(&sig_a.add(&sig_b).add_scalar(c2));
    num.div(&den).mean_axis(0)
}

/// Mean of `map` over the nonzero entries of the pure `mask`; the mask enters
/// the graph as a constant. Errors with `context` when the mask is empty.
pub fn masked_mean(map: &Tensor, mask: &Array, context: &str) -> Result<Tensor> {
    assert!(
        map.shape() == mask.shape(),
        "masked_mean: map {:?} vs mask {:?}",
        map.shape(),
        mask.shape()
    );
    let count = mask.sum();
    if count == 0.0 {
        return Err(RoseError::invalid(format!("empty {context} support")));
    }
    let m = map.graph().constant(mask.clone());
    Ok(map.mul(&m).sum().mul_scalar(1.0 / count))
}

/// Photometric reconstruction loss: mean over valid pixels of
/// α·(1 − SSIM)/2 + (1−α)·L1, with L1 averaged over channels.
pub fn photometric_loss(
    i_l: &Tensor,
    i_hat: &Tensor,
    validity: &Array,
    w: &LossWeights,
) -> Result<Tensor> {
    assert_image_pair(i_l, i_hat, "photometric_loss");
    let l1 = i_l.sub(i_hat).abs().mean_axis(0);
    let dssim = ssim_map(i_l, i_hat, SSIM_C1, SSIM_C2)
        .neg()
        .add_scalar(1.0)
        .mul_scalar(0.5);
    let map = dssim.mul_scalar(w.alpha).add(&l1.mul_scalar(1.0 - w.alpha));
    masked_mean(&map, validity, "photometric")
}

/// Edge-aware smoothness: mean |∂x D|·e^{−|∂x I|} + mean |∂y D|·e^{−|∂y I|},
/// forward differences with the last column/row excluded per axis and |∂I|
/// averaged over channels.
pub fn smoothness_loss(d: &Tensor, img: &Tensor) -> Tensor {
    assert!(
        d.ndim() == 2 && img.ndim() == 3 && img.shape()[1..] == *d.shape(),
        "smoothness_loss: disparity {:?} vs image {:?}",
        d.shape(),
        img.shape()
    );
    let (h, w) = (d.shape()[0], d.shape()[1]);
    let term = |dd: &Tensor, di: &Tensor| -> Tensor {
        let edge = di.abs().mean_axis(0).neg().exp();
        dd.abs().mul(&edge).mean()
    };
    let dx_d = d.crop2d(0, h, 1, w - 1).sub(&d.crop2d(0, h, 0, w - 1));
    let dx_i = img.crop2d(0, h, 1, w - 1).sub(&img.crop2d(0, h, 0, w - 1));
    let dy_d = d.crop2d(1, h - 1, 0, w).sub(&d.crop2d(0, h - 1, 0, w));
    let dy_i = img.crop2d(1, h - 1, 0, w).sub(&img.crop2d(0, h - 1, 0, w));
    term(&dx_d, &dx_i).add(&term(&dy_d, &dy_i))
}

/// Per-pixel cosine dissimilarity along the channel axis, averaged over
/// pixels and both views. The clear-branch features are gradient-stopped
/// targets. Norms are guarded by √(Σx² + eps²); zero-norm pixels contribute
/// loss 1.
pub fn feature_consistency_loss(
    f_adv: (&Tensor, &Tensor),
    f_clr: (&Tensor, &Tensor),
    eps: f64,
) -> Tensor {
    assert!(eps > 0.0, "feature_consistency_loss: eps must be > 0");
    let one_view = |fa: &Tensor, fc: &Tensor| -> Tensor {
        assert_image_pair(fa, fc, "feature_consistency_loss");
        let fc = fc.detach();
        let dot = fa.mul(&fc).sum_axis(0);
        let na = fa.mul(fa).sum_axis(0).add_scalar(eps * eps).sqrt();
        let nc = fc.mul(&fc).sum_axis(0).add_scalar(eps * eps).sqrt();
        dot.div(&na.mul(&nc)).neg().add_scalar(1.0).mean()
    };
    one_view(f_adv.0, f_clr.0)
        .add(&one_view(f_adv.1, f_clr.1))
        .mul_scalar(0.5)
}

/// Sequence-weighted masked L1 against a gradient-stopped target:
/// Σ_{i=1..K} β^{K−i} · mean(|target − seq_i| over mask). Shared by the
/// disparity-consistency and distillation losses.
fn sequence_masked_l1(
    target: &Tensor,
    seq: &[Tensor],
    mask: &Array,
    beta: f64,
    context: &str,
) -> Result<Tensor> {
    assert!(!seq.is_empty(), "{context}: empty disparity sequence");
    let k = seq.len();
    let target = target.detach();
    let mut total: Option<Tensor> = None;
    for (i, d) in seq.iter().enumerate() {
        let weight = beta.powi((k - 1 - i) as i32);
        let term = masked_mean(&target.sub(d).abs(), mask, context)?.mul_scalar(weight);
        total = Some(match total {
            Some(t) => t.add(&term),
            None => term,
        });
    }
    Ok(total.unwrap())
}

/// Disparity consistency between the clear prediction (target, stopped) and
/// the adverse refinement sequence, restricted to the confidence mask.
pub fn disparity_consistency_loss(
    d_clr: &Tensor,
    seq: &[Tensor],
    mask: &ConfidenceMask,
    w: &LossWeights,
) -> Result<Tensor> {
    sequence_masked_l1(d_clr, seq, &mask.values, w.beta, "consistency")
}

/// Distillation loss: the student sequence regresses a frozen teacher's
/// disparity under the teacher's confidence mask, with the same β weighting
/// as the consistency loss.
pub fn kd_loss(
    student_seq: &[Tensor],
    teacher_d: &Array,
    mask: &ConfidenceMask,
    w: &LossWeights,
) -> Result<Tensor> {
    assert!(!student_seq.is_empty(), "distillation: empty disparity sequence");
    let g = student_seq[0].graph().clone();
    let target = g.constant(teacher_d.clone());
    sequence_masked_l1(&target, student_seq, &mask.values, w.beta, "distillation")
}

/// Left-right consistency check (pure): for each left pixel, samples D_R at
/// x − D_L(x,y) bilinearly and accepts when |D_L − D_R(sample)| ≤ tau and the
/// sample lies in bounds.
pub fn geometric_confidence_mask(d_l: &Array, d_r: &Array, tau: f64) -> ConfidenceMask {
    assert!(tau > 0.0, "geometric_confidence_mask: tau must be > 0");
    assert!(
        d_l.ndim() == 2 && d_l.shape() == d_r.shape(),
        "geometric_confidence_mask: shapes {:?} vs {:?}",
        d_l.shape(),
        d_r.shape()
    );
    let (h, w) = (d_l.shape()[0], d_l.shape()[1]);
    let wm = (w - 1) as f64;
    let mut values = Array::zeros(&[h, w]);
    let mut ones = 0usize;
    for y in 0..h {
        for x in 0..w {
            let dl = d_l.at2(y, x);
            let xs = x as f64 - dl;
            if !(0.0..=wm).contains(&xs) {
                continue;
            }
            let x0 = (xs.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let t = xs - x0 as f64;
            let dr = (1.0 - t) * d_r.at2(y, x0) + t * d_r.at2(y, x1);
            if (dl - dr).abs() <= tau {
                values.data_mut()[y * w + x] = 1.0;
                ones += 1;
            }
        }
    }
    let density = ones as f64 / (h * w) as f64;
    ConfidenceMask { values, density }
}

// ---- metrics (pure) ----

fn metric_guard(d: &Array, gt: &Array, mask: &Array, name: &str) -> Result<f64> {
    assert!(
        d.shape() == gt.shape() && d.shape() == mask.shape(),
        "{name}: shapes {:?} / {:?} / {:?}",
        d.shape(),
        gt.shape(),
        mask.shape()
    );
    let count = mask.sum();
    if count == 0.0 {
        return Err(RoseError::invalid(format!("empty {name} evaluation mask")));
    }
    Ok(count)
}

/// Mean absolute disparity error over the mask, in pixels.
pub fn metric_epe(d: &Array, gt: &Array, mask: &Array) -> Result<f64> {
    let count = metric_guard(d, gt, mask, "epe")?;
    let mut acc = 0.0;
    for i in 0..d.len() {
        acc += mask.data()[i] * (d.data()[i] - gt.data()[i]).abs();
    }
    Ok(acc / count)
}

/// Percentage of masked pixels with |error| strictly greater than t.
pub fn metric_bad(d: &Array, gt: &Array, mask: &Array, t: f64) -> Result<f64> {
    assert!(t > 0.0, "metric_bad: threshold must be > 0");
    let count = metric_guard(d, gt, mask, "bad")?;
    let mut bad = 0.0;
    for i in 0..d.len() {
        if mask.data()[i] != 0.0 && (d.data()[i] - gt.data()[i]).abs() > t {
            bad += 1.0;
        }
    }
    Ok(100.0 * bad / count)
}

/// Outlier combination rule for the D1 metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D1Combine {
    /// Outlier iff error > 3 px or error > 5% of ground truth.
    Or,
    /// Outlier iff error > 3 px and error > 5% of ground truth.
    And,
}

/// D1 outlier percentage; requires positive ground truth on the mask.
pub fn metric_d1(d: &Array, gt: &Array, mask: &Array, combine: D1Combine) -> Result<f64> {
    let count = metric_guard(d, gt, mask, "d1")?;
    let mut out = 0.0;
    for i in 0..d.len() {
        if mask.data()[i] == 0.0 {
            continue;
        }
        let g = gt.data()[i];
        if g <= 0.0 {
            return Err(RoseError::invalid(
                "d1 requires positive ground truth on evaluated pixels",
            ));
        }
        let e = (d.data()[i] - g).abs();
        let big = e > 3.0;
        let rel = e > 0.05 * g;
        let outlier = match combine {
            D1Combine::Or => big || rel,
            D1Combine::And => big && rel,
        };
        if outlier {
            out += 1.0;
        }
    }
    Ok(100.0 * out / count)
}

/// Helper building a graph-independent scalar from loss evaluation.
pub fn scalar_graph() -> Graph {
    Graph::new()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_image(seed: u64, c: usize, h: usize, w: usize) -> Array {
        let mut r = Rng::new(seed);
        Array::from_fn(&[c, h, w], |_| r.next_f64())
    }

    #[test]
    fn warp_zero_disparity_is_identity() {
        let g = Graph::new();
        let img = g.constant(random_image(0, 3, 4, 6));
        let d = g.constant(Array::zeros(&[4, 6]));
        let (warped, validity) = warp_right_to_left(&img, &d).unwrap();
        assert_eq!(warped.value(), img.value());
        assert!(validity.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn warp_unit_disparity_shifts_with_clamped_edge() {
        let g = Graph::new();
        let img = g.constant(Array::new(&[1, 1, 5], vec![0.0, 1.0, 2.0, 3.0, 4.0]));
        let d = g.constant(Array::full(&[1, 5], 1.0));
        let (warped, validity) = warp_right_to_left(&img, &d).unwrap();
        assert_eq!(warped.value().data(), &[0.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(validity.data(), &[0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn warp_rejects_negative_disparity() {
        let g = Graph::new();
        let img = g.constant(random_image(1, 1, 2, 4));
        let d = g.constant(Array::full(&[2, 4], -0.5));
        assert!(warp_right_to_left(&img, &d).is_err());
    }

    #[test]
    fn ssim_self_similarity_is_one() {
        let g = Graph::new();
        let img = g.constant(random_image(2, 3, 6, 6));
        let s = ssim_map(&img, &img, SSIM_C1, SSIM_C2).value();
        for v in s.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_constant_zero_vs_one_closed_form() {
        let g = Graph::new();
        let a = g.constant(Array::zeros(&[1, 5, 5]));
        let b = g.constant(Array::full(&[1, 5, 5], 1.0));
        let s = ssim_map(&a, &b, SSIM_C1, SSIM_C2).value();
        let want = (SSIM_C1 * SSIM_C2) / ((1.0 + SSIM_C1) * SSIM_C2);
        for v in s.data() {
            assert!((v - want).abs() < 1e-12, "{v} vs {want}");
        }
    }

    #[test]
    fn photometric_zero_when_equal_and_l1_path() {
        let g = Graph::new();
        let w = LossWeights::default();
        let img = g.constant(random_image(3, 3, 8, 8));
        let full = Array::full(&[8, 8], 1.0);
        let loss = photometric_loss(&img, &img, &full, &w).unwrap();
        assert!(loss.item().abs() < 1e-12);

        let a = g.constant(Array::zeros(&[1, 4, 4]));
        let b = g.constant(Array::full(&[1, 4, 4], 0.5));
        let l1_only = LossWeights { alpha: 0.0, ..LossWeights::default() };
        let mask = Array::full(&[4, 4], 1.0);
        let loss = photometric_loss(&a, &b, &mask, &l1_only).unwrap();
        assert!((loss.item() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn photometric_empty_mask_errors() {
        let g = Graph::new();
        let w = LossWeights::default();
        let img = g.constant(random_image(4, 1, 4, 4));
        let err = photometric_loss(&img, &img, &Array::zeros(&[4, 4]), &w).unwrap_err();
        assert!(err.to_string().contains("empty photometric support"));
    }

    #[test]
    fn smoothness_constant_disparity_is_zero() {
        let g = Graph::new();
        let d = g.constant(Array::full(&[5, 7], 2.5));
        let img = g.constant(random_image(5, 3, 5, 7));
        assert_eq!(smoothness_loss(&d, &img).item(), 0.0);
    }

    #[test]
    fn smoothness_unit_ramp_flat_image_is_one() {
        let g = Graph::new();
        let d = g.constant(Array::from_fn(&[4, 6], |i| (i % 6) as f64));
        let img = g.constant(Array::full(&[3, 4, 6], 0.5));
        let l = smoothness_loss(&d, &img).item();
        assert!((l - 1.0).abs() < 1e-12, "{l}");
    }

    #[test]
    fn smoothness_suppressed_by_strong_edges() {
        let g = Graph::new();
        let d = g.constant(Array::from_fn(&[4, 6], |i| (i % 6) as f64));
        // |∂x I| = 20 per channel everywhere on the x axis
        let img = g.constant(Array::from_fn(&[3, 4, 6], |i| 20.0 * ((i % 6) as f64)));
        let l = smoothness_loss(&d, &img).item();
        assert!(l < 1e-8, "{l}");
    }

    #[test]
    fn feature_consistency_trivial_values() {
        let g = Graph::new();
        let f = g.constant(random_image(6, 4, 3, 3).map(|v| v + 0.5));
        let same = feature_consistency_loss((&f, &f), (&f, &f), 1e-8).item();
        assert!(same.abs() < 1e-9, "{same}");
        let neg = g.constant(f.value().map(|v| -v));
        let anti = feature_consistency_loss((&neg, &neg), (&f, &f), 1e-8).item();
        assert!((anti - 2.0).abs() < 1e-9, "{anti}");
        // channelwise-orthogonal: one-hot channel 0 vs one-hot channel 1
        let mut e0 = Array::zeros(&[2, 2, 2]);
        let mut e1 = Array::zeros(&[2, 2, 2]);
        for i in 0..4 {
            e0.data_mut()[i] = 1.0;
            e1.data_mut()[4 + i] = 1.0;
        }
        let (t0, t1) = (g.constant(e0), g.constant(e1));
        let ortho = feature_consistency_loss((&t0, &t0), (&t1, &t1), 1e-8).item();
        assert!((ortho - 1.0).abs() < 1e-9, "{ortho}");
    }

    #[test]
    fn consistency_loss_beta_weighting() {
        let g = Graph::new();
        let w = LossWeights::default();
        let target = g.constant(Array::zeros(&[3, 3]));
        let one = g.constant(Array::full(&[3, 3], 1.0));
        let mask = ConfidenceMask { values: Array::full(&[3, 3], 1.0), density: 1.0 };
        // K=1: loss = 1
        let l = disparity_consistency_loss(&target, &[one.clone()], &mask, &w).unwrap();
        assert!((l.item() - 1.0).abs() < 1e-12);
        // K=2, both |diff|=1: 0.9 + 1.0
        let l = disparity_consistency_loss(&target, &[one.clone(), one.clone()], &mask, &w)
            .unwrap();
        assert!((l.item() - 1.9).abs() < 1e-12);
        // homogeneity degree 1
        let two = g.constant(Array::full(&[3, 3], 2.0));
        let l2 = disparity_consistency_loss(&target, &[two.clone(), two], &mask, &w).unwrap();
        assert!((l2.item() - 3.8).abs() < 1e-12);
    }

    #[test]
    fn consistency_empty_mask_errors() {
        let g = Graph::new();
        let w = LossWeights::default();
        let target = g.constant(Array::zeros(&[2, 2]));
        let d = g.constant(Array::full(&[2, 2], 1.0));
        let mask = ConfidenceMask { values: Array::zeros(&[2, 2]), density: 0.0 };
        let err = disparity_consistency_loss(&target, &[d], &mask, &w).unwrap_err();
        assert!(err.to_string().contains("empty consistency support"));
    }

    #[test]
    fn consistency_target_is_gradient_stopped() {
        let g = Graph::new();
        let w = LossWeights::default();
        let target = g.leaf(Array::zeros(&[2, 2]), true);
        let d = g.leaf(Array::full(&[2, 2], 1.0), true);
        let mask = ConfidenceMask { values: Array::full(&[2, 2], 1.0), density: 1.0 };
        let l = disparity_consistency_loss(&target, &[d.clone()], &mask, &w).unwrap();
        l.backward();
        assert!(target.grad().is_none());
        assert!(d.grad().is_some());
    }

    #[test]
    fn kd_loss_mean_over_valid_only() {
        let g = Graph::new();
        let w = LossWeights::default();
        let student = g.constant(Array::full(&[2, 2], 2.0));
        let teacher = Array::zeros(&[2, 2]);
        let mut half = Array::zeros(&[2, 2]);
        half.data_mut()[0] = 1.0;
        half.data_mut()[3] = 1.0;
        let mask = ConfidenceMask { values: half, density: 0.5 };
        let l = kd_loss(&[student], &teacher, &mask, &w).unwrap();
        assert!((l.item() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lr_mask_trivial_cases() {
        let c = Array::full(&[3, 8], 2.0);
        let m = geometric_confidence_mask(&c, &c, 1.0);
        // x ≥ 2 samples in bounds and consistent
        for y in 0..3 {
            for x in 0..8 {
                let want = if x >= 2 { 1.0 } else { 0.0 };
                assert_eq!(m.values.at2(y, x), want);
            }
        }
        // disagreement of 2 px with tau 1 → rejected
        let r = Array::full(&[3, 8], 4.0);
        let m = geometric_confidence_mask(&c, &r, 1.0);
        assert_eq!(m.values.sum(), 0.0);
        assert_eq!(m.density, 0.0);
    }

    #[test]
    fn metrics_trivial_values() {
        let gt = Array::full(&[4, 4], 5.0);
        let full = Array::full(&[4, 4], 1.0);
        assert_eq!(metric_epe(&gt, &gt, &full).unwrap(), 0.0);
        let off = gt.map(|v| v + 2.0);
        assert_eq!(metric_epe(&off, &gt, &full).unwrap(), 2.0);
        // half error 1, half error 3 → mean 2
        let mixed = Array::from_fn(&[4, 4], |i| if i % 2 == 0 { 6.0 } else { 8.0 });
        assert_eq!(metric_epe(&mixed, &gt, &full).unwrap(), 2.0);
        // boundary: error exactly t not counted
        let d = gt.map(|v| v + 3.0);
        assert_eq!(metric_bad(&d, &gt, &full, 3.0).unwrap(), 0.0);
        assert_eq!(metric_bad(&d, &gt, &full, 2.9).unwrap(), 100.0);
        assert_eq!(metric_d1(&gt, &gt, &full, D1Combine::Or).unwrap(), 0.0);
    }

    #[test]
    fn d1_or_vs_and_split_cases() {
        let full = Array::full(&[1, 1], 1.0);
        // GT=100, err=4: or → outlier (4 > 3), and → inlier (4 < 5)
        let gt = Array::new(&[1, 1], vec![100.0]);
        let d = Array::new(&[1, 1], vec![104.0]);
        assert_eq!(metric_d1(&d, &gt, &full, D1Combine::Or).unwrap(), 100.0);
        assert_eq!(metric_d1(&d, &gt, &full, D1Combine::And).unwrap(), 0.0);
        // GT=10, err=2: or → outlier (2 > 0.5), and → inlier (2 < 3)
        let gt = Array::new(&[1, 1], vec![10.0]);
        let d = Array::new(&[1, 1], vec![12.0]);
        assert_eq!(metric_d1(&d, &gt, &full, D1Combine::Or).unwrap(), 100.0);
        assert_eq!(metric_d1(&d, &gt, &full, D1Combine::And).unwrap(), 0.0);
    }

    #[test]
    fn bad_metric_antitone_in_threshold() {
        let mut r = Rng::new(9);
        let gt = Array::from_fn(&[6, 6], |_| 4.0 + r.next_f64());
        let d = Array::from_fn(&[6, 6], |_| 4.0 + 3.0 * r.next_f64());
        let full = Array::full(&[6, 6], 1.0);
        let mut prev = 101.0;
        for t in [0.5, 1.0, 2.0, 3.0] {
            let b = metric_bad(&d, &gt, &full, t).unwrap();
            assert!(b <= prev);
            prev = b;
        }
    }
}
