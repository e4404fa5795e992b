//! Dual-branch disparity network: a small strided-conv encoder plus a frozen
//! "prior" copy of it feed a pyramid decoder, with an adverse-weather feature
//! enhancement block on the trainable branch and an iterative cost-volume
//! matcher emitting a full-resolution disparity sequence.

mod store;

pub use store::{
    has_prior, init_weights, install_prior_from_encoder, require_prior, ModelBinding, Param,
    WeightStore,
};

use crate::array::Array;
use crate::autodiff::{concat_channels, cost_volume_raw, Tensor};
use crate::error::{Result, RoseError};

/// Variance guard shared by every instance/batch normalization in the model.
pub const NORM_EPS: f64 = 1e-5;
/// Magnitude guard for the frequency-domain ops; keeps phase division finite.
pub const FOURIER_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorConfig {
    pub base_channels: usize,
    /// Channels of the fused feature map emitted at 1/4 resolution.
    pub feature_channels: usize,
    pub afem_enabled: bool,
    /// Encoder depths (1-based conv index) whose activations are tapped and
    /// injected into the decoder; depth d sits at 1/2^d resolution.
    pub prior_tap_depths: [usize; 3],
}

impl Default for ExtractorConfig {
    fn default() -> ExtractorConfig {
        ExtractorConfig {
            base_channels: 16,
            feature_channels: 32,
            afem_enabled: true,
            prior_tap_depths: [2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatcherConfig {
    /// Disparity bins searched at 1/4 resolution (bins 0..d_max_quarter−1).
    pub d_max_quarter: usize,
    pub k_iters: usize,
    pub hidden: usize,
    /// Correlation lookup half-width (bins) around the current estimate.
    pub radius: usize,
}

impl Default for MatcherConfig {
    fn default() -> MatcherConfig {
        MatcherConfig { d_max_quarter: 16, k_iters: 4, hidden: 32, radius: 2 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelConfig {
    pub extractor: ExtractorConfig,
    pub matcher: MatcherConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.extractor;
        if e.base_channels == 0 || e.feature_channels == 0 {
            return Err(RoseError::config("channel counts must be ≥ 1"));
        }
        let d = &e.prior_tap_depths;
        if !(d.windows(2).all(|p| p[0] < p[1]) && d[0] >= 2 && d[2] <= 4) {
            return Err(RoseError::config(format!(
                "prior_tap_depths must be strictly increasing within 2..=4, got {d:?}"
            )));
        }
        let m = &self.matcher;
        if m.k_iters == 0 || m.k_iters > 16 {
            return Err(RoseError::config(format!(
                "k_iters must lie in 1..=16, got {}",
                m.k_iters
            )));
        }
        if m.d_max_quarter == 0 || m.hidden == 0 {
            return Err(RoseError::config("d_max_quarter and hidden must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Clear,
    Adverse,
}

/// Disparity estimates after each refinement iteration, upsampled to full
/// resolution ([B,H,W] each); the last entry is the final prediction.
#[derive(Debug, Clone)]
pub struct DisparitySequence {
    pub steps: Vec<Tensor>,
}

impl DisparitySequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_step(&self) -> &Tensor {
        self.steps.last().expect("empty disparity sequence")
    }
}

fn conv(bind: &ModelBinding, name: &str, x: &Tensor, stride: usize, pad: usize) -> Tensor {
    x.conv2d(
        &bind.get(&format!("{name}.w")),
        &bind.get(&format!("{name}.b")),
        stride,
        pad,
    )
}

fn conv_nb(bind: &ModelBinding, name: &str, x: &Tensor, stride: usize, pad: usize) -> Tensor {
    let w = bind.get(&format!("{name}.w"));
    let zero_bias = x.graph().constant(Array::zeros(&[w.shape()[0]]));
    x.conv2d(&w, &zero_bias, stride, pad)
}

/// Bias-free conv followed by per-channel instance normalization. Keeping
/// every pre-activation zero-mean/unit-variance means no relu stage can lose
/// all of its positive mass, and shrinking the weights cannot flatten the
/// features — the normalization restores unit scale, so the only route to a
/// degenerate (input-independent) output is through the weight *directions*.
/// The conv carries no bias because the normalization would cancel it.
fn conv_norm(bind: &ModelBinding, name: &str, x: &Tensor, stride: usize, pad: usize) -> Tensor {
    conv_nb(bind, name, x, stride, pad).instance_norm(NORM_EPS)
}

/// Frequency-domain degradation suppressor: lifts each channel to its 2-D
/// spectrum, reshapes the magnitudes through a two-conv residual (clamped at
/// zero), and rebuilds the signal with the original phases. With the second
/// amplitude conv at zero this is the DFT round trip.
pub fn fourier_suppress(bind: &ModelBinding, f: &Tensor) -> Tensor {
    let x = f.dft2();
    let a = x.complex_abs(FOURIER_EPS);
    let boost = conv(bind, "afem.amp1", &a, 1, 0).relu();
    let a_new = a.add(&conv(bind, "afem.amp2", &boost, 1, 0)).relu();
    crate::autodiff::complex_rescale(&x, &a_new, FOURIER_EPS).idft2()
}

/// Adverse-feature enhancement: parallel instance/batch normalization with
/// learned affines, squeeze-excitation gating over the concatenated pair, a
/// 1×1 fusion back to C channels, frequency-domain suppression, and a
/// residual connection. Zero-initialized fusion and amplitude convs make the
/// whole block an exact identity at the start of training.
pub fn afem_forward(bind: &ModelBinding, f: &Tensor) -> Result<Tensor> {
    assert!(f.ndim() == 4, "afem_forward: expected [B,C,H,W], got {:?}", f.shape());
    if f.shape()[0] < 2 {
        return Err(RoseError::invalid(
            "feature enhancement computes batch-norm statistics: batch must be ≥ 2",
        ));
    }
    let f_in = f
        .instance_norm(NORM_EPS)
        .channel_affine(&bind.get("afem.in.gamma"), &bind.get("afem.in.beta"));
    let f_bn = f
        .batch_norm(NORM_EPS)
        .channel_affine(&bind.get("afem.bn.gamma"), &bind.get("afem.bn.beta"));
    let merged = concat_channels(&[&f_in, &f_bn]);
    let gates = merged
        .global_avg_pool()
        .matmul(&bind.get("afem.se1.w"))
        .add_row(&bind.get("afem.se1.b"))
        .relu()
        .matmul(&bind.get("afem.se2.w"))
        .add_row(&bind.get("afem.se2.b"))
        .sigmoid();
    let fused = conv(bind, "afem.fuse", &merged.channel_scale(&gates), 1, 0);
    Ok(fourier_suppress(bind, &fused).add(f))
}

/// Runs one encoder branch (stride-2 3×3 conv → instance norm → relu per
/// stage), returning the activation after every stage.
fn run_encoder(bind: &ModelBinding, prefix: &str, image: &Tensor) -> Vec<Tensor> {
    let mut acts = Vec::with_capacity(4);
    let mut x = image.clone();
    for i in 1..=4 {
        x = conv_norm(bind, &format!("{prefix}.c{i}"), &x, 2, 1).relu();
        acts.push(x.clone());
    }
    acts
}

fn up_to_quarter(t: &Tensor, depth: usize) -> Tensor {
    let mut t = t.clone();
    for _ in 2..depth {
        t = t.upsample2();
    }
    t
}

/// Fused feature map at 1/4 resolution. Taps from the trainable encoder and
/// the prior branch are upsampled to 1/4 and concatenated into the decoder;
/// the adverse variant enhances the trainable 1/4-scale tap first. Without
/// installed `prior.*` weights the prior branch aliases the trainable
/// encoder (the supervised-pretraining configuration, where both would be
/// identical anyway).
pub fn extract_features(
    bind: &ModelBinding,
    cfg: &ModelConfig,
    image: &Tensor,
    variant: Variant,
) -> Result<Tensor> {
    let e = &cfg.extractor;
    if variant == Variant::Adverse && !e.afem_enabled {
        return Err(RoseError::invalid("adverse variant requires afem_enabled"));
    }
    let acts = run_encoder(bind, "enc", image);
    let prior_acts = if bind.contains("prior.c1.w") {
        run_encoder(bind, "prior", image)
    } else {
        acts.clone()
    };

    let mut taps: Vec<Tensor> = Vec::with_capacity(6);
    for &d in &e.prior_tap_depths {
        let mut t = acts[d - 1].clone();
        if variant == Variant::Adverse && d == 2 {
            t = afem_forward(bind, &t)?;
        }
        taps.push(up_to_quarter(&t, d));
    }
    for &d in &e.prior_tap_depths {
        taps.push(up_to_quarter(&prior_acts[d - 1], d));
    }
    let refs: Vec<&Tensor> = taps.iter().collect();
    let fused = conv_norm(bind, "dec.fuse", &concat_channels(&refs), 1, 0).relu();
    // The normalized output fixes the correlation-score scale at ~√C, which
    // keeps the initial soft-argmin readout committed (near per-pixel argmax)
    // instead of pinned at the flat-softmax midpoint.
    Ok(conv_norm(bind, "dec.out", &fused, 1, 1))
}

/// Correlation volume over disparity bins 0..d_max_quarter−1 at feature
/// resolution; out-of-bounds entries hold the large negative sentinel.
pub fn cost_volume(f_l: &Tensor, f_r: &Tensor, d_max_quarter: usize) -> Result<Tensor> {
    let w = f_l.shape()[3];
    if d_max_quarter >= w {
        return Err(RoseError::invalid(format!(
            "cost volume: d_max_quarter {d_max_quarter} must be < feature width {w}"
        )));
    }
    if d_max_quarter == 0 {
        return Err(RoseError::invalid("cost volume: d_max_quarter must be ≥ 1"));
    }
    Ok(cost_volume_raw(f_l, f_r, d_max_quarter))
}

/// Differentiable disparity readout: softmax over the (similarity-signed)
/// disparity axis, then the expectation of the bin index. [B,D,H,W] → [B,H,W].
pub fn soft_argmin(volume: &Tensor) -> Tensor {
    assert!(volume.ndim() == 4, "soft_argmin: expected [B,D,H,W], got {:?}", volume.shape());
    let bins: Vec<f64> = (0..volume.shape()[1]).map(|d| d as f64).collect();
    volume.softmax_axis(1).weighted_sum_axis(1, &bins)
}

/// Iterative matcher: soft-argmin initialization, then K refinement steps
/// that look up the correlation volume around the current estimate (±radius
/// bins, bilinear), concat it with the estimate and a context projection of
/// F_L, and emit a residual update through a 3-conv head (zero-initialized
/// last conv, so training starts from the raw soft-argmin). Every iterate is
/// clamped nonnegative, upsampled ×4, and disparity-scaled ×4.
pub fn matcher_forward(
    bind: &ModelBinding,
    cfg: &ModelConfig,
    f_l: &Tensor,
    f_r: &Tensor,
) -> Result<DisparitySequence> {
    let m = &cfg.matcher;
    let volume = cost_volume(f_l, f_r, m.d_max_quarter)?;
    let s = f_l.shape().to_vec();
    let (b, h, w) = (s[0], s[2], s[3]);
    let ctx = conv(bind, "match.ctx", f_l, 1, 1).relu();
    let mut d = soft_argmin(&volume);
    let mut steps = Vec::with_capacity(m.k_iters);
    for _ in 0..m.k_iters {
        let corr = volume.vol_sample(&d, m.radius);
        let d_plane = d.reshape(&[b, 1, h, w]);
        let inp = concat_channels(&[&corr, &d_plane, &ctx]);
        let h1 = conv(bind, "match.r1", &inp, 1, 1).relu();
        let h2 = conv(bind, "match.r2", &h1, 1, 1).relu();
        // Weight-only output conv: the update cannot drift into a uniform
        // constant through a bias term, so the nonnegativity clamp below can
        // never swallow the whole map at once.
        let delta = conv_nb(bind, "match.r3", &h2, 1, 1);
        d = d_plane.add(&delta).relu().reshape(&[b, h, w]);
        let up = d
            .reshape(&[b, 1, h, w])
            .upsample2()
            .upsample2()
            .mul_scalar(4.0)
            .reshape(&[b, 4 * h, 4 * w]);
        steps.push(up);
    }
    Ok(DisparitySequence { steps })
}

/// Full forward pass: shared-weight feature extraction on both views, then
/// the matcher. Images must be [B,3,H,W] with H and W divisible by 16 so the
/// tap pyramid re-aligns exactly at 1/4 resolution.
pub fn forward_pair(
    bind: &ModelBinding,
    cfg: &ModelConfig,
    i_l: &Tensor,
    i_r: &Tensor,
    variant: Variant,
) -> Result<(Tensor, Tensor, DisparitySequence)> {
    assert!(
        i_l.ndim() == 4 && i_l.shape() == i_r.shape(),
        "forward_pair: view shapes {:?} vs {:?}",
        i_l.shape(),
        i_r.shape()
    );
    let (h, w) = (i_l.shape()[2], i_l.shape()[3]);
    if h % 16 != 0 || w % 16 != 0 {
        return Err(RoseError::invalid(format!(
            "forward_pair: image size {h}×{w} must be divisible by 16"
        )));
    }
    let f_l = extract_features(bind, cfg, i_l, variant)?;
    let f_r = extract_features(bind, cfg, i_r, variant)?;
    let seq = matcher_forward(bind, cfg, &f_l, &f_r)?;
    Ok((f_l, f_r, seq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array;
    use crate::autodiff::{check_gradient, Graph, COST_VOLUME_SENTINEL};
    use crate::rng::Rng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            extractor: ExtractorConfig {
                base_channels: 4,
                feature_channels: 6,
                afem_enabled: true,
                prior_tap_depths: [2, 3, 4],
            },
            matcher: MatcherConfig { d_max_quarter: 3, k_iters: 2, hidden: 5, radius: 1 },
        }
    }

    fn random_image(seed: u64, shape: &[usize]) -> Array {
        let mut r = Rng::new(seed);
        Array::from_fn(shape, |_| r.uniform(0.0, 1.0))
    }

    /// Replaces every zero-initialized parameter group with small random
    /// values so gradients reach all depths.
    fn randomize_zero_groups(store: &mut WeightStore, seed: u64) {
        let mut r = Rng::derive(seed, 77);
        for name in store.names() {
            let shape = store.value(&name).shape().to_vec();
            if store.value(&name).data().iter().all(|&v| v == 0.0) {
                store.set_value(&name, Array::from_fn(&shape, |_| r.normal_scaled(0.0, 0.1)));
            }
        }
    }

    #[test]
    fn extractor_emits_quarter_resolution_features() {
        let cfg = ModelConfig::default();
        let store = init_weights(&cfg, 0);
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let x = g.constant(random_image(1, &[1, 3, 64, 128]));
        let f = extract_features(&bind, &cfg, &x, Variant::Clear).unwrap();
        assert_eq!(f.shape(), [1, 32, 16, 32]);
    }

    #[test]
    fn adverse_forward_equals_clear_forward_at_init() {
        // afem.fuse and afem.amp2 start at zero, so the enhancement block is
        // an exact residual identity and both variants compute the same
        // function with the same store.
        let cfg = tiny_cfg();
        let store = init_weights(&cfg, 3);
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let il = g.constant(random_image(10, &[2, 3, 32, 32]));
        let ir = g.constant(random_image(11, &[2, 3, 32, 32]));
        let (fl_a, fr_a, seq_a) = forward_pair(&bind, &cfg, &il, &ir, Variant::Adverse).unwrap();
        let (fl_c, fr_c, seq_c) = forward_pair(&bind, &cfg, &il, &ir, Variant::Clear).unwrap();
        assert_eq!(fl_a.value(), fl_c.value());
        assert_eq!(fr_a.value(), fr_c.value());
        for (a, c) in seq_a.steps.iter().zip(&seq_c.steps) {
            assert_eq!(a.value(), c.value());
        }
    }

    #[test]
    fn afem_rejects_batch_of_one() {
        let cfg = tiny_cfg();
        let store = init_weights(&cfg, 0);
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let f = g.constant(random_image(2, &[1, 4, 8, 8]));
        let err = afem_forward(&bind, &f).unwrap_err().to_string();
        assert!(err.contains("batch must be ≥ 2"), "{err}");
    }

    #[test]
    fn instance_norm_path_on_constant_channels_is_pure_bias() {
        // Zero-variance channels normalize to exactly zero, so the affine
        // leaves only beta.
        let g = Graph::new();
        let x = g.constant(Array::from_fn(&[2, 3, 4, 4], |i| (i / 16) as f64 + 0.5));
        let gamma = g.constant(Array::new(&[3], vec![2.0, -1.0, 3.0]));
        let beta = g.constant(Array::new(&[3], vec![0.75, -0.25, 1.5]));
        let y = x.instance_norm(NORM_EPS).channel_affine(&gamma, &beta).value();
        for b in 0..2 {
            for c in 0..3 {
                for i in 0..16 {
                    assert_eq!(y.data()[(b * 3 + c) * 16 + i], beta.value().data()[c]);
                }
            }
        }
    }

    #[test]
    fn fourier_suppress_is_identity_with_zero_amplitude_conv() {
        let cfg = tiny_cfg();
        let store = init_weights(&cfg, 5);
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let f = g.constant(random_image(6, &[2, 4, 6, 6]));
        let out = fourier_suppress(&bind, &f).value();
        for (a, b) in f.value().data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn fourier_suppress_preserves_phase() {
        let cfg = tiny_cfg();
        let mut store = init_weights(&cfg, 7);
        randomize_zero_groups(&mut store, 8);
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let f = g.constant(random_image(9, &[1, 4, 6, 6]));
        let x = f.dft2().value();
        let out = fourier_suppress(&bind, &f);
        let x2 = out.dft2().value();
        let c = 4;
        let plane = 36;
        for ci in 0..c {
            for i in 0..plane {
                let (re, im) = (x.data()[ci * plane + i], x.data()[(c + ci) * plane + i]);
                let (re2, im2) = (x2.data()[ci * plane + i], x2.data()[(c + ci) * plane + i]);
                let (n, n2) = (re.hypot(im), re2.hypot(im2));
                if n2 < 1e-3 {
                    continue; // amplitude (near-)zeroed: phase undefined
                }
                assert!((re / n - re2 / n2).abs() < 1e-6, "cos mismatch at {ci},{i}");
                assert!((im / n - im2 / n2).abs() < 1e-6, "sin mismatch at {ci},{i}");
            }
        }
    }

    #[test]
    fn fourier_suppress_energy_matches_amplitude_bookkeeping() {
        // Parseval for the unnormalized-forward / 1-over-HW-inverse pair:
        // spatial energy of the output equals (1/HW)·Σ |X·(A'/A)|².
        let cfg = tiny_cfg();
        let mut store = init_weights(&cfg, 12);
        randomize_zero_groups(&mut store, 13);
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let f = g.constant(random_image(14, &[1, 4, 6, 6]));

        let x = f.dft2();
        let a = x.complex_abs(FOURIER_EPS);
        let boost = conv(&bind, "afem.amp1", &a, 1, 0).relu();
        let a_new = a.add(&conv(&bind, "afem.amp2", &boost, 1, 0)).relu();
        let out = fourier_suppress(&bind, &f).value();

        let (xv, av, nv) = (x.value(), a.value(), a_new.value());
        let c = 4;
        let plane = 36;
        let mut freq_energy = 0.0;
        for ci in 0..c {
            for i in 0..plane {
                let (re, im) = (xv.data()[ci * plane + i], xv.data()[(c + ci) * plane + i]);
                let ratio = nv.data()[ci * plane + i] / av.data()[ci * plane + i];
                freq_energy += (re * re + im * im) * ratio * ratio;
            }
        }
        let spatial_energy: f64 = out.data().iter().map(|v| v * v).sum();
        let want = freq_energy / plane as f64;
        assert!(
            (spatial_energy - want).abs() < 1e-9 * want.max(1.0),
            "{spatial_energy} vs {want}"
        );
    }

    #[test]
    fn afem_block_passes_gradient_check() {
        let cfg = tiny_cfg();
        let mut store = init_weights(&cfg, 21);
        randomize_zero_groups(&mut store, 22);
        let x = random_image(23, &[2, 4, 6, 6]);
        let worst = check_gradient(
            |g, t| {
                let bind = ModelBinding::bind(&store, g);
                afem_forward(&bind, t).unwrap().sum()
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(worst < 1e-4, "afem gradient discrepancy {worst}");
    }

    #[test]
    fn cost_volume_rejects_wide_search_range() {
        let g = Graph::new();
        let f = g.constant(random_image(0, &[1, 4, 3, 5]));
        let err = cost_volume(&f, &f, 5).unwrap_err().to_string();
        assert!(err.contains("must be < feature width"), "{err}");
        assert!(cost_volume(&f, &f, 4).is_ok());
    }

    #[test]
    fn self_correlation_peaks_at_zero_disparity() {
        // Zero-mean features: cross-position dots concentrate near 0 while
        // the self-dot concentrates near C·Var, so d=0 wins decisively.
        for seed in [1, 2, 3] {
            let g = Graph::new();
            let mut r = Rng::new(seed);
            let f = g.constant(Array::from_fn(&[1, 32, 6, 10], |_| r.uniform(-1.0, 1.0)));
            let v = cost_volume(&f, &f, 4).unwrap().value();
            for y in 0..6 {
                for x in 0..10 {
                    let at = |d: usize| v.at4(0, d, y, x);
                    for d in 1..4usize.min(x + 1) {
                        assert!(
                            at(0) > at(d),
                            "seed {seed}: self-match not maximal at ({y},{x}), d={d}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn orthogonal_features_correlate_to_zero() {
        let g = Graph::new();
        let fl = g.constant(Array::from_fn(&[1, 2, 3, 4], |i| if i < 12 { 1.0 } else { 0.0 }));
        let fr = g.constant(Array::from_fn(&[1, 2, 3, 4], |i| if i < 12 { 0.0 } else { 1.0 }));
        let v = cost_volume(&fl, &fr, 3).unwrap().value();
        for d in 0..3 {
            for y in 0..3 {
                for x in 0..4 {
                    let want = if x < d { COST_VOLUME_SENTINEL } else { 0.0 };
                    assert_eq!(v.at4(0, d, y, x), want);
                }
            }
        }
    }

    #[test]
    fn soft_argmin_matches_peak_structure() {
        let g = Graph::new();
        // Uniform scores: expectation of 0..3.
        let uniform = g.constant(Array::full(&[1, 4, 2, 2], 0.3));
        let u = soft_argmin(&uniform).value();
        for &v in u.data() {
            assert!((v - 1.5).abs() < 1e-12);
        }
        // Strong peak at d=3.
        let peaked = g.constant(Array::from_fn(&[1, 4, 1, 1], |i| if i == 3 { 20.0 } else { 0.0 }));
        assert!((soft_argmin(&peaked).item() - 3.0).abs() < 1e-3);
        // Equal peaks at d=1 and d=3 in a symmetric 5-bin layout average to 2.
        let twin = g.constant(Array::from_fn(&[1, 5, 1, 1], |i| {
            if i == 1 || i == 3 {
                9.0
            } else {
                0.0
            }
        }));
        assert!((soft_argmin(&twin).item() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sequence_length_tracks_iteration_count() {
        let mut cfg = tiny_cfg();
        cfg.matcher.k_iters = 1;
        let store = init_weights(&cfg, 1);
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let il = g.constant(random_image(2, &[1, 3, 16, 32]));
        let ir = g.constant(random_image(3, &[1, 3, 16, 32]));
        let (_, _, seq) = forward_pair(&bind, &cfg, &il, &ir, Variant::Clear).unwrap();
        assert_eq!(seq.len(), 1);
    }

    #[test]
    fn zero_refinement_head_repeats_initial_estimate() {
        let cfg = tiny_cfg();
        let store = init_weights(&cfg, 4); // match.r3 is zero at init
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let fl = g.constant(random_image(5, &[1, 6, 8, 16]));
        let fr = g.constant(random_image(6, &[1, 6, 8, 16]));
        let seq = matcher_forward(&bind, &cfg, &fl, &fr).unwrap();
        let d0 = soft_argmin(&cost_volume(&fl, &fr, cfg.matcher.d_max_quarter).unwrap());
        let up0 = d0
            .reshape(&[1, 1, 8, 16])
            .upsample2()
            .upsample2()
            .mul_scalar(4.0)
            .reshape(&[1, 32, 64]);
        for step in &seq.steps {
            assert_eq!(step.value(), up0.value());
        }
    }

    #[test]
    fn matcher_passes_gradient_check_on_toy_features() {
        let mut cfg = tiny_cfg();
        cfg.extractor.feature_channels = 3;
        let mut store = init_weights(&cfg, 31);
        randomize_zero_groups(&mut store, 32);
        let fr_value = random_image(33, &[1, 3, 8, 16]);
        let fl_value = random_image(34, &[1, 3, 8, 16]);
        let worst = check_gradient(
            |g, t| {
                let bind = ModelBinding::bind(&store, g);
                let fr = g.constant(fr_value.clone());
                let seq = matcher_forward(&bind, &cfg, t, &fr).unwrap();
                seq.final_step().mean()
            },
            &fl_value,
            1e-5,
        )
        .unwrap();
        assert!(worst < 1e-4, "matcher gradient discrepancy {worst}");
    }

    #[test]
    fn forward_pair_rejects_unaligned_sizes() {
        let cfg = tiny_cfg();
        let store = init_weights(&cfg, 0);
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let il = g.constant(random_image(1, &[1, 3, 24, 32]));
        let ir = g.constant(random_image(2, &[1, 3, 24, 32]));
        let err = forward_pair(&bind, &cfg, &il, &ir, Variant::Clear).unwrap_err().to_string();
        assert!(err.contains("divisible by 16"), "{err}");
    }

    #[test]
    fn swapped_views_of_flat_scene_agree() {
        // A zero-disparity pair has identical views, so the swapped forward
        // is the same computation; end-point error stays well under 0.1 px.
        let cfg = tiny_cfg();
        let store = init_weights(&cfg, 9);
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let view = g.constant(random_image(10, &[1, 3, 16, 32]));
        let (_, _, fwd) = forward_pair(&bind, &cfg, &view, &view, Variant::Clear).unwrap();
        let (_, _, rev) = forward_pair(&bind, &cfg, &view, &view, Variant::Clear).unwrap();
        let (a, b) = (fwd.final_step().value(), rev.final_step().value());
        let epe: f64 =
            a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        assert!(epe < 0.1, "swap EPE {epe}");
    }

    #[test]
    fn clear_variant_ignores_enhancement_weights() {
        let cfg = tiny_cfg();
        let mut store = init_weights(&cfg, 40);
        let g = Graph::new();
        let il = g.constant(random_image(41, &[1, 3, 16, 16]));
        let ir = g.constant(random_image(42, &[1, 3, 16, 16]));
        let bind = ModelBinding::bind(&store, &g);
        let (_, _, before) = forward_pair(&bind, &cfg, &il, &ir, Variant::Clear).unwrap();

        let mut scrambler = Rng::new(99);
        for name in store.names() {
            if name.starts_with("afem.") {
                let shape = store.value(&name).shape().to_vec();
                store.set_value(&name, Array::from_fn(&shape, |_| scrambler.uniform(-5.0, 5.0)));
            }
        }
        let bind2 = ModelBinding::bind(&store, &g);
        let (_, _, after) = forward_pair(&bind2, &cfg, &il, &ir, Variant::Clear).unwrap();
        assert_eq!(before.final_step().value(), after.final_step().value());
    }

    #[test]
    fn forward_is_deterministic_across_graphs() {
        let cfg = tiny_cfg();
        let store = init_weights(&cfg, 50);
        let image_l = random_image(51, &[2, 3, 16, 32]);
        let image_r = random_image(52, &[2, 3, 16, 32]);
        let run = || {
            let g = Graph::new();
            let bind = ModelBinding::bind(&store, &g);
            let il = g.constant(image_l.clone());
            let ir = g.constant(image_r.clone());
            let (fl, _, seq) = forward_pair(&bind, &cfg, &il, &ir, Variant::Adverse).unwrap();
            (fl.value(), seq.final_step().value())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn init_gradient_flow_matches_zero_init_analysis() {
        // Phase 1: at initialization the only parameters without gradient
        // are those sitting behind a zero-initialized conv — everything in
        // afem.* except the fusion conv itself (blocked by fuse ≡ 0 and by
        // the zero spectrum it feeds forward), and the matcher context/hidden
        // convs (blocked by the zero last conv). Phase 2: once the zero
        // groups are randomized, every parameter receives gradient.
        let cfg = tiny_cfg();
        let store = init_weights(&cfg, 60);
        let grads = |store: &WeightStore| {
            let g = Graph::new();
            let bind = ModelBinding::bind(store, &g);
            let il = g.constant(random_image(61, &[2, 3, 16, 32]));
            let ir = g.constant(random_image(62, &[2, 3, 16, 32]));
            let (_, _, seq) = forward_pair(&bind, &cfg, &il, &ir, Variant::Adverse).unwrap();
            let mut loss = seq.steps[0].mean();
            for s in &seq.steps[1..] {
                loss = loss.add(&s.mean());
            }
            loss.backward();
            let mut dead = Vec::new();
            for (name, t) in bind.iter() {
                let zero = match t.grad() {
                    Some(gr) => gr.data().iter().all(|&v| v == 0.0),
                    None => true,
                };
                if zero {
                    dead.push(name.clone());
                }
            }
            dead
        };

        let allowed = |n: &str| {
            (n.starts_with("afem.") && !n.starts_with("afem.fuse."))
                || n.starts_with("match.ctx.")
                || n.starts_with("match.r1.")
                || n.starts_with("match.r2.")
        };
        for name in grads(&store) {
            assert!(allowed(&name), "unexpected dead parameter at init: {name}");
        }

        let mut woken = store.clone();
        randomize_zero_groups(&mut woken, 63);
        let dead = grads(&woken);
        assert!(dead.is_empty(), "dead parameters after wake-up: {dead:?}");
    }
}
