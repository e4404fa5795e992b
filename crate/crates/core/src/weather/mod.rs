//! Procedural stereo scenes with exact ground truth, plus analytic weather
//! degradations that leave geometry untouched bitwise.
//!
//! Scenes are stacks of fronto-parallel textured rectangles over a textured
//! background plane. Textures are band-limited sinusoid fields evaluated
//! analytically at any real coordinate, so both views sample the *same*
//! continuous signal; with integer disparities the left view reconstructs
//! from the right exactly on non-occluded pixels.

pub mod formats;

use std::f64::consts::TAU;

use crate::array::Array;
use crate::error::{Result, RoseError};
use crate::rng::Rng;

// Stream salts: every consumer of a sample seed derives its own stream so
// adding draws to one stage never shifts another.
const SALT_LAYOUT: u64 = 1;
const SALT_TEXTURE: u64 = 2;
const SALT_NIGHT_LEFT: u64 = 3;
const SALT_NIGHT_RIGHT: u64 = 4;
const SALT_RAIN_LEFT: u64 = 5;
const SALT_RAIN_RIGHT: u64 = 6;
const SALT_AUGMENT: u64 = 7;

/// Depth floor (px of disparity) in the fog model: near-zero disparity is
/// "sky" and fogs toward pure airlight instead of dividing by zero.
pub const FOG_DISPARITY_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Clear,
    Fog,
    Rain,
    Night,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Clear,
        Condition::Fog,
        Condition::Rain,
        Condition::Night,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Clear => "clear",
            Condition::Fog => "fog",
            Condition::Rain => "rain",
            Condition::Night => "night",
        }
    }

    pub fn parse(s: &str) -> Result<Condition> {
        match s {
            "clear" => Ok(Condition::Clear),
            "fog" => Ok(Condition::Fog),
            "rain" => Ok(Condition::Rain),
            "night" => Ok(Condition::Night),
            other => Err(RoseError::invalid(format!("unknown condition {other:?}"))),
        }
    }
}

/// A rectified stereo pair with exact ground truth.
///
/// Images are [3,H,W] in [0,1]; disparities are [H,W] in pixels; occlusion
/// masks are [H,W] with 1 where the pixel's correspondence is NOT visible in
/// the other view (hidden behind a nearer layer, or out of frame).
#[derive(Debug, Clone, PartialEq)]
pub struct StereoSample {
    pub i_l: Array,
    pub i_r: Array,
    pub d_gt_l: Array,
    pub d_gt_r: Array,
    pub occ_l: Array,
    pub occ_r: Array,
    pub condition: Condition,
    pub seed: u64,
}

impl StereoSample {
    pub fn height(&self) -> usize {
        self.d_gt_l.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.d_gt_l.shape()[1]
    }

    /// True when degradations have not altered geometry: shared shape and
    /// bitwise-equal GT/occlusion fields.
    pub fn same_geometry(&self, other: &StereoSample) -> bool {
        self.d_gt_l == other.d_gt_l
            && self.d_gt_r == other.d_gt_r
            && self.occ_l == other.occ_l
            && self.occ_r == other.occ_r
    }
}

#[derive(Debug, Clone)]
pub struct TextureConfig {
    /// Sinusoid components per texture.
    pub n_waves: usize,
    /// Spatial frequency bounds in cycles per pixel; keep max well under 0.5
    /// so the signal varies smoothly at pixel scale.
    pub min_freq: f64,
    pub max_freq: f64,
    /// Fraction of the headroom around the base color used by the waves.
    pub contrast: f64,
}

impl Default for TextureConfig {
    fn default() -> Self {
        TextureConfig {
            n_waves: 6,
            min_freq: 0.03,
            max_freq: 0.18,
            contrast: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub h: usize,
    pub w: usize,
    /// Exclusive upper bound on every disparity in the scene.
    pub d_max: f64,
    /// Number of foreground layers drawn over the background.
    pub n_layers: usize,
    /// Force integer layer disparities (exact bilinear reconstruction).
    pub integer_disparity: bool,
    pub texture: TextureConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            h: 64,
            w: 128,
            d_max: 16.0,
            n_layers: 4,
            integer_disparity: true,
            texture: TextureConfig::default(),
        }
    }
}

/// A fronto-parallel rectangle at constant disparity, in left-view pixel
/// coordinates with half-open extents.
#[derive(Debug, Clone)]
pub struct Layer {
    pub y0: usize,
    pub x0: usize,
    pub h: usize,
    pub w: usize,
    pub disparity: f64,
}

impl Layer {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64
            && x < (self.x0 + self.w) as f64
            && y >= self.y0 as f64
            && y < (self.y0 + self.h) as f64
    }
}

#[derive(Debug, Clone)]
struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

#[derive(Debug, Clone)]
struct Texture {
    base: [f64; 3],
    waves: Vec<Wave>,
}

impl Texture {
    fn random(rng: &mut Rng, cfg: &TextureConfig) -> Texture {
        let mut base = [0.0; 3];
        for b in &mut base {
            *b = rng.uniform(0.35, 0.65);
        }
        let mut raw: Vec<(f64, f64, f64, [f64; 3])> = Vec::with_capacity(cfg.n_waves);
        let mut raw_sum = [0.0; 3];
        for _ in 0..cfg.n_waves {
            let f = rng.uniform(cfg.min_freq, cfg.max_freq);
            let dir = rng.uniform(0.0, TAU);
            let phase = rng.uniform(0.0, TAU);
            let mut amp = [0.0; 3];
            for (c, a) in amp.iter_mut().enumerate() {
                *a = rng.uniform(0.2, 1.0);
                raw_sum[c] += *a;
            }
            raw.push((f * dir.cos(), f * dir.sin(), phase, amp));
        }
        // Scale per channel so base ± Σ|amp| stays strictly inside [0,1].
        let mut scale = [0.0; 3];
        for c in 0..3 {
            let headroom = base[c].min(1.0 - base[c]) - 0.02;
            scale[c] = cfg.contrast * headroom / raw_sum[c];
        }
        let waves = raw
            .into_iter()
            .map(|(fx, fy, phase, amp)| Wave {
                fx,
                fy,
                phase,
                amp: [amp[0] * scale[0], amp[1] * scale[1], amp[2] * scale[2]],
            })
            .collect();
        Texture { base, waves }
    }

    /// Evaluates all three channels at a real-valued coordinate.
    fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        let mut out = self.base;
        for w in &self.waves {
            let s = (TAU * (w.fx * x + w.fy * y) + w.phase).sin();
            for c in 0..3 {
                out[c] += w.amp[c] * s;
            }
        }
        out
    }
}

/// Resolved scene geometry: background plane plus foreground layers, each
/// with its own texture.
struct SceneModel {
    bg: Texture,
    bg_d: f64,
    layers: Vec<(Layer, Texture)>,
}

impl SceneModel {
    /// Index of the visible surface at a real left-view coordinate:
    /// 0 = background, i+1 = layer i. Ties in disparity go to the later
    /// layer, consistently in both views.
    fn top_left(&self, x: f64, y: f64) -> usize {
        let mut best = 0usize;
        let mut best_d = self.bg_d;
        for (i, (layer, _)) in self.layers.iter().enumerate() {
            if layer.disparity >= best_d && layer.contains(x, y) {
                best = i + 1;
                best_d = layer.disparity;
            }
        }
        best
    }

    /// Index of the visible surface along the right-view ray at real
    /// coordinate xr: each candidate surface meets the ray at left-view
    /// coordinate xr + d, and the nearest (largest disparity) covering
    /// surface wins.
    fn top_right(&self, xr: f64, y: f64) -> usize {
        let mut best = 0usize;
        let mut best_d = self.bg_d;
        for (i, (layer, _)) in self.layers.iter().enumerate() {
            if layer.disparity >= best_d && layer.contains(xr + layer.disparity, y) {
                best = i + 1;
                best_d = layer.disparity;
            }
        }
        best
    }

    fn disparity(&self, idx: usize) -> f64 {
        if idx == 0 {
            self.bg_d
        } else {
            self.layers[idx - 1].0.disparity
        }
    }

    fn texture(&self, idx: usize) -> &Texture {
        if idx == 0 {
            &self.bg
        } else {
            &self.layers[idx - 1].1
        }
    }
}

/// Renders a stereo sample from explicit geometry. Layer disparities must be
/// pairwise distinct (z-order would otherwise be ambiguous), at least the
/// background disparity, and inside [0, d_max).
pub fn render_scene(
    cfg: &SceneConfig,
    seed: u64,
    background_disparity: f64,
    layers: &[Layer],
) -> Result<StereoSample> {
    let (h, w) = (cfg.h, cfg.w);
    if h == 0 || w == 0 {
        return Err(RoseError::config("scene dimensions must be positive"));
    }
    if cfg.d_max >= w as f64 / 4.0 {
        return Err(RoseError::config(format!(
            "d_max {} must be below W/4 = {}",
            cfg.d_max,
            w as f64 / 4.0
        )));
    }
    if background_disparity < 0.0 || background_disparity >= cfg.d_max {
        return Err(RoseError::config("background disparity outside [0, d_max)"));
    }
    for (i, l) in layers.iter().enumerate() {
        if l.disparity < background_disparity || l.disparity >= cfg.d_max {
            return Err(RoseError::invalid(format!(
                "layer {i} disparity {} outside [background, d_max)",
                l.disparity
            )));
        }
        if l.x0 + l.w > w || l.y0 + l.h > h || l.w == 0 || l.h == 0 {
            return Err(RoseError::invalid(format!("layer {i} rectangle outside frame")));
        }
        for (j, m) in layers.iter().enumerate().skip(i + 1) {
            if l.disparity == m.disparity {
                return Err(RoseError::invalid(format!(
                    "layers {i} and {j} share disparity {}: z-order ambiguous",
                    l.disparity
                )));
            }
        }
    }

    let mut tex_rng = Rng::derive(seed, SALT_TEXTURE);
    let bg = Texture::random(&mut tex_rng, &cfg.texture);
    let layers: Vec<(Layer, Texture)> = layers
        .iter()
        .map(|l| (l.clone(), Texture::random(&mut tex_rng, &cfg.texture)))
        .collect();
    let model = SceneModel { bg, bg_d: background_disparity, layers };

    let mut i_l = Array::zeros(&[3, h, w]);
    let mut i_r = Array::zeros(&[3, h, w]);
    let mut d_gt_l = Array::zeros(&[h, w]);
    let mut d_gt_r = Array::zeros(&[h, w]);
    let mut occ_l = Array::zeros(&[h, w]);
    let mut occ_r = Array::zeros(&[h, w]);
    let plane = h * w;
    for y in 0..h {
        let yf = y as f64;
        for x in 0..w {
            let xf = x as f64;
            let p = y * w + x;

            let il = model.top_left(xf, yf);
            let dl = model.disparity(il);
            let rgb = model.texture(il).eval(xf, yf);
            for c in 0..3 {
                i_l.data_mut()[c * plane + p] = rgb[c];
            }
            d_gt_l.data_mut()[p] = dl;
            // The left pixel matches right-view coordinate x − d; it is
            // unobserved there if out of frame or behind a nearer surface.
            let xs = xf - dl;
            if xs < 0.0 || model.top_right(xs, yf) != il {
                occ_l.data_mut()[p] = 1.0;
            }

            let ir = model.top_right(xf, yf);
            let dr = model.disparity(ir);
            // Same continuous texture signal, evaluated where the ray meets
            // the surface in left-view coordinates.
            let rgb = model.texture(ir).eval(xf + dr, yf);
            for c in 0..3 {
                i_r.data_mut()[c * plane + p] = rgb[c];
            }
            d_gt_r.data_mut()[p] = dr;
            let xl = xf + dr;
            if xl > (w - 1) as f64 || model.top_left(xl, yf) != ir {
                occ_r.data_mut()[p] = 1.0;
            }
        }
    }

    Ok(StereoSample {
        i_l,
        i_r,
        d_gt_l,
        d_gt_r,
        occ_l,
        occ_r,
        condition: Condition::Clear,
        seed,
    })
}

/// Generates a clear scene with random layout: a background plane at small
/// disparity and `n_layers` rectangles at distinct nearer disparities.
pub fn generate_scene(seed: u64, cfg: &SceneConfig) -> Result<StereoSample> {
    if cfg.n_layers == 0 {
        return Err(RoseError::config("n_layers must be at least 1"));
    }
    let mut rng = Rng::derive(seed, SALT_LAYOUT);
    let (h, w) = (cfg.h, cfg.w);

    // Background stays at low but positive disparity so relative metrics
    // (D1) are well defined everywhere.
    let bg_d = if cfg.integer_disparity { 1.0 } else { rng.uniform(1.0, 2.0) };

    const ATTEMPTS: usize = 32;
    let mut disparities: Option<Vec<f64>> = None;
    for _ in 0..ATTEMPTS {
        let mut ds: Vec<f64> = (0..cfg.n_layers)
            .map(|_| {
                if cfg.integer_disparity {
                    let lo = bg_d as usize + 1;
                    let hi = cfg.d_max.ceil() as usize - 1;
                    (lo + rng.below(hi - lo + 1)) as f64
                } else {
                    rng.uniform(bg_d + 0.5, cfg.d_max - 0.5)
                }
            })
            .collect();
        ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Keep layers at least half a pixel apart so z-order and the
        // left-right check are unambiguous.
        let min_gap = if cfg.integer_disparity { 1.0 } else { 0.5 };
        if ds.windows(2).all(|p| p[1] - p[0] >= min_gap) {
            disparities = Some(ds);
            break;
        }
    }
    let disparities = disparities.ok_or_else(|| {
        RoseError::invalid("could not assign distinct layer disparities within retry budget")
    })?;

    let layers: Vec<Layer> = disparities
        .into_iter()
        .map(|d| {
            let lw = (w / 6 + rng.below(w / 3)).max(4);
            let lh = (h / 6 + rng.below(h / 3)).max(4);
            let x0 = rng.below(w - lw + 1);
            let y0 = rng.below(h - lh + 1);
            Layer { y0, x0, h: lh, w: lw, disparity: d }
        })
        .collect();

    render_scene(cfg, seed, bg_d, &layers)
}

/// One analytic degradation with everything needed to reproduce it.
#[derive(Debug, Clone)]
pub enum DegradationSpec {
    /// Scattering model: I' = I·e^{−β_s z} + A·(1 − e^{−β_s z}) with depth
    /// z = fB / max(D_gt, floor), using each view's own ground truth.
    Fog { beta_s: f64, airlight: f64, focal_baseline: f64, seed: u64 },
    /// I' = clamp(gain · I^gamma + N(0, sigma²), 0, 1) with independent
    /// per-view noise streams.
    Night { gamma: f64, gain: f64, noise_sigma: f64, seed: u64 },
    /// Bright streaks alpha-composited independently per view, then box
    /// blurred. Deliberately breaks photometric consistency across views.
    Rain {
        count: usize,
        length: f64,
        angle: f64,
        brightness: f64,
        blur_radius: usize,
        seed: u64,
    },
}

impl DegradationSpec {
    pub fn condition(&self) -> Condition {
        match self {
            DegradationSpec::Fog { .. } => Condition::Fog,
            DegradationSpec::Night { .. } => Condition::Night,
            DegradationSpec::Rain { .. } => Condition::Rain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DegradationSpec::Fog { beta_s, airlight, focal_baseline, .. } => {
                if beta_s < 0.0 {
                    return Err(RoseError::config("fog beta_s must be >= 0"));
                }
                if !(0.0..=1.0).contains(&airlight) {
                    return Err(RoseError::config("fog airlight must be in [0,1]"));
                }
                if focal_baseline <= 0.0 {
                    return Err(RoseError::config("fog focal·baseline must be > 0"));
                }
            }
            DegradationSpec::Night { gamma, gain, noise_sigma, .. } => {
                if gamma < 1.0 {
                    return Err(RoseError::config("night gamma must be >= 1"));
                }
                if !(gain > 0.0 && gain <= 1.0) {
                    return Err(RoseError::config("night gain must be in (0,1]"));
                }
                if noise_sigma < 0.0 {
                    return Err(RoseError::config("night noise_sigma must be >= 0"));
                }
            }
            DegradationSpec::Rain { length, brightness, .. } => {
                if length < 0.0 {
                    return Err(RoseError::config("rain streak length must be >= 0"));
                }
                if !(0.0..=1.0).contains(&brightness) {
                    return Err(RoseError::config("rain brightness must be in [0,1]"));
                }
            }
        }
        Ok(())
    }
}

/// Applies any degradation; geometry fields are copied bitwise.
pub fn apply_degradation(s: &StereoSample, spec: &DegradationSpec) -> StereoSample {
    assert!(spec.validate().is_ok(), "invalid degradation spec: {spec:?}");
    match spec {
        DegradationSpec::Fog { .. } => apply_fog(s, spec),
        DegradationSpec::Night { .. } => apply_night(s, spec),
        DegradationSpec::Rain { .. } => apply_rain(s, spec),
    }
}

pub fn apply_fog(s: &StereoSample, spec: &DegradationSpec) -> StereoSample {
    let DegradationSpec::Fog { beta_s, airlight, focal_baseline, .. } = *spec else {
        panic!("apply_fog: expected fog spec, got {spec:?}");
    };
    let fog_view = |img: &Array, d: &Array| -> Array {
        let plane = d.len();
        Array::from_fn(img.shape(), |i| {
            let z = focal_baseline / d.data()[i % plane].max(FOG_DISPARITY_FLOOR);
            let t = (-beta_s * z).exp();
            img.data()[i] * t + airlight * (1.0 - t)
        })
    };
    StereoSample {
        i_l: fog_view(&s.i_l, &s.d_gt_l),
        i_r: fog_view(&s.i_r, &s.d_gt_r),
        condition: Condition::Fog,
        ..s.clone()
    }
}

pub fn apply_night(s: &StereoSample, spec: &DegradationSpec) -> StereoSample {
    let DegradationSpec::Night { gamma, gain, noise_sigma, seed } = *spec else {
        panic!("apply_night: expected night spec, got {spec:?}");
    };
    let night_view = |img: &Array, salt: u64| -> Array {
        let mut rng = Rng::derive(seed, salt);
        Array::from_fn(img.shape(), |i| {
            let v = gain * img.data()[i].powf(gamma) + rng.normal_scaled(0.0, noise_sigma);
            v.clamp(0.0, 1.0)
        })
    };
    StereoSample {
        i_l: night_view(&s.i_l, SALT_NIGHT_LEFT),
        i_r: night_view(&s.i_r, SALT_NIGHT_RIGHT),
        condition: Condition::Night,
        ..s.clone()
    }
}

/// Blend factor used where a streak covers a pixel.
const RAIN_ALPHA: f64 = 0.6;

pub fn apply_rain(s: &StereoSample, spec: &DegradationSpec) -> StereoSample {
    let DegradationSpec::Rain { count, length, angle, brightness, blur_radius, seed } = *spec
    else {
        panic!("apply_rain: expected rain spec, got {spec:?}");
    };
    let (h, w) = (s.height(), s.width());
    let rain_view = |img: &Array, salt: u64| -> Array {
        let mut rng = Rng::derive(seed, salt);
        let mut covered = vec![false; h * w];
        for _ in 0..count {
            let cx = rng.below(w) as f64;
            let cy = rng.below(h) as f64;
            let ang = angle + rng.uniform(-0.15, 0.15);
            let len = length * rng.uniform(0.75, 1.25);
            // Angle measured from vertical: rain falls mostly downward.
            let (dx, dy) = (ang.sin(), ang.cos());
            let steps = (len * 2.0).ceil().max(0.0) as i64;
            for k in 0..=steps {
                let t = -len / 2.0 + 0.5 * k as f64;
                let px = (cx + t * dx).round();
                let py = (cy + t * dy).round();
                if px >= 0.0 && px < w as f64 && py >= 0.0 && py < h as f64 {
                    covered[py as usize * w + px as usize] = true;
                }
            }
        }
        let plane = h * w;
        let streaked = Array::from_fn(img.shape(), |i| {
            let v = img.data()[i];
            if covered[i % plane] {
                v + RAIN_ALPHA * (brightness - v)
            } else {
                v
            }
        });
        box_blur(&streaked, blur_radius)
    };
    StereoSample {
        i_l: rain_view(&s.i_l, SALT_RAIN_LEFT),
        i_r: rain_view(&s.i_r, SALT_RAIN_RIGHT),
        condition: Condition::Rain,
        ..s.clone()
    }
}

/// Separable (2r+1)² mean filter with replicate padding over the last two
/// axes of any array of rank ≥ 2.
fn box_blur(img: &Array, radius: usize) -> Array {
    if radius == 0 {
        return img.clone();
    }
    let shape = img.shape();
    let nd = shape.len();
    let (h, w) = (shape[nd - 2], shape[nd - 1]);
    let planes = img.len() / (h * w);
    let r = radius as i64;
    let norm = 1.0 / (2 * radius + 1) as f64;
    let mut tmp = vec![0.0; img.len()];
    for p in 0..planes {
        let src = &img.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut tmp[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for k in -r..=r {
                    let xx = (x as i64 + k).clamp(0, w as i64 - 1) as usize;
                    acc += src[y * w + xx];
                }
                dst[y * w + x] = acc * norm;
            }
        }
    }
    let mut out = vec![0.0; img.len()];
    for p in 0..planes {
        let src = &tmp[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for k in -r..=r {
                    let yy = (y as i64 + k).clamp(0, h as i64 - 1) as usize;
                    acc += src[yy * w + x];
                }
                dst[y * w + x] = acc * norm;
            }
        }
    }
    Array::new(shape, out)
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub max_patches: usize,
    /// Upper bound on the fraction of the image patches may cover.
    pub max_frac: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { max_patches: 4, max_frac: 0.2 }
    }
}

/// One pasted patch, for tests and debugging.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchRecord {
    pub right_view: bool,
    pub y0: usize,
    pub x0: usize,
    pub h: usize,
    pub w: usize,
}

/// Pastes rectangular mean-color patches onto ONE randomly chosen view,
/// simulating photometric-consistency failures. Geometry is untouched; the
/// other view is returned bitwise identical.
pub fn asymmetric_augment(
    s: &StereoSample,
    seed: u64,
    cfg: &AugmentConfig,
) -> (StereoSample, Vec<PatchRecord>) {
    assert!(cfg.max_frac <= 0.3, "asymmetric_augment: max_frac {} > 0.3", cfg.max_frac);
    let mut out = s.clone();
    let mut records = Vec::new();
    if cfg.max_patches == 0 {
        return (out, records);
    }
    let (h, w) = (s.height(), s.width());
    let mut rng = Rng::derive(seed, SALT_AUGMENT);
    let right_view = rng.next_u64() & 1 == 1;
    let n = 1 + rng.below(cfg.max_patches);
    let mut budget = cfg.max_frac * (h * w) as f64;
    let img = if right_view { &mut out.i_r } else { &mut out.i_l };
    let plane = h * w;
    for _ in 0..n {
        let ph = (2 + rng.below((h / 4).max(1))).min(h);
        let pw = (2 + rng.below((w / 4).max(1))).min(w);
        if (ph * pw) as f64 > budget {
            continue;
        }
        budget -= (ph * pw) as f64;
        let y0 = rng.below(h - ph + 1);
        let x0 = rng.below(w - pw + 1);
        for c in 0..3 {
            let mut mean = 0.0;
            for y in y0..y0 + ph {
                for x in x0..x0 + pw {
                    mean += img.data()[c * plane + y * w + x];
                }
            }
            mean /= (ph * pw) as f64;
            for y in y0..y0 + ph {
                for x in x0..x0 + pw {
                    img.data_mut()[c * plane + y * w + x] = mean;
                }
            }
        }
        records.push(PatchRecord { right_view, y0, x0, h: ph, w: pw });
    }
    (out, records)
}
