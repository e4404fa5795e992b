//! Named parameter storage, initialization, and the checkpoint format.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::array::Array;
use crate::autodiff::{Graph, Tensor};
use crate::error::{Result, RoseError};
use crate::model::ModelConfig;
use crate::rng::Rng;

const CHECKPOINT_MAGIC: &[u8; 8] = b"ROSEW001";

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array,
    pub frozen: bool,
}

/// All model parameters, keyed by stable dotted names. Iteration order is
/// the sorted name order everywhere (saving, binding, optimizer steps), so
/// every consumer sees the same deterministic sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    params: BTreeMap<String, Param>,
}

impl WeightStore {
    pub fn new() -> WeightStore {
        WeightStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Array) {
        self.params.insert(name.to_string(), Param { value, frozen: false });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn value(&self, name: &str) -> &Array {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name:?}"))
            .value
    }

    pub fn set_value(&mut self, name: &str, value: Array) {
        let p = self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name:?}"));
        assert_eq!(p.value.shape(), value.shape(), "shape change for {name:?}");
        p.value = value;
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn freeze(&mut self, name: &str) {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name:?}"))
            .frozen = true;
    }

    pub fn freeze_prefix(&mut self, prefix: &str) {
        for (name, p) in self.params.iter_mut() {
            if name.starts_with(prefix) {
                p.frozen = true;
            }
        }
    }

    pub fn freeze_all(&mut self) {
        for p in self.params.values_mut() {
            p.frozen = true;
        }
    }

    pub fn all_frozen(&self) -> bool {
        self.params.values().all(|p| p.frozen)
    }

    /// Serializes as: magic, entry count, then per entry name length, UTF-8
    /// name, frozen byte, rank, dims, f32 data — all integers 64-bit
    /// little-endian.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for (name, p) in &self.params {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(u8::from(p.frozen));
            out.extend_from_slice(&(p.value.ndim() as u64).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in p.value.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<WeightStore> {
        let bytes = fs::read(path)?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(*pos..*pos + n)
                .ok_or_else(|| RoseError::format("truncated checkpoint"))?;
            *pos += n;
            Ok(s)
        };
        let read_u64 = |pos: &mut usize| -> Result<u64> {
            let s = take(pos, 8)?;
            Ok(u64::from_le_bytes(s.try_into().unwrap()))
        };
        if take(&mut pos, 8)? != CHECKPOINT_MAGIC {
            return Err(RoseError::format("bad checkpoint magic"));
        }
        let count = read_u64(&mut pos)?;
        let mut store = WeightStore::new();
        for _ in 0..count {
            let name_len = read_u64(&mut pos)? as usize;
            let name = std::str::from_utf8(take(&mut pos, name_len)?)
                .map_err(|_| RoseError::format("non-UTF-8 parameter name"))?
                .to_string();
            let frozen = take(&mut pos, 1)?[0] != 0;
            let rank = read_u64(&mut pos)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut pos)? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = take(&mut pos, 4 * n)?;
            let data: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            store.params.insert(name, Param { value: Array::new(&shape, data), frozen });
        }
        if pos != bytes.len() {
            return Err(RoseError::format("trailing bytes after checkpoint entries"));
        }
        Ok(store)
    }
}

/// Parameters bound to one graph as leaves; frozen parameters become
/// constant leaves and never receive gradients.
pub struct ModelBinding {
    tensors: BTreeMap<String, Tensor>,
}

impl ModelBinding {
    pub fn bind(store: &WeightStore, g: &Graph) -> ModelBinding {
        let tensors = store
            .iter()
            .map(|(name, p)| (name.clone(), g.leaf(p.value.clone(), !p.frozen)))
            .collect();
        ModelBinding { tensors }
    }

    pub fn get(&self, name: &str) -> Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing bound parameter {name:?}"))
            .clone()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    /// Replaces one bound tensor (used by gradient checks to vary a single
    /// parameter while the rest stay constant).
    pub fn override_tensor(&mut self, name: &str, t: Tensor) {
        assert!(self.tensors.contains_key(name), "missing bound parameter {name:?}");
        self.tensors.insert(name.to_string(), t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }
}

fn he_conv(rng: &mut Rng, co: usize, ci: usize, kh: usize, kw: usize) -> Array {
    let std = (2.0 / (ci * kh * kw) as f64).sqrt();
    Array::from_fn(&[co, ci, kh, kw], |_| rng.normal_scaled(0.0, std))
}

fn he_fc(rng: &mut Rng, rows: usize, cols: usize) -> Array {
    let std = (2.0 / rows as f64).sqrt();
    Array::from_fn(&[rows, cols], |_| rng.normal_scaled(0.0, std))
}

fn add_conv(store: &mut WeightStore, rng: &mut Rng, name: &str, co: usize, ci: usize, k: usize) {
    store.insert(&format!("{name}.w"), he_conv(rng, co, ci, k, k));
    store.insert(&format!("{name}.b"), Array::zeros(&[co]));
}

/// Weight-only conv for layers followed by instance normalization, which
/// would cancel a bias anyway (a biased conv there would keep a parameter
/// with an identically zero gradient).
fn add_conv_nb(store: &mut WeightStore, rng: &mut Rng, name: &str, co: usize, ci: usize, k: usize) {
    store.insert(&format!("{name}.w"), he_conv(rng, co, ci, k, k));
}

fn add_zero_conv(store: &mut WeightStore, name: &str, co: usize, ci: usize, k: usize) {
    store.insert(&format!("{name}.w"), Array::zeros(&[co, ci, k, k]));
    store.insert(&format!("{name}.b"), Array::zeros(&[co]));
}

/// Zero-initialized, weight-only conv. Used for the refinement head's output
/// so the disparity update is always a function of its per-pixel inputs: with
/// no bias term there is no single parameter whose drift can push the update
/// uniformly negative and park every pixel in the relu-clamped zero state.
fn add_zero_conv_nb(store: &mut WeightStore, name: &str, co: usize, ci: usize, k: usize) {
    store.insert(&format!("{name}.w"), Array::zeros(&[co, ci, k, k]));
}

/// Encoder stage output channels for the four stride-2 convs.
pub(crate) fn stage_channels(base: usize) -> [usize; 4] {
    [base, base, 2 * base, 4 * base]
}

/// Creates all trainable parameters for one variant. The prior branch is
/// not created here: it is installed from a pretrained encoder by
/// `install_prior_from_encoder`. Zero-initialized groups (`afem.fuse`,
/// `afem.amp2`, `match.r3`) make AFEM and the refinement head exact
/// identities at the start of training.
pub fn init_weights(cfg: &ModelConfig, seed: u64) -> WeightStore {
    let mut rng = Rng::derive(seed, 0x57454947); // weight stream
    let mut store = WeightStore::new();
    let e = &cfg.extractor;
    let ch = stage_channels(e.base_channels);

    add_conv_nb(&mut store, &mut rng, "enc.c1", ch[0], 3, 3);
    add_conv_nb(&mut store, &mut rng, "enc.c2", ch[1], ch[0], 3);
    add_conv_nb(&mut store, &mut rng, "enc.c3", ch[2], ch[1], 3);
    add_conv_nb(&mut store, &mut rng, "enc.c4", ch[3], ch[2], 3);

    // Decoder fuses both branches' taps at 1/4 resolution.
    let tap_sum: usize = e.prior_tap_depths.iter().map(|&d| ch[d - 1]).sum();
    let fused_in = 2 * tap_sum;
    add_conv_nb(&mut store, &mut rng, "dec.fuse", 2 * e.feature_channels, fused_in, 1);
    add_conv_nb(&mut store, &mut rng, "dec.out", e.feature_channels, 2 * e.feature_channels, 3);

    if e.afem_enabled {
        let c = ch[1]; // 1/4-scale feature channels
        for norm in ["in", "bn"] {
            store.insert(&format!("afem.{norm}.gamma"), Array::full(&[c], 1.0));
            store.insert(&format!("afem.{norm}.beta"), Array::zeros(&[c]));
        }
        let r = (2 * c / 4).max(1);
        store.insert("afem.se1.w", he_fc(&mut rng, 2 * c, r));
        store.insert("afem.se1.b", Array::zeros(&[r]));
        store.insert("afem.se2.w", he_fc(&mut rng, r, 2 * c));
        store.insert("afem.se2.b", Array::zeros(&[2 * c]));
        add_zero_conv(&mut store, "afem.fuse", c, 2 * c, 1);
        // amp1 is randomly initialized on purpose: with both amplitude convs
        // zero, relu(amp1·A) ≡ 0 would block amp2's gradient and the branch
        // could never leave zero. Random amp1 + zero amp2 keeps the block an
        // exact identity while letting gradients wake it up.
        add_conv(&mut store, &mut rng, "afem.amp1", c, c, 1);
        add_zero_conv(&mut store, "afem.amp2", c, c, 1);
    }

    let m = &cfg.matcher;
    let taps = 2 * m.radius + 1;
    add_conv(&mut store, &mut rng, "match.ctx", m.hidden, e.feature_channels, 3);
    add_conv(&mut store, &mut rng, "match.r1", m.hidden, taps + 1 + m.hidden, 3);
    add_conv(&mut store, &mut rng, "match.r2", m.hidden, m.hidden, 3);
    add_zero_conv_nb(&mut store, "match.r3", 1, m.hidden, 3);

    store
}

/// Copies the trainable encoder into the frozen prior branch (`prior.*`),
/// as done once at the end of supervised pretraining.
pub fn install_prior_from_encoder(store: &mut WeightStore) {
    let enc: Vec<(String, Array)> = store
        .iter()
        .filter(|(name, _)| name.starts_with("enc."))
        .map(|(name, p)| (name.replacen("enc.", "prior.", 1), p.value.clone()))
        .collect();
    assert!(!enc.is_empty(), "install_prior_from_encoder: no enc.* parameters");
    for (name, value) in enc {
        store.insert(&name, value);
        store.freeze(&name);
    }
}

pub fn has_prior(store: &WeightStore) -> bool {
    store.contains("prior.c1.w")
}

/// Guard used by training steps that require the pretrained prior branch.
pub fn require_prior(store: &WeightStore) -> Result<()> {
    if has_prior(store) {
        Ok(())
    } else {
        Err(RoseError::invalid("prior encoder requires stage0 checkpoint"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExtractorConfig, MatcherConfig};
    use std::collections::BTreeSet;

    fn small_cfg(afem: bool) -> ModelConfig {
        ModelConfig {
            extractor: ExtractorConfig {
                base_channels: 4,
                feature_channels: 6,
                afem_enabled: afem,
                prior_tap_depths: [2, 3, 4],
            },
            matcher: MatcherConfig { d_max_quarter: 3, k_iters: 2, hidden: 5, radius: 1 },
        }
    }

    fn temp_path(tag: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("rose-store-{tag}-{}.ckpt", std::process::id()))
    }

    #[test]
    fn variants_differ_only_in_enhancement_parameters() {
        let with: BTreeSet<String> = init_weights(&small_cfg(true), 0).names().into_iter().collect();
        let without: BTreeSet<String> =
            init_weights(&small_cfg(false), 0).names().into_iter().collect();
        assert!(without.is_subset(&with));
        for extra in with.difference(&without) {
            assert!(extra.starts_with("afem."), "unexpected extra parameter {extra}");
        }
        assert!(with.difference(&without).count() > 0);
    }

    #[test]
    fn checkpoint_round_trips_at_f32_precision() {
        let mut store = init_weights(&small_cfg(true), 7);
        store.freeze("enc.c1.w");
        let path = temp_path("roundtrip");
        store.save(&path).unwrap();
        let loaded = WeightStore::load(&path).unwrap();
        std::fs::remove_file(&path).ok();

        assert_eq!(store.names(), loaded.names());
        for (name, p) in store.iter() {
            let l = loaded.get(name).unwrap();
            assert_eq!(p.frozen, l.frozen, "{name}");
            assert_eq!(p.value.shape(), l.value.shape(), "{name}");
            for (a, b) in p.value.data().iter().zip(l.value.data()) {
                assert_eq!(*a as f32 as f64, *b, "{name}");
            }
        }
    }

    #[test]
    fn loader_rejects_malformed_checkpoints() {
        let path = temp_path("badmagic");
        fs::write(&path, b"NOTMAGIC\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        let err = WeightStore::load(&path).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");

        let store = init_weights(&small_cfg(false), 1);
        store.save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        let err = WeightStore::load(&path).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");

        store.save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.push(0);
        fs::write(&path, &bytes).unwrap();
        let err = WeightStore::load(&path).unwrap_err().to_string();
        assert!(err.contains("trailing"), "{err}");
        fs::remove_file(&path).ok();
    }

    #[test]
    fn prior_installation_mirrors_and_freezes_the_encoder() {
        let mut store = init_weights(&small_cfg(true), 3);
        assert!(require_prior(&store).is_err());
        install_prior_from_encoder(&mut store);
        assert!(has_prior(&store));
        require_prior(&store).unwrap();
        for i in 1..=4 {
            let enc = store.get(&format!("enc.c{i}.w")).unwrap();
            let prior = store.get(&format!("prior.c{i}.w")).unwrap();
            assert_eq!(enc.value, prior.value);
            assert!(prior.frozen);
            assert!(!enc.frozen);
        }
    }

    #[test]
    fn frozen_parameters_receive_no_gradient() {
        let mut store = init_weights(&small_cfg(false), 4);
        install_prior_from_encoder(&mut store);
        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let w_enc = bind.get("enc.c1.w");
        let w_prior = bind.get("prior.c1.w");
        let loss = w_enc.sum().add(&w_prior.sum());
        loss.backward();
        assert!(w_enc.grad().is_some());
        assert!(w_prior.grad().is_none());
    }

    #[test]
    fn missing_prior_error_names_the_required_stage() {
        let store = init_weights(&small_cfg(true), 5);
        let err = require_prior(&store).unwrap_err().to_string();
        assert!(err.contains("prior encoder requires stage0 checkpoint"), "{err}");
    }
}
