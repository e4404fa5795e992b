use std::collections::BTreeMap;

use rose_core::array::Array;
use rose_core::autodiff::{Graph, Tensor};
use rose_core::model::{forward_pair, init_weights, ModelBinding, Variant, WeightStore};
use rose_core::pipeline::config::parse_config;
use rose_core::pipeline::data::{build_pool, stack_gt_left, stack_views, SALT_DRAW, SALT_TRAIN_SCENES};
use rose_core::pipeline::{lr_at, AdamW};
use rose_core::rng::Rng;

const SIZING: &str = "base_channels = 8\nfeature_channels = 16\nhidden = 12\nd_max_quarter = 8\n";

fn grads(bind: &ModelBinding) -> BTreeMap<String, Array> {
    let mut out = BTreeMap::new();
    for (name, t) in bind.iter() {
        if let Some(g) = t.grad() {
            out.insert(name.clone(), g);
        }
    }
    out
}

fn stats(a: &Array) -> (f64, f64, f64) {
    let d = a.data();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let neg = d.iter().filter(|v| **v < 0.0).count() as f64 / n;
    (mean, var.sqrt(), neg)
}

fn main() {
    let txt = format!(
        "stage = pretrain\nseed = 1\niterations = 300\nbatch_size = 4\nlr = 0.004\nwarmup_frac = 0.2\npool_size = 64\naugment = false\n{SIZING}"
    );
    let cfg = parse_config(&txt, "pretrain").unwrap();
    let mut store: WeightStore = init_weights(&cfg.model, cfg.seed);
    let pool = build_pool(&cfg, SALT_TRAIN_SCENES, cfg.pool_size).unwrap();
    let mut opt = AdamW::new(cfg.weight_decay);
    let mut draw = Rng::derive(cfg.seed, SALT_DRAW);

    for it in 0..cfg.iterations {
        let lr = lr_at(it, cfg.iterations, cfg.lr, cfg.warmup_frac);
        let items: Vec<_> =
            (0..cfg.batch_size).map(|_| pool[draw.below(pool.len())].clone()).collect();
        let (il, ir) = stack_views(&items);
        let gt = stack_gt_left(&items);

        let g = Graph::new();
        let bind = ModelBinding::bind(&store, &g);
        let (tl, tr) = (g.constant(il), g.constant(ir));
        let (fl, _fr, seq) = forward_pair(&bind, &cfg.model, &tl, &tr, Variant::Clear).unwrap();

        // weighted sequence L1 vs gt
        let target = g.constant(gt.clone());
        let mut loss: Option<Tensor> = None;
        let k = seq.steps.len();
        for (i, d) in seq.steps.iter().enumerate() {
            let w = cfg.loss.beta.powi((k - 1 - i) as i32);
            let term = d.sub(&target).abs().mean().mul_scalar(w);
            loss = Some(match loss {
                Some(l) => l.add(&term),
                None => term,
            });
        }
        let loss = loss.unwrap();
        let lv = loss.item();
        loss.backward();
        let gr = grads(&bind);

        if it % 10 == 0 || it < 6 {
            let (fm, fs, _) = stats(&fl.value());
            let d0 = seq.steps[0].value();
            let dk = seq.steps[k - 1].value();
            let (d0m, d0s, _) = stats(&d0);
            let (dkm, dks, _) = stats(&dk);
            let (gtm, _, _) = stats(&gt);
            let r3 = store.value("match.r3.w");
            let (r3m, r3s, r3neg) = stats(r3);
            let r2b = store.value("match.r2.b");
            let (r2bm, _, _) = stats(r2b);
            let gd = gr.get("match.r3.w").map(|g| stats(g).0).unwrap_or(f64::NAN);
            println!(
                "it {it:3} loss {lv:7.4} | f {fm:6.3}±{fs:5.3} | D1 {d0m:6.3}±{d0s:5.3} DK {dkm:6.3}±{dks:5.3} gt {gtm:5.3} | r3 {r3m:+.4}±{r3s:.4} neg{r3neg:.2} g {gd:+.2e} | r2b {r2bm:+.4}"
            );
        }
        opt.step(&mut store, &gr, lr);
    }
}
