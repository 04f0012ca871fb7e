//! Scratch calibration runs for picking generator and training defaults.
//! Not part of the deliverable surface; run with
//! `cargo run -p phaseline --example calibrate --release -- <experiment>`.

use std::time::Instant;

use phaseline::loss::cee_vector;
use phaseline::metrics::{predict_labels, spearman};
use phaseline::model::{model_forward, ModelParams};
use phaseline::synth::{make_folds, Dataset, SynthConfig};
use phaseline::train::{cross_validate, train, TrainConfig};

fn backbone_accuracy(ds: &Dataset, indices: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &i in indices {
        let v = &ds.videos[i];
        let preds = predict_labels(&v.backbone_probs);
        let correct = preds.iter().zip(&v.labels).filter(|(p, l)| p == l).count();
        acc += 100.0 * correct as f64 / v.len() as f64;
    }
    acc / indices.len() as f64
}

fn experiment_a() {
    // Default-scale data; desk-scale model per acceptance criterion 5.
    // (strength, sigma, lr, epochs, lambda)
    let combos = [
        (0.7, 0.3, 3e-3, 20, 1.0),
        (0.7, 0.3, 3e-3, 20, 0.0),
        (0.7, 0.3, 1e-3, 40, 1.0),
        (1.0, 0.3, 3e-3, 20, 0.0),
    ];
    for (strength, sigma, lr, epochs, lambda) in combos {
        let cfg = SynthConfig {
            corruption_strength: strength,
            noise_sigma: sigma,
            ..SynthConfig::default()
        };
        let ds = Dataset::generate(&cfg, 15).unwrap();
        let all: Vec<usize> = (0..ds.videos.len()).collect();
        let backbone_all = backbone_accuracy(&ds, &all);

        let folds = make_folds(ds.videos.len(), 5, cfg.seed).unwrap();
        let tcfg = TrainConfig {
            lr,
            epochs,
            lambda,
            use_reg: lambda > 0.0,
            layers: 4,
            attn_dim: 16,
            seed: 7,
            ..TrainConfig::default()
        };
        let t0 = Instant::now();
        let report = cross_validate(&ds.videos, &folds, &tcfg, 1).unwrap();
        let mut backbone = 0.0;
        for fold in &folds {
            backbone += backbone_accuracy(&ds, &fold.test);
        }
        backbone /= folds.len() as f64;
        let best_epochs: Vec<usize> = report.folds.iter().map(|f| f.best_epoch).collect();
        println!(
            "s={strength} sg={sigma} lr={lr:.0e} ep={epochs} l={lambda}: model {:.2} +/- {:.2} | bb(all) {:.2} bb(test) {:.2} | gain {:+.2} | best {:?} | {:?}",
            report.mean.accuracy,
            report.std.accuracy,
            backbone_all,
            backbone,
            report.mean.accuracy - backbone,
            best_epochs,
            t0.elapsed()
        );
    }
}

fn experiment_b() {
    // Regularization direction: spearman(n_first, cee) for lambda 0 vs on.
    let synth = SynthConfig {
        t_min: 80,
        t_max: 160,
        noise_sigma: 0.1,
        corruption_strength: 1.0,
        ..SynthConfig::default()
    };
    // (lr, epochs, lambda_on)
    for (lr, epochs, lambda_on) in [(3e-3, 15, 1.0), (1e-2, 20, 1.0)] {
        let mut deltas = Vec::new();
        let t0 = Instant::now();
        for seed in 0..5u64 {
            let cfg = SynthConfig { seed: 100 + seed, ..synth.clone() };
            let ds = Dataset::generate(&cfg, 8).unwrap();
            let folds = make_folds(ds.videos.len(), 4, cfg.seed).unwrap();
            let fold = &folds[0];
            let mut rhos = [0.0f64; 2];
            let mut regs = [0.0f64; 2];
            for (slot, lambda) in [(0usize, 0.0), (1usize, lambda_on)] {
                let tcfg = TrainConfig {
                    lr,
                    epochs,
                    lambda,
                    use_reg: lambda > 0.0,
                    layers: 2,
                    attn_dim: 16,
                    seed: 55 + seed,
                    ..TrainConfig::default()
                };
                let init = ModelParams::init(
                    tcfg.model_config(cfg.feature_dim, cfg.classes),
                    seed * 31 + 1,
                )
                .unwrap();
                let out = train(&init, &ds.videos, fold, &tcfg).unwrap();
                let mut rho_sum = 0.0;
                let mut reg_sum = 0.0;
                let mut count = 0.0;
                for v in &ds.videos {
                    let (_, rec) = model_forward(&out.model, &v.features).unwrap();
                    let conf = cee_vector(&v.backbone_probs, &v.labels).unwrap();
                    rho_sum += spearman(&rec.n_first, &conf.cee);
                    reg_sum += rec
                        .n_first
                        .iter()
                        .zip(&conf.cee)
                        .map(|(n, c)| n * c)
                        .sum::<f64>();
                    count += 1.0;
                }
                rhos[slot] = rho_sum / count;
                regs[slot] = reg_sum / count;
            }
            println!(
                "  seed {seed}: rho(off)={:.4} rho(on)={:.4} | <n,cee>(off)={:.4} (on)={:.4}",
                rhos[0], rhos[1], regs[0], regs[1]
            );
            deltas.push(rhos[1] - rhos[0]);
        }
        let mean: f64 = deltas.iter().sum::<f64>() / deltas.len() as f64;
        println!(
            "lr={lr:.0e} epochs={epochs} lambda={lambda_on}: mean rho delta {mean:.4} (want < 0), {:?}",
            t0.elapsed()
        );
    }
}

fn experiment_c() {
    // Ablation grid direction: (label, t_min, t_max, videos, sigma, strength,
    // lr, epochs, seeds, layer list).
    let synth = SynthConfig {
        t_min: 80,
        t_max: 160,
        noise_sigma: 0.1,
        corruption_strength: 1.0,
        ..SynthConfig::default()
    };
    for (attn_dim, lr) in [(16usize, 3e-3), (16, 1e-2)] {
        for lambda_on in [1.0] {
            println!("PE on, d={attn_dim} lr={lr:.0e} lambda={lambda_on}");
            let t0 = Instant::now();
            for layers in [2usize, 4] {
                let mut acc_off = Vec::new();
                let mut acc_on = Vec::new();
                for seed in 0..5u64 {
                    let cfg = SynthConfig { seed: 300 + seed, ..synth.clone() };
                    let ds = Dataset::generate(&cfg, 12).unwrap();
                    let folds = make_folds(ds.videos.len(), 5, cfg.seed).unwrap();
                    for reg in [false, true] {
                        let tcfg = TrainConfig {
                            lr,
                            epochs: 20,
                            lambda: if reg { lambda_on } else { 0.0 },
                            use_reg: reg,
                            layers,
                            attn_dim,
                            use_pe: true,
                            seed: 70 + seed,
                            ..TrainConfig::default()
                        };
                        let report = cross_validate(&ds.videos, &folds, &tcfg, 1).unwrap();
                        if reg {
                            acc_on.push(report.mean.accuracy);
                        } else {
                            acc_off.push(report.mean.accuracy);
                        }
                    }
                }
                let m_off: f64 = acc_off.iter().sum::<f64>() / acc_off.len() as f64;
                let m_on: f64 = acc_on.iter().sum::<f64>() / acc_on.len() as f64;
                let pairs: Vec<String> = acc_off
                    .iter()
                    .zip(&acc_on)
                    .map(|(o, n)| format!("{:+.2}", n - o))
                    .collect();
                println!(
                    "  layers={layers}: off {m_off:.2} on {m_on:.2} delta {:+.2} pairs {pairs:?} ({:?})",
                    m_on - m_off,
                    t0.elapsed()
                );
            }
        }
    }
}

fn experiment_d() {
    // HA/LA quality on a trained regularized model over >= 20 videos.
    let cfg = SynthConfig { t_min: 100, t_max: 200, seed: 500, ..SynthConfig::default() };
    let ds = Dataset::generate(&cfg, 24).unwrap();
    let folds = make_folds(ds.videos.len(), 5, cfg.seed).unwrap();
    let tcfg = TrainConfig {
        lr: 3e-3,
        epochs: 15,
        lambda: 1.0,
        use_reg: true,
        layers: 4,
        attn_dim: 16,
        seed: 77,
        ..TrainConfig::default()
    };
    let init =
        ModelParams::init(tcfg.model_config(cfg.feature_dim, cfg.classes), 12).unwrap();
    let t0 = Instant::now();
    let out = train(&init, &ds.videos, &folds[0], &tcfg).unwrap();
    println!("train: {:?}", t0.elapsed());
    let mut ha_cee = Vec::new();
    let mut la_cee = Vec::new();
    let mut ha_correct = 0.0;
    let mut la_correct = 0.0;
    let mut count = 0.0;
    for v in &ds.videos {
        let (probs, rec) = model_forward(&out.model, &v.features).unwrap();
        let preds = predict_labels(&probs);
        let conf = cee_vector(&v.backbone_probs, &v.labels).unwrap();
        let report = phaseline::metrics::extract_ha_la(&rec, &v.labels, &preds, &conf).unwrap();
        for p in &report.phases {
            ha_cee.push(p.ha_cee);
            la_cee.push(p.la_cee);
            ha_correct += if p.ha_correct { 1.0 } else { 0.0 };
            la_correct += if p.la_correct { 1.0 } else { 0.0 };
            count += 1.0;
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "HA cee {:.3} vs LA cee {:.3} | HA acc {:.1}% vs LA acc {:.1}% over {count} phases",
        mean(&ha_cee),
        mean(&la_cee),
        100.0 * ha_correct / count,
        100.0 * la_correct / count
    );
}

fn experiment_e() {
    // Dissect one reg-on vs reg-off pair: where does accuracy move?
    let cfg = SynthConfig {
        seed: 303,
        t_min: 80,
        t_max: 160,
        noise_sigma: 0.1,
        corruption_strength: 1.0,
        ..SynthConfig::default()
    };
    let ds = Dataset::generate(&cfg, 12).unwrap();
    let folds = make_folds(ds.videos.len(), 5, cfg.seed).unwrap();
    for reg in [false, true] {
        let tcfg = TrainConfig {
            lr: 1e-2,
            epochs: 20,
            lambda: if reg { 1.0 } else { 0.0 },
            use_reg: reg,
            layers: 2,
            attn_dim: 16,
            seed: 73,
            ..TrainConfig::default()
        };
        let report = cross_validate(&ds.videos, &folds, &tcfg, 1).unwrap();
        println!("reg={reg}: acc {:.2} +/- {:.2}", report.mean.accuracy, report.std.accuracy);
        for f in &report.folds {
            let fold = &folds[f.fold];
            let mut clean_ok = 0.0;
            let mut clean_n = 0.0;
            let mut cor_ok = 0.0;
            let mut cor_n = 0.0;
            for &idx in &fold.test {
                let v = &ds.videos[idx];
                let (probs, _) = model_forward(&f.model, &v.features).unwrap();
                let preds = predict_labels(&probs);
                for t in 0..v.len() {
                    let ok = (preds[t] == v.labels[t]) as u8 as f64;
                    if v.corrupted[t] {
                        cor_ok += ok;
                        cor_n += 1.0;
                    } else {
                        clean_ok += ok;
                        clean_n += 1.0;
                    }
                }
            }
            let curve: Vec<String> =
                f.history.iter().map(|h| format!("{:.0}", h.val_accuracy)).collect();
            println!(
                "  fold {}: acc {:.2} best_ep {} clean {:.1}% corrupt {:.1}% val {:?}",
                f.fold,
                f.metrics.accuracy,
                f.best_epoch,
                100.0 * clean_ok / clean_n,
                100.0 * cor_ok / cor_n,
                curve
            );
        }
    }
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "a".into());
    match which.as_str() {
        "a" => experiment_a(),
        "b" => experiment_b(),
        "c" => experiment_c(),
        "d" => experiment_d(),
        "e" => experiment_e(),
        _ => eprintln!("unknown experiment {which}"),
    }
}
