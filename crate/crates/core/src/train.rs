//! Full-video-batch training with Adam, validation-best snapshot selection
//! and k-fold cross validation. Every number downstream of a seed is
//! reproducible bit-for-bit; folds are independent and may train on separate
//! threads without changing any result.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{
    attention_reg_loss, balanced_cross_entropy, cee_vector, median_freq_weights, total_loss,
    FrameConfidence,
};
use crate::metrics::{evaluate_metrics, mean_std, predict_labels, MetricsReport};
use crate::model::{forward_taped, model_forward, ModelConfig, ModelParams};
use crate::seeds;
use crate::synth::{Fold, VideoSequence};
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Weight of the attention regularizer in the combined loss.
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub use_reg: bool,
    /// Encoder layers L.
    pub layers: usize,
    /// Attention dimension d.
    pub attn_dim: usize,
    pub use_pe: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-5,
            epochs: 30,
            lambda: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            use_reg: true,
            layers: 11,
            attn_dim: 64,
            use_pe: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr < 0.0 {
            return Err(Error::invalid("learning rate must be >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("need at least one epoch"));
        }
        if self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be >= 0"));
        }
        if self.layers == 0 || self.attn_dim == 0 {
            return Err(Error::invalid("layers and attn_dim must be positive"));
        }
        Ok(())
    }

    pub fn model_config(&self, feature_dim: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            attn_dim: self.attn_dim,
            feature_dim,
            classes,
            use_pe: self.use_pe,
            ln_eps: 1e-5,
        }
    }

    fn reg_active(&self) -> bool {
        self.use_reg && self.lambda != 0.0
    }
}

// ── Adam ─────────────────────────────────────────────────────────────

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params.named().iter().map(|(_, t)| t.numel()).collect();
        AdamState {
            step: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }
}

/// One bias-corrected Adam update. Consumes the gradients: they are zeroed
/// afterwards so accumulation always starts fresh.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &mut [Vec<f64>],
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    let tensors = params.tensors_mut();
    assert_eq!(tensors.len(), grads.len(), "gradient/parameter tensor count mismatch");
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for (i, tensor) in tensors.into_iter().enumerate() {
        assert_eq!(tensor.numel(), grads[i].len(), "gradient shape mismatch at tensor {i}");
        for (j, p) in tensor.data.iter_mut().enumerate() {
            let g = grads[i][j];
            state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g;
            state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = state.m[i][j] / bc1;
            let v_hat = state.v[i][j] / bc2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
        grads[i].iter_mut().for_each(|g| *g = 0.0);
    }
}

// ── Training ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub history: Vec<EpochStat>,
    pub best_epoch: usize,
}

/// Video-level accuracy (percent) of a model over a set of videos.
pub fn model_accuracy(params: &ModelParams, videos: &[&VideoSequence]) -> Result<f64> {
    let mut acc = 0.0;
    for video in videos {
        let (probs, _) = model_forward(params, &video.features)?;
        let preds = predict_labels(&probs);
        let correct = preds.iter().zip(&video.labels).filter(|(p, l)| p == l).count();
        acc += 100.0 * correct as f64 / video.len() as f64;
    }
    Ok(acc / videos.len() as f64)
}

/// Train on one fold: one whole-video batch per step, median-frequency
/// class weights from the fold's training labels, and (optionally) the
/// first-layer attention regularizer weighted by the frozen backbone's CEE.
/// Returns the snapshot with the best validation accuracy (ties keep the
/// earlier epoch).
pub fn train(
    init: &ModelParams,
    videos: &[VideoSequence],
    fold: &Fold,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if fold.train.is_empty() || fold.val.is_empty() {
        return Err(Error::invalid("fold has an empty train or validation split"));
    }
    for &idx in fold.train.iter().chain(&fold.val).chain(&fold.test) {
        if idx >= videos.len() {
            return Err(Error::invalid(format!("fold references missing video {idx}")));
        }
    }
    let classes = init.config.classes;
    let mut counts = vec![0usize; classes];
    for &idx in &fold.train {
        for &label in &videos[idx].labels {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes, frame: idx });
            }
            counts[label] += 1;
        }
    }
    let weights = median_freq_weights(&counts)?;

    // Frozen-backbone confidence per training video; never on the tape.
    let confidences: Vec<Option<FrameConfidence>> = if cfg.reg_active() {
        let mut out = vec![None; videos.len()];
        for &idx in &fold.train {
            out[idx] = Some(cee_vector(&videos[idx].backbone_probs, &videos[idx].labels)?);
        }
        out
    } else {
        vec![None; videos.len()]
    };

    let mut params = init.clone();
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(cfg.seed, 0x7368_7566));
    let mut order = fold.train.clone();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &idx in &order {
            let video = &videos[idx];
            let mut tape = Tape::new();
            let taped = params.bind(&mut tape, true);
            let fwd = forward_taped(&mut tape, &taped, &params.config, &video.features)?;
            let l_c = balanced_cross_entropy(&mut tape, fwd.probs, &video.labels, &weights)?;
            let loss = if cfg.reg_active() {
                let conf = confidences[idx].as_ref().expect("confidence precomputed");
                let l_reg = attention_reg_loss(&mut tape, fwd.n_layers[0], conf)?;
                total_loss(&mut tape, l_c, l_reg, cfg.lambda)?
            } else {
                l_c
            };
            loss_sum += tape.data(loss)[0];
            tape.backward(loss)?;
            let mut grads = taped.grads(&tape);
            adam_step(&mut params, &mut grads, &mut state, cfg);
        }

        let val_videos: Vec<&VideoSequence> = fold.val.iter().map(|&i| &videos[i]).collect();
        let val_accuracy = model_accuracy(&params, &val_videos)?;
        history.push(EpochStat {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_accuracy,
        });
        let improved = match &best {
            None => true,
            Some((best_acc, _, _)) => val_accuracy > *best_acc,
        };
        if improved {
            best = Some((val_accuracy, epoch, params.clone()));
        }
    }

    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model, history, best_epoch })
}

// ── Cross validation ─────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub model: ModelParams,
    pub metrics: MetricsReport,
    pub history: Vec<EpochStat>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct CrossValReport {
    pub folds: Vec<FoldOutcome>,
    pub mean: Summary,
    pub std: Summary,
}

/// Train and test one model per fold; report per-fold metrics and the
/// mean +/- population standard deviation across folds.
///
/// Per-fold seeds derive from `cfg.seed` and the fold index alone, so a
/// `jobs > 1` run produces exactly the sequential result.
pub fn cross_validate(
    videos: &[VideoSequence],
    folds: &[Fold],
    cfg: &TrainConfig,
    jobs: usize,
) -> Result<CrossValReport> {
    cfg.validate()?;
    if videos.is_empty() || folds.is_empty() {
        return Err(Error::invalid("cross_validate needs videos and folds"));
    }
    let feature_dim = videos[0].features.dims2()?.1;
    let classes = videos[0].backbone_probs.dims2()?.1;
    let model_cfg = cfg.model_config(feature_dim, classes);
    model_cfg.validate()?;

    let run_fold = |fold_idx: usize| -> Result<FoldOutcome> {
        let fold = &folds[fold_idx];
        let fold_seed = seeds::mix(cfg.seed, fold_idx as u64);
        let init = ModelParams::init(model_cfg.clone(), seeds::mix(fold_seed, 0x696e_6974))?;
        let fold_cfg = TrainConfig { seed: fold_seed, ..cfg.clone() };
        let outcome = train(&init, videos, fold, &fold_cfg)?;
        let mut preds = Vec::with_capacity(fold.test.len());
        let mut gts = Vec::with_capacity(fold.test.len());
        for &idx in &fold.test {
            let (probs, _) = model_forward(&outcome.model, &videos[idx].features)?;
            preds.push(predict_labels(&probs));
            gts.push(videos[idx].labels.clone());
        }
        let metrics = evaluate_metrics(&preds, &gts)?;
        Ok(FoldOutcome {
            fold: fold_idx,
            model: outcome.model,
            metrics,
            history: outcome.history,
            best_epoch: outcome.best_epoch,
        })
    };

    let outcomes: Vec<FoldOutcome> = if jobs <= 1 || folds.len() == 1 {
        folds
            .iter()
            .enumerate()
            .map(|(i, _)| run_fold(i))
            .collect::<Result<Vec<_>>>()?
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results: Vec<std::sync::Mutex<Option<Result<FoldOutcome>>>> =
            (0..folds.len()).map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(folds.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= folds.len() {
                        break;
                    }
                    let out = run_fold(i);
                    *results[i].lock().unwrap() = Some(out);
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("fold worker finished"))
            .collect::<Result<Vec<_>>>()?
    };

    let pick = |f: &dyn Fn(&MetricsReport) -> f64| -> (f64, f64) {
        let vals: Vec<f64> = outcomes.iter().map(|o| f(&o.metrics)).collect();
        mean_std(&vals)
    };
    let (acc_m, acc_s) = pick(&|m| m.accuracy);
    let (p_m, p_s) = pick(&|m| m.precision);
    let (r_m, r_s) = pick(&|m| m.recall);
    let (f1_m, f1_s) = pick(&|m| m.f1);

    Ok(CrossValReport {
        folds: outcomes,
        mean: Summary { accuracy: acc_m, precision: p_m, recall: r_m, f1: f1_m },
        std: Summary { accuracy: acc_s, precision: p_s, recall: r_s, f1: f1_s },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_folds, Dataset, SynthConfig};

    fn tiny_dataset(rho: f64, sigma: f64, seed: u64) -> Dataset {
        let cfg = SynthConfig {
            classes: 3,
            feature_dim: 8,
            t_min: 24,
            t_max: 40,
            dwell_min: 6,
            dwell_max: 14,
            noise_sigma: sigma,
            corruption_rate: rho,
            corruption_strength: 1.0,
            seed,
        };
        Dataset::generate(&cfg, 6).unwrap()
    }

    fn desk_cfg() -> TrainConfig {
        TrainConfig {
            lr: 5e-3,
            epochs: 4,
            lambda: 1.0,
            seed: 9,
            use_reg: true,
            layers: 2,
            attn_dim: 6,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_first_step_closed_form() {
        let cfg = TrainConfig { lr: 0.1, ..TrainConfig::default() };
        let mut params = ModelParams::init(
            ModelConfig {
                layers: 1,
                attn_dim: 2,
                feature_dim: 2,
                classes: 2,
                use_pe: false,
                ln_eps: 1e-5,
            },
            0,
        )
        .unwrap();
        let before = params.flat();
        let mut state = AdamState::new(&params);
        let mut grads: Vec<Vec<f64>> =
            params.named().iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        grads[0][0] = 0.5;
        adam_step(&mut params, &mut grads, &mut state, &cfg);
        let after = params.flat();
        let expected = before[0] - cfg.lr * 0.5 / (0.5 + cfg.adam_eps);
        assert!((after[0] - expected).abs() < 1e-12);
        // Untouched coordinates stay put, and the gradient buffer is zeroed.
        assert_eq!(before[1..], after[1..]);
        assert!(grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let cfg = TrainConfig { lr: 0.1, ..TrainConfig::default() };
        let mut params = ModelParams::init(
            ModelConfig {
                layers: 1,
                attn_dim: 2,
                feature_dim: 2,
                classes: 2,
                use_pe: false,
                ln_eps: 1e-5,
            },
            3,
        )
        .unwrap();
        let before = params.flat();
        let mut state = AdamState::new(&params);
        let mut grads: Vec<Vec<f64>> =
            params.named().iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        for _ in 0..3 {
            adam_step(&mut params, &mut grads, &mut state, &cfg);
        }
        assert_eq!(before, params.flat());
    }

    #[test]
    fn noop_training_returns_initialization() {
        let ds = tiny_dataset(0.0, 0.3, 5);
        let folds = make_folds(ds.videos.len(), 3, 1).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 1,
            lambda: 0.0,
            use_reg: false,
            layers: 2,
            attn_dim: 4,
            seed: 2,
            ..TrainConfig::default()
        };
        let init =
            ModelParams::init(cfg.model_config(ds.config.feature_dim, ds.config.classes), 8)
                .unwrap();
        let out = train(&init, &ds.videos, &folds[0], &cfg).unwrap();
        assert_eq!(out.model, init);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = tiny_dataset(0.2, 0.3, 11);
        let folds = make_folds(ds.videos.len(), 3, 4).unwrap();
        let cfg = desk_cfg();
        let init =
            ModelParams::init(cfg.model_config(ds.config.feature_dim, ds.config.classes), 1)
                .unwrap();
        let a = train(&init, &ds.videos, &folds[0], &cfg).unwrap();
        let b = train(&init, &ds.videos, &folds[0], &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn training_descends_on_separable_data() {
        let ds = tiny_dataset(0.0, 0.1, 21);
        let folds = make_folds(ds.videos.len(), 3, 2).unwrap();
        let cfg = TrainConfig { epochs: 6, ..desk_cfg() };
        let init =
            ModelParams::init(cfg.model_config(ds.config.feature_dim, ds.config.classes), 5)
                .unwrap();
        let out = train(&init, &ds.videos, &folds[0], &cfg).unwrap();
        assert_eq!(out.history.len(), 6);
        assert!(
            out.history.last().unwrap().train_loss < out.history[0].train_loss,
            "no descent: {:?}",
            out.history
        );
    }

    #[test]
    fn best_model_beats_every_epoch_snapshot() {
        let ds = tiny_dataset(0.2, 0.4, 31);
        let folds = make_folds(ds.videos.len(), 3, 7).unwrap();
        let cfg = desk_cfg();
        let init =
            ModelParams::init(cfg.model_config(ds.config.feature_dim, ds.config.classes), 13)
                .unwrap();
        let out = train(&init, &ds.videos, &folds[0], &cfg).unwrap();
        let best_acc = out.history[out.best_epoch].val_accuracy;
        for stat in &out.history {
            assert!(best_acc >= stat.val_accuracy);
        }
        // Tie rule: no earlier epoch reaches the best accuracy.
        for stat in &out.history[..out.best_epoch] {
            assert!(stat.val_accuracy < best_acc);
        }
    }

    #[test]
    fn cross_validate_is_deterministic_and_parallel_safe() {
        let ds = tiny_dataset(0.1, 0.3, 41);
        let folds = make_folds(ds.videos.len(), 3, 3).unwrap();
        let cfg = TrainConfig { epochs: 2, ..desk_cfg() };
        let a = cross_validate(&ds.videos, &folds, &cfg, 1).unwrap();
        let b = cross_validate(&ds.videos, &folds, &cfg, 3).unwrap();
        assert_eq!(a.folds.len(), 3);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std, b.std);
        for (fa, fb) in a.folds.iter().zip(&b.folds) {
            assert_eq!(fa.model, fb.model);
            assert_eq!(fa.metrics, fb.metrics);
        }
    }

    #[test]
    fn identical_fold_metrics_have_zero_std() {
        let values = [80.0, 80.0, 80.0];
        let (mean, std) = mean_std(&values);
        assert_eq!(mean, 80.0);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn backbone_baseline_is_perfect_on_clean_data() {
        let ds = tiny_dataset(0.0, 0.0, 51);
        for video in &ds.videos {
            let preds = predict_labels(&video.backbone_probs);
            assert_eq!(&preds, &video.labels);
        }
    }

    #[test]
    fn rejects_empty_split() {
        let ds = tiny_dataset(0.0, 0.3, 61);
        let cfg = desk_cfg();
        let init =
            ModelParams::init(cfg.model_config(ds.config.feature_dim, ds.config.classes), 1)
                .unwrap();
        let bad = Fold { train: vec![], val: vec![0], test: vec![1] };
        assert!(train(&init, &ds.videos, &bad, &cfg).is_err());
    }

    #[test]
    fn history_shapes_match_contract() {
        let ds = tiny_dataset(0.1, 0.3, 71);
        let folds = make_folds(ds.videos.len(), 3, 9).unwrap();
        let cfg = TrainConfig { epochs: 3, ..desk_cfg() };
        let init =
            ModelParams::init(cfg.model_config(ds.config.feature_dim, ds.config.classes), 17)
                .unwrap();
        let out = train(&init, &ds.videos, &folds[0], &cfg).unwrap();
        assert_eq!(out.history.len(), 3);
        for (i, stat) in out.history.iter().enumerate() {
            assert_eq!(stat.epoch, i);
            assert!(stat.train_loss.is_finite());
            assert!((0.0..=100.0).contains(&stat.val_accuracy));
        }
    }
}
