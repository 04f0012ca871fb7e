//! Seeded generator of phase-structured feature sequences plus a simulated
//! frozen frame-wise backbone. Stands in for real video datasets: each
//! "video" walks through ordered phases, each frame carries a noisy phase
//! prototype feature, and a configurable fraction of frames is corrupted
//! toward a wrong-phase prototype so the backbone is confidently wrong there
//! (high CEE) and the attention regularizer has signal.

use std::path::Path;

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;
use crate::tensor::Tensor;

/// Matched-filter gain of the simulated backbone readout.
const BACKBONE_GAIN: f64 = 6.0;
/// Readout noise scale, relative to the feature noise sigma. Tied to sigma
/// so the noiseless limit stays exactly deterministic per frame feature.
const READOUT_NOISE_FACTOR: f64 = 2.0;
/// Probability that a phase is skipped in a given video.
const PHASE_SKIP_PROB: f64 = 0.1;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Generator configuration. Phase separation (and therefore the frame-wise
/// backbone accuracy) is controlled by `noise_sigma`; the defaults land the
/// backbone in a mid-accuracy regime with headroom for temporal modeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of phases c.
    pub classes: usize,
    /// Feature width d_F.
    pub feature_dim: usize,
    /// Frames per video, sampled uniformly from [t_min, t_max].
    pub t_min: usize,
    pub t_max: usize,
    /// Relative dwell-time range per phase, rescaled to the sampled length.
    pub dwell_min: usize,
    pub dwell_max: usize,
    /// Gaussian feature noise.
    pub noise_sigma: f64,
    /// Per-frame probability of corruption toward a wrong-phase prototype.
    pub corruption_rate: f64,
    /// 1.0 replaces the prototype entirely; smaller values blend.
    pub corruption_strength: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 7,
            feature_dim: 32,
            t_min: 200,
            t_max: 500,
            dwell_min: 20,
            dwell_max: 80,
            noise_sigma: 0.3,
            corruption_rate: 0.2,
            corruption_strength: 0.7,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("need at least two phases"));
        }
        if self.feature_dim < self.classes + 1 {
            return Err(Error::invalid(format!(
                "feature_dim {} must be >= classes + 1 ({}) for orthogonal prototypes plus the artifact direction",
                self.feature_dim,
                self.classes + 1
            )));
        }
        if self.t_min == 0 || self.t_min > self.t_max {
            return Err(Error::invalid(format!(
                "empty frame-count range [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if self.t_min < self.classes {
            return Err(Error::invalid(format!(
                "t_min {} must be >= classes {}",
                self.t_min, self.classes
            )));
        }
        if self.dwell_min == 0 || self.dwell_min > self.dwell_max {
            return Err(Error::invalid(format!(
                "empty dwell range [{}, {}]",
                self.dwell_min, self.dwell_max
            )));
        }
        if !(0.0..1.0).contains(&self.corruption_rate) {
            return Err(Error::invalid(format!(
                "corruption_rate {} must be in [0, 1)",
                self.corruption_rate
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::invalid("noise_sigma must be >= 0"));
        }
        // Strength 1 lands exactly on the wrong prototype; values above 1
        // overshoot it, which also inflates the corrupted feature norm.
        if !(0.0..=2.0).contains(&self.corruption_strength) {
            return Err(Error::invalid("corruption_strength must be in [0, 2]"));
        }
        Ok(())
    }
}

/// One synthetic video: per-frame features, frozen-backbone probabilities and
/// ground-truth phase labels. `corrupted` records which frames were planted
/// as misleading; the model never sees it, tests and reports do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSequence {
    pub video_id: String,
    pub labels: Vec<usize>,
    pub features: Tensor,
    pub backbone_probs: Tensor,
    pub corrupted: Vec<bool>,
}

impl VideoSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Fixed per-config phase prototypes plus one extra "artifact" direction,
/// all seeded Gaussian vectors, orthonormalized. The artifact direction is
/// stamped onto corrupted frames: it is invisible to the matched-filter
/// backbone (orthogonal to every prototype, so the backbone stays
/// confidently wrong there) but gives the temporal model a linearly
/// separable signature for low-quality frames, like blur or occlusion in
/// real footage.
fn prototypes(cfg: &SynthConfig) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(cfg.seed, 0x70726f_74));
    let normal = StandardNormal;
    let mut protos: Vec<Vec<f64>> = Vec::with_capacity(cfg.classes + 1);
    while protos.len() < cfg.classes + 1 {
        let mut v: Vec<f64> = (0..cfg.feature_dim).map(|_| normal.sample(&mut rng)).collect();
        for p in &protos {
            let dot: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(p) {
                *vi -= dot * pi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            protos.push(v);
        }
    }
    let artifact = protos.pop().expect("artifact direction");
    (protos, artifact)
}

/// Monotone phase labels: walk phases in order, skipping each independently
/// with a small probability (at least one survives), then stretch sampled
/// dwell weights to the target frame count.
fn sample_labels(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let t_total = rng.gen_range(cfg.t_min..=cfg.t_max);
    let mut phases: Vec<usize> =
        (0..cfg.classes).filter(|_| rng.gen::<f64>() >= PHASE_SKIP_PROB).collect();
    if phases.is_empty() {
        phases.push(0);
    }
    if phases.len() > t_total {
        phases.truncate(t_total);
    }
    let weights: Vec<f64> = phases
        .iter()
        .map(|_| rng.gen_range(cfg.dwell_min..=cfg.dwell_max) as f64)
        .collect();
    let total_w: f64 = weights.iter().sum();
    let mut lengths: Vec<usize> = weights
        .iter()
        .map(|w| ((w / total_w * t_total as f64).floor() as usize).max(1))
        .collect();
    // Fix rounding drift one frame at a time, longest segments first when
    // shrinking, round-robin when growing.
    let mut assigned: usize = lengths.iter().sum();
    let mut cursor = 0;
    let n_segments = lengths.len();
    while assigned < t_total {
        lengths[cursor % n_segments] += 1;
        assigned += 1;
        cursor += 1;
    }
    while assigned > t_total {
        let imax = (0..lengths.len()).max_by_key(|&i| lengths[i]).unwrap();
        if lengths[imax] > 1 {
            lengths[imax] -= 1;
            assigned -= 1;
        } else {
            break;
        }
    }
    let mut labels = Vec::with_capacity(t_total);
    for (phase, len) in phases.iter().zip(&lengths) {
        labels.extend(std::iter::repeat(*phase).take(*len));
    }
    labels
}

/// Deterministically generate one video from (cfg, video_seed).
pub fn generate_video(cfg: &SynthConfig, video_seed: u64) -> Result<VideoSequence> {
    cfg.validate()?;
    let (protos, artifact) = prototypes(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(cfg.seed, video_seed));
    let normal = StandardNormal;

    let labels = sample_labels(cfg, &mut rng);
    let t_total = labels.len();
    let d = cfg.feature_dim;
    let c = cfg.classes;

    let mut features = vec![0.0; t_total * d];
    let mut probs = vec![0.0; t_total * c];
    let mut corrupted = vec![false; t_total];

    for (t, &label) in labels.iter().enumerate() {
        let is_corrupt = cfg.corruption_rate > 0.0 && rng.gen::<f64>() < cfg.corruption_rate;
        corrupted[t] = is_corrupt;
        let row = &mut features[t * d..(t + 1) * d];
        row.copy_from_slice(&protos[label]);
        if is_corrupt {
            let mut wrong = rng.gen_range(0..c - 1);
            if wrong >= label {
                wrong += 1;
            }
            let s = cfg.corruption_strength;
            for (j, f) in row.iter_mut().enumerate() {
                let p_true = protos[label][j];
                let p_wrong = protos[wrong][j];
                *f = p_true + s * (p_wrong - p_true) + s * artifact[j];
            }
        }
        for f in row.iter_mut() {
            let eps: f64 = normal.sample(&mut rng);
            *f += cfg.noise_sigma * eps;
        }

        // Frozen backbone: matched-filter logits over the frame's own feature.
        let mut logits = vec![0.0; c];
        for (k, proto) in protos.iter().enumerate() {
            let dot: f64 = row.iter().zip(proto).map(|(a, b)| a * b).sum();
            let eta: f64 = normal.sample(&mut rng);
            logits[k] = BACKBONE_GAIN * dot + READOUT_NOISE_FACTOR * cfg.noise_sigma * eta;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            sum += *l;
        }
        for (k, l) in logits.iter().enumerate() {
            probs[t * c + k] = l / sum;
        }
    }

    Ok(VideoSequence {
        video_id: format!("v{video_seed:03}"),
        labels,
        features: Tensor::new(vec![t_total, d], features),
        backbone_probs: Tensor::new(vec![t_total, c], probs),
        corrupted,
    })
}

// ── Dataset container ────────────────────────────────────────────────

/// All videos of one generator run, with the config echoed for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub format_version: u32,
    pub config: SynthConfig,
    pub videos: Vec<VideoSequence>,
}

impl Dataset {
    pub fn generate(cfg: &SynthConfig, n_videos: usize) -> Result<Dataset> {
        if n_videos == 0 {
            return Err(Error::invalid("need at least one video"));
        }
        cfg.validate()?;
        let videos = (0..n_videos)
            .map(|i| generate_video(cfg, i as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { format_version: DATASET_FORMAT_VERSION, config: cfg.clone(), videos })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Format { path: path.display().to_string(), source: e })?;
        std::fs::write(path, json + "\n")
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        let ds: Dataset = serde_json::from_str(&raw)
            .map_err(|e| Error::Format { path: path.display().to_string(), source: e })?;
        if ds.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported dataset format version {} (expected {})",
                ds.format_version, DATASET_FORMAT_VERSION
            )));
        }
        Ok(ds)
    }

    pub fn video_by_id(&self, id: &str) -> Option<&VideoSequence> {
        self.videos.iter().find(|v| v.video_id == id)
    }
}

// ── Folds ────────────────────────────────────────────────────────────

/// Index-based train/val/test split of a video list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// k-fold split: disjoint test chunks covering all videos, with the non-test
/// remainder split 80/20 into train/val. Deterministic given the seed.
pub fn make_folds(n_videos: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > n_videos {
        return Err(Error::invalid(format!("{k} folds need at least {k} videos, got {n_videos}")));
    }
    let largest_test = n_videos / k + usize::from(n_videos % k != 0);
    if n_videos - largest_test < 2 {
        return Err(Error::invalid(format!(
            "{n_videos} videos leave fewer than 2 non-test videos per fold; add videos or folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_videos).collect();
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(seed, 0x666f_6c64));
    order.shuffle(&mut rng);

    let base = n_videos / k;
    let extra = n_videos % k;
    let mut folds = Vec::with_capacity(k);
    let mut offset = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let test: Vec<usize> = order[offset..offset + size].to_vec();
        let rest: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(pos, _)| *pos < offset || *pos >= offset + size)
            .map(|(_, &v)| v)
            .collect();
        let val_count = ((rest.len() as f64 * 0.2).round() as usize).clamp(1, rest.len() - 1);
        let val = rest[..val_count].to_vec();
        let train = rest[val_count..].to_vec();
        folds.push(Fold { train, val, test });
        offset += size;
    }
    Ok(folds)
}
