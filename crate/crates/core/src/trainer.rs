//! The SGD training loop: wires batching, random augmentation, the adversarial
//! spatial transformer, the classifier, and the loss terms into the combined
//! adaptation / generalization objectives.
//!
//! Per step: (1) clean forwards provide the stop-gradient anchors p̂ (and the
//! live target entropy term), (2) the strategy builds the perturbed branch —
//! random ops on images, the adversarial transformer in-graph, or both,
//! (3) the weighted total is assembled, (4) one plain SGD step updates θ_m and
//! (through gradient reversal) θ_t. All randomness is derived from the run
//! seed via per-purpose streams, so runs are bit-reproducible.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentPolicy, OpSet};
use crate::data::{
    batch_from, corrupt, epoch_batches, paired_epoch, Corruption, Dataset, DomainTag, ImageBatch,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::{self, LossParts, LossWeights, Mode};
use crate::model::{batch_input, Checkpoint, Classifier};
use crate::rng::{stream_rng, Stream};
use crate::stn::{adversarial_transform, LocalizationNet};
use crate::tensor::{Graph, Tensor};

/// Which perturbed branch the consistency terms see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Supervised baseline: no consistency branch at all.
    None,
    RndAll,
    RndColor,
    RndGeo,
    AdvStn,
    /// Random color ops first, then the adversarial transformer on top.
    AdvStnColor,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::None,
        Strategy::RndAll,
        Strategy::RndColor,
        Strategy::RndGeo,
        Strategy::AdvStn,
        Strategy::AdvStnColor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::RndAll => "rnd-all",
            Strategy::RndColor => "rnd-color",
            Strategy::RndGeo => "rnd-geo",
            Strategy::AdvStn => "adv-stn",
            Strategy::AdvStnColor => "adv-stn-color",
        }
    }

    pub fn parse(s: &str) -> Result<Strategy> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Strategy::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown strategy {s:?} (expected one of: {})", names.join(", ")))
            })
    }

    /// The random-op set feeding the KL consistency term, if any.
    fn random_branch(self) -> Option<OpSet> {
        match self {
            Strategy::RndAll => Some(OpSet::RndAll),
            Strategy::RndColor | Strategy::AdvStnColor => Some(OpSet::RndColor),
            Strategy::RndGeo => Some(OpSet::RndGeo),
            Strategy::None | Strategy::AdvStn => None,
        }
    }

    fn adversarial_branch(self) -> bool {
        matches!(self, Strategy::AdvStn | Strategy::AdvStnColor)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub strategy: Strategy,
    pub epochs: usize,
    pub lr: f64,
    /// Fraction of `epochs` after which the learning rate drops to `lr_final`.
    pub lr_decay_at: f64,
    pub lr_final: f64,
    pub batch_size: usize,
    /// Random ops applied per image in the consistency branch.
    pub n_aug: usize,
    /// Shared normalized magnitude in [0, 10].
    pub m_aug: f64,
    pub weights: LossWeights,
    pub seeds: Vec<u64>,
    /// Per-class fraction of each source domain held out for evaluation.
    pub holdout_fraction: f64,
    /// Uniform ±range applied to the localization head at train start;
    /// 0 keeps the exact-identity init.
    pub stn_warm_start: f64,
    /// Name of the domain treated as target (adaptation: unlabeled training
    /// data + evaluation; generalization: evaluation only).
    pub target_domain: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Da,
            strategy: Strategy::RndAll,
            epochs: 60,
            lr: 0.001,
            lr_decay_at: 0.8,
            lr_final: 0.0001,
            batch_size: 32,
            n_aug: 2,
            m_aug: 9.0,
            weights: LossWeights::default(),
            seeds: vec![0, 1, 2],
            holdout_fraction: 0.2,
            stn_warm_start: 0.0,
            target_domain: "noise".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_final > 0.0 && self.lr_final.is_finite()) {
            return bad(format!("lr_final must be positive, got {}", self.lr_final));
        }
        if !(0.0..=1.0).contains(&self.lr_decay_at) {
            return bad(format!("lr_decay_at must lie in [0,1], got {}", self.lr_decay_at));
        }
        if !(0.0..=10.0).contains(&self.m_aug) {
            return bad(format!("m_aug must lie in [0,10], got {}", self.m_aug));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!("holdout_fraction must lie in [0,1), got {}", self.holdout_fraction));
        }
        if !(self.stn_warm_start >= 0.0 && self.stn_warm_start.is_finite()) {
            return bad(format!("stn_warm_start must be nonnegative, got {}", self.stn_warm_start));
        }
        if self.seeds.is_empty() {
            return bad("need at least one seed".into());
        }
        if self.target_domain.is_empty() {
            return bad("target_domain must be named".into());
        }
        self.weights.validate()
    }

    /// Step schedule: `lr` before the decay epoch, `lr_final` from it onward.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decay_epoch = (self.lr_decay_at * self.epochs as f64).floor() as usize;
        if epoch < decay_epoch {
            self.lr
        } else {
            self.lr_final
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub l_m: f64,
    pub l_c: f64,
    pub l_e: f64,
    pub l_adv: f64,
    pub total: f64,
    pub source_acc: f64,
    pub target_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainAccuracy {
    pub domain: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    /// Final accuracy per domain: source domains on their holdout split,
    /// the target domain on all of its samples.
    pub final_accuracy: Vec<DomainAccuracy>,
    pub source_holdout_acc: f64,
    pub target_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: String,
    pub strategy: String,
    pub runs: Vec<SeedRun>,
    pub mean_source_acc: f64,
    pub mean_target_acc: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub report: RunReport,
    /// One checkpoint per entry of `report.runs`, same order.
    pub checkpoints: Vec<Checkpoint>,
}

/// One CSV row per epoch; floats use shortest-roundtrip formatting so equal
/// runs serialize to identical bytes.
pub fn metrics_csv(run: &SeedRun) -> String {
    let mut out = String::from("epoch,lr,l_m,l_c,l_e,l_adv,total,source_acc,target_acc\n");
    for m in &run.epochs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            m.epoch, m.lr, m.l_m, m.l_c, m.l_e, m.l_adv, m.total, m.source_acc, m.target_acc
        )
        .unwrap();
    }
    out
}

struct DomainSplit<'a> {
    sources: Vec<&'a Dataset>,
    target: &'a Dataset,
}

fn split_domains<'a>(datasets: &'a [Dataset], target_domain: &str) -> Result<DomainSplit<'a>> {
    let target = datasets.iter().find(|d| d.domain == target_domain).ok_or_else(|| {
        let have: Vec<_> = datasets.iter().map(|d| d.domain.as_str()).collect();
        Error::Config(format!(
            "target domain {target_domain:?} not found (have: {})",
            have.join(", ")
        ))
    })?;
    let sources: Vec<&Dataset> = datasets.iter().filter(|d| d.domain != target_domain).collect();
    if sources.is_empty() {
        return Err(Error::Config("need at least one source domain besides the target".into()));
    }
    for d in datasets {
        if d.num_classes != target.num_classes {
            return Err(Error::Data(format!(
                "domain {} has {} classes but {} has {}",
                d.domain, d.num_classes, target.domain, target.num_classes
            )));
        }
        if d.is_empty() {
            return Err(Error::Data(format!("domain {} is empty", d.domain)));
        }
    }
    Ok(DomainSplit { sources, target })
}

/// Pooled multi-domain training set with per-sample source tags.
struct TrainPool {
    images: Vec<Image>,
    labels: Vec<usize>,
    tags: Vec<DomainTag>,
}

impl TrainPool {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn batch(&self, idxs: &[usize]) -> ImageBatch {
        ImageBatch {
            images: idxs.iter().map(|&i| self.images[i].clone()).collect(),
            labels: idxs.iter().map(|&i| Some(self.labels[i])).collect(),
            domains: idxs.iter().map(|&i| self.tags[i]).collect(),
        }
    }
}

/// Argmax accuracy in percent, no augmentation, order-insensitive.
pub fn evaluate(clf: &Classifier, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Data(format!("cannot evaluate on empty domain {}", ds.domain)));
    }
    let idxs: Vec<usize> = (0..ds.len()).collect();
    let mut correct = 0usize;
    for chunk in idxs.chunks(64) {
        let batch = batch_from(ds, chunk, DomainTag::Source(0));
        let pred = clf.predict_classes(&batch)?;
        correct += pred
            .iter()
            .zip(chunk)
            .filter(|&(p, &i)| *p == ds.labels[i])
            .count();
    }
    Ok(100.0 * correct as f64 / ds.len() as f64)
}

/// Accuracy on a corrupted copy of the dataset; the per-image rng derives
/// from `seed` and the image index, so the corrupted set is a pure function
/// of (dataset, kind, severity, seed).
pub fn evaluate_corrupted(
    clf: &Classifier,
    ds: &Dataset,
    kind: Corruption,
    severity: u8,
    seed: u64,
) -> Result<f64> {
    let mut corrupted = ds.clone();
    for (i, img) in corrupted.images.iter_mut().enumerate() {
        let mut rng = stream_rng(seed, Stream::Corrupt, i as u64);
        *img = corrupt(img, kind, severity, &mut rng)?;
    }
    evaluate(clf, &corrupted)
}

/// Train one model per seed and aggregate.
pub fn train(cfg: &TrainConfig, datasets: &[Dataset]) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut runs = Vec::new();
    let mut checkpoints = Vec::new();
    for &seed in &cfg.seeds {
        let (run, ck) = train_one_seed(cfg, datasets, seed)?;
        runs.push(run);
        checkpoints.push(ck);
    }
    let mean = |f: fn(&SeedRun) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let report = RunReport {
        mode: cfg.mode.name().into(),
        strategy: cfg.strategy.name().into(),
        mean_source_acc: mean(|r| r.source_holdout_acc),
        mean_target_acc: mean(|r| r.target_acc),
        runs,
    };
    Ok(TrainOutcome { report, checkpoints })
}

pub fn train_one_seed(
    cfg: &TrainConfig,
    datasets: &[Dataset],
    seed: u64,
) -> Result<(SeedRun, Checkpoint)> {
    cfg.validate()?;
    let split = split_domains(datasets, &cfg.target_domain)?;
    let num_classes = split.target.num_classes;
    let (channels, size) = {
        let img = &split.target.images[0];
        (img.channels, img.height)
    };

    // Pool source train splits; keep per-domain holdouts for the final report.
    let mut pool = TrainPool { images: Vec::new(), labels: Vec::new(), tags: Vec::new() };
    let mut holdouts: Vec<Dataset> = Vec::new();
    for (i, src) in split.sources.iter().enumerate() {
        let (train_part, hold_part) = src.split(cfg.holdout_fraction, seed);
        if train_part.is_empty() {
            return Err(Error::Data(format!(
                "holdout fraction leaves no training data for domain {}",
                src.domain
            )));
        }
        pool.tags.extend(std::iter::repeat(DomainTag::Source(i)).take(train_part.len()));
        pool.images.extend(train_part.images);
        pool.labels.extend(train_part.labels);
        holdouts.push(hold_part);
    }
    let mut holdout_pool = Dataset {
        domain: "source-holdout".into(),
        num_classes,
        images: holdouts.iter().flat_map(|d| d.images.iter().cloned()).collect(),
        labels: holdouts.iter().flat_map(|d| d.labels.iter().copied()).collect(),
    };
    if holdout_pool.is_empty() {
        // holdout_fraction = 0: report source accuracy on the training pool
        holdout_pool.images = pool.images.clone();
        holdout_pool.labels = pool.labels.clone();
    }

    let mut clf = Classifier::init(seed, num_classes, channels, size)?;
    let mut stn = if cfg.strategy.adversarial_branch() {
        let mut net = LocalizationNet::init(seed, channels, size)?;
        if cfg.stn_warm_start > 0.0 {
            let mut rng = stream_rng(seed, Stream::Stn, u64::MAX);
            for name in ["fc2.w", "fc2.b"] {
                let e = net.params.entries.iter_mut().find(|e| e.name == name).unwrap();
                for v in &mut e.values {
                    *v = rng.gen_range(-cfg.stn_warm_start..=cfg.stn_warm_start) as f32;
                }
            }
        }
        Some(net)
    } else {
        None
    };

    let da = cfg.mode == Mode::Da;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut shuffle_rng = stream_rng(seed, Stream::Shuffle, 1 + epoch as u64);
        let mut aug_rng = stream_rng(seed, Stream::Augment, epoch as u64);
        let mut sums = StepStats::default();
        let mut steps = 0usize;
        if da {
            let pairs =
                paired_epoch(pool.len(), split.target.len(), cfg.batch_size, &mut shuffle_rng);
            for (step, (src_idx, tgt_idx)) in pairs.iter().enumerate() {
                let src = pool.batch(src_idx);
                let tgt = batch_from(split.target, tgt_idx, DomainTag::Target);
                let stats = train_step(
                    cfg, &mut clf, stn.as_mut(), &src, Some(&tgt), lr, &mut aug_rng, epoch, step,
                )?;
                sums.accumulate(&stats);
                steps += 1;
            }
        } else {
            let batches = epoch_batches(pool.len(), cfg.batch_size, &mut shuffle_rng);
            for (step, src_idx) in batches.iter().enumerate() {
                let src = pool.batch(src_idx);
                let stats = train_step(
                    cfg, &mut clf, stn.as_mut(), &src, None, lr, &mut aug_rng, epoch, step,
                )?;
                sums.accumulate(&stats);
                steps += 1;
            }
        }
        let n = steps.max(1) as f64;
        epochs.push(EpochMetrics {
            epoch,
            lr,
            l_m: sums.l_m / n,
            l_c: sums.l_c / n,
            l_e: sums.l_e / n,
            l_adv: sums.l_adv / n,
            total: sums.total / n,
            source_acc: evaluate(&clf, &holdout_pool)?,
            target_acc: evaluate(&clf, split.target)?,
        });
    }

    let mut final_accuracy: Vec<DomainAccuracy> = Vec::new();
    for hold in holdouts.iter().filter(|d| !d.is_empty()) {
        final_accuracy.push(DomainAccuracy {
            domain: hold.domain.clone(),
            accuracy: evaluate(&clf, hold)?,
        });
    }
    final_accuracy.push(DomainAccuracy {
        domain: split.target.domain.clone(),
        accuracy: evaluate(&clf, split.target)?,
    });

    let run = SeedRun {
        seed,
        source_holdout_acc: evaluate(&clf, &holdout_pool)?,
        target_acc: evaluate(&clf, split.target)?,
        epochs,
        final_accuracy,
    };
    Ok((run, Checkpoint { classifier: clf, stn }))
}

#[derive(Default)]
struct StepStats {
    l_m: f64,
    l_c: f64,
    l_e: f64,
    l_adv: f64,
    total: f64,
}

impl StepStats {
    fn accumulate(&mut self, other: &StepStats) {
        self.l_m += other.l_m;
        self.l_c += other.l_c;
        self.l_e += other.l_e;
        self.l_adv += other.l_adv;
        self.total += other.total;
    }
}

/// Baseline supervised augmentation: each image flips horizontally with p=1/2.
fn flip_half(batch: &ImageBatch, rng: &mut ChaCha8Rng) -> ImageBatch {
    ImageBatch {
        images: batch
            .images
            .iter()
            .map(|img| if rng.gen_bool(0.5) { augment::flip_horizontal(img) } else { img.clone() })
            .collect(),
        labels: batch.labels.clone(),
        domains: batch.domains.clone(),
    }
}

fn batch_stats(name: &str, batch: &ImageBatch) -> String {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for img in &batch.images {
        for &v in &img.data {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v as f64;
            n += 1;
        }
    }
    format!("{name}: {} images, pixel min {lo} max {hi} mean {:.6}", batch.images.len(), sum / n.max(1) as f64)
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    cfg: &TrainConfig,
    clf: &mut Classifier,
    stn: Option<&mut LocalizationNet>,
    src: &ImageBatch,
    tgt: Option<&ImageBatch>,
    lr: f64,
    rng: &mut ChaCha8Rng,
    epoch: usize,
    step: usize,
) -> Result<StepStats> {
    src.check_invariants()?;
    if let Some(t) = tgt {
        t.check_invariants()?;
    }
    let mut g: Graph<f32> = Graph::new();
    let h_clf = clf.bind(&mut g);

    // (1) supervised branch on baseline-augmented labeled source images
    let flipped = flip_half(src, rng);
    let labels: Vec<usize> = src
        .labels
        .iter()
        .map(|l| l.ok_or_else(|| Error::Data("unlabeled sample in supervised batch".into())))
        .collect::<Result<_>>()?;
    let x_m = batch_input(&mut g, &flipped)?;
    let lp_m = clf.logprobs(&mut g, &h_clf, x_m)?;
    let l_m = losses::cross_entropy(&mut g, lp_m, &labels)?;
    let mut parts = LossParts { l_m, l_c: None, l_e: None, l_adv: None };

    let rnd_set = cfg.strategy.random_branch();
    let use_stn = cfg.strategy.adversarial_branch();
    let use_aux = rnd_set.is_some() || use_stn;
    let mut tags: Vec<DomainTag> = src.domains.clone();
    let mut h_stn: Option<Vec<Tensor>> = None;

    if use_aux {
        // (2) clean anchors p̂ (stop-gradient) + live target entropy
        let x_src_clean = batch_input(&mut g, src)?;
        let lp_src_clean = clf.logprobs(&mut g, &h_clf, x_src_clean)?;
        let phat_src = g.stop_gradient(lp_src_clean)?;
        let mut phat_all = phat_src;
        let mut tgt_clean = None;
        if let Some(t) = tgt {
            let x_tgt_clean = batch_input(&mut g, t)?;
            let lp_tgt_clean = clf.logprobs(&mut g, &h_clf, x_tgt_clean)?;
            let phat_tgt = g.stop_gradient(lp_tgt_clean)?;
            phat_all = g.concat(&[phat_src, phat_tgt])?;
            tgt_clean = Some(lp_tgt_clean);
            tags.extend_from_slice(&t.domains);
        }
        if cfg.mode == Mode::Da {
            let lp_tgt_clean = tgt_clean
                .ok_or_else(|| Error::Config("adaptation training step without target batch".into()))?;
            parts.l_e = Some(losses::entropy_min(&mut g, lp_tgt_clean)?);
        }

        // (3a) random-op branch
        let policy = AugmentPolicy::new(cfg.n_aug, cfg.m_aug)?;
        let mut aug_src_images: Option<ImageBatch> = None;
        let mut aug_tgt_images: Option<ImageBatch> = None;
        if let Some(set) = rnd_set {
            let aug_src = augment::augment_batch(src, policy, set, rng)?;
            let x_aug_src = batch_input(&mut g, &aug_src)?;
            let lp_aug_src = clf.logprobs(&mut g, &h_clf, x_aug_src)?;
            let lp_aug_all = if let Some(t) = tgt {
                let aug_tgt = augment::augment_batch(t, policy, set, rng)?;
                let x_aug_tgt = batch_input(&mut g, &aug_tgt)?;
                let lp_aug_tgt = clf.logprobs(&mut g, &h_clf, x_aug_tgt)?;
                aug_tgt_images = Some(aug_tgt);
                g.concat(&[lp_aug_src, lp_aug_tgt])?
            } else {
                lp_aug_src
            };
            aug_src_images = Some(aug_src);
            parts.l_c = Some(losses::kl_consistency(&mut g, phat_all, lp_aug_all)?);
        }

        // (3b) adversarial branch: gradient reversal drives θ_t toward the
        // worst-case transform while θ_m keeps descending
        if use_stn {
            let net: &LocalizationNet =
                stn.as_deref().ok_or_else(|| Error::Config("strategy needs a localization net".into()))?;
            let hs = net.bind(&mut g);
            // adv-stn-color feeds the color-augmented images to the transformer
            let src_in = aug_src_images.as_ref().unwrap_or(src);
            let x_src_in = batch_input(&mut g, src_in)?;
            let x_in = if let Some(t) = tgt {
                let tgt_in = aug_tgt_images.as_ref().unwrap_or(t);
                let x_tgt_in = batch_input(&mut g, tgt_in)?;
                g.concat(&[x_src_in, x_tgt_in])?
            } else {
                x_src_in
            };
            let transformed = adversarial_transform(&mut g, net, &hs, x_in)?;
            let lp_adv = clf.logprobs(&mut g, &h_clf, transformed)?;
            parts.l_adv = Some(losses::kl_consistency(&mut g, phat_all, lp_adv)?);
            h_stn = Some(hs);
        }
    }

    let total = losses::total_loss(&mut g, cfg.mode, &parts, &cfg.weights, &tags)?;
    let total_v = g.value(total) as f64;
    if !total_v.is_finite() {
        let value_of = |t: Option<Tensor>| t.map(|t| g.value(t) as f64).unwrap_or(0.0);
        let mut diag = format!(
            "l_m {} l_c {} l_e {} l_adv {}; {}",
            g.value(parts.l_m),
            value_of(parts.l_c),
            value_of(parts.l_e),
            value_of(parts.l_adv),
            batch_stats("source batch", src),
        );
        if let Some(t) = tgt {
            diag.push_str("; ");
            diag.push_str(&batch_stats("target batch", t));
        }
        return Err(Error::NanLoss { epoch, step, diagnostics: diag });
    }
    g.backward(total)?;

    let value_of = |t: Option<Tensor>| t.map(|t| g.value(t) as f64).unwrap_or(0.0);
    let stats = StepStats {
        l_m: g.value(parts.l_m) as f64,
        l_c: value_of(parts.l_c),
        l_e: value_of(parts.l_e),
        l_adv: value_of(parts.l_adv),
        total: total_v,
    };

    // (4) simultaneous SGD step on θ_m and θ_t
    clf.params.sgd_step(&g, &h_clf, lr as f32)?;
    if let (Some(net), Some(hs)) = (stn, h_stn) {
        net.params.sgd_step(&g, &hs, lr as f32)?;
    }
    Ok(stats)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub lambda_c: f64,
    pub lambda_t: f64,
    pub mean_target_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

/// Grid sweep over (λ_c, λ_t): one full multi-seed train per cell.
pub fn sweep(
    cfg: &TrainConfig,
    datasets: &[Dataset],
    grid_c: &[f64],
    grid_t: &[f64],
) -> Result<SweepReport> {
    if grid_c.is_empty() || grid_t.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let mut cells = Vec::with_capacity(grid_c.len() * grid_t.len());
    for &lc in grid_c {
        for &lt in grid_t {
            let mut c = cfg.clone();
            c.weights.lambda_c = lc;
            c.weights.lambda_t = lt;
            let outcome = train(&c, datasets)?;
            cells.push(SweepCell {
                lambda_c: lc,
                lambda_t: lt,
                mean_target_acc: outcome.report.mean_target_acc,
            });
        }
    }
    Ok(SweepReport { cells })
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("lambda_c,lambda_t,mean_target_acc\n");
    for c in &report.cells {
        writeln!(out, "{},{},{}", c.lambda_c, c.lambda_t, c.mean_target_acc).unwrap();
    }
    out
}
