//! Experiment harness on synthetic data: Gaussian pixel clusters, bootstrap
//! subsets, leave-one-out confusion matrices and the scaling-factor sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, ImageVector, Sample};
use crate::flda::{classify_plain, train, FldaError, TrainOptions};
use crate::paillier::{keygen, PaillierError, PrivateKey};
use crate::par::Exec;
use crate::protocol::{run_session, ClientConfig, ClientSession, ProtocolError, ServerConfig, ServerSession};
use crate::quantizer::{quantize_model, QuantizeError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("class {class} has {available} distinct subjects, {needed} needed")]
    InsufficientSubjects {
        class: usize,
        available: usize,
        needed: usize,
    },
    #[error("leaving out sample {index} leaves fewer than two classes")]
    ClassVanished { index: usize },
    #[error("at scale {scale}, test image {index}: encrypted label {encrypted} but quantized label {quantized}")]
    Disagreement {
        scale: u64,
        index: usize,
        encrypted: usize,
        quantized: usize,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Flda(#[from] FldaError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub class_count: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Images are `side x side`.
    pub side: usize,
    /// Cluster centres are `128 + separation * u` with `u` uniform in `[-1, 1]^n`.
    pub separation: f64,
    /// Per-pixel standard deviation around the centre.
    pub noise: f64,
    pub scales: Vec<u64>,
    /// Pool size per class that bootstrap subsets are drawn from.
    pub pool_per_class: usize,
    pub subsets: usize,
    pub subset_per_class: usize,
    /// Scale used by the leave-one-out pipeline.
    pub loo_scale: u64,
    pub pca_dims: Option<usize>,
    pub flda_dims: Option<usize>,
    /// Test images per scale sent through the encrypted protocol.
    pub encrypted_samples: usize,
    pub key_bits: u64,
    pub kappa: u32,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            class_count: 3,
            train_per_class: 8,
            test_per_class: 4,
            side: 12,
            separation: 40.0,
            noise: 12.0,
            scales: vec![1, 10, 100, 1000, 10_000],
            pool_per_class: 30,
            subsets: 10,
            subset_per_class: 24,
            loo_scale: 10_000,
            pca_dims: None,
            flda_dims: None,
            encrypted_samples: 12,
            key_bits: 512,
            kappa: crate::protocol::DEFAULT_KAPPA,
            seed: 1,
            exec: Exec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Config(m.into()));
        if self.class_count < 2 {
            return bad("need at least two classes");
        }
        if self.side == 0 {
            return bad("image side must be positive");
        }
        if self.train_per_class < 2 || self.subset_per_class < 2 {
            return bad("per-class training counts must be at least 2");
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return bad("separation must be finite and nonnegative");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise must be finite and nonnegative");
        }
        if self.scales.is_empty() {
            return bad("scale list is empty");
        }
        Ok(())
    }

    pub fn label_names(&self) -> Vec<String> {
        (0..self.class_count).map(|c| format!("class{c}")).collect()
    }
}

/// `per_class` samples from each of `cfg.class_count` Gaussian clusters.
/// Sample `k` of each class gets subject id `k`.
pub fn synth_dataset(cfg: &ExperimentConfig, per_class: usize, seed: u64) -> Result<Dataset, EvalError> {
    cfg.validate()?;
    if per_class == 0 {
        return Err(EvalError::Config("per-class count must be positive".into()));
    }
    let n = cfg.side * cfg.side;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..cfg.class_count)
        .map(|_| {
            (0..n)
                .map(|_| 128.0 + cfg.separation * rng.gen_range(-1.0..=1.0))
                .collect()
        })
        .collect();
    let normal = Normal::new(0.0, cfg.noise).map_err(|e| EvalError::Config(e.to_string()))?;
    let mut samples = Vec::with_capacity(per_class * cfg.class_count);
    for (label, center) in centers.iter().enumerate() {
        for k in 0..per_class {
            let pixels = center
                .iter()
                .map(|&c| (c + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
                .collect();
            samples.push(Sample {
                image: ImageVector::new(pixels),
                label,
                subject: Some(k as u32),
            });
        }
    }
    Ok(Dataset::new(cfg.label_names(), samples)?.with_shape(cfg.side, cfg.side))
}

/// Split each class so its first `train_per_class` samples train and the
/// rest test.
pub fn split_per_class(ds: &Dataset, train_per_class: usize) -> (Dataset, Dataset) {
    let mut seen = vec![0usize; ds.class_count()];
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for (i, s) in ds.samples().iter().enumerate() {
        if seen[s.label] < train_per_class {
            train_idx.push(i);
        } else {
            test_idx.push(i);
        }
        seen[s.label] += 1;
    }
    (ds.select(&train_idx), ds.select(&test_idx))
}

/// Train and test sets drawn from the same clusters.
pub fn synth_split(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), EvalError> {
    let ds = synth_dataset(cfg, cfg.train_per_class + cfg.test_per_class, cfg.seed)?;
    Ok(split_per_class(&ds, cfg.train_per_class))
}

/// `subset_count` subsets with `per_class` samples of every class. Within a
/// subset no subject repeats inside a class; samples without a subject id
/// count as their own subject. Subsets are drawn independently of each other.
pub fn bootstrap_subsets(
    ds: &Dataset,
    subset_count: usize,
    per_class: usize,
    seed: u64,
) -> Result<Vec<Dataset>, EvalError> {
    let mut by_class: Vec<BTreeMap<u64, Vec<usize>>> = vec![BTreeMap::new(); ds.class_count()];
    for (i, s) in ds.samples().iter().enumerate() {
        let subject = s.subject.map_or(u64::MAX - i as u64, u64::from);
        by_class[s.label].entry(subject).or_default().push(i);
    }
    for (class, subjects) in by_class.iter().enumerate() {
        if subjects.len() < per_class {
            return Err(EvalError::InsufficientSubjects {
                class,
                available: subjects.len(),
                needed: per_class,
            });
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let groups: Vec<Vec<&Vec<usize>>> = by_class.iter().map(|m| m.values().collect()).collect();
    Ok((0..subset_count)
        .map(|_| {
            let mut picked = Vec::with_capacity(per_class * groups.len());
            for subjects in &groups {
                for k in sample(&mut rng, subjects.len(), per_class).into_iter() {
                    let options = subjects[k];
                    picked.push(options[rng.gen_range(0..options.len())]);
                }
            }
            ds.select(&picked)
        })
        .collect())
}

#[derive(Clone, Copy, Debug)]
pub struct Pipeline {
    pub pca_dims: Option<usize>,
    pub flda_dims: Option<usize>,
    pub scale: u64,
    pub exec: Exec,
}

/// Row-normalized confusion matrix: `percent[t][p]` is the share of class
/// `t` samples predicted as `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub percent: Vec<Vec<f64>>,
    pub accuracy: f64,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<usize>>) -> Self {
        let total: usize = counts.iter().flatten().sum();
        let correct: usize = (0..counts.len()).map(|i| counts[i][i]).sum();
        let percent = counts
            .iter()
            .map(|row| {
                let n: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
                    .collect()
            })
            .collect();
        ConfusionMatrix {
            counts,
            percent,
            accuracy: if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 },
        }
    }

    /// Element-wise mean of the percentage matrices and accuracies; counts
    /// are summed.
    pub fn average(matrices: &[ConfusionMatrix]) -> Option<ConfusionMatrix> {
        let first = matrices.first()?;
        let c = first.counts.len();
        let k = matrices.len() as f64;
        let mut counts = vec![vec![0; c]; c];
        let mut percent = vec![vec![0.0; c]; c];
        for m in matrices {
            for i in 0..c {
                for j in 0..c {
                    counts[i][j] += m.counts[i][j];
                    percent[i][j] += m.percent[i][j] / k;
                }
            }
        }
        Some(ConfusionMatrix {
            counts,
            percent,
            accuracy: matrices.iter().map(|m| m.accuracy).sum::<f64>() / k,
        })
    }

    pub fn to_csv(&self, label_names: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for name in label_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in label_names.iter().zip(&self.percent) {
            out.push_str(name);
            for p in row {
                write!(out, ",{p:.2}").unwrap();
            }
            out.push('\n');
        }
        writeln!(out, "accuracy,{:.2}", self.accuracy).unwrap();
        out
    }
}

/// Train on all samples but one, classify the held-out sample with the
/// quantized model, and tally.
pub fn leave_one_out(subset: &Dataset, pipeline: &Pipeline) -> Result<ConfusionMatrix, EvalError> {
    let c = subset.class_count();
    let opts = TrainOptions {
        pca_dims: pipeline.pca_dims,
        flda_dims: pipeline.flda_dims,
        exec: Exec::Sequential,
    };
    let indices: Vec<usize> = (0..subset.len()).collect();
    let predictions = pipeline.exec.try_map(&indices, |&i| {
        let fold = subset.without(i);
        if fold.class_counts().iter().filter(|&&k| k > 0).count() < 2 {
            return Err(EvalError::ClassVanished { index: i });
        }
        let model = train(&fold, &opts)?;
        let q = quantize_model(&model, pipeline.scale)?;
        let held = &subset.samples()[i];
        Ok((held.label, q.classify(&held.image)?.label))
    })?;
    let mut counts = vec![vec![0; c]; c];
    for (t, p) in predictions {
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix::from_counts(counts))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub scale: u64,
    pub quantized_plain_acc: f64,
    /// Accuracy over the encrypted sample, when one was run.
    pub encrypted_acc: Option<f64>,
    pub plain_acc: f64,
    pub encrypted_count: usize,
}

/// Key and session settings for the encrypted half of the sweep.
#[derive(Clone, Debug)]
pub struct EncryptedCheck {
    pub sk: PrivateKey,
    pub samples: usize,
    pub kappa: u32,
    pub seed: u64,
}

fn percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

/// Classify one image through the full protocol over the loopback transport.
pub fn classify_encrypted_loopback(
    q: Arc<crate::quantizer::QuantizedModel>,
    sk: &PrivateKey,
    image: &ImageVector,
    kappa: u32,
    seed: u64,
    exec: Exec,
) -> Result<usize, EvalError> {
    let client = ClientSession::new(
        sk.clone(),
        image.clone(),
        ClientConfig {
            kappa,
            exec,
            seed: Some(seed),
            ..ClientConfig::default()
        },
    );
    let server = ServerSession::new(
        q,
        ServerConfig {
            kappa,
            exec,
            seed: Some(seed ^ 0x5eed_5eed_5eed_5eed),
            ..ServerConfig::default()
        },
    );
    Ok(run_session(client, server)?.1.label_code)
}

/// Plain, quantized-plain and (optionally) encrypted accuracy of a model
/// trained on `train_set`, for each scale. The encrypted path must agree with
/// the quantized path on every sampled image.
pub fn scaling_sweep(
    train_set: &Dataset,
    test_set: &Dataset,
    scales: &[u64],
    opts: &TrainOptions,
    encrypted: Option<&EncryptedCheck>,
) -> Result<Vec<SweepRow>, EvalError> {
    let model = train(train_set, opts)?;
    let tests = test_set.samples();
    let plain_correct = opts
        .exec
        .try_map(tests, |s| classify_plain(&model, &s.image).map(|d| d.label == s.label))?
        .into_iter()
        .filter(|&ok| ok)
        .count();
    let plain_acc = percent(plain_correct, tests.len());

    let mut rows = Vec::with_capacity(scales.len());
    for (si, &scale) in scales.iter().enumerate() {
        let q = Arc::new(quantize_model(&model, scale)?);
        let predicted = opts
            .exec
            .try_map(tests, |s| q.classify(&s.image).map(|d| d.label))?;
        let correct = predicted.iter().zip(tests).filter(|(p, s)| **p == s.label).count();

        let (encrypted_acc, encrypted_count) = match encrypted {
            None => (None, 0),
            Some(check) => {
                let count = check.samples.min(tests.len());
                let mut ok = 0;
                for i in 0..count {
                    let session_seed = check.seed.wrapping_add((si * tests.len() + i) as u64);
                    let label = classify_encrypted_loopback(
                        Arc::clone(&q),
                        &check.sk,
                        &tests[i].image,
                        check.kappa,
                        session_seed,
                        opts.exec,
                    )?;
                    if label != predicted[i] {
                        return Err(EvalError::Disagreement {
                            scale,
                            index: i,
                            encrypted: label,
                            quantized: predicted[i],
                        });
                    }
                    ok += usize::from(label == tests[i].label);
                }
                (Some(percent(ok, count)), count)
            }
        };
        rows.push(SweepRow {
            scale,
            quantized_plain_acc: percent(correct, tests.len()),
            encrypted_acc,
            plain_acc,
            encrypted_count,
        });
    }
    Ok(rows)
}

/// Smallest swept scale from which quantized accuracy equals plain accuracy
/// at every larger swept scale.
pub fn saturation_scale(rows: &[SweepRow]) -> Option<u64> {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.scale);
    let mut answer = None;
    for r in sorted.iter().rev() {
        if r.quantized_plain_acc != r.plain_acc {
            break;
        }
        answer = Some(r.scale);
    }
    answer
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.scale);
    let mut out = String::from("scale,quantized_plain_acc,encrypted_acc,plain_acc\n");
    for r in &sorted {
        let enc = r.encrypted_acc.map_or("NA".to_string(), |a| format!("{a:.2}"));
        writeln!(
            out,
            "{},{:.2},{},{:.2}",
            r.scale, r.quantized_plain_acc, enc, r.plain_acc
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub subset_matrices: Vec<ConfusionMatrix>,
    pub average: ConfusionMatrix,
    pub sweep: Vec<SweepRow>,
    pub label_names: Vec<String>,
}

impl EvalReport {
    /// File name and contents of every CSV report.
    pub fn csv_files(&self) -> Vec<(String, String)> {
        let mut files: Vec<(String, String)> = self
            .subset_matrices
            .iter()
            .enumerate()
            .map(|(k, m)| (format!("confusion_subset_{:02}.csv", k + 1), m.to_csv(&self.label_names)))
            .collect();
        files.push(("confusion_average.csv".into(), self.average.to_csv(&self.label_names)));
        files.push(("sweep.csv".into(), sweep_csv(&self.sweep)));
        files
    }

    pub fn write_csv(&self, dir: &Path) -> Result<(), EvalError> {
        let io = |e: std::io::Error, p: &Path| EvalError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
        for (name, text) in self.csv_files() {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| io(e, &path))?;
        }
        Ok(())
    }
}

/// The full experiment: leave-one-out over bootstrap subsets of a synthetic
/// pool, then a scaling sweep on a separate synthetic train/test split.
pub fn run_eval(cfg: &ExperimentConfig) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let pool = synth_dataset(cfg, cfg.pool_per_class, cfg.seed.wrapping_add(1))?;
    let subsets = bootstrap_subsets(&pool, cfg.subsets, cfg.subset_per_class, cfg.seed.wrapping_add(2))?;
    let pipeline = Pipeline {
        pca_dims: cfg.pca_dims,
        flda_dims: cfg.flda_dims,
        scale: cfg.loo_scale,
        exec: cfg.exec,
    };
    let subset_matrices = subsets
        .iter()
        .map(|s| leave_one_out(s, &pipeline))
        .collect::<Result<Vec<_>, _>>()?;
    let average = ConfusionMatrix::average(&subset_matrices)
        .unwrap_or_else(|| ConfusionMatrix::from_counts(vec![vec![0; cfg.class_count]; cfg.class_count]));

    let (train_set, test_set) = synth_split(cfg)?;
    let check = if cfg.encrypted_samples > 0 {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(3));
        let (_, sk) = keygen(cfg.key_bits, &mut rng)?;
        Some(EncryptedCheck {
            sk,
            samples: cfg.encrypted_samples,
            kappa: cfg.kappa,
            seed: cfg.seed.wrapping_add(4),
        })
    } else {
        None
    };
    let opts = TrainOptions {
        pca_dims: cfg.pca_dims,
        flda_dims: cfg.flda_dims,
        exec: cfg.exec,
    };
    let sweep = scaling_sweep(&train_set, &test_set, &cfg.scales, &opts, check.as_ref())?;
    Ok(EvalReport {
        subset_matrices,
        average,
        sweep,
        label_names: cfg.label_names(),
    })
}
