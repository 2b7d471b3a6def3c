//! Joint end-to-end training of the embedding and the graph classifier.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Csr, ParamStore, Tape, Tensor, Var};
use crate::embed::{DimTransform, EmbedConfig, EmbedNet};
use crate::error::{ensure, Error, Result};
use crate::eval::{split_records, ConfusionMatrix, DatasetSplit, MetricsReport, SplitConfig};
use crate::knn::{build_knn_graph, complete_support};
use crate::sel::{
    apply_mask, cross_entropy, propagate_on_tape, sel_loss, smoothed_one_hot, SelConfig, SelNetwork, SoftLabelMatrix,
    TransitionMatrix, LOG_CLIP,
};
use crate::siggen::SignalRecord;

/// Model variants compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    /// Flattened IQ through an MLP instead of the graph embedding.
    DimTransformInsteadOfEmbedding,
    /// Every node attends to every node instead of its KNN neighbourhood.
    CompleteGraphInsteadOfKnn,
    /// Classifier head on GAT features, with no label propagation.
    GatOnlyInsteadOfGatLpa,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::DimTransformInsteadOfEmbedding,
        Variant::CompleteGraphInsteadOfKnn,
        Variant::GatOnlyInsteadOfGatLpa,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::DimTransformInsteadOfEmbedding => "dim-transform-instead-of-embedding",
            Variant::CompleteGraphInsteadOfKnn => "complete-graph-instead-of-knn",
            Variant::GatOnlyInsteadOfGatLpa => "gat-only-instead-of-gat-lpa",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Neighbours per node in the sample graph.
    pub knn_k: usize,
    /// Rebuild the sample graph every this many epochs.
    pub refresh_every: usize,
    /// Kept for reference; every step uses the whole graph.
    pub batch_size: usize,
    /// Check attention, soft-label and mask invariants every epoch.
    pub verify: bool,
    pub dim_transform_antennas: usize,
    pub dim_transform_hidden: usize,
    /// SNR bins of the per-SNR tables; the distinct rounded SNRs of the
    /// data when absent.
    pub snr_grid: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 1e-3,
            knn_k: 10,
            refresh_every: 10,
            batch_size: 64,
            verify: false,
            dim_transform_antennas: 2,
            dim_transform_hidden: 128,
            snr_grid: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.knn_k > 0, Error::Config("knn_k must be positive".into()));
        ensure!(self.refresh_every > 0, Error::Config("refresh_every must be positive".into()));
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            Error::Config("learning_rate must be positive".into())
        );
        ensure!(self.dim_transform_antennas > 0, Error::Config("dim_transform_antennas must be positive".into()));
        if let Some(g) = &self.snr_grid {
            ensure!(
                !g.is_empty() && g.iter().all(|s| s.is_finite()),
                Error::Config("snr_grid must be a nonempty list of finite values".into())
            );
        }
        Ok(())
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed: EmbedConfig,
    pub sel: SelConfig,
    pub train: TrainConfig,
}

/// One row of the metrics history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// `train` rows score the hidden (masked) labels; `val` rows the
    /// validation records.
    pub split: &'static str,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    pub variant: Variant,
    /// Class ids present in the data; model outputs and confusion
    /// matrices are indexed by position in this list.
    pub class_ids: Vec<usize>,
    pub split: DatasetSplit,
    pub history: Vec<EpochMetrics>,
    /// Epoch whose parameters scored best on validation.
    pub best_epoch: usize,
    pub val: MetricsReport,
    pub test: MetricsReport,
    /// Parameters at `best_epoch`.
    pub params: ParamStore,
    /// Epochs whose invariants were checked.
    pub verified_epochs: usize,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone)]
enum Embedder {
    Graph(EmbedNet),
    Dim(DimTransform),
}

impl Embedder {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, records: &[&SignalRecord]) -> Result<Var> {
        match self {
            Embedder::Graph(net) => Ok(net.forward(tape, store, records)?.embedding),
            Embedder::Dim(d) => d.forward(tape, store, records),
        }
    }
}

/// Seed of the mask drawn at `epoch` of the run seeded with `seed`.
fn mask_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (epoch as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn argmax(row: &[f64]) -> usize {
    (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b })
}

fn truth_of(records: &[SignalRecord]) -> Result<Vec<usize>> {
    records
        .iter()
        .map(|r| {
            r.label
                .map(|l| l.class_id())
                .ok_or_else(|| Error::Contract(format!("record {} has no ground truth", r.id)))
        })
        .collect()
}

/// Distinct SNRs present, rounded to whole dB.
pub fn snr_grid(records: &[SignalRecord]) -> Vec<f64> {
    let mut g: Vec<f64> = records.iter().map(|r| r.snr_db().round()).filter(|s| s.is_finite()).collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    if g.is_empty() {
        g.push(0.0);
    }
    g
}

fn check_rows(t: &Tensor, what: &str) -> Result<()> {
    for i in 0..t.rows() {
        let s: f64 = t.row(i).iter().sum();
        ensure!(
            (s - 1.0).abs() <= 1e-10 && t.row(i).iter().all(|&v| v >= -1e-15),
            Error::Invariant(format!("{what} row {i} sums to {s}"))
        );
    }
    Ok(())
}

/// Plain cross-entropy of probability rows against smoothed targets.
fn plain_ce(probs: &Tensor, rows: &[usize], truth: &[usize], eps: f64) -> f64 {
    let c = probs.cols();
    let total: f64 = rows
        .iter()
        .map(|&i| {
            let t = smoothed_one_hot(truth[i], c, eps);
            -t.iter().zip(probs.row(i)).map(|(a, p)| a * p.max(LOG_CLIP).ln()).sum::<f64>()
        })
        .sum();
    total / rows.len().max(1) as f64
}

fn score(pred: &[usize], rows: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    let t: Vec<usize> = rows.iter().map(|&i| truth[i]).collect();
    let p: Vec<usize> = rows.iter().map(|&i| pred[i]).collect();
    ConfusionMatrix::from_predictions(&p, &t, classes)
}

/// Sorted distinct class ids, and every label as an index into them.
pub fn compact_labels(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut ids = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let index = labels.iter().map(|l| ids.binary_search(l).expect("id is present")).collect();
    (ids, index)
}

fn build_model(cfg: &ModelConfig, variant: Variant, classes: usize, seed: u64) -> Result<(ParamStore, Embedder, SelNetwork)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let tc = &cfg.train;
    let embedder = match variant {
        Variant::DimTransformInsteadOfEmbedding => Embedder::Dim(DimTransform::new(
            &mut store,
            tc.dim_transform_antennas,
            cfg.embed.input_length,
            tc.dim_transform_hidden,
            cfg.embed.embed_dim,
            cfg.embed.leaky_slope,
            &mut rng,
        )?),
        _ => Embedder::Graph(EmbedNet::new(cfg.embed.clone(), &mut store, &mut rng)?),
    };
    let net = SelNetwork::new(cfg.sel.clone(), cfg.embed.embed_dim, classes, &mut store, &mut rng)?;
    Ok((store, embedder, net))
}

fn sample_support(variant: Variant, embeddings: &Tensor, k: usize) -> Result<Csr> {
    match variant {
        Variant::CompleteGraphInsteadOfKnn => complete_support(embeddings.rows()),
        _ => build_knn_graph(embeddings.data(), embeddings.cols(), k)?.symmetric_support(),
    }
}

/// Class predictions of trained parameters for every record, with the
/// labels of `split.train_labeled` visible to propagation. Returned classes
/// are positions in the sorted list of class ids present in `records`.
pub fn predict(
    records: &[SignalRecord],
    split: &DatasetSplit,
    cfg: &ModelConfig,
    variant: Variant,
    params: &ParamStore,
) -> Result<Vec<usize>> {
    let (class_ids, truth) = compact_labels(&truth_of(records)?);
    let (mut store, embedder, net) = build_model(cfg, variant, class_ids.len(), 0)?;
    let copied = store.copy_values_from(params)?;
    ensure!(
        copied == store.len() && copied == params.len(),
        Error::Contract(format!(
            "parameters do not match the model: {copied} shared of {} and {}",
            store.len(),
            params.len()
        ))
    );
    let n = records.len();
    let refs: Vec<&SignalRecord> = records.iter().collect();
    let mut tape = Tape::new();
    let emb = embedder.forward(&mut tape, &store, &refs)?;
    let sup = Arc::new(sample_support(variant, tape.value(emb), cfg.train.knn_k)?);
    let scores = if variant == Variant::GatOnlyInsteadOfGatLpa {
        let fwd = net.forward(&mut tape, &store, emb, &sup, None)?;
        tape.value(fwd.residual).clone()
    } else {
        let mut visible: Vec<Option<usize>> = vec![None; n];
        for &i in &split.train_labeled {
            visible[i] = Some(truth[i]);
        }
        let labels = SoftLabelMatrix::new(&visible, class_ids.len(), cfg.sel.label_smoothing)?;
        let fwd = net.forward(&mut tape, &store, emb, &sup, Some(&labels))?;
        let mut sc = tape.value(fwd.f_lpa.expect("labels were supplied")).clone();
        sc.data_mut().iter_mut().zip(tape.value(fwd.residual).data()).for_each(|(a, r)| *a += r);
        sc
    };
    Ok((0..n).map(|i| argmax(scores.row(i))).collect())
}

/// Validation and test reports of trained parameters.
pub fn evaluate(
    records: &[SignalRecord],
    split: &DatasetSplit,
    cfg: &ModelConfig,
    variant: Variant,
    params: &ParamStore,
    grid: &[f64],
) -> Result<(MetricsReport, MetricsReport)> {
    let start = Instant::now();
    let (class_ids, truth) = compact_labels(&truth_of(records)?);
    let pred = predict(records, split, cfg, variant, params)?;
    let report = |rows: &[usize]| -> Result<MetricsReport> {
        let p: Vec<usize> = rows.iter().map(|&i| pred[i]).collect();
        let t: Vec<usize> = rows.iter().map(|&i| truth[i]).collect();
        let s: Vec<f64> = rows.iter().map(|&i| records[i].snr_db()).collect();
        let mut r = MetricsReport::new(&p, &t, &s, grid, class_ids.len())?;
        r.runtime_secs = start.elapsed().as_secs_f64();
        Ok(r)
    };
    Ok((report(&split.val)?, report(&split.test)?))
}

/// Trains one seeded run on preprocessed, labeled records.
///
/// Epoch `e` evaluates the parameters after `e` optimizer steps, so the
/// history has `epochs + 1` entries per split and the last entry takes no
/// step.
pub fn train_run(
    records: &[SignalRecord],
    split: &DatasetSplit,
    cfg: &ModelConfig,
    variant: Variant,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.train.validate()?;
    cfg.sel.validate()?;
    let start = Instant::now();
    let n = records.len();
    let (class_ids, truth) = compact_labels(&truth_of(records)?);
    ensure!(class_ids.len() >= 2, Error::Contract("training needs at least two classes".into()));
    ensure!(
        !split.train_labeled.is_empty() && !split.val.is_empty() && !split.test.is_empty(),
        Error::Contract("every split part must be nonempty".into())
    );
    ensure!(n > cfg.train.knn_k, Error::Contract(format!("{n} records for k = {}", cfg.train.knn_k)));
    let (classes, eps, tc) = (class_ids.len(), cfg.sel.label_smoothing, &cfg.train);
    let (mut store, embedder, net) = build_model(cfg, variant, classes, seed)?;
    let mut adam = AdamState::new(&store, tc.learning_rate);

    let mut visible: Vec<Option<usize>> = vec![None; n];
    for &i in &split.train_labeled {
        visible[i] = Some(truth[i]);
    }
    let full_labels = SoftLabelMatrix::new(&visible, classes, eps)?;
    let labeled_rows = Arc::new(split.train_labeled.clone());
    let labeled_targets = Tensor::matrix(
        labeled_rows.len(),
        classes,
        labeled_rows.iter().flat_map(|&i| smoothed_one_hot(truth[i], classes, eps)).collect(),
    )?;
    let refs: Vec<&SignalRecord> = records.iter().collect();
    let mut support: Option<Arc<Csr>> = None;
    let mut history = Vec::with_capacity(2 * (tc.epochs + 1));
    let mut best: Option<(f64, usize, Vec<usize>, ParamStore)> = None;
    let mut verified = 0;

    for epoch in 0..=tc.epochs {
        let mut tape = Tape::new();
        let emb = embedder.forward(&mut tape, &store, &refs)?;
        let refresh = support.is_none() || (variant != Variant::CompleteGraphInsteadOfKnn && epoch % tc.refresh_every == 0);
        if refresh {
            support = Some(Arc::new(sample_support(variant, tape.value(emb), tc.knn_k)?));
        }
        let sup = support.as_ref().expect("support is built on the first epoch");
        if refresh && log::log_enabled!(log::Level::Debug) {
            let same = (0..n).map(|i| sup.row(i).iter().filter(|&&j| j != i && truth[j] == truth[i]).count()).sum::<usize>();
            debug!("epoch {epoch}: sample graph label agreement {:.3}", same as f64 / (sup.nnz() - n).max(1) as f64);
        }

        let (loss, loss_rows, probs, scores) = if variant == Variant::GatOnlyInsteadOfGatLpa {
            let fwd = net.forward(&mut tape, &store, emb, sup, None)?;
            let probs = tape.softmax_rows(fwd.residual, None)?;
            let loss = cross_entropy(&mut tape, probs, &labeled_targets, &labeled_rows)?;
            if tc.verify {
                for &w in &fwd.layer_weights {
                    TransitionMatrix::from_edge_weights(tape.value(w).data().to_vec(), Arc::clone(sup))?;
                }
                check_rows(tape.value(probs), "class probability")?;
                verified += 1;
            }
            (loss, split.train_labeled.clone(), tape.value(probs).clone(), tape.value(fwd.residual).clone())
        } else {
            let (input, masked) = apply_mask(&visible, cfg.sel.mask_rate, mask_seed(seed, epoch))?;
            let soft = SoftLabelMatrix::new(&input, classes, eps)?;
            let fwd = net.forward(&mut tape, &store, emb, sup, Some(&soft))?;
            let f_lpa = fwd.f_lpa.expect("labels were supplied");
            let rows = Arc::new(masked.clone());
            let hidden: Vec<usize> = masked.iter().map(|&i| truth[i]).collect();
            let loss = sel_loss(&mut tape, f_lpa, fwd.residual, &hidden, &rows, eps, cfg.sel.lambda)?;
            // Inference view: every training label visible, same parameters.
            let f_all = propagate_on_tape(
                &mut tape,
                fwd.transition,
                sup,
                &full_labels.f,
                &full_labels.labeled,
                cfg.sel.lpa_iters,
                cfg.sel.lpa_tol,
            )?;
            if tc.verify {
                for &w in &fwd.layer_weights {
                    TransitionMatrix::from_edge_weights(tape.value(w).data().to_vec(), Arc::clone(sup))?;
                }
                TransitionMatrix::from_edge_weights(tape.value(fwd.transition).data().to_vec(), Arc::clone(sup))?;
                soft.check()?;
                soft.check_no_leak(&masked)?;
                full_labels.check()?;
                check_rows(tape.value(f_lpa), "propagated label")?;
                check_rows(tape.value(f_all), "propagated label")?;
                verified += 1;
            }
            if log::log_enabled!(log::Level::Debug) {
                let p = tape.value(fwd.transition).data();
                let diag: f64 = (0..n).map(|i| sup.find(i, i).map_or(0.0, |e| p[e])).sum::<f64>() / n as f64;
                let same: f64 = (0..n).map(|i| sup.row_range(i).filter(|&e| truth[sup.col_idx()[e]] == truth[i]).map(|e| p[e]).sum::<f64>()).sum::<f64>() / n as f64;
                debug!("epoch {epoch}: mean self weight {diag:.3}, same-class weight {same:.3}");
            }
            let fa = tape.value(f_all);
            let res = tape.value(fwd.residual);
            let mut sc = fa.clone();
            sc.data_mut().iter_mut().zip(res.data()).for_each(|(a, r)| *a += r);
            // Training accuracy scores the hidden nodes on the masked propagation.
            let mut train_scores = tape.value(f_lpa).clone();
            train_scores.data_mut().iter_mut().zip(res.data()).for_each(|(a, r)| *a += r);
            let train_pred: Vec<usize> = masked.iter().map(|&i| argmax(train_scores.row(i))).collect();
            let cm = ConfusionMatrix::from_predictions(&train_pred, &hidden, classes)?;
            history.push(EpochMetrics {
                epoch,
                split: "train",
                accuracy: cm.accuracy(),
                macro_precision: cm.macro_precision(),
                loss: tape.value(loss.total).item()?,
            });
            (loss.total, Vec::new(), fa.clone(), sc)
        };

        let pred: Vec<usize> = (0..n).map(|i| argmax(scores.row(i))).collect();
        if !loss_rows.is_empty() {
            let cm = score(&pred, &loss_rows, &truth, classes)?;
            history.push(EpochMetrics {
                epoch,
                split: "train",
                accuracy: cm.accuracy(),
                macro_precision: cm.macro_precision(),
                loss: tape.value(loss).item()?,
            });
        }
        let val_cm = score(&pred, &split.val, &truth, classes)?;
        let val_acc = val_cm.accuracy();
        history.push(EpochMetrics {
            epoch,
            split: "val",
            accuracy: val_acc,
            macro_precision: val_cm.macro_precision(),
            loss: plain_ce(&probs, &split.val, &truth, eps),
        });
        debug!("seed {seed} {variant} epoch {epoch}: loss {:.4} val {val_acc:.3}", tape.value(loss).item()?);
        if best.as_ref().map_or(true, |b| val_acc > b.0) {
            best = Some((val_acc, epoch, pred, store.clone()));
        }
        if epoch < tc.epochs {
            let grads = tape.backward(loss)?;
            store.zero_grad();
            grads.accumulate_into(&mut store)?;
            adam.step(&mut store)?;
        }
    }

    let (_, best_epoch, pred, params) = best.expect("at least one epoch ran");
    let grid = tc.snr_grid.clone().unwrap_or_else(|| snr_grid(records));
    let report = |rows: &[usize]| -> Result<MetricsReport> {
        let p: Vec<usize> = rows.iter().map(|&i| pred[i]).collect();
        let t: Vec<usize> = rows.iter().map(|&i| truth[i]).collect();
        let s: Vec<f64> = rows.iter().map(|&i| records[i].snr_db()).collect();
        let mut r = MetricsReport::new(&p, &t, &s, &grid, classes)?;
        r.seeds = vec![seed];
        Ok(r)
    };
    let runtime_secs = start.elapsed().as_secs_f64();
    let mut test = report(&split.test)?;
    test.runtime_secs = runtime_secs;
    let mut val = report(&split.val)?;
    val.runtime_secs = runtime_secs;
    info!(
        "seed {seed} {variant}: best epoch {best_epoch}, test accuracy {:.4}, macro precision {:.4}, {runtime_secs:.1}s",
        test.accuracy, test.macro_precision
    );
    Ok(TrainOutcome {
        seed,
        variant,
        class_ids,
        split: split.clone(),
        history,
        best_epoch,
        val,
        test,
        params,
        verified_epochs: verified,
        runtime_secs,
    })
}

/// One run per seed, each with its own split of the same records.
pub fn train_seeds(
    records: &[SignalRecord],
    split_cfg: &SplitConfig,
    cfg: &ModelConfig,
    variant: Variant,
    seeds: &[u64],
) -> Result<Vec<TrainOutcome>> {
    seeds
        .iter()
        .map(|&s| {
            let split = split_records(records, split_cfg, s)?;
            train_run(records, &split, cfg, variant, s)
        })
        .collect()
}
