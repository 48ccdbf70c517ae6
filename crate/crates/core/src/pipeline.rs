//! End-to-end runs over dataset directories: train, evaluate, ablate, split,
//! diagnose, and sweep.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::diffgrad::Tensor2;
use crate::error::{Error, Result};
use crate::eval::{
    dataset_diagnostics, kmeans_nmi, linear_probe, link_auc, mad_suite, mean_std,
    normalize_inverse_smoothness, EmbeddingSet, KMeansOptions, MadOptions, ProbeOptions,
    Provenance,
};
use crate::graph::Graph;
use crate::io::{
    config_hash, link_split, load_dataset, node_split, read_pairs, reports_to_csv, write_atomic,
    write_dataset, write_json, write_pairs, MetricsReport, RunManifest,
};
use crate::objective::{Score, Terms};
use crate::rng::{tag, SeedStream};
use crate::sampling::sample_eval_negatives;
use crate::trainer::{load_checkpoint, save_checkpoint, TrainConfig, TrainState, Trainer};

pub const CHECKPOINT_FILE: &str = "checkpoint.sail";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TEST_EDGES_FILE: &str = "test_edges.tsv";
pub const TEST_NEGATIVES_FILE: &str = "test_negatives.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Cluster,
    Linkpred,
    Mad,
    Diagnostics,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Classify,
        Task::Cluster,
        Task::Linkpred,
        Task::Mad,
        Task::Diagnostics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Cluster => "cluster",
            Task::Linkpred => "linkpred",
            Task::Mad => "mad",
            Task::Diagnostics => "diagnostics",
        }
    }

    /// Comma-separated task names, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<Task>> {
        if s.trim() == "all" {
            return Ok(Task::ALL.to_vec());
        }
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let t = Task::ALL
                .into_iter()
                .find(|t| t.name() == part)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown task {part:?}")))?;
            if !out.contains(&t) {
                out.push(t);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("no tasks given".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub probe: ProbeOptions,
    pub kmeans: KMeansOptions,
    pub mad: MadOptions,
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name().map_or_else(
        || dir.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Trains on `g` and returns the final trainer.
pub fn fit(g: &Graph, cfg: &TrainConfig) -> Result<Trainer> {
    let mut t = Trainer::new(g, cfg.clone())?;
    t.run()?;
    Ok(t)
}

/// Student representations for `state` on `g` under `cfg`'s preprocessing.
pub fn embed(g: &Graph, cfg: &TrainConfig, state: TrainState) -> Result<Tensor2> {
    Trainer::with_state(g, cfg.clone(), state)?.embed()
}

/// `train`: checkpoint, JSON-lines log and manifest under `out`.
pub fn train_run(data: &Path, cfg: &TrainConfig, out: &Path) -> Result<RunManifest> {
    let (g, _) = load_dataset(data)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("train", data, cfg)?;
    let log_path = out.join(LOG_FILE);
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    let mut trainer = Trainer::new(&g, cfg.clone())?;
    trainer.run_with(|_, rec| {
        serde_json::to_writer(&mut log, rec)?;
        log.write_all(b"\n").map_err(|e| Error::io(&log_path, e))
    })?;
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    let ckpt = out.join(CHECKPOINT_FILE);
    save_checkpoint(trainer.state(), &ckpt)?;
    manifest
        .outputs
        .insert("checkpoint".into(), ckpt.display().to_string());
    manifest
        .outputs
        .insert("log".into(), log_path.display().to_string());
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Resolves node splits: the dataset's own, else a seeded 20/10/70 split.
pub fn node_splits(g: &Graph, seed: u64) -> (Vec<usize>, Option<Vec<usize>>, Vec<usize>) {
    match (g.split("train"), g.split("test")) {
        (Some(tr), Some(te)) => (
            tr.to_vec(),
            g.split("val").map(<[usize]>::to_vec),
            te.to_vec(),
        ),
        _ => {
            let [(_, tr), (_, va), (_, te)] = node_split(g.num_nodes(), 0.2, 0.1, seed);
            (tr, Some(va), te)
        }
    }
}

fn labels_of(g: &Graph, task: Task) -> Result<&[usize]> {
    g.labels().ok_or_else(|| {
        Error::Eval(format!(
            "labels required for task {} (labels.tsv missing)",
            task.name()
        ))
    })
}

/// Held-out positive and negative node pairs.
pub type LinkPairs = (Vec<(usize, usize)>, Vec<(usize, usize)>);

/// Held-out pairs for link prediction next to a split dataset.
pub fn link_pairs(data: &Path, g: &Graph, seed: u64) -> Result<LinkPairs> {
    let pos_path = data.join(TEST_EDGES_FILE);
    if !pos_path.exists() {
        return Err(Error::Eval(format!(
            "link prediction needs {} (run linksplit first)",
            pos_path.display()
        )));
    }
    let pos = read_pairs(&pos_path, g.num_nodes())?;
    let neg_path = data.join(TEST_NEGATIVES_FILE);
    let neg = if neg_path.exists() {
        read_pairs(&neg_path, g.num_nodes())?
    } else {
        let full = g.with_edges(g.edges().chain(pos.iter().copied()))?;
        sample_eval_negatives(
            &full,
            pos.len(),
            &mut SeedStream::new(seed).rng(tag::EVAL_NEGATIVES, 0),
        )?
    };
    Ok((pos, neg))
}

/// Evaluates `h` on `tasks`; `link` carries held-out pairs for `linkpred`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    g: &Graph,
    emb: &EmbeddingSet,
    tasks: &[Task],
    link: Option<&LinkPairs>,
    score: Score,
    opts: &EvalOptions,
    dataset: &str,
    cfg_hash: &str,
) -> Result<Vec<MetricsReport>> {
    let provenance = emb
        .provenance
        .checkpoint
        .clone()
        .unwrap_or_else(|| "in-memory".into());
    let report = |task: Task,
                  value: f64,
                  std: Option<f64>,
                  seed_count: usize,
                  details: serde_json::Value| MetricsReport {
        dataset: dataset.into(),
        task: task.name().into(),
        value,
        std,
        seed_count,
        config_hash: cfg_hash.into(),
        provenance: provenance.clone(),
        details,
    };
    let mut out = Vec::new();
    for &task in tasks {
        let r = match task {
            Task::Classify => {
                let labels = labels_of(g, task)?;
                let (train, val, test) = node_splits(g, opts.probe.seed);
                let p = linear_probe(emb, labels, &train, val.as_deref(), &test, &opts.probe)?;
                report(
                    task,
                    p.mean,
                    Some(p.std),
                    p.accuracies.len(),
                    serde_json::to_value(&p)?,
                )
            }
            Task::Cluster => {
                let labels = labels_of(g, task)?;
                let k = g.num_classes();
                let v = kmeans_nmi(emb, labels, k, &opts.kmeans)?;
                report(
                    task,
                    v,
                    None,
                    1,
                    json!({"k": k, "restarts": opts.kmeans.restarts}),
                )
            }
            Task::Linkpred => {
                let (pos, neg) =
                    link.ok_or_else(|| Error::Eval("link prediction needs held-out edges".into()))?;
                let v = link_auc(emb, pos, neg, score)?;
                report(
                    task,
                    v,
                    None,
                    1,
                    json!({"positives": pos.len(), "negatives": neg.len()}),
                )
            }
            Task::Mad => {
                let m = mad_suite(emb, g, &opts.mad)?;
                report(
                    task,
                    m.mad_ratio.unwrap_or(f64::NAN),
                    None,
                    1,
                    serde_json::to_value(&m)?,
                )
            }
            Task::Diagnostics => {
                let d = dataset_diagnostics(g)?;
                report(
                    task,
                    d.inverse_smoothness,
                    None,
                    1,
                    serde_json::to_value(&d)?,
                )
            }
        };
        out.push(r);
    }
    Ok(out)
}

fn resolve_config(checkpoint: &Path, fallback: Option<&TrainConfig>) -> Result<TrainConfig> {
    let manifest = checkpoint.parent().map(|p| p.join(MANIFEST_FILE));
    match (fallback, manifest) {
        (Some(cfg), _) => Ok(cfg.clone()),
        (None, Some(m)) if m.exists() => Ok(RunManifest::load(&m)?.config),
        _ => Ok(TrainConfig::default()),
    }
}

/// `eval`: reports for each task, written to `metrics.json` and `metrics.csv`.
pub fn eval_run(
    data: &Path,
    checkpoint: &Path,
    tasks: &[Task],
    out: &Path,
    cfg: Option<&TrainConfig>,
    opts: &EvalOptions,
) -> Result<Vec<MetricsReport>> {
    let (g, _) = load_dataset(data)?;
    let cfg = resolve_config(checkpoint, cfg)?;
    let state = load_checkpoint(checkpoint, &cfg)?;
    if state.student.in_dim() != g.num_features() {
        return Err(Error::shape(
            "eval",
            format!(
                "checkpoint expects {} features, dataset has {}",
                state.student.in_dim(),
                g.num_features()
            ),
        ));
    }
    let cfg = TrainConfig {
        dim: state.student.out_dim(),
        ..cfg
    };
    let link = if tasks.contains(&Task::Linkpred) {
        Some(link_pairs(data, &g, cfg.seed)?)
    } else {
        None
    };
    let h = embed(&g, &cfg, state)?;
    let hash = config_hash(&cfg);
    let emb = EmbeddingSet::with_provenance(
        h,
        g.num_nodes(),
        Provenance {
            checkpoint: Some(checkpoint.display().to_string()),
            config_hash: Some(hash.clone()),
        },
    )?;
    let reports = evaluate(
        &g,
        &emb,
        tasks,
        link.as_ref(),
        cfg.score,
        opts,
        &dataset_name(data),
        &hash,
    )?;
    ensure_dir(out)?;
    write_json(&out.join("metrics.json"), &reports)?;
    let rows: Vec<(String, MetricsReport)> = reports
        .iter()
        .map(|r| ("SAIL".to_string(), r.clone()))
        .collect();
    write_atomic(&out.join("metrics.csv"), reports_to_csv(&rows).as_bytes())?;
    let mut manifest = RunManifest::new("eval", data, &cfg)?;
    manifest
        .outputs
        .insert("checkpoint".into(), checkpoint.display().to_string());
    manifest.outputs.insert(
        "metrics".into(),
        out.join("metrics.json").display().to_string(),
    );
    manifest.outputs.insert(
        "tasks".into(),
        tasks.iter().map(|t| t.name()).collect::<Vec<_>>().join(","),
    );
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(reports)
}

pub const ABLATION_VARIANTS: [(&str, Terms); 4] = [
    (
        "EMI",
        Terms {
            intra: false,
            inter: false,
        },
    ),
    (
        "EMI+Intra",
        Terms {
            intra: true,
            inter: false,
        },
    ),
    (
        "EMI+Inter",
        Terms {
            intra: false,
            inter: true,
        },
    ),
    (
        "EMI+Inter+Intra",
        Terms {
            intra: true,
            inter: true,
        },
    ),
];

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub task: String,
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

/// Trains every variant for every seed. Classification and clustering use
/// the full graph; link prediction trains on a per-seed edge split.
pub fn ablation(
    g: &Graph,
    cfg: &TrainConfig,
    seeds: &[u64],
    opts: &EvalOptions,
) -> Result<Vec<AblationRow>> {
    let has_labels = g.labels().is_some();
    let splits = seeds
        .iter()
        .map(|&s| link_split(g, 0.2, s))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (name, terms) in ABLATION_VARIANTS {
        let mut per_task: BTreeMap<Task, Vec<f64>> = BTreeMap::new();
        for (&seed, split) in seeds.iter().zip(&splits) {
            let vcfg = TrainConfig {
                terms,
                seed,
                ..cfg.clone()
            };
            if has_labels {
                let h = fit(g, &vcfg)?.embed()?;
                let emb = EmbeddingSet::new(h, g.num_nodes())?;
                let r = evaluate(
                    g,
                    &emb,
                    &[Task::Classify, Task::Cluster],
                    None,
                    vcfg.score,
                    opts,
                    "",
                    "",
                )?;
                for rep in r {
                    let t = if rep.task == "classify" {
                        Task::Classify
                    } else {
                        Task::Cluster
                    };
                    per_task.entry(t).or_default().push(rep.value);
                }
            }
            let h = fit(&split.train, &vcfg)?.embed()?;
            let emb = EmbeddingSet::new(h, g.num_nodes())?;
            let auc = link_auc(&emb, &split.test_edges, &split.test_negatives, vcfg.score)?;
            per_task.entry(Task::Linkpred).or_default().push(auc);
        }
        for (task, values) in per_task {
            let (mean, std) = mean_std(&values);
            rows.push(AblationRow {
                variant: name.into(),
                task: task.name().into(),
                mean,
                std,
                values,
            });
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant,task,mean,std,seeds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.variant,
            r.task,
            r.mean,
            r.std,
            r.values.len()
        ));
    }
    s
}

/// `ablate`: writes `ablation.csv` and `ablation.json`.
pub fn ablate_run(
    data: &Path,
    cfg: &TrainConfig,
    seeds: &[u64],
    out: &Path,
    opts: &EvalOptions,
) -> Result<Vec<AblationRow>> {
    let (g, _) = load_dataset(data)?;
    let rows = ablation(&g, cfg, seeds, opts)?;
    ensure_dir(out)?;
    write_atomic(&out.join("ablation.csv"), ablation_csv(&rows).as_bytes())?;
    write_json(&out.join("ablation.json"), &rows)?;
    let mut manifest = RunManifest::new("ablate", data, cfg)?;
    manifest.outputs.insert(
        "table".into(),
        out.join("ablation.csv").display().to_string(),
    );
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkSplitSummary {
    pub train_edges: usize,
    pub test_edges: usize,
    pub removed_incidence_fraction: f64,
}

/// `linksplit`: a dataset directory for the train graph plus held-out pairs.
pub fn linksplit_run(data: &Path, out: &Path, seed: u64) -> Result<LinkSplitSummary> {
    let (g, meta) = load_dataset(data)?;
    let split = link_split(&g, 0.2, seed)?;
    write_dataset(out, &split.train, &meta)?;
    write_pairs(&out.join(TEST_EDGES_FILE), &split.test_edges)?;
    write_pairs(&out.join(TEST_NEGATIVES_FILE), &split.test_negatives)?;
    let summary = LinkSplitSummary {
        train_edges: split.train.num_edges(),
        test_edges: split.test_edges.len(),
        removed_incidence_fraction: if g.num_edges() == 0 {
            0.0
        } else {
            split.test_edges.len() as f64 / g.num_edges() as f64
        },
    };
    write_json(&out.join("split.json"), &summary)?;
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let mut manifest = RunManifest::new("linksplit", data, &cfg)?;
    for f in [TEST_EDGES_FILE, TEST_NEGATIVES_FILE, "split.json"] {
        manifest
            .outputs
            .insert(f.into(), out.join(f).display().to_string());
    }
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRow {
    pub dataset: String,
    pub smoothness: f64,
    pub inverse_smoothness: f64,
    pub normalized_inverse_smoothness: f64,
    pub clustering: f64,
}

/// `diagnostics` over a dataset collection; `1/λ_f` is normalized across it.
pub fn diagnostics_run(datasets: &[PathBuf], out: Option<&Path>) -> Result<Vec<DiagnosticsRow>> {
    let mut rows = Vec::new();
    for d in datasets {
        let (g, _) = load_dataset(d)?;
        let diag = dataset_diagnostics(&g)?;
        rows.push(DiagnosticsRow {
            dataset: dataset_name(d),
            smoothness: diag.smoothness,
            inverse_smoothness: diag.inverse_smoothness,
            normalized_inverse_smoothness: f64::NAN,
            clustering: diag.clustering,
        });
    }
    let inv: Vec<f64> = rows.iter().map(|r| r.inverse_smoothness).collect();
    for (r, v) in rows.iter_mut().zip(normalize_inverse_smoothness(&inv)) {
        r.normalized_inverse_smoothness = v;
    }
    if let Some(out) = out {
        ensure_dir(out)?;
        write_json(&out.join("diagnostics.json"), &rows)?;
        let mut s = String::from(
            "dataset,smoothness,inverse_smoothness,normalized_inverse_smoothness,clustering\n",
        );
        for r in &rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.dataset,
                r.smoothness,
                r.inverse_smoothness,
                r.normalized_inverse_smoothness,
                r.clustering
            ));
        }
        write_atomic(&out.join("diagnostics.csv"), s.as_bytes())?;
        let mut manifest = RunManifest::new("diagnostics", &datasets[0], &TrainConfig::default())?;
        manifest.dataset = datasets
            .iter()
            .map(|d| d.display().to_string())
            .collect::<Vec<_>>()
            .join(",");
        manifest.outputs.insert(
            "table".into(),
            out.join("diagnostics.csv").display().to_string(),
        );
        write_json(&out.join(MANIFEST_FILE), &manifest)?;
    }
    Ok(rows)
}

pub const ALPHA_GRID: [f64; 4] = [0.0, 0.1, 0.5, 1.0];
pub const LAMBDA_GRID: [f64; 4] = [0.0, 0.1, 0.5, 1.0];

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub lambda: f64,
    pub val_accuracy: f64,
}

/// Grid search over `α × λ`, scored by validation probe accuracy. Returns
/// the best config and its trained student state.
pub fn sweep(
    g: &Graph,
    base: &TrainConfig,
    alphas: &[f64],
    lambdas: &[f64],
    opts: &ProbeOptions,
) -> Result<(TrainConfig, TrainState, Vec<SweepPoint>)> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::Eval("labels required for sweep".into()))?;
    let (train, val, _) = node_splits(g, opts.seed);
    let val = val
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Error::Eval("sweep needs a validation split".into()))?;
    let probe = ProbeOptions {
        seeds: 1,
        ..opts.clone()
    };
    let mut points = Vec::new();
    let mut best: Option<(f64, TrainConfig, TrainState)> = None;
    for &alpha in alphas {
        for &lambda in lambdas {
            let cfg = TrainConfig {
                alpha,
                lambda,
                ..base.clone()
            };
            let t = fit(g, &cfg)?;
            let emb = EmbeddingSet::new(t.embed()?, g.num_nodes())?;
            let acc = linear_probe(&emb, labels, &train, None, &val, &probe)?.mean;
            log::info!("sweep alpha={alpha} lambda={lambda}: val accuracy {acc:.4}");
            points.push(SweepPoint {
                alpha,
                lambda,
                val_accuracy: acc,
            });
            if best.as_ref().is_none_or(|b| acc > b.0) {
                best = Some((acc, cfg, t.into_state()));
            }
        }
    }
    let (_, cfg, state) = best.ok_or_else(|| Error::InvalidArgument("empty sweep grid".into()))?;
    Ok((cfg, state, points))
}
