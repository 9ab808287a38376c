use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use unlearnrec::config::ExperimentConfig;
use unlearnrec::error::Error;
use unlearnrec::evaluation::{export_score_distribution, read_metrics_csv, write_metrics_csv, MetricsReport};
use unlearnrec::graph::{load_edges, read_edges, write_edges, IdMap, InteractionGraph, UnlearnRequest};
use unlearnrec::pipeline::checkpoint::{atomic_write, sha256_hex};
use unlearnrec::pipeline::protocol::{prepare_attack, retrain_and_evaluate, split_dataset, AttackSetup, DataSplit};
use unlearnrec::pipeline::{finetune, load_encoder, pretrain_ie, save_encoder, train_backbone, unlearn, TrainedModel};

use crate::run_dir::RunDir;

const TRAIN: &str = "data/train.tsv";
const TEST: &str = "data/test.tsv";
const ID_MAP: &str = "data/id_map.tsv";
const DATASET_HASH: &str = "data/dataset.sha256";
const NEGATIVES: &str = "data/negatives.tsv";
const ATTACK_EDGES: &str = "attack_edges.tsv";
const METRICS: &str = "metrics.csv";

/// Stage names in metrics.csv, with the labels the report prints.
pub const STAGES: [(&str, &str); 4] = [
    ("before", "before"),
    ("ours0", "ours(0)"),
    ("ours", "ours(finetuned)"),
    ("retrain", "retrain"),
];

fn require(rd: &RunDir, rel: &str) -> Result<PathBuf> {
    let path = rd.path(rel);
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path).into())
    }
}

pub fn dataset_hash(rd: &RunDir) -> Option<String> {
    std::fs::read_to_string(rd.path(DATASET_HASH)).ok().map(|s| s.trim().to_string())
}

fn write_log(rd: &RunDir, rel: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = format!("{header}\n");
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    rd.write_text(rel, &text)
}

fn epoch_log(log: &[f64]) -> Vec<String> {
    log.iter().enumerate().map(|(e, l)| format!("{e},{l:.17e}")).collect()
}

fn load_data(rd: &RunDir) -> Result<DataSplit> {
    let ids = IdMap::read(&require(rd, ID_MAP)?)?;
    let train = read_edges(&require(rd, TRAIN)?)?;
    let test = read_edges(&require(rd, TEST)?)?;
    let full = InteractionGraph::new(ids.users.len(), ids.items.len(), train.iter().chain(&test).copied())?;
    Ok(DataSplit {
        train: full.with_edges(train)?,
        full,
        test,
    })
}

fn load_model(rd: &RunDir, cfg: &ExperimentConfig, data: &DataSplit, name: &str) -> Result<TrainedModel> {
    Ok(TrainedModel::load(&rd.checkpoints(), name, &cfg.backbone, data.full.n_users())?)
}

fn load_setup(rd: &RunDir, cfg: &ExperimentConfig, data: &DataSplit) -> Result<AttackSetup> {
    let adversarial = read_edges(&require(rd, ATTACK_EDGES)?)?;
    let negatives = read_edges(&require(rd, NEGATIVES)?)?;
    let model = load_model(rd, cfg, data, "attacked")?;
    let attacked = data.train.with_edges(data.train.edges().iter().chain(&adversarial).copied())?;
    let request = UnlearnRequest::new(&attacked, adversarial.iter().copied())?;
    Ok(AttackSetup {
        attacked,
        adversarial,
        model,
        request,
        negatives,
    })
}

fn brief(report: &MetricsReport) -> String {
    format!(
        "recall@{n} {:.4} ndcg@{n} {:.4} mi_bf {:.3} mi_ng {:.3}",
        report.rank.recall,
        report.rank.ndcg,
        report.mi_bf,
        report.mi_ng,
        n = report.rank.n
    )
}

/// Relative dataset paths are tried against the working directory, then the
/// directory of the config file.
pub fn resolve_dataset(path: &Path, config_path: Option<&Path>) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    config_path
        .and_then(Path::parent)
        .map(|dir| dir.join(path))
        .filter(|p| p.exists())
        .unwrap_or_else(|| path.to_path_buf())
}

pub fn ingest(rd: &RunDir, cfg: &ExperimentConfig) -> Result<String> {
    let Some(path) = cfg.dataset.as_deref() else {
        bail!("no dataset given: pass a path or set `dataset` in the config");
    };
    let bytes = std::fs::read(path).with_context(|| format!("reading dataset {}", path.display()))?;
    let loaded = load_edges(path)?;
    let data = split_dataset(cfg, loaded.graph)?;
    write_edges(&rd.path(TRAIN), data.train.edges())?;
    write_edges(&rd.path(TEST), &data.test)?;
    loaded.id_map.write(&rd.path(ID_MAP))?;
    atomic_write(&rd.path(DATASET_HASH), format!("{}\n", sha256_hex(&bytes)).as_bytes())?;
    Ok(format!(
        "ingest: {} users, {} items, {} interactions ({} duplicates dropped), {} train / {} test",
        data.full.n_users(),
        data.full.n_items(),
        data.full.n_edges(),
        loaded.duplicates,
        data.train.n_edges(),
        data.test.len()
    ))
}

pub fn train(rd: &RunDir, cfg: &ExperimentConfig) -> Result<String> {
    let data = load_data(rd)?;
    let model = train_backbone(&cfg.backbone, &data.train, &cfg.train_options())?;
    model.save(&rd.checkpoints(), "clean")?;
    write_log(rd, "logs/train.csv", "epoch,loss", epoch_log(&model.log))?;
    Ok(format!(
        "train: {} d={} on {} edges, {} epochs, final loss {:.4}",
        cfg.backbone.kind,
        cfg.backbone.dim,
        data.train.n_edges(),
        model.log.len(),
        model.log.last().copied().unwrap_or(f64::NAN)
    ))
}

pub fn attack(rd: &RunDir, cfg: &ExperimentConfig) -> Result<String> {
    let data = load_data(rd)?;
    let clean = load_model(rd, cfg, &data, "clean")?;
    let setup = prepare_attack(cfg, &data, &clean)?;
    write_edges(&rd.path(ATTACK_EDGES), &setup.adversarial)?;
    write_edges(&rd.path(NEGATIVES), &setup.negatives)?;
    setup.model.save(&rd.checkpoints(), "attacked")?;
    write_log(rd, "logs/attacked.csv", "epoch,loss", epoch_log(&setup.model.log))?;
    let report = setup.evaluate(cfg, &data, &setup.model, true)?;
    Ok(format!(
        "attack: injected {} edges ({}%), attacked model {}, unlearned mean sigmoid {:.4}",
        setup.adversarial.len(),
        cfg.attack_ratio,
        brief(&report),
        report.unlearned_mean_sigmoid
    ))
}

pub fn pretrain(rd: &RunDir, cfg: &ExperimentConfig) -> Result<String> {
    let data = load_data(rd)?;
    let setup = load_setup(rd, cfg, &data)?;
    let (encoder, rounds) = pretrain_ie(&setup.model, &setup.attacked, &cfg.encoder, &cfg.weights, &cfg.pretrain_options())?;
    save_encoder(&rd.checkpoints(), "encoder", &encoder)?;
    let rows = rounds.iter().flat_map(|r| {
        r.epoch_losses
            .iter()
            .enumerate()
            .map(move |(e, l)| format!("{},{e},{},{l:.17e}", r.round, r.unlearn_edges))
    });
    write_log(rd, "logs/pretrain.csv", "round,epoch,unlearn_edges,loss", rows.collect::<Vec<_>>())?;
    let last = rounds.last().and_then(|r| r.epoch_losses.last()).copied().unwrap_or(f64::NAN);
    Ok(format!("pretrain-ie: {} rounds x {} epochs, final loss {last:.4}", cfg.pretrain_rounds, cfg.pretrain_epochs))
}

pub fn unlearn_stage(rd: &RunDir, cfg: &ExperimentConfig) -> Result<String> {
    let data = load_data(rd)?;
    let setup = load_setup(rd, cfg, &data)?;
    let encoder = load_encoder(&rd.checkpoints(), "encoder", &cfg.encoder)?;
    let model = unlearn(&setup.model, &encoder, &setup.request)?;
    model.save(&rd.checkpoints(), "ours0")?;
    let report = setup.evaluate(cfg, &data, &model, false)?;
    Ok(format!("unlearn: {} edges, {}", setup.adversarial.len(), brief(&report)))
}

pub fn finetune_stage(rd: &RunDir, cfg: &ExperimentConfig) -> Result<String> {
    let data = load_data(rd)?;
    let setup = load_setup(rd, cfg, &data)?;
    let encoder = load_encoder(&rd.checkpoints(), "encoder", &cfg.encoder)?;
    let (model, tuned) = finetune(&setup.model, &encoder, &setup.request, cfg.weights.lambda_u, &cfg.finetune_options())?;
    model.save(&rd.checkpoints(), "ours")?;
    save_encoder(&rd.checkpoints(), "encoder_tuned", &tuned)?;
    write_log(rd, "logs/finetune.csv", "epoch,loss", epoch_log(&model.log))?;
    let report = setup.evaluate(cfg, &data, &model, false)?;
    Ok(format!("finetune: {} epochs, {}", cfg.finetune_epochs, brief(&report)))
}

pub fn retrain(rd: &RunDir, cfg: &ExperimentConfig) -> Result<String> {
    let data = load_data(rd)?;
    let setup = load_setup(rd, cfg, &data)?;
    let (model, report) = retrain_and_evaluate(cfg, &data, &setup)?;
    model.save(&rd.checkpoints(), "retrain")?;
    write_log(rd, "logs/retrain.csv", "epoch,loss", epoch_log(&model.log))?;
    Ok(format!(
        "retrain: {} epochs on {} residual edges, {}",
        model.log.len(),
        setup.request.residual_edges().len(),
        brief(&report)
    ))
}

/// Scores the attacked model and every unlearned model present.
pub fn evaluate(rd: &RunDir, cfg: &ExperimentConfig) -> Result<String> {
    let data = load_data(rd)?;
    let setup = load_setup(rd, cfg, &data)?;
    let mut rows = Vec::new();
    let mut done = Vec::new();
    for (stage, _) in STAGES {
        let model = if stage == "before" {
            setup.model.clone()
        } else {
            match load_model(rd, cfg, &data, stage) {
                Ok(m) => m,
                Err(e) if matches!(e.downcast_ref::<Error>(), Some(Error::MissingArtifact(_))) => {
                    info!("{stage}: no checkpoint, skipped");
                    continue;
                }
                Err(e) => return Err(e),
            }
        };
        let report = setup.evaluate(cfg, &data, &model, stage == "before")?;
        rows.extend(report.rows().into_iter().map(|(m, v)| (stage.to_string(), m, v)));
        let mut scores = Vec::new();
        export_score_distribution(
            &model.scorer(),
            &[("unlearned", &setup.adversarial), ("negative", &setup.negatives), ("test", &data.test)],
            &mut scores,
        )?;
        atomic_write(&rd.path(&format!("scores/{stage}.csv")), &scores)?;
        done.push(format!("{stage} {}", brief(&report)));
    }
    write_metrics_csv(&rd.path(METRICS), &rows)?;
    Ok(format!("evaluate: {}", done.join("; ")))
}

/// The consolidated table: one row per stage, one column per metric.
pub fn report(rd: &RunDir) -> Result<String> {
    let rows = read_metrics_csv(&require(rd, METRICS)?)?;
    let mut metrics: Vec<String> = Vec::new();
    let mut values: BTreeMap<(String, String), f64> = BTreeMap::new();
    for (stage, metric, value) in rows {
        if !metrics.contains(&metric) {
            metrics.push(metric.clone());
        }
        values.insert((stage, metric), value);
    }
    let label_width = STAGES.iter().map(|s| s.1.len()).max().unwrap_or(0);
    let widths: Vec<usize> = metrics.iter().map(|m| m.len().max(8)).collect();
    let mut out = format!("{:<label_width$}", "stage");
    for (m, w) in metrics.iter().zip(&widths) {
        out.push_str(&format!("  {m:>w$}"));
    }
    for (stage, label) in STAGES {
        out.push_str(&format!("\n{label:<label_width$}"));
        for (m, w) in metrics.iter().zip(&widths) {
            match values.get(&(stage.to_string(), m.clone())) {
                Some(v) => out.push_str(&format!("  {v:>w$.4}")),
                None => out.push_str(&format!("  {:>w$}", "-")),
            }
        }
    }
    Ok(out)
}

