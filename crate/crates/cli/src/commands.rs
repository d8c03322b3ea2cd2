use crate::config::PipelineConfig;
use crate::io::{read_roles, read_stress_csv, read_windows_csv, write_matrix_csv, write_stress_csv, write_windows_csv};
use crate::store::{ModelStore, StoreMetadata};
use crate::{io_err, read_text, to_json_pretty, write_file, CliError};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use ueba_core::autoencoder::{AutoencoderModel, Decision, ModelMetadata, ScoreReport};
use ueba_core::doc2vec::{train_dbow, Doc2VecModel};
use ueba_core::eval::{
    detection_curve, feature_error_csv, feature_error_svg, per_feature_error, per_feature_error_from_residuals, tsne,
    DetectionCurve, FeatureErrorReport, PositiveRateSummary, Report, Scatter,
};
use ueba_core::features::{
    aggregate, attach_embedding, fit_scaler, read_events_jsonl, write_events_jsonl, AggregateOptions, FeatureRecord,
    Role, WindowKey, NUM_NUMERIC,
};
use ueba_core::nn::composition_to_graph;
use ueba_core::rng::{child_rng, permutation};
use ueba_core::synth::{
    build_test_set, default_templates, generate_logs, AnomalyTemplate, AnomalyType, ColumnStats, IntensityGrid,
};
use ueba_core::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub events: usize,
    pub users: usize,
    pub events_path: PathBuf,
    pub roles_path: PathBuf,
}

/// Writes `events.jsonl` and `roles.json` into `out`.
pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<SynthSummary, CliError> {
    cfg.validate()?;
    let profile = cfg.profile();
    let events = generate_logs(&profile, cfg.synth.users, cfg.synth.days, cfg.stage_seed("synth"))?;
    let roles: BTreeMap<&str, Role> = events.iter().map(|e| (e.user.as_str(), cfg.role)).collect();
    let events_path = out.join("events.jsonl");
    let roles_path = out.join("roles.json");
    let mut buf = Vec::new();
    write_events_jsonl(&mut buf, &events)?;
    write_file(&events_path, buf)?;
    write_file(&roles_path, to_json_pretty(&roles))?;
    Ok(SynthSummary {
        events: events.len(),
        users: roles.len(),
        events_path,
        roles_path,
    })
}

fn load_events(path: &Path) -> Result<Vec<ueba_core::features::RawEvent>, CliError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_events_jsonl(BufReader::new(file)).map_err(|e| CliError::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Aggregates events into windows. Without a role map every user gets `role`.
fn featurize_events(
    events: &Path,
    roles: Option<&Path>,
    cfg: &PipelineConfig,
    role: Role,
    window_seconds: i64,
) -> Result<Vec<FeatureRecord>, CliError> {
    let events = load_events(events)?;
    let role_map = match roles {
        Some(p) => read_roles(p)?,
        None => events.iter().map(|e| (e.user.clone(), role)).collect(),
    };
    let opts = AggregateOptions {
        window_seconds,
        unmapped: cfg.unmapped_users.into(),
    };
    Ok(aggregate(&events, &opts, &role_map)?)
}

/// Unscaled 83-wide rows: numerics followed by the inferred embedding.
fn embed(records: &[FeatureRecord], d2v: &Doc2VecModel) -> Matrix {
    // Equal process lists embed identically, so each distinct list is inferred once.
    let mut cache: BTreeMap<&[String], Vec<f64>> = BTreeMap::new();
    let mut data = Vec::with_capacity(records.len() * (NUM_NUMERIC + d2v.dim()));
    for r in records {
        let emb = cache
            .entry(r.process_list.as_slice())
            .or_insert_with(|| attach_embedding(r, d2v).values.split_off(NUM_NUMERIC));
        data.extend_from_slice(&r.numeric);
        data.extend_from_slice(emb);
    }
    Matrix::from_vec(records.len(), NUM_NUMERIC + d2v.dim(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeaturizeSummary {
    pub windows: usize,
    pub windows_path: PathBuf,
    /// Present when a store supplied the embedding model.
    pub features_path: Option<PathBuf>,
}

/// Writes `windows.csv`, and with a store also the unscaled 83-column `features.csv`.
pub fn cmd_featurize(
    cfg: &PipelineConfig,
    events: &Path,
    roles: Option<&Path>,
    store: Option<&Path>,
    out: &Path,
) -> Result<FeaturizeSummary, CliError> {
    cfg.validate()?;
    let records = featurize_events(events, roles, cfg, cfg.role, cfg.window_seconds)?;
    let windows_path = out.join("windows.csv");
    write_windows_csv(&windows_path, &records)?;
    let features_path = match store {
        Some(dir) => {
            let s = ModelStore::load(dir)?;
            let path = out.join("features.csv");
            let keys: Vec<WindowKey> = records.iter().map(|r| r.key.clone()).collect();
            write_matrix_csv(&path, &keys, &embed(&records, &s.doc2vec))?;
            Some(path)
        }
        None => None,
    };
    Ok(FeaturizeSummary {
        windows: records.len(),
        windows_path,
        features_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub windows: usize,
    pub training_rows: usize,
    pub validation_rows: usize,
    pub holdout_rows: usize,
    pub threshold: f64,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub validation_positive_rate: f64,
    pub holdout_positive_rate: f64,
}

fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_hold = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let perm = permutation(n, &mut child_rng(seed, "pipeline/holdout"));
    let (train, hold) = perm.split_at(n - n_hold);
    let (mut train, mut hold) = (train.to_vec(), hold.to_vec());
    train.sort_unstable();
    hold.sort_unstable();
    (train, hold)
}

/// Doc2Vec on the training pool, embedding, scaling, autoencoder training and
/// threshold calibration; the result is saved as a model store.
pub fn cmd_train(cfg: &PipelineConfig, windows: &Path, store: &Path) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let records: Vec<FeatureRecord> = read_windows_csv(windows)?
        .into_iter()
        .filter(|r| r.key.role == cfg.role)
        .collect();
    if records.len() < 20 {
        return Err(CliError::NoWindows {
            role: cfg.role.to_string(),
        });
    }
    let (train_idx, hold_idx) = split_indices(records.len(), cfg.holdout_fraction, cfg.seed);
    let corpus: Vec<Vec<String>> = train_idx.iter().map(|&i| records[i].process_list.clone()).collect();
    let (d2v, _) = train_dbow(&corpus, &cfg.doc2vec_params())?;

    let raw = embed(&records, &d2v);
    let scaler = fit_scaler(&raw.select_rows(&train_idx))?;
    let x_train = scaler.apply_matrix(&raw.select_rows(&train_idx))?;
    let x_hold = scaler.apply_matrix(&raw.select_rows(&hold_idx))?;

    let mut model = AutoencoderModel::build(cfg.autoencoder.clone(), cfg.stage_seed("autoencoder/init"))?;
    model.metadata = ModelMetadata {
        role: cfg.role.to_string(),
        seed: cfg.seed,
        trained_through: train_idx
            .iter()
            .map(|&i| &records[i].key)
            .max_by_key(|k| k.start)
            .map(|k| k.start_iso()),
        scaler_id: Some(ModelStore::scaler_id(&scaler)),
    };
    let train_cfg = cfg.train_config();
    let report = model.train(&x_train, &train_cfg)?;
    let templates = default_templates(&ColumnStats::from_matrix(&x_train)?, report.threshold)?;

    let x_val = x_train.select_rows(&report.validation_rows);
    let summary = TrainSummary {
        windows: records.len(),
        training_rows: x_train.rows() - report.validation_rows.len(),
        validation_rows: report.validation_rows.len(),
        holdout_rows: x_hold.rows(),
        threshold: report.threshold,
        best_epoch: report.best_epoch,
        stopped_epoch: report.stopped_epoch,
        validation_positive_rate: model.positive_rate(&x_val)?,
        holdout_positive_rate: model.positive_rate(&x_hold)?,
    };
    let metadata = StoreMetadata {
        format_version: 1,
        role: cfg.role,
        seed: cfg.seed,
        window_seconds: cfg.window_seconds,
        threshold: report.threshold,
        spec: cfg.autoencoder.clone(),
        train_config: train_cfg,
        doc2vec_params: d2v.params.clone(),
        model: model.metadata.clone(),
        best_epoch: report.best_epoch,
        stopped_epoch: report.stopped_epoch,
        best_validation_mse: report.best_validation_mse,
        training_rows: summary.training_rows,
        validation_rows: summary.validation_rows,
        holdout_rows: summary.holdout_rows,
        doc2vec_documents: corpus.len(),
        config: cfg.clone(),
    };
    ModelStore {
        metadata,
        model,
        doc2vec: d2v,
        scaler,
        templates,
        holdout: x_hold,
    }
    .save(store)?;
    Ok(summary)
}

/// What `cmd_score` reads.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreInput {
    /// Raw events, optionally with a user-to-role map.
    Events { path: PathBuf, roles: Option<PathBuf> },
    /// A `windows.csv` produced by `cmd_featurize`.
    Windows(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ScoredWindow<'a> {
    user: &'a str,
    role: Role,
    window_start: String,
    #[serde(flatten)]
    report: ScoreReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub rows: usize,
    pub anomalies: usize,
    /// Windows of other roles, left unscored.
    pub skipped: usize,
    pub threshold: f64,
}

/// Scores every window of the store's role, one JSON object per line.
pub fn cmd_score(store: &Path, input: &ScoreInput, out: &Path) -> Result<ScoreSummary, CliError> {
    let s = ModelStore::load(store)?;
    let cfg = &s.metadata.config;
    let records = match input {
        ScoreInput::Events { path, roles } => {
            featurize_events(path, roles.as_deref(), cfg, s.metadata.role, s.metadata.window_seconds)?
        }
        ScoreInput::Windows(path) => read_windows_csv(path)?,
    };
    let (mine, others): (Vec<FeatureRecord>, Vec<FeatureRecord>) =
        records.into_iter().partition(|r| r.key.role == s.metadata.role);
    let x = s.scaler.apply_matrix(&embed(&mine, &s.doc2vec))?;
    let mut text = Vec::new();
    let mut anomalies = 0;
    for (r, row) in mine.iter().zip(x.iter_rows()) {
        let report = s.model.score(row)?;
        anomalies += usize::from(report.decision == Decision::Anomaly);
        let line = ScoredWindow {
            user: &r.key.user,
            role: r.key.role,
            window_start: r.key.start_iso(),
            report,
        };
        serde_json::to_writer(&mut text, &line).expect("serialisable");
        text.write_all(b"\n").expect("in-memory write");
    }
    write_file(out, text)?;
    Ok(ScoreSummary {
        rows: mine.len(),
        anomalies,
        skipped: others.len(),
        threshold: s.metadata.threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressSummary {
    pub rows: usize,
    pub curves: Vec<DetectionCurve>,
    /// Feature errors of the full-intensity rows, per anomaly type.
    pub full_intensity_errors: BTreeMap<AnomalyType, FeatureErrorReport>,
    pub holdout: PositiveRateSummary,
    pub files: Vec<PathBuf>,
}

/// Builds the interpolated stress set from held-out rows and writes the
/// detection, explanation and calibration artifacts.
pub fn cmd_stress(
    store: &Path,
    cfg: &PipelineConfig,
    templates: Option<&Path>,
    out: &Path,
) -> Result<StressSummary, CliError> {
    cfg.validate()?;
    let s = ModelStore::load(store)?;
    let templates: Vec<AnomalyTemplate> = match templates {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| CliError::Schema {
            path: p.to_path_buf(),
            reason: e.to_string(),
        })?,
        None => s.templates.clone(),
    };
    let grid = IntensityGrid::uniform(cfg.stress.grid_steps)?;
    let set = build_test_set(
        &s.holdout,
        &templates,
        &grid,
        cfg.stage_seed("stress"),
        cfg.stress.sampling(),
    )?;
    let stress_path = out.join("stress_set.csv");
    write_stress_csv(&stress_path, &set)?;

    let curves = detection_curve(&s.model, &set)?;
    let holdout = PositiveRateSummary::from_scores(&s.model.scores(&s.holdout)?, s.metadata.threshold);
    let mut files = vec![stress_path];
    files.extend(
        Report {
            detection: curves.clone(),
            positive_rate: Some(holdout.clone()),
            ..Report::default()
        }
        .write(out)?,
    );

    let mut full_intensity_errors = BTreeMap::new();
    for kind in AnomalyType::ALL {
        let idx: Vec<usize> = (0..set.len())
            .filter(|&i| set.labels[i].kind == kind && set.labels[i].lambda == 1.0)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let report = per_feature_error(&s.model, &set.rows.select_rows(&idx))?;
        for (ext, body) in [("csv", feature_error_csv(&report)), ("svg", feature_error_svg(&report))] {
            let path = out.join(format!("feature_error_{kind}.{ext}"));
            write_file(&path, body)?;
            files.push(path);
        }
        full_intensity_errors.insert(kind, report);
    }
    Ok(StressSummary {
        rows: set.len(),
        curves,
        full_intensity_errors,
        holdout,
        files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnoseSummary {
    pub points: usize,
    pub duplicates_dropped: usize,
    pub data_kl: f64,
    pub residual_kl: f64,
    pub files: Vec<PathBuf>,
}

/// Seeded subsample of at most `k` row indices, in ascending order.
fn sample(n: usize, k: usize, seed: u64, stream: &str) -> Vec<usize> {
    let mut idx = permutation(n, &mut child_rng(seed, stream));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// t-SNE maps of the data and residual spaces plus a per-feature error report.
/// Normal rows come from `windows` when given, else from the store's held-out
/// rows; stress rows are added when a stress set is given.
pub fn cmd_diagnose(
    store: &Path,
    cfg: &PipelineConfig,
    windows: Option<&Path>,
    stress: Option<&Path>,
    out: &Path,
) -> Result<DiagnoseSummary, CliError> {
    cfg.validate()?;
    let s = ModelStore::load(store)?;
    let normals = match windows {
        Some(p) => {
            let recs: Vec<FeatureRecord> = read_windows_csv(p)?
                .into_iter()
                .filter(|r| r.key.role == s.metadata.role)
                .collect();
            s.scaler.apply_matrix(&embed(&recs, &s.doc2vec))?
        }
        None => s.holdout.clone(),
    };
    let k = cfg.diagnose.max_points;
    let seed = cfg.stage_seed("diagnose");
    let mut x = normals.select_rows(&sample(normals.rows(), k, seed, "normals"));
    let mut labels = vec!["normal".to_string(); x.rows()];
    let mut intensity = vec![1.0; x.rows()];
    if let Some(p) = stress {
        let set = read_stress_csv(p)?;
        for i in sample(set.len(), k, seed, "stress") {
            x.push_row(set.rows.row(i)).map_err(|e| CliError::Schema {
                path: p.to_path_buf(),
                reason: e.to_string(),
            })?;
            labels.push(set.labels[i].kind.to_string());
            intensity.push(set.labels[i].lambda);
        }
    }

    // Identical rows would tie at distance zero and break the bandwidth search.
    let mut seen = std::collections::BTreeSet::new();
    let keep: Vec<usize> = (0..x.rows())
        .filter(|&i| seen.insert(x.row(i).iter().map(|v| v.to_bits()).collect::<Vec<u64>>()))
        .collect();
    let duplicates_dropped = x.rows() - keep.len();
    let x = x.select_rows(&keep);
    let labels: Vec<String> = keep.iter().map(|&i| labels[i].clone()).collect();
    let intensity: Vec<f64> = keep.iter().map(|&i| intensity[i]).collect();

    let residuals = s.model.residuals(&x)?;
    let tcfg = cfg.tsne_config();
    let data_map = tsne(&x, &tcfg)?;
    let residual_map = tsne(&residuals, &tcfg)?;
    let scatter = |name: &str, points: Matrix| Scatter {
        name: name.into(),
        points,
        labels: labels.clone(),
        intensity: stress.map(|_| intensity.clone()),
    };
    let normal_idx: Vec<usize> = (0..x.rows()).filter(|&i| labels[i] == "normal").collect();
    let files = Report {
        feature_errors: Some(per_feature_error_from_residuals(&residuals.select_rows(&normal_idx))?),
        scatters: vec![
            scatter("data", data_map.points.clone()),
            scatter("residual", residual_map.points.clone()),
        ],
        positive_rate: Some(PositiveRateSummary::from_scores(
            &s.model.scores(&normals)?,
            s.metadata.threshold,
        )),
        ..Report::default()
    }
    .write(out)?;
    Ok(DiagnoseSummary {
        points: x.rows(),
        duplicates_dropped,
        data_kl: data_map.kl,
        residual_kl: residual_map.kl,
        files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub files_checked: Vec<String>,
    pub checks: Vec<(String, bool)>,
}

impl VerifySummary {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }
}

/// Hash verification, a full reload, and self-checks on the loaded model.
pub fn cmd_verify(store: &Path) -> Result<VerifySummary, CliError> {
    let files_checked = ModelStore::verify(store)?;
    let s = ModelStore::load(store)?;
    let mut checks = Vec::new();
    let tau = s.metadata.threshold;
    checks.push(("threshold_finite".to_string(), tau.is_finite() && tau >= 0.0));
    let dim = s.metadata.spec.input_dim;
    checks.push((
        "dimensions_agree".to_string(),
        s.scaler.dim() == dim
            && s.model.encoder.input_dim() == dim
            && s.holdout.cols() == dim
            && s.templates.iter().all(|t| t.point.len() == dim),
    ));
    let net = s.model.network();
    let graph = composition_to_graph(&net);
    let probe = s.holdout.select_rows(&(0..s.holdout.rows().min(5)).collect::<Vec<_>>());
    let graph_agrees = probe
        .iter_rows()
        .all(|row| match (net.forward(row), graph.forward(row)) {
            (Ok(a), Ok(b)) => a.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-12),
            _ => false,
        });
    checks.push(("graph_equivalence".to_string(), graph_agrees));
    let scores = s.model.scores(&s.holdout)?;
    let decisions_consistent = scores
        .iter()
        .all(|&sc| (s.model.decide(sc).ok() == Some(Decision::Anomaly)) == (sc >= tau));
    checks.push(("decisions_match_threshold".to_string(), decisions_consistent));
    Ok(VerifySummary { files_checked, checks })
}
