use crate::config::PipelineConfig;
use crate::{io_err, read_text, to_json_pretty, write_file, CliError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use ueba_core::autoencoder::{AutoencoderModel, AutoencoderSpec, ModelMetadata, TrainConfig};
use ueba_core::doc2vec::{Doc2VecModel, Doc2VecParams, Vocabulary};
use ueba_core::features::{Role, ScalerParams};
use ueba_core::nn::{CompositionNet, NetManifest};
use ueba_core::synth::AnomalyTemplate;
use ueba_core::Matrix;

pub const MANIFEST_FILE: &str = "manifest.txt";
const FORMAT_VERSION: u32 = 1;

const METADATA: &str = "metadata.json";
const ENCODER_JSON: &str = "encoder.json";
const ENCODER_BIN: &str = "encoder.bin";
const DECODER_JSON: &str = "decoder.json";
const DECODER_BIN: &str = "decoder.bin";
const VOCAB: &str = "doc2vec_vocab.txt";
const WORDS: &str = "doc2vec_words.bin";
const DOCS: &str = "doc2vec_docs.bin";
const SCALER: &str = "scaler.json";
const TEMPLATES: &str = "templates.json";
const HOLDOUT: &str = "holdout.bin";

/// Everything needed to reproduce scoring, plus training provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMetadata {
    pub format_version: u32,
    pub role: Role,
    pub seed: u64,
    pub window_seconds: i64,
    pub threshold: f64,
    pub spec: AutoencoderSpec,
    pub train_config: TrainConfig,
    pub doc2vec_params: Doc2VecParams,
    pub model: ModelMetadata,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub best_validation_mse: f64,
    pub training_rows: usize,
    pub validation_rows: usize,
    pub holdout_rows: usize,
    pub doc2vec_documents: usize,
    pub config: PipelineConfig,
}

/// A trained role model with its embedding model, scaler, stress templates and
/// scaled held-out rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStore {
    pub metadata: StoreMetadata,
    pub model: AutoencoderModel,
    pub doc2vec: Doc2VecModel,
    pub scaler: ScalerParams,
    pub templates: Vec<AnomalyTemplate>,
    pub holdout: Matrix,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn store_err(m: impl Into<String>) -> CliError {
    CliError::Store(m.into())
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T, CliError> {
    let path = dir.join(name);
    serde_json::from_str(&read_text(&path)?).map_err(|e| CliError::Schema {
        path,
        reason: e.to_string(),
    })
}

fn read_bytes(dir: &Path, name: &str) -> Result<Vec<u8>, CliError> {
    let path = dir.join(name);
    std::fs::read(&path).map_err(io_err(&path))
}

fn read_matrix(dir: &Path, name: &str, cols: usize) -> Result<Matrix, CliError> {
    let bytes = read_bytes(dir, name)?;
    let width = cols * 8;
    if width == 0 || bytes.len() % width != 0 {
        return Err(store_err(format!(
            "{name}: {} bytes is not a whole number of {cols}-wide rows",
            bytes.len()
        )));
    }
    Matrix::from_le_bytes(bytes.len() / width, cols, &bytes).map_err(|e| store_err(format!("{name}: {e}")))
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| store_err(format!("manifest line {l:?} is not key=value")))
        })
        .collect()
}

impl ModelStore {
    fn files(&self) -> Result<Vec<(&'static str, Vec<u8>)>, CliError> {
        Ok(vec![
            (METADATA, to_json_pretty(&self.metadata).into_bytes()),
            (
                ENCODER_JSON,
                to_json_pretty(&self.model.encoder.manifest()).into_bytes(),
            ),
            (ENCODER_BIN, self.model.encoder.to_le_bytes()),
            (
                DECODER_JSON,
                to_json_pretty(&self.model.decoder.manifest()).into_bytes(),
            ),
            (DECODER_BIN, self.model.decoder.to_le_bytes()),
            (VOCAB, self.doc2vec.vocab.to_text()?.into_bytes()),
            (WORDS, self.doc2vec.word_vectors.to_le_bytes()),
            (DOCS, self.doc2vec.doc_vectors.to_le_bytes()),
            (SCALER, to_json_pretty(&self.scaler).into_bytes()),
            (TEMPLATES, to_json_pretty(&self.templates).into_bytes()),
            (HOLDOUT, self.holdout.to_le_bytes()),
        ])
    }

    /// Content id of a scaler: hash of its stored JSON.
    pub fn scaler_id(scaler: &ScalerParams) -> String {
        sha256_hex(to_json_pretty(scaler).as_bytes())
    }

    /// Writes into a sibling temporary directory, then renames it into place.
    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let name = dir
            .file_name()
            .ok_or_else(|| store_err(format!("{} has no directory name", dir.display())))?
            .to_string_lossy()
            .into_owned();
        let tmp = dir.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
        }
        let mut manifest = vec![
            format!("format_version={FORMAT_VERSION}"),
            format!("role={}", self.metadata.role),
            format!("seed={}", self.metadata.seed),
            format!("threshold={}", self.metadata.threshold),
            format!("input_dim={}", self.metadata.spec.input_dim),
            format!("latent_dim={}", self.metadata.spec.latent_dim),
            format!("scaler_id={}", Self::scaler_id(&self.scaler)),
        ];
        for (file, bytes) in self.files()? {
            write_file(&tmp.join(file), &bytes)?;
            manifest.push(format!("sha256.{file}={}", sha256_hex(&bytes)));
        }
        manifest.push(String::new());
        write_file(&tmp.join(MANIFEST_FILE), manifest.join("\n"))?;
        if dir.exists() {
            std::fs::remove_dir_all(dir).map_err(io_err(dir))?;
        }
        std::fs::rename(&tmp, dir).map_err(io_err(dir))
    }

    /// Checks every recorded hash and returns the verified file names.
    pub fn verify(dir: &Path) -> Result<Vec<String>, CliError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.is_file() {
            return Err(CliError::MissingModel(dir.to_path_buf()));
        }
        let manifest = parse_manifest(&read_text(&manifest_path)?)?;
        if manifest.get("format_version").map(String::as_str) != Some("1") {
            return Err(store_err("unsupported format_version"));
        }
        let mut checked = Vec::new();
        for (key, expected) in &manifest {
            if let Some(file) = key.strip_prefix("sha256.") {
                if sha256_hex(&read_bytes(dir, file)?) != *expected {
                    return Err(CliError::HashMismatch { file: file.to_string() });
                }
                checked.push(file.to_string());
            }
        }
        for required in [
            METADATA,
            ENCODER_JSON,
            ENCODER_BIN,
            DECODER_JSON,
            DECODER_BIN,
            SCALER,
            VOCAB,
            WORDS,
        ] {
            if !checked.iter().any(|c| c == required) {
                return Err(store_err(format!("manifest does not cover {required}")));
            }
        }
        Ok(checked)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        Self::verify(dir)?;
        let metadata: StoreMetadata = read_json(dir, METADATA)?;
        let net = |json: &str, bin: &str| -> Result<CompositionNet, CliError> {
            let m: NetManifest = read_json(dir, json)?;
            Ok(CompositionNet::from_parts(&m, &read_bytes(dir, bin)?)?)
        };
        let model = AutoencoderModel::from_parts(
            metadata.spec.clone(),
            net(ENCODER_JSON, ENCODER_BIN)?,
            net(DECODER_JSON, DECODER_BIN)?,
            Some(metadata.threshold),
            metadata.model.clone(),
        )?;
        let vocab = Vocabulary::from_text(&read_text(&dir.join(VOCAB))?)?;
        let dim = metadata.doc2vec_params.dim;
        let doc2vec = Doc2VecModel::from_parts(
            metadata.doc2vec_params.clone(),
            vocab,
            read_matrix(dir, DOCS, dim)?,
            read_matrix(dir, WORDS, dim)?,
        )?;
        let scaler: ScalerParams = read_json(dir, SCALER)?;
        if metadata.model.scaler_id.as_deref() != Some(Self::scaler_id(&scaler).as_str()) {
            return Err(store_err("scaler does not match the model's scaler id"));
        }
        let templates: Vec<AnomalyTemplate> = read_json(dir, TEMPLATES)?;
        let holdout = read_matrix(dir, HOLDOUT, metadata.spec.input_dim)?;
        Ok(Self {
            metadata,
            model,
            doc2vec,
            scaler,
            templates,
            holdout,
        })
    }
}
