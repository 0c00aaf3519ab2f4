//! Model artifact: a versioned JSON envelope whose `body` holds the config
//! snapshot, the fitted pipeline and every parameter tensor as base64
//! little-endian doubles. `checksum` is the SHA-256 of the body text exactly as
//! stored, so any edit or truncation is detected on load.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::codec::{self, decode_f64s, encode_f64s, sha256_hex};
use crate::error::{Error, Result};
use crate::model::{Classifier, ModelSpec};
use crate::preprocess::PipelineState;
use crate::runner::config::ExperimentConfig;
use crate::tensor::Tensor2;

pub const MODEL_FORMAT: &str = "mcids-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub config: ExperimentConfig,
    pub pipeline: PipelineState,
    pub model: Classifier,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Body {
    config: ExperimentConfig,
    pipeline: PipelineState,
    spec: ModelSpec,
    params: Vec<TensorRecord>,
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'a str,
    format_version: u32,
    checksum: String,
    body: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    format: String,
    format_version: u32,
    checksum: String,
    body: Box<RawValue>,
}

fn corrupt(e: impl std::fmt::Display) -> Error {
    Error::CorruptArtifact(e.to_string())
}

impl ModelArtifact {
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self
            .model
            .param_names()
            .into_iter()
            .zip(self.model.params())
            .map(|(name, t)| TensorRecord {
                name,
                rows: t.rows(),
                cols: t.cols(),
                data: encode_f64s(t.as_slice()),
            })
            .collect();
        let body = Body {
            config: self.config.clone(),
            pipeline: self.pipeline.clone(),
            spec: *self.model.spec(),
            params,
        };
        let body_text = serde_json::to_string(&body).expect("artifact body serializes");
        let raw = RawValue::from_string(body_text).expect("serializer emits valid JSON");
        let envelope = EnvelopeOut {
            format: MODEL_FORMAT,
            format_version: FORMAT_VERSION,
            checksum: sha256_hex(raw.get().as_bytes()),
            body: &raw,
        };
        let mut out = serde_json::to_vec(&envelope).expect("envelope serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let env: EnvelopeIn = serde_json::from_slice(bytes).map_err(corrupt)?;
        if env.format != MODEL_FORMAT {
            return Err(corrupt(format!(
                "format {:?} is not {MODEL_FORMAT:?}",
                env.format
            )));
        }
        if env.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION,
                found: env.format_version,
            });
        }
        if sha256_hex(env.body.get().as_bytes()) != env.checksum {
            return Err(corrupt("checksum does not match body"));
        }
        let body: Body = serde_json::from_str(env.body.get()).map_err(corrupt)?;
        let mut tensors = Vec::with_capacity(body.params.len());
        for rec in body.params {
            let data = decode_f64s(&rec.data)?;
            tensors.push(Tensor2::from_vec(rec.rows, rec.cols, data).map_err(|_| {
                corrupt(format!(
                    "tensor {} does not hold {}x{} values",
                    rec.name, rec.rows, rec.cols
                ))
            })?);
        }
        if body.spec.input_dim != body.pipeline.width()
            || body.spec.num_classes != body.pipeline.class_names.len()
        {
            return Err(corrupt("model spec disagrees with the stored pipeline"));
        }
        let model = Classifier::from_params(body.spec, tensors).map_err(corrupt)?;
        Ok(ModelArtifact {
            config: body.config,
            pipeline: body.pipeline,
            model,
        })
    }
}

pub fn save_model(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    codec::write_atomic(path, &artifact.to_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelArtifact> {
    ModelArtifact::from_bytes(&codec::read_file(path)?)
}
