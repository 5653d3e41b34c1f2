//! Run manifests: which design, which run, and where the tensors live.
//!
//! TOML unless the file name ends in `.json`. Relative paths are resolved
//! against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use attn_accel_core::config::{apply_command_stream, decode_stream, DesignParams, RunParams};
use attn_accel_core::corpus::Amplitude;
use attn_accel_core::engine::HeadWeights;
use attn_accel_core::fxp::QTensor;
use attn_accel_core::tensor_file;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadFiles {
    pub w_q: PathBuf,
    pub w_k: PathBuf,
    pub w_v: PathBuf,
    pub b_q: PathBuf,
    pub b_k: PathBuf,
    pub b_v: PathBuf,
}

impl HeadFiles {
    /// The conventional names written by `gen`.
    pub fn numbered(head: usize) -> Self {
        let f = |name: &str| PathBuf::from(format!("head{head}_{name}.famt"));
        HeadFiles { w_q: f("w_q"), w_k: f("w_k"), w_v: f("w_v"), b_q: f("b_q"), b_k: f("b_k"), b_v: f("b_v") }
    }

    fn paths(&self) -> [&PathBuf; 6] {
        [&self.w_q, &self.w_k, &self.w_v, &self.b_q, &self.b_k, &self.b_v]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub input: PathBuf,
    pub output: PathBuf,
    pub log: PathBuf,
    /// Command stream, text or binary; takes precedence over `run`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commands: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prng: Option<String>,
    /// Bound on `max |fixed - float|` used by `compare`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub design: DesignParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Amplitude>,
    pub heads: Vec<HeadFiles>,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

impl RunManifest {
    pub fn to_text(&self, path: &Path) -> String {
        if is_json(path) {
            serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
        } else {
            toml::to_string(self).expect("manifest serializes")
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_text(path)).map_err(|e| CliError::io(path, e))
    }
}

/// A manifest together with the directory its relative paths are based on.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: RunManifest,
    pub base: PathBuf,
}

impl LoadedManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let manifest: RunManifest = if is_json(path) {
            serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?
        };
        manifest.design.validate().map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedManifest { manifest, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// The run to execute: from `commands_override`, else the manifest's command stream, else its `run` table.
    pub fn run_params(&self, design: &DesignParams, commands_override: Option<&Path>) -> Result<RunParams, CliError> {
        let stream = match (commands_override, &self.manifest.commands) {
            (Some(p), _) => Some(p.to_path_buf()),
            (None, Some(p)) => Some(self.resolve(p)),
            (None, None) => None,
        };
        match (stream, self.manifest.run) {
            (Some(p), _) => run_from_commands(design, &p),
            (None, Some(run)) => Ok(run),
            (None, None) => Err(CliError::Format("manifest has neither `run` nor `commands`".into())),
        }
    }

    pub fn load_input(&self) -> Result<QTensor, CliError> {
        let p = self.resolve(&self.manifest.input);
        tensor_file::load(&p).map_err(|e| CliError::tensor(&p, e))
    }

    pub fn load_heads(&self) -> Result<Vec<HeadWeights>, CliError> {
        self.manifest
            .heads
            .iter()
            .map(|files| {
                let mut t = Vec::with_capacity(6);
                for rel in files.paths() {
                    let p = self.resolve(rel);
                    t.push(tensor_file::load(&p).map_err(|e| CliError::tensor(&p, e))?);
                }
                let [w_q, w_k, w_v, b_q, b_k, b_v]: [QTensor; 6] = t.try_into().expect("six tensors");
                HeadWeights::new(w_q, w_k, w_v, b_q, b_k, b_v)
                    .map_err(|e| CliError::Format(format!("{}: {e}", self.resolve(&files.w_q).display())))
            })
            .collect()
    }
}

pub fn run_from_commands(design: &DesignParams, path: &Path) -> Result<RunParams, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let commands = decode_stream(&bytes).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    Ok(apply_command_stream(design, &commands)?)
}
