//! Training-run configuration: a flat `key = value` file resolved into a
//! [`RunManifest`] before any compute starts.
//!
//! One file describes one run, so experiment configs stay diffable. Blank
//! lines and `#` comments are allowed; unknown and duplicate keys are
//! rejected. Relative paths are resolved against the config file's
//! directory. Command-line flags override file values after parsing.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use mtrx_core::model::ModelConfig;
use mtrx_core::training::TrainConfig;
use mtrx_core::{Error, Result};

/// Everything a training run needs, fully resolved: paths, label, model
/// shape, and optimization settings. Vocabulary sizes stay 0 until the
/// vocabulary files are loaded.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub train_source: PathBuf,
    pub train_target: PathBuf,
    pub valid_source: PathBuf,
    pub valid_target: PathBuf,
    pub src_vocab: PathBuf,
    pub tgt_vocab: PathBuf,
    pub checkpoint_out: PathBuf,
    pub log_out: PathBuf,
    pub run_label: String,
    /// General-domain corpus mixed into training; set from flags only.
    pub mix: Option<(PathBuf, PathBuf)>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Flag-level overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
    pub seed: Option<u64>,
    pub patience: Option<usize>,
    pub early_stopping: Option<bool>,
    /// A norm bound, or the literal "none" to disable clipping.
    pub grad_clip: Option<String>,
    pub run_label: Option<String>,
}

const PATH_KEYS: &[&str] = &[
    "train_source",
    "train_target",
    "valid_source",
    "valid_target",
    "src_vocab",
    "tgt_vocab",
    "checkpoint_out",
    "log_out",
];

impl RunManifest {
    /// Parse and resolve a config file. Model and training values default
    /// to the stock full-size settings (512/8/3/3/100/4; 5 epochs, learning
    /// rate 5e-4, batch 64, dropout 0.1, early stopping with patience 3);
    /// the eight corpus/vocabulary/output paths are required.
    pub fn from_file(config_path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(config_path)?;
        let base_dir = config_path.parent().unwrap_or_else(|| Path::new("."));
        let default_label = config_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());

        let mut paths: Vec<Option<PathBuf>> = vec![None; PATH_KEYS.len()];
        let mut run_label = default_label;
        // Vocabulary sizes are placeholders until the vocabularies load.
        let mut model = ModelConfig::with_vocab(0, 0);
        let mut train = TrainConfig::default();
        let mut seen: HashSet<String> = HashSet::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_error(config_path, lineno, format!("expected `key = value`, got {line:?}"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(config_error(config_path, lineno, format!("duplicate key `{key}`")));
            }

            if let Some(slot) = PATH_KEYS.iter().position(|&k| k == key) {
                paths[slot] = Some(resolve(base_dir, value));
                continue;
            }
            match key {
                "run_label" => run_label = value.to_string(),
                "d_model" => model.d_model = parse(config_path, lineno, key, value)?,
                "n_heads" => model.n_heads = parse(config_path, lineno, key, value)?,
                "n_encoder_layers" => {
                    model.n_encoder_layers = parse(config_path, lineno, key, value)?
                }
                "n_decoder_layers" => {
                    model.n_decoder_layers = parse(config_path, lineno, key, value)?
                }
                "max_seq_len" => model.max_seq_len = parse(config_path, lineno, key, value)?,
                "expansion" => model.expansion = parse(config_path, lineno, key, value)?,
                "epochs" => train.epochs = parse(config_path, lineno, key, value)?,
                "learning_rate" => train.learning_rate = parse(config_path, lineno, key, value)?,
                "batch_size" => train.batch_size = parse(config_path, lineno, key, value)?,
                "dropout" => train.dropout = parse(config_path, lineno, key, value)?,
                "early_stopping" => {
                    train.early_stopping = parse(config_path, lineno, key, value)?
                }
                "patience" => train.patience = parse(config_path, lineno, key, value)?,
                "seed" => train.seed = parse(config_path, lineno, key, value)?,
                "grad_clip" => train.grad_clip = parse_grad_clip(config_path, lineno, value)?,
                other => {
                    return Err(config_error(
                        config_path,
                        lineno,
                        format!("unknown key `{other}`"),
                    ));
                }
            }
        }

        let missing: Vec<&str> = PATH_KEYS
            .iter()
            .zip(&paths)
            .filter(|(_, p)| p.is_none())
            .map(|(&k, _)| k)
            .collect();
        if !missing.is_empty() {
            return Err(Error::invalid_config(format!(
                "{}: missing required keys: {}",
                config_path.display(),
                missing.join(", ")
            )));
        }
        let mut paths = paths.into_iter().map(Option::unwrap);

        // The model's dropout follows the training setting; there is one knob.
        model.dropout_p = train.dropout;
        Ok(RunManifest {
            train_source: paths.next().unwrap(),
            train_target: paths.next().unwrap(),
            valid_source: paths.next().unwrap(),
            valid_target: paths.next().unwrap(),
            src_vocab: paths.next().unwrap(),
            tgt_vocab: paths.next().unwrap(),
            checkpoint_out: paths.next().unwrap(),
            log_out: paths.next().unwrap(),
            run_label,
            mix: None,
            model,
            train,
        })
    }

    /// Flags win over file values.
    pub fn apply(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(epochs) = overrides.epochs {
            self.train.epochs = epochs;
        }
        if let Some(lr) = overrides.learning_rate {
            self.train.learning_rate = lr;
        }
        if let Some(batch_size) = overrides.batch_size {
            self.train.batch_size = batch_size;
        }
        if let Some(dropout) = overrides.dropout {
            self.train.dropout = dropout;
            self.model.dropout_p = dropout;
        }
        if let Some(seed) = overrides.seed {
            self.train.seed = seed;
        }
        if let Some(patience) = overrides.patience {
            self.train.patience = patience;
        }
        if let Some(early_stopping) = overrides.early_stopping {
            self.train.early_stopping = early_stopping;
        }
        if let Some(clip) = &overrides.grad_clip {
            self.train.grad_clip = if clip == "none" {
                None
            } else {
                Some(clip.parse::<f64>().map_err(|_| {
                    Error::invalid_config(format!(
                        "--grad-clip expects a number or `none`, got {clip:?}"
                    ))
                })?)
            };
        }
        if let Some(label) = &overrides.run_label {
            self.run_label = label.clone();
        }
        Ok(())
    }

    /// Input files the run reads; checked for existence before any compute.
    pub fn input_paths(&self) -> Vec<&Path> {
        let mut inputs = vec![
            self.train_source.as_path(),
            self.train_target.as_path(),
            self.valid_source.as_path(),
            self.valid_target.as_path(),
            self.src_vocab.as_path(),
            self.tgt_vocab.as_path(),
        ];
        if let Some((mix_source, mix_target)) = &self.mix {
            inputs.push(mix_source.as_path());
            inputs.push(mix_target.as_path());
        }
        inputs
    }
}

fn resolve(base_dir: &Path, value: &str) -> PathBuf {
    let path = PathBuf::from(value);
    if path.is_absolute() {
        path
    } else {
        base_dir.join(path)
    }
}

fn config_error(path: &Path, lineno: usize, detail: String) -> Error {
    Error::invalid_config(format!("{}:{}: {detail}", path.display(), lineno + 1))
}

fn parse<T: std::str::FromStr>(
    path: &Path,
    lineno: usize,
    key: &str,
    value: &str,
) -> Result<T> {
    value.parse::<T>().map_err(|_| {
        config_error(path, lineno, format!("invalid value {value:?} for `{key}`"))
    })
}

fn parse_grad_clip(path: &Path, lineno: usize, value: &str) -> Result<Option<f64>> {
    if value == "none" {
        return Ok(None);
    }
    Ok(Some(parse(path, lineno, "grad_clip", value)?))
}
