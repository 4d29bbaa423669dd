//! TOML run configuration. Every section is optional; command-line flags are
//! applied on top and the merged result is dumped next to the stage outputs.

use std::fs;
use std::path::{Path, PathBuf};

use disagree_gat::corpus::PairFormat;
use disagree_gat::eval::DEFAULT_TOP_N;
use disagree_gat::featurize::MentionPolicy;
use disagree_gat::gat::GatConfig;
use disagree_gat::graph::DEFAULT_RATIOS;
use disagree_gat::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub pairs: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            pairs: None,
            entities: None,
            embeddings: None,
            lexicon: None,
            categories: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    pub dedup_nodes: bool,
    pub group_split: bool,
    pub static_oversample: bool,
    pub append_raw_sentiment: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Format of the pair, prediction and attention files this tool writes.
    pub format: PairFormat,
    /// Drop pairs that mention no listed entity.
    pub filter_entities: bool,
    pub mention_policy: MentionPolicy,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            format: PairFormat::Csv,
            filter_entities: true,
            mention_policy: MentionPolicy::First,
            split: DEFAULT_RATIOS,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    /// Most frequent entities first.
    #[default]
    Frequency,
    /// Ascending disagreement percentage.
    Disagreement,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub bins: usize,
    pub top_n: usize,
    pub sort: SortOrder,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            bins: 20,
            top_n: DEFAULT_TOP_N,
            sort: SortOrder::Frequency,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub flags: Flags,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub model: GatConfig,
    pub report: ReportConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if config.model.dropout != config.train.dropout {
            return Err(CliError::Config(
                "set the dropout rate under [train]; [model].dropout is derived from it".into(),
            ));
        }
        Ok(config)
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Reconciles duplicated settings, validates values and input paths, and
    /// creates the output directory.
    pub fn finalize(&mut self) -> CliResult<()> {
        self.flags.static_oversample |= self.train.static_oversample;
        self.train.static_oversample = self.flags.static_oversample;
        self.flags.append_raw_sentiment |= self.model.append_raw_sentiment;
        self.model.append_raw_sentiment = self.flags.append_raw_sentiment;
        self.model.dropout = self.train.dropout;

        let invalid = |e: disagree_gat::Error| CliError::Config(e.to_string());
        self.train.validate().map_err(invalid)?;
        self.model.validate().map_err(invalid)?;
        let total: f64 = self.data.split.iter().sum();
        if self.data.split.iter().any(|r| r.is_nan() || *r < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(CliError::Config(format!("split ratios {:?} must be non-negative and sum to 1", self.data.split)));
        }
        if self.report.bins == 0 || self.report.top_n == 0 {
            return Err(CliError::Config("report.bins and report.top_n must be at least 1".into()));
        }
        let p = &self.paths;
        for (name, path) in [
            ("pairs", &p.pairs),
            ("entities", &p.entities),
            ("embeddings", &p.embeddings),
            ("lexicon", &p.lexicon),
            ("categories", &p.categories),
        ] {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(CliError::Config(format!("{name} file {} does not exist", path.display())));
                }
            }
        }
        fs::create_dir_all(&p.out)
            .map_err(|e| CliError::Config(format!("cannot create output dir {}: {e}", p.out.display())))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialise config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use disagree_gat::train::BatchMode;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::parse(
            "[train]\nseed = 7\nbatch = 16\ndropout = 0.3\n[model]\ndropout = 0.3\n[model.layer1]\nheads = 2\nembed_out = 3\nsent_out = 1\n[flags]\ndedup_nodes = true\n",
        )
        .unwrap();
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.train.batch, BatchMode::Size(16));
        assert_eq!(c.model.layer1.heads, 2);
        assert_eq!(c.model.layer2.heads, 8);
        assert!(c.flags.dedup_nodes);
    }

    #[test]
    fn unknown_keys_and_split_dropout_are_rejected() {
        for text in ["[train]\nsed = 1\n", "[nope]\n", "[model.layer1]\nheads = 2\nwidth = 3\n", "[model]\ndropout = 0.2\n"] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::default();
        c.paths.out = dir.path().join("o");
        c.paths.categories = None;
        c.train.batch = BatchMode::Size(8);
        c.flags.append_raw_sentiment = true;
        c.finalize().unwrap();
        assert!(c.model.append_raw_sentiment);
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn finalize_checks_values_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        let base = || {
            let mut c = RunConfig::default();
            c.paths.out = dir.path().to_path_buf();
            c
        };
        let mut c = base();
        c.data.split = [0.5, 0.5, 0.5];
        assert!(matches!(c.finalize(), Err(CliError::Config(_))));
        let mut c = base();
        c.paths.pairs = Some(dir.path().join("missing.csv"));
        assert!(matches!(c.finalize(), Err(CliError::Config(_))));
        let mut c = base();
        c.train.dropout = 1.0;
        assert!(matches!(c.finalize(), Err(CliError::Config(_))));
        let mut c = base();
        c.report.bins = 0;
        assert!(matches!(c.finalize(), Err(CliError::Config(_))));
    }
}
