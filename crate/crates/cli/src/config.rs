//! Audit configuration: a TOML file, overridden by `FAIRPROBE_*` environment
//! variables, overridden in turn by command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use fairprobe::backend::{GenerationParams, HttpConfig, RetryPolicy};
use fairprobe::polarity::SkipGramParams;
use fairprobe::ExperimentKind;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
    Replay,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            "replay" => Ok(BackendKind::Replay),
            other => Err(format!(
                "unknown backend `{other}` (expected http, mock or replay)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    backend: BackendSection,
    data: DataSection,
    plan: PlanSection,
    analysis: AnalysisSection,
    output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BackendSection {
    kind: Option<BackendKind>,
    base_url: Option<String>,
    api_key_env: Option<String>,
    model_name: Option<String>,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    generation_seed: Option<u64>,
    parallelism: Option<usize>,
    timeout_secs: Option<u64>,
    cache_dir: Option<PathBuf>,
    mock_profile: Option<PathBuf>,
    retry: Option<RetryPolicy>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataSection {
    professions: Option<PathBuf>,
    names: Option<PathBuf>,
    questions: Option<PathBuf>,
    sector_prompts: Option<PathBuf>,
    stopwords: Option<PathBuf>,
    reference_stats: Option<PathBuf>,
    reference_label: Option<String>,
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlanSection {
    kind: Option<ExperimentKind>,
    replicates: Option<u32>,
    cycle_wrong_options: Option<bool>,
    control_replicates: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AnalysisSection {
    disparity_threshold: Option<f64>,
    top_k: Option<usize>,
    skipgram: Option<SkipGramParams>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

/// Values given on the command line; `None` leaves lower layers in charge.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub backend: Option<BackendKind>,
    pub kind: Option<ExperimentKind>,
    pub replicates: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataPaths {
    pub professions: Option<PathBuf>,
    pub names: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub sector_prompts: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub reference_stats: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub backend: BackendKind,
    pub http: HttpConfig,
    pub params: GenerationParams,
    pub parallelism: usize,
    pub retry: RetryPolicy,
    pub cache_dir: Option<PathBuf>,
    pub mock_profile: Option<PathBuf>,
    pub data: DataPaths,
    pub reference_label: Option<String>,
    pub kind: ExperimentKind,
    pub replicates: u32,
    pub cycle_wrong_options: bool,
    pub control_replicates: Option<u32>,
    pub disparity_threshold: f64,
    pub top_k: usize,
    pub skipgram: SkipGramParams,
    pub out_dir: PathBuf,
    /// Overrides the mock profile's seed and the embedding training seed.
    pub seed: Option<u64>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            http: HttpConfig::default(),
            params: GenerationParams::default(),
            parallelism: 4,
            retry: RetryPolicy::default(),
            cache_dir: None,
            mock_profile: None,
            data: DataPaths::default(),
            reference_label: None,
            kind: ExperimentKind::SepSufMedical,
            replicates: 20,
            cycle_wrong_options: false,
            control_replicates: None,
            disparity_threshold: fairprobe::metrics::DEFAULT_DISPARITY_THRESHOLD,
            top_k: 20,
            skipgram: SkipGramParams::default(),
            out_dir: PathBuf::from("fairprobe-out"),
            seed: None,
        }
    }
}

fn parse_env<T: FromStr>(name: &str, value: String) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Config(format!("{name}={value}: {e}")))
}

impl AuditConfig {
    /// Resolves the configuration from an optional file, an environment
    /// lookup and command-line overrides, then validates it. Relative paths
    /// in the file are taken relative to the file's directory.
    pub fn resolve(
        file: Option<&Path>,
        env: &dyn Fn(&str) -> Option<String>,
        overrides: &Overrides,
    ) -> Result<Self, CliError> {
        let (fc, base) = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => CliError::FileNotFound(path.to_path_buf()),
                    _ => CliError::io(path, e),
                })?;
                let fc: FileConfig = toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                (fc, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let rel = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

        let mut cfg = AuditConfig::default();
        let b = fc.backend;
        if let Some(k) = b.kind {
            cfg.backend = k;
        }
        if let Some(v) = b.base_url {
            cfg.http.base_url = v;
        }
        if let Some(v) = b.api_key_env {
            cfg.http.api_key_env = v;
        }
        if let Some(v) = b.model_name {
            cfg.params.model_name = v;
        }
        if let Some(v) = b.temperature {
            cfg.params.temperature = v;
        }
        if let Some(v) = b.max_tokens {
            cfg.params.max_tokens = v;
        }
        cfg.params.seed = b.generation_seed;
        if let Some(v) = b.parallelism {
            cfg.parallelism = v;
        }
        if let Some(v) = b.timeout_secs {
            cfg.http.timeout = Duration::from_secs(v);
        }
        if let Some(v) = b.retry {
            cfg.retry = v;
        }
        cfg.cache_dir = rel(b.cache_dir);
        cfg.mock_profile = rel(b.mock_profile);
        let d = fc.data;
        cfg.data = DataPaths {
            professions: rel(d.professions),
            names: rel(d.names),
            questions: rel(d.questions),
            sector_prompts: rel(d.sector_prompts),
            stopwords: rel(d.stopwords),
            reference_stats: rel(d.reference_stats),
            embeddings: rel(d.embeddings),
        };
        cfg.reference_label = d.reference_label;
        if let Some(v) = fc.plan.kind {
            cfg.kind = v;
        }
        if let Some(v) = fc.plan.replicates {
            cfg.replicates = v;
        }
        if let Some(v) = fc.plan.cycle_wrong_options {
            cfg.cycle_wrong_options = v;
        }
        cfg.control_replicates = fc.plan.control_replicates;
        if let Some(v) = fc.analysis.disparity_threshold {
            cfg.disparity_threshold = v;
        }
        if let Some(v) = fc.analysis.top_k {
            cfg.top_k = v;
        }
        if let Some(v) = fc.analysis.skipgram {
            cfg.skipgram = v;
        }
        if let Some(v) = rel(fc.output.dir) {
            cfg.out_dir = v;
        }
        let mut seed = fc.seed;

        // Environment layer.
        let var = |name: &str| env(name).filter(|v| !v.trim().is_empty());
        if let Some(v) = var("FAIRPROBE_BASE_URL") {
            cfg.http.base_url = v;
        }
        if let Some(v) = var("FAIRPROBE_MODEL") {
            cfg.params.model_name = v;
        }
        if let Some(v) = var("FAIRPROBE_TEMPERATURE") {
            cfg.params.temperature = parse_env("FAIRPROBE_TEMPERATURE", v)?;
        }
        if let Some(v) = var("FAIRPROBE_PARALLELISM") {
            cfg.parallelism = parse_env("FAIRPROBE_PARALLELISM", v)?;
        }
        if let Some(v) = var("FAIRPROBE_BACKEND") {
            cfg.backend = parse_env("FAIRPROBE_BACKEND", v)?;
        }
        if let Some(v) = var("FAIRPROBE_OUT_DIR") {
            cfg.out_dir = PathBuf::from(v);
        }
        if let Some(v) = var("FAIRPROBE_SEED") {
            seed = Some(parse_env("FAIRPROBE_SEED", v)?);
        }

        // Flag layer.
        if let Some(v) = &overrides.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = overrides.seed {
            seed = Some(v);
        }
        if let Some(v) = overrides.backend {
            cfg.backend = v;
        }
        if let Some(v) = overrides.kind {
            cfg.kind = v;
        }
        if let Some(v) = overrides.replicates {
            cfg.replicates = v;
        }
        if let Some(s) = seed {
            cfg.skipgram.seed = s;
        }
        cfg.seed = seed;

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.parallelism == 0 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.disparity_threshold) {
            return Err(CliError::Config(format!(
                "disparity_threshold {} outside [0, 1]",
                self.disparity_threshold
            )));
        }
        if self.top_k == 0 {
            return Err(CliError::Config("top_k must be at least 1".into()));
        }
        if self.backend == BackendKind::Replay && self.cache_dir.is_none() {
            return Err(CliError::Config(
                "the replay backend needs backend.cache_dir".into(),
            ));
        }
        let d = &self.data;
        let files = [
            &d.professions,
            &d.names,
            &d.questions,
            &d.sector_prompts,
            &d.stopwords,
            &d.reference_stats,
            &d.embeddings,
            &self.mock_profile,
        ];
        for path in files.into_iter().flatten() {
            if !path.is_file() {
                return Err(CliError::FileNotFound(path.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| map.get(k).cloned()
    }

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("audit.toml");
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn defaults() {
        let cfg = AuditConfig::resolve(None, &env_of(&[]), &Overrides::default()).unwrap();
        assert_eq!(cfg.params.temperature, 0.5);
        assert_eq!(cfg.params.max_tokens, 200);
        assert_eq!(cfg.backend, BackendKind::Mock);
    }

    #[test]
    fn precedence_flags_env_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            "seed = 1\n[backend]\nmodel_name = \"file-model\"\ntemperature = 0.2\nparallelism = 2\n[output]\ndir = \"out\"\n",
        );
        let env = env_of(&[("FAIRPROBE_MODEL", "env-model"), ("FAIRPROBE_SEED", "5")]);
        let cfg = AuditConfig::resolve(Some(&path), &env, &Overrides::default()).unwrap();
        assert_eq!(cfg.params.model_name, "env-model");
        assert_eq!(cfg.params.temperature, 0.2);
        assert_eq!(cfg.parallelism, 2);
        assert_eq!(cfg.seed, Some(5));
        assert_eq!(cfg.out_dir, dir.path().join("out"));

        let flags = Overrides {
            seed: Some(9),
            out_dir: Some(PathBuf::from("/tmp/x")),
            ..Overrides::default()
        };
        let cfg = AuditConfig::resolve(Some(&path), &env, &flags).unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.skipgram.seed, 9);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let hot = write_config(dir.path(), "[backend]\ntemperature = 3.0\n");
        assert!(matches!(
            AuditConfig::resolve(Some(&hot), &env_of(&[]), &Overrides::default()),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            AuditConfig::resolve(
                None,
                &env_of(&[("FAIRPROBE_PARALLELISM", "many")]),
                &Overrides::default()
            ),
            Err(CliError::Config(_))
        ));
        let unknown = write_config(dir.path(), "[backend]\napi_key = \"sk-123\"\n");
        assert!(matches!(
            AuditConfig::resolve(Some(&unknown), &env_of(&[]), &Overrides::default()),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn missing_data_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), "[data]\nprofessions = \"nope.csv\"\n");
        assert!(matches!(
            AuditConfig::resolve(Some(&path), &env_of(&[]), &Overrides::default()),
            Err(CliError::FileNotFound(p)) if p.ends_with("nope.csv")
        ));
        assert!(matches!(
            AuditConfig::resolve(
                Some(&dir.path().join("absent.toml")),
                &env_of(&[]),
                &Overrides::default()
            ),
            Err(CliError::FileNotFound(_))
        ));
    }

    #[test]
    fn replay_requires_cache_dir() {
        let flags = Overrides {
            backend: Some(BackendKind::Replay),
            ..Overrides::default()
        };
        assert!(matches!(
            AuditConfig::resolve(None, &env_of(&[]), &flags),
            Err(CliError::Config(_))
        ));
    }
}
