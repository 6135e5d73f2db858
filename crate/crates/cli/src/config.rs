//! Run configuration: a JSON file whose relative paths resolve against the
//! file's own directory, plus command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vocada_core::metrics::Split;
use vocada_core::selector::SelectorConfig;
use vocada_core::{ClassId, RescoreConfig, ScoreMode, SelectorKind};
use vocada_gateway::GatewayConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub vocabulary: Option<PathBuf>,
    /// Caption file; without it captions come from the gateway.
    pub captions: Option<PathBuf>,
    /// Tag lexicon; the bundled English lexicon when absent.
    pub lexicon: Option<PathBuf>,
    pub class_embeddings: Option<PathBuf>,
    pub phrase_embeddings: Option<PathBuf>,
    pub proposals: Option<PathBuf>,
    pub proposal_embeddings: Option<PathBuf>,
    pub groundtruth: Option<PathBuf>,
    /// Image files for gateway captioning, named by the ground truth `file_name`.
    pub images_dir: Option<PathBuf>,
    pub captioner_prompt: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Groups {
    File(PathBuf),
    Inline(BTreeMap<String, Split>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub selector: SelectorConfig,
    pub rescore: RescoreConfig,
    pub gateway: Option<GatewayConfig>,
    pub groups: Option<Groups>,
    pub concurrency: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            selector: SelectorConfig::default(),
            rescore: RescoreConfig::default(),
            gateway: None,
            groups: None,
            concurrency: 4,
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        cfg.rebase(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn rebase(&mut self, base: &Path) {
        let p = &mut self.paths;
        for field in [
            &mut p.vocabulary,
            &mut p.captions,
            &mut p.lexicon,
            &mut p.class_embeddings,
            &mut p.phrase_embeddings,
            &mut p.proposals,
            &mut p.proposal_embeddings,
            &mut p.groundtruth,
            &mut p.images_dir,
            &mut p.captioner_prompt,
            &mut p.output_dir,
        ] {
            rebase(base, field);
        }
        if let Some(Groups::File(f)) = &mut self.groups {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        if let Some(g) = &mut self.gateway {
            rebase(base, &mut g.cache_dir);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(kind) = o.selector {
            self.selector.kind = kind;
        }
        if let Some(k) = o.topk {
            self.selector.k = k;
        }
        if o.no_fallback {
            self.selector.fallback_on_empty = false;
        }
        if let Some(mode) = o.score_mode {
            self.rescore.score_mode = mode;
        }
        if let Some(n) = o.concurrency {
            self.concurrency = n;
        }
        if let Some(dir) = &o.cache_dir {
            if let Some(g) = &mut self.gateway {
                g.cache_dir = Some(dir.clone());
            }
        }
        if let Some(dir) = &o.output_dir {
            self.paths.output_dir = Some(dir.clone());
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.selector.validate()?;
        self.rescore.validate()?;
        if self.concurrency == 0 {
            return Err(CliError::usage("concurrency must be at least 1"));
        }
        if let Some(g) = &self.gateway {
            g.validate()?;
        }
        Ok(())
    }

    /// Checks that every configured input exists.
    pub fn check_inputs(&self) -> CliResult<()> {
        let p = &self.paths;
        for (name, path) in [
            ("vocabulary", &p.vocabulary),
            ("captions", &p.captions),
            ("lexicon", &p.lexicon),
            ("class_embeddings", &p.class_embeddings),
            ("phrase_embeddings", &p.phrase_embeddings),
            ("proposals", &p.proposals),
            ("proposal_embeddings", &p.proposal_embeddings),
            ("groundtruth", &p.groundtruth),
            ("images_dir", &p.images_dir),
            ("captioner_prompt", &p.captioner_prompt),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(CliError::usage(format!("{name} {} does not exist", path.display())));
                }
            }
        }
        if let Some(Groups::File(f)) = &self.groups {
            if !f.exists() {
                return Err(CliError::usage(format!("groups {} does not exist", f.display())));
            }
        }
        Ok(())
    }

    pub fn load_groups(&self) -> CliResult<Option<BTreeMap<ClassId, Split>>> {
        Ok(match &self.groups {
            None => None,
            Some(Groups::File(f)) => Some(vocada_core::io::read_groups(f)?),
            Some(Groups::Inline(m)) => Some(vocada_core::io::groups_from_map(m.clone())?),
        })
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub selector: Option<SelectorKind>,
    pub topk: Option<usize>,
    pub no_fallback: bool,
    pub score_mode: Option<ScoreMode>,
    pub concurrency: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let cfg = RunConfig::parse(
            r#"{"paths": {"vocabulary": "v.json", "output_dir": "/abs/out"},
                "groups": "groups.json",
                "gateway": {"base_url": "http://x/v1", "model": "m", "cache_dir": "cache"}}"#,
            Path::new("/data/run"),
        )
        .unwrap();
        assert_eq!(cfg.paths.vocabulary.as_deref(), Some(Path::new("/data/run/v.json")));
        assert_eq!(cfg.paths.output_dir.as_deref(), Some(Path::new("/abs/out")));
        assert_eq!(cfg.groups, Some(Groups::File("/data/run/groups.json".into())));
        assert_eq!(
            cfg.gateway.unwrap().cache_dir.as_deref(),
            Some(Path::new("/data/run/cache"))
        );
    }

    #[test]
    fn inline_groups_and_defaults() {
        let cfg = RunConfig::parse(r#"{"groups": {"1": "base", "2": "novel"}}"#, Path::new(".")).unwrap();
        let g = cfg.load_groups().unwrap().unwrap();
        assert_eq!(g[&ClassId(2)], Split::Novel);
        assert_eq!(cfg.concurrency, 4);
        assert_eq!(cfg.selector.k, 1);
        assert!(cfg.selector.fallback_on_empty);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::parse(r#"{"selectr": {}}"#, Path::new(".")).is_err());
        assert!(RunConfig::parse(r#"{"paths": {"vocab": "x"}}"#, Path::new(".")).is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::parse(
            r#"{"selector": {"kind": "baseline", "k": 1}, "gateway": {"base_url": "http://x", "model": "m"}}"#,
            Path::new("."),
        )
        .unwrap();
        cfg.apply(&Overrides {
            selector: Some(SelectorKind::EmbedTopk),
            topk: Some(3),
            no_fallback: true,
            score_mode: Some(ScoreMode::Softmax),
            concurrency: Some(8),
            cache_dir: Some("c".into()),
            output_dir: None,
        });
        assert_eq!(cfg.selector.kind, SelectorKind::EmbedTopk);
        assert_eq!(cfg.selector.k, 3);
        assert!(!cfg.selector.fallback_on_empty);
        assert_eq!(cfg.rescore.score_mode, ScoreMode::Softmax);
        assert_eq!(cfg.concurrency, 8);
        assert_eq!(cfg.gateway.unwrap().cache_dir, Some(PathBuf::from("c")));
        cfg = RunConfig {
            concurrency: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
