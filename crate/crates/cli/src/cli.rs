//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vocada_core::{ScoreMode, SelectorKind};

use crate::commands;
use crate::config::{Groups, Overrides, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "vocada", version, about = "Per-image vocabulary adaptation for open-vocabulary detection")]
pub struct Cli {
    /// More logging; repeat for debug output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract noun phrases from captions.
    ExtractNouns {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select a vocabulary for every image.
    Adapt {
        #[command(flatten)]
        common: Common,
        /// Noun phrases; extracted from --captions when absent.
        #[arg(long)]
        nouns: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify proposals against each image's adapted vocabulary.
    Rescore {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        adapted: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detections against ground truth, writing metrics.json and report.md.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        detections: PathBuf,
        /// Adapted vocabularies, for vocabulary precision and recall.
        #[arg(long)]
        adapted: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run every stage from a config file.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub vocabulary: Option<PathBuf>,
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub class_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub phrase_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub proposals: Option<PathBuf>,
    #[arg(long)]
    pub proposal_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub groundtruth: Option<PathBuf>,
    /// Base/novel split file.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long)]
    pub selector: Option<SelectorKind>,
    #[arg(long)]
    pub topk: Option<usize>,
    /// Keep empty selections empty instead of using the full vocabulary.
    #[arg(long)]
    pub no_fallback: bool,
    #[arg(long)]
    pub score_mode: Option<ScoreMode>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

impl Common {
    fn overrides(&self, output_dir: Option<PathBuf>) -> Overrides {
        Overrides {
            selector: self.selector,
            topk: self.topk,
            no_fallback: self.no_fallback,
            score_mode: self.score_mode,
            concurrency: self.concurrency,
            cache_dir: self.cache_dir.clone(),
            output_dir,
        }
    }

    /// The config file, or defaults, with flags applied on top.
    pub fn resolve(&self, output_dir: Option<PathBuf>) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let p = &mut cfg.paths;
        for (slot, flag) in [
            (&mut p.vocabulary, &self.vocabulary),
            (&mut p.captions, &self.captions),
            (&mut p.lexicon, &self.lexicon),
            (&mut p.class_embeddings, &self.class_embeddings),
            (&mut p.phrase_embeddings, &self.phrase_embeddings),
            (&mut p.proposals, &self.proposals),
            (&mut p.proposal_embeddings, &self.proposal_embeddings),
            (&mut p.groundtruth, &self.groundtruth),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        if let Some(g) = &self.groups {
            cfg.groups = Some(Groups::File(g.clone()));
        }
        cfg.apply(&self.overrides(output_dir));
        cfg.validate()?;
        cfg.check_inputs()?;
        Ok(cfg)
    }
}

fn missing(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{} does not exist", path.display())))
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::ExtractNouns { common, out } => {
            let cfg = common.resolve(None)?;
            let nouns = commands::cmd_extract_nouns(&cfg, &out)?;
            println!("extracted noun phrases for {} captions", nouns.len());
        }
        Command::Adapt { common, nouns, out } => {
            if let Some(n) = &nouns {
                missing(n)?;
            }
            let cfg = common.resolve(None)?;
            let (_, summary) = commands::cmd_adapt(&cfg, nouns.as_deref(), &out)?;
            println!("{summary}");
        }
        Command::Rescore { common, adapted, out } => {
            missing(&adapted)?;
            let cfg = common.resolve(None)?;
            let dets = commands::cmd_rescore(&cfg, &adapted, &out)?;
            println!("wrote {} detections", dets.len());
        }
        Command::Eval {
            common,
            detections,
            adapted,
            out_dir,
        } => {
            missing(&detections)?;
            if let Some(a) = &adapted {
                missing(a)?;
            }
            let cfg = common.resolve(None)?;
            commands::cmd_eval(&cfg, &detections, adapted.as_deref(), &out_dir)?;
            println!("wrote {}", out_dir.join(commands::METRICS_FILE).display());
        }
        Command::Run { common, output_dir } => {
            let cfg = common.resolve(output_dir)?;
            let outcome = commands::cmd_run(&cfg)?;
            println!("{}", outcome.summary);
            println!("outputs in {}", outcome.output_dir.display());
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "vocada", "-vv", "adapt", "--selector", "embed-topk", "--topk", "3", "--no-fallback", "--out", "a.jsonl",
        ])
        .unwrap();
        assert_eq!(cli.verbose, 2);
        match cli.command {
            Command::Adapt { common, out, nouns } => {
                assert_eq!(common.selector, Some(SelectorKind::EmbedTopk));
                assert_eq!(common.topk, Some(3));
                assert!(common.no_fallback);
                assert!(nouns.is_none());
                assert_eq!(out, PathBuf::from("a.jsonl"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_flags_exit_one() {
        assert_eq!(main_with_args(["vocada", "adapt", "--selector", "nope", "--out", "x"]), 1);
        assert_eq!(main_with_args(["vocada", "frobnicate"]), 1);
        assert_eq!(main_with_args(["vocada", "--help"]), 0);
    }
}
