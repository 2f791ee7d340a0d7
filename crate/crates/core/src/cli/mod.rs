//! The `narrative-arc` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. A `--config` TOML file
//! supplies default flag values for the chosen subcommand; flags given on the
//! command line win.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "narrative-arc", version, about = "Climax and resolution detection for personal narratives")]
pub struct Cli {
    /// TOML file of flag defaults for the subcommand (keys are flag names).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Repeat for more logging.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct EncoderArgs {
    /// Semantic encoder adapter key.
    #[arg(long, default_value = "xsem.reference")]
    pub encoder: String,
    /// Mental-state encoder adapter key.
    #[arg(long, default_value = "mental.reference")]
    pub mental_encoder: String,
    #[arg(long, default_value_t = 0)]
    pub encoder_seed: u64,
    /// Protagonist used when a narrative has no `protagonist` meta entry.
    #[arg(long, default_value = "I")]
    pub entity: String,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 96)]
    pub d: usize,
    #[arg(long, default_value_t = 12)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub window: usize,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 300)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 30)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.2)]
    pub augment_fraction: f64,
    /// Loss weights for none,climax,resolution; inverse frequency if omitted.
    #[arg(long)]
    pub class_weights: Option<String>,
    #[arg(long)]
    pub no_fusion: bool,
    #[arg(long)]
    pub no_intent: bool,
    #[arg(long)]
    pub no_emotion: bool,
    #[arg(long)]
    pub no_interaction: bool,
    #[arg(long)]
    pub no_story_encoder: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch posts from a dump file or archive URL, filter and gate them into a corpus.
    Ingest {
        /// JSONL dump path, or an http(s) archive base URL.
        #[arg(long)]
        source: String,
        #[arg(long, default_value = "")]
        subreddit: String,
        /// Earliest creation date (YYYY-MM-DD or epoch seconds), inclusive.
        #[arg(long)]
        after: Option<String>,
        /// Latest creation date (YYYY-MM-DD or epoch seconds), exclusive.
        #[arg(long)]
        before: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Story classifier from `train-gate`; without one no gating happens.
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        min_sentences: usize,
        #[arg(long, default_value = "deleted,nsfw,over_18")]
        banned_tags: String,
        #[arg(long, default_value_t = 0.75)]
        threshold: f64,
        #[arg(long, default_value_t = 100)]
        page_size: usize,
    },
    /// Train the story-vs-non-story classifier on `{"text", "story"}` lines.
    TrainGate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 0.1)]
        validation_fraction: f64,
        #[arg(long, default_value_t = 96)]
        width: usize,
        #[command(flatten)]
        encoders: EncoderArgs,
    },
    /// Split a corpus into train/validation/test id lists and corpora.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "0.7,0.1,0.2")]
        ratios: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Descriptive statistics and the position histogram of a labelled corpus.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for the `positions.tsv` column file.
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
    /// Annotation backend.
    Annotate {
        #[command(subcommand)]
        action: AnnotateAction,
    },
    /// Inter-annotator agreement of a store, optionally emitting majority gold labels.
    Agreement {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 3)]
        quota: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Corpus of fully annotated narratives with merged labels.
        #[arg(long)]
        gold_out: Option<PathBuf>,
    },
    /// Train an M-SENSE model.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch losses and validation scores.
        #[arg(long)]
        history_out: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        encoders: EncoderArgs,
    },
    /// Label a corpus with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Mean fusion attention per narrative.
        #[arg(long)]
        attention_out: Option<PathBuf>,
    },
    /// Score predictions against gold labels.
    Evaluate {
        /// Prediction or corpus file with `id` and `labels` per line.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "predictions")]
        system: String,
    },
    /// Run a baseline: random, distribution, heuristic or surprise:<channel>.
    Baseline {
        #[arg(long)]
        name: String,
        /// Labelled corpus to evaluate on.
        #[arg(long)]
        corpus: PathBuf,
        /// Training corpus for the distribution baseline.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Comma-separated seeds for stochastic baselines; defaults to --seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pred_out: Option<PathBuf>,
        /// Directory for `surprise.tsv` curves (surprise baselines only).
        #[arg(long)]
        plot_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 96)]
        width: usize,
        #[command(flatten)]
        encoders: EncoderArgs,
    },
    /// Turning-point distances on synopsis data, for a model or a baseline.
    Tripod {
        #[arg(long)]
        synopses: PathBuf,
        #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
        model: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 96)]
        width: usize,
        #[command(flatten)]
        encoders: EncoderArgs,
    },
    /// Write a seeded synthetic labelled corpus, and optionally a matching post dump.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        narratives: usize,
        #[arg(long, default_value_t = 5)]
        min_len: usize,
        #[arg(long, default_value_t = 15)]
        max_len: usize,
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AnnotateAction {
    /// Serve the annotation HTTP API.
    Serve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 3)]
        quota: usize,
    },
}

/// Failure of a subcommand, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Box<dyn std::error::Error + Send + Sync>),
}

impl<E: std::error::Error + Send + Sync + 'static> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(Box::new(e))
    }
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        CliError::Data(message.into().into())
    }
}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true).mut_subcommands(|s| s.args_override_self(true)))
}

fn parse(argv: &[OsString]) -> Result<Cli, clap::Error> {
    let matches = command().try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

/// Names of the chosen subcommand path, e.g. `["annotate", "serve"]`.
fn subcommand_path(argv: &[OsString]) -> Result<Vec<String>, clap::Error> {
    let mut m = command().try_get_matches_from(argv)?;
    let mut path = Vec::new();
    while let Some((name, sub)) = m.remove_subcommand() {
        path.push(name);
        m = sub;
    }
    Ok(path)
}

/// Config file entries as flags, validated against the subcommand's options.
fn config_flags(path: &std::path::Path, sub: &clap::Command) -> Result<Vec<OsString>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let known: Vec<String> = sub.get_arguments().filter_map(|a| a.get_long().map(String::from)).collect();
    let mut flags = Vec::new();
    for (key, value) in table {
        let flag = key.replace('_', "-");
        if flag == "config" || !known.contains(&flag) {
            return Err(CliError::Usage(format!("unknown config key `{key}` for `{}`", sub.get_name())));
        }
        let rendered = match value {
            toml::Value::Boolean(true) => {
                flags.push(OsString::from(format!("--{flag}")));
                continue;
            }
            toml::Value::Boolean(false) => continue,
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => {
                return Err(CliError::Usage(format!("config key `{key}` has unsupported value {other}")));
            }
        };
        flags.push(OsString::from(format!("--{flag}")));
        flags.push(OsString::from(rendered));
    }
    Ok(flags)
}

/// Re-assembles argv with config-derived flags placed right after the
/// subcommand path, so later command-line flags override them.
fn with_config(argv: &[OsString], config: &std::path::Path) -> Result<Vec<OsString>, CliError> {
    let path = subcommand_path(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut sub = command();
    for name in &path {
        sub = sub
            .find_subcommand(name)
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("unknown subcommand `{name}`")))?;
    }
    let extra = config_flags(config, &sub)?;
    let mut rest: Vec<OsString> = argv[1..].to_vec();
    for name in &path {
        if let Some(pos) = rest.iter().position(|a| a == name.as_str()) {
            rest.remove(pos);
        }
    }
    let mut out = vec![argv[0].clone()];
    out.extend(path.iter().map(OsString::from));
    out.extend(extra);
    out.extend(rest);
    Ok(out)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if argv.is_empty() {
        argv.push("narrative-arc".into());
    }
    let mut cli = match parse(&argv) {
        Ok(cli) => cli,
        Err(e) => return report_clap(e),
    };
    if let Some(config) = cli.config.clone() {
        let merged = match with_config(&argv, &config) {
            Ok(a) => a,
            Err(e) => return report(e),
        };
        cli = match parse(&merged) {
            Ok(cli) => cli,
            Err(e) => return report_clap(e),
        };
    }
    init_logging(cli.verbose);
    match commands::execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => report(e),
    }
}

fn report_clap(e: clap::Error) -> i32 {
    let _ = e.print();
    match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
        _ => EXIT_USAGE,
    }
}

fn report(e: CliError) -> i32 {
    match e {
        CliError::Usage(m) => {
            eprintln!("error: {m}\n\n{}", command().render_usage());
            EXIT_USAGE
        }
        CliError::Data(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<OsString> {
        s.split_whitespace().map(OsString::from).collect()
    }

    #[test]
    fn grammar_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn config_flags_come_before_user_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "ratios = \"0.5,0.25,0.25\"\nout_dir = \"x\"\n").unwrap();
        let argv = args(&format!("na --config {} split --corpus c.jsonl --out-dir y", cfg.display()));
        let merged = with_config(&argv, &cfg).unwrap();
        let cli = parse(&merged).unwrap();
        match cli.command {
            Command::Split { ratios, out_dir, .. } => {
                assert_eq!(ratios, "0.5,0.25,0.25");
                assert_eq!(out_dir, PathBuf::from("y"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "bogus = 1\n").unwrap();
        let argv = args(&format!("na split --corpus c.jsonl --config {}", cfg.display()));
        assert!(matches!(with_config(&argv, &cfg), Err(CliError::Usage(_))));
        assert_eq!(run(argv), EXIT_USAGE);
    }

    #[test]
    fn boolean_and_nested_subcommands() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "no_fusion = true\nd = 24\nquota = 2\n").unwrap();
        let argv = args(&format!("na train --train t.jsonl --out m.json --config {}", cfg.display()));
        assert!(matches!(with_config(&argv, &cfg), Err(CliError::Usage(_))));
        std::fs::write(&cfg, "no_fusion = true\nd = 24\n").unwrap();
        let cli = parse(&with_config(&argv, &cfg).unwrap()).unwrap();
        match cli.command {
            Command::Train { model, .. } => assert!(model.no_fusion && model.d == 24),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&cfg, "quota = 2\n").unwrap();
        let argv = args(&format!("na annotate serve --corpus c --store s --config {}", cfg.display()));
        let cli = parse(&with_config(&argv, &cfg).unwrap()).unwrap();
        assert!(matches!(cli.command, Command::Annotate { action: AnnotateAction::Serve { quota: 2, .. } }));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(args("na --help")), EXIT_OK);
        assert_eq!(run(args("na split --bogus")), EXIT_USAGE);
        assert_eq!(run(args("na split --corpus /definitely/missing.jsonl")), EXIT_DATA);
    }
}
