use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{AnnotateAction, Cli, CliError, Command, EncoderArgs, ModelArgs};
use crate::annotation::{serve, AnnotationService, AnnotationStore};
use crate::baselines::{
    fit_positional, surprise_series, DistributionBaseline, HeuristicBaseline, RandomBaseline, SurpriseBaseline,
};
use crate::corpus::{corpus_stats, load_corpus, save_corpus, split_corpus, Corpus, Label, LabelSequence};
use crate::encoders::{
    AdapterRegistry, CacheKey, CachedChannels, Channel, ChannelSource, EmbeddingCache, EncoderConfig, EncoderSet,
    SentenceEncoder,
};
use crate::eval::{evaluate, evaluate_predictions, evaluate_turning_points, load_synopses, System};
use crate::fsutil::write_atomic;
use crate::ingest::{
    evaluate_story_classifier, fetch_posts, filter_posts, gate_corpus, train_story_classifier, ArchiveClient,
    ClassifierConfig, FilterConfig, PostQuery, PostSource, RawPost, StoryClassifier,
};
use crate::msense::{
    extract_fusion_attention, predict_channels, train, MSenseConfig, MSenseModel, MSenseSystem, Prediction,
};
use crate::neuralcore::ParameterSet;
use crate::synthetic::{synthetic_text_corpus, SyntheticConfig};

type Result<T> = std::result::Result<T, CliError>;

pub(super) fn execute(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Ingest {
            source,
            subreddit,
            after,
            before,
            out,
            classifier,
            min_sentences,
            banned_tags,
            threshold,
            page_size,
        } => {
            let filter = FilterConfig {
                min_sentences,
                banned_tags: split_list(&banned_tags).into_iter().collect(),
                story_threshold: threshold,
            };
            filter.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let query = PostQuery {
                subreddit,
                after: after.as_deref().map(parse_time).transpose()?,
                before: before.as_deref().map(parse_time).transpose()?,
            };
            let source = if source.starts_with("http://") || source.starts_with("https://") {
                PostSource::Archive(ArchiveClient {
                    page_size,
                    ..ArchiveClient::new(source)
                })
            } else {
                PostSource::Dump(PathBuf::from(source))
            };
            ingest(&source, &query, &filter, classifier.as_deref(), &out)
        }
        Command::TrainGate {
            data,
            out,
            epochs,
            lr,
            batch,
            validation_fraction,
            width,
            encoders,
        } => {
            let config = ClassifierConfig {
                lr,
                epochs,
                batch,
                seed,
                validation_fraction,
            };
            train_gate(&data, &out, &config, &encoders, width)
        }
        Command::Split { corpus, ratios, out_dir } => {
            let ratios = parse_floats(&ratios, 3, "--ratios")?;
            split(&corpus, [ratios[0], ratios[1], ratios[2]], seed, &out_dir)
        }
        Command::Stats {
            corpus,
            bins,
            out,
            plot_dir,
        } => stats(&corpus, bins, out.as_deref(), plot_dir.as_deref()),
        Command::Annotate {
            action:
                AnnotateAction::Serve {
                    corpus,
                    store,
                    addr,
                    quota,
                },
        } => {
            let addr = addr
                .parse()
                .map_err(|e| CliError::Usage(format!("--addr {addr}: {e}")))?;
            let service = AnnotationService::new(open_corpus(&corpus)?, AnnotationStore::open(&store)?, quota)?;
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(serve(Arc::new(Mutex::new(service)), addr))?;
            Ok(())
        }
        Command::Agreement {
            corpus,
            store,
            quota,
            out,
            gold_out,
        } => {
            let service = AnnotationService::new(open_corpus(&corpus)?, AnnotationStore::open(&store)?, quota)?;
            let snapshot = service.agreement_snapshot()?;
            emit(out.as_deref(), &snapshot)?;
            if let Some(path) = gold_out {
                save_corpus(&service.gold_corpus()?, &path)?;
            }
            Ok(())
        }
        Command::Train {
            train: train_path,
            val,
            out,
            history_out,
            model,
            encoders,
        } => {
            let config = msense_config(&model, seed)?;
            let train_corpus = open_corpus(&train_path)?;
            let val_corpus = match val {
                Some(p) => open_corpus(&p)?,
                None => Corpus::new(),
            };
            let settings = EncoderSettings::from_args(&encoders, config.d);
            let source = settings.source()?;
            let (trained, history) = train(MSenseModel::new(config)?, &train_corpus, &val_corpus, source.as_ref(), None)?;
            source.flush()?;
            let mut snapshot = trained.to_json();
            snapshot["encoder"] = serde_json::to_value(&settings)?;
            write_atomic(&out, &serde_json::to_vec(&snapshot)?)?;
            if let Some(path) = history_out {
                write_json(&path, &history)?;
            }
            println!(
                "{}",
                json!({"epochs": history.epochs.len(), "best_epoch": history.best_epoch,
                       "best_validation_macro_f1": history.best_val_macro_f1})
            );
            Ok(())
        }
        Command::Predict {
            model,
            corpus,
            out,
            attention_out,
        } => predict(&model, &corpus, &out, attention_out.as_deref()),
        Command::Evaluate { pred, gold, out, system } => {
            let preds = read_label_file(&pred)?;
            let golds = read_label_file(&gold)?;
            let config = json!({"system": system, "pred_sha256": file_sha(&pred)?, "gold_sha256": file_sha(&gold)?});
            let report = evaluate_predictions(&system, &preds, &golds, &config)?;
            emit(out.as_deref(), &report)
        }
        Command::Baseline {
            name,
            corpus,
            train,
            seeds,
            out,
            pred_out,
            plot_dir,
            width,
            encoders,
        } => {
            let seeds = match seeds {
                Some(s) => parse_seeds(&s)?,
                None => vec![seed],
            };
            let system = baseline(&name, train.as_deref(), &encoders, width)?;
            let corpus = open_corpus(&corpus)?;
            let config = json!({"baseline": name, "seeds": seeds, "width": width,
                                "encoder": EncoderSettings::from_args(&encoders, width)});
            let report = evaluate(system.as_ref(), &corpus, &seeds, &config)?;
            if let Some(path) = pred_out {
                let mut lines = Vec::new();
                for e in corpus.entries() {
                    let entity = e.narrative.meta.get("protagonist").unwrap_or(&encoders.entity);
                    let labels = system
                        .predict(&e.narrative, entity, seeds[0])
                        .map_err(CliError::Data)?;
                    lines.push(json!({"id": e.narrative.id, "labels": labels.labels}));
                }
                write_jsonl(&path, &lines)?;
            }
            if let (Some(dir), Some(channel)) = (plot_dir, name.strip_prefix("surprise:")) {
                let s = SurpriseBaseline {
                    channel: parse_channel(channel)?,
                    encoders: EncoderSettings::from_args(&encoders, width).encoder_set()?,
                };
                let mut tsv = String::from("id\tindex\tsurprise\n");
                for e in corpus.entries() {
                    let entity = e.narrative.meta.get("protagonist").unwrap_or(&encoders.entity);
                    let series = surprise_series(&s.embeddings(&e.narrative, entity)?);
                    for (i, v) in series.iter().enumerate() {
                        tsv.push_str(&format!("{}\t{i}\t{v}\n", e.narrative.id));
                    }
                }
                std::fs::create_dir_all(&dir)?;
                write_atomic(&dir.join("surprise.tsv"), tsv.as_bytes())?;
            }
            emit(out.as_deref(), &report)
        }
        Command::Tripod {
            synopses,
            model,
            baseline: name,
            train,
            out,
            width,
            encoders,
        } => {
            let synopses = load_synopses(&synopses)?;
            let system: Box<dyn System> = match (model, name) {
                (Some(path), _) => {
                    let (model, settings) = load_model(&path)?;
                    Box::new(MSenseSystem::new(model, settings.encoder_set()?))
                }
                (None, Some(name)) => baseline(&name, train.as_deref(), &encoders, width)?,
                (None, None) => return Err(CliError::Usage("tripod needs --model or --baseline".into())),
            };
            let report = evaluate_turning_points(system.as_ref(), &synopses, seed)?;
            emit(out.as_deref(), &report)
        }
        Command::Synth {
            out,
            narratives,
            min_len,
            max_len,
            dump,
        } => {
            if min_len < 2 || min_len > max_len {
                return Err(CliError::Usage("need 2 <= --min-len <= --max-len".into()));
            }
            let corpus = synthetic_text_corpus(&SyntheticConfig {
                narratives,
                min_len,
                max_len,
                seed,
                ..Default::default()
            });
            save_corpus(&corpus, &out)?;
            if let Some(path) = dump {
                let posts: Vec<RawPost> = corpus
                    .entries()
                    .iter()
                    .enumerate()
                    .map(|(i, e)| RawPost {
                        id: e.narrative.id.clone(),
                        title: e.narrative.title.clone(),
                        body: e.narrative.texts().collect::<Vec<_>>().join(" "),
                        tags: Default::default(),
                        over_18: false,
                        subreddit: "synthetic".into(),
                        created_utc: 1_600_000_000 + i as i64 * 60,
                    })
                    .collect();
                write_jsonl(&path, &posts)?;
            }
            Ok(())
        }
    }
}

/// Encoder choice recorded next to trained weights so prediction reuses it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EncoderSettings {
    semantic: String,
    mental: String,
    width: usize,
    seed: u64,
    entity: String,
}

/// Channel source that may write through to the embedding cache.
struct Source {
    encoders: EncoderSet,
    cached: Option<CachedChannels>,
}

impl Source {
    fn as_ref(&self) -> &dyn ChannelSource {
        match &self.cached {
            Some(c) => c,
            None => &self.encoders,
        }
    }

    fn flush(&self) -> Result<()> {
        if let Some(c) = &self.cached {
            c.flush()?;
        }
        Ok(())
    }
}

impl EncoderSettings {
    fn from_args(args: &EncoderArgs, width: usize) -> Self {
        Self {
            semantic: args.encoder.clone(),
            mental: args.mental_encoder.clone(),
            width,
            seed: args.encoder_seed,
            entity: args.entity.clone(),
        }
    }

    fn config(&self) -> EncoderConfig {
        EncoderConfig {
            width: self.width,
            seed: self.seed,
            ..EncoderConfig::default()
        }
    }

    fn semantic(&self) -> Result<Arc<dyn SentenceEncoder>> {
        Ok(AdapterRegistry::with_defaults().semantic(&self.semantic, &self.config())?)
    }

    fn encoder_set(&self) -> Result<EncoderSet> {
        let registry = AdapterRegistry::with_defaults();
        let mental = registry.mental(&self.mental, &self.config())?;
        Ok(EncoderSet::new(self.semantic()?, mental)?.with_entity(self.entity.clone()))
    }

    fn source(&self) -> Result<Source> {
        let encoders = self.encoder_set()?;
        let key = CacheKey {
            adapter: format!("{}+{}", self.semantic, self.mental),
            width: self.width,
            seed: self.seed,
        };
        let cached = EmbeddingCache::from_env(&key)?.map(|cache| CachedChannels::new(encoders.clone(), cache));
        Ok(Source { encoders, cached })
    }
}

fn msense_config(m: &ModelArgs, seed: u64) -> Result<MSenseConfig> {
    let class_weights = match &m.class_weights {
        Some(s) => {
            let w = parse_floats(s, 3, "--class-weights")?;
            Some([w[0], w[1], w[2]])
        }
        None => None,
    };
    let config = MSenseConfig {
        d: m.d,
        n_heads: m.heads,
        n_layers: m.layers,
        window: m.window,
        dropout: m.dropout,
        lr: m.lr,
        batch_narratives: m.batch,
        use_fusion: !m.no_fusion,
        use_intent: !m.no_intent,
        use_emotion: !m.no_emotion,
        use_interaction: !m.no_interaction,
        use_story_encoder: !m.no_story_encoder,
        max_epochs: m.max_epochs,
        patience: m.patience,
        seed,
        augment_fraction: m.augment_fraction,
        class_weights,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn load_model(path: &Path) -> Result<(MSenseModel, EncoderSettings)> {
    let value: serde_json::Value = serde_json::from_slice(&std::fs::read(path)?)?;
    let settings: EncoderSettings = match value.get("encoder") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => return Err(CliError::data(format!("{}: no encoder settings in model file", path.display()))),
    };
    let model = MSenseModel::from_json(value)?;
    Ok((model, settings))
}

fn predict(model_path: &Path, corpus_path: &Path, out: &Path, attention_out: Option<&Path>) -> Result<()> {
    let (model, settings) = load_model(model_path)?;
    let corpus = open_corpus(corpus_path)?;
    let source = settings.source()?;
    let mut lines = Vec::with_capacity(corpus.len());
    let mut maps = Vec::new();
    for e in corpus.entries() {
        let channels = source.as_ref().channels(&e.narrative)?;
        let p: Prediction = predict_channels(&model, &e.narrative.id, &channels)?;
        lines.push(p);
        if attention_out.is_some() {
            let map = extract_fusion_attention(&model, &e.narrative, source.as_ref())?;
            maps.push(json!({"id": map.narrative_id, "mean": map.mean(), "slots": model.slot_roles()}));
        }
    }
    source.flush()?;
    write_jsonl(out, &lines)?;
    if let Some(path) = attention_out {
        write_jsonl(path, &maps)?;
    }
    Ok(())
}

fn baseline(name: &str, train: Option<&Path>, encoders: &EncoderArgs, width: usize) -> Result<Box<dyn System>> {
    let settings = EncoderSettings::from_args(encoders, width);
    Ok(match name {
        "random" => Box::new(RandomBaseline),
        "distribution" => {
            let path = train.ok_or_else(|| CliError::Usage("the distribution baseline needs --train".into()))?;
            Box::new(DistributionBaseline {
                model: fit_positional(&open_corpus(path)?)?,
            })
        }
        "heuristic" => Box::new(HeuristicBaseline {
            encoder: settings.semantic()?,
        }),
        other => match other.strip_prefix("surprise:") {
            Some(channel) => Box::new(SurpriseBaseline {
                channel: parse_channel(channel)?,
                encoders: settings.encoder_set()?,
            }),
            None => return Err(CliError::Usage(format!("unknown baseline `{other}`"))),
        },
    })
}

fn parse_channel(s: &str) -> Result<Channel> {
    Channel::parse(s).ok_or_else(|| CliError::Usage(format!("unknown channel `{s}` (xsem, xintent, xreact)")))
}

#[derive(Serialize)]
struct IngestSummary {
    fetched: usize,
    filtered: usize,
    kept: usize,
}

fn ingest(
    source: &PostSource,
    query: &PostQuery,
    filter: &FilterConfig,
    classifier: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let posts = fetch_posts(source, query)?;
    let fetched = posts.len();
    let filtered = filter_posts(posts, filter);
    let corpus = match classifier {
        Some(path) => {
            let (clf, settings) = load_classifier(path)?;
            gate_corpus(&filtered, &clf, settings.semantic()?.as_ref(), filter)?
        }
        None => {
            log::warn!("no story classifier given; every filtered post is kept");
            let mut c = Corpus::new();
            for p in &filtered {
                c.push(p.to_narrative(), None)?;
            }
            c
        }
    };
    save_corpus(&corpus, out)?;
    let summary = IngestSummary {
        fetched,
        filtered: filtered.len(),
        kept: corpus.len(),
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

#[derive(Deserialize)]
struct LabelledText {
    text: String,
    story: bool,
}

fn train_gate(data: &Path, out: &Path, config: &ClassifierConfig, encoders: &EncoderArgs, width: usize) -> Result<()> {
    let mut labelled = Vec::new();
    for (i, line) in std::fs::read_to_string(data)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: LabelledText = serde_json::from_str(line)
            .map_err(|e| CliError::data(format!("{} line {}: {e}", data.display(), i + 1)))?;
        labelled.push((t.text, t.story));
    }
    let settings = EncoderSettings::from_args(encoders, width);
    let encoder = settings.semantic()?;
    let (clf, history) = train_story_classifier(&labelled, encoder.as_ref(), config)?;
    let scores = evaluate_story_classifier(&labelled, &clf, encoder.as_ref())?;
    write_json(out, &json!({"encoder": settings, "params": clf.params.to_json()}))?;
    println!("{}", json!({"best_epoch": history.best_epoch, "training_scores": scores}));
    Ok(())
}

fn load_classifier(path: &Path) -> Result<(StoryClassifier, EncoderSettings)> {
    let mut value: serde_json::Value = serde_json::from_slice(&std::fs::read(path)?)?;
    let settings: EncoderSettings = serde_json::from_value(value["encoder"].take())
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let params = ParameterSet::from_json(value["params"].take())?;
    Ok((StoryClassifier { params }, settings))
}

fn split(corpus_path: &Path, ratios: [f64; 3], seed: u64, out_dir: &Path) -> Result<()> {
    let corpus = open_corpus(corpus_path)?;
    let parts = split_corpus(&corpus, ratios, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::create_dir_all(out_dir)?;
    for (name, ids) in [("train", &parts.train), ("validation", &parts.validation), ("test", &parts.test)] {
        let mut text = ids.join("\n");
        if !ids.is_empty() {
            text.push('\n');
        }
        write_atomic(&out_dir.join(format!("{name}.ids")), text.as_bytes())?;
        save_corpus(&corpus.subset(ids), &out_dir.join(format!("{name}.jsonl")))?;
    }
    println!(
        "{}",
        json!({"train": parts.train.len(), "validation": parts.validation.len(), "test": parts.test.len()})
    );
    Ok(())
}

fn stats(corpus_path: &Path, bins: usize, out: Option<&Path>, plot_dir: Option<&Path>) -> Result<()> {
    let s = corpus_stats(&open_corpus(corpus_path)?, bins)?;
    if let Some(dir) = plot_dir {
        let mut tsv = String::from("bin_center\tclimax\tresolution\n");
        for b in 0..s.histogram.bins {
            tsv.push_str(&format!(
                "{}\t{}\t{}\n",
                s.histogram.bin_center(b),
                s.histogram.climax[b],
                s.histogram.resolution[b]
            ));
        }
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("positions.tsv"), tsv.as_bytes())?;
    }
    emit(out, &s)
}

#[derive(Deserialize)]
struct LabelLine {
    id: String,
    labels: Option<Vec<Label>>,
}

/// `id` and `labels` of each line of a prediction or corpus file.
fn read_label_file(path: &Path) -> Result<Vec<LabelSequence>> {
    let mut out = Vec::new();
    for (i, line) in std::fs::read_to_string(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: LabelLine =
            serde_json::from_str(line).map_err(|e| CliError::data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        let labels = l
            .labels
            .ok_or_else(|| CliError::data(format!("{} line {}: no labels", path.display(), i + 1)))?;
        out.push(LabelSequence::new(l.id, labels));
    }
    Ok(out)
}

fn file_sha(path: &Path) -> Result<String> {
    let digest = Sha256::digest(std::fs::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn parse_floats(s: &str, n: usize, flag: &str) -> Result<Vec<f64>> {
    let v: std::result::Result<Vec<f64>, _> = split_list(s).iter().map(|x| x.parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == n => Ok(v),
        _ => Err(CliError::Usage(format!("{flag} expects {n} comma-separated numbers, got `{s}`"))),
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    split_list(s)
        .iter()
        .map(|x| x.parse().map_err(|_| CliError::Usage(format!("bad seed `{x}`"))))
        .collect()
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

/// `YYYY-MM-DD` (midnight UTC) or integer epoch seconds.
fn parse_time(s: &str) -> Result<i64> {
    if let Ok(t) = s.parse::<i64>() {
        return Ok(t);
    }
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp())
        .map_err(|_| CliError::Usage(format!("cannot read `{s}` as a date or epoch seconds")))
}

fn open_corpus(path: &Path) -> Result<Corpus> {
    load_corpus(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)?;
    Ok(())
}

/// Pretty JSON to `out`, or to stdout.
fn emit(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}
