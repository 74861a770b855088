use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use eventembed::data::{
    load_annotations, load_corpus, load_hardsim, load_transitive, load_word_vectors, EventTuple, SentimentLexicon,
};
use eventembed::evaluation::{cosine, evaluate_transitive, hard_similarity_accuracy, MetricReport};
use eventembed::trainer::{train, Preset, TrainingConfig};
use eventembed::{Checkpoint, Model};

#[derive(Parser)]
#[command(name = "eventembed", version, about = "Train and query commonsense-enhanced event embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write per-epoch checkpoints and a metrics log.
    Train(TrainArgs),
    /// Hard similarity accuracy on a four-column event pair file.
    EvalHard(EvalArgs),
    /// Spearman correlation on a transitive sentence similarity file.
    EvalTransitive(EvalArgs),
    /// Print the embedding of every event in a file.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        events: PathBuf,
    },
    /// Nearest neighbours of a query event within a corpus.
    Nn {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Event as `actor|predicate|object`.
        #[arg(long)]
        query: String,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    /// `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// One `actor|predicate|object` event per line.
    #[arg(long)]
    corpus: PathBuf,
    /// `event<TAB>intent<TAB>emotions` records.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Pretrained word vectors, one `word v1 .. vd` per line.
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Word polarity list; defaults to the bundled starter lexicon.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// One of ntn, ntn+int, ntn+senti, ntn+int+senti.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Override any config key, e.g. `--set learning_rate=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

fn resolve_config(args: &TrainArgs) -> Result<TrainingConfig> {
    let mut config = match &args.config {
        Some(path) => TrainingConfig::load(path)?,
        None => TrainingConfig::default(),
    };
    if let Some(p) = args.preset {
        config.apply_preset(p);
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        config.set(k.trim(), v.trim())?;
    }
    config.validate()?;
    Ok(config)
}

/// Files written by a training run, removed again if the run fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        if !self.files.contains(&p) {
            self.files.push(p.clone());
        }
        p
    }

    fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
            let _ = fs::remove_file(f.with_extension("partial"));
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn run_train(args: TrainArgs) -> Result<()> {
    let config = resolve_config(&args)?;
    let lexicon = match &args.lexicon {
        Some(p) => SentimentLexicon::load(p)?,
        None => SentimentLexicon::starter(),
    };
    let (vocab, table) = load_word_vectors::<f64>(&args.vectors)?;
    let corpus = load_corpus(&args.corpus)?;
    let annotations = match &args.annotations {
        Some(p) => load_annotations(p, &lexicon)?,
        None => Vec::new(),
    };
    if corpus.is_empty() && annotations.is_empty() {
        bail!("no training events in {}", args.corpus.display());
    }

    let mut out = Outputs::new(&args.out)?;
    let result = (|| -> Result<()> {
        fs::write(out.path("config.txt"), config.to_text())?;
        let metrics_path = out.path("metrics.tsv");
        let mut log = String::new();
        let stdout = io::stdout();
        let (final_ckpt, _) = train(config, vocab, table, corpus, annotations, |trainer, m| {
            let ckpt = trainer.checkpoint();
            ckpt.save(out.path(&format!("epoch-{:03}.ckpt", m.epoch)))?;
            log.push_str(&format!("{m}\n"));
            fs::write(&metrics_path, &log).map_err(|source| eventembed::Error::Io { path: metrics_path.clone(), source })?;
            let _ = writeln!(stdout.lock(), "{m}");
            Ok(())
        })?;
        final_ckpt.save(out.path("model.ckpt"))?;
        Ok(())
    })();
    if result.is_err() {
        out.discard();
    }
    result
}

fn load_model(path: &Path) -> Result<Model> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(ckpt.into_model())
}

fn run_eval_hard(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let data = load_hardsim(&args.data)?;
    let value = hard_similarity_accuracy(&data, &model)?;
    print_report("hard_similarity_accuracy", &args.data, value, data.len());
    Ok(())
}

fn run_eval_transitive(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let data = load_transitive(&args.data)?;
    let value = evaluate_transitive(&data, &model)?;
    print_report("transitive_spearman_rho", &args.data, value, data.len());
    Ok(())
}

fn print_report(metric: &str, data: &Path, value: f64, count: usize) {
    let report = MetricReport {
        metric: metric.into(),
        dataset: data.display().to_string(),
        value,
        count,
    };
    println!("{report}");
}

fn run_embed(checkpoint: &Path, events: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let events = load_corpus(events)?;
    let mut out = io::BufWriter::new(io::stdout().lock());
    for e in &events {
        let v = model.embed_event(e)?;
        let cols: Vec<String> = v.iter().map(|x| format!("{x:.9}")).collect();
        writeln!(out, "{}", cols.join("\t"))?;
    }
    out.flush()?;
    Ok(())
}

fn run_nn(checkpoint: &Path, query: &str, corpus: &Path, top: usize) -> Result<()> {
    let model = load_model(checkpoint)?;
    let query = EventTuple::parse(query).map_err(|m| anyhow::anyhow!("invalid query `{query}`: {m}"))?;
    let events = load_corpus(corpus)?;
    let q = model.embed_event(&query)?;
    let mut scored = Vec::with_capacity(events.len());
    for e in &events {
        let v = model.embed_event(e)?;
        scored.push((cosine(q.as_slice(), v.as_slice())?, e));
    }
    // stable sort keeps input order among equal scores
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = io::BufWriter::new(io::stdout().lock());
    for (score, e) in scored.into_iter().take(top) {
        writeln!(out, "{score:.6}\t{e}")?;
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::EvalHard(a) => run_eval_hard(a),
        Command::EvalTransitive(a) => run_eval_transitive(a),
        Command::Embed { checkpoint, events } => run_embed(&checkpoint, &events),
        Command::Nn {
            checkpoint,
            query,
            corpus,
            top,
        } => run_nn(&checkpoint, &query, &corpus, top),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
