use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use transal::acquisition::{self, AcquisitionConfig, SelectionContext, Strategy};
use transal::campaign::{self, Campaign, CampaignConfig, ParserSpec};
use transal::corpus::{self, Example};
use transal::features::NgramEmbedder;
use transal::lf;
use transal::parser::{serve_adapter, ParserAdapter, SurrogateParser};
use transal::service::{self, AppState};
use transal::synthetic::{self, SyntheticSpec};
use transal::translation::{MachineTranslator, NoisyLexiconTranslator, TargetDistribution, DEFAULT_DROPOUT};
use transal::tuning::{self, TuningGrid};

#[derive(Parser)]
#[command(name = "transal", version, about = "Active learning for translated semantic-parsing data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus file and print a summary.
    Validate {
        corpus: PathBuf,
        #[arg(long, default_value = "en")]
        source: String,
        #[arg(long, default_value = "de")]
        target: String,
    },
    /// Pick one batch from a corpus and print the ids.
    Select {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "en")]
        source: String,
        #[arg(long, default_value = "de")]
        target: String,
        /// File with ids already translated, one per line.
        #[arg(long)]
        translated: Option<PathBuf>,
        /// Bilingual lexicon for the machine translator (AMSP strategies).
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Run a campaign with the gold-reveal oracle.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Grid-search alpha and beta on source-language data.
    Tune {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "en")]
        source: String,
        #[arg(long, default_value = "de")]
        target: String,
    },
    /// Run the annotation service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Session journals; existing ones are replayed at startup.
        #[arg(long)]
        journal: Option<PathBuf>,
        /// Base directory for relative paths in session configs.
        #[arg(long, default_value = ".")]
        base_dir: PathBuf,
    },
    /// Write a synthetic bilingual corpus, lexicon and campaign config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 600)]
        pool_size: usize,
        #[arg(long, default_value_t = 150)]
        test_size: usize,
    },
    /// Serve the built-in parser over the adapter protocol on stdio.
    #[command(hide = true)]
    SurrogateAdapter {
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { corpus, source, target } => validate(corpus, &source, &target),
        Command::Select {
            corpus,
            strategy,
            budget,
            alpha,
            beta,
            seed,
            source,
            target,
            translated,
            lexicon,
        } => {
            let mut config = AcquisitionConfig::new(strategy);
            config.alpha = alpha.unwrap_or(config.alpha);
            config.beta = beta.unwrap_or(config.beta);
            config.seed = seed;
            select(corpus, &source, &target, config, budget, translated, lexicon)
        }
        Command::Simulate { config, output } => simulate(config, output),
        Command::Tune {
            grid,
            corpus,
            source,
            target,
        } => tune(grid, corpus, &source, &target),
        Command::Serve {
            port,
            host,
            journal,
            base_dir,
        } => serve(&host, port, journal, base_dir),
        Command::Synth {
            out,
            seed,
            pool_size,
            test_size,
        } => synth(out, seed, pool_size, test_size),
        Command::SurrogateAdapter { temperature } => {
            let mut parser = SurrogateParser::with_temperature(temperature);
            let stdin = io::stdin();
            serve_adapter(&mut parser, stdin.lock(), io::stdout().lock())?;
            Ok(())
        }
    }
}

fn validate(path: PathBuf, source: &str, target: &str) -> Result<()> {
    let c = corpus::load_corpus(&path, source, target).with_context(|| format!("loading {}", path.display()))?;
    let mut lfs = HashSet::new();
    let mut atoms = HashSet::new();
    let mut compounds = HashSet::new();
    let mut translated = 0;
    for e in c.examples() {
        lfs.insert(lf::normalize(&e.lf));
        let tree = lf::parse_lf(&e.lf)?;
        atoms.extend(lf::extract_atoms(&tree).into_iter().map(|a| a.label));
        compounds.extend(lf::extract_compounds(&tree).into_iter().map(|c| c.to_string()));
        translated += usize::from(e.utterance(target).is_some());
    }
    println!(
        "{}: {} examples, {} distinct LFs, {} atom types, {} compound types, {} with {target} utterances",
        path.display(),
        c.len(),
        lfs.len(),
        atoms.len(),
        compounds.len(),
        translated
    );
    Ok(())
}

fn select(
    path: PathBuf,
    source: &str,
    target: &str,
    config: AcquisitionConfig,
    budget: usize,
    translated: Option<PathBuf>,
    lexicon: Option<PathBuf>,
) -> Result<()> {
    let c = corpus::load_corpus(&path, source, target)?;
    let done: HashSet<String> = match &translated {
        Some(p) => fs::read_to_string(p)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect(),
        None => HashSet::new(),
    };
    let source_view = c.source_only();
    let (translated_ex, candidates): (Vec<&Example>, Vec<&Example>) =
        source_view.examples().iter().partition(|e| done.contains(&e.id));

    // The parser and target distribution see source data plus, for AMSP,
    // machine translations of it.
    let mt: Option<NoisyLexiconTranslator> = match &lexicon {
        Some(p) => Some(NoisyLexiconTranslator::load(p, DEFAULT_DROPOUT, config.seed)?),
        None if config.strategy.is_amsp() => bail!("--lexicon is required for {}", config.strategy),
        None => None,
    };
    let mut training: Vec<Example> = source_view.examples().to_vec();
    let mut mt_pairs = Vec::new();
    if let Some(mt) = &mt {
        for e in source_view.examples() {
            let t = mt.forward(source_view.source_utterance(e))?;
            mt_pairs.push((e.lf.clone(), t.clone()));
            training.push(Example::new(format!("{}#mt", e.id), e.lf.clone()).with_utterance(target, t));
        }
    }
    let mut parser = SurrogateParser::new();
    parser.train(&training)?;
    let distribution = if mt_pairs.is_empty() {
        None
    } else {
        Some(TargetDistribution::fit(mt_pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())))?)
    };
    let embedder = NgramEmbedder;
    let ctx = SelectionContext {
        candidates,
        translated: translated_ex,
        source_lang: source,
        round: 1,
        parser: Some(&parser),
        target_distribution: distribution.as_ref(),
        translator: mt.as_ref().map(|m| m as &dyn MachineTranslator),
        embedder: &embedder,
    };
    let selection = acquisition::select(&config, &ctx, budget)?;
    let mut out = io::stdout().lock();
    for id in selection.ids() {
        writeln!(out, "{id}")?;
    }
    Ok(())
}

fn simulate(config_path: PathBuf, output: Option<PathBuf>) -> Result<()> {
    let mut config = CampaignConfig::load(&config_path)?;
    if output.is_some() {
        config.output_dir = output;
    }
    let mut campaign = Campaign::from_config(config)?;
    campaign.run()?;
    match &campaign.config().output_dir {
        Some(dir) => {
            campaign::write_outputs(campaign.state(), dir)?;
            eprintln!("wrote {}", dir.join("metrics.jsonl").display());
        }
        None => print!("{}", campaign::metrics_to_string(&campaign.state().metrics)),
    }
    Ok(())
}

fn tune(grid_path: PathBuf, corpus_path: PathBuf, source: &str, target: &str) -> Result<()> {
    let grid = TuningGrid::from_toml(&fs::read_to_string(&grid_path)?)?;
    let c = corpus::load_corpus(&corpus_path, source, target)?;
    let spec = ParserSpec::default();
    let result = tuning::tune_hyperparameters(
        &c,
        &grid,
        &AcquisitionConfig::new(Strategy::LfsLcD),
        &mut || spec.build(),
    )?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn serve(host: &str, port: u16, journal: Option<PathBuf>, base_dir: PathBuf) -> Result<()> {
    let addr: SocketAddr = format!("{host}:{port}").parse()?;
    let state = match journal {
        Some(dir) => AppState::restore(base_dir, dir)?,
        None => AppState::new(base_dir, None),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        service::serve(listener, state).await
    })?;
    Ok(())
}

fn synth(out: PathBuf, seed: u64, pool_size: usize, test_size: usize) -> Result<()> {
    let spec = SyntheticSpec {
        pool_size,
        test_size,
        seed,
        ..SyntheticSpec::default()
    };
    let files = synthetic::write(&synthetic::generate(&spec), &out)?;
    let mut config = CampaignConfig::new("pool.jsonl", Strategy::LfsLcD);
    config.test_corpus = Some("test.jsonl".into());
    config.seed = seed;
    config.output_dir = Some("results".into());
    fs::write(out.join("campaign.toml"), config.to_toml())?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for p in [&files.pool, &files.test, &files.lexicon, &out.join("campaign.toml")] {
        writeln!(w, "{}", p.display())?;
    }
    Ok(())
}
