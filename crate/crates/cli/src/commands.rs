use std::fs::File;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use failprobe_core::analytics::{write_export_csv, ExportRow};
use failprobe_core::classifier::read_corpus_path;
use failprobe_core::crowdsim::{simulate, simulate_to_file, ScenarioConfig};
use failprobe_core::explainer::{explain, ExplainConfig};
use failprobe_core::ids::Timestamp;
use failprobe_core::store::SeedError;
use failprobe_core::{NaiveBayesModel, Platform, PlatformConfig, Prediction, SentimentModel};
use rand::seq::index::sample;

use crate::{CliError, Color, Command, Format};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { corpus, out } => train(&corpus, &out),
        Command::Serve {
            model,
            store,
            config,
            addr,
        } => serve(&model, &store, config.as_deref(), &addr),
        Command::ImportBenchmark {
            model,
            store,
            input,
            category,
            config,
            csv_out,
        } => import_benchmark(
            &model,
            &store,
            &input,
            category.as_deref(),
            config.as_deref(),
            csv_out.as_deref(),
        ),
        Command::SampleMisclassified { store, n, seed, out } => sample_misclassified(&store, n, seed, out.as_deref()),
        Command::Simulate {
            model,
            scenario,
            seed,
            workers,
            log,
            export,
        } => run_simulation(
            &model,
            scenario.as_deref(),
            seed,
            workers,
            log.as_deref(),
            export.as_deref(),
        ),
        Command::Export {
            store,
            model,
            format,
            out,
        } => export(&store, model.as_deref(), format, out.as_deref()),
        Command::ExplainOne {
            model,
            text,
            samples,
            seed,
            color,
        } => explain_one(&model, &text, samples, seed, color),
    }
}

fn load_model(path: &Path) -> Result<Arc<NaiveBayesModel>> {
    if !path.exists() {
        return Err(CliError::ModelMissing(path.to_owned()));
    }
    let model = NaiveBayesModel::load(path).map_err(failprobe_core::Error::from)?;
    Ok(Arc::new(model))
}

/// Stands in for the classifier where a command only reads stored results.
fn no_model() -> Arc<dyn SentimentModel> {
    Arc::new(|_: &str| Prediction::from_scores([1.0, 1.0, 1.0]))
}

fn load_config(path: Option<&Path>) -> Result<PlatformConfig> {
    Ok(match path {
        Some(p) => PlatformConfig::load(p)?,
        None => PlatformConfig::default(),
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn open_store(path: &Path, model: Arc<dyn SentimentModel>) -> Result<Platform> {
    if !path.exists() {
        return Err(CliError::Usage(format!("store {} does not exist", path.display())));
    }
    Ok(Platform::open(model, path)?)
}

fn train(corpus: &Path, out: &Path) -> Result<()> {
    let rows = read_corpus_path(corpus).map_err(failprobe_core::Error::from)?;
    let model = NaiveBayesModel::train(&rows).map_err(failprobe_core::Error::from)?;
    model.save(out).map_err(failprobe_core::Error::from)?;
    eprintln!(
        "trained on {} sentences, vocabulary {}; wrote {}",
        rows.len(),
        model.vocabulary_size(),
        out.display()
    );
    Ok(())
}

fn serve(model: &Path, store: &Path, config: Option<&Path>, addr: &str) -> Result<()> {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let model = load_model(model)?;
    let platform = Platform::open_or_create(model, load_config(config)?, store)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        failprobe_api::serve(listener, failprobe_api::shared(platform)).await
    })?;
    Ok(())
}

fn seed_row(platform: &Platform, e: &SeedError) -> ExportRow {
    ExportRow {
        text: e.text.clone(),
        human_label: Some(e.human_label),
        ai_label: e.prediction.label,
        category: e
            .category
            .and_then(|c| platform.state().categories.get(&c))
            .map(|c| c.name.clone()),
    }
}

fn import_benchmark(
    model: &Path,
    store: &Path,
    input: &Path,
    category: Option<&str>,
    config: Option<&Path>,
    csv_out: Option<&Path>,
) -> Result<()> {
    let model = load_model(model)?;
    let rows = read_corpus_path(input).map_err(failprobe_core::Error::from)?;
    let mut platform = Platform::open_or_create(model, load_config(config)?, store)?;
    let category = match category {
        Some(name) => Some(
            platform
                .category_by_name(name)
                .ok_or_else(|| CliError::Usage(format!("no category named {name:?}")))?
                .category_id,
        ),
        None => None,
    };
    let mut stored = Vec::new();
    for (text, label) in &rows {
        let at = Timestamp(platform.clock().0 + 1);
        if let Some(e) = platform.import_benchmark_sentence(text, *label, category, at)? {
            stored.push(seed_row(&platform, &e));
        }
    }
    eprintln!("{} of {} sentences misclassified and stored", stored.len(), rows.len());
    if let Some(path) = csv_out {
        write_export_csv(File::create(path)?, &stored)?;
    }
    Ok(())
}

fn sample_misclassified(store: &Path, n: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let platform = open_store(store, no_model())?;
    let pool: Vec<&SeedError> = platform.state().seed_errors.values().collect();
    if n > pool.len() {
        eprintln!(
            "warning: requested {n} samples but only {} misclassified sentences are stored",
            pool.len()
        );
    }
    let k = n.min(pool.len());
    let mut rng = failprobe_core::rng::stream(seed, &[]);
    let mut picked = sample(&mut rng, pool.len(), k).into_vec();
    picked.sort_unstable();
    let rows: Vec<ExportRow> = picked.into_iter().map(|i| seed_row(&platform, pool[i])).collect();
    write_export_csv(output(out)?, &rows)?;
    Ok(())
}

fn run_simulation(
    model: &Path,
    scenario: Option<&Path>,
    seed: Option<u64>,
    workers: Option<usize>,
    log: Option<&Path>,
    export: Option<&Path>,
) -> Result<()> {
    let model = load_model(model)?;
    let mut cfg = match scenario {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    let (platform, report) = match log {
        Some(path) => simulate_to_file(model, &cfg, path)?,
        None => simulate(model, &cfg)?,
    };
    if let Some(path) = export {
        write_export_csv(File::create(path)?, &platform.export_rows()?)?;
    }
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &report)?;
    writeln!(stdout)?;
    Ok(())
}

fn export(store: &Path, model: Option<&Path>, format: Format, out: Option<&Path>) -> Result<()> {
    let model: Arc<dyn SentimentModel> = match (model, format) {
        (Some(p), _) => load_model(p)?,
        (None, Format::Csv) => no_model(),
        (None, Format::Json) => return Err(CliError::ModelMissing(PathBuf::from("--model"))),
    };
    let platform = open_store(store, model)?;
    let mut w = output(out)?;
    match format {
        Format::Csv => write_export_csv(&mut w, &platform.export_rows()?)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &platform.analysis_summary(None)?)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn explain_one(model: &Path, text: &str, samples: Option<usize>, seed: Option<u64>, color: Color) -> Result<()> {
    let model = load_model(model)?;
    let defaults = PlatformConfig::default();
    let mut config = ExplainConfig::default();
    if let Some(n) = samples {
        config.sample_count = n;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let explanation = explain(model.as_ref(), text, &config).map_err(failprobe_core::Error::from)?;
    let view = explanation
        .view(defaults.highlight)
        .map_err(failprobe_core::Error::from)?;
    let colored = match color {
        Color::Always => true,
        Color::Never => false,
        Color::Auto => io::stdout().is_terminal(),
    };

    let mut out = io::stdout().lock();
    let mut cursor = 0;
    for t in &view.tokens {
        write!(out, "{}", &view.text[cursor..t.start])?;
        let word = &view.text[t.start..t.end];
        if colored {
            let (r, g, b) = t.bucket.rgb();
            write!(out, "\x1b[48;2;{r};{g};{b}m\x1b[38;2;0;0;0m{word}\x1b[0m")?;
        } else {
            write!(out, "[{word}]")?;
        }
        cursor = t.end;
    }
    writeln!(out, "{}", &view.text[cursor..])?;
    let prediction = model.predict(text);
    writeln!(
        out,
        "prediction: {} ({:.3})  fidelity: {:.3}  samples: {}",
        prediction.label, prediction.confidence, view.fidelity, view.sample_count
    )?;
    for t in &view.tokens {
        writeln!(
            out,
            "  {:<16} {:<9} {:+.4}  {}",
            t.token,
            t.class.as_str(),
            t.weight,
            t.color
        )?;
    }
    Ok(())
}
