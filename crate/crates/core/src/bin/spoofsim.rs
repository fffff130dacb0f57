use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spoofsim::detector::{Architecture, SequenceClassifier};
use spoofsim::experiment::{self as exp, ExperimentError};
use spoofsim::report;
use spoofsim::scenario::{Scenario, ScenarioError};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "spoofsim", version, about = "Spoofing market simulator, detector and guided learners")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; omitted fields take desk-scale defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Full-size population, days and replications.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Overrides the scenario's output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Overrides the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run market days and write action logs, trade tapes and agent summaries.
    Simulate {
        #[arg(long, default_value_t = 1)]
        days: u32,
        /// Add the scripted spoofing agent from the scenario.
        #[arg(long)]
        spoofer: bool,
        /// Also write the message trace.
        #[arg(long)]
        trace: bool,
    },
    /// Sweep the spoofing agent over quote size and depth.
    SweepSpoof {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Generate the labeled detector corpus.
    Synthesize,
    /// Train the detector on a synthesized corpus.
    TrainDetector {
        #[command(flatten)]
        corpus: CorpusArg,
    },
    /// Score a saved detector on the corpus test split.
    EvaluateDetector {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        corpus: CorpusArg,
    },
    /// Cross-validated feature-subset ablation.
    Ablate {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Arch::Cnn, Arch::Ffn])]
        arch: Vec<Arch>,
    },
    /// Evaluate the fixed honest and spoofing policies.
    RunFixed {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Train and evaluate one family of Q-learning traders.
    TrainQ {
        #[arg(long, value_enum)]
        stage: QStage,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Every stage in order, from synthesis to the guided learners.
    RunLadder {
        /// Include the spoofing sweep.
        #[arg(long)]
        sweep: bool,
    },
    /// Profit and detector summaries over a finished run.
    Report {
        /// Run directory; defaults to the scenario output directory.
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArg {
    /// Detector model; defaults to `<output>/detector/model.txt`.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusArg {
    /// Corpus directory; defaults to `<output>/synthesis`.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Arch {
    Cnn,
    Ffn,
}

impl From<Arch> for Architecture {
    fn from(a: Arch) -> Self {
        match a {
            Arch::Cnn => Architecture::TemporalCnn,
            Arch::Ffn => Architecture::FeedForward,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum QStage {
    Restricted,
    Unconstrained,
    Normative,
}

/// Missing or unusable inputs named on the command line.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct ConfigError(String);

fn scenario(c: &Common) -> Result<Scenario> {
    let mut sc = match &c.config {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    if c.paper_scale {
        sc = sc.paper_scale();
    }
    if let Some(o) = &c.output {
        sc.output_dir = o.clone();
    }
    if let Some(s) = c.seed {
        sc.seed = s;
    }
    sc.validate()?;
    Ok(sc)
}

fn load_model(sc: &Scenario, arg: &ModelArg, required: bool) -> Result<Option<Arc<SequenceClassifier>>> {
    let path = arg
        .model
        .clone()
        .unwrap_or_else(|| sc.output_dir.join(exp::DETECTOR).join("model.txt"));
    if !path.exists() {
        if required || arg.model.is_some() {
            return Err(ConfigError(format!("detector model {} not found", path.display())).into());
        }
        return Ok(None);
    }
    let m = SequenceClassifier::load(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok(Some(Arc::new(m)))
}

fn load_corpus(sc: &Scenario, arg: &CorpusArg) -> Result<exp::Corpus> {
    let dir = arg.corpus.clone().unwrap_or_else(|| sc.output_dir.join(exp::SYNTHESIS));
    if !dir.is_dir() {
        return Err(ConfigError(format!("corpus directory {} not found", dir.display())).into());
    }
    Ok(exp::load_corpus(&dir, sc.detector.split_seed)?)
}

fn print_summary(dir: &Path, rows: &[exp::ConfigSummary]) -> Result<()> {
    exp::write_comparison_table(rows, &mut std::io::stdout())?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let sc = scenario(&cli.common)?;
    match cli.command {
        Command::Simulate { days, spoofer, trace } => {
            for d in exp::simulate(&sc, days, spoofer, trace)? {
                println!(
                    "day {:>3}: {} actions, {} trades, {} events, close {:.2}",
                    d.day, d.actions, d.trades, d.events, d.close
                );
            }
            println!("wrote {}", sc.output_dir.join(exp::SIMULATE).display());
        }
        Command::SweepSpoof { model } => {
            let m = load_model(&sc, &model, false)?;
            let cells = exp::sweep_spoof(&sc, m.as_deref())?;
            print_summary(&sc.output_dir.join(exp::SWEEP), &exp::summarize_all(&cells))?;
        }
        Command::Synthesize => {
            let c = exp::synthesize(&sc)?;
            println!(
                "{} windows, {:.2}% positive, wrote {}",
                c.windows.len(),
                100.0 * c.positive_fraction(),
                sc.output_dir.join(exp::SYNTHESIS).display()
            );
        }
        Command::TrainDetector { corpus } => {
            let c = load_corpus(&sc, &corpus)?;
            let out = exp::train_detector(&sc, &c)?;
            println!("best epoch {}", out.best_epoch);
            println!("validation {}", out.validation);
            println!("test       {}", out.test);
        }
        Command::EvaluateDetector { model, corpus } => {
            let m = load_model(&sc, &model, true)?.expect("required model");
            let c = load_corpus(&sc, &corpus)?;
            println!("test {}", exp::evaluate_detector(&m, &c));
        }
        Command::Ablate { corpus, arch } => {
            let c = load_corpus(&sc, &corpus)?;
            let archs: Vec<Architecture> = arch.into_iter().map(Into::into).collect();
            for r in exp::ablate(&sc, &c, &archs)? {
                println!("{r}");
            }
        }
        Command::RunFixed { model } => {
            let m = load_model(&sc, &model, false)?;
            let cells = exp::run_fixed(&sc, m.as_deref())?;
            print_summary(&sc.output_dir.join(exp::FIXED), &exp::summarize_all(&cells))?;
        }
        Command::TrainQ { stage, model } => {
            let (name, specs) = match stage {
                QStage::Restricted => (exp::RESTRICTED, exp::restricted_specs(&sc)),
                QStage::Unconstrained => (exp::UNCONSTRAINED, exp::unconstrained_specs(&sc)),
                QStage::Normative => (exp::NORMATIVE, exp::normative_specs(&sc)),
            };
            let m = load_model(&sc, &model, matches!(stage, QStage::Normative))?;
            let cells = exp::train_q(&sc, name, &specs, m.as_ref())?;
            print_summary(&sc.output_dir.join(name), &exp::summarize_all(&cells))?;
        }
        Command::RunLadder { sweep } => {
            let out = exp::run_ladder(&sc, sweep)?;
            println!(
                "corpus {} windows ({:.2}% positive), detector test {}",
                out.corpus_windows,
                100.0 * out.positive_fraction,
                out.detector.test
            );
            print_summary(&sc.output_dir, &out.comparison)?;
        }
        Command::Report { run } => {
            let dir = run.unwrap_or_else(|| sc.output_dir.clone());
            let r = report::build(&dir)?;
            r.write(&dir)?;
            r.write_text(&mut std::io::stdout())?;
        }
    }
    Ok(())
}

fn is_config(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<ScenarioError>()
            || c.is::<ConfigError>()
            || c.downcast_ref::<ExperimentError>().is_some_and(ExperimentError::is_config)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(if is_config(&e) { EXIT_CONFIG } else { EXIT_STAGE })
        }
    }
}
