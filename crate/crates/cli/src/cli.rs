use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use bandmate_core::eval::{cross_validate, latency_benchmark, results_table, EvalConfig, Setting};
use bandmate_core::hmm::viterbi;
use bandmate_core::music::{ChordVocabulary, VocabularyMode};
use bandmate_core::predictor::{
    PredictionMode, SessionConfig, SessionState, VomPolicy, DEFAULT_ALPHA, DEFAULT_NOVELTY,
};
use bandmate_core::synth::{generate_corpus, CorpusSpec, MelodyMode};
use bandmate_core::training::{
    load_model, save_model, train, training_stats, transition_matrix_csv, HmmModel, DEFAULT_EPSILON,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::corpus;
use crate::session::{run_session, ModelSet, SessionDefaults, DEFAULT_TEMPO_BPM};
use crate::transport::{serve_websocket, LineTransport};

#[derive(Debug, Parser)]
#[command(
    name = "bandmate",
    version,
    about = "Chord accompaniment for improvised melodies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter MusicXML scores, transpose them to C and write a manifest.
    Ingest {
        /// Score files or folders.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "diatonic7")]
        vocab: VocabularyMode,
    },
    /// Write a synthetic corpus of periodic progressions.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        corpus: SynthArgs,
    },
    /// Train a model from a corpus manifest.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "diatonic7")]
        vocab: VocabularyMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Also dump the transition matrix as CSV.
        #[arg(long)]
        transitions_csv: Option<PathBuf>,
    },
    /// Viterbi chords for every bar of a score or histogram file.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Replay a score bar by bar and print each prediction.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Hybrid)]
        mode: ModeArg,
        /// Sample the tree's distribution with this seed instead of taking the argmax.
        #[arg(long)]
        sample_seed: Option<u64>,
    },
    /// Cross-validate one setting, or all of them.
    Eval {
        #[arg(long, default_value = "all")]
        setting: String,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Corpus manifest; the synthetic corpus is used when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_NOVELTY)]
        novelty: f64,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Time per-bar prediction over a synthetic session.
    Bench {
        #[arg(long, default_value_t = 240)]
        bars: usize,
        #[arg(long, default_value = "diatonic7")]
        vocab: VocabularyMode,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run live sessions over a websocket port or standard streams.
    Serve {
        /// Model files; the first is the default vocabulary.
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        stdio: bool,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_TEMPO_BPM)]
        tempo_bpm: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Hybrid,
    Transition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MelodyArg {
    Triad,
    Root,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    songs: usize,
    #[arg(long, default_value_t = 8)]
    repetitions: usize,
    #[arg(long, default_value_t = 4)]
    min_period: usize,
    #[arg(long, default_value_t = 8)]
    max_period: usize,
    #[arg(long, default_value_t = 0.9)]
    sharpness: f64,
    #[arg(long, value_enum, default_value_t = MelodyArg::Triad)]
    melody: MelodyArg,
    /// Seed of the synthetic corpus.
    #[arg(long, default_value_t = 42)]
    synth_seed: u64,
}

impl SynthArgs {
    fn spec(&self) -> CorpusSpec {
        CorpusSpec {
            songs: self.songs,
            min_period: self.min_period,
            max_period: self.max_period,
            repetitions: self.repetitions,
            notes_per_bar: CorpusSpec::default().notes_per_bar,
            profile_sharpness: self.sharpness,
            melody: match self.melody {
                MelodyArg::Triad => MelodyMode::TriadProfile,
                MelodyArg::Root => MelodyMode::RootOnly,
            },
            seed: self.synth_seed,
        }
    }
}

fn read_model(path: &PathBuf) -> Result<HmmModel> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_model(io::BufReader::new(file)).with_context(|| format!("loading {}", path.display()))
}

fn print_json_line(out: &mut impl Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Ingest {
            inputs,
            out_dir,
            vocab,
        } => {
            let records = corpus::ingest(&inputs, &out_dir, ChordVocabulary::new(vocab))?;
            corpus::write_manifest(&out_dir.join(corpus::MANIFEST_NAME), &records)?;
            for r in &records {
                writeln!(out, "{r}")?;
            }
        }
        Command::Synth { out_dir, corpus } => {
            let records = corpus::write_synthetic(&out_dir, &corpus.spec())?;
            print_json_line(
                &mut out,
                &json!({
                    "songs": records.len(),
                    "manifest": out_dir.join(corpus::MANIFEST_NAME),
                }),
            )?;
        }
        Command::Train {
            corpus,
            vocab,
            out: model_path,
            epsilon,
            transitions_csv,
        } => {
            let songs = corpus::load_manifest(&corpus)?;
            let sequences: Vec<_> = songs.into_iter().map(|s| s.sequence).collect();
            let vocabulary = ChordVocabulary::new(vocab);
            let model = train(&sequences, &vocabulary, epsilon)?;
            let file = fs::File::create(&model_path)
                .with_context(|| format!("creating {}", model_path.display()))?;
            save_model(&model, BufWriter::new(file))?;
            if let Some(csv) = transitions_csv {
                fs::write(&csv, transition_matrix_csv(&model))
                    .with_context(|| format!("writing {}", csv.display()))?;
            }
            print_json_line(&mut out, &training_stats(&sequences, &vocabulary)?)?;
        }
        Command::Infer {
            model,
            input,
            alpha,
        } => {
            let model = read_model(&model)?;
            let bars = corpus::read_histograms(&input)?;
            let decoded = viterbi(&bars, &model, alpha)?;
            for (i, chord) in decoded.path.iter().enumerate() {
                print_json_line(&mut out, &json!({ "bar_index": i, "chord": chord }))?;
            }
        }
        Command::Predict {
            model,
            input,
            alpha,
            mode,
            sample_seed,
        } => {
            let model = Arc::new(read_model(&model)?);
            let config = SessionConfig {
                alpha,
                mode: match mode {
                    ModeArg::Hybrid => PredictionMode::Hybrid,
                    ModeArg::Transition => PredictionMode::TransitionOnly,
                },
                policy: match sample_seed {
                    Some(seed) => VomPolicy::Sample { seed },
                    None => VomPolicy::Argmax,
                },
                max_depth: None,
            };
            let mut state = SessionState::new(model, config)?;
            for h in corpus::read_histograms(&input)? {
                print_json_line(&mut out, &state.next_chord_prediction(h)?)?;
            }
        }
        Command::Eval {
            setting,
            folds,
            seed,
            corpus: manifest,
            alpha,
            novelty,
            synth,
        } => {
            let settings: Vec<Setting> = if setting == "all" {
                Setting::ALL.to_vec()
            } else {
                vec![setting.parse().map_err(anyhow::Error::msg)?]
            };
            let songs = match manifest {
                Some(m) => corpus::load_manifest(&m)?,
                None => generate_corpus(&synth.spec())?
                    .iter()
                    .map(|s| s.to_song())
                    .collect(),
            };
            let config = EvalConfig {
                folds,
                seed,
                alpha,
                epsilon: DEFAULT_EPSILON,
                novelty,
            };
            let mut reports = Vec::new();
            for s in settings {
                log::info!("evaluating {s}");
                reports.push(cross_validate(&songs, s, &config)?);
            }
            if let [single] = reports.as_slice() {
                print_json_line(&mut out, single)?;
            } else {
                print_json_line(&mut out, &reports)?;
            }
            eprint!("{}", results_table(&reports));
        }
        Command::Bench {
            bars,
            vocab,
            repetitions,
            seed,
        } => {
            print_json_line(
                &mut out,
                &latency_benchmark(bars, vocab, repetitions, seed)?,
            )?;
        }
        Command::Serve {
            model,
            port,
            host,
            stdio,
            alpha,
            tempo_bpm,
        } => {
            if !(0.0..=1.0).contains(&alpha) {
                bail!("alpha must lie in [0, 1], got {alpha}");
            }
            if !(tempo_bpm.is_finite() && tempo_bpm > 0.0) {
                bail!("tempo must be positive, got {tempo_bpm}");
            }
            let mut models = ModelSet::new();
            for path in &model {
                models.insert(read_model(path)?);
            }
            let defaults = SessionDefaults { alpha, tempo_bpm };
            if stdio {
                drop(out);
                let stdin = io::stdin();
                let mut transport = LineTransport::new(stdin.lock(), io::stdout().lock());
                let end = run_session(&mut transport, &models, defaults)?;
                log::info!("session ended: {end:?}");
                return Ok(());
            }
            let port = port.expect("clap requires --port without --stdio");
            let listener = TcpListener::bind((host.as_str(), port))
                .with_context(|| format!("binding {host}:{port}"))?;
            print_json_line(
                &mut out,
                &json!({ "listening": listener.local_addr()?.to_string() }),
            )?;
            out.flush()?;
            serve_websocket(listener, Arc::new(models), defaults)?;
        }
    }
    out.flush()?;
    Ok(())
}
