mod config;
mod manifest;
mod report;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use latentnav::codec::{compression_ratio, mse, train_codec, Codec};
use latentnav::data::{
    build_samples, dataset_stats, episode_images, generate_episodes, load_dataset, serialize_dataset, DatasetHeader,
    Expected, DATASET_FORMAT_VERSION,
};
use latentnav::eval::{measure_aps, metrics, write_reports_jsonl, write_summary_csv, ModelPolicy};
use latentnav::experiment::{prepare, run_experiment, Preset, EVAL_SEED_OFFSET, EXPERIMENTS, RECORD_HEADER};
use latentnav::gating::parse_mode_set;
use latentnav::model::{load_checkpoint, save_checkpoint};
use latentnav::trainer::{init_model, train, write_metrics_csv, TrainConfig};
use latentnav::vocab::Vocabulary;
use log::info;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "latentnav", version, about = "Gridworld navigation with gated latent reasoning traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Base preset: desk or smoke.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// TOML or JSON file overlaid on the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training episodes and fit the image codec.
    TrainCodec(Common),
    /// Slice episodes into training samples with an existing codec.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Codec file; defaults to `<out>/codec.json`.
        #[arg(long)]
        codec: Option<PathBuf>,
    },
    /// Train a policy on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codec: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Plus-separated training modes, or `all`; overrides the config.
        #[arg(long)]
        modes: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run held-out episodes with a trained checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codec: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated inference modes.
        #[arg(long, default_value = "non-cot")]
        modes: String,
        /// Number of held-out episodes; defaults to the preset's.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Reconstruction error and token cost per scale prefix on held-out images.
    BenchCodec {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codec: Option<PathBuf>,
    },
    /// Run a scripted experiment matrix over several seeds.
    Experiment {
        /// One of mode-combos, alignment-ablation, explicit-implicit, efficiency, var-scale.
        name: String,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Tables and SVG charts from an experiment results CSV.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Record counts and histograms of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<latentnav::Error>().map_or("error", |e| e.kind());
            let msg = serde_json::json!({ "kind": kind, "message": format!("{e:#}") });
            let _ = writeln!(std::io::stderr(), "{msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::TrainCodec(c) => cmd_train_codec(&c),
        Command::GenData { common, codec } => cmd_gen_data(&common, codec),
        Command::Train {
            common,
            codec,
            dataset,
            modes,
            seed,
        } => cmd_train(&common, codec, dataset, modes, seed),
        Command::Eval {
            common,
            codec,
            checkpoint,
            modes,
            episodes,
        } => cmd_eval(&common, codec, checkpoint, &modes, episodes),
        Command::BenchCodec { common, codec } => cmd_bench_codec(&common, codec),
        Command::Experiment { name, common, seeds } => cmd_experiment(&name, &common, &seeds),
        Command::Report { results, out } => {
            for p in report::write_report(&results, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Stats { dataset } => {
            let (header, samples) = load_dataset(&dataset, Expected::default())?;
            let stats = serde_json::json!({ "header": header, "stats": dataset_stats(&samples) });
            println!("{}", serde_json::to_string_pretty(&stats)?);
            Ok(())
        }
    }
}

fn setup(c: &Common) -> Result<Preset> {
    let preset = config::load_preset(&c.preset, c.config.as_deref())?;
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(preset)
}

fn load_codec(c: &Common, path: Option<PathBuf>) -> Result<(Codec, String)> {
    let path = path.unwrap_or_else(|| c.out.join("codec.json"));
    let codec = Codec::load(&path)?;
    let hash = codec.hash()?;
    Ok((codec, hash))
}

fn held_out(preset: &Preset, n: usize) -> Result<Vec<latentnav::data::Episode>> {
    let d = &preset.data;
    Ok(generate_episodes(d.seed.wrapping_add(EVAL_SEED_OFFSET), n, &d.world, &d.task, &d.render)?)
}

fn cmd_train_codec(c: &Common) -> Result<()> {
    let preset = setup(c)?;
    let mut m = RunManifest::start("train-codec", serde_json::to_value(&preset)?, vec![preset.data.seed, preset.codec.seed]);
    let d = &preset.data;
    let episodes = generate_episodes(d.seed, d.episodes, &d.world, &d.task, &d.render)?;
    let images = episode_images(&episodes);
    info!("fitting codec on {} images", images.len());
    let (codec, log) = train_codec(&images, &preset.codec)?;
    let path = c.out.join("codec.json");
    codec.save(&path)?;
    m.record("codec", codec.hash()?);
    m.record("vocab", Vocabulary::new(codec.codebook_size()).hash());
    std::fs::write(c.out.join("codec_log.json"), serde_json::to_string_pretty(&log)?)?;
    println!("{}", m.finish(&c.out)?.display());
    Ok(())
}

fn cmd_gen_data(c: &Common, codec: Option<PathBuf>) -> Result<()> {
    let preset = setup(c)?;
    let (codec, codec_hash) = load_codec(c, codec)?;
    let vocab = Vocabulary::new(codec.codebook_size());
    let d = &preset.data;
    let mut m = RunManifest::start("gen-data", serde_json::to_value(d)?, vec![d.seed]);
    let episodes = generate_episodes(d.seed, d.episodes, &d.world, &d.task, &d.render)?;
    let samples = build_samples(&episodes, &codec, d)?;
    let header = DatasetHeader {
        format_version: DATASET_FORMAT_VERSION,
        vocab_hash: vocab.hash(),
        codec_hash: codec_hash.clone(),
        k: d.k,
        seeds: vec![d.seed],
        records: samples.len(),
        config: serde_json::to_value(d)?,
    };
    let hash = serialize_dataset(&c.out.join("dataset.jsonl"), &header, &samples)?;
    m.record("codec", codec_hash);
    m.record("vocab", vocab.hash());
    m.record("dataset", hash);
    println!("{}", serde_json::to_string_pretty(&dataset_stats(&samples))?);
    m.finish(&c.out)?;
    Ok(())
}

fn cmd_train(
    c: &Common,
    codec: Option<PathBuf>,
    dataset: Option<PathBuf>,
    modes: Option<String>,
    seed: Option<u64>,
) -> Result<()> {
    let preset = setup(c)?;
    let (codec, codec_hash) = load_codec(c, codec)?;
    let vocab = Vocabulary::new(codec.codebook_size());
    let dataset = dataset.unwrap_or_else(|| c.out.join("dataset.jsonl"));
    let (_, samples) = load_dataset(
        &dataset,
        Expected {
            vocab_hash: Some(&vocab.hash()),
            codec_hash: Some(&codec_hash),
        },
    )?;
    let mut cfg: TrainConfig = preset.train.clone();
    if let Some(s) = modes {
        cfg.modes = parse_mode_set(&s)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut m = RunManifest::start("train", serde_json::to_value(&cfg)?, vec![cfg.seed]);
    m.record_file("dataset", &dataset)?;
    m.record("codec", codec_hash.clone());
    let model = init_model::<f32>(&cfg, &vocab)?;
    let out = train(model, &samples, &vocab, &cfg, &mut |r| {
        if r.step % 100 == 0 {
            info!("step {} loss {:.4}", r.step, r.mode_loss.values().sum::<f64>());
        }
    })?;
    let meta = serde_json::json!({ "train": cfg, "codec_hash": codec_hash });
    let hash = save_checkpoint(&c.out.join("checkpoint.bin"), &out.model, &vocab, &meta)?;
    write_metrics_csv(&c.out.join("metrics.csv"), &out.log)?;
    m.record("checkpoint", hash);
    info!(
        "{} iterations, early stop {}, {} + {} optimizer steps",
        out.iterations, out.stopped_early, out.phase_one_steps, out.phase_two_steps
    );
    println!("{}", m.finish(&c.out)?.display());
    Ok(())
}

fn cmd_eval(
    c: &Common,
    codec: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    modes: &str,
    episodes: Option<usize>,
) -> Result<()> {
    let preset = setup(c)?;
    let (codec, codec_hash) = load_codec(c, codec)?;
    let ckpt_path = checkpoint.unwrap_or_else(|| c.out.join("checkpoint.bin"));
    let (ckpt, ckpt_hash) = load_checkpoint(&ckpt_path)?;
    if let Some(expected) = ckpt.meta.get("codec_hash").and_then(|v| v.as_str()) {
        if expected != codec_hash {
            return Err(latentnav::Error::HashMismatch {
                what: "codec".into(),
                expected: expected.into(),
                found: codec_hash,
            }
            .into());
        }
    }
    let cfg: TrainConfig = match ckpt.meta.get("train") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => bail!("checkpoint {} carries no training config", ckpt_path.display()),
    };
    let eval = held_out(&preset, episodes.unwrap_or(preset.eval_episodes))?;
    let mut m = RunManifest::start("eval", serde_json::json!({ "modes": modes, "episodes": eval.len() }), vec![
        preset.data.seed.wrapping_add(EVAL_SEED_OFFSET),
    ]);
    m.record("checkpoint", ckpt_hash);
    m.record("codec", codec_hash);
    let mut rows = Vec::new();
    for name in modes.split(',') {
        let mode = name.trim().parse()?;
        let mut policy = ModelPolicy::new(&ckpt.model, &ckpt.vocab, &cfg.sequence, mode);
        let (aps, reports) = measure_aps(&mut policy, &eval, &codec, &preset.data.render, cfg.sequence.max_actions)?;
        let summary = metrics(&reports)?;
        let path = c.out.join(format!("reports-{}.jsonl", mode.name()));
        write_reports_jsonl(&path, &reports)?;
        m.record_file(&format!("reports-{}", mode.name()), &path)?;
        info!("{}: SR {:.3} ISR {:.3} CSR {:.3} CGT {:.3} APS {:.1}", mode.name(), summary.sr, summary.isr, summary.csr, summary.cgt, aps.aps);
        rows.push((mode.name().to_string(), summary, aps));
    }
    let summary = c.out.join("summary.csv");
    write_summary_csv(&summary, &rows)?;
    m.record_file("summary", &summary)?;
    print!("{}", std::fs::read_to_string(&summary)?);
    m.finish(&c.out)?;
    Ok(())
}

fn cmd_bench_codec(c: &Common, codec: Option<PathBuf>) -> Result<()> {
    let preset = setup(c)?;
    let (codec, codec_hash) = load_codec(c, codec)?;
    let eval = held_out(&preset, preset.eval_episodes)?;
    let images = episode_images(&eval);
    let schedule = &codec.config.schedule;
    let mut csv = String::from("prefix,tokens,ratio,mse\n");
    for prefix in 1..=codec.num_scales() {
        let mut total = 0.0;
        for img in &images {
            total += mse(img, &codec.decode(&codec.encode(img)?, prefix)?);
        }
        let ratio = compression_ratio(schedule, prefix, codec.config.image_size as u64)?;
        csv.push_str(&format!(
            "{prefix},{},{ratio},{:.6}\n",
            schedule.token_count(prefix),
            total / images.len() as f64
        ));
    }
    let path = c.out.join("codec_bench.csv");
    std::fs::write(&path, &csv)?;
    let mut m = RunManifest::start("bench-codec", serde_json::json!({ "images": images.len() }), vec![]);
    m.record("codec", codec_hash);
    m.record_file("codec_bench", &path)?;
    m.finish(&c.out)?;
    print!("{csv}");
    Ok(())
}

fn cmd_experiment(name: &str, c: &Common, seeds: &[u64]) -> Result<()> {
    if !EXPERIMENTS.contains(&name) {
        return Err(latentnav::Error::InvalidConfig(format!(
            "unknown experiment {name:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        ))
        .into());
    }
    if seeds.is_empty() {
        bail!("at least one seed is required");
    }
    let preset = setup(c)?;
    let mut m = RunManifest::start(&format!("experiment-{name}"), serde_json::to_value(&preset)?, seeds.to_vec());
    info!("preparing {} preset", preset.name);
    let prepared = prepare(&preset)?;
    m.record("codec", prepared.codec_hash.clone());
    m.record("vocab", prepared.vocab.hash());
    let results = c.out.join(format!("{name}.csv"));
    let mut file = std::fs::File::create(&results).with_context(|| format!("creating {}", results.display()))?;
    writeln!(file, "{RECORD_HEADER}")?;
    let records = run_experiment(name, &preset, &prepared, seeds, &mut |r| {
        info!("{} seed {} eval {}: ISR {:.3} SR {:.3}", r.label, r.seed, r.eval_mode, r.summary.isr, r.summary.sr);
        let _ = writeln!(file, "{}", r.csv());
    })?;
    drop(file);
    for r in &records {
        m.record(&format!("checkpoint-{}-seed{}", r.label, r.seed), r.checkpoint_hash.clone());
    }
    m.record_file("results", &results)?;
    let report_dir = c.out.join(format!("{name}-report"));
    for p in report::write_report(&results, &report_dir)? {
        println!("{}", p.display());
    }
    m.finish(&c.out)?;
    Ok(())
}
