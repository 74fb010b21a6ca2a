mod settings;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pixrec::data::{
    gen_corners_labeled, gen_glyph_sr, idx::read_idx_images, load_dataset, save_dataset, save_image, synthetic_digits,
    Corner, Image8, PairedDataset, Split,
};
use pixrec::eval::{corner_exclusivity, nearest_neighbor_baseline, MetricsReport, DEFAULT_EXCLUSIVITY};
use pixrec::image::{Image, QuantizedImage};
use pixrec::model::{load_bundle, nll_report, ModelBundle, ModelKind};
use pixrec::sampler::sample_image;
use pixrec::train::{default_objective, init_params, Trainer};
use settings::{write_manifest, Settings};

#[derive(Parser)]
#[command(name = "pixrec", version, about = "Pixel-recursive super resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Line-oriented key=value settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value setting; repeatable, overrides --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corners (or glyph super-resolution) dataset.
    GenCorners {
        #[command(flatten)]
        common: Common,
        /// MNIST idx3 image file; synthetic glyphs are used when absent.
        #[arg(long)]
        mnist: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Train a model; resumes from --resume when given.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training manifest.
        #[arg(long)]
        data: PathBuf,
        /// Validation manifest.
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        base_lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw samples for every input of a dataset.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
    },
    /// Decode a dataset and score outputs, likelihood and corner classes.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
    },
    /// Nearest-neighbour baseline: copy the target of the closest training input.
    BaselineNn {
        #[command(flatten)]
        common: Common,
        /// Training manifest searched for neighbours.
        #[arg(long)]
        train: PathBuf,
        /// Query manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Score a directory of `output_NNNNN.pgm` files against a dataset.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        levels: Option<usize>,
    },
}

#[derive(Args)]
struct Sampling {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Manifest whose inputs are decoded.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    greedy: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    num_samples: Option<usize>,
    /// Decode only the first N inputs.
    #[arg(long)]
    limit: Option<usize>,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorners {
            common,
            mnist,
            count,
            seed,
            split,
            levels,
        } => {
            let mut s = Settings::load(common.config.as_deref(), &common.sets)?;
            s.put("data.count", count);
            s.put("data.seed", seed);
            s.put("data.split", split);
            s.put("data.levels", levels);
            s.reject_unknown()?;
            gen_corners(&s, mnist.as_deref(), &common.out)
        }
        Command::Train {
            common,
            data,
            valid,
            resume,
            kind,
            objective,
            steps,
            batch_size,
            base_lr,
            seed,
        } => {
            let mut s = Settings::load(common.config.as_deref(), &common.sets)?;
            s.put("kind", kind);
            s.put("train.objective", objective);
            s.put("train.steps", steps);
            s.put("train.batch_size", batch_size);
            s.put("train.base_lr", base_lr);
            s.put("train.seed", seed);
            s.reject_unknown()?;
            train(&s, &data, valid.as_deref(), resume.as_deref(), &common.out)
        }
        Command::Sample { common, sampling } => {
            let s = sampling_settings(&common, &sampling)?;
            decode(&s, &sampling, &common.out, "sample")
        }
        Command::Evaluate { common, sampling } => {
            let s = sampling_settings(&common, &sampling)?;
            decode(&s, &sampling, &common.out, "evaluate")
        }
        Command::BaselineNn {
            common,
            train,
            data,
            levels,
        } => {
            let mut s = Settings::load(common.config.as_deref(), &common.sets)?;
            s.put("levels", levels);
            s.reject_unknown()?;
            baseline_nn(&s, &train, &data, &common.out)
        }
        Command::Metrics {
            common,
            data,
            outputs,
            levels,
        } => {
            let mut s = Settings::load(common.config.as_deref(), &common.sets)?;
            s.put("levels", levels);
            s.reject_unknown()?;
            metrics(&s, &data, &outputs, &common.out)
        }
    }
}

fn sampling_settings(common: &Common, a: &Sampling) -> Result<Settings> {
    let mut s = Settings::load(common.config.as_deref(), &common.sets)?;
    s.put("sample.tau", a.tau);
    s.put("sample.greedy", a.greedy.then_some(true));
    s.put("sample.seed", a.seed);
    s.put("sample.num_samples", a.num_samples);
    s.put("sample.limit", a.limit);
    s.reject_unknown()?;
    Ok(s)
}

fn source_digits(mnist: Option<&Path>, count: usize, seed: u64) -> Result<Vec<Image>> {
    match mnist {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(read_idx_images(&bytes)?)
        }
        None => Ok(synthetic_digits(count, seed).into_iter().map(|(img, _)| img).collect()),
    }
}

fn gen_corners(s: &Settings, mnist: Option<&Path>, out: &Path) -> Result<()> {
    let (count, seed, split) = (s.data_count()?, s.data_seed()?, s.split()?);
    let src = source_digits(mnist, s.data_sources()?, seed)?;
    let ds = match s.task() {
        "corners" => {
            let (ds, corners) = gen_corners_labeled(&src, &s.corners()?, count, seed, split)?;
            let labels: String = corners
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let c = match c {
                        Corner::TopLeft => "top_left",
                        Corner::BottomRight => "bottom_right",
                    };
                    format!("{i}\t{c}\n")
                })
                .collect();
            fs::create_dir_all(out)?;
            fs::write(out.join("corners.tsv"), labels)?;
            ds
        }
        "glyph_sr" => gen_glyph_sr(&src, &s.glyph_sr()?, count, seed, split)?,
        t => bail!("unknown data.task {t}"),
    };
    let manifest = save_dataset(out, &ds)?;
    write_manifest(out, "gen-corners", seed, &s.text())?;
    println!("{} pairs -> {}", ds.len(), manifest.display());
    Ok(())
}

fn train(s: &Settings, data: &Path, valid: Option<&Path>, resume: Option<&Path>, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut trainer = match resume {
        Some(p) => {
            let mut t = Trainer::load(p).with_context(|| format!("resuming from {}", p.display()))?;
            // Only the schedule may change on resume.
            let mut cfg = t.config.clone();
            cfg.steps = s.train(cfg.objective)?.steps;
            if s.get("train.steps").is_some() {
                t.config = cfg;
            }
            t
        }
        None => {
            let model = s.model()?;
            let cfg = s.train(default_objective(model.kind))?;
            Trainer::new(cfg.clone(), init_params(&model, cfg.seed)?)?
        }
    };
    let levels = trainer.bundle.config.levels;
    let train_ds = load_dataset(data, levels, Split::Train)?;
    let valid_ds = valid.map(|v| load_dataset(v, levels, Split::Valid)).transpose()?;
    let text = format!("{}{}", trainer.bundle.config.to_text(), trainer.config.to_text());
    write_manifest(out, "train", trainer.config.seed, &text)?;

    let ck = out.join("checkpoint.bin");
    let mut log = fs::OpenOptions::new().create(true).append(true).open(out.join("log.jsonl"))?;
    let every = (trainer.config.steps / 20).max(1);
    let mut io_err = None;
    let result = trainer.run(&train_ds, valid_ds.as_ref(), Some(&ck), |e| {
        if let Err(err) = writeln!(log, "{}", serde_json::to_string(e).expect("log entry serializes")) {
            io_err.get_or_insert(err);
        }
        if e.step % every == 0 || e.valid.is_some() {
            match e.valid {
                Some(v) => eprintln!("step {:>7}  loss {:.4} bits  valid {v:.4}", e.step, e.loss_bits),
                None => eprintln!("step {:>7}  loss {:.4} bits", e.step, e.loss_bits),
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e).context("writing log.jsonl");
    }
    result?;
    println!("checkpoint -> {}", ck.display());
    Ok(())
}

fn output_name(i: usize, s: usize) -> String {
    if s == 0 {
        format!("output_{i:05}.pgm")
    } else {
        format!("output_{i:05}_s{s}.pgm")
    }
}

fn save_outputs(out: &Path, outputs: &[Vec<QuantizedImage>]) -> Result<()> {
    fs::create_dir_all(out)?;
    for (i, samples) in outputs.iter().enumerate() {
        for (s, y) in samples.iter().enumerate() {
            save_image(out.join(output_name(i, s)), &Image8::from_levels(y))?;
        }
    }
    Ok(())
}

fn load_limited(manifest: &Path, levels: usize, limit: usize) -> Result<PairedDataset> {
    let mut ds = load_dataset(manifest, levels, Split::Test)?;
    ds.pairs.truncate(limit);
    if ds.is_empty() {
        bail!("{} has no pairs", manifest.display());
    }
    Ok(ds)
}

fn decode(s: &Settings, a: &Sampling, out: &Path, command: &str) -> Result<()> {
    let bundle: ModelBundle = load_bundle(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let plan = s.sample_plan()?;
    let ds = load_limited(&a.data, bundle.config.levels, s.limit()?)?;
    let outputs = ds
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut plan = plan.clone();
            plan.seed = plan.seed.wrapping_add((i as u64) << 32);
            Ok(sample_image(&bundle, &p.input, &plan)?)
        })
        .collect::<Result<Vec<_>>>()?;
    save_outputs(out, &outputs)?;
    let text = format!("{}{}", bundle.config.to_text(), s.text());
    write_manifest(out, command, plan.seed, &text)?;
    if command == "sample" {
        println!("{} inputs x {} samples -> {}", outputs.len(), plan.num_samples, out.display());
        return Ok(());
    }
    let firsts: Vec<QuantizedImage> = outputs.iter().map(|o| o[0].clone()).collect();
    let nll = match bundle.kind() {
        ModelKind::Regression => None,
        _ => Some(
            ds.pairs
                .iter()
                .map(|p| nll_report(&bundle, &p.input, &p.target))
                .collect::<pixrec::Result<Vec<_>>>()?,
        ),
    };
    let report = MetricsReport::compute(&ds, &firsts, nll.as_deref())?;
    write_report(out, &report, &firsts)
}

fn write_report(out: &Path, report: &MetricsReport, outputs: &[QuantizedImage]) -> Result<()> {
    let mut text = report.to_text();
    let mut classes = std::collections::BTreeMap::new();
    for y in outputs {
        *classes.entry(corner_exclusivity(y, DEFAULT_EXCLUSIVITY).as_str()).or_insert(0usize) += 1;
    }
    let summary: Vec<String> = classes.iter().map(|(k, v)| format!("{k} {v}")).collect();
    text.push_str(&format!("corners\t{}\n", summary.join("\t")));
    fs::write(out.join("metrics.txt"), &text)?;
    fs::write(out.join("metrics.json"), report.to_json() + "\n")?;
    for line in text.lines().filter(|l| !l.starts_with("image ") && !l.starts_with('#')) {
        println!("{line}");
    }
    Ok(())
}

fn baseline_nn(s: &Settings, train: &Path, data: &Path, out: &Path) -> Result<()> {
    let levels = s.levels(256)?;
    let train_ds = load_dataset(train, levels, Split::Train)?;
    let ds = load_limited(data, levels, usize::MAX)?;
    let outputs = ds
        .pairs
        .iter()
        .map(|p| Ok(vec![nearest_neighbor_baseline(&p.input, &train_ds)?]))
        .collect::<Result<Vec<_>>>()?;
    save_outputs(out, &outputs)?;
    write_manifest(out, "baseline-nn", 0, &s.text())?;
    let firsts: Vec<QuantizedImage> = outputs.into_iter().map(|mut o| o.remove(0)).collect();
    let report = MetricsReport::compute(&ds, &firsts, None)?;
    write_report(out, &report, &firsts)
}

fn metrics(s: &Settings, data: &Path, outputs: &Path, out: &Path) -> Result<()> {
    let levels = s.levels(256)?;
    let ds = load_limited(data, levels, usize::MAX)?;
    let ys = (0..ds.len())
        .map(|i| {
            let p = outputs.join(output_name(i, 0));
            Ok(pixrec::data::load_image(&p)
                .with_context(|| format!("reading {}", p.display()))?
                .to_levels(levels)?)
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    write_manifest(out, "metrics", 0, &s.text())?;
    let report = MetricsReport::compute(&ds, &ys, None)?;
    write_report(out, &report, &ys)
}

