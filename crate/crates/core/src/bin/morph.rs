use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use morph::codec::cor::CorMode;
use morph::codec::morph::{MorphFrameSpec, SfSet};
use morph::detect::detect_preamble;
use morph::harness::{
    self, compare_report, detection_rate, false_alarm_rate, gen_dataset, parse_snr_grid, read_csv, read_dataset,
    refine_threshold, run_ser_sweep_with_progress, snr_threshold, write_csv, DatasetScheme, Scheme, SerCurve,
    SnrPolicy, SweepConfig,
};
use morph::neural::{train_with_progress, ModelSpec, NeuralDecoder, TrainConfig};
use morph::phy::IqBuffer;
use morph::{Error, Result};

#[derive(Parser)]
#[command(name = "morph", version, about = "SF-hopping LoRa toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a labelled symbol dataset.
    GenDataset(GenDatasetArgs),
    /// Train the neural decoder on a dataset.
    Train(TrainArgs),
    /// Sweep SER over an SNR grid.
    EvalSer(EvalArgs),
    /// Lowest SNR keeping the SER at or below a target.
    SnrThreshold(ThresholdArgs),
    /// Detect a preamble in a file, or measure detection rates.
    Detect(DetectArgs),
    /// Summarise SER curves from CSV files.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Decoder {
    Dechirp,
    Cor,
    CorNc,
    Ostinato,
    Ifo2,
    Neural,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataScheme {
    Morph,
    Ifo2,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Standard,
    Compact,
}

#[derive(Args)]
struct GenDatasetArgs {
    #[arg(long, value_enum, default_value = "morph")]
    scheme: DataScheme,
    #[arg(long, default_value = "9,12")]
    sf_set: SfSet,
    /// IFO-2 spreading factor.
    #[arg(long, default_value_t = 12)]
    sf: u8,
    #[arg(long, default_value_t = 125_000.0)]
    bw: f64,
    /// Symbols per class.
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// `clean`, a fixed SNR in dB, or `lo:hi` for uniform SNRs.
    #[arg(long, default_value = "clean")]
    snr: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "standard")]
    arch: Arch,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Augmented copies of each training symbol per epoch.
    #[arg(long, default_value_t = 200)]
    augment: usize,
    #[arg(long, default_value = "-40:0", allow_hyphen_values = true)]
    snr_range: String,
    /// Epochs over which the lower SNR bound is walked down from the upper one.
    #[arg(long, default_value_t = 0)]
    warmup_epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "dechirp")]
    decoder: Decoder,
    #[arg(long, default_value = "9,12")]
    sf_set: SfSet,
    /// Spreading factor for dechirp and IFO-2.
    #[arg(long, default_value_t = 12)]
    sf: u8,
    /// Ostinato repetitions.
    #[arg(long, default_value_t = 4)]
    repeats: usize,
    #[arg(long, default_value_t = 125_000.0)]
    bw: f64,
    #[arg(long, default_value = "-30:-10:1", allow_hyphen_values = true)]
    snr_grid: String,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint for the neural decoders (`neural`, or `ifo2` with a model).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args)]
struct ThresholdArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(long, default_value_t = harness::DEFAULT_TARGET_SER)]
    target: f64,
    /// Add half-step points around the coarse threshold.
    #[arg(long)]
    refine: bool,
    /// Read curves from a CSV instead of sweeping.
    #[arg(long)]
    from_csv: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Raw interleaved little-endian f32 I/Q samples at fs = bw.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "9,12")]
    sf_set: SfSet,
    #[arg(long, default_value_t = 125_000.0)]
    bw: f64,
    #[arg(long, default_value_t = 8)]
    preamble: usize,
    #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
    snr: f64,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    /// CSV files written by `eval-ser`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 125_000.0)]
    bw: f64,
    #[arg(long, default_value_t = harness::DEFAULT_TARGET_SER)]
    target: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("bad range '{s}', expected lo:hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

fn load_decoder(model: &Option<PathBuf>) -> Result<Arc<NeuralDecoder>> {
    let path = model
        .as_ref()
        .ok_or_else(|| Error::Config("the neural decoder needs --model".into()))?;
    Ok(Arc::new(NeuralDecoder::load(path)?))
}

fn scheme(a: &SweepArgs) -> Result<Scheme> {
    Ok(match a.decoder {
        Decoder::Dechirp => Scheme::Dechirp { sf: a.sf },
        Decoder::Cor => Scheme::Cor {
            sf_set: a.sf_set,
            mode: CorMode::Coherent,
        },
        Decoder::CorNc => Scheme::Cor {
            sf_set: a.sf_set,
            mode: CorMode::Noncoherent,
        },
        Decoder::Ostinato => Scheme::Ostinato { repeats: a.repeats },
        Decoder::Ifo2 if a.model.is_some() => Scheme::Ifo2Neural {
            sf: a.sf,
            decoder: load_decoder(&a.model)?,
        },
        Decoder::Ifo2 => Scheme::Ifo2 { sf: a.sf },
        Decoder::Neural => Scheme::MorphNeural {
            sf_set: a.sf_set,
            decoder: load_decoder(&a.model)?,
        },
    })
}

fn save_csv(curves: &[SerCurve], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    write_csv(curves, BufWriter::new(f))
}

fn sweep(a: &SweepArgs) -> Result<(Scheme, SweepConfig, SerCurve)> {
    let s = scheme(a)?;
    let grid = parse_snr_grid(&a.snr_grid)?;
    let cfg = SweepConfig {
        bw: a.bw,
        trials: a.trials,
        seed: a.seed,
    };
    let curve = run_ser_sweep_with_progress(&s, &grid, &cfg, |p| {
        eprintln!("{} {} {:>6.1} dB  {}/{}  SER {:.4}", s.id(), s.config(), p.snr_db, p.n_errors, p.n_symbols, p.ser)
    })?;
    Ok((s, cfg, curve))
}

fn gen_dataset_cmd(a: GenDatasetArgs) -> Result<()> {
    let scheme = match a.scheme {
        DataScheme::Morph => DatasetScheme::Morph(a.sf_set),
        DataScheme::Ifo2 => DatasetScheme::Ifo2 { sf: a.sf },
    };
    let policy = if a.snr == "clean" {
        SnrPolicy::Clean
    } else if a.snr.contains(':') {
        let (lo, hi) = parse_range(&a.snr)?;
        SnrPolicy::Uniform(lo, hi)
    } else {
        SnrPolicy::Fixed(a.snr.parse().map_err(|_| Error::Config(format!("bad --snr '{}'", a.snr)))?)
    };
    let ds = gen_dataset(scheme, a.bw, a.count, policy, a.seed, &a.out)?;
    println!("wrote {} records to {}", ds.records.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let cfg = TrainConfig {
        spec: match a.arch {
            Arch::Standard => ModelSpec::standard(),
            Arch::Compact => ModelSpec::compact(),
        },
        epochs: a.epochs,
        batch: a.batch,
        lr: a.lr,
        seed: a.seed,
        snr_range_db: parse_range(&a.snr_range)?,
        augmentations: a.augment,
        warmup_epochs: a.warmup_epochs,
        ..Default::default()
    };
    let out = train_with_progress(&ds.labeled(), &cfg, |e| eprintln!("epoch {:>3}  loss {:.4}", e.epoch, e.loss))?;
    out.checkpoint.save(&a.out)?;
    let m = &out.checkpoint.meta;
    println!(
        "saved {} (train accuracy {:.3}, validation accuracy {:.3})",
        a.out.display(),
        m.train_accuracy,
        m.val_accuracy
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let (_, _, curve) = sweep(&a.sweep)?;
    match &a.sweep.csv {
        Some(p) => save_csv(std::slice::from_ref(&curve), p)?,
        None => write_csv(std::slice::from_ref(&curve), io::stdout())?,
    }
    Ok(())
}

fn threshold_cmd(a: ThresholdArgs) -> Result<()> {
    let curves = match &a.from_csv {
        Some(p) => {
            let f = File::open(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            read_csv(f, a.sweep.bw)?
        }
        None => {
            let (s, cfg, curve) = sweep(&a.sweep)?;
            let curve = if a.refine {
                refine_threshold(&s, &curve, &cfg, a.target)?.0
            } else {
                curve
            };
            if let Some(p) = &a.sweep.csv {
                save_csv(std::slice::from_ref(&curve), p)?;
            }
            vec![curve]
        }
    };
    for c in &curves {
        let r = snr_threshold(c, a.target)?;
        println!(
            "{} {}: threshold {} dB (SER <= {}, grid step {} dB)",
            r.scheme, r.config, r.threshold_db, r.target_ser, r.grid_step_db
        );
    }
    Ok(())
}

fn read_raw_iq(path: &Path, fs: f64) -> Result<IqBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("{}: not whole f32 I/Q pairs", path.display())));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok(IqBuffer::new(samples, fs))
}

fn detect_cmd(a: DetectArgs) -> Result<()> {
    let mut spec = MorphFrameSpec::new(a.sf_set, harness::detection::TRIAL_PAYLOAD);
    spec.bw = a.bw;
    spec.preamble_len = a.preamble;
    if let Some(path) = &a.input {
        let stream = read_raw_iq(path, a.bw)?;
        let d = detect_preamble(&stream, a.sf_set.sf_max(), a.preamble)?;
        println!(
            "found {} start {} peak {:.3} threshold {:.3}",
            d.found, d.start_index, d.peak_corr, d.threshold
        );
        return Ok(());
    }
    let det = detection_rate(&spec, a.snr, a.trials, a.seed)?;
    let fa = false_alarm_rate(&spec, 10, a.trials, a.seed)?;
    println!(
        "detection {}/{} ({:.3}) at {} dB; false alarms {}/{} ({:.3}) on noise-only streams",
        det.detected, det.trials, det.rate, a.snr, fa.detected, fa.trials, fa.rate
    );
    Ok(())
}

fn compare_cmd(a: CompareArgs) -> Result<()> {
    let mut curves = Vec::new();
    for p in &a.inputs {
        let f = File::open(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
        curves.extend(read_csv(f, a.bw)?);
    }
    let report = compare_report(&curves, a.target)?;
    if let Some(p) = &a.csv {
        fs::write(p, &report.csv).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
    }
    print!("{}", report.table());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format(_) => 3,
        Error::Range(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::GenDataset(a) => gen_dataset_cmd(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::EvalSer(a) => eval_cmd(a),
        Cmd::SnrThreshold(a) => threshold_cmd(a),
        Cmd::Detect(a) => detect_cmd(a),
        Cmd::Compare(a) => compare_cmd(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
