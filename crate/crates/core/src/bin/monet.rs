use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use monet::io::{self, ManifestEntry, MANIFEST_NAME};
use monet::model::{load_model, save_model, CHECKPOINT_FILE};
use monet::synth::{dataset, scene_seed, SceneConfig, Split};
use monet::train::{self, frame_metrics, loss_csv, metrics_csv, AdamConfig, LossRecord, TrainConfig};
use monet::{Ablation, Error, ModelConfig, Monet, Result, Variant};

#[derive(Parser)]
#[command(name = "monet", version, about = "Point cloud sequence prediction")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset of sequence files plus a manifest
    GenData(GenData),
    /// Train a model on the train split of a dataset
    Train(TrainArgs),
    /// Predict future frames of one sequence file
    Predict(PredictArgs),
    /// Per-frame Chamfer and EMD between two sequence files
    Eval(EvalArgs),
    /// Dump a sequence file as CSV
    ToCsv(ToCsvArgs),
}

fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|t| t.trim().parse::<T>().map_err(|_| format!("bad list entry {t:?}"))).collect()
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u32,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    #[arg(long, default_value_t = 512)]
    points: usize,
    #[arg(long, default_value_t = 3)]
    objects: usize,
    /// Scenes per split as train,val,test
    #[arg(long, default_value = "8,2,2")]
    split_counts: String,
    /// Linear speed range as min,max in m/frame
    #[arg(long, default_value = "0.1,0.5")]
    speed: String,
    /// Yaw rate range as min,max in rad/frame
    #[arg(long, default_value = "0,0.05")]
    angular_speed: String,
    /// Keep the same surface points in every frame
    #[arg(long)]
    no_resample: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "gru")]
    variant: Variant,
    #[arg(long, default_value = "full")]
    ablation: Ablation,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run directory for the config, checkpoint and loss curve
    #[arg(long)]
    out: PathBuf,
    /// Continue from the checkpoint in the run directory
    #[arg(long)]
    resume: bool,
    #[arg(long, default_value_t = 5)]
    input_frames: usize,
    #[arg(long, default_value_t = 5)]
    predict_frames: usize,
    #[arg(long, default_value = "256,128,64")]
    layer_points: String,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value = "32,64,128")]
    widths: String,
    #[arg(long, default_value_t = 100)]
    checkpoint_every: usize,
    #[arg(long)]
    no_clip: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Run directory written by `train`
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    horizon: usize,
    #[arg(long)]
    out: PathBuf,
    /// Use only the first N frames of the input
    #[arg(long)]
    observed: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = monet::metrics::DEFAULT_EMD_CAP)]
    emd_cap: usize,
    #[arg(long)]
    out: PathBuf,
    /// Leading truth frames to drop, e.g. the observed part of a full sequence
    #[arg(long, default_value_t = 0)]
    truth_skip: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ToCsvArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn range(s: &str, what: &str) -> Result<(f64, f64)> {
    match parse_list::<f64>(s).map_err(Error::Config)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::Config(format!("{what} expects min,max"))),
    }
}

fn gen_data(a: GenData) -> Result<()> {
    let counts = match parse_list::<usize>(&a.split_counts).map_err(Error::Config)?.as_slice() {
        [t, v, s] => (*t, *v, *s),
        _ => return Err(Error::Config("--split-counts expects train,val,test".into())),
    };
    let template = SceneConfig {
        n_points: a.points,
        n_objects: a.objects,
        speed: range(&a.speed, "--speed")?,
        angular_speed: range(&a.angular_speed, "--angular-speed")?,
        frames: a.frames,
        resample: !a.no_resample,
        ..SceneConfig::default()
    };
    template.validate()?;
    fs::create_dir_all(&a.out)?;
    let mut entries = Vec::new();
    let mut index = [0usize; 3];
    for sample in dataset(&template, a.seed, counts) {
        let sample = sample?;
        let slot = Split::ALL.iter().position(|s| *s == sample.split).expect("known split");
        let path = PathBuf::from(format!("{}_{:04}.pcsq", sample.split, index[slot]));
        debug_assert_eq!(sample.seed, scene_seed(a.seed, sample.split, index[slot] as u32));
        index[slot] += 1;
        io::write_pcsq(a.out.join(&path), &sample.frames)?;
        entries.push(ManifestEntry { path, split: sample.split, seed: sample.seed });
    }
    fs::write(a.out.join(MANIFEST_NAME), io::format_manifest(&entries))?;
    println!("wrote {} sequences to {}", entries.len(), a.out.display());
    Ok(())
}

fn write_curve(path: &Path, records: &[LossRecord], append: bool) -> Result<()> {
    let csv = loss_csv(records);
    if append && path.exists() {
        let mut old = fs::read_to_string(path)?;
        old.push_str(csv.split_once('\n').map_or("", |x| x.1));
        fs::write(path, old)?;
    } else {
        fs::write(path, csv)?;
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data = io::load_split(&a.data, Split::Train)?;
    let first = data.first().and_then(|s| s.first()).ok_or_else(|| Error::Input("no training sequences in manifest".into()))?;
    let input_points = first.len();
    let (model, mut params) = if a.resume {
        let (model, params) = load_model(&a.out)?;
        if model.config.input_points != input_points {
            return Err(Error::Input(format!(
                "checkpoint expects {} points, data has {input_points}",
                model.config.input_points
            )));
        }
        (model, params)
    } else {
        let points = parse_list::<usize>(&a.layer_points).map_err(Error::Config)?;
        let widths = parse_list::<usize>(&a.widths).map_err(Error::Config)?;
        if points.len() != widths.len() {
            return Err(Error::Config("--layer-points and --widths need the same length".into()));
        }
        let cfg = ModelConfig::uniform_k(input_points, &points, a.k, &widths).with_variant(a.variant).with_ablation(a.ablation);
        let model = Monet::new(cfg)?;
        let params = model.init_params(a.seed)?;
        (model, params)
    };
    let cfg = TrainConfig {
        adam: AdamConfig { lr: a.lr, ..AdamConfig::default() },
        iterations: a.iters,
        input_frames: a.input_frames,
        predict_frames: a.predict_frames,
        seed: a.seed,
        checkpoint_every: a.checkpoint_every,
        clip_norm: (!a.no_clip).then_some(5.0),
    };
    cfg.validate()?;
    save_model(&a.out, &model, &params)?;
    let curve = a.out.join("loss.csv");
    let mut records: Vec<LossRecord> = Vec::new();
    let result = train::train(
        &model,
        &mut params,
        &cfg,
        &data,
        |p| p.save_full(a.out.join(CHECKPOINT_FILE)),
        |r| {
            records.push(*r);
            if r.iteration % 50 == 0 {
                eprintln!("iteration {} loss {:.6}", r.iteration, r.loss);
            }
        },
    );
    save_model(&a.out, &model, &params)?;
    write_curve(&curve, &records, a.resume)?;
    result.map(|_| ())
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let (model, params) = load_model(&a.model)?;
    let mut frames = io::read_pcsq(&a.input)?;
    if let Some(n) = a.observed {
        if n > frames.len() {
            return Err(Error::Input(format!("--observed {n} but the file has {} frames", frames.len())));
        }
        frames.truncate(n);
    }
    let preds = model.predict(&params, &frames, a.horizon)?;
    io::write_pcsq(&a.out, &preds)
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let pred = io::read_pcsq(&a.pred)?;
    let truth = io::read_pcsq(&a.truth)?;
    let truth = truth.get(a.truth_skip.min(truth.len())..).unwrap_or(&[]);
    if pred.len() != truth.len() {
        return Err(Error::Input(format!("{} predicted frames vs {} truth frames", pred.len(), truth.len())));
    }
    let rows = pred
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(j, (p, t))| frame_metrics(p, t, a.emd_cap, a.seed ^ j as u64))
        .collect::<Result<Vec<_>>>()?;
    fs::write(&a.out, metrics_csv(&rows))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData(a) => gen_data(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Predict(a) => predict_cmd(a),
        Cmd::Eval(a) => eval_cmd(a),
        Cmd::ToCsv(a) => {
            let frames = io::read_pcsq(&a.input)?;
            fs::write(&a.out, io::pcsq_to_csv(&frames))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Diverged { .. } => 2,
                Error::Input(_) => 3,
                _ => 1,
            })
        }
    }
}
