use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use mbanet::data::{self, checkpoint, image, pgm, Domain, GenConfig, Manifest, Split};
use mbanet::eval::{self, ablation_csv, ablation_table, grid};
use mbanet::gradcheck::{check_model, GradCheckOptions, ModelCheckOptions, ModelProblem};
use mbanet::training::{self, AugmentConfig, LrSchedule, TrainConfig};
use mbanet::{Error, MbaNet, ModelConfig, Result};

#[derive(Parser)]
#[command(name = "mbanet", version, about = "Two-branch lesion segmentation: data, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-domain phantom dataset.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint with its loss log.
    Train(TrainArgs),
    /// Dice report for one split of a dataset.
    Eval(EvalArgs),
    /// Segment a single PGM image.
    Predict(PredictArgs),
    /// Compare analytic parameter gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Train and score every (RFIN, DKIN) count on the validation split.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    train: usize,
    #[arg(long, default_value_t = 10)]
    val: usize,
    #[arg(long, default_value_t = 20)]
    test: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Render every geometry in both domains.
    #[arg(long)]
    paired: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.99)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = LrSchedule::Poly)]
    lr_schedule: LrSchedule,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train on one domain only.
    #[arg(long)]
    domain: Option<Domain>,
    /// Disable flips, scaling and shifts.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = Split::Test)]
    split: Split,
    #[arg(long)]
    domain: Option<Domain>,
    #[arg(long)]
    report: PathBuf,
    /// Domain the checkpoint was trained on; adds the in-domain/cross-domain table.
    #[arg(long)]
    trained_on: Option<Domain>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random unit directions per tensor.
    #[arg(long, default_value_t = 3)]
    directions: usize,
    /// Single coordinates per tensor.
    #[arg(long, default_value_t = 3)]
    coords: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    rfin: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,6")]
    dkin: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Base architecture; the fusion counts are overridden per cell.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prior-branch layers per stage.
    #[arg(long, default_value_t = 6)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the extra (0, 0) row.
    #[arg(long)]
    no_sanity: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => evaluate(a),
        Command::Predict(a) => predict(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let cfg = GenConfig { seed: a.seed, counts: [a.train, a.val, a.test], size: a.size, paired: a.paired };
    let manifest = data::generate(&cfg, &a.out)?;
    println!("wrote {} samples to {}", manifest.samples.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let model_cfg = ModelConfig::from_json_file(&a.config)?;
    let mut cfg = TrainConfig {
        epochs: a.epochs,
        batch: a.batch,
        lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        schedule: a.lr_schedule,
        seed: a.seed,
        ..TrainConfig::default()
    };
    if a.no_augment {
        cfg.augment = AugmentConfig::identity();
    }
    cfg.validate()?;
    let manifest = Manifest::read(&a.data)?;
    let samples = data::load_split(&manifest, Split::Train, a.domain, model_cfg.x_c)?;
    let (model, mut store) = MbaNet::init::<f32>(&model_cfg, a.seed)?;
    let per_epoch = samples.len().div_ceil(cfg.batch);
    let start = Instant::now();
    let mut epoch_loss = 0.0;
    let log = training::train(&model, &mut store, &samples, &cfg, |row| {
        epoch_loss += row.loss;
        if (row.iteration + 1) % per_epoch == 0 {
            println!(
                "epoch {:>3}  lr {:.3e}  loss {:.5}  ({:.1}s)",
                row.epoch,
                row.lr,
                epoch_loss / per_epoch as f64,
                start.elapsed().as_secs_f64()
            );
            epoch_loss = 0.0;
        }
    })?;
    checkpoint::save(&a.out, &model_cfg, cfg.epochs, cfg.seed, &store)?;
    training::write_loss_log(&a.out.join("loss.csv"), &log)?;
    println!("checkpoint written to {}", a.out.display());
    Ok(())
}

fn evaluate(a: EvalArgs) -> Result<()> {
    let (model, store, _) = checkpoint::load(&a.ckpt)?;
    let manifest = Manifest::read(&a.data)?;
    let samples = data::load_split(&manifest, a.split, a.domain, model.config.x_c)?;
    let report = eval::evaluate(&model, &store, &samples)?;
    write_file(&a.report, &report.to_csv())?;
    print!("{}", report.to_table());
    if let Some(trained_on) = a.trained_on {
        let domains: Vec<Domain> = [Domain::A, Domain::B]
            .into_iter()
            .filter(|d| report.row(*d, None).is_some())
            .collect();
        let results: Vec<_> = domains.iter().map(|&d| (d, &report)).collect();
        println!();
        print!("{}", eval::cross_domain_table(trained_on, &results));
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let (model, store, _) = checkpoint::load(&a.ckpt)?;
    let input = pgm::read(&a.image)?;
    let (h, w) = (input.shape()[0], input.shape()[1]);
    let c = model.config.x_c;
    let low = image::resize_bilinear(&input, c, c);
    let probs = eval::predict(&model, &store, &[low])?.remove(0);
    let mask = image::resize_nearest(&eval::binarize(&probs), h, w);
    pgm::write(&a.out, &mask)?;
    let fg = mask.data().iter().filter(|&&v| v > 0.5).count();
    println!("wrote {} ({fg} of {} pixels foreground)", a.out.display(), h * w);
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let cfg = ModelConfig::from_json_file(&a.config)?;
    let opts = ModelCheckOptions {
        grad: GradCheckOptions { eps: a.eps, tol: a.tol, ..GradCheckOptions::default() },
        directions: a.directions,
        coords_per_tensor: a.coords,
        seed: a.seed,
    };
    let start = Instant::now();
    let problem = ModelProblem::new(&cfg, a.seed)?;
    let report = check_model(&problem, opts, |p| {
        if p.rel_err >= a.tol {
            println!("FAIL {:<48} rel err {:.3e}", p.name, p.rel_err);
        }
    })?;
    let fraction = report.pass_fraction(a.tol);
    let worst = report.worst().map_or(String::from("-"), |p| p.name.clone());
    println!(
        "{} tensors, {} probes, {:.2}% within {:.0e}, max rel err {:.3e} ({worst}), {:.1}s",
        report.params.len(),
        report.probe_count(),
        100.0 * fraction,
        a.tol,
        report.max_rel_err(),
        start.elapsed().as_secs_f64()
    );
    if fraction < 1.0 {
        return Err(Error::Numeric(format!("gradient check failed: max rel err {:.3e}", report.max_rel_err())));
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let base = match &a.config {
        Some(path) => ModelConfig::from_json_file(path)?,
        None => ModelConfig::default(),
    };
    let base = ModelConfig { m: a.m, ..base };
    let cfg = TrainConfig { epochs: a.epochs, batch: a.batch, lr: a.lr, seed: a.seed, ..TrainConfig::default() };
    cfg.validate()?;
    let manifest = Manifest::read(&a.data)?;
    let train_set = data::load_split(&manifest, Split::Train, None, base.x_c)?;
    let val_set = data::load_split(&manifest, Split::Val, None, base.x_c)?;
    let mut settings = grid(&a.rfin, &a.dkin);
    if !a.no_sanity {
        settings.push((0, 0));
    }
    let cells = eval::ablate(&base, &cfg, &train_set, &val_set, &settings, |cell| match &cell.outcome {
        Ok(d) => println!("rfin {} dkin {}: {d:.2}%", cell.rfin, cell.dkin),
        Err(reason) => println!("rfin {} dkin {}: invalid ({reason})", cell.rfin, cell.dkin),
    })?;
    fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    let default = (ModelConfig::default().rfin_count, ModelConfig::default().dkin_count);
    let table = ablation_table(&cells, default);
    write_file(&a.out.join("ablation.csv"), &ablation_csv(&cells))?;
    write_file(&a.out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}
