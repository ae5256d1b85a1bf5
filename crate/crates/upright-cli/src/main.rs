//! Command-line front end for upright panorama adjustment.
//!
//! Exit codes: 0 success, 2 usage error (from argument parsing),
//! 3 data/format error, 4 numeric failure.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use upright::dataset::{build_dataset, load_split, save_split, synth_panorama, PanoramaStyle};
use upright::eval::{accuracy_table, bench_throughput, psnr, render_storage_report, ssim, DEFAULT_THRESHOLDS};
use upright::geometry::{angle_error, EquirectGrid, TiltAngles};
use upright::image::{load_ppm, load_uimg, save_ppm, save_uimg, EquirectImage};
use upright::lut::{
    coarse_then_upsample, generate_lut, grid_storage, load_lut, lut_error, precompute_grid,
    save_lut, LutDirection,
};
use upright::models::{
    train_stage, EndToEnd, Generator, LutFormer, LutSource, ModelBundle, OrientationNet, Preset,
    ReconstructionMode, RunConfig, Stage, TrainSchedule,
};
use upright::nn::checkpoint::{load_checkpoint, restore_into, save_checkpoint};
use upright::remap::{remap, remap_parallel, rotate_image, Interp};
use upright::UprightError;

#[derive(Parser)]
#[command(name = "upright", version, about = "Upright adjustment of equirectangular panoramas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remapping-table operations
    #[command(subcommand)]
    Lut(LutCommand),
    /// Remap an image through a stored table
    Remap(RemapArgs),
    /// Upright-adjust with known tilt angles (exact pipeline)
    Adjust(AdjustArgs),
    /// Dataset operations
    #[command(subcommand)]
    Data(DataCommand),
    /// Train one pipeline stage
    Train(TrainArgs),
    /// Evaluate a trained orientation checkpoint on a dataset split
    Eval(EvalArgs),
    /// Measure adjustment throughput
    Bench(BenchArgs),
    /// Full pipeline on one image with a trained orientation net
    E2e(E2eArgs),
}

#[derive(Subcommand)]
enum LutCommand {
    /// Compute one analytic table and write it as a ULUT file
    Gen(LutGenArgs),
    /// Precompute a lattice of tables and print the storage report
    Grid(LutGridArgs),
    /// Compare coarse-then-upsampled table against the analytic oracle
    Approx(LutApproxArgs),
}

#[derive(Subcommand)]
enum DataCommand {
    /// Generate a synthetic dataset and write train/val/test splits
    Synth(DataSynthArgs),
}

#[derive(Args)]
struct LutGenArgs {
    #[arg(long, allow_hyphen_values = true)]
    pitch: f64,
    #[arg(long, allow_hyphen_values = true)]
    roll: f64,
    /// Table size as HxW (width must be 2x height)
    #[arg(long, default_value = "256x512")]
    size: String,
    /// Table direction: fwd (tilt) or inv (upright)
    #[arg(long, default_value = "inv")]
    dir: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LutGridArgs {
    /// Angle range as min:max degrees
    #[arg(long, default_value = "-90:90", allow_hyphen_values = true)]
    range: String,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, default_value = "256x512")]
    size: String,
    #[arg(long, default_value = "inv")]
    dir: String,
    /// Write the table files here; report-only when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LutApproxArgs {
    #[arg(long, allow_hyphen_values = true)]
    pitch: f64,
    #[arg(long, allow_hyphen_values = true)]
    roll: f64,
    /// Coarse size as HxW
    #[arg(long, default_value = "16x32")]
    coarse: String,
    #[arg(long, default_value_t = 16)]
    factor: usize,
}

#[derive(Args)]
struct RemapArgs {
    /// Input image (.ppm or .uimg)
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    lut: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Nearest-neighbor sampling instead of bilinear
    #[arg(long)]
    nearest: bool,
    /// Worker threads (>1 enables row-parallel remap; output is identical)
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct AdjustArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pitch: f64,
    #[arg(long, allow_hyphen_values = true)]
    roll: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    nearest: bool,
}

#[derive(Args)]
struct DataSynthArgs {
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Tilt range in degrees (symmetric)
    #[arg(long, default_value_t = 30.0)]
    range: f64,
    #[arg(long, default_value = "64x128")]
    size: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// orientation | lutformer | reconstruction
    #[arg(long)]
    stage: String,
    /// Dataset split directory (from `data synth`)
    #[arg(long)]
    data: PathBuf,
    /// Optional key=value config overrides
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    log_every: usize,
    /// Checkpoint output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// analytic | e2e
    #[arg(long, default_value = "analytic")]
    pipeline: String,
    #[arg(long, default_value_t = 30)]
    frames: usize,
    #[arg(long, default_value = "256x512")]
    size: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct E2eArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Table source: analytic | learned
    #[arg(long, default_value = "analytic")]
    lut: String,
    /// Reconstruction: identity | learned
    #[arg(long, default_value = "identity")]
    recon: String,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(UprightError),
}

impl From<UprightError> for CliError {
    fn from(e: UprightError) -> Self {
        CliError::Data(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_size(s: &str) -> Result<EquirectGrid, CliError> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| usage(format!("size must be HxW, got {s}")))?;
    let h: usize = h.parse().map_err(|_| usage(format!("bad height in {s}")))?;
    let w: usize = w.parse().map_err(|_| usage(format!("bad width in {s}")))?;
    Ok(EquirectGrid::new(h, w)?)
}

fn parse_dir(s: &str) -> Result<LutDirection, CliError> {
    match s {
        "fwd" => Ok(LutDirection::ForwardTilt),
        "inv" => Ok(LutDirection::InverseUpright),
        _ => Err(usage(format!("dir must be fwd or inv, got {s}"))),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), CliError> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| usage(format!("range must be min:max, got {s}")))?;
    let lo: f64 = lo.parse().map_err(|_| usage(format!("bad range min in {s}")))?;
    let hi: f64 = hi.parse().map_err(|_| usage(format!("bad range max in {s}")))?;
    Ok((lo, hi))
}

fn load_image(path: &Path) -> Result<EquirectImage, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => Ok(load_ppm(path)?),
        Some("uimg") => Ok(load_uimg(path)?),
        _ => Err(usage(format!("unknown image extension: {}", path.display()))),
    }
}

fn save_image(img: &EquirectImage, path: &Path) -> Result<(), CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => Ok(save_ppm(img, path)?),
        Some("uimg") => Ok(save_uimg(img, path)?),
        _ => Err(usage(format!("unknown image extension: {}", path.display()))),
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    let mut run = RunConfig::preset(Preset::Desk);
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| UprightError::io(p, e))?;
        run.apply_overrides(&text)?;
    }
    Ok(run)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            let code = match e {
                UprightError::Diverged { .. } | UprightError::NonFinite { .. } => 4,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Lut(LutCommand::Gen(a)) => lut_gen(a),
        Command::Lut(LutCommand::Grid(a)) => lut_grid(a),
        Command::Lut(LutCommand::Approx(a)) => lut_approx(a),
        Command::Remap(a) => cmd_remap(a),
        Command::Adjust(a) => cmd_adjust(a),
        Command::Data(DataCommand::Synth(a)) => data_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::E2e(a) => cmd_e2e(a),
    }
}

fn lut_gen(a: LutGenArgs) -> Result<(), CliError> {
    let grid = parse_size(&a.size)?;
    let dir = parse_dir(&a.dir)?;
    let angles = TiltAngles::new(a.pitch, a.roll)?;
    let lut = generate_lut(angles, grid, dir);
    save_lut(&lut, &a.out)?;
    println!(
        "wrote {} ({}x{}, {:?}, pitch {} roll {})",
        a.out.display(),
        lut.height(),
        lut.width(),
        dir,
        a.pitch,
        a.roll
    );
    Ok(())
}

fn lut_grid(a: LutGridArgs) -> Result<(), CliError> {
    let grid = parse_size(&a.size)?;
    let dir = parse_dir(&a.dir)?;
    let (lo, hi) = parse_range(&a.range)?;
    if let Some(out) = &a.out {
        let (luts, report) = precompute_grid(lo, hi, a.step, grid, dir)?;
        std::fs::create_dir_all(out).map_err(|e| UprightError::io(out, e))?;
        for ((pi, ri), lut) in &luts.entries {
            let path = out.join(format!("lut_p{pi:03}_r{ri:03}.ulut"));
            save_lut(lut, &path)?;
        }
        print!("{}", render_storage_report(&report));
        println!("files written to {}", out.display());
    } else {
        let report = grid_storage(lo, hi, a.step, grid)?;
        print!("{}", render_storage_report(&report));
    }
    Ok(())
}

fn lut_approx(a: LutApproxArgs) -> Result<(), CliError> {
    let coarse = parse_size(&a.coarse)?;
    let angles = TiltAngles::new(a.pitch, a.roll)?;
    let up = coarse_then_upsample(angles, coarse, a.factor)?;
    let fine = EquirectGrid::new(coarse.height() * a.factor, coarse.width() * a.factor)?;
    let exact = generate_lut(angles, fine, LutDirection::InverseUpright);
    let err = lut_error(&up, &exact)?;
    println!("coarse              {}x{}", coarse.height(), coarse.width());
    println!("fine                {}x{}", fine.height(), fine.width());
    println!("mean abs error      {:.6e}", err.mean_abs_error);
    println!("max abs error       {:.6e}", err.max_abs_error);
    println!("psnr x channel      {:.2} dB", err.psnr_per_channel[0]);
    println!("psnr y channel      {:.2} dB", err.psnr_per_channel[1]);
    println!(
        "worst pixel         ({}, {})",
        err.worst_pixel.0, err.worst_pixel.1
    );
    Ok(())
}

fn cmd_remap(a: RemapArgs) -> Result<(), CliError> {
    let img = load_image(&a.input)?;
    let lut = load_lut(&a.lut)?;
    let interp = if a.nearest { Interp::Nearest } else { Interp::Bilinear };
    let out = if a.threads > 1 {
        remap_parallel(&img, &lut, interp, a.threads)?
    } else {
        remap(&img, &lut, interp)?
    };
    save_image(&out, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_adjust(a: AdjustArgs) -> Result<(), CliError> {
    let img = load_image(&a.input)?;
    let angles = TiltAngles::new(a.pitch, a.roll)?;
    let interp = if a.nearest { Interp::Nearest } else { Interp::Bilinear };
    let out = rotate_image(&img, angles, LutDirection::InverseUpright, interp)?;
    save_image(&out, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn data_synth(a: DataSynthArgs) -> Result<(), CliError> {
    let grid = parse_size(&a.size)?;
    let splits = build_dataset(a.n, a.range, 1.0, a.seed, grid, grid)?;
    for (name, records) in
        [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)]
    {
        let dir = a.out.join(name);
        save_split(records, &dir)?;
        println!("{name}: {} records -> {}", records.len(), dir.display());
    }
    Ok(())
}

fn stage_of(s: &str) -> Result<Stage, CliError> {
    Stage::from_name(s)
        .ok_or_else(|| usage(format!("stage must be orientation, lutformer or reconstruction, got {s}")))
}

fn ckpt_path(dir: &Path, stage: Stage) -> PathBuf {
    dir.join(format!("{}.uckp", stage.name()))
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let stage = stage_of(&a.stage)?;
    let mut run = load_config(a.config.as_ref())?;
    run.seed = a.seed;
    let records = load_split(&a.data.join("train")).or_else(|_| load_split(&a.data))?;
    let mut models = ModelBundle::new(&run)?;
    // later stages start from earlier checkpoints when present
    for prior in [Stage::Orientation, Stage::LutFormer] {
        if prior == stage {
            break;
        }
        let path = ckpt_path(&a.out, prior);
        if path.exists() {
            let (loaded, _) = load_checkpoint(&path)?;
            let params = match prior {
                Stage::Orientation => &mut models.orientation.params,
                Stage::LutFormer => &mut models.lutformer.params,
                Stage::Reconstruction => unreachable!(),
            };
            restore_into(params, &loaded, &path)?;
        }
    }
    print!("{}", run.render());
    let sched = TrainSchedule {
        steps: a.steps,
        batch_size: run.batch_size,
        seed: a.seed,
        log_every: a.log_every,
    };
    let outcome = train_stage(&mut models, stage, &records, &run, &sched)?;
    for line in &outcome.log {
        println!("{line}");
    }
    std::fs::create_dir_all(&a.out).map_err(|e| UprightError::io(&a.out, e))?;
    let config_echo = run.render();
    let (params, path) = match stage {
        Stage::Orientation => (&models.orientation.params, ckpt_path(&a.out, stage)),
        Stage::LutFormer => (&models.lutformer.params, ckpt_path(&a.out, stage)),
        Stage::Reconstruction => (&models.generator.params, ckpt_path(&a.out, stage)),
    };
    save_checkpoint(params, &config_echo, &path)?;
    if stage == Stage::Reconstruction {
        let dpath = a.out.join("discriminator.uckp");
        save_checkpoint(&models.discriminator.params, &config_echo, &dpath)?;
    }
    println!("final loss {:.6}", outcome.final_loss);
    println!("wrote {}", path.display());
    Ok(())
}

fn load_orientation(ckpt: &Path, run: &RunConfig) -> Result<OrientationNet, CliError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run.seed);
    let mut net = OrientationNet::new(run.orientation, &mut rng)
        .map_err(CliError::Data)?;
    let path = ckpt_path(ckpt, Stage::Orientation);
    let (loaded, _) = load_checkpoint(&path)?;
    restore_into(&mut net.params, &loaded, &path)?;
    Ok(net)
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let run = load_config(a.config.as_ref())?;
    let records = load_split(&a.data.join("test")).or_else(|_| load_split(&a.data))?;
    let net = load_orientation(&a.ckpt, &run)?;
    let mut errors = Vec::with_capacity(records.len());
    let mut psnrs = Vec::new();
    let mut ssims = Vec::new();
    for rec in &records {
        let (pred, _) = net.predict(&rec.nonupright)?;
        errors.push(angle_error(pred, rec.angles));
        let adjusted = rotate_image(
            &rec.nonupright,
            pred,
            LutDirection::InverseUpright,
            Interp::Bilinear,
        )?;
        psnrs.push(psnr(&adjusted, &rec.upright)?);
        ssims.push(ssim(&adjusted, &rec.upright)?);
    }
    let table = accuracy_table(&errors, &DEFAULT_THRESHOLDS)?;
    print!("{}", table.render());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("mean angle error    {:.3} deg", mean(&errors));
    println!("mean psnr           {:.2} dB", mean(&psnrs));
    println!("mean ssim           {:.4}", mean(&ssims));
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let grid = parse_size(&a.size)?;
    if a.frames < 10 {
        return Err(usage("need at least 10 frames"));
    }
    let img = synth_panorama(a.seed, grid, PanoramaStyle::Boxes);
    let angles = TiltAngles::new(14.0, -23.0)?;
    match a.pipeline.as_str() {
        "analytic" => {
            let stats = bench_throughput(a.frames, || {
                let lut = generate_lut(angles, grid, LutDirection::InverseUpright);
                let out = remap(&img, &lut, Interp::Bilinear).unwrap();
                std::hint::black_box(out.get(0, 0, 0));
            });
            print!("{}", stats.render());
        }
        "e2e" => {
            use rand::SeedableRng;
            let run = RunConfig::preset(Preset::Desk);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run.seed);
            let small = EquirectGrid::new(run.orientation.height, run.orientation.width)
                .map_err(CliError::Data)?;
            let frame = synth_panorama(a.seed, small, PanoramaStyle::Boxes);
            let pipe = EndToEnd {
                orientation: OrientationNet::new(run.orientation, &mut rng)?,
                lutformer: LutFormer::new(run.lutformer, &mut rng)?,
                generator: Generator::new(run.reconstructor, &mut rng),
                lut_source: LutSource::Analytic,
                reconstruction: ReconstructionMode::Identity,
            };
            let stats = bench_throughput(a.frames, || {
                let out = pipe.adjust(&frame).unwrap();
                std::hint::black_box(out.upright.get(0, 0, 0));
            });
            print!("{}", stats.render());
        }
        other => return Err(usage(format!("pipeline must be analytic or e2e, got {other}"))),
    }
    Ok(())
}

fn cmd_e2e(a: E2eArgs) -> Result<(), CliError> {
    use rand::SeedableRng;
    let run = load_config(a.config.as_ref())?;
    let img = load_image(&a.input)?;
    let orientation = load_orientation(&a.ckpt, &run)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run.seed);
    let mut lutformer = LutFormer::new(run.lutformer, &mut rng)?;
    let mut generator = Generator::new(run.reconstructor, &mut rng);
    let lut_source = match a.lut.as_str() {
        "analytic" => LutSource::Analytic,
        "learned" => {
            let path = ckpt_path(&a.ckpt, Stage::LutFormer);
            let (loaded, _) = load_checkpoint(&path)?;
            restore_into(&mut lutformer.params, &loaded, &path)?;
            LutSource::Learned
        }
        other => return Err(usage(format!("lut must be analytic or learned, got {other}"))),
    };
    let reconstruction = match a.recon.as_str() {
        "identity" => ReconstructionMode::Identity,
        "learned" => {
            let path = ckpt_path(&a.ckpt, Stage::Reconstruction);
            let (loaded, _) = load_checkpoint(&path)?;
            restore_into(&mut generator.params, &loaded, &path)?;
            ReconstructionMode::Learned
        }
        other => return Err(usage(format!("recon must be identity or learned, got {other}"))),
    };
    let pipe = EndToEnd { orientation, lutformer, generator, lut_source, reconstruction };
    let out = pipe.adjust(&img)?;
    println!(
        "predicted pitch {:.2} roll {:.2}",
        out.angles.pitch(),
        out.angles.roll()
    );
    save_image(&out.upright, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}
