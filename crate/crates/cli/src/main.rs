//! `cll`: train, tune, sweep and inspect continuous-level denoisers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use cll_core::io::{self, Checkpoint, RunReport};
use cll_core::pipeline;
use cll_core::{Error, Level, LevelMap, Mode, Network, NoiseLevel, RunConfig, Tensor};
use log::info;

mod failure;

use failure::Failure;

const EXIT_CODES: &str = "\
EXIT CODES:
   0  success
   1  internal error (dimension mismatch, corrupted tape, incompatible stores)
   2  usage error (bad flag or argument)
   3  invalid configuration (unknown key, unparsable value, out-of-range alpha)
   4  missing or unreadable file
   5  training diverged (NaN or infinite loss)
   6  gradient check failed
   7  unsupported or malformed image
  10  checkpoint: bad magic bytes
  11  checkpoint: unsupported version
  12  checkpoint: truncated payload
  13  checkpoint: parameter dims do not match the stored spec
  14  checkpoint: malformed (duplicate or unexpected entries, trailing bytes)

On failure a single line goes to stderr:
  error code=<n> kind=<kind> message=\"<text>\"

ENVIRONMENT:
  CLL_THREADS  cap on worker threads for sweeps
  RUST_LOG     log filter (default: info)";

#[derive(Parser, Debug)]
#[command(name = "cll", version, about = "Continuous-level denoising with filter transition networks", after_help = EXIT_CODES)]
struct Cli {
    /// `key = value` configuration file; every key has a default.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for initialization and every data stream.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Second-level method: ftn, ftn-gc4, ftn-gc16, ftn-deeper, adafm, finetune.
    #[arg(long, global = true, value_name = "MODE", value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Global blend coefficient.
    #[arg(long, global = true, value_name = "F")]
    alpha: Option<f64>,
    /// One worker thread.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// First level: train the main network at sigma_low.
    Train,
    /// Second level for --mode, starting from the first-level checkpoint.
    Tune,
    /// α × σ PSNR grid and filter similarity for --mode.
    Sweep,
    /// Per-pixel control with a level-map image or a left-to-right ramp.
    PixelDemo,
    /// Instrumented and modeled tuning costs.
    Macs,
    /// Finite-difference check of every operation's gradient.
    Gradcheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Tune => "tune",
            Command::Sweep => "sweep",
            Command::PixelDemo => "pixel-demo",
            Command::Macs => "macs",
            Command::Gradcheck => "gradcheck",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            return Failure::Usage(first.to_string()).report();
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::at(e, p))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(a) = cli.alpha {
        cfg.alpha = a;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = effective_config(cli)?;
    if cli.deterministic {
        cll_core::set_single_threaded(true);
    }
    std::fs::create_dir_all(&cfg.out).map_err(|e| Failure::at(e.into(), &cfg.out))?;
    let started = Instant::now();
    let mut report = RunReport::new(cli.command.name(), &cfg);
    match cli.command {
        Command::Train => train(&cfg, &mut report)?,
        Command::Tune => tune(&cfg, &mut report)?,
        Command::Sweep => sweep(&cfg, &mut report)?,
        Command::PixelDemo => pixel_demo(&cfg, &mut report)?,
        Command::Macs => macs(&cfg, &mut report)?,
        Command::Gradcheck => gradcheck(&cfg, &mut report)?,
    }
    report.timing("total", started.elapsed().as_secs_f64());
    let path = cfg.out.join(format!("{}-report.txt", cli.command.name()));
    report.write(&path).map_err(|e| Failure::at(e, &path))?;
    Ok(())
}

fn write(path: PathBuf, text: &str) -> Result<(), Failure> {
    std::fs::write(&path, text).map_err(|e| Failure::at(e.into(), &path))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn load_network(path: &Path) -> Result<Network<f32>, Failure> {
    let ck = io::load_checkpoint(path).map_err(|e| Failure::at(e, path))?;
    Network::from_checkpoint(&ck).map_err(|e| Failure::at(e, path))
}

fn save_network(net: &Network<f32>, path: &Path) -> Result<(), Failure> {
    io::save_checkpoint(&Checkpoint::from_network(net), path).map_err(|e| Failure::at(e, path))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn train(cfg: &RunConfig, report: &mut RunReport) -> Result<(), Failure> {
    let (net, out) = pipeline::train_first_level(cfg)?;
    save_network(&net, &cfg.phase1_path())?;
    write(cfg.out.join("phase1-loss.csv"), &out.loss_csv())?;
    let high = pipeline::validation_psnr(cfg, &net, cfg.train.sigma_high, 0.0)?;
    report.metric("val_psnr_sigma_low", out.final_val_psnr);
    report.metric("val_psnr_sigma_high", high);
    report.metric("steps", out.steps as f64);
    report.timing("phase1", out.seconds);
    println!(
        "train ok: {} steps, val PSNR {:.3} dB at sigma {:.0}, {high:.3} dB at sigma {:.0}; checkpoint {}",
        out.steps,
        out.final_val_psnr,
        cfg.train.sigma_low.as_8bit(),
        cfg.train.sigma_high.as_8bit(),
        cfg.phase1_path().display()
    );
    report.phases.push(out);
    Ok(())
}

fn tune(cfg: &RunConfig, report: &mut RunReport) -> Result<(), Failure> {
    let p1 = load_network(&cfg.phase1_path())?;
    let (net, out) = pipeline::tune(cfg, &p1, cfg.mode)?;
    let path = cfg.tuned_path(cfg.mode);
    save_network(&net, &path)?;
    write(cfg.out.join(format!("loss-{}.csv", cfg.mode)), &out.loss_csv())?;
    let frozen = net.main_store().digest() == p1.main_store().digest();
    let high = cfg.train.sigma_high;
    let second = if net.has_providers() { 1.0 } else { 0.0 };
    let tuned = pipeline::validation_psnr(cfg, &net, high, second)?;
    let before = pipeline::validation_psnr(cfg, &p1, high, 0.0)?;
    report.metric("val_psnr_sigma_high", tuned);
    report.metric("phase1_val_psnr_sigma_high", before);
    report.metric("main_filters_unchanged", if frozen { 1.0 } else { 0.0 });
    report.timing("phase2", out.seconds);
    println!(
        "tune ok: mode {}, {} steps, val PSNR at sigma {:.0}: {before:.3} -> {tuned:.3} dB, main filters {}; checkpoint {}",
        cfg.mode,
        out.steps,
        high.as_8bit(),
        if frozen { "unchanged" } else { "changed" },
        path.display()
    );
    report.phases.push(out);
    Ok(())
}

fn sweep(cfg: &RunConfig, report: &mut RunReport) -> Result<(), Failure> {
    let p1 = load_network(&cfg.phase1_path())?;
    let tuned = load_network(&cfg.tuned_path(cfg.mode))?;
    let started = Instant::now();
    let grid = if tuned.has_providers() {
        pipeline::sweep_providers(cfg, &tuned)?
    } else {
        pipeline::sweep_dni(cfg, &p1, &tuned)?
    };
    report.timing("sweep", started.elapsed().as_secs_f64());
    let sim = pipeline::level_similarity(&p1, &tuned)?;
    let dir = cfg.out.join(cfg.mode.name());
    std::fs::create_dir_all(&dir).map_err(|e| Failure::at(e.into(), &dir))?;
    write(dir.join("sweep.csv"), &grid.to_csv())?;
    write(dir.join("similarity.csv"), &sim.to_csv())?;
    let mut peaks = Vec::new();
    for (i, s) in grid.sigmas.iter().enumerate() {
        report.metric(format!("argmax_alpha_sigma{s:.0}"), grid.argmax[i]);
        peaks.push(format!("{s:.0}:{:.2}", grid.argmax[i]));
    }
    report.metric("argmax_max_deviation", grid.max_deviation);
    report.metric("argmax_monotone", if grid.argmax_monotone() { 1.0 } else { 0.0 });
    report.metric("cosine_weighted", sim.cosine_weighted);
    report.metric("cosine_unweighted", sim.cosine_unweighted);
    report.metric("mae_weighted", sim.mae_weighted);
    report.metric("mae_unweighted", sim.mae_unweighted);
    println!(
        "sweep ok: mode {}, {}x{} grid, argmax alpha by sigma {}, cosine {:.5}, MAE {:.5}; {}",
        cfg.mode,
        grid.alphas.len(),
        grid.sigmas.len(),
        peaks.join(" "),
        sim.cosine_weighted,
        sim.mae_weighted,
        dir.display()
    );
    Ok(())
}

fn level_map(cfg: &RunConfig, height: usize, width: usize) -> Result<LevelMap<f32>, Failure> {
    match &cfg.level_map {
        Some(p) => {
            let img = io::read_image(p).map_err(|e| Failure::at(e, p))?;
            let d = img.dims();
            if d.c != 1 {
                return Err(Failure::at(
                    Error::Image(cll_core::ImageError::Unsupported(format!(
                        "level map must be grayscale, got {} channels",
                        d.c
                    ))),
                    p,
                ));
            }
            Ok(LevelMap::new(d.h, d.w, img.into_data())?.resampled(height, width))
        }
        None => Ok(LevelMap::ramp(height, width, cfg.ramp_left, cfg.ramp_right)?),
    }
}

fn pixel_demo(cfg: &RunConfig, report: &mut RunReport) -> Result<(), Failure> {
    let path = cfg.tuned_path(cfg.mode);
    let net = load_network(&path)?;
    if !net.has_providers() {
        return Err(Error::Config(format!(
            "pixel-demo needs a provider network; {} holds a plain network",
            path.display()
        ))
        .into());
    }
    let input = match &cfg.demo_input {
        Some(p) => Some(io::read_image(p).map_err(|e| Failure::at(e, p))?),
        None => None,
    };
    let img = cll_core::demo_image(cfg.seed, cfg.network.in_channels, input, cfg.demo_size);
    let sigma = NoiseLevel::from_8bit(cfg.demo_sigma)?;
    let noisy = img.noisy(sigma);
    let d = noisy.dims();
    let map = level_map(cfg, d.h, d.w)?;
    let adaptive = net.forward(&noisy, Level::Map(&map))?;
    let global = net.forward(&noisy, Level::Global(cfg.alpha))?;

    let dir = cfg.out.join("pixel-demo");
    std::fs::create_dir_all(&dir).map_err(|e| Failure::at(e.into(), &dir))?;
    let images: [(&str, &Tensor<f32>); 5] = [
        ("clean.png", img.clean()),
        ("noisy.png", &noisy),
        ("levelmap.png", map.as_tensor()),
        ("adaptive.png", &adaptive),
        ("global.png", &global),
    ];
    for (name, t) in images {
        let p = dir.join(name);
        io::write_image(t, &p).map_err(|e| Failure::at(e, &p))?;
    }
    let clamp = |t: &Tensor<f32>| t.map(|v| v.clamp(0.0, 1.0));
    let psnr = |t: &Tensor<f32>| cll_core::metrics::psnr(&clamp(t), img.clean(), 1.0);
    let (pa, pg, pn) = (psnr(&adaptive)?, psnr(&global)?, psnr(&noisy)?);
    report.metric("psnr_noisy", pn);
    report.metric("psnr_adaptive", pa);
    report.metric(format!("psnr_global_alpha{:.2}", cfg.alpha), pg);
    println!(
        "pixel-demo ok: {}x{} at sigma {:.0}; PSNR noisy {pn:.3}, adaptive {pa:.3}, global alpha {:.2} {pg:.3} dB; {}",
        d.h,
        d.w,
        cfg.demo_sigma,
        cfg.alpha,
        dir.display()
    );
    Ok(())
}

fn macs(cfg: &RunConfig, report: &mut RunReport) -> Result<(), Failure> {
    let m = pipeline::macs_table(cfg)?;
    write(cfg.out.join("macs.csv"), &m.to_csv())?;
    let rows: Vec<String> = m
        .rows
        .iter()
        .filter(|r| !r.component.ends_with("_formula"))
        .map(|r| format!("{} {:.4}%", r.component, r.overhead_pct))
        .collect();
    println!("macs ok: baseline {} MACs at {}x{}; {}", m.baseline, m.height, m.width, rows.join(", "));
    report.macs = Some(m);
    Ok(())
}

fn gradcheck(cfg: &RunConfig, report: &mut RunReport) -> Result<(), Failure> {
    let started = Instant::now();
    let r = cll_core::gradcheck::run_suite(cfg.gradcheck_instances, cfg.gradcheck_epsilon, cfg.seed)?;
    report.timing("gradcheck", started.elapsed().as_secs_f64());
    write(cfg.out.join("gradcheck.csv"), &r.to_csv())?;
    let worst = r.max_rel_error();
    report.metric("max_rel_error", worst);
    for o in &r.ops {
        report.metric(format!("max_rel_error_{}", o.name), o.max_rel_error);
    }
    let ok = r.passed(cfg.gradcheck_tolerance);
    println!(
        "gradcheck {}: worst relative error {worst:.3e} (tolerance {:e}) over {} operations x {} instances",
        if ok { "PASS" } else { "FAIL" },
        cfg.gradcheck_tolerance,
        r.ops.len(),
        cfg.gradcheck_instances
    );
    if ok {
        Ok(())
    } else {
        let worst_op = r
            .ops
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
            .map_or("?", |o| o.name);
        Err(Failure::Gradcheck(format!(
            "worst relative error {worst:.3e} in {worst_op} exceeds {:e}",
            cfg.gradcheck_tolerance
        )))
    }
}
