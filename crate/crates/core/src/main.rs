use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, ValueEnum};
use nalgebra::Vector3;

use atomchip::inverse::MaskOrder;
use atomchip::runner::{parse_channel_list, parse_float_list, run, LayoutSource, RunConfig};
use atomchip::schedule::ScheduleKind;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolveUnit {
    M,
    Mm,
    Um,
}

impl SolveUnit {
    fn metres(self) -> f64 {
        match self {
            SolveUnit::M => 1.0,
            SolveUnit::Mm => 1e-3,
            SolveUnit::Um => 1e-6,
        }
    }
}

/// Transport a magnetic microtrap along an atom chip by inverse optimization
/// of the wire currents, and write the schedule and trap metrics as CSV.
#[derive(Debug, Parser)]
#[command(name = "atomchip", version)]
#[command(group(ArgGroup::new("source").required(true).args(["layout", "builtin_reference"])))]
struct Args {
    /// Chip layout JSON file.
    #[arg(long, value_name = "PATH")]
    layout: Option<PathBuf>,
    /// Use the built-in reference layout.
    #[arg(long)]
    builtin_reference: bool,
    /// Transport distance along x, mm.
    #[arg(long, value_name = "MM", default_value_t = 2.4)]
    distance: f64,
    /// Number of transport steps.
    #[arg(long, value_name = "N", default_value_t = 2500)]
    steps: usize,
    #[arg(long, value_name = "KIND", default_value = "smoothstep")]
    schedule: ScheduleKind,
    /// Transport durations for the adiabaticity report, s.
    #[arg(long, value_name = "LIST", default_value = "2,3,4,5")]
    durations: String,
    /// Base Tikhonov weight.
    #[arg(long, default_value_t = 1e-2)]
    lambda: f64,
    /// Smallest forward step that is still taken, mm.
    #[arg(long, value_name = "MM", default_value_t = 1e-6)]
    threshold_mm: f64,
    /// Channels the solver may change, e.g. `0-5` or `0,2,4`.
    #[arg(long, value_name = "LIST", default_value = "0-5")]
    optimize_channels: String,
    /// Initial currents, one per channel, A (default: the reference currents).
    #[arg(long, value_name = "LIST")]
    initial_currents: Option<String>,
    /// Starting guess for the initial trap minimum, mm.
    #[arg(long, value_name = "X,Y,Z", default_value = "0,0,0.33")]
    guess_mm: String,
    /// Override the shifting-wire current limit, A.
    #[arg(long, value_name = "A")]
    clip_shifting: Option<f64>,
    /// Override the guiding-wire current limit, A.
    #[arg(long, value_name = "A")]
    clip_guiding: Option<f64>,
    /// Length unit of the regularized least-squares solve.
    #[arg(long, value_enum, default_value = "um")]
    solve_unit: SolveUnit,
    /// Solve over all channels and mask afterwards instead of dropping fixed
    /// channels before the solve.
    #[arg(long)]
    mask_after_solve: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn config(args: Args) -> atomchip::Result<RunConfig> {
    let guess = parse_float_list(&args.guess_mm, "guess-mm")?;
    if guess.len() != 3 {
        return Err(atomchip::Error::Config {
            field: "guess-mm",
            message: format!("expected three coordinates, got {}", guess.len()),
        });
    }
    Ok(RunConfig {
        layout: match args.layout {
            Some(path) => LayoutSource::File(path),
            None => LayoutSource::Builtin,
        },
        initial_currents: args
            .initial_currents
            .as_deref()
            .map(|s| parse_float_list(s, "initial-currents"))
            .transpose()?,
        guess: Vector3::new(guess[0], guess[1], guess[2]) * 1e-3,
        distance: args.distance * 1e-3,
        steps: args.steps,
        schedule: args.schedule,
        durations: parse_float_list(&args.durations, "durations")?,
        lambda: args.lambda,
        threshold: args.threshold_mm * 1e-3,
        optimize_channels: parse_channel_list(&args.optimize_channels)?,
        clip_shifting: args.clip_shifting,
        clip_guiding: args.clip_guiding,
        solve_unit: args.solve_unit.metres(),
        mask_order: if args.mask_after_solve {
            MaskOrder::SolveThenMask
        } else {
            MaskOrder::ReduceThenSolve
        },
        out_dir: args.out,
        seed: args.seed,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let outcome = config(args).and_then(|c| run(&c).map(|o| (c, o)));
    match outcome {
        Ok((config, outcome)) => {
            let r = &outcome.report;
            println!("wrote {} files to {}", outcome.manifest.files.len() + 1, config.out_dir.display());
            println!(
                "final tracking error (um): {:.3?}",
                r.final_tracking_error.map(|e| e * 1e6)
            );
            println!("frequency drift (%): {:.2?}", r.drift_omega.map(|d| d * 100.0));
            for s in &r.adiabaticity {
                println!("T = {} s: peak epsilon {:.3}", s.duration, s.peak);
            }
            println!("wall time: {:.1} s", outcome.wall_seconds);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
