//! Pipeline driver: synthesize DVS recordings, filter them through the
//! ganglion-cell kernels, build frame datasets, train and evaluate the
//! spiking classifier, and emit raster plots. `repro` chains all stages for
//! the full nine-scenario accuracy table.

mod raster;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fovea_core::dog::{self, CellType, DogKernelSpec, EdgeMode};
use fovea_core::framing::Split;
use fovea_core::pipeline::{self, PipelineConfig};
use fovea_core::scnn::{Geometry, LifParams, TrainConfig};
use fovea_core::{aer, events};

#[derive(Parser)]
#[command(name = "fovea", version, about = "DVS moving-bar pipeline with foveal-pit DoG filtering and a spiking CNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CellTypeArg {
    #[value(name = "off-midget")]
    OffMidget,
    #[value(name = "on-midget")]
    OnMidget,
    #[value(name = "off-parasol")]
    OffParasol,
    #[value(name = "on-parasol")]
    OnParasol,
}

impl From<CellTypeArg> for CellType {
    fn from(v: CellTypeArg) -> Self {
        match v {
            CellTypeArg::OffMidget => CellType::OffMidget,
            CellTypeArg::OnMidget => CellType::OnMidget,
            CellTypeArg::OffParasol => CellType::OffParasol,
            CellTypeArg::OnParasol => CellType::OnParasol,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EdgeModeArg {
    Zero,
    Circular,
}

impl From<EdgeModeArg> for EdgeMode {
    fn from(v: EdgeModeArg) -> Self {
        match v {
            EdgeModeArg::Zero => EdgeMode::ZeroPad,
            EdgeModeArg::Circular => EdgeMode::Circular,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometryArg {
    Full,
    Reduced,
}

impl From<GeometryArg> for Geometry {
    fn from(v: GeometryArg) -> Self {
        match v {
            GeometryArg::Full => Geometry::FULL,
            GeometryArg::Reduced => Geometry::REDUCED,
        }
    }
}

#[derive(Args, Clone)]
struct StimulusArgs {
    /// Number of stimulus classes to synthesize (bar counts 2, 4, ... 2^k).
    #[arg(long, default_value_t = 7)]
    classes: usize,
    /// Recordings per class.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Frames per recording.
    #[arg(long, default_value_t = 100)]
    frames: u32,
    /// Microseconds per stimulus frame.
    #[arg(long = "frame-period-us", default_value_t = 10_000)]
    frame_period_us: u64,
    /// DVS contrast threshold on |delta log luminance|.
    #[arg(long = "threshold-log", default_value_t = 0.3)]
    threshold_log: f64,
    /// Luminance of white bars (relative units).
    #[arg(long = "white-level", default_value_t = 1.0)]
    white_level: f64,
    /// Luminance of black bars; must stay above zero for log intensity.
    #[arg(long = "black-level", default_value_t = 0.1)]
    black_level: f64,
    /// Background noise in events per pixel per second. The 128-bar class is
    /// static under the 2 px frame shift, so it only produces frames when
    /// this is nonzero.
    #[arg(long = "noise-rate", default_value_t = 1.0)]
    noise_rate: f64,
}

#[derive(Args, Clone)]
struct LifArgs {
    /// Membrane time constant, seconds.
    #[arg(long = "tau-rc", default_value_t = 0.020)]
    tau_rc: f64,
    /// Refractory period, seconds.
    #[arg(long = "tau-ref", default_value_t = 0.002)]
    tau_ref: f64,
    /// Firing threshold.
    #[arg(long = "v-th", default_value_t = 1.0)]
    v_th: f64,
    /// Soft-threshold smoothing width at the start of training.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Simulation step, seconds.
    #[arg(long, default_value_t = 0.001)]
    dt: f64,
    /// Spike output scale.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
}

impl From<LifArgs> for LifParams {
    fn from(a: LifArgs) -> Self {
        LifParams {
            tau_rc: a.tau_rc,
            tau_ref: a.tau_ref,
            v_th: a.v_th,
            gamma: a.gamma,
            dt: a.dt,
            amplitude: a.amplitude,
        }
    }
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long = "batch-size", default_value_t = 20)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smoothing width reached by the end of training.
    #[arg(long = "gamma-final", default_value_t = 0.1)]
    gamma_final: f64,
    #[arg(long, value_enum, default_value_t = GeometryArg::Full)]
    geometry: GeometryArg,
}

impl TrainArgs {
    fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed: self.seed,
            gamma_final: self.gamma_final,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emulate DVS recordings of the moving-bar stimuli, one AER file per
    /// (class, repetition).
    Synth {
        #[command(flatten)]
        stimulus: StimulusArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for class{k}_rep{r}.aer files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter an AER recording through one ganglion-cell kernel.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "cell-type", value_enum)]
        cell_type: CellTypeArg,
        #[arg(long = "edge-mode", value_enum, default_value_t = EdgeModeArg::Circular)]
        edge_mode: EdgeModeArg,
        #[arg(long = "frame-period-us", default_value_t = 10_000)]
        frame_period_us: u64,
        /// Re-emission threshold on |filtered response|; defaults to 5% of
        /// the kernel's peak impulse response.
        #[arg(long = "event-threshold")]
        event_threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accumulate AER recordings into a labeled, split frame dataset
    /// (frames.frm1 + dataset.csv).
    Frames {
        /// Directory containing class{k}_rep{r}.aer files.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "frame-period-us", default_value_t = 10_000)]
        frame_period_us: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the spiking CNN's rate approximation; writes an SCN1 checkpoint.
    Train {
        /// Directory holding frames.frm1 + dataset.csv.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        lif: LifArgs,
        /// Checkpoint path to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint with spiking dynamics on the test split; writes
    /// report.csv and confusion.csv.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Scenario label for the report row.
        #[arg(long, default_value = "unfiltered")]
        scenario: String,
        /// Cell type for the report row; "-" when unfiltered.
        #[arg(long = "cell-type")]
        cell_type: Option<CellTypeArg>,
        #[arg(long = "edge-mode", value_enum)]
        edge_mode: Option<EdgeModeArg>,
        #[command(flatten)]
        lif: LifArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export an event stream as raster CSV and (optionally) an SVG scatter.
    Raster {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out-csv")]
        out_csv: PathBuf,
        #[arg(long = "out-svg")]
        out_svg: Option<PathBuf>,
        /// Cap on SVG markers; streams beyond it are thinned evenly. 0 keeps
        /// every event.
        #[arg(long = "max-points", default_value_t = 20_000)]
        max_points: usize,
    },
    /// Export one DoG kernel as CSV.
    Kernel {
        #[arg(long = "cell-type", value_enum)]
        cell_type: CellTypeArg,
        #[arg(long = "surround-ratio", default_value_t = dog::DEFAULT_SURROUND_RATIO)]
        surround_ratio: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all nine Table-style scenarios end to end and write the combined
    /// report.csv.
    Repro {
        #[command(flatten)]
        stimulus: StimulusArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        lif: LifArgs,
        /// Filtered-scenario re-emission threshold as a multiple of each
        /// kernel's peak weight.
        #[arg(long = "event-threshold-rel", default_value_t = 0.05)]
        event_threshold_rel: f64,
        /// Worker threads across scenarios.
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn pipeline_config(
    stimulus: &StimulusArgs,
    train: &TrainArgs,
    lif: &LifArgs,
    event_threshold_rel: f64,
    jobs: usize,
    out: PathBuf,
) -> PipelineConfig {
    PipelineConfig {
        out_dir: out,
        classes: stimulus.classes,
        reps: stimulus.reps,
        num_frames: stimulus.frames,
        frame_period_us: stimulus.frame_period_us,
        threshold_log: stimulus.threshold_log,
        white_level: stimulus.white_level,
        black_level: stimulus.black_level,
        noise_rate_hz: stimulus.noise_rate,
        seed: train.seed,
        event_threshold_rel,
        train: train.to_config(),
        lif: lif.clone().into(),
        geometry: train.geometry.into(),
        jobs,
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth { stimulus, seed, out } => {
            let train = TrainArgs {
                epochs: 0,
                batch_size: 1,
                lr: 0.0,
                seed,
                gamma_final: 0.1,
                geometry: GeometryArg::Full,
            };
            let cfg = pipeline_config(&stimulus, &train, &LifArgs::default_args(), 0.05, 1, out.clone());
            let files = pipeline::cmd_synth(&cfg, &out)?;
            for (path, count) in &files {
                println!("{}: {} events", path.display(), count);
            }
            println!("wrote {} recordings to {}", files.len(), out.display());
        }
        Command::Filter { input, cell_type, edge_mode, frame_period_us, event_threshold, out } => {
            let (events_in, events_out) = pipeline::cmd_filter(
                &input,
                cell_type.into(),
                edge_mode.into(),
                frame_period_us,
                event_threshold,
                &out,
            )?;
            println!(
                "{} -> {}: {} events in, {} events out",
                input.display(),
                out.display(),
                events_in,
                events_out
            );
        }
        Command::Frames { input, frame_period_us, seed, out } => {
            let dataset = pipeline::cmd_frames(&input, &out, frame_period_us, seed)?;
            let train_count = dataset.indices_of(Split::Train).len();
            let test_count = dataset.indices_of(Split::Test).len();
            println!(
                "{} frames ({} train, {} test) -> {}",
                dataset.frames.count,
                train_count,
                test_count,
                out.display()
            );
        }
        Command::Train { data, train, lif, out } => {
            let report = pipeline::cmd_train(
                &data,
                &out,
                &train.to_config(),
                &lif.clone().into(),
                train.geometry.into(),
            )?;
            println!("initial loss {:.4}", report.initial_loss);
            for (epoch, loss) in report.epoch_losses.iter().enumerate() {
                println!(
                    "epoch {}: loss {:.4} (gamma {:.3})",
                    epoch + 1,
                    loss,
                    report.gamma_schedule[epoch]
                );
            }
            println!("checkpoint -> {}", out.display());
        }
        Command::Eval { model, data, scenario, cell_type, edge_mode, lif, out } => {
            let cell = cell_type.map(|c| CellType::from(c).as_str().to_string());
            let shift = edge_mode.map(|m| EdgeMode::from(m).circ_shift_flag().to_string());
            let (row, confusion) = pipeline::cmd_eval(
                &model,
                &data,
                &out,
                (
                    &scenario,
                    cell.as_deref().unwrap_or("-"),
                    shift.as_deref().unwrap_or("-"),
                ),
                &lif.into(),
            )?;
            println!("accuracy {:.2}% -> {}", row.accuracy, out.join("report.csv").display());
            let diagonal: u32 = (0..7).map(|k| confusion[k][k]).sum();
            let total: u32 = confusion.iter().flatten().sum();
            println!("confusion diagonal {diagonal}/{total} -> {}", out.join("confusion.csv").display());
        }
        Command::Raster { input, out_csv, out_svg, max_points } => {
            let stream = aer::read_events(BufReader::new(File::open(&input)?))?;
            let violations = events::validate(&stream);
            if !violations.is_empty() {
                bail!("input stream failed validation: {} problems", violations.len());
            }
            let mut csv = BufWriter::new(File::create(&out_csv)?);
            let rows = aer::export_csv(&stream, &mut csv)?;
            csv.flush()?;
            println!("{rows} rows -> {}", out_csv.display());
            if let Some(svg_path) = out_svg {
                let mut svg = BufWriter::new(File::create(&svg_path)?);
                let drawn = raster::write_svg(&stream, &mut svg, max_points)?;
                svg.flush()?;
                println!("{drawn} markers -> {}", svg_path.display());
            }
        }
        Command::Kernel { cell_type, surround_ratio, out } => {
            let mut spec = DogKernelSpec::preset(cell_type.into());
            spec.surround_ratio = surround_ratio;
            let kernel = dog::make_dog_kernel(&spec).context("kernel construction")?;
            let mut file = BufWriter::new(File::create(&out)?);
            dog::export_kernel_csv(&kernel, &mut file)?;
            file.flush()?;
            println!("{}x{} {} kernel -> {}", kernel.dim, kernel.dim, spec.cell_type, out.display());
        }
        Command::Repro { stimulus, train, lif, event_threshold_rel, jobs, out } => {
            let cfg = pipeline_config(&stimulus, &train, &lif, event_threshold_rel, jobs, out);
            let report = pipeline::run_repro(&cfg)?;
            println!("scenario,cell_type,circ_shift,accuracy");
            for row in &report.rows {
                println!("{},{},{},{:.2}", row.scenario, row.cell_type, row.circ_shift, row.accuracy);
            }
            println!("report -> {}", report.report_path.display());
        }
    }
    Ok(())
}

impl LifArgs {
    fn default_args() -> Self {
        Self { tau_rc: 0.020, tau_ref: 0.002, v_th: 1.0, gamma: 1.0, dt: 0.001, amplitude: 1.0 }
    }
}
