//! File-based pipeline stages (synthesize, filter, frame, train, evaluate)
//! and the nine-scenario reproduction run that writes the accuracy table.
//! Every stage is deterministic given its seeds, so reruns produce
//! byte-identical artifacts.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::aer::{self, AerError};
use crate::dog::{self, CellType, DogError, DogKernelSpec, EdgeMode};
use crate::events::EventStream;
use crate::framing::{self, Dataset, FramingError, Split};
use crate::scnn::{
    self, evaluate, load_checkpoint, save_checkpoint, train, Geometry, LifParams, ScnnError,
    ScnnParams, TrainConfig, TrainReport,
};
use crate::stimulus::{self, DvsEmulatorConfig, RecordingConfig, StimulusError, NUM_CLASSES};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Aer(#[from] AerError),
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error(transparent)]
    Dog(#[from] DogError),
    #[error(transparent)]
    Scnn(#[from] ScnnError),
    #[error("no recordings matching class{{k}}_rep{{r}}.aer found in {0}")]
    NoRecordings(PathBuf),
    #[error("dataset sidecar rows ({rows}) do not match frame count ({frames})")]
    SidecarMismatch { rows: usize, frames: usize },
}

/// Everything one reproduction run needs; stage commands use subsets.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub classes: usize,
    pub reps: usize,
    pub num_frames: u32,
    pub frame_period_us: u64,
    pub threshold_log: f64,
    pub white_level: f64,
    pub black_level: f64,
    pub noise_rate_hz: f64,
    pub seed: u64,
    /// Re-emission threshold for filtered scenarios as a multiple of each
    /// kernel's peak weight; the four kernels differ in scale, so a relative
    /// value is the only setting that fits all of them.
    pub event_threshold_rel: f64,
    pub train: TrainConfig,
    pub lif: LifParams,
    pub geometry: Geometry,
    pub jobs: usize,
}

impl PipelineConfig {
    pub fn new(out_dir: PathBuf) -> Self {
        Self {
            out_dir,
            classes: NUM_CLASSES,
            reps: 1,
            num_frames: 100,
            frame_period_us: 10_000,
            threshold_log: 0.3,
            white_level: 1.0,
            black_level: 0.1,
            noise_rate_hz: 1.0,
            seed: 0,
            event_threshold_rel: 0.05,
            train: TrainConfig::default(),
            lif: LifParams::default(),
            geometry: Geometry::FULL,
            jobs: 1,
        }
    }

    fn recording_config(&self, class: usize, rep: usize) -> RecordingConfig {
        // Distinct noise stream per (class, rep) recording.
        let mix = (class * 64 + rep) as u64;
        RecordingConfig {
            num_frames: self.num_frames,
            frame_period_us: self.frame_period_us,
            white_level: self.white_level,
            black_level: self.black_level,
            emulator: DvsEmulatorConfig {
                threshold_log: self.threshold_log,
                seed: self.seed.wrapping_add(mix.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                noise_rate_hz: self.noise_rate_hz,
            },
            ..RecordingConfig::default()
        }
    }
}

/// One Table II row to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Unfiltered,
    Filtered { cell: CellType, mode: EdgeMode },
}

impl Scenario {
    /// The nine rows in table order: unfiltered, then the four cell types
    /// without circular shift, then the same four with it.
    pub fn all() -> Vec<Scenario> {
        let mut out = vec![Scenario::Unfiltered];
        for mode in [EdgeMode::ZeroPad, EdgeMode::Circular] {
            for cell in CellType::ALL {
                out.push(Scenario::Filtered { cell, mode });
            }
        }
        out
    }

    pub fn dir_name(&self) -> String {
        match self {
            Scenario::Unfiltered => "unfiltered".to_string(),
            Scenario::Filtered { cell, mode } => format!("{}_{}", cell.as_str(), mode.as_str()),
        }
    }
}

/// One row of report.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub cell_type: String,
    pub circ_shift: String,
    pub accuracy: f64,
}

impl ReportRow {
    fn csv_line(&self) -> String {
        format!("{},{},{},{:.2}\n", self.scenario, self.cell_type, self.circ_shift, self.accuracy)
    }
}

#[derive(Debug, Clone)]
pub struct ReproReport {
    pub rows: Vec<ReportRow>,
    pub report_path: PathBuf,
}

impl ReproReport {
    pub fn accuracy_of(&self, scenario: &Scenario) -> Option<f64> {
        let (want_cell, want_shift) = match scenario {
            Scenario::Unfiltered => ("-".to_string(), "-".to_string()),
            Scenario::Filtered { cell, mode } => {
                (cell.as_str().to_string(), mode.circ_shift_flag().to_string())
            }
        };
        self.rows
            .iter()
            .find(|r| r.cell_type == want_cell && r.circ_shift == want_shift)
            .map(|r| r.accuracy)
    }
}

pub fn recording_file_name(class: usize, rep: usize) -> String {
    format!("class{class}_rep{rep}.aer")
}

fn parse_recording_name(name: &str) -> Option<(u8, usize)> {
    let rest = name.strip_prefix("class")?.strip_suffix(".aer")?;
    let (class, rep) = rest.split_once("_rep")?;
    Some((class.parse().ok()?, rep.parse().ok()?))
}

/// Synthesizes one AER file per (class, repetition) into `dir`; returns
/// (path, event count) per file in deterministic order.
pub fn cmd_synth(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<(PathBuf, u64)>, PipelineError> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for class in 0..cfg.classes.min(NUM_CLASSES) {
        for rep in 0..cfg.reps.max(1) {
            let rec_cfg = cfg.recording_config(class, rep);
            let (stream, _) = stimulus::generate_recording(class, &rec_cfg)?;
            let path = dir.join(recording_file_name(class, rep));
            let mut file = BufWriter::new(File::create(&path)?);
            aer::write_events(&stream, &mut file)?;
            file.flush()?;
            out.push((path, stream.len() as u64));
        }
    }
    Ok(out)
}

/// Applies one receptive-field filter to an AER file; returns (events in,
/// events out).
pub fn cmd_filter(
    input: &Path,
    cell: CellType,
    mode: EdgeMode,
    frame_period_us: u64,
    event_threshold: Option<f64>,
    output: &Path,
) -> Result<(u64, u64), PipelineError> {
    let stream = aer::read_events(BufReader::new(File::open(input)?))?;
    let spec = DogKernelSpec::preset(cell);
    let filtered = dog::filter_stream(&stream, &spec, mode, frame_period_us, event_threshold)?;
    if let Some(parent) = output.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = BufWriter::new(File::create(output)?);
    aer::write_events(&filtered, &mut file)?;
    file.flush()?;
    Ok((stream.len() as u64, filtered.len() as u64))
}

/// Loads every class{k}_rep{r}.aer in a directory, sorted by (class, rep).
pub fn load_recordings(dir: &Path) -> Result<Vec<(EventStream, u8)>, PipelineError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some((class, rep)) = name.to_str().and_then(parse_recording_name) {
            found.push((class, rep, entry.path()));
        }
    }
    if found.is_empty() {
        return Err(PipelineError::NoRecordings(dir.to_path_buf()));
    }
    found.sort();
    let mut out = Vec::new();
    for (class, _, path) in found {
        let stream = aer::read_events(BufReader::new(File::open(path)?))?;
        out.push((stream, class));
    }
    Ok(out)
}

/// Builds the labeled dataset from a directory of AER recordings and writes
/// frames.frm1 plus the dataset.csv sidecar.
pub fn cmd_frames(
    input_dir: &Path,
    out_dir: &Path,
    frame_period_us: u64,
    seed: u64,
) -> Result<Dataset, PipelineError> {
    let recordings = load_recordings(input_dir)?;
    let dataset = framing::build_dataset(&recordings, frame_period_us, seed)?;
    fs::create_dir_all(out_dir)?;
    let mut frames_file = BufWriter::new(File::create(out_dir.join("frames.frm1"))?);
    aer::write_frames(&dataset.frames, &mut frames_file)?;
    frames_file.flush()?;
    let mut sidecar = BufWriter::new(File::create(out_dir.join("dataset.csv"))?);
    framing::write_split_csv(&dataset, &mut sidecar)?;
    sidecar.flush()?;
    Ok(dataset)
}

/// Reads frames.frm1 + dataset.csv back into a Dataset.
pub fn load_dataset(dir: &Path) -> Result<Dataset, PipelineError> {
    let frames = aer::read_frames(BufReader::new(File::open(dir.join("frames.frm1"))?))?;
    let (labels, split) =
        framing::read_split_csv(BufReader::new(File::open(dir.join("dataset.csv"))?))?;
    if labels.len() != frames.count {
        return Err(PipelineError::SidecarMismatch { rows: labels.len(), frames: frames.count });
    }
    Ok(Dataset { frames, labels, split, seed: 0 })
}

/// Trains on the dataset in `data_dir` and writes an SCN1 checkpoint.
pub fn cmd_train(
    data_dir: &Path,
    model_path: &Path,
    train_cfg: &TrainConfig,
    lif: &LifParams,
    geometry: Geometry,
) -> Result<TrainReport, PipelineError> {
    let dataset = load_dataset(data_dir)?;
    let (params, report) = train(&dataset, train_cfg, lif, geometry)?;
    if let Some(parent) = model_path.parent() {
        fs::create_dir_all(parent)?;
    }
    save_checkpoint(&params, model_path)?;
    Ok(report)
}

/// Spiking evaluation of a checkpoint on the test split; writes report.csv
/// (one row) and confusion.csv into `out_dir`.
pub fn cmd_eval(
    model_path: &Path,
    data_dir: &Path,
    out_dir: &Path,
    row_meta: (&str, &str, &str),
    lif: &LifParams,
) -> Result<(ReportRow, [[u32; NUM_CLASSES]; NUM_CLASSES]), PipelineError> {
    let params = load_checkpoint(model_path)?;
    let dataset = load_dataset(data_dir)?;
    let (accuracy, confusion) = evaluate(&params, lif, &dataset, Split::Test)?;
    let row = ReportRow {
        scenario: row_meta.0.to_string(),
        cell_type: row_meta.1.to_string(),
        circ_shift: row_meta.2.to_string(),
        accuracy,
    };
    fs::create_dir_all(out_dir)?;
    let mut report = BufWriter::new(File::create(out_dir.join("report.csv"))?);
    report.write_all(b"scenario,cell_type,circ_shift,accuracy\n")?;
    report.write_all(row.csv_line().as_bytes())?;
    report.flush()?;
    write_confusion_csv(&confusion, &out_dir.join("confusion.csv"))?;
    Ok((row, confusion))
}

pub fn write_confusion_csv(
    confusion: &[[u32; NUM_CLASSES]; NUM_CLASSES],
    path: &Path,
) -> Result<(), PipelineError> {
    let mut file = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..NUM_CLASSES).map(|k| format!("pred_{k}")).collect();
    writeln!(file, "true_class,{}", header.join(","))?;
    for (class, row) in confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        writeln!(file, "{class},{}", cells.join(","))?;
    }
    file.flush()?;
    Ok(())
}

fn run_scenario(cfg: &PipelineConfig, scenario: Scenario) -> Result<ReportRow, PipelineError> {
    let raw_dir = cfg.out_dir.join("aer");
    let scen_dir = cfg.out_dir.join(scenario.dir_name());
    fs::create_dir_all(&scen_dir)?;

    let data_source = match scenario {
        Scenario::Unfiltered => raw_dir.clone(),
        Scenario::Filtered { cell, mode } => {
            let kernel = dog::make_dog_kernel(&DogKernelSpec::preset(cell))?;
            let threshold = cfg.event_threshold_rel * kernel.max_abs_weight();
            let filtered_dir = scen_dir.join("aer");
            for class in 0..cfg.classes.min(NUM_CLASSES) {
                for rep in 0..cfg.reps.max(1) {
                    let name = recording_file_name(class, rep);
                    cmd_filter(
                        &raw_dir.join(&name),
                        cell,
                        mode,
                        cfg.frame_period_us,
                        Some(threshold),
                        &filtered_dir.join(&name),
                    )?;
                }
            }
            filtered_dir
        }
    };

    cmd_frames(&data_source, &scen_dir, cfg.frame_period_us, cfg.seed)?;
    let model_path = scen_dir.join("model.scn1");
    cmd_train(&scen_dir, &model_path, &cfg.train, &cfg.lif, cfg.geometry)?;
    let meta = match scenario {
        Scenario::Unfiltered => ("unfiltered".to_string(), "-".to_string(), "-".to_string()),
        Scenario::Filtered { cell, mode } => (
            "filtered".to_string(),
            cell.as_str().to_string(),
            mode.circ_shift_flag().to_string(),
        ),
    };
    let (row, _) = cmd_eval(
        &model_path,
        &scen_dir,
        &scen_dir,
        (&meta.0, &meta.1, &meta.2),
        &cfg.lif,
    )?;
    Ok(row)
}

/// Runs all nine scenarios (synthesize once, then per scenario: filter,
/// frame, train, evaluate) and writes the combined report.csv. Scenarios run
/// on up to `cfg.jobs` threads; outputs are independent of scheduling.
pub fn run_repro(cfg: &PipelineConfig) -> Result<ReproReport, PipelineError> {
    fs::create_dir_all(&cfg.out_dir)?;
    cmd_synth(cfg, &cfg.out_dir.join("aer"))?;

    let scenarios = Scenario::all();
    let results: Mutex<Vec<Option<Result<ReportRow, PipelineError>>>> =
        Mutex::new((0..scenarios.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = cfg.jobs.clamp(1, scenarios.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= scenarios.len() {
                    break;
                }
                let outcome = run_scenario(cfg, scenarios[index]);
                results.lock().unwrap()[index] = Some(outcome);
            });
        }
    });

    let mut rows = Vec::with_capacity(scenarios.len());
    for slot in results.into_inner().unwrap() {
        rows.push(slot.expect("every scenario claimed by a worker")?);
    }

    let report_path = cfg.out_dir.join("report.csv");
    let mut report = BufWriter::new(File::create(&report_path)?);
    report.write_all(b"scenario,cell_type,circ_shift,accuracy\n")?;
    for row in &rows {
        report.write_all(row.csv_line().as_bytes())?;
    }
    report.flush()?;
    Ok(ReproReport { rows, report_path })
}

/// Accuracy of a freshly initialized (untrained) model on the test split of
/// the dataset in `data_dir`; the chance-level control.
pub fn untrained_accuracy(
    data_dir: &Path,
    geometry: Geometry,
    seed: u64,
    lif: &LifParams,
) -> Result<f64, PipelineError> {
    let dataset = load_dataset(data_dir)?;
    let params = ScnnParams::init(geometry, seed);
    let (accuracy, _) = scnn::evaluate(&params, lif, &dataset, Split::Test)?;
    Ok(accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recording_names_parse_back() {
        assert_eq!(parse_recording_name("class3_rep12.aer"), Some((3, 12)));
        assert_eq!(parse_recording_name("class3_rep12.csv"), None);
        assert_eq!(parse_recording_name("klass3_rep12.aer"), None);
        assert_eq!(recording_file_name(6, 0), "class6_rep0.aer");
    }

    #[test]
    fn scenario_table_order() {
        let all = Scenario::all();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], Scenario::Unfiltered);
        assert_eq!(all[1].dir_name(), "off_midget_zero");
        assert_eq!(all[5].dir_name(), "off_midget_circular");
        assert_eq!(all[8].dir_name(), "on_parasol_circular");
    }

    #[test]
    fn report_row_formatting() {
        let row = ReportRow {
            scenario: "filtered".into(),
            cell_type: "off_parasol".into(),
            circ_shift: "1".into(),
            accuracy: 92.857142,
        };
        assert_eq!(row.csv_line(), "filtered,off_parasol,1,92.86\n");
    }
}
