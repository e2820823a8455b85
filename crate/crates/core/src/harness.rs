//! Experiment drivers behind the `qfl` binary.
//!
//! Every command appends line-delimited JSON [`MetricsRow`]s to a metrics
//! sink: one `round` row per evaluation and `summary` rows with final
//! numbers. Rows carry the experiment id, the seed, and the sweep variables
//! that identify the run.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{
    generate_federated_dataset, read_dataset, write_dataset, FederatedDataset, GenConfig,
};
use crate::error::{QflError, Result};
use crate::fed::{run_training, OptimizerConfig, RoundRecord, Split, TrainConfig};
use crate::qcnn::{ArchitectureSpec, GradientMethod, INIT_SCALE};
use crate::seed::derive_seed;

/// `(train, test)` client counts swept by [`cmd_sweep_clients`]. The single
/// entry with one training client is the centralized baseline.
pub const CLIENT_SWEEP: [(usize, usize); 6] = [(1, 5), (4, 2), (9, 3), (14, 4), (19, 5), (25, 5)];

pub const DEFAULT_DATA_SIZES: [usize; 4] = [40, 80, 120, 160];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub experiment: String,
    pub seed: u64,
    #[serde(default)]
    pub vars: BTreeMap<String, Value>,
    pub round: usize,
    pub test_accuracy: f64,
    pub test_mse: f64,
    pub server_params_checksum: String,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub seed: Option<u64>,
    #[serde(default)]
    pub vars: BTreeMap<String, Value>,
    pub metrics: BTreeMap<String, f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "row", rename_all = "snake_case")]
pub enum MetricsRow {
    Round(RoundRow),
    Summary(SummaryRow),
}

impl MetricsRow {
    pub fn experiment(&self) -> &str {
        match self {
            MetricsRow::Round(r) => &r.experiment,
            MetricsRow::Summary(s) => &s.experiment,
        }
    }

    pub fn as_summary(&self) -> Option<&SummaryRow> {
        match self {
            MetricsRow::Summary(s) => Some(s),
            MetricsRow::Round(_) => None,
        }
    }

    pub fn as_round(&self) -> Option<&RoundRow> {
        match self {
            MetricsRow::Round(r) => Some(r),
            MetricsRow::Summary(_) => None,
        }
    }
}

/// Append-only row sink. Rows are kept in memory and, when a writer is
/// attached, written out as they arrive.
#[derive(Default)]
pub struct MetricsSink {
    writer: Option<Box<dyn Write>>,
    rows: Vec<MetricsRow>,
    echo: bool,
}

impl MetricsSink {
    pub fn memory() -> Self {
        MetricsSink::default()
    }

    pub fn append_to(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(MetricsSink {
            writer: Some(Box::new(file)),
            ..MetricsSink::default()
        })
    }

    pub fn stdout() -> Self {
        MetricsSink {
            writer: Some(Box::new(std::io::stdout())),
            ..MetricsSink::default()
        }
    }

    /// Also print a short human-readable line per row on stderr.
    pub fn with_echo(mut self, echo: bool) -> Self {
        self.echo = echo;
        self
    }

    pub fn push(&mut self, row: MetricsRow) -> Result<()> {
        if let Some(f) = &mut self.writer {
            let mut line = serde_json::to_string(&row)
                .map_err(|e| QflError::Internal(format!("metrics encoding: {e}")))?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        if self.echo {
            eprintln!("{}", describe(&row));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }
}

fn describe(row: &MetricsRow) -> String {
    let vars = |v: &BTreeMap<String, Value>| {
        v.iter()
            .map(|(k, v)| format!(" {k}={v}"))
            .collect::<String>()
    };
    match row {
        MetricsRow::Round(r) => format!(
            "[{}{}] round {:>3}  acc {:.4}  mse {:.5}",
            r.experiment,
            vars(&r.vars),
            r.round,
            r.test_accuracy,
            r.test_mse
        ),
        MetricsRow::Summary(s) => {
            let m: String = s.metrics.iter().map(|(k, v)| format!("  {k} {v:.5}")).collect();
            format!("[{}{}] summary{m}", s.experiment, vars(&s.vars))
        }
    }
}

/// Parses a metrics file; every nonblank line must be a valid row.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| QflError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Where a command gets its dataset from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    File(PathBuf),
    Generate { gen: GenConfig, non_iid_fraction: f64 },
}

impl DatasetSource {
    pub fn load(&self) -> Result<FederatedDataset> {
        match self {
            DatasetSource::File(p) => read_dataset(p),
            DatasetSource::Generate {
                gen,
                non_iid_fraction,
            } => generate_federated_dataset(gen, *non_iid_fraction),
        }
    }
}

/// Training knobs shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub optimizer: OptimizerConfig,
    pub rounds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub gradient: GradientMethod,
    pub init_scale: f64,
    pub stages: Option<usize>,
    pub fully_connected: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            optimizer: OptimizerConfig::adam(0.02),
            rounds: 30,
            epochs: 1,
            batch_size: 16,
            gradient: GradientMethod::Adjoint,
            init_scale: INIT_SCALE,
            stages: None,
            fully_connected: false,
        }
    }
}

impl RunSettings {
    pub fn train_config(&self, split: Split, seed: u64, n_qubits: usize) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::new(split, self.optimizer)?;
        cfg.rounds = self.rounds;
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.gradient = self.gradient;
        cfg.init_scale = self.init_scale;
        cfg.seed = seed;
        cfg.architecture = match self.stages {
            None if !self.fully_connected => ArchitectureSpec::default_for(n_qubits)?,
            stages => ArchitectureSpec::with_stages(
                n_qubits,
                stages.unwrap_or(n_qubits.trailing_zeros() as usize),
                self.fully_connected,
            )?,
        };
        Ok(cfg)
    }

    fn vars(&self) -> BTreeMap<String, Value> {
        let mut v = BTreeMap::new();
        v.insert("optimizer".into(), self.optimizer.kind.name().into());
        v.insert("lr".into(), self.optimizer.learning_rate.into());
        v
    }
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn round_rows(
    sink: &mut MetricsSink,
    experiment: &str,
    seed: u64,
    vars: &BTreeMap<String, Value>,
    records: &[RoundRecord],
    start: Instant,
) -> Result<()> {
    let wall = elapsed(start);
    for r in records {
        sink.push(MetricsRow::Round(RoundRow {
            experiment: experiment.to_string(),
            seed,
            vars: vars.clone(),
            round: r.round,
            test_accuracy: r.test_accuracy,
            test_mse: r.test_mse,
            server_params_checksum: r.server_params_checksum.clone(),
            wall_time: wall,
        }))?;
    }
    Ok(())
}

/// Final test metrics of a run, plus train metrics when they were computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub test_accuracy: f64,
    pub test_mse: f64,
    pub train_accuracy: Option<f64>,
    pub train_mse: Option<f64>,
}

impl RunOutcome {
    fn from_records(records: &[RoundRecord]) -> Result<Self> {
        let last = records
            .last()
            .ok_or_else(|| QflError::Internal("training produced no records".into()))?;
        Ok(RunOutcome {
            test_accuracy: last.test_accuracy,
            test_mse: last.test_mse,
            train_accuracy: last.train_accuracy,
            train_mse: last.train_mse,
        })
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("test_accuracy".into(), self.test_accuracy);
        m.insert("test_mse".into(), self.test_mse);
        m.insert("test_mse_x100".into(), 100.0 * self.test_mse);
        if let Some(a) = self.train_accuracy {
            m.insert("train_accuracy".into(), a);
        }
        if let Some(e) = self.train_mse {
            m.insert("train_mse".into(), e);
        }
        m
    }
}

/// One training run, logged as round rows and a summary row.
#[allow(clippy::too_many_arguments)]
fn logged_run(
    sink: &mut MetricsSink,
    experiment: &str,
    dataset: &FederatedDataset,
    split: Split,
    settings: &RunSettings,
    seed: u64,
    eval_train: bool,
    mut vars: BTreeMap<String, Value>,
) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut cfg = settings.train_config(split, seed, dataset.gen_config.n_qubits)?;
    cfg.eval_train = eval_train;
    vars.extend(settings.vars());
    vars.insert("train_clients".into(), cfg.split.train.len().into());
    vars.insert("test_clients".into(), cfg.split.test.len().into());
    let records = run_training(dataset, &cfg)?;
    round_rows(sink, experiment, seed, &vars, &records, start)?;
    let outcome = RunOutcome::from_records(&records)?;
    sink.push(MetricsRow::Summary(SummaryRow {
        experiment: experiment.to_string(),
        seed: Some(seed),
        vars,
        metrics: outcome.metrics(),
        wall_time: elapsed(start),
    }))?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub checksum: u64,
    pub clients: usize,
    pub samples: usize,
    pub excited: usize,
}

/// Generates a dataset and writes it to `out`.
pub fn cmd_gen_data(gen: &GenConfig, non_iid_fraction: f64, out: &Path) -> Result<GenSummary> {
    let ds = generate_federated_dataset(gen, non_iid_fraction)?;
    let checksum = write_dataset(&ds, out)?;
    Ok(GenSummary {
        checksum,
        clients: ds.clients.len(),
        samples: ds.total_samples(),
        excited: ds.excited_count(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainCommand {
    pub source: DatasetSource,
    pub train_clients: usize,
    pub test_clients: usize,
    pub seed: u64,
    pub settings: RunSettings,
}

/// Single training run: the first `train_clients` clients train, the next
/// `test_clients` are held out.
pub fn cmd_train(cmd: &TrainCommand, sink: &mut MetricsSink) -> Result<RunOutcome> {
    let ds = cmd.source.load()?;
    let split = Split::leading(&ds, cmd.train_clients, cmd.test_clients)?;
    logged_run(sink, "train", &ds, split, &cmd.settings, cmd.seed, true, BTreeMap::new())
}

/// Final test accuracy per swept client count.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub clients: usize,
    pub centralized: bool,
    pub outcome: RunOutcome,
}

pub fn cmd_sweep_clients(
    source: &DatasetSource,
    seed: u64,
    settings: &RunSettings,
    sink: &mut MetricsSink,
) -> Result<Vec<SweepPoint>> {
    let ds = source.load()?;
    let needed = CLIENT_SWEEP.iter().map(|(a, b)| a + b).max().unwrap_or(0);
    if ds.clients.len() < needed {
        return Err(QflError::config(format!(
            "client sweep needs {needed} clients, dataset has {}",
            ds.clients.len()
        )));
    }
    let mut points = Vec::new();
    for (n_train, n_test) in CLIENT_SWEEP {
        let centralized = n_train == 1;
        let clients = if centralized { 1 } else { n_train + n_test };
        let mut vars = BTreeMap::new();
        vars.insert("clients".into(), clients.into());
        vars.insert("centralized".into(), centralized.into());
        let split = Split::leading(&ds, n_train, n_test)?;
        let outcome = logged_run(sink, "sweep_clients", &ds, split, settings, seed, false, vars)?;
        points.push(SweepPoint {
            clients,
            centralized,
            outcome,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSizePoint {
    pub samples_per_client: usize,
    pub federated: RunOutcome,
    pub centralized: RunOutcome,
}

/// Federated (25 train / 5 test) against centralized (1 train / same 5
/// test) per client dataset size. Each size gets its own dataset, seeded
/// from `gen.seed` and the size.
pub fn cmd_sweep_datasize(
    gen: &GenConfig,
    non_iid_fraction: f64,
    sizes: &[usize],
    seed: u64,
    settings: &RunSettings,
    sink: &mut MetricsSink,
) -> Result<Vec<DataSizePoint>> {
    if sizes.is_empty() {
        return Err(QflError::config("no dataset sizes given"));
    }
    if let Some(bad) = sizes.iter().find(|s| **s == 0 || **s % gen.n_qubits != 0) {
        return Err(QflError::config(format!(
            "dataset size {bad} is not a positive multiple of n_qubits ({})",
            gen.n_qubits
        )));
    }
    let (n_train, n_test) = (25, 5);
    let mut points = Vec::new();
    for &size in sizes {
        let cfg = GenConfig {
            samples_per_client: size,
            n_clients: gen.n_clients.max(n_train + n_test),
            seed: derive_seed(gen.seed, size as u64),
            ..gen.clone()
        };
        let ds = generate_federated_dataset(&cfg, non_iid_fraction)?;
        let fed_split = Split::leading(&ds, n_train, n_test)?;
        let central_split = Split {
            train: fed_split.train[..1].to_vec(),
            test: fed_split.test.clone(),
        };
        let mut outcomes = Vec::new();
        for (centralized, split) in [(false, fed_split), (true, central_split)] {
            let mut vars = BTreeMap::new();
            vars.insert("samples_per_client".into(), size.into());
            vars.insert("centralized".into(), centralized.into());
            outcomes.push(logged_run(
                sink,
                "sweep_datasize",
                &ds,
                split,
                settings,
                seed,
                false,
                vars,
            )?);
        }
        points.push(DataSizePoint {
            samples_per_client: size,
            federated: outcomes[0],
            centralized: outcomes[1],
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IidComparison {
    pub iid: RunOutcome,
    pub non_iid: RunOutcome,
}

/// IID and non-IID datasets from one seed, trained identically.
pub fn cmd_compare_iid(
    gen: &GenConfig,
    non_iid_fraction: f64,
    seed: u64,
    settings: &RunSettings,
    sink: &mut MetricsSink,
) -> Result<IidComparison> {
    let (n_train, n_test) = (25, 5);
    let mut outcomes = Vec::new();
    for (label, fraction) in [("iid", 0.0), ("non_iid", non_iid_fraction)] {
        let ds = generate_federated_dataset(gen, fraction)?;
        let split = Split::leading(&ds, n_train, n_test)?;
        let mut vars = BTreeMap::new();
        vars.insert("data".into(), label.into());
        vars.insert("non_iid_fraction".into(), fraction.into());
        outcomes.push(logged_run(sink, "compare_iid", &ds, split, settings, seed, false, vars)?);
    }
    Ok(IidComparison {
        iid: outcomes[0],
        non_iid: outcomes[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Spread {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min,
            max,
        }
    }

    pub fn spread(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBars {
    pub runs: Vec<(u64, RunOutcome)>,
    pub test_accuracy: Spread,
    pub test_mse: Spread,
    pub train_accuracy: Spread,
    pub train_mse: Spread,
}

/// Repeats the 25/5 run once per seed. With a generated source the dataset
/// seed follows the run seed; a file source is shared by all seeds.
pub fn cmd_error_bars(
    source: &DatasetSource,
    seeds: &[u64],
    settings: &RunSettings,
    sink: &mut MetricsSink,
) -> Result<ErrorBars> {
    if seeds.len() < 3 {
        return Err(QflError::config(format!(
            "error bars need at least 3 seeds, got {}",
            seeds.len()
        )));
    }
    let start = Instant::now();
    let mut runs = Vec::new();
    for &seed in seeds {
        let ds = match source {
            DatasetSource::Generate {
                gen,
                non_iid_fraction,
            } => generate_federated_dataset(
                &GenConfig {
                    seed,
                    ..gen.clone()
                },
                *non_iid_fraction,
            )?,
            DatasetSource::File(_) => source.load()?,
        };
        let split = Split::leading(&ds, 25, 5)?;
        let outcome = logged_run(sink, "error_bars", &ds, split, settings, seed, true, BTreeMap::new())?;
        runs.push((seed, outcome));
    }
    let collect = |f: fn(&RunOutcome) -> f64| Spread::of(&runs.iter().map(|(_, o)| f(o)).collect::<Vec<_>>());
    let bars = ErrorBars {
        test_accuracy: collect(|o| o.test_accuracy),
        test_mse: collect(|o| o.test_mse),
        train_accuracy: collect(|o| o.train_accuracy.unwrap_or(f64::NAN)),
        train_mse: collect(|o| o.train_mse.unwrap_or(f64::NAN)),
        runs,
    };
    let mut metrics = BTreeMap::new();
    for (name, s) in [
        ("test_accuracy", bars.test_accuracy),
        ("test_mse", bars.test_mse),
        ("train_accuracy", bars.train_accuracy),
        ("train_mse", bars.train_mse),
    ] {
        metrics.insert(format!("{name}_mean"), s.mean);
        metrics.insert(format!("{name}_min"), s.min);
        metrics.insert(format!("{name}_max"), s.max);
        metrics.insert(format!("{name}_spread"), s.spread());
    }
    let mut vars = settings.vars();
    vars.insert("seeds".into(), seeds.to_vec().into());
    sink.push(MetricsRow::Summary(SummaryRow {
        experiment: "error_bars".into(),
        seed: None,
        vars,
        metrics,
        wall_time: elapsed(start),
    }))?;
    Ok(bars)
}
