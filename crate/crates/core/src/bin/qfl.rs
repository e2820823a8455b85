use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qfl_core::dataset::{AngleDistribution, GenConfig};
use qfl_core::fed::wire::{run_remote_client, TcpServerTransport};
use qfl_core::fed::{evaluate, run_federated, ClientState, OptimizerConfig, OptimizerKind, Split};
use qfl_core::harness::{
    cmd_compare_iid, cmd_error_bars, cmd_gen_data, cmd_sweep_clients, cmd_sweep_datasize, cmd_train,
    DatasetSource, MetricsRow, MetricsSink, RunSettings, SummaryRow, TrainCommand, DEFAULT_DATA_SIZES,
};
use qfl_core::qcnn::{GradientMethod, QcnnModel, INIT_SCALE};
use qfl_core::{QflError, Result};

#[derive(Parser)]
#[command(name = "qfl", version, about = "Quantum federated learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a federated dataset file.
    GenData {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// One training run.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Metrics file (appended); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy against the number of clients, centralized included.
    SweepClients {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Federated against centralized accuracy per client dataset size.
    SweepDatasize {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DATA_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// IID against non-IID data under identical training.
    CompareIid {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the 25/5 run across seeds and report the spread.
    ErrorBars {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the server over TCP; training clients connect with `qfl client`.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one training client against a `qfl serve` server.
    Client {
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        #[arg(long)]
        client_id: String,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Must match the server's seed for reproducible runs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Read this dataset file instead of generating one.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    clients: usize,
    #[arg(long, default_value_t = 160)]
    samples_per_client: usize,
    #[arg(long, default_value_t = 8)]
    qubits: usize,
    #[arg(long, default_value_t = 0.0)]
    non_iid_fraction: f64,
    /// Dataset generation seed.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

impl DataArgs {
    fn gen_config(&self) -> GenConfig {
        GenConfig {
            n_qubits: self.qubits,
            samples_per_client: self.samples_per_client,
            n_clients: self.clients,
            angle_distribution: AngleDistribution::UniformPi,
            seed: self.data_seed,
            ..GenConfig::default()
        }
    }

    fn source(&self) -> DatasetSource {
        match &self.dataset {
            Some(p) => DatasetSource::File(p.clone()),
            None => DatasetSource::Generate {
                gen: self.gen_config(),
                non_iid_fraction: self.non_iid_fraction,
            },
        }
    }
}

#[derive(Args, Clone)]
struct SplitArgs {
    #[arg(long, default_value_t = 25)]
    train_clients: usize,
    #[arg(long, default_value_t = 5)]
    test_clients: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
    Rmsprop,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradientArg {
    Adjoint,
    Shift,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    #[arg(long, default_value_t = 30)]
    rounds: usize,
    /// Local epochs per round.
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, value_enum, default_value_t = GradientArg::Adjoint)]
    gradient: GradientArg,
    /// Initial parameters are uniform on [-s, s).
    #[arg(long, default_value_t = INIT_SCALE)]
    init_scale: f64,
    /// Conv/pool stages; defaults to halving down to one qubit.
    #[arg(long)]
    stages: Option<usize>,
    /// Append a single-qubit fully connected block before readout.
    #[arg(long)]
    fully_connected: bool,
}

impl TrainArgs {
    fn settings(&self) -> RunSettings {
        let kind = match self.optimizer {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Rmsprop => OptimizerKind::Rmsprop,
        };
        RunSettings {
            optimizer: OptimizerConfig::new(kind, self.lr),
            rounds: self.rounds,
            epochs: self.epochs,
            batch_size: self.batch_size,
            gradient: match self.gradient {
                GradientArg::Adjoint => GradientMethod::Adjoint,
                GradientArg::Shift => GradientMethod::ParameterShift,
            },
            init_scale: self.init_scale,
            stages: self.stages,
            fully_connected: self.fully_connected,
        }
    }
}

fn sink(out: &Option<PathBuf>) -> Result<MetricsSink> {
    Ok(match out {
        Some(p) => MetricsSink::append_to(p)?,
        None => MetricsSink::stdout(),
    }
    .with_echo(out.is_some()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { data, out } => {
            let s = cmd_gen_data(&data.gen_config(), data.non_iid_fraction, &out)?;
            println!(
                "wrote {}: {} clients, {} samples, {} excited ({:.1}%), checksum fnv1a64:{:016x}",
                out.display(),
                s.clients,
                s.samples,
                s.excited,
                100.0 * s.excited as f64 / s.samples.max(1) as f64,
                s.checksum
            );
        }
        Command::Train {
            data,
            split,
            train,
            seed,
            out,
        } => {
            let cmd = TrainCommand {
                source: data.source(),
                train_clients: split.train_clients,
                test_clients: split.test_clients,
                seed,
                settings: train.settings(),
            };
            cmd_train(&cmd, &mut sink(&out)?)?;
        }
        Command::SweepClients {
            data,
            train,
            seed,
            out,
        } => {
            cmd_sweep_clients(&data.source(), seed, &train.settings(), &mut sink(&out)?)?;
        }
        Command::SweepDatasize {
            data,
            train,
            sizes,
            seed,
            out,
        } => {
            if data.dataset.is_some() {
                return Err(QflError::config(
                    "sweep-datasize generates its own datasets; --dataset is not accepted",
                ));
            }
            cmd_sweep_datasize(
                &data.gen_config(),
                data.non_iid_fraction,
                &sizes,
                seed,
                &train.settings(),
                &mut sink(&out)?,
            )?;
        }
        Command::CompareIid {
            data,
            train,
            seed,
            out,
        } => {
            if data.dataset.is_some() {
                return Err(QflError::config(
                    "compare-iid generates both datasets; --dataset is not accepted",
                ));
            }
            let fraction = if data.non_iid_fraction > 0.0 {
                data.non_iid_fraction
            } else {
                0.5
            };
            cmd_compare_iid(&data.gen_config(), fraction, seed, &train.settings(), &mut sink(&out)?)?;
        }
        Command::ErrorBars {
            data,
            train,
            seeds,
            out,
        } => {
            cmd_error_bars(&data.source(), &seeds, &train.settings(), &mut sink(&out)?)?;
        }
        Command::Serve {
            listen,
            data,
            split,
            train,
            seed,
            out,
        } => {
            let ds = data.source().load()?;
            let split = Split::leading(&ds, split.train_clients, split.test_clients)?;
            let cfg = train.settings().train_config(split, seed, ds.gen_config.n_qubits)?;
            let model = QcnnModel::new(&cfg.architecture)?;
            let init = model.init_params(cfg.init_seed(), cfg.init_scale);
            let test: Vec<_> = cfg
                .split
                .test
                .iter()
                .filter_map(|id| ds.client(id).cloned())
                .collect();
            let listener = TcpListener::bind(&listen)?;
            eprintln!(
                "listening on {}, waiting for {} clients",
                listener.local_addr()?,
                cfg.split.train.len()
            );
            let mut transport = TcpServerTransport::accept(&listener, &cfg.split.train, &model)?;
            let start = std::time::Instant::now();
            let (server, records) = run_federated(
                &model,
                init,
                cfg.client_weights()?,
                &mut transport,
                cfg.rounds,
                &test,
                None,
            )?;
            let final_eval = evaluate(&server.params, &test, &model)?;
            let mut sink = sink(&out)?;
            for r in &records {
                sink.push(MetricsRow::Round(qfl_core::harness::RoundRow {
                    experiment: "serve".into(),
                    seed,
                    vars: Default::default(),
                    round: r.round,
                    test_accuracy: r.test_accuracy,
                    test_mse: r.test_mse,
                    server_params_checksum: r.server_params_checksum.clone(),
                    wall_time: start.elapsed().as_secs_f64(),
                }))?;
            }
            sink.push(MetricsRow::Summary(SummaryRow {
                experiment: "serve".into(),
                seed: Some(seed),
                vars: Default::default(),
                metrics: [
                    ("test_accuracy".to_string(), final_eval.accuracy),
                    ("test_mse".to_string(), final_eval.mse),
                ]
                .into_iter()
                .collect(),
                wall_time: start.elapsed().as_secs_f64(),
            }))?;
        }
        Command::Client {
            connect,
            client_id,
            data,
            train,
            seed,
        } => {
            let ds = data.source().load()?;
            let slot = ds
                .clients
                .iter()
                .position(|c| c.client_id == client_id)
                .ok_or_else(|| QflError::config(format!("dataset has no client `{client_id}`")))?;
            let split = Split {
                train: vec![client_id.clone()],
                test: Vec::new(),
            };
            let cfg = train.settings().train_config(split, seed, ds.gen_config.n_qubits)?;
            let local = cfg.local();
            local.validate()?;
            let model = QcnnModel::new(&cfg.architecture)?;
            let init = model.init_params(cfg.init_seed(), cfg.init_scale);
            let mut client = ClientState::new(slot as u64, &ds.clients[slot], &init);
            let stream = TcpStream::connect(&connect)?;
            let served = run_remote_client(stream, &mut client, &model, &local)?;
            eprintln!("{client_id}: served {served} rounds");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qfl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
