use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use cipherface_core::dataset::{load_dataset, load_image, DatasetError, ImageVector};
use cipherface_core::eval::{run_eval, EvalError, ExperimentConfig};
use cipherface_core::flda::{classify_plain, train, FldaError, TrainOptions};
use cipherface_core::model_io::{
    load_private_key, load_quantized, load_trained, save_private_key, save_public_key, save_quantized,
    save_trained, ModelIoError,
};
use cipherface_core::net::{classify_remote, serve};
use cipherface_core::paillier::{keygen, PaillierError};
use cipherface_core::par::Exec;
use cipherface_core::protocol::{ClientConfig, ClientSession, ProtocolError, ServerConfig, DEFAULT_KAPPA};
use cipherface_core::quantizer::{quantize_model, QuantizeError};
use cipherface_core::wire::DEFAULT_MAX_FRAME;

#[derive(Parser)]
#[command(name = "cipherface", version, about = "Fisher-LDA classification of encrypted images")]
struct Cli {
    /// Fix all randomness (keys, blinds, synthetic data).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run every batch loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Paillier key pair.
    Keygen {
        #[arg(long, default_value_t = 1024)]
        bits: u64,
        #[arg(long, default_value = "public.json")]
        public: PathBuf,
        #[arg(long, default_value = "private.json")]
        private: PathBuf,
    },
    /// Train a Fisherfaces model from a PGM folder or a vector CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pca_dims: Option<usize>,
        #[arg(long)]
        flda_dims: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantize a trained model with integer scale S.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scale: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify an image in the clear with a trained or quantized model.
    ClassifyPlain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Serve encrypted classification with a quantized model.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Exit after this many sessions.
        #[arg(long)]
        max_sessions: Option<usize>,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Classify an image through the encrypted protocol.
    ClassifyEncrypted {
        #[arg(long)]
        connect: String,
        /// Private key file.
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Run the synthetic experiment and write CSV reports.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SessionArgs {
    /// Blinding margin in bits.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: u32,
    #[arg(long, default_value_t = DEFAULT_MAX_FRAME)]
    max_frame: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 12)]
    side: usize,
    #[arg(long, default_value_t = 8)]
    train_per_class: usize,
    #[arg(long, default_value_t = 4)]
    test_per_class: usize,
    #[arg(long, default_value_t = 40.0)]
    separation: f64,
    #[arg(long, default_value_t = 12.0)]
    noise: f64,
    /// Comma-separated scales for the sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000,10000")]
    scales: Vec<u64>,
    #[arg(long, default_value_t = 30)]
    pool_per_class: usize,
    #[arg(long, default_value_t = 10)]
    subsets: usize,
    #[arg(long, default_value_t = 24)]
    subset_per_class: usize,
    #[arg(long, default_value_t = 10_000)]
    loo_scale: u64,
    #[arg(long)]
    pca_dims: Option<usize>,
    #[arg(long)]
    flda_dims: Option<usize>,
    /// Test images per scale sent through the encrypted protocol.
    #[arg(long, default_value_t = 12)]
    encrypted_samples: usize,
    #[arg(long, default_value_t = 512)]
    key_bits: u64,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: u32,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelIoError),
    #[error(transparent)]
    Train(#[from] FldaError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Key(#[from] PaillierError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    /// Process exit status; 2 is reserved for usage errors.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) | CliError::Model(ModelIoError::Io { .. }) | CliError::Dataset(DatasetError::Io { .. }) => 3,
            CliError::Dataset(_) => 4,
            CliError::Model(_) => 5,
            CliError::Train(_) => 6,
            CliError::Quantize(_) => 7,
            CliError::Key(_) => 8,
            CliError::Protocol(_) => 9,
            CliError::Eval(_) => 10,
        }
    }
}

fn rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn print_stdout(line: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}")
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

/// Label of `image` under either model kind.
fn classify_plain_file(model: &Path, image: &ImageVector) -> Result<String, CliError> {
    match load_quantized(model) {
        Ok(q) => {
            let d = q.classify(image)?;
            Ok(q.label_names[d.label].clone())
        }
        Err(ModelIoError::Format { .. }) => {
            let m = load_trained(model)?;
            let d = classify_plain(&m, image)?;
            Ok(m.label_names[d.label].clone())
        }
        Err(e) => Err(e.into()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Keygen { bits, public, private } => {
            let (pk, sk) = keygen(bits, &mut rng(cli.seed))?;
            save_public_key(&public, &pk)?;
            save_private_key(&private, &sk)?;
            print_stdout(&format!("key {} ({} bits)", pk.key_id(), pk.bit_length()))
        }
        Command::Train { data, pca_dims, flda_dims, out } => {
            let ds = load_dataset(&data)?;
            let model = train(&ds, &TrainOptions { pca_dims, flda_dims, exec })?;
            save_trained(&out, &model)?;
            print_stdout(&format!(
                "trained on {} images, {} classes, m_pca {}, m_out {}",
                ds.len(),
                model.label_names.len(),
                model.dims.m_pca,
                model.dims.m_out
            ))
        }
        Command::Quantize { model, scale, out } => {
            let q = quantize_model(&load_trained(&model)?, scale)?;
            save_quantized(&out, &q)?;
            print_stdout(&format!("scale {} l {}", q.scale, q.l))
        }
        Command::ClassifyPlain { model, image } => {
            let image = load_image(&image)?;
            print_stdout(&classify_plain_file(&model, &image)?)
        }
        Command::Serve { model, listen, max_sessions, session } => {
            let q = Arc::new(load_quantized(&model)?);
            let listener = TcpListener::bind(&listen).map_err(|e| CliError::Io(format!("{listen}: {e}")))?;
            let addr = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
            print_stdout(&format!("listening on {addr}"))?;
            let config = ServerConfig {
                kappa: session.kappa,
                exec,
                max_frame: session.max_frame,
                seed: cli.seed,
            };
            serve(&listener, q, config, max_sessions, |k, result| match result {
                Ok(r) => eprintln!("session {k} ({:#018x}) done, {} blinds", r.session_id, r.blinds.len()),
                Err(e) => eprintln!("session {k} aborted [code {}]: {e}", e.code()),
            })
            .map_err(|e| CliError::Io(format!("accept: {e}")))
        }
        Command::ClassifyEncrypted { connect, key, image, session } => {
            let sk = load_private_key(&key)?;
            let image = load_image(&image)?;
            let config = ClientConfig {
                kappa: session.kappa,
                exec,
                max_frame: session.max_frame,
                seed: cli.seed,
            };
            let outcome = classify_remote(connect.as_str(), ClientSession::new(sk, image, config), session.max_frame)?;
            print_stdout(&outcome.label)
        }
        Command::Eval(a) => {
            let cfg = ExperimentConfig {
                class_count: a.classes,
                train_per_class: a.train_per_class,
                test_per_class: a.test_per_class,
                side: a.side,
                separation: a.separation,
                noise: a.noise,
                scales: a.scales,
                pool_per_class: a.pool_per_class,
                subsets: a.subsets,
                subset_per_class: a.subset_per_class,
                loo_scale: a.loo_scale,
                pca_dims: a.pca_dims,
                flda_dims: a.flda_dims,
                encrypted_samples: a.encrypted_samples,
                key_bits: a.key_bits,
                kappa: a.kappa,
                seed: cli.seed.unwrap_or(1),
                exec,
            };
            let report = run_eval(&cfg)?;
            report.write_csv(&a.out)?;
            print_stdout(&format!(
                "average leave-one-out accuracy {:.2}%; reports in {}",
                report.average.accuracy,
                a.out.display()
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error[{code}]: {e}");
            ExitCode::from(code)
        }
    }
}
