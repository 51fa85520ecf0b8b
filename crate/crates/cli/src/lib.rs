//! The `synthseg` command line: synthetic data generation, per-stage
//! training, segmentation and cohort statistics.

mod cohort;
mod error;
mod files;
mod generate;
mod segment;
mod table;
mod train;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, ErrorClass, Result};
pub use table::{read_cohort_csv, write_cohort_csv};

#[derive(Debug, Parser)]
#[command(name = "synthseg", version, about = "Contrast- and resolution-agnostic brain MRI segmentation")]
pub struct Cli {
    /// Worker threads for generation and batch segmentation (0: one per core).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic (image, labels) pairs from label maps.
    Generate(GenerateArgs),
    /// Train one network of the cascade into a bundle directory.
    Train(TrainArgs),
    /// Segment scans with a trained bundle.
    Segment(SegmentArgs),
    /// Cohort statistics on a volume table.
    Cohort(CohortArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory of label maps (.nii or .nii.gz).
    #[arg(long)]
    pub maps: PathBuf,
    /// Generator priors (JSON); built-in defaults when omitted.
    #[arg(long)]
    pub priors: Option<PathBuf>,
    /// Label schema (JSON); the built-in schema when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, short = 'n')]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    S1,
    D,
    S2,
    S3,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-scale architecture and step counts.
    Full,
    /// Small networks and short runs for desk-scale experiments.
    Toy,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub role: Role,
    /// Training config (JSON, any subset of the fields); overrides the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// Bundle directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Label maps for s1, s2 and s3.
    #[arg(long)]
    pub maps: Option<PathBuf>,
    /// Paired `<name>_image` / `<name>_labels` volumes for d and r.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Label schema for a new bundle; an existing bundle keeps its own.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue from this role's last checkpoint in the bundle.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Scan(s) to segment, or a directory of scans.
    #[arg(long = "i", short = 'i', required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output directory.
    #[arg(long = "o", short = 'o')]
    pub out: PathBuf,
    /// QC score below which a region is flagged as failed.
    #[arg(long, default_value_t = synthseg_core::pipeline::DEFAULT_QC_THRESHOLD)]
    pub robust_threshold: f64,
    /// Also write the coarse and fine posterior maps.
    #[arg(long)]
    pub save_soft: bool,
    /// Feed S1 straight into S2.
    #[arg(long)]
    pub no_denoiser: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CohortMode {
    Ageing,
    Effectsize,
    Qcfilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QcModeArg {
    Whole,
    PerStructure,
}

#[derive(Debug, Args)]
pub struct CohortArgs {
    /// Volume table (CSV).
    #[arg(long)]
    pub volumes: PathBuf,
    #[arg(long, value_enum)]
    pub mode: CohortMode,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to these structures (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub structures: Option<Vec<String>>,
    /// QC threshold for qcfilter.
    #[arg(long, default_value_t = synthseg_core::pipeline::DEFAULT_QC_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = QcModeArg::PerStructure)]
    pub qc_mode: QcModeArg,
    /// Skip the age, gender and ICV correction before effect sizes.
    #[arg(long)]
    pub no_correction: bool,
    /// Ages at which each ageing trajectory is tabulated.
    #[arg(long, default_value_t = 50)]
    pub grid_points: usize,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::usage(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| match cli.command {
        Command::Generate(a) => generate::run(&a),
        Command::Train(a) => train::run(&a),
        Command::Segment(a) => segment::run(&a),
        Command::Cohort(a) => cohort::run(&a),
    })
}
