use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "prufer", version, about = "Prüfer code mutation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format; json writes one object per line.
    #[arg(long, value_enum, global = true, default_value_t = Format::Csv)]
    pub format: Format,

    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for enumeration and sampling.
    #[arg(long, global = true, env = "PRUFER_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Encode trees (`n; u-v, ...`) as Prüfer strings.
    Encode(EncodeArgs),
    /// Decode Prüfer strings (`n; p1,p2,...`) into trees.
    Decode(DecodeArgs),
    /// Apply a single-entry mutation and report both trees and Δ.
    Mutate(MutateArgs),
    /// Edge distance between two trees.
    Dist(DistArgs),
    /// Per-step lockstep trace of a mutated pair, as JSON lines.
    Trace(TraceArgs),
    /// Exact distribution of Δ by exhaustive enumeration.
    Enumerate(EnumerateArgs),
    /// Sampled distribution of Δ.
    Simulate(SimulateArgs),
    /// Sampled P(Δ = 1 | μ = αn) against (1 − α)².
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// A tree in `n; u-v, ...` form.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub tree: Option<String>,
    /// File with one tree per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(long, requires = "string")]
    pub n: Option<u32>,
    /// Entries `p1,p2,...`, or a full `n; p1,...` line.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub string: Option<String>,
    /// File with one string per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

/// A string plus mutation position, shared by `mutate` and `trace`.
#[derive(Args, Debug)]
pub struct PairArgs {
    #[arg(long)]
    pub n: Option<u32>,
    /// Entries `p1,p2,...`, or a full `n; p1,...` line.
    #[arg(long)]
    pub string: Option<String>,
    /// Mutation position, 1-based.
    #[arg(long)]
    pub mu: Option<usize>,
    /// Replacement entry p*_μ.
    #[arg(long, conflicts_with = "random")]
    pub value: Option<u32>,
    /// Draw whatever is not given (string, μ, replacement) from --seed.
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct MutateArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Also print the per-step trace.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args, Debug)]
pub struct DistArgs {
    /// File holding one tree.
    #[arg(long)]
    pub tree_a: PathBuf,
    #[arg(long)]
    pub tree_b: PathBuf,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Include the blocks A, B, C at every step.
    #[arg(long)]
    pub full: bool,
}

#[derive(Args, Debug)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub n: u32,
    /// Mutation position; all positions (the marginal) when omitted.
    #[arg(long)]
    pub mu: Option<usize>,
    /// Largest n to enumerate. Raising it accepts n^(n-2) growth.
    #[arg(long, default_value_t = prufer_core::exact::DEFAULT_CAP)]
    pub cap: u32,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: u32,
    /// Mutation positions, e.g. `3,10,50`.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["alpha_grid", "marginal"])]
    pub mu: Vec<usize>,
    /// α values as a list `0.1,0.5` or a range `0.1:0.9:0.1`; μ = round(αn).
    #[arg(long, conflicts_with = "marginal")]
    pub alpha_grid: Option<String>,
    /// Draw μ uniformly for each sample.
    #[arg(long)]
    pub marginal: bool,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Δ values above this are pooled into one overflow row.
    #[arg(long, default_value_t = prufer_core::monte_carlo::DEFAULT_MAX_ELL)]
    pub max_ell: usize,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub n: u32,
    /// α values as a list or a `start:stop:step` range.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    pub alphas: String,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
