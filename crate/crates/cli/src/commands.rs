use std::fs;
use std::path::Path;

use prufer_core::codec::parse_entries;
use prufer_core::{
    curve_sweep_with, decode, encode, enumerate_all_with, enumerate_mu_with, estimate_delta_dist,
    estimate_marginal_with, sample_pair, tree_distance, CoupledDecoder, DecodeTrace, Detail,
    EnumerationOptions, EventFlags, LabeledTree, MuSpec, MutationPair, PruferString, SimConfig,
    TraceOptions, Vertex,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{
    Cli, Command, DecodeArgs, DistArgs, EncodeArgs, EnumerateArgs, Format, MutateArgs, PairArgs,
    SimulateArgs, SweepArgs, TraceArgs,
};
use crate::error::CliError;
use crate::output::Output;

/// Order used by `--random` when neither `--n` nor `--string` is given.
const DEFAULT_RANDOM_N: u32 = 10;

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    // Arguments are validated before the output file is created.
    let out = || Output::open(cli.out.as_deref(), cli.format);
    match &cli.command {
        Command::Encode(a) => encode_cmd(a, out()?),
        Command::Decode(a) => decode_cmd(a, out()?),
        Command::Dist(a) => dist_cmd(a, out()?),
        Command::Mutate(a) => {
            let pair = resolve_pair(&a.pair)?;
            mutate_cmd(a, &pair, out()?)
        }
        Command::Trace(a) => {
            let pair = resolve_pair(&a.pair)?;
            trace_cmd(a, &pair, out()?)
        }
        Command::Enumerate(a) => enumerate_cmd(a, cli.workers, out),
        Command::Simulate(a) => simulate_cmd(a, cli.workers, out),
        Command::Sweep(a) => sweep_cmd(a, cli.workers, out),
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

#[derive(Serialize)]
struct CodecRecord {
    string: String,
    tree: String,
}

fn encode_cmd(a: &EncodeArgs, mut out: Output) -> Result<(), CliError> {
    let trees = match (&a.tree, &a.input) {
        (Some(t), _) => vec![LabeledTree::parse_line(t).map_err(CliError::Data)?],
        (None, Some(path)) => LabeledTree::parse_many(&read_input(path)?)?,
        (None, None) => unreachable!("clap requires one of --tree and --input"),
    };
    for t in &trees {
        let p = encode(t)?;
        match out.format() {
            Format::Csv => out.line(&p.to_string())?,
            Format::Json => out.json(&CodecRecord {
                string: p.to_string(),
                tree: t.to_string(),
            })?,
        }
    }
    out.finish()
}

/// `--string` holds either bare entries (needing `--n`) or a full line.
fn parse_string(n: Option<u32>, s: &str) -> Result<PruferString, CliError> {
    if s.contains(';') {
        let p = PruferString::parse_line(s)?;
        match n {
            Some(n) if n != p.n() => Err(CliError::Usage(format!(
                "--n {n} disagrees with the string's order {}",
                p.n()
            ))),
            _ => Ok(p),
        }
    } else {
        let n = n.ok_or_else(|| CliError::Usage("--n is required with bare entries".into()))?;
        Ok(PruferString::new(n, parse_entries(s)?)?)
    }
}

fn decode_cmd(a: &DecodeArgs, mut out: Output) -> Result<(), CliError> {
    let strings = match (&a.string, &a.input) {
        (Some(s), _) => vec![parse_string(a.n, s)?],
        (None, Some(path)) => read_input(path)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|(i, l)| {
                PruferString::parse_line(l)
                    .map_err(|e| CliError::Data(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<_, _>>()?,
        (None, None) => unreachable!("clap requires one of --string and --input"),
    };
    for p in &strings {
        let t = decode(p);
        match out.format() {
            Format::Csv => out.line(&t.to_string())?,
            Format::Json => out.json(&CodecRecord {
                string: p.to_string(),
                tree: t.to_string(),
            })?,
        }
    }
    out.finish()
}

fn read_tree(path: &Path) -> Result<LabeledTree, CliError> {
    let mut trees = LabeledTree::parse_many(&read_input(path)?)?;
    if trees.len() != 1 {
        return Err(CliError::Data(format!(
            "{} holds {} trees, expected one",
            path.display(),
            trees.len()
        )));
    }
    Ok(trees.remove(0))
}

#[derive(Serialize)]
struct DistRecord {
    delta: usize,
}

fn dist_cmd(a: &DistArgs, mut out: Output) -> Result<(), CliError> {
    let delta = tree_distance(&read_tree(&a.tree_a)?, &read_tree(&a.tree_b)?)?;
    match out.format() {
        Format::Csv => out.line(&delta.to_string())?,
        Format::Json => out.json(&DistRecord { delta })?,
    }
    out.finish()
}

fn resolve_pair(a: &PairArgs) -> Result<MutationPair, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let base = match &a.string {
        Some(s) => parse_string(a.n, s)?,
        None if a.random => {
            let n = a.n.unwrap_or(DEFAULT_RANDOM_N);
            if n < 3 {
                return Err(CliError::Usage(format!("--n must be at least 3, got {n}")));
            }
            if a.mu.is_none() {
                let mu = rng.random_range(1..=n as usize - 2);
                return Ok(sample_pair(n, mu, &mut rng));
            }
            let entries = (0..n - 2).map(|_| rng.random_range(1..=n)).collect();
            PruferString::new(n, entries)?
        }
        None => {
            return Err(CliError::Usage(
                "--string is required unless --random is set".into(),
            ))
        }
    };
    let len = base.entries().len();
    let mu = match a.mu {
        Some(m) if m == 0 || m > len => {
            return Err(CliError::Usage(format!("--mu {m} is outside 1..={len}")))
        }
        Some(m) => m,
        None if a.random => rng.random_range(1..=len),
        None => {
            return Err(CliError::Usage(
                "--mu is required unless --random is set".into(),
            ))
        }
    };
    let value = match a.value {
        Some(v) => v,
        None if a.random => {
            let n = base.n();
            let v: Vertex = rng.random_range(1..n);
            if v >= base.entry(mu) {
                v + 1
            } else {
                v
            }
        }
        None => return Err(CliError::Usage("give --value or --random".into())),
    };
    Ok(MutationPair::new(base, mu, value)?)
}

#[derive(Serialize)]
struct MutationReport {
    n: u32,
    mu: usize,
    value: Vertex,
    p: String,
    pstar: String,
    tree: String,
    tree_star: String,
    delta: usize,
    #[serde(rename = "E")]
    e: bool,
    #[serde(rename = "E1")]
    e1: bool,
    #[serde(rename = "E2")]
    e2: bool,
    #[serde(rename = "S")]
    s: bool,
    #[serde(rename = "T1")]
    t1: bool,
    #[serde(rename = "T2")]
    t2: bool,
    b_mu: usize,
    tau0: usize,
    tau_delta: usize,
    negative_steps: usize,
}

fn traced(pair: &MutationPair, detail: Detail) -> Result<DecodeTrace, CliError> {
    Ok(CoupledDecoder::new().trace(
        pair,
        &TraceOptions {
            detail,
            ..TraceOptions::default()
        },
    )?)
}

fn mutate_cmd(a: &MutateArgs, pair: &MutationPair, mut out: Output) -> Result<(), CliError> {
    let detail = if a.trace {
        Detail::Summary
    } else {
        Detail::Totals
    };
    let trace = traced(pair, detail)?;
    let o = &trace.outcome;
    let f = &o.flags;
    let pstar = pair.pstar();
    let report = MutationReport {
        n: pair.n(),
        mu: pair.mu(),
        value: pair.mutated_value(),
        p: pair.p().to_string(),
        pstar: pstar.to_string(),
        tree: decode(pair.p()).to_string(),
        tree_star: decode(&pstar).to_string(),
        delta: o.delta_total,
        e: f.e,
        e1: f.e1,
        e2: f.e2,
        s: f.s,
        t1: f.t1,
        t2: f.t2,
        b_mu: o.b_mu,
        tau0: o.tau0,
        tau_delta: o.tau_delta,
        negative_steps: o.negative_steps,
    };
    out.rows(&[report])?;
    if a.trace {
        if out.format() == Format::Csv {
            out.line("")?;
        }
        out.rows(&trace.steps)?;
    }
    out.finish()
}

#[derive(Serialize)]
struct TraceHeader<'a> {
    n: u32,
    mu: usize,
    p: String,
    pstar: String,
    delta_total: usize,
    flags: &'a EventFlags,
    tau0: usize,
    tau_delta: usize,
    b_at_tau0: usize,
}

/// Always JSON lines: a header object, then one object per step.
fn trace_cmd(a: &TraceArgs, pair: &MutationPair, mut out: Output) -> Result<(), CliError> {
    let trace = traced(
        pair,
        if a.full {
            Detail::Full
        } else {
            Detail::Summary
        },
    )?;
    let o = &trace.outcome;
    out.json(&TraceHeader {
        n: pair.n(),
        mu: pair.mu(),
        p: pair.p().to_string(),
        pstar: pair.pstar().to_string(),
        delta_total: o.delta_total,
        flags: &o.flags,
        tau0: o.tau0,
        tau_delta: o.tau_delta,
        b_at_tau0: o.b_at_tau0,
    })?;
    for s in &trace.steps {
        out.json(s)?;
    }
    out.finish()
}

fn enumerate_cmd(
    a: &EnumerateArgs,
    workers: Option<usize>,
    out: impl FnOnce() -> Result<Output, CliError>,
) -> Result<(), CliError> {
    let opts = EnumerationOptions {
        cap: a.cap,
        workers,
    };
    let dist = match a.mu {
        Some(mu) => enumerate_mu_with(a.n, mu, &opts)?,
        None => enumerate_all_with(a.n, &opts)?,
    };
    let mut out = out()?;
    out.rows(&dist.rows())?;
    out.finish()
}

fn parse_alphas(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse α values `{s}`"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    // Grid points are rounded so `0.1:0.9:0.1` yields 0.3, not 0.30000000000000004.
    let tidy = |x: f64| (x * 1e9).round() / 1e9;
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step <= 0.0 || stop < start {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|k| tidy(start + k as f64 * step)).collect())
        }
        [list] => list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(num)
            .collect(),
        _ => Err(bad()),
    }
}

fn simulate_cmd(
    a: &SimulateArgs,
    workers: Option<usize>,
    out: impl FnOnce() -> Result<Output, CliError>,
) -> Result<(), CliError> {
    let estimates = if a.marginal {
        vec![estimate_marginal_with(
            a.n, a.samples, a.seed, a.max_ell, workers,
        )?]
    } else {
        let mu_spec = match &a.alpha_grid {
            Some(g) => MuSpec::AlphaGrid(parse_alphas(g)?),
            None if !a.mu.is_empty() => MuSpec::List(a.mu.clone()),
            None => {
                return Err(CliError::Usage(
                    "give --mu, --alpha-grid or --marginal".into(),
                ))
            }
        };
        estimate_delta_dist(&SimConfig {
            n: a.n,
            mu_spec,
            samples: a.samples,
            seed: a.seed,
            max_ell_tracked: a.max_ell,
            workers,
        })?
    };
    let rows: Vec<_> = estimates.iter().flat_map(|e| e.rows()).collect();
    let mut out = out()?;
    out.rows(&rows)?;
    out.finish()
}

fn sweep_cmd(
    a: &SweepArgs,
    workers: Option<usize>,
    out: impl FnOnce() -> Result<Output, CliError>,
) -> Result<(), CliError> {
    let alphas = parse_alphas(&a.alphas)?;
    let rows = curve_sweep_with(a.n, &alphas, a.samples, a.seed, workers)?;
    let mut out = out()?;
    out.rows(&rows)?;
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_grids() {
        let g = parse_alphas("0.1:0.9:0.1").unwrap();
        assert_eq!(g, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(parse_alphas("0.25,0.5").unwrap(), vec![0.25, 0.5]);
        assert!(parse_alphas("0.5:0.1:0.1").is_err());
        assert!(parse_alphas("x").is_err());
    }

    #[test]
    fn string_forms() {
        let a = parse_string(Some(7), "4,3,2,2,7").unwrap();
        let b = parse_string(None, "7; 4,3,2,2,7").unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            parse_string(Some(6), "7; 4,3,2,2,7"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            parse_string(Some(7), "4,3,2"),
            Err(CliError::Data(_))
        ));
    }
}
