//! Lockstep decoding of a mutation pair `(P, P*)`.
//!
//! Two rear-to-front decoders run side by side. Until the mutated position
//! `μ` they are identical. At step `μ` they either stay identical (event `E`)
//! or split, after which each tree has at most one vertex the other lacks:
//! `z` is placed in `T` only and `z*` in `T*` only. The vertices unplaced in
//! both trees split into three blocks relative to that pair:
//!
//! ```text
//!   A (below min{z,z*})  <  min{z,z*}  <  B  <  max{z,z*}  <  C
//! ```
//!
//! with sizes `a`, `b`, `c`. [`CoupledState::classify_step`] predicts, from
//! the next entry alone, which of eleven cases the step falls into and how
//! `(a, b, c, z, z*)` and the per-step distance increment `Δ_j` change.
//! The decoders themselves are always the ground truth: in verify mode every
//! prediction is checked against them and a disagreement is an error.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{Decoder, PruferString};
use crate::tree::{Edge, Vertex};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CoupledError {
    #[error("invalid mutation pair: {0}")]
    InvalidPair(String),
    #[error("the two decoders are merged; there is no case to classify")]
    StateMerged,
    #[error("step {step}: state machine disagrees with the decoders: {detail}")]
    Inconsistent { step: usize, detail: String },
    #[error("trace was recorded without per-step data")]
    StepsNotRecorded,
}

/// Two strings of order `n` that differ exactly at position `mu`.
///
/// Only the base string and the replacement entry are stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MutationPair {
    base: PruferString,
    mu: usize,
    value: Vertex,
}

impl MutationPair {
    /// `P* = P` with `p*_mu = value`.
    pub fn new(base: PruferString, mu: usize, value: Vertex) -> Result<Self, CoupledError> {
        let len = base.entries().len();
        if mu == 0 || mu > len {
            return Err(CoupledError::InvalidPair(format!(
                "mutation position {mu} is outside 1..={len}"
            )));
        }
        if value == 0 || value > base.n() {
            return Err(CoupledError::InvalidPair(format!(
                "replacement entry {value} is outside 1..={}",
                base.n()
            )));
        }
        if base.entry(mu) == value {
            return Err(CoupledError::InvalidPair(format!(
                "replacement entry {value} equals p_{mu}"
            )));
        }
        Ok(MutationPair { base, mu, value })
    }

    /// Checks that `p` and `pstar` differ at `mu` and nowhere else.
    pub fn from_strings(
        p: PruferString,
        pstar: &PruferString,
        mu: usize,
    ) -> Result<Self, CoupledError> {
        if p.n() != pstar.n() {
            return Err(CoupledError::InvalidPair(format!(
                "orders differ ({} vs {})",
                p.n(),
                pstar.n()
            )));
        }
        let diff: Vec<usize> = p
            .entries()
            .iter()
            .zip(pstar.entries())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i + 1)
            .collect();
        if diff != [mu] {
            return Err(CoupledError::InvalidPair(format!(
                "strings differ at positions {diff:?}, expected exactly [{mu}]"
            )));
        }
        let value = pstar.entry(mu);
        MutationPair::new(p, mu, value)
    }

    pub fn n(&self) -> u32 {
        self.base.n()
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn p(&self) -> &PruferString {
        &self.base
    }

    /// `p*_mu`.
    pub fn mutated_value(&self) -> Vertex {
        self.value
    }

    /// Materialises `P*`.
    pub fn pstar(&self) -> PruferString {
        let mut e = self.base.entries().to_vec();
        e[self.mu - 1] = self.value;
        PruferString::new(self.base.n(), e).expect("mutation keeps entries in range")
    }

    /// Rewrites the pair in place. The caller keeps entries in range and
    /// `value != p_mu`.
    pub(crate) fn reassign(&mut self, fill: impl FnOnce(&mut [Vertex]) -> Vertex) {
        self.value = fill(self.base.entries_mut());
        debug_assert!(self.value != self.base.entry(self.mu));
    }

    /// `p_i`, with the virtual ends `p_0 = p_{n-1} = n`.
    #[inline]
    pub fn entry(&self, i: usize) -> Vertex {
        self.base.entry(i)
    }

    /// `p*_i`, with the same virtual ends.
    #[inline]
    pub fn entry_star(&self, i: usize) -> Vertex {
        if i == self.mu {
            self.value
        } else {
            self.base.entry(i)
        }
    }
}

/// Per-step case label. `PreMu` covers steps above `μ`, `Mu` the splitting
/// step `μ` itself, and `Merged` every step at which the decoders agree on
/// the unplaced set (including step `μ` under event `E`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CaseLabel {
    #[serde(rename = "PRE_MU")]
    PreMu,
    #[serde(rename = "MU")]
    Mu,
    #[serde(rename = "1a")]
    C1a,
    #[serde(rename = "1b")]
    C1b,
    #[serde(rename = "1c")]
    C1c,
    #[serde(rename = "2a")]
    C2a,
    #[serde(rename = "2b")]
    C2b,
    #[serde(rename = "2c")]
    C2c,
    #[serde(rename = "3a")]
    C3a,
    #[serde(rename = "3b")]
    C3b,
    #[serde(rename = "3c")]
    C3c,
    #[serde(rename = "4a")]
    C4a,
    #[serde(rename = "4b")]
    C4b,
    #[serde(rename = "MERGED")]
    Merged,
}

impl CaseLabel {
    /// The eleven labels that apply while the decoders are split.
    pub const DIVERGED: [CaseLabel; 11] = [
        CaseLabel::C1a,
        CaseLabel::C1b,
        CaseLabel::C1c,
        CaseLabel::C2a,
        CaseLabel::C2b,
        CaseLabel::C2c,
        CaseLabel::C3a,
        CaseLabel::C3b,
        CaseLabel::C3c,
        CaseLabel::C4a,
        CaseLabel::C4b,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseLabel::PreMu => "PRE_MU",
            CaseLabel::Mu => "MU",
            CaseLabel::C1a => "1a",
            CaseLabel::C1b => "1b",
            CaseLabel::C1c => "1c",
            CaseLabel::C2a => "2a",
            CaseLabel::C2b => "2b",
            CaseLabel::C2c => "2c",
            CaseLabel::C3a => "3a",
            CaseLabel::C3b => "3b",
            CaseLabel::C3c => "3c",
            CaseLabel::C4a => "4a",
            CaseLabel::C4b => "4b",
            CaseLabel::Merged => "MERGED",
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which vertex a decoder places, or which vertex fills a slot of the
/// `(z, z*)` pair, described by its role in the current state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// The entry being read.
    Entry,
    Z,
    ZStar,
    /// `x_{a+b}`, the largest vertex of `B`.
    MaxB,
    /// `x_{a+b+c}`, the largest vertex of `C`.
    MaxC,
}

/// Predicted range of `Δ_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaPrediction {
    Exact(i8),
    NonNegative,
    Any,
}

impl DeltaPrediction {
    pub fn admits(self, delta: i8) -> bool {
        match self {
            DeltaPrediction::Exact(d) => d == delta,
            DeltaPrediction::NonNegative => delta >= 0,
            DeltaPrediction::Any => (-1..=1).contains(&delta),
        }
    }
}

/// The outcome [`CoupledState::classify_step`] predicts for the next step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub label: CaseLabel,
    /// Vertices placed in `T` and `T*`.
    pub placed: (Role, Role),
    /// The `(z, z*)` pair after the step; `None` when the decoders merge.
    pub next_pair: Option<(Role, Role)>,
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub delta: DeltaPrediction,
    /// `h_P(z) = p*_j`, evaluated in cases 2b/3b only.
    pub h_event: bool,
    /// `h_{P*}(z*) = p_j`, evaluated in cases 2b/3b only.
    pub hstar_event: bool,
    /// In cases 2b/3b: the edge joining the larger of `z, z*` to `p_j` is
    /// already in the other tree because `p_j` was attached to it there.
    pub reverse_event: bool,
}

/// Where a vertex sits relative to the two partial trees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexStatus {
    /// Unplaced in both trees.
    Common,
    /// Placed in both trees.
    Shared,
    /// Placed in `T` only.
    Z,
    /// Placed in `T*` only.
    ZStar,
}

/// The two δ/β thresholds the event flags compare against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    pub delta_n: f64,
    pub beta_n: f64,
}

impl Thresholds {
    /// `δ_n = n^{1/3}` and `β_n = n^{2/3} ln² n`.
    pub fn for_order(n: u32) -> Self {
        let nf = n as f64;
        let ln = nf.ln();
        Thresholds {
            delta_n: nf.cbrt(),
            beta_n: nf.cbrt().powi(2) * ln * ln,
        }
    }
}

/// Event indicators for one pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EventFlags {
    /// Both `p_μ, p*_μ ∈ V_{μ+1} ∪ {max X_{μ+1}}`.
    #[serde(rename = "E")]
    pub e: bool,
    /// Split at `μ` with `b(μ) < δ_n`.
    #[serde(rename = "E1")]
    pub e1: bool,
    /// `b(μ) ≥ δ_n`.
    #[serde(rename = "E2")]
    pub e2: bool,
    /// `b(τ(0)) ≥ 2^{-12} δ_n`.
    #[serde(rename = "S")]
    pub s: bool,
    /// `τ(δ_n) − τ(0) ≤ 2β_n`.
    #[serde(rename = "T1")]
    pub t1: bool,
    /// `τ(0) ≤ n − β_n`.
    #[serde(rename = "T2")]
    pub t2: bool,
    pub delta_n: f64,
    pub beta_n: f64,
}

/// How much per-step data a trace keeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Detail {
    /// Totals and flags only.
    Totals,
    /// One [`StepRecord`] per step, `O(n)` memory.
    #[default]
    Summary,
    /// Also the blocks `A`, `B`, `C` at every step, `O(n²)` memory.
    Full,
}

#[derive(Clone, Copy, Debug)]
pub struct TraceOptions {
    pub detail: Detail,
    /// Check every prediction against the decoders.
    pub verify: bool,
    pub thresholds: Option<Thresholds>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            detail: Detail::Summary,
            verify: false,
            thresholds: None,
        }
    }
}

/// The blocks `A_j`, `B_j`, `C_j` in increasing order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Blocks {
    pub a: Vec<Vertex>,
    pub b: Vec<Vertex>,
    pub c: Vec<Vertex>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub j: usize,
    pub y: Vertex,
    pub ystar: Vertex,
    #[serde(skip)]
    pub edge: Edge,
    #[serde(skip)]
    pub edgestar: Edge,
    pub delta_j: i8,
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub z: Option<Vertex>,
    pub zstar: Option<Vertex>,
    #[serde(rename = "case")]
    pub case_label: CaseLabel,
    #[serde(rename = "H")]
    pub h_event: bool,
    #[serde(rename = "Hstar")]
    pub hstar_event: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Blocks>,
}

/// Totals of a lockstep decode; what a trace keeps at [`Detail::Totals`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairOutcome {
    /// `Σ_j Δ_j`, equal to the edge distance of the two trees.
    pub delta_total: usize,
    pub flags: EventFlags,
    /// `b(μ)`, 0 under event `E`.
    pub b_mu: usize,
    /// `τ(0)`.
    pub tau0: usize,
    /// `τ(δ_n)`.
    pub tau_delta: usize,
    pub b_at_tau0: usize,
    /// Number of steps with `Δ_j = −1`.
    pub negative_steps: usize,
}

#[derive(Clone, Debug)]
pub struct DecodeTrace {
    pub pair: MutationPair,
    /// Ordered `j = n − 2` down to `0`; empty at [`Detail::Totals`].
    pub steps: Vec<StepRecord>,
    pub outcome: PairOutcome,
}

impl DecodeTrace {
    pub fn delta_total(&self) -> usize {
        self.outcome.delta_total
    }

    pub fn flags(&self) -> &EventFlags {
        &self.outcome.flags
    }

    /// `τ(z)`: the largest `j ≤ μ` (and `j ≥ 1`) with `c(j) ≤ z`.
    pub fn compute_tau(&self, z: f64) -> Result<usize, CoupledError> {
        if self.steps.is_empty() {
            return Err(CoupledError::StepsNotRecorded);
        }
        let mu = self.pair.mu();
        Ok(self
            .steps
            .iter()
            .filter(|s| s.j <= mu && s.j >= 1)
            .find(|s| s.c as f64 <= z)
            .map(|s| s.j)
            .expect("c(1) = 0 on every trace"))
    }

    /// Recomputes the event flags from the recorded steps under the given
    /// thresholds.
    pub fn detect_events(&self, delta_n: f64, beta_n: f64) -> Result<EventFlags, CoupledError> {
        let mu = self.pair.mu();
        let at = |j: usize| {
            self.steps
                .iter()
                .find(|s| s.j == j)
                .ok_or(CoupledError::StepsNotRecorded)
        };
        let at_mu = at(mu)?;
        let split = at_mu.z.is_some();
        let tau0 = self.compute_tau(0.0)?;
        let tau_delta = self.compute_tau(delta_n)?;
        let b_tau0 = at(tau0)?.b;
        Ok(flags_from(
            self.pair.n(),
            !split,
            at_mu.b,
            tau0,
            tau_delta,
            b_tau0,
            Thresholds { delta_n, beta_n },
        ))
    }
}

fn flags_from(
    n: u32,
    event_e: bool,
    b_mu: usize,
    tau0: usize,
    tau_delta: usize,
    b_tau0: usize,
    th: Thresholds,
) -> EventFlags {
    let b_mu = b_mu as f64;
    EventFlags {
        e: event_e,
        e1: !event_e && b_mu < th.delta_n,
        e2: b_mu >= th.delta_n,
        s: b_tau0 as f64 >= th.delta_n / 4096.0,
        t1: (tau_delta as f64 - tau0 as f64) <= 2.0 * th.beta_n,
        t2: tau0 as f64 <= n as f64 - th.beta_n,
        delta_n: th.delta_n,
        beta_n: th.beta_n,
    }
}

/// What one call to [`CoupledState::advance`] executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub j: usize,
    pub y: Vertex,
    pub ystar: Vertex,
    pub edge: Edge,
    pub edgestar: Edge,
    pub delta: i8,
    pub label: CaseLabel,
    /// The prediction made before the step, for split states.
    pub transition: Option<Transition>,
}

/// Fenwick tree over the indicator "unplaced in both trees".
#[derive(Clone, Debug, Default)]
struct CommonCounter {
    tree: Vec<i32>,
}

impl CommonCounter {
    fn reset(&mut self, n: u32) {
        // Vertices 1..n-1 start unplaced; n is the root.
        let len = n as usize + 1;
        self.tree.clear();
        self.tree.resize(len, 0);
        for v in 1..n as usize {
            self.tree[v] += 1;
            let parent = v + (v & v.wrapping_neg());
            if parent < len {
                self.tree[parent] += self.tree[v];
            }
        }
    }

    fn remove(&mut self, v: Vertex) {
        let mut i = v as usize;
        while i < self.tree.len() {
            self.tree[i] -= 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of common vertices `<= v`.
    fn prefix(&self, v: Vertex) -> usize {
        let (mut i, mut s) = (v as usize, 0i32);
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s as usize
    }

    /// The `k`-th smallest common vertex, 1-based.
    fn kth(&self, k: usize) -> Option<Vertex> {
        if k == 0 {
            return None;
        }
        let len = self.tree.len();
        let mut pos = 0usize;
        let mut rem = k as i32;
        let mut step = len.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next < len && self.tree[next] < rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        (pos + 1 < len).then_some((pos + 1) as Vertex)
    }
}

/// Reusable allocations for [`CoupledState`].
#[derive(Clone, Debug)]
pub struct Buffers {
    t: Decoder,
    tstar: Decoder,
    common: CommonCounter,
}

impl Buffers {
    pub fn new() -> Self {
        Buffers {
            t: Decoder::new(3),
            tstar: Decoder::new(3),
            common: CommonCounter::default(),
        }
    }
}

impl Default for Buffers {
    fn default() -> Self {
        Buffers::new()
    }
}

/// The joint state of both decoders after step `j`.
#[derive(Clone, Debug)]
pub struct CoupledState<'p> {
    pair: &'p MutationPair,
    buf: Buffers,
    verify: bool,
    j: usize,
    z: Option<Vertex>,
    zstar: Option<Vertex>,
    a: usize,
    b: usize,
    c: usize,
    merged_at: Option<usize>,
}

impl<'p> CoupledState<'p> {
    pub fn new(pair: &'p MutationPair, verify: bool) -> Self {
        CoupledState::with_buffers(pair, verify, Buffers::new())
    }

    pub fn with_buffers(pair: &'p MutationPair, verify: bool, mut buf: Buffers) -> Self {
        let n = pair.n();
        buf.t.reset(n);
        buf.tstar.reset(n);
        if verify {
            buf.common.reset(n);
        }
        CoupledState {
            pair,
            buf,
            verify,
            j: n as usize - 1,
            z: None,
            zstar: None,
            a: n as usize - 1,
            b: 0,
            c: 0,
            merged_at: None,
        }
    }

    pub fn into_buffers(self) -> Buffers {
        self.buf
    }

    pub fn pair(&self) -> &MutationPair {
        self.pair
    }

    /// Index of the last completed step (`n − 1` before any step).
    pub fn j(&self) -> usize {
        self.j
    }

    /// Whether steps remain.
    pub fn has_next(&self) -> bool {
        self.j > 0
    }

    pub fn z(&self) -> Option<Vertex> {
        self.z
    }

    pub fn zstar(&self) -> Option<Vertex> {
        self.zstar
    }

    pub fn abc(&self) -> (usize, usize, usize) {
        (self.a, self.b, self.c)
    }

    pub fn is_split(&self) -> bool {
        self.z.is_some()
    }

    pub fn status(&self, v: Vertex) -> VertexStatus {
        match (self.buf.t.is_placed(v), self.buf.tstar.is_placed(v)) {
            (false, false) => VertexStatus::Common,
            (true, true) => VertexStatus::Shared,
            (true, false) => VertexStatus::Z,
            (false, true) => VertexStatus::ZStar,
        }
    }

    fn lo_hi(&self) -> Option<(Vertex, Vertex)> {
        let (z, zs) = (self.z?, self.zstar?);
        Some((z.min(zs), z.max(zs)))
    }

    /// Whether `label`'s defining condition holds for entry `p`. Each label
    /// is tested on its own so the eleven conditions can be checked for
    /// being a partition.
    pub fn case_holds(&self, label: CaseLabel, p: Vertex) -> bool {
        let Some((lo, hi)) = self.lo_hi() else {
            return false;
        };
        let (b, c) = (self.b, self.c);
        let common = self.status(p) == VertexStatus::Common;
        let shared = self.status(p) == VertexStatus::Shared;
        match label {
            CaseLabel::C1a => common && p < lo,
            CaseLabel::C1b => common && lo < p && p < hi,
            CaseLabel::C1c => common && p > hi,
            CaseLabel::C2a => shared && b == 0 && c == 0,
            CaseLabel::C2b => shared && b > 0 && c == 0,
            CaseLabel::C2c => shared && c > 0,
            CaseLabel::C3a => p == hi && b == 0 && c == 0,
            CaseLabel::C3b => p == hi && b > 0 && c == 0,
            CaseLabel::C3c => p == hi && c > 0,
            CaseLabel::C4a => p == lo && c == 0,
            CaseLabel::C4b => p == lo && c > 0,
            CaseLabel::PreMu | CaseLabel::Mu | CaseLabel::Merged => false,
        }
    }

    /// Predicts the next step (`j − 1`) for entry `p = p_{j−1}` from the
    /// counts `(a, b, c)` and the pair `(z, z*)` alone.
    pub fn classify_step(&self, p: Vertex) -> Result<Transition, CoupledError> {
        let (z, zstar) = match (self.z, self.zstar) {
            (Some(z), Some(zs)) => (z, zs),
            _ => return Err(CoupledError::StateMerged),
        };
        let (lo, hi) = (z.min(zstar), z.max(zstar));
        let (a, b, c) = (self.a, self.b, self.c);
        let j = self.j;
        let z_is_lo = z < zstar;
        let keep = Some((Role::Z, Role::ZStar));
        let mut t = Transition {
            label: CaseLabel::C1a,
            placed: (Role::Entry, Role::Entry),
            next_pair: keep,
            a,
            b,
            c,
            delta: DeltaPrediction::Exact(0),
            h_event: false,
            hstar_event: false,
            reverse_event: false,
        };
        // After a merge |X_{j-1}| = j - 1 and all of it is block A.
        let merge = |t: &mut Transition, label| {
            t.label = label;
            t.placed = (Role::ZStar, Role::Z);
            t.next_pair = None;
            (t.a, t.b, t.c) = (j - 1, 0, 0);
            t.delta = DeltaPrediction::Any;
        };
        match self.status(p) {
            VertexStatus::Common => {
                if p < lo {
                    t.label = CaseLabel::C1a;
                    t.a -= 1;
                } else if p < hi {
                    t.label = CaseLabel::C1b;
                    t.b -= 1;
                } else {
                    t.label = CaseLabel::C1c;
                    t.c -= 1;
                }
            }
            VertexStatus::Shared if c > 0 => {
                t.label = CaseLabel::C2c;
                t.placed = (Role::MaxC, Role::MaxC);
                t.c -= 1;
            }
            VertexStatus::Shared if b > 0 => self.replace_larger_by_max_b(&mut t, CaseLabel::C2b),
            VertexStatus::Shared => merge(&mut t, CaseLabel::C2a),
            _ if p == hi => {
                if c > 0 {
                    t.label = CaseLabel::C3c;
                    if z_is_lo {
                        t.placed = (Role::ZStar, Role::MaxC);
                        t.next_pair = Some((Role::Z, Role::MaxC));
                    } else {
                        t.placed = (Role::MaxC, Role::Z);
                        t.next_pair = Some((Role::MaxC, Role::ZStar));
                    }
                    (t.b, t.c) = (b + c - 1, 0);
                    t.delta = DeltaPrediction::NonNegative;
                } else if b > 0 {
                    self.replace_larger_by_max_b(&mut t, CaseLabel::C3b);
                } else {
                    merge(&mut t, CaseLabel::C3a);
                }
            }
            _ => {
                debug_assert_eq!(p, lo);
                if c > 0 {
                    t.label = CaseLabel::C4b;
                    if z_is_lo {
                        t.placed = (Role::MaxC, Role::Z);
                        t.next_pair = Some((Role::MaxC, Role::ZStar));
                    } else {
                        t.placed = (Role::ZStar, Role::MaxC);
                        t.next_pair = Some((Role::Z, Role::MaxC));
                    }
                    (t.a, t.b, t.c) = (a + b, c - 1, 0);
                    t.delta = DeltaPrediction::NonNegative;
                } else {
                    merge(&mut t, CaseLabel::C4a);
                }
            }
        }
        // The step that reads p_μ adds different edges to the two trees, so
        // only the sign of its increment is known.
        if j == self.pair.mu() {
            t.delta = DeltaPrediction::NonNegative;
        }
        Ok(t)
    }

    /// Cases 2b and 3b: `y` is `max{z, z*}` in the tree missing it, and the
    /// other tree takes `max B`, which replaces `max{z, z*}` in the pair.
    fn replace_larger_by_max_b(&self, t: &mut Transition, label: CaseLabel) {
        let (z, zstar) = (self.z.unwrap(), self.zstar.unwrap());
        let (t_dec, ts_dec) = (&self.buf.t, &self.buf.tstar);
        let pj = self.pair.entry(self.j);
        let pj_star = self.pair.entry_star(self.j);
        t.label = label;
        t.b -= 1;
        t.c = 0;
        t.h_event = t_dec.attachment(z) == Some(pj_star);
        t.hstar_event = ts_dec.attachment(zstar) == Some(pj);
        let coincide = if z < zstar {
            t.placed = (Role::ZStar, Role::MaxB);
            t.next_pair = Some((Role::Z, Role::MaxB));
            // T gains {z*, p_j}; it is in T* if h*(z*) = p_j or h*(p_j) = z*.
            t.reverse_event = ts_dec.attachment(pj) == Some(zstar);
            t.hstar_event || t.reverse_event
        } else {
            t.placed = (Role::MaxB, Role::Z);
            t.next_pair = Some((Role::MaxB, Role::ZStar));
            t.reverse_event = t_dec.attachment(pj_star) == Some(z);
            t.h_event || t.reverse_event
        };
        t.delta = DeltaPrediction::Exact(if coincide { 0 } else { 1 });
    }

    /// The blocks `A`, `B`, `C` by a scan over all vertices.
    pub fn blocks(&self) -> Blocks {
        let n = self.pair.n();
        let mut out = Blocks::default();
        let (lo, hi) = self.lo_hi().unwrap_or((n + 1, n + 1));
        for v in (1..=n).filter(|&v| self.status(v) == VertexStatus::Common) {
            if v < lo {
                out.a.push(v);
            } else if v < hi {
                out.b.push(v);
            } else {
                out.c.push(v);
            }
        }
        out
    }

    fn resolve(&self, role: Role, p: Vertex) -> Option<Vertex> {
        match role {
            Role::Entry => Some(p),
            Role::Z => self.z,
            Role::ZStar => self.zstar,
            Role::MaxB => self.buf.common.kth(self.a + self.b),
            Role::MaxC => self.buf.common.kth(self.a + self.b + self.c),
        }
    }

    fn inconsistent(&self, step: usize, detail: String) -> CoupledError {
        CoupledError::Inconsistent { step, detail }
    }

    /// Executes step `j − 1` on both decoders and updates the state.
    pub fn advance(&mut self) -> Result<StepOutcome, CoupledError> {
        assert!(self.has_next(), "all steps already executed");
        let s = self.j - 1;
        let mu = self.pair.mu();
        let (p, pstar) = (self.pair.entry(s), self.pair.entry_star(s));
        let (attach, attach_star) = (self.pair.entry(s + 1), self.pair.entry_star(s + 1));

        let mut transition = None;
        let mut event_e = false;
        let (label, prediction) = if s > mu {
            (CaseLabel::PreMu, DeltaPrediction::Exact(0))
        } else if s == mu {
            let mx = self.buf.t.max_unplaced();
            let in_e = |q: Vertex| self.buf.t.is_placed(q) || Some(q) == mx;
            event_e = in_e(p) && in_e(pstar);
            if event_e {
                (CaseLabel::Merged, DeltaPrediction::Exact(0))
            } else {
                (CaseLabel::Mu, DeltaPrediction::Exact(1))
            }
        } else if self.is_split() {
            let tr = self.classify_step(p)?;
            transition = Some(tr);
            (tr.label, tr.delta)
        } else {
            // Merged below μ: only the step reading p_μ can differ, and only
            // when the merge happened at μ itself.
            let d = if s + 1 == mu && self.merged_at == Some(mu) {
                1
            } else {
                0
            };
            (CaseLabel::Merged, DeltaPrediction::Exact(d))
        };

        let predicted_placement = match (&transition, self.verify) {
            (Some(tr), true) => Some((
                self.resolve(tr.placed.0, p),
                self.resolve(tr.placed.1, p),
                tr.next_pair
                    .map(|(r, rs)| (self.resolve(r, p), self.resolve(rs, p))),
            )),
            _ => None,
        };

        let (t, ts) = (&mut self.buf.t, &mut self.buf.tstar);
        let y = t.choose(p);
        let ystar = ts.choose(pstar);
        let was_common = |v: Vertex| t.is_unplaced(v) && ts.is_unplaced(v);
        let (y_common, ystar_common) = (was_common(y), was_common(ystar));
        t.place(y, attach);
        ts.place(ystar, attach_star);
        let edge = Edge::new(y, attach);
        let edgestar = Edge::new(ystar, attach_star);
        let delta: i8 = if edge == edgestar {
            0
        } else {
            1 - ts.has_edge(y, attach) as i8 - t.has_edge(ystar, attach_star) as i8
        };
        if self.verify {
            if y_common {
                self.buf.common.remove(y);
            }
            if ystar_common && ystar != y {
                self.buf.common.remove(ystar);
            }
        }

        // New (z, z*) from the decoders themselves.
        let mut cands = [self.z, self.zstar, Some(y), Some(ystar)];
        cands.sort_unstable();
        let mut z_new = None;
        let mut zs_new = None;
        let mut prev = None;
        for v in cands.into_iter().flatten() {
            if Some(v) == prev {
                continue;
            }
            prev = Some(v);
            match self.status(v) {
                VertexStatus::Z if z_new.replace(v).is_some() => {
                    return Err(self.inconsistent(s, "two vertices in V \\ V*".into()))
                }
                VertexStatus::ZStar if zs_new.replace(v).is_some() => {
                    return Err(self.inconsistent(s, "two vertices in V* \\ V".into()))
                }
                _ => {}
            }
        }
        if z_new.is_some() != zs_new.is_some() {
            return Err(self.inconsistent(s, "unbalanced split".into()));
        }

        if !prediction.admits(delta) {
            return Err(
                self.inconsistent(s, format!("{label}: Δ = {delta}, predicted {prediction:?}"))
            );
        }
        if let Some((py, pys, pair)) = predicted_placement {
            if (py, pys) != (Some(y), Some(ystar)) {
                return Err(self.inconsistent(
                    s,
                    format!("{label}: placed ({y}, {ystar}), predicted ({py:?}, {pys:?})"),
                ));
            }
            let actual = z_new.zip(zs_new);
            let predicted = pair.map(|(a, b)| (a.unwrap_or(0), b.unwrap_or(0)));
            if actual != predicted {
                return Err(self.inconsistent(
                    s,
                    format!("{label}: pair {actual:?}, predicted {predicted:?}"),
                ));
            }
        }

        let was_split = self.is_split();
        self.z = z_new;
        self.zstar = zs_new;
        self.j = s;
        if s == mu && event_e == z_new.is_some() {
            return Err(self.inconsistent(s, "event E disagrees with the split".into()));
        }
        match (&transition, z_new) {
            (Some(tr), _) => (self.a, self.b, self.c) = (tr.a, tr.b, tr.c),
            (None, Some(_)) => {
                // Split created at μ: block sizes by a scan.
                let bl = self.blocks();
                (self.a, self.b, self.c) = (bl.a.len(), bl.b.len(), bl.c.len());
            }
            (None, None) => (self.a, self.b, self.c) = (s, 0, 0),
        }
        if self.z.is_none() && (was_split || s == mu) && self.merged_at.is_none() {
            self.merged_at = Some(s);
        }
        if self.verify {
            self.check_counts(s)?;
        }
        Ok(StepOutcome {
            j: s,
            y,
            ystar,
            edge,
            edgestar,
            delta,
            label,
            transition,
        })
    }

    fn check_counts(&self, s: usize) -> Result<(), CoupledError> {
        let common = &self.buf.common;
        let total = common.prefix(self.pair.n());
        let actual = match self.lo_hi() {
            Some((lo, hi)) => {
                let below_lo = common.prefix(lo - 1);
                let below_hi = common.prefix(hi - 1);
                (below_lo, below_hi - below_lo, total - below_hi)
            }
            None => (total, 0, 0),
        };
        if actual != (self.a, self.b, self.c) {
            return Err(self.inconsistent(
                s,
                format!(
                    "(a, b, c) = {actual:?}, state machine has {:?}",
                    (self.a, self.b, self.c)
                ),
            ));
        }
        let expected = if self.is_split() {
            s.saturating_sub(1)
        } else {
            s
        };
        if total != expected {
            return Err(
                self.inconsistent(s, format!("{total} common vertices, expected {expected}"))
            );
        }
        Ok(())
    }
}

/// Reusable lockstep decoder; keeps allocations between pairs.
#[derive(Debug, Default)]
pub struct CoupledDecoder {
    buf: Option<Buffers>,
}

impl CoupledDecoder {
    pub fn new() -> Self {
        CoupledDecoder::default()
    }

    fn run(
        &mut self,
        pair: &MutationPair,
        opts: &TraceOptions,
        mut sink: impl FnMut(&CoupledState<'_>, &StepOutcome),
    ) -> Result<PairOutcome, CoupledError> {
        let n = pair.n();
        let mu = pair.mu();
        let th = opts.thresholds.unwrap_or_else(|| Thresholds::for_order(n));
        let buf = self.buf.take().unwrap_or_default();
        let mut state = CoupledState::with_buffers(pair, opts.verify, buf);

        let mut total: i64 = 0;
        let mut negative = 0;
        let mut event_e = false;
        let mut b_mu = 0;
        let mut tau0 = None;
        let mut tau_delta = None;
        let mut b_tau0 = 0;
        let result = loop {
            if !state.has_next() {
                break Ok(());
            }
            let out = match state.advance() {
                Ok(o) => o,
                Err(e) => break Err(e),
            };
            total += out.delta as i64;
            if out.delta < 0 {
                negative += 1;
            }
            let j = out.j;
            if j == mu {
                event_e = !state.is_split();
                b_mu = state.b;
            }
            if j <= mu && j >= 1 {
                let c = state.c as f64;
                if tau0.is_none() && c <= 0.0 {
                    tau0 = Some(j);
                    b_tau0 = state.b;
                }
                if tau_delta.is_none() && c <= th.delta_n {
                    tau_delta = Some(j);
                }
            }
            sink(&state, &out);
        };
        self.buf = Some(state.into_buffers());
        result?;

        if opts.verify && negative > 1 {
            return Err(CoupledError::Inconsistent {
                step: 0,
                detail: format!("Δ_j = −1 at {negative} steps"),
            });
        }
        let tau0 = tau0.expect("c(1) = 0");
        let tau_delta = tau_delta.expect("c(1) = 0");
        let delta_total = usize::try_from(total).map_err(|_| CoupledError::Inconsistent {
            step: 0,
            detail: format!("negative distance {total}"),
        })?;
        Ok(PairOutcome {
            delta_total,
            flags: flags_from(n, event_e, b_mu, tau0, tau_delta, b_tau0, th),
            b_mu,
            tau0,
            tau_delta,
            b_at_tau0: b_tau0,
            negative_steps: negative,
        })
    }

    /// Totals and flags without per-step records.
    pub fn outcome(
        &mut self,
        pair: &MutationPair,
        thresholds: Option<Thresholds>,
    ) -> Result<PairOutcome, CoupledError> {
        let opts = TraceOptions {
            detail: Detail::Totals,
            verify: false,
            thresholds,
        };
        self.run(pair, &opts, |_, _| {})
    }

    pub fn trace(
        &mut self,
        pair: &MutationPair,
        opts: &TraceOptions,
    ) -> Result<DecodeTrace, CoupledError> {
        let mut steps = Vec::new();
        let detail = opts.detail;
        if detail != Detail::Totals {
            steps.reserve(pair.n() as usize - 1);
        }
        let outcome = self.run(pair, opts, |state, out| {
            if detail == Detail::Totals {
                return;
            }
            let (a, b, c) = state.abc();
            let (h, hs) = out
                .transition
                .map(|t| (t.h_event, t.hstar_event))
                .unwrap_or((false, false));
            steps.push(StepRecord {
                j: out.j,
                y: out.y,
                ystar: out.ystar,
                edge: out.edge,
                edgestar: out.edgestar,
                delta_j: out.delta,
                a,
                b,
                c,
                z: state.z(),
                zstar: state.zstar(),
                case_label: out.label,
                h_event: h,
                hstar_event: hs,
                blocks: (detail == Detail::Full).then(|| state.blocks()),
            });
        })?;
        Ok(DecodeTrace {
            pair: pair.clone(),
            steps,
            outcome,
        })
    }
}

/// Decodes `pair` in lockstep at the given detail level.
pub fn decode_pair(pair: &MutationPair, detail: Detail) -> Result<DecodeTrace, CoupledError> {
    CoupledDecoder::new().trace(
        pair,
        &TraceOptions {
            detail,
            ..TraceOptions::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::decode;
    use crate::tree::tree_distance;

    fn pair(n: u32, p: &[Vertex], mu: usize, value: Vertex) -> MutationPair {
        MutationPair::new(PruferString::new(n, p.to_vec()).unwrap(), mu, value).unwrap()
    }

    fn verified(p: &MutationPair) -> DecodeTrace {
        CoupledDecoder::new()
            .trace(
                p,
                &TraceOptions {
                    detail: Detail::Full,
                    verify: true,
                    thresholds: None,
                },
            )
            .unwrap()
    }

    #[test]
    fn seven_vertex_event_e_pair() {
        let pr = pair(7, &[4, 3, 2, 2, 7], 5, 6);
        let tr = verified(&pr);
        assert!(tr.flags().e);
        assert!(!tr.flags().e1 && !tr.flags().e2);
        assert_eq!(tr.delta_total(), 1);
        assert_eq!(tr.compute_tau(0.0).unwrap(), 5);
        assert_eq!(tr.outcome.tau0, 5);
        assert_eq!(tr.steps[0].case_label, CaseLabel::Merged);
        assert!(tr.steps.iter().all(|s| s.case_label == CaseLabel::Merged));
    }

    #[test]
    fn three_vertex_pair() {
        let tr = verified(&pair(3, &[1], 1, 2));
        assert_eq!(tr.delta_total(), 1);
    }

    #[test]
    fn invalid_pairs() {
        let p = PruferString::new(5, vec![1, 2, 3]).unwrap();
        assert!(MutationPair::new(p.clone(), 2, 2).is_err());
        assert!(MutationPair::new(p.clone(), 0, 2).is_err());
        assert!(MutationPair::new(p.clone(), 4, 2).is_err());
        assert!(MutationPair::new(p.clone(), 1, 6).is_err());
        let two_diffs = PruferString::new(5, vec![2, 3, 3]).unwrap();
        assert!(matches!(
            MutationPair::from_strings(p.clone(), &two_diffs, 1),
            Err(CoupledError::InvalidPair(_))
        ));
        let one_diff = PruferString::new(5, vec![1, 2, 5]).unwrap();
        assert!(MutationPair::from_strings(p.clone(), &one_diff, 1).is_err());
        let ok = MutationPair::from_strings(p, &one_diff, 3).unwrap();
        assert_eq!(ok.pstar(), one_diff);
    }

    // The reverse-attachment coincidence: the edge {z*, p_j} that T gains in
    // case 2b already sits in T* because p_j hung from z* there.
    #[test]
    fn case_2b_with_reverse_attachment() {
        let pr = pair(6, &[6, 2, 1, 6], 3, 4);
        let tr = verified(&pr);
        let step1 = tr.steps.iter().find(|s| s.j == 1).unwrap();
        assert_eq!(step1.case_label, CaseLabel::C2b);
        assert_eq!(step1.delta_j, 0);
        assert!(!step1.h_event && !step1.hstar_event);
        assert_eq!(tr.delta_total(), 2);
    }

    #[test]
    fn classify_examples() {
        // n = 9, μ = 7: p_7 = 1 and p*_7 = 8 split the trees with z = 1,
        // z* = 8 and B = {2..7}, C = {}.
        let pr = pair(9, &[5, 5, 5, 5, 5, 9, 1], 7, 8);
        let mut st = CoupledState::new(&pr, true);
        while st.j() > 7 {
            st.advance().unwrap();
        }
        assert_eq!((st.z(), st.zstar()), (Some(1), Some(8)));
        assert_eq!(st.abc(), (0, 6, 0));
        let tr = st.classify_step(9).unwrap();
        assert_eq!(tr.label, CaseLabel::C2b);
        assert_eq!((tr.a, tr.b, tr.c), (0, 5, 0));
        assert_eq!(st.classify_step(1).unwrap().label, CaseLabel::C4a);
        assert_eq!(st.classify_step(8).unwrap().label, CaseLabel::C3b);
        assert_eq!(st.classify_step(3).unwrap().label, CaseLabel::C1b);

        // n = 5, μ = 3: p_3 = 3 and p*_3 = 4 = max X_4 leave z = 3, z* = 4,
        // A = {1, 2} and b = c = 0, so a shared entry merges the trees.
        let pr = pair(5, &[5, 1, 3], 3, 4);
        let mut st = CoupledState::new(&pr, true);
        st.advance().unwrap();
        assert_eq!(
            (st.z(), st.zstar(), st.abc()),
            (Some(3), Some(4), (2, 0, 0))
        );
        let tr = st.classify_step(5).unwrap();
        assert_eq!(tr.label, CaseLabel::C2a);
        assert_eq!(tr.next_pair, None);
        assert_eq!((tr.a, tr.b, tr.c), (2, 0, 0));
        assert_eq!(st.classify_step(3).unwrap().label, CaseLabel::C4a);
        assert_eq!(st.classify_step(4).unwrap().label, CaseLabel::C3a);
    }

    #[test]
    fn classify_on_merged_state_fails() {
        let pr = pair(7, &[4, 3, 2, 2, 7], 5, 6);
        let mut st = CoupledState::new(&pr, false);
        st.advance().unwrap();
        assert_eq!(st.classify_step(1), Err(CoupledError::StateMerged));
    }

    #[test]
    fn detect_events_matches_streamed_flags() {
        let pr = pair(9, &[5, 5, 5, 5, 5, 9, 1], 7, 8);
        let tr = verified(&pr);
        let th = Thresholds::for_order(9);
        assert_eq!(
            tr.detect_events(th.delta_n, th.beta_n).unwrap(),
            *tr.flags()
        );
        assert!(tr.flags().e2, "b(μ) = 6 ≥ 9^(1/3)");
        let pd = decode(pr.p());
        let ps = decode(&pr.pstar());
        assert_eq!(tr.delta_total(), tree_distance(&pd, &ps).unwrap());
        // a coarser threshold flips E2 into E1
        let f = tr.detect_events(10.0, th.beta_n).unwrap();
        assert!(f.e1 && !f.e2);
    }

    #[test]
    fn totals_trace_has_no_steps() {
        let pr = pair(7, &[4, 3, 2, 2, 7], 5, 6);
        let tr = decode_pair(&pr, Detail::Totals).unwrap();
        assert!(tr.steps.is_empty());
        assert_eq!(tr.compute_tau(0.0), Err(CoupledError::StepsNotRecorded));
    }

    #[test]
    fn common_counter_kth() {
        let mut c = CommonCounter::default();
        c.reset(10);
        assert_eq!(c.prefix(10), 9);
        c.remove(3);
        c.remove(9);
        assert_eq!(c.kth(3), Some(4));
        assert_eq!(c.kth(7), Some(8));
        assert_eq!(c.kth(8), None);
        assert_eq!(c.prefix(5), 4);
    }
}
