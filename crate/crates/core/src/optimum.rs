//! Exact offline optima.
//!
//! * `feasible_preemptive` / `optimum_preemptive`: max-flow over the
//!   compressed time axis, with a slot-level witness schedule.
//! * `strong_density_exact`: exhaustive maximisation of mandatory workload per
//!   unit length over slot subsets. Independent of the flow oracle.
//! * `optimum_nonpreemptive_exact`: branch and bound over start times.

use num_integer::Integer;
use rayon::prelude::*;
use thiserror::Error;

use crate::flow::{ArcId, MaxFlow};
use crate::model::{Instance, Job, JobId, NonpreemptiveSchedule, PreemptiveSchedule, Rational, Time};

pub const DEFAULT_DENSITY_CAP: usize = 20;
pub const DEFAULT_NONPREEMPTIVE_CAP: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance too large for exact enumeration: {what} is {actual}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        actual: usize,
        cap: usize,
    },
    #[error("processing times are not all equal")]
    UnequalProcessing,
    #[error("invalid interval set: {0}")]
    InvalidIntervals(&'static str),
}

/// Horn's flow network. Time is compressed into segments between
/// consecutive release/deadline points; a job feeds a segment with capacity
/// equal to its length and a segment drains `m * length` into the sink.
pub struct FlowNetwork {
    jobs: Vec<Job>,
    segments: Vec<(Time, Time)>,
    graph: MaxFlow,
    source: usize,
    sink: usize,
    job_arcs: Vec<Vec<(usize, ArcId)>>,
    demand: i64,
}

impl FlowNetwork {
    pub fn new(instance: &Instance, machines: usize) -> FlowNetwork {
        let mut jobs: Vec<Job> = instance.jobs().to_vec();
        jobs.sort_by_key(|j| j.id);
        let mut points: Vec<Time> = jobs.iter().flat_map(|j| [j.release, j.deadline]).collect();
        points.sort_unstable();
        points.dedup();
        let segments: Vec<(Time, Time)> = points
            .windows(2)
            .map(|w| (w[0], w[1]))
            .filter(|&(a, b)| jobs.iter().any(|j| j.release <= a && b <= j.deadline))
            .collect();

        let source = 0;
        let sink = 1;
        let job_base = 2;
        let seg_base = job_base + jobs.len();
        let mut graph = MaxFlow::new(seg_base + segments.len());
        for (k, &(a, b)) in segments.iter().enumerate() {
            graph.add_edge(seg_base + k, sink, machines as i64 * (b - a));
        }
        let mut job_arcs = Vec::with_capacity(jobs.len());
        for (i, job) in jobs.iter().enumerate() {
            graph.add_edge(source, job_base + i, job.processing);
            let arcs = segments
                .iter()
                .enumerate()
                .filter(|(_, &(a, b))| job.release <= a && b <= job.deadline)
                .map(|(k, &(a, b))| (k, graph.add_edge(job_base + i, seg_base + k, b - a)))
                .collect();
            job_arcs.push(arcs);
        }
        let demand = jobs.iter().map(|j| j.processing).sum();
        FlowNetwork {
            jobs,
            segments,
            graph,
            source,
            sink,
            job_arcs,
            demand,
        }
    }

    pub fn segments(&self) -> &[(Time, Time)] {
        &self.segments
    }

    /// Runs max-flow; returns the witness iff the demand is saturated.
    pub fn solve(mut self) -> Option<PreemptiveSchedule> {
        let flow = self.graph.run(self.source, self.sink);
        (flow == self.demand).then(|| self.witness())
    }

    /// Wrap-around fill inside each segment: amounts never exceed the
    /// segment length, so no job lands twice in one slot.
    fn witness(&self) -> PreemptiveSchedule {
        let mut per_segment: Vec<Vec<(JobId, i64)>> = vec![Vec::new(); self.segments.len()];
        for (job, arcs) in self.jobs.iter().zip(&self.job_arcs) {
            for &(k, arc) in arcs {
                let f = self.graph.flow(arc);
                if f > 0 {
                    per_segment[k].push((job.id, f));
                }
            }
        }
        let mut schedule = PreemptiveSchedule::new();
        for (&(a, b), amounts) in self.segments.iter().zip(per_segment) {
            let len = b - a;
            let mut pos = 0;
            for (id, amount) in amounts {
                for k in 0..amount {
                    schedule.assign(a + (pos + k) % len, id);
                }
                pos += amount;
            }
        }
        schedule
    }
}

/// Feasibility on `m` machines with preemption; `Some(witness)` iff feasible.
pub fn feasible_preemptive(instance: &Instance, machines: usize) -> Option<PreemptiveSchedule> {
    if instance.is_empty() {
        return Some(PreemptiveSchedule::new());
    }
    if machines == 0 {
        return None;
    }
    FlowNetwork::new(instance, machines).solve()
}

pub fn is_feasible_preemptive(instance: &Instance, machines: usize) -> bool {
    feasible_preemptive(instance, machines).is_some()
}

/// `⌈Σ p_j / (d_max - r_min)⌉`, a valid lower bound on the optimum.
fn volume_lower_bound(instance: &Instance) -> usize {
    let span = instance.d_max() - instance.min_release();
    if span <= 0 {
        return 0;
    }
    Integer::div_ceil(&instance.total_work(), &span) as usize
}

/// Minimum machine count for the preemptive problem; 0 for the empty instance.
pub fn optimum_preemptive(instance: &Instance) -> usize {
    optimum_preemptive_with_witness(instance).0
}

pub fn optimum_preemptive_with_witness(instance: &Instance) -> (usize, PreemptiveSchedule) {
    optimum_preemptive_from(instance, 1)
}

/// Like [`optimum_preemptive_with_witness`] when `lower` is already known to
/// be a lower bound (e.g. the optimum of a subset).
pub fn optimum_preemptive_from(instance: &Instance, lower: usize) -> (usize, PreemptiveSchedule) {
    if instance.is_empty() {
        return (0, PreemptiveSchedule::new());
    }
    let mut lo = lower.max(volume_lower_bound(instance)).max(1);
    let mut hi = instance.len().max(lo);
    if let Some(w) = feasible_preemptive(instance, lo) {
        return (lo, w);
    }
    let mut best = feasible_preemptive(instance, hi).expect("one machine per job is always feasible");
    lo += 1;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match feasible_preemptive(instance, mid) {
            Some(w) => {
                hi = mid;
                best = w;
            }
            None => lo = mid + 1,
        }
    }
    (hi, best)
}

/// Pairwise disjoint intervals `[a, b]` with integral endpoints, sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalSet {
    intervals: Vec<(Time, Time)>,
}

impl IntervalSet {
    pub fn new(mut intervals: Vec<(Time, Time)>) -> Result<IntervalSet, OracleError> {
        if intervals.is_empty() {
            return Err(OracleError::InvalidIntervals("empty"));
        }
        if intervals.iter().any(|&(a, b)| a >= b) {
            return Err(OracleError::InvalidIntervals("interval with a >= b"));
        }
        intervals.sort_unstable();
        if intervals.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(OracleError::InvalidIntervals("overlapping intervals"));
        }
        Ok(IntervalSet { intervals })
    }

    /// Maximal runs of the given unit slots `[t, t+1]`.
    pub fn from_slots(slots: impl IntoIterator<Item = Time>) -> IntervalSet {
        let mut slots: Vec<Time> = slots.into_iter().collect();
        slots.sort_unstable();
        slots.dedup();
        let mut intervals: Vec<(Time, Time)> = Vec::new();
        for t in slots {
            match intervals.last_mut() {
                Some(last) if last.1 == t => last.1 = t + 1,
                _ => intervals.push((t, t + 1)),
            }
        }
        IntervalSet { intervals }
    }

    pub fn intervals(&self) -> &[(Time, Time)] {
        &self.intervals
    }

    pub fn length(&self) -> Time {
        self.intervals.iter().map(|&(a, b)| b - a).sum()
    }

    /// `|(∪ intervals) ∩ [from, to]|`.
    pub fn overlap(&self, from: Time, to: Time) -> Time {
        self.intervals
            .iter()
            .map(|&(a, b)| (b.min(to) - a.max(from)).max(0))
            .sum()
    }
}

/// Least volume of `job` that any feasible schedule places inside the set.
pub fn contribution(job: &Job, iset: &IntervalSet) -> Time {
    (iset.overlap(job.release, job.deadline) - job.laxity()).max(0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrongDensity {
    pub value: Rational,
    /// Lexicographically first maximiser over occupied slots.
    pub witness: IntervalSet,
}

pub fn strong_density_exact(instance: &Instance) -> Result<StrongDensity, OracleError> {
    strong_density_exact_with_cap(instance, DEFAULT_DENSITY_CAP)
}

/// Maximum over non-empty subsets ℐ of occupied unit slots of `Σ Γ_j(ℐ) / |ℐ|`.
pub fn strong_density_exact_with_cap(
    instance: &Instance,
    cap: usize,
) -> Result<StrongDensity, OracleError> {
    let mut occupied: Vec<Time> = instance
        .jobs()
        .iter()
        .flat_map(|j| j.release..j.deadline)
        .collect();
    occupied.sort_unstable();
    occupied.dedup();
    if occupied.len() > cap.min(63) {
        return Err(OracleError::CapExceeded {
            what: "occupied slots",
            actual: occupied.len(),
            cap,
        });
    }
    if occupied.is_empty() {
        return Err(OracleError::InvalidIntervals("instance has no slots"));
    }
    let k = occupied.len();
    let windows: Vec<(u64, i64)> = instance
        .jobs()
        .iter()
        .map(|j| {
            let mask = occupied
                .iter()
                .enumerate()
                .filter(|(_, &t)| j.contains_slot(t))
                .fold(0u64, |m, (i, _)| m | (1 << i));
            (mask, j.laxity())
        })
        .collect();

    let score = |set: u64| -> i64 {
        windows
            .iter()
            .map(|&(w, lax)| ((set & w).count_ones() as i64 - lax).max(0))
            .sum()
    };
    // (numerator, length, mask); prefers the larger ratio, then the smaller mask.
    let better = |a: (i64, i64, u64), b: (i64, i64, u64)| -> (i64, i64, u64) {
        let lhs = a.0 as i128 * b.1 as i128;
        let rhs = b.0 as i128 * a.1 as i128;
        if lhs > rhs || (lhs == rhs && a.2 < b.2) {
            a
        } else {
            b
        }
    };
    let total: u64 = 1 << k;
    let chunk: u64 = 1 << 12;
    let best = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let lo = (c * chunk).max(1);
            let hi = ((c + 1) * chunk).min(total);
            (lo..hi).fold((0i64, 1i64, u64::MAX), |acc, set| {
                better((score(set), set.count_ones() as i64, set), acc)
            })
        })
        .reduce(|| (0, 1, u64::MAX), better);

    let (num, len, mask) = best;
    let slots = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| occupied[i]);
    Ok(StrongDensity {
        value: Rational::new(num, len),
        witness: IntervalSet::from_slots(slots),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DensityCheck {
    pub strong_density: Rational,
    pub ceiling: usize,
    pub optimum: usize,
}

impl DensityCheck {
    pub fn holds(&self) -> bool {
        self.ceiling == self.optimum
    }
}

/// Compares `⌈ρ_s⌉` against the flow optimum.
pub fn check_strong_density_theorem(instance: &Instance) -> Result<DensityCheck, OracleError> {
    let rho = strong_density_exact(instance)?.value;
    Ok(DensityCheck {
        strong_density: rho,
        ceiling: rho.ceil().to_integer() as usize,
        optimum: optimum_preemptive(instance),
    })
}

pub fn optimum_nonpreemptive_exact(instance: &Instance) -> Result<usize, OracleError> {
    optimum_nonpreemptive_with_cap(instance, DEFAULT_NONPREEMPTIVE_CAP).map(|(m, _)| m)
}

/// Branch and bound over start times, jobs ordered by `(d_j, r_j)`;
/// a branch is cut as soon as its running overlap reaches the incumbent.
pub fn optimum_nonpreemptive_with_cap(
    instance: &Instance,
    cap: usize,
) -> Result<(usize, NonpreemptiveSchedule), OracleError> {
    if instance.len() > cap {
        return Err(OracleError::CapExceeded {
            what: "jobs",
            actual: instance.len(),
            cap,
        });
    }
    if instance.is_empty() {
        return Ok((0, NonpreemptiveSchedule::new()));
    }
    let mut jobs: Vec<Job> = instance.jobs().to_vec();
    jobs.sort_by_key(|j| j.edf_key());
    let origin = instance.min_release();
    let horizon = (instance.d_max() - origin) as usize;

    let mut search = NpSearch {
        same_as_prev: (0..jobs.len())
            .map(|i| {
                i > 0
                    && (jobs[i].release, jobs[i].deadline, jobs[i].processing)
                        == (jobs[i - 1].release, jobs[i - 1].deadline, jobs[i - 1].processing)
            })
            .collect(),
        occ: vec![0; horizon],
        origin,
        starts: vec![0; jobs.len()],
        best: usize::MAX,
        best_starts: Vec::new(),
        lower: optimum_preemptive(instance),
        jobs,
    };
    let early_fit: Vec<Time> = search.jobs.iter().map(|j| j.release).collect();
    let early_np = {
        let mut s = NonpreemptiveSchedule::new();
        for (j, &st) in search.jobs.iter().zip(&early_fit) {
            s.set_start(j.id, st);
        }
        s.machines_used(instance)
    };
    search.best = early_np;
    search.best_starts = early_fit;
    if search.best > search.lower {
        search.dfs(0, 0);
    }
    let mut schedule = NonpreemptiveSchedule::new();
    for (j, &s) in search.jobs.iter().zip(&search.best_starts) {
        schedule.set_start(j.id, s);
    }
    Ok((search.best, schedule))
}

struct NpSearch {
    jobs: Vec<Job>,
    same_as_prev: Vec<bool>,
    occ: Vec<u32>,
    origin: Time,
    starts: Vec<Time>,
    best: usize,
    best_starts: Vec<Time>,
    lower: usize,
}

impl NpSearch {
    fn peak(&self, start: Time, len: Time) -> usize {
        let a = (start - self.origin) as usize;
        self.occ[a..a + len as usize].iter().copied().max().unwrap_or(0) as usize
    }

    fn place(&mut self, start: Time, len: Time, delta: i32) {
        let a = (start - self.origin) as usize;
        for c in &mut self.occ[a..a + len as usize] {
            *c = (*c as i32 + delta) as u32;
        }
    }

    /// Returns true once the incumbent matches the lower bound.
    fn dfs(&mut self, idx: usize, current: usize) -> bool {
        if idx == self.jobs.len() {
            if current < self.best {
                self.best = current;
                self.best_starts = self.starts.clone();
            }
            return self.best <= self.lower;
        }
        let job = self.jobs[idx];
        let first = if self.same_as_prev[idx] {
            job.release.max(self.starts[idx - 1])
        } else {
            job.release
        };
        let mut candidates: Vec<(usize, Time)> = (first..=job.deadline - job.processing)
            .map(|s| (current.max(self.peak(s, job.processing) + 1), s))
            .filter(|&(value, _)| value < self.best)
            .collect();
        candidates.sort_unstable();
        for (value, s) in candidates {
            if value >= self.best {
                break;
            }
            self.place(s, job.processing, 1);
            self.starts[idx] = s;
            let done = self.dfs(idx + 1, value);
            self.place(s, job.processing, -1);
            if done {
                return true;
            }
        }
        false
    }
}

/// `p · max |{j : [r_j, d_j] ⊆ [a, b]}| / (b - a)` over `a ∈ {0} ∪ releases`,
/// `b ∈ deadlines`; a lower bound on the optimum for equal processing times.
pub fn density_equal_p(jobs: &[Job], p: Time) -> Result<Rational, OracleError> {
    if jobs.iter().any(|j| j.processing != p) {
        return Err(OracleError::UnequalProcessing);
    }
    let mut starts: Vec<Time> = jobs.iter().map(|j| j.release).chain([0]).collect();
    starts.sort_unstable();
    starts.dedup();
    let mut best = Rational::from_integer(0);
    for &a in &starts {
        let mut ends: Vec<Time> = jobs
            .iter()
            .filter(|j| j.release >= a)
            .map(|j| j.deadline)
            .collect();
        ends.sort_unstable();
        for (i, &b) in ends.iter().enumerate() {
            // count jobs with deadline <= b: the last index holding b
            if i + 1 < ends.len() && ends[i + 1] == b {
                continue;
            }
            let count = (i + 1) as i64;
            let value = Rational::new(p * count, b - a);
            if value > best {
                best = value;
            }
        }
    }
    Ok(best)
}

/// `⌈x⌉` for a non-negative rational, as a machine count.
pub fn ceil_count(x: Rational) -> usize {
    let (q, r) = x.numer().div_rem(x.denom());
    (q + i64::from(r > 0)) as usize
}
