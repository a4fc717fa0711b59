//! The general preemptive scheduler with `O(m log n)` machines, and the
//! laxity transforms used to bound how shrinking laxity affects the optimum.
//!
//! A job is *safe* from the first time its remaining work is at most
//! `α·(d_j − t)`; safe jobs enter the safe pool as residues and run under EDF.
//! Jobs that have always been tight (*critical*) are packed into groups at
//! every release date and each group is dealt round-robin onto `μ_t`
//! single-machine EDF subgroups.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigUint;
use num_integer::Integer;
use thiserror::Error;

use crate::composite::loose_edf_budget;
use crate::engine::{edf_select, simulate, OnlinePolicy, PolicyError, SimulationRun, StepContext};
use crate::model::{at_most_fraction, Instance, Job, JobId, JobState, Rational, Time};
use crate::optimum::{feasible_preemptive, optimum_preemptive_from};

/// Rational lower bound on `2 − π²/6 ≈ 0.35507` used for the laxity floor.
pub fn beta_floor() -> Rational {
    Rational::new(355, 1000)
}

/// Smallest `μ ≥ 1` with `(1−α)^μ ≤ 1/n²`.
pub fn choose_mu(n: usize, alpha: Rational) -> usize {
    let den = BigUint::from(*alpha.denom() as u64);
    let keep = BigUint::from((*alpha.denom() - *alpha.numer()) as u64);
    let n2 = BigUint::from(n as u64) * BigUint::from(n as u64);
    let mut lhs = keep.clone() * &n2;
    let mut rhs = den.clone();
    let mut mu = 1;
    while lhs > rhs {
        lhs *= &keep;
        rhs *= &den;
        mu += 1;
    }
    mu
}

/// Deals `group` (sorted by increasing deadline) round-robin onto `mu` subgroups.
pub fn split_group(group: &[JobId], mu: usize) -> Vec<Vec<JobId>> {
    let mut out = vec![Vec::new(); mu.min(group.len())];
    for (rank, &id) in group.iter().enumerate() {
        out[rank % mu].push(id);
    }
    out
}

/// First-fit grouping of the critical jobs at `t`. Jobs are scanned by
/// decreasing deadline; `j` joins the lowest-indexed group whose
/// earliest-deadline member `a` satisfies `d_j − t ≤ ℓ_a(t)`.
/// Each returned group is sorted by increasing deadline.
pub fn build_groups(critical: &[JobState], t: Time) -> Vec<Vec<JobId>> {
    let mut order: Vec<&JobState> = critical.iter().collect();
    order.sort_by_key(|s| std::cmp::Reverse(s.job.edf_key()));
    // (members in insertion order, earliest-deadline member)
    let mut groups: Vec<(Vec<&JobState>, &JobState)> = Vec::new();
    for s in order {
        let window = s.job.deadline - t;
        match groups.iter_mut().find(|(_, a)| window <= a.laxity(t)) {
            Some((members, a)) => {
                members.push(s);
                if s.job.edf_key() < a.job.edf_key() {
                    *a = s;
                }
            }
            None => groups.push((vec![s], s)),
        }
    }
    groups
        .into_iter()
        .map(|(mut members, _)| {
            members.sort_by_key(|s| s.job.edf_key());
            members.into_iter().map(|s| s.job.id).collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rebuild {
    pub t: Time,
    pub critical: usize,
    pub groups: usize,
    pub mu: usize,
    /// `h_t ≤ 1 + (2 + 2/α)·m(T̂_t)`, decided with the flow oracle.
    pub group_bound_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaxityViolation {
    pub t: Time,
    pub job: JobId,
    pub laxity: Time,
    pub original: Time,
}

pub struct LognPolicy {
    m: usize,
    alpha: Rational,
    released: usize,
    safe: BTreeMap<JobId, Job>,
    safe_m: usize,
    safe_budget: usize,
    critical: BTreeSet<JobId>,
    subgroups: Vec<Vec<JobId>>,
    mu: usize,
    peak_blocks: usize,
    peak_nonempty: usize,
    rebuilds: Vec<Rebuild>,
    floor_violations: Vec<LaxityViolation>,
    entry_violations: Vec<LaxityViolation>,
    min_laxity_ratio: Option<Rational>,
}

impl LognPolicy {
    /// `alpha` must lie in `(0, 1/2]` with `1/α` integral.
    pub fn new(m: usize, alpha: Rational) -> Result<LognPolicy, PolicyError> {
        if !(alpha > Rational::from_integer(0) && alpha <= Rational::new(1, 2) && alpha.recip().is_integer()) {
            return Err(PolicyError::Precondition(format!(
                "alpha must be in (0, 1/2] with integral 1/alpha, got {alpha}"
            )));
        }
        Ok(LognPolicy {
            m,
            alpha,
            released: 0,
            safe: BTreeMap::new(),
            safe_m: 0,
            safe_budget: 0,
            critical: BTreeSet::new(),
            subgroups: Vec::new(),
            mu: 1,
            peak_blocks: 0,
            peak_nonempty: 0,
            rebuilds: Vec::new(),
            floor_violations: Vec::new(),
            entry_violations: Vec::new(),
            min_laxity_ratio: None,
        })
    }

    pub fn safe_budget(&self) -> usize {
        self.safe_budget
    }

    /// Optimum of all residues admitted to the safe pool so far.
    pub fn safe_optimum(&self) -> usize {
        self.safe_m
    }

    pub fn rebuilds(&self) -> &[Rebuild] {
        &self.rebuilds
    }

    /// Critical jobs seen with `ℓ_j(t) < 0.355·ℓ_j`.
    pub fn floor_violations(&self) -> &[LaxityViolation] {
        &self.floor_violations
    }

    /// Jobs that entered the safe pool with `ℓ_j(t) < 0.355·ℓ_j`.
    pub fn entry_violations(&self) -> &[LaxityViolation] {
        &self.entry_violations
    }

    /// Minimum of `ℓ_j(t)/ℓ_j` over critical jobs with `ℓ_j > 0`.
    pub fn min_laxity_ratio(&self) -> Option<Rational> {
        self.min_laxity_ratio
    }

    /// Historical maximum of `h_t·μ_t`.
    pub fn critical_machines(&self) -> usize {
        self.peak_blocks
    }

    /// Largest number of simultaneously non-empty subgroups.
    pub fn peak_nonempty_subgroups(&self) -> usize {
        self.peak_nonempty
    }

    fn below_floor(laxity: Time, original: Time) -> bool {
        let b = beta_floor();
        (laxity as i128) * (*b.denom() as i128) < (original as i128) * (*b.numer() as i128)
    }

    fn admit_safe(&mut self, s: &JobState, t: Time) {
        let residue = s.job.residue(t, s.remaining);
        let lax = s.laxity(t);
        if Self::below_floor(lax, s.job.laxity()) {
            self.entry_violations.push(LaxityViolation {
                t,
                job: s.job.id,
                laxity: lax,
                original: s.job.laxity(),
            });
        }
        self.safe.insert(s.job.id, residue);
    }

    fn group_bound_holds(&self, residues: &[Job], groups: usize) -> bool {
        // fails iff m(T̂) < (h−1)/(2+2/α), i.e. m(T̂) ≤ k for the largest such integer k
        let coef = Rational::from_integer(2) + Rational::from_integer(2) / self.alpha;
        let limit = Rational::from_integer(groups as i64 - 1) / coef;
        let k = if limit.is_integer() {
            limit.to_integer() - 1
        } else {
            limit.floor().to_integer()
        };
        if k < 1 || residues.is_empty() {
            return true;
        }
        let Ok(hat) = Instance::new(residues.to_vec()) else {
            return true;
        };
        feasible_preemptive(&hat, k as usize).is_none()
    }
}

impl OnlinePolicy for LognPolicy {
    fn name(&self) -> String {
        "logn".into()
    }

    fn params(&self) -> String {
        format!("m={} alpha={}", self.m, self.alpha)
    }

    fn is_preemptive(&self) -> bool {
        true
    }

    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        let t = ctx.t;
        let states: HashMap<JobId, &JobState> = ctx.active.iter().map(|s| (s.job.id, s)).collect();
        self.released += ctx.released.len();
        let before = self.safe.len();

        let safe_now = |s: &JobState| at_most_fraction(s.remaining, self.alpha, s.job.deadline - t);
        let newly_safe: Vec<JobState> = ctx
            .released
            .iter()
            .filter_map(|j| states.get(&j.id).copied())
            .chain(self.critical.iter().filter_map(|id| states.get(id).copied()))
            .filter(|s| safe_now(s))
            .copied()
            .collect();
        for job in ctx.released {
            self.critical.insert(job.id);
        }
        for s in &newly_safe {
            self.critical.remove(&s.job.id);
            self.admit_safe(s, t);
        }
        self.critical.retain(|id| states.contains_key(id));
        let crit_set = &self.critical;
        for sub in &mut self.subgroups {
            sub.retain(|id| crit_set.contains(id));
        }

        if self.safe.len() != before {
            let l = Instance::new(self.safe.values().copied().collect())?;
            self.safe_m = optimum_preemptive_from(&l, self.safe_m).0;
            self.safe_budget = self.safe_budget.max(loose_edf_budget(self.safe_m, self.alpha));
        }

        let critical_states: Vec<JobState> = self.critical.iter().map(|id| *states[id]).collect();
        for s in &critical_states {
            let (lax, orig) = (s.laxity(t), s.job.laxity());
            if orig > 0 {
                let r = Rational::new(lax, orig);
                self.min_laxity_ratio = Some(self.min_laxity_ratio.map_or(r, |m| m.min(r)));
                if Self::below_floor(lax, orig) {
                    self.floor_violations.push(LaxityViolation {
                        t,
                        job: s.job.id,
                        laxity: lax,
                        original: orig,
                    });
                }
            }
        }

        if !ctx.released.is_empty() {
            let groups = build_groups(&critical_states, t);
            self.mu = choose_mu(self.released.max(1), self.alpha);
            let residues: Vec<Job> = critical_states
                .iter()
                .filter(|s| s.laxity(t) >= 0)
                .map(|s| s.job.residue(t, s.remaining))
                .collect();
            let holds = self.group_bound_holds(&residues, groups.len());
            self.rebuilds.push(Rebuild {
                t,
                critical: critical_states.len(),
                groups: groups.len(),
                mu: self.mu,
                group_bound_holds: holds,
            });
            self.peak_blocks = self.peak_blocks.max(groups.len() * self.mu);
            self.subgroups = groups.iter().flat_map(|g| split_group(g, self.mu)).collect();
        }
        self.peak_nonempty = self
            .peak_nonempty
            .max(self.subgroups.iter().filter(|s| !s.is_empty()).count());

        let safe_active = ctx.active.iter().filter(|s| self.safe.contains_key(&s.job.id));
        let mut out = edf_select(safe_active, self.safe_budget);
        for sub in &self.subgroups {
            out.extend(edf_select(sub.iter().map(|id| states[id]), 1));
        }
        Ok(out)
    }

    fn budget(&self) -> Option<usize> {
        Some(self.safe_budget + self.peak_blocks)
    }

    fn machines_used(&self) -> Option<usize> {
        self.budget()
    }
}

#[derive(Clone, Debug)]
pub struct LognRun {
    pub run: SimulationRun,
    pub safe_budget: usize,
    pub safe_optimum: usize,
    pub critical_machines: usize,
    pub peak_nonempty_subgroups: usize,
    pub rebuilds: Vec<Rebuild>,
    pub floor_violations: Vec<LaxityViolation>,
    pub entry_violations: Vec<LaxityViolation>,
    pub min_laxity_ratio: Option<Rational>,
}

impl LognRun {
    /// `machines_used / (m·⌈log₂ n⌉)`, with `⌈log₂ n⌉` taken as at least 1.
    pub fn constant(&self, m: usize, n: usize) -> Rational {
        let log = (usize::BITS - n.saturating_sub(1).leading_zeros()).max(1) as i64;
        Rational::new(self.run.machines_used as i64, (m.max(1) as i64) * log)
    }
}

pub fn logn_schedule(instance: &Instance, m: usize, alpha: Rational) -> Result<LognRun, PolicyError> {
    let mut policy = LognPolicy::new(m, alpha)?;
    let run = simulate(instance, &mut policy)?;
    Ok(LognRun {
        run,
        safe_budget: policy.safe_budget,
        safe_optimum: policy.safe_m,
        critical_machines: policy.peak_blocks,
        peak_nonempty_subgroups: policy.peak_nonempty,
        rebuilds: policy.rebuilds,
        floor_violations: policy.floor_violations,
        entry_violations: policy.entry_violations,
        min_laxity_ratio: policy.min_laxity_ratio,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TransformKind {
    /// Same window, `p' = p + (1−β)ℓ`.
    ScaleLaxity,
    /// Window `[r, r + (1−β/2)ℓ]`, `p' = (1−β)ℓ`.
    LeftPart,
    /// Window `[r + (1−β/2)ℓ, d]`, `p' = p`.
    RightPart,
    /// Window `[r, d − (1−γ)ℓ]`, `p' = p`.
    LeftShortened,
    /// Window `[r + (1−γ)ℓ, d]`, `p' = p`.
    RightShortened,
    /// Window `[max(r, t), d]`, `p' = p`, with `t` the parameter.
    Residue,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct LaxityTransformSpec {
    pub kind: TransformKind,
    pub param: Rational,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("parameter must lie in (0, 1), got {0}")]
    Parameter(Rational),
    #[error("residue time must be a non-negative integer, got {0}")]
    ResidueTime(Rational),
    #[error("job {0} cannot finish after the residue time")]
    ResidueInfeasible(JobId),
    #[error("scaled values overflow 64 bits")]
    Overflow,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transformed {
    pub instance: Instance,
    /// Every time of the source instance was multiplied by this factor first.
    pub scale: Time,
    /// Jobs removed because their transformed processing time is zero.
    pub dropped: Vec<JobId>,
}

fn fractions(spec: &LaxityTransformSpec) -> Vec<Rational> {
    let one = Rational::from_integer(1);
    let x = spec.param;
    match spec.kind {
        TransformKind::ScaleLaxity => vec![one - x],
        TransformKind::LeftPart | TransformKind::RightPart => vec![one - x / 2, one - x],
        TransformKind::LeftShortened | TransformKind::RightShortened => vec![one - x],
        TransformKind::Residue => vec![],
    }
}

/// Smallest factor making every `f·ℓ_j` integral.
pub fn required_scale(instance: &Instance, spec: &LaxityTransformSpec) -> Time {
    let mut s: Time = 1;
    for f in fractions(spec) {
        let den = *f.denom();
        for j in instance.jobs() {
            s = s.lcm(&(den / den.gcd(&j.laxity())));
        }
    }
    s
}

pub fn transform(instance: &Instance, spec: &LaxityTransformSpec) -> Result<Transformed, TransformError> {
    if spec.kind == TransformKind::Residue {
        if !spec.param.is_integer() || spec.param < Rational::from_integer(0) {
            return Err(TransformError::ResidueTime(spec.param));
        }
        let t = spec.param.to_integer();
        let mut jobs = Vec::new();
        let mut dropped = Vec::new();
        for j in instance.jobs() {
            if j.deadline <= t {
                dropped.push(j.id);
                continue;
            }
            let r = Job::new(j.id.0, j.release.max(t), j.deadline, j.processing)
                .map_err(|_| TransformError::ResidueInfeasible(j.id))?;
            jobs.push(r);
        }
        return Ok(Transformed {
            instance: Instance::new(jobs).expect("ids stay distinct"),
            scale: 1,
            dropped,
        });
    }
    let zero = Rational::from_integer(0);
    if spec.param <= zero || spec.param >= Rational::from_integer(1) {
        return Err(TransformError::Parameter(spec.param));
    }
    let scale = required_scale(instance, spec);
    let mut jobs = Vec::new();
    let mut dropped = Vec::new();
    let of = |f: Rational, l: Time| -> Result<Time, TransformError> {
        let v = (f * Rational::from_integer(l)).to_integer();
        Ok(v)
    };
    for src in instance.jobs() {
        let j = checked_scale(src, scale)?;
        let l = j.laxity();
        let one = Rational::from_integer(1);
        let x = spec.param;
        let (r, d, p) = match spec.kind {
            TransformKind::ScaleLaxity => (j.release, j.deadline, j.processing + of(one - x, l)?),
            TransformKind::LeftPart => (j.release, j.release + of(one - x / 2, l)?, of(one - x, l)?),
            TransformKind::RightPart => (j.release + of(one - x / 2, l)?, j.deadline, j.processing),
            TransformKind::LeftShortened => (j.release, j.deadline - of(one - x, l)?, j.processing),
            TransformKind::RightShortened => (j.release + of(one - x, l)?, j.deadline, j.processing),
            TransformKind::Residue => unreachable!(),
        };
        if p == 0 {
            dropped.push(j.id);
            continue;
        }
        jobs.push(Job::new(j.id.0, r, d, p).expect("transforms keep windows feasible"));
    }
    Ok(Transformed {
        instance: Instance::new(jobs).expect("ids stay distinct"),
        scale,
        dropped,
    })
}

fn checked_scale(j: &Job, s: Time) -> Result<Job, TransformError> {
    let f = |x: Time| x.checked_mul(s).ok_or(TransformError::Overflow);
    Ok(Job {
        id: j.id,
        release: f(j.release)?,
        deadline: f(j.deadline)?,
        processing: f(j.processing)?,
    })
}
