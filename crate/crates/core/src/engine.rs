//! Discrete-time online simulation and the base policies.
//!
//! At every integer `t` the engine hands a policy the jobs released at `t`
//! together with all active jobs, and applies one unit of processing to each
//! job the policy selects. Misses are recorded, not fatal: a job whose laxity
//! drops below zero stays active until its deadline and is then dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::composite::{Epoch, PoolUsage};
use crate::format::Trace;
use crate::model::{
    validate_nonpreemptive, validate_preemptive, Instance, Job, JobId, JobState, ModelError,
    NonpreemptiveSchedule, PreemptiveSchedule, Rational, Time, ValidationReport,
};
use crate::optimum::OracleError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("protocol violation at t={t}: job {job} {reason}")]
    Protocol {
        t: Time,
        job: JobId,
        reason: &'static str,
    },
    #[error("protocol violation at t={t}: selected {selected} jobs with budget {budget}")]
    OverBudget { t: Time, selected: usize, budget: usize },
    #[error("job {0} has odd laxity; scale the instance by 2 first")]
    OddLaxity(JobId),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What a policy sees at time `t`.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub t: Time,
    /// Jobs with `r_j = t`.
    pub released: &'a [Job],
    /// Released, unfinished jobs that have not passed their deadline, by id.
    pub active: &'a [JobState],
}

pub trait OnlinePolicy {
    fn name(&self) -> String;

    /// Human-readable parameter summary, e.g. `machines=4`.
    fn params(&self) -> String;

    fn is_preemptive(&self) -> bool;

    /// Jobs to process in `[t, t+1)`.
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError>;

    /// Current machine budget, if the policy has one.
    fn budget(&self) -> Option<usize>;

    /// Machines charged to the policy when its accounting differs from peak
    /// concurrency (sums over pools, opened blocks).
    fn machines_used(&self) -> Option<usize> {
        None
    }

    /// Per-pool accounting of composite policies.
    fn pools(&self) -> Vec<PoolUsage> {
        Vec::new()
    }

    /// Epoch trace of Double-based policies.
    fn epochs(&self) -> Vec<Epoch> {
        Vec::new()
    }
}

impl<P: OnlinePolicy + ?Sized> OnlinePolicy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn params(&self) -> String {
        (**self).params()
    }
    fn is_preemptive(&self) -> bool {
        (**self).is_preemptive()
    }
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        (**self).step(ctx)
    }
    fn budget(&self) -> Option<usize> {
        (**self).budget()
    }
    fn machines_used(&self) -> Option<usize> {
        (**self).machines_used()
    }
    fn pools(&self) -> Vec<PoolUsage> {
        (**self).pools()
    }
    fn epochs(&self) -> Vec<Epoch> {
        (**self).epochs()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotRecord {
    pub t: Time,
    /// Sorted ids processed in `[t, t+1)`.
    pub processed: Vec<JobId>,
    /// Active jobs with non-negative laxity that were not processed.
    pub idle_live: usize,
    pub budget: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Miss {
    pub time: Time,
    pub job: JobId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimulationRun {
    pub policy: String,
    pub params: String,
    pub preemptive: bool,
    pub slots: Vec<SlotRecord>,
    /// Ordered by `(time, job)`; each job at most once.
    pub misses: Vec<Miss>,
    pub machines_used: usize,
    pub peak_concurrency: usize,
    pub peak_budget: Option<usize>,
}

impl SimulationRun {
    pub fn first_miss(&self) -> Option<Miss> {
        self.misses.first().copied()
    }

    pub fn preemptive_schedule(&self) -> PreemptiveSchedule {
        let mut s = PreemptiveSchedule::new();
        for rec in &self.slots {
            for &id in &rec.processed {
                s.assign(rec.t, id);
            }
        }
        s
    }

    /// First processed slot of every job.
    pub fn nonpreemptive_schedule(&self) -> NonpreemptiveSchedule {
        let mut s = NonpreemptiveSchedule::new();
        for rec in self.slots.iter().rev() {
            for &id in &rec.processed {
                s.set_start(id, rec.t);
            }
        }
        s
    }

    pub fn trace(&self) -> Trace {
        if self.preemptive {
            Trace::Preemptive(self.preemptive_schedule())
        } else {
            Trace::Nonpreemptive(self.nonpreemptive_schedule())
        }
    }

    /// Replays the run through the matching validator.
    pub fn validate(&self, instance: &Instance) -> Result<ValidationReport, ModelError> {
        if self.preemptive {
            validate_preemptive(instance, &self.preemptive_schedule())
        } else {
            validate_nonpreemptive(instance, &self.nonpreemptive_schedule())
        }
    }

    /// Units of work processed strictly before `t`.
    pub fn work_before(&self, t: Time) -> Time {
        self.slots
            .iter()
            .take_while(|r| r.t < t)
            .map(|r| r.processed.len() as Time)
            .sum()
    }
}

pub fn simulate<P: OnlinePolicy + ?Sized>(
    instance: &Instance,
    policy: &mut P,
) -> Result<SimulationRun, PolicyError> {
    let mut releases: BTreeMap<Time, Vec<Job>> = BTreeMap::new();
    for job in instance.jobs() {
        releases.entry(job.release).or_default().push(*job);
    }
    for batch in releases.values_mut() {
        batch.sort_by_key(|j| j.id);
    }
    let preemptive = policy.is_preemptive();
    let mut active: BTreeMap<JobId, JobState> = BTreeMap::new();
    let mut previous: BTreeSet<JobId> = BTreeSet::new();
    let mut missed: BTreeSet<JobId> = BTreeSet::new();
    let mut slots = Vec::new();
    let mut misses = Vec::new();
    let mut peak_concurrency = 0;
    let mut peak_budget: Option<usize> = None;

    for t in 0..instance.d_max() {
        let released = releases.remove(&t).unwrap_or_default();
        for job in &released {
            active.insert(job.id, JobState::new(*job));
        }
        let states: Vec<JobState> = active.values().copied().collect();
        let ctx = StepContext {
            t,
            released: &released,
            active: &states,
        };
        let mut selected = policy.step(&ctx)?;
        selected.sort_unstable();
        if selected.windows(2).any(|w| w[0] == w[1]) {
            let dup = selected.windows(2).find(|w| w[0] == w[1]).unwrap()[0];
            return Err(PolicyError::Protocol {
                t,
                job: dup,
                reason: "selected twice",
            });
        }
        let budget = policy.budget();
        if let Some(b) = budget {
            if selected.len() > b {
                return Err(PolicyError::OverBudget {
                    t,
                    selected: selected.len(),
                    budget: b,
                });
            }
            peak_budget = Some(peak_budget.map_or(b, |p| p.max(b)));
        }
        let chosen: BTreeSet<JobId> = selected.iter().copied().collect();
        for &id in &selected {
            let state = active.get(&id).ok_or_else(|| PolicyError::Protocol {
                t,
                job: id,
                reason: if instance.get(id).is_some_and(|j| j.release > t) {
                    "is not released"
                } else {
                    "is not active"
                },
            })?;
            if !preemptive && state.remaining < state.job.processing && !previous.contains(&id) {
                return Err(PolicyError::Protocol {
                    t,
                    job: id,
                    reason: "resumed after an interruption",
                });
            }
        }
        if !preemptive {
            if let Some(id) = previous
                .iter()
                .find(|id| active.get(id).is_some_and(|s| !s.is_finished()) && !chosen.contains(id))
            {
                return Err(PolicyError::Protocol {
                    t,
                    job: *id,
                    reason: "was interrupted",
                });
            }
        }
        let idle_live = states
            .iter()
            .filter(|s| s.laxity(t) >= 0 && !chosen.contains(&s.job.id))
            .count();
        for id in &selected {
            active.get_mut(id).expect("checked above").remaining -= 1;
        }
        peak_concurrency = peak_concurrency.max(selected.len());
        slots.push(SlotRecord {
            t,
            processed: selected,
            idle_live,
            budget,
        });
        previous = chosen;

        let next = t + 1;
        for s in active.values() {
            if !s.is_finished() && s.laxity(next) < 0 && missed.insert(s.job.id) {
                misses.push(Miss {
                    time: next,
                    job: s.job.id,
                });
            }
        }
        active.retain(|_, s| !s.is_finished() && s.job.deadline > next);
    }
    misses.sort();
    Ok(SimulationRun {
        policy: policy.name(),
        params: policy.params(),
        preemptive,
        slots,
        misses,
        machines_used: policy.machines_used().unwrap_or(peak_concurrency),
        peak_concurrency,
        peak_budget,
    })
}

/// True iff at every step either `budget` jobs ran or no live job idled.
pub fn check_busy(run: &SimulationRun, budget: usize) -> bool {
    run.slots
        .iter()
        .all(|r| r.processed.len() >= budget || r.idle_live == 0)
}

/// The `min(|active|, m')` jobs with smallest `(d_j, r_j, id)`.
pub fn edf_select<'a>(active: impl IntoIterator<Item = &'a JobState>, budget: usize) -> Vec<JobId> {
    let mut keys: Vec<_> = active.into_iter().map(|s| s.job.edf_key()).collect();
    keys.sort_unstable();
    keys.into_iter().take(budget).map(|k| k.2).collect()
}

/// Among jobs with non-negative laxity, the `m'` with smallest `(laxity, r_j, id)`.
pub fn llf_select<'a>(
    active: impl IntoIterator<Item = &'a JobState>,
    t: Time,
    budget: usize,
) -> Vec<JobId> {
    let mut keys: Vec<_> = active
        .into_iter()
        .filter(|s| s.laxity(t) >= 0)
        .map(|s| (s.laxity(t), s.job.release, s.job.id))
        .collect();
    keys.sort_unstable();
    keys.into_iter().take(budget).map(|k| k.2).collect()
}

/// Running jobs continue; spare budget goes to the earliest-deadline waiting jobs.
pub fn edf_nonpreemptive_step<'a>(
    running: impl IntoIterator<Item = &'a JobState>,
    waiting: impl IntoIterator<Item = &'a JobState>,
    budget: usize,
) -> Vec<JobId> {
    let mut out: Vec<JobId> = running.into_iter().map(|s| s.job.id).collect();
    let spare = budget.saturating_sub(out.len());
    out.extend(edf_select(waiting, spare));
    out
}

/// Start time used by EarlyFit: the release date.
pub fn early_fit(job: &Job) -> Time {
    job.release
}

/// Start time used by MediumFit: `r_j + ℓ_j/2`. Requires even laxity.
pub fn medium_fit(job: &Job) -> Result<Time, PolicyError> {
    if job.laxity() % 2 != 0 {
        return Err(PolicyError::OddLaxity(job.id));
    }
    Ok(job.release + job.laxity() / 2)
}

fn started(s: &JobState) -> bool {
    s.remaining < s.job.processing
}

/// Preemptive EDF on a fixed (adjustable) number of machines.
#[derive(Clone, Debug)]
pub struct Edf {
    pub machines: usize,
}

impl Edf {
    pub fn new(machines: usize) -> Edf {
        Edf { machines }
    }
}

impl OnlinePolicy for Edf {
    fn name(&self) -> String {
        "edf".into()
    }
    fn params(&self) -> String {
        format!("machines={}", self.machines)
    }
    fn is_preemptive(&self) -> bool {
        true
    }
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        Ok(edf_select(ctx.active, self.machines))
    }
    fn budget(&self) -> Option<usize> {
        Some(self.machines)
    }
}

#[derive(Clone, Debug)]
pub struct Llf {
    pub machines: usize,
}

impl Llf {
    pub fn new(machines: usize) -> Llf {
        Llf { machines }
    }
}

impl OnlinePolicy for Llf {
    fn name(&self) -> String {
        "llf".into()
    }
    fn params(&self) -> String {
        format!("machines={}", self.machines)
    }
    fn is_preemptive(&self) -> bool {
        true
    }
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        Ok(llf_select(ctx.active, ctx.t, self.machines))
    }
    fn budget(&self) -> Option<usize> {
        Some(self.machines)
    }
}

/// Starts every job at its release and runs it to completion.
#[derive(Clone, Debug, Default)]
pub struct EarlyFit;

impl OnlinePolicy for EarlyFit {
    fn name(&self) -> String {
        "earlyfit".into()
    }
    fn params(&self) -> String {
        String::new()
    }
    fn is_preemptive(&self) -> bool {
        false
    }
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        Ok(ctx
            .active
            .iter()
            .filter(|s| early_fit(&s.job) <= ctx.t)
            .map(|s| s.job.id)
            .collect())
    }
    fn budget(&self) -> Option<usize> {
        None
    }
}

/// Runs every job exactly in the middle of its window.
#[derive(Clone, Debug, Default)]
pub struct MediumFit {
    starts: HashMap<JobId, Time>,
}

impl MediumFit {
    pub fn new() -> MediumFit {
        MediumFit::default()
    }
}

impl OnlinePolicy for MediumFit {
    fn name(&self) -> String {
        "mediumfit".into()
    }
    fn params(&self) -> String {
        String::new()
    }
    fn is_preemptive(&self) -> bool {
        false
    }
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        for job in ctx.released {
            self.starts.insert(job.id, medium_fit(job)?);
        }
        Ok(ctx
            .active
            .iter()
            .filter(|s| self.starts.get(&s.job.id).is_some_and(|&st| st <= ctx.t))
            .map(|s| s.job.id)
            .collect())
    }
    fn budget(&self) -> Option<usize> {
        None
    }
}

/// Non-preemptive EDF: a started job runs to completion.
#[derive(Clone, Debug)]
pub struct EdfNonpreemptive {
    pub machines: usize,
}

impl EdfNonpreemptive {
    pub fn new(machines: usize) -> EdfNonpreemptive {
        EdfNonpreemptive { machines }
    }
}

impl OnlinePolicy for EdfNonpreemptive {
    fn name(&self) -> String {
        "edf-np".into()
    }
    fn params(&self) -> String {
        format!("machines={}", self.machines)
    }
    fn is_preemptive(&self) -> bool {
        false
    }
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        let (running, waiting): (Vec<&JobState>, Vec<&JobState>) =
            ctx.active.iter().partition(|s| started(s));
        Ok(edf_nonpreemptive_step(running, waiting, self.machines))
    }
    fn budget(&self) -> Option<usize> {
        Some(self.machines)
    }
}

/// Steps at which `W_A(t) ≤ W_OPT(t) + α/(1−α)·m·(d_max − t)` fails, where
/// `W_X(t)` is the total work (released or not) that `X` has not processed
/// before `t` and `opt` is any feasible `m`-machine schedule.
pub fn load_inequality_violations(
    instance: &Instance,
    run: &SimulationRun,
    opt: &PreemptiveSchedule,
    m: usize,
    alpha: Rational,
) -> Vec<Time> {
    let d_max = instance.d_max();
    let (num, den) = (*alpha.numer() as i128, *alpha.denom() as i128);
    let mut opt_per_slot: BTreeMap<Time, i128> = BTreeMap::new();
    for (t, ids) in opt.slots() {
        *opt_per_slot.entry(t).or_default() += ids.len() as i128;
    }
    let alg_per_slot: BTreeMap<Time, i128> =
        run.slots.iter().map(|r| (r.t, r.processed.len() as i128)).collect();
    let mut done_opt = 0i128;
    let mut done_alg = 0i128;
    let mut bad = Vec::new();
    for t in 0..=d_max {
        // W_A - W_OPT = done_OPT - done_A
        let gap = done_opt - done_alg;
        if gap * (den - num) > num * m as i128 * (d_max - t) as i128 {
            bad.push(t);
        }
        done_opt += opt_per_slot.get(&t).copied().unwrap_or(0);
        done_alg += alg_per_slot.get(&t).copied().unwrap_or(0);
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(triples: &[(Time, Time, Time)]) -> Instance {
        Instance::from_triples(triples).unwrap()
    }

    fn state(id: u32, r: Time, d: Time, p: Time) -> JobState {
        JobState::new(Job::new(id, r, d, p).unwrap())
    }

    #[test]
    fn edf_examples() {
        let run = simulate(&inst(&[(0, 2, 1)]), &mut Edf::new(1)).unwrap();
        assert_eq!(run.first_miss(), None);
        assert_eq!(run.machines_used, 1);
        let run = simulate(&inst(&[(0, 1, 1), (0, 1, 1)]), &mut Edf::new(1)).unwrap();
        assert_eq!(run.first_miss(), Some(Miss { time: 1, job: JobId(1) }));
    }

    #[test]
    fn edf_select_examples() {
        let a = state(0, 0, 5, 1);
        let b = state(1, 0, 3, 1);
        let c = state(2, 0, 7, 1);
        assert_eq!(edf_select([&a, &b, &c], 2), vec![JobId(1), JobId(0)]);
        let early = state(5, 0, 4, 1);
        let late = state(3, 1, 4, 1);
        assert_eq!(edf_select([&late, &early], 1), vec![JobId(5)]);
        assert!(edf_select([&a], 0).is_empty());
    }

    #[test]
    fn llf_select_examples() {
        // laxities at t=0: a=2, b=0, c=1
        let a = state(0, 0, 3, 1);
        let b = state(1, 0, 2, 2);
        let c = state(2, 0, 3, 2);
        assert_eq!(llf_select([&a, &b, &c], 0, 2), vec![JobId(1), JobId(2)]);
        let mut doomed = state(0, 0, 2, 2);
        doomed.remaining = 2;
        let fine = state(1, 0, 5, 1);
        // at t=1 the first job has laxity -1
        assert_eq!(llf_select([&doomed, &fine], 1, 2), vec![JobId(1)]);
        let x = state(4, 0, 5, 1);
        let y = state(2, 0, 5, 1);
        assert_eq!(llf_select([&x, &y], 0, 1), vec![JobId(2)]);
    }

    #[test]
    fn edf_nonpreemptive_examples() {
        let mut a = state(0, 0, 9, 3);
        a.remaining = 2;
        let b = state(1, 0, 4, 1);
        let c = state(2, 0, 3, 1);
        assert_eq!(edf_nonpreemptive_step([&a], [&b, &c], 2), vec![JobId(0), JobId(2)]);
        assert_eq!(edf_nonpreemptive_step([&a], [&b, &c], 1), vec![JobId(0)]);
    }

    #[test]
    fn fit_start_times() {
        assert_eq!(early_fit(&Job::new(0, 3, 9, 4).unwrap()), 3);
        assert_eq!(medium_fit(&Job::new(0, 0, 10, 4).unwrap()), Ok(3));
        assert_eq!(medium_fit(&Job::new(0, 0, 5, 5).unwrap()), Ok(0));
        assert_eq!(
            medium_fit(&Job::new(7, 0, 5, 4).unwrap()),
            Err(PolicyError::OddLaxity(JobId(7)))
        );
    }

    #[test]
    fn early_and_medium_fit_runs() {
        let i = inst(&[(3, 9, 4)]);
        let run = simulate(&i, &mut EarlyFit).unwrap();
        assert_eq!(run.nonpreemptive_schedule().start(JobId(0)), Some(3));
        let i = inst(&[(0, 10, 4)]);
        let run = simulate(&i, &mut MediumFit::new()).unwrap();
        assert_eq!(run.nonpreemptive_schedule().start(JobId(0)), Some(3));
        assert!(run.validate(&i).unwrap().feasible);
    }

    #[test]
    fn busy_checks() {
        let i = inst(&[(0, 4, 2), (0, 4, 2), (1, 3, 1)]);
        assert!(check_busy(&simulate(&i, &mut Edf::new(2)).unwrap(), 2));
        assert!(check_busy(&simulate(&i, &mut Llf::new(2)).unwrap(), 2));
        // MediumFit idles the first job for one slot
        let lazy = simulate(&inst(&[(0, 4, 2)]), &mut MediumFit::new()).unwrap();
        assert!(!check_busy(&lazy, 1));
    }

    struct Rogue(JobId);

    impl OnlinePolicy for Rogue {
        fn name(&self) -> String {
            "rogue".into()
        }
        fn params(&self) -> String {
            String::new()
        }
        fn is_preemptive(&self) -> bool {
            true
        }
        fn step(&mut self, _: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
            Ok(vec![self.0])
        }
        fn budget(&self) -> Option<usize> {
            None
        }
    }

    #[test]
    fn protocol_violations() {
        let i = inst(&[(0, 2, 1), (1, 3, 1)]);
        let err = simulate(&i, &mut Rogue(JobId(1))).unwrap_err();
        assert_eq!(
            err,
            PolicyError::Protocol {
                t: 0,
                job: JobId(1),
                reason: "is not released"
            }
        );
        let err = simulate(&inst(&[(0, 3, 1)]), &mut Rogue(JobId(0))).unwrap_err();
        assert!(matches!(err, PolicyError::Protocol { t: 1, reason: "is not active", .. }));
    }

    #[test]
    fn misses_continue_after_first() {
        let i = inst(&[(0, 1, 1), (0, 1, 1), (0, 1, 1), (1, 3, 2)]);
        let run = simulate(&i, &mut Edf::new(1)).unwrap();
        assert_eq!(run.misses.len(), 2);
        assert_eq!(run.first_miss().unwrap().time, 1);
        assert!(run.slots.iter().any(|r| r.processed == vec![JobId(3)]));
        assert!(!run.validate(&i).unwrap().feasible);
    }

    #[test]
    fn run_replay_matches_validator() {
        let i = inst(&[(0, 5, 3), (1, 4, 2), (2, 9, 4), (0, 3, 3), (6, 9, 2)]);
        for m in 1..4 {
            let run = simulate(&i, &mut Edf::new(m)).unwrap();
            assert_eq!(run.first_miss().is_none(), run.validate(&i).unwrap().feasible);
        }
    }

    #[test]
    fn load_inequality_on_tiny_run() {
        let i = inst(&[(0, 8, 2), (0, 8, 2), (2, 8, 1)]);
        let (m, opt) = crate::optimum::optimum_preemptive_with_witness(&i);
        let run = simulate(&i, &mut Edf::new(4 * m)).unwrap();
        assert!(load_inequality_violations(&i, &run, &opt, m, Rational::new(1, 2)).is_empty());
        // an algorithm that idles everything breaks the inequality
        let mut idle = run.clone();
        idle.slots.iter_mut().for_each(|r| r.processed.clear());
        assert!(!load_inequality_violations(&i, &idle, &opt, m, Rational::new(1, 2)).is_empty());
    }
}
