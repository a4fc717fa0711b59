//! Schedulers assembled from the engine policies: tightness splitters, the
//! Double reduction, and the agreeable / equal-p / uniform-deadline families.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::engine::{
    edf_select, simulate, EarlyFit, Edf, EdfNonpreemptive, Llf, MediumFit, OnlinePolicy, PolicyError,
    SimulationRun, StepContext,
};
use crate::model::{Instance, Job, JobId, JobState, NonpreemptiveSchedule, Rational, Tightness, Time};
use crate::optimum::{
    ceil_count, density_equal_p, optimum_nonpreemptive_exact, optimum_nonpreemptive_with_cap,
    optimum_preemptive, optimum_preemptive_from, OracleError, DEFAULT_NONPREEMPTIVE_CAP,
};

/// Machines charged to one pool of a composite run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolUsage {
    pub name: String,
    pub params: String,
    pub jobs: usize,
    pub machines: usize,
}

/// One epoch of the Double reduction.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Epoch {
    pub start: Time,
    /// `m(t_i)`.
    pub m: usize,
    /// Machines opened at `t_i`: `⌈2·a·m(t_i)⌉`.
    pub block: usize,
}

/// Disjoint pools; each job belongs to exactly one.
#[derive(Default)]
pub struct PoolSet {
    pools: Vec<Box<dyn OnlinePolicy + Send>>,
    owner: HashMap<JobId, usize>,
    jobs: Vec<usize>,
    peak: Vec<usize>,
}

impl PoolSet {
    pub fn new() -> PoolSet {
        PoolSet::default()
    }

    pub fn push(&mut self, policy: Box<dyn OnlinePolicy + Send>) -> usize {
        self.pools.push(policy);
        self.jobs.push(0);
        self.peak.push(0);
        self.pools.len() - 1
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn assign(&mut self, job: JobId, pool: usize) {
        if self.owner.insert(job, pool).is_none() {
            self.jobs[pool] += 1;
        }
    }

    pub fn owner(&self, job: JobId) -> Option<usize> {
        self.owner.get(&job).copied()
    }

    pub fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        let mut out = Vec::new();
        for k in 0..self.pools.len() {
            let released: Vec<Job> = ctx
                .released
                .iter()
                .filter(|j| self.owner.get(&j.id) == Some(&k))
                .copied()
                .collect();
            let active: Vec<JobState> = ctx
                .active
                .iter()
                .filter(|s| self.owner.get(&s.job.id) == Some(&k))
                .copied()
                .collect();
            let sub = StepContext {
                t: ctx.t,
                released: &released,
                active: &active,
            };
            let picked = self.pools[k].step(&sub)?;
            if let Some(b) = self.pools[k].budget() {
                if picked.len() > b {
                    return Err(PolicyError::OverBudget {
                        t: ctx.t,
                        selected: picked.len(),
                        budget: b,
                    });
                }
            }
            if let Some(&foreign) = picked.iter().find(|id| self.owner.get(id) != Some(&k)) {
                return Err(PolicyError::Protocol {
                    t: ctx.t,
                    job: foreign,
                    reason: "was selected by a pool that does not own it",
                });
            }
            self.peak[k] = self.peak[k].max(picked.len());
            out.extend(picked);
        }
        Ok(out)
    }

    pub fn budget(&self) -> Option<usize> {
        self.pools.iter().map(|p| p.budget()).sum()
    }

    pub fn machines(&self) -> usize {
        (0..self.pools.len()).map(|k| self.pool_machines(k)).sum()
    }

    fn pool_machines(&self, k: usize) -> usize {
        self.pools[k].machines_used().unwrap_or(self.peak[k])
    }

    pub fn usage(&self) -> Vec<PoolUsage> {
        (0..self.pools.len())
            .map(|k| PoolUsage {
                name: self.pools[k].name(),
                params: self.pools[k].params(),
                jobs: self.jobs[k],
                machines: self.pool_machines(k),
            })
            .collect()
    }

    pub fn epochs(&self) -> Vec<Epoch> {
        self.pools.iter().flat_map(|p| p.epochs()).collect()
    }

    fn any_preemptive(&self) -> bool {
        self.pools.iter().any(|p| p.is_preemptive())
    }
}

type Router = Box<dyn Fn(&Job) -> usize + Send>;

/// Routes each job once, at release, to one of several disjoint pools.
pub struct SplitScheduler {
    name: String,
    router: Router,
    pools: PoolSet,
}

impl SplitScheduler {
    pub fn new(name: impl Into<String>, router: Router, pools: Vec<Box<dyn OnlinePolicy + Send>>) -> Self {
        let mut set = PoolSet::new();
        for p in pools {
            set.push(p);
        }
        SplitScheduler {
            name: name.into(),
            router,
            pools: set,
        }
    }

    /// Pool 0 takes the α-loose jobs, pool 1 the α-tight ones.
    pub fn by_tightness(
        name: impl Into<String>,
        alpha: Rational,
        loose: Box<dyn OnlinePolicy + Send>,
        tight: Box<dyn OnlinePolicy + Send>,
    ) -> Self {
        let router: Router = Box::new(move |job| match JobState::new(*job).classify(alpha) {
            Tightness::Loose => 0,
            Tightness::Tight => 1,
        });
        SplitScheduler::new(name, router, vec![loose, tight])
    }

    pub fn owner(&self, job: JobId) -> Option<usize> {
        self.pools.owner(job)
    }
}

impl OnlinePolicy for SplitScheduler {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn params(&self) -> String {
        self.pools
            .usage()
            .iter()
            .map(|u| format!("{}[{}]", u.name, u.params))
            .collect::<Vec<_>>()
            .join("+")
    }

    fn is_preemptive(&self) -> bool {
        self.pools.any_preemptive()
    }

    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        for job in ctx.released {
            let k = (self.router)(job);
            self.pools.assign(job.id, k);
        }
        self.pools.step(ctx)
    }

    fn budget(&self) -> Option<usize> {
        self.pools.budget()
    }

    fn machines_used(&self) -> Option<usize> {
        Some(self.pools.machines())
    }

    fn pools(&self) -> Vec<PoolUsage> {
        self.pools.usage()
    }

    fn epochs(&self) -> Vec<Epoch> {
        self.pools.epochs()
    }
}

/// How Double computes the running optimum `m(t)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum OptimumOracle {
    Preemptive,
    Nonpreemptive { cap: usize },
}

impl OptimumOracle {
    fn evaluate(self, instance: &Instance, lower: usize) -> Result<usize, OracleError> {
        match self {
            OptimumOracle::Preemptive => Ok(optimum_preemptive_from(instance, lower).0),
            OptimumOracle::Nonpreemptive { cap } => {
                optimum_nonpreemptive_with_cap(instance, cap).map(|(m, _)| m)
            }
        }
    }
}

type Factory = Box<dyn FnMut(usize) -> Box<dyn OnlinePolicy + Send> + Send>;

/// Turns a semi-online policy with factor `a` into an online one. Whenever
/// `m(t) > 2·m(t_{i-1})` a new epoch opens `⌈2·a·m(t)⌉` machines, and all jobs
/// released until the next epoch run on them under the sub-policy built for
/// optimum `2·m(t)`.
pub struct Double {
    factor: Rational,
    preemptive: bool,
    oracle: OptimumOracle,
    factory: Factory,
    released: Vec<Job>,
    current: usize,
    epochs: Vec<Epoch>,
    pools: PoolSet,
    samples: Vec<(Time, usize)>,
}

impl Double {
    /// `factory(m')` builds the sub-policy for semi-online optimum `m'`.
    pub fn new(factor: Rational, preemptive: bool, oracle: OptimumOracle, factory: Factory) -> Double {
        Double {
            factor,
            preemptive,
            oracle,
            factory,
            released: Vec::new(),
            current: 0,
            epochs: Vec::new(),
            pools: PoolSet::new(),
            samples: Vec::new(),
        }
    }

    /// `(t, m(t))` at every release date.
    pub fn samples(&self) -> &[(Time, usize)] {
        &self.samples
    }
}

impl OnlinePolicy for Double {
    fn name(&self) -> String {
        "double".into()
    }

    fn params(&self) -> String {
        format!("a={}", self.factor)
    }

    fn is_preemptive(&self) -> bool {
        self.preemptive
    }

    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        if !ctx.released.is_empty() {
            self.released.extend_from_slice(ctx.released);
            let seen = Instance::new(self.released.clone())?;
            let m_t = self.oracle.evaluate(&seen, self.current)?;
            self.current = m_t;
            self.samples.push((ctx.t, m_t));
            if self.epochs.last().is_none_or(|e| m_t > 2 * e.m) {
                let block = ceil_count(self.factor * Rational::from_integer(2 * m_t as i64));
                let sub = (self.factory)(2 * m_t);
                if sub.budget().is_some_and(|b| b > block) {
                    return Err(PolicyError::Precondition(format!(
                        "sub-policy asks for {} machines but the epoch block has {block}",
                        sub.budget().unwrap_or(0)
                    )));
                }
                self.pools.push(sub);
                self.epochs.push(Epoch {
                    start: ctx.t,
                    m: m_t,
                    block,
                });
            }
            let k = self.pools.len() - 1;
            for job in ctx.released {
                self.pools.assign(job.id, k);
            }
        }
        self.pools.step(ctx)
    }

    fn budget(&self) -> Option<usize> {
        Some(self.epochs.iter().map(|e| e.block).sum())
    }

    fn machines_used(&self) -> Option<usize> {
        self.budget()
    }

    fn pools(&self) -> Vec<PoolUsage> {
        self.pools.usage()
    }

    fn epochs(&self) -> Vec<Epoch> {
        self.epochs.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DoubleCheck {
    pub opened: usize,
    pub final_m: usize,
    /// `opened ≤ 4·a·m(t_k) + r`, `r` = number of blocks whose `2·a·m(t_i)` was rounded up.
    pub total_bound: bool,
    /// `2·m(t_i)·2^{k-i-1} ≤ m(t_k)` for every `i < k`.
    pub epoch_inequality: bool,
}

pub fn check_double(epochs: &[Epoch], factor: Rational) -> DoubleCheck {
    let opened: usize = epochs.iter().map(|e| e.block).sum();
    let final_m = epochs.last().map_or(0, |e| e.m);
    let (num, den) = (*factor.numer() as i128, *factor.denom() as i128);
    let rounded = epochs
        .iter()
        .filter(|e| (2 * num * e.m as i128) % den != 0)
        .count() as i128;
    let total_bound = opened as i128 * den <= 4 * num * final_m as i128 + rounded * den;
    let k = epochs.len();
    let epoch_inequality = epochs.iter().enumerate().take(k.saturating_sub(1)).all(|(i, e)| {
        let shift = (k - i - 1) as u32;
        (2 * e.m as u128)
            .checked_shl(shift - 1)
            .and_then(|x| x.checked_mul(2))
            .is_some_and(|x| x <= 2 * final_m as u128)
    });
    DoubleCheck {
        opened,
        final_m,
        total_bound,
        epoch_inequality,
    }
}

/// Result of a composite scheduler together with its pool accounting.
#[derive(Clone, Debug)]
pub struct CompositeRun {
    pub run: SimulationRun,
    pub pools: Vec<PoolUsage>,
    pub epochs: Vec<Epoch>,
    /// The run is on the instance with every time multiplied by `scale`.
    pub scale: Time,
}

fn finish<P: OnlinePolicy>(instance: &Instance, mut policy: P, scale: Time) -> Result<CompositeRun, PolicyError> {
    let run = simulate(instance, &mut policy)?;
    Ok(CompositeRun {
        run,
        pools: policy.pools(),
        epochs: policy.epochs(),
        scale,
    })
}

fn require(ok: bool, what: &str) -> Result<(), PolicyError> {
    if ok {
        Ok(())
    } else {
        Err(PolicyError::Precondition(format!("instance is not {what}")))
    }
}

fn ceil_times(x: Rational, m: usize) -> usize {
    ceil_count(x * Rational::from_integer(m as i64))
}

fn one() -> Rational {
    Rational::from_integer(1)
}

/// `1/(1−α)²`.
pub fn loose_edf_factor(alpha: Rational) -> Rational {
    let q = one() - alpha;
    one() / (q * q)
}

/// `⌈m/(1−α)²⌉`.
pub fn loose_edf_budget(m: usize, alpha: Rational) -> usize {
    ceil_times(loose_edf_factor(alpha), m)
}

/// `(4/α + 6)`.
pub fn tight_llf_factor(alpha: Rational) -> Rational {
    Rational::from_integer(4) / alpha + Rational::from_integer(6)
}

/// `2⌈1/α⌉ + 1`.
pub fn medium_fit_factor(alpha: Rational) -> usize {
    2 * ceil_count(one() / alpha) + 1
}

fn agreeable_split(m: usize, alpha: Rational) -> SplitScheduler {
    SplitScheduler::by_tightness(
        "agreeable-p",
        alpha,
        Box::new(Edf::new(loose_edf_budget(m, alpha))),
        Box::new(Llf::new(ceil_times(tight_llf_factor(alpha), m))),
    )
}

/// EDF on `⌈m/(1−α)²⌉` machines for loose jobs, LLF on `⌈(4/α+6)m⌉` for tight ones.
pub fn agreeable_preemptive(instance: &Instance, m: usize, alpha: Rational) -> Result<CompositeRun, PolicyError> {
    require(instance.is_agreeable(), "agreeable")?;
    finish(instance, agreeable_split(m, alpha), 1)
}

/// The α = 1/2 splitter wrapped in Double with factor 18.
pub fn agreeable_preemptive_online(instance: &Instance) -> Result<CompositeRun, PolicyError> {
    require(instance.is_agreeable(), "agreeable")?;
    let alpha = Rational::new(1, 2);
    let factor = loose_edf_factor(alpha) + tight_llf_factor(alpha);
    let factory: Factory = Box::new(move |m| Box::new(agreeable_split(m, alpha)));
    finish(
        instance,
        Double::new(factor, true, OptimumOracle::Preemptive, factory),
        1,
    )
}

/// Runs on the instance scaled by 2 so that MediumFit starts are integral.
/// Loose jobs: non-preemptive EDF on `⌈m/(1−α)²⌉`; tight jobs: MediumFit.
pub fn agreeable_nonpreemptive(instance: &Instance, m: usize, alpha: Rational) -> Result<CompositeRun, PolicyError> {
    require(instance.is_agreeable(), "agreeable")?;
    let split = SplitScheduler::by_tightness(
        "agreeable-np",
        alpha,
        Box::new(EdfNonpreemptive::new(loose_edf_budget(m, alpha))),
        Box::new(MediumFit::new()),
    );
    finish(&instance.scaled(2), split, 2)
}

/// α = 1/3: MediumFit for tight jobs, Double over non-preemptive EDF (factor 9/4) for loose ones.
pub fn agreeable_nonpreemptive_online(instance: &Instance, cap: usize) -> Result<CompositeRun, PolicyError> {
    require(instance.is_agreeable(), "agreeable")?;
    let alpha = Rational::new(1, 3);
    let factor = loose_edf_factor(alpha);
    let factory: Factory = Box::new(move |m| Box::new(EdfNonpreemptive::new(ceil_times(factor, m))));
    let split = SplitScheduler::by_tightness(
        "agreeable-np-online",
        alpha,
        Box::new(Double::new(factor, false, OptimumOracle::Nonpreemptive { cap }, factory)),
        Box::new(MediumFit::new()),
    );
    finish(&instance.scaled(2), split, 2)
}

fn equal_p(instance: &Instance) -> Result<Time, PolicyError> {
    require(instance.is_equal_processing(), "equal-processing")?;
    Ok(instance.jobs().first().map_or(1, |j| j.processing))
}

/// `|[r_j, d_j] ∩ {0, p, 2p, …}| = 1`.
pub fn is_critical(job: &Job, p: Time) -> bool {
    grid_points(job, p) == 1
}

fn grid_points(job: &Job, p: Time) -> Time {
    job.deadline.div_euclid(p) - (job.release + p - 1).div_euclid(p) + 1
}

/// Release rounded up and deadline rounded down to multiples of `p`.
pub fn round_to_grid(job: &Job, p: Time) -> (Time, Time) {
    (
        (job.release + p - 1).div_euclid(p) * p,
        job.deadline.div_euclid(p) * p,
    )
}

/// At every multiple `τp`, starts up to `budget` pending rounded jobs by EDF
/// on the rounded deadline; each runs exactly in `[τp, (τ+1)p)`.
#[derive(Clone, Debug)]
pub struct GridEdf {
    p: Time,
    budget: usize,
    pending: BTreeMap<JobId, (Time, Time, Time)>,
    batch: Vec<JobId>,
}

impl GridEdf {
    pub fn new(p: Time, budget: usize) -> GridEdf {
        GridEdf {
            p,
            budget,
            pending: BTreeMap::new(),
            batch: Vec::new(),
        }
    }
}

impl OnlinePolicy for GridEdf {
    fn name(&self) -> String {
        "grid-edf".into()
    }
    fn params(&self) -> String {
        format!("p={} machines={}", self.p, self.budget)
    }
    fn is_preemptive(&self) -> bool {
        false
    }
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        for job in ctx.released {
            let (r, d) = round_to_grid(job, self.p);
            self.pending.insert(job.id, (r, d, job.release));
        }
        if ctx.t % self.p == 0 {
            let mut ready: Vec<(Time, Time, JobId)> = self
                .pending
                .iter()
                .filter(|(_, &(r, d, _))| r <= ctx.t && ctx.t + self.p <= d)
                .map(|(&id, &(_, d, rel))| (d, rel, id))
                .collect();
            ready.sort_unstable();
            self.batch = ready.into_iter().take(self.budget).map(|k| k.2).collect();
            for id in &self.batch {
                self.pending.remove(id);
            }
        }
        let live: HashSet<JobId> = ctx.active.iter().map(|s| s.job.id).collect();
        Ok(self.batch.iter().copied().filter(|id| live.contains(id)).collect())
    }
    fn budget(&self) -> Option<usize> {
        Some(self.budget)
    }
}

fn critical_split(name: &str, p: Time, grid: Box<dyn OnlinePolicy + Send>) -> SplitScheduler {
    let router: Router = Box::new(move |job| usize::from(!is_critical(job, p)));
    SplitScheduler::new(name, router, vec![Box::new(EarlyFit), grid])
}

/// Critical jobs by EarlyFit, non-critical ones on `2m` grid machines.
pub fn equal_p_nonpreemptive_semi(instance: &Instance, m: usize) -> Result<CompositeRun, PolicyError> {
    let p = equal_p(instance)?;
    finish(instance, critical_split("equalp-semi", p, Box::new(GridEdf::new(p, 2 * m))), 1)
}

/// Critical jobs by EarlyFit, non-critical ones by Double over the grid policy (factor 2).
pub fn equal_p_nonpreemptive_online(instance: &Instance, cap: usize) -> Result<CompositeRun, PolicyError> {
    let p = equal_p(instance)?;
    let factory: Factory = Box::new(move |m| Box::new(GridEdf::new(p, 2 * m)));
    let double = Double::new(
        Rational::from_integer(2),
        false,
        OptimumOracle::Nonpreemptive { cap },
        factory,
    );
    finish(instance, critical_split("equalp-np-online", p, Box::new(double)), 1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OfflineApprox {
    pub schedule: NonpreemptiveSchedule,
    pub machines: usize,
    /// Machines of the unit-job schedule for the non-critical jobs.
    pub grid_machines: usize,
    pub optimum: Option<usize>,
    /// `machines / optimum`.
    pub ratio: Option<Rational>,
}

/// EarlyFit for critical jobs; non-critical jobs become unit jobs on the
/// grid and are scheduled by EDF with the optimal unit-job machine count.
pub fn equal_p_offline_approx(instance: &Instance) -> Result<OfflineApprox, PolicyError> {
    let p = equal_p(instance)?;
    let mut schedule = NonpreemptiveSchedule::new();
    let mut unit = Vec::new();
    for job in instance.jobs() {
        if is_critical(job, p) {
            schedule.set_start(job.id, job.release);
        } else {
            let (r, d) = round_to_grid(job, p);
            unit.push(Job::new(job.id.0, r / p, d / p, 1)?);
        }
    }
    let unit = Instance::new(unit)?;
    let grid_machines = optimum_preemptive(&unit);
    let run = simulate(&unit, &mut Edf::new(grid_machines))?;
    for (id, tau) in run.nonpreemptive_schedule().starts() {
        schedule.set_start(id, tau * p);
    }
    let machines = schedule.machines_used(instance);
    let optimum = match optimum_nonpreemptive_exact(instance) {
        Ok(m) => Some(m),
        Err(OracleError::CapExceeded { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(OfflineApprox {
        schedule,
        machines,
        grid_machines,
        optimum,
        ratio: optimum.filter(|&m| m > 0).map(|m| Rational::new(machines as i64, m as i64)),
    })
}

/// Upper bound on `e`, so `c` below never undershoots `e(1+α)/(1−α)`.
pub fn e_upper() -> Rational {
    Rational::new(2_718_282, 1_000_000)
}

pub const EQUAL_P_ONLINE_ALPHA: (i64, i64) = (3, 10);

/// `e(1+α)/(1−α)` with `e` replaced by [`e_upper`].
pub fn density_factor(alpha: Rational) -> Rational {
    e_upper() * (one() + alpha) / (one() - alpha)
}

/// Online equal-p scheduler: EarlyFit for α-tight jobs, EDF on
/// `⌈c·ρ(t)⌉` machines (never decreasing) for α-loose jobs.
pub struct EqualPOnline {
    alpha: Rational,
    c: Rational,
    p: Time,
    released: Vec<Job>,
    tight: HashSet<JobId>,
    rho: Rational,
    edf_budget: usize,
    early_peak: usize,
}

impl EqualPOnline {
    pub fn new(p: Time, alpha: Rational, c: Rational) -> EqualPOnline {
        EqualPOnline {
            alpha,
            c,
            p,
            released: Vec::new(),
            tight: HashSet::new(),
            rho: Rational::from_integer(0),
            edf_budget: 0,
            early_peak: 0,
        }
    }

    /// Largest density seen so far.
    pub fn rho(&self) -> Rational {
        self.rho
    }

    pub fn early_fit_peak(&self) -> usize {
        self.early_peak
    }

    pub fn edf_budget(&self) -> usize {
        self.edf_budget
    }

    /// `⌊(1/α+1)ρ⌋ + ⌈c·ρ⌉` for the largest density seen.
    pub fn usage_bound(&self) -> usize {
        let early = ((one() / self.alpha + one()) * self.rho).floor().to_integer() as usize;
        early + ceil_count(self.c * self.rho)
    }
}

impl OnlinePolicy for EqualPOnline {
    fn name(&self) -> String {
        "equalp-online".into()
    }
    fn params(&self) -> String {
        format!("alpha={} c={}", self.alpha, self.c)
    }
    fn is_preemptive(&self) -> bool {
        true
    }
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<Vec<JobId>, PolicyError> {
        if !ctx.released.is_empty() {
            for job in ctx.released {
                if JobState::new(*job).classify(self.alpha) == Tightness::Tight {
                    self.tight.insert(job.id);
                }
            }
            self.released.extend_from_slice(ctx.released);
            self.rho = self.rho.max(density_equal_p(&self.released, self.p)?);
            self.edf_budget = self.edf_budget.max(ceil_count(self.c * self.rho));
        }
        let (tight, loose): (Vec<&JobState>, Vec<&JobState>) =
            ctx.active.iter().partition(|s| self.tight.contains(&s.job.id));
        self.early_peak = self.early_peak.max(tight.len());
        let mut out: Vec<JobId> = tight.iter().map(|s| s.job.id).collect();
        out.extend(edf_select(loose, self.edf_budget));
        Ok(out)
    }
    fn budget(&self) -> Option<usize> {
        None
    }
    fn machines_used(&self) -> Option<usize> {
        Some(self.early_peak + self.edf_budget)
    }
    fn pools(&self) -> Vec<PoolUsage> {
        vec![
            PoolUsage {
                name: "earlyfit".into(),
                params: String::new(),
                jobs: self.tight.len(),
                machines: self.early_peak,
            },
            PoolUsage {
                name: "edf".into(),
                params: format!("machines={}", self.edf_budget),
                jobs: self.released.len() - self.tight.len(),
                machines: self.edf_budget,
            },
        ]
    }
}

pub fn equal_p_online(instance: &Instance, alpha: Rational) -> Result<(CompositeRun, usize), PolicyError> {
    let p = equal_p(instance)?;
    let mut policy = EqualPOnline::new(p, alpha, density_factor(alpha));
    let run = simulate(instance, &mut policy)?;
    let bound = policy.usage_bound();
    Ok((
        CompositeRun {
            run,
            pools: policy.pools(),
            epochs: Vec::new(),
            scale: 1,
        },
        bound,
    ))
}

/// LLF on exactly `m` machines.
pub fn uniform_deadline_preemptive(instance: &Instance, m: usize) -> Result<CompositeRun, PolicyError> {
    require(instance.is_uniform_deadline(), "uniform-deadline")?;
    finish(instance, Llf::new(m), 1)
}

/// Double over LLF with factor 1.
pub fn uniform_deadline_preemptive_online(instance: &Instance) -> Result<CompositeRun, PolicyError> {
    require(instance.is_uniform_deadline(), "uniform-deadline")?;
    let factory: Factory = Box::new(|m| Box::new(Llf::new(m)));
    finish(
        instance,
        Double::new(one(), true, OptimumOracle::Preemptive, factory),
        1,
    )
}

/// EarlyFit for α-tight jobs, non-preemptive EDF on `⌈m/(1−α)²⌉` for α-loose ones.
pub fn uniform_deadline_nonpreemptive(
    instance: &Instance,
    m: usize,
    alpha: Rational,
) -> Result<CompositeRun, PolicyError> {
    require(instance.is_uniform_deadline(), "uniform-deadline")?;
    let split = SplitScheduler::by_tightness(
        "uniform-np",
        alpha,
        Box::new(EdfNonpreemptive::new(loose_edf_budget(m, alpha))),
        Box::new(EarlyFit),
    );
    finish(instance, split, 1)
}

/// α = 1/4: EarlyFit for tight jobs, Double over non-preemptive EDF (factor 16/9).
pub fn uniform_deadline_nonpreemptive_online(instance: &Instance, cap: usize) -> Result<CompositeRun, PolicyError> {
    require(instance.is_uniform_deadline(), "uniform-deadline")?;
    let alpha = Rational::new(1, 4);
    let factor = loose_edf_factor(alpha);
    let factory: Factory = Box::new(move |m| Box::new(EdfNonpreemptive::new(ceil_times(factor, m))));
    let split = SplitScheduler::by_tightness(
        "uniform-np-online",
        alpha,
        Box::new(Double::new(factor, false, OptimumOracle::Nonpreemptive { cap }, factory)),
        Box::new(EarlyFit),
    );
    finish(instance, split, 1)
}

/// Cap for the non-preemptive optimum inside the online wrappers.
pub const ONLINE_NONPREEMPTIVE_CAP: usize = DEFAULT_NONPREEMPTIVE_CAP;

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(triples: &[(Time, Time, Time)]) -> Instance {
        Instance::from_triples(triples).unwrap()
    }

    #[test]
    fn budgets() {
        let half = Rational::new(1, 2);
        assert_eq!(loose_edf_budget(1, half), 4);
        assert_eq!(ceil_times(tight_llf_factor(half), 1), 14);
        assert_eq!(loose_edf_budget(4, Rational::new(1, 3)), 9);
        assert_eq!(medium_fit_factor(half), 5);
        assert_eq!(medium_fit_factor(Rational::new(1, 3)), 7);
    }

    #[test]
    fn double_epoch_examples() {
        // m(t) = 1 at t=0 then 3 at t=5, factor 2: blocks 4 and 12
        let epochs = [
            Epoch { start: 0, m: 1, block: 4 },
            Epoch { start: 5, m: 3, block: 12 },
        ];
        let c = check_double(&epochs, Rational::from_integer(2));
        assert_eq!(c.opened, 16);
        assert!(c.total_bound && c.epoch_inequality);
        let single = [Epoch { start: 0, m: 3, block: 12 }];
        assert!(check_double(&single, Rational::from_integer(2)).total_bound);
        let broken = [
            Epoch { start: 0, m: 2, block: 4 },
            Epoch { start: 1, m: 3, block: 6 },
        ];
        assert!(!check_double(&broken, one()).epoch_inequality);
    }

    #[test]
    fn double_opens_epochs_on_growth() {
        // optimum 1 from t=0, then a burst at t=4 pushes it to 3
        let i = inst(&[(0, 8, 2), (4, 6, 2), (4, 6, 2), (4, 6, 2)]);
        let factory: Factory = Box::new(|m| Box::new(Llf::new(m)));
        let mut d = Double::new(one(), true, OptimumOracle::Preemptive, factory);
        let run = simulate(&i, &mut d).unwrap();
        assert_eq!(run.first_miss(), None);
        let epochs = d.epochs();
        assert_eq!(epochs.iter().map(|e| (e.start, e.m, e.block)).collect::<Vec<_>>(), vec![(0, 1, 2), (4, 3, 6)]);
        assert_eq!(run.machines_used, 8);
        assert_eq!(d.samples(), &[(0, 1), (4, 3)]);
    }

    #[test]
    fn critical_and_rounding_examples() {
        let j = Job::new(0, 1, 5, 3).unwrap();
        assert!(is_critical(&j, 3));
        let j = Job::new(0, 2, 7, 3).unwrap();
        assert!(!is_critical(&j, 3));
        assert_eq!(round_to_grid(&j, 3), (3, 6));
    }

    #[test]
    fn agreeable_examples() {
        let all_loose = inst(&[(0, 10, 2), (1, 12, 3), (2, 14, 1)]);
        let out = agreeable_preemptive(&all_loose, 1, Rational::new(1, 2)).unwrap();
        assert_eq!(out.pools[1].jobs, 0);
        assert_eq!(out.run.first_miss(), None);
        let single = inst(&[(0, 5, 3)]);
        let out = agreeable_nonpreemptive(&single, 1, Rational::new(1, 2)).unwrap();
        assert_eq!(out.run.machines_used, 1);
        assert!(out.run.validate(&single.scaled(2)).unwrap().feasible);
        let crossing = inst(&[(0, 9, 1), (1, 3, 1)]);
        assert!(matches!(
            agreeable_preemptive(&crossing, 1, Rational::new(1, 2)),
            Err(PolicyError::Precondition(_))
        ));
    }

    #[test]
    fn equal_p_semi_runs_grid_batches() {
        let i = inst(&[(0, 6, 2), (1, 5, 2), (0, 2, 2), (3, 8, 2)]);
        let out = equal_p_nonpreemptive_semi(&i, 1).unwrap();
        assert_eq!(out.run.first_miss(), None);
        assert!(out.run.validate(&i).unwrap().feasible);
        let starts = out.run.nonpreemptive_schedule();
        // (3,8) rounds to [4,8]; (1,5) rounds to [2,4]
        assert_eq!(starts.start(JobId(3)).unwrap() % 2, 0);
        assert_eq!(starts.start(JobId(1)), Some(2));
    }

    #[test]
    fn offline_approx_zero_laxity_is_optimal() {
        let i = inst(&[(1, 4, 3), (2, 5, 3), (5, 8, 3)]);
        let out = equal_p_offline_approx(&i).unwrap();
        assert_eq!(out.grid_machines, 0);
        assert_eq!(Some(out.machines), out.optimum);
    }

    #[test]
    fn equal_p_online_all_tight() {
        let i = inst(&[(0, 3, 2), (1, 4, 2), (2, 5, 2)]);
        let (out, bound) = equal_p_online(&i, Rational::new(3, 10)).unwrap();
        assert_eq!(out.pools[1].jobs, 0);
        assert_eq!(out.run.first_miss(), None);
        assert!(out.run.machines_used <= bound);
    }

    #[test]
    fn uniform_deadline_examples() {
        let i = inst(&[(0, 6, 4), (1, 6, 5), (2, 6, 2), (0, 6, 1)]);
        let m = optimum_preemptive(&i);
        assert_eq!(uniform_deadline_preemptive(&i, m).unwrap().run.first_miss(), None);
        // saturated: total work = m·d
        let sat = inst(&[(0, 4, 4), (0, 4, 4), (1, 4, 3), (0, 4, 1)]);
        assert_eq!(optimum_preemptive(&sat), 3);
        assert!(uniform_deadline_preemptive(&sat, 2).unwrap().run.first_miss().is_some());
        let tight = inst(&[(0, 5, 4)]);
        let out = uniform_deadline_nonpreemptive(&tight, 1, Rational::new(1, 3)).unwrap();
        assert_eq!(out.run.machines_used, 1);
    }
}
