//! Jobs, instances, schedules and schedule validation.
//!
//! Time is discrete. A job released at `r` may run in slot `[r, r+1)` and a
//! job with deadline `d` may run at the latest in slot `[d-1, d)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integral time point or duration.
pub type Time = i64;

/// Exact rational used for every algorithm parameter (α, β, γ, factors).
pub type Rational = Ratio<i64>;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JobId(pub u32);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("job {id}: {reason}")]
    InvalidJob { id: JobId, reason: &'static str },
    #[error("duplicate job id {0}")]
    DuplicateId(JobId),
    #[error("unknown job id {0}")]
    UnknownJob(JobId),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One deadline-constrained unit of work.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    pub release: Time,
    pub deadline: Time,
    pub processing: Time,
}

impl Job {
    pub fn new(id: u32, release: Time, deadline: Time, processing: Time) -> Result<Job, ModelError> {
        let job = Job {
            id: JobId(id),
            release,
            deadline,
            processing,
        };
        job.check()?;
        Ok(job)
    }

    fn check(&self) -> Result<(), ModelError> {
        let reason = if self.release < 0 {
            "negative release"
        } else if self.processing < 1 {
            "processing must be at least 1"
        } else if self.deadline < self.release + self.processing {
            "deadline < release + processing"
        } else {
            return Ok(());
        };
        Err(ModelError::InvalidJob { id: self.id, reason })
    }

    /// Original laxity `d - r - p`.
    pub fn laxity(&self) -> Time {
        self.deadline - self.release - self.processing
    }

    /// Length of the feasible window `d - r`.
    pub fn window(&self) -> Time {
        self.deadline - self.release
    }

    /// Whether the job is α-loose at its release date.
    pub fn is_loose(&self, alpha: Rational) -> bool {
        at_most_fraction(self.processing, alpha, self.window())
    }

    /// Canonical EDF priority: deadline, then release, then id.
    pub fn edf_key(&self) -> (Time, Time, JobId) {
        (self.deadline, self.release, self.id)
    }

    /// The job with all times multiplied by `factor`.
    pub fn scaled(&self, factor: Time) -> Job {
        Job {
            id: self.id,
            release: self.release * factor,
            deadline: self.deadline * factor,
            processing: self.processing * factor,
        }
    }

    /// Remaining part of the job at `t`: window `[t, d]` with `remaining` work.
    pub fn residue(&self, t: Time, remaining: Time) -> Job {
        Job {
            id: self.id,
            release: t.max(self.release),
            deadline: self.deadline,
            processing: remaining,
        }
    }

    pub fn contains_slot(&self, t: Time) -> bool {
        self.release <= t && t < self.deadline
    }
}

/// `value <= fraction * base`, compared exactly.
pub(crate) fn at_most_fraction(value: Time, fraction: Rational, base: Time) -> bool {
    (value as i128) * (*fraction.denom() as i128) <= (*fraction.numer() as i128) * (base as i128)
}

/// A finite job set with distinct ids.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Instance {
    jobs: Vec<Job>,
    index: HashMap<JobId, usize>,
}

impl Instance {
    pub fn new(jobs: Vec<Job>) -> Result<Instance, ModelError> {
        let mut index = HashMap::with_capacity(jobs.len());
        for (i, job) in jobs.iter().enumerate() {
            job.check()?;
            if index.insert(job.id, i).is_some() {
                return Err(ModelError::DuplicateId(job.id));
            }
        }
        Ok(Instance { jobs, index })
    }

    /// Builds an instance from `(release, deadline, processing)` triples with ids `0..n`.
    pub fn from_triples(triples: &[(Time, Time, Time)]) -> Result<Instance, ModelError> {
        let jobs = triples
            .iter()
            .enumerate()
            .map(|(i, &(r, d, p))| Job::new(i as u32, r, d, p))
            .collect::<Result<Vec<_>, _>>()?;
        Instance::new(jobs)
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn get(&self, id: JobId) -> Option<&Job> {
        self.index.get(&id).map(|&i| &self.jobs[i])
    }

    pub fn d_max(&self) -> Time {
        self.jobs.iter().map(|j| j.deadline).max().unwrap_or(0)
    }

    pub fn min_release(&self) -> Time {
        self.jobs.iter().map(|j| j.release).min().unwrap_or(0)
    }

    pub fn total_work(&self) -> Time {
        self.jobs.iter().map(|j| j.processing).sum()
    }

    /// True iff `r_j < r_k` implies `d_j <= d_k` for every pair.
    pub fn is_agreeable(&self) -> bool {
        let mut by_release: Vec<&Job> = self.jobs.iter().collect();
        by_release.sort_by_key(|j| (j.release, j.deadline));
        let mut max_before = Time::MIN;
        let mut i = 0;
        while i < by_release.len() {
            let r = by_release[i].release;
            let mut k = i;
            while k < by_release.len() && by_release[k].release == r {
                if by_release[k].deadline < max_before {
                    return false;
                }
                k += 1;
            }
            max_before = max_before.max(by_release[k - 1].deadline);
            i = k;
        }
        true
    }

    pub fn is_equal_processing(&self) -> bool {
        self.jobs.windows(2).all(|w| w[0].processing == w[1].processing)
    }

    pub fn is_uniform_deadline(&self) -> bool {
        self.jobs.windows(2).all(|w| w[0].deadline == w[1].deadline)
    }

    /// `J(t)`: every job with `r_j <= t`.
    pub fn released_by(&self, t: Time) -> Instance {
        self.filter(|j| j.release <= t)
    }

    pub fn filter(&self, keep: impl Fn(&Job) -> bool) -> Instance {
        let jobs: Vec<Job> = self.jobs.iter().copied().filter(|j| keep(j)).collect();
        let index = jobs.iter().enumerate().map(|(i, j)| (j.id, i)).collect();
        Instance { jobs, index }
    }

    pub fn scaled(&self, factor: Time) -> Instance {
        let jobs: Vec<Job> = self.jobs.iter().map(|j| j.scaled(factor)).collect();
        Instance {
            index: self.index.clone(),
            jobs,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tightness {
    Loose,
    Tight,
}

/// Runtime state of a job during a simulation.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct JobState {
    pub job: Job,
    pub remaining: Time,
    /// Set once [`JobState::observe`] has seen the job α-loose.
    pub ever_loose: bool,
}

impl JobState {
    pub fn new(job: Job) -> JobState {
        JobState {
            job,
            remaining: job.processing,
            ever_loose: false,
        }
    }

    /// `d_j - t - p_j(t)`; negative means the job can no longer finish.
    pub fn laxity(&self, t: Time) -> Time {
        self.job.deadline - t - self.remaining
    }

    /// Loose iff `p_j(t) <= α (d_j - r_j)`.
    pub fn classify(&self, alpha: Rational) -> Tightness {
        if at_most_fraction(self.remaining, alpha, self.job.window()) {
            Tightness::Loose
        } else {
            Tightness::Tight
        }
    }

    pub fn observe(&mut self, alpha: Rational) -> Tightness {
        let c = self.classify(alpha);
        if c == Tightness::Loose {
            self.ever_loose = true;
        }
        c
    }

    pub fn is_finished(&self) -> bool {
        self.remaining == 0
    }
}

/// Slot-level job membership; machine identities are implicit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PreemptiveSchedule {
    slots: BTreeMap<Time, BTreeSet<JobId>>,
}

impl PreemptiveSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the job was already assigned to slot `t`.
    pub fn assign(&mut self, t: Time, id: JobId) -> bool {
        self.slots.entry(t).or_default().insert(id)
    }

    pub fn jobs_at(&self, t: Time) -> impl Iterator<Item = JobId> + '_ {
        self.slots.get(&t).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn slots(&self) -> impl Iterator<Item = (Time, &BTreeSet<JobId>)> {
        self.slots.iter().map(|(&t, s)| (t, s))
    }

    pub fn machines_used(&self) -> usize {
        self.slots.values().map(|s| s.len()).max().unwrap_or(0)
    }

    /// Number of slots assigned to `id` strictly before `t`.
    pub fn units_before(&self, id: JobId, t: Time) -> Time {
        self.slots.range(..t).filter(|(_, s)| s.contains(&id)).count() as Time
    }
}

/// Start time per job; each job then runs `p_j` consecutive slots.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NonpreemptiveSchedule {
    starts: BTreeMap<JobId, Time>,
}

impl NonpreemptiveSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_start(&mut self, id: JobId, start: Time) {
        self.starts.insert(id, start);
    }

    pub fn start(&self, id: JobId) -> Option<Time> {
        self.starts.get(&id).copied()
    }

    pub fn starts(&self) -> impl Iterator<Item = (JobId, Time)> + '_ {
        self.starts.iter().map(|(&id, &s)| (id, s))
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Maximum number of simultaneously running jobs. Ids not in `instance` are ignored.
    pub fn machines_used(&self, instance: &Instance) -> usize {
        let mut events: Vec<(Time, i32)> = Vec::with_capacity(2 * self.starts.len());
        for (&id, &s) in &self.starts {
            if let Some(job) = instance.get(id) {
                events.push((s, 1));
                events.push((s + job.processing, -1));
            }
        }
        // ends sort before starts at the same time point
        events.sort();
        let mut cur = 0i32;
        let mut best = 0i32;
        for (_, delta) in events {
            cur += delta;
            best = best.max(cur);
        }
        best as usize
    }

    /// Expands the start times into slot membership.
    pub fn to_preemptive(&self, instance: &Instance) -> PreemptiveSchedule {
        let mut out = PreemptiveSchedule::new();
        for (&id, &s) in &self.starts {
            if let Some(job) = instance.get(id) {
                for t in s..s + job.processing {
                    out.assign(t, id);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Problem {
    /// Fewer units than required.
    Deficit { assigned: Time, required: Time },
    /// More units than required.
    Excess { assigned: Time, required: Time },
    OutsideWindow { slot: Time },
    MissingStart,
    StartsBeforeRelease { start: Time },
    EndsAfterDeadline { end: Time },
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Problem::Deficit { assigned, required } => {
                write!(f, "deficit: {assigned} of {required} units")
            }
            Problem::Excess { assigned, required } => {
                write!(f, "excess: {assigned} of {required} units")
            }
            Problem::OutsideWindow { slot } => write!(f, "slot {slot} outside window"),
            Problem::MissingStart => write!(f, "no start time"),
            Problem::StartsBeforeRelease { start } => write!(f, "starts at {start} before release"),
            Problem::EndsAfterDeadline { end } => write!(f, "ends at {end} after deadline"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JobDiagnostic {
    pub id: JobId,
    pub required: Time,
    pub assigned: Time,
    pub problems: Vec<Problem>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub feasible: bool,
    pub machines_used: usize,
    pub jobs: Vec<JobDiagnostic>,
}

impl ValidationReport {
    fn from_jobs(jobs: Vec<JobDiagnostic>, machines_used: usize) -> Self {
        let feasible = jobs.iter().all(|j| j.problems.is_empty());
        ValidationReport {
            feasible,
            machines_used,
            jobs,
        }
    }

    pub fn violations(&self) -> impl Iterator<Item = &JobDiagnostic> {
        self.jobs.iter().filter(|j| !j.problems.is_empty())
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} (machines used: {})",
            if self.feasible { "feasible" } else { "infeasible" },
            self.machines_used
        )?;
        for diag in self.violations() {
            for p in &diag.problems {
                writeln!(f, "job {}: {p}", diag.id)?;
            }
        }
        Ok(())
    }
}

/// Checks volume and window constraints of a slot-level schedule.
pub fn validate_preemptive(
    instance: &Instance,
    schedule: &PreemptiveSchedule,
) -> Result<ValidationReport, ModelError> {
    let mut assigned: HashMap<JobId, Time> = HashMap::new();
    let mut outside: HashMap<JobId, Vec<Time>> = HashMap::new();
    for (t, ids) in schedule.slots() {
        for &id in ids {
            let job = instance.get(id).ok_or(ModelError::UnknownJob(id))?;
            *assigned.entry(id).or_default() += 1;
            if !job.contains_slot(t) {
                outside.entry(id).or_default().push(t);
            }
        }
    }
    let jobs = instance
        .jobs()
        .iter()
        .map(|job| {
            let got = assigned.get(&job.id).copied().unwrap_or(0);
            let mut problems = Vec::new();
            if got < job.processing {
                problems.push(Problem::Deficit {
                    assigned: got,
                    required: job.processing,
                });
            } else if got > job.processing {
                problems.push(Problem::Excess {
                    assigned: got,
                    required: job.processing,
                });
            }
            for &slot in outside.get(&job.id).map(Vec::as_slice).unwrap_or(&[]) {
                problems.push(Problem::OutsideWindow { slot });
            }
            JobDiagnostic {
                id: job.id,
                required: job.processing,
                assigned: got,
                problems,
            }
        })
        .collect();
    Ok(ValidationReport::from_jobs(jobs, schedule.machines_used()))
}

/// Checks that every job has a start with `r_j <= s_j <= d_j - p_j`.
pub fn validate_nonpreemptive(
    instance: &Instance,
    schedule: &NonpreemptiveSchedule,
) -> Result<ValidationReport, ModelError> {
    if let Some((id, _)) = schedule.starts().find(|(id, _)| instance.get(*id).is_none()) {
        return Err(ModelError::UnknownJob(id));
    }
    let jobs = instance
        .jobs()
        .iter()
        .map(|job| {
            let mut problems = Vec::new();
            let assigned = match schedule.start(job.id) {
                None => {
                    problems.push(Problem::MissingStart);
                    0
                }
                Some(s) => {
                    if s < job.release {
                        problems.push(Problem::StartsBeforeRelease { start: s });
                    }
                    if s + job.processing > job.deadline {
                        problems.push(Problem::EndsAfterDeadline {
                            end: s + job.processing,
                        });
                    }
                    job.processing
                }
            };
            JobDiagnostic {
                id: job.id,
                required: job.processing,
                assigned,
                problems,
            }
        })
        .collect();
    Ok(ValidationReport::from_jobs(jobs, schedule.machines_used(instance)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Rational {
        Rational::new(1, 2)
    }

    #[test]
    fn laxity_examples() {
        let job = Job::new(0, 0, 10, 4).unwrap();
        let mut s = JobState::new(job);
        assert_eq!(s.laxity(0), 6);
        assert_eq!(s.laxity(6), 0);
        s.remaining = 2;
        assert_eq!(s.laxity(9), -1);
    }

    #[test]
    fn classify_examples() {
        let loose = JobState::new(Job::new(0, 0, 10, 4).unwrap());
        assert_eq!(loose.classify(half()), Tightness::Loose);
        let mut tight = JobState::new(Job::new(1, 0, 10, 6).unwrap());
        assert_eq!(tight.classify(half()), Tightness::Tight);
        tight.remaining = 5;
        assert_eq!(tight.classify(half()), Tightness::Loose);
        assert!(!tight.ever_loose);
        tight.observe(half());
        assert!(tight.ever_loose);
    }

    #[test]
    fn job_constructor_rejects_bad_windows() {
        assert!(matches!(
            Job::new(0, 0, 2, 5),
            Err(ModelError::InvalidJob { reason: "deadline < release + processing", .. })
        ));
        assert!(Job::new(0, -1, 2, 1).is_err());
        assert!(Job::new(0, 0, 2, 0).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = Job::new(3, 0, 2, 1).unwrap();
        assert_eq!(Instance::new(vec![a, a]), Err(ModelError::DuplicateId(JobId(3))));
    }

    #[test]
    fn instance_flags() {
        let agreeable = Instance::from_triples(&[(0, 3, 1), (1, 3, 1), (1, 5, 2), (4, 9, 2)]).unwrap();
        assert!(agreeable.is_agreeable());
        let crossing = Instance::from_triples(&[(0, 9, 1), (1, 3, 1)]).unwrap();
        assert!(!crossing.is_agreeable());
        // equal releases may have any deadlines
        let same_release = Instance::from_triples(&[(0, 9, 1), (0, 3, 1)]).unwrap();
        assert!(same_release.is_agreeable());
        let eq = Instance::from_triples(&[(0, 3, 2), (1, 7, 2)]).unwrap();
        assert!(eq.is_equal_processing());
        assert!(!eq.is_uniform_deadline());
        let uni = Instance::from_triples(&[(0, 7, 2), (1, 7, 3)]).unwrap();
        assert!(uni.is_uniform_deadline());
    }

    #[test]
    fn preemptive_validation_examples() {
        let inst = Instance::from_triples(&[(0, 2, 1)]).unwrap();
        let mut s = PreemptiveSchedule::new();
        s.assign(0, JobId(0));
        let rep = validate_preemptive(&inst, &s).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.machines_used, 1);

        let inst = Instance::from_triples(&[(0, 2, 2)]).unwrap();
        let rep = validate_preemptive(&inst, &s).unwrap();
        assert!(!rep.feasible);
        assert_eq!(
            rep.jobs[0].problems,
            vec![Problem::Deficit { assigned: 1, required: 2 }]
        );

        let inst = Instance::from_triples(&[(0, 1, 1), (0, 1, 1)]).unwrap();
        let mut s = PreemptiveSchedule::new();
        s.assign(0, JobId(0));
        s.assign(0, JobId(1));
        let rep = validate_preemptive(&inst, &s).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.machines_used, 2);
    }

    #[test]
    fn preemptive_validation_flags_window_and_unknown() {
        let inst = Instance::from_triples(&[(1, 3, 1)]).unwrap();
        let mut s = PreemptiveSchedule::new();
        s.assign(3, JobId(0));
        let rep = validate_preemptive(&inst, &s).unwrap();
        assert!(!rep.feasible);
        assert_eq!(rep.jobs[0].problems, vec![Problem::OutsideWindow { slot: 3 }]);
        s.assign(1, JobId(9));
        assert_eq!(validate_preemptive(&inst, &s), Err(ModelError::UnknownJob(JobId(9))));
    }

    #[test]
    fn nonpreemptive_validation_examples() {
        let inst = Instance::from_triples(&[(0, 3, 2)]).unwrap();
        let mut s = NonpreemptiveSchedule::new();
        s.set_start(JobId(0), 1);
        assert!(validate_nonpreemptive(&inst, &s).unwrap().feasible);
        s.set_start(JobId(0), 2);
        let rep = validate_nonpreemptive(&inst, &s).unwrap();
        assert!(!rep.feasible);
        assert_eq!(rep.jobs[0].problems, vec![Problem::EndsAfterDeadline { end: 4 }]);

        let inst = Instance::from_triples(&[(0, 4, 2), (1, 4, 2)]).unwrap();
        let mut s = NonpreemptiveSchedule::new();
        s.set_start(JobId(0), 0);
        s.set_start(JobId(1), 1);
        let rep = validate_nonpreemptive(&inst, &s).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.machines_used, 2);
    }

    #[test]
    fn nonpreemptive_missing_job_is_infeasible() {
        let inst = Instance::from_triples(&[(0, 3, 2), (0, 3, 1)]).unwrap();
        let mut s = NonpreemptiveSchedule::new();
        s.set_start(JobId(0), 0);
        let rep = validate_nonpreemptive(&inst, &s).unwrap();
        assert!(!rep.feasible);
        assert_eq!(rep.violations().count(), 1);
        assert_eq!(rep.jobs[1].problems, vec![Problem::MissingStart]);
    }

    #[test]
    fn back_to_back_jobs_share_a_machine() {
        let inst = Instance::from_triples(&[(0, 4, 2), (0, 4, 2)]).unwrap();
        let mut s = NonpreemptiveSchedule::new();
        s.set_start(JobId(0), 0);
        s.set_start(JobId(1), 2);
        assert_eq!(s.machines_used(&inst), 1);
    }
}
