//! Lower-bound constructions, the adaptive game against equal-length
//! semi-online policies, and seeded random instance families.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{simulate, Miss, OnlinePolicy, PolicyError};
use crate::model::{at_most_fraction, Instance, Job, Rational, Time};
use crate::optimum::{is_feasible_preemptive, optimum_preemptive};

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{what} needs {bits} bits and does not fit a signed 64-bit time")]
    Overflow { what: &'static str, bits: u64 },
    #[error("generated instance is not feasible on {machines} machines")]
    Certificate { machines: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// The LLF construction with its bookkeeping.
#[derive(Clone, Debug)]
pub struct LlfLowerBound {
    pub instance: Instance,
    pub m: usize,
    pub c: i64,
    pub rounds: usize,
    pub x0: Time,
    /// Machines given to LLF, `ĉ·m = c·m/2`.
    pub llf_machines: usize,
}

/// Round `r ∈ [0, k)` starts at `T_r = x_0·Σ_{i<r} c^{−i}` and releases `m/2`
/// tight jobs with `p = x_0/c^r`, all due at `x_0·c/(c−1)`, together with
/// `c(c−1)` back-to-back waves of `c·m/2` jobs of length `x_{r+1} = c^{k−r}`
/// and window `c·x_{r+1}`.
pub fn gen_llf_lower_bound(m: usize, c: i64, k: usize) -> Result<LlfLowerBound, AdversaryError> {
    if m == 0 || m % 2 == 1 {
        return Err(AdversaryError::Parameter(format!("m must be even and positive, got {m}")));
    }
    if c < 2 {
        return Err(AdversaryError::Parameter(format!("c must be at least 2, got {c}")));
    }
    if k == 0 {
        return Err(AdversaryError::Parameter("k must be at least 1".into()));
    }
    let overflow = |what| {
        let big = BigUint::from(c as u64).pow(k as u32 + 3) * BigUint::from(c as u64);
        AdversaryError::Overflow { what, bits: big.bits() + 1 }
    };
    let pow = |e: u32| c.checked_pow(e).ok_or_else(|| overflow("x_0"));
    let x0 = pow(k as u32 + 2)?.checked_mul(c - 1).ok_or_else(|| overflow("x_0"))?;
    let horizon = x0.checked_mul(c).ok_or_else(|| overflow("deadline"))? / (c - 1);
    let loose_count = (c as usize) * m / 2;
    let mut jobs = Vec::new();
    let mut id = 0u32;
    let mut push = |jobs: &mut Vec<Job>, r, d, p| {
        jobs.push(Job::new(id, r, d, p).expect("construction keeps p within the window"));
        id += 1;
    };
    let mut start: Time = 0;
    for r in 0..k {
        let p_tight = x0 / pow(r as u32)?;
        for _ in 0..m / 2 {
            push(&mut jobs, start, horizon, p_tight);
        }
        let x = pow((k - r) as u32)?;
        for wave in 0..c * (c - 1) {
            let t = start + wave * c * x;
            for _ in 0..loose_count {
                push(&mut jobs, t, t + c * x, x);
            }
        }
        start += p_tight;
    }
    let instance = Instance::new(jobs).expect("ids are distinct");
    if !is_feasible_preemptive(&instance, m) {
        return Err(AdversaryError::Certificate { machines: m });
    }
    Ok(LlfLowerBound {
        instance,
        m,
        c,
        rounds: k,
        x0,
        llf_machines: loose_count,
    })
}

/// Instances `J_1..J_{n−m}` sharing processing times and deadline order,
/// each with its flow-oracle optimum.
#[derive(Clone, Debug)]
pub struct DeadlineOrderedFamily {
    pub m: usize,
    pub n: usize,
    /// Every time was multiplied by `(m−1)^{n−m}`.
    pub scale: Time,
    pub instances: Vec<Instance>,
    pub optimum: Vec<usize>,
}

impl DeadlineOrderedFamily {
    /// Indices `k` (1-based) whose instance needs more than `m` machines.
    pub fn uncertified(&self) -> Vec<usize> {
        (0..self.instances.len())
            .filter(|&i| self.optimum[i] > self.m)
            .map(|i| i + 1)
            .collect()
    }
}

/// Builds the family with `p_j = (m/(m−1))^{j−m}` for `j > m`, the first
/// `m + k` jobs due at `(m/(m−1))^k` and the rest at `(m/(m−1))^{n−m}`.
pub fn gen_deadline_ordered_family(m: usize, n: usize) -> Result<DeadlineOrderedFamily, AdversaryError> {
    if m < 2 || n <= m {
        return Err(AdversaryError::Parameter(format!("need 2 <= m < n, got m={m}, n={n}")));
    }
    let steps = (n - m) as u32;
    let mb = BigUint::from(m as u64);
    let m1 = BigUint::from(m as u64 - 1);
    // (m/(m−1))^i scaled = m^i·(m−1)^{steps−i}
    let unit = |i: u32| mb.pow(i) * m1.pow(steps - i);
    let total = unit(steps) * BigUint::from(n as u64);
    if total.bits() > 62 {
        return Err(AdversaryError::Overflow {
            what: "scaled deadline-ordered family",
            bits: total.bits() + 1,
        });
    }
    let v = |i: u32| unit(i).to_i64().expect("checked bit width");
    let mut instances = Vec::with_capacity(n - m);
    for k in 1..=steps {
        let mut jobs = Vec::with_capacity(n);
        for j in 1..=n {
            let (p, d) = if j <= m {
                (v(0), v(k))
            } else {
                let i = (j - m) as u32;
                (v(i), if i <= k { v(k) } else { v(steps) })
            };
            jobs.push(Job::new(j as u32 - 1, 0, d, p).expect("p_j never exceeds its deadline"));
        }
        instances.push(Instance::new(jobs).expect("ids are distinct"));
    }
    let optimum = instances.par_iter().map(optimum_preemptive).collect();
    Ok(DeadlineOrderedFamily {
        m,
        n,
        scale: v(0),
        instances,
        optimum,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Phase {
    pub t: Time,
    /// Remaining work of the policy at `t`.
    pub residue_before: Time,
    /// Remaining work at `t+2` on jobs due at `t+3`.
    pub due_soon: Time,
    /// Remaining work at `t+3`, when the phase did not end the game.
    pub residue_after: Option<Time>,
    pub trap_released: bool,
}

#[derive(Clone, Debug)]
pub struct GameOutcome {
    pub m: usize,
    pub c: Rational,
    pub budget: usize,
    pub phases: Vec<Phase>,
    pub forced_miss: Option<Miss>,
    pub instance: Instance,
    /// Every prefix handed to the policy was feasible on `m` machines.
    pub certified: bool,
}

impl GameOutcome {
    /// `4m(1 − 7c/8)`.
    pub fn growth_bound(&self) -> Rational {
        Rational::from_integer(4 * self.m as i64) * (Rational::from_integer(1) - self.c * Rational::new(7, 8))
    }

    /// Per-phase residue growth of the phases that did not end the game.
    pub fn growth(&self) -> Vec<Time> {
        self.phases
            .iter()
            .filter_map(|p| p.residue_after.map(|a| a - p.residue_before))
            .collect()
    }

    pub fn growth_observed(&self) -> bool {
        let bound = self.growth_bound();
        self.growth().iter().all(|&g| Rational::from_integer(g) >= bound)
    }

    pub fn phase_limit(&self) -> usize {
        phase_limit(self.m, self.c)
    }
}

/// `⌈3cm⌉ + 2`.
pub fn phase_limit(m: usize, c: Rational) -> usize {
    (c * Rational::from_integer(3 * m as i64)).ceil().to_integer() as usize + 2
}

/// Plays the adaptive equal-length game with `p = 2` against the policy
/// built by `make` for budget `⌊c·m⌋`. Prefixes are replayed from scratch,
/// which matches the online run because the policy is deterministic.
pub fn play_eight_sevenths<F>(mut make: F, m: usize, c: Rational) -> Result<GameOutcome, AdversaryError>
where
    F: FnMut(usize) -> Box<dyn OnlinePolicy>,
{
    if m == 0 || m % 2 == 1 {
        return Err(AdversaryError::Parameter(format!("m must be even and positive, got {m}")));
    }
    if c < Rational::from_integer(1) || c >= Rational::new(8, 7) {
        return Err(AdversaryError::Parameter(format!("c must lie in [1, 8/7), got {c}")));
    }
    let budget = (c * Rational::from_integer(m as i64)).floor().to_integer() as usize;
    let limit = phase_limit(m, c);
    let threshold = Rational::from_integer(2 * m as i64) * (c - Rational::from_integer(1));
    let mut jobs: Vec<Job> = Vec::new();
    let mut phases = Vec::new();
    let mut certified = true;
    let mut forced_miss = None;

    let mut replay = |jobs: &[Job], certified: &mut bool| -> Result<_, AdversaryError> {
        let inst = Instance::new(jobs.to_vec()).expect("ids are distinct");
        *certified &= is_feasible_preemptive(&inst, m);
        let mut policy = make(budget);
        let run = simulate(&inst, &mut *policy)?;
        Ok((inst, run))
    };
    let remaining = |inst: &Instance, run: &crate::engine::SimulationRun, t: Time, due: Option<Time>| -> Time {
        let sched = run.preemptive_schedule();
        inst.jobs()
            .iter()
            .filter(|j| j.release <= t && j.deadline > t && due.is_none_or(|d| j.deadline == d))
            .map(|j| j.processing - sched.units_before(j.id, t))
            .sum()
    };

    let mut t: Time = 0;
    let mut residue = 0;
    for _ in 0..limit {
        let mut next = jobs.len() as u32;
        let mut add = |jobs: &mut Vec<Job>, r, d| {
            jobs.push(Job::new(next, r, d, 2).expect("window holds two units"));
            next += 1;
        };
        for _ in 0..m {
            add(&mut jobs, t, t + 3);
        }
        for _ in 0..m / 2 {
            add(&mut jobs, t, t + 6);
        }
        let (inst, run) = replay(&jobs, &mut certified)?;
        if let Some(miss) = run.misses.iter().find(|x| x.time <= t + 3) {
            forced_miss = Some(*miss);
            phases.push(Phase {
                t,
                residue_before: residue,
                due_soon: remaining(&inst, &run, t + 2, Some(t + 3)),
                residue_after: None,
                trap_released: false,
            });
            break;
        }
        let due_soon = remaining(&inst, &run, t + 2, Some(t + 3));
        if Rational::from_integer(due_soon) > threshold {
            for _ in 0..m {
                add(&mut jobs, t + 2, t + 4);
            }
            let (_, run) = replay(&jobs, &mut certified)?;
            forced_miss = run.first_miss();
            phases.push(Phase {
                t,
                residue_before: residue,
                due_soon,
                residue_after: None,
                trap_released: true,
            });
            break;
        }
        let after = remaining(&inst, &run, t + 3, None);
        phases.push(Phase {
            t,
            residue_before: residue,
            due_soon,
            residue_after: Some(after),
            trap_released: false,
        });
        residue = after;
        t += 3;
    }
    Ok(GameOutcome {
        m,
        c,
        budget,
        phases,
        forced_miss,
        instance: Instance::new(jobs).expect("ids are distinct"),
        certified,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Profile {
    General,
    Agreeable,
    EqualP { p: Time },
    UniformD { d: Time },
    Loose { alpha: (i64, i64) },
    Tight { alpha: (i64, i64) },
}

impl Profile {
    pub fn label(&self) -> String {
        match self {
            Profile::General => "general".into(),
            Profile::Agreeable => "agreeable".into(),
            Profile::EqualP { p } => format!("equal-p({p})"),
            Profile::UniformD { d } => format!("uniform-d({d})"),
            Profile::Loose { alpha } => format!("loose({}/{})", alpha.0, alpha.1),
            Profile::Tight { alpha } => format!("tight({}/{})", alpha.0, alpha.1),
        }
    }

    /// Parses the labels produced by [`Profile::label`].
    pub fn parse(s: &str) -> Option<Profile> {
        let (head, arg) = match s.split_once('(') {
            Some((h, rest)) => (h, Some(rest.strip_suffix(')')?)),
            None => (s, None),
        };
        let frac = |a: &str| -> Option<(i64, i64)> {
            let (n, d) = a.split_once('/')?;
            Some((n.trim().parse().ok()?, d.trim().parse().ok()?))
        };
        match (head, arg) {
            ("general", None) => Some(Profile::General),
            ("agreeable", None) => Some(Profile::Agreeable),
            ("equal-p", Some(a)) => Some(Profile::EqualP { p: a.parse().ok()? }),
            ("uniform-d", Some(a)) => Some(Profile::UniformD { d: a.parse().ok()? }),
            ("loose", Some(a)) => Some(Profile::Loose { alpha: frac(a)? }),
            ("tight", Some(a)) => Some(Profile::Tight { alpha: frac(a)? }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub instance: Instance,
    pub profile: Profile,
    pub seed: u64,
    pub optimum: usize,
}

/// Draws `n` jobs with deadlines at most `horizon` (the deadline itself for
/// `uniform-d`).
pub fn gen_random(profile: Profile, n: usize, horizon: Time, seed: u64) -> Result<Generated, AdversaryError> {
    if n == 0 {
        return Err(AdversaryError::Parameter("n must be at least 1".into()));
    }
    let bad = |msg: String| Err(AdversaryError::Parameter(msg));
    let alpha_of = |a: (i64, i64)| -> Result<Rational, AdversaryError> {
        if a.1 <= 0 || a.0 <= 0 || a.0 >= a.1 {
            return Err(AdversaryError::Parameter(format!("alpha must lie in (0, 1), got {}/{}", a.0, a.1)));
        }
        Ok(Rational::new(a.0, a.1))
    };
    if !matches!(profile, Profile::UniformD { .. }) && horizon < 1 {
        return bad(format!("horizon must be positive, got {horizon}"));
    }
    match profile {
        Profile::EqualP { p } if p < 1 || p > horizon => return bad(format!("p={p} does not fit horizon {horizon}")),
        Profile::UniformD { d } if d < 1 => return bad(format!("deadline must be positive, got {d}")),
        Profile::Loose { alpha } => {
            let a = alpha_of(alpha)?;
            if a * Rational::from_integer(horizon) < Rational::from_integer(1) {
                return bad(format!("no loose job fits horizon {horizon}"));
            }
        }
        Profile::Tight { alpha } => {
            alpha_of(alpha)?;
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::with_capacity(n);
    let mut triples: Vec<(Time, Time, Time)> = Vec::with_capacity(n);
    match profile {
        Profile::General => {
            for _ in 0..n {
                let r = rng.random_range(0..horizon);
                let d = rng.random_range(r + 1..=horizon);
                triples.push((r, d, rng.random_range(1..=d - r)));
            }
        }
        Profile::Agreeable => {
            let mut releases: Vec<Time> = (0..n).map(|_| rng.random_range(0..horizon)).collect();
            releases.sort_unstable();
            let mut last = 0;
            for r in releases {
                let d = rng.random_range(r + 1..=horizon).max(last);
                last = d;
                triples.push((r, d, rng.random_range(1..=d - r)));
            }
        }
        Profile::EqualP { p } => {
            for _ in 0..n {
                let r = rng.random_range(0..=horizon - p);
                triples.push((r, rng.random_range(r + p..=horizon), p));
            }
        }
        Profile::UniformD { d } => {
            for _ in 0..n {
                let r = rng.random_range(0..d);
                triples.push((r, d, rng.random_range(1..=d - r)));
            }
        }
        Profile::Loose { alpha } => {
            let a = Rational::new(alpha.0, alpha.1);
            let min_window = a.recip().ceil().to_integer();
            for _ in 0..n {
                let r = rng.random_range(0..=horizon - min_window);
                let d = rng.random_range(r + min_window..=horizon);
                let cap = (a * Rational::from_integer(d - r)).floor().to_integer();
                triples.push((r, d, rng.random_range(1..=cap)));
            }
        }
        Profile::Tight { alpha } => {
            let a = Rational::new(alpha.0, alpha.1);
            for _ in 0..n {
                let r = rng.random_range(0..horizon);
                let d = rng.random_range(r + 1..=horizon);
                let lo = (a * Rational::from_integer(d - r)).floor().to_integer() + 1;
                triples.push((r, d, rng.random_range(lo..=d - r)));
            }
        }
    }
    for (i, &(r, d, p)) in triples.iter().enumerate() {
        jobs.push(Job::new(i as u32, r, d, p).expect("drawn inside the window"));
    }
    let instance = Instance::new(jobs).expect("ids are distinct");
    debug_assert!(match profile {
        Profile::Loose { alpha } => instance
            .jobs()
            .iter()
            .all(|j| at_most_fraction(j.processing, Rational::new(alpha.0, alpha.1), j.window())),
        _ => true,
    });
    let optimum = optimum_preemptive(&instance);
    Ok(Generated {
        instance,
        profile,
        seed,
        optimum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Edf, Llf};

    #[test]
    fn deadline_ordered_small_example() {
        let family = gen_deadline_ordered_family(2, 4).unwrap();
        assert_eq!(family.instances.len(), 2);
        assert_eq!(family.scale, 1);
        let j1 = &family.instances[0];
        let p: Vec<Time> = j1.jobs().iter().map(|j| j.processing).collect();
        let d: Vec<Time> = j1.jobs().iter().map(|j| j.deadline).collect();
        assert_eq!(p, vec![1, 1, 2, 4]);
        assert_eq!(d, vec![2, 2, 2, 4]);
    }

    #[test]
    fn deadline_ordered_scaling_and_overflow() {
        let family = gen_deadline_ordered_family(3, 5).unwrap();
        // scale 2^2: p = 4, 4, 4, 6, 9; d̄_1 = 6, d̄ = 9
        assert_eq!(family.scale, 4);
        let j1 = &family.instances[0];
        let p: Vec<Time> = j1.jobs().iter().map(|j| j.processing).collect();
        assert_eq!(p, vec![4, 4, 4, 6, 9]);
        assert_eq!(j1.jobs()[3].deadline, 6);
        assert_eq!(j1.jobs()[4].deadline, 9);
        match gen_deadline_ordered_family(3, 60) {
            Err(AdversaryError::Overflow { bits, .. }) => assert!(bits > 63),
            other => panic!("expected overflow, got {other:?}"),
        }
        assert!(gen_deadline_ordered_family(1, 3).is_err());
    }

    #[test]
    fn llf_construction_shape() {
        let lb = gen_llf_lower_bound(2, 2, 1).unwrap();
        assert_eq!(lb.x0, 8);
        assert_eq!(lb.llf_machines, 2);
        // one tight job (p = 8, due 16) and 2 waves of 2 jobs with p = 2
        let jobs = lb.instance.jobs();
        assert_eq!(jobs.len(), 5);
        assert_eq!((jobs[0].release, jobs[0].deadline, jobs[0].processing), (0, 16, 8));
        assert_eq!((jobs[1].release, jobs[1].deadline, jobs[1].processing), (0, 4, 2));
        assert_eq!((jobs[3].release, jobs[3].deadline, jobs[3].processing), (4, 8, 2));
        let lb = gen_llf_lower_bound(2, 3, 2).unwrap();
        let tight: Vec<Time> = lb.instance.jobs().iter().filter(|j| j.deadline == 243).map(|j| j.processing).collect();
        assert_eq!(tight, vec![162, 54]);
        assert!(gen_llf_lower_bound(3, 2, 1).is_err());
        assert!(gen_llf_lower_bound(2, 1, 1).is_err());
    }

    #[test]
    fn llf_needs_more_machines_as_rounds_grow() {
        let needs: Vec<usize> = (1..=5)
            .map(|k| {
                let lb = gen_llf_lower_bound(2, 2, k).unwrap();
                (1..10)
                    .find(|&m| simulate(&lb.instance, &mut Llf::new(m)).unwrap().first_miss().is_none())
                    .unwrap()
            })
            .collect();
        assert!(needs.windows(2).all(|w| w[0] <= w[1]));
        assert!(needs[4] > 2);
    }

    #[test]
    fn random_profiles() {
        let a = gen_random(Profile::EqualP { p: 3 }, 5, 12, 7).unwrap();
        let b = gen_random(Profile::EqualP { p: 3 }, 5, 12, 7).unwrap();
        assert_eq!(a.instance, b.instance);
        assert!(a.instance.is_equal_processing());
        let loose = gen_random(Profile::Loose { alpha: (1, 3) }, 20, 30, 1).unwrap();
        assert!(loose.instance.jobs().iter().all(|j| j.is_loose(Rational::new(1, 3))));
        let tight = gen_random(Profile::Tight { alpha: (1, 2) }, 20, 30, 1).unwrap();
        assert!(tight.instance.jobs().iter().all(|j| !j.is_loose(Rational::new(1, 2))));
        for seed in 0..20 {
            assert!(gen_random(Profile::Agreeable, 10, 20, seed).unwrap().instance.is_agreeable());
        }
        assert!(gen_random(Profile::UniformD { d: 9 }, 6, 0, 3).unwrap().instance.is_uniform_deadline());
        assert!(gen_random(Profile::EqualP { p: 5 }, 3, 4, 0).is_err());
        assert!(gen_random(Profile::Loose { alpha: (1, 4) }, 3, 3, 0).is_err());
        for label in ["general", "equal-p(3)", "loose(1/3)", "uniform-d(8)"] {
            assert_eq!(Profile::parse(label).unwrap().label(), label);
        }
    }

    #[test]
    fn game_forces_edf_and_llf() {
        let c = Rational::new(9, 8);
        let edf = play_eight_sevenths(|b| Box::new(Edf::new(b)), 4, c).unwrap();
        assert_eq!(edf.budget, 4);
        assert!(edf.certified);
        assert!(edf.forced_miss.is_some());
        assert!(edf.phases.len() <= edf.phase_limit());
        let llf = play_eight_sevenths(|b| Box::new(Llf::new(b)), 4, c).unwrap();
        assert!(llf.forced_miss.is_some());
        assert!(llf.certified);
    }
}
