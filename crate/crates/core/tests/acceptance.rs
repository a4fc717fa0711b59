//! End-to-end acceptance checks. Each test prints one line
//! `criterion <id> <name>: PASS|FAIL <detail>` and then asserts.

use std::path::PathBuf;

use machmin::adversary::{
    gen_deadline_ordered_family, gen_llf_lower_bound, gen_random, play_eight_sevenths, Profile,
};
use machmin::composite::{
    agreeable_nonpreemptive, agreeable_preemptive, check_double, equal_p_nonpreemptive_semi,
    uniform_deadline_nonpreemptive, uniform_deadline_preemptive, Double, OptimumOracle,
};
use machmin::engine::{
    load_inequality_violations, simulate, EarlyFit, Edf, Llf, MediumFit, OnlinePolicy, SimulationRun,
};
use machmin::format::serialize_trace;
use machmin::harness::{bench, report_constants, to_csv, Campaign, ConstantReport};
use machmin::logn::{logn_schedule, transform, LaxityTransformSpec, TransformKind};
use machmin::optimum::{
    check_strong_density_theorem, optimum_nonpreemptive_with_cap, optimum_preemptive,
    optimum_preemptive_with_witness,
};
use machmin::{Instance, Job, Rational, Tightness, JobState};
use rayon::prelude::*;

type MakePolicy = fn(usize) -> Box<dyn OnlinePolicy>;

fn report(id: &str, name: &str, pass: bool, detail: String) {
    println!("criterion {id} {name}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn draw(profile: Profile, n: usize, horizon: i64, seed: u64) -> Instance {
    gen_random(profile, n, horizon, seed).unwrap().instance
}

fn clean(run: &SimulationRun) -> bool {
    run.first_miss().is_none()
}

fn np_opt(inst: &Instance) -> usize {
    optimum_nonpreemptive_with_cap(inst, 12).unwrap().0
}

fn tight_only(inst: &Instance, alpha: Rational) -> Instance {
    inst.filter(|j| JobState::new(*j).classify(alpha) == Tightness::Tight)
}

#[test]
fn criterion_1_strong_density() {
    let results: Vec<bool> = (0..1000u64)
        .into_par_iter()
        .map(|seed| {
            let n = 1 + (seed % 8) as usize;
            let inst = draw(Profile::General, n, 16, 1_000 + seed);
            check_strong_density_theorem(&inst).unwrap().holds()
        })
        .collect();
    let ok = results.iter().filter(|&&b| b).count();
    report("1", "strong density", ok == results.len(), format!("{ok}/{} instances", results.len()));
}

#[test]
fn criterion_2_loose_edf() {
    let mut details = Vec::new();
    let mut pass = true;
    for alpha in [Rational::new(1, 4), Rational::new(1, 3), Rational::new(1, 2)] {
        let bad: Vec<u64> = (0..500u64)
            .into_par_iter()
            .filter(|&seed| {
                let inst = draw(Profile::Loose { alpha: (*alpha.numer(), *alpha.denom()) }, 12, 24, 2_000 + seed);
                let (m, witness) = optimum_preemptive_with_witness(&inst);
                let budget = machmin::composite::loose_edf_budget(m, alpha);
                let run = simulate(&inst, &mut Edf::new(budget)).unwrap();
                !clean(&run) || !load_inequality_violations(&inst, &run, &witness, m, alpha).is_empty()
            })
            .collect();
        pass &= bad.is_empty();
        details.push(format!("alpha={alpha}: {} failures/500", bad.len()));
    }
    report("2", "loose EDF", pass, details.join(", "));
}

struct Family {
    name: &'static str,
    failures: usize,
    count: usize,
}

fn family(name: &'static str, count: u64, check: impl Fn(u64) -> Option<bool> + Sync) -> Family {
    let results: Vec<bool> = (0..count).into_par_iter().filter_map(&check).collect();
    Family {
        name,
        failures: results.iter().filter(|&&b| !b).count(),
        count: results.len(),
    }
}

#[test]
fn criterion_3_special_cases() {
    let half = Rational::new(1, 2);
    let third = Rational::new(1, 3);
    let families = [
        family("llf@m uniform-d", 300, |s| {
            let inst = draw(Profile::UniformD { d: 12 }, 8, 12, 3_000 + s);
            let m = optimum_preemptive(&inst);
            Some(clean(&uniform_deadline_preemptive(&inst, m).unwrap().run))
        }),
        family("edf@3m equal-p", 300, |s| {
            let inst = draw(Profile::EqualP { p: 3 }, 10, 20, 3_300 + s);
            let m = optimum_preemptive(&inst);
            Some(clean(&simulate(&inst, &mut Edf::new(3 * m)).unwrap()))
        }),
        family("equal-p np semi @4m", 300, |s| {
            let inst = draw(Profile::EqualP { p: 3 }, 8, 18, 3_600 + s);
            let m = np_opt(&inst);
            let out = equal_p_nonpreemptive_semi(&inst, m).unwrap();
            Some(clean(&out.run) && out.run.machines_used <= 4 * m)
        }),
        family("agreeable preemptive @18m", 300, |s| {
            let inst = draw(Profile::Agreeable, 10, 20, 3_900 + s);
            let m = optimum_preemptive(&inst);
            let out = agreeable_preemptive(&inst, m, half).unwrap();
            Some(clean(&out.run) && out.run.machines_used <= 18 * m)
        }),
        family("agreeable np @9m", 300, |s| {
            let inst = draw(Profile::Agreeable, 8, 16, 4_200 + s);
            let m = np_opt(&inst);
            let out = agreeable_nonpreemptive(&inst, m, half).unwrap();
            Some(clean(&out.run) && out.run.machines_used <= 9 * m)
        }),
        family("uniform-d np @ceil(5.25m)", 300, |s| {
            let inst = draw(Profile::UniformD { d: 12 }, 8, 12, 4_500 + s);
            let m = np_opt(&inst);
            let out = uniform_deadline_nonpreemptive(&inst, m, third).unwrap();
            Some(clean(&out.run) && out.run.machines_used <= (21 * m).div_ceil(4))
        }),
        family("mediumfit tight agreeable @(2ceil(1/a)+1)m", 400, |s| {
            let inst = tight_only(&draw(Profile::Agreeable, 10, 16, 4_800 + s), half);
            if inst.is_empty() {
                return None;
            }
            let m = np_opt(&inst);
            let run = simulate(&inst.scaled(2), &mut MediumFit::new()).unwrap();
            Some(clean(&run) && run.machines_used <= 5 * m)
        }),
        family("earlyfit tight uniform-d @ceil(1/a)m", 400, |s| {
            let inst = tight_only(&draw(Profile::UniformD { d: 12 }, 10, 12, 5_200 + s), third);
            if inst.is_empty() {
                return None;
            }
            let m = np_opt(&inst);
            let run = simulate(&inst, &mut EarlyFit).unwrap();
            Some(clean(&run) && run.machines_used <= 3 * m)
        }),
    ];
    let pass = families.iter().all(|f| f.failures == 0 && f.count >= 300);
    let detail: Vec<String> = families
        .iter()
        .map(|f| format!("{} {}/{}", f.name, f.count - f.failures, f.count))
        .collect();
    report("3", "special-case bounds", pass, detail.join("; "));
}

fn stream(pattern: &str, seed: u64) -> Instance {
    let mut jobs = Vec::new();
    let mut push = |r: i64, d: i64, p: i64| {
        let id = jobs.len() as u32;
        jobs.push(Job::new(id, r, d, p).unwrap());
    };
    match pattern {
        "constant" => {
            for t in 0..40 {
                push(t, t + 4 + (seed as i64 + t) % 3, 2);
            }
        }
        "doubling" => {
            for phase in 0..6i64 {
                for _ in 0..1 << phase {
                    push(6 * phase, 6 * phase + 3, 2 + (seed as i64 + phase) % 2);
                }
            }
        }
        _ => {
            let g = gen_random(Profile::General, 4, 6, seed).unwrap();
            for burst in 0..5i64 {
                let size = 1 + ((seed as i64 * 7 + burst * 13) % 9);
                for k in 0..size {
                    let j = g.instance.jobs()[(k % 4) as usize];
                    push(10 * burst + j.release, 10 * burst + j.deadline, j.processing);
                }
            }
        }
    }
    Instance::new(jobs).unwrap()
}

#[test]
fn criterion_4_double() {
    let mut traces = 0;
    let mut failures = Vec::new();
    for pattern in ["constant", "doubling", "bursty"] {
        for seed in 0..10 {
            let inst = stream(pattern, seed);
            for a in [1i64, 2, 4] {
                let factory = Box::new(move |m: usize| -> Box<dyn OnlinePolicy + Send> {
                    Box::new(Edf::new(a as usize * m))
                });
                let mut double = Double::new(Rational::from_integer(a), true, OptimumOracle::Preemptive, factory);
                simulate(&inst, &mut double).unwrap();
                let check = check_double(&double.epochs(), Rational::from_integer(a));
                traces += 1;
                if !check.total_bound || !check.epoch_inequality || check.opened > 4 * a as usize * check.final_m {
                    failures.push(format!("{pattern}/{seed}/a={a}"));
                }
            }
        }
    }
    report(
        "4",
        "Double reduction",
        failures.is_empty(),
        format!("{} of {traces} traces within 4·a·m(final) with epoch inequality {failures:?}", traces - failures.len()),
    );
}

#[test]
fn criterion_5_logn() {
    let alpha = Rational::new(1, 2);
    let floor = Rational::new(355, 1000);
    let outcomes: Vec<_> = (0..500u64)
        .into_par_iter()
        .map(|i| {
            let n = 10 + (i as usize * 190) / 499;
            let inst = draw(Profile::General, n, n as i64, 6_000 + i);
            let m = optimum_preemptive(&inst);
            let out = logn_schedule(&inst, m, alpha).unwrap();
            let ok_run = clean(&out.run) && out.run.validate(&inst).unwrap().feasible;
            let ok_floor = out.floor_violations.is_empty() && out.min_laxity_ratio.is_none_or(|r| r >= floor);
            let ok_groups = out.rebuilds.iter().all(|r| r.group_bound_holds);
            (ok_run, ok_floor, ok_groups, out.min_laxity_ratio, out.constant(m, n))
        })
        .collect();
    let misses = outcomes.iter().filter(|o| !o.0).count();
    let floors = outcomes.iter().filter(|o| !o.1).count();
    let groups = outcomes.iter().filter(|o| !o.2).count();
    let min_ratio = outcomes.iter().filter_map(|o| o.3).min();
    let cs: Vec<Rational> = outcomes.iter().map(|o| o.4).collect();
    let max_c = cs.iter().max().copied().unwrap();
    let mut sorted = cs.clone();
    sorted.sort();
    let p95 = sorted[(sorted.len() * 95).div_ceil(100) - 1];
    report(
        "5",
        "log-n scheduler",
        misses == 0 && floors == 0 && groups == 0,
        format!(
            "500 instances: {misses} with misses, {floors} floor violations, {groups} group-bound violations; \
             min laxity ratio {}; C max {max_c} ({:.4}) p95 {p95} ({:.4})",
            min_ratio.map_or("n/a".into(), |r| format!("{r} ({:.4})", *r.numer() as f64 / *r.denom() as f64)),
            *max_c.numer() as f64 / *max_c.denom() as f64,
            *p95.numer() as f64 / *p95.denom() as f64,
        ),
    );
}

fn optimum_after(inst: &Instance, kind: TransformKind, param: Rational) -> usize {
    let out = transform(inst, &LaxityTransformSpec { kind, param }).unwrap();
    optimum_preemptive(&out.instance)
}

fn ceil_div(x: Rational) -> usize {
    x.ceil().to_integer() as usize
}

#[test]
fn criterion_6_transforms() {
    let gammas = [Rational::new(1, 2), Rational::new(1, 4)];
    let shortened: Vec<String> = (0..500u64)
        .into_par_iter()
        .flat_map_iter(|s| {
            let inst = draw(Profile::General, 8, 16, 7_000 + s);
            let m = optimum_preemptive(&inst);
            gammas.iter().flat_map(move |&g| {
                let bound = ceil_div(Rational::from_integer(m as i64) / g);
                let inst = inst.clone();
                [TransformKind::RightShortened, TransformKind::LeftShortened]
                    .into_iter()
                    .filter(move |&k| optimum_after(&inst, k, g) > bound)
                    .map(move |k| format!("seed {s} {k:?} gamma={g}"))
            })
        })
        .collect();
    let scaled: Vec<String> = (0..500u64)
        .into_par_iter()
        .flat_map_iter(|s| {
            let inst = draw(Profile::Tight { alpha: (1, 2) }, 8, 16, 7_500 + s);
            let m = optimum_preemptive(&inst);
            gammas.iter().filter_map(move |&b| {
                let bound = ceil_div(Rational::from_integer(4 * m as i64) / b);
                (optimum_after(&inst, TransformKind::ScaleLaxity, b) > bound).then(|| format!("seed {s} beta={b}"))
            })
        })
        .collect();
    report(
        "6",
        "laxity transforms",
        shortened.is_empty() && scaled.is_empty(),
        format!(
            "shortened: {} violations in 2000 checks; scaled laxity: {} violations in 1000 checks {:?}",
            shortened.len(),
            scaled.len(),
            shortened.iter().chain(&scaled).take(3).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_7a_deadline_ordered() {
    let mut uncertified = Vec::new();
    let mut edf_missed_all = true;
    for n in 3..=10 {
        let family = gen_deadline_ordered_family(2, n).unwrap();
        for k in family.uncertified() {
            uncertified.push(format!("n={n} k={k} opt={}", family.optimum[k - 1]));
        }
        let missed = family
            .instances
            .iter()
            .any(|inst| simulate(inst, &mut Edf::new(n - 2)).unwrap().first_miss().is_some());
        edf_missed_all &= missed;
    }
    report(
        "7a",
        "deadline-ordered family",
        uncertified.is_empty() && edf_missed_all,
        format!(
            "EDF at n-2 misses in every family: {edf_missed_all}; {} instances not feasible on m=2: {}",
            uncertified.len(),
            uncertified.join(", ")
        ),
    );
}

#[test]
fn criterion_7b_llf_family() {
    let mut detail = Vec::new();
    let mut pass = true;
    for k in 1..=3 {
        let lb = gen_llf_lower_bound(2, 2, k).unwrap();
        let run = simulate(&lb.instance, &mut Llf::new(lb.llf_machines)).unwrap();
        let missed = run.first_miss().is_some();
        pass &= missed;
        detail.push(format!(
            "k={k}: n={} certified on m=2, LLF@{} {}",
            lb.instance.len(),
            lb.llf_machines,
            if missed { "misses" } else { "does not miss" }
        ));
    }
    report("7b", "LLF family", pass, detail.join("; "));
}

#[test]
fn criterion_7c_eight_sevenths_game() {
    let c = Rational::new(9, 8);
    let mut detail = Vec::new();
    let mut pass = true;
    let makers: [(&str, MakePolicy); 2] = [
        ("edf", |b| Box::new(Edf::new(b))),
        ("llf", |b| Box::new(Llf::new(b))),
    ];
    for (name, make) in makers {
        let out = play_eight_sevenths(make, 4, c).unwrap();
        let ok = out.forced_miss.is_some()
            && out.phases.len() <= out.phase_limit()
            && out.certified
            && !out.growth().is_empty()
            && out.growth_observed();
        pass &= ok;
        detail.push(format!(
            "{name}@{}: forced miss {:?} after {} phases (limit {}), growth {:?} vs bound {}",
            out.budget,
            out.forced_miss.map(|m| m.time),
            out.phases.len(),
            out.phase_limit(),
            out.growth(),
            out.growth_bound()
        ));
    }
    report("7c", "8/7 game", pass, detail.join("; "));
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn golden_campaign() -> Campaign {
    Campaign {
        profile: Profile::Agreeable,
        n: 8,
        horizon: 16,
        count: 12,
        seed: 8_000,
        policies: vec![
            "edf@3m".into(),
            "llf".into(),
            "agreeable-p".into(),
            "agreeable-np".into(),
            "logn".into(),
        ],
        timing: false,
    }
}

fn golden_traces() -> String {
    let inst = draw(Profile::General, 12, 20, 8_100);
    let m = optimum_preemptive(&inst);
    let mut out = String::new();
    out.push_str(&serialize_trace(&simulate(&inst, &mut Edf::new(m)).unwrap().trace()));
    out.push_str(&serialize_trace(&logn_schedule(&inst, m, Rational::new(1, 2)).unwrap().run.trace()));
    let agreeable = draw(Profile::Agreeable, 8, 16, 8_200);
    let m = np_opt(&agreeable);
    out.push_str(&serialize_trace(&agreeable_nonpreemptive(&agreeable, m, Rational::new(1, 2)).unwrap().run.trace()));
    out
}

#[test]
fn criterion_8_determinism() {
    let first = (to_csv(&bench(&golden_campaign()).unwrap()), golden_traces());
    let second = (to_csv(&bench(&golden_campaign()).unwrap()), golden_traces());
    if std::env::var_os("MACHMIN_BLESS").is_some() {
        std::fs::create_dir_all(golden("")).unwrap();
        std::fs::write(golden("bench.csv"), &first.0).unwrap();
        std::fs::write(golden("traces.txt"), &first.1).unwrap();
    }
    let stored = (
        std::fs::read_to_string(golden("bench.csv")).unwrap_or_default(),
        std::fs::read_to_string(golden("traces.txt")).unwrap_or_default(),
    );
    let rows = bench(&golden_campaign()).unwrap();
    let constants = report_constants(&rows);
    let pass = first == second && first == stored && matches!(constants, ConstantReport::Measured { .. });
    report(
        "8",
        "determinism",
        pass,
        format!(
            "two runs identical: {}; golden bench.csv match: {}; golden traces.txt match: {}; logn constants {constants}",
            first == second,
            first.0 == stored.0,
            first.1 == stored.1
        ),
    );
}
