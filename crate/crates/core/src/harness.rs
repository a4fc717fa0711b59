//! Policy registry, benchmark campaigns and their CSV/JSONL output, trace
//! verification and the log-n constant report.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_traits::Signed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{gen_random, AdversaryError, Profile};
use crate::composite::{
    agreeable_nonpreemptive, agreeable_nonpreemptive_online, agreeable_preemptive, agreeable_preemptive_online,
    equal_p_nonpreemptive_online, equal_p_nonpreemptive_semi, equal_p_online, uniform_deadline_nonpreemptive,
    uniform_deadline_nonpreemptive_online, uniform_deadline_preemptive, uniform_deadline_preemptive_online,
    CompositeRun, EQUAL_P_ONLINE_ALPHA,
};
use crate::engine::{simulate, EarlyFit, Edf, EdfNonpreemptive, Llf, MediumFit, Miss, PolicyError, SimulationRun};
use crate::format::{parse_instance, parse_trace, Trace};
use crate::logn::logn_schedule;
use crate::model::{validate_nonpreemptive, validate_preemptive, Instance, ModelError, Rational, Time, ValidationReport};
use crate::optimum::{optimum_nonpreemptive_with_cap, optimum_preemptive, OracleError, DEFAULT_NONPREEMPTIVE_CAP};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("policy {0} has no machine budget to multiply")]
    NoBudget(String),
    #[error("trace is {found} but {expected} was claimed")]
    FormatMismatch { expected: &'static str, found: &'static str },
    #[error("harness bug: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

impl HarnessError {
    /// True when the failure is an exceeded exact-oracle cap.
    pub fn is_oracle_cap(&self) -> bool {
        matches!(
            self,
            HarnessError::Oracle(OracleError::CapExceeded { .. })
                | HarnessError::Policy(PolicyError::Oracle(OracleError::CapExceeded { .. }))
        )
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Edf,
    Llf,
    EarlyFit,
    MediumFit,
    EdfNp,
    AgreeableP,
    AgreeablePOnline,
    AgreeableNp,
    AgreeableNpOnline,
    EqualPSemi,
    EqualPNpOnline,
    EqualPOnline,
    UniformP,
    UniformPOnline,
    UniformNp,
    UniformNpOnline,
    Logn,
}

const NAMES: &[(PolicyKind, &str)] = &[
    (PolicyKind::Edf, "edf"),
    (PolicyKind::Llf, "llf"),
    (PolicyKind::EarlyFit, "earlyfit"),
    (PolicyKind::MediumFit, "mediumfit"),
    (PolicyKind::EdfNp, "edf-np"),
    (PolicyKind::AgreeableP, "agreeable-p"),
    (PolicyKind::AgreeablePOnline, "agreeable-p-online"),
    (PolicyKind::AgreeableNp, "agreeable-np"),
    (PolicyKind::AgreeableNpOnline, "agreeable-np-online"),
    (PolicyKind::EqualPSemi, "equalp-semi"),
    (PolicyKind::EqualPNpOnline, "equalp-semi-online"),
    (PolicyKind::EqualPOnline, "equalp-online"),
    (PolicyKind::UniformP, "uniform-p"),
    (PolicyKind::UniformPOnline, "uniform-p-online"),
    (PolicyKind::UniformNp, "uniform-np"),
    (PolicyKind::UniformNpOnline, "uniform-np-online"),
    (PolicyKind::Logn, "logn"),
];

impl PolicyKind {
    pub fn name(self) -> &'static str {
        NAMES.iter().find(|(k, _)| *k == self).expect("every kind is named").1
    }

    pub fn all() -> impl Iterator<Item = PolicyKind> {
        NAMES.iter().map(|(k, _)| *k)
    }

    /// Policies whose machine count is a plain budget.
    pub fn has_budget(self) -> bool {
        matches!(self, PolicyKind::Edf | PolicyKind::Llf | PolicyKind::EdfNp)
    }

    pub fn is_preemptive(self) -> bool {
        matches!(
            self,
            PolicyKind::Edf
                | PolicyKind::Llf
                | PolicyKind::AgreeableP
                | PolicyKind::AgreeablePOnline
                | PolicyKind::EqualPOnline
                | PolicyKind::UniformP
                | PolicyKind::UniformPOnline
                | PolicyKind::Logn
        )
    }

    /// Online variants ignore the supplied optimum.
    pub fn online(self) -> Option<PolicyKind> {
        Some(match self {
            PolicyKind::AgreeableP => PolicyKind::AgreeablePOnline,
            PolicyKind::AgreeableNp => PolicyKind::AgreeableNpOnline,
            PolicyKind::EqualPSemi => PolicyKind::EqualPNpOnline,
            PolicyKind::UniformP => PolicyKind::UniformPOnline,
            PolicyKind::UniformNp => PolicyKind::UniformNpOnline,
            _ => return None,
        })
    }

    /// α used when none is given.
    pub fn default_alpha(self) -> Option<Rational> {
        match self {
            PolicyKind::AgreeableP | PolicyKind::AgreeableNp | PolicyKind::Logn => Some(Rational::new(1, 2)),
            PolicyKind::UniformNp => Some(Rational::new(1, 3)),
            PolicyKind::EqualPOnline => Some(Rational::new(EQUAL_P_ONLINE_ALPHA.0, EQUAL_P_ONLINE_ALPHA.1)),
            _ => None,
        }
    }
}

/// `name[@km]`: a policy and, for budgeted policies, a multiple of the optimum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub multiplier: Option<usize>,
    pub alpha: Option<Rational>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> PolicySpec {
        PolicySpec {
            kind,
            multiplier: None,
            alpha: None,
        }
    }

    pub fn alpha(&self) -> Option<Rational> {
        self.alpha.or(self.kind.default_alpha())
    }
}

impl FromStr for PolicySpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<PolicySpec, HarnessError> {
        let (name, mult) = match s.split_once('@') {
            Some((n, m)) => {
                let k = m
                    .strip_suffix('m')
                    .and_then(|k| if k.is_empty() { Some(1) } else { k.parse().ok() })
                    .filter(|&k: &usize| k > 0)
                    .ok_or_else(|| HarnessError::UnknownPolicy(s.into()))?;
                (n, Some(k))
            }
            None => (s, None),
        };
        let kind = NAMES
            .iter()
            .find(|(_, n)| *n == name)
            .map(|(k, _)| *k)
            .ok_or_else(|| HarnessError::UnknownPolicy(s.into()))?;
        if mult.is_some() && !kind.has_budget() {
            return Err(HarnessError::NoBudget(name.into()));
        }
        Ok(PolicySpec {
            kind,
            multiplier: mult,
            alpha: None,
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        if let Some(k) = self.multiplier {
            write!(f, "@{k}m")?;
        }
        Ok(())
    }
}

/// A finished run; times of `run` are those of the instance scaled by `scale`.
#[derive(Clone, Debug)]
pub struct PolicyRun {
    pub run: SimulationRun,
    pub scale: Time,
    /// Usage guarantee reported by the policy itself, if any.
    pub bound: Option<usize>,
    /// `machines / (m·⌈log₂ n⌉)` for the log-n scheduler.
    pub constant: Option<Rational>,
}

impl PolicyRun {
    pub fn validate(&self, instance: &Instance) -> Result<ValidationReport, ModelError> {
        if self.scale == 1 {
            self.run.validate(instance)
        } else {
            self.run.validate(&instance.scaled(self.scale))
        }
    }
}

fn from_composite(c: CompositeRun) -> PolicyRun {
    PolicyRun {
        run: c.run,
        scale: c.scale,
        bound: None,
        constant: None,
    }
}

/// Runs `spec` with `m` as the optimum (or, for budgeted policies, the base
/// machine count that the multiplier scales).
pub fn run_policy(spec: &PolicySpec, instance: &Instance, m: usize) -> Result<PolicyRun, HarnessError> {
    let budget = m * spec.multiplier.unwrap_or(1);
    let alpha = spec.alpha();
    let cap = DEFAULT_NONPREEMPTIVE_CAP;
    let plain = |run| PolicyRun {
        run,
        scale: 1,
        bound: None,
        constant: None,
    };
    let a = || alpha.expect("kind has a default alpha");
    Ok(match spec.kind {
        PolicyKind::Edf => plain(simulate(instance, &mut Edf::new(budget))?),
        PolicyKind::Llf => plain(simulate(instance, &mut Llf::new(budget))?),
        PolicyKind::EdfNp => plain(simulate(instance, &mut EdfNonpreemptive::new(budget))?),
        PolicyKind::EarlyFit => plain(simulate(instance, &mut EarlyFit)?),
        PolicyKind::MediumFit => {
            let scale = if instance.jobs().iter().all(|j| j.laxity() % 2 == 0) { 1 } else { 2 };
            let run = simulate(&instance.scaled(scale), &mut MediumFit::new())?;
            PolicyRun {
                run,
                scale,
                bound: None,
                constant: None,
            }
        }
        PolicyKind::AgreeableP => from_composite(agreeable_preemptive(instance, m, a())?),
        PolicyKind::AgreeablePOnline => from_composite(agreeable_preemptive_online(instance)?),
        PolicyKind::AgreeableNp => from_composite(agreeable_nonpreemptive(instance, m, a())?),
        PolicyKind::AgreeableNpOnline => from_composite(agreeable_nonpreemptive_online(instance, cap)?),
        PolicyKind::EqualPSemi => from_composite(equal_p_nonpreemptive_semi(instance, m)?),
        PolicyKind::EqualPNpOnline => from_composite(equal_p_nonpreemptive_online(instance, cap)?),
        PolicyKind::EqualPOnline => {
            let (c, bound) = equal_p_online(instance, a())?;
            PolicyRun {
                bound: Some(bound),
                ..from_composite(c)
            }
        }
        PolicyKind::UniformP => from_composite(uniform_deadline_preemptive(instance, m)?),
        PolicyKind::UniformPOnline => from_composite(uniform_deadline_preemptive_online(instance)?),
        PolicyKind::UniformNp => from_composite(uniform_deadline_nonpreemptive(instance, m, a())?),
        PolicyKind::UniformNpOnline => from_composite(uniform_deadline_nonpreemptive_online(instance, cap)?),
        PolicyKind::Logn => {
            let out = logn_schedule(instance, m, a())?;
            let constant = out.constant(m, instance.len());
            PolicyRun {
                run: out.run,
                scale: 1,
                bound: None,
                constant: Some(constant),
            }
        }
    })
}

/// Optimum the policy is measured against: preemptive for preemptive
/// policies, the exact non-preemptive optimum otherwise.
pub fn reference_optimum(kind: PolicyKind, instance: &Instance) -> Result<usize, HarnessError> {
    if kind.is_preemptive() {
        Ok(optimum_preemptive(instance))
    } else {
        Ok(optimum_nonpreemptive_with_cap(instance, DEFAULT_NONPREEMPTIVE_CAP)?.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Campaign {
    pub profile: Profile,
    pub n: usize,
    pub horizon: Time,
    pub count: usize,
    /// Instance `i` is drawn with seed `seed + i`.
    pub seed: u64,
    pub policies: Vec<String>,
    /// Record wall-clock milliseconds per row (breaks byte stability).
    #[serde(default)]
    pub timing: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    Miss,
    OracleSkipped,
    Rejected,
}

impl RowStatus {
    fn label(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Miss => "miss",
            RowStatus::OracleSkipped => "oracle-skipped",
            RowStatus::Rejected => "rejected",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchRow {
    pub instance: String,
    pub profile: String,
    pub n: usize,
    pub m_opt: Option<usize>,
    pub policy: String,
    pub params: String,
    pub machines_used: Option<usize>,
    pub first_miss: Option<Miss>,
    pub ratio: Option<Rational>,
    pub constant: Option<Rational>,
    pub status: RowStatus,
    pub wall_ms: Option<u128>,
}

/// Exact decimal rendering of `x` rounded half-up to `places` digits.
pub fn decimal(x: Rational, places: u32) -> String {
    let scale = 10i128.pow(places);
    let (num, den) = (*x.numer() as i128, *x.denom() as i128);
    let scaled = (2 * num.abs() * scale + den) / (2 * den);
    let sign = if x.is_negative() && scaled != 0 { "-" } else { "" };
    let (int, frac) = (scaled / scale, scaled % scale);
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac:0width$}", width = places as usize)
    }
}

fn bench_one(spec: &PolicySpec, id: &str, profile: &str, instance: &Instance, timing: bool) -> Result<BenchRow, HarnessError> {
    let started = Instant::now();
    let mut row = BenchRow {
        instance: id.into(),
        profile: profile.into(),
        n: instance.len(),
        m_opt: None,
        policy: spec.to_string(),
        params: String::new(),
        machines_used: None,
        first_miss: None,
        ratio: None,
        constant: None,
        status: RowStatus::Ok,
        wall_ms: None,
    };
    let outcome = reference_optimum(spec.kind, instance).and_then(|m| {
        row.m_opt = Some(m);
        run_policy(spec, instance, m)
    });
    match outcome {
        Ok(out) => {
            row.params = out.run.params.clone();
            row.machines_used = Some(out.run.machines_used);
            row.first_miss = out.run.first_miss();
            row.constant = out.constant;
            row.ratio = row
                .m_opt
                .filter(|&m| m > 0)
                .map(|m| Rational::new(out.run.machines_used as i64, m as i64));
            if row.first_miss.is_some() {
                row.status = RowStatus::Miss;
            } else if !out.validate(instance)?.feasible {
                return Err(HarnessError::Inconsistent(format!(
                    "{} on {id}: no miss recorded but the trace does not validate",
                    row.policy
                )));
            }
        }
        Err(e) if e.is_oracle_cap() => row.status = RowStatus::OracleSkipped,
        Err(HarnessError::Policy(PolicyError::Precondition(msg))) => {
            row.status = RowStatus::Rejected;
            row.params = msg;
        }
        Err(e) => return Err(e),
    }
    if timing {
        row.wall_ms = Some(started.elapsed().as_millis());
    }
    Ok(row)
}

/// One row per (instance, policy), in that order.
pub fn bench(campaign: &Campaign) -> Result<Vec<BenchRow>, HarnessError> {
    let specs: Vec<PolicySpec> = campaign
        .policies
        .iter()
        .map(|p| p.parse())
        .collect::<Result<_, _>>()?;
    let instances: Vec<(String, Instance)> = (0..campaign.count)
        .into_par_iter()
        .map(|i| {
            let g = gen_random(campaign.profile, campaign.n, campaign.horizon, campaign.seed + i as u64)?;
            Ok((format!("{:05}", i), g.instance))
        })
        .collect::<Result<_, HarnessError>>()?;
    bench_instances(&instances, &campaign.profile.label(), &specs, campaign.timing)
}

/// Bench rows for explicit instances, ordered by (instance, policy).
pub fn bench_instances(
    instances: &[(String, Instance)],
    profile: &str,
    specs: &[PolicySpec],
    timing: bool,
) -> Result<Vec<BenchRow>, HarnessError> {
    let cells: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..specs.len()).map(move |p| (i, p)))
        .collect();
    cells
        .into_par_iter()
        .map(|(i, p)| bench_one(&specs[p], &instances[i].0, profile, &instances[i].1, timing))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicySummary {
    pub policy: String,
    pub rows: usize,
    pub misses: usize,
    pub skipped: usize,
    pub rejected: usize,
    pub max_ratio: Option<Rational>,
}

/// Per-policy aggregates in first-appearance order.
pub fn summarize(rows: &[BenchRow]) -> Vec<PolicySummary> {
    let mut out: Vec<PolicySummary> = Vec::new();
    for row in rows {
        let idx = match out.iter().position(|s| s.policy == row.policy) {
            Some(i) => i,
            None => {
                out.push(PolicySummary {
                    policy: row.policy.clone(),
                    rows: 0,
                    misses: 0,
                    skipped: 0,
                    rejected: 0,
                    max_ratio: None,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.rows += 1;
        match row.status {
            RowStatus::Miss => s.misses += 1,
            RowStatus::OracleSkipped => s.skipped += 1,
            RowStatus::Rejected => s.rejected += 1,
            RowStatus::Ok => {}
        }
        if let Some(r) = row.ratio {
            s.max_ratio = Some(s.max_ratio.map_or(r, |m| m.max(r)));
        }
    }
    out
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

fn miss_label(m: Option<Miss>) -> String {
    m.map_or("none".into(), |m| format!("{}@{}", m.job, m.time))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.into()
    }
}

/// CSV with one line per row followed by one `summary` line per policy.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let timing = rows.iter().any(|r| r.wall_ms.is_some());
    let mut out = String::from(
        "instance,profile,n,m_opt,policy,params,machines_used,first_miss,ratio,ratio_decimal,constant,status",
    );
    if timing {
        out.push_str(",wall_ms");
    }
    out.push('\n');
    for r in rows {
        let fields = [
            r.instance.clone(),
            r.profile.clone(),
            r.n.to_string(),
            opt(r.m_opt),
            r.policy.clone(),
            r.params.clone(),
            opt(r.machines_used),
            miss_label(r.first_miss),
            opt(r.ratio),
            r.ratio.map_or(String::new(), |x| decimal(x, 4)),
            r.constant.map_or(String::new(), |x| decimal(x, 4)),
            r.status.label().into(),
        ];
        let line: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
        out.push_str(&line.join(","));
        if timing {
            out.push(',');
            out.push_str(&opt(r.wall_ms));
        }
        out.push('\n');
    }
    for s in summarize(rows) {
        let status = format!("rows={} misses={} skipped={} rejected={}", s.rows, s.misses, s.skipped, s.rejected);
        let line = [
            "summary".to_string(),
            rows.first().map_or(String::new(), |r| r.profile.clone()),
            String::new(),
            String::new(),
            s.policy.clone(),
            String::new(),
            String::new(),
            String::new(),
            opt(s.max_ratio),
            s.max_ratio.map_or(String::new(), |x| decimal(x, 4)),
            String::new(),
            status,
        ];
        let line: Vec<String> = line.iter().map(|f| csv_field(f)).collect();
        out.push_str(&line.join(","));
        if timing {
            out.push(',');
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct JsonRow<'a> {
    instance: &'a str,
    profile: &'a str,
    n: usize,
    m_opt: Option<usize>,
    policy: &'a str,
    params: &'a str,
    machines_used: Option<usize>,
    first_miss: Option<String>,
    ratio: Option<String>,
    ratio_decimal: Option<String>,
    constant: Option<String>,
    status: RowStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<u128>,
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    summary: &'a str,
    rows: usize,
    misses: usize,
    skipped: usize,
    rejected: usize,
    max_ratio: Option<String>,
}

/// One JSON object per line; summaries follow the rows.
pub fn to_jsonl(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let row = JsonRow {
            instance: &r.instance,
            profile: &r.profile,
            n: r.n,
            m_opt: r.m_opt,
            policy: &r.policy,
            params: &r.params,
            machines_used: r.machines_used,
            first_miss: r.first_miss.map(|m| miss_label(Some(m))),
            ratio: r.ratio.map(|x| x.to_string()),
            ratio_decimal: r.ratio.map(|x| decimal(x, 4)),
            constant: r.constant.map(|x| decimal(x, 4)),
            status: r.status,
            wall_ms: r.wall_ms,
        };
        out.push_str(&serde_json::to_string(&row).expect("plain data serializes"));
        out.push('\n');
    }
    for s in summarize(rows) {
        let row = JsonSummary {
            summary: &s.policy,
            rows: s.rows,
            misses: s.misses,
            skipped: s.skipped,
            rejected: s.rejected,
            max_ratio: s.max_ratio.map(|x| x.to_string()),
        };
        out.push_str(&serde_json::to_string(&row).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Claim {
    Preemptive,
    Nonpreemptive,
}

/// Parses both texts and validates the trace; with a claim, the trace kind must match.
pub fn verify(instance_text: &str, trace_text: &str, claim: Option<Claim>) -> Result<ValidationReport, HarnessError> {
    let instance = parse_instance(instance_text)?;
    let trace = parse_trace(trace_text)?;
    let found = trace.kind();
    match (claim, &trace) {
        (Some(Claim::Preemptive), Trace::Nonpreemptive(_)) => {
            return Err(HarnessError::FormatMismatch {
                expected: "preemptive",
                found,
            })
        }
        (Some(Claim::Nonpreemptive), Trace::Preemptive(_)) => {
            return Err(HarnessError::FormatMismatch {
                expected: "nonpreemptive",
                found,
            })
        }
        _ => {}
    }
    Ok(match trace {
        Trace::Preemptive(s) => validate_preemptive(&instance, &s)?,
        Trace::Nonpreemptive(s) => validate_nonpreemptive(&instance, &s)?,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConstantReport {
    NoRows,
    Measured { rows: usize, max: Rational, p95: Rational },
}

impl fmt::Display for ConstantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstantReport::NoRows => write!(f, "no rows"),
            ConstantReport::Measured { rows, max, p95 } => write!(
                f,
                "rows={rows} max={max} ({}) p95={p95} ({})",
                decimal(*max, 4),
                decimal(*p95, 4)
            ),
        }
    }
}

/// Max and nearest-rank 95th percentile of the log-n constants in `rows`.
pub fn report_constants(rows: &[BenchRow]) -> ConstantReport {
    let mut cs: Vec<Rational> = rows.iter().filter_map(|r| r.constant).collect();
    if cs.is_empty() {
        return ConstantReport::NoRows;
    }
    cs.sort();
    let rank = (cs.len() * 95).div_ceil(100).max(1);
    ConstantReport::Measured {
        rows: cs.len(),
        max: *cs.last().expect("non-empty"),
        p95: cs[rank - 1],
    }
}
