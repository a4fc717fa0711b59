//! Text formats for instances and schedule traces.
//!
//! Instance:
//! ```text
//! machmin v1 <n>
//! <id> <release> <deadline> <processing>     (n rows)
//! ```
//! Trace: a `trace preemptive` header followed by `<t> <job-id>` rows, or a
//! `trace nonpreemptive` header followed by `<job-id> <start>` rows.

use std::fmt::Write as _;

use crate::model::{Instance, Job, JobId, ModelError, NonpreemptiveSchedule, PreemptiveSchedule, Time};

const HEADER: &str = "machmin v1";

fn parse_err(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        message: message.into(),
    }
}

fn fields<const N: usize>(line_no: usize, line: &str) -> Result<[i64; N], ModelError> {
    let parts: Vec<&str> = line.split(' ').collect();
    if parts.len() != N {
        return Err(parse_err(line_no, format!("expected {N} fields, found {}", parts.len())));
    }
    let mut out = [0i64; N];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = part
            .parse()
            .map_err(|_| parse_err(line_no, format!("not an integer: {part:?}")))?;
    }
    Ok(out)
}

fn job_id(line_no: usize, raw: i64) -> Result<JobId, ModelError> {
    u32::try_from(raw)
        .map(JobId)
        .map_err(|_| parse_err(line_no, format!("job id out of range: {raw}")))
}

pub fn parse_instance(text: &str) -> Result<Instance, ModelError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let count: usize = header
        .strip_prefix(HEADER)
        .and_then(|rest| rest.strip_prefix(' '))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| parse_err(1, format!("expected \"{HEADER} <n>\"")))?;

    let mut jobs = Vec::with_capacity(count);
    let mut seen = std::collections::HashSet::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let [id, r, d, p] = fields::<4>(line_no, line)?;
        let id = job_id(line_no, id)?;
        if !seen.insert(id) {
            return Err(parse_err(line_no, format!("duplicate job id {id}")));
        }
        let job = Job::new(id.0, r, d, p).map_err(|e| match e {
            ModelError::InvalidJob { reason, .. } => parse_err(line_no, reason),
            other => other,
        })?;
        jobs.push(job);
    }
    if jobs.len() != count {
        return Err(parse_err(
            1,
            format!("header announces {count} jobs, found {}", jobs.len()),
        ));
    }
    Instance::new(jobs)
}

pub fn serialize_instance(instance: &Instance) -> String {
    let mut out = format!("{HEADER} {}\n", instance.len());
    for j in instance.jobs() {
        let _ = writeln!(out, "{} {} {} {}", j.id, j.release, j.deadline, j.processing);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Trace {
    Preemptive(PreemptiveSchedule),
    Nonpreemptive(NonpreemptiveSchedule),
}

impl Trace {
    pub fn kind(&self) -> &'static str {
        match self {
            Trace::Preemptive(_) => "preemptive",
            Trace::Nonpreemptive(_) => "nonpreemptive",
        }
    }
}

pub fn parse_trace(text: &str) -> Result<Trace, ModelError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    match header {
        "trace preemptive" => {
            let mut sched = PreemptiveSchedule::new();
            for (line_no, line) in lines.filter(|(_, l)| !l.is_empty()) {
                let [t, id] = fields::<2>(line_no, line)?;
                let id = job_id(line_no, id)?;
                if !sched.assign(t as Time, id) {
                    return Err(parse_err(line_no, format!("job {id} listed twice in slot {t}")));
                }
            }
            Ok(Trace::Preemptive(sched))
        }
        "trace nonpreemptive" => {
            let mut sched = NonpreemptiveSchedule::new();
            for (line_no, line) in lines.filter(|(_, l)| !l.is_empty()) {
                let [id, start] = fields::<2>(line_no, line)?;
                let id = job_id(line_no, id)?;
                if sched.start(id).is_some() {
                    return Err(parse_err(line_no, format!("job {id} has two starts")));
                }
                sched.set_start(id, start);
            }
            Ok(Trace::Nonpreemptive(sched))
        }
        _ => Err(parse_err(1, "expected \"trace preemptive\" or \"trace nonpreemptive\"")),
    }
}

pub fn serialize_preemptive(schedule: &PreemptiveSchedule) -> String {
    let mut out = String::from("trace preemptive\n");
    for (t, ids) in schedule.slots() {
        for id in ids {
            let _ = writeln!(out, "{t} {id}");
        }
    }
    out
}

pub fn serialize_nonpreemptive(schedule: &NonpreemptiveSchedule) -> String {
    let mut out = String::from("trace nonpreemptive\n");
    for (id, s) in schedule.starts() {
        let _ = writeln!(out, "{id} {s}");
    }
    out
}

pub fn serialize_trace(trace: &Trace) -> String {
    match trace {
        Trace::Preemptive(s) => serialize_preemptive(s),
        Trace::Nonpreemptive(s) => serialize_nonpreemptive(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_single_job() {
        let inst = parse_instance("machmin v1 1\n0 0 2 1\n").unwrap();
        assert_eq!(inst.jobs(), &[Job::new(0, 0, 2, 1).unwrap()]);
    }

    #[test]
    fn round_trip_canonical_text() {
        let text = "machmin v1 3\n4 0 5 2\n1 1 3 1\n7 2 9 7\n";
        assert_eq!(serialize_instance(&parse_instance(text).unwrap()), text);
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        let err = parse_instance("machmin v1 1\n0 0 2 5\n").unwrap_err();
        assert_eq!(
            err,
            ModelError::Parse {
                line: 2,
                message: "deadline < release + processing".into()
            }
        );
        let err = parse_instance("machmin v1 2\n0 0 2 1\n0 0 3 1\n").unwrap_err();
        assert!(matches!(err, ModelError::Parse { line: 3, .. }), "{err}");
        let err = parse_instance("machmin v1 1\n0 0 2\n").unwrap_err();
        assert!(matches!(err, ModelError::Parse { line: 2, .. }));
        let err = parse_instance("machmin v1 1\n0 0 x 1\n").unwrap_err();
        assert!(matches!(err, ModelError::Parse { line: 2, .. }));
        assert!(parse_instance("machmin v2 1\n0 0 2 1\n").is_err());
        assert!(parse_instance("machmin v1 2\n0 0 2 1\n").is_err());
    }

    #[test]
    fn traces_round_trip() {
        let text = "trace preemptive\n0 1\n0 2\n3 1\n";
        let trace = parse_trace(text).unwrap();
        assert_eq!(trace.kind(), "preemptive");
        assert_eq!(serialize_trace(&trace), text);
        let text = "trace nonpreemptive\n0 5\n3 0\n";
        assert_eq!(serialize_trace(&parse_trace(text).unwrap()), text);
        assert!(parse_trace("trace preemptive\n0 1\n0 1\n").is_err());
        assert!(parse_trace("trace sideways\n").is_err());
    }

    proptest! {
        #[test]
        fn instance_round_trip(rows in prop::collection::vec((0i64..50, 1i64..10, 0i64..10), 0..12)) {
            let jobs: Vec<Job> = rows
                .iter()
                .enumerate()
                .map(|(i, &(r, p, slack))| Job::new(i as u32 * 3, r, r + p + slack, p).unwrap())
                .collect();
            let inst = Instance::new(jobs).unwrap();
            let text = serialize_instance(&inst);
            let back = parse_instance(&text).unwrap();
            prop_assert_eq!(back.jobs(), inst.jobs());
            prop_assert_eq!(serialize_instance(&back), text);
        }
    }
}
