//! Single-machine scheduling with waiting-time penalties.
//!
//! Job `i` has service time `T_i`, penalty rate `a_i` and optionally a due
//! time `D_i`. Under an order, its completion time is `V_i = W_i + T_i`
//! where `W_i` sums the service times of earlier jobs. Three criteria are
//! supported:
//!
//! * `sum`: `Σ a_i V_i`
//! * `due_sum`: `Σ a_i max(0, V_i − D_i)`
//! * `due_max`: `max_i a_i max(0, V_i − D_i)`
//!
//! For `sum`, ascending `T/a` ([`wspt_order`]) is optimal; the subset
//! recursion ([`bellman_schedule`]) and exhaustive search
//! ([`brute_force_schedule`]) are exact cross-checks.

use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::format::fmt_num;

pub const BELLMAN_MAX_JOBS: usize = 20;
pub const BRUTE_FORCE_MAX_JOBS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: String,
    pub t: f64,
    pub a: f64,
    pub d: Option<f64>,
}

impl Job {
    pub fn new(id: impl Into<String>, t: f64, a: f64, d: Option<f64>) -> Result<Self> {
        let id = id.into();
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::param("T", format!("job {id}: must be > 0, got {t}")));
        }
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::param(
                "a",
                format!("job {id}: must be >= 0, got {a}"),
            ));
        }
        if let Some(d) = d {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::param(
                    "D",
                    format!("job {id}: must be >= 0, got {d}"),
                ));
            }
        }
        Ok(Job { id, t, a, d })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Criterion {
    #[default]
    Sum,
    DueSum,
    DueMax,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Sum => "sum",
            Criterion::DueSum => "due_sum",
            Criterion::DueMax => "due_max",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Criterion::Sum),
            "due_sum" => Ok(Criterion::DueSum),
            "due_max" => Ok(Criterion::DueMax),
            other => Err(Error::param(
                "criterion",
                format!("unknown criterion `{other}`"),
            )),
        }
    }
}

impl Criterion {
    /// Penalty of job `job` completing at `v`.
    fn contribution(self, job: &Job, v: f64) -> Result<f64> {
        match self {
            Criterion::Sum => Ok(job.a * v),
            Criterion::DueSum | Criterion::DueMax => {
                let d = job
                    .d
                    .ok_or_else(|| Error::MissingDueDate { id: job.id.clone() })?;
                Ok(job.a * (v - d).max(0.0))
            }
        }
    }

    fn combine(self, acc: f64, x: f64) -> f64 {
        match self {
            Criterion::Sum | Criterion::DueSum => acc + x,
            Criterion::DueMax => acc.max(x),
        }
    }

    fn check_jobs(self, jobs: &[Job]) -> Result<()> {
        if self != Criterion::Sum {
            if let Some(j) = jobs.iter().find(|j| j.d.is_none()) {
                return Err(Error::MissingDueDate { id: j.id.clone() });
            }
        }
        Ok(())
    }
}

/// A job order with completion times and criterion value.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Indices into the job slice the schedule was built from.
    pub order: Vec<usize>,
    pub ids: Vec<String>,
    /// Completion time of the k-th scheduled job.
    pub completion: Vec<f64>,
    /// Penalty of the k-th scheduled job.
    pub contributions: Vec<f64>,
    pub cost: f64,
    pub criterion: Criterion,
}

impl Schedule {
    pub fn evaluate(jobs: &[Job], order: &[usize], criterion: Criterion) -> Result<Schedule> {
        check_permutation(jobs.len(), order)?;
        criterion.check_jobs(jobs)?;
        let mut v = 0.0;
        let mut cost = 0.0;
        let mut completion = Vec::with_capacity(order.len());
        let mut contributions = Vec::with_capacity(order.len());
        for &i in order {
            v += jobs[i].t;
            let c = criterion.contribution(&jobs[i], v)?;
            cost = criterion.combine(cost, c);
            completion.push(v);
            contributions.push(c);
        }
        Ok(Schedule {
            order: order.to_vec(),
            ids: order.iter().map(|&i| jobs[i].id.clone()).collect(),
            completion,
            contributions,
            cost,
            criterion,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "position,id,V,contribution")?;
        for (k, ((id, v), c)) in self
            .ids
            .iter()
            .zip(&self.completion)
            .zip(&self.contributions)
            .enumerate()
        {
            writeln!(w, "{},{},{},{}", k + 1, id, fmt_num(*v), fmt_num(*c))?;
        }
        writeln!(w, "# cost,{}", fmt_num(self.cost))?;
        Ok(())
    }
}

fn check_permutation(n: usize, order: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::param(
            "order",
            format!("has {} entries for {n} jobs", order.len()),
        ));
    }
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::param(
                "order",
                format!("is not a permutation (entry {i})"),
            ));
        }
    }
    Ok(())
}

/// `Σ a_i V_i` under `order`.
pub fn penalty_sum(jobs: &[Job], order: &[usize]) -> Result<f64> {
    Ok(Schedule::evaluate(jobs, order, Criterion::Sum)?.cost)
}

/// `Σ a_i max(0, V_i − D_i)` under `order`.
pub fn penalty_due_sum(jobs: &[Job], order: &[usize]) -> Result<f64> {
    Ok(Schedule::evaluate(jobs, order, Criterion::DueSum)?.cost)
}

/// `max_i a_i max(0, V_i − D_i)` under `order`.
pub fn penalty_due_max(jobs: &[Job], order: &[usize]) -> Result<f64> {
    Ok(Schedule::evaluate(jobs, order, Criterion::DueMax)?.cost)
}

/// Ratio-rule comparison: ascending `T/a`, then `T`, then id. Jobs with
/// `a = 0` go last.
fn ratio_rule(x: &Job, y: &Job) -> Ordering {
    let zero = |j: &Job| j.a == 0.0;
    zero(x)
        .cmp(&zero(y))
        .then_with(|| {
            if zero(x) {
                Ordering::Equal
            } else {
                (x.t / x.a).total_cmp(&(y.t / y.a))
            }
        })
        .then_with(|| x.t.total_cmp(&y.t))
        .then_with(|| x.id.cmp(&y.id))
}

/// Orders jobs by ascending `T/a` and scores the order with `Σ a_i V_i`.
pub fn wspt_order(jobs: &[Job]) -> Schedule {
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&i, &j| ratio_rule(&jobs[i], &jobs[j]));
    Schedule::evaluate(jobs, &order, Criterion::Sum).expect("sorted indices form a permutation")
}

/// Exact minimizer of `Σ a_i V_i` by dynamic programming over subsets.
pub fn bellman_schedule(jobs: &[Job]) -> Result<Schedule> {
    bellman_schedule_with(jobs, Criterion::Sum)
}

/// Subset recursion `C(S) = min_{i∈S} [C(S∖{i}) ⊕ p_i(T(S))]`, where job
/// `i` is the last of `S` and completes at `T(S) = Σ_{j∈S} T_j`. `⊕` is
/// `+` for the sum criteria and `max` for `due_max`.
pub fn bellman_schedule_with(jobs: &[Job], criterion: Criterion) -> Result<Schedule> {
    let n = jobs.len();
    if n > BELLMAN_MAX_JOBS {
        return Err(Error::TooLarge {
            n,
            max: BELLMAN_MAX_JOBS,
            method: "bellman",
        });
    }
    criterion.check_jobs(jobs)?;
    let states = 1usize << n;
    let mut total = vec![0.0f64; states];
    let mut best = vec![f64::INFINITY; states];
    let mut last = vec![usize::MAX; states];
    best[0] = 0.0;
    for s in 1..states {
        let low = s.trailing_zeros() as usize;
        total[s] = total[s & (s - 1)] + jobs[low].t;
        for (i, job) in jobs.iter().enumerate() {
            if s & (1 << i) == 0 {
                continue;
            }
            let c = criterion.combine(best[s ^ (1 << i)], criterion.contribution(job, total[s])?);
            if c < best[s] {
                best[s] = c;
                last[s] = i;
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut s = states - 1;
    while s != 0 {
        order.push(last[s]);
        s ^= 1 << last[s];
    }
    order.reverse();
    Schedule::evaluate(jobs, &order, criterion)
}

/// Rearranges `v` into the next lexicographic permutation; false at the last one.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v
        .iter()
        .rposition(|&x| x > v[i])
        .expect("a larger element exists right of i");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Exhaustive search over all orders; ties go to the lexicographically
/// smallest id sequence.
pub fn brute_force_schedule(jobs: &[Job], criterion: Criterion) -> Result<Schedule> {
    let n = jobs.len();
    if n > BRUTE_FORCE_MAX_JOBS {
        return Err(Error::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_JOBS,
            method: "brute force",
        });
    }
    criterion.check_jobs(jobs)?;
    // rank positions by id so lexicographic index order is id order
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by(|&i, &j| jobs[i].id.cmp(&jobs[j].id).then(i.cmp(&j)));
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let order: Vec<usize> = perm.iter().map(|&p| by_id[p]).collect();
        let cost = Schedule::evaluate(jobs, &order, criterion)?.cost;
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, order));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (_, order) = best.expect("at least one permutation");
    Schedule::evaluate(jobs, &order, criterion)
}

/// Reads a jobs CSV with header `id,T,a` or `id,T,a,D`.
pub fn read_jobs_csv<R: Read>(r: R) -> Result<Vec<Job>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(r);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let with_due = match headers
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["id", "T", "a"] => false,
        ["id", "T", "a", "D"] => true,
        _ => {
            return Err(Error::Format(format!(
                "expected header `id,T,a[,D]`, found `{}`",
                headers.join(",")
            )))
        }
    };
    let num = |s: &str, row: usize| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Format(format!("row {row}: `{s}` is not a number")))
    };
    let mut jobs: Vec<Job> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 1;
        if rec.len() < 3 {
            return Err(Error::Format(format!(
                "row {row}: expected at least 3 fields"
            )));
        }
        let d = match (with_due, rec.get(3)) {
            (true, Some(s)) if !s.is_empty() => Some(num(s, row)?),
            _ => None,
        };
        let job = Job::new(&rec[0], num(&rec[1], row)?, num(&rec[2], row)?, d)?;
        if jobs.iter().any(|j| j.id == job.id) {
            return Err(Error::Format(format!("duplicate job id `{}`", job.id)));
        }
        jobs.push(job);
    }
    Ok(jobs)
}
