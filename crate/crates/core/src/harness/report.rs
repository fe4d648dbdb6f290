//! Run-level records, aggregation and CSV export.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::world::{MotionKind, Outcome, RunResult};

/// One simulated run, as written to `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    /// Runs sharing a group are also aggregated together.
    pub group: String,
    pub condition: String,
    pub motion: MotionKind,
    pub radius: f64,
    pub delay: f64,
    pub k_pn: f64,
    pub gamma_bar_deg: f64,
    /// Numeric `v_rel_bar` or `perfect`.
    pub v_rel: String,
    pub initial_distance: f64,
    pub run: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub success: bool,
    pub t_gate: f64,
    pub d_center: f64,
    pub top_speed: f64,
}

impl RunRecord {
    pub fn fill(&mut self, r: &RunResult) {
        self.outcome = r.outcome;
        self.success = r.success;
        self.t_gate = r.t_gate;
        self.d_center = r.d_center;
        self.top_speed = r.top_speed;
    }
}

/// Aggregate over one condition, or over a whole group (`condition = "total"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub experiment: String,
    pub group: String,
    pub condition: String,
    /// Motion name, or `all` for group totals.
    pub motion: String,
    pub radius: f64,
    pub delay: f64,
    pub k_pn: f64,
    pub gamma_bar_deg: f64,
    pub v_rel: String,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Over successful runs; NaN when there are none.
    pub mean_t_gate: f64,
    pub mean_d_center: f64,
    pub std_d_center: f64,
    pub mean_top_speed: f64,
}

impl ConditionSummary {
    fn of(condition: &str, motion: String, runs: &[&RunRecord]) -> Self {
        let first = runs[0];
        let n = runs.len();
        let ok: Vec<&&RunRecord> = runs.iter().filter(|r| r.success).collect();
        let mean = |xs: &mut dyn Iterator<Item = f64>, count: usize| {
            if count == 0 {
                f64::NAN
            } else {
                xs.sum::<f64>() / count as f64
            }
        };
        let mean_d = mean(&mut runs.iter().map(|r| r.d_center), n);
        let var_d = mean(&mut runs.iter().map(|r| (r.d_center - mean_d).powi(2)), n);
        Self {
            experiment: first.experiment.clone(),
            group: first.group.clone(),
            condition: condition.to_string(),
            motion,
            radius: first.radius,
            delay: first.delay,
            k_pn: first.k_pn,
            gamma_bar_deg: first.gamma_bar_deg,
            v_rel: first.v_rel.clone(),
            runs: n,
            successes: ok.len(),
            success_rate: ok.len() as f64 / n as f64,
            mean_t_gate: mean(&mut ok.iter().map(|r| r.t_gate), ok.len()),
            mean_d_center: mean_d,
            std_d_center: var_d.sqrt(),
            mean_top_speed: mean(&mut runs.iter().map(|r| r.top_speed), n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregateReport {
    pub summaries: Vec<ConditionSummary>,
    pub runs: Vec<RunRecord>,
}

impl AggregateReport {
    /// Summaries per condition and per group, in first-appearance order.
    pub fn from_runs(runs: Vec<RunRecord>) -> Self {
        let mut summaries = Vec::new();
        let mut groups: Vec<(&str, &str)> = Vec::new();
        for r in &runs {
            let key = (r.experiment.as_str(), r.group.as_str());
            if !groups.contains(&key) {
                groups.push(key);
            }
        }
        for (exp, group) in groups {
            let in_group: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.experiment == exp && r.group == group)
                .collect();
            let mut conditions: Vec<&str> = Vec::new();
            for r in &in_group {
                if !conditions.contains(&r.condition.as_str()) {
                    conditions.push(&r.condition);
                }
            }
            for c in &conditions {
                let rs: Vec<&RunRecord> = in_group
                    .iter()
                    .copied()
                    .filter(|r| r.condition == *c)
                    .collect();
                summaries.push(ConditionSummary::of(
                    c,
                    rs[0].motion.name().to_string(),
                    &rs,
                ));
            }
            if conditions.len() > 1 {
                summaries.push(ConditionSummary::of("total", "all".into(), &in_group));
            }
        }
        Self { summaries, runs }
    }

    pub fn summary(&self, group: &str, condition: &str) -> Option<&ConditionSummary> {
        self.summaries
            .iter()
            .find(|s| s.group == group && s.condition == condition)
    }

    pub fn merge(reports: Vec<AggregateReport>) -> Self {
        Self::from_runs(reports.into_iter().flat_map(|r| r.runs).collect())
    }

    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(&self.runs, out)
    }

    pub fn write_report_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(&self.summaries, out)
    }
}

fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for r in rd.deserialize() {
        out.push(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(
        group: &str,
        cond: &str,
        motion: MotionKind,
        success: bool,
        t: f64,
        d: f64,
    ) -> RunRecord {
        RunRecord {
            experiment: "test".into(),
            group: group.into(),
            condition: cond.into(),
            motion,
            radius: 1.0,
            delay: 0.0,
            k_pn: 2.1,
            gamma_bar_deg: 21.05,
            v_rel: "15".into(),
            initial_distance: 25.0,
            run: 0,
            seed: 3,
            outcome: if success {
                Outcome::Success
            } else {
                Outcome::Missed
            },
            success,
            t_gate: t,
            d_center: d,
            top_speed: 12.0,
        }
    }

    #[test]
    fn aggregates_by_condition_and_group() {
        let runs = vec![
            record("g", "a", MotionKind::Stationary, true, 2.0, 0.2),
            record("g", "a", MotionKind::Stationary, true, 4.0, 0.4),
            record("g", "b", MotionKind::Planar, false, 3.0, 1.5),
            record("g", "b", MotionKind::Planar, true, 3.0, 0.3),
            record("h", "c", MotionKind::Knot, false, 15.0, 9.0),
        ];
        let rep = AggregateReport::from_runs(runs);
        let names: Vec<_> = rep
            .summaries
            .iter()
            .map(|s| (s.group.as_str(), s.condition.as_str()))
            .collect();
        assert_eq!(names, [("g", "a"), ("g", "b"), ("g", "total"), ("h", "c")]);
        let a = rep.summary("g", "a").unwrap();
        assert_eq!(
            (a.runs, a.successes, a.success_rate, a.mean_t_gate),
            (2, 2, 1.0, 3.0)
        );
        assert!((a.mean_d_center - 0.3).abs() < 1e-12 && (a.std_d_center - 0.1).abs() < 1e-12);
        let tot = rep.summary("g", "total").unwrap();
        assert_eq!(
            (tot.runs, tot.successes, tot.motion.as_str()),
            (4, 3, "all")
        );
        assert!((tot.mean_t_gate - 3.0).abs() < 1e-12);
        let c = rep.summary("h", "c").unwrap();
        assert_eq!(c.success_rate, 0.0);
        assert!(c.mean_t_gate.is_nan());
    }

    #[test]
    fn runs_csv_round_trips() {
        let runs = vec![
            record(
                "g",
                "a",
                MotionKind::LinearFast,
                true,
                2.123456789012345,
                0.1 + 0.2,
            ),
            record("g", "a", MotionKind::Knot, false, 15.0, 1e-17),
        ];
        let rep = AggregateReport::from_runs(runs.clone());
        let mut buf = Vec::new();
        rep.write_runs_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("experiment,group,condition,motion,radius"));
        assert!(text.contains("linear-fast") && text.contains("missed"));
        assert_eq!(read_runs_csv(&buf[..]).unwrap(), runs);

        let mut rbuf = Vec::new();
        rep.write_report_csv(&mut rbuf).unwrap();
        assert_eq!(String::from_utf8(rbuf).unwrap().lines().count(), 2);
    }
}
