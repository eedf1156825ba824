//! Statistics over persisted records and the Markdown report.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use advbench_core::experiments::Language;
use advbench_core::stats::{
    bonferroni_alpha, build_decision_table, run_test, DecisionTable, GridEntry, Metric, SampleSet, StatsError, TestKind,
};
use serde::Serialize;

use crate::records::{format_rate, RunRecord};

pub fn metric_value(r: &RunRecord, m: Metric) -> Option<f64> {
    match m {
        Metric::FH => r.fh.map(|v| v as f64),
        Metric::BH => r.bh.map(|v| v as f64),
        Metric::NL => r.nl_db,
        Metric::PB => r.pb,
        Metric::Alpha => r.alpha,
        Metric::PL => r.pl,
    }
}

pub fn stage_metrics(stage: u8) -> [Metric; 4] {
    if stage == 1 {
        Metric::STAGE1
    } else {
        Metric::STAGE2
    }
}

/// Finite metric values of the successful records of one cell.
pub fn sample_set(records: &[RunRecord], experiment: &str, stage: u8, lang: Language, m: Metric) -> SampleSet {
    let values = records
        .iter()
        .filter(|r| r.success && r.experiment == experiment && r.stage == stage && r.language == lang)
        .filter_map(|r| metric_value(r, m))
        .filter(|v| v.is_finite())
        .collect();
    SampleSet::new(values, lang.to_string(), m)
}

/// Experiments 1–4 present in the records, in numeric order.
fn tested_experiments(records: &[RunRecord]) -> Vec<String> {
    let set: BTreeSet<&str> = records
        .iter()
        .map(|r| r.experiment.as_str())
        .filter(|e| matches!(*e, "1" | "2" | "3" | "4"))
        .collect();
    set.into_iter().map(String::from).collect()
}

#[derive(Debug, Clone)]
pub struct StatsTables {
    pub languages: (Language, Language),
    pub alpha: f64,
    /// Indexed by stage − 1.
    pub welch: [DecisionTable; 2],
    pub kruskal: [DecisionTable; 2],
}

impl StatsTables {
    pub fn table(&self, test: TestKind, stage: u8) -> &DecisionTable {
        let i = usize::from(stage - 1);
        match test {
            TestKind::Welch => &self.welch[i],
            TestKind::Kruskal => &self.kruskal[i],
        }
    }
}

/// Welch and Kruskal tables over experiments 1–4; `None` unless exactly
/// two languages and at least one tested experiment are present.
pub fn compute_stats(records: &[RunRecord], alpha_star: f64, m: usize) -> Result<Option<StatsTables>, StatsError> {
    let langs: BTreeSet<Language> = records.iter().map(|r| r.language).collect();
    let experiments = tested_experiments(records);
    let (a, b) = match langs.iter().copied().collect::<Vec<_>>()[..] {
        [a, b] if !experiments.is_empty() => (a, b),
        _ => return Ok(None),
    };
    let alpha = bonferroni_alpha(alpha_star, m)?;
    let table = |test: TestKind, stage: u8| {
        let metrics = stage_metrics(stage);
        let entries: Vec<GridEntry> = experiments
            .iter()
            .flat_map(|x| metrics.iter().map(move |&mt| (x, mt)))
            .map(|(x, mt)| {
                let sa = sample_set(records, x, stage, a, mt);
                let sb = sample_set(records, x, stage, b, mt);
                GridEntry {
                    experiment: x.clone(),
                    metric: mt,
                    result: run_test(test, &sa, &sb),
                    sets: Some((sa, sb)),
                }
            })
            .collect();
        build_decision_table(&entries, &experiments, &metrics, alpha)
    };
    Ok(Some(StatsTables {
        languages: (a, b),
        alpha,
        welch: [table(TestKind::Welch, 1)?, table(TestKind::Welch, 2)?],
        kruskal: [table(TestKind::Kruskal, 1)?, table(TestKind::Kruskal, 2)?],
    }))
}

#[derive(Debug, Serialize)]
struct DecisionRow<'a> {
    test: TestKind,
    stage: u8,
    experiment: &'a str,
    metric: String,
    statistic: Option<f64>,
    df: Option<f64>,
    p: Option<f64>,
    significant: bool,
    vulnerable: Option<&'a str>,
    error: Option<String>,
}

/// All four tables as one full-precision CSV.
pub fn write_decisions(stats: &StatsTables, w: impl Write) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for test in [TestKind::Welch, TestKind::Kruskal] {
        for stage in [1u8, 2] {
            let t = stats.table(test, stage);
            for x in &t.experiments {
                for &m in &t.metrics {
                    let c = t.cell(x, m).expect("complete grid");
                    let ok = c.result.as_ref().ok();
                    out.serialize(DecisionRow {
                        test,
                        stage,
                        experiment: x,
                        metric: m.to_string(),
                        statistic: ok.map(|r| r.statistic),
                        df: ok.map(|r| r.df),
                        p: ok.map(|r| r.p),
                        significant: c.significant,
                        vulnerable: c.vulnerable.as_deref(),
                        error: c.result.as_ref().err().map(|e| e.to_string()),
                    })?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSummary {
    pub language: Language,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub heldout_cer: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub records: Vec<RunRecord>,
    pub stats: Option<StatsTables>,
    pub training: Vec<TrainingSummary>,
    /// Experiment-level problems, e.g. a corpus too small for the request.
    pub notes: Vec<String>,
}

fn experiments_in(records: &[RunRecord]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for r in records {
        if !seen.contains(&r.experiment) {
            seen.push(r.experiment.clone());
        }
    }
    seen
}

fn languages_in(records: &[RunRecord]) -> Vec<Language> {
    records.iter().map(|r| r.language).collect::<BTreeSet<_>>().into_iter().collect()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

fn render_values(stats: &StatsTables, test: TestKind, stage: u8, s: &mut String) {
    let t = stats.table(test, stage);
    let sym = if test == TestKind::Welch { "t" } else { "H" };
    s.push_str("| Experiment |");
    for m in &t.metrics {
        let _ = write!(s, " {m} p | {m} {sym} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|---|".repeat(t.metrics.len()));
    s.push('\n');
    for x in &t.experiments {
        let _ = write!(s, "| {x} |");
        for &m in &t.metrics {
            match &t.cell(x, m).expect("complete grid").result {
                Ok(r) => {
                    let _ = write!(s, " {:.4} | {:.4} |", r.p, r.statistic);
                }
                Err(_) => s.push_str(" n/a | n/a |"),
            }
        }
        s.push('\n');
    }
}

pub fn render_report(report: &Report) -> String {
    let recs = &report.records;
    let langs = languages_in(recs);
    let mut s = String::from("# Attack campaign report\n\n");

    if !report.training.is_empty() {
        s.push_str("## Recognizers\n\n| Language | Epochs | Final loss | Held-out CER |\n|---|---|---|---|\n");
        for t in &report.training {
            let loss = t.final_loss.map_or("n/a".to_string(), |l| format!("{l:.4}"));
            let _ = writeln!(s, "| {} | {} | {loss} | {} |", t.language, t.epochs, format_rate(t.heldout_cer));
        }
        s.push('\n');
    }

    s.push_str("## Hit rates\n\n| Experiment | Stage |");
    for l in &langs {
        let _ = write!(s, " {l} |");
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---|".repeat(langs.len()));
    s.push('\n');
    for x in experiments_in(recs) {
        for stage in [1u8, 2] {
            let _ = write!(s, "| {x} | {stage} |");
            for &l in &langs {
                let cell: Vec<&RunRecord> = recs
                    .iter()
                    .filter(|r| r.experiment == x && r.stage == stage && r.language == l)
                    .collect();
                let hits = cell.iter().filter(|r| r.success).count();
                if cell.is_empty() {
                    s.push_str(" – |");
                } else {
                    let _ = write!(s, " {hits}/{} ({}) |", cell.len(), format_rate(hits as f64 / cell.len() as f64));
                }
            }
            s.push('\n');
        }
    }
    s.push('\n');

    match &report.stats {
        Some(st) => {
            let (a, b) = st.languages;
            let _ = writeln!(
                s,
                "Significance: p < {} (Bonferroni). Tags name the language with the lower mean ({a} or {b}).\n",
                st.alpha
            );
            for (test, title) in [(TestKind::Welch, "Welch's test"), (TestKind::Kruskal, "Kruskal-Wallis test")] {
                let _ = writeln!(s, "## Summary for the {title}\n");
                for stage in [1u8, 2] {
                    let _ = writeln!(s, "### Stage {stage}\n");
                    s.push_str(&st.table(test, stage).to_markdown());
                    s.push('\n');
                    render_values(st, test, stage, &mut s);
                    s.push('\n');
                }
            }
        }
        None => s.push_str("Statistical tests need both languages and at least one of experiments 1–4.\n\n"),
    }

    s.push_str("## Metric summary\n\nMean ± sample standard deviation over successful samples.\n\n");
    s.push_str("| Experiment | Stage | Language | Metric | n | Mean | SD |\n|---|---|---|---|---|---|---|\n");
    for x in experiments_in(recs) {
        for stage in [1u8, 2] {
            for &l in &langs {
                for m in stage_metrics(stage) {
                    let set = sample_set(recs, &x, stage, l, m);
                    if set.values.is_empty() {
                        continue;
                    }
                    let (mean, sd) = mean_sd(&set.values);
                    let _ = writeln!(s, "| {x} | {stage} | {l} | {m} | {} | {mean:.4} | {sd:.4} |", set.values.len());
                }
            }
        }
    }
    s.push('\n');

    let flips: Vec<String> = experiments_in(recs).into_iter().filter(|x| x.starts_with("5-")).collect();
    if !flips.is_empty() {
        s.push_str("## Experiment 5 (observational, no tests)\n\n");
        s.push_str("| Phoneme class | Language | Stage 1 hits | Stage 2 hits | Mean FH | Mean BH | Mean NL |\n");
        s.push_str("|---|---|---|---|---|---|---|\n");
        for x in &flips {
            for &l in &langs {
                let cell = |stage: u8| -> Vec<&RunRecord> {
                    recs.iter()
                        .filter(|r| &r.experiment == x && r.language == l && r.stage == stage)
                        .collect()
                };
                let (c1, c2) = (cell(1), cell(2));
                if c1.is_empty() {
                    continue;
                }
                let hits = |c: &[&RunRecord]| format!("{}/{}", c.iter().filter(|r| r.success).count(), c.len());
                let mean = |m: Metric| {
                    let v = sample_set(recs, x, 1, l, m).values;
                    if v.is_empty() {
                        "n/a".to_string()
                    } else {
                        format!("{:.4}", mean_sd(&v).0)
                    }
                };
                let _ = writeln!(
                    s,
                    "| {} | {l} | {} | {} | {} | {} | {} |",
                    &x[2..],
                    hits(&c1),
                    hits(&c2),
                    mean(Metric::FH),
                    mean(Metric::BH),
                    mean(Metric::NL)
                );
            }
        }
        s.push('\n');
    }

    s.push_str("## Unsuccessful samples\n\n");
    let failed: Vec<&RunRecord> = recs.iter().filter(|r| !r.success).collect();
    if failed.is_empty() && report.notes.is_empty() {
        s.push_str("None.\n");
    } else {
        s.push_str("| Id | Experiment | Language | Stage | Original | Target | Reason |\n|---|---|---|---|---|---|---|\n");
        for r in failed {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                r.id,
                r.experiment,
                r.language,
                r.stage,
                r.original,
                r.target,
                r.failure.as_deref().unwrap_or("")
            );
        }
        for n in &report.notes {
            let _ = writeln!(s, "\n- {n}");
        }
    }
    s
}
