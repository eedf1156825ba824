//! Two-sample tests, Bonferroni correction and per-cell significance
//! decisions with the more vulnerable language tagged.

pub mod reference;
pub mod special;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use special::{chi2_sf, ln_gamma, reg_gamma_p, reg_gamma_q, reg_inc_beta, student_t_sf, student_t_two_sided};

/// Significance level used throughout: 0.05 corrected for the four metrics
/// of a stage.
pub const ALPHA_STAR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample set {label:?} has {n} values, need at least 2")]
    TooFewSamples { label: String, n: usize },
    #[error("both sample sets have zero variance")]
    ZeroVarianceBoth,
    #[error("all values are tied")]
    AllValuesTied,
    #[error("non-finite value in sample set {0:?}")]
    NonFinite(String),
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("decision grid is missing cells: {0:?}")]
    IncompleteGrid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    FH,
    BH,
    NL,
    PB,
    Alpha,
    PL,
}

impl Metric {
    pub const STAGE1: [Metric; 4] = [Metric::FH, Metric::BH, Metric::NL, Metric::PB];
    pub const STAGE2: [Metric; 4] = [Metric::FH, Metric::BH, Metric::Alpha, Metric::PL];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::FH => "FH",
            Metric::BH => "BH",
            Metric::NL => "NL",
            Metric::PB => "PB",
            Metric::Alpha => "Alpha",
            Metric::PL => "PL",
        })
    }
}

impl FromStr for Metric {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, StatsError> {
        match s.to_ascii_lowercase().as_str() {
            "fh" => Ok(Metric::FH),
            "bh" => Ok(Metric::BH),
            "nl" => Ok(Metric::NL),
            "pb" => Ok(Metric::PB),
            "alpha" => Ok(Metric::Alpha),
            "pl" => Ok(Metric::PL),
            _ => Err(StatsError::BadArgs(format!("unknown metric {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub label: String,
    pub metric: Metric,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, label: impl Into<String>, metric: Metric) -> Self {
        Self {
            values,
            label: label.into(),
            metric,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample variance with the n − 1 denominator.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (self.values.len() - 1) as f64
    }

    fn check(&self) -> Result<(), StatsError> {
        if self.values.len() < 2 {
            return Err(StatsError::TooFewSamples {
                label: self.label.clone(),
                n: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(self.label.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Welch,
    Kruskal,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Welch => "welch",
            TestKind::Kruskal => "kruskal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p: f64,
    pub df: f64,
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t(a: &SampleSet, b: &SampleSet) -> Result<TestResult, StatsError> {
    a.check()?;
    b.check()?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = a.variance() / na;
    let sb = b.variance() / nb;
    if sa == 0.0 && sb == 0.0 {
        return Err(StatsError::ZeroVarianceBoth);
    }
    let t = (a.mean() - b.mean()) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TestResult {
        test: TestKind::Welch,
        statistic: t,
        p: student_t_two_sided(t, df).clamp(0.0, 1.0),
        df,
    })
}

/// Midranks (1-based) of `values`; ties share the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Kruskal–Wallis H test for two groups with the tie correction.
pub fn kruskal_wallis(a: &SampleSet, b: &SampleSet) -> Result<TestResult, StatsError> {
    a.check()?;
    b.check()?;
    let all: Vec<f64> = a.values.iter().chain(&b.values).copied().collect();
    let n = all.len() as f64;
    let ranks = midranks(&all);
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return Err(StatsError::AllValuesTied);
    }
    let centre = (n + 1.0) / 2.0;
    let group = |r: &[f64]| {
        let m = r.iter().sum::<f64>() / r.len() as f64;
        r.len() as f64 * (m - centre) * (m - centre)
    };
    let (ra, rb) = ranks.split_at(a.len());
    let h = 12.0 / (n * (n + 1.0)) * (group(ra) + group(rb)) / correction;
    Ok(TestResult {
        test: TestKind::Kruskal,
        statistic: h,
        p: chi2_sf(h, 1).clamp(0.0, 1.0),
        df: 1.0,
    })
}

pub fn run_test(kind: TestKind, a: &SampleSet, b: &SampleSet) -> Result<TestResult, StatsError> {
    match kind {
        TestKind::Welch => welch_t(a, b),
        TestKind::Kruskal => kruskal_wallis(a, b),
    }
}

pub fn bonferroni_alpha(alpha_star: f64, m: usize) -> Result<f64, StatsError> {
    if !(alpha_star > 0.0 && alpha_star <= 1.0) || m == 0 {
        return Err(StatsError::BadArgs(format!("alpha_star {alpha_star}, m {m}")));
    }
    Ok(alpha_star / m as f64)
}

/// Significant iff p < alpha (strict).
pub fn decide(result: &TestResult, alpha: f64) -> bool {
    result.p < alpha
}

/// Label of the set with the lower mean, only when significant.
pub fn vulnerable_tag(a: &SampleSet, b: &SampleSet, significant: bool) -> Option<String> {
    if !significant {
        return None;
    }
    let (ma, mb) = (a.mean(), b.mean());
    if ma < mb {
        Some(a.label.clone())
    } else if mb < ma {
        Some(b.label.clone())
    } else {
        None
    }
}

/// One (experiment, metric) cell before the decision is applied. `sets` is
/// absent when only published statistics are known.
#[derive(Debug, Clone)]
pub struct GridEntry {
    pub experiment: String,
    pub metric: Metric,
    pub result: Result<TestResult, StatsError>,
    pub sets: Option<(SampleSet, SampleSet)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub result: Result<TestResult, StatsError>,
    pub significant: bool,
    pub vulnerable: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTable {
    pub alpha: f64,
    pub experiments: Vec<String>,
    pub metrics: Vec<Metric>,
    pub cells: BTreeMap<(String, Metric), Cell>,
}

pub fn build_decision_table(
    entries: &[GridEntry],
    experiments: &[String],
    metrics: &[Metric],
    alpha: f64,
) -> Result<DecisionTable, StatsError> {
    let mut cells = BTreeMap::new();
    for e in entries {
        let significant = e.result.as_ref().is_ok_and(|r| decide(r, alpha));
        let vulnerable = e.sets.as_ref().and_then(|(a, b)| vulnerable_tag(a, b, significant));
        cells.insert(
            (e.experiment.clone(), e.metric),
            Cell {
                result: e.result.clone(),
                significant,
                vulnerable,
            },
        );
    }
    let missing: Vec<String> = experiments
        .iter()
        .flat_map(|x| metrics.iter().map(move |m| (x, m)))
        .filter(|(x, m)| !cells.contains_key(&((*x).clone(), **m)))
        .map(|(x, m)| format!("{x}/{m}"))
        .collect();
    if !missing.is_empty() {
        return Err(StatsError::IncompleteGrid(missing));
    }
    Ok(DecisionTable {
        alpha,
        experiments: experiments.to_vec(),
        metrics: metrics.to_vec(),
        cells,
    })
}

impl DecisionTable {
    pub fn cell(&self, experiment: &str, metric: Metric) -> Option<&Cell> {
        self.cells.get(&(experiment.to_string(), metric))
    }

    /// ✓/✗ grid with the vulnerable language in parentheses; failed tests
    /// show `n/a`.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Experiment |");
        for m in &self.metrics {
            s += &format!(" {m} |");
        }
        s += "\n|---|";
        s += &"---|".repeat(self.metrics.len());
        s.push('\n');
        for x in &self.experiments {
            s += &format!("| {x} |");
            for &m in &self.metrics {
                let c = &self.cells[&(x.clone(), m)];
                let mark = match (&c.result, c.significant, &c.vulnerable) {
                    (Err(_), _, _) => "n/a".to_string(),
                    (Ok(_), true, Some(l)) => format!("✓ ({l})"),
                    (Ok(_), true, None) => "✓".to_string(),
                    (Ok(_), false, _) => "✗".to_string(),
                };
                s += &format!(" {mark} |");
            }
            s.push('\n');
        }
        s
    }

    /// Full-precision CSV, one row per cell.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "experiment,metric,test,statistic,df,p,significant,vulnerable,error")?;
        for x in &self.experiments {
            for &m in &self.metrics {
                let c = &self.cells[&(x.clone(), m)];
                let tag = c.vulnerable.as_deref().unwrap_or("");
                match &c.result {
                    Ok(r) => writeln!(
                        w,
                        "{x},{m},{},{:?},{:?},{:?},{},{tag},",
                        r.test, r.statistic, r.df, r.p, c.significant
                    )?,
                    Err(e) => writeln!(w, "{x},{m},,,,,false,,{}", e.to_string().replace(',', ";"))?,
                }
            }
        }
        Ok(())
    }
}
