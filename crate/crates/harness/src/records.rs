//! Flattened per-(sample, stage) results and their CSV form.

use std::io::{Read, Write};

use advbench_core::attacks::AttackResult;
use advbench_core::experiments::Language;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("no records")]
    NoRecords,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    /// Experiment label: `1`–`4` or `5-<class>`.
    pub experiment: String,
    pub language: Language,
    pub sample: usize,
    pub stage: u8,
    pub original: String,
    pub target: String,
    pub success: bool,
    pub fh: Option<usize>,
    pub bh: Option<usize>,
    pub nl_db: Option<f64>,
    pub pb: Option<f64>,
    pub alpha: Option<f64>,
    pub pl: Option<f64>,
    pub epochs: usize,
    /// Why the sample did not succeed, empty on success.
    pub failure: Option<String>,
}

impl RunRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn from_result(
        id: String,
        experiment: String,
        language: Language,
        sample: usize,
        original: String,
        target: String,
        epochs: usize,
        r: &AttackResult,
    ) -> Self {
        let failure = (!r.success).then(|| match r.stage.number() {
            1 => format!("no exact target decode within {epochs} epochs"),
            _ => format!("no successful psychoacoustic improvement within {epochs} epochs"),
        });
        Self {
            id,
            experiment,
            language,
            sample,
            stage: r.stage.number(),
            original,
            target,
            success: r.success,
            fh: r.fh,
            bh: r.bh,
            nl_db: r.nl_db,
            pb: r.pb,
            alpha: r.alpha,
            pl: r.pl,
            epochs,
            failure,
        }
    }

    /// A sample that could not be attacked at all.
    #[allow(clippy::too_many_arguments)]
    pub fn failed(
        id: String,
        experiment: String,
        language: Language,
        sample: usize,
        stage: u8,
        original: String,
        target: String,
        reason: String,
    ) -> Self {
        Self {
            id,
            experiment,
            language,
            sample,
            stage,
            original,
            target,
            success: false,
            fh: None,
            bh: None,
            nl_db: None,
            pb: None,
            alpha: None,
            pl: None,
            epochs: 0,
            failure: Some(reason),
        }
    }
}

pub fn write_records(records: &[RunRecord], w: impl Write) -> Result<(), RecordError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records(r: impl Read) -> Result<Vec<RunRecord>, RecordError> {
    Ok(csv::Reader::from_reader(r).deserialize().collect::<Result<_, _>>()?)
}

/// successes / attempted.
pub fn hit_rate<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Result<f64, RecordError> {
    let (hits, n) = records
        .into_iter()
        .fold((0usize, 0usize), |(h, n), r| (h + r.success as usize, n + 1));
    if n == 0 {
        return Err(RecordError::NoRecords);
    }
    Ok(hits as f64 / n as f64)
}

/// Percentage with at most one decimal: 0.975 → "97.5%", 1.0 → "100%".
pub fn format_rate(rate: f64) -> String {
    let s = format!("{:.1}", rate * 100.0);
    format!("{}%", s.strip_suffix(".0").unwrap_or(&s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(success: bool, nl: Option<f64>) -> RunRecord {
        RunRecord {
            id: "S-1-000-s1".into(),
            experiment: "1".into(),
            language: Language::S,
            sample: 0,
            stage: 1,
            original: "kat sun".into(),
            target: "hand, \"land\"".into(),
            success,
            fh: success.then_some(3),
            bh: success.then_some(9),
            nl_db: nl,
            pb: Some(123.456),
            alpha: None,
            pl: None,
            epochs: 1000,
            failure: (!success).then(|| "no hit".into()),
        }
    }

    #[test]
    fn hit_rates() {
        let recs: Vec<RunRecord> = (0..40).map(|i| rec(i != 7, None)).collect();
        let r = hit_rate(&recs).unwrap();
        assert_eq!(r, 0.975);
        assert_eq!(format_rate(r), "97.5%");
        assert_eq!(format_rate(hit_rate(&recs[8..]).unwrap()), "100%");
        assert_eq!(format_rate(0.0), "0%");
        assert!(matches!(hit_rate(&recs[..0]), Err(RecordError::NoRecords)));
    }

    #[test]
    fn csv_round_trip_keeps_neg_inf() {
        let recs = vec![rec(true, Some(f64::NEG_INFINITY)), rec(false, None), rec(true, Some(-38.123456789))];
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().starts_with("id,experiment,language,sample,stage"));
        assert!(text.contains(",-inf,"));
        assert_eq!(read_records(&buf[..]).unwrap(), recs);
    }
}
