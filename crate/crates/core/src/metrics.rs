//! Study analysis: rater aggregation, (operational) accuracy, Fleiss' kappa,
//! time-to-answer adjustment and circular gaze error.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::str::FromStr;

use crate::angle::{circular_distance, circular_mean, normalize_deg};
use crate::lucemes::{ActiveLucemeId, GazeAngle, LucemeId, OcularLucemeId};

/// Answers at or above this confidence count toward operational accuracy.
pub const OPERATIONAL_CONFIDENCE: u8 = 6;
pub const MAX_CONFIDENCE: u8 = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no records")]
    Empty,
    #[error("record has no rater values")]
    NoRaterValues,
    #[error("rater score {0} is outside [0, 100]")]
    Score(f64),
    #[error("reported angle {0} is not finite")]
    Angle(f64),
    #[error("confidence {0} is outside 0..=10")]
    Confidence(u8),
    #[error("time to answer {0} must be a nonnegative number of seconds")]
    Time(f64),
    #[error("swim time {0} must be nonnegative")]
    SwimTime(f64),
    #[error("rater angles cancel out; no mean direction")]
    NoMeanDirection,
    #[error("rating matrix: {0}")]
    Matrix(String),
    #[error("unknown condition `{0}`")]
    Condition(String),
    #[error("`{0}` is neither an active luceme nor a gaze cue")]
    Shown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    HreyeTrained,
    Oled,
    HreyeUntrained,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::HreyeTrained => "HREye-trained",
            Condition::Oled => "OLED",
            Condition::HreyeUntrained => "HREye-untrained",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "hreyetrained" | "trained" => Ok(Condition::HreyeTrained),
            "oled" => Ok(Condition::Oled),
            "hreyeuntrained" | "untrained" => Ok(Condition::HreyeUntrained),
            _ => Err(MetricsError::Condition(s.to_string())),
        }
    }
}

/// What the participant was shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shown {
    Active(ActiveLucemeId),
    Gaze(GazeAngle),
}

impl fmt::Display for Shown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shown::Active(id) => id.fmt(f),
            Shown::Gaze(g) => write!(f, "Gaze{g}"),
        }
    }
}

impl FromStr for Shown {
    type Err = MetricsError;

    /// An active luceme name or a gaze cue such as `Gaze120`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<LucemeId>() {
            Ok(LucemeId::Active(id)) => Ok(Shown::Active(id)),
            Ok(LucemeId::Ocular(OcularLucemeId::Gaze(g))) => Ok(Shown::Gaze(g)),
            _ => Err(MetricsError::Shown(s.to_string())),
        }
    }
}

/// One participant answer with its rater values: correctness scores in
/// `[0, 100]` for active lucemes, reported angles in degrees for gaze cues.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub participant: String,
    pub condition: Condition,
    pub shown: Shown,
    pub rater_values: Vec<f64>,
    pub confidence: u8,
    pub time_to_answer_s: f64,
}

impl ResponseRecord {
    pub fn new(
        participant: impl Into<String>,
        condition: Condition,
        shown: Shown,
        rater_values: Vec<f64>,
        confidence: u8,
        time_to_answer_s: f64,
    ) -> Result<Self, MetricsError> {
        if rater_values.is_empty() {
            return Err(MetricsError::NoRaterValues);
        }
        let rater_values = match shown {
            Shown::Active(_) => {
                if let Some(&bad) = rater_values.iter().find(|v| !(0.0..=100.0).contains(*v)) {
                    return Err(MetricsError::Score(bad));
                }
                rater_values
            }
            Shown::Gaze(_) => {
                if let Some(&bad) = rater_values.iter().find(|v| !v.is_finite()) {
                    return Err(MetricsError::Angle(bad));
                }
                rater_values.into_iter().map(normalize_deg).collect()
            }
        };
        if confidence > MAX_CONFIDENCE {
            return Err(MetricsError::Confidence(confidence));
        }
        if !(time_to_answer_s.is_finite() && time_to_answer_s >= 0.0) {
            return Err(MetricsError::Time(time_to_answer_s));
        }
        Ok(ResponseRecord {
            participant: participant.into(),
            condition,
            shown,
            rater_values,
            confidence,
            time_to_answer_s,
        })
    }

    pub fn is_active(&self) -> bool {
        matches!(self.shown, Shown::Active(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregate {
    Score(f64),
    Angle(f64),
}

/// Mean rater score, or circular mean of rater angles for gaze cues.
pub fn aggregate_score(record: &ResponseRecord) -> Result<Aggregate, MetricsError> {
    if record.rater_values.is_empty() {
        return Err(MetricsError::NoRaterValues);
    }
    match record.shown {
        Shown::Active(_) => Ok(Aggregate::Score(mean(&record.rater_values))),
        Shown::Gaze(_) => circular_mean(&record.rater_values)
            .map(Aggregate::Angle)
            .ok_or(MetricsError::NoMeanDirection),
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn active_scores<'a>(records: impl IntoIterator<Item = &'a ResponseRecord>) -> Result<Vec<f64>, MetricsError> {
    records
        .into_iter()
        .filter(|r| r.is_active())
        .map(|r| match aggregate_score(r)? {
            Aggregate::Score(s) => Ok(s),
            Aggregate::Angle(_) => unreachable!("active records aggregate to scores"),
        })
        .collect()
}

/// Mean aggregated score over the active-luceme records.
pub fn accuracy(records: &[ResponseRecord]) -> Result<f64, MetricsError> {
    let scores = active_scores(records)?;
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(mean(&scores))
}

/// Accuracy restricted to answers with confidence of at least 6.
///
/// `Ok(None)` means no answer met the threshold.
pub fn operational_accuracy(records: &[ResponseRecord]) -> Result<Option<f64>, MetricsError> {
    if !records.iter().any(|r| r.is_active()) {
        return Err(MetricsError::Empty);
    }
    let scores = active_scores(records.iter().filter(|r| r.confidence >= OPERATIONAL_CONFIDENCE))?;
    Ok((!scores.is_empty()).then(|| mean(&scores)))
}

/// Shortest angular distance in degrees, in `[0, 180]`.
pub fn circular_error(true_angle: f64, reported_angle: f64) -> f64 {
    circular_distance(true_angle, reported_angle)
}

/// Mean circular error between shown gaze direction and aggregated report.
pub fn mean_gaze_error(records: &[ResponseRecord]) -> Result<f64, MetricsError> {
    let errors = records
        .iter()
        .filter_map(|r| match r.shown {
            Shown::Gaze(g) => Some((g, r)),
            Shown::Active(_) => None,
        })
        .map(|(g, r)| match aggregate_score(r)? {
            Aggregate::Angle(a) => Ok(circular_error(g.degrees() as f64, a)),
            Aggregate::Score(_) => unreachable!("gaze records aggregate to angles"),
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if errors.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(mean(&errors))
}

/// Adds the mean swim time to every OLED-condition answer time.
pub fn adjust_time(records: &[ResponseRecord], mean_swim_time_s: f64) -> Result<Vec<ResponseRecord>, MetricsError> {
    if !(mean_swim_time_s.is_finite() && mean_swim_time_s >= 0.0) {
        return Err(MetricsError::SwimTime(mean_swim_time_s));
    }
    Ok(records
        .iter()
        .cloned()
        .map(|mut r| {
            if r.condition == Condition::Oled {
                r.time_to_answer_s += mean_swim_time_s;
            }
            r
        })
        .collect())
}

/// Subjects-by-categories table of rater counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMatrix {
    rows: Vec<Vec<u32>>,
    raters: u32,
}

impl RatingMatrix {
    pub fn new(rows: Vec<Vec<u32>>) -> Result<Self, MetricsError> {
        let bad = |m: &str| Err(MetricsError::Matrix(m.to_string()));
        let Some(first) = rows.first() else {
            return bad("no subjects");
        };
        let k = first.len();
        if k == 0 {
            return bad("no categories");
        }
        if rows.iter().any(|r| r.len() != k) {
            return bad("rows have different category counts");
        }
        let raters: u32 = first.iter().sum();
        if raters < 2 {
            return bad("need at least two raters per subject");
        }
        if rows.iter().any(|r| r.iter().sum::<u32>() != raters) {
            return bad("rows do not all sum to the same rater count");
        }
        Ok(RatingMatrix { rows, raters })
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn subjects(&self) -> usize {
        self.rows.len()
    }

    pub fn categories(&self) -> usize {
        self.rows[0].len()
    }

    pub fn raters(&self) -> u32 {
        self.raters
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    pub value: f64,
    /// Chance agreement was 1 (every rating in one category); `value` is 1 by convention.
    pub degenerate: bool,
}

pub fn fleiss_kappa(m: &RatingMatrix) -> Kappa {
    let n = m.raters as f64;
    let subjects = m.subjects() as f64;
    let total = subjects * n;

    let p_bar = m
        .rows
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c as f64) * (c as f64)).sum();
            (sq - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / subjects;

    let mut column_totals = alloc::vec![0u64; m.categories()];
    for row in &m.rows {
        for (t, &c) in column_totals.iter_mut().zip(row) {
            *t += c as u64;
        }
    }
    if column_totals.iter().any(|&t| t as f64 == total) {
        return Kappa {
            value: 1.0,
            degenerate: true,
        };
    }
    let p_e: f64 = column_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / total;
            p * p
        })
        .sum();
    Kappa {
        value: (p_bar - p_e) / (1.0 - p_e),
        degenerate: false,
    }
}

/// Landis and Koch verbal band for a kappa value.
pub fn interpret_kappa(kappa: f64) -> &'static str {
    if kappa < 0.0 {
        "poor"
    } else if kappa <= 0.20 {
        "slight"
    } else if kappa <= 0.40 {
        "fair"
    } else if kappa <= 0.60 {
        "moderate"
    } else if kappa <= 0.80 {
        "substantial"
    } else {
        "almost perfect"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LucemeRow {
    pub shown: Shown,
    pub responses: usize,
    /// Mean aggregated score (active) or mean circular error (gaze).
    pub value: f64,
    pub operational_accuracy: Option<f64>,
    pub mean_confidence: f64,
    pub mean_time_s: f64,
}

/// Per-luceme breakdown, keyed and ordered by what was shown.
pub fn per_luceme(records: &[ResponseRecord]) -> Result<Vec<LucemeRow>, MetricsError> {
    let mut groups: BTreeMap<Shown, Vec<ResponseRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.shown).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(shown, group)| {
            let (value, operational_accuracy) = match shown {
                Shown::Active(_) => (accuracy(&group)?, operational_accuracy(&group)?),
                Shown::Gaze(_) => (mean_gaze_error(&group)?, None),
            };
            Ok(LucemeRow {
                shown,
                responses: group.len(),
                value,
                operational_accuracy,
                mean_confidence: mean(&group.iter().map(|r| r.confidence as f64).collect::<Vec<_>>()),
                mean_time_s: mean(&group.iter().map(|r| r.time_to_answer_s).collect::<Vec<_>>()),
            })
        })
        .collect()
}

/// Everything the `score` command prints.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub responses: usize,
    pub accuracy: Option<f64>,
    pub operational_accuracy: Option<f64>,
    pub mean_confidence: Option<f64>,
    pub mean_time_s: Option<f64>,
    pub mean_gaze_error: Option<f64>,
    pub kappa: Option<Kappa>,
    pub rows: Vec<LucemeRow>,
}

impl Report {
    pub fn build(records: &[ResponseRecord], ratings: Option<&RatingMatrix>) -> Result<Self, MetricsError> {
        if records.is_empty() {
            return Err(MetricsError::Empty);
        }
        let has_active = records.iter().any(|r| r.is_active());
        let has_gaze = records.iter().any(|r| !r.is_active());
        Ok(Report {
            responses: records.len(),
            accuracy: has_active.then(|| accuracy(records)).transpose()?,
            operational_accuracy: if has_active { operational_accuracy(records)? } else { None },
            mean_confidence: Some(mean(&records.iter().map(|r| r.confidence as f64).collect::<Vec<_>>())),
            mean_time_s: Some(mean(&records.iter().map(|r| r.time_to_answer_s).collect::<Vec<_>>())),
            mean_gaze_error: has_gaze.then(|| mean_gaze_error(records)).transpose()?,
            kappa: ratings.map(fleiss_kappa),
            rows: per_luceme(records)?,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| alloc::format!("{v:.1}"));
        let _ = writeln!(out, "responses              {}", self.responses);
        let _ = writeln!(out, "accuracy               {}", opt(self.accuracy));
        let _ = writeln!(out, "operational accuracy   {}", opt(self.operational_accuracy));
        let _ = writeln!(out, "mean confidence        {}", opt(self.mean_confidence));
        let _ = writeln!(out, "mean time to answer    {} s", opt(self.mean_time_s));
        let _ = writeln!(out, "mean gaze error        {} deg", opt(self.mean_gaze_error));
        if let Some(k) = self.kappa {
            let _ = writeln!(
                out,
                "fleiss kappa           {:.3} ({}{})",
                k.value,
                interpret_kappa(k.value),
                if k.degenerate { ", degenerate" } else { "" }
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<14} {:>5} {:>8} {:>8} {:>6} {:>7}", "luceme", "n", "score", "op.acc", "conf", "time_s");
        for row in &self.rows {
            let label = match row.shown {
                Shown::Active(_) => "",
                Shown::Gaze(_) => " (err)",
            };
            let _ = writeln!(
                out,
                "{:<14} {:>5} {:>8} {:>8} {:>6.1} {:>7.1}",
                alloc::format!("{}{}", row.shown, label),
                row.responses,
                alloc::format!("{:.1}", row.value),
                opt(row.operational_accuracy),
                row.mean_confidence,
                row.mean_time_s
            );
        }
        out
    }

    /// Line-delimited `key=value` form.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| alloc::format!("{v}"));
        let _ = writeln!(out, "responses={}", self.responses);
        let _ = writeln!(out, "accuracy={}", opt(self.accuracy));
        let _ = writeln!(out, "operational_accuracy={}", opt(self.operational_accuracy));
        let _ = writeln!(out, "mean_confidence={}", opt(self.mean_confidence));
        let _ = writeln!(out, "mean_time_s={}", opt(self.mean_time_s));
        let _ = writeln!(out, "mean_gaze_error_deg={}", opt(self.mean_gaze_error));
        if let Some(k) = self.kappa {
            let _ = writeln!(out, "fleiss_kappa={}", k.value);
            let _ = writeln!(out, "fleiss_kappa_degenerate={}", k.degenerate);
        }
        for row in &self.rows {
            let _ = writeln!(out, "luceme.{}.n={}", row.shown, row.responses);
            match row.shown {
                Shown::Active(_) => {
                    let _ = writeln!(out, "luceme.{}.accuracy={}", row.shown, row.value);
                    let _ = writeln!(out, "luceme.{}.operational_accuracy={}", row.shown, opt(row.operational_accuracy));
                }
                Shown::Gaze(_) => {
                    let _ = writeln!(out, "luceme.{}.gaze_error_deg={}", row.shown, row.value);
                }
            }
            let _ = writeln!(out, "luceme.{}.mean_time_s={}", row.shown, row.mean_time_s);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn active(scores: &[f64], confidence: u8) -> ResponseRecord {
        ResponseRecord::new(
            "p1",
            Condition::HreyeTrained,
            Shown::Active(ActiveLucemeId::Stay),
            scores.to_vec(),
            confidence,
            4.0,
        )
        .unwrap()
    }

    fn gaze(deg: i64, angles: &[f64]) -> ResponseRecord {
        ResponseRecord::new(
            "p1",
            Condition::HreyeTrained,
            Shown::Gaze(GazeAngle::new(deg).unwrap()),
            angles.to_vec(),
            7,
            3.0,
        )
        .unwrap()
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_score(&active(&[100.0, 100.0, 70.0], 5)).unwrap(), Aggregate::Score(90.0));
        assert_eq!(aggregate_score(&active(&[40.0], 5)).unwrap(), Aggregate::Score(40.0));
        let Aggregate::Angle(a) = aggregate_score(&gaze(0, &[350.0, 10.0])).unwrap() else {
            panic!()
        };
        assert!(circular_distance(a, 0.0) < 1e-9);
        assert!(ResponseRecord::new("p", Condition::Oled, Shown::Active(ActiveLucemeId::Stay), vec![], 1, 1.0).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let rs: Vec<_> = [100.0, 100.0, 50.0, 0.0].iter().map(|&s| active(&[s], 7)).collect();
        assert_eq!(accuracy(&rs).unwrap(), 62.5);
        assert_eq!(accuracy(&[active(&[100.0], 1), active(&[100.0], 2)]).unwrap(), 100.0);
        assert_eq!(accuracy(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn operational_examples() {
        let rs = [active(&[100.0], 9), active(&[0.0], 2)];
        assert_eq!(operational_accuracy(&rs).unwrap(), Some(100.0));
        let low = [active(&[100.0], 5), active(&[30.0], 5)];
        assert_eq!(operational_accuracy(&low).unwrap(), None);
        assert_eq!(operational_accuracy(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn kappa_examples() {
        let k = fleiss_kappa(&RatingMatrix::new(vec![vec![3, 0], vec![0, 3]]).unwrap());
        assert_eq!(k.value, 1.0);
        assert!(!k.degenerate);
        let k = fleiss_kappa(&RatingMatrix::new(vec![vec![4, 0], vec![4, 0]]).unwrap());
        assert_eq!(k, Kappa { value: 1.0, degenerate: true });
        // hand evaluation: P = [1, 1/3, 1/3, 1], mean 2/3; p = [1/2, 1/2], Pe = 1/2
        let k = fleiss_kappa(&RatingMatrix::new(vec![vec![3, 0], vec![2, 1], vec![1, 2], vec![0, 3]]).unwrap());
        assert!((k.value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_matrices() {
        assert!(RatingMatrix::new(vec![]).is_err());
        assert!(RatingMatrix::new(vec![vec![]]).is_err());
        // one category: every rater agrees by construction
        let k = fleiss_kappa(&RatingMatrix::new(vec![vec![3], vec![3]]).unwrap());
        assert!(k.degenerate && k.value == 1.0);
        assert!(RatingMatrix::new(vec![vec![1, 0]]).is_err());
        assert!(RatingMatrix::new(vec![vec![2, 1], vec![1, 1]]).is_err());
        assert!(RatingMatrix::new(vec![vec![2, 1], vec![1, 1, 1]]).is_err());
    }

    #[test]
    fn circular_error_examples() {
        assert_eq!(circular_error(90.0, 120.0), 30.0);
        assert_eq!(circular_error(350.0, 10.0), 20.0);
        assert_eq!(circular_error(42.0, 42.0), 0.0);
    }

    #[test]
    fn adjust_time_examples() {
        let oled = ResponseRecord::new("p", Condition::Oled, Shown::Active(ActiveLucemeId::Stay), vec![100.0], 8, 4.0).unwrap();
        let eye = ResponseRecord::new("p", Condition::HreyeTrained, Shown::Active(ActiveLucemeId::Stay), vec![100.0], 8, 4.0).unwrap();
        let out = adjust_time(&[oled.clone(), eye.clone()], 6.0).unwrap();
        assert_eq!(out[0].time_to_answer_s, 10.0);
        assert_eq!(out[1].time_to_answer_s, 4.0);
        assert_eq!(adjust_time(&[oled.clone(), eye.clone()], 0.0).unwrap(), vec![oled.clone(), eye]);
        assert_eq!(adjust_time(&[oled], -1.0), Err(MetricsError::SwimTime(-1.0)));
    }

    #[test]
    fn gaze_error_and_report() {
        let rs = vec![gaze(90, &[120.0, 120.0]), gaze(0, &[350.0, 330.0]), active(&[80.0], 8)];
        let e = mean_gaze_error(&rs).unwrap();
        assert!((e - 25.0).abs() < 1e-9);
        let report = Report::build(&rs, None).unwrap();
        assert_eq!(report.accuracy, Some(80.0));
        assert_eq!(report.rows.len(), 3);
        let kv = report.to_key_values();
        assert!(kv.contains("accuracy=80\n"));
        assert!(kv.contains("luceme.Stay.accuracy=80\n"));
        assert!(report.to_text().contains("accuracy               80.0"));
    }

    #[test]
    fn conditions_parse() {
        assert_eq!("OLED".parse::<Condition>().unwrap(), Condition::Oled);
        assert_eq!("HREye-trained".parse::<Condition>().unwrap(), Condition::HreyeTrained);
        assert_eq!("hreye_untrained".parse::<Condition>().unwrap(), Condition::HreyeUntrained);
        assert!("tv".parse::<Condition>().is_err());
    }

    #[test]
    fn shown_parses_both_kinds() {
        assert_eq!("FollowMe".parse::<Shown>().unwrap(), Shown::Active(ActiveLucemeId::FollowMe));
        let g = "Gaze270".parse::<Shown>().unwrap();
        assert_eq!(g, Shown::Gaze(GazeAngle::new(270).unwrap()));
        assert_eq!(g.to_string().parse::<Shown>().unwrap(), g);
        assert!("Blink".parse::<Shown>().is_err());
        assert!("Gaze100".parse::<Shown>().is_err());
    }
}
