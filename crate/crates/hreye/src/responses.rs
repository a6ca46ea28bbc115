//! CSV readers for study responses and rating matrices.
//!
//! Response files carry a header row
//! `participant,condition,shown,values,confidence,time_s` where `values` is a
//! semicolon-separated list of rater scores (active lucemes) or reported
//! angles in degrees (gaze cues). Rating matrices are headerless rows of
//! per-category counts.

use std::io::Read;

use hreye_core::metrics::{MetricsError, RatingMatrix, ResponseRecord};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("line {line}: {cause}")]
    Row { line: u64, cause: String },
    #[error("missing column `{0}`")]
    Column(&'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

const COLUMNS: [&str; 6] = ["participant", "condition", "shown", "values", "confidence", "time_s"];

fn row_err(line: u64, cause: impl ToString) -> CsvError {
    CsvError::Row {
        line,
        cause: cause.to_string(),
    }
}

pub fn read_responses<R: Read>(reader: R) -> Result<Vec<ResponseRecord>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut at = [0usize; 6];
    for (slot, name) in at.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(CsvError::Column(name))?;
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(at[i]).unwrap_or("");
        let condition = field(1).parse().map_err(|e| row_err(line, e))?;
        let shown = field(2).parse().map_err(|e| row_err(line, e))?;
        let values = field(3)
            .split(';')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<f64>().map_err(|_| row_err(line, format!("bad value `{v}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let confidence = field(4)
            .parse::<u8>()
            .map_err(|_| row_err(line, format!("bad confidence `{}`", field(4))))?;
        let time = field(5)
            .parse::<f64>()
            .map_err(|_| row_err(line, format!("bad time `{}`", field(5))))?;
        let record = ResponseRecord::new(field(0), condition, shown, values, confidence, time)
            .map_err(|e| row_err(line, e))?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_responses<W: std::io::Write>(writer: W, records: &[ResponseRecord]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for r in records {
        let values: Vec<String> = r.rater_values.iter().map(|v| v.to_string()).collect();
        w.write_record([
            r.participant.clone(),
            r.condition.to_string(),
            r.shown.to_string(),
            values.join(";"),
            r.confidence.to_string(),
            r.time_to_answer_s.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One subject per row, one count per category; `#` lines are comments.
pub fn read_ratings<R: Read>(reader: R) -> Result<RatingMatrix, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let counts = row
            .iter()
            .map(|c| c.parse::<u32>().map_err(|_| row_err(line, format!("bad count `{c}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(counts);
    }
    Ok(RatingMatrix::new(rows)?)
}
