//! Delimited data files.
//!
//! Longitudinal file, one row per measurement:
//! `subject,risk_factor,age,value` with 1-based risk factor ids.
//!
//! Survival file, one row per subject:
//! `subject,entry_age,time,event,<covariate>...` where `time` is follow-up
//! since entry and `event` is 0 or 1. Subjects appear in survival-file order.

use std::collections::HashMap;
use std::path::Path;

use crate::data::{Dataset, LongitudinalObservation, SubjectRecord, SurvivalOutcome};
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        msg: msg.into(),
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| parse_err(path, 1, format!("missing column {name:?}")))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, path: &Path, line: u64) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| parse_err(path, line, format!("missing {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {name} from {raw:?}")))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?)
}

/// Reads a dataset. Risk factor ids above `n_risk_factors` are rejected;
/// without it the largest id seen sets the count.
pub fn read_dataset(longitudinal: &Path, survival: &Path, n_risk_factors: Option<usize>) -> Result<Dataset> {
    let mut rdr = reader(survival)?;
    let headers = rdr.headers()?.clone();
    let (c_id, c_entry, c_time, c_event) = (
        column(&headers, "subject", survival)?,
        column(&headers, "entry_age", survival)?,
        column(&headers, "time", survival)?,
        column(&headers, "event", survival)?,
    );
    let cov_cols: Vec<usize> = (0..headers.len())
        .filter(|i| ![c_id, c_entry, c_time, c_event].contains(i))
        .collect();
    let mut subjects = Vec::new();
    let mut index = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(c_id).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(parse_err(survival, line, "empty subject id"));
        }
        let event: u8 = field(&rec, c_event, "event", survival, line)?;
        if event > 1 {
            return Err(parse_err(survival, line, format!("event must be 0 or 1, got {event}")));
        }
        let covariates = cov_cols
            .iter()
            .map(|&c| field(&rec, c, headers.get(c).unwrap_or("covariate"), survival, line))
            .collect::<Result<Vec<f64>>>()?;
        if index.insert(id.clone(), subjects.len()).is_some() {
            return Err(parse_err(survival, line, format!("duplicate subject {id:?}")));
        }
        subjects.push(SubjectRecord {
            id,
            entry_age: field(&rec, c_entry, "entry_age", survival, line)?,
            observations: Vec::new(),
            survival: SurvivalOutcome {
                time: field(&rec, c_time, "time", survival, line)?,
                event: event == 1,
                covariates,
            },
        });
    }

    let mut rdr = reader(longitudinal)?;
    let headers = rdr.headers()?.clone();
    let (c_id, c_rf, c_age, c_value) = (
        column(&headers, "subject", longitudinal)?,
        column(&headers, "risk_factor", longitudinal)?,
        column(&headers, "age", longitudinal)?,
        column(&headers, "value", longitudinal)?,
    );
    let mut max_rf = 0;
    let mut n_obs = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(c_id).unwrap_or("").trim();
        let rf: usize = field(&rec, c_rf, "risk_factor", longitudinal, line)?;
        if rf == 0 || n_risk_factors.is_some_and(|g| rf > g) {
            return Err(parse_err(longitudinal, line, format!("unknown risk factor id {rf}")));
        }
        let &i = index.get(id).ok_or_else(|| {
            Error::Validation(format!(
                "{}:{line}: subject {id:?} is missing from the survival file",
                longitudinal.display()
            ))
        })?;
        let age: f64 = field(&rec, c_age, "age", longitudinal, line)?;
        let value: f64 = field(&rec, c_value, "value", longitudinal, line)?;
        if !age.is_finite() || !value.is_finite() {
            return Err(parse_err(longitudinal, line, "age and value must be finite"));
        }
        max_rf = max_rf.max(rf);
        n_obs += 1;
        subjects[i].observations.push(LongitudinalObservation {
            risk_factor: rf - 1,
            age,
            value,
        });
    }
    if n_obs == 0 {
        return Err(Error::Validation(format!(
            "{}: no observations",
            longitudinal.display()
        )));
    }
    Dataset::new(n_risk_factors.unwrap_or(max_rf), subjects)
}

/// Writes a dataset; values use the shortest round-tripping representation.
pub fn write_dataset(data: &Dataset, longitudinal: &Path, survival: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(longitudinal)?;
    w.write_record(["subject", "risk_factor", "age", "value"])?;
    for s in &data.subjects {
        for o in &s.observations {
            w.write_record([
                s.id.clone(),
                (o.risk_factor + 1).to_string(),
                o.age.to_string(),
                o.value.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let p = data.n_covariates();
    let mut w = csv::Writer::from_path(survival)?;
    let mut header: Vec<String> = ["subject", "entry_age", "time", "event"].map(String::from).to_vec();
    header.extend((1..=p).map(|k| format!("w{k}")));
    w.write_record(&header)?;
    for s in &data.subjects {
        let mut row = vec![
            s.id.clone(),
            s.entry_age.to_string(),
            s.survival.time.to_string(),
            (s.survival.event as u8).to_string(),
        ];
        row.extend(s.survival.covariates.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
