use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = ["run_id", "seed", "method", "task", "split", "metric", "value", "extra"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    IdTrain,
    IdTest,
    OodTune,
    OodTest,
    Fewshot,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::IdTrain => "id_train",
            Split::IdTest => "id_test",
            Split::OodTune => "ood_tune",
            Split::OodTest => "ood_test",
            Split::Fewshot => "fewshot",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "id_train" => Split::IdTrain,
            "id_test" => Split::IdTest,
            "ood_tune" => Split::OodTune,
            "ood_test" => Split::OodTest,
            "fewshot" => Split::Fewshot,
            other => return Err(Error::Data(format!("unknown split {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub seed: u64,
    pub method: String,
    pub task: String,
    pub split: Split,
    pub metric: String,
    pub value: f64,
    pub extra: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn new(
        run_id: impl Into<String>,
        seed: u64,
        method: impl Into<String>,
        task: impl Into<String>,
        split: Split,
        metric: impl Into<String>,
        value: f64,
    ) -> Self {
        Self {
            run_id: run_id.into(),
            seed,
            method: method.into(),
            task: task.into(),
            split,
            metric: metric.into(),
            value,
            extra: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.insert(key.to_string(), value.to_string());
        self
    }

    fn extra_string(&self) -> String {
        self.extra
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    fn key(&self) -> (&str, &str, &str, Split, &str) {
        (&self.run_id, &self.method, &self.task, self.split, &self.metric)
    }
}

/// `printf("%.6g")`.
pub fn fmt_g6(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Checks that values are finite and keys unique.
pub fn validate_records(records: &[RunRecord]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for r in records {
        if !r.value.is_finite() {
            return Err(Error::Data(format!(
                "non-finite value for {}/{}/{}",
                r.run_id, r.method, r.metric
            )));
        }
        if !seen.insert(r.key()) {
            return Err(Error::Data(format!(
                "duplicate record {}/{}/{}/{}/{}",
                r.run_id,
                r.method,
                r.task,
                r.split.as_str(),
                r.metric
            )));
        }
    }
    Ok(())
}

pub fn write_csv(records: &[RunRecord], out: impl Write) -> Result<()> {
    validate_records(records)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.run_id.as_str(),
            &r.seed.to_string(),
            &r.method,
            &r.task,
            r.split.as_str(),
            &r.metric,
            &fmt_g6(r.value),
            &r.extra_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(format!("csv: {e}")))
}

pub fn read_csv(input: impl Read) -> Result<Vec<RunRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| Error::Format(format!("csv: {e}")))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!(
            "expected header {}, found {}",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(|e| Error::Format(format!("csv: {e}")))?;
        let bad = |what: &str| Error::Format(format!("data row {}: bad {what}", line + 1));
        let mut extra = BTreeMap::new();
        for kv in row[7].split(';').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("extra"))?;
            extra.insert(k.to_string(), v.to_string());
        }
        out.push(RunRecord {
            run_id: row[0].to_string(),
            seed: row[1].parse().map_err(|_| bad("seed"))?,
            method: row[2].to_string(),
            task: row[3].to_string(),
            split: Split::parse(&row[4]).map_err(|_| bad("split"))?,
            metric: row[5].to_string(),
            value: row[6].parse().map_err(|_| bad("value"))?,
            extra,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (2.0f64 / 3.0, "0.666667"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-3.14159265, "-3.14159"),
            (99999.95, "99999.9"),
            (999999.5, "1e+06"),
            (0.8996, "0.8996"),
        ];
        for (v, s) in cases {
            assert_eq!(fmt_g6(v), s, "{v}");
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let recs = vec![
            RunRecord::new("r0", 3, "cat5", "shift", Split::OodTest, "probe_accuracy", 0.75).with("n", 5),
            RunRecord::new("r0", 3, "erm", "shift", Split::OodTest, "probe_accuracy", 0.5),
        ];
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("run_id,seed,method,task,split,metric,value,extra\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_csv(&buf[..]).unwrap(), recs);
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn duplicates_and_nan_rejected() {
        let r = RunRecord::new("r", 0, "erm", "t", Split::IdTest, "acc", 0.1);
        assert!(write_csv(&[r.clone(), r.clone()], Vec::new()).is_err());
        let nan = RunRecord { value: f64::NAN, ..r };
        assert!(write_csv(&[nan], Vec::new()).is_err());
    }
}
