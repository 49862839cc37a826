//! Check records, emitted as JSON lines and a fixed-column CSV summary.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Result;
use crate::io::atomic_write;

/// One inequality or identity check: `lhs <= rhs` when asserted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub params: String,
    #[serde(with = "finite")]
    pub lhs: f64,
    #[serde(with = "finite")]
    pub rhs: f64,
    #[serde(with = "finite")]
    pub ratio: f64,
    pub pass: bool,
    pub asserted: bool,
    #[serde(default)]
    pub note: String,
}

/// Non-finite floats round-trip through JSON as strings.
mod finite {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Num::deserialize(d)? {
            Num::F(v) => Ok(v),
            Num::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

pub fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs != 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl CheckRecord {
    /// Asserted record passing iff `lhs <= rhs`.
    pub fn bound(check: &str, params: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        CheckRecord {
            check: check.into(),
            params: params.into(),
            lhs,
            rhs,
            ratio: ratio(lhs, rhs),
            pass: lhs <= rhs,
            asserted: true,
            note: String::new(),
        }
    }

    /// Asserted record with an explicit verdict.
    pub fn verdict(check: &str, params: impl Into<String>, lhs: f64, rhs: f64, pass: bool) -> Self {
        CheckRecord { pass, ..CheckRecord::bound(check, params, lhs, rhs) }
    }

    /// Reported-only record; never fails a suite.
    pub fn info(check: &str, params: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        CheckRecord { asserted: false, ..CheckRecord::bound(check, params, lhs, rhs) }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn failed(&self) -> bool {
        self.asserted && !self.pass
    }

    fn pass_label(&self) -> &'static str {
        match (self.asserted, self.pass) {
            (false, _) => "report",
            (true, true) => "true",
            (true, false) => "false",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub records: Vec<CheckRecord>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn push(&mut self, r: CheckRecord) {
        self.records.push(r);
    }

    pub fn extend(&mut self, rs: impl IntoIterator<Item = CheckRecord>) {
        self.records.extend(rs);
    }

    pub fn all_pass(&self) -> bool {
        !self.records.iter().any(CheckRecord::failed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| r.failed())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Report { records })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,params,lhs,rhs,ratio,pass\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e},{}",
                csv_field(&r.check),
                csv_field(&r.params),
                r.lhs,
                r.rhs,
                r.ratio,
                r.pass_label()
            );
        }
        s
    }

    /// Writes `<stem>.jsonl` and `<stem>.csv` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        atomic_write(&dir.join(format!("{stem}.jsonl")), self.to_jsonl()?.as_bytes())?;
        atomic_write(&dir.join(format!("{stem}.csv")), self.to_csv().as_bytes())?;
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_and_labels() {
        let mut rep = Report::new();
        rep.push(CheckRecord::bound("a", "k=1", 1.0, 2.0));
        rep.push(CheckRecord::info("b", "k=2", 3.0, 0.0).with_note("not asserted"));
        assert!(rep.all_pass());
        rep.push(CheckRecord::bound("c", "x,y", 3.0, 2.0));
        assert!(!rep.all_pass());
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "check,params,lhs,rhs,ratio,pass");
        assert!(lines[1].ends_with(",true"));
        assert!(lines[2].ends_with(",report"));
        assert!(lines[3].starts_with("c,\"x,y\","));
        assert!(lines[3].ends_with(",false"));
    }

    #[test]
    fn jsonl_round_trip_with_infinities() {
        let mut rep = Report::new();
        rep.push(CheckRecord::info("b", "", 3.0, 0.0));
        rep.push(CheckRecord::bound("a", "p", 0.1, 0.2));
        let back = Report::from_jsonl(&rep.to_jsonl().unwrap()).unwrap();
        assert_eq!(back, rep);
        assert!(back.records[0].ratio.is_infinite());
    }

    proptest::proptest! {
        #[test]
        fn jsonl_round_trip_is_bit_exact(lhs in proptest::num::f64::ANY, rhs in proptest::num::f64::NORMAL) {
            let mut rep = Report::new();
            rep.push(CheckRecord::bound("x", "p", lhs, rhs));
            let back = Report::from_jsonl(&rep.to_jsonl().unwrap()).unwrap();
            let (a, b) = (&rep.records[0], &back.records[0]);
            proptest::prop_assert_eq!(a.rhs.to_bits(), b.rhs.to_bits());
            if lhs.is_nan() {
                proptest::prop_assert!(b.lhs.is_nan());
            } else {
                proptest::prop_assert_eq!(a.lhs.to_bits(), b.lhs.to_bits());
            }
        }
    }
}
