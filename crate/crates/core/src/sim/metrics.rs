use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("run {run}: record at t={t} after t={last}")]
    OutOfOrder { run: String, t: u64, last: u64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: u64,
    pub metric: String,
    pub subject: String,
    pub value: f64,
}

/// Append-only measurement stream for one run.
#[derive(Debug, Clone, Default)]
pub struct MetricsSink {
    run_id: String,
    records: Vec<Record>,
}

pub const CSV_HEADER: [&str; 5] = ["run_id", "t", "metric", "subject", "value"];

impl MetricsSink {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self { run_id: run_id.into(), records: Vec::new() }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(
        &mut self,
        t: u64,
        metric: &str,
        subject: &str,
        value: f64,
    ) -> Result<(), MetricsError> {
        if let Some(last) = self.records.last() {
            if t < last.t {
                return Err(MetricsError::OutOfOrder {
                    run: self.run_id.clone(),
                    t,
                    last: last.t,
                });
            }
        }
        self.records.push(Record {
            t,
            metric: metric.to_string(),
            subject: subject.to_string(),
            value,
        });
        Ok(())
    }

    /// All values of one (metric, subject) series in time order.
    pub fn series(&self, metric: &str, subject: &str) -> Vec<(u64, f64)> {
        self.records
            .iter()
            .filter(|r| r.metric == metric && r.subject == subject)
            .map(|r| (r.t, r.value))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<(), MetricsError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        if header {
            w.write_record(CSV_HEADER)?;
        }
        for r in &self.records {
            let t = r.t.to_string();
            let v = format_value(r.value);
            w.write_record([self.run_id.as_str(), &t, &r.metric, &r.subject, &v])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, true).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Shortest round-trip decimal; independent of locale.
pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Concatenate several runs into one CSV document with a single header.
pub fn sinks_to_csv<'a>(sinks: impl IntoIterator<Item = &'a MetricsSink>) -> String {
    let mut buf = Vec::new();
    let mut first = true;
    for s in sinks {
        s.write_csv(&mut buf, first).expect("writing to memory");
        first = false;
    }
    if first {
        buf.extend_from_slice(CSV_HEADER.join(",").as_bytes());
        buf.push(b'\n');
    }
    String::from_utf8(buf).expect("csv is utf-8")
}
