use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{MetricsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricName {
    Fd,
    Fld,
    Precision,
    Recall,
    CosineSim,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Fd => "fd",
            MetricName::Fld => "fld",
            MetricName::Precision => "precision",
            MetricName::Recall => "recall",
            MetricName::CosineSim => "cosine_sim",
        }
    }

    fn valid(self, v: f64) -> bool {
        v.is_finite()
            && match self {
                MetricName::Fd => v >= 0.0,
                MetricName::Precision | MetricName::Recall => (0.0..=1.0).contains(&v),
                MetricName::CosineSim => (-1.0..=1.0).contains(&v),
                MetricName::Fld => true,
            }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fd" => MetricName::Fd,
            "fld" => MetricName::Fld,
            "precision" => MetricName::Precision,
            "recall" => MetricName::Recall,
            "cosine_sim" => MetricName::CosineSim,
            _ => return Err(MetricsError::Parse(format!("unknown metric {s:?}"))),
        })
    }
}

/// One metric value with the provenance needed to trace it back to its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: MetricName,
    pub value: f64,
    pub extractor_id: String,
    pub reference_tag: String,
    pub candidate_tag: String,
    pub seed: Option<u64>,
    pub extras: BTreeMap<String, f64>,
}

fn check_token(s: &str) -> Result<()> {
    if s.contains(['\t', '\n', '\r', '=']) {
        return Err(MetricsError::Parse(format!(
            "{s:?} may not contain tabs, newlines or '='"
        )));
    }
    Ok(())
}

impl MetricReport {
    pub fn new(
        metric: MetricName,
        value: f64,
        extractor_id: impl Into<String>,
        reference_tag: impl Into<String>,
        candidate_tag: impl Into<String>,
    ) -> Result<Self> {
        if !metric.valid(value) {
            return Err(MetricsError::OutOfRange { metric, value });
        }
        let r = Self {
            metric,
            value,
            extractor_id: extractor_id.into(),
            reference_tag: reference_tag.into(),
            candidate_tag: candidate_tag.into(),
            seed: None,
            extras: BTreeMap::new(),
        };
        for s in [&r.extractor_id, &r.reference_tag, &r.candidate_tag] {
            check_token(s)?;
        }
        Ok(r)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }

    /// Single-line `key=value` record, tab separated. Extras are prefixed with `extra.`.
    pub fn to_line(&self) -> String {
        let mut line = format!(
            "metric={}\tvalue={}\textractor={}\treference={}\tcandidate={}\tseed={}",
            self.metric,
            self.value,
            self.extractor_id,
            self.reference_tag,
            self.candidate_tag,
            self.seed
                .map_or_else(|| "none".to_string(), |s| s.to_string()),
        );
        for (k, v) in &self.extras {
            line.push_str(&format!("\textra.{k}={v}"));
        }
        line
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        let mut extras = BTreeMap::new();
        for tok in line.trim_end_matches(['\r', '\n']).split('\t') {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| MetricsError::Parse(format!("field {tok:?} has no '='")))?;
            if let Some(name) = k.strip_prefix("extra.") {
                let val: f64 = v
                    .parse()
                    .map_err(|e| MetricsError::Parse(format!("extra {name}: {e}")))?;
                extras.insert(name.to_string(), val);
            } else {
                fields.insert(k, v);
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| MetricsError::Parse(format!("missing field {k}")))
        };
        let metric: MetricName = get("metric")?.parse()?;
        let value: f64 = get("value")?
            .parse()
            .map_err(|e| MetricsError::Parse(format!("value: {e}")))?;
        let seed = match get("seed")? {
            "none" => None,
            s => Some(
                s.parse()
                    .map_err(|e| MetricsError::Parse(format!("seed: {e}")))?,
            ),
        };
        let mut r = MetricReport::new(
            metric,
            value,
            get("extractor")?,
            get("reference")?,
            get("candidate")?,
        )?;
        r.seed = seed;
        r.extras = extras;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_roundtrip() {
        let r = MetricReport::new(
            MetricName::Fd,
            0.1 + 0.2,
            "toy-teacher",
            "val-out",
            "synthetic",
        )
        .unwrap()
        .with_seed(42)
        .with_extra("cov_ddof", 1.0)
        .with_extra("std", 1e-9);
        let line = r.to_line();
        assert!(line.starts_with("metric=fd\tvalue=0.30000000000000004"));
        assert_eq!(MetricReport::parse_line(&line).unwrap(), r);
    }

    #[test]
    fn range_invariants() {
        assert!(MetricReport::new(MetricName::Precision, 1.5, "e", "r", "c").is_err());
        assert!(MetricReport::new(MetricName::Fd, -0.1, "e", "r", "c").is_err());
        assert!(MetricReport::new(MetricName::CosineSim, -1.0, "e", "r", "c").is_ok());
        assert!(MetricReport::new(MetricName::Fld, -3.0, "e", "r", "c").is_ok());
        assert!(MetricReport::new(MetricName::Fld, f64::NAN, "e", "r", "c").is_err());
        assert!(MetricReport::new(MetricName::Fd, 1.0, "e\tx", "r", "c").is_err());
    }
}
