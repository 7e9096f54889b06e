//! Quarterly panel completion: a gap at quarter `t` is filled from the
//! nearest later quarter of the same entity, looking at most `window`
//! quarters ahead.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar quarter. Ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quarter {
    pub year: i32,
    /// 1..=4
    pub q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::Config(format!("quarter must be 1..=4, got {q}")));
        }
        Ok(Quarter { year, q })
    }

    pub fn of_date(date: chrono::NaiveDate) -> Self {
        use chrono::Datelike;
        Quarter {
            year: date.year(),
            q: (date.month0() / 3 + 1) as u8,
        }
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }

    pub fn offset(self, quarters: i64) -> Quarter {
        let o = self.ordinal() + quarters;
        Quarter {
            year: o.div_euclid(4) as i32,
            q: (o.rem_euclid(4) + 1) as u8,
        }
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad quarter `{s}`, expected e.g. 2020Q3"));
        let (y, q) = s.trim().split_once(['Q', 'q']).ok_or_else(bad)?;
        Quarter::new(y.parse().map_err(|_| bad())?, q.parse().map_err(|_| bad())?)
    }
}

/// One entity's feature values for one quarter; `None` marks a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterRecord {
    pub entity: String,
    pub quarter: Quarter,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilledRecord {
    pub entity: String,
    pub quarter: Quarter,
    pub values: Vec<Option<f64>>,
    /// Some value stayed missing after the look-ahead window.
    pub excluded: bool,
}

/// Fills each gap from the first later quarter (within `window`) of the same
/// entity that has the value. Output order follows input order.
pub fn fill_missing(records: &[QuarterRecord], window: usize) -> Vec<FilledRecord> {
    let index: HashMap<(&str, Quarter), usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.entity.as_str(), r.quarter), i))
        .collect();

    records
        .iter()
        .map(|r| {
            let values: Vec<Option<f64>> = r
                .values
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    v.or_else(|| {
                        (1..=window as i64).find_map(|ahead| {
                            let key = (r.entity.as_str(), r.quarter.offset(ahead));
                            index.get(&key).and_then(|&i| records[i].values.get(j).copied().flatten())
                        })
                    })
                })
                .collect();
            let excluded = values.iter().any(Option::is_none);
            FilledRecord {
                entity: r.entity.clone(),
                quarter: r.quarter,
                values,
                excluded,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(q: u8, v: Option<f64>) -> QuarterRecord {
        QuarterRecord {
            entity: "320193".into(),
            quarter: Quarter::new(2020, q).unwrap(),
            values: vec![v, Some(q as f64)],
        }
    }

    #[test]
    fn copies_from_next_quarter() {
        let out = fill_missing(&[rec(1, None), rec(2, Some(7.0))], 1);
        assert_eq!(out[0].values, vec![Some(7.0), Some(1.0)]);
        assert!(!out[0].excluded);
    }

    #[test]
    fn exhausted_window_is_excluded() {
        let recs: Vec<_> = (1..=4).map(|q| rec(q, None)).collect();
        let out = fill_missing(&recs, 3);
        assert!(out.iter().all(|r| r.excluded));
    }

    #[test]
    fn window_limits_look_ahead() {
        let recs = [rec(1, None), rec(2, None), rec(3, Some(9.0))];
        assert!(fill_missing(&recs, 1)[0].excluded);
        assert_eq!(fill_missing(&recs, 2)[0].values[0], Some(9.0));
    }

    #[test]
    fn complete_panel_is_identity() {
        let recs = [rec(1, Some(1.5)), rec(2, Some(2.5))];
        let out = fill_missing(&recs, 1);
        for (a, b) in recs.iter().zip(&out) {
            assert_eq!(a.values, b.values);
            assert!(!b.excluded);
        }
    }

    #[test]
    fn quarter_parsing_and_year_rollover() {
        let q: Quarter = "2020Q4".parse().unwrap();
        assert_eq!(q.offset(1), Quarter::new(2021, 1).unwrap());
        assert_eq!(q.to_string(), "2020Q4");
        assert!("2020Q5".parse::<Quarter>().is_err());
        let d = chrono::NaiveDate::from_ymd_opt(2021, 8, 31).unwrap();
        assert_eq!(Quarter::of_date(d), Quarter::new(2021, 3).unwrap());
    }
}
