//! Ownership-filing (Form 4) ingestion and defendant-name labeling.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

pub const DEFAULT_MATCH_THRESHOLD: u8 = 85;

pub const TRANSACTIONS_CSV_HEADER: [&str; 11] = [
    "cik",
    "filer_name",
    "date",
    "acq_disp",
    "is_director",
    "is_officer",
    "is_ten_pct",
    "is_other",
    "shares",
    "price",
    "label",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcquiredDisposed {
    Acquire,
    Dispose,
}

impl AcquiredDisposed {
    pub fn code(self) -> &'static str {
        match self {
            AcquiredDisposed::Acquire => "A",
            AcquiredDisposed::Dispose => "D",
        }
    }
}

impl FromStr for AcquiredDisposed {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(AcquiredDisposed::Acquire),
            "D" | "d" => Ok(AcquiredDisposed::Dispose),
            other => Err(Error::UnknownCategory(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub cik: String,
    pub filer_name: String,
    pub transaction_date: NaiveDate,
    pub acquired_disposed: AcquiredDisposed,
    pub is_director: bool,
    pub is_officer: bool,
    pub is_ten_percent_owner: bool,
    pub is_other: bool,
    pub shares: f64,
    pub price: f64,
    /// `None` until labeled.
    pub label: Option<Label>,
}

fn find<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.descendants().find(|n| n.has_tag_name(name))
}

/// Text of `<name>`, or of its `<value>` child when it has one.
fn field_text<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Option<&'a str> {
    let el = find(node, name)?;
    let holder = el.children().find(|c| c.has_tag_name("value")).unwrap_or(el);
    holder.text().map(str::trim).filter(|t| !t.is_empty())
}

fn flag(node: roxmltree::Node<'_, '_>, name: &str) -> bool {
    matches!(
        field_text(node, name).map(str::to_ascii_lowercase).as_deref(),
        Some("1" | "true")
    )
}

fn amount(node: roxmltree::Node<'_, '_>, name: &str) -> Result<f64> {
    match field_text(node, name) {
        None => Ok(0.0),
        Some(t) => t
            .replace(',', "")
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| Error::MalformedXml(format!("bad {name} value `{t}`"))),
    }
}

/// Parses one ownership document into its non-derivative transactions.
pub fn parse_form4(document: &[u8]) -> Result<Vec<Transaction>> {
    let text = std::str::from_utf8(document).map_err(|e| Error::MalformedXml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::MalformedXml(e.to_string()))?;
    let root = doc.root_element();

    let cik = field_text(root, "issuerCik")
        .filter(|c| c.chars().all(|ch| ch.is_ascii_digit()))
        .ok_or(Error::MissingRequiredField("issuerCik"))?
        .to_string();
    let filer_name = field_text(root, "rptOwnerName").unwrap_or("").to_string();
    let relationship = find(root, "reportingOwnerRelationship").unwrap_or(root);
    let is_director = flag(relationship, "isDirector");
    let is_officer = flag(relationship, "isOfficer");
    let is_ten_percent_owner = flag(relationship, "isTenPercentOwner");
    let is_other = flag(relationship, "isOther");

    root.descendants()
        .filter(|n| n.has_tag_name("nonDerivativeTransaction"))
        .map(|t| {
            let date_text =
                field_text(t, "transactionDate").ok_or(Error::MissingRequiredField("transactionDate"))?;
            // Some filings append a UTC offset: 2021-03-04-05:00
            let transaction_date = date_text
                .get(..10)
                .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
                .ok_or(Error::MissingRequiredField("transactionDate"))?;
            let acquired_disposed = field_text(t, "transactionAcquiredDisposedCode")
                .ok_or(Error::MissingRequiredField("transactionAcquiredDisposedCode"))?
                .parse()
                .map_err(|_| Error::MalformedXml("transactionAcquiredDisposedCode must be A or D".into()))?;
            Ok(Transaction {
                cik: cik.clone(),
                filer_name: filer_name.clone(),
                transaction_date,
                acquired_disposed,
                is_director,
                is_officer,
                is_ten_percent_owner,
                is_other,
                shares: amount(t, "transactionShares")?,
                price: amount(t, "transactionPricePerShare")?,
                label: None,
            })
        })
        .collect()
}

/// A batch parse that skips failing documents. Returns the parsed
/// transactions (in document order) and one `(document index, error)` per
/// skipped document.
pub fn parse_batch<D: AsRef<[u8]>>(documents: &[D]) -> (Vec<Transaction>, Vec<(usize, Error)>) {
    let mut txns = Vec::new();
    let mut skipped = Vec::new();
    for (i, doc) in documents.iter().enumerate() {
        match parse_form4(doc.as_ref()) {
            Ok(t) => txns.extend(t),
            Err(e) => {
                log::warn!("skipping document {i}: {} ({e})", e.class());
                skipped.push((i, e));
            }
        }
    }
    (txns, skipped)
}

/// Lower-cases and collapses runs of whitespace.
pub fn normalize_name(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `round(100 * (1 - d / max_len))` on normalized names; two empty names
/// score 100.
pub fn levenshtein_similarity(a: &str, b: &str) -> u8 {
    let (a, b) = (normalize_name(a), normalize_name(b));
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 100;
    }
    let d = levenshtein(&a, &b);
    (100.0 * (1.0 - d as f64 / max_len as f64)).round() as u8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefendantList {
    names: Vec<String>,
    pub source_id: String,
}

impl DefendantList {
    /// Drops blank names and case-folded duplicates, keeping first spellings.
    pub fn new<S: AsRef<str>>(names: &[S], source_id: impl Into<String>) -> Self {
        let mut seen = std::collections::HashSet::new();
        let names = names
            .iter()
            .map(|n| n.as_ref().trim())
            .filter(|n| !n.is_empty())
            .filter(|n| seen.insert(normalize_name(n)))
            .map(str::to_string)
            .collect();
        DefendantList {
            names,
            source_id: source_id.into(),
        }
    }

    /// One name per line; `#` starts a comment.
    pub fn parse(text: &str, source_id: impl Into<String>) -> Self {
        let names: Vec<&str> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .collect();
        Self::new(&names, source_id)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Highest similarity of `filer` against any defendant.
    pub fn best_score(&self, filer: &str) -> u8 {
        self.names
            .iter()
            .map(|d| levenshtein_similarity(filer, d))
            .max()
            .unwrap_or(0)
    }
}

/// Labels a transaction unlawful when its filer scores at least `threshold`
/// against some defendant, lawful otherwise.
pub fn label_transactions(
    txns: &[Transaction],
    defendants: &DefendantList,
    threshold: u8,
) -> Result<Vec<Transaction>> {
    if defendants.is_empty() {
        return Err(Error::EmptyDefendantList);
    }
    if threshold > 100 {
        return Err(Error::Config(format!("match threshold {threshold} exceeds 100")));
    }
    Ok(txns
        .iter()
        .map(|t| {
            let label = if defendants.best_score(&t.filer_name) >= threshold {
                Label::Unlawful
            } else {
                Label::Lawful
            };
            Transaction {
                label: Some(label),
                ..t.clone()
            }
        })
        .collect())
}

struct Flag(bool);

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0 { "1" } else { "0" })
    }
}

pub fn write_transactions_csv<W: Write>(writer: W, txns: &[Transaction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRANSACTIONS_CSV_HEADER)?;
    for t in txns {
        w.write_record([
            t.cik.clone(),
            t.filer_name.clone(),
            t.transaction_date.format("%Y-%m-%d").to_string(),
            t.acquired_disposed.code().to_string(),
            Flag(t.is_director).to_string(),
            Flag(t.is_officer).to_string(),
            Flag(t.is_ten_percent_owner).to_string(),
            Flag(t.is_other).to_string(),
            t.shares.to_string(),
            t.price.to_string(),
            t.label.map_or("unlabeled", Label::as_str).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_transactions_csv<R: Read>(reader: R) -> Result<Vec<Transaction>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().collect::<Vec<_>>() != TRANSACTIONS_CSV_HEADER {
        return Err(Error::Config("unexpected transactions CSV header".into()));
    }
    let bad = |what: &str, v: &str| Error::Config(format!("bad {what} `{v}` in transactions CSV"));
    let flag = |v: &str| match v {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(bad("flag", v)),
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(Transaction {
            cik: rec[0].to_string(),
            filer_name: rec[1].to_string(),
            transaction_date: NaiveDate::parse_from_str(&rec[2], "%Y-%m-%d")
                .map_err(|_| bad("date", &rec[2]))?,
            acquired_disposed: rec[3].parse()?,
            is_director: flag(&rec[4])?,
            is_officer: flag(&rec[5])?,
            is_ten_percent_owner: flag(&rec[6])?,
            is_other: flag(&rec[7])?,
            shares: rec[8].parse().map_err(|_| bad("shares", &rec[8]))?,
            price: rec[9].parse().map_err(|_| bad("price", &rec[9]))?,
            label: match &rec[10] {
                "unlabeled" => None,
                other => Some(other.parse()?),
            },
        });
    }
    Ok(out)
}
