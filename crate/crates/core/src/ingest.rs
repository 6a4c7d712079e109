//! Review records: parsing, rating-to-sentiment labels and rating histograms.
//!
//! The canonical corpus format is JSON lines, one review object per line:
//!
//! ```text
//! {"rating":5,"product_id":"B00DS842HS","reviewer_id":"A28R8UNBXGLFOR",
//!  "helpfulness_up":4,"helpfulness_total":4,"title":"It's working!",
//!  "review_time":20140308,"review_text":"So far so good. ..."}
//! ```
//!
//! [`parse_block`] additionally accepts the `key: value` display rendering
//! (`rating: 5.0 out of 5 stars`, `product_ID: ...`, continuation lines
//! indented) used by some review dumps.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("rating {0} is outside 1..=5")]
    BadRating(String),
    #[error("review_time `{0}` is not a valid YYYYMMDD date")]
    BadDate(String),
    #[error("field `{0}` is malformed")]
    MalformedField(String),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<IngestError>,
    },
    #[error("line {line}: invalid JSON: {message}")]
    Json { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Three-way sentiment label. The ordering is used for reporting and tie-breaks only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentClass {
    Negative,
    Neutral,
    Positive,
}

impl SentimentClass {
    pub const ALL: [SentimentClass; 3] = [Self::Negative, Self::Neutral, Self::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Negative => "negative",
            Self::Neutral => "neutral",
            Self::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One parsed corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub rating: u8,
    pub product_id: String,
    pub reviewer_id: String,
    /// (helpful votes, total votes)
    pub helpfulness: (u32, u32),
    pub title: String,
    /// Calendar date encoded as `YYYYMMDD`.
    pub review_time: u32,
    pub review_text: String,
}

impl Review {
    /// Serializes to the canonical JSON-lines object.
    pub fn to_json(&self) -> Value {
        json!({
            "rating": self.rating,
            "product_id": self.product_id,
            "reviewer_id": self.reviewer_id,
            "helpfulness_up": self.helpfulness.0,
            "helpfulness_total": self.helpfulness.1,
            "title": self.title,
            "review_time": self.review_time,
            "review_text": self.review_text,
        })
    }

    pub fn date(&self) -> NaiveDate {
        // validated at construction
        date_from_yyyymmdd(self.review_time).expect("review_time validated on parse")
    }

    pub fn sentiment(&self) -> SentimentClass {
        label_from_rating(self.rating).expect("rating validated on parse")
    }
}

/// Maps a star rating onto its sentiment class: 1–2 negative, 3 neutral, 4–5 positive.
pub fn label_from_rating(rating: u8) -> Result<SentimentClass, IngestError> {
    match rating {
        1 | 2 => Ok(SentimentClass::Negative),
        3 => Ok(SentimentClass::Neutral),
        4 | 5 => Ok(SentimentClass::Positive),
        other => Err(IngestError::BadRating(other.to_string())),
    }
}

/// Counts reviews per star rating.
pub fn rating_histogram(reviews: &[Review]) -> BTreeMap<u8, usize> {
    let mut hist = BTreeMap::new();
    for r in reviews {
        *hist.entry(r.rating).or_insert(0) += 1;
    }
    hist
}

/// Renders a histogram as `rating<TAB>count` lines, ascending by rating.
pub fn histogram_tsv(hist: &BTreeMap<u8, usize>) -> String {
    hist.iter().map(|(r, c)| format!("{r}\t{c}\n")).collect()
}

fn date_from_yyyymmdd(v: u32) -> Option<NaiveDate> {
    NaiveDate::from_ymd_opt((v / 10_000) as i32, (v / 100) % 100, v % 100)
}

/// Accepts `20140308` or `2014-03-08`.
fn parse_date(raw: &str) -> Result<u32, IngestError> {
    let digits: String = raw.trim().chars().filter(|c| *c != '-').collect();
    if digits.len() != 8 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(IngestError::BadDate(raw.to_string()));
    }
    let v: u32 = digits.parse().map_err(|_| IngestError::BadDate(raw.to_string()))?;
    date_from_yyyymmdd(v)
        .map(|_| v)
        .ok_or_else(|| IngestError::BadDate(raw.to_string()))
}

/// Accepts `5`, `5.0`, or `5.0 out of 5 stars`; fractional values round half-up.
fn parse_rating(raw: &str) -> Result<u8, IngestError> {
    let head = raw.split_whitespace().next().unwrap_or("");
    let value: f64 = head
        .parse()
        .map_err(|_| IngestError::BadRating(raw.trim().to_string()))?;
    rating_from_f64(value).ok_or_else(|| IngestError::BadRating(raw.trim().to_string()))
}

fn rating_from_f64(value: f64) -> Option<u8> {
    if !value.is_finite() {
        return None;
    }
    let rounded = (value + 0.5).floor();
    (1.0..=5.0).contains(&rounded).then_some(rounded as u8)
}

fn value_as_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn optional_u32(obj: &Map<String, Value>, key: &str) -> Result<u32, IngestError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(0),
        Some(Value::Number(n)) => n
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| IngestError::MalformedField(key.to_string())),
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map_err(|_| IngestError::MalformedField(key.to_string())),
        Some(_) => Err(IngestError::MalformedField(key.to_string())),
    }
}

fn optional_string(obj: &Map<String, Value>, key: &str) -> Result<String, IngestError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(v) => value_as_text(v).ok_or_else(|| IngestError::MalformedField(key.to_string())),
    }
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, IngestError> {
    match obj.get(key) {
        None | Some(Value::Null) => Err(IngestError::MissingField(key.to_string())),
        Some(v) => Ok(v),
    }
}

/// Parses one JSON review object.
pub fn parse_review(record: &Value) -> Result<Review, IngestError> {
    let empty = Map::new();
    let obj = match record {
        Value::Object(o) => o,
        Value::Null => &empty,
        _ => return Err(IngestError::MalformedField("record".into())),
    };

    let rating = match required(obj, "rating")? {
        Value::Number(n) => {
            let v = n.as_f64().unwrap_or(f64::NAN);
            rating_from_f64(v).ok_or_else(|| IngestError::BadRating(n.to_string()))?
        }
        Value::String(s) => parse_rating(s)?,
        _ => return Err(IngestError::MalformedField("rating".into())),
    };
    let product_id = value_as_text(required(obj, "product_id")?)
        .ok_or_else(|| IngestError::MalformedField("product_id".into()))?;
    if product_id.trim().is_empty() {
        return Err(IngestError::MissingField("product_id".into()));
    }
    let review_time = {
        let v = required(obj, "review_time")?;
        let raw = value_as_text(v).ok_or_else(|| IngestError::BadDate(v.to_string()))?;
        parse_date(&raw)?
    };
    let review_text = value_as_text(required(obj, "review_text")?)
        .ok_or_else(|| IngestError::MalformedField("review_text".into()))?;

    let up = optional_u32(obj, "helpfulness_up")?;
    let total = optional_u32(obj, "helpfulness_total")?;
    if up > total {
        return Err(IngestError::MalformedField("helpfulness_up".into()));
    }

    Ok(Review {
        rating,
        product_id,
        reviewer_id: optional_string(obj, "reviewer_id")?,
        helpfulness: (up, total),
        title: optional_string(obj, "title")?,
        review_time,
        review_text,
    })
}

/// Parses a `key: value` block record (one field per line, indented continuation lines).
pub fn parse_block(block: &str) -> Result<Review, IngestError> {
    let mut fields: Vec<(String, String)> = Vec::new();
    for line in block.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let starts_field = !line.starts_with(char::is_whitespace);
        match line.split_once(':') {
            Some((key, value)) if starts_field && is_block_key(key) => {
                fields.push((key.trim().to_string(), value.trim().to_string()));
            }
            _ => match fields.last_mut() {
                Some((_, value)) => {
                    if !value.is_empty() {
                        value.push(' ');
                    }
                    value.push_str(line.trim());
                }
                None => return Err(IngestError::MalformedField(line.trim().to_string())),
            },
        }
    }

    let mut obj = Map::new();
    for (key, value) in fields {
        match key.as_str() {
            "rating" => {
                obj.insert("rating".into(), Value::String(value));
            }
            "product_ID" | "product_id" => {
                obj.insert("product_id".into(), Value::String(value));
            }
            "ID" | "reviewer_id" => {
                obj.insert("reviewer_id".into(), Value::String(value));
            }
            "helpfulness" => {
                let (up, total) = value
                    .split_once('/')
                    .ok_or_else(|| IngestError::MalformedField("helpfulness".into()))?;
                obj.insert("helpfulness_up".into(), Value::String(up.trim().into()));
                obj.insert("helpfulness_total".into(), Value::String(total.trim().into()));
            }
            "title" => {
                obj.insert("title".into(), Value::String(value));
            }
            "review_time" => {
                obj.insert("review_time".into(), Value::String(value));
            }
            "review" | "review_text" => {
                obj.insert("review_text".into(), Value::String(value));
            }
            _ => {} // review_by and other display-only metadata
        }
    }
    parse_review(&Value::Object(obj))
}

const BLOCK_KEYS: &[&str] = &[
    "rating",
    "product_ID",
    "product_id",
    "helpfulness",
    "ID",
    "reviewer_id",
    "review_by",
    "title",
    "review_time",
    "review",
    "review_text",
];

fn is_block_key(key: &str) -> bool {
    BLOCK_KEYS.contains(&key.trim())
}

/// Reads a JSON-lines corpus. Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Review>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IngestError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| IngestError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        let review = parse_review(&value).map_err(|e| IngestError::AtLine {
            line: i + 1,
            source: Box::new(e),
        })?;
        out.push(review);
    }
    Ok(out)
}

/// Reads block-format records separated by blank lines.
pub fn read_blocks(text: &str) -> Result<Vec<Review>, IngestError> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start_line = 1;
    for (i, line) in text.lines().chain(std::iter::once("")).enumerate() {
        if line.trim().is_empty() {
            if !current.trim().is_empty() {
                let review = parse_block(&current).map_err(|e| IngestError::AtLine {
                    line: start_line,
                    source: Box::new(e),
                })?;
                out.push(review);
            }
            current.clear();
            start_line = i + 2;
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    Ok(out)
}

pub fn write_jsonl<W: std::io::Write>(reviews: &[Review], mut w: W) -> std::io::Result<()> {
    for r in reviews {
        writeln!(w, "{}", r.to_json())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DISPLAY_RECORD: &str = "\
rating: 5.0 out of 5 stars
product_ID: B00DS842HS
helpfulness: 4/4
ID: A28R8UNBXGLFOR
review_by: Melliemel
title: It's working!
review_time: 20140308
review: So far so good. I bought this because I wanted to start oil pulling. It's
       been working great. Great taste (while swishing it around and NOT
       swallowing it). Put some on my arm that was very dry. It helped. Haven't
       cooked with it yet, but I'm sure it will be great!
";

    #[test]
    fn parses_display_block() {
        let r = parse_block(DISPLAY_RECORD).unwrap();
        assert_eq!(r.rating, 5);
        assert_eq!(r.product_id, "B00DS842HS");
        assert_eq!(r.helpfulness, (4, 4));
        assert_eq!(r.reviewer_id, "A28R8UNBXGLFOR");
        assert_eq!(r.review_time, 20140308);
        assert_eq!(r.title, "It's working!");
        assert!(r.review_text.starts_with("So far so good."));
        assert!(r.review_text.ends_with("it will be great!"));
        assert!(r.review_text.contains("It's been working great."));
    }

    #[test]
    fn empty_record_is_missing_field() {
        assert!(matches!(
            parse_review(&json!({})),
            Err(IngestError::MissingField(_))
        ));
        assert!(matches!(parse_block(""), Err(IngestError::MissingField(_))));
    }

    #[test]
    fn out_of_range_rating() {
        let rec = json!({"rating": "7.0", "product_id": "p", "review_time": 20140308, "review_text": "x"});
        assert!(matches!(parse_review(&rec), Err(IngestError::BadRating(_))));
        let rec = json!({"rating": 0, "product_id": "p", "review_time": 20140308, "review_text": "x"});
        assert!(matches!(parse_review(&rec), Err(IngestError::BadRating(_))));
    }

    #[test]
    fn fractional_ratings_round_half_up() {
        for (raw, want) in [("4.5", 5), ("4.49", 4), ("0.5", 1), ("5.0 out of 5 stars", 5)] {
            let rec = json!({"rating": raw, "product_id": "p", "review_time": 20140308, "review_text": "x"});
            assert_eq!(parse_review(&rec).unwrap().rating, want, "{raw}");
        }
        let rec = json!({"rating": 5.5, "product_id": "p", "review_time": 20140308, "review_text": "x"});
        assert!(matches!(parse_review(&rec), Err(IngestError::BadRating(_))));
    }

    #[test]
    fn bad_dates() {
        for raw in ["20140230", "2014038", "abcdefgh", "20141301"] {
            let rec = json!({"rating": 3, "product_id": "p", "review_time": raw, "review_text": "x"});
            assert!(matches!(parse_review(&rec), Err(IngestError::BadDate(_))), "{raw}");
        }
        let rec = json!({"rating": 3, "product_id": "p", "review_time": "2002-08-21", "review_text": "x"});
        assert_eq!(parse_review(&rec).unwrap().review_time, 20020821);
    }

    #[test]
    fn optional_metadata_defaults() {
        let rec = json!({"rating": 3, "product_id": "p", "review_time": 20140308, "review_text": "x"});
        let r = parse_review(&rec).unwrap();
        assert_eq!(r.helpfulness, (0, 0));
        assert_eq!(r.title, "");
        assert_eq!(r.reviewer_id, "");
    }

    #[test]
    fn empty_product_id_rejected() {
        let rec = json!({"rating": 3, "product_id": " ", "review_time": 20140308, "review_text": "x"});
        assert!(matches!(parse_review(&rec), Err(IngestError::MissingField(_))));
    }

    #[test]
    fn label_mapping() {
        use SentimentClass::*;
        let got: Vec<_> = (1..=5).map(|r| label_from_rating(r).unwrap()).collect();
        assert_eq!(got, vec![Negative, Negative, Neutral, Positive, Positive]);
        assert!(label_from_rating(0).is_err());
        assert!(label_from_rating(6).is_err());
    }

    #[test]
    fn histogram_counts() {
        assert!(rating_histogram(&[]).is_empty());
        let mk = |rating| Review {
            rating,
            product_id: "p".into(),
            reviewer_id: String::new(),
            helpfulness: (0, 0),
            title: String::new(),
            review_time: 20140308,
            review_text: String::new(),
        };
        let h = rating_histogram(&[mk(5), mk(5), mk(1)]);
        assert_eq!(h, BTreeMap::from([(1, 1), (5, 2)]));
        assert_eq!(histogram_tsv(&h), "1\t1\n5\t2\n");
    }

    #[test]
    fn blocks_separated_by_blank_lines() {
        let text = format!("{DISPLAY_RECORD}\n\n{}", DISPLAY_RECORD.replace("5.0 out", "2.0 out"));
        let rs = read_blocks(&text).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[1].rating, 2);
    }

    fn arb_review() -> impl Strategy<Value = Review> {
        (
            1u8..=5,
            "[A-Z0-9]{1,12}",
            "[A-Z0-9]{0,14}",
            (0u32..100, 0u32..100),
            ".{0,20}",
            (1990i32..2030, 1u32..=12, 1u32..=28),
            ".{0,80}",
        )
            .prop_map(|(rating, pid, rid, (a, b), title, (y, m, d), text)| Review {
                rating,
                product_id: pid,
                reviewer_id: rid,
                helpfulness: (a.min(b), a.max(b)),
                title,
                review_time: y as u32 * 10_000 + m * 100 + d,
                review_text: text,
            })
    }

    proptest! {
        #[test]
        fn json_round_trip(r in arb_review()) {
            let line = r.to_json().to_string();
            let back = parse_review(&serde_json::from_str(&line).unwrap()).unwrap();
            prop_assert_eq!(back, r);
        }

        #[test]
        fn histogram_sums_to_len(rs in proptest::collection::vec(arb_review(), 0..40)) {
            let total: usize = rating_histogram(&rs).values().sum();
            prop_assert_eq!(total, rs.len());
        }
    }
}
