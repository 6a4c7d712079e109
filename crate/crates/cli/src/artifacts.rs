//! On-disk formats that only the command line needs.
//!
//! * `features.bin`: magic `RSFEATS\0`, version 1, `u64 rows, u64 cols`, then
//!   the row-major values as little-endian `f64`.
//! * `labels.bin`: magic `RSLABELS`, version 1, `u64 n`, then one byte per
//!   label (0 negative, 1 neutral, 2 positive).
//! * Reviews and tokens are JSON Lines, one record per line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use reviewsense::ingest::{self, Review};
use reviewsense::io::{read_f64s, read_header, read_len, write_f64s, write_header, write_len};
use reviewsense::{SentimentClass, TokenSequence};

const FEATURES_MAGIC: &[u8; 8] = b"RSFEATS\0";
const LABELS_MAGIC: &[u8; 8] = b"RSLABELS";

pub fn write_features(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_header(&mut w, FEATURES_MAGIC, 1)?;
    write_len(&mut w, x.nrows())?;
    write_len(&mut w, x.ncols())?;
    write_f64s(&mut w, x.as_standard_layout().as_slice().expect("standard layout"))?;
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let version = read_header(&mut r, FEATURES_MAGIC)?;
    if version != 1 {
        bail!("unsupported features version {version}");
    }
    let rows = read_len(&mut r)?;
    let cols = read_len(&mut r)?;
    let values = read_f64s(&mut r)?;
    Array2::from_shape_vec((rows, cols), values).context("features payload does not match its shape")
}

pub fn write_labels(path: &Path, labels: &[SentimentClass]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_header(&mut w, LABELS_MAGIC, 1)?;
    write_len(&mut w, labels.len())?;
    let bytes: Vec<u8> = labels.iter().map(|l| l.index() as u8).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<SentimentClass>> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let version = read_header(&mut r, LABELS_MAGIC)?;
    if version != 1 {
        bail!("unsupported labels version {version}");
    }
    let n = read_len(&mut r)?;
    let mut bytes = vec![0u8; n];
    r.read_exact(&mut bytes)?;
    bytes
        .into_iter()
        .map(|b| SentimentClass::from_index(b as usize).with_context(|| format!("bad label byte {b}")))
        .collect()
}

pub fn read_reviews(path: &Path) -> Result<Vec<Review>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    ingest::read_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

pub fn write_reviews(path: &Path, reviews: &[Review]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    ingest::write_jsonl(reviews, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_tokens(path: &Path, tokens: &[TokenSequence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for t in tokens {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tokens(path: &Path) -> Result<Vec<TokenSequence>> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).with_context(|| format!("line {}", n + 1))?);
        }
    }
    Ok(out)
}

pub fn create(path: &Path) -> io::Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new)
}
