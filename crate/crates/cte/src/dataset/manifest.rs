//! Manifest file parsing.
//!
//! Alignment manifest (one word segment per line, UTF-8, tab-separated):
//!
//! ```text
//! utterance_id <TAB> wav_path <TAB> start_s <TAB> end_s <TAB> word_id
//! ```
//!
//! Pairs manifest (UTD mode, no word identities):
//!
//! ```text
//! utt_a <TAB> start_a <TAB> end_a <TAB> utt_b <TAB> start_b <TAB> end_b
//! ```
//!
//! Phone manifest:
//!
//! ```text
//! utterance_id <TAB> start_s <TAB> end_s <TAB> space-separated phone symbols
//! ```
//!
//! Blank lines and lines starting with `#` are ignored in all three.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{Split, WordPair, WordSegment};

/// Parsed alignment manifest: segments plus the utterance → wav mapping.
#[derive(Debug, Clone, Default)]
pub struct AlignmentManifest {
    pub segments: Vec<WordSegment>,
    pub wav_paths: BTreeMap<String, PathBuf>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("bad {field} value {s:?}")))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

/// Load word segments (with their wav paths) from an alignment manifest.
/// All rows must parse and satisfy `end > start`; the first offending row
/// fails the whole load with its line number.
pub fn load_alignments(path: &Path, split: Split) -> Result<AlignmentManifest> {
    let text = fs::read_to_string(path)?;
    let mut manifest = AlignmentManifest::default();
    for (lineno, line) in content_lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 5 tab-separated fields, got {}", fields.len()),
            ));
        }
        let start = parse_f64(path, lineno, "start", fields[2])?;
        let end = parse_f64(path, lineno, "end", fields[3])?;
        if !(end > start) {
            return Err(parse_err(path, lineno, format!("end {end} <= start {start}")));
        }
        let utterance_id = fields[0].to_string();
        manifest
            .wav_paths
            .entry(utterance_id.clone())
            .or_insert_with(|| PathBuf::from(fields[1]));
        manifest.segments.push(WordSegment {
            utterance_id,
            start,
            end,
            word_id: Some(fields[4].to_string()),
            split,
        });
    }
    Ok(manifest)
}

fn admit_duration(seg: &WordSegment) -> bool {
    let d = seg.duration();
    (super::MIN_WORD_DURATION..=super::MAX_WORD_DURATION).contains(&d)
}

fn pair_key(s: &WordSegment) -> (String, u64, u64) {
    (s.utterance_id.clone(), s.start.to_bits(), s.end.to_bits())
}

/// Load a UTD-style pairs manifest. Pairs are taken verbatim (no word
/// identities), the training duration filter drops pairs with an
/// out-of-range side, self-pairs are dropped, and for every surviving
/// (a, b) the reverse (b, a) is appended unless already listed.
pub fn load_utd_pairs(path: &Path) -> Result<Vec<WordPair>> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in content_lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 6 tab-separated fields, got {}", fields.len()),
            ));
        }
        let mk = |utt: &str, s: f64, e: f64| WordSegment {
            utterance_id: utt.to_string(),
            start: s,
            end: e,
            word_id: None,
            split: Split::Train,
        };
        let sa = parse_f64(path, lineno, "start_a", fields[1])?;
        let ea = parse_f64(path, lineno, "end_a", fields[2])?;
        let sb = parse_f64(path, lineno, "start_b", fields[4])?;
        let eb = parse_f64(path, lineno, "end_b", fields[5])?;
        if !(ea > sa) || !(eb > sb) {
            return Err(parse_err(path, lineno, "segment with end <= start"));
        }
        pairs.push(WordPair {
            a: mk(fields[0], sa, ea),
            b: mk(fields[3], sb, eb),
        });
    }

    let mut kept: Vec<WordPair> = pairs
        .into_iter()
        .filter(|p| admit_duration(&p.a) && admit_duration(&p.b))
        .filter(|p| pair_key(&p.a) != pair_key(&p.b))
        .collect();

    let mut seen: std::collections::HashSet<((String, u64, u64), (String, u64, u64))> = kept
        .iter()
        .map(|p| (pair_key(&p.a), pair_key(&p.b)))
        .collect();
    let mut symmetric = Vec::new();
    for p in &kept {
        let rev = (pair_key(&p.b), pair_key(&p.a));
        if !seen.contains(&rev) {
            seen.insert(rev);
            symmetric.push(WordPair {
                a: p.b.clone(),
                b: p.a.clone(),
            });
        }
    }
    kept.extend(symmetric);
    Ok(kept)
}

/// Write pairs in the 6-column manifest format read by [`load_utd_pairs`].
pub fn write_pairs_manifest(path: &Path, pairs: &[WordPair]) -> Result<()> {
    use std::io::Write;
    let mut f = fs::File::create(path)?;
    writeln!(f, "# utt_a\tstart_a\tend_a\tutt_b\tstart_b\tend_b")?;
    for p in pairs {
        writeln!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            p.a.utterance_id, p.a.start, p.a.end, p.b.utterance_id, p.b.start, p.b.end
        )?;
    }
    Ok(())
}

/// Phone transcriptions keyed by (utterance, start bits, end bits).
#[derive(Debug, Clone, Default)]
pub struct PhoneManifest {
    entries: BTreeMap<(String, u64, u64), Vec<String>>,
}

impl PhoneManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in content_lines(&text) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected 4 tab-separated fields, got {}", fields.len()),
                ));
            }
            let start = parse_f64(path, lineno, "start", fields[1])?;
            let end = parse_f64(path, lineno, "end", fields[2])?;
            let phones: Vec<String> = fields[3].split_whitespace().map(String::from).collect();
            if phones.is_empty() {
                return Err(parse_err(path, lineno, "empty phone sequence"));
            }
            entries.insert(
                (fields[0].to_string(), start.to_bits(), end.to_bits()),
                phones,
            );
        }
        Ok(PhoneManifest { entries })
    }

    pub fn lookup(&self, seg: &WordSegment) -> Option<&[String]> {
        self.entries
            .get(&(
                seg.utterance_id.clone(),
                seg.start.to_bits(),
                seg.end.to_bits(),
            ))
            .map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, u64, u64), &Vec<String>)> {
        self.entries.iter()
    }
}
