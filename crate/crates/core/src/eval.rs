//! Batch evaluation: manifest parsing and the located / recognized / plate rates.
//!
//! Predicted characters are aligned to the ground truth left to right. A truth
//! character is located when the alignment pairs it with a predicted box and
//! recognized when that box also carries the right label. A plate succeeds
//! when the predicted string equals the truth exactly.

use std::fmt;

use thiserror::Error;

use crate::pipeline::{RecognitionReport, Timings};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("manifest line {line}: expected `path<TAB>plate`, got {text:?}")]
    Manifest { line: usize, text: String },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("{reports} reports for {rows} manifest rows")]
    CountMismatch { reports: usize, rows: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: String,
    /// Ground truth with any dash removed.
    pub plate: String,
}

/// Parses `path<TAB>plate` rows; blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>, EvalError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = || EvalError::Manifest {
            line: i + 1,
            text: trimmed.to_string(),
        };
        let (path, plate) = trimmed.split_once('\t').ok_or_else(bad)?;
        let plate: String = plate.trim().chars().filter(|&c| c != '-').collect();
        if path.is_empty() || plate.is_empty() || plate.contains('\t') {
            return Err(bad());
        }
        rows.push(ManifestRow {
            path: path.to_string(),
            plate,
        });
    }
    if rows.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    Ok(rows)
}

/// Per-image character counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CharScore {
    pub truth: usize,
    pub located: usize,
    pub recognized: usize,
}

/// Aligns `predicted` to `truth`, maximizing correct labels first and paired
/// characters second; unpaired characters on either side cost nothing.
pub fn score_plate(predicted: &str, truth: &str) -> CharScore {
    let p: Vec<char> = predicted.chars().collect();
    let t: Vec<char> = truth.chars().collect();
    // score = (recognized, located), compared lexicographically
    let mut dp = vec![vec![(0usize, 0usize); t.len() + 1]; p.len() + 1];
    for i in 1..=p.len() {
        for j in 1..=t.len() {
            let (r, l) = dp[i - 1][j - 1];
            let diag = (r + usize::from(p[i - 1] == t[j - 1]), l + 1);
            dp[i][j] = diag.max(dp[i - 1][j]).max(dp[i][j - 1]);
        }
    }
    let (recognized, located) = dp[p.len()][t.len()];
    CharScore {
        truth: t.len(),
        located,
        recognized,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSummary {
    pub images: usize,
    pub characters: usize,
    pub located: usize,
    pub recognized: usize,
    pub plates_ok: usize,
    /// Mean over images that carry timings.
    pub mean_timings: Option<Timings>,
}

pub fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

impl EvalSummary {
    pub fn located_rate(&self) -> f64 {
        percent(self.located, self.characters)
    }

    pub fn recognition_rate(&self) -> f64 {
        percent(self.recognized, self.characters)
    }

    pub fn plate_rate(&self) -> f64 {
        percent(self.plates_ok, self.images)
    }
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "images\t{}", self.images)?;
        writeln!(
            f,
            "located_characters\t{:.2}%\t{}/{}",
            self.located_rate(),
            self.located,
            self.characters
        )?;
        writeln!(
            f,
            "recognized_characters\t{:.2}%\t{}/{}",
            self.recognition_rate(),
            self.recognized,
            self.characters
        )?;
        write!(
            f,
            "plate_success\t{:.2}%\t{}/{}",
            self.plate_rate(),
            self.plates_ok,
            self.images
        )?;
        if let Some(t) = &self.mean_timings {
            write!(
                f,
                "\nmean_ms\tsift_match_ms={:.3};segment_ms={:.3};ocr_ms={:.3}",
                t.sift_match_ms, t.segment_ms, t.ocr_ms
            )?;
        }
        Ok(())
    }
}

/// Summarizes reports given in manifest order.
pub fn summarize(
    rows: &[ManifestRow],
    reports: &[RecognitionReport],
) -> Result<EvalSummary, EvalError> {
    if rows.len() != reports.len() {
        return Err(EvalError::CountMismatch {
            reports: reports.len(),
            rows: rows.len(),
        });
    }
    let mut s = EvalSummary {
        images: rows.len(),
        ..EvalSummary::default()
    };
    let mut sum = Timings::default();
    let mut timed = 0usize;
    for (row, rep) in rows.iter().zip(reports) {
        let score = score_plate(&rep.plate, &row.plate);
        s.characters += score.truth;
        s.located += score.located;
        s.recognized += score.recognized;
        s.plates_ok += usize::from(rep.plate == row.plate);
        // means are taken over the values as printed so that they can be recomputed from report lines
        if let Some(t) = rep.timings.map(|t| t.rounded()) {
            sum.sift_match_ms += t.sift_match_ms;
            sum.segment_ms += t.segment_ms;
            sum.ocr_ms += t.ocr_ms;
            timed += 1;
        }
    }
    if timed > 0 {
        let n = timed as f64;
        s.mean_timings = Some(Timings {
            sift_match_ms: sum.sift_match_ms / n,
            segment_ms: sum.segment_ms / n,
            ocr_ms: sum.ocr_ms / n,
        });
    }
    Ok(s)
}
