//! Input file parsers and the bundled default data.
//!
//! The bundled professions carry approximate U.S. labor-force female shares;
//! the name list is a sample of common U.S. first names. Both are meant to be
//! replaced by user-supplied files for real audits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::experiment::{MedicalQuestion, NameEntry, Profession, SectorPrompt};
use crate::report::ReferenceStats;
use crate::text::StopWords;

const PROFESSIONS_CSV: &str = include_str!("../data/professions.csv");
const NAMES_CSV: &str = include_str!("../data/names.csv");
const QUESTIONS_JSON: &str = include_str!("../data/sample_questions.json");
const SECTOR_JSON: &str = include_str!("../data/sector_prompts.json");
const STOPWORDS_TXT: &str = include_str!("../data/stopwords_en.txt");
const REFERENCE_CSV: &str = include_str!("../data/reference_stats.csv");

pub const DEFAULT_REFERENCE_LABEL: &str = "U.S. labor force statistics 2022 (approximate)";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
}

impl DataError {
    fn parse(origin: &str, message: impl ToString) -> Self {
        DataError::Parse {
            origin: origin.to_string(),
            message: message.to_string(),
        }
    }
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_rows<T: for<'de> Deserialize<'de>>(
    contents: &str,
    origin: &str,
) -> Result<Vec<T>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(contents.as_bytes());
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| DataError::parse(origin, format!("row {}: {e}", i + 2))))
        .collect()
}

pub fn parse_professions(contents: &str, origin: &str) -> Result<Vec<Profession>, DataError> {
    let rows: Vec<Profession> = csv_rows(contents, origin)?;
    for p in &rows {
        if let Some(f) = p.reference_female_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(DataError::parse(
                    origin,
                    format!("fraction {f} for `{}` outside [0,1]", p.profession),
                ));
            }
        }
    }
    Ok(rows)
}

pub fn parse_names(contents: &str, origin: &str) -> Result<Vec<NameEntry>, DataError> {
    #[derive(Deserialize)]
    struct Row {
        name: String,
        gender: String,
    }
    csv_rows::<Row>(contents, origin)?
        .into_iter()
        .map(|r| {
            let gender = r
                .gender
                .parse()
                .map_err(|e: String| DataError::parse(origin, e))?;
            Ok(NameEntry {
                name: r.name,
                gender,
            })
        })
        .collect()
}

pub fn parse_questions(contents: &str, origin: &str) -> Result<Vec<MedicalQuestion>, DataError> {
    serde_json::from_str(contents).map_err(|e| DataError::parse(origin, e))
}

pub fn parse_sector_prompts(contents: &str, origin: &str) -> Result<Vec<SectorPrompt>, DataError> {
    serde_json::from_str(contents).map_err(|e| DataError::parse(origin, e))
}

/// Reads `profession,female_fraction` rows. A `reference_female_fraction`
/// column (the professions file layout) is accepted as well.
pub fn parse_reference_stats(
    contents: &str,
    origin: &str,
    source_label: &str,
) -> Result<ReferenceStats, DataError> {
    #[derive(Deserialize)]
    struct Row {
        profession: String,
        #[serde(alias = "reference_female_fraction")]
        female_fraction: f64,
    }
    let mut fractions = BTreeMap::new();
    for row in csv_rows::<Row>(contents, origin)? {
        if !(0.0..=1.0).contains(&row.female_fraction) {
            return Err(DataError::parse(
                origin,
                format!("fraction for `{}` outside [0,1]", row.profession),
            ));
        }
        fractions.insert(row.profession, row.female_fraction);
    }
    Ok(ReferenceStats {
        fractions,
        source_label: source_label.to_string(),
    })
}

pub fn load_professions(path: &Path) -> Result<Vec<Profession>, DataError> {
    parse_professions(&read(path)?, &path.display().to_string())
}

pub fn load_names(path: &Path) -> Result<Vec<NameEntry>, DataError> {
    parse_names(&read(path)?, &path.display().to_string())
}

pub fn load_questions(path: &Path) -> Result<Vec<MedicalQuestion>, DataError> {
    parse_questions(&read(path)?, &path.display().to_string())
}

pub fn load_sector_prompts(path: &Path) -> Result<Vec<SectorPrompt>, DataError> {
    parse_sector_prompts(&read(path)?, &path.display().to_string())
}

pub fn load_stopwords(path: &Path) -> Result<StopWords, DataError> {
    Ok(StopWords::parse(&read(path)?))
}

pub fn load_reference_stats(path: &Path) -> Result<ReferenceStats, DataError> {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "reference".to_string());
    parse_reference_stats(&read(path)?, &path.display().to_string(), &label)
}

pub fn default_professions() -> Vec<Profession> {
    parse_professions(PROFESSIONS_CSV, "bundled professions.csv").expect("bundled data parses")
}

pub fn default_names() -> Vec<NameEntry> {
    parse_names(NAMES_CSV, "bundled names.csv").expect("bundled data parses")
}

pub fn default_questions() -> Vec<MedicalQuestion> {
    parse_questions(QUESTIONS_JSON, "bundled sample_questions.json").expect("bundled data parses")
}

pub fn default_sector_prompts() -> Vec<SectorPrompt> {
    parse_sector_prompts(SECTOR_JSON, "bundled sector_prompts.json").expect("bundled data parses")
}

pub fn default_stopwords() -> StopWords {
    StopWords::parse(STOPWORDS_TXT)
}

pub fn default_reference_stats() -> ReferenceStats {
    parse_reference_stats(
        REFERENCE_CSV,
        "bundled reference_stats.csv",
        DEFAULT_REFERENCE_LABEL,
    )
    .expect("bundled data parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_data_is_consistent() {
        assert_eq!(default_professions().len(), 100);
        assert_eq!(default_questions().len(), 14);
        assert_eq!(default_sector_prompts().len(), 6);
        let sw = default_stopwords();
        assert!(sw.contains("she") && sw.contains("he") && sw.contains("and"));
        let names = default_names();
        assert!(names.len() >= 200);
        let reference = default_reference_stats();
        assert_eq!(reference.fractions.len(), 100);
        assert_eq!(reference.fractions["Cafeteria attendant"], 0.51);
        for q in default_questions() {
            q.validate().unwrap();
        }
        for p in default_sector_prompts() {
            p.validate().unwrap();
        }
    }

    #[test]
    fn bad_rows_are_reported() {
        let err = parse_names("name,gender\nAlex,unknown\n", "inline").unwrap_err();
        assert!(err.to_string().contains("unknown gender"));
        let err = parse_professions("profession,reference_female_fraction\nX,1.5\n", "inline")
            .unwrap_err();
        assert!(err.to_string().contains("outside"));
    }

    #[test]
    fn reference_accepts_professions_layout() {
        let stats = parse_reference_stats(
            "profession,reference_female_fraction\nNurse,0.87\n",
            "inline",
            "label",
        )
        .unwrap();
        assert_eq!(stats.fractions["Nurse"], 0.87);
    }
}
