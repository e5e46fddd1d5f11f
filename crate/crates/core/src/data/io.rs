//! Manifest + per-sequence CSV storage.
//!
//! The manifest is a JSON list of persons, each naming its sequence files
//! (relative to the manifest) and their VAS/OPI labels. Each sequence CSV has
//! a header `x1..xN,y1..yN,pspi` optionally followed by
//! `au4,au6,au7,au9,au10,au43`, and one row per frame.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Cohort, PersonRecord, SequenceRecord, MAX_OPI, MAX_VAS};
use crate::error::{Error, Result};
use crate::io::{format_real, io_err, read_json, write_json};
use crate::pspi::{AuVector, DEFAULT_MAX_PSPI};

const AU_COLUMNS: [&str; 6] = ["au4", "au6", "au7", "au9", "au10", "au43"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSequence {
    pub file: String,
    pub vas: i64,
    pub opi: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestPerson {
    pub person_id: String,
    pub sequences: Vec<ManifestSequence>,
}

pub fn load_cohort(manifest_path: &Path) -> Result<Cohort> {
    load_cohort_with(manifest_path, DEFAULT_MAX_PSPI)
}

/// Loads a cohort, accepting PSPI labels up to `max_pspi`.
pub fn load_cohort_with(manifest_path: &Path, max_pspi: u8) -> Result<Cohort> {
    let manifest: Vec<ManifestPerson> = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut persons = Vec::with_capacity(manifest.len());
    for mp in manifest {
        let mut sequences = Vec::with_capacity(mp.sequences.len());
        for ms in &mp.sequences {
            let seq_id = Path::new(&ms.file)
                .file_stem()
                .map_or_else(|| ms.file.clone(), |s| s.to_string_lossy().into_owned());
            let label = |name: &'static str, value: i64, max: u8| -> Result<u8> {
                if (0..=i64::from(max)).contains(&value) {
                    Ok(value as u8)
                } else {
                    Err(Error::LabelOutOfRange {
                        person: mp.person_id.clone(),
                        sequence: seq_id.clone(),
                        label: name,
                        value,
                        min: 0,
                        max: max.into(),
                    })
                }
            };
            let vas = label("vas", ms.vas, MAX_VAS)?;
            let opi = label("opi", ms.opi, MAX_OPI)?;
            let (frames, pspi, au) = read_sequence_csv(&base.join(&ms.file), &mp.person_id, &seq_id)?;
            sequences.push(SequenceRecord {
                id: seq_id,
                frames,
                pspi,
                au,
                vas,
                opi,
            });
        }
        persons.push(PersonRecord {
            person_id: mp.person_id,
            sequences,
        });
    }
    Cohort::with_max_pspi(persons, max_pspi)
}

type SequenceColumns = (Vec<Vec<f64>>, Vec<u8>, Option<Vec<AuVector>>);

fn read_sequence_csv(path: &Path, person: &str, seq: &str) -> Result<SequenceColumns> {
    let invalid = |message: String| Error::InvalidSequence {
        person: person.to_string(),
        sequence: seq.to_string(),
        message,
    };
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    if !path.exists() {
        return Err(invalid(format!("missing sequence file {}", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();

    let n_points = header.iter().take_while(|h| h.starts_with('x')).count();
    let expected_header: Vec<String> = (1..=n_points)
        .map(|i| format!("x{i}"))
        .chain((1..=n_points).map(|i| format!("y{i}")))
        .chain(std::iter::once("pspi".to_string()))
        .collect();
    if n_points == 0 || header.len() < expected_header.len() || header[..expected_header.len()] != expected_header[..] {
        return Err(invalid(format!(
            "header must be x1..xN,y1..yN,pspi[,{}]",
            AU_COLUMNS.join(",")
        )));
    }
    let extra = &header[expected_header.len()..];
    let has_au = match extra.len() {
        0 => false,
        6 if extra.iter().zip(AU_COLUMNS).all(|(h, a)| h == a) => true,
        _ => return Err(invalid(format!("unexpected trailing columns {extra:?}"))),
    };
    let dim = 2 * n_points;
    let tail = 1 + if has_au { 6 } else { 0 };

    let mut frames = Vec::new();
    let mut pspi = Vec::new();
    let mut aus = Vec::new();
    for (t, row) in reader.records().enumerate() {
        let row = row.map_err(csv_err)?;
        if row.len() != dim + tail {
            return Err(Error::DimensionMismatch {
                person: person.to_string(),
                sequence: seq.to_string(),
                frame: t,
                found: row.len().saturating_sub(tail),
                expected: dim,
            });
        }
        let frame = row
            .iter()
            .take(dim)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| invalid(format!("frame {t}: {e}")))?;
        let int = |i: usize| -> Result<u8> {
            row[i]
                .parse::<u8>()
                .map_err(|e| invalid(format!("frame {t}, column {}: {e}", header[i])))
        };
        pspi.push(int(dim)?);
        if has_au {
            aus.push(AuVector {
                au4: int(dim + 1)?,
                au6: int(dim + 2)?,
                au7: int(dim + 3)?,
                au9: int(dim + 4)?,
                au10: int(dim + 5)?,
                au43: int(dim + 6)?,
            });
        }
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(invalid("sequence file has no frames".into()));
    }
    Ok((frames, pspi, has_au.then_some(aus)))
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `manifest.json` and one CSV per sequence under `dir/sequences/`.
/// Returns the manifest path.
pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<PathBuf> {
    let seq_dir = dir.join("sequences");
    fs::create_dir_all(&seq_dir).map_err(io_err(&seq_dir))?;
    let n_points = cohort.feature_dim / 2;
    let mut manifest = Vec::with_capacity(cohort.persons.len());
    for person in &cohort.persons {
        let mut entries = Vec::with_capacity(person.sequences.len());
        for seq in &person.sequences {
            let person_dir = seq_dir.join(sanitize(&person.person_id));
            fs::create_dir_all(&person_dir).map_err(io_err(&person_dir))?;
            let rel = format!("sequences/{}/{}.csv", sanitize(&person.person_id), sanitize(&seq.id));
            let path = dir.join(&rel);
            let mut w = csv::Writer::from_path(&path).map_err(|source| Error::Csv {
                path: path.clone(),
                source,
            })?;
            let csv_err = |source| Error::Csv {
                path: path.clone(),
                source,
            };
            let mut header: Vec<String> = (1..=n_points)
                .map(|j| format!("x{j}"))
                .chain((1..=n_points).map(|j| format!("y{j}")))
                .collect();
            header.push("pspi".into());
            if seq.au.is_some() {
                header.extend(AU_COLUMNS.iter().map(|s| s.to_string()));
            }
            w.write_record(&header).map_err(csv_err)?;
            for (t, frame) in seq.frames.iter().enumerate() {
                let mut row: Vec<String> = frame.iter().map(|&v| format_real(v)).collect();
                row.push(seq.pspi[t].to_string());
                if let Some(au) = &seq.au {
                    let a = au[t];
                    row.extend([a.au4, a.au6, a.au7, a.au9, a.au10, a.au43].iter().map(u8::to_string));
                }
                w.write_record(&row).map_err(csv_err)?;
            }
            w.flush().map_err(io_err(&path))?;
            entries.push(ManifestSequence {
                file: rel,
                vas: seq.vas.into(),
                opi: seq.opi.into(),
            });
        }
        manifest.push(ManifestPerson {
            person_id: person.person_id.clone(),
            sequences: entries,
        });
    }
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_seq(dir: &Path, name: &str, rows: &[Vec<String>], n_points: usize) {
        let mut header: Vec<String> = (1..=n_points).map(|i| format!("x{i}")).collect();
        header.extend((1..=n_points).map(|i| format!("y{i}")));
        header.push("pspi".into());
        let mut text = header.join(",") + "\n";
        for r in rows {
            text += &(r.join(",") + "\n");
        }
        fs::write(dir.join(name), text).unwrap();
    }

    fn frame_row(n_values: usize, pspi: u8) -> Vec<String> {
        let mut r: Vec<String> = (0..n_values).map(|i| format!("{}.5", i)).collect();
        r.push(pspi.to_string());
        r
    }

    fn manifest(dir: &Path, persons: &[(&str, &str, i64, i64)]) -> PathBuf {
        let m: Vec<ManifestPerson> = persons
            .iter()
            .map(|(id, file, vas, opi)| ManifestPerson {
                person_id: id.to_string(),
                sequences: vec![ManifestSequence {
                    file: file.to_string(),
                    vas: *vas,
                    opi: *opi,
                }],
            })
            .collect();
        let p = dir.join("manifest.json");
        write_json(&p, &m).unwrap();
        p
    }

    #[test]
    fn loads_two_persons() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<_> = (0..3).map(|t| frame_row(132, t)).collect();
        write_seq(dir.path(), "a.csv", &rows, 66);
        write_seq(dir.path(), "b.csv", &rows, 66);
        let m = manifest(dir.path(), &[("p1", "a.csv", 4, 2), ("p2", "b.csv", 7, 3)]);
        let cohort = load_cohort(&m).unwrap();
        assert_eq!(cohort.persons.len(), 2);
        assert_eq!(cohort.feature_dim, 132);
        assert!(cohort.sequences().all(|s| s.len() == 3));
        assert_eq!(cohort.persons[1].sequences[0].vas, 7);
    }

    #[test]
    fn vas_out_of_range_names_sequence() {
        let dir = tempfile::tempdir().unwrap();
        write_seq(dir.path(), "a.csv", &[frame_row(132, 0)], 66);
        let m = manifest(dir.path(), &[("p1", "a.csv", 11, 2)]);
        match load_cohort(&m) {
            Err(Error::LabelOutOfRange { sequence, label, value, .. }) => {
                assert_eq!((sequence.as_str(), label, value), ("a", "vas", 11));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_frame_is_a_dimension_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows: Vec<_> = (0..6).map(|_| frame_row(132, 0)).collect();
        rows[5] = frame_row(131, 0);
        write_seq(dir.path(), "a.csv", &rows, 66);
        let m = manifest(dir.path(), &[("p1", "a.csv", 1, 1)]);
        match load_cohort(&m) {
            Err(Error::DimensionMismatch { frame, found, expected, .. }) => {
                assert_eq!((frame, found, expected), (5, 131, 132));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_and_empty_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path(), &[("p1", "nope.csv", 1, 1)]);
        assert!(matches!(load_cohort(&m), Err(Error::InvalidSequence { .. })));
        write_seq(dir.path(), "e.csv", &[], 66);
        let m = manifest(dir.path(), &[("p1", "e.csv", 1, 1)]);
        assert!(matches!(load_cohort(&m), Err(Error::InvalidSequence { .. })));
        assert!(load_cohort(&dir.path().join("absent.json")).is_err());
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let seq = SequenceRecord {
            id: "s0".into(),
            frames: vec![vec![0.1234567891234, -5.0, 1e-7, 3.25], vec![1.0, 2.0, 3.0, 4.0]],
            pspi: vec![0, 12],
            au: Some(vec![AuVector::default(), AuVector::new(4, 3, 5, 1, 2, 1).unwrap()]),
            vas: 6,
            opi: 2,
        };
        let cohort = Cohort::new(vec![PersonRecord {
            person_id: "p/1".into(),
            sequences: vec![seq],
        }])
        .unwrap();
        let m = save_cohort(&cohort, dir.path()).unwrap();
        let back = load_cohort(&m).unwrap();
        let (a, b) = (&cohort.persons[0].sequences[0], &back.persons[0].sequences[0]);
        assert_eq!(back.persons[0].person_id, "p/1");
        assert_eq!(b.id, "s0");
        assert_eq!((a.vas, a.opi, &a.pspi, &a.au), (b.vas, b.opi, &b.pspi, &b.au));
        assert_eq!(b.frames[0][0], 0.123456789);
        assert_eq!(&a.frames[1], &b.frames[1]);
    }
}
