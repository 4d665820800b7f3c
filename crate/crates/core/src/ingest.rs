//! Corpus loading: recording filenames, respiratory-cycle annotations and the
//! patient diagnosis table.
//!
//! The expected on-disk layout mirrors the ICBHI convention: each
//! `<patient>_<recindex>_<location>_<mode>_<equipment>.wav` has a sibling
//! `.txt` with one cycle per line (`start end crackles wheezes`), plus a
//! corpus-level `patient_id,disease` CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disease labels annotated in the corpus.
///
/// Asthma and LRTI are loaded but flagged [`Disease::is_excluded`]; they are
/// dropped after segmentation, not at ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Disease {
    Pneumonia,
    Bronchiectasis,
    Copd,
    Healthy,
    Urti,
    Bronchiolitis,
    Asthma,
    Lrti,
}

impl Disease {
    /// Classes with too few usable cycles; excluded downstream.
    pub fn is_excluded(self) -> bool {
        matches!(self, Disease::Asthma | Disease::Lrti)
    }

    /// The six classes retained for classification, in canonical order.
    pub const RETAINED: [Disease; 6] = [
        Disease::Bronchiectasis,
        Disease::Bronchiolitis,
        Disease::Copd,
        Disease::Healthy,
        Disease::Pneumonia,
        Disease::Urti,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Disease::Pneumonia => "Pneumonia",
            Disease::Bronchiectasis => "Bronchiectasis",
            Disease::Copd => "COPD",
            Disease::Healthy => "Healthy",
            Disease::Urti => "URTI",
            Disease::Bronchiolitis => "Bronchiolitis",
            Disease::Asthma => "Asthma",
            Disease::Lrti => "LRTI",
        }
    }
}

impl fmt::Display for Disease {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Disease {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pneumonia" => Ok(Disease::Pneumonia),
            "bronchiectasis" => Ok(Disease::Bronchiectasis),
            "copd" => Ok(Disease::Copd),
            "healthy" => Ok(Disease::Healthy),
            "urti" => Ok(Disease::Urti),
            "bronchiolitis" => Ok(Disease::Bronchiolitis),
            "asthma" => Ok(Disease::Asthma),
            "lrti" => Ok(Disease::Lrti),
            other => Err(format!("unknown disease label `{other}`")),
        }
    }
}

/// Metadata carried by a recording's filename.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub patient_id: u32,
    pub recording_index: String,
    pub chest_location: String,
    /// `sc` (single channel) or `mc` (multichannel).
    pub acquisition_mode: String,
    pub equipment: String,
    pub path: PathBuf,
}

impl RecordingMeta {
    /// Recompose the canonical `<patient>_<rec>_<loc>_<mode>_<equip>.wav` name.
    pub fn filename(&self) -> String {
        format!(
            "{}_{}_{}_{}_{}.wav",
            self.patient_id, self.recording_index, self.chest_location, self.acquisition_mode, self.equipment
        )
    }

    /// Stable identifier used in artifact filenames: `<patient>_<rec>`.
    pub fn recording_id(&self) -> String {
        format!("{}_{}", self.patient_id, self.recording_index)
    }
}

/// One annotated respiratory cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleAnnotation {
    pub start_s: f64,
    pub end_s: f64,
    pub crackles: bool,
    pub wheezes: bool,
}

/// Map from patient id to disease label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiagnosisTable {
    entries: BTreeMap<u32, Disease>,
}

impl DiagnosisTable {
    pub fn get(&self, patient_id: u32) -> Option<Disease> {
        self.entries.get(&patient_id).copied()
    }

    pub fn insert(&mut self, patient_id: u32, disease: Disease) -> Result<()> {
        match self.entries.get(&patient_id) {
            Some(&existing) if existing != disease => Err(Error::ConflictingDiagnosis {
                patient: patient_id,
                first: existing.name().to_string(),
                second: disease.name().to_string(),
            }),
            _ => {
                self.entries.insert(patient_id, disease);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, Disease)> + '_ {
        self.entries.iter().map(|(&p, &d)| (p, d))
    }
}

/// Parse `<patient>_<recindex>_<location>_<mode>_<equipment>.wav`.
pub fn parse_recording_filename(name: &str) -> Result<RecordingMeta> {
    let malformed = |msg: &str| Error::MalformedName(name.to_string(), msg.to_string());
    let stem = name.strip_suffix(".wav").ok_or_else(|| malformed("missing .wav extension"))?;
    let parts: Vec<&str> = stem.split('_').collect();
    if parts.len() != 5 {
        return Err(malformed(&format!("expected 5 underscore-separated fields, found {}", parts.len())));
    }
    if parts.iter().any(|p| p.is_empty()) {
        return Err(malformed("empty field"));
    }
    let patient_id: u32 = parts[0]
        .parse()
        .map_err(|_| malformed(&format!("non-numeric patient id `{}`", parts[0])))?;
    if patient_id == 0 {
        return Err(malformed("patient id must be positive"));
    }
    Ok(RecordingMeta {
        patient_id,
        recording_index: parts[1].to_string(),
        chest_location: parts[2].to_string(),
        acquisition_mode: parts[3].to_string(),
        equipment: parts[4].to_string(),
        path: PathBuf::from(name),
    })
}

/// Load cycle annotations: one `start end crackles wheezes` row per line,
/// tab or space separated. Blank lines are ignored.
pub fn load_cycle_annotations(path: &Path) -> Result<Vec<CycleAnnotation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let parse_err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };

    let mut cycles = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        let start_s: f64 = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("non-numeric start `{}`", fields[0])))?;
        let end_s: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(line_no, format!("non-numeric end `{}`", fields[1])))?;
        let flag = |s: &str| -> Result<bool> {
            match s {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(parse_err(line_no, format!("expected 0/1 flag, found `{other}`"))),
            }
        };
        let crackles = flag(fields[2])?;
        let wheezes = flag(fields[3])?;
        if !start_s.is_finite() || !end_s.is_finite() {
            return Err(parse_err(line_no, "non-finite cycle bound".to_string()));
        }
        if start_s < 0.0 {
            return Err(parse_err(line_no, format!("negative start {start_s}")));
        }
        if end_s <= start_s {
            return Err(parse_err(line_no, format!("end {end_s} <= start {start_s}")));
        }
        cycles.push(CycleAnnotation { start_s, end_s, crackles, wheezes });
    }
    Ok(cycles)
}

/// Load the `patient_id,disease` CSV. A header row is optional; duplicate
/// rows with the same label are idempotent, conflicting labels are rejected.
pub fn load_diagnosis_table(path: &Path) -> Result<DiagnosisTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let parse_err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };

    let mut table = DiagnosisTable::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_start_matches('\u{feff}').trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let first = parts.next().unwrap_or("").trim();
        let second = parts.next().unwrap_or("").trim();
        if second.is_empty() {
            return Err(parse_err(line_no, "expected `patient_id,disease`".to_string()));
        }
        let patient_id: u32 = match first.parse() {
            Ok(p) => p,
            // a non-numeric first field is only tolerated as a header row
            Err(_) if line_no == 1 => continue,
            Err(_) => return Err(parse_err(line_no, format!("non-numeric patient id `{first}`"))),
        };
        if patient_id == 0 {
            return Err(parse_err(line_no, "patient id must be positive".to_string()));
        }
        let disease = Disease::from_str(second).map_err(|msg| parse_err(line_no, msg))?;
        table.insert(patient_id, disease)?;
    }
    Ok(table)
}

/// Result of scanning a corpus directory.
#[derive(Debug, Clone)]
pub struct CorpusScan {
    /// Recordings with annotations, in lexicographic filename order.
    pub recordings: Vec<(RecordingMeta, Vec<CycleAnnotation>)>,
    /// WAV files skipped because their patient has no diagnosis entry.
    pub skipped_no_diagnosis: Vec<PathBuf>,
}

/// Scan `root` for `*.wav` recordings with sibling `.txt` annotations.
///
/// Output order is lexicographic by filename regardless of directory listing
/// order. A WAV without an annotation file is an error; a WAV whose patient
/// is absent from the diagnosis table is reported and skipped.
pub fn scan_corpus(root: &Path, diagnosis: &DiagnosisTable) -> Result<CorpusScan> {
    let mut wavs: Vec<PathBuf> = Vec::new();
    let read_dir = fs::read_dir(root).map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
    for entry in read_dir {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
        let path = entry.path();
        if path.extension().map(|e| e == "wav").unwrap_or(false) {
            wavs.push(path);
        }
    }
    wavs.sort();

    let mut recordings = Vec::new();
    let mut skipped = Vec::new();
    for path in wavs {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::MalformedName(path.display().to_string(), "non-UTF8 filename".to_string()))?;
        let mut meta = parse_recording_filename(name)?;
        meta.path = path.clone();
        let ann_path = path.with_extension("txt");
        if !ann_path.exists() {
            return Err(Error::MissingAnnotation(path));
        }
        if diagnosis.get(meta.patient_id).is_none() {
            skipped.push(path);
            continue;
        }
        let cycles = load_cycle_annotations(&ann_path)?;
        recordings.push((meta, cycles));
    }
    Ok(CorpusScan { recordings, skipped_no_diagnosis: skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn parses_canonical_filename() {
        let meta = parse_recording_filename("101_1b1_Al_sc_Meditron.wav").unwrap();
        assert_eq!(meta.patient_id, 101);
        assert_eq!(meta.recording_index, "1b1");
        assert_eq!(meta.chest_location, "Al");
        assert_eq!(meta.acquisition_mode, "sc");
        assert_eq!(meta.equipment, "Meditron");
    }

    #[test]
    fn parses_multichannel_filename() {
        let meta = parse_recording_filename("999_2a_Tc_mc_AKGC417L.wav").unwrap();
        assert_eq!(meta.patient_id, 999);
        assert_eq!(meta.acquisition_mode, "mc");
    }

    #[test]
    fn rejects_bad_filenames() {
        assert!(matches!(parse_recording_filename("badname.wav"), Err(Error::MalformedName(..))));
        assert!(matches!(parse_recording_filename("x_1_2_3_4_5.wav"), Err(Error::MalformedName(..))));
        assert!(matches!(parse_recording_filename("abc_1b1_Al_sc_M.wav"), Err(Error::MalformedName(..))));
        assert!(matches!(parse_recording_filename("0_1b1_Al_sc_M.wav"), Err(Error::MalformedName(..))));
        assert!(matches!(parse_recording_filename("101_1b1_Al_sc_M.mp3"), Err(Error::MalformedName(..))));
    }

    #[test]
    fn filename_round_trip() {
        for name in ["101_1b1_Al_sc_Meditron.wav", "7_3x_Pr_mc_LittC2SE.wav"] {
            let meta = parse_recording_filename(name).unwrap();
            assert_eq!(meta.filename(), name);
            let again = parse_recording_filename(&meta.filename()).unwrap();
            assert_eq!(again, meta);
        }
    }

    #[test]
    fn loads_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        fs::write(&p, "0.364\t3.25\t0\t1\n4.0 7.5 1 0\n").unwrap();
        let cycles = load_cycle_annotations(&p).unwrap();
        assert_eq!(cycles.len(), 2);
        assert_eq!(cycles[0], CycleAnnotation { start_s: 0.364, end_s: 3.25, crackles: false, wheezes: true });
        assert_eq!(cycles[1].crackles, true);
    }

    #[test]
    fn rejects_inverted_cycle() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        fs::write(&p, "5.0 4.0 0 0\n").unwrap();
        assert!(matches!(load_cycle_annotations(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_annotation_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        fs::write(&p, "").unwrap();
        assert!(load_cycle_annotations(&p).unwrap().is_empty());
    }

    #[test]
    fn diagnosis_table_rules() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("diag.csv");
        fs::write(&p, "patient_id,disease\n101,URTI\n8,COPD\n8,COPD\n").unwrap();
        let table = load_diagnosis_table(&p).unwrap();
        assert_eq!(table.get(101), Some(Disease::Urti));
        assert_eq!(table.get(8), Some(Disease::Copd));
        assert_eq!(table.len(), 2);

        fs::write(&p, "7,COPD\n7,Healthy\n").unwrap();
        assert!(matches!(load_diagnosis_table(&p), Err(Error::ConflictingDiagnosis { patient: 7, .. })));

        fs::write(&p, "7,Influenza\n").unwrap();
        assert!(matches!(load_diagnosis_table(&p), Err(Error::Parse { .. })));
    }

    fn write_wav_stub(path: &Path) {
        let samples: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin() * 0.5).collect();
        crate::wav::write(path, &samples, 4000).unwrap();
    }

    #[test]
    fn scan_orders_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        // created intentionally out of order
        for name in ["20_1_Al_sc_M.wav", "10_1_Al_sc_M.wav"] {
            write_wav_stub(&root.join(name));
            let mut f = fs::File::create(root.join(name).with_extension("txt")).unwrap();
            writeln!(f, "0.0 3.5 0 0").unwrap();
        }
        let mut table = DiagnosisTable::default();
        table.insert(10, Disease::Copd).unwrap();
        table.insert(20, Disease::Healthy).unwrap();

        let scan = scan_corpus(root, &table).unwrap();
        assert_eq!(scan.recordings.len(), 2);
        assert_eq!(scan.recordings[0].0.patient_id, 10);
        assert_eq!(scan.recordings[1].0.patient_id, 20);
        assert!(scan.skipped_no_diagnosis.is_empty());

        // every returned patient is present in the table
        for (meta, _) in &scan.recordings {
            assert!(table.get(meta.patient_id).is_some());
        }

        // unknown patient is skipped with a report
        write_wav_stub(&root.join("30_1_Al_sc_M.wav"));
        fs::write(root.join("30_1_Al_sc_M.txt"), "0.0 3.5 0 0\n").unwrap();
        let scan = scan_corpus(root, &table).unwrap();
        assert_eq!(scan.recordings.len(), 2);
        assert_eq!(scan.skipped_no_diagnosis.len(), 1);
    }

    #[test]
    fn scan_requires_annotation() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write_wav_stub(&root.join("10_1_Al_sc_M.wav"));
        let mut table = DiagnosisTable::default();
        table.insert(10, Disease::Copd).unwrap();
        assert!(matches!(scan_corpus(root, &table), Err(Error::MissingAnnotation(_))));
    }
}
