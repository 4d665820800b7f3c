//! End-to-end orchestration shared by the CLI subcommands: preprocess,
//! per-segment feature extraction, IMF export, splitting, training and
//! evaluation, plus the thread fan-out helper.
//!
//! Every stage writes its artifacts under the run's output directory and is
//! rerun-safe: identical config and seed produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, ScalogramMode};
use crate::dataset::{split_by_patient, ImageRef, SplitManifest, SplitOutcome};
use crate::emd::{decompose, select_max_correlated_imf};
use crate::error::{Error, Result};
use crate::ingest::{self, Disease};
use crate::metrics::{format_report, ConfusionMatrix, MetricsReport};
use crate::nn::{
    build_proposed_for_input, evaluate, load_checkpoint, save_checkpoint, train, AdamConfig, Dataset,
    EpochLog, Model, TrainSettings,
};
use crate::preprocess::{
    apply_filter, design_bandpass, extract_segments, normalize, resample, CycleSegment, Signal,
    SEGMENT_FS, SEGMENT_SAMPLES,
};
use crate::render::{
    apply_colormap, augment_plan, resize_bilinear, to_db, write_png, Colormap, ColormapSet,
    ScalogramImage, IMAGE_SIZE,
};
use crate::scalogram::{build_filter_bank, cwt, power};
use crate::synth::{self, SynthSummary};
use crate::wav;

/// Run `f` over `items` on up to `threads` workers; output order matches
/// input order regardless of scheduling.
pub fn parallel_map<I, O, F>(items: Vec<I>, threads: usize, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.into_iter().map(f).collect();
    }
    let jobs: Vec<Mutex<Option<I>>> = items.into_iter().map(|i| Mutex::new(Some(i))).collect();
    let results: Vec<Mutex<Option<O>>> = (0..jobs.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= jobs.len() {
                    break;
                }
                let item = jobs[idx].lock().unwrap().take().expect("job taken once");
                *results[idx].lock().unwrap() = Some(f(item));
            });
        }
    });
    results.into_iter().map(|m| m.into_inner().unwrap().expect("job completed")).collect()
}

// ---------------------------------------------------------------------------
// segment store
// ---------------------------------------------------------------------------

/// One preprocessed segment on disk (raw little-endian f32 samples).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub file: String,
    pub patient: u32,
    pub label: Disease,
    pub recording_id: String,
    pub cycle_index: usize,
}

/// Sidecar manifest of the segment store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentManifest {
    pub fs: f64,
    pub n_samples: usize,
    pub segments: Vec<SegmentEntry>,
    pub dropped_short: usize,
    pub dropped_excluded: usize,
    /// Recordings skipped because their patient had no diagnosis row.
    pub skipped_recordings: usize,
}

impl SegmentManifest {
    /// `(recordings, segments, patients)` per class, in Table-style order.
    pub fn per_class_counts(&self) -> BTreeMap<String, (usize, usize, usize)> {
        let mut out: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
        for disease in Disease::RETAINED {
            out.insert(disease.name().to_string(), (0, 0, 0));
        }
        let mut recs: BTreeMap<(String, String), ()> = BTreeMap::new();
        let mut patients: BTreeMap<(String, u32), ()> = BTreeMap::new();
        for seg in &self.segments {
            let entry = out.entry(seg.label.name().to_string()).or_default();
            entry.1 += 1;
            recs.insert((seg.label.name().to_string(), seg.recording_id.clone()), ());
            patients.insert((seg.label.name().to_string(), seg.patient), ());
        }
        for ((class, _), _) in recs {
            out.get_mut(&class).expect("class present").0 += 1;
        }
        for ((class, _), _) in patients {
            out.get_mut(&class).expect("class present").2 += 1;
        }
        out
    }
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json("serializing manifest", e))?;
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_json<V: for<'de> Deserialize<'de>>(path: &Path) -> Result<V> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(format!("parsing {}", path.display()), e))
}

fn write_f32_raw(path: &Path, samples: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(samples.len() * 4);
    for &s in samples {
        bytes.extend_from_slice(&(s as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_f32_raw(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::BadConfig(format!("{} is not a f32 block", path.display())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Filter, resample, normalize and segment the whole corpus.
///
/// Writes `segments/<recording>_<cycle>.f32` blocks plus `segments.json`.
pub fn run_preprocess(config: &RunConfig) -> Result<SegmentManifest> {
    config.validate()?;
    let diagnosis = ingest::load_diagnosis_table(&config.corpus_dir.join("diagnosis.csv"))?;
    let scan = ingest::scan_corpus(&config.corpus_dir, &diagnosis)?;
    let seg_dir = config.out_dir.join("segments");
    fs::create_dir_all(&seg_dir).map_err(|e| Error::io(format!("creating {}", seg_dir.display()), e))?;

    let filter = &config.filter;
    let jobs: Vec<_> = scan.recordings.into_iter().collect();
    let results = parallel_map(jobs, config.threads, |(meta, cycles)| -> Result<_> {
        let disease = diagnosis.get(meta.patient_id).expect("scan guarantees a diagnosis");
        let raw: Signal<f64> = wav::read(&meta.path)?;
        let coeffs = design_bandpass(filter.low_hz, filter.high_hz, filter.order, raw.fs)?;
        let filtered = apply_filter(&raw, &coeffs)?;
        let resampled = resample(&filtered, SEGMENT_FS);
        let normalized = normalize(&resampled);
        let (segments, drops) = extract_segments(&normalized, &cycles, &meta, disease);
        Ok((segments, drops))
    });

    let mut manifest = SegmentManifest {
        fs: SEGMENT_FS,
        n_samples: SEGMENT_SAMPLES,
        segments: Vec::new(),
        dropped_short: 0,
        dropped_excluded: 0,
        skipped_recordings: scan.skipped_no_diagnosis.len(),
    };
    let mut all_segments: Vec<CycleSegment<f64>> = Vec::new();
    for result in results {
        let (segments, drops) = result?;
        manifest.dropped_short += drops.too_short;
        manifest.dropped_excluded += drops.excluded_class;
        all_segments.extend(segments);
    }
    // deterministic order by (recording, cycle) no matter the thread schedule
    all_segments.sort_by(|a, b| (&a.recording_id, a.cycle_index).cmp(&(&b.recording_id, b.cycle_index)));

    for segment in &all_segments {
        let file = format!("{}_{}.f32", segment.recording_id, segment.cycle_index);
        write_f32_raw(&seg_dir.join(&file), &segment.samples)?;
        manifest.segments.push(SegmentEntry {
            file,
            patient: segment.patient_id,
            label: segment.disease,
            recording_id: segment.recording_id.clone(),
            cycle_index: segment.cycle_index,
        });
    }
    write_json(&config.out_dir.join("segments.json"), &manifest)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

/// One rendered image plus its provenance and (for hybrid mode) the selected
/// IMF sidecar data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub path: String,
    pub patient: u32,
    pub label: Disease,
    pub recording_id: String,
    pub cycle_index: usize,
    pub variant: usize,
    pub colormap: Colormap,
    pub selected_imf: Option<usize>,
    pub imf_correlation: Option<f64>,
    pub n_imfs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagesManifest {
    pub mode: ScalogramMode,
    pub seed: u64,
    pub images: Vec<ImageEntry>,
}

/// Compute scalogram images for every stored segment and write PNGs plus
/// `images.json`.
pub fn run_features(config: &RunConfig) -> Result<ImagesManifest> {
    config.validate()?;
    let manifest: SegmentManifest = read_json(&config.out_dir.join("segments.json"))?;
    let img_dir = config.out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(format!("creating {}", img_dir.display()), e))?;

    let bank = build_filter_bank::<f64>(
        manifest.n_samples,
        manifest.fs,
        config.cwt.gamma,
        config.cwt.time_bandwidth,
        config.cwt.voices_per_octave,
    )?;
    let maps = ColormapSet::from_env()?;
    let seg_dir = config.out_dir.join("segments");
    let mode = config.mode;
    let max_imfs = config.emd.max_imfs;
    let floor_db = config.render.floor_db;

    let results = parallel_map(manifest.segments.clone(), config.threads, |entry| -> Result<_> {
        let samples = read_f32_raw(&seg_dir.join(&entry.file))?;
        let (matrix_source, imf_info) = match mode {
            ScalogramMode::Conventional => (samples, None),
            ScalogramMode::Hybrid => {
                let set = decompose(&samples, max_imfs)?;
                if set.is_empty() {
                    // degenerate segment with no oscillatory mode: fall back
                    // to the raw samples
                    (samples, None)
                } else {
                    let (idx, coeff) = select_max_correlated_imf(&samples, &set)?;
                    (set.imfs[idx].clone(), Some((idx, coeff, set.len())))
                }
            }
        };
        let z = cwt(&matrix_source, &bank)?;
        let sg = power(&z);
        let norm = to_db(&sg.power, floor_db);
        let norm224 = resize_bilinear(&norm, IMAGE_SIZE, IMAGE_SIZE)?;
        Ok((entry, norm224, imf_info))
    });

    let mut images = Vec::new();
    for result in results {
        let (entry, norm224, imf_info) = result?;
        let minority = entry.label != Disease::Copd;
        let plan = augment_plan(minority, config.seed, &entry.recording_id, entry.cycle_index);
        for (variant, map) in plan.into_iter().enumerate() {
            let image = ScalogramImage {
                pixels: apply_colormap(&norm224, maps.table(map)),
                colormap: map,
                patient_id: entry.patient,
                label: entry.label,
                recording_id: entry.recording_id.clone(),
                cycle_index: entry.cycle_index,
                variant,
            };
            let filename = image.filename();
            write_png(&img_dir.join(&filename), &image)?;
            images.push(ImageEntry {
                path: format!("images/{filename}"),
                patient: entry.patient,
                label: entry.label,
                recording_id: entry.recording_id.clone(),
                cycle_index: entry.cycle_index,
                variant,
                colormap: map,
                selected_imf: imf_info.map(|(i, _, _)| i),
                imf_correlation: imf_info.map(|(_, c, _)| c),
                n_imfs: imf_info.map(|(_, _, n)| n),
            });
        }
    }
    let out = ImagesManifest { mode: config.mode, seed: config.seed, images };
    write_json(&config.out_dir.join("images.json"), &out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// IMF export
// ---------------------------------------------------------------------------

/// Sidecar of one exported IMF matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImfSidecar {
    pub n_imfs: usize,
    pub n_samples: usize,
    pub selected_index: usize,
    pub coefficient: f64,
}

/// Decompose every stored segment, writing each IMF matrix as rows of
/// little-endian f32 plus a JSON sidecar.
pub fn run_emd(config: &RunConfig) -> Result<usize> {
    config.validate()?;
    let manifest: SegmentManifest = read_json(&config.out_dir.join("segments.json"))?;
    let imf_dir = config.out_dir.join("imfs");
    fs::create_dir_all(&imf_dir).map_err(|e| Error::io(format!("creating {}", imf_dir.display()), e))?;
    let seg_dir = config.out_dir.join("segments");
    let max_imfs = config.emd.max_imfs;

    let results = parallel_map(manifest.segments.clone(), config.threads, |entry| -> Result<_> {
        let samples = read_f32_raw(&seg_dir.join(&entry.file))?;
        let set = decompose(&samples, max_imfs)?;
        let (selected, coefficient) = if set.is_empty() {
            (0, 0.0)
        } else {
            select_max_correlated_imf(&samples, &set)?
        };
        Ok((entry, set, selected, coefficient))
    });

    let mut written = 0usize;
    for result in results {
        let (entry, set, selected, coefficient) = result?;
        let stem = format!("{}_{}", entry.recording_id, entry.cycle_index);
        let mut flat = Vec::with_capacity(set.len() * set.source_len);
        for imf in &set.imfs {
            flat.extend_from_slice(imf);
        }
        write_f32_raw(&imf_dir.join(format!("{stem}.imf.f32")), &flat)?;
        write_json(
            &imf_dir.join(format!("{stem}.json")),
            &ImfSidecar {
                n_imfs: set.len(),
                n_samples: set.source_len,
                selected_index: selected,
                coefficient,
            },
        )?;
        written += 1;
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// split / train / eval
// ---------------------------------------------------------------------------

/// Patient-disjoint split of the rendered images; writes `split.json`.
pub fn run_split(config: &RunConfig) -> Result<SplitOutcome> {
    config.validate()?;
    let images: ImagesManifest = read_json(&config.out_dir.join("images.json"))?;
    let refs: Vec<ImageRef> = images
        .images
        .iter()
        .map(|img| {
            let class = crate::dataset::map_label(img.label, config.scheme)?;
            Ok(ImageRef {
                path: img.path.clone(),
                patient: img.patient,
                label: config.scheme.class_names()[class].to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let outcome = split_by_patient(&refs, config.scheme, config.split_ratio, config.seed)?;
    write_json(&config.out_dir.join("split.json"), &outcome.manifest)?;
    Ok(outcome)
}

/// Decode one manifest side into a training-ready dataset at `input_size`.
pub fn load_split_side(
    base: &Path,
    manifest: &SplitManifest,
    side: &[ImageRef],
    input_size: usize,
) -> Result<Dataset<f64>> {
    let labels = manifest.class_indices(side)?;
    let mut images = Vec::with_capacity(side.len());
    for img in side {
        let (bytes, h, w) = crate::render::read_png(&base.join(&img.path))?;
        if h != IMAGE_SIZE || w != IMAGE_SIZE {
            return Err(Error::ShapeMismatch(format!("{}: {h}x{w}, expected 224x224", img.path)));
        }
        // HWC bytes -> CHW floats in [0, 1]
        let mut chw = vec![0.0f64; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    chw[c * h * w + y * w + x] = bytes[(y * w + x) * 3 + c] as f64 / 255.0;
                }
            }
        }
        if input_size != IMAGE_SIZE {
            let mut reduced = vec![0.0f64; 3 * input_size * input_size];
            for c in 0..3 {
                let plane: Vec<Vec<f64>> =
                    (0..h).map(|y| chw[c * h * w + y * w..c * h * w + (y + 1) * w].to_vec()).collect();
                let small = resize_bilinear(&plane, input_size, input_size)?;
                for (y, row) in small.iter().enumerate() {
                    for (x, &v) in row.iter().enumerate() {
                        reduced[c * input_size * input_size + y * input_size + x] = v;
                    }
                }
            }
            images.push(reduced);
        } else {
            images.push(chw);
        }
    }
    Ok(Dataset { images, labels, shape: (3, input_size, input_size) })
}

/// Train the proposed model on the stored split; writes `model.ckpt` and
/// `training_log.csv`.
pub fn run_train(config: &RunConfig) -> Result<Vec<EpochLog>> {
    config.validate()?;
    let manifest: SplitManifest = read_json(&config.out_dir.join("split.json"))?;
    let input_size = config.model.input_size;
    let train_set = load_split_side(&config.out_dir, &manifest, &manifest.train, input_size)?;
    let val_set = load_split_side(&config.out_dir, &manifest, &manifest.val, input_size)?;

    let spec = build_proposed_for_input(
        config.scheme.n_classes(),
        input_size,
        &config.model.fc_widths,
        config.model.dropout,
    )?;
    let mut model: Model<f64> = Model::new(spec, config.seed)?;
    let settings = TrainSettings {
        optimizer: AdamConfig { lr: config.train.lr, ..AdamConfig::default() },
        batch: config.train.batch,
        epochs: config.train.epochs,
        seed: config.seed,
        stop_at_val_accuracy: config.train.stop_at_val_accuracy,
    };
    let logs = train(&mut model, &train_set, &val_set, &settings)?;

    save_checkpoint(&model, &config.out_dir.join("model.ckpt"))?;
    let mut csv = String::from("epoch,train_loss,val_loss,val_accuracy\n");
    for log in &logs {
        csv.push_str(&format!("{},{},{},{}\n", log.epoch, log.train_loss, log.val_loss, log.val_accuracy));
    }
    fs::write(config.out_dir.join("training_log.csv"), csv)
        .map_err(|e| Error::io("writing training_log.csv", e))?;
    Ok(logs)
}

/// Evaluate the stored checkpoint on the validation side; writes
/// `report.json` and `report.txt`.
pub fn run_eval(config: &RunConfig) -> Result<(ConfusionMatrix, MetricsReport)> {
    config.validate()?;
    let manifest: SplitManifest = read_json(&config.out_dir.join("split.json"))?;
    let mut model: Model<f64> = load_checkpoint(&config.out_dir.join("model.ckpt"))?;
    let input_hw = model.spec.input.0;
    let val_set = load_split_side(&config.out_dir, &manifest, &manifest.val, input_hw)?;
    let names: Vec<String> = manifest.scheme.class_names().iter().map(|s| s.to_string()).collect();
    let (cm, rep) = evaluate(&mut model, &val_set, &names, manifest.scheme.healthy_index())?;

    #[derive(Serialize)]
    struct FullReport<'a> {
        report: &'a MetricsReport,
        confusion: &'a ConfusionMatrix,
    }
    write_json(&config.out_dir.join("report.json"), &FullReport { report: &rep, confusion: &cm })?;
    fs::write(config.out_dir.join("report.txt"), format_report(&cm, &rep))
        .map_err(|e| Error::io("writing report.txt", e))?;
    Ok((cm, rep))
}

/// Generate the synthetic fixture corpus into `corpus_dir`.
pub fn run_synth(config: &RunConfig) -> Result<SynthSummary> {
    config.validate()?;
    let mut synth_config = config.synth.clone();
    synth_config.seed = config.seed;
    synth::generate(&config.corpus_dir, &synth_config)
}

/// Resolve an artifact path under the output directory.
pub fn artifact(config: &RunConfig, name: &str) -> PathBuf {
    config.out_dir.join(name)
}
