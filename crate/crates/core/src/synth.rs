//! Synthetic fixture corpus: a desk-scale stand-in for the licensed corpus
//! that mimics every on-disk format (WAV, cycle annotations, diagnosis CSV).
//!
//! Each retained class gets a distinct spectral recipe (tone + harmonic +
//! noise at a class-specific fundamental) so downstream features are
//! separable; patients detune and rescale slightly. Everything derives from
//! the seed.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::ingest::Disease;

/// Generator knobs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub patients_per_class: usize,
    pub cycles_per_recording: usize,
    pub cycle_seconds: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { patients_per_class: 4, cycles_per_recording: 5, cycle_seconds: 3.5, seed: 0 }
    }
}

/// What was written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSummary {
    pub recordings: usize,
    pub cycles: usize,
    pub patients: usize,
}

/// Class fundamentals in Hz, all inside the 50-2500 Hz passband.
const CLASS_FUNDAMENTALS: [f64; 6] = [180.0, 300.0, 480.0, 750.0, 1200.0, 1900.0];
/// Native rates cycle across classes to exercise resampling.
const CLASS_RATES: [u32; 6] = [22050, 44100, 8000, 22050, 44100, 11025];

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^ (z >> 31)
}

/// Generate the corpus under `root`: one recording per patient plus the
/// corpus-level `diagnosis.csv`.
pub fn generate(root: &Path, config: &SynthConfig) -> Result<SynthSummary> {
    if config.patients_per_class == 0 || config.cycles_per_recording == 0 {
        return Err(Error::BadConfig("synth needs at least one patient and one cycle".to_string()));
    }
    if config.cycle_seconds < crate::preprocess::MIN_CYCLE_SECONDS {
        return Err(Error::BadConfig(format!(
            "cycle_seconds {} below the {}s segmentation floor",
            config.cycle_seconds,
            crate::preprocess::MIN_CYCLE_SECONDS
        )));
    }
    fs::create_dir_all(root).map_err(|e| Error::io(format!("creating {}", root.display()), e))?;

    let gap = 0.25f64;
    let mut diagnosis = String::new();
    let mut recordings = 0usize;
    let mut cycles = 0usize;

    for (c, disease) in Disease::RETAINED.iter().enumerate() {
        let fs = CLASS_RATES[c];
        for p in 0..config.patients_per_class {
            let patient_id = 100 * (c as u32 + 1) + p as u32;
            diagnosis.push_str(&format!("{patient_id},{}\n", disease.name()));

            let mut rng = ChaCha12Rng::seed_from_u64(mix(config.seed, patient_id as u64));
            let detune = 1.0 + rng.gen_range(-0.02..0.02);
            let amp = rng.gen_range(0.55..0.85);
            let fundamental = CLASS_FUNDAMENTALS[c] * detune;

            let total_s = 0.3 + config.cycles_per_recording as f64 * (config.cycle_seconds + gap);
            let n = (total_s * fs as f64) as usize;
            let mut samples = vec![0.0f64; n];

            let mut annotations = String::new();
            for k in 0..config.cycles_per_recording {
                let start = 0.2 + k as f64 * (config.cycle_seconds + gap);
                let end = start + config.cycle_seconds;
                annotations.push_str(&format!("{start:.3}\t{end:.3}\t{}\t{}\n", k % 2, (k + 1) % 2));

                let i0 = (start * fs as f64) as usize;
                let i1 = ((end * fs as f64) as usize).min(n);
                let fade = (0.05 * fs as f64) as usize;
                for (j, sample) in samples[i0..i1].iter_mut().enumerate() {
                    let t = j as f64 / fs as f64;
                    // flat amplitude with short raised-cosine edges keeps the
                    // cycle's spectrum concentrated at the class tones
                    let edge = (i1 - i0 - 1).saturating_sub(j).min(j);
                    let env = if edge < fade {
                        0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / fade as f64).cos()
                    } else {
                        1.0
                    };
                    let tone = (2.0 * std::f64::consts::PI * fundamental * t).sin()
                        + 0.35 * (2.0 * std::f64::consts::PI * 2.0 * fundamental * t).sin();
                    *sample = amp * env * tone;
                }
                cycles += 1;
            }
            for sample in &mut samples {
                *sample += rng.gen_range(-0.015..0.015);
            }

            let stem = format!("{patient_id}_1a_Al_sc_Synth");
            crate::wav::write(&root.join(format!("{stem}.wav")), &samples, fs)?;
            fs::write(root.join(format!("{stem}.txt")), annotations)
                .map_err(|e| Error::io("writing annotations", e))?;
            recordings += 1;
        }
    }

    fs::write(root.join("diagnosis.csv"), diagnosis).map_err(|e| Error::io("writing diagnosis.csv", e))?;
    Ok(SynthSummary {
        recordings,
        cycles,
        patients: 6 * config.patients_per_class,
    })
}
