//! Label mapping, patient-independent splitting and balanced mini-batch
//! iteration.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Disease;

/// Classification scheme: six pathological classes or the ternary chronic
/// grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    Pathological6,
    Chronic3,
}

impl LabelScheme {
    pub fn n_classes(self) -> usize {
        match self {
            LabelScheme::Pathological6 => 6,
            LabelScheme::Chronic3 => 3,
        }
    }

    /// Class names in fixed index order.
    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            LabelScheme::Pathological6 => {
                &["Bronchiectasis", "Bronchiolitis", "COPD", "Healthy", "Pneumonia", "URTI"]
            }
            LabelScheme::Chronic3 => &["Healthy", "Chronic", "NonChronic"],
        }
    }

    /// Index of the Healthy class (specificity reference).
    pub fn healthy_index(self) -> usize {
        match self {
            LabelScheme::Pathological6 => 3,
            LabelScheme::Chronic3 => 0,
        }
    }
}

impl std::fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelScheme::Pathological6 => f.write_str("pathological6"),
            LabelScheme::Chronic3 => f.write_str("chronic3"),
        }
    }
}

impl std::str::FromStr for LabelScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pathological6" | "pathological" | "6" => Ok(LabelScheme::Pathological6),
            "chronic3" | "chronic" | "3" => Ok(LabelScheme::Chronic3),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

/// Map a retained disease onto its class index under the scheme.
///
/// COPD and Bronchiectasis form the chronic class; URTI, Pneumonia and
/// Bronchiolitis the non-chronic class; Healthy stays its own class.
pub fn map_label(disease: Disease, scheme: LabelScheme) -> Result<usize> {
    if disease.is_excluded() {
        return Err(Error::ExcludedClass(disease.name().to_string()));
    }
    let idx = match scheme {
        LabelScheme::Pathological6 => match disease {
            Disease::Bronchiectasis => 0,
            Disease::Bronchiolitis => 1,
            Disease::Copd => 2,
            Disease::Healthy => 3,
            Disease::Pneumonia => 4,
            Disease::Urti => 5,
            Disease::Asthma | Disease::Lrti => unreachable!(),
        },
        LabelScheme::Chronic3 => match disease {
            Disease::Healthy => 0,
            Disease::Copd | Disease::Bronchiectasis => 1,
            Disease::Urti | Disease::Pneumonia | Disease::Bronchiolitis => 2,
            Disease::Asthma | Disease::Lrti => unreachable!(),
        },
    };
    Ok(idx)
}

/// One image in a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub path: String,
    pub patient: u32,
    /// Class name under the manifest's scheme.
    pub label: String,
}

/// Patient-disjoint train/validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratio: f64,
    pub scheme: LabelScheme,
    pub train: Vec<ImageRef>,
    pub val: Vec<ImageRef>,
}

impl SplitManifest {
    /// Class index of every image on one side, via the manifest scheme.
    pub fn class_indices(&self, side: &[ImageRef]) -> Result<Vec<usize>> {
        side.iter()
            .map(|img| {
                self.scheme
                    .class_names()
                    .iter()
                    .position(|n| *n == img.label)
                    .ok_or_else(|| Error::BadConfig(format!("label `{}` not in scheme {}", img.label, self.scheme)))
            })
            .collect()
    }
}

/// Split outcome with per-class shortfall warnings.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub manifest: SplitManifest,
    pub warnings: Vec<String>,
}

/// Greedy per-class assignment of whole patients.
///
/// Within each class, patients are taken largest image count first (seed
/// shuffles equal-size ties only) and assigned to whichever side sits
/// furthest below its target share of the class's images. Train and val
/// patient sets are disjoint by construction.
pub fn split_by_patient(
    images: &[ImageRef],
    scheme: LabelScheme,
    ratio: f64,
    seed: u64,
) -> Result<SplitOutcome> {
    if images.is_empty() {
        return Err(Error::EmptyManifest);
    }
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(Error::BadConfig(format!("split ratio {ratio} outside (0, 1)")));
    }

    // class -> patient -> image count, deterministic order
    let mut per_class: BTreeMap<&str, BTreeMap<u32, usize>> = BTreeMap::new();
    for img in images {
        *per_class.entry(img.label.as_str()).or_default().entry(img.patient).or_insert(0) += 1;
    }

    let mut warnings = Vec::new();
    let mut train_patients: Vec<u32> = Vec::new();
    let mut val_patients: Vec<u32> = Vec::new();

    for (class_idx, (class, patients)) in per_class.iter().enumerate() {
        if patients.len() < 2 {
            warnings.push(format!("class {class}: only {} patient(s); validation side will be empty", patients.len()));
        }
        let total: usize = patients.values().sum();
        let train_target = ratio * total as f64;
        let val_target = (1.0 - ratio) * total as f64;

        // largest first; ties ordered by a seeded shuffle key
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ (class_idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut order: Vec<(u32, usize, u64)> =
            patients.iter().map(|(&p, &c)| (p, c, rng.gen::<u64>())).collect();
        order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));

        let mut train_count = 0usize;
        let mut val_count = 0usize;
        let n_patients = order.len();
        for (i, (patient, count, _)) in order.into_iter().enumerate() {
            // absolute image shortfall below each side's target; ties go to
            // train, so large patients land there first. The last patient
            // backstops an otherwise empty validation side.
            let train_short = train_target - train_count as f64;
            let val_short = val_target - val_count as f64;
            let force_val = val_count == 0 && n_patients >= 2 && i == n_patients - 1;
            if train_short >= val_short && !force_val {
                train_patients.push(patient);
                train_count += count;
            } else {
                val_patients.push(patient);
                val_count += count;
            }
        }
        if val_count == 0 && patients.len() >= 2 {
            warnings.push(format!("class {class}: validation side received no images"));
        }
    }

    let in_train: std::collections::BTreeSet<u32> = train_patients.iter().copied().collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for img in images {
        if in_train.contains(&img.patient) {
            train.push(img.clone());
        } else {
            val.push(img.clone());
        }
    }

    Ok(SplitOutcome { manifest: SplitManifest { seed, ratio, scheme, train, val }, warnings })
}

/// Balanced epoch schedule: every batch holds `batch / n_classes` samples of
/// each class.
///
/// Minority classes are oversampled with replacement, majority classes
/// subsampled per epoch. Epoch length is
/// `n_classes * ceil(median class size / (batch / n_classes))` batches and
/// the schedule is deterministic per `(seed, epoch)`.
pub fn balanced_batches(
    labels: &[usize],
    n_classes: usize,
    batch: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch == 0 || n_classes == 0 || batch % n_classes != 0 {
        return Err(Error::IndivisibleBatch { batch, classes: n_classes });
    }
    let per_class = batch / n_classes;

    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        if label >= n_classes {
            return Err(Error::LabelOutOfRange { got: label, classes: n_classes });
        }
        pools[label].push(i);
    }
    if let Some(empty) = pools.iter().position(|p| p.is_empty()) {
        return Err(Error::BadConfig(format!("class {empty} has no samples to draw from")));
    }

    let mut sizes: Vec<usize> = pools.iter().map(|p| p.len()).collect();
    sizes.sort_unstable();
    let median = if sizes.len() % 2 == 1 {
        sizes[sizes.len() / 2] as f64
    } else {
        (sizes[sizes.len() / 2 - 1] + sizes[sizes.len() / 2]) as f64 / 2.0
    };
    let epoch_len = n_classes * (median / per_class as f64).ceil() as usize;
    let needed = per_class * epoch_len;

    let mut draws: Vec<Vec<usize>> = Vec::with_capacity(n_classes);
    for (class, pool) in pools.iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(
            seed ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (class as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9),
        );
        let mut class_draws = Vec::with_capacity(needed);
        if pool.len() >= needed {
            let mut shuffled = pool.clone();
            shuffled.shuffle(&mut rng);
            class_draws.extend_from_slice(&shuffled[..needed]);
        } else {
            for _ in 0..needed {
                class_draws.push(pool[rng.gen_range(0..pool.len())]);
            }
        }
        draws.push(class_draws);
    }

    let mut batches = Vec::with_capacity(epoch_len);
    for t in 0..epoch_len {
        let mut b = Vec::with_capacity(batch);
        for class_draws in &draws {
            b.extend_from_slice(&class_draws[t * per_class..(t + 1) * per_class]);
        }
        batches.push(b);
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chronic_grouping() {
        assert_eq!(map_label(Disease::Copd, LabelScheme::Chronic3).unwrap(), 1);
        assert_eq!(map_label(Disease::Bronchiectasis, LabelScheme::Chronic3).unwrap(), 1);
        assert_eq!(map_label(Disease::Healthy, LabelScheme::Chronic3).unwrap(), 0);
        assert_eq!(map_label(Disease::Urti, LabelScheme::Chronic3).unwrap(), 2);
        assert_eq!(map_label(Disease::Pneumonia, LabelScheme::Chronic3).unwrap(), 2);
        assert_eq!(map_label(Disease::Bronchiolitis, LabelScheme::Chronic3).unwrap(), 2);
        assert!(matches!(map_label(Disease::Asthma, LabelScheme::Chronic3), Err(Error::ExcludedClass(_))));
        assert!(matches!(map_label(Disease::Lrti, LabelScheme::Pathological6), Err(Error::ExcludedClass(_))));
    }

    #[test]
    fn pathological_order_is_fixed() {
        for (i, disease) in Disease::RETAINED.iter().enumerate() {
            assert_eq!(map_label(*disease, LabelScheme::Pathological6).unwrap(), i);
            assert_eq!(LabelScheme::Pathological6.class_names()[i], disease.name());
        }
    }

    fn manifest(patients_per_class: usize, images_per_patient: usize) -> Vec<ImageRef> {
        let mut images = Vec::new();
        for (c, class) in LabelScheme::Pathological6.class_names().iter().enumerate() {
            for p in 0..patients_per_class {
                let patient = (c * 100 + p + 1) as u32;
                for i in 0..images_per_patient {
                    images.push(ImageRef {
                        path: format!("{patient}_{i}.png"),
                        patient,
                        label: class.to_string(),
                    });
                }
            }
        }
        images
    }

    #[test]
    fn split_is_patient_disjoint_with_sane_fractions() {
        let images = manifest(10, 10);
        let out = split_by_patient(&images, LabelScheme::Pathological6, 0.8, 42).unwrap();
        let m = &out.manifest;
        let train_p: std::collections::BTreeSet<u32> = m.train.iter().map(|i| i.patient).collect();
        let val_p: std::collections::BTreeSet<u32> = m.val.iter().map(|i| i.patient).collect();
        assert!(train_p.is_disjoint(&val_p));
        for class in LabelScheme::Pathological6.class_names() {
            let total = images.iter().filter(|i| i.label == *class).count();
            let val = m.val.iter().filter(|i| i.label == *class).count();
            let frac = val as f64 / total as f64;
            assert!((frac - 0.2).abs() <= 0.05, "class {class}: val fraction {frac}");
        }
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn split_single_patient_class_lands_in_train() {
        let mut images = manifest(3, 5);
        images.retain(|i| i.label != "URTI" || i.patient == 501);
        let out = split_by_patient(&images, LabelScheme::Pathological6, 0.8, 1).unwrap();
        assert!(out.manifest.val.iter().all(|i| i.label != "URTI"));
        assert!(out.manifest.train.iter().any(|i| i.label == "URTI"));
        assert!(out.warnings.iter().any(|w| w.contains("URTI")));
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive_on_ties() {
        let images = manifest(8, 7); // all patients equal size: pure tie-break territory
        let a = split_by_patient(&images, LabelScheme::Pathological6, 0.8, 5).unwrap().manifest;
        let b = split_by_patient(&images, LabelScheme::Pathological6, 0.8, 5).unwrap().manifest;
        assert_eq!(a, b);
        let c = split_by_patient(&images, LabelScheme::Pathological6, 0.8, 6).unwrap().manifest;
        let val_a: Vec<u32> = a.val.iter().map(|i| i.patient).collect();
        let val_c: Vec<u32> = c.val.iter().map(|i| i.patient).collect();
        assert_ne!(val_a, val_c, "different seeds should break ties differently");
    }

    #[test]
    fn split_backstops_validation_with_two_patients() {
        // two equal-size patients per class: disjointness allows 1/1 at best
        let images = manifest(2, 6);
        let out = split_by_patient(&images, LabelScheme::Pathological6, 0.8, 0).unwrap();
        for class in LabelScheme::Pathological6.class_names() {
            assert!(
                out.manifest.val.iter().any(|i| i.label == *class),
                "class {class} missing from validation"
            );
            assert!(out.manifest.train.iter().any(|i| i.label == *class));
        }
    }

    #[test]
    fn split_rejects_empty_manifest() {
        assert!(matches!(
            split_by_patient(&[], LabelScheme::Chronic3, 0.8, 0),
            Err(Error::EmptyManifest)
        ));
    }

    #[test]
    fn batches_hold_each_class_equally() {
        // 6 classes with sizes 3..40
        let mut labels = Vec::new();
        for (c, size) in [(0usize, 3usize), (1, 12), (2, 40), (3, 9), (4, 15), (5, 11)] {
            labels.extend(std::iter::repeat(c).take(size));
        }
        let batches = balanced_batches(&labels, 6, 6, 9, 0).unwrap();
        let sizes = [3usize, 12, 40, 9, 15, 11];
        let mut sorted = sizes;
        sorted.sort_unstable();
        let median = (sorted[2] + sorted[3]) as f64 / 2.0;
        assert_eq!(batches.len(), 6 * median.ceil() as usize);
        let mut per_class_draws = vec![0usize; 6];
        for batch in &batches {
            assert_eq!(batch.len(), 6);
            let mut seen = vec![0usize; 6];
            for &idx in batch {
                seen[labels[idx]] += 1;
            }
            assert!(seen.iter().all(|&s| s == 1), "batch classes {seen:?}");
            for &idx in batch {
                per_class_draws[labels[idx]] += 1;
            }
        }
        let first = per_class_draws[0];
        assert!(per_class_draws.iter().all(|&d| d == first));
    }

    #[test]
    fn three_class_batches_hold_each_class_twice() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let batches = balanced_batches(&labels, 3, 6, 0, 2).unwrap();
        for batch in &batches {
            let mut seen = [0usize; 3];
            for &idx in batch {
                seen[labels[idx]] += 1;
            }
            assert_eq!(seen, [2, 2, 2]);
        }
    }

    #[test]
    fn indivisible_batch_rejected() {
        let labels: Vec<usize> = (0..12).map(|i| i % 6).collect();
        assert!(matches!(
            balanced_batches(&labels, 6, 7, 0, 0),
            Err(Error::IndivisibleBatch { batch: 7, classes: 6 })
        ));
    }

    #[test]
    fn batches_deterministic_per_seed_and_epoch() {
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let a = balanced_batches(&labels, 3, 6, 4, 1).unwrap();
        let b = balanced_batches(&labels, 3, 6, 4, 1).unwrap();
        assert_eq!(a, b);
        let c = balanced_batches(&labels, 3, 6, 4, 2).unwrap();
        assert_ne!(a, c, "epochs should reshuffle");
    }

    #[test]
    fn manifest_json_round_trip() {
        let out = split_by_patient(&manifest(3, 4), LabelScheme::Chronic3, 0.8, 3).unwrap();
        let json = serde_json::to_string(&out.manifest).unwrap();
        let back: SplitManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, out.manifest);
    }
}
