//! Synthetic cohorts with person-specific facial expressiveness.
//!
//! Every person gets an expressiveness factor `e`. A sequence has a latent
//! pain peak `L` in (0, 1] and a smooth onset/offset bump `pain(t)`. Facial
//! action units follow `e * pain(t)`, landmarks are a fixed linear map of the
//! AU intensities plus noise, and the labels are
//!
//! * `VAS = round(10 L)` (what the person feels),
//! * `OPI = round(clamp(5 e L, 0, 5))` (what an observer sees),
//!
//! so the OPI/VAS disagreement of a person tracks `e`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Cohort, PersonRecord, SequenceRecord, MAX_OPI, MAX_VAS};
use crate::error::{Error, Result};
use crate::pspi::{compute_pspi, AuVector};

pub const NUM_LANDMARKS: usize = 66;

/// Expressiveness at which the strongest pain saturates the AU scale.
const FULL_SCALE_EXPRESSIVENESS: f64 = 2.0;
/// Relative response of AU4, AU6, AU7, AU9, AU10 to the pain drive.
const AU_GAINS: [f64; 5] = [0.8, 1.0, 0.9, 0.6, 0.7];
const AU43_THRESHOLD: f64 = 0.7;
/// Number of shape directions along which faces of different people vary.
const IDENTITY_MODES: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_persons: usize,
    pub sequences_per_person: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Std-dev of i.i.d. Gaussian landmark noise, in pixels.
    pub landmark_noise: f64,
    /// Per-coordinate std-dev of each person's fixed face-shape offset, in
    /// pixels. Offsets are drawn in a low-dimensional space of shape modes.
    pub identity_scale: f64,
    /// Std-dev of the noise added to AU intensities before rounding.
    pub au_noise: f64,
    /// Std-dev of self-report noise on VAS, in VAS units.
    pub vas_noise: f64,
    pub expressiveness_min: f64,
    pub expressiveness_max: f64,
    /// Lower bound of the latent pain peak.
    pub peak_min: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_persons: 25,
            sequences_per_person: 8,
            min_len: 60,
            max_len: 120,
            landmark_noise: 0.25,
            identity_scale: 1.0,
            au_noise: 0.3,
            vas_noise: 0.0,
            expressiveness_min: 0.5,
            expressiveness_max: 2.0,
            peak_min: 0.05,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_persons == 0 || self.sequences_per_person == 0 {
            return Err(Error::invalid("synthetic cohort needs at least one person and one sequence"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::invalid(format!(
                "sequence length range [{}, {}] invalid (need 1 <= min <= max)",
                self.min_len, self.max_len
            )));
        }
        let non_negative = [self.landmark_noise, self.identity_scale, self.au_noise, self.vas_noise];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("noise levels must be finite and >= 0"));
        }
        if !(self.expressiveness_min > 0.0 && self.expressiveness_min <= self.expressiveness_max)
            || !self.expressiveness_max.is_finite()
        {
            return Err(Error::invalid("expressiveness range must satisfy 0 < min <= max"));
        }
        if !(0.0..=1.0).contains(&self.peak_min) {
            return Err(Error::invalid("peak_min must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Hidden variables behind a generated cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    /// Expressiveness factor per person.
    pub expressiveness: Vec<f64>,
    /// Latent pain peak per person per sequence.
    pub peaks: Vec<Vec<f64>>,
}

pub fn generate_synthetic_cohort(cfg: &SyntheticConfig, seed: u64) -> Result<Cohort> {
    generate_synthetic_cohort_detailed(cfg, seed).map(|(c, _)| c)
}

/// Like [`generate_synthetic_cohort`], also returning the latent variables.
pub fn generate_synthetic_cohort_detailed(cfg: &SyntheticConfig, seed: u64) -> Result<(Cohort, SyntheticTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let face = FaceModel::new();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let (ln_lo, ln_hi) = (cfg.expressiveness_min.ln(), cfg.expressiveness_max.ln());

    let mut persons = Vec::with_capacity(cfg.n_persons);
    let mut truth = SyntheticTruth {
        expressiveness: Vec::with_capacity(cfg.n_persons),
        peaks: Vec::with_capacity(cfg.n_persons),
    };
    for pi in 0..cfg.n_persons {
        let person_id = format!("P{:03}", pi + 1);
        let e = if ln_hi > ln_lo {
            rng.gen_range(ln_lo..=ln_hi).exp()
        } else {
            cfg.expressiveness_min
        };
        let coeffs: Vec<f64> = (0..IDENTITY_MODES).map(|_| unit.sample(&mut rng)).collect();
        let identity: Vec<f64> = (0..2 * NUM_LANDMARKS)
            .map(|i| {
                let v: f64 = coeffs.iter().zip(&face.identity_modes).map(|(c, m)| c * m[i]).sum();
                cfg.identity_scale * v / (IDENTITY_MODES as f64).sqrt()
            })
            .collect();

        let mut sequences = Vec::with_capacity(cfg.sequences_per_person);
        let mut peaks = Vec::with_capacity(cfg.sequences_per_person);
        for si in 0..cfg.sequences_per_person {
            let peak = rng.gen_range(cfg.peak_min..=1.0);
            let len = rng.gen_range(cfg.min_len..=cfg.max_len);
            let onset = rng.gen_range(0.1..=0.3) * len as f64;
            let duration = (rng.gen_range(0.4..=0.7) * len as f64).max(1.0);
            let scale = rng.gen_range(0.8..=1.2);
            let shift = (rng.gen_range(-30.0..=30.0), rng.gen_range(-30.0..=30.0));

            let mut frames = Vec::with_capacity(len);
            let mut pspi = Vec::with_capacity(len);
            let mut aus = Vec::with_capacity(len);
            for t in 0..len {
                let phase = (t as f64 - onset) / duration;
                let pain = if (0.0..=1.0).contains(&phase) {
                    peak * (PI * phase).sin().powi(2)
                } else {
                    0.0
                };
                let drive = e * pain / FULL_SCALE_EXPRESSIVENESS;
                let mut activation = [0.0; 6];
                let mut graded = [0u8; 5];
                for ((a, g), gain) in activation.iter_mut().zip(graded.iter_mut()).zip(AU_GAINS) {
                    *a = 5.0 * gain * drive;
                    *g = (*a + cfg.au_noise * unit.sample(&mut rng)).round().clamp(0.0, 5.0) as u8;
                }
                activation[5] = if drive > AU43_THRESHOLD { 1.0 } else { 0.0 };
                let closed = drive + 0.1 * cfg.au_noise * unit.sample(&mut rng) > AU43_THRESHOLD;
                let au = AuVector {
                    au4: graded[0],
                    au6: graded[1],
                    au7: graded[2],
                    au9: graded[3],
                    au10: graded[4],
                    au43: u8::from(closed),
                };
                let mut frame = face.render(&activation);
                for (v, off) in frame.iter_mut().zip(&identity) {
                    *v += off + cfg.landmark_noise * unit.sample(&mut rng);
                }
                let (xs, ys) = frame.split_at_mut(NUM_LANDMARKS);
                xs.iter_mut().for_each(|x| *x = *x * scale + shift.0);
                ys.iter_mut().for_each(|y| *y = *y * scale + shift.1);
                pspi.push(compute_pspi(&au));
                aus.push(au);
                frames.push(frame);
            }

            let vas_raw = 10.0 * peak + cfg.vas_noise * unit.sample(&mut rng);
            let vas = vas_raw.round().clamp(0.0, f64::from(MAX_VAS)) as u8;
            let opi = (5.0 * e * peak).clamp(0.0, f64::from(MAX_OPI)).round() as u8;
            sequences.push(SequenceRecord {
                id: format!("{person_id}_S{:02}", si + 1),
                frames,
                pspi,
                au: Some(aus),
                vas,
                opi,
            });
            peaks.push(peak);
        }
        persons.push(PersonRecord { person_id, sequences });
        truth.expressiveness.push(e);
        truth.peaks.push(peaks);
    }
    Ok((Cohort::new(persons)?, truth))
}

/// Neutral 66-point face, one displacement field per action unit, and the
/// shape modes spanning person-to-person variation.
struct FaceModel {
    neutral: Vec<(f64, f64)>,
    /// Unit-variance random directions in `[x.., y..]` coordinates.
    identity_modes: Vec<Vec<f64>>,
    /// Per AU (4, 6, 7, 9, 10, 43): displacement per intensity unit.
    fields: [Vec<(f64, f64)>; 6],
}

mod region {
    use std::ops::Range;
    pub const JAW: Range<usize> = 0..17;
    pub const BROWS: Range<usize> = 17..27;
    pub const BRIDGE: Range<usize> = 27..31;
    pub const NOSTRILS: Range<usize> = 31..36;
    pub const EYES: Range<usize> = 36..48;
    pub const OUTER_LIP: Range<usize> = 48..60;
    pub const INNER_LIP: Range<usize> = 60..66;
}

impl FaceModel {
    fn new() -> Self {
        let mut neutral = vec![(0.0, 0.0); NUM_LANDMARKS];
        for (j, i) in region::JAW.enumerate() {
            let a = PI * j as f64 / 16.0;
            neutral[i] = (-50.0 * a.cos(), 5.0 + 55.0 * a.sin());
        }
        for (j, i) in region::BROWS.enumerate() {
            let side = if j < 5 { -1.0 } else { 1.0 };
            let k = (j % 5) as f64;
            neutral[i] = (side * (40.0 - 7.5 * k), -35.0 - 3.0 * (2.0 - (k - 2.0).abs()));
        }
        for (j, i) in region::BRIDGE.enumerate() {
            neutral[i] = (0.0, -25.0 + 8.0 * j as f64);
        }
        for (j, i) in region::NOSTRILS.enumerate() {
            neutral[i] = (-10.0 + 5.0 * j as f64, 8.0 + (2.0 - (j as f64 - 2.0).abs()));
        }
        for (j, i) in region::EYES.enumerate() {
            let cx = if j < 6 { -22.0 } else { 22.0 };
            let a = 2.0 * PI * (j % 6) as f64 / 6.0;
            neutral[i] = (cx + 9.0 * a.cos(), -18.0 + 4.0 * a.sin());
        }
        for (j, i) in region::OUTER_LIP.enumerate() {
            let a = 2.0 * PI * j as f64 / 12.0;
            neutral[i] = (20.0 * a.cos(), 30.0 + 8.0 * a.sin());
        }
        for (j, i) in region::INNER_LIP.enumerate() {
            let a = 2.0 * PI * j as f64 / 6.0;
            neutral[i] = (12.0 * a.cos(), 30.0 + 3.0 * a.sin());
        }

        let zero = || vec![(0.0, 0.0); NUM_LANDMARKS];
        let (mut au4, mut au6, mut au7, mut au9, mut au10, mut au43) = (zero(), zero(), zero(), zero(), zero(), zero());
        for i in region::BROWS {
            au4[i] = (-0.8 * neutral[i].0.signum(), 1.5);
            au9[i] = (0.0, 0.3);
        }
        for i in region::EYES {
            let lower = neutral[i].1 > -18.0;
            au6[i] = (0.0, if lower { -0.8 } else { 0.0 });
            au7[i] = (0.0, if lower { -0.6 } else { 0.6 });
            au43[i] = (0.0, if lower { 0.0 } else { 3.0 });
        }
        for i in region::BRIDGE {
            au9[i] = (0.0, 0.4);
        }
        for i in region::NOSTRILS {
            au9[i] = (0.0, -0.8);
        }
        for i in region::OUTER_LIP {
            if neutral[i].1 < 30.0 {
                au10[i] = (0.0, -1.0);
            }
            if neutral[i].0.abs() > 18.0 {
                au6[i] = (0.0, -0.4);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x1D_FACE);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let identity_modes = (0..IDENTITY_MODES)
            .map(|_| (0..2 * NUM_LANDMARKS).map(|_| unit.sample(&mut rng)).collect())
            .collect();
        FaceModel {
            neutral,
            identity_modes,
            fields: [au4, au6, au7, au9, au10, au43],
        }
    }

    /// Landmark frame `[x1..x66, y1..y66]` for continuous activations of
    /// AU4, AU6, AU7, AU9, AU10 and AU43.
    fn render(&self, levels: &[f64; 6]) -> Vec<f64> {
        let mut frame = vec![0.0; 2 * NUM_LANDMARKS];
        for (i, &(x, y)) in self.neutral.iter().enumerate() {
            let (mut dx, mut dy) = (0.0, 0.0);
            for (field, &level) in self.fields.iter().zip(levels) {
                dx += field[i].0 * level;
                dy += field[i].1 * level;
            }
            frame[i] = x + dx;
            frame[NUM_LANDMARKS + i] = y + dy;
        }
        frame
    }
}
