//! Spiral-array geometry and per-bar tonal tension.
//!
//! Pitch classes are placed on a helix along the line of fifths: fifth
//! index `k` sits at `(r sin(k pi/2), r cos(k pi/2), k h)`. A bar's cloud is
//! every pitched note whose onset falls in that bar. Three features are
//! measured per bar:
//!
//! - cloud diameter: largest distance between two distinct pitch positions;
//! - cloud momentum: distance between the centres of effect of consecutive bars;
//! - tensile strain: distance between the bar's centre of effect and the key's.
//!
//! Bars without pitched notes get 0 for all three, and momentum is 0 whenever
//! either neighbour is empty.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
use core::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::score::Score;
use crate::stats::quantile_sorted;
use crate::token::{Mode, Quartile, TensionFeature, Token};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensionError {
    #[error("score has no pitched notes")]
    NoNotes,
    #[error("need at least 4 bars to fit quartile thresholds, got {0}")]
    TooFewBars(usize),
    #[error("invalid spiral parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpiralParams {
    pub radius: f64,
    /// Vertical rise per step along the line of fifths.
    pub height: f64,
    /// Root, fifth, third weights of a chord's centre.
    pub chord_weights: [f64; 3],
    /// Tonic, dominant, subdominant chord weights of a key's centre.
    pub key_weights: [f64; 3],
}

impl Default for SpiralParams {
    fn default() -> Self {
        SpiralParams {
            radius: 1.0,
            height: libm::sqrt(2.0 / 15.0),
            chord_weights: [0.536, 0.274, 0.190],
            key_weights: [0.536, 0.274, 0.190],
        }
    }
}

impl SpiralParams {
    pub fn validate(&self) -> Result<(), TensionError> {
        if !(self.radius > 0.0) {
            return Err(TensionError::InvalidParams("radius must be positive"));
        }
        if !(self.height > 0.0) {
            return Err(TensionError::InvalidParams("height must be positive"));
        }
        for w in [self.chord_weights, self.key_weights] {
            if w.iter().any(|x| !(*x > 0.0)) {
                return Err(TensionError::InvalidParams("weights must be positive"));
            }
            if libm::fabs(w.iter().sum::<f64>() - 1.0) > 1e-9 {
                return Err(TensionError::InvalidParams("each weight triple must sum to 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PitchPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PitchPosition {
    pub fn distance(self, other: PitchPosition) -> f64 {
        let d = self - other;
        libm::sqrt(d.x * d.x + d.y * d.y + d.z * d.z)
    }
}

impl Add for PitchPosition {
    type Output = PitchPosition;
    fn add(self, o: PitchPosition) -> PitchPosition {
        PitchPosition { x: self.x + o.x, y: self.y + o.y, z: self.z + o.z }
    }
}

impl Sub for PitchPosition {
    type Output = PitchPosition;
    fn sub(self, o: PitchPosition) -> PitchPosition {
        PitchPosition { x: self.x - o.x, y: self.y - o.y, z: self.z - o.z }
    }
}

impl Mul<f64> for PitchPosition {
    type Output = PitchPosition;
    fn mul(self, s: f64) -> PitchPosition {
        PitchPosition { x: self.x * s, y: self.y * s, z: self.z * s }
    }
}

/// Fifth index in `[-5, 6]` of a MIDI pitch: the unique `k` with `7k = pc (mod 12)`.
pub fn fifth_index_of_pitch(midi_pitch: u8) -> i32 {
    // 7 is its own inverse mod 12.
    let k = (7 * i32::from(midi_pitch % 12)) % 12;
    if k > 6 {
        k - 12
    } else {
        k
    }
}

pub fn pitch_position(k: i32, params: &SpiralParams) -> PitchPosition {
    let angle = f64::from(k) * FRAC_PI_2;
    // sin/cos of multiples of pi/2 are exact integers; avoid rounding noise.
    let (s, c) = match k.rem_euclid(4) {
        0 => (0.0, 1.0),
        1 => (1.0, 0.0),
        2 => (0.0, -1.0),
        3 => (-1.0, 0.0),
        _ => (libm::sin(angle), libm::cos(angle)),
    };
    PitchPosition { x: params.radius * s, y: params.radius * c, z: f64::from(k) * params.height }
}

/// Weighted centre of points given as `(fifth index, weight)`. `None` when empty
/// or when the total weight is not positive.
pub fn center_of_indices(points: &[(i32, f64)], params: &SpiralParams) -> Option<PitchPosition> {
    let total: f64 = points.iter().map(|p| p.1).sum();
    if points.is_empty() || !(total > 0.0) {
        return None;
    }
    let sum = points
        .iter()
        .fold(PitchPosition::default(), |acc, &(k, w)| acc + pitch_position(k, params) * w);
    Some(sum * (1.0 / total))
}

/// Duration-weighted centre of effect of `(midi_pitch, duration_ticks)` notes.
pub fn center_of_effect(notes: &[(u8, u32)], params: &SpiralParams) -> Option<PitchPosition> {
    let points: Vec<(i32, f64)> =
        notes.iter().map(|&(p, d)| (fifth_index_of_pitch(p), f64::from(d))).collect();
    center_of_indices(&points, params)
}

fn chord_center(root: i32, mode: Mode, params: &SpiralParams) -> PitchPosition {
    let third = match mode {
        Mode::Major => root + 4,
        Mode::Minor => root - 3,
    };
    let w = params.chord_weights;
    pitch_position(root, params) * w[0]
        + pitch_position(root + 1, params) * w[1]
        + pitch_position(third, params) * w[2]
}

/// Centre of a key: weighted tonic, dominant and subdominant triads. Minor
/// keys use minor tonic and subdominant triads with a major dominant.
pub fn key_center(tonic: i32, mode: Mode, params: &SpiralParams) -> PitchPosition {
    let w = params.key_weights;
    chord_center(tonic, mode, params) * w[0]
        + chord_center(tonic + 1, Mode::Major, params) * w[1]
        + chord_center(tonic - 1, mode, params) * w[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyEstimate {
    pub tonic: i32,
    pub mode: Mode,
    pub center: PitchPosition,
}

/// Closest of the 24 keys to a given centre. Ties go to the lower tonic
/// index, then to major.
pub fn nearest_key(center: PitchPosition, params: &SpiralParams) -> KeyEstimate {
    let mut best: Option<(f64, KeyEstimate)> = None;
    for tonic in -5..=6 {
        for mode in [Mode::Major, Mode::Minor] {
            let kc = key_center(tonic, mode, params);
            let d = kc.distance(center);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd - 1e-12) {
                best = Some((d, KeyEstimate { tonic, mode, center: kc }));
            }
        }
    }
    best.expect("24 candidates").1
}

fn pitched_notes(score: &Score) -> impl Iterator<Item = (usize, u8, u32)> + '_ {
    score.measures.iter().enumerate().flat_map(|(i, m)| {
        m.events
            .iter()
            .filter(|e| e.track.is_pitched())
            .map(move |e| (i, e.midi_pitch, e.duration))
    })
}

pub fn estimate_key(score: &Score, params: &SpiralParams) -> Result<KeyEstimate, TensionError> {
    let notes: Vec<(u8, u32)> = pitched_notes(score).map(|(_, p, d)| (p, d)).collect();
    let center = center_of_effect(&notes, params).ok_or(TensionError::NoNotes)?;
    Ok(nearest_key(center, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BarLevels {
    pub cloud_diameter: Quartile,
    pub cloud_momentum: Quartile,
    pub tensile_strain: Quartile,
}

impl BarLevels {
    pub fn tokens(&self) -> [Token; 3] {
        [
            Token::BarControl(TensionFeature::CloudDiameter, self.cloud_diameter),
            Token::BarControl(TensionFeature::CloudMomentum, self.cloud_momentum),
            Token::BarControl(TensionFeature::TensileStrain, self.tensile_strain),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BarTension {
    pub cloud_diameter: f64,
    pub cloud_momentum: f64,
    pub tensile_strain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<BarLevels>,
}

impl BarTension {
    pub fn get(&self, feature: TensionFeature) -> f64 {
        match feature {
            TensionFeature::CloudDiameter => self.cloud_diameter,
            TensionFeature::CloudMomentum => self.cloud_momentum,
            TensionFeature::TensileStrain => self.tensile_strain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TensionProfile {
    pub bars: Vec<BarTension>,
}

impl TensionProfile {
    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// Levels of every bar, if the profile has been discretized.
    pub fn levels(&self) -> Option<Vec<BarLevels>> {
        self.bars.iter().map(|b| b.levels).collect()
    }

    /// Bars `[start, end)` of the profile.
    pub fn slice(&self, start: usize, end: usize) -> TensionProfile {
        TensionProfile { bars: self.bars[start..end].to_vec() }
    }
}

/// Tension of bars given directly as clouds of `(fifth index, weight)`.
/// `key` is the key centre used for tensile strain.
pub fn tension_of_clouds(
    clouds: &[Vec<(i32, f64)>],
    key: Option<PitchPosition>,
    params: &SpiralParams,
) -> TensionProfile {
    let centers: Vec<Option<PitchPosition>> =
        clouds.iter().map(|c| center_of_indices(c, params)).collect();
    let bars = clouds
        .iter()
        .enumerate()
        .map(|(i, cloud)| {
            let mut ks: Vec<i32> = cloud.iter().map(|p| p.0).collect();
            ks.sort_unstable();
            ks.dedup();
            let positions: Vec<PitchPosition> = ks.iter().map(|&k| pitch_position(k, params)).collect();
            let mut diameter = 0.0f64;
            for a in 0..positions.len() {
                for b in a + 1..positions.len() {
                    diameter = diameter.max(positions[a].distance(positions[b]));
                }
            }
            let momentum = match (i.checked_sub(1).and_then(|p| centers[p]), centers[i]) {
                (Some(prev), Some(cur)) => cur.distance(prev),
                _ => 0.0,
            };
            let strain = match (centers[i], key) {
                (Some(c), Some(k)) => c.distance(k),
                _ => 0.0,
            };
            BarTension { cloud_diameter: diameter, cloud_momentum: momentum, tensile_strain: strain, levels: None }
        })
        .collect();
    TensionProfile { bars }
}

/// Per-bar tension of a score. Drums are excluded; a note belongs to the bar
/// it starts in.
pub fn compute_tension_profile(score: &Score, params: &SpiralParams) -> TensionProfile {
    let key = estimate_key(score, params).ok();
    compute_tension_profile_with_key(score, key.as_ref(), params)
}

pub fn compute_tension_profile_with_key(
    score: &Score,
    key: Option<&KeyEstimate>,
    params: &SpiralParams,
) -> TensionProfile {
    let mut clouds: Vec<Vec<(i32, f64)>> = alloc::vec![Vec::new(); score.measures.len()];
    for (bar, pitch, dur) in pitched_notes(score) {
        clouds[bar].push((fifth_index_of_pitch(pitch), f64::from(dur)));
    }
    tension_of_clouds(&clouds, key.map(|k| k.center), params)
}

/// Q1 / median / Q3 per feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensionThresholds {
    pub cloud_diameter: [f64; 3],
    pub cloud_momentum: [f64; 3],
    pub tensile_strain: [f64; 3],
}

impl TensionThresholds {
    pub fn get(&self, feature: TensionFeature) -> [f64; 3] {
        match feature {
            TensionFeature::CloudDiameter => self.cloud_diameter,
            TensionFeature::CloudMomentum => self.cloud_momentum,
            TensionFeature::TensileStrain => self.tensile_strain,
        }
    }
}

/// Quartile thresholds of `values` (linear interpolation); needs 4 or more values.
pub fn fit_quartiles(values: &[f64]) -> Result<[f64; 3], TensionError> {
    if values.len() < 4 {
        return Err(TensionError::TooFewBars(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok([quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.5), quantile_sorted(&sorted, 0.75)])
}

/// Fit thresholds over the pooled bars of a corpus.
pub fn fit_tension_thresholds<'a, I>(bars: I) -> Result<TensionThresholds, TensionError>
where
    I: IntoIterator<Item = &'a BarTension>,
{
    let mut cd = Vec::new();
    let mut cm = Vec::new();
    let mut ts = Vec::new();
    for b in bars {
        cd.push(b.cloud_diameter);
        cm.push(b.cloud_momentum);
        ts.push(b.tensile_strain);
    }
    Ok(TensionThresholds {
        cloud_diameter: fit_quartiles(&cd)?,
        cloud_momentum: fit_quartiles(&cm)?,
        tensile_strain: fit_quartiles(&ts)?,
    })
}

/// Half-open binning: `v < t1` is q1, `t1 <= v < t2` q2, `t2 <= v < t3` q3, `v >= t3` q4.
pub fn discretize(value: f64, t: [f64; 3]) -> Quartile {
    if value < t[0] {
        Quartile::Q1
    } else if value < t[1] {
        Quartile::Q2
    } else if value < t[2] {
        Quartile::Q3
    } else {
        Quartile::Q4
    }
}

pub fn discretize_profile(profile: &TensionProfile, thresholds: &TensionThresholds) -> TensionProfile {
    let bars = profile
        .bars
        .iter()
        .map(|b| BarTension {
            levels: Some(BarLevels {
                cloud_diameter: discretize(b.cloud_diameter, thresholds.cloud_diameter),
                cloud_momentum: discretize(b.cloud_momentum, thresholds.cloud_momentum),
                tensile_strain: discretize(b.tensile_strain, thresholds.tensile_strain),
            }),
            ..*b
        })
        .collect();
    TensionProfile { bars }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{empty_score, fretted};
    use crate::token::Track;
    use alloc::vec;
    use proptest::prelude::*;

    const C: u8 = 60;
    const E: u8 = 64;
    const G: u8 = 67;
    const A: u8 = 57;

    #[test]
    fn fifth_indices() {
        // Solve 7k = pc (mod 12) over k in [-5, 6] by search.
        for pc in 0u8..12 {
            let solutions: Vec<i32> = (-5..=6).filter(|k: &i32| (7 * k).rem_euclid(12) == i32::from(pc)).collect();
            assert_eq!(solutions.len(), 1);
            assert_eq!(fifth_index_of_pitch(pc + 48), solutions[0]);
        }
        assert_eq!(fifth_index_of_pitch(0), 0);
        assert_eq!(fifth_index_of_pitch(7), 1);
        assert_eq!(fifth_index_of_pitch(1), -5);
        assert_eq!(fifth_index_of_pitch(6), 6);
    }

    #[test]
    fn helix_positions() {
        let p = SpiralParams::default();
        let h = p.height;
        assert_eq!(pitch_position(0, &p), PitchPosition { x: 0.0, y: 1.0, z: 0.0 });
        assert_eq!(pitch_position(1, &p), PitchPosition { x: 1.0, y: 0.0, z: h });
        assert_eq!(pitch_position(4, &p), PitchPosition { x: 0.0, y: 1.0, z: 4.0 * h });
        p.validate().unwrap();
    }

    #[test]
    fn centers_of_effect() {
        let p = SpiralParams::default();
        let pos = |k| pitch_position(k, &p);
        assert!(center_of_effect(&[(E, 123)], &p).unwrap().distance(pos(4)) < 1e-12);
        let mid = center_of_effect(&[(C, 480), (G, 480)], &p).unwrap();
        assert!(mid.distance((pos(0) + pos(1)) * 0.5) < 1e-12);
        let w = center_of_effect(&[(C, 1440), (G, 480)], &p).unwrap();
        assert!(w.distance(pos(0) * 0.75 + pos(1) * 0.25) < 1e-12);
        assert_eq!(center_of_effect(&[], &p), None);
    }

    fn triad_score(pitches: [u8; 3], bars: usize) -> Score {
        let mut s = empty_score(bars, 120);
        for m in &mut s.measures {
            for (i, &p) in pitches.iter().enumerate() {
                // Fret on string 6 (open 40).
                let mut e = fretted(Track::Leads, 6, p - 40, i as u32 * 960, 960);
                e.midi_pitch = p;
                m.events.push(e);
            }
        }
        s
    }

    /// Brute-force: distance from the piece centre to each of 24 keys, built
    /// from explicit triad pitch lists.
    fn brute_force_key(notes: &[(u8, u32)]) -> (i32, Mode) {
        let p = SpiralParams::default();
        let center = center_of_effect(notes, &p).unwrap();
        let triad = |root: i32, minor: bool| -> PitchPosition {
            let third = if minor { root - 3 } else { root + 4 };
            pitch_position(root, &p) * 0.536 + pitch_position(root + 1, &p) * 0.274 + pitch_position(third, &p) * 0.190
        };
        let mut all = Vec::new();
        for tonic in -5..=6 {
            for minor in [false, true] {
                let kc = triad(tonic, minor) * 0.536 + triad(tonic + 1, false) * 0.274 + triad(tonic - 1, minor) * 0.190;
                all.push((kc.distance(center), tonic, minor));
            }
        }
        let best = all.iter().cloned().fold(all[0], |b, x| if x.0 < b.0 - 1e-12 { x } else { b });
        (best.1, if best.2 { Mode::Minor } else { Mode::Major })
    }

    #[test]
    fn key_of_c_major_triads() {
        let s = triad_score([C, E, G], 2);
        let k = estimate_key(&s, &SpiralParams::default()).unwrap();
        assert_eq!((k.tonic, k.mode), brute_force_key(&[(C, 960), (E, 960), (G, 960)]));
        assert_eq!((k.tonic, k.mode), (0, Mode::Major));
    }

    #[test]
    fn key_of_a_minor_triads() {
        let s = triad_score([A, C, E], 2);
        let k = estimate_key(&s, &SpiralParams::default()).unwrap();
        assert_eq!((k.tonic, k.mode), brute_force_key(&[(A, 960), (C, 960), (E, 960)]));
        assert_eq!((k.tonic, k.mode), (3, Mode::Minor));
    }

    #[test]
    fn empty_score_has_no_key() {
        assert_eq!(estimate_key(&empty_score(3, 120), &SpiralParams::default()), Err(TensionError::NoNotes));
    }

    #[test]
    fn c_major_triad_diameter() {
        let s = triad_score([C, E, G], 2);
        let prof = compute_tension_profile(&s, &SpiralParams::default());
        assert!((prof.bars[0].cloud_diameter - libm::sqrt(3.2)).abs() < 1e-9);
        // identical consecutive bars
        assert_eq!(prof.bars[0].cloud_momentum, 0.0);
        assert!(prof.bars[1].cloud_momentum.abs() < 1e-12);
    }

    #[test]
    fn single_pitch_and_empty_bars() {
        let mut s = empty_score(3, 120);
        s.measures[1].events.push(fretted(Track::Leads, 1, 0, 0, 960));
        s.measures[1].events.push(fretted(Track::Leads, 2, 5, 960, 960)); // also E
        let prof = compute_tension_profile(&s, &SpiralParams::default());
        assert_eq!(prof.len(), 3);
        assert_eq!(prof.bars[0], BarTension::default());
        assert_eq!(prof.bars[1].cloud_diameter, 0.0);
        assert_eq!(prof.bars[1].cloud_momentum, 0.0);
        assert_eq!(prof.bars[2], BarTension::default());
    }

    #[test]
    fn strain_zero_at_key_center() {
        let p = SpiralParams::default();
        let kc = key_center(0, Mode::Major, &p);
        let prof = tension_of_clouds(&[vec![(0, 1.0)]], Some(pitch_position(0, &p)), &p);
        assert_eq!(prof.bars[0].tensile_strain, 0.0);
        assert!(kc.distance(pitch_position(0, &p)) > 0.0);
    }

    #[test]
    fn drums_are_not_in_clouds() {
        let mut s = empty_score(1, 120);
        s.measures[0].events.push(fretted(Track::Leads, 1, 0, 0, 960));
        s.measures[0].events.push(crate::score::NoteEvent {
            track: Track::Drums,
            onset: 0,
            duration: 960,
            midi_pitch: 61,
            source: crate::score::NoteSource::Drum,
            effects: vec![],
        });
        let prof = compute_tension_profile(&s, &SpiralParams::default());
        assert_eq!(prof.bars[0].cloud_diameter, 0.0);
    }

    #[test]
    fn quartile_thresholds() {
        let bars: Vec<BarTension> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&v| BarTension { cloud_diameter: v, cloud_momentum: v, tensile_strain: v, levels: None })
            .collect();
        let t = fit_tension_thresholds(&bars).unwrap();
        assert_eq!(t.cloud_diameter, [1.75, 2.5, 3.25]);
        assert_eq!(fit_quartiles(&[1.0, 2.0, 3.0]), Err(TensionError::TooFewBars(3)));
    }

    #[test]
    fn constant_values_collapse_thresholds() {
        let t = fit_quartiles(&[0.5; 8]).unwrap();
        assert_eq!(t, [0.5, 0.5, 0.5]);
        // v >= t3 goes to the top level under half-open binning.
        assert_eq!(discretize(0.5, t), Quartile::Q4);
    }

    #[test]
    fn binning_boundaries() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(discretize(2.0, t), Quartile::Q3);
        assert_eq!(discretize(-5.0, t), Quartile::Q1);
        let levels: Vec<Quartile> = [0.5, 1.0, 1.5, 2.5, 3.0, 9.0].iter().map(|&v| discretize(v, t)).collect();
        assert_eq!(levels, vec![Quartile::Q1, Quartile::Q2, Quartile::Q2, Quartile::Q3, Quartile::Q4, Quartile::Q4]);
    }

    #[test]
    fn uniform_sample_quartiles() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..20_000).map(|_| rng.gen::<f64>()).collect();
        let t = fit_quartiles(&v).unwrap();
        for (got, want) in t.iter().zip([0.25, 0.5, 0.75]) {
            assert!((got - want).abs() < 0.02);
        }
    }

    fn rotate(p: PitchPosition, delta: i32, params: &SpiralParams) -> PitchPosition {
        // Index shift = rotation by delta * 90 degrees plus a rise of delta * h.
        let (s, c) = (libm::sin(f64::from(delta) * FRAC_PI_2), libm::cos(f64::from(delta) * FRAC_PI_2));
        PitchPosition { x: p.x * c + p.y * s, y: -p.x * s + p.y * c, z: p.z + f64::from(delta) * params.height }
    }

    proptest! {
        #[test]
        fn transposition_isometry(
            clouds in proptest::collection::vec(proptest::collection::vec((-5i32..=6, 1u32..2000), 0..6), 1..6),
            tonic in -5i32..=6,
            minor in any::<bool>(),
            delta in -6i32..=6,
        ) {
            let p = SpiralParams::default();
            let mode = if minor { Mode::Minor } else { Mode::Major };
            let to_f = |c: &Vec<(i32, u32)>, d: i32| c.iter().map(|&(k, w)| (k + d, f64::from(w))).collect::<Vec<_>>();
            let base: Vec<_> = clouds.iter().map(|c| to_f(c, 0)).collect();
            let shifted: Vec<_> = clouds.iter().map(|c| to_f(c, delta)).collect();
            let a = tension_of_clouds(&base, Some(key_center(tonic, mode, &p)), &p);
            let b = tension_of_clouds(&shifted, Some(key_center(tonic + delta, mode, &p)), &p);
            for (x, y) in a.bars.iter().zip(&b.bars) {
                prop_assert!((x.cloud_diameter - y.cloud_diameter).abs() < 1e-9);
                prop_assert!((x.cloud_momentum - y.cloud_momentum).abs() < 1e-9);
                prop_assert!((x.tensile_strain - y.tensile_strain).abs() < 1e-9);
            }
            // the shift is the rigid motion used above
            let kc = key_center(tonic, mode, &p);
            prop_assert!(rotate(kc, delta, &p).distance(key_center(tonic + delta, mode, &p)) < 1e-9);
        }

        #[test]
        fn nonnegative_and_diameter_ignores_durations(
            cloud in proptest::collection::vec((-5i32..=6, 1u32..2000), 1..8),
            scale in 1u32..50,
        ) {
            let p = SpiralParams::default();
            let a: Vec<(i32, f64)> = cloud.iter().map(|&(k, w)| (k, f64::from(w))).collect();
            let mut b: Vec<(i32, f64)> = cloud.iter().map(|&(k, w)| (k, f64::from(w * scale + 7))).collect();
            b.reverse();
            let key = Some(key_center(0, Mode::Major, &p));
            let ta = tension_of_clouds(&[a.clone(), a.clone()], key, &p);
            let tb = tension_of_clouds(&[b.clone(), b], key, &p);
            prop_assert!(ta.bars.iter().all(|x| x.cloud_diameter >= 0.0 && x.cloud_momentum >= 0.0 && x.tensile_strain >= 0.0));
            prop_assert_eq!(ta.bars[0].cloud_diameter, tb.bars[0].cloud_diameter);
            // CoE is homogeneous in the weights
            let scaled: Vec<(i32, f64)> = a.iter().map(|&(k, w)| (k, w * f64::from(scale))).collect();
            let c1 = center_of_indices(&a, &p).unwrap();
            let c2 = center_of_indices(&scaled, &p).unwrap();
            prop_assert!(c1.distance(c2) < 1e-12);
            prop_assert_eq!(nearest_key(c1, &p).tonic, nearest_key(c2, &p).tonic);
        }

        #[test]
        fn quartile_binning_is_balanced(values in proptest::collection::btree_set(0u32..1_000_000, 8..400)) {
            let v: Vec<f64> = values.iter().map(|&x| f64::from(x)).collect();
            let t = fit_quartiles(&v).unwrap();
            let mut counts = [0usize; 4];
            for &x in &v {
                counts[discretize(x, t).index()] += 1;
            }
            let quarter = v.len() as f64 / 4.0;
            for c in counts {
                prop_assert!((c as f64 - quarter).abs() <= 2.0, "{:?} of {}", counts, v.len());
            }
        }
    }
}
