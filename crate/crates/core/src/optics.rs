//! Linear-optics Bell-state measurement and the lossy, noisy channel.
//!
//! The measurement station is a 50:50 beamsplitter followed by a polarizing
//! beamsplitter on each output port, feeding four threshold detectors
//! `D1H, D1V, D2H, D2V`. Three backends model the inputs:
//!
//! * ideal single photons (exact Born rule on the two-qubit state),
//! * phase-randomized coherent pulses (amplitudes through the network,
//!   Poissonian clicks),
//! * Fock states with a photon-number cutoff (exact multimode evolution),
//!   which lets callers tag each round with its true photon numbers.
//!
//! Misalignment is a relative polarization phase `δ` on V2's arm with
//! `sin²(δ/2) = misalignment_error`; for single photons this makes the
//! conclusive error rate equal to `misalignment_error` exactly.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::{linear_optics_bsm_povm, PovmLabel, PreparedQubit, C64};
use crate::types::{Basis, BasisBit, Outcome};

/// Lossy channel plus detection hardware.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Channel transmittance of each verifier→prover arm.
    pub transmittance_per_arm: f64,
    /// Conclusive single-photon error rate caused by polarization drift.
    pub misalignment_error: f64,
    pub detector_efficiency: f64,
    /// Dark-count probability per detector per gate.
    pub dark_count_prob: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            transmittance_per_arm: 1.0,
            misalignment_error: 0.001,
            detector_efficiency: 0.64,
            dark_count_prob: 2.5e-6,
        }
    }
}

/// Key-value channel description as stored in configuration files.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    /// Per-arm channel loss in dB.
    transmittance_db: Option<f64>,
    misalignment: Option<f64>,
    det_eff: Option<f64>,
    dark_count: Option<f64>,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        let t = self.transmittance_per_arm;
        if !(t > 0.0 && t <= 1.0) {
            return Err(invalid("transmittance_per_arm", format!("{t} is outside (0, 1]")));
        }
        for (name, v) in [
            ("misalignment_error", self.misalignment_error),
            ("detector_efficiency", self.detector_efficiency),
            ("dark_count_prob", self.dark_count_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, format!("{v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Ideal channel: lossless, noiseless, unit-efficiency detectors.
    pub fn ideal() -> Self {
        Self {
            transmittance_per_arm: 1.0,
            misalignment_error: 0.0,
            detector_efficiency: 1.0,
            dark_count_prob: 0.0,
        }
    }

    /// Per-arm survival probability including detection.
    pub fn arm_efficiency(&self) -> f64 {
        self.transmittance_per_arm * self.detector_efficiency
    }

    /// Loss of the measurement station alone: the 1/2 BSM efficiency times
    /// two detector efficiencies, in dB.
    pub fn bsm_loss_db(&self) -> f64 {
        -10.0 * (0.5 * self.detector_efficiency * self.detector_efficiency).log10()
    }

    /// Total loss between the two verifiers: both channel arms plus the
    /// measurement station.
    pub fn overall_loss_db(&self) -> f64 {
        self.bsm_loss_db() - 20.0 * self.transmittance_per_arm.log10()
    }

    /// Same hardware with the channel split symmetrically so that the
    /// overall loss equals `loss_db`.
    pub fn with_overall_loss_db(&self, loss_db: f64) -> Result<Self> {
        let channel_db = loss_db - self.bsm_loss_db();
        if channel_db < -1e-9 {
            return Err(invalid(
                "loss_db",
                format!(
                    "{loss_db} dB is below the measurement-station loss {:.3} dB",
                    self.bsm_loss_db()
                ),
            ));
        }
        let mut out = *self;
        out.transmittance_per_arm = 10f64.powf(-channel_db.max(0.0) / 20.0);
        Ok(out)
    }

    /// Relative polarization phase `δ` with `sin²(δ/2) = misalignment_error`.
    pub fn misalignment_phase(&self) -> f64 {
        2.0 * self.misalignment_error.sqrt().asin()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ChannelFile = toml::from_str(text)?;
        let mut model = Self::default();
        if let Some(db) = file.transmittance_db {
            model.transmittance_per_arm = 10f64.powf(-db / 10.0);
        }
        if let Some(v) = file.misalignment {
            model.misalignment_error = v;
        }
        if let Some(v) = file.det_eff {
            model.detector_efficiency = v;
        }
        if let Some(v) = file.dark_count {
            model.dark_count_prob = v;
        }
        model.validate()?;
        Ok(model)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Which of the four detectors clicked, as a 4-bit mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClickPattern(pub u8);

impl ClickPattern {
    pub const D1H: u8 = 0b0001;
    pub const D1V: u8 = 0b0010;
    pub const D2H: u8 = 0b0100;
    pub const D2V: u8 = 0b1000;

    pub fn from_flags(flags: [bool; 4]) -> Self {
        let mut bits = 0;
        for (i, f) in flags.iter().enumerate() {
            if *f {
                bits |= 1 << i;
            }
        }
        Self(bits)
    }

    pub fn flags(self) -> [bool; 4] {
        [0, 1, 2, 3].map(|i| self.0 & (1 << i) != 0)
    }

    /// `{D1H, D1V}` or `{D2H, D2V}` is Ψ+, `{D1H, D2V}` or `{D1V, D2H}` is
    /// Ψ−, everything else is inconclusive.
    pub fn classify(self) -> Outcome {
        const PSI_PLUS: [u8; 2] = [
            ClickPattern::D1H | ClickPattern::D1V,
            ClickPattern::D2H | ClickPattern::D2V,
        ];
        const PSI_MINUS: [u8; 2] = [
            ClickPattern::D1H | ClickPattern::D2V,
            ClickPattern::D1V | ClickPattern::D2H,
        ];
        if PSI_PLUS.contains(&self.0) {
            Outcome::Zero
        } else if PSI_MINUS.contains(&self.0) {
            Outcome::One
        } else {
            Outcome::Inconclusive
        }
    }
}

/// A measured round: the reported outcome and the raw detector pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BsmOutcome {
    pub value: Outcome,
    pub pattern: ClickPattern,
}

impl BsmOutcome {
    pub fn from_pattern(pattern: ClickPattern) -> Self {
        Self {
            value: pattern.classify(),
            pattern,
        }
    }
}

/// Backend-specific description of the two pulses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PulseEncoding {
    /// Optical phases of the two coherent pulses.
    Phases { v1: f64, v2: f64 },
    /// Photon numbers emitted by each verifier.
    Photons { v1: u32, v2: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulsePair {
    pub state_v1: BasisBit,
    pub state_v2: BasisBit,
    pub intensity_v1: f64,
    pub intensity_v2: f64,
    pub encoding: PulseEncoding,
}

/// Samples an ideal linear-optics BSM on two BB84 single photons.
pub fn ideal_bsm_single_photon<R: Rng + ?Sized>(
    basis: Basis,
    x: bool,
    y: bool,
    rng: &mut R,
) -> BsmOutcome {
    let q1 = PreparedQubit::prepare(BasisBit::new(basis, x));
    let q2 = PreparedQubit::prepare(BasisBit::new(basis, y));
    let label = PreparedQubit::measure_joint(&q1, &q2, &linear_optics_bsm_povm(), rng);
    let side = rng.gen::<bool>();
    let pattern = match label {
        PovmLabel::Zero => {
            if side {
                ClickPattern::D2H | ClickPattern::D2V
            } else {
                ClickPattern::D1H | ClickPattern::D1V
            }
        }
        PovmLabel::One => {
            if side {
                ClickPattern::D1V | ClickPattern::D2H
            } else {
                ClickPattern::D1H | ClickPattern::D2V
            }
        }
        // both photons leave through the same detector
        PovmLabel::Inconclusive => 1 << rng.gen_range(0..4),
    };
    BsmOutcome::from_pattern(ClickPattern(pattern))
}

/// Per-photon amplitudes of V1's and V2's modes on the four detector modes
/// `[1H, 1V, 2H, 2V]`, including misalignment on V2's arm.
fn mode_vectors(v1: BasisBit, v2: BasisBit, channel: &ChannelModel) -> ([C64; 4], [C64; 4]) {
    let alpha = C64::from_polar(1.0, v1.polarization_phase());
    let beta = C64::from_polar(1.0, v2.polarization_phase() + channel.misalignment_phase());
    let half = C64::new(0.5, 0.0);
    let one = C64::new(1.0, 0.0);
    let a = [one, alpha, one, alpha].map(|z| z * half);
    let b = [one, beta, -one, -beta].map(|z| z * half);
    (a, b)
}

/// Mean photon numbers reaching each detector for coherent inputs with
/// optical phases `phase_v1`, `phase_v2`.
pub fn detector_intensities(
    v1: BasisBit,
    v2: BasisBit,
    intensity_v1: f64,
    intensity_v2: f64,
    phase_v1: f64,
    phase_v2: f64,
    channel: &ChannelModel,
) -> [f64; 4] {
    let (a, b) = mode_vectors(v1, v2, channel);
    let eff = channel.arm_efficiency();
    let amp_a = C64::from_polar((intensity_v1 * eff).sqrt(), phase_v1);
    let amp_b = C64::from_polar((intensity_v2 * eff).sqrt(), phase_v2);
    [0, 1, 2, 3].map(|j| (amp_a * a[j] + amp_b * b[j]).norm_sqr())
}

fn click_probability(mean_photons: f64, dark: f64) -> f64 {
    1.0 - (1.0 - dark) * (-mean_photons).exp()
}

/// Probabilities of `(Zero, One, Inconclusive)` for independent detectors
/// with the given click probabilities.
pub fn outcome_probabilities(click: [f64; 4]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for bits in 0u8..16 {
        let mut p = 1.0;
        for (j, c) in click.iter().enumerate() {
            p *= if bits & (1 << j) != 0 { *c } else { 1.0 - c };
        }
        out[outcome_index(ClickPattern(bits).classify())] += p;
    }
    out
}

pub(crate) fn outcome_index(o: Outcome) -> usize {
    match o {
        Outcome::Zero => 0,
        Outcome::One => 1,
        Outcome::Inconclusive => 2,
    }
}

/// Samples a phase-randomized coherent-state round.
pub fn coherent_bsm<R: Rng + ?Sized>(
    pulse: &PulsePair,
    channel: &ChannelModel,
    rng: &mut R,
) -> Result<BsmOutcome> {
    let (phase_v1, phase_v2) = match pulse.encoding {
        PulseEncoding::Phases { v1, v2 } => (v1, v2),
        PulseEncoding::Photons { .. } => {
            return Err(invalid("pulse", "coherent backend needs optical phases"))
        }
    };
    let intensities = detector_intensities(
        pulse.state_v1,
        pulse.state_v2,
        pulse.intensity_v1,
        pulse.intensity_v2,
        phase_v1,
        phase_v2,
        channel,
    );
    let flags = intensities.map(|i| rng.gen::<f64>() < click_probability(i, channel.dark_count_prob));
    Ok(BsmOutcome::from_pattern(ClickPattern::from_flags(flags)))
}

/// Draws uniform phases for a coherent pulse pair.
pub fn random_phases<R: Rng + ?Sized>(rng: &mut R) -> PulseEncoding {
    PulseEncoding::Phases {
        v1: rng.gen::<f64>() * 2.0 * PI,
        v2: rng.gen::<f64>() * 2.0 * PI,
    }
}

/// Expected conclusive probability (gain) and conditional error rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainError {
    pub gain: f64,
    pub error_rate: f64,
    /// Quadrature points per phase used for the final estimate.
    pub quadrature_points: usize,
}

impl GainError {
    /// Probability that a round is conclusive and wrong.
    pub fn error_gain(&self) -> f64 {
        self.gain * self.error_rate
    }
}

const QUADRATURE_START: usize = 64;
const QUADRATURE_MAX: usize = 1 << 16;
const QUADRATURE_TOL: f64 = 1e-10;

fn averaged_over_phase(u: f64, v: f64, channel: &ChannelModel, points: usize) -> (f64, f64) {
    // detector statistics depend on the two phases only through their
    // difference, so the double phase integral collapses to one dimension
    let mut gain = 0.0;
    let mut errors = 0.0;
    for parity in [false, true] {
        let v1 = BasisBit::new(Basis::X, false);
        let v2 = BasisBit::new(Basis::X, parity);
        let mut conclusive = [0.0; 2];
        for k in 0..points {
            let phi = 2.0 * PI * k as f64 / points as f64;
            let intensities = detector_intensities(v1, v2, u, v, phi, 0.0, channel);
            let clicks = intensities.map(|i| click_probability(i, channel.dark_count_prob));
            let p = outcome_probabilities(clicks);
            conclusive[0] += p[0];
            conclusive[1] += p[1];
        }
        let scale = 1.0 / points as f64;
        let (zero, one) = (conclusive[0] * scale, conclusive[1] * scale);
        gain += 0.5 * (zero + one);
        errors += 0.5 * if parity { zero } else { one };
    }
    (gain, errors)
}

/// Gain and error rate for intensity pair `(u, v)` with uniformly random
/// BB84 inputs, by deterministic phase quadrature refined until successive
/// estimates agree to 1e-10.
pub fn expected_gain_error(u: f64, v: f64, channel: &ChannelModel) -> Result<GainError> {
    channel.validate()?;
    if !(u >= 0.0 && v >= 0.0) {
        return Err(invalid("intensity", format!("({u}, {v}) must be non-negative")));
    }
    let mut points = QUADRATURE_START;
    let mut prev = averaged_over_phase(u, v, channel, points);
    loop {
        let next_points = points * 2;
        let next = averaged_over_phase(u, v, channel, next_points);
        let converged =
            (next.0 - prev.0).abs() < QUADRATURE_TOL && (next.1 - prev.1).abs() < QUADRATURE_TOL;
        points = next_points;
        prev = next;
        if converged || points >= QUADRATURE_MAX {
            break;
        }
    }
    let (gain, errors) = prev;
    let error_rate = if gain > 0.0 { errors / gain } else { 0.0 };
    Ok(GainError {
        gain,
        error_rate,
        quadrature_points: points,
    })
}

/// Default cap on the total photon number handled by the Fock backend.
pub const DEFAULT_FOCK_CUTOFF: u32 = 10;

/// Photon-number distribution at the detectors for `k` photons from V1 and
/// `l` from V2 through the lossless network, reduced to threshold patterns.
fn lossless_pattern_distribution(k: u32, l: u32, a: &[C64; 4], b: &[C64; 4]) -> [f64; 16] {
    // expand (Σ a_j o_j†)^k (Σ b_j o_j†)^l as a polynomial in the creation
    // operators of the four detector modes
    let mut poly: HashMap<[u8; 4], C64> = HashMap::new();
    poly.insert([0; 4], C64::new(1.0, 0.0));
    let multiply = |poly: &HashMap<[u8; 4], C64>, form: &[C64; 4]| {
        let mut out: HashMap<[u8; 4], C64> = HashMap::with_capacity(poly.len() * 4);
        for (mono, coeff) in poly {
            for (j, f) in form.iter().enumerate() {
                if f.norm_sqr() == 0.0 {
                    continue;
                }
                let mut m = *mono;
                m[j] += 1;
                *out.entry(m).or_insert(C64::new(0.0, 0.0)) += coeff * f;
            }
        }
        out
    };
    for _ in 0..k {
        poly = multiply(&poly, a);
    }
    for _ in 0..l {
        poly = multiply(&poly, b);
    }
    let norm = factorial(k) * factorial(l);
    let mut dist = [0.0; 16];
    for (mono, coeff) in poly {
        let weight: f64 = mono.iter().map(|&n| factorial(u32::from(n))).product();
        let pattern = mono
            .iter()
            .enumerate()
            .fold(0u8, |acc, (j, &n)| if n > 0 { acc | (1 << j) } else { acc });
        dist[usize::from(pattern)] += coeff.norm_sqr() * weight / norm;
    }
    dist
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Folds independent dark counts into a photon-click pattern distribution.
fn with_dark_counts(dist: &[f64; 16], dark: f64) -> [f64; 16] {
    if dark == 0.0 {
        return *dist;
    }
    let mut dark_dist = [0.0; 16];
    for (bits, slot) in dark_dist.iter_mut().enumerate() {
        let on = (bits as u32).count_ones() as i32;
        *slot = dark.powi(on) * (1.0 - dark).powi(4 - on);
    }
    let mut out = [0.0; 16];
    for (p_bits, p) in dist.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        for (d_bits, q) in dark_dist.iter().enumerate() {
            out[p_bits | d_bits] += p * q;
        }
    }
    out
}

fn relative_class(v1: BasisBit, v2: BasisBit) -> usize {
    // phase index in units of π/2: basis contributes 1, bit contributes 2
    let phase = |s: BasisBit| usize::from(s.basis.bit()) + 2 * usize::from(s.bit);
    (phase(v1) + 4 - phase(v2)) % 4
}

fn binomial_pmf(n: u32, k: u32, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let choose = factorial(n) / (factorial(k) * factorial(n - k));
    choose * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Fock-state backend with cached lossless pattern tables.
#[derive(Clone, Debug)]
pub struct FockBackend {
    channel: ChannelModel,
    cutoff: u32,
    /// `tables[class][k][l]`: lossless pattern distribution.
    tables: Vec<Vec<Vec<[f64; 16]>>>,
}

impl FockBackend {
    pub fn new(channel: ChannelModel, cutoff: u32) -> Result<Self> {
        channel.validate()?;
        let mut tables = Vec::with_capacity(4);
        for class in 0..4u32 {
            // any pair of labels with this relative phase class
            let v1 = label_with_phase_index(class);
            let v2 = BasisBit::new(Basis::X, false);
            let (a, b) = mode_vectors(v1, v2, &channel);
            let mut by_k = Vec::with_capacity(cutoff as usize + 1);
            for k in 0..=cutoff {
                let by_l: Vec<[f64; 16]> = (0..=cutoff - k)
                    .map(|l| lossless_pattern_distribution(k, l, &a, &b))
                    .collect();
                by_k.push(by_l);
            }
            tables.push(by_k);
        }
        Ok(Self {
            channel,
            cutoff,
            tables,
        })
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    fn check(&self, k: u32, l: u32) -> Result<()> {
        if k + l > self.cutoff {
            return Err(Error::PhotonCutoff {
                total: k + l,
                cutoff: self.cutoff,
            });
        }
        Ok(())
    }

    /// Exact distribution of the 16 click patterns for `k` and `l` emitted
    /// photons, including loss, detector efficiency and dark counts.
    pub fn pattern_distribution(&self, v1: BasisBit, v2: BasisBit, k: u32, l: u32) -> Result<[f64; 16]> {
        self.check(k, l)?;
        let class = relative_class(v1, v2);
        let t = self.channel.arm_efficiency();
        let mut dist = [0.0; 16];
        for ks in 0..=k {
            let pk = binomial_pmf(k, ks, t);
            for ls in 0..=l {
                let w = pk * binomial_pmf(l, ls, t);
                if w == 0.0 {
                    continue;
                }
                for (d, p) in dist.iter_mut().zip(&self.tables[class][ks as usize][ls as usize]) {
                    *d += w * p;
                }
            }
        }
        Ok(with_dark_counts(&dist, self.channel.dark_count_prob))
    }

    /// `(Zero, One, Inconclusive)` probabilities for `k` and `l` emitted photons.
    pub fn outcome_probabilities(&self, v1: BasisBit, v2: BasisBit, k: u32, l: u32) -> Result<[f64; 3]> {
        let dist = self.pattern_distribution(v1, v2, k, l)?;
        let mut out = [0.0; 3];
        for (bits, p) in dist.iter().enumerate() {
            out[outcome_index(ClickPattern(bits as u8).classify())] += p;
        }
        Ok(out)
    }

    /// Samples one round: binomial loss on each arm, a lossless pattern from
    /// the cached table, then dark counts OR-ed in.
    pub fn sample<R: Rng + ?Sized>(&self, pulse: &PulsePair, rng: &mut R) -> Result<BsmOutcome> {
        let (k, l) = match pulse.encoding {
            PulseEncoding::Photons { v1, v2 } => (v1, v2),
            PulseEncoding::Phases { .. } => {
                return Err(invalid("pulse", "Fock backend needs photon numbers"))
            }
        };
        self.check(k, l)?;
        let t = self.channel.arm_efficiency();
        let ks = sample_binomial(k, t, rng);
        let ls = sample_binomial(l, t, rng);
        let class = relative_class(pulse.state_v1, pulse.state_v2);
        let table = &self.tables[class][ks as usize][ls as usize];
        let mut u = rng.gen::<f64>();
        let mut bits = 15u8;
        for (b, p) in table.iter().enumerate() {
            if u < *p {
                bits = b as u8;
                break;
            }
            u -= p;
        }
        let d = self.channel.dark_count_prob;
        for j in 0..4 {
            if d > 0.0 && rng.gen::<f64>() < d {
                bits |= 1 << j;
            }
        }
        Ok(BsmOutcome::from_pattern(ClickPattern(bits)))
    }
}

fn label_with_phase_index(class: u32) -> BasisBit {
    BasisBit::new(Basis::from_bit(class % 2 == 1), class >= 2)
}

fn sample_binomial<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if n <= 16 {
        return (0..n).filter(|_| rng.gen::<f64>() < p).count() as u32;
    }
    Binomial::new(u64::from(n), p)
        .map(|b| b.sample(rng) as u32)
        .unwrap_or(0)
}

/// Samples a Fock-state round without a cached backend.
pub fn fock_bsm<R: Rng + ?Sized>(
    pulse: &PulsePair,
    channel: &ChannelModel,
    rng: &mut R,
) -> Result<BsmOutcome> {
    let (k, l) = match pulse.encoding {
        PulseEncoding::Photons { v1, v2 } => (v1, v2),
        PulseEncoding::Phases { .. } => return Err(invalid("pulse", "Fock backend needs photon numbers")),
    };
    if k + l > DEFAULT_FOCK_CUTOFF {
        return Err(Error::PhotonCutoff {
            total: k + l,
            cutoff: DEFAULT_FOCK_CUTOFF,
        });
    }
    channel.validate()?;
    let t = channel.arm_efficiency();
    let ks = sample_binomial(k, t, rng);
    let ls = sample_binomial(l, t, rng);
    let (a, b) = mode_vectors(pulse.state_v1, pulse.state_v2, channel);
    let table = lossless_pattern_distribution(ks, ls, &a, &b);
    let mut u = rng.gen::<f64>();
    let mut bits = 15u8;
    for (bi, p) in table.iter().enumerate() {
        if u < *p {
            bits = bi as u8;
            break;
        }
        u -= p;
    }
    for j in 0..4 {
        if channel.dark_count_prob > 0.0 && rng.gen::<f64>() < channel.dark_count_prob {
            bits |= 1 << j;
        }
    }
    Ok(BsmOutcome::from_pattern(ClickPattern(bits)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn bb(basis: Basis, bit: bool) -> BasisBit {
        BasisBit::new(basis, bit)
    }

    #[test]
    fn classification_is_exhaustive_and_exclusive() {
        let mut counts = [0; 3];
        for bits in 0u8..16 {
            counts[outcome_index(ClickPattern(bits).classify())] += 1;
        }
        assert_eq!(counts, [2, 2, 12]);
        assert_eq!(ClickPattern(ClickPattern::D1H | ClickPattern::D2V).classify(), Outcome::One);
        assert_eq!(ClickPattern(ClickPattern::D1V | ClickPattern::D2H).classify(), Outcome::One);
        assert_eq!(ClickPattern(ClickPattern::D1H | ClickPattern::D1V).classify(), Outcome::Zero);
        assert_eq!(ClickPattern(ClickPattern::D2H | ClickPattern::D2V).classify(), Outcome::Zero);
        assert_eq!(ClickPattern(0b0111).classify(), Outcome::Inconclusive);
        assert_eq!(ClickPattern::from_flags(ClickPattern(0b1010).flags()), ClickPattern(0b1010));
    }

    #[test]
    fn station_loss_matches_detector_budget() {
        let ch = ChannelModel::default();
        assert!((ch.bsm_loss_db() - 6.8867).abs() < 1e-3, "{}", ch.bsm_loss_db());
        let lossy = ch.with_overall_loss_db(26.8867).unwrap();
        assert!((lossy.overall_loss_db() - 26.8867).abs() < 1e-9);
        assert!(ch.with_overall_loss_db(3.0).is_err());
    }

    #[test]
    fn channel_file_parsing() {
        let ch = ChannelModel::from_toml_str(
            "transmittance_db = 10.0\nmisalignment = 0.002\ndet_eff = 0.5\ndark_count = 1e-7\n",
        )
        .unwrap();
        assert!((ch.transmittance_per_arm - 0.1).abs() < 1e-15);
        assert_eq!(ch.misalignment_error, 0.002);
        assert_eq!(ch.detector_efficiency, 0.5);
        assert_eq!(ch.dark_count_prob, 1e-7);
        assert!(ChannelModel::from_toml_str("det_eff = 1.5").is_err());
        assert!(ChannelModel::from_toml_str("colour = 3").is_err());
        assert_eq!(ChannelModel::from_toml_str("").unwrap(), ChannelModel::default());
    }

    #[test]
    fn ideal_single_photon_statistics() {
        let mut r = rng(11);
        let n = 40_000;
        for (basis, x, y) in [(Basis::X, false, false), (Basis::Y, false, true), (Basis::Y, true, true)] {
            let mut counts = [0usize; 3];
            for _ in 0..n {
                counts[outcome_index(ideal_bsm_single_photon(basis, x, y, &mut r).value)] += 1;
            }
            let wrong = if x ^ y { counts[0] } else { counts[1] };
            let right = if x ^ y { counts[1] } else { counts[0] };
            assert_eq!(wrong, 0);
            let frac = right as f64 / n as f64;
            assert!((frac - 0.5).abs() < 5.0 * (0.25 / n as f64).sqrt(), "{frac}");
        }
    }

    #[test]
    fn ideal_outcome_pattern_agrees_with_value() {
        let mut r = rng(2);
        for _ in 0..1000 {
            let o = ideal_bsm_single_photon(Basis::X, true, false, &mut r);
            assert_eq!(o.pattern.classify(), o.value);
        }
    }

    #[test]
    fn vacuum_is_always_inconclusive() {
        let ch = ChannelModel {
            dark_count_prob: 0.0,
            ..ChannelModel::default()
        };
        let mut r = rng(3);
        for _ in 0..1000 {
            let pulse = PulsePair {
                state_v1: bb(Basis::X, false),
                state_v2: bb(Basis::Y, true),
                intensity_v1: 0.0,
                intensity_v2: 0.0,
                encoding: random_phases(&mut r),
            };
            let o = coherent_bsm(&pulse, &ch, &mut r).unwrap();
            assert_eq!(o.pattern, ClickPattern(0));
        }
    }

    #[test]
    fn coherent_interference_cancels_one_port() {
        // equal intensities, identical polarization, zero relative phase:
        // everything exits port 1
        let ch = ChannelModel::ideal();
        let s = bb(Basis::X, false);
        let i = detector_intensities(s, s, 0.7, 0.7, 0.3, 0.3, &ch);
        assert!(i[2] < 1e-15 && i[3] < 1e-15);
        assert!((i[0] + i[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn network_conserves_energy() {
        let ch = ChannelModel {
            transmittance_per_arm: 0.37,
            ..ChannelModel::default()
        };
        let mut r = rng(4);
        for _ in 0..200 {
            let v1 = bb(Basis::from_bit(r.gen()), r.gen());
            let v2 = bb(Basis::from_bit(r.gen()), r.gen());
            let (u, v) = (r.gen::<f64>(), r.gen::<f64>());
            let (p1, p2) = (r.gen::<f64>() * 7.0, r.gen::<f64>() * 7.0);
            let total: f64 = detector_intensities(v1, v2, u, v, p1, p2, &ch).iter().sum();
            assert!((total - (u + v) * ch.arm_efficiency()).abs() < 1e-12);
        }
    }

    #[test]
    fn fock_single_pair_ideal_statistics() {
        let backend = FockBackend::new(ChannelModel::ideal(), DEFAULT_FOCK_CUTOFF).unwrap();
        let s = bb(Basis::X, false);
        let p = backend.outcome_probabilities(s, s, 1, 1).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && p[1].abs() < 1e-12, "{p:?}");
        let t = bb(Basis::X, true);
        let p = backend.outcome_probabilities(s, t, 1, 1).unwrap();
        assert!((p[1] - 0.5).abs() < 1e-12 && p[0].abs() < 1e-12, "{p:?}");
        let c = bb(Basis::Y, false);
        let p = backend.outcome_probabilities(c, c, 1, 1).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && p[1].abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn single_photon_cannot_make_a_coincidence() {
        let ch = ChannelModel {
            dark_count_prob: 0.0,
            ..ChannelModel::default()
        };
        let backend = FockBackend::new(ch, DEFAULT_FOCK_CUTOFF).unwrap();
        let s = bb(Basis::Y, true);
        let p = backend.outcome_probabilities(s, s, 1, 0).unwrap();
        assert_eq!(p[2], 1.0);
        let mut r = rng(6);
        let pulse = PulsePair {
            state_v1: s,
            state_v2: s,
            intensity_v1: 0.1,
            intensity_v2: 0.1,
            encoding: PulseEncoding::Photons { v1: 1, v2: 0 },
        };
        for _ in 0..1000 {
            assert_eq!(fock_bsm(&pulse, &ch, &mut r).unwrap().value, Outcome::Inconclusive);
        }
    }

    #[test]
    fn lossless_tables_are_normalized() {
        let backend = FockBackend::new(ChannelModel::default(), 6).unwrap();
        for class in 0..4 {
            for k in 0..=6u32 {
                for l in 0..=(6 - k) {
                    let s: f64 = backend.tables[class][k as usize][l as usize].iter().sum();
                    assert!((s - 1.0).abs() < 1e-12, "{class} {k} {l} {s}");
                }
            }
        }
    }

    #[test]
    fn fock_cutoff_is_enforced() {
        let backend = FockBackend::new(ChannelModel::default(), 4).unwrap();
        let s = bb(Basis::X, false);
        assert!(matches!(
            backend.outcome_probabilities(s, s, 3, 2),
            Err(Error::PhotonCutoff { total: 5, cutoff: 4 })
        ));
    }

    #[test]
    fn misalignment_sets_single_photon_error_rate() {
        let ch = ChannelModel {
            dark_count_prob: 0.0,
            ..ChannelModel::default()
        };
        let backend = FockBackend::new(ch, 4).unwrap();
        for basis in [Basis::X, Basis::Y] {
            for (x, y) in [(false, false), (false, true), (true, true)] {
                let p = backend.outcome_probabilities(bb(basis, x), bb(basis, y), 1, 1).unwrap();
                let wrong = if x ^ y { p[0] } else { p[1] };
                let qber = wrong / (p[0] + p[1]);
                assert!((qber - 0.001).abs() < 1e-12, "{qber}");
            }
        }
    }

    #[test]
    fn coherent_average_equals_poisson_mixture_of_fock() {
        let ch = ChannelModel {
            transmittance_per_arm: 0.3,
            dark_count_prob: 1e-4,
            ..ChannelModel::default()
        };
        let cutoff = 16;
        let backend = FockBackend::new(ch, cutoff).unwrap();
        for (u, v) in [(0.1, 0.1), (0.4, 0.05), (0.0, 0.3)] {
            let analytic = expected_gain_error(u, v, &ch).unwrap();
            let mut gain = 0.0;
            let mut errors = 0.0;
            for parity in [false, true] {
                let v1 = bb(Basis::X, false);
                let v2 = bb(Basis::X, parity);
                for k in 0..=cutoff {
                    for l in 0..=(cutoff - k) {
                        let w = poisson(k, u) * poisson(l, v);
                        let p = backend.outcome_probabilities(v1, v2, k, l).unwrap();
                        gain += 0.5 * w * (p[0] + p[1]);
                        errors += 0.5 * w * if parity { p[0] } else { p[1] };
                    }
                }
            }
            assert!((analytic.gain - gain).abs() < 1e-10, "{analytic:?} {gain}");
            assert!((analytic.error_gain() - errors).abs() < 1e-10);
        }
    }

    fn poisson(k: u32, mean: f64) -> f64 {
        (-mean).exp() * mean.powi(k as i32) / factorial(k)
    }

    #[test]
    fn dark_count_only_gain() {
        let d = 1e-3;
        let ch = ChannelModel {
            dark_count_prob: d,
            ..ChannelModel::default()
        };
        let g = expected_gain_error(0.0, 0.0, &ch).unwrap();
        // four accepting two-click patterns, each exactly two darks
        let closed_form = 4.0 * d * d * (1.0 - d) * (1.0 - d);
        assert!((g.gain - closed_form).abs() < 1e-15);
        assert!((g.error_rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ideal_limit_has_no_single_photon_errors() {
        let ch = ChannelModel {
            misalignment_error: 0.0,
            dark_count_prob: 0.0,
            ..ChannelModel::default()
        };
        let backend = FockBackend::new(ch, 4).unwrap();
        let p = backend
            .outcome_probabilities(bb(Basis::Y, false), bb(Basis::Y, false), 1, 1)
            .unwrap();
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn gain_decreases_with_loss() {
        let base = ChannelModel::default();
        let mut last = f64::INFINITY;
        for loss in [7.0, 10.0, 20.0, 30.0, 40.0, 50.0] {
            let ch = base.with_overall_loss_db(loss).unwrap();
            let g = expected_gain_error(0.3, 0.1, &ch).unwrap().gain;
            assert!(g < last, "{loss} {g}");
            last = g;
        }
    }

    #[test]
    fn wrong_encoding_is_rejected() {
        let mut r = rng(1);
        let s = bb(Basis::X, false);
        let photons = PulsePair {
            state_v1: s,
            state_v2: s,
            intensity_v1: 0.1,
            intensity_v2: 0.1,
            encoding: PulseEncoding::Photons { v1: 1, v2: 1 },
        };
        assert!(coherent_bsm(&photons, &ChannelModel::default(), &mut r).is_err());
        let phases = PulsePair {
            encoding: PulseEncoding::Phases { v1: 0.0, v2: 0.0 },
            ..photons
        };
        assert!(fock_bsm(&phases, &ChannelModel::default(), &mut r).is_err());
    }
}
