//! Protocol engines for the qubit and decoy-state variants.
//!
//! Round `i` starts at `t_i = 2τ·i`. The verifiers time their pulses to
//! meet at the claimed position at `t_i + τ` and expect the outcome back by
//! `t_i + τ + d(pos*, V_j)`. Timing is checked by light-cone arithmetic on
//! the line (unit light speed) rather than by simulating propagation.

use std::fmt;
use std::str::FromStr;

use rand::distributions::Distribution;
use rand::{Rng, RngCore};
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::bounds::{AttackStrategy, Response};
use crate::decoy::{decoy_estimate, CountTable, Fluctuation, IntensityConfig, PhotonTruth};
use crate::error::{invalid, Error, Result};
use crate::optics::{FockBackend, PulseEncoding, PulsePair};
use crate::quantum::{linear_optics_bsm_povm, PovmLabel, PreparedQubit};
use crate::types::{Basis, BasisBit, Outcome};

/// Slack for exactly tight light-cone comparisons.
const TIMING_EPS: f64 = 1e-12;

/// Collinear verifier geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub pos_v1: f64,
    pub pos_v2: f64,
    pub pos_claimed: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            pos_v1: 0.0,
            pos_v2: 2.0,
            pos_claimed: 1.0,
        }
    }
}

impl Geometry {
    pub fn new(pos_v1: f64, pos_v2: f64, pos_claimed: f64) -> Result<Self> {
        let g = Self {
            pos_v1,
            pos_v2,
            pos_claimed,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.segment();
        if !(self.pos_claimed > lo && self.pos_claimed < hi) {
            return Err(invalid(
                "pos_claimed",
                format!(
                    "{} is not strictly between {} and {}",
                    self.pos_claimed, self.pos_v1, self.pos_v2
                ),
            ));
        }
        Ok(())
    }

    fn segment(&self) -> (f64, f64) {
        (self.pos_v1.min(self.pos_v2), self.pos_v1.max(self.pos_v2))
    }

    /// Travel time between V1 and the claimed position.
    pub fn tau(&self) -> f64 {
        (self.pos_claimed - self.pos_v1).abs()
    }

    pub fn round_start(&self, index: u64) -> f64 {
        2.0 * self.tau() * index as f64
    }

    fn send_times(&self, t: f64) -> (f64, f64) {
        let tau = self.tau();
        (
            t + tau - (self.pos_claimed - self.pos_v1).abs(),
            t + tau - (self.pos_v2 - self.pos_claimed).abs(),
        )
    }

    fn deadlines(&self, t: f64) -> (f64, f64) {
        let tau = self.tau();
        (
            t + tau + (self.pos_claimed - self.pos_v1).abs(),
            t + tau + (self.pos_v2 - self.pos_claimed).abs(),
        )
    }

    pub fn contains(&self, p: f64) -> bool {
        let (lo, hi) = self.segment();
        p >= lo && p <= hi
    }
}

/// Where the responding party sits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Placement {
    /// One party receiving both pulses at `p`.
    Joint(f64),
    /// Two colluding parties, the first nearer V1, allowed one exchange.
    Pair(f64, f64),
}

impl Placement {
    fn positions(&self) -> Vec<f64> {
        match *self {
            Placement::Joint(p) => vec![p],
            Placement::Pair(a, b) => vec![a, b],
        }
    }
}

/// True when the responders can get an outcome to both verifiers in time.
/// Takes the placement rather than the round, since it is fixed for a run.
pub fn timing_check(placement: &Placement, geometry: &Geometry) -> bool {
    let t = 0.0;
    let (s1, s2) = geometry.send_times(t);
    let (d1, d2) = geometry.deadlines(t);
    let (v1, v2) = (geometry.pos_v1, geometry.pos_v2);
    match *placement {
        Placement::Joint(p) => {
            let ready = (s1 + (p - v1).abs()).max(s2 + (v2 - p).abs());
            ready + (p - v1).abs() <= d1 + TIMING_EPS && ready + (v2 - p).abs() <= d2 + TIMING_EPS
        }
        Placement::Pair(p1, p2) => {
            let a1 = s1 + (p1 - v1).abs();
            let a2 = s2 + (v2 - p2).abs();
            let gap = (p2 - p1).abs();
            let k1 = a1.max(a2 + gap);
            let k2 = a2.max(a1 + gap);
            k1 + (p1 - v1).abs() <= d1 + TIMING_EPS && k2 + (v2 - p2).abs() <= d2 + TIMING_EPS
        }
    }
}

/// Anything that answers the verifiers' challenges in the qubit protocol.
///
/// Responders only see the two prepared qubits, never the verifiers'
/// labels, and all of their randomness comes from the supplied stream.
pub trait Responder: Sync {
    fn name(&self) -> &str;
    fn placement(&self, geometry: &Geometry) -> Placement;
    fn respond(&self, near_v1: &PreparedQubit, near_v2: &PreparedQubit, rng: &mut dyn RngCore) -> Response;
}

/// Honest prover at the claimed position running the linear-optics BSM.
#[derive(Clone, Copy, Debug, Default)]
pub struct HonestProver;

fn honest_outcome(q1: &PreparedQubit, q2: &PreparedQubit, rng: &mut dyn RngCore) -> Outcome {
    match PreparedQubit::measure_joint(q1, q2, &linear_optics_bsm_povm(), rng) {
        PovmLabel::Zero => Outcome::Zero,
        PovmLabel::One => Outcome::One,
        PovmLabel::Inconclusive => Outcome::Inconclusive,
    }
}

impl Responder for HonestProver {
    fn name(&self) -> &str {
        "honest"
    }

    fn placement(&self, geometry: &Geometry) -> Placement {
        Placement::Joint(geometry.pos_claimed)
    }

    fn respond(&self, q1: &PreparedQubit, q2: &PreparedQubit, rng: &mut dyn RngCore) -> Response {
        Response::both(honest_outcome(q1, q2, rng))
    }
}

impl Responder for AttackStrategy {
    fn name(&self) -> &str {
        &self.name
    }

    /// Straddles the claimed position, halfway to each verifier.
    fn placement(&self, g: &Geometry) -> Placement {
        Placement::Pair(
            0.5 * (g.pos_v1 + g.pos_claimed),
            0.5 * (g.pos_claimed + g.pos_v2),
        )
    }

    fn respond(&self, q1: &PreparedQubit, q2: &PreparedQubit, rng: &mut dyn RngCore) -> Response {
        AttackStrategy::respond(self, q1, q2, rng)
    }
}

/// Honest measurement with every conclusive answer inverted.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlippedProver;

impl Responder for FlippedProver {
    fn name(&self) -> &str {
        "flipped"
    }

    fn placement(&self, g: &Geometry) -> Placement {
        Placement::Joint(g.pos_claimed)
    }

    fn respond(&self, q1: &PreparedQubit, q2: &PreparedQubit, rng: &mut dyn RngCore) -> Response {
        let z = honest_outcome(q1, q2, rng);
        Response::both(z.parity().map_or(Outcome::Inconclusive, |p| Outcome::from_parity(!p)))
    }
}

/// Sends V2 the opposite of every conclusive answer it sends V1.
#[derive(Clone, Copy, Debug, Default)]
pub struct InconsistentProver;

impl Responder for InconsistentProver {
    fn name(&self) -> &str {
        "inconsistent"
    }

    fn placement(&self, g: &Geometry) -> Placement {
        Placement::Joint(g.pos_claimed)
    }

    fn respond(&self, q1: &PreparedQubit, q2: &PreparedQubit, rng: &mut dyn RngCore) -> Response {
        let z = honest_outcome(q1, q2, rng);
        Response {
            to_v1: z,
            to_v2: z.parity().map_or(Outcome::Inconclusive, |p| Outcome::from_parity(!p)),
        }
    }
}

/// A single party away from the claimed position performing the full BSM.
#[derive(Clone, Copy, Debug)]
pub struct MisplacedProver {
    pub position: f64,
}

impl Responder for MisplacedProver {
    fn name(&self) -> &str {
        "misplaced"
    }

    fn placement(&self, _: &Geometry) -> Placement {
        Placement::Joint(self.position)
    }

    fn respond(&self, q1: &PreparedQubit, q2: &PreparedQubit, rng: &mut dyn RngCore) -> Response {
        Response::both(honest_outcome(q1, q2, rng))
    }
}

/// Any responder moved to an explicit placement.
pub struct Relocated<'a> {
    pub inner: &'a dyn Responder,
    pub placement: Placement,
}

impl Responder for Relocated<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn placement(&self, _: &Geometry) -> Placement {
        self.placement
    }

    fn respond(&self, q1: &PreparedQubit, q2: &PreparedQubit, rng: &mut dyn RngCore) -> Response {
        self.inner.respond(q1, q2, rng)
    }
}

/// One protocol round as seen by the verifiers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub index: u64,
    pub basis: Basis,
    pub x: bool,
    pub y: bool,
    /// Intensities `(g_i, h_i)` chosen by V1 and V2 (decoy rounds only).
    pub intensities: Option<(f64, f64)>,
    /// Outcome received by V1.
    pub outcome: Outcome,
    pub arrived_in_time: bool,
    pub outcomes_consistent: bool,
}

impl RoundRecord {
    pub fn is_error(&self) -> bool {
        self.outcome.is_error(self.x, self.y)
    }
}

fn bit_char(b: bool) -> char {
    if b {
        '1'
    } else {
        '0'
    }
}

/// Transcript line: `i,b,x,y,g,h,z,flags` with `-` for absent intensities
/// and `flags` = timing bit followed by consistency bit.
impl fmt::Display for RoundRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (g, h) = match self.intensities {
            Some((g, h)) => (g.to_string(), h.to_string()),
            None => ("-".into(), "-".into()),
        };
        write!(
            f,
            "{},{},{},{},{},{},{},{}{}",
            self.index,
            bit_char(self.basis.bit()),
            bit_char(self.x),
            bit_char(self.y),
            g,
            h,
            self.outcome,
            bit_char(self.arrived_in_time),
            bit_char(self.outcomes_consistent),
        )
    }
}

impl FromStr for RoundRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 8 {
            return Err(format!("expected 8 fields, found {}", f.len()));
        }
        let bit = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(format!("invalid bit `{other}`")),
        };
        let index = f[0].parse().map_err(|_| format!("invalid index `{}`", f[0]))?;
        let intensities = match (f[4], f[5]) {
            ("-", "-") => None,
            (g, h) => Some((
                g.parse().map_err(|_| format!("invalid intensity `{g}`"))?,
                h.parse().map_err(|_| format!("invalid intensity `{h}`"))?,
            )),
        };
        let flags: Vec<char> = f[7].chars().collect();
        if flags.len() != 2 {
            return Err(format!("invalid flags `{}`", f[7]));
        }
        Ok(Self {
            index,
            basis: Basis::from_bit(bit(f[1])?),
            x: bit(f[2])?,
            y: bit(f[3])?,
            intensities,
            outcome: f[6].parse()?,
            arrived_in_time: bit(&flags[0].to_string())?,
            outcomes_consistent: bit(&flags[1].to_string())?,
        })
    }
}

/// Writes one record per line.
pub fn write_transcript(records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 24);
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_transcript(text: &str) -> Result<Vec<RoundRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| l.parse().map_err(|reason| Error::Parse { line: i + 1, reason }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictValue {
    Y,
    N,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictReason {
    TimingAbort,
    InconsistentOutcomes,
    QuotaFail,
    ErrorRateFail,
    Accept,
}

/// Numbers behind a verdict.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerdictStats {
    pub rounds: u64,
    /// Conclusive rounds (`|Z|`) in the qubit protocol.
    pub conclusive: u64,
    /// Errors counted on the tested subset.
    pub errors: u64,
    pub s_lb: Option<u64>,
    pub r_ub: Option<u64>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: VerdictValue,
    pub reason: VerdictReason,
    pub stats: VerdictStats,
}

impl Verdict {
    fn new(reason: VerdictReason, stats: VerdictStats) -> Self {
        let value = if reason == VerdictReason::Accept {
            VerdictValue::Y
        } else {
            VerdictValue::N
        };
        Self {
            value,
            reason,
            stats,
        }
    }

    pub fn accepted(&self) -> bool {
        self.value == VerdictValue::Y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Qubit,
    Decoy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub m: u64,
    pub n_th: u64,
    pub delta_th: f64,
    pub mode: Mode,
    pub decoy: Option<IntensityConfig>,
}

impl ProtocolParams {
    pub fn qubit(m: u64, n_th: u64, delta_th: f64) -> Result<Self> {
        let p = Self {
            m,
            n_th,
            delta_th,
            mode: Mode::Qubit,
            decoy: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn decoy(m: u64, n_th: u64, delta_th: f64, cfg: IntensityConfig) -> Result<Self> {
        let p = Self {
            m,
            n_th,
            delta_th,
            mode: Mode::Decoy,
            decoy: Some(cfg),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(invalid("m", "at least one round is required"));
        }
        if self.n_th == 0 || self.n_th > self.m {
            return Err(invalid("n_th", format!("{} is outside [1, m = {}]", self.n_th, self.m)));
        }
        if !(0.0..0.25).contains(&self.delta_th) {
            return Err(invalid("delta_th", format!("{} is outside [0, 1/4)", self.delta_th)));
        }
        match (self.mode, &self.decoy) {
            (Mode::Decoy, None) => Err(invalid("decoy", "decoy mode needs an intensity configuration")),
            (Mode::Decoy, Some(cfg)) => cfg.validate(),
            (Mode::Qubit, _) => Ok(()),
        }
    }
}

fn draw_labels<R: Rng + ?Sized>(rng: &mut R) -> (Basis, bool, bool) {
    (Basis::from_bit(rng.gen()), rng.gen(), rng.gen())
}

fn check_placement(placement: &Placement, geometry: &Geometry) -> Result<()> {
    for p in placement.positions() {
        if !geometry.contains(p) {
            return Err(Error::ResponderOutOfRange(p));
        }
    }
    Ok(())
}

/// Runs one qubit-protocol round. The verifiers' private labels come from
/// `rng` before the responder is invoked.
pub fn run_round<R: Rng>(
    index: u64,
    responder: &dyn Responder,
    geometry: &Geometry,
    rng: &mut R,
) -> Result<RoundRecord> {
    let placement = responder.placement(geometry);
    check_placement(&placement, geometry)?;
    let (basis, x, y) = draw_labels(rng);
    let q1 = PreparedQubit::prepare(BasisBit::new(basis, x));
    let q2 = PreparedQubit::prepare(BasisBit::new(basis, y));
    let resp = responder.respond(&q1, &q2, rng);
    Ok(RoundRecord {
        index,
        basis,
        x,
        y,
        intensities: None,
        outcome: resp.to_v1,
        arrived_in_time: timing_check(&placement, geometry),
        outcomes_consistent: resp.to_v1 == resp.to_v2,
    })
}

/// Outcome of the quota step.
#[derive(Clone, Debug, PartialEq)]
pub enum QuotaResult {
    /// Indices (into the record slice) of the `n_th` rounds to test.
    Selected(Vec<usize>),
    Fail(Verdict),
}

/// Keeps `n_th` conclusive rounds chosen uniformly without replacement.
pub fn quota_check<R: Rng + ?Sized>(records: &[RoundRecord], n_th: u64, rng: &mut R) -> QuotaResult {
    let conclusive: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.outcome.is_conclusive())
        .map(|(i, _)| i)
        .collect();
    if (conclusive.len() as u64) < n_th || n_th == 0 {
        return QuotaResult::Fail(Verdict::new(
            VerdictReason::QuotaFail,
            VerdictStats {
                rounds: records.len() as u64,
                conclusive: conclusive.len() as u64,
                ..Default::default()
            },
        ));
    }
    let picks = rand::seq::index::sample(rng, conclusive.len(), n_th as usize);
    let mut chosen: Vec<usize> = picks.into_iter().map(|i| conclusive[i]).collect();
    chosen.sort_unstable();
    QuotaResult::Selected(chosen)
}

/// Full qubit-protocol decision over a completed transcript: timing and
/// consistency aborts, quota, then the error rate on the tested subset
/// (errors / `n_th`).
pub fn verdict_qubit<R: Rng + ?Sized>(records: &[RoundRecord], params: &ProtocolParams, rng: &mut R) -> Verdict {
    let base = VerdictStats {
        rounds: records.len() as u64,
        conclusive: records.iter().filter(|r| r.outcome.is_conclusive()).count() as u64,
        ..Default::default()
    };
    if records.iter().any(|r| !r.arrived_in_time) {
        return Verdict::new(VerdictReason::TimingAbort, base);
    }
    if records.iter().any(|r| !r.outcomes_consistent) {
        return Verdict::new(VerdictReason::InconsistentOutcomes, base);
    }
    let chosen = match quota_check(records, params.n_th, rng) {
        QuotaResult::Selected(c) => c,
        QuotaResult::Fail(v) => return v,
    };
    let errors = chosen.iter().filter(|&&i| records[i].is_error()).count() as u64;
    let ratio = errors as f64 / params.n_th as f64;
    let stats = VerdictStats {
        errors,
        ratio: Some(ratio),
        ..base
    };
    if ratio <= params.delta_th {
        Verdict::new(VerdictReason::Accept, stats)
    } else {
        Verdict::new(VerdictReason::ErrorRateFail, stats)
    }
}

/// Decoy-protocol decision from the accumulated count table.
pub fn verdict_decoy(counts: &CountTable, params: &ProtocolParams, nu: f64) -> Result<Verdict> {
    let cfg = params
        .decoy
        .ok_or_else(|| invalid("decoy", "decoy verdict needs an intensity configuration"))?;
    let est = decoy_estimate(counts, &cfg, Fluctuation::TotalCount { nu })?;
    let mut stats = VerdictStats {
        conclusive: counts.n_obs_sum(),
        errors: counts.m_obs_sum(),
        s_lb: Some(est.s_lb),
        ..Default::default()
    };
    if est.s_lb < params.n_th || est.s_lb == 0 {
        return Ok(Verdict::new(VerdictReason::QuotaFail, stats));
    }
    stats.r_ub = Some(est.r_ub);
    stats.ratio = Some(est.ratio);
    Ok(Verdict::new(
        if est.ratio <= params.delta_th {
            VerdictReason::Accept
        } else {
            VerdictReason::ErrorRateFail
        },
        stats,
    ))
}

/// A finished protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub verdict: Verdict,
    pub records: Vec<RoundRecord>,
}

/// Runs the qubit protocol round by round, aborting as soon as a round
/// misses its deadline or the two verifiers receive different outcomes.
pub fn run_qubit_protocol<R: Rng>(
    params: &ProtocolParams,
    responder: &dyn Responder,
    geometry: &Geometry,
    rng: &mut R,
) -> Result<ProtocolRun> {
    params.validate()?;
    geometry.validate()?;
    let mut records = Vec::with_capacity(params.m as usize);
    for i in 0..params.m {
        let rec = run_round(i, responder, geometry, rng)?;
        let abort = !rec.arrived_in_time || !rec.outcomes_consistent;
        records.push(rec);
        if abort {
            break;
        }
    }
    let verdict = verdict_qubit(&records, params, rng);
    Ok(ProtocolRun { verdict, records })
}

/// A finished decoy-protocol run with simulation ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoyRun {
    pub verdict: Verdict,
    pub counts: CountTable,
    pub truth: PhotonTruth,
}

fn pick_intensity<R: Rng + ?Sized>(cfg: &IntensityConfig, rng: &mut R) -> usize {
    let u = rng.gen::<f64>();
    if u < cfg.prob[0] {
        0
    } else if u < cfg.prob[0] + cfg.prob[1] {
        1
    } else {
        2
    }
}

fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u32).unwrap_or(0)
}

/// A decoy round with its intensity indices and emitted photon numbers.
pub type DecoyRound = (RoundRecord, (usize, usize), (u32, u32));

/// Samples one honest decoy round pulse by pulse with the Fock backend.
/// Returns the record, the intensity indices and the emitted photon numbers.
/// Photon numbers above the backend cutoff count as inconclusive.
pub fn run_decoy_round<R: Rng>(
    index: u64,
    cfg: &IntensityConfig,
    backend: &FockBackend,
    rng: &mut R,
) -> Result<DecoyRound> {
    let (basis, x, y) = draw_labels(rng);
    let (iu, iv) = (pick_intensity(cfg, rng), pick_intensity(cfg, rng));
    let (u, v) = (cfg.mu[iu], cfg.mu[iv]);
    let (k, l) = (poisson_draw(u, rng), poisson_draw(v, rng));
    let outcome = if k + l > backend.cutoff() {
        Outcome::Inconclusive
    } else {
        let pulse = PulsePair {
            state_v1: BasisBit::new(basis, x),
            state_v2: BasisBit::new(basis, y),
            intensity_v1: u,
            intensity_v2: v,
            encoding: PulseEncoding::Photons { v1: k, v2: l },
        };
        backend.sample(&pulse, rng)?.value
    };
    let rec = RoundRecord {
        index,
        basis,
        x,
        y,
        intensities: Some((u, v)),
        outcome,
        arrived_in_time: true,
        outcomes_consistent: true,
    };
    Ok((rec, (iu, iv), (k, l)))
}

/// Honest decoy protocol: `m` rounds, counts accumulated per intensity
/// pair, ground truth per photon-number pair, then the decoy verdict.
pub fn run_decoy_protocol<R: Rng>(
    params: &ProtocolParams,
    backend: &FockBackend,
    nu: f64,
    rng: &mut R,
) -> Result<DecoyRun> {
    params.validate()?;
    let cfg = params
        .decoy
        .ok_or_else(|| invalid("decoy", "decoy protocol needs an intensity configuration"))?;
    let mut counts = CountTable::default();
    let mut truth = PhotonTruth::new(backend.cutoff());
    for i in 0..params.m {
        let (rec, (iu, iv), (k, l)) = run_decoy_round(i, &cfg, backend, rng)?;
        if rec.outcome.is_conclusive() {
            counts.record(iu, iv, rec.is_error());
            truth.record(k, l, rec.is_error())?;
        }
    }
    let mut verdict = verdict_decoy(&counts, params, nu)?;
    verdict.stats.rounds = params.m;
    Ok(DecoyRun {
        verdict,
        counts,
        truth,
    })
}
