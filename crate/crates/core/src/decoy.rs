//! Three-intensity decoy-state estimation.
//!
//! Each verifier independently picks an intensity from `{μ1, μ2, μ3}`.
//! From the 3×3 table of observed detections and errors, Gaussian
//! elimination over the photon-number expansion gives a lower bound on
//! single-photon-pair detections and an upper bound on their errors.
//!
//! Because `ξ^{u,v} ñ^{u,v} = Σ_{k,l} u^k v^l/(k! l!) · s_{k,l}/τ_{k,l}`, the
//! closed-form bounds are bounds on the yield-scaled counts `s_{1,1}/τ_{1,1}`
//! and `r_{1,1}/τ_{1,1}`; their ratio is the single-photon error rate.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bounds::union_failure;
use crate::error::{invalid, Error, Result};
use crate::optics::factorial;

/// Intensities `μ1 > μ2 > μ3` and their selection probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityConfig {
    pub mu: [f64; 3],
    pub prob: [f64; 3],
}

impl Default for IntensityConfig {
    fn default() -> Self {
        Self {
            mu: [0.3, 0.1, 0.001],
            prob: [0.5, 0.25, 0.25],
        }
    }
}

impl IntensityConfig {
    pub fn new(mu: [f64; 3], prob: [f64; 3]) -> Result<Self> {
        let cfg = Self { mu, prob };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let [m1, m2, m3] = self.mu;
        if !(m3 >= 0.0 && m2 > m3 && m1 > m2 + m3) || !m1.is_finite() {
            return Err(Error::Degenerate(format!(
                "intensities ({m1}, {m2}, {m3}) need mu1 > mu2 + mu3 and mu2 > mu3 >= 0"
            )));
        }
        if self.prob.iter().any(|p| !(*p > 0.0)) {
            return Err(invalid("prob", format!("{:?} must be positive", self.prob)));
        }
        let total: f64 = self.prob.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("prob", format!("{:?} sums to {total}", self.prob)));
        }
        Ok(())
    }

    /// `ξ^{u,v} = e^{u+v} / (p_u p_v)`.
    pub fn xi(&self, u: usize, v: usize) -> f64 {
        (self.mu[u] + self.mu[v]).exp() / (self.prob[u] * self.prob[v])
    }

    pub fn max_intensity(&self) -> f64 {
        self.mu.iter().copied().fold(0.0, f64::max)
    }
}

/// Source of per-cell detection (`n`) and error (`m`) counts.
pub trait CountSource {
    fn n(&self, u: usize, v: usize) -> f64;
    fn m(&self, u: usize, v: usize) -> f64;
    fn n_total(&self) -> f64;
    fn m_total(&self) -> f64;
}

/// Observed detection and error counts per intensity pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub n_obs: [[u64; 3]; 3],
    pub m_obs: [[u64; 3]; 3],
}

impl CountTable {
    pub fn new(n_obs: [[u64; 3]; 3], m_obs: [[u64; 3]; 3]) -> Result<Self> {
        let t = Self { n_obs, m_obs };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for u in 0..3 {
            for v in 0..3 {
                if self.m_obs[u][v] > self.n_obs[u][v] {
                    return Err(invalid(
                        "m_obs",
                        format!(
                            "cell ({u}, {v}) has {} errors but {} detections",
                            self.m_obs[u][v], self.n_obs[u][v]
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n_obs_sum(&self) -> u64 {
        self.n_obs.iter().flatten().sum()
    }

    pub fn m_obs_sum(&self) -> u64 {
        self.m_obs.iter().flatten().sum()
    }

    pub fn record(&mut self, u: usize, v: usize, error: bool) {
        self.n_obs[u][v] += 1;
        if error {
            self.m_obs[u][v] += 1;
        }
    }

    pub fn merge(&mut self, other: &CountTable) {
        for u in 0..3 {
            for v in 0..3 {
                self.n_obs[u][v] += other.n_obs[u][v];
                self.m_obs[u][v] += other.m_obs[u][v];
            }
        }
    }

    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            n_obs: self.n_obs.map(|r| r.map(|c| c * factor)),
            m_obs: self.m_obs.map(|r| r.map(|c| c * factor)),
        }
    }

    /// Two 3×3 CSV blocks (`n_obs`, then `m_obs`) with intensity labels on
    /// the header row and first column.
    pub fn to_csv(&self, cfg: &IntensityConfig) -> String {
        let mut out = String::new();
        for (name, block) in [("n_obs", &self.n_obs), ("m_obs", &self.m_obs)] {
            let _ = writeln!(out, "{name},{},{},{}", cfg.mu[0], cfg.mu[1], cfg.mu[2]);
            for (u, row) in block.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", cfg.mu[u], row[0], row[1], row[2]);
            }
        }
        out
    }

    /// Parses the format written by [`CountTable::to_csv`]. Lines starting
    /// with `#` and blank lines are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut blocks: Vec<(String, [[u64; 3]; 3])> = Vec::new();
        let mut current: Option<(String, [[u64; 3]; 3], usize)> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            match current.take() {
                None => {
                    if fields[0] != "n_obs" && fields[0] != "m_obs" {
                        return Err(Error::Parse {
                            line: line_no,
                            reason: format!("expected block header, found `{}`", fields[0]),
                        });
                    }
                    current = Some((fields[0].to_string(), [[0; 3]; 3], 0));
                }
                Some((name, mut block, row)) => {
                    for c in 0..3 {
                        block[row][c] = fields[c + 1].parse().map_err(|_| Error::Parse {
                            line: line_no,
                            reason: format!("`{}` is not a count", fields[c + 1]),
                        })?;
                    }
                    if row == 2 {
                        blocks.push((name, block));
                    } else {
                        current = Some((name, block, row + 1));
                    }
                }
            }
        }
        if current.is_some() {
            return Err(Error::Parse {
                line: text.lines().count(),
                reason: "truncated block".into(),
            });
        }
        let find = |name: &str| {
            blocks
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, b)| *b)
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    reason: format!("missing `{name}` block"),
                })
        };
        Self::new(find("n_obs")?, find("m_obs")?)
    }
}

impl CountSource for CountTable {
    fn n(&self, u: usize, v: usize) -> f64 {
        self.n_obs[u][v] as f64
    }
    fn m(&self, u: usize, v: usize) -> f64 {
        self.m_obs[u][v] as f64
    }
    fn n_total(&self) -> f64 {
        self.n_obs_sum() as f64
    }
    fn m_total(&self) -> f64 {
        self.m_obs_sum() as f64
    }
}

/// Real-valued expected counts `ñ^{u,v}`, `m̃^{u,v}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub n: [[f64; 3]; 3],
    pub m: [[f64; 3]; 3],
}

impl ExpectedCounts {
    /// Rounds every cell half-to-even.
    pub fn rounded(&self) -> CountTable {
        let round = |x: f64| x.max(0.0).round_ties_even() as u64;
        CountTable {
            n_obs: self.n.map(|r| r.map(round)),
            m_obs: self.m.map(|r| r.map(round)),
        }
    }
}

impl CountSource for ExpectedCounts {
    fn n(&self, u: usize, v: usize) -> f64 {
        self.n[u][v]
    }
    fn m(&self, u: usize, v: usize) -> f64 {
        self.m[u][v]
    }
    fn n_total(&self) -> f64 {
        self.n.iter().flatten().sum()
    }
    fn m_total(&self) -> f64 {
        self.m.iter().flatten().sum()
    }
}

/// Which of the two count tables a cell read touched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CellKind {
    Detections,
    Errors,
}

/// Wraps a [`CountSource`] and records which cells are read.
pub struct AccessLog<'a, S: CountSource> {
    inner: &'a S,
    cells: RefCell<BTreeSet<(CellKind, usize, usize)>>,
}

impl<'a, S: CountSource> AccessLog<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        Self {
            inner,
            cells: RefCell::new(BTreeSet::new()),
        }
    }

    pub fn cells(&self) -> Vec<(CellKind, usize, usize)> {
        self.cells.borrow().iter().copied().collect()
    }
}

impl<S: CountSource> CountSource for AccessLog<'_, S> {
    fn n(&self, u: usize, v: usize) -> f64 {
        self.cells.borrow_mut().insert((CellKind::Detections, u, v));
        self.inner.n(u, v)
    }
    fn m(&self, u: usize, v: usize) -> f64 {
        self.cells.borrow_mut().insert((CellKind::Errors, u, v));
        self.inner.m(u, v)
    }
    fn n_total(&self) -> f64 {
        self.inner.n_total()
    }
    fn m_total(&self) -> f64 {
        self.inner.m_total()
    }
}

/// How statistical fluctuations widen the estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Fluctuation {
    /// Expected-value form: no fluctuation terms.
    None,
    /// `±√(ν n)` with the total count `n` on every cell.
    TotalCount { nu: f64 },
    /// `±√(ν n^{u,v})` with each cell's own count.
    PerCell { nu: f64 },
}

impl Fluctuation {
    fn validate(&self) -> Result<()> {
        match *self {
            Fluctuation::None => Ok(()),
            Fluctuation::TotalCount { nu } | Fluctuation::PerCell { nu } => {
                if nu > 0.0 && nu.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("nu", format!("{nu} must be positive")))
                }
            }
        }
    }
}

/// `χ^{a,a} + χ^{3,3} − χ^{a,3} − χ^{3,a}` pushed up (`sign = +1`) or down
/// (`sign = −1`) by the fluctuation allowance.
fn gamma<F, T>(cfg: &IntensityConfig, a: usize, cell: F, total: T, fl: Fluctuation, sign: f64) -> f64
where
    F: Fn(usize, usize) -> f64,
    T: Fn() -> f64,
{
    const LOW: usize = 2;
    let terms = [(a, a, 1.0), (LOW, LOW, 1.0), (a, LOW, -1.0), (LOW, a, -1.0)];
    let mut g = 0.0;
    let mut slack = 0.0;
    for (u, v, s) in terms {
        let count = cell(u, v);
        let xi = cfg.xi(u, v);
        g += s * xi * count;
        slack += match fl {
            Fluctuation::None => 0.0,
            Fluctuation::TotalCount { .. } => xi,
            Fluctuation::PerCell { nu } => xi * (nu * count).sqrt(),
        };
    }
    if let Fluctuation::TotalCount { nu } = fl {
        slack *= (nu * total()).sqrt();
    }
    g + sign * slack
}

/// Result of the single-photon detection lower bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct S11Bound {
    pub s_lb: u64,
    /// Unclamped value before taking the floor.
    pub raw: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Result of the single-photon error upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct R11Bound {
    pub r_ub: u64,
    /// `γ3 / (μ2 − μ3)²` before the cap.
    pub uncapped: f64,
    pub gamma3: f64,
}

/// Lower bound on single-photon-pair detections from any count source.
pub fn s11_lower_bound<S: CountSource>(src: &S, cfg: &IntensityConfig, fl: Fluctuation) -> Result<S11Bound> {
    cfg.validate()?;
    fl.validate()?;
    let [m1, m2, m3] = cfg.mu;
    let gamma1 = gamma(cfg, 0, |u, v| src.n(u, v), || src.n_total(), fl, 1.0);
    let gamma2 = gamma(cfg, 1, |u, v| src.n(u, v), || src.n_total(), fl, -1.0);
    let num = (m1 * m1 - m3 * m3) * (m1 - m3) * gamma2 - (m2 * m2 - m3 * m3) * (m2 - m3) * gamma1;
    let den = (m1 - m3).powi(2) * (m2 - m3).powi(2) * (m1 - m2);
    let raw = num / den;
    Ok(S11Bound {
        s_lb: raw.floor().max(0.0) as u64,
        raw,
        gamma1,
        gamma2,
    })
}

/// Upper bound on single-photon-pair errors from any count source.
pub fn r11_upper_bound<S: CountSource>(
    src: &S,
    s_lb: u64,
    cfg: &IntensityConfig,
    fl: Fluctuation,
) -> Result<R11Bound> {
    cfg.validate()?;
    fl.validate()?;
    let gamma3 = gamma(cfg, 1, |u, v| src.m(u, v), || src.m_total(), fl, 1.0);
    let uncapped = gamma3 / (cfg.mu[1] - cfg.mu[2]).powi(2);
    let cap = s_lb.div_ceil(2);
    let r_ub = (uncapped.ceil().max(0.0) as u64).min(cap);
    Ok(R11Bound {
        r_ub,
        uncapped,
        gamma3,
    })
}

/// Observed-count lower bound with total-count fluctuation terms.
pub fn estimate_s11_lb(counts: &CountTable, cfg: &IntensityConfig, nu: f64) -> Result<S11Bound> {
    s11_lower_bound(counts, cfg, Fluctuation::TotalCount { nu })
}

/// Observed-count upper bound with total-count fluctuation terms.
pub fn estimate_r11_ub(counts: &CountTable, s_lb: u64, cfg: &IntensityConfig, nu: f64) -> Result<R11Bound> {
    r11_upper_bound(counts, s_lb, cfg, Fluctuation::TotalCount { nu })
}

/// Expected-value forms (no fluctuation terms).
pub fn estimate_s11_lb_expected<S: CountSource>(src: &S, cfg: &IntensityConfig) -> Result<S11Bound> {
    s11_lower_bound(src, cfg, Fluctuation::None)
}

pub fn estimate_r11_ub_expected<S: CountSource>(src: &S, s_lb: u64, cfg: &IntensityConfig) -> Result<R11Bound> {
    r11_upper_bound(src, s_lb, cfg, Fluctuation::None)
}

/// Full estimate feeding the decoy verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoyEstimate {
    pub s_lb: u64,
    pub r_ub: u64,
    /// `r_ub / s_lb`; infinite when `s_lb = 0`.
    pub ratio: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

pub fn decoy_estimate(counts: &CountTable, cfg: &IntensityConfig, fl: Fluctuation) -> Result<DecoyEstimate> {
    let s = s11_lower_bound(counts, cfg, fl)?;
    let r = r11_upper_bound(counts, s.s_lb, cfg, fl)?;
    let (eps1, eps2) = match fl {
        Fluctuation::None => (0.0, 0.0),
        Fluctuation::TotalCount { nu } | Fluctuation::PerCell { nu } => {
            (union_failure(nu, 7), union_failure(nu, 4))
        }
    };
    let ratio = if s.s_lb == 0 {
        f64::INFINITY
    } else {
        r.r_ub as f64 / s.s_lb as f64
    };
    Ok(DecoyEstimate {
        s_lb: s.s_lb,
        r_ub: r.r_ub,
        ratio,
        eps1,
        eps2,
        gamma1: s.gamma1,
        gamma2: s.gamma2,
        gamma3: r.gamma3,
    })
}

/// Simulation-only ground truth: detections and errors per emitted photon
/// numbers `(k, l)`, truncated at `k + l ≤ cutoff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonTruth {
    cutoff: u32,
    s: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

impl PhotonTruth {
    pub fn new(cutoff: u32) -> Self {
        let n = cutoff as usize + 1;
        Self {
            cutoff,
            s: vec![vec![0.0; n]; n],
            r: vec![vec![0.0; n]; n],
        }
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

    pub fn set(&mut self, k: u32, l: u32, detections: f64, errors: f64) -> Result<()> {
        self.check(k, l)?;
        if !(errors >= 0.0 && errors <= detections) {
            return Err(invalid("errors", format!("{errors} not in [0, {detections}]")));
        }
        self.s[k as usize][l as usize] = detections;
        self.r[k as usize][l as usize] = errors;
        Ok(())
    }

    pub fn record(&mut self, k: u32, l: u32, error: bool) -> Result<()> {
        self.check(k, l)?;
        self.s[k as usize][l as usize] += 1.0;
        if error {
            self.r[k as usize][l as usize] += 1.0;
        }
        Ok(())
    }

    pub fn s(&self, k: u32, l: u32) -> f64 {
        self.s.get(k as usize).and_then(|r| r.get(l as usize)).copied().unwrap_or(0.0)
    }

    pub fn r(&self, k: u32, l: u32) -> f64 {
        self.r.get(k as usize).and_then(|r| r.get(l as usize)).copied().unwrap_or(0.0)
    }

    pub fn total_detections(&self) -> f64 {
        self.s.iter().flatten().sum()
    }

    pub fn total_errors(&self) -> f64 {
        self.r.iter().flatten().sum()
    }

    fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..=self.cutoff).flat_map(move |k| (0..=self.cutoff - k).map(move |l| (k, l)))
    }
}

/// Probability that V1 emits `k` photons and V2 emits `l`.
pub fn tau_kl(k: u32, l: u32, cfg: &IntensityConfig) -> f64 {
    let mut total = 0.0;
    for u in 0..3 {
        for v in 0..3 {
            total += cfg.prob[u] * cfg.prob[v] * poisson_pair(cfg.mu[u], cfg.mu[v], k, l);
        }
    }
    total
}

fn poisson_pair(u: f64, v: f64, k: u32, l: u32) -> f64 {
    (-(u + v)).exp() * u.powi(k as i32) * v.powi(l as i32) / (factorial(k) * factorial(l))
}

/// Posterior probability of intensity indices `(u, v)` given `(k, l)` photons.
pub fn p_uv_given_kl(u: usize, v: usize, k: u32, l: u32, cfg: &IntensityConfig) -> Result<f64> {
    if u > 2 || v > 2 {
        return Err(invalid("intensity index", format!("({u}, {v}) out of range")));
    }
    let tau = tau_kl(k, l, cfg);
    if tau == 0.0 {
        return Err(Error::Degenerate(format!("tau({k}, {l}) vanishes")));
    }
    Ok(cfg.prob[u] * cfg.prob[v] * poisson_pair(cfg.mu[u], cfg.mu[v], k, l) / tau)
}

/// Hoeffding deviation `√((n/2) ln(1/ε))`.
pub fn hoeffding_delta(n: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("eps", format!("{eps} outside (0, 1)")));
    }
    if n < 0.0 {
        return Err(invalid("n", format!("{n} is negative")));
    }
    Ok((0.5 * n * (1.0 / eps).ln()).sqrt())
}

/// Expected per-cell counts assigned by the intensity posteriors.
pub fn expected_counts(truth: &PhotonTruth, cfg: &IntensityConfig) -> Result<ExpectedCounts> {
    cfg.validate()?;
    let mut out = ExpectedCounts::default();
    for (k, l) in truth.pairs() {
        let (s, r) = (truth.s(k, l), truth.r(k, l));
        if s == 0.0 && r == 0.0 {
            continue;
        }
        for u in 0..3 {
            for v in 0..3 {
                let p = p_uv_given_kl(u, v, k, l, cfg)?;
                out.n[u][v] += p * s;
                out.m[u][v] += p * r;
            }
        }
    }
    Ok(out)
}

/// Tail mass target for photon-number truncation.
pub const TRUNCATION_TAIL: f64 = 1e-12;

/// Smallest total photon number `K` such that `P(k + l > K) < 1e-12` when
/// both verifiers send intensity `max_intensity`.
pub fn photon_cutoff(max_intensity: f64) -> u32 {
    let lambda = 2.0 * max_intensity;
    let mut cdf = 0.0;
    let mut term = (-lambda).exp();
    let mut k = 0u32;
    loop {
        cdf += term;
        if 1.0 - cdf < TRUNCATION_TAIL || k >= 200 {
            return k;
        }
        k += 1;
        term *= lambda / f64::from(k);
    }
}
