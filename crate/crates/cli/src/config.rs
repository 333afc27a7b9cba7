//! Run configuration: one flat TOML document, overridden by flags.
//!
//! Precedence, lowest first: built-in defaults, `--config` file, command-line
//! flags. Fields left unset that depend on the subcommand are filled in by
//! [`RunConfig::resolve`] so the echoed config is always complete.

use std::path::{Path, PathBuf};

use qpv_core::decoy::IntensityConfig;
use qpv_core::experiments::DecoySampling;
use qpv_core::optics::ChannelModel;
use qpv_core::protocol::Geometry;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Bounds,
    Qubit,
    Decoy,
    Figure3,
    AttackBench,
}

impl Mode {
    pub fn command(self) -> &'static str {
        match self {
            Mode::Bounds => "bounds",
            Mode::Qubit => "simulate-qubit",
            Mode::Decoy => "simulate-decoy",
            Mode::Figure3 => "figure3",
            Mode::AttackBench => "attack-bench",
        }
    }
}

/// Who answers the verifiers in `simulate-qubit`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponderKind {
    #[default]
    Honest,
    XAttack,
    YAttack,
    MixedAttack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Output directory. Required, but never part of the echo: moving a run
    /// elsewhere must not change its outputs.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,

    pub pos_v1: f64,
    pub pos_v2: f64,
    pub pos_claimed: f64,

    /// Rounds per protocol run (attack-bench: sampled rounds per strategy).
    pub rounds: Option<u64>,
    pub n_th: Option<u64>,
    pub delta_th: Option<f64>,
    pub trials: Option<u64>,
    pub responder: ResponderKind,
    pub eta: Option<Vec<f64>>,
    pub nu: f64,

    /// Overall V1→V2 loss for `simulate-decoy`, BSM station included.
    pub loss_db: f64,
    pub misalignment: f64,
    pub det_eff: f64,
    pub dark_count: f64,

    pub mu: [f64; 3],
    pub prob: [f64; 3],
    pub sampling: DecoySampling,

    #[serde(rename = "N")]
    pub n_pulses: Vec<f64>,
    pub loss_start: Option<f64>,
    pub loss_end: f64,
    pub loss_step: f64,
    pub threshold: f64,
    pub search_intensities: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ch = ChannelModel::default();
        let cfg = IntensityConfig::default();
        let g = Geometry::default();
        Self {
            mode: Mode::default(),
            seed: 0,
            out: None,
            pos_v1: g.pos_v1,
            pos_v2: g.pos_v2,
            pos_claimed: g.pos_claimed,
            rounds: None,
            n_th: None,
            delta_th: None,
            trials: None,
            responder: ResponderKind::default(),
            eta: None,
            nu: 10.0,
            loss_db: 10.0,
            misalignment: ch.misalignment_error,
            det_eff: ch.detector_efficiency,
            dark_count: ch.dark_count_prob,
            mu: cfg.mu,
            prob: cfg.prob,
            sampling: DecoySampling::Aliased,
            n_pulses: vec![1e10, 1e11, 1e12, 1e13],
            loss_start: None,
            loss_end: 60.0,
            loss_step: 0.5,
            threshold: 0.25,
            search_intensities: true,
        }
    }
}

/// Values given on the command line; `None` leaves the file/default value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_pulses: Option<Vec<f64>>,
    pub loss_db: Option<f64>,
    pub nu: Option<f64>,
    pub trials: Option<u64>,
    pub eta: Option<Vec<f64>>,
}

fn bad(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Names the offending key of a TOML error: quoted in the message for
/// unknown fields, otherwise the key on the line the error points at.
fn toml_field(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    err.span()
        .and_then(|span| {
            let line_start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
            let line = text[line_start..].lines().next()?;
            line.split_once('=').map(|(k, _)| k.trim().to_string())
        })
        .unwrap_or_else(|| "config".into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config {
            field: toml_field(text, &e),
            reason: e.message().to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Defaults < file < flags, then mode-specific defaults and validation.
    pub fn assemble(mode: Mode, file: Option<&Path>, flags: Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.mode = mode;
        if let Some(v) = flags.seed {
            cfg.seed = v;
        }
        if let Some(v) = flags.out {
            cfg.out = Some(v);
        }
        if let Some(v) = flags.n_pulses {
            cfg.n_pulses = v;
        }
        if let Some(v) = flags.loss_db {
            cfg.loss_db = v;
        }
        if let Some(v) = flags.nu {
            cfg.nu = v;
        }
        if let Some(v) = flags.trials {
            cfg.trials = Some(v);
        }
        if let Some(v) = flags.eta {
            cfg.eta = Some(v);
        }
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills subcommand-dependent fields that were left unset.
    pub fn resolve(&mut self) {
        let (rounds, n_th, delta_th, trials, eta): (u64, u64, f64, u64, &[f64]) = match self.mode {
            Mode::Bounds => (10_000, 4000, 0.01, 1, &[0.01, 0.1, 0.25, 0.5, 0.75, 1.0]),
            Mode::Qubit => (10_000, 4000, 0.01, 100, &[1.0]),
            Mode::Decoy => (1_000_000, 1, 0.2, 10, &[1.0]),
            Mode::Figure3 => (1, 1, 0.2, 1, &[1.0]),
            Mode::AttackBench => (1_000_000, 1, 0.2, 1, &[0.05, 0.5, 1.0]),
        };
        self.rounds.get_or_insert(rounds);
        self.n_th.get_or_insert(n_th);
        self.delta_th.get_or_insert(delta_th);
        self.trials.get_or_insert(trials);
        self.eta.get_or_insert_with(|| eta.to_vec());
        if self.loss_start.is_none() {
            // start at the station loss, rounded up to 1e-4 dB
            let bsm = self.channel_shape().map(|c| c.bsm_loss_db()).unwrap_or(0.0);
            self.loss_start = Some((bsm * 1e4).ceil() / 1e4);
        }
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| bad("out", "missing required field (use --out DIR or `out` in the config file)"))
    }

    pub fn rounds(&self) -> u64 {
        self.rounds.unwrap_or(1)
    }

    pub fn n_th(&self) -> u64 {
        self.n_th.unwrap_or(1)
    }

    pub fn delta_th(&self) -> f64 {
        self.delta_th.unwrap_or(0.2)
    }

    pub fn trials(&self) -> u64 {
        self.trials.unwrap_or(1)
    }

    pub fn etas(&self) -> &[f64] {
        self.eta.as_deref().unwrap_or(&[1.0])
    }

    pub fn loss_start(&self) -> f64 {
        self.loss_start.unwrap_or(0.0)
    }

    /// Channel with unit transmittance; the loss is set per experiment.
    fn channel_shape(&self) -> Result<ChannelModel, CliError> {
        let ch = ChannelModel {
            transmittance_per_arm: 1.0,
            misalignment_error: self.misalignment,
            detector_efficiency: self.det_eff,
            dark_count_prob: self.dark_count,
        };
        ch.validate().map_err(|e| match e {
            qpv_core::Error::InvalidParameter { name, reason } => bad(channel_key(name), reason),
            other => bad("channel", other.to_string()),
        })?;
        Ok(ch)
    }

    pub fn channel(&self) -> Result<ChannelModel, CliError> {
        self.channel_shape()
    }

    /// Channel at the configured overall loss.
    pub fn channel_at_loss(&self) -> Result<ChannelModel, CliError> {
        self.channel_shape()?
            .with_overall_loss_db(self.loss_db)
            .map_err(|e| bad("loss_db", e.to_string()))
    }

    pub fn intensities(&self) -> Result<IntensityConfig, CliError> {
        IntensityConfig::new(self.mu, self.prob).map_err(|e| match e {
            qpv_core::Error::InvalidParameter { name, reason } if name.contains("prob") => bad("prob", reason),
            other => bad("mu", other.to_string()),
        })
    }

    pub fn geometry(&self) -> Result<Geometry, CliError> {
        Geometry::new(self.pos_v1, self.pos_v2, self.pos_claimed).map_err(|e| bad("pos_claimed", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.channel_shape()?;
        if !(self.det_eff > 0.0) {
            return Err(bad("det_eff", "must be positive"));
        }
        self.intensities()?;
        self.geometry()?;
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(bad("nu", format!("{} must be positive", self.nu)));
        }
        if self.rounds() == 0 {
            return Err(bad("rounds", "must be at least 1"));
        }
        if self.trials() == 0 {
            return Err(bad("trials", "must be at least 1"));
        }
        if !(0.0..0.25).contains(&self.delta_th()) {
            return Err(bad("delta_th", "must lie in [0, 1/4)"));
        }
        if self.etas().is_empty() || self.etas().iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(bad("eta", "each value must lie in (0, 1]"));
        }
        if self.n_pulses.is_empty() || self.n_pulses.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(bad("N", "each pulse count must be positive"));
        }
        if !(self.loss_step > 0.0) {
            return Err(bad("loss_step", "must be positive"));
        }
        if !(self.loss_end > self.loss_start()) {
            return Err(bad("loss_end", "must exceed loss_start"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(bad("threshold", "must lie in (0, 1)"));
        }
        if self.mode == Mode::Decoy {
            self.channel_at_loss()?;
        }
        if self.mode == Mode::Figure3 {
            let bsm = self.channel_shape()?.bsm_loss_db();
            if self.loss_start() < bsm - 1e-9 {
                return Err(bad("loss_start", format!("below the {bsm:.3} dB lost in the measurement station")));
            }
        }
        Ok(())
    }

    /// The config as echoed into every output, without the output path.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn echo_line(&self) -> String {
        serde_json::to_string(&self.echo()).expect("config serializes")
    }
}

fn channel_key(core_name: &str) -> &'static str {
    match core_name {
        "misalignment_error" => "misalignment",
        "detector_efficiency" => "det_eff",
        "dark_count_prob" => "dark_count",
        _ => "loss_db",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(err: CliError) -> String {
        match err {
            CliError::Config { field, .. } => field,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn defaults_validate_for_every_mode() {
        for mode in [Mode::Bounds, Mode::Qubit, Mode::Decoy, Mode::Figure3, Mode::AttackBench] {
            let cfg = RunConfig::assemble(mode, None, Overrides::default()).unwrap();
            assert_eq!(cfg.mode, mode);
            assert!(cfg.rounds.is_some() && cfg.eta.is_some());
        }
    }

    #[test]
    fn station_loss_sets_curve_start() {
        let cfg = RunConfig::assemble(Mode::Figure3, None, Overrides::default()).unwrap();
        assert!((cfg.loss_start() - 6.8868).abs() < 1e-3);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "nu = 3.0\nseed = 5\ntrials = 7\n").unwrap();
        let flags = Overrides {
            nu: Some(4.0),
            ..Default::default()
        };
        let cfg = RunConfig::assemble(Mode::Qubit, Some(&path), flags).unwrap();
        assert_eq!(cfg.nu, 4.0);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.trials(), 7);
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of(RunConfig::from_toml_str("bogus = 1").unwrap_err()), "bogus");
        assert_eq!(field_of(RunConfig::from_toml_str("nu = \"ten\"").unwrap_err()), "nu");
        let cases: [(&str, &str); 6] = [
            ("delta_th = 0.3", "delta_th"),
            ("det_eff = 1.5", "det_eff"),
            ("mu = [0.1, 0.3, 0.0]", "mu"),
            ("prob = [0.5, 0.5, 0.5]", "prob"),
            ("eta = [0.0]", "eta"),
            ("nu = -1.0", "nu"),
        ];
        let dir = tempfile::tempdir().unwrap();
        for (text, field) in cases {
            let path = dir.path().join("c.toml");
            std::fs::write(&path, text).unwrap();
            let err = RunConfig::assemble(Mode::Decoy, Some(&path), Overrides::default()).unwrap_err();
            assert_eq!(field_of(err), field, "{text}");
        }
    }

    #[test]
    fn out_is_required_but_not_echoed() {
        let mut cfg = RunConfig::default();
        assert_eq!(field_of(cfg.out_dir().unwrap_err()), "out");
        cfg.out = Some("somewhere".into());
        assert!(cfg.echo().get("out").is_none());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::assemble(Mode::Figure3, None, Overrides::default()).unwrap();
        let back: RunConfig = serde_json::from_value(cfg.echo()).unwrap();
        assert_eq!(back, cfg);
    }
}
