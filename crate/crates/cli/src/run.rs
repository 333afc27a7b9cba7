//! Dispatch from a resolved [`RunConfig`] to the experiments, plus artifact
//! writing and replay.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qpv_core::bounds::{
    locc_mixed_strategy, locc_xbasis_strategy, locc_ybasis_strategy, soundness_decoy, soundness_qubit,
    verify_ppt_certificates, SoundnessInput,
};
use qpv_core::experiments::{
    attack_bench, bisect_cutoff, figure3_csv, find_cutoff, figure3_curve, loss_grid, run_decoy_mc, run_qubit_mc,
    search_intensities, Aggregate, Cutoff, ExperimentReport, IntensityGrid, RunManifest,
};
use qpv_core::protocol::{run_qubit_protocol, write_transcript, HonestProver, ProtocolParams, Responder};
use qpv_core::rng::stream;
use qpv_core::AttackStrategy;
use serde::Serialize;

use crate::config::{Mode, ResponderKind, RunConfig};
use crate::error::CliError;

/// Files produced by one run, in memory until written.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
}

impl Artifacts {
    fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.add(name, text);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }
}

/// Result of [`execute`].
#[derive(Debug)]
pub struct Execution {
    pub report: ExperimentReport,
    pub manifest: RunManifest,
    pub summary: Vec<String>,
    pub written: Vec<PathBuf>,
}

pub const MANIFEST: &str = "manifest.json";

fn report(cfg: &RunConfig) -> ExperimentReport {
    ExperimentReport {
        experiment: cfg.mode.command().to_string(),
        config: cfg.echo(),
        verdicts: BTreeMap::new(),
        aggregates: BTreeMap::new(),
        soundness: BTreeMap::new(),
        outputs: Vec::new(),
    }
}

fn reason_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn strategy(kind: ResponderKind, eta: f64) -> qpv_core::Result<Option<AttackStrategy>> {
    Ok(match kind {
        ResponderKind::Honest => None,
        ResponderKind::XAttack => Some(locc_xbasis_strategy(eta)?),
        ResponderKind::YAttack => Some(locc_ybasis_strategy(eta)?),
        ResponderKind::MixedAttack => Some(locc_mixed_strategy(eta, 0.5)?),
    })
}

fn aggregates_csv(aggregates: &BTreeMap<String, Aggregate>, echo: &str) -> String {
    let mut out = format!("# config {echo}\nmetric,value,std_error,count\n");
    for (k, a) in aggregates {
        let _ = writeln!(out, "{k},{:.9e},{:.9e},{}", a.value, a.std_error, a.count);
    }
    out
}

fn run_bounds(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExperimentReport, CliError> {
    let echo = cfg.echo_line();
    let mut rep = report(cfg);
    let mut csv = format!("# config {echo}\neta,primal,dual,gap,violations,guess_bound\n");
    let mut reports = Vec::new();
    for &eta in cfg.etas() {
        let r = verify_ppt_certificates(eta)?;
        let _ = writeln!(
            csv,
            "{eta},{:.15e},{:.15e},{:.3e},{},{:.15}",
            r.primal_value,
            r.dual_value,
            r.duality_gap,
            r.violations.len(),
            r.guess_bound()
        );
        art.summary.push(format!(
            "eta={eta}: primal={:.12} dual={:.12} gap={:.1e} violations={}",
            r.primal_value,
            r.dual_value,
            r.duality_gap,
            r.violations.len()
        ));
        reports.push(r);
    }
    let input = SoundnessInput {
        n_th: cfg.n_th(),
        delta_th: cfg.delta_th(),
        nu: cfg.nu,
    };
    rep.soundness.insert("eps_qubit".into(), soundness_qubit(&input)?);
    let d = soundness_decoy(&input)?;
    rep.soundness.insert("eps1".into(), d.eps1);
    rep.soundness.insert("eps2".into(), d.eps2);
    rep.soundness.insert("eps_decoy".into(), d.eps_decoy);
    art.summary.push(format!(
        "soundness at n_th={} delta_th={} nu={}: eps_qubit={:.3e} eps_decoy={:.3e}",
        input.n_th, input.delta_th, input.nu, rep.soundness["eps_qubit"], d.eps_decoy
    ));
    art.add("bounds.csv", csv);
    art.add_json(
        "certificates.json",
        &serde_json::json!({ "config": cfg.echo(), "certificates": reports }),
    );
    Ok(rep)
}

fn run_qubit(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExperimentReport, CliError> {
    let params = ProtocolParams::qubit(cfg.rounds(), cfg.n_th(), cfg.delta_th())?;
    let geometry = cfg.geometry()?;
    let eta = cfg.etas()[0];
    let attack = strategy(cfg.responder, eta)?;
    let responder: &dyn Responder = match &attack {
        Some(a) => a,
        None => &HonestProver,
    };
    let mut rep = run_qubit_mc(&params, responder, &geometry, cfg.trials(), cfg.seed)?;
    rep.config = cfg.echo();
    let mut rng = stream(cfg.seed, "transcript", 0);
    let sample = run_qubit_protocol(&params, responder, &geometry, &mut rng)?;
    art.summary.push(format!(
        "{} trials of {} rounds against {}: acceptance {:.4} (eps_qubit {:.3e})",
        cfg.trials(),
        cfg.rounds(),
        responder.name(),
        rep.aggregates["acceptance"].value,
        rep.soundness["eps_qubit"]
    ));
    art.add("qubit.csv", aggregates_csv(&rep.aggregates, &cfg.echo_line()));
    art.add(
        "transcript.txt",
        format!("# config {}\n{}", cfg.echo_line(), write_transcript(&sample.records)),
    );
    Ok(rep)
}

fn run_decoy(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExperimentReport, CliError> {
    let intensities = cfg.intensities()?;
    let params = ProtocolParams::decoy(cfg.rounds(), cfg.n_th(), cfg.delta_th(), intensities)?;
    let channel = cfg.channel_at_loss()?;
    let (mut rep, trials) = run_decoy_mc(&params, &channel, cfg.nu, cfg.trials(), cfg.seed, cfg.sampling)?;
    rep.config = cfg.echo();
    let mut csv = format!("# config {}\ntrial,verdict,s11,s_lb,r11,r_ub,r_uncapped\n", cfg.echo_line());
    for (i, t) in trials.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{:.9e}",
            reason_name(&t.verdict.reason),
            t.s11,
            t.s_lb,
            t.r11,
            t.r_ub,
            t.r_uncapped
        );
    }
    art.summary.push(format!(
        "{} trials of {} rounds at {} dB: s coverage {:.4}, r coverage {:.4}",
        cfg.trials(),
        cfg.rounds(),
        cfg.loss_db,
        rep.aggregates["s_coverage"].value,
        rep.aggregates["r_coverage"].value
    ));
    art.add("decoy_trials.csv", csv);
    art.add(
        "counts.csv",
        format!("# config {}\n{}", cfg.echo_line(), trials[0].counts.to_csv(&intensities)),
    );
    Ok(rep)
}

#[derive(Serialize)]
struct CurveSummary {
    #[serde(rename = "N")]
    n_pulses: f64,
    mu: [f64; 3],
    prob: [f64; 3],
    /// Crossing read off the sampled grid.
    cutoff_db: Option<f64>,
    /// All grid crossings when the curve crosses more than once.
    ambiguous: Vec<f64>,
    /// Crossing refined by bisection on the pipeline.
    refined_cutoff_db: Option<f64>,
}

fn run_figure3(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExperimentReport, CliError> {
    let shape = cfg.channel()?;
    let grid = loss_grid(cfg.loss_start(), cfg.loss_end, cfg.loss_step);
    let mut points = Vec::new();
    let mut summaries = Vec::new();
    for &n in &cfg.n_pulses {
        let intensities = if cfg.search_intensities {
            let grid = IntensityGrid::default();
            search_intensities(n, &shape, cfg.nu, &grid, cfg.threshold)?.best
        } else {
            cfg.intensities()?
        };
        let curve = figure3_curve(n, &shape, &intensities, cfg.nu, &grid)?;
        let cutoff = find_cutoff(&curve, cfg.threshold);
        let refined = bisect_cutoff(
            n,
            &shape,
            &intensities,
            cfg.nu,
            cfg.threshold,
            shape.bsm_loss_db(),
            cfg.loss_end,
            1e-3,
        )?;
        art.summary.push(format!(
            "N={n:e} mu={:?}: cutoff {}",
            intensities.mu,
            refined.map_or("none".into(), |c| format!("{c:.2} dB"))
        ));
        summaries.push(CurveSummary {
            n_pulses: n,
            mu: intensities.mu,
            prob: intensities.prob,
            cutoff_db: cutoff.value(),
            ambiguous: match cutoff {
                Cutoff::Ambiguous(v) => v,
                _ => Vec::new(),
            },
            refined_cutoff_db: refined,
        });
        points.extend(curve);
    }
    let mut rep = report(cfg);
    let d = soundness_decoy(&SoundnessInput {
        n_th: cfg.n_th(),
        delta_th: cfg.delta_th(),
        nu: cfg.nu,
    })?;
    rep.soundness.insert("eps1".into(), d.eps1);
    rep.soundness.insert("eps2".into(), d.eps2);
    rep.soundness.insert("estimation_failure".into(), 2.0 * d.eps1 + d.eps2);
    art.add("figure3.csv", figure3_csv(&points, &cfg.echo_line()));
    art.add_json(
        "summary.json",
        &serde_json::json!({ "config": cfg.echo(), "curves": summaries }),
    );
    Ok(rep)
}

fn run_attack_bench(cfg: &RunConfig, art: &mut Artifacts) -> Result<ExperimentReport, CliError> {
    let mut strategies = Vec::new();
    for &eta in cfg.etas() {
        strategies.push(locc_xbasis_strategy(eta)?);
        strategies.push(locc_ybasis_strategy(eta)?);
        strategies.push(locc_mixed_strategy(eta, 0.5)?);
    }
    let rows = attack_bench(&strategies, cfg.rounds(), cfg.seed)?;
    let mut rep = report(cfg);
    let mut csv = format!(
        "# config {}\nstrategy,eta,rounds,detection_rate,detection_se,guessing_probability,guessing_se,exact\n",
        cfg.echo_line()
    );
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{:.9e},{:.3e},{:.9e},{:.3e},{}",
            r.strategy,
            r.eta,
            r.rounds,
            r.detection_rate.value,
            r.detection_rate.std_error,
            r.guessing_probability.value,
            r.guessing_probability.std_error,
            r.exact_guessing_probability
        );
        art.summary.push(format!(
            "{} eta={}: guessing {:.5} ± {:.5} (exact {})",
            r.strategy, r.eta, r.guessing_probability.value, r.guessing_probability.std_error, r.exact_guessing_probability
        ));
        let key = format!("{}@{}", r.strategy, r.eta);
        rep.aggregates.insert(format!("{key}/guessing_probability"), r.guessing_probability);
        rep.aggregates.insert(format!("{key}/detection_rate"), r.detection_rate);
    }
    art.add("attack_bench.csv", csv);
    Ok(rep)
}

/// Runs the configured experiment and renders its artifacts without
/// touching the filesystem.
pub fn compute(cfg: &RunConfig) -> Result<(ExperimentReport, Artifacts), CliError> {
    let mut art = Artifacts::default();
    let mut rep = match cfg.mode {
        Mode::Bounds => run_bounds(cfg, &mut art)?,
        Mode::Qubit => run_qubit(cfg, &mut art)?,
        Mode::Decoy => run_decoy(cfg, &mut art)?,
        Mode::Figure3 => run_figure3(cfg, &mut art)?,
        Mode::AttackBench => run_attack_bench(cfg, &mut art)?,
    };
    rep.outputs = art.names().map(str::to_string).collect();
    rep.outputs.push("report.json".into());
    let rep_copy = rep.clone();
    art.add_json("report.json", &rep_copy);
    Ok((rep, art))
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs the experiment and writes its outputs plus a manifest to the
/// configured directory.
pub fn execute(cfg: &RunConfig) -> Result<Execution, CliError> {
    let dir = cfg.out_dir()?.to_path_buf();
    let (report, art) = compute(cfg)?;
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut manifest = RunManifest::new(cfg.mode.command(), cfg.echo(), cfg.seed);
    let mut written = Vec::new();
    for (name, bytes) in &art.files {
        let path = dir.join(name);
        write(&path, bytes)?;
        manifest.record_output(name, bytes);
        written.push(path);
    }
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write(&path, text.as_bytes())?;
    written.push(path);
    Ok(Execution {
        report,
        manifest,
        summary: art.summary,
        written,
    })
}

/// Re-runs the experiment recorded in a manifest into `out` and checks
/// every output hash.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<Execution, CliError> {
    let text = fs::read_to_string(manifest_path).map_err(|source| CliError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let recorded: RunManifest = serde_json::from_str(&text)?;
    let mut cfg: RunConfig = serde_json::from_value(recorded.config.clone()).map_err(|e| CliError::Config {
        field: "config".into(),
        reason: e.to_string(),
    })?;
    cfg.out = Some(out.to_path_buf());
    cfg.validate()?;
    let run = execute(&cfg)?;
    let mut diffs = Vec::new();
    if run.manifest.input_sha256 != recorded.input_sha256 {
        diffs.push("config".to_string());
    }
    for (name, hash) in &recorded.outputs {
        if run.manifest.outputs.get(name) != Some(hash) {
            diffs.push(name.clone());
        }
    }
    if diffs.is_empty() {
        Ok(run)
    } else {
        Err(CliError::Mismatch(diffs))
    }
}
