//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails; every criterion runs regardless.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use qpv_core::bounds::{
    helstrom_guess, locc_xbasis_strategy, soundness_decoy, soundness_qubit, union_failure,
    verify_ppt_certificates, SoundnessInput,
};
use qpv_core::experiments::{
    attack_bench, figure3_curve, run_decoy_mc, run_qubit_mc, search_intensities, DecoySampling, IntensityGrid,
};
use qpv_core::optics::{expected_gain_error, ChannelModel, FockBackend, PulseEncoding, PulsePair};
use qpv_core::protocol::{run_qubit_protocol, Geometry, HonestProver, ProtocolParams};
use qpv_core::quantum::parity_mixtures;
use qpv_core::types::{Basis, BasisBit};
use qpv_core::IntensityConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

type Check = Result<String, String>;

/// Name, check and runtime budget.
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ppt_certificates() -> Check {
    let mut worst = 0.0f64;
    for eta in [0.01, 0.1, 0.25, 0.5, 0.75, 1.0] {
        let r = verify_ppt_certificates(eta).map_err(|e| e.to_string())?;
        let target = 0.75 * eta;
        let dev = (r.primal_value - target)
            .abs()
            .max((r.dual_value - target).abs())
            .max(r.duality_gap.abs());
        worst = worst.max(dev);
        if dev > 1e-12 || !r.violations.is_empty() {
            return Err(format!("eta={eta}: deviation {dev:.2e}, {} violations", r.violations.len()));
        }
    }
    Ok(format!("6 eta values, worst deviation from 3eta/4 {worst:.1e}"))
}

fn helstrom() -> Check {
    let (r0, r1) = parity_mixtures();
    let p = helstrom_guess(&r0, &r1).map_err(|e| e.to_string())?;
    ensure((p - 0.75).abs() <= 1e-12, format!("guess {p:.15}"))
}

fn attack_tightness() -> Check {
    let strategies: Vec<_> = [0.05, 0.5, 1.0]
        .iter()
        .map(|&eta| locc_xbasis_strategy(eta).unwrap())
        .collect();
    let rows = attack_bench(&strategies, 1_000_000, 3).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for r in rows {
        let g = r.guessing_probability;
        let z = (g.value - 0.75) / g.std_error;
        ok &= z.abs() < 5.0;
        parts.push(format!("eta={}: {:.5} ({z:+.2}σ, n={})", r.eta, g.value, g.count));
    }
    ensure(ok, parts.join("; "))
}

fn honest_statistics() -> Check {
    let params = ProtocolParams::qubit(100_000, 1, 0.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let run = run_qubit_protocol(&params, &HonestProver, &Geometry::default(), &mut rng).map_err(|e| e.to_string())?;
    let n = run.records.len() as f64;
    let detected = run.records.iter().filter(|r| r.outcome.is_conclusive()).count() as f64;
    let errors = run.records.iter().filter(|r| r.is_error()).count();
    let rate = detected / n;
    let z = (rate - 0.5) / (0.25 / n).sqrt();
    ensure(
        z.abs() < 5.0 && errors == 0 && n == 100_000.0,
        format!("detection {rate:.5} ({z:+.2}σ), errors {errors} over {n} rounds"),
    )
}

fn qubit_soundness() -> Check {
    let params = ProtocolParams::qubit(100, 50, 0.15).map_err(|e| e.to_string())?;
    let attack = locc_xbasis_strategy(1.0).map_err(|e| e.to_string())?;
    let report =
        run_qubit_mc(&params, &attack, &Geometry::default(), 10_000, 5).map_err(|e| e.to_string())?;
    let bound = soundness_qubit(&SoundnessInput {
        n_th: 50,
        delta_th: 0.15,
        nu: 1.0,
    })
    .map_err(|e| e.to_string())?;
    let acc = report.aggregates["acceptance"];
    let limit = bound + 3.0 * acc.std_error_at(bound);
    ensure(
        acc.value <= limit && (bound - (-1.0f64).exp()).abs() < 1e-15,
        format!("acceptance {:.4} over {} runs, bound {bound:.4}, limit {limit:.4}", acc.value, acc.count),
    )
}

fn decoy_coverage() -> Check {
    let cfg = IntensityConfig::default();
    let params = ProtocolParams::decoy(1_000_000, 1, 0.2, cfg).map_err(|e| e.to_string())?;
    let channel = ChannelModel::default().with_overall_loss_db(10.0).map_err(|e| e.to_string())?;
    let (report, trials) =
        run_decoy_mc(&params, &channel, 2.0, 1000, 6, DecoySampling::Aliased).map_err(|e| e.to_string())?;
    let eps1 = union_failure(2.0, 7);
    let eps2 = union_failure(2.0, 4);
    let s = report.aggregates["s_coverage"];
    let r = report.aggregates["r_coverage"];
    let s_need = 1.0 - eps1 - 3.0 * s.std_error_at(1.0 - eps1);
    let r_need = 1.0 - eps2 - 3.0 * r.std_error_at(1.0 - eps2);
    let positive = trials.iter().filter(|t| t.s_lb > 0).count();
    ensure(
        s.value >= s_need && r.value >= r_need,
        format!(
            "s coverage {:.4} (need {s_need:.4}), r coverage {:.4} (need {r_need:.4}); \
             s_lb > 0 in {positive}/{} trials; yield-scaled s/r coverage {:.4}/{:.4}",
            s.value,
            r.value,
            trials.len(),
            report.aggregates["s_coverage_yield_scaled"].value,
            report.aggregates["r_coverage_yield_scaled"].value
        ),
    )
}

fn soundness_arithmetic() -> Check {
    let d = soundness_decoy(&SoundnessInput {
        n_th: 1,
        delta_th: 0.1,
        nu: 10.0,
    })
    .map_err(|e| e.to_string())?;
    let total = 2.0 * d.eps1 + d.eps2;
    ensure((3.0e-8..=4.5e-8).contains(&total), format!("2eps1+eps2 = {total:.3e}"))
}

fn figure3_reproduction() -> Check {
    let channel = ChannelModel::default();
    let grid = IntensityGrid::default();
    let start = channel.bsm_loss_db();
    let mut cutoffs = Vec::new();
    let mut parts = Vec::new();
    for n in [1e10, 1e11, 1e12, 1e13] {
        let best = search_intensities(n, &channel, 10.0, &grid, 0.25).map_err(|e| e.to_string())?;
        let first = figure3_curve(n, &channel, &best.best, 10.0, &[start]).map_err(|e| e.to_string())?[0];
        if !first.valid() || first.ratio > 0.25 {
            return Err(format!("N={n:e}: curve does not start at {start:.3} dB (ratio {})", first.ratio));
        }
        parts.push(format!("N={n:e} mu={:?} cutoff {:.2} dB", best.best.mu, best.cutoff_db));
        cutoffs.push(best.cutoff_db);
    }
    let increasing = cutoffs.windows(2).all(|w| w[0] < w[1]);
    let top = cutoffs[3];
    ensure(
        increasing && (top - 47.0).abs() <= 3.0 && (start - 6.8).abs() < 0.2,
        format!("start {start:.3} dB; {}", parts.join("; ")),
    )
}

fn backend_cross_validation() -> Check {
    let channel = ChannelModel::default().with_overall_loss_db(10.0).map_err(|e| e.to_string())?;
    let mu = 0.1;
    let analytic = expected_gain_error(mu, mu, &channel).map_err(|e| e.to_string())?;
    let backend = FockBackend::new(channel, 10).map_err(|e| e.to_string())?;
    let poisson = Poisson::new(mu).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 1_000_000u64;
    let (mut conclusive, mut errors) = (0u64, 0u64);
    for _ in 0..n {
        let basis = Basis::from_bit(rng.gen());
        let (x, y): (bool, bool) = (rng.gen(), rng.gen());
        let k = poisson.sample(&mut rng) as u32;
        let l = poisson.sample(&mut rng) as u32;
        if k + l > backend.cutoff() {
            continue;
        }
        let pulse = PulsePair {
            state_v1: BasisBit::new(basis, x),
            state_v2: BasisBit::new(basis, y),
            intensity_v1: mu,
            intensity_v2: mu,
            encoding: PulseEncoding::Photons { v1: k, v2: l },
        };
        let o = backend.sample(&pulse, &mut rng).map_err(|e| e.to_string())?.value;
        conclusive += u64::from(o.is_conclusive());
        errors += u64::from(o.is_error(x, y));
    }
    let q = conclusive as f64 / n as f64;
    let qe = errors as f64 / n as f64;
    let zq = (q - analytic.gain) / (analytic.gain * (1.0 - analytic.gain) / n as f64).sqrt();
    let eg = analytic.error_gain();
    let ze = (qe - eg) / (eg * (1.0 - eg) / n as f64).sqrt();
    ensure(
        zq.abs() < 5.0 && ze.abs() < 5.0,
        format!("gain {q:.4e} vs {:.4e} ({zq:+.2}σ); error gain {qe:.3e} vs {eg:.3e} ({ze:+.2}σ)", analytic.gain),
    )
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_qpv"))
            .args(["figure3", "--N", "1e12,1e13", "--seed", "10", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
        csvs.push(std::fs::read(out.join("figure3.csv")).map_err(|e| e.to_string())?);
    }
    ensure(
        csvs[0] == csvs[1],
        format!("two figure3 runs, {} bytes each, identical: {}", csvs[0].len(), csvs[0] == csvs[1]),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("PPT certificate verification", ppt_certificates, Duration::from_secs(1)),
        ("Helstrom value", helstrom, Duration::from_secs(1)),
        ("attack tightness", attack_tightness, Duration::from_secs(60)),
        ("honest statistics", honest_statistics, Duration::from_secs(60)),
        ("qubit soundness bound", qubit_soundness, Duration::from_secs(300)),
        ("decoy coverage", decoy_coverage, Duration::from_secs(1800)),
        ("soundness arithmetic", soundness_arithmetic, Duration::from_secs(1)),
        ("loss-tolerance curves", figure3_reproduction, Duration::from_secs(600)),
        ("backend cross-validation", backend_cross_validation, Duration::from_secs(600)),
        ("determinism", determinism, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {budget:?} budget")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {:>2} {status} {name} [{:.2}s]: {detail}", i + 1, elapsed.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
