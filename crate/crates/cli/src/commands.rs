use std::path::{Path, PathBuf};

use frd_core::archive::{build_timestamp, write_archive, Archive};
use frd_core::config::RunConfig;
use frd_core::dense::MAX_DENSE_SITES;
use frd_core::io::write_kernel;
use frd_core::report::{CheckRecord, Report};
use frd_core::sampling::{write_samples, Sampler, DEFAULT_CLIP_SLACK};
use frd_core::sensitivity::{
    check_against_oracle, constant_direction, default_step, derivative_decay_check, directional_derivative,
    homogeneity_check, level_derivatives, lipschitz_scan, resolvent_oracle, DirectionalProbe, PROBE_TOL,
};
use frd_core::{Decomposition, EllipticOperator, FrdError, Result};

use crate::suites::{self, Suite, VerifyOptions};

/// Relative agreement required between a Green derivative and its resolvent oracle.
const ORACLE_REL: f64 = 1e-4;

fn summary(value: serde_json::Value) {
    println!("{value}");
}

pub fn decompose(config: &Path, out: &Path, tol: Option<f64>) -> Result<bool> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(t) = tol {
        cfg.tolerances.solver = t;
        cfg.validate()?;
    }
    let op = EllipticOperator::new(cfg.coefficient_field()?);
    let dec = Decomposition::build(&op, cfg.plan()?, &cfg.sources()?)?;
    let m = write_archive(out, &dec, cfg.range_rel(), build_timestamp())?;
    summary(serde_json::json!({
        "archive": out.display().to_string(),
        "levels": dec.levels(),
        "sources": m.sources,
        "digest": m.digest,
    }));
    Ok(true)
}

pub fn verify(archive: &Path, suite: &str, out: Option<&Path>, seed: u64, probes: usize, tol: f64) -> Result<bool> {
    let suite: Suite = suite.parse()?;
    if !(tol > 0.0) {
        return Err(FrdError::Config(format!("tolerance {tol} must be positive")));
    }
    let ar = Archive::load(archive)?;
    let opts = VerifyOptions { seed, probes, reconstruction: tol, positivity: tol };
    let rep = suites::run(&ar, suite, &opts)?;
    let dir: PathBuf = out.map(Path::to_path_buf).unwrap_or_else(|| archive.join("reports"));
    rep.write(&dir, &format!("verify-{}", suite.name()))?;
    let failed = rep.failures().count();
    summary(serde_json::json!({
        "suite": suite.name(),
        "records": rep.records.len(),
        "asserted": rep.records.iter().filter(|r| r.asserted).count(),
        "failed": failed,
    }));
    Ok(failed == 0)
}

/// Concatenates every `*.jsonl` report in `dir`, in file-name order.
pub fn report(dir: &Path) -> Result<bool> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    if files.is_empty() {
        return Err(FrdError::Config(format!("no reports in {}", dir.display())));
    }
    files.sort();
    let mut all = Report::new();
    for f in &files {
        all.extend(Report::from_jsonl(&std::fs::read_to_string(f)?)?.records);
    }
    print!("{}", all.to_csv());
    Ok(all.all_pass())
}

pub fn sample(archive: &Path, count: usize, seed: u64, out: &Path) -> Result<bool> {
    let ar = Archive::load(archive)?;
    let t = ar.decomposition.torus();
    if t.sites() > MAX_DENSE_SITES {
        return Err(FrdError::SizeLimit { sites: t.sites(), limit: MAX_DENSE_SITES });
    }
    if count == 0 {
        summary(serde_json::json!({ "samples": 0 }));
        return Ok(true);
    }
    let sampler = Sampler::new(&ar.decomposition, DEFAULT_CLIP_SLACK)?;
    let samples = sampler.sample(count, seed);
    write_samples(out, &samples, seed)?;
    let mut rep = Report::new();
    rep.extend(sampler.clip_records());
    rep.write(out, "sampling")?;
    summary(serde_json::json!({
        "samples": count,
        "seed": seed,
        "clipped": sampler.clips().iter().map(|c| c.clipped).collect::<Vec<_>>(),
    }));
    Ok(true)
}

pub fn probe(config: &Path, out: &Path, tol: Option<f64>) -> Result<bool> {
    let cfg = RunConfig::load(config)?;
    let pc = cfg.probe.clone().ok_or_else(|| FrdError::Config("config has no [probe] section".into()))?;
    let t = cfg.torus()?;
    let base = cfg.coefficient_field()?;
    let plan = cfg.plan()?;
    let dir = constant_direction(&t, &pc.direction);
    let h = match pc.h {
        Some(h) => h,
        None => default_step(&base, &dir)?,
    };
    let source = cfg.sources()?[0];
    let tol = tol.unwrap_or(PROBE_TOL);
    let mut probe = DirectionalProbe::new(base.clone(), dir.clone(), h, pc.level, source);
    probe.tol = tol;
    let mut rep = Report::new();
    for m in probe.validate()? {
        rep.push(
            CheckRecord::info("probe_margin", format!("h={:e}", m.h), m.c0_minus.min(m.c0_plus), base.c0())
                .with_note(format!("h*|Adot|_E={:e}", m.e_norm)),
        );
    }
    let est = directional_derivative(&probe, &plan)?;
    rep.extend(est.richardson_records());
    if pc.level.is_none() {
        let oracle = resolvent_oracle(&base, &dir, source, tol)?;
        rep.push(check_against_oracle(est.leading(), &oracle, ORACLE_REL));
    }
    let levels = level_derivatives(&probe, &plan)?;
    let decay = derivative_decay_check(&levels)?;
    rep.push(if t.dim() >= 3 { decay } else { CheckRecord { asserted: false, ..decay }.with_note("d < 3") });
    rep.push(lipschitz_scan(&base, &dir, &plan, pc.level, source, &pc.lipschitz_steps, tol)?.record());
    rep.push(homogeneity_check(&base, &dir, &plan, pc.level, source, h, tol)?);
    write_kernel(&out.join("derivative.bin"), est.leading(), pc.level.unwrap_or(0))?;
    rep.write(out, "probe")?;
    let failed = rep.failures().count();
    summary(serde_json::json!({ "probe": pc.level, "h": h, "records": rep.records.len(), "failed": failed }));
    Ok(failed == 0)
}
