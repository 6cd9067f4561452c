//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use mixsep::assign::{mixit_loss, pit_loss};
use mixsep::datagen::{build_unsupervised_set, load_split, simulate_manifest, single_source_count, MomStrategy, Split};
use mixsep::losses::{neg_thresh_snr, LossSpec};
use mixsep::pipeline::{ExperimentConfig, ModelId, Workspace};
use mixsep::separator::{mixture_consistency_project, Separator};
use mixsep::signal::{mix, read_wav, write_wav, Waveform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOSS_TOL_DB: f64 = 1e-6;
const CONSISTENCY_SUM_TOL: f64 = 1e-9;
const IDEMPOTENCE_TOL: f64 = 1e-12;
const LSQ_TOL: f64 = 1e-9;
const ASSIGN_REL_TOL: f64 = 1e-12;
const HUNGARIAN_SCALE: f64 = 1e9;
const GRAD_MAX_REL_ERR: f64 = 1e-3;
const GRAD_FRAC_TARGET: f64 = 0.95;
const MOM_SUM_TOL: f64 = 1e-12;
const WAV_LSB: f64 = 1.0 / 32768.0;
const TOY_BUDGET: Duration = Duration::from_secs(15 * 60);

type Verdict = Result<String, String>;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mixsep")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_cli(args: &[&str]) -> Result<(String, Duration), String> {
    let start = Instant::now();
    let out = Command::new(bin())
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| format!("cannot launch mixsep: {e}"))?;
    let elapsed = start.elapsed();
    if !out.status.success() {
        return Err(format!(
            "mixsep {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or("")
        ));
    }
    Ok((String::from_utf8_lossy(&out.stdout).into_owned(), elapsed))
}

fn key_values(stdout: &str) -> BTreeMap<String, f64> {
    stdout
        .lines()
        .filter_map(|l| l.split_once('='))
        .filter_map(|(k, v)| v.trim().parse().ok().map(|v| (k.to_string(), v)))
        .collect()
}

fn loss_values() -> Verdict {
    let spec = LossSpec::thresholded(30.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y = random_wave(&mut rng, 4000);
    let perfect = neg_thresh_snr(&y, &y, &spec).map_err(|e| e.to_string())?;
    let zero = Waveform::zeros(y.len(), y.sample_rate()).unwrap();
    let silent = neg_thresh_snr(&y, &zero, &spec).map_err(|e| e.to_string())?;
    let want = 10.0 * 1.001f64.log10();
    check(
        (perfect + 30.0).abs() <= LOSS_TOL_DB && (silent - want).abs() <= LOSS_TOL_DB,
        format!("perfect={perfect:.9} dB (want -30), zero={silent:.9} dB (want {want:.9}), tol {LOSS_TOL_DB:e}"),
    )
}

fn mixture_consistency() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut sum_err, mut idem_err, mut lsq_err) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..1000 {
        let m = [2, 4, 8][case % 3];
        let len = rng.gen_range(1..=256);
        let initial = random_stack(&mut rng, m, len);
        let x = random_wave(&mut rng, len);
        let out = mixture_consistency_project(&initial, &x).map_err(|e| e.to_string())?;
        let again = mixture_consistency_project(&out, &x).map_err(|e| e.to_string())?;
        let oracle = constrained_projection(&initial, &x);
        for (a, b) in mix(&out).samples().iter().zip(x.samples()) {
            sum_err = sum_err.max((a - b).abs());
        }
        for ((w, v), o) in out.iter().zip(again.iter()).zip(&oracle) {
            for ((a, b), c) in w.samples().iter().zip(v.samples()).zip(o) {
                idem_err = idem_err.max((a - b).abs());
                lsq_err = lsq_err.max((a - c).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        sum_err <= CONSISTENCY_SUM_TOL && idem_err <= IDEMPOTENCE_TOL && lsq_err <= LSQ_TOL && secs < 5.0,
        format!("1000 instances: sum err {sum_err:.2e} (tol {CONSISTENCY_SUM_TOL:e}), idempotence {idem_err:.2e} (tol {IDEMPOTENCE_TOL:e}), vs least squares {lsq_err:.2e} (tol {LSQ_TOL:e}), {secs:.2}s (limit 5s)"),
    )
}

fn assignment_exactness() -> Verdict {
    let start = Instant::now();
    let spec = LossSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for case in 0..200 {
        let m = rng.gen_range(2..=10);
        let len = rng.gen_range(8..64);
        let x1 = random_wave(&mut rng, len);
        let x2 = random_wave(&mut rng, len);
        let ests = random_stack(&mut rng, m, len);
        let got = mixit_loss(&x1, &x2, &ests, &spec).map_err(|e| e.to_string())?;
        let (want, a) = brute_force_remix(&x1, &x2, &ests, spec.snr_max_db);
        let rel = (got.total_loss - want).abs() / want.abs().max(1.0);
        worst = worst.max(rel);
        if rel > ASSIGN_REL_TOL || got.mixing().map(|x| x.assignment()) != Some(&a[..]) {
            failures.push(format!("mixit case {case}"));
        }
    }
    let mut worst_hungarian = 0.0f64;
    for case in 0..200 {
        let c = rng.gen_range(1..=6);
        let len = rng.gen_range(8..48);
        let refs = random_stack(&mut rng, c, len);
        let ests = random_stack(&mut rng, c, len);
        let got = pit_loss(&refs, &ests, &spec).map_err(|e| e.to_string())?;
        let (want, p) = brute_force_pit(&refs, &ests, spec.snr_max_db);
        let rel = (got.total_loss - want).abs() / want.abs().max(1.0);
        worst = worst.max(rel);
        let cost: Vec<Vec<f64>> = (0..c)
            .map(|i| (0..c).map(|j| thresh_snr_loss(refs[i].samples(), ests[j].samples(), 30.0, 1e-12)).collect())
            .collect();
        let h = (hungarian_min(&cost, HUNGARIAN_SCALE) - got.total_loss).abs();
        worst_hungarian = worst_hungarian.max(h);
        if rel > ASSIGN_REL_TOL || got.permutation().map(|x| x.as_slice()) != Some(&p[..]) || h > c as f64 / HUNGARIAN_SCALE {
            failures.push(format!("pit case {case}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failures.is_empty() && secs < 30.0,
        format!(
            "200 MixIT (M<=10) + 200 PIT (C<=6): worst rel err {worst:.2e} (tol {ASSIGN_REL_TOL:e}), Hungarian gap {worst_hungarian:.2e}, mismatches {:?}, {secs:.2}s (limit 30s)",
            failures
        ),
    )
}

fn gradient_fidelity() -> Verdict {
    let (out, elapsed) = run_cli(&["gradcheck", "--seed", "0", "--coordinates", "40"])?;
    let kv = key_values(&out);
    let max = kv.get("max_rel_err").copied().ok_or("no max_rel_err line")?;
    let frac = kv.get("min_frac_within_1e-4").copied().ok_or("no fraction line")?;
    check(
        max <= GRAD_MAX_REL_ERR && frac >= GRAD_FRAC_TARGET && elapsed.as_secs_f64() < 60.0,
        format!(
            "max rel err {max:.2e} (limit {GRAD_MAX_REL_ERR:e}), min fraction within 1e-4 {frac:.3} (target {GRAD_FRAC_TARGET}), {:.1}s (limit 60s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn channel_audit(workdir: &Path) -> Verdict {
    let cfg = ExperimentConfig::load(repo_file("configs/toy.toml")).map_err(|e| e.to_string())?;
    let ws = Workspace::new(workdir);
    let test = ws.load_data(&cfg, Split::Test).map_err(|e| e.to_string())?;
    let expected = [
        (ModelId::Teacher(MomStrategy::TwoSrc), 4),
        (ModelId::Teacher(MomStrategy::OneOrTwoSrc), 4),
        (ModelId::Student, 2),
        (ModelId::Finetune, 2),
        (ModelId::Distill, 2),
    ];
    let mut bad = Vec::new();
    for (model, channels) in expected {
        let sep = Separator::load(ws.checkpoint(model)).map_err(|e| e.to_string())?;
        for ex in &test {
            let out = sep.forward(&ex.mixture).map_err(|e| e.to_string())?;
            if out.len() != channels || out.num_samples() != ex.mixture.len() {
                bad.push(format!("{} on {}: {} channels", model.name(), ex.id, out.len()));
            }
        }
    }
    check(
        bad.is_empty(),
        format!("{} test utterances: teachers emit 4, student/finetune/distill emit 2; violations {bad:?}", test.len()),
    )
}

fn ordering(kv: &BTreeMap<String, f64>, elapsed: Duration) -> Verdict {
    let get = |k: &str| kv.get(&format!("{k}_si_snri_db")).copied().ok_or(format!("missing {k}"));
    let teacher_energy = get("teacher_1or2src_energy")?;
    let teacher_oracle = get("teacher_1or2src_oracle")?;
    let two_src = get("teacher_2src_energy")?;
    let student = get("student_direct")?;
    let tuned = get("finetune_direct")?;
    let distilled = get("distill_direct")?;
    let rels = [
        ("a oracle>=energy", teacher_oracle, teacher_energy),
        ("b student>=teacher", student, teacher_energy),
        ("c finetune>=student", tuned, student),
        ("d distill>=student", distilled, student),
        ("e 1or2src>=2src", teacher_energy, two_src),
    ];
    let mut detail = Vec::new();
    let mut ok = elapsed <= TOY_BUDGET;
    for (name, lhs, rhs) in rels {
        let margin = lhs - rhs;
        ok &= margin >= 0.0;
        detail.push(format!("{name} {lhs:.2}-{rhs:.2}={margin:+.2}"));
    }
    check(
        ok,
        format!("{} dB; run-all {:.0}s (budget {}s)", detail.join(", "), elapsed.as_secs_f64(), TOY_BUDGET.as_secs()),
    )
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(scratch: &Path) -> Verdict {
    let config = repo_file("configs/smoke.toml");
    let config = config.to_str().unwrap();
    let a = scratch.join("det-a");
    let b = scratch.join("det-b");
    let (out_a, _) = run_cli(&["--config", config, "--workdir", a.to_str().unwrap(), "--threads", "1", "run-all"])?;
    let (out_b, _) = run_cli(&["--config", config, "--workdir", b.to_str().unwrap(), "--threads", "4", "run-all"])?;
    let files = files_under(&a);
    let mut differing = Vec::new();
    if files != files_under(&b) {
        differing.push("file lists".to_string());
    }
    for f in &files {
        if std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() {
            differing.push(f.display().to_string());
        }
    }
    let checkpoints = files.iter().filter(|f| f.extension().is_some_and(|e| e == "ckpt")).count();
    let csvs = files.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")).count();
    check(
        differing.is_empty() && out_a == out_b && checkpoints > 0 && csvs > 0,
        format!(
            "two run-all passes (1 and 4 threads): {} files incl. {checkpoints} checkpoints and {csvs} CSVs, differing {differing:?}",
            files.len()
        ),
    )
}

fn data_contracts(scratch: &Path) -> Verdict {
    let cfg = ExperimentConfig::default();
    let manifest = simulate_manifest(&cfg.simulation, cfg.seed);
    let train = load_split(&manifest, Split::Train, scratch).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;
    let mut worst_sum = 0.0f64;
    for seed in 0..5 {
        let set = build_unsupervised_set(&train, MomStrategy::OneOrTwoSrc, 0.1, seed).map_err(|e| e.to_string())?;
        let singles = set.moms.iter().filter(|m| m.sources_in_x2 == 1).count();
        let want = single_source_count(set.moms.len(), 0.1);
        ok &= singles == want;
        if seed == 0 {
            notes.push(format!("{singles} single-source of {} MoMs (want round(0.1*{})={want})", set.moms.len(), set.moms.len()));
        }
        for m in &set.moms {
            for ((a, b), s) in m.x1.samples().iter().zip(m.x2.samples()).zip(m.xbar.samples()) {
                worst_sum = worst_sum.max((a + b - s).abs());
            }
        }
    }
    ok &= worst_sum <= MOM_SUM_TOL;
    notes.push(format!("xbar-(x1+x2) max {worst_sum:.1e} (tol {MOM_SUM_TOL:e})"));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w = Waveform::new((0..8000).map(|_| rng.gen_range(-1.0..1.0 - WAV_LSB)).collect(), 8000).unwrap();
    let path = scratch.join("roundtrip.wav");
    write_wav(&path, &w).map_err(|e| e.to_string())?;
    let back = read_wav(&path).map_err(|e| e.to_string())?;
    let wav_err = w.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok &= back.len() == w.len() && back.sample_rate() == 8000 && wav_err <= WAV_LSB;
    notes.push(format!("WAV round-trip max err {:.3} LSB", wav_err / WAV_LSB));
    check(ok, notes.join(", "))
}

fn report(results: &mut Vec<bool>, id: &str, name: &str, verdict: Verdict) {
    let (tag, detail) = match &verdict {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {id} {tag} {name}: {detail}");
    results.push(verdict.is_ok());
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut results = Vec::new();
    report(&mut results, "1", "loss values", loss_values());
    report(&mut results, "2", "mixture consistency", mixture_consistency());
    report(&mut results, "3", "assignment exactness", assignment_exactness());
    report(&mut results, "4", "gradient fidelity", gradient_fidelity());

    let toy = scratch.path().join("toy");
    let config = repo_file("configs/toy.toml");
    let run = run_cli(&[
        "--config",
        config.to_str().unwrap(),
        "--workdir",
        toy.to_str().unwrap(),
        "--threads",
        "1",
        "run-all",
    ]);
    match run {
        Ok((stdout, elapsed)) => {
            for line in stdout.lines() {
                println!("  toy {line}");
            }
            report(&mut results, "5", "output channel audit", channel_audit(&toy));
            report(&mut results, "6", "ordering relations", ordering(&key_values(&stdout), elapsed));
        }
        Err(e) => {
            report(&mut results, "5", "output channel audit", Err(e.clone()));
            report(&mut results, "6", "ordering relations", Err(e));
        }
    }
    report(&mut results, "7", "end-to-end determinism", determinism(scratch.path()));
    report(&mut results, "8", "data contracts", data_contracts(scratch.path()));

    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
