//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Built with `harness = false` so the lines always reach stdout.
//!
//! The desk-scale pipelines run once from the checked-in configs under
//! `configs/` and are shared between the criteria that read them.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use richrep::cli::{run_config, ExperimentConfig, Overrides};
use richrep::cli::verify;
use richrep::experiments::{run_fewshot, run_transfer, vrex_objective, RunRecord, Split};
use richrep::nn::{cross_entropy_loss, kl_distill_loss, CosineHead, HeadKind, Network};
use richrep::probing::{fit_probe_k, ProbeConfig};
use richrep::richrep::{cat_features, concat_head_init, Provenance, RepresentationBank};
use richrep::{Matrix, Rng};

const SEED_GROUPS: usize = 5;
const NEED: usize = 4;

struct Line {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{e}"))
}

fn count(seeds: &[u64], ok: impl Fn(u64) -> bool) -> usize {
    seeds.iter().filter(|&&s| ok(s)).count()
}

fn minutes(d: Duration) -> f64 {
    d.as_secs_f64() / 60.0
}

fn gradients() -> Line {
    let t = Instant::now();
    let mut rng = Rng::new(11);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for kind in gradient_losses() {
        let dims = [6, 9, 7, 4];
        let p = GradProblem::new(12, dims, &mut rng);
        let net = live_net(dims, &p.x, &mut rng);
        let e = worst_relative_error(&net, &p, kind, 100, &mut rng);
        parts.push(format!("{} {e:.1e}", kind.name()));
        worst = worst.max(e);
    }
    let secs = t.elapsed().as_secs_f64();
    Line {
        id: 1,
        name: "backprop matches central differences",
        passed: worst < FD_TOL && secs < 10.0,
        detail: format!("worst rel err {worst:.2e} < {FD_TOL:.0e} [{}], {secs:.1}s < 10s", parts.join(", ")),
    }
}

fn property(id: usize, name: &'static str, r: verify::PropertyResult, extra: bool, note: String) -> Line {
    Line {
        id,
        name,
        passed: r.passed && extra,
        detail: format!("{} over {} instances{note}", r.detail, r.instances),
    }
}

fn union_monotone() -> Line {
    let t = Instant::now();
    let r = verify::union_monotonicity(21, 50, &verify::Hooks::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    property(2, "union cost never exceeds either part", r, secs < 60.0, format!(", {secs:.1}s < 60s"))
}

fn permutation_mixture() -> Line {
    let r = verify::permutation_mixture(22, 20).unwrap();
    property(3, "mixture cost flat under column permutation", r, true, String::new())
}

fn probe_agreement() -> Line {
    let r = verify::probe_uniqueness(23, 20).unwrap();
    property(4, "restarted probes agree on held-out rows", r, true, String::new())
}

/// The solver against the test-side golden-section grid oracle.
fn scalar_oracle() -> Line {
    let mut rng = Rng::new(24);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = 20;
        let l2 = 0.05 + 0.2 * rng.next_f64();
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y: Vec<usize> = x.iter().map(|&v| usize::from(v + 0.8 * rng.normal() > 0.0)).collect();
        let cfg = ProbeConfig {
            l2,
            max_iters: 5000,
            grad_tol: 1e-7,
            standardize: false,
        };
        let feats = Matrix::from_vec(n, 1, x.clone()).unwrap();
        let probe = fit_probe_k(&feats, &y, 2, &cfg, &mut rng.split()).unwrap();
        worst = worst.max((probe.cost - scalar_grid(&x, &y, l2)).abs());
    }
    Line {
        id: 5,
        name: "1-d probe cost matches grid oracle",
        passed: worst <= 1e-3,
        detail: format!("max |probe - grid| = {worst:.2e} <= 1e-3 over 10 instances"),
    }
}

fn exact_algebra() -> Line {
    let mut rng = Rng::new(25);
    let mut fails = Vec::new();

    // Positive rescaling of the features leaves cosine logits unchanged.
    // Powers of two keep c·z exact, so equality is bitwise.
    let head = CosineHead::glorot(8, 5, &mut rng);
    let z = random_matrix(30, 8, &mut rng);
    let base = head.forward_batch(&z).unwrap();
    for c in [0.125, 0.5, 2.0, 64.0, 2f64.powi(-20)] {
        if head.forward_batch(&z.scale(c)).unwrap() != base {
            fails.push(format!("cosine scale {c}"));
        }
    }

    // Concatenated head init reproduces the mean of the leg logits.
    let x = random_matrix(40, 6, &mut rng);
    let legs: Vec<Network> = (0..3).map(|_| random_net([6, 10, 8, 4], &mut rng)).collect();
    assert!(legs.iter().all(|l| l.head_kind() == HeadKind::Linear));
    let bank = RepresentationBank::new(legs.clone(), vec![1, 2, 3], Provenance::IndependentEpisodes).unwrap();
    let joint = concat_head_init(&bank).unwrap().forward(&cat_features(&bank, &x).unwrap()).unwrap();
    let mut concat_err: f64 = 0.0;
    let leg_logits: Vec<Matrix> = legs.iter().map(|l| l.logits(&x).unwrap()).collect();
    for i in 0..x.rows() {
        for k in 0..4 {
            let mean = leg_logits.iter().map(|m| m[(i, k)]).sum::<f64>() / 3.0;
            concat_err = concat_err.max((joint[(i, k)] - mean).abs());
        }
    }
    if concat_err > 1e-12 {
        fails.push(format!("concat init err {concat_err:.1e}"));
    }

    // vREx at beta = 0 is the plain mean of the environment risks.
    let logits = random_matrix(60, 3, &mut rng);
    let labels: Vec<usize> = (0..60).map(|_| rng.below(3)).collect();
    let risks: Vec<f64> = (0..3)
        .map(|e| {
            let idx: Vec<usize> = (e * 20..(e + 1) * 20).collect();
            let sub: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            cross_entropy_loss(&logits.select_rows(&idx), &sub).unwrap().0
        })
        .collect();
    let erm = risks.iter().sum::<f64>() / risks.len() as f64;
    if vrex_objective(&risks, 0.0) != erm {
        fails.push("vrex(beta=0) != erm".into());
    }

    // A teacher distilled into itself costs nothing.
    let t = random_matrix(25, 6, &mut rng).scale(3.0);
    let mut kl_worst: f64 = 0.0;
    for tau in [1.0, 4.0, 10.0] {
        kl_worst = kl_worst.max(kl_distill_loss(&t, &t, tau).unwrap().0.abs());
    }
    if kl_worst >= 1e-10 {
        fails.push(format!("kl(t, t) = {kl_worst:.1e}"));
    }

    Line {
        id: 6,
        name: "exact algebraic identities",
        passed: fails.is_empty(),
        detail: if fails.is_empty() {
            format!("cosine bitwise, concat-init err {concat_err:.1e}, vrex(0)=erm, kl(t,t)={kl_worst:.1e}")
        } else {
            fails.join("; ")
        },
    }
}

fn transfer_lines(r: &[RunRecord], elapsed: Duration) -> Vec<Line> {
    let seeds = seeds(r);
    let n = seeds.len();
    let v = |s, m: &str, sp, metric: &str| value(r, s, m, sp, metric);
    let mins = minutes(elapsed);

    let wd_method = r
        .iter()
        .find(|x| x.metric == "probe_transfer_accuracy" && x.method != "erm")
        .map(|x| x.method.clone())
        .expect("weight-decay ablation records");
    let pt = |s, m: &str| v(s, m, Split::IdTest, "probe_transfer_accuracy");
    let c7 = count(&seeds, |s| pt(s, "erm") > pt(s, &wd_method));

    let ood = |s, m: &str| v(s, m, Split::OodTest, "probe_accuracy");
    let id = |s, m: &str| v(s, m, Split::IdTest, "probe_accuracy");
    let c8 = count(&seeds, |s| {
        let og = ood(s, "cat5") - ood(s, "erm");
        let ig = id(s, "cat5") - id(s, "erm");
        og > ig && og >= 0.03
    });
    let mean_og = seeds.iter().map(|&s| ood(s, "cat5") - ood(s, "erm")).sum::<f64>() / n as f64;

    let gap = |s, m: &str| v(s, m, Split::IdTest, "leg_gap");
    let c9 = count(&seeds, |s| gap(s, "joint2") > gap(s, "cat2"));

    let ft = |s, m: &str| v(s, m, Split::OodTest, "finetune_accuracy");
    let c11 = count(&seeds, |s| ft(s, "2ft") >= ft(s, "init-ft"));

    let c12 = count(&seeds, |s| ood(s, "erm") <= ood(s, "distill5") && ood(s, "distill5") <= ood(s, "cat5"));

    vec![
        Line {
            id: 7,
            name: "probe transfer: wd=0 beats wd>0",
            passed: c7 >= NEED && mins < 5.0,
            detail: format!("{c7}/{n} groups (erm vs {wd_method}), pipeline {mins:.2} min < 5"),
        },
        Line {
            id: 8,
            name: "CAT5 gains more OOD than ID",
            passed: c8 >= NEED && mins < 10.0,
            detail: format!("{c8}/{n} groups with OOD gain > ID gain and >= 0.03 (mean OOD gain {mean_og:+.3}), {mins:.2} min < 10"),
        },
        Line {
            id: 9,
            name: "joint 2x legs more unequal than CAT2",
            passed: c9 >= NEED,
            detail: format!("{c9}/{n} groups"),
        },
        Line {
            id: 11,
            name: "two-stage fine-tuning >= naive",
            passed: c11 >= NEED,
            detail: format!("{c11}/{n} groups"),
        },
        Line {
            id: 12,
            name: "ERM <= DISTILL5 <= CAT5 on OOD probes",
            passed: c12 >= NEED,
            detail: format!("{c12}/{n} groups"),
        },
    ]
}

fn snapshot_line(r: &[RunRecord]) -> Line {
    let seeds = seeds(r);
    let acc = |s, m: &str| value(r, s, m, Split::Fewshot, "accuracy_mean");
    let c = count(&seeds, |s| acc(s, "cat5-s") > acc(s, "best-snap"));
    let episodes = r
        .iter()
        .find(|x| x.method == "cat5-s")
        .and_then(|x| x.extra.get("episodes").cloned())
        .unwrap_or_default();
    Line {
        id: 10,
        name: "CAT of 5 snapshots beats best snapshot",
        passed: c >= NEED && episodes == "600",
        detail: format!("{c}/{} groups, {episodes} episodes", seeds.len()),
    }
}

fn rerun_identical(cfg: &ExperimentConfig, root: &Path, tag: &str) -> Result<bool, String> {
    let mut bytes = Vec::new();
    for i in 0..2 {
        let ov = Overrides {
            out: Some(root.join(format!("{tag}-{i}"))),
            ..Default::default()
        };
        let dir: PathBuf = run_config(cfg.clone(), &ov).map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(dir.join("results.csv")).map_err(|e| e.to_string())?);
    }
    Ok(bytes[0] == bytes[1] && !bytes[0].is_empty())
}

fn determinism(start: Instant) -> Line {
    let root = tempfile::tempdir().unwrap();
    let mut fewshot = config("fewshot.json");
    fewshot.n_groups = 1;
    let mut ood = config("ood.json");
    ood.n_groups = 1;
    let cases = [
        ("smoke", config("smoke.json")),
        ("verify", config("verify.json")),
        ("fewshot", fewshot),
        ("ood", ood),
    ];
    let mut bad = Vec::new();
    for (tag, cfg) in &cases {
        match rerun_identical(cfg, root.path(), tag) {
            Ok(true) => {}
            Ok(false) => bad.push(format!("{tag} differs")),
            Err(e) => bad.push(format!("{tag}: {e}")),
        }
    }
    let mins = minutes(start.elapsed());
    Line {
        id: 13,
        name: "reruns are byte-identical",
        passed: bad.is_empty() && mins < 30.0,
        detail: if bad.is_empty() {
            format!("transfer, verify, fewshot, ood results.csv identical; full run {mins:.2} min < 30")
        } else {
            bad.join("; ")
        },
    }
}

fn main() {
    // `cargo test -- <filter>` passes arguments; anything that is not a
    // flag and does not name this suite skips it.
    if std::env::args().skip(1).any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }
    let start = Instant::now();
    let mut lines = vec![
        gradients(),
        union_monotone(),
        permutation_mixture(),
        probe_agreement(),
        scalar_oracle(),
        exact_algebra(),
    ];

    let transfer = config("transfer.json");
    let t = Instant::now();
    let records = run_transfer(&transfer.transfer, transfer.master_seed, SEED_GROUPS).expect("transfer pipeline");
    lines.extend(transfer_lines(&records, t.elapsed()));

    let fewshot = config("fewshot.json");
    let records = run_fewshot(&fewshot.fewshot, fewshot.master_seed, SEED_GROUPS).expect("fewshot pipeline");
    lines.push(snapshot_line(&records));

    lines.push(determinism(start));
    lines.sort_by_key(|l| l.id);

    let mut failed = 0;
    for l in &lines {
        let tag = if l.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag}  {}: {}", l.id, l.name, l.detail);
        failed += usize::from(!l.passed);
    }
    println!(
        "acceptance: {}/{} passed in {:.1} min",
        lines.len() - failed,
        lines.len(),
        minutes(start.elapsed())
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
