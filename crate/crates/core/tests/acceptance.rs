//! Acceptance criteria, one line each. Exits nonzero if a hard criterion
//! fails; the exploration criterion only warns.

use std::path::Path;
use std::time::{Duration, Instant};

use agentspace::config::RunConfig;
use agentspace::io::{save_json, ProcessFile};
use agentspace::maze::{build_maze, deceptive_maze, MazeSpec, DECEPTIVE_GAMMA};
use agentspace::metrics::run_to_dir;
use agentspace::optimizer::{train, SroParams, TrainSettings};
use agentspace::oracle::optimal_q;
use agentspace::process::two_chamber;
use agentspace::verify::{run_check, SuiteSize};
use agentspace::{DecisionProcess, RewardSpec, StochasticAgent};
use rayon::prelude::*;

const SEED: u64 = 20261014;

enum Verdict {
    Pass,
    Fail,
    Warn,
}

struct Line {
    id: u32,
    name: &'static str,
    verdict: Verdict,
    detail: String,
    elapsed: Duration,
}

fn check(id: u32, name: &'static str, check: &str, limit: Option<Duration>) -> Line {
    let start = Instant::now();
    let result = run_check(check, SEED, &SuiteSize::default());
    let elapsed = start.elapsed();
    let (verdict, detail) = match result {
        Ok(r) => {
            let in_time = limit.is_none_or(|l| elapsed < l);
            let mut detail = format!(
                "{} instances, {} violations, worst slack {:.3e}",
                r.instances, r.violations, r.worst_slack
            );
            if let Some(n) = r.notes.first() {
                detail += &format!("; {n}");
            }
            if !in_time {
                detail += &format!("; over the {:?} budget", limit.unwrap());
            }
            (if r.passed && in_time { Verdict::Pass } else { Verdict::Fail }, detail)
        }
        Err(e) => (Verdict::Fail, format!("error: {e}")),
    };
    Line {
        id,
        name,
        verdict,
        detail,
        elapsed,
    }
}

fn uniform_locus(p: &DecisionProcess) -> StochasticAgent {
    StochasticAgent::softmax(p.n_states(), p.n_actions(), vec![0.0; p.n_states() * p.n_actions()], 1.0).unwrap()
}

fn es_sanity() -> Line {
    let start = Instant::now();
    let p = two_chamber();
    let spec = RewardSpec::new(0.5).unwrap();
    let params = SroParams {
        batch_size: 64,
        noise_scale: 0.5,
        learning_rate: 1.0,
        novelty_weight: 0.0,
        ..SroParams::default()
    };
    let finals: Vec<f64> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let settings = TrainSettings::new(params.clone(), 30, SEED + seed);
            train(&p, &spec, uniform_locus(&p), &settings, |_| Ok(())).unwrap().final_j
        })
        .collect();
    let hits = finals.iter().filter(|&&j| j >= 0.6).count();
    let elapsed = start.elapsed();
    let lo = finals.iter().copied().fold(f64::INFINITY, f64::min);
    Line {
        id: 9,
        name: "ES sanity on two-chamber",
        verdict: if hits >= 8 && elapsed < Duration::from_secs(60) { Verdict::Pass } else { Verdict::Fail },
        detail: format!("{hits}/10 seeds end with J >= 0.6 (lowest {lo:.3}; optimum 1 from SWITCH in s0 then STAY, always-SWITCH 2/3, J(uniform) = 0.5)"),
        elapsed,
    }
}

fn start_value(p: &DecisionProcess, spec: &RewardSpec) -> f64 {
    let q = optimal_q(p, spec, 1e-10).unwrap();
    let s0 = p.initial().iter().position(|&x| x == 1.0).unwrap();
    q.row(s0).iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn exploration() -> Line {
    let start = Instant::now();
    let maze = deceptive_maze();
    let p = build_maze(&maze).unwrap();
    let spec = RewardSpec::new(DECEPTIVE_GAMMA).unwrap();
    let v_star = start_value(&p, &spec);
    let pocket = start_value(&build_maze(&MazeSpec { goal_reward: 0.0, ..maze }).unwrap(), &spec);
    // Goal-level: past the midpoint between the best pocket-only return and V*.
    let threshold = pocket + 0.5 * (v_star - pocket);
    let reached = |lambda: f64| -> usize {
        let params = SroParams {
            novelty_weight: lambda,
            k_nearest: 1,
            zeta_size: 50,
            ..SroParams::default()
        };
        (0..10u64)
            .into_par_iter()
            .filter(|&seed| {
                let mut hit = false;
                let settings = TrainSettings::new(params.clone(), 200, SEED + seed);
                train(&p, &spec, uniform_locus(&p), &settings, |r| {
                    hit |= r.j >= threshold;
                    Ok(())
                })
                .unwrap();
                hit
            })
            .count()
    };
    let (novel, plain) = (reached(1.0), reached(0.0));
    let elapsed = start.elapsed();
    let ok = novel >= 7 && plain <= 2 && elapsed < Duration::from_secs(600);
    Line {
        id: 10,
        name: "exploration on the deceptive maze (soft)",
        verdict: if ok { Verdict::Pass } else { Verdict::Warn },
        detail: format!(
            "goal-level J >= {threshold:.3} (pocket {pocket:.3}, V* {v_star:.3}): λ=1 reached it in {novel}/10 seeds, λ=0 in {plain}/10"
        ),
        elapsed,
    }
}

fn determinism(dir: &Path) -> Line {
    let start = Instant::now();
    let mut detail = Vec::new();
    let mut ok = true;
    let maze = ProcessFile {
        version: agentspace::io::PROCESS_FORMAT_VERSION,
        name: None,
        states: None,
        actions: None,
        sigma0: None,
        transition: None,
        reward: None,
        maze: Some(deceptive_maze()),
        gamma: DECEPTIVE_GAMMA,
    };
    save_json(&dir.join("maze.json"), &maze).unwrap();
    save_json(
        &dir.join("two-chamber.json"),
        &ProcessFile::from_process(&two_chamber(), &RewardSpec::new(0.5).unwrap()),
    )
    .unwrap();
    for (name, process, lambda, epochs) in [("two-chamber", "two-chamber.json", 0.0, 30), ("maze", "maze.json", 1.0, 20)] {
        let config = RunConfig {
            process: process.into(),
            seed: SEED,
            epochs,
            optimizer: SroParams {
                novelty_weight: lambda,
                ..SroParams::default()
            },
            ..RunConfig::default()
        };
        let run = config.resolve(dir).unwrap();
        let first = dir.join(format!("{name}-a"));
        let second = dir.join(format!("{name}-b"));
        run_to_dir(&run, &first, true).unwrap();
        // The second run uses a single worker thread.
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_to_dir(&run, &second, true))
            .unwrap();
        for f in ["metrics.jsonl", "metrics.csv", "summary.json"] {
            let same = std::fs::read(first.join(f)).unwrap() == std::fs::read(second.join(f)).unwrap();
            ok &= same;
            if !same {
                detail.push(format!("{name}/{f} differs"));
            }
        }
    }
    if ok {
        detail.push("metrics byte-identical across two runs each of two configs (all cores vs one thread)".into());
    }
    Line {
        id: 11,
        name: "determinism",
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail: detail.join("; "),
        elapsed: start.elapsed(),
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let secs = Duration::from_secs;
    let runs: Vec<Box<dyn FnOnce() -> Line>> = vec![
        Box::new(|| check(1, "pseudometric axioms", "pseudometric", Some(secs(60)))),
        Box::new(|| check(2, "identity corollary", "identity", None)),
        Box::new(|| check(3, "TVD bound", "tvd-bound", Some(secs(120)))),
        Box::new(|| check(4, "limit theorem", "limit", None)),
        Box::new(|| check(5, "quotient continuity", "quotient-continuity", None)),
        Box::new(|| check(6, "reward continuity", "reward-continuity", None)),
        Box::new(|| check(7, "MC-oracle agreement", "mc-agreement", None)),
        Box::new(|| check(8, "policy improvement witness", "policy-improvement", None)),
        Box::new(es_sanity),
        Box::new(exploration),
        Box::new(|| determinism(tmp.path())),
    ];
    let mut hard_failures = 0;
    for run in runs {
        let line = run();
        let tag = match line.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                hard_failures += 1;
                "FAIL"
            }
            Verdict::Warn => "WARN",
        };
        println!(
            "{tag} criterion {:>2} {} — {} [{:.1}s]",
            line.id,
            line.name,
            line.detail,
            line.elapsed.as_secs_f64()
        );
    }
    // Checks outside the numbered list.
    for (name, id) in [("measure equivalence", "measure-equivalence"), ("counterexamples", "counterexamples")] {
        let l = check(0, name, id, None);
        let tag = if matches!(l.verdict, Verdict::Pass) { "PASS" } else { "FAIL" };
        if !matches!(l.verdict, Verdict::Pass) {
            hard_failures += 1;
        }
        println!("{tag} supplementary {} — {} [{:.1}s]", l.name, l.detail, l.elapsed.as_secs_f64());
    }
    if hard_failures > 0 {
        println!("{hard_failures} hard criteria failed");
        std::process::exit(1);
    }
    println!("all hard criteria passed");
}
