//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use common::{flat_row, random_expr, random_row, reference_eval, rng, test_schema};
use rewardopt::council::{argbest, rank, select_with_ground_truth, vote, Council};
use rewardopt::dsl::{eval_step, validate, Aggregator, EvalNotes, MetricProgram};
use rewardopt::env::{EnvName, EnvSpec};
use rewardopt::llm::scripted::DemoScript;
use rewardopt::orchestrator::rundir::build_index;
use rewardopt::orchestrator::{
    discover, evaluate_candidate, evaluate_program, gateway_for_run, mean_std, normalize, synthesize_sets,
    sweep_selection_accuracy, BackendKind, RunConfig, SynthConfig,
};
use rewardopt::table::TrajectoryTable;
use rewardopt::trainer::{test_parallel, train, TrainConfig};
use rewardopt::{Direction, RewardProgram};

type Criterion<'a> = (&'static str, &'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn dsl_oracle() -> Outcome {
    let schema = test_schema();
    let start = Instant::now();
    let mut r = rng(2024);
    let (mut worst, mut non_finite, mut crashes, mut invalid) = (0.0f64, 0usize, 0usize, 0usize);
    let n = 10_000;
    for _ in 0..n {
        let e = random_expr(&mut r, &schema, 6);
        if !validate(&e, &schema).is_valid() {
            invalid += 1;
            continue;
        }
        let rows: Vec<_> = (0..4).map(|_| random_row(&mut r, &schema)).collect();
        let run = std::panic::catch_unwind(|| {
            let program = RewardProgram::from_expr(e.clone(), &schema).expect("valid tree compiles");
            rows.iter()
                .map(|row| {
                    let fast = program.eval_row(&flat_row(&schema, row), &mut EvalNotes::default());
                    let named = eval_step(&e, row).expect("validated");
                    (fast, named, reference_eval(&e, row))
                })
                .collect::<Vec<_>>()
        });
        match run {
            Err(_) => crashes += 1,
            Ok(values) => {
                for (fast, named, want) in values {
                    if !fast.is_finite() || !named.is_finite() {
                        non_finite += 1;
                    }
                    worst = worst.max((fast - want).abs()).max((named - want).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && non_finite == 0 && crashes == 0 && invalid == 0 && elapsed < Duration::from_secs(30),
        format!(
            "{n} trees x 4 rows: max |diff| {worst:.1e}, {non_finite} non-finite, {crashes} crashes, {invalid} invalid, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn table_from(env: &EnvSpec, rows: &[&[(&str, f64)]]) -> TrajectoryTable {
    let mut t = TrajectoryTable::new(env.schema.clone());
    let action = vec![0.0; env.action_dim()];
    for values in rows {
        let state: Vec<f64> = env
            .schema
            .states()
            .iter()
            .map(|name| values.iter().find(|(k, _)| k == name).map_or(0.0, |(_, v)| *v))
            .collect();
        t.push(&state, &action, &state, 0).unwrap();
    }
    t
}

fn metric_fidelity() -> Outcome {
    let cp = EnvSpec::builtin(EnvName::Cartpole).unwrap();
    let dr = EnvSpec::builtin(EnvName::Drawer1d).unwrap();
    let hv = EnvSpec::builtin(EnvName::Hover3d).unwrap();
    let cart = cp
        .ground_truth(&table_from(
            &cp,
            &[&[("pole_angle", 0.0), ("cart_pos", 0.4)], &[("pole_angle", 0.0), ("cart_vel", -1.0)]],
        ))
        .unwrap();
    let drawer = dr
        .ground_truth(&table_from(
            &dr,
            &[&[("drawer_pos", 0.2)], &[("drawer_pos", 0.35)], &[("drawer_pos", 0.4)]],
        ))
        .unwrap();
    let hover = hv
        .ground_truth(&table_from(&hv, &[&[("x", 0.0), ("y", 0.0), ("z", 0.0)], &[("vx", 2.0)]]))
        .unwrap();
    outcome(
        cart == 0.0 && drawer == 2.0 / 3.0 && hover == 0.0,
        format!("cartpole {cart}, drawer {drawer}, hover {hover}"),
    )
}

fn dirs_identical(a: &Path, b: &Path) -> Result<usize, String> {
    let ia = build_index(a).map_err(|e| e.to_string())?;
    let ib = build_index(b).map_err(|e| e.to_string())?;
    if ia != ib {
        let first = ia
            .iter()
            .zip(&ib)
            .find(|(x, y)| x != y)
            .map(|(x, _)| x.path.clone())
            .unwrap_or_else(|| "file count".into());
        return Err(format!("differs at {first}"));
    }
    for entry in &ia {
        let x = std::fs::read(a.join(&entry.path)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(&entry.path)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("bytes differ in {}", entry.path));
        }
    }
    Ok(ia.len())
}

fn replay_determinism(tmp: &Path) -> Outcome {
    let mut config = RunConfig::for_env(EnvName::Cartpole);
    config.out = tmp.join("recorded");
    let gw = gateway_for_run(&config, 1).unwrap();
    if let Err(e) = discover(&config, 1, &gw) {
        return outcome(false, format!("recording failed: {e}"));
    }
    let transcript = config.run_dir(1).join("transcript.jsonl");
    config.backend.kind = BackendKind::Replay;
    config.backend.transcript = Some(transcript);
    let mut slowest = Duration::ZERO;
    let mut dirs = Vec::new();
    for name in ["replay_a", "replay_b"] {
        config.out = tmp.join(name);
        let start = Instant::now();
        let gw = gateway_for_run(&config, 1).unwrap();
        if let Err(e) = discover(&config, 1, &gw) {
            return outcome(false, format!("replay failed: {e}"));
        }
        slowest = slowest.max(start.elapsed());
        dirs.push(config.run_dir(1));
    }
    match dirs_identical(&dirs[0], &dirs[1]) {
        Ok(files) => outcome(
            slowest < Duration::from_secs(300),
            format!("{files} files byte-identical across two replays; slowest replay {:.1}s", slowest.as_secs_f64()),
        ),
        Err(e) => outcome(false, e),
    }
}

fn voting_properties() -> Outcome {
    let mut r = rng(99);
    let cases = 2000;
    let mut failures = Vec::new();
    for case in 0..cases {
        let n = r.random_range(1..10);
        let m = r.random_range(1..8);
        let ids: Vec<u64> = (0..n).map(|i| 3 * i as u64 + 1).collect();
        let scores: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| f64::from(r.random_range(-3i32..4)) * 0.5).collect())
            .collect();
        let dirs: Vec<Direction> = (0..m)
            .map(|_| if r.random_bool(0.5) { Direction::Minimize } else { Direction::Maximize })
            .collect();
        let res = vote(&ids, &scores, &dirs).unwrap();
        let top = *res.tally.values().max().unwrap();
        let leaders: Vec<u64> = res.tally.iter().filter(|(_, &c)| c == top).map(|(&i, _)| i).collect();
        let first = rank(&ids, &scores[0], dirs[0]);
        let expected = *first.iter().find(|i| leaders.contains(i)).unwrap();
        let conserved = res.tally.values().sum::<usize>() == m;
        let majority = 2 * top <= m || (leaders.len() == 1 && res.winner == leaders[0]);
        let factor = r.random_range(0.01..100.0);
        let scaled: Vec<f64> = scores[0].iter().map(|s| s * factor).collect();
        let invariant = argbest(&ids, &scores[0], dirs[0]).unwrap() == argbest(&ids, &scaled, dirs[0]).unwrap();
        if !(conserved && majority && res.winner == expected && invariant) {
            failures.push(case);
        }
    }
    outcome(
        failures.is_empty(),
        format!("{cases} random matrices: conservation, majority, tie-break chain, scaling; {} failures", failures.len()),
    )
}

fn council_matches_oracle() -> Outcome {
    let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
    let mut r = rng(5);
    let sets = 300;
    let mut agree = 0;
    for _ in 0..sets {
        let n = r.random_range(1..=10u64);
        let tables: BTreeMap<u64, TrajectoryTable> = (1..=n)
            .map(|id| {
                let mut t = TrajectoryTable::new(env.schema.clone());
                let spread = r.random_range(0.01..1.0);
                for step in 0..r.random_range(1..20) {
                    let s: Vec<f64> = (0..env.state_dim()).map(|_| r.random_range(-spread..spread)).collect();
                    let sn: Vec<f64> = s.iter().map(|x| x * 0.9).collect();
                    t.push(&s, &[r.random_range(-10.0..10.0)], &sn, step / 5).unwrap();
                }
                (id, t)
            })
            .collect();
        let m = r.random_range(1..=5);
        let metrics = (0..m)
            .map(|_| {
                MetricProgram::compile("(s.pole_angle - 0)^2", Aggregator::Mean, Direction::Minimize, &env.schema)
                    .unwrap()
            })
            .collect();
        let council = Council::from_metrics(env.schema.clone(), metrics).unwrap();
        if council.select(&tables).unwrap().winner == select_with_ground_truth(&env, &tables).unwrap() {
            agree += 1;
        }
    }
    outcome(agree == sets, format!("{agree}/{sets} randomized candidate sets agree"))
}

fn ensemble_trend() -> Outcome {
    let sets = synthesize_sets(&SynthConfig::default()).unwrap();
    let table = sweep_selection_accuracy(&sets, 1..=5, 1..=3).unwrap();
    print!("{}", table.render());
    let one = table.cell("analyzers", 1, 1).unwrap();
    let three = table.cell("analyzers", 3, 1).unwrap();
    // paired difference per set, one-sided 95% lower bound
    let d: Vec<f64> = one
        .hits
        .iter()
        .zip(&three.hits)
        .map(|(&a, &b)| f64::from(u8::from(b)) - f64::from(u8::from(a)))
        .collect();
    let (mean, std) = mean_std(&d);
    let se = std * (d.len() as f64 / (d.len() as f64 - 1.0)).sqrt() / (d.len() as f64).sqrt();
    let lower = mean - 1.645 * se;
    let rows = (1..=5).all(|m| table.cell("analyzers", m, 1).is_some());
    outcome(
        sets.len() >= 200 && rows && lower >= 0.0,
        format!(
            "{} sets: acc(m=1) {:.3}, acc(m=3) {:.3}, paired diff {:+.3}, 95% lower bound {:+.3}",
            sets.len(),
            one.accuracy,
            three.accuracy,
            mean,
            lower
        ),
    )
}

fn desk_demo(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let mut config = RunConfig::for_env(EnvName::Cartpole);
    config.out = tmp.join("demo");
    let gw = gateway_for_run(&config, 1).unwrap();
    let result = match discover(&config, 1, &gw) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("discovery failed: {e}")),
    };
    let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
    let good = DemoScript::for_env(EnvName::Cartpole, 0).known_good();
    let first = &result.iterations[0].candidates;
    let good_count = first.iter().filter(|c| c.source_text == good).count();
    let winner = result.winner.as_ref().unwrap();
    let program = RewardProgram::compile(&winner.source_text, &env.schema).unwrap();
    let trainer = config.trainer_config();
    let report = evaluate_candidate(&env, &program, &trainer, 42, &config.test_seeds, 128).unwrap();
    let ratio = report.candidate.gp_mean / report.baseline.gp_mean;
    let elapsed = start.elapsed();
    outcome(
        first.len() == 8 && good_count == 1 && ratio <= 1.10 && elapsed < Duration::from_secs(900),
        format!(
            "winner '{}' GP {:.3e} vs baseline GP {:.3e} (ratio {:.3}, limit 1.10); {:.0}s",
            winner.source_text,
            report.candidate.gp_mean,
            report.baseline.gp_mean,
            ratio,
            elapsed.as_secs_f64()
        ),
    )
}

fn trainer_regression() -> Outcome {
    let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
    let config = TrainConfig::for_env(EnvName::Cartpole).with_seed(42);
    let score = || {
        let policy = train(&env, env.baseline_program(), &config).unwrap();
        test_parallel(&env, &policy, 128, 42).1
    };
    let (a, b) = (score(), score());
    outcome(
        a < 0.01 && a.to_bits() == b.to_bits(),
        format!("seed-42 test MSE_angle {a:.4e} (bound 0.01), repeat {b:.4e}"),
    )
}

fn bookkeeping() -> Outcome {
    let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
    let program = RewardProgram::compile("-(s.pole_angle^2) - 0.05*s.cart_pos^2", &env.schema).unwrap();
    let trainer = TrainConfig::for_env(EnvName::Cartpole);
    let seeds = [3120, 2190, 6838, 4024];
    let r = evaluate_candidate(&env, &program, &trainer, 42, &seeds, 128).unwrap();
    let g: Vec<f64> = r.candidate.gp.iter().map(|s| s.score).collect();
    let hand_mean = (g[0] + g[1] + g[2] + g[3]) / 4.0;
    let hand_std = (((g[0] - hand_mean).powi(2)
        + (g[1] - hand_mean).powi(2)
        + (g[2] - hand_mean).powi(2)
        + (g[3] - hand_mean).powi(2))
        / 4.0)
        .sqrt();
    let pp_alone = evaluate_program(&env, &program, &trainer, 42, &[1], 128).unwrap().pp;
    let base = r.baseline.gp_mean;
    let zero = normalize(base, base, Direction::Minimize).unwrap();
    let ex1 = format!("{:+.4}", normalize(3.40e-3, 4.80e-3, Direction::Minimize).unwrap());
    let ex2 = format!("{:+.4}", normalize(8.07, 7.04, Direction::Maximize).unwrap());
    let pass = r.candidate.pp.seed == 42
        && r.seed_audit.pp_seeds == vec![42]
        && r.seed_audit.disjoint
        && r.candidate.gp.iter().map(|s| s.seed).eq(seeds)
        && pp_alone == r.candidate.pp
        && (r.candidate.gp_mean - hand_mean).abs() < 1e-15
        && (r.candidate.gp_std - hand_std).abs() < 1e-15
        && zero == 0.0
        && ex1 == "+0.2917"
        && ex2 == "+0.1463";
    outcome(
        pass,
        format!(
            "PP {:.3e} @42, GP {:.3e} ± {:.2e} over {:?}; normalize(b,b) = {zero}; examples {ex1}, {ex2}",
            r.candidate.pp.score, r.candidate.gp_mean, r.candidate.gp_std, seeds
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("AC1", "DSL oracle equivalence", Box::new(dsl_oracle)),
        ("AC2", "ground-truth metric fixtures", Box::new(metric_fidelity)),
        ("AC3", "full-replay determinism", Box::new(|| replay_determinism(tmp.path()))),
        ("AC4", "voting properties", Box::new(voting_properties)),
        ("AC5", "aligned council equals oracle", Box::new(council_matches_oracle)),
        ("AC6", "ensemble accuracy trend", Box::new(ensemble_trend)),
        ("AC7", "end-to-end desk demo", Box::new(|| desk_demo(tmp.path()))),
        ("AC8", "trainer regression", Box::new(trainer_regression)),
        ("AC9", "PP/GP bookkeeping", Box::new(bookkeeping)),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{id} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
