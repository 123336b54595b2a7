use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use rewardopt::council::vote;
use rewardopt::dsl::{Direction, RewardProgram};
use rewardopt::env::{EnvName, EnvSpec};
use rewardopt::orchestrator::{synthesize_sets, SynthConfig};
use rewardopt::trainer::{random_rollout, train, TrainConfig};

fn dsl_eval(c: &mut Criterion) {
    let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
    let program = RewardProgram::compile(
        "-(s.pole_angle^2) - 0.01*s.pole_ang_vel^2 + tanh(sn.cart_pos) * (abs(a.cart_force) < 5)",
        &env.schema,
    )
    .unwrap();
    let table = random_rollout(&env, 8, 100, 42);
    c.bench_function("dsl_eval_800_rows", |b| {
        b.iter(|| {
            let (s, a, n) = (env.state_dim(), env.action_dim(), env.state_dim());
            table
                .rows()
                .map(|r| program.eval_transition(&r[..s], &r[s..s + a], &r[s + a..s + a + n]))
                .sum::<f64>()
        })
    });
}

fn cem_train(c: &mut Criterion) {
    let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
    let config = TrainConfig {
        generations: 5,
        ..TrainConfig::for_env(EnvName::Cartpole)
    };
    let program = env.baseline_program().clone();
    let mut group = c.benchmark_group("cem");
    group.sample_size(10);
    group.bench_function("cartpole_5_generations", |b| {
        b.iter(|| train(&env, black_box(&program), &config).unwrap())
    });
    group.finish();
}

fn voting(c: &mut Criterion) {
    let ids: Vec<u64> = (1..=8).collect();
    let scores: Vec<Vec<f64>> = (0..5)
        .map(|j| ids.iter().map(|&i| ((i * 7 + j * 3) % 11) as f64).collect())
        .collect();
    let directions = vec![Direction::Minimize; 5];
    c.bench_function("vote_5x8", |b| {
        b.iter(|| vote(black_box(&ids), black_box(&scores), &directions).unwrap())
    });

    let sets = synthesize_sets(&SynthConfig {
        sets: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let set = &sets[0];
    let tables: BTreeMap<u64, _> = set.tables.clone();
    let council = set.council.subset(3, 1).unwrap();
    c.bench_function("council_select_3x8", |b| b.iter(|| council.select(black_box(&tables)).unwrap()));
}

criterion_group!(benches, dsl_eval, cem_train, voting);
criterion_main!(benches);
