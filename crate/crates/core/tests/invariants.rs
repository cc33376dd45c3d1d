use std::sync::Arc;

use proptest::prelude::*;

use dualnav::agentcore::{read_trajectories_jsonl, write_trajectories_jsonl, ActionKind, System};
use dualnav::harness::{
    anchor_configs, evaluate, mix_outcome, run_episode, weighted_intelligence, Agent, ConfigPoint, FastSystem, Planner, RunLimits,
    SlowSystem,
};
use dualnav::switch::{decide, GateParams, Reason, SwitchFeatures, STUCK_THRESHOLD, SWITCH_DIM};
use dualnav::system1::{Architecture, FastPolicy, ScorerParams};
use dualnav::system2::{jaccard, recall, PlannerConfig};
use dualnav::webenv::{generate_environment, sample_tasks, DifficultyLaw, EnvSpec, Environment, Task};

/// A small random site with six tasks; seeds whose start page leads nowhere
/// are skipped.
fn world(seed: u64) -> (Environment, Vec<Task>) {
    (0..)
        .find_map(|k: u64| {
            let env = generate_environment(&EnvSpec {
                pages: 15,
                mean_out_degree: 2.5,
                vocab: 60,
                seed: seed + 1000 * k,
            })
            .unwrap();
            let tasks = sample_tasks(&env, 6, &DifficultyLaw::Geometric { p: 0.4 }, seed + 1).ok()?;
            Some((env, tasks))
        })
        .expect("some seed works")
}

fn agent(seed: u64, s1: bool, s2: bool, gate_bias: f64) -> Agent {
    let fast: Arc<dyn FastSystem> = Arc::new(FastPolicy::new(ScorerParams::init(Architecture::CrossEncoder, 512, 8, seed)));
    let slow: Arc<dyn SlowSystem> = Arc::new(Planner {
        config: PlannerConfig {
            max_expansions: 30,
            ..Default::default()
        },
        prior: None,
    });
    Agent {
        s1: s1.then_some(fast),
        s2: s2.then_some(slow),
        gate: GateParams {
            weights: vec![0.0; SWITCH_DIM],
            bias: gate_bias,
        },
        ..Agent::new("prop")
    }
}

fn point() -> impl Strategy<Value = ConfigPoint> {
    (0.0..=1.0f64, 1.0..1000.0f64).prop_map(|(capability, cost)| ConfigPoint {
        label: String::new(),
        capability,
        cost,
    })
}

fn features() -> impl Strategy<Value = SwitchFeatures> {
    (0.0..20.0f64, any::<bool>(), 0u32..6, any::<bool>(), 0u32..20, any::<bool>(), 0u32..30).prop_map(
        |(rem, novel, stuck, invalid, len, s2, steps)| SwitchFeatures {
            estimated_remaining_steps: rem,
            page_novelty: novel,
            stuck_count: stuck,
            invalid,
            intent_length: len,
            last_system: if s2 { System::S2 } else { System::S1 },
            steps_elapsed: steps,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn episodes_end_in_exactly_one_stop(seed in 0u64..1000, max_steps in 1u32..12, s1 in any::<bool>(), bias in -3.0..3.0f64) {
        let (env, tasks) = world(seed);
        let a = agent(seed, s1, true, bias);
        let limits = RunLimits { max_steps, ..Default::default() };
        let mut pool = Vec::new();
        for task in &tasks {
            let ep = run_episode(&a, &env, task, &limits, &mut pool).unwrap();
            let recs = &ep.trajectory.records;
            prop_assert!(!recs.is_empty() && recs.len() <= max_steps as usize + 1);
            prop_assert_eq!(recs.last().unwrap().action.kind, ActionKind::Stop);
            prop_assert_eq!(recs.iter().filter(|r| r.action.kind == ActionKind::Stop).count(), 1);
            prop_assert_eq!(ep.score, ep.trajectory.evaluate());
        }
    }

    #[test]
    fn serial_evaluation_is_reproducible(seed in 0u64..1000, memory in any::<bool>()) {
        let (env, tasks) = world(seed);
        let a = Agent { memory, ..agent(seed, true, true, 0.5) };
        let limits = RunLimits { max_steps: 10, epochs: 2, seed, ..Default::default() };
        let x = evaluate(&a, &env, &tasks, &limits, Vec::new(), 1).unwrap();
        let y = evaluate(&a, &env, &tasks, &limits, Vec::new(), 1).unwrap();
        prop_assert_eq!(&x.trajectories, &y.trajectories);
        prop_assert_eq!(&x.report, &y.report);
        if !memory {
            let z = evaluate(&a, &env, &tasks, &limits, Vec::new(), 4).unwrap();
            prop_assert_eq!(&x.trajectories, &z.trajectories);
        }
        let n = x.report.rows.len() as f64;
        let success = x.report.rows.iter().map(|r| f64::from(r.score)).sum::<f64>() / n;
        let tokens = x.report.rows.iter().map(|r| r.tokens as f64).sum::<f64>() / n;
        prop_assert!((success - x.report.success_rate).abs() < 1e-12);
        prop_assert!((tokens - x.report.mean_tokens).abs() < 1e-9);
    }

    #[test]
    fn trajectories_round_trip(seed in 0u64..1000) {
        let (env, tasks) = world(seed);
        let run = evaluate(&agent(seed, true, true, 0.0), &env, &tasks, &RunLimits { max_steps: 8, ..Default::default() }, Vec::new(), 1).unwrap();
        let mut buf = Vec::new();
        write_trajectories_jsonl(&mut buf, &run.trajectories).unwrap();
        let flat: Vec<_> = run
            .trajectories
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.records.iter().map(move |r| (i, t.task.id, r.clone())))
            .collect();
        prop_assert_eq!(read_trajectories_jsonl(&buf[..]).unwrap(), flat);
    }
}

proptest! {
    #[test]
    fn anchors_ignore_input_order(points in prop::collection::vec(point(), 1..10), rot in 0usize..10) {
        let points: Vec<ConfigPoint> = points
            .into_iter()
            .enumerate()
            .map(|(i, p)| ConfigPoint { label: format!("p{i}"), ..p })
            .collect();
        let a = anchor_configs(&points).unwrap();
        let mut shuffled = points.clone();
        shuffled.reverse();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        prop_assert_eq!(anchor_configs(&shuffled).unwrap(), a.clone());
        for p in &points {
            prop_assert!(a.success_per_token >= p.capability / p.cost - 1e-15);
        }
        let (s, c) = mix_outcome(&a.fast, &a.slow, a.split);
        prop_assert!((s - a.success).abs() < 1e-12 && (c - a.cost).abs() < 1e-9);
    }

    #[test]
    fn rules_override_any_gate(f in features(), w in prop::collection::vec(-20.0..20.0f64, SWITCH_DIM), b in -20.0..20.0f64) {
        let gate = GateParams { weights: w, bias: b };
        let d = decide(&gate, &f);
        prop_assert!(d.lambda > 0.0 && d.lambda < 1.0 || d.lambda == 0.0 || d.lambda == 1.0);
        if f.stuck_count >= STUCK_THRESHOLD || f.invalid || f.steps_elapsed == 0 {
            prop_assert_eq!(d.system, System::S2);
            prop_assert_ne!(d.reason, Reason::Gate);
        } else {
            prop_assert_eq!(d.system == System::S1, d.lambda >= 0.5);
        }
    }

    #[test]
    fn intelligence_is_a_weighted_mean(envs in prop::collection::vec((0.0..500.0f64, 0.0..=1.0f64), 1..8)) {
        let v = weighted_intelligence(&envs).unwrap();
        let lo = envs.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let hi = envs.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(a in prop::collection::vec(0u32..20, 0..8), b in prop::collection::vec(0u32..20, 0..8)) {
        let j = jaccard(&a, &b);
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert!((0.0..=1.0).contains(&j));
    }
}

#[test]
fn recall_skips_unrelated_experiences() {
    let (env, tasks) = world(5);
    let a = agent(5, false, true, 0.0);
    let run = evaluate(&a, &env, &tasks, &RunLimits { max_steps: 6, ..Default::default() }, Vec::new(), 1).unwrap();
    assert_eq!(run.pool.len(), tasks.len());
    for t in &tasks {
        for e in recall(&run.pool, t, 10) {
            assert!(jaccard(&e.intent, &t.intent) > 0.0);
        }
    }
}
