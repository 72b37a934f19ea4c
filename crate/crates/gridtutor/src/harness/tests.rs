use super::*;
use crate::gridworld::{AgentPose, Cell, Color, Dir, DoorState};
use crate::options::{Target, TargetKind};
use crate::teacher::FlawedTeacher;

fn omniscient(state: &EnvState) -> ExplorationMemory {
    let mut memory = ExplorationMemory::new(state);
    let mut probe = state.clone();
    for y in 0..state.height {
        for x in 0..state.width {
            if !state.cell(x, y).walkable() {
                continue;
            }
            for dir in crate::gridworld::Dir::ALL {
                probe.agent = AgentPose { x, y, dir, carrying: state.agent.carrying };
                memory.update(&probe);
            }
        }
    }
    memory
}

fn first_seeds(task: TaskKind, n: usize) -> Vec<u64> {
    test_seeds(task).into_iter().take(n).collect()
}

#[test]
fn aggregates_match_per_seed_records() {
    let records = vec![
        SeedRecord { seed: 1, outcome: Outcome::Success, steps: 20, episode_return: 0.88 },
        SeedRecord { seed: 3, outcome: Outcome::Timeout, steps: 150, episode_return: 0.0 },
        SeedRecord { seed: 5, outcome: Outcome::Success, steps: 30, episode_return: 0.82 },
    ];
    let metrics = EvalMetrics::from_records(records.clone()).unwrap();
    let n = records.len() as f64;
    let steps: f64 = records.iter().map(|r| f64::from(r.steps)).sum::<f64>() / n;
    let ret: f64 = records.iter().map(|r| r.episode_return).sum::<f64>() / n;
    assert_eq!(metrics.mean_timesteps, steps);
    assert_eq!(metrics.mean_return, ret);
    assert!((metrics.success_rate - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn empty_record_set_is_an_error() {
    assert!(EvalMetrics::from_records(Vec::new()).is_err());
    let params = PolicyParams::zeros();
    assert!(evaluate_policy(&params, TaskKind::SimpleDoorKey, &[], None).is_err());
    let mut teacher = Teacher::Oracle;
    assert!(evaluate_teacher_agent(&mut teacher, TaskKind::SimpleDoorKey, &[]).is_err());
}

#[test]
fn oracle_agent_solves_simple_rooms() {
    let mut teacher = Teacher::Oracle;
    let seeds = first_seeds(TaskKind::SimpleDoorKey, 50);
    let metrics = evaluate_teacher_agent(&mut teacher, TaskKind::SimpleDoorKey, &seeds).unwrap();
    assert_eq!(metrics.success_rate, 1.0);
    assert!(metrics.mean_timesteps <= 40.0, "mean steps {}", metrics.mean_timesteps);
    for r in &metrics.records {
        assert_eq!(r.outcome, Outcome::Success);
        let expected = 1.0 - 0.9 * f64::from(r.steps) / 150.0;
        assert!((r.episode_return - expected).abs() < 1e-12);
    }
}

#[test]
fn wait_only_teacher_times_out_everywhere() {
    // a fully inconsistent teacher never picks anything executable, so
    // every decision degrades to a Wait and every episode times out
    let profile = ErrorProfile::new(0.0, 0.0, 0.0, 1.0);
    let mut teacher = Teacher::Flawed(Box::new(FlawedTeacher::new(profile, true, 9)));
    let seeds = first_seeds(TaskKind::SimpleDoorKey, 5);
    let metrics = evaluate_teacher_agent(&mut teacher, TaskKind::SimpleDoorKey, &seeds).unwrap();
    assert_eq!(metrics.success_rate, 0.0);
    assert_eq!(metrics.mean_timesteps, 150.0);
    assert_eq!(metrics.mean_return, 0.0);
}

#[test]
fn random_student_fails_most_rooms() {
    let params = PolicyParams::seeded(1);
    let seeds = first_seeds(TaskKind::SimpleDoorKey, 50);
    let metrics = evaluate_policy(&params, TaskKind::SimpleDoorKey, &seeds, None).unwrap();
    assert!(metrics.success_rate <= 0.3, "rate {}", metrics.success_rate);
}

#[test]
fn stochastic_evaluation_is_seeded() {
    let params = PolicyParams::seeded(2);
    let seeds = first_seeds(TaskKind::SimpleDoorKey, 5);
    let a = evaluate_policy(&params, TaskKind::SimpleDoorKey, &seeds, Some(3)).unwrap();
    let b = evaluate_policy(&params, TaskKind::SimpleDoorKey, &seeds, Some(3)).unwrap();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.steps, rb.steps);
        assert_eq!(ra.episode_return, rb.episode_return);
    }
}

// a 9x9 room with a red key, red door and one lava cell, fully known
fn audit_room() -> (EnvState, ExplorationMemory) {
    let width = 9;
    let height = 9;
    let mut grid = vec![Cell::Floor; (width * height) as usize];
    for x in 0..width {
        grid[x as usize] = Cell::Wall;
        grid[((height - 1) * width + x) as usize] = Cell::Wall;
    }
    for y in 0..height {
        grid[(y * width) as usize] = Cell::Wall;
        grid[(y * width + width - 1) as usize] = Cell::Wall;
    }
    grid[(4 * width + 8) as usize] = Cell::Door(Color::Red, DoorState::Locked);
    grid[(2 * width + 2) as usize] = Cell::Key(Color::Red);
    grid[(4 * width + 4) as usize] = Cell::Lava;
    let state = EnvState {
        width,
        height,
        grid,
        agent: AgentPose { x: 2, y: 6, dir: Dir::North, carrying: None },
        step_count: 0,
        max_steps: 150,
        task: TaskKind::LavaDoorKey,
        seed: 0,
    };
    let memory = omniscient(&state);
    (state, memory)
}

#[test]
fn unexecutable_decision_is_inconsistent() {
    let (state, memory) = audit_room();
    // not carrying anything, so Drop cannot run
    let class = classify_decision(OptionId::Drop, &state, &memory, true);
    assert_eq!(class, DecisionClassification::Inconsistent);
    let unknown = OptionId::Open(Target { kind: TargetKind::Door, color: Color::Blue });
    assert_eq!(
        classify_decision(unknown, &state, &memory, true),
        DecisionClassification::Inconsistent
    );
}

#[test]
fn fetching_the_right_key_is_correct() {
    let (state, memory) = audit_room();
    let fetch = OptionId::Pickup(Target { kind: TargetKind::Key, color: Color::Red });
    assert_eq!(
        classify_decision(fetch, &state, &memory, true),
        DecisionClassification::Correct
    );
}

#[test]
fn lava_crossing_goto_is_incorrect() {
    let (mut state, _) = audit_room();
    // stand west of the lava, door straight east: the naive straight
    // line crosses the lava cell
    state.agent = AgentPose { x: 2, y: 4, dir: Dir::East, carrying: Some(Color::Red) };
    let memory = omniscient(&state);
    let goto = OptionId::GoTo(Target { kind: TargetKind::Door, color: Color::Red });
    assert_eq!(
        classify_decision(goto, &state, &memory, false),
        DecisionClassification::Incorrect
    );
    // the hazard-aware version of the same option detours and is fine
    assert_eq!(
        classify_decision(goto, &state, &memory, true),
        DecisionClassification::Correct
    );
}

#[test]
fn pointless_walk_is_inefficient() {
    let (state, memory) = audit_room();
    // walking to the door before holding the key only adds steps
    let wander = OptionId::GoTo(Target { kind: TargetKind::Door, color: Color::Red });
    assert_eq!(
        classify_decision(wander, &state, &memory, true),
        DecisionClassification::Inefficient
    );
}

#[test]
fn oracle_decisions_classify_correct_along_whole_episodes() {
    for seed in first_seeds(TaskKind::SimpleDoorKey, 10) {
        let mut state = generate(TaskKind::SimpleDoorKey, seed).unwrap();
        let mut memory = ExplorationMemory::new(&state);
        memory.update(&state);
        loop {
            let option = oracle_option(&state, &memory);
            assert_eq!(
                classify_decision(option, &state, &memory, true),
                DecisionClassification::Correct,
                "seed {seed}, option {option}"
            );
            let (next, result) = execute_option(&state, &mut memory, option, true);
            state = next;
            if result.done {
                assert_eq!(result.outcome, Outcome::Success);
                break;
            }
        }
    }
}

#[test]
fn oracle_stats_are_all_correct() {
    let mut teacher = Teacher::Oracle;
    let stats = teacher_stats(&mut teacher, TaskKind::SimpleDoorKey, 200, 0).unwrap();
    assert_eq!(stats.total, 200);
    assert_eq!(stats.frequencies[DecisionClassification::Correct.index()], 1.0);
    assert!(stats.expected.is_none());
}

#[test]
fn zero_decisions_is_an_error() {
    let mut teacher = Teacher::Oracle;
    assert!(teacher_stats(&mut teacher, TaskKind::SimpleDoorKey, 0, 0).is_err());
}

#[test]
fn flawed_stats_track_their_analytic_expectation() {
    let profile = ErrorProfile::chatglm_130b();
    let mut teacher = Teacher::Flawed(Box::new(FlawedTeacher::new(profile, true, 4)));
    let stats = teacher_stats(&mut teacher, TaskKind::ColoredDoorKey, 2000, 4).unwrap();
    let expected = stats.expected.unwrap();
    let sigma = stats.sigma.unwrap();
    for class in DecisionClassification::ALL {
        let i = class.index();
        let diff = (stats.frequencies[i] - expected[i]).abs();
        assert!(
            diff <= 3.0 * sigma[i] + 1e-9,
            "{}: freq {} vs expected {} (3σ {})",
            class.name(),
            stats.frequencies[i],
            expected[i],
            3.0 * sigma[i]
        );
    }
    // the profile has real error mass, so not everything is correct
    assert!(stats.frequencies[DecisionClassification::Correct.index()] < 0.95);
}

#[test]
fn teacher_spec_builds_each_kind() {
    assert!(matches!(TeacherSpec::Oracle.build(0).unwrap(), Teacher::Oracle));
    let flawed = TeacherSpec::Flawed {
        profile: "vicuna_13b".into(),
        lava_aware: false,
        seed: 1,
    };
    match flawed.build(0).unwrap() {
        Teacher::Flawed(f) => assert!(!f.lava_aware),
        other => panic!("expected flawed teacher, got {}", other.name()),
    }
    let bad = TeacherSpec::Flawed { profile: "nonexistent".into(), lava_aware: true, seed: 0 };
    assert!(bad.build(0).is_err());
}

#[test]
fn experiment_smoke_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        task: TaskKind::SimpleDoorKey,
        teacher: TeacherSpec::Oracle,
        repeat_seeds: vec![1],
        iterations: 2,
        out_dir: dir.path().to_path_buf(),
        ppo: PPOConfig {
            trajectories_per_iter: 2,
            epochs: 1,
            minibatch_size: 64,
            ..PPOConfig::default()
        },
        schedule: AnnealSchedule::default(),
        eval_seeds: 5,
        early_stop_success: None,
        methods: None,
        checkpoint_every: 0,
    };
    let out = run_experiment(&cfg).unwrap();
    for method in ["llm4teach", "tabula_rasa", "teacher_agent"] {
        let eval = out.join(method).join("seed1").join("eval.json");
        assert!(eval.exists(), "{method} missing eval.json");
        let metrics: EvalMetrics =
            serde_json::from_str(&std::fs::read_to_string(&eval).unwrap()).unwrap();
        assert_eq!(metrics.records.len(), 5);
    }
    for trained in ["llm4teach", "tabula_rasa"] {
        assert!(out.join(trained).join("seed1").join("metrics.csv").exists());
    }
    let plot = std::fs::read_to_string(out.join("plot_data.csv")).unwrap();
    assert!(plot.lines().next().unwrap().starts_with("method,repeat,iter"));
    assert!(plot.contains("llm4teach,1,0,"));
    assert!(plot.contains("teacher_agent,1,"));
    assert!(out.join("summary.json").exists());
    assert!(out.join("config.json").exists());

    // tabula-rasa never touched the teacher
    let csv = std::fs::read_to_string(out.join("tabula_rasa/seed1/metrics.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "0", "lambda must be zero");
        assert_eq!(cols[9], "0", "teacher queries must be zero");
    }

    // second invocation skips finished work but rewrites plot data
    run_experiment(&cfg).unwrap();
}

#[test]
fn experiment_config_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig {
        task: TaskKind::SimpleDoorKey,
        teacher: TeacherSpec::Oracle,
        repeat_seeds: vec![],
        iterations: 1,
        out_dir: dir.path().to_path_buf(),
        ppo: PPOConfig::default(),
        schedule: AnnealSchedule::default(),
        eval_seeds: 10,
        early_stop_success: None,
        methods: None,
        checkpoint_every: 0,
    };
    assert!(cfg.validate().is_err());
    cfg.repeat_seeds = vec![1];
    cfg.eval_seeds = 0;
    assert!(cfg.validate().is_err());
    cfg.eval_seeds = 10;
    cfg.methods = Some(vec!["bogus".into()]);
    assert!(cfg.methods().is_err());
    cfg.methods = Some(vec!["teacher_agent".into()]);
    assert_eq!(cfg.methods().unwrap(), vec![Method::TeacherAgent]);
}
