use optlearn::grid::{Action, Grid};
use optlearn::simulator::{
    estimate_value_mc, path_rng, run_episode, simulate_episodes, ConstantPolicy, McEstimate,
    Policy, SimOptions,
};
use optlearn::solver::{extract_policy, solve_value, Init, SolveOptions};
use optlearn::ProblemSpec;

fn standard() -> ProblemSpec {
    ProblemSpec::new(vec![0.0], vec![2.0], 1.0, vec![1.0], vec![1.0], None).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn estimates_do_not_depend_on_worker_count() {
    let spec = standard();
    let learn = ConstantPolicy(Action::Continue(0));
    let opts = SimOptions {
        dt: 1e-3,
        t_max: 0.5,
    };
    let runs: Vec<(McEstimate, Vec<f64>)> = [1, 2, 5]
        .into_iter()
        .map(|t| {
            in_pool(t, || {
                let (est, eps) = estimate_value_mc(&spec, &learn, &[0.3], 3000, &opts, 42).unwrap();
                (est, eps.iter().map(|e| e.terminal_belief[0]).collect())
            })
        })
        .collect();
    for w in runs.windows(2) {
        assert_eq!(w[0].0.mean.to_bits(), w[1].0.mean.to_bits());
        assert_eq!(w[0].0.stderr.to_bits(), w[1].0.stderr.to_bits());
        assert_eq!(w[0].1, w[1].1);
    }
    let other = estimate_value_mc(&spec, &learn, &[0.3], 3000, &opts, 43)
        .unwrap()
        .0;
    assert_ne!(other.mean, runs[0].0.mean);
}

#[test]
fn belief_mean_is_preserved_over_time() {
    let spec = ProblemSpec::new(
        vec![0.0, 0.5],
        vec![2.0, 2.5],
        1.2,
        vec![1.0, 0.8],
        vec![1.0, 1.0],
        None,
    )
    .unwrap();
    for (t_max, alt) in [(0.25, 0), (1.0, 1), (3.0, 0)] {
        let opts = SimOptions { dt: 1e-3, t_max };
        let x0 = [0.35, 0.6];
        let episodes = simulate_episodes(
            &spec,
            &ConstantPolicy(Action::Continue(alt)),
            &x0,
            10_000,
            &opts,
            7,
        )
        .unwrap();
        let moved: Vec<f64> = episodes.iter().map(|e| e.terminal_belief[alt]).collect();
        let est = McEstimate::from_samples(&moved, 7);
        assert!(
            (est.mean - x0[alt]).abs() <= 3.0 * est.stderr,
            "t={t_max}: {est:?}"
        );
        // the other alternative is never touched
        let other = 1 - alt;
        assert!(episodes
            .iter()
            .all(|e| e.terminal_belief[other] == x0[other]));
        assert!(episodes.iter().all(|e| e.learning_time[other] == 0.0));
    }
}

#[test]
fn solved_policy_episodes_end_in_the_stop_region() {
    let spec = standard();
    let grid = Grid::new(&[201]).unwrap();
    let (v, _) = solve_value(
        &spec,
        &grid,
        Init::FromObstacle,
        &SolveOptions::default_for(1),
    )
    .unwrap();
    let policy = extract_policy(&spec, &v, 1e-5).unwrap();
    let opts = SimOptions::default_for(&spec);
    let mut stopped = 0;
    for j in 0..1000 {
        let e = run_episode(&spec, &policy, &[0.5], &opts, &mut path_rng(5, j)).unwrap();
        assert!(!e.truncated);
        assert_eq!(policy.action(&e.terminal_belief), Action::Stop);
        assert_eq!(e.payoff, e.terminal_reward - e.learning_cost);
        assert_eq!(e.terminal_reward, spec.obstacle(&e.terminal_belief));
        stopped += 1;
    }
    assert_eq!(stopped, 1000);
}

#[test]
fn continue_policy_cost_accounting() {
    let spec = ProblemSpec::new(vec![0.0], vec![2.0], 1.0, vec![1.0], vec![0.3], None).unwrap();
    let opts = SimOptions {
        dt: 1e-2,
        t_max: 1.5,
    };
    let learn = ConstantPolicy(Action::Continue(0));
    for j in 0..20 {
        let e = run_episode(&spec, &learn, &[0.4], &opts, &mut path_rng(1, j)).unwrap();
        assert!(e.truncated);
        assert!((e.stop_time - 1.5).abs() < 1e-12);
        assert_eq!(e.learning_time, vec![e.stop_time]);
        assert!((e.learning_cost - 0.3 * 1.5).abs() < 1e-12);
        assert_eq!(
            e.payoff,
            spec.obstacle(&e.terminal_belief) - e.learning_cost
        );
    }
}

#[test]
fn stop_policy_returns_the_obstacle() {
    let spec = standard();
    let opts = SimOptions::default_for(&spec);
    for x0 in [0.1, 0.5, 0.77] {
        let (est, eps) =
            estimate_value_mc(&spec, &ConstantPolicy(Action::Stop), &[x0], 50, &opts, 0).unwrap();
        assert_eq!(est.mean, spec.obstacle(&[x0]));
        assert_eq!(est.stderr, 0.0);
        assert!(eps
            .iter()
            .all(|e| e.stop_time == 0.0 && e.learning_cost == 0.0));
    }
}
