//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use optlearn::grid::{Action, Grid, ValueField};
use optlearn::operator::{
    barrier, barrier_operator, hjb_operator, monotonicity_constant, Jet, SymMatrix,
};
use optlearn::simulator::{estimate_value_mc, simulate_episodes, ConstantPolicy, SimOptions};
use optlearn::solver::{extract_policy, solve_value, Init, Scheme, SolveOptions};
use optlearn::verify::{
    check_complementarity, check_mc_against_value, check_value_bounds, comparison_experiment,
    doubling_ladder, ComparisonOptions, DEFAULT_PAIR_BUDGET,
};
use optlearn::{FieldSpace, ProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

fn standard() -> ProblemSpec {
    ProblemSpec::new(vec![0.0], vec![2.0], 1.0, vec![1.0], vec![1.0], None).unwrap()
}

fn asymmetric_2d() -> ProblemSpec {
    ProblemSpec::new(
        vec![0.0, 0.5],
        vec![2.0, 2.5],
        1.2,
        vec![1.0, 0.8],
        vec![1.0, 1.0],
        None,
    )
    .unwrap()
}

fn random_spec(rng: &mut ChaCha8Rng) -> ProblemSpec {
    let d = rng.random_range(1..=3);
    let pi_low: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
    let pi_high = pi_low
        .iter()
        .map(|l| l + rng.random_range(0.5..2.0))
        .collect();
    ProblemSpec::new(
        pi_low,
        pi_high,
        rng.random_range(0.5..2.0),
        (0..d).map(|_| rng.random_range(0.5..2.0)).collect(),
        (0..d).map(|_| rng.random_range(0.2..2.0)).collect(),
        None,
    )
    .unwrap()
}

fn random_jet(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Jet {
    let x = (0..d).map(|_| rng.random_range(1e-3..1.0 - 1e-3)).collect();
    let p = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
    let a: Vec<f64> = (0..d).map(|_| rng.random_range(-100.0..100.0)).collect();
    Jet::new(x, r, p, SymMatrix::from_diag(&a)).unwrap()
}

fn uniqueness_instances() -> Vec<(&'static str, ProblemSpec, Grid, SolveOptions)> {
    vec![
        (
            "d=1 n=201",
            standard(),
            Grid::new(&[201]).unwrap(),
            SolveOptions::default_for(1),
        ),
        (
            "d=2 n=51x51",
            asymmetric_2d(),
            Grid::new(&[51, 51]).unwrap(),
            SolveOptions::default_for(2),
        ),
    ]
}

type Criterion = Box<dyn FnOnce(&mut Solved) -> Outcome>;

type Solved = Vec<(&'static str, ProblemSpec, f64, ValueField, ValueField)>;

fn criterion_uniqueness(solved: &mut Solved) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, spec, grid, opts) in uniqueness_instances() {
        let started = Instant::now();
        let result = comparison_experiment(&spec, &grid, &ComparisonOptions::new(opts));
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok((report, below, above)) => {
                let pass = report.passed && secs <= 60.0;
                ok &= pass;
                notes.push(format!(
                    "{name}: sup-distance {:.3e} <= {:.0e}, order breaks {}, {:.1}s",
                    report.metrics["sup_distance"],
                    report.metrics["allowed_distance"],
                    report.metrics["order_breaks"] + report.metrics["log_order_breaks"],
                    secs
                ));
                solved.push((name, spec, opts.tol, below, above));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }
    Outcome::new(ok, notes.join("; "))
}

fn criterion_value_bounds(solved: &Solved) -> Outcome {
    let mut ok = !solved.is_empty();
    let mut notes = Vec::new();
    for (name, spec, tol, below, above) in solved {
        for field in [below, above] {
            let r = check_value_bounds(spec, field, *tol);
            ok &= r.passed;
            notes.push(format!(
                "{name}: [{:.6}, {:.6}] in [{}, {}], {} violations",
                r.metrics["min_value"],
                r.metrics["max_value"],
                spec.pi0,
                spec.obstacle_max(),
                r.violation_count
            ));
        }
    }
    Outcome::new(ok, notes.join("; "))
}

fn criterion_complementarity(solved: &Solved) -> Outcome {
    let mut ok = !solved.is_empty();
    let mut notes = Vec::new();
    for (name, spec, tol, below, above) in solved {
        for field in [below, above] {
            let r = check_complementarity(spec, field, *tol).unwrap();
            ok &= r.passed;
            notes.push(format!(
                "{name}: max gap {:.3e} <= {:.0e}",
                r.metrics["max_gap"],
                10.0 * tol
            ));
        }
    }
    Outcome::new(ok, notes.join("; "))
}

fn criterion_barrier_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut violations = 0usize;
    let samples = 100_000;
    for s in 0..samples {
        let spec = random_spec(&mut rng);
        let eps = [1e-3, -1e-3, 1e-1, -1e-1][s % 4];
        let r = rng.random_range(-3.0..3.0);
        let jet = random_jet(&mut rng, spec.dim(), r);
        let phi = barrier(&jet.x).unwrap();
        let d = spec.dim();
        let shifted = Jet::new(
            jet.x.clone(),
            r,
            (0..d).map(|i| jet.p[i] - eps * phi.gradient[i]).collect(),
            SymMatrix::from_diag(
                &(0..d)
                    .map(|i| jet.a.get(i, i) - eps * phi.hessian_diag[i])
                    .collect::<Vec<_>>(),
            ),
        )
        .unwrap();
        let lhs = barrier_operator(&spec, eps, &shifted).value;
        let rhs = hjb_operator(&spec, &jet).value;
        let rel = (lhs - rhs).abs() / rhs.abs().max(1.0);
        worst = worst.max(rel);
        if rel > 1e-12 {
            violations += 1;
        }
    }
    Outcome::new(
        violations == 0,
        format!("{samples} jets, worst relative error {worst:.2e}, {violations} above 1e-12"),
    )
}

fn criterion_theta() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples = 100_000;
    let mut violations = 0usize;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..samples {
        let spec = random_spec(&mut rng);
        let r_max = rng.random_range(-3.0..3.0);
        let r = r_max - rng.random_range(0.0..3.0);
        let r_low = r - rng.random_range(1e-6..3.0);
        let theta = monotonicity_constant(&spec, r_max);
        let jet = random_jet(&mut rng, spec.dim(), r);
        let low = Jet {
            r: r_low,
            ..jet.clone()
        };
        let change = hjb_operator(&spec, &jet).value - hjb_operator(&spec, &low).value;
        min_ratio = min_ratio.min(change / (theta * (r - r_low)));
        if change < theta * (r - r_low) {
            violations += 1;
        }
    }
    Outcome::new(
        violations == 0,
        format!("{samples} samples, min change/(theta dr) {min_ratio:.4}, {violations} violations"),
    )
}

fn criterion_doubling() -> Outcome {
    let spec = standard();
    let grid = Grid::new(&[101]).unwrap();
    let opts = ComparisonOptions::new(SolveOptions::default_for(1));
    let (_, below, above) = comparison_experiment(&spec, &grid, &opts).unwrap();
    // a second, visibly different solver output: the n=201 solution sampled
    // on the n=101 nodes
    let fine = solve_value(
        &spec,
        &Grid::new(&[201]).unwrap(),
        Init::FromObstacle,
        &opts.solve,
    )
    .unwrap()
    .0;
    let sampled = ValueField::from_fn(&grid, FieldSpace::Value, |x| fine.interpolate(x));
    let alphas = [1.0, 10.0, 100.0, 1000.0];
    let eps = [1e-1, 1e-2, 1e-3];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, u, v) in [
        ("below/above", &below, &above),
        ("n=101/n=201", &below, &sampled),
    ] {
        let (report, runs) = doubling_ladder(
            &u.to_log(&spec).unwrap(),
            &v.to_log(&spec).unwrap(),
            &alphas,
            &eps,
            DEFAULT_PAIR_BUDGET,
        )
        .unwrap();
        let all_bounds = runs.iter().all(|r| r.bound_holds);
        ok &= report.passed && all_bounds && runs.len() == 12;
        notes.push(format!(
            "{name}: {} runs, worst alpha|x-y|/bound {:.3}",
            runs.len(),
            report.metrics["worst_bound_ratio"]
        ));
    }
    Outcome::new(ok, notes.join("; "))
}

fn martingale_at(x0: f64, seed: u64) -> (f64, f64) {
    let spec = standard();
    let opts = SimOptions {
        dt: 1e-3,
        t_max: 2.0,
    };
    let learn = ConstantPolicy(Action::Continue(0));
    let episodes = simulate_episodes(&spec, &learn, &[x0], 10_000, &opts, seed).unwrap();
    let terminal: Vec<f64> = episodes.iter().map(|e| e.terminal_belief[0]).collect();
    let est = optlearn::simulator::McEstimate::from_samples(&terminal, seed);
    (est.mean - x0, est.stderr)
}

fn criterion_martingale() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for x0 in [0.25, 0.5, 0.75] {
        let (mut drift, mut se) = martingale_at(x0, 11);
        let mut tag = "";
        if drift.abs() > 3.0 * se {
            (drift, se) = martingale_at(x0, 12);
            tag = " (second seed)";
        }
        ok &= drift.abs() <= 3.0 * se;
        notes.push(format!(
            "x0={x0}: |mean-x0| {:.2e} vs 3se {:.2e}{tag}",
            drift.abs(),
            3.0 * se
        ));
    }
    Outcome::new(ok, notes.join("; "))
}

fn criterion_cross_validation() -> Outcome {
    let started = Instant::now();
    let spec = standard();
    let grid = Grid::new(&[201]).unwrap();
    let (value, _) = solve_value(
        &spec,
        &grid,
        Init::FromObstacle,
        &SolveOptions::default_for(1),
    )
    .unwrap();
    let policy = extract_policy(&spec, &value, 1e-5).unwrap();
    let opts = SimOptions {
        dt: 1e-3,
        t_max: 50.0 / spec.diffusion().min_k(),
    };
    let (mc, _) = estimate_value_mc(&spec, &policy, &[0.5], 10_000, &opts, 2024).unwrap();
    let v0 = value.interpolate(&[0.5]);
    let report = check_mc_against_value(&spec, v0, &mc);
    let secs = started.elapsed().as_secs_f64();
    Outcome::new(
        report.passed && secs <= 120.0,
        format!(
            "V_h(0.5) {v0:.5}, MC {:.5} +- {:.5}, excess {:.2e} (allowed +{:.3e}/-{:.2}), {secs:.1}s",
            mc.mean,
            mc.stderr,
            mc.mean - v0,
            report.metrics["excess_allowed"],
            report.metrics["shortfall_allowed"]
        ),
    )
}

fn criterion_scheme_monotone() -> Outcome {
    let spec = standard();
    let grid = Grid::new(&[51]).unwrap();
    let scheme = Scheme::new(&spec, &grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = grid.len();
    let mut violations = 0usize;
    let (mut lo_out, mut hi_out) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..100 {
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.5)).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + rng.random_range(0.0..0.5)).collect();
        scheme.sweep(&lo, &mut lo_out);
        scheme.sweep(&hi, &mut hi_out);
        violations += lo_out.iter().zip(&hi_out).filter(|(a, b)| a > b).count();
    }
    Outcome::new(
        violations == 0,
        format!(
            "100 ordered pairs, tau {:.3e}, {violations} violations",
            scheme.tau()
        ),
    )
}

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/example.conf");
    let text = std::fs::read_to_string(example)
        .unwrap()
        .replace("episodes = false", "episodes = true");
    std::fs::write(&config, text).unwrap();
    let mut outputs = Vec::new();
    for threads in [1, 2, 4] {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_optlearn"))
            .arg("all")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "17", "--threads", &threads.to_string(), "--quiet"])
            .status()
            .unwrap();
        if !status.success() {
            return Outcome::new(false, format!("run with {threads} threads exited {status}"));
        }
        let files: Vec<(String, Vec<u8>)> = [
            "value.csv",
            "policy.csv",
            "residual.csv",
            "episodes.csv",
            "summary.json",
        ]
        .iter()
        .map(|f| (f.to_string(), std::fs::read(out.join(f)).unwrap()))
        .collect();
        outputs.push(files);
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    let bytes: usize = outputs[0].iter().map(|(_, b)| b.len()).sum();
    Outcome::new(
        identical,
        format!("threads 1/2/4, 5 files, {bytes} bytes each run, identical = {identical}"),
    )
}

fn main() {
    let mut solved = Solved::new();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 uniqueness", Box::new(criterion_uniqueness)),
        ("2 value bounds", Box::new(|s| criterion_value_bounds(s))),
        (
            "3 complementarity",
            Box::new(|s| criterion_complementarity(s)),
        ),
        (
            "4 barrier identity",
            Box::new(|_| criterion_barrier_identity()),
        ),
        ("5 theta monotonicity", Box::new(|_| criterion_theta())),
        ("6 doubling bound", Box::new(|_| criterion_doubling())),
        ("7 belief martingale", Box::new(|_| criterion_martingale())),
        (
            "8 value vs Monte Carlo",
            Box::new(|_| criterion_cross_validation()),
        ),
        (
            "9 scheme monotonicity",
            Box::new(|_| criterion_scheme_monotone()),
        ),
        ("10 determinism", Box::new(|_| criterion_determinism())),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = check(&mut solved);
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {name}: {}", outcome.detail);
        if !outcome.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
