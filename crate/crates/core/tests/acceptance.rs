//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if a criterion fails that is not listed as a known failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csform::diagnostics::{
    chain_young_delta, check_corollary, initial_energy, pattern_residual, solve_dm, velocity_budget,
    DiagnosticsRecord, DmFailure,
};
use csform::integrator::{convergence_study, simulate_with, EventKind, Termination};
use csform::model::{phi_antiderivative, phi_antiderivative_inverse};
use csform::scenarios::{self, build, ScenarioKind, ScenarioOptions, ScenarioSpec};
use csform::{FormationSpec, Kernel, ModelParams, SwarmState};

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|c| c * c).sum::<f64>().sqrt()
}

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    /// Failure explained by the data rather than the implementation.
    known_failure: bool,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome {
        name,
        pass,
        detail,
        known_failure: false,
    }
}

/// Everything the criteria need from one run, gathered on the fly.
struct RunReport {
    spec: ScenarioSpec,
    elapsed: Duration,
    termination: Termination,
    collisions: usize,
    first: DiagnosticsRecord,
    last: DiagnosticsRecord,
    dissipated: f64,
    max_energy_increase: f64,
    conservation: f64,
    v_ceiling_ratio: f64,
    max_link_residual: f64,
    min_dist: f64,
    order_preserved: bool,
    pair_symmetry: f64,
}

fn run(spec: ScenarioSpec) -> RunReport {
    let e0 = initial_energy(&spec.initial, &spec.formation, spec.params.m, spec.params.beta);
    let v0 = spec.initial.mean_velocity();
    let x0 = spec.initial.mean_position();
    let p0 = spec.initial.positions().to_vec();
    let dim = spec.initial.dim();
    let started = Instant::now();

    let mut first: Option<DiagnosticsRecord> = None;
    let mut last: Option<DiagnosticsRecord> = None;
    let mut dissipated = 0.0;
    let mut max_energy_increase = f64::NEG_INFINITY;
    let mut conservation = 0.0f64;
    let mut v_ceiling_ratio = 0.0f64;
    let mut max_link_residual = 0.0f64;
    let mut min_dist = f64::INFINITY;
    let mut order_preserved = true;
    let mut pair_symmetry = 0.0f64;

    let (events, termination, _) = simulate_with(&spec.initial, &spec.params, &spec.formation, &spec.cfg, |s| {
        let d = &s.diagnostics;
        if let Some(prev) = &last {
            dissipated += 0.5 * (d.t - prev.t) * (d.dissipation + prev.dissipation);
            max_energy_increase = max_energy_increase.max(d.total_energy() - prev.total_energy());
        }
        for c in 0..dim {
            conservation = conservation
                .max((d.v_c[c] - v0[c]).abs())
                .max((d.x_c[c] - x0[c] - v0[c] * d.t).abs());
        }
        v_ceiling_ratio = v_ceiling_ratio.max(d.v_diameter / e0.v_diameter_ceiling);
        for g in pattern_residual(&s.state, &spec.formation).links {
            max_link_residual = max_link_residual.max(norm(&g));
        }
        min_dist = min_dist.min(d.min_dist);
        let x = s.state.positions();
        if dim == 1 {
            let n = x.len();
            for i in 0..n {
                for j in (i + 1)..n {
                    order_preserved &= (p0[i] - p0[j]) * (x[i] - x[j]) > 0.0;
                }
            }
        }
        if spec.name == "degenerate-square" {
            let r = |a: usize, b: usize| norm(&[x[2 * a] - x[2 * b], x[2 * a + 1] - x[2 * b + 1]]);
            pair_symmetry = pair_symmetry.max((r(0, 1) - r(2, 3)).abs());
        }
        if first.is_none() {
            first = Some(d.clone());
        }
        last = Some(d.clone());
    })
    .unwrap_or_else(|e| panic!("{} failed: {e}", spec.name));

    RunReport {
        elapsed: started.elapsed(),
        termination,
        collisions: events.iter().filter(|e| e.kind == EventKind::NumericalCollision).count(),
        first: first.unwrap(),
        last: last.unwrap(),
        dissipated,
        max_energy_increase,
        conservation,
        v_ceiling_ratio,
        max_link_residual,
        min_dist,
        order_preserved,
        pair_symmetry,
        spec,
    }
}

fn crossover(kernel: Kernel, alpha: f64) -> ScenarioSpec {
    scenarios::line_crossover_scenario(kernel, alpha).unwrap()
}

fn energy_identity(bird: &RunReport) -> Outcome {
    let drop = bird.first.total_energy() - bird.last.total_energy();
    let rel = (drop - bird.dissipated).abs() / drop.abs();
    let monotone = bird.max_energy_increase <= 0.0;
    outcome(
        "energy identity (bird)",
        rel < 1e-3 && monotone && bird.elapsed < Duration::from_secs(30),
        format!(
            "E0 - E(T) = {drop:.6e}, int D = {:.6e}, rel err {rel:.2e}; max step increase {:.2e}; {:.2?}",
            bird.dissipated, bird.max_energy_increase, bird.elapsed
        ),
    )
}

fn conservation(runs: &[&RunReport]) -> Outcome {
    let worst = runs.iter().map(|r| r.conservation).fold(0.0, f64::max);
    outcome(
        "conservation of v_c and x_c",
        worst <= 1e-8,
        format!("worst deviation {worst:.2e} over {} runs", runs.len()),
    )
}

fn velocity_bound(runs: &[&RunReport]) -> Outcome {
    let worst = runs.iter().map(|r| r.v_ceiling_ratio).fold(0.0, f64::max);
    outcome(
        "velocity-diameter bound",
        worst <= 1.0 + 1e-6,
        format!("max v_diameter / 2 sqrt(n E0) = {worst:.3e} over {} runs", runs.len()),
    )
}

fn dm_bracket_bird(bird: &RunReport) -> Outcome {
    let s = &bird.spec;
    match solve_dm(&s.initial, &s.formation, s.params.m, s.params.beta) {
        Ok(d_m) => outcome(
            "d_M bracket (bird)",
            bird.max_link_residual <= d_m * (1.0 + 1e-6),
            format!("max residual {:.6e}, d_M {d_m:.6e}", bird.max_link_residual),
        ),
        Err(failure) => Outcome {
            name: "d_M bracket (bird)",
            pass: false,
            detail: format!("no admissible d_M: {failure}; observed max residual {:.6e}", bird.max_link_residual),
            known_failure: matches!(failure, DmFailure::BelowInitialResidual { .. }),
        },
    }
}

fn dm_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let links = rng.random_range(1..15usize);
        let n = links + 1;
        let dim = rng.random_range(1..=3usize);
        let beta = if rng.random_bool(0.5) { rng.random_range(0.05..1.0) } else { rng.random_range(1.0..3.0) };
        let residual = rng.random_range(0.0..3.0);
        // equal residuals along a straight chain
        let z = vec![vec![1.0; dim]; links];
        let step = 1.0 + residual / (dim as f64).sqrt();
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![-(i as f64) * step; dim]).collect();
        let m = rng.random_range(0.5..100.0);
        let v: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-0.3..0.3)).collect()).collect();
        let state = SwarmState::from_vectors(0.0, &x, &v).unwrap();
        let spec = FormationSpec::from_vectors(&z).unwrap();
        let a = norm(&pattern_residual(&state, &spec).links[0]).powi(2);
        let budget = velocity_budget(&state, m);
        let target = (budget + links as f64 * phi_antiderivative(a, beta)) / links as f64;
        let oracle = phi_antiderivative_inverse(target, beta).map(f64::sqrt);
        match (solve_dm(&state, &spec, m, beta), oracle) {
            (Ok(d), Ok(o)) => worst = worst.max((d - o).abs() / (1.0 + o)),
            (Err(DmFailure::BudgetExceedsSupremum { .. }), Err(_)) => {}
            (got, want) => {
                return outcome("d_M closed-form oracle", false, format!("mismatch: {got:?} vs {want:?}"));
            }
        }
    }
    outcome(
        "d_M closed-form oracle",
        worst <= 1e-9,
        format!("100 instances, worst relative difference {worst:.2e}"),
    )
}

fn crossover_matrix(runs: &[&RunReport; 4]) -> Outcome {
    let clean = |r: &RunReport| r.order_preserved && r.collisions == 0 && r.termination == Termination::Completed;
    let mut detail = Vec::new();
    for r in runs {
        detail.push(format!(
            "{} a={}: order {}, {} collisions, {:?}",
            r.spec.params.kernel.name(),
            r.spec.params.alpha,
            if r.order_preserved { "kept" } else { "changed" },
            r.collisions,
            r.termination
        ));
    }
    let [strong, weak, reg_hi, reg_lo] = runs;
    let weak_flagged = weak.termination == Termination::Collision || weak.collisions > 0;
    let pass = clean(strong)
        && !clean(weak)
        && weak_flagged
        && !reg_hi.order_preserved
        && !reg_lo.order_preserved;
    outcome("crossover matrix", pass, detail.join("; "))
}

fn degenerate_square(plain: &RunReport, swapped: &RunReport) -> Outcome {
    let collapse = plain.min_dist < 1e-3 && plain.pair_symmetry <= 1e-6;
    let formed = swapped.last.pattern_error < 1e-4 && swapped.last.v_diameter < 1e-4 && swapped.last.t >= 200.0;
    outcome(
        "degenerate square",
        collapse && formed,
        format!(
            "unswapped: min dist {:.3e} by t = {}, |r12 - r34| <= {:.1e}; swapped: pattern_error {:.1e}, v_diameter {:.1e} at t = {}",
            plain.min_dist, plain.last.t, plain.pair_symmetry, swapped.last.pattern_error, swapped.last.v_diameter, swapped.last.t
        ),
    )
}

fn pattern_formation(runs: &[&RunReport]) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for r in runs {
        let pe = r.last.pattern_error / r.first.pattern_error;
        let vd = r.last.v_diameter / r.first.v_diameter;
        let ok = pe < 1e-3
            && vd < 1e-3
            && r.min_dist > 0.0
            && r.termination == Termination::Completed
            && r.last.t >= 200.0;
        pass &= ok;
        detail.push(format!(
            "{}: pe ratio {pe:.1e}, vd ratio {vd:.1e}, min dist {:.1e}, {:.2?}",
            r.spec.name, r.min_dist, r.elapsed
        ));
    }
    let rings = runs.iter().find(|r| r.spec.name == "rings").unwrap();
    pass &= rings.elapsed < Duration::from_secs(300);
    outcome("pattern formation", pass, detail.join("; "))
}

fn chain_young_monte_carlo() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst_margin = f64::INFINITY;
    let mut samples = 0usize;
    for n in 2..=20usize {
        let contraction = chain_young_delta(n).contraction();
        let links = n - 1;
        let mut check = |a: &[Vec<f64>]| {
            let sq: f64 = a.iter().map(|v| v.iter().map(|c| c * c).sum::<f64>()).sum();
            let cross: f64 = a.windows(2).map(|w| w[0].iter().zip(&w[1]).map(|(p, q)| p * q).sum::<f64>()).sum();
            let lhs = -sq + cross;
            let rhs = -contraction * sq;
            worst_margin = worst_margin.min((rhs - lhs) / sq);
            samples += 1;
        };
        for _ in 0..1000 {
            let dim = rng.random_range(1..=3usize);
            let a: Vec<Vec<f64>> = (0..links)
                .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            check(&a);
        }
        // the maximizing chain a_i = sin(i pi / n)
        let a: Vec<Vec<f64>> = (1..=links)
            .map(|i| vec![(i as f64 * std::f64::consts::PI / n as f64).sin()])
            .collect();
        check(&a);
    }
    outcome(
        "chain Young inequality (Monte Carlo)",
        worst_margin >= 0.0,
        format!("{samples} chains, n = 2..20, smallest normalized margin {worst_margin:.3e}"),
    )
}

fn corollary() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let mut all = true;
    for _ in 0..50 {
        let n = rng.random_range(2..12usize);
        let dim = rng.random_range(1..=3usize);
        let z: Vec<Vec<f64>> = (0..n - 1)
            .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let spec = FormationSpec::from_vectors(&z).unwrap();
        let x = scenarios::reconstruct(&vec![0.0; dim], &spec);
        let common: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let state = SwarmState::from_vectors(0.0, &x, &vec![common; n]).unwrap();
        let beta = rng.random_range(0.05..0.95);
        let verdict = check_corollary(&state, &spec, rng.random_range(0.5..60.0), beta).unwrap();
        let separated = verdict.pairs.iter().all(|p| p.lhs > 0.0);
        all &= !separated || verdict.overall;
    }
    let hand = |z: f64| {
        let state = SwarmState::new(0.0, 1, vec![z, 0.0], vec![1.0, -1.0]).unwrap();
        check_corollary(&state, &FormationSpec::new(1, vec![z]).unwrap(), 1.0, 0.5).unwrap()
    };
    let pass5 = hand(5.0);
    let fail2 = hand(2.0);
    let hand_ok = pass5.overall
        && (pass5.pairs[0].rhs - 6.0).abs() < 1e-12
        && pass5.pairs[0].lhs == 25.0
        && !fail2.overall
        && fail2.pairs[0].lhs == 4.0;
    outcome(
        "corollary checker",
        all && hand_ok,
        format!(
            "50 consensus instances {}; z = 5: {} vs rhs {:.6}; z = 2: {} vs rhs {:.6}",
            if all { "all hold" } else { "some fail" },
            pass5.pairs[0].lhs,
            pass5.pairs[0].rhs,
            fail2.pairs[0].lhs,
            fail2.pairs[0].rhs
        ),
    )
}

fn integrator_order() -> Outcome {
    let s = build(ScenarioKind::Bird, &ScenarioOptions::default()).unwrap();
    let params = ModelParams::new(s.params.k, 0.0, s.params.alpha, s.params.beta, Kernel::Regular).unwrap();
    let mut cfg = s.cfg;
    cfg.t_end = 1.0;
    let study = convergence_study(&s.initial, &params, &s.formation, &cfg, 0.05, 4).unwrap();
    let pass = study.ratios.iter().all(|r| (12.0..=20.0).contains(r));
    let ratios: Vec<String> = study.ratios.iter().map(|r| format!("{r:.2}")).collect();
    outcome("RK4 order", pass, format!("error ratios [{}]", ratios.join(", ")))
}

fn main() -> ExitCode {
    let specs = vec![
        build(ScenarioKind::Bird, &ScenarioOptions::default()).unwrap(),
        build(ScenarioKind::Circle, &ScenarioOptions::default()).unwrap(),
        build(ScenarioKind::Rings, &ScenarioOptions::default()).unwrap(),
        scenarios::degenerate_square_scenario(false).unwrap(),
        scenarios::degenerate_square_scenario(true).unwrap(),
        crossover(Kernel::Singular, 1.5),
        crossover(Kernel::Singular, 0.5),
        crossover(Kernel::Regular, 1.5),
        crossover(Kernel::Regular, 0.5),
    ];
    let reports: Vec<RunReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs.into_iter().map(|s| scope.spawn(move || run(s))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let [bird, circle, rings, plain, swapped, strong, weak, reg_hi, reg_lo] = &reports[..] else {
        unreachable!()
    };
    let all: Vec<&RunReport> = reports.iter().collect();

    let outcomes = vec![
        energy_identity(bird),
        conservation(&all),
        velocity_bound(&all),
        dm_bracket_bird(bird),
        dm_oracle(),
        crossover_matrix(&[strong, weak, reg_hi, reg_lo]),
        degenerate_square(plain, swapped),
        pattern_formation(&[bird, circle, rings]),
        chain_young_monte_carlo(),
        corollary(),
        integrator_order(),
    ];

    let mut unexpected = 0;
    for o in &outcomes {
        let tag = match (o.pass, o.known_failure) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("{tag} {}: {}", o.name, o.detail);
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria pass, {unexpected} unexpected failures", outcomes.len());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
