//! Acceptance criteria. Runs without the libtest harness so every line is
//! printed; exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gph::competing::CauseLabel;
use gph::hazard;
use gph::mixture::{estimate_generator, posterior_current};
use gph::montecarlo::{self, SimulationConfig};
use gph::numkernel::{Matrix, Vector};
use gph::scenario::{self, DIVORCE_CAUSE, MARRIED};
use gph::sojourn;
use gph::GphDistribution;

use common::*;

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn run(id: &'static str, name: &'static str, check: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)) {
        Ok(r) => r,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    Outcome {
        id,
        name,
        pass,
        detail,
        elapsed: start.elapsed(),
    }
}

fn within_budget(pass: bool, detail: String, started: Instant, budget: Duration) -> (bool, String) {
    let took = started.elapsed();
    (
        pass && took < budget,
        format!("{detail}; runtime {:.3} s (budget {} s)", took.as_secs_f64(), budget.as_secs()),
    )
}

fn classical_reduction() -> (bool, String) {
    let started = Instant::now();
    let mut rng = seeded(101);
    let mut worst: f64 = 0.0;
    let mut dists = vec![scenario::marriage(1.0).unwrap()];
    for m in [1, 2, 3, 4, 5] {
        let d = random_model(&mut rng, m);
        let psi = vec![1.0; m];
        let pi: Vec<f64> = d.model().pi().iter().copied().collect();
        let s0: Vec<f64> = d.model().s0().iter().copied().collect();
        dists.push(GphDistribution::new(pi, d.model().t(), psi, s0).unwrap());
    }
    for d in &dists {
        let t = d.model().t();
        let pi = d.model().pi();
        let ones = Vector::from_element(d.m(), 1.0);
        for k in 0..50 {
            let x = 0.4 * k as f64;
            let sv = row_form(pi, t, x, &ones);
            let dv = row_form(pi, t, x, d.delta());
            worst = worst
                .max((d.survival(x).unwrap() - sv).abs())
                .max((d.density(x).unwrap() - dv).abs());
        }
    }
    within_budget(
        worst <= 1e-10,
        format!("max |delta| {worst:.2e} over {} models x 50 points (tol 1e-10)", dists.len()),
        started,
        Duration::from_secs(1),
    )
}

fn erlang_mixture() -> (bool, String) {
    let d = GphDistribution::erlang_mixture(0.3, 3, 2.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let t = 0.1 * k as f64;
        let want = 0.3 * erlang_pdf(t, 3, 2.0) + 0.7 * erlang_pdf(t, 3, 1.0);
        worst = worst.max((d.density(t).unwrap() - want).abs());
    }
    (worst <= 1e-12, format!("max |delta| {worst:.2e} over 100 points (tol 1e-12)"))
}

fn longrun_value() -> (bool, String) {
    let started = Instant::now();
    let d = scenario::marriage(scenario::HETEROGENEOUS_PSI).unwrap();
    let info = posterior_current(d.model(), MARRIED, 4.0).unwrap();
    let direct = hazard::forward_intensity_at_duration(&d, &info, 2000.0).unwrap();
    let gap = (direct - 0.0644).abs();
    within_budget(
        gap <= 1e-3,
        format!("intensity at duration 2000 = {direct:.9}, target 0.0644 +/- 1e-3 (gap {gap:.3e})"),
        started,
        Duration::from_secs(1),
    )
}

fn longrun_closed_form() -> (bool, String) {
    let started = Instant::now();
    let d = scenario::marriage(scenario::HETEROGENEOUS_PSI).unwrap();
    let mut worst: f64 = 0.0;
    let mut limit = 0.0;
    for t in scenario::ANCHORS {
        let info = posterior_current(d.model(), MARRIED, t).unwrap();
        let direct = hazard::forward_intensity_at_duration(&d, &info, 2000.0).unwrap();
        limit = hazard::longrun_forward_intensity(&d, &info).unwrap();
        worst = worst.max((direct - limit).abs());
    }
    within_budget(
        worst <= 1e-6,
        format!("closed-form limit {limit:.12}, max |closed - direct| {worst:.2e} (tol 1e-6)"),
        started,
        Duration::from_secs(1),
    )
}

fn monte_carlo() -> (bool, String) {
    let started = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    let grid = [1.0, 2.0, 5.0, 10.0];

    let single = scenario::marriage(scenario::HETEROGENEOUS_PSI).unwrap();
    let cfg = SimulationConfig::new(1_000_000, 20.0, 2024).unwrap();
    let outs = montecarlo::simulate_outcomes(&single, &cfg, None).unwrap();
    let curve = montecarlo::empirical_survival(&outs, &grid).unwrap();
    let emp = curve.column("survival").unwrap();
    let se = curve.column("se").unwrap();
    let mut worst: f64 = 0.0;
    for (k, &t) in grid.iter().enumerate() {
        let z = (emp[k] - single.survival(t).unwrap()).abs() / se[k];
        worst = worst.max(z);
    }
    pass &= worst <= 3.0;
    notes.push(format!("survival max |z| {worst:.2}"));

    let comp = scenario::competing(scenario::HETEROGENEOUS_PSI).unwrap();
    let outs = montecarlo::simulate_outcomes(&comp, &SimulationConfig { seed: 2025, ..cfg }, None).unwrap();
    let mut worst: f64 = 0.0;
    for j in 1..=comp.p() {
        let c = comp.cause(j).unwrap();
        let curve = montecarlo::empirical_cause_cdf(&outs, c, &[5.0]).unwrap();
        let want = comp.unconditional_family(c, 5.0).unwrap().cdf;
        worst = worst.max((curve.column("cdf").unwrap()[0] - want).abs() / curve.column("se").unwrap()[0]);
    }
    pass &= worst <= 3.0;
    notes.push(format!("unconditional cause CDFs at 5 max |z| {worst:.2}"));

    let outs = montecarlo::simulate_outcomes(&comp, &SimulationConfig { seed: 2026, ..cfg }, Some(MARRIED)).unwrap();
    let info = gph::InformationState::initial(comp.model(), MARRIED).unwrap();
    let c: CauseLabel = comp.cause(DIVORCE_CAUSE).unwrap();
    let curve = montecarlo::empirical_cause_cdf(&outs, c, &[5.0]).unwrap();
    let want = comp.sub_distribution(&info, c, 5.0).unwrap().cdf;
    let z = (curve.column("cdf").unwrap()[0] - want).abs() / curve.column("se").unwrap()[0];
    pass &= z <= 3.0;
    notes.push(format!("divorce from Married by 5 |z| {z:.2}"));

    within_budget(pass, format!("{} (tol 3 SE, 10^6 paths each)", notes.join(", ")), started, Duration::from_secs(60))
}

fn intensity_consistency() -> (bool, String) {
    let d = scenario::marriage(scenario::HETEROGENEOUS_PSI).unwrap();
    let mut worst: f64 = 0.0;
    for t in scenario::ANCHORS {
        let info = posterior_current(d.model(), MARRIED, t).unwrap();
        let mut cumulative = 0.0;
        let mut from = t;
        for k in 1..=50 {
            let s = t + 0.4 * k as f64;
            cumulative += simpson(|u| hazard::forward_intensity(&d, &info, u).unwrap(), from, s, 40);
            from = s;
            let want = d.conditional_survival(&info, s).unwrap();
            worst = worst.max(((-cumulative).exp() - want).abs());
        }
    }
    (worst <= 1e-7, format!("max |delta| {worst:.2e} over 3 x 50 points (tol 1e-7)"))
}

fn moment_laplace() -> (bool, String) {
    let dists = [
        ("marriage", scenario::marriage(scenario::HETEROGENEOUS_PSI).unwrap()),
        ("erlang mixture", GphDistribution::erlang_mixture(0.3, 3, 2.0, 1.0).unwrap()),
    ];
    let mut worst_q: f64 = 0.0;
    let mut worst_l: f64 = 0.0;
    let h = 1e-3;
    for (_, d) in &dists {
        let upper = 60.0 / -d.model().dominant_psi_t().max(d.model().dominant_t());
        let lt: Vec<f64> = (0..8).map(|k| d.laplace_transform(k as f64 * h).unwrap()).collect();
        for n in 1..=3u32 {
            let closed = d.moment(n).unwrap();
            let quad = simpson(|t| t.powi(n as i32) * d.density(t).unwrap(), 0.0, upper, 40_000);
            worst_q = worst_q.max((quad - closed).abs() / closed);
            let w = forward_stencil(n as usize, lt.len());
            let deriv: f64 = w.iter().zip(&lt).map(|(w, l)| w * l).sum::<f64>() / h.powi(n as i32);
            let fd = if n % 2 == 1 { -deriv } else { deriv };
            worst_l = worst_l.max((fd - closed).abs() / closed);
        }
    }
    (
        worst_q <= 1e-6 && worst_l <= 1e-4,
        format!("quadrature rel {worst_q:.2e} (tol 1e-6), Laplace finite differences rel {worst_l:.2e} (tol 1e-4)"),
    )
}

fn competing_additivity() -> (bool, String) {
    let comp = scenario::competing(scenario::HETEROGENEOUS_PSI).unwrap();
    let mut worst_f: f64 = 0.0;
    let mut worst_l: f64 = 0.0;
    for t in scenario::ANCHORS {
        let info = posterior_current(comp.model(), MARRIED, t).unwrap();
        for k in 0..50 {
            let s = t + 0.4 * k as f64;
            let (fbar, f) = comp.overall_survival(&info, s).unwrap();
            let mut sum_f = fbar;
            let mut sum_l = 0.0;
            for j in 1..=comp.p() {
                let c = comp.cause(j).unwrap();
                sum_f += comp.sub_distribution(&info, c, s).unwrap().cdf;
                sum_l += comp.cause_forward_intensity(&info, c, s).unwrap();
            }
            worst_f = worst_f.max((sum_f - 1.0).abs());
            worst_l = worst_l.max((sum_l - f / fbar).abs());
        }
    }
    let mut worst_p: f64 = 0.0;
    for i in 0..comp.m() {
        let info = gph::InformationState::initial(comp.model(), i).unwrap();
        let total: f64 = (1..=comp.p())
            .map(|j| comp.ultimate_absorption(&info, comp.cause(j).unwrap()).unwrap())
            .sum();
        worst_p = worst_p.max((total - 1.0).abs());
    }
    (
        worst_f <= 1e-10 && worst_l <= 1e-12 && worst_p <= 1e-12,
        format!(
            "|sum F + Fbar - 1| {worst_f:.2e} (tol 1e-10), |sum lambda_j - lambda| {worst_l:.2e} (tol 1e-12), |sum p - 1| {worst_p:.2e} (tol 1e-12)"
        ),
    )
}

fn representation_equivalence() -> (bool, String) {
    let mut rng = seeded(8);
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let abs_or_rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    for k in 0..20 {
        let d = random_model(&mut rng, 2 + k % 4);
        let c = d.to_classical();
        for j in 0..25 {
            let t = 0.3 * j as f64;
            worst = worst
                .max(abs_or_rel(c.survival(t).unwrap(), d.survival(t).unwrap()))
                .max(abs_or_rel(c.density(t).unwrap(), d.density(t).unwrap()));
        }
        for n in 1..=4 {
            worst = worst.max(rel(c.moment(n).unwrap(), d.moment(n).unwrap()));
        }
    }
    (worst <= 1e-9, format!("max relative deviation {worst:.2e} over 20 random models (tol 1e-9)"))
}

fn shape_properties() -> (bool, String) {
    let homog = scenario::marriage(scenario::HOMOGENEOUS_PSI).unwrap();
    let het = scenario::marriage(scenario::HETEROGENEOUS_PSI).unwrap();
    let ages: Vec<f64> = (0..=200).map(|k| 0.1 * k as f64).collect();

    let residual = |d: &GphDistribution| -> Vec<f64> {
        ages.iter()
            .map(|&t| sojourn::residual_lifetime(d, &posterior_current(d.model(), MARRIED, t).unwrap()).unwrap())
            .collect()
    };
    let flat = residual(&homog);
    let flat_dev = flat.iter().map(|r| (r - flat[0]).abs()).fold(0.0, f64::max);

    let bend = residual(&het);
    let (argmin, min) = bend
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, r)| if r < acc.1 { (k, r) } else { acc });
    let u_bend = argmin > 0 && argmin < bend.len() - 1 && bend[0] > min && bend[bend.len() - 1] > min;

    let mut anchor_dev: f64 = 0.0;
    let infos: Vec<_> = scenario::ANCHORS
        .iter()
        .map(|&t| posterior_current(homog.model(), MARRIED, t).unwrap())
        .collect();
    for k in 0..=200 {
        let dur = 0.1 * k as f64;
        let base = hazard::forward_intensity_at_duration(&homog, &infos[0], dur).unwrap();
        for info in &infos[1..] {
            anchor_dev = anchor_dev.max((hazard::forward_intensity_at_duration(&homog, info, dur).unwrap() - base).abs());
        }
    }
    (
        flat_dev <= 1e-10 && u_bend && anchor_dev <= 1e-10,
        format!(
            "homogeneous residual deviation {flat_dev:.2e} (tol 1e-10); heterogeneous residual minimum {min:.4} at t = {:.1} (ends {:.4}, {:.4}); homogeneous anchor deviation {anchor_dev:.2e} (tol 1e-10)",
            ages[argmin],
            bend[0],
            bend[bend.len() - 1]
        ),
    )
}

fn estimation_round_trip() -> (bool, String) {
    let d = scenario::marriage(scenario::HETEROGENEOUS_PSI).unwrap();
    let cfg = SimulationConfig::new(10_000, 200.0, 42).unwrap();
    let paths: Vec<_> = montecarlo::simulate(&d, &cfg).unwrap().into_iter().map(|p| p.record).collect();
    let est = estimate_generator(&paths).unwrap();
    let m = d.m();
    let full = {
        let mut q = Matrix::zeros(m + 1, m + 1);
        q.view_mut((0, 0), (m, m)).copy_from(d.model().t());
        q.view_mut((0, m), (m, 1)).copy_from(d.model().d());
        q
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..m {
        for j in 0..=m {
            if i == j {
                continue;
            }
            let (Some(q), Some(se)) = (est.rates[i][j], est.rate_se[i][j]) else {
                return (false, format!("no estimate for q[{}][{}]", i + 1, j + 1));
            };
            let gap = (q - full[(i, j)]).abs();
            let z = if se > 0.0 { gap / se } else if gap == 0.0 { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
            checked += 1;
        }
    }
    (worst <= 3.0, format!("{checked} rates, max |q_hat - q| / SE = {worst:.2} (tol 3)"))
}

fn main() -> ExitCode {
    let results = [
        run("1", "classical reduction", classical_reduction),
        run("2", "Erlang-mixture closed form", erlang_mixture),
        run("3a", "long-run divorce rate equals 0.0644", longrun_value),
        run("3b", "long-run closed form matches direct evaluation", longrun_closed_form),
        run("4", "Monte Carlo concordance", monte_carlo),
        run("5", "intensity and distribution consistency", intensity_consistency),
        run("6", "moment and Laplace coherence", moment_laplace),
        run("7", "competing-risks additivity", competing_additivity),
        run("8", "representation equivalence", representation_equivalence),
        run("9", "marriage shape properties", shape_properties),
        run("10", "estimation round trip", estimation_round_trip),
    ];
    let mut failed = 0;
    for r in &results {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} criterion {:<3} {}: {} [{:.2} s]",
            r.id,
            r.name,
            r.detail,
            r.elapsed.as_secs_f64()
        );
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
