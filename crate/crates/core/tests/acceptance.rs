//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Runs without the libtest harness so the lines
//! always reach stdout.

mod common;

use apce_core::bayes::{
    draw_truncated_normal, gibbs_prior_only, gibbs_run, np_sensitivity, parameter_names, posterior_apce,
    unconfounded_plugin, DecisionFn, GibbsConfig, StratumDecisionTable, XiTable,
};
use apce_core::data::encode::Design;
use apce_core::data::reference::{reconstruct, with_random_hearing_dates};
use apce_core::fairness::{fairness_delta, fairness_delta_diff};
use apce_core::models::binary::fit_outcome_probit;
use apce_core::models::ordinal::{fit_ordinal, OrdinalFit};
use apce_core::models::Link;
use apce_core::nonparam::{apce_sign_table, diff_in_means_itt, potential_outcome_bounds, IttTarget};
use apce_core::numeric::stats::{ks_uniform, mean, variance};
use apce_core::policy::{expected_utility, optimal_rule, optimal_share_grid, UtilitySpec};
use apce_core::rng::substream;
use apce_core::spillover::{crt_power, crt_test};
use apce_core::synth::{oracle_apce, synth_generate, AttributeLaw, CovariateLaw, DgpSpec};
use apce_core::weights::{hajek_apce, principal_scores, DecisionTarget, PrincipalScoreTable, ScoreSource};
use common::{design, effect_dgp, recovery_dgp, two_groups};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::time::Instant;

type Check = (bool, String);

fn reference_table_replication() -> Check {
    let start = Instant::now();
    let ds = reconstruct();
    let mut worst = 0.0f64;
    let mut err = |got: f64, want: f64| worst = worst.max((got - want).abs());
    let itt = |t: IttTarget| diff_in_means_itt(&ds, &t).unwrap().diff;
    err(itt(IttTarget::Decision(0)), -0.00394);
    for (o, want) in [("fta", 0.00479), ("nca", -0.00675), ("nvca", 0.01133)] {
        err(itt(IttTarget::Outcome(o.into())), want);
    }
    let signs = apce_sign_table(&ds, "fta", 1, 1000, 1).unwrap();
    for (s, want) in signs.iter().zip([-0.00479, 0.00284, 0.00589]) {
        err(s.numerator, want);
    }
    let bounds = potential_outcome_bounds(&ds, "fta", 1).unwrap();
    for (b, want) in bounds.iter().zip([[0.06435, 0.29268], [0.29747, 0.48356]]) {
        err(b.lower, want[0]);
        err(b.upper, want[1]);
    }
    let secs = start.elapsed().as_secs_f64();
    (
        signs.len() == 3 && worst < 1e-5 && secs < 1.0,
        format!("max |err| {worst:.2e}, {} sign rows, {secs:.2} s", signs.len()),
    )
}

fn estimator_consistency() -> Check {
    let start = Instant::now();
    let reps = 100;
    let k = 2;
    let (mut hajek_err, mut bayes_err) = (vec![Vec::new(); k], vec![Vec::new(); k]);
    let mut reduction_err = Vec::new();
    for rep in 0..reps {
        let (ds, truth) = synth_generate(&effect_dgp(100 + rep)).unwrap();
        let o = oracle_apce(&truth);
        let x = design(&ds);
        let scores = principal_scores(&fit_outcome_probit(&ds, "y", &x).unwrap(), &x).unwrap();
        let cfg = GibbsConfig {
            chains: 1,
            iterations: 400,
            seed: rep,
            ..Default::default()
        };
        let post = posterior_apce(&gibbs_run(&ds, "y", &x, &cfg).unwrap(), &x, None, 200).unwrap();
        for r in 1..=k {
            let h = hajek_apce(&ds, &scores, r, DecisionTarget::AtLeast(r)).unwrap().point;
            hajek_err[r - 1].push(h - o.apce_p[r - 1]);
            bayes_err[r - 1].push(post.apce_p(r).unwrap().point - o.apce_p[r - 1]);
        }
        // The identity is about the finite-population ITT, not its noisy
        // difference-in-means estimate.
        reduction_err.push(mean(&post.reduction_draws) + o.itt);
    }
    let secs = start.elapsed().as_secs_f64();
    let abs_mean = |v: &[f64]| v.iter().map(|e| e.abs()).sum::<f64>() / v.len() as f64;
    let within = |v: &[f64], tol: f64| v.iter().filter(|e| e.abs() < tol).count();
    let mut ok = secs < 600.0;
    let mut detail = Vec::new();
    for r in 0..k {
        for (name, e) in [("hajek", &hajek_err[r]), ("bayes", &bayes_err[r])] {
            ok &= within(e, 0.04) == e.len();
            detail.push(format!(
                "{name} r={} bias {:+.4} mean|err| {:.4} ({}/{reps} < 0.04)",
                r + 1,
                mean(e),
                abs_mean(e),
                within(e, 0.04)
            ));
        }
    }
    ok &= within(&reduction_err, 0.02) == reduction_err.len();
    detail.push(format!(
        "reduction+ITT mean|err| {:.4} ({}/{reps} < 0.02)",
        abs_mean(&reduction_err),
        within(&reduction_err, 0.02)
    ));
    detail.push(format!("{secs:.0} s"));
    (ok, detail.join("; "))
}

fn gibbs_recovery() -> Check {
    let start = Instant::now();
    let mut worst_z = 0.0f64;
    let mut worst_rhat = 0.0f64;
    let mut at = String::new();
    for (rho, seed) in [(0.0, 11), (0.3, 12)] {
        let spec = recovery_dgp(rho, seed);
        let (ds, _) = synth_generate(&spec).unwrap();
        let x = design(&ds);
        let cfg = GibbsConfig {
            rho,
            chains: 4,
            iterations: 5000,
            seed,
            ..Default::default()
        };
        let draws = gibbs_run(&ds, "y", &x, &cfg).unwrap();
        for (j, t) in spec.params().iter().enumerate() {
            let v = draws.pooled(j);
            let z = (mean(&v) - t) / variance(&v).sqrt();
            if z.abs() > worst_z.abs() {
                worst_z = z;
                at = format!("{} at rho {rho}", draws.names[j]);
            }
        }
        for (_, r) in draws.rhat() {
            worst_rhat = worst_rhat.max(r);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst_z.abs() < 3.0 && worst_rhat < 1.1 && secs < 900.0,
        format!("worst z {worst_z:+.2} ({at}), max split-Rhat {worst_rhat:.4}, {secs:.0} s"),
    )
}

fn sorted_normals(len: usize, sd: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn gibbs_calibration() -> Check {
    let start = Instant::now();
    // Prior recovery: with no data every coefficient should be N(0, 100).
    let prior = gibbs_prior_only(
        2,
        2,
        &GibbsConfig {
            chains: 1,
            iterations: 200_000,
            ..Default::default()
        },
    )
    .unwrap();
    let chi_mean = ChiSquared::new(1.0).unwrap();
    let mut worst_prior = 1.0f64;
    for j in 0..7 {
        let v = prior.pooled(j);
        // Autocorrelation is negligible for these directly drawn blocks; use
        // 1000 batch means so the test stays valid if it is not.
        let batches: Vec<f64> = v.chunks(v.len() / 1000).map(mean).collect();
        let se = (variance(&batches) / batches.len() as f64).sqrt();
        worst_prior = worst_prior.min(chi_mean.sf((mean(&v) / se).powi(2)));
        let rel = variance(&v) / 100.0 - 1.0;
        if rel.abs() > 0.03 {
            worst_prior = 0.0;
        }
    }

    // Simulation-based calibration on a small problem.
    let reps = 200;
    let keep = 99;
    let cfg = GibbsConfig {
        chains: 1,
        iterations: 2000,
        prior_precision_decision: 1.0,
        prior_precision_risk: 1.0,
        cutpoint_prior_sd: 1.0,
        ..Default::default()
    };
    let names = parameter_names(&["x1".to_string()], 1);
    let mut ranks = vec![Vec::new(); names.len()];
    let mut rng = substream(2025, "sbc.prior", 0);
    let mut attempt = 0u64;
    while ranks[0].len() < reps {
        attempt += 1;
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let beta = (0..3).map(|_| normal()).collect();
        let alpha = vec![normal()];
        let spec = DgpSpec {
            n: 200,
            k: 1,
            covariates: vec![CovariateLaw::Normal],
            beta,
            alpha,
            theta: [sorted_normals(1, 1.0, &mut rng), sorted_normals(1, 1.0, &mut rng)],
            delta: sorted_normals(2, 1.0, &mut rng),
            rho: 0.0,
            attribute: two_groups(),
            hearing_dates: None,
            dmf_threshold: None,
            seed: attempt,
        };
        let (ds, _) = synth_generate(&spec).unwrap();
        let x = design(&ds);
        let Ok(draws) = gibbs_run(&ds, "y", &x, &GibbsConfig { seed: attempt, ..cfg.clone() }) else {
            continue;
        };
        for (j, t) in spec.params().iter().enumerate() {
            let v = draws.pooled(j);
            let step = v.len() / keep;
            ranks[j].push((0..keep).filter(|&i| v[i * step + step - 1] < *t).count());
        }
    }
    let chi = ChiSquared::new(9.0).unwrap();
    let mut worst_sbc = (1.0f64, String::new());
    for (j, r) in ranks.iter().enumerate() {
        let mut bins = [0.0f64; 10];
        for &v in r {
            bins[v / 10] += 1.0;
        }
        let e = r.len() as f64 / 10.0;
        let p = chi.sf(bins.iter().map(|o| (o - e).powi(2) / e).sum());
        if p < worst_sbc.0 {
            worst_sbc = (p, names[j].clone());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst_prior > 0.01 && worst_sbc.0 > 0.01,
        format!(
            "prior-recovery min p {worst_prior:.3}; SBC min p {:.3} ({}), {} datasets rejected; {secs:.0} s",
            worst_sbc.0,
            worst_sbc.1,
            attempt as usize - reps
        ),
    )
}

fn truncated_normal_mean() -> Check {
    let mut rng = substream(1, "half-normal", 0);
    let n = 1_000_000;
    let m = (0..n)
        .map(|_| draw_truncated_normal(0.0, 1.0, 0.0, f64::INFINITY, &mut rng).unwrap())
        .sum::<f64>()
        / n as f64;
    ((m - 0.79788).abs() < 0.003, format!("mean {m:.5}"))
}

fn random_rows(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, "policy.rows", 0);
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k + 2).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

fn policy_math() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;

    // Zero costs: the harshest decision always wins.
    let mut stringent = true;
    for k in 1..=3 {
        let scores = PrincipalScoreTable::from_rows("y", ScoreSource::Mle, random_rows(2000, k, k as u64));
        let rule = optimal_rule(&scores, &UtilitySpec::new(0.0, 0.0).unwrap());
        stringent &= rule.decisions.iter().all(|&d| d == k);
    }
    ok &= stringent;
    notes.push(format!("zero-cost rule is stringent: {stringent}"));

    // Brute-force argmax of Σ_r e_r u(d, r), smallest d on ties.
    let mut rng = substream(3, "policy.costs", 0);
    let mut mismatches = 0;
    for chunk in 0..10 {
        let k = 1 + chunk % 3;
        let spec = UtilitySpec::new(4.0 * rng.random::<f64>(), rng.random::<f64>()).unwrap();
        let scores = PrincipalScoreTable::from_rows("y", ScoreSource::Mle, random_rows(1000, k, 100 + chunk as u64));
        let rule = optimal_rule(&scores, &spec);
        for (row, &got) in scores.scores.iter().zip(&rule.decisions) {
            let value = |d: usize| row.iter().enumerate().map(|(r, e)| e * spec.utility(d, r)).sum::<f64>();
            let mut best = 0;
            for d in 1..=k {
                if value(d) > value(best) {
                    best = d;
                }
            }
            mismatches += usize::from(best != got);
        }
    }
    ok &= mismatches == 0;
    notes.push(format!("brute force mismatches {mismatches}/10000"));

    // Three cases, k = 1, c0 = 1, c1 = 0.5:
    // u(0, ·) = (1, -1, -1), u(1, ·) = (0.5, 1, -1).
    // (0.5, 0.3, 0.2) at d=0: 0.5 - 0.3 - 0.2 = 0.0
    // (0.2, 0.2, 0.6) at d=1: 0.1 + 0.2 - 0.6 = -0.3
    // (0.1, 0.6, 0.3) at d=1: 0.05 + 0.6 - 0.3 = 0.35
    let rows = vec![vec![0.5, 0.3, 0.2], vec![0.2, 0.2, 0.6], vec![0.1, 0.6, 0.3]];
    let scores = PrincipalScoreTable::from_rows("y", ScoreSource::Mle, rows);
    let u = expected_utility(&scores, &[0, 1, 1], &UtilitySpec::new(1.0, 0.5).unwrap()).unwrap();
    let hand = (0.0 - 0.3 + 0.35) / 3.0;
    ok &= (u - hand).abs() < 1e-12;
    notes.push(format!("hand example |err| {:.1e}", (u - hand).abs()));

    // Share of harsh decisions never falls as c0 grows.
    let mut monotone = true;
    let grids: [&[f64]; 3] = [&[0.0, 0.5, 1.0, 2.0, 4.0], &[0.1, 0.2, 0.3], &[0.0, 10.0, 100.0]];
    for (g, c0_grid) in grids.iter().enumerate() {
        let scores = PrincipalScoreTable::from_rows("y", ScoreSource::Mle, random_rows(3000, 2, 50 + g as u64));
        let c1_grid = [0.0, 0.25, 0.5, 1.0];
        let surface = optimal_share_grid(&scores, c0_grid, &c1_grid, None, "all").unwrap();
        for j in 0..c1_grid.len() {
            let col: Vec<f64> = (0..c0_grid.len()).map(|i| surface.points[i * c1_grid.len() + j].value).collect();
            monotone &= col.windows(2).all(|w| w[0] <= w[1]);
        }
    }
    ok &= monotone;
    notes.push(format!("shares monotone in c0: {monotone}"));
    (ok, notes.join("; "))
}

/// The attribute is the coin covariate, which shifts the control-arm
/// decision index only; provision removes that through β_ZX.
fn interaction_dgp(n: usize, seed: u64) -> DgpSpec {
    DgpSpec {
        n,
        k: 2,
        covariates: vec![CovariateLaw::Normal, CovariateLaw::Coin],
        beta: vec![0.2, 0.5, 0.9, 0.1, -0.9],
        alpha: vec![1.0, 0.0],
        theta: [vec![-0.3, 1.0], vec![-0.2, 1.1]],
        delta: vec![-0.8, 0.0, 0.8],
        rho: 0.0,
        attribute: AttributeLaw::FromCovariate {
            covariate: 1,
            labels: ["a".into(), "b".into()],
        },
        hearing_dates: None,
        dmf_threshold: None,
        seed,
    }
}

fn fairness() -> Check {
    let start = Instant::now();
    let quick = |seed: u64| GibbsConfig {
        chains: 1,
        iterations: 400,
        seed,
        ..Default::default()
    };
    let (ds, _) = synth_generate(&effect_dgp(8)).unwrap();
    let x = design(&ds);
    let draws = gibbs_run(&ds, "y", &x, &GibbsConfig { iterations: 1000, ..quick(8) }).unwrap();
    let attrs = ds.attributes();
    let mut worst = 0.0f64;
    for r in 0..=3 {
        for z in 0..2u8 {
            worst = worst.max(fairness_delta(&draws, &x, &attrs, r, z, 200).unwrap().delta);
        }
    }

    let reps = 50;
    let mut signed = 0;
    for rep in 0..reps {
        let (ds, _) = synth_generate(&interaction_dgp(2000, 900 + rep)).unwrap();
        let x = design(&ds);
        let draws = gibbs_run(&ds, "y", &x, &quick(rep)).unwrap();
        let attrs = ds.attributes();
        let all = (0..=3).all(|r| fairness_delta_diff(&draws, &x, &attrs, r, 100).unwrap().mean < 0.0);
        signed += usize::from(all);
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst < 0.05 && signed as f64 >= 0.95 * reps as f64,
        format!("independent max posterior-mean gap {worst:.4}; interaction sign in {signed}/{reps}; {secs:.0} s"),
    )
}

fn crt() -> Check {
    let start = Instant::now();
    let sims = 200;
    let p: Vec<f64> = (0..sims)
        .map(|i| {
            let spec = DgpSpec {
                n: 1891,
                hearing_dates: Some(274),
                ..effect_dgp(5000 + i)
            };
            crt_test(&synth_generate(&spec).unwrap().0, 200, i).unwrap().p_value
        })
        .collect();
    let size = p.iter().filter(|&&v| v <= 0.05).count() as f64 / sims as f64;
    let (_, ks_p) = ks_uniform(&p);
    let ds = with_random_hearing_dates(&reconstruct(), 274, 7);
    let curve = crt_power(&ds, &[1.0], 200, 200, 0.05, 11).unwrap();
    let power = curve.points[0].power;
    let secs = start.elapsed().as_secs_f64();
    (
        (size - 0.05).abs() <= 0.03 && ks_p > 0.01 && (power - 0.8).abs() <= 0.15 && secs < 1200.0,
        format!("size {size:.3}, KS p {ks_p:.3}, power at omega=1 {power:.3}; {secs:.0} s"),
    )
}

fn max_gap(a: &StratumDecisionTable, b: &StratumDecisionTable) -> f64 {
    let flat = |t: &StratumDecisionTable| t.prob.iter().flatten().flatten().copied().collect::<Vec<f64>>();
    flat(a).iter().zip(flat(b)).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn unit_xi_reduction() -> Check {
    // Hand-enumerable: binary decision, one binary covariate, closures.
    let rows = Design::from_rows(vec!["x".into()], &[vec![0.0], vec![1.0], vec![1.0]]).unwrap();
    let py = |z: u8, d: usize, x: &[f64]| 0.6 - 0.3 * d as f64 + 0.1 * x[0] + 0.05 * f64::from(z);
    let pd = DecisionFn(|z: u8, d: usize, x: &[f64]| {
        let p1 = 0.3 + 0.4 * f64::from(z) * x[0] + 0.1 * x[0];
        if d == 1 { p1 } else { 1.0 - p1 }
    });
    let a = np_sensitivity(&py, &pd, &rows, &XiTable::ones(1)).unwrap();
    let b = unconfounded_plugin(&py, &pd, &rows, 1).unwrap();
    let mut worst = max_gap(&a, &b);
    // Stratum 2 under control, by hand: e_2(x) = Pr(Y=1 | z=0, d=1, x)
    // = 0.3 + 0.1x, decision Pr(D=1 | z=0, x) = 0.3 + 0.1x.
    let e2 = [0.3, 0.4, 0.4];
    let p1 = [0.3, 0.4, 0.4];
    let hand = e2.iter().zip(&p1).map(|(e, p)| e * p).sum::<f64>() / e2.iter().sum::<f64>();
    worst = worst.max((a.prob[0][2][1] - hand).abs());

    // The same reduction with models fitted to a discrete-covariate dataset.
    let spec = DgpSpec {
        n: 3000,
        k: 1,
        covariates: vec![CovariateLaw::Coin],
        beta: vec![0.4, 0.5, -0.2],
        alpha: vec![0.6],
        theta: [vec![0.1], vec![0.2]],
        delta: vec![-0.5, 0.6],
        rho: 0.0,
        attribute: two_groups(),
        hearing_dates: None,
        dmf_threshold: None,
        seed: 17,
    };
    let (ds, _) = synth_generate(&spec).unwrap();
    let x = design(&ds);
    let outcome = fit_outcome_probit(&ds, "y", &x).unwrap();
    let decision: [OrdinalFit; 2] = [0u8, 1].map(|z| {
        let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.records()[i].z == z).collect();
        let d: Vec<usize> = idx.iter().map(|&i| ds.records()[i].d).collect();
        fit_ordinal(&d, &x.select_rows(&idx), 1, Link::Probit).unwrap()
    });
    let a = np_sensitivity(&outcome, &decision, &x, &XiTable::ones(1)).unwrap();
    let b = unconfounded_plugin(&outcome, &decision, &x, 1).unwrap();
    worst = worst.max(max_gap(&a, &b));
    (worst < 1e-8, format!("max |difference| {worst:.1e}"))
}

fn main() {
    let checks: [(&str, fn() -> Check); 9] = [
        ("reference-table replication", reference_table_replication),
        ("estimator consistency", estimator_consistency),
        ("gibbs recovery and split-Rhat", gibbs_recovery),
        ("gibbs prior recovery and calibration", gibbs_calibration),
        ("truncated-normal half-normal mean", truncated_normal_mean),
        ("policy math", policy_math),
        ("fairness", fairness),
        ("randomization test size and power", crt),
        ("unit-xi sensitivity reduction", unit_xi_reduction),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let (ok, detail) = check();
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
