//! Acceptance suite: one PASS/FAIL line per criterion, details indented.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robagg_core::bounds::{yao_bound, InfoLevel, StructureDistribution, DEFAULT_EPS};
use robagg_core::learner::{certify, learn, LearnerConfig};
use robagg_core::model::{cell_table, outcome_table, CondIndepStructure, Family, FamilyKind, GeneralStructure};
use robagg_core::regret::{direct_loss, scaled_loss, UtilityTable};
use robagg_core::verify::{self, homo_limit, Check, Report};
use robagg_core::{loss, Aggregator, GridParams, SearchConfig, Structure, UtilityRatio};

/// Per-entry runtime ceiling of the search criterion.
const SEARCH_SECONDS: f64 = 60.0;
/// Runtime ceiling of learn plus certify at ratio 1.
const LEARN_SECONDS: f64 = 900.0;

struct Suite {
    failed: usize,
}

impl Suite {
    fn criterion(&mut self, n: usize, name: &str, report: std::result::Result<Report, String>) -> Option<Report> {
        match report {
            Ok(r) => {
                for line in r.lines() {
                    println!("    {line}");
                }
                let ok = r.passed();
                if !ok {
                    self.failed += 1;
                }
                println!("criterion {n} {}: {name} ({} checks, {} failed)", if ok { "PASS" } else { "FAIL" }, r.checks.len(), r.failures());
                Some(r)
            }
            Err(e) => {
                self.failed += 1;
                println!("criterion {n} FAIL: {name} (error: {e})");
                None
            }
        }
    }
}

fn upper_bounds(cfg: &SearchConfig) -> robagg_core::Result<Report> {
    let mut r = verify::upper_bounds(cfg)?;
    let slow: Vec<Check> = r
        .checks
        .iter()
        .map(|c| Check::window(format!("{}/seconds", c.entry), c.seconds, SEARCH_SECONDS, 0.0, SEARCH_SECONDS))
        .collect();
    r.checks.extend(slow);
    Ok(r)
}

fn learner_at_one(cfg: &LearnerConfig, search: &SearchConfig) -> robagg_core::Result<(Report, GridParams)> {
    let start = Instant::now();
    let fam = Family::new(FamilyKind::Daci, UtilityRatio::ONE);
    let learned = learn(&fam, cfg)?;
    let cert = certify(&learned.aggregator, &fam, search)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut r = Report::new("learner");
    r.checks.push(verify::learned_check("learn/regret", learned.regret));
    r.checks.push(verify::learned_check("certify/regret", cert.value));
    r.checks.push(Check::window("certify/below_limit", cert.value, homo_limit(), 0.0, homo_limit() - 1e-9));
    r.checks.push(Check::near("certify/near_estimate", cert.value, 0.1673, 0.002));
    r.checks.push(Check::window("seconds", seconds, LEARN_SECONDS, 0.0, LEARN_SECONDS));
    Ok((r, learned.aggregator))
}

fn general_ratios(cfg: &LearnerConfig, search: &SearchConfig, at_one: Option<GridParams>) -> robagg_core::Result<Report> {
    let mut grids: Vec<(f64, GridParams)> = Vec::new();
    if let Some(g) = at_one {
        grids.push((1.0, g));
    }
    for &t in verify::TABLE2_T.iter().filter(|&&t| t > 1.0) {
        let fam = Family::new(FamilyKind::Daci, UtilityRatio::new(t)?);
        grids.push((t, learn(&fam, cfg)?.aggregator));
    }
    verify::table2(search, &verify::with_mirrors(grids))
}

fn random_structure(rng: &mut ChaCha8Rng) -> Structure {
    if rng.random::<f64>() < 0.5 {
        let mut u = || rng.random::<f64>();
        let (a, b, c, d) = (u(), u(), u(), u());
        CondIndepStructure::new(0.01 + 0.98 * u(), a.min(b), a.max(b), c.min(d), c.max(d)).unwrap().into()
    } else {
        let w: [f64; 8] = std::array::from_fn(|_| 0.001 + rng.random::<f64>());
        let total: f64 = w.iter().sum();
        GeneralStructure::new(w.map(|x| x / total)).unwrap().into()
    }
}

fn random_aggregator(rng: &mut ChaCha8Rng) -> Aggregator {
    match rng.random_range(0..6) {
        0 => Aggregator::FollowFirst,
        1 => Aggregator::Uniform,
        2 => Aggregator::Threshold,
        3 => Aggregator::BipolarRadial,
        4 => Aggregator::ProbP { p: rng.random() },
        _ => Aggregator::Grid(GridParams::from_values(10, (0..66).map(|_| rng.random()).collect()).unwrap()),
    }
}

fn max_error(n: usize, mut f: impl FnMut() -> f64) -> f64 {
    (0..n).map(|_| f()).fold(0.0, f64::max)
}

fn properties() -> robagg_core::Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut r = Report::new("properties");
    let n = 20_000;
    let ratio = |rng: &mut ChaCha8Rng| UtilityRatio::new(rng.random_range(0.1..10.0)).unwrap();

    let worst = (0..n)
        .map(|_| {
            let (a, s, t) = (random_aggregator(&mut rng), random_structure(&mut rng), ratio(&mut rng));
            loss(&a, &s, t).unwrap()
        })
        .fold(f64::INFINITY, f64::min);
    r.checks.push(Check::window("nonnegativity/min_loss", worst, 0.0, -1e-12, f64::INFINITY));

    let e = max_error(n, || {
        let (a, b, s, t) = (random_aggregator(&mut rng), random_aggregator(&mut rng), random_structure(&mut rng), ratio(&mut rng));
        let w: f64 = rng.random();
        let mix = Aggregator::mixture(vec![(w, a.clone()), (1.0 - w, b.clone())]).unwrap();
        (loss(&mix, &s, t).unwrap() - w * loss(&a, &s, t).unwrap() - (1.0 - w) * loss(&b, &s, t).unwrap()).abs()
    });
    r.checks.push(Check::window("mixture_linearity/max_error", e, 0.0, 0.0, 1e-12));

    let e = max_error(n, || {
        let (a, s, t) = (random_aggregator(&mut rng), random_structure(&mut rng), ratio(&mut rng));
        let mirror = t.value() * loss(&a.mirror(), &s.complement().swap_experts(), t.inverse()).unwrap();
        let swap = loss(&a.swapped(), &s.swap_experts(), t).unwrap();
        let base = loss(&a, &s, t).unwrap();
        (base - mirror).abs().max((base - swap).abs())
    });
    r.checks.push(Check::window("mirror_swap/max_error", e, 0.0, 0.0, 1e-12));

    let mut violations = 0usize;
    let mut seen = 0usize;
    for i in 0..100_000 {
        let t = if i % 2 == 0 { UtilityRatio::ONE } else { ratio(&mut rng) };
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        let s: Structure = CondIndepStructure::homogeneous(rng.random(), a.min(b), a.max(b)).unwrap().into();
        for c in cell_table(&s, t).iter() {
            if c.profile.a1 == 1 && c.profile.a2 == 0 {
                seen += 1;
                if c.profile.p1 < c.profile.p2 - 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    r.checks.push(Check::window("disagreement_order/violations", violations as f64, 0.0, 0.0, 0.0));
    r.checks.push(Check::window("disagreement_order/disagreements", seen as f64, 1e4, 1e4, f64::INFINITY));

    let e = max_error(n, || {
        let (a, s) = (random_aggregator(&mut rng), random_structure(&mut rng));
        let mut u = || rng.random_range(-2.0..2.0f64);
        let (base, off) = (u(), u());
        let table = UtilityTable { u00: base + 0.05 + u().abs(), u10: base, u11: off + 0.05 + u().abs(), u01: off };
        (scaled_loss(&a, &s, &table).unwrap() - direct_loss(&a, &s, &table).unwrap()).abs()
    });
    r.checks.push(Check::window("utility_scaling/max_error", e, 0.0, 0.0, 1e-12));

    let mut worst_z: f64 = 0.0;
    for _ in 0..20 {
        let (a, s, t) = (random_aggregator(&mut rng), random_structure(&mut rng), ratio(&mut rng));
        let outcomes = outcome_table(&s, t);
        let util = |action: u8, state: u8| match (action, state) {
            (1, 1) => t.value(),
            (0, 0) => 1.0,
            _ => 0.0,
        };
        let draws = 50_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..draws {
            let mut x: f64 = rng.random();
            let o = outcomes.iter().find(|o| {
                x -= o.prob;
                x < 0.0
            });
            let o = o.unwrap_or(outcomes.last().unwrap());
            let action = u8::from(rng.random::<f64>() < a.apply(&o.profile));
            let v = util(o.benchmark_action, o.state) - util(action, o.state);
            sum += v;
            sq += v * v;
        }
        let mean = sum / draws as f64;
        let se = ((sq / draws as f64 - mean * mean).max(0.0) / draws as f64).sqrt();
        let exact = loss(&a, &s, t).unwrap();
        if se > 0.0 {
            worst_z = worst_z.max((mean - exact).abs() / se);
        } else if (mean - exact).abs() > 1e-12 {
            worst_z = f64::INFINITY;
        }
    }
    r.checks.push(Check::window("monte_carlo/max_standard_errors", worst_z, 0.0, 0.0, 4.0));

    let mut excess = f64::NEG_INFINITY;
    let mut pairs = 0;
    while pairs < 2_000 {
        let k = rng.random_range(1..4);
        let atoms: Vec<(f64, Structure)> = (0..k)
            .map(|_| {
                let mut u = || rng.random::<f64>();
                let (a, b, c, d) = (u(), u(), u(), u());
                let s = CondIndepStructure::new(0.05 + 0.9 * u(), a.min(b), a.max(b), c.min(d), c.max(d)).unwrap();
                (1.0 / k as f64, s.into())
            })
            .collect();
        let d = StructureDistribution::new(atoms).unwrap();
        let t = ratio(&mut rng);
        let Ok(cert) = yao_bound(&d, InfoLevel::SecondOrder, t) else { continue };
        let a = random_aggregator(&mut rng);
        excess = excess.max(cert.value - d.expected_loss(&a, t).unwrap());
        pairs += 1;
    }
    r.checks.push(Check::window("yao_below_expected_loss/max_excess", excess, 0.0, f64::NEG_INFINITY, 1e-12));
    Ok(r)
}

fn main() -> ExitCode {
    let search = SearchConfig::default();
    let learner = LearnerConfig::default();
    let mut suite = Suite { failed: 0 };
    let e = |x: robagg_core::Error| x.to_string();

    suite.criterion(1, "upper bounds by search", upper_bounds(&search).map_err(e));
    suite.criterion(2, "lower bounds by catalog", verify::bounds_report(DEFAULT_EPS).map_err(e));
    suite.criterion(3, "bipolar radial", verify::bipolar(&search).map_err(e));
    let at_one = match learner_at_one(&learner, &search) {
        Ok((r, g)) => {
            suite.criterion(4, "learner at ratio 1", Ok(r));
            Some(g)
        }
        Err(err) => {
            suite.criterion(4, "learner at ratio 1", Err(err.to_string()));
            None
        }
    };
    suite.criterion(5, "general ratios", general_ratios(&learner, &search, at_one).map_err(e));
    suite.criterion(6, "prob-p closed forms", verify::prob_p_closed_forms(&search).map_err(e));
    suite.criterion(7, "property suites", properties().map_err(e));

    println!("acceptance: {} of 7 criteria failed", suite.failed);
    if suite.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
