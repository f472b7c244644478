//! Reproduction checks against published values, reported entry by entry.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aggregators::{Aggregator, GridParams};
use crate::bounds::{
    finite_minimax, prob_p_optimum, prob_p_parts, yao_bound, AggregatorClass, Construction, InfoLevel,
};
use crate::error::Result;
use crate::learner::{certify, learn, LearnerConfig};
use crate::model::{Family, FamilyKind, UtilityRatio};
use crate::regret::{loss, worst_case, SearchConfig};

/// Window for search-based upper bounds.
pub const SEARCH_TOL: f64 = 2e-4;
/// Window for entries on the ALL family.
pub const ALL_TOL: f64 = 1e-3;
/// Window between a catalog bound and its ε-evaluated formula.
pub const CATALOG_TOL: f64 = 1e-7;
/// Slack below a limit value allowed for ε-constructions at the default ε.
pub const EPS_SLACK: f64 = 1e-3;
/// Window for learned regrets at general ratios.
pub const LEARNED_TOL: f64 = 0.005;
/// Ceiling on the learned regret at ratio 1.
pub const LEARNED_MAX: f64 = 0.1695;
/// Search tolerance below 1/6 accepted for the learned regret at ratio 1.
pub const LEARNED_FLOOR_TOL: f64 = 1e-6;

pub const BIPOLAR_WINDOW: (f64, f64) = (0.1680, 0.1684);
pub const BIPOLAR_WITNESS: (f64, f64, f64) = (0.7426, 0.3467, 1.0);
pub const WITNESS_TOL: f64 = 5e-3;

/// Ratios of the general-utility comparison.
pub const TABLE2_T: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];
pub const TABLE2_CLOSED: [f64; 7] = [0.0330, 0.0591, 0.1152, 0.1716, 0.2304, 0.2954, 0.3300];
pub const TABLE2_LEARNED: [f64; 7] = [0.0233, 0.0432, 0.0956, 0.1673, 0.1927, 0.2157, 0.2293];

pub fn homo_limit() -> f64 {
    3.0 - 2.0 * 2f64.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub entry: String,
    pub computed: f64,
    pub target: f64,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
    /// Wall time, kept out of JSON so reports are reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

impl Check {
    pub fn window(entry: impl Into<String>, computed: f64, target: f64, lo: f64, hi: f64) -> Check {
        Check { entry: entry.into(), computed, target, lo, hi, pass: computed >= lo && computed <= hi, seconds: 0.0 }
    }

    pub fn near(entry: impl Into<String>, computed: f64, target: f64, tol: f64) -> Check {
        Check::window(entry, computed, target, target - tol, target + tol)
    }

    fn timed(mut self, start: Instant) -> Check {
        self.seconds = start.elapsed().as_secs_f64();
        self
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} computed={:.10} target={:.10} window=[{:.10}, {:.10}] ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.entry,
            self.computed,
            self.target,
            self.lo,
            self.hi,
            self.seconds
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Report {
        Report { title: title.into(), checks: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks.iter().map(Check::line).collect()
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }
}

fn family(kind: FamilyKind, t: f64) -> Result<Family> {
    Ok(Family::new(kind, UtilityRatio::new(t)?))
}

fn search_check(entry: &str, agg: &Aggregator, kind: FamilyKind, target: f64, cfg: &SearchConfig) -> Result<Check> {
    let start = Instant::now();
    let tol = if kind == FamilyKind::All { ALL_TOL } else { SEARCH_TOL };
    let cert = worst_case(agg, &family(kind, 1.0)?, cfg)?;
    Ok(Check::near(entry, cert.value, target, tol).timed(start))
}

/// Worst-case regrets of the named aggregators on each family.
pub fn upper_bounds(cfg: &SearchConfig) -> Result<Report> {
    let rows: [(&str, Aggregator, FamilyKind, f64); 8] = [
        ("ALL/follow_first", Aggregator::FollowFirst, FamilyKind::All, 0.5),
        ("CI/follow_first", Aggregator::FollowFirst, FamilyKind::Ci, 0.5),
        ("CI/threshold", Aggregator::Threshold, FamilyKind::Ci, 1.0 / 3.0),
        ("CI/uniform", Aggregator::Uniform, FamilyKind::Ci, 0.25),
        ("ACI/threshold", Aggregator::Threshold, FamilyKind::Aci, 1.0 / 3.0),
        ("ACI/follow_first", Aggregator::FollowFirst, FamilyKind::Aci, homo_limit()),
        ("ACI/uniform", Aggregator::Uniform, FamilyKind::Aci, homo_limit()),
        ("DACI/uniform", Aggregator::Uniform, FamilyKind::Daci, homo_limit()),
    ];
    let mut r = Report::new("upper bounds");
    for (entry, agg, kind, target) in rows {
        r.checks.push(search_check(entry, &agg, kind, target, cfg)?);
    }
    Ok(r)
}

/// Worst case of the bipolar radial aggregator on DACI and its witness.
pub fn bipolar(cfg: &SearchConfig) -> Result<Report> {
    let start = Instant::now();
    let fam = family(FamilyKind::Daci, 1.0)?;
    let cert = worst_case(&Aggregator::BipolarRadial, &fam, cfg)?;
    let mut r = Report::new("bipolar radial");
    let (lo, hi) = BIPOLAR_WINDOW;
    r.checks.push(Check::window("DACI/bipolar_radial", cert.value, 0.1682, lo, hi).timed(start));

    let w = cert.witness.ci_params();
    let (mu, k, l) = BIPOLAR_WITNESS;
    // the rule is invariant under the mirror, so the complement point counts too
    let dist = |m: f64, kk: f64, ll: f64| (w.mu - m).abs().max((w.k1 - kk).abs()).max((w.l1 - ll).abs());
    let d = dist(mu, k, l).min(dist(1.0 - mu, 1.0 - l, 1.0 - k));
    r.checks.push(Check::window("DACI/bipolar_radial/witness_distance", d, 0.0, 0.0, WITNESS_TOL));
    let at = loss(&Aggregator::BipolarRadial, &cert.witness, fam.t)?;
    r.checks.push(Check::window("DACI/bipolar_radial/witness_loss", at, 0.1682, lo, f64::INFINITY));
    Ok(r)
}

/// Prob-p aggregator at `p = 1/2` on ACI against its closed forms.
pub fn prob_p_closed_forms(cfg: &SearchConfig) -> Result<Report> {
    let mut r = Report::new("prob-p closed forms");
    let agg = Aggregator::prob_p(0.5)?;
    for (t, target) in [(2.0, prob_p_parts(2.0).0), (0.5, prob_p_parts(0.5).1)] {
        let start = Instant::now();
        let cert = worst_case(&agg, &family(FamilyKind::Aci, t)?, cfg)?;
        r.checks.push(Check::near(format!("ACI/prob_p(0.5)/t={t}"), cert.value, target, SEARCH_TOL).timed(start));
    }
    Ok(r)
}

/// Ratios at which a catalog entry is evaluated.
pub fn catalog_ratios(c: Construction) -> Vec<f64> {
    match c {
        Construction::GeneTHigh => vec![1.0, 2.0, 5.0],
        Construction::GeneTLow => vec![0.2, 0.5, 1.0],
        Construction::GeneTDaci => vec![0.5, 1.0, 2.0],
        _ => vec![1.0],
    }
}

/// Every catalog construction against its stated formula.
pub fn bounds_report(eps: f64) -> Result<Report> {
    let mut r = Report::new("lower-bound catalog");
    for c in Construction::ALL {
        for t in catalog_ratios(c) {
            let start = Instant::now();
            let value = c.evaluate(eps, UtilityRatio::new(t)?)?;
            let entry = if c.uses_t() { format!("{c}/t={t}") } else { c.to_string() };
            r.checks.push(Check::near(entry, value, c.target(eps, t), CATALOG_TOL).timed(start));
        }
    }
    let v = Construction::DaciSecond.evaluate(eps, UtilityRatio::ONE)?;
    r.checks.push(Check::window("DACI_SECOND/floor", v, 1.0 / 6.0, 0.1664, 1.0 / 6.0));
    Ok(r)
}

fn lower_check(entry: String, value: f64, target: f64, start: Instant) -> Check {
    Check::window(entry, value, target, target - EPS_SLACK, target + 1e-9).timed(start)
}

fn yao_at(c: Construction, level: InfoLevel, eps: f64) -> Result<f64> {
    Ok(yao_bound(&c.build(eps, UtilityRatio::ONE)?, level, UtilityRatio::ONE)?.value)
}

fn det_minimax_at(c: Construction, level: InfoLevel, eps: f64) -> Result<f64> {
    let d = c.build(eps, UtilityRatio::ONE)?;
    Ok(finite_minimax(&d.structures(), AggregatorClass::Deterministic, level, UtilityRatio::ONE)?.value)
}

/// Regret of a learned DACI grid at ratio 1, checked against `[1/6, 0.1695]`.
pub fn learned_check(entry: &str, value: f64) -> Check {
    Check::window(entry, value, 0.1673, 1.0 / 6.0 - LEARNED_FLOOR_TOL, LEARNED_MAX)
}

/// Both bounds behind every cell of the overview table. `learned` is a grid
/// for DACI at ratio 1.
pub fn table1(cfg: &SearchConfig, eps: f64, learned: &GridParams) -> Result<Report> {
    use FamilyKind::*;
    use InfoLevel::*;
    let h = homo_limit();
    let mut r = Report::new("table 1");
    let upper: [(&str, Aggregator, FamilyKind, f64); 12] = [
        ("het/1st/det", Aggregator::FollowFirst, Ci, 0.5),
        ("het/2nd/det", Aggregator::Threshold, Ci, 1.0 / 3.0),
        ("het/1st/random", Aggregator::Uniform, Ci, 0.25),
        ("het/2nd/random", Aggregator::Uniform, Ci, 0.25),
        ("homo/1st/det", Aggregator::FollowFirst, Aci, h),
        ("homo/2nd/det", Aggregator::FollowFirst, Aci, h),
        ("homo/1st/random", Aggregator::Uniform, Aci, h),
        ("homo/2nd/random", Aggregator::Uniform, Aci, h),
        ("nondegenerate/1st/det", Aggregator::FollowFirst, Daci, h),
        ("nondegenerate/2nd/det", Aggregator::FollowFirst, Daci, h),
        ("nondegenerate/1st/random", Aggregator::Uniform, Daci, h),
        ("nondegenerate/2nd/random/bipolar", Aggregator::BipolarRadial, Daci, 0.1682),
    ];
    for (entry, agg, kind, target) in upper {
        let start = Instant::now();
        let v = worst_case(&agg, &family(kind, 1.0)?, cfg)?.value;
        let check = if agg == Aggregator::BipolarRadial {
            Check::window(format!("{entry}/upper"), v, target, BIPOLAR_WINDOW.0, BIPOLAR_WINDOW.1)
        } else {
            Check::near(format!("{entry}/upper"), v, target, SEARCH_TOL)
        };
        r.checks.push(check.timed(start));
    }
    let start = Instant::now();
    let cert = certify(learned, &family(Daci, 1.0)?, cfg)?;
    r.checks.push(learned_check("nondegenerate/2nd/random/upper", cert.value).timed(start));

    type Bound = fn(Construction, InfoLevel, f64) -> Result<f64>;
    let yao: Bound = yao_at;
    let det: Bound = det_minimax_at;
    let lower: [(&str, Bound, Construction, InfoLevel, f64); 12] = [
        ("het/1st/det", det, Construction::HetFirstDet, FirstOrder, 0.5),
        ("het/2nd/det", det, Construction::HetSecondDet, SecondOrder, 1.0 / 3.0),
        ("het/1st/random", yao, Construction::HetRandom, FirstOrder, 0.25),
        ("het/2nd/random", yao, Construction::HetRandom, SecondOrder, 0.25),
        ("homo/1st/det", det, Construction::HomoPurePair, FirstOrder, h),
        ("homo/2nd/det", det, Construction::HomoPurePair, SecondOrder, h),
        ("homo/1st/random", yao, Construction::HomoSingle, FirstOrder, h),
        ("homo/2nd/random", yao, Construction::HomoSingle, SecondOrder, h),
        ("nondegenerate/1st/det", det, Construction::HomoPurePair, FirstOrder, h),
        ("nondegenerate/2nd/det", det, Construction::HomoPurePair, SecondOrder, h),
        ("nondegenerate/1st/random", yao, Construction::DaciFirst, FirstOrder, h),
        ("nondegenerate/2nd/random", yao, Construction::DaciSecond, SecondOrder, 1.0 / 6.0),
    ];
    for (entry, f, c, level, target) in lower {
        let start = Instant::now();
        r.checks.push(lower_check(format!("{entry}/lower"), f(c, level, eps)?, target, start));
    }
    Ok(r)
}

/// Grids for every ratio of the general-utility comparison. Ratios below 1
/// reuse the mirror of the grid learned at the reciprocal ratio.
pub fn learn_table2(cfg: &LearnerConfig) -> Result<Vec<(f64, GridParams)>> {
    let mut learned: Vec<(f64, GridParams)> = Vec::new();
    for &t in TABLE2_T.iter().filter(|&&t| t >= 1.0) {
        let r = learn(&family(FamilyKind::Daci, t)?, cfg)?;
        learned.push((t, r.aggregator));
    }
    Ok(with_mirrors(learned))
}

/// Adds, for each ratio below 1 of the comparison, the mirror of the grid at
/// the reciprocal ratio when that grid is present.
pub fn with_mirrors(mut grids: Vec<(f64, GridParams)>) -> Vec<(f64, GridParams)> {
    for &t in TABLE2_T.iter().filter(|&&t| t < 1.0) {
        let has = |g: &[(f64, GridParams)], r: f64| g.iter().position(|(s, _)| (s - r).abs() < 1e-9);
        if has(&grids, t).is_none() {
            if let Some(i) = has(&grids, 1.0 / t) {
                let m = grids[i].1.mirrored();
                grids.push((t, m));
            }
        }
    }
    grids.sort_by(|a, b| a.0.total_cmp(&b.0));
    grids
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Closed-form and learned columns of the general-utility comparison.
/// `grids` pairs each ratio with a DACI grid; ratios without a grid only get
/// the closed-form rows.
pub fn table2(cfg: &SearchConfig, grids: &[(f64, GridParams)]) -> Result<Report> {
    let mut r = Report::new("table 2");
    for (i, &t) in TABLE2_T.iter().enumerate() {
        let (closed, p) = prob_p_optimum(t);
        let c = TABLE2_CLOSED[i];
        let exact = (round4(closed) - c).abs() < 1e-9;
        r.checks.push(Check {
            pass: exact,
            ..Check::near(format!("t={t}/closed_form"), closed, c, 5e-5)
        });

        let start = Instant::now();
        let fam = family(FamilyKind::Daci, t)?;
        let searched = worst_case(&Aggregator::prob_p(p)?, &fam, cfg)?.value;
        r.checks.push(Check::near(format!("t={t}/prob_p_search"), searched, closed, SEARCH_TOL).timed(start));

        if let Some((_, g)) = grids.iter().find(|(s, _)| (*s - t).abs() < 1e-12) {
            let start = Instant::now();
            let v = certify(g, &fam, cfg)?.value;
            let target = TABLE2_LEARNED[i];
            r.checks.push(Check::near(format!("t={t}/learned"), v, target, LEARNED_TOL).timed(start));
            r.checks.push(Check::window(format!("t={t}/learned_below_closed"), v, closed, f64::NEG_INFINITY, closed - 1e-9));
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::DEFAULT_EPS;

    #[test]
    fn closed_form_column_rounds_to_published_digits() {
        for (i, &t) in TABLE2_T.iter().enumerate() {
            assert_eq!(round4(prob_p_optimum(t).0), TABLE2_CLOSED[i], "t={t}");
        }
    }

    #[test]
    fn pure_pair_is_nondegenerate_and_reaches_limit() {
        let fam = family(FamilyKind::Daci, 1.0).unwrap();
        let d = Construction::HomoPurePair.build(DEFAULT_EPS, UtilityRatio::ONE).unwrap();
        assert!(d.structures().iter().all(|s| crate::model::membership(s, &fam).member));
        for level in [InfoLevel::FirstOrder, InfoLevel::SecondOrder] {
            let v = det_minimax_at(Construction::HomoPurePair, level, DEFAULT_EPS).unwrap();
            assert!(v <= homo_limit() + 1e-9 && v >= homo_limit() - EPS_SLACK, "{level:?} {v}");
        }
    }

    #[test]
    fn first_order_yao_dominates_second_order() {
        for c in [Construction::HetRandom, Construction::HomoSingle, Construction::DaciFirst] {
            let a = yao_at(c, InfoLevel::FirstOrder, DEFAULT_EPS).unwrap();
            let b = yao_at(c, InfoLevel::SecondOrder, DEFAULT_EPS).unwrap();
            assert!(a >= b - 1e-12, "{c} {a} {b}");
        }
    }

    #[test]
    fn learned_window_accepts_one_sixth() {
        assert!(learned_check("x", 1.0 / 6.0).pass);
        assert!(!learned_check("x", 0.17).pass);
        assert!(!learned_check("x", 0.1666).pass);
    }

    #[test]
    fn mirrors_fill_reciprocal_ratios() {
        let g = GridParams::from_fn(10, |p1, _| p1);
        let out = with_mirrors(vec![(2.0, g.clone()), (10.0, g.clone())]);
        let ts: Vec<f64> = out.iter().map(|x| x.0).collect();
        assert_eq!(ts, vec![0.1, 0.5, 2.0, 10.0]);
        assert_eq!(out[1].1, g.mirrored());
    }

    #[test]
    fn report_counts_failures() {
        let mut r = Report::new("x");
        r.checks.push(Check::near("a", 1.0, 1.0, 0.1));
        r.checks.push(Check::near("b", 2.0, 1.0, 0.1));
        assert!(!r.passed());
        assert_eq!(r.failures(), 1);
        assert!(r.lines()[1].starts_with("FAIL b"));
    }
}
