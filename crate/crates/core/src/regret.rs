//! Exact expected loss and worst-case regret search over structure families.
//!
//! The search splits a CI-type family into recommendation-pattern cases.
//! Inside a case each expert's recommendation rule is fixed, which makes the
//! loss continuous in the case coordinates `(μ, b_L, b_H)` per expert. Case
//! boundaries are included from both sides; a witness that lands on a
//! boundary where the true pattern differs is pulled inside by a small offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregators::Aggregator;
use crate::error::{Error, Result};
use crate::model::{
    cells_from_reports, natural_recommendations, outcome_table, reports, reports_with, Action,
    CondIndepStructure, Family, FamilyKind, GeneralStructure, ReportProfile, Structure, UtilityRatio,
};
use crate::search::{
    compositions, grid_point, grid_size, levels_for_step, nelder_mead_max, Candidate, TopK,
};

/// Expected benchmark utility minus aggregator utility.
pub fn loss(agg: &Aggregator, structure: &Structure, t: UtilityRatio) -> Result<f64> {
    structure.validate()?;
    Ok(loss_of_pmf(agg, &structure.joint(), t))
}

/// Loss without validation, for hot loops.
#[inline]
pub fn loss_of_pmf(agg: &Aggregator, pmf: &[f64; 8], t: UtilityRatio) -> f64 {
    cells_from_reports(pmf, t, &reports(pmf, t)).loss_with(|p| agg.apply(p))
}

/// Utility `u(action, state)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityTable {
    pub u00: f64,
    pub u01: f64,
    pub u10: f64,
    pub u11: f64,
}

impl UtilityTable {
    pub fn indicator() -> Self {
        UtilityTable { u00: 1.0, u01: 0.0, u10: 0.0, u11: 1.0 }
    }

    pub fn value(&self, action: Action, state: Action) -> f64 {
        match (action, state) {
            (0, 0) => self.u00,
            (0, _) => self.u01,
            (_, 0) => self.u10,
            _ => self.u11,
        }
    }

    /// `(Δu₀, Δu₁)`, both required positive.
    pub fn gaps(&self) -> Result<(f64, f64)> {
        let d0 = self.u00 - self.u10;
        let d1 = self.u11 - self.u01;
        if !(d0 > 0.0) {
            return Err(Error::DominatedAction(d0));
        }
        if !(d1 > 0.0) {
            return Err(Error::DominatedAction(d1));
        }
        Ok((d0, d1))
    }

    pub fn ratio(&self) -> Result<UtilityRatio> {
        let (d0, d1) = self.gaps()?;
        UtilityRatio::new(d1 / d0)
    }
}

/// Loss under a full utility table, via the normalized ratio.
pub fn scaled_loss(agg: &Aggregator, structure: &Structure, u: &UtilityTable) -> Result<f64> {
    let (d0, _) = u.gaps()?;
    Ok(d0 * loss(agg, structure, u.ratio()?)?)
}

/// Loss under a full utility table, taken directly over the outcome table.
pub fn direct_loss(agg: &Aggregator, structure: &Structure, u: &UtilityTable) -> Result<f64> {
    structure.validate()?;
    let t = u.ratio()?;
    Ok(outcome_table(structure, t)
        .iter()
        .map(|o| {
            let q = agg.apply(&o.profile);
            let bench = u.value(o.benchmark_action, o.state);
            let got = q * u.value(1, o.state) + (1.0 - q) * u.value(0, o.state);
            o.prob * (bench - got)
        })
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Grid step for homogeneous (3-coordinate) cases.
    pub grid_step_3: f64,
    /// Grid step for heterogeneous (5-coordinate) cases.
    pub grid_step_5: f64,
    /// Composition resolution of the pmf simplex for the ALL family.
    pub simplex_steps: usize,
    pub top_k: usize,
    pub random_starts: usize,
    /// Evaluation budget per local refinement.
    pub budget: usize,
    pub tol: f64,
    pub boundary_offset: f64,
    pub seed: u64,
    /// Extra refinement starts.
    pub warm_starts: Vec<Structure>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            grid_step_3: 0.01,
            grid_step_5: 0.05,
            simplex_steps: 10,
            top_k: 32,
            random_starts: 8,
            budget: 500,
            tol: 1e-9,
            boundary_offset: 1e-6,
            seed: 0,
            warm_starts: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchMeta {
    pub grid_step: f64,
    pub cases: usize,
    pub case: String,
    pub grid_points: usize,
    pub refinements: usize,
    pub evaluations: usize,
    pub attained_at_boundary: bool,
    pub boundary_offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretCertificate {
    pub value: f64,
    pub witness: Structure,
    pub search_meta: SearchMeta,
}

/// Recommendation rule of one expert inside a search case.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pattern {
    AlwaysOne,
    AlwaysZero,
    Informative,
}

impl Pattern {
    fn label(self) -> &'static str {
        match self {
            Pattern::AlwaysOne => "one",
            Pattern::AlwaysZero => "zero",
            Pattern::Informative => "informative",
        }
    }

    fn actions(self) -> [Action; 2] {
        match self {
            Pattern::AlwaysOne => [1, 1],
            Pattern::AlwaysZero => [0, 0],
            Pattern::Informative => [0, 1],
        }
    }

    /// Ranges of `(b_L, b_H)` given the prior.
    fn ranges(self, mu: f64, theta: f64) -> ((f64, f64), (f64, f64)) {
        match self {
            Pattern::AlwaysOne => ((theta.min(mu), mu), (mu, 1.0)),
            Pattern::AlwaysZero => ((0.0, mu), (mu, theta.max(mu))),
            Pattern::Informative => ((0.0, theta.min(mu)), (theta.max(mu), 1.0)),
        }
    }
}

/// One recommendation-pattern case of a CI-type family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Case {
    pub first: Pattern,
    pub second: Pattern,
    pub homogeneous: bool,
    /// Both signals must carry mass (non-degenerate family).
    pub strict: bool,
}

impl Case {
    pub fn dim(&self) -> usize {
        if self.homogeneous {
            3
        } else {
            5
        }
    }

    pub fn label(&self) -> String {
        if self.homogeneous {
            self.first.label().to_string()
        } else {
            format!("{}/{}", self.first.label(), self.second.label())
        }
    }

    fn mu_range(&self, theta: f64) -> (f64, f64) {
        let pats = [self.first, self.second];
        if pats.contains(&Pattern::AlwaysOne) {
            (theta, 1.0)
        } else if pats.contains(&Pattern::AlwaysZero) {
            (0.0, theta)
        } else {
            (0.0, 1.0)
        }
    }

    pub fn forced(&self) -> [[Option<Action>; 2]; 2] {
        let a = self.first.actions();
        let b = self.second.actions();
        [[Some(a[0]), Some(a[1])], [Some(b[0]), Some(b[1])]]
    }

    /// Structure at cube coordinates `x`.
    pub fn decode(&self, x: &[f64], theta: f64) -> CondIndepStructure {
        let (lo, hi) = self.mu_range(theta);
        let mu = lo + x[0] * (hi - lo);
        let (k1, l1) = expert_from_cube(self.first, mu, x[1], x[2], theta);
        let (k2, l2) = if self.homogeneous {
            (k1, l1)
        } else {
            expert_from_cube(self.second, mu, x[3], x[4], theta)
        };
        CondIndepStructure { mu, k1, l1, k2, l2 }
    }

    /// Cube coordinates of a structure whose natural pattern is this case.
    pub fn encode(&self, s: &CondIndepStructure, t: UtilityRatio) -> Option<Vec<f64>> {
        if self.homogeneous && !s.is_homogeneous() {
            return None;
        }
        let pmf = s.joint();
        if !self.matches(&pmf, t) {
            return None;
        }
        let theta = t.threshold();
        let (lo, hi) = self.mu_range(theta);
        let unit = |v: f64, lo: f64, hi: f64| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        let mut x = vec![unit(s.mu, lo, hi)];
        let experts: &[(Pattern, f64, f64)] = if self.homogeneous {
            &[(self.first, s.k1, s.l1)]
        } else {
            &[(self.first, s.k1, s.l1), (self.second, s.k2, s.l2)]
        };
        for &(pat, k, l) in experts {
            let post = |a1: f64, a0: f64| {
                let den = s.mu * a1 + (1.0 - s.mu) * a0;
                if den > 0.0 {
                    s.mu * a1 / den
                } else {
                    s.mu
                }
            };
            let bl = post(k, l);
            let bh = post(1.0 - k, 1.0 - l);
            let ((l_lo, l_hi), (h_lo, h_hi)) = pat.ranges(s.mu, theta);
            x.push(unit(bl, l_lo, l_hi));
            x.push(unit(bh, h_lo, h_hi));
        }
        Some(x)
    }

    /// Whether the natural recommendations agree with the case on every
    /// signal that carries mass.
    pub fn matches(&self, pmf: &[f64; 8], t: UtilityRatio) -> bool {
        let nat = natural_recommendations(pmf, t);
        let forced = self.forced();
        if self.strict && (nat[0].iter().any(|r| r.is_none()) || nat[1].iter().any(|r| r.is_none())) {
            return false;
        }
        (0..2).all(|e| (0..2).all(|s| nat[e][s].is_none() || nat[e][s] == forced[e][s]))
    }

    /// Loss with the case's recommendation rule imposed.
    #[inline]
    pub fn forced_loss(&self, agg: &Aggregator, pmf: &[f64; 8], t: UtilityRatio) -> f64 {
        cells_from_reports(pmf, t, &reports_with(pmf, self.forced())).loss_with(|p| agg.apply(p))
    }
}

/// `(k, l)` from the prior and posterior coordinates of one expert.
fn expert_from_cube(pat: Pattern, mu: f64, xl: f64, xh: f64, theta: f64) -> (f64, f64) {
    let ((l_lo, l_hi), (h_lo, h_hi)) = pat.ranges(mu, theta);
    let bl = l_lo + xl * (l_hi - l_lo);
    let bh = h_lo + xh * (h_hi - h_lo);
    ci_from_posteriors(mu, bl, bh)
}

/// Signal likelihoods `(k, l)` realizing posteriors `b_L <= μ <= b_H`.
pub fn ci_from_posteriors(mu: f64, bl: f64, bh: f64) -> (f64, f64) {
    let q = if bh - bl > 1e-15 { ((bh - mu) / (bh - bl)).clamp(0.0, 1.0) } else { 0.5 };
    let k = if mu > 1e-15 { q * bl / mu } else { q };
    let l = if mu < 1.0 - 1e-15 { q * (1.0 - bl) / (1.0 - mu) } else { q };
    let k = k.clamp(0.0, 1.0);
    let l = l.clamp(0.0, 1.0);
    (k.min(l), l)
}

pub fn cases_for(kind: FamilyKind) -> Vec<Case> {
    use Pattern::*;
    let pats = [AlwaysOne, AlwaysZero, Informative];
    match kind {
        FamilyKind::Daci => vec![Case { first: Informative, second: Informative, homogeneous: true, strict: true }],
        FamilyKind::Aci => pats
            .iter()
            .map(|&p| Case { first: p, second: p, homogeneous: true, strict: false })
            .collect(),
        FamilyKind::Ci | FamilyKind::All => {
            let mut v = Vec::new();
            for &a in &pats {
                for &b in &pats {
                    if (a == AlwaysOne && b == AlwaysZero) || (a == AlwaysZero && b == AlwaysOne) {
                        continue;
                    }
                    v.push(Case { first: a, second: b, homogeneous: false, strict: false });
                }
            }
            v
        }
    }
}

/// Forced-pattern cell data at each grid point of each case, reusable across
/// aggregators for the same family.
pub struct SearchCache {
    family: Family,
    step: f64,
    cases: Vec<Case>,
    points: Vec<Vec<PackedPoint>>,
}

#[derive(Clone, Copy, Debug, Default)]
struct PackedCell {
    gain: f32,
    p1: f32,
    p2: f32,
    a1: u8,
    a2: u8,
}

#[derive(Clone, Copy, Debug, Default)]
struct PackedPoint {
    base: f32,
    len: u8,
    cells: [PackedCell; 4],
}

impl PackedPoint {
    #[inline]
    fn loss(&self, agg: &Aggregator) -> f64 {
        let mut v = self.base as f64;
        for c in &self.cells[..self.len as usize] {
            let q = agg.apply(&ReportProfile::new(c.a1, c.a2, c.p1 as f64, c.p2 as f64));
            v -= q * c.gain as f64;
        }
        v
    }
}

impl SearchCache {
    pub fn build(family: &Family, cfg: &SearchConfig) -> Result<Self> {
        if family.family == FamilyKind::All {
            return Err(Error::UnsupportedFamily("ALL has no case cache".into()));
        }
        let cases = cases_for(family.family);
        let step = if cases[0].homogeneous { cfg.grid_step_3 } else { cfg.grid_step_5 };
        let levels = levels_for_step(step);
        let t = family.t;
        let theta = t.threshold();
        let points = cases
            .iter()
            .map(|case| {
                let n = grid_size(case.dim(), levels);
                (0..n)
                    .into_par_iter()
                    .map(|idx| {
                        let mut x = [0.0; 5];
                        grid_point(idx, case.dim(), levels, &mut x[..case.dim()]);
                        let pmf = case.decode(&x[..case.dim()], theta).joint();
                        let table = cells_from_reports(&pmf, t, &reports_with(&pmf, case.forced()));
                        let mut p = PackedPoint::default();
                        let mut base = 0.0;
                        for (i, c) in table.iter().enumerate() {
                            base += c.gain.max(0.0);
                            p.cells[i] = PackedCell {
                                gain: c.gain as f32,
                                p1: c.profile.p1 as f32,
                                p2: c.profile.p2 as f32,
                                a1: c.profile.a1,
                                a2: c.profile.a2,
                            };
                        }
                        p.base = base as f32;
                        p.len = table.len() as u8;
                        p
                    })
                    .collect()
            })
            .collect();
        Ok(SearchCache { family: *family, step, cases, points })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }
}

const CHUNK: usize = 4096;

struct Refined {
    case: usize,
    x: Vec<f64>,
    witness: Structure,
    value: f64,
    boundary: bool,
}

/// Lower estimate of `sup loss(agg, π)` over the family with a witness.
pub fn worst_case(agg: &Aggregator, family: &Family, cfg: &SearchConfig) -> Result<RegretCertificate> {
    worst_case_with(agg, family, cfg, None)
}

pub fn worst_case_with(
    agg: &Aggregator,
    family: &Family,
    cfg: &SearchConfig,
    cache: Option<&SearchCache>,
) -> Result<RegretCertificate> {
    agg.validate()?;
    let t = family.t;
    let theta = t.threshold();
    let cases = cases_for(family.family);
    if cases.is_empty() {
        return Err(Error::EmptyFamily(family.family.to_string()));
    }
    let cache = cache.filter(|c| c.family == *family && c.cases == cases);
    let step = match cache {
        Some(c) => c.step,
        None if cases[0].homogeneous => cfg.grid_step_3,
        None => cfg.grid_step_5,
    };
    let levels = levels_for_step(step);

    // grid pass over every case
    let sizes: Vec<usize> = cases.iter().map(|c| grid_size(c.dim(), levels)).collect();
    let mut chunks = Vec::new();
    for (ci, &n) in sizes.iter().enumerate() {
        let mut start = 0;
        while start < n {
            chunks.push((ci, start, (start + CHUNK).min(n)));
            start += CHUNK;
        }
    }
    let top = chunks
        .par_iter()
        .map(|&(ci, lo, hi)| {
            let case = &cases[ci];
            let mut top = TopK::new(cfg.top_k);
            let mut x = [0.0; 5];
            for idx in lo..hi {
                let value = match cache {
                    Some(c) => c.points[ci][idx].loss(agg),
                    None => {
                        grid_point(idx, case.dim(), levels, &mut x[..case.dim()]);
                        let pmf = case.decode(&x[..case.dim()], theta).joint();
                        case.forced_loss(agg, &pmf, t)
                    }
                };
                if value >= top.threshold() {
                    top.push(Candidate { value, group: ci, index: idx });
                }
            }
            top
        })
        .reduce(|| TopK::new(cfg.top_k), TopK::merge);
    let mut grid_points: usize = sizes.iter().sum();

    let mut starts: Vec<(usize, Vec<f64>)> = top
        .into_sorted()
        .into_iter()
        .map(|c| {
            let mut x = vec![0.0; cases[c.group].dim()];
            grid_point(c.index, cases[c.group].dim(), levels, &mut x);
            (c.group, x)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_starts {
        for (ci, case) in cases.iter().enumerate() {
            starts.push((ci, (0..case.dim()).map(|_| rng.random::<f64>()).collect()));
        }
    }
    for s in &cfg.warm_starts {
        if let Structure::Ci(ci_s) = s {
            for (ci, case) in cases.iter().enumerate() {
                if let Some(x) = case.encode(ci_s, t) {
                    starts.push((ci, x));
                }
            }
        }
    }

    let refined: Vec<(Refined, usize)> = starts
        .par_iter()
        .map(|(ci, x0)| {
            let case = &cases[*ci];
            let r = nelder_mead_max(
                |x| case.forced_loss(agg, &case.decode(x, theta).joint(), t),
                x0,
                step.max(1e-3),
                cfg.budget,
                cfg.tol,
            );
            let (x, witness, value, boundary, extra) = finalize_case(case, &r.x, agg, t, cfg.boundary_offset);
            let witness = Structure::Ci(witness);
            (Refined { case: *ci, x, witness, value, boundary }, r.evals + extra)
        })
        .collect();
    let mut evaluations = grid_points + refined.iter().map(|r| r.1).sum::<usize>();
    let mut refinements = refined.len();
    let mut best = refined.into_iter().map(|r| r.0).reduce(better).ok_or_else(|| Error::EmptyFamily(family.family.to_string()))?;

    if family.family == FamilyKind::All {
        let (cand, points, evals, runs) = search_simplex(agg, t, cfg, cases.len());
        grid_points += points;
        evaluations += evals;
        refinements += runs;
        if let Some(c) = cand {
            best = better(best, c);
        }
    }

    let case_label = if best.case < cases.len() { cases[best.case].label() } else { "simplex".to_string() };
    let value = loss(agg, &best.witness, t)?;
    Ok(RegretCertificate {
        value,
        witness: best.witness,
        search_meta: SearchMeta {
            grid_step: step,
            cases: cases.len(),
            case: case_label,
            grid_points,
            refinements,
            evaluations,
            attained_at_boundary: best.boundary,
            boundary_offset: cfg.boundary_offset,
        },
    })
}

fn better(a: Refined, b: Refined) -> Refined {
    if b.value > a.value || (b.value == a.value && (b.case, &b.x).partial_cmp(&(a.case, &a.x)) == Some(std::cmp::Ordering::Less)) {
        b
    } else {
        a
    }
}

/// Moves a refined point off case boundaries where the true pattern
/// differs, then scores it with the true loss.
fn finalize_case(
    case: &Case,
    x: &[f64],
    agg: &Aggregator,
    t: UtilityRatio,
    offset: f64,
) -> (Vec<f64>, CondIndepStructure, f64, bool, usize) {
    let theta = t.threshold();
    let mut s = case.decode(x, theta);
    let mut xs = x.to_vec();
    let mut boundary = false;
    let mut evals = 1;
    if !case.matches(&s.joint(), t) {
        boundary = true;
        let mut delta = offset;
        while delta < 0.5 {
            xs = x.iter().map(|&c| if c < 0.5 { (c + delta).min(0.5) } else { (c - delta).max(0.5) }).collect();
            s = case.decode(&xs, theta);
            evals += 1;
            if case.matches(&s.joint(), t) {
                break;
            }
            delta *= 2.0;
        }
    }
    let value = loss_of_pmf(agg, &s.joint(), t);
    (xs, s, value, boundary, evals)
}

/// Composition grid plus refinement on the full pmf simplex.
fn search_simplex(
    agg: &Aggregator,
    t: UtilityRatio,
    cfg: &SearchConfig,
    group: usize,
) -> (Option<Refined>, usize, usize, usize) {
    let n = cfg.simplex_steps.max(1);
    let comps = compositions(n, 8);
    let to_pmf = |x: &[f64]| {
        let total: f64 = x.iter().sum();
        let mut pmf = [0.125; 8];
        if total > 0.0 {
            for i in 0..8 {
                pmf[i] = x[i] / total;
            }
        }
        pmf
    };
    let top = comps
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut top = TopK::new(cfg.top_k);
            for (j, c) in chunk.iter().enumerate() {
                let x: Vec<f64> = c.iter().map(|&v| v as f64 / n as f64).collect();
                let value = loss_of_pmf(agg, &to_pmf(&x), t);
                top.push(Candidate { value, group, index: ci * CHUNK + j });
            }
            top
        })
        .reduce(|| TopK::new(cfg.top_k), TopK::merge);
    let starts: Vec<Vec<f64>> = top
        .into_sorted()
        .iter()
        .map(|c| comps[c.index].iter().map(|&v| v as f64 / n as f64).collect())
        .collect();
    let runs: Vec<(Refined, usize)> = starts
        .par_iter()
        .map(|x0| {
            let r = nelder_mead_max(|x| loss_of_pmf(agg, &to_pmf(x), t), x0, 0.5 / n as f64, cfg.budget, cfg.tol);
            let pmf = to_pmf(&r.x);
            let value = loss_of_pmf(agg, &pmf, t);
            let witness = Structure::General(GeneralStructure { pmf });
            (Refined { case: group, x: r.x, witness, value, boundary: false }, r.evals)
        })
        .collect();
    let evals = runs.iter().map(|r| r.1).sum();
    let count = runs.len();
    (runs.into_iter().map(|r| r.0).reduce(better), comps.len(), evals, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ci(mu: f64, k1: f64, l1: f64, k2: f64, l2: f64) -> Structure {
        CondIndepStructure::new(mu, k1, l1, k2, l2).unwrap().into()
    }

    #[test]
    fn loss_examples() {
        let r = 2f64.sqrt();
        let t = UtilityRatio::ONE;
        let s = ci(r / 2.0, r - 1.0, 1.0, r - 1.0, 1.0);
        assert_abs_diff_eq!(loss(&Aggregator::FollowFirst, &s, t).unwrap(), 3.0 - 2.0 * r, epsilon = 1e-12);
        let omniscient = ci(0.4, 0.0, 1.0, 0.0, 1.0);
        for agg in [Aggregator::FollowFirst, Aggregator::Uniform, Aggregator::Threshold] {
            assert_abs_diff_eq!(loss(&agg, &omniscient, UtilityRatio::new(2.5).unwrap()).unwrap(), 0.0, epsilon = 1e-15);
        }
        let s = ci(0.5, 0.5, 0.5, 0.0, 1.0);
        assert_abs_diff_eq!(loss(&Aggregator::Uniform, &s, t).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn scaled_loss_examples() {
        let s = ci(0.35, 0.2, 0.6, 0.3, 0.8);
        let agg = Aggregator::BipolarRadial;
        let u = UtilityTable::indicator();
        assert_abs_diff_eq!(
            scaled_loss(&agg, &s, &u).unwrap(),
            loss(&agg, &s, UtilityRatio::ONE).unwrap(),
            epsilon = 1e-15
        );
        let u3 = UtilityTable { u00: 3.0, u01: 0.0, u10: 0.0, u11: 3.0 };
        assert_abs_diff_eq!(scaled_loss(&agg, &s, &u3).unwrap(), 3.0 * scaled_loss(&agg, &s, &u).unwrap(), epsilon = 1e-14);
        let u2 = UtilityTable { u00: 2.0, u01: 0.0, u10: 0.0, u11: 4.0 };
        let two = UtilityRatio::new(2.0).unwrap();
        assert_abs_diff_eq!(scaled_loss(&agg, &s, &u2).unwrap(), 2.0 * loss(&agg, &s, two).unwrap(), epsilon = 1e-14);
        assert_abs_diff_eq!(scaled_loss(&agg, &s, &u2).unwrap(), direct_loss(&agg, &s, &u2).unwrap(), epsilon = 1e-14);
        let bad = UtilityTable { u00: 0.0, u01: 0.0, u10: 1.0, u11: 1.0 };
        assert!(matches!(scaled_loss(&agg, &s, &bad), Err(Error::DominatedAction(_))));
    }

    #[test]
    fn case_roundtrip() {
        let t = UtilityRatio::new(1.5).unwrap();
        let theta = t.threshold();
        for case in cases_for(FamilyKind::Ci).into_iter().chain(cases_for(FamilyKind::Aci)) {
            let x: Vec<f64> = (0..case.dim()).map(|i| 0.2 + 0.13 * i as f64).collect();
            let s = case.decode(&x, theta);
            s.validate().unwrap();
            assert!(case.matches(&s.joint(), t), "{}", case.label());
            let back = case.encode(&s, t).unwrap();
            for (a, b) in x.iter().zip(&back) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn posterior_coordinates() {
        let (k, l) = ci_from_posteriors(0.6, 0.3, 0.9);
        let s = ci(0.6, k, l, k, l);
        use crate::model::{posterior, Conditioning, Signal};
        assert_abs_diff_eq!(posterior(&s, Conditioning::First(Signal::L)).unwrap(), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(posterior(&s, Conditioning::First(Signal::H)).unwrap(), 0.9, epsilon = 1e-12);
    }

    #[test]
    fn heterogeneous_case_count() {
        assert_eq!(cases_for(FamilyKind::Ci).len(), 7);
        assert_eq!(cases_for(FamilyKind::Aci).len(), 3);
        assert_eq!(cases_for(FamilyKind::Daci).len(), 1);
    }

    #[test]
    fn forced_loss_matches_true_loss_inside_case() {
        let t = UtilityRatio::ONE;
        let case = cases_for(FamilyKind::Daci)[0];
        let s = case.decode(&[0.7, 0.4, 0.6], t.threshold());
        let pmf = s.joint();
        assert!(case.matches(&pmf, t));
        let agg = Aggregator::BipolarRadial;
        assert_abs_diff_eq!(case.forced_loss(&agg, &pmf, t), loss_of_pmf(&agg, &pmf, t), epsilon = 1e-15);
    }

    #[test]
    fn coarse_worst_case_uniform_aci() {
        let cfg = SearchConfig { grid_step_3: 0.05, ..SearchConfig::default() };
        let fam = Family::new(FamilyKind::Aci, UtilityRatio::ONE);
        let cert = worst_case(&Aggregator::Uniform, &fam, &cfg).unwrap();
        let target = 3.0 - 2.0 * 2f64.sqrt();
        assert!((cert.value - target).abs() < 2e-4, "{}", cert.value);
        assert_abs_diff_eq!(loss(&Aggregator::Uniform, &cert.witness, UtilityRatio::ONE).unwrap(), cert.value, epsilon = 1e-12);
    }

    #[test]
    fn cache_agrees_with_direct_search() {
        let cfg = SearchConfig { grid_step_3: 0.05, ..SearchConfig::default() };
        let fam = Family::new(FamilyKind::Daci, UtilityRatio::ONE);
        let cache = SearchCache::build(&fam, &cfg).unwrap();
        let a = worst_case(&Aggregator::BipolarRadial, &fam, &cfg).unwrap();
        let b = worst_case_with(&Aggregator::BipolarRadial, &fam, &cfg, Some(&cache)).unwrap();
        assert!((a.value - b.value).abs() < 1e-6, "{} vs {}", a.value, b.value);
    }
}
