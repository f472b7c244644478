//! Learning grid aggregators by playing the zero-sum game against a
//! best-responding nature, and per-cell certification of their regret.
//!
//! The loss of a grid aggregator is affine in its node values, so nature's
//! best response to the current grid yields an exact linear loss that drives
//! projected online gradient descent. An optional double-oracle phase then
//! solves the game restricted to the structures seen so far and keeps adding
//! best responses until the restricted and true values meet.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregators::{Aggregator, GridParams};
use crate::error::{Error, Result};
use crate::game::{self, AffineRow};
use crate::model::{
    cell_table, cells_from_reports, reports_with, CondIndepStructure, Family, FamilyKind, Structure, UtilityRatio,
};
use crate::regret::{cases_for, worst_case, worst_case_with, Case, Pattern, SearchCache, SearchConfig};
use crate::search::{grid_point, grid_size, levels_for_step, nelder_mead_max, Candidate, TopK};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub grid_step: f64,
    pub iterations: usize,
    /// `c` in the step size `c/√i`.
    pub step_c: f64,
    /// Best-response search used inside the loop.
    pub adversary: SearchConfig,
    /// Search used for the final regret estimate.
    pub evaluation: SearchConfig,
    /// Pair node values as `v(p1,p2) + v(1-p2,1-p1) = 1`; defaults to on
    /// exactly when `t = 1`.
    pub complement_symmetric: Option<bool>,
    /// Rounds of the double-oracle phase; 0 disables it.
    pub polish_rounds: usize,
    /// Accepted gap between the regret estimate and the restricted-game lower
    /// bound.
    pub gap_tol: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            grid_step: 0.1,
            iterations: 2000,
            step_c: 0.5,
            adversary: SearchConfig { top_k: 8, random_starts: 2, ..SearchConfig::default() },
            evaluation: SearchConfig::default(),
            complement_symmetric: None,
            polish_rounds: 40,
            gap_tol: 1e-3,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn steps(&self) -> Result<usize> {
        let steps = (1.0 / self.grid_step).round();
        if !(self.grid_step > 0.0) || steps < 1.0 || (steps * self.grid_step - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("grid step {} must divide 1", self.grid_step)));
        }
        Ok(steps as usize)
    }
}

/// Loss of a grid aggregator on one structure as `constant + coeffs·values`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineLoss {
    pub constant: f64,
    pub coeffs: Vec<f64>,
}

impl AffineLoss {
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(values).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Exact affine decomposition of `loss(Grid(grid), structure, t)` in the
/// node values.
pub fn loss_gradient(grid: &GridParams, structure: &Structure, t: UtilityRatio) -> AffineLoss {
    let mut out = AffineLoss { constant: 0.0, coeffs: vec![0.0; grid.node_count()] };
    for c in cell_table(structure, t).iter() {
        let d = c.gain;
        out.constant += d.max(0.0);
        let pr = c.profile;
        if pr.a1 == pr.a2 {
            out.constant -= pr.a1 as f64 * d;
            continue;
        }
        let (x, y) = if pr.a1 == 1 { (pr.p1, pr.p2) } else { (pr.p2, pr.p1) };
        match grid.weights(x, y) {
            Some(w) => w.iter().for_each(|(k, a)| out.coeffs[k] -= a * d),
            None => out.constant -= 0.5 * d,
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Free(usize),
    /// `1 − free[i]`
    Paired(usize),
    Half,
}

/// Parametrization of node values that enforces the complement pairing.
struct Reduction {
    slots: Vec<Slot>,
    free: usize,
}

impl Reduction {
    fn new(grid: &GridParams, symmetric: bool) -> Self {
        let n = grid.node_count();
        if !symmetric {
            return Reduction { slots: (0..n).map(Slot::Free).collect(), free: n };
        }
        let mut slots = vec![Slot::Half; n];
        let mut free = 0;
        for idx in 0..n {
            let partner = grid.complement_partner(idx);
            if partner == idx {
                slots[idx] = Slot::Half;
            } else if idx < partner {
                slots[idx] = Slot::Free(free);
                slots[partner] = Slot::Paired(free);
                free += 1;
            }
        }
        Reduction { slots, free }
    }

    fn expand(&self, z: &[f64], out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.slots) {
            *o = match *s {
                Slot::Free(i) => z[i],
                Slot::Paired(i) => 1.0 - z[i],
                Slot::Half => 0.5,
            };
        }
    }

    fn row(&self, l: &AffineLoss) -> AffineRow {
        let mut row = AffineRow { constant: l.constant, coeffs: vec![0.0; self.free] };
        for (c, s) in l.coeffs.iter().zip(&self.slots) {
            match *s {
                Slot::Free(i) => row.coeffs[i] += c,
                Slot::Paired(i) => {
                    row.constant += c;
                    row.coeffs[i] -= c;
                }
                Slot::Half => row.constant += 0.5 * c,
            }
        }
        row
    }

    /// Euclidean projection onto the box intersected with the pairing.
    fn project(&self, x: &mut [f64]) {
        for idx in 0..x.len() {
            x[idx] = x[idx].clamp(0.0, 1.0);
        }
        let mut seen = vec![false; x.len()];
        for idx in 0..x.len() {
            if seen[idx] {
                continue;
            }
            seen[idx] = true;
            match self.slots[idx] {
                Slot::Half => x[idx] = 0.5,
                Slot::Free(i) | Slot::Paired(i) => {
                    if let Some(j) = (0..x.len()).find(|&j| j != idx && matches_pair(self.slots[j], i)) {
                        seen[j] = true;
                        let v = ((x[idx] + 1.0 - x[j]) / 2.0).clamp(0.0, 1.0);
                        x[idx] = v;
                        x[j] = 1.0 - v;
                    }
                }
            }
        }
    }
}

fn matches_pair(s: Slot, i: usize) -> bool {
    matches!(s, Slot::Free(k) | Slot::Paired(k) if k == i)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub structure: CondIndepStructure,
    /// Loss of the current iterate on nature's best response.
    pub loss: f64,
    /// Mean of `loss` over iterations so far.
    pub running_average: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub rows: Vec<TraceRow>,
}

impl GameTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,mu,k1,l1,k2,l2,loss,running_average\n");
        for r in &self.rows {
            let p = &r.structure;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.iteration, p.mu, p.k1, p.l1, p.k2, p.l2, r.loss, r.running_average
            ));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnResult {
    pub aggregator: GridParams,
    /// Worst-case search value of `aggregator`.
    pub regret: f64,
    pub witness: Structure,
    /// Nature's guarantee on the structures seen, a lower bound on the value
    /// of the grid game.
    pub lower_bound: f64,
    pub duality_gap: f64,
    pub converged: bool,
    pub polish_rounds: usize,
    pub trace: GameTrace,
}

/// Nature's move given the current grid.
pub trait Adversary {
    fn best_response(&mut self, grid: &GridParams) -> Result<CondIndepStructure>;
}

/// Best response by worst-case search over a family.
pub struct SearchAdversary {
    family: Family,
    cfg: SearchConfig,
    cache: Option<SearchCache>,
    recent: Vec<Structure>,
}

impl SearchAdversary {
    pub fn new(family: Family, cfg: SearchConfig) -> Result<Self> {
        if !matches!(family.family, FamilyKind::Aci | FamilyKind::Daci) {
            return Err(Error::UnsupportedFamily(family.family.to_string()));
        }
        let cache = Some(SearchCache::build(&family, &cfg)?);
        Ok(SearchAdversary { family, cfg, cache, recent: Vec::new() })
    }

    fn search(&mut self, grid: &GridParams) -> Result<(CondIndepStructure, f64)> {
        let mut cfg = self.cfg.clone();
        cfg.warm_starts.extend(self.recent.iter().cloned());
        let cert = worst_case_with(&Aggregator::Grid(grid.clone()), &self.family, &cfg, self.cache.as_ref())?;
        self.recent.push(cert.witness);
        if self.recent.len() > 4 {
            self.recent.remove(0);
        }
        Ok((cert.witness.ci_params(), cert.value))
    }
}

impl Adversary for SearchAdversary {
    fn best_response(&mut self, grid: &GridParams) -> Result<CondIndepStructure> {
        Ok(self.search(grid)?.0)
    }
}

/// Nature restricted to a fixed list of structures.
pub struct FiniteAdversary {
    pub structures: Vec<Structure>,
    pub t: UtilityRatio,
}

impl Adversary for FiniteAdversary {
    fn best_response(&mut self, grid: &GridParams) -> Result<CondIndepStructure> {
        let agg = Aggregator::Grid(grid.clone());
        let mut best: Option<(f64, &Structure)> = None;
        for s in &self.structures {
            let v = crate::regret::loss(&agg, s, self.t)?;
            if best.is_none_or(|b| v > b.0) {
                best = Some((v, s));
            }
        }
        best.map(|b| b.1.ci_params()).ok_or_else(|| Error::EmptyFamily("no structures".into()))
    }
}

/// Learns a grid aggregator for an ACI or DACI family.
pub fn learn(family: &Family, cfg: &LearnerConfig) -> Result<LearnResult> {
    let mut adv = SearchAdversary::new(*family, cfg.adversary.clone())?;
    let family = *family;
    let eval_cfg = cfg.evaluation.clone();
    learn_with(&mut adv, family.t, cfg, move |grid| {
        let cert = worst_case(&Aggregator::Grid(grid.clone()), &family, &eval_cfg)?;
        Ok((cert.value, cert.witness))
    })
}

/// Game dynamics against any adversary. `evaluate` returns the regret of a
/// grid together with a structure attaining it.
pub fn learn_with<A: Adversary>(
    adv: &mut A,
    t: UtilityRatio,
    cfg: &LearnerConfig,
    mut evaluate: impl FnMut(&GridParams) -> Result<(f64, Structure)>,
) -> Result<LearnResult> {
    let steps = cfg.steps()?;
    if cfg.iterations == 0 {
        return Err(Error::InvalidConfig("iterations must be positive".into()));
    }
    let symmetric = cfg.complement_symmetric.unwrap_or(t.value() == 1.0);
    let mut grid = GridParams::uniform(steps);
    grid.set_complement_symmetric(symmetric);
    let red = Reduction::new(&grid, symmetric);

    let n = grid.node_count();
    let mut x = grid.values().to_vec();
    let mut sum = vec![0.0; n];
    let mut trace = GameTrace::default();
    let mut pool: Vec<AffineLoss> = Vec::new();
    let mut seen = HashSet::new();
    let mut total_loss = 0.0;

    for i in 1..=cfg.iterations {
        grid.values_mut().copy_from_slice(&x);
        let br = adv.best_response(&grid)?;
        let s = Structure::Ci(br);
        let g = loss_gradient(&grid, &s, t);
        let current = g.eval(&x);
        total_loss += current;
        trace.rows.push(TraceRow { iteration: i, structure: br, loss: current, running_average: total_loss / i as f64 });
        for (a, v) in sum.iter_mut().zip(&x) {
            *a += v;
        }
        if seen.insert(structure_key(&br)) {
            pool.push(g.clone());
        }
        let eta = cfg.step_c / (i as f64).sqrt();
        for (v, c) in x.iter_mut().zip(&g.coeffs) {
            *v -= eta * c;
        }
        red.project(&mut x);
    }

    let mut avg: Vec<f64> = sum.iter().map(|s| s / cfg.iterations as f64).collect();
    red.project(&mut avg);
    grid.values_mut().copy_from_slice(&avg);
    let (mut regret, mut witness) = evaluate(&grid)?;
    let mut best_grid = grid.clone();

    // double oracle on the structures seen so far
    let mut lower = f64::NEG_INFINITY;
    let mut rounds = 0;
    if cfg.polish_rounds > 0 {
        let mut candidate = grid.clone();
        while rounds < cfg.polish_rounds {
            rounds += 1;
            let rows: Vec<AffineRow> = pool.iter().map(|l| red.row(l)).collect();
            let sol = game::solve(&rows, red.free)?;
            lower = lower.max(sol.lower);
            let mut values = vec![0.0; n];
            red.expand(&sol.x, &mut values);
            candidate.values_mut().copy_from_slice(&values);
            let (v, w) = evaluate(&candidate)?;
            if v < regret {
                regret = v;
                witness = w;
                best_grid = candidate.clone();
            }
            if regret - lower <= cfg.gap_tol {
                break;
            }
            let br = w.ci_params();
            let added = seen.insert(structure_key(&br));
            if added {
                pool.push(loss_gradient(&candidate, &w, t));
            }
            // the searched witness may repeat; ask the adversary too
            let extra = adv.best_response(&candidate)?;
            if seen.insert(structure_key(&extra)) {
                pool.push(loss_gradient(&candidate, &Structure::Ci(extra), t));
            } else if !added {
                break;
            }
        }
    } else {
        let rows: Vec<AffineRow> = pool.iter().map(|l| red.row(l)).collect();
        let weights = vec![1.0 / rows.len() as f64; rows.len()];
        lower = game::nature_value(&rows, &weights, red.free);
    }

    let gap = regret - lower;
    Ok(LearnResult {
        aggregator: best_grid,
        regret,
        witness,
        lower_bound: lower,
        duality_gap: gap,
        converged: gap <= cfg.gap_tol,
        polish_rounds: rounds,
        trace,
    })
}

fn structure_key(s: &CondIndepStructure) -> [i64; 5] {
    let r = |v: f64| (v * 1e9).round() as i64;
    [r(s.mu), r(s.k1), r(s.l1), r(s.k2), r(s.l2)]
}

/// Bound on the sup inside one interpolation cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellBound {
    pub p1_lo: f64,
    pub p2_lo: f64,
    /// `None` when no structure of the family lands in the cell.
    pub value: Option<f64>,
    pub witness: Option<CondIndepStructure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub value: f64,
    pub witness: Structure,
    pub cells: Vec<CellBound>,
    /// Sup over structures whose experts never disagree (ACI only).
    pub consensus_cases: Option<f64>,
}

const STARTS_PER_CELL: usize = 8;

/// Cell `(i, j)` of the disagreement point of a structure, with its loss.
fn disagreement_cell(case: &Case, grid: &GridParams, x: &[f64], t: UtilityRatio) -> Option<((usize, usize), f64)> {
    let pmf = case.decode(x, t.threshold()).joint();
    let table = cells_from_reports(&pmf, t, &reports_with(&pmf, case.forced()));
    let agg_value = |a1: u8, a2: u8, p1: f64, p2: f64| {
        if a1 == a2 {
            a1 as f64
        } else if a1 == 1 {
            grid.eval(p1, p2)
        } else {
            grid.eval(p2, p1)
        }
    };
    let mut cell = None;
    let mut value = 0.0;
    for c in table.iter() {
        let pr = c.profile;
        value += c.loss(agg_value(pr.a1, pr.a2, pr.p1, pr.p2));
        if pr.a1 == 1 && pr.a2 == 0 {
            cell = Some(cell_of(grid.steps(), pr.p1, pr.p2));
        }
    }
    cell.map(|c| (c, value))
}

fn cell_of(steps: usize, p1: f64, p2: f64) -> (usize, usize) {
    let h = steps as f64;
    let split = |p: f64| ((p.clamp(0.0, 1.0) * h).floor() as usize).min(steps - 1);
    let i = split(p1);
    (i, split(p2.min(p1)).min(i))
}

/// Upper estimate of `sup loss(Grid(grid), π)` over the family by
/// maximizing inside each interpolation cell. Homogeneous structures give
/// the two disagreement signal pairs the same loss, so the value counts both.
pub fn certify(grid: &GridParams, family: &Family, cfg: &SearchConfig) -> Result<CertifyReport> {
    grid.validate()?;
    let t = family.t;
    let cases = cases_for(family.family);
    let case = match family.family {
        FamilyKind::Daci | FamilyKind::Aci => {
            *cases.iter().find(|c| c.first == Pattern::Informative).ok_or_else(|| Error::EmptyFamily(family.family.to_string()))?
        }
        other => return Err(Error::UnsupportedFamily(other.to_string())),
    };
    let steps = grid.steps();
    let ncell = steps * (steps + 1) / 2;
    let cell_id = |(i, j): (usize, usize)| i * (i + 1) / 2 + j;
    let ids: Vec<(usize, usize)> = (0..steps).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let levels = levels_for_step(cfg.grid_step_3);
    let dim = case.dim();
    let total = grid_size(dim, levels);

    let tops: Vec<TopK> = (0..total)
        .into_par_iter()
        .fold(
            || vec![TopK::new(STARTS_PER_CELL); ncell],
            |mut acc, idx| {
                let mut x = [0.0; 3];
                grid_point(idx, dim, levels, &mut x);
                if let Some((c, v)) = disagreement_cell(&case, grid, &x, t) {
                    acc[cell_id(c)].push(Candidate { value: v, group: 0, index: idx });
                }
                acc
            },
        )
        .reduce(
            || vec![TopK::new(STARTS_PER_CELL); ncell],
            |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
        );

    let theta = t.threshold();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter: Vec<[f64; 3]> = (0..ncell).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let cells: Vec<CellBound> = tops
        .into_par_iter()
        .enumerate()
        .map(|(id, top)| {
            let (i, j) = ids[id];
            let lo = (i as f64 / steps as f64, j as f64 / steps as f64);
            let starts: Vec<Vec<f64>> = top
                .into_sorted()
                .iter()
                .map(|c| {
                    let mut x = vec![0.0; dim];
                    grid_point(c.index, dim, levels, &mut x);
                    x
                })
                .collect();
            let mut best: Option<(f64, Vec<f64>)> = None;
            let objective = |x: &[f64]| match disagreement_cell(&case, grid, x, t) {
                Some((c, v)) if c == (i, j) => v,
                _ => f64::NEG_INFINITY,
            };
            let jit = jitter[id];
            for x0 in starts.iter().chain(std::iter::once(&jit.to_vec())) {
                let v0 = objective(x0);
                if !v0.is_finite() {
                    continue;
                }
                let r = nelder_mead_max(objective, x0, cfg.grid_step_3.max(1e-3), cfg.budget, cfg.tol);
                if r.value.is_finite() && best.as_ref().is_none_or(|b| r.value > b.0) {
                    best = Some((r.value, r.x));
                }
            }
            CellBound {
                p1_lo: lo.0,
                p2_lo: lo.1,
                value: best.as_ref().map(|b| b.0),
                witness: best.map(|b| case.decode(&b.1, theta)),
            }
        })
        .collect();

    let (best_cell, value) = cells
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.value.map(|v| (k, v)))
        .fold((None, 0.0), |acc, (k, v)| if acc.0.is_none() || v > acc.1 { (Some(k), v) } else { acc });
    let mut witness = best_cell
        .and_then(|k| cells[k].witness)
        .map(Structure::Ci)
        .unwrap_or_else(|| Structure::Ci(case.decode(&[0.5, 0.5, 0.5], theta)));
    let mut value = value;

    let consensus_cases = if family.family == FamilyKind::Aci {
        let cert = worst_case(&Aggregator::Grid(grid.clone()), family, cfg)?;
        if cert.value > value {
            value = cert.value;
            witness = cert.witness;
        }
        Some(cert.value)
    } else {
        None
    };
    Ok(CertifyReport { value, witness, cells, consensus_cases })
}
