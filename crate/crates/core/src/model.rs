//! Information structures, expert reports and the omniscient benchmark.
//!
//! Joint distributions are stored as 8 cells indexed by `ω*4 + s1*2 + s2`
//! with `L = 0`, `H = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Action = u8;

/// Tolerance for structure validation and family constraints.
pub const TOL: f64 = 1e-10;

/// Float slack when a posterior lands on the recommendation threshold.
/// Constructions place posteriors exactly on the threshold, and the exact tie
/// must resolve to action 1 even after rounding.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct UtilityRatio(f64);

impl UtilityRatio {
    pub const ONE: UtilityRatio = UtilityRatio(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(UtilityRatio(t))
        } else {
            Err(Error::InvalidUtility(format!("ratio must be positive, got {t}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Posterior threshold 1/(t+1) above which action 1 is optimal.
    pub fn threshold(self) -> f64 {
        1.0 / (self.0 + 1.0)
    }

    pub fn inverse(self) -> Self {
        UtilityRatio(1.0 / self.0)
    }
}

impl TryFrom<f64> for UtilityRatio {
    type Error = Error;
    fn try_from(t: f64) -> Result<Self> {
        UtilityRatio::new(t)
    }
}

impl From<UtilityRatio> for f64 {
    fn from(t: UtilityRatio) -> f64 {
        t.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Signal {
    L,
    H,
}

impl Signal {
    pub const BOTH: [Signal; 2] = [Signal::L, Signal::H];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Signal {
        if i == 0 {
            Signal::L
        } else {
            Signal::H
        }
    }

    pub fn flip(self) -> Signal {
        Signal::from_index(1 - self.index())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expert {
    First,
    Second,
}

impl Expert {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn peer(self) -> Expert {
        match self {
            Expert::First => Expert::Second,
            Expert::Second => Expert::First,
        }
    }
}

/// Cell index of `(ω, s1, s2)` in a joint pmf.
#[inline]
pub fn cell_index(state: usize, s1: usize, s2: usize) -> usize {
    state * 4 + s1 * 2 + s2
}

/// Conditionally independent structure: `k_i = π(S_i=L|ω=1)`, `l_i = π(S_i=L|ω=0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondIndepStructure {
    pub mu: f64,
    pub k1: f64,
    pub l1: f64,
    pub k2: f64,
    pub l2: f64,
}

impl CondIndepStructure {
    pub fn new(mu: f64, k1: f64, l1: f64, k2: f64, l2: f64) -> Result<Self> {
        let s = CondIndepStructure { mu, k1, l1, k2, l2 };
        s.validate()?;
        Ok(s)
    }

    pub fn homogeneous(mu: f64, k: f64, l: f64) -> Result<Self> {
        Self::new(mu, k, l, k, l)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu", self.mu),
            ("k1", self.k1),
            ("l1", self.l1),
            ("k2", self.k2),
            ("l2", self.l2),
        ] {
            if !v.is_finite() || !(-TOL..=1.0 + TOL).contains(&v) {
                return Err(Error::InvalidStructure(format!("{name}={v} outside [0,1]")));
            }
        }
        if self.k1 > self.l1 + TOL {
            return Err(Error::InvalidStructure("k1 <= l1 violated".into()));
        }
        if self.k2 > self.l2 + TOL {
            return Err(Error::InvalidStructure("k2 <= l2 violated".into()));
        }
        Ok(())
    }

    pub fn joint(&self) -> [f64; 8] {
        let mut pmf = [0.0; 8];
        let lik = |q: f64, s: usize| if s == 0 { q } else { 1.0 - q };
        for state in 0..2 {
            let (prior, q1, q2) = if state == 1 {
                (self.mu, self.k1, self.k2)
            } else {
                (1.0 - self.mu, self.l1, self.l2)
            };
            for s1 in 0..2 {
                for s2 in 0..2 {
                    pmf[cell_index(state, s1, s2)] =
                        prior * lik(q1, s1) * lik(q2, s2);
                }
            }
        }
        pmf
    }

    pub fn is_homogeneous(&self) -> bool {
        (self.k1 - self.k2).abs() <= TOL && (self.l1 - self.l2).abs() <= TOL
    }

    pub fn complement(&self) -> Self {
        CondIndepStructure {
            mu: 1.0 - self.mu,
            k1: 1.0 - self.l1,
            l1: 1.0 - self.k1,
            k2: 1.0 - self.l2,
            l2: 1.0 - self.k2,
        }
    }

    pub fn swap_experts(&self) -> Self {
        CondIndepStructure {
            mu: self.mu,
            k1: self.k2,
            l1: self.l2,
            k2: self.k1,
            l2: self.l1,
        }
    }

    fn kl(&self, expert: Expert) -> (f64, f64) {
        match expert {
            Expert::First => (self.k1, self.l1),
            Expert::Second => (self.k2, self.l2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralStructure {
    pub pmf: [f64; 8],
}

impl GeneralStructure {
    pub fn new(pmf: [f64; 8]) -> Result<Self> {
        let s = GeneralStructure { pmf };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidStructure("pmf entries must be nonnegative".into()));
        }
        let total: f64 = self.pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidStructure(format!("pmf sums to {total}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Structure {
    Ci(CondIndepStructure),
    General(GeneralStructure),
}

impl From<CondIndepStructure> for Structure {
    fn from(s: CondIndepStructure) -> Self {
        Structure::Ci(s)
    }
}

impl From<GeneralStructure> for Structure {
    fn from(s: GeneralStructure) -> Self {
        Structure::General(s)
    }
}

impl Structure {
    pub fn joint(&self) -> [f64; 8] {
        match self {
            Structure::Ci(s) => s.joint(),
            Structure::General(g) => g.pmf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Structure::Ci(s) => s.validate(),
            Structure::General(g) => g.validate(),
        }
    }

    /// Flips the state and both signals.
    pub fn complement(&self) -> Structure {
        match self {
            Structure::Ci(s) => Structure::Ci(s.complement()),
            Structure::General(g) => {
                let mut pmf = [0.0; 8];
                for w in 0..2 {
                    for s1 in 0..2 {
                        for s2 in 0..2 {
                            pmf[cell_index(w, s1, s2)] = g.pmf[cell_index(1 - w, 1 - s1, 1 - s2)];
                        }
                    }
                }
                Structure::General(GeneralStructure { pmf })
            }
        }
    }

    pub fn swap_experts(&self) -> Structure {
        match self {
            Structure::Ci(s) => Structure::Ci(s.swap_experts()),
            Structure::General(g) => {
                let mut pmf = [0.0; 8];
                for w in 0..2 {
                    for s1 in 0..2 {
                        for s2 in 0..2 {
                            pmf[cell_index(w, s1, s2)] = g.pmf[cell_index(w, s2, s1)];
                        }
                    }
                }
                Structure::General(GeneralStructure { pmf })
            }
        }
    }

    /// CI parameters read off the joint pmf. Conditionals of a zero-mass state
    /// are copied from the other state.
    pub fn ci_params(&self) -> CondIndepStructure {
        match self {
            Structure::Ci(s) => *s,
            Structure::General(g) => {
                let m = marginals(&g.pmf);
                let mu = m.state1;
                let cond = |mass: f64, total: f64| if total > 0.0 { mass / total } else { f64::NAN };
                let mut k1 = cond(m.first_state[1][0], mu);
                let mut l1 = cond(m.first_state[0][0], 1.0 - mu);
                let mut k2 = cond(m.second_state[1][0], mu);
                let mut l2 = cond(m.second_state[0][0], 1.0 - mu);
                if k1.is_nan() {
                    k1 = l1;
                    k2 = l2;
                }
                if l1.is_nan() {
                    l1 = k1;
                    l2 = k2;
                }
                CondIndepStructure { mu, k1, l1, k2, l2 }
            }
        }
    }
}

/// Signal and state marginals of a joint pmf.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Marginals {
    pub state1: f64,
    /// `first_state[ω][s]` = π(ω, S1=s)
    pub first_state: [[f64; 2]; 2],
    pub second_state: [[f64; 2]; 2],
}

pub(crate) fn marginals(pmf: &[f64; 8]) -> Marginals {
    let mut first_state = [[0.0; 2]; 2];
    let mut second_state = [[0.0; 2]; 2];
    let mut state1 = 0.0;
    for w in 0..2 {
        for s1 in 0..2 {
            for s2 in 0..2 {
                let p = pmf[cell_index(w, s1, s2)];
                first_state[w][s1] += p;
                second_state[w][s2] += p;
                if w == 1 {
                    state1 += p;
                }
            }
        }
    }
    Marginals { state1, first_state, second_state }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conditioning {
    First(Signal),
    Second(Signal),
    Both(Signal, Signal),
}

/// Bayes posterior π(ω=1 | conditioning).
pub fn posterior(structure: &Structure, cond: Conditioning) -> Result<f64> {
    let (num, den) = match structure {
        Structure::Ci(s) => {
            let lik = |q: f64, sig: Signal| if sig == Signal::L { q } else { 1.0 - q };
            let (a1, a0) = match cond {
                Conditioning::First(sig) => (lik(s.k1, sig), lik(s.l1, sig)),
                Conditioning::Second(sig) => (lik(s.k2, sig), lik(s.l2, sig)),
                Conditioning::Both(x, y) => {
                    (lik(s.k1, x) * lik(s.k2, y), lik(s.l1, x) * lik(s.l2, y))
                }
            };
            let num = s.mu * a1;
            (num, num + (1.0 - s.mu) * a0)
        }
        Structure::General(g) => {
            let mass = |w: usize| -> f64 {
                match cond {
                    Conditioning::First(x) => {
                        (0..2).map(|y| g.pmf[cell_index(w, x.index(), y)]).sum()
                    }
                    Conditioning::Second(y) => {
                        (0..2).map(|x| g.pmf[cell_index(w, x, y.index())]).sum()
                    }
                    Conditioning::Both(x, y) => g.pmf[cell_index(w, x.index(), y.index())],
                }
            };
            let num = mass(1);
            (num, num + mass(0))
        }
    };
    if den <= 0.0 {
        return Err(Error::ZeroProbabilityEvent);
    }
    Ok(num / den)
}

/// Recommended action for a posterior: 1 iff `b >= 1/(t+1)`, ties to 1.
#[inline]
pub fn recommend(posterior: f64, t: UtilityRatio) -> Action {
    (posterior >= t.threshold() - TIE_TOL) as Action
}

/// Per-expert, per-signal recommendations and predictions. `None` marks a
/// signal of zero marginal mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reports {
    /// `rec[expert][signal]`
    pub rec: [[Option<Action>; 2]; 2],
    /// `pred[expert][signal]`: probability the peer recommends 1.
    pub pred: [[Option<f64>; 2]; 2],
}

/// Recommendations each expert would make, per signal.
pub fn natural_recommendations(pmf: &[f64; 8], t: UtilityRatio) -> [[Option<Action>; 2]; 2] {
    let m = marginals(pmf);
    let mut rec = [[None; 2]; 2];
    for (e, table) in [m.first_state, m.second_state].iter().enumerate() {
        for s in 0..2 {
            let total = table[0][s] + table[1][s];
            if total > 0.0 {
                rec[e][s] = Some(recommend(table[1][s] / total, t));
            }
        }
    }
    rec
}

/// Reports under a given recommendation rule. Predictions are computed
/// against the supplied peer recommendations.
pub fn reports_with(pmf: &[f64; 8], rec: [[Option<Action>; 2]; 2]) -> Reports {
    let mut pred = [[None; 2]; 2];
    for e in 0..2 {
        for s in 0..2 {
            let mut total = 0.0;
            let mut ones = 0.0;
            for x in 0..2 {
                let (s1, s2) = if e == 0 { (s, x) } else { (x, s) };
                let mass = pmf[cell_index(0, s1, s2)] + pmf[cell_index(1, s1, s2)];
                total += mass;
                if mass > 0.0 && rec[1 - e][x] == Some(1) {
                    ones += mass;
                }
            }
            if total > 0.0 {
                pred[e][s] = Some((ones / total).min(1.0));
            }
        }
    }
    Reports { rec, pred }
}

pub fn reports(pmf: &[f64; 8], t: UtilityRatio) -> Reports {
    reports_with(pmf, natural_recommendations(pmf, t))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportProfile {
    pub a1: Action,
    pub a2: Action,
    pub p1: f64,
    pub p2: f64,
}

impl ReportProfile {
    pub fn new(a1: Action, a2: Action, p1: f64, p2: f64) -> Self {
        ReportProfile { a1, a2, p1, p2 }
    }

    pub fn is_consensus(&self) -> bool {
        self.a1 == self.a2
    }

    pub fn swapped(&self) -> Self {
        ReportProfile { a1: self.a2, a2: self.a1, p1: self.p2, p2: self.p1 }
    }

    /// Complement of every field in the same expert order.
    pub fn complemented(&self) -> Self {
        ReportProfile { a1: 1 - self.a1, a2: 1 - self.a2, p1: 1.0 - self.p1, p2: 1.0 - self.p2 }
    }
}

/// One signal pair with positive mass, pooled over the state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub s1: Signal,
    pub s2: Signal,
    pub mass1: f64,
    pub mass0: f64,
    /// `t·π(ω=1,s1,s2) − π(ω=0,s1,s2)`; the benchmark plays 1 iff this is ≥ 0.
    pub gain: f64,
    pub profile: ReportProfile,
}

impl Cell {
    /// Loss contributed when the aggregator plays 1 with probability `q`.
    #[inline]
    pub fn loss(&self, q: f64) -> f64 {
        self.gain.max(0.0) - q * self.gain
    }
}

/// The at most four informative cells of a structure.
#[derive(Clone, Copy, Debug)]
pub struct CellTable {
    len: usize,
    cells: [Cell; 4],
}

impl CellTable {
    pub fn as_slice(&self) -> &[Cell] {
        &self.cells[..self.len]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Cell> {
        self.as_slice().iter()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Expected loss of a rule mapping profiles to P(action 1).
    #[inline]
    pub fn loss_with<F: FnMut(&ReportProfile) -> f64>(&self, mut q: F) -> f64 {
        self.as_slice().iter().map(|c| c.loss(q(&c.profile))).sum()
    }
}

pub fn cells_from_reports(pmf: &[f64; 8], t: UtilityRatio, r: &Reports) -> CellTable {
    let blank = Cell {
        s1: Signal::L,
        s2: Signal::L,
        mass1: 0.0,
        mass0: 0.0,
        gain: 0.0,
        profile: ReportProfile::new(0, 0, 0.0, 0.0),
    };
    let mut cells = [blank; 4];
    let mut len = 0;
    for s1 in 0..2 {
        for s2 in 0..2 {
            let mass1 = pmf[cell_index(1, s1, s2)];
            let mass0 = pmf[cell_index(0, s1, s2)];
            if mass1 + mass0 <= 0.0 {
                continue;
            }
            // positive joint mass implies positive marginals
            let profile = ReportProfile {
                a1: r.rec[0][s1].unwrap_or(0),
                a2: r.rec[1][s2].unwrap_or(0),
                p1: r.pred[0][s1].unwrap_or(0.0),
                p2: r.pred[1][s2].unwrap_or(0.0),
            };
            cells[len] = Cell {
                s1: Signal::from_index(s1),
                s2: Signal::from_index(s2),
                mass1,
                mass0,
                gain: t.value() * mass1 - mass0,
                profile,
            };
            len += 1;
        }
    }
    CellTable { len, cells }
}

pub fn cell_table(structure: &Structure, t: UtilityRatio) -> CellTable {
    let pmf = structure.joint();
    cells_from_reports(&pmf, t, &reports(&pmf, t))
}

/// Probability that `expert` observing `signal` sees the peer recommend 1.
pub fn prediction(
    structure: &Structure,
    expert: Expert,
    signal: Signal,
    t: UtilityRatio,
) -> Result<f64> {
    if let Structure::Ci(s) = structure {
        let (k, l) = s.kl(expert);
        let (kp, lp) = s.kl(expert.peer());
        let lik = |q: f64, sig: Signal| if sig == Signal::L { q } else { 1.0 - q };
        let own1 = s.mu * lik(k, signal);
        let own0 = (1.0 - s.mu) * lik(l, signal);
        if own1 + own0 <= 0.0 {
            return Err(Error::ZeroProbabilityEvent);
        }
        let mut ones = 0.0;
        for peer_sig in Signal::BOTH {
            let joint = own1 * lik(kp, peer_sig) + own0 * lik(lp, peer_sig);
            if joint <= 0.0 {
                continue;
            }
            let b = posterior(structure, peer_conditioning(expert, peer_sig))?;
            if recommend(b, t) == 1 {
                ones += joint;
            }
        }
        return Ok((ones / (own1 + own0)).min(1.0));
    }
    let r = reports(&structure.joint(), t);
    r.pred[expert.index()][signal.index()].ok_or(Error::ZeroProbabilityEvent)
}

fn peer_conditioning(expert: Expert, peer_signal: Signal) -> Conditioning {
    match expert {
        Expert::First => Conditioning::Second(peer_signal),
        Expert::Second => Conditioning::First(peer_signal),
    }
}

/// Benchmark action after seeing both signals; ties resolve to 1.
pub fn benchmark_action(structure: &Structure, s1: Signal, s2: Signal, t: UtilityRatio) -> Result<Action> {
    Ok(recommend(posterior(structure, Conditioning::Both(s1, s2))?, t))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub prob: f64,
    pub state: Action,
    pub s1: Signal,
    pub s2: Signal,
    pub profile: ReportProfile,
    pub benchmark_action: Action,
}

/// Positive-mass `(ω, s1, s2)` outcomes with the reports each one induces.
pub fn outcome_table(structure: &Structure, t: UtilityRatio) -> Vec<Outcome> {
    let pmf = structure.joint();
    let r = reports(&pmf, t);
    let mut out = Vec::with_capacity(8);
    for state in 0..2 {
        for s1 in 0..2 {
            for s2 in 0..2 {
                let prob = pmf[cell_index(state, s1, s2)];
                if prob <= 0.0 {
                    continue;
                }
                let pooled = pmf[cell_index(1, s1, s2)] + pmf[cell_index(0, s1, s2)];
                let bench = recommend(pmf[cell_index(1, s1, s2)] / pooled, t);
                out.push(Outcome {
                    prob,
                    state: state as Action,
                    s1: Signal::from_index(s1),
                    s2: Signal::from_index(s2),
                    profile: ReportProfile {
                        a1: r.rec[0][s1].unwrap_or(0),
                        a2: r.rec[1][s2].unwrap_or(0),
                        p1: r.pred[0][s1].unwrap_or(0.0),
                        p2: r.pred[1][s2].unwrap_or(0.0),
                    },
                    benchmark_action: bench,
                });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyKind {
    #[serde(rename = "ALL")]
    All,
    #[serde(rename = "CI")]
    Ci,
    #[serde(rename = "ACI")]
    Aci,
    #[serde(rename = "DACI")]
    Daci,
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FamilyKind::All => "ALL",
            FamilyKind::Ci => "CI",
            FamilyKind::Aci => "ACI",
            FamilyKind::Daci => "DACI",
        })
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ALL" => Ok(FamilyKind::All),
            "CI" => Ok(FamilyKind::Ci),
            "ACI" => Ok(FamilyKind::Aci),
            "DACI" => Ok(FamilyKind::Daci),
            other => Err(Error::UnsupportedFamily(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub family: FamilyKind,
    pub t: UtilityRatio,
}

impl Family {
    pub fn new(family: FamilyKind, t: UtilityRatio) -> Self {
        Family { family, t }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub violations: Vec<String>,
}

pub fn membership(structure: &Structure, family: &Family) -> Membership {
    let mut violations = Vec::new();
    let pmf = structure.joint();
    if pmf.iter().any(|p| !p.is_finite() || *p < -TOL) {
        violations.push("pmf nonnegative".to_string());
    }
    if (pmf.iter().sum::<f64>() - 1.0).abs() > TOL {
        violations.push("pmf sums to 1".to_string());
    }
    if let Structure::Ci(s) = structure {
        if [s.mu, s.k1, s.l1, s.k2, s.l2].iter().any(|v| *v < -TOL || *v > 1.0 + TOL) {
            violations.push("parameters in [0,1]".to_string());
        }
    }
    if family.family != FamilyKind::All && violations.is_empty() {
        let ci = structure.ci_params();
        if let Structure::General(_) = structure {
            let rebuilt = ci.joint();
            if pmf.iter().zip(rebuilt.iter()).any(|(a, b)| (a - b).abs() > TOL) {
                violations.push("conditional independence".to_string());
            }
        }
        if ci.k1 > ci.l1 + TOL {
            violations.push("k1 <= l1".to_string());
        }
        if ci.k2 > ci.l2 + TOL {
            violations.push("k2 <= l2".to_string());
        }
        if matches!(family.family, FamilyKind::Aci | FamilyKind::Daci) {
            if (ci.k1 - ci.k2).abs() > TOL {
                violations.push("k1 = k2".to_string());
            }
            if (ci.l1 - ci.l2).abs() > TOL {
                violations.push("l1 = l2".to_string());
            }
        }
        if family.family == FamilyKind::Daci {
            match posterior(structure, Conditioning::First(Signal::L)) {
                Ok(b) if recommend(b, family.t) == 0 => {}
                _ => violations.push("b_L < 1/(t+1)".to_string()),
            }
            match posterior(structure, Conditioning::First(Signal::H)) {
                Ok(b) if recommend(b, family.t) == 1 => {}
                _ => violations.push("b_H >= 1/(t+1)".to_string()),
            }
        }
    }
    Membership { member: violations.is_empty(), violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn homo_single() -> Structure {
        let r = 2f64.sqrt();
        CondIndepStructure::homogeneous(r / 2.0, r - 1.0, 1.0).unwrap().into()
    }

    #[test]
    fn posterior_of_homogeneous_tie_structure() {
        let s = homo_single();
        assert_abs_diff_eq!(posterior(&s, Conditioning::First(Signal::L)).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(posterior(&s, Conditioning::First(Signal::H)).unwrap(), 1.0, epsilon = 1e-12);
        let r = 2f64.sqrt();
        let (mu, k) = (r / 2.0, r - 1.0);
        let expected = mu * k * k / (mu * k * k + (1.0 - mu));
        let got = posterior(&s, Conditioning::Both(Signal::L, Signal::L)).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(got, 0.2929, epsilon = 1e-4);
    }

    #[test]
    fn posterior_degenerate_prior() {
        let s: Structure = CondIndepStructure::new(1.0, 0.3, 0.6, 0.2, 0.9).unwrap().into();
        for a in Signal::BOTH {
            for b in Signal::BOTH {
                assert_eq!(posterior(&s, Conditioning::Both(a, b)).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn posterior_zero_event() {
        let s: Structure = CondIndepStructure::new(1.0, 0.0, 0.5, 0.0, 0.5).unwrap().into();
        assert_eq!(posterior(&s, Conditioning::First(Signal::L)), Err(Error::ZeroProbabilityEvent));
    }

    #[test]
    fn general_posterior_matches_ci() {
        let ci = CondIndepStructure::new(0.37, 0.2, 0.7, 0.45, 0.6).unwrap();
        let g: Structure = GeneralStructure::new(ci.joint()).unwrap().into();
        let c: Structure = ci.into();
        for cond in [
            Conditioning::First(Signal::L),
            Conditioning::Second(Signal::H),
            Conditioning::Both(Signal::H, Signal::L),
        ] {
            assert_abs_diff_eq!(posterior(&g, cond).unwrap(), posterior(&c, cond).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn recommend_threshold() {
        assert_eq!(recommend(0.5, UtilityRatio::ONE), 1);
        assert_eq!(recommend(0.0, UtilityRatio::new(3.0).unwrap()), 0);
        assert_eq!(recommend(0.3, UtilityRatio::new(4.0).unwrap()), 1);
        assert_eq!(recommend(0.19, UtilityRatio::new(4.0).unwrap()), 0);
    }

    #[test]
    fn predictions() {
        let t = UtilityRatio::ONE;
        let s = homo_single();
        for e in [Expert::First, Expert::Second] {
            for sig in Signal::BOTH {
                assert_abs_diff_eq!(prediction(&s, e, sig, t).unwrap(), 1.0, epsilon = 1e-12);
            }
        }
        // peer independent of own signal and always recommending 0
        let s: Structure = CondIndepStructure::new(0.2, 0.3, 0.6, 0.5, 0.5).unwrap().into();
        assert_eq!(prediction(&s, Expert::First, Signal::H, t).unwrap(), 0.0);

        // just inside the non-degenerate region the L signal recommends 0
        let mu = 0.7426;
        let k = (1.0 - mu) / mu - 1e-6;
        let s: Structure = CondIndepStructure::homogeneous(mu, k, 1.0).unwrap().into();
        let p = prediction(&s, Expert::First, Signal::H, t).unwrap();
        assert_abs_diff_eq!(p, 1.0 - k, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.6533, epsilon = 1e-4);
        // the rounded point has b_L above 1/2, so both signals recommend 1
        let s: Structure = CondIndepStructure::homogeneous(mu, 0.3467, 1.0).unwrap().into();
        assert_eq!(prediction(&s, Expert::First, Signal::H, t).unwrap(), 1.0);
    }

    #[test]
    fn ci_and_general_predictions_agree() {
        let t = UtilityRatio::new(1.7).unwrap();
        let ci = CondIndepStructure::new(0.55, 0.25, 0.8, 0.4, 0.65).unwrap();
        let g: Structure = GeneralStructure::new(ci.joint()).unwrap().into();
        let c: Structure = ci.into();
        for e in [Expert::First, Expert::Second] {
            for sig in Signal::BOTH {
                assert_abs_diff_eq!(
                    prediction(&g, e, sig, t).unwrap(),
                    prediction(&c, e, sig, t).unwrap(),
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn benchmark_examples() {
        let t = UtilityRatio::ONE;
        let s = homo_single();
        assert_eq!(benchmark_action(&s, Signal::L, Signal::L, t).unwrap(), 0);
        assert_eq!(benchmark_action(&s, Signal::H, Signal::H, t).unwrap(), 1);
        let s: Structure = CondIndepStructure::new(0.5, 0.0, 1.0, 0.5, 0.5).unwrap().into();
        assert_eq!(benchmark_action(&s, Signal::H, Signal::L, t).unwrap(), 1);
    }

    #[test]
    fn outcome_tables() {
        let t = UtilityRatio::ONE;
        let rows = outcome_table(&homo_single(), t);
        assert!(!rows.is_empty());
        for o in &rows {
            assert_eq!((o.profile.a1, o.profile.a2), (1, 1));
            assert_abs_diff_eq!(o.profile.p1, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(o.profile.p2, 1.0, epsilon = 1e-12);
        }
        let s: Structure = CondIndepStructure::new(1.0, 0.0, 0.4, 0.0, 0.7).unwrap().into();
        let rows = outcome_table(&s, t);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].state, rows[0].s1, rows[0].s2), (1, Signal::H, Signal::H));
        assert_eq!(rows[0].prob, 1.0);
        let s: Structure = CondIndepStructure::homogeneous(0.5, 0.5, 0.5).unwrap().into();
        let rows = outcome_table(&s, t);
        assert_eq!(rows.len(), 8);
        for o in rows {
            assert_abs_diff_eq!(o.prob, 0.125, epsilon = 1e-15);
        }
    }

    #[test]
    fn membership_examples() {
        let t1 = UtilityRatio::ONE;
        let daci = Family::new(FamilyKind::Daci, t1);
        let m = membership(&homo_single(), &daci);
        assert!(!m.member);
        assert_eq!(m.violations, vec!["b_L < 1/(t+1)".to_string()]);

        let s: Structure = CondIndepStructure::new(0.5, 0.2, 0.6, 0.3, 0.6).unwrap().into();
        let m = membership(&s, &Family::new(FamilyKind::Aci, t1));
        assert_eq!(m.violations, vec!["k1 = k2".to_string()]);
        assert!(membership(&s, &Family::new(FamilyKind::Ci, t1)).member);

        // the rounded bipolar witness sits just past the strict boundary;
        // the exact boundary point k = (1-μ)/μ is approached from inside
        let mu = 0.7426;
        let rounded: Structure = CondIndepStructure::homogeneous(mu, 0.3467, 1.0).unwrap().into();
        assert!(!membership(&rounded, &daci).member);
        let inside: Structure =
            CondIndepStructure::homogeneous(mu, (1.0 - mu) / mu - 1e-6, 1.0).unwrap().into();
        assert!(membership(&inside, &daci).member);
    }

    #[test]
    fn general_membership() {
        let t = UtilityRatio::ONE;
        let ci = CondIndepStructure::homogeneous(0.6, 0.2, 0.7).unwrap();
        let g: Structure = GeneralStructure::new(ci.joint()).unwrap().into();
        assert!(membership(&g, &Family::new(FamilyKind::Daci, t)).member);
        let mut pmf = ci.joint();
        pmf[0] += 0.01;
        pmf[1] -= 0.01;
        let g: Structure = GeneralStructure::new(pmf).unwrap().into();
        assert!(membership(&g, &Family::new(FamilyKind::All, t)).member);
        let m = membership(&g, &Family::new(FamilyKind::Ci, t));
        assert!(m.violations.contains(&"conditional independence".to_string()));
    }

    #[test]
    fn complement_and_swap() {
        let r = 2f64.sqrt();
        let s = CondIndepStructure::homogeneous(r / 2.0, r - 1.0, 1.0).unwrap();
        let c = s.complement();
        assert_abs_diff_eq!(c.mu, 1.0 - r / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.k1, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.l1, 2.0 - r, epsilon = 1e-15);
        let cc = c.complement();
        for (a, b) in [(cc.mu, s.mu), (cc.k1, s.k1), (cc.l1, s.l1), (cc.k2, s.k2), (cc.l2, s.l2)] {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_eq!(s.swap_experts(), s);

        let ci = CondIndepStructure::new(0.3, 0.1, 0.5, 0.4, 0.9).unwrap();
        let g: Structure = GeneralStructure { pmf: ci.joint() }.into();
        let via_general = g.complement().joint();
        let via_ci = ci.complement().joint();
        for i in 0..8 {
            assert_abs_diff_eq!(via_general[i], via_ci[i], epsilon = 1e-15);
        }
        let via_general = g.swap_experts().joint();
        let via_ci = ci.swap_experts().joint();
        for i in 0..8 {
            assert_abs_diff_eq!(via_general[i], via_ci[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn json_shapes() {
        let s: Structure = CondIndepStructure::new(0.5, 0.1, 0.2, 0.3, 0.4).unwrap().into();
        let v = serde_json::to_value(s).unwrap();
        assert_eq!(v["type"], "ci");
        assert_eq!(v["k2"], 0.3);
        let g: Structure = serde_json::from_str(r#"{"type":"general","pmf":[0.125,0.125,0.125,0.125,0.125,0.125,0.125,0.125]}"#).unwrap();
        assert!(g.validate().is_ok());
        let f: Family = serde_json::from_str(r#"{"family":"DACI","t":1.0}"#).unwrap();
        assert_eq!(f.family, FamilyKind::Daci);
        assert!(serde_json::from_str::<Family>(r#"{"family":"DACI","t":-1.0}"#).is_err());
    }
}
