//! Minimax lower bounds: Yao-style reductions over finite structure
//! distributions, exact finite minimax, and the adversarial constructions.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregators::Aggregator;
use crate::error::{Error, Result};
use crate::game::{self, AffineRow};
use crate::model::{
    cell_table, membership, Action, CondIndepStructure, Family, FamilyKind, GeneralStructure, Structure,
    UtilityRatio,
};
use crate::regret::loss;

/// Default rounding tolerance for grouping second-order profiles.
pub const GROUPING_TOL: f64 = 1e-9;

/// Most observation classes the deterministic enumeration accepts.
pub const MAX_CLASSES: usize = 12;

pub const DEFAULT_EPS: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub structure: Structure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureDistribution {
    pub atoms: Vec<Atom>,
}

impl StructureDistribution {
    pub fn new(atoms: Vec<(f64, Structure)>) -> Result<Self> {
        let d = StructureDistribution {
            atoms: atoms.into_iter().map(|(weight, structure)| Atom { weight, structure }).collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn single(s: Structure) -> Result<Self> {
        Self::new(vec![(1.0, s)])
    }

    /// Equal weights on each structure.
    pub fn uniform(structures: Vec<Structure>) -> Result<Self> {
        let w = 1.0 / structures.len().max(1) as f64;
        Self::new(structures.into_iter().map(|s| (w, s)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::InvalidStructure("distribution has no atoms".into()));
        }
        for a in &self.atoms {
            if !(a.weight >= 0.0) {
                return Err(Error::InvalidStructure(format!("negative atom weight {}", a.weight)));
            }
            a.structure.validate()?;
        }
        let total: f64 = self.atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidStructure(format!("atom weights sum to {total}")));
        }
        Ok(())
    }

    pub fn structures(&self) -> Vec<Structure> {
        self.atoms.iter().map(|a| a.structure).collect()
    }

    /// `E_{π∼D}[loss(agg, π)]`.
    pub fn expected_loss(&self, agg: &Aggregator, t: UtilityRatio) -> Result<f64> {
        let mut v = 0.0;
        for a in &self.atoms {
            v += a.weight * loss(agg, &a.structure, t)?;
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoLevel {
    FirstOrder,
    SecondOrder,
}

impl std::str::FromStr for InfoLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" | "first_order" | "1" => Ok(InfoLevel::FirstOrder),
            "second" | "second_order" | "2" => Ok(InfoLevel::SecondOrder),
            other => Err(Error::InvalidConfig(format!("unknown info level {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorClass {
    Deterministic,
    Random,
}

impl std::str::FromStr for AggregatorClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" | "det" => Ok(AggregatorClass::Deterministic),
            "random" | "rand" => Ok(AggregatorClass::Random),
            other => Err(Error::InvalidConfig(format!("unknown aggregator class {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum ClassKey {
    First(Action, Action),
    Second(Action, Action, i64, i64),
}

/// One outcome pooled into a class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMember {
    pub atom: usize,
    pub s1: crate::model::Signal,
    pub s2: crate::model::Signal,
    pub weight: f64,
    /// Atom-weighted `t·π(ω=1,s) − π(ω=0,s)`.
    pub gain: f64,
}

/// Outcomes sharing what the aggregator observes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationClass {
    pub a1: Action,
    pub a2: Action,
    /// Representative predictions; absent at first order.
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub members: Vec<ClassMember>,
}

impl ObservationClass {
    /// Loss when the class plays action 1 with probability zero.
    pub fn base(&self) -> f64 {
        self.members.iter().map(|m| m.gain.max(0.0)).sum()
    }

    pub fn gain(&self) -> f64 {
        self.members.iter().map(|m| m.gain).sum()
    }

    /// Expected loss restricted to the class when it plays 1 with
    /// probability `q`.
    pub fn loss(&self, q: f64) -> f64 {
        self.base() - q * self.gain()
    }

    fn label(&self) -> String {
        match (self.p1, self.p2) {
            (Some(p1), Some(p2)) => format!("({},{},{p1},{p2})", self.a1, self.a2),
            _ => format!("({},{})", self.a1, self.a2),
        }
    }
}

/// Groups every positive-mass outcome of every atom into classes, in order
/// of first appearance.
pub fn observation_classes(
    d: &StructureDistribution,
    level: InfoLevel,
    t: UtilityRatio,
    tol: f64,
) -> Result<Vec<ObservationClass>> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidConfig(format!("grouping tolerance {tol}")));
    }
    let round = |p: f64| if tol > 0.0 { (p / tol).round() as i64 } else { p.to_bits() as i64 };
    let mut index: HashMap<ClassKey, usize> = HashMap::new();
    let mut classes: Vec<ObservationClass> = Vec::new();
    for (ai, atom) in d.atoms.iter().enumerate() {
        for c in cell_table(&atom.structure, t).iter() {
            let pr = c.profile;
            let key = match level {
                InfoLevel::FirstOrder => ClassKey::First(pr.a1, pr.a2),
                InfoLevel::SecondOrder => ClassKey::Second(pr.a1, pr.a2, round(pr.p1), round(pr.p2)),
            };
            let ix = *index.entry(key).or_insert_with(|| {
                let second = level == InfoLevel::SecondOrder;
                classes.push(ObservationClass {
                    a1: pr.a1,
                    a2: pr.a2,
                    p1: second.then_some(pr.p1),
                    p2: second.then_some(pr.p2),
                    members: Vec::new(),
                });
                classes.len() - 1
            });
            classes[ix].members.push(ClassMember {
                atom: ai,
                s1: c.s1,
                s2: c.s2,
                weight: atom.weight * (c.mass0 + c.mass1),
                gain: atom.weight * c.gain,
            });
        }
    }
    if level == InfoLevel::SecondOrder {
        check_straddle(&classes, tol)?;
    }
    Ok(classes)
}

/// Distinct classes whose predictions lie within `tol` of each other.
fn check_straddle(classes: &[ObservationClass], tol: f64) -> Result<()> {
    let near = |x: Option<f64>, y: Option<f64>| (x.unwrap_or(0.0) - y.unwrap_or(0.0)).abs() <= tol;
    for (i, a) in classes.iter().enumerate() {
        for b in &classes[i + 1..] {
            if (a.a1, a.a2) == (b.a1, b.a2) && near(a.p1, b.p1) && near(a.p2, b.p2) {
                return Err(Error::InconsistentGrouping(a.label(), b.label()));
            }
        }
    }
    Ok(())
}

/// Chosen response of one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassChoice {
    pub a1: Action,
    pub a2: Action,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    /// Probability of action 1.
    pub q: f64,
    /// Total probability of the class under the distribution.
    pub mass: f64,
}

impl ClassChoice {
    fn new(c: &ObservationClass, q: f64) -> Self {
        ClassChoice { a1: c.a1, a2: c.a2, p1: c.p1, p2: c.p2, q, mass: c.members.iter().map(|m| m.weight).sum() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCertificate {
    pub value: f64,
    pub info_level: InfoLevel,
    pub distribution: StructureDistribution,
    pub per_class_best: Vec<ClassChoice>,
}

/// Best-response loss against `D` when the aggregator sees only the class
/// of each outcome.
pub fn yao_bound(d: &StructureDistribution, level: InfoLevel, t: UtilityRatio) -> Result<LowerBoundCertificate> {
    yao_bound_with_tol(d, level, t, GROUPING_TOL)
}

pub fn yao_bound_with_tol(
    d: &StructureDistribution,
    level: InfoLevel,
    t: UtilityRatio,
    tol: f64,
) -> Result<LowerBoundCertificate> {
    d.validate()?;
    let classes = observation_classes(d, level, t, tol)?;
    let mut value = 0.0;
    let mut per_class_best = Vec::with_capacity(classes.len());
    for c in &classes {
        let q = if c.gain() >= 0.0 { 1.0 } else { 0.0 };
        value += c.loss(q);
        per_class_best.push(ClassChoice::new(c, q));
    }
    Ok(LowerBoundCertificate { value, info_level: level, distribution: d.clone(), per_class_best })
}

/// Expected loss under `D` of the per-class policy of a certificate.
pub fn policy_loss(cert: &LowerBoundCertificate, t: UtilityRatio) -> Result<f64> {
    let classes = observation_classes(&cert.distribution, cert.info_level, t, GROUPING_TOL)?;
    Ok(classes.iter().zip(&cert.per_class_best).map(|(c, choice)| c.loss(choice.q)).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxResult {
    pub value: f64,
    pub aggregator_class: AggregatorClass,
    pub info_level: InfoLevel,
    pub strategy: Vec<ClassChoice>,
    /// Nature's mixture over the given structures.
    pub nature: Vec<f64>,
    /// Loss of each structure against `strategy`.
    pub losses: Vec<f64>,
    pub duality_gap: f64,
}

/// Exact minimax value of the game between nature, restricted to the given
/// structures, and aggregators acting on observation classes.
pub fn finite_minimax(
    structures: &[Structure],
    class: AggregatorClass,
    level: InfoLevel,
    t: UtilityRatio,
) -> Result<MinimaxResult> {
    if structures.is_empty() {
        return Err(Error::InvalidStructure("no structures".into()));
    }
    // unit atom weights keep per-structure losses unscaled
    let d = StructureDistribution {
        atoms: structures.iter().map(|s| Atom { weight: 1.0, structure: *s }).collect(),
    };
    for s in structures {
        s.validate()?;
    }
    let classes = observation_classes(&d, level, t, GROUPING_TOL)?;
    let n = classes.len();
    let m = structures.len();
    let mut rows: Vec<AffineRow> = (0..m).map(|_| AffineRow { constant: 0.0, coeffs: vec![0.0; n] }).collect();
    for (ci, c) in classes.iter().enumerate() {
        for mem in &c.members {
            rows[mem.atom].constant += mem.gain.max(0.0);
            rows[mem.atom].coeffs[ci] -= mem.gain;
        }
    }

    let (x, nature, duality_gap) = match class {
        AggregatorClass::Deterministic => {
            if n > MAX_CLASSES {
                return Err(Error::TooManyClasses(n, MAX_CLASSES));
            }
            let eval = |mask: usize| {
                let x: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
                rows.iter().map(|r| r.eval(&x)).fold(f64::NEG_INFINITY, f64::max)
            };
            let (mask, _) = (0..1usize << n)
                .into_par_iter()
                .map(|mask| (mask, eval(mask)))
                .reduce(|| (usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
            let x: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
            let losses: Vec<f64> = rows.iter().map(|r| r.eval(&x)).collect();
            let top = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let nature: Vec<f64> = losses.iter().map(|&l| if l == top { 1.0 } else { 0.0 }).collect();
            let total: f64 = nature.iter().sum();
            (x, nature.into_iter().map(|w| w / total).collect(), 0.0)
        }
        AggregatorClass::Random => {
            let sol = game::solve(&rows, n)?;
            let gap = sol.gap();
            (sol.x, sol.weights, gap)
        }
    };
    let losses: Vec<f64> = rows.iter().map(|r| r.eval(&x)).collect();
    let value = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let strategy = classes.iter().zip(&x).map(|(c, &q)| ClassChoice::new(c, q)).collect();
    Ok(MinimaxResult { value, aggregator_class: class, info_level: level, strategy, nature, losses, duality_gap })
}

/// Named adversarial constructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Construction {
    GeneralPair,
    HetFirstDet,
    HetSecondDet,
    HetRandom,
    HomoPurePair,
    HomoSingle,
    DaciFirst,
    DaciSecond,
    GeneTHigh,
    GeneTLow,
    GeneTDaci,
}

/// How a construction's bound is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Yao,
    DeterministicMinimax,
}

impl Construction {
    pub const ALL: [Construction; 11] = [
        Construction::GeneralPair,
        Construction::HetFirstDet,
        Construction::HetSecondDet,
        Construction::HetRandom,
        Construction::HomoPurePair,
        Construction::HomoSingle,
        Construction::DaciFirst,
        Construction::DaciSecond,
        Construction::GeneTHigh,
        Construction::GeneTLow,
        Construction::GeneTDaci,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Construction::GeneralPair => "GENERAL_PAIR",
            Construction::HetFirstDet => "HET_FIRST_DET",
            Construction::HetSecondDet => "HET_SECOND_DET",
            Construction::HetRandom => "HET_RANDOM",
            Construction::HomoPurePair => "HOMO_PURE_PAIR",
            Construction::HomoSingle => "HOMO_SINGLE",
            Construction::DaciFirst => "DACI_FIRST",
            Construction::DaciSecond => "DACI_SECOND",
            Construction::GeneTHigh => "GENE_T_HIGH",
            Construction::GeneTLow => "GENE_T_LOW",
            Construction::GeneTDaci => "GENE_T_DACI",
        }
    }

    pub fn family(self) -> FamilyKind {
        use Construction::*;
        match self {
            GeneralPair => FamilyKind::All,
            HetFirstDet | HetSecondDet | HetRandom => FamilyKind::Ci,
            HomoPurePair | HomoSingle | GeneTHigh | GeneTLow => FamilyKind::Aci,
            DaciFirst | DaciSecond | GeneTDaci => FamilyKind::Daci,
        }
    }

    pub fn method(self) -> Method {
        use Construction::*;
        match self {
            HetFirstDet | HetSecondDet | HomoPurePair => Method::DeterministicMinimax,
            _ => Method::Yao,
        }
    }

    pub fn info_level(self) -> InfoLevel {
        use Construction::*;
        match self {
            HetFirstDet | DaciFirst | GeneTDaci => InfoLevel::FirstOrder,
            _ => InfoLevel::SecondOrder,
        }
    }

    pub fn uses_eps(self) -> bool {
        !matches!(self, Construction::HomoPurePair | Construction::HomoSingle | Construction::GeneTHigh)
    }

    pub fn uses_t(self) -> bool {
        matches!(self, Construction::GeneTHigh | Construction::GeneTLow | Construction::GeneTDaci)
    }

    /// Utility ratios for which the construction is stated.
    pub fn t_range(self) -> (f64, f64) {
        match self {
            Construction::GeneTHigh => (1.0, f64::INFINITY),
            Construction::GeneTLow => (0.0, 1.0),
            Construction::GeneTDaci => (0.0, f64::INFINITY),
            _ => (1.0, 1.0),
        }
    }

    /// Open upper end of the valid ε range.
    fn eps_max(self, t: f64) -> f64 {
        use Construction::*;
        match self {
            GeneralPair => 0.25,
            HetFirstDet | HetSecondDet | HetRandom => 0.5,
            DaciFirst => 2f64.sqrt() - 1.0,
            DaciSecond => 0.25,
            GeneTLow => 1.0 - t.sqrt() * ((t + 1.0).sqrt() - t.sqrt()),
            GeneTDaci => ((t + 1.0).sqrt() - 1.0) / t,
            HomoPurePair | HomoSingle | GeneTHigh => f64::INFINITY,
        }
    }

    /// Closed-form bound as stated alongside the construction.
    pub fn target(self, eps: f64, t: f64) -> f64 {
        use Construction::*;
        let e = eps;
        let r = 2f64.sqrt();
        let (a, b) = prob_p_parts(t);
        match self {
            GeneralPair => 0.5 - 1.5 * e,
            HetFirstDet => 0.5 - e,
            HetSecondDet => (1.0 - 2.0 * e) / (3.0 + 2.0 * e),
            HetRandom => 0.25 - e,
            HomoPurePair | HomoSingle => 3.0 - 2.0 * r,
            DaciFirst => 3.0 - 2.0 * r - (1.5 * r - 2.0) * e - r / 2.0 * e * e,
            DaciSecond => {
                1.0 / 6.0 - 2.0 * e / 9.0 - (18.0 * e - 32.0 * e * e) / (9.0 * (3.0 - 4.0 * e).powi(2))
            }
            GeneTHigh => a,
            GeneTLow => {
                b - 2.0 * t * (t + 1.0).sqrt() * ((t * t + t).sqrt() - 1.0) * e - t / (t + 1.0).sqrt() * e * e
            }
            GeneTDaci => {
                let k0 = ((t + 1.0).sqrt() - 1.0) / t;
                let z = b + a - e * e - (1.0 - 2.0 * k0) * e;
                let w2 = (a - e * e - (1.0 - 2.0 * k0) * e) / z;
                let c = t * ((t + 1.0).sqrt() - t.sqrt()) / t.sqrt();
                w2 * 2.0 * (t / (t + 1.0)).sqrt() * (1.0 - c) * c
            }
        }
    }

    /// Atoms of the construction.
    pub fn build(self, eps: f64, t: UtilityRatio) -> Result<StructureDistribution> {
        use Construction::*;
        let tv = t.value();
        let (lo, hi) = self.t_range();
        if self.uses_t() && (tv < lo || tv > hi) {
            return Err(Error::InvalidUtility(format!("{} needs t in [{lo}, {hi}], got {tv}", self.name())));
        }
        let out_of_range = || Error::EpsilonOutOfRange { name: self.name().to_string(), eps };
        if self.uses_eps() && !(eps > 0.0 && eps < self.eps_max(tv)) {
            return Err(out_of_range());
        }
        let e = eps;
        let r = 2f64.sqrt();
        let ci = |mu, k1, l1, k2, l2| CondIndepStructure::new(mu, k1, l1, k2, l2).map(Structure::Ci);
        let homo = |mu, k, l| CondIndepStructure::homogeneous(mu, k, l).map(Structure::Ci);
        let built: Result<Vec<(f64, Structure)>> = (|| {
            Ok(match self {
                GeneralPair => vec![
                    (0.5, general([0.0, 0.5 - e, 0.5 - e, 2.0 * e], [0.5 + e, 0.0, 0.0, 0.5 - e], 0.5)?),
                    (0.5, general([0.5 - e, 0.0, 0.0, 0.5 + e], [2.0 * e, 0.5 - e, 0.5 - e, 0.0], 0.5)?),
                ],
                HetFirstDet => vec![(0.5, ci(0.5 + e, 0.5, 0.5, 0.0, 1.0)?), (0.5, ci(0.5 - e, 0.0, 1.0, 0.5, 0.5)?)],
                HetSecondDet => vec![
                    (0.5, ci((1.0 + 2.0 * e) / (3.0 + 2.0 * e), 0.0, 0.5 + e, 0.0, 1.0)?),
                    (0.5, ci(2.0 / (3.0 + 2.0 * e), 0.0, 1.0, 0.5 - e, 1.0)?),
                ],
                HetRandom => vec![
                    (0.5, ci(0.5, 0.0, 1.0, 0.5 - e, 0.5 + e)?),
                    (0.5, ci(0.5, 0.5 - e, 0.5 + e, 0.0, 1.0)?),
                ],
                HomoPurePair => vec![
                    (0.5, homo(1.0 - r / 2.0, 0.0, 2.0 - r)?),
                    (0.5, homo(r / 2.0, 3.0 * r - 4.0, 2.0 * r - 2.0)?),
                ],
                HomoSingle => vec![(1.0, homo(r / 2.0, r - 1.0, 1.0)?)],
                DaciFirst => vec![
                    (0.5, homo(r / 2.0, r - 1.0 - e, 1.0)?),
                    (0.5, homo(1.0 - r / 2.0, 0.0, 2.0 - r + e)?),
                ],
                DaciSecond => {
                    let shift = 8.0 * e / (9.0 - 12.0 * e);
                    vec![
                        (0.5, homo(0.75 - e, 1.0 / 3.0 - shift, 1.0)?),
                        (0.5, homo(0.25 + e, 0.0, 2.0 / 3.0 + shift)?),
                    ]
                }
                GeneTHigh => vec![(1.0, homo((1.0 / (tv + 1.0)).sqrt(), ((tv + 1.0).sqrt() - 1.0) / tv, 1.0)?)],
                GeneTLow => {
                    let mu = 1.0 - (tv / (tv + 1.0)).sqrt();
                    let l = 1.0 - tv.sqrt() * ((tv + 1.0).sqrt() - tv.sqrt()) - e;
                    vec![(1.0, homo(mu, 0.0, l)?)]
                }
                GeneTDaci => {
                    let (a, b) = prob_p_parts(tv);
                    let k0 = ((tv + 1.0).sqrt() - 1.0) / tv;
                    let z = b + a - e * e - (1.0 - 2.0 * k0) * e;
                    let w1 = b / z;
                    let w2 = (a - e * e - (1.0 - 2.0 * k0) * e) / z;
                    let l2 = 1.0 - tv.sqrt() * ((tv + 1.0).sqrt() - tv.sqrt());
                    vec![
                        (w1, homo((1.0 / (tv + 1.0)).sqrt(), k0 - e, 1.0)?),
                        (w2, homo(1.0 - (tv / (tv + 1.0)).sqrt(), 0.0, l2)?),
                    ]
                }
            })
        })();
        let atoms = built.map_err(|_| out_of_range())?;
        // weights are exact products of the construction; renormalize float noise
        let total: f64 = atoms.iter().map(|a| a.0).sum();
        let atoms: Vec<(f64, Structure)> = atoms.into_iter().map(|(w, s)| (w / total, s)).collect();
        let family = Family::new(self.family(), t);
        for (w, s) in &atoms {
            if !(*w >= 0.0) || !membership(s, &family).member {
                return Err(out_of_range());
            }
        }
        StructureDistribution::new(atoms)
    }

    /// Bound computed from the construction with its own method.
    pub fn evaluate(self, eps: f64, t: UtilityRatio) -> Result<f64> {
        let d = self.build(eps, t)?;
        match self.method() {
            Method::Yao => Ok(yao_bound(&d, self.info_level(), t)?.value),
            Method::DeterministicMinimax => {
                Ok(finite_minimax(&d.structures(), AggregatorClass::Deterministic, self.info_level(), t)?.value)
            }
        }
    }
}

impl std::fmt::Display for Construction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Construction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let up = s.to_ascii_uppercase().replace('-', "_");
        Construction::ALL
            .iter()
            .copied()
            .find(|c| c.name() == up)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown construction {s}")))
    }
}

/// `((√(1+1/t)−√(1/t))², (√(t+t²)−t)²)`.
pub fn prob_p_parts(t: f64) -> (f64, f64) {
    let a = ((1.0 + 1.0 / t).sqrt() - (1.0 / t).sqrt()).powi(2);
    let b = ((t + t * t).sqrt() - t).powi(2);
    (a, b)
}

/// Regret of the best aggregator without predictions on DACI at ratio `t`,
/// with its disagreement probability.
pub fn prob_p_optimum(t: f64) -> (f64, f64) {
    let (a, b) = prob_p_parts(t);
    (2.0 * a * b / (a + b), a / (a + b))
}

/// Joint pmf from per-state rows over `(s1,s2)` in `LL, LH, HL, HH` order.
fn general(rows1: [f64; 4], rows0: [f64; 4], mu: f64) -> Result<Structure> {
    let mut pmf = [0.0; 8];
    for j in 0..4 {
        pmf[4 + j] = mu * rows1[j];
        pmf[j] = (1.0 - mu) * rows0[j];
    }
    GeneralStructure::new(pmf).map(Structure::General)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CondIndepStructure;

    const E: f64 = 1e-4;

    fn one() -> UtilityRatio {
        UtilityRatio::ONE
    }

    #[test]
    fn homo_single_matches_closed_form() {
        let d = Construction::HomoSingle.build(E, one()).unwrap();
        assert_eq!(d.atoms.len(), 1);
        let cert = yao_bound(&d, InfoLevel::SecondOrder, one()).unwrap();
        assert!((cert.value - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-12);
        assert!((policy_loss(&cert, one()).unwrap() - cert.value).abs() < 1e-12);
    }

    #[test]
    fn het_random_atoms() {
        let d = Construction::HetRandom.build(E, one()).unwrap();
        let s = d.atoms[0].structure.ci_params();
        assert_eq!((s.mu, s.k1, s.l1), (0.5, 0.0, 1.0));
        assert!((s.k2 - (0.5 - E)).abs() < 1e-15 && (s.l2 - (0.5 + E)).abs() < 1e-15);
        assert_eq!(d.atoms[1].structure, d.atoms[0].structure.swap_experts());
        assert_eq!(d.atoms[0].weight, 0.5);
    }

    #[test]
    fn het_random_value() {
        // the four disagreement inputs each carry 1/4 − ε/2 across both atoms;
        // the two shared agreement inputs cost ε/2 each after the best response
        let v = Construction::HetRandom.evaluate(E, one()).unwrap();
        let hand = 0.25 - E / 2.0;
        assert!((v - hand).abs() < 1e-12, "{v}");
    }

    #[test]
    fn daci_second_atoms() {
        let d = Construction::DaciSecond.build(E, one()).unwrap();
        let a = d.atoms[0].structure.ci_params();
        assert!((a.mu - (0.75 - E)).abs() < 1e-15);
        assert!((a.k1 - (1.0 / 3.0 - 8.0 * E / (9.0 - 12.0 * E))).abs() < 1e-15);
        assert_eq!(a.l1, 1.0);
        let v = Construction::DaciSecond.evaluate(E, one()).unwrap();
        assert!((0.1664..1.0 / 6.0).contains(&v));
    }

    #[test]
    fn deterministic_pairs() {
        let het = Construction::HetSecondDet.evaluate(E, one()).unwrap();
        assert!((het - (1.0 - 2.0 * E) / (3.0 + 2.0 * E)).abs() < 1e-8, "{het}");
        let first = Construction::HetFirstDet.evaluate(E, one()).unwrap();
        assert!((first - (0.5 - E)).abs() < 1e-8, "{first}");
        let homo = Construction::HomoPurePair.evaluate(E, one()).unwrap();
        assert!((homo - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-9, "{homo}");
    }

    #[test]
    fn random_minimax_on_singleton_matches_yao() {
        let s: Structure = CondIndepStructure::new(0.4, 0.2, 0.7, 0.1, 0.5).unwrap().into();
        let m = finite_minimax(&[s], AggregatorClass::Random, InfoLevel::SecondOrder, one()).unwrap();
        let y = yao_bound(&StructureDistribution::single(s).unwrap(), InfoLevel::SecondOrder, one()).unwrap();
        assert!((m.value - y.value).abs() < 1e-9);
        assert!(m.duality_gap.abs() < 1e-7);
    }

    #[test]
    fn random_minimax_not_above_deterministic() {
        let d = Construction::HomoPurePair.build(E, one()).unwrap();
        let det = finite_minimax(&d.structures(), AggregatorClass::Deterministic, InfoLevel::SecondOrder, one()).unwrap();
        let rnd = finite_minimax(&d.structures(), AggregatorClass::Random, InfoLevel::SecondOrder, one()).unwrap();
        assert!(rnd.value <= det.value + 1e-12);
        assert!(rnd.duality_gap < 1e-7);
    }

    #[test]
    fn revealing_structure_gives_zero() {
        let s: Structure = CondIndepStructure::new(0.3, 0.0, 1.0, 0.0, 1.0).unwrap().into();
        let d = StructureDistribution::single(s).unwrap();
        assert!(yao_bound(&d, InfoLevel::SecondOrder, one()).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn coarsening_never_increases() {
        for c in Construction::ALL {
            let t = if c == Construction::GeneTLow { UtilityRatio::new(0.5).unwrap() } else { UtilityRatio::new(2.0).unwrap() };
            let t = if c.uses_t() { t } else { one() };
            let d = c.build(E, t).unwrap();
            let first = yao_bound(&d, InfoLevel::FirstOrder, t).unwrap().value;
            let second = yao_bound(&d, InfoLevel::SecondOrder, t).unwrap().value;
            assert!(second <= first + 1e-15, "{c}");
        }
    }

    #[test]
    fn eps_and_t_validation() {
        assert!(matches!(Construction::DaciFirst.build(0.5, one()), Err(Error::EpsilonOutOfRange { .. })));
        assert!(matches!(Construction::DaciFirst.build(0.0, one()), Err(Error::EpsilonOutOfRange { .. })));
        assert!(Construction::HomoSingle.build(0.0, one()).is_ok());
        assert!(matches!(Construction::GeneTHigh.build(E, UtilityRatio::new(0.5).unwrap()), Err(Error::InvalidUtility(_))));
    }

    #[test]
    fn every_atom_is_a_family_member() {
        for c in Construction::ALL {
            for t in [0.5, 1.0, 2.0] {
                let t = UtilityRatio::new(t).unwrap();
                if let Ok(d) = c.build(E, t) {
                    let fam = Family::new(c.family(), t);
                    assert!(d.atoms.iter().all(|a| membership(&a.structure, &fam).member), "{c}");
                }
            }
        }
    }

    #[test]
    fn straddling_keys_are_rejected() {
        let class = |p1: f64| ObservationClass { a1: 1, a2: 0, p1: Some(p1), p2: Some(0.5), members: vec![] };
        let straddle = [class(0.49999e-3), class(0.50001e-3)];
        assert!(matches!(check_straddle(&straddle, 1e-3), Err(Error::InconsistentGrouping(..))));
        assert!(check_straddle(&[class(0.1), class(0.2)], 1e-3).is_ok());

        let s1: Structure = CondIndepStructure::homogeneous(0.5, 0.2, 0.6).unwrap().into();
        let s2: Structure = CondIndepStructure::homogeneous(0.5, 0.25, 0.6).unwrap().into();
        let d = StructureDistribution::uniform(vec![s1, s2]).unwrap();
        let classes = observation_classes(&d, InfoLevel::SecondOrder, one(), GROUPING_TOL).unwrap();
        let members: usize = classes.iter().map(|c| c.members.len()).sum();
        assert_eq!(members, 8);
        assert_eq!(observation_classes(&d, InfoLevel::FirstOrder, one(), GROUPING_TOL).unwrap().len(), 4);
    }

    #[test]
    fn construction_names_roundtrip() {
        for c in Construction::ALL {
            assert_eq!(c.name().parse::<Construction>().unwrap(), c);
            let j = serde_json::to_string(&c).unwrap();
            assert_eq!(j, format!("\"{}\"", c.name()));
        }
    }
}
