//! Aggregator catalog: maps from a report profile to P(action 1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ReportProfile, TIE_TOL};

/// Closed band of prediction sums mapped to 0.5 by the bipolar radial rule.
pub const BIPOLAR_BAND: (f64, f64) = (0.98, 1.02);
pub const BIPOLAR_CENTER: (f64, f64) = (0.6, 0.4);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aggregator {
    FollowFirst,
    Uniform,
    ProbP { p: f64 },
    Threshold,
    BipolarRadial,
    Grid(GridParams),
    Mirrored { inner: Box<Aggregator> },
    Swapped { inner: Box<Aggregator> },
    Mixture { components: Vec<Component> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub agg: Aggregator,
}

impl Aggregator {
    pub fn prob_p(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidAggregator(format!("p={p} outside [0,1]")));
        }
        Ok(Aggregator::ProbP { p })
    }

    pub fn mixture(components: Vec<(f64, Aggregator)>) -> Result<Self> {
        let agg = Aggregator::Mixture {
            components: components.into_iter().map(|(weight, agg)| Component { weight, agg }).collect(),
        };
        agg.validate()?;
        Ok(agg)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Aggregator::ProbP { p } if !(0.0..=1.0).contains(p) => {
                Err(Error::InvalidAggregator(format!("p={p} outside [0,1]")))
            }
            Aggregator::Grid(g) => g.validate(),
            Aggregator::Mirrored { inner } | Aggregator::Swapped { inner } => inner.validate(),
            Aggregator::Mixture { components } => {
                if components.iter().any(|c| !(c.weight >= 0.0)) {
                    return Err(Error::InvalidAggregator("negative mixture weight".into()));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidAggregator(format!("mixture weights sum to {total}")));
                }
                components.iter().try_for_each(|c| c.agg.validate())
            }
            _ => Ok(()),
        }
    }

    /// Probability of choosing action 1.
    pub fn apply(&self, r: &ReportProfile) -> f64 {
        match self {
            Aggregator::FollowFirst => r.a1 as f64,
            Aggregator::Mirrored { inner } => {
                1.0 - inner.apply(&ReportProfile {
                    a1: 1 - r.a2,
                    a2: 1 - r.a1,
                    p1: 1.0 - r.p2,
                    p2: 1.0 - r.p1,
                })
            }
            Aggregator::Swapped { inner } => inner.apply(&r.swapped()),
            Aggregator::Mixture { components } => {
                components.iter().map(|c| c.weight * c.agg.apply(r)).sum()
            }
            _ if r.a1 == r.a2 => r.a1 as f64,
            Aggregator::Uniform => 0.5,
            Aggregator::ProbP { p } => *p,
            Aggregator::Threshold => {
                if r.p1 + r.p2 <= 1.0 + TIE_TOL {
                    1.0
                } else {
                    0.0
                }
            }
            Aggregator::BipolarRadial => {
                if r.a1 == 1 {
                    bipolar_one_zero(r.p1, r.p2)
                } else {
                    bipolar_one_zero(r.p2, r.p1)
                }
            }
            Aggregator::Grid(g) => {
                if r.a1 == 1 {
                    g.eval(r.p1, r.p2)
                } else {
                    g.eval(r.p2, r.p1)
                }
            }
        }
    }

    pub fn mirror(&self) -> Aggregator {
        match self {
            Aggregator::Mirrored { inner } => (**inner).clone(),
            other => Aggregator::Mirrored { inner: Box::new(other.clone()) },
        }
    }

    pub fn swapped(&self) -> Aggregator {
        match self {
            Aggregator::Swapped { inner } => (**inner).clone(),
            other => Aggregator::Swapped { inner: Box::new(other.clone()) },
        }
    }

    /// Equal mixture of the aggregator and its expert swap.
    pub fn symmetrize(&self) -> Aggregator {
        Aggregator::Mixture {
            components: vec![
                Component { weight: 0.5, agg: self.clone() },
                Component { weight: 0.5, agg: self.swapped() },
            ],
        }
    }

    pub fn name(&self) -> String {
        match self {
            Aggregator::FollowFirst => "follow_first".into(),
            Aggregator::Uniform => "uniform".into(),
            Aggregator::ProbP { p } => format!("prob_p({p})"),
            Aggregator::Threshold => "threshold".into(),
            Aggregator::BipolarRadial => "bipolar_radial".into(),
            Aggregator::Grid(g) => format!("grid({})", g.resolution()),
            Aggregator::Mirrored { inner } => format!("mirror({})", inner.name()),
            Aggregator::Swapped { inner } => format!("swap({})", inner.name()),
            Aggregator::Mixture { components } => {
                let parts: Vec<String> =
                    components.iter().map(|c| format!("{}*{}", c.weight, c.agg.name())).collect();
                format!("mixture[{}]", parts.join(", "))
            }
        }
    }
}

fn bipolar_one_zero(p1: f64, p2: f64) -> f64 {
    let sum = p1 + p2;
    let r2 = (p1 - BIPOLAR_CENTER.0).powi(2) + (p2 - BIPOLAR_CENTER.1).powi(2);
    if sum < BIPOLAR_BAND.0 - TIE_TOL {
        (r2 + 0.5).min(1.0)
    } else if sum > BIPOLAR_BAND.1 + TIE_TOL {
        (0.5 - r2).max(0.0)
    } else {
        0.5
    }
}

/// Interpolation weights of at most four grid nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeWeights {
    pub nodes: [usize; 4],
    pub weights: [f64; 4],
    pub len: usize,
}

impl NodeWeights {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |i| (self.nodes[i], self.weights[i]))
    }
}

/// Node values of `f(1,0,p1,p2)` on the lower triangle `p1 >= p2` of a
/// regular grid. Square cells interpolate bilinearly; cells on the diagonal
/// interpolate linearly on their lower triangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridParams {
    steps: usize,
    values: Vec<f64>,
    /// Node values pair up as `v(p1,p2) + v(1-p2,1-p1) = 1`.
    complement_symmetric: bool,
}

impl GridParams {
    /// Grid with every disagreement node at 0.5.
    pub fn uniform(steps: usize) -> Self {
        GridParams { steps, values: vec![0.5; node_count(steps)], complement_symmetric: false }
    }

    pub fn from_fn(steps: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut g = Self::uniform(steps);
        for idx in 0..g.values.len() {
            let (p1, p2) = g.coords(idx);
            g.values[idx] = f(p1, p2).clamp(0.0, 1.0);
        }
        g
    }

    pub fn from_values(steps: usize, values: Vec<f64>) -> Result<Self> {
        let g = GridParams { steps, values, complement_symmetric: false };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidAggregator("grid needs at least one step".into()));
        }
        if self.values.len() != node_count(self.steps) {
            return Err(Error::InvalidAggregator("grid node count mismatch".into()));
        }
        if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidAggregator("grid value outside [0,1]".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn resolution(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn complement_symmetric(&self) -> bool {
        self.complement_symmetric
    }

    pub fn set_complement_symmetric(&mut self, on: bool) {
        self.complement_symmetric = on;
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    /// Node index of grid point `(i, j)` with `i >= j`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i <= self.steps);
        i * (i + 1) / 2 + j
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        let mut i = ((((8 * idx + 1) as f64).sqrt() - 1.0) / 2.0) as usize;
        while i * (i + 1) / 2 > idx {
            i -= 1;
        }
        while (i + 1) * (i + 2) / 2 <= idx {
            i += 1;
        }
        (i, idx - i * (i + 1) / 2)
    }

    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.ij(idx);
        let h = self.steps as f64;
        (i as f64 / h, j as f64 / h)
    }

    /// Node paired with `idx` by `(p1, p2) -> (1-p2, 1-p1)`.
    pub fn complement_partner(&self, idx: usize) -> usize {
        let (i, j) = self.ij(idx);
        self.index(self.steps - j, self.steps - i)
    }

    /// Interpolation weights of `f(1,0,p1,p2)`; `None` when `p1 < p2`.
    pub fn weights(&self, p1: f64, p2: f64) -> Option<NodeWeights> {
        if p1 < p2 - TIE_TOL {
            return None;
        }
        let p2 = p2.min(p1);
        let n = self.steps;
        let h = n as f64;
        let split = |p: f64| {
            let u = (p.clamp(0.0, 1.0)) * h;
            let i = (u.floor() as usize).min(n - 1);
            (i, u - i as f64)
        };
        let (i, x) = split(p1);
        let (j, y) = split(p2);
        if i > j {
            Some(NodeWeights {
                nodes: [self.index(i, j), self.index(i + 1, j), self.index(i, j + 1), self.index(i + 1, j + 1)],
                weights: [(1.0 - x) * (1.0 - y), x * (1.0 - y), (1.0 - x) * y, x * y],
                len: 4,
            })
        } else {
            // diagonal cell, x >= y
            Some(NodeWeights {
                nodes: [self.index(i, i), self.index(i + 1, i), self.index(i + 1, i + 1), 0],
                weights: [1.0 - x, x - y, y, 0.0],
                len: 3,
            })
        }
    }

    /// `f(1,0,p1,p2)`, with the uniform fallback below the diagonal.
    pub fn eval(&self, p1: f64, p2: f64) -> f64 {
        match self.weights(p1, p2) {
            Some(w) => w.iter().map(|(k, a)| a * self.values[k]).sum(),
            None => 0.5,
        }
    }

    /// Grid of the mirror aggregator on the same nodes.
    pub fn mirrored(&self) -> GridParams {
        let mut out = self.clone();
        for idx in 0..self.values.len() {
            out.values[idx] = 1.0 - self.values[self.complement_partner(idx)];
        }
        out
    }
}

pub fn node_count(steps: usize) -> usize {
    (steps + 1) * (steps + 2) / 2
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    resolution: f64,
    values: Vec<NodeValue>,
    #[serde(default)]
    complement_symmetric: bool,
}

#[derive(Serialize, Deserialize)]
struct NodeValue {
    p1: f64,
    p2: f64,
    q: f64,
}

impl From<GridParams> for GridRepr {
    fn from(g: GridParams) -> Self {
        let values = (0..g.values.len())
            .map(|idx| {
                let (p1, p2) = g.coords(idx);
                NodeValue { p1, p2, q: g.values[idx] }
            })
            .collect();
        GridRepr { resolution: g.resolution(), values, complement_symmetric: g.complement_symmetric }
    }
}

impl TryFrom<GridRepr> for GridParams {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        if !(r.resolution > 0.0 && r.resolution <= 1.0) {
            return Err(Error::InvalidAggregator(format!("resolution {}", r.resolution)));
        }
        let steps = (1.0 / r.resolution).round() as usize;
        if (steps as f64 * r.resolution - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidAggregator("resolution must divide 1".into()));
        }
        let mut g = GridParams::uniform(steps);
        let mut seen = vec![false; g.values.len()];
        for v in r.values {
            let i = (v.p1 * steps as f64).round();
            let j = (v.p2 * steps as f64).round();
            if (i / steps as f64 - v.p1).abs() > 1e-9 || (j / steps as f64 - v.p2).abs() > 1e-9 {
                return Err(Error::InvalidAggregator(format!("({}, {}) is not a grid node", v.p1, v.p2)));
            }
            let (i, j) = (i as usize, j as usize);
            if j > i || i > steps {
                return Err(Error::InvalidAggregator(format!("node ({}, {}) outside p1 >= p2", v.p1, v.p2)));
            }
            let idx = g.index(i, j);
            if seen[idx] {
                return Err(Error::InvalidAggregator(format!("duplicate node ({}, {})", v.p1, v.p2)));
            }
            seen[idx] = true;
            g.values[idx] = v.q;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidAggregator("grid nodes missing".into()));
        }
        g.complement_symmetric = r.complement_symmetric;
        g.validate()?;
        Ok(g)
    }
}
