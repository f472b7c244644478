//! Derivative-free maximization on the unit cube: grid enumeration, a
//! bounded top-k collector and Nelder-Mead with clamping.

use std::cmp::Ordering;

/// Candidate from a grid pass; ties prefer the smaller `(group, index)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub value: f64,
    pub group: usize,
    pub index: usize,
}

impl Candidate {
    /// Ordering where the better candidate compares as `Less`.
    pub fn rank(&self, other: &Candidate) -> Ordering {
        other
            .value
            .partial_cmp(&self.value)
            .unwrap_or(Ordering::Equal)
            .then(self.group.cmp(&other.group))
            .then(self.index.cmp(&other.index))
    }
}

/// Keeps the `k` best candidates seen.
#[derive(Clone, Debug)]
pub struct TopK {
    k: usize,
    items: Vec<Candidate>,
    worst: usize,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK { k: k.max(1), items: Vec::with_capacity(k.max(1)), worst: 0 }
    }

    #[inline]
    pub fn push(&mut self, c: Candidate) {
        if !c.value.is_finite() {
            return;
        }
        if self.items.len() < self.k {
            self.items.push(c);
            self.refresh_worst();
        } else if c.rank(&self.items[self.worst]) == Ordering::Less {
            self.items[self.worst] = c;
            self.refresh_worst();
        }
    }

    #[inline]
    pub fn threshold(&self) -> f64 {
        if self.items.len() < self.k {
            f64::NEG_INFINITY
        } else {
            self.items[self.worst].value
        }
    }

    fn refresh_worst(&mut self) {
        let mut w = 0;
        for i in 1..self.items.len() {
            if self.items[i].rank(&self.items[w]) == Ordering::Greater {
                w = i;
            }
        }
        self.worst = w;
    }

    pub fn merge(mut self, other: TopK) -> TopK {
        for c in other.items {
            self.push(c);
        }
        self
    }

    pub fn into_sorted(mut self) -> Vec<Candidate> {
        self.items.sort_by(|a, b| a.rank(b));
        self.items
    }
}

/// Point `index` of the regular grid with `levels` values per axis, first
/// coordinate most significant.
pub fn grid_point(index: usize, dim: usize, levels: usize, out: &mut [f64]) {
    let mut rem = index;
    let last = (levels - 1).max(1) as f64;
    for d in (0..dim).rev() {
        out[d] = (rem % levels) as f64 / last;
        rem /= levels;
    }
}

pub fn grid_size(dim: usize, levels: usize) -> usize {
    levels.pow(dim as u32)
}

/// Number of levels for a grid step on [0,1].
pub fn levels_for_step(step: f64) -> usize {
    ((1.0 / step).round() as usize).max(1) + 1
}

#[derive(Clone, Debug)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Maximizes `f` over `[0,1]^d` starting from `x0`; points are clamped to
/// the cube. Stops when the simplex diameter falls below `tol` or after
/// `budget` evaluations.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    budget: usize,
    tol: f64,
) -> NmResult {
    let d = x0.len();
    let clamp = |v: &mut Vec<f64>| v.iter_mut().for_each(|c| *c = c.clamp(0.0, 1.0));
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let mut start = x0.to_vec();
    clamp(&mut start);
    let v0 = eval(&start, &mut evals);
    simplex.push((start.clone(), v0));
    for i in 0..d {
        let mut p = start.clone();
        p[i] = if p[i] + step <= 1.0 { p[i] + step } else { p[i] - step };
        clamp(&mut p);
        let v = eval(&p, &mut evals);
        simplex.push((p, v));
    }

    let by_value = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| {
        b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| lex(&a.0, &b.0))
    };

    while evals < budget {
        simplex.sort_by(by_value);
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < tol {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (p, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let along = |coef: f64| {
            let mut p: Vec<f64> =
                centroid.iter().zip(&worst.0).map(|(c, w)| c + coef * (c - w)).collect();
            clamp(&mut p);
            p
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr > simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[d] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr > worst.1 {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc > worst.1.max(fr) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let mut p: Vec<f64> = best.iter().zip(&item.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    clamp(&mut p);
                    let v = eval(&p, &mut evals);
                    *item = (p, v);
                }
            }
        }
    }
    simplex.sort_by(by_value);
    let (x, value) = simplex.swap_remove(0);
    NmResult { x, value, evals }
}

/// Lexicographic order on coordinate vectors.
pub fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// All compositions of `n` into `parts` nonnegative integers, in
/// lexicographic order.
pub fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=n {
            prefix.push(first);
            rec(n - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}
