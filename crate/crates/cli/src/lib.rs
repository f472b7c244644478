//! Command implementations behind the `robagg` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use robagg_core::bounds::{finite_minimax, yao_bound, AggregatorClass, Construction, InfoLevel, StructureDistribution};
use robagg_core::learner::{certify, learn, LearnerConfig};
use robagg_core::model::{Family, FamilyKind, ReportProfile, Structure, UtilityRatio};
use robagg_core::regret::{loss, worst_case, SearchConfig};
use robagg_core::verify::{self, Report};
use robagg_core::{Aggregator, Error, GridParams};

#[derive(Parser, Debug)]
#[command(name = "robagg", version, about = "Robust aggregation of two expert recommendations")]
pub struct Cli {
    /// Seed for every randomized search start.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Cap on worker threads.
    #[arg(long, global = true, env = "ROBAGG_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact expected loss of an aggregator on one structure.
    Eval {
        #[arg(long)]
        agg: String,
        #[arg(long)]
        structure: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Worst-case regret over a structure family.
    WorstCase {
        #[arg(long)]
        agg: String,
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lower bound of a finite structure distribution.
    Yao {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, default_value = "second")]
        level: InfoLevel,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Atoms of a catalog construction.
    Construct {
        #[arg(long)]
        name: Construction,
        #[arg(long, default_value_t = robagg_core::bounds::DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact minimax value against a finite set of structures.
    Minimax {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, default_value = "random")]
        class: AggregatorClass,
        #[arg(long, default_value = "second")]
        level: InfoLevel,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Learns a grid aggregator by game dynamics.
    Learn {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        polish: Option<usize>,
        #[arg(long)]
        grid_step: Option<f64>,
        /// LearnerConfig JSON; flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Per-cell regret bound of a grid aggregator.
    Certify {
        #[arg(long)]
        agg: String,
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// CSV of the aggregator's output over the prediction square.
    Contour {
        #[arg(long)]
        agg: String,
        #[arg(long, default_value_t = 1)]
        a1: u8,
        #[arg(long, default_value_t = 0)]
        a2: u8,
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Upper and lower bounds behind the overview table.
    VerifyTable1 {
        /// Learned DACI grid at t = 1; learned on the fly when absent.
        #[arg(long)]
        learned: Option<String>,
        #[arg(long, default_value_t = robagg_core::bounds::DEFAULT_EPS)]
        eps: f64,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Closed-form and learned columns of the general-ratio comparison.
    VerifyTable2 {
        /// `T=FILE` pairs of learned DACI grids; missing ratios are learned.
        #[arg(long = "learned")]
        grids: Vec<String>,
        /// Skip learning and report only the closed-form rows.
        #[arg(long)]
        closed_only: bool,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Every catalog construction against its stated formula.
    VerifyBounds {
        #[arg(long, default_value_t = robagg_core::bounds::DEFAULT_EPS)]
        eps: f64,
    },
}

#[derive(Args, Debug, Clone)]
pub struct FamilyArgs {
    #[arg(long, default_value = "DACI")]
    pub family: FamilyKind,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
}

impl FamilyArgs {
    fn family(&self) -> Result<Family, Error> {
        Ok(Family::new(self.family, UtilityRatio::new(self.t)?))
    }
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    /// Grid step of homogeneous search cases.
    #[arg(long = "grid", default_value_t = 0.01)]
    pub grid_step: f64,
    /// Grid step of heterogeneous search cases.
    #[arg(long, default_value_t = 0.05)]
    pub grid_step_5: f64,
}

impl SearchArgs {
    fn config(&self, seed: u64) -> SearchConfig {
        SearchConfig { grid_step_3: self.grid_step, grid_step_5: self.grid_step_5, seed, ..SearchConfig::default() }
    }
}

/// Result of one command: JSON or CSV for stdout, plus whether every check
/// passed.
#[derive(Debug)]
pub struct Output {
    pub stdout: String,
    pub ok: bool,
    /// Human-readable lines for stderr.
    pub notes: Vec<String>,
}

impl Output {
    fn json<T: Serialize>(v: &T) -> Result<Output, Error> {
        Ok(Output { stdout: to_json(v)?, ok: true, notes: Vec::new() })
    }

    fn report(r: &Report) -> Result<Output, Error> {
        let mut notes = r.lines();
        notes.push(format!("{}: {} checks, {} failed", r.title, r.checks.len(), r.failures()));
        Ok(Output {
            stdout: to_json(&json!({ "title": r.title, "pass": r.passed(), "checks": r.checks }))?,
            ok: r.passed(),
            notes,
        })
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(v).map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn read_json(path: &Path) -> Result<Value, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn from_value<T: serde::de::DeserializeOwned>(v: Value, what: &str) -> Result<T, Error> {
    serde_json::from_value(v).map_err(|e| Error::InvalidConfig(format!("{what}: {e}")))
}

/// Aggregator from a built-in name (`uniform`, `prob_p:0.3`, ...) or a JSON
/// file holding an aggregator or a learn result.
pub fn load_aggregator(arg: &str) -> Result<Aggregator, Error> {
    let builtin = match arg {
        "follow_first" => Some(Aggregator::FollowFirst),
        "uniform" => Some(Aggregator::Uniform),
        "threshold" => Some(Aggregator::Threshold),
        "bipolar_radial" => Some(Aggregator::BipolarRadial),
        _ => None,
    };
    if let Some(a) = builtin {
        return Ok(a);
    }
    if let Some(p) = arg.strip_prefix("prob_p:") {
        let p: f64 = p.parse().map_err(|_| Error::InvalidAggregator(arg.to_string()))?;
        return Aggregator::prob_p(p);
    }
    let mut v = read_json(Path::new(arg))?;
    if let Some(inner) = v.get_mut("aggregator") {
        v = inner.take();
        if v.get("kind").is_none() {
            return Ok(Aggregator::Grid(from_value::<GridParams>(v, arg)?));
        }
    }
    let agg: Aggregator = from_value(v, arg)?;
    agg.validate()?;
    Ok(agg)
}

/// Structure from a JSON file holding a structure or a certificate with a
/// `witness`.
pub fn load_structure(path: &Path) -> Result<Structure, Error> {
    let mut v = read_json(path)?;
    if let Some(w) = v.get_mut("witness") {
        v = w.take();
    }
    let s: Structure = from_value(v, &path.display().to_string())?;
    s.validate()?;
    Ok(s)
}

pub fn load_distribution(path: &Path) -> Result<StructureDistribution, Error> {
    let mut v = read_json(path)?;
    if let Some(d) = v.get_mut("distribution") {
        v = d.take();
    }
    let d: StructureDistribution = from_value(v, &path.display().to_string())?;
    d.validate()?;
    Ok(d)
}

fn load_grid(arg: &str) -> Result<GridParams, Error> {
    match load_aggregator(arg)? {
        Aggregator::Grid(g) => Ok(g),
        other => Err(Error::InvalidAggregator(format!("{} is not a grid aggregator", other.name()))),
    }
}

/// CSV rows `p1,p2,q` with `p1` major, both ascending.
pub fn contour_csv(agg: &Aggregator, a1: u8, a2: u8, resolution: f64) -> Result<String, Error> {
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(Error::InvalidConfig(format!("resolution {resolution} outside (0, 0.5]")));
    }
    if a1 > 1 || a2 > 1 {
        return Err(Error::InvalidConfig("actions must be 0 or 1".into()));
    }
    let n = (1.0 / resolution + 1e-9).floor() as usize;
    let mut s = String::from("p1,p2,q\n");
    for i in 0..=n {
        for j in 0..=n {
            let (p1, p2) = ((i as f64 * resolution).min(1.0), (j as f64 * resolution).min(1.0));
            let q = agg.apply(&ReportProfile::new(a1, a2, p1, p2));
            s.push_str(&format!("{p1},{p2},{q}\n"));
        }
    }
    Ok(s)
}

fn learner_config(seed: u64, config: &Option<PathBuf>, iters: Option<usize>, polish: Option<usize>, step: Option<f64>) -> Result<LearnerConfig, Error> {
    let mut cfg: LearnerConfig = match config {
        Some(p) => from_value(read_json(p)?, &p.display().to_string())?,
        None => LearnerConfig::default(),
    };
    cfg.seed = seed;
    cfg.adversary.seed = seed;
    cfg.evaluation.seed = seed;
    if let Some(i) = iters {
        cfg.iterations = i;
    }
    if let Some(p) = polish {
        cfg.polish_rounds = p;
    }
    if let Some(s) = step {
        cfg.grid_step = s;
    }
    cfg.steps()?;
    Ok(cfg)
}

fn parse_grid_pair(arg: &str) -> Result<(f64, GridParams), Error> {
    let (t, file) = arg.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("expected T=FILE, got {arg}")))?;
    let t: f64 = t.parse().map_err(|_| Error::InvalidConfig(format!("bad ratio in {arg}")))?;
    Ok((t, load_grid(file)?))
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<Output, Error> {
    let seed = cli.seed;
    match &cli.command {
        Command::Eval { agg, structure, t } => {
            let agg = load_aggregator(agg)?;
            let s = load_structure(structure)?;
            let value = loss(&agg, &s, UtilityRatio::new(*t)?)?;
            Output::json(&json!({ "aggregator": agg.name(), "t": t, "value": value }))
        }
        Command::WorstCase { agg, family, search, out } => {
            let agg = load_aggregator(agg)?;
            let cert = worst_case(&agg, &family.family()?, &search.config(seed))?;
            let text = to_json(&cert)?;
            if let Some(p) = out {
                write_file(p, &text)?;
            }
            Ok(Output { stdout: text, ok: true, notes: Vec::new() })
        }
        Command::Yao { dist, level, t } => {
            let d = load_distribution(dist)?;
            Output::json(&yao_bound(&d, *level, UtilityRatio::new(*t)?)?)
        }
        Command::Construct { name, eps, t, out } => {
            let t = UtilityRatio::new(*t)?;
            let d = name.build(*eps, t)?;
            let text = to_json(&d)?;
            if let Some(p) = out {
                write_file(p, &text)?;
            }
            let v = json!({
                "name": name.name(),
                "eps": eps,
                "t": t.value(),
                "target": name.target(*eps, t.value()),
                "value": name.evaluate(*eps, t)?,
                "distribution": d,
            });
            Output::json(&v)
        }
        Command::Minimax { dist, class, level, t } => {
            let d = load_distribution(dist)?;
            Output::json(&finite_minimax(&d.structures(), *class, *level, UtilityRatio::new(*t)?)?)
        }
        Command::Learn { family, iters, polish, grid_step, config, out, trace } => {
            let cfg = learner_config(seed, config, *iters, *polish, *grid_step)?;
            let r = learn(&family.family()?, &cfg)?;
            let agg = Aggregator::Grid(r.aggregator.clone());
            if let Some(p) = out {
                write_file(p, &to_json(&agg)?)?;
            }
            if let Some(p) = trace {
                write_file(p, &r.trace.to_csv())?;
            }
            let v = json!({
                "family": family.family,
                "t": family.t,
                "regret": r.regret,
                "lower_bound": r.lower_bound,
                "duality_gap": r.duality_gap,
                "converged": r.converged,
                "polish_rounds": r.polish_rounds,
                "iterations": r.trace.rows.len(),
                "witness": r.witness,
                "aggregator": agg,
            });
            let mut o = Output::json(&v)?;
            if !r.converged {
                o.notes.push(format!("not converged: duality gap {} above tolerance", r.duality_gap));
            }
            Ok(o)
        }
        Command::Certify { agg, family, search } => {
            let g = load_grid(agg)?;
            let r = certify(&g, &family.family()?, &search.config(seed))?;
            Output::json(&r)
        }
        Command::Contour { agg, a1, a2, resolution, out } => {
            let csv = contour_csv(&load_aggregator(agg)?, *a1, *a2, *resolution)?;
            if let Some(p) = out {
                write_file(p, &csv)?;
            }
            Ok(Output { stdout: csv, ok: true, notes: Vec::new() })
        }
        Command::VerifyTable1 { learned, eps, search, iters } => {
            let cfg = search.config(seed);
            let g = match learned {
                Some(path) => load_grid(path)?,
                None => {
                    let lc = learner_config(seed, &None, *iters, None, None)?;
                    learn(&Family::new(FamilyKind::Daci, UtilityRatio::ONE), &lc)?.aggregator
                }
            };
            let mut r = verify::table1(&cfg, *eps, &g)?;
            r.extend(verify::upper_bounds(&cfg)?);
            r.extend(verify::bipolar(&cfg)?);
            r.extend(verify::prob_p_closed_forms(&cfg)?);
            Output::report(&r)
        }
        Command::VerifyTable2 { grids, closed_only, search, iters } => {
            let cfg = search.config(seed);
            let mut pairs: Vec<(f64, GridParams)> = grids.iter().map(|a| parse_grid_pair(a)).collect::<Result<_, _>>()?;
            if *closed_only {
                pairs.clear();
            } else {
                let lc = learner_config(seed, &None, *iters, None, None)?;
                for &t in verify::TABLE2_T.iter().filter(|&&t| t >= 1.0) {
                    if !pairs.iter().any(|(s, _)| (s - t).abs() < 1e-9) {
                        let fam = Family::new(FamilyKind::Daci, UtilityRatio::new(t)?);
                        pairs.push((t, learn(&fam, &lc)?.aggregator));
                    }
                }
                pairs = verify::with_mirrors(pairs);
            }
            Output::report(&verify::table2(&cfg, &pairs)?)
        }
        Command::VerifyBounds { eps } => Output::report(&verify::bounds_report(*eps)?),
    }
}

/// Caps rayon's global pool.
pub fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads.filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_contour_is_flat() {
        let csv = contour_csv(&Aggregator::Uniform, 1, 0, 0.5).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], "p1,p2,q");
        assert_eq!(rows.len(), 10);
        assert!(rows[1..].iter().all(|r| r.ends_with(",0.5")));
    }

    #[test]
    fn threshold_contour_splits_on_the_antidiagonal() {
        let csv = contour_csv(&Aggregator::Threshold, 1, 0, 0.25).unwrap();
        for row in csv.lines().skip(1) {
            let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
            let expected = if v[0] + v[1] <= 1.0 { 1.0 } else { 0.0 };
            assert_eq!(v[2], expected, "{row}");
        }
    }

    #[test]
    fn bipolar_contour_is_half_on_the_band() {
        let csv = contour_csv(&Aggregator::BipolarRadial, 1, 0, 0.1).unwrap();
        for row in csv.lines().skip(1) {
            let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
            if (v[0] + v[1] - 1.0).abs() <= 0.02 {
                assert_eq!(v[2], 0.5, "{row}");
            }
        }
    }

    #[test]
    fn contour_rows_are_p1_major() {
        let csv = contour_csv(&Aggregator::Uniform, 1, 0, 0.5).unwrap();
        let keys: Vec<(String, String)> = csv
            .lines()
            .skip(1)
            .map(|r| {
                let mut it = r.split(',');
                (it.next().unwrap().to_string(), it.next().unwrap().to_string())
            })
            .collect();
        assert_eq!(keys[0], ("0".into(), "0".into()));
        assert_eq!(keys[1], ("0".into(), "0.5".into()));
        assert_eq!(keys[3], ("0.5".into(), "0".into()));
    }

    #[test]
    fn contour_rejects_coarse_resolution() {
        assert!(contour_csv(&Aggregator::Uniform, 1, 0, 0.6).is_err());
        assert!(contour_csv(&Aggregator::Uniform, 1, 0, 0.0).is_err());
    }

    #[test]
    fn builtin_names_parse() {
        assert_eq!(load_aggregator("uniform").unwrap(), Aggregator::Uniform);
        assert_eq!(load_aggregator("prob_p:0.25").unwrap(), Aggregator::ProbP { p: 0.25 });
        assert!(load_aggregator("prob_p:2").is_err());
    }

    #[test]
    fn cli_parses_documented_forms() {
        let c = Cli::try_parse_from(["robagg", "worst-case", "--agg", "uniform", "--family", "DACI", "--t", "1.0", "--grid", "0.01"]).unwrap();
        assert!(matches!(c.command, Command::WorstCase { .. }));
        let c = Cli::try_parse_from(["robagg", "construct", "--name", "DACI_SECOND", "--eps", "1e-4"]).unwrap();
        assert!(matches!(c.command, Command::Construct { name: Construction::DaciSecond, .. }));
        let c = Cli::try_parse_from(["robagg", "--seed", "3", "yao", "--dist", "d.json", "--level", "second"]).unwrap();
        assert_eq!(c.seed, 3);
    }
}
