//! Exact jump-chain simulation of the two-regime mixture and the
//! empirical estimators checked against the analytic formulas.
//!
//! Every path draws from its own ChaCha8 stream selected by the path
//! index, so output does not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::competing::CauseLabel;
use crate::curve::CurveGrid;
use crate::error::{Error, Result};
use crate::mixture::{MixtureModel, PathRecord, Regime};

/// Minimum number of paths occupying a state before an empirical
/// posterior is reported.
pub const MIN_POSTERIOR_SAMPLE: usize = 500;

const PI_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub paths: usize,
    /// Paths still transient at this age are censored.
    pub horizon: f64,
    pub seed: u64,
    /// Attach the latent regime to exported path records.
    pub record_regime: bool,
}

impl SimulationConfig {
    pub fn new(paths: usize, horizon: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            paths,
            horizon,
            seed,
            record_regime: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn without_regime(mut self) -> Self {
        self.record_regime = false;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Parameter("at least one path is required".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Parameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

/// Absorption outcome of one path, without the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub regime: Regime,
    pub start: usize,
    pub absorbed: Option<(CauseLabel, f64)>,
    /// Age at which a surviving path was censored; the absorption time
    /// otherwise.
    pub observed_until: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub regime: Regime,
    pub record: PathRecord,
    pub absorbed: Option<(CauseLabel, f64)>,
}

impl SimulatedPath {
    pub fn outcome(&self) -> Outcome {
        Outcome {
            regime: self.regime,
            start: self.record.start(),
            absorbed: self.absorbed,
            observed_until: self.record.elapsed(),
        }
    }
}

/// Anything with an absorption outcome.
pub trait Observed: Sync {
    fn outcome(&self) -> Outcome;
}

impl Observed for Outcome {
    fn outcome(&self) -> Outcome {
        *self
    }
}

impl Observed for SimulatedPath {
    fn outcome(&self) -> Outcome {
        SimulatedPath::outcome(self)
    }
}

/// Walks one path, reporting each completed or censored sojourn.
fn walk<R: Rng>(
    model: &MixtureModel,
    horizon: f64,
    start: usize,
    rng: &mut R,
    mut visit: impl FnMut(usize, f64),
) -> Outcome {
    let m = model.m();
    let p = model.p();
    let regime = if rng.random::<f64>() < model.s0()[start] {
        Regime::G
    } else {
        Regime::Q
    };
    let mut state = start;
    let mut clock = 0.0;
    loop {
        let total = model.total_rate(regime, state);
        let stay = if total > 0.0 {
            rng.sample::<f64, _>(Exp1) / total
        } else {
            f64::INFINITY
        };
        if clock + stay >= horizon {
            visit(state, horizon - clock);
            return Outcome {
                regime,
                start,
                absorbed: None,
                observed_until: horizon,
            };
        }
        visit(state, stay);
        clock += stay;
        let target = total * rng.random::<f64>();
        let mut acc = 0.0;
        let mut next = None;
        let mut last = state;
        for to in (0..m + p).filter(|&to| to != state) {
            let r = model.rate(regime, state, to);
            if r <= 0.0 {
                continue;
            }
            last = to;
            acc += r;
            if target < acc {
                next = Some(to);
                break;
            }
        }
        // rounding can leave `target` just past the last cumulative rate
        let next = next.unwrap_or(last);
        if next >= m {
            let cause = CauseLabel::new(next - m + 1, p).expect("absorbing index in range");
            return Outcome {
                regime,
                start,
                absorbed: Some((cause, clock)),
                observed_until: clock,
            };
        }
        state = next;
    }
}

fn draw_start<R: Rng>(model: &MixtureModel, rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    let mut chosen = None;
    for (k, &w) in model.pi().iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        chosen = Some(k);
        if u < acc {
            return k;
        }
    }
    chosen.expect("initial law has positive mass")
}

fn check_pi(model: &MixtureModel) -> Result<()> {
    let total = model.pi().sum();
    if (total - 1.0).abs() > PI_SUM_TOL {
        return Err(Error::InitialLaw(format!(
            "simulation needs a proper initial law, pi sums to {total}"
        )));
    }
    Ok(())
}

fn trace<R: Rng>(model: &MixtureModel, cfg: &SimulationConfig, start: usize, rng: &mut R) -> SimulatedPath {
    let mut sojourns = Vec::new();
    let out = walk(model, cfg.horizon, start, rng, |s, d| sojourns.push((s, d)));
    let record = PathRecord {
        sojourns,
        terminal: out.absorbed.map(|(c, _)| model.m() + c.index()),
        regime: cfg.record_regime.then_some(out.regime),
    };
    SimulatedPath {
        regime: out.regime,
        record,
        absorbed: out.absorbed,
    }
}

/// Path number `index` of the stream seeded by `cfg.seed`, started in `start`.
pub fn sample_path<M: AsRef<MixtureModel>>(
    model: &M,
    cfg: &SimulationConfig,
    start: usize,
    index: usize,
) -> Result<SimulatedPath> {
    let model = model.as_ref();
    cfg.validate()?;
    model.check_transient(start)?;
    Ok(trace(model, cfg, start, &mut cfg.rng(index)))
}

/// `cfg.paths` paths with starting states drawn from `pi`.
pub fn simulate<M: AsRef<MixtureModel>>(model: &M, cfg: &SimulationConfig) -> Result<Vec<SimulatedPath>> {
    let model = model.as_ref();
    cfg.validate()?;
    check_pi(model)?;
    Ok((0..cfg.paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = cfg.rng(k);
            let start = draw_start(model, &mut rng);
            trace(model, cfg, start, &mut rng)
        })
        .collect())
}

/// `cfg.paths` paths all started in `start`.
pub fn simulate_from<M: AsRef<MixtureModel>>(
    model: &M,
    cfg: &SimulationConfig,
    start: usize,
) -> Result<Vec<SimulatedPath>> {
    let model = model.as_ref();
    cfg.validate()?;
    model.check_transient(start)?;
    Ok((0..cfg.paths)
        .into_par_iter()
        .map(|k| trace(model, cfg, start, &mut cfg.rng(k)))
        .collect())
}

/// Outcomes only, for large ensembles. Uses the same streams as
/// [`simulate`] and [`simulate_from`], so outcomes agree path by path.
pub fn simulate_outcomes<M: AsRef<MixtureModel>>(
    model: &M,
    cfg: &SimulationConfig,
    start: Option<usize>,
) -> Result<Vec<Outcome>> {
    let model = model.as_ref();
    cfg.validate()?;
    match start {
        Some(s) => model.check_transient(s)?,
        None => check_pi(model)?,
    }
    Ok((0..cfg.paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = cfg.rng(k);
            let s = start.unwrap_or_else(|| draw_start(model, &mut rng));
            walk(model, cfg.horizon, s, &mut rng, |_, _| {})
        })
        .collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Empty("evaluation grid"));
    }
    Ok(())
}

/// Binomial proportion among paths whose status at `t` is known.
fn proportion<P: Observed>(paths: &[P], t: f64, hit: impl Fn(&Outcome) -> bool + Sync) -> Result<(f64, f64, usize)> {
    let (n, k) = paths
        .par_iter()
        .map(|p| {
            let o = p.outcome();
            let known = o.absorbed.is_some() || o.observed_until >= t;
            (known as usize, (known && hit(&o)) as usize)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if n == 0 {
        return Err(Error::Empty("no path is observed at the requested age"));
    }
    let p = k as f64 / n as f64;
    Ok((p, (p * (1.0 - p) / n as f64).sqrt(), n))
}

fn empirical_curve<P: Observed>(
    paths: &[P],
    grid: &[f64],
    name: &str,
    hit: impl Fn(&Outcome, f64) -> bool + Sync,
) -> Result<CurveGrid> {
    if paths.is_empty() {
        return Err(Error::Empty("path collection"));
    }
    check_grid(grid)?;
    let mut curve = CurveGrid::new(["t", name, "se", "n"])?.with_meta("paths", paths.len().to_string());
    for &t in grid {
        let (p, se, n) = proportion(paths, t, |o| hit(o, t))?;
        curve.push(vec![t, p, se, n as f64])?;
    }
    Ok(curve)
}

/// Fraction not yet absorbed at each grid age, with binomial standard
/// errors. Paths censored before an age are dropped there.
pub fn empirical_survival<P: Observed>(paths: &[P], grid: &[f64]) -> Result<CurveGrid> {
    empirical_curve(paths, grid, "survival", |o, t| match o.absorbed {
        Some((_, at)) => at > t,
        None => true,
    })
}

/// Fraction absorbed by cause `j` no later than each grid age.
pub fn empirical_cause_cdf<P: Observed>(paths: &[P], j: CauseLabel, grid: &[f64]) -> Result<CurveGrid> {
    empirical_curve(paths, grid, "cdf", |o, t| {
        matches!(o.absorbed, Some((c, at)) if c == j && at <= t)
    })
}

/// Fraction of paths absorbed by cause `j` at any time, with its standard
/// error.
pub fn empirical_cause_frequency<P: Observed>(paths: &[P], j: CauseLabel) -> Result<(f64, f64)> {
    if paths.is_empty() {
        return Err(Error::Empty("path collection"));
    }
    let n = paths.len() as f64;
    let k = paths
        .iter()
        .filter(|p| matches!(p.outcome().absorbed, Some((c, _)) if c == j))
        .count() as f64;
    let p = k / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

/// Fraction of regime-`G` paths among those in state `i` at age `t`, with
/// its binomial standard error.
pub fn empirical_posterior(paths: &[SimulatedPath], i: usize, t: f64) -> Result<(f64, f64)> {
    let (n, g) = paths
        .par_iter()
        .filter(|p| p.record.state_at(t) == Some(i))
        .map(|p| (1usize, (p.regime == Regime::G) as usize))
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if n < MIN_POSTERIOR_SAMPLE {
        return Err(Error::InsufficientSample {
            found: n,
            needed: MIN_POSTERIOR_SAMPLE,
        });
    }
    let p = g as f64 / n as f64;
    Ok((p, (p * (1.0 - p) / n as f64).sqrt()))
}

/// Sample mean of the absorption time and its standard error. Every path
/// must be absorbed; censoring would bias the mean downward.
pub fn empirical_mean_absorption<P: Observed>(paths: &[P]) -> Result<(f64, f64)> {
    if paths.len() < 2 {
        return Err(Error::InsufficientSample {
            found: paths.len(),
            needed: 2,
        });
    }
    let mut times = Vec::with_capacity(paths.len());
    for p in paths {
        match p.outcome().absorbed {
            Some((_, at)) => times.push(at),
            None => {
                return Err(Error::Parameter(
                    "censored paths present; raise the horizon".into(),
                ))
            }
        }
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// One path per line in the path-record format.
pub fn to_path_file(paths: &[SimulatedPath]) -> String {
    let mut out = String::new();
    for p in paths {
        out.push_str(&p.record.to_string());
        out.push('\n');
    }
    out
}

/// Parses a path file; blank lines and `#` comments are skipped.
pub fn parse_path_file(text: &str) -> Result<Vec<PathRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec = line
            .parse::<PathRecord>()
            .map_err(|e| Error::Path(format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
