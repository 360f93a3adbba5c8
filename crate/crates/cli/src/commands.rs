use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use gph::competing::CompetingModel;
use gph::curve::format_float;
use gph::mixture::{self, posterior_current, posterior_endpoints, posterior_full, PathRecord};
use gph::montecarlo::{self, SimulationConfig};
use gph::numkernel;
use gph::scenario;
use gph::sojourn::{self, OccupationQuery};
use gph::{hazard, CurveGrid, GphDistribution, InformationRegime, InformationState, MixtureModel};
use log::warn;

use crate::model_file::{self, LoadedModel, ModelFile, SINGULAR_SPEED_OPERATIONS};
use crate::{Quantity, Variant};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub quantity: Quantity,
    /// Current state: 1-based index or label. Survival, density and
    /// forward-intensity may omit it to start from the initial law.
    #[arg(long)]
    pub state: Option<String>,
    /// Anchor ages, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub age: Vec<f64>,
    /// `A:B:STEP`; durations for horizon quantities, ages otherwise.
    #[arg(long)]
    pub grid: String,
    /// Cause, 1-based, for sub-dist and cause-intensity.
    #[arg(long)]
    pub cause: Option<usize>,
    /// Target state for occupation.
    #[arg(long)]
    pub target: Option<String>,
    /// `initial`, `current`, `endpoints` or `path FILE`. Defaults to
    /// `current`, or to the initial law when no state is given.
    #[arg(long, num_args = 1..=2, value_names = ["KIND", "FILE"])]
    pub info: Vec<String>,
    /// Initial state for `--info endpoints`; defaults to the current state.
    #[arg(long)]
    pub from_state: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100.0)]
    pub horizon: f64,
    /// Start every path here instead of drawing from `pi`.
    #[arg(long)]
    pub start: Option<String>,
    /// Omit the `Q;`/`G;` regime prefix.
    #[arg(long)]
    pub hide_regime: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn validate(path: &Path) -> Result<()> {
    let loaded = model_file::load(path)?;
    let model = &loaded.model;
    let mut report = String::new();
    writeln!(report, "model: {}", path.display())?;
    writeln!(report, "sha256: {}", loaded.sha256)?;
    writeln!(report, "m = {}, p = {}", model.m(), model.p())?;
    for (name, a) in [("T", model.t()), ("Psi T", model.psi_t())] {
        let eig = numkernel::eigen(a)?;
        let values: Vec<String> = eig
            .eigenvalues
            .iter()
            .map(|z| {
                if z.im == 0.0 {
                    format!("{:.6}", z.re)
                } else {
                    format!("{:.6}{:+.6}i", z.re, z.im)
                }
            })
            .collect();
        writeln!(report, "eigenvalues of {name}: {}", values.join(", "))?;
        writeln!(
            report,
            "dominant real part of {name}: {:.12} ({})",
            eig.dominant().1.re,
            if eig.distinct { "distinct spectrum" } else { "repeated eigenvalues" }
        )?;
    }
    writeln!(report, "absorption: certain (T nonsingular, spectrum in the open left half-plane)")?;
    let stayers: Vec<String> = model
        .speed()
        .diagonal()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 0.0)
        .map(|(k, _)| loaded.file.label(k))
        .collect();
    if !stayers.is_empty() {
        let msg = format!(
            "psi is zero in state(s) {}; these operations will reject the model: {}",
            stayers.join(", "),
            SINGULAR_SPEED_OPERATIONS.join(", ")
        );
        warn!("{msg}");
        writeln!(report, "warning: {msg}")?;
    }
    writeln!(report, "valid")?;
    print!("{report}");
    Ok(())
}

/// Parses `A:B:STEP` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid `{spec}` must look like A:B:STEP");
    }
    let num = |s: &str| -> Result<f64> { s.trim().parse().map_err(|_| anyhow!("grid `{spec}`: `{s}` is not a number")) };
    let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(a.is_finite() && b.is_finite() && step > 0.0 && step.is_finite() && b >= a) {
        bail!("grid `{spec}` needs finite A <= B and STEP > 0");
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| snap(a + k as f64 * step)).collect())
}

/// Drops accumulated binary noise so `0.1 * 3` prints as `0.3`.
fn snap(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

enum Info {
    Initial,
    Current,
    Endpoints(usize),
    Path(PathRecord),
}

fn resolve_info(args: &EvalArgs, file: &ModelFile, state: Option<usize>) -> Result<Info> {
    let kind = args.info.first().map(String::as_str).unwrap_or("current");
    if kind != "path" && args.info.len() > 1 {
        bail!("--info {kind} takes no file argument");
    }
    match kind {
        "initial" => Ok(Info::Initial),
        "current" => Ok(Info::Current),
        "endpoints" => {
            let from = match &args.from_state {
                Some(s) => file.resolve_state(s)?,
                None => state.ok_or_else(|| anyhow!("--info endpoints needs --state or --from-state"))?,
            };
            Ok(Info::Endpoints(from))
        }
        "path" => {
            let p = args.info.get(1).ok_or_else(|| anyhow!("--info path needs a FILE"))?;
            let text = fs::read_to_string(p).with_context(|| format!("reading {p}"))?;
            let mut paths = montecarlo::parse_path_file(&text)?;
            if paths.len() != 1 {
                bail!("{p}: expected exactly one path, found {}", paths.len());
            }
            Ok(Info::Path(paths.remove(0)))
        }
        other => bail!("unknown --info kind `{other}` (initial, current, endpoints, path FILE)"),
    }
}

fn info_at(model: &MixtureModel, info: &Info, state: usize, t: f64) -> Result<InformationState> {
    Ok(match info {
        Info::Initial => InformationState::new(state, t, model.s0().clone(), InformationRegime::Initial)?,
        Info::Current => posterior_current(model, state, t)?,
        Info::Endpoints(from) => posterior_endpoints(model, *from, state, t)?,
        Info::Path(p) => posterior_full(model, p.start(), p)?,
    })
}

/// Single-cause view: merges all causes into one exit.
fn merged(model: &MixtureModel) -> Result<GphDistribution> {
    Ok(GphDistribution::new(
        model.pi().iter().copied().collect(),
        model.t(),
        model.speed().diagonal().iter().copied().collect(),
        model.s0().iter().copied().collect(),
    )?)
}

pub fn eval(args: &EvalArgs, argv: &[String]) -> Result<()> {
    let loaded = model_file::load(&args.model)?;
    let csv = evaluate(&loaded, args)?.with_meta("command", argv.join(" ")).to_csv();
    emit(&csv, args.out.as_deref())
}

fn evaluate(loaded: &LoadedModel, args: &EvalArgs) -> Result<CurveGrid> {
    let model = &loaded.model;
    let file = &loaded.file;
    let grid = parse_grid(&args.grid)?;
    let state = args.state.as_deref().map(|s| file.resolve_state(s)).transpose()?;
    let info = resolve_info(args, file, state)?;
    let needs_state = !matches!(args.quantity, Quantity::Baseline);
    let state = match (&info, state) {
        (Info::Path(p), None) => Some(p.current_state()),
        (Info::Path(p), Some(s)) if s != p.current_state() => {
            bail!("--state disagrees with the path's current state {}", file.label(p.current_state()))
        }
        (_, s) => s,
    };
    let quantity = quantity_name(args.quantity);
    if state.is_none()
        && matches!(args.quantity, Quantity::Survival | Quantity::Density | Quantity::ForwardIntensity)
    {
        return from_initial_law(loaded, args, &grid);
    }
    if needs_state && state.is_none() {
        bail!("--quantity {quantity} needs --state");
    }
    let cause = match args.quantity {
        Quantity::SubDist | Quantity::CauseIntensity => {
            let j = args.cause.ok_or_else(|| anyhow!("this quantity needs --cause"))?;
            Some(gph::CauseLabel::new(j, model.p())?)
        }
        _ => {
            if args.cause.is_some() {
                bail!("--cause only applies to sub-dist and cause-intensity");
            }
            None
        }
    };
    let target = match (args.quantity, &args.target) {
        (Quantity::Occupation, Some(t)) => Some(file.resolve_state(t)?),
        (Quantity::Occupation, None) => bail!("occupation needs --target"),
        (_, Some(_)) => bail!("--target only applies to occupation"),
        _ => None,
    };
    let dist = merged(model)?;
    let competing = if cause.is_some() { Some(CompetingModel::new(model.clone())?) } else { None };

    let by_duration = matches!(
        args.quantity,
        Quantity::Survival
            | Quantity::Density
            | Quantity::ForwardIntensity
            | Quantity::Occupation
            | Quantity::SubDist
            | Quantity::CauseIntensity
    );
    let mut meta = vec![
        ("model_sha256", loaded.sha256.clone()),
        ("quantity", quantity.to_string()),
        (
            "info",
            match (args.quantity, args.info.is_empty()) {
                (Quantity::Baseline, _) => "initial".into(),
                (_, true) => "current".into(),
                _ => args.info.join(" "),
            },
        ),
    ];
    if let Some(s) = state {
        meta.push(("state", file.label(s)));
    }
    if let Some(c) = cause {
        meta.push(("cause", c.get().to_string()));
    }

    let curve = if by_duration {
        let state = state.expect("checked above");
        let anchors: Vec<f64> = match &info {
            Info::Path(p) => {
                if !args.age.is_empty() {
                    bail!("--age is implied by the path under --info path");
                }
                vec![p.elapsed()]
            }
            _ if args.age.is_empty() => vec![0.0],
            _ => args.age.clone(),
        };
        let infos = anchors
            .iter()
            .map(|&t| info_at(model, &info, state, t))
            .collect::<Result<Vec<_>>>()?;
        let mut columns = vec!["s".to_string(), "duration".to_string()];
        columns.extend(anchors.iter().map(|t| format!("value_t{}", format_float(*t))));
        let mut curve = CurveGrid::new(columns)?;
        for &d in &grid {
            let mut row = vec![snap(anchors[0] + d), d];
            for info in &infos {
                let s = info.age + d;
                let v = match args.quantity {
                    Quantity::Survival => dist.conditional_survival(info, s)?,
                    Quantity::Density => dist.conditional_density(info, s)?,
                    Quantity::ForwardIntensity => hazard::forward_intensity(&dist, info, s)?,
                    Quantity::Occupation => sojourn::expected_occupation(
                        model,
                        &OccupationQuery::new(info.clone(), target.expect("checked"), s)?,
                    )?,
                    Quantity::SubDist => competing
                        .as_ref()
                        .expect("built for causes")
                        .sub_distribution(info, cause.expect("checked"), s)?
                        .cdf,
                    Quantity::CauseIntensity => competing
                        .as_ref()
                        .expect("built for causes")
                        .cause_forward_intensity(info, cause.expect("checked"), s)?,
                    _ => unreachable!("age quantities handled below"),
                };
                row.push(v);
            }
            curve.push(row)?;
        }
        curve
    } else {
        if !args.age.is_empty() {
            bail!("--age does not apply to {quantity}; the grid gives the ages");
        }
        if matches!(info, Info::Path(_)) {
            bail!("--info path fixes a single age; use a horizon quantity");
        }
        let mut curve = CurveGrid::new(["t", "value"])?;
        for &t in &grid {
            let v = match args.quantity {
                Quantity::Baseline => hazard::baseline_intensity(&dist, t)?,
                Quantity::InstantIntensity => {
                    hazard::instantaneous_intensity(&dist, &info_at(model, &info, state.expect("checked"), t)?)?
                }
                Quantity::Residual => {
                    sojourn::residual_lifetime(model, &info_at(model, &info, state.expect("checked"), t)?)?
                }
                _ => unreachable!("duration quantities handled above"),
            };
            curve.push(vec![t, v])?;
        }
        curve
    };
    Ok(meta.into_iter().fold(curve, |c, (k, v)| c.with_meta(k, v)))
}

fn quantity_name(q: Quantity) -> String {
    q.to_possible_value().expect("no skipped variants").get_name().to_string()
}

/// Anchored at `pi` and age 0: the unconditional survival, density and
/// baseline intensity on the duration grid.
fn from_initial_law(loaded: &LoadedModel, args: &EvalArgs, grid: &[f64]) -> Result<CurveGrid> {
    match args.info.first().map(String::as_str) {
        None | Some("initial") if args.info.len() <= 1 => {}
        _ => bail!("without --state only --info initial applies"),
    }
    if args.age.iter().any(|&t| t != 0.0) {
        bail!("the initial law is anchored at age 0");
    }
    if args.cause.is_some() || args.target.is_some() || args.from_state.is_some() {
        bail!("--cause, --target and --from-state need --state");
    }
    let dist = merged(&loaded.model)?;
    let mut curve = CurveGrid::new(["s", "duration", "value_t0"])?;
    for &d in grid {
        let v = match args.quantity {
            Quantity::Survival => dist.survival(d)?,
            Quantity::Density => dist.density(d)?,
            Quantity::ForwardIntensity => hazard::baseline_intensity(&dist, d)?,
            _ => unreachable!("caller filters quantities"),
        };
        curve.push(vec![d, d, v])?;
    }
    Ok(curve
        .with_meta("model_sha256", loaded.sha256.clone())
        .with_meta("quantity", quantity_name(args.quantity))
        .with_meta("info", "initial")
        .with_meta("state", "pi"))
}

pub fn simulate(args: &SimulateArgs, argv: &[String]) -> Result<()> {
    let loaded = model_file::load(&args.model)?;
    let model = &loaded.model;
    let mut cfg = SimulationConfig::new(args.paths, args.horizon, args.seed)?;
    if args.hide_regime {
        cfg = cfg.without_regime();
    }
    let paths = match &args.start {
        Some(s) => montecarlo::simulate_from(model, &cfg, loaded.file.resolve_state(s)?)?,
        None => montecarlo::simulate(model, &cfg)?,
    };
    let mut text = String::new();
    writeln!(text, "# model_sha256: {}", loaded.sha256)?;
    writeln!(text, "# command: {}", argv.join(" "))?;
    writeln!(text, "# seed: {}", args.seed)?;
    writeln!(text, "# paths: {}", args.paths)?;
    writeln!(text, "# horizon: {}", format_float(args.horizon))?;
    text.push_str(&montecarlo::to_path_file(&paths));
    emit(&text, args.out.as_deref())?;

    let absorbed: Vec<f64> = paths.iter().filter_map(|p| p.absorbed.map(|a| a.1)).collect();
    let g = paths.iter().filter(|p| p.regime == gph::Regime::G).count();
    eprintln!(
        "simulated {} paths: {} absorbed, {} censored at {}, {} in regime G",
        paths.len(),
        absorbed.len(),
        paths.len() - absorbed.len(),
        format_float(args.horizon),
        g
    );
    if !absorbed.is_empty() {
        eprintln!(
            "mean absorption time among absorbed paths: {:.6}",
            absorbed.iter().sum::<f64>() / absorbed.len() as f64
        );
    }
    Ok(())
}

pub fn estimate(input: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let paths = montecarlo::parse_path_file(&text)?;
    if paths.is_empty() {
        bail!("{}: no paths to estimate from", input.display());
    }
    let est = mixture::estimate_generator(&paths)?;
    let mut csv = String::new();
    writeln!(csv, "# paths: {}", paths.len())?;
    writeln!(csv, "# source_sha256: {}", model_file::sha256_hex(text.as_bytes()))?;
    writeln!(csv, "kind,from,to,estimate,se")?;
    let n = est.states;
    for i in 0..n {
        for j in 0..n {
            if let (Some(q), Some(se)) = (est.rates[i][j], est.rate_se[i][j]) {
                writeln!(csv, "q,{},{},{},{}", i + 1, j + 1, format_float(q), format_float(se))?;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if let Some(g) = est.g_rates[i][j] {
                writeln!(csv, "g,{},{},{},", i + 1, j + 1, format_float(g))?;
            }
        }
    }
    for i in 0..n {
        if let Some(psi) = est.psi[i] {
            let se = est.psi_se[i].map(format_float).unwrap_or_default();
            writeln!(csv, "psi,{},{},{},{se}", i + 1, i + 1, format_float(psi))?;
        }
        if let Some(s) = est.s0[i] {
            writeln!(csv, "s0,{},{},{},", i + 1, i + 1, format_float(s))?;
        }
    }
    emit(&csv, out)
}

const BUNDLE_GRID: &str = "0:60:0.1";

fn write_curve(dir: &Path, name: &str, curve: CurveGrid) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, curve.to_csv()).with_context(|| format!("writing {}", path.display()))
}

pub fn example_marriage(variant: Variant, dir: &Path, pi: Option<Vec<f64>>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let grid = parse_grid(BUNDLE_GRID)?;
    for (tag, psi) in [
        ("heterogeneous", scenario::HETEROGENEOUS_PSI),
        ("homogeneous", scenario::HOMOGENEOUS_PSI),
    ] {
        match variant {
            Variant::Single => {
                let dist = match &pi {
                    Some(p) => scenario::marriage_with_pi(psi, p.clone())?,
                    None => scenario::marriage(psi)?,
                };
                let mut labels: Vec<String> = scenario::LABELS.iter().map(|s| s.to_string()).collect();
                labels.push("D".into());
                let file = ModelFile::from_model(dist.model(), Some(labels));
                let toml = file.to_toml();
                let hash = model_file::sha256_hex(toml.as_bytes());
                fs::write(dir.join(format!("model_{tag}.toml")), &toml)?;
                single_bundle(dir, tag, &dist, &grid, &hash)?;
                let info = posterior_current(dist.model(), scenario::MARRIED, scenario::ANCHORS[1])?;
                match hazard::longrun_forward_intensity(&dist, &info) {
                    Ok(v) => println!("{tag}: long-run forward divorce intensity from M = {v:.10}"),
                    Err(e) => println!("{tag}: long-run forward divorce intensity unavailable ({e})"),
                }
            }
            Variant::Competing => {
                let cm = match &pi {
                    Some(p) => scenario::competing_with_pi(psi, p.clone())?,
                    None => scenario::competing(psi)?,
                };
                let mut labels: Vec<String> = scenario::COMPETING_LABELS.iter().map(|s| s.to_string()).collect();
                labels.extend(scenario::CAUSES.iter().map(|s| s.to_string()));
                let toml = ModelFile::from_model(cm.model(), Some(labels)).to_toml();
                let hash = model_file::sha256_hex(toml.as_bytes());
                fs::write(dir.join(format!("model_competing_{tag}.toml")), &toml)?;
                competing_bundle(dir, tag, &cm, &grid, &hash)?;
            }
        }
    }
    println!("wrote curve bundle to {}", dir.display());
    Ok(())
}

fn anchor_columns(prefix: &str) -> impl Iterator<Item = String> + '_ {
    scenario::ANCHORS.iter().map(move |t| format!("{prefix}_t{}", format_float(*t)))
}

fn single_bundle(dir: &Path, tag: &str, dist: &GphDistribution, grid: &[f64], hash: &str) -> Result<()> {
    let model = dist.model();
    let infos = scenario::ANCHORS
        .iter()
        .map(|&t| posterior_current(model, scenario::MARRIED, t))
        .collect::<gph::Result<Vec<_>>>()?;
    let meta = |c: CurveGrid| c.with_meta("model_sha256", hash).with_meta("state", "M").with_meta("info", "current");

    let mut columns = vec!["s".to_string(), "duration".to_string()];
    columns.extend(anchor_columns("value"));
    let mut forward = CurveGrid::new(columns.clone())?;
    let mut survival = CurveGrid::new(columns)?;
    for &d in grid {
        let mut f = vec![snap(scenario::ANCHORS[0] + d), d];
        let mut s = f.clone();
        for info in &infos {
            f.push(hazard::forward_intensity_at_duration(dist, info, d)?);
            s.push(dist.conditional_survival(info, info.age + d)?);
        }
        forward.push(f)?;
        survival.push(s)?;
    }
    write_curve(dir, &format!("forward_intensity_{tag}.csv"), meta(forward))?;
    write_curve(dir, &format!("survival_{tag}.csv"), meta(survival))?;

    let mut by_age = CurveGrid::new(["t", "instantaneous", "baseline", "residual"])?;
    for &t in grid {
        let info = posterior_current(model, scenario::MARRIED, t)?;
        by_age.push(vec![
            t,
            hazard::instantaneous_intensity(dist, &info)?,
            hazard::baseline_intensity(dist, t)?,
            sojourn::residual_lifetime(dist, &info)?,
        ])?;
    }
    write_curve(dir, &format!("by_age_{tag}.csv"), meta(by_age))
}

fn competing_bundle(dir: &Path, tag: &str, cm: &CompetingModel, grid: &[f64], hash: &str) -> Result<()> {
    let model = cm.model();
    let infos = scenario::ANCHORS
        .iter()
        .map(|&t| posterior_current(model, scenario::MARRIED, t))
        .collect::<gph::Result<Vec<_>>>()?;
    let mut columns = vec!["s".to_string(), "duration".to_string()];
    for cause in scenario::CAUSES {
        columns.extend(anchor_columns(&format!("F_{cause}")));
        columns.extend(anchor_columns(&format!("Fbar_{cause}")));
    }
    let mut curve = CurveGrid::new(columns)?;
    for &d in grid {
        let mut row = vec![snap(scenario::ANCHORS[0] + d), d];
        for j in 1..=cm.p() {
            let c = cm.cause(j)?;
            let subs = infos
                .iter()
                .map(|info| cm.sub_distribution(info, c, info.age + d))
                .collect::<gph::Result<Vec<_>>>()?;
            row.extend(subs.iter().map(|s| s.cdf));
            row.extend(subs.iter().map(|s| s.survivor));
        }
        curve.push(row)?;
    }
    let curve = curve
        .with_meta("model_sha256", hash)
        .with_meta("state", "M")
        .with_meta("info", "current");
    write_curve(dir, &format!("sub_distribution_{tag}.csv"), curve)
}
