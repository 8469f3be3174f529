//! Run configurations, the experiment runner and the ε sweep.
//!
//! A run solves the reference problem on the evaluation grid, trains the
//! surrogate with periodic error evaluation, and writes
//!
//! ```text
//! config_echo.json  loss_history.csv  error_history.csv
//! rho_profile.csv (1D) | rho_field.csv (2D)  params.ckpt  plots/*.svg
//! ```
//!
//! Every file goes through a temp-file rename.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nets::{checkpoint, InputEncoding, SurrogateConfig, SurrogateSet1D, SurrogateSet2D};
use crate::physics::{limit_solution_1d, limit_solution_2d, D3Form, InitialCondition1D, InitialCondition2D, LossOptions, LossWeights};
use crate::plot::{self, PlotKind};
use crate::quadrature::VelocitySet;
use crate::reference::{relative_l2, solve_kinetic_fd_1d, solve_kinetic_fd_2d, Grid, Splitting};
use crate::sampler::{sample_batch, SamplerConfig};
use crate::train::{init_rng, train, HistoryRow, Model, Schedule, TrainSettings, TrainingHistory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub blocks: usize,
    /// 128 in 1D and 256 in 2D when absent.
    pub width: Option<usize>,
    /// Fourier harmonics `P` of the periodic embedding.
    pub harmonics: usize,
    /// Raw coordinates plus a boundary loss when false.
    pub periodic: bool,
    /// Feed `t/T` instead of `t` to the networks.
    pub normalize_time: bool,
}

impl NetworkConfig {
    pub fn width_for(&self, dimension: usize) -> usize {
        self.width.unwrap_or(if dimension == 1 { 128 } else { 256 })
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { blocks: 4, width: None, harmonics: 4, periodic: true, normalize_time: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Counts {
    pub interior: usize,
    pub initial: usize,
}

impl Default for Counts {
    fn default() -> Self {
        Self { interior: 4096, initial: 1024 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceOptions {
    /// Cells per axis; 200 in 1D and 64 in 2D when absent.
    pub nx: Option<usize>,
    pub velocity_nodes: usize,
    /// At or below this `ε` the analytic diffusion limit replaces the solver.
    pub oracle_below: f64,
    pub splitting: Splitting,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { nx: None, velocity_nodes: 16, oracle_below: 1e-5, splitting: Splitting::Strang }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationOptions {
    /// Output times; `{T/2, T}` when absent.
    pub times: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Sweep values of `ε`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub counts: Counts,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default = "default_velocity_nodes")]
    pub velocity_nodes: usize,
    /// Collocation points per tape.
    #[serde(default = "default_chunk")]
    pub chunk: usize,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub d3: D3Form,
    #[serde(default)]
    pub reference: ReferenceOptions,
    #[serde(default)]
    pub evaluation: EvaluationOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_velocity_nodes() -> usize {
    16
}

fn default_chunk() -> usize {
    8
}

fn default_log_every() -> usize {
    100
}

/// Command-line replacements for config fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

const PRESETS: &[(&str, &str)] = &[
    ("1d_eps1", include_str!("../presets/1d_eps1.json")),
    ("1d_eps1e-4", include_str!("../presets/1d_eps1e-4.json")),
    ("2d_eps1", include_str!("../presets/2d_eps1.json")),
    ("2d_eps1e-3", include_str!("../presets/2d_eps1e-3.json")),
    ("sweep_1d", include_str!("../presets/sweep_1d.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn at_least_one(field: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::config(field, "must be at least 1"))
    }
}

impl RunConfig {
    /// Parses and validates JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.to_string();
            // A missing key sits one level below the reported path.
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("missing field"))
                .map(|k| if path == "." { k.to_string() } else { format!("{path}.{k}") })
                .unwrap_or(path);
            Error::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`; known: {}", preset_names().join(", "))))?;
        Self::from_json(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(i) = o.iterations {
            self.iterations = i;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = Some(d.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dimension) {
            return Err(Error::config("dimension", format!("must be 1 or 2, got {}", self.dimension)));
        }
        if let Some(e) = self.epsilon {
            positive("epsilon", e)?;
        }
        for (i, &e) in self.epsilons.iter().enumerate() {
            positive(&format!("epsilons[{i}]"), e)?;
        }
        positive("horizon", self.horizon)?;
        at_least_one("network.blocks", self.network.blocks)?;
        at_least_one("network.width", self.network.width_for(self.dimension))?;
        at_least_one("network.harmonics", self.network.harmonics)?;
        positive("schedule.eta0", self.schedule.eta0)?;
        positive("schedule.gamma", self.schedule.gamma)?;
        if self.schedule.gamma > 1.0 {
            return Err(Error::config("schedule.gamma", format!("must not exceed 1, got {}", self.schedule.gamma)));
        }
        at_least_one("schedule.period", self.schedule.period)?;
        at_least_one("counts.interior", self.counts.interior)?;
        at_least_one("counts.initial", self.counts.initial)?;
        let w = &self.weights;
        for (name, v) in [("lambda1", w.lambda1), ("lambda2", w.lambda2), ("lambda3", w.lambda3), ("lambda4", w.lambda4)] {
            positive(&format!("weights.{name}"), v)?;
        }
        at_least_one("velocity_nodes", self.velocity_nodes)?;
        at_least_one("chunk", self.chunk)?;
        at_least_one("log_every", self.log_every)?;
        if let Some(n) = self.reference.nx {
            if n < 3 {
                return Err(Error::config("reference.nx", format!("need at least 3 cells, got {n}")));
            }
        }
        at_least_one("reference.velocity_nodes", self.reference.velocity_nodes)?;
        if !(self.reference.oracle_below >= 0.0 && self.reference.oracle_below.is_finite()) {
            return Err(Error::config("reference.oracle_below", "must be non-negative and finite"));
        }
        if let Some(times) = &self.evaluation.times {
            if times.is_empty() {
                return Err(Error::config("evaluation.times", "must not be empty"));
            }
            let mut prev = 0.0;
            for &t in times {
                if !(t > prev && t <= self.horizon) {
                    return Err(Error::config(
                        "evaluation.times",
                        format!("times must be ascending within (0, {}], got {t}", self.horizon),
                    ));
                }
                prev = t;
            }
        }
        Ok(())
    }

    fn run_epsilon(&self) -> Result<f64> {
        self.epsilon.ok_or_else(|| Error::config("epsilon", "required for a single run"))
    }

    pub fn evaluation_times(&self) -> Vec<f64> {
        self.evaluation.times.clone().unwrap_or_else(|| vec![0.5 * self.horizon, self.horizon])
    }

    pub fn reference_cells(&self) -> usize {
        self.reference.nx.unwrap_or(if self.dimension == 1 { 200 } else { 64 })
    }

    fn surrogate_config(&self) -> SurrogateConfig {
        let encoding = if self.network.periodic { InputEncoding::periodic(self.network.harmonics) } else { InputEncoding::raw() };
        let scale = if self.network.normalize_time { 1.0 / self.horizon } else { 1.0 };
        SurrogateConfig {
            width: self.network.width_for(self.dimension),
            blocks: self.network.blocks,
            encoding: encoding.with_time_scale(scale),
        }
    }

    fn train_settings(&self, eps: f64) -> TrainSettings {
        TrainSettings {
            epsilon: eps,
            iterations: self.iterations,
            seed: self.seed,
            schedule: self.schedule,
            sampler: SamplerConfig {
                dimension: self.dimension,
                interior: self.counts.interior,
                initial: self.counts.initial,
                horizon: self.horizon,
            },
            loss: LossOptions { weights: self.weights, d3: self.d3, chunk: self.chunk },
            log_every: self.log_every,
        }
    }
}

/// Output times and the spatial nodes of the reference grid. Samples are
/// ordered by time, then `x`, then `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationGrid {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    /// Empty in 1D.
    pub y: Vec<f64>,
}

impl EvaluationGrid {
    pub fn new(cfg: &RunConfig) -> Self {
        let n = cfg.reference_cells();
        let nodes: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        Self { times: cfg.evaluation_times(), y: if cfg.dimension == 2 { nodes.clone() } else { Vec::new() }, x: nodes }
    }

    pub fn len(&self) -> usize {
        self.times.len() * self.x.len() * self.y.len().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points_1d(&self) -> Vec<(f64, f64)> {
        self.times.iter().flat_map(|&t| self.x.iter().map(move |&x| (t, x))).collect()
    }

    pub fn points_2d(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &t in &self.times {
            for &x in &self.x {
                for &y in &self.y {
                    out.push((t, x, y));
                }
            }
        }
        out
    }
}

/// Dimension-specific pieces of a run.
trait Problem: Model + Sized {
    fn build(cfg: &RunConfig, eps: f64) -> Result<Self>;
    fn initial_condition() -> Self::Ic;
    fn predict(&self, grid: &EvaluationGrid) -> Result<Vec<f64>>;
    fn reference(cfg: &RunConfig, eps: f64, grid: &EvaluationGrid) -> Result<Vec<f64>>;
    fn field_csv(grid: &EvaluationGrid, pred: &[f64], reference: &[f64]) -> Result<(String, PlotKind, Vec<u8>)>;
}

impl Problem for SurrogateSet1D {
    fn build(cfg: &RunConfig, eps: f64) -> Result<Self> {
        SurrogateSet1D::new(cfg.surrogate_config(), eps, VelocitySet::slab(cfg.velocity_nodes)?, &mut init_rng(cfg.seed))
    }

    fn initial_condition() -> InitialCondition1D {
        InitialCondition1D::cosine_gaussian()
    }

    fn predict(&self, grid: &EvaluationGrid) -> Result<Vec<f64>> {
        self.density(&grid.points_1d())
    }

    fn reference(cfg: &RunConfig, eps: f64, grid: &EvaluationGrid) -> Result<Vec<f64>> {
        let ic = Self::initial_condition();
        let vel = VelocitySet::slab(cfg.reference.velocity_nodes)?;
        if eps <= cfg.reference.oracle_below {
            let series = ic.density_series(&vel)?;
            return Ok(grid.points_1d().iter().map(|&(t, x)| limit_solution_1d(t, x, 0.5, &series).0).collect());
        }
        let g = Grid::with_default_step(grid.x.len(), 1, eps, cfg.horizon)?;
        let sol = solve_kinetic_fd_1d(eps, &g, &ic, &vel, &grid.times)?;
        Ok(sol.snapshots.into_iter().flat_map(|s| s.rho).collect())
    }

    fn field_csv(grid: &EvaluationGrid, pred: &[f64], reference: &[f64]) -> Result<(String, PlotKind, Vec<u8>)> {
        let rows = grid.points_1d().into_iter().zip(pred.iter().zip(reference)).map(|((t, x), (p, r))| [x, t, *p, *r]);
        Ok(("rho_profile".into(), PlotKind::Profile, csv_bytes(plot::PROFILE_HEADER, rows)?))
    }
}

impl Problem for SurrogateSet2D {
    fn build(cfg: &RunConfig, eps: f64) -> Result<Self> {
        SurrogateSet2D::new(cfg.surrogate_config(), eps, VelocitySet::quarter_circle(cfg.velocity_nodes)?, &mut init_rng(cfg.seed))
    }

    fn initial_condition() -> InitialCondition2D {
        InitialCondition2D::cosine_gaussian()
    }

    fn predict(&self, grid: &EvaluationGrid) -> Result<Vec<f64>> {
        self.density(&grid.points_2d())
    }

    fn reference(cfg: &RunConfig, eps: f64, grid: &EvaluationGrid) -> Result<Vec<f64>> {
        let ic = Self::initial_condition();
        let vel = VelocitySet::quarter_circle(cfg.reference.velocity_nodes)?;
        if eps <= cfg.reference.oracle_below {
            let series = ic.density_series(&vel)?;
            return Ok(grid.points_2d().iter().map(|&(t, x, y)| limit_solution_2d(t, x, y, 0.5, 0.5, &series).0).collect());
        }
        let g = Grid::with_default_step(grid.x.len(), grid.y.len(), eps, cfg.horizon)?;
        let sol = solve_kinetic_fd_2d(eps, &g, &ic, &vel, &grid.times, cfg.reference.splitting)?;
        Ok(sol.snapshots.into_iter().flat_map(|s| s.rho.into_iter()).collect())
    }

    fn field_csv(grid: &EvaluationGrid, pred: &[f64], reference: &[f64]) -> Result<(String, PlotKind, Vec<u8>)> {
        let rows = grid.points_2d().into_iter().zip(pred.iter().zip(reference)).map(|((t, x, y), (p, r))| [x, y, t, *p, *r]);
        Ok(("rho_field".into(), PlotKind::Field, csv_bytes(plot::FIELD_HEADER, rows)?))
    }
}

fn csv_bytes<const N: usize>(header: &[&str], rows: impl Iterator<Item = [f64; N]>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Contract(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::Contract(format!("csv encoding failed: {e}")))
}

fn loss_csv(history: &TrainingHistory) -> Result<Vec<u8>> {
    let rows = history.rows.iter().map(|r| [r.iter as f64, r.loss.total(), r.loss.residual, r.loss.initial, r.loss.boundary]);
    csv_bytes(plot::LOSS_HEADER, rows)
}

fn error_csv(history: &TrainingHistory) -> Result<Vec<u8>> {
    let rows = history.rows.iter().map(|r| [r.iter as f64, r.rel_l2.unwrap_or(f64::NAN)]);
    csv_bytes(plot::ERROR_HEADER, rows)
}

/// Summary of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub epsilon: f64,
    pub history: TrainingHistory,
    pub final_loss: f64,
    pub final_rel_l2: f64,
    pub out_dir: PathBuf,
}

fn finite_error(e: f64, iteration: usize) -> Result<f64> {
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite { iteration, term: "relative l2 error".into() })
    }
}

fn execute<M: Problem>(cfg: &RunConfig, eps: f64, out: &Path) -> Result<RunOutcome> {
    let grid = EvaluationGrid::new(cfg);
    info!("reference solve: eps {eps}, {} samples", grid.len());
    let reference = M::reference(cfg, eps, &grid)?;
    let mut model = M::build(cfg, eps)?;
    let ic = M::initial_condition();
    let settings = cfg.train_settings(eps);
    info!("training {} parameters for {} iterations", model.param_count(), cfg.iterations);

    let mut evaluate = |m: &M| relative_l2(&m.predict(&grid)?, &reference);
    let mut history = train(&mut model, &ic, &settings, Some(&mut evaluate))?;
    if history.rows.is_empty() {
        let sampler = SamplerConfig { dimension: cfg.dimension, ..settings.sampler };
        let loss = model.loss(&sample_batch(&sampler, cfg.seed, 0)?, eps, &ic, &settings.loss, None)?;
        let rel_l2 = evaluate(&model)?;
        history.rows.push(HistoryRow { iter: 0, loss, rel_l2: Some(rel_l2), seconds: 0.0 });
    }
    let last = history.rows.last().expect("history has a final row");
    let final_loss = last.loss.total();
    let final_rel_l2 = finite_error(last.rel_l2.unwrap_or(f64::NAN), last.iter)?;
    if !final_loss.is_finite() {
        return Err(Error::NonFinite { iteration: last.iter, term: "loss".into() });
    }

    let pred = model.predict(&grid)?;
    let (field_name, field_kind, field) = M::field_csv(&grid, &pred, &reference)?;
    let mut echo = cfg.clone();
    echo.epsilon = Some(eps);
    echo.epsilons.clear();
    echo.out_dir = Some(out.to_path_buf());

    write_atomic(&out.join("config_echo.json"), echo.to_json().as_bytes())?;
    write_atomic(&out.join("loss_history.csv"), &loss_csv(&history)?)?;
    write_atomic(&out.join("error_history.csv"), &error_csv(&history)?)?;
    write_atomic(&out.join(format!("{field_name}.csv")), &field)?;
    let meta = [
        ("dimension", cfg.dimension.to_string()),
        ("epsilon", format!("{eps:?}")),
        ("seed", cfg.seed.to_string()),
        ("iterations", cfg.iterations.to_string()),
        ("width", cfg.network.width_for(cfg.dimension).to_string()),
        ("blocks", cfg.network.blocks.to_string()),
        ("harmonics", cfg.network.harmonics.to_string()),
        ("periodic", cfg.network.periodic.to_string()),
        ("normalize_time", cfg.network.normalize_time.to_string()),
        ("horizon", format!("{:?}", cfg.horizon)),
        ("velocity_nodes", cfg.velocity_nodes.to_string()),
    ];
    checkpoint::save(&out.join("params.ckpt"), &model, &meta)?;
    let plots = out.join("plots");
    plot::plot(&out.join("loss_history.csv"), PlotKind::Loss, &plots.join("loss.svg"))?;
    plot::plot(&out.join("error_history.csv"), PlotKind::Error, &plots.join("error.svg"))?;
    let figure = if field_kind == PlotKind::Profile { "profile.svg" } else { "field.svg" };
    plot::plot(&out.join(format!("{field_name}.csv")), field_kind, &plots.join(figure))?;
    info!("eps {eps}: final loss {final_loss:.4e}, rel_l2 {final_rel_l2:.4e}");

    Ok(RunOutcome { epsilon: eps, history, final_loss, final_rel_l2, out_dir: out.to_path_buf() })
}

fn run_at(cfg: &RunConfig, eps: f64, out: &Path) -> Result<RunOutcome> {
    match cfg.dimension {
        1 => execute::<SurrogateSet1D>(cfg, eps, out),
        _ => execute::<SurrogateSet2D>(cfg, eps, out),
    }
}

/// Trains at `cfg.epsilon` and writes all artifacts under `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let eps = cfg.run_epsilon()?;
    run_at(cfg, eps, out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub rel_l2: f64,
    pub loss: f64,
}

impl SweepRow {
    pub fn loss_over_eps(&self) -> f64 {
        self.loss / self.epsilon
    }

    pub fn loss_plus_eps2(&self) -> f64 {
        self.loss + self.epsilon * self.epsilon
    }
}

/// `cfg.epsilons` in decreasing order with duplicates dropped.
pub fn sweep_epsilons(cfg: &RunConfig) -> Result<Vec<f64>> {
    let mut eps = cfg.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let before = eps.len();
    eps.dedup();
    if eps.len() < before {
        warn!("dropped {} duplicate epsilon value(s)", before - eps.len());
    }
    if eps.len() < 2 {
        return Err(Error::config("epsilons", format!("need at least 2 distinct values, got {}", eps.len())));
    }
    Ok(eps)
}

/// One run per `ε` under `out/eps_<ε>/`, then `sweep.csv` and
/// `plots/sweep.svg`.
pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let eps = sweep_epsilons(cfg)?;
    let mut rows = Vec::with_capacity(eps.len());
    for &e in &eps {
        let o = run_at(cfg, e, &out.join(format!("eps_{e:e}")))?;
        rows.push(SweepRow { epsilon: e, rel_l2: o.final_rel_l2, loss: o.final_loss });
    }
    let mut echo = cfg.clone();
    echo.epsilons = eps;
    echo.out_dir = Some(out.to_path_buf());
    write_atomic(&out.join("config_echo.json"), echo.to_json().as_bytes())?;
    let csv = csv_bytes(plot::SWEEP_HEADER, rows.iter().map(|r| [r.epsilon, r.rel_l2, r.loss, r.loss_over_eps(), r.loss_plus_eps2()]))?;
    write_atomic(&out.join("sweep.csv"), &csv)?;
    plot::plot(&out.join("sweep.csv"), PlotKind::Sweep, &out.join("plots/sweep.svg"))?;
    Ok(rows)
}
