//! Scenarios, scheme dispatch and Monte-Carlo experiments.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::audit_allocation;
use crate::beamforming::{plan_beams, BeamRule, MulticastMrt};
use crate::channel::{derive_trial_seed, sample_channel, ChannelState};
use crate::dc::{dc_solve, DcSettings, InitStrategy};
use crate::error::{Error, Result};
use crate::geometry::{compute_tile_set, TileId, TilingConfig, ViewDirection};
use crate::ofdma::{assemble_plan, solve_quoted_allocation, Allocation, DualSettings, QuotedProblem};
use crate::partition::{build_messages, build_partition, unicast_messages, Message, QualityLadder};

/// Header of every results file.
pub const CSV_HEADER: &str = "scheme,sweep_param,sweep_value,trial,seed,total_power_w,converged,unique_argmax,iterations";

/// Relative tolerance of the feasibility audit applied to every logged solution.
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ProposedAsymptotic,
    ProposedDc,
    BaselineUnicast,
    BaselineMulticast,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::ProposedAsymptotic, Scheme::ProposedDc, Scheme::BaselineUnicast, Scheme::BaselineMulticast];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ProposedAsymptotic => "proposed-asymptotic",
            Scheme::ProposedDc => "proposed-dc",
            Scheme::BaselineUnicast => "baseline-unicast",
            Scheme::BaselineMulticast => "baseline-multicast",
        }
    }

    pub fn is_multicast(self) -> bool {
        self != Scheme::BaselineUnicast
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Number of users.
    K,
    /// Number of antennas.
    M,
    /// Concentration shift of the five base directions, degrees.
    Delta,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::K => "k",
            SweepParam::M => "m",
            SweepParam::Delta => "delta",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepParam::K),
            "m" => Ok(SweepParam::M),
            "delta" => Ok(SweepParam::Delta),
            _ => Err(Error::InvalidConfig(format!("unknown sweep parameter `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Starting point of the DC scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DcStart {
    Asymptotic,
    MulticastMrt,
    #[default]
    BestOf,
}

/// One user: viewing direction and requested quality level (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub quality: usize,
}

/// Experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub tiling: TilingConfig,
    pub ladder: QualityLadder,
    /// Users of the scenario; for a `k` sweep without a pool, the first K are used.
    pub users: Vec<UserSpec>,
    /// Candidate users for a `k` sweep; each trial draws K of them without replacement.
    #[serde(default)]
    pub pool: Vec<UserSpec>,
    /// Antennas.
    pub m: usize,
    /// Subcarriers.
    pub n_sc: usize,
    pub bandwidth_hz: f64,
    pub noise_w: f64,
    /// Large-scale gain per user (or per pool entry); all ones when absent.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    /// Concentration shift applied to the five users, degrees.
    #[serde(default)]
    pub delta_deg: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub multicast_mrt: MulticastMrt,
    #[serde(default)]
    pub dc_init: DcStart,
    /// Leave non-converged trials out of the summary rows.
    #[serde(default)]
    pub strict: bool,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.tiling.validate()?;
        self.ladder.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("at least one scheme is required".into()));
        }
        if self.m == 0 || self.n_sc == 0 {
            return Err(Error::InvalidConfig("m and n_sc must be at least 1".into()));
        }
        if !(self.bandwidth_hz > 0.0) || !(self.noise_w > 0.0) {
            return Err(Error::InvalidConfig("bandwidth_hz and noise_w must be positive".into()));
        }
        if self.users.is_empty() {
            return Err(Error::InvalidConfig("at least one user is required".into()));
        }
        for u in self.users.iter().chain(&self.pool) {
            ViewDirection::new(u.yaw_deg, u.pitch_deg)?;
            self.ladder.rate(u.quality)?;
        }
        if let Some(beta) = &self.beta {
            if beta.len() != self.candidates().len() || beta.iter().any(|&b| !(b > 0.0)) {
                return Err(Error::InvalidConfig("beta needs one positive entry per user (or pool entry)".into()));
            }
        }
        if !(self.delta_deg >= 0.0) {
            return Err(Error::InvalidConfig("delta_deg must be non-negative".into()));
        }
        if self.delta_deg != 0.0 && self.users.len() != 5 {
            return Err(Error::WrongDirectionCount { expected: 5, got: self.users.len() });
        }
        if let Some(s) = &self.sweep {
            self.check_sweep(s.param, &s.values)?;
        }
        Ok(())
    }

    fn candidates(&self) -> &[UserSpec] {
        if self.pool.is_empty() { &self.users } else { &self.pool }
    }

    fn check_sweep(&self, param: SweepParam, values: &[f64]) -> Result<()> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value".into()));
        }
        for &v in values {
            let ok = match param {
                SweepParam::K => v >= 1.0 && v.fract() == 0.0 && (v as usize) <= self.candidates().len(),
                SweepParam::M => v >= 1.0 && v.fract() == 0.0,
                SweepParam::Delta => v >= 0.0 && self.users.len() == 5,
            };
            if !ok {
                return Err(Error::InvalidConfig(format!("invalid {} sweep value {v}", param.name())));
            }
        }
        Ok(())
    }

    /// Default sweep values for `param` when the config does not list any.
    pub fn default_sweep(&self, param: SweepParam) -> Vec<f64> {
        match param {
            SweepParam::K => (1..=self.candidates().len().min(5)).map(|k| k as f64).collect(),
            SweepParam::M => vec![2.0, 4.0, 8.0, 16.0],
            SweepParam::Delta => (0..=5).map(|i| i as f64 * self.tiling.col_width_deg()).collect(),
        }
    }

    /// Switches the sweep to `param`, keeping configured values when they match.
    pub fn with_sweep(mut self, param: SweepParam) -> Result<Self> {
        let values = match &self.sweep {
            Some(s) if s.param == param => s.values.clone(),
            _ => self.default_sweep(param),
        };
        self.check_sweep(param, &values)?;
        self.sweep = Some(SweepConfig { param, values });
        Ok(self)
    }

    fn points(&self) -> Vec<Option<(SweepParam, f64)>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some((s.param, v))).collect(),
            None => vec![None],
        }
    }

    fn dc_settings(&self) -> DcSettings {
        let init = match self.dc_init {
            DcStart::Asymptotic => InitStrategy::Asymptotic,
            DcStart::MulticastMrt => InitStrategy::MulticastMrt,
            DcStart::BestOf => InitStrategy::BestOf,
        };
        DcSettings { init, ..DcSettings::default() }
    }
}

/// Moves the five base directions together: yaw shifts `+Δ, +Δ, 0, −Δ, −Δ`.
pub fn shift_directions(base: &[ViewDirection], delta_deg: f64) -> Result<Vec<ViewDirection>> {
    if base.len() != 5 {
        return Err(Error::WrongDirectionCount { expected: 5, got: base.len() });
    }
    if !(delta_deg >= 0.0) {
        return Err(Error::InvalidConfig(format!("negative shift {delta_deg}")));
    }
    const SIGN: [f64; 5] = [1.0, 1.0, 0.0, -1.0, -1.0];
    base.iter().zip(SIGN).map(|(d, s)| ViewDirection::new(d.yaw_deg + s * delta_deg, d.pitch_deg)).collect()
}

/// Users, channel and tile sets of one trial at one sweep point.
#[derive(Debug, Clone)]
pub struct TrialInstance {
    pub seed: u64,
    pub users: Vec<UserSpec>,
    pub tile_sets: Vec<BTreeSet<TileId>>,
    pub channel: ChannelState<f64>,
}

impl TrialInstance {
    pub fn qualities(&self) -> Vec<usize> {
        self.users.iter().map(|u| u.quality).collect()
    }
}

/// Candidate order of one trial; K sweeps take a prefix, so user sets are nested in K.
fn candidate_order(cfg: &ScenarioConfig, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cfg.candidates().len()).collect();
    if !cfg.pool.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        order.shuffle(&mut rng);
    }
    order
}

pub fn build_instance(cfg: &ScenarioConfig, point: Option<(SweepParam, f64)>, trial: usize) -> Result<TrialInstance> {
    let seed = derive_trial_seed(cfg.base_seed, trial as u64);
    let order = candidate_order(cfg, seed);
    let cands = cfg.candidates();
    let beta_of = |i: usize| cfg.beta.as_ref().map_or(1.0, |b| b[i]);

    let (k, channel_users, antennas, delta) = match point {
        Some((SweepParam::K, v)) => {
            let k_max = cfg.sweep.as_ref().map_or(v as usize, |s| s.values.iter().fold(0.0_f64, |a, &b| a.max(b)) as usize);
            (v as usize, k_max.max(v as usize), cfg.m, cfg.delta_deg)
        }
        Some((SweepParam::M, v)) => (cfg.users.len(), cfg.users.len(), v as usize, cfg.delta_deg),
        Some((SweepParam::Delta, v)) => (cfg.users.len(), cfg.users.len(), cfg.m, v),
        None => (cfg.users.len(), cfg.users.len(), cfg.m, cfg.delta_deg),
    };
    let chosen: Vec<usize> = if matches!(point, Some((SweepParam::K, _))) { order[..channel_users].to_vec() } else { (0..cfg.users.len()).collect() };
    let pick = |i: usize| if matches!(point, Some((SweepParam::K, _))) { cands[i] } else { cfg.users[i] };

    let mut users: Vec<UserSpec> = chosen.iter().take(k).map(|&i| pick(i)).collect();
    if delta != 0.0 || matches!(point, Some((SweepParam::Delta, _))) {
        let base: Vec<ViewDirection> = users.iter().map(|u| ViewDirection::new(u.yaw_deg, u.pitch_deg)).collect::<Result<_>>()?;
        for (u, d) in users.iter_mut().zip(shift_directions(&base, delta)?) {
            u.yaw_deg = d.yaw_deg;
        }
    }
    let tile_sets = users
        .iter()
        .map(|u| ViewDirection::new(u.yaw_deg, u.pitch_deg).map(|d| compute_tile_set(&d, &cfg.tiling)))
        .collect::<Result<Vec<_>>>()?;
    let beta: Vec<f64> = chosen.iter().map(|&i| beta_of(i)).collect();
    let channel = sample_channel(seed, antennas, cfg.n_sc, channel_users, &beta, cfg.noise_w, cfg.bandwidth_hz)?;
    Ok(TrialInstance { seed, users, tile_sets, channel })
}

/// A solved and audited plan.
#[derive(Debug, Clone)]
pub struct SchemeSolution {
    pub messages: Vec<Message>,
    pub allocation: Allocation<f64>,
    pub converged: bool,
    pub unique_argmax: bool,
    pub iterations: usize,
}

fn quoted(chan: &ChannelState<f64>, messages: Vec<Message>, rule: BeamRule) -> Result<SchemeSolution> {
    let plan = plan_beams(chan, &messages, rule)?;
    let problem = QuotedProblem::new(&messages, plan.quotes(), chan.bandwidth_hz, chan.antennas);
    let alloc = solve_quoted_allocation(&problem, &DualSettings::default())?;
    let allocation = assemble_plan(&alloc, &plan, chan.bandwidth_hz)?;
    Ok(SchemeSolution {
        converged: allocation.stats.converged,
        unique_argmax: allocation.stats.unique_argmax,
        iterations: allocation.stats.iterations,
        messages,
        allocation,
    })
}

/// Solves one scheme on one instance. The plan is not audited here.
pub fn solve_scheme(cfg: &ScenarioConfig, scheme: Scheme, inst: &TrialInstance) -> Result<SchemeSolution> {
    let qualities = inst.qualities();
    let chan = &inst.channel;
    let multicast = || -> Result<Vec<Message>> { build_messages(&build_partition(&inst.tile_sets), &qualities, &cfg.ladder) };
    match scheme {
        Scheme::ProposedAsymptotic => quoted(chan, multicast()?, BeamRule::Asymptotic),
        Scheme::BaselineMulticast => quoted(chan, multicast()?, BeamRule::MrtMulticast(cfg.multicast_mrt)),
        Scheme::BaselineUnicast => quoted(chan, unicast_messages(&inst.tile_sets, &qualities, &cfg.ladder)?, BeamRule::MrtUnicast),
        Scheme::ProposedDc => {
            let messages = multicast()?;
            let report = dc_solve(chan, &messages, &cfg.dc_settings())?;
            Ok(SchemeSolution {
                converged: report.converged,
                unique_argmax: report.unique_argmax,
                iterations: report.outer_iterations,
                messages,
                allocation: report.allocation,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub scheme: Scheme,
    pub sweep_param: Option<SweepParam>,
    pub sweep_value: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    /// NaN when the trial failed or its plan did not pass the audit.
    pub total_power_w: f64,
    pub converged: bool,
    pub unique_argmax: bool,
    pub iterations: usize,
    /// Why the trial has no power, if it has none.
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn is_feasible(&self) -> bool {
        self.failure.is_none()
    }
}

pub fn run_trial(cfg: &ScenarioConfig, scheme: Scheme, point: Option<(SweepParam, f64)>, trial: usize) -> TrialResult {
    let seed = derive_trial_seed(cfg.base_seed, trial as u64);
    let mut result = TrialResult {
        scheme,
        sweep_param: point.map(|p| p.0),
        sweep_value: point.map(|p| p.1),
        trial,
        seed,
        total_power_w: f64::NAN,
        converged: false,
        unique_argmax: false,
        iterations: 0,
        failure: None,
    };
    let solved = build_instance(cfg, point, trial).and_then(|inst| solve_scheme(cfg, scheme, &inst).map(|s| (inst, s)));
    match solved {
        Ok((inst, sol)) => {
            result.converged = sol.converged;
            result.unique_argmax = sol.unique_argmax;
            result.iterations = sol.iterations;
            let audit = audit_allocation(&inst.channel, &sol.messages, &sol.allocation, AUDIT_TOL);
            if audit.is_feasible() {
                result.total_power_w = sol.allocation.total_power_w;
            } else {
                result.failure = Some(format!("audit: {}", audit.violations[0]));
            }
        }
        Err(e) => result.failure = Some(e.to_string()),
    }
    result
}

/// Mean and standard error of one (scheme, sweep point) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scheme: Scheme,
    pub sweep_param: Option<SweepParam>,
    pub sweep_value: Option<f64>,
    pub mean_w: f64,
    pub sem_w: f64,
    /// Trials entering the mean.
    pub count: usize,
    pub all_converged: bool,
    pub all_unique: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub base_seed: u64,
    pub trials: Vec<TrialResult>,
    pub summaries: Vec<Summary>,
}

fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every (sweep point, scheme, trial); trials run in parallel, results
/// keep that order.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<Experiment> {
    cfg.validate()?;
    let mut tasks = Vec::new();
    for point in cfg.points() {
        for &scheme in &cfg.schemes {
            for trial in 0..cfg.trials {
                tasks.push((point, scheme, trial));
            }
        }
    }
    let trials: Vec<TrialResult> = tasks.par_iter().map(|&(point, scheme, trial)| run_trial(cfg, scheme, point, trial)).collect();
    let mut summaries = Vec::new();
    for cell in trials.chunks(cfg.trials) {
        let first = &cell[0];
        let used: Vec<&TrialResult> = cell.iter().filter(|t| t.is_feasible() && (!cfg.strict || t.converged)).collect();
        let powers: Vec<f64> = used.iter().map(|t| t.total_power_w).collect();
        let (mean_w, sem_w) = mean_sem(&powers);
        summaries.push(Summary {
            scheme: first.scheme,
            sweep_param: first.sweep_param,
            sweep_value: first.sweep_value,
            mean_w,
            sem_w,
            count: powers.len(),
            all_converged: cell.iter().all(|t| t.converged),
            all_unique: cell.iter().all(|t| t.unique_argmax),
            iterations: cell.iter().map(|t| t.iterations).sum(),
        });
    }
    Ok(Experiment { base_seed: cfg.base_seed, trials, summaries })
}

fn fmt_power(p: f64) -> String {
    if p.is_nan() { "NaN".into() } else { format!("{p:e}") }
}

fn fmt_point(param: Option<SweepParam>, value: Option<f64>) -> (String, String) {
    (param.map_or_else(|| "none".to_string(), |p| p.name().to_string()), value.map_or_else(|| "-".to_string(), |v| format!("{v}")))
}

impl Experiment {
    /// Trial rows followed by `mean` and `sem` rows per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(128 * (self.trials.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for t in &self.trials {
            let (p, v) = fmt_point(t.sweep_param, t.sweep_value);
            out.push_str(&format!(
                "{},{p},{v},{},{},{},{},{},{}\n",
                t.scheme,
                t.trial,
                t.seed,
                fmt_power(t.total_power_w),
                t.converged,
                t.unique_argmax,
                t.iterations
            ));
        }
        for s in &self.summaries {
            let (p, v) = fmt_point(s.sweep_param, s.sweep_value);
            for (label, value) in [("mean", s.mean_w), ("sem", s.sem_w)] {
                out.push_str(&format!(
                    "{},{p},{v},{label},{},{},{},{},{}\n",
                    s.scheme,
                    self.base_seed,
                    fmt_power(value),
                    s.all_converged,
                    s.all_unique,
                    s.iterations
                ));
            }
        }
        out
    }

    pub fn summary(&self, scheme: Scheme, value: Option<f64>) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.scheme == scheme && s.sweep_value == value)
    }

    /// Powers of one cell in trial order (NaN for failed trials).
    pub fn powers(&self, scheme: Scheme, value: Option<f64>) -> Vec<f64> {
        self.trials.iter().filter(|t| t.scheme == scheme && t.sweep_value == value).map(|t| t.total_power_w).collect()
    }
}

/// A trial row read back from a results file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub scheme: Scheme,
    pub sweep_param: Option<SweepParam>,
    pub sweep_value: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub total_power_w: f64,
}

/// Parses the trial rows of a results file, skipping summary rows.
pub fn parse_results(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::InvalidConfig("results file header does not match".into()));
    }
    let bad = |i: usize| Error::InvalidConfig(format!("malformed results row {}", i + 2));
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(i));
        }
        if f[3] == "mean" || f[3] == "sem" {
            continue;
        }
        let sweep_param = if f[1] == "none" { None } else { Some(f[1].parse()?) };
        let sweep_value = if f[2] == "-" { None } else { Some(f[2].parse().map_err(|_| bad(i))?) };
        rows.push(CsvRow {
            scheme: f[0].parse()?,
            sweep_param,
            sweep_value,
            trial: f[3].parse().map_err(|_| bad(i))?,
            seed: f[4].parse().map_err(|_| bad(i))?,
            total_power_w: f[5].parse().map_err(|_| bad(i))?,
        });
    }
    Ok(rows)
}

/// Command-line overrides of a loaded config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub schemes: Vec<Scheme>,
    pub sweep: Option<SweepParam>,
}

impl ScenarioConfig {
    pub fn apply(mut self, ov: &Overrides) -> Result<Self> {
        if let Some(seed) = ov.seed {
            self.base_seed = seed;
        }
        if let Some(trials) = ov.trials {
            self.trials = trials;
        }
        if !ov.schemes.is_empty() {
            self.schemes = ov.schemes.clone();
        }
        if let Some(param) = ov.sweep {
            self = self.with_sweep(param)?;
        }
        self.validate()?;
        Ok(self)
    }
}

/// Outcome of re-running the trials listed in a results file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsAudit {
    pub rows: usize,
    pub mismatches: Vec<String>,
}

impl ResultsAudit {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-runs every trial row of `text` under `cfg`; powers must reproduce to
/// 1e-9 relative and every re-run plan must pass the constraint audit.
pub fn audit_results(cfg: &ScenarioConfig, text: &str) -> Result<ResultsAudit> {
    let rows = parse_results(text)?;
    let mismatches: Vec<String> = rows
        .par_iter()
        .filter_map(|row| {
            let point = row.sweep_param.zip(row.sweep_value);
            let expect_seed = derive_trial_seed(cfg.base_seed, row.trial as u64);
            if row.seed != expect_seed {
                return Some(format!("{} trial {}: seed {} does not derive from base seed {}", row.scheme, row.trial, row.seed, cfg.base_seed));
            }
            let again = run_trial(cfg, row.scheme, point, row.trial);
            let same = (again.total_power_w.is_nan() && row.total_power_w.is_nan())
                || (again.total_power_w - row.total_power_w).abs() <= 1e-9 * row.total_power_w.abs();
            if !same {
                return Some(format!(
                    "{} trial {} at {:?}: recorded {} re-run {}",
                    row.scheme, row.trial, row.sweep_value, row.total_power_w, again.total_power_w
                ));
            }
            if row.total_power_w.is_finite() && !again.is_feasible() {
                return Some(format!("{} trial {}: {}", row.scheme, row.trial, again.failure.unwrap_or_default()));
            }
            None
        })
        .collect();
    Ok(ResultsAudit { rows: rows.len(), mismatches })
}

/// One random instance of the oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub messages: usize,
    pub subcarriers: usize,
    pub dual_power_w: f64,
    pub oracle_power_w: f64,
    pub relative_gap: f64,
    /// Worst relative shortfall of a demand in the dual solution.
    pub demand_gap: f64,
}

/// Compares the dual allocation with exhaustive search on random quoted
/// instances (up to 3 messages and 4 subcarriers).
pub fn oracle_check(seed: u64, instances: usize) -> Result<Vec<OracleCase>> {
    use crate::ofdma::brute_force_allocation;
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = 39e3;
    let mut out = Vec::with_capacity(instances);
    while out.len() < instances {
        let msgs = rng.gen_range(1..=3);
        let n_sc = rng.gen_range(msgs.max(2)..=4);
        let antennas = rng.gen_range(1..=8);
        let problem = QuotedProblem {
            demands: (0..msgs).map(|_| rng.gen_range(0.1..5.0) * b).collect(),
            quotes: (0..msgs).map(|_| (0..n_sc).map(|_| 1e-9 * 10f64.powf(rng.gen_range(-1.0..1.0))).collect()).collect(),
            bandwidth_hz: b,
            antennas,
        };
        let dual = solve_quoted_allocation(&problem, &DualSettings::default())?;
        let oracle = brute_force_allocation(&problem)?;
        let demand_gap = (0..msgs)
            .map(|m| (problem.demands[m] - dual.message_rate(m)) / problem.demands[m])
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(OracleCase {
            messages: msgs,
            subcarriers: n_sc,
            dual_power_w: dual.total_power_w,
            oracle_power_w: oracle.total_power_w,
            relative_gap: (dual.total_power_w - oracle.total_power_w) / oracle.total_power_w,
            demand_gap,
        });
    }
    Ok(out)
}
