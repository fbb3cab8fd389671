//! Subcarrier, power and rate allocation for fixed power quotes.
//!
//! Given quotes `Q[m][n]`, choose one message per subcarrier and powers
//! `P[m][n]` minimising `(1/M) Σ P` subject to
//! `Σ_n B log2(1 + P[m][n] / Q[m][n]) ≥ d_m` for every message.
//!
//! The solver runs projected subgradient ascent on the per-message demand
//! duals. For duals `γ`, each subcarrier goes to the message with the largest
//! water-filling gain and the assigned message pours power up to the level
//! `γ B / ln 2`. Every assignment visited is priced exactly by per-message
//! water-filling, and the best one is polished by a reassignment/swap local
//! search, which closes the integrality gap left by the dual on small
//! instances.

use std::f64::consts::LN_2;

use crate::beamforming::BeamPlan;
use crate::cxkernel::CVec;
use crate::error::{Error, Result};
use crate::partition::Message;
use crate::scalar::Real;

/// Water-filling power `max(0, γ B / ln 2 − q)`.
pub fn waterfill_power<T: Real>(gamma: T, quote: T, bandwidth_hz: T) -> T {
    (gamma * bandwidth_hz / T::LN_2() - quote).max(T::zero())
}

/// Per-subcarrier dual gain `γ B log2(1 + P*/q) − P*` at the water-filling power.
pub fn assignment_gain<T: Real>(gamma: T, quote: T, bandwidth_hz: T) -> T {
    let p = waterfill_power(gamma, quote, bandwidth_hz);
    if p <= T::zero() {
        return T::zero();
    }
    gamma * bandwidth_hz * (T::one() + p / quote).log2() - p
}

/// Demands and quotes of one allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotedProblem<T> {
    /// Rate demand per message, bits/s.
    pub demands: Vec<T>,
    /// `quotes[m][n]`; `+inf` marks a pair that cannot carry data.
    pub quotes: Vec<Vec<T>>,
    pub bandwidth_hz: T,
    /// Antenna count `M`; total power is `(1/M) Σ P`.
    pub antennas: usize,
}

impl<T: Real> QuotedProblem<T> {
    pub fn new(messages: &[Message], quotes: Vec<Vec<T>>, bandwidth_hz: T, antennas: usize) -> Self {
        QuotedProblem {
            demands: messages.iter().map(|m| T::of(m.demand_bps)).collect(),
            quotes,
            bandwidth_hz,
            antennas,
        }
    }

    pub fn messages(&self) -> usize {
        self.demands.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.quotes.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let n = self.subcarriers();
        if self.quotes.len() != self.demands.len() || self.quotes.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidConfig("quote table shape does not match the message list".into()));
        }
        if self.demands.is_empty() || n == 0 {
            return Err(Error::InvalidConfig("need at least one message and one subcarrier".into()));
        }
        if !(self.bandwidth_hz > T::zero()) || self.antennas == 0 {
            return Err(Error::InvalidConfig("bandwidth and antenna count must be positive".into()));
        }
        for (m, (d, row)) in self.demands.iter().zip(&self.quotes).enumerate() {
            if !(*d > T::zero()) || !d.is_finite() {
                return Err(Error::Infeasible { message: m, reason: "demand must be positive" });
            }
            if row.iter().any(|q| !(*q > T::zero())) {
                return Err(Error::Infeasible { message: m, reason: "quotes must be positive" });
            }
            if !row.iter().any(|q| q.is_finite()) {
                return Err(Error::Infeasible { message: m, reason: "no subcarrier has a finite quote" });
            }
        }
        if self.demands.len() > n {
            return Err(Error::Infeasible {
                message: n,
                reason: "more messages than subcarriers; some message gets no subcarrier",
            });
        }
        Ok(())
    }

    fn spectral_demand(&self, m: usize) -> f64 {
        self.demands[m].to_f64_lossy() / self.bandwidth_hz.to_f64_lossy()
    }

    fn power_scale(&self) -> T {
        T::one() / T::from_usize(self.antennas).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats<T> {
    pub iterations: usize,
    /// The dual iteration met its stopping rule before `max_iter`.
    pub converged: bool,
    /// Every subcarrier had a strict argmax at the final duals.
    pub unique_argmax: bool,
    /// Best dual objective seen: a lower bound on the relaxed optimum, in watts.
    pub dual_bound: T,
}

impl<T: Real> Default for SolveStats<T> {
    fn default() -> Self {
        SolveStats { iterations: 0, converged: true, unique_argmax: true, dual_bound: T::neg_infinity() }
    }
}

/// A binary subcarrier assignment with powers, rates and (optionally) beams.
///
/// `assignment[n]` is the message served on subcarrier `n`; `power[n]` and
/// `rate[n]` belong to that pair. Every other pair has zero power and rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<T> {
    pub assignment: Vec<usize>,
    /// `η` (equivalently `P`) per subcarrier; the radiated power is `η / M`.
    pub power: Vec<T>,
    /// Rate per subcarrier, bits/s.
    pub rate: Vec<T>,
    /// Unit beam per subcarrier; empty until beams are attached.
    pub beams: Vec<CVec<T>>,
    /// `(1/M) Σ_n power[n]`, watts.
    pub total_power_w: T,
    pub antennas: usize,
    pub stats: SolveStats<T>,
}

impl<T: Real> Allocation<T> {
    pub fn mu(&self, message: usize, subcarrier: usize) -> bool {
        self.assignment[subcarrier] == message
    }

    pub fn eta(&self, message: usize, subcarrier: usize) -> T {
        if self.mu(message, subcarrier) { self.power[subcarrier] } else { T::zero() }
    }

    pub fn c(&self, message: usize, subcarrier: usize) -> T {
        if self.mu(message, subcarrier) { self.rate[subcarrier] } else { T::zero() }
    }

    /// Total rate delivered to `message`, bits/s.
    pub fn message_rate(&self, message: usize) -> T {
        self.assignment
            .iter()
            .zip(&self.rate)
            .filter(|(a, _)| **a == message)
            .map(|(_, r)| *r)
            .sum()
    }

    pub fn subcarriers_of(&self, message: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment.iter().enumerate().filter(move |(_, a)| **a == message).map(|(n, _)| n)
    }

    pub(crate) fn recompute_total(&mut self) {
        let scale = T::one() / T::from_usize(self.antennas).unwrap();
        self.total_power_w = self.power.iter().copied().sum::<T>() * scale;
    }
}

/// Optimal water level for spreading `x` bits/s/Hz over `quotes`, by the
/// sorted closed form. Returns `(level, total_power)`.
fn water_level(quotes: &mut [f64], x: f64) -> (f64, f64) {
    quotes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let finite = quotes.iter().take_while(|q| q.is_finite()).count();
    if finite == 0 {
        return (f64::INFINITY, f64::INFINITY);
    }
    let mut log_sum = 0.0;
    let mut level = f64::INFINITY;
    let mut used = 0;
    for j in 0..finite {
        log_sum += quotes[j].log2();
        let candidate = ((x + log_sum) / (j + 1) as f64).exp2();
        level = candidate;
        used = j + 1;
        if j + 1 == finite || candidate <= quotes[j + 1] {
            break;
        }
    }
    let power = quotes[..used].iter().map(|q| level - q).sum();
    (level, power)
}

/// Minimum power (before the `1/M` factor) that carries `x` bits/s/Hz over `quotes`.
fn message_cost(quotes: &[f64], x: f64) -> f64 {
    if quotes.is_empty() {
        return f64::INFINITY;
    }
    let mut q = quotes.to_vec();
    water_level(&mut q, x).1
}

struct Workspace<'a, T> {
    problem: &'a QuotedProblem<T>,
    quotes: Vec<Vec<f64>>,
    demand: Vec<f64>,
}

impl<'a, T: Real> Workspace<'a, T> {
    fn new(problem: &'a QuotedProblem<T>) -> Self {
        Workspace {
            problem,
            quotes: problem.quotes.iter().map(|r| r.iter().map(|q| q.to_f64_lossy()).collect()).collect(),
            demand: (0..problem.messages()).map(|m| problem.spectral_demand(m)).collect(),
        }
    }

    fn cost_of(&self, m: usize, subs: &[usize]) -> f64 {
        let q: Vec<f64> = subs.iter().map(|&n| self.quotes[m][n]).collect();
        message_cost(&q, self.demand[m])
    }

    fn owned(&self, assignment: &[usize]) -> Vec<Vec<usize>> {
        let mut owned = vec![Vec::new(); self.quotes.len()];
        for (n, &m) in assignment.iter().enumerate() {
            owned[m].push(n);
        }
        owned
    }

    fn total_cost(&self, assignment: &[usize]) -> f64 {
        self.owned(assignment).iter().enumerate().map(|(m, subs)| self.cost_of(m, subs)).sum()
    }

    /// Gives every message without a subcarrier the cheapest one it can take
    /// from a message that owns at least two.
    fn repair(&self, assignment: &mut [usize]) {
        loop {
            let owned = self.owned(assignment);
            let Some(starved) = (0..owned.len()).find(|&m| owned[m].is_empty()) else { return };
            let mut best: Option<(f64, usize)> = None;
            for n in 0..assignment.len() {
                let from = assignment[n];
                if owned[from].len() < 2 || !self.quotes[starved][n].is_finite() {
                    continue;
                }
                let rest: Vec<usize> = owned[from].iter().copied().filter(|&s| s != n).collect();
                let delta = self.cost_of(from, &rest) - self.cost_of(from, &owned[from]) + self.cost_of(starved, &[n]);
                if best.is_none_or(|(d, _)| delta < d) {
                    best = Some((delta, n));
                }
            }
            match best {
                Some((_, n)) => assignment[n] = starved,
                None => return,
            }
        }
    }

    /// First-improvement local search over single reassignments and pairwise
    /// swaps; once those stall, two-step chains and exact re-solves of small
    /// groups of messages.
    fn polish(&self, assignment: &mut [usize]) {
        let n_sc = assignment.len();
        let msgs = self.quotes.len();
        let mut owned = self.owned(assignment);
        let mut cost: Vec<f64> = (0..msgs).map(|m| self.cost_of(m, &owned[m])).collect();
        let without = |subs: &[usize], n: usize| -> Vec<usize> { subs.iter().copied().filter(|&s| s != n).collect() };
        let with = |subs: &[usize], n: usize| -> Vec<usize> {
            let mut v = subs.to_vec();
            v.push(n);
            v
        };
        let mut improved = true;
        let mut rounds = 0;
        while improved && rounds < 1000 {
            improved = false;
            rounds += 1;
            for n in 0..n_sc {
                let a = assignment[n];
                for b in 0..msgs {
                    if b == a || !self.quotes[b][n].is_finite() {
                        continue;
                    }
                    let new_a = self.cost_of(a, &without(&owned[a], n));
                    let new_b = self.cost_of(b, &with(&owned[b], n));
                    if new_a + new_b < (cost[a] + cost[b]) * (1.0 - 1e-12) {
                        assignment[n] = b;
                        owned[a] = without(&owned[a], n);
                        owned[b] = with(&owned[b], n);
                        cost[a] = new_a;
                        cost[b] = new_b;
                        improved = true;
                        break;
                    }
                }
            }
            for n1 in 0..n_sc {
                for n2 in (n1 + 1)..n_sc {
                    let (a, b) = (assignment[n1], assignment[n2]);
                    if a == b || !self.quotes[a][n2].is_finite() || !self.quotes[b][n1].is_finite() {
                        continue;
                    }
                    let sa = with(&without(&owned[a], n1), n2);
                    let sb = with(&without(&owned[b], n2), n1);
                    let (new_a, new_b) = (self.cost_of(a, &sa), self.cost_of(b, &sb));
                    if new_a + new_b < (cost[a] + cost[b]) * (1.0 - 1e-12) {
                        assignment.swap(n1, n2);
                        owned[a] = sa;
                        owned[b] = sb;
                        cost[a] = new_a;
                        cost[b] = new_b;
                        improved = true;
                    }
                }
            }
            if !improved {
                improved = self.chain_move(assignment, &mut owned, &mut cost);
            }
            if !improved {
                improved = self.regroup_all(assignment, &mut owned, &mut cost);
            }
        }
    }

    /// Two coupled reassignments: `n1` moves `a → b`, then either `a` takes
    /// `n2` from a third message or `b` hands `n2` on. Applies the first
    /// improving one.
    fn chain_move(&self, assignment: &mut [usize], owned: &mut [Vec<usize>], cost: &mut [f64]) -> bool {
        let n_sc = assignment.len();
        let msgs = self.quotes.len();
        let finite = |m: usize, n: usize| self.quotes[m][n].is_finite();
        let edit = |subs: &[usize], out: Option<usize>, add: Option<usize>| -> Vec<usize> {
            let mut v: Vec<usize> = subs.iter().copied().filter(|&s| Some(s) != out).collect();
            v.extend(add);
            v
        };
        for n1 in 0..n_sc {
            let a = assignment[n1];
            for b in 0..msgs {
                if b == a || !finite(b, n1) {
                    continue;
                }
                let b_gain = edit(&owned[b], None, Some(n1));
                let new_b = self.cost_of(b, &b_gain);
                for n2 in 0..n_sc {
                    let c = assignment[n2];
                    if n2 == n1 {
                        continue;
                    }
                    if c != a && c != b && finite(a, n2) {
                        let sa = edit(&owned[a], Some(n1), Some(n2));
                        let sc = edit(&owned[c], Some(n2), None);
                        let (new_a, new_c) = (self.cost_of(a, &sa), self.cost_of(c, &sc));
                        if new_a + new_b + new_c < (cost[a] + cost[b] + cost[c]) * (1.0 - 1e-12) {
                            assignment[n1] = b;
                            assignment[n2] = a;
                            (owned[a], owned[b], owned[c]) = (sa, b_gain, sc);
                            (cost[a], cost[b], cost[c]) = (new_a, new_b, new_c);
                            return true;
                        }
                    }
                    if c == b {
                        let sa = edit(&owned[a], Some(n1), None);
                        let sb = edit(&owned[b], Some(n2), Some(n1));
                        let (new_a, new_b2) = (self.cost_of(a, &sa), self.cost_of(b, &sb));
                        for d in 0..msgs {
                            if d == a || d == b || !finite(d, n2) {
                                continue;
                            }
                            let sd = edit(&owned[d], None, Some(n2));
                            let new_d = self.cost_of(d, &sd);
                            if new_a + new_b2 + new_d < (cost[a] + cost[b] + cost[d]) * (1.0 - 1e-12) {
                                assignment[n1] = b;
                                assignment[n2] = d;
                                (owned[a], owned[b], owned[d]) = (sa, sb, sd);
                                (cost[a], cost[b], cost[d]) = (new_a, new_b2, new_d);
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }

    /// Re-solves every pair, then every triple, of messages exactly over the
    /// subcarriers they hold together, skipping groups with more than
    /// `REGROUP_LIMIT` candidate splits.
    fn regroup_all(&self, assignment: &mut [usize], owned: &mut [Vec<usize>], cost: &mut [f64]) -> bool {
        let msgs = self.quotes.len();
        for a in 0..msgs {
            for b in (a + 1)..msgs {
                if self.regroup(assignment, owned, cost, &[a, b]) {
                    return true;
                }
            }
        }
        for a in 0..msgs {
            for b in (a + 1)..msgs {
                for c in (b + 1)..msgs {
                    if self.regroup(assignment, owned, cost, &[a, b, c]) {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn regroup(&self, assignment: &mut [usize], owned: &mut [Vec<usize>], cost: &mut [f64], group: &[usize]) -> bool {
        let pool: Vec<usize> = group.iter().flat_map(|&m| owned[m].iter().copied()).collect();
        let g = group.len();
        if (g as f64).powi(pool.len() as i32) > REGROUP_LIMIT {
            return false;
        }
        let current: f64 = group.iter().map(|&m| cost[m]).sum();
        let mut pick = vec![0usize; pool.len()];
        let mut best: Option<(f64, Vec<usize>)> = None;
        loop {
            let mut subs = vec![Vec::new(); g];
            for (i, &n) in pool.iter().enumerate() {
                subs[pick[i]].push(n);
            }
            let total: f64 = group.iter().zip(&subs).map(|(&m, s)| self.cost_of(m, s)).sum();
            if total < best.as_ref().map_or(current * (1.0 - 1e-12), |(c, _)| *c) {
                best = Some((total, pick.clone()));
            }
            // odometer in base g
            let mut i = 0;
            while i < pick.len() {
                pick[i] += 1;
                if pick[i] < g {
                    break;
                }
                pick[i] = 0;
                i += 1;
            }
            if i == pick.len() {
                break;
            }
        }
        let Some((_, pick)) = best else { return false };
        for &m in group {
            owned[m].clear();
        }
        for (i, &n) in pool.iter().enumerate() {
            let m = group[pick[i]];
            assignment[n] = m;
            owned[m].push(n);
        }
        for &m in group {
            cost[m] = self.cost_of(m, &owned[m]);
        }
        true
    }

    /// Turns an assignment into powers and rates by per-message water-filling.
    fn materialise(&self, assignment: Vec<usize>, stats: SolveStats<T>) -> Result<Allocation<T>> {
        let n_sc = assignment.len();
        let b = self.problem.bandwidth_hz;
        let mut power = vec![T::zero(); n_sc];
        let mut rate = vec![T::zero(); n_sc];
        for (m, subs) in self.owned(&assignment).iter().enumerate() {
            if subs.is_empty() {
                return Err(Error::Infeasible { message: m, reason: "no subcarrier assigned" });
            }
            let mut q: Vec<f64> = subs.iter().map(|&n| self.quotes[m][n]).collect();
            let (level, total) = water_level(&mut q, self.demand[m]);
            if !total.is_finite() {
                return Err(Error::Infeasible { message: m, reason: "assigned subcarriers have infinite quotes" });
            }
            for &n in subs {
                let qn = self.quotes[m][n];
                if qn < level {
                    power[n] = T::of(level - qn);
                    rate[n] = b * (T::one() + power[n] / self.problem.quotes[m][n]).log2();
                }
            }
        }
        let mut alloc = Allocation {
            assignment,
            power,
            rate,
            beams: Vec::new(),
            total_power_w: T::zero(),
            antennas: self.problem.antennas,
            stats,
        };
        alloc.recompute_total();
        Ok(alloc)
    }
}

/// Dual-iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSettings {
    pub max_iter: usize,
    /// Relative duality gap, or relative gain of the best dual bound over
    /// `window` iterations, that counts as converged.
    pub tol: f64,
    pub window: usize,
    /// Initial step `δ_0` (relative to each message's water level).
    pub step0: f64,
    /// Step decay constant `τ` in `δ_i = δ_0 / (1 + i / τ)`.
    pub step_tau: f64,
    /// Polish the best assignment with the local search.
    pub local_search: bool,
}

impl Default for DualSettings {
    fn default() -> Self {
        DualSettings { max_iter: 5000, tol: 1e-6, window: 200, step0: 0.5, step_tau: 50.0, local_search: true }
    }
}

/// Dual decomposition for the quoted allocation problem.
pub fn solve_quoted_allocation<T: Real>(problem: &QuotedProblem<T>, settings: &DualSettings) -> Result<Allocation<T>> {
    problem.validate()?;
    let ws = Workspace::new(problem);
    let msgs = problem.messages();
    let n_sc = problem.subcarriers();
    let b = problem.bandwidth_hz.to_f64_lossy();

    // Water levels L_m = γ_m B / ln 2, initialised as if each message had a fair share of its best subcarriers.
    let share = n_sc.div_ceil(msgs).max(1);
    let mut level: Vec<f64> = (0..msgs)
        .map(|m| {
            let mut q = ws.quotes[m].clone();
            q.sort_by(|a, b| a.partial_cmp(b).unwrap());
            q.truncate(share);
            water_level(&mut q, ws.demand[m]).0
        })
        .collect();
    let level_floor: Vec<f64> = ws
        .quotes
        .iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut best_dual = f64::NEG_INFINITY;
    let mut history: Vec<f64> = Vec::with_capacity(settings.max_iter);
    let mut converged = false;
    let mut unique = true;
    let mut iterations = 0;
    let mut assignment = vec![0usize; n_sc];

    for i in 0..settings.max_iter {
        iterations = i + 1;
        let mut delivered = vec![0.0; msgs];
        let mut dual = 0.0;
        unique = true;
        for n in 0..n_sc {
            let (mut arg, mut top, mut second) = (0usize, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for m in 0..msgs {
                let g = assignment_gain(level[m] * LN_2 / b, ws.quotes[m][n], b);
                if g > top {
                    second = top;
                    top = g;
                    arg = m;
                } else if g > second {
                    second = g;
                }
            }
            if msgs > 1 && top - second <= 1e-12 * top.abs().max(f64::MIN_POSITIVE) {
                unique = false;
            }
            assignment[n] = arg;
            let q = ws.quotes[arg][n];
            if level[arg] > q {
                delivered[arg] += (level[arg] / q).log2();
            }
            dual -= top;
        }
        for m in 0..msgs {
            // γ_m d_m with γ_m = L_m ln2 / B and d_m = x_m B
            dual += level[m] * LN_2 * ws.demand[m];
        }
        best_dual = best_dual.max(dual);
        history.push(best_dual);

        let mut candidate = assignment.clone();
        ws.repair(&mut candidate);
        let cost = ws.total_cost(&candidate);
        if cost.is_finite() && best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, candidate));
        }

        // duality gap closed: the best priced assignment is optimal to tol
        if best.as_ref().is_some_and(|(c, _)| *c - best_dual <= settings.tol * c.abs()) {
            converged = true;
            break;
        }
        if history.len() > settings.window {
            let old = history[history.len() - 1 - settings.window];
            if best_dual - old <= settings.tol * best_dual.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }

        let step = settings.step0 / (1.0 + i as f64 / settings.step_tau);
        for m in 0..msgs {
            let scale = level[m].max(level_floor[m]);
            level[m] = (level[m] + step * scale * (ws.demand[m] - delivered[m])).max(0.0);
        }
    }

    let Some((_, mut chosen)) = best else {
        return Err(Error::Infeasible { message: 0, reason: "no assignment serves every message" });
    };
    if settings.local_search {
        ws.polish(&mut chosen);
    }
    let scale = problem.power_scale().to_f64_lossy();
    let stats = SolveStats { iterations, converged, unique_argmax: unique, dual_bound: T::of(best_dual * scale) };
    ws.materialise(chosen, stats)
}

/// Optimal powers and rates for a given assignment (`assignment[n]` = message).
pub fn allocate_assignment<T: Real>(problem: &QuotedProblem<T>, assignment: Vec<usize>) -> Result<Allocation<T>> {
    problem.validate()?;
    if assignment.len() != problem.subcarriers() {
        return Err(Error::LengthMismatch { left: assignment.len(), right: problem.subcarriers() });
    }
    if let Some(&m) = assignment.iter().find(|&&m| m >= problem.messages()) {
        return Err(Error::Infeasible { message: m, reason: "assignment names an unknown message" });
    }
    Workspace::new(problem).materialise(assignment, SolveStats::default())
}

/// Most splits the local search enumerates when re-solving a group of messages.
const REGROUP_LIMIT: f64 = 4096.0;

/// Largest instance `brute_force_allocation` accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e5;

/// Exhaustive search over every assignment; per-message powers by bisection
/// on the water level.
pub fn brute_force_allocation<T: Real>(problem: &QuotedProblem<T>) -> Result<Allocation<T>> {
    let msgs = problem.messages();
    let n_sc = problem.subcarriers();
    let count = (msgs as f64).powi(n_sc as i32);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge { assignments: count });
    }
    problem.validate()?;
    let quotes: Vec<Vec<f64>> = problem.quotes.iter().map(|r| r.iter().map(|q| q.to_f64_lossy()).collect()).collect();
    let demand: Vec<f64> = (0..msgs).map(|m| problem.spectral_demand(m)).collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut assignment = vec![0usize; n_sc];
    loop {
        let mut total = 0.0;
        for m in 0..msgs {
            let q: Vec<f64> = (0..n_sc).filter(|&n| assignment[n] == m).map(|n| quotes[m][n]).collect();
            total += bisection_cost(&q, demand[m]);
            if !total.is_finite() {
                break;
            }
        }
        if total.is_finite() && best.as_ref().is_none_or(|(c, _)| total < *c) {
            best = Some((total, assignment.clone()));
        }
        // odometer increment
        let mut i = 0;
        while i < n_sc {
            assignment[i] += 1;
            if assignment[i] < msgs {
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
        if i == n_sc {
            break;
        }
    }
    let Some((_, chosen)) = best else {
        return Err(Error::Infeasible { message: 0, reason: "no assignment serves every message" });
    };

    let b = problem.bandwidth_hz;
    let mut power = vec![T::zero(); n_sc];
    let mut rate = vec![T::zero(); n_sc];
    for m in 0..msgs {
        let subs: Vec<usize> = (0..n_sc).filter(|&n| chosen[n] == m).collect();
        let q: Vec<f64> = subs.iter().map(|&n| quotes[m][n]).collect();
        let level = bisection_level(&q, demand[m]);
        for &n in &subs {
            let p = (level - quotes[m][n]).max(0.0);
            power[n] = T::of(p);
            rate[n] = b * (T::one() + power[n] / problem.quotes[m][n]).log2();
        }
    }
    let mut alloc = Allocation {
        assignment: chosen,
        power,
        rate,
        beams: Vec::new(),
        total_power_w: T::zero(),
        antennas: problem.antennas,
        stats: SolveStats::default(),
    };
    alloc.recompute_total();
    Ok(alloc)
}

fn bisection_level(quotes: &[f64], x: f64) -> f64 {
    let finite: Vec<f64> = quotes.iter().copied().filter(|q| q.is_finite()).collect();
    if finite.is_empty() {
        return f64::INFINITY;
    }
    let bits = |level: f64| -> f64 { finite.iter().map(|&q| (level / q).max(1.0).log2()).sum() };
    let mut lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = lo * 2.0;
    while bits(hi) < x {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bits(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

fn bisection_cost(quotes: &[f64], x: f64) -> f64 {
    let level = bisection_level(quotes, x);
    if !level.is_finite() {
        return f64::INFINITY;
    }
    quotes.iter().filter(|q| q.is_finite()).map(|&q| (level - q).max(0.0)).sum()
}

/// Attaches the plan's beam of each assigned pair and recomputes rates from
/// the quotes, giving a solution of the full beamforming problem.
pub fn assemble_plan<T: Real>(alloc: &Allocation<T>, plan: &BeamPlan<T>, bandwidth_hz: T) -> Result<Allocation<T>> {
    let mut out = alloc.clone();
    out.beams = Vec::with_capacity(alloc.assignment.len());
    for (n, &m) in alloc.assignment.iter().enumerate() {
        let entry = plan
            .entries
            .get(m)
            .and_then(|row| row.get(n))
            .ok_or(Error::MissingBeam { message: m, subcarrier: n })?;
        let q = entry.quote.0;
        let beam = match entry.direction.normalized() {
            Some(w) => w,
            None if alloc.power[n] == T::zero() => {
                let mut e = CVec::zeros(entry.direction.len().max(1));
                e[0] = num_complex::Complex::new(T::one(), T::zero());
                e
            }
            None => return Err(Error::MissingBeam { message: m, subcarrier: n }),
        };
        out.rate[n] = if alloc.power[n] > T::zero() {
            if !q.is_finite() {
                return Err(Error::MissingBeam { message: m, subcarrier: n });
            }
            bandwidth_hz * (T::one() + alloc.power[n] / q).log2()
        } else {
            T::zero()
        };
        out.beams.push(beam);
    }
    Ok(out)
}
