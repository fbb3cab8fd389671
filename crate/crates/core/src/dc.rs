//! Difference-of-convex solver for finite antenna arrays.
//!
//! With `W = sqrt(η μ) w` the rate constraint becomes
//! `μ (2^{c/(Bμ)} − 1) ≤ β |h^H W|² / (Mσ²)`, whose right side is convex in
//! `W`. Each outer iteration replaces it by its tangent at the previous point
//! `W̄`,
//!
//! ```text
//! μ (2^{c/(Bμ)} − 1) ≤ (2β Re{W̄^H h h^H W} − β |h^H W̄|²) / (Mσ²),
//! ```
//!
//! and solves the resulting convex problem. The tangent under-estimates the
//! original right side, so every iterate stays feasible and the objective
//! `E = (1/M) Σ ‖W‖²` never increases.
//!
//! A pair with `W̄ = 0` gets a tangent of zero and cannot carry rate, so from
//! a binary starting point the support stays fixed and the convex problem
//! splits per message. For one pair and target SNR `s`,
//! `φ(s) = min ‖W‖²  s.t.  Re⟨u_k, W⟩ ≥ s + b_k` with
//! `u_k = (2β_k/(Mσ²)) (h_k^H W̄) h_k` and `b_k = β_k |h_k^H W̄|² / (Mσ²)`, a
//! small QP solved exactly by active-set enumeration. The message then solves
//! `min Σ φ_n(s_n)  s.t.  Σ log2(1 + s_n) ≥ d / B` by bisection on its dual.
//!
//! Recovery of a binary point from the duals uses [`g_value`], [`mu_rule`],
//! [`c_rule`], [`w_rule`] and [`subgrad_step`]. The final point keeps the
//! recovered directions and re-runs water-filling over their quotes.
//!
//! Internally everything runs in `f64`.

use std::f64::consts::LN_2;

use num_complex::Complex;

use crate::beamforming::{audience_channels, plan_beams, quote_for, BeamEntry, BeamPlan, BeamRule, MulticastMrt, PowerQuote, Receiver};
use crate::channel::{ChannelState, GaussianSource};
use crate::cxkernel::{axpy_outer, cdot, CVec};
use crate::error::{Error, Result};
use crate::ofdma::{allocate_assignment, assemble_plan, solve_quoted_allocation, Allocation, DualSettings, QuotedProblem, SolveStats};
use crate::partition::Message;
use crate::scalar::Real;

/// How the first feasible point is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// Large-array closed-form beams with optimal allocation.
    #[default]
    Asymptotic,
    /// Principal-eigenvector multicast beams with optimal allocation.
    MulticastMrt,
    /// Both of the above; [`dc_solve`] iterates from each and keeps the
    /// lower final power, [`initial_point`] returns the cheaper start.
    BestOf,
    /// Random beam directions with optimal allocation.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcSettings {
    /// Maximum outer (linearisation) iterations per round.
    pub outer_max: usize,
    /// Relative decrease of `E` below which a round stops.
    pub tol: f64,
    pub init: InitStrategy,
    /// Settings of the quoted allocation used for the start and the final re-allocation.
    pub dual: DualSettings,
    /// Dual iterations of the recovery stage.
    pub recovery_iters: usize,
    /// Extra rounds started from a re-allocated assignment when it changes.
    pub restarts: usize,
}

impl Default for DcSettings {
    fn default() -> Self {
        DcSettings {
            outer_max: 100,
            tol: 1e-4,
            init: InitStrategy::Asymptotic,
            dual: DualSettings::default(),
            recovery_iters: 50,
            restarts: 2,
        }
    }
}

/// Iterate of the relaxed problem, indexed `[message][subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DcState<T> {
    pub w: Vec<Vec<CVec<T>>>,
    pub mu: Vec<Vec<T>>,
    /// Rates, bits/s.
    pub c: Vec<Vec<T>>,
    pub t: usize,
    /// `E = (1/M) Σ ‖W‖²`.
    pub objective_w: T,
}

/// Multipliers: `gamma[m]` for the demand of message `m` (per bit/s/Hz) and
/// `lambda[m][n][k]` for the tangent constraint of the `k`-th audience member.
#[derive(Debug, Clone, PartialEq)]
pub struct DcDuals<T> {
    pub gamma: Vec<T>,
    pub lambda: Vec<Vec<Vec<T>>>,
}

/// Constraint residuals driving [`subgrad_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals<T> {
    /// Unmet demand per message (positive when short).
    pub demand: Vec<T>,
    /// Tangent-constraint value per `[message][subcarrier][member]` (positive when violated).
    pub violation: Vec<Vec<Vec<T>>>,
}

/// Starting point of the DC iterations.
#[derive(Debug, Clone)]
pub struct InitialPoint<T> {
    pub state: DcState<T>,
    pub allocation: Allocation<T>,
    pub plan: BeamPlan<T>,
}

#[derive(Debug, Clone)]
pub struct DcReport<T> {
    pub allocation: Allocation<T>,
    /// `E^(t)` for the starting point and each outer iteration, across rounds.
    pub history: Vec<T>,
    pub initial_power_w: T,
    pub outer_iterations: usize,
    pub converged: bool,
    pub unique_argmax: bool,
    /// Outer steps whose objective came out above the previous one and were discarded.
    pub rejected_steps: usize,
}

/// Per-subcarrier score of a message at duals `(γ, Σλ)`, with `γ` per bit/s/Hz.
///
/// `γ log2(r) − γ/ln2 + Σλ` for `r = γ/(ln2 Σλ) > 1`, else 0. A pair with
/// `Σλ = 0` and `γ > 0` has no usable tangent and scores `−∞`.
pub fn g_value<T: Real>(gamma: T, lambda_sum: T) -> T {
    if lambda_sum <= T::zero() {
        return if gamma > T::zero() { T::neg_infinity() } else { T::zero() };
    }
    if gamma <= T::zero() {
        return T::zero();
    }
    let r = gamma / (T::LN_2() * lambda_sum);
    if r <= T::one() {
        T::zero()
    } else {
        gamma * r.log2() - gamma / T::LN_2() + lambda_sum
    }
}

/// Argmax of the scores on one subcarrier, ties to the smallest message id.
/// Returns the winner and whether it was strict.
pub fn mu_rule<T: Real>(subcarrier: usize, g: &[T]) -> Result<(usize, bool)> {
    let mut best: Option<usize> = None;
    for (m, &v) in g.iter().enumerate() {
        if v == T::neg_infinity() || v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v > g[b]) {
            best = Some(m);
        }
    }
    let Some(b) = best else { return Err(Error::NoAssignment { subcarrier }) };
    let top = g[b];
    let tol = T::of(1e-12) * top.abs().max(T::min_positive_value());
    let unique = g.iter().enumerate().all(|(m, &v)| m == b || !(top - v <= tol));
    Ok((b, unique))
}

/// Rate `μ B [log2(γ/(ln2 Σλ))]⁺`, bits/s.
pub fn c_rule<T: Real>(gamma: T, lambda_sum: T, mu: bool, bandwidth_hz: T) -> T {
    if !mu || gamma <= T::zero() {
        return T::zero();
    }
    if lambda_sum <= T::zero() {
        return T::infinity();
    }
    bandwidth_hz * (gamma / (T::LN_2() * lambda_sum)).log2().max(T::zero())
}

/// Tangent-constraint value for one audience member; positive when violated.
pub fn tangent_violation<T: Real>(mu: bool, c: T, w: &CVec<T>, w_prev: &CVec<T>, rx: &Receiver<'_, T>, snr_scale: T, bandwidth_hz: T) -> Result<T> {
    let a_prev = cdot(rx.h, w_prev)?;
    let a_new = cdot(rx.h, w)?;
    let need = if mu { (c / bandwidth_hz).exp2() - T::one() } else { T::zero() };
    let two = T::of(2.0);
    Ok(need - two * rx.beta * (a_prev.conj() * a_new).re / snr_scale + rx.beta * a_prev.norm_sqr() / snr_scale)
}

/// Beam for one pair from the tangent multipliers: the direction
/// `Σ λ_k β_k h_k (h_k^H W̄)`, scaled by the smallest `α ≥ 0` meeting every
/// tangent constraint at rate `c`.
#[allow(clippy::too_many_arguments)]
pub fn w_rule<T: Real>(
    lambda: &[T],
    rx: &[Receiver<'_, T>],
    w_prev: &CVec<T>,
    mu: bool,
    c: T,
    snr_scale: T,
    bandwidth_hz: T,
) -> Result<CVec<T>> {
    if lambda.len() != rx.len() {
        return Err(Error::LengthMismatch { left: lambda.len(), right: rx.len() });
    }
    let mut d = CVec::zeros(w_prev.len());
    for (l, r) in lambda.iter().zip(rx) {
        let term = axpy_outer(w_prev, r.h, *l * r.beta)?;
        d.add_scaled(Complex::new(T::one(), T::zero()), &term);
    }
    if !mu || d.is_zero() {
        return Ok(CVec::zeros(w_prev.len()));
    }
    let need = (c / bandwidth_hz).exp2() - T::one();
    let mut alpha = T::zero();
    for r in rx {
        let a_prev = cdot(r.h, w_prev)?;
        let num = need + r.beta * a_prev.norm_sqr() / snr_scale;
        let den = T::of(2.0) * r.beta * (cdot(w_prev, r.h)? * cdot(r.h, &d)?).re / snr_scale;
        if !(den > T::zero()) {
            return Err(Error::InfeasibleDirection { user: r.user });
        }
        alpha = alpha.max(num / den);
    }
    Ok(d.scaled(alpha))
}

/// Projected subgradient step: `γ ← [γ + δ·demand]⁺`, `λ ← [λ + δ·violation]⁺`.
pub fn subgrad_step<T: Real>(duals: &DcDuals<T>, residuals: &Residuals<T>, delta: T) -> Result<DcDuals<T>> {
    if duals.gamma.len() != residuals.demand.len() {
        return Err(Error::LengthMismatch { left: duals.gamma.len(), right: residuals.demand.len() });
    }
    if duals.lambda.len() != residuals.violation.len() {
        return Err(Error::LengthMismatch { left: duals.lambda.len(), right: residuals.violation.len() });
    }
    let gamma = duals.gamma.iter().zip(&residuals.demand).map(|(g, r)| (*g + delta * *r).max(T::zero())).collect();
    let mut lambda = duals.lambda.clone();
    for (lm, vm) in lambda.iter_mut().zip(&residuals.violation) {
        if lm.len() != vm.len() {
            return Err(Error::LengthMismatch { left: lm.len(), right: vm.len() });
        }
        for (ln, vn) in lm.iter_mut().zip(vm) {
            if ln.len() != vn.len() {
                return Err(Error::LengthMismatch { left: ln.len(), right: vn.len() });
            }
            for (l, v) in ln.iter_mut().zip(vn) {
                *l = (*l + delta * *v).max(T::zero());
            }
        }
    }
    Ok(DcDuals { gamma, lambda })
}

fn to64<T: Real>(v: &CVec<T>) -> CVec<f64> {
    CVec(v.iter().map(|z| Complex::new(z.re.to_f64_lossy(), z.im.to_f64_lossy())).collect())
}

fn from64<T: Real>(v: &CVec<f64>) -> CVec<T> {
    CVec(v.iter().map(|z| Complex::new(T::of(z.re), T::of(z.im))).collect())
}

fn channel64<T: Real>(chan: &ChannelState<T>) -> ChannelState<f64> {
    ChannelState {
        antennas: chan.antennas,
        subcarriers: chan.subcarriers,
        users: chan.users,
        bandwidth_hz: chan.bandwidth_hz.to_f64_lossy(),
        noise_w: chan.noise_w.to_f64_lossy(),
        beta: chan.beta.iter().map(|b| b.to_f64_lossy()).collect(),
        h: chan.h.iter().map(|row| row.iter().map(to64).collect()).collect(),
    }
}

fn allocation_from64<T: Real>(a: &Allocation<f64>) -> Allocation<T> {
    Allocation {
        assignment: a.assignment.clone(),
        power: a.power.iter().map(|&p| T::of(p)).collect(),
        rate: a.rate.iter().map(|&r| T::of(r)).collect(),
        beams: a.beams.iter().map(from64).collect(),
        total_power_w: T::of(a.total_power_w),
        antennas: a.antennas,
        stats: SolveStats {
            iterations: a.stats.iterations,
            converged: a.stats.converged,
            unique_argmax: a.stats.unique_argmax,
            dual_bound: T::of(a.stats.dual_bound),
        },
    }
}

fn state_from64<T: Real>(s: &DcState<f64>) -> DcState<T> {
    let conv = |v: &Vec<Vec<f64>>| v.iter().map(|r| r.iter().map(|&x| T::of(x)).collect()).collect();
    DcState {
        w: s.w.iter().map(|r| r.iter().map(from64).collect()).collect(),
        mu: conv(&s.mu),
        c: conv(&s.c),
        t: s.t,
        objective_w: T::of(s.objective_w),
    }
}

fn state_to64<T: Real>(s: &DcState<T>) -> DcState<f64> {
    let conv = |v: &Vec<Vec<T>>| v.iter().map(|r| r.iter().map(|x| x.to_f64_lossy()).collect()).collect();
    DcState {
        w: s.w.iter().map(|r| r.iter().map(to64).collect()).collect(),
        mu: conv(&s.mu),
        c: conv(&s.c),
        t: s.t,
        objective_w: s.objective_w.to_f64_lossy(),
    }
}

/// Lifts a Problem-1 allocation (with beams) to `W = sqrt(η) w`.
fn state_from_allocation(alloc: &Allocation<f64>, messages: usize) -> DcState<f64> {
    let n_sc = alloc.assignment.len();
    let m_ant = alloc.beams.first().map_or(0, CVec::len);
    let mut w = vec![vec![CVec::zeros(m_ant); n_sc]; messages];
    let mut mu = vec![vec![0.0; n_sc]; messages];
    let mut c = vec![vec![0.0; n_sc]; messages];
    for (n, &m) in alloc.assignment.iter().enumerate() {
        mu[m][n] = 1.0;
        c[m][n] = alloc.rate[n];
        if alloc.power[n] > 0.0 {
            w[m][n] = alloc.beams[n].scaled(alloc.power[n].sqrt());
        }
    }
    DcState { w, mu, c, t: 0, objective_w: alloc.total_power_w }
}

fn start_from_plan(chan: &ChannelState<f64>, messages: &[Message], plan: BeamPlan<f64>, dual: &DualSettings) -> Result<InitialPoint<f64>> {
    let problem = QuotedProblem::new(messages, plan.quotes(), chan.bandwidth_hz, chan.antennas);
    let alloc = solve_quoted_allocation(&problem, dual)?;
    let allocation = assemble_plan(&alloc, &plan, chan.bandwidth_hz)?;
    let state = state_from_allocation(&allocation, messages.len());
    Ok(InitialPoint { state, allocation, plan })
}

fn random_plan(chan: &ChannelState<f64>, messages: &[Message], seed: u64) -> Result<BeamPlan<f64>> {
    let mut src = GaussianSource::new(seed);
    let scale = chan.snr_scale();
    let mut entries = Vec::with_capacity(messages.len());
    for msg in messages {
        let mut row = Vec::with_capacity(chan.subcarriers);
        for n in 0..chan.subcarriers {
            let raw = CVec((0..chan.antennas).map(|_| src.complex_normal()).map(|(re, im)| Complex::new(re, im)).collect());
            let direction = raw.normalized().ok_or(Error::DegenerateChannel("random direction drew zero"))?;
            let rx = audience_channels(chan, n, msg.audience);
            let quote = quote_for(&direction, &rx, scale).unwrap_or_else(|_| PowerQuote::infinite());
            row.push(BeamEntry { direction, quote });
        }
        entries.push(row);
    }
    Ok(BeamPlan { entries })
}

fn initial_point64(chan: &ChannelState<f64>, messages: &[Message], strategy: InitStrategy, dual: &DualSettings) -> Result<InitialPoint<f64>> {
    if messages.is_empty() {
        return Err(Error::InvalidConfig("no messages to transmit".into()));
    }
    match strategy {
        InitStrategy::Asymptotic => start_from_plan(chan, messages, plan_beams(chan, messages, BeamRule::Asymptotic)?, dual),
        InitStrategy::MulticastMrt => {
            start_from_plan(chan, messages, plan_beams(chan, messages, BeamRule::MrtMulticast(MulticastMrt::Eigen))?, dual)
        }
        InitStrategy::BestOf => {
            let a = initial_point64(chan, messages, InitStrategy::Asymptotic, dual);
            let b = initial_point64(chan, messages, InitStrategy::MulticastMrt, dual);
            match (a, b) {
                (Ok(a), Ok(b)) => Ok(if b.allocation.total_power_w < a.allocation.total_power_w { b } else { a }),
                (Ok(a), Err(_)) => Ok(a),
                (Err(_), Ok(b)) => Ok(b),
                (Err(e), Err(_)) => Err(e),
            }
        }
        InitStrategy::Random { seed } => start_from_plan(chan, messages, random_plan(chan, messages, seed)?, dual),
    }
}

/// Builds a feasible binary starting point and its beam plan.
pub fn initial_point<T: Real>(chan: &ChannelState<T>, messages: &[Message], strategy: InitStrategy, dual: &DualSettings) -> Result<InitialPoint<T>> {
    let p = initial_point64(&channel64(chan), messages, strategy, dual)?;
    Ok(InitialPoint {
        state: state_from64(&p.state),
        allocation: allocation_from64(&p.allocation),
        plan: BeamPlan {
            entries: p
                .plan
                .entries
                .iter()
                .map(|row| row.iter().map(|e| BeamEntry { direction: from64(&e.direction), quote: PowerQuote(T::of(e.quote.0)) }).collect())
                .collect(),
        },
    })
}

/// Solves `G_AA x = rhs` for several right-hand sides by Gaussian elimination.
fn solve_dense(mut a: Vec<f64>, n: usize, mut rhs: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())?;
        if a[piv * n + col].abs() <= 1e-13 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            for r in rhs.iter_mut() {
                r.swap(piv, col);
            }
        }
        for row in (col + 1)..n {
            let f = a[row * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            for r in rhs.iter_mut() {
                r[row] -= f * r[col];
            }
        }
    }
    for r in rhs.iter_mut() {
        for row in (0..n).rev() {
            let mut v = r[row];
            for k in (row + 1)..n {
                v -= a[row * n + k] * r[k];
            }
            r[row] = v / a[row * n + row];
        }
    }
    Some(rhs)
}

/// Solution of one pair's QP at a given SNR target.
#[derive(Debug, Clone)]
struct QpPoint {
    nu: Vec<f64>,
    phi: f64,
    /// `φ'(s) = 2 Σ ν`.
    dphi: f64,
    /// `Σν = p s + r` on the current active set; NaN when unknown.
    p: f64,
    r: f64,
}

const ENUMERATION_LIMIT: usize = 12;

/// `min ‖W‖²  s.t.  Re⟨u_k, W⟩ ≥ s + b_k`, with `W = Σ ν_k u_k`.
#[derive(Debug, Clone)]
struct PairQp {
    /// Audience positions that carry a constraint (`u_k ≠ 0`).
    members: Vec<usize>,
    audience: usize,
    u: Vec<CVec<f64>>,
    gram: Vec<f64>,
    b: Vec<f64>,
    /// Some member sees a zero tangent, forcing `s = 0`.
    locked: bool,
    active: Vec<bool>,
}

impl PairQp {
    fn new(w_bar: &CVec<f64>, rx: &[Receiver<'_, f64>], snr_scale: f64) -> Result<Self> {
        let mut members = Vec::new();
        let mut u = Vec::new();
        let mut b = Vec::new();
        let mut locked = false;
        for (i, r) in rx.iter().enumerate() {
            let a = cdot(r.h, w_bar)?;
            let uk = axpy_outer(w_bar, r.h, 2.0 * r.beta / snr_scale)?;
            if a.norm_sqr() == 0.0 || uk.is_zero() {
                locked = true;
                continue;
            }
            members.push(i);
            b.push(r.beta * a.norm_sqr() / snr_scale);
            u.push(uk);
        }
        let k = u.len();
        let mut gram = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let g = cdot(&u[i], &u[j])?.re;
                gram[i * k + j] = g;
                gram[j * k + i] = g;
            }
        }
        Ok(PairQp { members, audience: rx.len(), u, gram, b, locked, active: vec![true; k] })
    }

    fn size(&self) -> usize {
        self.u.len()
    }

    fn try_active(&self, active: &[bool], s: f64) -> Option<QpPoint> {
        let k = self.size();
        let idx: Vec<usize> = (0..k).filter(|&i| active[i]).collect();
        let na = idx.len();
        if na == 0 {
            return None;
        }
        let mut a = vec![0.0; na * na];
        for (ii, &i) in idx.iter().enumerate() {
            for (jj, &j) in idx.iter().enumerate() {
                a[ii * na + jj] = self.gram[i * k + j];
            }
        }
        let target: Vec<f64> = idx.iter().map(|&i| s + self.b[i]).collect();
        let ones = vec![1.0; na];
        let bs: Vec<f64> = idx.iter().map(|&i| self.b[i]).collect();
        let sol = solve_dense(a, na, vec![target, ones, bs])?;
        let (x, x1, xb) = (&sol[0], &sol[1], &sol[2]);
        let top = x.iter().copied().fold(0.0, f64::max);
        if x.iter().any(|&v| v < -1e-12 * top) {
            return None;
        }
        let mut nu = vec![0.0; k];
        for (ii, &i) in idx.iter().enumerate() {
            nu[i] = x[ii].max(0.0);
        }
        let g_nu: Vec<f64> = (0..k).map(|i| (0..k).map(|j| self.gram[i * k + j] * nu[j]).sum()).collect();
        for i in 0..k {
            if !active[i] && g_nu[i] < (s + self.b[i]) * (1.0 - 1e-12) {
                return None;
            }
        }
        let phi = nu.iter().zip(&g_nu).map(|(a, b)| a * b).sum();
        let sum: f64 = nu.iter().sum();
        Some(QpPoint { nu, phi, dphi: 2.0 * sum, p: x1.iter().sum(), r: xb.iter().sum() })
    }

    fn hildreth(&self, s: f64) -> QpPoint {
        let k = self.size();
        let a: Vec<f64> = self.b.iter().map(|b| s + b).collect();
        let mut nu = vec![0.0; k];
        for _ in 0..100_000 {
            let mut worst: f64 = 0.0;
            for i in 0..k {
                let g: f64 = (0..k).map(|j| self.gram[i * k + j] * nu[j]).sum();
                let step = (a[i] - g) / self.gram[i * k + i];
                let next = (nu[i] + step).max(0.0);
                worst = worst.max((next - nu[i]).abs() * self.gram[i * k + i] / a[i]);
                nu[i] = next;
            }
            if worst < 1e-14 {
                break;
            }
        }
        let g_nu: Vec<f64> = (0..k).map(|i| (0..k).map(|j| self.gram[i * k + j] * nu[j]).sum()).collect();
        let phi = nu.iter().zip(&g_nu).map(|(a, b)| a * b).sum();
        let sum: f64 = nu.iter().sum();
        QpPoint { nu, phi, dphi: 2.0 * sum, p: f64::NAN, r: f64::NAN }
    }

    fn solve(&mut self, s: f64) -> QpPoint {
        let k = self.size();
        if k == 0 {
            return QpPoint { nu: Vec::new(), phi: 0.0, dphi: 0.0, p: f64::NAN, r: f64::NAN };
        }
        if let Some(pt) = self.try_active(&self.active, s) {
            return pt;
        }
        if k <= ENUMERATION_LIMIT {
            for size in 1..=k {
                for mask in 1u32..(1u32 << k) {
                    if mask.count_ones() as usize != size {
                        continue;
                    }
                    let active: Vec<bool> = (0..k).map(|i| mask & (1 << i) != 0).collect();
                    if let Some(pt) = self.try_active(&active, s) {
                        self.active = active;
                        return pt;
                    }
                }
            }
        }
        let pt = self.hildreth(s);
        let active: Vec<bool> = pt.nu.iter().map(|&v| v > 0.0).collect();
        if let Some(refined) = self.try_active(&active, s) {
            self.active = active;
            return refined;
        }
        pt
    }

    fn beam(&self, pt: &QpPoint, antennas: usize) -> CVec<f64> {
        let mut w = CVec::zeros(antennas);
        for (nu, u) in pt.nu.iter().zip(&self.u) {
            if *nu > 0.0 {
                w.add_scaled(Complex::new(*nu, 0.0), u);
            }
        }
        w
    }

    /// Multipliers over the full audience, `λ_k = 2 ν_k / M`.
    fn lambdas(&self, pt: &QpPoint, antennas: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.audience];
        for (i, &pos) in self.members.iter().enumerate() {
            out[pos] = 2.0 * pt.nu[i] / antennas as f64;
        }
        out
    }

    /// SNR target where `κ (1 + s) φ'(s) = γ`, and the QP solution there.
    fn snr_for(&mut self, gamma: f64, kappa: f64) -> (f64, QpPoint) {
        let zero = self.solve(0.0);
        if self.locked || kappa * zero.dphi >= gamma {
            return (0.0, zero);
        }
        let f = |pt: &QpPoint, s: f64| kappa * (1.0 + s) * pt.dphi;
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut pt = zero;
        let mut s = 0.0;
        for _ in 0..300 {
            let mut cand = closed_form_root(pt.p, pt.r, gamma / (2.0 * kappa)).unwrap_or(f64::NAN);
            if !(cand > lo && cand < hi) {
                cand = if hi.is_finite() { 0.5 * (lo + hi) } else { (2.0 * lo).max(1.0) };
            }
            s = cand;
            pt = self.solve(s);
            let fs = f(&pt, s);
            if (fs - gamma).abs() <= 1e-13 * gamma {
                break;
            }
            if fs < gamma {
                lo = s;
            } else {
                hi = s;
            }
            if hi.is_finite() && hi - lo <= 1e-15 * hi {
                break;
            }
        }
        (s, pt)
    }
}

/// Positive root of `(p s + r)(1 + s) = t`.
fn closed_form_root(p: f64, r: f64, t: f64) -> Option<f64> {
    if !(p > 0.0) || !r.is_finite() {
        return None;
    }
    let bq = p + r;
    let c = r - t;
    let disc = bq * bq - 4.0 * p * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let root = if bq > 0.0 { -2.0 * c / (bq + sq) } else { (-bq + sq) / (2.0 * p) };
    root.is_finite().then_some(root)
}

/// One message's share of a convex step.
struct MessageStep {
    gamma: f64,
    snr: Vec<f64>,
    beams: Vec<CVec<f64>>,
    lambda: Vec<Vec<f64>>,
    phi_sum: f64,
}

fn solve_message(pairs: &mut [PairQp], x: f64, kappa: f64, antennas: usize, message: usize) -> Result<MessageStep> {
    if pairs.iter().all(|p| p.locked) {
        return Err(Error::Infeasible { message, reason: "no subcarrier with a usable tangent" });
    }
    let s_star = x.exp2() - 1.0;
    let mut gamma_hi = f64::INFINITY;
    for p in pairs.iter_mut().filter(|p| !p.locked) {
        let pt = p.solve(s_star);
        gamma_hi = gamma_hi.min(kappa * (1.0 + s_star) * pt.dphi);
    }
    let total = |pairs: &mut [PairQp], g: f64| -> f64 { pairs.iter_mut().map(|p| (1.0 + p.snr_for(g, kappa).0).log2()).sum() };
    let mut gamma_lo = gamma_hi;
    for _ in 0..2000 {
        gamma_lo *= 0.5;
        if gamma_lo == 0.0 || total(pairs, gamma_lo) < x {
            break;
        }
        gamma_hi = gamma_lo;
    }
    for _ in 0..400 {
        if gamma_hi - gamma_lo <= 1e-14 * gamma_hi {
            break;
        }
        let mid = if gamma_lo > 0.0 { (gamma_lo * gamma_hi).sqrt() } else { 0.5 * gamma_hi };
        if total(pairs, mid) < x {
            gamma_lo = mid;
        } else {
            gamma_hi = mid;
        }
    }
    let mut snr = Vec::with_capacity(pairs.len());
    let mut beams = Vec::with_capacity(pairs.len());
    let mut lambda = Vec::with_capacity(pairs.len());
    let mut phi_sum = 0.0;
    for p in pairs.iter_mut() {
        let (s, pt) = p.snr_for(gamma_hi, kappa);
        snr.push(s);
        beams.push(p.beam(&pt, antennas));
        lambda.push(p.lambdas(&pt, antennas));
        phi_sum += pt.phi;
    }
    Ok(MessageStep { gamma: gamma_hi, snr, beams, lambda, phi_sum })
}

fn convex_step(prev: &DcState<f64>, chan: &ChannelState<f64>, messages: &[Message]) -> Result<(DcState<f64>, DcDuals<f64>)> {
    let m_ant = chan.antennas;
    let scale = chan.snr_scale();
    let kappa = LN_2 / m_ant as f64;
    let b = chan.bandwidth_hz;
    let mut w = Vec::with_capacity(messages.len());
    let mut c = Vec::with_capacity(messages.len());
    let mut gamma = Vec::with_capacity(messages.len());
    let mut lambda = Vec::with_capacity(messages.len());
    let mut e = 0.0;
    for (m, msg) in messages.iter().enumerate() {
        let mut pairs = Vec::with_capacity(chan.subcarriers);
        for n in 0..chan.subcarriers {
            let rx = audience_channels(chan, n, msg.audience);
            pairs.push(PairQp::new(&prev.w[m][n], &rx, scale)?);
        }
        let step = solve_message(&mut pairs, msg.demand_bps / b, kappa, m_ant, m)?;
        e += step.phi_sum / m_ant as f64;
        c.push(step.snr.iter().map(|s| b * (1.0 + s).log2()).collect());
        w.push(step.beams);
        gamma.push(step.gamma);
        lambda.push(step.lambda);
    }
    let state = DcState { w, mu: prev.mu.clone(), c, t: prev.t + 1, objective_w: e };
    Ok((state, DcDuals { gamma, lambda }))
}

/// Solves the convex problem obtained by linearising at `prev` and returns
/// the new iterate with its multipliers.
///
/// `prev` must be binary in `μ` (as produced by [`initial_point`] or a
/// previous step); pairs with `W̄ = 0` carry no rate.
pub fn solve_convex_approx<T: Real>(prev: &DcState<T>, chan: &ChannelState<T>, messages: &[Message]) -> Result<(DcState<T>, DcDuals<T>)> {
    let (s, d) = convex_step(&state_to64(prev), &channel64(chan), messages)?;
    let duals = DcDuals {
        gamma: d.gamma.iter().map(|&g| T::of(g)).collect(),
        lambda: d.lambda.iter().map(|r| r.iter().map(|v| v.iter().map(|&x| T::of(x)).collect()).collect()).collect(),
    };
    Ok((state_from64(&s), duals))
}

/// Result of the recovery stage: a binary assignment and its beams.
struct Recovered {
    assignment: Vec<usize>,
    w: Vec<CVec<f64>>,
    unique: bool,
}

/// Recovers a binary assignment from the duals with the closed-form rules,
/// refining the duals by subgradient steps until demands are met.
fn binary_recovery(
    state: &DcState<f64>,
    duals: &DcDuals<f64>,
    chan: &ChannelState<f64>,
    messages: &[Message],
    iters: usize,
) -> Option<Recovered> {
    let n_sc = chan.subcarriers;
    let b = chan.bandwidth_hz;
    let scale = chan.snr_scale();
    let fallback: Vec<usize> = (0..n_sc).map(|n| (0..messages.len()).find(|&m| state.mu[m][n] > 0.5).unwrap_or(0)).collect();
    let mut duals = duals.clone();
    let mut out = None;
    for i in 0..=iters {
        let mut assignment = fallback.clone();
        let mut w = vec![CVec::zeros(chan.antennas); n_sc];
        let mut c = vec![vec![0.0; n_sc]; messages.len()];
        let mut unique = true;
        for n in 0..n_sc {
            let lsum: Vec<f64> = (0..messages.len()).map(|m| duals.lambda[m][n].iter().sum()).collect();
            let g: Vec<f64> = (0..messages.len()).map(|m| g_value(duals.gamma[m], lsum[m])).collect();
            let (m, uniq) = match mu_rule(n, &g) {
                Ok(v) => v,
                Err(_) => continue,
            };
            unique &= uniq;
            assignment[n] = m;
            c[m][n] = c_rule(duals.gamma[m], lsum[m], true, b);
            let rx = audience_channels(chan, n, messages[m].audience);
            w[n] = w_rule(&duals.lambda[m][n], &rx, &state.w[m][n], true, c[m][n], scale, b).ok()?;
        }
        let demand: Vec<f64> = messages.iter().enumerate().map(|(m, msg)| (msg.demand_bps - c[m].iter().sum::<f64>()) / b).collect();
        let short = messages.iter().zip(&demand).map(|(msg, d)| d / (msg.demand_bps / b)).fold(0.0, f64::max);
        out = Some(Recovered { assignment: assignment.clone(), w: w.clone(), unique });
        if short <= 1e-9 || i == iters {
            break;
        }
        let mut violation = Vec::with_capacity(messages.len());
        for (m, msg) in messages.iter().enumerate() {
            let mut vm = Vec::with_capacity(n_sc);
            for n in 0..n_sc {
                let rx = audience_channels(chan, n, msg.audience);
                let on = assignment[n] == m;
                let wn = if on { w[n].clone() } else { CVec::zeros(chan.antennas) };
                let v: Vec<f64> = rx
                    .iter()
                    .zip(&duals.lambda[m][n])
                    .map(|(r, l)| {
                        if state.w[m][n].is_zero() {
                            return 0.0;
                        }
                        let raw = tangent_violation(on, c[m][n], &wn, &state.w[m][n], r, scale, b).unwrap_or(0.0);
                        raw * l.max(1e-300) / (r.beta * cdot(r.h, &state.w[m][n]).map(|a| a.norm_sqr()).unwrap_or(1.0) / scale)
                    })
                    .collect();
                vm.push(v);
            }
            violation.push(vm);
        }
        let scaled_demand: Vec<f64> = demand.iter().zip(&duals.gamma).map(|(d, g)| d * g).collect();
        let delta = 0.5 / (1.0 + i as f64 / 50.0);
        duals = subgrad_step(&duals, &Residuals { demand: scaled_demand, violation }, delta).ok()?;
    }
    out
}

fn plan_with_beams(base: &BeamPlan<f64>, chan: &ChannelState<f64>, messages: &[Message], assignment: &[usize], w: &[CVec<f64>]) -> BeamPlan<f64> {
    let scale = chan.snr_scale();
    let mut plan = base.clone();
    for (n, &m) in assignment.iter().enumerate() {
        if let Some(dir) = w[n].normalized() {
            let rx = audience_channels(chan, n, messages[m].audience);
            if let Ok(q) = quote_for(&dir, &rx, scale) {
                plan.entries[m][n] = BeamEntry { direction: dir, quote: q };
            }
        }
    }
    plan
}

fn dc_solve64(chan: &ChannelState<f64>, messages: &[Message], settings: &DcSettings) -> Result<DcReport<f64>> {
    if settings.init == InitStrategy::BestOf {
        let run = |init| dc_solve64(chan, messages, &DcSettings { init, ..*settings });
        return match (run(InitStrategy::Asymptotic), run(InitStrategy::MulticastMrt)) {
            (Ok(a), Ok(b)) => Ok(if b.allocation.total_power_w < a.allocation.total_power_w { b } else { a }),
            (Ok(a), Err(_)) => Ok(a),
            (Err(_), Ok(b)) => Ok(b),
            (Err(e), Err(_)) => Err(e),
        };
    }
    let init = initial_point64(chan, messages, settings.init, &settings.dual)?;
    let b = chan.bandwidth_hz;
    let initial_power_w = init.allocation.total_power_w;
    let mut history = vec![init.state.objective_w];
    let mut best = init.allocation;
    let mut plan = init.plan;
    let mut outer_iterations = 0;
    let mut converged = true;
    let mut unique = true;
    let mut rejected = 0;

    for round in 0..=settings.restarts {
        let mut state = state_from_allocation(&best, messages.len());
        if round > 0 {
            history.push(state.objective_w);
        }
        let mut duals = None;
        let mut round_converged = false;
        for _ in 0..settings.outer_max {
            let (next, d) = convex_step(&state, chan, messages)?;
            outer_iterations += 1;
            history.push(next.objective_w);
            let prev = state.objective_w;
            if next.objective_w > prev * (1.0 + 1e-12) {
                rejected += 1;
                round_converged = true;
                break;
            }
            state = next;
            duals = Some(d);
            if prev - state.objective_w <= settings.tol * prev {
                round_converged = true;
                break;
            }
        }
        converged &= round_converged;
        let Some(duals) = duals else { break };

        let (assignment, w) = match binary_recovery(&state, &duals, chan, messages, settings.recovery_iters) {
            Some(r) => {
                unique &= r.unique;
                (r.assignment, r.w)
            }
            None => {
                let assignment: Vec<usize> =
                    (0..chan.subcarriers).map(|n| (0..messages.len()).find(|&m| state.mu[m][n] > 0.5).unwrap_or(0)).collect();
                let w = assignment.iter().enumerate().map(|(n, &m)| state.w[m][n].clone()).collect();
                (assignment, w)
            }
        };
        plan = plan_with_beams(&plan, chan, messages, &assignment, &w);
        let problem = QuotedProblem::new(messages, plan.quotes(), b, chan.antennas);
        let fixed = allocate_assignment(&problem, assignment).and_then(|a| assemble_plan(&a, &plan, b));
        let global = solve_quoted_allocation(&problem, &settings.dual).and_then(|a| assemble_plan(&a, &plan, b));
        let fixed_power = fixed.as_ref().map_or(f64::INFINITY, |a| a.total_power_w);
        let mut restart = false;
        if let Ok(f) = fixed {
            if f.total_power_w < best.total_power_w {
                best = f;
            }
        }
        if let Ok(g) = global {
            if g.total_power_w < best.total_power_w * (1.0 - 1e-9) {
                restart = g.total_power_w < fixed_power * (1.0 - 1e-9);
                best = g;
            }
        }
        if !restart {
            break;
        }
    }
    let mut allocation = best;
    allocation.stats.converged = converged;
    allocation.stats.unique_argmax = unique;
    allocation.stats.iterations = outer_iterations;
    Ok(DcReport { allocation, history, initial_power_w, outer_iterations, converged, unique_argmax: unique, rejected_steps: rejected })
}

/// Runs the DC iterations from the configured start and returns a feasible
/// binary solution with unit beams.
pub fn dc_solve<T: Real>(chan: &ChannelState<T>, messages: &[Message], settings: &DcSettings) -> Result<DcReport<T>> {
    let r = dc_solve64(&channel64(chan), messages, settings)?;
    Ok(DcReport {
        allocation: allocation_from64(&r.allocation),
        history: r.history.iter().map(|&e| T::of(e)).collect(),
        initial_power_w: T::of(r.initial_power_w),
        outer_iterations: r.outer_iterations,
        converged: r.converged,
        unique_argmax: r.unique_argmax,
        rejected_steps: r.rejected_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use crate::partition::UserSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const B: f64 = 39e3;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn message(users: &[usize], demand: f64) -> Message {
        let audience = UserSet::from_users(users.iter().copied());
        Message { subset: audience, level: 1, audience, tile_count: 1, demand_bps: demand }
    }

    #[test]
    fn g_value_examples() {
        assert_eq!(g_value(0.0, 3.0), 0.0);
        assert_eq!(g_value(2.0, 0.0), f64::NEG_INFINITY);
        assert_eq!(g_value(0.0, 0.0), 0.0);
        // r = 1: log term vanishes and γ/ln2 = Σλ
        assert!(g_value(LN_2 * 1.7, 1.7).abs() < 1e-15);
        // r = 2: γ − γ/ln2 + Σλ
        let (l, g) = (0.8, 2.0 * LN_2 * 0.8);
        assert!((g_value(g, l) - (g - g / LN_2 + l)).abs() < 1e-15);
        assert!(g_value(g, l) > 0.0);
    }

    #[test]
    fn mu_rule_examples() {
        assert_eq!(mu_rule(0, &[1.0, 3.0, 2.0]).unwrap(), (1, true));
        assert_eq!(mu_rule(0, &[3.0, 1.0, 3.0]).unwrap(), (0, false));
        assert_eq!(mu_rule(0, &[f64::NEG_INFINITY, 0.0]).unwrap(), (1, true));
        assert!(matches!(mu_rule(4, &[f64::NEG_INFINITY; 3]), Err(Error::NoAssignment { subcarrier: 4 })));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let g: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mut scan = 0;
            for m in 1..g.len() {
                if g[m] > g[scan] {
                    scan = m;
                }
            }
            assert_eq!(mu_rule(0, &g).unwrap().0, scan);
        }
    }

    #[test]
    fn c_rule_examples() {
        assert!((c_rule(2.0 * LN_2 * 0.3, 0.3, true, B) - B).abs() < 1e-9);
        assert_eq!(c_rule(2.0 * LN_2 * 0.3, 0.3, false, B), 0.0);
        assert_eq!(c_rule(0.5 * LN_2, 1.0, true, B), 0.0);
        assert_eq!(c_rule(0.0, 1.0, true, B), 0.0);
    }

    #[test]
    fn w_rule_single_user() {
        let h = CVec(vec![c(1.0, 0.5), c(-0.3, 0.2)]);
        let w_prev = h.normalized().unwrap().scaled(0.1);
        let rx = [Receiver { user: 0, h: &h, beta: 1.0 }];
        let scale = 2.0;
        let rate = 1.5 * B;
        let w = w_rule(&[0.7], &rx, &w_prev, true, rate, scale, B).unwrap();
        // direction is along h
        let cos = cdot(&w, &h).unwrap().norm() / (w.norm_sqr() * h.norm_sqr()).sqrt();
        assert!((cos - 1.0).abs() < 1e-12);
        // tangent constraint tight
        let v = tangent_violation(true, rate, &w, &w_prev, &rx[0], scale, B).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn w_rule_tight_for_worst_user() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let hs: Vec<CVec<f64>> = (0..3).map(|_| CVec((0..4).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())).collect();
            let rx: Vec<Receiver<f64>> = hs.iter().enumerate().map(|(k, h)| Receiver { user: k, h, beta: 1.0 + k as f64 }).collect();
            let mut w_prev = CVec::zeros(4);
            for h in &hs {
                w_prev.add_scaled(c(1.0, 0.0), h);
            }
            let lambda = [rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)];
            let Ok(w) = w_rule(&lambda, &rx, &w_prev, true, 0.7 * B, 3.0, B) else { continue };
            let v: Vec<f64> = rx.iter().map(|r| tangent_violation(true, 0.7 * B, &w, &w_prev, r, 3.0, B).unwrap()).collect();
            let worst = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(worst.abs() < 1e-9, "{v:?}");
        }
    }

    #[test]
    fn w_rule_degenerate_cases() {
        let h = CVec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let w_prev = CVec(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let rx = [Receiver { user: 0, h: &h, beta: 1.0 }];
        assert!(w_rule(&[1.0], &rx, &w_prev, true, B, 1.0, B).unwrap().is_zero());
        let w_prev = CVec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(w_rule(&[1.0], &rx, &w_prev, false, B, 1.0, B).unwrap().is_zero());
        assert!(matches!(w_rule(&[1.0, 2.0], &rx, &w_prev, true, B, 1.0, B), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn subgrad_step_examples() {
        let duals = DcDuals { gamma: vec![1.0, 0.0], lambda: vec![vec![vec![0.0, 2.0]]] };
        let zero = Residuals { demand: vec![0.0, 0.0], violation: vec![vec![vec![0.0, 0.0]]] };
        assert_eq!(subgrad_step(&duals, &zero, 0.5).unwrap(), duals);
        let res = Residuals { demand: vec![1.0, -3.0], violation: vec![vec![vec![-1.0, 1.0]]] };
        let next = subgrad_step(&duals, &res, 0.5).unwrap();
        assert_eq!(next.gamma, vec![1.5, 0.0]);
        assert_eq!(next.lambda, vec![vec![vec![0.0, 2.5]]]);
        let bad = Residuals { demand: vec![0.0], violation: vec![] };
        assert!(subgrad_step(&duals, &bad, 0.5).is_err());
    }

    fn random_qp(rng: &mut ChaCha8Rng, users: usize, antennas: usize) -> (Vec<CVec<f64>>, CVec<f64>) {
        let hs: Vec<CVec<f64>> =
            (0..users).map(|_| CVec((0..antennas).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())).collect();
        let w = CVec((0..antennas).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
        (hs, w)
    }

    #[test]
    fn pair_qp_single_member_closed_form() {
        let h = CVec(vec![c(0.3, -1.0), c(0.7, 0.1)]);
        let w_bar = CVec(vec![c(0.2, 0.0), c(0.1, 0.4)]);
        let rx = [Receiver { user: 0, h: &h, beta: 1.3 }];
        let mut qp = PairQp::new(&w_bar, &rx, 2.0).unwrap();
        let s = 0.9;
        let pt = qp.solve(s);
        let a = s + qp.b[0];
        assert!((pt.phi - a * a / qp.gram[0]).abs() <= 1e-12 * pt.phi);
    }

    #[test]
    fn pair_qp_enumeration_matches_hildreth() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let users = rng.gen_range(1..6);
            let (hs, w_bar) = random_qp(&mut rng, users, 4);
            let rx: Vec<Receiver<f64>> = hs.iter().enumerate().map(|(k, h)| Receiver { user: k, h, beta: 1.0 }).collect();
            let mut qp = PairQp::new(&w_bar, &rx, 1.0).unwrap();
            let s = rng.gen_range(0.0..3.0);
            let exact = qp.solve(s);
            let iterative = qp.hildreth(s);
            assert!((exact.phi - iterative.phi).abs() <= 1e-8 * exact.phi, "{} vs {}", exact.phi, iterative.phi);
            // primal feasibility of W = Σ ν u
            let w = qp.beam(&exact, 4);
            for (u, b) in qp.u.iter().zip(&qp.b) {
                assert!(cdot(u, &w).unwrap().re >= (s + b) * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn snr_solve_satisfies_stationarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let (hs, w_bar) = random_qp(&mut rng, 3, 4);
            let rx: Vec<Receiver<f64>> = hs.iter().enumerate().map(|(k, h)| Receiver { user: k, h, beta: 1.0 }).collect();
            let mut qp = PairQp::new(&w_bar, &rx, 1.0).unwrap();
            let kappa = LN_2 / 4.0;
            let gamma = rng.gen_range(1.0..50.0);
            let (s, pt) = qp.snr_for(gamma, kappa);
            if s > 0.0 {
                let f = kappa * (1.0 + s) * pt.dphi;
                assert!((f - gamma).abs() <= 1e-9 * gamma, "{f} vs {gamma}");
            } else {
                assert!(kappa * pt.dphi >= gamma * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn single_user_matches_waterfilling() {
        // one user: the asymptotic beam is MRT, which is optimal, so DC cannot improve
        let chan = sample_channel(4, 4, 6, 1, &[1.0], 1e-9, B).unwrap();
        let msgs = vec![message(&[0], 2.5 * B)];
        let report = dc_solve(&chan, &msgs, &DcSettings::default()).unwrap();
        let rel = (report.allocation.total_power_w - report.initial_power_w).abs() / report.initial_power_w;
        assert!(rel < 1e-3, "{rel}");
        for w in &report.allocation.beams {
            assert!((w.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..5 {
            let chan = sample_channel(seed, 4, 8, 3, &[1.0; 3], 1e-9, B).unwrap();
            let msgs = vec![message(&[0, 1, 2], 2.0 * B), message(&[0, 1], 1.0 * B), message(&[2], 1.5 * B)];
            let report = dc_solve(&chan, &msgs, &DcSettings::default()).unwrap();
            for pair in report.history.windows(2) {
                assert!(pair[1] <= pair[0] * (1.0 + 1e-8), "seed {seed}: {:?}", report.history);
            }
            assert!(report.allocation.total_power_w <= report.initial_power_w * (1.0 + 1e-12));
            for (m, msg) in msgs.iter().enumerate() {
                assert!(report.allocation.message_rate(m) >= msg.demand_bps * (1.0 - 1e-6));
            }
        }
    }

    #[test]
    fn fixed_point_is_self_consistent() {
        let chan = sample_channel(9, 4, 6, 2, &[1.0; 2], 1e-9, B).unwrap();
        let msgs = vec![message(&[0, 1], 2.0 * B), message(&[1], 1.0 * B)];
        let init = initial_point(&chan, &msgs, InitStrategy::Asymptotic, &DualSettings::default()).unwrap();
        let mut state = init.state;
        for _ in 0..200 {
            let (next, _) = solve_convex_approx(&state, &chan, &msgs).unwrap();
            let done = (state.objective_w - next.objective_w).abs() <= 1e-10 * state.objective_w;
            state = next;
            if done {
                break;
            }
        }
        let (again, _) = solve_convex_approx(&state, &chan, &msgs).unwrap();
        assert!((again.objective_w - state.objective_w).abs() <= 1e-8 * state.objective_w);
        let mu_sum: f64 = (0..msgs.len()).map(|m| state.mu[m][0]).sum();
        assert_eq!(mu_sum, 1.0);
    }

    #[test]
    fn initial_point_matches_asymptotic_power() {
        let chan = sample_channel(2, 4, 6, 2, &[1.0; 2], 1e-9, B).unwrap();
        let msgs = vec![message(&[0, 1], 2.0 * B)];
        let init = initial_point(&chan, &msgs, InitStrategy::Asymptotic, &DualSettings::default()).unwrap();
        let e: f64 = init.state.w.iter().flatten().map(|w| w.norm_sqr()).sum::<f64>() / 4.0;
        assert!((e - init.allocation.total_power_w).abs() <= 1e-12 * e);
        assert!((init.state.objective_w - e).abs() <= 1e-12 * e);
    }
}
