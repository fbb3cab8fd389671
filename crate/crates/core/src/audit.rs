//! Constraint audit of a complete transmission plan.

use std::fmt;

use crate::beamforming::audience_channels;
use crate::channel::ChannelState;
use crate::cxkernel::cdot;
use crate::ofdma::Allocation;
use crate::partition::Message;
use crate::scalar::Real;

/// Which constraint a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// One message per subcarrier, from the message list.
    Assignment,
    PowerNonNegative,
    UnitBeam,
    RateNonNegative,
    /// A pair's rate exceeds what its worst audience member can decode.
    UserRate,
    /// A message receives less than its demand.
    Demand,
    /// Reported total power differs from `(1/M) Σ η`.
    Objective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub message: Option<usize>,
    pub subcarrier: Option<usize>,
    /// Relative excess (or absolute for sign constraints).
    pub amount: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.constraint)?;
        if let Some(m) = self.message {
            write!(f, " message {m}")?;
        }
        if let Some(n) = self.subcarrier {
            write!(f, " subcarrier {n}")?;
        }
        write!(f, " by {:.3e}", self.amount)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
    /// Largest relative shortfall of any user-rate or demand constraint.
    pub worst_rate_gap: f64,
}

impl AuditReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every constraint of the full problem at relative tolerance `tol`
/// for rates and demands. `μ` is binary and the per-subcarrier simplex is
/// exact by representation; the audit checks that the assignment is well
/// formed.
pub fn audit_allocation<T: Real>(chan: &ChannelState<T>, messages: &[Message], alloc: &Allocation<T>, tol: f64) -> AuditReport {
    let mut report = AuditReport::default();
    let n_sc = chan.subcarriers;
    let flag = |report: &mut AuditReport, constraint, message, subcarrier, amount: f64| {
        report.violations.push(Violation { constraint, message, subcarrier, amount });
    };
    if alloc.assignment.len() != n_sc || alloc.power.len() != n_sc || alloc.rate.len() != n_sc || alloc.beams.len() != n_sc {
        flag(&mut report, Constraint::Assignment, None, None, f64::INFINITY);
        return report;
    }
    let b = chan.bandwidth_hz.to_f64_lossy();
    let scale = chan.snr_scale().to_f64_lossy();
    for n in 0..n_sc {
        let m = alloc.assignment[n];
        if m >= messages.len() {
            flag(&mut report, Constraint::Assignment, Some(m), Some(n), f64::INFINITY);
            continue;
        }
        let eta = alloc.power[n].to_f64_lossy();
        let c = alloc.rate[n].to_f64_lossy();
        if !(eta >= 0.0) || !eta.is_finite() {
            flag(&mut report, Constraint::PowerNonNegative, Some(m), Some(n), -eta);
        }
        if !(c >= 0.0) || !c.is_finite() {
            flag(&mut report, Constraint::RateNonNegative, Some(m), Some(n), -c);
        }
        let w = &alloc.beams[n];
        let norm = w.norm_sqr().to_f64_lossy().sqrt();
        if w.len() != chan.antennas || (norm - 1.0).abs() > 1e-9 {
            flag(&mut report, Constraint::UnitBeam, Some(m), Some(n), (norm - 1.0).abs());
            continue;
        }
        if c <= 0.0 {
            continue;
        }
        for rx in audience_channels(chan, n, messages[m].audience) {
            let gain = cdot(rx.h, w).map(|z| z.norm_sqr().to_f64_lossy()).unwrap_or(0.0);
            let cap = b * (1.0 + rx.beta.to_f64_lossy() * eta * gain / scale).log2();
            let gap = (c - cap) / c;
            report.worst_rate_gap = report.worst_rate_gap.max(gap);
            if gap > tol {
                flag(&mut report, Constraint::UserRate, Some(m), Some(n), gap);
            }
        }
    }
    for (m, msg) in messages.iter().enumerate() {
        let got: f64 = (0..n_sc).filter(|&n| alloc.assignment[n] == m).map(|n| alloc.rate[n].to_f64_lossy()).sum();
        let gap = (msg.demand_bps - got) / msg.demand_bps;
        report.worst_rate_gap = report.worst_rate_gap.max(gap);
        if gap > tol {
            flag(&mut report, Constraint::Demand, Some(m), None, gap);
        }
    }
    let total: f64 = alloc.power.iter().map(|p| p.to_f64_lossy()).sum::<f64>() / chan.antennas as f64;
    let reported = alloc.total_power_w.to_f64_lossy();
    let err = (total - reported).abs() / total.abs().max(f64::MIN_POSITIVE);
    if err > 1e-9 && (total - reported).abs() > 0.0 {
        flag(&mut report, Constraint::Objective, None, None, err);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::{plan_beams, BeamRule};
    use crate::channel::sample_channel;
    use crate::ofdma::{assemble_plan, solve_quoted_allocation, DualSettings, QuotedProblem};
    use crate::partition::UserSet;

    const B: f64 = 39e3;

    fn setup() -> (ChannelState<f64>, Vec<Message>, Allocation<f64>) {
        let chan = sample_channel(3, 4, 6, 3, &[1.0; 3], 1e-9, B).unwrap();
        let msg = |u: &[usize], d: f64| {
            let a = UserSet::from_users(u.iter().copied());
            Message { subset: a, level: 1, audience: a, tile_count: 1, demand_bps: d }
        };
        let msgs = vec![msg(&[0, 1], 2.0 * B), msg(&[2], B)];
        let plan = plan_beams(&chan, &msgs, BeamRule::Asymptotic).unwrap();
        let p = QuotedProblem::new(&msgs, plan.quotes(), B, 4);
        let a = solve_quoted_allocation(&p, &DualSettings::default()).unwrap();
        let a = assemble_plan(&a, &plan, B).unwrap();
        (chan, msgs, a)
    }

    #[test]
    fn assembled_plan_is_feasible() {
        let (chan, msgs, a) = setup();
        let r = audit_allocation(&chan, &msgs, &a, 1e-6);
        assert!(r.is_feasible(), "{:?}", r.violations);
        assert!(r.worst_rate_gap <= 1e-9);
    }

    #[test]
    fn detects_each_kind_of_violation() {
        let (chan, msgs, a) = setup();
        let n = (0..6).find(|&n| a.rate[n] > 0.0).unwrap();

        let mut bad = a.clone();
        bad.rate[n] *= 1.01;
        let kinds: Vec<_> = audit_allocation(&chan, &msgs, &bad, 1e-6).violations.iter().map(|v| v.constraint).collect();
        assert!(kinds.contains(&Constraint::UserRate));

        let mut bad = a.clone();
        bad.rate[n] *= 0.5;
        bad.power[n] *= 0.1;
        bad.recompute_total();
        let kinds: Vec<_> = audit_allocation(&chan, &msgs, &bad, 1e-6).violations.iter().map(|v| v.constraint).collect();
        assert!(kinds.contains(&Constraint::Demand));

        let mut bad = a.clone();
        bad.beams[n] = bad.beams[n].scaled(1.1);
        let kinds: Vec<_> = audit_allocation(&chan, &msgs, &bad, 1e-6).violations.iter().map(|v| v.constraint).collect();
        assert!(kinds.contains(&Constraint::UnitBeam));

        let mut bad = a.clone();
        bad.assignment[0] = 7;
        let kinds: Vec<_> = audit_allocation(&chan, &msgs, &bad, 1e-6).violations.iter().map(|v| v.constraint).collect();
        assert!(kinds.contains(&Constraint::Assignment));

        let mut bad = a.clone();
        bad.total_power_w *= 0.5;
        let kinds: Vec<_> = audit_allocation(&chan, &msgs, &bad, 1e-6).violations.iter().map(|v| v.constraint).collect();
        assert_eq!(kinds, vec![Constraint::Objective]);
    }
}
