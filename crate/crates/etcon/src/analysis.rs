//! Post-run verification: disagreement metrics, inter-event statistics,
//! envelope checks, and an exact-propagation oracle.
//!
//! The oracle re-simulates delay-free scenarios by a completely different
//! route: between events the stacked (x, y) system is one autonomous linear
//! ODE, propagated segment-by-segment with a single augmented matrix
//! exponential and crossed-checked threshold crossings by bisection on the
//! analytic solution. Agreement of event times is the strongest end-to-end
//! check on the simulation engine.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    BoundsReport, TriggerParams, delayed_tau_bound, disagreement_envelope, h3, k3, tau_bound,
};
use crate::design::DecayCertificate;
use crate::error::{Error, Result};
use crate::graph::laplacian;
use crate::linalg::{RMatrix, RVector, expm};
use crate::sim::{ScenarioConfig, SimTrace};
use crate::spectral::SpectralDecomposition;

/// Max pairwise state distance at one sample.
pub fn disagreement(trace: &SimTrace, sample: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..trace.n_agents {
        let xi = trace.x_at(i, sample);
        for j in (i + 1)..trace.n_agents {
            let xj = trace.x_at(j, sample);
            let d: f64 = xi
                .iter()
                .zip(xj)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(d);
        }
    }
    worst
}

/// ‖x̂_{2:N}(t)‖, the transformed disagreement the guarantees bound.
pub fn transformed_disagreement(
    trace: &SimTrace,
    spec: &SpectralDecomposition,
    sample: usize,
) -> f64 {
    spec.tail_norm(&trace.stacked_x(sample), trace.n)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentEventStats {
    pub agent: usize,
    pub count: usize,
    /// Minimum inter-event gap; absent with fewer than two events.
    pub min_gap: Option<f64>,
    pub mean_gap: Option<f64>,
}

/// Per-agent inter-event statistics.
pub fn inter_event_stats(trace: &SimTrace) -> Vec<AgentEventStats> {
    (0..trace.n_agents)
        .map(|agent| {
            let times: Vec<f64> = trace
                .agent_events(agent)
                .iter()
                .map(|e| e.t_event)
                .collect();
            let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            AgentEventStats {
                agent,
                count: times.len(),
                min_gap: gaps.iter().copied().reduce(f64::min),
                mean_gap: if gaps.is_empty() {
                    None
                } else {
                    Some(gaps.iter().sum::<f64>() / gaps.len() as f64)
                },
            }
        })
        .collect()
}

/// Upper bound on oracle segment count.
pub const ORACLE_MAX_EVENTS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct OracleRun {
    /// (t_event, agent), including the initial broadcasts at t = 0.
    pub events: Vec<(f64, usize)>,
    pub final_x: RVector,
    pub final_y: RVector,
}

/// Exact-propagation reference for delay-free scenarios with N·n ≤ 12.
///
/// `scan_step` sets the crossing-detection resolution; use half the engine
/// step to probe at least as finely as the engine does.
pub fn exact_oracle(config: &ScenarioConfig, t_end: f64, scan_step: f64) -> Result<OracleRun> {
    config.validate()?;
    if config.delay_d != 0.0 {
        return Err(Error::InvalidParams(
            "the exact oracle covers only delay-free scenarios".into(),
        ));
    }
    let n = config.dynamics.n();
    let num_agents = config.graph.n_agents();
    let nn = num_agents * n;
    if nn > 12 {
        return Err(Error::InvalidParams(format!(
            "oracle limited to N·n ≤ 12, got {nn}"
        )));
    }

    // Augmented generator for w = [x; y]:
    //   ẋ = (I⊗A)x + c(L⊗BF)y,  ẏ = (I⊗A)y.
    let a_big = RMatrix::identity(num_agents, num_agents).kronecker(config.dynamics.a());
    let l = laplacian(&config.graph);
    let bf = config.dynamics.b() * config.f_gain();
    let coupling = (l * config.design.c_gain).kronecker(&bf);
    let mut omega = RMatrix::zeros(2 * nn, 2 * nn);
    omega.view_mut((0, 0), (nn, nn)).copy_from(&a_big);
    omega.view_mut((0, nn), (nn, nn)).copy_from(&coupling);
    omega.view_mut((nn, nn), (nn, nn)).copy_from(&a_big);

    let e_scan = expm(&(&omega * scan_step));

    let mut w_seg = RVector::zeros(2 * nn);
    w_seg.rows_mut(0, nn).copy_from(&config.x0);
    w_seg.rows_mut(nn, nn).copy_from(&config.x0);
    let mut t_seg = 0.0f64;

    let mut events: Vec<(f64, usize)> = (0..num_agents).map(|i| (0.0, i)).collect();

    let err_of = |w: &RVector, i: usize| -> f64 {
        let mut acc = 0.0;
        for k in 0..n {
            let d = w[nn + i * n + k] - w[i * n + k];
            acc += d * d;
        }
        acc.sqrt()
    };
    let g_of = |w: &RVector, t: f64, i: usize| err_of(w, i) - config.agent_threshold(i, t);

    'outer: while t_seg < t_end - 1e-12 {
        // March the analytic solution at scan resolution, looking for the
        // first threshold crossing of any agent in this segment.
        let mut w_prev = w_seg.clone();
        let mut sigma_prev = 0.0f64;
        let mut crossing: Option<(f64, usize)> = None;
        while sigma_prev < (t_end - t_seg) - 1e-15 {
            let sigma_next = (sigma_prev + scan_step).min(t_end - t_seg);
            let w_next = if sigma_next - sigma_prev == scan_step {
                &e_scan * &w_prev
            } else {
                expm(&(&omega * (sigma_next - sigma_prev))) * &w_prev
            };
            let mut best: Option<(f64, usize)> = None;
            for i in 0..num_agents {
                if g_of(&w_next, t_seg + sigma_next, i) >= 0.0 {
                    // Bisect in (sigma_prev, sigma_next] on the analytic
                    // segment solution.
                    let mut lo = sigma_prev;
                    let mut hi = sigma_next;
                    for _ in 0..90 {
                        if hi - lo <= 1e-13 {
                            break;
                        }
                        let mid = 0.5 * (lo + hi);
                        let w_mid = expm(&(&omega * mid)) * &w_seg;
                        if g_of(&w_mid, t_seg + mid, i) >= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    best = match best {
                        None => Some((hi, i)),
                        Some((s, _)) if hi < s => Some((hi, i)),
                        keep => keep,
                    };
                }
            }
            if let Some((sigma_star, agent)) = best {
                crossing = Some((sigma_star, agent));
                break;
            }
            w_prev = w_next;
            sigma_prev = sigma_next;
        }

        match crossing {
            Some((sigma_star, agent)) => {
                let mut w_star = expm(&(&omega * sigma_star)) * &w_seg;
                for k in 0..n {
                    w_star[nn + agent * n + k] = w_star[agent * n + k];
                }
                t_seg += sigma_star;
                w_seg = w_star;
                events.push((t_seg, agent));
                if events.len() > ORACLE_MAX_EVENTS {
                    return Err(Error::OracleEventExplosion {
                        max: ORACLE_MAX_EVENTS,
                    });
                }
            }
            None => {
                // Segment runs clean to the horizon.
                w_seg = expm(&(&omega * (t_end - t_seg))) * &w_seg;
                break 'outer;
            }
        }
    }

    Ok(OracleRun {
        final_x: w_seg.rows(0, nn).into_owned(),
        final_y: w_seg.rows(nn, nn).into_owned(),
        events,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Worst residual in the check's own units (documented per check).
    pub worst: f64,
    /// Time of the worst residual, when meaningful.
    pub at_time: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub event_stats: Vec<AgentEventStats>,
    pub disagreement_initial: f64,
    pub disagreement_final: f64,
    pub disagreement_ratio: f64,
    pub min_gap_overall: Option<f64>,
    /// Whether the configured delay is inside the certified range d ≤ ε.
    pub delay_certified: Option<bool>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{}  {}  worst={:.6e}{}  {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.worst,
                c.at_time
                    .map(|t| format!("  at t={t:.6}"))
                    .unwrap_or_default(),
                c.detail,
            ));
        }
        out.push_str(&format!(
            "disagreement: {:.6e} -> {:.6e} (ratio {:.6e})\n",
            self.disagreement_initial, self.disagreement_final, self.disagreement_ratio
        ));
        if let Some(mg) = self.min_gap_overall {
            out.push_str(&format!("min inter-event gap: {mg:.6e}\n"));
        }
        if let Some(cert) = self.delay_certified {
            out.push_str(&format!(
                "delay within certified range d <= epsilon: {}\n",
                if cert { "yes" } else { "no (envelope checked empirically)" }
            ));
        }
        for s in &self.event_stats {
            out.push_str(&format!(
                "agent {}: {} events, min gap {}, mean gap {}\n",
                s.agent + 1,
                s.count,
                s.min_gap.map(|g| format!("{g:.6e}")).unwrap_or("-".into()),
                s.mean_gap.map(|g| format!("{g:.6e}")).unwrap_or("-".into()),
            ));
        }
        out
    }
}

/// Run every per-trace check against the computed bounds.
pub fn verify_trace(
    trace: &SimTrace,
    spec: &SpectralDecomposition,
    certificate: &DecayCertificate,
    params: &TriggerParams,
    bounds: &BoundsReport,
) -> Result<VerificationReport> {
    let mut checks = Vec::new();
    let delayed = trace.delay_d > 0.0;

    // 1. Trigger errors never exceed the threshold beyond bisection slack.
    let mut worst_rel = f64::NEG_INFINITY;
    let mut worst_rel_t = 0.0;
    for i in 0..trace.n_agents {
        let track = &trace.agents[i];
        for k in 0..trace.n_samples() {
            let rel = (track.err_norm[k] - track.threshold[k]) / track.threshold[k].max(1e-300);
            if rel > worst_rel {
                worst_rel = rel;
                worst_rel_t = trace.times[k];
            }
        }
    }
    checks.push(CheckResult {
        name: "threshold_envelope".into(),
        pass: worst_rel <= 1e-6,
        worst: worst_rel,
        at_time: Some(worst_rel_t),
        detail: "(‖e_i‖ − β_i e^{−λ_i t})/β_i e^{−λ_i t} ≤ 1e-6".into(),
    });

    // 2. Delayed errors inside the γ-envelope.
    if delayed {
        let gamma = params.gamma()?;
        let mut worst = f64::NEG_INFINITY;
        let mut worst_t = 0.0;
        for i in 0..trace.n_agents {
            let track = &trace.agents[i];
            for k in 0..trace.n_samples() {
                let bound = gamma * (-params.lambda * trace.times[k]).exp();
                let rel = (track.err_delayed_norm[k] - bound) / bound.max(1e-300);
                if rel > worst {
                    worst = rel;
                    worst_t = trace.times[k];
                }
            }
        }
        checks.push(CheckResult {
            name: "delayed_envelope".into(),
            pass: worst <= 1e-6,
            worst,
            at_time: Some(worst_t),
            detail: "(‖e_i^d‖ − γe^{−λt})/γe^{−λt} ≤ 1e-6".into(),
        });
    }

    // 3. Every event resets its trigger error to exactly zero.
    let worst_reset = trace
        .events
        .iter()
        .map(|e| e.err_after)
        .fold(0.0f64, f64::max);
    checks.push(CheckResult {
        name: "event_reset_exact".into(),
        pass: worst_reset == 0.0,
        worst: worst_reset,
        at_time: None,
        detail: "‖e_i(t_k⁺)‖ = 0 exactly".into(),
    });

    // 4. Model copies agree bit-for-bit across holders.
    checks.push(CheckResult {
        name: "model_copy_agreement".into(),
        pass: trace.diagnostics.copy_divergence_max == 0.0,
        worst: trace.diagnostics.copy_divergence_max,
        at_time: None,
        detail: "neighbor copies of each model identical to the source".into(),
    });

    // 5. Delayed self-model catches up with the undelayed one.
    if delayed {
        checks.push(CheckResult {
            name: "delayed_model_catchup".into(),
            pass: trace.diagnostics.catchup_divergence_max <= 1e-9,
            worst: trace.diagnostics.catchup_divergence_max,
            at_time: None,
            detail: "y_i^d = y_i (rel. 1e-9) once d has elapsed since the event".into(),
        });
    }

    // 6. Zeno-freedom: every gap at least the bound at the realized event
    //    time (delayed bound when the run is delayed).
    let mut worst_slack = f64::INFINITY;
    let mut worst_slack_t = None;
    let mut min_gap_overall: Option<f64> = None;
    for agent in 0..trace.n_agents {
        let events = trace.agent_events(agent);
        for w in events.windows(2) {
            let t_k = w[0].t_event;
            let gap = w[1].t_event - t_k;
            min_gap_overall = Some(min_gap_overall.map_or(gap, |g: f64| g.min(gap)));
            let bound = if delayed {
                delayed_tau_bound(
                    h3(&bounds.constants, certificate, params, t_k)?,
                    &bounds.constants,
                    certificate,
                    params,
                )?
            } else {
                tau_bound(
                    k3(&bounds.constants, certificate, params, t_k)?,
                    &bounds.constants,
                    certificate,
                    params,
                )?
            };
            let slack = gap - bound;
            if slack < worst_slack {
                worst_slack = slack;
                worst_slack_t = Some(t_k);
            }
        }
    }
    checks.push(CheckResult {
        name: "zeno_free_inter_event_bound".into(),
        pass: worst_slack >= -1e-9,
        worst: worst_slack,
        at_time: worst_slack_t,
        detail: "gap − τ(t_k) ≥ 0 at every realized event".into(),
    });

    // 7. Guarantee envelope dominates the transformed disagreement.
    let mut worst_env = f64::NEG_INFINITY;
    let mut worst_env_t = 0.0;
    for k in 0..trace.n_samples() {
        let value = transformed_disagreement(trace, spec, k);
        let env = disagreement_envelope(
            certificate,
            &bounds.constants,
            params,
            trace.times[k],
            delayed,
        )?;
        let rel = (value - env) / env.max(1e-300);
        if rel > worst_env {
            worst_env = rel;
            worst_env_t = trace.times[k];
        }
    }
    checks.push(CheckResult {
        name: "disagreement_envelope_domination".into(),
        pass: worst_env <= 0.0,
        worst: worst_env,
        at_time: Some(worst_env_t),
        detail: "‖x̂_{2:N}(t)‖ ≤ envelope(t) at every sample".into(),
    });

    let last = trace.n_samples() - 1;
    let dis0 = disagreement(trace, 0);
    let dis_end = disagreement(trace, last);
    let delay_certified = if delayed {
        Some(bounds.epsilon_uniform.is_some_and(|eps| trace.delay_d <= eps))
    } else {
        None
    };

    Ok(VerificationReport {
        checks,
        event_stats: inter_event_stats(trace),
        disagreement_initial: dis0,
        disagreement_final: dis_end,
        disagreement_ratio: dis_end / dis0.max(1e-300),
        min_gap_overall,
        delay_certified,
    })
}
