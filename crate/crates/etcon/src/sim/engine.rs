//! The event-driven integration loop.
//!
//! Each integrator step [t, t+h] is cut into segments at message-delivery
//! times and at bisected event times. Within a segment the model ensemble is
//! autonomous: models advance by the exact exponential, true states by RK4
//! with stage inputs from the exactly-propagated models. An event fires when
//! an agent's trigger error meets its threshold; the segment restarts there,
//! so every agent's detection always runs against current dynamics.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use super::{
    AgentRuntime, AgentTrack, EventRecord, ScenarioConfig, SimTrace, TraceDiagnostics,
    EVENT_TIME_TOL, rk4_state,
};
use crate::error::{Error, Result};
use crate::graph::has_spanning_tree;
use crate::linalg::{RMatrix, RVector, expm};

struct Message {
    t_deliver: f64,
    seq: u64,
    sender: usize,
    /// Model value to install at delivery: e^{A d}·x(t_event).
    delivered: RVector,
}

impl PartialEq for Message {
    fn eq(&self, other: &Self) -> bool {
        self.t_deliver == other.t_deliver && self.seq == other.seq
    }
}
impl Eq for Message {}
impl PartialOrd for Message {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Message {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap pops the earliest delivery first.
        other
            .t_deliver
            .total_cmp(&self.t_deliver)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    n: usize,
    num_agents: usize,
    in_neighbors: Vec<Vec<usize>>,
    holders: Vec<Vec<usize>>,
    /// c·F.
    cf: RMatrix,
    exp_delay: RMatrix,
    agents: Vec<AgentRuntime>,
    t_now: f64,
    queue: BinaryHeap<Message>,
    seq: u64,
    events: Vec<EventRecord>,
    zeno_window: Vec<VecDeque<f64>>,
    zeno_cap: usize,
    /// Aggregates z_i = Σ_{j∈N_i}(y_i^d − y_j^d) at the current segment start.
    z: Vec<RVector>,
    segments: usize,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        if !has_spanning_tree(&cfg.graph) {
            return Err(Error::NoSpanningTree(
                "simulation requires the connectivity hypothesis".into(),
            ));
        }
        let n = cfg.dynamics.n();
        let num_agents = cfg.graph.n_agents();
        let cf = cfg.f_gain() * cfg.design.c_gain;
        let exp_delay = if cfg.delay_d > 0.0 {
            expm(&(cfg.dynamics.a() * cfg.delay_d))
        } else {
            RMatrix::identity(n, n)
        };

        let in_neighbors = cfg.graph.in_neighbors();
        let holders = cfg.graph.model_holders();
        let mut agents = Vec::with_capacity(num_agents);
        for i in 0..num_agents {
            let xi = cfg.x0.rows(i * n, n).into_owned();
            let mut y_delayed = std::collections::BTreeMap::new();
            y_delayed.insert(i, xi.clone());
            for &j in &in_neighbors[i] {
                y_delayed.insert(j, cfg.x0.rows(j * n, n).into_owned());
            }
            agents.push(AgentRuntime {
                x: xi.clone(),
                y_self: xi,
                y_delayed,
                last_event_time: 0.0,
            });
        }

        Ok(Self {
            cfg,
            n,
            num_agents,
            in_neighbors,
            holders,
            cf,
            exp_delay,
            agents,
            t_now: 0.0,
            queue: BinaryHeap::new(),
            seq: 0,
            events: Vec::new(),
            zeno_window: vec![VecDeque::new(); num_agents],
            zeno_cap: (1.0 / cfg.step_h).ceil() as usize,
            z: vec![RVector::zeros(n); num_agents],
            segments: 0,
        })
    }

    fn rebuild_aggregates(&mut self) {
        for i in 0..self.num_agents {
            let own = &self.agents[i].y_delayed[&i];
            let mut z = own.clone() * self.in_neighbors[i].len() as f64;
            for &j in &self.in_neighbors[i] {
                z -= &self.agents[i].y_delayed[&j];
            }
            self.z[i] = z;
        }
    }

    /// Trigger error ‖y_i − x_i‖ − threshold_i at the current state.
    fn g_now(&self, i: usize) -> f64 {
        let e = (&self.agents[i].y_self - &self.agents[i].x).norm();
        e - self.cfg.agent_threshold(i, self.t_now)
    }

    /// Probe agent i a lead δ ahead of the segment start without mutating:
    /// exact model propagation, one RK4 substep for the state.
    fn probe(
        &self,
        i: usize,
        delta: f64,
        e_half: &RMatrix,
        e_full: &RMatrix,
    ) -> (RVector, RVector) {
        let u0 = &self.cf * &self.z[i];
        let u_mid = &self.cf * (e_half * &self.z[i]);
        let u_end = &self.cf * (e_full * &self.z[i]);
        let x = rk4_state(&self.cfg.dynamics, &self.agents[i].x, delta, &u0, &u_mid, &u_end);
        let y = e_full * &self.agents[i].y_self;
        (x, y)
    }

    fn g_probe(&self, i: usize, delta: f64, e_half: &RMatrix, e_full: &RMatrix) -> f64 {
        let (x, y) = self.probe(i, delta, e_half, e_full);
        (y - x).norm() - self.cfg.agent_threshold(i, self.t_now + delta)
    }

    fn stage_matrices(&self, delta: f64) -> (RMatrix, RMatrix) {
        let a = self.cfg.dynamics.a();
        (expm(&(a * (delta / 2.0))), expm(&(a * delta)))
    }

    /// Advance every agent from the segment start to absolute time `target`.
    fn advance_to(&mut self, target: f64) {
        let delta = target - self.t_now;
        if delta <= 0.0 {
            self.t_now = target.max(self.t_now);
            return;
        }
        let (e_half, e_full) = self.stage_matrices(delta);
        for i in 0..self.num_agents {
            let (x, y) = self.probe(i, delta, &e_half, &e_full);
            let agent = &mut self.agents[i];
            agent.x = x;
            agent.y_self = y;
            for model in agent.y_delayed.values_mut() {
                *model = &e_full * &*model;
            }
        }
        self.t_now = target;
        self.segments += 1;
    }

    /// Deliver every message due at the current time.
    fn apply_due_deliveries(&mut self) {
        while let Some(head) = self.queue.peek() {
            if head.t_deliver > self.t_now + EVENT_TIME_TOL {
                break;
            }
            let msg = self.queue.pop().expect("peeked");
            for &r in &self.holders[msg.sender] {
                self.agents[r]
                    .y_delayed
                    .insert(msg.sender, msg.delivered.clone());
            }
        }
    }

    /// Reset models and enqueue the broadcast for agent i at the current time.
    fn fire_event(&mut self, i: usize, initial: bool) -> Result<()> {
        let t = self.t_now;
        let x = self.agents[i].x.clone();
        let err_before = (&self.agents[i].y_self - &x).norm();

        self.agents[i].y_self = x.clone();
        self.agents[i].last_event_time = t;

        if self.cfg.delay_d > 0.0 {
            self.queue.push(Message {
                t_deliver: t + self.cfg.delay_d,
                seq: self.seq,
                sender: i,
                delivered: &self.exp_delay * &x,
            });
            self.seq += 1;
        } else {
            // Instant delivery: every copy gets the identical broadcast bits.
            for &r in &self.holders[i] {
                self.agents[r].y_delayed.insert(i, x.clone());
            }
        }

        let err_after = (&self.agents[i].y_self - &self.agents[i].x).norm();
        self.events.push(EventRecord {
            agent: i,
            t_event: t,
            x_broadcast: x.iter().copied().collect(),
            t_delivered: t + self.cfg.delay_d,
            err_before,
            err_after,
        });

        if !initial {
            let window = &mut self.zeno_window[i];
            window.push_back(t);
            while let Some(&front) = window.front() {
                if front < t - 1.0 {
                    window.pop_front();
                } else {
                    break;
                }
            }
            if window.len() > self.zeno_cap {
                return Err(Error::ZenoGuard {
                    agent: i,
                    count: window.len(),
                    t,
                });
            }
        }
        Ok(())
    }

    /// Locate the earliest trigger crossing in (t_now, tb]; returns the
    /// bisected absolute time and the agent, ties broken by agent index.
    fn detect_crossings(&self, tb: f64) -> Option<(f64, usize)> {
        let delta = tb - self.t_now;
        let (e_quarter, e_half) = {
            let a = self.cfg.dynamics.a();
            (expm(&(a * (delta / 4.0))), expm(&(a * (delta / 2.0))))
        };
        let e_full = expm(&(self.cfg.dynamics.a() * delta));

        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.num_agents {
            // Midpoint probe first: catches crossings that re-descend
            // within the segment.
            let g_mid = self.g_probe(i, delta / 2.0, &e_quarter, &e_half);
            let bracket = if g_mid >= 0.0 {
                Some((0.0, delta / 2.0))
            } else {
                let g_end = self.g_probe(i, delta, &e_half, &e_full);
                (g_end >= 0.0).then_some((delta / 2.0, delta))
            };
            let Some((mut lo, mut hi)) = bracket else {
                continue;
            };
            for _ in 0..90 {
                if hi - lo <= EVENT_TIME_TOL {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let (emh, emf) = self.stage_matrices(mid);
                if self.g_probe(i, mid, &emh, &emf) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let t_star = self.t_now + hi;
            best = match best {
                None => Some((t_star, i)),
                Some((t_best, _)) if t_star < t_best => Some((t_star, i)),
                keep => keep,
            };
        }
        best
    }

    fn record_sample(
        &mut self,
        tracks: &mut [AgentTrack],
        times: &mut Vec<f64>,
        diag: &mut TraceDiagnostics,
    ) {
        let t = self.t_now;
        times.push(t);
        self.rebuild_aggregates();
        for i in 0..self.num_agents {
            let agent = &self.agents[i];
            let track = &mut tracks[i];
            track.x.extend(agent.x.iter());
            track.y_self.extend(agent.y_self.iter());
            let y_del = &agent.y_delayed[&i];
            track.y_delayed_self.extend(y_del.iter());
            track.err_norm.push((&agent.y_self - &agent.x).norm());
            track.err_delayed_norm.push((y_del - &agent.x).norm());
            track.threshold.push(self.cfg.agent_threshold(i, t));
            let u = &self.cf * &self.z[i];
            track.u.extend(u.iter());

            // Copy agreement: every holder of model i must match the
            // reference copy exactly (delay-free reference is y_self).
            let reference = if self.cfg.delay_d > 0.0 { y_del } else { &agent.y_self };
            for &r in &self.holders[i] {
                let copy = &self.agents[r].y_delayed[&i];
                for k in 0..self.n {
                    let d = (copy[k] - reference[k]).abs();
                    if d > diag.copy_divergence_max {
                        diag.copy_divergence_max = d;
                    }
                }
            }
            // Delayed model catches up with the undelayed one a delay after
            // the last event.
            if self.cfg.delay_d > 0.0 && t - agent.last_event_time >= self.cfg.delay_d {
                let rel = (y_del - &agent.y_self).norm() / agent.y_self.norm().max(1.0);
                if rel > diag.catchup_divergence_max {
                    diag.catchup_divergence_max = rel;
                }
            }
        }
    }
}

/// Simulate [0, t_end]; deterministic for a fixed configuration.
pub fn run(config: &ScenarioConfig) -> Result<SimTrace> {
    let wall_start = Instant::now();
    let mut engine = Engine::new(config)?;
    let n = engine.n;
    let num_agents = engine.num_agents;
    let h = config.step_h;
    let n_steps = ((config.t_end / h) - 1e-9).ceil().max(0.0) as usize;

    let mut tracks = vec![AgentTrack::default(); num_agents];
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut diag = TraceDiagnostics::default();

    // Every agent broadcasts its initial state at t = 0, so all models start
    // at the true states and every trigger error starts at zero. In delayed
    // mode the t = 0 messages arrive at t = d carrying e^{Ad}x(0), exactly
    // the value free propagation reaches, so there is no initial transient.
    for i in 0..num_agents {
        engine.fire_event(i, true)?;
    }
    engine.record_sample(&mut tracks, &mut times, &mut diag);

    for step in 1..=n_steps {
        let t1 = if step == n_steps {
            config.t_end
        } else {
            step as f64 * h
        };
        loop {
            engine.apply_due_deliveries();
            // Boundary convention: an agent already at its threshold fires
            // immediately (possible right after another agent's event at the
            // same instant).
            loop {
                let due: Vec<usize> = (0..num_agents)
                    .filter(|&i| engine.g_now(i) >= 0.0)
                    .collect();
                if due.is_empty() {
                    break;
                }
                for i in due {
                    engine.fire_event(i, false)?;
                }
            }
            if engine.t_now >= t1 - EVENT_TIME_TOL {
                break;
            }
            let mut tb = t1;
            if let Some(head) = engine.queue.peek() {
                if head.t_deliver > engine.t_now + EVENT_TIME_TOL
                    && head.t_deliver < t1 - EVENT_TIME_TOL
                {
                    tb = head.t_deliver;
                }
            }
            engine.rebuild_aggregates();
            match engine.detect_crossings(tb) {
                Some((t_star, agent)) => {
                    engine.advance_to(t_star);
                    engine.fire_event(agent, false)?;
                }
                None => {
                    engine.advance_to(tb);
                }
            }
        }
        engine.t_now = t1; // pin the grid point exactly
        engine.record_sample(&mut tracks, &mut times, &mut diag);

        for agent in &engine.agents {
            if !agent.x.iter().all(|v| v.is_finite()) {
                return Err(Error::SimDiverged { t: t1 });
            }
        }
    }

    diag.steps = n_steps;
    diag.segments = engine.segments;
    diag.wall_seconds = wall_start.elapsed().as_secs_f64();

    let trace = SimTrace {
        n_agents: num_agents,
        n,
        m: config.dynamics.m(),
        delay_d: config.delay_d,
        times,
        agents: tracks,
        events: engine.events,
        diagnostics: diag,
    };
    trace.validate()?;
    Ok(trace)
}
