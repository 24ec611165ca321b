//! The synchronous update map and trajectory runner.
//!
//! Every particle moves simultaneously by `ξ_i = min(Δ̃_i, v_seg(x_i))`
//! computed from time-`t` positions only. Waiting times are realised as in
//! the refined obstacle field: a particle landing on obstacle `j` occupies
//! copy 0 of `τ_j + 1` co-located copies and advances one copy per step
//! before it may leave.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, ParticleConfig, Position};
use crate::obstacles::ObstacleField;
use crate::scalar::{smin, Distance, Scalar};

/// How co-located particles share an obstacle's waiting time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceDiscipline {
    /// A particle moves to the next copy once the particle ahead no longer
    /// occupies it. Identical to running the plain map on the refined field.
    #[default]
    Refined,
    /// A particle starts its countdown only after the particle ahead has left
    /// the obstacle position entirely. Caps throughput at `1/(τ_j+1)`.
    Fifo,
}

/// Progress of a particle through the copies of a waiting obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Service {
    pub obstacle: usize,
    /// Copy index in `0..=τ_j`; at `τ_j` the particle is free to leave.
    pub copy: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState<S> {
    config: ParticleConfig<S>,
    displacement: Vec<S>,
    service: Vec<Option<Service>>,
    time: u64,
}

impl<S: Scalar> SimState<S> {
    /// Initial state at `t = 0`. Particles that start on an obstacle with a
    /// positive waiting time begin at its first copy.
    pub fn new(config: ParticleConfig<S>, field: &ObstacleField<S>) -> Result<Self> {
        if config.domain() != field.domain() {
            return Err(Error::DomainMismatch);
        }
        let service = config.positions().iter().map(|p| arrival_service(field, p)).collect();
        let n = config.len();
        Ok(SimState {
            config,
            displacement: vec![S::zero(); n],
            service,
            time: 0,
        })
    }

    pub fn config(&self) -> &ParticleConfig<S> {
        &self.config
    }
    pub fn domain(&self) -> &Domain<S> {
        self.config.domain()
    }
    pub fn len(&self) -> usize {
        self.config.len()
    }
    pub fn is_empty(&self) -> bool {
        self.config.is_empty()
    }
    pub fn time(&self) -> u64 {
        self.time
    }
    /// Unwrapped displacement of each particle since `t = 0`.
    pub fn displacement(&self) -> &[S] {
        &self.displacement
    }
    pub fn service(&self) -> &[Option<Service>] {
        &self.service
    }
    pub fn position(&self, i: usize) -> &Position<S> {
        &self.config.positions()[i]
    }
    pub fn lifted(&self, i: usize) -> S {
        self.config.lifted(i)
    }

    /// Steps particle `i` must still spend on its current obstacle.
    pub fn remaining_wait(&self, field: &ObstacleField<S>, i: usize) -> u32 {
        match self.service[i] {
            Some(sv) => field.waits()[sv.obstacle].saturating_sub(sv.copy),
            None => 0,
        }
    }

    /// Restarts the clock and displacement counters, keeping positions and
    /// service progress. Used after burn-in.
    pub fn rebased(&self) -> SimState<S> {
        SimState {
            config: self.config.clone(),
            displacement: vec![S::zero(); self.len()],
            service: self.service.clone(),
            time: 0,
        }
    }
}

fn arrival_service<S: Scalar>(field: &ObstacleField<S>, p: &Position<S>) -> Option<Service> {
    let j = field.obstacle_at(p)?;
    (field.waits()[j] > 0).then_some(Service { obstacle: j, copy: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObstacleHit {
    pub particle: usize,
    pub obstacle: usize,
}

/// What happened during one application of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<S> {
    /// Time of the state the step was applied to.
    pub time: u64,
    /// `ξ_i^t`.
    pub displacement: Vec<S>,
    /// `ξ_i^t` fell short of the local speed limit.
    pub blocked: Vec<bool>,
    /// Particles that stopped exactly on an obstacle.
    pub hits: Vec<ObstacleHit>,
}

struct Move<S> {
    xi: S,
    target: Position<S>,
    blocked: bool,
    service: Option<Service>,
    hit: Option<usize>,
}

/// The map `Φ` for one obstacle field.
#[derive(Debug, Clone, Copy)]
pub struct Dynamics<'a, S> {
    field: &'a ObstacleField<S>,
    discipline: ServiceDiscipline,
}

impl<'a, S: Scalar> Dynamics<'a, S> {
    pub fn new(field: &'a ObstacleField<S>) -> Self {
        Dynamics {
            field,
            discipline: ServiceDiscipline::default(),
        }
    }

    pub fn with_discipline(mut self, discipline: ServiceDiscipline) -> Self {
        self.discipline = discipline;
        self
    }

    pub fn field(&self) -> &'a ObstacleField<S> {
        self.field
    }

    fn can_advance_copy(&self, s: &SimState<S>, i: usize, sv: Service) -> bool {
        let here = s.position(i);
        let Some(ahead) = s.config.ahead(i) else {
            return true;
        };
        if ahead != *here {
            return true;
        }
        match self.discipline {
            ServiceDiscipline::Fifo => false,
            ServiceDiscipline::Refined => {
                let j = if i + 1 < s.len() { i + 1 } else { 0 };
                let ahead_copy = s.service[j].map_or(u32::MAX, |a| a.copy);
                ahead_copy > sv.copy
            }
        }
    }

    fn movement(&self, s: &SimState<S>, i: usize) -> Move<S> {
        let field = self.field;
        let dom = s.domain();
        let p = s.position(i);
        if let Some(sv) = s.service[i] {
            if sv.copy < field.waits()[sv.obstacle] {
                let copy = if self.can_advance_copy(s, i, sv) {
                    sv.copy + 1
                } else {
                    sv.copy
                };
                return Move {
                    xi: S::zero(),
                    target: p.clone(),
                    blocked: true,
                    service: Some(Service { copy, ..sv }),
                    hit: None,
                };
            }
        }
        let vseg = field.segment_velocity(p);
        let gap = s.config.gap_unchecked(i);
        let obstacle = field.next_ahead(p).map(|(j, q)| {
            let d = p.distance_to(&q, dom);
            (j, d, q)
        });

        let (xi, target, hit) = match (obstacle, &gap) {
            // the obstacle is no farther than the particle ahead and within reach
            (Some((j, d, q)), g) if !gap_below(g, &d) && d <= *vseg => (d, q, Some(j)),
            (_, Distance::Finite(g)) if g <= vseg => {
                let ahead = s.config.ahead(i).expect("finite gap implies a particle ahead");
                (g.clone(), ahead, None)
            }
            _ => (vseg.clone(), p.advanced(vseg.clone(), dom), None),
        };
        let blocked = xi < *vseg;
        let service = match hit {
            Some(j) if field.waits()[j] > 0 => Some(Service { obstacle: j, copy: 0 }),
            Some(_) => None,
            None if xi.is_zero() => s.service[i],
            None => None,
        };
        Move {
            xi,
            target,
            blocked,
            service,
            hit,
        }
    }

    /// `ξ_i^t`: how far particle `i` would move from `s`.
    pub fn local_velocity(&self, s: &SimState<S>, i: usize) -> Result<S> {
        if i >= s.len() {
            return Err(Error::IndexOutOfRange { index: i, len: s.len() });
        }
        Ok(self.movement(s, i).xi)
    }

    pub fn step(&self, s: &SimState<S>) -> (SimState<S>, StepReport<S>) {
        let n = s.len();
        let mut positions = Vec::with_capacity(n);
        let mut displacement = Vec::with_capacity(n);
        let mut service = Vec::with_capacity(n);
        let mut xis = Vec::with_capacity(n);
        let mut blocked = Vec::with_capacity(n);
        let mut hits = Vec::new();
        for i in 0..n {
            let m = self.movement(s, i);
            positions.push(m.target);
            displacement.push(s.displacement[i].clone() + m.xi.clone());
            service.push(m.service);
            xis.push(m.xi);
            blocked.push(m.blocked);
            if let Some(j) = m.hit {
                hits.push(ObstacleHit {
                    particle: i,
                    obstacle: j,
                });
            }
        }
        let next = SimState {
            config: ParticleConfig::from_positions_unchecked(s.domain().clone(), positions),
            displacement,
            service,
            time: s.time + 1,
        };
        let report = StepReport {
            time: s.time,
            displacement: xis,
            blocked,
            hits,
        };
        (next, report)
    }

    /// Applies the map `steps` times, feeding every transition to the
    /// observers and recording snapshots at the requested step counts
    /// (relative to `s0`).
    pub fn run(
        &self,
        s0: SimState<S>,
        steps: u64,
        observers: &mut [&mut dyn Observer<S>],
        snapshot_at: &[u64],
    ) -> Result<TrajectorySummary<S>> {
        let start = s0.displacement.clone();
        let start_time = s0.time;
        let mut snapshots = Vec::new();
        let mut state = s0;
        let take = |state: &SimState<S>, k: u64, snapshots: &mut Vec<Snapshot<S>>| {
            if snapshot_at.contains(&k) {
                snapshots.push(Snapshot::capture(state, k, &start));
            }
        };
        take(&state, 0, &mut snapshots);
        for k in 1..=steps {
            let (next, report) = self.step(&state);
            for obs in observers.iter_mut() {
                obs.observe(&state, &report, &next).map_err(|message| Error::Observer {
                    time: report.time,
                    message,
                })?;
            }
            state = next;
            take(&state, k, &mut snapshots);
        }
        let displacement = state
            .displacement
            .iter()
            .zip(&start)
            .map(|(a, b)| a.clone() - b.clone())
            .collect();
        Ok(TrajectorySummary {
            steps,
            start_time,
            displacement,
            snapshots,
            final_state: state,
        })
    }
}

/// `x ↦ Φx` with the default service discipline.
pub fn step<S: Scalar>(s: &SimState<S>, z: &ObstacleField<S>) -> (SimState<S>, StepReport<S>) {
    Dynamics::new(z).step(s)
}

pub fn local_velocity<S: Scalar>(s: &SimState<S>, z: &ObstacleField<S>, i: usize) -> Result<S> {
    Dynamics::new(z).local_velocity(s, i)
}

pub fn run<S: Scalar>(
    s0: SimState<S>,
    z: &ObstacleField<S>,
    steps: u64,
    observers: &mut [&mut dyn Observer<S>],
) -> Result<TrajectorySummary<S>> {
    Dynamics::new(z).run(s0, steps, observers, &[])
}

fn gap_below<S: Scalar>(gap: &Distance<S>, d: &S) -> bool {
    matches!(gap, Distance::Finite(g) if g < d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<S> {
    /// Steps since the start of the run.
    pub step: u64,
    pub positions: Vec<S>,
    /// Displacement since the start of the run.
    pub displacement: Vec<S>,
}

impl<S: Scalar> Snapshot<S> {
    fn capture(state: &SimState<S>, step: u64, start: &[S]) -> Self {
        Snapshot {
            step,
            positions: state.config.lifted_all(),
            displacement: state
                .displacement
                .iter()
                .zip(start)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary<S> {
    pub steps: u64,
    /// Simulation time of the first state of the run.
    pub start_time: u64,
    /// Per-particle displacement over the run.
    pub displacement: Vec<S>,
    pub snapshots: Vec<Snapshot<S>>,
    pub final_state: SimState<S>,
}

impl<S: Scalar> TrajectorySummary<S> {
    /// Displacement of every particle after `t` steps of the run.
    pub fn displacement_at(&self, t: u64) -> Result<&[S]> {
        if t == self.steps {
            return Ok(&self.displacement);
        }
        self.snapshots
            .iter()
            .find(|s| s.step == t)
            .map(|s| s.displacement.as_slice())
            .ok_or(Error::MissingSnapshot(t))
    }

    pub fn len(&self) -> usize {
        self.displacement.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displacement.is_empty()
    }
}

/// Receives every transition of a run. Returning `Err` aborts the run.
pub trait Observer<S: Scalar> {
    fn observe(&mut self, before: &SimState<S>, report: &StepReport<S>, after: &SimState<S>) -> Result<(), String>;
}

/// Streams `t,particle_index,position,displacement,blocked_flag` rows, one per
/// particle per step (the row for time `t+1` is written after each step).
pub struct TrajectoryCsv<W> {
    out: W,
    header_written: bool,
}

impl<W: Write> TrajectoryCsv<W> {
    pub const HEADER: &'static str = "t,particle_index,position,displacement,blocked_flag";

    pub fn new(out: W) -> Self {
        TrajectoryCsv {
            out,
            header_written: false,
        }
    }

    /// Writes the header and the `t = 0` rows.
    pub fn write_initial<S: Scalar>(&mut self, s: &SimState<S>) -> std::io::Result<()> {
        self.header()?;
        for i in 0..s.len() {
            writeln!(
                self.out,
                "{},{},{},{},0",
                s.time,
                i,
                s.position(i).offset.to_decimal_string(),
                s.displacement[i].to_decimal_string()
            )?;
        }
        Ok(())
    }

    fn header(&mut self) -> std::io::Result<()> {
        if !self.header_written {
            writeln!(self.out, "{}", Self::HEADER)?;
            self.header_written = true;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<S: Scalar, W: Write> Observer<S> for TrajectoryCsv<W> {
    fn observe(&mut self, _before: &SimState<S>, report: &StepReport<S>, after: &SimState<S>) -> Result<(), String> {
        let mut write = || -> std::io::Result<()> {
            self.header()?;
            for i in 0..after.len() {
                writeln!(
                    self.out,
                    "{},{},{},{},{}",
                    after.time,
                    i,
                    after.position(i).offset.to_decimal_string(),
                    after.displacement[i].to_decimal_string(),
                    u8::from(report.blocked[i])
                )?;
            }
            Ok(())
        };
        write().map_err(|e| format!("trajectory output failed: {e}"))
    }
}

/// Checks the per-step laws of the map: order preservation, monotonicity,
/// the speed bound, the obstacle barrier and the bounded change of particle
/// counts in fixed intervals.
pub struct InvariantChecker<'a, S> {
    field: &'a ObstacleField<S>,
    rng: ChaCha8Rng,
    intervals_per_step: usize,
    fail_fast: bool,
    pub violations: Vec<String>,
    pub steps_checked: u64,
}

impl<'a, S: Scalar> InvariantChecker<'a, S> {
    pub fn new(field: &'a ObstacleField<S>, seed: u64) -> Self {
        InvariantChecker {
            field,
            rng: ChaCha8Rng::seed_from_u64(seed),
            intervals_per_step: 8,
            fail_fast: false,
            violations: Vec::new(),
            steps_checked: 0,
        }
    }

    /// Abort the run on the first violation.
    pub fn fail_fast(mut self) -> Self {
        self.fail_fast = true;
        self
    }

    pub fn intervals_per_step(mut self, k: usize) -> Self {
        self.intervals_per_step = k;
        self
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, before: &SimState<S>, report: &StepReport<S>, after: &SimState<S>) -> Vec<String> {
        let mut bad = Vec::new();
        let t = report.time;
        let dom = before.domain();
        let n = before.len();
        let zero = S::zero();
        for (i, w) in after.config.positions().windows(2).enumerate() {
            if w[0] > w[1] {
                bad.push(format!("t={t}: order broken between {i} and {}", i + 1));
            }
        }
        if let (Some(l), Some(first), Some(last)) = (
            dom.circumference(),
            after.config.positions().first(),
            after.config.positions().last(),
        ) {
            if first.distance_to(last, dom) > *l {
                bad.push(format!("t={t}: leader lapped the last particle"));
            }
        }
        for i in 0..n {
            let p = before.position(i);
            let q = after.position(i);
            let moved = p.distance_to(q, dom);
            let xi = &report.displacement[i];
            if (moved.clone() - xi.clone()).abs() > S::rounding_slack(&dom.length()) {
                bad.push(format!("t={t}: particle {i} moved {moved} but reported {xi}"));
            }
            let vseg = self.field.segment_velocity(p);
            if *xi < zero || xi > vseg {
                bad.push(format!("t={t}: particle {i} displacement {xi} outside [0, {vseg}]"));
            }
            if let Some((_, z)) = self.field.next_ahead(p) {
                if *q > z {
                    bad.push(format!("t={t}: particle {i} jumped over an obstacle"));
                }
            }
        }
        if n > 0 {
            let old = before.config.lifted_all();
            let new = after.config.lifted_all();
            let cap = self.field.cap().clone();
            for _ in 0..self.intervals_per_step {
                let anchor = old[self.rng.random_range(0..n)].clone();
                let shift = S::from_ratio(self.rng.random_range(-4..=4), 4) * cap.clone();
                let width = S::from_ratio(self.rng.random_range(1..=16), 4) * cap.clone();
                let width = match dom.circumference() {
                    Some(l) => smin(width, l.clone() / S::from_int(2)),
                    None => width,
                };
                let a = anchor + shift;
                let b = a.clone() + width;
                let before_count = count_in(&old, dom, &a, &b) as i64;
                let after_count = count_in(&new, dom, &a, &b) as i64;
                if (before_count - after_count).abs() > 1 {
                    bad.push(format!(
                        "t={t}: count in [{a}, {b}] changed from {before_count} to {after_count}"
                    ));
                }
            }
        }
        bad
    }
}

/// Number of particles (including ring images) in the closed interval
/// `[a, b]`, with `b - a < L` on a ring. `lifted` must be sorted.
pub(crate) fn count_in<S: Scalar>(lifted: &[S], dom: &Domain<S>, a: &S, b: &S) -> usize {
    let direct = |lo: &S, hi: &S| {
        let start = lifted.partition_point(|x| x < lo);
        let end = lifted.partition_point(|x| x <= hi);
        end.saturating_sub(start)
    };
    match dom.circumference() {
        None => direct(a, b),
        Some(l) => {
            let Some(x0) = lifted.first() else { return 0 };
            let k = ((a.clone() - x0.clone()) / l.clone()).floor_int();
            let shift = S::from_int(k) * l.clone();
            let a1 = a.clone() - shift.clone();
            let b1 = b.clone() - shift;
            direct(&a1, &b1)
                + direct(&(a1.clone() - l.clone()), &(b1.clone() - l.clone()))
                + direct(&(a1 + l.clone()), &(b1 + l.clone()))
        }
    }
}

impl<S: Scalar> Observer<S> for InvariantChecker<'_, S> {
    fn observe(&mut self, before: &SimState<S>, report: &StepReport<S>, after: &SimState<S>) -> Result<(), String> {
        let bad = self.check(before, report, after);
        self.steps_checked += 1;
        if self.fail_fast {
            if let Some(first) = bad.first() {
                return Err(first.clone());
            }
        }
        self.violations.extend(bad);
        Ok(())
    }
}
