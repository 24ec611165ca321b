//! Dynamical coupling of two processes sharing one obstacle field.
//!
//! Particles of the two processes (`x` and `x̄`) are paired when one
//! overtakes the other. Unpaired particles are defects. On a ring the
//! particles of each process are indexed periodically: index `J` refers to
//! particle `J mod N` shifted by `J div N` laps.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Dynamics, SimState};
use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::obstacles::ObstacleField;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    X,
    XBar,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::X => Side::XBar,
            Side::XBar => Side::X,
        }
    }

    fn idx(self) -> usize {
        match self {
            Side::X => 0,
            Side::XBar => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// A paired mover switches to the unpaired particle just behind the
    /// first paired one it passed.
    A,
    /// An unpaired mover strictly passes a paired particle and takes it
    /// over; the old partner becomes a defect.
    BPrime,
    /// An unpaired mover forms a new pair.
    BDoublePrime,
}

/// Particle `mover` of `side` overtook the opposite particles with periodic
/// indices `first..=last`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OvertakeEvent {
    pub side: Side,
    pub mover: usize,
    pub first: i64,
    pub last: i64,
    /// `i_•`, filled in when the event is applied.
    pub bullet: Option<i64>,
    /// `i_∘`, filled in when the event is applied.
    pub circ: Option<i64>,
    pub rule: Option<Rule>,
}

impl OvertakeEvent {
    pub fn contains(&self, j: i64) -> bool {
        self.first <= j && j <= self.last
    }
}

/// Two simultaneously evolved processes and their pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState<S> {
    states: [SimState<S>; 2],
    /// `partner[side][i]`: periodic index of the partner of particle `i`,
    /// relative to particle `i` at lap offset 0.
    partner: [Vec<Option<i64>>; 2],
}

impl<S: Scalar> CoupledState<S> {
    /// Both processes with every particle unpaired.
    pub fn new(x: SimState<S>, xbar: SimState<S>) -> Result<Self> {
        if x.domain() != xbar.domain() {
            return Err(Error::DomainMismatch);
        }
        let partner = [vec![None; x.len()], vec![None; xbar.len()]];
        Ok(CoupledState {
            states: [x, xbar],
            partner,
        })
    }

    /// One coupled step: both processes move under `dynamics`, then the
    /// pairing rules are applied to the overtaking events.
    pub fn advance(&self, dynamics: &Dynamics<S>) -> Result<(CoupledState<S>, Vec<OvertakeEvent>)> {
        let mut next = CoupledState {
            states: [dynamics.step(&self.states[0]).0, dynamics.step(&self.states[1]).0],
            partner: self.partner.clone(),
        };
        let mut events = detect_overtakes(self, &next)?;
        apply_pairing(&mut next, &mut events)?;
        Ok((next, events))
    }

    pub fn state(&self, side: Side) -> &SimState<S> {
        &self.states[side.idx()]
    }

    pub fn time(&self) -> u64 {
        self.states[0].time()
    }

    pub fn partner(&self, side: Side, i: usize) -> Option<i64> {
        self.partner[side.idx()][i]
    }

    pub fn pairs(&self) -> usize {
        self.partner[0].iter().flatten().count()
    }

    pub fn defects(&self, side: Side) -> usize {
        self.partner[side.idx()].iter().filter(|p| p.is_none()).count()
    }

    fn count(&self, side: Side) -> i64 {
        self.states[side.idx()].len() as i64
    }

    /// Splits a periodic index into particle and lap shift.
    fn resolve(&self, side: Side, j: i64) -> (usize, i64) {
        let n = self.count(side);
        if self.states[0].domain().is_ring() {
            (j.rem_euclid(n) as usize, j.div_euclid(n))
        } else {
            (j as usize, 0)
        }
    }

    /// Position of periodic index `j`. Shifting laps keeps the offset, so
    /// coincident particles compare equal in float mode too.
    pub fn position(&self, side: Side, j: i64) -> Position<S> {
        let (i, lap) = self.resolve(side, j);
        self.states[side.idx()].position(i).shifted_laps(lap)
    }

    /// Unwrapped coordinate of periodic index `j`.
    pub fn lifted(&self, side: Side, j: i64) -> S {
        self.position(side, j).lifted(self.states[0].domain())
    }

    fn is_paired(&self, side: Side, j: i64) -> bool {
        let (i, _) = self.resolve(side, j);
        self.partner[side.idx()][i].is_some()
    }

    /// Pairs periodic index `a` of `side` with periodic index `b` of the
    /// other side.
    fn link(&mut self, side: Side, a: i64, b: i64) {
        let (ia, lap_a) = self.resolve(side, a);
        let n_other = self.count(side.other());
        let b_rel = if self.states[0].domain().is_ring() {
            b - lap_a * n_other
        } else {
            b
        };
        let (ib, lap_b) = self.resolve(side.other(), b_rel);
        let n_self = self.count(side);
        let a_rel = if self.states[0].domain().is_ring() {
            ia as i64 - lap_b * n_self
        } else {
            ia as i64
        };
        self.partner[side.idx()][ia] = Some(b_rel);
        self.partner[side.other().idx()][ib] = Some(a_rel);
    }

    /// Unpairs periodic index `j` of `side` and its partner.
    fn unlink(&mut self, side: Side, j: i64) {
        let (i, _) = self.resolve(side, j);
        if let Some(p) = self.partner[side.idx()][i].take() {
            let (ip, _) = self.resolve(side.other(), p);
            self.partner[side.other().idx()][ip] = None;
        }
    }

    /// Periodic partner index of periodic index `j` of `side`, expressed in
    /// the same lap frame as `j`.
    fn partner_of(&self, side: Side, j: i64) -> Option<i64> {
        let (i, lap) = self.resolve(side, j);
        let p = self.partner[side.idx()][i]?;
        Some(if self.states[0].domain().is_ring() {
            p + lap * self.count(side.other())
        } else {
            p
        })
    }

    /// Smallest periodic index whose position exceeds `a` (`N` if none on a
    /// line).
    fn first_above(&self, side: Side, a: &Position<S>) -> i64 {
        let n = self.count(side);
        let st = &self.states[side.idx()];
        let (mut lo, mut hi) = if !st.domain().is_ring() {
            (0, n)
        } else if n == 0 {
            return 0;
        } else {
            let k = a.lap - st.position(0).lap;
            ((k - 1) * n, (k + 2) * n)
        };
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.position(side, mid) <= *a {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// All overtaking events of the transition `prev → next` (pairings of
/// `next` are ignored). `x`-side events come first, each side by mover index.
pub fn detect_overtakes<S: Scalar>(prev: &CoupledState<S>, next: &CoupledState<S>) -> Result<Vec<OvertakeEvent>> {
    if prev.count(Side::X) != next.count(Side::X) || prev.count(Side::XBar) != next.count(Side::XBar) {
        return Err(Error::Coupling {
            time: next.time(),
            detail: "particle counts differ between consecutive states".into(),
        });
    }
    let mut events = Vec::new();
    for side in [Side::X, Side::XBar] {
        let other = side.other();
        for i in 0..prev.count(side) {
            let a = prev.position(side, i);
            let b = next.position(side, i);
            if b <= a {
                continue;
            }
            let first = prev.first_above(other, &a);
            let last = next.first_above(other, &b) - 1;
            if first <= last {
                events.push(OvertakeEvent {
                    side,
                    mover: i as usize,
                    first,
                    last,
                    bullet: None,
                    circ: None,
                    rule: None,
                });
            }
        }
    }
    check_overtake_consistency(next, &events)?;
    Ok(events)
}

/// Each opposite particle is overtaken at most once per step, and a mover
/// that is itself overtaken must end on the same spot as its overtaker.
fn check_overtake_consistency<S: Scalar>(next: &CoupledState<S>, events: &[OvertakeEvent]) -> Result<()> {
    let fail = |detail: String| Error::Coupling {
        time: next.time(),
        detail,
    };
    for side in [Side::X, Side::XBar] {
        let mut ranges: Vec<_> = events
            .iter()
            .filter(|e| e.side == side)
            .map(|e| (e.first, e.last))
            .collect();
        ranges.sort_unstable();
        for w in ranges.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(fail(format!("{side:?} movers overtook a common particle")));
            }
        }
        let n = next.count(side);
        for e in events.iter().filter(|e| e.side == side.other()) {
            for j in e.first..=e.last {
                let (k, _) = next.resolve(side, j);
                let is_mover = events.iter().any(|m| m.side == side && m.mover == k);
                if is_mover && next.position(side, j) != next.position(side.other(), e.mover as i64) {
                    return Err(fail(format!(
                        "{side:?} particle {k} overtook and was overtaken at distinct positions"
                    )));
                }
            }
            if e.last - e.first >= n && n > 0 && next.states[0].domain().is_ring() {
                return Err(fail("a mover overtook a full lap".into()));
            }
        }
    }
    Ok(())
}

/// Applies the pairing rules to `state` (already advanced to time `t`), in
/// event order, reading the pairing as it is being updated. Fills in
/// `bullet`, `circ` and `rule` on each event.
pub fn apply_pairing<S: Scalar>(state: &mut CoupledState<S>, events: &mut [OvertakeEvent]) -> Result<()> {
    for e in events.iter_mut() {
        let side = e.side;
        let other = side.other();
        let mover = e.mover as i64;
        // The mover's own partner does not count as paired: a pair member
        // that passes its partner together with a defect re-pairs with the
        // defect.
        let own = state.partner_of(side, mover);
        e.bullet = (e.first..=e.last).find(|&j| Some(j) != own && state.is_paired(other, j));
        e.circ = match e.bullet {
            Some(b) if b > e.first => Some(b - 1),
            Some(_) => None,
            None => Some(e.last),
        };
        if own.is_some() {
            if let Some(c) = e.circ.filter(|&c| Some(c) != own) {
                state.unlink(side, mover);
                state.link(side, mover, c);
                e.rule = Some(Rule::A);
            }
            continue;
        }
        let strictly_past = e
            .bullet
            .is_some_and(|b| state.position(side, mover) > state.position(other, b));
        if strictly_past {
            let b = e.bullet.expect("checked above");
            let old = state.partner_of(other, b).ok_or_else(|| Error::Coupling {
                time: state.time(),
                detail: "paired particle without a partner".into(),
            })?;
            state.unlink(side, old);
            state.link(side, mover, b);
            e.rule = Some(Rule::BPrime);
        } else if let Some(c) = e.circ {
            if state.is_paired(other, c) {
                return Err(Error::Coupling {
                    time: state.time(),
                    detail: format!("{other:?} particle {c} chosen for a new pair is already paired"),
                });
            }
            state.link(side, mover, c);
            e.rule = Some(Rule::BDoublePrime);
        }
    }
    Ok(())
}

/// Every way in which `state` fails to be proper.
pub fn is_proper<S: Scalar>(state: &CoupledState<S>, field: &ObstacleField<S>) -> Vec<String> {
    let mut bad = Vec::new();
    let t = state.time();
    let dom = state.states[0].domain();
    let defects: [Vec<Position<S>>; 2] = [Side::X, Side::XBar].map(|side| {
        (0..state.count(side))
            .filter(|&j| !state.is_paired(side, j))
            .map(|j| state.position(side, j))
            .collect()
    });
    let mut chain: Vec<(usize, i64)> = Vec::new();
    for i in 0..state.count(Side::X) {
        let Some(j) = state.partner(Side::X, i as usize) else {
            continue;
        };
        chain.push((i as usize, j));
        let a = state.position(Side::X, i);
        let b = state.position(Side::XBar, j);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let vseg = field.segment_velocity(&lo);
        if lo.distance_to(&hi, dom) > *vseg {
            bad.push(format!("t={t}: pair (x{i}, x̄{j}) farther apart than {vseg}"));
        }
        if let Some((_, z)) = field.next_ahead(&lo) {
            if z < hi {
                bad.push(format!("t={t}: obstacle inside pair (x{i}, x̄{j})"));
            }
        }
        for (k, side) in [Side::X, Side::XBar].into_iter().enumerate() {
            if count_open(&defects[k], dom.is_ring(), &lo, &hi) > 0 {
                bad.push(format!("t={t}: {side:?} defect inside pair (x{i}, x̄{j})"));
            }
        }
    }
    for w in chain.windows(2) {
        if w[1].1 <= w[0].1 {
            bad.push(format!("t={t}: pairs of x{} and x{} cross", w[0].0, w[1].0));
        }
    }
    if let (Some(first), Some(last)) = (chain.first(), chain.last()) {
        if dom.is_ring() && chain.len() > 1 && last.1 - first.1 >= state.count(Side::XBar) {
            bad.push(format!(
                "t={t}: pairs of x{} and x{} cross through the ring",
                last.0, first.0
            ));
        }
    }
    bad
}

/// Points (with ring images) strictly between `lo` and `hi`; `sorted` must
/// span at most one lap.
fn count_open<S: Scalar>(sorted: &[Position<S>], ring: bool, lo: &Position<S>, hi: &Position<S>) -> usize {
    let direct = |a: &Position<S>, b: &Position<S>| {
        let start = sorted.partition_point(|x| x <= a);
        let end = sorted.partition_point(|x| x < b);
        end.saturating_sub(start)
    };
    match sorted.first() {
        None => 0,
        Some(_) if !ring => direct(lo, hi),
        Some(x0) => {
            let k = lo.lap - x0.lap;
            (k - 1..=k + 1)
                .map(|m| direct(&lo.shifted_laps(-m), &hi.shifted_laps(-m)))
                .sum()
        }
    }
}

/// One sample of a coupled run.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRow<S> {
    pub t: u64,
    pub defects_x: usize,
    pub defects_xbar: usize,
    pub pairs: usize,
    /// `|V(x,0,t) - V(x̄,0,t)|·t`.
    pub v_gap_abs: S,
    pub proper: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOptions {
    pub steps: u64,
    /// Record a row every this many steps (the last step is always kept).
    pub record_every: u64,
    /// Stop with an error at the first improper state.
    pub abort_on_violation: bool,
    /// Nearly successful if the final defect density is below this fraction
    /// of the initial one.
    pub threshold: f64,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        CouplingOptions {
            steps: 10_000,
            record_every: 1,
            abort_on_violation: true,
            threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingDiagnostics<S> {
    pub rows: Vec<CouplingRow<S>>,
    pub steps: u64,
    pub initial_defect_density: [S; 2],
    pub final_defect_density: [S; 2],
    /// `is_proper` held after every step.
    pub always_proper: bool,
    pub violations: Vec<String>,
    /// `#x-defects - #x̄-defects` never changed.
    pub defect_difference_constant: bool,
    /// `|V(x,0,T) - V(x̄,0,T)|`.
    pub final_velocity_gap: S,
    pub nearly_successful: bool,
    pub events: u64,
}

/// Evolves both processes in lockstep, pairing after every step.
pub fn run_coupled<S: Scalar>(
    x: SimState<S>,
    xbar: SimState<S>,
    field: &ObstacleField<S>,
    options: &CouplingOptions,
) -> Result<CouplingDiagnostics<S>> {
    if !x.domain().is_ring() {
        return Err(Error::invalid("coupled runs need a ring"));
    }
    if x.len() != xbar.len() || x.is_empty() {
        return Err(Error::invalid("coupled processes need equal, positive particle counts"));
    }
    if options.steps == 0 {
        return Err(Error::Degenerate("coupled run needs at least one step".into()));
    }
    let dynamics = Dynamics::new(field);
    let l = x.domain().length();
    let density = |n: usize| S::from_int(n as i64) / l.clone();
    let mut state = CoupledState::new(x, xbar)?;
    let initial = [density(state.defects(Side::X)), density(state.defects(Side::XBar))];
    let difference = state.defects(Side::X) as i64 - state.defects(Side::XBar) as i64;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut difference_constant = true;
    let mut events_total = 0u64;
    let every = options.record_every.max(1);
    for k in 1..=options.steps {
        let (next, events) = state.advance(&dynamics)?;
        events_total += events.len() as u64;
        let bad = is_proper(&next, field);
        if !bad.is_empty() && options.abort_on_violation {
            return Err(Error::Coupling {
                time: next.time(),
                detail: format!("{}; state: {}", bad.join("; "), dump(&next)),
            });
        }
        let proper = bad.is_empty();
        violations.extend(bad);
        if next.defects(Side::X) as i64 - next.defects(Side::XBar) as i64 != difference {
            difference_constant = false;
        }
        state = next;
        if k % every == 0 || k == options.steps {
            let gap = state.states[0].displacement()[0].clone() - state.states[1].displacement()[0].clone();
            rows.push(CouplingRow {
                t: k,
                defects_x: state.defects(Side::X),
                defects_xbar: state.defects(Side::XBar),
                pairs: state.pairs(),
                v_gap_abs: gap.abs(),
                proper,
            });
        }
    }
    let final_density = [density(state.defects(Side::X)), density(state.defects(Side::XBar))];
    let t = S::from_int(options.steps as i64);
    let gap = (state.states[0].displacement()[0].clone() - state.states[1].displacement()[0].clone()).abs() / t;
    let below = |f: &S, i: &S| f.to_f64() < options.threshold * i.to_f64();
    let nearly_successful = below(&final_density[0], &initial[0]) && below(&final_density[1], &initial[1]);
    Ok(CouplingDiagnostics {
        rows,
        steps: options.steps,
        initial_defect_density: initial,
        final_defect_density: final_density,
        always_proper: violations.is_empty(),
        violations,
        defect_difference_constant: difference_constant,
        final_velocity_gap: gap,
        nearly_successful,
        events: events_total,
    })
}

fn dump<S: Scalar>(state: &CoupledState<S>) -> String {
    let side = |s: Side| {
        (0..state.count(s))
            .map(|j| {
                let p = state.lifted(s, j).to_decimal_string();
                match state.partner(s, j as usize) {
                    Some(q) => format!("{p}~{q}"),
                    None => p,
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!("x=[{}] x̄=[{}]", side(Side::X), side(Side::XBar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, ParticleConfig};
    use crate::scalar::Exact;

    fn q(s: &str) -> Exact {
        Exact::parse(s).unwrap()
    }
    fn qs(v: &[&str]) -> Vec<Exact> {
        v.iter().map(|s| q(s)).collect()
    }
    fn line() -> Domain<Exact> {
        Domain::line(q("-10"), q("100")).unwrap()
    }

    fn coupled(dom: &Domain<Exact>, z: &ObstacleField<Exact>, x: &[&str], xb: &[&str]) -> CoupledState<Exact> {
        let sx = SimState::new(ParticleConfig::new(dom.clone(), qs(x)).unwrap(), z).unwrap();
        let sb = SimState::new(ParticleConfig::new(dom.clone(), qs(xb)).unwrap(), z).unwrap();
        CoupledState::new(sx, sb).unwrap()
    }

    fn advance(s: &CoupledState<Exact>, z: &ObstacleField<Exact>) -> CoupledState<Exact> {
        let d = Dynamics::new(z);
        CoupledState {
            states: [d.step(&s.states[0]).0, d.step(&s.states[1]).0],
            partner: s.partner.clone(),
        }
    }

    fn spans(events: &[OvertakeEvent]) -> Vec<(Side, usize, i64, i64)> {
        events.iter().map(|e| (e.side, e.mover, e.first, e.last)).collect()
    }

    #[test]
    fn passing_partner_and_defect_repairs_with_defect() {
        let z = ObstacleField::empty(line(), q("1")).unwrap();
        let x = ParticleConfig::new(line(), qs(&["0.2", "0.5", "0.6"])).unwrap();
        let xbar = ParticleConfig::new(line(), qs(&["0.1"])).unwrap();
        let mut s = CoupledState::new(SimState::new(x, &z).unwrap(), SimState::new(xbar, &z).unwrap()).unwrap();
        s.link(Side::XBar, 0, 0);
        let (next, events) = s.advance(&Dynamics::new(&z)).unwrap();
        assert_eq!(next.lifted(Side::XBar, 0), q("1.1"));
        assert_eq!(next.lifted(Side::X, 1), q("0.6"));
        assert_eq!((events[0].first, events[0].last), (0, 1));
        assert_eq!(events[0].rule, Some(Rule::A));
        assert_eq!(next.partner(Side::XBar, 0), Some(1));
        assert_eq!(next.partner(Side::X, 0), None);
        assert!(is_proper(&next, &z).is_empty());
    }

    #[test]
    fn mutual_overtake_at_common_point() {
        let z = ObstacleField::empty(line(), q("1")).unwrap();
        let s = coupled(&line(), &z, &["0.5", "1"], &["0.2", "1", "1"]);
        let n = advance(&s, &z);
        assert_eq!(n.state(Side::X).lifted(0), q("1"));
        assert_eq!(n.state(Side::XBar).lifted(1), q("1"));
        let ev = detect_overtakes(&s, &n).unwrap();
        assert_eq!(spans(&ev), vec![(Side::X, 0, 1, 1), (Side::XBar, 0, 0, 0)]);
    }

    #[test]
    fn no_crossing_no_events() {
        let z = ObstacleField::empty(line(), q("1")).unwrap();
        let s = coupled(&line(), &z, &["0"], &["5"]);
        assert!(detect_overtakes(&s, &advance(&s, &z)).unwrap().is_empty());
    }

    #[test]
    fn both_reach_the_obstacle() {
        let z = ObstacleField::new(line(), qs(&["0.6"]), q("1")).unwrap();
        let s = coupled(&line(), &z, &["0"], &["0.5"]);
        let mut n = advance(&s, &z);
        let mut ev = detect_overtakes(&s, &n).unwrap();
        assert_eq!(spans(&ev), vec![(Side::X, 0, 0, 0)]);
        // single unpaired particles form a pair
        apply_pairing(&mut n, &mut ev).unwrap();
        assert_eq!(ev[0].rule, Some(Rule::BDoublePrime));
        assert_eq!(n.partner(Side::X, 0), Some(0));
        assert_eq!(n.partner(Side::XBar, 0), Some(0));
        assert!(is_proper(&n, &z).is_empty());
    }

    #[test]
    fn strict_overtake_of_a_paired_particle() {
        // x̄_0 waits on an obstacle paired with x_1; x_0 only reaches it
        let z = ObstacleField::new(line(), qs(&["1"]), q("2"))
            .unwrap()
            .with_waits(vec![1])
            .unwrap();
        let mut s = coupled(&line(), &z, &["0.5", "1"], &["1"]);
        s.link(Side::X, 1, 0);
        let mut n = advance(&s, &z);
        // x_0 hits the obstacle at 1: not strictly past x̄_0, so nothing
        let mut ev = detect_overtakes(&s, &n).unwrap();
        apply_pairing(&mut n, &mut ev).unwrap();
        assert!(ev.iter().all(|e| e.rule.is_none()));
    }

    #[test]
    fn b_prime_moves_defect_to_old_partner() {
        let z = ObstacleField::new(line(), qs(&["9"]), q("2")).unwrap();
        // x̄_0 (paired with x_1 at 1) is stuck behind x̄_1; x-defect x_0 passes it
        let mut s = coupled(&line(), &z, &["0", "1"], &["0.5", "0.5"]);
        s.link(Side::X, 1, 0);
        let mut n = advance(&s, &z);
        assert_eq!(n.state(Side::X).lifted(0), q("1"));
        assert_eq!(n.state(Side::XBar).lifted(0), q("0.5"));
        let mut ev = detect_overtakes(&s, &n).unwrap();
        apply_pairing(&mut n, &mut ev).unwrap();
        let e = ev.iter().find(|e| e.side == Side::X && e.mover == 0).unwrap();
        assert_eq!(e.bullet, Some(0));
        assert_eq!(e.rule, Some(Rule::BPrime));
        assert_eq!(n.partner(Side::X, 0), Some(0));
        assert_eq!(n.partner(Side::X, 1), None);
    }

    #[test]
    fn improper_pairs_are_reported() {
        let z = ObstacleField::new(line(), qs(&["1"]), q("2")).unwrap();
        let mut s = coupled(&line(), &z, &["0.5"], &["1.5"]);
        assert!(is_proper(&s, &z).is_empty());
        s.link(Side::X, 0, 0);
        let bad = is_proper(&s, &z);
        assert_eq!(bad.len(), 1, "{bad:?}");
        assert!(bad[0].contains("obstacle"));

        let z = ObstacleField::empty(line(), q("1")).unwrap();
        let mut s = coupled(&line(), &z, &["1"], &["1"]);
        s.link(Side::X, 0, 0);
        assert!(is_proper(&s, &z).is_empty());
    }

    #[test]
    fn ring_link_uses_periodic_indices() {
        let ring = Domain::ring(q("10")).unwrap();
        let z = ObstacleField::empty(ring.clone(), q("1")).unwrap();
        let mut s = coupled(&ring, &z, &["0.5", "5"], &["4.5", "9.5"]);
        // x_0 at 0.5 pairs with x̄_1 one lap back at -0.5
        s.link(Side::X, 0, -1);
        assert_eq!(s.partner(Side::X, 0), Some(-1));
        assert_eq!(s.partner(Side::XBar, 1), Some(2));
        assert_eq!(s.lifted(Side::XBar, -1), q("-0.5"));
        assert_eq!(s.lifted(Side::X, 2), q("10.5"));
        assert!(is_proper(&s, &z).is_empty());
        assert_eq!(s.first_above(Side::XBar, &Position::at(q("9.5"))), 2);
        assert_eq!(
            s.first_above(
                Side::XBar,
                &Position {
                    lap: -2,
                    offset: q("0")
                }
            ),
            -4
        );
    }

    #[test]
    fn identical_processes_never_separate() {
        let ring = Domain::ring(q("20")).unwrap();
        let z = ObstacleField::new(ring.clone(), qs(&["0", "7", "13.5"]), q("1")).unwrap();
        let x = ParticleConfig::new(ring, qs(&["1", "2.5", "3", "8", "11", "19"])).unwrap();
        let s = SimState::new(x, &z).unwrap();
        let opts = CouplingOptions {
            steps: 200,
            ..Default::default()
        };
        let d = run_coupled(s.clone(), s, &z, &opts).unwrap();
        assert!(d.rows.iter().all(|r| r.v_gap_abs == q("0")));
        assert!(d.always_proper);
    }

    #[test]
    fn small_ring_run_stays_proper() {
        let ring = Domain::ring(q("12")).unwrap();
        let z = ObstacleField::new(ring.clone(), qs(&["0", "2.5", "7"]), q("1")).unwrap();
        let x = ParticleConfig::new(ring.clone(), qs(&["0.25", "1", "4", "4", "9"])).unwrap();
        let xb = ParticleConfig::new(ring, qs(&["3", "5.5", "6", "10", "11.75"])).unwrap();
        let opts = CouplingOptions {
            steps: 300,
            ..Default::default()
        };
        let d = run_coupled(SimState::new(x, &z).unwrap(), SimState::new(xb, &z).unwrap(), &z, &opts).unwrap();
        assert!(d.always_proper, "{:?}", d.violations);
        assert!(d.defect_difference_constant);
    }
}
