//! Configuration generators and named scenarios.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Dynamics, SimState};
use crate::error::{Error, Result};
use crate::geometry::{Domain, ParticleConfig, Position};
use crate::obstacles::ObstacleField;
use crate::scalar::Scalar;
use crate::stats::nested_window_density;

/// Resolution of randomly drawn coordinates: every generated position is a
/// multiple of `1/GRID`, so exact and float runs see identical inputs.
pub const GRID: i64 = 1000;

fn grid_point<S: Scalar>(u: f64) -> S {
    S::from_ratio((u * GRID as f64).round() as i64, GRID)
}

/// Multiplies the density of `x` by `α = k/n`. Particles are taken in blocks
/// of `n` starting at index 0; each particle is repeated `k div n` times and
/// the first `k mod n` particles of every block get one more copy.
pub fn scale_config<S: Scalar>(x: &ParticleConfig<S>, k: u32, n: u32) -> Result<ParticleConfig<S>> {
    if k == 0 || n == 0 {
        return Err(Error::invalid("scaling factor k/n needs positive k and n"));
    }
    let (m, extra) = (k / n, k % n);
    let mut out = Vec::new();
    for (i, p) in x.positions().iter().enumerate() {
        let copies = m + u32::from((i as u32 % n) < extra);
        out.extend(std::iter::repeat_n(p.clone(), copies as usize));
    }
    ParticleConfig::from_positions(x.domain().clone(), out)
}

/// `n` particles spread evenly: particle `i` at `i·L/n` (on a line window,
/// from its left end).
pub fn equispaced_config<S: Scalar>(domain: &Domain<S>, n: usize) -> Result<ParticleConfig<S>> {
    let len = domain.length();
    let start = domain.origin();
    let coords = (0..n)
        .map(|i| start.clone() + S::from_int(i as i64) * len.clone() / S::from_int(n as i64))
        .collect();
    ParticleConfig::new(domain.clone(), coords)
}

/// `n` particles at independent uniform grid points of the domain.
pub fn random_config<S: Scalar>(domain: &Domain<S>, n: usize, seed: u64) -> Result<ParticleConfig<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = domain.length().to_f64();
    let start = domain.origin();
    let mut coords: Vec<S> = (0..n)
        .map(|_| start.clone() + grid_point::<S>(rng.random::<f64>() * len))
        .map(|c| clamp_into(domain, c))
        .collect();
    coords.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    ParticleConfig::new(domain.clone(), coords)
}

fn clamp_into<S: Scalar>(domain: &Domain<S>, c: S) -> S {
    match domain.circumference() {
        Some(l) if c >= *l => c - l.clone(),
        _ => c,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObstacleKind {
    /// One obstacle every `spacing`, starting at the left end.
    Equispaced { spacing: String },
    /// Exponential gaps with the given rate.
    Poisson { rate: f64, seed: u64 },
    /// Alternating blocks of nearly integer and nearly half-odd gaps whose
    /// lengths grow eightfold, centred at 0 on a line window.
    Irregular,
    /// Obstacles at the triangular numbers `k(k+1)/2`, so gaps grow by one.
    Triangular,
    /// Uniform grid points; `count` distinct positions.
    Uniform { count: usize, seed: u64 },
}

pub fn make_obstacles<S: Scalar>(kind: &ObstacleKind, domain: &Domain<S>, cap: S) -> Result<ObstacleField<S>> {
    let start = domain.origin();
    let len = domain.length();
    let positions: Vec<S> = match kind {
        ObstacleKind::Equispaced { spacing } => {
            let s = S::parse(spacing)?;
            if !s.is_positive() {
                return Err(Error::invalid("obstacle spacing must be positive"));
            }
            let mut out = Vec::new();
            let mut k = 0i64;
            loop {
                let off = S::from_int(k) * s.clone();
                if off >= len {
                    break;
                }
                out.push(start.clone() + off);
                k += 1;
            }
            out
        }
        ObstacleKind::Poisson { rate, seed } => {
            let exp = Exp::new(*rate).map_err(|_| Error::invalid("Poisson rate must be positive"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let limit = len.to_f64();
            let mut u = exp.sample(&mut rng);
            let mut out: Vec<S> = Vec::new();
            while u < limit {
                let p = start.clone() + grid_point::<S>(u);
                if out.last() != Some(&p) && p < start.clone() + len.clone() {
                    out.push(p);
                }
                u += exp.sample(&mut rng);
            }
            out
        }
        ObstacleKind::Irregular => {
            let Domain::Line { start: a, end: b } = domain else {
                return Err(Error::invalid("the irregular field lives on a line window"));
            };
            let half = irregular_half::<S>();
            let mut out: Vec<S> = half
                .iter()
                .rev()
                .filter(|p| p.is_positive())
                .map(|p| -p.clone())
                .collect();
            out.extend(half);
            out.retain(|p| p >= a && p < b);
            out
        }
        ObstacleKind::Triangular => {
            let mut out = Vec::new();
            let mut k = 0i64;
            loop {
                let off = S::from_int(k * (k + 1) / 2);
                if off >= len {
                    break;
                }
                out.push(start.clone() + off);
                k += 1;
            }
            out
        }
        ObstacleKind::Uniform { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let cells = (len.to_f64() * GRID as f64).floor() as i64;
            if (*count as i64) > cells {
                return Err(Error::invalid("more obstacles than grid points"));
            }
            let mut picks = std::collections::BTreeSet::new();
            while picks.len() < *count {
                picks.insert(rng.random_range(0..cells));
            }
            picks
                .into_iter()
                .map(|c| start.clone() + S::from_ratio(c, GRID))
                .collect()
        }
    };
    ObstacleField::new(domain.clone(), positions, cap)
}

/// Right half (from 0) of the irregular example: blocks of lengths
/// `16·8^k`, alternating gaps `1.02` (chain density near 2) and `1.98`
/// (near 1) for unit speed.
fn irregular_half<S: Scalar>() -> Vec<S> {
    let gaps = [S::from_ratio(102, 100), S::from_ratio(198, 100)];
    let mut out = vec![S::zero()];
    let mut y = S::zero();
    let mut block_end = S::zero();
    for k in 0..4u32 {
        block_end = block_end + S::from_int(16 * 8i64.pow(k));
        let g = gaps[(k % 2) as usize].clone();
        while y.clone() + g.clone() <= block_end {
            y = y + g.clone();
            out.push(y.clone());
        }
    }
    out
}

/// Largest window radius used when probing the irregular example.
pub const IRREGULAR_EXTENT: i64 = 16 + 128 + 1024 + 8192;

/// Particles and obstacle field of a constructed example.
#[derive(Debug, Clone)]
pub struct Scenario<S> {
    pub x: ParticleConfig<S>,
    pub z: ObstacleField<S>,
}

/// Ring `L = 10` with an obstacle at every integer, two particles at every
/// half-integer and unit speed. Every position stays in `½ℤ`.
pub fn half_integer_counterexample<S: Scalar>() -> Result<Scenario<S>> {
    let l = 10;
    let domain = Domain::ring(S::from_int(l))?;
    let z = ObstacleField::new(domain.clone(), (0..l).map(S::from_int).collect(), S::one())?;
    let coords = (0..l)
        .flat_map(|k| {
            let p = S::from_ratio(2 * k + 1, 2);
            [p.clone(), p]
        })
        .collect();
    Ok(Scenario {
        x: ParticleConfig::new(domain, coords)?,
        z,
    })
}

/// Whether `2p` is an integer.
pub fn on_half_lattice<S: Scalar>(p: &S) -> bool {
    (S::from_int(2) * p.clone()).is_integer()
}

/// Steps the half-integer scenario and reports the first time a position
/// leaves `½ℤ`, if any.
pub fn check_half_integer<S: Scalar>(steps: u64) -> Result<Option<u64>> {
    let sc = half_integer_counterexample::<S>()?;
    let dynamics = Dynamics::new(&sc.z);
    let mut s = SimState::new(sc.x, &sc.z)?;
    for t in 0..=steps {
        if (0..s.len()).any(|i| !on_half_lattice(&s.lifted(i))) {
            return Ok(Some(t));
        }
        if t < steps {
            s = dynamics.step(&s).0;
        }
    }
    Ok(None)
}

/// Two single particles driven by a shared time-dependent speed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRun<S> {
    pub schedule: Vec<S>,
    pub x: Vec<S>,
    pub xbar: Vec<S>,
}

impl<S: Scalar> ScheduleRun<S> {
    /// `|x_0^t - x̄_0^t|` for `t = 0..=T`.
    pub fn separation(&self) -> Vec<S> {
        self.x
            .iter()
            .zip(&self.xbar)
            .map(|(a, b)| (a.clone() - b.clone()).abs())
            .collect()
    }
}

fn next_obstacle_distance<S: Scalar>(z: &ObstacleField<S>, p: &S) -> Option<S> {
    let (_, q) = z.next_ahead(&Position::at(p.clone()))?;
    Some(q.offset - p.clone())
}

fn lone_step<S: Scalar>(z: &ObstacleField<S>, p: &S, v: &S) -> S {
    let d = next_obstacle_distance(z, p);
    match d {
        Some(d) if d < *v => p.clone() + d,
        _ => p.clone() + v.clone(),
    }
}

/// Runs two lone particles on a line under the speeds in `schedule`.
pub fn run_schedule<S: Scalar>(x0: S, xbar0: S, z: &ObstacleField<S>, schedule: &[S]) -> Result<ScheduleRun<S>> {
    if z.domain().is_ring() {
        return Err(Error::invalid("speed schedules run on a line"));
    }
    let mut x = vec![x0];
    let mut xbar = vec![xbar0];
    for v in schedule {
        if !v.is_positive() {
            return Err(Error::invalid("scheduled speeds must be positive"));
        }
        let a = lone_step(z, x.last().expect("non-empty"), v);
        let b = lone_step(z, xbar.last().expect("non-empty"), v);
        x.push(a);
        xbar.push(b);
    }
    Ok(ScheduleRun {
        schedule: schedule.to_vec(),
        x,
        xbar,
    })
}

/// Builds a speed schedule that pulls the two particles apart: every step the
/// speed equals the leader's distance to its next obstacle, so the leader
/// makes a full step onto that obstacle while the trailer is cut short
/// whenever its own next obstacle is closer.
pub fn adversarial_velocities<S: Scalar>(
    x0: S,
    xbar0: S,
    z: &ObstacleField<S>,
    steps: usize,
) -> Result<ScheduleRun<S>> {
    if x0 == xbar0 {
        return Err(Error::Degenerate("the two particles must start apart".into()));
    }
    let mut schedule = Vec::with_capacity(steps);
    let (mut a, mut b) = (x0.clone(), xbar0.clone());
    for t in 0..steps {
        let leader = if a >= b { &a } else { &b };
        let v = next_obstacle_distance(z, leader)
            .ok_or_else(|| Error::Degenerate(format!("no obstacle ahead of the leader at t={t}; widen the window")))?;
        a = lone_step(z, &a, &v);
        b = lone_step(z, &b, &v);
        schedule.push(v);
    }
    run_schedule(x0, xbar0, z, &schedule)
}

/// Outcome of a named scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub holds: bool,
    /// Named measurements as decimal strings.
    pub metrics: BTreeMap<String, String>,
}

pub const SCENARIOS: &[&str] = &[
    "half_integer",
    "adversarial",
    "irregular",
    "left_shift",
    "alpha_scaling",
];

/// Runs a scenario by name. The property checked:
/// - `half_integer`: 100 exact steps stay in `½ℤ`;
/// - `adversarial`: separation at least `t/10` for `t ≤ 200`;
/// - `irregular`: nested-window chain density varies by more than 0.2;
/// - `left_shift`: one step moves the extended chain onto itself shifted by
///   one index, for a seeded random ring field;
/// - `alpha_scaling`: velocities of the scaled chain match the prediction
///   within 2%.
pub fn run_scenario(name: &str, seed: u64) -> Result<ScenarioOutcome> {
    use crate::scalar::Exact;
    let metric = |k: &str, v: String| (k.to_string(), v);
    let (holds, metrics) = match name {
        "half_integer" => {
            let escaped = check_half_integer::<Exact>(100)?;
            (
                escaped.is_none(),
                vec![
                    metric("steps", "100".into()),
                    metric("first_escape", escaped.map_or("none".into(), |t| t.to_string())),
                ],
            )
        }
        "adversarial" => {
            let dom = Domain::line(Exact::from_int(0), Exact::from_int(30_000))?;
            let z = make_obstacles(&ObstacleKind::Triangular, &dom, Exact::one())?;
            let r = adversarial_velocities(Exact::one(), Exact::zero(), &z, 200)?;
            let sep = r.separation();
            let worst = (1..sep.len())
                .map(|t| sep[t].to_f64() / t as f64)
                .fold(f64::INFINITY, f64::min);
            (
                worst >= 0.1,
                vec![
                    metric("final_separation", sep.last().expect("non-empty").to_decimal_string()),
                    metric("min_rate", format!("{worst}")),
                ],
            )
        }
        "irregular" => {
            let r = Exact::from_int(IRREGULAR_EXTENT + 10);
            let dom = Domain::line(-r.clone(), r)?;
            let z = make_obstacles(&ObstacleKind::Irregular, &dom, Exact::one())?;
            let chain = z.extend().positions();
            let est = nested_window_density(&chain, &Exact::zero(), &Exact::from_int(32), 10)?;
            let spread = est.upper.clone() - est.lower.clone();
            (
                spread > Exact::from_ratio(1, 5),
                vec![
                    metric("rho_lower", est.lower.to_decimal_string()),
                    metric("rho_upper", est.upper.to_decimal_string()),
                ],
            )
        }
        "left_shift" => {
            let dom = Domain::ring(Exact::from_int(40))?;
            let z = make_obstacles(&ObstacleKind::Uniform { count: 7, seed }, &dom, Exact::one())?;
            let holds = left_shift_holds(&z)?;
            (holds, vec![metric("obstacles", z.len().to_string())])
        }
        "alpha_scaling" => {
            let mut holds = true;
            let mut metrics = Vec::new();
            for (k, n, expected) in [(1u32, 2u32, 1.0), (1, 1, 1.0), (3, 2, 2.0 / 3.0)] {
                let v = alpha_scaled_velocity(k, n, 2000)?;
                holds &= ((v - expected) / expected).abs() <= 0.02;
                metrics.push(metric(&format!("v_{k}_{n}"), format!("{v}")));
            }
            (holds, metrics)
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown scenario '{other}' (known: {})",
                SCENARIOS.join(", ")
            )))
        }
    };
    Ok(ScenarioOutcome {
        name: name.to_string(),
        holds,
        metrics: metrics.into_iter().collect(),
    })
}

/// One step from `x = z̃` lands every particle on the next chain point.
pub fn left_shift_holds<S: Scalar>(z: &ObstacleField<S>) -> Result<bool> {
    let chain = z.extend();
    let x = chain.as_particle_config();
    let n = x.len();
    if n == 0 {
        return Err(Error::Degenerate("empty chain".into()));
    }
    let s = SimState::new(x.clone(), z)?;
    let (next, _) = Dynamics::new(z).step(&s);
    let l = z.domain().circumference().cloned();
    Ok((0..n).all(|i| {
        let expected = if i + 1 < n {
            x.lifted(i + 1)
        } else {
            x.lifted(0) + l.clone().unwrap_or_else(S::zero)
        };
        next.lifted(i) == expected
    }))
}

/// Mean velocity of the chain `z̃` of the ring `L = 60`, `z = 3ℤ` (density
/// 1), scaled by `k/n`, over `steps` steps.
pub fn alpha_scaled_velocity(k: u32, n: u32, steps: u64) -> Result<f64> {
    let dom = Domain::ring(60.0)?;
    let z = make_obstacles(&ObstacleKind::Equispaced { spacing: "3".into() }, &dom, 1.0)?;
    let x = scale_config(&z.extend().as_particle_config(), k, n)?;
    let s = SimState::new(x, &z)?;
    let traj = Dynamics::new(&z).run(s, steps, &mut [], &[])?;
    crate::stats::mean_velocity(&traj, steps)
}
