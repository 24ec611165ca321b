//! Density and velocity estimators and the fundamental diagram.

use serde::{Deserialize, Serialize};

use crate::dynamics::{count_in, TrajectorySummary};
use crate::error::{Error, Result};
use crate::geometry::ParticleConfig;
use crate::obstacles::{ChainDensity, ObstacleField};
use crate::scalar::{smax, smin, Scalar};

/// `ρ(x, [a, b])`: particles in the closed interval (ring images included)
/// divided by its length. On a ring the interval must be shorter than `L`.
pub fn density<S: Scalar>(x: &ParticleConfig<S>, a: &S, b: &S) -> Result<S> {
    if b <= a {
        return Err(Error::Degenerate(format!("interval [{a}, {b}] has no length")));
    }
    let len = b.clone() - a.clone();
    if let Some(l) = x.domain().circumference() {
        if len >= *l {
            return Err(Error::invalid("density interval must be shorter than the ring"));
        }
    }
    let count = count_in(&x.lifted_all(), x.domain(), a, b);
    Ok(S::from_int(count as i64) / len)
}

/// Particles per unit length over the whole domain: `N/L` on a ring,
/// `N/(b - a)` on a line window.
pub fn mean_density<S: Scalar>(x: &ParticleConfig<S>) -> S {
    S::from_int(x.len() as i64) / x.domain().length()
}

/// `ρ(x, [0, ℓ])`.
pub fn one_sided_density<S: Scalar>(x: &ParticleConfig<S>, ell: &S) -> Result<S> {
    density(x, &S::zero(), ell)
}

/// Windowed density of a sorted point set on nested windows around `center`,
/// doubling the width each level.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate<S> {
    /// `(width, density)` per window, narrowest first.
    pub windows: Vec<(S, S)>,
    /// Widest-window value.
    pub value: S,
    /// Smallest value seen: proxy for `ρ_-`.
    pub lower: S,
    /// Largest value seen: proxy for `ρ_+`.
    pub upper: S,
}

/// Counts `points` (sorted, unwrapped) in `[c - w/2, c + w/2]` for
/// `w = width, 2·width, …` (`levels` windows).
pub fn nested_window_density<S: Scalar>(
    points: &[S],
    center: &S,
    width: &S,
    levels: u32,
) -> Result<DensityEstimate<S>> {
    if !width.is_positive() || levels == 0 {
        return Err(Error::Degenerate(
            "nested windows need a positive width and level count".into(),
        ));
    }
    let two = S::from_int(2);
    let mut w = width.clone();
    let mut windows = Vec::with_capacity(levels as usize);
    for _ in 0..levels {
        let half = w.clone() / two.clone();
        let lo = center.clone() - half.clone();
        let hi = center.clone() + half;
        let count = points.partition_point(|p| *p <= hi) - points.partition_point(|p| *p < lo);
        windows.push((w.clone(), S::from_int(count as i64) / w.clone()));
        w = w * two.clone();
    }
    let value = windows.last().expect("levels > 0").1.clone();
    let lower = windows.iter().map(|(_, r)| r.clone()).reduce(smin).expect("levels > 0");
    let upper = windows.iter().map(|(_, r)| r.clone()).reduce(smax).expect("levels > 0");
    Ok(DensityEstimate {
        windows,
        value,
        lower,
        upper,
    })
}

/// `V(x, i, t) = (x_i^t - x_i^0)/t` over the first `t` steps of a run.
pub fn velocity<S: Scalar>(traj: &TrajectorySummary<S>, i: usize, t: u64) -> Result<S> {
    if t == 0 {
        return Err(Error::Degenerate("velocity is undefined at t = 0".into()));
    }
    let d = traj.displacement_at(t)?;
    let di = d.get(i).ok_or(Error::IndexOutOfRange { index: i, len: d.len() })?;
    Ok(di.clone() / S::from_int(t as i64))
}

/// Per-particle velocities at time `t`.
pub fn velocities<S: Scalar>(traj: &TrajectorySummary<S>, t: u64) -> Result<Vec<S>> {
    (0..traj.len()).map(|i| velocity(traj, i, t)).collect()
}

pub fn mean_velocity<S: Scalar>(traj: &TrajectorySummary<S>, t: u64) -> Result<S> {
    let vs = velocities(traj, t)?;
    if vs.is_empty() {
        return Err(Error::Degenerate("no particles".into()));
    }
    let n = S::from_int(vs.len() as i64);
    Ok(vs.into_iter().fold(S::zero(), |a, b| a + b) / n)
}

/// `max_{i,j} |V(x,i,t) - V(x,j,t)|`.
pub fn velocity_spread<S: Scalar>(traj: &TrajectorySummary<S>, t: u64) -> Result<S> {
    let vs = velocities(traj, t)?;
    let hi = vs.iter().cloned().reduce(smax);
    let lo = vs.iter().cloned().reduce(smin);
    match (hi, lo) {
        (Some(h), Some(l)) => Ok(h - l),
        _ => Ok(S::zero()),
    }
}

/// `V = min{1/ρ(z̃), 1/ρ(x)}`; the empty field contributes `v`.
pub fn predict_v<S: Scalar>(rho_x: &S, chain: &ChainDensity<S>) -> Result<S> {
    if !rho_x.is_positive() {
        return Err(Error::Degenerate(format!("particle density {rho_x} must be positive")));
    }
    Ok(smin(chain.inverse(), S::one() / rho_x.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Gaseous,
    Liquid,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Gaseous => "gaseous",
            Phase::Liquid => "liquid",
        })
    }
}

/// Gaseous iff `ρ(x) ≤ ρ(z̃)` (the boundary counts as gaseous).
pub fn classify_phase<S: Scalar>(rho_x: &S, chain: &ChainDensity<S>) -> Result<Phase> {
    if !rho_x.is_positive() {
        return Err(Error::Degenerate(format!("particle density {rho_x} must be positive")));
    }
    Ok(if *rho_x <= chain.effective() {
        Phase::Gaseous
    } else {
        Phase::Liquid
    })
}

/// Both sides of `max{1/v, ρ(z)} ≤ ρ(z̃) ≤ ρ(z) + 1/v`. With per-segment
/// velocities the lower bound uses the fastest segment and the upper bound
/// the slowest. Waiting times are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport<S> {
    pub rho_z: S,
    pub rho_ext: S,
    pub lower: S,
    pub upper: S,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

impl<S> BoundsReport<S> {
    pub fn passed(&self) -> bool {
        self.lower_ok && self.upper_ok
    }
}

pub fn check_extended_bounds<S: Scalar>(z: &ObstacleField<S>) -> Result<BoundsReport<S>> {
    let rho_z = z
        .density()
        .ok_or_else(|| Error::Degenerate("obstacle density needs at least one obstacle in the window".into()))?;
    let rho_ext = z
        .extend()
        .density()
        .value()
        .cloned()
        .ok_or_else(|| Error::Degenerate("extended chain is empty".into()))?;
    let v_max = z.velocities().iter().cloned().reduce(smax).expect("non-empty field");
    let v_min = z.velocities().iter().cloned().reduce(smin).expect("non-empty field");
    let lower = smax(S::one() / v_max, rho_z.clone());
    let upper = rho_z.clone() + S::one() / v_min;
    Ok(BoundsReport {
        lower_ok: lower <= rho_ext,
        upper_ok: rho_ext <= upper,
        rho_z,
        rho_ext,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, Dynamics, SimState};
    use crate::geometry::Domain;
    use crate::scalar::Exact;
    use proptest::prelude::*;

    fn q(s: &str) -> Exact {
        Exact::parse(s).unwrap()
    }
    fn qs(v: &[&str]) -> Vec<Exact> {
        v.iter().map(|s| q(s)).collect()
    }
    fn line() -> Domain<Exact> {
        Domain::line(q("-10"), q("1000")).unwrap()
    }

    #[test]
    fn closed_interval_density() {
        let x = ParticleConfig::new(line(), qs(&["0", "1", "2", "3"])).unwrap();
        assert_eq!(density(&x, &q("0"), &q("2")).unwrap(), q("3/2"));
        assert!(matches!(density(&x, &q("2"), &q("2")), Err(Error::Degenerate(_))));
        let empty = ParticleConfig::new(line(), vec![]).unwrap();
        assert_eq!(density(&empty, &q("0"), &q("1")).unwrap(), q("0"));
    }

    #[test]
    fn ring_mean_density() {
        let ring = Domain::ring(q("6")).unwrap();
        let x = ParticleConfig::new(ring, qs(&["0", "2", "4"])).unwrap();
        assert_eq!(mean_density(&x), q("1/2"));
    }

    #[test]
    fn one_sided_counts() {
        let pts: Vec<Exact> = (0..100).map(|i| Exact::from_ratio(i, 2)).collect();
        let x = ParticleConfig::new(line(), pts).unwrap();
        assert_eq!(one_sided_density(&x, &q("10")).unwrap(), q("21/10"));

        let sq: Vec<Exact> = (0..30).map(|i| Exact::from_int(i * i)).collect();
        let x = ParticleConfig::new(line(), sq).unwrap();
        let small = one_sided_density(&x, &q("900")).unwrap();
        assert!(small < q("0.04"));
    }

    #[test]
    fn one_sided_density_of_tiled_chain() {
        // chain (0, 1, 2) repeated with period 2.5
        let pts: Vec<Exact> = (0..12)
            .flat_map(|k| ["0", "1", "2"].map(|o| q(o) + Exact::from_ratio(5 * k, 2)))
            .collect();
        let x = ParticleConfig::new(line(), pts).unwrap();
        // 10 full periods plus the point at 25
        assert_eq!(one_sided_density(&x, &q("25")).unwrap(), q("31/25"));
    }

    #[test]
    fn nested_windows() {
        let pts: Vec<Exact> = (0..64).map(Exact::from_int).collect();
        let est = nested_window_density(&pts, &q("32"), &q("2"), 4).unwrap();
        assert_eq!(est.windows[0], (q("2"), q("3/2")));
        assert_eq!(est.value, q("17/16"));
        assert!(est.lower <= est.upper);
    }

    #[test]
    fn fd_prediction_and_phase() {
        let one = ChainDensity::Density(q("1"));
        assert_eq!(predict_v(&q("0.5"), &one).unwrap(), q("1"));
        assert_eq!(predict_v(&q("1.5"), &one).unwrap(), q("2/3"));
        let empty = ChainDensity::Empty { cap: q("1.5") };
        assert_eq!(predict_v(&q("0.5"), &empty).unwrap(), q("1.5"));
        assert!(predict_v(&q("0"), &one).is_err());
        assert_eq!(classify_phase(&q("0.5"), &one).unwrap(), Phase::Gaseous);
        assert_eq!(classify_phase(&q("2"), &one).unwrap(), Phase::Liquid);
        assert_eq!(classify_phase(&q("1"), &one).unwrap(), Phase::Gaseous);
    }

    #[test]
    fn bounds_examples() {
        let ring = Domain::ring(q("25")).unwrap();
        let pos: Vec<Exact> = (0..10).map(|k| Exact::from_ratio(5 * k, 2)).collect();
        let z = ObstacleField::new(ring, pos, q("1")).unwrap();
        let r = check_extended_bounds(&z).unwrap();
        assert_eq!((r.rho_z.clone(), r.rho_ext.clone()), (q("0.4"), q("1.2")));
        assert_eq!((r.lower.clone(), r.upper.clone()), (q("1"), q("1.4")));
        assert!(r.passed());

        let ring = Domain::ring(q("6")).unwrap();
        let z = ObstacleField::new(ring.clone(), qs(&["0", "3"]), q("1")).unwrap();
        let r = check_extended_bounds(&z).unwrap();
        assert_eq!((r.rho_ext.clone(), r.upper.clone()), (q("1"), q("4/3")));
        assert!(r.passed());

        let empty = ObstacleField::empty(ring, q("1")).unwrap();
        assert!(matches!(check_extended_bounds(&empty), Err(Error::Degenerate(_))));
    }

    #[test]
    fn velocity_estimators() {
        let z = ObstacleField::new(line(), qs(&["3"]), q("2")).unwrap();
        let s = SimState::new(ParticleConfig::new(line(), qs(&["0"])).unwrap(), &z).unwrap();
        let traj = run(s, &z, 3, &mut []).unwrap();
        assert_eq!(velocity(&traj, 0, 3).unwrap(), q("5/3"));
        assert!(matches!(velocity(&traj, 0, 0), Err(Error::Degenerate(_))));
        assert_eq!(velocity_spread(&traj, 3).unwrap(), q("0"));

        // a particle serving a long wait stays put
        let z = ObstacleField::new(line(), qs(&["1"]), q("1"))
            .unwrap()
            .with_waits(vec![10])
            .unwrap();
        let s = SimState::new(ParticleConfig::new(line(), qs(&["1"])).unwrap(), &z).unwrap();
        let traj = run(s, &z, 5, &mut []).unwrap();
        assert_eq!(velocity(&traj, 0, 5).unwrap(), q("0"));
    }

    #[test]
    fn free_particles_have_no_spread() {
        let z = ObstacleField::empty(line(), q("1")).unwrap();
        let x = ParticleConfig::new(line(), qs(&["0", "5"])).unwrap();
        let traj = run(SimState::new(x, &z).unwrap(), &z, 10, &mut []).unwrap();
        assert_eq!(velocity_spread(&traj, 10).unwrap(), q("0"));
        assert_eq!(mean_velocity(&traj, 10).unwrap(), q("1"));
    }

    #[test]
    fn liquid_spread_shrinks() {
        let ring = Domain::ring(60.0).unwrap();
        let z = ObstacleField::new(ring.clone(), (0..20).map(|k| 3.0 * k as f64).collect(), 1.0).unwrap();
        let coords: Vec<f64> = (0..90).map(|k| (k as f64 * k as f64 * 0.37) % 60.0).collect();
        let mut coords = coords;
        coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let x = ParticleConfig::new(ring, coords).unwrap();
        let traj = Dynamics::new(&z)
            .run(SimState::new(x, &z).unwrap(), 10_000, &mut [], &[100])
            .unwrap();
        assert!(velocity_spread(&traj, 10_000).unwrap() < velocity_spread(&traj, 100).unwrap());
    }

    proptest! {
        #[test]
        fn predict_v_is_nonincreasing(a in 1u32..400, b in 1u32..400, r in 100u32..400) {
            let (a, b) = (a.min(b), a.max(b));
            let rz = ChainDensity::Density(Exact::from_ratio(r as i64, 100));
            let va = predict_v(&Exact::from_ratio(a as i64, 100), &rz).unwrap();
            let vb = predict_v(&Exact::from_ratio(b as i64, 100), &rz).unwrap();
            prop_assert!(vb <= va);
            let rz2 = ChainDensity::Density(Exact::from_ratio(r as i64 + 10, 100));
            prop_assert!(predict_v(&Exact::from_ratio(a as i64, 100), &rz2).unwrap() <= va);
        }

        #[test]
        fn phase_agrees_with_branch(a in 1u32..400, r in 100u32..400) {
            let rho = Exact::from_ratio(a as i64, 100);
            let rz = ChainDensity::Density(Exact::from_ratio(r as i64, 100));
            let gaseous = classify_phase(&rho, &rz).unwrap() == Phase::Gaseous;
            prop_assert_eq!(gaseous, predict_v(&rho, &rz).unwrap() == rz.inverse());
        }
    }
}
