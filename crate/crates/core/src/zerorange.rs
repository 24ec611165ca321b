//! Deterministic parallel-update zero-range process.
//!
//! Every occupied site sends one particle, the one with the largest index, to
//! its right neighbour. With unit speed, no obstacles and integer positions
//! this is the continuum map read on the integer lattice.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Dynamics, SimState};
use crate::error::{Error, Result};
use crate::geometry::{Domain, ParticleConfig};
use crate::obstacles::ObstacleField;
use crate::scalar::{smin, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lattice {
    /// `K` sites with site `K-1` feeding site 0.
    Ring,
    /// `K` sites; particles leaving site `K-1` exit the window.
    Line,
}

/// Site occupancies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroRangeState {
    pub lattice: Lattice,
    pub occupancy: Vec<u64>,
    /// Particles that have left a line window.
    pub outflow: u64,
}

impl ZeroRangeState {
    pub fn new(lattice: Lattice, occupancy: Vec<u64>) -> Result<Self> {
        if occupancy.is_empty() {
            return Err(Error::invalid("zero-range lattice needs at least one site"));
        }
        Ok(ZeroRangeState {
            lattice,
            occupancy,
            outflow: 0,
        })
    }

    pub fn total(&self) -> u64 {
        self.occupancy.iter().sum::<u64>() + self.outflow
    }

    pub fn sites(&self) -> usize {
        self.occupancy.len()
    }
}

pub fn zr_step(s: &ZeroRangeState) -> ZeroRangeState {
    let k = s.occupancy.len();
    let mut next = s.occupancy.clone();
    let mut outflow = s.outflow;
    for (site, &n) in s.occupancy.iter().enumerate() {
        if n == 0 {
            continue;
        }
        next[site] -= 1;
        if site + 1 < k {
            next[site + 1] += 1;
        } else {
            match s.lattice {
                Lattice::Ring => next[0] += 1,
                Lattice::Line => outflow += 1,
            }
        }
    }
    ZeroRangeState {
        lattice: s.lattice,
        occupancy: next,
        outflow,
    }
}

/// `V(y) = min{1, 1/ρ(y)}`.
pub fn zr_velocity<S: Scalar>(rho_y: &S) -> Result<S> {
    if !rho_y.is_positive() {
        return Err(Error::Degenerate("zero-range density must be positive".into()));
    }
    Ok(smin(S::one(), S::one() / rho_y.clone()))
}

/// Velocity on a lattice with site spacings `ℓ_i`: `V(y)/ρ(Z̄)`.
pub fn hetero_velocity<S: Scalar>(rho_y: &S, rho_lattice: &S) -> Result<S> {
    if !rho_lattice.is_positive() {
        return Err(Error::Degenerate("lattice density must be positive".into()));
    }
    Ok(zr_velocity(rho_y)? / rho_lattice.clone())
}

/// Sites per unit length of a periodic lattice with the given spacings.
pub fn lattice_density<S: Scalar>(spacings: &[S]) -> Result<S> {
    if spacings.iter().any(|l| !l.is_positive()) {
        return Err(Error::invalid("lattice spacings must be positive"));
    }
    let total = spacings.iter().cloned().fold(S::zero(), |a, b| a + b);
    if !total.is_positive() {
        return Err(Error::Degenerate("empty lattice".into()));
    }
    Ok(S::from_int(spacings.len() as i64) / total)
}

/// Zero-range process that keeps particle identities. Each site holds a
/// stack ordered bottom (smallest index) to top; the top particle leaves and
/// lands at the bottom of the next stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackedZeroRange {
    /// Ring size, or `None` for the unbounded line.
    sites: Option<i64>,
    stacks: BTreeMap<i64, VecDeque<usize>>,
    /// Unwrapped site of each particle.
    lifted: Vec<i64>,
    time: u64,
}

impl TrackedZeroRange {
    /// Particles at the given weakly increasing unwrapped sites.
    pub fn new(sites: Option<i64>, lifted: Vec<i64>) -> Result<Self> {
        if lifted.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("zero-range particles must be ordered"));
        }
        if let Some(k) = sites {
            if k <= 0 {
                return Err(Error::invalid("ring needs a positive number of sites"));
            }
            if let (Some(a), Some(b)) = (lifted.first(), lifted.last()) {
                if b - a > k {
                    return Err(Error::invalid("ring particles span more than one lap"));
                }
            }
        }
        // bottom to top: later laps first (they trail particle 0 in chain
        // order), then increasing index
        let mut order: Vec<usize> = (0..lifted.len()).collect();
        if let Some(k) = sites {
            order.sort_by_key(|&i| (std::cmp::Reverse(lifted[i].div_euclid(k)), i));
        }
        let mut stacks: BTreeMap<i64, VecDeque<usize>> = BTreeMap::new();
        for i in order {
            let key = sites.map_or(lifted[i], |k| lifted[i].rem_euclid(k));
            stacks.entry(key).or_default().push_back(i);
        }
        Ok(TrackedZeroRange {
            sites,
            stacks,
            lifted,
            time: 0,
        })
    }

    pub fn lifted(&self) -> &[i64] {
        &self.lifted
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Occupancy of sites `0..K` (ring) or of the occupied range (line).
    pub fn occupancy(&self) -> Vec<(i64, u64)> {
        self.stacks.iter().map(|(&s, v)| (s, v.len() as u64)).collect()
    }

    pub fn step(&mut self) {
        let movers: Vec<(i64, usize)> = self
            .stacks
            .iter_mut()
            .filter_map(|(&site, stack)| stack.pop_back().map(|i| (site, i)))
            .collect();
        self.stacks.retain(|_, s| !s.is_empty());
        for (site, i) in movers {
            let to = match self.sites {
                Some(k) => (site + 1) % k,
                None => site + 1,
            };
            self.stacks.entry(to).or_default().push_front(i);
            self.lifted[i] += 1;
        }
        self.time += 1;
    }
}

/// Outcome of running the continuum map and the zero-range process side by
/// side from the same integer configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingReport {
    pub steps: u64,
    /// First `(t, particle)` at which the trajectories differ.
    pub divergence: Option<(u64, usize)>,
}

impl EmbeddingReport {
    pub fn identical(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Runs `Φ` (unit speed, no obstacles) and the tracked zero-range process
/// for `steps` steps and compares every unwrapped position.
pub fn embed_and_compare<S: Scalar>(x: &ParticleConfig<S>, steps: u64) -> Result<EmbeddingReport> {
    let domain = x.domain().clone();
    let sites = match &domain {
        Domain::Ring { circumference } => {
            if !circumference.is_integer() {
                return Err(Error::invalid("ring circumference must be an integer"));
            }
            Some(circumference.floor_int())
        }
        Domain::Line { .. } => None,
    };
    let lifted = x.lifted_all();
    if lifted.iter().any(|p| !p.is_integer()) {
        return Err(Error::invalid("zero-range embedding needs integer positions"));
    }
    let mut zr = TrackedZeroRange::new(sites, lifted.iter().map(|p| p.floor_int()).collect())?;
    let field = ObstacleField::empty(domain, S::one())?;
    let dynamics = Dynamics::new(&field);
    let mut state = SimState::new(x.clone(), &field)?;
    for t in 1..=steps {
        state = dynamics.step(&state).0;
        zr.step();
        for (i, &site) in zr.lifted().iter().enumerate() {
            if state.lifted(i) != S::from_int(site) {
                return Ok(EmbeddingReport {
                    steps: t,
                    divergence: Some((t, i)),
                });
            }
        }
    }
    Ok(EmbeddingReport {
        steps,
        divergence: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;
    use proptest::prelude::*;

    fn ring(occ: &[u64]) -> ZeroRangeState {
        ZeroRangeState::new(Lattice::Ring, occ.to_vec()).unwrap()
    }

    #[test]
    fn ring_steps() {
        assert_eq!(zr_step(&ring(&[2, 0, 1])).occupancy, vec![2, 1, 0]);
        assert_eq!(zr_step(&ring(&[1, 1, 1])).occupancy, vec![1, 1, 1]);
        assert_eq!(zr_step(&ring(&[5, 4, 7])).occupancy, vec![5, 4, 7]);
        assert_eq!(zr_step(&ring(&[5, 0, 4, 7])).occupancy, vec![5, 1, 3, 7]);
    }

    #[test]
    fn line_outflow() {
        let s = ZeroRangeState::new(Lattice::Line, vec![0, 2]).unwrap();
        let s = zr_step(&s);
        assert_eq!((s.occupancy.clone(), s.outflow), (vec![0, 1], 1));
        assert_eq!(s.total(), 2);
    }

    #[test]
    fn velocity_formulas() {
        let q = |s: &str| Exact::parse(s).unwrap();
        assert_eq!(zr_velocity(&q("2")).unwrap(), q("1/2"));
        assert_eq!(zr_velocity(&q("1")).unwrap(), q("1"));
        assert_eq!(zr_velocity(&q("1/2")).unwrap(), q("1"));
        assert_eq!(hetero_velocity(&q("2"), &q("1/2")).unwrap(), q("1"));
        assert_eq!(
            hetero_velocity(&q("3"), &q("1")).unwrap(),
            zr_velocity(&q("3")).unwrap()
        );
        assert_eq!(lattice_density(&[q("2"), q("2")]).unwrap(), q("1/2"));
    }

    #[test]
    fn hetero_lattice_matches_continuum_run() {
        // lattice z̃ of ring L=6, z=(0,3): unit spacings, density 1
        let q = |s: &str| Exact::parse(s).unwrap();
        let rho_lattice = lattice_density(&vec![q("1"); 6]).unwrap();
        let predicted = hetero_velocity(&q("0.5"), &rho_lattice).unwrap();
        let dom = Domain::ring(q("6")).unwrap();
        let z = ObstacleField::new(dom.clone(), vec![q("0"), q("3")], q("1")).unwrap();
        let x = ParticleConfig::new(dom, vec![q("0.5"), q("2.5"), q("4.5")]).unwrap();
        let traj = crate::dynamics::run(SimState::new(x, &z).unwrap(), &z, 400, &mut []).unwrap();
        let v = traj.displacement[0].clone() / Exact::from_int(400);
        assert_eq!(predicted, q("1"));
        assert!((v - predicted).to_f64().abs() < 0.01);
    }

    #[test]
    fn tracked_top_of_stack_leaves() {
        let mut zr = TrackedZeroRange::new(None, vec![0, 0, 0]).unwrap();
        zr.step();
        assert_eq!(zr.lifted(), &[0, 0, 1]);
        zr.step();
        assert_eq!(zr.lifted(), &[0, 1, 2]);
    }

    #[test]
    fn embedding_examples() {
        let q = |s: &str| Exact::parse(s).unwrap();
        let dom = Domain::ring(q("4")).unwrap();
        let x = ParticleConfig::new(dom.clone(), vec![q("0"), q("0"), q("1")]).unwrap();
        assert!(embed_and_compare(&x, 50).unwrap().identical());
        let x = ParticleConfig::new(dom.clone(), vec![q("0")]).unwrap();
        assert!(embed_and_compare(&x, 10).unwrap().identical());
        let x = ParticleConfig::new(dom.clone(), vec![q("0"); 5]).unwrap();
        assert!(embed_and_compare(&x, 30).unwrap().identical());
        let x = ParticleConfig::new(dom, vec![q("0.5")]).unwrap();
        assert!(embed_and_compare(&x, 1).is_err());
    }

    #[test]
    fn wrap_around_stack_order() {
        // particle 1 is at site 3 and will land on site 0 below particle 0
        let q = |s: &str| Exact::parse(s).unwrap();
        let dom = Domain::ring(q("4")).unwrap();
        let x = ParticleConfig::new(dom, vec![q("0"), q("3"), q("3")]).unwrap();
        assert!(embed_and_compare(&x, 40).unwrap().identical());
    }

    proptest! {
        #[test]
        fn occupancy_is_conserved(occ in proptest::collection::vec(0u64..6, 1..12), steps in 0usize..20) {
            let mut s = ring(&occ);
            let total = s.total();
            for _ in 0..steps {
                s = zr_step(&s);
            }
            prop_assert_eq!(s.total(), total);
        }

        #[test]
        fn tracked_matches_occupancy(occ in proptest::collection::vec(0u64..4, 1..10), steps in 0usize..20) {
            let k = occ.len() as i64;
            let lifted: Vec<i64> = occ.iter().enumerate()
                .flat_map(|(site, &n)| std::iter::repeat_n(site as i64, n as usize))
                .collect();
            let mut tracked = TrackedZeroRange::new(Some(k), lifted).unwrap();
            let mut s = ring(&occ);
            for _ in 0..steps {
                s = zr_step(&s);
                tracked.step();
            }
            let mut from_tracked = vec![0u64; occ.len()];
            for (site, n) in tracked.occupancy() {
                from_tracked[site as usize] = n;
            }
            prop_assert_eq!(from_tracked, s.occupancy);
        }

        #[test]
        fn continuum_equals_zero_range(k in 2i64..12, raw in proptest::collection::vec(0i64..12, 1..10), steps in 1u64..60) {
            let mut pos: Vec<f64> = raw.iter().map(|p| (p % k) as f64).collect();
            pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let x = ParticleConfig::new(Domain::ring(k as f64).unwrap(), pos).unwrap();
            prop_assert!(embed_and_compare(&x, steps).unwrap().identical());
        }
    }
}
