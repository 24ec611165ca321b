//! Obstacle fields, the extended (virtual-obstacle) chain and waiting-time
//! refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, ParticleConfig, Position};
use crate::scalar::{Distance, Scalar};

/// Static obstacles with per-obstacle waiting times and per-segment speed
/// limits. `velocities[j]` applies on the segment `[z_j, z_{j+1})`; on a ring
/// the last segment wraps to `z_0 + L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleField<S> {
    domain: Domain<S>,
    positions: Vec<S>,
    waits: Vec<u32>,
    velocities: Vec<S>,
    cap: S,
}

impl<S: Scalar> ObstacleField<S> {
    /// Obstacles with zero waiting time and every segment limited by `cap`.
    pub fn new(domain: Domain<S>, positions: Vec<S>, cap: S) -> Result<Self> {
        if !cap.is_positive() {
            return Err(Error::invalid("maximal velocity must be positive"));
        }
        let m = positions.len();
        let field = ObstacleField {
            domain,
            positions,
            waits: vec![0; m],
            velocities: vec![cap.clone(); m],
            cap,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn empty(domain: Domain<S>, cap: S) -> Result<Self> {
        Self::new(domain, Vec::new(), cap)
    }

    pub fn with_waits(mut self, waits: Vec<u32>) -> Result<Self> {
        if waits.len() != self.positions.len() {
            return Err(Error::invalid("one waiting time per obstacle required"));
        }
        self.waits = waits;
        Ok(self)
    }

    pub fn with_velocities(mut self, velocities: Vec<S>) -> Result<Self> {
        if velocities.len() != self.positions.len() {
            return Err(Error::invalid("one segment velocity per obstacle required"));
        }
        self.velocities = velocities;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if let Some(l) = self.domain.circumference() {
            if self.positions.iter().any(|z| *z < S::zero() || *z >= *l) {
                return Err(Error::invalid("obstacle outside [0, L)"));
            }
        }
        if self.positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("obstacle positions must be strictly increasing"));
        }
        if self.velocities.iter().any(|v| !v.is_positive() || *v > self.cap) {
            return Err(Error::invalid("segment velocities must lie in (0, v]"));
        }
        Ok(())
    }

    pub fn domain(&self) -> &Domain<S> {
        &self.domain
    }
    pub fn positions(&self) -> &[S] {
        &self.positions
    }
    pub fn waits(&self) -> &[u32] {
        &self.waits
    }
    pub fn velocities(&self) -> &[S] {
        &self.velocities
    }
    /// Global velocity bound `v`.
    pub fn cap(&self) -> &S {
        &self.cap
    }
    pub fn len(&self) -> usize {
        self.positions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn max_wait(&self) -> u32 {
        self.waits.iter().copied().max().unwrap_or(0)
    }

    /// Nearest obstacle strictly ahead of `p`, with its index.
    pub fn next_ahead(&self, p: &Position<S>) -> Option<(usize, Position<S>)> {
        let idx = self.positions.partition_point(|z| *z <= p.offset);
        if idx < self.positions.len() {
            Some((
                idx,
                Position {
                    lap: p.lap,
                    offset: self.positions[idx].clone(),
                },
            ))
        } else if self.domain.is_ring() && !self.positions.is_empty() {
            Some((
                0,
                Position {
                    lap: p.lap + 1,
                    offset: self.positions[0].clone(),
                },
            ))
        } else {
            None
        }
    }

    /// Index of the segment containing `p`: the last obstacle at or behind
    /// it. `None` left of the first obstacle on a line, or with no obstacles.
    pub fn segment_index(&self, p: &Position<S>) -> Option<usize> {
        let idx = self.positions.partition_point(|z| *z <= p.offset);
        if idx > 0 {
            Some(idx - 1)
        } else if self.domain.is_ring() && !self.positions.is_empty() {
            Some(self.positions.len() - 1)
        } else {
            None
        }
    }

    /// Speed limit for a particle at `p`. A particle sitting on `z_j` uses
    /// `v_j`, the segment it is about to enter.
    pub fn segment_velocity(&self, p: &Position<S>) -> &S {
        match self.segment_index(p) {
            Some(j) => &self.velocities[j],
            None => &self.cap,
        }
    }

    /// Obstacle located exactly at `p`, if any.
    pub fn obstacle_at(&self, p: &Position<S>) -> Option<usize> {
        let idx = self.positions.partition_point(|z| *z < p.offset);
        (idx < self.positions.len() && self.positions[idx] == p.offset).then_some(idx)
    }

    /// Density `ρ(z)` over the measurement window (see [`ExtendedObstacleField::density`]).
    pub fn density(&self) -> Option<S> {
        let len = measurement_length(&self.domain, self.positions.first())?;
        Some(S::from_int(self.positions.len() as i64) / len)
    }

    /// Extended configuration `z̃` (waiting times ignored).
    pub fn extend(&self) -> ExtendedObstacleField<S> {
        build_extended(self)
    }

    /// Density of the extended chain after waiting-time refinement: the
    /// quantity entering the fundamental diagram.
    pub fn chain_density(&self) -> ChainDensity<S> {
        refine_waiting(self).extend().density()
    }
}

/// Length of the window over which obstacle densities are measured: the
/// whole ring, or `[z_0, end)` on a line.
fn measurement_length<S: Scalar>(domain: &Domain<S>, first: Option<&S>) -> Option<S> {
    match domain {
        Domain::Ring { circumference } => Some(circumference.clone()),
        Domain::Line { end, .. } => {
            let z0 = first?;
            (*end > *z0).then(|| end.clone() - z0.clone())
        }
    }
}

/// `min(gap(x, i), distance to the nearest obstacle strictly ahead of x_i)`.
pub fn modified_gap<S: Scalar>(x: &ParticleConfig<S>, z: &ObstacleField<S>, i: usize) -> Result<Distance<S>> {
    let g = crate::geometry::gap(x, i)?;
    Ok(g.min(obstacle_distance(x, z, i)))
}

pub(crate) fn obstacle_distance<S: Scalar>(x: &ParticleConfig<S>, z: &ObstacleField<S>, i: usize) -> Distance<S> {
    let p = &x.positions()[i];
    match z.next_ahead(p) {
        Some((_, q)) => Distance::Finite(p.distance_to(&q, x.domain())),
        None => Distance::Infinite,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Real,
    Virtual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPoint<S> {
    pub position: S,
    pub kind: PointKind,
    /// Speed limit of the segment starting at this point.
    pub segment_velocity: S,
    /// Index of the originating obstacle (the one this point follows).
    pub source: usize,
}

/// `z̃`: real obstacles plus virtual ones spaced by the local velocity.
/// Sorted by position; on a ring all positions lie in `[0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedObstacleField<S> {
    domain: Domain<S>,
    points: Vec<ExtendedPoint<S>>,
    cap: S,
}

/// `ρ(z̃)`, or the empty-field sentinel whose inverse is the velocity cap.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainDensity<S> {
    Density(S),
    Empty { cap: S },
}

impl<S: Scalar> ChainDensity<S> {
    /// `1/ρ(z̃)`, or `v` when there are no obstacles.
    pub fn inverse(&self) -> S {
        match self {
            ChainDensity::Density(r) => S::one() / r.clone(),
            ChainDensity::Empty { cap } => cap.clone(),
        }
    }

    pub fn value(&self) -> Option<&S> {
        match self {
            ChainDensity::Density(r) => Some(r),
            ChainDensity::Empty { .. } => None,
        }
    }

    /// Effective density: `ρ(z̃)`, or `1/v` for the empty field.
    pub fn effective(&self) -> S {
        match self {
            ChainDensity::Density(r) => r.clone(),
            ChainDensity::Empty { cap } => S::one() / cap.clone(),
        }
    }
}

impl<S: Scalar> ExtendedObstacleField<S> {
    pub fn domain(&self) -> &Domain<S> {
        &self.domain
    }
    pub fn points(&self) -> &[ExtendedPoint<S>] {
        &self.points
    }
    pub fn positions(&self) -> Vec<S> {
        self.points.iter().map(|p| p.position.clone()).collect()
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points per unit length over the whole ring, or over
    /// `[z_0, end)` on a line. Co-located copies count separately.
    pub fn density(&self) -> ChainDensity<S> {
        let first = self.points.first().map(|p| &p.position);
        match (first, measurement_length(&self.domain, first)) {
            (Some(_), Some(len)) => {
                let count = self.points.iter().filter(|p| self.in_window(&p.position)).count();
                ChainDensity::Density(S::from_int(count as i64) / len)
            }
            _ => ChainDensity::Empty { cap: self.cap.clone() },
        }
    }

    fn in_window(&self, p: &S) -> bool {
        match &self.domain {
            Domain::Ring { .. } => true,
            Domain::Line { end, .. } => p < end,
        }
    }

    /// One particle on every point of the chain.
    pub fn as_particle_config(&self) -> ParticleConfig<S> {
        ParticleConfig::from_positions_unchecked(
            self.domain.clone(),
            self.points.iter().map(|p| Position::at(p.position.clone())).collect(),
        )
    }

    /// Reinterprets every point as a real obstacle with its segment velocity.
    pub fn as_obstacle_field(&self) -> Result<ObstacleField<S>> {
        ObstacleField::new(self.domain.clone(), self.positions(), self.cap.clone())?
            .with_velocities(self.points.iter().map(|p| p.segment_velocity.clone()).collect())
    }
}

struct Anchor<S> {
    position: S,
    velocity: S,
    source: usize,
}

fn extend_anchors<S: Scalar>(domain: &Domain<S>, anchors: &[Anchor<S>], cap: &S) -> ExtendedObstacleField<S> {
    let mut points = Vec::new();
    let mut wrapped = Vec::new();
    for (k, a) in anchors.iter().enumerate() {
        points.push(ExtendedPoint {
            position: a.position.clone(),
            kind: PointKind::Real,
            segment_velocity: a.velocity.clone(),
            source: a.source,
        });
        let next = match anchors.get(k + 1) {
            Some(b) => Some(b.position.clone()),
            None => match domain {
                Domain::Ring { circumference } => Some(anchors[0].position.clone() + circumference.clone()),
                Domain::Line { end, .. } => Some(end.clone()),
            },
        };
        let Some(next) = next else { continue };
        // Candidates z_k + m·v_k strictly below the next anchor; a candidate
        // landing exactly on it is the anchor itself and is not duplicated.
        let mut m = 1i64;
        loop {
            let p = a.position.clone() + S::from_int(m) * a.velocity.clone();
            if p >= next {
                break;
            }
            let point = ExtendedPoint {
                position: p.clone(),
                kind: PointKind::Virtual,
                segment_velocity: a.velocity.clone(),
                source: a.source,
            };
            match domain.circumference() {
                Some(l) if p >= *l => wrapped.push(ExtendedPoint {
                    position: p - l.clone(),
                    ..point
                }),
                _ => points.push(point),
            }
            m += 1;
        }
    }
    wrapped.extend(points);
    ExtendedObstacleField {
        domain: domain.clone(),
        points: wrapped,
        cap: cap.clone(),
    }
}

/// Inserts virtual obstacles at `z_j + m·v_j` between consecutive obstacles
/// (and up to the window end on a line), keeping every spacing in `(0, v_j]`.
pub fn build_extended<S: Scalar>(z: &ObstacleField<S>) -> ExtendedObstacleField<S> {
    let anchors: Vec<_> = z
        .positions
        .iter()
        .zip(&z.velocities)
        .enumerate()
        .map(|(j, (p, v))| Anchor {
            position: p.clone(),
            velocity: v.clone(),
            source: j,
        })
        .collect();
    extend_anchors(&z.domain, &anchors, &z.cap)
}

/// Obstacle field with every waiting time unrolled into co-located,
/// zero-wait copies.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedObstacleField<S> {
    domain: Domain<S>,
    positions: Vec<S>,
    velocities: Vec<S>,
    source: Vec<usize>,
    cap: S,
}

impl<S: Scalar> RefinedObstacleField<S> {
    pub fn positions(&self) -> &[S] {
        &self.positions
    }
    pub fn velocities(&self) -> &[S] {
        &self.velocities
    }
    /// Original obstacle index of each copy.
    pub fn source(&self) -> &[usize] {
        &self.source
    }
    pub fn len(&self) -> usize {
        self.positions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn extend(&self) -> ExtendedObstacleField<S> {
        let anchors: Vec<_> = self
            .positions
            .iter()
            .zip(&self.velocities)
            .zip(&self.source)
            .map(|((p, v), s)| Anchor {
                position: p.clone(),
                velocity: v.clone(),
                source: *s,
            })
            .collect();
        extend_anchors(&self.domain, &anchors, &self.cap)
    }
}

/// Replaces obstacle `j` by `τ_j + 1` copies at `z_j`: `τ_j` copies with unit
/// velocity followed by one carrying `v_j`.
pub fn refine_waiting<S: Scalar>(z: &ObstacleField<S>) -> RefinedObstacleField<S> {
    let total: usize = z.waits.iter().map(|&t| t as usize + 1).sum();
    let mut positions = Vec::with_capacity(total);
    let mut velocities = Vec::with_capacity(total);
    let mut source = Vec::with_capacity(total);
    for (j, ((p, v), &tau)) in z.positions.iter().zip(&z.velocities).zip(&z.waits).enumerate() {
        for _ in 0..tau {
            positions.push(p.clone());
            velocities.push(S::one());
            source.push(j);
        }
        positions.push(p.clone());
        velocities.push(v.clone());
        source.push(j);
    }
    RefinedObstacleField {
        domain: z.domain.clone(),
        positions,
        velocities,
        source,
        cap: z.cap.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn modified_gap_takes_nearest_blocker() {
        let z = ObstacleField::new(line(), qs(&["3"]), q("1")).unwrap();
        let x = ParticleConfig::new(line(), qs(&["0", "5"])).unwrap();
        assert_eq!(modified_gap(&x, &z, 0).unwrap(), Distance::Finite(q("3")));
        let x = ParticleConfig::new(line(), qs(&["0", "0.4"])).unwrap();
        assert_eq!(modified_gap(&x, &z, 0).unwrap(), Distance::Finite(q("0.4")));
    }

    #[test]
    fn modified_gap_ignores_obstacle_under_particle() {
        let z = ObstacleField::new(line(), qs(&["3", "4"]), q("1")).unwrap();
        let x = ParticleConfig::new(line(), qs(&["3", "9"])).unwrap();
        assert_eq!(modified_gap(&x, &z, 0).unwrap(), Distance::Finite(q("1")));
        // leader past every obstacle on a line
        let x = ParticleConfig::new(line(), qs(&["5"])).unwrap();
        assert_eq!(modified_gap(&x, &z, 0).unwrap(), Distance::Infinite);
        assert!(modified_gap(&x, &z, 1).is_err());
    }

    #[test]
    fn extension_inserts_floor_points() {
        let dom = Domain::line(q("0"), q("2.5")).unwrap();
        let z = ObstacleField::new(dom, qs(&["0", "2.5"]), q("1")).unwrap();
        assert_eq!(z.extend().positions(), qs(&["0", "1", "2", "2.5"]));
    }

    #[test]
    fn extension_drops_candidate_on_next_obstacle() {
        let dom = Domain::line(q("0"), q("2")).unwrap();
        let z = ObstacleField::new(dom, qs(&["0", "2"]), q("1")).unwrap();
        let ext = z.extend();
        assert_eq!(ext.positions(), qs(&["0", "1", "2"]));
        let kinds: Vec<_> = ext.points().iter().map(|p| p.kind).collect();
        assert_eq!(kinds, vec![PointKind::Real, PointKind::Virtual, PointKind::Real]);
    }

    #[test]
    fn ring_extension_wraps_and_sorts() {
        let ring = Domain::ring(q("6")).unwrap();
        let z = ObstacleField::new(ring.clone(), qs(&["0", "3"]), q("1")).unwrap();
        let ext = z.extend();
        assert_eq!(ext.positions(), qs(&["0", "1", "2", "3", "4", "5"]));
        assert_eq!(ext.density(), ChainDensity::Density(q("1")));

        // last segment wraps past L and its virtual points land before z_0
        let z = ObstacleField::new(ring, qs(&["1.5", "4"]), q("1")).unwrap();
        assert_eq!(z.extend().positions(), qs(&["0", "1", "1.5", "2.5", "3.5", "4", "5"]));
    }

    #[test]
    fn per_segment_velocities_set_spacing() {
        let ring = Domain::ring(q("8")).unwrap();
        let z = ObstacleField::new(ring, qs(&["0", "4"]), q("1"))
            .unwrap()
            .with_velocities(qs(&["1", "0.5"]))
            .unwrap();
        let ext = z.extend();
        assert_eq!(
            ext.positions(),
            qs(&["0", "1", "2", "3", "4", "4.5", "5", "5.5", "6", "6.5", "7", "7.5"])
        );
        assert_eq!(ext.density(), ChainDensity::Density(q("1.5")));
    }

    #[test]
    fn empty_field_sentinel() {
        let z = ObstacleField::empty(Domain::ring(q("6")).unwrap(), q("1.5")).unwrap();
        let d = z.extend().density();
        assert_eq!(d, ChainDensity::Empty { cap: q("1.5") });
        assert_eq!(d.inverse(), q("1.5"));
    }

    #[test]
    fn line_extension_runs_to_window_end() {
        let dom = Domain::line(q("0"), q("5")).unwrap();
        let z = ObstacleField::new(dom, qs(&["0", "2.5"]), q("1")).unwrap();
        assert_eq!(z.extend().positions(), qs(&["0", "1", "2", "2.5", "3.5", "4.5"]));
        assert_eq!(z.extend().density(), ChainDensity::Density(q("1.2")));
    }

    #[test]
    fn refinement_unrolls_waits() {
        let z = ObstacleField::new(line(), qs(&["5"]), q("1"))
            .unwrap()
            .with_waits(vec![2])
            .unwrap();
        let r = refine_waiting(&z);
        assert_eq!(r.positions(), &qs(&["5", "5", "5"])[..]);
        assert_eq!(r.source(), &[0, 0, 0]);

        let z = ObstacleField::new(line(), qs(&["1", "4"]), q("1")).unwrap();
        let r = refine_waiting(&z);
        assert_eq!(r.positions(), z.positions());
        assert_eq!(r.velocities(), z.velocities());

        let z = ObstacleField::new(line(), qs(&["1", "4"]), q("2"))
            .unwrap()
            .with_velocities(qs(&["0.5", "2"]))
            .unwrap()
            .with_waits(vec![1, 0])
            .unwrap();
        let r = refine_waiting(&z);
        assert_eq!(r.positions(), &qs(&["1", "1", "4"])[..]);
        assert_eq!(r.velocities(), &qs(&["1", "0.5", "2"])[..]);
    }

    #[test]
    fn refined_copies_count_in_chain_density() {
        let ring = Domain::ring(q("6")).unwrap();
        let z = ObstacleField::new(ring, qs(&["0", "3"]), q("1"))
            .unwrap()
            .with_waits(vec![1, 0])
            .unwrap();
        assert_eq!(z.chain_density(), ChainDensity::Density(q("7/6")));
    }

    #[test]
    fn validation() {
        assert!(ObstacleField::new(line(), qs(&["1", "1"]), q("1")).is_err());
        assert!(ObstacleField::new(line(), qs(&["1"]), q("0")).is_err());
        let ring = Domain::ring(q("6")).unwrap();
        assert!(ObstacleField::new(ring, qs(&["6"]), q("1")).is_err());
        let z = ObstacleField::new(line(), qs(&["1"]), q("1")).unwrap();
        assert!(z.clone().with_velocities(qs(&["2"])).is_err());
        assert!(z.with_waits(vec![1, 2]).is_err());
    }

    #[test]
    fn segment_lookup() {
        let ring = Domain::ring(q("6")).unwrap();
        let z = ObstacleField::new(ring.clone(), qs(&["1", "3"]), q("2"))
            .unwrap()
            .with_velocities(qs(&["1", "0.5"]))
            .unwrap();
        assert_eq!(z.segment_velocity(&Position::at(q("1"))), &q("1"));
        assert_eq!(z.segment_velocity(&Position::at(q("0.5"))), &q("0.5"));
        assert_eq!(z.segment_velocity(&Position::at(q("3"))), &q("0.5"));
        let (j, p) = z.next_ahead(&Position::at(q("3"))).unwrap();
        assert_eq!((j, p.lap, p.offset), (0, 1, q("1")));
        assert_eq!(z.obstacle_at(&Position::at(q("3"))), Some(1));
        assert_eq!(z.obstacle_at(&Position::at(q("2"))), None);
    }
}
