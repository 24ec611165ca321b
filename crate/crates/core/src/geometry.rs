//! Domains, particle positions and gaps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Distance, Scalar};

/// Where particles live. A ring of circumference `L` stands in for a
/// periodic bi-infinite configuration; a line window has an open right end,
/// so the leading particle never sees anything ahead of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain<S> {
    Ring { circumference: S },
    Line { start: S, end: S },
}

impl<S: Scalar> Domain<S> {
    pub fn ring(circumference: S) -> Result<Self> {
        if !circumference.is_positive() {
            return Err(Error::invalid("ring circumference must be positive"));
        }
        Ok(Domain::Ring { circumference })
    }

    pub fn line(start: S, end: S) -> Result<Self> {
        if end <= start {
            return Err(Error::invalid("line window must have end > start"));
        }
        Ok(Domain::Line { start, end })
    }

    pub fn circumference(&self) -> Option<&S> {
        match self {
            Domain::Ring { circumference } => Some(circumference),
            Domain::Line { .. } => None,
        }
    }

    pub fn is_ring(&self) -> bool {
        matches!(self, Domain::Ring { .. })
    }

    /// Ring circumference or window width.
    pub fn length(&self) -> S {
        match self {
            Domain::Ring { circumference } => circumference.clone(),
            Domain::Line { start, end } => end.clone() - start.clone(),
        }
    }

    /// Left end of the fundamental interval (0 on a ring).
    pub fn origin(&self) -> S {
        match self {
            Domain::Ring { .. } => S::zero(),
            Domain::Line { start, .. } => start.clone(),
        }
    }
}

/// A point on the domain. On a ring `offset ∈ [0, L)` and `lap` counts
/// completed windings, so `lap·L + offset` is the unwrapped coordinate. On a
/// line `lap` is always 0.
///
/// Keeping the offset separate means a particle that stops on an obstacle
/// holds that obstacle's exact coordinate even in float mode.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub struct Position<S> {
    pub lap: i64,
    pub offset: S,
}

impl<S: Scalar> Position<S> {
    pub fn at(offset: S) -> Self {
        Position { lap: 0, offset }
    }

    pub fn lifted(&self, domain: &Domain<S>) -> S {
        match domain.circumference() {
            Some(l) if self.lap != 0 => S::from_int(self.lap) * l.clone() + self.offset.clone(),
            _ => self.offset.clone(),
        }
    }

    /// Signed displacement from `self` to `other`.
    pub fn distance_to(&self, other: &Position<S>, domain: &Domain<S>) -> S {
        let d = other.offset.clone() - self.offset.clone();
        match domain.circumference() {
            Some(l) if other.lap != self.lap => S::from_int(other.lap - self.lap) * l.clone() + d,
            _ => d,
        }
    }

    /// Moves forward by `d ≥ 0`, rewrapping on a ring.
    pub fn advanced(&self, d: S, domain: &Domain<S>) -> Position<S> {
        let mut p = Position {
            lap: self.lap,
            offset: self.offset.clone() + d,
        };
        if let Some(l) = domain.circumference() {
            while p.offset >= *l {
                p.offset = p.offset - l.clone();
                p.lap += 1;
            }
        }
        p
    }

    pub fn shifted_laps(&self, laps: i64) -> Position<S> {
        Position {
            lap: self.lap + laps,
            offset: self.offset.clone(),
        }
    }
}

/// Weakly increasing particle positions on a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfig<S> {
    domain: Domain<S>,
    positions: Vec<Position<S>>,
}

impl<S: Scalar> ParticleConfig<S> {
    /// Builds a configuration from plain coordinates. On a ring the
    /// coordinates must lie in `[0, L)`.
    pub fn new(domain: Domain<S>, coords: Vec<S>) -> Result<Self> {
        if let Some(l) = domain.circumference() {
            if let Some(bad) = coords.iter().find(|c| **c < S::zero() || **c >= *l) {
                return Err(Error::invalid(format!(
                    "ring position {} outside [0, {})",
                    bad.to_decimal_string(),
                    l.to_decimal_string()
                )));
            }
        }
        Self::from_positions(domain, coords.into_iter().map(Position::at).collect())
    }

    /// Builds a configuration from unwrapped positions (used when restoring
    /// a running state).
    pub fn from_positions(domain: Domain<S>, positions: Vec<Position<S>>) -> Result<Self> {
        let cfg = ParticleConfig { domain, positions };
        cfg.validate()?;
        Ok(cfg)
    }

    pub(crate) fn from_positions_unchecked(domain: Domain<S>, positions: Vec<Position<S>>) -> Self {
        ParticleConfig { domain, positions }
    }

    fn validate(&self) -> Result<()> {
        for (i, p) in self.positions.iter().enumerate() {
            if let Some(l) = self.domain.circumference() {
                if p.offset < S::zero() || p.offset >= *l {
                    return Err(Error::invalid(format!("particle {i}: offset outside [0, L)")));
                }
            } else if p.lap != 0 {
                return Err(Error::invalid("line positions cannot carry laps"));
            }
        }
        for (i, w) in self.positions.windows(2).enumerate() {
            if w[0] > w[1] {
                return Err(Error::invalid(format!("positions not ordered at index {i}")));
            }
        }
        // Co-location of the last particle with the first one lifted by one
        // lap is reachable by the dynamics, so the span may equal L.
        if let (Some(l), Some(first), Some(last)) = (
            self.domain.circumference(),
            self.positions.first(),
            self.positions.last(),
        ) {
            if first.distance_to(last, &self.domain) > *l {
                return Err(Error::invalid("ring configuration spans more than one circumference"));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &Domain<S> {
        &self.domain
    }

    pub fn positions(&self) -> &[Position<S>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn lifted(&self, i: usize) -> S {
        self.positions[i].lifted(&self.domain)
    }

    pub fn lifted_all(&self) -> Vec<S> {
        self.positions.iter().map(|p| p.lifted(&self.domain)).collect()
    }

    /// Position of the particle directly ahead of `i`; on a ring the leader
    /// sees particle 0 one lap further on.
    pub fn ahead(&self, i: usize) -> Option<Position<S>> {
        if i + 1 < self.positions.len() {
            Some(self.positions[i + 1].clone())
        } else if self.domain.is_ring() {
            self.positions.first().map(|p| p.shifted_laps(1))
        } else {
            None
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.positions.len() {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.positions.len(),
            })
        } else {
            Ok(())
        }
    }

    pub(crate) fn gap_unchecked(&self, i: usize) -> Distance<S> {
        match self.ahead(i) {
            Some(next) => Distance::Finite(self.positions[i].distance_to(&next, &self.domain)),
            None => Distance::Infinite,
        }
    }
}

/// Distance from particle `i` to particle `i+1`. Infinite for the leader on
/// a line; wraps through the circumference for the last particle on a ring.
pub fn gap<S: Scalar>(x: &ParticleConfig<S>, i: usize) -> Result<Distance<S>> {
    x.check_index(i)?;
    Ok(x.gap_unchecked(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;

    fn q(s: &str) -> Exact {
        Exact::parse(s).unwrap()
    }

    fn line() -> Domain<Exact> {
        Domain::line(q("-100"), q("100")).unwrap()
    }

    #[test]
    fn line_gaps() {
        let x = ParticleConfig::new(line(), vec![q("0"), q("5")]).unwrap();
        assert_eq!(gap(&x, 0).unwrap(), Distance::Finite(q("5")));
        assert_eq!(gap(&x, 1).unwrap(), Distance::Infinite);
        assert!(matches!(gap(&x, 2), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    }

    #[test]
    fn ring_gap_wraps() {
        let ring = Domain::ring(q("6")).unwrap();
        let x = ParticleConfig::new(ring, vec![q("0.5"), q("2.5"), q("4.5")]).unwrap();
        assert_eq!(gap(&x, 2).unwrap(), Distance::Finite(q("2")));
        assert_eq!(gap(&x, 0).unwrap(), Distance::Finite(q("2")));
    }

    #[test]
    fn single_particle_ring_sees_itself_one_lap_ahead() {
        let ring = Domain::ring(q("6")).unwrap();
        let x = ParticleConfig::new(ring, vec![q("1")]).unwrap();
        assert_eq!(gap(&x, 0).unwrap(), Distance::Finite(q("6")));
    }

    #[test]
    fn rejects_bad_configs() {
        let ring = Domain::ring(q("6")).unwrap();
        assert!(ParticleConfig::new(ring.clone(), vec![q("2"), q("1")]).is_err());
        assert!(ParticleConfig::new(ring, vec![q("6")]).is_err());
        assert!(Domain::<Exact>::ring(q("0")).is_err());
        assert!(Domain::line(q("1"), q("1")).is_err());
        // shared positions are fine
        assert!(ParticleConfig::new(line(), vec![q("1"), q("1")]).is_ok());
    }

    #[test]
    fn advancing_rewraps() {
        let ring = Domain::ring(q("6")).unwrap();
        let p = Position::at(q("5.5")).advanced(q("0.5"), &ring);
        assert_eq!(p, Position { lap: 1, offset: q("0") });
        assert_eq!(p.lifted(&ring), q("6"));
        assert_eq!(Position::at(q("5")).distance_to(&p, &ring), q("1"));
    }
}
