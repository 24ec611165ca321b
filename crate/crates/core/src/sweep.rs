//! Fundamental-diagram sweeps over particle density.

use crate::dynamics::{Dynamics, InvariantChecker, Observer, SimState};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::obstacles::{ChainDensity, ObstacleField};
use crate::scalar::Scalar;
use crate::scenarios::equispaced_config;
use crate::stats::{classify_phase, mean_velocity, predict_v, Phase};

/// One density point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<S> {
    /// `N/L` actually simulated (`N` is the requested density times `L`,
    /// rounded).
    pub rho_x: S,
    pub rho_z_ext: ChainDensity<S>,
    pub v_measured: S,
    pub v_predicted: S,
    pub phase: Phase,
    pub steps: u64,
    pub domain_l: S,
}

impl<S: Scalar> SweepRow<S> {
    pub fn relative_error(&self) -> f64 {
        let p = self.v_predicted.to_f64();
        ((self.v_measured.to_f64() - p) / p).abs()
    }
}

pub const SWEEP_HEADER: &str = "rho_x,rho_z_ext,V_measured,V_predicted,phase,steps,domain_L";

impl<S: Scalar> SweepRow<S> {
    pub fn csv_line(&self) -> String {
        let chain = match &self.rho_z_ext {
            ChainDensity::Density(r) => r.to_decimal_string(),
            ChainDensity::Empty { .. } => "empty".to_string(),
        };
        format!(
            "{},{},{},{},{},{},{}",
            self.rho_x.to_decimal_string(),
            chain,
            self.v_measured.to_decimal_string(),
            self.v_predicted.to_decimal_string(),
            self.phase,
            self.steps,
            self.domain_l.to_decimal_string()
        )
    }
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace<S: Scalar>(lo: &S, hi: &S, points: usize) -> Result<Vec<S>> {
    match points {
        0 => Err(Error::Degenerate("a sweep needs at least one point".into())),
        1 => Ok(vec![lo.clone()]),
        _ => {
            let step = (hi.clone() - lo.clone()) / S::from_int(points as i64 - 1);
            Ok((0..points)
                .map(|k| lo.clone() + S::from_int(k as i64) * step.clone())
                .collect())
        }
    }
}

/// Runs one density on a ring: `N = round(ρL)` equispaced particles,
/// `burn_in` unrecorded steps, then the mean velocity over `steps` steps.
pub fn fd_point<S: Scalar>(field: &ObstacleField<S>, rho: &S, steps: u64, burn_in: u64) -> Result<SweepRow<S>> {
    point(field, rho, steps, burn_in, None).map(|(row, _)| row)
}

/// [`fd_point`] with an [`InvariantChecker`] attached to every step,
/// burn-in included. Returns the violations found.
pub fn fd_point_checked<S: Scalar>(
    field: &ObstacleField<S>,
    rho: &S,
    steps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<(SweepRow<S>, Vec<String>)> {
    point(field, rho, steps, burn_in, Some(seed))
}

fn point<S: Scalar>(
    field: &ObstacleField<S>,
    rho: &S,
    steps: u64,
    burn_in: u64,
    check: Option<u64>,
) -> Result<(SweepRow<S>, Vec<String>)> {
    let l = field
        .domain()
        .circumference()
        .cloned()
        .ok_or_else(|| Error::invalid("density sweeps run on a ring"))?;
    if steps == 0 {
        return Err(Error::Degenerate("velocity needs at least one measured step".into()));
    }
    let n = (rho.clone() * l.clone()).to_f64().round() as usize;
    if n == 0 {
        return Err(Error::Degenerate(format!("density {rho} leaves the ring empty")));
    }
    let rho_x = S::from_int(n as i64) / l.clone();
    let x = equispaced_config(field.domain(), n)?;
    let dynamics = Dynamics::new(field);
    let mut checker = check.map(|seed| InvariantChecker::new(field, seed));
    let mut observers: Vec<&mut dyn Observer<S>> = Vec::new();
    if let Some(c) = checker.as_mut() {
        observers.push(c);
    }
    let warm = dynamics.run(SimState::new(x, field)?, burn_in, &mut observers, &[])?;
    let traj = dynamics.run(warm.final_state.rebased(), steps, &mut observers, &[])?;
    drop(observers);
    let chain = field.chain_density();
    let row = SweepRow {
        v_measured: mean_velocity(&traj, steps)?,
        v_predicted: predict_v(&rho_x, &chain)?,
        phase: classify_phase(&rho_x, &chain)?,
        rho_x,
        rho_z_ext: chain,
        steps,
        domain_l: l,
    };
    Ok((row, checker.map(|c| c.violations).unwrap_or_default()))
}

/// Runs every density independently; rows come back in input order.
pub fn fd_sweep<S: Scalar>(
    field: &ObstacleField<S>,
    densities: &[S],
    steps: u64,
    burn_in: u64,
    exec: Execution,
) -> Result<Vec<SweepRow<S>>> {
    exec.map(densities, |rho| fd_point(field, rho, steps, burn_in))
        .into_iter()
        .collect()
}

/// [`fd_sweep`] with invariant checking; point `k` uses checker seed
/// `seed + k`.
pub fn fd_sweep_checked<S: Scalar>(
    field: &ObstacleField<S>,
    densities: &[S],
    steps: u64,
    burn_in: u64,
    seed: u64,
    exec: Execution,
) -> Result<(Vec<SweepRow<S>>, Vec<String>)> {
    let indexed: Vec<(u64, &S)> = densities.iter().enumerate().map(|(k, r)| (k as u64, r)).collect();
    let mut rows = Vec::with_capacity(densities.len());
    let mut violations = Vec::new();
    for res in exec.map(&indexed, |(k, rho)| {
        fd_point_checked(field, rho, steps, burn_in, seed + k)
    }) {
        let (row, v) = res?;
        rows.push(row);
        violations.extend(v);
    }
    Ok((rows, violations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::scalar::Exact;

    #[test]
    fn linspace_is_exact() {
        let q = |s: &str| Exact::parse(s).unwrap();
        let v = linspace(&q("0.1"), &q("2"), 20).unwrap();
        assert_eq!(v.len(), 20);
        assert_eq!(v[1], q("0.2"));
        assert_eq!(v[19], q("2"));
        assert!(linspace(&q("0"), &q("1"), 0).is_err());
    }

    #[test]
    fn small_ring_sweep_matches_prediction() {
        let dom = Domain::ring(60.0).unwrap();
        let z = ObstacleField::new(dom, (0..20).map(|k| 3.0 * k as f64).collect(), 1.0).unwrap();
        let rows = fd_sweep(&z, &[0.5, 1.0, 1.5], 3000, 300, Execution::Sequential).unwrap();
        for r in &rows {
            assert!(r.relative_error() < 0.02, "{}", r.csv_line());
        }
        assert_eq!(rows[0].phase, Phase::Gaseous);
        assert_eq!(rows[2].phase, Phase::Liquid);
        let (checked, violations) = fd_sweep_checked(&z, &[0.5, 1.0, 1.5], 3000, 300, 1, Execution::Parallel).unwrap();
        assert_eq!(rows, checked);
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn degenerate_points() {
        let dom = Domain::ring(10.0).unwrap();
        let z = ObstacleField::empty(dom, 1.0).unwrap();
        assert!(matches!(fd_point(&z, &0.01, 10, 0), Err(Error::Degenerate(_))));
        assert!(matches!(fd_point(&z, &0.5, 0, 0), Err(Error::Degenerate(_))));
    }
}
