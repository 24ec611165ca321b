//! Experiment configuration files. Every number is a decimal string (or a
//! `p/q` fraction) so exact runs see exactly the values written.

use std::path::{Path, PathBuf};

use hetflow::dynamics::ServiceDiscipline;
use hetflow::scenarios::{equispaced_config, make_obstacles, random_config, scale_config, ObstacleKind};
use hetflow::{ArithmeticMode, Domain, ObstacleField, ParticleConfig, Scalar};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    /// Speed cap `v`.
    #[serde(default = "unit")]
    pub velocity: String,
    #[serde(default)]
    pub mode: Option<ArithmeticMode>,
    #[serde(default)]
    pub obstacles: ObstacleSpec,
    #[serde(default)]
    pub particles: Option<ParticleSpec>,
    /// Second process for `couple`.
    #[serde(default)]
    pub partner: Option<ParticleSpec>,
    #[serde(default)]
    pub steps: Option<u64>,
    #[serde(default)]
    pub burn_in: Option<u64>,
    #[serde(default)]
    pub discipline: ServiceDiscipline,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Output directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn unit() -> String {
    "1".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Ring { length: String },
    Line { start: String, end: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSpec {
    #[default]
    None,
    List {
        positions: Vec<String>,
        /// Waiting times; all zero when omitted.
        #[serde(default)]
        waits: Vec<u32>,
        /// Segment velocities; the cap everywhere when omitted.
        #[serde(default)]
        velocities: Vec<String>,
    },
    Equispaced {
        spacing: String,
    },
    Poisson {
        rate: String,
        seed: u64,
    },
    Irregular,
    Triangular,
    Uniform {
        count: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParticleSpec {
    List {
        positions: Vec<String>,
    },
    /// `round(ρ·L)` evenly spaced particles.
    Equispaced {
        density: String,
    },
    /// `round(ρ·L)` particles at seeded random grid points.
    Random {
        density: String,
        seed: u64,
    },
    /// The base configuration with density multiplied by `alpha = "k/n"`.
    Scaled {
        alpha: String,
        base: Box<ParticleSpec>,
    },
    /// One particle on every point of the extended obstacle chain.
    Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub rho_min: String,
    pub rho_max: String,
    pub points: usize,
}

/// A configuration with every field parsed in one arithmetic.
#[derive(Debug, Clone)]
pub struct Experiment<S> {
    pub field: ObstacleField<S>,
    pub particles: Option<ParticleConfig<S>>,
    pub partner: Option<ParticleConfig<S>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Parses every value. `seed` replaces the seeds of random generators.
    pub fn build<S: Scalar>(&self, seed: Option<u64>) -> Result<Experiment<S>, CliError> {
        let domain = match &self.domain {
            DomainSpec::Ring { length } => Domain::ring(S::parse(length)?)?,
            DomainSpec::Line { start, end } => Domain::line(S::parse(start)?, S::parse(end)?)?,
        };
        let cap = S::parse(&self.velocity)?;
        let field = build_obstacles(&self.obstacles, &domain, cap, seed)?;
        let particles =
            |spec: &Option<ParticleSpec>| spec.as_ref().map(|p| build_particles(p, &field, seed)).transpose();
        Ok(Experiment {
            particles: particles(&self.particles)?,
            partner: particles(&self.partner)?,
            field,
        })
    }
}

fn parse_all<S: Scalar>(values: &[String]) -> Result<Vec<S>, CliError> {
    values.iter().map(|s| S::parse(s).map_err(CliError::from)).collect()
}

fn build_obstacles<S: Scalar>(
    spec: &ObstacleSpec,
    domain: &Domain<S>,
    cap: S,
    seed: Option<u64>,
) -> Result<ObstacleField<S>, CliError> {
    let kind = match spec {
        ObstacleSpec::None => return Ok(ObstacleField::empty(domain.clone(), cap)?),
        ObstacleSpec::List {
            positions,
            waits,
            velocities,
        } => {
            let mut z = ObstacleField::new(domain.clone(), parse_all(positions)?, cap)?;
            if !waits.is_empty() {
                z = z.with_waits(waits.clone())?;
            }
            if !velocities.is_empty() {
                z = z.with_velocities(parse_all(velocities)?)?;
            }
            return Ok(z);
        }
        ObstacleSpec::Equispaced { spacing } => ObstacleKind::Equispaced {
            spacing: spacing.clone(),
        },
        ObstacleSpec::Poisson { rate, seed: s } => ObstacleKind::Poisson {
            rate: rate
                .parse()
                .map_err(|_| CliError::config(format!("Poisson rate {rate:?} is not a number")))?,
            seed: seed.unwrap_or(*s),
        },
        ObstacleSpec::Irregular => ObstacleKind::Irregular,
        ObstacleSpec::Triangular => ObstacleKind::Triangular,
        ObstacleSpec::Uniform { count, seed: s } => ObstacleKind::Uniform {
            count: *count,
            seed: seed.unwrap_or(*s),
        },
    };
    Ok(make_obstacles(&kind, domain, cap)?)
}

fn count_for<S: Scalar>(density: &str, domain: &Domain<S>) -> Result<usize, CliError> {
    let rho = S::parse(density)?;
    if rho < S::zero() {
        return Err(CliError::config(format!("density {density} is negative")));
    }
    Ok((rho * domain.length()).to_f64().round() as usize)
}

fn parse_alpha(alpha: &str) -> Result<(u32, u32), CliError> {
    let bad = || CliError::config(format!("alpha {alpha:?} must be k or k/n with positive integers"));
    let (k, n) = alpha.split_once('/').unwrap_or((alpha, "1"));
    let k: u32 = k.trim().parse().map_err(|_| bad())?;
    let n: u32 = n.trim().parse().map_err(|_| bad())?;
    if k == 0 || n == 0 {
        return Err(bad());
    }
    Ok((k, n))
}

fn build_particles<S: Scalar>(
    spec: &ParticleSpec,
    field: &ObstacleField<S>,
    seed: Option<u64>,
) -> Result<ParticleConfig<S>, CliError> {
    let domain = field.domain();
    Ok(match spec {
        ParticleSpec::List { positions } => ParticleConfig::new(domain.clone(), parse_all(positions)?)?,
        ParticleSpec::Equispaced { density } => equispaced_config(domain, count_for(density, domain)?)?,
        ParticleSpec::Random { density, seed: s } => {
            random_config(domain, count_for(density, domain)?, seed.unwrap_or(*s))?
        }
        ParticleSpec::Scaled { alpha, base } => {
            let (k, n) = parse_alpha(alpha)?;
            scale_config(&build_particles(base, field, seed)?, k, n)?
        }
        ParticleSpec::Extended => field.extend().as_particle_config(),
    })
}
