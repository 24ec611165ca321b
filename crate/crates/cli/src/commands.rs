//! The six commands. Each validates its whole input before creating any
//! output, stages files and commits them at the end.

use std::path::{Path, PathBuf};

use hetflow::coupling::{run_coupled, CouplingOptions};
use hetflow::dynamics::{Dynamics, SimState, TrajectoryCsv};
use hetflow::obstacles::PointKind;
use hetflow::scenarios::run_scenario;
use hetflow::stats::{check_extended_bounds, classify_phase, mean_velocity, predict_v, velocity_spread};
use hetflow::sweep::{fd_sweep, linspace, SWEEP_HEADER};
use hetflow::zerorange::{embed_and_compare, zr_velocity, TrackedZeroRange};
use hetflow::{ArithmeticMode, ChainDensity, Domain, Exact, Execution, ParticleConfig, Scalar};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::output::{io_at, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Extend,
    Simulate,
    FdSweep,
    Couple,
    ZeroRange,
    Scenario,
}

/// Command-line overrides of configuration values.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub steps: Option<u64>,
    pub burn_in: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<ArithmeticMode>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub rho_min: Option<String>,
    pub rho_max: Option<String>,
    pub points: Option<usize>,
    /// Scenario name.
    pub name: Option<String>,
}

/// How a command ended after its files were written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    Degenerate(String),
    Violated(String),
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Degenerate(_) => 2,
            Status::Violated(_) => 3,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub status: Status,
}

struct Run<'a> {
    config: ExperimentConfig,
    opts: &'a Options,
    out: PathBuf,
}

impl Run<'_> {
    fn steps(&self, default: u64) -> u64 {
        self.opts.steps.or(self.config.steps).unwrap_or(default)
    }

    fn burn_in(&self, steps: u64) -> u64 {
        self.opts.burn_in.or(self.config.burn_in).unwrap_or(steps / 10)
    }

    fn mode(&self) -> ArithmeticMode {
        self.opts.mode.or(self.config.mode).unwrap_or(ArithmeticMode::Exact)
    }

    fn build<S: Scalar>(&self) -> Result<Experiment<S>, CliError> {
        self.config.build(self.opts.seed)
    }
}

pub fn run(cmd: Command, opts: &Options) -> Result<Outcome, CliError> {
    if opts.threads == Some(0) {
        return Err(CliError::config("--threads must be positive"));
    }
    if cmd == Command::Scenario {
        return scenario(opts);
    }
    let path = opts
        .config
        .as_deref()
        .ok_or_else(|| CliError::config("this command needs --config"))?;
    let config = ExperimentConfig::load(path)?;
    let out = opts
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let r = Run { config, opts, out };
    match (cmd, r.mode()) {
        (Command::Extend, ArithmeticMode::Exact) => extend::<Exact>(&r),
        (Command::Extend, ArithmeticMode::Fast) => extend::<f64>(&r),
        (Command::Simulate, ArithmeticMode::Exact) => simulate::<Exact>(&r),
        (Command::Simulate, ArithmeticMode::Fast) => simulate::<f64>(&r),
        (Command::FdSweep, ArithmeticMode::Exact) => sweep::<Exact>(&r),
        (Command::FdSweep, ArithmeticMode::Fast) => sweep::<f64>(&r),
        (Command::Couple, ArithmeticMode::Exact) => couple::<Exact>(&r),
        (Command::Couple, ArithmeticMode::Fast) => couple::<f64>(&r),
        (Command::ZeroRange, ArithmeticMode::Exact) => zero_range::<Exact>(&r),
        (Command::ZeroRange, ArithmeticMode::Fast) => zero_range::<f64>(&r),
        (Command::Scenario, _) => unreachable!("handled above"),
    }
}

fn dec<S: Scalar>(x: &S) -> String {
    x.to_decimal_string()
}

fn chain_string<S: Scalar>(c: &ChainDensity<S>) -> Option<String> {
    c.value().map(dec)
}

fn density_of<S: Scalar>(x: &ParticleConfig<S>) -> S {
    S::from_int(x.len() as i64) / x.domain().length()
}

fn need<'a, S>(x: &'a Option<ParticleConfig<S>>, what: &str) -> Result<&'a ParticleConfig<S>, CliError> {
    x.as_ref()
        .ok_or_else(|| CliError::config(format!("this command needs a '{what}' particle spec")))
}

#[derive(Serialize)]
struct ExtendSummary {
    mode: ArithmeticMode,
    obstacles: usize,
    chain_points: usize,
    rho_z: Option<String>,
    rho_z_ext: Option<String>,
    /// Density of the chain after waiting-time refinement.
    rho_chain: Option<String>,
    lower_bound: Option<String>,
    upper_bound: Option<String>,
    bounds_pass: Option<bool>,
}

fn extend<S: Scalar>(r: &Run) -> Result<Outcome, CliError> {
    let e = r.build::<S>()?;
    let chain = e.field.extend();
    let bounds = check_extended_bounds(&e.field).ok();
    let summary = ExtendSummary {
        mode: S::MODE,
        obstacles: e.field.len(),
        chain_points: chain.len(),
        rho_z: e.field.density().as_ref().map(dec),
        rho_z_ext: chain_string(&chain.density()),
        rho_chain: chain_string(&e.field.chain_density()),
        lower_bound: bounds.as_ref().map(|b| dec(&b.lower)),
        upper_bound: bounds.as_ref().map(|b| dec(&b.upper)),
        bounds_pass: bounds.as_ref().map(|b| b.passed()),
    };
    let mut out = Outputs::create(&r.out)?;
    let path = r.out.join("extended.csv");
    out.stream("extended.csv", |w| {
        writeln!(w, "position,kind,segment_velocity").map_err(io_at(&path))?;
        for p in chain.points() {
            let kind = match p.kind {
                PointKind::Real => "real",
                PointKind::Virtual => "virtual",
            };
            writeln!(w, "{},{kind},{}", dec(&p.position), dec(&p.segment_velocity)).map_err(io_at(&path))?;
        }
        Ok(())
    })?;
    out.json("extend_summary.json", &summary)?;
    let status = match summary.bounds_pass {
        None => Status::Degenerate("no obstacles: the density bounds are undefined".into()),
        Some(false) => Status::Violated("extended density outside its bounds".into()),
        Some(true) => Status::Ok,
    };
    Ok(Outcome {
        files: out.commit()?,
        status,
    })
}

#[derive(Serialize)]
struct SimulateSummary {
    mode: ArithmeticMode,
    steps: u64,
    burn_in: u64,
    particles: usize,
    rho_x: String,
    rho_z_ext: Option<String>,
    /// False when no step was measured; the velocity fields are then null.
    v_defined: bool,
    #[serde(rename = "V_mean")]
    v_mean: Option<String>,
    #[serde(rename = "V_spread")]
    v_spread: Option<String>,
    #[serde(rename = "V_predicted")]
    v_predicted: Option<String>,
    phase: Option<String>,
}

fn simulate<S: Scalar>(r: &Run) -> Result<Outcome, CliError> {
    let e = r.build::<S>()?;
    let x = need(&e.particles, "particles")?.clone();
    if x.is_empty() {
        return Err(CliError::Degenerate("no particles to simulate".into()));
    }
    let steps = r.steps(1000);
    let burn_in = r.burn_in(steps);
    let dynamics = Dynamics::new(&e.field).with_discipline(r.config.discipline);
    let s0 = SimState::new(x.clone(), &e.field)?;
    let chain = e.field.chain_density();
    let rho_x = density_of(&x);

    let mut out = Outputs::create(&r.out)?;
    let path = r.out.join("trajectory.csv");
    let traj = out.stream("trajectory.csv", |w| {
        let warm = dynamics.run(s0, burn_in, &mut [], &[])?;
        let start = warm.final_state.rebased();
        let mut csv = TrajectoryCsv::new(w);
        csv.write_initial(&start).map_err(io_at(&path))?;
        Ok(dynamics.run(start, steps, &mut [&mut csv], &[])?)
    })?;
    let v_defined = steps > 0;
    let summary = SimulateSummary {
        mode: S::MODE,
        steps,
        burn_in,
        particles: x.len(),
        rho_x: dec(&rho_x),
        rho_z_ext: chain_string(&chain),
        v_defined,
        v_mean: v_defined
            .then(|| mean_velocity(&traj, steps))
            .transpose()?
            .as_ref()
            .map(dec),
        v_spread: v_defined
            .then(|| velocity_spread(&traj, steps))
            .transpose()?
            .as_ref()
            .map(dec),
        v_predicted: Some(dec(&predict_v(&rho_x, &chain)?)),
        phase: Some(classify_phase(&rho_x, &chain)?.to_string()),
    };
    out.json("summary.json", &summary)?;
    let status = if v_defined {
        Status::Ok
    } else {
        Status::Degenerate("zero measured steps: the velocity is undefined".into())
    };
    Ok(Outcome {
        files: out.commit()?,
        status,
    })
}

#[derive(Serialize)]
struct SweepSummary {
    mode: ArithmeticMode,
    points: usize,
    steps: u64,
    burn_in: u64,
    max_relative_error: f64,
    monotone_nonincreasing: bool,
}

fn execution(threads: Option<usize>) -> Result<Execution, CliError> {
    match threads {
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            // The global pool can only be configured once per process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(Execution::Parallel)
        }
        _ => Ok(Execution::default()),
    }
}

fn sweep<S: Scalar>(r: &Run) -> Result<Outcome, CliError> {
    let e = r.build::<S>()?;
    if !e.field.domain().is_ring() {
        return Err(CliError::config("fd-sweep needs a ring domain"));
    }
    let spec = r.config.sweep.as_ref();
    let pick = |flag: &Option<String>, cfg: Option<&String>, what: &str| -> Result<S, CliError> {
        let s = flag
            .as_ref()
            .or(cfg)
            .ok_or_else(|| CliError::config(format!("fd-sweep needs {what}")))?;
        Ok(S::parse(s)?)
    };
    let lo = pick(&r.opts.rho_min, spec.map(|s| &s.rho_min), "rho_min")?;
    let hi = pick(&r.opts.rho_max, spec.map(|s| &s.rho_max), "rho_max")?;
    let points = r
        .opts
        .points
        .or(spec.map(|s| s.points))
        .ok_or_else(|| CliError::config("fd-sweep needs points"))?;
    if lo > hi || !lo.is_positive() {
        return Err(CliError::config("fd-sweep needs 0 < rho_min <= rho_max"));
    }
    let densities = linspace(&lo, &hi, points)?;
    let steps = r.steps(1000);
    let burn_in = r.burn_in(steps);
    let rows = fd_sweep(&e.field, &densities, steps, burn_in, execution(r.opts.threads)?)?;

    let summary = SweepSummary {
        mode: S::MODE,
        points: rows.len(),
        steps,
        burn_in,
        max_relative_error: rows.iter().map(|r| r.relative_error()).fold(0.0, f64::max),
        monotone_nonincreasing: rows.windows(2).all(|w| w[1].v_measured <= w[0].v_measured),
    };
    let mut out = Outputs::create(&r.out)?;
    let path = r.out.join("fd.csv");
    out.stream("fd.csv", |w| {
        writeln!(w, "{SWEEP_HEADER}").map_err(io_at(&path))?;
        for row in &rows {
            writeln!(w, "{}", row.csv_line()).map_err(io_at(&path))?;
        }
        Ok(())
    })?;
    out.json("fd_summary.json", &summary)?;
    Ok(Outcome {
        files: out.commit()?,
        status: Status::Ok,
    })
}

#[derive(Serialize)]
struct CouplingVerdict {
    mode: ArithmeticMode,
    steps: u64,
    always_proper: bool,
    defect_difference_constant: bool,
    nearly_successful: bool,
    initial_defect_density: [String; 2],
    final_defect_density: [String; 2],
    final_velocity_gap: String,
    overtaking_events: u64,
    violations: Vec<String>,
}

fn couple<S: Scalar>(r: &Run) -> Result<Outcome, CliError> {
    let e = r.build::<S>()?;
    let x = need(&e.particles, "particles")?;
    let xbar = need(&e.partner, "partner")?;
    let options = CouplingOptions {
        steps: r.steps(10_000),
        abort_on_violation: false,
        ..CouplingOptions::default()
    };
    let d = run_coupled(
        SimState::new(x.clone(), &e.field)?,
        SimState::new(xbar.clone(), &e.field)?,
        &e.field,
        &options,
    )?;
    let verdict = CouplingVerdict {
        mode: S::MODE,
        steps: d.steps,
        always_proper: d.always_proper,
        defect_difference_constant: d.defect_difference_constant,
        nearly_successful: d.nearly_successful,
        initial_defect_density: d.initial_defect_density.clone().map(|v| dec(&v)),
        final_defect_density: d.final_defect_density.clone().map(|v| dec(&v)),
        final_velocity_gap: dec(&d.final_velocity_gap),
        overtaking_events: d.events,
        violations: d.violations.iter().take(20).cloned().collect(),
    };
    let mut out = Outputs::create(&r.out)?;
    let path = r.out.join("coupling.csv");
    out.stream("coupling.csv", |w| {
        writeln!(w, "t,defects_x,defects_xbar,pairs,v_gap_abs,proper_flag").map_err(io_at(&path))?;
        for row in &d.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.t,
                row.defects_x,
                row.defects_xbar,
                row.pairs,
                dec(&row.v_gap_abs),
                u8::from(row.proper)
            )
            .map_err(io_at(&path))?;
        }
        Ok(())
    })?;
    out.json("coupling_verdict.json", &verdict)?;
    let status = if !d.always_proper {
        Status::Violated("the coupled pair stopped being proper".into())
    } else if !d.defect_difference_constant {
        Status::Violated("the defect-count difference changed".into())
    } else {
        Status::Ok
    };
    Ok(Outcome {
        files: out.commit()?,
        status,
    })
}

#[derive(Serialize)]
struct ZeroRangeSummary {
    mode: ArithmeticMode,
    steps: u64,
    sites: i64,
    particles: usize,
    #[serde(rename = "V_measured")]
    v_measured: Option<String>,
    #[serde(rename = "V_predicted")]
    v_predicted: String,
    embedding_identical: bool,
}

fn zero_range<S: Scalar>(r: &Run) -> Result<Outcome, CliError> {
    let e = r.build::<S>()?;
    if !e.field.is_empty() || *e.field.cap() != S::one() {
        return Err(CliError::config("zero-range runs need no obstacles and velocity 1"));
    }
    let l = match e.field.domain() {
        Domain::Ring { circumference } if circumference.is_integer() => circumference.floor_int(),
        _ => return Err(CliError::config("zero-range runs need a ring of integer length")),
    };
    let x = need(&e.particles, "particles")?;
    let lifted = x.lifted_all();
    if lifted.iter().any(|p| !p.is_integer()) {
        return Err(CliError::config("zero-range runs need integer particle positions"));
    }
    if x.is_empty() {
        return Err(CliError::Degenerate("no particles".into()));
    }
    let steps = r.steps(1000);
    let start: Vec<i64> = lifted.iter().map(Scalar::floor_int).collect();
    let mut zr = TrackedZeroRange::new(Some(l), start.clone())?;
    let report = embed_and_compare(x, steps)?;

    let mut out = Outputs::create(&r.out)?;
    let path = r.out.join("occupancy.csv");
    out.stream("occupancy.csv", |w| {
        writeln!(w, "t,site,count").map_err(io_at(&path))?;
        for t in 0..=steps {
            if t > 0 {
                zr.step();
            }
            for (site, count) in zr.occupancy() {
                writeln!(w, "{t},{site},{count}").map_err(io_at(&path))?;
            }
        }
        Ok(())
    })?;
    let moved: i64 = zr.lifted().iter().zip(&start).map(|(a, b)| a - b).sum();
    let v_measured = (steps > 0).then(|| S::from_int(moved) / S::from_int(x.len() as i64 * steps as i64));
    let summary = ZeroRangeSummary {
        mode: S::MODE,
        steps,
        sites: l,
        particles: x.len(),
        v_measured: v_measured.as_ref().map(dec),
        v_predicted: dec(&zr_velocity(&density_of(x))?),
        embedding_identical: report.identical(),
    };
    out.json("zero_range_summary.json", &summary)?;
    let status = if steps == 0 {
        Status::Degenerate("zero steps: the velocity is undefined".into())
    } else if !report.identical() {
        Status::Violated(format!(
            "continuum and zero-range trajectories diverge at {:?}",
            report.divergence
        ))
    } else {
        Status::Ok
    };
    Ok(Outcome {
        files: out.commit()?,
        status,
    })
}

fn scenario(opts: &Options) -> Result<Outcome, CliError> {
    let name = opts
        .name
        .as_deref()
        .ok_or_else(|| CliError::config("scenario needs a name"))?;
    let outcome = run_scenario(name, opts.seed.unwrap_or(0))?;
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut out = Outputs::create(Path::new(&dir))?;
    out.json(&format!("scenario_{name}.json"), &outcome)?;
    let status = if outcome.holds {
        Status::Ok
    } else {
        Status::Violated(format!("scenario {name} does not hold"))
    };
    Ok(Outcome {
        files: out.commit()?,
        status,
    })
}
