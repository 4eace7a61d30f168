//! The time loop.

use std::path::PathBuf;

use trt_core::angular::smooth_basis;
use trt_core::dlr_pn::{cg_cell_average, pn_dlr_step, CgOperators, PnDlrOptions};
use trt_core::dlr_sn::{sn_dlr_step, SnDlrOptions};
use trt_core::lowrank::DlrState;
use trt_core::mesh::{assign_materials, DofFlavor, Grid, Shape};
use trt_core::physics::planck;
use trt_core::problem::{Problem, StepInfo};
use trt_core::solvers::CgOptions;
use trt_core::sparse::Csr;
use trt_core::transport_sn::{cell_average, sn_step, DgOperators, SiOptions, SweepOptions};

use crate::config::{Config, ConfigError, InitialRadiation, Method};
use crate::output::{Diagnostics, Writer};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("setup failed: {0}")]
    Setup(trt_core::Error),
    #[error("step {step} (t = {time}) failed: {source}")]
    Step {
        step: usize,
        time: f64,
        source: trt_core::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug)]
pub enum Radiation {
    /// One DG field per quadrature node.
    Sn(Vec<Vec<f64>>),
    LowRank(DlrState),
}

/// A problem being advanced in time.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub config: Config,
    pub problem: Problem,
    pub radiation: Radiation,
    /// Cell temperatures, keV.
    pub temperature: Vec<f64>,
    pub step: usize,
    pub time: f64,
    /// Mass matrix of the radiation dofs.
    mass: Csr,
    radiation_energy: f64,
}

/// Per-cell material ids and initial temperatures.
pub fn paint(config: &Config, grid: &Grid) -> Result<(Vec<usize>, Vec<f64>), ConfigError> {
    let p = &config.problem;
    let shapes: Vec<Shape> = p.shapes.iter().map(|s| s.shape()).collect::<Result<_, _>>()?;
    let ids = assign_materials(grid, p.background, &shapes, p.materials.len())
        .map_err(|e| ConfigError::Invalid(e.to_string()))?
        .ids;
    let temps = (0..grid.n_cells())
        .map(|c| {
            let x = grid.cell_center(c);
            p.shapes
                .iter()
                .zip(&shapes)
                .rev()
                .find(|(_, s)| s.contains(x))
                .map_or(p.background_temperature, |(spec, _)| {
                    spec.temperature.unwrap_or(p.background_temperature)
                })
        })
        .collect();
    Ok((ids, temps))
}

impl Simulation {
    pub fn new(config: &Config) -> Result<Simulation, RunError> {
        config.validate()?;
        let flavor = match config.method {
            Method::DlrPn => DofFlavor::Continuous,
            Method::Sn | Method::DlrSn => DofFlavor::Discontinuous,
        };
        let [nx, ny] = config.grid;
        let grid = Grid::new(nx, ny, [0.0, 0.0], config.problem.extent, flavor).map_err(RunError::Setup)?;
        let (material_ids, temperature) = paint(config, &grid)?;
        let problem = Problem {
            grid,
            quad: config.quadrature_set()?,
            material_ids,
            materials: config.problem.materials.iter().map(|m| m.material()).collect(),
            constants: config.constants,
        };
        let g = &problem.grid;
        let nc = g.n_cells();
        let mass = match flavor {
            DofFlavor::Continuous => CgOperators::assemble(g, &vec![1.0; nc], &vec![0.0; nc]).map(|o| o.mass),
            DofFlavor::Discontinuous => DgOperators::assemble(g, &vec![1.0; nc], &vec![0.0; nc]).map(|o| o.mass),
        }
        .map_err(RunError::Setup)?;

        let emission: Vec<f64> = match config.initial_radiation {
            InitialRadiation::Zero => vec![0.0; nc],
            InitialRadiation::Equilibrium => temperature
                .iter()
                .map(|&t| planck(t, &problem.constants).map(|(b, _)| b))
                .collect::<Result<_, _>>()
                .map_err(RunError::Setup)?,
        };
        let f = nodal(g, &emission);
        let radiation = match config.method {
            Method::Sn => Radiation::Sn(vec![f; problem.quad.len()]),
            Method::DlrSn | Method::DlrPn => {
                let padding = smooth_basis(&problem.quad, config.rank).map_err(RunError::Setup)?;
                Radiation::LowRank(DlrState::isotropic(&f, &mass, &padding).map_err(RunError::Setup)?)
            }
        };
        let mut sim = Simulation {
            config: config.clone(),
            problem,
            radiation,
            temperature,
            step: 0,
            time: 0.0,
            mass,
            radiation_energy: 0.0,
        };
        sim.radiation_energy = sim.integrate(&sim.scalar_flux()) / sim.problem.constants.c;
        Ok(sim)
    }

    /// Scalar flux at the radiation dofs.
    pub fn scalar_flux(&self) -> Vec<f64> {
        match &self.radiation {
            Radiation::Sn(psi) => {
                let q = &self.problem.quad;
                let mut phi = vec![0.0; psi[0].len()];
                for (d, field) in psi.iter().enumerate() {
                    trt_core::dense::axpy(q.weights[d], field, &mut phi);
                }
                phi
            }
            Radiation::LowRank(state) => state.scalar_flux(),
        }
    }

    /// Cell averages of the scalar flux.
    pub fn cell_scalar_flux(&self) -> Vec<f64> {
        let phi = self.scalar_flux();
        match self.problem.grid.flavor {
            DofFlavor::Continuous => cg_cell_average(&self.problem.grid, &phi),
            DofFlavor::Discontinuous => cell_average(&phi),
        }
    }

    pub fn radiation_energy(&self) -> f64 {
        self.radiation_energy
    }

    pub fn material_energy(&self) -> f64 {
        self.problem.material_energy(&self.temperature)
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.n_steps()
    }

    fn integrate(&self, u: &[f64]) -> f64 {
        self.mass.matvec(u).iter().sum()
    }

    /// Advances one step and reports it.
    pub fn advance(&mut self) -> Result<Diagnostics, RunError> {
        let dt = self.config.dt;
        let s = &self.config.solver;
        let si = SiOptions {
            tol: s.si_tol,
            max_iters: s.max_iters,
        };
        let fail = |source| RunError::Step {
            step: self.step + 1,
            time: self.time,
            source,
        };
        let t0 = &self.temperature;
        let (radiation, t, info): (Radiation, Vec<f64>, StepInfo) = match &self.radiation {
            Radiation::Sn(psi) => {
                let opts = SweepOptions { si, dsa: s.dsa };
                let (psi, t, info) = sn_step(&self.problem, psi, t0, dt, opts).map_err(fail)?;
                (Radiation::Sn(psi), t, info)
            }
            Radiation::LowRank(state) if self.config.method == Method::DlrSn => {
                let opts = SnDlrOptions {
                    si,
                    dsa: s.dsa,
                    ..SnDlrOptions::default()
                };
                let (st, t, info) = sn_dlr_step(&self.problem, state, t0, dt, opts).map_err(fail)?;
                (Radiation::LowRank(st), t, info)
            }
            Radiation::LowRank(state) => {
                let opts = PnDlrOptions {
                    cg: CgOptions {
                        tol: s.cg_tol,
                        max_iters: s.max_iters,
                    },
                    ..PnDlrOptions::default()
                };
                let (st, t, info) = pn_dlr_step(&self.problem, state, t0, dt, opts).map_err(fail)?;
                (Radiation::LowRank(st), t, info)
            }
        };
        let before = self.material_energy() + self.radiation_energy;
        self.radiation = radiation;
        self.temperature = t;
        self.step += 1;
        self.time = self.step as f64 * dt;
        self.radiation_energy = info.radiation_energy;
        let material_energy = self.material_energy();
        let total = material_energy + info.radiation_energy;
        let defect = total + dt * info.leakage - info.floor_energy - before;
        Ok(Diagnostics {
            step: self.step,
            time: self.time,
            iterations: info.iterations,
            cg_iterations: info.cg_iterations,
            condition: info.condition,
            discarded: info.discarded,
            projection_bound: info.projection_bound,
            material_energy,
            radiation_energy: info.radiation_energy,
            leakage: info.leakage,
            floor_energy: info.floor_energy,
            balance_residual: defect.abs() / total.max(f64::MIN_POSITIVE),
        })
    }
}

/// Cellwise values spread to the radiation dofs: copied to the four DG
/// corners, averaged over the cells sharing a CG node.
fn nodal(g: &Grid, cells: &[f64]) -> Vec<f64> {
    match g.flavor {
        DofFlavor::Discontinuous => cells.iter().flat_map(|&v| [v; 4]).collect(),
        DofFlavor::Continuous => {
            let mut sum = vec![0.0; g.n_dofs()];
            let mut count = vec![0.0; g.n_dofs()];
            for (c, &v) in cells.iter().enumerate() {
                for a in 0..4 {
                    let n = g.cg_dof(c, a);
                    sum[n] += v;
                    count[n] += 1.0;
                }
            }
            sum.iter().zip(&count).map(|(s, k)| s / k).collect()
        }
    }
}

/// What a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub simulation: Simulation,
    pub diagnostics: Vec<Diagnostics>,
}

/// Runs the configured problem to `t_final`, writing outputs when the config
/// names an output directory.
pub fn run(config: &Config) -> Result<RunSummary, RunError> {
    let mut sim = Simulation::new(config)?;
    let mut writer = match &config.output {
        Some(out) => Some(Writer::create(out, &sim.problem.grid)?),
        None => None,
    };
    if let Some(w) = writer.as_mut() {
        w.fields(&sim)?;
    }
    let every = config.output.as_ref().map_or(0, |o| o.every);
    let mut diagnostics = Vec::with_capacity(config.n_steps());
    while !sim.is_done() {
        let d = sim.advance()?;
        log::info!(
            "step {} t={:.4} iters={} cg={} balance={:.2e}",
            d.step,
            d.time,
            d.iterations,
            d.cg_iterations,
            d.balance_residual
        );
        if let Some(w) = writer.as_mut() {
            w.diagnostics(&d)?;
            if (every > 0 && sim.step % every == 0) || sim.is_done() {
                w.fields(&sim)?;
            }
        }
        diagnostics.push(d);
    }
    Ok(RunSummary {
        simulation: sim,
        diagnostics,
    })
}
