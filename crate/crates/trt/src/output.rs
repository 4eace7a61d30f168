//! Files a run writes into its output directory:
//!
//! * `diagnostics.csv`: one row per step, columns [`DIAGNOSTICS_HEADER`];
//!   optional values are left empty when a method does not produce them,
//! * `fields_<step>.csv`: `x,y,T,phi` at cell centers, one row per cell,
//! * `fields_<step>.vtk` (optional): legacy ASCII structured points with the
//!   same cell data as point data.
//!
//! Numbers are written with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use trt_core::mesh::Grid;

use crate::config::OutputConfig;
use crate::run::{RunError, Simulation};

pub const DIAGNOSTICS_HEADER: &str = "step,time,iterations,cg_iterations,condition,discarded,projection_bound,\
material_energy,radiation_energy,leakage,floor_energy,balance_residual";
pub const FIELDS_HEADER: &str = "x,y,T,phi";

/// One step's report.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub step: usize,
    pub time: f64,
    /// Sweeps (sn, dlr-sn) or K-step block iterations (dlr-pn).
    pub iterations: usize,
    pub cg_iterations: usize,
    /// Collocation matrix condition number (dlr-sn).
    pub condition: Option<f64>,
    /// Discarded singular-value norm (dlr-pn).
    pub discarded: Option<f64>,
    /// Energy-defect bound from the spatial projection (dlr-sn).
    pub projection_bound: Option<f64>,
    pub material_energy: f64,
    pub radiation_energy: f64,
    pub leakage: f64,
    /// Material energy injected by the temperature floor.
    pub floor_energy: f64,
    /// `|ΔE_mat + ΔE_rad + Δt·leakage − floor_energy| / E_total`.
    pub balance_residual: f64,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

impl Diagnostics {
    pub fn csv_row(&self) -> String {
        [
            self.step.to_string(),
            num(self.time),
            self.iterations.to_string(),
            self.cg_iterations.to_string(),
            opt(self.condition),
            opt(self.discarded),
            opt(self.projection_bound),
            num(self.material_energy),
            num(self.radiation_energy),
            num(self.leakage),
            num(self.floor_energy),
            num(self.balance_residual),
        ]
        .join(",")
    }
}

pub struct Writer {
    dir: PathBuf,
    vtk: bool,
    grid: Grid,
    diagnostics: BufWriter<File>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Writer {
    /// Creates the directory and starts `diagnostics.csv`.
    pub fn create(out: &OutputConfig, grid: &Grid) -> Result<Writer, RunError> {
        std::fs::create_dir_all(&out.dir).map_err(io_err(&out.dir))?;
        let path = out.dir.join("diagnostics.csv");
        let mut diagnostics = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(diagnostics, "{DIAGNOSTICS_HEADER}")
            .and_then(|_| diagnostics.flush())
            .map_err(io_err(&path))?;
        Ok(Writer {
            dir: out.dir.clone(),
            vtk: out.vtk,
            grid: grid.clone(),
            diagnostics,
        })
    }

    /// Appends a row and flushes, so a failing run keeps what it reported.
    pub fn diagnostics(&mut self, d: &Diagnostics) -> Result<(), RunError> {
        let path = self.dir.join("diagnostics.csv");
        writeln!(self.diagnostics, "{}", d.csv_row())
            .and_then(|_| self.diagnostics.flush())
            .map_err(io_err(&path))
    }

    pub fn fields(&self, sim: &Simulation) -> Result<(), RunError> {
        let phi = sim.cell_scalar_flux();
        let path = self.dir.join(format!("fields_{}.csv", sim.step));
        write_fields_csv(&path, &self.grid, &sim.temperature, &phi)?;
        if self.vtk {
            let path = self.dir.join(format!("fields_{}.vtk", sim.step));
            write_vtk(&path, &self.grid, &sim.temperature, &phi)?;
        }
        Ok(())
    }
}

pub fn write_fields_csv(path: &Path, grid: &Grid, t: &[f64], phi: &[f64]) -> Result<(), RunError> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut body = || -> std::io::Result<()> {
        writeln!(f, "{FIELDS_HEADER}")?;
        for c in 0..grid.n_cells() {
            let [x, y] = grid.cell_center(c);
            writeln!(f, "{},{},{},{}", num(x), num(y), num(t[c]), num(phi[c]))?;
        }
        f.flush()
    };
    body().map_err(io_err(path))
}

/// Cell values become the points of an `nx × ny` lattice at the cell centers.
pub fn write_vtk(path: &Path, grid: &Grid, t: &[f64], phi: &[f64]) -> Result<(), RunError> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut body = || -> std::io::Result<()> {
        let [x0, y0] = grid.cell_center(0);
        writeln!(f, "# vtk DataFile Version 3.0")?;
        writeln!(f, "trt fields")?;
        writeln!(f, "ASCII")?;
        writeln!(f, "DATASET STRUCTURED_POINTS")?;
        writeln!(f, "DIMENSIONS {} {} 1", grid.nx, grid.ny)?;
        writeln!(f, "ORIGIN {} {} 0", num(x0), num(y0))?;
        writeln!(f, "SPACING {} {} 1", num(grid.dx), num(grid.dy))?;
        writeln!(f, "POINT_DATA {}", grid.n_cells())?;
        for (name, values) in [("T", t), ("phi", phi)] {
            writeln!(f, "SCALARS {name} double 1")?;
            writeln!(f, "LOOKUP_TABLE default")?;
            for v in values {
                writeln!(f, "{}", num(*v))?;
            }
        }
        f.flush()
    };
    body().map_err(io_err(path))
}
