//! What every stepper needs to know about a run: grid, quadrature,
//! materials and constants, plus the per-step report they all return.

use alloc::vec::Vec;

use crate::angular::QuadratureSet;
use crate::mesh::Grid;
use crate::physics::{linearize, Constants, LinearizedStep, Material};
use crate::Result;

#[derive(Clone, Debug)]
pub struct Problem {
    pub grid: Grid,
    pub quad: QuadratureSet,
    pub material_ids: Vec<usize>,
    pub materials: Vec<Material>,
    pub constants: Constants,
}

impl Problem {
    pub fn linearize(&self, t0: &[f64], dt: f64) -> Result<LinearizedStep> {
        linearize(t0, &self.material_ids, &self.materials, dt, &self.constants)
    }

    /// Material energy `Σ_c ρc_v T_c · area`.
    pub fn material_energy(&self, t: &[f64]) -> f64 {
        let area = self.grid.cell_area();
        t.iter()
            .zip(&self.material_ids)
            .map(|(t, &m)| self.materials[m].rho * self.materials[m].c_v * t * area)
            .sum()
    }
}

/// Per-step solver report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepInfo {
    /// Source-iteration sweeps (SN, DLR-SN) or outer CG iterations (DLR-PN).
    pub iterations: usize,
    /// Inner CG iterations (DSA or K-step block solves).
    pub cg_iterations: usize,
    /// Condition number of the collocation matrix (DLR-SN).
    pub condition: Option<f64>,
    /// Discarded singular-value norm of the rounding (DLR-PN).
    pub discarded: Option<f64>,
    /// Bound on the step's energy defect from the spatial Galerkin
    /// projection (DLR-SN).
    pub projection_bound: Option<f64>,
    /// Energy outflow rate `Σ_d w_d ∮ max(Ω_d·n, 0) ψ_d` of the new state.
    pub leakage: f64,
    /// Radiation energy `∫φ/c` of the new state.
    pub radiation_energy: f64,
    /// Material energy the temperature floor added this step (cells whose
    /// linear update fell below `t_min`).
    pub floor_energy: f64,
}
