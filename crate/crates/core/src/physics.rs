//! Grey material physics: Planck emission, the Newton linearization that
//! turns one backward-Euler step into a transport problem with
//! pseudo-scattering, and the temperature update that closes the step.
//!
//! All fields here are per cell.

use alloc::format;
use alloc::vec::Vec;

use crate::angular::FOUR_PI;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    /// Absorption opacity, 1/cm.
    pub sigma_a: f64,
    /// Specific heat, GJ/(g·keV).
    pub c_v: f64,
    /// Density, g/cm³.
    pub rho: f64,
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_a > 0.0 && self.c_v > 0.0 && self.rho > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "material fields must be positive: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    /// Speed of light, cm per time unit.
    pub c: f64,
    /// Radiation constant, GJ/(cm³·keV⁴).
    pub a_r: f64,
    /// Temperature floor, keV.
    pub t_min: f64,
}

impl Default for Constants {
    /// Shakes and keV.
    fn default() -> Self {
        Constants {
            c: 299.79,
            a_r: 0.01372,
            t_min: 1e-6,
        }
    }
}

/// `B(T) = a_r c T⁴ / 4π` and its derivative.
pub fn planck(t: f64, k: &Constants) -> Result<(f64, f64)> {
    if !(t >= 0.0) {
        return Err(Error::Contract(format!("negative temperature {t}")));
    }
    let t3 = t * t * t;
    Ok((k.a_r * k.c * t3 * t / FOUR_PI, k.a_r * k.c * t3 / core::f64::consts::PI))
}

/// Coefficients of one linearized step.
#[derive(Clone, Debug)]
pub struct LinearizedStep {
    pub dt: f64,
    pub sigma_a: Vec<f64>,
    /// `σ_a + 1/(cΔt)`
    pub sigma_t: Vec<f64>,
    pub sigma_s: Vec<f64>,
    /// Isotropic emission source (per steradian).
    pub q: Vec<f64>,
    pub t0: Vec<f64>,
    pub b0: Vec<f64>,
    /// `ρc_v + 4πΔtσ ∂B/∂T`
    pub denom: Vec<f64>,
    pub rho_cv: Vec<f64>,
}

impl LinearizedStep {
    pub fn n(&self) -> usize {
        self.t0.len()
    }

    pub fn inv_c_dt(&self, k: &Constants) -> f64 {
        1.0 / (k.c * self.dt)
    }
}

/// Newton linearization of emission about `t0`.
///
/// Linearizing `σB(T)` about `T0` and eliminating `T` through the material
/// energy equation gives the pseudo-scattering opacity
/// `σ_s = 4πΔtσB'/(ρc_v + 4πΔtσB') · σ` and the source `q = σB(T0)·ρc_v/den`.
pub fn linearize(
    t0: &[f64],
    material_ids: &[usize],
    materials: &[Material],
    dt: f64,
    k: &Constants,
) -> Result<LinearizedStep> {
    if !(dt > 0.0) {
        return Err(Error::Contract(format!("time step must be positive (got {dt})")));
    }
    if t0.len() != material_ids.len() {
        return Err(Error::Contract("temperature and material fields differ in length".into()));
    }
    let n = t0.len();
    let mut s = LinearizedStep {
        dt,
        sigma_a: Vec::with_capacity(n),
        sigma_t: Vec::with_capacity(n),
        sigma_s: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        t0: t0.to_vec(),
        b0: Vec::with_capacity(n),
        denom: Vec::with_capacity(n),
        rho_cv: Vec::with_capacity(n),
    };
    let inv_cdt = 1.0 / (k.c * dt);
    for (c, &t) in t0.iter().enumerate() {
        let m = materials.get(material_ids[c]).ok_or_else(|| {
            Error::Config(format!("material id {} out of range", material_ids[c]))
        })?;
        let (b, db) = planck(t, k)?;
        let rho_cv = m.rho * m.c_v;
        let coupling = FOUR_PI * dt * m.sigma_a * db;
        let den = rho_cv + coupling;
        s.sigma_a.push(m.sigma_a);
        s.sigma_t.push(m.sigma_a + inv_cdt);
        s.sigma_s.push(coupling / den * m.sigma_a);
        s.q.push(m.sigma_a * b * rho_cv / den);
        s.b0.push(b);
        s.denom.push(den);
        s.rho_cv.push(rho_cv);
    }
    Ok(s)
}

fn linear_temperature(step: &LinearizedStep, phi: &[f64], c: usize) -> f64 {
    step.t0[c] + step.dt * step.sigma_a[c] * (phi[c] - FOUR_PI * step.b0[c]) / step.denom[c]
}

/// `T = T0 + Δtσ(φ − 4πB(T0)) / (ρc_v + 4πΔtσB'(T0))`, floored at `t_min`.
pub fn update_temperature(step: &LinearizedStep, phi: &[f64], k: &Constants) -> Vec<f64> {
    assert_eq!(phi.len(), step.n());
    (0..step.n()).map(|c| linear_temperature(step, phi, c).max(k.t_min)).collect()
}

/// Material energy density `Σ_c ρc_v (T_c − T_lin,c)` the floor added on top
/// of the linear update; multiply by the cell area for energy.
pub fn floor_energy_density(step: &LinearizedStep, phi: &[f64], t: &[f64]) -> f64 {
    (0..step.n())
        .map(|c| step.rho_cv[c] * (t[c] - linear_temperature(step, phi, c)))
        .sum()
}
