//! Point-dipole magnetostatics.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::DynamicsError;

/// Vacuum permeability, 4π·10⁻⁷ T·m/A.
pub const MU0: f64 = 4.0 * PI * 1e-7;

/// Separations below this are treated as singular.
pub const MIN_SEPARATION: f64 = 1e-6;

/// Step used by the finite-difference force.
pub const FORCE_FD_STEP: f64 = 1e-6;

fn check_separation(offset: &Vector3<f64>) -> Result<f64, DynamicsError> {
    let r = offset.norm();
    if !(r > MIN_SEPARATION) {
        return Err(DynamicsError::Singularity(r));
    }
    Ok(r)
}

/// Field of a point dipole `moment` (A·m²) at `offset` from it, in tesla:
/// B = μ0/4π · (3(m·r̂)r̂ − m) / r³.
pub fn dipole_field(moment: &Vector3<f64>, offset: &Vector3<f64>) -> Result<Vector3<f64>, DynamicsError> {
    let r = check_separation(offset)?;
    let rhat = offset / r;
    Ok((rhat * (3.0 * moment.dot(&rhat)) - moment) * (MU0 / (4.0 * PI) / (r * r * r)))
}

/// Force on dipole `target` located at `offset` from dipole `source`,
/// F = ∇(m_t · B_s), closed form.
pub fn dipole_force(
    source: &Vector3<f64>,
    target: &Vector3<f64>,
    offset: &Vector3<f64>,
) -> Result<Vector3<f64>, DynamicsError> {
    let r = check_separation(offset)?;
    let rhat = offset / r;
    let ms = source.dot(&rhat);
    let mt = target.dot(&rhat);
    let k = 3.0 * MU0 / (4.0 * PI * r.powi(4));
    Ok((target * ms + source * mt + rhat * (source.dot(target)) - rhat * (5.0 * ms * mt)) * k)
}

/// Same force by central differences of the potential energy −m_t·B_s.
pub fn dipole_force_fd(
    source: &Vector3<f64>,
    target: &Vector3<f64>,
    offset: &Vector3<f64>,
    h: f64,
) -> Result<Vector3<f64>, DynamicsError> {
    check_separation(offset)?;
    let mut f = Vector3::zeros();
    for i in 0..3 {
        let mut e = Vector3::zeros();
        e[i] = h;
        let plus = target.dot(&dipole_field(source, &(offset + e))?);
        let minus = target.dot(&dipole_field(source, &(offset - e))?);
        f[i] = (plus - minus) / (2.0 * h);
    }
    Ok(f)
}

/// Torque on dipole `moment` in field `b`.
pub fn dipole_torque(moment: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    moment.cross(b)
}
