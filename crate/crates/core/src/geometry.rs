//! Constellation geometry: Walker Delta snapshots, serving-group selection,
//! UE/target placement, target angles and the angle-to-position Jacobian.
//!
//! All positions are ECEF kilometers at a single frozen epoch. The epoch is
//! arbitrary since every derived quantity depends only on relative geometry.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, Vector3};
use rand::Rng;
use std::f64::consts::PI;

/// Mean Earth radius used throughout (km).
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Walker Delta constellation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationConfig {
    /// Orbital altitude above the Earth surface (km).
    pub orbital_altitude_km: f64,
    /// Number of orbital planes.
    pub num_planes: u32,
    /// Satellites per orbital plane.
    pub sats_per_plane: u32,
    /// Orbital inclination (degrees).
    pub inclination_deg: f64,
    /// Walker phase factor, `0 <= F < P`.
    pub phase_factor: u32,
    /// Earth radius (km).
    pub earth_radius_km: f64,
}

impl ConstellationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_planes < 1 {
            return Err(Error::Config("num_planes must be >= 1".into()));
        }
        if self.sats_per_plane < 1 {
            return Err(Error::Config("sats_per_plane must be >= 1".into()));
        }
        if self.phase_factor >= self.num_planes {
            return Err(Error::Config(format!(
                "phase_factor must satisfy 0 <= F < num_planes (got F={}, P={})",
                self.phase_factor, self.num_planes
            )));
        }
        if self.orbital_altitude_km <= 0.0 {
            return Err(Error::Config("orbital_altitude_km must be positive".into()));
        }
        if self.earth_radius_km <= 0.0 {
            return Err(Error::Config("earth_radius_km must be positive".into()));
        }
        Ok(())
    }

    /// Orbit radius from the Earth center (km).
    pub fn orbit_radius_km(&self) -> f64 {
        self.earth_radius_km + self.orbital_altitude_km
    }
}

/// One satellite of the constellation snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteState {
    pub plane: u32,
    pub slot: u32,
    pub position_ecef_km: Vector3<f64>,
    pub max_power_dbm: f64,
}

/// Collaboration pattern of the serving group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollaborationType {
    /// Central satellite plus nearest in-plane neighbors.
    TypeI,
    /// Type I plus the nearest satellite on each adjacent plane.
    TypeII,
    /// Type II plus the next-nearest satellite on each adjacent plane.
    TypeIII,
}

impl CollaborationType {
    fn per_adjacent_plane(self) -> usize {
        match self {
            CollaborationType::TypeI => 0,
            CollaborationType::TypeII => 1,
            CollaborationType::TypeIII => 2,
        }
    }
}

impl std::str::FromStr for CollaborationType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" | "TYPE_I" => Ok(CollaborationType::TypeI),
            "II" | "2" | "TYPE_II" => Ok(CollaborationType::TypeII),
            "III" | "3" | "TYPE_III" => Ok(CollaborationType::TypeIII),
            other => Err(Error::Config(format!("unknown collaboration type '{other}'"))),
        }
    }
}

impl std::fmt::Display for CollaborationType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CollaborationType::TypeI => write!(f, "I"),
            CollaborationType::TypeII => write!(f, "II"),
            CollaborationType::TypeIII => write!(f, "III"),
        }
    }
}

/// Central satellite and its auxiliaries, in the order they stack into the
/// aggregated observation (central first).
#[derive(Debug, Clone)]
pub struct ServingGroup {
    pub central_sat: SatelliteState,
    pub auxiliary_sats: Vec<SatelliteState>,
    pub collaboration_type: CollaborationType,
}

impl ServingGroup {
    /// Total group size K.
    pub fn len(&self) -> usize {
        1 + self.auxiliary_sats.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Members in stacking order (central, then auxiliaries).
    pub fn members(&self) -> impl Iterator<Item = &SatelliteState> {
        std::iter::once(&self.central_sat).chain(self.auxiliary_sats.iter())
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.members().map(|s| s.position_ecef_km).collect()
    }
}

/// Sensed target: position and real reflection coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub position_ecef_km: Vector3<f64>,
    pub reflection_coeff: f64,
}

impl TargetState {
    pub fn validate(&self) -> Result<()> {
        if self.reflection_coeff <= 0.0 {
            return Err(Error::Config("reflection_coeff must be positive".into()));
        }
        Ok(())
    }
}

/// Per-satellite elevation/azimuth of the target, radians.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    /// Elevation angles in `[0, pi]`, one per satellite.
    pub elevations: Vec<f64>,
    /// Azimuth angles in `(-pi, pi]`, one per satellite.
    pub azimuths: Vec<f64>,
}

impl AngleSet {
    pub fn for_scene(sat_positions: &[Vector3<f64>], target: &Vector3<f64>) -> Result<Self> {
        let mut elevations = Vec::with_capacity(sat_positions.len());
        let mut azimuths = Vec::with_capacity(sat_positions.len());
        for q in sat_positions {
            let (theta, phi) = target_angles(q, target)?;
            elevations.push(theta);
            azimuths.push(phi);
        }
        Ok(AngleSet { elevations, azimuths })
    }
}

/// Build a Walker Delta snapshot: plane `p` has RAAN `2*pi*p/P`, slot `n`
/// sits at argument of latitude `2*pi*n/N + 2*pi*F*p/(P*N)`.
pub fn build_walker_delta(cfg: &ConstellationConfig) -> Result<Vec<SatelliteState>> {
    cfg.validate()?;
    let r = cfg.orbit_radius_km();
    let inc = cfg.inclination_deg.to_radians();
    let (cos_i, sin_i) = (inc.cos(), inc.sin());
    let p_total = cfg.num_planes as f64;
    let n_total = cfg.sats_per_plane as f64;
    let f_factor = cfg.phase_factor as f64;

    let mut sats = Vec::with_capacity((cfg.num_planes * cfg.sats_per_plane) as usize);
    for plane in 0..cfg.num_planes {
        let raan = 2.0 * PI * plane as f64 / p_total;
        let (cos_o, sin_o) = (raan.cos(), raan.sin());
        for slot in 0..cfg.sats_per_plane {
            let u = 2.0 * PI * slot as f64 / n_total
                + 2.0 * PI * f_factor * plane as f64 / (p_total * n_total);
            let (cos_u, sin_u) = (u.cos(), u.sin());
            let position_ecef_km = Vector3::new(
                r * (cos_o * cos_u - sin_o * sin_u * cos_i),
                r * (sin_o * cos_u + cos_o * sin_u * cos_i),
                r * (sin_u * sin_i),
            );
            sats.push(SatelliteState {
                plane,
                slot,
                position_ecef_km,
                max_power_dbm: 30.0,
            });
        }
    }
    Ok(sats)
}

/// Locate a satellite by (plane, slot) in a constellation snapshot.
pub fn find_satellite(sats: &[SatelliteState], plane: u32, slot: u32) -> Result<usize> {
    sats.iter()
        .position(|s| s.plane == plane && s.slot == slot)
        .ok_or_else(|| Error::Config(format!("no satellite at plane {plane} slot {slot}")))
}

/// Nearest-by-distance candidates from `pool` relative to `origin`,
/// tie-broken by (plane, slot).
fn take_nearest(
    pool: &[&SatelliteState],
    origin: &Vector3<f64>,
    count: usize,
) -> Vec<SatelliteState> {
    let mut ranked: Vec<&SatelliteState> = pool.to_vec();
    ranked.sort_by(|a, b| {
        let da = (a.position_ecef_km - origin).norm();
        let db = (b.position_ecef_km - origin).norm();
        da.total_cmp(&db)
            .then(a.plane.cmp(&b.plane))
            .then(a.slot.cmp(&b.slot))
    });
    ranked.into_iter().take(count).cloned().collect()
}

/// Select the serving group around a central satellite.
///
/// Type I takes the nearest same-plane neighbors; type II adds the nearest
/// satellite on each adjacent plane; type III adds the two nearest on each
/// adjacent plane. The remaining budget `k_total - 1 - (adjacent picks)` is
/// always filled from the same plane.
pub fn select_serving_group(
    sats: &[SatelliteState],
    central: usize,
    collaboration_type: CollaborationType,
    k_total: usize,
) -> Result<ServingGroup> {
    if k_total < 1 {
        return Err(Error::Group("k_total must be >= 1".into()));
    }
    let central_sat = sats
        .get(central)
        .ok_or_else(|| Error::Group(format!("central index {central} out of range")))?
        .clone();
    let origin = central_sat.position_ecef_km;
    let num_planes = sats.iter().map(|s| s.plane).max().unwrap_or(0) + 1;

    // Distinct adjacent planes (a two-plane constellation has only one).
    let mut adjacent_planes: Vec<u32> = Vec::new();
    if num_planes > 1 {
        let prev = (central_sat.plane + num_planes - 1) % num_planes;
        let next = (central_sat.plane + 1) % num_planes;
        adjacent_planes.push(prev);
        if next != prev {
            adjacent_planes.push(next);
        }
        adjacent_planes.sort_unstable();
    }

    let per_adjacent = collaboration_type.per_adjacent_plane();
    let adjacent_total = per_adjacent * adjacent_planes.len();
    let needed_aux = k_total - 1;
    if adjacent_total > needed_aux {
        return Err(Error::Group(format!(
            "k_total={k_total} too small for collaboration type {collaboration_type}: \
             needs at least {} auxiliaries on adjacent planes",
            adjacent_total
        )));
    }
    if per_adjacent > 0 && adjacent_planes.is_empty() {
        return Err(Error::Group(
            "collaboration types II/III require at least two orbital planes".into(),
        ));
    }
    let in_plane_quota = needed_aux - adjacent_total;

    let in_plane_pool: Vec<&SatelliteState> = sats
        .iter()
        .filter(|s| s.plane == central_sat.plane && s.slot != central_sat.slot)
        .collect();
    if in_plane_pool.len() < in_plane_quota {
        return Err(Error::Group(format!(
            "insufficient in-plane neighbors: need {in_plane_quota}, have {}",
            in_plane_pool.len()
        )));
    }

    let mut auxiliary_sats = take_nearest(&in_plane_pool, &origin, in_plane_quota);
    for plane in &adjacent_planes {
        let pool: Vec<&SatelliteState> = sats.iter().filter(|s| s.plane == *plane).collect();
        if pool.len() < per_adjacent {
            return Err(Error::Group(format!(
                "insufficient satellites on adjacent plane {plane}: need {per_adjacent}"
            )));
        }
        auxiliary_sats.extend(take_nearest(&pool, &origin, per_adjacent));
    }

    Ok(ServingGroup {
        central_sat,
        auxiliary_sats,
        collaboration_type,
    })
}

/// Elevation and azimuth of `p` as seen in the frame of a satellite at `q`.
///
/// The elevation measures from the +z axis and folds the lower half-space
/// through the `+pi` correction; the azimuth carries the usual quadrant
/// corrections. Equivalent closed form: `theta = atan2(rho, dz)`,
/// `phi = atan2(dy, dx)` with `rho = sqrt(dx^2 + dy^2)`.
pub fn target_angles(q: &Vector3<f64>, p: &Vector3<f64>) -> Result<(f64, f64)> {
    let d = p - q;
    if d.norm() == 0.0 {
        return Err(Error::DegenerateGeometry(
            "target position coincides with satellite".into(),
        ));
    }
    let rho = (d.x * d.x + d.y * d.y).sqrt();
    let theta = rho.atan2(d.z);
    let mut phi = d.y.atan2(d.x);
    if phi <= -PI {
        phi = PI;
    }
    Ok((theta, phi))
}

/// Jacobian of the stacked angle vector `[theta_1..theta_K; phi_1..phi_K]`
/// with respect to the target position, a `2K x 3` real matrix.
pub fn angle_jacobian(sat_positions: &[Vector3<f64>], p: &Vector3<f64>) -> Result<DMatrix<f64>> {
    let k = sat_positions.len();
    let mut jac = DMatrix::zeros(2 * k, 3);
    for (idx, q) in sat_positions.iter().enumerate() {
        let d = p - q;
        let rho2 = d.x * d.x + d.y * d.y;
        let rho = rho2.sqrt();
        let d2 = rho2 + d.z * d.z;
        if rho == 0.0 {
            return Err(Error::SingularJacobian(format!(
                "target directly on the vertical axis of satellite {idx}"
            )));
        }
        // d(theta)/dp
        jac[(idx, 0)] = d.x * d.z / (d2 * rho);
        jac[(idx, 1)] = d.y * d.z / (d2 * rho);
        jac[(idx, 2)] = -rho / d2;
        // d(phi)/dp; the z-derivative is identically zero.
        jac[(k + idx, 0)] = -d.y / rho2;
        jac[(k + idx, 1)] = d.x / rho2;
        jac[(k + idx, 2)] = 0.0;
    }
    Ok(jac)
}

/// Sub-satellite point: the orbit position projected onto the Earth sphere.
pub fn sub_satellite_point(sat_position: &Vector3<f64>, earth_radius_km: f64) -> Vector3<f64> {
    sat_position.normalize() * earth_radius_km
}

/// Orthonormal tangent basis (east-ish, north-ish) at a surface point.
fn tangent_basis(unit: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if unit.z.abs() < 0.9 {
        Vector3::new(0.0, 0.0, 1.0)
    } else {
        Vector3::new(1.0, 0.0, 0.0)
    };
    let e1 = helper.cross(unit).normalize();
    let e2 = unit.cross(&e1);
    (e1, e2)
}

/// Displace a surface point by (east, north) kilometers along the sphere.
pub fn offset_on_sphere(
    surface_point: &Vector3<f64>,
    east_km: f64,
    north_km: f64,
    earth_radius_km: f64,
) -> Vector3<f64> {
    let unit = surface_point.normalize();
    let (e1, e2) = tangent_basis(&unit);
    let disp = e1 * east_km + e2 * north_km;
    let arc = disp.norm() / earth_radius_km;
    if arc == 0.0 {
        return *surface_point;
    }
    let dir = disp.normalize();
    (unit * arc.cos() + dir * arc.sin()) * earth_radius_km
}

/// Draw `m` UE positions uniformly over the spherical cap of the given
/// radius (arc length, km) centered at the sub-satellite point of `central`.
pub fn place_ues<R: Rng>(
    central: &SatelliteState,
    m: usize,
    footprint_radius_km: f64,
    earth_radius_km: f64,
    rng: &mut R,
) -> Result<Vec<Vector3<f64>>> {
    if m < 1 {
        return Err(Error::Config("UE count must be >= 1".into()));
    }
    if footprint_radius_km < 0.0 {
        return Err(Error::Config("footprint radius must be non-negative".into()));
    }
    let psi_max = footprint_radius_km / earth_radius_km;
    if psi_max > PI / 2.0 {
        return Err(Error::Config(
            "UE footprint larger than a hemisphere".into(),
        ));
    }
    let axis = central.position_ecef_km.normalize();
    let (e1, e2) = tangent_basis(&axis);
    let cos_min = psi_max.cos();
    let mut positions = Vec::with_capacity(m);
    for _ in 0..m {
        // Area-uniform on the cap: cos(psi) uniform on [cos(psi_max), 1].
        let cos_psi = if psi_max == 0.0 {
            1.0
        } else {
            cos_min + (1.0 - cos_min) * rng.random::<f64>()
        };
        let sin_psi = (1.0 - cos_psi * cos_psi).max(0.0).sqrt();
        let chi = 2.0 * PI * rng.random::<f64>();
        let dir = axis * cos_psi + (e1 * chi.cos() + e2 * chi.sin()) * sin_psi;
        positions.push(dir * earth_radius_km);
    }
    Ok(positions)
}
