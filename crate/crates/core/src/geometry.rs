//! Scenario geometry: circular Walker shells, user placement on a spherical
//! Earth, look angles and the per-link channel parameters derived from them.
//!
//! Frames: positions and velocities are Earth-centred Earth-fixed (ECEF). The
//! inertial frame coincides with ECEF at `t = 0` and rotates at
//! [`EARTH_ROTATION_RATE`] thereafter.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Mean Earth radius, m.
pub const EARTH_RADIUS: f64 = 6_371_000.0;
/// Earth gravitational parameter, m³/s².
pub const EARTH_GM: f64 = 398_600.441_8e9;
/// Earth rotation rate, rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_9e-5;

pub type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLocation {
    pub id: u32,
    /// Geocentric latitude, rad.
    pub latitude: f64,
    /// Longitude in `[-π, π)`, rad.
    pub longitude: f64,
    /// Height above the spherical Earth, m.
    pub altitude: f64,
}

impl UserLocation {
    pub fn ecef(&self) -> Vec3 {
        let r = EARTH_RADIUS + self.altitude;
        let (sl, cl) = self.latitude.sin_cos();
        let (so, co) = self.longitude.sin_cos();
        [r * cl * co, r * cl * so, r * sl]
    }
}

/// Quasi-uniform points on the sphere from a golden-ratio spiral.
pub fn fibonacci_lattice(n: usize) -> Result<Vec<UserLocation>> {
    if n == 0 {
        return Err(Error::InvalidArgument("lattice needs at least one point".into()));
    }
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    Ok((0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            UserLocation {
                id: i as u32,
                latitude: z.asin(),
                longitude: wrap_angle(TAU * i as f64 / golden),
                altitude: 0.0,
            }
        })
        .collect())
}

/// Wraps an angle into `[-π, π)`.
fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// A circular Walker-delta shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellConfig {
    /// Orbit altitude above the spherical Earth, m.
    pub altitude: f64,
    /// Inclination, rad.
    pub inclination: f64,
    pub plane_count: u32,
    pub sats_per_plane: u32,
    /// Walker phasing factor F: adjacent planes are offset by `2πF/T` in
    /// argument of latitude, with T the total satellite count.
    pub phasing: u32,
}

impl Default for ShellConfig {
    fn default() -> Self {
        Self {
            altitude: 554_000.0,
            inclination: 53f64.to_radians(),
            plane_count: 72,
            sats_per_plane: 22,
            phasing: 1,
        }
    }
}

impl ShellConfig {
    pub fn validate(&self) -> Result<()> {
        if self.plane_count == 0 || self.sats_per_plane == 0 {
            return Err(Error::Config("shell needs at least one plane and one satellite".into()));
        }
        if !(0.0..=PI).contains(&self.inclination) {
            return Err(Error::Config(format!(
                "inclination {} rad outside [0, π]",
                self.inclination
            )));
        }
        if !(self.altitude > 0.0) {
            return Err(Error::Config("shell altitude must be positive".into()));
        }
        Ok(())
    }

    pub fn satellite_count(&self) -> u32 {
        self.plane_count * self.sats_per_plane
    }

    pub fn orbit_radius(&self) -> f64 {
        EARTH_RADIUS + self.altitude
    }

    /// Circular orbital speed in the inertial frame, m/s.
    pub fn orbital_speed(&self) -> f64 {
        (EARTH_GM / self.orbit_radius()).sqrt()
    }

    fn mean_motion(&self) -> f64 {
        (EARTH_GM / self.orbit_radius().powi(3)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteState {
    pub sat_id: u32,
    /// ECEF position, m.
    pub position: Vec3,
    /// ECEF velocity (includes the frame rotation term), m/s.
    pub velocity: Vec3,
    /// Epoch, s.
    pub epoch: f64,
}

impl SatelliteState {
    /// Velocity in the inertial frame expressed in ECEF axes.
    pub fn inertial_velocity(&self) -> Vec3 {
        let r = self.position;
        let w = EARTH_ROTATION_RATE;
        [
            self.velocity[0] - w * r[1],
            self.velocity[1] + w * r[0],
            self.velocity[2],
        ]
    }
}

/// Position and velocity of `sat_id` (plane-major numbering) at time `t`.
pub fn propagate(shell: &ShellConfig, sat_id: u32, t: f64) -> Result<SatelliteState> {
    if sat_id >= shell.satellite_count() {
        return Err(Error::InvalidArgument(format!(
            "satellite {sat_id} not in a {}-satellite shell",
            shell.satellite_count()
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative epoch {t}")));
    }
    let plane = sat_id / shell.sats_per_plane;
    let slot = sat_id % shell.sats_per_plane;
    let total = shell.satellite_count() as f64;
    let raan = TAU * plane as f64 / shell.plane_count as f64;
    let n = shell.mean_motion();
    let u =
        TAU * slot as f64 / shell.sats_per_plane as f64 + TAU * (shell.phasing as f64) * plane as f64 / total + n * t;
    let a = shell.orbit_radius();

    let (su, cu) = u.sin_cos();
    let (so, co) = raan.sin_cos();
    let (si, ci) = shell.inclination.sin_cos();
    // Orbital plane basis: node direction and in-plane normal to it.
    let p = [co, so, 0.0];
    let q = [-so * ci, co * ci, si];
    let r_eci = [
        a * (cu * p[0] + su * q[0]),
        a * (cu * p[1] + su * q[1]),
        a * (cu * p[2] + su * q[2]),
    ];
    let v = a * n;
    let v_eci = [
        v * (-su * p[0] + cu * q[0]),
        v * (-su * p[1] + cu * q[1]),
        v * (-su * p[2] + cu * q[2]),
    ];

    let (sg, cg) = (EARTH_ROTATION_RATE * t).sin_cos();
    let rot = |x: Vec3| [cg * x[0] + sg * x[1], -sg * x[0] + cg * x[1], x[2]];
    let position = rot(r_eci);
    let vr = rot(v_eci);
    let w = EARTH_ROTATION_RATE;
    let velocity = [vr[0] + w * position[1], vr[1] - w * position[0], vr[2]];
    Ok(SatelliteState {
        sat_id,
        position,
        velocity,
        epoch: t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookGeometry {
    /// Elevation above the local horizon, rad.
    pub elevation: f64,
    /// Slant range, m.
    pub range: f64,
    /// dρ/dt, m/s; negative while the satellite approaches.
    pub range_rate: f64,
    /// Earth central angle between user and satellite, rad.
    pub central_angle: f64,
    /// Unit line-of-sight vector from the user to the satellite.
    pub line_of_sight: Vec3,
}

/// Look angles of a satellite from a static user.
pub fn look_geometry(user: &UserLocation, sat: &SatelliteState) -> Result<LookGeometry> {
    look_geometry_ecef(user.ecef(), sat.position, sat.velocity)
}

pub(crate) fn look_geometry_ecef(user: Vec3, sat: Vec3, sat_velocity: Vec3) -> Result<LookGeometry> {
    let d = sub(sat, user);
    let range = norm(d);
    let user_r = norm(user);
    if range <= 0.0 || !range.is_finite() || user_r <= 0.0 {
        return Err(Error::InvalidGeometry("user and satellite coincide".into()));
    }
    let los = scale(d, 1.0 / range);
    let up = scale(user, 1.0 / user_r);
    let elevation = dot(los, up).clamp(-1.0, 1.0).asin();
    let central_angle = (dot(user, sat) / (user_r * norm(sat))).clamp(-1.0, 1.0).acos();
    Ok(LookGeometry {
        elevation,
        range,
        range_rate: dot(los, sat_velocity),
        central_angle,
        line_of_sight: los,
    })
}

/// Slant range to a satellite at altitude `altitude` seen at elevation `mask`,
/// i.e. the edge of the usable footprint.
pub fn max_slant_range(altitude: f64, mask: f64) -> Result<f64> {
    if !(0.0..=FRAC_PI_2).contains(&mask) {
        return Err(Error::InvalidArgument(format!(
            "elevation mask {mask} rad outside [0, π/2]"
        )));
    }
    if !(altitude > 0.0) {
        return Err(Error::InvalidArgument("altitude must be positive".into()));
    }
    if mask == FRAC_PI_2 {
        return Ok(altitude);
    }
    let a = EARTH_RADIUS + altitude;
    let psi = -mask - (EARTH_RADIUS * (FRAC_PI_2 + mask).sin() / a).asin();
    Ok(a * (FRAC_PI_2 + psi).sin() / (FRAC_PI_2 + mask).sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Free-space path gain (linear, < 1).
    pub gain: f64,
    /// Propagation delay, s.
    pub delay: f64,
    /// Doppler shift, Hz.
    pub doppler: f64,
    /// Carrier phase, rad in `[0, 2π)`.
    pub phase: f64,
    /// Slant range the other fields derive from, m.
    pub range: f64,
}

impl ChannelParams {
    /// Parameters for a link with the given range and range rate and a fixed
    /// phase.
    pub fn from_range(range: f64, range_rate: f64, carrier: f64, phase: f64) -> Self {
        let lambda = SPEED_OF_LIGHT / carrier;
        Self {
            gain: (lambda / (4.0 * PI * range)).powi(2),
            delay: range / SPEED_OF_LIGHT,
            doppler: -range_rate / lambda,
            phase,
            range,
        }
    }
}

/// Free-space channel for one link with a uniformly drawn carrier phase.
pub fn channel_params<R: Rng + ?Sized>(geom: &LookGeometry, carrier: f64, rng: &mut R) -> Result<ChannelParams> {
    if !(geom.range > 0.0) || !(carrier > 0.0) {
        return Err(Error::InvalidArgument("range and carrier must be positive".into()));
    }
    let phase = rng.random_range(0.0..TAU);
    Ok(ChannelParams::from_range(geom.range, geom.range_rate, carrier, phase))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibleSet {
    /// At most `S` satellites by descending elevation, ties by ascending id.
    pub satellites: Vec<(u32, LookGeometry)>,
    /// Fewer than the requested count cleared the mask.
    pub insufficient: bool,
}

/// Ranks `candidates` for a user and keeps the `count` highest above `mask`.
pub(crate) fn select_visible(mut visible: Vec<(u32, LookGeometry)>, mask: f64, count: usize) -> VisibleSet {
    visible.retain(|(_, g)| g.elevation >= mask);
    visible.sort_by(|a, b| b.1.elevation.total_cmp(&a.1.elevation).then(a.0.cmp(&b.0)));
    let insufficient = visible.len() < count;
    visible.truncate(count);
    VisibleSet {
        satellites: visible,
        insufficient,
    }
}

/// Satellites of `shell` above `mask` for `user` at time `t`.
pub fn visible_set(user: &UserLocation, shell: &ShellConfig, t: f64, mask: f64, count: usize) -> Result<VisibleSet> {
    if count == 0 {
        return Err(Error::InvalidArgument("visible set size must be at least 1".into()));
    }
    let ue = user.ecef();
    let mut all = Vec::new();
    for id in 0..shell.satellite_count() {
        let sat = propagate(shell, id, t)?;
        // Below-horizon satellites are cheap to reject before the full look geometry.
        if dot(sub(sat.position, ue), ue) < 0.0 && mask >= 0.0 {
            continue;
        }
        all.push((id, look_geometry_ecef(ue, sat.position, sat.velocity)?));
    }
    Ok(select_visible(all, mask, count))
}
