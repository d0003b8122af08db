//! Multipath channel synthesis.
//!
//! Targets sit inside a vertical cylinder and outside a rectangular sensor
//! box, both centred at the origin. Each realization places a Poisson number
//! of scattering clusters in the cylinder; every sensor then sees a
//! line-of-sight path plus one path per cluster, each made of `K` rays with
//! exponential inter-arrival times, log-normal shadowing, exponential power
//! decay and Nakagami amplitudes.

use num_complex::Complex;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::SignalConfig;
use crate::rng::{self, Rng};
use crate::scalar::Real;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const NS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Location<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Location<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(p: [f64; 3]) -> Self {
        Self::new(T::lit(p[0]), T::lit(p[1]), T::lit(p[2]))
    }

    pub fn distance(&self, other: &Self) -> T {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Distance from the cylinder axis.
    pub fn radius(&self) -> T {
        self.x.hypot(self.y)
    }

    pub fn cast<U: Real>(&self) -> Location<U> {
        Location::new(U::lit(self.x.to_f64_lossy()), U::lit(self.y.to_f64_lossy()), U::lit(self.z.to_f64_lossy()))
    }
}

/// Sensor box and target cylinder, in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub d_x: f64,
    pub d_y: f64,
    pub d_z: f64,
    pub d_r: f64,
    pub d_h: f64,
    pub sensor_locations: Vec<[f64; 3]>,
}

impl Default for GeometryConfig {
    /// 6 x 3 x 2 m box inside a 10 m radius, 4 m high cylinder, with twelve
    /// sensors on the box: the eight corners and the four edge midpoints of
    /// the top face.
    fn default() -> Self {
        Self::vehicle(6.0, 3.0, 2.0, 10.0, 4.0)
    }
}

impl GeometryConfig {
    pub fn vehicle(d_x: f64, d_y: f64, d_z: f64, d_r: f64, d_h: f64) -> Self {
        let (hx, hy, hz) = (d_x / 2.0, d_y / 2.0, d_z / 2.0);
        let mut sensors = Vec::with_capacity(12);
        for &sz in &[-hz, hz] {
            for &sy in &[-hy, hy] {
                for &sx in &[-hx, hx] {
                    sensors.push([sx, sy, sz]);
                }
            }
        }
        sensors.extend_from_slice(&[[hx, 0.0, hz], [-hx, 0.0, hz], [0.0, hy, hz], [0.0, -hy, hz]]);
        Self { d_x, d_y, d_z, d_r, d_h, sensor_locations: sensors }
    }

    pub fn num_sensors(&self) -> usize {
        self.sensor_locations.len()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.d_x, self.d_y, self.d_z, self.d_r, self.d_h];
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Config("geometry lengths must be positive and finite".into()));
        }
        if self.d_h <= self.d_z {
            return Err(Error::Config(format!("d_h ({}) must exceed d_z ({})", self.d_h, self.d_z)));
        }
        let half_diag2 = (self.d_x / 2.0).powi(2) + (self.d_y / 2.0).powi(2);
        if self.d_r * self.d_r <= half_diag2 {
            return Err(Error::Config("sensor box must fit strictly inside the target cylinder".into()));
        }
        if self.sensor_locations.is_empty() {
            return Err(Error::Config("at least one sensor is required".into()));
        }
        for (m, s) in self.sensor_locations.iter().enumerate() {
            if !self.in_box(s[0], s[1], s[2], 1e-12) {
                return Err(Error::Config(format!("sensor {m} at {s:?} lies outside the sensor box")));
            }
        }
        Ok(())
    }

    fn in_box(&self, x: f64, y: f64, z: f64, slack: f64) -> bool {
        x.abs() <= self.d_x / 2.0 + slack && y.abs() <= self.d_y / 2.0 + slack && z.abs() <= self.d_z / 2.0 + slack
    }

    /// True when `p` is a valid target: inside the cylinder, outside the box.
    pub fn is_target_location<T: Real>(&self, p: &Location<T>) -> bool {
        let (x, y, z) = (p.x.to_f64_lossy(), p.y.to_f64_lossy(), p.z.to_f64_lossy());
        x * x + y * y <= self.d_r * self.d_r && z.abs() <= self.d_h / 2.0 && !self.in_box(x, y, z, 0.0)
    }

    pub fn sensors<T: Real>(&self) -> Vec<Location<T>> {
        self.sensor_locations.iter().map(|&s| Location::from_array(s)).collect()
    }
}

/// Propagation environment. Decay constants and the ray parameter are in
/// nanoseconds, variances of shadowing in dB², reference power in dBm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mean_clusters: f64,
    pub shadow_var: f64,
    pub cluster_shadow_var: f64,
    pub nakagami_mean: f64,
    pub nakagami_var: f64,
    /// Mean ray inter-arrival time (ns).
    pub ray_rate_param: f64,
    pub cluster_decay: f64,
    pub ray_decay: f64,
    pub pathloss_exp: f64,
    pub ref_power: f64,
    pub ref_dist: f64,
    pub rays_per_cluster: usize,
    pub los_enabled: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::residential()
    }
}

impl ScenarioConfig {
    pub fn residential() -> Self {
        Self {
            mean_clusters: 3.0,
            shadow_var: 3.0,
            cluster_shadow_var: 3.0,
            nakagami_mean: 0.67,
            nakagami_var: 0.28,
            ray_rate_param: 1.5,
            cluster_decay: 25.0,
            ray_decay: 5.0,
            pathloss_exp: 2.0,
            ref_power: -45.0,
            ref_dist: 1.0,
            rays_per_cluster: 6,
            los_enabled: true,
        }
    }

    pub fn outdoor() -> Self {
        Self { mean_clusters: 12.0, cluster_shadow_var: 1.0, ..Self::residential() }
    }

    pub fn with_los(mut self, los: bool) -> Self {
        self.los_enabled = los;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ray_rate_param", self.ray_rate_param),
            ("cluster_decay", self.cluster_decay),
            ("ray_decay", self.ray_decay),
            ("ref_dist", self.ref_dist),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.mean_clusters.is_finite() && self.mean_clusters >= 0.0) {
            return Err(Error::Config("mean_clusters must be non-negative".into()));
        }
        if self.shadow_var < 0.0 || self.cluster_shadow_var < 0.0 || self.nakagami_var < 0.0 {
            return Err(Error::Config("variances must be non-negative".into()));
        }
        if self.rays_per_cluster == 0 {
            return Err(Error::Config("rays_per_cluster must be at least 1".into()));
        }
        Ok(())
    }

    /// Reference power in watts.
    pub fn ref_power_watts(&self) -> f64 {
        dbm_to_watts(self.ref_power)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// One ray of one path as seen by one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    /// Path index `l`; 0 is line of sight.
    pub path: usize,
    /// Ray index `k` within the path.
    pub ray: usize,
    /// Path excess delay relative to line of sight (s).
    pub path_delay: T,
    /// Ray delay relative to the first ray of its path (s).
    pub ray_delay: T,
    /// Total time of arrival (s).
    pub delay: T,
    /// Mean-square amplitude (W).
    pub mean_power: T,
    pub amplitude: T,
    pub phase: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorChannel<T> {
    pub distance: T,
    pub los_pathloss: T,
    pub rays: Vec<Ray<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    pub clusters: Vec<Location<T>>,
    pub sensors: Vec<SensorChannel<T>>,
}

impl<T: Real> ChannelRealization<T> {
    pub fn max_delay(&self) -> T {
        self.sensors.iter().flat_map(|s| s.rays.iter().map(|r| r.delay)).fold(T::zero(), T::max)
    }
}

/// Uniform point in the cylinder minus the box, by rejection.
pub fn sample_target_with<T: Real>(rng: &mut Rng, geometry: &GeometryConfig) -> Location<T> {
    loop {
        let p = uniform_in_cylinder(rng, geometry);
        if !geometry.in_box(p[0], p[1], p[2], 0.0) {
            return Location::from_array(p);
        }
    }
}

pub fn sample_target<T: Real>(seed: u64, geometry: &GeometryConfig) -> Location<T> {
    sample_target_with(&mut rng::rng_from_seed(seed), geometry)
}

fn uniform_in_cylinder(rng: &mut Rng, g: &GeometryConfig) -> [f64; 3] {
    let r = g.d_r * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    let z = g.d_h * (rng.random::<f64>() - 0.5);
    [r * theta.cos(), r * theta.sin(), z]
}

/// Poisson number of clusters, each uniform in the target cylinder.
pub fn place_clusters_with<T: Real>(
    rng: &mut Rng,
    scenario: &ScenarioConfig,
    geometry: &GeometryConfig,
) -> Vec<Location<T>> {
    let count = if scenario.mean_clusters > 0.0 {
        let dist = Poisson::new(scenario.mean_clusters).expect("validated Poisson mean");
        dist.sample(rng) as usize
    } else {
        0
    };
    (0..count).map(|_| Location::from_array(uniform_in_cylinder(rng, geometry))).collect()
}

pub fn place_clusters<T: Real>(seed: u64, scenario: &ScenarioConfig, geometry: &GeometryConfig) -> Vec<Location<T>> {
    place_clusters_with(&mut rng::rng_from_seed(seed), scenario, geometry)
}

/// Excess delay (s) of the path bouncing off `cluster` relative to the
/// direct path; `None` is the line-of-sight path itself.
pub fn path_delay<T: Real>(target: &Location<T>, sensor: &Location<T>, cluster: Option<&Location<T>>) -> T {
    match cluster {
        None => T::zero(),
        Some(c) => {
            let excess = c.distance(target) + sensor.distance(c) - sensor.distance(target);
            // Rounding can push the degenerate colinear case a hair below zero.
            excess.max(T::zero()) / T::lit(SPEED_OF_LIGHT)
        }
    }
}

/// Line-of-sight mean power with an explicit linear shadowing factor.
pub fn los_pathloss<T: Real>(distance: T, shadowing: T, scenario: &ScenarioConfig) -> Result<T> {
    if !(distance > T::zero()) {
        return Err(Error::Domain(format!("path loss is singular at distance {distance}")));
    }
    let ratio = distance / T::lit(scenario.ref_dist);
    Ok(shadowing * T::lit(scenario.ref_power_watts()) * ratio.powf(-T::lit(scenario.pathloss_exp)))
}

/// Line-of-sight mean power with shadowing drawn from `rng`.
pub fn los_pathloss_sampled<T: Real>(rng: &mut Rng, distance: T, scenario: &ScenarioConfig) -> Result<T> {
    let s = draw_shadowing::<T>(rng, scenario.shadow_var);
    los_pathloss(distance, s, scenario)
}

/// Log-normal shadowing: the dB value is zero-mean Gaussian with the given
/// variance (dB²); returns the linear factor.
pub fn draw_shadowing<T: Real>(rng: &mut Rng, var_db: f64) -> T {
    T::lit(10f64.powf(draw_shadowing_db(rng, var_db) / 10.0))
}

pub fn draw_shadowing_db(rng: &mut Rng, var_db: f64) -> f64 {
    if var_db == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, var_db.sqrt()).expect("non-negative variance").sample(rng)
}

/// Mean power of a ray of a cluster path.
pub fn nlos_pathloss<T: Real>(
    los_power: T,
    path_delay: T,
    ray_delay: T,
    cluster_shadowing: T,
    scenario: &ScenarioConfig,
) -> T {
    let ns = T::lit(NS);
    let cluster = (-(path_delay / ns) / T::lit(scenario.cluster_decay)).exp();
    let ray = (-(ray_delay / ns) / T::lit(scenario.ray_decay)).exp();
    cluster_shadowing * los_power * cluster * ray
}

/// Nakagami-distributed amplitude with shape `m` and mean square `omega`.
pub fn draw_nakagami(rng: &mut Rng, m: f64, omega: f64) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    let g = Gamma::new(m, omega / m).expect("positive Nakagami parameters");
    g.sample(rng).sqrt()
}

/// Nakagami shape: `ln m` is Gaussian with the scenario mean and variance,
/// clipped below at 1/2.
pub fn draw_nakagami_shape(rng: &mut Rng, scenario: &ScenarioConfig) -> f64 {
    let ln_m = if scenario.nakagami_var > 0.0 {
        Normal::new(scenario.nakagami_mean, scenario.nakagami_var.sqrt()).expect("valid").sample(rng)
    } else {
        scenario.nakagami_mean
    };
    ln_m.exp().max(0.5)
}

/// Ray offsets within one path: 0 followed by cumulative exponential gaps.
pub fn draw_ray_offsets(rng: &mut Rng, count: usize, mean_gap_ns: f64) -> Vec<f64> {
    let exp = Exp::new(1.0 / mean_gap_ns).expect("positive ray parameter");
    let mut out = Vec::with_capacity(count);
    let mut t = 0.0;
    for k in 0..count {
        if k > 0 {
            // Exp can return exactly 0 only with vanishing probability; keep
            // offsets strictly increasing regardless.
            let gap: f64 = exp.sample(rng);
            t += gap.max(f64::MIN_POSITIVE);
        }
        out.push(t * NS);
    }
    out
}

/// Draws a complete realization for one target.
///
/// The line-of-sight path carries `rays_per_cluster` rays as well; its later
/// rays decay with the ray constant only. With `los_enabled = false` the
/// same random draws are made and the line-of-sight amplitudes are zeroed,
/// so matched seeds give identical cluster paths in both modes.
pub fn draw_channel<T: Real>(
    seed: u64,
    target: &Location<T>,
    geometry: &GeometryConfig,
    scenario: &ScenarioConfig,
) -> Result<ChannelRealization<T>> {
    geometry.validate()?;
    scenario.validate()?;
    let mut rng = rng::rng_from_seed(seed);
    let clusters: Vec<Location<T>> = place_clusters_with(&mut rng, scenario, geometry);
    let cluster_shadow: Vec<T> =
        clusters.iter().map(|_| draw_shadowing::<T>(&mut rng, scenario.cluster_shadow_var)).collect();
    let c = T::lit(SPEED_OF_LIGHT);

    let mut sensors = Vec::with_capacity(geometry.num_sensors());
    for sensor in geometry.sensors::<T>() {
        let distance = sensor.distance(target);
        let los_power = los_pathloss_sampled(&mut rng, distance, scenario)?;
        let toa = distance / c;
        let mut rays = Vec::with_capacity((clusters.len() + 1) * scenario.rays_per_cluster);
        for l in 0..=clusters.len() {
            let cluster = if l == 0 { None } else { Some(&clusters[l - 1]) };
            let t_path = path_delay(target, &sensor, cluster);
            let offsets = draw_ray_offsets(&mut rng, scenario.rays_per_cluster, scenario.ray_rate_param);
            for (k, &tau) in offsets.iter().enumerate() {
                let tau = T::lit(tau);
                let mean_power = if l == 0 {
                    nlos_pathloss(los_power, T::zero(), tau, T::one(), scenario)
                } else {
                    nlos_pathloss(los_power, t_path, tau, cluster_shadow[l - 1], scenario)
                };
                let shape = draw_nakagami_shape(&mut rng, scenario);
                let amp = draw_nakagami(&mut rng, shape, mean_power.to_f64_lossy());
                let phase = std::f64::consts::TAU * rng.random::<f64>();
                let amplitude = if l == 0 && !scenario.los_enabled { T::zero() } else { T::lit(amp) };
                rays.push(Ray {
                    path: l,
                    ray: k,
                    path_delay: t_path,
                    ray_delay: tau,
                    delay: toa + t_path + tau,
                    mean_power,
                    amplitude,
                    phase: T::lit(phase),
                });
            }
        }
        sensors.push(SensorChannel { distance, los_pathloss: los_power, rays });
    }
    Ok(ChannelRealization { clusters, sensors })
}

pub type Waveform<T> = Vec<Complex<T>>;

/// Received baseband waveform of one sensor using an arbitrary discrete
/// pulse. Each ray is placed at its nearest sample.
pub fn synthesize_with_pulse<T: Real>(
    rays: &[Ray<T>],
    pulse: &[Complex<T>],
    signal: &SignalConfig,
    noise_var: T,
    rng: &mut Rng,
) -> Result<Waveform<T>> {
    let n = signal.frame_samples()?;
    let fs = T::lit(signal.sample_rate());
    let frame = signal.frame;
    let mut out = vec![Complex::new(T::zero(), T::zero()); n];
    for r in rays {
        let d = r.delay.to_f64_lossy();
        let idx = (r.delay * fs).round().to_usize().unwrap_or(usize::MAX);
        if d >= frame || idx >= n {
            return Err(Error::FrameTooShort { delay_s: d, frame_s: frame });
        }
        if r.amplitude == T::zero() {
            continue;
        }
        let gain = Complex::from_polar(r.amplitude, r.phase);
        for (j, &p) in pulse.iter().enumerate() {
            if let Some(slot) = out.get_mut(idx + j) {
                *slot += gain * p;
            }
        }
    }
    if noise_var > T::zero() {
        let sd = (noise_var.to_f64_lossy() / 2.0).sqrt();
        let normal = Normal::new(0.0, sd).expect("finite noise variance");
        for s in out.iter_mut() {
            let re: f64 = normal.sample(rng);
            let im: f64 = normal.sample(rng);
            *s += Complex::new(T::lit(re), T::lit(im));
        }
    }
    Ok(out)
}

/// Received waveforms of all sensors with the unit single-sample pulse.
pub fn synthesize_received<T: Real>(
    realization: &ChannelRealization<T>,
    signal: &SignalConfig,
    noise_var: T,
    seed: u64,
) -> Result<Vec<Waveform<T>>> {
    signal.validate()?;
    let max = realization.max_delay().to_f64_lossy();
    if max >= signal.frame {
        return Err(Error::FrameTooShort { delay_s: max, frame_s: signal.frame });
    }
    let pulse = [Complex::new(T::one(), T::zero())];
    realization
        .sensors
        .iter()
        .enumerate()
        .map(|(m, s)| {
            let mut rng = rng::rng_from_seed(rng::derive_seed(seed, &[m as u64]));
            synthesize_with_pulse(&s.rays, &pulse, signal, noise_var, &mut rng)
        })
        .collect()
}
