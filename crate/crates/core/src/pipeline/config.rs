//! Pipeline configuration, read from TOML.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::ekf::{MeasurementNoise, ProcessNoise};
use crate::registration::RegistrationConfig;
use crate::tdf::{Aabb, BinaryKernel, TdfError, TdfGrid, SUPPORTED_BITS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub size: [f64; 3],
    pub resolution: f64,
    /// Horizontal position of the start pose inside the map, as fractions of
    /// the x and y extents.
    pub anchor: [f64; 2],
    /// Height of the start pose above the bottom of the map, meters.
    pub vertical_offset: f64,
    pub memory_budget_mb: u64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            size: [60.0, 60.0, 25.0],
            resolution: 0.05,
            anchor: [0.5, 0.5],
            vertical_offset: 7.5,
            memory_budget_mb: 8192,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub radius: u32,
    pub bits: u32,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            radius: 20,
            bits: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyframeConfig {
    /// Translation threshold, meters.
    pub t_th: f64,
    /// Rotation threshold, degrees.
    pub q_th: f64,
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        Self {
            t_th: 2.0,
            q_th: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationSection {
    pub lambda: f64,
    pub max_iterations: usize,
    pub translation_tolerance: f64,
    pub rotation_tolerance: f64,
    pub min_valid_points: usize,
}

impl Default for RegistrationSection {
    fn default() -> Self {
        let d = RegistrationConfig::default();
        Self {
            lambda: d.lambda,
            max_iterations: d.max_iterations,
            translation_tolerance: d.translation_tolerance,
            rotation_tolerance: d.rotation_tolerance,
            min_valid_points: d.min_valid_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    pub gyro_noise: f64,
    pub accel_noise: f64,
    pub gyro_bias_walk: f64,
    pub accel_bias_walk: f64,
    pub position_noise: f64,
    /// Degrees.
    pub orientation_noise: f64,
    pub velocity_noise: f64,
    /// IMU history used to level the initial orientation, seconds.
    pub init_window: f64,
    /// Pose history kept for deskewing, seconds.
    pub buffer_span: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        let p = ProcessNoise::default();
        Self {
            gyro_noise: p.gyro,
            accel_noise: p.accel,
            gyro_bias_walk: p.gyro_bias_walk,
            accel_bias_walk: p.accel_bias_walk,
            position_noise: 0.02,
            orientation_noise: 0.5,
            velocity_noise: 0.1,
            init_window: 1.0,
            buffer_span: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub deskew: bool,
    /// Keep every n-th point for registration; 1 keeps all.
    pub downsample: usize,
    pub map: MapConfig,
    pub kernel: KernelConfig,
    pub keyframe: KeyframeConfig,
    pub registration: RegistrationSection,
    pub ekf: EkfConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            map: MapConfig::default(),
            kernel: KernelConfig::default(),
            keyframe: KeyframeConfig::default(),
            registration: RegistrationSection::default(),
            ekf: EkfConfig::default(),
            deskew: true,
            downsample: 1,
        }
    }
}

/// Every key with a short description, in file order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("deskew", "motion-compensate scans with per-point times"),
    ("downsample", "keep every n-th point for registration"),
    ("map.size", "map extent [x, y, z], meters"),
    ("map.resolution", "cell edge length, meters"),
    (
        "map.anchor",
        "start pose position as fractions of the x/y extent",
    ),
    (
        "map.vertical_offset",
        "start pose height above the map bottom, meters",
    ),
    ("map.memory_budget_mb", "refuse grids larger than this, MiB"),
    ("kernel.radius", "kernel half-width, cells"),
    ("kernel.bits", "mask width: 4, 8, 16, 32 or 64"),
    ("keyframe.t_th", "keyframe translation threshold, meters"),
    ("keyframe.q_th", "keyframe rotation threshold, degrees"),
    ("registration.lambda", "robust kernel scale multiplier"),
    (
        "registration.max_iterations",
        "Levenberg-Marquardt iteration cap",
    ),
    (
        "registration.translation_tolerance",
        "step norm convergence bound, meters",
    ),
    (
        "registration.rotation_tolerance",
        "step norm convergence bound, radians",
    ),
    (
        "registration.min_valid_points",
        "minimum in-map points to attempt registration",
    ),
    ("ekf.gyro_noise", "gyroscope noise density, rad/s/sqrt(Hz)"),
    (
        "ekf.accel_noise",
        "accelerometer noise density, m/s^2/sqrt(Hz)",
    ),
    ("ekf.gyro_bias_walk", "gyroscope bias random walk"),
    ("ekf.accel_bias_walk", "accelerometer bias random walk"),
    ("ekf.position_noise", "registered position std, meters"),
    (
        "ekf.orientation_noise",
        "registered orientation std, degrees",
    ),
    ("ekf.velocity_noise", "derived velocity std, m/s"),
    (
        "ekf.init_window",
        "IMU history used for initial leveling, seconds",
    ),
    (
        "ekf.buffer_span",
        "pose history kept for deskewing, seconds",
    ),
];

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `dotted.key=value`, where the value is TOML
    /// (`map.size=[30, 30, 10]`, `deskew=false`).
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), String> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| format!("override {assignment:?} is not key=value"))?;
        let key = key.trim();
        if !CONFIG_KEYS.iter().any(|(k, _)| *k == key) {
            return Err(format!("unknown config key {key:?}"));
        }
        let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {}", value.trim()))
            .map_err(|e| format!("{key}: {e}"))?
            .remove("v")
            .expect("key present");
        let mut root = toml::Value::try_from(&*self).map_err(|e| e.to_string())?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| format!("unknown config key {key:?}"))?;
        }
        let parsed = match (&*slot, parsed) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (toml::Value::Array(_), toml::Value::Array(a)) => toml::Value::Array(
                a.into_iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) => toml::Value::Float(i as f64),
                        v => v,
                    })
                    .collect(),
            ),
            (_, v) => v,
        };
        *slot = parsed;
        let cfg: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| format!("{key}: {e}"))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be positive, got {v}"))
            }
        };
        for (a, s) in self.map.size.iter().enumerate() {
            positive(&format!("map.size[{a}]"), *s)?;
        }
        positive("map.resolution", self.map.resolution)?;
        for a in self.map.anchor {
            if !(0.0..=1.0).contains(&a) {
                return Err(format!("map.anchor entries must lie in [0, 1], got {a}"));
            }
        }
        if !(0.0..=self.map.size[2]).contains(&self.map.vertical_offset) {
            return Err(format!(
                "map.vertical_offset must lie in [0, {}], got {}",
                self.map.size[2], self.map.vertical_offset
            ));
        }
        if !SUPPORTED_BITS.contains(&self.kernel.bits) {
            return Err(format!("kernel.bits must be one of {SUPPORTED_BITS:?}"));
        }
        if self.kernel.radius == 0 {
            return Err("kernel.radius must be at least 1".into());
        }
        positive("keyframe.t_th", self.keyframe.t_th)?;
        positive("keyframe.q_th", self.keyframe.q_th)?;
        positive("registration.lambda", self.registration.lambda)?;
        positive(
            "registration.translation_tolerance",
            self.registration.translation_tolerance,
        )?;
        positive(
            "registration.rotation_tolerance",
            self.registration.rotation_tolerance,
        )?;
        if self.registration.max_iterations == 0 {
            return Err("registration.max_iterations must be at least 1".into());
        }
        let e = &self.ekf;
        for (n, v) in [
            ("ekf.gyro_noise", e.gyro_noise),
            ("ekf.accel_noise", e.accel_noise),
            ("ekf.gyro_bias_walk", e.gyro_bias_walk),
            ("ekf.accel_bias_walk", e.accel_bias_walk),
            ("ekf.position_noise", e.position_noise),
            ("ekf.orientation_noise", e.orientation_noise),
            ("ekf.velocity_noise", e.velocity_noise),
            ("ekf.init_window", e.init_window),
            ("ekf.buffer_span", e.buffer_span),
        ] {
            positive(n, v)?;
        }
        if self.downsample == 0 {
            return Err("downsample must be at least 1".into());
        }
        Ok(())
    }

    pub fn registration_config(&self) -> RegistrationConfig {
        let r = &self.registration;
        RegistrationConfig {
            lambda: r.lambda,
            max_iterations: r.max_iterations,
            translation_tolerance: r.translation_tolerance,
            rotation_tolerance: r.rotation_tolerance,
            min_valid_points: r.min_valid_points,
            ..RegistrationConfig::default()
        }
    }

    pub fn process_noise(&self) -> ProcessNoise {
        ProcessNoise {
            gyro: self.ekf.gyro_noise,
            accel: self.ekf.accel_noise,
            gyro_bias_walk: self.ekf.gyro_bias_walk,
            accel_bias_walk: self.ekf.accel_bias_walk,
        }
    }

    pub fn measurement_noise(&self) -> MeasurementNoise {
        MeasurementNoise::isotropic(
            self.ekf.position_noise,
            self.ekf.orientation_noise.to_radians(),
            self.ekf.velocity_noise,
        )
    }

    pub fn memory_budget_bytes(&self) -> u64 {
        self.map.memory_budget_mb.saturating_mul(1 << 20)
    }

    /// Map bounds with the start pose (world origin) at the configured
    /// anchor.
    pub fn map_bounds(&self) -> Aabb {
        let m = &self.map;
        let min = Point3::new(
            -m.anchor[0] * m.size[0],
            -m.anchor[1] * m.size[1],
            -m.vertical_offset,
        );
        Aabb::new(min, min + Vector3::from(m.size))
    }

    /// Empty map grid covering [`PipelineConfig::map_bounds`].
    pub fn new_grid(&self) -> Result<TdfGrid, TdfError> {
        TdfGrid::new(
            self.map_bounds(),
            self.map.resolution,
            self.kernel.bits,
            self.memory_budget_bytes(),
        )
    }

    pub fn new_kernel(&self) -> Result<BinaryKernel, TdfError> {
        BinaryKernel::new(self.kernel.radius, self.kernel.bits)
    }

    /// Current value of a dotted key rendered as TOML.
    pub fn value_of(&self, key: &str) -> Option<String> {
        let root = toml::Value::try_from(self).ok()?;
        let mut slot = &root;
        for part in key.split('.') {
            slot = slot.get(part)?;
        }
        Some(slot.to_string())
    }

    /// One line per key: name, default and description.
    pub fn describe_keys() -> String {
        let d = Self::default();
        let mut s = String::new();
        for (key, what) in CONFIG_KEYS {
            let value = d.value_of(key).unwrap_or_default();
            s += &format!("  {key:<36} {value:<20} {what}\n");
        }
        s
    }
}
