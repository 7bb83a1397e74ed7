//! Labeled synthetic road scenes seen by a 64-beam spinning LIDAR.
//!
//! Rays are cast from the sensor origin through a straight road running
//! along `x`: an asphalt plane at `z = -sensor_height` bounded by curbs,
//! raised sidewalks, grass verges and optional walls, with box-shaped clutter and
//! occluders. Reflectivity is drawn per point from the distribution of the
//! surface that was hit and does not depend on range. Intensity follows an
//! inverse-square and incidence-cosine falloff on top of it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Label, LidarPoint, PointCloud};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

/// Normal distribution clamped to `[0, 255]` and rounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflectance {
    pub mean: f64,
    pub sigma: f64,
}

impl Reflectance {
    pub const fn new(mean: f64, sigma: f64) -> Self {
        Reflectance { mean, sigma }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(0.0..=255.0).contains(&self.mean) || !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!(
                "{what}: reflectivity mean must lie in [0, 255] and sigma be finite and >= 0"
            )));
        }
        Ok(())
    }
}

/// A painted stripe parallel to the road centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripeSpec {
    /// Lateral offset of the stripe center from the road centerline, m.
    pub offset: f64,
    pub width: f64,
    /// Dash period along the road in m; zero for a solid stripe.
    #[serde(default)]
    pub dash_period: f64,
    /// Painted fraction of each period.
    #[serde(default = "one")]
    pub dash_duty: f64,
    /// Along-road position where a dash starts, m.
    #[serde(default)]
    pub dash_phase: f64,
    pub reflectivity: Reflectance,
}

fn one() -> f64 {
    1.0
}

impl StripeSpec {
    pub fn solid(offset: f64, width: f64, reflectivity: Reflectance) -> Self {
        StripeSpec {
            offset,
            width,
            dash_period: 0.0,
            dash_duty: 1.0,
            dash_phase: 0.0,
            reflectivity,
        }
    }

    pub fn dashed(offset: f64, width: f64, period: f64, duty: f64, phase: f64, reflectivity: Reflectance) -> Self {
        StripeSpec {
            offset,
            width,
            dash_period: period,
            dash_duty: duty,
            dash_phase: phase,
            reflectivity,
        }
    }

    pub fn is_dashed(&self) -> bool {
        self.dash_period > 0.0
    }

    fn painted_at(&self, along: f64) -> bool {
        !self.is_dashed() || (along - self.dash_phase).rem_euclid(self.dash_period) < self.dash_duty * self.dash_period
    }
}

/// Axis-aligned box in the sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub reflectivity: Reflectance,
}

impl BoxSpec {
    /// Slab test; entry distance along unit direction `d` from the origin.
    fn hit(&self, d: [f64; 3]) -> Option<(f64, [f64; 3])> {
        let mut t_in = 0.0f64;
        let mut t_out = f64::INFINITY;
        let mut axis = 0;
        for k in 0..3 {
            if d[k].abs() < 1e-15 {
                if 0.0 < self.min[k] || 0.0 > self.max[k] {
                    return None;
                }
                continue;
            }
            let (mut a, mut b) = (self.min[k] / d[k], self.max[k] / d[k]);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            if a > t_in {
                t_in = a;
                axis = k;
            }
            t_out = t_out.min(b);
        }
        if t_in > t_out || t_in <= 0.0 {
            return None;
        }
        let mut n = [0.0; 3];
        n[axis] = 1.0;
        Some((t_in, n))
    }
}

/// Raw intensity as a function of reflectivity, range and incidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityModel {
    /// Range at which the inverse-square factor is one, m.
    pub r_ref: f64,
    pub gain: f64,
    /// Lower bound of the incidence cosine.
    pub floor: f64,
    pub noise_sigma: f64,
    pub max: f64,
}

impl Default for IntensityModel {
    fn default() -> Self {
        IntensityModel {
            r_ref: 10.0,
            gain: 5.0,
            floor: 0.01,
            noise_sigma: 0.5,
            max: 1023.0,
        }
    }
}

impl IntensityModel {
    pub fn expected(&self, reflectivity: f64, range: f64, cos_incidence: f64) -> f64 {
        let falloff = (self.r_ref / range.max(1e-6)).powi(2);
        reflectivity * falloff * cos_incidence.abs().max(self.floor) * self.gain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub sensor_height: f64,
    pub n_layers: u16,
    pub n_cols: u16,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub max_range: f64,
    /// Lateral position of the road centerline in the sensor frame, m.
    pub road_center: f64,
    pub road_half_width: f64,
    pub stripes: Vec<StripeSpec>,
    pub asphalt: Reflectance,
    pub curb_height: f64,
    /// Sidewalk width beyond each curb; zero means no sidewalk.
    pub sidewalk_width: f64,
    pub sidewalk: Reflectance,
    /// Width of the grass verge beyond each sidewalk, at sidewalk height.
    pub verge_width: f64,
    pub verge: Reflectance,
    /// Wall height at the outer edge of the verge; zero means none.
    pub wall_height: f64,
    pub wall: Reflectance,
    /// Number of clutter cubes with centers drawn uniformly in `clutter_box`.
    pub clutter_count: usize,
    pub clutter_box: [[f64; 3]; 2],
    pub clutter_size: f64,
    pub clutter: Reflectance,
    pub occluders: Vec<BoxSpec>,
    pub range_noise: f64,
    pub dropout: f64,
    pub intensity: IntensityModel,
    pub rng_seed: u64,
}

impl Default for SceneConfig {
    /// Two-lane 8 m road with solid edges and a dashed center line, the
    /// vehicle driving in the right lane.
    fn default() -> Self {
        let paint = Reflectance::new(180.0, 12.0);
        SceneConfig {
            sensor_height: 1.9,
            n_layers: 64,
            n_cols: 1024,
            elevation_min_deg: -11.25,
            elevation_max_deg: 11.25,
            max_range: 150.0,
            road_center: 2.0,
            road_half_width: 4.0,
            stripes: vec![
                StripeSpec::solid(-3.4, 0.15, paint),
                StripeSpec::dashed(0.0, 0.15, 12.0, 0.25, 0.0, paint),
                StripeSpec::solid(3.4, 0.15, paint),
            ],
            asphalt: Reflectance::new(40.0, 6.0),
            curb_height: 0.15,
            sidewalk_width: 2.0,
            sidewalk: Reflectance::new(48.0, 8.0),
            verge_width: 10.0,
            verge: Reflectance::new(50.0, 12.0),
            wall_height: 0.0,
            wall: Reflectance::new(70.0, 15.0),
            clutter_count: 0,
            clutter_box: [[-30.0, -8.0, -1.75], [30.0, 10.0, 0.0]],
            clutter_size: 0.4,
            clutter: Reflectance::new(60.0, 20.0),
            occluders: Vec::new(),
            range_noise: 0.01,
            dropout: 0.0,
            intensity: IntensityModel::default(),
            rng_seed: 0,
        }
    }
}

/// Per-point labels of a generated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: Vec<Label>,
    /// Index into the scene's stripes for marking points.
    pub stripe_ids: Vec<Option<u16>>,
}

impl GroundTruth {
    /// Number of points on each stripe, `n_stripes` long.
    pub fn stripe_counts(&self, n_stripes: usize) -> Vec<usize> {
        let mut counts = vec![0; n_stripes];
        for id in self.stripe_ids.iter().flatten() {
            if let Some(c) = counts.get_mut(*id as usize) {
                *c += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Surface {
    Road,
    Stripe(u16),
    Sidewalk,
    Verge,
    Curb,
    Wall,
    Clutter(usize),
    Occluder(usize),
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scene: {m}")));
        if self.n_layers == 0 || self.n_cols == 0 {
            return bad("n_layers and n_cols must be positive");
        }
        if !(self.sensor_height > 0.0) || !(self.road_half_width > 0.0) || !(self.max_range > 0.0) {
            return bad("sensor height, road half-width and max range must be positive");
        }
        if !(self.elevation_min_deg < self.elevation_max_deg)
            || self.elevation_min_deg < -90.0
            || self.elevation_max_deg > 90.0
        {
            return bad("elevation range must be increasing within [-90, 90] degrees");
        }
        if !(0.0..self.sensor_height).contains(&self.curb_height)
            || !(self.sidewalk_width >= 0.0)
            || !(self.verge_width >= 0.0)
            || !(self.wall_height >= 0.0)
        {
            return bad("curb height must lie in [0, sensor height); sidewalk and wall sizes must be >= 0");
        }
        if !(self.range_noise >= 0.0) || !(0.0..1.0).contains(&self.dropout) {
            return bad("range noise must be >= 0 and dropout in [0, 1)");
        }
        if self.clutter_count > 0
            && !(self.clutter_size > 0.0 && (0..3).all(|k| self.clutter_box[0][k] <= self.clutter_box[1][k]))
        {
            return bad("clutter needs a positive size and an ordered box");
        }
        let im = &self.intensity;
        if !(im.r_ref > 0.0 && im.gain >= 0.0 && im.floor > 0.0 && im.noise_sigma >= 0.0 && im.max > 0.0) {
            return bad("intensity model parameters must be positive");
        }
        for (k, s) in self.stripes.iter().enumerate() {
            if !(s.width > 0.0) {
                return bad(&format!("stripe {k} width must be positive"));
            }
            if !(s.dash_period >= 0.0) || !(s.dash_duty > 0.0 && s.dash_duty <= 1.0) {
                return bad(&format!("stripe {k} dash period must be >= 0 and duty in (0, 1]"));
            }
            s.reflectivity.validate(&format!("stripe {k}"))?;
        }
        if self.stripes.len() > u16::MAX as usize {
            return bad("too many stripes");
        }
        for (r, what) in [
            (&self.asphalt, "asphalt"),
            (&self.sidewalk, "sidewalk"),
            (&self.verge, "verge"),
            (&self.wall, "wall"),
            (&self.clutter, "clutter"),
        ] {
            r.validate(what)?;
        }
        for (k, b) in self.occluders.iter().enumerate() {
            if !(0..3).all(|a| b.min[a] < b.max[a]) {
                return bad(&format!("occluder {k} box must have min < max"));
            }
            b.reflectivity.validate(&format!("occluder {k}"))?;
        }
        Ok(())
    }

    /// Beam elevations in degrees, ring 0 lowest.
    pub fn elevations_deg(&self) -> Vec<f64> {
        let n = self.n_layers as usize;
        if n == 1 {
            return vec![0.5 * (self.elevation_min_deg + self.elevation_max_deg)];
        }
        let step = (self.elevation_max_deg - self.elevation_min_deg) / (n - 1) as f64;
        (0..n).map(|k| self.elevation_min_deg + step * k as f64).collect()
    }

    fn clutter_boxes(&self) -> Vec<BoxSpec> {
        let mut rng = stream_rng(self.rng_seed, u64::MAX);
        let half = 0.5 * self.clutter_size;
        (0..self.clutter_count)
            .map(|_| {
                let c: [f64; 3] =
                    std::array::from_fn(|k| rng.random_range(self.clutter_box[0][k]..=self.clutter_box[1][k]));
                BoxSpec {
                    min: c.map(|v| v - half),
                    max: c.map(|v| v + half),
                    reflectivity: self.clutter,
                }
            })
            .collect()
    }

    /// First surface along unit direction `d`: distance, surface, normal.
    fn cast(&self, d: [f64; 3], clutter: &[BoxSpec]) -> Option<(f64, Surface, [f64; 3])> {
        let h = self.sensor_height;
        let hw = self.road_half_width;
        let yc = self.road_center;
        let top = -h + self.curb_height;
        let mut best: Option<(f64, Surface, [f64; 3])> = None;
        let mut offer = |t: f64, s: Surface, n: [f64; 3]| {
            if t > 0.0 && t <= self.max_range && best.is_none_or(|b| t < b.0) {
                best = Some((t, s, n));
            }
        };

        if d[2] < 0.0 {
            let t = -h / d[2];
            let (x, y) = (d[0] * t, d[1] * t);
            let lat = y - yc;
            if lat.abs() <= hw {
                let s = self
                    .stripes
                    .iter()
                    .position(|s| (lat - s.offset).abs() <= 0.5 * s.width && s.painted_at(x))
                    .map_or(Surface::Road, |k| Surface::Stripe(k as u16));
                offer(t, s, [0.0, 0.0, 1.0]);
            }
            if self.sidewalk_width + self.verge_width > 0.0 {
                let t = top / d[2];
                let lat = (d[1] * t - yc).abs();
                if lat > hw && lat <= hw + self.sidewalk_width {
                    offer(t, Surface::Sidewalk, [0.0, 0.0, 1.0]);
                } else if lat > hw + self.sidewalk_width && lat <= hw + self.sidewalk_width + self.verge_width {
                    offer(t, Surface::Verge, [0.0, 0.0, 1.0]);
                }
            }
        }
        if d[1].abs() > 1e-15 {
            let side = d[1].signum();
            let face = |y: f64| (y - 0.0) / d[1];
            // Curb face and wall on the side the ray is heading to.
            let t = face(yc + side * hw);
            let z = d[2] * t;
            if self.curb_height > 0.0 && z >= -h && z <= top {
                offer(t, Surface::Curb, [0.0, -side, 0.0]);
            }
            if self.wall_height > 0.0 {
                let t = face(yc + side * (hw + self.sidewalk_width + self.verge_width));
                let z = d[2] * t;
                if z >= top && z <= top + self.wall_height {
                    offer(t, Surface::Wall, [0.0, -side, 0.0]);
                }
            }
        }
        for (k, b) in clutter.iter().enumerate() {
            if let Some((t, n)) = b.hit(d) {
                offer(t, Surface::Clutter(k), n);
            }
        }
        for (k, b) in self.occluders.iter().enumerate() {
            if let Some((t, n)) = b.hit(d) {
                offer(t, Surface::Occluder(k), n);
            }
        }
        best
    }

    fn reflectance(&self, s: Surface, clutter: &[BoxSpec]) -> Reflectance {
        match s {
            Surface::Road => self.asphalt,
            Surface::Stripe(k) => self.stripes[k as usize].reflectivity,
            Surface::Sidewalk | Surface::Curb => self.sidewalk,
            Surface::Verge => self.verge,
            Surface::Wall => self.wall,
            Surface::Clutter(k) => clutter[k].reflectivity,
            Surface::Occluder(k) => self.occluders[k].reflectivity,
        }
    }
}

/// Casts every ray of one revolution. Each ring draws from its own stream
/// of `rng_seed`, so rings are generated in parallel deterministically.
pub fn generate(config: &SceneConfig) -> Result<(PointCloud, GroundTruth)> {
    config.validate()?;
    let clutter = config.clutter_boxes();
    let elevations = config.elevations_deg();
    let n_cols = config.n_cols as usize;
    let noise = Normal::new(0.0, config.range_noise).map_err(|e| Error::Config(e.to_string()))?;
    let i_noise = Normal::new(0.0, config.intensity.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;

    let rings: Vec<Vec<(LidarPoint, Label, Option<u16>)>> = elevations
        .par_iter()
        .enumerate()
        .map(|(ring, &elev)| {
            let mut rng = stream_rng(config.rng_seed, ring as u64);
            let (se, ce) = elev.to_radians().sin_cos();
            (0..n_cols)
                .map(|col| {
                    let az = 2.0 * PI * col as f64 / n_cols as f64;
                    let d = [ce * az.cos(), ce * az.sin(), se];
                    let (ring, col) = (ring as u16, col as u16);
                    // Fixed draw order per ray keeps streams aligned.
                    let drop = rng.random::<f64>() < config.dropout;
                    let dr = noise.sample(&mut rng);
                    let u: f64 = rng.sample(rand_distr::StandardNormal);
                    let di = i_noise.sample(&mut rng);
                    let miss = (LidarPoint::dropout(ring, col), Label::Other, None);
                    let Some((t, surface, n)) = config.cast(d, &clutter) else {
                        return miss;
                    };
                    if drop {
                        return miss;
                    }
                    let r = (t + dr).max(1e-3);
                    let refl = config.reflectance(surface, &clutter);
                    let reflectivity = (refl.mean + refl.sigma * u).round().clamp(0.0, 255.0);
                    let cos_inc = d[0] * n[0] + d[1] * n[1] + d[2] * n[2];
                    let intensity =
                        (config.intensity.expected(reflectivity, r, cos_inc) + di).clamp(0.0, config.intensity.max);
                    let point = LidarPoint {
                        x: d[0] * r,
                        y: d[1] * r,
                        z: d[2] * r,
                        range: r,
                        intensity: intensity as f32,
                        reflectivity: reflectivity as u16,
                        ring,
                        col,
                        valid: true,
                    };
                    let (label, stripe) = match surface {
                        Surface::Road => (Label::Road, None),
                        Surface::Stripe(k) => (Label::Marking, Some(k)),
                        _ => (Label::Other, None),
                    };
                    (point, label, stripe)
                })
                .collect()
        })
        .collect();

    let total = config.n_layers as usize * n_cols;
    let mut points = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut stripe_ids = Vec::with_capacity(total);
    for (p, l, s) in rings.into_iter().flatten() {
        points.push(p);
        labels.push(l);
        stripe_ids.push(s);
    }
    let cloud = PointCloud::new(
        config.n_layers,
        config.n_cols,
        format!("scene_{:016x}", config.rng_seed),
        points,
    )?;
    Ok((cloud, GroundTruth { labels, stripe_ids }))
}

/// Scene families used for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Two-lane 8 m track with curbs, fresh paint and a dashed center line.
    TestTrack,
    /// Three-lane road with worn paint, short sparse dashes, traffic and
    /// concrete barriers beyond the shoulders.
    Highway,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::TestTrack => "test_track",
            Profile::Highway => "highway",
        }
    }

    /// Scene of frame `frame` of a sequence seeded with `seed`.
    pub fn frame_config(self, seed: u64, frame: usize) -> SceneConfig {
        let frame_seed = derive_seed(seed, frame as u64);
        let mut rng = stream_rng(frame_seed, u64::MAX - 1);
        match self {
            Profile::TestTrack => {
                let mut c = SceneConfig {
                    rng_seed: frame_seed,
                    road_center: 2.0 + rng.random_range(-0.3..0.3),
                    clutter_count: 8,
                    ..SceneConfig::default()
                };
                let lo = c.road_center - c.road_half_width - c.sidewalk_width;
                let hi = c.road_center + c.road_half_width + c.sidewalk_width;
                c.clutter_box = [[-40.0, lo, -1.5], [40.0, hi, 0.5]];
                for s in c.stripes.iter_mut().filter(|s| s.is_dashed()) {
                    s.dash_phase = rng.random_range(0.0..s.dash_period);
                }
                c
            }
            Profile::Highway => {
                let worn = Reflectance::new(130.0, 20.0);
                let lane = 3.75;
                // Paved from a 2.5 m hard shoulder on the right to a 2 m
                // shoulder on the left; lanes are laid out around the middle
                // lane the sensor drives in.
                let (right, left) = (2.5, 2.0);
                let half = 1.5 * lane + 0.5 * (right + left);
                let shift = 0.5 * (right - left);
                let jitter = rng.random_range(-0.3..0.3);
                let road_center = jitter - shift;
                let mut stripes = vec![
                    StripeSpec::solid(-1.5 * lane + shift, 0.15, worn),
                    StripeSpec::dashed(-0.5 * lane + shift, 0.15, 12.0, 0.25, 0.0, worn),
                    StripeSpec::dashed(0.5 * lane + shift, 0.15, 12.0, 0.25, 0.0, worn),
                    StripeSpec::solid(1.5 * lane + shift, 0.15, worn),
                ];
                for s in stripes.iter_mut().filter(|s| s.is_dashed()) {
                    s.dash_phase = rng.random_range(0.0..s.dash_period);
                }
                let vehicles = rng.random_range(0..=3);
                let occluders = (0..vehicles)
                    .map(|_| {
                        let lane_k: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        let y = jitter + lane_k * lane + rng.random_range(-0.4..0.4);
                        let x = rng.random_range(8.0..40.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                        BoxSpec {
                            min: [x - 2.25, y - 0.9, -1.9 + 0.05],
                            max: [x + 2.25, y + 0.9, -1.9 + 1.5],
                            reflectivity: Reflectance::new(60.0, 20.0),
                        }
                    })
                    .collect();
                SceneConfig {
                    rng_seed: frame_seed,
                    road_center,
                    road_half_width: half,
                    stripes,
                    asphalt: Reflectance::new(40.0, 6.0),
                    curb_height: 0.0,
                    sidewalk_width: 0.0,
                    verge_width: 0.0,
                    wall_height: 0.8,
                    wall: Reflectance::new(55.0, 10.0),
                    occluders,
                    ..SceneConfig::default()
                }
            }
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test_track" => Ok(Profile::TestTrack),
            "highway" => Ok(Profile::Highway),
            other => Err(Error::Config(format!(
                "unknown scene profile '{other}' (expected test_track or highway)"
            ))),
        }
    }
}

/// One generated frame with the scene that produced it.
#[derive(Debug, Clone)]
pub struct SceneFrame {
    pub config: SceneConfig,
    pub cloud: PointCloud,
    pub truth: GroundTruth,
}

/// `n_frames` scenes of `profile`, generated in parallel.
pub fn scene_suite(profile: Profile, n_frames: usize, seed: u64) -> Result<Vec<SceneFrame>> {
    (0..n_frames)
        .into_par_iter()
        .map(|k| scene_frame(profile, seed, k))
        .collect()
}

/// Frame `k` of `scene_suite(profile, _, seed)` on its own.
pub fn scene_frame(profile: Profile, seed: u64, k: usize) -> Result<SceneFrame> {
    let config = profile.frame_config(seed, k);
    let (mut cloud, truth) = generate(&config)?;
    cloud.set_frame_id(format!("{profile}_{k:04}"));
    Ok(SceneFrame { config, cloud, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::fit_plane_ransac;

    fn flat() -> SceneConfig {
        SceneConfig {
            curb_height: 0.0,
            sidewalk_width: 0.0,
            wall_height: 0.0,
            range_noise: 0.0,
            road_half_width: 1000.0,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn point_count() {
        let (c, t) = generate(&SceneConfig::default()).unwrap();
        assert_eq!(c.len(), 65536);
        assert_eq!(t.labels.len(), 65536);
        for (l, s) in t.labels.iter().zip(&t.stripe_ids) {
            assert_eq!(*l == Label::Marking, s.is_some());
        }
    }

    #[test]
    fn flat_road_is_exact() {
        let (c, t) = generate(&flat()).unwrap();
        let mut n = 0;
        for (p, l) in c.points().iter().zip(&t.labels) {
            if *l != Label::Other {
                assert!((p.z + 1.9).abs() <= 1e-12, "{}", p.z);
                n += 1;
            }
        }
        assert!(n > 10_000);
        let ground = c
            .select(&crate::IndexMask::from_predicate(c.len(), |i| {
                t.labels[i] != Label::Other
            }))
            .unwrap();
        let m = fit_plane_ransac(&ground, 0.3, 50, 0).unwrap();
        assert!((m.d - 1.9).abs() < 1e-9 && (m.normal[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marking_statistics() {
        let config = SceneConfig::default();
        let (c, t) = generate(&config).unwrap();
        let refl: Vec<f64> = c
            .points()
            .iter()
            .zip(&t.labels)
            .filter(|(_, l)| **l == Label::Marking)
            .map(|(p, _)| p.reflectivity as f64)
            .collect();
        let n = refl.len() as f64;
        let mean = refl.iter().sum::<f64>() / n;
        let spec = config.stripes[0].reflectivity;
        assert!(
            (mean - spec.mean).abs() <= 2.0 * spec.sigma / n.sqrt() + 0.5,
            "{mean} over {n}"
        );

        // Near stripe returns are brighter than far ones.
        let mut near = (0.0, 0);
        let mut far = (0.0, 0);
        for (p, l) in c.points().iter().zip(&t.labels) {
            if *l == Label::Marking {
                let acc = if p.range < 20.0 { &mut near } else { &mut far };
                acc.0 += p.intensity as f64;
                acc.1 += 1;
            }
        }
        assert!(near.1 > 0 && far.1 > 0);
        assert!(far.0 / far.1 as f64 > 0.0 || near.0 > 0.0);
        assert!(far.0 / (far.1 as f64) < near.0 / near.1 as f64);
    }

    #[test]
    fn ring_contrast() {
        let (c, t) = generate(&SceneConfig::default()).unwrap();
        for ring in 0..c.n_layers() {
            let span = c.ring_span(ring).unwrap();
            let (mut m, mut a) = (Vec::new(), Vec::new());
            for i in span {
                match t.labels[i] {
                    Label::Marking => m.push(c.points()[i].reflectivity as f64),
                    Label::Road => a.push(c.points()[i].reflectivity as f64),
                    Label::Other => {}
                }
            }
            if m.len() < 2 || a.len() < 2 {
                continue;
            }
            let stat = |v: &[f64]| {
                let mu = v.iter().sum::<f64>() / v.len() as f64;
                (mu, v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / v.len() as f64)
            };
            let ((mm, vm), (ma, va)) = (stat(&m), stat(&a));
            // Configured spread, not the small-sample estimate.
            let _ = (vm, va);
            assert!(
                mm - ma >= 4.0 * (12.0f64.powi(2) + 6.0f64.powi(2)).sqrt(),
                "ring {ring}: {mm} vs {ma}"
            );
        }
    }

    #[test]
    fn intensity_tracks_inverse_square() {
        let (c, t) = generate(&flat()).unwrap();
        let (xs, ys): (Vec<f64>, Vec<f64>) = c
            .points()
            .iter()
            .zip(&t.labels)
            .filter(|(_, l)| **l == Label::Road)
            .map(|(p, _)| (1.0 / (p.range * p.range), p.intensity as f64))
            .unzip();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        assert!(cov > 0.0);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = scene_suite(Profile::Highway, 2, 7).unwrap();
        let b = scene_suite(Profile::Highway, 2, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.cloud, y.cloud);
            assert_eq!(x.truth, y.truth);
        }
        let c = scene_suite(Profile::Highway, 1, 8).unwrap();
        assert_ne!(a[0].cloud, c[0].cloud);
    }

    #[test]
    fn test_track_has_stripes() {
        let f = scene_frame(Profile::TestTrack, 0, 0).unwrap();
        let counts = f.truth.stripe_counts(f.config.stripes.len());
        assert!(counts.iter().filter(|&&c| c > 0).count() >= 2, "{counts:?}");
        assert_eq!(f.cloud.frame_id(), "test_track_0000");
    }

    #[test]
    fn highway_dashes_get_sparse() {
        let frames = scene_suite(Profile::Highway, 20, 1).unwrap();
        let sparse = frames.iter().any(|f| {
            let counts = f.truth.stripe_counts(f.config.stripes.len());
            f.config
                .stripes
                .iter()
                .zip(&counts)
                .any(|(s, &c)| s.is_dashed() && c < 10)
        });
        assert!(sparse);
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = SceneConfig::default();
        c.stripes[0].width = 0.0;
        assert!(matches!(generate(&c), Err(Error::Config(_))));
        let c = SceneConfig {
            n_cols: 0,
            ..SceneConfig::default()
        };
        assert!(generate(&c).is_err());
        assert!("city".parse::<Profile>().is_err());
    }

    #[test]
    fn dropout_keeps_slots() {
        let c = SceneConfig {
            dropout: 0.3,
            ..SceneConfig::default()
        };
        let (cloud, _) = generate(&c).unwrap();
        assert_eq!(cloud.len(), 65536);
        let base = generate(&SceneConfig::default()).unwrap().0.valid_count();
        assert!(cloud.valid_count() < base);
    }

    #[test]
    fn box_hit() {
        let b = BoxSpec {
            min: [5.0, -1.0, -1.0],
            max: [6.0, 1.0, 1.0],
            reflectivity: Reflectance::new(0.0, 0.0),
        };
        let (t, n) = b.hit([1.0, 0.0, 0.0]).unwrap();
        assert!((t - 5.0).abs() < 1e-12);
        assert_eq!(n, [1.0, 0.0, 0.0]);
        assert!(b.hit([-1.0, 0.0, 0.0]).is_none());
    }
}
