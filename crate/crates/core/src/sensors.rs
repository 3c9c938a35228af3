//! Simulated robot hardware: the side-looking block camera, the omni-wheel
//! motors, and the external odometry encoders.
//!
//! Body frame convention for a follower: `v` points along its heading, `u`
//! points sideways toward its beacon. A [`RelativePose`] is the follower's
//! offset as seen from the beacon: `du` is the lateral gap, `dv` is how far
//! the follower is ahead of the beacon, `dtheta` is the beacon heading
//! measured clockwise from the follower heading.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use log::warn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativePose {
    pub du: f64,
    pub dv: f64,
    pub dtheta: f64,
}

impl RelativePose {
    pub fn new(du: f64, dv: f64, dtheta: f64) -> Self {
        Self { du, dv, dtheta: wrap_degrees(dtheta) }
    }
}

/// Wraps an angle into `[-180, 180)`.
pub fn wrap_degrees(a: f64) -> f64 {
    (a + 180.0).rem_euclid(360.0) - 180.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Unattainable,
    Front,
    Target,
    Rear,
    Lost,
}

impl Zone {
    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Unattainable => "unattainable",
            Zone::Front => "front",
            Zone::Target => "target",
            Zone::Rear => "rear",
            Zone::Lost => "lost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Signature {
    Front,
    Rear,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockObservation {
    pub signature: Signature,
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
}

/// Zone rectangles in `(du, dv)`, cm, plus the angular sensing limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneGeometry {
    /// Half side of the square sensing region.
    pub sensing_half: f64,
    pub max_dtheta: f64,
    pub unattainable_du: f64,
    pub unattainable_dv: f64,
    pub target_du_min: f64,
    pub target_du_max: f64,
    pub target_dv: f64,
    /// Beyond `target_dv` the Target block stays visible up to this |dv|.
    pub target_visible_dv: f64,
}

impl Default for ZoneGeometry {
    fn default() -> Self {
        Self {
            sensing_half: 45.0,
            max_dtheta: 60.0,
            unattainable_du: 24.0,
            unattainable_dv: 40.0,
            target_du_min: 24.0,
            target_du_max: 45.0,
            target_dv: 10.0,
            target_visible_dv: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub resolution: (u32, u32),
    pub focal_px: f64,
    pub center_px: f64,
    /// Side of the square colour markers (cm).
    pub marker_side: f64,
    pub fov_half_deg: f64,
    /// Along-track offset of the Front/Rear markers from the beacon centre (cm).
    pub marker_offset: f64,
    pub zones: ZoneGeometry,
    pub pixel_noise_sigma: f64,
    pub side_noise_sigma: f64,
    pub dropout_prob: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            resolution: (316, 208),
            // 3 cm of along-track offset at 32 cm spans 25 px.
            focal_px: 800.0 / 3.0,
            center_px: 135.0,
            marker_side: 7.0,
            fov_half_deg: 30.0,
            marker_offset: 18.25,
            zones: ZoneGeometry::default(),
            pixel_noise_sigma: 1.5,
            side_noise_sigma: 1.0,
            dropout_prob: 0.01,
        }
    }
}

impl CameraModel {
    pub fn noise_free(mut self) -> Self {
        self.pixel_noise_sigma = 0.0;
        self.side_noise_sigma = 0.0;
        self.dropout_prob = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let z = &self.zones;
        if !(self.focal_px > 0.0) {
            return Err("camera.focal_px must be positive".into());
        }
        if !(self.marker_side > 0.0) {
            return Err("camera.marker_side must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err("camera.dropout_prob must lie in [0, 1]".into());
        }
        if self.pixel_noise_sigma < 0.0 || self.side_noise_sigma < 0.0 {
            return Err("camera noise sigmas must be non-negative".into());
        }
        if z.target_du_min < z.unattainable_du && z.target_dv > 0.0 {
            return Err("camera.zone: Target band overlaps the Unattainable area".into());
        }
        if !(z.target_du_max > z.target_du_min) || !(z.sensing_half > 0.0) {
            return Err("camera.zone: empty Target band or sensing square".into());
        }
        Ok(())
    }

    /// Classifies a pose. Rules are checked in order, so the result is unique.
    pub fn zone_of(&self, pose: &RelativePose) -> Zone {
        let z = &self.zones;
        if pose.du.abs() > z.sensing_half
            || pose.dv.abs() > z.sensing_half
            || pose.dtheta.abs() > z.max_dtheta
        {
            return Zone::Lost;
        }
        if pose.du.abs() < z.unattainable_du && pose.dv.abs() < z.unattainable_dv {
            return Zone::Unattainable;
        }
        // The camera looks toward +u only.
        if pose.du <= 0.0 {
            return Zone::Lost;
        }
        if pose.dv.abs() <= z.target_dv {
            if pose.du >= z.target_du_min && pose.du <= z.target_du_max {
                return Zone::Target;
            }
            return Zone::Lost;
        }
        if pose.dv > 0.0 {
            Zone::Front
        } else {
            Zone::Rear
        }
    }

    /// Noise-free pixel column of a marker at along-track offset `marker_dv`
    /// on the beacon.
    pub fn ideal_center_x(&self, pose: &RelativePose, marker_dv: f64) -> f64 {
        self.center_px + self.focal_px * (pose.dv - marker_dv) / pose.du
    }

    /// Noise-free apparent marker height (px); width is this times `cos(dθ)`.
    pub fn ideal_side(&self, du: f64) -> f64 {
        self.focal_px * self.marker_side / du
    }

    /// Distance at which a marker appears `side_px` tall.
    pub fn distance_for_side(&self, side_px: f64) -> f64 {
        self.focal_px * self.marker_side / side_px
    }

    fn block<R: Rng + ?Sized>(
        &self,
        pose: &RelativePose,
        signature: Signature,
        rng: &mut R,
    ) -> Option<BlockObservation> {
        let marker_dv = match signature {
            Signature::Front => self.marker_offset,
            Signature::Rear => -self.marker_offset,
            Signature::Target => 0.0,
        };
        // Draw every variate before deciding on dropout so the stream advances
        // identically whatever the outcome.
        let nx = gauss(rng, self.pixel_noise_sigma);
        let ny = gauss(rng, self.pixel_noise_sigma);
        let nw = gauss(rng, self.side_noise_sigma);
        let nh = gauss(rng, self.side_noise_sigma);
        let dropped = self.dropout_prob > 0.0 && rng.random::<f64>() < self.dropout_prob;
        if dropped {
            return None;
        }
        if signature == Signature::Target
            && (pose.dv / pose.du).atan().to_degrees().abs() > self.fov_half_deg
        {
            return None;
        }
        let (w_px, h_px) = (f64::from(self.resolution.0), f64::from(self.resolution.1));
        let side = self.ideal_side(pose.du.abs());
        let center_x = (self.ideal_center_x(pose, marker_dv) + nx).clamp(0.0, w_px - 1e-9);
        let center_y = (h_px / 2.0 + ny).clamp(0.0, h_px - 1e-9);
        let width = (side * pose.dtheta.to_radians().cos() + nw).max(1.0);
        let height = (side + nh).max(1.0);
        Some(BlockObservation { signature, center_x, center_y, width, height })
    }

    /// Blocks reported for a pose. Each block flickers out independently with
    /// `dropout_prob`.
    pub fn observe<R: Rng + ?Sized>(&self, pose: &RelativePose, rng: &mut R) -> Vec<BlockObservation> {
        let z = &self.zones;
        let signatures: &[Signature] = match self.zone_of(pose) {
            Zone::Lost => &[],
            Zone::Target => &[Signature::Target],
            Zone::Unattainable => &[Signature::Front, Signature::Target, Signature::Rear],
            Zone::Front if pose.dv.abs() <= z.target_visible_dv => &[Signature::Front, Signature::Target],
            Zone::Front => &[Signature::Front],
            Zone::Rear if pose.dv.abs() <= z.target_visible_dv => &[Signature::Rear, Signature::Target],
            Zone::Rear => &[Signature::Rear],
        };
        signatures.iter().filter_map(|s| self.block(pose, *s, rng)).collect()
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    V,
    U,
}

/// Distance-to-wheel-rotation curve `rotations = α·|d| + β` (signed by `d`),
/// calibrated up to `max_distance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisCalibration {
    pub alpha: f64,
    pub beta: f64,
    pub max_distance: f64,
}

impl AxisCalibration {
    pub fn clamp(&self, distance: f64) -> f64 {
        if distance.abs() > self.max_distance {
            warn!("commanded {distance} cm exceeds calibrated range {} cm; clamped", self.max_distance);
            distance.signum() * self.max_distance
        } else {
            distance
        }
    }

    pub fn to_rotations(&self, distance: f64) -> f64 {
        let d = self.clamp(distance);
        if d == 0.0 {
            0.0
        } else {
            d.signum() * (self.alpha * d.abs() + self.beta)
        }
    }

    pub fn to_distance(&self, rotations: f64) -> f64 {
        if rotations == 0.0 {
            return 0.0;
        }
        rotations.signum() * ((rotations.abs() - self.beta) / self.alpha).max(0.0)
    }
}

/// A commanded or executed body-frame motion: translation in cm, rotation in
/// degrees (positive clockwise).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Motion {
    pub dv: f64,
    pub du: f64,
    pub drot: f64,
}

impl Motion {
    pub fn translate(dv: f64, du: f64) -> Self {
        Self { dv, du, drot: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorModel {
    pub v_axis: AxisCalibration,
    pub u_axis: AxisCalibration,
    pub actuation_noise_sigma: f64,
    pub slip_gain: f64,
    pub rotation_noise_sigma: f64,
}

impl Default for MotorModel {
    fn default() -> Self {
        Self {
            // 6.5 cm drive wheels with a small dead-band offset.
            v_axis: AxisCalibration { alpha: 0.049, beta: 0.02, max_distance: 20.0 },
            u_axis: AxisCalibration { alpha: 0.049, beta: 0.03, max_distance: 10.0 },
            actuation_noise_sigma: 0.02,
            slip_gain: 0.05,
            rotation_noise_sigma: 0.5,
        }
    }
}

impl MotorModel {
    pub fn noise_free(mut self) -> Self {
        self.actuation_noise_sigma = 0.0;
        self.rotation_noise_sigma = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, c) in [("motor.v", &self.v_axis), ("motor.u", &self.u_axis)] {
            if !(c.alpha > 0.0) || !(c.beta >= 0.0) || !(c.max_distance > 0.0) {
                return Err(format!("{name}: need alpha > 0, beta >= 0, max_distance > 0"));
            }
        }
        if self.actuation_noise_sigma < 0.0 || self.rotation_noise_sigma < 0.0 || self.slip_gain < 0.0 {
            return Err("motor noise and slip parameters must be non-negative".into());
        }
        Ok(())
    }

    pub fn axis(&self, axis: Axis) -> &AxisCalibration {
        match axis {
            Axis::V => &self.v_axis,
            Axis::U => &self.u_axis,
        }
    }

    /// Executes a command on terrain with potential gradient `grad`.
    ///
    /// Each translation axis loses `slip_gain · |∇F|` of its length and is
    /// scaled by `1 + N(0, σ)`; rotations get additive `N(0, σ_rot)` noise.
    pub fn actuate<R: Rng + ?Sized>(&self, commanded: Motion, grad: [f64; 2], rng: &mut R) -> Motion {
        let dv = self.v_axis.clamp(commanded.dv);
        let du = self.u_axis.clamp(commanded.du);
        let shortfall = 1.0 - self.slip_gain * grad[0].hypot(grad[1]);
        let nv = gauss(rng, self.actuation_noise_sigma);
        let nu = gauss(rng, self.actuation_noise_sigma);
        let nr = gauss(rng, self.rotation_noise_sigma);
        Motion {
            dv: dv * shortfall * (1.0 + nv),
            du: du * shortfall * (1.0 + nu),
            drot: if commanded.drot == 0.0 { 0.0 } else { commanded.drot + nr },
        }
    }

    /// Movement algorithm: distance → wheel rotations → distance the wheels
    /// actually drive, then the terrain/noise model.
    pub fn execute<R: Rng + ?Sized>(&self, commanded: Motion, grad: [f64; 2], rng: &mut R) -> Motion {
        let rv = self.v_axis.to_rotations(commanded.dv);
        let ru = self.u_axis.to_rotations(commanded.du);
        let driven = Motion {
            dv: self.v_axis.to_distance(rv),
            du: self.u_axis.to_distance(ru),
            drot: commanded.drot,
        };
        self.actuate(driven, grad, rng)
    }
}

/// Distance-to-rotation conversion for one axis (clamped to the calibrated range).
pub fn convert_to_rotations(mm: &MotorModel, distance: f64, axis: Axis) -> f64 {
    mm.axis(axis).to_rotations(distance)
}

pub fn convert_to_distance(mm: &MotorModel, rotations: f64, axis: Axis) -> f64 {
    mm.axis(axis).to_distance(rotations)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderModel {
    pub noise_sigma: f64,
    /// Distance per encoder tick (cm); 0 disables quantization.
    pub tick_cm: f64,
}

impl Default for EncoderModel {
    fn default() -> Self {
        // 512 counts per revolution of a 38 mm omni wheel.
        Self { noise_sigma: 0.02, tick_cm: 3.8 * std::f64::consts::PI / 512.0 }
    }
}

impl EncoderModel {
    pub fn noise_free(mut self) -> Self {
        self.noise_sigma = 0.0;
        self.tick_cm = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.noise_sigma < 0.0 || self.tick_cm < 0.0 {
            return Err("encoder parameters must be non-negative".into());
        }
        Ok(())
    }

    fn quantize(&self, x: f64) -> f64 {
        if self.tick_cm > 0.0 {
            (x / self.tick_cm).round() * self.tick_cm
        } else {
            x
        }
    }

    /// Measured body-frame translation `[dv, du]`.
    pub fn encode<R: Rng + ?Sized>(&self, actual: [f64; 2], rng: &mut R) -> [f64; 2] {
        let nv = gauss(rng, self.noise_sigma);
        let nu = gauss(rng, self.noise_sigma);
        [self.quantize(actual[0] * (1.0 + nv)), self.quantize(actual[1] * (1.0 + nu))]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn cam() -> CameraModel {
        CameraModel::default().noise_free()
    }

    #[test]
    fn zone_examples() {
        let c = CameraModel::default();
        assert_eq!(c.zone_of(&RelativePose::new(32.0, 0.0, 0.0)), Zone::Target);
        assert_eq!(c.zone_of(&RelativePose::new(32.0, 20.0, 0.0)), Zone::Front);
        assert_eq!(c.zone_of(&RelativePose::new(32.0, -20.0, 0.0)), Zone::Rear);
        assert_eq!(c.zone_of(&RelativePose::new(60.0, 0.0, 0.0)), Zone::Lost);
        assert_eq!(c.zone_of(&RelativePose::new(10.0, 5.0, 0.0)), Zone::Unattainable);
        assert_eq!(c.zone_of(&RelativePose::new(32.0, 0.0, 75.0)), Zone::Lost);
    }

    #[test]
    fn observe_examples() {
        let c = cam();
        let mut rng = stream(1, Stream::Camera);
        let obs = c.observe(&RelativePose::new(32.0, 0.0, 0.0), &mut rng);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].signature, Signature::Target);
        assert_eq!(obs[0].center_x, 135.0);
        assert!((obs[0].width - 266.7 * 7.0 / 32.0).abs() < 0.05);
        assert!((obs[0].width - 58.3).abs() < 0.05);

        let obs = c.observe(&RelativePose::new(32.0, 3.0, 0.0), &mut rng);
        assert!((obs[0].center_x - 160.0).abs() < 1e-9);
        assert!(c.observe(&RelativePose::new(60.0, 0.0, 0.0), &mut rng).is_empty());
    }

    #[test]
    fn zone_block_sets() {
        let c = cam();
        let mut rng = stream(1, Stream::Camera);
        let sigs = |p: RelativePose, rng: &mut _| -> Vec<Signature> {
            c.observe(&p, rng).iter().map(|b| b.signature).collect()
        };
        assert_eq!(sigs(RelativePose::new(10.0, 0.0, 0.0), &mut rng).len(), 3);
        assert_eq!(sigs(RelativePose::new(32.0, 12.0, 0.0), &mut rng), vec![Signature::Front, Signature::Target]);
        assert_eq!(sigs(RelativePose::new(32.0, 30.0, 0.0), &mut rng), vec![Signature::Front]);
        assert_eq!(sigs(RelativePose::new(32.0, -12.0, 0.0), &mut rng), vec![Signature::Rear, Signature::Target]);
        assert_eq!(sigs(RelativePose::new(32.0, -30.0, 0.0), &mut rng), vec![Signature::Rear]);
    }

    #[test]
    fn foreshortening_narrows_width_only() {
        let c = cam();
        let mut rng = stream(1, Stream::Camera);
        let b = c.observe(&RelativePose::new(32.0, 0.0, 30.0), &mut rng)[0];
        assert!((b.width / b.height - 30f64.to_radians().cos()).abs() < 1e-12);
    }

    #[test]
    fn dropout_one_empties_every_reading() {
        let c = CameraModel { dropout_prob: 1.0, ..cam() };
        let mut rng = stream(1, Stream::Camera);
        assert!(c.observe(&RelativePose::new(32.0, 0.0, 0.0), &mut rng).is_empty());
    }

    #[test]
    fn noisy_blocks_stay_in_frame() {
        let c = CameraModel { pixel_noise_sigma: 50.0, ..CameraModel::default() };
        let mut rng = stream(3, Stream::Camera);
        for _ in 0..500 {
            for b in c.observe(&RelativePose::new(25.0, 9.0, 10.0), &mut rng) {
                assert!((0.0..316.0).contains(&b.center_x));
                assert!(b.width > 0.0 && b.height > 0.0);
            }
        }
    }

    #[test]
    fn actuate_examples() {
        let m = MotorModel::default().noise_free();
        let mut rng = stream(1, Stream::Motor);
        assert_eq!(m.actuate(Motion::translate(5.0, 0.0), [0.0, 0.0], &mut rng), Motion::translate(5.0, 0.0));
        let a = m.actuate(Motion::translate(5.0, 0.0), [0.1, 0.0], &mut rng);
        assert!((a.dv - 4.975).abs() < 1e-12 && a.du == 0.0 && a.drot == 0.0);
        assert_eq!(m.actuate(Motion::default(), [0.3, 0.1], &mut rng), Motion::default());
    }

    #[test]
    fn execute_round_trips_through_calibration() {
        let m = MotorModel::default().noise_free();
        let mut rng = stream(1, Stream::Motor);
        let a = m.execute(Motion::translate(5.0, -1.0), [0.0, 0.0], &mut rng);
        assert!((a.dv - 5.0).abs() < 1e-12 && (a.du + 1.0).abs() < 1e-12);
        let a = m.execute(Motion::translate(25.0, 0.0), [0.0, 0.0], &mut rng);
        assert!((a.dv - 20.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_examples() {
        let mut m = MotorModel::default();
        m.v_axis = AxisCalibration { alpha: 2.0, beta: 0.1, max_distance: 20.0 };
        assert!((convert_to_rotations(&m, 5.0, Axis::V) - 10.1).abs() < 1e-12);
        for d in [0.0, 0.3, 5.0, -7.5, 19.99] {
            let r = convert_to_rotations(&m, d, Axis::V);
            assert!((convert_to_distance(&m, r, Axis::V) - d).abs() < 1e-12);
        }
        let r = convert_to_rotations(&m, 25.0, Axis::V);
        assert!((convert_to_distance(&m, r, Axis::V) - 20.0).abs() < 1e-12);
        let r = convert_to_rotations(&m, 12.0, Axis::U);
        assert!((convert_to_distance(&m, r, Axis::U) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn encode_examples() {
        let e = EncoderModel { noise_sigma: 0.0, ..EncoderModel::default() };
        let mut rng = stream(1, Stream::Encoder);
        let m = e.encode([5.0, 0.0], &mut rng);
        assert!((m[0] - 5.0).abs() <= e.tick_cm && m[1] == 0.0);
        assert_eq!(e.encode([0.0, 0.0], &mut rng), [0.0, 0.0]);
        assert!((e.tick_cm - 0.0233).abs() < 1e-4);
    }

    #[test]
    fn encoder_noise_mostly_within_three_sigma() {
        let e = EncoderModel::default();
        let mut rng = stream(5, Stream::Encoder);
        let within = (0..1000)
            .filter(|_| (e.encode([5.0, 0.0], &mut rng)[0] - 5.0).abs() / 5.0 < 0.06 + e.tick_cm / 5.0)
            .count();
        assert!(within >= 990, "{within}");
        let a = e.encode([5.0, 1.0], &mut stream(5, Stream::Encoder));
        let b = e.encode([5.0, 1.0], &mut stream(5, Stream::Encoder));
        assert_eq!(a, b);
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_degrees(180.0), -180.0);
        assert_eq!(wrap_degrees(-180.0), -180.0);
        assert!((wrap_degrees(370.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn default_camera_is_valid() {
        assert!(CameraModel::default().validate().is_ok());
        let bad = CameraModel { zones: ZoneGeometry { target_du_min: 20.0, ..ZoneGeometry::default() }, ..CameraModel::default() };
        assert!(bad.validate().is_err());
    }
}
