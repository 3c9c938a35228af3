//! The follower's per-timestep loop: predict a velocity, drive it, correct the
//! pose with the camera, then feed the corrected velocity back to the
//! predictor.

use serde::Serialize;
use thiserror::Error;

use crate::dmd::{DmdError, DmdState, SnapshotPair};
use crate::formation::Side;
use crate::geometry::{
    potential_gradient, shoot_geodesic, ChartPoint, GeodesicState, GeometryError, SurfaceSpec,
    TangentVector,
};
use crate::linalg::Matrix;
use crate::rng::ScenarioRngs;
use crate::sensors::{
    wrap_degrees, BlockObservation, CameraModel, EncoderModel, Motion, MotorModel, RelativePose,
    Signature, Zone,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Dmd(#[from] DmdError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionMode {
    Dmd,
    NonDmd,
}

impl PredictionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictionMode::Dmd => "dmd",
            PredictionMode::NonDmd => "nondmd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    DataCollecting,
    Predicting,
}

/// Camera-side acceptance windows for the fine-tuning stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Target block column range in which the v-offset counts as fine-tunable.
    pub pan_window: (f64, f64),
    /// Allowed difference between Target side length and its set-point (px).
    pub side_px: f64,
    /// Allowed Target column offset from the image centre (px).
    pub v_position_px: f64,
    /// Allowed error of the side-length distance estimate (cm).
    pub u_distance_cm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { pan_window: (110.0, 160.0), side_px: 4.0, v_position_px: 5.0, u_distance_cm: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    pub mode: PredictionMode,
    pub side: Side,
    pub separation_d: f64,
    pub tolerances: Tolerances,
    /// Step for the coarse moves that bring the beacon into the Target area (cm).
    pub transit_step: f64,
    /// Step for fine-tuning moves (cm).
    pub fine_step: f64,
    pub rotation_threshold_deg: f64,
    /// Micro-move budget per timestep.
    pub max_iter: usize,
    /// Consecutive empty frames before the beacon counts as lost.
    pub lost_confirm_frames: usize,
    /// Frames averaged to confirm a foreshortening angle before rotating.
    pub angle_frames: usize,
    pub ridge: f64,
    /// Velocity samples gathered before the first operator prediction.
    pub collection_samples: usize,
    pub initial_velocity: [f64; 2],
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            mode: PredictionMode::Dmd,
            side: Side::Right,
            separation_d: 32.0,
            tolerances: Tolerances::default(),
            transit_step: 5.0,
            fine_step: 1.0,
            rotation_threshold_deg: 5.0,
            max_iter: 40,
            lost_confirm_frames: 3,
            angle_frames: 16,
            ridge: 1e-6,
            collection_samples: 4,
            initial_velocity: [5.0, 0.0],
        }
    }
}

/// A single corrective movement. Translations are signed body-frame distances
/// (cm), rotations are non-negative angles (deg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MicroMove {
    AlongV(f64),
    AlongU(f64),
    RotateCw(f64),
    RotateCcw(f64),
    Stop,
}

impl MicroMove {
    pub fn magnitude(&self) -> f64 {
        match *self {
            MicroMove::AlongV(d) | MicroMove::AlongU(d) => d.abs(),
            MicroMove::RotateCw(a) | MicroMove::RotateCcw(a) => a.abs(),
            MicroMove::Stop => 0.0,
        }
    }

    pub fn to_motion(&self) -> Motion {
        match *self {
            MicroMove::AlongV(d) => Motion::translate(d, 0.0),
            MicroMove::AlongU(d) => Motion::translate(0.0, d),
            MicroMove::RotateCw(a) => Motion { dv: 0.0, du: 0.0, drot: a },
            MicroMove::RotateCcw(a) => Motion { dv: 0.0, du: 0.0, drot: -a },
            MicroMove::Stop => Motion::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum VisualAction {
    Move(MicroMove),
    Done,
    LostSignal,
}

/// Chart pose of a robot: position plus heading angle (rad, counter-clockwise
/// from +q1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotPose {
    pub position: ChartPoint<f64>,
    pub heading: f64,
}

impl RobotPose {
    pub fn forward(&self) -> [f64; 2] {
        [self.heading.cos(), self.heading.sin()]
    }

    /// Unit chart vector along the body +u axis of a follower that sits on
    /// `side` of its beacon (so +u points back toward the beacon).
    pub fn toward_beacon(&self, side: Side) -> [f64; 2] {
        let f = self.forward();
        let left = [-f[1], f[0]];
        let s = -side.sign();
        [s * left[0], s * left[1]]
    }

    pub fn from_state(st: &GeodesicState<f64>) -> Self {
        Self { position: st.point, heading: st.velocity.c[1].atan2(st.velocity.c[0]) }
    }
}

/// Ground-truth pose of `follower` relative to its beacon, in the follower's
/// body frame (local Euclidean approximation in chart coordinates).
pub fn relative_pose(follower: &RobotPose, beacon: &RobotPose, side: Side) -> RelativePose {
    let d = [
        follower.position.q[0] - beacon.position.q[0],
        follower.position.q[1] - beacon.position.q[1],
    ];
    let f = follower.forward();
    let t = follower.toward_beacon(side);
    RelativePose::new(
        -(d[0] * t[0] + d[1] * t[1]),
        d[0] * f[0] + d[1] * f[1],
        (follower.heading - beacon.heading).to_degrees(),
    )
}

/// The physical world a follower acts on.
#[derive(Debug, Clone)]
pub struct Plant {
    pub surface: SurfaceSpec<f64>,
    pub motor: MotorModel,
    pub encoder: EncoderModel,
    pub integration_step: f64,
}

impl Plant {
    /// Moves the robot by an executed body-frame motion. Translations follow
    /// the surface geodesic in the commanded direction; the chart heading is
    /// kept. Returns whether the path left the domain.
    pub fn apply(&self, pose: &mut RobotPose, actual: Motion, side: Side) -> Result<bool, GeometryError> {
        pose.heading -= actual.drot.to_radians();
        let dist = actual.dv.hypot(actual.du);
        if dist == 0.0 {
            return Ok(false);
        }
        let f = pose.forward();
        let t = pose.toward_beacon(side);
        let dir = TangentVector::new(actual.dv * f[0] + actual.du * t[0], actual.dv * f[1] + actual.du * t[1]);
        let shot = shoot_geodesic(
            &self.surface,
            &GeodesicState::new(pose.position, dir),
            dist,
            self.integration_step,
        )?;
        pose.position = shot.state.point;
        Ok(shot.left_domain)
    }

    /// Commands a motion, moves the robot, and returns the executed motion and
    /// the encoder reading `[dv, du]`.
    pub fn drive(
        &self,
        pose: &mut RobotPose,
        commanded: Motion,
        side: Side,
        rngs: &mut ScenarioRngs,
    ) -> Result<(Motion, [f64; 2], bool), GeometryError> {
        let grad = potential_gradient(&self.surface, &pose.position);
        let actual = self.motor.execute(commanded, grad, &mut rngs.motor);
        let left = self.apply(pose, actual, side)?;
        let measured = self.encoder.encode([actual.dv, actual.du], &mut rngs.encoder);
        Ok((actual, measured, left))
    }
}

/// What one timestep did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimestepReport {
    pub predicted: [f64; 2],
    pub corrected: [f64; 2],
    /// Sum of |AlongV| and |AlongU| micro-move magnitudes issued this step.
    pub correction: [f64; 2],
    pub moves: Vec<MicroMove>,
    pub final_zone: Zone,
    pub lost: bool,
    pub max_iter_hit: bool,
    pub left_domain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub params: ControlParams,
    pub phase: Phase,
    pub dmd: Option<DmdState<f64>>,
    pub last_velocity: [f64; 2],
    pub velocity_history: Vec<[f64; 2]>,
    /// Correction distance accumulated in the current timestep (v, u).
    pub correction_accum: [f64; 2],
    /// Target side length (px) at the desired separation.
    pub side_setpoint_px: f64,
    pub pan_center_px: f64,
    /// Rotation estimates below this are indistinguishable from camera noise.
    pub rotation_floor_deg: f64,
    /// +1 rotates clockwise for a positive angle estimate; flipped on evidence.
    pub rotation_sign: f64,
    focal_px: f64,
    marker_side: f64,
}

impl ControllerState {
    pub fn new(params: ControlParams, camera: &CameraModel) -> Self {
        let side_setpoint_px = camera.ideal_side(params.separation_d);
        // Width/height ratio noise is ~√2·σ/side per frame, reduced by the
        // frame average. The check runs hundreds of times per scenario and a
        // false rotation near the floor cannot be detected afterwards, so the
        // floor sits at four of those.
        let frames = params.angle_frames.max(1) as f64;
        let rotation_floor_deg = if camera.side_noise_sigma > 0.0 {
            let ratio_sigma = std::f64::consts::SQRT_2 * camera.side_noise_sigma / side_setpoint_px / frames.sqrt();
            let r = (1.0 - 4.0 * ratio_sigma).clamp(-1.0, 1.0);
            r.acos().to_degrees()
        } else {
            0.0
        };
        Self {
            params,
            phase: Phase::DataCollecting,
            dmd: None,
            last_velocity: params.initial_velocity,
            velocity_history: Vec::new(),
            correction_accum: [0.0; 2],
            side_setpoint_px,
            pan_center_px: camera.center_px,
            rotation_floor_deg,
            rotation_sign: 1.0,
            focal_px: camera.focal_px,
            marker_side: camera.marker_side,
        }
    }

    pub fn rotation_threshold_deg(&self) -> f64 {
        self.params.rotation_threshold_deg.max(self.rotation_floor_deg)
    }

    /// Velocity to drive this timestep.
    pub fn predict_velocity(&self) -> Result<[f64; 2], ControlError> {
        match (self.phase, self.params.mode, &self.dmd) {
            (Phase::Predicting, PredictionMode::Dmd, Some(dmd)) => {
                let y = dmd.predict(&self.last_velocity)?;
                Ok([y[0], y[1]])
            }
            _ => Ok(self.last_velocity),
        }
    }

    /// Records a corrected velocity and advances the predictor.
    pub fn absorb_velocity(&mut self, corrected: [f64; 2]) -> Result<(), ControlError> {
        self.velocity_history.push(corrected);
        match self.phase {
            Phase::DataCollecting => {
                if self.velocity_history.len() >= self.params.collection_samples {
                    self.phase = Phase::Predicting;
                    if self.params.mode == PredictionMode::Dmd {
                        let h = &self.velocity_history;
                        let n = h.len();
                        let a = Matrix::from_columns(&h[..n - 1].iter().map(|x| x.to_vec()).collect::<Vec<_>>());
                        let b = Matrix::from_columns(&h[1..].iter().map(|x| x.to_vec()).collect::<Vec<_>>());
                        self.dmd = Some(DmdState::init_online_toward(&a, &b, self.params.ridge, &Matrix::identity(2))?);
                    }
                }
            }
            Phase::Predicting => {
                if let Some(dmd) = &self.dmd {
                    let pair = SnapshotPair::new(self.last_velocity.to_vec(), corrected.to_vec());
                    self.dmd = Some(dmd.update(&pair)?);
                }
            }
        }
        self.last_velocity = corrected;
        Ok(())
    }

    /// Estimated |relative angle| from Target foreshortening (deg).
    pub fn estimate_angle(&self, target: &BlockObservation) -> f64 {
        angle_from_ratio(target.width / target.height)
    }

    /// Foreshortening angle from the mean width/height ratio over
    /// `angle_frames` frames; `None` if the Target never showed.
    fn averaged_angle(
        &self,
        camera: &CameraModel,
        follower: &RobotPose,
        beacon: &RobotPose,
        rngs: &mut ScenarioRngs,
    ) -> Option<f64> {
        let pose = relative_pose(follower, beacon, self.params.side);
        let (mut sum, mut n) = (0.0, 0usize);
        for _ in 0..self.params.angle_frames.max(1) {
            let obs = camera.observe(&pose, &mut rngs.camera);
            if let Some(t) = obs.iter().find(|b| b.signature == Signature::Target) {
                sum += t.width / t.height;
                n += 1;
            }
        }
        (n > 0).then(|| angle_from_ratio(sum / n as f64))
    }

    /// Decides the next corrective move from one camera frame.
    pub fn visual_step(&self, obs: &[BlockObservation]) -> VisualAction {
        let p = &self.params;
        if obs.is_empty() {
            return VisualAction::LostSignal;
        }
        if obs.len() > 2 {
            return VisualAction::Move(MicroMove::AlongU(-p.transit_step));
        }
        let has = |s: Signature| obs.iter().any(|b| b.signature == s);
        if has(Signature::Front) {
            return VisualAction::Move(MicroMove::AlongV(-p.transit_step));
        }
        if has(Signature::Rear) {
            return VisualAction::Move(MicroMove::AlongV(p.transit_step));
        }
        let Some(target) = obs.iter().find(|b| b.signature == Signature::Target) else {
            return VisualAction::LostSignal;
        };
        let tol = &p.tolerances;
        // Along-track: a column right of centre means the follower is ahead.
        // Outside the pan window and inside it the step is the same; the
        // window only bounds where side-length readings are trusted.
        let offset = target.center_x - self.pan_center_px;
        let in_window = (tol.pan_window.0..=tol.pan_window.1).contains(&target.center_x);
        if !in_window || offset.abs() > tol.v_position_px {
            return VisualAction::Move(MicroMove::AlongV(-offset.signum() * p.fine_step));
        }
        // Lateral: the square's height is not foreshortened by rotation.
        let side_err = target.height - self.side_setpoint_px;
        let du_est = self.focal_px * self.marker_side / target.height;
        if side_err.abs() > tol.side_px || (du_est - p.separation_d).abs() > tol.u_distance_cm {
            let toward = if du_est > p.separation_d { 1.0 } else { -1.0 };
            return VisualAction::Move(MicroMove::AlongU(toward * p.fine_step));
        }
        let angle = self.estimate_angle(target);
        if angle > self.rotation_threshold_deg() {
            return VisualAction::Move(self.rotation(angle, 1.0));
        }
        VisualAction::Done
    }

    /// Rotation by `angle` in the current convention, or against it for `dir = -1`.
    fn rotation(&self, angle: f64, dir: f64) -> MicroMove {
        if self.rotation_sign * dir > 0.0 {
            MicroMove::RotateCw(angle)
        } else {
            MicroMove::RotateCcw(angle)
        }
    }

    fn read_camera(
        &self,
        camera: &CameraModel,
        follower: &RobotPose,
        beacon: &RobotPose,
        rngs: &mut ScenarioRngs,
    ) -> Vec<BlockObservation> {
        let pose = relative_pose(follower, beacon, self.params.side);
        for _ in 0..self.params.lost_confirm_frames.max(1) {
            let obs = camera.observe(&pose, &mut rngs.camera);
            if !obs.is_empty() {
                return obs;
            }
        }
        Vec::new()
    }

    /// One full timestep of the follower, after the beacon has finished its move.
    pub fn run_timestep(
        &mut self,
        plant: &Plant,
        camera: &CameraModel,
        follower: &mut RobotPose,
        beacon: &RobotPose,
        rngs: &mut ScenarioRngs,
    ) -> Result<TimestepReport, ControlError> {
        let side = self.params.side;
        self.correction_accum = [0.0; 2];
        let predicted = self.predict_velocity()?;
        let (_, m0, mut left_domain) =
            plant.drive(follower, Motion::translate(predicted[0], predicted[1]), side, rngs)?;
        let mut corrected = m0;

        let mut moves = Vec::new();
        let mut lost = false;
        let mut max_iter_hit = true;
        for _ in 0..self.params.max_iter {
            let obs = self.read_camera(camera, follower, beacon, rngs);
            let mut mv = match self.visual_step(&obs) {
                VisualAction::Done => {
                    max_iter_hit = false;
                    break;
                }
                VisualAction::LostSignal => {
                    lost = true;
                    max_iter_hit = false;
                    moves.push(MicroMove::Stop);
                    break;
                }
                VisualAction::Move(mv) => mv,
            };
            let mut before = None;
            if let MicroMove::RotateCw(_) | MicroMove::RotateCcw(_) = mv {
                // A single frame only nominates a rotation; the average decides.
                match self.averaged_angle(camera, follower, beacon, rngs) {
                    Some(a) if a > self.rotation_threshold_deg() => {
                        mv = self.rotation(a, 1.0);
                        before = Some(a);
                    }
                    _ => {
                        max_iter_hit = false;
                        break;
                    }
                }
            }
            match mv {
                MicroMove::AlongV(d) => self.correction_accum[0] += d.abs(),
                MicroMove::AlongU(d) => self.correction_accum[1] += d.abs(),
                _ => {}
            }
            let (_, m, left) = plant.drive(follower, mv.to_motion(), side, rngs)?;
            corrected[0] += m[0];
            corrected[1] += m[1];
            left_domain |= left;
            moves.push(mv);
            if let Some(before) = before {
                // Foreshortening has no sign: a rotation that made it worse
                // went the wrong way, so undo it and flip the convention.
                let after = self.averaged_angle(camera, follower, beacon, rngs);
                if after.is_some_and(|a| a > before) {
                    let undo = self.rotation(before, -1.0);
                    self.rotation_sign = -self.rotation_sign;
                    let (_, _, left) = plant.drive(follower, undo.to_motion(), side, rngs)?;
                    left_domain |= left;
                    moves.push(undo);
                }
            }
        }
        if max_iter_hit {
            log::warn!("visual loop hit max_iter = {}", self.params.max_iter);
        }

        self.absorb_velocity(corrected)?;
        let final_zone = camera.zone_of(&relative_pose(follower, beacon, side));
        Ok(TimestepReport {
            predicted,
            corrected,
            correction: self.correction_accum,
            moves,
            final_zone,
            lost,
            max_iter_hit,
            left_domain,
        })
    }
}

fn angle_from_ratio(r: f64) -> f64 {
    r.clamp(0.0, 1.0).acos().to_degrees()
}

/// Relative heading of two robots, clockwise positive, in `[-180, 180)`.
pub fn relative_heading_deg(follower: &RobotPose, beacon: &RobotPose) -> f64 {
    wrap_degrees((follower.heading - beacon.heading).to_degrees())
}
