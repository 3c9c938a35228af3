//! Scenario configuration, the two experimental tracks, DMD vs non-DMD
//! comparison, and CSV/JSON emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::config::ConfigError;
use crate::control::{
    ControlError, ControlParams, ControllerState, Plant, PredictionMode, RobotPose,
};
use crate::formation::{
    build_leader, build_reference, formation_error, orthogonal_unit, FormationError, FormationSpec,
    LeaderTrajectory, ReferenceTrajectory,
};
use crate::geometry::{
    metric_at, normalize, shoot_geodesic, ChartPoint, Domain, GeodesicState, GeometryError,
    SurfaceSpec, TangentVector,
};
use crate::rng::ScenarioRngs;
use crate::sensors::{CameraModel, EncoderModel, MotorModel, Zone};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

impl HarnessError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    One,
    Two,
    Custom,
}

impl Track {
    pub fn as_str(self) -> &'static str {
        match self {
            Track::One => "one",
            Track::Two => "two",
            Track::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceChoice {
    Paraboloid,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceConfig {
    pub kind: SurfaceChoice,
    pub coeff_a: f64,
    pub base_c: f64,
    pub center: [f64; 2],
    pub domain_min: [f64; 2],
    pub domain_max: [f64; 2],
    pub flat_height: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            kind: SurfaceChoice::Paraboloid,
            coeff_a: 0.001,
            base_c: 5.0,
            center: [89.0, 89.0],
            domain_min: [0.0, 0.0],
            domain_max: [178.0, 178.0],
            flat_height: 5.0,
        }
    }
}

impl SurfaceConfig {
    pub fn build(&self) -> Result<SurfaceSpec<f64>, GeometryError> {
        let domain = Domain::new(self.domain_min, self.domain_max);
        match self.kind {
            SurfaceChoice::Paraboloid => SurfaceSpec::paraboloid(self.coeff_a, self.base_c, self.center, domain),
            SurfaceChoice::Flat => SurfaceSpec::flat(self.flat_height, domain),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub steps_csv: String,
    pub metrics_json: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self { steps_csv: "steps.csv".into(), metrics_json: "metrics.json".into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub surface: SurfaceConfig,
    pub track: Track,
    pub leader_start: [f64; 2],
    /// Chart direction of the leader's first step; normalized on use.
    pub leader_heading: [f64; 2],
    pub steps: usize,
    pub step_length: f64,
    /// Relative 1σ noise on each leader step length.
    pub leader_step_noise_sigma: f64,
    pub formation: FormationSpec<f64>,
    pub mode: PredictionMode,
    pub seed: u64,
    pub camera: CameraModel,
    pub motor: MotorModel,
    pub encoder: EncoderModel,
    /// Controller tuning; mode, side and separation are taken from the fields above.
    pub control: ControlParams,
    pub integration_step: f64,
    pub output: OutputPaths,
}

impl ScenarioConfig {
    /// Defaults of the two experimental tracks. Track one drives along +q2
    /// from the lower edge; track two runs diagonally toward (−1, +1).
    pub fn for_track(track: Track) -> Self {
        let (leader_start, leader_heading, steps) = match track {
            Track::One | Track::Custom => ([76.3, 15.8], [0.0, 1.0], 15),
            Track::Two => ([141.2, 11.1], [-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2], 20),
        };
        Self {
            surface: SurfaceConfig::default(),
            track,
            leader_start,
            leader_heading,
            steps,
            step_length: 5.0,
            leader_step_noise_sigma: 0.02,
            formation: FormationSpec::default(),
            mode: PredictionMode::Dmd,
            seed: 1,
            camera: CameraModel::default(),
            motor: MotorModel::default(),
            encoder: EncoderModel::default(),
            control: ControlParams::default(),
            integration_step: 0.01,
            output: OutputPaths::default(),
        }
    }

    /// Same scenario with every stochastic source (and encoder quantization) off.
    pub fn noise_free(mut self) -> Self {
        self.camera = self.camera.noise_free();
        self.motor = self.motor.noise_free();
        self.encoder = self.encoder.noise_free();
        self.leader_step_noise_sigma = 0.0;
        self
    }

    pub fn with_mode(mut self, mode: PredictionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn control_params(&self) -> ControlParams {
        ControlParams {
            mode: self.mode,
            side: self.formation.side,
            separation_d: self.formation.separation_d,
            initial_velocity: [self.step_length, 0.0],
            ..self.control
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |path: &str, msg: &str| ConfigError::new(path, msg);
        self.surface.build().map_err(|e| err("surface", &e.to_string()))?;
        if !(self.step_length > 0.0) {
            return Err(err("step_length", "must be positive"));
        }
        if self.steps == 0 {
            return Err(err("steps", "must be at least 1"));
        }
        if !(self.integration_step > 0.0) {
            return Err(err("integration_step", "must be positive"));
        }
        if !(self.leader_heading[0].hypot(self.leader_heading[1]) > 0.0) {
            return Err(err("leader.heading_q1", "heading must be a nonzero vector"));
        }
        if !(self.leader_step_noise_sigma >= 0.0) {
            return Err(err("leader.step_noise_sigma", "must be non-negative"));
        }
        if !(self.formation.separation_d > 0.0) {
            return Err(err("formation.separation_d", "must be positive"));
        }
        if self.formation.follower_count == 0 {
            return Err(err("formation.follower_count", "must be positive"));
        }
        self.camera.validate().map_err(|m| err("camera", &m))?;
        self.motor.validate().map_err(|m| err("motor", &m))?;
        self.encoder.validate().map_err(|m| err("encoder", &m))?;
        let c = &self.control;
        if c.max_iter == 0 || c.collection_samples < 2 || c.angle_frames == 0 {
            return Err(err("control", "max_iter >= 1, angle_frames >= 1 and collection_samples >= 2 required"));
        }
        if !(c.ridge >= 0.0) || !(c.fine_step > 0.0) || !(c.transit_step > 0.0) {
            return Err(err("control", "ridge >= 0 and positive step sizes required"));
        }
        if c.transit_step > self.motor.u_axis.max_distance || c.transit_step > self.motor.v_axis.max_distance {
            return Err(err("control.transit_step", "exceeds the calibrated motor range"));
        }
        Ok(())
    }
}

/// One record per timestep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub leader: [f64; 2],
    pub follower: [f64; 2],
    pub predicted: [f64; 2],
    pub corrected: [f64; 2],
    pub correction: [f64; 2],
    pub zone: Zone,
    pub lost: bool,
    pub max_iter_hit: bool,
    pub formation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub track: Track,
    pub mode: PredictionMode,
    pub seed: u64,
    pub steps: usize,
    pub total_correction_v: f64,
    pub total_correction_u: f64,
    pub total_correction: f64,
    /// Correction distance after the data-collection phase.
    pub post_collection_correction: f64,
    pub lost_steps: usize,
    pub max_iter_steps: usize,
    pub domain_exits: usize,
    pub mean_formation_error: f64,
    pub max_formation_error: f64,
    pub final_formation_error: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub logs: Vec<StepLog>,
    pub summary: ScenarioSummary,
    /// Leader states as actually driven (including step-length noise).
    pub leader: LeaderTrajectory<f64>,
    pub reference: ReferenceTrajectory<f64>,
}

fn leader_start_state(cfg: &ScenarioConfig, s: &SurfaceSpec<f64>) -> Result<GeodesicState<f64>, GeometryError> {
    let p = ChartPoint::new(cfg.leader_start[0], cfg.leader_start[1]);
    let v = TangentVector::new(cfg.leader_heading[0], cfg.leader_heading[1]);
    Ok(GeodesicState::new(p, normalize(s, &p, &v)?))
}

/// Runs one leader–follower scenario in lock-step: the leader finishes its
/// move, then the follower runs a full timestep.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, HarnessError> {
    cfg.validate()?;
    if cfg.formation.follower_count != 1 {
        return Err(ConfigError::new(
            "formation.follower_count",
            "simulation drives a single follower; chains are supported by `reference` only",
        )
        .into());
    }
    let surface = cfg.surface.build()?;
    let h = cfg.integration_step;
    let mut rngs = ScenarioRngs::new(cfg.seed);

    let mut leader_state = leader_start_state(cfg, &surface)?;
    let mut leader_states = vec![leader_state];
    let mut domain_exits = 0usize;

    // The follower starts on its reference point with the leader's heading.
    let g = metric_at(&surface, &leader_state.point);
    let dir = orthogonal_unit(&g, &leader_state.velocity, cfg.formation.side)?;
    let start = shoot_geodesic(&surface, &GeodesicState::new(leader_state.point, dir), cfg.formation.separation_d, h)?;
    domain_exits += usize::from(start.left_domain);
    let mut follower = RobotPose { position: start.state.point, heading: RobotPose::from_state(&leader_state).heading };

    let plant = Plant { surface: surface.clone(), motor: cfg.motor, encoder: cfg.encoder, integration_step: h };
    let mut controller = ControllerState::new(cfg.control_params(), &cfg.camera);

    let mut reports = Vec::with_capacity(cfg.steps);
    let mut follower_positions = Vec::with_capacity(cfg.steps + 1);
    follower_positions.push(follower.position);
    for _ in 0..cfg.steps {
        let z: f64 = StandardNormal.sample(&mut rngs.leader);
        let leg = cfg.step_length * (1.0 + cfg.leader_step_noise_sigma * z);
        let shot = shoot_geodesic(&surface, &leader_state, leg.max(0.0), h)?;
        domain_exits += usize::from(shot.left_domain);
        leader_state = shot.state;
        leader_states.push(leader_state);
        let beacon = RobotPose::from_state(&leader_state);

        let report = controller.run_timestep(&plant, &cfg.camera, &mut follower, &beacon, &mut rngs)?;
        domain_exits += usize::from(report.left_domain);
        follower_positions.push(follower.position);
        reports.push(report);
    }

    let leader = LeaderTrajectory { states: leader_states, step_length: cfg.step_length, domain_exits: 0 };
    let reference = build_reference(&surface, &leader, &cfg.formation, h)?;
    let errors = formation_error(&follower_positions, &reference, 1)?;

    let logs: Vec<StepLog> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let k = i + 1;
            StepLog {
                step: k,
                leader: leader.states[k].point.q,
                follower: follower_positions[k].q,
                predicted: r.predicted,
                corrected: r.corrected,
                correction: r.correction,
                zone: r.final_zone,
                lost: r.lost,
                max_iter_hit: r.max_iter_hit,
                formation_error: errors[k],
            }
        })
        .collect();

    let summary = summarize(cfg, &logs, domain_exits);
    Ok(ScenarioOutcome { logs, summary, leader, reference })
}

fn summarize(cfg: &ScenarioConfig, logs: &[StepLog], domain_exits: usize) -> ScenarioSummary {
    let total_v: f64 = logs.iter().map(|l| l.correction[0]).sum();
    let total_u: f64 = logs.iter().map(|l| l.correction[1]).sum();
    let collection = cfg.control.collection_samples;
    let post: f64 = logs.iter().filter(|l| l.step > collection).map(|l| l.correction[0] + l.correction[1]).sum();
    let n = logs.len().max(1) as f64;
    ScenarioSummary {
        track: cfg.track,
        mode: cfg.mode,
        seed: cfg.seed,
        steps: logs.len(),
        total_correction_v: total_v,
        total_correction_u: total_u,
        total_correction: total_v + total_u,
        post_collection_correction: post,
        lost_steps: logs.iter().filter(|l| l.lost).count(),
        max_iter_steps: logs.iter().filter(|l| l.max_iter_hit).count(),
        domain_exits,
        mean_formation_error: logs.iter().map(|l| l.formation_error).sum::<f64>() / n,
        max_formation_error: logs.iter().map(|l| l.formation_error).fold(0.0, f64::max),
        final_formation_error: logs.last().map_or(0.0, |l| l.formation_error),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub dmd_total: f64,
    pub nondmd_total: f64,
    /// `dmd_total / nondmd_total`; 1.0 when both are zero, absent when only
    /// the non-DMD total is zero.
    pub ratio: Option<f64>,
    pub dmd_lost_steps: usize,
    pub nondmd_lost_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub track: Track,
    pub seeds: Vec<SeedComparison>,
    /// Mean of the defined per-seed ratios (1.0 if none is defined).
    pub mean_ratio: f64,
    /// Ratio of summed totals over all seeds.
    pub pooled_ratio: Option<f64>,
}

fn ratio(dmd: f64, nondmd: f64) -> Option<f64> {
    if nondmd > 0.0 {
        Some(dmd / nondmd)
    } else if dmd == 0.0 {
        Some(1.0)
    } else {
        None
    }
}

/// Seeds `cfg.seed, cfg.seed + 1, …` used by [`compare_modes`].
pub fn default_seeds(cfg: &ScenarioConfig, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| cfg.seed.wrapping_add(i)).collect()
}

/// Runs both prediction modes on each seed. Both runs of a seed share the
/// per-component noise streams, so the comparison is paired.
pub fn compare_modes(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<ComparisonReport, HarnessError> {
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let dmd = run_scenario(&cfg.clone().with_seed(seed).with_mode(PredictionMode::Dmd))?;
        let non = run_scenario(&cfg.clone().with_seed(seed).with_mode(PredictionMode::NonDmd))?;
        rows.push(SeedComparison {
            seed,
            dmd_total: dmd.summary.total_correction,
            nondmd_total: non.summary.total_correction,
            ratio: ratio(dmd.summary.total_correction, non.summary.total_correction),
            dmd_lost_steps: dmd.summary.lost_steps,
            nondmd_lost_steps: non.summary.lost_steps,
        });
    }
    let defined: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let mean_ratio = if defined.is_empty() { 1.0 } else { defined.iter().sum::<f64>() / defined.len() as f64 };
    let pooled_ratio = ratio(rows.iter().map(|r| r.dmd_total).sum(), rows.iter().map(|r| r.nondmd_total).sum());
    Ok(ComparisonReport { track: cfg.track, seeds: rows, mean_ratio, pooled_ratio })
}

pub const STEPS_CSV_HEADER: &str = "step,leader_q1,leader_q2,follower_q1,follower_q2,pred_v,pred_u,corr_v,corr_u,corrdist_v,corrdist_u,zone,lost,formation_error";

pub const REFERENCE_CSV_HEADER: &str = "step,leader_q1,leader_q2,follower_index,ref_q1,ref_q2";

pub fn steps_csv(logs: &[StepLog]) -> String {
    let mut out = String::with_capacity(64 * (logs.len() + 1));
    out.push_str(STEPS_CSV_HEADER);
    out.push('\n');
    for l in logs {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{:.6}",
            l.step,
            l.leader[0],
            l.leader[1],
            l.follower[0],
            l.follower[1],
            l.predicted[0],
            l.predicted[1],
            l.corrected[0],
            l.corrected[1],
            l.correction[0],
            l.correction[1],
            l.zone.as_str(),
            u8::from(l.lost),
            l.formation_error,
        );
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn emit_steps_csv(logs: &[StepLog], path: &Path) -> Result<(), HarnessError> {
    write_file(path, &steps_csv(logs))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn emit_metrics_json(summary: &ScenarioSummary, path: &Path) -> Result<(), HarnessError> {
    write_file(path, &to_json(summary))
}

/// Noise-free leader and the reference positions of every chain follower.
pub fn reference_csv(cfg: &ScenarioConfig) -> Result<String, HarnessError> {
    cfg.validate()?;
    let surface = cfg.surface.build()?;
    let start = ChartPoint::new(cfg.leader_start[0], cfg.leader_start[1]);
    let heading = TangentVector::new(cfg.leader_heading[0], cfg.leader_heading[1]);
    let leader = build_leader(&surface, start, heading, cfg.steps, cfg.step_length, cfg.integration_step)?;
    let reference = build_reference(&surface, &leader, &cfg.formation, cfg.integration_step)?;
    let mut out = String::new();
    out.push_str(REFERENCE_CSV_HEADER);
    out.push('\n');
    for (k, st) in leader.states.iter().enumerate() {
        for j in 1..=cfg.formation.follower_count {
            let p = reference.follower(j)?[k];
            let _ = writeln!(
                out,
                "{k},{:.6},{:.6},{j},{:.6},{:.6}",
                st.point.q[0], st.point.q[1], p.q[0], p.q[1]
            );
        }
    }
    Ok(out)
}

pub fn generate_reference_csv(cfg: &ScenarioConfig, path: &Path) -> Result<(), HarnessError> {
    write_file(path, &reference_csv(cfg)?)
}

/// Noise-free camera calibration tables: Target column against along-track
/// offset at three lateral gaps, and Target side length against lateral gap.
pub fn camera_table(camera: &CameraModel) -> String {
    let mut out = String::from("table,du_cm,dv_cm,value_px\n");
    for du in [29.0, 32.0, 35.0] {
        for dv in -10..=10 {
            let pose = crate::sensors::RelativePose::new(du, f64::from(dv), 0.0);
            let _ = writeln!(out, "pan,{du:.1},{:.1},{:.6}", f64::from(dv), camera.ideal_center_x(&pose, 0.0));
        }
    }
    for du in 24..=45 {
        let _ = writeln!(out, "side,{:.1},0.0,{:.6}", f64::from(du), camera.ideal_side(f64::from(du)));
    }
    out
}

/// Runs a scenario and writes its step CSV and metrics JSON under `out_dir`.
pub fn simulate_to_dir(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioOutcome, HarnessError> {
    let outcome = run_scenario(cfg)?;
    emit_steps_csv(&outcome.logs, &out_dir.join(&cfg.output.steps_csv))?;
    emit_metrics_json(&outcome.summary, &out_dir.join(&cfg.output.metrics_json))?;
    Ok(outcome)
}
