//! Flat `key=value` scenario files.
//!
//! One assignment per line, keys use dotted section prefixes
//! (`camera.focal_px=266.7`), `#` starts a comment. Unknown keys and
//! unparsable values are errors carrying the key path and line number.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::control::PredictionMode;
use crate::formation::Side;
use crate::harness::{ScenarioConfig, SurfaceChoice, Track};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("config error at `{path}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), line: None, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: Option<usize>,
}

/// Parsed but not yet interpreted assignments, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pub entries: Vec<Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError {
                    path: line.to_string(),
                    line: Some(i + 1),
                    message: "expected key=value".into(),
                });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(ConfigError { path: String::new(), line: Some(i + 1), message: "empty key".into() });
            }
            entries.push(Entry { key: key.to_string(), value: v.trim().to_string(), line: Some(i + 1) });
        }
        Ok(Self { entries })
    }

    /// Appends an override; later entries win.
    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.push(Entry { key: key.to_string(), value: value.to_string(), line: None });
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }
}

fn parse<T: FromStr>(e: &Entry) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    e.value.parse::<T>().map_err(|err| ConfigError {
        path: e.key.clone(),
        line: e.line,
        message: format!("cannot parse `{}`: {err}", e.value),
    })
}

fn bad(e: &Entry, message: &str) -> ConfigError {
    ConfigError { path: e.key.clone(), line: e.line, message: message.to_string() }
}

impl FromStr for Track {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "one" | "1" => Ok(Track::One),
            "two" | "2" => Ok(Track::Two),
            "custom" => Ok(Track::Custom),
            _ => Err(format!("unknown track `{s}` (one|two|custom)")),
        }
    }
}

impl FromStr for PredictionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dmd" => Ok(PredictionMode::Dmd),
            "nondmd" | "non-dmd" => Ok(PredictionMode::NonDmd),
            _ => Err(format!("unknown mode `{s}` (dmd|nondmd)")),
        }
    }
}

impl FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            _ => Err(format!("unknown side `{s}` (left|right)")),
        }
    }
}

fn parse_bool(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => Err(bad(e, "expected on/off")),
    }
}

/// Resolves key-values into a scenario: the track's defaults first, then
/// every assignment in order, then the `noise` switch.
pub fn resolve(kv: &KeyValues) -> Result<ScenarioConfig, ConfigError> {
    let track = match kv.get("track") {
        Some(e) => parse::<Track>(e)?,
        None => Track::One,
    };
    let mut cfg = ScenarioConfig::for_track(track);
    let mut noise = true;
    for e in &kv.entries {
        apply(&mut cfg, e, &mut noise)?;
    }
    if !noise {
        cfg = cfg.noise_free();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply(cfg: &mut ScenarioConfig, e: &Entry, noise: &mut bool) -> Result<(), ConfigError> {
    let cam = &mut cfg.camera;
    let zone = &mut cam.zones;
    let motor = &mut cfg.motor;
    let ctl = &mut cfg.control;
    let tol = &mut ctl.tolerances;
    match e.key.as_str() {
        "track" => {} // consumed up front
        "mode" => cfg.mode = parse(e)?,
        "seed" => cfg.seed = parse(e)?,
        "steps" => cfg.steps = parse(e)?,
        "step_length" => cfg.step_length = parse(e)?,
        "integration_step" => cfg.integration_step = parse(e)?,
        "noise" => *noise = parse_bool(e)?,

        "surface.kind" => {
            cfg.surface.kind = match e.value.as_str() {
                "paraboloid" => SurfaceChoice::Paraboloid,
                "flat" => SurfaceChoice::Flat,
                _ => return Err(bad(e, "expected paraboloid|flat")),
            }
        }
        "surface.coeff_a" => cfg.surface.coeff_a = parse(e)?,
        "surface.base_c" => cfg.surface.base_c = parse(e)?,
        "surface.center_q1" => cfg.surface.center[0] = parse(e)?,
        "surface.center_q2" => cfg.surface.center[1] = parse(e)?,
        "surface.domain_min_q1" => cfg.surface.domain_min[0] = parse(e)?,
        "surface.domain_min_q2" => cfg.surface.domain_min[1] = parse(e)?,
        "surface.domain_max_q1" => cfg.surface.domain_max[0] = parse(e)?,
        "surface.domain_max_q2" => cfg.surface.domain_max[1] = parse(e)?,
        "surface.flat_height" => cfg.surface.flat_height = parse(e)?,

        "leader.start_q1" => cfg.leader_start[0] = parse(e)?,
        "leader.start_q2" => cfg.leader_start[1] = parse(e)?,
        "leader.heading_q1" => cfg.leader_heading[0] = parse(e)?,
        "leader.heading_q2" => cfg.leader_heading[1] = parse(e)?,
        "leader.step_noise_sigma" => cfg.leader_step_noise_sigma = parse(e)?,

        "formation.separation_d" => cfg.formation.separation_d = parse(e)?,
        "formation.side" => cfg.formation.side = parse(e)?,
        "formation.follower_count" => cfg.formation.follower_count = parse(e)?,

        "camera.focal_px" => cam.focal_px = parse(e)?,
        "camera.center_px" => cam.center_px = parse(e)?,
        "camera.marker_side" => cam.marker_side = parse(e)?,
        "camera.fov_half_deg" => cam.fov_half_deg = parse(e)?,
        "camera.marker_offset" => cam.marker_offset = parse(e)?,
        "camera.pixel_noise_sigma" => cam.pixel_noise_sigma = parse(e)?,
        "camera.side_noise_sigma" => cam.side_noise_sigma = parse(e)?,
        "camera.dropout_prob" => cam.dropout_prob = parse(e)?,
        "camera.zone.sensing_half" => zone.sensing_half = parse(e)?,
        "camera.zone.max_dtheta" => zone.max_dtheta = parse(e)?,
        "camera.zone.unattainable_du" => zone.unattainable_du = parse(e)?,
        "camera.zone.unattainable_dv" => zone.unattainable_dv = parse(e)?,
        "camera.zone.target_du_min" => zone.target_du_min = parse(e)?,
        "camera.zone.target_du_max" => zone.target_du_max = parse(e)?,
        "camera.zone.target_dv" => zone.target_dv = parse(e)?,
        "camera.zone.target_visible_dv" => zone.target_visible_dv = parse(e)?,

        "motor.v_alpha" => motor.v_axis.alpha = parse(e)?,
        "motor.v_beta" => motor.v_axis.beta = parse(e)?,
        "motor.v_max" => motor.v_axis.max_distance = parse(e)?,
        "motor.u_alpha" => motor.u_axis.alpha = parse(e)?,
        "motor.u_beta" => motor.u_axis.beta = parse(e)?,
        "motor.u_max" => motor.u_axis.max_distance = parse(e)?,
        "motor.actuation_noise_sigma" => motor.actuation_noise_sigma = parse(e)?,
        "motor.slip_gain" => motor.slip_gain = parse(e)?,
        "motor.rotation_noise_sigma" => motor.rotation_noise_sigma = parse(e)?,

        "encoder.noise_sigma" => cfg.encoder.noise_sigma = parse(e)?,
        "encoder.tick_cm" => cfg.encoder.tick_cm = parse(e)?,

        "control.transit_step" => ctl.transit_step = parse(e)?,
        "control.fine_step" => ctl.fine_step = parse(e)?,
        "control.rotation_threshold_deg" => ctl.rotation_threshold_deg = parse(e)?,
        "control.max_iter" => ctl.max_iter = parse(e)?,
        "control.lost_confirm_frames" => ctl.lost_confirm_frames = parse(e)?,
        "control.angle_frames" => ctl.angle_frames = parse(e)?,
        "control.ridge" => ctl.ridge = parse(e)?,
        "control.pan_window_min" => tol.pan_window.0 = parse(e)?,
        "control.pan_window_max" => tol.pan_window.1 = parse(e)?,
        "control.side_tolerance_px" => tol.side_px = parse(e)?,
        "control.v_tolerance_px" => tol.v_position_px = parse(e)?,
        "control.u_tolerance_cm" => tol.u_distance_cm = parse(e)?,

        "output.steps_csv" => cfg.output.steps_csv = e.value.clone(),
        "output.metrics_json" => cfg.output.metrics_json = e.value.clone(),
        _ => return Err(bad(e, "unknown key")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let text = "# scenario\ntrack = two\nseed=7   # trailing\n\ncamera.focal_px=266.7\nmode=nondmd\n";
        let mut kv = KeyValues::parse(text).unwrap();
        kv.set("seed", 11);
        let cfg = resolve(&kv).unwrap();
        assert_eq!(cfg.track, Track::Two);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.steps, 20);
        assert_eq!(cfg.leader_start, [141.2, 11.1]);
        assert_eq!(cfg.camera.focal_px, 266.7);
        assert_eq!(cfg.mode, PredictionMode::NonDmd);
    }

    #[test]
    fn explicit_keys_beat_track_defaults() {
        let kv = KeyValues::parse("steps=3\ntrack=two\n").unwrap();
        let cfg = resolve(&kv).unwrap();
        assert_eq!(cfg.steps, 3);
        assert_eq!(cfg.leader_start, [141.2, 11.1]);
    }

    #[test]
    fn errors_carry_key_and_line() {
        let err = resolve(&KeyValues::parse("seed=1\ncamera.focal=3\n").unwrap()).unwrap_err();
        assert_eq!(err.path, "camera.focal");
        assert_eq!(err.line, Some(2));
        let err = resolve(&KeyValues::parse("steps=many").unwrap()).unwrap_err();
        assert_eq!(err.path, "steps");
        assert!(err.to_string().contains("line 1"));
        let err = KeyValues::parse("just words").unwrap_err();
        assert_eq!(err.line, Some(1));
        let err = resolve(&KeyValues::parse("formation.side=up").unwrap()).unwrap_err();
        assert_eq!(err.path, "formation.side");
    }

    #[test]
    fn validation_errors_name_the_field() {
        let err = resolve(&KeyValues::parse("formation.separation_d=-2").unwrap()).unwrap_err();
        assert_eq!(err.path, "formation.separation_d");
        let err = resolve(&KeyValues::parse("camera.focal_px=0").unwrap()).unwrap_err();
        assert_eq!(err.path, "camera");
    }

    #[test]
    fn noise_switch_zeroes_every_source() {
        let cfg = resolve(&KeyValues::parse("noise=off").unwrap()).unwrap();
        assert_eq!(cfg.camera.pixel_noise_sigma, 0.0);
        assert_eq!(cfg.camera.dropout_prob, 0.0);
        assert_eq!(cfg.motor.actuation_noise_sigma, 0.0);
        assert_eq!(cfg.encoder.tick_cm, 0.0);
        assert_eq!(cfg.leader_step_noise_sigma, 0.0);
    }
}
