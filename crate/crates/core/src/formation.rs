//! Leader geodesics and the follower reference trajectories derived from them.
//!
//! The leader drives a geodesic at constant speed. At every sampled leader
//! state a second geodesic is launched g-orthogonally to the leader heading;
//! follower `j` of a chain belongs at proper distance `j · d` along it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    inner, metric_at, normalize, shoot_geodesic, ChartPoint, GeodesicState, GeometryError,
    MetricAt, SurfaceSpec, TangentVector,
};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormationError {
    #[error("heading has zero g-speed")]
    ZeroHeading,
    #[error("length mismatch: {actual} positions vs {reference} reference points")]
    LengthMismatch { actual: usize, reference: usize },
    #[error("follower index {index} outside 1..={count}")]
    NoSuchFollower { index: usize, count: usize },
    #[error("invalid formation: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which side of the leader heading the chain extends to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 for left, −1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormationSpec<T> {
    /// Proper separation between chain neighbours (cm).
    pub separation_d: T,
    pub side: Side,
    pub follower_count: usize,
}

impl<T: Scalar> FormationSpec<T> {
    pub fn new(separation_d: T, side: Side, follower_count: usize) -> Result<Self, FormationError> {
        // d = 0 is accepted: the reference then collapses onto the leader.
        if !(separation_d >= T::zero()) || !separation_d.is_finite() {
            return Err(FormationError::Invalid(format!(
                "separation_d must be finite and non-negative, got {separation_d}"
            )));
        }
        if follower_count == 0 {
            return Err(FormationError::Invalid("follower_count must be positive".into()));
        }
        Ok(Self { separation_d, side, follower_count })
    }
}

impl<T: Scalar> Default for FormationSpec<T> {
    fn default() -> Self {
        Self { separation_d: T::lit(32.0), side: Side::Right, follower_count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderTrajectory<T> {
    pub states: Vec<GeodesicState<T>>,
    pub step_length: T,
    /// Number of legs that left the surface domain.
    pub domain_exits: usize,
}

impl<T: Scalar> LeaderTrajectory<T> {
    pub fn points(&self) -> Vec<ChartPoint<T>> {
        self.states.iter().map(|s| s.point).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory<T> {
    /// `points[j - 1][k]` is the reference of follower `j` at timestep `k`.
    pub points: Vec<Vec<ChartPoint<T>>>,
    pub domain_exits: usize,
}

impl<T: Scalar> ReferenceTrajectory<T> {
    pub fn follower(&self, j: usize) -> Result<&[ChartPoint<T>], FormationError> {
        if j == 0 || j > self.points.len() {
            return Err(FormationError::NoSuchFollower { index: j, count: self.points.len() });
        }
        Ok(&self.points[j - 1])
    }
}

/// Unit vector g-orthogonal to `heading`, on the requested side.
///
/// Left means the chart cross product `heading × v` is positive.
pub fn orthogonal_unit<T: Scalar>(
    g: &MetricAt<T>,
    heading: &TangentVector<T>,
    side: Side,
) -> Result<TangentVector<T>, FormationError> {
    if !(inner(g, heading, heading) >= T::lit(1e-12)) {
        return Err(FormationError::ZeroHeading);
    }
    // Covector w = g·h; any v with w·v = 0 is g-orthogonal to h.
    let w0 = g.g[0][0] * heading.c[0] + g.g[0][1] * heading.c[1];
    let w1 = g.g[1][0] * heading.c[0] + g.g[1][1] * heading.c[1];
    let v = TangentVector::new(-w1, w0);
    let n = inner(g, &v, &v).sqrt();
    let mut v = v.scale(T::one() / n);
    let cross = heading.c[0] * v.c[1] - heading.c[1] * v.c[0];
    let want_positive = side == Side::Left;
    if (cross > T::zero()) != want_positive {
        v = v.scale(-T::one());
    }
    Ok(v)
}

/// Samples the ideal leader geodesic once per timestep.
pub fn build_leader<T: Scalar>(
    s: &SurfaceSpec<T>,
    start: ChartPoint<T>,
    heading: TangentVector<T>,
    steps: usize,
    step_length: T,
    h: T,
) -> Result<LeaderTrajectory<T>, FormationError> {
    if steps == 0 {
        return Err(FormationError::Invalid("leader needs at least one step".into()));
    }
    let velocity = normalize(s, &start, &heading).map_err(|_| FormationError::ZeroHeading)?;
    let mut state = GeodesicState::new(start, velocity);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(state);
    let mut domain_exits = 0;
    for _ in 0..steps {
        let shot = shoot_geodesic(s, &state, step_length, h)?;
        domain_exits += usize::from(shot.left_domain);
        state = shot.state;
        states.push(state);
    }
    Ok(LeaderTrajectory { states, step_length, domain_exits })
}

/// Reference positions for every follower of the chain at every leader sample.
pub fn build_reference<T: Scalar>(
    s: &SurfaceSpec<T>,
    lt: &LeaderTrajectory<T>,
    spec: &FormationSpec<T>,
    h: T,
) -> Result<ReferenceTrajectory<T>, FormationError> {
    if lt.states.is_empty() {
        return Err(FormationError::Invalid("empty leader trajectory".into()));
    }
    let mut points = vec![Vec::with_capacity(lt.states.len()); spec.follower_count];
    let mut domain_exits = 0;
    for st in &lt.states {
        let g = metric_at(s, &st.point);
        let dir = orthogonal_unit(&g, &st.velocity, spec.side)?;
        let launch = GeodesicState::new(st.point, dir);
        // Followers share one orthogonal geodesic; continue it link by link.
        let mut cursor = launch;
        for row in points.iter_mut() {
            let shot = shoot_geodesic(s, &cursor, spec.separation_d, h)?;
            domain_exits += usize::from(shot.left_domain);
            cursor = shot.state;
            row.push(cursor.point);
        }
    }
    Ok(ReferenceTrajectory { points, domain_exits })
}

/// Per-timestep chart distance between a follower's positions and its reference.
pub fn formation_error<T: Scalar>(
    actual: &[ChartPoint<T>],
    reference: &ReferenceTrajectory<T>,
    follower: usize,
) -> Result<Vec<T>, FormationError> {
    let refs = reference.follower(follower)?;
    if refs.len() != actual.len() {
        return Err(FormationError::LengthMismatch { actual: actual.len(), reference: refs.len() });
    }
    Ok(actual.iter().zip(refs).map(|(a, r)| a.distance(r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use approx::assert_abs_diff_eq;

    const H: f64 = 0.01;

    fn flat() -> SurfaceSpec<f64> {
        SurfaceSpec::flat(0.0, Domain::new([-100.0, -100.0], [200.0, 200.0])).unwrap()
    }

    #[test]
    fn orthogonal_unit_examples() {
        let id = MetricAt::identity();
        let v = orthogonal_unit(&id, &TangentVector::new(1.0, 0.0), Side::Left).unwrap();
        assert_abs_diff_eq!(v.c[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.c[1], 1.0, epsilon = 1e-15);

        let g = MetricAt { g: [[1.01, 0.0], [0.0, 1.0]] };
        let h = TangentVector::new(0.0, 1.0);
        let v = orthogonal_unit(&g, &h, Side::Left).unwrap();
        assert_abs_diff_eq!(v.c[0], -1.0 / 1.01f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(v.c[0], -0.995037, epsilon = 1e-6);
        assert!(inner(&g, &v, &h).abs() < 1e-12);

        let r = orthogonal_unit(&g, &h, Side::Right).unwrap();
        assert_abs_diff_eq!(r.c[0], -v.c[0], epsilon = 1e-15);
        assert_abs_diff_eq!(r.c[1], -v.c[1], epsilon = 1e-15);
    }

    #[test]
    fn zero_heading_rejected() {
        let id = MetricAt::<f64>::identity();
        assert_eq!(
            orthogonal_unit(&id, &TangentVector::zero(), Side::Left),
            Err(FormationError::ZeroHeading)
        );
    }

    #[test]
    fn flat_leader_is_a_line() {
        let lt = build_leader(&flat(), ChartPoint::new(0.0, 0.0), TangentVector::new(0.0, 1.0), 15, 5.0, H)
            .unwrap();
        assert_eq!(lt.states.len(), 16);
        for (k, st) in lt.states.iter().enumerate() {
            assert_abs_diff_eq!(st.point.q[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(st.point.q[1], 5.0 * k as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn flat_reference_is_parallel_offset() {
        let s = flat();
        let lt = build_leader(&s, ChartPoint::new(0.0, 0.0), TangentVector::new(0.0, 1.0), 10, 5.0, H)
            .unwrap();
        let spec = FormationSpec::new(32.0, Side::Left, 1).unwrap();
        let r = build_reference(&s, &lt, &spec, H).unwrap();
        for (l, p) in lt.states.iter().zip(r.follower(1).unwrap()) {
            assert_abs_diff_eq!(p.q[0], l.point.q[0] - 32.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.q[1], l.point.q[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn chain_followers_are_spaced_along_one_geodesic() {
        let s = flat();
        let lt = build_leader(&s, ChartPoint::new(0.0, 0.0), TangentVector::new(1.0, 0.0), 2, 5.0, H)
            .unwrap();
        let spec = FormationSpec::new(10.0, Side::Right, 3).unwrap();
        let r = build_reference(&s, &lt, &spec, H).unwrap();
        for j in 1..=3 {
            let p = r.follower(j).unwrap()[1];
            assert_abs_diff_eq!(p.q[0], 5.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.q[1], -10.0 * j as f64, epsilon = 1e-9);
        }
        assert!(r.follower(4).is_err());
    }

    #[test]
    fn zero_separation_collapses_onto_leader() {
        let s = SurfaceSpec::default_paraboloid();
        let lt = build_leader(&s, ChartPoint::new(76.3, 15.8), TangentVector::new(0.0, 1.0), 5, 5.0, H)
            .unwrap();
        let spec = FormationSpec::new(0.0, Side::Right, 1).unwrap();
        let r = build_reference(&s, &lt, &spec, H).unwrap();
        assert_eq!(r.follower(1).unwrap(), lt.points().as_slice());
    }

    #[test]
    fn formation_error_examples() {
        let s = flat();
        let lt = build_leader(&s, ChartPoint::new(0.0, 0.0), TangentVector::new(0.0, 1.0), 3, 5.0, H)
            .unwrap();
        let spec = FormationSpec::new(32.0, Side::Left, 1).unwrap();
        let r = build_reference(&s, &lt, &spec, H).unwrap();
        let same = r.follower(1).unwrap().to_vec();
        assert!(formation_error(&same, &r, 1).unwrap().iter().all(|e| *e == 0.0));
        let shifted: Vec<_> = same.iter().map(|p| ChartPoint::new(p.q[0] + 1.0, p.q[1])).collect();
        for e in formation_error(&shifted, &r, 1).unwrap() {
            assert_abs_diff_eq!(e, 1.0, epsilon = 1e-12);
        }
        assert_eq!(
            formation_error(&same[..2], &r, 1),
            Err(FormationError::LengthMismatch { actual: 2, reference: 4 })
        );
    }

    #[test]
    fn invalid_specs() {
        assert!(FormationSpec::new(-1.0, Side::Left, 1).is_err());
        assert!(FormationSpec::new(32.0, Side::Left, 0).is_err());
        let s = flat();
        assert!(build_leader(&s, ChartPoint::new(0.0, 0.0), TangentVector::new(0.0, 1.0), 0, 5.0, H).is_err());
        assert_eq!(
            build_leader(&s, ChartPoint::new(0.0, 0.0), TangentVector::zero(), 3, 5.0, H),
            Err(FormationError::ZeroHeading)
        );
    }
}
