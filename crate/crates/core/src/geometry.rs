//! Differential geometry of a surface given as the graph of a scalar potential
//! `F(q1, q2)` over a rectangular chart domain.
//!
//! All chart quantities are in centimetres. The induced metric of a graph is
//! `g = I + ∇F ∇Fᵀ`, and its connection coefficients have the closed form
//! `Γᵏᵢⱼ = ∂ₖF ∂ᵢ∂ⱼF / (1 + |∇F|²)`. Geodesics are integrated with classical
//! fixed-step RK4 on the first-order system `(q, q̇)`.

use std::fmt;
use std::sync::Arc;

use log::warn;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
    #[error("metric is singular (det = {det:e})")]
    SingularMetric { det: f64 },
    #[error("cannot shoot a geodesic from a zero velocity")]
    ZeroVelocity,
    #[error("invalid integration step {0}")]
    InvalidStep(f64),
    #[error("negative arc length {0}")]
    NegativeArcLength(f64),
}

/// A point `q = (q1, q2)` in chart coordinates (cm).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChartPoint<T> {
    pub q: [T; 2],
}

impl<T: Scalar> ChartPoint<T> {
    pub fn new(q1: T, q2: T) -> Self {
        Self { q: [q1, q2] }
    }

    pub fn is_finite(&self) -> bool {
        self.q[0].is_finite() && self.q[1].is_finite()
    }

    /// Chart-Euclidean distance.
    pub fn distance(&self, other: &Self) -> T {
        (self.q[0] - other.q[0]).hypot(self.q[1] - other.q[1])
    }

    pub fn offset(&self, v: &TangentVector<T>, scale: T) -> Self {
        Self::new(self.q[0] + scale * v.c[0], self.q[1] + scale * v.c[1])
    }
}

/// Components of a tangent vector in the coordinate basis `∂/∂q1, ∂/∂q2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TangentVector<T> {
    pub c: [T; 2],
}

impl<T: Scalar> TangentVector<T> {
    pub fn new(c1: T, c2: T) -> Self {
        Self { c: [c1, c2] }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(self.c[0] * k, self.c[1] * k)
    }

    pub fn is_finite(&self) -> bool {
        self.c[0].is_finite() && self.c[1].is_finite()
    }

    /// Chart-Euclidean norm (not the metric norm).
    pub fn chart_norm(&self) -> T {
        self.c[0].hypot(self.c[1])
    }
}

/// Induced metric `g_ij` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricAt<T> {
    pub g: [[T; 2]; 2],
}

impl<T: Scalar> MetricAt<T> {
    pub fn identity() -> Self {
        Self { g: [[T::one(), T::zero()], [T::zero(), T::one()]] }
    }

    pub fn det(&self) -> T {
        self.g[0][0] * self.g[1][1] - self.g[0][1] * self.g[1][0]
    }

    /// Explicit 2×2 inverse.
    pub fn inverse(&self) -> Result<[[T; 2]; 2], GeometryError> {
        let det = self.det();
        if det <= T::lit(1e-12) {
            return Err(GeometryError::SingularMetric { det: det.to_f64_lossy() });
        }
        let g = &self.g;
        Ok([[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]])
    }

    /// Eigenvalues of the symmetric matrix, ascending.
    pub fn eigenvalues(&self) -> [T; 2] {
        let half_tr = (self.g[0][0] + self.g[1][1]) / T::lit(2.0);
        let half_diff = (self.g[0][0] - self.g[1][1]) / T::lit(2.0);
        let r = half_diff.hypot(self.g[0][1]);
        [half_tr - r, half_tr + r]
    }
}

/// Christoffel symbols `gamma[k][i][j] = Γᵏᵢⱼ` (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChristoffelAt<T> {
    pub gamma: [[[T; 2]; 2]; 2],
}

impl<T: Scalar> ChristoffelAt<T> {
    pub fn zero() -> Self {
        Self { gamma: [[[T::zero(); 2]; 2]; 2] }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut m = T::zero();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    m = m.max((self.gamma[k][i][j] - other.gamma[k][i][j]).abs());
                }
            }
        }
        m
    }

    /// `Γᵏᵢⱼ vⁱ vʲ` for each k.
    pub fn contract(&self, v: &TangentVector<T>) -> [T; 2] {
        let mut out = [T::zero(); 2];
        for (k, o) in out.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    *o += self.gamma[k][i][j] * v.c[i] * v.c[j];
                }
            }
        }
        out
    }
}

/// A point on the surface together with a velocity; the state of the geodesic ODE.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeodesicState<T> {
    pub point: ChartPoint<T>,
    pub velocity: TangentVector<T>,
}

impl<T: Scalar> GeodesicState<T> {
    pub fn new(point: ChartPoint<T>, velocity: TangentVector<T>) -> Self {
        Self { point, velocity }
    }

    pub fn is_finite(&self) -> bool {
        self.point.is_finite() && self.velocity.is_finite()
    }
}

/// Axis-aligned chart rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain<T> {
    pub min: [T; 2],
    pub max: [T; 2],
}

impl<T: Scalar> Domain<T> {
    pub fn new(min: [T; 2], max: [T; 2]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &ChartPoint<T>) -> bool {
        (0..2).all(|i| p.q[i] >= self.min[i] && p.q[i] <= self.max[i])
    }

    pub fn area(&self) -> T {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

/// User-supplied potential `F(q1, q2)` in cm.
#[derive(Clone)]
pub struct CustomField<T>(pub Arc<dyn Fn(T, T) -> T + Send + Sync>);

impl<T> fmt::Debug for CustomField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomField(..)")
    }
}

#[derive(Debug, Clone)]
pub enum SurfaceKind<T> {
    /// `F(q) = base_c + coeff_a · |q − center|²`.
    Paraboloid { coeff_a: T, base_c: T, center: [T; 2] },
    /// Arbitrary C² field; derivatives by central differences.
    Custom(CustomField<T>),
}

#[derive(Debug, Clone)]
pub struct SurfaceSpec<T> {
    pub kind: SurfaceKind<T>,
    pub domain: Domain<T>,
}

impl<T: Scalar> SurfaceSpec<T> {
    pub fn paraboloid(
        coeff_a: T,
        base_c: T,
        center: [T; 2],
        domain: Domain<T>,
    ) -> Result<Self, GeometryError> {
        if !(coeff_a >= T::zero()) || !coeff_a.is_finite() {
            return Err(GeometryError::InvalidSurface(format!(
                "coeff_a must be finite and >= 0, got {coeff_a}"
            )));
        }
        if !base_c.is_finite() || !center.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::InvalidSurface("non-finite paraboloid parameter".into()));
        }
        check_domain(&domain)?;
        Ok(Self { kind: SurfaceKind::Paraboloid { coeff_a, base_c, center }, domain })
    }

    pub fn custom(
        field: impl Fn(T, T) -> T + Send + Sync + 'static,
        domain: Domain<T>,
    ) -> Result<Self, GeometryError> {
        check_domain(&domain)?;
        Ok(Self { kind: SurfaceKind::Custom(CustomField(Arc::new(field))), domain })
    }

    /// Constant potential: the Euclidean plane.
    pub fn flat(height: T, domain: Domain<T>) -> Result<Self, GeometryError> {
        Self::custom(move |_, _| height, domain)
    }

    /// The experiment's foam potential: 178 cm square, 5 cm at the centre,
    /// 20.842 cm at the corners.
    pub fn default_paraboloid() -> Self {
        Self::paraboloid(
            T::lit(0.001),
            T::lit(5.0),
            [T::lit(89.0), T::lit(89.0)],
            Domain::new([T::zero(), T::zero()], [T::lit(178.0), T::lit(178.0)]),
        )
        .expect("default surface is valid")
    }

    pub fn contains(&self, p: &ChartPoint<T>) -> bool {
        self.domain.contains(p)
    }
}

fn check_domain<T: Scalar>(d: &Domain<T>) -> Result<(), GeometryError> {
    let ok = (0..2).all(|i| d.min[i].is_finite() && d.max[i].is_finite() && d.max[i] > d.min[i]);
    if ok {
        Ok(())
    } else {
        Err(GeometryError::InvalidSurface("domain must have positive area".into()))
    }
}

pub fn potential_value<T: Scalar>(s: &SurfaceSpec<T>, p: &ChartPoint<T>) -> T {
    match &s.kind {
        SurfaceKind::Paraboloid { coeff_a, base_c, center } => {
            let d0 = p.q[0] - center[0];
            let d1 = p.q[1] - center[1];
            *base_c + *coeff_a * (d0 * d0 + d1 * d1)
        }
        SurfaceKind::Custom(f) => (f.0)(p.q[0], p.q[1]),
    }
}

pub fn potential_gradient<T: Scalar>(s: &SurfaceSpec<T>, p: &ChartPoint<T>) -> [T; 2] {
    match &s.kind {
        SurfaceKind::Paraboloid { coeff_a, center, .. } => {
            let two_a = T::lit(2.0) * *coeff_a;
            [two_a * (p.q[0] - center[0]), two_a * (p.q[1] - center[1])]
        }
        SurfaceKind::Custom(f) => {
            let h = T::lit(T::FIELD_FD_STEP);
            let two_h = h + h;
            let (x, y) = (p.q[0], p.q[1]);
            [
                ((f.0)(x + h, y) - (f.0)(x - h, y)) / two_h,
                ((f.0)(x, y + h) - (f.0)(x, y - h)) / two_h,
            ]
        }
    }
}

pub fn potential_hessian<T: Scalar>(s: &SurfaceSpec<T>, p: &ChartPoint<T>) -> [[T; 2]; 2] {
    match &s.kind {
        SurfaceKind::Paraboloid { coeff_a, .. } => {
            let two_a = T::lit(2.0) * *coeff_a;
            [[two_a, T::zero()], [T::zero(), two_a]]
        }
        SurfaceKind::Custom(f) => {
            let h = T::lit(T::FIELD_FD_STEP);
            let f = &f.0;
            let (x, y) = (p.q[0], p.q[1]);
            let c = f(x, y);
            let two = T::lit(2.0);
            let fxx = (f(x + h, y) - two * c + f(x - h, y)) / (h * h);
            let fyy = (f(x, y + h) - two * c + f(x, y - h)) / (h * h);
            let fxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h))
                / (T::lit(4.0) * h * h);
            [[fxx, fxy], [fxy, fyy]]
        }
    }
}

/// `g = I + ∇F ∇Fᵀ`.
pub fn metric_at<T: Scalar>(s: &SurfaceSpec<T>, p: &ChartPoint<T>) -> MetricAt<T> {
    let df = potential_gradient(s, p);
    let mut g = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] = df[i] * df[j];
        }
        g[i][i] += T::one();
    }
    MetricAt { g }
}

/// Closed-form connection coefficients of a graph surface.
pub fn christoffel_at<T: Scalar>(s: &SurfaceSpec<T>, p: &ChartPoint<T>) -> ChristoffelAt<T> {
    let df = potential_gradient(s, p);
    let hess = potential_hessian(s, p);
    let denom = T::one() + df[0] * df[0] + df[1] * df[1];
    let mut out = ChristoffelAt::zero();
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                out.gamma[k][i][j] = df[k] * hess[i][j] / denom;
            }
        }
    }
    out
}

/// Connection coefficients from the general Levi-Civita formula, with the metric
/// derivatives taken by central differences of [`metric_at`] (step `h`).
///
/// Used as an independent check on [`christoffel_at`].
pub fn christoffel_fd<T: Scalar>(
    s: &SurfaceSpec<T>,
    p: &ChartPoint<T>,
    h: T,
) -> Result<ChristoffelAt<T>, GeometryError> {
    if !(h > T::zero()) {
        return Err(GeometryError::InvalidStep(h.to_f64_lossy()));
    }
    let ginv = metric_at(s, p).inverse()?;
    // dg[c][a][b] = ∂_c g_ab
    let mut dg = [[[T::zero(); 2]; 2]; 2];
    for (c, slot) in dg.iter_mut().enumerate() {
        let mut plus = *p;
        let mut minus = *p;
        plus.q[c] += h;
        minus.q[c] -= h;
        let gp = metric_at(s, &plus).g;
        let gm = metric_at(s, &minus).g;
        for a in 0..2 {
            for b in 0..2 {
                slot[a][b] = (gp[a][b] - gm[a][b]) / (h + h);
            }
        }
    }
    let half = T::lit(0.5);
    let mut out = ChristoffelAt::zero();
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let mut acc = T::zero();
                for d in 0..2 {
                    acc += ginv[a][d] * (dg[c][d][b] + dg[b][d][c] - dg[d][b][c]);
                }
                out.gamma[a][b][c] = half * acc;
            }
        }
    }
    Ok(out)
}

/// `u · g · v`.
pub fn inner<T: Scalar>(g: &MetricAt<T>, u: &TangentVector<T>, v: &TangentVector<T>) -> T {
    let mut acc = T::zero();
    for i in 0..2 {
        for j in 0..2 {
            acc += u.c[i] * g.g[i][j] * v.c[j];
        }
    }
    acc
}

/// Squared g-speed of a state.
pub fn speed_sq<T: Scalar>(s: &SurfaceSpec<T>, st: &GeodesicState<T>) -> T {
    inner(&metric_at(s, &st.point), &st.velocity, &st.velocity)
}

/// Right-hand side of the geodesic system: `(q̇₁, q̇₂, −Γ¹ᵢⱼq̇ⁱq̇ʲ, −Γ²ᵢⱼq̇ⁱq̇ʲ)`.
pub fn geodesic_rhs<T: Scalar>(s: &SurfaceSpec<T>, st: &GeodesicState<T>) -> [T; 4] {
    let acc = christoffel_at(s, &st.point).contract(&st.velocity);
    [st.velocity.c[0], st.velocity.c[1], -acc[0], -acc[1]]
}

fn advance<T: Scalar>(st: &GeodesicState<T>, k: &[T; 4], h: T) -> GeodesicState<T> {
    GeodesicState::new(
        ChartPoint::new(st.point.q[0] + h * k[0], st.point.q[1] + h * k[1]),
        TangentVector::new(st.velocity.c[0] + h * k[2], st.velocity.c[1] + h * k[3]),
    )
}

/// One classical RK4 step of size `h` on the geodesic system.
pub fn rk4_step<T: Scalar>(s: &SurfaceSpec<T>, st: &GeodesicState<T>, h: T) -> GeodesicState<T> {
    let half = h / T::lit(2.0);
    let k1 = geodesic_rhs(s, st);
    let k2 = geodesic_rhs(s, &advance(st, &k1, half));
    let k3 = geodesic_rhs(s, &advance(st, &k2, half));
    let k4 = geodesic_rhs(s, &advance(st, &k3, h));
    let two = T::lit(2.0);
    let mut k = [T::zero(); 4];
    for i in 0..4 {
        k[i] = (k1[i] + two * k2[i] + two * k3[i] + k4[i]) / T::lit(6.0);
    }
    advance(st, &k, h)
}

/// End state of a geodesic shot, with a flag for leaving the chart domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shot<T> {
    pub state: GeodesicState<T>,
    pub left_domain: bool,
}

/// Rescales `v` to unit g-speed at `p`.
pub fn normalize<T: Scalar>(
    s: &SurfaceSpec<T>,
    p: &ChartPoint<T>,
    v: &TangentVector<T>,
) -> Result<TangentVector<T>, GeometryError> {
    let sq = inner(&metric_at(s, p), v, v);
    if !(sq > T::lit(1e-24)) {
        return Err(GeometryError::ZeroVelocity);
    }
    Ok(v.scale(T::one() / sq.sqrt()))
}

/// Follows the geodesic from `start` for `arc_length` of proper length.
///
/// The start velocity is rescaled to unit g-speed, so the curve parameter is
/// arc length; the last step is shortened to land exactly on `arc_length`.
/// Leaving the domain is reported through [`Shot::left_domain`] and a log
/// warning, never as an error.
pub fn shoot_geodesic<T: Scalar>(
    s: &SurfaceSpec<T>,
    start: &GeodesicState<T>,
    arc_length: T,
    h: T,
) -> Result<Shot<T>, GeometryError> {
    if !(h > T::zero()) {
        return Err(GeometryError::InvalidStep(h.to_f64_lossy()));
    }
    if !(arc_length >= T::zero()) {
        return Err(GeometryError::NegativeArcLength(arc_length.to_f64_lossy()));
    }
    let mut st = GeodesicState::new(start.point, normalize(s, &start.point, &start.velocity)?);
    let mut left = !s.contains(&st.point);
    let mut travelled = T::zero();
    // Tolerate a sliver of roundoff so e.g. 10 / 0.01 does not produce a 1e-15 step.
    let slack = h * T::lit(1e-9);
    while arc_length - travelled > slack {
        let step = h.min(arc_length - travelled);
        st = rk4_step(s, &st, step);
        travelled += step;
        left |= !s.contains(&st.point);
    }
    if left {
        warn!(
            "geodesic left the surface domain (end point {:?})",
            [st.point.q[0].to_f64_lossy(), st.point.q[1].to_f64_lossy()]
        );
    }
    Ok(Shot { state: st, left_domain: left })
}
