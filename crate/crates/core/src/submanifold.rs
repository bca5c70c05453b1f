//! Parametrized submanifolds: frames, shape operators, focal radius and distance.
//!
//! Shape operator convention: `S_ν X = (∇_X ν)^T`, so that the Lagrangian
//! `Λ_N` of fields leaving `N` orthogonally satisfies `J'(0)^T = S J(0)` and the
//! Riccati operator at `t = 0` equals `S` on `T_pN`. With this sign a parallel
//! principal curvature `λ` in constant curvature one produces a focal point at
//! `cot t = -λ`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_dual::{Dual64, DualNum, HyperDual64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::geodesic::{exp_map, exp_map_with_velocity, integrate_geodesic, GeodesicPath, Termination};
use crate::jacobi::{GramMode, JacobiPropagator, LagrangianFamily, SingularTimeRecord};
use crate::linalg::{self, gram_schmidt_g, inner, norm_g};
use crate::manifold::{MetricChart, MetricFamily};

/// Dual-number scalar usable in embeddings.
pub trait Scalar:
    DualNum<Primitive = f64>
    + Copy
    + std::ops::Mul<f64, Output = Self>
    + std::ops::Add<f64, Output = Self>
    + std::ops::Div<f64, Output = Self>
{
}

impl<D> Scalar for D where
    D: DualNum<Primitive = f64>
        + Copy
        + std::ops::Mul<f64, Output = Self>
        + std::ops::Add<f64, Output = Self>
        + std::ops::Div<f64, Output = Self>
{
}

/// Orthogonality threshold (radians) certified by [`distance`].
pub const ORTHOGONALITY_TOL: f64 = 1e-4;
/// Default horizon for focal-time searches.
pub const DEFAULT_HORIZON: f64 = std::f64::consts::PI + 0.25;

/// Model subsets of the unit 3-sphere in `R^4 = C^2` (coordinates `Re z1, Im z1, Re z2, Im z2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum S3Model {
    /// `(e^{iu}, e^{iv}) / √2`.
    CliffordTorus,
    /// `(e^{iu}, 0)`.
    GreatCircle,
    /// `(sin θ cos φ, sin θ sin φ, cos θ, 0)`.
    GreatSphere,
}

impl S3Model {
    pub fn dim(&self) -> usize {
        match self {
            S3Model::GreatCircle => 1,
            S3Model::CliffordTorus | S3Model::GreatSphere => 2,
        }
    }

    fn point<D: Scalar>(&self, u: &[D]) -> [D; 4] {
        let z = D::from(0.0);
        match self {
            S3Model::CliffordTorus => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                [u[0].cos() * s, u[0].sin() * s, u[1].cos() * s, u[1].sin() * s]
            }
            S3Model::GreatCircle => [u[0].cos(), u[0].sin(), z, z],
            S3Model::GreatSphere => [u[0].sin() * u[1].cos(), u[0].sin() * u[1].sin(), u[0].cos(), z],
        }
    }

    /// Smooth unit normal fields in `R^4` (tangent to the sphere).
    fn normals(&self, u: &[f64]) -> Vec<[f64; 4]> {
        match self {
            S3Model::CliffordTorus => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                vec![[u[0].cos() * s, u[0].sin() * s, -u[1].cos() * s, -u[1].sin() * s]]
            }
            S3Model::GreatCircle => vec![[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
            S3Model::GreatSphere => vec![[0.0, 0.0, 0.0, 1.0]],
        }
    }

    fn default_box(&self) -> (Vec<(f64, f64)>, Vec<Option<f64>>) {
        use std::f64::consts::PI;
        match self {
            S3Model::CliffordTorus => (vec![(0.0, 2.0 * PI); 2], vec![Some(2.0 * PI); 2]),
            S3Model::GreatCircle => (vec![(0.0, 2.0 * PI)], vec![Some(2.0 * PI)]),
            S3Model::GreatSphere => (vec![(0.3, PI - 0.3), (0.0, 2.0 * PI)], vec![None, Some(2.0 * PI)]),
        }
    }
}

/// Stereographic helpers for `SphereStereo { dim: 3, curvature }` charts.
pub mod stereo {
    use super::*;

    /// Chart coordinates of a unit vector `X ∈ S^3 ⊂ R^4` (projection from `X_4 = -1`).
    pub fn to_chart<D: Scalar>(x: &[D; 4], curvature: f64) -> Vec<D> {
        let den = (x[3] + 1.0) * curvature.sqrt();
        (0..3).map(|i| x[i] / den).collect()
    }

    /// Point of the unit sphere in `R^4` for chart coordinates `y`.
    pub fn from_chart(y: &DVector<f64>, curvature: f64) -> [f64; 4] {
        let s: Vec<f64> = y.iter().map(|v| v * curvature.sqrt()).collect();
        let r2: f64 = s.iter().map(|v| v * v).sum();
        let d = 1.0 + r2;
        [2.0 * s[0] / d, 2.0 * s[1] / d, 2.0 * s[2] / d, (1.0 - r2) / d]
    }

    /// Push an `R^4` tangent vector at `x` forward to chart components.
    pub fn vec_to_chart(x: &[f64; 4], w: &[f64; 4], curvature: f64) -> DVector<f64> {
        let a = 1.0 + x[3];
        DVector::from_fn(3, |i, _| (w[i] * a - x[i] * w[3]) / (a * a * curvature.sqrt()))
    }

    /// Row-major rotation of `R^4` taking the orthonormal frame `from` to `to`
    /// (both given as four row vectors). The last vector of `to` is flipped if
    /// needed so that the result has determinant one.
    pub fn frame_rotation(from: &[[f64; 4]; 4], to: &[[f64; 4]; 4]) -> Vec<f64> {
        let b0 = DMatrix::from_fn(4, 4, |i, j| from[j][i]);
        let mut b1 = DMatrix::from_fn(4, 4, |i, j| to[j][i]);
        if b0.determinant() * b1.determinant() < 0.0 {
            for i in 0..4 {
                b1[(i, 3)] = -b1[(i, 3)];
            }
        }
        let r = b1 * b0.transpose();
        (0..16).map(|k| r[(k / 4, k % 4)]).collect()
    }

    /// Complete up to two orthonormal vectors of `R^4` to an orthonormal frame
    /// using the given candidate vectors, in order.
    pub fn complete_frame(known: &[[f64; 4]], candidates: &[[f64; 4]]) -> [[f64; 4]; 4] {
        let mut out: Vec<[f64; 4]> = known.to_vec();
        let std_basis = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        for c in candidates.iter().chain(std_basis.iter()) {
            if out.len() == 4 {
                break;
            }
            let mut r = *c;
            for _ in 0..2 {
                for b in &out {
                    let d: f64 = (0..4).map(|i| r[i] * b[i]).sum();
                    for i in 0..4 {
                        r[i] -= d * b[i];
                    }
                }
            }
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-6 {
                out.push(r.map(|v| v / n));
            }
        }
        [out[0], out[1], out[2], out[3]]
    }

    /// Pull chart components of a tangent vector at `y` back to `R^4`.
    pub fn vec_from_chart(y: &DVector<f64>, w: &DVector<f64>, curvature: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (k, o) in out.iter_mut().enumerate() {
            let mut yd: Vec<Dual64> = y.iter().map(|&v| Dual64::from_re(v)).collect();
            for i in 0..3 {
                yd[i].eps = w[i];
            }
            let s: Vec<Dual64> = yd.iter().map(|v| *v * curvature.sqrt()).collect();
            let r2 = s.iter().fold(Dual64::from_re(0.0), |acc, v| acc + *v * *v);
            let d = r2 + 1.0;
            let val = if k < 3 { s[k] * 2.0 / d } else { (-r2 + 1.0) / d };
            *o = val.eps;
        }
        out
    }
}

/// Geometry of a patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatchShape {
    /// A model subset of `S^3`, rotated by an orthogonal 4×4 matrix (row-major) and projected.
    Sphere3 {
        model: S3Model,
        #[serde(default)]
        rotation: Option<Vec<f64>>,
    },
    /// A single point given in chart coordinates.
    Point { coords: Vec<f64> },
    /// One factor of a product chart, with the other coordinates frozen.
    ProductFactor {
        /// Index of the first coordinate of the varying factor.
        offset: usize,
        /// Dimension of the varying factor.
        factor_dim: usize,
        /// Full coordinate vector supplying the frozen coordinates.
        base: Vec<f64>,
    },
    /// Parallel affine lines `offset_c + u · direction` in a flat chart; one component per offset.
    FlatLines { direction: Vec<f64>, offsets: Vec<Vec<f64>> },
}

/// A parametrized embedded submanifold of a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmanifoldPatch {
    pub name: String,
    pub ambient: MetricChart,
    pub dim_sub: usize,
    pub shape: PatchShape,
    pub param_box: Vec<(f64, f64)>,
    /// Period of each parameter, when periodic.
    pub periodic: Vec<Option<f64>>,
}

/// Frames of a patch at one parameter point.
#[derive(Debug, Clone)]
pub struct PatchFrame {
    pub point: DVector<f64>,
    pub metric: DMatrix<f64>,
    /// Coordinate tangent vectors `∂_a f` (columns).
    pub raw_tangent: DMatrix<f64>,
    /// g-orthonormal tangent basis (columns), `raw_tangent · L^{-T}`.
    pub tangent: DMatrix<f64>,
    /// Cholesky factor of the induced metric `raw^T g raw = L L^T`.
    pub chol_l: DMatrix<f64>,
    /// g-orthonormal normal basis (columns).
    pub normal: DMatrix<f64>,
}

/// Shape operator in the orthonormal tangent basis.
#[derive(Debug, Clone, Serialize)]
pub struct ShapeOperator {
    pub param: Vec<f64>,
    pub component: usize,
    pub normal: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

impl ShapeOperator {
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let l = self.matrix.len();
        DMatrix::from_fn(l, l, |i, j| self.matrix[i][j])
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigenvalues(&self.as_matrix())
    }
}

fn rotation_matrix(r: &Option<Vec<f64>>) -> Result<[[f64; 4]; 4]> {
    let mut m = [[0.0; 4]; 4];
    match r {
        None => {
            for (i, row) in m.iter_mut().enumerate() {
                row[i] = 1.0;
            }
        }
        Some(v) => {
            if v.len() != 16 {
                return Err(GeomError::param("rotation", "expected 16 entries"));
            }
            for i in 0..4 {
                for j in 0..4 {
                    m[i][j] = v[4 * i + j];
                }
            }
            let rm = DMatrix::from_fn(4, 4, |i, j| m[i][j]);
            let defect = (rm.transpose() * &rm - DMatrix::identity(4, 4)).abs().max();
            if defect > 1e-9 {
                return Err(GeomError::param("rotation", format!("not orthogonal (defect {defect:.2e})")));
            }
        }
    }
    Ok(m)
}

fn rotate<D: Scalar>(r: &[[f64; 4]; 4], x: &[D; 4]) -> [D; 4] {
    let mut out = [D::from(0.0); 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i] += x[j] * r[i][j];
        }
    }
    out
}

fn unit_vec(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

impl SubmanifoldPatch {
    /// Build a patch, validating it against the ambient chart.
    pub fn new(name: impl Into<String>, ambient: MetricChart, shape: PatchShape) -> Result<Self> {
        let n = ambient.dim();
        let (dim_sub, param_box, periodic) = match &shape {
            PatchShape::Sphere3 { model, rotation } => {
                if !matches!(ambient.family, MetricFamily::SphereStereo { dim: 3, .. }) {
                    return Err(GeomError::param("patch", "sphere models need a 3-dimensional stereographic sphere chart"));
                }
                rotation_matrix(rotation)?;
                let (b, p) = model.default_box();
                (model.dim(), b, p)
            }
            PatchShape::Point { coords } => {
                if coords.len() != n {
                    return Err(GeomError::param("coords", format!("expected {n} coordinates")));
                }
                (0, vec![], vec![])
            }
            PatchShape::ProductFactor { offset, factor_dim, base } => {
                if base.len() != n || offset + factor_dim > n || *factor_dim == 0 {
                    return Err(GeomError::param("factor", "inconsistent product factor"));
                }
                (*factor_dim, vec![(-3.0, 3.0); *factor_dim], vec![None; *factor_dim])
            }
            PatchShape::FlatLines { direction, offsets } => {
                if !matches!(ambient.family, MetricFamily::Euclidean { .. }) {
                    return Err(GeomError::param("patch", "flat lines need a Euclidean chart"));
                }
                if direction.len() != n || offsets.is_empty() || offsets.iter().any(|o| o.len() != n) {
                    return Err(GeomError::param("lines", "direction and offsets must match the chart dimension"));
                }
                let len: f64 = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (len - 1.0).abs() > 1e-12 {
                    return Err(GeomError::param("direction", "must be a unit vector"));
                }
                let period = 2.0 * std::f64::consts::PI;
                (1, vec![(0.0, period)], vec![Some(period)])
            }
        };
        let patch = SubmanifoldPatch {
            name: name.into(),
            ambient,
            dim_sub,
            shape,
            param_box,
            periodic,
        };
        let centre: Vec<f64> = patch.param_box.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        patch.ambient.metric_checked(&patch.embed(&centre, 0)?)?;
        Ok(patch)
    }

    pub fn with_param_box(mut self, param_box: Vec<(f64, f64)>) -> Self {
        assert_eq!(param_box.len(), self.dim_sub);
        self.param_box = param_box;
        self
    }

    pub fn codim(&self) -> usize {
        self.ambient.dim() - self.dim_sub
    }

    pub fn components(&self) -> usize {
        match &self.shape {
            PatchShape::FlatLines { offsets, .. } => offsets.len(),
            _ => 1,
        }
    }

    /// Embedding evaluated over dual numbers.
    pub fn embed_generic<D: Scalar>(&self, u: &[D], component: usize) -> Vec<D> {
        match &self.shape {
            PatchShape::Sphere3 { model, rotation } => {
                let r = rotation_matrix(rotation).expect("validated rotation");
                let kappa = match self.ambient.family {
                    MetricFamily::SphereStereo { curvature, .. } => curvature,
                    _ => unreachable!("validated chart"),
                };
                stereo::to_chart(&rotate(&r, &model.point(u)), kappa)
            }
            PatchShape::Point { coords } => coords.iter().map(|&c| D::from(c)).collect(),
            PatchShape::ProductFactor { offset, base, .. } => {
                let mut x: Vec<D> = base.iter().map(|&c| D::from(c)).collect();
                for (a, ua) in u.iter().enumerate() {
                    x[offset + a] = *ua;
                }
                x
            }
            PatchShape::FlatLines { direction, offsets } => offsets[component]
                .iter()
                .zip(direction)
                .map(|(o, d)| u[0] * *d + *o)
                .collect(),
        }
    }

    pub fn embed(&self, u: &[f64], component: usize) -> Result<DVector<f64>> {
        if u.len() != self.dim_sub || component >= self.components() {
            return Err(GeomError::param("parameter", format!("expected {} parameters", self.dim_sub)));
        }
        let x = DVector::from_vec(self.embed_generic(u, component));
        self.ambient.check_point(&x)?;
        Ok(x)
    }

    fn raw_tangent(&self, u: &[f64], component: usize) -> DMatrix<f64> {
        let n = self.ambient.dim();
        let l = self.dim_sub;
        let mut t = DMatrix::zeros(n, l);
        for a in 0..l {
            let ud: Vec<Dual64> = u
                .iter()
                .enumerate()
                .map(|(b, &v)| Dual64::new(v, if a == b { 1.0 } else { 0.0 }))
                .collect();
            let f = self.embed_generic(&ud, component);
            for i in 0..n {
                t[(i, a)] = f[i].eps;
            }
        }
        t
    }

    fn normal_seeds(&self, u: &[f64], x: &DVector<f64>) -> Vec<DVector<f64>> {
        let n = self.ambient.dim();
        let mut seeds = Vec::new();
        if let PatchShape::Sphere3 { model, rotation } = &self.shape {
            let r = rotation_matrix(rotation).expect("validated rotation");
            let kappa = match self.ambient.family {
                MetricFamily::SphereStereo { curvature, .. } => curvature,
                _ => unreachable!(),
            };
            let xr = stereo::from_chart(x, kappa);
            for w in model.normals(u) {
                let wr = rotate(&r, &w);
                seeds.push(stereo::vec_to_chart(&xr, &wr, kappa));
            }
        }
        seeds.extend((0..n).map(|i| unit_vec(n, i)));
        seeds
    }

    /// Tangent and normal frames at `u`.
    pub fn frame(&self, u: &[f64], component: usize) -> Result<PatchFrame> {
        let x = self.embed(u, component)?;
        let g = self.ambient.metric_checked(&x)?;
        let n = self.ambient.dim();
        let l = self.dim_sub;
        let raw = self.raw_tangent(u, component);
        let (tangent, chol_l) = if l == 0 {
            (DMatrix::zeros(n, 0), DMatrix::zeros(0, 0))
        } else {
            let induced = raw.transpose() * &g * &raw;
            let chol = induced
                .cholesky()
                .ok_or_else(|| GeomError::Precondition(format!("patch `{}` is singular at {u:?}", self.name)))?;
            let lmat = chol.l();
            let linv_t = lmat
                .clone()
                .try_inverse()
                .ok_or_else(|| GeomError::Precondition("singular tangent frame".into()))?
                .transpose();
            (&raw * linv_t, lmat)
        };
        let tcols: Vec<DVector<f64>> = tangent.column_iter().map(|c| c.into_owned()).collect();
        let normals = gram_schmidt_g(&g, &tcols, &self.normal_seeds(u, &x), n - l, 1e-6);
        if normals.len() != n - l {
            return Err(GeomError::Precondition("could not complete the normal frame".into()));
        }
        Ok(PatchFrame {
            point: x,
            metric: g,
            raw_tangent: raw,
            tangent,
            chol_l,
            normal: linalg::columns(n, &normals),
        })
    }

    /// Second fundamental form `h_ab = -<ν, ∂_a ∂_b f + Γ(∂_a f, ∂_b f)>` in raw parameter directions.
    fn raw_second_form(&self, u: &[f64], component: usize, frame: &PatchFrame, nu: &DVector<f64>) -> Result<DMatrix<f64>> {
        let l = self.dim_sub;
        let n = self.ambient.dim();
        let gam = self.ambient.christoffel(&frame.point)?;
        let mut h = DMatrix::zeros(l, l);
        for a in 0..l {
            for b in a..l {
                let mut ud: Vec<HyperDual64> = u.iter().map(|&v| HyperDual64::from_re(v)).collect();
                ud[a].eps1 = 1.0;
                ud[b].eps2 = 1.0;
                let f = self.embed_generic(&ud, component);
                let dd = DVector::from_fn(n, |i, _| f[i].eps1eps2);
                let ta = frame.raw_tangent.column(a).into_owned();
                let tb = frame.raw_tangent.column(b).into_owned();
                let acc = dd + gam.contract(&ta, &tb);
                let val = -inner(&frame.metric, nu, &acc);
                h[(a, b)] = val;
                h[(b, a)] = val;
            }
        }
        Ok(h)
    }

    /// Shape operator for the unit normal `nu` (chart components) at `u`.
    pub fn shape_operator(&self, u: &[f64], component: usize, nu: &DVector<f64>) -> Result<ShapeOperator> {
        let frame = self.frame(u, component)?;
        self.shape_operator_in(u, component, &frame, nu)
    }

    pub fn shape_operator_in(&self, u: &[f64], component: usize, frame: &PatchFrame, nu: &DVector<f64>) -> Result<ShapeOperator> {
        let g = &frame.metric;
        let nn = norm_g(g, nu);
        if (nn - 1.0).abs() > 1e-8 {
            return Err(GeomError::Normalization { norm: nn });
        }
        for c in frame.tangent.column_iter() {
            let d = inner(g, &c.into_owned(), nu).abs();
            if d > 1e-8 {
                return Err(GeomError::Precondition(format!("vector is not normal to `{}` (|<ν, T>| = {d:.2e})", self.name)));
            }
        }
        let l = self.dim_sub;
        let s = if l == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let h = self.raw_second_form(u, component, frame, nu)?;
            let linv = frame.chol_l.clone().try_inverse().expect("invertible Cholesky factor");
            let s = &linv * h * linv.transpose();
            (&s + s.transpose()) * 0.5
        };
        Ok(ShapeOperator {
            param: u.to_vec(),
            component,
            normal: nu.iter().copied().collect(),
            matrix: (0..l).map(|i| (0..l).map(|j| s[(i, j)]).collect()).collect(),
        })
    }

    /// Wrap periodic parameters into the parameter box.
    pub fn wrap(&self, u: &mut [f64]) {
        for (a, p) in self.periodic.iter().enumerate() {
            if let Some(period) = p {
                let lo = self.param_box[a].0;
                u[a] = lo + (u[a] - lo).rem_euclid(*period);
            }
        }
    }
}

/// Normal exponential map: `exp(f(u), Σ η_i ν_i)` with `η` in normal-frame components.
pub fn exp_normal(patch: &SubmanifoldPatch, u: &[f64], component: usize, eta: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let fr = patch.frame(u, component)?;
    exp_map(&patch.ambient, &fr.point, &(&fr.normal * eta), tol)
}

/// Geodesic leaving `f(u)` in the unit normal direction `eta` (normal-frame components).
pub fn normal_geodesic(
    patch: &SubmanifoldPatch,
    u: &[f64],
    component: usize,
    eta: &DVector<f64>,
    length: f64,
    tol: f64,
) -> Result<GeodesicPath> {
    let fr = patch.frame(u, component)?;
    let nu = &fr.normal * (eta / eta.norm());
    integrate_geodesic(&patch.ambient, &fr.point, &nu, length, tol)
}

/// The Lagrangian `Λ_N` along a path that leaves `N` orthogonally at `f(u)`.
pub fn lagrangian_from_submanifold(
    prop: Arc<JacobiPropagator>,
    patch: &SubmanifoldPatch,
    u: &[f64],
    component: usize,
) -> Result<LagrangianFamily> {
    let fr = patch.frame(u, component)?;
    let s0 = prop.path.start().clone();
    let g = &fr.metric;
    if norm_g(g, &(&s0.x - &fr.point)) > 1e-8 {
        return Err(GeomError::Precondition("path does not start on the submanifold".into()));
    }
    let m = prop.frame_dim();
    let l = patch.dim_sub;
    let ortho = fr
        .tangent
        .column_iter()
        .map(|c| inner(g, &c.into_owned(), &s0.v).abs())
        .fold(0.0, f64::max);
    if ortho > 1e-8 {
        return Err(GeomError::Precondition(format!("initial velocity is not normal (|<v, T>| = {ortho:.2e})")));
    }
    let shape = patch.shape_operator_in(u, component, &fr, &s0.v)?;
    let smat = shape.as_matrix();
    let tf = s0.frame.transpose() * g * &fr.tangent;
    let nf = linalg::complement(&tf, m);
    let mut j0 = DMatrix::zeros(m, m);
    let mut jp0 = DMatrix::zeros(m, m);
    j0.columns_mut(0, l).copy_from(&tf);
    jp0.columns_mut(0, l).copy_from(&(&tf * &smat));
    jp0.columns_mut(l, m - l).copy_from(&nf);
    LagrangianFamily::new(
        prop,
        &j0,
        &jp0,
        GramMode::Submanifold {
            name: patch.name.clone(),
            shape: shape.matrix.clone(),
        },
    )
}

/// Frame components of the orthonormal tangent basis of a patch at a path sample.
pub fn tangent_in_path_frame(path: &GeodesicPath, sample: usize, frame: &PatchFrame) -> DMatrix<f64> {
    path.samples[sample].frame.transpose() * &frame.metric * &frame.tangent
}

/// `(min, max)` of `Tr S|_W` over `k`-dimensional subspaces `W`.
pub fn trace_extremes(s: &DMatrix<f64>, k: usize) -> Result<(f64, f64)> {
    let l = s.nrows();
    if k < 1 || k > l {
        return Err(GeomError::param("k", format!("k = {k} not in [1, {l}]")));
    }
    let eig = linalg::sym_eigenvalues(s);
    Ok((linalg::sum_smallest(&eig, k), linalg::sum_largest(&eig, k)))
}

/// Sampling density of the unit normal bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalSampling {
    /// Parameter points per component.
    pub params: usize,
    /// Directions per point (for codimension at least two).
    pub directions: usize,
}

impl Default for NormalSampling {
    fn default() -> Self {
        NormalSampling { params: 24, directions: 8 }
    }
}

impl NormalSampling {
    pub fn refined(&self) -> Self {
        NormalSampling {
            params: 2 * self.params,
            directions: 2 * self.directions,
        }
    }
}

/// Radical inverse of `i` in the given base.
pub fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 6] = [2, 3, 5, 7, 11, 13];

/// First `count` Halton points of a box (index starts at one to avoid the corner).
pub fn halton_points(bx: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    if bx.is_empty() {
        return vec![vec![]];
    }
    (1..=count)
        .map(|i| {
            bx.iter()
                .enumerate()
                .map(|(d, (lo, hi))| lo + (hi - lo) * radical_inverse(i, PRIMES[d % PRIMES.len()]))
                .collect()
        })
        .collect()
}

/// Deterministic unit directions in `R^c`: frame axes with both signs plus a
/// uniform set (circle angles for `c = 2`, Fibonacci points for `c = 3`,
/// projected Halton points above).
pub fn unit_directions(c: usize, count: usize) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    match c {
        0 => {}
        1 => {
            out.push(DVector::from_vec(vec![1.0]));
            out.push(DVector::from_vec(vec![-1.0]));
        }
        2 => {
            let d = count.max(4);
            for j in 0..d {
                let a = 2.0 * std::f64::consts::PI * j as f64 / d as f64;
                out.push(DVector::from_vec(vec![a.cos(), a.sin()]));
            }
        }
        _ => {
            for i in 0..c {
                out.push(unit_vec(c, i));
                out.push(-unit_vec(c, i));
            }
            if c == 3 {
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                for j in 0..count {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * j as f64;
                    out.push(DVector::from_vec(vec![r * a.cos(), r * a.sin(), z]));
                }
            } else {
                // radially projected Halton points of the cube, skipping those near the centre
                let mut i = 1;
                let mut added = 0;
                while added < count {
                    let p = DVector::from_fn(c, |d, _| 2.0 * radical_inverse(i, PRIMES[d % PRIMES.len()]) - 1.0);
                    i += 1;
                    let n = p.norm();
                    if n > 0.25 && n <= 1.0 {
                        out.push(p / n);
                        added += 1;
                    }
                }
            }
        }
    }
    out
}

/// One sampled unit normal.
#[derive(Debug, Clone, Serialize)]
pub struct NormalSample {
    pub param: Vec<f64>,
    pub component: usize,
    /// Normal-frame components of the unit normal.
    pub eta: Vec<f64>,
}

/// Sampled unit normal bundle of a patch.
pub fn normal_samples(patch: &SubmanifoldPatch, sampling: NormalSampling) -> Vec<NormalSample> {
    let params = halton_points(&patch.param_box, if patch.dim_sub == 0 { 1 } else { sampling.params });
    let dirs = unit_directions(patch.codim(), sampling.directions);
    let mut out = Vec::new();
    for component in 0..patch.components() {
        for u in &params {
            for d in &dirs {
                out.push(NormalSample {
                    param: u.clone(),
                    component,
                    eta: d.iter().copied().collect(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadiusBound {
    /// Attained by a sampled normal geodesic.
    Exact { value: f64 },
    /// No focal point before the horizon on any usable sample.
    AtLeast { value: f64 },
}

impl RadiusBound {
    pub fn value(&self) -> f64 {
        match self {
            RadiusBound::Exact { value } | RadiusBound::AtLeast { value } => *value,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FocalRadiusReport {
    pub patch: String,
    pub radius: RadiusBound,
    pub argmin: Option<NormalSample>,
    /// All accepted singular times (t, multiplicity) along the minimizing normal geodesic.
    pub focal_times_at_argmin: Vec<(f64, usize)>,
    pub samples: usize,
    /// Samples whose geodesic left the chart before any focal point.
    pub skipped: Vec<NormalSample>,
    /// Near-grazing minima seen during the search.
    pub grazing_flags: usize,
    pub horizon: f64,
}

/// First focal time and record list along one sampled normal geodesic.
pub fn focal_times_along(
    patch: &SubmanifoldPatch,
    sample: &NormalSample,
    horizon: f64,
    tol: f64,
) -> Result<(Vec<SingularTimeRecord>, Termination)> {
    let eta = DVector::from_vec(sample.eta.clone());
    let path = normal_geodesic(patch, &sample.param, sample.component, &eta, horizon, tol)?;
    let term = path.termination;
    let t_end = path.t_max;
    let prop = JacobiPropagator::new(path)?;
    let fam = lagrangian_from_submanifold(prop, patch, &sample.param, sample.component)?;
    Ok((fam.singular_times(0.0, t_end)?, term))
}

/// Focal radius as the minimum over sampled unit normals of the first focal time.
pub fn focal_radius(patch: &SubmanifoldPatch, sampling: NormalSampling, horizon: f64, tol: f64) -> Result<FocalRadiusReport> {
    let samples = normal_samples(patch, sampling);
    let results: Vec<Result<(Vec<SingularTimeRecord>, Termination)>> =
        samples.par_iter().map(|s| focal_times_along(patch, s, horizon, tol)).collect();
    let mut best: Option<(f64, usize)> = None;
    let mut skipped = Vec::new();
    let mut grazing = 0;
    let mut lists = Vec::with_capacity(samples.len());
    for (i, r) in results.into_iter().enumerate() {
        let (recs, term) = match r {
            Ok(v) => v,
            Err(GeomError::Domain { .. }) | Err(GeomError::LeftDomain { .. }) => {
                skipped.push(samples[i].clone());
                lists.push(Vec::new());
                continue;
            }
            Err(e) => return Err(e),
        };
        grazing += recs.iter().filter(|r| !r.accepted).count();
        let first = recs.iter().find(|r| r.accepted).map(|r| r.t);
        match first {
            Some(t) => {
                if best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, i));
                }
            }
            None => {
                if matches!(term, Termination::LeftDomain { .. }) {
                    skipped.push(samples[i].clone());
                }
            }
        }
        lists.push(recs);
    }
    let (radius, argmin, times) = match best {
        Some((t, i)) => (
            RadiusBound::Exact { value: t },
            Some(samples[i].clone()),
            lists[i].iter().filter(|r| r.accepted).map(|r| (r.t, r.multiplicity)).collect(),
        ),
        None => (RadiusBound::AtLeast { value: horizon }, None, Vec::new()),
    };
    Ok(FocalRadiusReport {
        patch: patch.name.clone(),
        radius,
        argmin,
        focal_times_at_argmin: times,
        samples: samples.len(),
        skipped,
        grazing_flags: grazing,
        horizon,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibleRadius {
    pub k: usize,
    /// Smallest `r` with `|Tr S_v|_W| <= k cot(π/2 - r)` on all samples.
    pub r: f64,
    pub max_trace: f64,
    /// Same quantity on the refined sampling.
    pub refined_max_trace: f64,
    /// Set when refinement increased the sampled maximum.
    pub sampling_warning: bool,
}

fn max_abs_trace(patch: &SubmanifoldPatch, k: usize, sampling: NormalSampling) -> Result<f64> {
    if k < 1 || k > patch.dim_sub {
        return Err(GeomError::param("k", format!("k = {k} not in [1, {}]", patch.dim_sub)));
    }
    let mut worst: f64 = 0.0;
    for s in normal_samples(patch, sampling) {
        let fr = patch.frame(&s.param, s.component)?;
        let nu = &fr.normal * DVector::from_vec(s.eta.clone());
        let sh = patch.shape_operator_in(&s.param, s.component, &fr, &nu)?;
        let (lo, hi) = trace_extremes(&sh.as_matrix(), k)?;
        worst = worst.max(lo.abs()).max(hi.abs());
    }
    Ok(worst)
}

/// Smallest `r ∈ [0, π/2)` satisfying the trace hypothesis on the sampled normal bundle.
pub fn min_admissible_r(patch: &SubmanifoldPatch, k: usize, sampling: NormalSampling) -> Result<AdmissibleRadius> {
    let max_trace = max_abs_trace(patch, k, sampling)?;
    let refined = max_abs_trace(patch, k, sampling.refined())?;
    let r = (max_trace / k as f64).atan();
    Ok(AdmissibleRadius {
        k,
        r: if max_trace <= 1e-12 { 0.0 } else { r },
        max_trace,
        refined_max_trace: refined,
        sampling_warning: refined > max_trace * (1.0 + 1e-6) + 1e-9,
    })
}

/// Result of the distance computation between two patches.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceReport {
    pub value: f64,
    pub param_n: Vec<f64>,
    pub component_n: usize,
    pub param_m: Vec<f64>,
    pub component_m: usize,
    pub intersect: bool,
    /// Angles between the connector and the normal spaces at both ends.
    pub angle_defect_start: f64,
    pub angle_defect_end: f64,
    pub certified: bool,
    /// Smallest straight-segment length seen on the coarse grid.
    pub proxy_min: f64,
    pub orthogonality_tol: f64,
    #[serde(skip)]
    pub path: Option<GeodesicPath>,
}

/// Metric length of the straight coordinate segment between two points (Gauss–Legendre).
pub fn segment_length(chart: &MetricChart, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    const NODES: [(f64, f64); 4] = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    ];
    let d = b - a;
    let mut len = 0.0;
    let pieces = 4;
    for p in 0..pieces {
        for (x, w) in NODES {
            let s = (p as f64 + 0.5 * (x + 1.0)) / pieces as f64;
            let pt = a + &d * s;
            len += w * 0.5 / pieces as f64 * chart.norm(&pt, &d);
        }
    }
    len
}

/// Levenberg–Marquardt shooting for `w` with `exp_x(w) = y`.
pub fn log_map(chart: &MetricChart, x: &DVector<f64>, y: &DVector<f64>, guess: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let n = x.len();
    let mut w = guess.clone();
    let resid = |w: &DVector<f64>| -> Result<DVector<f64>> { Ok(exp_map(chart, x, w, tol)? - y) };
    let mut r = resid(&w)?;
    let mut lambda = 1e-3;
    let scale = 1.0 + y.norm();
    for _ in 0..200 {
        if r.norm() < 1e-13 * scale {
            return Ok(w);
        }
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let h = 1e-6 * w.norm().max(1e-2);
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let col = (resid(&wp)? - resid(&wm)?) / (2.0 * h);
            jac.set_column(i, &col);
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * &r;
        let mut improved = false;
        for _ in 0..30 {
            let diag = DMatrix::from_diagonal(&jtj.diagonal().map(|d| d.max(1e-12)));
            let a = &jtj + diag * lambda;
            let step = match a.lu().solve(&(-&grad)) {
                Some(s) => s,
                None => break,
            };
            let wn = &w + &step;
            if let Ok(rn) = resid(&wn) {
                if rn.norm() < r.norm() {
                    w = wn;
                    r = rn;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if r.norm() < 1e-9 * scale {
        Ok(w)
    } else {
        Err(GeomError::NoConvergence(format!("log map residual {:.3e}", r.norm())))
    }
}

/// Minimal connector between given parameter points, with the first-variation gradient.
struct Connector {
    w: DVector<f64>,
    length: f64,
    grad: DVector<f64>,
    v_end: DVector<f64>,
    x: DVector<f64>,
}

fn connector(
    n_patch: &SubmanifoldPatch,
    m_patch: &SubmanifoldPatch,
    z: &[f64],
    cn: usize,
    cm: usize,
    guess: &DVector<f64>,
    tol: f64,
) -> Result<Connector> {
    let ln = n_patch.dim_sub;
    let chart = &n_patch.ambient;
    let fx = n_patch.frame(&z[..ln], cn)?;
    let fy = m_patch.frame(&z[ln..], cm)?;
    let w = log_map(chart, &fx.point, &fy.point, guess, tol)?;
    let length = norm_g(&fx.metric, &w);
    let (_, v1) = exp_map_with_velocity(chart, &fx.point, &w, tol)?;
    let mut grad = DVector::zeros(z.len());
    if length > 1e-12 {
        let u0 = &w / length;
        let u1 = &v1 / length;
        for a in 0..ln {
            grad[a] = -inner(&fx.metric, &u0, &fx.raw_tangent.column(a).into_owned());
        }
        for b in 0..m_patch.dim_sub {
            grad[ln + b] = inner(&fy.metric, &u1, &fy.raw_tangent.column(b).into_owned());
        }
    }
    Ok(Connector {
        w,
        length,
        grad,
        v_end: v1,
        x: fx.point,
    })
}

fn angle_to_normal_space(frame: &PatchFrame, v: &DVector<f64>) -> f64 {
    let nv = norm_g(&frame.metric, v);
    if nv == 0.0 || frame.tangent.ncols() == 0 {
        return 0.0;
    }
    let tcomp = frame.tangent.transpose() * &frame.metric * v;
    (tcomp.norm() / nv).min(1.0).asin()
}

/// Gauss–Newton on `|f(u) - f̃(ũ)|^2` in chart coordinates; returns the final parameters and residual.
fn intersect_search(n_patch: &SubmanifoldPatch, m_patch: &SubmanifoldPatch, z0: &[f64], cn: usize, cm: usize) -> (Vec<f64>, f64) {
    let ln = n_patch.dim_sub;
    let mut z = z0.to_vec();
    let eval = |z: &[f64]| -> Option<DVector<f64>> {
        Some(n_patch.embed(&z[..ln], cn).ok()? - m_patch.embed(&z[ln..], cm).ok()?)
    };
    let mut r = match eval(&z) {
        Some(r) => r,
        None => return (z, f64::INFINITY),
    };
    if z.is_empty() {
        return (z, r.norm());
    }
    for _ in 0..100 {
        let (Ok(fx), Ok(fy)) = (n_patch.frame(&z[..ln], cn), m_patch.frame(&z[ln..], cm)) else {
            break;
        };
        let n = r.len();
        let mut jac = DMatrix::zeros(n, z.len());
        jac.columns_mut(0, ln).copy_from(&fx.raw_tangent);
        jac.columns_mut(ln, z.len() - ln).copy_from(&(-&fy.raw_tangent));
        let step = linalg::svd(&jac).solve(&(-&r), 1e-12);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-6 {
            let zn: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            if let Some(rn) = eval(&zn) {
                if rn.norm() < r.norm() {
                    z = zn;
                    r = rn;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved || r.norm() < 1e-14 {
            break;
        }
    }
    (z, r.norm())
}

/// Distance between two patches of the same chart with an orthogonality certificate.
pub fn distance(n_patch: &SubmanifoldPatch, m_patch: &SubmanifoldPatch, grid: usize, tol: f64) -> Result<DistanceReport> {
    if n_patch.ambient != m_patch.ambient {
        return Err(GeomError::Precondition("patches live in different charts".into()));
    }
    let chart = &n_patch.ambient;
    let ln = n_patch.dim_sub;
    let lm = m_patch.dim_sub;
    let pn = halton_points(&n_patch.param_box, if ln == 0 { 1 } else { grid });
    let pm = halton_points(&m_patch.param_box, if lm == 0 { 1 } else { grid });
    let mut cands: Vec<(f64, Vec<f64>, usize, usize)> = Vec::new();
    for cn in 0..n_patch.components() {
        let xs: Vec<Option<DVector<f64>>> = pn.iter().map(|u| n_patch.embed(u, cn).ok()).collect();
        for cm in 0..m_patch.components() {
            let ys: Vec<Option<DVector<f64>>> = pm.iter().map(|u| m_patch.embed(u, cm).ok()).collect();
            for (i, x) in xs.iter().enumerate() {
                let Some(x) = x else { continue };
                for (j, y) in ys.iter().enumerate() {
                    let Some(y) = y else { continue };
                    let d = segment_length(chart, x, y);
                    let mut z = pn[i].clone();
                    z.extend_from_slice(&pm[j]);
                    cands.push((d, z, cn, cm));
                }
            }
        }
    }
    if cands.is_empty() {
        return Err(GeomError::Precondition("no sample point of either patch lies in the chart".into()));
    }
    cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let proxy_min = cands[0].0;
    let starts: Vec<(f64, Vec<f64>, usize, usize)> = cands.iter().take(4).cloned().collect();

    // intersection branch
    for (_, z0, cn, cm) in &starts {
        let (z, res) = intersect_search(n_patch, m_patch, z0, *cn, *cm);
        if res < 1e-10 {
            return Ok(DistanceReport {
                value: 0.0,
                param_n: z[..ln].to_vec(),
                component_n: *cn,
                param_m: z[ln..].to_vec(),
                component_m: *cm,
                intersect: true,
                angle_defect_start: 0.0,
                angle_defect_end: 0.0,
                certified: true,
                proxy_min,
                orthogonality_tol: ORTHOGONALITY_TOL,
                path: None,
            });
        }
    }

    let mut best: Option<(f64, Vec<f64>, usize, usize, DVector<f64>)> = None;
    for (_, z0, cn, cm) in &starts {
        if let Ok((z, c)) = minimize_connector(n_patch, m_patch, z0, *cn, *cm, tol) {
            if best.as_ref().is_none_or(|b| c.length < b.0) {
                best = Some((c.length, z, *cn, *cm, c.w));
            }
        }
    }
    let (value, z, cn, cm, w) =
        best.ok_or_else(|| GeomError::NoConvergence("no connecting geodesic found from any start".into()))?;
    let fx = n_patch.frame(&z[..ln], cn)?;
    let fy = m_patch.frame(&z[ln..], cm)?;
    let v0 = &w / value;
    let path = integrate_geodesic(chart, &fx.point, &v0, value, tol)?;
    let a0 = angle_to_normal_space(&fx, &path.start().v);
    let a1 = angle_to_normal_space(&fy, &path.end().v);
    let certified = a0 <= ORTHOGONALITY_TOL && a1 <= ORTHOGONALITY_TOL && value <= proxy_min + 1e-9 && path.completed();
    Ok(DistanceReport {
        value,
        param_n: z[..ln].to_vec(),
        component_n: cn,
        param_m: z[ln..].to_vec(),
        component_m: cm,
        intersect: false,
        angle_defect_start: a0,
        angle_defect_end: a1,
        certified,
        proxy_min,
        orthogonality_tol: ORTHOGONALITY_TOL,
        path: Some(path),
    })
}

fn minimize_connector(
    n_patch: &SubmanifoldPatch,
    m_patch: &SubmanifoldPatch,
    z0: &[f64],
    cn: usize,
    cm: usize,
    tol: f64,
) -> Result<(Vec<f64>, Connector)> {
    let ln = n_patch.dim_sub;
    let x0 = n_patch.embed(&z0[..ln], cn)?;
    let y0 = m_patch.embed(&z0[ln..], cm)?;
    let chart = &n_patch.ambient;
    // initial shooting direction: coordinate chord scaled to the segment length
    let d = &y0 - &x0;
    let guess = &d * (segment_length(chart, &x0, &y0) / chart.norm(&x0, &d).max(1e-300));
    let mut z = z0.to_vec();
    let mut cur = connector(n_patch, m_patch, &z, cn, cm, &guess, tol)?;
    let dim = z.len();
    if dim == 0 {
        return Ok((z, cur));
    }
    for _ in 0..60 {
        if cur.grad.norm() < 1e-10 {
            break;
        }
        // finite-difference Hessian of the length
        let h = 1e-5;
        let mut hess = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            let mut zp = z.clone();
            zp[a] += h;
            let mut zm = z.clone();
            zm[a] -= h;
            let gp = connector(n_patch, m_patch, &zp, cn, cm, &cur.w, tol)?.grad;
            let gm = connector(n_patch, m_patch, &zm, cn, cm, &cur.w, tol)?.grad;
            hess.set_column(a, &((gp - gm) / (2.0 * h)));
        }
        let (vals, vecs) = linalg::sym_eigen(&hess);
        let floor = 1e-6 * vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let inv = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.abs().max(floor)));
        let dir = -(&vecs * inv * vecs.transpose() * &cur.grad);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-8 {
            let zn: Vec<f64> = z.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
            if let Ok(c) = connector(n_patch, m_patch, &zn, cn, cm, &cur.w, tol) {
                if c.length < cur.length - 1e-4 * t * cur.grad.dot(&(-&dir)).max(0.0) || (c.length <= cur.length && c.grad.norm() < cur.grad.norm()) {
                    z = zn;
                    cur = c;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let _ = (&cur.v_end, &cur.x);
    Ok((z, cur))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn s3() -> MetricChart {
        MetricChart::new("s3", MetricFamily::SphereStereo { dim: 3, curvature: 1.0 }, vec![(-40.0, 40.0); 3])
    }

    fn patch(model: S3Model) -> SubmanifoldPatch {
        SubmanifoldPatch::new(format!("{model:?}"), s3(), PatchShape::Sphere3 { model, rotation: None }).unwrap()
    }

    #[test]
    fn stereographic_round_trip() {
        let x = [0.1, -0.5, 0.3, (1.0f64 - 0.35).sqrt()];
        let y = DVector::from_vec(stereo::to_chart(&x, 1.0));
        let back = stereo::from_chart(&y, 1.0);
        for i in 0..4 {
            assert_abs_diff_eq!(back[i], x[i], epsilon = 1e-14);
        }
        let raw = [0.3, 0.2, -0.1, 0.0];
        let d: f64 = (0..4).map(|i| raw[i] * x[i]).sum();
        let w: [f64; 4] = std::array::from_fn(|i| raw[i] - d * x[i]);
        let wc = stereo::vec_to_chart(&x, &w, 1.0);
        let wb = stereo::vec_from_chart(&y, &wc, 1.0);
        for i in 0..4 {
            assert_abs_diff_eq!(wb[i], w[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn clifford_torus_shape_eigenvalues() {
        let p = patch(S3Model::CliffordTorus);
        for u in [[0.0, 0.0], [0.7, 2.1], [3.0, -1.0]] {
            let fr = p.frame(&u, 0).unwrap();
            let nu = fr.normal.column(0).into_owned();
            let s = p.shape_operator_in(&u, 0, &fr, &nu).unwrap();
            let e = s.eigenvalues();
            assert_abs_diff_eq!(e[0], -1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(e[1], 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn totally_geodesic_shapes_vanish() {
        for model in [S3Model::GreatCircle, S3Model::GreatSphere] {
            let p = patch(model);
            let u: Vec<f64> = p.param_box.iter().map(|(a, b)| 0.3 * a + 0.7 * b).collect();
            let fr = p.frame(&u, 0).unwrap();
            for c in fr.normal.column_iter() {
                let s = p.shape_operator_in(&u, 0, &fr, &c.into_owned()).unwrap();
                assert!(s.as_matrix().abs().max() < 1e-10);
            }
        }
    }

    #[test]
    fn trace_extremes_examples() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert_eq!(trace_extremes(&s, 1).unwrap(), (-1.0, 1.0));
        assert_eq!(trace_extremes(&s, 2).unwrap(), (0.0, 0.0));
        assert!(trace_extremes(&s, 3).is_err());
    }

    #[test]
    fn non_normal_vector_rejected() {
        let p = patch(S3Model::CliffordTorus);
        let fr = p.frame(&[0.0, 0.0], 0).unwrap();
        let t = fr.tangent.column(0).into_owned();
        assert!(matches!(p.shape_operator_in(&[0.0, 0.0], 0, &fr, &t), Err(GeomError::Precondition(_))));
    }

    #[test]
    fn normal_exponential_of_clifford_torus() {
        let p = patch(S3Model::CliffordTorus);
        let eta = DVector::from_vec(vec![1.0]);
        let q = exp_normal(&p, &[0.0, 0.0], 0, &(&eta * FRAC_PI_4), 1e-8).unwrap();
        let x = stereo::from_chart(&q, 1.0);
        assert_abs_diff_eq!(x[2].hypot(x[3]), 0.0, epsilon = 1e-8);
        let q = exp_normal(&p, &[0.0, 0.0], 0, &(&eta * FRAC_PI_2), 1e-8).unwrap();
        let x = stereo::from_chart(&q, 1.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(x[0], s, epsilon = 1e-8);
        assert_abs_diff_eq!(x[2], -s, epsilon = 1e-8);
    }

    #[test]
    fn clifford_focal_times_along_one_normal() {
        let p = patch(S3Model::CliffordTorus);
        let s = NormalSample {
            param: vec![0.4, 1.1],
            component: 0,
            eta: vec![1.0],
        };
        let (recs, _) = focal_times_along(&p, &s, PI, 1e-8).unwrap();
        let acc: Vec<_> = recs.iter().filter(|r| r.accepted).collect();
        assert_eq!(acc.len(), 2, "{recs:?}");
        assert_abs_diff_eq!(acc[0].t, FRAC_PI_4, epsilon = 1e-6);
        assert_abs_diff_eq!(acc[1].t, 3.0 * FRAC_PI_4, epsilon = 1e-6);
        assert_eq!(acc[0].multiplicity, 1);
    }

    #[test]
    fn riccati_at_zero_is_shape_operator() {
        let p = patch(S3Model::CliffordTorus);
        let u = [0.4, 1.1];
        let path = normal_geodesic(&p, &u, 0, &DVector::from_vec(vec![1.0]), 0.5, 1e-8).unwrap();
        let fr = p.frame(&u, 0).unwrap();
        let tf = tangent_in_path_frame(&path, 0, &fr);
        let fam = lagrangian_from_submanifold(JacobiPropagator::new(path).unwrap(), &p, &u, 0).unwrap();
        let s0 = fam.riccati(0.0).unwrap();
        let shape = p.shape_operator_in(&u, 0, &fr, &fam.prop.path.start().v).unwrap();
        let in_tangent = tf.transpose() * &s0.matrix * &tf;
        assert!((in_tangent - shape.as_matrix()).abs().max() < 1e-10);
    }

    #[test]
    fn distance_clifford_to_core_circle() {
        let n = patch(S3Model::CliffordTorus);
        let m = patch(S3Model::GreatCircle);
        let d = distance(&n, &m, 16, 1e-8).unwrap();
        assert!(!d.intersect);
        assert_abs_diff_eq!(d.value, FRAC_PI_4, epsilon = 1e-6);
        assert!(d.certified, "{d:?}");
    }

    #[test]
    fn halton_prefix_property() {
        let a = halton_points(&[(0.0, 1.0), (0.0, 1.0)], 8);
        let b = halton_points(&[(0.0, 1.0), (0.0, 1.0)], 16);
        assert_eq!(&b[..8], &a[..]);
    }
}
