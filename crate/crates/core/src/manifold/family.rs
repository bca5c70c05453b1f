use num_dual::DualNum;
use serde::{Deserialize, Serialize};

/// Closed-form metric families available to charts.
///
/// Components are evaluated generically over dual numbers so that first and
/// second metric derivatives are exact to rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricFamily {
    /// Flat metric on R^dim.
    Euclidean { dim: usize },
    /// Round sphere of constant curvature `curvature` in stereographic coordinates,
    /// `g = 4 / (1 + curvature |y|^2)^2 * delta`.
    SphereStereo { dim: usize, curvature: f64 },
    /// Round 2-sphere in (colatitude, longitude), `g = diag(1, sin^2 theta) / curvature`.
    SpherePolar { curvature: f64 },
    /// Complex projective space in an affine chart, normalized to sec in [1, 4].
    FubiniStudy { complex_dim: usize },
    /// Riemannian product, coordinates concatenated in factor order.
    Product { factors: Vec<MetricFamily> },
}

impl MetricFamily {
    pub fn dim(&self) -> usize {
        match self {
            MetricFamily::Euclidean { dim } | MetricFamily::SphereStereo { dim, .. } => *dim,
            MetricFamily::SpherePolar { .. } => 2,
            MetricFamily::FubiniStudy { complex_dim } => 2 * complex_dim,
            MetricFamily::Product { factors } => factors.iter().map(|f| f.dim()).sum(),
        }
    }

    /// Row-major metric components at `x`.
    pub fn components<D>(&self, x: &[D]) -> Vec<D>
    where
        D: DualNum<Primitive = f64> + Copy,
    {
        let n = self.dim();
        let zero = D::from(0.0);
        let mut g = vec![zero; n * n];
        self.fill(x, &mut g, n, 0);
        g
    }

    fn fill<D>(&self, x: &[D], g: &mut [D], stride: usize, offset: usize)
    where
        D: DualNum<Primitive = f64> + Copy,
    {
        let n = self.dim();
        let at = |i: usize, j: usize| (offset + i) * stride + offset + j;
        match self {
            MetricFamily::Euclidean { .. } => {
                for i in 0..n {
                    g[at(i, i)] = D::from(1.0);
                }
            }
            MetricFamily::SphereStereo { curvature, .. } => {
                let mut r2 = D::from(0.0);
                for xi in &x[offset..offset + n] {
                    r2 += *xi * *xi;
                }
                let phi = (r2 * *curvature + 1.0).recip() * 2.0;
                let conf = phi * phi;
                for i in 0..n {
                    g[at(i, i)] = conf;
                }
            }
            MetricFamily::SpherePolar { curvature } => {
                let s = x[offset].sin();
                g[at(0, 0)] = D::from(1.0 / curvature);
                g[at(1, 1)] = s * s * (1.0 / curvature);
            }
            MetricFamily::FubiniStudy { complex_dim } => {
                let w = &x[offset..offset + 2 * complex_dim];
                let mut r2 = D::from(0.0);
                for xi in w {
                    r2 += *xi * *xi;
                }
                let q = (r2 + 1.0).recip();
                // lambda(e_I) = sum_j conj(w_j) (e_I)_j as (re, im)
                let lam: Vec<(D, D)> = (0..2 * complex_dim)
                    .map(|idx| {
                        let j = idx / 2;
                        let (a, b) = (w[2 * j], w[2 * j + 1]);
                        if idx % 2 == 0 {
                            (a, -b)
                        } else {
                            (b, a)
                        }
                    })
                    .collect();
                for i in 0..n {
                    for j in 0..n {
                        let mut v = (lam[i].0 * lam[j].0 + lam[i].1 * lam[j].1) * (-(q * q));
                        if i == j {
                            v += q;
                        }
                        g[at(i, j)] = v;
                    }
                }
            }
            MetricFamily::Product { factors } => {
                let mut off = offset;
                for f in factors {
                    f.fill(x, g, stride, off);
                    off += f.dim();
                }
            }
        }
    }

    /// Coordinate labels in the order used by `components`.
    pub fn default_coords(&self) -> Vec<String> {
        match self {
            MetricFamily::Euclidean { dim } => (0..*dim).map(|i| format!("x{i}")).collect(),
            MetricFamily::SphereStereo { dim, .. } => (0..*dim).map(|i| format!("y{i}")).collect(),
            MetricFamily::SpherePolar { .. } => vec!["theta".into(), "phi".into()],
            MetricFamily::FubiniStudy { complex_dim } => (0..*complex_dim)
                .flat_map(|j| [format!("re_w{j}"), format!("im_w{j}")])
                .collect(),
            MetricFamily::Product { factors } => factors
                .iter()
                .enumerate()
                .flat_map(|(i, f)| f.default_coords().into_iter().map(move |c| format!("{c}_{i}")))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_is_block_diagonal() {
        let fam = MetricFamily::Product {
            factors: vec![
                MetricFamily::SphereStereo { dim: 2, curvature: 3.0 },
                MetricFamily::SphereStereo { dim: 2, curvature: 3.0 },
            ],
        };
        let g = fam.components(&[0.1f64, 0.2, -0.3, 0.4]);
        for i in 0..2 {
            for j in 2..4 {
                assert_eq!(g[i * 4 + j], 0.0);
                assert_eq!(g[j * 4 + i], 0.0);
            }
        }
        let phi = 2.0 / (1.0 + 3.0 * 0.05);
        assert!((g[0] - phi * phi).abs() < 1e-15);
    }

    #[test]
    fn fubini_study_is_euclidean_at_origin() {
        let fam = MetricFamily::FubiniStudy { complex_dim: 2 };
        let g = fam.components(&[0.0f64; 4]);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g[i * 4 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn fubini_study_line_is_round_sphere_of_curvature_four() {
        // On a complex line through the origin the metric is |dw|^2 / (1 + |w|^2)^2.
        let fam = MetricFamily::FubiniStudy { complex_dim: 1 };
        let x = [0.3f64, -0.7];
        let g = fam.components(&x);
        let r2: f64 = x.iter().map(|a| a * a).sum();
        let expect = 1.0 / (1.0 + r2).powi(2);
        assert!((g[0] - expect).abs() < 1e-15);
        assert!((g[3] - expect).abs() < 1e-15);
        assert!(g[1].abs() < 1e-15);
    }
}
