//! The planar Euclidean group SE(2): rotations and translations of the plane,
//! its Lie algebra, the cotangent-lifted action on 4-dimensional phase space,
//! and the transport of momentum-map values under that action.
//!
//! Elements are stored as `(θ, u, v)`: rotate by θ, then translate by
//! `(u, v)`. The matrix realization is affine,
//!
//! ```text
//! g = [ cosθ  −sinθ  u ]        e₁ = Ê₁₃,  e₂ = Ê₂₃,  e₃ = Ê₂₁ − Ê₁₂
//!     [ sinθ   cosθ  v ]
//!     [  0      0    1 ]
//! ```
//!
//! with structure table `[e₂,e₃] = e₁`, `[e₃,e₁] = e₂`, `[e₁,e₂] = 0`.
//! Covectors are realized as `mat(μ) = [[0, μ₃, 0], [−μ₃, 0, 0], [2μ₁, 2μ₂, 0]]`
//! with pairing `⟨μ, X⟩ = ½ tr(mat(μ)·X)`.
//!
//! The lifted action on `(x, y, p_x, p_y)` rotates positions and momenta and
//! translates positions. The momentum components `(p_x, p_y, y p_x − x p_y)`
//! close under the canonical bracket with a sign opposite to the structure
//! table (`{j_a, j_b} = −Σ c_ab^c j_c`), and consequently momentum values
//! transport by conjugation *with the translation part reversed*:
//! `ν = extract(ĝ mat(μ) ĝ⁻¹)` with `ĝ = (θ, −u, −v)`. Closed form:
//! `(ν₁,ν₂) = R(θ)(μ₁,μ₂)`, `ν₃ = μ₃ + v ν₁ − u ν₂`.

use nalgebra::Matrix3;

use crate::error::{Error, Result};

/// Group element `(θ, u, v)`: rotation by θ followed by translation `(u,v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupElement {
    pub theta: f64,
    pub u: f64,
    pub v: f64,
}

/// Lie-algebra element `a e₁ + b e₂ + w e₃`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgebraElement {
    pub a: f64,
    pub b: f64,
    pub w: f64,
}

impl GroupElement {
    pub fn new(theta: f64, u: f64, v: f64) -> Result<Self> {
        if ![theta, u, v].iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("group element parameters".into()));
        }
        Ok(GroupElement { theta, u, v })
    }

    pub fn identity() -> Self {
        GroupElement {
            theta: 0.0,
            u: 0.0,
            v: 0.0,
        }
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let (s, c) = self.theta.sin_cos();
        GroupElement {
            theta: self.theta + other.theta,
            u: c * other.u - s * other.v + self.u,
            v: s * other.u + c * other.v + self.v,
        }
    }

    pub fn inverse(&self) -> GroupElement {
        let (s, c) = self.theta.sin_cos();
        // R(−θ)·(−d)
        GroupElement {
            theta: -self.theta,
            u: -(c * self.u + s * self.v),
            v: -(-s * self.u + c * self.v),
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.u, s, c, self.v, 0.0, 0.0, 1.0)
    }

    /// Group exponential of an algebra element.
    pub fn exp(xi: &AlgebraElement) -> GroupElement {
        let w = xi.w;
        if w.abs() < 1e-300 {
            return GroupElement {
                theta: 0.0,
                u: xi.a,
                v: xi.b,
            };
        }
        let (s, c) = w.sin_cos();
        // Translation part: V(w)·(a,b) with V = (1/w)[[sin w, cos w − 1], [1 − cos w, sin w]].
        GroupElement {
            theta: w,
            u: (s * xi.a - (1.0 - c) * xi.b) / w,
            v: ((1.0 - c) * xi.a + s * xi.b) / w,
        }
    }

    /// Cotangent-lifted action on `(x, y, p_x, p_y)`: positions are rotated
    /// and translated, momenta rotated.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != 4 {
            return Err(Error::DimensionMismatch(format!(
                "SE(2) acts on 4-dimensional phase states, got {}",
                state.len()
            )));
        }
        let (s, c) = self.theta.sin_cos();
        Ok(vec![
            c * state[0] - s * state[1] + self.u,
            s * state[0] + c * state[1] + self.v,
            c * state[2] - s * state[3],
            s * state[2] + c * state[3],
        ])
    }
}

impl AlgebraElement {
    pub fn new(a: f64, b: f64, w: f64) -> Self {
        AlgebraElement { a, b, w }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(0.0, -self.w, self.a, self.w, 0.0, self.b, 0.0, 0.0, 0.0)
    }

    /// Lie bracket `[ξ, η]` (matrix commutator; rotation part always cancels).
    pub fn bracket(&self, other: &AlgebraElement) -> AlgebraElement {
        AlgebraElement {
            a: -self.w * other.b + other.w * self.b,
            b: self.w * other.a - other.w * self.a,
            w: 0.0,
        }
    }
}

/// Basis matrices `(e₁, e₂, e₃)`.
pub fn basis_matrices() -> [Matrix3<f64>; 3] {
    [
        AlgebraElement::new(1.0, 0.0, 0.0).matrix(),
        AlgebraElement::new(0.0, 1.0, 0.0).matrix(),
        AlgebraElement::new(0.0, 0.0, 1.0).matrix(),
    ]
}

/// Matrix realization of a covector `μ = (μ₁, μ₂, μ₃)`.
pub fn covector_matrix(mu: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::new(
        0.0, mu[2], 0.0, -mu[2], 0.0, 0.0, 2.0 * mu[0], 2.0 * mu[1], 0.0,
    )
}

/// Pairing `⟨μ, X⟩ = ½ tr(mat(μ)·X)`.
pub fn pairing(mu: &[f64; 3], x: &Matrix3<f64>) -> f64 {
    0.5 * (covector_matrix(mu) * x).trace()
}

/// Components of a (possibly conjugated) covector matrix against the basis:
/// `μ₁ = B₃₁/2`, `μ₂ = B₃₂/2`, `μ₃ = (B₁₂ − B₂₁)/2`.
pub fn extract_covector(b: &Matrix3<f64>) -> [f64; 3] {
    [
        0.5 * b[(2, 0)],
        0.5 * b[(2, 1)],
        0.5 * (b[(0, 1)] - b[(1, 0)]),
    ]
}

/// Transport of momentum-map values under the lifted action:
/// `j(g·s) = momentum_transport(g, j(s))`.
///
/// Computed in the matrix realization as conjugation by the group element
/// with reversed translation part; see the module docs for why the reversal
/// is forced by the sign of the momentum bracket table.
pub fn momentum_transport(g: &GroupElement, mu: &[f64; 3]) -> [f64; 3] {
    let ghat = GroupElement {
        theta: g.theta,
        u: -g.u,
        v: -g.v,
    };
    let m = ghat.matrix();
    let m_inv = ghat.inverse().matrix();
    extract_covector(&(m * covector_matrix(mu) * m_inv))
}
