//! System catalog: phase spaces, dynamics, symmetry groups, momentum maps.
//!
//! A [`SystemSpec`] bundles the data the reduction pipeline needs: dynamics
//! (a polynomial Hamiltonian, or a raw polynomial vector field for the
//! non-symplectic demonstration system), momentum components, invariant
//! generators, and a group descriptor. Construction re-derives every
//! declared identity exactly — the structure table's antisymmetry and Jacobi
//! identity, the momentum bracket table `{j_a, j_b} = −Σ c_ab^c j_c`, and the
//! invariance `{f, j_a} = 0` of each invariant generator — so an instance
//! that exists is internally consistent.
//!
//! Builtins: `linear-gravity` (free fall on a line, translation symmetry),
//! `elliptic` (the modulus-k family on the plane with SE(2) momentum
//! components), `free-particle` (planar free motion, same momentum data) and
//! `halfplane-demo` (a raw, non-symplectic field with an invariant
//! coordinate and finite-time blow-up).

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::parse::{parse_poly, SymbolTable};
use crate::poly::{poisson_bracket, rat, rational_from_f64, ratio, CompiledPoly, Poly, Rational};
use crate::se2::GroupElement;

/// Which group acts, and how it is realized on states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupKind {
    /// SE(2) by the cotangent lift on `(x, y, p_x, p_y)`.
    Se2,
    /// `ℝ^m` translating the first `m` configuration coordinates.
    Translation(usize),
    /// One-parameter scaling `y ↦ e^λ y` of the second coordinate.
    Scaling,
}

/// Lie group data: dimension plus exact structure constants `c_ab^c` in the
/// fixed basis (`[e_a, e_b] = Σ_c c_ab^c e_c`).
#[derive(Clone, Debug)]
pub struct GroupDescriptor {
    pub name: String,
    pub kind: GroupKind,
    dim: usize,
    structure: Vec<Vec<Vec<Rational>>>,
}

impl GroupDescriptor {
    pub fn new(
        name: &str,
        kind: GroupKind,
        dim: usize,
        structure: Vec<Vec<Vec<Rational>>>,
    ) -> Result<Self> {
        let g = GroupDescriptor {
            name: name.to_string(),
            kind,
            dim,
            structure,
        };
        g.validate()?;
        Ok(g)
    }

    /// SE(2): `[e₂,e₃] = e₁`, `[e₃,e₁] = e₂`, `[e₁,e₂] = 0`.
    pub fn se2() -> Self {
        let mut c = vec![vec![vec![Rational::from_integer(0.into()); 3]; 3]; 3];
        c[1][2][0] = rat(1);
        c[2][1][0] = rat(-1);
        c[2][0][1] = rat(1);
        c[0][2][1] = rat(-1);
        GroupDescriptor {
            name: "se2".into(),
            kind: GroupKind::Se2,
            dim: 3,
            structure: c,
        }
    }

    /// Abelian translations `ℝ^m`.
    pub fn translation(m: usize) -> Self {
        GroupDescriptor {
            name: format!("translation-{m}"),
            kind: GroupKind::Translation(m),
            dim: m,
            structure: vec![vec![vec![Rational::from_integer(0.into()); m]; m]; m],
        }
    }

    /// One-parameter scaling group.
    pub fn scaling() -> Self {
        GroupDescriptor {
            name: "scaling".into(),
            kind: GroupKind::Scaling,
            dim: 1,
            structure: vec![vec![vec![Rational::from_integer(0.into()); 1]; 1]; 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure_constant(&self, a: usize, b: usize, c: usize) -> &Rational {
        &self.structure[a][b][c]
    }

    /// Exact antisymmetry and Jacobi identity of the structure table.
    pub fn validate(&self) -> Result<()> {
        let m = self.dim;
        if self.structure.len() != m
            || self
                .structure
                .iter()
                .any(|x| x.len() != m || x.iter().any(|y| y.len() != m))
        {
            return Err(Error::DimensionMismatch(
                "structure table shape does not match group dimension".into(),
            ));
        }
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    if self.structure[a][b][c] != -self.structure[b][a][c].clone() {
                        return Err(Error::DimensionMismatch(format!(
                            "structure table not antisymmetric at ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        // Σ_d c_ab^d c_dc^e + c_bc^d c_da^e + c_ca^d c_db^e = 0.
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for e in 0..m {
                        let mut acc = Rational::from_integer(0.into());
                        for d in 0..m {
                            acc += &self.structure[a][b][d] * &self.structure[d][c][e];
                            acc += &self.structure[b][c][d] * &self.structure[d][a][e];
                            acc += &self.structure[c][a][d] * &self.structure[d][b][e];
                        }
                        if acc != rat(0) {
                            return Err(Error::DimensionMismatch(format!(
                                "structure table violates the Jacobi identity at ({a},{b},{c},{e})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Basis of the isotropy subalgebra of `μ` under the coadjoint action:
    /// the kernel of `ξ ↦ ad*_ξ μ`, where `(ad*_ξ μ)_a = Σ_{b,d} ξ_b c_ba^d μ_d`.
    ///
    /// The kernel is computed by SVD; singular values below
    /// `tol × max(1, σ_max)` count as zero. Rows of the result are an
    /// orthonormal basis.
    pub fn isotropy_subalgebra(&self, mu: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
        if mu.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "covector has {} components, group has dimension {}",
                mu.len(),
                self.dim
            )));
        }
        if mu.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("coadjoint point".into()));
        }
        let m = self.dim;
        // Column b holds ad*_{e_b} μ.
        let mat = DMatrix::from_fn(m, m, |a, b| {
            let mut acc = 0.0;
            for d in 0..m {
                acc += rational_to_f64(&self.structure[b][a][d]) * mu[d];
            }
            acc
        });
        let svd = mat.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let threshold = tol * svd.singular_values.iter().cloned().fold(1.0f64, f64::max);
        let mut basis = Vec::new();
        for i in 0..m {
            let sv = svd.singular_values.get(i).copied().unwrap_or(0.0);
            if sv < threshold {
                basis.push(v_t.row(i).iter().copied().collect::<Vec<f64>>());
            }
        }
        Ok(basis)
    }
}

fn rational_to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// Dynamics: a polynomial Hamiltonian, or a raw polynomial field for
/// non-symplectic demonstrations.
#[derive(Clone, Debug)]
pub enum Dynamics {
    Hamiltonian(Poly),
    Raw(Vec<Poly>),
}

/// A concrete group transformation, matched to the descriptor's kind.
#[derive(Clone, Debug)]
pub enum GroupTransform {
    Se2(GroupElement),
    Translation(Vec<f64>),
    Scaling(f64),
}

/// Compiled vector field, ready for the integrator.
pub struct VectorField {
    components: Vec<Poly>,
    compiled: Vec<CompiledPoly>,
}

impl VectorField {
    /// `X_h = (∂h/∂p, −∂h/∂q)` for a polynomial Hamiltonian on 2n variables.
    pub fn from_hamiltonian(h: &Poly) -> Result<Self> {
        if !h.nvars().is_multiple_of(2) {
            return Err(Error::DimensionMismatch(
                "a Hamiltonian needs an even number of phase variables".into(),
            ));
        }
        let n = h.nvars() / 2;
        let mut components = Vec::with_capacity(h.nvars());
        for i in 0..n {
            components.push(h.partial(n + i)?);
        }
        for i in 0..n {
            components.push(h.partial(i)?.neg());
        }
        let compiled = components.iter().map(Poly::compile).collect();
        Ok(VectorField {
            components,
            compiled,
        })
    }

    pub fn components(&self) -> &[Poly] {
        &self.components
    }

    pub fn eval_into(&self, state: &[f64], out: &mut [f64]) {
        for (c, o) in self.compiled.iter().zip(out.iter_mut()) {
            *o = c.eval(state);
        }
    }

    pub fn eval(&self, state: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.compiled.len()];
        self.eval_into(state, &mut out);
        out
    }

    /// Adapter for [`crate::integrate::integrate_ode`].
    pub fn as_ode_field(&self) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
        move |_t, y, dy| self.eval_into(y, dy)
    }
}

/// Full description of one system.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    name: String,
    coordinate_names: Vec<String>,
    dynamics: Dynamics,
    momentum: Vec<Poly>,
    invariant_generators: Vec<Poly>,
    group: GroupDescriptor,
    parameters: Vec<(String, f64)>,
    /// Index into `invariant_generators` of the quadratic σ whose half
    /// generates the free part of the commuting split, when one exists.
    split_generator: Option<usize>,
    phase_dim: usize,
}

impl SystemSpec {
    /// Build and validate a system description. All declared identities are
    /// checked exactly; see the module docs.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        coordinate_names: Vec<String>,
        dynamics: Dynamics,
        momentum: Vec<Poly>,
        invariant_generators: Vec<Poly>,
        group: GroupDescriptor,
        parameters: Vec<(String, f64)>,
        split_generator: Option<usize>,
    ) -> Result<Self> {
        group.validate()?;
        let phase_dim = coordinate_names.len();
        let dims_ok = match &dynamics {
            Dynamics::Hamiltonian(h) => h.nvars() == phase_dim && phase_dim.is_multiple_of(2),
            Dynamics::Raw(f) => f.len() == phase_dim && f.iter().all(|p| p.nvars() == phase_dim),
        };
        if !dims_ok {
            return Err(Error::DimensionMismatch(
                "dynamics does not match the coordinate list".into(),
            ));
        }
        for p in momentum.iter().chain(&invariant_generators) {
            if p.nvars() != phase_dim {
                return Err(Error::DimensionMismatch(
                    "momentum/invariant polynomials live on a different phase space".into(),
                ));
            }
        }
        if !momentum.is_empty() {
            if !matches!(dynamics, Dynamics::Hamiltonian(_)) {
                return Err(Error::NonSymplectic(name.to_string()));
            }
            if momentum.len() != group.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "{} momentum components for a group of dimension {}",
                    momentum.len(),
                    group.dim()
                )));
            }
            // Exact bracket table: {j_a, j_b} = −Σ_c c_ab^c j_c.
            for a in 0..momentum.len() {
                for b in 0..momentum.len() {
                    let lhs = poisson_bracket(&momentum[a], &momentum[b])?;
                    let mut rhs = Poly::zero(phase_dim);
                    for c in 0..momentum.len() {
                        rhs = rhs.checked_add(
                            &momentum[c].scale(&-group.structure_constant(a, b, c).clone()),
                        )?;
                    }
                    if lhs != rhs {
                        return Err(Error::DimensionMismatch(format!(
                            "momentum components violate the declared bracket table at ({a},{b})"
                        )));
                    }
                }
            }
        }
        // Invariance of each generator.
        for f in &invariant_generators {
            match group.kind {
                GroupKind::Scaling => {
                    // Invariant under y ↦ e^λ y iff y does not appear.
                    if !f.partial(1)?.is_zero() {
                        return Err(Error::NonInvariant);
                    }
                }
                _ => {
                    for j in &momentum {
                        if !poisson_bracket(f, j)?.is_zero() {
                            return Err(Error::NonInvariant);
                        }
                    }
                }
            }
        }
        if let Some(idx) = split_generator {
            if idx >= invariant_generators.len() {
                return Err(Error::DimensionMismatch(
                    "split generator index out of range".into(),
                ));
            }
        }
        for (pname, value) in &parameters {
            if !value.is_finite() {
                return Err(Error::ParameterOutOfRange {
                    name: pname.clone(),
                    value: *value,
                    expected: "a finite number".into(),
                });
            }
        }
        Ok(SystemSpec {
            name: name.to_string(),
            coordinate_names,
            dynamics,
            momentum,
            invariant_generators,
            group,
            parameters,
            split_generator,
            phase_dim,
        })
    }

    /// Look up a builtin by CLI name. `k` is required for `elliptic` and
    /// rejected for the others.
    pub fn builtin(name: &str, k: Option<f64>) -> Result<Self> {
        match (name, k) {
            ("elliptic", Some(k)) => Self::elliptic(k),
            ("elliptic", None) => Err(Error::ParameterOutOfRange {
                name: "k".into(),
                value: f64::NAN,
                expected: "a modulus in (0, 1); pass --k".into(),
            }),
            ("linear-gravity", None) => Self::linear_gravity(),
            ("free-particle", None) => Self::free_particle(),
            ("halfplane-demo", None) => Self::halfplane_demo(),
            ("linear-gravity" | "free-particle" | "halfplane-demo", Some(_)) => {
                Err(Error::Unsupported(format!(
                    "system `{name}` takes no modulus parameter"
                )))
            }
            _ => Err(Error::UnknownSystem(name.to_string())),
        }
    }

    /// Free fall on a line: `h = p²/2 + q`, translation symmetry in `q`,
    /// momentum `j = p` with `{j, h} = −1`.
    pub fn linear_gravity() -> Result<Self> {
        let t = SymbolTable::phase_space(1);
        let h = parse_poly("p^2/2 + q", &t)?;
        let j = parse_poly("p", &t)?;
        SystemSpec::new(
            "linear-gravity",
            vec!["q".into(), "p".into()],
            Dynamics::Hamiltonian(h),
            vec![j.clone()],
            vec![j],
            GroupDescriptor::translation(1),
            vec![],
            None,
        )
    }

    /// The modulus-k family on the plane:
    ///
    /// `h = ½[(1 + k²/2 + y²)p_x² − 2xy p_x p_y + (1 − k²/2 + x²)p_y²]`
    ///
    /// with momentum components `(p_x, p_y, y p_x − x p_y)` and invariant
    /// `σ = p_x² + p_y²`. Requires `0 < k < 1`. The modulus enters the
    /// coefficients as an exact rational, so every identity check is exact.
    pub fn elliptic(k: f64) -> Result<Self> {
        if !k.is_finite() || k <= 0.0 || k >= 1.0 {
            return Err(Error::ParameterOutOfRange {
                name: "k".into(),
                value: k,
                expected: "(0, 1)".into(),
            });
        }
        let kr = rational_from_f64(k)?;
        let k2_half = &kr * &kr * ratio(1, 2); // k²/2, exact
        let t = SymbolTable::phase_space(2);
        let n = 4;
        let half = ratio(1, 2);
        // ½(1 + k²/2)·px², ½ y²px², −xy·px·py, ½(1 − k²/2)·py², ½ x²py².
        let h = Poly::term(n, &half * &(rat(1) + &k2_half), &[(2, 2)])?
            .checked_add(&Poly::term(n, half.clone(), &[(1, 2), (2, 2)])?)?
            .checked_add(&Poly::term(n, rat(-1), &[(0, 1), (1, 1), (2, 1), (3, 1)])?)?
            .checked_add(&Poly::term(n, &half * &(rat(1) - &k2_half), &[(3, 2)])?)?
            .checked_add(&Poly::term(n, half, &[(0, 2), (3, 2)])?)?;
        let momentum = vec![
            parse_poly("px", &t)?,
            parse_poly("py", &t)?,
            parse_poly("y*px - x*py", &t)?,
        ];
        let sigma = parse_poly("px^2 + py^2", &t)?;
        SystemSpec::new(
            "elliptic",
            vec!["x".into(), "y".into(), "px".into(), "py".into()],
            Dynamics::Hamiltonian(h),
            momentum,
            vec![sigma],
            GroupDescriptor::se2(),
            vec![("k".into(), k)],
            Some(0),
        )
    }

    /// Planar free particle `h = σ/2` with the same SE(2) momentum data.
    pub fn free_particle() -> Result<Self> {
        let t = SymbolTable::phase_space(2);
        let h = parse_poly("(px^2 + py^2)/2", &t)?;
        let momentum = vec![
            parse_poly("px", &t)?,
            parse_poly("py", &t)?,
            parse_poly("y*px - x*py", &t)?,
        ];
        let sigma = parse_poly("px^2 + py^2", &t)?;
        SystemSpec::new(
            "free-particle",
            vec!["x".into(), "y".into(), "px".into(), "py".into()],
            Dynamics::Hamiltonian(h),
            momentum,
            vec![sigma],
            GroupDescriptor::se2(),
            vec![],
            Some(0),
        )
    }

    /// Non-symplectic demonstration: the raw field `(ẋ, ẏ) = (1, y²)` on the
    /// half-plane, scaling symmetry in `y`, invariant coordinate `x`.
    /// Solutions blow up in finite time.
    pub fn halfplane_demo() -> Result<Self> {
        let names = ["x", "y"];
        let t = SymbolTable::new(&names)?;
        let field = vec![parse_poly("1", &t)?, parse_poly("y^2", &t)?];
        let x = parse_poly("x", &t)?;
        SystemSpec::new(
            "halfplane-demo",
            names.iter().map(|s| s.to_string()).collect(),
            Dynamics::Raw(field),
            vec![],
            vec![x],
            GroupDescriptor::scaling(),
            vec![],
            None,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coordinate_names(&self) -> &[String] {
        &self.coordinate_names
    }

    pub fn phase_dim(&self) -> usize {
        self.phase_dim
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn is_hamiltonian(&self) -> bool {
        matches!(self.dynamics, Dynamics::Hamiltonian(_))
    }

    pub fn hamiltonian(&self) -> Result<&Poly> {
        match &self.dynamics {
            Dynamics::Hamiltonian(h) => Ok(h),
            Dynamics::Raw(_) => Err(Error::NonSymplectic(self.name.clone())),
        }
    }

    pub fn momentum(&self) -> &[Poly] {
        &self.momentum
    }

    pub fn invariant_generators(&self) -> &[Poly] {
        &self.invariant_generators
    }

    pub fn group(&self) -> &GroupDescriptor {
        &self.group
    }

    pub fn parameters(&self) -> &[(String, f64)] {
        &self.parameters
    }

    pub fn split_generator(&self) -> Option<&Poly> {
        self.split_generator.map(|i| &self.invariant_generators[i])
    }

    /// Symbol table for parsing observables on this phase space.
    pub fn symbols(&self) -> SymbolTable {
        if self.phase_dim.is_multiple_of(2) && self.is_hamiltonian() {
            SymbolTable::phase_space(self.phase_dim / 2)
        } else {
            let refs: Vec<&str> = self.coordinate_names.iter().map(String::as_str).collect();
            SymbolTable::new(&refs).expect("coordinate names are unique")
        }
    }

    /// The flow field: `X_h = (∂h/∂p, −∂h/∂q)` for Hamiltonian dynamics, the
    /// declared components for raw dynamics.
    pub fn vector_field(&self) -> Result<VectorField> {
        match &self.dynamics {
            Dynamics::Hamiltonian(h) => VectorField::from_hamiltonian(h),
            Dynamics::Raw(f) => {
                let components = f.clone();
                let compiled = components.iter().map(Poly::compile).collect();
                Ok(VectorField {
                    components,
                    compiled,
                })
            }
        }
    }

    /// Same as [`SystemSpec::vector_field`], but only for Hamiltonian systems.
    pub fn hamiltonian_vector_field(&self) -> Result<VectorField> {
        self.hamiltonian()?;
        self.vector_field()
    }

    /// Derivative of an observable along the flow: `{f, h}` for Hamiltonian
    /// dynamics, `Σ v_i ∂f/∂x_i` for raw dynamics.
    pub fn flow_derivative(&self, f: &Poly) -> Result<Poly> {
        match &self.dynamics {
            Dynamics::Hamiltonian(h) => poisson_bracket(f, h),
            Dynamics::Raw(field) => {
                let mut acc = Poly::zero(self.phase_dim);
                for (i, v) in field.iter().enumerate() {
                    acc = acc.checked_add(&f.partial(i)?.checked_mul(v)?)?;
                }
                Ok(acc)
            }
        }
    }

    /// Momentum map values at a state.
    pub fn momentum_map(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.phase_dim {
            return Err(Error::DimensionMismatch(format!(
                "state has {} coordinates, phase space has {}",
                state.len(),
                self.phase_dim
            )));
        }
        self.momentum.iter().map(|j| j.eval(state)).collect()
    }

    /// Apply a group transformation to a state.
    pub fn act(&self, g: &GroupTransform, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.phase_dim {
            return Err(Error::DimensionMismatch(format!(
                "state has {} coordinates, phase space has {}",
                state.len(),
                self.phase_dim
            )));
        }
        match (&self.group.kind, g) {
            (GroupKind::Se2, GroupTransform::Se2(el)) => el.act(state),
            (GroupKind::Translation(m), GroupTransform::Translation(u)) => {
                if u.len() != *m {
                    return Err(Error::DimensionMismatch(format!(
                        "translation vector has {} components, group has {m}",
                        u.len()
                    )));
                }
                let mut out = state.to_vec();
                for (i, du) in u.iter().enumerate() {
                    out[i] += du;
                }
                Ok(out)
            }
            (GroupKind::Scaling, GroupTransform::Scaling(lambda)) => {
                let mut out = state.to_vec();
                out[1] *= lambda.exp();
                Ok(out)
            }
            _ => Err(Error::Unsupported(format!(
                "transformation does not match the symmetry group of `{}`",
                self.name
            ))),
        }
    }

    /// Draw a random group transformation (rotations over `[−π, π]`, shifts
    /// and scalings over modest ranges), deterministically from `rng`.
    pub fn sample_transform<R: Rng>(&self, rng: &mut R) -> GroupTransform {
        match self.group.kind {
            GroupKind::Se2 => GroupTransform::Se2(GroupElement {
                theta: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                u: rng.gen_range(-2.0..2.0),
                v: rng.gen_range(-2.0..2.0),
            }),
            GroupKind::Translation(m) => {
                GroupTransform::Translation((0..m).map(|_| rng.gen_range(-2.0..2.0)).collect())
            }
            GroupKind::Scaling => GroupTransform::Scaling(rng.gen_range(-1.0..1.0)),
        }
    }

    /// Deterministic RNG for sampling-based checks.
    pub fn sampling_rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }
}
