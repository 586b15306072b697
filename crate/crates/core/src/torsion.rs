//! Intrinsic torsion `T(X,Y,Z) = <ξ_X Y, Z>`, its twelve unitary components and
//! the scalars and one-forms derived from it.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::acms::{connection_matrix, nabla_of_structure, AcmStructure, StructureDerivatives};
use crate::error::{Error, Result};
use crate::exterior::KForm;
use crate::model::PointEvaluation;
use crate::tensor::Tensor3;

pub const MODULE_COUNT: usize = 12;

/// Which of the `T(φX,φY,Z) = ∓T(X,Y,Z)` eigenspaces of the transverse block
/// holds the first two modules: `-1.0` selects `T(φX,φY,Z) = −T(X,Y,Z)`.
pub const FIRST_PAIR_EIGENVALUE: f64 = -1.0;

/// Dimension of module `C_{k}` (`k` in `1..=12`) for the given `n`.
pub fn module_dimension(k: usize, n: usize) -> usize {
    let n = n as i64;
    let v = match k {
        1 => n * (n - 1) * (n - 2) / 3,
        2 => 2 * n * (n * n - 1) / 3,
        3 => n * (n + 1) * (n - 2),
        4 => 2 * n,
        5 | 6 => 1,
        7 | 8 => n * n - 1,
        9 => n * (n + 1),
        10 | 11 => n * (n - 1),
        12 => 2 * n,
        _ => panic!("module index {k} outside 1..=12"),
    };
    if n == 1 && matches!(k, 4) {
        return 0;
    }
    v.max(0) as usize
}

/// Intrinsic torsion with its twelve components; index `k − 1` holds `C_k`.
#[derive(Debug, Clone)]
pub struct IntrinsicTorsion {
    pub n: usize,
    pub t: Tensor3,
    pub components: Vec<Tensor3>,
    pub norms: [f64; MODULE_COUNT],
}

impl IntrinsicTorsion {
    pub fn norm(&self) -> f64 {
        self.t.norm()
    }

    pub fn component(&self, k: usize) -> &Tensor3 {
        &self.components[k - 1]
    }

    /// Sum of the listed components (labels `1..=12`).
    pub fn sum_of(&self, labels: &[usize]) -> Tensor3 {
        labels
            .iter()
            .fold(Tensor3::zeros(self.t.dim()), |acc, &k| acc.add(self.component(k)))
    }
}

/// `ξ_X = −½ φ∘∇_Xφ + ∇_Xη ⊗ ζ − ½ η ⊗ ∇_Xζ` for every frame direction.
pub fn torsion_from_derivatives(s: &AcmStructure, nab: &StructureDerivatives) -> Tensor3 {
    let d = s.dim();
    let z = s.zeta();
    let mut t = Tensor3::zeros(d);
    for i in 0..d {
        let m = -0.5 * s.phi() * &nab.phi[i]
            + z * nab.eta.row(i)
            - 0.5 * nab.zeta.column(i) * z.transpose();
        for j in 0..d {
            for k in 0..d {
                t.set(i, j, k, m[(k, j)]);
            }
        }
    }
    t
}

/// Largest residual of `φξ_XY + ξ_XφY = η(Y)φξ_Xζ + η(ξ_XφY)ζ` over frame directions.
pub fn characterization_residual(s: &AcmStructure, t: &Tensor3) -> f64 {
    let d = s.dim();
    let phi = s.phi();
    let z = s.zeta();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        let m = t.slot_matrix(&e);
        let lhs = phi * &m + &m * phi;
        let rhs = phi * &m * z * z.transpose() + z * (z.transpose() * &m * phi);
        worst = worst.max((lhs - rhs).amax());
    }
    worst
}

/// Largest violation of `ξ_X ∈ u(n)^⊥` (skewness and anti-invariance of the transverse part).
pub fn torsion_space_residual(s: &AcmStructure, t: &Tensor3) -> f64 {
    let d = s.dim();
    let p = s.transverse_projector();
    let phi = s.phi();
    let mut worst = t.last_pair_asymmetry();
    for i in 0..d {
        let b = DMatrix::from_fn(d, d, |j, k| t.get(i, j, k));
        let r = phi.transpose() * &b * phi + &p * &b * &p;
        worst = worst.max(r.amax());
    }
    worst
}

/// Orthogonal projection of an arbitrary array onto `T* ⊗ u(n)^⊥`.
pub fn project_to_torsion_space(s: &AcmStructure, raw: &Tensor3) -> Tensor3 {
    let d = s.dim();
    let p = s.transverse_projector();
    let phi = s.phi();
    let z = s.zeta();
    let mut out = Tensor3::zeros(d);
    for i in 0..d {
        let a = DMatrix::from_fn(d, d, |j, k| raw.get(i, j, k));
        let b = 0.5 * (&a - a.transpose());
        // η∧(ζ⌟b) plus the anti-invariant transverse part
        let iz = b.transpose() * z;
        let eta_part = z * iz.transpose() - &iz * z.transpose();
        let perp = &p * &b * &p;
        let anti = 0.5 * (&perp - phi.transpose() * &perp * phi);
        let m = eta_part + anti;
        for j in 0..d {
            for k in 0..d {
                out.set(i, j, k, m[(j, k)]);
            }
        }
    }
    out
}

/// `T(X,Y,Z) = η(Y)b(X,Z) − η(Z)b(X,Y)` for a transverse bilinear form `b`.
fn from_eta_block(z: &DVector<f64>, b: &DMatrix<f64>) -> Tensor3 {
    let d = z.len();
    Tensor3::from_fn(d, |i, j, k| z[j] * b[(i, k)] - z[k] * b[(i, j)])
}

/// The `C4` tensor determined by a transverse one-form `θ`:
/// `4T(X,Y,Z) = <X⊥,Y>θ(Z) − θ(Y)<X⊥,Z> − <φX,Y>u(Z) + u(Y)<φX,Z>`, `u = (φθ^♯)^♭`.
pub fn lee_tensor(s: &AcmStructure, theta: &DVector<f64>) -> Tensor3 {
    let p = s.transverse_projector();
    let phi = s.phi();
    let u = phi * theta;
    Tensor3::from_fn(s.dim(), |x, y, z| {
        0.25 * (p[(x, y)] * theta[z] - theta[y] * p[(x, z)] - phi[(y, x)] * u[z] + u[y] * phi[(z, x)])
    })
}

/// `θ = (2/(n−1)) Σ_i T(e_i, e_i, ·)` for a tensor in `C3 ⊕ C4`.
pub fn lee_form_of(s: &AcmStructure, t: &Tensor3) -> DVector<f64> {
    let d = s.dim();
    let n = s.n();
    if n < 2 {
        return DVector::zeros(d);
    }
    DVector::from_fn(d, |k, _| {
        2.0 / (n as f64 - 1.0) * (0..d).map(|i| t.get(i, i, k)).sum::<f64>()
    })
}

/// Splits a valid torsion tensor into its twelve components.
pub fn project_components(s: &AcmStructure, t: &Tensor3) -> Vec<Tensor3> {
    let d = s.dim();
    let n = s.n() as f64;
    let p = s.transverse_projector();
    let phi = s.phi();
    let z = s.zeta();
    let id = DMatrix::identity(d, d);
    let zz = z * z.transpose();

    // transverse block
    let ta = t.pull_back(&p, &p, &p);
    let rotated = ta.pull_back(phi, phi, &id);
    let first = ta.add(&rotated.scaled(FIRST_PAIR_EIGENVALUE)).scaled(0.5);
    let second = ta.sub(&first);
    let c1 = Tensor3::from_fn(d, |i, j, k| (first.get(i, j, k) + first.get(j, k, i) + first.get(k, i, j)) / 3.0);
    let c2 = first.sub(&c1);
    let c4 = lee_tensor(s, &lee_form_of(s, &second));
    let c3 = second.sub(&c4);

    // ζ ⊗ transverse block
    let c11 = t.pull_back(&zz, &p, &p);
    // ζ ⊗ (ζ ∧ transverse) block
    let c12 = t.pull_back(&zz, &zz, &p).add(&t.pull_back(&zz, &p, &zz));

    // transverse ⊗ (ζ ∧ transverse) block through β(X,Z) = T(X,ζ,Z)
    let beta_full = DMatrix::from_fn(d, d, |a, c| (0..d).map(|b| z[b] * t.get(a, b, c)).sum::<f64>());
    let beta = &p * beta_full * &p;
    let beta_rot = phi.transpose() * &beta * phi;
    let herm = 0.5 * (&beta + &beta_rot);
    let anti = 0.5 * (&beta - &beta_rot);
    let sym = |m: &DMatrix<f64>| 0.5 * (m + m.transpose());
    let skew = |m: &DMatrix<f64>| 0.5 * (m - m.transpose());
    let b5 = &p * (beta.trace() / (2.0 * n));
    let b6 = phi * (beta.component_mul(phi).sum() / (2.0 * n));
    let b8 = sym(&herm) - &b5;
    let b7 = skew(&herm) - &b6;
    let b9 = sym(&anti);
    let b10 = skew(&anti);

    vec![
        c1,
        c2,
        c3,
        c4,
        from_eta_block(z, &b5),
        from_eta_block(z, &b6),
        from_eta_block(z, &b7),
        from_eta_block(z, &b8),
        from_eta_block(z, &b9),
        from_eta_block(z, &b10),
        c11,
        c12,
    ]
}

/// Orthonormal basis of every module (index `k − 1`), spanned by the components
/// of projected elementary tensors.
pub fn module_bases(s: &AcmStructure) -> Vec<Vec<Tensor3>> {
    let d = s.dim();
    let n = s.n();
    let mut bases: Vec<Vec<Tensor3>> = vec![Vec::new(); MODULE_COUNT];
    let targets: Vec<usize> = (1..=MODULE_COUNT).map(|k| module_dimension(k, n)).collect();
    'outer: for a in 0..d {
        for b in 0..d {
            for c in (b + 1)..d {
                let mut e = Tensor3::zeros(d);
                e.set(a, b, c, 1.0);
                let parts = project_components(s, &project_to_torsion_space(s, &e));
                for (k, part) in parts.into_iter().enumerate() {
                    if bases[k].len() < targets[k] {
                        extend_orthonormal(&mut bases[k], part);
                    }
                }
                if bases.iter().zip(&targets).all(|(b, t)| b.len() == *t) {
                    break 'outer;
                }
            }
        }
    }
    bases
}

fn extend_orthonormal(basis: &mut Vec<Tensor3>, v: Tensor3) {
    let start = v.norm();
    if start < 1e-12 {
        return;
    }
    let mut w = v;
    for _ in 0..2 {
        for b in basis.iter() {
            w = w.sub(&b.scaled(w.dot(b)));
        }
    }
    let r = w.norm();
    if r > 1e-8 * start {
        basis.push(w.scaled(1.0 / r));
    }
}

pub fn decompose(s: &AcmStructure, t: Tensor3) -> IntrinsicTorsion {
    let components = project_components(s, &t);
    let mut norms = [0.0; MODULE_COUNT];
    for (k, c) in components.iter().enumerate() {
        norms[k] = c.norm();
    }
    IntrinsicTorsion {
        n: s.n(),
        t,
        components,
        norms,
    }
}

/// Relative tolerance for the characterization check on computed torsion.
pub const CHARACTERIZATION_TOL: f64 = 1e-10;

/// Intrinsic torsion of the structure at an evaluated point, decomposed.
pub fn intrinsic_torsion(s: &AcmStructure, pe: &PointEvaluation) -> Result<IntrinsicTorsion> {
    let nab = nabla_of_structure(s, &pe.gamma);
    let t = torsion_from_derivatives(s, &nab);
    let scale = t.norm().max(pe.gamma.norm()).max(1.0);
    let r = characterization_residual(s, &t);
    if !(r <= CHARACTERIZATION_TOL * scale) {
        return Err(Error::Structural(format!(
            "intrinsic torsion fails the characterization identity (residual {r:e})"
        )));
    }
    Ok(decompose(s, t))
}

/// Scalars, one-forms and contracted vectors derived from the torsion.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DerivedQuantities {
    /// `d*η = −Σ (∇_{e_i}η)(e_i)`.
    pub dstar_eta: f64,
    /// `d*F(ζ)` with `d*F(X) = −Σ (∇_{e_i}F)(e_i, X)`.
    pub dstar_f_zeta: f64,
    pub dstar_f: Vec<f64>,
    /// Lee form; absent for `n = 1`.
    pub theta: Option<Vec<f64>>,
    /// `ξ_ζη = T(ζ, ζ, ·)`.
    pub xi_zeta_eta: Vec<f64>,
    pub nabla_zeta_zeta: Vec<f64>,
    pub sum_xi_ei_ei: Vec<f64>,
    pub sum_xi4_ei_ei: Vec<f64>,
    pub sum_xi_ei_phi_ei: Vec<f64>,
    pub residuals: DerivedResiduals,
}

/// Residual norms of the vector identities linking the derived quantities.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DerivedResiduals {
    /// `Σξ_{e_i}e_i = −½φ(d*F)^♯ − d*η ζ − ½∇_ζζ`
    pub first_vector: f64,
    /// `Σξ_{e_i}e_i = Σ` of the `C4`, `C5`, `C12` contributions
    pub sum_4_5_12: f64,
    /// `Σξ_{(4)e_i}e_i = −½φ(d*F)^♯ + ½∇_ζζ`
    pub lee: f64,
    /// `Σξ_{(5)e_i}e_i = −d*η ζ`
    pub sum5: f64,
    /// `Σξ_{(12)e_i}e_i = −∇_ζζ`
    pub sum12: f64,
    /// `Σξ_{(6)e_i}φe_i = −d*F(ζ) ζ`
    pub sum6_phi: f64,
    /// Lee form from the formula versus from the `C4` component
    pub theta_vs_c4: f64,
}

impl DerivedQuantities {
    pub fn max_residual(&self) -> f64 {
        let r = &self.residuals;
        [r.first_vector, r.sum_4_5_12, r.lee, r.sum5, r.sum12, r.sum6_phi, r.theta_vs_c4]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn theta_form(&self) -> Option<KForm> {
        self.theta.as_ref().map(|t| KForm::one_form(t))
    }

    pub fn xi_zeta_eta_form(&self) -> KForm {
        KForm::one_form(&self.xi_zeta_eta)
    }
}

fn trace_vector(t: &Tensor3) -> DVector<f64> {
    let d = t.dim();
    DVector::from_fn(d, |k, _| (0..d).map(|i| t.get(i, i, k)).sum::<f64>())
}

fn phi_trace_vector(t: &Tensor3, phi: &DMatrix<f64>) -> DVector<f64> {
    let d = t.dim();
    DVector::from_fn(d, |k, _| {
        (0..d)
            .map(|i| (0..d).map(|j| phi[(j, i)] * t.get(i, j, k)).sum::<f64>())
            .sum::<f64>()
    })
}

pub fn derived_quantities(s: &AcmStructure, xi: &IntrinsicTorsion, gamma: &Tensor3) -> DerivedQuantities {
    let d = s.dim();
    let n = s.n();
    let z = s.zeta();
    let phi = s.phi();
    let nab = nabla_of_structure(s, gamma);
    let dstar_eta = -(0..d).map(|i| nab.eta[(i, i)]).sum::<f64>();
    let dstar_f = DVector::from_fn(d, |x, _| -(0..d).map(|i| nab.phi[i][(i, x)]).sum::<f64>());
    let dstar_f_zeta = dstar_f.dot(z);
    let nzz: DVector<f64> = (0..d).map(|i| z[i] * (connection_matrix(gamma, i) * z)).fold(DVector::zeros(d), |a, b| a + b);
    let theta = if n > 1 {
        Some((-(phi * &dstar_f) + &nzz) / (n as f64 - 1.0))
    } else {
        None
    };
    let xi_zeta_eta = DVector::from_fn(d, |k, _| xi.t.eval(z, z, &unit(d, k)));

    let sum_all = trace_vector(&xi.t);
    let sum4 = trace_vector(xi.component(4));
    let sum5 = trace_vector(xi.component(5));
    let sum12 = trace_vector(xi.component(12));
    let sum_phi = phi_trace_vector(&xi.t, phi);
    let sum6_phi = phi_trace_vector(xi.component(6), phi);

    let first_rhs = -0.5 * (phi * &dstar_f) - z * dstar_eta - 0.5 * &nzz;
    let lee_rhs = -0.5 * (phi * &dstar_f) + 0.5 * &nzz;
    let theta_c4 = lee_form_of(s, xi.component(4));
    let residuals = DerivedResiduals {
        first_vector: (&sum_all - first_rhs).amax(),
        sum_4_5_12: (&sum_all - (&sum4 + &sum5 + &sum12)).amax(),
        lee: (&sum4 - lee_rhs).amax(),
        sum5: (&sum5 + z * dstar_eta).amax(),
        sum12: (&sum12 + &nzz).amax(),
        sum6_phi: (&sum6_phi + z * dstar_f_zeta).amax(),
        theta_vs_c4: theta.as_ref().map_or(0.0, |t| (t - &theta_c4).amax()),
    };
    DerivedQuantities {
        dstar_eta,
        dstar_f_zeta,
        dstar_f: dstar_f.as_slice().to_vec(),
        theta: theta.map(|t| t.as_slice().to_vec()),
        xi_zeta_eta: xi_zeta_eta.as_slice().to_vec(),
        nabla_zeta_zeta: nzz.as_slice().to_vec(),
        sum_xi_ei_ei: sum_all.as_slice().to_vec(),
        sum_xi4_ei_ei: sum4.as_slice().to_vec(),
        sum_xi_ei_phi_ei: sum_phi.as_slice().to_vec(),
        residuals,
    }
}

fn unit(d: usize, k: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[k] = 1.0;
    v
}
