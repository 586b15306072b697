//! Almost contact metric structures with frame-constant `φ`, `ζ`, `η`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::{wedge, FrameVector, KForm};
use crate::tensor::{Tensor3, VectorValuedTwoForm};

/// Default absolute tolerance for structure validation.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// `φ` as a matrix (`φE_j = Σ_i φ[i][j] E_i`) and `ζ` in an orthonormal frame; `η = ζ^♭`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcmStructure {
    n: usize,
    phi: DMatrix<f64>,
    zeta: DVector<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// `‖φ² + I − η⊗ζ‖`
    pub blair: f64,
    /// `|η(ζ) − 1|`
    pub eta_zeta: f64,
    pub phi_zeta: f64,
    pub eta_phi: f64,
    /// `‖φᵀφ − (I − ζζᵀ)‖`
    pub compat: f64,
    /// `(F^n ∧ η)(E_1, ..., E_D)`
    pub orientation: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("phi^2 = -I + eta(x)zeta", self.blair),
            ("eta(zeta) = 1", self.eta_zeta),
            ("phi zeta = 0", self.phi_zeta),
            ("eta o phi = 0", self.eta_phi),
            ("<phi X, phi Y> = <X,Y> - eta(X)eta(Y)", self.compat),
        ] {
            if !(v <= STRUCTURE_TOL) {
                out.push(format!("{name}: residual {v:e}"));
            }
        }
        if !(self.orientation.abs() > 0.5) {
            out.push(format!("F^n ^ eta degenerate: {:e}", self.orientation));
        }
        out
    }
}

impl AcmStructure {
    /// Builds and validates a structure.
    pub fn new(phi: DMatrix<f64>, zeta: DVector<f64>) -> Result<Self> {
        let d = zeta.len();
        if d % 2 == 0 || d < 3 || phi.nrows() != d || phi.ncols() != d {
            return Err(Error::InvalidStructure(format!(
                "dimension must be odd and at least 3 with a square phi; got zeta of length {d} and phi {}x{}",
                phi.nrows(),
                phi.ncols()
            )));
        }
        let s = AcmStructure {
            n: (d - 1) / 2,
            phi,
            zeta,
        };
        let report = s.validate();
        if !report.passed {
            return Err(Error::InvalidStructure(report.failures().join("; ")));
        }
        Ok(s)
    }

    /// `φE_{2a-1} = E_{2a}` for `a = 1..n` and `ζ = E_{2n+1}`.
    pub fn canonical(n: usize) -> Self {
        let d = 2 * n + 1;
        let pairs: Vec<(usize, usize)> = (0..n).map(|a| (2 * a, 2 * a + 1)).collect();
        Self::from_pairs(d, d - 1, &pairs).expect("canonical structure is valid")
    }

    /// `φE_p = E_q`, `φE_q = −E_p` for each pair and `ζ = E_zeta`.
    pub fn from_pairs(dim: usize, zeta: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut phi = DMatrix::zeros(dim, dim);
        for &(p, q) in pairs {
            phi[(q, p)] = 1.0;
            phi[(p, q)] = -1.0;
        }
        let mut z = DVector::zeros(dim);
        z[zeta] = 1.0;
        Self::new(phi, z)
    }

    /// Structure with `ζ = u_0` and `φu_{2a-1} = u_{2a}` for an orthonormal basis `u`
    /// given as matrix columns.
    pub fn from_adapted_basis(basis: &DMatrix<f64>) -> Result<Self> {
        let d = basis.nrows();
        let n = (d - 1) / 2;
        let mut phi = DMatrix::zeros(d, d);
        for a in 0..n {
            let u = basis.column(1 + 2 * a);
            let v = basis.column(2 + 2 * a);
            phi += v * u.transpose() - u * v.transpose();
        }
        Self::new(phi, basis.column(0).into_owned())
    }

    pub fn validate(&self) -> ValidationReport {
        let d = self.dim();
        let id = DMatrix::<f64>::identity(d, d);
        let zz = &self.zeta * self.zeta.transpose();
        let blair = (&self.phi * &self.phi + &id - &zz).amax();
        let eta_zeta = (self.zeta.dot(&self.zeta) - 1.0).abs();
        let phi_zeta = (&self.phi * &self.zeta).amax();
        let eta_phi = (self.zeta.transpose() * &self.phi).amax();
        let compat = (self.phi.transpose() * &self.phi - (&id - &zz)).amax();
        let orientation = self.orientation();
        let mut r = ValidationReport {
            blair,
            eta_zeta,
            phi_zeta,
            eta_phi,
            compat,
            orientation,
            passed: false,
        };
        r.passed = r.failures().is_empty();
        r
    }

    fn orientation(&self) -> f64 {
        let f = self.fundamental_form();
        let mut top = self.eta();
        for _ in 0..self.n {
            top = wedge(&f, &top).expect("degree within dimension");
        }
        top.coefficients()[0]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn zeta(&self) -> &DVector<f64> {
        &self.zeta
    }

    pub fn zeta_vector(&self) -> FrameVector {
        FrameVector(self.zeta.clone())
    }

    pub fn eta(&self) -> KForm {
        KForm::one_form(self.zeta.as_slice())
    }

    /// Orthogonal projection onto `ζ^⊥`, equal to `−φ²`.
    pub fn transverse_projector(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) - &self.zeta * self.zeta.transpose()
    }

    /// `F(X,Y) = <X, φY>`, so `F(E_i,E_j) = φ[i][j]`.
    pub fn fundamental_form(&self) -> KForm {
        KForm::from_matrix(&self.phi)
    }

    /// Same structure with `φ` replaced by `−φ`.
    pub fn conjugate(&self) -> AcmStructure {
        AcmStructure {
            n: self.n,
            phi: -&self.phi,
            zeta: self.zeta.clone(),
        }
    }
}

/// Levi-Civita derivatives of the structure tensors along each frame field.
#[derive(Debug, Clone)]
pub struct StructureDerivatives {
    /// `(∇_{E_i} η)(E_j)` at `[i][j]`.
    pub eta: DMatrix<f64>,
    /// Column `i` is `∇_{E_i} ζ`.
    pub zeta: DMatrix<f64>,
    /// `∇_{E_i} φ` as matrices.
    pub phi: Vec<DMatrix<f64>>,
}

/// Matrix `(Γ_i)[k][j] = Γ^k_{ij}`, so that `∇_{E_i} Y = Γ_i Y` for frame-constant `Y`.
pub fn connection_matrix(gamma: &Tensor3, i: usize) -> DMatrix<f64> {
    let d = gamma.dim();
    DMatrix::from_fn(d, d, |k, j| gamma.get(i, j, k))
}

pub fn nabla_of_structure(s: &AcmStructure, gamma: &Tensor3) -> StructureDerivatives {
    let d = s.dim();
    let mut eta = DMatrix::zeros(d, d);
    let mut zeta = DMatrix::zeros(d, d);
    let mut phi = Vec::with_capacity(d);
    for i in 0..d {
        let g = connection_matrix(gamma, i);
        let dz = &g * s.zeta();
        for j in 0..d {
            eta[(i, j)] = -(0..d).map(|k| gamma.get(i, j, k) * s.zeta()[k]).sum::<f64>();
        }
        zeta.set_column(i, &dz);
        phi.push(&g * s.phi() - s.phi() * &g);
    }
    StructureDerivatives { eta, zeta, phi }
}

/// `[u, v]` for frame-constant vectors from bracket coefficients `c[i][j][k] = c^k_{ij}`.
pub fn bracket(c: &Tensor3, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    c.apply(u, v)
}

fn vv_from_fn(d: usize, mut f: impl FnMut(usize, usize) -> DVector<f64>) -> VectorValuedTwoForm {
    let mut t = Tensor3::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let v = f(i, j);
            for k in 0..d {
                t.set(i, j, k, v[k]);
            }
        }
    }
    t
}

fn basis(d: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[i] = 1.0;
    v
}

/// `N_φ(X,Y) = −φ²[X,Y] − [φX,φY] + φ[φX,Y] + φ[X,φY]` on frame pairs.
pub fn nijenhuis(s: &AcmStructure, c: &Tensor3) -> VectorValuedTwoForm {
    let d = s.dim();
    let phi = s.phi();
    let phi2 = phi * phi;
    vv_from_fn(d, |i, j| {
        let (ei, ej) = (basis(d, i), basis(d, j));
        let (pi, pj) = (phi.column(i).into_owned(), phi.column(j).into_owned());
        -&phi2 * bracket(c, &ei, &ej) - bracket(c, &pi, &pj)
            + phi * bracket(c, &pi, &ej)
            + phi * bracket(c, &ei, &pj)
    })
}

/// The four `GL(n,ℂ)`-components of the Nijenhuis tensor.
#[derive(Debug, Clone)]
pub struct NijenhuisComponents {
    pub w1: VectorValuedTwoForm,
    pub w2: VectorValuedTwoForm,
    pub w3: VectorValuedTwoForm,
    pub w4: VectorValuedTwoForm,
}

/// `N(ζ, E_j)` as column `j`.
fn along_zeta(s: &AcmStructure, n: &VectorValuedTwoForm) -> DMatrix<f64> {
    let d = s.dim();
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        m.set_column(j, &n.apply(s.zeta(), &basis(d, j)));
    }
    m
}

pub fn nijenhuis_w_components(
    s: &AcmStructure,
    n: &VectorValuedTwoForm,
    d_eta: &KForm,
) -> NijenhuisComponents {
    let d = s.dim();
    let z = s.zeta();
    let nz = along_zeta(s, n);
    let de = d_eta.to_matrix();
    let rot = s.phi().transpose() * &de * s.phi();
    let p = s.transverse_projector();
    let flat = &p * &de * &p;
    let w2 = vv_from_fn(d, |i, j| nz.column(j) * z[i] - nz.column(i) * z[j]);
    let w1 = vv_from_fn(d, |i, j| {
        let mut v = DVector::zeros(d);
        for k in 0..d {
            v[k] = n.get(i, j, k);
        }
        v - (nz.column(j) * z[i] - nz.column(i) * z[j]) - z * rot[(i, j)]
    });
    let w3 = vv_from_fn(d, |i, j| z * (0.5 * (rot[(i, j)] + flat[(i, j)])));
    let w4 = vv_from_fn(d, |i, j| z * (0.5 * (rot[(i, j)] - flat[(i, j)])));
    NijenhuisComponents { w1, w2, w3, w4 }
}

/// Components of the structure tensor of the underlying `GL(n,ℂ)`-structure.
#[derive(Debug, Clone)]
pub struct StructureTensor {
    pub t: [VectorValuedTwoForm; 5],
}

pub fn structure_tensor(s: &AcmStructure, n: &VectorValuedTwoForm, d_eta: &KForm) -> StructureTensor {
    let d = s.dim();
    let z = s.zeta();
    let nz = along_zeta(s, n);
    let de = d_eta.to_matrix();
    let rot = s.phi().transpose() * &de * s.phi();
    let p = s.transverse_projector();
    let flat = &p * &de * &p;
    let t1 = vv_from_fn(d, |i, j| {
        let mut v = DVector::zeros(d);
        for k in 0..d {
            v[k] = -2.0 * n.get(i, j, k);
        }
        (v + nz.column(j) * z[i] - nz.column(i) * z[j] + z * (2.0 * rot[(i, j)])) / 8.0
    });
    let t2 = vv_from_fn(d, |i, j| (nz.column(i) * z[j] - nz.column(j) * z[i]) / 2.0);
    let t3 = vv_from_fn(d, |i, j| z * (0.5 * (flat[(i, j)] + rot[(i, j)])));
    let t4 = vv_from_fn(d, |i, j| z * (0.5 * (flat[(i, j)] - rot[(i, j)])));
    let zd = crate::exterior::interior(&s.zeta_vector(), d_eta).expect("two-form");
    let ew = wedge(&s.eta(), &zd).expect("degree two").to_matrix();
    let t5 = vv_from_fn(d, |i, j| z * ew[(i, j)]);
    StructureTensor {
        t: [t1, t2, t3, t4, t5],
    }
}

/// Matrix of `ξ_x` as an endomorphism, entry `[k][j] = <ξ_x E_j, E_k>`.
pub fn xi_matrix(t: &Tensor3, x: &DVector<f64>) -> DMatrix<f64> {
    t.slot_matrix(x)
}

/// `N(ξ)(X,Y) = −φ(ξ_Xφ)Y + φ(ξ_Yφ)X + (ξ_{φX}φ)Y − (ξ_{φY}φ)X`.
pub fn n_of_xi(s: &AcmStructure, t: &Tensor3) -> VectorValuedTwoForm {
    let d = s.dim();
    let phi = s.phi();
    let xphi = |x: &DVector<f64>| {
        let m = xi_matrix(t, x);
        &m * phi - phi * &m
    };
    let direct: Vec<DMatrix<f64>> = (0..d).map(|i| xphi(&basis(d, i))).collect();
    let rotated: Vec<DMatrix<f64>> = (0..d).map(|i| xphi(&phi.column(i).into_owned())).collect();
    vv_from_fn(d, |i, j| {
        let (ei, ej) = (basis(d, i), basis(d, j));
        -phi * (&direct[i] * &ej) + phi * (&direct[j] * &ei) + &rotated[i] * &ej
            - &rotated[j] * &ei
    })
}

/// Residuals of `N_φ(ζ,φX) = −φN_φ(ζ,X)`, `η(N_φ(ζ,X)) = 0` and `η(N_φ(X,Y)) = dη(φX,φY)`.
pub fn nijenhuis_property_residuals(
    s: &AcmStructure,
    n: &VectorValuedTwoForm,
    d_eta: &KForm,
) -> [f64; 3] {
    let d = s.dim();
    let phi = s.phi();
    let z = s.zeta();
    let nz = along_zeta(s, n);
    let rot = phi.transpose() * d_eta.to_matrix() * phi;
    let mut r = [0.0f64; 3];
    for j in 0..d {
        let lhs = n.apply(z, &phi.column(j).into_owned());
        let rhs = -(phi * nz.column(j));
        r[0] = r[0].max((lhs - rhs).amax());
        r[1] = r[1].max(nz.column(j).dot(z).abs());
        for i in 0..d {
            let e = n.apply(&basis(d, i), &basis(d, j)).dot(z);
            r[2] = r[2].max((e - rot[(i, j)]).abs());
        }
    }
    r
}
