//! Differential identities of the intrinsic torsion, checked as residuals at a
//! point. Derivatives of computed fields are central differences along the
//! chart; each residual carries a tolerance scaled to the step and to the
//! size of its terms.

use std::cell::RefCell;
use std::collections::BTreeSet;

use nalgebra::DVector;
use serde::Serialize;

use crate::acms::{nijenhuis, nijenhuis_property_residuals, AcmStructure};
use crate::classify::{active_set, structure_differentials, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::exterior::{form_inner, interior, split_two_form, wedge, KForm};
use crate::model::{FdOptions, FrameModel, PointEvaluation};
use crate::tensor::Tensor3;
use crate::torsion::{derived_quantities, intrinsic_torsion, DerivedQuantities, IntrinsicTorsion, MODULE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Default,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

/// Residuals at a sequence of decreasing steps with the observed orders.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Convergence {
    pub steps: Vec<f64>,
    pub residuals: Vec<f64>,
    pub orders: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IdentityResidual {
    pub id: String,
    pub description: String,
    pub tier: Tier,
    pub verdict: Verdict,
    pub residual: Option<f64>,
    pub tolerance: Option<f64>,
    pub scale: Option<f64>,
    pub reason: Option<String>,
    pub convergence: Option<Convergence>,
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub tier: Tier,
    /// Relative step for the outer derivatives; the model's step when `None`.
    pub step: Option<f64>,
    /// Multiplier in `tolerance = factor·(h² + ε_inner/h)·scale`.
    pub tolerance_factor: f64,
    /// Overrides the automatic tolerance.
    pub tolerance: Option<f64>,
    pub convergence: bool,
    /// Relative threshold for the local type that gates identities.
    pub type_tol: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            tier: Tier::Default,
            step: None,
            tolerance_factor: 100.0,
            tolerance: None,
            convergence: true,
            type_tol: DEFAULT_TOL,
        }
    }
}

/// Steps used for the convergence check.
pub const CONVERGENCE_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Everything computed at one point.
#[derive(Debug, Clone)]
pub struct PointFields {
    pub evaluation: PointEvaluation,
    pub xi: IntrinsicTorsion,
    pub derived: DerivedQuantities,
}

pub fn point_fields(s: &AcmStructure, m: &FrameModel, x: &[f64]) -> Result<PointFields> {
    let evaluation = m.evaluate(x)?;
    let xi = intrinsic_torsion(s, &evaluation)?;
    let derived = derived_quantities(s, &xi, &evaluation.gamma);
    Ok(PointFields {
        evaluation,
        xi,
        derived,
    })
}

/// Flat layout of the differentiated fields: `d*η`, `d*F(ζ)`, `θ`, `ξ_ζη`, `T`, `T_1..T_12`.
struct Layout {
    d: usize,
}

impl Layout {
    const DSTAR_ETA: usize = 0;
    const DSTAR_F: usize = 1;

    fn theta(&self) -> usize {
        2
    }

    fn xze(&self) -> usize {
        2 + self.d
    }

    fn tensor(&self, k: usize) -> usize {
        2 + 2 * self.d + k * self.d.pow(3)
    }

    fn len(&self) -> usize {
        self.tensor(MODULE_COUNT + 1)
    }

    fn pack(&self, f: &PointFields) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.push(f.derived.dstar_eta);
        v.push(f.derived.dstar_f_zeta);
        match &f.derived.theta {
            Some(t) => v.extend_from_slice(t),
            None => v.extend(std::iter::repeat(0.0).take(self.d)),
        }
        v.extend_from_slice(&f.derived.xi_zeta_eta);
        v.extend_from_slice(f.xi.t.as_slice());
        for c in &f.xi.components {
            v.extend_from_slice(c.as_slice());
        }
        v
    }
}

/// Frame derivatives of the packed fields at one point, with the set of
/// modules seen anywhere on the stencil.
struct Derivatives {
    rows: Vec<Vec<f64>>,
    local_type: Vec<usize>,
}

fn differentiate(s: &AcmStructure, m: &FrameModel, x: &[f64], opts: FdOptions, type_tol: f64) -> Result<Derivatives> {
    let layout = Layout { d: s.dim() };
    let seen = RefCell::new(BTreeSet::new());
    let field = |y: &[f64]| -> Result<Vec<f64>> {
        let f = point_fields(s, m, y)?;
        seen.borrow_mut().extend(active_set(&f.xi.norms, type_tol));
        Ok(layout.pack(&f))
    };
    let rows = m.frame_derivatives(&field, x, opts)?;
    field(x)?;
    Ok(Derivatives {
        rows,
        local_type: seen.into_inner().into_iter().collect(),
    })
}

fn unit(d: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[i] = 1.0;
    v
}

fn subset(set: &[usize], of: &[usize]) -> bool {
    set.iter().all(|k| of.contains(k))
}

/// Everything an identity needs at one step.
struct Context<'a> {
    s: &'a AcmStructure,
    n: f64,
    d: usize,
    z: DVector<f64>,
    base: &'a PointFields,
    local_type: Vec<usize>,
    /// `d(d*η)`, `d(d*F(ζ))`
    d_dstar_eta: DVector<f64>,
    d_dstar_f: DVector<f64>,
    d_theta: Option<KForm>,
    d_xze: KForm,
    /// `d(d*η η)`
    d_dstar_eta_eta: KForm,
    /// `∇^U_ζ T` and `∇^U_ζ T_k` (index `k`, `0` for the full tensor)
    nabla_zeta: Vec<Tensor3>,
    /// `∇^U_{E_a} T_k` for every frame direction (full tier only)
    nabla_all: Option<Vec<Vec<Tensor3>>>,
}

impl<'a> Context<'a> {
    fn build(s: &'a AcmStructure, base: &'a PointFields, der: Derivatives, full: bool) -> Self {
        let d = s.dim();
        let layout = Layout { d };
        let packed = layout.pack(base);
        let z = s.zeta().clone();
        let c = &base.evaluation.brackets;
        let rows = &der.rows;
        let grad = |slot: usize| DVector::from_fn(d, |i, _| rows[i][slot]);
        let d_one = |start: usize| -> KForm {
            KForm::from_fn(d, 2, |ij| {
                let (i, j) = (ij[0], ij[1]);
                rows[i][start + j] - rows[j][start + i]
                    - (0..d).map(|k| c.get(i, j, k) * packed[start + k]).sum::<f64>()
            })
        };
        let d_dstar_eta = grad(Layout::DSTAR_ETA);
        let a = packed[Layout::DSTAR_ETA];
        let d_dstar_eta_eta = KForm::from_fn(d, 2, |ij| {
            let (i, j) = (ij[0], ij[1]);
            d_dstar_eta[i] * z[j] - d_dstar_eta[j] * z[i] - a * (0..d).map(|k| c.get(i, j, k) * z[k]).sum::<f64>()
        });
        // minimal connection ∇^U = ∇ + ξ
        let conn = base.evaluation.gamma.add(&base.xi.t);
        let nabla_tensor = |k: usize, a_dir: &DVector<f64>| -> Tensor3 {
            let start = layout.tensor(k);
            let value = |i: usize, j: usize, l: usize| packed[start + (i * d + j) * d + l];
            let dir_conn = |i: usize, mm: usize| (0..d).map(|b| a_dir[b] * conn.get(b, i, mm)).sum::<f64>();
            Tensor3::from_fn(d, |i, j, l| {
                let flat = (i * d + j) * d + l;
                let derivative: f64 = (0..d).map(|b| a_dir[b] * rows[b][start + flat]).sum();
                let correction: f64 = (0..d)
                    .map(|mm| dir_conn(i, mm) * value(mm, j, l) + dir_conn(j, mm) * value(i, mm, l) + dir_conn(l, mm) * value(i, j, mm))
                    .sum();
                derivative - correction
            })
        };
        let nabla_zeta = (0..=MODULE_COUNT).map(|k| nabla_tensor(k, &z)).collect();
        let nabla_all = full.then(|| {
            (0..d)
                .map(|b| (0..=MODULE_COUNT).map(|k| nabla_tensor(k, &unit(d, b))).collect())
                .collect()
        });
        Context {
            s,
            n: s.n() as f64,
            d,
            base,
            local_type: der.local_type,
            d_dstar_f: grad(Layout::DSTAR_F),
            d_dstar_eta,
            d_theta: (s.n() > 1).then(|| d_one(layout.theta())),
            d_xze: d_one(layout.xze()),
            d_dstar_eta_eta,
            nabla_zeta,
            nabla_all,
            z,
        }
    }

    fn comp(&self, k: usize) -> &Tensor3 {
        self.base.xi.component(k)
    }

    fn a(&self) -> f64 {
        self.base.derived.dstar_eta
    }

    fn b(&self) -> f64 {
        self.base.derived.dstar_f_zeta
    }

    fn xze(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.base.derived.xi_zeta_eta)
    }

    fn phi_col(&self, i: usize) -> DVector<f64> {
        self.s.phi().column(i).into_owned()
    }

    /// `ξ_(k)X ζ`, the vector dual to `ξ_(k)X η`.
    fn xz(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        self.comp(k).apply(x, &self.z)
    }

    /// `ξ_(k)ζ X`.
    fn zx(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        self.comp(k).apply(&self.z, x)
    }

    fn f_inner_dxze(&self) -> f64 {
        form_inner(&self.d_xze, &self.s.fundamental_form()).expect("two-forms")
    }

    /// `((∇^U_ζ ξ_(k))_X η)(Y)`; `k = 0` is the full tensor.
    fn nabla_eta(&self, k: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.nabla_zeta[k].eval(x, &self.z, y)
    }

    fn two_form(&self, transverse: bool, f: impl Fn(&DVector<f64>, &DVector<f64>) -> f64) -> KForm {
        let p = self.s.transverse_projector();
        let d = self.d;
        let vec = |i: usize| if transverse { p.column(i).into_owned() } else { unit(d, i) };
        KForm::from_fn(d, 2, |ij| f(&vec(ij[0]), &vec(ij[1])))
    }

    fn frame_sum(&self, f: impl Fn(&DVector<f64>) -> f64) -> f64 {
        (0..self.d).map(|i| f(&unit(self.d, i))).sum()
    }
}

/// One evaluated identity before the tolerance is applied.
struct Raw {
    id: &'static str,
    description: &'static str,
    tier: Tier,
    gate: std::result::Result<(), String>,
    residual: f64,
    terms: Vec<f64>,
}

impl Raw {
    fn new(id: &'static str, description: &'static str) -> Self {
        Raw {
            id,
            description,
            tier: Tier::Default,
            gate: Ok(()),
            residual: 0.0,
            terms: Vec::new(),
        }
    }

    fn gated(mut self, ok: bool, why: impl Into<String>) -> Self {
        if ok {
            self.gate = Ok(());
        } else {
            self.gate = Err(why.into());
        }
        self
    }

    fn value(mut self, residual: f64, terms: &[f64]) -> Self {
        self.residual = residual;
        self.terms = terms.to_vec();
        self
    }

    fn full_tier(mut self) -> Self {
        self.tier = Tier::Full;
        self
    }

    fn scale(&self) -> f64 {
        self.terms.iter().fold(1.0f64, |m, t| m.max(t.abs()))
    }
}

fn one_norm(v: &DVector<f64>) -> f64 {
    v.norm()
}

fn type_text(set: &[usize]) -> String {
    let parts: Vec<String> = set.iter().map(|k| k.to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

const I2_PATTERNS: [&[usize]; 2] = [&[1, 2, 3, 5, 6, 9, 12], &[1, 2, 5, 6, 7, 9, 12]];
const I2_CLOSED: &[usize] = &[1, 2, 3, 5, 9, 12];
const I3_PATTERN: &[usize] = &[1, 2, 3, 4, 5, 6, 8, 9, 11, 12];
const THEOREM_TYPE: &[usize] = &[1, 2, 3, 5, 6, 8, 9, 11, 12];

fn vanishing_patterns(case: usize) -> Vec<Vec<usize>> {
    let with = |base: &[usize], extra: &[usize]| -> Vec<usize> {
        let mut v: Vec<usize> = base.iter().chain(extra).copied().collect();
        v.sort_unstable();
        v
    };
    match case {
        1 => [(7, 10), (7, 11), (8, 10), (8, 11)]
            .iter()
            .map(|&(x, y)| with(&[1, 2, 3, 4, 5, 9, 12], &[x, y]))
            .collect(),
        2 => [6, 8]
            .iter()
            .flat_map(|&x| vec![with(&[1, 2, 3, 4, 5, 9, 11, 12], &[x]), with(&[1, 2, 3, 4, 5, 10, 12], &[x])])
            .collect(),
        3 => vec![vec![1, 2, 3, 4, 5, 8, 9, 11, 12], vec![1, 2, 3, 4, 5, 8, 10, 12]],
        4 => [(6, 7), (6, 9), (9, 11)]
            .iter()
            .map(|&(x, y)| with(&[1, 2, 3, 4, 5, 8, 12], &[x, y]))
            .collect(),
        5 => vec![vec![1, 2, 3, 4, 5, 8, 9, 11, 12]],
        _ => Vec::new(),
    }
}

fn any_pattern(local: &[usize], patterns: &[Vec<usize>]) -> bool {
    patterns.iter().any(|p| subset(local, p))
}

/// Right-hand side of the `[λ^{1,1}]` formula for `dξ_ζη`.
fn l11_formula(c: &Context, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let (n, a, b) = (c.n, c.a(), c.b());
    let phi = c.s.phi();
    let f_xy = x.dot(&(phi * y));
    let dbz = c.d_dstar_f.dot(&c.z);
    -dbz / n * f_xy + a * b / (n * n) * f_xy + 2.0 * c.nabla_eta(7, x, y) - 2.0 / n * a * c.xz(7, x).dot(y)
        + 2.0 / n * b * c.xz(8, x).dot(&(phi * y))
        - 2.0 * c.xz(7, x).dot(&c.xz(8, y))
        + 2.0 * c.xz(7, y).dot(&c.xz(8, x))
        + 2.0 * c.xz(9, x).dot(&c.xz(10, y))
        - 2.0 * c.xz(9, y).dot(&c.xz(10, x))
        + 2.0 * c.xz(10, x).dot(&c.zx(11, y))
        - 2.0 * c.xz(10, y).dot(&c.zx(11, x))
}

/// Right-hand side of the `⟦λ^{2,0}⟧` formula for `dξ_ζη`.
fn l20_formula(c: &Context, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let (n, a, b) = (c.n, c.a(), c.b());
    let phi = c.s.phi();
    2.0 * c.nabla_eta(10, x, y) - 2.0 / n * b * c.zx(11, x).dot(&(phi * y))
        - 2.0 * c.xz(7, x).dot(&c.xz(9, y))
        + 2.0 * c.xz(7, y).dot(&c.xz(9, x))
        + 2.0 * c.xz(7, x).dot(&c.zx(11, y))
        - 2.0 * c.xz(7, y).dot(&c.zx(11, x))
        - 2.0 / n * a * c.xz(10, x).dot(y)
        + 2.0 * c.xz(8, x).dot(&c.xz(10, y))
        - 2.0 * c.xz(8, y).dot(&c.xz(10, x))
}

/// Right-hand side of the formula for `ζ ⌟ dξ_ζη` on `X`.
fn eta_formula(c: &Context, x: &DVector<f64>) -> f64 {
    let (n, a, b) = (c.n, c.a(), c.b());
    let phi = c.s.phi();
    let z = &c.z;
    let w = c.zx(12, z);
    c.nabla_zeta[12].eval(z, z, x) + w.dot(&c.zx(11, x)) - a / (2.0 * n) * w.dot(x) - c.xz(8, &w).dot(x)
        - c.xz(9, &w).dot(x)
        - b / (2.0 * n) * w.dot(&(phi * x))
        + c.xz(7, &w).dot(x)
        + c.xz(10, &w).dot(x)
}

/// `dξ_ζη` written through `∇^U_ζ ξ` and quadratic terms in `ξ`.
fn extder_formula(c: &Context) -> KForm {
    let t = &c.base.xi.t;
    let z = &c.z;
    c.two_form(false, |x, y| {
        let xz = t.apply(x, z);
        let yz = t.apply(y, z);
        let zx = t.apply(z, x);
        let zy = t.apply(z, y);
        c.nabla_eta(0, x, y) - c.nabla_eta(0, y, x) + xz.dot(&zy) - yz.dot(&zx) - t.apply(&xz, z).dot(y)
            + t.apply(&yz, z).dot(x)
            + t.apply(&zx, z).dot(y)
            - t.apply(&zy, z).dot(x)
    })
}

fn evaluate_identities(c: &Context, tier: Tier) -> Vec<Raw> {
    let s = c.s;
    let n = s.n();
    let nf = c.n;
    let (a, b) = (c.a(), c.b());
    let z = &c.z;
    let phi = s.phi();
    let eta = s.eta();
    let local = &c.local_type;
    let local_text = type_text(local);
    let xze = c.xze();
    let f_dxze = c.f_inner_dxze();
    let dbz = c.d_dstar_f.dot(z);
    let mut out = Vec::new();

    // trace of dθ against F
    {
        let r = Raw::new("I1", "<dθ,F> = (1/n) d*η d*F(ζ) + 2/(n−1) Σ<ξ7_{φe_i}ζ, ξ8_{e_i}ζ> + 2/(n−1) Σ<ξ11_ζ φe_i, ξ10_{e_i}ζ>");
        match &c.d_theta {
            None => out.push(r.gated(false, "the Lee form needs n > 1")),
            Some(dt) => {
                let lhs = form_inner(dt, &s.fundamental_form()).expect("two-forms");
                let s7 = (0..c.d).map(|i| c.xz(7, &c.phi_col(i)).dot(&c.xz(8, &unit(c.d, i)))).sum::<f64>();
                let s11 = (0..c.d).map(|i| c.zx(11, &c.phi_col(i)).dot(&c.xz(10, &unit(c.d, i)))).sum::<f64>();
                let k = 2.0 / (nf - 1.0);
                let rhs = a * b / nf + k * (s7 + s11);
                out.push(r.value((lhs - rhs).abs(), &[lhs, a * b / nf, k * s7, k * s11]));
            }
        }
    }

    // d(d*η)
    {
        let ok = n > 1 && I2_PATTERNS.iter().any(|p| subset(local, p));
        let lhs = &c.d_dstar_eta;
        let rhs = -a * &xze + z * lhs.dot(z);
        let r = Raw::new("I2", "d(d*η) = −d*η ξ_ζη + d(d*η)(ζ) η")
            .gated(ok, format!("local type {local_text} outside C1⊕C2⊕C3⊕C5⊕C6⊕C9⊕C12 and C1⊕C2⊕C5⊕C6⊕C7⊕C9⊕C12, or n = 1"));
        out.push(r.value(one_norm(&(lhs - &rhs)), &[lhs.norm(), a * xze.norm()]));

        let ok = n > 1 && subset(local, I2_CLOSED);
        let r = Raw::new("I2-closed", "d(d*η η) = 0")
            .gated(ok, format!("local type {local_text} outside C1⊕C2⊕C3⊕C5⊕C9⊕C12, or n = 1"));
        out.push(r.value(c.d_dstar_eta_eta.norm(), &[lhs.norm(), a]));
    }

    // d(d*F(ζ)) in closed form
    {
        let ok = n > 1 && subset(local, I3_PATTERN);
        let r = Raw::new("I3", "d(d*F(ζ)) = −d*F(ζ) θ + d*F(ζ) ξ_ζη + ((1/n) d*η d*F(ζ) − <dξ_ζη,F>) η")
            .gated(ok, format!("local type {local_text} outside C1⊕C2⊕C3⊕C4⊕C5⊕C6⊕C8⊕C9⊕C11⊕C12, or n = 1"));
        let theta = c.base.derived.theta.as_ref().map_or(DVector::zeros(c.d), |t| DVector::from_column_slice(t));
        let coefficient = a * b / nf - f_dxze;
        let rhs = -b * &theta + b * &xze + z * coefficient;
        out.push(r.value(
            (&c.d_dstar_f - &rhs).norm(),
            &[c.d_dstar_f.norm(), b * theta.norm(), b * xze.norm(), coefficient],
        ));
    }

    // d(d*F(ζ))(ζ)
    let s78 = c.frame_sum(|e| c.xz(7, e).dot(&(phi * c.xz(8, e))));
    let s1011 = c.frame_sum(|e| c.xz(10, e).dot(&(phi * c.zx(11, e))));
    {
        let rhs = a * b / nf - f_dxze + 2.0 * s78 + 2.0 * s1011;
        let r = Raw::new("I4", "d(d*F(ζ))(ζ) = (1/n) d*η d*F(ζ) − <dξ_ζη,F> + 2Σ(ξ7_{e_i}η)(φξ8_{e_i}ζ) + 2Σ(ξ10_{e_i}η)(φξ11_ζ e_i)");
        out.push(r.value((dbz - rhs).abs(), &[dbz, a * b / nf, f_dxze, 2.0 * s78, 2.0 * s1011]));
    }

    // components of dξ_ζη
    let direct = &c.d_xze;
    let split = split_two_form(direct, s).expect("two-form of the structure's dimension");
    let extder = extder_formula(c);
    let r11 = split_two_form(&c.two_form(true, |x, y| l11_formula(c, x, y)), s).expect("two-form").l11();
    let r20 = split_two_form(&c.two_form(true, |x, y| l20_formula(c, x, y)), s).expect("two-form").l20;
    let p = s.transverse_projector();
    let reta = KForm::one_form(
        &(0..c.d)
            .map(|i| eta_formula(c, &p.column(i).into_owned()))
            .collect::<Vec<_>>(),
    );
    let zeta_d = interior(&s.zeta_vector(), direct).expect("two-form");
    let assembled = r11.add(&r20).add(&wedge(&eta, &reta).expect("one-forms"));
    {
        let big = direct.norm().max(extder.norm());
        out.push(
            Raw::new("I5-extder", "dξ_ζη through ∇^U_ζ ξ and quadratic terms in ξ")
                .value(direct.sub(&extder).norm(), &[direct.norm(), extder.norm()]),
        );
        out.push(
            Raw::new("I5-rf", "<dξ_ζη,F> = −d(d*F(ζ))(ζ) + (1/n) d*η d*F(ζ) + 2Σ(ξ7η)(φξ8ζ) + 2Σ(ξ10η)(φξ11ζ)").value(
                (f_dxze - (-dbz + a * b / nf + 2.0 * s78 + 2.0 * s1011)).abs(),
                &[f_dxze, dbz, a * b / nf, 2.0 * s78, 2.0 * s1011],
            ),
        );
        out.push(
            Raw::new("I5-l11", "[λ11] part of dξ_ζη from ∇^U_ζ ξ7 and products of components")
                .value(split.l11().sub(&r11).norm(), &[split.l11().norm(), r11.norm(), big]),
        );
        out.push(
            Raw::new("I5-l20", "⟦λ20⟧ part of dξ_ζη from ∇^U_ζ ξ10 and products of components")
                .value(split.l20.sub(&r20).norm(), &[split.l20.norm(), r20.norm(), big]),
        );
        out.push(
            Raw::new("I5-eta", "ζ ⌟ dξ_ζη from ∇^U_ζ ξ12 and products of components")
                .value(zeta_d.sub(&reta).norm(), &[zeta_d.norm(), reta.norm(), big]),
        );
        out.push(
            Raw::new("I5-routes", "component formulas reassembled against the ∇^U_ζ ξ expression")
                .value(assembled.sub(&extder).norm(), &[assembled.norm(), extder.norm()]),
        );
    }

    // vanishing conditions
    {
        let f = s.fundamental_form();
        let cases: [(&'static str, &'static str, f64); 5] = [
            ("I6-i", "<dξ_ζη,F> = 0", f_dxze.abs()),
            ("I6-ii", "[λ11_0] part of dξ_ζη vanishes", split.l11_0.norm()),
            ("I6-iii", "[λ11] part of dξ_ζη vanishes", split.l11().norm()),
            ("I6-iv", "⟦λ20⟧ part of dξ_ζη vanishes", split.l20.norm()),
            ("I6-v", "dξ_ζη lies in η∧⟦λ10⟧", direct.sub(&split.eta_wedge).norm()),
        ];
        for (case, (id, description, residual)) in cases.into_iter().enumerate() {
            let patterns = vanishing_patterns(case + 1);
            let ok = any_pattern(local, &patterns);
            let r = Raw::new(id, description).gated(ok, format!("local type {local_text} matches none of the hypotheses"));
            out.push(r.value(residual, &[direct.norm(), form_inner(direct, &f).expect("two-forms")]));
        }
    }

    // consequences of the non-existence theorem
    {
        let scale_xi = c.base.xi.norm().powi(2);
        let small_f = f_dxze.abs() <= 1e-6 * direct.norm().max(1.0);
        let ok = n > 1 && subset(local, THEOREM_TYPE) && small_f;
        let r = Raw::new("I7", "d*η d*F(ζ) = 0 for types in C1⊕C2⊕C3⊕C5⊕C6⊕C8⊕C9⊕C11⊕C12 with <dξ_ζη,F> = 0")
            .gated(ok, format!("local type {local_text}, <dξ_ζη,F> = {f_dxze:e}, n = {n}"));
        out.push(r.value((a * b).abs(), &[scale_xi]));

        let ok = n > 1 && subset(local, &[2, 6, 9, 12]) && local.contains(&6) && small_f;
        let r = Raw::new("I7-c2c6c9c12", "d(d*F(ζ)) = d*F(ζ) ξ_ζη and dξ_ζη = 0 for C2⊕C6⊕C9⊕C12 with ξ6 ≠ 0")
            .gated(ok, format!("local type {local_text}, <dξ_ζη,F> = {f_dxze:e}, n = {n}"));
        let residual = (&c.d_dstar_f - b * &xze).norm().max(direct.norm());
        out.push(r.value(residual, &[c.d_dstar_f.norm(), b * xze.norm()]));
    }

    if tier == Tier::Full {
        out.extend(full_tier(c));
    }
    out
}

type Term<'a> = (f64, Box<dyn Fn(&DVector<f64>) -> f64 + 'a>);

/// Worst residual of `lhs(X) = Σ coefficient·term(X)` over the given vectors.
fn display_residual(
    id: &'static str,
    description: &'static str,
    lhs: &dyn Fn(&DVector<f64>) -> f64,
    terms: &[Term],
    vectors: &[DVector<f64>],
) -> Raw {
    let mut worst: f64 = 0.0;
    let mut big: f64 = 0.0;
    for x in vectors {
        let l = lhs(x);
        let values: Vec<f64> = terms.iter().map(|(_, f)| f(x)).collect();
        let r: f64 = terms.iter().zip(&values).map(|((k, _), v)| k * v).sum();
        worst = worst.max((l - r).abs());
        big = terms.iter().zip(&values).fold(big.max(l.abs()), |m, ((k, _), v)| m.max((k * v).abs()));
    }
    Raw::new(id, description).value(worst, &[big])
}

/// Heavier identities off by default: the `ζ`-component of `dθ` and the
/// transverse part of `d(d*F(ζ))`, both with divergence terms of `∇^U ξ`.
fn full_tier(c: &Context) -> Vec<Raw> {
    let s = c.s;
    let d = c.d;
    let n = c.n;
    let (a, b) = (c.a(), c.b());
    let z = &c.z;
    let phi = s.phi();
    let Some(nabla) = &c.nabla_all else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let e = |i: usize| unit(d, i);
    let theta = c.base.derived.theta.as_ref().map_or(DVector::zeros(d), |t| DVector::from_column_slice(t));
    let w12 = c.zx(12, z);
    let p = s.transverse_projector();
    let xze = c.xze();
    // Σ_i ((∇^U_{e_i} ξ_(k))_{e_i} η)(X)
    let div_eta = |k: usize, x: &DVector<f64>| (0..d).map(|i| nabla[i][k].eval(&e(i), z, x)).sum::<f64>();

    if let (Some(dt), true) = (&c.d_theta, s.n() > 1) {
        let dd_eta = &c.d_dstar_eta;
        let t = &c.base.xi.t;
        let wzz = t.apply(z, z);
        let sum11 = |x: &DVector<f64>| (0..d).map(|i| nabla[i][11].eval(z, &e(i), x)).sum::<f64>();
        let terms: Vec<Term> = vec![
            ((n - 1.0) / (2.0 * n), Box::new(|x| dd_eta.dot(&(phi * (phi * x))))),
            (1.0, Box::new(|x| div_eta(8, x))),
            (-1.0, Box::new(|x| div_eta(10, x))),
            (1.0, Box::new(sum11)),
            (-1.0, Box::new(|x| c.frame_sum(|ei| c.xz(7, ei).dot(&c.comp(3).apply(ei, x))))),
            (-1.0, Box::new(|x| c.frame_sum(|ei| c.xz(8, ei).dot(&c.comp(3).apply(ei, x))))),
            (1.0, Box::new(|x| c.frame_sum(|ei| c.xz(10, ei).dot(&c.comp(1).apply(x, ei))))),
            (-0.5, Box::new(|x| c.frame_sum(|ei| c.xz(10, ei).dot(&c.comp(2).apply(x, ei))))),
            (1.0, Box::new(|x| c.frame_sum(|ei| c.zx(11, ei).dot(&c.comp(1).apply(x, ei))))),
            (-0.5, Box::new(|x| c.frame_sum(|ei| c.zx(11, ei).dot(&c.comp(2).apply(x, ei))))),
            (-n / 2.0, Box::new(|x| c.xz(8, &theta).dot(x))),
            ((n - 1.0) / 2.0, Box::new(|x| c.xz(10, &theta).dot(x))),
            ((n - 1.0) / 2.0, Box::new(|x| theta.dot(&c.zx(11, x)))),
            (-(n - 1.0) / (2.0 * n), Box::new(|x| a * xze.dot(x))),
            (-1.0, Box::new(|x| c.xz(10, &wzz).dot(x))),
            (-1.0, Box::new(|x| c.zx(11, x).dot(&wzz))),
        ];
        let lhs = |x: &DVector<f64>| (n - 1.0) / 2.0 * dt.eval(&[z.clone(), x.clone()]);
        let vectors: Vec<DVector<f64>> = (0..d).map(e).collect();
        out.push(
            display_residual("F1", "(n−1)/2 dθ(ζ,X) through divergences of ∇^U ξ8, ξ10, ξ11", &lhs, &terms, &vectors)
                .full_tier(),
        );

        let terms: Vec<Term> = vec![
            (1.0, Box::new(|x| div_eta(7, &(phi * x)))),
            (-1.0, Box::new(|x| div_eta(10, &(phi * x)))),
            (-1.0, Box::new(|x| c.frame_sum(|ei| c.xz(7, ei).dot(&c.comp(3).apply(ei, &(phi * x)))))),
            (-2.0, Box::new(|x| c.frame_sum(|ei| c.xz(10, ei).dot(&c.comp(1).apply(&(phi * x), ei))))),
            (-0.5, Box::new(|x| c.frame_sum(|ei| c.xz(10, ei).dot(&c.comp(2).apply(&(phi * x), ei))))),
            (-(n - 1.0) / (2.0 * n), Box::new(|x| b * theta.dot(x))),
            (-(n - 1.0) / 2.0, Box::new(|x| c.xz(7, &theta).dot(&(phi * x)))),
            ((n - 2.0) / 2.0, Box::new(|x| c.xz(10, &theta).dot(&(phi * x)))),
            ((n - 1.0) / (2.0 * n), Box::new(|x| b * w12.dot(x))),
            (-1.0, Box::new(|x| c.xz(7, &w12).dot(&(phi * x)))),
            (1.0, Box::new(|x| c.xz(10, &w12).dot(&(phi * x)))),
        ];
        let lhs = |x: &DVector<f64>| (n - 1.0) / (2.0 * n) * c.d_dstar_f.dot(x);
        let vectors: Vec<DVector<f64>> = (0..d).map(|i| p.column(i).into_owned()).collect();
        out.push(
            display_residual("F2", "(n−1)/2n d(d*F(ζ)) on ζ^⊥ through divergences of ∇^U ξ7, ξ10", &lhs, &terms, &vectors)
                .full_tier(),
        );
    }
    out
}

/// Algebraic properties of `N_φ`, independent of derivatives of computed fields.
fn nijenhuis_identity(s: &AcmStructure, base: &PointFields) -> Result<Raw> {
    let c = &base.evaluation.brackets;
    let (d_eta, _) = structure_differentials(s, c)?;
    let n_phi = nijenhuis(s, c);
    let r = nijenhuis_property_residuals(s, &n_phi, &d_eta);
    let residual = r.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(Raw::new(
        "I8",
        "N_φ(ζ,φX) = −φN_φ(ζ,X), η(N_φ(ζ,X)) = 0, η(N_φ(X,Y)) = dη(φX,φY)",
    )
    .value(residual, &[n_phi.norm(), d_eta.norm()]))
}

fn inner_error(m: &FrameModel) -> f64 {
    if m.has_closed_brackets() && m.conformal_factor().is_none() {
        f64::EPSILON
    } else {
        1e-12
    }
}

fn fd_tolerance(opts: &SuiteOptions, m: &FrameModel, x: &[f64], step: f64, scale: f64) -> f64 {
    if let Some(t) = opts.tolerance {
        return t * scale;
    }
    let reach = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let h = step * reach;
    opts.tolerance_factor * (h * h + inner_error(m) / h) * scale
}

/// Raw residuals at one outer step; `Err` when a stencil leaves the domain.
fn raw_at_step(
    s: &AcmStructure,
    m: &FrameModel,
    x: &[f64],
    base: &PointFields,
    step: f64,
    opts: &SuiteOptions,
) -> Result<Vec<Raw>> {
    let fd = FdOptions {
        step,
        richardson: false,
    };
    let der = differentiate(s, m, x, fd, opts.type_tol)?;
    let ctx = Context::build(s, base, der, opts.tier == Tier::Full);
    Ok(evaluate_identities(&ctx, opts.tier))
}

fn is_stencil_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::StencilOutsideDomain { .. } | Error::OutsideDomain { .. } | Error::SingularFrame { .. }
    )
}

/// Evaluates every registered identity at `x`.
pub fn run_identity_suite(s: &AcmStructure, m: &FrameModel, x: &[f64], opts: &SuiteOptions) -> Result<Vec<IdentityResidual>> {
    let base = point_fields(s, m, x)?;
    let step = opts.step.unwrap_or(m.fd_step());
    let mut results = Vec::new();
    match raw_at_step(s, m, x, &base, step, opts) {
        Ok(raws) => {
            let sequences: Option<Vec<Vec<Raw>>> = if opts.convergence {
                CONVERGENCE_STEPS
                    .iter()
                    .map(|h| raw_at_step(s, m, x, &base, *h, opts).ok())
                    .collect()
            } else {
                None
            };
            for (idx, raw) in raws.into_iter().enumerate() {
                let scale = raw.scale();
                let tolerance = fd_tolerance(opts, m, x, step, scale);
                let mut r = finish(raw, scale, tolerance);
                if r.verdict != Verdict::NotApplicable {
                    if let Some(seqs) = &sequences {
                        let residuals: Vec<f64> = seqs.iter().map(|v| v[idx].residual).collect();
                        let conv = convergence(&residuals, tolerance);
                        if !conv.passed && r.verdict == Verdict::Pass {
                            r.verdict = Verdict::Fail;
                            r.reason = Some("residual does not decrease at second order".into());
                        }
                        r.convergence = Some(conv);
                    }
                }
                results.push(r);
            }
        }
        Err(e) if is_stencil_failure(&e) => {
            results.push(IdentityResidual {
                id: "I1-I7".into(),
                description: "identities with derivatives of computed fields".into(),
                tier: Tier::Default,
                verdict: Verdict::NotApplicable,
                residual: None,
                tolerance: None,
                scale: None,
                reason: Some(format!("finite-difference stencil failed: {e}")),
                convergence: None,
            });
        }
        Err(e) => return Err(e),
    }
    let raw = nijenhuis_identity(s, &base)?;
    let scale = raw.scale();
    results.push(finish(raw, scale, 1e-10 * scale));
    Ok(results)
}

fn finish(raw: Raw, scale: f64, tolerance: f64) -> IdentityResidual {
    let (verdict, reason) = match &raw.gate {
        Err(why) => (Verdict::NotApplicable, Some(why.clone())),
        Ok(()) if raw.residual.is_finite() && raw.residual < tolerance => (Verdict::Pass, None),
        Ok(()) => (Verdict::Fail, Some("residual exceeds tolerance".to_string())),
    };
    IdentityResidual {
        id: raw.id.to_string(),
        description: raw.description.to_string(),
        tier: raw.tier,
        verdict,
        residual: Some(raw.residual),
        tolerance: Some(tolerance),
        scale: Some(scale),
        reason,
        convergence: None,
    }
}

/// Second-order convergence: residuals at or below the noise floor count as converged.
fn convergence(residuals: &[f64], floor: f64) -> Convergence {
    let orders: Vec<f64> = residuals
        .windows(2)
        .map(|w| if w[1] > 0.0 && w[0] > 0.0 { (w[0] / w[1]).log2() } else { f64::INFINITY })
        .collect();
    let mut passed = true;
    for (i, order) in orders.iter().enumerate() {
        if residuals[i] <= floor {
            break;
        }
        if *order < 1.5 && residuals[i + 1] > floor {
            passed = false;
        }
    }
    Convergence {
        steps: CONVERGENCE_STEPS.to_vec(),
        residuals: residuals.to_vec(),
        orders,
        passed,
    }
}

/// Outcome of a full suite: `true` when no applicable identity failed.
pub fn suite_passed(results: &[IdentityResidual]) -> bool {
    results.iter().all(|r| r.verdict != Verdict::Fail)
}
