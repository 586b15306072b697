//! Pointwise exterior algebra in an orthonormal frame.
//!
//! A k-form stores one coefficient per strictly increasing index tuple, so
//! antisymmetry holds by construction. The coefficient of `e_I` equals the
//! value of the form on `(E_I)`, which is the determinant convention
//! `(a ^ b)(X,Y) = a(X)b(Y) - a(Y)b(X)`.

use nalgebra::{DMatrix, DVector};

use crate::acms::AcmStructure;
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Index tuples as bitmasks in colexicographic order, which is the numeric order of the masks.
fn masks(dim: usize, degree: usize) -> Vec<u32> {
    (0u32..(1u32 << dim))
        .filter(|m| m.count_ones() as usize == degree)
        .collect()
}

fn rank_of_mask(mask: u32) -> usize {
    let mut r = 0;
    let mut pos = 1;
    let mut m = mask;
    while m != 0 {
        let c = m.trailing_zeros() as usize;
        r += binomial(c, pos);
        pos += 1;
        m &= m - 1;
    }
    r
}

fn mask_indices(mask: u32) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    let mut m = mask;
    while m != 0 {
        out.push(m.trailing_zeros() as usize);
        m &= m - 1;
    }
    out
}

/// Sorts `idx` and returns the permutation sign, or `None` on a repeated index.
fn sorted_mask(idx: &[usize]) -> Option<(u32, f64)> {
    let mut mask = 0u32;
    let mut inversions = 0usize;
    for (a, &i) in idx.iter().enumerate() {
        if mask & (1 << i) != 0 {
            return None;
        }
        mask |= 1 << i;
        inversions += idx[a + 1..].iter().filter(|&&j| j < i).count();
    }
    Some((mask, if inversions % 2 == 0 { 1.0 } else { -1.0 }))
}

/// A k-form over a `dim`-dimensional frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KForm {
    dim: usize,
    degree: usize,
    coeffs: Vec<f64>,
}

/// A vector written in the orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameVector(pub DVector<f64>);

impl FrameVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        FrameVector(DVector::from_vec(coeffs))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        FrameVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

impl KForm {
    pub fn zero(dim: usize, degree: usize) -> Self {
        assert!(degree <= dim && dim <= 31, "degree {degree} exceeds dimension {dim}");
        KForm {
            dim,
            degree,
            coeffs: vec![0.0; binomial(dim, degree)],
        }
    }

    /// Builds a form from its values on increasing index tuples.
    pub fn from_fn(dim: usize, degree: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut out = KForm::zero(dim, degree);
        for (r, m) in masks(dim, degree).into_iter().enumerate() {
            out.coeffs[r] = f(&mask_indices(m));
        }
        out
    }

    pub fn one_form(coeffs: &[f64]) -> Self {
        KForm {
            dim: coeffs.len(),
            degree: 1,
            coeffs: coeffs.to_vec(),
        }
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        KForm {
            dim,
            degree: 0,
            coeffs: vec![value],
        }
    }

    /// The coframe one-form `e_i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut c = vec![0.0; dim];
        c[i] = 1.0;
        KForm::one_form(&c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Value on `(E_{idx[0]}, ..., E_{idx[k-1]})` for any index order.
    pub fn get(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.degree);
        match sorted_mask(idx) {
            Some((m, s)) => s * self.coeffs[rank_of_mask(m)],
            None => 0.0,
        }
    }

    /// Sets the value on `(E_idx)`; the permuted entries follow by antisymmetry.
    pub fn set(&mut self, idx: &[usize], value: f64) {
        let (m, s) = sorted_mask(idx).expect("repeated index in k-form assignment");
        self.coeffs[rank_of_mask(m)] = s * value;
    }

    /// Increasing index tuples paired with coefficients.
    pub fn terms(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        masks(self.dim, self.degree)
            .into_iter()
            .zip(self.coeffs.iter().copied())
            .map(|(m, c)| (mask_indices(m), c))
    }

    pub fn scaled(&self, s: f64) -> KForm {
        KForm {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &KForm) -> KForm {
        assert_eq!((self.dim, self.degree), (other.dim, other.degree));
        KForm {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &KForm) -> KForm {
        self.add(&other.scaled(-1.0))
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Evaluates the form on `degree` frame vectors.
    pub fn eval(&self, vectors: &[DVector<f64>]) -> f64 {
        assert_eq!(vectors.len(), self.degree);
        let k = self.degree;
        if k == 0 {
            return self.coeffs[0];
        }
        let mut total = 0.0;
        for (idx, c) in self.terms() {
            if c == 0.0 {
                continue;
            }
            let m = DMatrix::from_fn(k, k, |r, col| vectors[col][idx[r]]);
            total += c * m.determinant();
        }
        total
    }

    /// Dense antisymmetric matrix `A[i][j] = a(E_i, E_j)` of a two-form.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.degree, 2);
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (idx, c) in self.terms() {
            m[(idx[0], idx[1])] = c;
            m[(idx[1], idx[0])] = -c;
        }
        m
    }

    /// Two-form from the skew part of a square matrix.
    pub fn from_matrix(m: &DMatrix<f64>) -> KForm {
        let d = m.nrows();
        KForm::from_fn(d, 2, |ij| 0.5 * (m[(ij[0], ij[1])] - m[(ij[1], ij[0])]))
    }

    /// Dense array `t[i][j][k] = a(E_i, E_j, E_k)` of a three-form.
    pub fn to_tensor3(&self) -> Tensor3 {
        assert_eq!(self.degree, 3);
        Tensor3::from_fn(self.dim, |i, j, k| self.get(&[i, j, k]))
    }

    /// Three-form from the totally antisymmetric part of a dense array.
    pub fn from_tensor3(t: &Tensor3) -> KForm {
        KForm::from_fn(t.dim(), 3, |ijk| {
            let (i, j, k) = (ijk[0], ijk[1], ijk[2]);
            (t.get(i, j, k) + t.get(j, k, i) + t.get(k, i, j)
                - t.get(j, i, k)
                - t.get(i, k, j)
                - t.get(k, j, i))
                / 6.0
        })
    }

    pub fn as_vector(&self) -> DVector<f64> {
        assert_eq!(self.degree, 1);
        DVector::from_column_slice(&self.coeffs)
    }
}

/// `(1/p!) sum over all index tuples of a * b`, i.e. the sum over increasing tuples.
pub fn form_inner(a: &KForm, b: &KForm) -> Result<f64> {
    if a.degree != b.degree || a.dim != b.dim {
        return Err(Error::Contract(format!(
            "inner product of forms of degree {} and {}",
            a.degree, b.degree
        )));
    }
    Ok(a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x * y).sum())
}

pub fn wedge(a: &KForm, b: &KForm) -> Result<KForm> {
    if a.dim != b.dim {
        return Err(Error::Contract("wedge of forms over different dimensions".into()));
    }
    let p = a.degree;
    let q = b.degree;
    if p + q > a.dim {
        return Err(Error::Contract(format!(
            "wedge degree {} exceeds dimension {}",
            p + q,
            a.dim
        )));
    }
    let mut out = KForm::zero(a.dim, p + q);
    for (r, mask) in masks(a.dim, p + q).into_iter().enumerate() {
        let idx = mask_indices(mask);
        let mut sum = 0.0;
        // choose which p positions of idx feed a
        for sel in 0u32..(1u32 << (p + q)) {
            if sel.count_ones() as usize != p {
                continue;
            }
            let mut ma = 0u32;
            let mut mb = 0u32;
            let mut inversions = 0usize;
            let mut seen_b = 0usize;
            for (pos, &i) in idx.iter().enumerate() {
                if sel & (1 << pos) != 0 {
                    ma |= 1 << i;
                    inversions += seen_b;
                } else {
                    mb |= 1 << i;
                    seen_b += 1;
                }
            }
            let av = a.coeffs[rank_of_mask(ma)];
            let bv = b.coeffs[rank_of_mask(mb)];
            if av == 0.0 || bv == 0.0 {
                continue;
            }
            let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * av * bv;
        }
        out.coeffs[r] = sum;
    }
    Ok(out)
}

/// `(x ⌟ a)(Y, ...) = a(x, Y, ...)`.
pub fn interior(x: &FrameVector, a: &KForm) -> Result<KForm> {
    if a.degree == 0 {
        return Err(Error::Contract("interior product of a 0-form".into()));
    }
    let mut idx = vec![0usize; a.degree];
    Ok(KForm::from_fn(a.dim, a.degree - 1, |rest| {
        idx[1..].copy_from_slice(rest);
        let mut s = 0.0;
        for i in 0..a.dim {
            if x.0[i] != 0.0 {
                idx[0] = i;
                s += x.0[i] * a.get(&idx);
            }
        }
        s
    }))
}

/// Exterior derivative of a form with constant frame components, from the
/// bracket coefficients `c[i][j][k] = c^k_{ij}`:
/// `dα(X_0..X_p) = Σ_{a<b} (−1)^{a+b} α([X_a,X_b], X_0..X̂_a..X̂_b..X_p)`.
pub fn d_frame_constant(c: &Tensor3, a: &KForm) -> Result<KForm> {
    let d = a.dim;
    if c.dim() != d {
        return Err(Error::Contract("bracket table and form differ in dimension".into()));
    }
    if a.degree + 1 > d {
        return Ok(KForm::zero(d, d));
    }
    let p = a.degree;
    Ok(KForm::from_fn(d, p + 1, |idx| {
        let mut total = 0.0;
        for x in 0..=p {
            for y in (x + 1)..=p {
                let sign = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
                let mut args = Vec::with_capacity(p);
                args.push(DVector::from_fn(d, |k, _| c.get(idx[x], idx[y], k)));
                for (z, &i) in idx.iter().enumerate() {
                    if z != x && z != y {
                        args.push(DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 }));
                    }
                }
                total += sign * a.eval(&args);
            }
        }
        total
    }))
}

pub fn flat(x: &FrameVector) -> KForm {
    KForm::one_form(x.as_slice())
}

pub fn sharp(a: &KForm) -> FrameVector {
    assert_eq!(a.degree, 1);
    FrameVector::new(a.coeffs.clone())
}

/// The four summands of a two-form under the unitary group.
#[derive(Debug, Clone)]
pub struct TwoFormSplit {
    pub r_f: KForm,
    pub l11_0: KForm,
    pub l20: KForm,
    pub eta_wedge: KForm,
}

impl TwoFormSplit {
    pub fn parts(&self) -> [&KForm; 4] {
        [&self.r_f, &self.l11_0, &self.l20, &self.eta_wedge]
    }

    pub fn sum(&self) -> KForm {
        self.r_f.add(&self.l11_0).add(&self.l20).add(&self.eta_wedge)
    }

    /// The `[λ^{1,1}]` part, i.e. `r_f + l11_0`.
    pub fn l11(&self) -> KForm {
        self.r_f.add(&self.l11_0)
    }
}

/// The six summands of a three-form under the unitary group.
#[derive(Debug, Clone)]
pub struct ThreeFormSplit {
    pub l30: KForm,
    pub l21_0: KForm,
    pub l10_wedge_f: KForm,
    pub l20_wedge_eta: KForm,
    pub r_f_wedge_eta: KForm,
    pub l11_0_wedge_eta: KForm,
}

impl ThreeFormSplit {
    pub fn parts(&self) -> [&KForm; 6] {
        [
            &self.l30,
            &self.l21_0,
            &self.l10_wedge_f,
            &self.l20_wedge_eta,
            &self.r_f_wedge_eta,
            &self.l11_0_wedge_eta,
        ]
    }

    pub fn sum(&self) -> KForm {
        self.parts()
            .iter()
            .skip(1)
            .fold(self.l30.clone(), |acc, p| acc.add(p))
    }
}

/// `a(φX, φY)` as a two-form.
pub fn phi_pullback_two(a: &KForm, phi: &DMatrix<f64>) -> KForm {
    KForm::from_matrix(&(phi.transpose() * a.to_matrix() * phi))
}

/// Splits a two-form into `ℝF`, `[λ^{1,1}_0]`, `⟦λ^{2,0}⟧` and `η∧⟦λ^{1,0}⟧` parts.
pub fn split_two_form(a: &KForm, s: &AcmStructure) -> Result<TwoFormSplit> {
    if a.degree != 2 || a.dim != s.dim() {
        return Err(Error::Contract("split_two_form expects a two-form of the structure's dimension".into()));
    }
    let zeta = s.zeta_vector();
    let eta = s.eta();
    let eta_wedge = wedge(&eta, &interior(&zeta, a)?)?;
    let rest = a.sub(&eta_wedge);
    let rotated = phi_pullback_two(&rest, s.phi());
    let l11 = rest.add(&rotated).scaled(0.5);
    let l20 = rest.sub(&rotated).scaled(0.5);
    let f = s.fundamental_form();
    let r_f = f.scaled(form_inner(&l11, &f)? / s.n() as f64);
    let l11_0 = l11.sub(&r_f);
    Ok(TwoFormSplit {
        r_f,
        l11_0,
        l20,
        eta_wedge,
    })
}

/// `C(Z) = ½ Σ_ij F(E_i,E_j) γ(E_i,E_j,Z)`, the contraction of a three-form with `F`.
pub fn contract_with_fundamental(g: &KForm, s: &AcmStructure) -> KForm {
    let f = s.fundamental_form();
    let d = s.dim();
    let mut c = vec![0.0; d];
    for (ij, fv) in f.terms() {
        if fv == 0.0 {
            continue;
        }
        for (z, cz) in c.iter_mut().enumerate() {
            *cz += fv * g.get(&[ij[0], ij[1], z]);
        }
    }
    KForm::one_form(&c)
}

/// Splits a three-form into the six summands listed on [`ThreeFormSplit`].
pub fn split_three_form(g: &KForm, s: &AcmStructure) -> Result<ThreeFormSplit> {
    if g.degree != 3 || g.dim != s.dim() {
        return Err(Error::Contract("split_three_form expects a three-form of the structure's dimension".into()));
    }
    let zeta = s.zeta_vector();
    let eta = s.eta();
    let along = interior(&zeta, g)?;
    let two = split_two_form(&along, s)?;
    let l20_wedge_eta = wedge(&eta, &two.l20)?;
    let r_f_wedge_eta = wedge(&eta, &two.r_f)?;
    let l11_0_wedge_eta = wedge(&eta, &two.l11_0)?;
    // ζ⌟g is transverse, so its η∧⟦λ^{1,0}⟧ part vanishes
    let gamma = g.sub(&wedge(&eta, &along)?);

    let phi = s.phi();
    let id = DMatrix::identity(s.dim(), s.dim());
    let t = gamma.to_tensor3();
    let t1 = t.pull_back(&id, phi, phi);
    let t2 = t.pull_back(phi, &id, phi);
    let t3 = t.pull_back(phi, phi, &id);
    let l30 = KForm::from_tensor3(&t.sub(&t1).sub(&t2).sub(&t3).scaled(0.25));

    let n = s.n();
    let l10_wedge_f = if n > 1 {
        // C(θ∧F) = (n-1)θ for transverse θ
        let theta = contract_with_fundamental(&gamma, s).scaled(1.0 / (n as f64 - 1.0));
        wedge(&theta, &s.fundamental_form())?
    } else {
        KForm::zero(s.dim(), 3)
    };
    let l21_0 = gamma.sub(&l30).sub(&l10_wedge_f);
    Ok(ThreeFormSplit {
        l30,
        l21_0,
        l10_wedge_f,
        l20_wedge_eta,
        r_f_wedge_eta,
        l11_0_wedge_eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical5() -> AcmStructure {
        AcmStructure::canonical(2)
    }

    #[test]
    fn inner_products() {
        let s = canonical5();
        let f = s.fundamental_form();
        assert!((form_inner(&f, &f).unwrap() - 2.0).abs() < 1e-15);
        let eta = s.eta();
        assert_eq!(form_inner(&eta, &eta).unwrap(), 1.0);
        let e12 = wedge(&KForm::basis(5, 0), &KForm::basis(5, 1)).unwrap();
        assert_eq!(form_inner(&e12, &e12).unwrap(), 1.0);
        assert!(form_inner(&e12, &eta).is_err());
    }

    #[test]
    fn frame_constant_derivative_on_a_lie_algebra() {
        // su(2): [E_i, E_j] = ε_ijk E_k
        let eps = |i: usize, j: usize, k: usize| -> f64 {
            match (i, j, k) {
                (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
                (1, 0, 2) | (2, 1, 0) | (0, 2, 1) => -1.0,
                _ => 0.0,
            }
        };
        let c = Tensor3::from_fn(3, eps);
        let de3 = d_frame_constant(&c, &KForm::basis(3, 2)).unwrap();
        assert_eq!(de3.get(&[0, 1]), -1.0);
        assert_eq!(de3.get(&[0, 2]), 0.0);
        let alpha = KForm::one_form(&[0.3, -1.2, 2.0]);
        let dd = d_frame_constant(&c, &d_frame_constant(&c, &alpha).unwrap()).unwrap();
        assert!(dd.norm() < 1e-15);
    }

    #[test]
    fn wedge_conventions() {
        let e1 = KForm::basis(5, 0);
        let e2 = KForm::basis(5, 1);
        assert_eq!(wedge(&e1, &e1).unwrap().norm(), 0.0);
        let w = wedge(&e1, &e2).unwrap();
        let v1 = FrameVector::basis(5, 0).0;
        let v2 = FrameVector::basis(5, 1).0;
        assert_eq!(w.eval(&[v1.clone(), v2.clone()]), 1.0);
        assert_eq!(w.eval(&[v2, v1]), -1.0);
        assert!(wedge(&w, &KForm::zero(5, 4)).is_err());
    }

    #[test]
    fn top_form_of_canonical_structure() {
        // brute force for n = 1 and n = 2: F^n ∧ η on the frame is ±n!
        for n in 1..=2 {
            let s = AcmStructure::canonical(n);
            let f = s.fundamental_form();
            let mut top = f.clone();
            for _ in 1..n {
                top = wedge(&top, &f).unwrap();
            }
            top = wedge(&top, &s.eta()).unwrap();
            let fact: f64 = (1..=n).map(|k| k as f64).product();
            assert!((top.coefficients()[0].abs() - fact).abs() < 1e-14);
        }
    }

    #[test]
    fn interior_products() {
        let s = canonical5();
        let zeta = s.zeta_vector();
        assert_eq!(interior(&zeta, &s.fundamental_form()).unwrap().norm(), 0.0);
        assert_eq!(interior(&zeta, &s.eta()).unwrap().coefficients(), &[1.0]);
        let e12 = wedge(&KForm::basis(5, 0), &KForm::basis(5, 1)).unwrap();
        assert_eq!(interior(&FrameVector::basis(5, 0), &e12).unwrap(), KForm::basis(5, 1));
        assert!(interior(&zeta, &KForm::scalar(5, 1.0)).is_err());
    }

    #[test]
    fn musical_isomorphisms() {
        let s = canonical5();
        assert_eq!(flat(&s.zeta_vector()), s.eta());
        assert_eq!(sharp(&s.eta()), s.zeta_vector());
        let a = KForm::one_form(&[1.0, -2.0, 0.5, 0.0, 3.0]);
        assert_eq!(flat(&sharp(&a)), a);
    }

    #[test]
    fn split_two_form_examples() {
        let s = canonical5();
        let f = s.fundamental_form();
        let sp = split_two_form(&f, &s).unwrap();
        assert!(sp.r_f.sub(&f).norm() < 1e-15);
        assert!(sp.l11_0.norm() + sp.l20.norm() + sp.eta_wedge.norm() < 1e-15);

        let a = wedge(&s.eta(), &KForm::basis(5, 0)).unwrap();
        let sp = split_two_form(&a, &s).unwrap();
        assert!(sp.eta_wedge.sub(&a).norm() < 1e-15);
        assert!(sp.r_f.norm() + sp.l11_0.norm() + sp.l20.norm() < 1e-15);

        let e = |i| KForm::basis(5, i);
        let a = wedge(&e(0), &e(2)).unwrap().sub(&wedge(&e(1), &e(3)).unwrap());
        let sp = split_two_form(&a, &s).unwrap();
        assert!(sp.l20.sub(&a).norm() < 1e-15);
        assert!(sp.r_f.norm() + sp.l11_0.norm() + sp.eta_wedge.norm() < 1e-15);
    }

    #[test]
    fn split_three_form_examples() {
        let s = canonical5();
        let f = s.fundamental_form();
        let g = wedge(&f, &s.eta()).unwrap();
        let sp = split_three_form(&g, &s).unwrap();
        assert!(sp.r_f_wedge_eta.sub(&g).norm() < 1e-15);
        assert!(sp.sum().sub(&g).norm() < 1e-15);

        // η∧e1∧e2 projects onto span(F∧η) with coefficient <g, F∧η>/<F∧η, F∧η>
        let e = |i| KForm::basis(5, i);
        let g = wedge(&s.eta(), &wedge(&e(0), &e(1)).unwrap()).unwrap();
        let sp = split_three_form(&g, &s).unwrap();
        let fe = wedge(&f, &s.eta()).unwrap();
        let expected = fe.scaled(form_inner(&g, &fe).unwrap() / form_inner(&fe, &fe).unwrap());
        assert!(sp.r_f_wedge_eta.sub(&expected).norm() < 1e-15);
        assert!(sp.l11_0_wedge_eta.sub(&g.sub(&expected)).norm() < 1e-15);
        assert!(sp.l30.norm() + sp.l21_0.norm() + sp.l10_wedge_f.norm() + sp.l20_wedge_eta.norm() < 1e-15);
    }

    #[test]
    fn lee_part_round_trip() {
        for n in 2..=3 {
            let s = AcmStructure::canonical(n);
            let d = 2 * n + 1;
            let mut c = vec![0.0; d];
            for (i, ci) in c.iter_mut().enumerate().take(2 * n) {
                *ci = 0.3 + i as f64 * 0.7 - (i * i) as f64 * 0.11;
            }
            let theta = KForm::one_form(&c);
            let g = wedge(&theta, &s.fundamental_form()).unwrap();
            let sp = split_three_form(&g, &s).unwrap();
            assert!(sp.l10_wedge_f.sub(&g).norm() < 1e-13 * g.norm(), "n = {n}");
        }
    }
}
