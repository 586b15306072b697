//! Frame models over a single chart: brackets, Levi-Civita coefficients and
//! finite-difference derivatives of computed fields.

pub mod expr;
pub mod file;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exterior::KForm;
use crate::tensor::Tensor3;

pub use expr::{Expr, Scope};

/// Relative step for derivatives whose result feeds further derivatives
/// (brackets and conformal factors without closed forms).
pub fn inner_step() -> f64 {
    f64::EPSILON.powf(0.2)
}

/// Default relative step for outer derivatives.
pub fn default_step() -> f64 {
    f64::EPSILON.cbrt()
}

/// How bracket coefficients are obtained.
#[derive(Debug, Clone)]
pub enum BracketSource {
    /// Central differences of the frame columns.
    FiniteDifference,
    /// `c^k_{ij}` as expressions, stored `[i][j][k]`.
    Brackets(Vec<Expr>),
    /// `∂_l A_{kj}` as expressions, stored `[l][k][j]`, where `A_{kj}` is the
    /// `∂_k` component of `E_j`.
    FrameJacobian(Vec<Expr>),
}

/// Finite-difference settings for one derivative evaluation.
#[derive(Debug, Clone, Copy)]
pub struct FdOptions {
    pub step: f64,
    pub richardson: bool,
}

impl FdOptions {
    pub fn inner() -> Self {
        FdOptions {
            step: inner_step(),
            richardson: true,
        }
    }
}

/// Orthonormal frame fields `E_j = Σ_k A_{kj}(x) ∂/∂x_k` on a chart, optionally
/// rescaled by a conformal factor `e^{−a}`.
#[derive(Debug, Clone)]
pub struct FrameModel {
    dim: usize,
    frame: Vec<Expr>,
    domain: Expr,
    fd_step: f64,
    source: BracketSource,
    conformal: Option<Expr>,
}

/// Data computed at one point.
#[derive(Debug, Clone)]
pub struct PointEvaluation {
    pub point: Vec<f64>,
    /// `A_{kj}`: chart components of the frame.
    pub frame: DMatrix<f64>,
    /// `c[i][j][k] = c^k_{ij}` with `[E_i,E_j] = Σ_k c^k_{ij} E_k`.
    pub brackets: Tensor3,
    /// `Γ[i][j][k] = <∇_{E_i} E_j, E_k>`.
    pub gamma: Tensor3,
}

impl FrameModel {
    pub fn new(
        dim: usize,
        frame: Vec<Expr>,
        domain: Expr,
        fd_step: f64,
        source: BracketSource,
    ) -> Result<Self> {
        if dim < 3 || dim % 2 == 0 {
            return Err(Error::Model(format!("dimension {dim} is not of the form 2n+1 with n >= 1")));
        }
        if dim > 9 {
            return Err(Error::Model(format!("dimension {dim} exceeds the supported maximum of 9")));
        }
        if frame.len() != dim * dim {
            return Err(Error::Model(format!(
                "frame has {} entries, expected {}",
                frame.len(),
                dim * dim
            )));
        }
        let expected = match &source {
            BracketSource::FiniteDifference => 0,
            BracketSource::Brackets(v) | BracketSource::FrameJacobian(v) => v.len(),
        };
        if expected != 0 && expected != dim * dim * dim {
            return Err(Error::Model(format!(
                "closed-form table has {expected} entries, expected {}",
                dim * dim * dim
            )));
        }
        if !(fd_step > 0.0 && fd_step < 0.1) {
            return Err(Error::Model(format!("fd_step {fd_step} outside (0, 0.1)")));
        }
        for e in frame.iter().chain(std::iter::once(&domain)) {
            if e.max_var().is_some_and(|v| v >= dim) {
                return Err(Error::Model("expression refers to a variable beyond the chart".into()));
            }
        }
        Ok(FrameModel {
            dim,
            frame,
            domain,
            fd_step,
            source,
            conformal: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        (self.dim - 1) / 2
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    pub fn fd_options(&self) -> FdOptions {
        FdOptions {
            step: self.fd_step,
            richardson: false,
        }
    }

    pub fn domain(&self) -> &Expr {
        &self.domain
    }

    pub fn source(&self) -> &BracketSource {
        &self.source
    }

    pub fn conformal_factor(&self) -> Option<&Expr> {
        self.conformal.as_ref()
    }

    pub fn has_closed_brackets(&self) -> bool {
        !matches!(self.source, BracketSource::FiniteDifference)
    }

    /// Same model with brackets always taken from finite differences.
    pub fn without_closed_form(&self) -> FrameModel {
        FrameModel {
            source: BracketSource::FiniteDifference,
            ..self.clone()
        }
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        let v = self.domain.eval(x);
        v.is_finite() && v > 0.0
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Model(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { point: x.to_vec() });
        }
        if !self.in_domain(x) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        Ok(())
    }

    fn base_frame_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim;
        let mut a = DMatrix::zeros(d, d);
        for k in 0..d {
            for j in 0..d {
                a[(k, j)] = self.frame[k * d + j].eval_finite(x)?;
            }
        }
        Ok(a)
    }

    fn scale_at(&self, x: &[f64]) -> Result<f64> {
        match &self.conformal {
            Some(a) => Ok((-a.eval_finite(x)?).exp()),
            None => Ok(1.0),
        }
    }

    /// Chart components `A_{kj}` of the (possibly rescaled) frame.
    pub fn frame_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let a = self.base_frame_at(x)? * self.scale_at(x)?;
        check_invertible(&a, x)?;
        Ok(a)
    }

    /// Central-difference derivative of `f` along chart direction `l`, with
    /// the domain guard and optional Richardson extrapolation.
    pub fn chart_partial<F>(&self, f: &F, x: &[f64], l: usize, opts: FdOptions) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
    {
        let scale = x[l].abs().max(1.0);
        let mut h = opts.step * scale;
        for _ in 0..=4 {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[l] += h;
            minus[l] -= h;
            if self.in_domain(&plus) && self.in_domain(&minus) {
                let diff = |h: f64| -> Result<Vec<f64>> {
                    let mut p = x.to_vec();
                    let mut m = x.to_vec();
                    p[l] += h;
                    m[l] -= h;
                    let fp = f(&p)?;
                    let fm = f(&m)?;
                    Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
                };
                let coarse = diff(h)?;
                if !opts.richardson {
                    return Ok(coarse);
                }
                let fine = diff(h / 2.0)?;
                return Ok(fine
                    .iter()
                    .zip(&coarse)
                    .map(|(f, c)| (4.0 * f - c) / 3.0)
                    .collect());
            }
            h /= 2.0;
        }
        Err(Error::StencilOutsideDomain {
            point: x.to_vec(),
            direction: l,
        })
    }

    /// `E_i(f)` for every frame index `i`, as rows `[i][component]`.
    pub fn frame_derivatives<F>(&self, f: &F, x: &[f64], opts: FdOptions) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
    {
        self.check_point(x)?;
        let a = self.frame_at(x)?;
        let partials: Vec<Vec<f64>> = (0..self.dim)
            .map(|l| self.chart_partial(f, x, l, opts))
            .collect::<Result<_>>()?;
        let width = partials.first().map_or(0, Vec::len);
        Ok((0..self.dim)
            .map(|i| {
                (0..width)
                    .map(|c| (0..self.dim).map(|l| a[(l, i)] * partials[l][c]).sum())
                    .collect()
            })
            .collect())
    }

    /// `E_i(f)` for a single frame index.
    pub fn directional_derivative<F>(&self, f: &F, x: &[f64], i: usize, opts: FdOptions) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
    {
        self.check_point(x)?;
        let a = self.frame_at(x)?;
        let mut out: Option<Vec<f64>> = None;
        for l in 0..self.dim {
            if a[(l, i)] == 0.0 {
                continue;
            }
            let p = self.chart_partial(f, x, l, opts)?;
            let acc = out.get_or_insert_with(|| vec![0.0; p.len()]);
            for (o, v) in acc.iter_mut().zip(&p) {
                *o += a[(l, i)] * v;
            }
        }
        match out {
            Some(v) => Ok(v),
            None => Ok(f(x)?.iter().map(|_| 0.0).collect()),
        }
    }

    fn base_brackets(&self, x: &[f64]) -> Result<Tensor3> {
        let d = self.dim;
        match &self.source {
            BracketSource::Brackets(exprs) => {
                let data = exprs.iter().map(|e| e.eval_finite(x)).collect::<Result<Vec<_>>>()?;
                Ok(Tensor3::from_vec(d, data))
            }
            BracketSource::FrameJacobian(exprs) => {
                let jac = exprs.iter().map(|e| e.eval_finite(x)).collect::<Result<Vec<_>>>()?;
                let a = self.base_frame_at(x)?;
                Ok(brackets_from_jacobian(&a, |l, k, j| jac[(l * d + k) * d + j], x)?)
            }
            BracketSource::FiniteDifference => {
                let a = self.base_frame_at(x)?;
                let frame_flat = |y: &[f64]| -> Result<Vec<f64>> {
                    Ok(self.base_frame_at(y)?.transpose().as_slice().to_vec())
                };
                // transpose() makes the column-major slice row-major [k][j]
                let partials: Vec<Vec<f64>> = (0..d)
                    .map(|l| self.chart_partial(&frame_flat, x, l, FdOptions::inner()))
                    .collect::<Result<_>>()?;
                brackets_from_jacobian(&a, |l, k, j| partials[l][k * d + j], x)
            }
        }
    }

    /// Bracket coefficients of the frame at `x`.
    pub fn brackets_at(&self, x: &[f64]) -> Result<Tensor3> {
        self.check_point(x)?;
        let base = self.base_brackets(x)?;
        let Some(a_expr) = &self.conformal else {
            return Ok(base);
        };
        // [fE_i, fE_j] = f c^k_{ij} (fE_k) + E_i(f)(fE_j) − E_j(f)(fE_i) with f = e^{−a}
        let d = self.dim;
        let f = (-a_expr.eval_finite(x)?).exp();
        let a_field = |y: &[f64]| -> Result<Vec<f64>> { Ok(vec![a_expr.eval_finite(y)?]) };
        let base_a = self.base_frame_at(x)?;
        let partials: Vec<f64> = (0..d)
            .map(|l| Ok(self.chart_partial(&a_field, x, l, FdOptions::inner())?[0]))
            .collect::<Result<_>>()?;
        let ef: Vec<f64> = (0..d)
            .map(|i| -f * (0..d).map(|l| base_a[(l, i)] * partials[l]).sum::<f64>())
            .collect();
        let mut c = base.scaled(f);
        for i in 0..d {
            for j in 0..d {
                c.add_at(i, j, j, ef[i]);
                c.add_at(i, j, i, -ef[j]);
            }
        }
        Ok(c)
    }

    /// Brackets, frame and Levi-Civita coefficients at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<PointEvaluation> {
        self.check_point(x)?;
        let frame = self.frame_at(x)?;
        let brackets = self.brackets_at(x)?;
        let gamma = koszul(&brackets);
        Ok(PointEvaluation {
            point: x.to_vec(),
            frame,
            brackets,
            gamma,
        })
    }

    /// Same frame rescaled by `e^{−a}`, realizing the metric `e^{2a} g`.
    pub fn conformal_transform(&self, a: Expr) -> FrameModel {
        let combined = match &self.conformal {
            Some(prev) => Expr::add(prev.clone(), a),
            None => a,
        };
        FrameModel {
            conformal: Some(combined),
            ..self.clone()
        }
    }

    /// `dα(E_i,E_j) = E_i(α_j) − E_j(α_i) − α([E_i,E_j])` for a one-form field.
    pub fn exterior_derivative_one_form<F>(&self, field: &F, x: &[f64], opts: FdOptions) -> Result<KForm>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
    {
        let d = self.dim;
        let da = self.frame_derivatives(field, x, opts)?;
        let alpha = field(x)?;
        let c = self.brackets_at(x)?;
        Ok(KForm::from_fn(d, 2, |ij| {
            let (i, j) = (ij[0], ij[1]);
            da[i][j] - da[j][i] - (0..d).map(|k| c.get(i, j, k) * alpha[k]).sum::<f64>()
        }))
    }

    /// `d f = Σ E_i(f) e_i` for a scalar field.
    pub fn exterior_derivative_scalar<F>(&self, field: &F, x: &[f64], opts: FdOptions) -> Result<KForm>
    where
        F: Fn(&[f64]) -> Result<f64> + ?Sized,
    {
        let wrapped = |y: &[f64]| -> Result<Vec<f64>> { Ok(vec![field(y)?]) };
        let rows = self.frame_derivatives(&wrapped, x, opts)?;
        Ok(KForm::one_form(&rows.iter().map(|r| r[0]).collect::<Vec<_>>()))
    }

    /// `(∇_{E_a} T)` of a rank-`r` covariant tensor field given in frame
    /// components (flattened row-major), for a connection with coefficients
    /// `conn[a][i][m] = <D_{E_a} E_i, E_m>`. Rows are indexed by `a`.
    pub fn covariant_derivative<F>(
        &self,
        field: &F,
        rank: usize,
        conn: &Tensor3,
        x: &[f64],
        opts: FdOptions,
    ) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
    {
        let d = self.dim;
        let value = field(x)?;
        let len = d.pow(rank as u32);
        if value.len() != len {
            return Err(Error::Contract(format!(
                "tensor field of rank {rank} has {} components",
                value.len()
            )));
        }
        let mut out = self.frame_derivatives(field, x, opts)?;
        let mut idx = vec![0usize; rank];
        for (a, row) in out.iter_mut().enumerate() {
            for (flat, slot_value) in row.iter_mut().enumerate() {
                let mut rem = flat;
                for s in (0..rank).rev() {
                    idx[s] = rem % d;
                    rem /= d;
                }
                let mut correction = 0.0;
                for s in 0..rank {
                    let stride = d.pow((rank - 1 - s) as u32);
                    let base = flat - idx[s] * stride;
                    for m in 0..d {
                        correction += conn.get(a, idx[s], m) * value[base + m * stride];
                    }
                }
                *slot_value -= correction;
            }
        }
        Ok(out)
    }
}

fn check_invertible(a: &DMatrix<f64>, x: &[f64]) -> Result<()> {
    let scale: f64 = a.column_iter().map(|c| c.norm()).product();
    let det = a.determinant();
    if !det.is_finite() || scale == 0.0 || det.abs() < 1e-12 * scale {
        return Err(Error::SingularFrame { point: x.to_vec() });
    }
    Ok(())
}

/// Brackets in the frame from chart partials `jac(l,k,j) = ∂_l A_{kj}`.
fn brackets_from_jacobian(
    a: &DMatrix<f64>,
    jac: impl Fn(usize, usize, usize) -> f64,
    x: &[f64],
) -> Result<Tensor3> {
    let d = a.nrows();
    check_invertible(a, x)?;
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularFrame { point: x.to_vec() })?;
    // directional derivative of column j along E_i: (E_i A_j)_k = Σ_l A_{li} ∂_l A_{kj}
    let mut along = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                along[(i * d + j) * d + k] = (0..d).map(|l| a[(l, i)] * jac(l, k, j)).sum();
            }
        }
    }
    let mut c = Tensor3::zeros(d);
    for i in 0..d {
        for j in (i + 1)..d {
            let chart = DVector::from_fn(d, |k, _| along[(i * d + j) * d + k] - along[(j * d + i) * d + k]);
            let framed = &inv * chart;
            for k in 0..d {
                c.set(i, j, k, framed[k]);
                c.set(j, i, k, -framed[k]);
            }
        }
    }
    Ok(c)
}

/// `Γ^k_{ij} = ½(c^k_{ij} − c^i_{jk} + c^j_{ki})` in an orthonormal frame.
pub fn koszul(c: &Tensor3) -> Tensor3 {
    Tensor3::from_fn(c.dim(), |i, j, k| 0.5 * (c.get(i, j, k) - c.get(j, k, i) + c.get(k, i, j)))
}
