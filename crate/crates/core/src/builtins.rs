//! Builtin models: the hyperbolic space, two structures on a half-space with
//! a modified metric, flat space, a Heisenberg group and seeded synthetic
//! structures with prescribed torsion at the origin.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::acms::AcmStructure;
use crate::error::{Error, Result};
use crate::model::{default_step, BracketSource, Expr, FrameModel};
use crate::tensor::Tensor3;
use crate::torsion::{project_components, project_to_torsion_space};

pub const BUILTIN_NAMES: [&str; 6] = ["hyperbolic", "h-alt-1", "h-alt-2", "flat", "heisenberg", "synthetic-random"];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ParamValue {
    /// Parses `1.5` or `1,0,0`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let nums = parts
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("`{text}` is not a number or comma-separated list")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("`{text}` is not finite")));
        }
        Ok(if nums.len() == 1 {
            ParamValue::Scalar(nums[0])
        } else {
            ParamValue::Vector(nums)
        })
    }

    pub fn as_vec(&self) -> Vec<f64> {
        match self {
            ParamValue::Scalar(v) => vec![*v],
            ParamValue::Vector(v) => v.clone(),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// A resolved builtin: model, structure, effective parameters and sampling region.
#[derive(Debug, Clone)]
pub struct BuiltinModel {
    pub name: String,
    pub model: FrameModel,
    pub structure: AcmStructure,
    pub params: Params,
    sampler: Sampler,
}

#[derive(Debug, Clone)]
enum Sampler {
    /// Per-coordinate intervals.
    Box(Vec<(f64, f64)>),
    /// Origin first, then points in a centered cube of the given half-width.
    Centered(f64),
}

const HALTON_BASES: [u32; 9] = [2, 3, 5, 7, 11, 13, 17, 19, 23];

fn halton(index: u32, base: u32) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

impl BuiltinModel {
    /// Deterministic low-discrepancy points inside the domain.
    pub fn default_points(&self, count: usize) -> Vec<Vec<f64>> {
        let d = self.model.dim();
        let mut out = Vec::with_capacity(count);
        let mut index = 1u32;
        if let Sampler::Centered(_) = self.sampler {
            if count > 0 {
                out.push(vec![0.0; d]);
            }
        }
        while out.len() < count {
            let p: Vec<f64> = (0..d)
                .map(|l| {
                    let u = halton(index, HALTON_BASES[l]);
                    match &self.sampler {
                        Sampler::Box(b) => b[l].0 + u * (b[l].1 - b[l].0),
                        Sampler::Centered(w) => w * (2.0 * u - 1.0),
                    }
                })
                .collect();
            index += 1;
            if self.model.in_domain(&p) {
                out.push(p);
            }
        }
        out
    }
}

struct ParamReader<'a> {
    given: &'a Params,
    used: Params,
}

impl<'a> ParamReader<'a> {
    fn new(given: &'a Params) -> Self {
        ParamReader {
            given,
            used: Params::new(),
        }
    }

    fn scalar(&mut self, name: &str, default: f64) -> Result<f64> {
        let v = match self.given.get(name) {
            None => default,
            Some(ParamValue::Scalar(v)) => *v,
            Some(ParamValue::Vector(_)) => {
                return Err(Error::Parameter(format!("`{name}` must be a single number")))
            }
        };
        self.used.insert(name.to_string(), ParamValue::Scalar(v));
        Ok(v)
    }

    fn integer(&mut self, name: &str, default: usize, min: usize, max: usize) -> Result<usize> {
        let v = self.scalar(name, default as f64)?;
        if v.fract() != 0.0 || v < min as f64 || v > max as f64 {
            return Err(Error::Parameter(format!("`{name}` must be an integer in {min}..={max}, got {v}")));
        }
        Ok(v as usize)
    }

    fn vector(&mut self, name: &str, default: Vec<f64>) -> Vec<f64> {
        let v = self.given.get(name).map_or(default, ParamValue::as_vec);
        self.used.insert(name.to_string(), ParamValue::Vector(v.clone()));
        v
    }

    fn finish(self, model: &str) -> Result<Params> {
        for k in self.given.keys() {
            if !self.used.contains_key(k) {
                return Err(Error::Parameter(format!("model `{model}` has no parameter `{k}`")));
            }
        }
        Ok(self.used)
    }
}

fn diag_frame(d: usize, entry: impl Fn(usize) -> Expr) -> Vec<Expr> {
    (0..d * d)
        .map(|e| if e / d == e % d { entry(e / d) } else { Expr::num(0.0) })
        .collect()
}

fn bracket_table(d: usize, entries: &[(usize, usize, usize, Expr)]) -> Vec<Expr> {
    let mut t = vec![Expr::num(0.0); d * d * d];
    for (i, j, k, e) in entries {
        t[(i * d + j) * d + k] = e.clone();
        t[(j * d + i) * d + k] = Expr::neg(e.clone());
    }
    t
}

/// Orthonormal basis whose first column is `first`, completed by Gram–Schmidt over the frame.
fn adapted_basis(first: &DVector<f64>) -> DMatrix<f64> {
    let d = first.len();
    let mut cols: Vec<DVector<f64>> = vec![first.normalize()];
    for i in 0..d {
        if cols.len() == d {
            break;
        }
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        for c in &cols {
            v -= c * c.dot(&v);
        }
        if v.norm() > 1e-6 {
            cols.push(v.normalize());
        }
    }
    DMatrix::from_columns(&cols)
}

pub fn builtin(name: &str, params: &Params) -> Result<BuiltinModel> {
    let mut r = ParamReader::new(params);
    let (model, structure, sampler) = match name {
        "hyperbolic" => hyperbolic(&mut r)?,
        "h-alt-1" => half_space(&mut r, false)?,
        "h-alt-2" => half_space(&mut r, true)?,
        "flat" => flat(&mut r)?,
        "heisenberg" => heisenberg(&mut r)?,
        "synthetic-random" => synthetic(&mut r)?,
        other => {
            return Err(Error::Model(format!(
                "unknown builtin `{other}`; available: {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    let params = r.finish(name)?;
    Ok(BuiltinModel {
        name: name.to_string(),
        model,
        structure,
        params,
        sampler,
    })
}

type Parts = (FrameModel, AcmStructure, Sampler);

fn hyperbolic(r: &mut ParamReader) -> Result<Parts> {
    let n = r.integer("n", 2, 1, 4)?;
    let c = r.scalar("c", 1.0)?;
    let d = 2 * n + 1;
    if !(c > 0.0) {
        return Err(Error::Parameter("`c` must be positive".into()));
    }
    let mut default_k = vec![0.0; d];
    default_k[0] = 0.6 * c;
    default_k[1] = 0.8 * c;
    let k = r.vector("k", default_k);
    if k.len() != d {
        return Err(Error::Parameter(format!("`k` must have {d} entries")));
    }
    let kk: f64 = k.iter().map(|v| v * v).sum();
    if (kk - c * c).abs() > 1e-12 * c * c {
        return Err(Error::Parameter(format!("k must satisfy Σk² = c² (got {kk} vs {})", c * c)));
    }
    let frame = diag_frame(d, |_| Expr::mul(Expr::num(c), Expr::var(0)));
    let entries: Vec<_> = (1..d).map(|j| (0, j, j, Expr::num(c))).collect();
    let model = FrameModel::new(d, frame, Expr::var(0), default_step(), BracketSource::Brackets(bracket_table(d, &entries)))?;
    let zeta = DVector::from_iterator(d, k.iter().map(|v| v / c));
    let structure = AcmStructure::from_adapted_basis(&adapted_basis(&zeta))?;
    let mut bx = vec![(-1.0, 1.0); d];
    bx[0] = (0.5, 2.0);
    Ok((model, structure, Sampler::Box(bx)))
}

fn half_space(r: &mut ParamReader, second: bool) -> Result<Parts> {
    let n = r.integer("n", 2, if second { 2 } else { 1 }, 4)?;
    let d = 2 * n + 1;
    let x1 = Expr::var(0);
    let x2 = Expr::var(1);
    let frame = diag_frame(d, |i| {
        if i == 0 {
            Expr::div(x1.clone(), x2.clone())
        } else {
            x1.clone()
        }
    });
    let mut entries = vec![
        (0, 1, 0, Expr::div(x1.clone(), x2.clone())),
        (0, 1, 1, Expr::div(Expr::num(1.0), x2.clone())),
    ];
    for i in 2..d {
        entries.push((0, i, i, Expr::div(Expr::num(1.0), x2.clone())));
    }
    let domain = Expr::Call(crate::model::expr::Func::Min, vec![x1, x2]);
    let model = FrameModel::new(d, frame, domain, default_step(), BracketSource::Brackets(bracket_table(d, &entries)))?;
    let structure = if second {
        let mut pairs = vec![(0, 2)];
        pairs.extend((1..n).map(|a| (2 * a + 1, 2 * a + 2)));
        AcmStructure::from_pairs(d, 1, &pairs)?
    } else {
        let pairs: Vec<_> = (0..n).map(|a| (2 * a + 1, 2 * a + 2)).collect();
        AcmStructure::from_pairs(d, 0, &pairs)?
    };
    let mut bx = vec![(-1.0, 1.0); d];
    bx[0] = (0.5, 2.0);
    bx[1] = (0.5, 2.0);
    Ok((model, structure, Sampler::Box(bx)))
}

fn flat(r: &mut ParamReader) -> Result<Parts> {
    let n = r.integer("n", 2, 1, 4)?;
    let d = 2 * n + 1;
    let frame = diag_frame(d, |_| Expr::num(1.0));
    let model = FrameModel::new(d, frame, Expr::num(1.0), default_step(), BracketSource::Brackets(bracket_table(d, &[])))?;
    Ok((model, AcmStructure::canonical(n), Sampler::Box(vec![(-1.0, 1.0); d])))
}

/// `X_i = ∂x_i + a y_i ∂z`, `Y_i = ∂y_i − a x_i ∂z`, `Z = ∂z`, with `[X_i, Y_i] = −2a Z`.
fn heisenberg(r: &mut ParamReader) -> Result<Parts> {
    let n = r.integer("n", 2, 1, 4)?;
    let a = r.scalar("a", 1.0)?;
    let d = 2 * n + 1;
    let z = d - 1;
    // frame order X_1, Y_1, X_2, Y_2, ..., Z; chart order x_1..x_n, y_1..y_n, z
    let mut frame = vec![Expr::num(0.0); d * d];
    for i in 0..n {
        let (xi, yi) = (2 * i, 2 * i + 1);
        frame[i * d + xi] = Expr::num(1.0);
        frame[z * d + xi] = Expr::mul(Expr::num(a), Expr::var(n + i));
        frame[(n + i) * d + yi] = Expr::num(1.0);
        frame[z * d + yi] = Expr::mul(Expr::num(-a), Expr::var(i));
    }
    frame[z * d + z] = Expr::num(1.0);
    let entries: Vec<_> = (0..n).map(|i| (2 * i, 2 * i + 1, z, Expr::num(-2.0 * a))).collect();
    let model = FrameModel::new(d, frame, Expr::num(1.0), default_step(), BracketSource::Brackets(bracket_table(d, &entries)))?;
    Ok((model, AcmStructure::canonical(n), Sampler::Box(vec![(-1.0, 1.0); d])))
}

/// Affine frame `A(x) = I + Σ_l x_l J_l` whose Levi-Civita connection at the
/// origin is `−T` for a random torsion `T` supported on the chosen modules, so
/// the intrinsic torsion at the origin is exactly `T`.
fn synthetic(r: &mut ParamReader) -> Result<Parts> {
    let n = r.integer("n", 2, 1, 4)?;
    let seed = r.integer("seed", 0, 0, u32::MAX as usize)? as u64;
    let scale = r.scalar("scale", 1.0)?;
    let spread = r.scalar("spread", 0.5)?;
    let modules: Vec<usize> = r
        .vector("modules", (1..=12).map(|k| k as f64).collect())
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 && (1.0..=12.0).contains(&v) {
                Ok(v as usize)
            } else {
                Err(Error::Parameter(format!("module label {v} outside 1..=12")))
            }
        })
        .collect::<Result<_>>()?;
    let d = 2 * n + 1;
    let structure = AcmStructure::canonical(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Tensor3::from_fn(d, |_, _, _| rng.gen_range(-1.0..1.0));
    let valid = project_to_torsion_space(&structure, &raw);
    let parts = project_components(&structure, &valid);
    let mut t = Tensor3::zeros(d);
    for k in &modules {
        t = t.add(&parts[k - 1]);
    }
    let norm = t.norm();
    if norm > 0.0 {
        t = t.scaled(scale / norm);
    }
    // c^k_{ij} = T[j][i][k] − T[i][j][k]; J[i][k][j] = ½ c^k_{ij} + symmetric noise in (i, j)
    let mut jac = vec![0.0; d * d * d];
    for i in 0..d {
        for k in 0..d {
            for j in 0..d {
                let c = t.get(j, i, k) - t.get(i, j, k);
                jac[(i * d + k) * d + j] = 0.5 * c;
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            for k in 0..d {
                let s = spread * rng.gen_range(-1.0..1.0);
                jac[(i * d + k) * d + j] += s;
                if i != j {
                    jac[(j * d + k) * d + i] += s;
                }
            }
        }
    }
    let total: f64 = jac.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = (0.5 / total.max(1e-12)).min(1.0);
    let mut frame = Vec::with_capacity(d * d);
    for k in 0..d {
        for j in 0..d {
            let mut e = Expr::num(if k == j { 1.0 } else { 0.0 });
            for l in 0..d {
                let coeff = jac[(l * d + k) * d + j];
                if coeff != 0.0 {
                    e = Expr::add(e, Expr::mul(Expr::num(coeff), Expr::var(l)));
                }
            }
            frame.push(e);
        }
    }
    let mut r2 = Expr::num(radius * radius);
    for l in 0..d {
        r2 = Expr::Bin(
            crate::model::expr::BinOp::Sub,
            Box::new(r2),
            Box::new(Expr::mul(Expr::var(l), Expr::var(l))),
        );
    }
    let source = BracketSource::FrameJacobian(jac.into_iter().map(Expr::num).collect());
    let model = FrameModel::new(d, frame, r2, default_step(), source)?;
    let half_width = 0.5 * radius / (d as f64).sqrt();
    Ok((model, structure, Sampler::Centered(half_width)))
}
