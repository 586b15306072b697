//! Type verdicts: active modules, named classes, the independent route through
//! `dη`, `dF` and `N_φ`, and the catalog of strict types excluded by the
//! non-existence theorem.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::acms::{n_of_xi, nijenhuis, AcmStructure};
use crate::error::{Error, Result};
use crate::exterior::{d_frame_constant, KForm};
use crate::model::FrameModel;
use crate::report::Warning;
use crate::tensor::Tensor3;
use crate::torsion::{intrinsic_torsion, module_bases, DerivedQuantities, IntrinsicTorsion, MODULE_COUNT};

/// Default relative threshold: `C_k` is active iff `‖ξ_k‖ > tol·‖ξ‖`.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Component norms at or below this absolute value always count as zero.
pub const ZERO_FLOOR: f64 = 1e-9;

pub fn module_label(k: usize) -> String {
    format!("C{k}")
}

/// Serializes module indices as `"C1"`, `"C2"`, ...
pub fn labels<S: serde::Serializer>(set: &[usize], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(set.iter().map(|&k| module_label(k)))
}

pub fn active_set(norms: &[f64; MODULE_COUNT], tol: f64) -> Vec<usize> {
    let total = norms.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cut = (tol * total).max(ZERO_FLOOR);
    (1..=MODULE_COUNT).filter(|&k| norms[k - 1] > cut).collect()
}

/// Named classes as unions of modules; a class matches when the active set is contained in it.
pub const NAMED_CLASSES: [(&str, &[usize]); 12] = [
    ("nearly-K-cosymplectic", &[1]),
    ("α-Kenmotsu", &[5]),
    ("α-Sasakian", &[6]),
    ("trans-Sasakian", &[5, 6]),
    ("almost cosymplectic", &[2, 9]),
    ("quasi-Sasakian", &[6, 7]),
    ("nearly-trans-Sasakian", &[1, 5, 6]),
    ("quasi-K-cosymplectic", &[1, 2, 9, 10]),
    ("normal", &[3, 4, 5, 6, 7, 8]),
    ("integrable almost contact structure", &[3, 4, 5, 8]),
    ("almost a-Sasakian", &[2, 6, 9]),
    ("cosymplectic", &[]),
];

pub fn named_matches(active: &[usize]) -> Vec<String> {
    if active.is_empty() {
        return vec!["cosymplectic".to_string()];
    }
    NAMED_CLASSES
        .iter()
        .filter(|(_, set)| !set.is_empty() && active.iter().all(|k| set.contains(k)))
        .map(|(name, _)| name.to_string())
        .collect()
}

/// Modules that can be nonzero in dimension `2n+1`.
pub fn admissible_modules(n: usize) -> Vec<usize> {
    match n {
        0 => Vec::new(),
        1 => vec![5, 6, 9, 12],
        2 => (1..=MODULE_COUNT).filter(|k| *k != 1 && *k != 3).collect(),
        _ => (1..=MODULE_COUNT).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
}

impl RuleId {
    pub const ALL: [RuleId; 3] = [RuleId::R1, RuleId::R2, RuleId::R3];

    pub fn premise(self) -> &'static str {
        match self {
            RuleId::R1 => "{5,6} ⊆ S ⊆ {1,2,3,5,6,8,9,11}",
            RuleId::R2 => "6 ∈ S ⊆ {1,2,3,6,8,9,11} and S ⊄ {2,6,9}",
            RuleId::R3 => "{5,7} ⊆ S ⊆ {2,5,7,9}",
        }
    }

    pub fn conclusion(self) -> &'static str {
        match self {
            RuleId::R1 => "ξ5 and ξ6 cannot both be nonzero: the type drops C5 or reduces to C2⊕C6⊕C9",
            RuleId::R2 => "a type inside C1⊕C2⊕C3⊕C6⊕C8⊕C9⊕C11 with ξ6 ≠ 0 lies in C2⊕C6⊕C9",
            RuleId::R3 => "ξ5 and ξ7 cannot both be nonzero inside C2⊕C5⊕C7⊕C9",
        }
    }

    fn matches(self, mask: u16) -> bool {
        let within = |allowed: &[usize]| mask & !mask_of(allowed) == 0;
        let has = |k: usize| mask & bit(k) != 0;
        match self {
            RuleId::R1 => has(5) && has(6) && within(&[1, 2, 3, 5, 6, 8, 9, 11]),
            RuleId::R2 => has(6) && within(&[1, 2, 3, 6, 8, 9, 11]) && !within(&[2, 6, 9]),
            RuleId::R3 => has(5) && has(7) && within(&[2, 5, 7, 9]),
        }
    }
}

fn bit(k: usize) -> u16 {
    1 << (k - 1)
}

fn mask_of(set: &[usize]) -> u16 {
    set.iter().fold(0, |m, &k| m | bit(k))
}

fn set_of(mask: u16) -> Vec<usize> {
    (1..=MODULE_COUNT).filter(|&k| mask & bit(k) != 0).collect()
}

/// The rule excluding the strict type `set`, if any (dimension `2n+1`, `n > 1`).
pub fn forbidden_rule(set: &[usize]) -> Option<RuleId> {
    let m = mask_of(set);
    RuleId::ALL.into_iter().find(|r| r.matches(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum ForbiddenVerdict {
    Allowed,
    ForbiddenBy { rule: RuleId },
    /// The theorem only covers `n > 1`.
    NotApplicable,
}

pub fn forbidden_verdict(n: usize, active: &[usize]) -> ForbiddenVerdict {
    if n < 2 {
        return ForbiddenVerdict::NotApplicable;
    }
    match forbidden_rule(active) {
        Some(rule) => ForbiddenVerdict::ForbiddenBy { rule },
        None => ForbiddenVerdict::Allowed,
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TypeReport {
    pub n: usize,
    #[serde(serialize_with = "labels")]
    pub active_set: Vec<usize>,
    pub norms: [f64; MODULE_COUNT],
    pub total_norm: f64,
    pub named_matches: Vec<String>,
    pub dimension_admissible: bool,
    pub forbidden_verdict: ForbiddenVerdict,
    pub cross_route: Option<CrossRoute>,
}

pub fn detect_type(xi: &IntrinsicTorsion, tol: f64) -> TypeReport {
    let active = active_set(&xi.norms, tol);
    let admissible = admissible_modules(xi.n);
    TypeReport {
        n: xi.n,
        named_matches: named_matches(&active),
        dimension_admissible: active.iter().all(|k| admissible.contains(k)),
        forbidden_verdict: forbidden_verdict(xi.n, &active),
        active_set: active,
        norms: xi.norms,
        total_norm: xi.norm(),
        cross_route: None,
    }
}

/// Result of classifying from `dη`, `dF` and `N_φ` computed from the brackets.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CrossRoute {
    #[serde(serialize_with = "labels")]
    pub active_set: Vec<usize>,
    pub norms: [f64; MODULE_COUNT],
    /// Modules whose coefficients the three tensors do not determine.
    #[serde(serialize_with = "labels")]
    pub indeterminate: Vec<usize>,
    pub agreement: bool,
    /// Largest difference between the component norms of the two routes.
    pub max_norm_difference: f64,
    pub residuals: CrossResiduals,
}

/// Relative least-squares residuals of the three reconstruction stages.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CrossResiduals {
    pub d_eta: f64,
    pub d_f: f64,
    pub nijenhuis: f64,
}

/// `dη(X,Y) = η(ξ_XY) − η(ξ_YX)` for a torsion tensor.
pub fn d_eta_from_torsion(s: &AcmStructure, t: &Tensor3) -> KForm {
    let z = s.zeta();
    let d = s.dim();
    let tz = |i: usize, j: usize| (0..d).map(|k| t.get(i, j, k) * z[k]).sum::<f64>();
    KForm::from_fn(d, 2, |ij| tz(ij[0], ij[1]) - tz(ij[1], ij[0]))
}

/// `dF` as the alternation of `(∇_XF)(Y,Z) = F(ξ_XY,Z) + F(Y,ξ_XZ)`.
pub fn d_f_from_torsion(s: &AcmStructure, t: &Tensor3) -> KForm {
    let d = s.dim();
    let phi = s.phi();
    let nab = |x: usize, y: usize, z: usize| -> f64 {
        (0..d)
            .map(|k| t.get(x, y, k) * phi[(k, z)] + phi[(y, k)] * t.get(x, z, k))
            .sum()
    };
    KForm::from_fn(d, 3, |idx| {
        let (x, y, z) = (idx[0], idx[1], idx[2]);
        nab(x, y, z) - nab(y, x, z) + nab(z, x, y)
    })
}

/// `dη` and `dF` of the frame-constant structure forms, from the brackets.
pub fn structure_differentials(s: &AcmStructure, c: &Tensor3) -> Result<(KForm, KForm)> {
    Ok((
        d_frame_constant(c, &s.eta())?,
        d_frame_constant(c, &s.fundamental_form())?,
    ))
}

struct StageFit {
    parts: Vec<(usize, Tensor3)>,
    residual: f64,
    indeterminate: Vec<usize>,
}

/// Least squares for `target ≈ Σ_k map(ξ_k)` with `ξ_k` in the span of each module's basis.
fn fit_stage(
    target: &[f64],
    modules: &[usize],
    bases: &[Vec<Tensor3>],
    map: impl Fn(&Tensor3) -> Vec<f64>,
) -> StageFit {
    let d = bases.iter().flatten().next().map_or(0, Tensor3::dim);
    let mut owner = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for &k in modules {
        for b in &bases[k - 1] {
            owner.push((k, b));
            columns.push(map(b));
        }
    }
    let y_norm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
    if columns.is_empty() {
        return StageFit {
            parts: modules.iter().map(|&k| (k, Tensor3::zeros(d))).collect(),
            residual: y_norm / y_norm.max(1.0),
            indeterminate: Vec::new(),
        };
    }
    let rows = target.len();
    let a = DMatrix::from_fn(rows, columns.len(), |r, c| columns[c][r]);
    let y = DMatrix::from_column_slice(rows, 1, target);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = 1e-9 * smax.max(f64::MIN_POSITIVE);
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut indeterminate = Vec::new();
    // right singular vectors outside the numerical range mark undetermined coefficients
    for (r, sv) in svd.singular_values.iter().enumerate() {
        if *sv <= cut {
            for (c, (k, _)) in owner.iter().enumerate() {
                if v_t[(r, c)].abs() > 1e-6 && !indeterminate.contains(k) {
                    indeterminate.push(*k);
                }
            }
        }
    }
    if columns.len() > rows {
        for (k, _) in &owner {
            if !indeterminate.contains(k) {
                indeterminate.push(*k);
            }
        }
    }
    indeterminate.sort_unstable();
    let x = svd.solve(&y, cut).expect("factors were computed");
    let residual = (&a * &x - &y).norm() / y_norm.max(1.0);
    let parts = modules
        .iter()
        .map(|&k| {
            let t = owner
                .iter()
                .enumerate()
                .filter(|(_, (o, _))| *o == k)
                .fold(Tensor3::zeros(d), |acc, (c, (_, b))| acc.add(&b.scaled(x[(c, 0)])));
            (k, t)
        })
        .collect();
    StageFit {
        parts,
        residual,
        indeterminate,
    }
}

/// Components reconstructed from `dη`, `dF` and `N_φ` alone.
pub struct BracketRoute {
    pub components: Vec<Tensor3>,
    pub norms: [f64; MODULE_COUNT],
    pub indeterminate: Vec<usize>,
    pub residuals: CrossResiduals,
}

/// Reconstructs the components from bracket data in three stages: `dη` fixes
/// `C6, C7, C10, C12`; what remains of `dF` fixes `C1, C3, C4, C5, C8, C11`;
/// what remains of `N_φ` fixes `C2, C9`.
pub fn bracket_route(s: &AcmStructure, c: &Tensor3, bases: &[Vec<Tensor3>]) -> Result<BracketRoute> {
    let d = s.dim();
    let (d_eta, d_f) = structure_differentials(s, c)?;
    let n_phi = nijenhuis(s, c);
    let mut components = vec![Tensor3::zeros(d); MODULE_COUNT];
    let mut indeterminate = Vec::new();

    let first = fit_stage(d_eta.coefficients(), &[6, 7, 10, 12], bases, |t| {
        d_eta_from_torsion(s, t).coefficients().to_vec()
    });
    for (k, t) in first.parts {
        components[k - 1] = t;
    }
    indeterminate.extend(first.indeterminate);

    let known: Tensor3 = [6, 7, 10, 12]
        .iter()
        .fold(Tensor3::zeros(d), |acc, &k| acc.add(&components[k - 1]));
    let rest_f = d_f.sub(&d_f_from_torsion(s, &known));
    let second = fit_stage(rest_f.coefficients(), &[1, 3, 4, 5, 8, 11], bases, |t| {
        d_f_from_torsion(s, t).coefficients().to_vec()
    });
    for (k, t) in second.parts {
        components[k - 1] = t;
    }
    indeterminate.extend(second.indeterminate);

    let known: Tensor3 = components.iter().fold(Tensor3::zeros(d), |acc, t| acc.add(t));
    let rest_n = n_phi.sub(&n_of_xi(s, &known));
    let third = fit_stage(rest_n.as_slice(), &[2, 9], bases, |t| n_of_xi(s, t).as_slice().to_vec());
    for (k, t) in third.parts {
        components[k - 1] = t;
    }
    indeterminate.extend(third.indeterminate);
    indeterminate.sort_unstable();
    indeterminate.dedup();

    let mut norms = [0.0; MODULE_COUNT];
    for (k, t) in components.iter().enumerate() {
        norms[k] = t.norm();
    }
    Ok(BracketRoute {
        components,
        norms,
        indeterminate,
        residuals: CrossResiduals {
            d_eta: first.residual,
            d_f: second.residual,
            nijenhuis: third.residual,
        },
    })
}

/// Attaches the bracket-route verdict to a report built from the projections.
pub fn attach_cross_route(report: &mut TypeReport, route: &BracketRoute, tol: f64) {
    let active = active_set(&route.norms, tol);
    let max_norm_difference = route
        .norms
        .iter()
        .zip(&report.norms)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    report.cross_route = Some(CrossRoute {
        agreement: route.indeterminate.is_empty() && active == report.active_set,
        active_set: active,
        norms: route.norms,
        indeterminate: route.indeterminate.clone(),
        max_norm_difference,
        residuals: route.residuals.clone(),
    });
}

/// Classifies at `p` by both routes.
pub fn cross_check_type(s: &AcmStructure, m: &FrameModel, p: &[f64], tol: f64) -> Result<TypeReport> {
    let pe = m.evaluate(p)?;
    let xi = intrinsic_torsion(s, &pe)?;
    let mut report = detect_type(&xi, tol);
    let route = bracket_route(s, &pe.brackets, &module_bases(s))?;
    attach_cross_route(&mut report, &route, tol);
    Ok(report)
}

/// Orthonormal basis of the part of `C10 ⊕ C11` annihilated by `N`.
pub fn nijenhuis_kernel_in_c10_c11(s: &AcmStructure, bases: &[Vec<Tensor3>]) -> Vec<Tensor3> {
    let block: Vec<&Tensor3> = bases[9].iter().chain(bases[10].iter()).collect();
    if block.is_empty() {
        return Vec::new();
    }
    let images: Vec<Tensor3> = block.iter().map(|b| n_of_xi(s, b)).collect();
    let rows = images[0].as_slice().len();
    let a = DMatrix::from_fn(rows, block.len(), |r, c| images[c].as_slice()[r]);
    // nullspace from the eigenvectors of AᵀA
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let top = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
    let d = block[0].dim();
    (0..block.len())
        .filter(|&i| eig.eigenvalues[i] <= 1e-18 * top.max(1.0))
        .map(|i| {
            let v = eig.eigenvectors.column(i);
            block
                .iter()
                .enumerate()
                .fold(Tensor3::zeros(d), |acc, (c, b)| acc.add(&b.scaled(v[c])))
        })
        .collect()
}

/// Projection of `ξ` onto `C3 ⊕ C4 ⊕ C5 ⊕ C8 ⊕ C12 ⊕ (ker N ∩ (C10 ⊕ C11))`.
pub fn nijenhuis_kernel_part(s: &AcmStructure, xi: &IntrinsicTorsion, bases: &[Vec<Tensor3>]) -> Tensor3 {
    let base = xi.sum_of(&[3, 4, 5, 8, 12]);
    let mixed = xi.sum_of(&[10, 11]);
    nijenhuis_kernel_in_c10_c11(s, bases)
        .iter()
        .fold(base, |acc, k| acc.add(&k.scaled(mixed.dot(k))))
}

#[derive(Debug, Clone, Serialize)]
pub struct RuleSummary {
    pub id: RuleId,
    pub premise: String,
    pub conclusion: String,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForbiddenType {
    #[serde(serialize_with = "labels")]
    pub modules: Vec<usize>,
    pub rule: RuleId,
}

/// Strict types excluded by the theorem, with the published count beside the derived one.
#[derive(Debug, Clone, Serialize)]
pub struct ForbiddenCatalog {
    pub n: usize,
    pub rules: Vec<RuleSummary>,
    pub forbidden_strict_types: Vec<ForbiddenType>,
    pub derived_count: usize,
    pub paper_claim: usize,
    pub paper_expression: String,
    pub paper_expression_value: i64,
    pub warnings: Vec<Warning>,
}

pub const PAPER_FORBIDDEN_CLAIM: usize = 132;

fn paper_expression_value() -> i64 {
    (1i64 << 12) - ((1i64 << 6) + (1i64 << 4) * (1i64 << 2) + (1i64 << 2))
}

fn build_catalog(n: usize) -> ForbiddenCatalog {
    let admissible = mask_of(&admissible_modules(n));
    let mut forbidden = Vec::new();
    let mut counts = [0usize; 3];
    for mask in 0u16..(1 << MODULE_COUNT) {
        if mask & !admissible != 0 {
            continue;
        }
        let hits: Vec<RuleId> = RuleId::ALL.into_iter().filter(|r| r.matches(mask)).collect();
        assert!(hits.len() <= 1, "rules overlap on {:?}", set_of(mask));
        if let Some(&rule) = hits.first() {
            counts[rule as usize] += 1;
            forbidden.push(ForbiddenType {
                modules: set_of(mask),
                rule,
            });
        }
    }
    forbidden.sort_by(|a, b| a.modules.len().cmp(&b.modules.len()).then(a.modules.cmp(&b.modules)));
    let derived_count = forbidden.len();
    let value = paper_expression_value();
    let mut warnings = vec![Warning::new(
        "forbidden-count",
        format!(
            "published count {PAPER_FORBIDDEN_CLAIM} (the subtracted part of 2^12 - (2^6 + 2^4*2^2 + 2^2) = {value}) \
             differs from the strict-type count {derived_count}; the extra sets {{6}}, {{2,6}}, {{6,9}}, {{2,6,9}} \
             are the allowed conclusions of the corollary"
        ),
    )
    .values(PAPER_FORBIDDEN_CLAIM as f64, derived_count as f64)];
    if n == 2 {
        warnings.push(Warning::new(
            "dimension-filter",
            "n = 2: types containing C1 or C3 are not admissible and are left out",
        ));
    }
    ForbiddenCatalog {
        n,
        rules: RuleId::ALL
            .into_iter()
            .map(|r| RuleSummary {
                id: r,
                premise: r.premise().to_string(),
                conclusion: r.conclusion().to_string(),
                count: counts[r as usize],
            })
            .collect(),
        forbidden_strict_types: forbidden,
        derived_count,
        paper_claim: PAPER_FORBIDDEN_CLAIM,
        paper_expression: "2^12 - (2^6 + 2^4*2^2 + 2^2)".to_string(),
        paper_expression_value: value,
        warnings,
    }
}

/// Catalog for `n > 1`; identical for every `n ≥ 3`.
pub fn enumerate_forbidden(n: usize) -> Result<&'static ForbiddenCatalog> {
    static LOW: OnceLock<ForbiddenCatalog> = OnceLock::new();
    static HIGH: OnceLock<ForbiddenCatalog> = OnceLock::new();
    match n {
        0 | 1 => Err(Error::Parameter(format!(
            "the forbidden-type theorem needs n > 1, got n = {n}"
        ))),
        2 => Ok(LOW.get_or_init(|| build_catalog(2))),
        _ => {
            let c = HIGH.get_or_init(|| build_catalog(3));
            Ok(c)
        }
    }
}

/// Types for which the theorem forces `d*η · d*F(ζ) = 0`.
pub const THEOREM_PREMISE: [usize; 9] = [1, 2, 3, 5, 6, 8, 9, 11, 12];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum TheoremVerdict {
    NotApplicable,
    Consistent { product: f64 },
    Inconsistent { product: f64 },
}

pub fn check_point_against_theorem(report: &TypeReport, derived: &DerivedQuantities) -> TheoremVerdict {
    if report.n < 2 || !report.active_set.iter().all(|k| THEOREM_PREMISE.contains(k)) {
        return TheoremVerdict::NotApplicable;
    }
    let product = derived.dstar_eta * derived.dstar_f_zeta;
    if product.abs() <= 1e-10 * report.total_norm.powi(2).max(1.0) {
        TheoremVerdict::Consistent { product }
    } else {
        TheoremVerdict::Inconsistent { product }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torsion::{decompose, project_to_torsion_space};

    fn random_array(d: usize, seed: u64) -> Tensor3 {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(7);
        Tensor3::from_fn(d, |_, _, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    fn random_torsion(s: &AcmStructure, seed: u64) -> Tensor3 {
        project_to_torsion_space(s, &random_array(s.dim(), seed))
    }

    #[test]
    fn thresholding_and_names() {
        let mut norms = [0.0; 12];
        assert!(active_set(&norms, DEFAULT_TOL).is_empty());
        assert_eq!(named_matches(&[]), vec!["cosymplectic"]);
        norms[4] = 2.0;
        norms[0] = 1e-9;
        assert_eq!(active_set(&norms, DEFAULT_TOL), vec![5]);
        let names = named_matches(&[5]);
        for expected in [
            "α-Kenmotsu",
            "trans-Sasakian",
            "nearly-trans-Sasakian",
            "normal",
            "integrable almost contact structure",
        ] {
            assert!(names.iter().any(|n| n == expected), "{expected}");
        }
        assert_eq!(names.len(), 5);
        assert!(named_matches(&[2, 4, 5, 8, 9, 12]).is_empty());
        assert_eq!(named_matches(&[2, 9]), vec!["almost cosymplectic", "quasi-K-cosymplectic", "almost a-Sasakian"]);
    }

    #[test]
    fn rule_examples() {
        assert_eq!(forbidden_rule(&[5, 6]), Some(RuleId::R1));
        assert_eq!(forbidden_rule(&[2, 6, 9]), None);
        assert_eq!(forbidden_rule(&[6]), None);
        assert_eq!(forbidden_rule(&[6, 8]), Some(RuleId::R2));
        assert_eq!(forbidden_rule(&[2, 5, 7, 9]), Some(RuleId::R3));
        assert_eq!(forbidden_rule(&[4, 5, 12]), None);
        assert_eq!(forbidden_verdict(1, &[5, 6]), ForbiddenVerdict::NotApplicable);
    }

    #[test]
    fn catalog_counts() {
        let c = enumerate_forbidden(3).unwrap();
        assert_eq!(c.derived_count, 128);
        let counts: Vec<usize> = c.rules.iter().map(|r| r.count).collect();
        assert_eq!(counts, vec![64, 60, 4]);
        assert_eq!(c.paper_expression_value, 3964);
        assert_eq!(4096 - c.paper_expression_value as usize, c.paper_claim);
        assert!(std::ptr::eq(c, enumerate_forbidden(5).unwrap()));
        let low = enumerate_forbidden(2).unwrap();
        assert!(low
            .forbidden_strict_types
            .iter()
            .all(|t| !t.modules.contains(&1) && !t.modules.contains(&3)));
        assert_eq!(low.derived_count, 32);
        assert!(enumerate_forbidden(1).is_err());
    }

    #[test]
    fn linear_maps_match_the_module_pattern() {
        for n in 1..=3 {
            let s = AcmStructure::canonical(n);
            let bases = module_bases(&s);
            for k in 1..=12 {
                for b in &bases[k - 1] {
                    let e = d_eta_from_torsion(&s, b).norm();
                    let f = d_f_from_torsion(&s, b).norm();
                    let nn = n_of_xi(&s, b).norm();
                    assert_eq!(e > 1e-12, [6, 7, 10, 12].contains(&k), "dη n={n} C{k} {e}");
                    if [2, 9].contains(&k) {
                        assert!(f < 1e-12, "dF n={n} C{k}");
                    }
                    if [3, 4, 5, 8, 12].contains(&k) {
                        assert!(nn < 1e-12, "N n={n} C{k}");
                    }
                }
            }
        }
    }

    #[test]
    fn bracket_route_recovers_every_component() {
        use crate::model::koszul;
        use crate::model::PointEvaluation;
        for n in 1..=3 {
            let s = AcmStructure::canonical(n);
            let d = s.dim();
            let raw = random_array(d, 3 + n as u64);
            let c = Tensor3::from_fn(d, |i, j, k| raw.get(i, j, k) - raw.get(j, i, k));
            let pe = PointEvaluation {
                point: vec![0.0; d],
                frame: DMatrix::identity(d, d),
                gamma: koszul(&c),
                brackets: c.clone(),
            };
            let xi = intrinsic_torsion(&s, &pe).unwrap();
            let route = bracket_route(&s, &c, &module_bases(&s)).unwrap();
            assert!(route.indeterminate.is_empty(), "n={n} {:?}", route.indeterminate);
            for k in 1..=12 {
                let diff = route.components[k - 1].sub(xi.component(k)).norm();
                assert!(diff < 1e-10 * xi.norm().max(1.0), "n={n} C{k} {diff}");
            }
        }
    }

    #[test]
    fn c10_c11_kernels() {
        for n in 2..=3 {
            let s = AcmStructure::canonical(n);
            let bases = module_bases(&s);
            // N is injective on C10 ⊕ C11; the n(n−1)-dimensional diagonal sits in the kernel of the dF map
            assert!(nijenhuis_kernel_in_c10_c11(&s, &bases).is_empty(), "n = {n}");
            let block: Vec<&Tensor3> = bases[9].iter().chain(bases[10].iter()).collect();
            let cols: Vec<Vec<f64>> = block.iter().map(|t| d_f_from_torsion(&s, t).coefficients().to_vec()).collect();
            let a = DMatrix::from_fn(cols[0].len(), cols.len(), |r, c| cols[c][r]);
            let null = a.svd(false, false).singular_values.iter().filter(|v| **v < 1e-12).count();
            assert_eq!(null, n * (n - 1));
            let xi = decompose(&s, random_torsion(&s, 11));
            let part = nijenhuis_kernel_part(&s, &xi, &bases);
            assert!(n_of_xi(&s, &part).norm() < 1e-12 * xi.norm());
        }
    }
}
