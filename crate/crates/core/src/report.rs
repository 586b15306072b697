//! JSON reports: per-point classification, derived quantities, identity
//! residuals and structured warnings where published values differ from the
//! computed ones. Output is deterministic: keys sorted, floats in `{:.16e}`.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

use crate::acms::AcmStructure;
use crate::builtins::{ParamValue, Params};
use crate::classify::{check_point_against_theorem, cross_check_type, TheoremVerdict, TypeReport};
use crate::error::Result;
use crate::identities::{point_fields, run_identity_suite, suite_passed, IdentityResidual, SuiteOptions, Verdict};
use crate::model::{Expr, FrameModel};
use crate::torsion::DerivedQuantities;

pub const REPORT_SCHEMA: u32 = 1;

/// A published value that the computation does not reproduce.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Warning {
    pub code: String,
    pub message: String,
    pub paper_value: Option<f64>,
    pub computed_value: Option<f64>,
}

impl Warning {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Warning {
            code: code.to_string(),
            message: message.into(),
            paper_value: None,
            computed_value: None,
        }
    }

    pub fn computed(mut self, value: f64) -> Self {
        self.computed_value = Some(value);
        self
    }

    pub fn values(mut self, published: f64, computed: f64) -> Self {
        self.paper_value = Some(published);
        self.computed_value = Some(computed);
        self
    }
}

/// Where the model came from.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelInfo {
    /// `builtin:<name>` or the file path.
    pub id: String,
    pub builtin: Option<String>,
    pub params: Params,
    pub dim: usize,
    pub n: usize,
}

impl ModelInfo {
    fn scalar(&self, key: &str) -> Option<f64> {
        match self.params.get(key)? {
            ParamValue::Scalar(v) => Some(*v),
            ParamValue::Vector(v) => v.first().copied(),
        }
    }

    fn vector(&self, key: &str) -> Option<Vec<f64>> {
        self.params.get(key).map(ParamValue::as_vec)
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConformalReport {
    /// The function `a` of the metric `e^{2a} g`.
    pub exponent: String,
    #[serde(rename = "type")]
    pub type_report: TypeReport,
    pub derived: DerivedQuantities,
    pub theorem: TheoremVerdict,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PointReport {
    pub index: usize,
    pub point: Vec<f64>,
    #[serde(rename = "type")]
    pub type_report: TypeReport,
    pub derived: DerivedQuantities,
    pub theorem: TheoremVerdict,
    pub identities: Option<Vec<IdentityResidual>>,
    pub conformal: Option<ConformalReport>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub points: usize,
    pub cross_route_agreement: bool,
    pub forbidden_types_seen: bool,
    pub theorem_inconsistencies: usize,
    pub identities_passed: usize,
    pub identities_failed: usize,
    pub identities_not_applicable: usize,
    /// `d*F(ζ)/n` at points matching "almost a-Sasakian" with `n > 1`.
    pub a_sasakian_values: Vec<f64>,
    pub a_sasakian_constant: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub schema: u32,
    pub command: String,
    pub model: ModelInfo,
    pub tolerance: f64,
    pub points: Vec<PointReport>,
    pub summary: Summary,
    pub warnings: Vec<Warning>,
}

impl Report {
    /// No failed identity and no theorem inconsistency.
    pub fn passed(&self) -> bool {
        self.summary.identities_failed == 0 && self.summary.theorem_inconsistencies == 0
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub tol: f64,
    pub identities: Option<SuiteOptions>,
    /// Exponent `a` of a conformal change `e^{2a} g`, with its source text.
    pub conformal: Option<(Expr, String)>,
}

pub fn evaluate_point(
    s: &AcmStructure,
    m: &FrameModel,
    index: usize,
    x: &[f64],
    opts: &ReportOptions,
) -> Result<PointReport> {
    let type_report = cross_check_type(s, m, x, opts.tol)?;
    let fields = point_fields(s, m, x)?;
    let theorem = check_point_against_theorem(&type_report, &fields.derived);
    let identities = match &opts.identities {
        Some(o) => Some(run_identity_suite(s, m, x, o)?),
        None => None,
    };
    let conformal = match &opts.conformal {
        Some((a, text)) => {
            let cm = m.conformal_transform(a.clone());
            let type_report = cross_check_type(s, &cm, x, opts.tol)?;
            let derived = point_fields(s, &cm, x)?.derived;
            Some(ConformalReport {
                exponent: text.clone(),
                theorem: check_point_against_theorem(&type_report, &derived),
                type_report,
                derived,
            })
        }
        None => None,
    };
    Ok(PointReport {
        index,
        point: x.to_vec(),
        type_report,
        derived: fields.derived,
        theorem,
        identities,
        conformal,
    })
}

pub fn build_report(
    command: &str,
    model: ModelInfo,
    s: &AcmStructure,
    m: &FrameModel,
    points: &[Vec<f64>],
    opts: &ReportOptions,
) -> Result<Report> {
    let reports = points
        .iter()
        .enumerate()
        .map(|(i, x)| evaluate_point(s, m, i, x, opts))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&reports, s.n());
    let warnings = paper_warnings(&model, &reports, opts.identities.is_some());
    Ok(Report {
        schema: REPORT_SCHEMA,
        command: command.to_string(),
        model,
        tolerance: opts.tol,
        points: reports,
        summary,
        warnings,
    })
}

fn summarize(points: &[PointReport], n: usize) -> Summary {
    let mut summary = Summary {
        points: points.len(),
        cross_route_agreement: true,
        forbidden_types_seen: false,
        theorem_inconsistencies: 0,
        identities_passed: 0,
        identities_failed: 0,
        identities_not_applicable: 0,
        a_sasakian_values: Vec::new(),
        a_sasakian_constant: None,
    };
    for p in points {
        let types = std::iter::once((&p.type_report, &p.derived, &p.theorem))
            .chain(p.conformal.iter().map(|c| (&c.type_report, &c.derived, &c.theorem)));
        for (t, _, theorem) in types {
            if let Some(c) = &t.cross_route {
                summary.cross_route_agreement &= c.agreement;
            }
            summary.forbidden_types_seen |= matches!(t.forbidden_verdict, crate::classify::ForbiddenVerdict::ForbiddenBy { .. });
            if matches!(theorem, TheoremVerdict::Inconsistent { .. }) {
                summary.theorem_inconsistencies += 1;
            }
        }
        if n > 1 && p.type_report.named_matches.iter().any(|m| m == "almost a-Sasakian") {
            summary.a_sasakian_values.push(p.derived.dstar_f_zeta / n as f64);
        }
        for r in p.identities.iter().flatten() {
            match r.verdict {
                Verdict::Pass => summary.identities_passed += 1,
                Verdict::Fail => summary.identities_failed += 1,
                Verdict::NotApplicable => summary.identities_not_applicable += 1,
            }
        }
    }
    if !summary.a_sasakian_values.is_empty() {
        let v = &summary.a_sasakian_values;
        let spread = v.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x)) - v.iter().fold(f64::INFINITY, |m, x| m.min(*x));
        let size = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        summary.a_sasakian_constant = Some(spread <= 1e-8 * size);
    }
    summary
}

/// Warnings for the builtins whose published numbers differ from the computation.
pub fn paper_warnings(model: &ModelInfo, points: &[PointReport], identities: bool) -> Vec<Warning> {
    let mut out = Vec::new();
    let n = model.n as f64;
    let first = points.first();
    match model.builtin.as_deref() {
        Some("hyperbolic") => {
            let c = model.scalar("c").unwrap_or(1.0);
            let k1 = model.vector("k").and_then(|k| k.first().copied()).unwrap_or(0.0);
            let published = 4.0 * n * k1 / c;
            let computed = first.map_or(2.0 * n * k1 / c, |p| p.derived.dstar_eta);
            out.push(
                Warning::new(
                    "hyperbolic-dstar-eta",
                    format!(
                        "the published coderivative is d*η = 4n·k1, which contradicts the published special case \
                         k1 = c = 1 (d*η = 2n); computed d*η = 2n·k1/c = {}",
                        2.0 * n * k1 / c
                    ),
                )
                .values(published, computed),
            );
        }
        Some("h-alt-2") => {
            if let Some(p) = first {
                let x2 = p.point[1];
                let theta1 = p.derived.theta.as_ref().map_or(0.0, |t| t[0]);
                out.push(
                    Warning::new(
                        "h-alt-2-lee-form",
                        format!(
                            "published θ = 2ξ_ζη = −((n−1)/x2)e_o1; computed θ(E_o1) = {theta1} and 2ξ_ζη(E_o1) = {} \
                             at x2 = {x2}, i.e. θ = −(2/x2)e_o1",
                            2.0 * p.derived.xi_zeta_eta[0]
                        ),
                    )
                    .values(-(n - 1.0) / x2, theta1),
                );
                let c2 = p.type_report.norms[1];
                out.push(
                    Warning::new(
                        "h-alt-2-c2",
                        "published type C2⊕C4⊕C5⊕C8⊕C9⊕C12; the brackets give N_φ = 0 on ζ^⊥, so the C2 component \
                         vanishes and the computed strict type is C4⊕C5⊕C8⊕C9⊕C12",
                    )
                    .computed(c2),
                );
            }
        }
        _ => {}
    }
    if identities && model.n > 1 {
        out.push(
            Warning::new(
                "lee-trace-identity",
                "published <dθ,F> = (1/n)d*η d*F(ζ) − 2Σ<ξ7_{φe_i}ζ,ξ8_{e_i}ζ> − 2Σ<ξ11_ζφe_i,ξ10_{e_i}ζ>; \
                 the suite checks the relation with coefficient +2/(n−1) on both sums, which holds exactly on \
                 left-invariant structures",
            )
            .values(-2.0, 2.0 / (n - 1.0)),
        );
    }
    let c10_c11 = points
        .iter()
        .any(|p| p.type_report.active_set.iter().any(|k| *k == 10 || *k == 11));
    if c10_c11 {
        out.push(Warning::new(
            "nijenhuis-kernel-diagonal",
            "published: ker N contains a diagonal of C10⊕C11; computed: N is injective on C10⊕C11 and the \
             n(n−1)-dimensional diagonal lies in the kernel of ξ ↦ alt(ξF) instead",
        ));
    }
    out
}

/// True when every applicable identity passed at every point.
pub fn identities_passed(points: &[PointReport]) -> bool {
    points.iter().all(|p| p.identities.as_deref().map_or(true, suite_passed))
}

/// Writes floats as `{:.16e}` (17 significant digits).
struct FixedFloats;

impl Formatter for FixedFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Deterministic JSON: object keys sorted, floats with 17 significant digits, non-finite floats as `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let tree: Value = serde_json::to_value(value)?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloats);
    tree.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}
