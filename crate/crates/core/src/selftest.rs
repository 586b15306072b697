//! Property checks that need no model: projector algebra on random torsion
//! tensors, module ranks, builtin validity and route agreement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::acms::AcmStructure;
use crate::builtins::{builtin, Params, BUILTIN_NAMES};
use crate::classify::{cross_check_type, enumerate_forbidden, DEFAULT_TOL};
use crate::error::Result;
use crate::tensor::Tensor3;
use crate::torsion::{module_bases, module_dimension, project_components, project_to_torsion_space, MODULE_COUNT};

/// Worst relative defects of the twelve projections over random valid tensors.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectorCheck {
    pub n: usize,
    pub samples: usize,
    /// `‖Σ_k P_k T − T‖ / ‖T‖`
    pub completeness: f64,
    /// `max_{k≠l} |<P_k T, P_l T>| / ‖T‖²`
    pub orthogonality: f64,
    /// `max_k ‖P_k P_k T − P_k T‖ / ‖T‖`
    pub idempotence: f64,
    /// `max_{k≠l} ‖P_l P_k T‖ / ‖T‖`
    pub cross_leakage: f64,
    pub ranks: Vec<usize>,
    pub expected_ranks: Vec<usize>,
}

impl ProjectorCheck {
    pub fn worst(&self) -> f64 {
        [self.completeness, self.orthogonality, self.idempotence, self.cross_leakage]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.worst() <= tol && self.ranks == self.expected_ranks
    }
}

pub fn random_torsion(s: &AcmStructure, rng: &mut impl Rng) -> Tensor3 {
    let raw = Tensor3::from_fn(s.dim(), |_, _, _| rng.gen_range(-1.0..1.0));
    project_to_torsion_space(s, &raw)
}

pub fn projector_suite(n: usize, samples: usize, seed: u64) -> ProjectorCheck {
    let s = AcmStructure::canonical(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = ProjectorCheck {
        n,
        samples,
        completeness: 0.0,
        orthogonality: 0.0,
        idempotence: 0.0,
        cross_leakage: 0.0,
        ranks: module_bases(&s).iter().map(Vec::len).collect(),
        expected_ranks: (1..=MODULE_COUNT).map(|k| module_dimension(k, n)).collect(),
    };
    for _ in 0..samples {
        let t = random_torsion(&s, &mut rng);
        let size = t.norm();
        let parts = project_components(&s, &t);
        let sum = parts.iter().fold(Tensor3::zeros(s.dim()), |acc, p| acc.add(p));
        check.completeness = check.completeness.max(sum.sub(&t).norm() / size);
        for (k, pk) in parts.iter().enumerate() {
            let again = project_components(&s, pk);
            check.idempotence = check.idempotence.max(again[k].sub(pk).norm() / size);
            for (l, pl) in parts.iter().enumerate() {
                if l != k {
                    check.orthogonality = check.orthogonality.max(pk.dot(pl).abs() / (size * size));
                    check.cross_leakage = check.cross_leakage.max(again[l].norm() / size);
                }
            }
        }
    }
    check
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfTestReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

/// Projector algebra for `n = 1..3`, builtin validity and route agreement at
/// default points, and the forbidden-type count.
pub fn run_selftest(samples: usize) -> Result<SelfTestReport> {
    let mut checks = Vec::new();
    for n in 1..=3 {
        let c = projector_suite(n, samples, 17 + n as u64);
        checks.push(CheckOutcome {
            name: format!("projectors n={n}"),
            passed: c.passed(1e-12),
            detail: serde_json::to_value(&c)?,
        });
    }
    for name in BUILTIN_NAMES {
        let b = builtin(name, &Params::new())?;
        let validation = b.structure.validate();
        let mut agree = true;
        for x in b.default_points(3) {
            let r = cross_check_type(&b.structure, &b.model, &x, DEFAULT_TOL)?;
            agree &= r.cross_route.as_ref().is_some_and(|c| c.agreement);
        }
        checks.push(CheckOutcome {
            name: format!("builtin {name}"),
            passed: validation.failures().is_empty() && agree,
            detail: serde_json::json!({ "validationFailures": validation.failures(), "crossRouteAgreement": agree }),
        });
    }
    let catalog = enumerate_forbidden(3)?;
    checks.push(CheckOutcome {
        name: "forbidden types".into(),
        passed: catalog.derived_count == 128,
        detail: serde_json::json!({ "derivedCount": catalog.derived_count }),
    });
    Ok(SelfTestReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
