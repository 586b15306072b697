//! JSON model files.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "n": 1,
//!   "frame": [["c*x1", "0", "0"], ["0", "c*x1", "0"], ["0", "0", "c*x1"]],
//!   "phi": [[0, 0, 0], [0, 0, -1], [0, 1, 0]],
//!   "zeta": [1, 0, 0],
//!   "params": {"c": 1.0},
//!   "domain": "x1",
//!   "fd_step": 6e-6
//! }
//! ```
//!
//! `frame[k][j]` is the `∂/∂x_k` component of `E_j`. An optional `brackets`
//! entry `[[[expr]]]` gives `c^k_{ij}` at `[i][j][k]`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{default_step, BracketSource, Expr, FrameModel, Scope};
use crate::acms::AcmStructure;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: u32,
    pub n: usize,
    pub frame: Vec<Vec<String>>,
    pub phi: Vec<Vec<f64>>,
    pub zeta: Vec<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub domain: String,
    #[serde(default)]
    pub fd_step: Option<f64>,
    #[serde(default)]
    pub brackets: Option<Vec<Vec<Vec<String>>>>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.schema != SCHEMA_VERSION {
            return Err(Error::Model(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                f.schema
            )));
        }
        Ok(f)
    }

    /// Parses expressions with `overrides` taking precedence over the file's parameters.
    pub fn build(&self, overrides: &BTreeMap<String, f64>) -> Result<(FrameModel, AcmStructure)> {
        let d = 2 * self.n + 1;
        let mut scope = Scope::new(d);
        scope.params = self.params.clone();
        for (k, v) in overrides {
            scope.params.insert(k.clone(), *v);
        }
        let square = |rows: usize, cols: &[usize], what: &str| -> Result<()> {
            if rows != d || cols.iter().any(|&c| c != d) {
                return Err(Error::Model(format!("{what} must be {d}x{d}")));
            }
            Ok(())
        };
        square(self.frame.len(), &self.frame.iter().map(Vec::len).collect::<Vec<_>>(), "frame")?;
        square(self.phi.len(), &self.phi.iter().map(Vec::len).collect::<Vec<_>>(), "phi")?;
        if self.zeta.len() != d {
            return Err(Error::Model(format!("zeta must have {d} entries")));
        }
        let frame = self
            .frame
            .iter()
            .flatten()
            .map(|t| Expr::parse(t, &scope))
            .collect::<Result<Vec<_>>>()?;
        let domain = Expr::parse(&self.domain, &scope)?;
        let source = match &self.brackets {
            None => BracketSource::FiniteDifference,
            Some(table) => {
                if table.len() != d || table.iter().any(|r| r.len() != d || r.iter().any(|c| c.len() != d)) {
                    return Err(Error::Model(format!("brackets must be {d}x{d}x{d}")));
                }
                BracketSource::Brackets(
                    table
                        .iter()
                        .flatten()
                        .flatten()
                        .map(|t| Expr::parse(t, &scope))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        let model = FrameModel::new(d, frame, domain, self.fd_step.unwrap_or_else(default_step), source)?;
        let phi = DMatrix::from_fn(d, d, |i, j| self.phi[i][j]);
        let structure = AcmStructure::new(phi, DVector::from_vec(self.zeta.clone()))?;
        Ok((model, structure))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HYPERBOLIC: &str = r#"{
        "schema": 1, "n": 1,
        "frame": [["c*x1","0","0"],["0","c*x1","0"],["0","0","c*x1"]],
        "phi": [[0,0,0],[0,0,-1],[0,1,0]],
        "zeta": [1,0,0],
        "params": {"c": 1.0},
        "domain": "x1",
        "fd_step": 6e-6
    }"#;

    #[test]
    fn loads_and_evaluates() {
        let f = ModelFile::from_json(HYPERBOLIC).unwrap();
        let mut over = BTreeMap::new();
        over.insert("c".to_string(), 2.0);
        let (m, s) = f.build(&over).unwrap();
        assert_eq!(s.n(), 1);
        let c = m.brackets_at(&[1.0, 0.0, 0.0]).unwrap();
        assert!((c.get(0, 1, 1) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_wrong_schema_and_bad_expressions() {
        let bad = HYPERBOLIC.replace("\"schema\": 1", "\"schema\": 2");
        assert!(ModelFile::from_json(&bad).is_err());
        let bad = HYPERBOLIC.replace("c*x1\",\"0\",\"0\"]", "q*x1\",\"0\",\"0\"]");
        let f = ModelFile::from_json(&bad).unwrap();
        assert!(matches!(f.build(&BTreeMap::new()), Err(Error::UnknownIdentifier { .. })));
        let bad = HYPERBOLIC.replace("[0,1,0]]", "[0,1,1]]");
        let f = ModelFile::from_json(&bad).unwrap();
        assert!(matches!(f.build(&BTreeMap::new()), Err(Error::InvalidStructure(_))));
    }
}
