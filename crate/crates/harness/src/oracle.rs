//! Named reference problems and their optimal designs, matched to the
//! dimension of the model in use.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, ensure, Result};
use serde_json::{json, Value};
use thin_core::linalg::Matrix;
use thin_core::oracles::{self, OracleResult, Region};

use crate::stream::{Model, Source, DEFAULT_SPHERE_RADII};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleName {
    /// Scalar normal, `f = (1, x, x^2)`.
    QuadNormal,
    /// `N(0, I_d)`, `M(x) = x x^T`.
    Multilinear { d: Option<usize> },
    /// Normal plus discrete atoms in dimension 2.
    Mixture,
    /// Three nested spheres.
    Spheres { d: Option<usize>, radii: [f64; 3] },
    /// `U[0, 1]`, `f = (x, x^2)`.
    Quad01,
    /// `U([-1, 1]^2)` with intercept.
    UniformSquare,
}

impl FromStr for OracleName {
    type Err = anyhow::Error;

    /// `quad-normal`, `multilinear[:D]`, `mixture`, `spheres[:D]`,
    /// `quad01`, `uniform-square`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let d = if rest.is_empty() { None } else { Some(rest.parse()?) };
        Ok(match head {
            "quad-normal" => OracleName::QuadNormal,
            "multilinear" => OracleName::Multilinear { d },
            "mixture" => OracleName::Mixture,
            "spheres" => OracleName::Spheres { d, radii: DEFAULT_SPHERE_RADII },
            "quad01" => OracleName::Quad01,
            "uniform-square" => OracleName::UniformSquare,
            _ => bail!("unknown oracle {s:?}"),
        })
    }
}

impl fmt::Display for OracleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleName::QuadNormal => write!(f, "quad-normal"),
            OracleName::Multilinear { d: None } => write!(f, "multilinear"),
            OracleName::Multilinear { d: Some(d) } => write!(f, "multilinear:{d}"),
            OracleName::Mixture => write!(f, "mixture"),
            OracleName::Spheres { d: None, .. } => write!(f, "spheres"),
            OracleName::Spheres { d: Some(d), .. } => write!(f, "spheres:{d}"),
            OracleName::Quad01 => write!(f, "quad01"),
            OracleName::UniformSquare => write!(f, "uniform-square"),
        }
    }
}

impl OracleName {
    /// Fills in the dimension (and radii) from the stream when omitted.
    pub fn for_source(self, source: &Source) -> OracleName {
        match (self, source) {
            (OracleName::Multilinear { d: None }, Source::NormalIid { d }) => OracleName::Multilinear { d: Some(*d) },
            (OracleName::Spheres { d: None, .. }, Source::ThreeSpheres { d, radii }) => {
                OracleName::Spheres { d: Some(*d), radii: *radii }
            }
            (o, _) => o,
        }
    }

    /// Optimal design for fraction `alpha`.
    pub fn evaluate(&self, alpha: f64) -> Result<OracleResult> {
        Ok(match *self {
            OracleName::QuadNormal => oracles::oracle_quad_normal(alpha)?,
            OracleName::Multilinear { d } => {
                let d = d.unwrap_or(2);
                if d == 2 {
                    oracles::oracle_multilinear_normal_2d(alpha)?
                } else {
                    oracles::oracle_multilinear_normal(alpha, d)?
                }
            }
            OracleName::Mixture => oracles::oracle_mixture_normal_discrete(alpha)?,
            OracleName::Spheres { d, radii } => {
                oracles::oracle_three_spheres(alpha, d.unwrap_or(3), (radii[0], radii[1], radii[2]))?
            }
            OracleName::Quad01 => oracles::oracle_quad01(alpha)?,
            OracleName::UniformSquare => oracles::oracle_uniform_square(alpha)?,
        })
    }

    /// Optimal design expressed for `model`: the multilinear and sphere
    /// oracles gain a unit intercept entry under [`Model::WithIntercept`].
    pub fn evaluate_for(&self, alpha: f64, model: Model, p: usize) -> Result<OracleResult> {
        let mut o = self.evaluate(alpha)?;
        let Some(m) = o.m_star.take() else { bail!("oracle {self} has no optimal matrix") };
        let m = match (self, model) {
            (
                OracleName::Multilinear { .. } | OracleName::Spheres { .. } | OracleName::Mixture,
                Model::WithIntercept,
            ) => {
                let d = m.dim();
                let mut rows = vec![0.0; (d + 1) * (d + 1)];
                rows[0] = 1.0;
                for i in 0..d {
                    for j in 0..d {
                        rows[(i + 1) * (d + 1) + j + 1] = m.row(i)[j];
                    }
                }
                Matrix::from_row_major(d + 1, &rows)
            }
            _ => m,
        };
        ensure!(m.dim() == p, "oracle {self} describes dimension {} but the model has {p} parameters", m.dim());
        o.m_star = Some(m);
        Ok(o)
    }
}

pub fn matrix_json(m: &Matrix) -> Value {
    Value::Array((0..m.dim()).map(|i| json!(m.row(i))).collect())
}

fn region_json(r: &Region) -> Value {
    match *r {
        Region::QuadNormal { a, b } => json!({"kind": "quad-normal", "a": a, "b": b}),
        Region::Ball { radius, rho } => json!({"kind": "ball", "radius": radius, "rho": rho}),
        Region::Mixture { radius, rho, discrete_mass } => {
            json!({"kind": "mixture", "radius": radius, "rho": rho, "discrete_mass": discrete_mass})
        }
        Region::Spheres { boundary, rho } => json!({"kind": "spheres", "boundary": boundary, "rho": rho}),
        Region::UnitInterval { a, b } => json!({"kind": "unit-interval", "a": a, "b": b}),
        Region::Square { radius, rho } => json!({"kind": "square", "radius": radius, "rho": rho}),
    }
}

pub fn oracle_json(name: &OracleName, o: &OracleResult) -> Value {
    json!({
        "example": name.to_string(),
        "alpha": o.alpha,
        "phi_star": o.phi_star,
        "c_star": o.c_star,
        "region": region_json(&o.region),
        "m_star": o.m_star.as_ref().map(matrix_json),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_fill() {
        let o: OracleName = "multilinear".parse().unwrap();
        assert_eq!(o.for_source(&Source::NormalIid { d: 4 }), OracleName::Multilinear { d: Some(4) });
        assert_eq!("spheres:5".parse::<OracleName>().unwrap().to_string(), "spheres:5");
        assert!("nope".parse::<OracleName>().is_err());
    }

    #[test]
    fn intercept_embedding() {
        let o = OracleName::Multilinear { d: Some(2) };
        let r = o.evaluate_for(0.5, Model::WithIntercept, 3).unwrap();
        let m = r.m_star.unwrap();
        assert_eq!(m.diag(), vec![1.0, 1.0 - 0.5f64.ln(), 1.0 - 0.5f64.ln()]);
        assert!(o.evaluate_for(0.5, Model::Identity, 3).is_err());
    }
}
