//! Coupling costs m ↦ f(m) and their antiderivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inner, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    StrictMonotone,
    AntiMonotone,
    Neither,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// f(x, m) = a·m^p + f₀(x).
    LocalPower { a: f64, p: f64, f0: ScalarField },
    /// f(x, m) = c₀ + c₁·⟨w, m⟩.
    NonlocalAffine { c0: f64, c1: f64, w: ScalarField },
    /// f(x, m) = base(x) + m(x) − m_ref(x).
    LocalAffineShifted {
        base: ScalarField,
        m_ref: ScalarField,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostOperator {
    kind: CostKind,
    monotonicity: Monotonicity,
}

impl CostOperator {
    pub fn local_power(a: f64, p: f64, f0: ScalarField) -> Result<Self> {
        if !(p >= 1.0) || !a.is_finite() {
            return Err(Error::InvalidInput(format!(
                "local_power needs finite a and p ≥ 1, got a={a}, p={p}"
            )));
        }
        let monotonicity = if a > 0.0 {
            Monotonicity::StrictMonotone
        } else if a < 0.0 {
            Monotonicity::AntiMonotone
        } else {
            Monotonicity::Neither
        };
        Ok(CostOperator {
            kind: CostKind::LocalPower { a, p, f0 },
            monotonicity,
        })
    }

    pub fn nonlocal_affine(c0: f64, c1: f64, w: ScalarField) -> Result<Self> {
        if !(c0.is_finite() && c1.is_finite()) {
            return Err(Error::InvalidInput(
                "nonlocal_affine coefficients must be finite".into(),
            ));
        }
        let w_nonneg = w.values().iter().all(|v| *v >= 0.0);
        let monotonicity = if c1 < 0.0 && w_nonneg {
            Monotonicity::AntiMonotone
        } else {
            Monotonicity::Neither
        };
        Ok(CostOperator {
            kind: CostKind::NonlocalAffine { c0, c1, w },
            monotonicity,
        })
    }

    pub fn local_affine_shifted(base: ScalarField, m_ref: ScalarField) -> Result<Self> {
        if base.grid() != m_ref.grid() {
            return Err(Error::InvalidInput(
                "base and m_ref live on different grids".into(),
            ));
        }
        Ok(CostOperator {
            kind: CostKind::LocalAffineShifted { base, m_ref },
            monotonicity: Monotonicity::StrictMonotone,
        })
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.monotonicity
    }

    pub fn is_local(&self) -> bool {
        !matches!(self.kind, CostKind::NonlocalAffine { .. })
    }

    pub fn evaluate(&self, m: &ScalarField) -> Result<ScalarField> {
        match &self.kind {
            CostKind::LocalPower { a, p, f0 } => {
                let (a, p) = (*a, *p);
                f0.zip_map(m, |f, mi| f + a * power(mi, p))
            }
            CostKind::NonlocalAffine { c0, c1, w } => {
                let e = inner(w, m)?;
                Ok(ScalarField::constant(*m.grid(), c0 + c1 * e))
            }
            CostKind::LocalAffineShifted { base, m_ref } => {
                let d = m.sub(m_ref)?;
                base.add(&d)
            }
        }
    }

    /// Antiderivative in m, available for local costs.
    pub fn potential(&self) -> Option<PotentialOperator> {
        self.is_local()
            .then(|| PotentialOperator { cost: self.clone() })
    }
}

fn power(m: f64, p: f64) -> f64 {
    if p == 1.0 {
        m
    } else {
        m.max(0.0).powf(p)
    }
}

/// 𝓕(x, m) with ∂𝓕/∂m = f(x, m) for a local cost.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOperator {
    cost: CostOperator,
}

impl PotentialOperator {
    pub fn cost(&self) -> &CostOperator {
        &self.cost
    }

    /// 𝓕 at node i evaluated at density value `m`.
    pub fn pointwise(&self, i: usize, m: f64) -> f64 {
        match &self.cost.kind {
            CostKind::LocalPower { a, p, f0 } => {
                let mp = if *p == 1.0 {
                    m * m
                } else {
                    m.max(0.0).powf(p + 1.0)
                };
                a * mp / (p + 1.0) + f0.values()[i] * m
            }
            CostKind::LocalAffineShifted { base, m_ref } => {
                (base.values()[i] - m_ref.values()[i]) * m + 0.5 * m * m
            }
            CostKind::NonlocalAffine { .. } => unreachable!("potential only built for local costs"),
        }
    }

    /// f at node i evaluated at density value `m`.
    pub fn derivative(&self, i: usize, m: f64) -> f64 {
        match &self.cost.kind {
            CostKind::LocalPower { a, p, f0 } => f0.values()[i] + a * power(m, *p),
            CostKind::LocalAffineShifted { base, m_ref } => {
                base.values()[i] + m - m_ref.values()[i]
            }
            CostKind::NonlocalAffine { .. } => unreachable!("potential only built for local costs"),
        }
    }

    /// ∂f/∂m at node i, for densities m ≥ 0.
    pub fn second_derivative(&self, _i: usize, m: f64) -> f64 {
        match &self.cost.kind {
            CostKind::LocalPower { a, p, .. } => {
                if *p == 1.0 {
                    *a
                } else {
                    a * p * m.max(0.0).powf(p - 1.0)
                }
            }
            CostKind::LocalAffineShifted { .. } => 1.0,
            CostKind::NonlocalAffine { .. } => unreachable!("potential only built for local costs"),
        }
    }

    /// Σ 𝓕(x_i, m_i) ∏ h.
    pub fn total(&self, m: &ScalarField) -> f64 {
        m.values()
            .iter()
            .enumerate()
            .map(|(i, v)| self.pointwise(i, *v))
            .sum::<f64>()
            * m.grid().cell_measure()
    }

    /// Strict convexity in m (needed by the variational solver).
    pub fn is_strictly_convex(&self) -> bool {
        match &self.cost.kind {
            CostKind::LocalPower { a, .. } => *a > 0.0,
            CostKind::LocalAffineShifted { .. } => true,
            CostKind::NonlocalAffine { .. } => false,
        }
    }
}
