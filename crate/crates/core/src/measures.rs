//! Centered probability measures on the integers with exact atoms, and their
//! JSON interchange format.

use std::fs;
use std::path::Path;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{format_rational, int, powi, RationalText};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("measure has no atoms")]
    Empty,
    #[error("atom at x={x} has non-positive mass {mass}")]
    NonPositiveMass { x: i64, mass: String },
    #[error("duplicate atom at x={x}")]
    Duplicate { x: i64 },
    #[error("masses sum to {sum}, not 1")]
    Normalization { sum: String },
    #[error("measure is not centered: mean is {mean}")]
    Centering { mean: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("malformed measure file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("malformed measure file: {0}")]
    Schema(String),
    #[error("cannot access measure file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeasureKind {
    Finite,
    /// Centered geometric law on `x >= -n` with ratio `n / (n + 1)`, truncated
    /// once the remaining tail drops below `truncation_tail`.
    Geometric { n: u32, truncation_tail: BigRational },
}

/// A centered probability measure on the integers.
///
/// Atoms are strictly increasing in `x` with positive masses. For the
/// geometric kind the stored atoms carry the exact untruncated masses and the
/// omitted tail is tracked in [`CenteredMeasure::residual_tail`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CenteredMeasure {
    atoms: Vec<(i64, BigRational)>,
    kind: MeasureKind,
    residual_tail: BigRational,
}

impl CenteredMeasure {
    /// Validated finite measure from `(x, mass)` pairs in any order.
    pub fn from_atoms(pairs: Vec<(i64, BigRational)>) -> Result<Self, MeasureError> {
        if pairs.is_empty() {
            return Err(MeasureError::Empty);
        }
        let mut atoms = pairs;
        atoms.sort_by_key(|(x, _)| *x);
        for w in atoms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(MeasureError::Duplicate { x: w[0].0 });
            }
        }
        if let Some((x, mass)) = atoms.iter().find(|(_, m)| !m.is_positive()) {
            return Err(MeasureError::NonPositiveMass {
                x: *x,
                mass: format_rational(mass),
            });
        }
        let sum: BigRational = atoms.iter().map(|(_, m)| m.clone()).sum();
        if !sum.is_one() {
            return Err(MeasureError::Normalization {
                sum: format_rational(&sum),
            });
        }
        let mean: BigRational = atoms.iter().map(|(x, m)| int(*x) * m).sum();
        if !mean.is_zero() {
            return Err(MeasureError::Centering {
                mean: format_rational(&mean),
            });
        }
        Ok(Self {
            atoms,
            kind: MeasureKind::Finite,
            residual_tail: BigRational::zero(),
        })
    }

    /// `mu({x}) = pi (1 - pi)^(x + n)` for `x >= -n` with `pi = 1 / (1 + n)`.
    ///
    /// Atoms run from `-n` up to the smallest `x_max` whose remaining tail mass
    /// is strictly below `truncation_tail`.
    pub fn centered_geometric(n: u32, truncation_tail: BigRational) -> Result<Self, MeasureError> {
        if n == 0 {
            return Err(MeasureError::Parameter("geometric n must be >= 1".into()));
        }
        if !truncation_tail.is_positive() || truncation_tail >= BigRational::one() {
            return Err(MeasureError::Parameter(format!(
                "truncation_tail must lie in (0, 1), got {}",
                format_rational(&truncation_tail)
            )));
        }
        let kind = MeasureKind::Geometric {
            n,
            truncation_tail: truncation_tail.clone(),
        };
        let lo = -i64::from(n);
        let mut atoms = Vec::new();
        let mut x = lo;
        loop {
            atoms.push((x, geometric_mass(n, x)));
            if geometric_tail_above(n, x) < truncation_tail {
                break;
            }
            x += 1;
        }
        let residual_tail = geometric_tail_above(n, x);
        let measure = Self {
            atoms,
            kind,
            residual_tail,
        };
        measure.check_geometric_balance()?;
        Ok(measure)
    }

    // truncated first moment plus the closed-form tail moment must vanish
    fn check_geometric_balance(&self) -> Result<(), MeasureError> {
        let MeasureKind::Geometric { n, .. } = self.kind else {
            return Ok(());
        };
        let x_max = self.max_x();
        let kept: BigRational = self.atoms.iter().map(|(_, m)| m.clone()).sum();
        if kept + &self.residual_tail != BigRational::one() {
            return Err(MeasureError::Normalization {
                sum: format_rational(&(BigRational::one() - &self.residual_tail)),
            });
        }
        let mean = self.truncated_mean() + geometric_tail_first_moment(n, x_max);
        if !mean.is_zero() {
            return Err(MeasureError::Centering {
                mean: format_rational(&mean),
            });
        }
        Ok(())
    }

    pub fn atoms(&self) -> &[(i64, BigRational)] {
        &self.atoms
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn is_finite(&self) -> bool {
        self.kind == MeasureKind::Finite
    }

    /// Mass outside the stored atoms (zero for finite measures).
    pub fn residual_tail(&self) -> &BigRational {
        &self.residual_tail
    }

    pub fn min_x(&self) -> i64 {
        self.atoms[0].0
    }

    pub fn max_x(&self) -> i64 {
        self.atoms[self.atoms.len() - 1].0
    }

    /// `sum x * mass` over the stored atoms.
    pub fn truncated_mean(&self) -> BigRational {
        self.atoms.iter().map(|(x, m)| int(*x) * m).sum()
    }

    /// Exact `mu({x})`, including atoms beyond a truncation.
    pub fn mass_at(&self, x: i64) -> BigRational {
        match &self.kind {
            MeasureKind::Finite => self
                .atoms
                .binary_search_by_key(&x, |(ax, _)| *ax)
                .map(|i| self.atoms[i].1.clone())
                .unwrap_or_else(|_| BigRational::zero()),
            MeasureKind::Geometric { n, .. } => {
                if x < -i64::from(*n) {
                    BigRational::zero()
                } else {
                    geometric_mass(*n, x)
                }
            }
        }
    }

    /// Exact `mu({x + 1, x + 2, ...})`, including any truncated tail.
    pub fn mass_above(&self, x: i64) -> BigRational {
        match &self.kind {
            MeasureKind::Finite => self
                .atoms
                .iter()
                .filter(|(ax, _)| *ax > x)
                .map(|(_, m)| m.clone())
                .sum(),
            MeasureKind::Geometric { n, .. } => {
                if x < -i64::from(*n) {
                    BigRational::one()
                } else {
                    geometric_tail_above(*n, x)
                }
            }
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, MeasureError> {
        let file: MeasureFile = serde_json::from_str(text)?;
        match (file.kind.as_str(), file.atoms, file.n, file.truncation_tail) {
            ("finite", Some(atoms), None, None) => {
                Self::from_atoms(atoms.into_iter().map(|a| (a.x, a.mass.0)).collect())
            }
            ("geometric", None, Some(n), Some(tail)) => Self::centered_geometric(n, tail.0),
            ("finite", ..) => Err(MeasureError::Schema(
                "kind \"finite\" takes exactly the key \"atoms\"".into(),
            )),
            ("geometric", ..) => Err(MeasureError::Schema(
                "kind \"geometric\" takes exactly the keys \"n\" and \"truncation_tail\"".into(),
            )),
            (other, ..) => Err(MeasureError::Schema(format!(
                "unknown kind {other:?}; expected \"finite\" or \"geometric\""
            ))),
        }
    }

    pub fn to_json_string(&self) -> String {
        let file = match &self.kind {
            MeasureKind::Finite => MeasureFile {
                kind: "finite".into(),
                atoms: Some(
                    self.atoms
                        .iter()
                        .map(|(x, m)| AtomEntry {
                            x: *x,
                            mass: RationalText(m.clone()),
                        })
                        .collect(),
                ),
                n: None,
                truncation_tail: None,
            },
            MeasureKind::Geometric { n, truncation_tail } => MeasureFile {
                kind: "geometric".into(),
                atoms: None,
                n: Some(*n),
                truncation_tail: Some(RationalText(truncation_tail.clone())),
            },
        };
        serde_json::to_string_pretty(&file).expect("measure serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MeasureError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MeasureError> {
        fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }
}

/// The interval-2 uniform measure on `{-2n, -2n + 2, ..., 2n}`.
pub fn uniform_interval_two(n: u32) -> Result<CenteredMeasure, MeasureError> {
    let n = i64::from(n);
    let mass = BigRational::new(1.into(), (2 * n + 1).into());
    CenteredMeasure::from_atoms((0..=2 * n).map(|i| (-2 * n + 2 * i, mass.clone())).collect())
}

fn geometric_ratio(n: u32) -> BigRational {
    BigRational::new(n.into(), (n + 1).into())
}

fn geometric_mass(n: u32, x: i64) -> BigRational {
    let pi = BigRational::new(1.into(), (n + 1).into());
    pi * powi(&geometric_ratio(n), x + i64::from(n))
}

fn geometric_tail_above(n: u32, x: i64) -> BigRational {
    powi(&geometric_ratio(n), x + i64::from(n) + 1)
}

/// `sum_{x > k} x * mu({x})` for the centered geometric law, in closed form:
/// the tail mass times `k + 1 + n`.
pub fn geometric_tail_first_moment(n: u32, k: i64) -> BigRational {
    geometric_tail_above(n, k) * int(k + 1 + i64::from(n))
}

// flat rather than internally tagged so parse errors keep their positions
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureFile {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    atoms: Option<Vec<AtomEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation_tail: Option<RationalText>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomEntry {
    x: i64,
    mass: RationalText,
}
