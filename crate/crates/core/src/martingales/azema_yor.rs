use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{int, powi, serde_rational, serde_rational_vec};
use crate::walk::{joint_dist_sequence, WalkParams};

use super::MartingaleError;

/// `g(z) = z` when `p = q`, otherwise `((q/p)^{-z} - 1) / (1 - q/p)`.
pub fn g_pq(params: &WalkParams, z: f64) -> f64 {
    if params.is_symmetric() {
        return z;
    }
    let ratio = crate::rational::to_f64(&(params.q() / params.p()));
    // (q/p)^{-z} - 1 = expm1(-z ln(q/p))
    (-z * ratio.ln()).exp_m1() / (1.0 - ratio)
}

/// [`g_pq`] at an integer argument, exact.
pub fn g_pq_exact(params: &WalkParams, k: i64) -> BigRational {
    if params.is_symmetric() {
        return int(k);
    }
    let ratio = params.q() / params.p();
    (powi(&ratio, -k) - BigRational::one()) / (BigRational::one() - ratio)
}

/// Boundary function `F` on `0..=y_max` together with the walk it refers to.
///
/// Determines `H(x, y) = F(y) - (F(y+1) - F(y)) g_pq(y - x)` on
/// `max(x, 0) <= y <= y_max - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AzemaYorSpec {
    params: WalkParams,
    boundary: Vec<BigRational>,
}

impl AzemaYorSpec {
    pub fn new(params: WalkParams, boundary: Vec<BigRational>) -> Result<Self, MartingaleError> {
        if boundary.len() < 2 {
            return Err(MartingaleError::Parameter(format!(
                "F needs values on at least 0..=1, got {} entries",
                boundary.len()
            )));
        }
        Ok(Self { params, boundary })
    }

    pub fn params(&self) -> &WalkParams {
        &self.params
    }

    pub fn boundary(&self) -> &[BigRational] {
        &self.boundary
    }

    pub fn y_max(&self) -> i64 {
        self.boundary.len() as i64 - 1
    }

    pub fn from_json_str(text: &str) -> Result<Self, MartingaleError> {
        let file: SpecFile = serde_json::from_str(text)?;
        let params = WalkParams::new(file.params.p, file.params.q, file.params.r)
            .map_err(|e| MartingaleError::Parameter(e.to_string()))?;
        Self::new(params, file.boundary)
    }

    pub fn to_json_string(&self) -> String {
        let file = SpecFile {
            params: ParamsFile {
                p: self.params.p().clone(),
                q: self.params.q().clone(),
                r: self.params.r().clone(),
            },
            boundary: self.boundary.clone(),
        };
        serde_json::to_string_pretty(&file).expect("spec serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MartingaleError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

/// `H(x, y)` for `max(x, 0) <= y <= y_max - 1`, exact.
pub fn azema_yor_h(spec: &AzemaYorSpec, x: i64, y: i64) -> Result<BigRational, MartingaleError> {
    if x.max(0) > y || y >= spec.y_max() {
        return Err(MartingaleError::Domain { x, y, y_max: spec.y_max() });
    }
    let f = &spec.boundary;
    let (fy, fy1) = (&f[y as usize], &f[y as usize + 1]);
    Ok(fy - (fy1 - fy) * g_pq_exact(&spec.params, y - x))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub x: i64,
    pub y: i64,
    pub value: BigRational,
    /// `E[H(Z_{t+1}, M_{t+1}) | Z_t = x, M_t = y]`.
    pub conditional_mean: BigRational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MartingaleVerdict {
    pub t_max: u32,
    pub states_checked: usize,
    pub counterexample: Option<Counterexample>,
}

impl MartingaleVerdict {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// States `(z, m)` charged by the walk at some time `t < t_max`, in order of
/// first appearance.
pub fn reachable_states(params: &WalkParams, t_max: u32) -> Vec<(i64, i64)> {
    let mut seen = HashSet::new();
    let mut order = Vec::new();
    if t_max == 0 {
        return order;
    }
    for dist in joint_dist_sequence(params, t_max - 1) {
        for ((z, m), _) in dist.iter() {
            if seen.insert((z, m)) {
                order.push((z, m));
            }
        }
    }
    order
}

/// Checks `E[H(Z_{t+1}, M_{t+1}) | F_t] = H(Z_t, M_t)` exactly at every state
/// reachable before `t_max`:
///
/// * `x = y`: `H(x, y) = p H(x+1, y+1) + q H(x-1, y) + r H(x, y)`
/// * `x < y`: `H(x, y) = p H(x+1, y) + q H(x-1, y) + r H(x, y)`
///
/// `h` returns `None` outside its domain, which is reported as a coverage
/// error.
pub fn verify_martingale_fn<F>(
    params: &WalkParams,
    t_max: u32,
    mut h: F,
) -> Result<MartingaleVerdict, MartingaleError>
where
    F: FnMut(i64, i64) -> Option<BigRational>,
{
    let states = reachable_states(params, t_max);
    let mut eval = |x: i64, y: i64| {
        h(x, y).ok_or_else(|| {
            MartingaleError::Coverage(format!("H undefined at reachable state ({x}, {y})"))
        })
    };
    let mut checked = 0;
    for &(x, y) in &states {
        let value = eval(x, y)?;
        let up = if x == y { eval(x + 1, y + 1)? } else { eval(x + 1, y)? };
        let down = eval(x - 1, y)?;
        let conditional_mean = params.p() * up + params.q() * down + params.r() * &value;
        checked += 1;
        if conditional_mean != value {
            return Ok(MartingaleVerdict {
                t_max,
                states_checked: checked,
                counterexample: Some(Counterexample {
                    x,
                    y,
                    value,
                    conditional_mean,
                }),
            });
        }
    }
    Ok(MartingaleVerdict {
        t_max,
        states_checked: checked,
        counterexample: None,
    })
}

/// [`verify_martingale_fn`] for the `H` determined by `spec`. Requires
/// `y_max >= t_max + 1` so every state the check touches has `F(y + 1)`.
pub fn verify_martingale_h(spec: &AzemaYorSpec, t_max: u32) -> Result<MartingaleVerdict, MartingaleError> {
    if spec.y_max() < i64::from(t_max) + 1 {
        return Err(MartingaleError::Coverage(format!(
            "F is tabulated up to y={} but horizon {t_max} needs y up to {}",
            spec.y_max(),
            i64::from(t_max) + 1
        )));
    }
    verify_martingale_fn(&spec.params, t_max, |x, y| azema_yor_h(spec, x, y).ok())
}

/// Verifies an explicit table of `H` values.
pub fn verify_martingale_table(
    params: &WalkParams,
    table: &BTreeMap<(i64, i64), BigRational>,
    t_max: u32,
) -> Result<MartingaleVerdict, MartingaleError> {
    verify_martingale_fn(params, t_max, |x, y| table.get(&(x, y)).cloned())
}

/// `H` tabulated on `max(x, 0) <= y <= y_top`, `x >= -y_top`.
pub fn tabulate_h(spec: &AzemaYorSpec, y_top: i64) -> Result<BTreeMap<(i64, i64), BigRational>, MartingaleError> {
    let mut table = BTreeMap::new();
    for y in 0..=y_top {
        for x in -y_top..=y {
            table.insert((x, y), azema_yor_h(spec, x, y)?);
        }
    }
    Ok(table)
}

/// `E[H(Z_t, M_t)]` for `t = 0..=t_max`; constant and equal to `F(0)` for a
/// martingale.
pub fn expected_path(spec: &AzemaYorSpec, t_max: u32) -> Result<Vec<BigRational>, MartingaleError> {
    joint_dist_sequence(&spec.params, t_max)
        .iter()
        .map(|d| {
            let mut err = None;
            let value = d.expect(|z, m| match azema_yor_h(spec, z, m) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    BigRational::zero()
                }
            });
            err.map_or(Ok(value), Err)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    #[serde(with = "serde_rational")]
    p: BigRational,
    #[serde(with = "serde_rational")]
    q: BigRational,
    #[serde(with = "serde_rational")]
    r: BigRational,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    params: ParamsFile,
    #[serde(rename = "F", with = "serde_rational_vec")]
    boundary: Vec<BigRational>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn lazy_up() -> WalkParams {
        WalkParams::new(ratio(1, 2), ratio(1, 4), ratio(1, 4)).unwrap()
    }

    #[test]
    fn g_at_zero_and_symmetric_case() {
        assert_eq!(g_pq(&lazy_up(), 0.0), 0.0);
        assert_eq!(g_pq(&WalkParams::simple(), 3.25), 3.25);
        assert!(g_pq_exact(&lazy_up(), 0).is_zero());
    }

    #[test]
    fn g_direct_value() {
        // ((1/2)^{-2} - 1) / (1 - 1/2) = 6
        let ps = WalkParams::new(ratio(2, 3), ratio(1, 3), int(0)).unwrap();
        assert!((g_pq(&ps, 2.0) - 6.0).abs() < 1e-13);
        assert_eq!(g_pq_exact(&ps, 2), int(6));
        assert_eq!(g_pq_exact(&ps, 1), int(2)); // p/q
    }

    #[test]
    fn constant_boundary_gives_constant_h() {
        let spec = AzemaYorSpec::new(lazy_up(), vec![ratio(5, 3); 6]).unwrap();
        for y in 0..5 {
            for x in -3..=y {
                assert_eq!(azema_yor_h(&spec, x, y).unwrap(), ratio(5, 3));
            }
        }
    }

    #[test]
    fn identity_boundary_recovers_walk() {
        let spec = AzemaYorSpec::new(WalkParams::simple(), (0..8).map(int).collect()).unwrap();
        assert_eq!(azema_yor_h(&spec, -3, 4).unwrap(), int(-3));
        assert_eq!(azema_yor_h(&spec, 2, 2).unwrap(), int(2));
    }

    #[test]
    fn maximal_boundary_value() {
        let f = (0..8).map(|y: i64| int((y - 3).max(0))).collect();
        let spec = AzemaYorSpec::new(WalkParams::simple(), f).unwrap();
        assert_eq!(azema_yor_h(&spec, 1, 4).unwrap(), int(-2));
    }

    #[test]
    fn domain_is_enforced() {
        let spec = AzemaYorSpec::new(WalkParams::simple(), vec![int(0); 4]).unwrap();
        assert!(matches!(azema_yor_h(&spec, 2, 1), Err(MartingaleError::Domain { .. })));
        assert!(matches!(azema_yor_h(&spec, 0, 3), Err(MartingaleError::Domain { .. })));
        assert!(matches!(azema_yor_h(&spec, -1, -1), Err(MartingaleError::Domain { .. })));
        assert!(AzemaYorSpec::new(WalkParams::simple(), vec![int(0)]).is_err());
    }

    #[test]
    fn characterized_h_passes() {
        let f: Vec<_> = [0, 3, -1, 4, 4, 7, 2, 9, 1].iter().map(|&v| ratio(v, 3)).collect();
        for ps in [WalkParams::simple(), lazy_up(), WalkParams::new(ratio(1, 5), ratio(3, 5), ratio(1, 5)).unwrap()] {
            let spec = AzemaYorSpec::new(ps, f.clone()).unwrap();
            let verdict = verify_martingale_h(&spec, 7).unwrap();
            assert!(verdict.passed(), "{verdict:?}");
            assert!(verdict.states_checked > 0);
            let means = expected_path(&spec, 7).unwrap();
            assert!(means.iter().all(|m| *m == f[0]));
        }
    }

    #[test]
    fn maximum_itself_is_not_a_martingale() {
        // H(x, y) = y fails on the diagonal: y vs y + p
        let verdict = verify_martingale_fn(&WalkParams::simple(), 4, |_, y| Some(int(y))).unwrap();
        let ce = verdict.counterexample.unwrap();
        assert_eq!((ce.x, ce.y), (0, 0));
        assert_eq!(ce.value, int(0));
        assert_eq!(ce.conditional_mean, ratio(1, 2));
    }

    #[test]
    fn horizon_needs_boundary_values() {
        let spec = AzemaYorSpec::new(WalkParams::simple(), vec![int(0); 6]).unwrap();
        assert!(verify_martingale_h(&spec, 5).is_err());
        assert!(verify_martingale_h(&spec, 4).is_ok());
    }

    #[test]
    fn table_with_hole_reports_coverage() {
        let spec = AzemaYorSpec::new(WalkParams::simple(), (0..8).map(int).collect()).unwrap();
        let mut table = tabulate_h(&spec, 6).unwrap();
        assert!(verify_martingale_table(spec.params(), &table, 5).unwrap().passed());
        table.remove(&(-3, 0));
        assert!(matches!(
            verify_martingale_table(spec.params(), &table, 5),
            Err(MartingaleError::Coverage(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"params": {"p": "1/2", "q": "1/2", "r": "0"}, "F": ["0", "0", "0", "0", "1", "2"]}"#;
        let spec = AzemaYorSpec::from_json_str(text).unwrap();
        assert_eq!(spec.y_max(), 5);
        assert_eq!(AzemaYorSpec::from_json_str(&spec.to_json_string()).unwrap(), spec);
        assert!(AzemaYorSpec::from_json_str(r#"{"params": {"p": "1/2", "q": "1/2", "r": "0"}, "F": ["0", "1"], "G": []}"#).is_err());
        assert!(AzemaYorSpec::from_json_str(r#"{"params": {"p": "1/2", "q": "1/3", "r": "0"}, "F": ["0", "1"]}"#).is_err());
    }
}
