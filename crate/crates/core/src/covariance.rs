//! Per-level empirical feature covariance matrices.
//!
//! Maintains `Lambda = sum phi phi^T + lambda I` together with its inverse
//! (Sherman-Morrison rank-1 updates) and log-determinant (matrix determinant
//! lemma), and evaluates the PSD-domination criterion that decides when the
//! deployed policy must be refreshed: a switch fires when the reference
//! inverse is no longer dominated by twice the current inverse, i.e. some
//! direction has accumulated twice the information seen at deployment time.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the feature-norm bound `||phi|| <= 1`.
pub const FEATURE_NORM_TOL: f64 = 1e-9;
/// Negativity slack on the least-eigenvalue switch test.
pub const SWITCH_EIG_TOL: f64 = 1e-10;
/// Default refactorization period for the incremental inverse/logdet.
pub const DEFAULT_REFACTOR_PERIOD: u32 = 512;

/// A feature vector with `||phi|| <= 1` enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVec(DVector<f64>);

impl FeatureVec {
    /// Wraps a vector, rejecting norms beyond `1 + FEATURE_NORM_TOL`.
    pub fn new(entries: DVector<f64>) -> Result<Self> {
        let norm = entries.norm();
        if !norm.is_finite() || norm > 1.0 + FEATURE_NORM_TOL {
            return Err(Error::FeatureNorm {
                norm,
                tol: FEATURE_NORM_TOL,
            });
        }
        Ok(FeatureVec(entries))
    }

    pub fn from_slice(entries: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(entries))
    }

    /// Canonical basis vector `e_i` in dimension `d`.
    pub fn basis(d: usize, i: usize) -> Self {
        assert!(i < d, "basis index {i} out of range for dimension {d}");
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        FeatureVec(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Regularized feature covariance `Lambda`, its inverse and log-determinant.
///
/// The inverse is maintained by rank-1 updates and the log-determinant by the
/// matrix determinant lemma; every `refactor_period` updates both are
/// recomputed from `matrix` by a Cholesky factorization to bound drift.
#[derive(Debug, Clone)]
pub struct CovarianceState {
    dim: usize,
    lambda: f64,
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    logdet: f64,
    count: u64,
    refactor_period: u32,
}

impl CovarianceState {
    /// Fresh state `Lambda = lambda I` (the empty-sum case).
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        Self::with_refactor_period(dim, lambda, DEFAULT_REFACTOR_PERIOD)
    }

    pub fn with_refactor_period(dim: usize, lambda: f64, refactor_period: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if lambda.is_nan() || lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if refactor_period == 0 {
            return Err(Error::InvalidParameter(
                "refactor period must be >= 1".into(),
            ));
        }
        Ok(CovarianceState {
            dim,
            lambda,
            matrix: DMatrix::identity(dim, dim) * lambda,
            inverse: DMatrix::identity(dim, dim) / lambda,
            logdet: dim as f64 * lambda.ln(),
            count: 0,
            refactor_period,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    fn check_dim(&self, phi: &FeatureVec) -> Result<()> {
        if phi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: phi.dim(),
            });
        }
        Ok(())
    }

    /// Absorbs one outer product: `Lambda += phi phi^T`.
    pub fn rank1_update(&mut self, phi: &FeatureVec) -> Result<()> {
        self.check_dim(phi)?;
        let v = phi.as_vector();
        let inv_v = &self.inverse * v;
        let quad = v.dot(&inv_v);
        // Sherman-Morrison plus the matrix determinant lemma.
        self.matrix += v * v.transpose();
        self.inverse -= (&inv_v * inv_v.transpose()) / (1.0 + quad);
        self.logdet += (1.0 + quad).ln();
        self.count += 1;
        if self.count.is_multiple_of(u64::from(self.refactor_period)) {
            self.refactor()?;
        }
        Ok(())
    }

    /// Recomputes inverse and logdet from `matrix` via Cholesky.
    fn refactor(&mut self) -> Result<()> {
        let chol = Cholesky::new(self.matrix.clone()).ok_or_else(|| {
            Error::Numerical("covariance matrix lost positive definiteness".into())
        })?;
        self.logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let mut inv = chol.inverse();
        // Cholesky inverse is symmetric up to roundoff; keep it exactly so.
        inv = (&inv + inv.transpose()) * 0.5;
        self.inverse = inv;
        Ok(())
    }

    /// The quadratic form `phi^T Lambda^{-1} phi`.
    pub fn quad_form(&self, phi: &FeatureVec) -> Result<f64> {
        self.check_dim(phi)?;
        let v = phi.as_vector();
        Ok(v.dot(&(&self.inverse * v)).max(0.0))
    }

    /// Debug dump: matrix, inverse, logdet and count as JSON (row-major
    /// arrays, 17-significant-digit decimal floats).
    pub fn to_debug_json(&self) -> Result<String> {
        let dump = CovarianceDump {
            dim: self.dim,
            lambda: self.lambda,
            matrix: row_major(&self.matrix),
            inverse: row_major(&self.inverse),
            logdet: self.logdet,
            count: self.count,
        };
        crate::jsonfmt::to_string_17sig(&dump)
    }
}

#[derive(Serialize, Deserialize)]
struct CovarianceDump {
    dim: usize,
    lambda: f64,
    matrix: Vec<Vec<f64>>,
    inverse: Vec<Vec<f64>>,
    logdet: f64,
    count: u64,
}

fn row_major(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Least eigenvalue of the explicitly symmetrized matrix.
fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Whether the deployed policy must be refreshed: true iff the reference
/// inverse is NOT dominated by twice the current inverse, i.e.
/// `lambda_min(2 cur^{-1} - ref^{-1}) < -SWITCH_EIG_TOL`.
///
/// Precondition: `cur` has absorbed a superset of `ref`'s updates, so
/// `cur.matrix - ref.matrix` is PSD; violating this is a contract error.
pub fn switch_required(ref_state: &CovarianceState, cur_state: &CovarianceState) -> Result<bool> {
    if ref_state.dim != cur_state.dim {
        return Err(Error::DimensionMismatch {
            expected: ref_state.dim,
            got: cur_state.dim,
        });
    }
    let growth_min = min_eigenvalue(&(&cur_state.matrix - &ref_state.matrix));
    if growth_min < -1e-8 {
        return Err(Error::Contract(format!(
            "reference covariance not dominated by current (least eigenvalue {growth_min:.3e})"
        )));
    }
    let gap = &cur_state.inverse * 2.0 - &ref_state.inverse;
    Ok(min_eigenvalue(&gap) < -SWITCH_EIG_TOL)
}

/// Checks the potential-growth guarantee that accompanies every switch:
/// `logdet(cur) >= logdet(ref) + ln 2` (up to 1e-8).
pub fn verify_det_growth(ref_state: &CovarianceState, cur_state: &CovarianceState) -> bool {
    cur_state.logdet >= ref_state.logdet + std::f64::consts::LN_2 - 1e-8
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    pub(crate) fn random_unit(d: usize, rng: &mut impl Rng) -> FeatureVec {
        loop {
            let v = DVector::from_fn(d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let norm = v.norm();
            if norm > 1e-6 {
                return FeatureVec::new(v / norm).unwrap();
            }
        }
    }

    /// Independent oracle: logdet by eigendecomposition of the explicit sum.
    fn direct_logdet(m: &DMatrix<f64>) -> f64 {
        SymmetricEigen::new(symmetrize(m))
            .eigenvalues
            .iter()
            .map(|x| x.ln())
            .sum()
    }

    #[test]
    fn new_identity_case() {
        let s = CovarianceState::new(3, 1.0).unwrap();
        assert_eq!(s.matrix(), &DMatrix::<f64>::identity(3, 3));
        assert_eq!(s.logdet(), 0.0);
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn new_diagonal_determinant() {
        let s = CovarianceState::new(2, 4.0).unwrap();
        assert!((s.logdet() - 2.0 * 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn new_quad_form_basis() {
        let s = CovarianceState::new(5, 1.0).unwrap();
        let q = s.quad_form(&FeatureVec::basis(5, 0)).unwrap();
        assert!((q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn new_rejects_bad_params() {
        assert!(CovarianceState::new(0, 1.0).is_err());
        assert!(CovarianceState::new(2, 0.0).is_err());
        assert!(CovarianceState::new(2, -1.0).is_err());
    }

    #[test]
    fn rank1_basis_update() {
        let mut s = CovarianceState::new(2, 1.0).unwrap();
        s.rank1_update(&FeatureVec::basis(2, 0)).unwrap();
        assert_eq!(s.matrix()[(0, 0)], 2.0);
        assert_eq!(s.matrix()[(1, 1)], 1.0);
        assert!((s.logdet() - 2.0_f64.ln()).abs() < 1e-12);
        assert_eq!(s.count(), 1);
    }

    #[test]
    fn rank1_unit_diagonal_vector() {
        let mut s = CovarianceState::new(2, 1.0).unwrap();
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        let phi = FeatureVec::from_slice(&[inv_sqrt2, inv_sqrt2]).unwrap();
        s.rank1_update(&phi).unwrap();
        assert!((s.logdet() - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rank1_rejects_mismatch_and_norm() {
        let mut s = CovarianceState::new(2, 1.0).unwrap();
        assert!(matches!(
            s.rank1_update(&FeatureVec::basis(3, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            FeatureVec::from_slice(&[1.0, 1.0]),
            Err(Error::FeatureNorm { .. })
        ));
    }

    #[test]
    fn incremental_logdet_matches_eigendecomposition_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let d = 4;
        let mut s = CovarianceState::new(d, 1.0).unwrap();
        let mut explicit = DMatrix::<f64>::identity(d, d);
        for _ in 0..100 {
            let phi = random_unit(d, &mut rng);
            explicit += phi.as_vector() * phi.as_vector().transpose();
            s.rank1_update(&phi).unwrap();
        }
        assert!((s.logdet() - direct_logdet(&explicit)).abs() < 1e-8);
    }

    #[test]
    fn quad_form_after_basis_update() {
        let mut s = CovarianceState::new(2, 1.0).unwrap();
        let e1 = FeatureVec::basis(2, 0);
        s.rank1_update(&e1).unwrap();
        assert!((s.quad_form(&e1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quad_form_repeated_updates_closed_form() {
        let mut s = CovarianceState::new(3, 1.0).unwrap();
        let e1 = FeatureVec::basis(3, 0);
        for n in 1..=10 {
            s.rank1_update(&e1).unwrap();
            let expected = 1.0 / (1.0 + n as f64);
            assert!((s.quad_form(&e1).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn switch_required_examples() {
        let base = CovarianceState::new(2, 1.0).unwrap();
        // ref = cur.
        assert!(!switch_required(&base, &base).unwrap());

        // One basis update sits exactly on the domination boundary.
        let mut one = base.clone();
        one.rank1_update(&FeatureVec::basis(2, 0)).unwrap();
        assert!(!switch_required(&base, &one).unwrap());

        // Two identical updates: 2/3 < 1 along e1.
        let mut two = one.clone();
        two.rank1_update(&FeatureVec::basis(2, 0)).unwrap();
        assert!(switch_required(&base, &two).unwrap());
    }

    #[test]
    fn switch_required_contract_error() {
        let fresh = CovarianceState::new(2, 1.0).unwrap();
        let mut grown = fresh.clone();
        grown.rank1_update(&FeatureVec::basis(2, 0)).unwrap();
        assert!(matches!(
            switch_required(&grown, &fresh),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn det_growth_diagonal_cases() {
        let ref_s = CovarianceState::new(1, 1.0).unwrap();
        let mut cur = ref_s.clone();
        cur.rank1_update(&FeatureVec::basis(1, 0)).unwrap();
        cur.rank1_update(&FeatureVec::basis(1, 0)).unwrap();
        assert!(switch_required(&ref_s, &cur).unwrap());
        assert!(verify_det_growth(&ref_s, &cur));

        let ref2 = CovarianceState::new(2, 1.0).unwrap();
        let mut cur2 = ref2.clone();
        cur2.rank1_update(&FeatureVec::basis(2, 0)).unwrap();
        cur2.rank1_update(&FeatureVec::basis(2, 0)).unwrap();
        assert!((cur2.logdet() - 3.0_f64.ln()).abs() < 1e-10);
        assert!(verify_det_growth(&ref2, &cur2));
    }

    #[test]
    fn det_growth_randomized_streams() {
        // Randomized property: whenever the switch criterion fires, the
        // potential has grown by at least ln 2 (checked against direct
        // determinants, independent of the incremental logdet).
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut fired = 0;
        while fired < 200 {
            let d = [1usize, 2, 4, 8][rng.random_range(0..4)];
            let mut cur = CovarianceState::new(d, 1.0).unwrap();
            let mut explicit_ref = cur.matrix().clone();
            let mut ref_s = cur.clone();
            for step in 0..400 {
                let phi = random_unit(d, &mut rng);
                cur.rank1_update(&phi).unwrap();
                if switch_required(&ref_s, &cur).unwrap() {
                    assert!(verify_det_growth(&ref_s, &cur));
                    let gap = direct_logdet(cur.matrix()) - direct_logdet(&explicit_ref);
                    assert!(
                        gap >= std::f64::consts::LN_2 - 1e-8,
                        "direct logdet gap {gap} below ln 2 at d={d} step={step}"
                    );
                    fired += 1;
                    ref_s = cur.clone();
                    explicit_ref = cur.matrix().clone();
                }
            }
        }
    }

    #[test]
    fn monotone_quad_form_and_no_switch_domination() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let d = 5;
        let mut cur = CovarianceState::new(d, 1.0).unwrap();
        let ref_s = cur.clone();
        let probes: Vec<FeatureVec> = (0..100).map(|_| random_unit(d, &mut rng)).collect();
        for _ in 0..2 {
            let phi = random_unit(d, &mut rng);
            let before: Vec<f64> = probes.iter().map(|p| cur.quad_form(p).unwrap()).collect();
            cur.rank1_update(&phi).unwrap();
            for (p, b) in probes.iter().zip(&before) {
                let after = cur.quad_form(p).unwrap();
                assert!(after <= b + 1e-12, "information decreased");
            }
        }
        if !switch_required(&ref_s, &cur).unwrap() {
            for p in &probes {
                let r = ref_s.quad_form(p).unwrap();
                let c = cur.quad_form(p).unwrap();
                assert!(r <= 2.0 * c + 1e-8);
            }
        }
    }

    #[test]
    fn woodbury_consistency_long_stream() {
        // Incremental inverse tracks the factorization-based inverse.
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let d = 6;
        let mut s = CovarianceState::new(d, 1.0).unwrap();
        for _ in 0..10_000 {
            s.rank1_update(&random_unit(d, &mut rng)).unwrap();
        }
        let chol = Cholesky::new(s.matrix().clone()).unwrap();
        let direct_inv = chol.inverse();
        let err = (s.inverse() - &direct_inv).norm();
        assert!(err < 1e-7, "inverse drift {err}");
        assert!((s.logdet() - direct_logdet(s.matrix())).abs() < 1e-7);
    }

    #[test]
    fn debug_json_dump_parses() {
        let mut s = CovarianceState::new(2, 1.0).unwrap();
        s.rank1_update(&FeatureVec::basis(2, 1)).unwrap();
        let text = s.to_debug_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["count"], 1);
        assert_eq!(v["matrix"][1][1].as_f64().unwrap(), 2.0);
    }
}
