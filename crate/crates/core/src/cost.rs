//! Task-space distance between keypoint trajectories: a Euclidean tracking
//! term and a graph-Laplacian shape term.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{KeypointSet, KeypointTrajectory};
use crate::{Error, Result};

/// Unit-weight graph Laplacian `D - A` over the keypoint skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianMatrix {
    pub matrix: DMatrix<f64>,
}

impl LaplacianMatrix {
    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn build_laplacian(edges: &[(usize, usize)], m: usize) -> Result<LaplacianMatrix> {
    let mut l = DMatrix::zeros(m, m);
    for &(a, b) in edges {
        if a >= m || b >= m {
            return Err(Error::IndexOutOfRange {
                context: "laplacian edge",
                index: a.max(b),
                len: m,
            });
        }
        if a == b {
            return Err(Error::InvalidArgument(format!("self-loop on keypoint {a}")));
        }
        l[(a, b)] -= 1.0;
        l[(b, a)] -= 1.0;
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
    }
    Ok(LaplacianMatrix { matrix: l })
}

/// Relative weighting of the two cost terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub w_p: f64,
    pub w_l: f64,
    /// Per-keypoint weights; `None` means all ones.
    pub keypoint: Option<Vec<f64>>,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_p: 1.0,
            w_l: 1.0,
            keypoint: None,
        }
    }
}

impl CostWeights {
    pub fn check(&self) -> Result<()> {
        if !(self.w_p >= 0.0 && self.w_l >= 0.0) {
            return Err(Error::InvalidArgument("cost weights must be non-negative".into()));
        }
        if self.w_p == 0.0 && self.w_l == 0.0 {
            return Err(Error::InvalidArgument("w_p and w_l cannot both be zero".into()));
        }
        if let Some(k) = &self.keypoint {
            if k.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::InvalidArgument("keypoint weights must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn keypoint_weights(&self, m: usize) -> Result<Vec<f64>> {
        match &self.keypoint {
            None => Ok(vec![1.0; m]),
            Some(w) if w.len() == m => Ok(w.clone()),
            Some(w) => Err(Error::mismatch("keypoint weights", m, w.len())),
        }
    }
}

fn check_shapes(x: &KeypointTrajectory, y: &KeypointTrajectory) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::mismatch("trajectory length", x.len(), y.len()));
    }
    for (a, b) in x.frames.iter().zip(&y.frames) {
        if a.len() != b.len() {
            return Err(Error::mismatch("keypoint count", a.len(), b.len()));
        }
    }
    Ok(())
}

fn weights_or_ones(weights: Option<&[f64]>, m: usize) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; m]),
        Some(w) if w.len() == m => Ok(w.to_vec()),
        Some(w) => Err(Error::mismatch("keypoint weights", m, w.len())),
    }
}

/// `sum_k w_k |p_k - q_k|^2` for one frame.
pub fn frame_spatial(a: &KeypointSet, b: &KeypointSet, w: &[f64]) -> f64 {
    a.positions
        .iter()
        .zip(&b.positions)
        .zip(w)
        .map(|((p, q), w)| w * (p - q).norm_squared())
        .sum()
}

/// Laplacian applied channel-wise to the per-keypoint differences.
pub fn laplacian_blocks(a: &KeypointSet, b: &KeypointSet, l: &LaplacianMatrix) -> Vec<Vector3<f64>> {
    let m = l.m();
    let diffs: Vec<Vector3<f64>> = a.positions.iter().zip(&b.positions).map(|(p, q)| p - q).collect();
    (0..m)
        .map(|k| {
            let mut acc = Vector3::zeros();
            for (j, d) in diffs.iter().enumerate() {
                let c = l.matrix[(k, j)];
                if c != 0.0 {
                    acc += d * c;
                }
            }
            acc
        })
        .collect()
}

/// `(1/m) sum_k w_k |(L d)_k|^2` for one frame.
pub fn frame_laplacian(a: &KeypointSet, b: &KeypointSet, l: &LaplacianMatrix, w: &[f64]) -> f64 {
    let m = l.m();
    if m == 0 {
        return 0.0;
    }
    laplacian_blocks(a, b, l)
        .iter()
        .zip(w)
        .map(|(v, w)| w * v.norm_squared())
        .sum::<f64>()
        / m as f64
}

/// Euclidean tracking term `E_p`.
pub fn spatial_cost(x: &KeypointTrajectory, x_tilde: &KeypointTrajectory, weights: Option<&[f64]>) -> Result<f64> {
    check_shapes(x, x_tilde)?;
    let m = x.frames.first().map_or(0, |f| f.len());
    let w = weights_or_ones(weights, m)?;
    Ok(x.frames
        .iter()
        .zip(&x_tilde.frames)
        .map(|(a, b)| frame_spatial(a, b, &w))
        .sum())
}

/// Shape-matching term `E_l`.
pub fn laplacian_cost(
    x: &KeypointTrajectory,
    x_tilde: &KeypointTrajectory,
    l: &LaplacianMatrix,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_shapes(x, x_tilde)?;
    let m = x.frames.first().map_or(0, |f| f.len());
    if l.m() != m {
        return Err(Error::mismatch("laplacian size", m, l.m()));
    }
    let w = weights_or_ones(weights, m)?;
    Ok(x.frames
        .iter()
        .zip(&x_tilde.frames)
        .map(|(a, b)| frame_laplacian(a, b, l, &w))
        .sum())
}

/// `w_p E_p + w_l E_l`, the objective of both the IK and the MPC.
pub fn combined_distance(
    x: &KeypointTrajectory,
    x_tilde: &KeypointTrajectory,
    l: &LaplacianMatrix,
    weights: &CostWeights,
) -> Result<f64> {
    check_shapes(x, x_tilde)?;
    let m = x.frames.first().map_or(0, |f| f.len());
    let kw = weights.keypoint_weights(m)?;
    let mut total = 0.0;
    if weights.w_p != 0.0 {
        total += weights.w_p * spatial_cost(x, x_tilde, Some(&kw))?;
    }
    if weights.w_l != 0.0 {
        total += weights.w_l * laplacian_cost(x, x_tilde, l, Some(&kw))?;
    }
    Ok(total)
}

/// Norm of the `k`-th 3-block of `(L ⊗ I3) vec(x_t - x̃_t)`.
pub fn per_keypoint_laplacian_error(
    x: &KeypointTrajectory,
    x_tilde: &KeypointTrajectory,
    l: &LaplacianMatrix,
    t: usize,
    k: usize,
) -> Result<f64> {
    check_shapes(x, x_tilde)?;
    if t >= x.len() {
        return Err(Error::IndexOutOfRange {
            context: "frame",
            index: t,
            len: x.len(),
        });
    }
    if k >= l.m() {
        return Err(Error::IndexOutOfRange {
            context: "keypoint",
            index: k,
            len: l.m(),
        });
    }
    Ok(laplacian_blocks(&x.frames[t], &x_tilde.frames[t], l)[k].norm())
}

/// All per-keypoint Laplacian errors, indexed `[t][k]`.
pub fn laplacian_error_table(
    x: &KeypointTrajectory,
    x_tilde: &KeypointTrajectory,
    l: &LaplacianMatrix,
) -> Result<Vec<Vec<f64>>> {
    check_shapes(x, x_tilde)?;
    Ok(x.frames
        .iter()
        .zip(&x_tilde.frames)
        .map(|(a, b)| laplacian_blocks(a, b, l).iter().map(|v| v.norm()).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(frames: Vec<Vec<[f64; 3]>>) -> KeypointTrajectory {
        let m = frames[0].len();
        KeypointTrajectory {
            names: (0..m).map(|i| format!("k{i}")).collect(),
            frames: frames
                .into_iter()
                .map(|f| KeypointSet {
                    positions: f.into_iter().map(Vector3::from).collect(),
                })
                .collect(),
            dt: 0.02,
            adjacency: vec![],
        }
    }

    #[test]
    fn textbook_laplacians() {
        let l = build_laplacian(&[(0, 1)], 2).unwrap();
        assert_eq!(l.matrix, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(build_laplacian(&[], 3).unwrap().matrix, DMatrix::zeros(3, 3));
        let p = build_laplacian(&[(0, 1), (1, 2)], 3).unwrap();
        assert_eq!(
            p.matrix,
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0])
        );
    }

    #[test]
    fn laplacian_rejects_bad_edges() {
        assert!(build_laplacian(&[(0, 3)], 3).is_err());
        assert!(build_laplacian(&[(1, 1)], 3).is_err());
    }

    #[test]
    fn spatial_examples() {
        let a = traj(vec![vec![[0.0, 0.0, 0.0]]]);
        let b = traj(vec![vec![[0.0, 0.0, 1.0]]]);
        assert_eq!(spatial_cost(&a, &a, None).unwrap(), 0.0);
        assert_eq!(spatial_cost(&a, &b, None).unwrap(), 1.0);
        let c = traj(vec![vec![[0.0; 3]], vec![[0.0; 3]]]);
        let d = traj(vec![vec![[1.0, 0.0, 0.0]], vec![[0.0, 2.0, 0.0]]]);
        assert_eq!(spatial_cost(&c, &d, None).unwrap(), 5.0);
    }

    #[test]
    fn laplacian_two_keypoint_example() {
        let l = build_laplacian(&[(0, 1)], 2).unwrap();
        let x = traj(vec![vec![[0.0; 3], [0.0, 0.0, 1.0]]]);
        let y = traj(vec![vec![[0.0; 3], [0.0; 3]]]);
        assert_eq!(laplacian_cost(&x, &y, &l, None).unwrap(), 1.0);
        assert_eq!(per_keypoint_laplacian_error(&x, &y, &l, 0, 0).unwrap(), 1.0);
        assert_eq!(per_keypoint_laplacian_error(&x, &y, &l, 0, 1).unwrap(), 1.0);
        assert_eq!(laplacian_cost(&x, &x, &l, None).unwrap(), 0.0);
        assert!(per_keypoint_laplacian_error(&x, &y, &l, 1, 0).is_err());
        assert!(per_keypoint_laplacian_error(&x, &y, &l, 0, 2).is_err());
    }

    #[test]
    fn combined_is_linear_in_weights() {
        let l = build_laplacian(&[(0, 1)], 2).unwrap();
        let x = traj(vec![vec![[0.1, 0.0, 0.0], [0.0, 0.3, 1.0]]]);
        let y = traj(vec![vec![[0.0; 3], [0.2, 0.0, 0.0]]]);
        let ep = spatial_cost(&x, &y, None).unwrap();
        let el = laplacian_cost(&x, &y, &l, None).unwrap();
        let w = |p, q| CostWeights {
            w_p: p,
            w_l: q,
            keypoint: None,
        };
        assert_eq!(combined_distance(&x, &y, &l, &w(1.0, 0.0)).unwrap(), ep);
        assert_eq!(combined_distance(&x, &y, &l, &w(0.0, 1.0)).unwrap(), el);
        let d2 = combined_distance(&x, &y, &l, &w(2.0, 1.0)).unwrap();
        let d1 = combined_distance(&x, &y, &l, &w(1.0, 1.0)).unwrap();
        assert!((d2 - d1 - ep).abs() < 1e-15);
        assert!(w(0.0, 0.0).check().is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = traj(vec![vec![[0.0; 3]]]);
        let b = traj(vec![vec![[0.0; 3]], vec![[0.0; 3]]]);
        assert!(spatial_cost(&a, &b, None).is_err());
    }

    fn arb_traj(m: usize, t: usize) -> impl Strategy<Value = Vec<Vec<[f64; 3]>>> {
        prop::collection::vec(prop::collection::vec(prop::array::uniform3(-2.0..2.0f64), m), t)
    }

    proptest! {
        #[test]
        fn laplacian_rows_sum_to_zero(edges in prop::collection::vec((0usize..6, 0usize..6), 0..12)) {
            let mut uniq: Vec<(usize, usize)> = Vec::new();
            for (a, b) in edges {
                if a != b && !uniq.contains(&(a.min(b), a.max(b))) {
                    uniq.push((a.min(b), a.max(b)));
                }
            }
            let l = build_laplacian(&uniq, 6).unwrap();
            for r in 0..6 {
                prop_assert_eq!(l.matrix.row(r).sum(), 0.0);
            }
            prop_assert_eq!(&l.matrix, &l.matrix.transpose());
        }

        #[test]
        fn costs_symmetric_nonnegative_translation_invariant(
            a in arb_traj(4, 3), b in arb_traj(4, 3), t in prop::array::uniform3(-5.0..5.0f64)
        ) {
            let l = build_laplacian(&[(0, 1), (1, 2), (1, 3)], 4).unwrap();
            let (x, y) = (traj(a.clone()), traj(b));
            let ep = spatial_cost(&x, &y, None).unwrap();
            let el = laplacian_cost(&x, &y, &l, None).unwrap();
            prop_assert!(ep >= 0.0 && el >= 0.0);
            prop_assert_eq!(ep, spatial_cost(&y, &x, None).unwrap());
            prop_assert!((el - laplacian_cost(&y, &x, &l, None).unwrap()).abs() <= 1e-12 * (1.0 + el));
            let shifted = traj(a.iter().map(|f| f.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect()).collect());
            let el_shift = laplacian_cost(&shifted, &y, &l, None).unwrap();
            prop_assert!((el - el_shift).abs() <= 1e-12 * (1.0 + el));
        }
    }
}
