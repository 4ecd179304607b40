//! Dense convex QP solver: ADMM in the operator-splitting form
//! `min ½ xᵀPx + qᵀx  s.t.  l ≤ Cx ≤ u`, followed by an active-set
//! polishing step.
//!
//! Dual sign convention: `y_i < 0` on an active lower bound, `y_i > 0` on
//! an active upper bound, and `Px + q + Cᵀy = 0` at the optimum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub c: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    fn check(&self) -> Result<()> {
        let n = self.n();
        if self.p.nrows() != n || self.p.ncols() != n {
            return Err(Error::mismatch("QP Hessian size", n, self.p.nrows()));
        }
        if self.c.ncols() != n {
            return Err(Error::mismatch("QP constraint columns", n, self.c.ncols()));
        }
        if self.c.nrows() != self.m() || self.u.len() != self.m() {
            return Err(Error::mismatch("QP constraint rows", self.m(), self.c.nrows()));
        }
        if let Some(i) = (0..self.m()).find(|&i| !(self.l[i] <= self.u[i])) {
            return Err(Error::InvalidArgument(format!(
                "QP bound {i}: lower {} exceeds upper {}",
                self.l[i], self.u[i]
            )));
        }
        if self
            .p
            .iter()
            .chain(self.q.iter())
            .chain(self.c.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidArgument("QP data must be finite".into()));
        }
        Ok(())
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| v[i].clamp(self.l[i], self.u[i]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iterations: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub adaptive_rho_interval: usize,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-7,
            eps_rel: 1e-7,
            eps_infeasible: 1e-6,
            max_iterations: 10_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho_interval: 25,
            polish: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    PrimalInfeasible,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

struct Residuals {
    primal: f64,
    dual: f64,
    eps_primal: f64,
    eps_dual: f64,
}

fn residuals(pr: &QpProblem, st: &QpSettings, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>) -> Residuals {
    let cx = &pr.c * x;
    let px = &pr.p * x;
    let cty = pr.c.transpose() * y;
    Residuals {
        primal: inf_norm(&(&cx - z)),
        dual: inf_norm(&(&px + &pr.q + &cty)),
        eps_primal: st.eps_abs + st.eps_rel * inf_norm(&cx).max(inf_norm(z)),
        eps_dual: st.eps_abs + st.eps_rel * inf_norm(&px).max(inf_norm(&cty)).max(inf_norm(&pr.q)),
    }
}

fn rho_vector(pr: &QpProblem, rho: f64) -> DVector<f64> {
    DVector::from_fn(pr.m(), |i, _| {
        if pr.l[i] == pr.u[i] {
            1e3 * rho
        } else if pr.l[i] == f64::NEG_INFINITY && pr.u[i] == f64::INFINITY {
            1e-6
        } else {
            rho
        }
    })
}

fn factor(pr: &QpProblem, sigma: f64, rv: &DVector<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = pr.n();
    let mut k = pr.p.clone() + DMatrix::identity(n, n) * sigma;
    let mut rc = pr.c.clone();
    for (i, mut row) in rc.row_iter_mut().enumerate() {
        row *= rv[i];
    }
    k += pr.c.transpose() * rc;
    k.cholesky()
        .ok_or_else(|| Error::InvalidArgument("QP Hessian is not positive semidefinite".into()))
}

/// A point certifies primal infeasibility if `Cᵀδy ≈ 0` and the support
/// function of the bounds is negative along `δy`.
fn infeasibility_certificate(pr: &QpProblem, dy: &DVector<f64>, eps: f64) -> bool {
    let norm = inf_norm(dy);
    if norm < 1e-30 {
        return false;
    }
    if inf_norm(&(pr.c.transpose() * dy)) > eps * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..pr.m() {
        let d = dy[i] / norm;
        if d > eps {
            if pr.u[i] == f64::INFINITY {
                return false;
            }
            support += pr.u[i] * d;
        } else if d < -eps {
            if pr.l[i] == f64::NEG_INFINITY {
                return false;
            }
            support += pr.l[i] * d;
        }
    }
    support < -eps
}

pub fn solve_qp(pr: &QpProblem, st: &QpSettings) -> Result<QpSolution> {
    pr.check()?;
    let (n, m) = (pr.n(), pr.m());
    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    let mut rho = st.rho;
    let mut rv = rho_vector(pr, rho);
    let mut chol = factor(pr, st.sigma, &rv)?;
    let mut status = QpStatus::MaxIterations;
    let mut iterations = 0;
    let mut res = residuals(pr, st, &x, &z, &y);
    for k in 1..=st.max_iterations {
        iterations = k;
        let rhs = &x * st.sigma - &pr.q + pr.c.transpose() * (rv.component_mul(&z) - &y);
        let xt = chol.solve(&rhs);
        let zt = &pr.c * &xt;
        x = &xt * st.alpha + &x * (1.0 - st.alpha);
        let zr = &zt * st.alpha + &z * (1.0 - st.alpha);
        let z_new = pr.project(&(&zr + y.component_div(&rv)));
        let dy = rv.component_mul(&(&zr - &z_new));
        y += &dy;
        z = z_new;
        res = residuals(pr, st, &x, &z, &y);
        if res.primal <= res.eps_primal && res.dual <= res.eps_dual {
            status = QpStatus::Solved;
            break;
        }
        if infeasibility_certificate(pr, &dy, st.eps_infeasible) {
            status = QpStatus::PrimalInfeasible;
            break;
        }
        if st.adaptive_rho_interval > 0 && k % st.adaptive_rho_interval == 0 {
            let cx = inf_norm(&(&pr.c * &x)).max(inf_norm(&z)).max(1e-30);
            let dual_scale = inf_norm(&(&pr.p * &x))
                .max(inf_norm(&(pr.c.transpose() * &y)))
                .max(inf_norm(&pr.q))
                .max(1e-30);
            let ratio = ((res.primal / cx) / (res.dual / dual_scale).max(1e-30)).sqrt();
            let new_rho = (rho * ratio).clamp(1e-6, 1e6);
            if new_rho > 5.0 * rho || new_rho < rho / 5.0 {
                rho = new_rho;
                rv = rho_vector(pr, rho);
                chol = factor(pr, st.sigma, &rv)?;
            }
        }
    }
    let mut sol = QpSolution {
        status,
        objective: pr.objective(&x),
        x,
        y,
        iterations,
        primal_residual: res.primal,
        dual_residual: res.dual,
        polished: false,
    };
    if st.polish && status != QpStatus::PrimalInfeasible {
        if let Some(p) = polish(pr, st, &sol, &z) {
            sol = p;
        }
    }
    Ok(sol)
}

/// Re-solves the equality-constrained QP on the active set guessed from the
/// ADMM iterate and keeps it if it is at least as accurate.
fn polish(pr: &QpProblem, st: &QpSettings, sol: &QpSolution, z: &DVector<f64>) -> Option<QpSolution> {
    let n = pr.n();
    let mut active = Vec::new();
    for i in 0..pr.m() {
        let lower = z[i] - pr.l[i] < -sol.y[i];
        let upper = pr.u[i] - z[i] < sol.y[i];
        if lower {
            active.push((i, pr.l[i]));
        } else if upper {
            active.push((i, pr.u[i]));
        }
    }
    let na = active.len();
    let delta = 1e-9;
    let mut kkt = DMatrix::zeros(n + na, n + na);
    let mut exact = DMatrix::zeros(n + na, n + na);
    kkt.view_mut((0, 0), (n, n)).copy_from(&pr.p);
    let mut rhs = DVector::zeros(n + na);
    rhs.rows_mut(0, n).copy_from(&(-&pr.q));
    for (a, &(i, b)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + a, j)] = pr.c[(i, j)];
            kkt[(j, n + a)] = pr.c[(i, j)];
        }
        rhs[n + a] = b;
    }
    exact.copy_from(&kkt);
    for i in 0..n {
        kkt[(i, i)] += delta;
    }
    for a in 0..na {
        kkt[(n + a, n + a)] = -delta;
    }
    let lu = kkt.lu();
    let mut sol_v = lu.solve(&rhs)?;
    for _ in 0..5 {
        let r = &rhs - &exact * &sol_v;
        sol_v += lu.solve(&r)?;
    }
    let x = sol_v.rows(0, n).clone_owned();
    let mut y = DVector::zeros(pr.m());
    let sign_tol = 1e-9 * (1.0 + inf_norm(&sol_v));
    for (a, &(i, _)) in active.iter().enumerate() {
        let yi = sol_v[n + a];
        let eq = pr.l[i] == pr.u[i];
        let is_lower = pr.l[i] == rhs[n + a] && !eq;
        if !eq && ((is_lower && yi > sign_tol) || (!is_lower && yi < -sign_tol)) {
            return None;
        }
        y[i] = yi;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let z_pol = pr.project(&(&pr.c * &x));
    let res = residuals(pr, st, &x, &z_pol, &y);
    let ok_p = res.primal <= sol.primal_residual.max(st.eps_abs * 1e-2);
    let ok_d = res.dual <= sol.dual_residual.max(st.eps_abs * 1e-2);
    if !(ok_p && ok_d) {
        return None;
    }
    let status = if res.primal <= res.eps_primal && res.dual <= res.eps_dual {
        QpStatus::Solved
    } else {
        sol.status
    };
    Some(QpSolution {
        status,
        objective: pr.objective(&x),
        x,
        y,
        iterations: sol.iterations,
        primal_residual: res.primal,
        dual_residual: res.dual,
        polished: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng) -> QpProblem {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=8);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let p = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
        let q = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let c = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let cx0 = &c * &x0;
        let mut l = DVector::zeros(m);
        let mut u = DVector::zeros(m);
        for i in 0..m {
            l[i] = cx0[i] - rng.gen_range(0.0..0.5);
            u[i] = cx0[i] + rng.gen_range(0.0..0.5);
            match rng.gen_range(0..5) {
                0 => l[i] = f64::NEG_INFINITY,
                1 => u[i] = f64::INFINITY,
                _ => {}
            }
        }
        QpProblem { p, q, c, l, u }
    }

    /// Minimum over every active-set assignment whose equality-constrained
    /// optimum is primal feasible.
    fn enumerate(pr: &QpProblem) -> f64 {
        let (n, m) = (pr.n(), pr.m());
        let mut best = f64::INFINITY;
        for code in 0..3usize.pow(m as u32) {
            let mut rows = Vec::new();
            let mut c = code;
            let mut skip = false;
            for i in 0..m {
                match c % 3 {
                    1 if pr.l[i].is_finite() => rows.push((i, pr.l[i])),
                    2 if pr.u[i].is_finite() => rows.push((i, pr.u[i])),
                    0 => {}
                    _ => skip = true,
                }
                c /= 3;
            }
            if skip || rows.len() > n {
                continue;
            }
            let k = n + rows.len();
            let mut kkt = DMatrix::zeros(k, k);
            kkt.view_mut((0, 0), (n, n)).copy_from(&pr.p);
            let mut rhs = DVector::zeros(k);
            rhs.rows_mut(0, n).copy_from(&(-&pr.q));
            for (a, &(i, b)) in rows.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + a, j)] = pr.c[(i, j)];
                    kkt[(j, n + a)] = pr.c[(i, j)];
                }
                rhs[n + a] = b;
            }
            let Some(s) = kkt.lu().solve(&rhs) else { continue };
            let x = s.rows(0, n).clone_owned();
            let cx = &pr.c * &x;
            if (0..m).all(|i| cx[i] >= pr.l[i] - 1e-9 && cx[i] <= pr.u[i] + 1e-9) {
                best = best.min(pr.objective(&x));
            }
        }
        best
    }

    #[test]
    fn matches_active_set_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let pr = random_problem(&mut rng);
            let sol = solve_qp(&pr, &QpSettings::default()).unwrap();
            assert_eq!(sol.status, QpStatus::Solved);
            let oracle = enumerate(&pr);
            assert!((sol.objective - oracle).abs() < 1e-5, "{} vs {oracle}", sol.objective);
        }
    }

    #[test]
    fn unconstrained_minimum() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let q = DVector::from_vec(vec![1.0, 2.0]);
        let pr = QpProblem {
            p: p.clone(),
            q: q.clone(),
            c: DMatrix::zeros(0, 2),
            l: DVector::zeros(0),
            u: DVector::zeros(0),
        };
        let sol = solve_qp(&pr, &QpSettings::default()).unwrap();
        let exact = p.lu().solve(&(-q)).unwrap();
        assert!((sol.x - exact).amax() < 1e-7);
    }

    #[test]
    fn equality_and_bound_example() {
        // min x² + y²  s.t.  x + y = 1, x ≤ 0.2  →  (0.2, 0.8)
        let pr = QpProblem {
            p: DMatrix::identity(2, 2) * 2.0,
            q: DVector::zeros(2),
            c: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]),
            l: DVector::from_vec(vec![1.0, f64::NEG_INFINITY]),
            u: DVector::from_vec(vec![1.0, 0.2]),
        };
        let sol = solve_qp(&pr, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x[0] - 0.2).abs() < 1e-9 && (sol.x[1] - 0.8).abs() < 1e-9);
        assert!(sol.polished);
        assert!(sol.y[1] > 0.0);
    }

    #[test]
    fn detects_infeasibility() {
        let pr = QpProblem {
            p: DMatrix::identity(1, 1),
            q: DVector::zeros(1),
            c: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            l: DVector::from_vec(vec![1.0, f64::NEG_INFINITY]),
            u: DVector::from_vec(vec![f64::INFINITY, -1.0]),
        };
        let sol = solve_qp(&pr, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::PrimalInfeasible);
    }

    #[test]
    fn rejects_bad_input() {
        let mut pr = QpProblem {
            p: DMatrix::identity(2, 2),
            q: DVector::zeros(2),
            c: DMatrix::zeros(1, 2),
            l: DVector::from_vec(vec![1.0]),
            u: DVector::from_vec(vec![0.0]),
        };
        assert!(solve_qp(&pr, &QpSettings::default()).is_err());
        pr.u[0] = 2.0;
        pr.q = DVector::zeros(3);
        assert!(matches!(
            solve_qp(&pr, &QpSettings::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
