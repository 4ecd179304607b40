//! Minimal 6D spatial algebra (angular part first) for the dynamics kernels.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

pub type SpatialVec = Vector6<f64>;

#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
pub fn spatial(ang: Vector3<f64>, lin: Vector3<f64>) -> SpatialVec {
    Vector6::new(ang.x, ang.y, ang.z, lin.x, lin.y, lin.z)
}

#[inline]
pub fn ang(v: &SpatialVec) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

#[inline]
pub fn lin(v: &SpatialVec) -> Vector3<f64> {
    Vector3::new(v[3], v[4], v[5])
}

/// Plücker transform from a parent frame A to a child frame B.
///
/// `rot` holds the child axes expressed in the parent (`R_AB`), `trans` the
/// child origin in parent coordinates.
#[derive(Clone, Copy, Debug)]
pub struct Xform {
    pub rot: Matrix3<f64>,
    pub trans: Vector3<f64>,
}

impl Xform {
    /// Motion vector from parent to child coordinates.
    #[inline]
    pub fn apply_motion(&self, v: &SpatialVec) -> SpatialVec {
        let et = self.rot.transpose();
        let w = ang(v);
        let l = lin(v) - self.trans.cross(&w);
        spatial(et * w, et * l)
    }

    /// Force vector from child to parent coordinates (`X^T f`).
    #[inline]
    pub fn apply_force_transpose(&self, f: &SpatialVec) -> SpatialVec {
        let fa = self.rot * lin(f);
        let na = self.rot * ang(f) + self.trans.cross(&fa);
        spatial(na, fa)
    }

    pub fn motion_matrix(&self) -> Matrix6<f64> {
        let e = self.rot.transpose();
        let mut x = Matrix6::zeros();
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(&e);
        x.fixed_view_mut::<3, 3>(3, 3).copy_from(&e);
        x.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-e * skew(&self.trans)));
        x
    }
}

/// Spatial inertia about a frame origin, from mass, center of mass and
/// rotational inertia about the center of mass.
pub fn inertia(mass: f64, com: &Vector3<f64>, ic: &Matrix3<f64>) -> Matrix6<f64> {
    let c = skew(com);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(ic + mass * c * c.transpose()));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(mass * c));
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(mass * c.transpose()));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * mass));
    m
}

/// Motion cross product `v ×m u`.
#[inline]
pub fn cross_motion(v: &SpatialVec, u: &SpatialVec) -> SpatialVec {
    let (w, l) = (ang(v), lin(v));
    let (uw, ul) = (ang(u), lin(u));
    spatial(w.cross(&uw), w.cross(&ul) + l.cross(&uw))
}

/// Force cross product `v ×f f`.
#[inline]
pub fn cross_force(v: &SpatialVec, f: &SpatialVec) -> SpatialVec {
    let (w, l) = (ang(v), lin(v));
    let (n, fl) = (ang(f), lin(f));
    spatial(w.cross(&n) + l.cross(&fl), w.cross(&fl))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    #[test]
    fn force_transpose_matches_matrix() {
        let x = Xform {
            rot: *UnitQuaternion::from_euler_angles(0.3, -0.2, 0.9)
                .to_rotation_matrix()
                .matrix(),
            trans: Vector3::new(0.1, -0.4, 0.7),
        };
        let f = Vector6::new(1.0, -2.0, 0.5, 3.0, 0.2, -1.1);
        let v = Vector6::new(0.3, 0.1, -0.7, 2.0, -0.5, 0.4);
        let xm = x.motion_matrix();
        assert!((x.apply_force_transpose(&f) - xm.transpose() * f).amax() < 1e-14);
        assert!((x.apply_motion(&v) - xm * v).amax() < 1e-14);
        // Power is frame invariant.
        let p_child = f.dot(&x.apply_motion(&v));
        let p_parent = x.apply_force_transpose(&f).dot(&v);
        assert!((p_child - p_parent).abs() < 1e-13);
    }

    #[test]
    fn cross_force_is_dual() {
        let v = Vector6::new(0.3, 0.1, -0.7, 2.0, -0.5, 0.4);
        let u = Vector6::new(-1.0, 0.4, 0.2, 0.1, 0.9, -0.3);
        let f = Vector6::new(1.0, -2.0, 0.5, 3.0, 0.2, -1.1);
        // (v ×f f) · u = -f · (v ×m u)
        let lhs = cross_force(&v, &f).dot(&u);
        let rhs = -f.dot(&cross_motion(&v, &u));
        assert!((lhs - rhs).abs() < 1e-13);
    }
}
