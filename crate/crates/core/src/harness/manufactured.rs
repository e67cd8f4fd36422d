use nalgebra::{Matrix3, Vector3};

type VecFn = Box<dyn Fn(&Vector3<f64>) -> Vector3<f64> + Send + Sync>;
type MatFn = Box<dyn Fn(&Vector3<f64>) -> Matrix3<f64> + Send + Sync>;
type ScalarFn = Box<dyn Fn(&Vector3<f64>) -> f64 + Send + Sync>;

/// Analytic Stokes solution with the pieces needed to build `f = -nu lap u + grad p`
/// and to measure errors.
pub struct ManufacturedSolution {
    pub name: String,
    pub u: VecFn,
    pub grad_u: MatFn,
    pub laplacian_u: VecFn,
    pub p: ScalarFn,
    pub grad_p: VecFn,
    pub divergence_free: bool,
}

impl ManufacturedSolution {
    /// `u = (sin y, cos z, -x)`, `p = |x|^2 - 3/5` (mean zero on the unit ball).
    pub fn ball_example() -> Self {
        Self {
            name: "ball".into(),
            u: Box::new(|x| Vector3::new(x.y.sin(), x.z.cos(), -x.x)),
            grad_u: Box::new(|x| {
                Matrix3::new(
                    0.0, x.y.cos(), 0.0, //
                    0.0, 0.0, -x.z.sin(), //
                    -1.0, 0.0, 0.0,
                )
            }),
            laplacian_u: Box::new(|x| Vector3::new(-x.y.sin(), -x.z.cos(), 0.0)),
            p: Box::new(|x| x.norm_squared() - 0.6),
            grad_p: Box::new(|x| 2.0 * x),
            divergence_free: true,
        }
    }

    /// Divergence-free polynomial velocity of degree `k` and pressure of degree
    /// `k - 1`, reproduced exactly by the degree-`k` spaces on straight meshes.
    pub fn polynomial(k: usize) -> Self {
        let kf = k as f64;
        let pw = move |t: f64, e: usize| if e == 0 { 1.0 } else { t.powi(e as i32) };
        let dpw = move |t: f64, e: usize| if e == 0 { 0.0 } else { e as f64 * pw(t, e - 1) };
        let ddpw = move |t: f64, e: usize| if e < 2 { 0.0 } else { (e * (e - 1)) as f64 * pw(t, e - 2) };
        // each component is independent of its own variable
        Self {
            name: format!("polynomial-{k}"),
            u: Box::new(move |x| Vector3::new(pw(x.y, k) + x.z, pw(x.z, k) - 2.0 * x.x, pw(x.x, k) + 0.5 * x.y)),
            grad_u: Box::new(move |x| {
                Matrix3::new(
                    0.0, dpw(x.y, k), 1.0, //
                    -2.0, 0.0, dpw(x.z, k), //
                    dpw(x.x, k), 0.5, 0.0,
                )
            }),
            laplacian_u: Box::new(move |x| Vector3::new(ddpw(x.y, k), ddpw(x.z, k), ddpw(x.x, k))),
            p: Box::new(move |x| pw(x.x + 2.0 * x.y - x.z, k - 1) * kf),
            grad_p: Box::new(move |x| {
                let s = x.x + 2.0 * x.y - x.z;
                Vector3::new(1.0, 2.0, -1.0) * dpw(s, k - 1) * kf
            }),
            divergence_free: true,
        }
    }

    /// `-nu lap u + grad p` at `x`.
    pub fn source(&self, nu: f64, x: &Vector3<f64>) -> Vector3<f64> {
        -(self.laplacian_u)(x) * nu + (self.grad_p)(x)
    }

    pub fn divergence(&self, x: &Vector3<f64>) -> f64 {
        (self.grad_u)(x).trace()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_derivatives(m: &ManufacturedSolution, x: &Vector3<f64>) {
        let h = 1e-5;
        let g = (m.grad_u)(x);
        let mut lap = Vector3::zeros();
        for j in 0..3 {
            let mut d = Vector3::zeros();
            d[j] = h;
            let fd = ((m.u)(&(x + d)) - (m.u)(&(x - d))) / (2.0 * h);
            assert!((fd - g.column(j)).norm() < 1e-8, "{}", m.name);
            let fdp = ((m.p)(&(x + d)) - (m.p)(&(x - d))) / (2.0 * h);
            assert!((fdp - (m.grad_p)(x)[j]).abs() < 1e-8);
            let dg = ((m.grad_u)(&(x + d)) - (m.grad_u)(&(x - d))) / (2.0 * h);
            lap += dg.column(j);
        }
        assert!((lap - (m.laplacian_u)(x)).norm() < 1e-7, "{}", m.name);
    }

    #[test]
    fn derivatives_match_differences() {
        let x = Vector3::new(0.3, -0.2, 0.7);
        check_derivatives(&ManufacturedSolution::ball_example(), &x);
        for k in 1..=3 {
            check_derivatives(&ManufacturedSolution::polynomial(k), &x);
        }
        let m = ManufacturedSolution::ball_example();
        assert!((m.source(2.0, &x) - Vector3::new(2.0 * x.y.sin() + 0.6, 2.0 * x.z.cos() - 0.4, 1.4)).norm() < 1e-14);
    }
}
