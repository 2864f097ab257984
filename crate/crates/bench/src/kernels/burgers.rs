//! Coupled Burgers' equations on the unit square.
//!
//! First-order upwind convection, central diffusion and explicit Euler
//! steps. Boundary values come from the exact solution
//! `u = (x + y - 2xt) / (1 - 2t²)`, `v = (x - y - 2yt) / (1 - 2t²)`.
//! Every interior grid value is a scalar entity and every grid update is
//! one fused stencil statement.

use dslad::linalg::{DenseMatrix, LinAlgTape};
use dslad::{Active, ArgRef, Constant, Contribution, StatementDescriptor, StatementHandle};

use crate::error::{BenchError, Result};
use crate::fd::Direction;
use crate::kernel::{Kernel, Recorded};
use crate::value::Value;

pub const TOLERANCE: f64 = 1e-5;
/// Velocities closer to zero than this switch the upwind direction under
/// finite-difference perturbation and are left out of the gradient check.
pub const UPWIND_SWITCH_BAND: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurgersConfig {
    /// Interior points per axis.
    pub grid_n: usize,
    pub steps: usize,
    pub reynolds: f64,
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
}

impl BurgersConfig {
    /// Uniform grid, `R = 100`, `dt = 0.1 dx` capped by the stability limit.
    pub fn new(grid_n: usize, steps: usize) -> Self {
        let h = 1.0 / (grid_n as f64 + 1.0);
        let mut cfg = BurgersConfig { grid_n, steps, reynolds: 100.0, dt: 0.0, dx: h, dy: h };
        cfg.dt = (0.1 * h).min(cfg.stability_limit());
        cfg
    }

    pub fn stability_limit(&self) -> f64 {
        0.25 * self.dx.min(self.dy).powi(2) * self.reynolds
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n == 0 {
            return Err(BenchError::Config("grid needs at least one interior point".into()));
        }
        if !(self.dt > 0.0 && self.dx > 0.0 && self.dy > 0.0 && self.reynolds > 0.0) {
            return Err(BenchError::Config("dt, dx, dy and R must be positive".into()));
        }
        let limit = self.stability_limit();
        if self.dt > limit {
            return Err(BenchError::Stability { dt: self.dt, limit });
        }
        Ok(())
    }

    fn coefficients(&self) -> [f64; 4] {
        [self.dt, self.dx, self.dy, 1.0 / self.reynolds]
    }
}

/// Exact solution `(u, v)` at `(x, y, t)`.
pub fn exact(x: f64, y: f64, t: f64) -> (f64, f64) {
    let d = 1.0 - 2.0 * t * t;
    ((x + y - 2.0 * x * t) / d, (x - y - 2.0 * y * t) / d)
}

/// One upwind update of field value `c` with neighbours west, east, south,
/// north, advected by velocity `(a, b)`. `k = [dt, dx, dy, 1/R]`.
pub fn stencil(s: [f64; 7], k: [f64; 4]) -> f64 {
    let [c, w, e, so, n, a, b] = s;
    let [dt, dx, dy, ir] = k;
    let fx = if a > 0.0 { (c - w) / dx } else { (e - c) / dx };
    let fy = if b > 0.0 { (c - so) / dy } else { (n - c) / dy };
    let lap = (e - 2.0 * c + w) / (dx * dx) + (n - 2.0 * c + so) / (dy * dy);
    c - dt * (a * fx + b * fy) + dt * ir * lap
}

/// Partial derivatives of [`stencil`] with respect to its seven inputs.
pub fn stencil_partials(s: [f64; 7], k: [f64; 4]) -> [f64; 7] {
    let [c, w, e, so, n, a, b] = s;
    let [dt, dx, dy, ir] = k;
    let (fx, dfx_c, dfx_w, dfx_e) =
        if a > 0.0 { ((c - w) / dx, 1.0 / dx, -1.0 / dx, 0.0) } else { ((e - c) / dx, -1.0 / dx, 0.0, 1.0 / dx) };
    let (fy, dfy_c, dfy_s, dfy_n) =
        if b > 0.0 { ((c - so) / dy, 1.0 / dy, -1.0 / dy, 0.0) } else { ((n - c) / dy, -1.0 / dy, 0.0, 1.0 / dy) };
    let (ix, iy) = (dt * ir / (dx * dx), dt * ir / (dy * dy));
    [
        1.0 - dt * (a * dfx_c + b * dfy_c) - 2.0 * ix - 2.0 * iy,
        -dt * a * dfx_w + ix,
        -dt * a * dfx_e + ix,
        -dt * b * dfy_s + iy,
        -dt * b * dfy_n + iy,
        -dt * fx,
        -dt * fy,
    ]
}

const ARGS: [&str; 7] = ["c", "w", "e", "s", "n", "a", "b"];

fn frame_inputs(f: &dslad::Frame<'_>) -> Result<([f64; 7], [f64; 4]), dslad::Error> {
    let mut s = [0.0; 7];
    for (i, v) in s.iter_mut().enumerate() {
        *v = *f.value::<f64>(i)?;
    }
    Ok((s, [f.real(0)?, f.real(1)?, f.real(2)?, f.real(3)?]))
}

/// The fused stencil statement: seven scalar inputs, one scalar result.
pub fn stencil_descriptor() -> StatementDescriptor {
    let mut b = StatementDescriptor::builder("burgers_stencil");
    for name in ARGS {
        b = b.input::<f64>(name);
    }
    b = b
        .output::<f64>("r")
        .real_const("dt")
        .real_const("dx")
        .real_const("dy")
        .real_const("inv_r")
        .primal(|f| {
            let (s, k) = frame_inputs(f)?;
            Ok(vec![Box::new(stencil(s, k))])
        });
    for (i, name) in ARGS.iter().enumerate() {
        b = b.adjoint(name, move |f| {
            let p = f.memo(|| {
                let (s, k) = frame_inputs(f)?;
                Ok(stencil_partials(s, k))
            })?;
            Ok(Contribution::full(f.bar::<f64>(7)? * p[i]))
        });
    }
    b.build()
}

pub struct Burgers {
    cfg: BurgersConfig,
    inputs: Vec<Value>,
}

impl Burgers {
    /// Initial interior fields from the exact solution at `t = 0`.
    pub fn new(cfg: BurgersConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.grid_n;
        let u = DenseMatrix::from_fn(n, n, |j, i| exact((i + 1) as f64 * cfg.dx, (j + 1) as f64 * cfg.dy, 0.0).0);
        let v = DenseMatrix::from_fn(n, n, |j, i| exact((i + 1) as f64 * cfg.dx, (j + 1) as f64 * cfg.dy, 0.0).1);
        Ok(Burgers { cfg, inputs: vec![Value::Matrix(u), Value::Matrix(v)] })
    }

    pub fn config(&self) -> &BurgersConfig {
        &self.cfg
    }

    /// Full grid of exact values at time `t`, row `j` holding `y = j dy`.
    fn boundary(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let m = self.cfg.grid_n + 2;
        let mut u = vec![0.0; m * m];
        let mut v = vec![0.0; m * m];
        for j in 0..m {
            for i in 0..m {
                let (eu, ev) = exact(i as f64 * self.cfg.dx, j as f64 * self.cfg.dy, t);
                u[j * m + i] = eu;
                v[j * m + i] = ev;
            }
        }
        (u, v)
    }
}

/// Grid access during one step: interior cells from the current fields,
/// boundary cells from the exact solution.
struct Grid<'a, T> {
    m: usize,
    interior: &'a [T],
    boundary: &'a [T],
}

impl<'a, T> Grid<'a, T> {
    fn at(&self, i: usize, j: usize) -> &'a T {
        let n = self.m - 2;
        if (1..=n).contains(&i) && (1..=n).contains(&j) {
            &self.interior[(j - 1) * n + (i - 1)]
        } else {
            &self.boundary[j * self.m + i]
        }
    }

    fn stencil(&self, i: usize, j: usize) -> [&'a T; 5] {
        [self.at(i, j), self.at(i - 1, j), self.at(i + 1, j), self.at(i, j - 1), self.at(i, j + 1)]
    }
}

impl Kernel for Burgers {
    fn case(&self) -> &'static str {
        "burgers"
    }

    fn size(&self) -> usize {
        self.cfg.grid_n
    }

    fn steps(&self) -> usize {
        self.cfg.steps
    }

    fn tolerance(&self) -> f64 {
        TOLERANCE
    }

    fn inputs(&self) -> &[Value] {
        &self.inputs
    }

    fn checked_inputs(&self) -> Vec<usize> {
        vec![0, 1]
    }

    fn excluded(&self, inputs: &[Value], d: Direction) -> bool {
        inputs[d.input].data()[d.element].abs() < UPWIND_SWITCH_BAND
    }

    fn prepare(&self, tape: &mut LinAlgTape) -> Result<Vec<StatementHandle>> {
        Ok(vec![tape.register_descriptor(stencil_descriptor())?])
    }

    fn primal(&self, inputs: &[Value]) -> Result<f64> {
        let n = self.cfg.grid_n;
        let m = n + 2;
        let k = self.cfg.coefficients();
        let mut u = inputs[0].data().to_vec();
        let mut v = inputs[1].data().to_vec();
        let mut un = vec![0.0; n * n];
        let mut vn = vec![0.0; n * n];
        for step in 0..self.cfg.steps {
            let (bu, bv) = self.boundary(step as f64 * self.cfg.dt);
            let gu = Grid { m, interior: &u, boundary: &bu };
            let gv = Grid { m, interior: &v, boundary: &bv };
            for j in 1..=n {
                for i in 1..=n {
                    let [c, w, e, s, no] = gu.stencil(i, j);
                    let (a, b) = (*c, *gv.at(i, j));
                    un[(j - 1) * n + i - 1] = stencil([*c, *w, *e, *s, *no, a, b], k);
                    let [c, w, e, s, no] = gv.stencil(i, j);
                    vn[(j - 1) * n + i - 1] = stencil([*c, *w, *e, *s, *no, a, b], k);
                }
            }
            std::mem::swap(&mut u, &mut un);
            std::mem::swap(&mut v, &mut vn);
        }
        let mut acc = 0.0;
        for (a, b) in u.iter().zip(&v) {
            acc += a * a;
            acc += b * b;
        }
        Ok(acc)
    }

    fn record(&self, tape: &mut LinAlgTape, extra: &[StatementHandle], inputs: &[Value]) -> Result<Recorded> {
        let n = self.cfg.grid_n;
        let m = n + 2;
        let handle = extra[0];
        let consts: Vec<Constant> = self.cfg.coefficients().iter().map(|&x| Constant::Real(x)).collect();
        let u0 = inputs[0].register_elements(tape)?;
        let v0 = inputs[1].register_elements(tape)?;
        let fresh = || (0..n * n).map(|_| Active::passive(0.0)).collect::<Vec<_>>();
        let mut bufs = [(fresh(), fresh()), (fresh(), fresh())];

        for step in 0..self.cfg.steps {
            let (bu, bv) = self.boundary(step as f64 * self.cfg.dt);
            let bu: Vec<Active<f64>> = bu.into_iter().map(Active::passive).collect();
            let bv: Vec<Active<f64>> = bv.into_iter().map(Active::passive).collect();
            let (first, second) = bufs.split_at_mut(1);
            let (src, dst) = if step % 2 == 0 { (&first[0], &mut second[0]) } else { (&second[0], &mut first[0]) };
            let (su, sv) = if step == 0 { (u0.elements(), v0.elements()) } else { (&src.0[..], &src.1[..]) };
            let gu = Grid { m, interior: su, boundary: &bu };
            let gv = Grid { m, interior: sv, boundary: &bv };
            for j in 1..=n {
                for i in 1..=n {
                    let idx = (j - 1) * n + i - 1;
                    let [c, w, e, s, no] = gu.stencil(i, j);
                    let b = gv.at(i, j);
                    tape.record(
                        handle,
                        &mut [
                            ArgRef::In(c),
                            ArgRef::In(w),
                            ArgRef::In(e),
                            ArgRef::In(s),
                            ArgRef::In(no),
                            ArgRef::In(c),
                            ArgRef::In(b),
                            ArgRef::Lhs(&mut dst.0[idx]),
                        ],
                        &consts,
                    )?;
                    let a = c;
                    let [c, w, e, s, no] = gv.stencil(i, j);
                    tape.record(
                        handle,
                        &mut [
                            ArgRef::In(c),
                            ArgRef::In(w),
                            ArgRef::In(e),
                            ArgRef::In(s),
                            ArgRef::In(no),
                            ArgRef::In(a),
                            ArgRef::In(c),
                            ArgRef::Lhs(&mut dst.1[idx]),
                        ],
                        &consts,
                    )?;
                }
            }
        }

        let (u, v) = match self.cfg.steps {
            0 => (u0.elements(), v0.elements()),
            s => {
                let last = &bufs[s % 2];
                (&last.0[..], &last.1[..])
            }
        };
        let mut acc = Active::passive(0.0);
        for (a, b) in u.iter().zip(v) {
            tape.axpy(&mut acc, a, a)?;
            tape.axpy(&mut acc, b, b)?;
        }
        Ok(Recorded { output: acc, inputs: vec![u0, v0] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partials_match_differences() {
        let k = [0.01, 0.1, 0.125, 0.02];
        for s in [[0.3, 0.1, 0.5, -0.2, 0.4, 0.7, -0.6], [0.3, 0.1, 0.5, -0.2, 0.4, -0.7, 0.6]] {
            let p = stencil_partials(s, k);
            for i in 0..7 {
                let h = 1e-6;
                let (mut up, mut dn) = (s, s);
                up[i] += h;
                dn[i] -= h;
                let fd = (stencil(up, k) - stencil(dn, k)) / (2.0 * h);
                assert!((fd - p[i]).abs() < 1e-8, "input {i}: {fd} vs {}", p[i]);
            }
        }
    }

    #[test]
    fn exact_solution_at_start() {
        assert_eq!(exact(0.25, 0.5, 0.0), (0.75, -0.25));
    }

    #[test]
    fn unstable_step_is_refused() {
        let mut cfg = BurgersConfig::new(8, 1);
        cfg.dt = 2.0 * cfg.stability_limit();
        assert!(matches!(Burgers::new(cfg), Err(BenchError::Stability { .. })));
    }
}
