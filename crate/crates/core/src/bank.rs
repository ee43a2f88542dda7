//! Smooth space-time test functions with exact derivatives and exact cell
//! integrals.
//!
//! Spatial members are tensor products of periodic trigonometric modes (base
//! wavenumber pi, so period 2 matches the torus) and, optionally, polynomial
//! bump profiles whose Fourier tails make dyadic oscillation patterns
//! visible. Time factors are C1 envelopes that vanish at the end time.

use crate::linalg::Vec2;
use crate::state::TorusGrid;

const PI: f64 = std::f64::consts::PI;

/// One-axis factor of a tensor test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Axis1Fn {
    /// Constant 1.
    One,
    /// `cos(pi k x)`.
    Cos(u32),
    /// `sin(pi k x)`.
    Sin(u32),
    /// `(1 - x^2)^2`, C1 across the periodic seam.
    BumpEven,
    /// `x (1 - x^2)^2`, odd counterpart.
    BumpOdd,
}

impl Axis1Fn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Axis1Fn::One => 1.0,
            Axis1Fn::Cos(k) => (PI * *k as f64 * x).cos(),
            Axis1Fn::Sin(k) => (PI * *k as f64 * x).sin(),
            Axis1Fn::BumpEven => {
                let w = 1.0 - x * x;
                w * w
            }
            Axis1Fn::BumpOdd => {
                let w = 1.0 - x * x;
                x * w * w
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Axis1Fn::One => 0.0,
            Axis1Fn::Cos(k) => {
                let a = PI * *k as f64;
                -a * (a * x).sin()
            }
            Axis1Fn::Sin(k) => {
                let a = PI * *k as f64;
                a * (a * x).cos()
            }
            Axis1Fn::BumpEven => -4.0 * x * (1.0 - x * x),
            Axis1Fn::BumpOdd => (1.0 - x * x) * (1.0 - 5.0 * x * x),
        }
    }

    /// Antiderivative (for exact integrals over cells).
    fn antideriv(&self, x: f64) -> f64 {
        match self {
            Axis1Fn::One => x,
            Axis1Fn::Cos(k) => {
                let a = PI * *k as f64;
                (a * x).sin() / a
            }
            Axis1Fn::Sin(k) => {
                let a = PI * *k as f64;
                -(a * x).cos() / a
            }
            Axis1Fn::BumpEven => x - 2.0 * x.powi(3) / 3.0 + x.powi(5) / 5.0,
            Axis1Fn::BumpOdd => 0.5 * x * x - 0.5 * x.powi(4) + x.powi(6) / 6.0,
        }
    }

    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        self.antideriv(hi) - self.antideriv(lo)
    }

    fn id(&self, axis: char) -> String {
        match self {
            Axis1Fn::One => "1".to_string(),
            Axis1Fn::Cos(k) => format!("cos{k}{axis}"),
            Axis1Fn::Sin(k) => format!("sin{k}{axis}"),
            Axis1Fn::BumpEven => format!("bump{axis}"),
            Axis1Fn::BumpOdd => format!("obump{axis}"),
        }
    }
}

/// Spatial test function: a tensor product or a linear combination.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialFn {
    Tensor { fx: Axis1Fn, fy: Axis1Fn },
    Combo(Vec<(f64, SpatialFn)>),
}

impl SpatialFn {
    pub fn tensor(fx: Axis1Fn, fy: Axis1Fn) -> Self {
        SpatialFn::Tensor { fx, fy }
    }

    pub fn one_d(fx: Axis1Fn) -> Self {
        SpatialFn::Tensor { fx, fy: Axis1Fn::One }
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        match self {
            SpatialFn::Tensor { fx, fy } => fx.eval(x[0]) * fy.eval(x[1]),
            SpatialFn::Combo(terms) => terms.iter().map(|(c, f)| c * f.eval(x)).sum(),
        }
    }

    pub fn grad(&self, x: Vec2) -> Vec2 {
        match self {
            SpatialFn::Tensor { fx, fy } => [
                fx.deriv(x[0]) * fy.eval(x[1]),
                fx.eval(x[0]) * fy.deriv(x[1]),
            ],
            SpatialFn::Combo(terms) => {
                let mut g = [0.0, 0.0];
                for (c, f) in terms {
                    let gi = f.grad(x);
                    g[0] += c * gi[0];
                    g[1] += c * gi[1];
                }
                g
            }
        }
    }

    /// Exact integral over the grid cell with linear index `idx`.
    pub fn cell_integral(&self, grid: TorusGrid, idx: usize) -> f64 {
        match self {
            SpatialFn::Tensor { fx, fy } => {
                let lo = grid.cell_lower(idx);
                let h = grid.spacing();
                let ix = fx.integral(lo[0], lo[0] + h);
                if grid.dim() == 1 {
                    ix
                } else {
                    ix * fy.integral(lo[1], lo[1] + h)
                }
            }
            SpatialFn::Combo(terms) => {
                terms.iter().map(|(c, f)| c * f.cell_integral(grid, idx)).sum()
            }
        }
    }

    /// Exact integral of the gradient over a grid cell (fundamental theorem
    /// of calculus per axis).
    pub fn cell_integral_grad(&self, grid: TorusGrid, idx: usize) -> Vec2 {
        match self {
            SpatialFn::Tensor { fx, fy } => {
                let lo = grid.cell_lower(idx);
                let h = grid.spacing();
                if grid.dim() == 1 {
                    [fx.eval(lo[0] + h) - fx.eval(lo[0]), 0.0]
                } else {
                    [
                        (fx.eval(lo[0] + h) - fx.eval(lo[0])) * fy.integral(lo[1], lo[1] + h),
                        fx.integral(lo[0], lo[0] + h) * (fy.eval(lo[1] + h) - fy.eval(lo[1])),
                    ]
                }
            }
            SpatialFn::Combo(terms) => {
                let mut g = [0.0, 0.0];
                for (c, f) in terms {
                    let gi = f.cell_integral_grad(grid, idx);
                    g[0] += c * gi[0];
                    g[1] += c * gi[1];
                }
                g
            }
        }
    }

    /// Crude sup-norm bound of the gradient (exact for tensor trig members).
    pub fn grad_sup_bound(&self) -> f64 {
        match self {
            SpatialFn::Tensor { fx, fy } => {
                let amp = |f: &Axis1Fn| match f {
                    Axis1Fn::One => 1.0,
                    Axis1Fn::Cos(_) | Axis1Fn::Sin(_) => 1.0,
                    Axis1Fn::BumpEven => 1.0,
                    Axis1Fn::BumpOdd => 1.0,
                };
                let slope = |f: &Axis1Fn| match f {
                    Axis1Fn::One => 0.0,
                    Axis1Fn::Cos(k) | Axis1Fn::Sin(k) => PI * *k as f64,
                    // max |d/dx (1-x^2)^2| on [-1,1] is at x = 1/sqrt(3)
                    Axis1Fn::BumpEven => 16.0 / (3.0 * 3.0_f64.sqrt()),
                    Axis1Fn::BumpOdd => 1.0,
                };
                (slope(fx) * amp(fy)).max(amp(fx) * slope(fy))
            }
            SpatialFn::Combo(terms) => {
                terms.iter().map(|(c, f)| c.abs() * f.grad_sup_bound()).sum()
            }
        }
    }

    pub fn id(&self) -> String {
        match self {
            SpatialFn::Tensor { fx, fy } => match (fx, fy) {
                (Axis1Fn::One, Axis1Fn::One) => "1".to_string(),
                (f, Axis1Fn::One) => f.id('x'),
                (Axis1Fn::One, f) => f.id('y'),
                (f, g) => format!("{}*{}", f.id('x'), g.id('y')),
            },
            SpatialFn::Combo(_) => "combo".to_string(),
        }
    }
}

/// C1 time envelope with `psi(0) = 1`, `psi >= 0`, `psi(t_end) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    /// 1 up to `knee`, cubic smoothstep down to 0 at `t_end`.
    Plateau { knee: f64, t_end: f64 },
    /// `(1 - (t/t_end)^2)^2`.
    Bump { t_end: f64 },
    /// `(1 - t/t_end)^2`.
    Decay { t_end: f64 },
}

impl Envelope {
    pub fn t_end(&self) -> f64 {
        match self {
            Envelope::Plateau { t_end, .. } | Envelope::Bump { t_end } | Envelope::Decay { t_end } => {
                *t_end
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Envelope::Plateau { knee, t_end } => {
                if t <= *knee {
                    1.0
                } else if t >= *t_end {
                    0.0
                } else {
                    let s = (t - knee) / (t_end - knee);
                    1.0 - s * s * (3.0 - 2.0 * s)
                }
            }
            Envelope::Bump { t_end } => {
                if t >= *t_end {
                    0.0
                } else {
                    let s = t / t_end;
                    let w = 1.0 - s * s;
                    w * w
                }
            }
            Envelope::Decay { t_end } => {
                if t >= *t_end {
                    0.0
                } else {
                    let s = 1.0 - t / t_end;
                    s * s
                }
            }
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            Envelope::Plateau { knee, t_end } => {
                if t <= *knee || t >= *t_end {
                    0.0
                } else {
                    let w = t_end - knee;
                    let s = (t - knee) / w;
                    -6.0 * s * (1.0 - s) / w
                }
            }
            Envelope::Bump { t_end } => {
                if t >= *t_end {
                    0.0
                } else {
                    let s = t / t_end;
                    -4.0 * s * (1.0 - s * s) / t_end
                }
            }
            Envelope::Decay { t_end } => {
                if t >= *t_end {
                    0.0
                } else {
                    -2.0 * (1.0 - t / t_end) / t_end
                }
            }
        }
    }

    /// Antiderivative `int_0^t psi` in closed form.
    pub fn antiderivative(&self, t: f64) -> f64 {
        match self {
            Envelope::Plateau { knee, t_end } => {
                if t <= *knee {
                    t.max(0.0)
                } else {
                    let w = t_end - knee;
                    let s = ((t - knee) / w).min(1.0);
                    knee + w * (s - s.powi(3) + 0.5 * s.powi(4))
                }
            }
            Envelope::Bump { t_end } => {
                let s = (t / t_end).clamp(0.0, 1.0);
                t_end * (s - 2.0 * s.powi(3) / 3.0 + s.powi(5) / 5.0)
            }
            Envelope::Decay { t_end } => {
                let s = (t / t_end).clamp(0.0, 1.0);
                t_end / 3.0 * (1.0 - (1.0 - s).powi(3))
            }
        }
    }

    /// Exact `int_a^b psi' (t) A(t) dt` for `A` linear on `[a, b]` with
    /// endpoint values `a_lo`, `a_hi`.
    pub fn weighted_deriv_integral(&self, a: f64, b: f64, a_lo: f64, a_hi: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let m0 = self.eval(b) - self.eval(a);
        let avg = (self.antiderivative(b) - self.antiderivative(a)) / (b - a);
        // int psi' theta dt = psi(b) - avg(psi) by parts, theta = (t-a)/(b-a)
        let m1 = self.eval(b) - avg;
        a_lo * (m0 - m1) + a_hi * m1
    }

    pub fn sup_norm(&self) -> f64 {
        1.0
    }

    pub fn id(&self) -> &'static str {
        match self {
            Envelope::Plateau { .. } => "plateau",
            Envelope::Bump { .. } => "bump",
            Envelope::Decay { .. } => "decay",
        }
    }
}

/// Scalar space-time test function `phi(t, x) = psi(t) phi_s(x)`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub id: String,
    pub space: SpatialFn,
    pub time: Envelope,
}

impl TestFunction {
    pub fn new(space: SpatialFn, time: Envelope) -> Self {
        let id = format!("{}|{}", space.id(), time.id());
        TestFunction { id, space, time }
    }

    pub fn eval(&self, t: f64, x: Vec2) -> f64 {
        self.time.eval(t) * self.space.eval(x)
    }

    pub fn dt(&self, t: f64, x: Vec2) -> f64 {
        self.time.deriv(t) * self.space.eval(x)
    }

    pub fn grad(&self, t: f64, x: Vec2) -> Vec2 {
        let g = self.space.grad(x);
        let psi = self.time.eval(t);
        [psi * g[0], psi * g[1]]
    }
}

/// Vector test function `phi(t, x) e_axis`.
#[derive(Debug, Clone)]
pub struct VectorTestFunction {
    pub id: String,
    pub space: SpatialFn,
    pub time: Envelope,
    pub axis: usize,
}

impl VectorTestFunction {
    pub fn new(space: SpatialFn, time: Envelope, axis: usize) -> Self {
        let id = format!("{}|{}|e{}", space.id(), time.id(), axis);
        VectorTestFunction { id, space, time, axis }
    }
}

/// Finite family of scalar and vector test functions plus the bare envelopes
/// used by the energy inequality.
#[derive(Debug, Clone)]
pub struct TestFunctionBank {
    pub max_mode: u32,
    pub scalar: Vec<TestFunction>,
    pub vector: Vec<VectorTestFunction>,
    pub envelopes: Vec<Envelope>,
}

fn axis_family(max_mode: u32, bumps: bool) -> Vec<Axis1Fn> {
    let mut fam = vec![Axis1Fn::One];
    for k in 1..=max_mode {
        fam.push(Axis1Fn::Cos(k));
        fam.push(Axis1Fn::Sin(k));
    }
    if bumps {
        fam.push(Axis1Fn::BumpEven);
        fam.push(Axis1Fn::BumpOdd);
    }
    fam
}

pub fn default_envelopes(t_end: f64) -> Vec<Envelope> {
    vec![
        Envelope::Plateau { knee: 0.75 * t_end, t_end },
        Envelope::Bump { t_end },
        Envelope::Decay { t_end },
    ]
}

impl TestFunctionBank {
    /// Tensor trigonometric bank with modes up to `max_mode` per axis.
    pub fn trigonometric(dim: usize, max_mode: u32, t_end: f64) -> Self {
        Self::build(dim, max_mode, t_end, false)
    }

    /// Trigonometric bank extended with polynomial bump profiles.
    pub fn with_bumps(dim: usize, max_mode: u32, t_end: f64) -> Self {
        Self::build(dim, max_mode, t_end, true)
    }

    fn build(dim: usize, max_mode: u32, t_end: f64, bumps: bool) -> Self {
        let envelopes = default_envelopes(t_end);
        let mut spatial = Vec::new();
        if dim == 1 {
            for fx in axis_family(max_mode, bumps) {
                spatial.push(SpatialFn::one_d(fx));
            }
        } else {
            for fx in axis_family(max_mode, bumps) {
                for fy in axis_family(max_mode, bumps) {
                    spatial.push(SpatialFn::tensor(fx, fy));
                }
            }
        }
        let mut scalar = Vec::new();
        let mut vector = Vec::new();
        for s in &spatial {
            for env in &envelopes {
                scalar.push(TestFunction::new(s.clone(), *env));
                for axis in 0..dim {
                    vector.push(VectorTestFunction::new(s.clone(), *env, axis));
                }
            }
        }
        TestFunctionBank { max_mode, scalar, vector, envelopes }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;

    #[test]
    fn derivatives_match_finite_differences() -> Result<()> {
        let fns = [
            Axis1Fn::One,
            Axis1Fn::Cos(2),
            Axis1Fn::Sin(3),
            Axis1Fn::BumpEven,
            Axis1Fn::BumpOdd,
        ];
        let eps = 1e-6;
        for f in fns {
            for i in 0..40 {
                let x = -0.975 + 0.05 * i as f64;
                let fd = (f.eval(x + eps) - f.eval(x - eps)) / (2.0 * eps);
                assert!(
                    (fd - f.deriv(x)).abs() < 1e-8 * (1.0 + f.deriv(x).abs()),
                    "{f:?} at {x}"
                );
            }
        }
        Ok(())
    }

    #[test]
    fn integrals_match_midpoint_refinement() {
        let fns = [Axis1Fn::Cos(1), Axis1Fn::Sin(2), Axis1Fn::BumpEven, Axis1Fn::BumpOdd];
        for f in fns {
            let (lo, hi) = (-0.3, 0.45);
            let mut sum = 0.0;
            let n = 20000;
            let dx = (hi - lo) / n as f64;
            for i in 0..n {
                sum += f.eval(lo + (i as f64 + 0.5) * dx) * dx;
            }
            assert!((sum - f.integral(lo, hi)).abs() < 1e-9, "{f:?}");
        }
    }

    #[test]
    fn envelopes_are_c1_with_unit_start_and_zero_end() {
        let t_end = 0.8;
        for env in default_envelopes(t_end) {
            assert!((env.eval(0.0) - 1.0).abs() < 1e-15, "{}", env.id());
            assert!(env.eval(t_end).abs() < 1e-15);
            assert!(env.eval(t_end + 0.1) == 0.0);
            // psi >= 0 and finite-difference check of the derivative
            let eps = 1e-7;
            for i in 1..100 {
                let t = t_end * i as f64 / 100.0;
                assert!(env.eval(t) >= 0.0);
                let fd = (env.eval(t + eps) - env.eval(t - eps)) / (2.0 * eps);
                assert!((fd - env.deriv(t)).abs() < 1e-5, "{} at {t}", env.id());
            }
        }
    }

    #[test]
    fn envelope_antiderivative_matches_quadrature() {
        let t_end = 0.7;
        for env in default_envelopes(t_end) {
            let n = 40000;
            let mut acc = 0.0;
            let dt = t_end / n as f64;
            for i in 0..n {
                let t = (i as f64 + 0.5) * dt;
                acc += env.eval(t) * dt;
                if i % 400 == 399 {
                    let upto = (i + 1) as f64 * dt;
                    assert!(
                        (acc - env.antiderivative(upto)).abs() < 1e-8,
                        "{} at {upto}",
                        env.id()
                    );
                }
            }
            // exactness of the weighted derivative integral on constants
            let w = env.weighted_deriv_integral(0.1, 0.5, 3.0, 3.0);
            assert!((w - 3.0 * (env.eval(0.5) - env.eval(0.1))).abs() < 1e-14);
        }
    }

    #[test]
    fn tensor_gradient_and_cell_integral_2d() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = SpatialFn::tensor(Axis1Fn::Cos(1), Axis1Fn::Sin(2));
        let x = [0.3, -0.2];
        let gr = f.grad(x);
        let eps = 1e-6;
        let fdx = (f.eval([x[0] + eps, x[1]]) - f.eval([x[0] - eps, x[1]])) / (2.0 * eps);
        let fdy = (f.eval([x[0], x[1] + eps]) - f.eval([x[0], x[1] - eps])) / (2.0 * eps);
        assert!((gr[0] - fdx).abs() < 1e-8 && (gr[1] - fdy).abs() < 1e-8);

        // integral over the whole torus of cos * sin vanishes
        let total: f64 = (0..g.total_cells()).map(|i| f.cell_integral(g, i)).sum();
        assert!(total.abs() < 1e-12);

        // constant integrates to the domain volume
        let one = SpatialFn::tensor(Axis1Fn::One, Axis1Fn::One);
        let vol: f64 = (0..g.total_cells()).map(|i| one.cell_integral(g, i)).sum();
        assert!((vol - 4.0).abs() < 1e-12);
    }

    #[test]
    fn combo_is_linear() {
        let f = SpatialFn::one_d(Axis1Fn::Cos(1));
        let g = SpatialFn::one_d(Axis1Fn::Sin(2));
        let combo = SpatialFn::Combo(vec![(2.0, f.clone()), (-0.5, g.clone())]);
        let x = [0.37, 0.0];
        assert!(
            (combo.eval(x) - (2.0 * f.eval(x) - 0.5 * g.eval(x))).abs() < 1e-15
        );
        let grid = TorusGrid::new(1, 16).unwrap();
        let ci = combo.cell_integral(grid, 5);
        let expect = 2.0 * f.cell_integral(grid, 5) - 0.5 * g.cell_integral(grid, 5);
        assert!((ci - expect).abs() < 1e-15);
    }

    #[test]
    fn bank_sizes() {
        let b1 = TestFunctionBank::trigonometric(1, 3, 0.5);
        // 7 spatial members x 3 envelopes
        assert_eq!(b1.scalar.len(), 21);
        assert_eq!(b1.vector.len(), 21);
        let b2 = TestFunctionBank::trigonometric(2, 1, 0.5);
        // 9 spatial x 3 envelopes, two vector axes
        assert_eq!(b2.scalar.len(), 27);
        assert_eq!(b2.vector.len(), 54);
        let bb = TestFunctionBank::with_bumps(1, 2, 0.5);
        assert!(bb.scalar.iter().any(|f| f.id.starts_with("bump")));
    }
}
