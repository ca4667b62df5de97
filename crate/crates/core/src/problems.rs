//! Nonlinearities, manufactured solutions and the named benchmark problems.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Point2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::Rect;

pub type ScalarField = Arc<dyn Fn(&Point2<f64>) -> f64 + Send + Sync>;

/// A pointwise operator `F: R^{2x2} -> R` together with its derivative.
pub trait Nonlinearity: Send + Sync + fmt::Debug {
    fn value(&self, x: &Matrix2<f64>) -> f64;

    /// `F'(X)`, so that `F(X + E) ≈ F(X) + F'(X) : E`.
    fn derivative(&self, x: &Matrix2<f64>) -> Matrix2<f64>;

    /// Right side of the linearised equation: `f - F(X) + F'(X) : X`.
    fn newton_rhs(&self, x: &Matrix2<f64>, f: f64) -> f64 {
        f - self.value(x) + self.derivative(x).component_mul(x).sum()
    }
}

/// `F(X) = A : X`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub coefficient: Matrix2<f64>,
}

impl Linear {
    pub fn laplacian() -> Self {
        Self {
            coefficient: Matrix2::identity(),
        }
    }
}

impl Nonlinearity for Linear {
    fn value(&self, x: &Matrix2<f64>) -> f64 {
        self.coefficient.component_mul(x).sum()
    }

    fn derivative(&self, _x: &Matrix2<f64>) -> Matrix2<f64> {
        self.coefficient
    }
}

/// `F(X) = sin(tr X) + 2 tr X`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SineLaplacian;

impl Nonlinearity for SineLaplacian {
    fn value(&self, x: &Matrix2<f64>) -> f64 {
        let t = x.trace();
        t.sin() + 2.0 * t
    }

    fn derivative(&self, x: &Matrix2<f64>) -> Matrix2<f64> {
        Matrix2::identity() * (x.trace().cos() + 2.0)
    }
}

/// `F(X) = X_11^3 + X_22^3 + tr X`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CubicDiagonal;

impl Nonlinearity for CubicDiagonal {
    fn value(&self, x: &Matrix2<f64>) -> f64 {
        x[(0, 0)].powi(3) + x[(1, 1)].powi(3) + x.trace()
    }

    fn derivative(&self, x: &Matrix2<f64>) -> Matrix2<f64> {
        Matrix2::new(3.0 * x[(0, 0)].powi(2) + 1.0, 0.0, 0.0, 3.0 * x[(1, 1)].powi(2) + 1.0)
    }

    fn newton_rhs(&self, x: &Matrix2<f64>, f: f64) -> f64 {
        f + 2.0 * (x[(0, 0)].powi(3) + x[(1, 1)].powi(3))
    }
}

pub fn cofactor(x: &Matrix2<f64>) -> Matrix2<f64> {
    Matrix2::new(x[(1, 1)], -x[(1, 0)], -x[(0, 1)], x[(0, 0)])
}

/// `F(X) = det X`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MongeAmpere;

impl Nonlinearity for MongeAmpere {
    fn value(&self, x: &Matrix2<f64>) -> f64 {
        x.determinant()
    }

    fn derivative(&self, x: &Matrix2<f64>) -> Matrix2<f64> {
        cofactor(x)
    }

    fn newton_rhs(&self, x: &Matrix2<f64>, f: f64) -> f64 {
        f + x.determinant()
    }
}

/// `F(X) = (α+1) tr X + (α-1) sqrt((tr X)^2 - 4 det X)`.
///
/// The square root is not differentiable where the eigenvalues coincide; the
/// derivative uses `1 / max(s, ε)` with `ε = 1e-12 (1 + |tr X|)` there.
#[derive(Debug, Clone, Copy)]
pub struct Pucci {
    pub alpha: f64,
}

impl Pucci {
    /// `((tr X)^2 - 4 det X)^{1/2}`, expanded so large diagonals do not cancel.
    fn gap(x: &Matrix2<f64>) -> f64 {
        let d = x[(0, 0)] - x[(1, 1)];
        (d * d + 4.0 * x[(0, 1)] * x[(1, 0)]).max(0.0).sqrt()
    }
}

impl Nonlinearity for Pucci {
    fn value(&self, x: &Matrix2<f64>) -> f64 {
        (self.alpha + 1.0) * x.trace() + (self.alpha - 1.0) * Self::gap(x)
    }

    fn derivative(&self, x: &Matrix2<f64>) -> Matrix2<f64> {
        let t = x.trace();
        let s = Self::gap(x).max(1e-12 * (1.0 + t.abs()));
        // tr(X) I - 2 cof(X)
        let d = x[(0, 0)] - x[(1, 1)];
        let ds = Matrix2::new(d, 2.0 * x[(1, 0)], 2.0 * x[(0, 1)], -d) / s;
        Matrix2::identity() * (self.alpha + 1.0) + ds * (self.alpha - 1.0)
    }
}

pub trait ExactSolution: Send + Sync + fmt::Debug {
    fn value(&self, x: &Point2<f64>) -> f64;
    fn gradient(&self, x: &Point2<f64>) -> Vector2<f64>;
    fn hessian(&self, x: &Point2<f64>) -> Matrix2<f64>;
}

/// `u = exp(-k |x|^2)`.
#[derive(Debug, Clone, Copy)]
pub struct Gaussian {
    pub k: f64,
}

impl ExactSolution for Gaussian {
    fn value(&self, x: &Point2<f64>) -> f64 {
        (-self.k * x.coords.norm_squared()).exp()
    }

    fn gradient(&self, x: &Point2<f64>) -> Vector2<f64> {
        x.coords * (-2.0 * self.k * self.value(x))
    }

    fn hessian(&self, x: &Point2<f64>) -> Matrix2<f64> {
        let v = x.coords;
        (Matrix2::identity() * (-2.0 * self.k) + v * v.transpose() * (4.0 * self.k * self.k)) * self.value(x)
    }
}

/// `u = exp(|x|^2 / 2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RadialExp;

impl ExactSolution for RadialExp {
    fn value(&self, x: &Point2<f64>) -> f64 {
        (0.5 * x.coords.norm_squared()).exp()
    }

    fn gradient(&self, x: &Point2<f64>) -> Vector2<f64> {
        x.coords * self.value(x)
    }

    fn hessian(&self, x: &Point2<f64>) -> Matrix2<f64> {
        let v = x.coords;
        (Matrix2::identity() + v * v.transpose()) * self.value(x)
    }
}

/// `u = -sqrt(2 - |x|^2)`, singular gradient at the corners of `[-1,1]^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SqrtCone;

impl ExactSolution for SqrtCone {
    fn value(&self, x: &Point2<f64>) -> f64 {
        -(2.0 - x.coords.norm_squared()).sqrt()
    }

    fn gradient(&self, x: &Point2<f64>) -> Vector2<f64> {
        x.coords / (2.0 - x.coords.norm_squared()).sqrt()
    }

    fn hessian(&self, x: &Point2<f64>) -> Matrix2<f64> {
        let v = x.coords;
        let w = 2.0 - v.norm_squared();
        Matrix2::identity() / w.sqrt() + v * v.transpose() / (w * w.sqrt())
    }
}

/// `u = |x|^{2α}`, with a singular Hessian at the origin for `α < 1`.
#[derive(Debug, Clone, Copy)]
pub struct RadialPower {
    pub alpha: f64,
}

impl ExactSolution for RadialPower {
    fn value(&self, x: &Point2<f64>) -> f64 {
        x.coords.norm_squared().powf(self.alpha)
    }

    fn gradient(&self, x: &Point2<f64>) -> Vector2<f64> {
        let r2 = x.coords.norm_squared();
        if r2 == 0.0 {
            return Vector2::zeros();
        }
        x.coords * (2.0 * self.alpha * r2.powf(self.alpha - 1.0))
    }

    fn hessian(&self, x: &Point2<f64>) -> Matrix2<f64> {
        let v = x.coords;
        let r2 = v.norm_squared();
        let a = self.alpha;
        Matrix2::identity() * (2.0 * a * r2.powf(a - 1.0))
            + v * v.transpose() * (2.0 * a * (2.0 * a - 2.0) * r2.powf(a - 2.0))
    }
}

/// `u = -|x - c|^{1-α}` with `c = (-1, -1)`; solves the Pucci equation away
/// from `c`.
#[derive(Debug, Clone, Copy)]
pub struct PucciClassical {
    pub alpha: f64,
}

impl PucciClassical {
    const CENTRE: Vector2<f64> = Vector2::new(-1.0, -1.0);
}

impl ExactSolution for PucciClassical {
    fn value(&self, x: &Point2<f64>) -> f64 {
        let r2 = (x.coords - Self::CENTRE).norm_squared();
        -r2.powf(0.5 * (1.0 - self.alpha))
    }

    fn gradient(&self, x: &Point2<f64>) -> Vector2<f64> {
        let y = x.coords - Self::CENTRE;
        let b = 1.0 - self.alpha;
        y * (-b * y.norm_squared().powf(0.5 * b - 1.0))
    }

    fn hessian(&self, x: &Point2<f64>) -> Matrix2<f64> {
        let y = x.coords - Self::CENTRE;
        let r2 = y.norm_squared();
        let b = 1.0 - self.alpha;
        Matrix2::identity() * (-b * r2.powf(0.5 * b - 1.0)) + y * y.transpose() * (-b * (b - 2.0) * r2.powf(0.5 * b - 2.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    CrissCross,
    /// Criss-cross, refined once and jittered.
    Irregular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    /// `U^0 = 0`.
    Zero,
    /// Poisson solve `ΔU = 2 sqrt(f)` with the problem's boundary data.
    MongeAmpere,
    /// Harmonic extension of the boundary data.
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Outer Newton, each step a linear nonvariational solve.
    NewtonNvfem,
    /// Algebraic Newton on the discrete nonlinear system.
    Fnfem,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Rect,
    pub mesh: MeshKind,
    pub nonlinearity: Arc<dyn Nonlinearity>,
    pub source: ScalarField,
    pub boundary: ScalarField,
    pub exact: Option<Arc<dyn ExactSolution>>,
    pub initial_guess: InitialGuess,
    pub strategy: Strategy,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("mesh", &self.mesh)
            .field("nonlinearity", &self.nonlinearity)
            .field("exact", &self.exact)
            .field("initial_guess", &self.initial_guess)
            .field("strategy", &self.strategy)
            .finish()
    }
}

impl ProblemSpec {
    /// A problem whose source and boundary data are manufactured from `exact`.
    pub fn manufactured<N, E>(name: &str, domain: Rect, nonlinearity: N, exact: E) -> Self
    where
        N: Nonlinearity + 'static,
        E: ExactSolution + 'static,
    {
        let nonlinearity: Arc<dyn Nonlinearity> = Arc::new(nonlinearity);
        let exact: Arc<dyn ExactSolution> = Arc::new(exact);
        let (n, e) = (Arc::clone(&nonlinearity), Arc::clone(&exact));
        let source: ScalarField = Arc::new(move |x| n.value(&e.hessian(x)));
        let e = Arc::clone(&exact);
        let boundary: ScalarField = Arc::new(move |x| e.value(x));
        Self {
            name: name.to_string(),
            domain,
            mesh: MeshKind::CrissCross,
            nonlinearity,
            source,
            boundary,
            exact: Some(exact),
            initial_guess: InitialGuess::Zero,
            strategy: Strategy::NewtonNvfem,
        }
    }

    pub fn with_source<S>(mut self, source: S) -> Self
    where
        S: Fn(&Point2<f64>) -> f64 + Send + Sync + 'static,
    {
        self.source = Arc::new(source);
        self
    }
}

pub fn sine() -> ProblemSpec {
    let k = 10.0;
    ProblemSpec::manufactured("sine", Rect::square(-1.0, 1.0), SineLaplacian, Gaussian { k }).with_source(move |x| {
        let r2 = x.coords.norm_squared();
        let lap = (4.0 * k * k * r2 - 4.0 * k) * (-k * r2).exp();
        lap.sin() + 2.0 * lap
    })
}

pub fn cubic() -> ProblemSpec {
    ProblemSpec::manufactured("cubic", Rect::square(-1.0, 1.0), CubicDiagonal, Gaussian { k: 10.0 })
}

fn monge_ampere<E: ExactSolution + 'static>(name: &str, exact: E) -> ProblemSpec {
    let mut spec = ProblemSpec::manufactured(name, Rect::square(-1.0, 1.0), MongeAmpere, exact);
    spec.initial_guess = InitialGuess::MongeAmpere;
    spec
}

pub fn ma_radial() -> ProblemSpec {
    monge_ampere("ma-radial", RadialExp).with_source(|x| {
        let r2 = x.coords.norm_squared();
        (1.0 + r2) * r2.exp()
    })
}

pub fn ma_cone() -> ProblemSpec {
    monge_ampere("ma-cone", SqrtCone).with_source(|x| {
        let w = 2.0 - x.coords.norm_squared();
        2.0 / (w * w)
    })
}

pub fn ma_power(alpha: f64) -> ProblemSpec {
    monge_ampere(&format!("ma-alpha:{alpha}"), RadialPower { alpha }).with_source(move |x| {
        let r2 = x.coords.norm_squared();
        4.0 * alpha * alpha * (2.0 * alpha - 1.0) * r2.powf(2.0 * alpha - 2.0)
    })
}

pub fn pucci(alpha: f64) -> ProblemSpec {
    let mut spec = ProblemSpec::manufactured(
        &format!("pucci:{alpha}"),
        Rect::square(-0.95, 1.0),
        Pucci { alpha },
        PucciClassical { alpha },
    )
    .with_source(|_| 0.0);
    spec.mesh = MeshKind::Irregular;
    spec.initial_guess = InitialGuess::Harmonic;
    spec.strategy = Strategy::Fnfem;
    spec
}

/// Pucci equation on `[-1,1]^2` with boundary data 1 where both `|x|, |y| >= 1/2`
/// and 0 elsewhere. No exact solution.
pub fn pucci_piecewise(alpha: f64) -> ProblemSpec {
    ProblemSpec {
        name: format!("pucci-pw:{alpha}"),
        domain: Rect::square(-1.0, 1.0),
        mesh: MeshKind::CrissCross,
        nonlinearity: Arc::new(Pucci { alpha }),
        source: Arc::new(|_| 0.0),
        boundary: Arc::new(|x| if x.x.abs() >= 0.5 && x.y.abs() >= 0.5 { 1.0 } else { 0.0 }),
        exact: None,
        initial_guess: InitialGuess::Harmonic,
        strategy: Strategy::Fnfem,
    }
}

fn parse_alpha(name: &str, arg: &str) -> Result<f64> {
    let alpha: f64 = arg
        .parse()
        .map_err(|_| Error::Parse(format!("problem '{name}': bad parameter '{arg}'")))?;
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::Parse(format!("problem '{name}': parameter must be positive")));
    }
    Ok(alpha)
}

pub const PROBLEM_NAMES: &[&str] = &["sine", "cubic", "ma-radial", "ma-cone", "ma-alpha:<a>", "pucci:<a>", "pucci-pw:<a>"];

/// Looks up a problem by registry name, e.g. `sine` or `pucci:3`.
pub fn problem_by_name(name: &str) -> Result<ProblemSpec> {
    let (base, arg) = match name.split_once(':') {
        Some((b, a)) => (b, Some(a)),
        None => (name, None),
    };
    match (base, arg) {
        ("sine", None) => Ok(sine()),
        ("cubic", None) => Ok(cubic()),
        ("ma-radial", None) => Ok(ma_radial()),
        ("ma-cone", None) => Ok(ma_cone()),
        ("ma-alpha", Some(a)) => Ok(ma_power(parse_alpha(name, a)?)),
        ("pucci", Some(a)) => Ok(pucci(parse_alpha(name, a)?)),
        ("pucci-pw", Some(a)) => Ok(pucci_piecewise(parse_alpha(name, a)?)),
        _ => Err(Error::Parse(format!(
            "unknown problem '{name}' (known: {})",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assume, proptest};
    use proptest::strategy::Strategy as _;

    fn fd_hessian(e: &dyn ExactSolution, x: Point2<f64>) -> Matrix2<f64> {
        let h = 1e-5;
        let mut m = Matrix2::zeros();
        for j in 0..2 {
            let mut dx = Vector2::zeros();
            dx[j] = h;
            let g = (e.gradient(&(x + dx)) - e.gradient(&(x - dx))) / (2.0 * h);
            m.set_column(j, &g);
        }
        m
    }

    fn fd_gradient(e: &dyn ExactSolution, x: Point2<f64>) -> Vector2<f64> {
        let h = 1e-6;
        Vector2::new(
            (e.value(&(x + Vector2::x() * h)) - e.value(&(x - Vector2::x() * h))) / (2.0 * h),
            (e.value(&(x + Vector2::y() * h)) - e.value(&(x - Vector2::y() * h))) / (2.0 * h),
        )
    }

    #[test]
    fn exact_derivatives_match_finite_differences() {
        let cases: Vec<Box<dyn ExactSolution>> = vec![
            Box::new(Gaussian { k: 10.0 }),
            Box::new(RadialExp),
            Box::new(SqrtCone),
            Box::new(RadialPower { alpha: 0.6 }),
            Box::new(PucciClassical { alpha: 3.0 }),
        ];
        for e in &cases {
            for x in [Point2::new(0.3, -0.2), Point2::new(-0.7, 0.45), Point2::new(0.9, 0.8)] {
                let scale = 1.0 + e.hessian(&x).amax();
                assert!((fd_gradient(e.as_ref(), x) - e.gradient(&x)).amax() < 1e-6 * scale, "{e:?}");
                assert!((fd_hessian(e.as_ref(), x) - e.hessian(&x)).amax() < 1e-5 * scale, "{e:?}");
            }
        }
    }

    #[test]
    fn closed_form_sources_match_exact_hessians() {
        for spec in [sine(), cubic(), ma_radial(), ma_cone(), ma_power(0.55), ma_power(0.7), pucci(2.0), pucci(5.0)] {
            let exact = spec.exact.as_ref().unwrap();
            for x in [Point2::new(0.3, -0.2), Point2::new(-0.7, 0.45), Point2::new(0.9, 0.8)] {
                let f = (spec.source)(&x);
                let fu = spec.nonlinearity.value(&exact.hessian(&x));
                assert!((f - fu).abs() < 1e-10 * (1.0 + f.abs()), "{}: {f} vs {fu}", spec.name);
            }
        }
    }

    #[test]
    fn sine_source_at_origin() {
        let f = (sine().source)(&Point2::origin());
        assert!((f - (-80.745_113_160_479)).abs() < 1e-9);
    }

    #[test]
    fn ma_radial_source_values() {
        let f = ma_radial().source;
        assert_eq!(f(&Point2::origin()), 1.0);
        assert!((f(&Point2::new(1.0, 0.0)) - 2.0 * 1f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn pucci_exact_values() {
        assert!((PucciClassical { alpha: 3.0 }.value(&Point2::origin()) + 0.5).abs() < 1e-15);
        let v = PucciClassical { alpha: 2.0 }.value(&Point2::new(1.0, 1.0));
        assert!((v + 0.353_553_390_593_273_8).abs() < 1e-15);
    }

    #[test]
    fn pucci_with_unit_alpha_is_twice_laplacian() {
        let p = Pucci { alpha: 1.0 };
        let x = Matrix2::new(1.0, 0.3, 0.3, -2.0);
        assert_eq!(p.value(&x), 2.0 * x.trace());
        assert_eq!(p.derivative(&x), Matrix2::identity() * 2.0);
    }

    #[test]
    fn pucci_derivative_regularised_at_multiple_eigenvalue() {
        let p = Pucci { alpha: 3.0 };
        let d = p.derivative(&(Matrix2::identity() * 2.0));
        assert!(d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn piecewise_boundary_data() {
        let g = pucci_piecewise(2.0).boundary;
        assert_eq!(g(&Point2::new(1.0, 0.5)), 1.0);
        assert_eq!(g(&Point2::new(1.0, 0.4)), 0.0);
        assert_eq!(g(&Point2::new(-0.5, -1.0)), 1.0);
    }

    #[test]
    fn registry() {
        for name in ["sine", "cubic", "ma-radial", "ma-cone", "ma-alpha:0.55", "pucci:3", "pucci-pw:2.5"] {
            assert_eq!(problem_by_name(name).unwrap().name, name);
        }
        for bad in ["nope", "pucci", "pucci:x", "ma-alpha:-1", "sine:2"] {
            assert!(matches!(problem_by_name(bad), Err(Error::Parse(_))), "{bad}");
        }
    }

    fn sym() -> impl proptest::strategy::Strategy<Value = Matrix2<f64>> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b, c)| Matrix2::new(a, b, b, c))
    }

    fn check_derivative(n: &dyn Nonlinearity, x: Matrix2<f64>) {
        let h = 1e-6;
        let d = n.derivative(&x);
        for i in 0..2 {
            for j in 0..2 {
                let mut e = Matrix2::zeros();
                e[(i, j)] = h;
                let fd = (n.value(&(x + e)) - n.value(&(x - e))) / (2.0 * h);
                assert!((fd - d[(i, j)]).abs() < 1e-5 * (1.0 + d.amax()), "{n:?} at {x}");
            }
        }
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(x in sym()) {
            check_derivative(&SineLaplacian, x);
            check_derivative(&CubicDiagonal, x);
            check_derivative(&MongeAmpere, x);
            let t = x.trace();
            let gap = (t * t - 4.0 * x.determinant()).max(0.0).sqrt();
            prop_assume!(gap > 1e-2);
            check_derivative(&Pucci { alpha: 3.0 }, x);
        }

        #[test]
        fn specialised_newton_rhs_agrees_with_generic(x in sym(), f in -5.0..5.0f64) {
            let generic = |n: &dyn Nonlinearity| f - n.value(&x) + n.derivative(&x).component_mul(&x).sum();
            prop_assert!((CubicDiagonal.newton_rhs(&x, f) - generic(&CubicDiagonal)).abs() < 1e-10);
            prop_assert!((MongeAmpere.newton_rhs(&x, f) - generic(&MongeAmpere)).abs() < 1e-10);
        }

        #[test]
        fn pucci_is_positively_homogeneous(x in sym(), c in 0.1..10.0f64) {
            let p = Pucci { alpha: 2.5 };
            prop_assert!((p.value(&(x * c)) - c * p.value(&x)).abs() < 1e-9 * c * (1.0 + x.amax()));
        }
    }
}
