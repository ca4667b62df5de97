//! Error norms, convergence rates, a posteriori estimates and marking.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::Serialize;

use crate::fespace::FEFunction;
use crate::nonlinear::Convexity;
use crate::nvfem::MatrixField;
use crate::problems::ExactSolution;

/// Errors at or below this size are treated as zero when computing rates.
pub const NOISE_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorNorms {
    pub l2: f64,
    /// Full `H1` norm (value and gradient).
    pub h1: f64,
    /// `L2` norm of the Frobenius norm of `D²u - H`.
    pub hessian: f64,
}

pub fn error_norms(u: &FEFunction, h: &MatrixField, exact: &dyn ExactSolution) -> ErrorNorms {
    let space = u.space();
    let points = space.quadrature_points();
    let weights = space.quadrature_weights();
    let values = u.at_quadrature_points();
    let hs = h.at_quadrature_points();
    let (mut l2, mut grad, mut hess) = (0.0, 0.0, 0.0);
    for (q, x) in points.iter().enumerate() {
        let w = weights[q];
        let (v, g) = values[q];
        l2 += w * (exact.value(x) - v).powi(2);
        grad += w * (exact.gradient(x) - g).norm_squared();
        hess += w * (exact.hessian(x) - hs[q]).norm_squared();
    }
    ErrorNorms {
        l2: l2.sqrt(),
        h1: (l2 + grad).sqrt(),
        hessian: hess.sqrt(),
    }
}

/// Pairwise rates `log(e_k / e_{k+1}) / log(h_k / h_{k+1})`. `None` where an
/// error is below [`NOISE_FLOOR`], non-finite, or the mesh sizes coincide.
pub fn eoc(errors: &[f64], h: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .zip(h.windows(2))
        .map(|(e, h)| {
            let usable = |x: f64| x.is_finite() && x > NOISE_FLOOR;
            if !usable(e[0]) || !usable(e[1]) || h[0] == h[1] || !(h[0] > 0.0 && h[1] > 0.0) {
                None
            } else {
                Some((e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            }
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(sx, sy), (a, b)| (sx + a / n, sy + b / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(sxy, sxx), (a, b)| (sxy + (a - mx) * (b - my), sxx + (a - mx) * (a - mx)));
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EocRow {
    pub n_dofs: usize,
    pub h_max: f64,
    pub errors: Option<ErrorNorms>,
    pub rate_l2: Option<f64>,
    pub rate_h1: Option<f64>,
    pub rate_hess: Option<f64>,
    pub newton_iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EocTable {
    pub rows: Vec<EocRow>,
}

impl EocTable {
    /// Builds the table from per-level data; rates are attached to the finer
    /// level of each pair.
    pub fn new(levels: &[(usize, f64, Option<ErrorNorms>, usize, bool)]) -> Self {
        let h: Vec<f64> = levels.iter().map(|l| l.1).collect();
        let pick = |f: fn(&ErrorNorms) -> f64| -> Vec<Option<f64>> {
            let e: Vec<f64> = levels.iter().map(|l| l.2.as_ref().map_or(f64::NAN, f)).collect();
            std::iter::once(None).chain(eoc(&e, &h)).collect()
        };
        let (r0, r1, r2) = (pick(|e| e.l2), pick(|e| e.h1), pick(|e| e.hessian));
        let rows = levels
            .iter()
            .enumerate()
            .map(|(k, &(n_dofs, h_max, errors, newton_iters, converged))| EocRow {
                n_dofs,
                h_max,
                errors,
                rate_l2: r0[k],
                rate_h1: r1[k],
                rate_hess: r2[k],
                newton_iters,
                converged,
            })
            .collect();
        Self { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_dofs,h_max,err_l2,rate_l2,err_h1,rate_h1,err_hess,rate_hess,newton_iters\n");
        let rate = |r: Option<f64>| r.map_or(String::new(), |v| format!("{v:.4}"));
        for r in &self.rows {
            let (e0, e1, e2) = r.errors.map_or((f64::NAN, f64::NAN, f64::NAN), |e| (e.l2, e.h1, e.hessian));
            let _ = writeln!(
                out,
                "{},{:.6e},{:.6e},{},{:.6e},{},{:.6e},{},{}",
                r.n_dofs,
                r.h_max,
                e0,
                rate(r.rate_l2),
                e1,
                rate(r.rate_h1),
                e2,
                rate(r.rate_hess),
                r.newton_iters
            );
        }
        out
    }

    /// The last available rate of each norm.
    pub fn terminal_rates(&self) -> [Option<f64>; 3] {
        let last = |f: fn(&EocRow) -> Option<f64>| self.rows.iter().rev().find_map(f);
        [last(|r| r.rate_l2), last(|r| r.rate_h1), last(|r| r.rate_hess)]
    }
}

pub fn convexity_report(h: &MatrixField) -> Convexity {
    Convexity::of(&h.at_quadrature_points())
}

/// Zienkiewicz–Zhu indicators: per cell, the `L2` distance between `∇U` and
/// a continuous piecewise linear gradient recovered by least-squares fits of
/// barycentre gradients over vertex patches.
pub fn zz_estimate(u: &FEFunction) -> Vec<f64> {
    let space = u.space();
    let mesh = space.mesh();
    let centroid = [1.0 / 3.0; 3];
    let samples: Vec<(nalgebra::Point2<f64>, Vector2<f64>)> = (0..mesh.n_cells())
        .map(|c| {
            let (_, g) = u.evaluate(c, centroid).expect("cell index in range");
            (mesh.cell_centroid(c), g)
        })
        .collect();

    let mut patches = vec![Vec::new(); mesh.n_vertices()];
    for (c, cell) in mesh.cells().iter().enumerate() {
        for &v in cell {
            patches[v].push(c);
        }
    }

    let recovered: Vec<Vector2<f64>> = patches
        .iter()
        .enumerate()
        .map(|(v, patch)| {
            let average = || patch.iter().map(|&c| samples[c].1).sum::<Vector2<f64>>() / patch.len() as f64;
            if patch.len() < 3 {
                return average();
            }
            let xv = mesh.vertices()[v];
            // Offsets scaled to unit patch size keep the normal equations well conditioned.
            let scale = patch.iter().map(|&c| (samples[c].0 - xv).norm()).fold(0.0, f64::max);
            let mut ata = Matrix3::zeros();
            let mut atb = [Vector3::zeros(), Vector3::zeros()];
            for &c in patch {
                let d = (samples[c].0 - xv) / scale;
                let row = Vector3::new(1.0, d.x, d.y);
                ata += row * row.transpose();
                for k in 0..2 {
                    atb[k] += row * samples[c].1[k];
                }
            }
            match ata.try_inverse() {
                Some(inv) if ata.determinant().abs() > 1e-10 * ata.norm().powi(3) => {
                    Vector2::new((inv * atb[0])[0], (inv * atb[1])[0])
                }
                _ => average(),
            }
        })
        .collect();

    let rule = space.volume_rule();
    (0..mesh.n_cells())
        .map(|c| {
            let cell = mesh.cells()[c];
            let det = space.geometry(c).det;
            let mut eta2 = 0.0;
            for (q, bary) in rule.points.iter().enumerate() {
                let (_, g) = u.evaluate(c, *bary).expect("cell index in range");
                let gr: Vector2<f64> = (0..3).map(|i| recovered[cell[i]] * bary[i]).sum();
                eta2 += rule.weights[q] * det * (gr - g).norm_squared();
            }
            eta2.sqrt()
        })
        .collect()
}

/// Dörfler marking: the smallest set of cells, taken in order of decreasing
/// indicator (ties by index), with `Σ η² >= θ² Σ_all η²`.
pub fn dorfler_mark(eta: &[f64], theta: f64) -> Vec<usize> {
    let total: f64 = eta.iter().map(|e| e * e).sum();
    if total == 0.0 || theta <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..eta.len()).collect();
    order.sort_by(|&a, &b| eta[b].total_cmp(&eta[a]).then(a.cmp(&b)));
    let target = theta * theta * total;
    let mut sum = 0.0;
    let mut marked = Vec::new();
    for i in order {
        marked.push(i);
        sum += eta[i] * eta[i];
        if sum >= target {
            break;
        }
    }
    marked
}
