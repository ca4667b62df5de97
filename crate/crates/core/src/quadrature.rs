//! Symmetric Gauss rules on the reference triangle and Gauss-Legendre rules
//! on the unit interval.

/// Points in barycentric coordinates; weights sum to the reference area 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

fn orbit3(a: f64) -> [[f64; 3]; 3] {
    let b = 1.0 - 2.0 * a;
    [[a, a, b], [a, b, a], [b, a, a]]
}

fn orbit6(a: f64, b: f64) -> [[f64; 3]; 6] {
    let c = 1.0 - a - b;
    [[a, b, c], [b, c, a], [c, a, b], [b, a, c], [a, c, b], [c, b, a]]
}

impl QuadratureRule {
    /// The cheapest available rule exact for polynomials of total degree `degree`.
    ///
    /// Panics for `degree > 6`.
    pub fn triangle(degree: usize) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut push = |pts: &[[f64; 3]], w: f64| {
            points.extend_from_slice(pts);
            weights.extend(std::iter::repeat_n(w, pts.len()));
        };
        let exact = match degree {
            0 | 1 => {
                push(&[[1.0 / 3.0; 3]], 0.5);
                1
            }
            2 => {
                push(&orbit3(1.0 / 6.0), 1.0 / 6.0);
                2
            }
            3 | 4 => {
                push(&orbit3(0.445_948_490_915_964_886_32), 0.111_690_794_839_005_732_85);
                push(&orbit3(0.091_576_213_509_770_743_46), 0.054_975_871_827_660_933_819);
                4
            }
            5 | 6 => {
                push(&orbit3(0.249_286_745_170_910_421_29), 0.058_393_137_863_189_683_013);
                push(&orbit3(0.063_089_014_491_502_228_34), 0.025_422_453_185_103_408_46);
                push(
                    &orbit6(0.053_145_049_844_816_947_353, 0.310_352_451_033_784_405_42),
                    0.041_425_537_809_186_787_597,
                );
                6
            }
            _ => panic!("no triangle rule of degree {degree}"),
        };
        Self {
            degree: exact,
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre rule on `[0, 1]`; weights sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRule {
    pub degree: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    /// Rule exact for polynomials of degree `degree` (at most 5).
    pub fn gauss_legendre(degree: usize) -> Self {
        match degree {
            0 | 1 => Self {
                degree: 1,
                points: vec![0.5],
                weights: vec![1.0],
            },
            2 | 3 => {
                let d = 0.5 / 3f64.sqrt();
                Self {
                    degree: 3,
                    points: vec![0.5 - d, 0.5 + d],
                    weights: vec![0.5, 0.5],
                }
            }
            4 | 5 => {
                let d = 0.5 * 0.6f64.sqrt();
                Self {
                    degree: 5,
                    points: vec![0.5 - d, 0.5, 0.5 + d],
                    weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
                }
            }
            _ => panic!("no Gauss-Legendre rule of degree {degree}"),
        }
    }
}
