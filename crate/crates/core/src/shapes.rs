//! Initial patches used by the runners and examples.

use std::path::PathBuf;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{read_field, GridSpec, ScalarField};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Disk {
        center: (f64, f64),
        radius: f64,
    },
    Ellipse {
        center: (f64, f64),
        a: f64,
        b: f64,
    },
    Square {
        center: (f64, f64),
        side: f64,
    },
    TwoDisks {
        c1: (f64, f64),
        r1: f64,
        c2: (f64, f64),
        r2: f64,
    },
    /// A `CAGG-FIELD v1` dump whose negative cells form the patch.
    LevelSetFile {
        path: PathBuf,
    },
}

impl Shape {
    pub fn disk(center: (f64, f64), radius: f64) -> Self {
        Shape::Disk { center, radius }
    }

    pub fn ellipse(center: (f64, f64), a: f64, b: f64) -> Self {
        Shape::Ellipse { center, a, b }
    }

    pub fn square(center: (f64, f64), side: f64) -> Self {
        Shape::Square { center, side }
    }

    pub fn two_disks(c1: (f64, f64), r1: f64, c2: (f64, f64), r2: f64) -> Self {
        Shape::TwoDisks { c1, r1, c2, r2 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("shape: {what} must be positive")));
        match self {
            Shape::Disk { radius, .. } if !(*radius > 0.0) => bad("radius"),
            Shape::Ellipse { a, b, .. } if !(*a > 0.0 && *b > 0.0) => bad("semi-axes"),
            Shape::Square { side, .. } if !(*side > 0.0) => bad("side"),
            Shape::TwoDisks { r1, r2, .. } if !(*r1 > 0.0 && *r2 > 0.0) => bad("radii"),
            _ => Ok(()),
        }
    }

    /// Area of the exact shape; `None` for files.
    pub fn area(&self) -> Option<f64> {
        use std::f64::consts::PI;
        match *self {
            Shape::Disk { radius, .. } => Some(PI * radius * radius),
            Shape::Ellipse { a, b, .. } => Some(PI * a * b),
            Shape::Square { side, .. } => Some(side * side),
            Shape::TwoDisks { c1, r1, c2, r2 } => {
                let d = (c1.0 - c2.0).hypot(c1.1 - c2.1);
                (d >= r1 + r2).then(|| PI * (r1 * r1 + r2 * r2))
            }
            Shape::LevelSetFile { .. } => None,
        }
    }

    /// Signed distance where cheap, a sign-correct approximation otherwise
    /// (ellipse); reinitialization makes either exact near the boundary.
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        match *self {
            Shape::Disk { center, radius } => (x - center.0).hypot(y - center.1) - radius,
            Shape::Ellipse { center, a, b } => {
                let (u, v) = (x - center.0, y - center.1);
                let f = (u / a).powi(2) + (v / b).powi(2) - 1.0;
                let g = 2.0 * ((u / (a * a)).powi(2) + (v / (b * b)).powi(2)).sqrt();
                if g > 1e-12 {
                    f / g
                } else {
                    -a.min(b)
                }
            }
            Shape::Square { center, side } => {
                let (dx, dy) = ((x - center.0).abs() - side / 2.0, (y - center.1).abs() - side / 2.0);
                dx.max(0.0).hypot(dy.max(0.0)) + dx.max(dy).min(0.0)
            }
            Shape::TwoDisks { c1, r1, c2, r2 } => {
                let a = (x - c1.0).hypot(y - c1.1) - r1;
                let b = (x - c2.0).hypot(y - c2.1) - r2;
                a.min(b)
            }
            Shape::LevelSetFile { .. } => f64::NAN,
        }
    }

    /// Level function sampled on `grid` (negative inside).
    pub fn sample(&self, grid: GridSpec) -> Result<ScalarField> {
        self.validate()?;
        if let Shape::LevelSetFile { path } = self {
            let file = std::fs::File::open(path)
                .map_err(|e| Error::Config(format!("shape file {}: {e}", path.display())))?;
            let f = read_field(std::io::BufReader::new(file))?;
            if !f.grid().same_as(&grid) {
                return Err(Error::Config(format!(
                    "shape file {} is on a different grid",
                    path.display()
                )));
            }
            return Ok(f);
        }
        Ok(ScalarField::from_fn(grid, |x, y| self.signed_distance(x, y)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_distance() {
        let s = Shape::square((0.0, 0.0), 2.0);
        assert_eq!(s.signed_distance(0.0, 0.0), -1.0);
        assert_eq!(s.signed_distance(2.0, 0.0), 1.0);
        assert!((s.signed_distance(2.0, 2.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ellipse_sign() {
        let s = Shape::ellipse((0.0, 0.0), 2.0, 1.0);
        assert!(s.signed_distance(1.9, 0.0) < 0.0);
        assert!(s.signed_distance(0.0, 1.1) > 0.0);
        assert!((s.signed_distance(2.0, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn parses_from_toml() {
        #[derive(Deserialize)]
        struct W {
            shape: Shape,
        }
        let w: W = toml::from_str("[shape]\nkind = \"ellipse\"\ncenter = [0.0, 0.5]\na = 1.5\nb = 1.0\n").unwrap();
        assert_eq!(w.shape, Shape::ellipse((0.0, 0.5), 1.5, 1.0));
        assert!(Shape::disk((0.0, 0.0), -1.0).validate().is_err());
    }
}
