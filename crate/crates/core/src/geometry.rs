//! Planar field geometry: the mission rectangle, its two cell grids,
//! straight-line kinematics and boundary handling.
//!
//! The field spans `[0, width] x [0, height]`. Cell `(col, row)` of a grid
//! with cell size `s` covers `[col*s, (col+1)*s) x [row*s, (row+1)*s)` and its
//! center is `((col + 0.5) * s, (row + 0.5) * s)`.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("field dimensions must be positive (got {width} x {height})")]
    NonPositiveSize { width: f64, height: f64 },
    #[error("cell sizes must be positive (measurement {measure}, pheromone {pheromone})")]
    NonPositiveCell { measure: f64, pheromone: f64 },
    #[error("pheromone cell {pheromone} is not an integer multiple of measurement cell {measure}")]
    CellNotMultiple { measure: f64, pheromone: f64 },
}

/// Mission field and its discretizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub width: f64,
    pub height: f64,
    pub measure_cell: f64,
    pub pheromone_cell: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            width: 2000.0,
            height: 1000.0,
            measure_cell: 1.0,
            pheromone_cell: 5.0,
        }
    }
}

/// Which of the two field grids a cell index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridKind {
    Measurement,
    Pheromone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub kind: GridKind,
    pub row: usize,
    pub col: usize,
}

impl FieldSpec {
    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(FieldError::NonPositiveSize {
                width: self.width,
                height: self.height,
            });
        }
        if !(self.measure_cell > 0.0 && self.pheromone_cell > 0.0) {
            return Err(FieldError::NonPositiveCell {
                measure: self.measure_cell,
                pheromone: self.pheromone_cell,
            });
        }
        let ratio = self.pheromone_cell / self.measure_cell;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(FieldError::CellNotMultiple {
                measure: self.measure_cell,
                pheromone: self.pheromone_cell,
            });
        }
        Ok(())
    }

    pub fn cell_size(&self, kind: GridKind) -> f64 {
        match kind {
            GridKind::Measurement => self.measure_cell,
            GridKind::Pheromone => self.pheromone_cell,
        }
    }

    pub fn cols(&self, kind: GridKind) -> usize {
        (self.width / self.cell_size(kind)).round() as usize
    }

    pub fn rows(&self, kind: GridKind) -> usize {
        (self.height / self.cell_size(kind)).round() as usize
    }

    pub fn cell_count(&self, kind: GridKind) -> usize {
        self.cols(kind) * self.rows(kind)
    }

    pub fn cell_center(&self, cell: CellIndex) -> Point {
        let s = self.cell_size(cell.kind);
        Point::new((cell.col as f64 + 0.5) * s, (cell.row as f64 + 0.5) * s)
    }

    /// Closed-rectangle membership.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    pub fn center(&self) -> Point {
        Point::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    /// Grid cell containing `p`, or `None` outside the field.
    pub fn cell_of(&self, p: Point, kind: GridKind) -> Option<CellIndex> {
        if !self.contains(p) {
            return None;
        }
        let s = self.cell_size(kind);
        let col = ((p.x / s).floor() as usize).min(self.cols(kind) - 1);
        let row = ((p.y / s).floor() as usize).min(self.rows(kind) - 1);
        Some(CellIndex { kind, row, col })
    }

    /// Calls `visit(row, first_col, last_col)` for every grid row holding at
    /// least one in-field cell whose center lies within `radius` of `center`.
    /// Column ranges are inclusive.
    pub fn for_each_disc_span<F>(&self, center: Point, radius: f64, kind: GridKind, mut visit: F)
    where
        F: FnMut(usize, usize, usize),
    {
        if radius < 0.0 || !radius.is_finite() {
            return;
        }
        let s = self.cell_size(kind);
        let cols = self.cols(kind) as i64;
        let rows = self.rows(kind) as i64;
        let r2 = radius * radius;
        let inside = |col: i64, dy2: f64| {
            let dx = (col as f64 + 0.5) * s - center.x;
            dx * dx + dy2 <= r2
        };

        let row_lo = (((center.y - radius) / s - 0.5).floor() as i64).max(0);
        let row_hi = (((center.y + radius) / s - 0.5).ceil() as i64).min(rows - 1);
        for row in row_lo..=row_hi {
            let dy = (row as f64 + 0.5) * s - center.y;
            let dy2 = dy * dy;
            if dy2 > r2 {
                continue;
            }
            let half = (r2 - dy2).sqrt();
            // Estimate the span, then settle its ends against the exact predicate.
            let mut lo = ((center.x - half) / s - 0.5).ceil() as i64;
            let mut hi = ((center.x + half) / s - 0.5).floor() as i64;
            while lo <= hi && !inside(lo, dy2) {
                lo += 1;
            }
            while inside(lo - 1, dy2) {
                lo -= 1;
            }
            while hi >= lo && !inside(hi, dy2) {
                hi -= 1;
            }
            while inside(hi + 1, dy2) {
                hi += 1;
            }
            let lo = lo.max(0);
            let hi = hi.min(cols - 1);
            if lo <= hi {
                visit(row as usize, lo as usize, hi as usize);
            }
        }
    }

    /// Exactly those in-field cells whose center point lies within `radius`
    /// of `center`, in row-major order.
    pub fn cells_in_disc(&self, center: Point, radius: f64, kind: GridKind) -> Vec<CellIndex> {
        let mut out = Vec::new();
        self.for_each_disc_span(center, radius, kind, |row, lo, hi| {
            out.extend((lo..=hi).map(|col| CellIndex { kind, row, col }));
        });
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Heading in `[0, 2π)` from `self` toward `other`.
    pub fn bearing_to(self, other: Point) -> f64 {
        normalize_heading((other.y - self.y).atan2(other.x - self.x))
    }
}

/// Wraps any angle into `[0, 2π)`.
pub fn normalize_heading(theta: f64) -> f64 {
    let h = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if h >= TAU {
        0.0
    } else {
        h
    }
}

/// Absolute angular difference in `[0, π]`.
pub fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Planar kinematic state of a UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians in `[0, 2π)`, counter-clockwise from the +x axis.
    pub heading: f64,
    /// Meters per second.
    pub speed: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_heading(heading),
            speed,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Straight-line constant-speed extrapolation. Not clamped to the field.
pub fn predict_position(p: &Pose, dt: f64) -> Point {
    let d = p.speed * dt;
    Point::new(p.x + d * p.heading.cos(), p.y + d * p.heading.sin())
}

/// Result of moving a pose under the boundary rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advance {
    pub position: Point,
    pub hit_boundary: bool,
}

/// Moves `p` for `dt` seconds along its heading, stopping at the first
/// boundary intersection if the straight path would leave the field.
pub fn advance_within(p: &Pose, dt: f64, field: &FieldSpec) -> Advance {
    let target = predict_position(p, dt);
    if field.contains(target) {
        return Advance {
            position: target,
            hit_boundary: false,
        };
    }
    let dx = target.x - p.x;
    let dy = target.y - p.y;
    let mut frac: f64 = 1.0;
    if dx > 0.0 {
        frac = frac.min((field.width - p.x) / dx);
    } else if dx < 0.0 {
        frac = frac.min(-p.x / dx);
    }
    if dy > 0.0 {
        frac = frac.min((field.height - p.y) / dy);
    } else if dy < 0.0 {
        frac = frac.min(-p.y / dy);
    }
    let frac = frac.max(0.0);
    Advance {
        position: field.clamp(Point::new(p.x + frac * dx, p.y + frac * dy)),
        hit_boundary: true,
    }
}

/// Draws a point uniformly from the open field interior, rejecting points
/// closer to `from` than `min_distance`. The rejection keeps the one-step
/// extrapolation toward the target on the segment, hence inside the field.
pub fn sample_inward_target<R: Rng + ?Sized>(from: Point, min_distance: f64, field: &FieldSpec, rng: &mut R) -> Point {
    loop {
        let x = rng.gen::<f64>() * field.width;
        let y = rng.gen::<f64>() * field.height;
        if x <= 0.0 || y <= 0.0 {
            continue;
        }
        let q = Point::new(x, y);
        if q.distance(from) > min_distance.max(0.0) {
            return q;
        }
    }
}

/// Heading toward a uniformly drawn interior point of the field.
pub fn random_inward_heading<R: Rng + ?Sized>(p: &Pose, field: &FieldSpec, rng: &mut R) -> f64 {
    let from = p.position();
    from.bearing_to(sample_inward_target(from, p.speed, field, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn window_oracle(field: &FieldSpec, c: Point, r: f64, kind: GridKind) -> Vec<CellIndex> {
        let s = field.cell_size(kind);
        let mut out = Vec::new();
        for row in 0..field.rows(kind) {
            let cy = (row as f64 + 0.5) * s;
            if (cy - c.y).abs() > r + s {
                continue;
            }
            for col in 0..field.cols(kind) {
                let cx = (col as f64 + 0.5) * s;
                let (dx, dy) = (cx - c.x, cy - c.y);
                if dx * dx + dy * dy <= r * r {
                    out.push(CellIndex { kind, row, col });
                }
            }
        }
        out
    }

    #[test]
    fn predict_axis_aligned() {
        let p = predict_position(&Pose::new(0.0, 0.0, 0.0, 5.0), 2.0);
        assert!((p.x - 10.0).abs() < 1e-12 && p.y.abs() < 1e-12);
        let p = predict_position(&Pose::new(100.0, 100.0, FRAC_PI_2, 5.0), 10.0);
        assert!((p.x - 100.0).abs() < 1e-9 && (p.y - 150.0).abs() < 1e-12);
    }

    #[test]
    fn predict_diagonal_matches_fine_integration() {
        let pose = Pose::new(50.0, 50.0, FRAC_PI_4, 5.0);
        // Kahan-compensated Euler integration with 10^6 substeps.
        let steps = 1_000_000;
        let h = 3.0 / steps as f64;
        let (vx, vy) = (5.0 * FRAC_PI_4.cos(), 5.0 * FRAC_PI_4.sin());
        let (mut x, mut y, mut cx, mut cy) = (50.0f64, 50.0f64, 0.0f64, 0.0f64);
        for _ in 0..steps {
            let yx = vx * h - cx;
            let tx = x + yx;
            cx = (tx - x) - yx;
            x = tx;
            let yy = vy * h - cy;
            let ty = y + yy;
            cy = (ty - y) - yy;
            y = ty;
        }
        let p = predict_position(&pose, 3.0);
        assert!((p.x - x).abs() < 1e-9, "{} vs {}", p.x, x);
        assert!((p.y - y).abs() < 1e-9, "{} vs {}", p.y, y);
    }

    #[test]
    fn zero_radius_disc_at_cell_center_is_that_cell() {
        let f = FieldSpec::default();
        let c = f.cells_in_disc(Point::new(10.5, 20.5), 0.0, GridKind::Measurement);
        assert_eq!(
            c,
            vec![CellIndex {
                kind: GridKind::Measurement,
                row: 20,
                col: 10
            }]
        );
    }

    #[test]
    fn sensor_disc_matches_enumeration() {
        let f = FieldSpec::default();
        let center = Point::new(1000.5, 500.5);
        let got = f.cells_in_disc(center, 20.0, GridKind::Measurement);
        let want = window_oracle(&f, center, 20.0, GridKind::Measurement);
        assert_eq!(got, want);
        assert_eq!(got.len(), 1257);
    }

    #[test]
    fn corner_disc_is_quarter_of_oracle() {
        let f = FieldSpec::default();
        let got = f.cells_in_disc(Point::new(0.0, 0.0), 20.0, GridKind::Measurement);
        let want = window_oracle(&f, Point::new(0.0, 0.0), 20.0, GridKind::Measurement);
        assert_eq!(got, want);
        assert!(got.iter().all(|c| c.row < 20 && c.col < 20));
    }

    #[test]
    fn boundary_heading_points_inward() {
        let f = FieldSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let h = random_inward_heading(&Pose::new(0.0, 500.0, PI, 5.0), &f, &mut rng);
            assert!(h.cos() > 0.0);
            assert!((0.0..TAU).contains(&h));
        }
    }

    #[test]
    fn advance_stops_at_boundary() {
        let f = FieldSpec::default();
        let a = advance_within(&Pose::new(1998.0, 500.0, 0.0, 5.0), 1.0, &f);
        assert!(a.hit_boundary);
        assert_eq!(a.position, Point::new(2000.0, 500.0));
        let a = advance_within(&Pose::new(1000.0, 500.0, 0.0, 5.0), 1.0, &f);
        assert!(!a.hit_boundary);
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let mut f = FieldSpec::default();
        assert!(f.validate().is_ok());
        f.pheromone_cell = 2.5;
        f.measure_cell = 1.0;
        assert!(matches!(f.validate(), Err(FieldError::CellNotMultiple { .. })));
        f = FieldSpec {
            width: 0.0,
            ..FieldSpec::default()
        };
        assert!(f.validate().is_err());
    }

    #[test]
    fn normalize_wraps() {
        assert_eq!(normalize_heading(-1e-20), 0.0);
        assert!((normalize_heading(-FRAC_PI_2) - 1.5 * PI).abs() < 1e-12);
        assert!((angle_between(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
    }
}
