//! Pheromone maps: per-cell last-visit timestamps on the coarse grid with
//! linear evaporation, elementwise-max synchronization and cone "smell"
//! queries for the three-action steering models.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{angle_between, normalize_heading, CellIndex, FieldSpec, GridKind, Point, Pose};

/// Simulation time in whole seconds.
pub type Seconds = u32;

const NEVER: i32 = -1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PheromoneError {
    #[error("map dimensions differ: {mine:?} vs {theirs:?}")]
    DimensionMismatch {
        mine: (usize, usize),
        theirs: (usize, usize),
    },
    #[error("evaporation horizons differ")]
    HorizonMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PheromoneMap {
    field: FieldSpec,
    cols: usize,
    rows: usize,
    horizon: f64,
    last_visit: Vec<i32>,
}

impl PheromoneMap {
    pub const DEFAULT_HORIZON: f64 = 300.0;

    pub fn new(field: &FieldSpec, horizon: f64) -> Self {
        let cols = field.cols(GridKind::Pheromone);
        let rows = field.rows(GridKind::Pheromone);
        Self {
            field: *field,
            cols,
            rows,
            horizon,
            last_visit: vec![NEVER; cols * rows],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn index(&self, cell: CellIndex) -> usize {
        debug_assert_eq!(cell.kind, GridKind::Pheromone);
        cell.row * self.cols + cell.col
    }

    pub fn last_visit(&self, cell: CellIndex) -> Option<Seconds> {
        let v = self.last_visit[self.index(cell)];
        (v != NEVER).then_some(v as Seconds)
    }

    /// Stamps each cell with `max(last_visit, t)`.
    pub fn deposit<I>(&mut self, cells: I, t: Seconds)
    where
        I: IntoIterator<Item = CellIndex>,
    {
        let t = t as i32;
        for cell in cells {
            let i = self.index(cell);
            self.last_visit[i] = self.last_visit[i].max(t);
        }
    }

    /// Deposit over the sensor footprint without materializing the cell set.
    pub fn deposit_disc(&mut self, center: Point, radius: f64, t: Seconds) {
        let t = t as i32;
        let cols = self.cols;
        let cells = &mut self.last_visit;
        self.field
            .for_each_disc_span(center, radius, GridKind::Pheromone, |row, lo, hi| {
                for v in &mut cells[row * cols + lo..=row * cols + hi] {
                    *v = (*v).max(t);
                }
            });
    }

    /// 0 if never visited, else `max(0, 1 - age / horizon)`.
    pub fn concentration(&self, cell: CellIndex, now: Seconds) -> f64 {
        self.concentration_at(self.index(cell), now)
    }

    fn concentration_at(&self, i: usize, now: Seconds) -> f64 {
        let v = self.last_visit[i];
        if v == NEVER {
            return 0.0;
        }
        let age = (now as f64 - v as f64).max(0.0);
        (1.0 - age / self.horizon).clamp(0.0, 1.0)
    }

    /// Concentration of the cell containing `p`; out-of-field points read 1.
    pub fn concentration_at_point(&self, p: Point, now: Seconds) -> f64 {
        match self.field.cell_of(p, GridKind::Pheromone) {
            Some(cell) => self.concentration(cell, now),
            None => 1.0,
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<(), PheromoneError> {
        if self.dims() != other.dims() {
            return Err(PheromoneError::DimensionMismatch {
                mine: self.dims(),
                theirs: other.dims(),
            });
        }
        if self.horizon != other.horizon {
            return Err(PheromoneError::HorizonMismatch);
        }
        Ok(())
    }

    /// In-place elementwise max with `other`.
    pub fn merge_from(&mut self, other: &Self) -> Result<(), PheromoneError> {
        self.check_compatible(other)?;
        for (mine, &theirs) in self.last_visit.iter_mut().zip(&other.last_visit) {
            *mine = (*mine).max(theirs);
        }
        Ok(())
    }

    /// Sum of concentrations over the cells in the cone selected by `action`.
    /// Cells outside the field count as fully fresh.
    pub fn sector_smell(&self, pose: &Pose, action: Action, cone: &ConeShape, now: Seconds) -> f64 {
        let heading = action.apply(pose.heading, cone.turn);
        let mut total = 0.0;
        self.for_each_cone_cell(pose.position(), heading, cone, |col, row| {
            total += if col >= 0 && row >= 0 && (col as usize) < self.cols && (row as usize) < self.rows {
                self.concentration_at(row as usize * self.cols + col as usize, now)
            } else {
                1.0
            };
        });
        total
    }

    /// Visits the (possibly out-of-field) cell coordinates whose center lies
    /// in the cone of `cone.half_angle` around `heading`, within
    /// `cone.lookahead` of `origin`. The origin point itself is excluded.
    pub fn for_each_cone_cell<F>(&self, origin: Point, heading: f64, cone: &ConeShape, mut visit: F)
    where
        F: FnMut(i64, i64),
    {
        let s = self.field.pheromone_cell;
        let reach = cone.lookahead;
        let r2 = reach * reach;
        let col_lo = ((origin.x - reach) / s - 0.5).floor() as i64;
        let col_hi = ((origin.x + reach) / s - 0.5).ceil() as i64;
        let row_lo = ((origin.y - reach) / s - 0.5).floor() as i64;
        let row_hi = ((origin.y + reach) / s - 0.5).ceil() as i64;
        for row in row_lo..=row_hi {
            let dy = (row as f64 + 0.5) * s - origin.y;
            for col in col_lo..=col_hi {
                let dx = (col as f64 + 0.5) * s - origin.x;
                let d2 = dx * dx + dy * dy;
                if d2 == 0.0 || d2 > r2 {
                    continue;
                }
                if angle_between(dy.atan2(dx), heading) <= cone.half_angle {
                    visit(col, row);
                }
            }
        }
    }
}

/// Elementwise-max merge of two maps.
pub fn merge(mine: &PheromoneMap, theirs: &PheromoneMap) -> Result<PheromoneMap, PheromoneError> {
    let mut out = mine.clone();
    out.merge_from(theirs)?;
    Ok(out)
}

/// The three quantized steering actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Left,
    Straight,
    Right,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Left, Action::Straight, Action::Right];

    /// Left turns counter-clockwise.
    pub fn apply(self, heading: f64, turn: f64) -> f64 {
        match self {
            Action::Left => normalize_heading(heading + turn),
            Action::Straight => heading,
            Action::Right => normalize_heading(heading - turn),
        }
    }
}

/// Geometry of the smell cones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeShape {
    pub lookahead: f64,
    pub half_angle: f64,
    pub turn: f64,
}

impl Default for ConeShape {
    fn default() -> Self {
        Self {
            lookahead: 50.0,
            half_angle: PI / 6.0,
            turn: PI / 4.0,
        }
    }
}
