//! Pitch discretization.
//!
//! Coordinates live in the normalized frame `[0, 1]²` with the attack
//! running left to right: `x = 0` is the own goal line, `x = 1` the
//! attacking goal line. States are numbered row-major with `x` varying
//! fastest.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rectangular `m_x × m_y` partition of the pitch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct PitchGrid {
    m_x: usize,
    m_y: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    m_x: usize,
    m_y: usize,
}

impl TryFrom<GridRepr> for PitchGrid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        PitchGrid::new(r.m_x, r.m_y)
    }
}

impl From<PitchGrid> for GridRepr {
    fn from(g: PitchGrid) -> Self {
        GridRepr { m_x: g.m_x, m_y: g.m_y }
    }
}

/// Index of a game state, `0 ≤ index < M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A location in the normalized pitch frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchPoint {
    pub x: f64,
    pub y: f64,
}

impl PitchPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Clamps both coordinates into `[0, 1]`. NaN maps to 0.
    pub fn clamped(x: f64, y: f64) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        Self { x: c(x), y: c(y) }
    }

    fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }
}

impl PitchGrid {
    pub fn new(m_x: usize, m_y: usize) -> Result<Self> {
        if m_x == 0 || m_y == 0 {
            return Err(Error::InvalidGrid(format!("{m_x}x{m_y}: both dimensions must be >= 1")));
        }
        Ok(Self { m_x, m_y })
    }

    pub fn m_x(&self) -> usize {
        self.m_x
    }

    pub fn m_y(&self) -> usize {
        self.m_y
    }

    /// Number of game states `M = m_x · m_y`.
    pub fn n_states(&self) -> usize {
        self.m_x * self.m_y
    }

    /// Maps a point to the cell containing it. Points on the far edges
    /// (`x = 1` or `y = 1`) fall into the last cell of that axis.
    pub fn state_of(&self, p: PitchPoint) -> Result<StateId> {
        if !p.in_unit_square() {
            return Err(Error::OutOfPitch { x: p.x, y: p.y });
        }
        let ix = ((p.x * self.m_x as f64).floor() as usize).min(self.m_x - 1);
        let iy = ((p.y * self.m_y as f64).floor() as usize).min(self.m_y - 1);
        Ok(StateId(ix + self.m_x * iy))
    }

    /// Column and row of a state.
    pub fn cell(&self, s: StateId) -> (usize, usize) {
        (s.0 % self.m_x, s.0 / self.m_x)
    }

    pub fn cell_center(&self, s: StateId) -> PitchPoint {
        let (ix, iy) = self.cell(s);
        PitchPoint {
            x: (ix as f64 + 0.5) / self.m_x as f64,
            y: (iy as f64 + 0.5) / self.m_y as f64,
        }
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.n_states()).map(StateId)
    }

    /// The grids used in the error-distribution study, from 8×6 up to 64×48.
    pub fn study_grids() -> Vec<PitchGrid> {
        [
            (8, 6),
            (10, 8),
            (12, 9),
            (14, 11),
            (16, 12),
            (20, 15),
            (24, 18),
            (28, 21),
            (32, 24),
            (40, 30),
            (48, 36),
            (56, 42),
            (64, 48),
        ]
        .into_iter()
        .map(|(x, y)| PitchGrid { m_x: x, m_y: y })
        .collect()
    }
}

impl fmt::Display for PitchGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.m_x, self.m_y)
    }
}

impl FromStr for PitchGrid {
    type Err = Error;

    /// Parses `"16x12"`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::InvalidGrid(format!("{s:?}: expected MXxMY")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidGrid(format!("{s:?}: {v:?} is not a positive integer")))
        };
        PitchGrid::new(parse(a)?, parse(b)?)
    }
}
