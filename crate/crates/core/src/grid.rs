//! Gridworld layouts and their compilation into tabular MDPs.
//!
//! Layout text format: a header line `slip=<float> gamma=<float>` followed by
//! one line per grid row, one character per cell:
//! `S` start, `G` goal, `W` waypoint, `L` lava, `#` wall, `.` empty.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array3};

use crate::error::{LabError, Result};
use crate::mdp::TabularMdp;
use crate::reward::{CellRole, RewardModel, ThetaGrid};

/// Up, down, left, right, stay.
pub const N_ACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Stay = 4,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] =
        [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];
    pub const CARDINAL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    fn offset(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    width: usize,
    height: usize,
    /// Row-major, `y * width + x`.
    cells: Vec<CellRole>,
    slip_prob: f64,
    gamma: f64,
}

/// The environments shipped with the crate. They share size and hazards
/// and differ in where the waypoint sits.
pub const BUILTIN_ENVIRONMENTS: [&str; 3] = ["A", "B", "C"];

const ENV_A: &str = include_str!("../layouts/env_a.txt");
const ENV_B: &str = include_str!("../layouts/env_b.txt");
const ENV_C: &str = include_str!("../layouts/env_c.txt");

impl GridLayout {
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<CellRole>,
        slip_prob: f64,
        gamma: f64,
    ) -> Result<Self> {
        let layout = Self {
            width,
            height,
            cells,
            slip_prob,
            gamma,
        };
        layout.check()?;
        Ok(layout)
    }

    pub fn builtin(id: &str) -> Result<Self> {
        match id.to_ascii_uppercase().as_str() {
            "A" => ENV_A.parse(),
            "B" => ENV_B.parse(),
            "C" => ENV_C.parse(),
            other => Err(LabError::Config(format!("unknown environment '{other}'"))),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    /// A builtin id (`A`, `B`, `C`) or a path to a layout file.
    pub fn resolve(id_or_path: &str) -> Result<Self> {
        if BUILTIN_ENVIRONMENTS
            .iter()
            .any(|b| b.eq_ignore_ascii_case(id_or_path))
        {
            Self::builtin(id_or_path)
        } else {
            Self::from_file(Path::new(id_or_path))
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[CellRole] {
        &self.cells
    }

    pub fn slip_prob(&self) -> f64 {
        self.slip_prob
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_slip(&self, slip_prob: f64) -> Result<Self> {
        Self::new(self.width, self.height, self.cells.clone(), slip_prob, self.gamma)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.width, self.height, self.cells.clone(), self.slip_prob, gamma)
    }

    pub fn state(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, state: usize) -> (usize, usize) {
        (state % self.width, state / self.width)
    }

    pub fn role(&self, state: usize) -> CellRole {
        self.cells[state]
    }

    pub fn find(&self, role: CellRole) -> Option<usize> {
        self.cells.iter().position(|&c| c == role)
    }

    fn check(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(LabError::Layout(format!(
                "zero dimension: {}x{}",
                self.width, self.height
            )));
        }
        if self.cells.len() != self.width * self.height {
            return Err(LabError::Layout(format!(
                "{} cells for a {}x{} grid",
                self.cells.len(),
                self.width,
                self.height
            )));
        }
        for (role, name) in [
            (CellRole::Start, "start"),
            (CellRole::Goal, "goal"),
            (CellRole::Waypoint, "waypoint"),
        ] {
            let count = self.cells.iter().filter(|&&c| c == role).count();
            if count != 1 {
                return Err(LabError::Layout(format!(
                    "layout needs exactly one {name} cell, found {count}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(LabError::Layout(format!(
                "slip probability {} outside [0, 1)",
                self.slip_prob
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(LabError::Layout(format!("discount {} outside (0, 1)", self.gamma)));
        }
        Ok(())
    }

    /// Where a deterministic move from `state` lands. Walls and the border
    /// keep the agent in place.
    fn destination(&self, state: usize, action: Action) -> usize {
        let (x, y) = self.coords(state);
        let (dx, dy) = action.offset();
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
            return state;
        }
        let next = self.state(nx as usize, ny as usize);
        if self.cells[next] == CellRole::Wall {
            state
        } else {
            next
        }
    }
}

impl FromStr for GridLayout {
    type Err = LabError;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| LabError::Layout("empty layout".into()))?;
        let mut slip = None;
        let mut gamma = None;
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| LabError::Layout(format!("malformed header field '{field}'")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| LabError::Layout(format!("header value '{value}' is not a number")))?;
            match key {
                "slip" => slip = Some(value),
                "gamma" => gamma = Some(value),
                other => return Err(LabError::Layout(format!("unknown header key '{other}'"))),
            }
        }
        let slip = slip.ok_or_else(|| LabError::Layout("header is missing slip=".into()))?;
        let gamma = gamma.ok_or_else(|| LabError::Layout("header is missing gamma=".into()))?;

        let mut cells = Vec::new();
        let mut width = None;
        let mut height = 0;
        for line in lines {
            let row: Vec<CellRole> = line
                .chars()
                .map(|c| {
                    CellRole::from_char(c)
                        .ok_or_else(|| LabError::Layout(format!("unknown cell character '{c}'")))
                })
                .collect::<Result<_>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(LabError::Layout(format!(
                        "row {height} has {} cells, expected {w}",
                        row.len()
                    )))
                }
                Some(_) => {}
            }
            cells.extend(row);
            height += 1;
        }
        GridLayout::new(width.unwrap_or(0), height, cells, slip, gamma)
    }
}

impl fmt::Display for GridLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "slip={} gamma={}", self.slip_prob, self.gamma)?;
        for row in self.cells.chunks(self.width) {
            let line: String = row.iter().map(|c| c.to_char()).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Default reward parameter grid: [1, 4] at 64 points.
pub fn default_theta_grid() -> ThetaGrid {
    ThetaGrid {
        lower: 1.0,
        upper: 4.0,
        resolution: 64,
    }
}

/// Compiles a layout with the default θ grid.
pub fn build_gridworld(layout: &GridLayout) -> Result<(TabularMdp, RewardModel)> {
    build_gridworld_with_grid(layout, default_theta_grid())
}

pub fn build_gridworld_with_grid(
    layout: &GridLayout,
    theta_grid: ThetaGrid,
) -> Result<(TabularMdp, RewardModel)> {
    layout.check()?;
    let n = layout.width * layout.height;
    let slip = layout.slip_prob;
    let mut transition = Array3::<f64>::zeros((n, N_ACTIONS, n));
    let mut absorbing = vec![false; n];

    for s in 0..n {
        let role = layout.cells[s];
        if role.is_absorbing() || role == CellRole::Wall {
            absorbing[s] = true;
            for a in 0..N_ACTIONS {
                transition[[s, a, s]] = 1.0;
            }
            continue;
        }
        for action in Action::CARDINAL {
            let a = action as usize;
            transition[[s, a, layout.destination(s, action)]] += 1.0 - slip;
            if slip > 0.0 {
                for other in Action::CARDINAL.into_iter().filter(|&o| o != action) {
                    transition[[s, a, layout.destination(s, other)]] += slip / 3.0;
                }
            }
        }
        transition[[s, Action::Stay as usize, s]] = 1.0;
    }

    let start = layout
        .find(CellRole::Start)
        .ok_or_else(|| LabError::Layout("layout has no start cell".into()))?;
    let mut initial = Array1::zeros(n);
    initial[start] = 1.0;

    let mdp = TabularMdp::new(transition, layout.gamma, initial, absorbing)?;
    let reward = RewardModel::new(layout.cells.clone(), theta_grid)?;
    Ok((mdp, reward))
}
