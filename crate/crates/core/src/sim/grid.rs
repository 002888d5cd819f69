//! Dense-box aggregate engine.
//!
//! Counts live in one flat array over the box `[-R, R]^d`. Occupied sites at
//! time `t` all have parity `t` and their destinations parity `t + 1`, so a
//! step reads and clears one parity class while writing the other, in
//! place. Only the bounding box of the occupied sites is scanned; the box
//! grows when the population reaches its edge.

use rand::RngCore;

use crate::env::EnvironmentField;
use crate::{Error, Result, Site, MAX_DIM};

use super::{retime, scatter_site, OccupancyState, Sampler, SiteCounts};

/// Default limit on the number of cells in the box.
pub const DEFAULT_CELL_CAP: usize = 64_000_000;
const INITIAL_RADIUS: i32 = 4;

#[derive(Clone, Debug)]
pub struct Grid {
    dim: usize,
    radius: i32,
    strides: [usize; MAX_DIM],
    cells: Vec<u128>,
    lo: [i32; MAX_DIM],
    hi: [i32; MAX_DIM],
    t: u64,
    total: u128,
    occupied: usize,
    cell_cap: usize,
}

fn box_cells(dim: usize, radius: i32) -> Option<usize> {
    let width = 2 * radius as usize + 1;
    (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(width))
}

impl Grid {
    /// One particle at the origin at time 0.
    pub fn new(dim: usize, cell_cap: usize) -> Result<Grid> {
        assert!((1..=MAX_DIM).contains(&dim));
        let mut grid = Grid::empty(dim, INITIAL_RADIUS, cell_cap)?;
        let idx = grid.index(&[0; MAX_DIM]);
        grid.cells[idx] = 1;
        grid.total = 1;
        grid.occupied = 1;
        Ok(grid)
    }

    fn empty(dim: usize, radius: i32, cell_cap: usize) -> Result<Grid> {
        let cells = box_cells(dim, radius)
            .filter(|&n| n <= cell_cap)
            .ok_or_else(|| Error::Cap(format!("a box of radius {radius} in d={dim} exceeds {cell_cap} cells")))?;
        let width = 2 * radius as usize + 1;
        let mut strides = [0; MAX_DIM];
        let mut s = 1;
        for axis in (0..dim).rev() {
            strides[axis] = s;
            s *= width;
        }
        Ok(Grid {
            dim,
            radius,
            strides,
            cells: vec![0; cells],
            lo: [0; MAX_DIM],
            hi: [0; MAX_DIM],
            t: 0,
            total: 0,
            occupied: 0,
            cell_cap,
        })
    }

    pub fn from_occupancy(state: &OccupancyState, cell_cap: usize) -> Result<Grid> {
        let reach = state
            .counts
            .keys()
            .flat_map(|x| x.coords(state.dim).iter().map(|c| c.abs()).collect::<Vec<_>>())
            .max()
            .unwrap_or(0);
        let mut grid = Grid::empty(state.dim, (reach + 1).max(INITIAL_RADIUS), cell_cap)?;
        grid.t = state.t;
        let mut first = true;
        for (x, &c) in &state.counts {
            let mut coords = [0; MAX_DIM];
            coords[..state.dim].copy_from_slice(x.coords(state.dim));
            let idx = grid.index(&coords);
            grid.cells[idx] = c;
            grid.total = grid.total.checked_add(c).ok_or(Error::Overflow { t: state.t, what: "total".into() })?;
            grid.occupied += 1;
            for (axis, &c) in coords.iter().enumerate().take(state.dim) {
                if first || c < grid.lo[axis] {
                    grid.lo[axis] = c;
                }
                if first || c > grid.hi[axis] {
                    grid.hi[axis] = c;
                }
            }
            first = false;
        }
        Ok(grid)
    }

    #[inline]
    fn index(&self, coords: &[i32; MAX_DIM]) -> usize {
        (0..self.dim).map(|a| (coords[a] + self.radius) as usize * self.strides[a]).sum()
    }

    pub fn radius(&self) -> i32 {
        self.radius
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    pub fn to_occupancy(&self) -> OccupancyState {
        let mut counts = std::collections::BTreeMap::new();
        self.visit(|x, c| {
            counts.insert(Site::new(x), c);
        });
        OccupancyState { t: self.t, dim: self.dim, counts }
    }

    fn ensure_room(&mut self) -> Result<()> {
        let reach = (0..self.dim).map(|a| self.lo[a].abs().max(self.hi[a].abs())).max().unwrap_or(0) + 1;
        if reach <= self.radius {
            return Ok(());
        }
        let radius = reach.max(self.radius + (self.radius / 2).max(INITIAL_RADIUS));
        let radius = if box_cells(self.dim, radius).is_some_and(|n| n <= self.cell_cap) { radius } else { reach };
        let mut grown = Grid::empty(self.dim, radius, self.cell_cap)?;
        grown.t = self.t;
        grown.lo = self.lo;
        grown.hi = self.hi;
        grown.total = self.total;
        grown.occupied = self.occupied;
        let mut moves = Vec::with_capacity(self.occupied);
        self.scan(|coords, idx| moves.push((*coords, idx)));
        for (coords, idx) in moves {
            let to = grown.index(&coords);
            grown.cells[to] = self.cells[idx];
        }
        *self = grown;
        Ok(())
    }

    fn cursor(&self) -> Cursor {
        Cursor::new(self)
    }

    /// Calls `f(coords, index)` for every occupied cell.
    fn scan(&self, mut f: impl FnMut(&[i32; MAX_DIM], usize)) {
        let mut cur = self.cursor();
        while let Some(idx) = cur.next(self) {
            if self.cells[idx] != 0 {
                f(&cur.coords, idx);
            }
        }
    }

    /// Advances one time step.
    pub fn step<R: RngCore>(&mut self, field: &EnvironmentField, sampler: &mut Sampler<'_, R>) -> Result<()> {
        if self.occupied == 0 {
            self.t += 1;
            return Ok(());
        }
        self.ensure_room()?;
        let d = self.dim;
        let t = self.t;
        let mut src_lo = [0; MAX_DIM];
        let mut src_hi = [0; MAX_DIM];
        src_lo[..d].fill(i32::MAX);
        src_hi[..d].fill(i32::MIN);
        let mut total = 0u128;
        let mut occupied = 0usize;
        let mut dirs = [0u128; 2 * MAX_DIM];
        let strides = self.strides;
        let slice = field.slice(t);
        let mut cur = self.cursor();
        while let Some(idx) = cur.next(self) {
            if self.cells[idx] == 0 {
                continue;
            }
            let n = std::mem::take(&mut self.cells[idx]);
            let coords = cur.coords;
            let site = Site::from_array(coords);
            let pmf = slice.pmf_at(&site);
            let cells = &mut self.cells;
            let mut emitted = false;
            scatter_site(n, pmf, d, sampler, &mut dirs, |dir, children| {
                let to = if dir % 2 == 0 { idx + strides[dir / 2] } else { idx - strides[dir / 2] };
                let overflow = || Error::Overflow { t: t + 1, what: format!("count at {:?}", site.step(dir)) };
                total = total.checked_add(children).ok_or_else(overflow)?;
                let slot = &mut cells[to];
                occupied += (*slot == 0) as usize;
                *slot = slot.checked_add(children).ok_or_else(overflow)?;
                emitted = true;
                Ok(())
            })
            .map_err(|e| retime(e, t + 1))?;
            if emitted {
                for a in 0..d {
                    src_lo[a] = src_lo[a].min(coords[a]);
                    src_hi[a] = src_hi[a].max(coords[a]);
                }
            }
        }
        self.t = t + 1;
        self.total = total;
        self.occupied = occupied;
        if occupied > 0 {
            // destinations lie within one step of the emitting sites
            for a in 0..d {
                self.lo[a] = src_lo[a] - 1;
                self.hi[a] = src_hi[a] + 1;
            }
        } else {
            self.lo = [0; MAX_DIM];
            self.hi = [0; MAX_DIM];
        }
        Ok(())
    }
}

/// Walks the cells of parity `t` in the bounding box in lexicographic order.
struct Cursor {
    coords: [i32; MAX_DIM],
    base: usize,
    started: bool,
    done: bool,
}

impl Cursor {
    fn new(grid: &Grid) -> Cursor {
        Cursor { coords: grid.lo, base: 0, started: false, done: grid.occupied == 0 }
    }

    fn start_row(&mut self, grid: &Grid) {
        let inner = grid.dim - 1;
        let partial: i64 = self.coords[..inner].iter().map(|&v| v as i64).sum();
        let mut x = grid.lo[inner];
        if (partial + x as i64 - grid.t as i64).rem_euclid(2) != 0 {
            x += 1;
        }
        self.coords[inner] = x;
        self.base = (0..inner).map(|a| (self.coords[a] + grid.radius) as usize * grid.strides[a]).sum();
    }

    #[inline]
    fn next(&mut self, grid: &Grid) -> Option<usize> {
        if self.done {
            return None;
        }
        let inner = grid.dim - 1;
        if !self.started {
            self.started = true;
            self.coords[inner] = grid.lo[inner];
            self.start_row(grid);
        } else {
            self.coords[inner] += 2;
        }
        while self.coords[inner] > grid.hi[inner] {
            let mut axis = inner;
            loop {
                if axis == 0 {
                    self.done = true;
                    return None;
                }
                axis -= 1;
                self.coords[axis] += 1;
                if self.coords[axis] <= grid.hi[axis] {
                    break;
                }
                self.coords[axis] = grid.lo[axis];
            }
            self.start_row(grid);
        }
        Some(self.base + (self.coords[inner] + grid.radius) as usize)
    }
}

impl SiteCounts for Grid {
    fn time(&self) -> u64 {
        self.t
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn total(&self) -> u128 {
        self.total
    }

    fn visit<F: FnMut(&[i32], u128)>(&self, mut f: F) {
        let d = self.dim;
        self.scan(|c, idx| f(&c[..d], self.cells[idx]));
    }
}
