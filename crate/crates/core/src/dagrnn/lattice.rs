use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sweep direction of one acyclic decomposition of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    SE,
    SW,
    NW,
    NE,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::SE, Direction::SW, Direction::NW, Direction::NE];

    /// `(row step, column step)` of the information flow.
    pub fn flow(self) -> (isize, isize) {
        match self {
            Direction::SE => (1, 1),
            Direction::SW => (1, -1),
            Direction::NW => (-1, -1),
            Direction::NE => (-1, 1),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::SE => 0,
            Direction::SW => 1,
            Direction::NW => 2,
            Direction::NE => 3,
        }
    }

    /// Image under a left-right flip.
    pub fn mirror_horizontal(self) -> Self {
        match self {
            Direction::SE => Direction::SW,
            Direction::SW => Direction::SE,
            Direction::NW => Direction::NE,
            Direction::NE => Direction::NW,
        }
    }

    /// Image under a top-bottom flip.
    pub fn mirror_vertical(self) -> Self {
        match self {
            Direction::SE => Direction::NE,
            Direction::NE => Direction::SE,
            Direction::SW => Direction::NW,
            Direction::NW => Direction::SW,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::SE => "se",
            Direction::SW => "sw",
            Direction::NW => "nw",
            Direction::NE => "ne",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which lattice neighbours feed a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Vertical and horizontal upstream neighbours.
    Four,
    /// Adds the upstream diagonal neighbour.
    #[default]
    Eight,
}

impl Connectivity {
    pub fn max_predecessors(self) -> usize {
        match self {
            Connectivity::Four => 2,
            Connectivity::Eight => 3,
        }
    }
}

/// One directed acyclic graph over an `H × W` grid. Vertex ids are raster
/// indices `row · W + col`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeDag {
    height: usize,
    width: usize,
    direction: Direction,
    connectivity: Connectivity,
    topo_order: Vec<usize>,
    predecessors: Vec<Vec<usize>>,
    successors: Vec<Vec<usize>>,
}

impl LatticeDag {
    pub fn new(height: usize, width: usize, direction: Direction, connectivity: Connectivity) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Geometry(format!(
                "lattice must be at least 1x1, got {height}x{width}"
            )));
        }
        let (dy, dx) = direction.flow();
        let n = height * width;
        let mut predecessors = vec![Vec::new(); n];
        let mut successors = vec![Vec::new(); n];
        let inside = |r: isize, c: isize| {
            r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width
        };
        for r in 0..height as isize {
            for c in 0..width as isize {
                let v = r as usize * width + c as usize;
                let mut offsets = vec![(dy, 0), (0, dx)];
                if connectivity == Connectivity::Eight {
                    offsets.push((dy, dx));
                }
                for (oy, ox) in offsets {
                    let (pr, pc) = (r - oy, c - ox);
                    if inside(pr, pc) {
                        let u = pr as usize * width + pc as usize;
                        predecessors[v].push(u);
                        successors[u].push(v);
                    }
                }
            }
        }
        let rows: Vec<usize> = if dy > 0 {
            (0..height).collect()
        } else {
            (0..height).rev().collect()
        };
        let cols: Vec<usize> = if dx > 0 {
            (0..width).collect()
        } else {
            (0..width).rev().collect()
        };
        let topo_order = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| r * width + c))
            .collect();
        Ok(LatticeDag {
            height,
            width,
            direction,
            connectivity,
            topo_order,
            predecessors,
            successors,
        })
    }

    /// Replaces the processing order, rejecting anything that is not a
    /// topological sort of this graph.
    pub fn with_order(mut self, order: Vec<usize>) -> Result<Self> {
        let n = self.len();
        let mut position = vec![usize::MAX; n];
        for (i, &v) in order.iter().enumerate() {
            if v >= n || position[v] != usize::MAX {
                return Err(Error::Geometry("order is not a permutation of the vertices".into()));
            }
            position[v] = i;
        }
        if order.len() != n {
            return Err(Error::Geometry("order is not a permutation of the vertices".into()));
        }
        for v in 0..n {
            if self.predecessors[v].iter().any(|&u| position[u] > position[v]) {
                return Err(Error::Geometry(format!(
                    "vertex {v} precedes one of its predecessors"
                )));
            }
        }
        self.topo_order = order;
        Ok(self)
    }

    /// Anti-diagonal wavefront order: a valid alternative to the raster sweep.
    pub fn wavefront_order(&self) -> Vec<usize> {
        let (dy, dx) = self.direction.flow();
        let depth = |v: usize| {
            let (r, c) = (v / self.width, v % self.width);
            let a = if dy > 0 { r } else { self.height - 1 - r };
            let b = if dx > 0 { c } else { self.width - 1 - c };
            (a + b, std::cmp::Reverse(b))
        };
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&v| depth(v));
        order
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn predecessors(&self, v: usize) -> &[usize] {
        &self.predecessors[v]
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.successors[v]
    }

    pub fn vertex(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, v: usize) -> (usize, usize) {
        (v / self.width, v % self.width)
    }

    /// All directed edges `(from, to)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.predecessors
            .iter()
            .enumerate()
            .flat_map(|(v, preds)| preds.iter().map(move |&u| (u, v)))
    }

    pub fn edge_count(&self) -> usize {
        self.predecessors.iter().map(Vec::len).sum()
    }
}

/// The four sweeps over one lattice size, indexed by [`Direction::index`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagSet {
    dags: [LatticeDag; 4],
}

impl DagSet {
    pub fn new(height: usize, width: usize, connectivity: Connectivity) -> Result<Self> {
        let build = |d| LatticeDag::new(height, width, d, connectivity);
        Ok(DagSet {
            dags: [
                build(Direction::SE)?,
                build(Direction::SW)?,
                build(Direction::NW)?,
                build(Direction::NE)?,
            ],
        })
    }

    /// Assembles a set from individually built graphs; they must share the
    /// lattice size and appear in [`Direction::ALL`] order.
    pub fn from_dags(dags: [LatticeDag; 4]) -> Result<Self> {
        for (m, dag) in dags.iter().enumerate() {
            if dag.direction() != Direction::ALL[m] {
                return Err(Error::Geometry(format!(
                    "direction set incomplete: slot {m} holds {} instead of {}",
                    dag.direction(),
                    Direction::ALL[m]
                )));
            }
            if (dag.height(), dag.width()) != (dags[0].height(), dags[0].width()) {
                return Err(Error::Geometry("lattice sizes differ across directions".into()));
            }
        }
        Ok(DagSet { dags })
    }

    pub fn dags(&self) -> &[LatticeDag; 4] {
        &self.dags
    }

    pub fn get(&self, d: Direction) -> &LatticeDag {
        &self.dags[d.index()]
    }

    pub fn height(&self) -> usize {
        self.dags[0].height()
    }

    pub fn width(&self) -> usize {
        self.dags[0].width()
    }

    pub fn connectivity(&self) -> Connectivity {
        self.dags[0].connectivity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_vertex() {
        for d in Direction::ALL {
            let g = LatticeDag::new(1, 1, d, Connectivity::Eight).unwrap();
            assert_eq!(g.edge_count(), 0);
            assert!(g.predecessors(0).is_empty());
        }
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(LatticeDag::new(0, 3, Direction::SE, Connectivity::Four).is_err());
        assert!(LatticeDag::new(3, 0, Direction::NE, Connectivity::Eight).is_err());
    }

    #[test]
    fn se_two_by_two() {
        let g = LatticeDag::new(2, 2, Direction::SE, Connectivity::Four).unwrap();
        let mut p = g.predecessors(g.vertex(1, 1)).to_vec();
        p.sort();
        assert_eq!(p, vec![g.vertex(0, 1), g.vertex(1, 0)]);
        assert_eq!(g.edge_count(), 4);
    }

    #[test]
    fn se_eight_connected_center() {
        let g = LatticeDag::new(3, 3, Direction::SE, Connectivity::Eight).unwrap();
        let mut p = g.predecessors(g.vertex(1, 1)).to_vec();
        p.sort();
        assert_eq!(p, vec![g.vertex(0, 0), g.vertex(0, 1), g.vertex(1, 0)]);
    }

    #[test]
    fn mirror_pairs() {
        for d in Direction::ALL {
            assert_eq!(d.mirror_horizontal().mirror_horizontal(), d);
            assert_eq!(d.mirror_vertical().mirror_vertical(), d);
            let (dy, dx) = d.flow();
            assert_eq!(d.mirror_horizontal().flow(), (dy, -dx));
            assert_eq!(d.mirror_vertical().flow(), (-dy, dx));
        }
    }

    #[test]
    fn wavefront_is_accepted_and_bad_orders_rejected() {
        let g = LatticeDag::new(3, 4, Direction::NW, Connectivity::Eight).unwrap();
        let wave = g.wavefront_order();
        assert_ne!(wave, g.topo_order());
        assert!(g.clone().with_order(wave).is_ok());
        let mut reversed = g.topo_order().to_vec();
        reversed.reverse();
        assert!(g.clone().with_order(reversed).is_err());
        assert!(g.with_order(vec![0, 1, 2]).is_err());
    }

    #[test]
    fn dagset_slot_order_enforced() {
        let mk = |d| LatticeDag::new(2, 3, d, Connectivity::Four).unwrap();
        let ok = [mk(Direction::SE), mk(Direction::SW), mk(Direction::NW), mk(Direction::NE)];
        assert!(DagSet::from_dags(ok).is_ok());
        let bad = [mk(Direction::SE), mk(Direction::SE), mk(Direction::NW), mk(Direction::NE)];
        assert!(DagSet::from_dags(bad).is_err());
    }
}
