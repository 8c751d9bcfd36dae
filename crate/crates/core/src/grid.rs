//! Uniform structured quadrilateral grid on the unit square.
//!
//! Only inner edges are stored. A boundary face has no edge record, so no
//! flux can ever cross it and the no-flux condition holds structurally.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// An inner edge between two axis-neighboring cells.
///
/// `left` is the cell with the smaller coordinate along `axis`; fluxes stored
/// per edge are oriented from `left` to `right`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeRef {
    pub left: usize,
    pub right: usize,
    pub axis: Axis,
    /// Edge length `|e|`.
    pub measure: f64,
    /// Distance between the two cell centers.
    pub distance: f64,
}

impl EdgeRef {
    /// Transmissibility factor `2|e| / d(c, c')` of the two-point flux.
    #[inline]
    pub fn transmissibility(&self) -> f64 {
        2.0 * self.measure / self.distance
    }

    /// The cell across the edge from `cell`, or `None` if `cell` is not an
    /// endpoint.
    pub fn other(&self, cell: usize) -> Option<usize> {
        if cell == self.left {
            Some(self.right)
        } else if cell == self.right {
            Some(self.left)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    edges: Vec<EdgeRef>,
    // CSR-style incidence: edges of cell c are incidence[offsets[c]..offsets[c + 1]].
    offsets: Vec<usize>,
    incidence: Vec<usize>,
}

impl Grid {
    /// Builds the `nx` x `ny` grid on (0,1)^2. Cells are linearized row-major
    /// as `i + nx * j`.
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Dimension { nx, ny });
        }
        let hx = 1.0 / nx as f64;
        let hy = 1.0 / ny as f64;

        let mut edges = Vec::with_capacity((nx - 1) * ny + nx * (ny - 1));
        for j in 0..ny {
            for i in 0..nx - 1 {
                let left = i + nx * j;
                edges.push(EdgeRef {
                    left,
                    right: left + 1,
                    axis: Axis::X,
                    measure: hy,
                    distance: hx,
                });
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx {
                let left = i + nx * j;
                edges.push(EdgeRef {
                    left,
                    right: left + nx,
                    axis: Axis::Y,
                    measure: hx,
                    distance: hy,
                });
            }
        }

        let ncells = nx * ny;
        let mut counts = vec![0usize; ncells];
        for e in &edges {
            counts[e.left] += 1;
            counts[e.right] += 1;
        }
        let mut offsets = Vec::with_capacity(ncells + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let mut fill = offsets[..ncells].to_vec();
        let mut incidence = vec![0usize; offsets[ncells]];
        for (k, e) in edges.iter().enumerate() {
            incidence[fill[e.left]] = k;
            fill[e.left] += 1;
            incidence[fill[e.right]] = k;
            fill[e.right] += 1;
        }

        Ok(Grid {
            nx,
            ny,
            hx,
            hy,
            edges,
            offsets,
            incidence,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Area `|c|` of every cell.
    pub fn cell_measure(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    /// Inverse of [`Grid::index`].
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn center(&self, cell: usize) -> (f64, f64) {
        let (i, j) = self.coords(cell);
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// All inner edges: x-edges row by row, then y-edges.
    pub fn edges(&self) -> &[EdgeRef] {
        &self.edges
    }

    /// Indices into [`Grid::edges`] of the inner edges around `cell`.
    pub fn incident_edges(&self, cell: usize) -> &[usize] {
        &self.incidence[self.offsets[cell]..self.offsets[cell + 1]]
    }

    /// Inner edges incident to `cell`; boundary faces are not reported.
    pub fn neighbors(&self, cell: usize) -> Result<Vec<EdgeRef>> {
        if cell >= self.num_cells() {
            return Err(Error::IndexOutOfRange {
                index: cell,
                len: self.num_cells(),
            });
        }
        Ok(self
            .incident_edges(cell)
            .iter()
            .map(|&k| self.edges[k])
            .collect())
    }
}
