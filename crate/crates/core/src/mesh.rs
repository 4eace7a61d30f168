//! Structured quadrilateral grid with bilinear (Q1) degrees of freedom.
//!
//! Cells are numbered `c = i + nx·j`. Discontinuous dofs are `4c + a` with
//! local node `a = ax + 2·ay` (`ax`, `ay` ∈ {0, 1} select the left/right and
//! bottom/top corner). Continuous nodes are `i + (nx+1)·j`.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DofFlavor {
    Discontinuous,
    Continuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    /// Local nodes of a cell on this side, ordered along the face.
    pub fn local_nodes(self) -> [usize; 2] {
        match self {
            Side::Left => [0, 2],
            Side::Right => [1, 3],
            Side::Bottom => [0, 1],
            Side::Top => [2, 3],
        }
    }

    /// 0 for faces normal to x, 1 for faces normal to y.
    pub fn axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaceKind {
    /// `minus` is the left/bottom cell; the normal points from it into `plus`.
    Interior { minus: usize, plus: usize },
    Boundary { cell: usize, side: Side },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub kind: FaceKind,
    /// Unit normal: +x/+y for interior faces, outward on the boundary.
    pub normal: [f64; 2],
    pub axis: usize,
    pub length: f64,
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub flavor: DofFlavor,
    pub faces: Vec<Face>,
    /// Per cell: `(face index, orientation sense)` for left, right, bottom,
    /// top. Sense is +1 when the face normal points out of the cell.
    pub cell_faces: Vec<[(usize, f64); 4]>,
}

impl Grid {
    pub fn new(
        nx: usize,
        ny: usize,
        origin: [f64; 2],
        extent: [f64; 2],
        flavor: DofFlavor,
    ) -> Result<Grid> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config(format!("grid needs nx, ny >= 1 (got {nx} x {ny})")));
        }
        if !(extent[0] > 0.0 && extent[1] > 0.0) || !extent[0].is_finite() || !extent[1].is_finite() {
            return Err(Error::Config(format!(
                "grid extent must be positive (got {} x {})",
                extent[0], extent[1]
            )));
        }
        let dx = extent[0] / nx as f64;
        let dy = extent[1] / ny as f64;
        let mut faces = Vec::new();
        let ncell = nx * ny;
        let mut cell_faces = alloc::vec![[(usize::MAX, 0.0); 4]; ncell];

        // x-normal faces, column by column of face positions.
        for j in 0..ny {
            for i in 0..=nx {
                let kind = if i == 0 {
                    FaceKind::Boundary {
                        cell: j * nx,
                        side: Side::Left,
                    }
                } else if i == nx {
                    FaceKind::Boundary {
                        cell: nx - 1 + j * nx,
                        side: Side::Right,
                    }
                } else {
                    FaceKind::Interior {
                        minus: i - 1 + j * nx,
                        plus: i + j * nx,
                    }
                };
                push_face(&mut faces, &mut cell_faces, kind, 0, dy);
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let kind = if j == 0 {
                    FaceKind::Boundary {
                        cell: i,
                        side: Side::Bottom,
                    }
                } else if j == ny {
                    FaceKind::Boundary {
                        cell: i + (ny - 1) * nx,
                        side: Side::Top,
                    }
                } else {
                    FaceKind::Interior {
                        minus: i + (j - 1) * nx,
                        plus: i + j * nx,
                    }
                };
                push_face(&mut faces, &mut cell_faces, kind, 1, dx);
            }
        }
        Ok(Grid {
            nx,
            ny,
            x0: origin[0],
            y0: origin[1],
            dx,
            dy,
            flavor,
            faces,
            cell_faces,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_dofs(&self) -> usize {
        match self.flavor {
            DofFlavor::Discontinuous => 4 * self.n_cells(),
            DofFlavor::Continuous => self.n_nodes(),
        }
    }

    /// Continuous node count `(nx+1)(ny+1)`.
    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.cell_ij(c);
        [
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
        ]
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn dg_dof(&self, c: usize, a: usize) -> usize {
        4 * c + a
    }

    pub fn cg_node(&self, i: usize, j: usize) -> usize {
        i + (self.nx + 1) * j
    }

    /// Continuous node of local corner `a` of cell `c`.
    pub fn cg_dof(&self, c: usize, a: usize) -> usize {
        let (i, j) = self.cell_ij(c);
        self.cg_node(i + (a & 1), j + (a >> 1))
    }

    /// Global dof of local corner `a` of cell `c` in this grid's flavor.
    pub fn local_dof(&self, c: usize, a: usize) -> usize {
        match self.flavor {
            DofFlavor::Discontinuous => self.dg_dof(c, a),
            DofFlavor::Continuous => self.cg_dof(c, a),
        }
    }

    pub fn node_position(&self, n: usize) -> [f64; 2] {
        let i = n % (self.nx + 1);
        let j = n / (self.nx + 1);
        [self.x0 + i as f64 * self.dx, self.y0 + j as f64 * self.dy]
    }

    /// Neighbor across `side`, if any.
    pub fn neighbor(&self, c: usize, side: Side) -> Option<usize> {
        let (i, j) = self.cell_ij(c);
        match side {
            Side::Left => (i > 0).then(|| c - 1),
            Side::Right => (i + 1 < self.nx).then(|| c + 1),
            Side::Bottom => (j > 0).then(|| c - self.nx),
            Side::Top => (j + 1 < self.ny).then(|| c + self.nx),
        }
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.dx * self.nx as f64, self.dy * self.ny as f64]
    }

    /// The same grid with the other dof flavor.
    pub fn with_flavor(&self, flavor: DofFlavor) -> Grid {
        let mut g = self.clone();
        g.flavor = flavor;
        g
    }
}

fn side_slot(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
        Side::Bottom => 2,
        Side::Top => 3,
    }
}

fn push_face(
    faces: &mut Vec<Face>,
    cell_faces: &mut [[(usize, f64); 4]],
    kind: FaceKind,
    axis: usize,
    length: f64,
) {
    let f = faces.len();
    let normal = match kind {
        FaceKind::Boundary { side, .. } => side.outward_normal(),
        FaceKind::Interior { .. } => {
            if axis == 0 {
                [1.0, 0.0]
            } else {
                [0.0, 1.0]
            }
        }
    };
    match kind {
        FaceKind::Boundary { cell, side } => cell_faces[cell][side_slot(side)] = (f, 1.0),
        FaceKind::Interior { minus, plus } => {
            let (out_side, in_side) = if axis == 0 {
                (Side::Right, Side::Left)
            } else {
                (Side::Top, Side::Bottom)
            };
            cell_faces[minus][side_slot(out_side)] = (f, 1.0);
            cell_faces[plus][side_slot(in_side)] = (f, -1.0);
        }
    }
    faces.push(Face {
        kind,
        normal,
        axis,
        length,
    });
}

/// Axis-aligned painting primitives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Covers `x0 <= x < x1`, `y0 <= y < y1`.
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        material: usize,
    },
    /// Covers points strictly inside the circle.
    Disc {
        cx: f64,
        cy: f64,
        radius: f64,
        material: usize,
    },
}

impl Shape {
    pub fn material(&self) -> usize {
        match *self {
            Shape::Rect { material, .. } | Shape::Disc { material, .. } => material,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1, .. } => x0 <= p[0] && p[0] < x1 && y0 <= p[1] && p[1] < y1,
            Shape::Disc { cx, cy, radius, .. } => {
                let (ex, ey) = (p[0] - cx, p[1] - cy);
                ex * ex + ey * ey < radius * radius
            }
        }
    }
}

/// Per-cell material ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaterialMap {
    pub ids: Vec<usize>,
}

/// Paints `shapes` in order over `background`; the last shape containing a
/// cell center wins.
pub fn assign_materials(
    grid: &Grid,
    background: usize,
    shapes: &[Shape],
    n_materials: usize,
) -> Result<MaterialMap> {
    if background >= n_materials {
        return Err(Error::Config(format!(
            "background material id {background} out of range (table has {n_materials})"
        )));
    }
    if let Some(s) = shapes.iter().find(|s| s.material() >= n_materials) {
        return Err(Error::Config(format!(
            "shape material id {} out of range (table has {n_materials})",
            s.material()
        )));
    }
    let ids = (0..grid.n_cells())
        .map(|c| {
            let p = grid.cell_center(c);
            shapes
                .iter()
                .rev()
                .find(|s| s.contains(p))
                .map_or(background, Shape::material)
        })
        .collect();
    Ok(MaterialMap { ids })
}
