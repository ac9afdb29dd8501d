//! Discrete cylinder `M × (−h, 0)` with `M = [0, Lx] × [0, Ly]`.
//!
//! Every prognostic quantity lives at cell centres. Side walls are handled by
//! one ghost layer filled from a [`BoundaryKind`] rule; vertical closures are
//! applied by the individual operators. Interface-located quantities (`w`,
//! vertical derivatives) use [`WField`] with `nz + 1` levels, level 0 being the
//! bottom `z = −h`.
//!
//! Layout is row-major with `x` fastest, then `y`, then `z`.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lx: f64,
    pub ly: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl GridSpec {
    pub fn new(lx: f64, ly: f64, h: f64, nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && h > 0.0) || !(lx.is_finite() && ly.is_finite() && h.is_finite())
        {
            return Err(Error::InvalidGrid(format!(
                "extents must be positive and finite (Lx={lx}, Ly={ly}, h={h})"
            )));
        }
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidGrid(format!(
                "need nx, ny >= 4 for the stencils (got {nx}x{ny})"
            )));
        }
        if nz < 2 {
            return Err(Error::InvalidGrid(format!("need nz >= 2 (got {nz})")));
        }
        Ok(Self {
            lx,
            ly,
            h,
            nx,
            ny,
            nz,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
            dz: h / nz as f64,
        })
    }

    /// Unit cube `[0,1]² × (−1,0)`.
    pub fn unit(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        Self::new(1.0, 1.0, 1.0, nx, ny, nz)
    }

    /// Same extents, every cell count doubled.
    pub fn refined(&self) -> Self {
        Self::new(self.lx, self.ly, self.h, 2 * self.nx, 2 * self.ny, 2 * self.nz)
            .expect("refining a valid grid stays valid")
    }

    #[inline]
    pub fn xc(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    #[inline]
    pub fn yc(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy
    }

    /// Height of cell centre `k`.
    #[inline]
    pub fn zc(&self, k: usize) -> f64 {
        -self.h + (k as f64 + 0.5) * self.dz
    }

    /// Height of interface `k` (0 = bottom, nz = surface).
    #[inline]
    pub fn zf(&self, k: usize) -> f64 {
        -self.h + k as f64 * self.dz
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn ncells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn ncolumns(&self) -> usize {
        self.nx * self.ny
    }

    /// Area of `M`.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn volume(&self) -> f64 {
        self.lx * self.ly * self.h
    }

    /// Diameter of the rectangle `M`.
    pub fn diameter(&self) -> f64 {
        self.lx.hypot(self.ly)
    }

    pub fn min_spacing(&self) -> f64 {
        self.dx.min(self.dy).min(self.dz)
    }

    /// Quadrature weight for a field with `nlev` levels: cell volume for full
    /// 3D fields, cell area for surface fields.
    pub(crate) fn weight_for(&self, nlev: usize) -> f64 {
        if nlev == 1 {
            self.cell_area()
        } else {
            self.cell_volume()
        }
    }

    pub(crate) fn check_field(&self, f: &ScalarField, name: &str) -> Result<()> {
        if f.nx != self.nx || f.ny != self.ny || (f.nz != self.nz && f.nz != 1) {
            return Err(Error::GridMismatch(format!(
                "`{name}` has shape {}x{}x{}, grid is {}x{}x{}",
                f.nx, f.ny, f.nz, self.nx, self.ny, self.nz
            )));
        }
        Ok(())
    }
}

/// Side-wall ghost rule. `dn` below is the wall-normal spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    /// Wall value zero: `ghost = −interior`.
    Dirichlet0,
    /// Zero normal derivative: `ghost = interior`.
    Neumann0,
    /// `∂_n q = −α q` with the wall value taken as the face average:
    /// `ghost = interior·(2 − α·dn)/(2 + α·dn)`.
    Robin(f64),
}

impl BoundaryKind {
    #[inline]
    pub fn ghost(self, interior: f64, dn: f64) -> f64 {
        match self {
            BoundaryKind::Dirichlet0 => -interior,
            BoundaryKind::Neumann0 => interior,
            BoundaryKind::Robin(alpha) => interior * (2.0 - alpha * dn) / (2.0 + alpha * dn),
        }
    }

    /// Ghost value with inhomogeneous wall data `g`: wall value `g` for
    /// Dirichlet, `∂_n q = g` for Neumann, `∂_n q = α(g − q)` for Robin.
    #[inline]
    pub fn ghost_with(self, interior: f64, dn: f64, g: f64) -> f64 {
        match self {
            BoundaryKind::Dirichlet0 => 2.0 * g - interior,
            BoundaryKind::Neumann0 => interior + g * dn,
            BoundaryKind::Robin(alpha) => {
                (interior * (2.0 - alpha * dn) + 2.0 * alpha * dn * g) / (2.0 + alpha * dn)
            }
        }
    }
}

/// Values attached to the four side walls, one per wall face.
///
/// `west`/`east` are indexed `j + ny·k`, `south`/`north` are indexed `i + nx·k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WallData {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub west: Vec<f64>,
    pub east: Vec<f64>,
    pub south: Vec<f64>,
    pub north: Vec<f64>,
}

impl WallData {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            nz: grid.nz,
            west: vec![0.0; grid.ny * grid.nz],
            east: vec![0.0; grid.ny * grid.nz],
            south: vec![0.0; grid.nx * grid.nz],
            north: vec![0.0; grid.nx * grid.nz],
        }
    }

    /// Samples `f(x, y, z)` at the centres of the wall faces.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut w = Self::zeros(grid);
        for k in 0..grid.nz {
            let z = grid.zc(k);
            for j in 0..grid.ny {
                let y = grid.yc(j);
                w.west[j + grid.ny * k] = f(0.0, y, z);
                w.east[j + grid.ny * k] = f(grid.lx, y, z);
            }
            for i in 0..grid.nx {
                let x = grid.xc(i);
                w.south[i + grid.nx * k] = f(x, 0.0, z);
                w.north[i + grid.nx * k] = f(x, grid.ly, z);
            }
        }
        w
    }

    fn map2(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| op(*x, *y)).collect();
        Self {
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            west: zip(&self.west, &other.west),
            east: zip(&self.east, &other.east),
            south: zip(&self.south, &other.south),
            north: zip(&self.north, &other.north),
        }
    }

    /// `(1 − s)·self + s·other`.
    pub fn lerp(&self, other: &Self, s: f64) -> Self {
        self.map2(other, |a, b| (1.0 - s) * a + s * b)
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map2(self, |x, _| a * x)
    }

    pub fn max_abs(&self) -> f64 {
        self.west
            .iter()
            .chain(&self.east)
            .chain(&self.south)
            .chain(&self.north)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Cumulative vertical integral `∫_{−h}^{z} g dξ` of the wall data,
    /// averaged from interfaces to cell centres (same rule as the interior).
    pub fn cumint_centred(&self, dz: f64) -> Self {
        let nz = self.nz;
        let integrate = |src: &[f64], n: usize| {
            let mut out = vec![0.0; src.len()];
            for c in 0..n {
                let mut below = 0.0;
                for k in 0..nz {
                    let above = below + src[c + n * k] * dz;
                    out[c + n * k] = 0.5 * (below + above);
                    below = above;
                }
            }
            out
        };
        Self {
            nx: self.nx,
            ny: self.ny,
            nz,
            west: integrate(&self.west, self.ny),
            east: integrate(&self.east, self.ny),
            south: integrate(&self.south, self.nx),
            north: integrate(&self.north, self.nx),
        }
    }
}

/// Side-wall closure: a ghost rule plus optional inhomogeneous wall data.
#[derive(Debug, Clone, Copy)]
pub struct SideBc<'a> {
    pub kind: BoundaryKind,
    pub data: Option<&'a WallData>,
}

impl<'a> SideBc<'a> {
    pub fn with_data(kind: BoundaryKind, data: &'a WallData) -> Self {
        Self {
            kind,
            data: Some(data),
        }
    }
}

impl From<BoundaryKind> for SideBc<'static> {
    fn from(kind: BoundaryKind) -> Self {
        SideBc { kind, data: None }
    }
}

/// Cell-centred scalar with `nz` levels (`nz = 1` for surface fields).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn with_levels(grid: &GridSpec, nz: usize) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            nz,
            data: vec![0.0; grid.nx * grid.ny * nz],
        }
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self::with_levels(grid, grid.nz)
    }

    pub fn surface(grid: &GridSpec) -> Self {
        Self::with_levels(grid, 1)
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.data.fill(c);
        f
    }

    /// Samples `f(x, y, z)` at cell centres.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..grid.nz {
            let z = grid.zc(k);
            for j in 0..grid.ny {
                let y = grid.yc(j);
                for i in 0..grid.nx {
                    out.data[i + grid.nx * (j + grid.ny * k)] = f(grid.xc(i), y, z);
                }
            }
        }
        out
    }

    pub fn surface_from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::surface(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                out.data[i + grid.nx * j] = f(grid.xc(i), grid.yc(j));
            }
        }
        out
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.idx(i, j, k);
        self.data[n] = v;
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.nx * self.ny;
        &self.data[n * k..n * (k + 1)]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.nz == other.nz
    }

    /// First non-finite entry, if any, reported with its location.
    pub fn check_finite(&self, name: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(n) => {
                let plane = self.nx * self.ny;
                Err(Error::NonFinite {
                    field: name.to_string(),
                    i: n % self.nx,
                    j: (n % plane) / self.nx,
                    k: n / plane,
                    value: self.data[n],
                })
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a·x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert!(self.same_shape(x));
        self.data
            .iter_mut()
            .zip(&x.data)
            .for_each(|(s, v)| *s += a * v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.same_shape(other));
        Self {
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    /// Repeats a surface field over `nz` levels.
    pub fn broadcast(&self, nz: usize) -> Self {
        assert_eq!(self.nz, 1, "broadcast expects a surface field");
        let mut data = Vec::with_capacity(self.data.len() * nz);
        for _ in 0..nz {
            data.extend_from_slice(&self.data);
        }
        Self {
            nx: self.nx,
            ny: self.ny,
            nz,
            data,
        }
    }

    /// Multiplies level `k` by `profile[k]`.
    pub fn times_profile(&self, profile: &[f64]) -> Self {
        assert_eq!(profile.len(), self.nz);
        let plane = self.nx * self.ny;
        let mut out = self.clone();
        for (k, p) in profile.iter().enumerate() {
            out.data[plane * k..plane * (k + 1)]
                .iter_mut()
                .for_each(|v| *v *= p);
        }
        out
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: Self) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: Self) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scaled(rhs)
    }
}

/// Horizontal vector field; both components share one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn new(x: ScalarField, y: ScalarField) -> Self {
        assert!(x.same_shape(&y), "vector components must share a shape");
        Self { x, y }
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self::new(ScalarField::zeros(grid), ScalarField::zeros(grid))
    }

    pub fn surface(grid: &GridSpec) -> Self {
        Self::new(ScalarField::surface(grid), ScalarField::surface(grid))
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64, f64) -> (f64, f64)) -> Self {
        Self::new(
            ScalarField::from_fn(grid, |x, y, z| f(x, y, z).0),
            ScalarField::from_fn(grid, |x, y, z| f(x, y, z).1),
        )
    }

    pub fn surface_from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        Self::new(
            ScalarField::surface_from_fn(grid, |x, y| f(x, y).0),
            ScalarField::surface_from_fn(grid, |x, y| f(x, y).1),
        )
    }

    pub fn nz(&self) -> usize {
        self.x.nz
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }

    pub fn scale(&mut self, a: f64) {
        self.x.scale(a);
        self.y.scale(a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::new(self.x.scaled(a), self.y.scaled(a))
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.x.axpy(a, &other.x);
        self.y.axpy(a, &other.y);
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(&self.x + &other.x, &self.y + &other.y)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(&self.x - &other.x, &self.y - &other.y)
    }

    pub fn broadcast(&self, nz: usize) -> Self {
        Self::new(self.x.broadcast(nz), self.y.broadcast(nz))
    }

    pub fn times_profile(&self, profile: &[f64]) -> Self {
        Self::new(self.x.times_profile(profile), self.y.times_profile(profile))
    }

    pub fn check_finite(&self, name: &str) -> Result<()> {
        self.x.check_finite(&format!("{name}.x"))?;
        self.y.check_finite(&format!("{name}.y"))
    }
}

/// Field on vertical interfaces, `nz + 1` levels; level 0 is the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct WField {
    pub nx: usize,
    pub ny: usize,
    /// Number of cells in the column (the field has `nz + 1` levels).
    pub nz: usize,
    pub data: Vec<f64>,
}

impl WField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            nz: grid.nz,
            data: vec![0.0; grid.nx * grid.ny * (grid.nz + 1)],
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.nx * self.ny;
        &self.data[n * k..n * (k + 1)]
    }

    pub fn top(&self) -> &[f64] {
        self.level(self.nz)
    }

    pub fn bottom(&self) -> &[f64] {
        self.level(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }
}

/// Field values with a one-cell ghost ring on the side walls.
pub(crate) struct Padded {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl Padded {
    #[inline]
    pub fn at(&self, i: isize, j: isize, k: usize) -> f64 {
        let sx = self.nx + 2;
        let sy = self.ny + 2;
        self.data[(i + 1) as usize + sx * ((j + 1) as usize + sy * k)]
    }

    #[inline]
    fn put(&mut self, i: isize, j: isize, k: usize, v: f64) {
        let sx = self.nx + 2;
        let sy = self.ny + 2;
        self.data[(i + 1) as usize + sx * ((j + 1) as usize + sy * k)] = v;
    }
}

/// Copies `values` (`nx·ny·nlev`) into a padded array and fills the ghosts.
pub(crate) fn pad(grid: &GridSpec, values: &[f64], nlev: usize, bc: SideBc<'_>) -> Padded {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut p = Padded {
        nx,
        ny,
        data: vec![0.0; (nx + 2) * (ny + 2) * nlev],
    };
    let data = bc.data.filter(|d| d.nz == nlev);
    for k in 0..nlev {
        for j in 0..ny {
            for i in 0..nx {
                p.put(i as isize, j as isize, k, values[i + nx * (j + ny * k)]);
            }
        }
        for j in 0..ny {
            let w = values[nx * (j + ny * k)];
            let e = values[nx - 1 + nx * (j + ny * k)];
            let (gw, ge) = match data {
                Some(d) => (
                    bc.kind.ghost_with(w, grid.dx, d.west[j + ny * k]),
                    bc.kind.ghost_with(e, grid.dx, d.east[j + ny * k]),
                ),
                None => (bc.kind.ghost(w, grid.dx), bc.kind.ghost(e, grid.dx)),
            };
            p.put(-1, j as isize, k, gw);
            p.put(nx as isize, j as isize, k, ge);
        }
        for i in 0..nx {
            let s = values[i + nx * ny * k];
            let n = values[i + nx * (ny - 1 + ny * k)];
            let (gs, gn) = match data {
                Some(d) => (
                    bc.kind.ghost_with(s, grid.dy, d.south[i + nx * k]),
                    bc.kind.ghost_with(n, grid.dy, d.north[i + nx * k]),
                ),
                None => (bc.kind.ghost(s, grid.dy), bc.kind.ghost(n, grid.dy)),
            };
            p.put(i as isize, -1, k, gs);
            p.put(i as isize, ny as isize, k, gn);
        }
    }
    p
}

pub(crate) fn ddx_raw(grid: &GridSpec, f: &ScalarField, bc: SideBc<'_>) -> ScalarField {
    let p = pad(grid, &f.data, f.nz, bc);
    let mut out = f.clone();
    let c = 0.5 / grid.dx;
    for k in 0..f.nz {
        for j in 0..f.ny {
            for i in 0..f.nx {
                let (ii, jj) = (i as isize, j as isize);
                out.data[i + f.nx * (j + f.ny * k)] = c * (p.at(ii + 1, jj, k) - p.at(ii - 1, jj, k));
            }
        }
    }
    out
}

pub(crate) fn ddy_raw(grid: &GridSpec, f: &ScalarField, bc: SideBc<'_>) -> ScalarField {
    let p = pad(grid, &f.data, f.nz, bc);
    let mut out = f.clone();
    let c = 0.5 / grid.dy;
    for k in 0..f.nz {
        for j in 0..f.ny {
            for i in 0..f.nx {
                let (ii, jj) = (i as isize, j as isize);
                out.data[i + f.nx * (j + f.ny * k)] = c * (p.at(ii, jj + 1, k) - p.at(ii, jj - 1, k));
            }
        }
    }
    out
}

pub(crate) fn laplacian_h_raw(grid: &GridSpec, f: &ScalarField, bc: SideBc<'_>) -> ScalarField {
    let p = pad(grid, &f.data, f.nz, bc);
    let mut out = f.clone();
    let (cx, cy) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    for k in 0..f.nz {
        for j in 0..f.ny {
            for i in 0..f.nx {
                let (ii, jj) = (i as isize, j as isize);
                let c = p.at(ii, jj, k);
                out.data[i + f.nx * (j + f.ny * k)] = cx
                    * (p.at(ii + 1, jj, k) - 2.0 * c + p.at(ii - 1, jj, k))
                    + cy * (p.at(ii, jj + 1, k) - 2.0 * c + p.at(ii, jj - 1, k));
            }
        }
    }
    out
}

/// Second-order central `∂_x` with the side ghost rule `bc`.
pub fn ddx<'a>(grid: &GridSpec, f: &ScalarField, bc: impl Into<SideBc<'a>>) -> Result<ScalarField> {
    grid.check_field(f, "f")?;
    f.check_finite("f")?;
    Ok(ddx_raw(grid, f, bc.into()))
}

/// Second-order central `∂_y` with the side ghost rule `bc`.
pub fn ddy<'a>(grid: &GridSpec, f: &ScalarField, bc: impl Into<SideBc<'a>>) -> Result<ScalarField> {
    grid.check_field(f, "f")?;
    f.check_finite("f")?;
    Ok(ddy_raw(grid, f, bc.into()))
}

/// Five-point horizontal Laplacian `∂_x² + ∂_y²`.
pub fn laplacian_h<'a>(
    grid: &GridSpec,
    f: &ScalarField,
    bc: impl Into<SideBc<'a>>,
) -> Result<ScalarField> {
    grid.check_field(f, "f")?;
    f.check_finite("f")?;
    Ok(laplacian_h_raw(grid, f, bc.into()))
}

pub(crate) fn vertical_cumint_raw(grid: &GridSpec, f: &ScalarField) -> WField {
    let mut w = WField::zeros(grid);
    let plane = grid.ncolumns();
    for k in 0..grid.nz {
        for c in 0..plane {
            w.data[c + plane * (k + 1)] = w.data[c + plane * k] + f.data[c + plane * k] * grid.dz;
        }
    }
    w
}

/// Interface values of `∫_{−h}^{z} f dξ` by the midpoint rule; level 0 is 0.
pub fn vertical_cumint(grid: &GridSpec, f: &ScalarField) -> Result<WField> {
    if f.nz != grid.nz {
        return Err(Error::GridMismatch("vertical_cumint needs a full 3D field".into()));
    }
    grid.check_field(f, "f")?;
    f.check_finite("f")?;
    Ok(vertical_cumint_raw(grid, f))
}

/// `∫_{−h}^{0} f dz` per column.
pub fn depth_integral(grid: &GridSpec, f: &ScalarField) -> ScalarField {
    let plane = grid.ncolumns();
    let mut out = ScalarField::surface(grid);
    for k in 0..f.nz {
        for c in 0..plane {
            out.data[c] += f.data[c + plane * k];
        }
    }
    out.scale(grid.h / f.nz as f64);
    out
}

/// `(1/h) ∫_{−h}^{0} f dz` per column.
pub fn depth_average(grid: &GridSpec, f: &ScalarField) -> ScalarField {
    let mut out = depth_integral(grid, f);
    out.scale(1.0 / grid.h);
    out
}

/// Interface average to cell centres.
pub fn interfaces_to_centres(grid: &GridSpec, w: &WField) -> ScalarField {
    let plane = grid.ncolumns();
    let mut out = ScalarField::zeros(grid);
    for k in 0..grid.nz {
        for c in 0..plane {
            out.data[c + plane * k] = 0.5 * (w.data[c + plane * k] + w.data[c + plane * (k + 1)]);
        }
    }
    out
}

/// `∂_z f` on interfaces. Interior interfaces use the two-point difference;
/// the bottom carries 0 and the top carries `top_flux` (0 when absent), the
/// values prescribed by the Neumann closures.
pub fn ddz_interfaces(grid: &GridSpec, f: &ScalarField, top_flux: Option<&ScalarField>) -> WField {
    let plane = grid.ncolumns();
    let mut w = WField::zeros(grid);
    for k in 1..grid.nz {
        for c in 0..plane {
            w.data[c + plane * k] = (f.data[c + plane * k] - f.data[c + plane * (k - 1)]) / grid.dz;
        }
    }
    if let Some(g) = top_flux {
        w.data[plane * grid.nz..].copy_from_slice(&g.data);
    }
    w
}

/// `∂_z f` at cell centres: mean of the two adjacent interface differences.
pub fn ddz_centres(grid: &GridSpec, f: &ScalarField, top_flux: Option<&ScalarField>) -> ScalarField {
    interfaces_to_centres(grid, &ddz_interfaces(grid, f, top_flux))
}

/// `∂_z² f` at cell centres with Neumann ghosts (flux `top_flux` at the top).
pub fn d2z(grid: &GridSpec, f: &ScalarField, top_flux: Option<&ScalarField>) -> ScalarField {
    let w = ddz_interfaces(grid, f, top_flux);
    let plane = grid.ncolumns();
    let mut out = ScalarField::zeros(grid);
    for k in 0..grid.nz {
        for c in 0..plane {
            out.data[c + plane * k] = (w.data[c + plane * (k + 1)] - w.data[c + plane * k]) / grid.dz;
        }
    }
    out
}

/// Averages a field on `grid.refined()` onto `grid` (2×2 horizontally, and
/// 2 levels vertically for 3D fields).
pub fn restrict(grid: &GridSpec, fine: &ScalarField) -> Result<ScalarField> {
    let (nx, ny) = (grid.nx, grid.ny);
    let three_d = fine.nz == 2 * grid.nz;
    if fine.nx != 2 * nx || fine.ny != 2 * ny || !(three_d || fine.nz == 1) {
        return Err(Error::GridMismatch(format!(
            "cannot restrict a {}x{}x{} field onto {}x{}x{}",
            fine.nx, fine.ny, fine.nz, nx, ny, grid.nz
        )));
    }
    let nz = if three_d { grid.nz } else { 1 };
    let kz = if three_d { 2 } else { 1 };
    let mut out = ScalarField::with_levels(grid, nz);
    let scale = 1.0 / (4 * kz) as f64;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let mut s = 0.0;
                for dk in 0..kz {
                    for dj in 0..2 {
                        for di in 0..2 {
                            s += fine.at(2 * i + di, 2 * j + dj, kz * k + dk);
                        }
                    }
                }
                out.data[i + nx * (j + ny * k)] = s * scale;
            }
        }
    }
    Ok(out)
}

/// Volume-weighted inner product (area-weighted for surface fields).
pub fn inner(grid: &GridSpec, a: &ScalarField, b: &ScalarField) -> f64 {
    debug_assert!(a.same_shape(b));
    grid.weight_for(a.nz) * a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>()
}

/// Square of the face-based horizontal gradient norm.
///
/// Interior faces carry full weight, wall faces (difference to the ghost)
/// carry half weight. With this weighting `⟨f, Δ_H f⟩ = −‖∇_H f‖² − α‖f‖²_{Γ_s}`
/// holds exactly for the Robin rule and without the wall term for the others.
/// `level_weights` scales each level (pass `None` for uniform levels).
pub(crate) fn grad_h_norm_sq_levels(
    grid: &GridSpec,
    values: &[f64],
    nlev: usize,
    level_weights: Option<&[f64]>,
    bc: SideBc<'_>,
) -> f64 {
    let p = pad(grid, values, nlev, bc);
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (ix2, iy2) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    let mut total = 0.0;
    for k in 0..nlev {
        let mut s = 0.0;
        for j in 0..ny {
            for i in -1..nx {
                let d = p.at(i + 1, j, k) - p.at(i, j, k);
                let wgt = if i == -1 || i == nx - 1 { 0.5 } else { 1.0 };
                s += wgt * d * d * ix2;
            }
        }
        for j in -1..ny {
            for i in 0..nx {
                let d = p.at(i, j + 1, k) - p.at(i, j, k);
                let wgt = if j == -1 || j == ny - 1 { 0.5 } else { 1.0 };
                s += wgt * d * d * iy2;
            }
        }
        total += s * level_weights.map_or(1.0, |w| w[k]);
    }
    total * grid.weight_for(nlev)
}

/// Square of the side-wall `L²(Γ_s)` norm. Wall values are the average of the
/// boundary cell and its ghost; face areas are `dy·dz` and `dx·dz`.
pub(crate) fn gamma_s_norm_sq_levels(
    grid: &GridSpec,
    values: &[f64],
    nlev: usize,
    bc: SideBc<'_>,
) -> f64 {
    let p = pad(grid, values, nlev, bc);
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let dzl = if nlev == 1 { grid.h } else { grid.dz };
    let mut sx = 0.0;
    let mut sy = 0.0;
    for k in 0..nlev {
        for j in 0..ny {
            let w = 0.5 * (p.at(-1, j, k) + p.at(0, j, k));
            let e = 0.5 * (p.at(nx - 1, j, k) + p.at(nx, j, k));
            sx += w * w + e * e;
        }
        for i in 0..nx {
            let s = 0.5 * (p.at(i, -1, k) + p.at(i, 0, k));
            let n = 0.5 * (p.at(i, ny - 1, k) + p.at(i, ny, k));
            sy += s * s + n * n;
        }
    }
    (sx * grid.dy + sy * grid.dx) * dzl
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn restriction_preserves_means_and_linears() {
        let g = grid(8);
        let fine = g.refined();
        let f = ScalarField::from_fn(&fine, |x, y, z| 1.0 + 2.0 * x - y + 3.0 * z);
        let r = restrict(&g, &f).unwrap();
        let exact = ScalarField::from_fn(&g, |x, y, z| 1.0 + 2.0 * x - y + 3.0 * z);
        assert!((&r - &exact).max_abs() < 1e-13);
        assert!((r.mean() - f.mean()).abs() < 1e-13);
        let s = ScalarField::surface_from_fn(&fine, |x, y| x * y);
        assert_eq!(restrict(&g, &s).unwrap().nz, 1);
        assert!(restrict(&fine, &exact).is_err());
    }

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(2.0, 1.0, 0.5, n, n, n / 2).unwrap()
    }

    fn random_field(g: &GridSpec, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = ScalarField::zeros(g);
        f.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        f
    }

    fn interior_max_err(g: &GridSpec, f: &ScalarField, exact: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let mut e = 0.0_f64;
        for k in 0..g.nz {
            for j in 1..g.ny - 1 {
                for i in 1..g.nx - 1 {
                    e = e.max((f.at(i, j, k) - exact(g.xc(i), g.yc(j), g.zc(k))).abs());
                }
            }
        }
        e
    }

    #[test]
    fn grid_rejects_small_counts() {
        assert!(GridSpec::unit(3, 8, 4).is_err());
        assert!(GridSpec::unit(8, 8, 1).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1.0, 8, 8, 4).is_err());
        let g = GridSpec::unit(8, 16, 4).unwrap();
        assert_eq!(g.dx, 1.0 / 8.0);
        assert_eq!(g.dz, 0.25);
    }

    #[test]
    fn ghost_rules() {
        assert_eq!(BoundaryKind::Dirichlet0.ghost(2.0, 0.1), -2.0);
        assert_eq!(BoundaryKind::Neumann0.ghost(2.0, 0.1), 2.0);
        assert_eq!(BoundaryKind::Robin(0.0).ghost(2.0, 0.1), 2.0);
        let r = BoundaryKind::Robin(2.0).ghost(1.0, 0.5);
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
        // inhomogeneous Robin: ∂n q = α(g − q_wall) at the face
        let (a, dn, q0, g) = (1.5, 0.1, 0.7, 2.0);
        let gh = BoundaryKind::Robin(a).ghost_with(q0, dn, g);
        let wall = 0.5 * (gh + q0);
        assert!(((gh - q0) / dn - a * (g - wall)).abs() < 1e-12);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = grid(8);
        let f = ScalarField::constant(&g, 3.0);
        for bc in [BoundaryKind::Neumann0, BoundaryKind::Robin(0.0)] {
            assert!(ddx(&g, &f, bc).unwrap().max_abs() == 0.0);
            assert!(ddy(&g, &f, bc).unwrap().max_abs() == 0.0);
            assert!(laplacian_h(&g, &f, bc).unwrap().max_abs() == 0.0);
        }
    }

    #[test]
    fn derivative_of_linear_is_exact_in_interior() {
        let g = grid(8);
        let f = ScalarField::from_fn(&g, |x, _, _| x);
        let d = ddx(&g, &f, BoundaryKind::Neumann0).unwrap();
        assert!(interior_max_err(&g, &d, |_, _, _| 1.0) < 1e-13);
        let fy = ScalarField::from_fn(&g, |_, y, _| y);
        let dy = ddy(&g, &fy, BoundaryKind::Neumann0).unwrap();
        assert!(interior_max_err(&g, &dy, |_, _, _| 1.0) < 1e-13);
    }

    #[test]
    fn laplacian_of_quadratic_is_exact_in_interior() {
        let g = grid(8);
        let f = ScalarField::from_fn(&g, |x, y, _| x * x + y * y);
        let l = laplacian_h(&g, &f, BoundaryKind::Neumann0).unwrap();
        assert!(interior_max_err(&g, &l, |_, _, _| 4.0) < 1e-11);
    }

    #[test]
    fn ddx_sine_converges_at_second_order() {
        // Richardson: error ratio between 32 and 64 cells.
        let err = |n: usize| {
            let g = grid(n);
            let f = ScalarField::from_fn(&g, |x, _, _| (2.0 * PI * x / g.lx).sin());
            let d = ddx(&g, &f, BoundaryKind::Neumann0).unwrap();
            interior_max_err(&g, &d, |x, _, _| 2.0 * PI / g.lx * (2.0 * PI * x / g.lx).cos())
        };
        let (e32, e64) = (err(32), err(64));
        let order = (e32 / e64).log2();
        assert!(order > 1.9 && order < 2.1, "order {order}");
        // constant C in e ≤ C·dx²
        let c32 = e32 / (2.0_f64 / 32.0).powi(2);
        let c64 = e64 / (2.0_f64 / 64.0).powi(2);
        assert!((c32 / c64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn dirichlet_laplacian_eigenfunction_refines_at_second_order() {
        let err = |n: usize| {
            let g = grid(n);
            let (a, b) = (PI / g.lx, PI / g.ly);
            let f = ScalarField::from_fn(&g, |x, y, _| (a * x).sin() * (b * y).sin());
            let l = laplacian_h(&g, &f, BoundaryKind::Dirichlet0).unwrap();
            let exact = f.scaled(-(a * a + b * b));
            (&l - &exact).max_abs()
        };
        let order = (err(16) / err(32)).log2();
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn non_finite_input_is_located() {
        let g = grid(8);
        let mut f = ScalarField::zeros(&g);
        let n = f.idx(3, 2, 1);
        f.data[n] = f64::NAN;
        match ddx(&g, &f, BoundaryKind::Neumann0) {
            Err(Error::NonFinite { i, j, k, .. }) => assert_eq!((i, j, k), (3, 2, 1)),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn cumint_constant_and_top_value() {
        let g = grid(8);
        let f = ScalarField::constant(&g, 2.5);
        let w = vertical_cumint(&g, &f).unwrap();
        for k in 0..=g.nz {
            let z = g.zf(k);
            assert!((w.at(1, 2, k) - 2.5 * (z + g.h)).abs() < 1e-14);
        }
        let r = random_field(&g, 1);
        let w = vertical_cumint(&g, &r).unwrap();
        let col: f64 = (0..g.nz).map(|k| r.at(2, 3, k)).sum();
        assert!((w.at(2, 3, g.nz) - g.dz * col).abs() < 1e-14);
        let di = depth_integral(&g, &r);
        assert!((w.at(2, 3, g.nz) - di.at(2, 3, 0)).abs() < 1e-14);
        let zero = vertical_cumint(&g, &ScalarField::zeros(&g)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn cumint_then_difference_telescopes() {
        let g = grid(8);
        let r = random_field(&g, 2);
        let w = vertical_cumint(&g, &r).unwrap();
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let d = (w.at(i, j, k + 1) - w.at(i, j, k)) / g.dz;
                    assert!((d - r.at(i, j, k)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn depth_average_cases() {
        let g = grid(8);
        let five = depth_average(&g, &ScalarField::constant(&g, 5.0));
        assert!(five.data.iter().all(|v| (v - 5.0).abs() < 1e-14));
        let lin = ScalarField::from_fn(&g, |_, _, z| z + g.h / 2.0);
        assert!(depth_average(&g, &lin).max_abs() < 1e-15);
        let r = random_field(&g, 3);
        let diff = &depth_integral(&g, &r) - &depth_average(&g, &r).scaled(g.h);
        assert!(diff.max_abs() < 1e-15);
    }

    #[test]
    fn dirichlet_ddx_is_adjoint_to_negative_neumann_ddx() {
        let g = grid(16);
        let f = random_field(&g, 4);
        let q = random_field(&g, 5);
        for (dx, name) in [(true, "x"), (false, "y")] {
            let (df, dq) = if dx {
                (
                    ddx(&g, &f, BoundaryKind::Dirichlet0).unwrap(),
                    ddx(&g, &q, BoundaryKind::Neumann0).unwrap(),
                )
            } else {
                (
                    ddy(&g, &f, BoundaryKind::Dirichlet0).unwrap(),
                    ddy(&g, &q, BoundaryKind::Neumann0).unwrap(),
                )
            };
            let s = inner(&g, &df, &q) + inner(&g, &f, &dq);
            let scale = inner(&g, &f, &f).sqrt() * inner(&g, &q, &q).sqrt() / g.dx;
            assert!(s.abs() < 1e-13 * scale, "{name}: {s}");
        }
    }

    #[test]
    fn robin_laplacian_energy_identity_is_exact() {
        let g = grid(16);
        let f = random_field(&g, 6);
        for bc in [
            BoundaryKind::Robin(0.7),
            BoundaryKind::Neumann0,
            BoundaryKind::Dirichlet0,
        ] {
            let l = laplacian_h(&g, &f, bc).unwrap();
            let lhs = inner(&g, &f, &l);
            let grad = grad_h_norm_sq_levels(&g, &f.data, g.nz, None, bc.into());
            let alpha = match bc {
                BoundaryKind::Robin(a) => a,
                _ => 0.0,
            };
            let wall = gamma_s_norm_sq_levels(&g, &f.data, g.nz, bc.into());
            let rhs = -grad - alpha * wall;
            assert!((lhs - rhs).abs() < 1e-11 * lhs.abs(), "{bc:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn d2z_is_negative_semidefinite_with_neumann() {
        let g = grid(8);
        let f = random_field(&g, 7);
        let l = d2z(&g, &f, None);
        let dz = ddz_interfaces(&g, &f, None);
        let energy: f64 = dz.data.iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
        assert!((inner(&g, &f, &l) + energy).abs() < 1e-10 * energy);
    }

    #[test]
    fn wall_cumint_matches_interior_rule() {
        let g = grid(8);
        let wd = WallData::from_fn(&g, |_, y, z| y + z * z);
        let c = wd.cumint_centred(g.dz);
        let j = 3;
        let mut below = 0.0;
        for k in 0..g.nz {
            let above = below + wd.west[j + g.ny * k] * g.dz;
            assert!((c.west[j + g.ny * k] - 0.5 * (below + above)).abs() < 1e-15);
            below = above;
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn operators_are_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let g = grid(8);
                let f = random_field(&g, seed);
                let q = random_field(&g, seed + 7919);
                let comb = &f.scaled(a) + &q.scaled(b);
                for bc in [BoundaryKind::Dirichlet0, BoundaryKind::Neumann0, BoundaryKind::Robin(1.3)] {
                    let lhs = laplacian_h(&g, &comb, bc).unwrap();
                    let rhs = &laplacian_h(&g, &f, bc).unwrap().scaled(a) + &laplacian_h(&g, &q, bc).unwrap().scaled(b);
                    prop_assert!((&lhs - &rhs).max_abs() < 1e-10 * (1.0 + lhs.max_abs()));
                    let lhs = ddx(&g, &comb, bc).unwrap();
                    let rhs = &ddx(&g, &f, bc).unwrap().scaled(a) + &ddx(&g, &q, bc).unwrap().scaled(b);
                    prop_assert!((&lhs - &rhs).max_abs() < 1e-12 * (1.0 + lhs.max_abs()));
                }
                let lhs = vertical_cumint(&g, &comb).unwrap();
                let wf = vertical_cumint(&g, &f).unwrap();
                let wq = vertical_cumint(&g, &q).unwrap();
                for n in 0..lhs.data.len() {
                    prop_assert!((lhs.data[n] - a * wf.data[n] - b * wq.data[n]).abs() < 1e-12);
                }
            }
        }
    }
}
