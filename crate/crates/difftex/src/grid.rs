//! Dense row-major 2D grids and bilinear sampling.
//!
//! Every raster in the pipeline (photos, weight fields, masks, textures)
//! is a `Grid`. Indexing is `(x, y)` with `x` the column; sample positions
//! are continuous coordinates where integer `(x, y)` is a cell center.

pub type Color = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn same_size<U: Clone>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        debug_assert!(x < self.width && y < self.height);
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        debug_assert!(x < self.width && y < self.height);
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, value: T) {
        self.data.fill(value);
    }

    /// Iterate `(x, y, &value)` in row-major order.
    pub fn enumerate(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i % w, i / w, v))
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Grid<bool> {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Bilinear footprint of a continuous sample position, edge-clamped.
#[derive(Clone, Copy, Debug)]
pub struct BilinearTap {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub w00: f64,
    pub w10: f64,
    pub w01: f64,
    pub w11: f64,
}

/// Compute the four-neighbor footprint of `(x, y)` on a `width x height`
/// grid with cell centers at integer coordinates and edge clamping.
#[inline]
pub fn bilinear_tap(width: usize, height: usize, x: f64, y: f64) -> BilinearTap {
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    let xc = x.clamp(0.0, max_x);
    let yc = y.clamp(0.0, max_y);
    let x0 = xc.floor().min(max_x - 1.0).max(0.0);
    let y0 = yc.floor().min(max_y - 1.0).max(0.0);
    let fx = xc - x0;
    let fy = yc - y0;
    let (x0, y0) = (x0 as usize, y0 as usize);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    BilinearTap {
        x0,
        y0,
        x1,
        y1,
        w00: (1.0 - fx) * (1.0 - fy),
        w10: fx * (1.0 - fy),
        w01: (1.0 - fx) * fy,
        w11: fx * fy,
    }
}

#[inline]
pub fn sample_scalar(grid: &Grid<f64>, x: f64, y: f64) -> f64 {
    if grid.width() == 1 && grid.height() == 1 {
        return *grid.get(0, 0);
    }
    let t = bilinear_tap(grid.width(), grid.height(), x, y);
    t.w00 * grid.get(t.x0, t.y0)
        + t.w10 * grid.get(t.x1, t.y0)
        + t.w01 * grid.get(t.x0, t.y1)
        + t.w11 * grid.get(t.x1, t.y1)
}

#[inline]
pub fn sample_color(grid: &Grid<Color>, x: f64, y: f64) -> Color {
    if grid.width() == 1 && grid.height() == 1 {
        return *grid.get(0, 0);
    }
    let t = bilinear_tap(grid.width(), grid.height(), x, y);
    let c00 = grid.get(t.x0, t.y0);
    let c10 = grid.get(t.x1, t.y0);
    let c01 = grid.get(t.x0, t.y1);
    let c11 = grid.get(t.x1, t.y1);
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = t.w00 * c00[c] + t.w10 * c10[c] + t.w01 * c01[c] + t.w11 * c11[c];
    }
    out
}

#[inline]
pub fn color_sub(a: Color, b: Color) -> Color {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn color_norm(a: Color) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[inline]
pub fn color_dist(a: Color, b: Color) -> f64 {
    color_norm(color_sub(a, b))
}

/// Rec. 601 luma; the grayscale used by gradient magnitudes and blur scores.
#[inline]
pub fn luminance(c: Color) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}
