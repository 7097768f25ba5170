//! Uniform grids over 2D or 3D space.
//!
//! [`GridSpec`] describes the lattice, [`LabelGrid`] stores a three-state label per
//! cell and [`RegionGrid`] adds an exact Euclidean feature transform so distance
//! queries, enlargement and reduction are cheap.

use nalgebra::SVector;

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Unknown,
    Free,
    Occupied,
}

impl Cell {
    pub fn is_free(self) -> bool {
        self == Cell::Free
    }
}

/// Axis-aligned lattice. Axis 0 varies fastest in the flat index.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec<const D: usize> {
    pub origin: SVector<f64, D>,
    pub cell: f64,
    pub dims: [usize; D],
}

impl<const D: usize> GridSpec<D> {
    pub fn new(origin: SVector<f64, D>, cell: f64, dims: [usize; D]) -> Result<Self> {
        if !(cell > 0.0) || !cell.is_finite() {
            return Err(invalid(format!("cell size must be positive, got {cell}")));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(invalid("grid dimensions must be non-zero"));
        }
        Ok(GridSpec { origin, cell, dims })
    }

    /// Smallest grid with the given cell size covering the box `[min, max]`.
    pub fn covering(min: SVector<f64, D>, max: SVector<f64, D>, cell: f64) -> Result<Self> {
        let mut dims = [0usize; D];
        for a in 0..D {
            let ext = max[a] - min[a];
            if !(ext > 0.0) {
                return Err(invalid("empty bounding box"));
            }
            dims[a] = ((ext / cell) - 1e-9).ceil().max(1.0) as usize;
        }
        GridSpec::new(min, cell, dims)
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn upper(&self) -> SVector<f64, D> {
        let mut u = self.origin;
        for a in 0..D {
            u[a] += self.dims[a] as f64 * self.cell;
        }
        u
    }

    pub fn index(&self, idx: [usize; D]) -> usize {
        let mut flat = 0;
        let mut stride = 1;
        for a in 0..D {
            flat += idx[a] * stride;
            stride *= self.dims[a];
        }
        flat
    }

    pub fn unindex(&self, mut flat: usize) -> [usize; D] {
        let mut idx = [0usize; D];
        for a in 0..D {
            idx[a] = flat % self.dims[a];
            flat /= self.dims[a];
        }
        idx
    }

    pub fn contains(&self, p: &SVector<f64, D>) -> bool {
        (0..D).all(|a| {
            let r = (p[a] - self.origin[a]) / self.cell;
            r >= 0.0 && r < self.dims[a] as f64
        })
    }

    /// Cell containing `p`, or `None` outside the grid.
    pub fn cell_of(&self, p: &SVector<f64, D>) -> Option<[usize; D]> {
        let mut idx = [0usize; D];
        for a in 0..D {
            let r = ((p[a] - self.origin[a]) / self.cell).floor();
            if !(r >= 0.0 && r < self.dims[a] as f64) {
                return None;
            }
            idx[a] = r as usize;
        }
        Some(idx)
    }

    /// Cell containing `p` after clamping into the grid.
    pub fn clamped_cell_of(&self, p: &SVector<f64, D>) -> [usize; D] {
        let mut idx = [0usize; D];
        for a in 0..D {
            let r = ((p[a] - self.origin[a]) / self.cell).floor();
            idx[a] = r.clamp(0.0, (self.dims[a] - 1) as f64) as usize;
        }
        idx
    }

    pub fn center(&self, idx: [usize; D]) -> SVector<f64, D> {
        let mut c = self.origin;
        for a in 0..D {
            c[a] += (idx[a] as f64 + 0.5) * self.cell;
        }
        c
    }

    pub fn cell_box(&self, idx: [usize; D]) -> (SVector<f64, D>, SVector<f64, D>) {
        let mut lo = self.origin;
        for a in 0..D {
            lo[a] += idx[a] as f64 * self.cell;
        }
        let hi = lo.add_scalar(self.cell);
        (lo, hi)
    }

    /// In-bounds neighbours in the 3^D block around `idx`, including `idx` itself.
    pub fn block(&self, idx: [usize; D]) -> Vec<[usize; D]> {
        let mut out = Vec::with_capacity(3usize.pow(D as u32));
        let total = 3usize.pow(D as u32);
        'outer: for code in 0..total {
            let mut c = code;
            let mut n = idx;
            for a in 0..D {
                let off = (c % 3) as isize - 1;
                c /= 3;
                let v = idx[a] as isize + off;
                if v < 0 || v >= self.dims[a] as isize {
                    continue 'outer;
                }
                n[a] = v as usize;
            }
            out.push(n);
        }
        out
    }

    /// Cells crossed by the segment `a -> b`, in order, clipped to the grid.
    ///
    /// Exact cell-crossing traversal: a cell is listed iff the open segment passes
    /// through its interior or starts in it.
    pub fn traverse(&self, a: &SVector<f64, D>, b: &SVector<f64, D>) -> Vec<[usize; D]> {
        let Some((t0, t1)) = self.clip(a, b) else {
            return Vec::new();
        };
        let d = b - a;
        let start = a + d * t0;
        let mut cur = self.clamped_cell_of(&start);
        // nudge the starting cell onto the side the segment travels into
        for ax in 0..D {
            let r = (start[ax] - self.origin[ax]) / self.cell;
            if d[ax] < 0.0 && (r - r.round()).abs() < 1e-12 && r.round() as usize == cur[ax] && cur[ax] > 0 {
                cur[ax] -= 1;
            }
        }
        let mut step = [0isize; D];
        let mut t_max = [f64::INFINITY; D];
        let mut t_delta = [f64::INFINITY; D];
        for ax in 0..D {
            if d[ax] > 0.0 {
                step[ax] = 1;
                let edge = self.origin[ax] + (cur[ax] as f64 + 1.0) * self.cell;
                t_max[ax] = (edge - a[ax]) / d[ax];
                t_delta[ax] = self.cell / d[ax];
            } else if d[ax] < 0.0 {
                step[ax] = -1;
                let edge = self.origin[ax] + cur[ax] as f64 * self.cell;
                t_max[ax] = (edge - a[ax]) / d[ax];
                t_delta[ax] = -self.cell / d[ax];
            }
        }
        let mut out = vec![cur];
        loop {
            let mut ax = 0;
            for k in 1..D {
                if t_max[k] < t_max[ax] {
                    ax = k;
                }
            }
            if !(t_max[ax] < t1) {
                break;
            }
            let next = cur[ax] as isize + step[ax];
            if next < 0 || next >= self.dims[ax] as isize {
                break;
            }
            cur[ax] = next as usize;
            t_max[ax] += t_delta[ax];
            out.push(cur);
        }
        out
    }

    /// Parameter interval of `a + t (b - a)`, `t ∈ [0,1]`, inside the grid box.
    fn clip(&self, a: &SVector<f64, D>, b: &SVector<f64, D>) -> Option<(f64, f64)> {
        let hi = self.upper();
        let d = b - a;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for ax in 0..D {
            if d[ax].abs() < 1e-300 {
                if a[ax] < self.origin[ax] || a[ax] >= hi[ax] {
                    return None;
                }
                continue;
            }
            let mut ta = (self.origin[ax] - a[ax]) / d[ax];
            let mut tb = (hi[ax] - a[ax]) / d[ax];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// Closest point of the axis-aligned box `[lo, hi]` to `p`.
pub fn box_closest<const D: usize>(
    lo: &SVector<f64, D>,
    hi: &SVector<f64, D>,
    p: &SVector<f64, D>,
) -> SVector<f64, D> {
    let mut q = *p;
    for a in 0..D {
        q[a] = q[a].clamp(lo[a], hi[a]);
    }
    q
}

/// Whether the closed segment `a b` meets the closed box `[lo, hi]`.
pub fn segment_meets_box<const D: usize>(
    a: &SVector<f64, D>,
    b: &SVector<f64, D>,
    lo: &SVector<f64, D>,
    hi: &SVector<f64, D>,
    eps: f64,
) -> bool {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for ax in 0..D {
        let (l, h) = (lo[ax] - eps, hi[ax] + eps);
        if d[ax].abs() < 1e-300 {
            if a[ax] < l || a[ax] > h {
                return false;
            }
            continue;
        }
        let mut ta = (l - a[ax]) / d[ax];
        let mut tb = (h - a[ax]) / d[ax];
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Three-state label per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelGrid<const D: usize> {
    pub spec: GridSpec<D>,
    pub cells: Vec<Cell>,
}

impl<const D: usize> LabelGrid<D> {
    pub fn filled(spec: GridSpec<D>, label: Cell) -> Self {
        let n = spec.len();
        LabelGrid { spec, cells: vec![label; n] }
    }

    pub fn from_fn(spec: GridSpec<D>, mut f: impl FnMut(SVector<f64, D>) -> Cell) -> Self {
        let cells = (0..spec.len()).map(|i| f(spec.center(spec.unindex(i)))).collect();
        LabelGrid { spec, cells }
    }

    pub fn get(&self, idx: [usize; D]) -> Cell {
        self.cells[self.spec.index(idx)]
    }

    pub fn set(&mut self, idx: [usize; D], c: Cell) {
        let i = self.spec.index(idx);
        self.cells[i] = c;
    }

    pub fn count(&self, c: Cell) -> usize {
        self.cells.iter().filter(|&&x| x == c).count()
    }

    pub fn label_at(&self, p: &SVector<f64, D>) -> Cell {
        match self.spec.cell_of(p) {
            Some(idx) => self.get(idx),
            None => Cell::Unknown,
        }
    }
}

/// Result of a nearest-obstacle query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest<const D: usize> {
    /// Distance from the query to the non-free set (0 inside it).
    pub dist: f64,
    /// Closest non-free point; equals the query when inside.
    pub point: SVector<f64, D>,
    /// Query fell outside the grid.
    pub out_of_bounds: bool,
}

/// Free/non-free region on a grid with a cached Euclidean feature transform.
///
/// The exterior of the grid counts as non-free.
#[derive(Clone, Debug)]
pub struct RegionGrid<const D: usize> {
    labels: LabelGrid<D>,
    feature: Vec<u32>,
}

pub type RegionGrid2 = RegionGrid<2>;
pub type RegionGrid3 = RegionGrid<3>;

const NO_FEATURE: u32 = u32::MAX;

impl<const D: usize> RegionGrid<D> {
    pub fn new(labels: LabelGrid<D>) -> Self {
        let feature = feature_transform(&labels);
        RegionGrid { labels, feature }
    }

    pub fn from_fn(spec: GridSpec<D>, f: impl FnMut(SVector<f64, D>) -> Cell) -> Self {
        Self::new(LabelGrid::from_fn(spec, f))
    }

    pub fn spec(&self) -> &GridSpec<D> {
        &self.labels.spec
    }

    pub fn labels(&self) -> &LabelGrid<D> {
        &self.labels
    }

    pub fn into_labels(self) -> LabelGrid<D> {
        self.labels
    }

    pub fn cell_size(&self) -> f64 {
        self.labels.spec.cell
    }

    pub fn is_free_cell(&self, idx: [usize; D]) -> bool {
        self.labels.get(idx).is_free()
    }

    pub fn is_free(&self, p: &SVector<f64, D>) -> bool {
        self.labels.label_at(p).is_free()
    }

    pub fn free_count(&self) -> usize {
        self.labels.count(Cell::Free)
    }

    pub fn free_volume(&self) -> f64 {
        self.free_count() as f64 * self.cell_size().powi(D as i32)
    }

    /// Nearest point of the non-free set (including the grid exterior).
    pub fn nearest(&self, p: &SVector<f64, D>) -> Nearest<D> {
        let spec = &self.labels.spec;
        let Some(c) = spec.cell_of(p) else {
            return Nearest { dist: 0.0, point: *p, out_of_bounds: true };
        };
        if !self.labels.get(c).is_free() {
            return Nearest { dist: 0.0, point: *p, out_of_bounds: false };
        }
        let mut best = f64::INFINITY;
        let mut best_pt = *p;
        let hi = spec.upper();
        for a in 0..D {
            let dl = p[a] - spec.origin[a];
            if dl < best {
                best = dl;
                best_pt = *p;
                best_pt[a] = spec.origin[a];
            }
            let du = hi[a] - p[a];
            if du < best {
                best = du;
                best_pt = *p;
                best_pt[a] = hi[a];
            }
        }
        for n in spec.block(c) {
            let f = self.feature[spec.index(n)];
            if f == NO_FEATURE {
                continue;
            }
            let (lo, up) = spec.cell_box(spec.unindex(f as usize));
            let q = box_closest(&lo, &up, p);
            let d = (q - p).norm();
            if d < best {
                best = d;
                best_pt = q;
            }
        }
        Nearest { dist: best, point: best_pt, out_of_bounds: false }
    }

    /// Distance from `p` to the non-free set; 0 inside it or out of bounds.
    pub fn distance(&self, p: &SVector<f64, D>) -> f64 {
        self.nearest(p).dist
    }

    /// Grows the non-free set by `d`.
    pub fn enlarge(&self, d: f64) -> Result<Self> {
        if !(d >= 0.0) {
            return Err(invalid(format!("enlarge distance must be >= 0, got {d}")));
        }
        if d == 0.0 {
            return Ok(self.clone());
        }
        let spec = self.labels.spec.clone();
        let cells = (0..spec.len())
            .map(|i| {
                let lab = self.labels.cells[i];
                if !lab.is_free() {
                    return lab;
                }
                if self.distance(&spec.center(spec.unindex(i))) <= d {
                    Cell::Occupied
                } else {
                    Cell::Free
                }
            })
            .collect();
        Ok(Self::new(LabelGrid { spec, cells }))
    }

    /// Keeps only free points at distance `>= d` from the non-free set.
    pub fn reduce(&self, d: f64) -> Result<Self> {
        if !(d >= 0.0) {
            return Err(invalid(format!("reduce distance must be >= 0, got {d}")));
        }
        if d == 0.0 {
            return Ok(self.clone());
        }
        let spec = self.labels.spec.clone();
        let cells = (0..spec.len())
            .map(|i| {
                let lab = self.labels.cells[i];
                if lab.is_free() && self.distance(&spec.center(spec.unindex(i))) < d {
                    Cell::Occupied
                } else {
                    lab
                }
            })
            .collect();
        Ok(Self::new(LabelGrid { spec, cells }))
    }

    /// True iff every cell whose closed box meets the segment is free.
    pub fn segment_clear(&self, a: &SVector<f64, D>, b: &SVector<f64, D>) -> bool {
        let spec = &self.labels.spec;
        if !spec.contains(a) || !spec.contains(b) {
            return false;
        }
        let eps = spec.cell * 1e-9;
        for c in spec.traverse(a, b) {
            for n in spec.block(c) {
                if self.labels.get(n).is_free() {
                    continue;
                }
                let (lo, hi) = spec.cell_box(n);
                if segment_meets_box(a, b, &lo, &hi, eps) {
                    return false;
                }
            }
        }
        true
    }

    /// Removes balls of radius `r` around each centre from the free set.
    pub fn without_balls(&self, centers: &[SVector<f64, D>], r: f64) -> Self {
        let mut labels = self.labels.clone();
        mark_balls(&mut labels, centers, r, Cell::Occupied);
        Self::new(labels)
    }
}

/// Sets every cell whose centre lies within `r` of a centre to `label`.
pub fn mark_balls<const D: usize>(
    labels: &mut LabelGrid<D>,
    centers: &[SVector<f64, D>],
    r: f64,
    label: Cell,
) {
    let spec = labels.spec.clone();
    for c in centers {
        let lo = spec.clamped_cell_of(&c.add_scalar(-r));
        let hi = spec.clamped_cell_of(&c.add_scalar(r));
        let mut idx = lo;
        loop {
            if (spec.center(idx) - c).norm() <= r {
                labels.set(idx, label);
            }
            let mut a = 0;
            loop {
                if a == D {
                    break;
                }
                if idx[a] < hi[a] {
                    idx[a] += 1;
                    break;
                }
                idx[a] = lo[a];
                a += 1;
            }
            if a == D {
                break;
            }
        }
    }
}

/// Nearest non-free cell for every cell (exact, separable lower-envelope method).
fn feature_transform<const D: usize>(labels: &LabelGrid<D>) -> Vec<u32> {
    let spec = &labels.spec;
    let n = spec.len();
    let mut dist: Vec<f64> = labels
        .cells
        .iter()
        .map(|c| if c.is_free() { f64::INFINITY } else { 0.0 })
        .collect();
    let mut feat: Vec<u32> = (0..n)
        .map(|i| if labels.cells[i].is_free() { NO_FEATURE } else { i as u32 })
        .collect();
    let mut stride = 1usize;
    for axis in 0..D {
        let len = spec.dims[axis];
        let mut f = vec![0.0f64; len];
        let mut fe = vec![0u32; len];
        let mut v = vec![0usize; len];
        let mut z = vec![0.0f64; len + 1];
        for start in 0..n {
            if (start / stride) % len != 0 {
                continue;
            }
            for q in 0..len {
                f[q] = dist[start + q * stride];
                fe[q] = feat[start + q * stride];
            }
            let mut k: isize = -1;
            for q in 0..len {
                if f[q].is_infinite() {
                    continue;
                }
                let qf = q as f64;
                if k < 0 {
                    k = 0;
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    continue;
                }
                loop {
                    let vk = v[k as usize] as f64;
                    let s = ((f[q] + qf * qf) - (f[v[k as usize]] + vk * vk)) / (2.0 * qf - 2.0 * vk);
                    if s <= z[k as usize] {
                        k -= 1;
                        if k < 0 {
                            k = 0;
                            v[0] = q;
                            z[0] = f64::NEG_INFINITY;
                            z[1] = f64::INFINITY;
                            break;
                        }
                    } else {
                        k += 1;
                        v[k as usize] = q;
                        z[k as usize] = s;
                        z[k as usize + 1] = f64::INFINITY;
                        break;
                    }
                }
            }
            if k < 0 {
                continue;
            }
            let mut j = 0usize;
            for p in 0..len {
                let pf = p as f64;
                while z[j + 1] < pf {
                    j += 1;
                }
                let vj = v[j];
                let dv = pf - vj as f64;
                dist[start + p * stride] = dv * dv + f[vj];
                feat[start + p * stride] = fe[vj];
            }
        }
        stride *= len;
    }
    feat
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector2, Vector3};

    fn box_region(cell: f64) -> RegionGrid<2> {
        let spec = GridSpec::covering(Vector2::new(-3.0, -3.0), Vector2::new(5.0, 5.0), cell).unwrap();
        RegionGrid::from_fn(spec, |c| {
            if (0.0..=1.0).contains(&c.x) && (0.0..=1.0).contains(&c.y) {
                Cell::Occupied
            } else {
                Cell::Free
            }
        })
    }

    #[test]
    fn distance_to_box() {
        let cell = 0.05;
        let r = box_region(cell);
        assert_eq!(r.distance(&Vector2::new(0.5, 0.5)), 0.0);
        let d = r.distance(&Vector2::new(2.0, 0.5));
        assert!((d - 1.0).abs() <= cell, "{d}");
        assert!(r.distance(&Vector2::new(1.0, 0.5)) <= cell);
    }

    #[test]
    fn feature_transform_matches_brute_force() {
        let spec = GridSpec::new(Vector2::new(0.0, 0.0), 1.0, [23, 17]).unwrap();
        let mut state = 12345u64;
        let labels = LabelGrid::from_fn(spec.clone(), |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if (state >> 33) % 11 == 0 {
                Cell::Occupied
            } else {
                Cell::Free
            }
        });
        let feat = feature_transform(&labels);
        let sites: Vec<usize> = (0..spec.len()).filter(|&i| !labels.cells[i].is_free()).collect();
        for i in 0..spec.len() {
            let c = spec.center(spec.unindex(i));
            let best = sites
                .iter()
                .map(|&s| (spec.center(spec.unindex(s)) - c).norm_squared())
                .fold(f64::INFINITY, f64::min);
            let got = (spec.center(spec.unindex(feat[i] as usize)) - c).norm_squared();
            assert!((got - best).abs() < 1e-9);
        }
    }

    #[test]
    fn enlarge_disk() {
        let cell = 0.05;
        let spec = GridSpec::covering(Vector2::new(-3.0, -3.0), Vector2::new(3.0, 3.0), cell).unwrap();
        let r = RegionGrid::from_fn(spec.clone(), |c| if c.norm() <= 1.0 { Cell::Occupied } else { Cell::Free });
        // the grid exterior is non-free too, so stay clear of the border
        let e = r.enlarge(0.5).unwrap();
        for i in 0..spec.len() {
            let c = spec.center(spec.unindex(i));
            let rr = c.norm();
            if rr < 1.5 - cell {
                assert!(!e.labels().cells[i].is_free());
            }
            if rr > 1.5 + cell && c.amax() < 2.4 {
                assert!(e.labels().cells[i].is_free());
            }
        }
        let same = r.enlarge(0.0).unwrap();
        assert_eq!(same.labels(), r.labels());
    }

    #[test]
    fn reduce_square() {
        let cell = 0.05;
        let spec = GridSpec::covering(Vector2::new(0.0, 0.0), Vector2::new(4.0, 4.0), cell).unwrap();
        let r = RegionGrid::from_fn(spec, |_| Cell::Free);
        let red = r.reduce(1.0).unwrap();
        let side = (red.free_count() as f64).sqrt() * cell;
        assert!((side - 2.0).abs() <= cell, "{side}");
        let disk_spec = GridSpec::covering(Vector2::new(-2.0, -2.0), Vector2::new(2.0, 2.0), cell).unwrap();
        let disk = RegionGrid::from_fn(disk_spec, |c| if c.norm() <= 1.0 { Cell::Free } else { Cell::Occupied });
        assert_eq!(disk.reduce(1.5).unwrap().free_count(), 0);
    }

    #[test]
    fn segment_clear_cases() {
        let r = box_region(0.1);
        let a = Vector2::new(-2.0, 0.53);
        let b = Vector2::new(3.0, 0.53);
        assert!(!r.segment_clear(&a, &b));
        assert!(r.segment_clear(&a, &a));
        assert!(r.segment_clear(&Vector2::new(-2.0, 2.0), &Vector2::new(3.0, 2.0)));
        // running exactly along the top face of the occupied cells
        let top = 1.0;
        assert!(!r.segment_clear(&Vector2::new(-2.0, top), &Vector2::new(3.0, top)));
    }

    #[test]
    fn traverse_3d_straight() {
        let spec = GridSpec::new(Vector3::zeros(), 1.0, [10, 10, 10]).unwrap();
        let cells = spec.traverse(&Vector3::new(0.5, 0.5, 0.5), &Vector3::new(4.5, 0.5, 0.5));
        assert_eq!(cells.len(), 5);
        assert_eq!(cells[4], [4, 0, 0]);
    }
}
