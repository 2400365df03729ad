//! Two-dimensional outcome scans and boundary extraction.
//!
//! The grid is classified in parallel and stored row-major (y outer). Every
//! grid edge whose endpoints differ is refined by bisection; crossings are
//! joined cell by cell (marching squares) and chained into polylines. A
//! total-least-squares line is fitted to all crossings in coordinates scaled
//! to the unit square.

use rayon::prelude::*;
use serde::Serialize;

/// Uniform axis with `n >= 2` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn at(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            return self.max;
        }
        self.min + (self.max - self.min) * i as f64 / (self.n - 1) as f64
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub x: f64,
    pub y: f64,
    /// Half-width of the final bisection bracket.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    /// y = intercept + slope·x (infinite slope for a vertical line).
    pub slope: f64,
    pub intercept: f64,
    /// Unit normal and offset in scaled coordinates: n·p = offset.
    pub normal: [f64; 2],
    pub offset: f64,
    /// Largest orthogonal distance of a crossing from the line, in units of
    /// the scanned range.
    pub max_residual: f64,
    /// The same distance divided by the extent of the crossings along the line.
    pub max_residual_data: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Boundary {
    pub crossings: Vec<Crossing>,
    /// Chains of indices into `crossings`.
    pub polylines: Vec<Vec<usize>>,
    pub fit: Option<LineFit>,
}

/// Classify a grid: `cls(x, y)` returns `true` for the reference outcome.
pub fn classify_grid<T, E, C>(x: Axis, y: Axis, cls: &C) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    C: Fn(f64, f64) -> Result<T, E> + Sync,
{
    (0..x.n * y.n)
        .into_par_iter()
        .map(|idx| cls(x.at(idx % x.n), y.at(idx / x.n)))
        .collect()
}

fn bisect<E, C>(cls: &C, a: (f64, f64), b: (f64, f64), sa: bool, steps: u32) -> Result<Crossing, E>
where
    C: Fn(f64, f64) -> Result<bool, E>,
{
    let (mut lo, mut hi) = (a, b);
    for _ in 0..steps {
        let mid = (0.5 * (lo.0 + hi.0), 0.5 * (lo.1 + hi.1));
        if cls(mid.0, mid.1)? == sa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let half = 0.5 * ((hi.0 - lo.0).abs() + (hi.1 - lo.1).abs());
    Ok(Crossing {
        x: 0.5 * (lo.0 + hi.0),
        y: 0.5 * (lo.1 + hi.1),
        uncertainty: half,
    })
}

#[derive(Clone, Copy)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Extract the outcome boundary from a classified grid.
pub fn extract_boundary<E, C>(x: Axis, y: Axis, smooth: &[bool], cls: &C, refine: u32) -> Result<Boundary, E>
where
    E: Send,
    C: Fn(f64, f64) -> Result<bool, E> + Sync,
{
    let s = |i: usize, j: usize| smooth[j * x.n + i];
    let mut edges = Vec::new();
    // ids: horizontal edges first, then vertical
    let h_id = |i: usize, j: usize| j * (x.n - 1) + i;
    let v_id = |i: usize, j: usize| (x.n - 1) * y.n + j * x.n + i;
    let mut slot = vec![usize::MAX; (x.n - 1) * y.n + x.n * (y.n - 1)];
    for j in 0..y.n {
        for i in 0..x.n - 1 {
            if s(i, j) != s(i + 1, j) {
                slot[h_id(i, j)] = edges.len();
                edges.push(Edge::H(i, j));
            }
        }
    }
    for j in 0..y.n - 1 {
        for i in 0..x.n {
            if s(i, j) != s(i, j + 1) {
                slot[v_id(i, j)] = edges.len();
                edges.push(Edge::V(i, j));
            }
        }
    }
    let crossings: Vec<Crossing> = edges
        .par_iter()
        .map(|e| {
            let (a, b) = match *e {
                Edge::H(i, j) => ((i, j), (i + 1, j)),
                Edge::V(i, j) => ((i, j), (i, j + 1)),
            };
            bisect(cls, (x.at(a.0), y.at(a.1)), (x.at(b.0), y.at(b.1)), s(a.0, a.1), refine)
        })
        .collect::<Result<_, E>>()?;

    // saddle cells are resolved by the outcome at the cell centre
    let mut saddles = Vec::new();
    for j in 0..y.n - 1 {
        for i in 0..x.n - 1 {
            if s(i, j) == s(i + 1, j + 1) && s(i + 1, j) == s(i, j + 1) && s(i, j) != s(i + 1, j) {
                saddles.push((i, j));
            }
        }
    }
    let centres: Vec<bool> = saddles
        .par_iter()
        .map(|&(i, j)| cls(0.5 * (x.at(i) + x.at(i + 1)), 0.5 * (y.at(j) + y.at(j + 1))))
        .collect::<Result<_, E>>()?;

    let mut segments = Vec::new();
    let mut saddle_iter = saddles.iter().zip(&centres).peekable();
    for j in 0..y.n - 1 {
        for i in 0..x.n - 1 {
            let bottom = slot[h_id(i, j)];
            let top = slot[h_id(i, j + 1)];
            let left = slot[v_id(i, j)];
            let right = slot[v_id(i + 1, j)];
            let hits: Vec<usize> = [bottom, right, top, left].into_iter().filter(|&k| k != usize::MAX).collect();
            match hits.len() {
                2 => segments.push((hits[0], hits[1])),
                4 => {
                    let (_, &centre) = saddle_iter.next().expect("saddle list in cell order");
                    if centre == s(i, j) {
                        // bottom-left and top-right joined through the centre
                        segments.push((bottom, right));
                        segments.push((top, left));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                _ => {}
            }
        }
    }
    let polylines = chain(crossings.len(), &segments);
    let fit = fit_line(&crossings, x, y);
    Ok(Boundary {
        crossings,
        polylines,
        fit,
    })
}

/// Join segments into maximal chains; open chains first, then cycles.
fn chain(n: usize, segments: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::with_capacity(2); n];
    for &(a, b) in segments {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut used = vec![false; n];
    let mut out = Vec::new();
    let walk = |start: usize, used: &mut Vec<bool>| {
        let mut line = vec![start];
        used[start] = true;
        let mut cur = start;
        while let Some(&next) = adj[cur].iter().find(|&&v| !used[v]) {
            used[next] = true;
            line.push(next);
            cur = next;
        }
        if line.len() > 2 && adj[cur].contains(&start) {
            line.push(start);
        }
        line
    };
    for v in 0..n {
        if !used[v] && adj[v].len() <= 1 {
            out.push(walk(v, &mut used));
        }
    }
    for v in 0..n {
        if !used[v] {
            out.push(walk(v, &mut used));
        }
    }
    out
}

/// Orthogonal regression in coordinates scaled to the unit square.
pub fn fit_line(pts: &[Crossing], x: Axis, y: Axis) -> Option<LineFit> {
    if pts.len() < 2 {
        return None;
    }
    let scaled: Vec<(f64, f64)> = pts
        .iter()
        .map(|p| ((p.x - x.min) / x.span(), (p.y - y.min) / y.span()))
        .collect();
    let n = scaled.len() as f64;
    let (mx, my) = scaled.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(a, b) in &scaled {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    // direction of largest spread of the 2x2 scatter matrix
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let dir = [theta.cos(), theta.sin()];
    let normal = [-dir[1], dir[0]];
    let offset = normal[0] * mx + normal[1] * my;
    let mut max_res = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(a, b) in &scaled {
        max_res = max_res.max((normal[0] * a + normal[1] * b - offset).abs());
        let t = dir[0] * a + dir[1] * b;
        lo = lo.min(t);
        hi = hi.max(t);
    }
    // back to original units: n0 (x − xmin)/Sx + n1 (y − ymin)/Sy = offset
    let (slope, intercept) = if normal[1].abs() > 1e-15 {
        let slope = -normal[0] / normal[1] * y.span() / x.span();
        let y_at_xmin = y.min + offset / normal[1] * y.span();
        (slope, y_at_xmin - slope * x.min)
    } else {
        (f64::INFINITY, f64::NAN)
    };
    Some(LineFit {
        slope,
        intercept,
        normal,
        offset,
        max_residual: max_res,
        max_residual_data: if hi > lo { max_res / (hi - lo) } else { f64::INFINITY },
        points: pts.len(),
    })
}
