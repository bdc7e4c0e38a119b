//! Nodal length and phase-singularity counts from gridded fields.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Point};

/// Relative size of the value substituted for exact zeros.
pub const ZERO_NUDGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodalLengthResult {
    pub length: f64,
    pub cells_crossed: usize,
    pub saddle_cells: usize,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularityCount {
    pub count: usize,
    /// Row-major cell indices with nonzero winding, ascending.
    pub cells: Vec<usize>,
    /// Sum of signed cell windings.
    pub total_winding: i64,
    /// Winding along the boundary of the union of inside cells.
    pub boundary_winding: i64,
    /// Set when a `+-2` quadrant jump had zero cross product.
    pub ambiguous: bool,
}

impl SingularityCount {
    pub fn parity_ok(&self) -> bool {
        self.total_winding == self.boundary_winding
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonLength {
    pub value: f64,
    /// `eps < 2 h max |grad|`: the band is thinner than the grid can resolve.
    pub undersampled: bool,
}

fn check_grid(g: &GridSpec, len: usize) -> Result<()> {
    if g.points_per_wavelength < crate::geometry::MIN_POINTS_PER_WAVELENGTH {
        return Err(Error::Resolution(g.points_per_wavelength));
    }
    if len != g.node_count() {
        return Err(Error::Domain(format!(
            "grid has {} nodes but {} values were given",
            g.node_count(),
            len
        )));
    }
    Ok(())
}

fn nudge_scale(values: &[f64]) -> f64 {
    let ms = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    let rms = ms.sqrt();
    ZERO_NUDGE * if rms > 0.0 { rms } else { 1.0 }
}

#[inline]
fn nz(v: f64, tiny: f64) -> f64 {
    if v == 0.0 {
        tiny
    } else {
        v
    }
}

// zero crossing parameter from a to b
#[inline]
fn cut(a: f64, b: f64) -> f64 {
    a / (a - b)
}

/// Marching-squares nodal length over the cells wholly inside the domain.
///
/// Saddle cells (alternating corner signs) are resolved with `center(p)`, the
/// field at the cell centre; `None` falls back to the mean of the corners.
pub fn nodal_length(
    values: &[f64],
    g: &GridSpec,
    center: Option<&(dyn Fn(Point) -> f64 + Sync)>,
) -> Result<NodalLengthResult> {
    check_grid(g, values.len())?;
    let tiny = nudge_scale(values);
    let inside = g.inside_cells();
    let (nx, cx) = (g.nx, g.nx - 1);
    let rows: Vec<(f64, usize, usize)> = (0..g.ny - 1)
        .into_par_iter()
        .map(|j| {
            let mut len = 0.0;
            let mut crossed = 0;
            let mut saddles = 0;
            for i in 0..cx {
                if !inside[j * cx + i] {
                    continue;
                }
                let v0 = nz(values[j * nx + i], tiny);
                let v1 = nz(values[j * nx + i + 1], tiny);
                let v2 = nz(values[(j + 1) * nx + i + 1], tiny);
                let v3 = nz(values[(j + 1) * nx + i], tiny);
                let (p0, p1, p2, p3) = (v0 > 0.0, v1 > 0.0, v2 > 0.0, v3 > 0.0);
                if p0 == p1 && p1 == p2 && p2 == p3 {
                    continue;
                }
                crossed += 1;
                // crossing points in cell-local coordinates
                let e01 = || [cut(v0, v1), 0.0];
                let e12 = || [1.0, cut(v1, v2)];
                let e23 = || [cut(v3, v2), 1.0];
                let e30 = || [0.0, cut(v0, v3)];
                let seg = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
                let l = if p0 == p2 && p1 == p3 {
                    saddles += 1;
                    let c = match center {
                        Some(f) => f([g.x(i) + 0.5 * g.h, g.y(j) + 0.5 * g.h]),
                        None => 0.25 * (v0 + v1 + v2 + v3),
                    };
                    if (nz(c, tiny) > 0.0) == p0 {
                        seg(e01(), e12()) + seg(e23(), e30())
                    } else {
                        seg(e30(), e01()) + seg(e12(), e23())
                    }
                } else {
                    let mut pts = [[0.0; 2]; 2];
                    let mut n = 0;
                    let mut push = |p: [f64; 2]| {
                        pts[n] = p;
                        n += 1;
                    };
                    if p0 != p1 {
                        push(e01());
                    }
                    if p1 != p2 {
                        push(e12());
                    }
                    if p2 != p3 {
                        push(e23());
                    }
                    if p3 != p0 {
                        push(e30());
                    }
                    seg(pts[0], pts[1])
                };
                len += l;
            }
            (len * g.h, crossed, saddles)
        })
        .collect();
    let mut out = NodalLengthResult {
        length: 0.0,
        cells_crossed: 0,
        saddle_cells: 0,
        h: g.h,
    };
    for (l, c, s) in rows {
        out.length += l;
        out.cells_crossed += c;
        out.saddle_cells += s;
    }
    Ok(out)
}

#[inline]
fn quadrant(re: f64, im: f64) -> i32 {
    match (re > 0.0, im > 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

/// Quarter turns from `a` to `b`, and whether a half turn had to be guessed.
#[inline]
fn edge_turn(a: (f64, f64), b: (f64, f64)) -> (i64, bool) {
    match (quadrant(b.0, b.1) - quadrant(a.0, a.1)).rem_euclid(4) {
        0 => (0, false),
        1 => (1, false),
        3 => (-1, false),
        _ => {
            let cross = a.0 * b.1 - a.1 * b.0;
            if cross > 0.0 {
                (2, false)
            } else if cross < 0.0 {
                (-2, false)
            } else {
                (2, true)
            }
        }
    }
}

/// Cells whose corner values of `(re, im)` wind around the origin.
pub fn count_singularities(re: &[f64], im: &[f64], g: &GridSpec) -> Result<SingularityCount> {
    check_grid(g, re.len())?;
    check_grid(g, im.len())?;
    let (tr, ti) = (nudge_scale(re), nudge_scale(im));
    let inside = g.inside_cells();
    let (nx, cx, cy) = (g.nx, g.nx - 1, g.ny - 1);
    let node = |i: usize, j: usize| (nz(re[j * nx + i], tr), nz(im[j * nx + i], ti));
    // corners counter-clockwise, and the neighbour across each edge
    let rows: Vec<(Vec<(usize, i64)>, i64, i64, bool)> = (0..cy)
        .into_par_iter()
        .map(|j| {
            let mut hits = Vec::new();
            let (mut total, mut bnd, mut amb) = (0i64, 0i64, false);
            for i in 0..cx {
                if !inside[j * cx + i] {
                    continue;
                }
                let c = [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)];
                let neighbour = [
                    (j > 0).then(|| (j - 1) * cx + i),
                    (i + 1 < cx).then(|| j * cx + i + 1),
                    (j + 1 < cy).then(|| (j + 1) * cx + i),
                    (i > 0).then(|| j * cx + i - 1),
                ];
                let mut w = 0;
                for e in 0..4 {
                    let (t, a) = edge_turn(c[e], c[(e + 1) % 4]);
                    amb |= a;
                    w += t;
                    if !neighbour[e].is_some_and(|n| inside[n]) {
                        bnd += t;
                    }
                }
                if w != 0 {
                    hits.push((j * cx + i, w / 4));
                }
                total += w;
            }
            (hits, total, bnd, amb)
        })
        .collect();
    let mut out = SingularityCount {
        count: 0,
        cells: Vec::new(),
        total_winding: 0,
        boundary_winding: 0,
        ambiguous: false,
    };
    for (hits, total, bnd, amb) in rows {
        out.cells.extend(hits.iter().map(|h| h.0));
        out.total_winding += total;
        out.boundary_winding += bnd;
        out.ambiguous |= amb;
    }
    out.count = out.cells.len();
    out.total_winding /= 4;
    out.boundary_winding /= 4;
    Ok(out)
}

/// Band estimator `(1/(2 eps)) sum h^2 1{|B| <= eps} |grad B|` over nodes inside the domain.
pub fn epsilon_nodal_length(
    values: &[f64],
    d1: &[f64],
    d2: &[f64],
    eps: f64,
    g: &GridSpec,
) -> Result<EpsilonLength> {
    check_grid(g, values.len())?;
    check_grid(g, d1.len())?;
    check_grid(g, d2.len())?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let mut sum = 0.0;
    let mut max_grad = 0.0f64;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if !(g.is_aligned_rect() || g.node_inside(i, j)) {
                continue;
            }
            let n = g.index(i, j);
            let gn = d1[n].hypot(d2[n]);
            max_grad = max_grad.max(gn);
            if values[n].abs() <= eps {
                sum += gn;
            }
        }
    }
    Ok(EpsilonLength {
        value: sum * g.h * g.h / (2.0 * eps),
        undersampled: eps < 2.0 * g.h * max_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    fn grid(h_inv: f64) -> GridSpec {
        GridSpec::new(Domain::unit_square(), 1.0, h_inv).unwrap()
    }

    // f in coordinates of [0, 1]^2
    fn sample(g: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..g.ny)
            .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
            .map(|(i, j)| f(g.x(i) + 0.5, g.y(j) + 0.5))
            .collect()
    }

    #[test]
    fn straight_line() {
        let g = grid(100.0);
        let v = sample(&g, |x, _| x - 0.25);
        let r = nodal_length(&v, &g, None).unwrap();
        assert!((r.length - 1.0).abs() < 1e-9);
        assert_eq!(r.saddle_cells, 0);
    }

    #[test]
    fn no_sign_change_means_zero_length() {
        let g = grid(20.0);
        let v = sample(&g, |x, y| 2.0 + x * y);
        let r = nodal_length(&v, &g, None).unwrap();
        assert_eq!(r.length, 0.0);
        assert_eq!(r.cells_crossed, 0);
    }

    #[test]
    fn saddle_uses_center_sign() {
        // f = x y on a cell centred at the origin: corners alternate
        let g = GridSpec::new(Domain::rect(1.0, 1.0).unwrap(), 1.0, 4.0).unwrap();
        let v = sample(&g, |x, y| (x - 0.625) * (y - 0.625) + 0.01);
        let pos = |_: Point| 1.0;
        let neg = |_: Point| -1.0;
        let a = nodal_length(&v, &g, Some(&pos)).unwrap();
        let b = nodal_length(&v, &g, Some(&neg)).unwrap();
        assert!(a.saddle_cells > 0);
        assert!(a.length > 0.0 && b.length > 0.0);
    }

    #[test]
    fn single_vortex_and_parity() {
        let g = grid(100.0);
        let re = sample(&g, |x, _| x - 0.5 - 1e-3);
        let im = sample(&g, |_, y| y - 0.5 - 1e-3);
        let c = count_singularities(&re, &im, &g).unwrap();
        assert_eq!(c.count, 1);
        assert_eq!(c.total_winding, 1);
        assert!(c.parity_ok());
        assert!(!c.ambiguous);
        let im = sample(&g, |x, _| x - 0.3);
        let c = count_singularities(&re, &im, &g).unwrap();
        assert_eq!(c.count, 0);
    }

    #[test]
    fn antivortex_winds_negatively() {
        let g = grid(50.0);
        let re = sample(&g, |x, _| x - 0.51);
        let im = sample(&g, |_, y| 0.49 - y);
        let c = count_singularities(&re, &im, &g).unwrap();
        assert_eq!((c.count, c.total_winding, c.boundary_winding), (1, -1, -1));
    }

    #[test]
    fn band_estimator_on_a_line() {
        let g = grid(100.0);
        let v = sample(&g, |x, _| x - 0.5);
        let d1 = vec![1.0; v.len()];
        let d2 = vec![0.0; v.len()];
        let r = epsilon_nodal_length(&v, &d1, &d2, 0.1, &g).unwrap();
        assert!((r.value - 1.0).abs() < 0.1);
        assert!(!r.undersampled);
        assert!(epsilon_nodal_length(&v, &d1, &d2, 0.0, &g).is_err());
    }

    #[test]
    fn length_checks_sizes() {
        let g = grid(10.0);
        assert!(nodal_length(&[1.0, -1.0], &g, None).is_err());
    }
}
