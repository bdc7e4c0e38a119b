//! Convex domains, their metric quantities, boundary quadrature and
//! evaluation grids.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Hard floor on grid resolution.
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Rect { width: f64, height: f64 },
    Disk { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct Domain {
    shape: Shape,
    center: Point,
}

#[derive(Serialize, Deserialize)]
struct DomainRepr {
    #[serde(flatten)]
    shape: Shape,
    #[serde(default, skip_serializing_if = "is_origin")]
    center: Point,
}

fn is_origin(p: &Point) -> bool {
    *p == [0.0, 0.0]
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;

    fn try_from(r: DomainRepr) -> Result<Self> {
        Domain::with_center(r.shape, r.center)
    }
}

impl From<Domain> for DomainRepr {
    fn from(d: Domain) -> Self {
        DomainRepr {
            shape: d.shape,
            center: d.center,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainMetrics {
    pub area: f64,
    pub diameter: f64,
    pub inradius: f64,
    pub perimeter: f64,
}

impl Domain {
    /// Rectangle centred at the origin.
    pub fn rect(width: f64, height: f64) -> Result<Self> {
        Self::with_center(Shape::Rect { width, height }, [0.0, 0.0])
    }

    /// Disk centred at the origin.
    pub fn disk(radius: f64) -> Result<Self> {
        Self::with_center(Shape::Disk { radius }, [0.0, 0.0])
    }

    pub fn unit_square() -> Self {
        Self::rect(1.0, 1.0).expect("unit square is valid")
    }

    /// The origin must lie in the interior.
    pub fn with_center(shape: Shape, center: Point) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let ok = match shape {
            Shape::Rect { width, height } => positive(width) && positive(height),
            Shape::Disk { radius } => positive(radius),
        };
        if !ok || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::Config(format!("invalid domain {shape:?}")));
        }
        let d = Domain { shape, center };
        let interior = match shape {
            Shape::Rect { width, height } => {
                center[0].abs() < width / 2.0 && center[1].abs() < height / 2.0
            }
            Shape::Disk { radius } => center[0].hypot(center[1]) < radius,
        };
        if !interior {
            return Err(Error::Config(format!(
                "domain {shape:?} centred at {center:?} does not contain the origin in its interior"
            )));
        }
        Ok(d)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn metrics(&self) -> DomainMetrics {
        match self.shape {
            Shape::Rect { width, height } => DomainMetrics {
                area: width * height,
                diameter: width.hypot(height),
                inradius: width.min(height) / 2.0,
                perimeter: 2.0 * (width + height),
            },
            Shape::Disk { radius } => DomainMetrics {
                area: PI * radius * radius,
                diameter: 2.0 * radius,
                inradius: radius,
                perimeter: 2.0 * PI * radius,
            },
        }
    }

    pub fn area(&self) -> f64 {
        self.metrics().area
    }

    /// Closed-set membership.
    pub fn contains(&self, p: Point) -> bool {
        self.contains_with_slack(p, 0.0)
    }

    pub(crate) fn contains_with_slack(&self, p: Point, slack: f64) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        match self.shape {
            Shape::Rect { width, height } => {
                dx.abs() <= width / 2.0 + slack && dy.abs() <= height / 2.0 + slack
            }
            Shape::Disk { radius } => {
                let r = radius + slack;
                dx * dx + dy * dy <= r * r
            }
        }
    }

    /// Lower-left and upper-right corners of the bounding box.
    pub fn bounding_box(&self) -> (Point, Point) {
        let (hw, hh) = match self.shape {
            Shape::Rect { width, height } => (width / 2.0, height / 2.0),
            Shape::Disk { radius } => (radius, radius),
        };
        (
            [self.center[0] - hw, self.center[1] - hh],
            [self.center[0] + hw, self.center[1] + hh],
        )
    }

    /// Image under `x -> factor * x`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let shape = match self.shape {
            Shape::Rect { width, height } => Shape::Rect {
                width: width * factor,
                height: height * factor,
            },
            Shape::Disk { radius } => Shape::Disk {
                radius: radius * factor,
            },
        };
        Self::with_center(shape, [self.center[0] * factor, self.center[1] * factor])
    }

    pub fn boundary(&self) -> BoundaryParam {
        BoundaryParam { domain: *self }
    }
}

/// Unit-speed, counter-clockwise parameterisation of the boundary.
///
/// Rectangles start at the lower-left corner; disks at angle zero.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryParam {
    domain: Domain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub point: Point,
    pub normal: Point,
    pub weight: f64,
}

impl BoundaryParam {
    pub fn perimeter(&self) -> f64 {
        self.domain.metrics().perimeter
    }

    /// Point and outward unit normal at arc length `t` (taken modulo the perimeter).
    pub fn at(&self, t: f64) -> (Point, Point) {
        let c = self.domain.center;
        let t = t.rem_euclid(self.perimeter());
        match self.domain.shape {
            Shape::Disk { radius } => {
                let (s, co) = (t / radius).sin_cos();
                ([c[0] + radius * co, c[1] + radius * s], [co, s])
            }
            Shape::Rect { width, height } => {
                let (x0, y0) = (c[0] - width / 2.0, c[1] - height / 2.0);
                if t < width {
                    ([x0 + t, y0], [0.0, -1.0])
                } else if t < width + height {
                    ([x0 + width, y0 + (t - width)], [1.0, 0.0])
                } else if t < 2.0 * width + height {
                    ([x0 + width - (t - width - height), y0 + height], [0.0, 1.0])
                } else {
                    ([x0, y0 + height - (t - 2.0 * width - height)], [-1.0, 0.0])
                }
            }
        }
    }

    /// `n` quadrature nodes with weights summing to the perimeter.
    ///
    /// Disks use the periodic trapezoid rule. Rectangles split `n` across the
    /// four edges in proportion to length and use the midpoint rule on each
    /// edge, so no node sits on a corner.
    pub fn nodes(&self, n: usize) -> Result<Vec<BoundaryNode>> {
        if n < 4 {
            return Err(Error::Domain(format!("need at least 4 boundary nodes, got {n}")));
        }
        match self.domain.shape {
            Shape::Disk { radius } => {
                let w = 2.0 * PI * radius / n as f64;
                Ok((0..n)
                    .map(|m| {
                        let (point, normal) = self.at(m as f64 * w);
                        BoundaryNode { point, normal, weight: w }
                    })
                    .collect())
            }
            Shape::Rect { width, height } => {
                let lengths = [width, height, width, height];
                let counts = split_counts(n, &lengths);
                let mut out = Vec::with_capacity(n);
                let mut start = 0.0;
                for (len, cnt) in lengths.iter().zip(counts) {
                    let w = len / cnt as f64;
                    for m in 0..cnt {
                        let (point, normal) = self.at(start + (m as f64 + 0.5) * w);
                        out.push(BoundaryNode { point, normal, weight: w });
                    }
                    start += len;
                }
                Ok(out)
            }
        }
    }
}

impl BoundaryParam {
    /// Gauss-Legendre panels of length at most `max_panel` with `order` nodes
    /// each on every rectangle edge; the periodic trapezoid rule with the same
    /// node density on a circle.
    pub fn gauss_nodes(&self, max_panel: f64, order: usize) -> Result<Vec<BoundaryNode>> {
        if !(max_panel > 0.0 && max_panel.is_finite()) || order < 2 {
            return Err(Error::Domain(format!(
                "invalid boundary panelling ({max_panel}, {order})"
            )));
        }
        match self.domain.shape {
            Shape::Disk { .. } => {
                let n = ((self.perimeter() / max_panel).ceil() as usize * order).max(4);
                self.nodes(n)
            }
            Shape::Rect { width, height } => {
                let rule = gauss_quad::GaussLegendre::new(order)
                    .map_err(|e| Error::Quadrature(e.to_string()))?;
                let mut out = Vec::new();
                let mut start = 0.0;
                for len in [width, height, width, height] {
                    let panels = (len / max_panel).ceil().max(1.0) as usize;
                    let pw = len / panels as f64;
                    for p in 0..panels {
                        let a = start + p as f64 * pw;
                        for &(x, w) in rule.as_node_weight_pairs() {
                            let (point, normal) = self.at(a + 0.5 * pw * (x + 1.0));
                            out.push(BoundaryNode {
                                point,
                                normal,
                                weight: 0.5 * pw * w,
                            });
                        }
                    }
                    start += len;
                }
                Ok(out)
            }
        }
    }
}

/// Largest-remainder split of `n` into parts proportional to `lengths`, each at least 1.
fn split_counts(n: usize, lengths: &[f64]) -> Vec<usize> {
    let total: f64 = lengths.iter().sum();
    let k = lengths.len();
    let free = n - k;
    let ideal: Vec<f64> = lengths.iter().map(|l| free as f64 * l / total).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let mut rest = free - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in &order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts.iter().map(|c| c + 1).collect()
}

/// Square-cell grid over a domain's bounding box.
///
/// The spacing is the largest value not exceeding `1 / (sqrt(E) * points_per_wavelength)`
/// that divides the bounding-box width, so grid lines fall on the left and right
/// edges; rectangles whose height is commensurate are covered exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub domain: Domain,
    pub energy: f64,
    pub points_per_wavelength: f64,
    pub h: f64,
    pub origin: Point,
    pub nx: usize,
    pub ny: usize,
    aligned: bool,
}

impl GridSpec {
    pub fn new(domain: Domain, energy: f64, points_per_wavelength: f64) -> Result<Self> {
        if !(energy.is_finite() && energy > 0.0) {
            return Err(Error::Domain(format!("energy must be positive, got {energy}")));
        }
        if !(points_per_wavelength >= MIN_POINTS_PER_WAVELENGTH) {
            return Err(Error::Resolution(points_per_wavelength));
        }
        let target = 1.0 / (energy.sqrt() * points_per_wavelength);
        let (lo, hi) = domain.bounding_box();
        let (bw, bh) = (hi[0] - lo[0], hi[1] - lo[1]);
        let cells_x = ((bw / target) - 1e-9).ceil().max(1.0) as usize;
        let h = bw / cells_x as f64;
        let ratio = bh / h;
        let cells_y = (ratio - 1e-9).ceil().max(1.0) as usize;
        let aligned = (ratio - cells_y as f64).abs() < 1e-9 * ratio.max(1.0);
        Ok(GridSpec {
            domain,
            energy,
            points_per_wavelength,
            h,
            origin: lo,
            nx: cells_x + 1,
            ny: cells_y + 1,
            aligned,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.origin[0] + i as f64 * self.h
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.origin[1] + j as f64 * self.h
    }

    /// Row-major index of node `(i, j)`, `i` along x.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// True when grid lines coincide with every edge of a rectangular domain.
    pub fn is_aligned_rect(&self) -> bool {
        matches!(self.domain.shape, Shape::Rect { .. }) && self.aligned
    }

    pub fn node_inside(&self, i: usize, j: usize) -> bool {
        self.domain
            .contains_with_slack([self.x(i), self.y(j)], 1e-9 * self.h)
    }

    /// Cell `(i, j)` spans nodes `i..=i+1`, `j..=j+1`; it counts as inside when all corners are.
    pub fn cell_inside(&self, i: usize, j: usize) -> bool {
        if self.is_aligned_rect() {
            return true;
        }
        self.node_inside(i, j)
            && self.node_inside(i + 1, j)
            && self.node_inside(i, j + 1)
            && self.node_inside(i + 1, j + 1)
    }

    /// Mask of cells wholly inside the domain, row-major over `(nx - 1) * (ny - 1)`.
    pub fn inside_cells(&self) -> Vec<bool> {
        let (cx, cy) = (self.nx - 1, self.ny - 1);
        let node: Vec<bool> = (0..self.ny)
            .flat_map(|j| (0..self.nx).map(move |i| (i, j)))
            .map(|(i, j)| self.is_aligned_rect() || self.node_inside(i, j))
            .collect();
        let mut out = vec![false; cx * cy];
        for j in 0..cy {
            for i in 0..cx {
                out[j * cx + i] = node[self.index(i, j)]
                    && node[self.index(i + 1, j)]
                    && node[self.index(i, j + 1)]
                    && node[self.index(i + 1, j + 1)];
            }
        }
        out
    }
}
