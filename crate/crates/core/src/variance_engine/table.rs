//! Covariances of the fourth-chaos building blocks via the diagram formula.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::covariance::EnergyLevel;
use crate::error::{Error, Result};
use crate::geometry::Domain;

use super::integrate::{CovarianceIntegrator, SeparationWeight};
use super::moments::{leading_constant, QExponent};

/// Hermite degrees of one building block on the six components
/// `(B, d1 B, d2 B, B^, d1 B^, d2 B^)`, derivatives normalised.
pub type HermiteDegrees = [u8; 6];

/// `a_1 .. a_6`.
pub const A_BLOCKS: [HermiteDegrees; 6] = [
    [4, 0, 0, 0, 0, 0],
    [0, 4, 0, 0, 0, 0],
    [0, 0, 4, 0, 0, 0],
    [0, 2, 2, 0, 0, 0],
    [2, 2, 0, 0, 0, 0],
    [2, 0, 2, 0, 0, 0],
];

/// `b_1 .. b_10`.
pub const B_BLOCKS: [HermiteDegrees; 10] = [
    [2, 0, 0, 2, 0, 0],
    [2, 0, 0, 0, 2, 0],
    [2, 0, 0, 0, 0, 2],
    [0, 2, 0, 2, 0, 0],
    [0, 0, 2, 2, 0, 0],
    [0, 2, 0, 0, 2, 0],
    [0, 0, 2, 0, 0, 2],
    [0, 2, 0, 0, 0, 2],
    [0, 0, 2, 0, 2, 0],
    [0, 1, 1, 0, 1, 1],
];

/// Weights of `a_1 .. a_6` in the fourth chaos of the length.
pub const LENGTH_WEIGHTS: [f64; 6] = [8.0, -1.0, -1.0, -2.0, -8.0, -8.0];
/// Weights of `b_1 .. b_10` in the mixed part of the fourth chaos of the count.
pub const MIXED_WEIGHTS: [f64; 10] = [2.0, -1.0, -1.0, -1.0, -1.0, -0.25, -0.25, 1.25, 1.25, -3.0];

/// Printed leading constants of `Cov(a_i, a_j)`, `i <= j`, in units of `area/pi^3 log E/E`.
const PRINTED_A: [[(i64, i64); 6]; 6] = {
    let z = (0, 1);
    [
        [(9, 1), (27, 2), (27, 2), (9, 2), (3, 1), (3, 1)],
        [z, (315, 8), (27, 8), (45, 8), (15, 2), (3, 2)],
        [z, z, (315, 8), (45, 8), (3, 2), (15, 2)],
        [z, z, z, (27, 8), (3, 2), (3, 2)],
        [z, z, z, z, (3, 2), (1, 2)],
        [z, z, z, z, z, (3, 2)],
    ]
};

/// Printed leading constants of `Cov(b_i, b_j)`, `i <= j`.
const PRINTED_B: [[(i64, i64); 10]; 10] = {
    let z = (0, 1);
    let s = (1, 16);
    let t = (3, 16);
    let n = (9, 16);
    let f = (5, 16);
    let a = (9, 64);
    let b = (15, 64);
    [
        [(3, 8), (1, 8), (1, 8), (1, 8), (1, 8), n, n, t, t, t],
        [z, n, t, n, t, f, s, s, s, s],
        [z, z, n, t, n, s, f, s, s, s],
        [z, z, z, n, t, f, s, s, s, s],
        [z, z, z, z, n, s, f, s, s, s],
        [z, z, z, z, z, (105, 64), a, b, b, b],
        [z, z, z, z, z, z, (105, 64), b, b, b],
        [z, z, z, z, z, z, z, a, a, a],
        [z, z, z, z, z, z, z, z, a, a],
        [z, z, z, z, z, z, z, z, z, a],
    ]
};

fn factorial(n: u8) -> i64 {
    (1..=n as i64).product()
}

/// `E[prod_k H_{m1_k}(X_k(x)) prod_l H_{m2_l}(X_l(y))]` as integer combinations of covariance products.
///
/// Components `0..3` and `3..6` belong to independent fields, so only edges within one field appear.
pub fn diagram_terms(m1: &HermiteDegrees, m2: &HermiteDegrees) -> Vec<(i64, QExponent)> {
    let rows: Vec<(usize, u8)> = (0..6).filter(|&k| m1[k] > 0).map(|k| (k, m1[k])).collect();
    let cols: Vec<(usize, u8)> = (0..6).filter(|&l| m2[l] > 0).map(|l| (l, m2[l])).collect();
    let mut table = vec![vec![0u8; cols.len()]; rows.len()];
    let mut col_left: Vec<u8> = cols.iter().map(|c| c.1).collect();
    let mut out: BTreeMap<QExponent, i64> = BTreeMap::new();
    let prefactor: i64 = rows.iter().chain(&cols).map(|&(_, d)| factorial(d)).product();
    fill(&rows, &cols, 0, 0, rows.first().map_or(0, |r| r.1), &mut table, &mut col_left, &mut |t| {
        let mut q = [[0u8; 3]; 3];
        let mut denom = 1i64;
        for (a, &(k, _)) in rows.iter().enumerate() {
            for (b, &(l, _)) in cols.iter().enumerate() {
                let c = t[a][b];
                if c > 0 {
                    q[k % 3][l % 3] += c;
                    denom *= factorial(c);
                }
            }
        }
        *out.entry(QExponent::raw(q)).or_insert(0) += prefactor / denom;
    });
    out.into_iter().filter(|&(_, c)| c != 0).map(|(q, c)| (c, q)).collect()
}

#[allow(clippy::too_many_arguments)]
fn fill(
    rows: &[(usize, u8)],
    cols: &[(usize, u8)],
    r: usize,
    c: usize,
    left: u8,
    table: &mut Vec<Vec<u8>>,
    col_left: &mut Vec<u8>,
    emit: &mut dyn FnMut(&Vec<Vec<u8>>),
) {
    if r == rows.len() {
        if col_left.iter().all(|&x| x == 0) {
            emit(table);
        }
        return;
    }
    if c == cols.len() {
        if left == 0 {
            let next = rows.get(r + 1).map_or(0, |x| x.1);
            fill(rows, cols, r + 1, 0, next, table, col_left, emit);
        }
        return;
    }
    let same_field = (rows[r].0 < 3) == (cols[c].0 < 3);
    let max = if same_field { left.min(col_left[c]) } else { 0 };
    for n in 0..=max {
        table[r][c] = n;
        col_left[c] -= n;
        fill(rows, cols, r, c + 1, left - n, table, col_left, emit);
        col_left[c] += n;
    }
    table[r][c] = 0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableEntry {
    pub family: Family,
    /// One-based block indices, `i <= j`.
    pub i: usize,
    pub j: usize,
    pub numeric: f64,
    /// Leading constant as printed, in units of `area/pi^3 log E/E`.
    pub printed_constant: f64,
    /// Leading constant from the diagram expansion and the angular and radial moments.
    pub derived_constant: f64,
    pub energy: f64,
}

impl TableEntry {
    pub fn label(&self) -> String {
        let f = match self.family {
            Family::A => 'a',
            Family::B => 'b',
        };
        if self.i == self.j {
            format!("Var({f}{})", self.i)
        } else {
            format!("Cov({f}{},{f}{})", self.i, self.j)
        }
    }

    /// Unit `area/pi^3 log E/E`.
    fn unit(&self, area: f64) -> f64 {
        area / PI.powi(3) * self.energy.ln() / self.energy
    }

    pub fn ratio_to_printed(&self, area: f64) -> f64 {
        self.numeric / (self.printed_constant * self.unit(area))
    }

    pub fn ratio_to_derived(&self, area: f64) -> f64 {
        self.numeric / (self.derived_constant * self.unit(area))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTable {
    pub energy: f64,
    pub area: f64,
    pub entries: Vec<TableEntry>,
    /// Full symmetric matrices of numeric values.
    pub a: [[f64; 6]; 6],
    pub b: [[f64; 10]; 10],
}

fn ratio(p: (i64, i64)) -> f64 {
    p.0 as f64 / p.1 as f64
}

fn derived_constant(terms: &[(i64, QExponent)]) -> f64 {
    terms.iter().map(|(c, q)| *c as f64 * leading_constant(q)).sum::<f64>() * PI.powi(3)
}

/// All `Cov(a_i, a_j)` and `Cov(b_i, b_j)` at energy `e` over `d`.
pub fn appendix_b_table(e: EnergyLevel, d: &Domain) -> Result<CovarianceTable> {
    let mut specs: Vec<(Family, usize, usize, Vec<(i64, QExponent)>)> = Vec::new();
    for i in 0..6 {
        for j in i..6 {
            specs.push((Family::A, i, j, diagram_terms(&A_BLOCKS[i], &A_BLOCKS[j])));
        }
    }
    for i in 0..10 {
        for j in i..10 {
            specs.push((Family::B, i, j, diagram_terms(&B_BLOCKS[i], &B_BLOCKS[j])));
        }
    }
    let mut monomials: Vec<QExponent> = specs.iter().flat_map(|s| s.3.iter().map(|t| t.1)).collect();
    monomials.sort();
    monomials.dedup();
    let it = CovarianceIntegrator::new(e, SeparationWeight::covariogram(d))?;
    let values = it.integrate(&monomials)?.values;
    let lookup = |q: &QExponent| values[monomials.binary_search(q).expect("collected above")];

    let mut a = [[0.0; 6]; 6];
    let mut b = [[0.0; 10]; 10];
    let mut entries = Vec::with_capacity(specs.len());
    for (family, i, j, terms) in specs {
        let numeric: f64 = terms.iter().map(|(c, q)| *c as f64 * lookup(q)).sum();
        let printed = match family {
            Family::A => {
                a[i][j] = numeric;
                a[j][i] = numeric;
                ratio(PRINTED_A[i][j])
            }
            Family::B => {
                b[i][j] = numeric;
                b[j][i] = numeric;
                ratio(PRINTED_B[i][j])
            }
        };
        entries.push(TableEntry {
            family,
            i: i + 1,
            j: j + 1,
            numeric,
            printed_constant: printed,
            derived_constant: derived_constant(&terms),
            energy: e.e(),
        });
    }
    Ok(CovarianceTable {
        energy: e.e(),
        area: d.area(),
        entries,
        a,
        b,
    })
}

/// Leading constants of `Var(sum w_i a_i)` and `Var(sum w_j b_j)` in units of `area/pi^3 log E/E`.
pub fn combined_constants() -> (f64, f64) {
    let quad = |blocks: &[HermiteDegrees], w: &[f64]| {
        let mut s = 0.0;
        for (i, bi) in blocks.iter().enumerate() {
            for (j, bj) in blocks.iter().enumerate() {
                s += w[i] * w[j] * derived_constant(&diagram_terms(bi, bj));
            }
        }
        s
    };
    (quad(&A_BLOCKS, &LENGTH_WEIGHTS), quad(&B_BLOCKS, &MIXED_WEIGHTS))
}

impl CovarianceTable {
    /// `w^T C w` over the a-block matrix.
    pub fn length_form(&self) -> f64 {
        quadratic(&self.a, &LENGTH_WEIGHTS)
    }

    /// `w^T C w` over the b-block matrix.
    pub fn mixed_form(&self) -> f64 {
        quadratic(&self.b, &MIXED_WEIGHTS)
    }

    /// Smallest eigenvalue of the a-block matrix relative to its largest.
    pub fn a_min_relative_eigenvalue(&self) -> f64 {
        let m = nalgebra::Matrix6::from_fn(|i, j| self.a[i][j]);
        let ev = nalgebra::SymmetricEigen::new(m).eigenvalues;
        ev.min() / ev.max()
    }

    /// Columns `entry, numeric, paper_constant, derived_constant, ratio, E`; the ratio is to the derived constant.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["entry", "numeric", "paper_constant", "derived_constant", "ratio", "E"])
            .map_err(|e| Error::csv("<table>", e))?;
        for en in &self.entries {
            wr.write_record([
                en.label(),
                format!("{:.10e}", en.numeric),
                format!("{}", en.printed_constant),
                format!("{}", en.derived_constant),
                format!("{:.6}", en.ratio_to_derived(self.area)),
                format!("{}", en.energy),
            ])
            .map_err(|e| Error::csv("<table>", e))?;
        }
        wr.flush().map_err(|e| Error::io("<table>", e))?;
        Ok(())
    }
}

/// Variances of the fourth-chaos projections: `L[4]`, `a_E`, `b_E` and `N[4]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourthVariances {
    pub length: f64,
    pub a_e: f64,
    pub b_e: f64,
    pub count: f64,
}

impl FourthVariances {
    /// Leading-order growth at energy `e` for a domain of area `area`.
    pub fn asymptotic(e: f64, area: f64) -> Self {
        let l = area * e.ln();
        FourthVariances {
            length: l / (512.0 * PI),
            a_e: l * e / (256.0 * PI),
            b_e: 43.0 * l * e / (128.0 * PI),
            count: 11.0 * l * e / (32.0 * PI),
        }
    }
}

impl CovarianceTable {
    pub fn fourth_variances(&self) -> FourthVariances {
        let e = self.energy;
        let length = PI * PI * e / 8192.0 * self.length_form();
        let a_e = 2.0 * e * length;
        let b_e = (PI * e / 8.0).powi(2) * self.mixed_form();
        FourthVariances {
            length,
            a_e,
            b_e,
            count: 2.0 * a_e + b_e,
        }
    }
}

pub fn predicted_fourth_variances(e: EnergyLevel, d: &Domain) -> Result<FourthVariances> {
    Ok(appendix_b_table(e, d)?.fourth_variances())
}

fn quadratic<const N: usize>(m: &[[f64; N]; N], w: &[f64; N]) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        for j in 0..N {
            s += w[i] * w[j] * m[i][j];
        }
    }
    s
}
