use std::f64::consts::PI;

use berrywave::covariance::EnergyLevel;
use berrywave::geometry::{Domain, GridSpec, Point, Shape};
use berrywave::nodal_stats::{count_singularities, epsilon_nodal_length, nodal_length};
use berrywave::stats::jackknife_mean;
use berrywave::synthesis::{sample_wave, ComplexWaveSample, DirectionSampling, WaveSample};

/// Grid with spacing `h` over `[-w/2, w/2]^2`.
fn square(w: f64, h: f64) -> GridSpec {
    let d = Domain::with_center(Shape::Rect { width: w, height: w }, [0.0, 0.0]).unwrap();
    let g = GridSpec::new(d, 1.0, 1.0 / h).unwrap();
    assert!((g.h - h).abs() < 1e-12);
    g
}

/// `f` tabulated in coordinates shifted by `off`, so `[0, 1]^2` maps onto the unit square.
fn tabulate(g: &GridSpec, off: f64, f: impl Fn(Point) -> f64) -> Vec<f64> {
    (0..g.ny)
        .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
        .map(|(i, j)| f([g.x(i) + off, g.y(j) + off]))
        .collect()
}

fn length_of(w: &WaveSample, g: &GridSpec) -> f64 {
    let f = w.eval_grid(g).unwrap();
    let c = |p: Point| w.eval(p).value;
    nodal_length(&f.value, g, Some(&c)).unwrap().length
}

#[test]
fn straight_line_has_unit_length() {
    let g = square(1.0, 0.01);
    let v = tabulate(&g, 0.5, |p| p[0] - 0.25);
    let r = nodal_length(&v, &g, None).unwrap();
    assert!((r.length - 1.0).abs() < 1e-9, "{}", r.length);
}

#[test]
fn cosine_has_two_lines() {
    let g = square(1.0, 0.005);
    let v = tabulate(&g, 0.5, |p| (2.0 * PI * p[0]).cos());
    let r = nodal_length(&v, &g, None).unwrap();
    assert!((r.length - 2.0).abs() < 1e-6, "{}", r.length);
}

#[test]
fn circle_circumference() {
    let g = square(2.0, 0.002);
    let f = |p: Point| p[0].hypot(p[1]) - 0.5;
    let v = tabulate(&g, 0.0, f);
    let r = nodal_length(&v, &g, Some(&f)).unwrap();
    // inscribed chords of length ~h lose a fraction (h/r)^2/24 of the arc
    assert!((r.length / PI - 1.0).abs() < 1e-3, "{}", r.length);
    assert!(r.length < PI);
}

#[test]
fn length_is_zero_without_sign_change() {
    let g = square(1.0, 0.05);
    let v = tabulate(&g, 0.5, |p| 1.0 + p[0] * p[1]);
    let r = nodal_length(&v, &g, None).unwrap();
    assert_eq!(r.length, 0.0);
    assert_eq!(r.cells_crossed, 0);
}

#[test]
fn transversal_zero_is_one_singularity() {
    let g = square(1.0, 0.01);
    let re = tabulate(&g, 0.5, |p| p[0] - 0.5 - 1e-3);
    let im = tabulate(&g, 0.5, |p| p[1] - 0.5 - 2e-3);
    let c = count_singularities(&re, &im, &g).unwrap();
    assert_eq!(c.count, 1);
    assert!(c.parity_ok());
    let im = tabulate(&g, 0.5, |p| p[0] - 0.3);
    let c = count_singularities(&re, &im, &g).unwrap();
    assert_eq!(c.count, 0);
    assert!(c.cells.is_empty());
}

#[test]
fn coarse_grid_is_rejected() {
    let d = Domain::unit_square();
    assert!(GridSpec::new(d, 25.0, 3.0).is_err());
}

#[test]
fn mean_count_at_e25() {
    let e = EnergyLevel::new(25.0).unwrap();
    let g = GridSpec::new(Domain::unit_square(), 25.0, 16.0).unwrap();
    let counts: Vec<f64> = (0..200u64)
        .map(|r| {
            let z = ComplexWaveSample::sample(e, 256, 31, r, DirectionSampling::default()).unwrap();
            let (a, b) = (z.re.eval_grid(&g).unwrap(), z.im.eval_grid(&g).unwrap());
            let c = count_singularities(&a.value, &b.value, &g).unwrap();
            assert!(c.parity_ok(), "replication {r}");
            let mut cells = c.cells.clone();
            cells.dedup();
            assert_eq!(cells.len(), c.count);
            c.count as f64
        })
        .collect();
    let (m, se) = jackknife_mean(&counts);
    assert!((m - 25.0 * PI).abs() <= 3.0 * se, "{m} +- {se}");
}

#[test]
fn refinement_converges_at_least_first_order() {
    let w = sample_wave(EnergyLevel::new(25.0).unwrap(), 256, 12).unwrap();
    let d = Domain::unit_square();
    let ls: Vec<f64> = [16.0, 32.0, 64.0]
        .iter()
        .map(|&p| length_of(&w, &GridSpec::new(d, 25.0, p).unwrap()))
        .collect();
    let (d1, d2) = ((ls[0] - ls[1]).abs(), (ls[1] - ls[2]).abs());
    let h = GridSpec::new(d, 25.0, 16.0).unwrap().h;
    assert!(d1 <= ls[2] * h, "{ls:?}");
    assert!((d1 / d2).log2() >= 1.0, "{ls:?}");
}

#[test]
fn quarter_turn_leaves_statistics_unchanged() {
    let e = EnergyLevel::new(25.0).unwrap();
    let g = GridSpec::new(Domain::unit_square(), 25.0, 16.0).unwrap();
    assert_eq!(g.nx, g.ny);
    let n = g.nx;
    let z = ComplexWaveSample::sample(e, 256, 2, 0, DirectionSampling::default()).unwrap();
    let (a, b) = (z.re.eval_grid(&g).unwrap(), z.im.eval_grid(&g).unwrap());
    // node (i, j) -> (n - 1 - j, i)
    let rot = |v: &[f64]| {
        let mut out = vec![0.0; v.len()];
        for j in 0..n {
            for i in 0..n {
                out[i * n + (n - 1 - j)] = v[j * n + i];
            }
        }
        out
    };
    let l0 = nodal_length(&a.value, &g, None).unwrap().length;
    let l1 = nodal_length(&rot(&a.value), &g, None).unwrap().length;
    assert!((l0 - l1).abs() <= 1e-12 * l0);
    let c0 = count_singularities(&a.value, &b.value, &g).unwrap();
    let c1 = count_singularities(&rot(&a.value), &rot(&b.value), &g).unwrap();
    assert_eq!(c0.count, c1.count);
    assert_eq!(c0.total_winding, c1.total_winding);
}

#[test]
fn band_estimator_on_a_line() {
    let g = square(1.0, 0.001);
    let v = tabulate(&g, 0.5, |p| p[0] - 0.5);
    let ones = vec![1.0; v.len()];
    let zeros = vec![0.0; v.len()];
    let r = epsilon_nodal_length(&v, &ones, &zeros, 0.1, &g).unwrap();
    // one extra node column across the band and one extra row along the line
    let bound = (1.0 + g.h / (2.0 * 0.1)) * (1.0 + g.h) - 1.0;
    assert!((r.value - 1.0).abs() <= bound + 1e-12, "{}", r.value);
    assert!(!r.undersampled);
}

#[test]
fn band_estimator_agrees_with_marching_squares() {
    let e = 25.0;
    let level = EnergyLevel::new(e).unwrap();
    let ratio = |seed: u64, ppw: f64| {
        let w = sample_wave(level, 256, seed).unwrap();
        let g = GridSpec::new(Domain::unit_square(), e, ppw).unwrap();
        let f = w.eval_grid(&g).unwrap();
        let band = epsilon_nodal_length(&f.value, &f.d1, &f.d2, 0.05, &g).unwrap().value;
        band / length_of(&w, &g)
    };
    // at 16 points per wavelength only a few hundred nodes fall in the band
    let r16: Vec<f64> = (0..20).map(|s| ratio(s, 16.0)).collect();
    let (m, se) = jackknife_mean(&r16);
    assert!((m - 1.0).abs() <= 0.05 && (m - 1.0).abs() <= 3.0 * se + 0.01, "{m} +- {se}");
    for s in 0..5 {
        let r = ratio(s, 64.0);
        assert!((r - 1.0).abs() <= 0.05, "seed {s}: {r}");
    }
}

#[test]
fn band_estimator_settles_as_eps_halves() {
    let e = 25.0;
    let w = sample_wave(EnergyLevel::new(e).unwrap(), 256, 6).unwrap();
    let g = GridSpec::new(Domain::unit_square(), e, 128.0).unwrap();
    let f = w.eval_grid(&g).unwrap();
    let l = length_of(&w, &g);
    let mut prev_gap = f64::INFINITY;
    for eps in [0.2, 0.1, 0.05, 0.025] {
        let v = epsilon_nodal_length(&f.value, &f.d1, &f.d2, eps, &g).unwrap().value;
        let gap = (v / l - 1.0).abs();
        assert!(gap <= 0.02, "eps {eps}: {v} vs {l}");
        assert!(gap <= prev_gap + 0.005, "eps {eps}: gap {gap} after {prev_gap}");
        prev_gap = gap;
    }
}

#[test]
fn parity_holds_on_disks() {
    let e = EnergyLevel::new(49.0).unwrap();
    let g = GridSpec::new(Domain::disk(0.6).unwrap(), 49.0, 16.0).unwrap();
    for r in 0..20 {
        let z = ComplexWaveSample::sample(e, 256, 8, r, DirectionSampling::default()).unwrap();
        let (a, b) = (z.re.eval_grid(&g).unwrap(), z.im.eval_grid(&g).unwrap());
        let c = count_singularities(&a.value, &b.value, &g).unwrap();
        assert!(c.parity_ok(), "replication {r}: {} vs {}", c.total_winding, c.boundary_winding);
    }
}
