use berrywave::special_fn::{
    bessel_envelope, bessel_j, bessel_j012, hermite, BesselOrder, HermiteDegree,
};
use gauss_quad::GaussHermite;
use num_bigint::BigInt;
use num_bigint::Sign;
use proptest::prelude::*;

const SCALE_BITS: u32 = 256;

fn shift(v: BigInt, by: i64) -> BigInt {
    if by >= 0 {
        v << (by as usize)
    } else {
        v >> ((-by) as usize)
    }
}

// mantissa and exponent with x = m * 2^e exactly
fn decompose(x: f64) -> (BigInt, i64) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (BigInt::from(frac), -1074)
    } else {
        (BigInt::from(frac | (1u64 << 52)), exp - 1075)
    }
}

fn to_f64(v: &BigInt) -> f64 {
    let (sign, mag) = v.to_bytes_be();
    let mut acc = 0.0f64;
    for b in mag {
        acc = acc * 256.0 + b as f64;
    }
    let acc = acc * 2f64.powi(-(SCALE_BITS as i32));
    if sign == Sign::Minus {
        -acc
    } else {
        acc
    }
}

/// Power series of `J_n` in 256-bit fixed point. Returns the sum and the
/// first omitted term, which bounds the alternating tail once terms decrease.
fn series_oracle(n: u32, x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (if n == 0 { 1.0 } else { 0.0 }, 0.0);
    }
    let (m, e) = decompose(x);
    let one = BigInt::from(1) << SCALE_BITS;
    let mut term = one.clone();
    for k in 1..=n {
        term = shift(term * &m, e - 1) / BigInt::from(k);
    }
    let m2 = &m * &m;
    let mut sum = term.clone();
    let mut prev_mag = term.magnitude().clone();
    let tiny = BigInt::from(1) << (SCALE_BITS - 100);
    let mut j = 1u64;
    loop {
        term = -(shift(&term * &m2, 2 * e - 2) / BigInt::from(j * (j + n as u64)));
        let mag = term.magnitude().clone();
        let decreasing = mag < prev_mag;
        if decreasing && BigInt::from(mag.clone()) < tiny {
            return (to_f64(&sum), to_f64(&term).abs());
        }
        sum += &term;
        prev_mag = mag;
        j += 1;
    }
}

#[test]
fn series_oracle_matches_known_values() {
    // J0(1), J1(1), J2(1) to 18 digits
    let (j0, _) = series_oracle(0, 1.0);
    let (j1, _) = series_oracle(1, 1.0);
    let (j2, _) = series_oracle(2, 1.0);
    assert!((j0 - 0.765197686557966551).abs() < 3e-17);
    assert!((j1 - 0.440050585744933516).abs() < 3e-17);
    assert!((j2 - 0.114903484931900480).abs() < 3e-17);
}

#[test]
fn j0_matches_series_on_dense_grid() {
    let n = 10_000;
    let mut worst = 0.0f64;
    for i in 0..=n {
        let x = 50.0 * i as f64 / n as f64;
        let (exact, tail) = series_oracle(0, x);
        assert!(tail < 1e-20);
        let v = bessel_j(BesselOrder::Zero, x).unwrap();
        worst = worst.max((v - exact).abs());
    }
    assert!(worst <= 1e-12, "max abs error {worst:e}");
}

#[test]
fn j1_j2_match_series() {
    let n = 2_000;
    for order in [BesselOrder::One, BesselOrder::Two] {
        let mut worst = 0.0f64;
        for i in 0..=n {
            let x = 50.0 * (i as f64 + 0.37) / n as f64;
            let (exact, _) = series_oracle(order.as_u32(), x);
            let v = bessel_j(order, x).unwrap();
            worst = worst.max((v - exact).abs());
        }
        assert!(worst <= 1e-12, "order {order:?}: max abs error {worst:e}");
    }
}

// reference values at 50 significant digits, rounded
const LARGE_ARGS: [(f64, [f64; 3]); 10] = [
    (50.5, [0.0955198915497005671, -0.0580628764213206865, -0.0978194114079706933]),
    (73.25, [-0.0912486378715061515, -0.0197161669699372863, 0.090710312493487386]),
    (100.0, [0.0199858503042231224, -0.077145352014112158, -0.0215287573445053656]),
    (257.125, [0.0146720567142024176, -0.0475177635850093502, -0.0150416649871047752]),
    (1000.0, [0.0247866861524201746, 0.00472831190708952392, -0.0247772295286059955]),
    (4321.5, [-0.00630384851892031723, -0.010372615950565111, 0.00629904804873609179]),
    (10000.0, [-0.00709616035338880148, 0.00364745075552958034, 0.00709688984353990739]),
    (65536.75, [-0.00217200531621449234, 0.00223523029662158541, 0.00217207352924906063]),
    (250000.0, [-0.00122460708626818443, -0.00102314299368065353, 0.00122459890112423498]),
    (1000000.0, [0.000331043013739873741, -0.000725968356813763042, -0.000331044465676587369]),
];

#[test]
fn large_arguments_relative_accuracy() {
    for (x, want) in LARGE_ARGS {
        let got = bessel_j012(x).unwrap();
        for k in 0..3 {
            let rel = ((got[k] - want[k]) / want[k]).abs();
            assert!(rel <= 1e-9, "J{k}({x}) = {} vs {}: rel {rel:e}", got[k], want[k]);
        }
    }
}

#[test]
fn joint_and_single_evaluation_agree() {
    for i in 0..500 {
        let x = i as f64 * 0.173;
        let all = bessel_j012(x).unwrap();
        for (k, o) in BesselOrder::ALL.into_iter().enumerate() {
            assert_eq!(all[k], bessel_j(o, x).unwrap());
        }
    }
}

#[test]
fn hermite_orthogonality_under_gaussian_weight() {
    let rule = GaussHermite::new(20).unwrap();
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let factorial = [1.0, 1.0, 2.0, 6.0, 24.0];
    for n in 0..=4 {
        for m in 0..=4 {
            let hn = HermiteDegree::new(n).unwrap();
            let hm = HermiteDegree::new(m).unwrap();
            let v = rule.integrate(|t| {
                let z = t * std::f64::consts::SQRT_2;
                hermite(hn, z) * hermite(hm, z)
            }) / sqrt_pi;
            let want = if n == m { factorial[n] } else { 0.0 };
            assert!((v - want).abs() < 1e-8, "<H{n}, H{m}> = {v}");
        }
    }
}

proptest! {
    #[test]
    fn three_term_recurrence(x in 0.1f64..1000.0) {
        let [j0, j1, j2] = bessel_j012(x).unwrap();
        prop_assert!((j0 + j2 - 2.0 / x * j1).abs() <= 1e-9);
    }

    #[test]
    fn envelope_uniform_bound(x in 1e-3f64..2000.0, order in 0u32..3) {
        let o = BesselOrder::new(order).unwrap();
        let a = order as f64;
        let mu = (a * a - 0.25).abs();
        let diff = bessel_j(o, x).unwrap() - bessel_envelope(o, x).unwrap();
        prop_assert!(x.powf(1.5) * diff.abs() <= 0.8 * mu);
    }
}
