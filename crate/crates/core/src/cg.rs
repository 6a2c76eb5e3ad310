//! Angular-momentum coupling coefficients.
//!
//! All angular momenta are passed doubled (`2j`, `2m`) so half-integer
//! quantum numbers stay exact integers.

const MAX_FACTORIAL: usize = 64;

fn factorial(n: i32) -> f64 {
    debug_assert!(n >= 0 && (n as usize) < MAX_FACTORIAL);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `n!` for a doubled, even argument.
fn fact2(two_n: i32) -> f64 {
    debug_assert!(two_n % 2 == 0, "half-integer factorial requested");
    factorial(two_n / 2)
}

fn sign(two_exponent: i32) -> f64 {
    debug_assert!(two_exponent % 2 == 0);
    if (two_exponent / 2).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn triangle(j1: i32, j2: i32, j3: i32) -> Option<f64> {
    if j1 + j2 < j3 || j1 + j3 < j2 || j2 + j3 < j1 || (j1 + j2 + j3) % 2 != 0 {
        return None;
    }
    Some(fact2(j1 + j2 - j3) * fact2(j1 - j2 + j3) * fact2(-j1 + j2 + j3) / fact2(j1 + j2 + j3 + 2))
}

/// Wigner 3j symbol `(j1 j2 j3; m1 m2 m3)` with doubled arguments.
pub fn wigner_3j(j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> f64 {
    if m1 + m2 + m3 != 0 || m1.abs() > j1 || m2.abs() > j2 || m3.abs() > j3 {
        return 0.0;
    }
    if (j1 + m1) % 2 != 0 || (j2 + m2) % 2 != 0 || (j3 + m3) % 2 != 0 {
        return 0.0;
    }
    let Some(delta) = triangle(j1, j2, j3) else {
        return 0.0;
    };
    let pre =
        (fact2(j1 + m1) * fact2(j1 - m1) * fact2(j2 + m2) * fact2(j2 - m2) * fact2(j3 + m3) * fact2(j3 - m3)).sqrt();
    let k_min = 0.max(j2 - j3 - m1).max(j1 - j3 + m2);
    let k_max = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
    let mut total = 0.0;
    let mut k = k_min;
    while k <= k_max {
        let den = fact2(k)
            * fact2(j3 - j2 + k + m1)
            * fact2(j3 - j1 + k - m2)
            * fact2(j1 + j2 - j3 - k)
            * fact2(j1 - k - m1)
            * fact2(j2 - k + m2);
        total += sign(k) / den;
        k += 2;
    }
    sign(j1 - j2 - m3) * delta.sqrt() * pre * total
}

/// Wigner 6j symbol `{j1 j2 j3; j4 j5 j6}` with doubled arguments.
pub fn wigner_6j(j1: i32, j2: i32, j3: i32, j4: i32, j5: i32, j6: i32) -> f64 {
    let (Some(d1), Some(d2), Some(d3), Some(d4)) = (
        triangle(j1, j2, j3),
        triangle(j1, j5, j6),
        triangle(j4, j2, j6),
        triangle(j4, j5, j3),
    ) else {
        return 0.0;
    };
    let a = [j1 + j2 + j3, j1 + j5 + j6, j4 + j2 + j6, j4 + j5 + j3];
    let b = [j1 + j2 + j4 + j5, j2 + j3 + j5 + j6, j3 + j1 + j6 + j4];
    let t_min = *a.iter().max().unwrap();
    let t_max = *b.iter().min().unwrap();
    let mut total = 0.0;
    let mut t = t_min;
    while t <= t_max {
        let den: f64 =
            a.iter().map(|&x| fact2(t - x)).product::<f64>() * b.iter().map(|&x| fact2(x - t)).product::<f64>();
        total += sign(t) * fact2(t + 2) / den;
        t += 2;
    }
    (d1 * d2 * d3 * d4).sqrt() * total
}

/// Clebsch–Gordan coefficient `<j1 m1; j2 m2 | J M>` with doubled arguments.
pub fn clebsch_gordan(j1: i32, m1: i32, j2: i32, m2: i32, j: i32, m: i32) -> f64 {
    sign(j1 - j2 + m) * ((j + 1) as f64).sqrt() * wigner_3j(j1, j2, j, m1, m2, -m)
}

/// Hyperfine-resolved dipole matrix element `<F m_F| d_q |F' m_F'>` in units
/// of the reduced element `<J||d||J'>`, with `q = m_F - m_F'`.
///
/// Arguments are doubled: nuclear spin `i`, fine-structure `j`, `jp`,
/// hyperfine `f`, `fp` and projections `m`, `mp`.
#[allow(clippy::too_many_arguments)]
pub fn hyperfine_dipole(i: i32, j: i32, jp: i32, f: i32, m: i32, fp: i32, mp: i32) -> f64 {
    let q = m - mp;
    if q.abs() > 2 {
        return 0.0;
    }
    let reduced_f = sign(fp + j + 2 + i) * (((fp + 1) * (j + 1)) as f64).sqrt() * wigner_6j(j, jp, 2, fp, f, i);
    sign(fp - 2 + m) * ((f + 1) as f64).sqrt() * wigner_3j(fp, 2, f, mp, q, -m) * reduced_f
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-13;

    #[test]
    fn known_3j_values() {
        // (1 1 0; 0 0 0) = -1/sqrt(3)
        assert!((wigner_3j(2, 2, 0, 0, 0, 0) + 1.0 / 3f64.sqrt()).abs() < TOL);
        // (1/2 1/2 1; 1/2 -1/2 0) = 1/sqrt(6)
        assert!((wigner_3j(1, 1, 2, 1, -1, 0) - 1.0 / 6f64.sqrt()).abs() < TOL);
        // selection rule
        assert_eq!(wigner_3j(2, 2, 2, 0, 0, 0), 0.0);
    }

    #[test]
    fn known_6j_value() {
        // {1 1 1; 1 1 1} = 1/6
        assert!((wigner_6j(2, 2, 2, 2, 2, 2) - 1.0 / 6.0).abs() < TOL);
        // {1/2 1/2 1; 1/2 1/2 0} = 1/2 (sign (-1)^(1/2+1/2+1/2+1/2))
        assert!((wigner_6j(1, 1, 2, 1, 1, 0) - 0.5).abs() < TOL);
    }

    #[test]
    fn cg_orthonormality() {
        // sum over m1, m2 of |<3 m1; 1 m2|3 M>|^2 = 1 for each M
        for mm in (-6..=6).step_by(2) {
            let mut s = 0.0;
            for m1 in (-6..=6).step_by(2) {
                for m2 in [-2, 0, 2] {
                    s += clebsch_gordan(6, m1, 2, m2, 6, mm).powi(2);
                }
            }
            assert!((s - 1.0).abs() < 1e-12, "M={mm}: {s}");
        }
    }

    #[test]
    fn pi_transition_m0_forbidden_for_equal_f() {
        assert_eq!(clebsch_gordan(6, 0, 2, 0, 6, 0).abs(), 0.0);
    }

    #[test]
    fn cesium_d1_stretched_elements() {
        // |F=3,m=3> -> |F'=4,m'=4>: squared element 7/12
        let a = hyperfine_dipole(7, 1, 1, 6, 6, 8, 8);
        assert!((a * a - 7.0 / 12.0).abs() < 1e-13);
        // |F=4,m=3> -> |F'=4,m'=4>: squared element 1/12
        let w = hyperfine_dipole(7, 1, 1, 8, 6, 8, 8);
        assert!((w * w - 1.0 / 12.0).abs() < 1e-13);
        assert!((a / w + 7f64.sqrt()).abs() < 1e-12);
    }
}
