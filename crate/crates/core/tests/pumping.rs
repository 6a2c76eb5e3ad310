use nalgebra::DMatrix;
use num_complex::Complex64;

use eitconv::pumping::*;
use eitconv::units::UnitSystem;
use eitconv::PopulationDistribution;

fn fig6_duration() -> f64 {
    UnitSystem::new(4.56).time_from_us(1.6)
}

fn mean_m(g: &[f64; 7]) -> f64 {
    g.iter().zip(-3..=3).map(|(p, m)| p * m as f64).sum()
}

/// Dense real Liouvillian acting on (Re ρ, Im ρ) built column by column.
fn liouvillian(gen: &PumpGenerator) -> DMatrix<f64> {
    let n = LEVELS * LEVELS;
    let mut l = DMatrix::zeros(2 * n, 2 * n);
    for col in 0..2 * n {
        let mut rho = DensityMatrix14::zeros();
        let k = col % n;
        let v = if col < n {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 1.0)
        };
        rho.set(k / LEVELS, k % LEVELS, v);
        let d = gen.apply(&rho);
        for row in 0..n {
            let x = d.get(row / LEVELS, row % LEVELS);
            l[(row, col)] = x.re;
            l[(row + n, col)] = x.im;
        }
    }
    l
}

#[test]
fn sigma_plus_reaches_edge_state() {
    let mut cfg = PumpConfig::sigma_plus(1.2, fig6_duration());
    cfg.sample_interval = Some(0.02);
    let tr = evolve_pumping(&cfg, &PopulationDistribution::isotropic()).unwrap();
    assert!(tr.max_trace_drift < 1e-9);
    assert!(tr.min_population > -1e-10);
    for w in tr.samples.windows(2) {
        assert!(mean_m(&w[1].ground) >= mean_m(&w[0].ground) - 1e-12, "t={}", w[1].t);
    }
    let ss = steady_state(&cfg, &PopulationDistribution::isotropic(), 2000.0).unwrap();
    assert!(ss.populations.get(3) > 0.99, "{:?}", ss.populations);
}

#[test]
fn pi_pump_stays_symmetric() {
    let mut cfg = PumpConfig::pi(1.2, fig6_duration());
    cfg.sample_interval = Some(0.1);
    let tr = evolve_pumping(&cfg, &PopulationDistribution::isotropic()).unwrap();
    for s in &tr.samples {
        for k in 0..3 {
            assert!((s.ground[k] - s.ground[6 - k]).abs() < 1e-12);
        }
    }
    let ss = steady_state(&cfg, &PopulationDistribution::isotropic(), 2000.0).unwrap();
    let p = ss.populations;
    assert!(ZEEMAN_M_EXCEPT_ZERO.iter().all(|&m| p.get(0) > p.get(m)));
    assert!(p.is_symmetric(1e-9));
}

const ZEEMAN_M_EXCEPT_ZERO: [i32; 6] = [-3, -2, -1, 1, 2, 3];

#[test]
fn zero_pump_leaves_distribution() {
    let start = PopulationDistribution::new(&[0.1, 0.2, 0.05, 0.3, 0.1, 0.15, 0.1]).unwrap();
    let cfg = PumpConfig::sigma_plus(0.0, 5.0);
    let ss = steady_state(&cfg, &start, 10.0).unwrap();
    for m in -3..=3 {
        assert!((ss.populations.get(m) - start.get(m)).abs() < 1e-12);
    }
}

#[test]
fn excited_population_decays_to_ground() {
    let gen = build_pump_generator(&PumpConfig::sigma_plus(0.0, 1.0)).unwrap();
    let mut rho = DensityMatrix14::zeros();
    rho.set(7 + 2, 7 + 2, Complex64::new(1.0, 0.0));
    for _ in 0..3000 {
        rho = gen.rk4(&rho, 0.01);
    }
    assert!((rho.trace() - 1.0).abs() < 1e-12);
    assert!(rho.excited_fraction() < 1e-12);
}

#[test]
fn mixed_ground_is_dark_without_pump() {
    let gen = build_pump_generator(&PumpConfig::sigma_plus(0.0, 1.0)).unwrap();
    let rho = DensityMatrix14::from_ground(&PopulationDistribution::isotropic());
    let d = gen.apply(&rho);
    for i in 0..LEVELS {
        for j in 0..LEVELS {
            assert_eq!(d.get(i, j), Complex64::new(0.0, 0.0));
        }
    }
}

#[test]
fn sigma_minus_steady_state_matches_null_space() {
    let cfg = PumpConfig::sigma_minus(1.2, 1.0);
    let gen = build_pump_generator(&cfg).unwrap();
    let l = liouvillian(&gen);
    // Pin the trace: replace the first row with Tr ρ = 1.
    let n = LEVELS * LEVELS;
    let mut a = l.clone();
    let mut b = nalgebra::DVector::zeros(2 * n);
    for c in 0..2 * n {
        a[(0, c)] = 0.0;
    }
    for i in 0..LEVELS {
        a[(0, i * LEVELS + i)] = 1.0;
    }
    b[0] = 1.0;
    // Singular-value least squares handles the residual degeneracy of the
    // ground manifold; the population sits at m = −3 either way.
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-12).unwrap();
    let brute: Vec<f64> = (0..7).map(|i| x[i * LEVELS + i]).collect();

    let start = PopulationDistribution::single(-3).unwrap();
    let ss = steady_state(&cfg, &start, 500.0).unwrap();
    assert!(ss.populations.get(-3) > 1.0 - 1e-12);
    let total: f64 = brute.iter().sum();
    assert!((brute[0] / total - 1.0).abs() < 1e-9, "{brute:?}");
    // generator is trace preserving: columns of the trace row sum to zero
    for c in 0..2 * n {
        let s: f64 = (0..LEVELS).map(|i| l[(i * LEVELS + i, c)]).sum();
        assert!(s.abs() < 1e-12);
    }
}
