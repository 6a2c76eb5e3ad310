use eitconv::analytic::*;
use eitconv::field::CoherenceField;
use eitconv::mb::{measured_bandwidth, pulse_shape, run_protocol, ControlTimeline, MbGrid};
use eitconv::pulse::GaussianPulse;
use eitconv::spectral::*;
use eitconv::ConversionScheme;

const T_P: f64 = 5.730;

struct Case {
    s: ConversionScheme,
    pulse: GaussianPulse,
    om: f64,
    omr: f64,
}

fn case(d: f64, ratio: f64) -> Case {
    let s = ConversionScheme::single_state_with_depths(d, d).unwrap();
    let om = omega_w_for_eta(&s, 4.0, T_P).unwrap();
    let omr = omega_r_from_control_ratio(&s, om, ratio).unwrap();
    Case {
        s,
        pulse: GaussianPulse::new(T_P, 1.0, 0.0),
        om,
        omr,
    }
}

fn rms_relative(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn stored_profiles(d: f64, trunc: Truncation) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = case(d, 1.0);
    let grids = ConversionGrids::auto(&c.s, c.om, c.omr, T_P).unwrap();
    let stored = stored_coherence_exact(&c.s, c.om, &c.pulse, 1.35 * T_P, &grids.write, trunc).unwrap();
    let w = write_channel(&c.s, c.om, T_P, 1.35).unwrap();
    let profile = stored_coherence_profile(&c.s, &w, 1.0);
    let analytic = CoherenceField::from_profile(&profile, &[1.0], grids.write.n_z);
    (
        stored.z.clone(),
        stored.spin[0].iter().map(|x| x.re).collect(),
        analytic.spin[0].iter().map(|x| x.re).collect(),
    )
}

#[test]
fn stored_profile_matches_gaussian() {
    // The truncated propagator is the Gaussian's own approximation.
    let (_, exact, approx) = stored_profiles(500.0, Truncation::SECOND_ORDER);
    let err = rms_relative(&approx, &exact);
    assert!(err < 0.03, "RMS {err}");

    // With the full propagator the cubic dispersion term pulls the spin
    // wave ~0.02 L towards the entrance at D = 500; peak and width still
    // agree, and the residual shrinks with depth.
    let (z, exact, approx) = stored_profiles(500.0, Truncation::EXACT);
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let (_, pe) = eitconv::pulse::peak(&z, &sq(&exact)).unwrap();
    let (_, pa) = eitconv::pulse::peak(&z, &sq(&approx)).unwrap();
    assert!((pe.sqrt() / pa.sqrt() - 1.0).abs() < 0.015);
    let (fe, fa) = (
        eitconv::pulse::fwhm(&z, &sq(&exact)).unwrap(),
        eitconv::pulse::fwhm(&z, &sq(&approx)).unwrap(),
    );
    assert!((fe / fa - 1.0).abs() < 0.04, "{fe} vs {fa}");
    let (_, exact, approx) = stored_profiles(2000.0, Truncation::EXACT);
    let err = rms_relative(&approx, &exact);
    assert!(err < 0.03, "RMS {err}");
}

#[test]
fn parseval_on_converted_field() {
    for ratio in [0.5, 1.0, 2.0] {
        let c = case(500.0, ratio);
        let grids = ConversionGrids::auto(&c.s, c.om, c.omr, T_P).unwrap();
        let ex = convert_exact(&c.s, &c.pulse, c.om, 1.35 * T_P, c.omr, &grids, Truncation::EXACT).unwrap();
        let f = &ex.converted;
        assert!((f.energy_time - f.energy_freq).abs() < 1e-8 * f.energy_freq);
        assert!(f.quadrature_converged);
    }
}

#[test]
fn grid_doubling_converges() {
    let c = case(500.0, 1.0);
    let grids = ConversionGrids::auto(&c.s, c.om, c.omr, T_P).unwrap();
    let a = convert_exact(&c.s, &c.pulse, c.om, 1.35 * T_P, c.omr, &grids, Truncation::EXACT).unwrap();
    let b = convert_exact(
        &c.s,
        &c.pulse,
        c.om,
        1.35 * T_P,
        c.omr,
        &grids.refined(),
        Truncation::EXACT,
    )
    .unwrap();
    let (ea, eb) = (a.converted.energy_time, b.converted.energy_time);
    assert!((ea - eb).abs() / eb < 0.005, "{ea} vs {eb}");
}

#[test]
fn truncated_propagator_reduces_to_gaussian() {
    let w = write_channel(&case(500.0, 1.0).s, case(500.0, 1.0).om, T_P, 1.35).unwrap();
    for ratio in [0.5, 1.0, 2.0] {
        let c = case(500.0, ratio);
        let grids = ConversionGrids::auto(&c.s, c.om, c.omr, T_P).unwrap();
        let ex = convert_exact(
            &c.s,
            &c.pulse,
            c.om,
            1.35 * T_P,
            c.omr,
            &grids,
            Truncation::SECOND_ORDER,
        )
        .unwrap();
        let read = read_channel(&c.s, &w, c.omr).unwrap();
        let an = converted_spectrum(&c.s, &w, &read, 1.0).unwrap();
        let (_, peak, fwhm) = pulse_shape(&ex.converted.times, &ex.converted.field).unwrap();
        assert!(
            (peak / an.peak.abs() - 1.0).abs() < 0.01,
            "ratio {ratio}: peak {peak} vs {}",
            an.peak
        );
        assert!(
            (fwhm / an.fwhm - 1.0).abs() < 0.01,
            "ratio {ratio}: fwhm {fwhm} vs {}",
            an.fwhm
        );
    }
}

#[test]
fn readout_energy_matches_mb() {
    let c = case(500.0, 1.0);
    let grids = ConversionGrids::auto(&c.s, c.om, c.omr, T_P).unwrap();
    let ex = convert_exact(&c.s, &c.pulse, c.om, 1.35 * T_P, c.omr, &grids, Truncation::EXACT).unwrap();
    let tl = ControlTimeline::protocol(c.om, c.omr, T_P, 1.35, 2.0 * T_P);
    let rec = run_protocol(&c.s, &c.pulse, &tl, &MbGrid::auto(&c.s, &tl, &c.pulse).unwrap()).unwrap();
    let spectral = ex.converted.energy_time / ex.stored.excitation_energy();
    let mb = rec.energies.readout / rec.energies.stored_write;
    assert!((spectral / mb - 1.0).abs() < 0.02, "{spectral} vs {mb}");
}

#[test]
fn measured_bandwidth_matches_formula() {
    let c = case(500.0, 1.0);
    let tl = ControlTimeline::protocol(c.om, c.omr, T_P, 1.35, 2.0 * T_P);
    let rec = run_protocol(&c.s, &c.pulse, &tl, &MbGrid::auto(&c.s, &tl, &c.pulse).unwrap()).unwrap();
    let (t, f) = rec.readout_window();
    let measured = measured_bandwidth(&t, &f).unwrap();
    let w = write_channel(&c.s, c.om, T_P, 1.35).unwrap();
    let read = read_channel(&c.s, &w, c.omr).unwrap();
    let formula = converted_bandwidth(&c.s, &w, &read, pulse_bandwidth(T_P));
    assert!((measured / formula - 1.0).abs() < 0.03, "{measured} vs {formula}");
}

#[test]
fn slow_light_transmission_is_lossy_and_delayed() {
    let c = case(500.0, 1.0);
    let grid = SpectralGrid::auto(&c.s, &[(eitconv::atomic::Branch::Probe, c.om)], T_P, -6.0 * T_P, 60.0).unwrap();
    let tr = transmit(&c.s, eitconv::atomic::Branch::Probe, c.om, &c.pulse, &grid).unwrap();
    assert!(tr.energy_out < tr.energy_in);
    let w: Vec<f64> = tr.output.iter().map(|x| x.re).collect();
    let win: Vec<f64> = tr.input.iter().map(|x| x.re).collect();
    let delay = eitconv::pulse::centroid(&tr.times, &w).unwrap() - eitconv::pulse::centroid(&tr.times, &win).unwrap();
    let t_d = write_channel(&c.s, c.om, T_P, 1.35).unwrap().t_d;
    assert!((delay - t_d).abs() < 1e-3 * t_d, "{delay} vs {t_d}");
}
