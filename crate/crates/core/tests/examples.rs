use mswi::filter::{self, PenaltyConfig};
use mswi::objectives;
use mswi::scenarios::{self, AcquisitionKind, ModelKind};
use mswi::verify::Toy;
use mswi::wavelet::{self, Trapezoid};
use mswi::{wave_sim, Acquisition, DataVolume, FdConfig, FilterField, ModelGrid, TimeAxis};

#[test]
fn forward_is_linear_in_the_wavelet() {
    let toy = Toy::new(60, 40, 200).unwrap();
    let sim = toy.simulator().unwrap();
    let d = sim.forward().unwrap();
    let twice = toy.acq.with_wavelet(toy.acq.wavelet.iter().map(|w| 2.0 * w).collect()).unwrap();
    let d2 = wave_sim::forward(&toy.model, &twice, &toy.fd).unwrap();
    let scale = d.traces.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(scale > 0.0);
    for (a, b) in d.traces.iter().zip(&d2.traces) {
        assert!((2.0 * a - b).abs() <= 1e-13 * scale);
    }
    let silent = toy.acq.with_wavelet(vec![0.0; toy.acq.time.nt]).unwrap();
    let d0 = wave_sim::forward(&toy.model, &silent, &toy.fd).unwrap();
    assert!(d0.traces.iter().all(|&v| v == 0.0));
}

#[test]
fn born_is_linear_and_zero_residual_gives_zero_gradient() {
    let toy = Toy::new(60, 40, 200).unwrap();
    let sim = toy.simulator().unwrap();
    let dk: Vec<f64> = (0..toy.model.geom.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
    let b1 = sim.born(&dk).unwrap();
    let b3 = sim.born(&dk.iter().map(|v| -3.0 * v).collect::<Vec<_>>()).unwrap();
    let scale = b1.traces.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in b1.traces.iter().zip(&b3.traces) {
        assert!((-3.0 * a - b).abs() <= 1e-12 * scale);
    }
    let zero = sim.born(&vec![0.0; dk.len()]).unwrap();
    assert!(zero.traces.iter().all(|&v| v == 0.0));
    let g = sim.adjoint(&b1.zeros_like()).unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn fwi_vanishes_at_the_true_model() {
    let toy = Toy::new(60, 40, 200).unwrap();
    let d = toy.simulator().unwrap().forward().unwrap();
    let r = objectives::fwi_value_grad(&toy.model, &d, &toy.acq, &toy.fd).unwrap();
    assert_eq!(r.value, 0.0);
    assert!(r.gradient.iter().all(|&v| v == 0.0));
}

#[test]
fn homogeneous_first_break_at_two_seconds() {
    let geom = scenarios::paper_grid(1.0).unwrap();
    let m = ModelGrid::homogeneous(geom, 4.0, 1.0).unwrap();
    let time = scenarios::paper_time();
    let w = wavelet::make_wavelet(Trapezoid([1.0, 2.5, 7.5, 12.5]), time, 1.0).unwrap();
    let acq = Acquisition::new(vec![(3000.0, 500.0)], vec![(5000.0, 500.0)], time, w).unwrap();
    let d = wave_sim::forward(&m, &acq, &FdConfig::default()).unwrap();
    let t = wavelet::envelope_peak_time(d.trace(0, 0), &time).unwrap();
    assert!((t - 2.0).abs() <= time.dt, "first break at {t}");
}

#[test]
fn matching_traces_give_a_near_delta_filter() {
    let time = TimeAxis::new(64, 0.008, 0.0).unwrap();
    let w = wavelet::make_wavelet(Trapezoid([1.0, 2.5, 7.5, 12.5]), time, 0.25).unwrap();
    let p = DataVolume::from_traces(1, 1, time, w).unwrap();
    let mut last = f64::INFINITY;
    for sigma in [1e-4, 1e-6, 1e-8] {
        let cfg = PenaltyConfig {
            alpha: 0.0,
            sigma,
            rho: 1e-12,
            max_cg_iters: 5000,
            lag_halfwidth: 0.04,
            ..Default::default()
        };
        let u = filter::solve_normal(&p, &p, &cfg).unwrap().u;
        let delta = FilterField::delta(1, 1, u.nu, u.du).unwrap();
        let miss = u.traces.iter().zip(&delta.traces).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let misfit = filter::penalty_terms(&u, &p, &p, &cfg).unwrap().misfit;
        assert!(misfit <= last * 1.0001 || misfit < 1e-24);
        last = misfit;
        if sigma == 1e-8 {
            assert!(miss < 0.05 / u.du, "distance to delta {miss}");
        }
    }
}

#[test]
fn identity_filter_costs_nothing_and_zero_filter_costs_half_the_data() {
    let toy = Toy::new(60, 40, 200).unwrap();
    let d = toy.observed().unwrap();
    let cfg = PenaltyConfig::default();
    let delta = FilterField::zeros_for(&d, cfg.lag_halfwidth.min(0.05)).unwrap();
    let delta = FilterField::delta(d.ns, d.nr, delta.nu, delta.du).unwrap();
    let t = filter::penalty_terms(&delta, &d, &d, &cfg).unwrap();
    assert!(t.misfit < 1e-28 * d.norm_sq().max(1.0));
    assert_eq!(t.lagpen, 0.0);
    let t = filter::penalty_terms(&delta.zeros_like(), &d, &d, &cfg).unwrap();
    assert!((t.misfit - 0.5 * d.norm_sq()).abs() <= 1e-14 * d.norm_sq());
    assert_eq!(t.lagpen + t.reg, 0.0);
}

#[test]
fn paper_models_and_lines() {
    let g = scenarios::paper_grid(1.0).unwrap();
    let lens = scenarios::build_model(ModelKind::Circular, g).unwrap();
    assert!((lens.kappa[g.index(200, 100)] - 2.4).abs() < 1e-12);
    assert_eq!(scenarios::model_kappa(ModelKind::Circular, 5000.0, 2000.0), 4.0);
    assert_eq!(scenarios::model_kappa(ModelKind::Camembert, 4000.0, 2000.0), 4.8);
    assert_eq!(scenarios::model_kappa(ModelKind::Camembert, 4000.0, 700.0), 4.0);
    assert!((scenarios::model_kappa(ModelKind::Oblate, 4000.0, 2400.0) - 2.0).abs() < 1e-12);
    assert!(lens.beta.iter().all(|&b| b == 1.0));

    let time = scenarios::paper_time();
    assert_eq!((time.nt, time.dt), (626, 0.008));
    let near = scenarios::build_acquisition(AcquisitionKind::Near, 1.0, time, vec![0.0; 626]).unwrap();
    let far = scenarios::build_acquisition(AcquisitionKind::Far, 1.0, time, vec![0.0; 626]).unwrap();
    assert_eq!(near.ns() * near.nr(), 3620);
    assert_eq!(near.sources.last().unwrap().1, 3350.0);
    for (a, b) in near.sources.iter().zip(&far.sources).chain(near.receivers.iter().zip(&far.receivers)) {
        assert_eq!(a.1, b.1);
        assert_ne!(a.0, b.0);
    }
    let half = scenarios::build_acquisition(AcquisitionKind::Near, 0.5, time, vec![0.0; 626]).unwrap();
    assert_eq!((half.ns(), half.nr()), (20, 91));
}

#[test]
fn model_noise_is_seeded_and_vanishes_at_zero_amplitude() {
    let toy = Toy::new(60, 40, 200).unwrap();
    let d = toy.observed().unwrap();
    let m0 = ModelGrid::homogeneous(toy.model.geom, 4.0, 1.0).unwrap();
    let (same, f) = scenarios::add_model_noise(&d, &m0, &toy.acq, &toy.fd, 0.0, 7).unwrap();
    assert_eq!(f, 0.0);
    assert_eq!(same, d);
    let (a, fa) = scenarios::add_model_noise(&d, &m0, &toy.acq, &toy.fd, 0.05, 7).unwrap();
    let (b, fb) = scenarios::add_model_noise(&d, &m0, &toy.acq, &toy.fd, 0.05, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(fa, fb);
    assert!(fa > 0.0);
    let (c, _) = scenarios::add_model_noise(&d, &m0, &toy.acq, &toy.fd, 0.05, 8).unwrap();
    assert_ne!(a, c);
}
