use mswi::filter::{self, PenaltyConfig};
use mswi::linalg;
use mswi::objectives::{LogisticParam, SmoothingOp};
use mswi::sgf::{self, Axis, SgfArray};
use mswi::wave_sim::spline::SplineResampler;
use mswi::{DataVolume, FilterField, GridGeometry, TimeAxis};
use proptest::prelude::*;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn filter_is_transposed_in_both_arguments(
        nt in 4usize..40,
        half in 0usize..6,
        seed in values(3 * 40 + 2 * 13),
    ) {
        let nu = (2 * half + 1).min(2 * nt - 1);
        let time = TimeAxis::new(nt, 0.01, 0.0).unwrap();
        let p = DataVolume::from_traces(1, 1, time, seed[..nt].to_vec()).unwrap();
        let r = DataVolume::from_traces(1, 1, time, seed[40..40 + nt].to_vec()).unwrap();
        let mut u = FilterField::zeros(1, 1, nu, 0.01).unwrap();
        u.traces.copy_from_slice(&seed[120..120 + nu]);

        let ku = filter::apply_filter(&u, &p).unwrap();
        let kt = filter::adjoint_filter_data(&u, &r).unwrap();
        prop_assert!(rel(ku.dot(&r), p.dot(&kt)) < 1e-12 || ku.dot(&r).abs() < 1e-14);

        let st = filter::adjoint_filter_u(&p, &r, nu).unwrap();
        prop_assert!(rel(ku.dot(&r), u.dot(&st)) < 1e-12 || ku.dot(&r).abs() < 1e-14);
    }

    #[test]
    fn delta_filter_is_identity(nt in 2usize..50, half in 0usize..5, seed in values(50)) {
        let nu = (2 * half + 1).min(2 * nt - 1);
        let p = DataVolume::from_traces(1, 1, TimeAxis::new(nt, 0.004, 0.0).unwrap(), seed[..nt].to_vec()).unwrap();
        let u = FilterField::delta(1, 1, nu, 0.004).unwrap();
        let out = filter::apply_filter(&u, &p).unwrap();
        for (a, b) in out.traces.iter().zip(&p.traces) {
            prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn normal_operator_is_symmetric_positive(nt in 8usize..30, half in 1usize..5, seed in values(30 + 2 * 9)) {
        let nu = 2 * half + 1;
        let p = DataVolume::from_traces(1, 1, TimeAxis::new(nt, 0.01, 0.0).unwrap(), seed[..nt].to_vec()).unwrap();
        let mut a = FilterField::zeros(1, 1, nu, 0.01).unwrap();
        let mut b = a.clone();
        a.traces.copy_from_slice(&seed[30..30 + nu]);
        b.traces.copy_from_slice(&seed[39..39 + nu]);
        let na = filter::normal_operator(&p, &a, 0.5, 1e-3).unwrap();
        let nb = filter::normal_operator(&p, &b, 0.5, 1e-3).unwrap();
        prop_assert!(rel(na.dot(&b), a.dot(&nb)) < 1e-12);
        prop_assert!(na.dot(&a) > 0.0);
    }

    #[test]
    fn penalty_terms_sum_to_the_objective(nt in 8usize..30, seed in values(60 + 7)) {
        let time = TimeAxis::new(nt, 0.01, 0.0).unwrap();
        let p = DataVolume::from_traces(1, 1, time, seed[..nt].to_vec()).unwrap();
        let d = DataVolume::from_traces(1, 1, time, seed[30..30 + nt].to_vec()).unwrap();
        let mut u = FilterField::zeros(1, 1, 7, 0.01).unwrap();
        u.traces.copy_from_slice(&seed[60..67]);
        let cfg = PenaltyConfig { alpha: 0.3, sigma: 0.02, lag_halfwidth: 0.03, ..PenaltyConfig::default() };
        let t = filter::penalty_terms(&u, &p, &d, &cfg).unwrap();
        let misfit = 0.5 * filter::apply_filter(&u, &p).unwrap().minus(&d).unwrap().norm_sq();
        let tu: f64 = (0..7).map(|j| (u.lag(j) * u.traces[j]).powi(2)).sum::<f64>() * 0.01;
        let direct = misfit + 0.5 * cfg.alpha.powi(2) * tu + 0.5 * cfg.sigma.powi(2) * u.norm_sq();
        prop_assert!(rel(t.total(), direct) < 1e-12);
    }

    #[test]
    fn smoothing_is_self_adjoint_and_nonnegative(
        nx in 3usize..25,
        nz in 3usize..25,
        length in 1usize..8,
        repeats in 1usize..3,
        seed in values(2 * 25 * 25),
    ) {
        let g = GridGeometry::new(nx, nz, 20.0, 20.0, 0.0, 0.0).unwrap();
        let op = SmoothingOp { length, repeats };
        let a = &seed[..g.len()];
        let b = &seed[625..625 + g.len()];
        let wa = op.apply(&g, a);
        let wb = op.apply(&g, b);
        prop_assert!(rel(g.dot(&wa, b), g.dot(a, &wb)) < 1e-12 || g.dot(&wa, b).abs() < 1e-12);
        prop_assert!(g.dot(a, &wa) >= -1e-12);
    }

    #[test]
    fn logistic_map_round_trips(gamma in -50.0f64..50.0) {
        let p = LogisticParam::default();
        let k = p.kappa(gamma);
        let c = p.velocity(gamma);
        prop_assert!(c > p.a - p.b && c < p.a + p.b);
        let back = p.gamma_of_kappa(k).unwrap();
        prop_assert!((back - gamma).abs() < 1e-8 * (1.0 + gamma.abs()).powi(3));
        let h = 1e-6;
        let fd = (p.kappa(gamma + h) - p.kappa(gamma - h)) / (2.0 * h);
        prop_assert!((fd - p.dkappa_dgamma(gamma)).abs() < 1e-6 * p.dkappa_dgamma(0.0));
    }

    #[test]
    fn sgf_round_trip_is_bit_exact(
        n1 in 1usize..9,
        n2 in 1usize..5,
        n3 in 1usize..4,
        d1 in 0.001f64..50.0,
        o2 in -100.0f64..100.0,
        raw in prop::collection::vec(any::<u32>(), 9 * 5 * 4),
    ) {
        let n = n1 * n2 * n3;
        let samples: Vec<f32> = raw[..n].iter().map(|&b| {
            let v = f32::from_bits(b);
            if v.is_finite() { v } else { 0.0 }
        }).collect();
        let a = SgfArray::new(
            vec![Axis::new(n1, d1, 0.0).labeled("z", "m"), Axis::new(n2, 1.0, o2), Axis::new(n3, 1.0, 0.0)],
            samples,
        ).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.sgf");
        sgf::write_sgf(&a, &path).unwrap();
        let b = sgf::read_sgf(&path).unwrap();
        prop_assert_eq!(a.axes.clone(), b.axes.clone());
        let bits = |x: &SgfArray| x.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
        prop_assert_eq!(std::fs::read(&path).unwrap(), b.to_bytes());
    }

    #[test]
    fn resampler_reproduces_lines_and_transposes(
        n_in in 6usize..40,
        h in 0.001f64..0.01,
        c in values(4),
        z in values(40),
    ) {
        let span = (n_in - 1) as f64 * h;
        let times: Vec<f64> = (0..n_in.min(20)).map(|k| 0.05 * span + 0.9 * span * k as f64 / 19.0).collect();
        let s = SplineResampler::new(n_in, 0.0, h, &times).unwrap();
        let mut y: Vec<f64> = (0..n_in).map(|k| { let t = k as f64 * h; c[0] + c[1] * t }).collect();
        let mut out = vec![0.0; times.len()];
        s.apply(&y, &mut out);
        for (o, t) in out.iter().zip(&times) {
            prop_assert!((o - (c[0] + c[1] * t)).abs() < 1e-9);
        }
        let zs = &z[..times.len()];
        let mut yt = vec![0.0; n_in];
        s.apply_transpose(zs, &mut yt);
        y.iter_mut().zip(&z).for_each(|(a, b)| *a = *b);
        s.apply(&y, &mut out);
        prop_assert!(rel(linalg::dot(&out, zs), linalg::dot(&y, &yt)) < 1e-12 || linalg::dot(&out, zs).abs() < 1e-13);
    }

    #[test]
    fn data_norm_is_dt_weighted(nt in 1usize..30, dt in 0.001f64..0.1, seed in values(60)) {
        let d = DataVolume::from_traces(2, 1, TimeAxis::new(nt, dt, 0.0).unwrap(), seed[..2 * nt].to_vec()).unwrap();
        let direct: f64 = seed[..2 * nt].iter().map(|v| v * v).sum::<f64>() * dt;
        prop_assert!(rel(d.norm_sq(), direct) < 1e-12 || direct == 0.0);
        prop_assert!(d.norm_sq() >= 0.0);
    }
}
