use locomode_core::alignment::{design_matrix, fit_weights, map_frames, MappingWeights};
use locomode_core::gp::{gp_fit, gram_matrix, GpHyper};
use locomode_core::KinematicFrame;
use nalgebra::DVector;
use proptest::prelude::*;

fn frames(n: usize, amp: f64, phase: f64) -> Vec<KinematicFrame> {
    (0..n)
        .map(|i| {
            let t = i as f64 * 0.01;
            let w = 2.0 * std::f64::consts::PI / 1.3;
            let a = amp * (w * t + phase).sin() + 0.3 * amp * (2.0 * w * t).cos();
            let v = amp * w * (w * t + phase).cos() - 0.6 * amp * w * (2.0 * w * t).sin();
            let acc = -amp * w * w * (w * t + phase).sin() - 1.2 * amp * w * w * (2.0 * w * t).cos();
            KinematicFrame {
                t,
                theta_th: a,
                theta_dot: Some(v),
                theta_ddot: Some(acc),
                grf: 0.0,
                label: None,
            }
        })
        .collect()
}

fn points() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 1..15)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_is_symmetric_with_signal_diagonal(x in points(), ell in 0.05..1.0f64) {
        let h = GpHyper { lengthscale: ell, ..GpHyper::for_observations(&[0.0, 1.0]) };
        let k = gram_matrix(&x, &h);
        for i in 0..x.len() {
            prop_assert!((k[(i, i)] - h.signal_variance).abs() < 1e-12);
            for j in 0..x.len() {
                prop_assert_eq!(k[(i, j)], k[(j, i)]);
                prop_assert!(k[(i, j)] <= h.signal_variance + 1e-15);
            }
        }
        prop_assert!(k.symmetric_eigen().eigenvalues.min() > -1e-8);
    }

    #[test]
    fn posterior_std_nonnegative_and_mean_finite(
        x in points(),
        seed_y in prop::collection::vec(-5.0..5.0f64, 15),
        q in prop::collection::vec(0.0..1.0f64, 2),
    ) {
        let y = &seed_y[..x.len()];
        let m = gp_fit(&x, y, &GpHyper::for_observations(y)).unwrap();
        let (mean, std) = m.predict(&q);
        prop_assert!(mean.is_finite());
        prop_assert!(std >= 0.0);
        prop_assert!(std * std <= m.hyper.signal_variance * (1.0 + 1e-9));
    }

    #[test]
    fn exact_map_is_recovered(
        w in prop::collection::vec(-0.5..0.5f64, 7),
        amp in 5.0..30.0f64,
        phase in 0.0..3.0f64,
    ) {
        let f = frames(200, amp, phase);
        let w = MappingWeights::from_slice(&w).unwrap();
        let target: Vec<f64> = map_frames(&w, &f).unwrap().iter().map(|g| g.theta_th).collect();
        let x = design_matrix(&f).unwrap();
        let fit = fit_weights(&x, &DVector::from_vec(target.clone())).unwrap();
        let back: Vec<f64> = map_frames(&fit.weights, &f).unwrap().iter().map(|g| g.theta_th).collect();
        let scale = target.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in back.iter().zip(&target) {
            prop_assert!((a - b).abs() <= 1e-6 * scale, "{} vs {}", a, b);
        }
    }
}
