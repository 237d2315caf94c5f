//! End-to-end acceptance checks, one test per criterion. Each test prints a
//! PASS/FAIL summary line and fails on any violated bound.

use std::time::{Duration, Instant};

use locomode_core::alignment::{apply_map, design_matrix, evaluate_map, fit_cycles, fit_weights, MappingWeights};
use locomode_core::eval::{compute_accuracy, evaluate_trials, one_step_windows, prepare_frames, replay, EvalConfig, Trial};
use locomode_core::gp::{gp_fit, gram_matrix, rbf_kernel, GpHyper};
use locomode_core::sba::{compute_icf_stats, tune_threshold_set, IcfStats};
use locomode_core::signal::{detect_events, ensure_derivatives, DetectorConfig, KinematicFrame};
use locomode_core::synth::{descent_personalization_trials, generate_synthetic_trial, ScenarioParams};
use locomode_core::transition::{EventKind, LocomotionState, Transition, TransitionPair};
use locomode_core::tuning::{
    bo_optimize, frame_cost, grid_search, split_train_eval, BoConfig, ObjectiveConfig, SearchSpace, ThresholdObjective,
};
use locomode_core::{SystemTag, ThresholdSet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAP_WEIGHT_TOL: f64 = 1e-6;
const MAP_REL_GRADIENT_TOL: f64 = 1e-8;
const MAP_MIN_RMSE_REDUCTION: f64 = 0.5;
const SBA_MIN_RECOVERED: f64 = 90.0;
const SBA_MAX_BASELINE: f64 = 40.0;
const BO_MAX_EVALS: usize = 30;
const GRID_MIN_EVALS: usize = 100;
const GRID_STEP_WSD: f64 = 2.5;
const PERSONAL_BASELINE: (f64, f64) = (20.0, 40.0);
const PERSONAL_MIN_HELD_OUT: f64 = 90.0;
const GRAM_MIN_EIG: f64 = -1e-8;
const GP_INTERP_TOL: f64 = 1e-3;
const GP_ORACLE_TOL: f64 = 1e-8;

fn report(id: u32, name: &str, start: Instant, limit: Duration, failures: Vec<String>) {
    let elapsed = start.elapsed();
    let mut failures = failures;
    if elapsed > limit {
        failures.push(format!("runtime {elapsed:?} exceeds {limit:?}"));
    }
    if failures.is_empty() {
        println!("[PASS] criterion {id}: {name} ({elapsed:.2?})");
    } else {
        println!("[FAIL] criterion {id}: {name} ({elapsed:.2?})");
        for f in &failures {
            println!("       {f}");
        }
        panic!("criterion {id} failed: {failures:?}");
    }
}

fn check(failures: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        failures.push(msg());
    }
}

#[test]
fn criterion_1_defaults_fidelity() {
    let start = Instant::now();
    let mut fails = Vec::new();
    let expected = |system: &str, w_sd: &str| {
        format!(
            r#"{{
  "system": "{system}",
  "transitions": {{
    "W-S": {{
      "value": 23.32,
      "bound": "exceed"
    }},
    "S-W": {{
      "value": -4.32,
      "bound": "fall_below"
    }},
    "W-SA": {{
      "value": 50.52,
      "bound": "exceed"
    }},
    "SA-W": {{
      "value": 51.21,
      "bound": "fall_below"
    }},
    "W-SD": {{
      "value": {w_sd},
      "bound": "exceed"
    }},
    "SD-W": {{
      "value": 9.62,
      "bound": "fall_below"
    }}
  }}
}}"#
        )
    };
    for (system, w_sd, thr) in [(SystemTag::Ewalk, "10.37", (62.0, 75.0)), (SystemTag::Autonomyo, "13.37", (55.0, 70.0))] {
        let json = ThresholdSet::defaults(system).to_json();
        let want = expected(system.as_str(), w_sd);
        check(&mut fails, json.as_bytes() == want.as_bytes(), || format!("{system} serialization differs:\n{json}"));
        let back = ThresholdSet::from_json(&json).unwrap();
        check(&mut fails, back == ThresholdSet::defaults(system), || format!("{system} round trip differs"));
        let cfg = system.detector_config();
        check(&mut fails, (cfg.thr_range.low, cfg.thr_range.high) == thr, || {
            format!("{system} THR range {:?}", cfg.thr_range)
        });
    }
    report(1, "defaults fidelity", start, Duration::from_secs(1), fails);
}

/// Gradient descent on the squared loss with plain vectors, independent of the solver.
fn gd_oracle(rows: &[[f64; 7]], t: &[f64]) -> [f64; 7] {
    let mut xtx = [[0.0; 7]; 7];
    let mut xtt = [0.0; 7];
    for (r, &y) in rows.iter().zip(t) {
        for i in 0..7 {
            xtt[i] += r[i] * y;
            for j in 0..7 {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    // Step from a Gershgorin bound on the largest eigenvalue of X^T X.
    let lmax = (0..7).map(|i| xtx[i].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lmax;
    let mut w = [0.0; 7];
    for _ in 0..5_000_000 {
        let mut g = [0.0; 7];
        let mut gn = 0.0;
        for i in 0..7 {
            g[i] = (0..7).map(|j| xtx[i][j] * w[j]).sum::<f64>() - xtt[i];
            gn += g[i] * g[i];
        }
        if gn.sqrt() < 1e-12 {
            break;
        }
        for i in 0..7 {
            w[i] -= step * g[i];
        }
    }
    w
}

#[test]
fn criterion_2_mapping_correctness() {
    let start = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_w: f64 = 0.0;
    let mut worst_g: f64 = 0.0;
    for inst in 0..50 {
        let n = rng.random_range(20..80);
        let frames: Vec<KinematicFrame> = (0..n)
            .map(|i| KinematicFrame {
                theta_dot: Some(rng.random_range(-1.5..1.5)),
                theta_ddot: Some(rng.random_range(-1.5..1.5)),
                ..KinematicFrame::new(i as f64, rng.random_range(-1.5..1.5), 0.0)
            })
            .collect();
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x = design_matrix(&frames).unwrap();
        let tv = DVector::from_vec(t.clone());
        let fit = fit_weights(&x, &tv).unwrap();
        check(&mut fails, !fit.rank_deficient, || format!("instance {inst} reported rank deficient"));
        let rows: Vec<[f64; 7]> = (0..n).map(|i| std::array::from_fn(|j| x[(i, j)])).collect();
        let oracle = gd_oracle(&rows, &t);
        for (a, b) in fit.weights.0.iter().zip(oracle) {
            worst_w = worst_w.max((a - b).abs());
        }
        let scale = 2.0 * (x.transpose() * &tv).norm();
        worst_g = worst_g.max(fit.gradient_norm / scale);
    }
    check(&mut fails, worst_w <= MAP_WEIGHT_TOL, || format!("max weight error vs oracle {worst_w:e}"));
    check(&mut fails, worst_g < MAP_REL_GRADIENT_TOL, || format!("max relative gradient {worst_g:e}"));
    let zero = KinematicFrame {
        theta_dot: Some(0.0),
        theta_ddot: Some(0.0),
        ..KinematicFrame::new(0.0, 0.0, 0.0)
    };
    let v = apply_map(&MappingWeights::autonomyo_reference(), &zero).unwrap();
    check(&mut fails, v == 5.7, || format!("reference map at zero gave {v}"));
    println!("       max |w - w_gd| = {worst_w:.2e}, max relative gradient = {worst_g:.2e}");
    report(2, "mapping correctness", start, Duration::from_secs(10), fails);
}

fn cycles(frames: &[KinematicFrame], len: usize) -> Vec<Vec<KinematicFrame>> {
    frames.chunks_exact(len).map(|c| c.to_vec()).collect()
}

#[test]
fn criterion_3_misalignment_recovery() {
    let start = Instant::now();
    let mut fails = Vec::new();
    let det = DetectorConfig::default();
    // Measured angle: gain, offset and a velocity-dependent lag on the true angle.
    let distort = |f: &KinematicFrame| 1.3 * f.theta_th + 8.0 + 0.04 * f.theta_dot.unwrap();
    let make = |seed: u64| {
        let p = ScenarioParams {
            stride_jitter: 1.0,
            seed,
            ..ScenarioParams::walk_only(8)
        };
        let reference = ensure_derivatives(&generate_synthetic_trial(&p).unwrap().frames, &det).unwrap();
        let measured: Vec<KinematicFrame> = reference
            .iter()
            .map(|f| KinematicFrame {
                theta_th: distort(f),
                theta_dot: None,
                theta_ddot: None,
                ..*f
            })
            .collect();
        let measured = ensure_derivatives(&measured, &det).unwrap();
        let stride = 140;
        let m = cycles(&measured, stride);
        let r: Vec<Vec<f64>> = cycles(&reference, stride).iter().map(|c| c.iter().map(|f| f.theta_th).collect()).collect();
        (m, r)
    };
    let (train_m, train_r) = make(31);
    let (test_m, test_r) = make(32);
    let fit = fit_cycles(&train_m, &train_r, 101).unwrap();
    let rep = evaluate_map(&fit.weights, &test_m, &test_r).unwrap();
    let reduction = 1.0 - rep.rmse_after / rep.rmse_before;
    let err_before = (rep.mhf_mean_before - rep.mhf_mean_reference).abs();
    let err_after = (rep.mhf_mean_after - rep.mhf_mean_reference).abs();
    println!(
        "       RMSE {:.3} -> {:.3} deg ({:.1}% lower); MHF mean {:.2} -> {:.2} deg (reference {:.2})",
        rep.rmse_before,
        rep.rmse_after,
        100.0 * reduction,
        rep.mhf_mean_before,
        rep.mhf_mean_after,
        rep.mhf_mean_reference
    );
    check(&mut fails, reduction >= MAP_MIN_RMSE_REDUCTION, || format!("RMSE reduction {reduction:.3}"));
    check(&mut fails, err_after < err_before, || format!("MHF error {err_before:.3} -> {err_after:.3}"));
    check(&mut fails, rep.mhf_mean_before > rep.mhf_mean_after, || "MHF mean did not decrease".into());
    report(3, "synthetic misalignment recovery", start, Duration::from_secs(10), fails);
}

#[test]
fn criterion_4_clean_detection_baseline() {
    let start = Instant::now();
    let mut fails = Vec::new();
    let defaults = ThresholdSet::defaults(SystemTag::Ewalk);
    let trial = generate_synthetic_trial(&ScenarioParams::all_transitions()).unwrap();
    let cfg = EvalConfig::default();
    let rep = evaluate_trials(std::slice::from_ref(&trial), &defaults, &cfg, None).unwrap();
    for tr in Transition::ALL {
        let acc = rep.accuracy(tr);
        check(&mut fails, acc == Some(100.0), || format!("{tr}: {acc:?}"));
    }

    // Push the W-SA detection just past its window.
    let r = replay(&trial, &defaults, &cfg.detector, None).unwrap();
    let windows = one_step_windows(&trial.gt_transitions, &r.hs_times(), cfg.step_period);
    let k = trial
        .gt_transitions
        .iter()
        .position(|g| g.transition() == Some(Transition::WalkToStairAscent))
        .unwrap();
    let mut late = r.detections.clone();
    for d in late.iter_mut().filter(|d| d.transition() == Transition::WalkToStairAscent) {
        d.t = windows[k] + 0.01;
    }
    let scores = compute_accuracy(&late, &trial.gt_transitions, &windows).scores();
    for tr in Transition::ALL {
        let want = if tr == Transition::WalkToStairAscent { 0.0 } else { 100.0 };
        let got = scores[&tr].accuracy;
        check(&mut fails, got == Some(want), || format!("delayed case {tr}: {got:?}"));
    }
    report(4, "clean-detection baseline", start, Duration::from_secs(10), fails);
}

/// ICF-1 samples at flexion peaks inside stair-ascent strides.
fn stair_ascent_icf1(trials: &[Trial]) -> Vec<f64> {
    let det = DetectorConfig::default();
    let mut out = Vec::new();
    for t in trials {
        let frames = prepare_frames(t, &det, None).unwrap();
        for e in detect_events(&frames, &det).unwrap() {
            if e.kind == EventKind::Mhf && frames[e.index].label == Some(LocomotionState::StairAscent) {
                out.push(e.theta_at_event);
            }
        }
    }
    out
}

fn ascent_trials(mhf: f64, seeds: std::ops::Range<u64>) -> Vec<Trial> {
    seeds
        .map(|seed| {
            let mut p = ScenarioParams::round_trip(LocomotionState::StairAscent, 4);
            p.stair_ascent.mhf = mhf;
            p.stride_jitter = 0.5;
            p.seed = seed;
            p.index = seed as usize;
            generate_synthetic_trial(&p).unwrap()
        })
        .collect()
}

fn stats_for_pair(samples: &[f64]) -> Vec<IcfStats> {
    [Transition::WalkToStairAscent, Transition::StairAscentToWalk]
        .iter()
        .map(|&tr| compute_icf_stats(tr, samples).unwrap())
        .collect()
}

#[test]
fn criterion_5_sba_identity_and_recovery() {
    let start = Instant::now();
    let mut fails = Vec::new();
    let defaults = ThresholdSet::defaults(SystemTag::Ewalk);
    let training = stats_for_pair(&stair_ascent_icf1(&ascent_trials(57.0, 0..5)));

    let same = tune_threshold_set(&defaults, &training, &training);
    check(&mut fails, same.thresholds == defaults, || "equal populations changed thresholds".into());

    // A subject who climbs with much less hip flexion.
    let calibration = stats_for_pair(&stair_ascent_icf1(&ascent_trials(47.0, 100..102)));
    let tuned = tune_threshold_set(&defaults, &training, &calibration).thresholds;
    let stream = ascent_trials(47.0, 200..210);
    let cfg = EvalConfig::default();
    let before = evaluate_trials(&stream, &defaults, &cfg, None).unwrap();
    let after = evaluate_trials(&stream, &tuned, &cfg, None).unwrap();
    for tr in [Transition::WalkToStairAscent, Transition::StairAscentToWalk] {
        let (b, a) = (before.accuracy(tr).unwrap(), after.accuracy(tr).unwrap());
        println!("       {tr}: {b:.0}% -> {a:.0}% (threshold {:.2} -> {:.2})", defaults.value(tr), tuned.value(tr));
        check(&mut fails, b <= SBA_MAX_BASELINE, || format!("{tr} baseline {b}% is not degraded"));
        check(&mut fails, a >= SBA_MIN_RECOVERED, || format!("{tr} after SBA {a}%"));
    }
    report(5, "SBA identity and recovery", start, Duration::from_secs(10), fails);
}

fn wsd_objective(trials: &[Trial]) -> ThresholdObjective {
    ThresholdObjective::new(
        trials,
        TransitionPair::WsdSdw,
        ObjectiveConfig::for_pair(TransitionPair::WsdSdw),
        ThresholdSet::defaults(SystemTag::Ewalk),
        &DetectorConfig::default(),
        None,
    )
    .unwrap()
}

#[test]
fn criterion_6_bo_vs_grid() {
    let start = Instant::now();
    let mut fails = Vec::new();
    let trials = descent_personalization_trials(&[9.0, 12.0, 9.0, 9.0, 9.0], 40).unwrap();
    let (train, _) = split_train_eval(&trials, None).unwrap();
    let obj = wsd_objective(&train);
    let space = SearchSpace::for_pair(TransitionPair::WsdSdw);
    let grid = grid_search(|th| Ok(obj.evaluate(th)), &space).unwrap();
    let cfg = BoConfig {
        budget: BO_MAX_EVALS,
        seed: 7,
        ..BoConfig::default()
    };
    let bo = bo_optimize(|th| Ok(obj.evaluate(th)), &space, &cfg).unwrap();
    let bo_again = bo_optimize(|th| Ok(obj.evaluate(th)), &space, &cfg).unwrap();

    let minimizers: Vec<[f64; 2]> = grid.trace.iter().filter(|p| p.j == grid.best_j).map(|p| p.th).collect();
    let dist = minimizers
        .iter()
        .map(|m| (m[0] - bo.best_th[0]).abs().max((m[1] - bo.best_th[1]).abs()))
        .fold(f64::INFINITY, f64::min);
    println!(
        "       grid: J = {:.4} at {:?} ({} evaluations, {} minimizers); BO: J = {:.4} at [{:.2}, {:.2}] ({} evaluations); distance {:.2} deg",
        grid.best_j,
        grid.best_th,
        grid.evaluations,
        minimizers.len(),
        bo.best_j,
        bo.best_th[0],
        bo.best_th[1],
        bo.evaluations,
        dist
    );
    check(&mut fails, dist <= GRID_STEP_WSD, || format!("BO best is {dist:.3} deg from the nearest grid minimizer"));
    check(&mut fails, bo.evaluations <= BO_MAX_EVALS, || format!("BO used {} evaluations", bo.evaluations));
    check(&mut fails, grid.evaluations >= GRID_MIN_EVALS, || format!("grid used {} evaluations", grid.evaluations));
    check(&mut fails, bo == bo_again, || "BO not deterministic under a fixed seed".into());
    report(6, "BO vs grid equivalence and budget", start, Duration::from_secs(120), fails);
}

#[test]
fn criterion_7_personalization_recovery() {
    let start = Instant::now();
    let mut fails = Vec::new();
    let defaults = ThresholdSet::defaults(SystemTag::Ewalk);
    let trials = descent_personalization_trials(&[9.0, 12.0, 9.0, 9.0, 9.0], 70).unwrap();
    let cfg = EvalConfig::default();
    let pair = [Transition::WalkToStairDescent, Transition::StairDescentToWalk];

    let base = evaluate_trials(&trials, &defaults, &cfg, None).unwrap();
    for tr in pair {
        let a = base.accuracy(tr).unwrap();
        check(&mut fails, (PERSONAL_BASELINE.0..=PERSONAL_BASELINE.1).contains(&a), || {
            format!("{tr} default accuracy {a}% outside the target band")
        });
    }
    let (train, held_out) = split_train_eval(&trials, None).unwrap();
    let obj = wsd_objective(&train);
    let space = SearchSpace::for_pair(TransitionPair::WsdSdw);
    let bo = bo_optimize(|th| Ok(obj.evaluate(th)), &space, &BoConfig { seed: 7, ..BoConfig::default() }).unwrap();
    let tuned = defaults.with_pair(TransitionPair::WsdSdw, bo.best_th);
    let before = evaluate_trials(&held_out, &defaults, &cfg, None).unwrap();
    let after = evaluate_trials(&held_out, &tuned, &cfg, None).unwrap();
    for tr in pair {
        let a = after.accuracy(tr).unwrap();
        println!(
            "       {tr}: subject {:.0}%, held-out {:.0}% -> {a:.0}% (threshold {:.2} -> {:.2})",
            base.accuracy(tr).unwrap(),
            before.accuracy(tr).unwrap(),
            defaults.value(tr),
            tuned.value(tr)
        );
        check(&mut fails, a >= PERSONAL_MIN_HELD_OUT, || format!("{tr} held-out accuracy {a}%"));
    }
    report(7, "personalization recovery", start, Duration::from_secs(120), fails);
}

#[test]
fn criterion_8_gp_numerics() {
    let start = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut min_eig = f64::INFINITY;
    let mut interp_err: f64 = 0.0;
    let mut oracle_err: f64 = 0.0;
    for set in 0..100 {
        let n = rng.random_range(2..=20);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = x.iter().map(|p| (4.0 * p[0]).sin() + p[1] * p[1]).collect();
        let hyper = GpHyper {
            noise_variance: 1e-6,
            ..GpHyper::for_observations(&y)
        };
        for a in &x {
            for b in &x {
                if rbf_kernel(a, b, &hyper) != rbf_kernel(b, a, &hyper) {
                    fails.push(format!("set {set}: kernel not symmetric"));
                }
            }
        }
        let k = gram_matrix(&x, &hyper);
        min_eig = min_eig.min(k.clone().symmetric_eigen().eigenvalues.min());

        let model = gp_fit(&x, &y, &hyper).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            interp_err = interp_err.max((model.predict(xi).0 - yi).abs());
        }

        // Dense-inverse posterior.
        let a = &k + DMatrix::identity(n, n) * (hyper.noise_variance + model.jitter_used);
        let inv = a.try_inverse().unwrap();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
        for _ in 0..5 {
            let q = [rng.random::<f64>(), rng.random::<f64>()];
            let ks = DVector::from_iterator(n, x.iter().map(|xi| rbf_kernel(xi, &q, &hyper)));
            let mean = ybar + (ks.transpose() * &inv * &yc)[(0, 0)];
            let var = (hyper.signal_variance - (ks.transpose() * &inv * &ks)[(0, 0)]).max(0.0);
            let (m, s) = model.predict(&q);
            oracle_err = oracle_err.max((m - mean).abs()).max((s * s - var).abs());
        }
    }
    println!("       min Gram eigenvalue {min_eig:.2e}; max interpolation error {interp_err:.2e}; max oracle error {oracle_err:.2e}");
    check(&mut fails, min_eig >= GRAM_MIN_EIG, || format!("Gram min eigenvalue {min_eig:e}"));
    check(&mut fails, interp_err <= GP_INTERP_TOL, || format!("interpolation error {interp_err:e}"));
    check(&mut fails, oracle_err <= GP_ORACLE_TOL, || format!("oracle mismatch {oracle_err:e}"));
    report(8, "GP numerics", start, Duration::from_secs(30), fails);
}

#[test]
fn criterion_9_objective_arithmetic() {
    use LocomotionState::*;
    let start = Instant::now();
    let mut fails = Vec::new();
    let sa = ObjectiveConfig::for_pair(TransitionPair::WsaSaw);
    let gt = [vec![Walk; 5], vec![StairAscent; 10], vec![Walk; 5]].concat();
    let j0 = frame_cost(&gt, &gt, StairAscent, &sa) + sa.penalty([50.0, 50.0]);
    check(&mut fails, j0 == 0.0, || format!("perfect tracking J = {j0}"));
    let fsm = vec![Walk; 20];
    let j = frame_cost(&gt, &fsm, StairAscent, &sa);
    check(&mut fails, j == 0.05, || format!("10 mismatched frames J = {j}"));
    let p = sa.penalty([57.5, 57.5]);
    check(&mut fails, p == 1.25e-4, || format!("penalty {p}"));
    report(9, "objective arithmetic", start, Duration::from_secs(1), fails);
}
