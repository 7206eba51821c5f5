//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use respgate_core::direction::{analyze_stack, chain_flips, consensus_score, global_sign, resolve_analysis, zmc_curve};
use respgate_core::eval::{correlate_with_reference, sign_accuracy};
use respgate_core::filter::filter_slice;
use respgate_core::heartbeat::{classify_beats, reject_arrhythmic, segment_heartbeats, select_pe_pi, ScoreMethod};
use respgate_core::pca::{center_temporal, covariance, flatten, leading_eigenvector, ExtractOptions};
use respgate_core::phantom::{generate, split_series, OrientationScenario, PhantomConfig, RespPattern};
use respgate_core::{
    design_lowpass, resolve, CineStack, Error, HeartbeatWindow, LowpassKernel, PhantomTruth, ResolveOptions,
    RespSignal, SignLedger, SignState, ZmcCurve,
};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn kernel_for(stack: &CineStack) -> LowpassKernel {
    design_lowpass(1.0 / stack.frame_period_s(), 0.8).unwrap()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let (stack, truth) = generate(&PhantomConfig::default()).map_err(|e| e.to_string())?;
    let res = resolve(&stack, &kernel_for(&stack), &ResolveOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let r = correlate_with_reference(&res.signals, &truth.resp_signal).map_err(|e| e.to_string())?;
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    let acc = sign_accuracy(&r);
    check(
        min >= 0.90 && acc == 1.0 && elapsed <= 60.0,
        format!("min r {min:.4}, sign accuracy {acc}, {elapsed:.2} s"),
    )
}

/// One phantom of the robustness sweep.
struct SweepRun {
    cfg: PhantomConfig,
    stack: CineStack,
    truth: PhantomTruth,
    outcome: Result<respgate_core::Resolution, Error>,
}

fn sweep() -> Vec<SweepRun> {
    let patterns = [RespPattern::Periodic, RespPattern::LongCycle, RespPattern::Irregular];
    (0..50u64)
        .map(|i| {
            let cfg = PhantomConfig {
                seed: 1000 + i,
                resp_pattern: patterns[i as usize % 3],
                orientation: OrientationScenario::ALL[i as usize % 4],
                ..PhantomConfig::default()
            };
            let (stack, truth) = generate(&cfg).unwrap();
            let outcome = resolve(&stack, &kernel_for(&stack), &ResolveOptions::default());
            SweepRun { cfg, stack, truth, outcome }
        })
        .collect()
}

fn criterion_2(runs: &[SweepRun]) -> Verdict {
    let (mut correct, mut undetermined, mut silent) = (0, 0, 0);
    let mut min_r = f64::INFINITY;
    for run in runs {
        match &run.outcome {
            Ok(res) => {
                let r = correlate_with_reference(&res.signals, &run.truth.resp_signal).unwrap();
                if sign_accuracy(&r) == 1.0 {
                    correct += 1;
                    min_r = r.iter().copied().fold(min_r, f64::min);
                } else {
                    silent += 1;
                    eprintln!("  seed {}: wrong sign emitted, r = {r:?}", run.cfg.seed);
                }
            }
            Err(e) if e.is_undetermined() => undetermined += 1,
            Err(e) => {
                silent += 1;
                eprintln!("  seed {}: unexpected error {e}", run.cfg.seed);
            }
        }
    }
    check(
        correct >= 48 && silent == 0,
        format!("{correct}/50 fully correct, {undetermined} undetermined, {silent} wrong or other; min r {min_r:.3}"),
    )
}

fn bits(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

fn criterion_3() -> Verdict {
    let (stack, _) = generate(&PhantomConfig::default()).unwrap();
    let opts = ResolveOptions {
        extract: ExtractOptions { canonicalize: false },
        ..ResolveOptions::default()
    };
    let analysis = analyze_stack(&stack, &kernel_for(&stack), &opts).map_err(|e| e.to_string())?;
    let reference = resolve_analysis(analysis.clone(), opts.tau).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut identical = 0;
    for _ in 0..100 {
        let flips: Vec<bool> = (0..stack.len()).map(|_| rng.random()).collect();
        let Ok(res) = resolve_analysis(analysis.with_raw_flips(&flips), opts.tau) else {
            continue;
        };
        // Intermediate scores follow slice 0's raw sign; the output must not.
        let abs = |v: &[f64]| bits(&v.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let same = res.signals.iter().zip(&reference.signals).all(|(a, b)| bits(a.values()) == bits(b.values()))
            && res.zmc() == reference.zmc()
            && abs(&res.ledger.zmc_s) == abs(&reference.ledger.zmc_s)
            && res.ledger.consensus_score.abs().to_bits() == reference.ledger.consensus_score.abs().to_bits();
        identical += same as usize;
    }
    check(identical == 100, format!("{identical}/100 flip assignments bit-identical"))
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n: usize = rng.random_range(1..=12);
        let rank = rng.random_range(1..=n);
        let b = Array2::from_shape_fn((n, rank), |_| rng.random_range(-2.0..2.0));
        let mut a = b.dot(&b.t());
        for i in 0..n {
            for j in 0..i {
                a[[i, j]] = a[[j, i]];
            }
        }
        let eig = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| a[[i, j]]));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|x, y| eig.eigenvalues[*y].total_cmp(&eig.eigenvalues[*x]));
        let lambda_o = eig.eigenvalues[order[0]];
        let gap = if n > 1 { lambda_o - eig.eigenvalues[order[1]] } else { f64::INFINITY };
        let (v, lambda) = leading_eigenvector(&a).map_err(|e| e.to_string())?;
        let scale = lambda_o.max(1.0);
        worst = worst.max((lambda - lambda_o).abs() / scale);
        // The eigenvector is only defined when the top eigenvalue is separated.
        if gap > 1e-3 * scale {
            let v_o = eig.eigenvectors.column(order[0]);
            let sign = v.iter().zip(v_o.iter()).map(|(x, y)| x * y).sum::<f64>().signum();
            for (x, y) in v.iter().zip(v_o.iter()) {
                worst = worst.max((x - sign * y).abs());
            }
        }
    }

    let (stack, _) = generate(&PhantomConfig::default()).unwrap();
    let kernel = kernel_for(&stack);
    let mut worst_residual = 0.0f64;
    for s in stack.slices() {
        let sigma = covariance(&center_temporal(&flatten(&filter_slice(s, &kernel).unwrap())));
        let (v, lambda) = leading_eigenvector(&sigma).map_err(|e| e.to_string())?;
        let r = &sigma.dot(&Array1::from(v.clone())) - &(lambda * &Array1::from(v));
        worst_residual = worst_residual.max(r.dot(&r).sqrt() / lambda);
    }
    check(
        worst <= 1e-8 && worst_residual <= 1e-8,
        format!("200 matrices, worst deviation {worst:.1e}; worst phantom residual {worst_residual:.1e}·λ"),
    )
}

fn dtft_db(k: &LowpassKernel, f_hz: f64) -> f64 {
    let c = k.half_len() as f64;
    let w = 2.0 * PI * f_hz / k.fs_hz();
    let (re, im) = k.taps().iter().enumerate().fold((0.0, 0.0), |(re, im), (n, t)| {
        let p = w * (n as f64 - c);
        (re + t * p.cos(), im - t * p.sin())
    });
    20.0 * (re * re + im * im).sqrt().log10()
}

fn criterion_5() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for fs in [22.0, 25.0] {
        let k = design_lowpass(fs, 0.8).map_err(|e| e.to_string())?;
        let dc = 10f64.powf(dtft_db(&k, 0.0) / 20.0);
        // Stopband from 1.5x cutoff up to Nyquist on a fine grid.
        let stop = (0..=1000)
            .map(|i| 1.2 + (fs / 2.0 - 1.2) * i as f64 / 1000.0)
            .map(|f| dtft_db(&k, f))
            .fold(f64::NEG_INFINITY, f64::max);
        let t = k.taps();
        let symmetric = (0..t.len()).all(|i| t[i] == t[t.len() - 1 - i]);
        ok &= (dc - 1.0).abs() <= 1e-3 && stop <= -30.0 && symmetric && t.len() % 2 == 1;
        notes.push(format!("fs {fs}: {} taps, DC {dc:.6}, stopband peak {stop:.1} dB", t.len()));
    }
    check(ok, notes.join("; "))
}

fn criterion_6() -> Verdict {
    let p = Array2::from_shape_vec((4, 2), vec![1.0, 0.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0]).unwrap();
    let hand = zmc_curve(&p, 0).map_err(|e| e.to_string())?;
    let hand_ok = hand.values() == [-2.0, -2.5];

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(4..40);
        let rows = len + 4;
        let offset = rng.random_range(1..3);
        let mut p = Array2::zeros((rows, 2));
        for i in 0..len {
            let v: f64 = rng.random_range(0.0..10.0);
            p[[offset + i, 0]] = v;
            p[[offset + i + 1, 1]] = v;
        }
        let z = zmc_curve(&p, 0).map_err(|e| e.to_string())?;
        // Stored negated: one row down lowers the stored value by one.
        worst = worst.max((z.values()[0] - z.values()[1] - 1.0).abs());
    }
    check(
        hand_ok && worst <= 1e-9,
        format!("hand columns {:?}; 1000 shifted columns, worst error {worst:.1e}", hand.values()),
    )
}

fn consistent(values: &[f64], k: usize) -> RespSignal {
    let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    RespSignal::new(values.iter().map(|v| v / n).collect(), SignState::SliceConsistent, k).unwrap()
}

fn criterion_7() -> Verdict {
    let chain = chain_flips(&[0.8, -0.6, 0.7]).map_err(|e| e.to_string())?;
    let chain_ok = chain == [false, false, true, true] && chain_flips(&[]).unwrap() == [false];

    let c1 = consensus_score(&[0.9, -0.75, 0.5], 0.7);
    let c2 = consensus_score(&[0.6, 0.65], 0.7);
    let c3 = consensus_score(&[-0.95, -0.8, 0.71], 0.7);
    let scores_ok = (c1 - 0.15).abs() <= 1e-12 && c2 == 0.0 && (c3 + 0.34).abs() <= 1e-12;

    // A signal anti-correlated with its ZMC curve is negated; above the
    // correlation it is undetermined.
    let s = vec![consistent(&[1.0, -1.0, 2.0, -2.0], 0)];
    let z = vec![ZmcCurve::new(vec![-3.0, -2.0, -4.0, -1.0], 8, 0).unwrap()];
    let (out, ledger) = global_sign(s.clone(), &z, 0.7, SignLedger::default()).map_err(|e| e.to_string())?;
    let flip_ok = ledger.global_sign == -1 && out[0].values() == s[0].negated().values();
    let undetermined_ok = matches!(
        global_sign(s, &z, 1.0, SignLedger::default()),
        Err(Error::DirectionalityUndetermined { ref ledger }) if ledger.global_sign == 0
    );
    check(
        chain_ok && scores_ok && flip_ok && undetermined_ok,
        format!(
            "flips {chain:?}; consensus {c1:.2}, {c2}, {c3:.2}; negative consensus negates: {flip_ok}; \
             below threshold undetermined: {undetermined_ok}"
        ),
    )
}

fn respgate(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_respgate")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn criterion_8(runs: &[SweepRun]) -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    respgate(&["phantom", "--out", &p("stack")])?;
    respgate(&["extract", &p("stack"), "--out", &p("ext")])?;
    respgate(&[
        "eval", "--extract-dir", &p("ext"), "--truth", &p("stack/truth.json"), "--split", "2", "--stack", &p("stack"),
    ])?;
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(&p("ext")).join("eval/summary.json")).unwrap())
            .map_err(|e| e.to_string())?;
    let halves: Vec<String> = summary["series"]
        .as_array()
        .unwrap()
        .iter()
        .skip(1)
        .map(|o| match o["report"]["sign_accuracy"].as_f64() {
            Some(a) => format!("{a}"),
            None => "undetermined".into(),
        })
        .collect();

    // The sweep, halved.
    let (mut correct, mut undetermined, mut wrong) = (0, 0, 0);
    for run in runs {
        let parts = split_series(&run.stack, 2).unwrap();
        for (part, truth) in parts.iter().zip(run.truth.split(2).unwrap()) {
            match resolve(part, &kernel_for(part), &ResolveOptions::default()) {
                Ok(res) => {
                    let r = correlate_with_reference(&res.signals, &truth.resp_signal).unwrap();
                    if sign_accuracy(&r) == 1.0 {
                        correct += 1;
                    } else {
                        wrong += 1;
                    }
                }
                Err(e) if e.is_undetermined() => undetermined += 1,
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    Ok(format!(
        "default phantom halves sign accuracy [{}]; sweep halves: {correct}/100 correct, {undetermined} undetermined, {wrong} wrong sign",
        halves.join(", ")
    ))
}

fn w(start: usize, end: usize, rr: f64) -> HeartbeatWindow {
    HeartbeatWindow {
        start_frame: start,
        end_frame: end,
        rr_s: rr,
    }
}

fn criterion_9(runs: &[SweepRun]) -> Verdict {
    let segments_ok = segment_heartbeats(&[0.0, 1.0, 2.0], 0.5, 4).unwrap() == [w(0, 1, 1.0), w(2, 3, 1.0)]
        && segment_heartbeats(&[0.0, 10.0], 0.04, 250).unwrap() == [w(0, 249, 10.0)]
        && segment_heartbeats(&[0.3], 0.04, 250).is_err();
    let odd = [w(0, 1, 1.0), w(2, 3, 1.0), w(4, 5, 1.4)];
    let even = [w(0, 1, 1.0), w(2, 3, 1.0), w(4, 5, 1.0)];
    let reject_ok = reject_arrhythmic(&odd, 0.15).unwrap() == odd[..2]
        && reject_arrhythmic(&even, 0.15).unwrap() == even
        && reject_arrhythmic(&odd, 0.0).is_err();
    let n = 2.0;
    let s = RespSignal::new(
        [1.0, 1.0, 0.0, 0.0, -1.0, -1.0].iter().map(|v| v / n).collect(),
        SignState::GloballyCorrected,
        0,
    )
    .unwrap();
    let sel = select_pe_pi(&even, &s, ScoreMethod::Mean).unwrap();
    let single = select_pe_pi(&even[1..2], &s, ScoreMethod::Mean).unwrap();
    let flat = RespSignal::new(vec![0.5; 4], SignState::GloballyCorrected, 0).unwrap();
    let tie = select_pe_pi(&[w(2, 3, 1.0), w(0, 1, 1.0)], &flat, ScoreMethod::Mean).unwrap();
    let select_ok = (sel.pe, sel.pi) == (even[0], even[2])
        && (single.pe, single.pi) == (even[1], even[1])
        && (tie.pe, tie.pi) == (w(0, 1, 1.0), w(0, 1, 1.0));

    let (mut slices, mut hits, mut full_runs, mut scored_runs) = (0, 0, 0, 0);
    for run in runs {
        let Ok(res) = &run.outcome else { continue };
        scored_runs += 1;
        let mut all = true;
        for ((slice, signal), pe) in run.stack.slices().iter().zip(&res.signals).zip(&run.truth.pe_frames) {
            let beats = classify_beats(slice.rwave_times_s(), slice.frame_period_s(), signal, 0.15, ScoreMethod::Mean)
                .map_err(|e| e.to_string())?;
            let hit = beats.pe().is_some_and(|w| pe.iter().any(|f| w.contains(*f)));
            slices += 1;
            hits += hit as usize;
            all &= hit;
        }
        full_runs += all as usize;
    }
    let rate = hits as f64 / slices as f64;
    check(
        segments_ok && reject_ok && select_ok && rate >= 0.95,
        format!(
            "examples ok: segment {segments_ok}, reject {reject_ok}, select {select_ok}; PE window overlaps truth \
             in {hits}/{slices} slice selections ({:.1}%); every slice of a run: {full_runs}/{scored_runs}",
            100.0 * rate
        ),
    )
}

fn run(n: usize, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &verdict {
        Ok(d) => println!("criterion {n}: PASS  {d}  [{secs:.1} s]"),
        Err(d) => println!("criterion {n}: FAIL  {d}  [{secs:.1} s]"),
    }
    verdict.is_ok()
}

fn main() {
    // Panics become FAIL lines; keep the output to one line per criterion.
    std::panic::set_hook(Box::new(|_| {}));
    let start = Instant::now();
    let runs = sweep();
    println!("sweep of {} phantoms resolved in {:.1} s", runs.len(), start.elapsed().as_secs_f64());
    let results = [
        run(1, criterion_1),
        run(2, || criterion_2(&runs)),
        run(3, criterion_3),
        run(4, criterion_4),
        run(5, criterion_5),
        run(6, criterion_6),
        run(7, criterion_7),
        run(8, || criterion_8(&runs)),
        run(9, || criterion_9(&runs)),
    ];
    let passed = results.iter().filter(|ok| **ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
