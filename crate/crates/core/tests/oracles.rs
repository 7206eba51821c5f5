//! Numerical kernels checked against independent references: nalgebra's
//! dense symmetric eigensolver, a direct DTFT of the filter taps, and
//! brute-force sums.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use proptest::prelude::*;
use respgate_core::eigen::symmetric_eigen;
use respgate_core::filter::{apply_zero_phase, filter_slice};
use respgate_core::pca::{covariance, leading_eigenvector, FlattenedSeries};
use respgate_core::{design_lowpass, LowpassKernel, SliceSeries};

fn oracle_leading(a: &Array2<f64>) -> (f64, Vec<f64>, f64) {
    let n = a.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|x, y| eig.eigenvalues[*y].total_cmp(&eig.eigenvalues[*x]));
    let top = order[0];
    let gap = if n > 1 {
        eig.eigenvalues[top] - eig.eigenvalues[order[1]]
    } else {
        f64::INFINITY
    };
    (
        eig.eigenvalues[top],
        eig.eigenvectors.column(top).iter().copied().collect(),
        gap,
    )
}

fn spsd(n: usize, rank: usize, entries: &[f64]) -> Array2<f64> {
    let b = Array2::from_shape_fn((n, rank), |(i, k)| entries[(i * rank + k) % entries.len()]);
    let mut a = b.dot(&b.t());
    for i in 0..n {
        for j in 0..i {
            a[[i, j]] = a[[j, i]];
        }
    }
    a
}

fn assert_matches_oracle(a: &Array2<f64>) -> Result<(), TestCaseError> {
    let (lambda_o, v_o, gap) = oracle_leading(a);
    let (v, lambda) = leading_eigenvector(a).unwrap();
    let scale = lambda_o.abs().max(1.0);
    prop_assert!((lambda - lambda_o).abs() <= 1e-8 * scale, "{lambda} vs {lambda_o}");
    // Eigenvectors are only defined when the top eigenvalue is separated.
    if gap > 1e-3 * scale {
        let sign = v.iter().zip(&v_o).map(|(x, y)| x * y).sum::<f64>().signum();
        for (x, y) in v.iter().zip(&v_o) {
            prop_assert!((x - sign * y).abs() <= 1e-8, "{x} vs {y}");
        }
    }
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    prop_assert!((norm - 1.0).abs() <= 1e-12);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn leading_pair_matches_dense_oracle(
        n in 1usize..=12,
        rank in 1usize..=12,
        entries in prop::collection::vec(-2.0f64..2.0, 144),
    ) {
        assert_matches_oracle(&spsd(n, rank.min(n), &entries))?;
    }

    #[test]
    fn full_spectrum_matches_dense_oracle(n in 1usize..=8, entries in prop::collection::vec(-1.0f64..1.0, 64)) {
        let a = spsd(n, n, &entries);
        let eig = symmetric_eigen(&a).unwrap();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
        let mut want: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        for (x, y) in eig.values.iter().zip(&want) {
            prop_assert!((x - y).abs() <= 1e-9 * want[n - 1].max(1.0));
        }
    }

    #[test]
    fn covariance_is_pairwise_dot_products(
        m in 1usize..8,
        n in 3usize..7,
        entries in prop::collection::vec(-3.0f64..3.0, 56),
    ) {
        let d = Array2::from_shape_fn((m, n), |(i, j)| entries[(i * n + j) % entries.len()]);
        let sigma = covariance(&FlattenedSeries::new(d.clone()).unwrap());
        for a in 0..n {
            for b in 0..n {
                let mut want = 0.0;
                for i in 0..m {
                    want += d[[i, a]] * d[[i, b]];
                }
                prop_assert!((sigma[[a, b]] - want).abs() <= 1e-12 * want.abs().max(1.0));
                prop_assert_eq!(sigma[[a, b]], sigma[[b, a]]);
            }
        }
    }
}

#[test]
fn six_by_six_spsd_example() {
    let entries: Vec<f64> = (0..36).map(|k| ((k * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect();
    assert_matches_oracle(&spsd(6, 6, &entries)).unwrap();
}

/// `|H(f)|` by direct evaluation of the DTFT sum about the center tap.
fn dtft_gain(kernel: &LowpassKernel, f_hz: f64) -> f64 {
    let c = kernel.half_len() as f64;
    let w = 2.0 * PI * f_hz / kernel.fs_hz();
    let (re, im) = kernel.taps().iter().enumerate().fold((0.0, 0.0), |(re, im), (n, t)| {
        let phase = w * (n as f64 - c);
        (re + t * phase.cos(), im - t * phase.sin())
    });
    (re * re + im * im).sqrt()
}

fn db(g: f64) -> f64 {
    20.0 * g.log10()
}

#[test]
fn kernel_response_at_both_frame_rates() {
    for fs in [22.0, 25.0] {
        let k = design_lowpass(fs, 0.8).unwrap();
        assert_eq!(k.len() % 2, 1);
        assert!((dtft_gain(&k, 0.0) - 1.0).abs() <= 1e-9);
        for f in [1.2, 1.5, 2.0, 2.5, 4.0, fs / 2.0 - 0.01] {
            assert!(db(dtft_gain(&k, f)) <= -30.0, "fs {fs}, {f} Hz: {} dB", db(dtft_gain(&k, f)));
        }
        for f in [0.1, 0.25, 0.4] {
            assert!(db(dtft_gain(&k, f)) >= -0.5, "fs {fs}, {f} Hz");
        }
        let t = k.taps();
        for i in 0..t.len() {
            assert!((t[i] - t[t.len() - 1 - i]).abs() <= 1e-12);
        }
    }
    assert_eq!(design_lowpass(22.0, 0.8).unwrap().len(), 111);
    assert_eq!(design_lowpass(25.0, 0.8).unwrap().len(), 125);
}

fn slice_from(px: Array3<f64>) -> SliceSeries {
    SliceSeries::new(px, 0.04, [0.0, 0.0, -1.0], [1.0, 0.0, 0.0], vec![], 0).unwrap()
}

#[test]
fn temporally_constant_slice_is_unchanged() {
    let px = Array3::from_shape_fn((250, 3, 4), |(_, r, c)| (r * 4 + c) as f64 + 1.5);
    let k = design_lowpass(25.0, 0.8).unwrap();
    let out = filter_slice(&slice_from(px.clone()), &k).unwrap();
    for (a, b) in out.pixels().iter().zip(px.iter()) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn every_pixel_matches_the_one_dimensional_filter() {
    let px = Array3::from_shape_fn((200, 2, 2), |(n, r, c)| {
        let t = n as f64 * 0.04;
        2.0 + (2.0 * PI * (0.2 + 0.3 * r as f64) * t + c as f64).sin() + 0.3 * (2.0 * PI * 1.9 * t).cos()
    });
    let k = design_lowpass(25.0, 0.8).unwrap();
    let s = slice_from(px.clone());
    let out = filter_slice(&s, &k).unwrap();
    for r in 0..2 {
        for c in 0..2 {
            let series: Vec<f64> = px.slice(ndarray::s![.., r, c]).to_vec();
            let want = apply_zero_phase(&series, &k).unwrap();
            for (a, b) in out.pixel_series(r, c).iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
    assert_eq!(out.row_dir(), s.row_dir());
    assert_eq!(out.frame_period_s(), s.frame_period_s());
}

/// Power of `x` (mean removed, Hann-windowed against edge leakage) in a
/// frequency band, by direct DFT.
fn band_power(x: &[f64], fs: f64, band: impl Fn(f64) -> bool) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let hann = |i: usize| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
    (1..=n / 2)
        .map(|k| k as f64 * fs / n as f64)
        .filter(|f| band(*f))
        .map(|f| {
            let (re, im) = x.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, v)| {
                let p = 2.0 * PI * f * i as f64 / fs;
                let y = (v - mean) * hann(i);
                (re + y * p.cos(), im - y * p.sin())
            });
            re * re + im * im
        })
        .sum()
}

#[test]
fn filtered_phantom_spatial_sum_has_no_cardiac_ripple() {
    use respgate_core::phantom::{generate, PhantomConfig};
    let k = design_lowpass(25.0, 0.8).unwrap();
    let sums = |s: &SliceSeries| -> Vec<f64> { (0..s.frames()).map(|n| s.frame(n).sum()).collect() };
    let ratio = |x: &[f64]| band_power(x, 25.0, |f| f > 1.2) / band_power(x, 25.0, |f| f <= 0.8);
    for cardiac_amp_px in [2.0, 3.0] {
        let cfg = PhantomConfig {
            slices: 1,
            cardiac_amp_px,
            ..PhantomConfig::default()
        };
        let (stack, _) = generate(&cfg).unwrap();
        let raw = &stack.slices()[0];
        let filtered = filter_slice(raw, &k).unwrap();
        let (before, after) = (sums(raw), sums(&filtered));
        assert!(ratio(&before) > 0.1, "phantom should carry cardiac power: {}", ratio(&before));
        let after_db = 10.0 * ratio(&after).log10();
        assert!(after_db <= -20.0, "cardiac amplitude {cardiac_amp_px}: {after_db} dB");
    }
}
