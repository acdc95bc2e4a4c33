use rrq_core::decode::{select_activation_set, ActivationStrategy};
use rrq_core::oracle::topk_probability_profile;
use rrq_core::predict::{predict, BaseEncoder, PredictorConfig, PredictorKind};
use rrq_core::{
    decode_argmax, decode_argmax_bias_corrected, decode_expectation, encode_binary,
    encode_expected, encode_sampled, ContinuousPoint, Dims, GridPoint, RngStream, Stride,
    Threshold,
};

const N: usize = 1_000_000;

fn s4() -> Stride {
    Stride::new(4.0).unwrap()
}

/// Midpoint-rule average of the sorted bilinear weights over the unit square.
fn profile_quadrature(n: usize) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for i in 0..n {
        let a = (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let b = (j as f64 + 0.5) / n as f64;
            let mut w = [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b];
            w.sort_by(|x, y| y.total_cmp(x));
            for k in 0..4 {
                acc[k] += w[k];
            }
        }
    }
    acc.map(|v| v / (n * n) as f64)
}

#[test]
fn profile_matches_quadrature() {
    // frozen from a 4000x4000 midpoint rule; closed forms 9/16, 13/48, 5/48, 1/16
    const FROZEN: [f64; 4] = [0.5625, 0.270833, 0.104167, 0.0625];
    let quad = profile_quadrature(800);
    for (q, f) in quad.iter().zip(FROZEN) {
        assert!((q - f).abs() < 1e-5, "{quad:?}");
    }
    let p = topk_probability_profile(N as u64, &mut RngStream::new(17, 0)).unwrap();
    for (m, f) in p.mean.iter().zip(FROZEN) {
        assert!((m - f).abs() <= 0.003, "{:?}", p.mean);
    }
    assert!((p.mean.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
}

#[test]
fn sampled_frequencies_follow_expected_grid() {
    let dims = Dims::new(8, 8);
    let gt = ContinuousPoint::new(9.0, 15.0);
    let expected = encode_expected(gt, s4(), dims).unwrap();
    let mut counts = vec![0usize; dims.cells()];
    let mut rng = RngStream::new(99, 0);
    for _ in 0..N {
        let h = encode_sampled(gt, s4(), dims, &mut rng).unwrap();
        let i = h.values().iter().position(|v| *v == 1.0).unwrap();
        counts[i] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        let p = expected.values()[i];
        let freq = *c as f64 / N as f64;
        let band = 3.0 * (p * (1.0 - p) / N as f64).sqrt();
        assert!(
            (freq - p).abs() <= band.max(1e-12),
            "cell {i}: {freq} vs {p}"
        );
    }
    let hot = dims.index(GridPoint::new(2, 4)).unwrap();
    assert!((counts[hot] as f64 / N as f64 - 0.5625).abs() <= 0.0015);
}

#[test]
fn vanilla_bias_and_its_correction() {
    let dims = Dims::new(8, 8);
    let band = 3.0 * (1.0f64 / 12.0 / N as f64).sqrt();
    for t in [0.0, 0.3, 0.5, 1.0] {
        let t = Threshold::new(t).unwrap();
        let mut rng = RngStream::new(5, 1);
        let (mut raw, mut fixed) = ([0.0; 2], [0.0; 2]);
        for _ in 0..N {
            let gt = ContinuousPoint::new(
                4.0 * (1.0 + rng.uniform() + rng.below(5) as f64),
                4.0 * (1.0 + rng.uniform() + rng.below(5) as f64),
            );
            let h = encode_binary(gt, s4(), dims, t).unwrap();
            let p = decode_argmax(&h).unwrap();
            let c = decode_argmax_bias_corrected(&h, t).unwrap();
            raw[0] += (p.x - gt.x) / 4.0;
            raw[1] += (p.y - gt.y) / 4.0;
            fixed[0] += (c.x - gt.x) / 4.0;
            fixed[1] += (c.y - gt.y) / 4.0;
        }
        for axis in 0..2 {
            let r = raw[axis] / N as f64;
            let f = fixed[axis] / N as f64;
            assert!((r - (0.5 - t.get())).abs() <= band, "t={t:?} raw {r}");
            assert!(f.abs() <= band, "t={t:?} corrected {f}");
        }
    }
}

#[test]
fn noise_degrades_topk_decoding_monotonically() {
    let dims = Dims::new(16, 16);
    let trials = 4000;
    let mean_error = |level: f64| {
        let cfg = PredictorConfig {
            kind: PredictorKind::AdditiveNoise { level },
            base: BaseEncoder::Expected {},
        };
        let mut total = 0.0;
        for trial in 0..trials {
            let mut rng = RngStream::new(12, trial);
            let gt = ContinuousPoint::new(
                4.0 * (4.0 + 8.0 * rng.uniform()),
                4.0 * (4.0 + 8.0 * rng.uniform()),
            );
            let h = predict(gt, &cfg, dims, s4(), &mut rng).unwrap();
            let set = select_activation_set(&h, ActivationStrategy::TopK { k: 9 }).unwrap();
            total += decode_expectation(&h, &set, true).unwrap().distance(&gt);
        }
        total / trials as f64
    };
    let errors: Vec<f64> = [0.0, 0.05, 0.1, 0.2]
        .iter()
        .map(|l| mean_error(*l))
        .collect();
    assert!(errors[0] < 1e-9);
    for w in errors.windows(2) {
        assert!(w[1] >= w[0] * 0.9, "{errors:?}");
    }
}
