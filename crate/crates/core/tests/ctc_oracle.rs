use advbench_core::asr::{ctc_loss, min_frames, AsrError, Logits};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{brute_force, random_logits};

#[test]
fn matches_brute_force_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut infeasible = 0;
    let start = std::time::Instant::now();
    while checked < 300 {
        let t_len = rng.random_range(1..=6);
        let k = rng.random_range(2..=4);
        let blank = k - 1;
        let len = rng.random_range(1..=3);
        let labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..blank)).collect();
        let logits = random_logits(&mut rng, t_len, k, 3.0);
        let got = ctc_loss(&Logits { values: logits.clone() }, &labels, blank);
        if min_frames(&labels) > t_len {
            assert!(matches!(got, Err(AsrError::InfeasibleTarget { .. })));
            infeasible += 1;
            continue;
        }
        let (loss, _) = got.unwrap();
        let want = brute_force(&logits, &labels, blank);
        assert!((loss - want).abs() < 1e-9, "T={t_len} labels={labels:?}: {loss} vs {want}");
        checked += 1;
    }
    assert!(infeasible > 0);
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let t_len = rng.random_range(3..=12);
        let k = rng.random_range(3..=6);
        let blank = k - 1;
        let len = rng.random_range(1..=t_len.min(4));
        let labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..blank)).collect();
        if min_frames(&labels) > t_len {
            continue;
        }
        let values = random_logits(&mut rng, t_len, k, 2.0);
        let (_, grad) = ctc_loss(&Logits { values: values.clone() }, &labels, blank).unwrap();
        let h = 1e-5;
        for t in 0..t_len {
            for s in 0..k {
                let mut plus = values.clone();
                plus[[t, s]] += h;
                let mut minus = values.clone();
                minus[[t, s]] -= h;
                let lp = ctc_loss(&Logits { values: plus }, &labels, blank).unwrap().0;
                let lm = ctc_loss(&Logits { values: minus }, &labels, blank).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - grad[[t, s]]).abs() < 1e-6, "t={t} s={s}: {fd} vs {}", grad[[t, s]]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn loss_nonnegative_and_gradient_rows_sum_to_zero(seed in any::<u64>(), t_len in 2usize..20, len in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..4)).collect();
        prop_assume!(min_frames(&labels) <= t_len);
        let values = random_logits(&mut rng, t_len, 5, 4.0);
        let (loss, grad) = ctc_loss(&Logits { values: values.clone() }, &labels, 4).unwrap();
        prop_assert!(loss >= -1e-12 && loss.is_finite());
        for row in grad.rows() {
            prop_assert!(row.sum().abs() < 1e-9);
        }
        // shifting every logit of a frame leaves the loss unchanged
        let mut shifted = values.clone();
        shifted.row_mut(0).mapv_inplace(|v| v + 3.5);
        let (l2, _) = ctc_loss(&Logits { values: shifted }, &labels, 4).unwrap();
        prop_assert!((l2 - loss).abs() < 1e-9);
    }
}
