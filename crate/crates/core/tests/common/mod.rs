//! Independent oracles shared by the integration tests and the acceptance
//! run: a brute-force CTC enumerator, high-precision reference values for the
//! special functions and tests, and finite-difference helpers.
#![allow(dead_code, clippy::excessive_precision, clippy::approx_constant)]

use advbench_core::asr::log_softmax;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// mpmath at 50 digits
pub const LN_GAMMA: &[(f64, f64)] = &[
    (0.1, 2.2527126517342059599),
    (0.5, 0.57236494292470008707),
    (1.0, 0.0),
    (1.5, -0.12078223763524522235),
    (2.5, 0.28468287047291915963),
    (7.3, 7.1478925230222490328),
    (20.0, 39.339884187199494036),
    (100.5, 361.43554046777762156),
    (1000.0, 5905.2204232091812118),
    (3.7e-3, 5.5972980007001485818),
];

pub const INC_BETA: &[(f64, f64, f64, f64)] = &[
    (0.5, 0.5, 0.3, 0.36901011956554537504),
    (2.0, 3.0, 0.4, 0.52480000000000003837),
    (1.0, 1.0, 0.77, 0.77000000000000001776),
    (5.0, 0.5, 0.9, 0.31664291502001231250),
    (0.5, 5.0, 0.05, 0.51520878690160298495),
    (10.0, 10.0, 0.5, 0.5),
    (10.0, 10.0, 0.3, 0.032553356881300947854),
    (30.0, 2.0, 0.95, 0.53659690985734345079),
    (2.5, 0.5, 0.999, 0.94634234530818643119),
    (100.0, 50.0, 0.66, 0.42402712199931612748),
    (4.0, 0.5, 0.2, 0.00047761405759400581371),
];

pub const GAMMA_P: &[(f64, f64, f64)] = &[
    (0.5, 0.1, 0.34527915398142297956),
    (0.5, 2.0, 0.95449973610364158560),
    (1.0, 1.0, 0.63212055882855767840),
    (3.0, 2.5, 0.45618688411667048200),
    (3.0, 10.0, 0.99723060428448842406),
    (10.0, 3.0, 0.0011024881301154797421),
    (10.0, 15.0, 0.93014633930059023231),
    (50.0, 45.0, 0.24680203440017027271),
    (2.5, 0.01, 0.0000029876015319065938441),
    (0.5, 30.0, 0.99999999999999051426),
];

pub const T_SF: &[(f64, f64, f64)] = &[
    (0.0, 3.0, 0.5),
    (1.0, 8.0, 0.17329675354366712391),
    (-1.0, 8.0, 0.82670324645633287609),
    (2.5, 4.3, 0.031224037318105693056),
    (0.3, 30.0, 0.38312305264217640883),
    (5.0, 2.0, 0.018874775675311862909),
    (-2.0, 17.5, 0.96936661733040563499),
    (10.0, 60.0, 0.000000000000010688429573370408179),
    (1.96, 1000.0, 0.025136592477874359217),
    (3.0, 1.0, 0.10241638234956672582),
];

pub const CHI2_SF: &[(f64, u32, f64)] = &[
    (0.0, 1, 1.0),
    (3.8415, 1, 0.049998772071222272398),
    (1.0, 1, 0.31731050786291410283),
    (6.635, 1, 0.0099994195740425249697),
    (10.0, 1, 0.0015654022580025496775),
    (0.01, 1, 0.92034432544594203624),
    (2.0, 3, 0.57240670447087983400),
    (25.0, 1, 0.00000057330314375838782335),
    (5.0, 4, 0.28729749518364578309),
];

/// (a, b, t, df, welch p, H, kruskal p) from a direct high-precision
/// implementation with brute-force midranks.
pub type TestVector = (&'static [f64], &'static [f64], f64, f64, f64, f64, f64);
pub const TEST_VECTORS: &[TestVector] = &[
    (&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0], -1.0, 8.0, 0.34659350708733425, 0.90559006211180124, 0.34128721897815254),
    (&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], -3.6742346141747671, 4.0, 0.021311641128756726, 3.8571428571428571, 0.049534613435626741),
    (&[10.5, 12.1, 9.8, 11.0, 13.2, 10.9], &[8.1, 9.0, 7.7, 10.2], 3.3608303621116576, 7.0215314052745567, 0.012015656160728568, 5.5, 0.019016473672300544),
    (&[120.0, 150.0, 98.0, 300.0, 212.0, 175.0, 160.0], &[90.0, 88.0, 133.0, 101.0, 95.0, 120.0, 99.0, 110.0], 2.6723959755720980, 6.5714011425235212, 0.033830457953821738, 6.2019230769230769, 0.012761158757405884),
    (&[-38.8, -40.9, -41.9, -41.4, -40.1], &[-50.6, -51.9, -48.9, -47.0, -39.3], 3.0299628457500537, 4.4785419685973052, 0.033504002717872426, 3.1527272727272727, 0.075800174582361255),
    (&[1.0, 1.0, 2.0, 2.0, 3.0, 3.0], &[2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 4.0], -2.2903933372554729, 10.716594310339310, 0.043337164591152649, 3.7033291192583228, 0.054304016699511976),
    (&[5.0, 5.0, 5.0, 5.0], &[1.0, 2.0, 3.0, 4.0], 3.8729833462074169, 3.0, 0.030466291662170991, 6.0540540540540541, 0.013874405883025440),
    (&[0.01, 0.02, 0.015, 0.03], &[0.5, 0.45, 0.52, 0.61, 0.49], -18.402909003876673, 4.2054912091329637, 0.000035257065146740603, 6.0, 0.014305878435429640),
    (&[83.0, 62.0, 94.0, 37.0, 101.0, 72.0, 35.0, 32.0], &[23.0, 11.0, 15.0, 26.0, 83.0, 62.0], 1.8154839972758141, 10.568695432060676, 0.097893549341103336, 3.7665562913907285, 0.052287178738341578),
    (&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0, 5.0], &[2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0, 2.0, 8.0], -0.55355587306512171, 16.191455489199292, 0.58744623604247201, 0.10274841437632135, 0.74855603038727989),
    (&[1000.0, 2000.0], &[1500.0, 1500.5, 1499.0], 0.00033333320370377932, 1.0000015555558580, 0.99978779343583740, 0.0, 1.0),
    (&[7.0, 7.0, 8.0], &[7.0, 8.0, 8.0], -0.70710678118654752, 4.0, 0.51851851851851852, 0.55555555555555556, 0.45605654025025601),
];

/// Collapse repeats, then drop blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// −ln Σ over every length-T path that collapses to `labels`.
pub fn brute_force(logits: &Array2<f64>, labels: &[usize], blank: usize) -> f64 {
    let (t_len, k) = logits.dim();
    let logp = log_softmax(logits.view());
    let mut total = 0.0;
    let mut path = vec![0usize; t_len];
    for code in 0..k.pow(t_len as u32) {
        let mut c = code;
        for p in path.iter_mut() {
            *p = c % k;
            c /= k;
        }
        if collapse(&path, blank) == labels {
            let lp: f64 = path.iter().enumerate().map(|(t, &s)| logp[[t, s]]).sum();
            total += lp.exp();
        }
    }
    -total.ln()
}

pub fn random_logits(rng: &mut ChaCha8Rng, t_len: usize, k: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((t_len, k), |_| rng.random_range(-scale..scale))
}

/// max |fd − g| over the probed indices, relative to max |g| over all.
pub fn rel_max_err(g: &[f64], probes: &[usize], mut f: impl FnMut(usize, f64) -> f64, h: f64) -> f64 {
    let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(gmax > 0.0, "gradient is identically zero");
    probes
        .iter()
        .map(|&i| {
            let fd = (f(i, h) - f(i, -h)) / (2.0 * h);
            (fd - g[i]).abs()
        })
        .fold(0.0, f64::max)
        / gmax
}

/// Random indices plus the largest-magnitude entries of `g`.
pub fn probes(g: &[f64], rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
    let mut out: Vec<usize> = idx[..n / 2].to_vec();
    out.extend((0..n - n / 2).map(|_| rng.random_range(0..g.len())));
    out
}

pub fn voiced_clip(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let f0 = rng.random_range(150.0..2500.0);
    let a = rng.random_range(1000.0..8000.0);
    (0..n)
        .map(|i| a * (i as f64 * f0 * std::f64::consts::TAU / 16000.0).sin() + rng.random_range(-300.0..300.0))
        .collect()
}
