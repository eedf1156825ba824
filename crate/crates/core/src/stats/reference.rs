//! Published reference values for the German/English comparison, used to
//! check the decision logic. Entries printed as 0.0000 (rounded to four
//! decimals) are stored as 0.00005, i.e. somewhere below 0.0001.

use super::Metric;

/// p-value stand-in for a printed 0.0000.
pub const BELOW_1E4: f64 = 0.00005;
const Z: f64 = BELOW_1E4;

/// One stage of one test: p-values for experiments 1–4 over the stage's
/// four metrics, and the published ✓ pattern where one exists.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceTable {
    pub name: &'static str,
    pub metrics: [Metric; 4],
    pub p: [[f64; 4]; 4],
    pub statistic: [[f64; 4]; 4],
    pub marks: Option<[[bool; 4]; 4]>,
}

pub const WELCH_STAGE1: ReferenceTable = ReferenceTable {
    name: "welch stage 1",
    metrics: Metric::STAGE1,
    p: [
        [Z, 0.0054, 0.0003, 0.6661],
        [Z, 0.0004, Z, 0.0015],
        [Z, 0.0016, Z, 0.0016],
        [0.0021, 0.0007, 0.2575, 0.0015],
    ],
    statistic: [
        [5.1706, 2.8600, 3.7841, -0.4335],
        [4.2632, 3.6634, 4.6289, 3.3330],
        [10.2475, 3.2708, 9.3506, 3.2665],
        [3.2391, 3.5507, 1.1425, -3.2485],
    ],
    marks: Some([
        [true, true, true, false],
        [true, true, true, true],
        [true, true, true, true],
        [true, true, false, true],
    ]),
};

pub const WELCH_STAGE2: ReferenceTable = ReferenceTable {
    name: "welch stage 2",
    metrics: Metric::STAGE2,
    p: [
        [0.2754, 0.0096, 0.3231, 0.3251],
        [0.7905, 0.0599, 0.2891, 0.1638],
        [0.1768, 0.3848, Z, 0.0030],
        [0.6975, 0.0011, 0.1520, 0.0313],
    ],
    statistic: [
        [1.1047, -2.7139, -1.0003, 0.9964],
        [0.2664, -1.9176, -1.0676, 1.4205],
        [1.3747, -0.8754, -5.4154, 3.1559],
        [0.3895, -3.4211, 1.4614, -2.1906],
    ],
    marks: Some([
        [false, true, false, false],
        [false, false, false, false],
        [false, false, true, true],
        [false, true, false, false],
    ]),
};

pub const KRUSKAL_STAGE1: ReferenceTable = ReferenceTable {
    name: "kruskal stage 1",
    metrics: Metric::STAGE1,
    p: [
        [Z, 0.0032, 0.0020, 0.0574],
        [Z, 0.0002, Z, 0.0010],
        [Z, Z, Z, Z],
        [0.0100, 0.0004, 0.0510, 0.1137],
    ],
    statistic: [
        [27.6148, 8.7054, 9.5421, 3.6108],
        [18.1189, 14.1255, 17.9975, 10.8900],
        [53.7325, 20.2123, 40.9525, 15.4286],
        [6.6391, 12.5984, 3.8079, 2.5020],
    ],
    marks: None,
};

pub const KRUSKAL_STAGE2: ReferenceTable = ReferenceTable {
    name: "kruskal stage 2",
    metrics: Metric::STAGE2,
    p: [
        [0.0591, 0.2826, 0.0007, 0.0019],
        [0.8849, 0.5529, 0.0791, 0.0035],
        [0.9944, 0.5570, Z, Z],
        [0.0002, 0.1223, 0.1065, 0.0098],
    ],
    statistic: [
        [3.5628, 1.1544, 11.5447, 9.6624],
        [0.0210, 0.3522, 3.0825, 8.5219],
        [0.0000, 0.3450, 41.7583, 41.7578],
        [14.1490, 2.3871, 2.6048, 6.6734],
    ],
    marks: None,
};

pub const WELCH: [ReferenceTable; 2] = [WELCH_STAGE1, WELCH_STAGE2];
pub const KRUSKAL: [ReferenceTable; 2] = [KRUSKAL_STAGE1, KRUSKAL_STAGE2];
