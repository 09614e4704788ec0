//! The corn study data: larval counts on 24 plots over nine weeks under
//! three treatments, plus the fixed 20%-loss pattern used in the worked
//! imputation example. Embedded so the benchmark commands need no external
//! files.

use crate::io::{read_panel_wide, WidePanel};

/// Canonical wide-format CSV of the full corn data.
pub const CORN_WIDE_CSV: &str = "\
We1,We2,We3,We4,We5,We6,We7,We8,We9,Treat
0,0,0,0,0,0,0,0,0,1
0,0,0,0,0,0,0,0,0,1
0,0,0,0,0,0,0,0,0,1
0,0,0,0,0,0,0,0,1,1
0,0,0,0,0,0,0,0,1,1
0,0,0,0,0,0,0,0,1,1
0,0,0,0,0,1,0,1,2,1
0,0,0,0,0,1,0,1,3,1
0,0,0,0,0,0,0,0,0,2
0,0,0,0,0,0,0,0,0,2
0,0,0,0,0,0,0,0,0,2
0,0,0,0,0,0,0,1,0,2
0,0,0,1,1,1,0,1,0,2
0,0,0,0,1,2,1,1,0,2
0,0,0,0,1,2,1,2,1,2
0,0,0,0,2,4,1,2,3,2
0,0,0,0,1,4,3,2,2,3
0,0,0,0,1,5,4,2,3,3
0,0,0,0,0,5,4,2,3,3
0,0,0,0,0,5,5,2,4,3
0,0,0,0,0,4,5,3,4,3
0,0,0,0,0,8,6,3,6,3
0,0,0,0,0,8,7,4,4,3
0,0,0,0,0,9,7,4,4,3
";

/// Cells blanked in the worked 20%-loss example, as 0-based
/// (unit, week) pairs.
pub const FIXED_LOSS_CELLS: &[(usize, usize)] = &[
    (0, 4),
    (0, 6),
    (1, 2),
    (1, 7),
    (2, 1),
    (3, 0),
    (3, 2),
    (3, 3),
    (3, 5),
    (4, 0),
    (4, 1),
    (4, 4),
    (5, 0),
    (5, 4),
    (5, 7),
    (6, 6),
    (7, 5),
    (8, 2),
    (13, 5),
    (14, 0),
    (14, 2),
    (14, 6),
    (14, 7),
    (15, 6),
    (16, 3),
    (16, 7),
    (17, 7),
    (19, 3),
    (20, 6),
    (22, 0),
    (22, 2),
    (22, 5),
    (23, 0),
    (23, 1),
    (23, 6),
    (23, 7),
];

/// The full corn data.
pub fn corn_panel() -> WidePanel {
    read_panel_wide(CORN_WIDE_CSV).expect("embedded corn data parses")
}

/// The corn data with the fixed 20%-loss pattern blanked.
pub fn corn_fixed_loss_panel() -> WidePanel {
    let mut wide = corn_panel();
    for &(unit, week) in FIXED_LOSS_CELLS {
        wide.responses[unit][week] = None;
    }
    wide
}

/// Ground-truth response grid of the full corn data.
pub fn corn_truth() -> Vec<Vec<u32>> {
    corn_panel()
        .responses
        .iter()
        .map(|row| row.iter().map(|v| v.expect("full data")).collect())
        .collect()
}
