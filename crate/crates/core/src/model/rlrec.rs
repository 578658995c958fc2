//! Recursive concentric ring placement (RLrec-style).
//!
//! An `n x n` grid is peeled into nested square layers. Layer `m` (the
//! `m x m` square centred in the grid) contributes `3m - 4` rectangular
//! rings, all with at least one side on the layer boundary:
//!
//! * `m - 1` clockwise rings anchored on the left edge, full height,
//!   growing to the right;
//! * `m - 1` counter-clockwise rings anchored on the right edge, full
//!   height, growing to the left;
//! * `m - 2` full-width rings anchored on the top edge, growing
//!   downwards, with alternating direction.
//!
//! The first two groups alone give every boundary switch of the layer a
//! shared ring with every switch inside the layer; the third shortens
//! row-wise paths. A stand-alone 2x2 grid needs a single ring.

use super::{Cycles, ModelError, NetworkTopology, SwitchId};

pub fn generate_rlrec(rows: u32, cols: u32, buffer_size: Cycles) -> Result<NetworkTopology, ModelError> {
    if rows != cols || rows < 2 {
        return Err(ModelError::BadGrid { rows, cols });
    }
    let n = rows;
    let mut rings = Vec::new();
    if n == 2 {
        rings.push(rectangle(n, (0, 1), (0, 1), true));
    } else {
        // innermost layer first
        let mut size = if n % 2 == 0 { 2 } else { 3 };
        while size <= n {
            let lo = (n - size) / 2;
            layer(n, lo, size, &mut rings);
            size += 2;
        }
    }
    NetworkTopology::new(rows, cols, rings, buffer_size)
}

fn layer(n: u32, lo: u32, size: u32, rings: &mut Vec<Vec<SwitchId>>) {
    let hi = lo + size - 1;
    for k in 1..size {
        rings.push(rectangle(n, (lo, hi), (lo, lo + k), true));
    }
    for k in 0..size - 1 {
        rings.push(rectangle(n, (lo, hi), (lo + k, hi), false));
    }
    for k in 1..size - 1 {
        rings.push(rectangle(n, (lo, lo + k), (lo, hi), k % 2 == 1));
    }
}

/// Perimeter of the rectangle spanning `rows` x `cols` (inclusive),
/// starting at its top-left switch.
fn rectangle(n: u32, rows: (u32, u32), cols: (u32, u32), clockwise: bool) -> Vec<SwitchId> {
    let (r0, r1) = rows;
    let (c0, c1) = cols;
    debug_assert!(r0 < r1 && c0 < c1);
    let at = |r: u32, c: u32| SwitchId(r * n + c);
    let mut sw = Vec::new();
    for c in c0..=c1 {
        sw.push(at(r0, c));
    }
    for r in r0 + 1..=r1 {
        sw.push(at(r, c1));
    }
    for c in (c0..c1).rev() {
        sw.push(at(r1, c));
    }
    for r in (r0 + 1..r1).rev() {
        sw.push(at(r, c0));
    }
    if !clockwise {
        sw[1..].reverse();
    }
    sw
}
