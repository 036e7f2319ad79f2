//! Blocked, order-deterministic sums over the strict lower triangle of the
//! pairwise-difference matrix.
//!
//! The triangle is cut into fixed square tiles that depend only on `n`.
//! Tiles may run on any number of threads; their partial sums are combined
//! by a fixed pairwise-summation tree, so results are bit-identical for any
//! thread count.

use rayon::prelude::*;

use crate::fastexp::exp_nonpositive;

const TILE: usize = 1024;
const LANES: usize = 32;
// Below this many tiles the rayon dispatch costs more than it saves.
const PARALLEL_MIN_TILES: usize = 3;

/// Sums of `e` and `e^2` over all pairs `i > j`, where
/// `e = exp(-scale * (x_i - x_j)^2)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaussPairSums {
    pub first: f64,
    pub second: f64,
}

impl std::ops::Add for GaussPairSums {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        GaussPairSums {
            first: self.first + rhs.first,
            second: self.second + rhs.second,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    rows: (usize, usize),
    cols: (usize, usize),
    diagonal: bool,
}

fn blocks(n: usize) -> Vec<Block> {
    let tiles = n.div_ceil(TILE);
    let mut out = Vec::with_capacity(tiles * (tiles + 1) / 2);
    for bi in 0..tiles {
        let rows = (bi * TILE, ((bi + 1) * TILE).min(n));
        for bj in 0..=bi {
            let cols = (bj * TILE, ((bj + 1) * TILE).min(n));
            out.push(Block {
                rows,
                cols,
                diagonal: bi == bj,
            });
        }
    }
    out
}

/// Pairwise (cascade) summation in a fixed tree shape.
pub(crate) fn tree_sum<T: Copy + std::ops::Add<Output = T> + Default>(items: &[T]) -> T {
    match items.len() {
        0 => T::default(),
        1 => items[0],
        len => {
            let mid = len / 2;
            tree_sum(&items[..mid]) + tree_sum(&items[mid..])
        }
    }
}

fn map_blocks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Block) -> T + Sync,
{
    let blocks = blocks(n);
    if n.div_ceil(TILE) >= PARALLEL_MIN_TILES {
        blocks.par_iter().map(&f).collect()
    } else {
        blocks.iter().map(&f).collect()
    }
}

#[inline(always)]
fn gauss_row(xi: f64, cols: &[f64], scale: f64, acc1: &mut [f64; LANES], acc2: &mut [f64; LANES]) {
    let mut chunks = cols.chunks_exact(LANES);
    for chunk in &mut chunks {
        for l in 0..LANES {
            let d = xi - chunk[l];
            let e = exp_nonpositive(-scale * (d * d));
            acc1[l] += e;
            acc2[l] += e * e;
        }
    }
    for (l, &xj) in chunks.remainder().iter().enumerate() {
        let d = xi - xj;
        let e = exp_nonpositive(-scale * (d * d));
        acc1[l] += e;
        acc2[l] += e * e;
    }
}

fn gauss_block(x: &[f64], block: &Block, scale: f64) -> GaussPairSums {
    let mut acc1 = [0.0; LANES];
    let mut acc2 = [0.0; LANES];
    for i in block.rows.0..block.rows.1 {
        let end = if block.diagonal { i } else { block.cols.1 };
        gauss_row(x[i], &x[block.cols.0..end], scale, &mut acc1, &mut acc2);
    }
    GaussPairSums {
        first: tree_sum(&acc1),
        second: tree_sum(&acc2),
    }
}

/// Gaussian pair sums used by the CV criterion; see [`GaussPairSums`].
pub fn gauss_pair_sums(x: &[f64], scale: f64) -> GaussPairSums {
    let partials = map_blocks(x.len(), |b| gauss_block(x, b, scale));
    tree_sum(&partials)
}

/// Like [`gauss_pair_sums`] for ascending `x`, but skips whole tiles whose
/// smallest gap exceeds `radius`. Pairs inside a visited tile are always
/// summed exactly, so only pairs farther apart than `radius` can be lost.
pub fn gauss_pair_sums_within(x: &[f64], scale: f64, radius: f64) -> GaussPairSums {
    debug_assert!(x.windows(2).all(|w| w[0] <= w[1]), "input must be sorted");
    let partials = map_blocks(x.len(), |b| {
        if !b.diagonal && x[b.rows.0] - x[b.cols.1 - 1] > radius {
            GaussPairSums::default()
        } else {
            gauss_block(x, b, scale)
        }
    });
    tree_sum(&partials)
}

/// `Σ_{i>j} g(x_i - x_j)` for an arbitrary even function `g`, with the same
/// blocking and reduction order as [`gauss_pair_sums`].
pub fn pair_sum<G>(x: &[f64], g: G) -> f64
where
    G: Fn(f64) -> f64 + Sync,
{
    let partials = map_blocks(x.len(), |block| {
        let mut acc = [0.0; LANES];
        for i in block.rows.0..block.rows.1 {
            let end = if block.diagonal { i } else { block.cols.1 };
            for (k, &xj) in x[block.cols.0..end].iter().enumerate() {
                acc[k % LANES] += g(x[i] - xj);
            }
        }
        tree_sum(&acc)
    });
    tree_sum(&partials)
}
