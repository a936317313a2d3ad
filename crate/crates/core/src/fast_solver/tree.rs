//! Perfect binary tree over contiguous index ranges.

use std::ops::Range;

use crate::error::{Error, Result};

/// Binary tree whose root (level 0) holds all `N` indices and whose
/// `2^L` leaves hold `leaf_size` consecutive indices each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexTree {
    pub n: usize,
    pub leaf_size: usize,
    pub leaf_level: usize,
}

/// Tree for `N = leaf_size · 2^L` with `L ≥ 1`.
pub fn build_tree(n: usize, leaf_size: usize) -> Result<IndexTree> {
    if leaf_size == 0 || !n.is_multiple_of(leaf_size) {
        return Err(Error::invalid(format!("N = {n} is not a multiple of the leaf size {leaf_size}")));
    }
    let cells = n / leaf_size;
    if !cells.is_power_of_two() {
        return Err(Error::invalid(format!("N / leaf size = {cells} is not a power of two")));
    }
    if cells < 2 {
        return Err(Error::invalid("the tree needs at least two leaf cells"));
    }
    Ok(IndexTree { n, leaf_size, leaf_level: cells.trailing_zeros() as usize })
}

impl IndexTree {
    pub fn cells_at(&self, level: usize) -> usize {
        1 << level
    }

    pub fn leaf_cells(&self) -> usize {
        self.cells_at(self.leaf_level)
    }

    /// Index range of `cell` (0-based) at `level`.
    pub fn range(&self, level: usize, cell: usize) -> Range<usize> {
        assert!(level <= self.leaf_level && cell < self.cells_at(level));
        let size = self.leaf_size << (self.leaf_level - level);
        cell * size..(cell + 1) * size
    }

    pub fn children(&self, level: usize, cell: usize) -> [usize; 2] {
        assert!(level < self.leaf_level);
        [2 * cell, 2 * cell + 1]
    }
}
