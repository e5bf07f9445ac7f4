//! Processor grids, block-matrix descriptors, and ownership formulas.
//!
//! A grid numbers its processors row-major: the processor at grid cell
//! `(i, j)` has the linear id `cols * i + j`. Block `(x, y)` of an
//! `N x N` block matrix belongs to processor `cols * (x % rows) + y % cols`
//! of whichever grid currently holds the data. Source id `k` and
//! destination id `k` denote the same physical node.

use std::fmt;
use std::str::FromStr;

/// Linear processor id within a grid.
pub type Pid = usize;

/// Greatest common divisor.
pub fn gcd(a: usize, b: usize) -> usize {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Least common multiple. Both arguments must be positive.
pub fn lcm(a: usize, b: usize) -> usize {
    assert!(a >= 1 && b >= 1, "lcm arguments must be positive");
    a / gcd(a, b) * b
}

/// A rectangular processor grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    /// Number of processors in the grid.
    pub const fn size(&self) -> usize {
        self.rows * self.cols
    }

    /// Linear id of the processor at grid cell `(i, j)`.
    pub const fn pid(&self, i: usize, j: usize) -> Pid {
        self.cols * i + j
    }

    /// Grid cell of a linear processor id.
    pub const fn cell(&self, pid: Pid) -> (usize, usize) {
        (pid / self.cols, pid % self.cols)
    }

    pub const fn is_one_dimensional(&self) -> bool {
        self.rows == 1 || self.cols == 1
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Error produced when a grid string does not parse as `RxC`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseGridError {
    input: String,
}

impl fmt::Display for ParseGridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "invalid grid {:?}: expected ROWSxCOLS with positive integers, e.g. 2x4",
            self.input
        )
    }
}

impl std::error::Error for ParseGridError {}

impl FromStr for GridShape {
    type Err = ParseGridError;

    /// Parses `"RxC"`; the separator is case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseGridError {
            input: s.to_string(),
        };
        let (rows, cols) = s.split_once(['x', 'X']).ok_or_else(err)?;
        let rows: usize = rows.trim().parse().map_err(|_| err())?;
        let cols: usize = cols.trim().parse().map_err(|_| err())?;
        if rows == 0 || cols == 0 {
            return Err(err());
        }
        Ok(GridShape { rows, cols })
    }
}

/// Geometry of the block matrix: `n x n` elements cut into `NB x NB`
/// element blocks, giving an `N x N` block grid with `N = n / NB`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockDesc {
    /// Matrix side length in elements.
    pub n: usize,
    /// Block side length in elements.
    pub nb: usize,
    /// Block-grid side length, `n / nb`.
    pub nblocks: usize,
}

impl BlockDesc {
    /// Builds the descriptor from the element side length.
    pub fn from_elements(n: usize, nb: usize) -> Result<Self, TopologyError> {
        if n == 0 || nb == 0 {
            return Err(TopologyError::ZeroSize {
                what: if nb == 0 { "block size" } else { "matrix side" },
            });
        }
        if !n.is_multiple_of(nb) {
            return Err(TopologyError::BlockMismatch { n, nb });
        }
        Ok(Self {
            n,
            nb,
            nblocks: n / nb,
        })
    }

    /// Builds the descriptor from the block-grid side length.
    pub fn from_blocks(nblocks: usize, nb: usize) -> Result<Self, TopologyError> {
        if nblocks == 0 || nb == 0 {
            return Err(TopologyError::ZeroSize {
                what: if nb == 0 { "block size" } else { "block count" },
            });
        }
        Ok(Self {
            n: nblocks * nb,
            nb,
            nblocks,
        })
    }

    /// Total number of blocks in the matrix.
    pub const fn total_blocks(&self) -> usize {
        self.nblocks * self.nblocks
    }

    /// Global block id for diagnostics, `x * N + y`. Ownership logic works
    /// on coordinates only.
    pub const fn block_id(&self, x: usize, y: usize) -> usize {
        x * self.nblocks + y
    }
}

/// A redistribution problem: move the block matrix from the block-cyclic
/// distribution over `src` to the block-cyclic distribution over `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RedistProblem {
    pub src: GridShape,
    pub dst: GridShape,
    pub blocks: BlockDesc,
}

impl RedistProblem {
    /// Builds and validates a problem.
    pub fn new(src: GridShape, dst: GridShape, blocks: BlockDesc) -> Result<Self, TopologyError> {
        let problem = Self { src, dst, blocks };
        problem.validate()?;
        Ok(problem)
    }

    /// Checks the divisibility invariants.
    ///
    /// The block-grid side must be divisible by `lcm(src.rows, dst.rows)`
    /// and by `lcm(src.cols, dst.cols)` so that the matrix tiles evenly
    /// into superblocks and every processor holds a whole number of blocks.
    pub fn validate(&self) -> Result<(), TopologyError> {
        for (grid, role) in [(self.src, "source"), (self.dst, "destination")] {
            if grid.rows == 0 || grid.cols == 0 {
                return Err(TopologyError::ZeroGrid { role });
            }
        }
        let n = self.blocks.nblocks;
        let row_div = lcm(self.src.rows, self.dst.rows);
        if !n.is_multiple_of(row_div) {
            return Err(TopologyError::Divisibility {
                axis: Axis::Rows,
                n,
                divisor: row_div,
            });
        }
        let col_div = lcm(self.src.cols, self.dst.cols);
        if !n.is_multiple_of(col_div) {
            return Err(TopologyError::Divisibility {
                axis: Axis::Cols,
                n,
                divisor: col_div,
            });
        }
        Ok(())
    }
}

/// Owner of block `(x, y)` under the block-cyclic distribution over `p`
/// before redistribution.
pub fn source_owner(x: usize, y: usize, p: GridShape) -> Pid {
    p.cols * (x % p.rows) + y % p.cols
}

/// Owner of block `(x, y)` under the block-cyclic distribution over `q`
/// after redistribution.
pub fn dest_owner(x: usize, y: usize, q: GridShape) -> Pid {
    q.cols * (x % q.rows) + y % q.cols
}

/// Grid axis named in validation errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Rows => "rows",
            Axis::Cols => "cols",
        })
    }
}

/// Rejection reasons for malformed grids and indivisible block matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologyError {
    /// A grid has a zero dimension.
    ZeroGrid { role: &'static str },
    /// A size parameter that must be positive is zero.
    ZeroSize { what: &'static str },
    /// The matrix side is not a multiple of the block side.
    BlockMismatch { n: usize, nb: usize },
    /// The block-grid side is not divisible by the required lcm.
    Divisibility {
        axis: Axis,
        n: usize,
        divisor: usize,
    },
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyError::ZeroGrid { role } => {
                write!(f, "{role} grid has a zero dimension")
            }
            TopologyError::ZeroSize { what } => write!(f, "{what} must be positive"),
            TopologyError::BlockMismatch { n, nb } => {
                write!(f, "matrix side {n} is not a multiple of block size {nb}")
            }
            TopologyError::Divisibility { axis, n, divisor } => write!(
                f,
                "block-grid side {n} is not divisible by {divisor}, \
                 the lcm of the source and destination grid {axis}"
            ),
        }
    }
}

impl std::error::Error for TopologyError {}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(s: &str) -> GridShape {
        s.parse().unwrap()
    }

    #[test]
    fn lcm_basics() {
        assert_eq!(lcm(2, 3), 6);
        assert_eq!(lcm(4, 4), 4);
        assert_eq!(lcm(2, 4), 4);
        assert_eq!(lcm(1, 7), 7);
    }

    #[test]
    fn source_owner_formula() {
        let p = grid("2x2");
        // Blocks in column 0/2 of even rows stay with processor 0.
        assert_eq!(source_owner(4, 0, p), 0);
        assert_eq!(source_owner(4, 2, p), 0);
        assert_eq!(source_owner(0, 0, grid("3x4")), 0);
        assert_eq!(source_owner(5, 3, p), 3);
    }

    #[test]
    fn dest_owner_formula() {
        let q = grid("3x4");
        assert_eq!(dest_owner(4, 0, q), 4); // grid cell (1, 0)
        assert_eq!(dest_owner(2, 2, q), 10); // grid cell (2, 2)
        assert_eq!(dest_owner(0, 0, q), 0);
    }

    /// The repeating mapping pattern of a 2x2 -> 3x4 redistribution: the six
    /// blocks processor 0 owns inside one superblock, and their shifted
    /// copies one superblock to the right, target the same destinations.
    #[test]
    fn mapping_pattern_repeats_across_superblocks() {
        let p = grid("2x2");
        let q = grid("3x4");
        let pattern = [(0, 0), (0, 2), (2, 0), (2, 2), (4, 0), (4, 2)];
        let dests = [0, 2, 8, 10, 4, 6];
        for (&(x, y), &d) in pattern.iter().zip(&dests) {
            assert_eq!(source_owner(x, y, p), 0);
            assert_eq!(dest_owner(x, y, q), d);
            // Same relative position in the superblock one tile to the right.
            assert_eq!(source_owner(x, y + 4, p), 0);
            assert_eq!(dest_owner(x, y + 4, q), d);
        }
    }

    #[test]
    fn validate_accepts_divisible_problems() {
        let blocks = BlockDesc::from_blocks(12, 1).unwrap();
        assert!(RedistProblem::new(grid("2x2"), grid("3x4"), blocks).is_ok());
        let one = BlockDesc::from_blocks(1, 1).unwrap();
        assert!(RedistProblem::new(grid("1x1"), grid("1x1"), one).is_ok());
    }

    #[test]
    fn validate_rejects_indivisible_rows() {
        let blocks = BlockDesc::from_blocks(8, 1).unwrap();
        let err = RedistProblem::new(grid("2x2"), grid("3x4"), blocks).unwrap_err();
        assert_eq!(
            err,
            TopologyError::Divisibility {
                axis: Axis::Rows,
                n: 8,
                divisor: 6
            }
        );
        assert!(err.to_string().contains('6'));
    }

    #[test]
    fn validate_rejects_zero_grid() {
        let blocks = BlockDesc::from_blocks(4, 1).unwrap();
        let problem = RedistProblem {
            src: GridShape::new(0, 2),
            dst: grid("2x2"),
            blocks,
        };
        assert_eq!(
            problem.validate(),
            Err(TopologyError::ZeroGrid { role: "source" })
        );
    }

    #[test]
    fn block_desc_requires_whole_blocks() {
        assert!(BlockDesc::from_elements(12, 4).is_ok());
        assert_eq!(
            BlockDesc::from_elements(10, 4),
            Err(TopologyError::BlockMismatch { n: 10, nb: 4 })
        );
        assert!(BlockDesc::from_elements(0, 1).is_err());
        assert!(BlockDesc::from_blocks(4, 0).is_err());
    }

    #[test]
    fn block_ids_are_row_major() {
        let desc = BlockDesc::from_blocks(12, 1).unwrap();
        assert_eq!(desc.block_id(0, 0), 0);
        assert_eq!(desc.block_id(4, 2), 50);
        assert_eq!(desc.block_id(11, 11), desc.total_blocks() - 1);
    }

    #[test]
    fn pid_numbering_round_trips() {
        for rows in 1..=6 {
            for cols in 1..=6 {
                let g = GridShape::new(rows, cols);
                let mut seen = vec![false; g.size()];
                for i in 0..rows {
                    for j in 0..cols {
                        let pid = g.pid(i, j);
                        assert!(pid < g.size());
                        assert!(!seen[pid], "pid {pid} assigned twice");
                        seen[pid] = true;
                        assert_eq!(g.cell(pid), (i, j));
                    }
                }
            }
        }
    }

    /// For every grid dividing N, the ownership formula splits the block
    /// grid into equally sized parts, one per processor.
    #[test]
    fn ownership_partitions_evenly() {
        for rows in 1..=4 {
            for cols in 1..=4 {
                let g = GridShape::new(rows, cols);
                let n = lcm(rows, cols) * 2;
                let mut counts = vec![0usize; g.size()];
                for x in 0..n {
                    for y in 0..n {
                        counts[source_owner(x, y, g)] += 1;
                    }
                }
                let expected = n * n / g.size();
                assert!(counts.iter().all(|&c| c == expected), "{g}: {counts:?}");
            }
        }
    }

    #[test]
    fn grid_strings_parse_and_display() {
        assert_eq!(grid("2x4"), GridShape::new(2, 4));
        assert_eq!(grid("2X4"), GridShape::new(2, 4));
        assert_eq!(grid("2x4").to_string(), "2x4");
        assert!("".parse::<GridShape>().is_err());
        assert!("2x".parse::<GridShape>().is_err());
        assert!("0x4".parse::<GridShape>().is_err());
        assert!("2y4".parse::<GridShape>().is_err());
        assert!("-2x4".parse::<GridShape>().is_err());
    }
}
