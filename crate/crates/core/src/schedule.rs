//! Superblock geometry, owner tables, contention-minimizing shifts, and
//! the stepped communication schedule.
//!
//! # Superblock index algebra
//!
//! With `R = lcm(src.rows, dst.rows)` and `C = lcm(src.cols, dst.cols)`,
//! the source-to-destination mapping of block `(x, y)` depends only on
//! `(x % R, y % C)`, so the `N x N` block grid tiles into `N/R * N/C`
//! superblocks that all map identically. Superblocks are numbered row-major
//! over the superblock grid, and cell `(i, j)` of superblock `(sr, sc)`
//! holds the global block `(sr * R + i, sc * C + j)`. Under that
//! arrangement the owner tables computed from the table indices agree with
//! the stored blocks:
//!
//! * `initial(i, j) = source_owner(i, j, src)` owns every block stored at
//!   cell `(i, j)` of any superblock before redistribution, and
//! * `final(i, j) = dest_owner(i, j, dst)` owns it afterwards,
//!
//! because `R` is a multiple of both grids' rows and `C` of both grids'
//! columns. Circular shifts permute the mapping table, the initial-owner
//! table, and every superblock table through the same cell permutation, so
//! the co-indexing above survives shifting; only the order in which the
//! schedule visits (source, destination) pairs changes, never the
//! destination any block is sent to.

use crate::topology::{lcm, source_owner, GridShape, Pid, RedistProblem, TopologyError};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Superblock tile geometry for a validated problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuperblockDims {
    /// Block rows per superblock, `lcm(src.rows, dst.rows)`.
    pub rows: usize,
    /// Block columns per superblock, `lcm(src.cols, dst.cols)`.
    pub cols: usize,
    /// Superblock-grid rows, `N / rows`.
    pub grid_rows: usize,
    /// Superblock-grid columns, `N / cols`.
    pub grid_cols: usize,
    /// Total superblocks, `grid_rows * grid_cols`.
    pub count: usize,
}

/// Computes the superblock tile dimensions of a validated problem.
pub fn compute_superblock(problem: &RedistProblem) -> SuperblockDims {
    let rows = lcm(problem.src.rows, problem.dst.rows);
    let cols = lcm(problem.src.cols, problem.dst.cols);
    let n = problem.blocks.nblocks;
    let grid_rows = n / rows;
    let grid_cols = n / cols;
    SuperblockDims {
        rows,
        cols,
        grid_rows,
        grid_cols,
        count: grid_rows * grid_cols,
    }
}

/// One coordinate table per superblock, each `rows x cols`, covering every
/// block of the matrix exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutArray {
    rows: usize,
    cols: usize,
    tables: Vec<Vec<(usize, usize)>>,
}

impl LayoutArray {
    /// Number of superblock tables.
    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Global block coordinate stored at cell `(i, j)` of table `s`.
    pub fn get(&self, s: usize, i: usize, j: usize) -> (usize, usize) {
        self.tables[s][i * self.cols + j]
    }
}

/// Builds the superblock tables in row-major superblock order.
pub fn build_layout(dims: &SuperblockDims) -> LayoutArray {
    let mut tables = Vec::with_capacity(dims.count);
    for sr in 0..dims.grid_rows {
        for sc in 0..dims.grid_cols {
            let mut cells = Vec::with_capacity(dims.rows * dims.cols);
            for i in 0..dims.rows {
                for j in 0..dims.cols {
                    cells.push((sr * dims.rows + i, sc * dims.cols + j));
                }
            }
            tables.push(cells);
        }
    }
    LayoutArray {
        rows: dims.rows,
        cols: dims.cols,
        tables,
    }
}

/// What an owner table describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableRole {
    /// Owners before redistribution.
    Initial,
    /// Owners after redistribution.
    Final,
    /// Working copy of the final owners that shifts are applied to.
    Mapping,
}

/// A `rows x cols` table of processor ids over one superblock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnerTable {
    pub role: TableRole,
    rows: usize,
    cols: usize,
    cells: Vec<Pid>,
}

impl OwnerTable {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Pid {
        self.cells[i * self.cols + j]
    }

    /// Clones the table as the working mapping copy.
    pub fn to_mapping(&self) -> OwnerTable {
        OwnerTable {
            role: TableRole::Mapping,
            ..self.clone()
        }
    }

    fn tiled(dims: &SuperblockDims, grid: GridShape, role: TableRole) -> OwnerTable {
        let mut cells = Vec::with_capacity(dims.rows * dims.cols);
        for i in 0..dims.rows {
            for j in 0..dims.cols {
                cells.push(source_owner(i, j, grid));
            }
        }
        OwnerTable {
            role,
            rows: dims.rows,
            cols: dims.cols,
            cells,
        }
    }
}

/// Owners of each superblock cell before redistribution.
pub fn build_initial_owners(dims: &SuperblockDims, src: GridShape) -> OwnerTable {
    OwnerTable::tiled(dims, src, TableRole::Initial)
}

/// Owners of each superblock cell after redistribution.
pub fn build_final_owners(dims: &SuperblockDims, dst: GridShape) -> OwnerTable {
    OwnerTable::tiled(dims, dst, TableRole::Final)
}

/// The send-side schedule: `steps` rows, one column per source processor.
/// Entry `(step, src)` names the destination that `src` sends to in that
/// step; the companion coordinate records which superblock cell the entry
/// carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferTable {
    steps: usize,
    sources: usize,
    dests: Vec<Pid>,
    coords: Vec<(usize, usize)>,
}

impl TransferTable {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn dest(&self, step: usize, src: Pid) -> Pid {
        self.dests[step * self.sources + src]
    }

    pub fn coord(&self, step: usize, src: Pid) -> (usize, usize) {
        self.coords[step * self.sources + src]
    }

    /// Destinations of one communication step, indexed by source pid.
    pub fn row(&self, step: usize) -> &[Pid] {
        &self.dests[step * self.sources..(step + 1) * self.sources]
    }

    /// Destination column of one source pid, in step order.
    pub fn column(&self, src: Pid) -> Vec<Pid> {
        (0..self.steps).map(|s| self.dest(s, src)).collect()
    }

    #[cfg(test)]
    pub(crate) fn from_parts(
        steps: usize,
        sources: usize,
        dests: Vec<Pid>,
        coords: Vec<(usize, usize)>,
    ) -> TransferTable {
        assert_eq!(dests.len(), steps * sources);
        assert_eq!(coords.len(), steps * sources);
        TransferTable {
            steps,
            sources,
            dests,
            coords,
        }
    }
}

/// Fills the schedule by walking the mapping table row-major and appending
/// each destination to its owner's column at the next free row.
pub fn build_transfer(
    initial: &OwnerTable,
    mapping: &OwnerTable,
    src: GridShape,
) -> Result<TransferTable, ScheduleError> {
    assert_eq!(
        (initial.rows, initial.cols),
        (mapping.rows, mapping.cols),
        "owner tables must share dimensions"
    );
    let sources = src.size();
    let cells = initial.rows * initial.cols;
    let steps = cells / sources;
    let mut dests = vec![0; cells];
    let mut coords = vec![(0, 0); cells];
    let mut next_row = vec![0usize; sources];
    for i in 0..initial.rows {
        for j in 0..initial.cols {
            let owner = initial.get(i, j);
            if owner >= sources {
                return Err(ScheduleError::ForeignPid {
                    pid: owner,
                    grid: sources,
                });
            }
            let row = next_row[owner];
            if row >= steps {
                return Err(ScheduleError::ColumnOverflow { pid: owner, steps });
            }
            dests[row * sources + owner] = mapping.get(i, j);
            coords[row * sources + owner] = (i, j);
            next_row[owner] += 1;
        }
    }
    // cells = steps * sources and no column overflowed, so all are full.
    Ok(TransferTable {
        steps,
        sources,
        dests,
        coords,
    })
}

/// The receive-side schedule: per step, which source each destination hears
/// from. Destinations idle in a step hold `None` (serialized as -1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecvTable {
    steps: usize,
    dests: usize,
    cells: Vec<Option<Pid>>,
}

impl RecvTable {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dests(&self) -> usize {
        self.dests
    }

    pub fn get(&self, step: usize, dst: Pid) -> Option<Pid> {
        self.cells[step * self.dests + dst]
    }
}

/// Inverts a contention-free transfer table row by row.
pub fn build_recv(transfer: &TransferTable, dst: GridShape) -> Result<RecvTable, ScheduleError> {
    let dests = dst.size();
    let mut cells = vec![None; transfer.steps * dests];
    for step in 0..transfer.steps {
        for src in 0..transfer.sources {
            let d = transfer.dest(step, src);
            if d >= dests {
                return Err(ScheduleError::ForeignPid {
                    pid: d,
                    grid: dests,
                });
            }
            let cell = &mut cells[step * dests + d];
            if cell.is_some() {
                return Err(ScheduleError::ContentionPresent { step, dest: d });
            }
            *cell = Some(src);
        }
    }
    Ok(RecvTable {
        steps: transfer.steps,
        dests,
        cells,
    })
}

/// Counts node contentions: for every step, each destination hit by `m > 1`
/// sources contributes `m - 1`.
pub fn count_contentions(transfer: &TransferTable) -> usize {
    let mut total = 0;
    let mut row = Vec::with_capacity(transfer.sources);
    for step in 0..transfer.steps {
        row.clear();
        row.extend_from_slice(transfer.row(step));
        row.sort_unstable();
        total += row.windows(2).filter(|w| w[0] == w[1]).count();
    }
    total
}

/// Which circular-shift pass a contended schedule gets.
///
/// Shrinking rows staggers each row group horizontally; shrinking columns
/// staggers each column group vertically; shrinking both applies the column
/// pass first, then the row pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftCase {
    None,
    RowShift,
    ColShift,
    Both,
}

impl fmt::Display for ShiftCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftCase::None => "none",
            ShiftCase::RowShift => "row_shift",
            ShiftCase::ColShift => "col_shift",
            ShiftCase::Both => "both",
        })
    }
}

/// Picks the shift pass from the grid shapes alone.
///
/// A dimension that stays equal folds into the non-strict side, so every
/// shrinking configuration maps to exactly one case; shift amounts that
/// wrap a full period degenerate to the identity.
pub fn select_shift_case(src: GridShape, dst: GridShape) -> ShiftCase {
    match (src.rows > dst.rows, src.cols > dst.cols) {
        (true, false) => ShiftCase::RowShift,
        (false, true) => ShiftCase::ColShift,
        (true, true) => ShiftCase::Both,
        (false, false) => ShiftCase::None,
    }
}

fn row_pass<T>(rows: usize, cols: usize, cells: &mut [T], src: GridShape) {
    for group in (0..rows).step_by(src.rows) {
        for i in 1..src.rows {
            let r = group + i;
            let amount = (src.cols * i) % cols;
            cells[r * cols..(r + 1) * cols].rotate_right(amount);
        }
    }
}

fn col_pass<T: Copy>(rows: usize, cols: usize, cells: &mut [T], src: GridShape) {
    for group in (0..cols).step_by(src.cols) {
        for j in 1..src.cols {
            let c = group + j;
            let amount = (src.rows * j) % rows;
            let column: Vec<T> = (0..rows).map(|i| cells[i * cols + c]).collect();
            for (i, value) in column.into_iter().enumerate() {
                cells[((i + amount) % rows) * cols + c] = value;
            }
        }
    }
}

fn permute_cells<T: Copy>(
    case: ShiftCase,
    rows: usize,
    cols: usize,
    cells: &mut [T],
    src: GridShape,
) {
    match case {
        ShiftCase::None => {}
        ShiftCase::RowShift => row_pass(rows, cols, cells, src),
        ShiftCase::ColShift => col_pass(rows, cols, cells, src),
        ShiftCase::Both => {
            col_pass(rows, cols, cells, src);
            row_pass(rows, cols, cells, src);
        }
    }
}

/// Applies the case's cell permutation identically to the mapping table,
/// the initial-owner table, and every superblock table.
///
/// Row `i` of each `src.rows`-row group rotates right by `src.cols * i`
/// (mod the table width); column `j` of each `src.cols`-column group
/// rotates down by `src.rows * j` (mod the table height).
pub fn apply_shifts(
    case: ShiftCase,
    mapping: &mut OwnerTable,
    initial: &mut OwnerTable,
    layout: &mut LayoutArray,
    src: GridShape,
) {
    let (rows, cols) = (mapping.rows, mapping.cols);
    permute_cells(case, rows, cols, &mut mapping.cells, src);
    permute_cells(case, rows, cols, &mut initial.cells, src);
    for table in &mut layout.tables {
        permute_cells(case, rows, cols, table, src);
    }
}

/// A complete redistribution schedule with its provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedistributionPlan {
    pub problem: RedistProblem,
    pub dims: SuperblockDims,
    pub layout: LayoutArray,
    pub transfer: TransferTable,
    pub recv: Option<RecvTable>,
    pub shift_case: ShiftCase,
    pub contentions_before: usize,
    pub contentions_after: usize,
}

impl RedistributionPlan {
    /// Number of communication steps.
    pub fn steps(&self) -> usize {
        self.transfer.steps
    }

    /// Blocks carried per message: one per superblock.
    pub fn message_blocks(&self) -> usize {
        self.dims.count
    }

    /// Global coordinate of the block at cell `(i, j)` of superblock `s`,
    /// after any shifts.
    pub fn block_at(&self, s: usize, i: usize, j: usize) -> (usize, usize) {
        self.layout.get(s, i, j)
    }
}

/// Plans a redistribution: builds the superblock tables, counts contention
/// in the raw schedule, applies the selected shifts when contended, and
/// derives the receive table when the result is contention-free.
///
/// The shifted schedule is adopted only when it does not increase the
/// contention count; a shrink whose raw schedule is already as spread out
/// as the destination count allows keeps the raw schedule, with
/// `shift_case` still recording the case that was tried.
pub fn plan(problem: &RedistProblem) -> Result<RedistributionPlan, TopologyError> {
    problem.validate()?;
    let dims = compute_superblock(problem);
    let layout = build_layout(&dims);
    let initial = build_initial_owners(&dims, problem.src);
    let final_owners = build_final_owners(&dims, problem.dst);
    let raw = build_transfer(&initial, &final_owners, problem.src)
        .expect("tiled owner tables fill the schedule exactly");
    let contentions_before = count_contentions(&raw);

    let shift_case = if contentions_before == 0 {
        ShiftCase::None
    } else {
        select_shift_case(problem.src, problem.dst)
    };

    let (layout, transfer, contentions_after) = if shift_case == ShiftCase::None {
        (layout, raw, contentions_before)
    } else {
        let mut shifted_layout = layout.clone();
        let mut shifted_initial = initial.clone();
        let mut mapping = final_owners.to_mapping();
        apply_shifts(
            shift_case,
            &mut mapping,
            &mut shifted_initial,
            &mut shifted_layout,
            problem.src,
        );
        let shifted = build_transfer(&shifted_initial, &mapping, problem.src)
            .expect("shifting permutes cells, keeping every column exactly full");
        let after = count_contentions(&shifted);
        if after <= contentions_before {
            (shifted_layout, shifted, after)
        } else {
            (layout, raw, contentions_before)
        }
    };

    let recv = if contentions_after == 0 {
        Some(build_recv(&transfer, problem.dst).expect("schedule is contention-free"))
    } else {
        None
    };

    Ok(RedistributionPlan {
        problem: *problem,
        dims,
        layout,
        transfer,
        recv,
        shift_case,
        contentions_before,
        contentions_after,
    })
}

/// Internal schedule construction failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    /// A source column received more entries than the schedule has steps;
    /// the owner tables are inconsistent.
    ColumnOverflow { pid: Pid, steps: usize },
    /// An owner table names a pid outside the grid.
    ForeignPid { pid: Pid, grid: usize },
    /// The transfer table is not contention-free, so no receive table
    /// exists.
    ContentionPresent { step: usize, dest: Pid },
}

impl fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleError::ColumnOverflow { pid, steps } => {
                write!(f, "schedule column for pid {pid} exceeds {steps} steps")
            }
            ScheduleError::ForeignPid { pid, grid } => {
                write!(
                    f,
                    "owner table names pid {pid}, outside the {grid}-processor grid"
                )
            }
            ScheduleError::ContentionPresent { step, dest } => {
                write!(f, "step {step} sends to destination {dest} more than once")
            }
        }
    }
}

impl std::error::Error for ScheduleError {}
