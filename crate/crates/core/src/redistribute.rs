//! Simulated execution of a redistribution plan against in-memory stores.
//!
//! Each processor is modelled as a [`LocalStore`] holding its block-cyclic
//! share of the matrix. Executing a plan packs one message per source per
//! step, observes a barrier between steps, and unpacks messages into fresh
//! destination stores. Blocks carry their global coordinate, so a receiver
//! never infers placement from message position; the classic constant-offset
//! placement rule is checked as a property in the tests instead of being
//! relied on. Payloads are generated deterministically from the block
//! coordinate, which makes any misrouted block detectable by content alone.

use crate::schedule::{self, RedistributionPlan, ShiftCase};
use crate::topology::{
    source_owner, Axis, BlockDesc, GridShape, Pid, RedistProblem, TopologyError,
};
use crate::Scalar;
use std::fmt;

/// One matrix block: its global coordinate and `NB * NB` payload elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub coord: (usize, usize),
    pub payload: Vec<T>,
}

/// The canonical payload generator: element `e` of block `(x, y)` is
/// `x * 10^6 + y * 10^3 + e`, exact in double precision at desk scale and
/// readable in dumps.
pub fn standard_fill<T: Scalar>(x: usize, y: usize, e: usize) -> T {
    T::from_u64((x as u64) * 1_000_000 + (y as u64) * 1_000 + e as u64)
        .expect("fill value representable")
}

/// One processor's block-cyclic share of the matrix. Block `(x, y)` lives
/// at local slot `(x / grid.rows, y / grid.cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStore<T> {
    pub pid: Pid,
    pub grid: GridShape,
    /// Block-grid side length of the full matrix.
    pub nblocks: usize,
    local_rows: usize,
    local_cols: usize,
    slots: Vec<Option<Block<T>>>,
}

impl<T> LocalStore<T> {
    /// An empty store for one processor of `grid`; the block grid must
    /// divide evenly.
    pub fn empty(pid: Pid, grid: GridShape, nblocks: usize) -> Result<Self, RedistError> {
        if !nblocks.is_multiple_of(grid.rows) {
            return Err(TopologyError::Divisibility {
                axis: Axis::Rows,
                n: nblocks,
                divisor: grid.rows,
            }
            .into());
        }
        if !nblocks.is_multiple_of(grid.cols) {
            return Err(TopologyError::Divisibility {
                axis: Axis::Cols,
                n: nblocks,
                divisor: grid.cols,
            }
            .into());
        }
        let local_rows = nblocks / grid.rows;
        let local_cols = nblocks / grid.cols;
        let mut slots = Vec::new();
        slots.resize_with(local_rows * local_cols, || None);
        Ok(LocalStore {
            pid,
            grid,
            nblocks,
            local_rows,
            local_cols,
            slots,
        })
    }

    /// Local slot grid: `(N / grid.rows, N / grid.cols)`.
    pub fn local_dims(&self) -> (usize, usize) {
        (self.local_rows, self.local_cols)
    }

    /// Local slot of a global block coordinate.
    pub fn local_slot(&self, x: usize, y: usize) -> (usize, usize) {
        (x / self.grid.rows, y / self.grid.cols)
    }

    /// Number of blocks currently held.
    pub fn occupied(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn get_local(&self, lx: usize, ly: usize) -> Option<&Block<T>> {
        if lx >= self.local_rows || ly >= self.local_cols {
            return None;
        }
        self.slots[lx * self.local_cols + ly].as_ref()
    }

    /// The block with global coordinate `(x, y)`, if this store holds it.
    pub fn get_global(&self, x: usize, y: usize) -> Option<&Block<T>> {
        if x >= self.nblocks || y >= self.nblocks {
            return None;
        }
        let (lx, ly) = self.local_slot(x, y);
        self.get_local(lx, ly).filter(|b| b.coord == (x, y))
    }

    /// Places a block at its local slot. The block must belong to this
    /// processor under the store's grid, and the slot must be empty.
    pub fn insert(&mut self, block: Block<T>) -> Result<(), RedistError> {
        let (x, y) = block.coord;
        let owner = source_owner(x, y, self.grid);
        if owner != self.pid {
            return Err(RedistError::WrongDestination {
                pid: self.pid,
                x,
                y,
                owner,
            });
        }
        let (lx, ly) = self.local_slot(x, y);
        let slot = &mut self.slots[lx * self.local_cols + ly];
        if slot.is_some() {
            return Err(RedistError::DuplicateSlot {
                pid: self.pid,
                x,
                y,
            });
        }
        *slot = Some(block);
        Ok(())
    }

    /// Iterates the blocks currently held, in local row-major order.
    pub fn blocks(&self) -> impl Iterator<Item = &Block<T>> {
        self.slots.iter().filter_map(|s| s.as_ref())
    }

    #[cfg(test)]
    fn swap_slots(&mut self, a: (usize, usize), b: (usize, usize)) {
        let ai = a.0 * self.local_cols + a.1;
        let bi = b.0 * self.local_cols + b.1;
        self.slots.swap(ai, bi);
    }
}

/// Distributes a freshly generated matrix block-cyclically over a grid.
pub fn distribute_initial<T, F>(
    desc: BlockDesc,
    grid: GridShape,
    fill: &F,
) -> Result<Vec<LocalStore<T>>, RedistError>
where
    F: Fn(usize, usize, usize) -> T,
{
    let n = desc.nblocks;
    let mut stores = (0..grid.size())
        .map(|pid| LocalStore::empty(pid, grid, n))
        .collect::<Result<Vec<_>, _>>()?;
    let elems = desc.nb * desc.nb;
    for x in 0..n {
        for y in 0..n {
            let payload = (0..elems).map(|e| fill(x, y, e)).collect();
            stores[source_owner(x, y, grid)].insert(Block {
                coord: (x, y),
                payload,
            })?;
        }
    }
    Ok(stores)
}

/// One packed message: the blocks a source sends to one destination in one
/// step, ordered by superblock (table 0 first).
#[derive(Debug, Clone, PartialEq)]
pub struct Message<T> {
    pub step: usize,
    pub src: Pid,
    pub dst: Pid,
    pub blocks: Vec<Block<T>>,
}

/// Collects the blocks for schedule entry `(step, pid)`: the block at the
/// entry's superblock cell, from every superblock in order.
pub fn pack<T: Clone>(
    plan: &RedistributionPlan,
    pid: Pid,
    step: usize,
    store: &LocalStore<T>,
) -> Result<Message<T>, RedistError> {
    let (i, j) = plan.transfer.coord(step, pid);
    let dst = plan.transfer.dest(step, pid);
    let mut blocks = Vec::with_capacity(plan.dims.count);
    for s in 0..plan.dims.count {
        let (x, y) = plan.block_at(s, i, j);
        let block = store
            .get_global(x, y)
            .ok_or(RedistError::MissingBlock { pid, x, y })?;
        blocks.push(block.clone());
    }
    Ok(Message {
        step,
        src: pid,
        dst,
        blocks,
    })
}

/// Unpacks a message into the destination store, placing every block by its
/// carried global coordinate.
pub fn unpack<T>(msg: Message<T>, store: &mut LocalStore<T>) -> Result<(), RedistError> {
    for block in msg.blocks {
        store.insert(block)?;
    }
    Ok(())
}

/// Transport counters for one communication step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepReport {
    /// Messages that crossed the network.
    pub sends: usize,
    /// Messages satisfied by local copy (source pid = destination pid).
    pub copies: usize,
    /// Largest number of deliveries into a single destination this step.
    pub max_fan_in: usize,
}

/// Transport counters for a whole execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub steps: Vec<StepReport>,
    /// Total blocks delivered into destination stores.
    pub blocks_delivered: usize,
}

impl RunReport {
    pub fn total_sends(&self) -> usize {
        self.steps.iter().map(|s| s.sends).sum()
    }

    pub fn total_copies(&self) -> usize {
        self.steps.iter().map(|s| s.copies).sum()
    }

    pub fn max_fan_in(&self) -> usize {
        self.steps.iter().map(|s| s.max_fan_in).max().unwrap_or(0)
    }
}

/// Destination stores plus the transport counters of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution<T> {
    pub stores: Vec<LocalStore<T>>,
    pub report: RunReport,
}

/// Runs a plan step by step: all sources pack, then all messages deliver.
///
/// Self-copies bypass the transport but still move their blocks into the
/// destination store. Contended plans execute correctly; the extra
/// per-step deliveries only show up in the report's fan-in counts.
pub fn execute<T: Clone>(
    plan: &RedistributionPlan,
    sources: Vec<LocalStore<T>>,
) -> Result<Execution<T>, RedistError> {
    let src_grid = plan.problem.src;
    if sources.len() != src_grid.size() {
        return Err(RedistError::SourceCount {
            expected: src_grid.size(),
            found: sources.len(),
        });
    }
    for (pid, store) in sources.iter().enumerate() {
        if store.pid != pid || store.grid != src_grid {
            return Err(RedistError::SourceMismatch { pid });
        }
    }

    let dst_grid = plan.problem.dst;
    let n = plan.problem.blocks.nblocks;
    let mut dests = (0..dst_grid.size())
        .map(|pid| LocalStore::empty(pid, dst_grid, n))
        .collect::<Result<Vec<_>, _>>()?;

    let mut steps = Vec::with_capacity(plan.steps());
    let mut blocks_delivered = 0;
    for step in 0..plan.steps() {
        let messages = (0..sources.len())
            .map(|pid| pack(plan, pid, step, &sources[pid]))
            .collect::<Result<Vec<_>, _>>()?;
        // All packs complete before any delivery: the inter-step barrier.
        let mut fan_in = vec![0usize; dests.len()];
        let (mut sends, mut copies) = (0, 0);
        for msg in messages {
            if msg.src == msg.dst {
                copies += 1;
            } else {
                sends += 1;
            }
            fan_in[msg.dst] += 1;
            blocks_delivered += msg.blocks.len();
            let dst = msg.dst;
            unpack(msg, &mut dests[dst]).map_err(|e| match e {
                RedistError::DuplicateSlot { pid, x, y } => {
                    RedistError::DuplicateDelivery { step, pid, x, y }
                }
                other => other,
            })?;
        }
        steps.push(StepReport {
            sends,
            copies,
            max_fan_in: fan_in.iter().max().copied().unwrap_or(0),
        });
    }

    Ok(Execution {
        stores: dests,
        report: RunReport {
            steps,
            blocks_delivered,
        },
    })
}

/// Outcome of checking destination stores against the ownership oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub pass: bool,
    pub blocks_checked: usize,
    pub mismatch_count: usize,
    /// At most the first ten mismatches, described for humans.
    pub mismatches: Vec<String>,
}

const MISMATCH_LIMIT: usize = 10;

/// Checks final placement independently of all plan machinery: every block
/// must sit in the store `dest_owner(x, y)` at slot
/// `(x / dst.rows, y / dst.cols)` with its generated payload, and every
/// store must hold exactly its share.
pub fn verify<T, F>(dests: &[LocalStore<T>], problem: &RedistProblem, fill: &F) -> VerifyReport
where
    T: PartialEq + fmt::Debug,
    F: Fn(usize, usize, usize) -> T,
{
    let q = problem.dst;
    let n = problem.blocks.nblocks;
    let elems = problem.blocks.nb * problem.blocks.nb;
    let mut mismatch_count = 0;
    let mut mismatches = Vec::new();
    let mut note = |count: &mut usize, text: String| {
        *count += 1;
        if mismatches.len() < MISMATCH_LIMIT {
            mismatches.push(text);
        }
    };

    if dests.len() != q.size() {
        note(
            &mut mismatch_count,
            format!(
                "expected {} destination stores, found {}",
                q.size(),
                dests.len()
            ),
        );
    }
    let per_store = n * n / q.size();
    for store in dests {
        if store.occupied() != per_store {
            note(
                &mut mismatch_count,
                format!(
                    "store {} holds {} blocks, expected {per_store}",
                    store.pid,
                    store.occupied()
                ),
            );
        }
    }

    let mut blocks_checked = 0;
    for x in 0..n {
        for y in 0..n {
            // Recomputed from the ownership formula alone.
            let owner = q.cols * (x % q.rows) + y % q.cols;
            let Some(store) = dests.get(owner) else {
                continue;
            };
            blocks_checked += 1;
            let (lx, ly) = (x / q.rows, y / q.cols);
            let Some(block) = store.get_local(lx, ly) else {
                note(
                    &mut mismatch_count,
                    format!("block ({x},{y}): store {owner} slot ({lx},{ly}) is empty"),
                );
                continue;
            };
            if block.coord != (x, y) {
                note(
                    &mut mismatch_count,
                    format!(
                        "block ({x},{y}): store {owner} slot ({lx},{ly}) holds block {:?}",
                        block.coord
                    ),
                );
                continue;
            }
            let payload_ok = block.payload.len() == elems
                && (0..elems).all(|e| block.payload[e] == fill(x, y, e));
            if !payload_ok {
                note(
                    &mut mismatch_count,
                    format!("block ({x},{y}): payload does not match the generator"),
                );
            }
        }
    }

    VerifyReport {
        pass: mismatch_count == 0,
        blocks_checked,
        mismatch_count,
        mismatches,
    }
}

/// Per-hop record of a chained resize session.
#[derive(Debug, Clone)]
pub struct HopReport {
    pub src: GridShape,
    pub dst: GridShape,
    pub steps: usize,
    pub shift_case: ShiftCase,
    pub contentions_before: usize,
    pub contentions_after: usize,
    pub run: RunReport,
    pub verify: VerifyReport,
}

impl HopReport {
    pub fn verified(&self) -> bool {
        self.verify.pass
    }
}

/// Hop reports plus the stores left after the final hop.
#[derive(Debug, Clone)]
pub struct SessionOutcome<T> {
    pub hops: Vec<HopReport>,
    pub stores: Vec<LocalStore<T>>,
}

impl<T> SessionOutcome<T> {
    pub fn all_verified(&self) -> bool {
        self.hops.iter().all(|h| h.verify.pass)
    }
}

/// Chains plan + execute + verify along a sequence of grids, feeding each
/// hop's output stores into the next. A single grid distributes the data
/// and reports no hops.
pub fn resize_session<T, F>(
    grids: &[GridShape],
    desc: BlockDesc,
    fill: &F,
) -> Result<SessionOutcome<T>, RedistError>
where
    T: Clone + PartialEq + fmt::Debug,
    F: Fn(usize, usize, usize) -> T,
{
    let first = grids.first().ok_or(RedistError::EmptyChain)?;
    let mut stores = distribute_initial(desc, *first, fill)?;
    let mut hops = Vec::new();
    for (index, pair) in grids.windows(2).enumerate() {
        let hop = index + 1;
        let problem = RedistProblem::new(pair[0], pair[1], desc)
            .map_err(|source| RedistError::InvalidHop { hop, source })?;
        let plan =
            schedule::plan(&problem).map_err(|source| RedistError::InvalidHop { hop, source })?;
        let execution = execute(&plan, stores)?;
        let verify_report = verify(&execution.stores, &problem, fill);
        hops.push(HopReport {
            src: pair[0],
            dst: pair[1],
            steps: plan.steps(),
            shift_case: plan.shift_case,
            contentions_before: plan.contentions_before,
            contentions_after: plan.contentions_after,
            run: execution.report,
            verify: verify_report,
        });
        stores = execution.stores;
    }
    Ok(SessionOutcome { hops, stores })
}

/// Renders the occupied blocks of a store set as `x,y,owner,checksum` CSV,
/// sorted by coordinate. The checksum is the payload element sum.
pub fn dump_stores_csv<T: Scalar>(stores: &[LocalStore<T>]) -> String {
    let mut rows: Vec<(usize, usize, Pid, T)> = Vec::new();
    for store in stores {
        for block in store.blocks() {
            let sum = block.payload.iter().fold(T::zero(), |acc, &v| acc + v);
            rows.push((block.coord.0, block.coord.1, store.pid, sum));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::from("x,y,owner,checksum\n");
    for (x, y, pid, sum) in rows {
        out.push_str(&format!("{x},{y},{pid},{sum}\n"));
    }
    out
}

/// Failures of the simulated engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RedistError {
    /// Grid or descriptor rejected during distribution.
    Topology(TopologyError),
    /// A chained hop failed validation.
    InvalidHop { hop: usize, source: TopologyError },
    /// A resize chain needs at least one grid.
    EmptyChain,
    /// Wrong number of source stores for the plan's grid.
    SourceCount { expected: usize, found: usize },
    /// A source store's pid or grid does not match the plan.
    SourceMismatch { pid: Pid },
    /// A store does not hold a block the plan schedules it to send.
    MissingBlock { pid: Pid, x: usize, y: usize },
    /// A block arrived at a store that does not own its coordinate.
    WrongDestination {
        pid: Pid,
        x: usize,
        y: usize,
        owner: Pid,
    },
    /// A local slot was written twice.
    DuplicateSlot { pid: Pid, x: usize, y: usize },
    /// A destination slot was written twice within an execution step.
    DuplicateDelivery {
        step: usize,
        pid: Pid,
        x: usize,
        y: usize,
    },
}

impl From<TopologyError> for RedistError {
    fn from(e: TopologyError) -> Self {
        RedistError::Topology(e)
    }
}

impl fmt::Display for RedistError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RedistError::Topology(e) => e.fmt(f),
            RedistError::InvalidHop { hop, source } => write!(f, "hop {hop}: {source}"),
            RedistError::EmptyChain => write!(f, "resize chain needs at least one grid"),
            RedistError::SourceCount { expected, found } => {
                write!(f, "expected {expected} source stores, found {found}")
            }
            RedistError::SourceMismatch { pid } => {
                write!(
                    f,
                    "source store {pid} does not match the plan's source grid"
                )
            }
            RedistError::MissingBlock { pid, x, y } => {
                write!(f, "store {pid} does not hold scheduled block ({x},{y})")
            }
            RedistError::WrongDestination { pid, x, y, owner } => {
                write!(
                    f,
                    "block ({x},{y}) delivered to store {pid} but belongs to {owner}"
                )
            }
            RedistError::DuplicateSlot { pid, x, y } => {
                write!(f, "store {pid}: slot for block ({x},{y}) written twice")
            }
            RedistError::DuplicateDelivery { step, pid, x, y } => {
                write!(f, "step {step}: store {pid} received block ({x},{y}) twice")
            }
        }
    }
}

impl std::error::Error for RedistError {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::plan;
    use crate::topology::dest_owner;

    fn grid(s: &str) -> GridShape {
        s.parse().unwrap()
    }

    fn problem(src: &str, dst: &str, nblocks: usize) -> RedistProblem {
        RedistProblem::new(
            grid(src),
            grid(dst),
            BlockDesc::from_blocks(nblocks, 1).unwrap(),
        )
        .unwrap()
    }

    fn fill64(x: usize, y: usize, e: usize) -> f64 {
        standard_fill(x, y, e)
    }

    #[test]
    fn distribute_counts_and_placement() {
        let desc = BlockDesc::from_blocks(2, 1).unwrap();
        let stores = distribute_initial::<f64, _>(desc, grid("1x1"), &fill64).unwrap();
        assert_eq!(stores.len(), 1);
        assert_eq!(stores[0].occupied(), 4);

        let desc = BlockDesc::from_blocks(12, 1).unwrap();
        let stores = distribute_initial::<f64, _>(desc, grid("2x2"), &fill64).unwrap();
        assert_eq!(stores.len(), 4);
        assert!(stores.iter().all(|s| s.occupied() == 36));
        // Block (4,0) belongs to processor 0 and sits at local slot (2,0).
        assert!(stores[0].get_global(4, 0).is_some());
        assert_eq!(stores[0].local_slot(4, 0), (2, 0));
    }

    #[test]
    fn distribute_rejects_indivisible_grid() {
        let desc = BlockDesc::from_blocks(5, 1).unwrap();
        let err = distribute_initial::<f64, _>(desc, grid("2x2"), &fill64).unwrap_err();
        assert!(matches!(
            err,
            RedistError::Topology(TopologyError::Divisibility { .. })
        ));
    }

    #[test]
    fn pack_identity_plan_carries_whole_store() {
        let p = problem("2x2", "2x2", 4);
        let pl = plan(&p).unwrap();
        let stores = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();
        let msg = pack(&pl, 1, 0, &stores[1]).unwrap();
        assert_eq!(msg.dst, 1);
        assert_eq!(msg.blocks.len(), stores[1].occupied());
    }

    #[test]
    fn pack_message_size_is_one_block_per_superblock() {
        let p = problem("2x2", "3x4", 12);
        let pl = plan(&p).unwrap();
        let stores = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();
        let msg = pack(&pl, 0, 0, &stores[0]).unwrap();
        assert_eq!(msg.blocks.len(), 6);
        assert_eq!(msg.blocks.len(), 144 / (6 * 4));
        // Per-step volume over all sources.
        let per_step: usize = (0..4)
            .map(|pid| pack(&pl, pid, 0, &stores[pid]).unwrap().blocks.len())
            .sum();
        assert_eq!(per_step, 4 * 144 / (6 * 4));
    }

    #[test]
    fn unpack_places_blocks_by_coordinate() {
        let q = grid("3x4");
        let mut store = LocalStore::empty(4, q, 12).unwrap();
        let msg = Message {
            step: 0,
            src: 0,
            dst: 4,
            blocks: vec![Block {
                coord: (4, 0),
                payload: vec![fill64(4, 0, 0)],
            }],
        };
        unpack(msg, &mut store).unwrap();
        assert_eq!(store.get_local(1, 0).unwrap().coord, (4, 0));

        let mut store10 = LocalStore::empty(10, q, 12).unwrap();
        let msg = Message {
            step: 0,
            src: 0,
            dst: 10,
            blocks: vec![Block {
                coord: (2, 2),
                payload: vec![fill64(2, 2, 0)],
            }],
        };
        unpack(msg, &mut store10).unwrap();
        assert_eq!(store10.get_local(0, 0).unwrap().coord, (2, 2));
    }

    #[test]
    fn unpack_rejects_foreign_and_duplicate_blocks() {
        let q = grid("3x4");
        let mut store = LocalStore::empty(0, q, 12).unwrap();
        let foreign = Message {
            step: 0,
            src: 0,
            dst: 0,
            blocks: vec![Block {
                coord: (4, 0),
                payload: vec![0.0],
            }],
        };
        assert_eq!(
            unpack(foreign, &mut store),
            Err(RedistError::WrongDestination {
                pid: 0,
                x: 4,
                y: 0,
                owner: 4
            })
        );

        let block = Block {
            coord: (0, 0),
            payload: vec![0.0],
        };
        store.insert(block.clone()).unwrap();
        assert_eq!(
            store.insert(block),
            Err(RedistError::DuplicateSlot { pid: 0, x: 0, y: 0 })
        );
    }

    #[test]
    fn execute_identity_returns_equal_stores() {
        let p = problem("2x2", "2x2", 4);
        let pl = plan(&p).unwrap();
        let stores = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();
        let before = stores.clone();
        let exec = execute(&pl, stores).unwrap();
        assert_eq!(exec.stores, before);
        assert_eq!(exec.report.total_copies(), 4);
        assert_eq!(exec.report.total_sends(), 0);
    }

    #[test]
    fn execute_expansion_verifies() {
        let p = problem("2x2", "3x4", 12);
        let pl = plan(&p).unwrap();
        let stores = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();
        let exec = execute(&pl, stores).unwrap();
        assert_eq!(exec.stores.len(), 12);
        assert!(exec.stores.iter().all(|s| s.occupied() == 12));
        assert_eq!(exec.report.blocks_delivered, 144);
        let report = verify(&exec.stores, &p, &fill64);
        assert!(report.pass, "{:?}", report.mismatches);
        assert_eq!(report.blocks_checked, 144);
    }

    #[test]
    fn execute_contended_shrink_verifies_with_fan_in() {
        let p = problem("2x2", "1x2", 4);
        let pl = plan(&p).unwrap();
        assert!(pl.contentions_after > 0);
        let stores = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();
        let exec = execute(&pl, stores).unwrap();
        assert!(exec.report.max_fan_in() > 1);
        assert!(verify(&exec.stores, &p, &fill64).pass);
    }

    #[test]
    fn execute_volume_conservation() {
        let p = problem("3x2", "2x4", 12);
        let pl = plan(&p).unwrap();
        let stores = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();
        let n2 = p.blocks.total_blocks();
        // Per step, every source moves one message of N^2/(R*C) blocks.
        let per_step = p.src.size() * pl.message_blocks();
        let exec = execute(&pl, stores).unwrap();
        assert_eq!(exec.report.blocks_delivered, n2);
        for step in &exec.report.steps {
            assert_eq!((step.sends + step.copies) * pl.message_blocks(), per_step);
        }
    }

    /// Deliveries within a step touch disjoint slots, so their order cannot
    /// change the outcome.
    #[test]
    fn delivery_order_within_a_step_is_irrelevant() {
        let p = problem("2x2", "3x4", 12);
        let pl = plan(&p).unwrap();
        let sources = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();

        let forward = execute(&pl, sources.clone()).unwrap().stores;

        let mut reversed: Vec<LocalStore<f64>> = (0..p.dst.size())
            .map(|pid| LocalStore::empty(pid, p.dst, 12).unwrap())
            .collect();
        for step in 0..pl.steps() {
            let mut messages: Vec<Message<f64>> = (0..4)
                .map(|pid| pack(&pl, pid, step, &sources[pid]).unwrap())
                .collect();
            messages.reverse();
            for msg in messages {
                let dst = msg.dst;
                unpack(msg, &mut reversed[dst]).unwrap();
            }
        }
        assert_eq!(forward, reversed);
    }

    /// For contention-free plans, consecutive blocks of one message land a
    /// constant `(R/dst.rows) * (C/dst.cols)` slots apart when the local
    /// array is enumerated superblock-major.
    #[test]
    fn message_blocks_land_at_constant_superblock_offsets() {
        let p = problem("2x2", "3x4", 12);
        let pl = plan(&p).unwrap();
        let stores = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();
        let q = p.dst;
        let chunk_rows = pl.dims.rows / q.rows;
        let chunk_cols = pl.dims.cols / q.cols;
        let chunk = chunk_rows * chunk_cols;
        let sup_major = |x: usize, y: usize| {
            let (lx, ly) = (x / q.rows, y / q.cols);
            let s = (lx / chunk_rows) * pl.dims.grid_cols + ly / chunk_cols;
            s * chunk + (lx % chunk_rows) * chunk_cols + ly % chunk_cols
        };
        for step in 0..pl.steps() {
            for (pid, store) in stores.iter().enumerate() {
                let msg = pack(&pl, pid, step, store).unwrap();
                let indices: Vec<usize> = msg
                    .blocks
                    .iter()
                    .map(|b| sup_major(b.coord.0, b.coord.1))
                    .collect();
                for w in indices.windows(2) {
                    assert_eq!(w[1] - w[0], chunk, "step {step}, source {pid}");
                }
            }
        }
    }

    #[test]
    fn verify_reports_injected_faults() {
        let p = problem("2x2", "3x4", 12);
        let pl = plan(&p).unwrap();
        let stores = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();
        let mut exec = execute(&pl, stores).unwrap();
        // Swap two blocks inside one destination store.
        exec.stores[0].swap_slots((0, 0), (0, 1));
        let report = verify(&exec.stores, &p, &fill64);
        assert!(!report.pass);
        assert_eq!(report.mismatch_count, 2);
    }

    #[test]
    fn resize_session_round_trip() {
        let desc = BlockDesc::from_blocks(12, 1).unwrap();
        let chain = [grid("2x2"), grid("3x4"), grid("2x2")];
        let outcome = resize_session::<f64, _>(&chain, desc, &fill64).unwrap();
        assert_eq!(outcome.hops.len(), 2);
        assert!(outcome.all_verified());
        // The shrink hop exercises the contended path or not; either way the
        // data must return to its original distribution.
        let initial = distribute_initial::<f64, _>(desc, grid("2x2"), &fill64).unwrap();
        assert_eq!(outcome.stores, initial);
    }

    #[test]
    fn resize_session_singleton_and_identity() {
        let desc = BlockDesc::from_blocks(4, 1).unwrap();
        let single = resize_session::<f64, _>(&[grid("2x2")], desc, &fill64).unwrap();
        assert!(single.hops.is_empty());

        let identity =
            resize_session::<f64, _>(&[grid("2x2"), grid("2x2")], desc, &fill64).unwrap();
        assert_eq!(identity.hops.len(), 1);
        assert_eq!(identity.hops[0].run.total_copies(), 4);
        assert!(identity.all_verified());
    }

    #[test]
    fn pack_flags_missing_blocks() {
        let p = problem("2x2", "3x4", 12);
        let pl = plan(&p).unwrap();
        // A store for the right grid that never received its blocks.
        let empty = LocalStore::<f64>::empty(0, p.src, 12).unwrap();
        let err = pack(&pl, 0, 0, &empty).unwrap_err();
        assert!(matches!(err, RedistError::MissingBlock { pid: 0, .. }));
    }

    #[test]
    fn execute_rejects_mismatched_sources() {
        let p = problem("2x2", "3x4", 12);
        let pl = plan(&p).unwrap();
        let stores = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();

        let mut short = stores.clone();
        short.pop();
        assert_eq!(
            execute(&pl, short).unwrap_err(),
            RedistError::SourceCount { expected: 4, found: 3 }
        );

        let mut swapped = stores;
        swapped.swap(0, 1);
        assert_eq!(
            execute(&pl, swapped).unwrap_err(),
            RedistError::SourceMismatch { pid: 0 }
        );
    }

    #[test]
    fn resize_session_rejects_an_empty_chain() {
        let desc = BlockDesc::from_blocks(4, 1).unwrap();
        let err = resize_session::<f64, _>(&[], desc, &fill64).unwrap_err();
        assert_eq!(err, RedistError::EmptyChain);
    }

    #[test]
    fn resize_session_names_offending_hop() {
        let desc = BlockDesc::from_blocks(4, 1).unwrap();
        let err = resize_session::<f64, _>(&[grid("2x2"), grid("3x4")], desc, &fill64).unwrap_err();
        assert!(matches!(err, RedistError::InvalidHop { hop: 1, .. }));
    }

    /// Exactly-once delivery: after execution the destination stores
    /// jointly hold every block once, and payload content survives.
    #[test]
    fn exactly_once_delivery_across_destination_stores() {
        let p = problem("2x4", "4x2", 8);
        let pl = plan(&p).unwrap();
        let stores = distribute_initial::<f64, _>(p.blocks, p.src, &fill64).unwrap();
        let exec = execute(&pl, stores).unwrap();
        let n = p.blocks.nblocks;
        let mut seen = vec![false; n * n];
        for store in &exec.stores {
            for block in store.blocks() {
                let (x, y) = block.coord;
                assert!(!seen[x * n + y]);
                seen[x * n + y] = true;
                assert_eq!(dest_owner(x, y, p.dst), store.pid);
                assert_eq!(block.payload[0], fill64(x, y, 0));
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn engine_is_generic_over_the_payload_scalar() {
        let p = problem("2x2", "3x4", 12);
        let pl = plan(&p).unwrap();
        let fill32 = |x: usize, y: usize, e: usize| standard_fill::<f32>(x, y, e);
        let stores = distribute_initial::<f32, _>(p.blocks, p.src, &fill32).unwrap();
        let exec = execute(&pl, stores).unwrap();
        assert!(verify(&exec.stores, &p, &fill32).pass);
    }

    #[test]
    fn dump_lists_blocks_in_coordinate_order() {
        let desc = BlockDesc::from_blocks(2, 1).unwrap();
        let stores = distribute_initial::<f64, _>(desc, grid("2x2"), &fill64).unwrap();
        let dump = dump_stores_csv(&stores);
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines[0], "x,y,owner,checksum");
        assert_eq!(lines[1], "0,0,0,0");
        assert_eq!(lines[2], "0,1,1,1000");
        assert_eq!(lines.len(), 5);
    }
}
