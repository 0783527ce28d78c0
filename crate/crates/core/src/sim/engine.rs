use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ir::{Expr, KernelProgram, MemorySpace, ParamKind, ScalarType, Stmt, StmtId, StmtKind, Type};

use super::eval::{evaluate_expr, float_to_int, RuntimeError, ThreadEnv, Value};
use super::model::{Action, Address, ArrayInfo, MemoryModel, MemoryUnit, ThreadId, UnitTuple};
use super::{
    ConfigError, Dim3, DivergenceKind, DivergenceSite, LaunchConfig, SimLimits, SimOutcome,
    SimStats,
};

enum FrameKind<'p> {
    Root,
    Then {
        else_body: &'p [Stmt],
        else_mask: u64,
        diverged: bool,
    },
    Else {
        diverged: bool,
    },
    Loop {
        stmt: StmtId,
        cond: &'p Expr,
        diverged: bool,
    },
}

struct Frame<'p> {
    stmts: &'p [Stmt],
    pc: usize,
    mask: u64,
    kind: FrameKind<'p>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WarpState {
    Running,
    Waiting { barrier: usize, lanes: u64 },
    Done,
}

struct Warp<'p> {
    id: u32,
    first_thread: u32,
    /// Lanes the warp started with.
    initial: u64,
    alive: u64,
    stack: Vec<Frame<'p>>,
    state: WarpState,
    diverged_depth: u32,
}

enum Halt {
    Runtime(RuntimeError),
    Budget,
}

#[derive(Clone, Copy)]
struct AddrState {
    order: u32,
    epoch: u64,
}

struct Block {
    linear: u32,
    idx: Dim3,
    locals: Vec<Value>,
    executed: Vec<u64>,
    shared_mem: HashMap<(usize, i64), Value>,
    shared_units: HashMap<Address, MemoryUnit>,
    orders: HashMap<Address, AddrState>,
    touched: Vec<Address>,
    epoch: u64,
}

struct Engine<'p> {
    prog: &'p KernelProgram,
    limits: SimLimits,
    grid: Dim3,
    block_dim: Dim3,
    params: Vec<Value>,
    arrays: Vec<ArrayInfo>,
    elem_types: Vec<Type>,
    local_types: Vec<Type>,
    thread_idx: Vec<Dim3>,
    barrier_index: HashMap<&'p str, usize>,
    global_mem: HashMap<(usize, i64), Value>,
    global_units: HashMap<Address, MemoryUnit>,
    shared_units: BTreeMap<u32, BTreeMap<Address, MemoryUnit>>,
    increments: Vec<u64>,
    accesses: u64,
    divergence: Option<DivergenceSite>,
    stuck_at: BTreeSet<usize>,
    runtime_error: Option<RuntimeError>,
}

fn lanes(mask: u64) -> impl Iterator<Item = u32> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let l = m.trailing_zeros();
            m &= m - 1;
            Some(l)
        }
    })
}

fn lane_mask(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

pub(super) fn run(
    prog: &KernelProgram,
    config: &LaunchConfig,
    limits: SimLimits,
    block_order: Option<Vec<u32>>,
) -> Result<SimOutcome, ConfigError> {
    if !(1..=64).contains(&limits.warp_size) {
        return Err(ConfigError::BadWarpSize(limits.warp_size));
    }
    let (grid, block_dim) = (config.grid, config.block);
    if grid.0.contains(&0) || block_dim.0.contains(&0) {
        return Err(ConfigError::ZeroExtent {
            grid,
            block: block_dim,
        });
    }
    let threads = block_dim.volume();
    if threads > u64::from(limits.max_threads_per_block) {
        return Err(ConfigError::TooManyThreads {
            threads,
            max: limits.max_threads_per_block,
        });
    }
    if grid.volume() > u64::from(u32::MAX) {
        return Err(ConfigError::TooManyThreads {
            threads: grid.volume(),
            max: u32::MAX,
        });
    }
    for name in config.args.keys() {
        if !prog.scalar_params().any(|p| &p.name == name) {
            return Err(ConfigError::UnknownArg(name.clone()));
        }
    }
    let mut params = Vec::with_capacity(prog.params.len());
    for p in &prog.params {
        let v = match &p.kind {
            ParamKind::ArrayHandle => Value::Int(0),
            ParamKind::Scalar { ty, default, .. } => {
                let raw = config
                    .args
                    .get(&p.name)
                    .copied()
                    .or(*default)
                    .ok_or_else(|| ConfigError::MissingArg(p.name.clone()))?;
                if !raw.is_finite() {
                    return Err(ConfigError::NonFiniteArg(p.name.clone()));
                }
                match ty {
                    ScalarType::Float => Value::Float(raw),
                    ScalarType::Int => Value::Int(
                        float_to_int(raw).map_err(|_| ConfigError::NonFiniteArg(p.name.clone()))?,
                    ),
                }
            }
        };
        params.push(v);
    }

    let mut barriers: Vec<&str> = prog.barrier_ids.iter().map(String::as_str).collect();
    barriers.sort_unstable();
    let thread_idx = (0..threads as u32)
        .map(|l| Dim3::from_linear(l, block_dim))
        .collect();
    let mut engine = Engine {
        prog,
        limits,
        grid,
        block_dim,
        params,
        arrays: Vec::new(),
        elem_types: prog.arrays.iter().map(|a| a.elem.into()).collect(),
        local_types: prog.locals.iter().map(|l| l.ty).collect(),
        thread_idx,
        barrier_index: barriers.iter().enumerate().map(|(i, b)| (*b, i)).collect(),
        global_mem: HashMap::new(),
        global_units: HashMap::new(),
        shared_units: BTreeMap::new(),
        increments: vec![0; barriers.len()],
        accesses: 0,
        divergence: None,
        stuck_at: BTreeSet::new(),
        runtime_error: None,
    };

    let mut budget_exhausted = false;
    let mut blocks_run = 0;
    match engine.array_infos() {
        Ok(infos) => {
            engine.arrays = infos;
            let order: Vec<u32> =
                block_order.unwrap_or_else(|| (0..grid.volume() as u32).collect());
            for linear in order {
                blocks_run += 1;
                if engine.run_block(linear).is_err() {
                    budget_exhausted = true;
                    break;
                }
            }
        }
        Err(e) => {
            engine.arrays = prog
                .arrays
                .iter()
                .map(|a| ArrayInfo {
                    name: a.name.clone(),
                    space: a.space,
                    size: 0,
                })
                .collect();
            engine.runtime_error = Some(e);
        }
    }

    let model = MemoryModel {
        arrays: engine.arrays,
        barriers: barriers.iter().map(|b| b.to_string()).collect(),
        grid_dim: grid,
        block_dim,
        global_units: engine.global_units.into_iter().collect(),
        shared_units: engine.shared_units,
        barrier_increments: barriers
            .iter()
            .zip(&engine.increments)
            .map(|(b, n)| (b.to_string(), *n))
            .collect(),
        divergent_barriers: engine
            .stuck_at
            .iter()
            .map(|&i| barriers[i].to_string())
            .collect(),
    };
    Ok(SimOutcome {
        model,
        barrier_divergence: engine.divergence.is_some(),
        divergence: engine.divergence,
        budget_exhausted,
        runtime_error: engine.runtime_error,
        stats: SimStats {
            accesses: engine.accesses,
            blocks_run,
        },
    })
}

impl<'p> Engine<'p> {
    fn array_infos(&self) -> Result<Vec<ArrayInfo>, RuntimeError> {
        let env = ThreadEnv {
            locals: &[],
            params: &self.params,
            thread_idx: Dim3([0; 3]),
            block_idx: Dim3([0; 3]),
            block_dim: self.block_dim,
            grid_dim: self.grid,
        };
        self.prog
            .arrays
            .iter()
            .map(|a| {
                let size = evaluate_expr(&a.size, &env)?.as_int().unwrap_or(0).max(0) as u64;
                Ok(ArrayInfo {
                    name: a.name.clone(),
                    space: a.space,
                    size,
                })
            })
            .collect()
    }

    /// `Err` only when the instruction budget ran out; the whole run stops then.
    fn run_block(&mut self, linear: u32) -> Result<(), ()> {
        let idx = Dim3::from_linear(linear, self.grid);
        let threads = self.thread_idx.len() as u32;
        let ws = self.limits.warp_size;
        let nlocals = self.prog.locals.len();
        let mut blk = Block {
            linear,
            idx,
            locals: self
                .local_types
                .iter()
                .map(|t| Value::zero(*t))
                .cycle()
                .take(nlocals * threads as usize)
                .collect(),
            executed: vec![0; threads as usize],
            shared_mem: HashMap::new(),
            shared_units: HashMap::new(),
            orders: HashMap::new(),
            touched: Vec::new(),
            epoch: 0,
        };
        let mut warps: Vec<Warp<'p>> = (0..threads.div_ceil(ws))
            .map(|w| {
                let first = w * ws;
                let alive = lane_mask(ws.min(threads - first));
                Warp {
                    id: w,
                    first_thread: first,
                    initial: alive,
                    alive,
                    stack: vec![Frame {
                        stmts: &self.prog.body,
                        pc: 0,
                        mask: alive,
                        kind: FrameKind::Root,
                    }],
                    state: WarpState::Running,
                    diverged_depth: 0,
                }
            })
            .collect();

        let outcome = self.schedule(&mut blk, &mut warps);
        if !blk.shared_units.is_empty() {
            self.shared_units
                .insert(linear, blk.shared_units.into_iter().collect());
        }
        match outcome {
            Err(Halt::Budget) => Err(()),
            Err(Halt::Runtime(e)) => {
                self.runtime_error.get_or_insert(e);
                Ok(())
            }
            Ok(()) => Ok(()),
        }
    }

    fn diverge(&mut self, blk: &Block, barrier: usize, kind: DivergenceKind) {
        if self.divergence.is_none() {
            let name = self
                .barrier_index
                .iter()
                .find(|(_, &i)| i == barrier)
                .map(|(n, _)| n.to_string())
                .unwrap_or_default();
            self.divergence = Some(DivergenceSite {
                block: blk.idx,
                barrier: name,
                kind,
            });
        }
    }

    fn schedule(&mut self, blk: &mut Block, warps: &mut [Warp<'p>]) -> Result<(), Halt> {
        loop {
            let mut ran = false;
            for warp in warps.iter_mut() {
                if warp.state != WarpState::Running {
                    continue;
                }
                ran = true;
                self.step(blk, warp)?;
            }
            if ran {
                continue;
            }
            // nothing runnable: every unfinished warp waits at a barrier, and
            // the block either releases it or is stuck for good
            let mut target: Option<usize> = None;
            let mut mismatched = false;
            let mut partial = false;
            let mut exited = false;
            for w in warps.iter() {
                exited |= w.alive != w.initial;
                if let WarpState::Waiting { barrier, lanes } = w.state {
                    mismatched |= target.is_some_and(|t| t != barrier);
                    partial |= lanes != w.alive;
                    target.get_or_insert(barrier);
                }
            }
            let Some(barrier) = target else {
                return Ok(());
            };
            let kind = if mismatched {
                Some(DivergenceKind::MismatchedBarriers)
            } else if partial {
                Some(DivergenceKind::PartialArrival)
            } else if exited {
                Some(DivergenceKind::ExitWhileWaiting)
            } else {
                None
            };
            if let Some(kind) = kind {
                for w in warps.iter() {
                    if let WarpState::Waiting { barrier, .. } = w.state {
                        self.stuck_at.insert(barrier);
                    }
                }
                self.diverge(blk, barrier, kind);
                return Ok(());
            }
            self.release(blk, barrier);
            for w in warps.iter_mut() {
                if matches!(w.state, WarpState::Waiting { .. }) {
                    w.state = WarpState::Running;
                }
            }
        }
    }

    /// All live threads passed `barrier`: every address touched since the last
    /// release moves to its next visit order.
    fn release(&mut self, blk: &mut Block, barrier: usize) {
        for addr in blk.touched.drain(..) {
            if let Some(st) = blk.orders.get_mut(&addr) {
                st.order += 1;
            }
            let unit = match self.arrays[addr.array].space {
                MemorySpace::Global => self.global_units.get_mut(&addr),
                MemorySpace::Shared => blk.shared_units.get_mut(&addr),
            };
            if let Some(unit) = unit {
                unit.splits.entry(blk.linear).or_default().push(barrier);
            }
            self.increments[barrier] += 1;
        }
        blk.epoch += 1;
    }

    fn charge(&self, blk: &mut Block, warp: &Warp<'_>, active: u64) -> Result<(), Halt> {
        for l in lanes(active) {
            let t = (warp.first_thread + l) as usize;
            blk.executed[t] += 1;
            if blk.executed[t] > self.limits.budget {
                return Err(Halt::Budget);
            }
        }
        Ok(())
    }

    fn eval(&self, blk: &Block, thread: u32, e: &Expr) -> Result<Value, RuntimeError> {
        let n = self.local_types.len();
        let t = thread as usize;
        let env = ThreadEnv {
            locals: &blk.locals[t * n..(t + 1) * n],
            params: &self.params,
            thread_idx: self.thread_idx[t],
            block_idx: blk.idx,
            block_dim: self.block_dim,
            grid_dim: self.grid,
        };
        evaluate_expr(e, &env)
    }

    fn eval_mask(&self, blk: &Block, warp: &Warp<'_>, active: u64, cond: &Expr, stmt: StmtId) -> Result<u64, Halt> {
        let mut taken = 0u64;
        for l in lanes(active) {
            let v = self
                .eval(blk, warp.first_thread + l, cond)
                .map_err(|e| Halt::Runtime(e.at(stmt)))?;
            if v.as_bool().unwrap_or(false) {
                taken |= 1 << l;
            }
        }
        Ok(taken)
    }

    fn set_local(&self, blk: &mut Block, thread: u32, slot: usize, v: Value) {
        let n = self.local_types.len();
        blk.locals[thread as usize * n + slot] = v.coerce(self.local_types[slot]);
    }

    #[allow(clippy::too_many_arguments)]
    fn access(
        &mut self,
        blk: &mut Block,
        warp: &Warp<'_>,
        thread: u32,
        array: usize,
        index: i64,
        action: Action,
        stmt: StmtId,
    ) -> Result<Address, RuntimeError> {
        let info = &self.arrays[array];
        if index < 0 || index as u64 >= info.size {
            return Err(RuntimeError::OutOfBounds {
                array: info.name.clone(),
                index,
                size: info.size,
            }
            .at(stmt));
        }
        let addr = Address { array, index };
        let st = blk.orders.entry(addr).or_insert(AddrState {
            order: 0,
            epoch: u64::MAX,
        });
        if st.epoch != blk.epoch {
            st.epoch = blk.epoch;
            blk.touched.push(addr);
        }
        let tuple = UnitTuple {
            visit_order: st.order,
            thread: ThreadId {
                block: blk.idx,
                thread: self.thread_idx[thread as usize],
            },
            action,
            stmt,
            warp: warp.id,
            diverged: warp.diverged_depth > 0,
        };
        let unit = match info.space {
            MemorySpace::Global => self.global_units.entry(addr),
            MemorySpace::Shared => blk.shared_units.entry(addr),
        }
        .or_insert_with(|| MemoryUnit::new(addr));
        unit.tuples.push(tuple);
        self.accesses += 1;
        Ok(addr)
    }

    fn index_of(&self, blk: &Block, thread: u32, e: &Expr, stmt: StmtId) -> Result<i64, Halt> {
        let v = self.eval(blk, thread, e).map_err(|e| Halt::Runtime(e.at(stmt)))?;
        Ok(v.as_int().unwrap_or(0))
    }

    fn step(&mut self, blk: &mut Block, warp: &mut Warp<'p>) -> Result<(), Halt> {
        let top = warp.stack.last_mut().expect("running warp has a frame");
        let active = top.mask & warp.alive;
        if active == 0 || top.pc >= top.stmts.len() {
            return self.end_frame(blk, warp);
        }
        let stmt: &'p Stmt = &top.stmts[top.pc];
        top.pc += 1;
        self.charge(blk, warp, active)?;
        let id = stmt.id;
        let fault = |e: RuntimeError| Halt::Runtime(e.at(id));
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                for l in lanes(active) {
                    let t = warp.first_thread + l;
                    let v = self.eval(blk, t, value).map_err(fault)?;
                    self.set_local(blk, t, target.slot, v);
                }
            }
            StmtKind::Load {
                target,
                array,
                index,
            } => {
                for l in lanes(active) {
                    let t = warp.first_thread + l;
                    let i = self.index_of(blk, t, index, id)?;
                    let addr = self
                        .access(blk, warp, t, array.index, i, Action::Read, id)
                        .map_err(Halt::Runtime)?;
                    let key = (addr.array, addr.index);
                    let v = match self.arrays[array.index].space {
                        MemorySpace::Global => self.global_mem.get(&key),
                        MemorySpace::Shared => blk.shared_mem.get(&key),
                    }
                    .copied()
                    .unwrap_or(Value::zero(self.elem_types[array.index]));
                    self.set_local(blk, t, target.slot, v);
                }
            }
            StmtKind::Store {
                array,
                index,
                value,
            } => {
                for l in lanes(active) {
                    let t = warp.first_thread + l;
                    let i = self.index_of(blk, t, index, id)?;
                    let v = self
                        .eval(blk, t, value)
                        .map_err(fault)?
                        .coerce(self.elem_types[array.index]);
                    let addr = self
                        .access(blk, warp, t, array.index, i, Action::Write, id)
                        .map_err(Halt::Runtime)?;
                    let key = (addr.array, addr.index);
                    match self.arrays[array.index].space {
                        MemorySpace::Global => self.global_mem.insert(key, v),
                        MemorySpace::Shared => blk.shared_mem.insert(key, v),
                    };
                }
            }
            StmtKind::Sync { barrier } => {
                warp.state = WarpState::Waiting {
                    barrier: self.barrier_index[barrier.as_str()],
                    lanes: active,
                };
            }
            StmtKind::Return => {
                warp.alive &= !active;
                if warp.alive == 0 {
                    warp.state = WarpState::Done;
                }
                return Ok(());
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let taken = self.eval_mask(blk, warp, active, cond, id)?;
                let not_taken = active & !taken;
                let diverged = taken != 0 && not_taken != 0;
                if diverged {
                    warp.diverged_depth += 1;
                }
                let frame = if taken != 0 {
                    Frame {
                        stmts: then_body,
                        pc: 0,
                        mask: taken,
                        kind: FrameKind::Then {
                            else_body,
                            else_mask: not_taken,
                            diverged,
                        },
                    }
                } else {
                    Frame {
                        stmts: else_body,
                        pc: 0,
                        mask: not_taken,
                        kind: FrameKind::Else { diverged },
                    }
                };
                warp.stack.push(frame);
            }
            StmtKind::While { cond, body } => {
                let taken = self.eval_mask(blk, warp, active, cond, id)?;
                if taken != 0 {
                    let diverged = taken != active;
                    if diverged {
                        warp.diverged_depth += 1;
                    }
                    warp.stack.push(Frame {
                        stmts: body,
                        pc: 0,
                        mask: taken,
                        kind: FrameKind::Loop {
                            stmt: id,
                            cond,
                            diverged,
                        },
                    });
                }
            }
        }
        Ok(())
    }

    /// Leaves the innermost construct, reconverging or re-testing a loop.
    fn end_frame(&mut self, blk: &mut Block, warp: &mut Warp<'p>) -> Result<(), Halt> {
        let frame = warp.stack.pop().expect("frame to end");
        match frame.kind {
            FrameKind::Root => {
                let exited = frame.mask & warp.alive;
                warp.alive &= !exited;
                warp.state = WarpState::Done;
                return Ok(());
            }
            FrameKind::Then {
                else_body,
                else_mask,
                diverged,
            } => {
                let rest = else_mask & warp.alive;
                if rest != 0 && !else_body.is_empty() {
                    warp.stack.push(Frame {
                        stmts: else_body,
                        pc: 0,
                        mask: rest,
                        kind: FrameKind::Else { diverged },
                    });
                } else if diverged {
                    warp.diverged_depth -= 1;
                }
            }
            FrameKind::Else { diverged } => {
                if diverged {
                    warp.diverged_depth -= 1;
                }
            }
            FrameKind::Loop {
                stmt,
                cond,
                diverged,
            } => {
                let live = frame.mask & warp.alive;
                let taken = if live == 0 {
                    0
                } else {
                    self.charge(blk, warp, live)?;
                    self.eval_mask(blk, warp, live, cond, stmt)?
                };
                if taken != 0 {
                    let now_diverged = diverged || taken != live;
                    if now_diverged && !diverged {
                        warp.diverged_depth += 1;
                    }
                    warp.stack.push(Frame {
                        stmts: frame.stmts,
                        pc: 0,
                        mask: taken,
                        kind: FrameKind::Loop {
                            stmt,
                            cond,
                            diverged: now_diverged,
                        },
                    });
                } else if diverged {
                    warp.diverged_depth -= 1;
                }
            }
        }
        Ok(())
    }
}
