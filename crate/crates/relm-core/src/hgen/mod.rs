//! Hidden-state tensor construction: sequential, flat-parallel, and
//! tiled-parallel backends.
//!
//! All three backends produce the same `H` (`rows x M x Q`): cell `(i, j)` is
//! the result of iterating the architecture's step function over `t = 1..=Q`
//! with zero initial history. The sequential backend is the correctness
//! oracle; the flat-parallel backend assigns each `(i, j)` cell to a work
//! item in a `BS x BS` block grid; the tiled backend additionally processes
//! each block in cooperative tile phases that stage weight/input slices into
//! block-local buffers and keep the cell history in block-local storage, so
//! history reads never touch the global tensor.
//!
//! Floating-point accumulation order is fixed (ascending input index,
//! ascending lag, ascending tile) in every backend, so backends agree
//! elementwise to strict tolerance and a fixed seed gives bit-identical
//! output for any worker count.

mod kernels;
pub(crate) mod tally;
mod tiled;

use std::ops::Range;
use std::sync::atomic::{AtomicU8, Ordering};
use std::time::{Duration, Instant};

use crate::arch::{ArchKind, ArchitectureSpec, CellContext, TeacherSignal, WeightSet};
use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub(crate) use tally::{CountTally, NoTally, Tally};

/// Which execution backend builds `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Sequential,
    BasicParallel,
    TiledParallel,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Sequential => "seq",
            Backend::BasicParallel => "basic",
            Backend::TiledParallel => "tiled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "seq" | "sequential" => Ok(Backend::Sequential),
            "basic" => Ok(Backend::BasicParallel),
            "tiled" | "opt" => Ok(Backend::TiledParallel),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

/// Execution parameters for the parallel backends.
#[derive(Debug, Clone)]
pub struct ExecConfig {
    pub backend: Backend,
    /// Side of the square cell block; the tile width equals it.
    pub block_size: usize,
    /// Worker threads; `None` uses all available.
    pub workers: Option<usize>,
    /// Verify with a shadow tensor that every cell is written exactly once.
    pub write_check: bool,
    /// Accumulate time spent in staging loops (tiled backend only).
    pub time_staging: bool,
}

impl ExecConfig {
    pub fn sequential() -> Self {
        Self {
            backend: Backend::Sequential,
            block_size: 16,
            workers: None,
            write_check: false,
            time_staging: false,
        }
    }

    pub fn basic(block_size: usize) -> Self {
        Self {
            backend: Backend::BasicParallel,
            ..Self::sequential()
        }
        .with_block_size(block_size)
    }

    pub fn tiled(block_size: usize) -> Self {
        Self {
            backend: Backend::TiledParallel,
            ..Self::sequential()
        }
        .with_block_size(block_size)
    }

    pub fn with_block_size(mut self, bs: usize) -> Self {
        self.block_size = bs;
        self
    }

    pub fn with_workers(mut self, w: Option<usize>) -> Self {
        self.workers = w;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.backend != Backend::Sequential && !matches!(self.block_size, 16 | 32) {
            return Err(Error::Config(format!(
                "block size must be 16 or 32, got {}",
                self.block_size
            )));
        }
        if let Some(0) = self.workers {
            return Err(Error::Config("worker count must be positive".into()));
        }
        Ok(())
    }
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self::sequential()
    }
}

/// The hidden activation tensor `rows x M x Q`.
#[derive(Debug, Clone)]
pub struct HiddenTensor {
    pub h: DenseTensor,
}

impl HiddenTensor {
    pub fn rows(&self) -> usize {
        self.h.dims()[0]
    }

    pub fn m(&self) -> usize {
        self.h.dims()[1]
    }

    pub fn q(&self) -> usize {
        self.h.dims()[2]
    }

    /// The final time slice `H(Q)` as an `n x M` matrix; this feeds the
    /// least-squares solve.
    pub fn final_slice(&self) -> DenseTensor {
        let (n, m, q) = (self.rows(), self.m(), self.q());
        let mut out = DenseTensor::zeros(&[n, m]).expect("nonzero dims");
        for i in 0..n {
            for j in 0..m {
                out.set2(i, j, self.h.get3(i, j, q - 1));
            }
        }
        out
    }
}

/// Wall-clock breakdown of one `H` construction.
#[derive(Debug, Clone, Copy, Default)]
pub struct HgenTiming {
    pub total: Duration,
    /// Time spent staging slices into block-local buffers (tiled backend,
    /// only measured when `ExecConfig::time_staging` is set).
    pub staging: Duration,
}

/// Validated, borrow-packed view of everything a kernel needs.
pub(crate) struct Inputs<'a> {
    pub x: &'a DenseTensor,
    pub y: &'a [f64],
    pub spec: &'a ArchitectureSpec,
    pub weights: &'a WeightSet,
    pub rows: Range<usize>,
    pub m: usize,
    pub q: usize,
    pub s: usize,
}

impl<'a> Inputs<'a> {
    fn new(
        ds: &'a TimeSeriesDataset,
        spec: &'a ArchitectureSpec,
        weights: &'a WeightSet,
        rows: Range<usize>,
    ) -> Result<Self> {
        if ds.s != spec.s || ds.q != spec.q {
            return Err(Error::Dimension(format!(
                "dataset has S={}, Q={} but spec wants S={}, Q={}",
                ds.s, ds.q, spec.s, spec.q
            )));
        }
        if rows.end > ds.n() || rows.start >= rows.end {
            return Err(Error::Dimension(format!(
                "row range {rows:?} out of bounds for n={}",
                ds.n()
            )));
        }
        check_weight_shapes(spec, weights)?;
        Ok(Self {
            x: &ds.x,
            y: ds.y.data(),
            spec,
            weights,
            rows,
            m: spec.m,
            q: spec.q,
            s: spec.s,
        })
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &'a [f64] {
        self.x.row(i)
    }

    #[inline]
    pub fn teacher(&self, i: usize) -> TeacherSignal<'a> {
        TeacherSignal {
            x_row: self.x.row(i),
            y_i: self.y[i],
            q: self.q,
        }
    }
}

fn check_weight_shapes(spec: &ArchitectureSpec, w: &WeightSet) -> Result<()> {
    let (m, q, s) = (spec.m, spec.q, spec.s);
    let bad = |what: &str| Err(Error::Dimension(format!("weight shape mismatch: {what}")));
    if w.w.dims() != [s, m] {
        return bad("W");
    }
    if w.b.dims() != [m] {
        return bad("b");
    }
    match spec.kind {
        ArchKind::Elman | ArchKind::Jordan => match &w.alpha {
            Some(a) if a.dims() == [m, q] => {}
            _ => return bad("alpha (M x Q)"),
        },
        ArchKind::FullyConnected => match &w.alpha {
            Some(a) if a.dims() == [m, m, q] => {}
            _ => return bad("alpha (M x M x Q)"),
        },
        ArchKind::Narmax => {
            if spec.f_len > 0
                && !matches!(&w.w_out_fb, Some(t) if t.dims() == [m, spec.f_len])
            {
                return bad("output feedback weights (M x F)");
            }
            if spec.r_len > 0
                && !matches!(&w.w_err_fb, Some(t) if t.dims() == [m, spec.r_len])
            {
                return bad("error feedback weights (M x R)");
            }
        }
        ArchKind::Lstm => match &w.lstm {
            Some(g) if g.iter().all(|g| {
                g.w.dims() == [s, m] && g.u.dims() == [m] && g.b.dims() == [m]
            }) => {}
            _ => return bad("lstm gate triples"),
        },
        ArchKind::Gru => match &w.gru {
            Some(g) if g.iter().all(|g| {
                g.w.dims() == [s, m] && g.u.dims() == [m] && g.b.dims() == [m]
            }) => {}
            _ => return bad("gru gate triples"),
        },
    }
    Ok(())
}

/// Shared-output handle for the parallel backends. Each work item writes only
/// its own `(i, j)` line of `H` and reads only slots it wrote itself, so the
/// raw-pointer sharing is race-free by construction; the optional shadow
/// counters verify the write discipline.
pub(crate) struct SharedH<'a> {
    ptr: *mut f64,
    len: usize,
    shadow: Option<&'a [AtomicU8]>,
}

unsafe impl Send for SharedH<'_> {}
unsafe impl Sync for SharedH<'_> {}

impl<'a> SharedH<'a> {
    fn new(data: &mut [f64], shadow: Option<&'a [AtomicU8]>) -> Self {
        Self {
            ptr: data.as_mut_ptr(),
            len: data.len(),
            shadow,
        }
    }

    #[inline]
    pub fn write(&self, idx: usize, v: f64) {
        debug_assert!(idx < self.len);
        unsafe { *self.ptr.add(idx) = v };
        if let Some(s) = self.shadow {
            s[idx].fetch_add(1, Ordering::Relaxed);
        }
    }

    #[inline]
    pub fn read(&self, idx: usize) -> f64 {
        debug_assert!(idx < self.len);
        unsafe { *self.ptr.add(idx) }
    }
}

/// Block grid over a `rows x cols` cell space.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockGrid {
    pub n_rows: usize,
    pub n_cols: usize,
    pub bs: usize,
}

impl BlockGrid {
    pub fn new(n_rows: usize, n_cols: usize, bs: usize) -> Self {
        Self { n_rows, n_cols, bs }
    }

    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let br = self.n_rows.div_ceil(self.bs);
        let bc = self.n_cols.div_ceil(self.bs);
        let mut v = Vec::with_capacity(br * bc);
        for bi in 0..br {
            for bj in 0..bc {
                v.push((bi * self.bs, bj * self.bs));
            }
        }
        v
    }

    /// Extent of the (possibly partial) block starting at `(r0, c0)`.
    pub fn extent(&self, r0: usize, c0: usize) -> (usize, usize) {
        (
            self.bs.min(self.n_rows - r0),
            self.bs.min(self.n_cols - c0),
        )
    }
}

/// Sequential reference: triple loop sample -> neuron -> time applying the
/// architecture's step function. This is the correctness oracle for the
/// parallel backends.
pub fn compute_h_sequential(
    ds: &TimeSeriesDataset,
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    rows: Range<usize>,
) -> Result<HiddenTensor> {
    let inp = Inputs::new(ds, spec, weights, rows)?;
    let (m, q) = (inp.m, inp.q);
    let n_local = inp.rows.len();
    let mut h = DenseTensor::zeros(&[n_local, m, q])?;
    let mut hist = vec![0.0; q];
    let uses_teacher = spec.kind.uses_teacher();

    for (local, i) in inp.rows.clone().enumerate() {
        let x_row = inp.x_row(i);
        let teacher = uses_teacher.then(|| inp.teacher(i));
        for j in 0..m {
            let mut c_prev = 0.0;
            for t in 1..=q {
                let ctx = CellContext {
                    x_row,
                    neuron: j,
                    t,
                    q,
                    hist: &hist[..t - 1],
                    teacher,
                    c_prev,
                };
                let v = match spec.kind {
                    ArchKind::Elman => crate::arch::step_elman(&ctx, spec, weights),
                    ArchKind::Jordan => crate::arch::step_jordan(&ctx, spec, weights),
                    ArchKind::Narmax => crate::arch::step_narmax(&ctx, spec, weights),
                    ArchKind::FullyConnected => {
                        crate::arch::step_fully_connected(&ctx, spec, weights)
                    }
                    ArchKind::Lstm => {
                        let (hv, cv) = crate::arch::step_lstm(&ctx, spec, weights);
                        c_prev = cv;
                        hv
                    }
                    ArchKind::Gru => crate::arch::step_gru(&ctx, spec, weights),
                };
                hist[t - 1] = v;
                h.set3(local, j, t - 1, v);
            }
        }
    }
    Ok(HiddenTensor { h })
}

/// Flat-parallel backend: the per-cell program executed over a parallel
/// index space partitioned into `BS x BS` blocks.
pub fn compute_h_basic_parallel(
    ds: &TimeSeriesDataset,
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    cfg: &ExecConfig,
    rows: Range<usize>,
) -> Result<HiddenTensor> {
    compute_h_parallel(ds, spec, weights, cfg, rows, Backend::BasicParallel).map(|(h, _)| h)
}

/// Tiled-parallel backend: cooperative tile phases over staged slices with
/// block-local history.
pub fn compute_h_tiled_parallel(
    ds: &TimeSeriesDataset,
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    cfg: &ExecConfig,
    rows: Range<usize>,
) -> Result<HiddenTensor> {
    compute_h_parallel(ds, spec, weights, cfg, rows, Backend::TiledParallel).map(|(h, _)| h)
}

/// Backend dispatch on `cfg.backend`.
pub fn compute_h(
    ds: &TimeSeriesDataset,
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    cfg: &ExecConfig,
    rows: Range<usize>,
) -> Result<HiddenTensor> {
    compute_h_timed(ds, spec, weights, cfg, rows).map(|(h, _)| h)
}

/// As [`compute_h`], also returning the wall-clock breakdown.
pub fn compute_h_timed(
    ds: &TimeSeriesDataset,
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    cfg: &ExecConfig,
    rows: Range<usize>,
) -> Result<(HiddenTensor, HgenTiming)> {
    match cfg.backend {
        Backend::Sequential => {
            let start = Instant::now();
            let h = compute_h_sequential(ds, spec, weights, rows)?;
            Ok((
                h,
                HgenTiming {
                    total: start.elapsed(),
                    staging: Duration::ZERO,
                },
            ))
        }
        _ => compute_h_parallel(ds, spec, weights, cfg, rows, cfg.backend),
    }
}

fn compute_h_parallel(
    ds: &TimeSeriesDataset,
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    cfg: &ExecConfig,
    rows: Range<usize>,
    backend: Backend,
) -> Result<(HiddenTensor, HgenTiming)> {
    cfg.validate()?;
    let inp = Inputs::new(ds, spec, weights, rows)?;
    let start = Instant::now();
    let n_local = inp.rows.len();
    let (m, q) = (inp.m, inp.q);
    let mut h = DenseTensor::zeros(&[n_local, m, q])?;

    let shadow: Option<Vec<AtomicU8>> = cfg
        .write_check
        .then(|| (0..h.len()).map(|_| AtomicU8::new(0)).collect());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::ExecutionEnvironment(format!("worker pool: {e}")))?;

    let grid = BlockGrid::new(n_local, m, cfg.block_size);
    let blocks = grid.blocks();
    let shared = SharedH::new(h.data_mut(), shadow.as_deref());
    let staging_nanos = std::sync::atomic::AtomicU64::new(0);

    pool.install(|| {
        use rayon::prelude::*;
        match backend {
            Backend::BasicParallel => {
                blocks.par_iter().for_each(|&(r0, c0)| {
                    let (br, bc) = grid.extent(r0, c0);
                    kernels::run_block_basic(&inp, &shared, r0, c0, br, bc, &mut NoTally);
                });
            }
            Backend::TiledParallel => {
                // Block-local scratch is reused across the blocks a worker
                // owns; its history/accumulator regions are reset per block.
                blocks.par_iter().for_each_init(
                    || {
                        let mut s = tiled::BlockScratch::new(spec, cfg.block_size);
                        s.time_staging = cfg.time_staging;
                        s
                    },
                    |scratch, &(r0, c0)| {
                        let (br, bc) = grid.extent(r0, c0);
                        tiled::run_block_tiled(
                            &inp, &shared, r0, c0, br, bc, scratch, &mut NoTally,
                        );
                        if cfg.time_staging {
                            staging_nanos
                                .fetch_add(std::mem::take(&mut scratch.staging_nanos), Ordering::Relaxed);
                        }
                    },
                );
            }
            Backend::Sequential => unreachable!(),
        }
    });

    if let Some(shadow) = &shadow {
        for (idx, c) in shadow.iter().enumerate() {
            let count = c.load(Ordering::Relaxed);
            assert_eq!(
                count, 1,
                "write discipline violated: H slot {idx} written {count} times"
            );
        }
    }

    h.assert_finite("hidden tensor")?;
    let timing = HgenTiming {
        total: start.elapsed(),
        staging: Duration::from_nanos(staging_nanos.load(Ordering::Relaxed)),
    };
    Ok((HiddenTensor { h }, timing))
}

/// Run the counting interpreter over all cells with the given backend
/// (single-threaded, deterministic block order). Returns the aggregate tally
/// and the number of cells.
pub(crate) fn count_run(
    ds: &TimeSeriesDataset,
    spec: &ArchitectureSpec,
    weights: &WeightSet,
    backend: Backend,
    block_size: usize,
) -> Result<(CountTally, u64)> {
    if backend == Backend::Sequential {
        return Err(Error::Config(
            "counting interprets the parallel cell programs; use basic or tiled".into(),
        ));
    }
    if !matches!(block_size, 16 | 32) {
        return Err(Error::Config(format!(
            "block size must be 16 or 32, got {block_size}"
        )));
    }
    let rows = 0..ds.n();
    let inp = Inputs::new(ds, spec, weights, rows)?;
    let n_local = inp.rows.len();
    let (m, q) = (inp.m, inp.q);
    let mut h = DenseTensor::zeros(&[n_local, m, q])?;
    let mut tally = CountTally::default();
    let grid = BlockGrid::new(n_local, m, block_size);
    let shared = SharedH::new(h.data_mut(), None);
    for (r0, c0) in grid.blocks() {
        let (br, bc) = grid.extent(r0, c0);
        tally.block_start();
        match backend {
            Backend::BasicParallel => {
                kernels::run_block_basic(&inp, &shared, r0, c0, br, bc, &mut tally)
            }
            Backend::TiledParallel => {
                let mut scratch = tiled::BlockScratch::new(spec, block_size);
                tiled::run_block_tiled(&inp, &shared, r0, c0, br, bc, &mut scratch, &mut tally);
            }
            Backend::Sequential => unreachable!(),
        }
    }
    Ok((tally, (n_local * m) as u64))
}

/// Closed-form staged-read count per cell for the tiled backend (context-
/// recurrent architecture only): `ceil((2SQ + Q(Q+1)/2) / TW^2) + 1`.
/// Fractional tile loads round up once over the whole sum; `TW = 1` is the
/// degenerate "tiling disabled" case where every scalar is its own slice.
pub fn staged_read_count(spec: &ArchitectureSpec, tile_width: usize) -> Result<u64> {
    if spec.kind != ArchKind::Elman {
        return Err(Error::NotAvailable(
            "closed-form staged read count is defined for the Elman form only",
        ));
    }
    if tile_width == 0 {
        return Err(Error::Config("tile width must be >= 1".into()));
    }
    let s = spec.s as u64;
    let q = spec.q as u64;
    let tw2 = (tile_width * tile_width) as u64;
    let slice_scalars = 2 * s * q + q * (q + 1) / 2;
    Ok(slice_scalars.div_ceil(tw2) + 1)
}
