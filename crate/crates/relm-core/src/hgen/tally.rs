//! Instrumentation hooks for the execution backends.
//!
//! Kernels are generic over a `Tally`; the normal path uses [`NoTally`]
//! (every hook compiles to nothing) and the counting interpreter uses
//! [`CountTally`] to accumulate memory-operation and FLOP charges at the
//! exact program points where the cell programs touch memory.

/// Charge sink for one counting run.
pub(crate) trait Tally {
    /// `n` scalar loads from a tensor not already staged.
    fn read(&mut self, n: u64);
    /// `n` scalar stores to global output.
    fn write(&mut self, n: u64);
    /// `n` scalar adds/multiplies.
    fn flop(&mut self, n: u64);
    /// One cooperative staging of a slice of `len` scalars into block-local
    /// storage (counted once per block, shared by all its cells).
    fn staged_slice(&mut self, len: u64);
    /// Per-cell constant staged loads (bias and diagonal gate scalars that
    /// are staged once and reused across all time steps).
    fn staged_const(&mut self, n: u64);
    /// One dot-product tile phase executed.
    fn dot_phase(&mut self);
    /// A new block began executing.
    fn block_start(&mut self);
}

/// Zero-cost tally for production runs.
pub(crate) struct NoTally;

impl Tally for NoTally {
    #[inline(always)]
    fn read(&mut self, _: u64) {}
    #[inline(always)]
    fn write(&mut self, _: u64) {}
    #[inline(always)]
    fn flop(&mut self, _: u64) {}
    #[inline(always)]
    fn staged_slice(&mut self, _: u64) {}
    #[inline(always)]
    fn staged_const(&mut self, _: u64) {}
    #[inline(always)]
    fn dot_phase(&mut self) {}
    #[inline(always)]
    fn block_start(&mut self) {}
}

/// Accumulating tally used by the counting interpreter.
#[derive(Debug, Default, Clone)]
pub(crate) struct CountTally {
    pub reads: u64,
    pub writes: u64,
    pub flops: u64,
    pub staged_slice_scalars: u64,
    pub staged_consts: u64,
    pub dot_phases: u64,
    pub blocks: u64,
}

impl Tally for CountTally {
    #[inline]
    fn read(&mut self, n: u64) {
        self.reads += n;
    }
    #[inline]
    fn write(&mut self, n: u64) {
        self.writes += n;
    }
    #[inline]
    fn flop(&mut self, n: u64) {
        self.flops += n;
    }
    #[inline]
    fn staged_slice(&mut self, len: u64) {
        self.staged_slice_scalars += len;
    }
    #[inline]
    fn staged_const(&mut self, n: u64) {
        self.staged_consts += n;
    }
    #[inline]
    fn dot_phase(&mut self) {
        self.dot_phases += 1;
    }
    #[inline]
    fn block_start(&mut self) {
        self.blocks += 1;
    }
}
