"""Hand-written NDP kernels for the built-in workloads.

Conventions shared with the device model:

* The scratchpad window starts at 0x10000000 in every kernel's address space
  and is private to a kernel instance (zero initialized).
* The kernel's declared ``.spm`` area occupies the start of the window;
  launch arguments are copied just past it (8-byte aligned).
* Body threads receive their mapped pool address in x1 and the byte offset
  from the pool base in x2.  Initializer/finalizer threads run one per thread
  slot and receive the unit-local slot index in x1 and a device-unique slot
  id in x2.
"""

from .assembler import assemble

SCRATCH = 0x10000000

BUILTIN_NAMES = ("vecadd", "reduce_sum", "histogram", "filter_eval",
                 "sls_gather", "kv_get", "kv_set", "short", "skew")


def builtin_kernel(name, **params):
    """Source text of a built-in kernel; raises KeyError for unknown names."""
    try:
        fn = _BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown builtin kernel {name!r}") from None
    return fn(**params)


def builtin_image(name, **params):
    return assemble(builtin_kernel(name, **params), name=name)


def _vecadd():
    # C = A + B over f32; pool region = A; args: [0]=B base, [8]=C base
    return f"""\
; elementwise f32 add, one 32 B chunk per thread
.regs int=6 fp=0 vec=3
.spm bytes=0
.init
.body
    vsetvli x0, x0, e32
    vle32 v0, (x1)
    li x3, {SCRATCH:#x}
    ld x4, 0(x3)
    add x4, x4, x2
    vle32 v1, (x4)
    vfadd v2, v0, v1
    ld x5, 8(x3)
    add x5, x5, x2
    vse32 v2, (x5)
    halt
.final
"""


def _reduce_sum():
    # 64-bit sum of an i32 array; pool = input array
    # spm: [0] unit partial sum; args: [8]=global result address
    return f"""\
; block-level reduction into a scratchpad accumulator, then one atomic
; add of each unit's partial sum into the global result
.regs int=7 fp=0 vec=2
.spm bytes=8
.init
    bne x1, x0, done
    li x3, {SCRATCH:#x}
    sd x0, 0(x3)
done:
    halt
.body
    vsetvli x0, x0, e32
    vle32 v0, (x1)
    vredsum v1, v0
    vmv.x.s x3, v1
    li x4, {SCRATCH:#x}
    amoadd.d (x4), x3
    halt
.final
    bne x1, x0, done
    li x4, {SCRATCH:#x}
    ld x5, 0(x4)
    ld x6, 8(x4)
    amoadd.d (x6), x5
done:
    halt
"""


def _histogram(bins=256):
    # values are bin indices in [0, bins); i32 counts
    # spm: bins*4 of per-unit counts; args: [0]=global counts, [8]=slots/unit
    args = SCRATCH + bins * 4
    return f"""\
; per-unit scratchpad histogram, merged into the global array by the
; finalizer (each slot thread strides over the bins)
.regs int=12 fp=0 vec=3
.spm bytes={bins * 4}
.init
.body
    vsetvli x0, x0, e32
    vle32 v0, (x1)
    li x3, 4
    vmul.vx v1, v0, x3
    li x4, {SCRATCH:#x}
    li x5, 1
    vmv.v.x v2, x5
    vamoaddei32 v2, (x4), v1
    halt
.final
    li x3, {args:#x}
    ld x4, 0(x3)
    ld x5, 8(x3)
    add x6, x1, x0
    li x7, {bins}
loop:
    bge x6, x7, done
    slli x8, x6, 2
    li x9, {SCRATCH:#x}
    add x9, x9, x8
    lw x10, 0(x9)
    add x11, x4, x8
    amoadd.w (x11), x10
    add x6, x6, x5
    jal x0, loop
done:
    halt
"""


def _filter_eval():
    # boolean mask (i32 0/1) of column[i] < threshold; pool = column
    # args: [0]=mask base, [8]=threshold
    return f"""\
; streaming predicate evaluation
.regs int=6 fp=0 vec=2
.spm bytes=0
.init
.body
    vsetvli x0, x0, e32
    vle32 v0, (x1)
    li x3, {SCRATCH:#x}
    ld x4, 0(x3)
    ld x5, 8(x3)
    vmslt.vx v1, v0, x5
    add x4, x4, x2
    vse32 v1, (x4)
    halt
.final
"""


def _sls_gather(lookups=80, dim=256):
    # out[r] = sum of `lookups` table rows (f32, `dim` dims); pool = output
    # args: [0]=table base, [8]=indices base (i32[requests, lookups])
    row_bytes = dim * 4
    shift = row_bytes.bit_length() - 1
    assert 1 << shift == row_bytes, "dim*4 must be a power of two"
    lbytes = lookups * 4
    return f"""\
; sparse gather-sum: each thread accumulates one 32 B slice of one output row
.regs int=13 fp=0 vec=2
.spm bytes=0
.init
.body
    vsetvli x0, x0, e32
    li x3, {SCRATCH:#x}
    ld x4, 0(x3)
    ld x5, 8(x3)
    srli x6, x2, {shift}
    li x7, {lbytes}
    mul x8, x6, x7
    add x5, x5, x8
    li x9, {row_bytes - 1}
    and x9, x2, x9
    add x4, x4, x9
    vmv.v.x v1, x0
    add x10, x7, x0
loop:
    lw x12, 0(x5)
    addi x5, x5, 4
    slli x12, x12, {shift}
    add x12, x4, x12
    vle32 v0, 0(x12)
    vfadd v1, v1, v0
    addi x10, x10, -4
    bne x10, x0, loop
    vse32 v1, (x1)
    halt
.final
"""


_WALK = """\
    li x3, {scratch:#x}
    ld x4, 0(x3)
    ld x5, 8(x3)
    ld x6, 16(x3)
    ld x7, 24(x3)
    ld x8, 0(x4)
walk:
    beq x8, x0, miss
    ld x9, 0(x8)
    bne x9, x5, next
    ld x9, 8(x8)
    bne x9, x6, next
    ld x9, 16(x8)
    bne x9, x7, next
"""


def _kv_get():
    # hash-bucket walk with 24 B key compare and linked-list traversal
    # args: [0]=bucket head addr, [8..32)=key; pool = 96 B result record
    # (status at +0, value copied to +32..96 by the two value threads)
    walk = _WALK.format(scratch=SCRATCH)
    return f"""\
; GET: chain walk, then status/value writeback split across pool threads
.regs int=12 fp=0 vec=1
.spm bytes=0
.init
.body
{walk}\
    bne x2, x0, copyval
    li x10, 1
    sd x10, 0(x1)
    halt
copyval:
    vsetvli x0, x0, e32
    add x11, x8, x2
    vle32 v0, 0(x11)
    vse32 v0, (x1)
    halt
next:
    ld x8, 96(x8)
    jal x0, walk
miss:
    bne x2, x0, done
    sd x0, 0(x1)
done:
    halt
.final
"""


def _kv_set():
    # args: [0]=bucket head addr, [8..32)=key, [32]=staged 64 B value addr
    walk = _WALK.format(scratch=SCRATCH)
    return f"""\
; SET: chain walk, in-place value update (keys are pre-populated)
.regs int=14 fp=0 vec=1
.spm bytes=0
.init
.body
{walk}\
    bne x2, x0, copyval
    li x10, 1
    sd x10, 0(x1)
    halt
copyval:
    vsetvli x0, x0, e32
    ld x12, 32(x3)
    addi x10, x2, -32
    add x11, x12, x10
    vle32 v0, 0(x11)
    add x13, x8, x2
    vse32 v0, (x13)
    halt
next:
    ld x8, 96(x8)
    jal x0, walk
miss:
    bne x2, x0, done
    sd x0, 0(x1)
done:
    halt
.final
"""


def _short():
    # minimal kernel for launch-path benchmarks: one store per thread
    return """\
.regs int=3 fp=0 vec=0
.spm bytes=0
.init
.body
    sd x2, 0(x1)
    halt
.final
"""


def _skew(long_iters=2000, short_iters=50):
    # one straggler per 64 consecutive chunks; exposes the cost of grouped
    # (threadblock-style) retirement vs per-thread retirement
    return f"""\
.regs int=6 fp=0 vec=0
.spm bytes=0
.init
.body
    srli x3, x2, 5
    li x4, 63
    and x3, x3, x4
    li x5, {short_iters}
    bne x3, x0, spin
    li x5, {long_iters}
spin:
    addi x5, x5, -1
    bne x5, x0, spin
    halt
.final
"""


_BUILTINS = {
    "vecadd": _vecadd,
    "reduce_sum": _reduce_sum,
    "histogram": _histogram,
    "filter_eval": _filter_eval,
    "sls_gather": _sls_gather,
    "kv_get": _kv_get,
    "kv_set": _kv_set,
    "short": _short,
    "skew": _skew,
}
