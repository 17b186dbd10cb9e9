"""Instruction set of the NDP units.

A 64-bit scalar subset plus a 256-bit vector extension and atomics, defined
at assembly-text level (kernels are hand written; there is no binary
encoding).  ``exec_inst`` implements the architectural semantics once; the
timing model and the timing-free interpreter both call it, which keeps the
two functionally identical by construction.

Memory-class instructions do not touch memory themselves: ``exec_inst``
returns a request tuple that the caller applies (immediately in the
interpreter, through the memory hierarchy in the timing model).
"""

import struct

MASK64 = (1 << 64) - 1
_I32 = struct.Struct("<8i")
_F32 = struct.Struct("<8f")
_I64 = struct.Struct("<4q")
_F64 = struct.Struct("<4d")
_ONE_I64 = struct.Struct("<q")

SCRATCH_BASE = 0x10000000
SCRATCH_SPAN = 0x10000000  # window size reserved in the virtual layout


class KernelFault(Exception):
    """Architectural fault: bad register, misalignment, bad address class."""


class DecodeError(ValueError):
    pass


def s64(v):
    """Wrap to signed 64-bit (fast path for in-range values)."""
    if -9223372036854775808 <= v <= 9223372036854775807:
        return v
    return ((v + 9223372036854775808) & MASK64) - 9223372036854775808


def _s32(v):
    return ((v + 2147483648) & 0xFFFFFFFF) - 2147483648


# functional-unit classes (per sub-core)
S_ALU, S_SFU, S_LSU, V_ALU, V_SFU, V_LSU = range(6)
UNIT_CLASS_NAMES = ("scalar_alu", "scalar_sfu", "scalar_lsu",
                    "vector_alu", "vector_sfu", "vector_lsu")
UNITS_PER_CLASS = (2, 1, 1, 1, 1, 1)

# opcodes
(OP_ADD, OP_ADDI, OP_SUB, OP_MUL, OP_SLLI, OP_SRLI, OP_AND, OP_OR, OP_XOR,
 OP_LI, OP_LD, OP_LW, OP_SD, OP_SW, OP_BEQ, OP_BNE, OP_BLT, OP_BGE, OP_JAL,
 OP_FENCE, OP_HALT,
 OP_VSETVLI, OP_VLE32, OP_VLE64, OP_VSE32, OP_VSE64,
 OP_VADD, OP_VADD_VX, OP_VFADD, OP_VMUL, OP_VMUL_VX, OP_VFMACC,
 OP_VREDSUM, OP_VFREDSUM, OP_VMSEQ, OP_VMSEQ_VX, OP_VMSLT, OP_VMSLT_VX,
 OP_VLUXEI32, OP_VMV_V_X, OP_VMV_X_S,
 OP_AMOADD_W, OP_AMOADD_D, OP_AMOADD_W_V, OP_AMOADD_D_V) = range(45)
# OP_AMOADD_*_V are the vector indexed forms (vamoaddei32/vamoaddei64)

BRANCH_OPS = frozenset((OP_BEQ, OP_BNE, OP_BLT, OP_BGE, OP_JAL))
MEM_OPS = frozenset((OP_LD, OP_LW, OP_SD, OP_SW, OP_VLE32, OP_VLE64,
                     OP_VSE32, OP_VSE64, OP_VLUXEI32,
                     OP_AMOADD_W, OP_AMOADD_D, OP_AMOADD_W_V, OP_AMOADD_D_V))


class Inst:
    __slots__ = ("op", "cls", "lat", "rd", "rs1", "rs2", "imm", "sew",
                 "mnemonic", "label")

    def __init__(self, op, cls, lat, rd=0, rs1=0, rs2=0, imm=0, sew=0,
                 mnemonic="", label=None):
        self.op = op
        self.cls = cls
        self.lat = lat
        self.rd = rd
        self.rs1 = rs1
        self.rs2 = rs2
        self.imm = imm
        self.sew = sew
        self.mnemonic = mnemonic
        self.label = label


# mnemonic -> (opcode, unit class, latency cycles, operand format)
FORMATS = {
    "add":    (OP_ADD, S_ALU, 1, "rrr"),
    "addi":   (OP_ADDI, S_ALU, 1, "rri"),
    "sub":    (OP_SUB, S_ALU, 1, "rrr"),
    "mul":    (OP_MUL, S_ALU, 3, "rrr"),
    "slli":   (OP_SLLI, S_ALU, 1, "rri"),
    "srli":   (OP_SRLI, S_ALU, 1, "rri"),
    "and":    (OP_AND, S_ALU, 1, "rrr"),
    "or":     (OP_OR, S_ALU, 1, "rrr"),
    "xor":    (OP_XOR, S_ALU, 1, "rrr"),
    "li":     (OP_LI, S_ALU, 1, "ri"),
    "ld":     (OP_LD, S_LSU, 1, "load"),
    "lw":     (OP_LW, S_LSU, 1, "load"),
    "sd":     (OP_SD, S_LSU, 1, "store"),
    "sw":     (OP_SW, S_LSU, 1, "store"),
    "beq":    (OP_BEQ, S_ALU, 1, "branch"),
    "bne":    (OP_BNE, S_ALU, 1, "branch"),
    "blt":    (OP_BLT, S_ALU, 1, "branch"),
    "bge":    (OP_BGE, S_ALU, 1, "branch"),
    "jal":    (OP_JAL, S_ALU, 1, "jal"),
    "fence":  (OP_FENCE, S_ALU, 1, "none"),
    "halt":   (OP_HALT, S_ALU, 1, "none"),
    "vsetvli": (OP_VSETVLI, S_ALU, 1, "vset"),
    "vle32":  (OP_VLE32, V_LSU, 1, "vload"),
    "vle64":  (OP_VLE64, V_LSU, 1, "vload"),
    "vse32":  (OP_VSE32, V_LSU, 1, "vstore"),
    "vse64":  (OP_VSE64, V_LSU, 1, "vstore"),
    "vadd":   (OP_VADD, V_ALU, 2, "vvv"),
    "vadd.vx": (OP_VADD_VX, V_ALU, 2, "vvx"),
    "vfadd":  (OP_VFADD, V_ALU, 2, "vvv"),
    "vmul":   (OP_VMUL, V_ALU, 2, "vvv"),
    "vmul.vx": (OP_VMUL_VX, V_ALU, 2, "vvx"),
    "vfmacc": (OP_VFMACC, V_ALU, 4, "vvv"),
    "vredsum": (OP_VREDSUM, V_ALU, 4, "vred"),
    "vfredsum": (OP_VFREDSUM, V_ALU, 4, "vred"),
    "vmseq":  (OP_VMSEQ, V_ALU, 2, "vvv"),
    "vmseq.vx": (OP_VMSEQ_VX, V_ALU, 2, "vvx"),
    "vmslt":  (OP_VMSLT, V_ALU, 2, "vvv"),
    "vmslt.vx": (OP_VMSLT_VX, V_ALU, 2, "vvx"),
    "vluxei32": (OP_VLUXEI32, V_LSU, 1, "vgather"),
    "vmv.v.x": (OP_VMV_V_X, V_ALU, 2, "vsplat"),
    "vmv.x.s": (OP_VMV_X_S, V_ALU, 2, "vmvxs"),
    "amoadd.w": (OP_AMOADD_W, S_LSU, 1, "amo"),
    "amoadd.d": (OP_AMOADD_D, S_LSU, 1, "amo"),
    "vamoaddei32": (OP_AMOADD_W_V, V_LSU, 1, "vamo"),
    "vamoaddei64": (OP_AMOADD_D_V, V_LSU, 1, "vamo"),
}

_UNSUPPORTED = {"ecall", "ebreak", "csrrw", "csrrs", "csrrc", "mret", "sret",
                "wfi"}


def _reg(tok, kind):
    tok = tok.strip()
    if not tok or tok[0] != kind or not tok[1:].isdigit():
        raise DecodeError(f"expected {kind}-register, got {tok!r}")
    n = int(tok[1:])
    if n > 31:
        raise DecodeError(f"register index out of range: {tok}")
    return n


def _imm(tok):
    try:
        return int(tok.strip(), 0)
    except ValueError:
        raise DecodeError(f"bad immediate {tok!r}") from None


def _memop(tok):
    # "imm(xN)" or "(xN)"
    tok = tok.strip()
    if not tok.endswith(")") or "(" not in tok:
        raise DecodeError(f"expected mem operand imm(xN), got {tok!r}")
    off, reg = tok[:-1].split("(", 1)
    return (_imm(off) if off.strip() else 0), _reg(reg, "x")


def decode(text):
    """Decode one assembly line (without label definitions) into an Inst."""
    text = text.split(";", 1)[0].strip()
    if not text:
        raise DecodeError("empty instruction")
    parts = text.split(None, 1)
    mnem = parts[0].lower()
    rest = parts[1] if len(parts) > 1 else ""
    if mnem in _UNSUPPORTED:
        raise DecodeError(f"{mnem}: operating-system instructions are unsupported")
    if mnem not in FORMATS:
        raise DecodeError(f"unknown mnemonic {mnem!r}")
    op, cls, lat, fmt = FORMATS[mnem]
    ops = [o.strip() for o in rest.split(",")] if rest.strip() else []
    ins = Inst(op, cls, lat, mnemonic=mnem)

    def need(n):
        if len(ops) != n:
            raise DecodeError(f"{mnem}: expected {n} operands, got {len(ops)}")

    if fmt == "rrr":
        need(3)
        ins.rd, ins.rs1, ins.rs2 = _reg(ops[0], "x"), _reg(ops[1], "x"), _reg(ops[2], "x")
    elif fmt == "rri":
        need(3)
        ins.rd, ins.rs1, ins.imm = _reg(ops[0], "x"), _reg(ops[1], "x"), _imm(ops[2])
    elif fmt == "ri":
        need(2)
        ins.rd, ins.imm = _reg(ops[0], "x"), _imm(ops[1])
    elif fmt == "load":
        need(2)
        ins.rd = _reg(ops[0], "x")
        ins.imm, ins.rs1 = _memop(ops[1])
    elif fmt == "store":
        need(2)
        ins.rs2 = _reg(ops[0], "x")
        ins.imm, ins.rs1 = _memop(ops[1])
    elif fmt == "branch":
        need(3)
        ins.rs1, ins.rs2 = _reg(ops[0], "x"), _reg(ops[1], "x")
        ins.label = ops[2]
    elif fmt == "jal":
        if len(ops) == 1:
            ins.rd, ins.label = 0, ops[0]
        else:
            need(2)
            ins.rd, ins.label = _reg(ops[0], "x"), ops[1]
    elif fmt == "none":
        need(0)
    elif fmt == "vset":
        need(3)
        ins.rd, ins.rs1 = _reg(ops[0], "x"), _reg(ops[1], "x")
        tok = ops[2].lower()
        if tok not in ("e8", "e16", "e32", "e64"):
            raise DecodeError(f"vsetvli: bad element width {ops[2]!r}")
        ins.sew = int(tok[1:])
    elif fmt == "vload":
        need(2)
        ins.rd = _reg(ops[0], "v")
        ins.imm, ins.rs1 = _memop(ops[1])
        ins.sew = 64 if op == OP_VLE64 else 32
    elif fmt == "vstore":
        need(2)
        ins.rs2 = _reg(ops[0], "v")
        ins.imm, ins.rs1 = _memop(ops[1])
        ins.sew = 64 if op == OP_VSE64 else 32
    elif fmt == "vvv":
        need(3)
        ins.rd, ins.rs1, ins.rs2 = (_reg(ops[0], "v"), _reg(ops[1], "v"),
                                    _reg(ops[2], "v"))
    elif fmt == "vvx":
        need(3)
        ins.rd, ins.rs1, ins.rs2 = (_reg(ops[0], "v"), _reg(ops[1], "v"),
                                    _reg(ops[2], "x"))
    elif fmt == "vred":
        need(2)
        ins.rd, ins.rs1 = _reg(ops[0], "v"), _reg(ops[1], "v")
    elif fmt == "vgather":
        need(3)
        ins.rd = _reg(ops[0], "v")
        ins.imm, ins.rs1 = _memop(ops[1])
        ins.rs2 = _reg(ops[2], "v")
    elif fmt == "vsplat":
        need(2)
        ins.rd, ins.rs1 = _reg(ops[0], "v"), _reg(ops[1], "x")
    elif fmt == "vmvxs":
        need(2)
        ins.rd, ins.rs1 = _reg(ops[0], "x"), _reg(ops[1], "v")
    elif fmt == "amo":
        # "amoadd.d rd, rs2, (rs1)" or the short "amoadd.d (rs1), rs2"
        if len(ops) == 3:
            ins.rd, ins.rs2 = _reg(ops[0], "x"), _reg(ops[1], "x")
            _, ins.rs1 = _memop(ops[2])
        elif len(ops) == 2:
            ins.rd = 0
            _, ins.rs1 = _memop(ops[0])
            ins.rs2 = _reg(ops[1], "x")
        else:
            raise DecodeError(f"{mnem}: expected 2 or 3 operands")
    elif fmt == "vamo":
        # vamoaddei32 vsrc, (rs1), vidx : mem[rs1 + idx[k]] += src[k]
        need(3)
        ins.rd = _reg(ops[0], "v")
        _, ins.rs1 = _memop(ops[1])
        ins.rs2 = _reg(ops[2], "v")
        ins.sew = 64 if op == OP_AMOADD_D_V else 32
    else:  # pragma: no cover
        raise AssertionError(fmt)
    return ins


def disassemble(ins):
    """Textual form of a decoded instruction (labels render as offsets)."""
    m = ins.mnemonic
    _, _, _, fmt = FORMATS[m]
    if fmt == "rrr":
        return f"{m} x{ins.rd}, x{ins.rs1}, x{ins.rs2}"
    if fmt == "rri":
        return f"{m} x{ins.rd}, x{ins.rs1}, {ins.imm}"
    if fmt == "ri":
        return f"{m} x{ins.rd}, {ins.imm}"
    if fmt == "load":
        return f"{m} x{ins.rd}, {ins.imm}(x{ins.rs1})"
    if fmt == "store":
        return f"{m} x{ins.rs2}, {ins.imm}(x{ins.rs1})"
    if fmt == "branch":
        return f"{m} x{ins.rs1}, x{ins.rs2}, .+{ins.imm}"
    if fmt == "jal":
        return f"{m} x{ins.rd}, .+{ins.imm}"
    if fmt == "none":
        return m
    if fmt == "vset":
        return f"{m} x{ins.rd}, x{ins.rs1}, e{ins.sew}"
    if fmt in ("vload", "vgather") and fmt == "vload":
        return f"{m} v{ins.rd}, {ins.imm}(x{ins.rs1})"
    if fmt == "vstore":
        return f"{m} v{ins.rs2}, {ins.imm}(x{ins.rs1})"
    if fmt == "vvv":
        return f"{m} v{ins.rd}, v{ins.rs1}, v{ins.rs2}"
    if fmt == "vvx":
        return f"{m} v{ins.rd}, v{ins.rs1}, x{ins.rs2}"
    if fmt == "vred":
        return f"{m} v{ins.rd}, v{ins.rs1}"
    if fmt == "vgather":
        return f"{m} v{ins.rd}, (x{ins.rs1}), v{ins.rs2}"
    if fmt == "vsplat":
        return f"{m} v{ins.rd}, x{ins.rs1}"
    if fmt == "vmvxs":
        return f"{m} x{ins.rd}, v{ins.rs1}"
    if fmt == "amo":
        return f"{m} x{ins.rd}, x{ins.rs2}, (x{ins.rs1})"
    if fmt == "vamo":
        return f"{m} v{ins.rd}, (x{ins.rs1}), v{ins.rs2}"
    raise AssertionError(fmt)


def rename(logical, base, quota):
    """Physical register id for a logical id (additive renaming)."""
    if logical >= quota:
        raise KernelFault(f"register index {logical} >= quota {quota}")
    return base + logical


def vlmax(sew, vector_bits=256):
    return vector_bits // sew


def _pack_i(vals, sew):
    if sew == 32:
        return _I32.pack(*[_s32(v) for v in vals])
    return _I64.pack(*[s64(v) for v in vals])


def _unpack_i(raw, sew):
    return _I32.unpack(raw) if sew == 32 else _I64.unpack(raw)


def _unpack_f(raw, sew):
    return _F32.unpack(raw) if sew == 32 else _F64.unpack(raw)


def _pack_f(vals, sew):
    return _F32.pack(*vals) if sew == 32 else _F64.pack(*vals)


def exec_inst(th, ins):
    """Apply one instruction to thread state.

    Returns None for a fully retired instruction, "halt" at kernel end, or a
    memory-request tuple the caller must perform:
      ("ld",  addr, size, rd_signed)   scalar load
      ("st",  addr, data)              scalar store
      ("vld", addr, nbytes, vd)        vector load (contiguous)
      ("vst", addr, data)              vector store
      ("vgather", addrs, width, vd)    indexed vector load
      ("amo", addr, width, addend, rd) scalar atomic add, returns old value
      ("vamo", [(addr, addend, width), ...])  vector indexed atomic add

    th.pc has already advanced when a request is returned.
    """
    op = ins.op
    x = th.xr
    xb = th.xb
    if op == OP_VLE32 or op == OP_VLE64:
        addr = x[xb + ins.rs1] + ins.imm
        width = ins.sew >> 3
        if addr % width:
            raise KernelFault(f"misaligned vector load at {addr:#x}")
        th.pc += 1
        return ("vld", addr, th.vl * width, th.vb + ins.rd)
    if op == OP_VSE32 or op == OP_VSE64:
        addr = x[xb + ins.rs1] + ins.imm
        width = ins.sew >> 3
        if addr % width:
            raise KernelFault(f"misaligned vector store at {addr:#x}")
        th.pc += 1
        return ("vst", addr, bytes(th.vr[th.vb + ins.rs2][:th.vl * width]))
    if op == OP_ADD:
        if ins.rd:
            x[xb + ins.rd] = s64(x[xb + ins.rs1] + x[xb + ins.rs2])
        th.pc += 1
        return None
    if op == OP_ADDI:
        if ins.rd:
            x[xb + ins.rd] = s64(x[xb + ins.rs1] + ins.imm)
        th.pc += 1
        return None
    if op == OP_LD or op == OP_LW:
        addr = x[xb + ins.rs1] + ins.imm
        th.pc += 1
        return ("ld", addr, 8 if op == OP_LD else 4, ins.rd)
    if op == OP_SD:
        addr = x[xb + ins.rs1] + ins.imm
        th.pc += 1
        return ("st", addr, _ONE_I64.pack(s64(x[xb + ins.rs2])))
    if op == OP_SW:
        addr = x[xb + ins.rs1] + ins.imm
        th.pc += 1
        return ("st", addr, struct.pack("<i", _s32(x[xb + ins.rs2])))
    if op == OP_LI:
        if ins.rd:
            x[xb + ins.rd] = s64(ins.imm)
        th.pc += 1
        return None
    if op == OP_BEQ:
        th.pc = ins.imm if x[xb + ins.rs1] == x[xb + ins.rs2] else th.pc + 1
        return None
    if op == OP_BNE:
        th.pc = ins.imm if x[xb + ins.rs1] != x[xb + ins.rs2] else th.pc + 1
        return None
    if op == OP_BLT:
        th.pc = ins.imm if x[xb + ins.rs1] < x[xb + ins.rs2] else th.pc + 1
        return None
    if op == OP_BGE:
        th.pc = ins.imm if x[xb + ins.rs1] >= x[xb + ins.rs2] else th.pc + 1
        return None
    if op == OP_HALT:
        return "halt"
    if op == OP_VSETVLI:
        cap = vlmax(ins.sew, th.vbits)
        avl = x[xb + ins.rs1] if ins.rs1 else cap
        th.sew = ins.sew
        th.vl = cap if avl >= cap else (avl if avl > 0 else 0)
        if ins.rd:
            x[xb + ins.rd] = th.vl
        th.pc += 1
        return None
    if op == OP_VADD or op == OP_VFADD or op == OP_VMUL or op == OP_VFMACC:
        v = th.vr
        a = v[th.vb + ins.rs1]
        b = v[th.vb + ins.rs2]
        sew = th.sew
        if op == OP_VADD:
            res = _pack_i([p + q for p, q in zip(_unpack_i(a, sew), _unpack_i(b, sew))], sew)
        elif op == OP_VFADD:
            res = _pack_f([p + q for p, q in zip(_unpack_f(a, sew), _unpack_f(b, sew))], sew)
        elif op == OP_VMUL:
            res = _pack_i([p * q for p, q in zip(_unpack_i(a, sew), _unpack_i(b, sew))], sew)
        else:  # vfmacc: vd += vs1 * vs2
            acc = _unpack_f(v[th.vb + ins.rd], sew)
            res = _pack_f([c + p * q for c, p, q in
                           zip(acc, _unpack_f(a, sew), _unpack_f(b, sew))], sew)
        th.vr[th.vb + ins.rd] = _merge_tail(th, ins.rd, res)
        th.pc += 1
        return None
    if op == OP_VADD_VX or op == OP_VMUL_VX:
        sew = th.sew
        sc = x[xb + ins.rs2]
        vals = _unpack_i(th.vr[th.vb + ins.rs1], sew)
        if op == OP_VADD_VX:
            res = _pack_i([p + sc for p in vals], sew)
        else:
            res = _pack_i([p * sc for p in vals], sew)
        th.vr[th.vb + ins.rd] = _merge_tail(th, ins.rd, res)
        th.pc += 1
        return None
    if op == OP_VREDSUM or op == OP_VFREDSUM:
        sew = th.sew
        raw = th.vr[th.vb + ins.rs1]
        if op == OP_VREDSUM:
            total = s64(sum(_unpack_i(raw, sew)[:th.vl]))
            res = _ONE_I64.pack(total)
        else:
            res = struct.pack("<d", sum(_unpack_f(raw, sew)[:th.vl]))
        old = th.vr[th.vb + ins.rd]
        th.vr[th.vb + ins.rd] = res + old[8:]  # 64-bit result in element 0
        th.pc += 1
        return None
    if op == OP_VMSEQ or op == OP_VMSLT or op == OP_VMSEQ_VX or op == OP_VMSLT_VX:
        sew = th.sew
        a = _unpack_i(th.vr[th.vb + ins.rs1], sew)
        if op in (OP_VMSEQ_VX, OP_VMSLT_VX):
            b = [x[xb + ins.rs2]] * len(a)
        else:
            b = _unpack_i(th.vr[th.vb + ins.rs2], sew)
        if op in (OP_VMSEQ, OP_VMSEQ_VX):
            res = _pack_i([1 if p == q else 0 for p, q in zip(a, b)], sew)
        else:
            res = _pack_i([1 if p < q else 0 for p, q in zip(a, b)], sew)
        th.vr[th.vb + ins.rd] = _merge_tail(th, ins.rd, res)
        th.pc += 1
        return None
    if op == OP_VMV_V_X:
        sew = th.sew
        res = _pack_i([x[xb + ins.rs1]] * vlmax(sew, th.vbits), sew)
        th.vr[th.vb + ins.rd] = _merge_tail(th, ins.rd, res)
        th.pc += 1
        return None
    if op == OP_VMV_X_S:
        if ins.rd:
            x[xb + ins.rd] = _ONE_I64.unpack_from(th.vr[th.vb + ins.rs1])[0]
        th.pc += 1
        return None
    if op == OP_VLUXEI32:
        base = x[xb + ins.rs1]
        idx = _I32.unpack(th.vr[th.vb + ins.rs2])
        width = th.sew >> 3
        addrs = [base + (i & 0xFFFFFFFF) for i in idx[:th.vl]]
        th.pc += 1
        return ("vgather", addrs, width, th.vb + ins.rd)
    if op == OP_AMOADD_W or op == OP_AMOADD_D:
        addr = x[xb + ins.rs1]
        width = 8 if op == OP_AMOADD_D else 4
        if addr % width:
            raise KernelFault(f"misaligned amo at {addr:#x}")
        th.pc += 1
        return ("amo", addr, width, x[xb + ins.rs2], ins.rd)
    if op == OP_AMOADD_W_V or op == OP_AMOADD_D_V:
        base = x[xb + ins.rs1]
        width = ins.sew >> 3
        idx = _I32.unpack(th.vr[th.vb + ins.rs2])
        vals = _unpack_i(th.vr[th.vb + ins.rd], th.sew)
        pairs = [(base + (idx[k] & 0xFFFFFFFF), vals[k], width)
                 for k in range(th.vl)]
        th.pc += 1
        return ("vamo", pairs)
    if op == OP_SUB:
        if ins.rd:
            x[xb + ins.rd] = s64(x[xb + ins.rs1] - x[xb + ins.rs2])
        th.pc += 1
        return None
    if op == OP_MUL:
        if ins.rd:
            x[xb + ins.rd] = s64(x[xb + ins.rs1] * x[xb + ins.rs2])
        th.pc += 1
        return None
    if op == OP_SLLI:
        if ins.rd:
            x[xb + ins.rd] = s64(x[xb + ins.rs1] << (ins.imm & 63))
        th.pc += 1
        return None
    if op == OP_SRLI:
        if ins.rd:
            x[xb + ins.rd] = (x[xb + ins.rs1] & MASK64) >> (ins.imm & 63)
        th.pc += 1
        return None
    if op == OP_AND:
        if ins.rd:
            x[xb + ins.rd] = x[xb + ins.rs1] & x[xb + ins.rs2]
        th.pc += 1
        return None
    if op == OP_OR:
        if ins.rd:
            x[xb + ins.rd] = x[xb + ins.rs1] | x[xb + ins.rs2]
        th.pc += 1
        return None
    if op == OP_XOR:
        if ins.rd:
            x[xb + ins.rd] = x[xb + ins.rs1] ^ x[xb + ins.rs2]
        th.pc += 1
        return None
    if op == OP_JAL:
        if ins.rd:
            x[xb + ins.rd] = th.pc + 1
        th.pc = ins.imm
        return None
    if op == OP_FENCE:
        th.pc += 1
        return None
    raise AssertionError(f"unhandled opcode {op}")  # pragma: no cover


def _merge_tail(th, rd_logical, res):
    """Tail-undisturbed writmask: keep old bytes past vl*sew."""
    live = th.vl * (th.sew >> 3)
    if live >= 32:
        return res
    old = th.vr[th.vb + rd_logical]
    return res[:live] + old[live:]


def apply_load(th, rd, data, signed_size):
    """Write scalar load data into the destination register."""
    if rd == 0:
        return
    if signed_size == 8:
        val = _ONE_I64.unpack(data)[0]
    else:
        val = struct.unpack("<i", data)[0]
    th.xr[th.xb + rd] = val


def apply_vload(th, vd_phys, data):
    old = th.vr[vd_phys]
    if len(data) >= 32:
        th.vr[vd_phys] = bytes(data[:32])
    else:
        th.vr[vd_phys] = bytes(data) + old[len(data):]


def apply_amo_result(th, rd, old_value):
    if rd:
        th.xr[th.xb + rd] = s64(old_value)
