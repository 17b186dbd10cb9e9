"""Two-pass assembler for NDP kernels.

Kernel source is UTF-8 text, one instruction per line, ``;`` comments, with
directives:

    .regs int=N fp=M vec=K      declared register usage (required)
    .spm bytes=S                scratchpad bytes owned by the kernel
    .init / .body / .final      section markers (.body may repeat)

Exactly one initializer and one finalizer; zero or more bodies.  Each body
runs for every pool chunk with a device-wide barrier between bodies.  Labels
are local to their section and resolve to instruction indices.
"""

from . import isa
from .isa import DecodeError, FORMATS


class AssemblyError(ValueError):
    pass


# operand register kinds per format, used by the static quota check
_REG_KINDS = {
    "rrr": (("rd", "x"), ("rs1", "x"), ("rs2", "x")),
    "rri": (("rd", "x"), ("rs1", "x")),
    "ri": (("rd", "x"),),
    "load": (("rd", "x"), ("rs1", "x")),
    "store": (("rs2", "x"), ("rs1", "x")),
    "branch": (("rs1", "x"), ("rs2", "x")),
    "jal": (("rd", "x"),),
    "none": (),
    "vset": (("rd", "x"), ("rs1", "x")),
    "vload": (("rd", "v"), ("rs1", "x")),
    "vstore": (("rs2", "v"), ("rs1", "x")),
    "vvv": (("rd", "v"), ("rs1", "v"), ("rs2", "v")),
    "vvx": (("rd", "v"), ("rs1", "v"), ("rs2", "x")),
    "vred": (("rd", "v"), ("rs1", "v")),
    "vgather": (("rd", "v"), ("rs1", "x"), ("rs2", "v")),
    "vsplat": (("rd", "v"), ("rs1", "x")),
    "vmvxs": (("rd", "x"), ("rs1", "v")),
    "amo": (("rd", "x"), ("rs1", "x"), ("rs2", "x")),
    "vamo": (("rd", "v"), ("rs1", "x"), ("rs2", "v")),
}


class KernelImage:
    """Assembled kernel: one instruction vector per section plus metadata."""

    def __init__(self, init, bodies, final, n_int, n_fp, n_vec, spm_bytes,
                 name=""):
        self.init = init
        self.bodies = bodies
        self.final = final
        self.n_int = n_int
        self.n_fp = n_fp
        self.n_vec = n_vec
        self.spm_bytes = spm_bytes
        self.name = name

    def sections(self):
        out = [("init", self.init)]
        out += [(f"body{i}", b) for i, b in enumerate(self.bodies)]
        out.append(("final", self.final))
        return out

    @property
    def code_words(self):
        return len(self.init) + sum(len(b) for b in self.bodies) + len(self.final)


def _parse_kv(parts, lineno, allowed):
    out = {}
    for part in parts:
        if "=" not in part:
            raise AssemblyError(f"line {lineno}: expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        if k not in allowed:
            raise AssemblyError(f"line {lineno}: unknown key {k!r}")
        try:
            out[k] = int(v, 0)
        except ValueError:
            raise AssemblyError(f"line {lineno}: bad value {v!r} for {k}") from None
    return out


def assemble(source, name=""):
    """Assemble kernel source text into a KernelImage."""
    sections = []          # (kind, [(lineno, Inst)], {label: index})
    current = None
    regs = None
    spm_bytes = 0
    seen = {"init": 0, "final": 0}

    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("."):
            parts = line.split()
            d = parts[0]
            if d == ".regs":
                regs = _parse_kv(parts[1:], lineno, ("int", "fp", "vec"))
            elif d == ".spm":
                spm_bytes = _parse_kv(parts[1:], lineno, ("bytes",)).get("bytes", 0)
            elif d in (".init", ".body", ".final"):
                kind = d[1:]
                if kind in seen:
                    seen[kind] += 1
                    if seen[kind] > 1:
                        raise AssemblyError(f"line {lineno}: duplicate {d} section")
                sections.append((kind, [], {}))
                current = sections[-1]
            else:
                raise AssemblyError(f"line {lineno}: unknown directive {d!r}")
            continue
        # label definitions, possibly with an instruction on the same line
        while True:
            head, sep, rest = line.partition(":")
            if sep and head.isidentifier():
                if current is None:
                    raise AssemblyError(f"line {lineno}: label outside any section")
                labels = current[2]
                if head in labels:
                    raise AssemblyError(f"line {lineno}: duplicate label {head!r}")
                labels[head] = len(current[1])
                line = rest.strip()
                if not line:
                    break
            else:
                break
        if not line:
            continue
        if current is None:
            raise AssemblyError(f"line {lineno}: instruction before any section")
        try:
            ins = isa.decode(line)
        except DecodeError as e:
            raise AssemblyError(f"line {lineno}: {e}") from None
        current[1].append((lineno, ins))

    if regs is None:
        raise AssemblyError("missing .regs directive")
    if seen["init"] != 1 or seen["final"] != 1:
        raise AssemblyError("kernel requires exactly one .init and one .final section")
    n_int = regs.get("int", 0)
    n_fp = regs.get("fp", 0)
    n_vec = regs.get("vec", 0)
    if not 1 <= n_int <= 32 or not 0 <= n_fp <= 32 or not 0 <= n_vec <= 32:
        raise AssemblyError(".regs values out of range (int 1..32, fp/vec 0..32)")

    init, bodies, final = [], [], []
    for kind, entries, labels in sections:
        insts = _resolve(entries, labels, n_int, n_fp, n_vec)
        if kind == "init":
            init = insts
        elif kind == "final":
            final = insts
        else:
            bodies.append(insts)
    return KernelImage(init, bodies, final, n_int, n_fp, n_vec, spm_bytes, name)


def _resolve(entries, labels, n_int, n_fp, n_vec):
    quota = {"x": n_int, "f": n_fp, "v": n_vec}
    insts = []
    for idx, (lineno, ins) in enumerate(entries):
        fmt = FORMATS[ins.mnemonic][3]
        for field_name, kind in _REG_KINDS[fmt]:
            r = getattr(ins, field_name)
            if r >= quota[kind] and not (kind == "x" and r == 0):
                raise AssemblyError(
                    f"line {lineno}: {kind}{r} exceeds declared quota "
                    f"{kind}<{quota[kind]} ({ins.mnemonic})")
        if ins.label is not None:
            if ins.label not in labels:
                raise AssemblyError(f"line {lineno}: undefined label {ins.label!r}")
            ins.imm = labels[ins.label]
        insts.append(ins)
    return insts


def disassemble_image(image):
    """Source text that reassembles into a semantically identical image."""
    out = [f".regs int={image.n_int} fp={image.n_fp} vec={image.n_vec}"]
    if image.spm_bytes:
        out.append(f".spm bytes={image.spm_bytes}")
    for kind, insts in image.sections():
        out.append(".body" if kind.startswith("body") else "." + kind)
        targets = sorted({i.imm for i in insts if i.label is not None})
        names = {t: f"L{t}" for t in targets}
        for idx, ins in enumerate(insts):
            if idx in names:
                out.append(f"{names[idx]}:")
            if ins.label is not None:
                text = isa.disassemble(ins)
                text = text.rsplit(" ", 1)[0] + " " + names[ins.imm]
                out.append("    " + text)
            else:
                out.append("    " + isa.disassemble(ins))
        # trailing label (branch to one-past-end is not representable; kernels
        # branch to halt instead)
        last = len(insts)
        if last in names:
            out.append(f"{names[last]}:")
            out.append("    halt")
    return "\n".join(out) + "\n"
