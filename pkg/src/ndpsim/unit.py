"""Timing and resource model of one NDP unit.

Each unit has sub-cores with 16 thread slots, two scalar ALUs, one scalar
SFU/LSU and one vector ALU/SFU/LSU each, a register-file allocator over the
unit's 48 KB budget (1/3 int, 1/6 fp, 1/2 vector), a shared scratchpad with
atomics (4-cycle), and a tiny L0/L1 instruction cache hierarchy.

Issue is fine-grained multithreading: per cycle and per functional-unit
class, the least-recently-ready thread issues (FIFO over becoming ready),
one instruction per free unit, one instruction in flight per thread.  The
issue arbiter is event-coalesced: it wakes only at cycles where a ready
thread and a free unit can meet.

Functional memory effects apply in deterministic request order (see
memory.py); scratchpad operations charge a fixed 4-cycle latency and need no
engine events at all.
"""

from heapq import heappush, heappop

from . import isa
from .isa import (SCRATCH_BASE, SCRATCH_SPAN, UNITS_PER_CLASS, KernelFault,
                  exec_inst, apply_load, apply_vload, apply_amo_result)

ZERO_VEC = bytes(32)
SPM_LAT_CYCLES = 4
L0_SECTORS = 16     # 512 B direct mapped
L1I_SECTORS = 64    # 2 KB
L1I_LAT_CYCLES = 2

READY, WAIT_MEM, DONE = 0, 1, 2


class UThread:
    __slots__ = ("pc", "sec", "secbase", "status", "xb", "fb", "vb",
                 "ni", "nf", "nv", "xr", "fr", "vr", "vl", "sew", "vbits",
                 "inst", "unit", "subcore", "pending", "last_csec", "group",
                 "gather", "phase")

    def __init__(self):
        self.pending = 0
        self.last_csec = -1
        self.group = None
        self.gather = None


class BlockAlloc:
    """Bump allocator with size-keyed recycling (registers, scratchpad)."""

    __slots__ = ("cap", "bump", "stacks", "live")

    def __init__(self, cap):
        self.cap = cap
        self.bump = 0
        self.stacks = {}
        self.live = 0

    def alloc(self, n):
        if n == 0:
            self.live += 0
            return 0
        st = self.stacks.get(n)
        if st:
            self.live += n
            return st.pop()
        if self.bump + n <= self.cap:
            base = self.bump
            self.bump += n
            self.live += n
            return base
        # split the smallest sufficient recycled block
        best = None
        for size, lst in self.stacks.items():
            if size > n and lst and (best is None or size < best):
                best = size
        if best is not None:
            base = self.stacks[best].pop()
            rest = best - n
            self.stacks.setdefault(rest, []).append(base + n)
            self.live += n
            return base
        return None

    def free(self, base, n):
        if n == 0:
            return
        self.stacks.setdefault(n, []).append(base)
        self.live -= n

    def reset_if_idle(self):
        if self.live == 0:
            self.bump = 0
            self.stacks.clear()

    @property
    def free_units(self):
        return self.cap - self.live


class SubCore:
    __slots__ = ("unit", "idx", "slots_free", "slots_total", "ready",
                 "ufree", "wake_at", "spawn_free", "l0", "seq")

    def __init__(self, unit, idx, slots):
        self.unit = unit
        self.idx = idx
        self.slots_free = slots
        self.slots_total = slots
        self.ready = [[] for _ in range(6)]
        self.ufree = [[0] * n for n in UNITS_PER_CLASS]
        self.wake_at = -1
        self.spawn_free = 0
        self.l0 = [-1] * L0_SECTORS
        self.seq = 0

    # -- readiness -----------------------------------------------------------

    def push_ready(self, th, t):
        """Thread may issue its next instruction at time t (after icache)."""
        pc = th.pc
        sec = th.sec
        if pc >= len(sec):
            self.unit.retire(th)
            return
        unit = self.unit
        csec = (th.secbase + pc * 4) >> 5
        if csec != th.last_csec:
            t = self._fetch(th, csec, t)
            if t is None:
                return  # thread re-pushed when the fetch lands
        self.seq += 1
        heappush(self.ready[sec[pc].cls], (t, self.seq, th))
        self.schedule_wake(t)

    def _fetch(self, th, csec, t):
        """L0/L1I/global instruction fetch; returns adjusted ready time."""
        unit = self.unit
        if self.l0[csec % L0_SECTORS] == csec:
            th.last_csec = csec
            return t
        l1 = unit.l1i
        if csec in l1:
            self.l0[csec % L0_SECTORS] = csec
            th.last_csec = csec
            unit.stats["l1i_hits"] = unit.stats.get("l1i_hits", 0) + 1
            return t + L1I_LAT_CYCLES * unit.clk
        unit.fetch_global(self, th, csec, t)
        return None

    def fill_code(self, th, csec, t):
        l1 = self.unit.l1i
        if csec not in l1:
            if len(l1) >= L1I_SECTORS:
                l1.pop(next(iter(l1)))
            l1[csec] = True
        self.l0[csec % L0_SECTORS] = csec
        th.last_csec = csec
        self.seq += 1
        heappush(self.ready[th.sec[th.pc].cls], (t, self.seq, th))
        self.schedule_wake(t)

    # -- arbiter ---------------------------------------------------------------

    def schedule_wake(self, t):
        unit = self.unit
        clk = unit.clk
        t_cyc = -(-t // clk) * clk
        if self.wake_at < 0 or self.wake_at > t_cyc:
            self.wake_at = t_cyc
            unit.engine.at(t_cyc, self._wake)

    def _wake(self):
        now = self.unit.engine.now
        if now != self.wake_at:
            return  # superseded wake
        self.wake_at = -1
        self.issue_cycle(now)

    def issue_cycle(self, t):
        unit = self.unit
        clk = unit.clk
        stats = unit.stats
        next_wake = -1
        for cls in range(6):
            heap = self.ready[cls]
            if not heap:
                continue
            ufree = self.ufree[cls]
            while heap:
                rt = heap[0][0]
                if rt > t:
                    cand = max(rt, min(ufree))
                    if next_wake < 0 or cand < next_wake:
                        next_wake = cand
                    break
                # find a free functional unit in this class
                ui = -1
                best = None
                for i, ft in enumerate(ufree):
                    if ft <= t:
                        ui = i
                        break
                    if best is None or ft < best:
                        best = ft
                if ui < 0:
                    if next_wake < 0 or best < next_wake:
                        next_wake = best
                    break
                _, _, th = heappop(heap)
                ins = th.sec[th.pc]
                lat = ins.lat * clk
                ufree[ui] = t + lat
                stats["issued"] += 1
                try:
                    res = exec_inst(th, ins)
                except KernelFault as e:
                    unit.fault(th, e)
                    continue
                if res is None:
                    self.push_ready(th, t + lat)
                elif res == "halt":
                    unit.retire(th)
                else:
                    unit.do_mem(th, res, t + clk)
            if heap:
                rt = heap[0][0]
                cand = max(rt, t + clk)
                if next_wake < 0 or cand < next_wake:
                    next_wake = cand
        if next_wake > t:
            self.schedule_wake(next_wake)


class NdpUnit:
    """One NDP unit: sub-cores, registers, scratchpad, spawn machinery."""

    def __init__(self, device, unit_id):
        self.device = device
        self.engine = device.engine
        cfg = device.cfg
        self.cfg = cfg
        self.id = unit_id
        self.clk = 10**12 // cfg.ndp_clock_hz
        self.stats = device.ndp_stats
        rf = cfg.regfile_bytes_per_unit
        self.nx = rf // 3 // 8
        self.nf = rf // 6 // 8
        self.nv = rf // 2 // 32
        self.xr = [0] * self.nx
        self.fr = [0.0] * self.nf
        self.vr = [ZERO_VEC] * self.nv
        self.xalloc = BlockAlloc(self.nx)
        self.falloc = BlockAlloc(self.nf)
        self.valloc = BlockAlloc(self.nv)
        spm_bytes = cfg.scratchpad_l1d_bytes - cfg.l1d_bytes
        self.spm = bytearray(spm_bytes)
        self.spm_alloc = BlockAlloc(spm_bytes)
        self.spm_traffic = 0
        self.subcores = [SubCore(self, i, cfg.slots_per_subcore)
                         for i in range(cfg.subcores_per_unit)]
        self.l1i = {}
        self._fetch_pending = {}
        self.work = []          # FIFO of spawn descriptors
        self._sc_cursor = 0
        self.live_threads = 0
        self._pool = []

    # -- spawn / retire ----------------------------------------------------------

    def add_work(self, desc):
        self.work.append(desc)
        self.try_spawn(self.engine.now)

    def try_spawn(self, t):
        work = self.work
        while work:
            desc = work[0]
            if desc.exhausted():
                work.pop(0)
                continue
            sc = self._free_subcore()
            if sc is None:
                return
            inst = desc.instance
            if inst.faulted:
                desc.skip_all()
                continue
            img = inst.image
            xb = self.xalloc.alloc(img.n_int)
            if xb is None:
                self.stats["spawn_stalls"] += 1
                return
            fb = self.falloc.alloc(img.n_fp)
            if fb is None:
                self.xalloc.free(xb, img.n_int)
                self.stats["spawn_stalls"] += 1
                return
            vb = self.valloc.alloc(img.n_vec)
            if vb is None:
                self.xalloc.free(xb, img.n_int)
                self.falloc.free(fb, img.n_fp)
                self.stats["spawn_stalls"] += 1
                return
            x1, x2 = desc.next_ids(self)
            th = self._pool.pop() if self._pool else UThread()
            th.pc = 0
            th.sec = desc.section
            th.secbase = desc.secbase
            th.status = READY
            th.xb, th.fb, th.vb = xb, fb, vb
            th.ni, th.nf, th.nv = img.n_int, img.n_fp, img.n_vec
            th.xr, th.fr, th.vr = self.xr, self.fr, self.vr
            th.vl, th.sew = 0, 32
            th.vbits = self.cfg.vector_width_bits
            th.inst = inst
            th.unit = self
            th.subcore = sc
            th.pending = 0
            th.last_csec = -1
            th.group = desc.claim_group(self)
            self.xr[xb:xb + img.n_int] = [0] * img.n_int
            if img.n_fp:
                self.fr[fb:fb + img.n_fp] = [0.0] * img.n_fp
            for i in range(img.n_vec):
                self.vr[vb + i] = ZERO_VEC
            if img.n_int > 1:
                self.xr[xb + 1] = x1
            if img.n_int > 2:
                self.xr[xb + 2] = x2
            sc.slots_free -= 1
            self.live_threads += 1
            spawn_t = t if t > sc.spawn_free else sc.spawn_free
            sc.spawn_free = spawn_t + self.clk
            self.stats["spawned"] += 1
            self.device.note_occupancy(+1)
            sc.push_ready(th, spawn_t + self.clk)

    def _free_subcore(self):
        scs = self.subcores
        n = len(scs)
        for k in range(n):
            sc = scs[(self._sc_cursor + k) % n]
            if sc.slots_free > 0:
                self._sc_cursor = (self._sc_cursor + k + 1) % n
                return sc
        return None

    def retire(self, th):
        grp = th.group
        if grp is not None:
            grp.pending -= 1
            grp.held.append((th.subcore, th.xb, th.ni, th.fb, th.nf,
                             th.vb, th.nv))
            self.live_threads -= 1
            self.stats["retired"] += 1
            self.device.note_occupancy(-1)
            th.inst.thread_done()
            if grp.pending == 0:
                for sc, xb, ni, fb, nf, vb, nv in grp.held:
                    sc.slots_free += 1
                    self.xalloc.free(xb, ni)
                    self.falloc.free(fb, nf)
                    self.valloc.free(vb, nv)
                self._after_retire()
            self._pool.append(th)
            return
        sc = th.subcore
        sc.slots_free += 1
        self.xalloc.free(th.xb, th.ni)
        self.falloc.free(th.fb, th.nf)
        self.valloc.free(th.vb, th.nv)
        self.live_threads -= 1
        self.stats["retired"] += 1
        self.device.note_occupancy(-1)
        self._pool.append(th)
        th.inst.thread_done()
        self._after_retire()

    def _after_retire(self):
        if self.live_threads == 0 and not self.work:
            self.xalloc.reset_if_idle()
            self.falloc.reset_if_idle()
            self.valloc.reset_if_idle()
        if self.work:
            self.try_spawn(self.engine.now)

    def fault(self, th, exc):
        th.inst.fault(str(exc))
        self.retire(th)

    # -- instruction fetch (global path) ------------------------------------------

    def fetch_global(self, sc, th, csec, t):
        key = csec
        pend = self._fetch_pending.get(key)
        if pend is not None:
            pend.append((sc, th))
            return
        self._fetch_pending[key] = [(sc, th)]
        inst = th.inst
        vaddr = csec << 5
        try:
            hpa = self.device.vm.itranslate(self.id, vaddr, inst.asid)
        except Exception as e:
            self.fault(th, e)
            self._fetch_pending.pop(key, None)
            return

        def filled(_):
            now = self.engine.now
            for sc2, th2 in self._fetch_pending.pop(key, ()):
                sc2.fill_code(th2, csec, now)

        dev, local = self.device.route_hpa(hpa)
        dev.memsys.access(("i", self.id), local, 32, "r", filled)

    # -- memory operations ---------------------------------------------------------

    def do_mem(self, th, op, t):
        kind = op[0]
        addr = op[1]
        if kind == "vamo":
            pairs = op[1]
            addr = pairs[0][0] if pairs else SCRATCH_BASE
        if SCRATCH_BASE <= addr < SCRATCH_BASE + SCRATCH_SPAN:
            self._spm_op(th, op, t)
        else:
            self._global_op(th, op, t)

    # scratchpad: fixed 4-cycle latency, effects in request order, no events
    def _spm_op(self, th, op, t):
        inst = th.inst
        base = inst.spm_base[self.id]
        limit = inst.spm_limit
        spm = self.spm
        kind = op[0]
        done_t = t + SPM_LAT_CYCLES * self.clk
        try:
            if kind == "vld":
                off = op[1] - SCRATCH_BASE
                n = op[2]
                if off + n > limit:
                    raise KernelFault(f"scratchpad read past allocation: {op[1]:#x}")
                apply_vload(th, op[3], bytes(spm[base + off:base + off + n]))
                self.spm_traffic += n
            elif kind == "vst":
                off = op[1] - SCRATCH_BASE
                data = op[2]
                if off + len(data) > limit:
                    raise KernelFault(f"scratchpad write past allocation: {op[1]:#x}")
                spm[base + off:base + off + len(data)] = data
                self.spm_traffic += len(data)
            elif kind == "ld":
                off = op[1] - SCRATCH_BASE
                n = op[2]
                if off + n > limit:
                    raise KernelFault(f"scratchpad read past allocation: {op[1]:#x}")
                apply_load(th, op[3], bytes(spm[base + off:base + off + n]), n)
                self.spm_traffic += n
            elif kind == "st":
                off = op[1] - SCRATCH_BASE
                data = op[2]
                if off + len(data) > limit:
                    raise KernelFault(f"scratchpad write past allocation: {op[1]:#x}")
                spm[base + off:base + off + len(data)] = data
                self.spm_traffic += len(data)
            elif kind == "amo":
                off = op[1] - SCRATCH_BASE
                width = op[2]
                if off + width > limit:
                    raise KernelFault(f"scratchpad amo past allocation: {op[1]:#x}")
                lo = base + off
                old = int.from_bytes(spm[lo:lo + width], "little", signed=True)
                new = (old + op[3]) & ((1 << (8 * width)) - 1)
                spm[lo:lo + width] = new.to_bytes(width, "little")
                apply_amo_result(th, op[4], old)
                self.spm_traffic += width
            elif kind == "vamo":
                for a, addend, width in op[1]:
                    off = a - SCRATCH_BASE
                    if not 0 <= off <= limit - width:
                        raise KernelFault(f"scratchpad vamo past allocation: {a:#x}")
                    lo = base + off
                    old = int.from_bytes(spm[lo:lo + width], "little", signed=True)
                    new = (old + addend) & ((1 << (8 * width)) - 1)
                    spm[lo:lo + width] = new.to_bytes(width, "little")
                    self.spm_traffic += width
            else:
                raise KernelFault(f"unsupported scratchpad op {kind}")
        except KernelFault as e:
            self.fault(th, e)
            return
        th.subcore.push_ready(th, done_t)

    # global memory: translate, route (possibly peer device), access
    def _global_op(self, th, op, t):
        inst = th.inst
        asid = inst.asid
        kind = op[0]
        vm = self.device.vm

        if kind == "vgather":
            self._gather(th, op, t)
            return

        vaddr = op[1]
        hpa = vm.translate_fast(self.id, vaddr, asid)
        if hpa is not None:
            self._perform(th, op, hpa)
            return

        def ok(hpa2):
            self._perform(th, op, hpa2)

        vm.translate_slow(self.id, vaddr, asid, ok,
                          lambda e: self.fault(th, e))

    def _perform(self, th, op, hpa):
        kind = op[0]
        dev, local = self.device.route_hpa(hpa)
        sc = th.subcore
        remote = dev is not self.device

        if kind == "ld":
            size, rd = op[2], op[3]
            def done(data):
                apply_load(th, rd, data, size)
                sc.push_ready(th, self.engine.now)
        elif kind == "st" or kind == "vst":
            def done(_):
                sc.push_ready(th, self.engine.now)
        elif kind == "vld":
            vd = op[3]
            def done(data):
                apply_vload(th, vd, data)
                sc.push_ready(th, self.engine.now)
        elif kind == "amo":
            rd = op[4]
            def done(old):
                apply_amo_result(th, rd, old)
                sc.push_ready(th, self.engine.now)
        else:
            self.fault(th, KernelFault(f"unsupported global op {kind}"))
            return

        if remote:
            self._remote(dev, th, op, local, done)
            return
        try:
            if kind == "ld":
                self.memsys_access(local, op[2], "r", done)
            elif kind == "st" or kind == "vst":
                self.memsys_access(local, len(op[2]), "w", done, data=op[2])
            elif kind == "vld":
                self.memsys_access(local, op[2], "r", done)
            elif kind == "amo":
                self.memsys_access(local, op[2], "amo", done, value=op[3])
        except IndexError as e:
            self.fault(th, KernelFault(str(e)))

    def memsys_access(self, local, size, kind, cb, value=0, data=None):
        self.device.memsys.access(self.id, local, size, kind, cb,
                                  value=value, data=data)

    def _remote(self, dev, th, op, local, done):
        """Peer-device access through the switch (P2P)."""
        kind = op[0]
        out, back = self.device.p2p_links(dev)
        port = ("p2p", self.device.id)

        if kind == "ld" or kind == "vld":
            size = op[2]
            def at_dev():
                def got(data):
                    back.send(size, lambda: done(data))
                dev.memsys.access(port, local, size, "r", got)
            out.send(8, at_dev)
        elif kind == "st" or kind == "vst":
            data = op[2]
            def at_dev():
                def acked(_):
                    back.send(8, lambda: done(None))
                dev.memsys.access(port, local, len(data), "w", acked, data=data)
            out.send(len(data), at_dev)
        elif kind == "amo":
            width, addend = op[2], op[3]
            def at_dev():
                def got(old):
                    back.send(8, lambda: done(old))
                dev.memsys.access(port, local, width, "amo", got, value=addend)
            out.send(16, at_dev)
        else:
            self.fault(th, KernelFault(f"unsupported remote op {kind}"))

    def _gather(self, th, op, t):
        addrs, width, vd = op[1], op[2], op[3]
        inst = th.inst
        vm = self.device.vm
        sc = th.subcore
        parts = []
        sectors = {}
        for a in addrs:
            hpa = vm.translate_fast(self.id, a, inst.asid)
            if hpa is None:
                # rare: force the slow path for the whole gather, element 0
                def ok(_hpa):
                    self._gather(th, op, t)
                vm.translate_slow(self.id, a, inst.asid, ok,
                                  lambda e: self.fault(th, e))
                return
            dev, local = self.device.route_hpa(hpa)
            if dev is not self.device:
                self.fault(th, KernelFault("remote gather unsupported"))
                return
            parts.append((local, width))
            sectors[local >> 5] = local & ~31

        mem = self.device.memsys.mem
        data = b"".join(bytes(mem[a:a + width]) for a, width in parts)
        state = [len(sectors)]

        def sub(_):
            state[0] -= 1
            if state[0] == 0:
                apply_vload(th, vd, data)
                sc.push_ready(th, self.engine.now)

        for sec_addr in sectors.values():
            self.device.memsys.access(self.id, sec_addr, 32, "r", sub)

    def icache_flush(self):
        self.l1i.clear()
        for sc in self.subcores:
            sc.l0 = [-1] * L0_SECTORS


def new_stats():
    return {
        "spawned": 0, "retired": 0, "issued": 0, "spawn_stalls": 0,
        "l1i_hits": 0,
    }
