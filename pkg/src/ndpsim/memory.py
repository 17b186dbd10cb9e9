"""Device memory subsystem: crossbar, memory-side sectored L2, LPDDR5 channels.

Addresses interleave across channels in 256 B blocks through an invertible
xor-fold hash.  Each channel has one L2 slice (128 KB, 16-way, 128 B lines
with 32 B sectors, LRU, write-validate for full-sector writes) in front of an
FR-FCFS scheduled LPDDR5 channel (tRC/tRCD/tCL/tRP in 1 GHz DRAM clocks,
32 B per data burst).

Functional semantics: the device's backing bytearray is the single point of
mutation.  Read/write/atomic effects apply when the request enters the
subsystem (deterministic event order); cache and DRAM state carry timing
only.  Data-race-free kernels and commutative atomics are unaffected by this
linearization choice, which is the execution model the kernels are written
against.
"""

PS_PER_S = 10**12

SECTOR = 32
LINE = 128
SECTORS_PER_LINE = LINE // SECTOR
BLOCK = 256  # channel interleave granularity
FR_FCFS_WINDOW = 32  # how deep the scheduler looks for row hits
PUMP_BATCH = 4       # requests scheduled per pump pass


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


class AddressMap:
    """Bijective mapping of 256 B blocks to (channel, block-within-channel)."""

    def __init__(self, channels):
        self.channels = channels
        self.pow2 = channels & (channels - 1) == 0
        self.bits = channels.bit_length() - 1

    def route(self, paddr):
        """paddr -> (channel, channel-local byte address)."""
        block = paddr >> 8
        off = paddr & 255
        n = self.channels
        if n == 1:
            return 0, paddr
        if self.pow2:
            b = self.bits
            h = block
            t = block >> b
            while t:
                h ^= t
                t >>= b
            return h & (n - 1), ((block >> b) << 8) | off
        return block % n, ((block // n) << 8) | off


class L2Slice:
    """Tag/LRU state of one memory-side L2 slice (timing only)."""

    __slots__ = ("sets", "ways", "set_mask", "free_at", "stats")

    def __init__(self, slice_bytes, stats):
        lines = slice_bytes // LINE
        self.ways = 16
        nsets = max(1, lines // self.ways)
        assert nsets & (nsets - 1) == 0, "L2 set count must be a power of two"
        self.set_mask = nsets - 1
        # per set: {line_tag: [valid_bits, dirty_bits]}, insertion order = LRU
        self.sets = [dict() for _ in range(nsets)]
        self.free_at = 0
        self.stats = stats

    def lookup(self, local_addr, is_write, full_sector):
        """Returns (hit, writeback_addrs) and updates tag state.

        hit=True means no DRAM fetch is needed for this sector.
        writeback_addrs lists channel-local sector addresses of dirty sectors
        evicted to DRAM.  Tags are full line numbers, so victim addresses are
        recoverable.
        """
        line = local_addr // LINE
        sector_bit = 1 << ((local_addr // SECTOR) & (SECTORS_PER_LINE - 1))
        s = self.sets[line & self.set_mask]
        entry = s.get(line)
        st = self.stats
        writebacks = ()
        if entry is not None:
            # refresh LRU position
            del s[line]
            s[line] = entry
            st["l2_line_hits"] += 1
            if entry[0] & sector_bit:
                st["l2_sector_hits"] += 1
                if is_write:
                    entry[1] |= sector_bit
                return True, ()
            # line present, sector invalid
            st["l2_sector_misses"] += 1
            entry[0] |= sector_bit
            if is_write:
                entry[1] |= sector_bit
                if full_sector:
                    return True, ()  # write-validate, no fetch
            return False, ()
        # line miss
        st["l2_line_misses"] += 1
        st["l2_sector_misses"] += 1
        if len(s) >= self.ways:
            victim_line, victim = next(iter(s.items()))
            del s[victim_line]
            base = victim_line * LINE
            dirty = victim[1]
            writebacks = tuple(base + i * SECTOR for i in range(SECTORS_PER_LINE)
                               if dirty & (1 << i))
        s[line] = [sector_bit, sector_bit if is_write else 0]
        if is_write and full_sector:
            return True, writebacks
        return False, writebacks


class Channel:
    """One LPDDR5 channel with FR-FCFS scheduling and a timing checker."""

    def __init__(self, engine, timing, stats, chan_id):
        self.engine = engine
        self.stats = stats
        self.id = chan_id
        tck = PS_PER_S // timing.clock_hz
        self.tRC = timing.tRC * tck
        self.tRCD = timing.tRCD * tck
        self.tCL = timing.tCL * tck
        self.tRP = timing.tRP * tck
        per_chan = timing.peak_bytes_per_s  # set by subsystem to per-channel rate
        self.burst_ps = int(SECTOR * PS_PER_S // per_chan)
        self.banks = timing.banks_per_channel
        self.row_blocks = timing.row_bytes // BLOCK
        self.open_row = [-1] * self.banks
        self.act_time = [-(1 << 60)] * self.banks
        self.bus_free = 0
        self.pending = []  # [arrival, seq, local_addr, is_write, penalty, cb]
        self._seq = 0
        self._pump_at = -1
        self.busy_ps = 0
        self.first_ps = -1
        self.last_ps = 0

    def bank_row(self, local_addr):
        lblock = local_addr >> 8
        bank = lblock & (self.banks - 1)
        row = (lblock >> (self.banks.bit_length() - 1)) // self.row_blocks
        return bank, row

    def enqueue(self, arrival, local_addr, is_write, penalty, cb):
        self._seq += 1
        req = [arrival, self._seq, local_addr, is_write, penalty, cb]
        p = self.pending
        # arrivals are near-sorted; insert from the back
        i = len(p)
        while i and (p[i - 1][0], p[i - 1][1]) > (arrival, self._seq):
            i -= 1
        p.insert(i, req)
        if self._pump_at < 0 or self._pump_at > arrival:
            self._pump_at = max(arrival, self.engine.now)
            self.engine.at(self._pump_at, self._pump)

    def _pump(self):
        now = self.engine.now
        if now < self._pump_at:
            return  # stale wake
        self._pump_at = -1
        pending = self.pending
        issued = 0
        while pending and issued < PUMP_BATCH and pending[0][0] <= now:
            idx = self._select(now)
            req = pending.pop(idx)
            self._issue(req, now)
            issued += 1
        if pending:
            nxt = pending[0][0]
            if issued:
                nxt = max(nxt, self.bus_free - self.tCL)
            nxt = max(nxt, now + 1)
            self._pump_at = nxt
            self.engine.at(nxt, self._pump)

    def _select(self, now):
        pending = self.pending
        limit = min(len(pending), FR_FCFS_WINDOW)
        open_row = self.open_row
        for i in range(limit):
            req = pending[i]
            if req[0] > now:
                break
            bank, row = self.bank_row(req[2])
            if open_row[bank] == row:
                return i
        return 0

    def _issue(self, req, now):
        arrival, _, local_addr, is_write, penalty, cb = req
        bank, row = self.bank_row(local_addr)
        st = self.stats
        t = now
        if self.open_row[bank] == row:
            st["dram_row_hits"] += 1
            t_data = max(t + self.tCL, self.act_time[bank] + self.tRCD + self.tCL,
                         self.bus_free)
        else:
            st["dram_row_misses"] += 1
            if self.open_row[bank] >= 0:
                t_pre = t
                t_act = max(t_pre + self.tRP, self.act_time[bank] + self.tRC)
            else:
                t_act = max(t, self.act_time[bank] + self.tRC)
            self._check(t_act - self.act_time[bank] >= self.tRC, "tRC")
            if self.open_row[bank] >= 0:
                self._check(t_act - t >= self.tRP, "tRP")
            self.act_time[bank] = t_act
            self.open_row[bank] = row
            t_data = max(t_act + self.tRCD + self.tCL, self.bus_free)
        self._check(t_data - self.tCL >= self.act_time[bank] + self.tRCD, "tRCD")
        self._check(t_data >= self.bus_free, "bus")
        done = t_data + self.burst_ps + penalty
        self.bus_free = t_data + self.burst_ps
        self.busy_ps += self.burst_ps
        if self.first_ps < 0:
            self.first_ps = t_data
        self.last_ps = done
        if is_write:
            st["dram_bytes_written"] += SECTOR
        else:
            st["dram_bytes_read"] += SECTOR
        if cb is not None:
            self.engine.at(done, cb)

    def _check(self, ok, name):
        if not ok:
            self.stats["dram_timing_violations"] += 1


class MemorySubsystem:
    """Crossbar + L2 slices + channels of one device."""

    def __init__(self, engine, cfg, mem, stats, dirty_seed=0):
        self.engine = engine
        self.cfg = cfg
        self.mem = mem  # bytearray; may be grown by the owner
        self.stats = stats
        self.amap = AddressMap(cfg.dram_channels)
        self.clk = PS_PER_S // cfg.ndp_clock_hz
        self.l2_lat = 7 * self.clk
        self.xbar_lat = 4 * self.clk
        self.flit_ps = self.clk  # 32 B per port per cycle
        timing = cfg.dram_timing
        per_chan = timing.peak_bytes_per_s / cfg.dram_channels

        class _T:  # per-channel view of the timing row
            pass

        t = _T()
        for f in ("tRC", "tRCD", "tCL", "tRP", "clock_hz", "banks_per_channel",
                  "row_bytes"):
            setattr(t, f, getattr(timing, f))
        t.peak_bytes_per_s = per_chan
        self.channels = [Channel(engine, t, stats, c)
                         for c in range(cfg.dram_channels)]
        self.l2 = [L2Slice(cfg.l2_slice_bytes, stats) for _ in range(cfg.dram_channels)]
        shards = 4
        self.shards = shards
        self._in_free = {}
        self._out_free = {}
        # dirty host cacheline injection (limit study)
        self.dirty_ratio = cfg.dirty_line_ratio
        self.dirty_seed = dirty_seed
        self.bi_penalty_ps = int(round(cfg.bi_penalty_ns * 1000))
        self.kernel_data = []  # [(lo, hi)] address ranges eligible for BI

    # -- dirty-line model ----------------------------------------------------

    def set_kernel_data(self, ranges):
        self.kernel_data = list(ranges)

    def _bi_penalty(self, paddr):
        if not self.dirty_ratio:
            return 0
        for lo, hi in self.kernel_data:
            if lo <= paddr < hi:
                h = _splitmix64(self.dirty_seed ^ (paddr >> 5))
                if (h & 0xFFFFFF) / 16777216.0 < self.dirty_ratio:
                    self.stats["bi_penalties"] += 1
                    return self.bi_penalty_ps
                return 0
        return 0

    # -- crossbar ------------------------------------------------------------

    def _xbar(self, t, shard, src, dst):
        """One flit traversal; returns arrival time at the far side."""
        key = (shard, src)
        inf = self._in_free
        t0 = inf.get(key, 0)
        if t0 < t:
            t0 = t
        inf[key] = t0 + self.flit_ps
        ouf = self._out_free
        key2 = (shard, dst)
        t1 = t0 + self.xbar_lat
        t2 = ouf.get(key2, 0)
        if t2 < t1:
            t2 = t1
        ouf[key2] = t2 + self.flit_ps
        self.stats["xbar_flits"] += 1
        return t2

    # -- public access path ---------------------------------------------------

    def access(self, unit_id, paddr, size, kind, on_done, value=0, width=8,
               data=None):
        """Route one request; functional effect applies now, timing later.

        kind: 'r' (returns bytes), 'w' (data written), 'amo' (returns old int).
        The request may span sectors; on_done fires when the last reply lands.
        """
        mem = self.mem
        end = paddr + size
        if end > len(mem):
            raise IndexError(
                f"physical access [{paddr:#x}, {end:#x}) beyond device capacity")
        if kind == "r":
            result = bytes(mem[paddr:end])
        elif kind == "w":
            mem[paddr:end] = data
            result = None
        else:  # amo
            old = int.from_bytes(mem[paddr:end], "little", signed=True)
            new = old + value
            mem[paddr:end] = (new & ((1 << (8 * size)) - 1)).to_bytes(size, "little")
            result = old
            self.stats["l2_atomics"] += 1
        self._timed(unit_id, paddr, size, kind, on_done, result)
        return result

    def _timed(self, unit_id, paddr, size, kind, on_done, result):
        eng = self.engine
        first = paddr & ~(SECTOR - 1)
        last = (paddr + size - 1) & ~(SECTOR - 1)
        n_sub = (last - first) // SECTOR + 1
        state = [n_sub]
        is_write = kind == "w"

        def sub_done():
            state[0] -= 1
            if state[0] == 0 and on_done is not None:
                on_done(result)

        sector = first
        while sector <= last:
            full = sector >= paddr and sector + SECTOR <= paddr + size
            self._sector_access(unit_id, sector, is_write, full, sub_done)
            sector += SECTOR

    def _sector_access(self, unit_id, sector_addr, is_write, full, cb):
        eng = self.engine
        ch, local = self.amap.route(sector_addr)
        shard = ch & (self.shards - 1)
        t_req = self._xbar(eng.now, shard, ("u", unit_id), ("c", ch))
        slice_ = self.l2[ch]
        t_l2 = t_req if t_req > slice_.free_at else slice_.free_at
        slice_.free_at = t_l2 + self.clk
        t_l2 += self.l2_lat
        hit, writebacks = slice_.lookup(local, is_write, full)
        if writebacks:
            channel = self.channels[ch]
            for wb_addr in writebacks:
                channel.enqueue(t_l2, wb_addr, True, 0, None)
        if hit:
            self._respond(t_l2, shard, ch, unit_id, cb)
            return
        penalty = 0 if is_write else self._bi_penalty(sector_addr)
        channel = self.channels[ch]

        def dram_done():
            self._respond(eng.now, shard, ch, unit_id, cb)

        channel.enqueue(t_l2, local, is_write, penalty, dram_done)

    def _respond(self, t, shard, ch, unit_id, cb):
        t_back = self._xbar(t, shard, ("c", ch), ("u", unit_id))
        self.engine.at(t_back, cb)

    # -- reporting -------------------------------------------------------------

    def dram_busy_window_ps(self):
        first = min((c.first_ps for c in self.channels if c.first_ps >= 0),
                    default=0)
        last = max((c.last_ps for c in self.channels), default=0)
        return max(0, last - first)

    def drain_check(self):
        return all(not c.pending for c in self.channels)


def new_stats():
    return {
        "dram_bytes_read": 0, "dram_bytes_written": 0,
        "dram_row_hits": 0, "dram_row_misses": 0,
        "dram_timing_violations": 0,
        "l2_line_hits": 0, "l2_line_misses": 0,
        "l2_sector_hits": 0, "l2_sector_misses": 0,
        "l2_atomics": 0,
        "xbar_flits": 0,
        "bi_penalties": 0,
    }
