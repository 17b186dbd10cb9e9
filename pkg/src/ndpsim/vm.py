"""Virtual-to-physical translation for NDP execution.

Three levels: per-unit on-chip TLBs (1 cycle), a direct-mapped TLB region in
device DRAM shared by all units of a device (one 32 B read to probe), and a
fixed-latency host translation-service fallback that fills both levels.

A DRAM-TLB entry occupies 16 bytes at

    slot(vpn, asid) = region_base + 16 * (H(vpn, asid) mod entry_count)
    H(vpn, asid)    = splitmix64((vpn << 16) ^ asid)

with layout little-endian [asid:2][tag:6][ppn:6][attrs:2]; tag is the low
48 bits of the vpn and attrs bit0 is the valid bit.  Entries are real bytes
in device memory, so probes travel the ordinary memory path.
"""

import struct

from .memory import _splitmix64

ENTRY_BYTES = 16
_ENTRY = struct.Struct("<HQ")  # packing helpers below handle the 6 B fields


class TranslationFault(Exception):
    def __init__(self, vaddr, asid):
        super().__init__(f"no mapping for vaddr {vaddr:#x} (asid {asid})")
        self.vaddr = vaddr
        self.asid = asid


def pack_entry(asid, vpn, ppn_frame):
    tag = vpn & ((1 << 48) - 1)
    return (asid.to_bytes(2, "little") + tag.to_bytes(6, "little")
            + ppn_frame.to_bytes(6, "little") + (1).to_bytes(2, "little"))


def unpack_entry(raw):
    asid = int.from_bytes(raw[0:2], "little")
    tag = int.from_bytes(raw[2:8], "little")
    ppn_frame = int.from_bytes(raw[8:14], "little")
    attrs = int.from_bytes(raw[14:16], "little")
    return asid, tag, ppn_frame, attrs


def storage_overhead_pct(page_bytes):
    """DRAM-TLB bytes per mapped byte, as a percentage rounded to 0.1."""
    return round(ENTRY_BYTES / page_bytes * 100.0, 1)


class VmSystem:
    """Translation machinery of one device."""

    def __init__(self, engine, cfg, memsys, stats, page_tables):
        self.engine = engine
        self.cfg = cfg
        self.memsys = memsys
        self.stats = stats
        self.page_tables = page_tables  # shared {(asid, vpn): hpa frame base}
        self.page_shift = cfg.page_bytes.bit_length() - 1
        assert 1 << self.page_shift == cfg.page_bytes
        self.page_mask = cfg.page_bytes - 1
        self.entries = cfg.dram_tlb_entries
        self.region_base = None  # set once the host reserves the region
        self.ats_ps = int(round(cfg.ats_latency_ns * 1000))
        self.clk = 10**12 // cfg.ndp_clock_hz
        nunits = cfg.ndp_unit_count
        self.dtlb = [{} for _ in range(nunits)]
        self.itlb = [{} for _ in range(nunits)]
        self.dtlb_cap = cfg.dtlb_entries

    def set_region(self, base):
        self.region_base = base

    # -- slot computation ---------------------------------------------------

    def slot_index(self, vpn, asid):
        return _splitmix64((vpn << 16) ^ asid) % self.entries

    def slot_addr(self, vpn, asid):
        return self.region_base + ENTRY_BYTES * self.slot_index(vpn, asid)

    # -- warm fill (host setup, no timing) -----------------------------------

    def warm_fill(self, asid, vpn, frame):
        addr = self.slot_addr(vpn, asid)
        self.memsys.mem[addr:addr + ENTRY_BYTES] = pack_entry(asid, vpn, frame)

    # -- fast path ------------------------------------------------------------

    def translate_fast(self, unit_id, vaddr, asid):
        """On-chip hit -> hpa, else None (caller takes the slow path)."""
        vpn = vaddr >> self.page_shift
        hit = self.dtlb[unit_id].get((asid, vpn))
        if hit is None:
            return None
        self.stats["dtlb_hits"] += 1
        return hit | (vaddr & self.page_mask)

    def _dtlb_fill(self, unit_id, asid, vpn, frame):
        t = self.dtlb[unit_id]
        if len(t) >= self.dtlb_cap:
            t.pop(next(iter(t)))
        t[(asid, vpn)] = frame

    # -- slow path ------------------------------------------------------------

    def translate_slow(self, unit_id, vaddr, asid, on_done, on_fault):
        """Probe the DRAM-TLB, fall back to the host translation service.

        on_done(hpa) fires when the translation lands; faults (no mapping)
        surface through on_fault(exc).
        """
        self.stats["dtlb_misses"] += 1
        vpn = vaddr >> self.page_shift
        slot = self.slot_addr(vpn, asid)
        eng = self.engine

        def probed(raw):
            e_asid, e_tag, e_frame, e_attrs = unpack_entry(raw)
            if (e_attrs & 1) and e_asid == asid and e_tag == (vpn & ((1 << 48) - 1)):
                self.stats["dram_tlb_hits"] += 1
                frame = e_frame << self.page_shift
                self._dtlb_fill(unit_id, asid, vpn, frame)
                on_done(frame | (vaddr & self.page_mask))
                return
            self.stats["dram_tlb_misses"] += 1
            self._ats(unit_id, vaddr, asid, vpn, slot, on_done, on_fault)

        self.memsys.access(unit_id, slot, ENTRY_BYTES, "r", probed)

    def _ats(self, unit_id, vaddr, asid, vpn, slot, on_done, on_fault):
        self.stats["ats_calls"] += 1

        def resolved():
            frame = self.page_tables.get((asid, vpn))
            if frame is None:
                on_fault(TranslationFault(vaddr, asid))
                return
            # fill both levels, then complete
            self.memsys.mem[slot:slot + ENTRY_BYTES] = pack_entry(
                asid, vpn, frame >> self.page_shift)
            self.memsys.access(unit_id, slot, ENTRY_BYTES, "w", None,
                               data=bytes(self.memsys.mem[slot:slot + ENTRY_BYTES]))
            self._dtlb_fill(unit_id, asid, vpn, frame)
            on_done(frame | (vaddr & self.page_mask))

        self.engine.after(self.ats_ps, resolved)

    # -- instruction-side ------------------------------------------------------

    def itranslate(self, unit_id, vaddr, asid):
        """Code translation; modeled as always resolvable after first touch."""
        vpn = vaddr >> self.page_shift
        t = self.itlb[unit_id]
        frame = t.get((asid, vpn))
        if frame is not None:
            return frame | (vaddr & self.page_mask)
        frame = self.page_tables.get((asid, vpn))
        if frame is None:
            raise TranslationFault(vaddr, asid)
        if len(t) >= self.dtlb_cap:
            t.pop(next(iter(t)))
        t[(asid, vpn)] = frame
        return frame | (vaddr & self.page_mask)

    # -- shootdown --------------------------------------------------------------

    def shootdown(self, asid, vpn):
        """Drop one translation everywhere on this device (idempotent)."""
        self.stats["shootdowns"] += 1
        key = (asid, vpn)
        for t in self.dtlb:
            t.pop(key, None)
        for t in self.itlb:
            t.pop(key, None)
        slot = self.slot_addr(vpn, asid)
        raw = bytes(self.memsys.mem[slot:slot + ENTRY_BYTES])
        e_asid, e_tag, _, e_attrs = unpack_entry(raw)
        if (e_attrs & 1) and e_asid == asid and e_tag == (vpn & ((1 << 48) - 1)):
            self.memsys.mem[slot:slot + ENTRY_BYTES] = b"\x00" * ENTRY_BYTES
        return 0


def new_stats():
    return {
        "dtlb_hits": 0, "dtlb_misses": 0,
        "dram_tlb_hits": 0, "dram_tlb_misses": 0,
        "ats_calls": 0, "shootdowns": 0,
    }
