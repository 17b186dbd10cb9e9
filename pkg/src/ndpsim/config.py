"""Simulator configuration.

Defaults model a CXL memory expander with 32 NDP units at 2 GHz (4 sub-cores
per unit, 16 thread slots per sub-core), a 48 KB register file and 128 KB
scratchpad/L1D per unit, 256-bit vector units, 32 LPDDR5 channels totalling
409.6 GB/s, a 64 GB/s CXL link with 150 ns load-to-use latency, and at most
48 concurrent kernels.

Config files are line oriented ``key = value`` text with ``#`` comments.
Nested DRAM timing parameters use dotted keys (``dram_timing.tRC = 48``).
"""

from dataclasses import dataclass, field, fields, asdict

PS_PER_NS = 1000

OFFLOAD_SCHEMES = ("m2func", "io_ring_buffer", "io_direct")
SPAWN_MODES = ("per_thread", "grouped")


class ConfigError(ValueError):
    pass


@dataclass
class DramTiming:
    """LPDDR5 timing in DRAM clocks plus channel geometry."""

    tRC: int = 48
    tRCD: int = 15
    tCL: int = 20
    tRP: int = 15
    clock_hz: int = 1_000_000_000
    peak_bytes_per_s: float = 409.6e9  # per device, all channels
    banks_per_channel: int = 16
    row_bytes: int = 16384

    def validate(self):
        for f in ("tRC", "tRCD", "tCL", "tRP", "clock_hz", "banks_per_channel", "row_bytes"):
            if getattr(self, f) <= 0:
                raise ConfigError(f"dram_timing.{f} must be > 0")
        if self.peak_bytes_per_s <= 0:
            raise ConfigError("dram_timing.peak_bytes_per_s must be > 0")


@dataclass
class SimConfig:
    # NDP complex
    ndp_unit_count: int = 32
    ndp_clock_hz: int = 2_000_000_000
    subcores_per_unit: int = 4
    slots_per_subcore: int = 16
    regfile_bytes_per_unit: int = 48 * 1024
    scratchpad_l1d_bytes: int = 128 * 1024
    l1d_bytes: int = 0  # portion of scratchpad_l1d_bytes used as L1D cache
    vector_width_bits: int = 256
    uthread_granularity_bytes: int = 32
    max_concurrent_kernels: int = 48
    launch_buffer_depth: int = 16
    spawn_mode: str = "per_thread"  # "grouped" retires in blocks of 64 (ablation)

    # memory system
    dram_channels: int = 32
    dram_timing: DramTiming = field(default_factory=DramTiming)
    l2_slice_bytes: int = 128 * 1024  # per channel

    # links
    cxl_one_way_ns: float = 75.0
    cxl_bw_bytes_per_s: float = 64e9
    io_one_way_ns: float = 500.0
    p2p_hop_multiplier: int = 2  # dev-to-dev packets traverse a switch
    offload_scheme: str = "m2func"

    # virtual memory
    page_bytes: int = 2 * 1024 * 1024
    dtlb_entries: int = 256
    dram_tlb_entries: int = 1 << 20
    dram_tlb_warm: bool = True
    ats_latency_ns: float = 1000.0

    # host model
    poll_interval_ns: float = 500.0
    host_request_overhead_ns: float = 50.0

    # dirty host cachelines (back-invalidation limit study)
    dirty_line_ratio: float = 0.0
    bi_penalty_ns: float = 150.0

    device_count: int = 1
    rng_seed: int = 1

    # -- derived -----------------------------------------------------------

    @property
    def slots_per_unit(self):
        return self.subcores_per_unit * self.slots_per_subcore

    @property
    def cxl_one_way_ps(self):
        return int(round(self.cxl_one_way_ns * PS_PER_NS))

    @property
    def io_one_way_ps(self):
        return int(round(self.io_one_way_ns * PS_PER_NS))

    @property
    def vector_bytes(self):
        return self.vector_width_bits // 8

    def channel_bytes_per_s(self):
        return self.dram_timing.peak_bytes_per_s / self.dram_channels

    def validate(self):
        counts = (
            "ndp_unit_count", "subcores_per_unit", "slots_per_subcore",
            "regfile_bytes_per_unit", "scratchpad_l1d_bytes", "vector_width_bits",
            "uthread_granularity_bytes", "max_concurrent_kernels",
            "launch_buffer_depth", "dram_channels", "l2_slice_bytes",
            "page_bytes", "dtlb_entries", "dram_tlb_entries", "device_count",
            "ndp_clock_hz", "p2p_hop_multiplier",
        )
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        durations = (
            "cxl_one_way_ns", "cxl_bw_bytes_per_s", "io_one_way_ns",
            "ats_latency_ns", "poll_interval_ns", "bi_penalty_ns",
        )
        for name in durations:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.host_request_overhead_ns < 0:
            raise ConfigError("host_request_overhead_ns must be >= 0")
        g = self.uthread_granularity_bytes
        if g & (g - 1):
            raise ConfigError("uthread_granularity_bytes must be a power of two")
        if self.vector_width_bits % 64 or self.vector_width_bits & (self.vector_width_bits - 1):
            raise ConfigError("vector_width_bits must be a power of two multiple of 64")
        if self.offload_scheme not in OFFLOAD_SCHEMES:
            raise ConfigError(
                f"offload_scheme must be one of {OFFLOAD_SCHEMES}, got {self.offload_scheme!r}")
        if self.spawn_mode not in SPAWN_MODES:
            raise ConfigError(f"spawn_mode must be one of {SPAWN_MODES}")
        if not 0.0 <= self.dirty_line_ratio <= 1.0:
            raise ConfigError("dirty_line_ratio must lie in [0, 1]")
        if self.l1d_bytes < 0 or self.l1d_bytes > self.scratchpad_l1d_bytes:
            raise ConfigError("l1d_bytes must lie in [0, scratchpad_l1d_bytes]")
        self.dram_timing.validate()
        return self

    def to_dict(self):
        return asdict(self)


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False,
               "1": True, "0": False}


def _convert(raw, target_type, key, lineno):
    raw = raw.strip()
    try:
        if target_type is bool:
            return _BOOL_WORDS[raw.lower()]
        if target_type is int:
            return int(raw, 0)
        if target_type is float:
            return float(raw)
        if target_type is str:
            return raw
    except (ValueError, KeyError):
        pass
    raise ConfigError(f"line {lineno}: cannot parse {key} value {raw!r} as {target_type.__name__}")


def load_config(text):
    """Parse ``key = value`` config text into a validated SimConfig.

    Empty text yields the full default configuration.
    """
    cfg = SimConfig()
    named = {"int": int, "float": float, "str": str, "bool": bool}
    # dataclass field annotations may be type objects or strings
    as_type = lambda t: named[t] if isinstance(t, str) else t
    top = {f.name: f.type for f in fields(SimConfig)}
    timing = {f.name: f.type for f in fields(DramTiming)}

    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if key.startswith("dram_timing."):
            sub = key[len("dram_timing."):]
            if sub not in timing:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            val = _convert(raw, as_type(timing[sub]), key, lineno)
            setattr(cfg.dram_timing, sub, val)
        elif key in top:
            if key == "dram_timing":
                raise ConfigError(f"line {lineno}: set dram_timing fields with dotted keys")
            val = _convert(raw, as_type(top[key]), key, lineno)
            setattr(cfg, key, val)
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    cfg.validate()
    return cfg


def load_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read())
