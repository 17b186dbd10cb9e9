"""Discrete-event simulation core.

Global time is an integer count of picoseconds so that 2 GHz compute clocks,
1 GHz DRAM clocks and nanosecond link latencies can all be represented
exactly.  Events that fire at the same picosecond dispatch in the order they
were scheduled, which makes the whole simulation deterministic regardless of
component construction order.
"""

import heapq

PS_PER_S = 10**12
PS_PER_NS = 1000


class UnknownDomainError(ValueError):
    pass


class DeadlockError(RuntimeError):
    """Raised when the event queue drains while work is still outstanding."""

    def __init__(self, message, stalled=None):
        super().__init__(message)
        self.stalled = stalled or []


class ClockDomain:
    __slots__ = ("name", "hz", "period_ps")

    def __init__(self, name, hz):
        if hz <= 0:
            raise ValueError(f"clock domain {name!r} must have hz > 0")
        self.name = name
        self.hz = int(hz)
        # Period is kept as an exact integer when possible (2 GHz -> 500 ps).
        self.period_ps = PS_PER_S // self.hz
        if self.period_ps * self.hz != PS_PER_S:
            raise ValueError(
                f"clock domain {name!r}: {hz} Hz has a non-integral picosecond period"
            )


class Engine:
    """Deterministic event queue shared by every simulated component."""

    def __init__(self):
        self.now = 0
        self._heap = []
        self._ordinal = 0
        self._domains = {}

    # -- clock domains -----------------------------------------------------

    def add_domain(self, name, hz):
        dom = ClockDomain(name, hz)
        self._domains[name] = dom
        return dom

    def domain(self, name):
        try:
            return self._domains[name]
        except KeyError:
            raise UnknownDomainError(f"unknown clock domain {name!r}") from None

    def now_cycles(self, name):
        """Elapsed full cycles of a domain: floor(now * hz / 1e12), exactly."""
        dom = self.domain(name)
        return (self.now * dom.hz) // PS_PER_S

    # -- scheduling --------------------------------------------------------

    def at(self, time_ps, fn):
        if time_ps < self.now:
            raise ValueError(
                f"event scheduled at {time_ps} ps before current time {self.now} ps"
            )
        self._ordinal += 1
        heapq.heappush(self._heap, (time_ps, self._ordinal, fn))

    def after(self, delay_ps, fn):
        self.at(self.now + delay_ps, fn)

    def align_up(self, time_ps, period_ps):
        """First cycle boundary at or after time_ps."""
        return -(-time_ps // period_ps) * period_ps

    # -- run loop ----------------------------------------------------------

    def pending(self):
        return len(self._heap)

    def run(self, until_ps=None):
        """Dispatch events until the queue drains (or past `until_ps`).

        Returns the number of events dispatched.
        """
        heap = self._heap
        pop = heapq.heappop
        count = 0
        while heap:
            if until_ps is not None and heap[0][0] > until_ps:
                break
            time_ps, _, fn = pop(heap)
            self.now = time_ps
            fn()
            count += 1
        return count
