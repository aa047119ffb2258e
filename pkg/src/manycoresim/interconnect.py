"""Shared-bus interconnect: one global bus plus one bus per cluster.

Transaction-level semantics: a submitted message waits in its source
member's queue (highest priority first, FIFO within a priority level).
The arbiter grants one message at a time; ties between members resolve
round-robin.  A granted message occupies the bus for its word count
scaled by bus width and is delivered tx_delay + occupancy + rx_delay
ticks after the grant.  The next grant can happen at grant + occupancy:
the tx/rx halves of the endpoint delay pipeline with the next transfer.
"""

import heapq

from .kernel import SimulationError
from .protocol import message_word_count, WORD_BITS


class Bus:
    """One arbitration domain. Members are node addresses."""

    def __init__(self, name, kernel, members, width, tx_delay, rx_delay,
                 num_nodes, deliver):
        if width < 1:
            raise SimulationError(f"bus {name}: zero width")
        self.name = name
        self.kernel = kernel
        self.members = list(members)
        self.width = width
        self.tx_delay = tx_delay
        self.rx_delay = rx_delay
        self.num_nodes = num_nodes
        self.deliver = deliver
        self._slot = {addr: i for i, addr in enumerate(self.members)}
        self._queues = [[] for _ in self.members]
        self._backlog = 0
        self._seq = 0
        self._rr = 0
        self._arb_scheduled = False
        self.busy_until = 0
        # counters for the experiment CSV
        self.grants = 0
        self.words_total = 0
        self.busy_ticks = 0
        self.delivered = 0

    def occupancy(self, msg) -> int:
        words = message_word_count(msg.mtype, self.num_nodes)
        return max(1, -(-words * WORD_BITS // self.width))

    def submit(self, tick, msg):
        slot = self._slot.get(msg.src)
        if slot is None:
            raise SimulationError(
                f"bus {self.name}: {msg.src} is not a member")
        if not msg.broadcast and msg.dst not in self._slot:
            raise SimulationError(
                f"bus {self.name}: destination {msg.dst} is not a member")
        heapq.heappush(self._queues[slot], (-msg.prio, self._seq, msg))
        self._seq += 1
        self._backlog += 1
        if not self._arb_scheduled:
            self._arb_scheduled = True
            self.kernel.schedule(max(tick, self.busy_until), self._arbitrate)

    def _arbitrate(self, _payload=None):
        self._arb_scheduled = False
        if not self._backlog:
            return
        tick = self.kernel.now
        nmem = len(self._queues)
        best_slot = -1
        best_prio = 1  # queue keys are -prio, all <= 0
        for off in range(nmem):
            slot = self._rr + off
            if slot >= nmem:
                slot -= nmem
            q = self._queues[slot]
            if q and q[0][0] < best_prio:
                best_prio = q[0][0]
                best_slot = slot
                if best_prio == -15:
                    break
        _, _, msg = heapq.heappop(self._queues[best_slot])
        self._backlog -= 1
        self._rr = best_slot + 1
        if self._rr == nmem:
            self._rr = 0
        occ = self.occupancy(msg)
        self.grants += 1
        self.words_total += message_word_count(msg.mtype, self.num_nodes)
        self.busy_ticks += occ
        self.busy_until = tick + occ
        if msg.broadcast:
            recipients = tuple(a for a in self.members if a != msg.src)
        else:
            recipients = (msg.dst,)
        self.kernel.schedule(tick + self.tx_delay + occ + self.rx_delay,
                             self._deliver, (msg, recipients))
        if self._backlog:
            self._arb_scheduled = True
            self.kernel.schedule(self.busy_until, self._arbitrate)

    def _deliver(self, payload):
        msg, recipients = payload
        self.delivered += len(recipients)
        self.deliver(msg, recipients)

    def utilization(self, ticks) -> float:
        return self.busy_ticks / ticks if ticks > 0 else 0.0
