"""Run-time task manager: one instance per global management node.

Each instance owns one cluster's bookkeeping: per-PE counters, a view
of every other cluster's total load (refreshed by status beacons), a
FCFS queue for tasks that found no idle PE, and the join barriers it
allocated.  Task control blocks live in simulated shared memory (the
chip-wide registry), so a TCB handle in a message is enough to run or
resume the task anywhere; all *decisions* about a cluster stay with
its manager.

Recursive startup: a spawn request whose count fits inside one cluster
stops and maps that many working children locally; otherwise it forks
two helper tasks covering the ceil/floor halves of the count, placing
each on the currently least-loaded cluster.  The remote entries of
that load view refresh only through beacons, so concurrent subtrees
do collide on stale data now and then; that is the modeled behavior,
not a defect, and the beacon threshold controls how bad it gets.

Handler costs: every message charges a 1-tick base; each mapping
decision additionally charges the selection delay of its candidate
count.  Mutations happen when a handler starts; outgoing messages are
submitted when it ends; one manager never overlaps two handlers.
"""

from collections import deque
from dataclasses import dataclass, field
from heapq import heappush, heappop

from .analytic import selection_delay
from .kernel import SimulationError
from .protocol import Address, MessageType, NodeKind, make_message

GMN_BASE_COST = 1


def stop_condition(cnt, active_helpers, pe_per_cluster, k):
    """Recursion cutoff: the count fits one cluster, or the chip looks
    saturated with split activity already and further forking would
    only add management traffic.  The helper count is each manager's
    beacon-fed view, not a live global; brief disagreement between
    managers is part of the modeled behavior."""
    return cnt <= pe_per_cluster or active_helpers >= k


# Children mapped per manager activation.  A full-width spawn is a
# long software loop; slicing it lets the short handlers that free
# PEs run in between instead of stalling behind the whole loop.
SPAWN_BATCH = 8

# Optimistic view bumps outlive their usefulness once the target has
# had time to advertise the placement itself; after this many ticks
# they are treated as confirmed-or-wrong and dropped.
OPTIMISM_TTL = 400

# An in-service helper on some cluster is a dump of roughly this many
# tasks that just has not landed yet; remote deciders weigh advertised
# helpers by it so concurrent subtrees stop piling onto the same
# almost-idle cluster during the beacon blind window.
HELPER_PRESSURE = 8

# View bias per step of ring distance from a subtree's preferred
# cluster (its child-index range scaled onto the cluster ring).  Two
# subtrees split at the same instant see identical load fields, and
# with ties resolved by index they would pick identical targets; the
# range bias separates them using information the spawn request
# already carries, while staying small enough for genuine load
# differences to win.
AFFINITY_WEIGHT = 0.75

# TaskControlBlock.kind
PARENT, HELPER, CHILD = 0, 1, 2
KIND_NAMES = {PARENT: "parent", HELPER: "helper", CHILD: "child"}

# TaskControlBlock.state
READY, RUNNING, BLOCKED_ON_JOIN, TERMINATED = 0, 1, 2, 3


@dataclass(slots=True)
class TaskControlBlock:
    tcb_id: int
    app_id: int
    kind: int
    program: object        # TraceProgram executed by the PE
    imem: int              # trace handle inside the app bundle
    dmem: int              # carried opaque, handed down the tree
    cnt: int               # helpers: child count this subtree covers
    home_cluster: int
    regs: list             # architectural registers (shared memory)
    spawn_time: int
    index_range: tuple = ()   # child indices this subtree covers
    carried: int = 0       # work units this task adds to cluster totals
    sp: int = 0            # saved trace step; >0 means resume, not fresh
    state: int = READY
    mapped_to: int = -1    # global PE index of current placement
    start_time: int = -1
    end_time: int = -1


@dataclass(slots=True)
class SpawnSlice:
    """Continuation of a child-spawning loop, local to one manager.

    Never crosses the interconnect; it re-enters the owner's receive
    queue so messages that arrived during the previous batch run first.
    """
    app_id: int
    imem: int
    dmem: int
    regs: list
    index_range: tuple
    mtype = "spawn-slice"


@dataclass(slots=True)
class JoinBarrier:
    addr: int
    home: int
    count: int
    initial: int
    waiters: list = field(default_factory=list)


@dataclass(slots=True)
class WorkloadTable:
    """One manager's load bookkeeping.

    `local` holds per-PE task counters for the own cluster; `remote`
    holds one summarized total per cluster, where the own entry is
    always live and the others are whatever the last beacon said.
    `helpers` mirrors that layout for in-flight helper tasks; beacons
    carry both numbers, so both go stale together.
    """
    local: list
    remote: list
    helpers: list
    last_broadcast_total: int = 0
    last_broadcast_helpers: int = 0
    threshold: int = 4

    def own_total(self, index):
        return self.remote[index]


class ClusterManager:
    """Message-driven task manager bound to one global node."""

    def __init__(self, index, chip, pe_per_cluster, k, c_s, threshold):
        self.index = index
        self.chip = chip
        self.kernel = chip.kernel
        self.ppc = pe_per_cluster
        self.k = k
        self.addr = Address(NodeKind.GMN, index)
        self.table = WorkloadTable([0] * pe_per_cluster, [0] * k, [0] * k,
                                   threshold=threshold)
        self.pe_task = [None] * pe_per_cluster
        self.pending = deque()
        self._free_pes = list(range(pe_per_cluster))
        self._free_slots = []
        self._next_slot = 0
        self.rx = deque()
        self.idle = True
        # Optimistic bumps for own placements not yet visible in any
        # beacon, kept apart from the beacon values with the tick of
        # the last bump so stale ones can be aged out.
        self._optimism = [0] * k
        self._optimism_tick = [0] * k
        self.handled = 0
        self.busy_ticks = 0
        self.beacons_tx = 0
        self.beacons_rx = 0
        self._charge_local = max(1, round(selection_delay(pe_per_cluster,
                                                          c_s)))
        self._charge_global = max(1, round(selection_delay(k, c_s)))
        self._handlers = {
            MessageType.RCSV_SPWN: self._h_rcsv_spwn,
            MessageType.RCSV_EXIT: self._h_rcsv_exit,
            MessageType.JOIN_INIT: self._h_join_init,
            MessageType.JOIN_FREE: self._h_join_free,
            MessageType.JOIN_WAIT: self._h_join_wait,
            MessageType.JOIN_EXIT: self._h_join_exit,
            MessageType.TASK_START: self._h_task_start,
            MessageType.STATUS_BEACON: self._h_status_beacon,
            SpawnSlice.mtype: self._h_spawn_slice,
        }
        self._resume_slice = None

    # -- serialized message loop ------------------------------------

    def receive(self, msg, tick):
        self.rx.append(msg)
        if self.idle:
            self._start_next(tick)

    def _start_next(self, tick):
        msg = self.rx.popleft()
        self.idle = False
        handler = self._handlers.get(msg.mtype)
        if handler is None:
            raise SimulationError(
                f"manager {self.index}: no handler for {msg.mtype!r}")
        outputs = []
        charge = GMN_BASE_COST + handler(msg, tick, outputs)
        table = self.table
        total = table.remote[self.index]
        helpers = table.helpers[self.index]
        # Going idle is always advertised, else the final decrements
        # below the threshold would leave ghost load in remote views.
        # Helper arrivals and exits are advertised immediately too: a
        # helper means an imminent burst of mappings, which is exactly
        # what other deciders need to know before the burst shows up
        # in anyone's totals.
        if self.k > 1 and (
                abs(total - table.last_broadcast_total) >= table.threshold
                or (total == 0 and table.last_broadcast_total != 0)
                or helpers != table.last_broadcast_helpers):
            outputs.append(make_message(
                MessageType.STATUS_BEACON, self.addr, self.addr,
                (total, helpers), broadcast=True))
            table.last_broadcast_total = total
            table.last_broadcast_helpers = helpers
            self.beacons_tx += 1
        self.handled += 1
        self.busy_ticks += charge
        self.kernel.schedule(tick + charge, self._emit, outputs)

    def _emit(self, outputs):
        tick = self.kernel.now
        for msg in outputs:
            self.chip.route(tick, msg, self.index)
        if self._resume_slice is not None:
            self.rx.append(self._resume_slice)
            self._resume_slice = None
        if self.rx:
            self._start_next(tick)
        else:
            self.idle = True

    # -- mapping ------------------------------------------------------

    def _map_local(self, tcb, tick, out):
        """Place one task on the least-loaded local PE, or park it.

        Charged once per decision whether or not a PE was free.  Every
        task enters the cluster total with weight 1, parked ones too,
        so remote views reflect queued work; helpers enter the
        in-flight tally that beacons carry only once a PE picks them up.
        """
        table = self.table
        tcb.carried = 1
        table.remote[self.index] += 1
        hook = self.chip.map_hook
        snapshot = tuple(table.local) if hook else None
        if self._free_pes:
            slot = heappop(self._free_pes)
            self._assign(slot, tcb, out)
        else:
            slot = -1
            tcb.state = READY
            self.pending.append(tcb.tcb_id)
        if hook:
            hook("local", self.index, snapshot, slot)
        return self._charge_local

    def _assign(self, slot, tcb, out):
        self.table.local[slot] += 1
        self.pe_task[slot] = tcb
        tcb.mapped_to = self.index * self.ppc + slot
        tcb.state = RUNNING
        if tcb.kind == HELPER:
            # helpers count as split activity only while in service: a
            # parked helper generates no management traffic, and keeping
            # it in the tally would latch the recursion cutoff on for as
            # long as the cluster queue takes to drain
            self.table.helpers[self.index] += 1
        out.append(make_message(
            MessageType.TASK_START, self.addr,
            Address(NodeKind.LC, tcb.mapped_to), (tcb.tcb_id, tcb.sp)))

    def _map_global(self, tick, self_discount=0, preferred=None):
        """Pick the least-loaded cluster as this manager sees it.

        The view per cluster is the last advertised total, plus the
        advertised in-service helpers weighted as imminent dumps, plus
        this manager's own not-yet-confirmed forecast bumps; the own
        entries are live.  `self_discount` removes the pressure of the
        locally running helper that is asking, so a splitter does not
        flee its own otherwise idle cluster.  `preferred` adds the
        ring-distance bias for the subtree being placed.  Plain min
        search over the composed view, ties to the lowest index.
        """
        beacon = self.table.remote
        helpers = self.table.helpers
        opt = self._optimism
        opt_tick = self._optimism_tick
        k = self.k
        view = [0.0] * k
        for i in range(k):
            o = opt[i]
            if o and tick - opt_tick[i] > OPTIMISM_TTL:
                opt[i] = o = 0
            view[i] = beacon[i] + o + HELPER_PRESSURE * helpers[i]
        view[self.index] -= self_discount
        if preferred is not None:
            for i in range(k):
                away = (i - preferred) % k
                view[i] += AFFINITY_WEIGHT * min(away, k - away)
        best = min(range(k), key=view.__getitem__)
        hook = self.chip.map_hook
        if hook:
            hook("global", self.index, tuple(view), best)
        return best, self._charge_global

    def _free_pe(self, slot, out):
        """Release a PE and hand it straight to the FCFS queue head."""
        table = self.table
        table.local[slot] -= 1
        if table.local[slot] < 0:
            raise SimulationError(
                f"manager {self.index}: PE {slot} counter underflow")
        self.pe_task[slot] = None
        heappush(self._free_pes, slot)
        if self.pending:
            tcb = self.chip.tcbs[self.pending.popleft()]
            self._assign(heappop(self._free_pes), tcb, out)

    def _terminate(self, tcb, tick):
        if tcb.state == TERMINATED:
            raise SimulationError(f"double exit of task {tcb.tcb_id}")
        tcb.state = TERMINATED
        tcb.end_time = tick
        table = self.table
        table.remote[self.index] -= tcb.carried
        tcb.carried = 0
        if table.remote[self.index] < 0:
            raise SimulationError(
                f"manager {self.index}: cluster total underflow")

    def _lc_slot(self, src):
        slot = src.index - self.index * self.ppc
        if src.kind != NodeKind.LC or not 0 <= slot < self.ppc:
            raise SimulationError(
                f"manager {self.index}: message from foreign node {src}")
        return slot

    def _running_task(self, src):
        tcb = self.pe_task[self._lc_slot(src)]
        if tcb is None:
            raise SimulationError(
                f"manager {self.index}: syscall from idle PE {src}")
        return tcb

    def _reply(self, msg, value):
        return make_message(MessageType.SYSCALL_REPLY, self.addr, msg.src,
                            (value,))

    # -- handlers (return extra charge beyond the base cost) ---------

    def _h_rcsv_spwn(self, msg, tick, out):
        imem, dmem, cnt = msg.data
        if msg.broadcast:
            # external stimulus: plant the application's parent task
            tcb = self.chip.new_tcb(
                app_id=dmem, kind=PARENT, imem=imem, dmem=dmem, cnt=cnt,
                home=self.index, regs=[0, 0, 0, 0], irange=(), tick=tick)
            return self._map_local(tcb, tick, out)
        issuer = self._running_task(msg.src)
        if cnt == 0:
            self.chip.protocol_rejects += 1
            out.append(self._reply(msg, 0))
            return 0
        out.append(self._reply(msg, 0))
        if issuer.kind == HELPER:
            irange = issuer.index_range
            if cnt != irange[1] - irange[0]:
                raise SimulationError(
                    f"helper {issuer.tcb_id} spawn count {cnt} does not "
                    f"match its index range {irange}")
        else:
            irange = (0, cnt)
        app = self.chip.apps[issuer.app_id]
        if stop_condition(cnt, sum(self.table.helpers), self.ppc, self.k):
            return self._spawn_children(
                issuer.app_id, imem, dmem, list(issuer.regs), irange,
                tick, out)
        first = (cnt + 1) // 2
        imid = irange[0] + first
        halves = (
            (first, (irange[0], imid)),
            (cnt - first, (imid, irange[1])),
        )
        # an in-service helper's pressure stands for the very split
        # being decided here, so it must not weigh against its own
        # cluster as a landing spot
        discount = HELPER_PRESSURE if issuer.kind == HELPER else 0
        extra = 0
        for sub_cnt, sub_irange in halves:
            tcb = self.chip.new_tcb(
                app_id=issuer.app_id, kind=HELPER,
                imem=app.bundle.helper_trace, dmem=dmem, cnt=sub_cnt,
                home=-1, regs=[issuer.regs[0], sub_cnt, imem, dmem],
                irange=sub_irange, tick=tick)
            preferred = sub_irange[0] * self.k // max(1, app.bundle.n)
            target, charge = self._map_global(tick, discount, preferred)
            extra += charge
            tcb.home_cluster = target
            if target == self.index:
                extra += self._map_local(tcb, tick, out)
            else:
                # forecast the helper in the same unit the target will
                # advertise it, so the bump hands over seamlessly when
                # the arrival beacon resets it
                self._optimism[target] += HELPER_PRESSURE
                self._optimism_tick[target] = tick
                out.append(make_message(
                    MessageType.TASK_START, self.addr,
                    Address(NodeKind.GMN, target), (tcb.tcb_id, 0)))
        return extra

    def _spawn_children(self, app_id, imem, dmem, regs, irange, tick, out):
        """Map one batch of working children; requeue the remainder.

        The continuation re-enters the receive queue after anything
        that arrived during this batch, so PE releases and join traffic
        are not pinned down for the whole loop.  Charges stay per
        decision; only the loop's interleaving changes.
        """
        lengths = self.chip.apps[app_id].bundle.child_lengths
        lo, hi = irange
        stop = min(lo + SPAWN_BATCH, hi)
        extra = 0
        for idx in range(lo, stop):
            child_regs = list(regs)
            if idx < len(lengths):
                child_regs[1] = lengths[idx]
            tcb = self.chip.new_tcb(
                app_id=app_id, kind=CHILD, imem=imem, dmem=dmem, cnt=1,
                home=self.index, regs=child_regs, irange=(idx, idx + 1),
                tick=tick)
            extra += self._map_local(tcb, tick, out)
        if stop < hi:
            self._resume_slice = SpawnSlice(app_id, imem, dmem, regs,
                                            (stop, hi))
        return extra

    def _h_spawn_slice(self, msg, tick, out):
        return self._spawn_children(msg.app_id, msg.imem, msg.dmem,
                                    msg.regs, msg.index_range, tick, out)

    def _h_rcsv_exit(self, msg, tick, out):
        slot = self._lc_slot(msg.src)
        tcb = self.pe_task[slot]
        if tcb is None or tcb.tcb_id != msg.data[0]:
            raise SimulationError(
                f"manager {self.index}: exit for task {msg.data[0]} from "
                f"PE running {tcb.tcb_id if tcb else 'nothing'}")
        self._terminate(tcb, tick)
        self._free_pe(slot, out)
        if tcb.kind == HELPER:
            table = self.table
            table.helpers[self.index] -= 1
            if table.helpers[self.index] < 0:
                raise SimulationError(
                    f"manager {self.index}: helper tally underflow")
        elif tcb.kind == PARENT:
            self.chip.on_app_complete(tcb.app_id, tick)
        return 0

    def _h_join_init(self, msg, tick, out):
        self._running_task(msg.src)
        if self._free_slots:
            slot = heappop(self._free_slots)
        else:
            slot = self._next_slot
            self._next_slot += 1
        addr = self.index + self.k * slot
        count = msg.data[0]
        self.chip.barriers[addr] = JoinBarrier(addr, self.index, count,
                                               count)
        out.append(self._reply(msg, addr))
        return 0

    def _barrier(self, addr):
        barrier = self.chip.barriers.get(addr)
        if barrier is None:
            raise SimulationError(f"no join barrier at address {addr}")
        return barrier

    def _h_join_wait(self, msg, tick, out):
        # the waiter keeps its PE; only the reply restarts it, so the
        # cluster stays visibly loaded while a parent sits on a barrier
        barrier = self._barrier(msg.data[0])
        tcb = self._running_task(msg.src)
        if barrier.home != self.index:
            raise SimulationError(
                f"join-wait for barrier {barrier.addr} at manager "
                f"{self.index}, home is {barrier.home}")
        if barrier.count == 0:
            out.append(self._reply(msg, 0))
            return 0
        tcb.state = BLOCKED_ON_JOIN
        barrier.waiters.append((tcb.tcb_id, msg.src))
        return 0

    def _h_join_exit(self, msg, tick, out):
        addr = msg.data[0]
        if msg.src.kind == NodeKind.LC:
            slot = self._lc_slot(msg.src)
            tcb = self.pe_task[slot]
            if tcb is None:
                raise SimulationError(
                    f"manager {self.index}: join-exit from idle PE")
            barrier = self._barrier(addr)
            self._terminate(tcb, tick)
            self._free_pe(slot, out)
            if barrier.home != self.index:
                out.append(make_message(
                    MessageType.JOIN_EXIT, self.addr,
                    Address(NodeKind.GMN, barrier.home), msg.data))
                return 0
            return self._decrement(barrier, tick, out)
        barrier = self._barrier(addr)
        if barrier.home != self.index:
            raise SimulationError(
                f"join-exit relay for barrier {addr} reached manager "
                f"{self.index}, home is {barrier.home}")
        return self._decrement(barrier, tick, out)

    def _decrement(self, barrier, tick, out):
        if barrier.count <= 0:
            raise SimulationError(
                f"join-exit on barrier {barrier.addr} with counter 0")
        barrier.count -= 1
        if barrier.count == 0:
            return self._release(barrier, tick, out)
        return 0

    def _release(self, barrier, tick, out):
        """Barrier hit zero: wake every waiter on the PE it held."""
        waiters = barrier.waiters
        barrier.waiters = []
        for tcb_id, origin in waiters:
            tcb = self.chip.tcbs[tcb_id]
            tcb.state = RUNNING
            out.append(make_message(
                MessageType.SYSCALL_REPLY, self.addr, origin, (0,)))
        return 0

    def _h_join_free(self, msg, tick, out):
        barrier = self._barrier(msg.data[0])
        if barrier.count != 0 or barrier.waiters:
            raise SimulationError(
                f"join-free on live barrier {barrier.addr}: count "
                f"{barrier.count}, {len(barrier.waiters)} waiters")
        if msg.src.kind == NodeKind.LC:
            self._running_task(msg.src)
            out.append(self._reply(msg, 0))
            if barrier.home == self.index:
                self._recycle(barrier)
            else:
                out.append(make_message(
                    MessageType.JOIN_FREE, self.addr,
                    Address(NodeKind.GMN, barrier.home), msg.data))
        else:
            if barrier.home != self.index:
                raise SimulationError(
                    f"join-free relay for barrier {barrier.addr} reached "
                    f"manager {self.index}, home is {barrier.home}")
            self._recycle(barrier)
        return 0

    def _recycle(self, barrier):
        del self.chip.barriers[barrier.addr]
        heappush(self._free_slots, barrier.addr // self.k)

    def _h_task_start(self, msg, tick, out):
        # inter-cluster relay: run (or resume) the handed-over task here
        tcb = self.chip.tcbs[msg.data[0]]
        if tcb.home_cluster != self.index:
            raise SimulationError(
                f"task {tcb.tcb_id} relayed to manager {self.index}, "
                f"home is {tcb.home_cluster}")
        return self._map_local(tcb, tick, out)

    def _h_status_beacon(self, msg, tick, out):
        src = msg.src.index
        self.table.remote[src] = msg.data[0]
        self.table.helpers[src] = msg.data[1]
        self._optimism[src] = 0
        self.beacons_rx += 1
        return 0
