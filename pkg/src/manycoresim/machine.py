"""Whole-chip assembly.

Wires one global bus full of cluster managers to k local buses, each
carrying one manager plus its processing elements and their local
controllers.  Also owns everything that models shared memory: the task
control block registry, the join barriers, and the application records
that injected workloads are accounted against.

Applications enter the system as high-priority spawn messages pushed
straight into a manager's receive queue at their injection tick, as if
an external host had written them there; everything after that travels
over the modeled buses.
"""

from dataclasses import dataclass

from .interconnect import Bus
from .kernel import Kernel, SimulationError
from .nodes import LocalController, ProcessingElement
from .protocol import (Address, MessageType, NodeKind, format_trace_row,
                       make_message)
from .taskmgr import ClusterManager, TaskControlBlock

INJECT_PRIORITY = 15


@dataclass(slots=True)
class AppRecord:
    app_id: int
    bundle: object
    inject_tick: int
    gmn: int
    complete_tick: int = -1

    @property
    def done(self):
        return self.complete_tick >= 0

    @property
    def turnaround(self):
        return self.complete_tick - self.inject_tick if self.done else -1


class Chip:
    """m processing elements in k clusters under one simulation clock."""

    def __init__(self, m, k, *, global_bus_width=32, local_bus_width=32,
                 tx_delay=4, rx_delay=4, c_s=8, delta_n_th=4):
        if m <= 0 or k <= 0 or m % k:
            raise SimulationError(
                f"cluster count {k} must divide PE count {m}")
        self.m = m
        self.k = k
        self.ppc = m // k
        self.num_nodes = m + k
        self.kernel = Kernel()
        self.tcbs = []
        self.barriers = {}
        self.apps = []
        self.apps_completed = 0
        self.protocol_rejects = 0
        self.trace_sink = None
        self.map_hook = None

        gmn_addrs = [Address(NodeKind.GMN, i) for i in range(k)]
        self.global_bus = Bus("global", self.kernel, gmn_addrs,
                              global_bus_width, tx_delay, rx_delay,
                              self.num_nodes, self._deliver)
        self.managers = [
            ClusterManager(i, self, self.ppc, k, c_s, delta_n_th)
            for i in range(k)
        ]
        self.pes = []
        self.lcs = []
        self.local_buses = []
        for c in range(k):
            lc_addrs = [Address(NodeKind.LC, c * self.ppc + j)
                        for j in range(self.ppc)]
            bus = Bus(f"local{c}", self.kernel, [gmn_addrs[c]] + lc_addrs,
                      local_bus_width, tx_delay, rx_delay, self.num_nodes,
                      self._deliver)
            self.local_buses.append(bus)
            for j in range(self.ppc):
                idx = c * self.ppc + j
                pe = ProcessingElement(idx, self.kernel)
                lc = LocalController(idx, c, self, bus)
                pe.lc = lc
                lc.pe = pe
                self.pes.append(pe)
                self.lcs.append(lc)

    # -- message plumbing ---------------------------------------------

    def route(self, tick, msg, origin_cluster):
        """Submit a manager's outgoing message to the right bus."""
        if msg.broadcast or msg.dst.kind == NodeKind.GMN:
            self.global_bus.submit(tick, msg)
        else:
            self.local_buses[origin_cluster].submit(tick, msg)

    def _deliver(self, msg, recipients):
        tick = self.kernel.now
        sink = self.trace_sink
        for addr in recipients:
            if sink is not None:
                sink(format_trace_row(tick, msg, self.num_nodes, addr))
            if addr.kind == NodeKind.GMN:
                self.managers[addr.index].receive(msg, tick)
            else:
                self.lcs[addr.index].receive(msg, tick)

    # -- shared memory ------------------------------------------------

    def new_tcb(self, *, app_id, kind, imem, dmem, cnt, home, regs,
                irange, tick):
        bundle = self.apps[app_id].bundle
        tcb = TaskControlBlock(
            tcb_id=len(self.tcbs), app_id=app_id, kind=kind,
            program=bundle.programs.programs[imem], imem=imem, dmem=dmem,
            cnt=cnt, home_cluster=home, regs=regs, spawn_time=tick,
            index_range=irange)
        self.tcbs.append(tcb)
        return tcb

    # -- stimulus -------------------------------------------------------

    def add_app(self, bundle, inject_tick, gmn_index, prio=INJECT_PRIORITY):
        if not 0 <= gmn_index < self.k:
            raise SimulationError(f"no manager {gmn_index} to inject into")
        app_id = len(self.apps)
        self.apps.append(AppRecord(app_id, bundle, inject_tick, gmn_index))
        src = Address(NodeKind.GMN, gmn_index)
        msg = make_message(MessageType.RCSV_SPWN, src, src,
                           (bundle.parent_trace, app_id, 1),
                           prio=prio, broadcast=True)
        self.kernel.schedule(inject_tick, self._inject, (gmn_index, msg))
        return app_id

    def _inject(self, payload):
        gmn_index, msg = payload
        tick = self.kernel.now
        if self.trace_sink is not None:
            self.trace_sink(format_trace_row(tick, msg, self.num_nodes,
                                             msg.dst))
        self.managers[gmn_index].receive(msg, tick)

    def on_app_complete(self, app_id, tick):
        record = self.apps[app_id]
        if record.done:
            raise SimulationError(f"app {app_id} completed twice")
        record.complete_tick = tick
        self.apps_completed += 1

    def run(self, limit):
        return self.kernel.run_until(limit)

    # -- aggregate stats ------------------------------------------------

    @property
    def beacons_tx(self):
        return sum(mgr.beacons_tx for mgr in self.managers)

    @property
    def beacons_rx(self):
        return sum(mgr.beacons_rx for mgr in self.managers)

    @property
    def msgs_total(self):
        return self.global_bus.grants + sum(b.grants
                                            for b in self.local_buses)

    def bus_utilization(self, ticks):
        """(global util, mean local util) over the first `ticks`."""
        local = [bus.utilization(ticks) for bus in self.local_buses]
        return (self.global_bus.utilization(ticks),
                sum(local) / len(local))

    def live_task_total(self):
        return sum(mgr.table.remote[mgr.index] for mgr in self.managers)
