"""Processing elements and their local controllers.

A PE interprets one task's trace program step by step: compute steps
burn simulated time, syscall steps are handed to the paired local
controller, which turns them into bus messages for the cluster's
manager.  Blocking syscalls keep the task on its PE until the reply
comes back, so a parent parked on a join barrier still occupies its
PE; terminating syscalls free the PE the moment they are dispatched,
so the manager can hand it to a parked task without waiting for a
round trip.

Register values are read from and written to the task control block
itself, which stands in for shared memory: whatever a task computed
before yielding is visible wherever it resumes.
"""

from .kernel import SimulationError
from .protocol import Address, MessageType, NodeKind, make_message
from .traces import ArgKind, StepKind, SYSCALLS

PE_IDLE, PE_RUNNING, PE_BLOCKED = range(3)


class ProcessingElement:
    """Single-task execution unit driven by trace programs."""

    def __init__(self, index, kernel):
        self.index = index
        self.kernel = kernel
        self.lc = None
        self.state = PE_IDLE
        self.tcb = None
        self.steps = None
        self.pc = 0
        self.regs = None
        self.busy_ticks = 0
        self.tasks_run = 0

    def start_task(self, tick, tcb):
        if self.state != PE_IDLE:
            raise SimulationError(
                f"PE {self.index}: task {tcb.tcb_id} started while busy")
        self.tcb = tcb
        self.steps = tcb.program.steps
        self.pc = tcb.sp
        self.regs = tcb.regs
        if tcb.start_time < 0:
            tcb.start_time = tick
        self.state = PE_RUNNING
        self.tasks_run += 1
        self._advance(tick)

    def _advance(self, tick):
        if self.pc >= len(self.steps):
            raise SimulationError(
                f"PE {self.index}: trace {self.tcb.program.name!r} ran "
                f"past its end")
        step = self.steps[self.pc]
        if step.kind == StepKind.COMPUTE:
            kind, value = step.duration
            ticks = self.regs[value] if kind == ArgKind.REG else value
            if ticks < 0:
                raise SimulationError(
                    f"PE {self.index}: negative compute duration {ticks}")
            self.busy_ticks += ticks
            self.kernel.schedule(tick + ticks, self._compute_done)
        else:
            self.lc.dispatch_syscall(tick, step, self)

    def _compute_done(self, _payload=None):
        self.pc += 1
        self._advance(self.kernel.now)

    def resume(self, tick, value, ret_reg):
        """Reply to a blocking syscall arrived; continue past it."""
        if self.state != PE_BLOCKED:
            raise SimulationError(f"PE {self.index}: reply while not blocked")
        if ret_reg >= 0:
            self.regs[ret_reg] = value
        self.state = PE_RUNNING
        self.pc += 1
        self._advance(tick)

    def release(self):
        self.state = PE_IDLE
        self.tcb = None
        self.steps = None
        self.regs = None
        self.pc = 0


class LocalController:
    """Syscall gateway between one PE and the cluster manager.

    Holds at most one outstanding blocking request; a task that issues
    a second one before the reply arrives is broken, and the run stops.
    """

    def __init__(self, index, cluster, chip, bus):
        self.index = index
        self.cluster = cluster
        self.chip = chip
        self.bus = bus
        self.addr = Address(NodeKind.LC, index)
        self.manager_addr = Address(NodeKind.GMN, cluster)
        self.pe = None
        self.has_pending = False
        self.pending_ret = -1
        self.syscalls = 0

    def dispatch_syscall(self, tick, step, pe):
        mtype, _, blocks, frees = SYSCALLS[step.syscall]
        if mtype == MessageType.RCSV_EXIT:
            data = (pe.tcb.tcb_id,)
        else:
            data = tuple(self._resolve(arg, pe.regs) for arg in step.args)
        msg = make_message(mtype, self.addr, self.manager_addr, data)
        self.syscalls += 1
        if blocks:
            if self.has_pending:
                raise SimulationError(
                    f"LC {self.index}: second blocking syscall "
                    f"{step.syscall!r} while one is outstanding")
            self.has_pending = True
            self.pending_ret = step.ret_reg
            pe.state = PE_BLOCKED
        elif frees:
            pe.release()
        else:
            raise SimulationError(
                f"LC {self.index}: syscall {step.syscall!r} neither "
                f"blocks nor frees")
        self.bus.submit(tick, msg)

    @staticmethod
    def _resolve(arg, regs):
        kind, value = arg
        if kind == ArgKind.REG:
            return regs[value]
        return value

    def receive(self, msg, tick):
        if msg.mtype == MessageType.TASK_START:
            self.pe.start_task(tick, self.chip.tcbs[msg.data[0]])
        elif msg.mtype == MessageType.SYSCALL_REPLY:
            if not self.has_pending:
                raise SimulationError(
                    f"LC {self.index}: reply with nothing outstanding")
            self.has_pending = False
            ret = self.pending_ret
            self.pending_ret = -1
            self.pe.resume(tick, msg.data[0], ret)
        else:
            raise SimulationError(
                f"LC {self.index}: cannot handle message type {msg.mtype}")
