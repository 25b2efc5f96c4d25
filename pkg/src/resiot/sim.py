"""Discrete-event core: simulated clock, message fabric, faults, transcripts.

The fabric moves encoded messages between principals with per-link
latency. It knows nothing about protocol semantics beyond the step number
and kind each sender attaches, which is what fault rules match on.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

from .errors import ResiotError
from .suite import Rng


class SimClock:
    """Event queue ordered by (time, insertion sequence)."""

    def __init__(self, start=0.0):
        self.now = float(start)
        self._heap = []
        self._seq = itertools.count()

    def schedule(self, at, fn, *args):
        if at < self.now:
            raise ValueError(f"cannot schedule in the past ({at} < {self.now})")
        ev = _Event(fn, args)
        heapq.heappush(self._heap, (at, next(self._seq), ev))
        return ev

    def call_later(self, delay, fn, *args):
        return self.schedule(self.now + max(0.0, delay), fn, *args)

    def run(self):
        while self._heap:
            at, _, ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.now = at
            ev.fn(*ev.args)

    @property
    def pending(self):
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)


class _Event:
    __slots__ = ("fn", "args", "cancelled")

    def __init__(self, fn, args):
        self.fn = fn
        self.args = args
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


@dataclass(frozen=True)
class FabricConfig:
    """One-way link latencies in ms.

    A device-SA request/response exchange therefore costs
    ``2 * latency_device_sa``; ``from_latencies`` splits the measured
    device-SA exchange time evenly across the two directions.
    """

    latency_device_device: float = 56.0
    latency_device_sa: float = 121.5
    jitter_ms: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.latency_device_device, self.latency_device_sa, self.jitter_ms) < 0:
            raise ValueError("latencies must be >= 0")

    @classmethod
    def from_latencies(cls, latencies, jitter_ms=0.0, seed=0):
        return cls(latencies.t_com_d, latencies.t_com_d_sa / 2.0, jitter_ms, seed)


FAULT_ACTIONS = ("drop", "bitflip", "replace", "replay")


@dataclass(frozen=True)
class Fault:
    """A mutation applied to one message of one run.

    ``field=None`` targets the encoded wire bytes (after any sealing);
    naming a field mutates that logical field before sealing, i.e. the
    sending principal misbehaves or the value is altered before it is
    protected.
    """

    step: int
    action: str
    field: str | None = None
    kind: str | None = None
    bit: int = 0
    value: bytes | None = None
    source_run: str | None = None

    def __post_init__(self):
        if self.action not in FAULT_ACTIONS:
            raise ValueError(f"unknown fault action {self.action!r}")
        if self.action == "replay" and not self.source_run:
            raise ValueError("replay fault needs source_run")

    def describe(self):
        target = self.field or "wire"
        extra = f" from {self.source_run}" if self.source_run else ""
        return f"{self.action}:{target}@step{self.step}{extra}"


def flip_bit(data, bit):
    data = bytearray(data)
    if not data:
        return bytes(data)
    bit %= len(data) * 8
    data[bit // 8] ^= 1 << (bit % 8)
    return bytes(data)


@dataclass
class TranscriptEntry:
    seq: int
    run_id: str
    session_id: str
    step: int
    kind: str
    sender: str
    receiver: str
    wire_sender: str
    wire_receiver: str
    sent_at: float
    delivered_at: float | None
    wire: bytes
    fields: dict
    sealed: bool
    fault: str | None = None

    def visible_bytes(self):
        """Everything an endpoint of this message can observe."""
        parts = [self.wire, self.wire_sender.encode(), self.wire_receiver.encode(),
                 bytes.fromhex(self.session_id)]
        parts.extend(self.fields.values())
        return parts

    def as_dict(self):
        return {
            "seq": self.seq, "run": self.run_id, "session": self.session_id, "step": self.step,
            "kind": self.kind, "sender": self.sender, "receiver": self.receiver,
            "wire_sender": self.wire_sender, "wire_receiver": self.wire_receiver,
            "sent_at": round(self.sent_at, 6),
            "delivered_at": None if self.delivered_at is None else round(self.delivered_at, 6),
            "sealed": self.sealed, "fault": self.fault,
            "fields": {k: v.hex() for k, v in self.fields.items()},
            "wire": self.wire.hex(),
        }


class UnknownPrincipal(ResiotError, KeyError):
    pass


class Transcript:
    def __init__(self):
        self.entries = []
        self.principals = set()

    def add(self, entry):
        self.entries.append(entry)

    def for_run(self, run_id):
        sub = Transcript()
        sub.principals = set(self.principals)
        sub.entries = [e for e in self.entries if e.run_id == run_id]
        return sub

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


def transcript_view(transcript, principal):
    """Messages ``principal`` sent or received, in transmission order."""
    pid = getattr(principal, "id", principal)
    if pid not in transcript.principals:
        raise UnknownPrincipal(pid)
    return [e for e in transcript.entries if e.sender == pid or e.receiver == pid]


@dataclass
class _Endpoint:
    role: str
    handler: object
    deliveries: int = 0


class Fabric:
    """Latency-configurable message fabric with fault injection."""

    def __init__(self, clock, config=None):
        self.clock = clock
        self.config = config or FabricConfig()
        self.endpoints = {}
        self.transcript = Transcript()
        self.faults = {}
        self._history = {}
        self._seq = itertools.count()
        self._jitter = Rng(self.config.seed).fork("jitter")

    def register(self, pid, role, handler):
        self.endpoints[pid] = _Endpoint(role, handler)
        self.transcript.principals.add(pid)

    def add_faults(self, run_id, faults):
        self.faults.setdefault(run_id, []).extend(faults)

    def latency(self, a, b):
        roles = {self.endpoints[a].role, self.endpoints[b].role}
        base = self.config.latency_device_sa if "security-agent" in roles else self.config.latency_device_device
        if self.config.jitter_ms:
            base += self._jitter.random() * self.config.jitter_ms
        return base

    def _take_fault(self, run_id, step, kind):
        pending = self.faults.get(run_id, [])
        for i, f in enumerate(pending):
            if f.step == step and (f.kind is None or f.kind == kind):
                return pending.pop(i)
        return None

    def transmit(self, *, run_id, session_id, step, kind, sender, receiver, wire_sender, wire_receiver,
                 fields, finalize, sealed=False):
        """Send one message.

        ``finalize(fields) -> bytes`` seals and encodes the (possibly
        mutated) logical fields into wire bytes.
        """
        fields = dict(fields)
        fault = self._take_fault(run_id, step, kind)
        if fault is not None and fault.field is not None:
            fields = self._mutate_fields(fault, run_id, step, kind, fields)
        wire = finalize(fields)
        if fault is not None and fault.field is None and fault.action != "drop":
            wire = self._mutate_wire(fault, step, kind, wire)
        self._history[(run_id, step, kind)] = (fields, wire)
        entry = TranscriptEntry(
            seq=next(self._seq), run_id=run_id, session_id=session_id.hex(), step=step, kind=kind,
            sender=sender, receiver=receiver, wire_sender=wire_sender, wire_receiver=wire_receiver,
            sent_at=self.clock.now, delivered_at=None, wire=wire, fields=fields, sealed=sealed,
            fault=fault.describe() if fault else None)
        self.transcript.add(entry)
        if fault is not None and fault.action == "drop":
            return entry
        self.clock.call_later(self.latency(sender, receiver), self._deliver, entry)
        return entry

    def _deliver(self, entry):
        entry.delivered_at = self.clock.now
        ep = self.endpoints[entry.receiver]
        ep.deliveries += 1
        ep.handler(entry.wire, entry)

    def _mutate_fields(self, fault, run_id, step, kind, fields):
        name = fault.field
        if fault.action == "replay":
            source = self._history.get((fault.source_run, step, kind))
            if source is None:
                raise ResiotError(f"replay source {fault.source_run} has no step {step} {kind} message")
            src_fields = source[0]
            if name == "*":
                return dict(src_fields)
            fields[name] = src_fields[name]
            return fields
        if name not in fields:
            raise ResiotError(f"step {step} {kind} has no field {name!r}")
        if fault.action == "bitflip":
            fields[name] = flip_bit(fields[name], fault.bit)
        elif fault.action == "replace":
            fields[name] = fault.value if fault.value is not None else bytes(len(fields[name]))
        elif fault.action == "drop":
            del fields[name]
        return fields

    def _mutate_wire(self, fault, step, kind, wire):
        if fault.action == "bitflip":
            return flip_bit(wire, fault.bit)
        if fault.action == "replace":
            return fault.value or b""
        if fault.action == "replay":
            # whole-message replay of an earlier run's message
            source = self._history.get((fault.source_run, step, kind))
            if source is None:
                raise ResiotError(f"replay source {fault.source_run} has no step {step} {kind} message")
            return source[1]
        return wire


__all__ = [
    "SimClock", "FabricConfig", "Fault", "Fabric", "Transcript", "TranscriptEntry",
    "transcript_view", "flip_bit", "UnknownPrincipal", "FAULT_ACTIONS",
]
