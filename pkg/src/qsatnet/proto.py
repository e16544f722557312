"""Coordinated entanglement-distribution protocol over the event engine.

A session walks the five-step sequence: a ground station radios a request
to the coordination (GEO) tier, the coordinator picks the relay (LEO)
satellite best placed over both stations, the relay distributes raw pairs
in two separate optical downlinks, the stations distill the surviving
pairs into fewer near-maximal ebits over classical rounds, and finally
teleportation consumes one ebit plus two classical bits per transferred
qubit.

Phases move only forward:

    IDLE -> REQUESTED -> COORDINATING -> DISTRIBUTING -> DISTILLING
         -> TELEPORTING -> DONE

FAILED is absorbing and reachable from any non-terminal phase.  Pair
memories enforce a hard coherence cutoff: an entry older than the memory
coherence time is never consumed.

Every step appends one JSON-friendly record to the trace:
{"t": float, "session_id": int, "event": str, "payload": {...}}.
Event names and payload keys are stable: request_sent, request_received,
leo_selected, leo_command_sent, leo_command_received, state_changed,
batch_emitted, pairs_deposited, link_lost, distill_started,
distill_completed, teleport_started, teleport_completed, session_done,
session_failed.  Message payloads carry send_t/arrive_t so a replay can
verify causality; deposit/distill/teleport payloads carry pair ids and
timestamps so a replay can audit conservation and expiry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import channel as ch
from . import geom
from .engine import Engine, Event, RngStream
from .rates import rci_array


class Phase(Enum):
    IDLE = "IDLE"
    REQUESTED = "REQUESTED"
    COORDINATING = "COORDINATING"
    DISTRIBUTING = "DISTRIBUTING"
    DISTILLING = "DISTILLING"
    TELEPORTING = "TELEPORTING"
    DONE = "DONE"
    FAILED = "FAILED"


_ORDER = [Phase.IDLE, Phase.REQUESTED, Phase.COORDINATING, Phase.DISTRIBUTING,
          Phase.DISTILLING, Phase.TELEPORTING, Phase.DONE]

# forward steps along the five-step order, plus FAILED from any non-terminal
ALLOWED_TRANSITIONS = {(a, b) for a, b in zip(_ORDER[:-1], _ORDER[1:])}
ALLOWED_TRANSITIONS |= {(p, Phase.FAILED) for p in _ORDER[:-1]}

TERMINAL_PHASES = {Phase.DONE, Phase.FAILED}


class Failure:
    NO_COORDINATOR = "NoCoordinator"
    NO_SATELLITE = "NoSatellite"
    LINK_LOST = "LinkLost"
    INSUFFICIENT_ENTANGLEMENT = "InsufficientEntanglement"


class RawPairClass:
    RAW = "RAW"
    DISTILLED = "DISTILLED"


@dataclass
class EbitEntry:
    pair_id: int
    created_at: float
    fidelity_class: str = RawPairClass.RAW


class EbitPool:
    """Timestamped inventory of shared pairs with a hard expiry cutoff."""

    def __init__(self, owner: tuple, coherence_time: float, capacity: int):
        if coherence_time <= 0:
            raise ValueError("coherence_time must be > 0")
        self.owner = owner
        self.coherence_time = coherence_time
        self.capacity = capacity
        self.entries: list[EbitEntry] = []
        # (pair_id, created_at, consumed_at) for every consume event
        self.consumed_log: list[tuple[int, float, float]] = []

    def __len__(self) -> int:
        return len(self.entries)

    def space(self) -> int:
        return self.capacity - len(self.entries)

    def is_fresh(self, entry: EbitEntry, t: float) -> bool:
        return (t - entry.created_at) <= self.coherence_time

    def deposit_raw(self, pair_ids: Sequence[int], created_at: float) -> list[int]:
        """Store raw pairs up to capacity; returns the ids actually kept."""
        existing = {e.pair_id for e in self.entries}
        accepted = []
        for pid in pair_ids:
            if pid in existing:
                raise ValueError(f"duplicate pair id {pid}")
            if self.space() <= 0:
                break
            self.entries.append(EbitEntry(pid, created_at, RawPairClass.RAW))
            accepted.append(pid)
            existing.add(pid)
        return accepted

    def raw_entries(self) -> list[EbitEntry]:
        return [e for e in self.entries if e.fidelity_class == RawPairClass.RAW]

    def fresh_raw(self, t: float) -> list[EbitEntry]:
        return [e for e in self.raw_entries() if self.is_fresh(e, t)]

    def fresh_distilled(self, t: float) -> list[EbitEntry]:
        return [e for e in self.entries
                if e.fidelity_class == RawPairClass.DISTILLED and self.is_fresh(e, t)]

    def replace_raw_with_distilled(self, consumed_ids: Sequence[int],
                                   distilled_ids: Sequence[int], t: float) -> None:
        """Drop every raw entry, logging the consumed ones, and store the
        distilled output timestamped at t."""
        consumed = set(consumed_ids)
        for e in self.raw_entries():
            if e.pair_id in consumed:
                self.consumed_log.append((e.pair_id, e.created_at, t))
        self.entries = [e for e in self.entries
                        if e.fidelity_class != RawPairClass.RAW]
        for pid in distilled_ids:
            self.entries.append(EbitEntry(pid, t, RawPairClass.DISTILLED))

    def consume_distilled(self, t: float, max_count: int) -> list[int]:
        """Use up to max_count fresh distilled pairs at time t (oldest first)."""
        usable = sorted(self.fresh_distilled(t), key=lambda e: (e.created_at, e.pair_id))
        taken = usable[:max_count]
        taken_ids = {e.pair_id for e in taken}
        for e in taken:
            self.consumed_log.append((e.pair_id, e.created_at, t))
        self.entries = [e for e in self.entries if e.pair_id not in taken_ids]
        return sorted(taken_ids)


@dataclass(frozen=True)
class DistillationPolicy:
    """Abstract distillation: m = floor(n_valid * yield_rate) after the
    classical rounds complete.  yield_rate None means "use the mean per-use
    rate of the session's two-arm product channel"."""
    rounds: int = 1
    yield_rate: Optional[float] = None
    yield_samples: int = 100_000

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.yield_rate is not None and not 0.0 <= self.yield_rate <= 1.0:
            raise ValueError("yield_rate must be in [0, 1]")


def distilled_count(n_valid: int, yield_rate: float) -> int:
    return int(math.floor(n_valid * yield_rate))


def sample_pair_survival(model_a: ch.DownlinkGaussianTail,
                         model_b: ch.DownlinkGaussianTail,
                         rng_a: RngStream, rng_b: RngStream,
                         rng_survival: RngStream, n: int) -> np.ndarray:
    """Per-pair survival mask for one distribution batch.

    Each attempted pair draws an independent transmittance from each arm and
    survives with probability eta_a * eta_b.
    """
    etas_a = np.asarray(ch.sample_downlink(model_a, rng_a, n))
    etas_b = np.asarray(ch.sample_downlink(model_b, rng_b, n))
    u = np.asarray(rng_survival.random(n))
    return u < etas_a * etas_b


@dataclass
class Session:
    id: int
    a_id: int
    b_id: int
    qubits_requested: int
    pairs_target: int
    policy: DistillationPolicy
    created_t: float
    phase: Phase = Phase.IDLE
    geo_id: Optional[int] = None
    leo_id: Optional[int] = None
    pool_a: Optional[EbitPool] = None
    pool_b: Optional[EbitPool] = None
    remaining: int = 0
    pending_deposits: int = 0
    survivors_emitted: int = 0
    distribution_done: bool = False
    eta0_a: float = 0.0
    eta0_b: float = 0.0
    yield_rate_used: Optional[float] = None
    pairs_attempted: int = 0
    pairs_survived: int = 0
    distilled_created: int = 0
    ebits_consumed: int = 0
    qubits_delivered: int = 0
    classical_bits: int = 0
    failure_reason: Optional[str] = None
    # per-session streams persist across batches so draws never repeat
    rng_arm_a: Optional[RngStream] = None
    rng_arm_b: Optional[RngStream] = None
    rng_survival: Optional[RngStream] = None


class Network:
    """Stations, satellites, and channel parameters driving sessions on an
    engine.  Protocol logic runs single-threaded inside the event loop;
    sessions are isolated state machines."""

    def __init__(self, engine: Engine, stations: Sequence[geom.GroundStation],
                 satellites: Sequence[geom.Satellite], *,
                 wavelength: float = ch.DEFAULT_WAVELENGTH,
                 downlink_b: float = 0.1,
                 min_elevation: float = geom.DEFAULT_MIN_ELEVATION,
                 earth_rotation: bool = False,
                 batch_size: Optional[int] = None,
                 source_rate_hz: float = 1e6,
                 min_raw_pairs: int = 1,
                 trace_sink: Optional[Callable[[dict], None]] = None):
        self.engine = engine
        self.stations = {s.id: s for s in stations}
        self.satellites = {s.id: s for s in satellites}
        if len(self.stations) != len(stations) or len(self.satellites) != len(satellites):
            raise ValueError("duplicate node ids")
        self.wavelength = wavelength
        self.downlink_b = downlink_b
        self.min_elevation = min_elevation
        self.earth_rotation = earth_rotation
        self.batch_size = batch_size
        self.source_rate_hz = source_rate_hz
        self.min_raw_pairs = min_raw_pairs
        self.trace: list[dict] = []
        self._trace_sink = trace_sink
        self.sessions: dict[int, Session] = {}
        self._next_session_id = 1
        self._next_pair_id = 1

    # -- node positions at a given time ------------------------------------

    def _station_pos(self, sid: int, t: float) -> np.ndarray:
        return geom.ground_position(self.stations[sid], t, self.earth_rotation)

    def _sat_pos(self, sat_id: int, t: float) -> np.ndarray:
        return geom.satellite_position(self.satellites[sat_id], t)

    def _ground_chord(self, sess: Session, t: float) -> float:
        a = self._station_pos(sess.a_id, t)
        b = self._station_pos(sess.b_id, t)
        return float(np.linalg.norm(b - a))

    # -- trace -------------------------------------------------------------

    def _emit(self, session_id: int, event: str, payload: dict) -> None:
        record = {"t": self.engine.now, "session_id": session_id,
                  "event": event, "payload": payload}
        self.trace.append(record)
        if self._trace_sink is not None:
            self._trace_sink(record)

    def _transition(self, sess: Session, new_phase: Phase) -> None:
        if (sess.phase, new_phase) not in ALLOWED_TRANSITIONS:
            raise RuntimeError(
                f"illegal transition {sess.phase.value} -> {new_phase.value}")
        old = sess.phase
        sess.phase = new_phase
        self._emit(sess.id, "state_changed",
                   {"from": old.value, "to": new_phase.value})

    def _fail(self, sess: Session, reason: str) -> None:
        sess.failure_reason = reason
        self._transition(sess, Phase.FAILED)
        self._emit(sess.id, "session_failed", {"reason": reason})

    # -- step 1: terrestrial request ----------------------------------------

    def request(self, a_id: int, b_id: int, qubits: int, pairs_target: int,
                policy: Optional[DistillationPolicy] = None,
                t: Optional[float] = None) -> Session:
        """Open a session and radio the request to the coordination tier."""
        if a_id == b_id:
            raise ValueError("a session needs two distinct stations")
        if a_id not in self.stations or b_id not in self.stations:
            raise ValueError("unknown station id")
        if qubits < 1:
            raise ValueError(f"qubits must be >= 1, got {qubits}")
        if pairs_target < 1:
            raise ValueError(f"pairs_target must be >= 1, got {pairs_target}")
        t0 = self.engine.now if t is None else float(t)
        sess = Session(self._next_session_id, a_id, b_id, qubits, pairs_target,
                       policy or DistillationPolicy(), t0)
        self._next_session_id += 1
        self.sessions[sess.id] = sess
        station_a = self.stations[a_id]
        station_b = self.stations[b_id]
        coherence = min(station_a.memory_coherence_time,
                        station_b.memory_coherence_time)
        capacity = min(station_a.memory_capacity, station_b.memory_capacity)
        sess.pool_a = EbitPool((a_id, b_id), coherence, capacity)
        sess.pool_b = EbitPool((a_id, b_id), coherence, capacity)
        sess.rng_arm_a = self.engine.stream("proto", sess.id, "arm_a")
        sess.rng_arm_b = self.engine.stream("proto", sess.id, "arm_b")
        sess.rng_survival = self.engine.stream("proto", sess.id, "survival")
        self._transition(sess, Phase.REQUESTED)

        geo_id = self._pick_geo(a_id, t0)
        if geo_id is None:
            self._fail(sess, Failure.NO_COORDINATOR)
            return sess
        sess.geo_id = geo_id
        pos_a = self._station_pos(a_id, t0)
        pos_geo = self._sat_pos(geo_id, t0)
        delay = geom.link_geometry(pos_a, pos_geo).propagation_delay
        arrive_t = t0 + delay
        self._emit(sess.id, "request_sent",
                   {"from": a_id, "to": b_id, "geo": geo_id, "qubits": qubits,
                    "pairs_target": pairs_target, "send_t": t0,
                    "arrive_t": arrive_t})
        self.engine.schedule(arrive_t, "request_arrival", self._on_request_arrival,
                             {"session_id": sess.id})
        return sess

    def _pick_geo(self, station_id: int, t: float) -> Optional[int]:
        pos = self._station_pos(station_id, t)
        best = None
        best_el = -math.inf
        for sat in self.satellites.values():
            if sat.tier is not geom.Tier.GEO:
                continue
            el = geom.elevation_angle(pos, geom.satellite_position(sat, t))
            if el < self.min_elevation:
                continue
            if el > best_el or (el == best_el and (best is None or sat.id < best)):
                best_el = el
                best = sat.id
        return best

    # -- step 2: coordination ------------------------------------------------

    def _on_request_arrival(self, ev: Event) -> None:
        sess = self.sessions[ev.payload["session_id"]]
        if sess.phase in TERMINAL_PHASES:
            return
        now = self.engine.now
        self._emit(sess.id, "request_received", {"geo": sess.geo_id})
        leos = [s for s in self.satellites.values() if s.tier is geom.Tier.LEO]
        leo_id = geom.select_leo(leos, self.stations[sess.a_id],
                                 self.stations[sess.b_id], now,
                                 self.min_elevation, self.earth_rotation)
        if leo_id is None:
            self._fail(sess, Failure.NO_SATELLITE)
            return
        sess.leo_id = leo_id
        self._transition(sess, Phase.COORDINATING)
        self._emit(sess.id, "leo_selected", {"leo": leo_id})
        delay = geom.link_geometry(self._sat_pos(sess.geo_id, now),
                                   self._sat_pos(leo_id, now)).propagation_delay
        arrive_t = now + delay
        self._emit(sess.id, "leo_command_sent",
                   {"geo": sess.geo_id, "leo": leo_id, "send_t": now,
                    "arrive_t": arrive_t})
        self.engine.schedule(arrive_t, "leo_command_arrival",
                             self._on_leo_command, {"session_id": sess.id})

    # -- step 3: entanglement distribution ------------------------------------

    def _on_leo_command(self, ev: Event) -> None:
        sess = self.sessions[ev.payload["session_id"]]
        if sess.phase in TERMINAL_PHASES:
            return
        self._emit(sess.id, "leo_command_received", {"leo": sess.leo_id})
        self._transition(sess, Phase.DISTRIBUTING)
        sess.remaining = sess.pairs_target
        self.engine.schedule(self.engine.now, "distribution_batch",
                             self._on_batch, {"session_id": sess.id})

    def _arm(self, sess: Session, station_id: int, t: float) -> tuple:
        leo = self.satellites[sess.leo_id]
        pos_leo = self._sat_pos(sess.leo_id, t)
        pos_gs = self._station_pos(station_id, t)
        link = geom.link_geometry(pos_gs, pos_leo, ground_end=pos_gs)
        eta0 = ch.diffraction_transmittance(
            ch.BeamParams(leo.aperture_radius, self.wavelength),
            self.stations[station_id].aperture_radius, link.distance)
        model = ch.DownlinkGaussianTail(eta0, self.downlink_b)
        return model, link

    def _on_batch(self, ev: Event) -> None:
        sess = self.sessions[ev.payload["session_id"]]
        if sess.phase in TERMINAL_PHASES:
            return
        now = self.engine.now
        model_a, link_a = self._arm(sess, sess.a_id, now)
        model_b, link_b = self._arm(sess, sess.b_id, now)
        if link_a.elevation < self.min_elevation or link_b.elevation < self.min_elevation:
            self._emit(sess.id, "link_lost",
                       {"leo": sess.leo_id,
                        "emitted_survivors": sess.survivors_emitted,
                        "remaining": sess.remaining})
            if sess.survivors_emitted >= self.min_raw_pairs:
                sess.distribution_done = True
                if sess.pending_deposits == 0:
                    self._start_distillation(sess)
            else:
                self._fail(sess, Failure.LINK_LOST)
            return

        n = sess.remaining if self.batch_size is None else min(self.batch_size,
                                                               sess.remaining)
        survive = sample_pair_survival(model_a, model_b, sess.rng_arm_a,
                                       sess.rng_arm_b, sess.rng_survival, n)
        survivors = int(np.count_nonzero(survive))
        pair_ids = list(range(self._next_pair_id, self._next_pair_id + survivors))
        self._next_pair_id += survivors
        arrival_t = now + max(link_a.propagation_delay, link_b.propagation_delay)
        sess.eta0_a = model_a.eta0
        sess.eta0_b = model_b.eta0
        sess.pairs_attempted += n
        sess.remaining -= n
        sess.pending_deposits += 1
        sess.survivors_emitted += survivors
        if sess.remaining == 0:
            sess.distribution_done = True
        self._emit(sess.id, "batch_emitted",
                   {"leo": sess.leo_id, "attempted": n, "survivors": survivors,
                    "eta0_a": model_a.eta0, "eta0_b": model_b.eta0,
                    "b": self.downlink_b, "emit_t": now, "arrival_t": arrival_t,
                    "slant_a_m": link_a.distance, "slant_b_m": link_b.distance})
        self.engine.schedule(arrival_t, "pairs_arrival", self._on_deposit,
                             {"session_id": sess.id, "pair_ids": pair_ids,
                              "final": sess.distribution_done})
        if not sess.distribution_done:
            self.engine.schedule(now + n / self.source_rate_hz,
                                 "distribution_batch", self._on_batch,
                                 {"session_id": sess.id})

    def _on_deposit(self, ev: Event) -> None:
        sess = self.sessions[ev.payload["session_id"]]
        sess.pending_deposits -= 1
        if sess.phase in TERMINAL_PHASES:
            return
        now = self.engine.now
        pair_ids = ev.payload["pair_ids"]
        space = min(sess.pool_a.space(), sess.pool_b.space())
        accepted = pair_ids[:max(0, space)]
        sess.pool_a.deposit_raw(accepted, now)
        sess.pool_b.deposit_raw(accepted, now)
        sess.pairs_survived += len(accepted)
        self._emit(sess.id, "pairs_deposited",
                   {"count": len(accepted), "dropped": len(pair_ids) - len(accepted),
                    "pair_ids": accepted, "created_at": now})
        if ev.payload["final"] or (sess.distribution_done and sess.pending_deposits == 0):
            self._start_distillation(sess)

    # -- step 4: distillation --------------------------------------------------

    def _start_distillation(self, sess: Session) -> None:
        now = self.engine.now
        self._transition(sess, Phase.DISTILLING)
        raw = sess.pool_a.raw_entries()
        if len(raw) == 0:
            self._fail(sess, Failure.INSUFFICIENT_ENTANGLEMENT)
            return
        rtt = 2.0 * self._ground_chord(sess, now) / geom.C_LIGHT
        completion_t = now + sess.policy.rounds * rtt
        self._emit(sess.id, "distill_started",
                   {"raw_count": len(raw), "rounds": sess.policy.rounds,
                    "rtt_s": rtt, "completion_t": completion_t})
        self.engine.schedule(completion_t, "distill_completion",
                             self._on_distill_complete, {"session_id": sess.id})

    def _session_yield_rate(self, sess: Session) -> float:
        if sess.policy.yield_rate is not None:
            return sess.policy.yield_rate
        # mean per-use rate of the two-arm product channel, sampled once per
        # session from its own substream
        rng_a = self.engine.stream("proto", sess.id, "yield_a")
        rng_b = self.engine.stream("proto", sess.id, "yield_b")
        n = sess.policy.yield_samples
        etas_a = np.asarray(ch.sample_downlink(
            ch.DownlinkGaussianTail(sess.eta0_a, self.downlink_b), rng_a, n))
        etas_b = np.asarray(ch.sample_downlink(
            ch.DownlinkGaussianTail(sess.eta0_b, self.downlink_b), rng_b, n))
        return min(1.0, float(np.mean(rci_array(etas_a * etas_b))))

    def _on_distill_complete(self, ev: Event) -> None:
        sess = self.sessions[ev.payload["session_id"]]
        if sess.phase in TERMINAL_PHASES:
            return
        now = self.engine.now
        fresh_a = {e.pair_id for e in sess.pool_a.fresh_raw(now)}
        fresh_b = {e.pair_id for e in sess.pool_b.fresh_raw(now)}
        valid_ids = sorted(fresh_a & fresh_b)
        yield_rate = self._session_yield_rate(sess)
        sess.yield_rate_used = yield_rate
        m = distilled_count(len(valid_ids), yield_rate)
        if len(valid_ids) == 0 or m == 0:
            self._fail(sess, Failure.INSUFFICIENT_ENTANGLEMENT)
            return
        distilled_ids = list(range(self._next_pair_id, self._next_pair_id + m))
        self._next_pair_id += m
        sess.pool_a.replace_raw_with_distilled(valid_ids, distilled_ids, now)
        sess.pool_b.replace_raw_with_distilled(valid_ids, distilled_ids, now)
        sess.distilled_created += m
        self._emit(sess.id, "distill_completed",
                   {"n_valid": len(valid_ids), "distilled": m,
                    "yield_rate": yield_rate, "raw_consumed_ids": valid_ids,
                    "distilled_ids": distilled_ids, "completion_t": now})
        self._transition(sess, Phase.TELEPORTING)
        self.engine.schedule(now, "teleport", self._on_teleport,
                             {"session_id": sess.id})

    # -- step 5: teleportation ---------------------------------------------------

    def _on_teleport(self, ev: Event) -> None:
        sess = self.sessions[ev.payload["session_id"]]
        if sess.phase in TERMINAL_PHASES:
            return
        now = self.engine.now
        self._emit(sess.id, "teleport_started",
                   {"requested": sess.qubits_requested})
        consumed_a = sess.pool_a.consume_distilled(now, sess.qubits_requested)
        consumed_b = sess.pool_b.consume_distilled(now, sess.qubits_requested)
        if consumed_a != consumed_b:
            raise RuntimeError("pair inventories diverged between stations")
        delivered = len(consumed_a)
        sess.ebits_consumed += delivered
        sess.qubits_delivered += delivered
        sess.classical_bits += 2 * delivered
        delivery_t = now + self._ground_chord(sess, now) / geom.C_LIGHT
        self._emit(sess.id, "teleport_completed",
                   {"requested": sess.qubits_requested, "delivered": delivered,
                    "classical_bits": 2 * delivered,
                    "consumed_pair_ids": consumed_a, "consume_t": now,
                    "delivery_t": delivery_t})
        if delivered < sess.qubits_requested:
            self._fail(sess, Failure.INSUFFICIENT_ENTANGLEMENT)
            return
        self.engine.schedule(delivery_t, "delivery_complete", self._on_delivered,
                             {"session_id": sess.id})

    def _on_delivered(self, ev: Event) -> None:
        sess = self.sessions[ev.payload["session_id"]]
        if sess.phase in TERMINAL_PHASES:
            return
        self._transition(sess, Phase.DONE)
        self._emit(sess.id, "session_done",
                   {"qubits_delivered": sess.qubits_delivered,
                    "classical_bits": sess.classical_bits})

    # -- aggregate accounting ------------------------------------------------------

    def summary(self) -> dict:
        out = {"qubits_delivered": 0, "ebits_consumed": 0,
               "pairs_attempted": 0, "pairs_survived": 0,
               "sessions_done": 0, "sessions_failed": 0}
        for sess in self.sessions.values():
            out["qubits_delivered"] += sess.qubits_delivered
            out["ebits_consumed"] += sess.ebits_consumed
            out["pairs_attempted"] += sess.pairs_attempted
            out["pairs_survived"] += sess.pairs_survived
            out["sessions_done"] += sess.phase is Phase.DONE
            out["sessions_failed"] += sess.phase is Phase.FAILED
        return out
