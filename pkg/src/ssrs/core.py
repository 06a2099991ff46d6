"""Shared domain containers: transitions, trajectory stacks, reward sets, replay.

The replay buffer keeps both the stored (possibly shaped) reward and the
original environment reward for every entry, so shaping is always reversible
and the shaped/unshaped populations can be told apart exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Transition",
    "TrajectoryMatrix",
    "RewardSet",
    "update_reward_set",
    "ReplayBuffer",
    "save_buffer",
    "load_buffer",
    "save_trajectory",
    "load_trajectory",
    "BUFFER_FORMAT_VERSION",
]

BUFFER_FORMAT_VERSION = 1

# Checkpoint header: format_version, state width, action width, capacity, count
# as little-endian unsigned 64-bit integers, followed by one float64 row per
# stored entry (see ``save_buffer``).
_HEADER = struct.Struct("<5Q")


# ---------------------------------------------------------------------------
# transitions and trajectories
# ---------------------------------------------------------------------------

@dataclass
class Transition:
    """One environment step.

    States are nonnegative vectors (RAM-like observations scaled to [0, 255]);
    actions are vector-encoded (one-hot for discrete action spaces).
    """

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.float64)
        self.action = np.asarray(self.action, dtype=np.float64)
        self.next_state = np.asarray(self.next_state, dtype=np.float64)
        if self.state.ndim != 1 or self.next_state.ndim != 1:
            raise ValueError("states must be 1-D vectors")
        if self.action.ndim != 1:
            raise ValueError("action must be a 1-D vector")
        if self.state.shape != self.next_state.shape:
            raise ValueError(
                f"state and next_state lengths differ: "
                f"{self.state.shape[0]} vs {self.next_state.shape[0]}"
            )
        if self.state.size == 0 or self.action.size == 0:
            raise ValueError("state and action must be non-empty")
        if np.any(self.state < 0) or np.any(self.next_state < 0):
            raise ValueError("state components must be nonnegative")
        self.reward = float(self.reward)
        self.terminal = bool(self.terminal)


@dataclass
class TrajectoryMatrix:
    """A stacked episode: row t holds (state, action, reward) of step t.

    ``states`` is (N, m1) and nonnegative, ``actions`` is (N, m2), ``rewards``
    is (N,).  Augmentations operate on ``states`` only and must leave the
    other two blocks untouched.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if self.states.ndim != 2 or self.actions.ndim != 2:
            raise ValueError("states and actions must be 2-D (one row per step)")
        if self.rewards.ndim != 1:
            raise ValueError("rewards must be 1-D (one entry per step)")
        n = self.states.shape[0]
        if self.actions.shape[0] != n or self.rewards.shape[0] != n:
            raise ValueError("states, actions and rewards must have equal row counts")
        if np.any(self.states < 0):
            raise ValueError("state rows must be nonnegative")

    def __len__(self) -> int:
        return self.states.shape[0]

    @classmethod
    def from_transitions(cls, transitions) -> "TrajectoryMatrix":
        if not transitions:
            raise ValueError("cannot build a trajectory from zero transitions")
        return cls(
            states=np.stack([t.state for t in transitions]),
            actions=np.stack([t.action for t in transitions]),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
        )

    @classmethod
    def single(cls, transition: Transition) -> "TrajectoryMatrix":
        """One-row trajectory holding a single transition's (s, a, r)."""
        return cls(
            states=transition.state[None, :],
            actions=transition.action[None, :],
            rewards=np.array([transition.reward], dtype=np.float64),
        )


# ---------------------------------------------------------------------------
# reward candidate set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewardSet:
    """Fixed-size grid of candidate reward values.

    ``values`` always holds exactly ``size`` strictly increasing entries.
    ``observed`` records the distinct true reward values folded in so far;
    whenever it is non-empty, its min and max are members of ``values``.
    """

    values: np.ndarray
    observed: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("candidate grid needs at least two values")
        if np.any(np.diff(values) <= 0):
            raise ValueError("candidate values must be strictly increasing")

    @property
    def size(self) -> int:
        return int(self.values.size)

    @classmethod
    def initial(cls, size: int) -> "RewardSet":
        """Placeholder grid used before any reward has been observed.

        Spans [0, 1] so the grid is well-formed; it is rebuilt from scratch
        on the first recorded reward.
        """
        if size < 2:
            raise ValueError("reward set size must be at least 2")
        return cls(values=np.linspace(0.0, 1.0, size), observed=())


def update_reward_set(zset: RewardSet, r_new: float) -> RewardSet:
    """Fold a newly observed reward value into the candidate grid.

    The grid is rebuilt as ``size`` equally spaced points spanning the
    observed range.  While only a single distinct value v has been seen the
    span is anchored at zero ([min(0, v), max(0, v)]): zero rewards are
    ubiquitous in sparse settings, so the grid should always be able to
    express "no reward".  Repeated values are a no-op.
    """
    r = float(r_new)
    if r in zset.observed:
        return zset
    observed = tuple(sorted((*zset.observed, r)))
    lo, hi = observed[0], observed[-1]
    if lo == hi:
        lo, hi = min(0.0, lo), max(0.0, hi)
    if lo == hi:
        # Only the value 0 has ever been recorded; keep a unit span so the
        # grid entries stay distinct.
        lo, hi = 0.0, 1.0
    return RewardSet(values=np.linspace(lo, hi, zset.size), observed=observed)


# ---------------------------------------------------------------------------
# replay buffer
# ---------------------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions with shaping bookkeeping.

    Entry layout per slot: state, action, stored reward (possibly shaped),
    next state, terminal flag, original environment reward, shaped flag.
    ``shaped[i] == False`` always implies ``rewards[i] == originals[i]``.

    Slots are physical ring positions; they are returned by :meth:`push` and
    :meth:`sample` and stay valid until the slot is overwritten by eviction.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._m1 = None
        self._m2 = None
        self._next = 0      # next physical slot to write
        self._size = 0
        self._nonzero = 0   # cached count of entries with original reward != 0

    # -- sizing -------------------------------------------------------------

    def __len__(self) -> int:
        return self._size

    @property
    def state_width(self):
        return self._m1

    @property
    def action_width(self):
        return self._m2

    @property
    def nonzero_reward_count(self) -> int:
        """Number of stored entries whose *original* reward is nonzero."""
        return self._nonzero

    @property
    def nonzero_reward_fraction(self) -> float:
        """Fraction of stored entries with nonzero original reward."""
        if self._size == 0:
            return 0.0
        return self._nonzero / self._size

    def _allocate(self, m1: int, m2: int):
        self._m1, self._m2 = m1, m2
        cap = self.capacity
        self._states = np.zeros((cap, m1))
        self._actions = np.zeros((cap, m2))
        self._rewards = np.zeros(cap)
        self._next_states = np.zeros((cap, m1))
        self._terminals = np.zeros(cap, dtype=bool)
        self._originals = np.zeros(cap)
        self._shaped = np.zeros(cap, dtype=bool)

    # -- writing ------------------------------------------------------------

    def push(self, transition: Transition) -> int:
        """Append a transition, evicting the oldest entry when full.

        Returns the physical slot the transition was written to.
        """
        if self._m1 is None:
            self._allocate(transition.state.size, transition.action.size)
        if transition.state.size != self._m1 or transition.action.size != self._m2:
            raise ValueError(
                f"dimension mismatch: buffer holds ({self._m1}, {self._m2}) "
                f"vectors, got ({transition.state.size}, {transition.action.size})"
            )
        slot = self._next
        if self._size == self.capacity and self._originals[slot] != 0.0:
            self._nonzero -= 1
        self._states[slot] = transition.state
        self._actions[slot] = transition.action
        self._rewards[slot] = transition.reward
        self._next_states[slot] = transition.next_state
        self._terminals[slot] = transition.terminal
        self._originals[slot] = transition.reward
        self._shaped[slot] = False
        if transition.reward != 0.0:
            self._nonzero += 1
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        return slot

    def set_reward(self, slot: int, value: float, shaped: bool):
        """Overwrite the stored reward of a slot (shaping write-back).

        An unshaped entry must carry its original reward; callers reverting a
        shaped entry pass the original value with ``shaped=False``.
        """
        value = float(value)
        if not shaped and value != self._originals[slot]:
            raise ValueError("unshaped entries must keep their original reward")
        self._rewards[slot] = value
        self._shaped[slot] = shaped

    # -- reading ------------------------------------------------------------

    def slots(self) -> np.ndarray:
        """Physical slots of all stored entries, oldest first."""
        start = (self._next - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def zero_reward_slots(self) -> np.ndarray:
        """Slots whose original reward is zero, in ascending slot order."""
        occupied = np.sort(self.slots())
        return occupied[self._originals[occupied] == 0.0]

    def transition_at(self, slot: int) -> Transition:
        return Transition(
            state=self._states[slot].copy(),
            action=self._actions[slot].copy(),
            reward=float(self._rewards[slot]),
            next_state=self._next_states[slot].copy(),
            terminal=bool(self._terminals[slot]),
        )

    def original_reward_at(self, slot: int) -> float:
        return float(self._originals[slot])

    def is_shaped(self, slot: int) -> bool:
        return bool(self._shaped[slot])

    def batch_arrays(self, slots: np.ndarray) -> dict:
        """Gather entry fields for a slot array (views are copies)."""
        slots = np.asarray(slots)
        return {
            "states": self._states[slots].copy(),
            "actions": self._actions[slots].copy(),
            "rewards": self._rewards[slots].copy(),
            "next_states": self._next_states[slots].copy(),
            "terminals": self._terminals[slots].copy(),
            "originals": self._originals[slots].copy(),
            "shaped": self._shaped[slots].copy(),
        }

    # -- sampling -----------------------------------------------------------

    def sample_slots(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``batch_size`` slots uniformly with replacement.

        Consumes exactly one generator call, so identical generator state
        yields identical slot sequences.
        """
        if batch_size <= 0:
            raise ValueError("batch size must be positive")
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        logical = rng.integers(0, self._size, size=batch_size)
        start = (self._next - self._size) % self.capacity
        return (start + logical) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform-with-replacement batch as (slot, Transition) pairs."""
        slots = self.sample_slots(batch_size, rng)
        return [(int(s), self.transition_at(s)) for s in slots]


# ---------------------------------------------------------------------------
# buffer checkpoints
# ---------------------------------------------------------------------------
#
# Binary layout (documented for external readers):
#   bytes 0..39   header: five little-endian uint64 fields
#                 (format_version, m1, m2, capacity, count)
#   bytes 40..    count rows of (2*m1 + m2 + 4) little-endian float64 values,
#                 oldest entry first, each row laid out as
#                 [state (m1) | action (m2) | stored reward | next state (m1)
#                  | terminal (0.0/1.0) | original reward | shaped (0.0/1.0)]

def save_buffer(buffer: ReplayBuffer, path):
    """Write a replay buffer checkpoint (see module comment for the layout)."""
    if buffer.state_width is None:
        m1 = m2 = 0
        payload = np.zeros(0)
    else:
        m1, m2 = buffer.state_width, buffer.action_width
        order = buffer.slots()
        payload = np.hstack([
            buffer._states[order],
            buffer._actions[order],
            buffer._rewards[order, None],
            buffer._next_states[order],
            buffer._terminals[order, None].astype(np.float64),
            buffer._originals[order, None],
            buffer._shaped[order, None].astype(np.float64),
        ])
    header = _HEADER.pack(
        BUFFER_FORMAT_VERSION, m1, m2, buffer.capacity, len(buffer)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.astype("<f8").tobytes())


def load_buffer(path) -> ReplayBuffer:
    """Read a checkpoint written by :func:`save_buffer` (bit-exact round trip)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated buffer checkpoint")
    version, m1, m2, capacity, count = _HEADER.unpack_from(raw)
    if version != BUFFER_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported buffer format version {version}")
    buffer = ReplayBuffer(capacity)
    if count == 0:
        return buffer
    row_width = 2 * m1 + m2 + 4
    expected = _HEADER.size + 8 * row_width * count
    if len(raw) != expected:
        raise ValueError(
            f"{path}: payload size mismatch (expected {expected} bytes, "
            f"got {len(raw)})"
        )
    rows = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(count, row_width)
    buffer._allocate(m1, m2)
    for i in range(count):
        row = rows[i]
        slot = buffer._next
        buffer._states[slot] = row[:m1]
        buffer._actions[slot] = row[m1:m1 + m2]
        buffer._rewards[slot] = row[m1 + m2]
        buffer._next_states[slot] = row[m1 + m2 + 1:2 * m1 + m2 + 1]
        buffer._terminals[slot] = bool(row[2 * m1 + m2 + 1])
        buffer._originals[slot] = row[2 * m1 + m2 + 2]
        buffer._shaped[slot] = bool(row[2 * m1 + m2 + 3])
        if buffer._originals[slot] != 0.0:
            buffer._nonzero += 1
        buffer._next = (buffer._next + 1) % buffer.capacity
        buffer._size = min(buffer._size + 1, buffer.capacity)
    return buffer


# ---------------------------------------------------------------------------
# trajectory files
# ---------------------------------------------------------------------------
#
# CSV with a header naming the blocks column by column
# (s0..s{m1-1}, a0..a{m2-1}, r), one row per step, floats written with
# 17 significant digits and "\n" line endings.

def save_trajectory(traj: TrajectoryMatrix, path):
    import csv

    m1 = traj.states.shape[1]
    m2 = traj.actions.shape[1]
    header = [f"s{i}" for i in range(m1)] + [f"a{i}" for i in range(m2)] + ["r"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(traj)):
            row = [*traj.states[i], *traj.actions[i], traj.rewards[i]]
            writer.writerow(format(v, ".17g") for v in row)


def load_trajectory(path) -> TrajectoryMatrix:
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty trajectory file")
        m1 = sum(1 for name in header if name.startswith("s"))
        m2 = sum(1 for name in header if name.startswith("a"))
        if m1 == 0 or header[-1] != "r" or m1 + m2 + 1 != len(header):
            raise ValueError(f"{path}: malformed trajectory header")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: trajectory holds no steps")
    data = np.array(rows)
    return TrajectoryMatrix(states=data[:, :m1], actions=data[:, m1:m1 + m2],
                            rewards=data[:, -1])
