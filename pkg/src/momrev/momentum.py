"""Momentum residual blocks: forward recurrence, exact inverse, and the
stored vs reversible backward sweeps.

One block updates an (activation, velocity) pair:

    v' = gamma * v + (1 - gamma) * f(x)
    x' = x + v'

At gamma = 0 this is a plain residual block (x' = x + f(x), bit-exactly,
since 0 * v == 0 and 1 * f == f for finite values). For gamma > 0 the map
is invertible:

    x = x' - v'
    v = (v' - (1 - gamma) * f(x)) / gamma

which is what lets a chain run backward without caching per-block states.
Both backward modes recompute f's internals from the block input (cached
in stored mode, reconstructed in reversible mode), so the per-block
working set is identical; the modes differ only in how many chain states
they retain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NotInvertibleError, NumericError, StateError
from .layers import Param, Sequential


@dataclass
class MomentumState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.x.shape != self.v.shape:
            raise ConfigError(f"state shapes differ: {self.x.shape} vs {self.v.shape}")

    @property
    def size(self) -> int:
        return self.x.size + self.v.size


STORED = "stored"
REVERSIBLE = "reversible"


class MomentumBlock:
    def __init__(self, gamma: float, f: Sequential, mode: str = STORED):
        if not 0.0 <= gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0,1], got {gamma}")
        if mode not in (STORED, REVERSIBLE):
            raise ConfigError(f"unknown mode {mode!r}")
        if mode == REVERSIBLE and gamma == 0.0:
            raise NotInvertibleError("reversible mode requires gamma > 0")
        self.gamma = gamma
        self.f = f
        self.mode = mode

    def forward(self, state: MomentumState, train=False) -> MomentumState:
        fx = self.f.forward(state.x, train=train)
        v_next = self.gamma * state.v + (1.0 - self.gamma) * fx
        x_next = state.x + v_next
        if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(v_next))):
            raise NumericError("momentum forward produced non-finite state")
        return MomentumState(x_next, v_next)

    def inverse(self, state_next: MomentumState) -> MomentumState:
        if self.gamma == 0.0:
            raise NotInvertibleError("gamma == 0 block has no inverse")
        x = state_next.x - state_next.v
        fx = self.f.forward(x, train=False)
        v = (state_next.v - (1.0 - self.gamma) * fx) / self.gamma
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise NumericError("momentum inverse produced non-finite state")
        return MomentumState(x, v)

    def backward_step(self, x_in: np.ndarray, gx_next: np.ndarray, gv_next: np.ndarray):
        """Grads through one block given its input activation.

        Returns (gx, gv). Recomputes f(x_in) to populate f's caches, then
        routes: u = gx' + gv' flows into v'; the f path carries (1-gamma)*u
        and the velocity path carries gamma*u.
        """
        self.f.clear_cache()
        self.f.forward(x_in, train=True)
        u = gx_next + gv_next
        gx_f = self.f.backward((1.0 - self.gamma) * u)
        self.f.clear_cache()
        gx = gx_next + gx_f
        gv = self.gamma * u
        return gx, gv

    def params(self):
        return self.f.params()


class MomentumChain:
    """A stack of momentum blocks over one shared state shape.

    Stored mode caches the input state of every block (2*S*n scalars for
    n blocks of state size S); reversible mode caches only the final
    state (2*S scalars) and reconstructs the rest during backward.
    """

    def __init__(self, blocks: list[MomentumBlock], v0_policy: str = "zeros",
                 state_shape=None, dtype=np.float64, name="chain"):
        if v0_policy not in ("zeros", "learned"):
            raise ConfigError(f"unknown v0 policy {v0_policy!r}")
        if v0_policy == "learned" and state_shape is None:
            raise ConfigError("learned v0 needs an explicit state shape")
        self.blocks = list(blocks)
        self.v0_policy = v0_policy
        self.v0 = (
            Param(f"{name}.v0", np.zeros(state_shape, dtype=dtype))
            if v0_policy == "learned"
            else None
        )
        self.name = name
        self._stored_states: list[MomentumState] | None = None
        self._final_state: MomentumState | None = None
        self._pending = False
        self.f_transient_peak = 0

    @property
    def mode(self) -> str:
        return self.blocks[0].mode if self.blocks else STORED

    def params(self):
        out = [self.v0] if self.v0 is not None else []
        for b in self.blocks:
            out.extend(b.params())
        return out

    def _initial_velocity(self, x0: np.ndarray) -> np.ndarray:
        if self.v0 is None:
            return np.zeros_like(x0)
        v0 = self.v0.value
        if x0.ndim == v0.ndim + 1:  # broadcast over the batch axis
            return np.broadcast_to(v0, x0.shape).astype(x0.dtype)
        return v0.astype(x0.dtype)

    def forward(self, x0: np.ndarray, v0: np.ndarray | None = None,
                train: bool = True) -> MomentumState:
        state = MomentumState(x0, v0 if v0 is not None else self._initial_velocity(x0))
        reversible = self.mode == REVERSIBLE
        stored: list[MomentumState] = []
        peak = 0
        for block in self.blocks:
            if train and not reversible:
                stored.append(state)
            block.f.clear_cache()
            out = block.forward(state, train=train)
            peak = max(peak, block.f.cache_size())
            block.f.clear_cache()
            state = out
        self.f_transient_peak = peak
        if train:
            # stored mode keeps the per-block inputs; reversible keeps only
            # the final state and reconstructs the rest during backward.
            self._stored_states = None if reversible else stored
            self._final_state = state if reversible else None
            self._pending = True
        return state

    def backward(self, gx: np.ndarray, gv: np.ndarray | None = None):
        """Returns (grad_x0, grad_v0); accumulates parameter grads."""
        if not self._pending:
            raise StateError(f"{self.name}: backward without forward")
        if gv is None:
            gv = np.zeros_like(gx)
        state = self._final_state
        for n in reversed(range(len(self.blocks))):
            block = self.blocks[n]
            if self._stored_states is not None:
                state = self._stored_states[n]
            else:
                state = block.inverse(state)
            gx, gv = block.backward_step(state.x, gx, gv)
        self._stored_states = None
        self._final_state = None
        self._pending = False
        if self.v0 is not None:
            g = gv if gv.ndim == self.v0.value.ndim else gv.sum(axis=0)
            self.v0.grad += g
        return gx, gv

    def retained_state_scalars(self) -> int:
        """Chain-state floats currently held for a pending backward."""
        total = 0
        if self._stored_states is not None:
            total += sum(s.size for s in self._stored_states)
        elif self._final_state is not None:
            total += self._final_state.size
        return total

    def clear(self):
        self._stored_states = None
        self._final_state = None
        self._pending = False
        for block in self.blocks:
            block.f.clear_cache()
