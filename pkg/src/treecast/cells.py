"""Scalar recurrent cells (simple RNN, LSTM, GRU) with exact gradients.

Hidden size is always 1; parameters are a handful of scalars per cell. The
GRU additionally supports a vector input channel (input weights widen to d
scalars per gate) for the neighbor-augmented variant, still with a scalar
hidden state.

The module provides:

* single-step transition functions (``rnn_step``, ``lstm_step``, ``gru_step``),
* ``unroll`` over a sequence,
* ``bptt_gradients`` — exact reverse-mode derivatives of a squared-error
  sequence loss plus an optional quadratic pull toward a prior mean,
* ``finite_diff_check`` — central-difference verification of those gradients.

A batched forward/backward pass over many windows at once (used by the
trainers) lives here too; the public single-sequence operations are the
batch-of-one special case of the same code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


def sigmoid(x):
    """Numerically stable logistic function (sign-split form)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# Parameter records
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RnnParams:
    u: float = 0.0
    w: float = 0.0
    b: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.array([self.u, self.w, self.b], dtype=float)

    @classmethod
    def from_vector(cls, v) -> "RnnParams":
        u, w, b = (float(x) for x in v)
        return cls(u, w, b)


@dataclass(frozen=True)
class LstmParams:
    u_i: float = 0.0
    w_i: float = 0.0
    b_i: float = 0.0
    u_f: float = 0.0
    w_f: float = 0.0
    b_f: float = 0.0
    u_o: float = 0.0
    w_o: float = 0.0
    b_o: float = 0.0
    u_c: float = 0.0
    w_c: float = 0.0
    b_c: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.u_i, self.u_f, self.u_o, self.u_c,
                self.w_i, self.w_f, self.w_o, self.w_c,
                self.b_i, self.b_f, self.b_o, self.b_c,
            ],
            dtype=float,
        )

    @classmethod
    def from_vector(cls, v) -> "LstmParams":
        u_i, u_f, u_o, u_c, w_i, w_f, w_o, w_c, b_i, b_f, b_o, b_c = (float(x) for x in v)
        return cls(u_i, w_i, b_i, u_f, w_f, b_f, u_o, w_o, b_o, u_c, w_c, b_c)


@dataclass(frozen=True)
class GruParams:
    u_z: float = 0.0
    w_z: float = 0.0
    b_z: float = 0.0
    u_r: float = 0.0
    w_r: float = 0.0
    b_r: float = 0.0
    u_v: float = 0.0
    w_v: float = 0.0
    b_v: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.u_z, self.u_r, self.u_v,
                self.w_z, self.w_r, self.w_v,
                self.b_z, self.b_r, self.b_v,
            ],
            dtype=float,
        )

    @classmethod
    def from_vector(cls, v) -> "GruParams":
        u_z, u_r, u_v, w_z, w_r, w_v, b_z, b_r, b_v = (float(x) for x in v)
        return cls(u_z, w_z, b_z, u_r, w_r, b_r, u_v, w_v, b_v)


CellParams = Union[RnnParams, LstmParams, GruParams]


@dataclass(frozen=True)
class CellState:
    """Hidden output s, plus the LSTM memory cell c (unused for RNN/GRU)."""

    s: float = 0.0
    c: float = 0.0


@dataclass(frozen=True)
class LossSpec:
    """Loss = sum_t 0.5*tau_like*(target_t - output_t)^2
            + 0.5*tau_prior*||params - prior_mean||^2."""

    tau_like: float = 1.0
    tau_prior: float = 0.0
    prior_mean: np.ndarray | None = None  # flat vector, same layout as the cell


# --------------------------------------------------------------------------
# Single-step transitions (scalar)
# --------------------------------------------------------------------------


def rnn_step(params: RnnParams, x: float, s_prev: float) -> float:
    return float(np.tanh(x * params.u + s_prev * params.w + params.b))


def lstm_step(params: LstmParams, x: float, state: CellState) -> CellState:
    i = sigmoid(x * params.u_i + state.s * params.w_i + params.b_i)
    f = sigmoid(x * params.u_f + state.s * params.w_f + params.b_f)
    o = sigmoid(x * params.u_o + state.s * params.w_o + params.b_o)
    c_tilde = float(np.tanh(x * params.u_c + state.s * params.w_c + params.b_c))
    c = f * state.c + i * c_tilde
    s = o * float(np.tanh(c))
    return CellState(float(s), float(c))


def gru_step(params: GruParams, x: float, s_prev: float) -> float:
    z = sigmoid(x * params.u_z + s_prev * params.w_z + params.b_z)
    r = sigmoid(x * params.u_r + s_prev * params.w_r + params.b_r)
    v = float(np.tanh(x * params.u_v + (s_prev * r) * params.w_v + params.b_v))
    return float(z * v + (1.0 - z) * s_prev)


def unroll(params: CellParams, inputs, state0: CellState | None = None) -> np.ndarray:
    """Hidden output after each input; length equals the input length."""
    state = state0 or CellState()
    outputs = np.empty(len(inputs))
    if isinstance(params, GruParams):
        s = state.s
        for t, x in enumerate(inputs):
            s = gru_step(params, float(x), s)
            outputs[t] = s
    elif isinstance(params, LstmParams):
        for t, x in enumerate(inputs):
            state = lstm_step(params, float(x), state)
            outputs[t] = state.s
    elif isinstance(params, RnnParams):
        s = state.s
        for t, x in enumerate(inputs):
            s = rnn_step(params, float(x), s)
            outputs[t] = s
    else:
        raise TypeError(f"unknown cell parameter type {type(params)!r}")
    return outputs


# --------------------------------------------------------------------------
# Batched forward/backward over windows, vector input dimension d
#
# Flat layouts (d = input dimension):
#   gru : [u_z(d), u_r(d), u_v(d), w_z, w_r, w_v, b_z, b_r, b_v]
#   lstm: [u_i(d), u_f(d), u_o(d), u_c(d), w_i, w_f, w_o, w_c, b_i, b_f, b_o, b_c]
#   rnn : [u(d), w, b]
# For d = 1 these coincide with the dataclass ``as_vector`` orders.
# --------------------------------------------------------------------------


def gru_theta_size(d: int) -> int:
    return 3 * d + 6


def gru_forward(theta: np.ndarray, X: np.ndarray):
    """Unroll a GRU over a batch of windows.

    ``X`` has shape (B, T, d); returns states ``S`` of shape (B, T) started
    from a zero hidden state, plus the cache consumed by :func:`gru_backward`.
    """
    B, T, d = X.shape
    u_z, u_r, u_v = theta[0:d], theta[d:2 * d], theta[2 * d:3 * d]
    w_z, w_r, w_v, b_z, b_r, b_v = theta[3 * d:3 * d + 6]
    S = np.empty((B, T))
    Z = np.empty((B, T))
    R = np.empty((B, T))
    V = np.empty((B, T))
    s = np.zeros(B)
    for t in range(T):
        x = X[:, t, :]
        z = sigmoid(x @ u_z + w_z * s + b_z)
        r = sigmoid(x @ u_r + w_r * s + b_r)
        v = np.tanh(x @ u_v + (s * r) * w_v + b_v)
        Z[:, t], R[:, t], V[:, t] = z, r, v
        s = z * v + (1.0 - z) * s
        S[:, t] = s
    return S, (Z, R, V)


def gru_backward(theta: np.ndarray, X: np.ndarray, S: np.ndarray, cache, G: np.ndarray) -> np.ndarray:
    """Accumulate dL/dtheta given per-step external gradients G[b, t] = dL/dS[b, t]."""
    B, T, d = X.shape
    Z, R, V = cache
    w_z, w_r, w_v = theta[3 * d], theta[3 * d + 1], theta[3 * d + 2]
    grad = np.zeros_like(theta)
    g = np.zeros(B)  # dL/ds_t carried backward through the recurrence
    for t in range(T - 1, -1, -1):
        gt = G[:, t] + g
        z, r, v = Z[:, t], R[:, t], V[:, t]
        s_prev = S[:, t - 1] if t > 0 else np.zeros(B)
        d_az = gt * (v - s_prev) * z * (1.0 - z)
        d_av = gt * z * (1.0 - v * v)
        d_ar = d_av * s_prev * w_v * r * (1.0 - r)
        x = X[:, t, :]
        grad[0:d] += d_az @ x
        grad[d:2 * d] += d_ar @ x
        grad[2 * d:3 * d] += d_av @ x
        grad[3 * d] += d_az @ s_prev
        grad[3 * d + 1] += d_ar @ s_prev
        grad[3 * d + 2] += d_av @ (s_prev * r)
        grad[3 * d + 3] += d_az.sum()
        grad[3 * d + 4] += d_ar.sum()
        grad[3 * d + 5] += d_av.sum()
        g = gt * (1.0 - z) + d_az * w_z + d_av * w_v * r + d_ar * w_r
    return grad


def lstm_forward(theta: np.ndarray, X: np.ndarray):
    B, T, d = X.shape
    u_i, u_f, u_o, u_c = (theta[k * d:(k + 1) * d] for k in range(4))
    w_i, w_f, w_o, w_c, b_i, b_f, b_o, b_c = theta[4 * d:4 * d + 8]
    S = np.empty((B, T))
    C = np.empty((B, T))
    I = np.empty((B, T))
    F = np.empty((B, T))
    O = np.empty((B, T))
    Ct = np.empty((B, T))
    s = np.zeros(B)
    c = np.zeros(B)
    for t in range(T):
        x = X[:, t, :]
        i = sigmoid(x @ u_i + w_i * s + b_i)
        f = sigmoid(x @ u_f + w_f * s + b_f)
        o = sigmoid(x @ u_o + w_o * s + b_o)
        ct = np.tanh(x @ u_c + w_c * s + b_c)
        c = f * c + i * ct
        s = o * np.tanh(c)
        I[:, t], F[:, t], O[:, t], Ct[:, t] = i, f, o, ct
        C[:, t], S[:, t] = c, s
    return S, (C, I, F, O, Ct)


def lstm_backward(theta: np.ndarray, X: np.ndarray, S: np.ndarray, cache, G: np.ndarray) -> np.ndarray:
    B, T, d = X.shape
    C, I, F, O, Ct = cache
    w_i, w_f, w_o, w_c = theta[4 * d:4 * d + 4]
    grad = np.zeros_like(theta)
    gs = np.zeros(B)
    gc = np.zeros(B)
    for t in range(T - 1, -1, -1):
        gs_t = G[:, t] + gs
        i, f, o, ct = I[:, t], F[:, t], O[:, t], Ct[:, t]
        c = C[:, t]
        c_prev = C[:, t - 1] if t > 0 else np.zeros(B)
        s_prev = S[:, t - 1] if t > 0 else np.zeros(B)
        tc = np.tanh(c)
        gc_t = gs_t * o * (1.0 - tc * tc) + gc
        d_ao = gs_t * tc * o * (1.0 - o)
        d_ai = gc_t * ct * i * (1.0 - i)
        d_af = gc_t * c_prev * f * (1.0 - f)
        d_ac = gc_t * i * (1.0 - ct * ct)
        x = X[:, t, :]
        grad[0:d] += d_ai @ x
        grad[d:2 * d] += d_af @ x
        grad[2 * d:3 * d] += d_ao @ x
        grad[3 * d:4 * d] += d_ac @ x
        grad[4 * d + 0] += d_ai @ s_prev
        grad[4 * d + 1] += d_af @ s_prev
        grad[4 * d + 2] += d_ao @ s_prev
        grad[4 * d + 3] += d_ac @ s_prev
        grad[4 * d + 4] += d_ai.sum()
        grad[4 * d + 5] += d_af.sum()
        grad[4 * d + 6] += d_ao.sum()
        grad[4 * d + 7] += d_ac.sum()
        gs = d_ai * w_i + d_af * w_f + d_ao * w_o + d_ac * w_c
        gc = gc_t * f
    return grad


def rnn_forward(theta: np.ndarray, X: np.ndarray):
    B, T, d = X.shape
    u = theta[0:d]
    w, b = theta[d], theta[d + 1]
    S = np.empty((B, T))
    s = np.zeros(B)
    for t in range(T):
        s = np.tanh(X[:, t, :] @ u + w * s + b)
        S[:, t] = s
    return S, ()


def rnn_backward(theta: np.ndarray, X: np.ndarray, S: np.ndarray, cache, G: np.ndarray) -> np.ndarray:
    B, T, d = X.shape
    w = theta[d]
    grad = np.zeros_like(theta)
    g = np.zeros(B)
    for t in range(T - 1, -1, -1):
        gt = G[:, t] + g
        s = S[:, t]
        s_prev = S[:, t - 1] if t > 0 else np.zeros(B)
        d_a = gt * (1.0 - s * s)
        grad[0:d] += d_a @ X[:, t, :]
        grad[d] += d_a @ s_prev
        grad[d + 1] += d_a.sum()
        g = d_a * w
    return grad


_ENGINES = {
    GruParams: (gru_forward, gru_backward),
    LstmParams: (lstm_forward, lstm_backward),
    RnnParams: (rnn_forward, rnn_backward),
}


def _check_sequence(inputs, targets):
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("inputs and targets must be one-dimensional")
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} inputs vs {len(y)} targets")
    if len(x) == 0:
        raise ValueError("need at least one (input, target) pair")
    return x, y


def sequence_loss(params: CellParams, inputs, targets, loss: LossSpec = LossSpec()) -> float:
    """Total loss of one unrolled sequence under ``loss``."""
    x, y = _check_sequence(inputs, targets)
    forward, _ = _ENGINES[type(params)]
    theta = params.as_vector()
    S, _cache = forward(theta, x.reshape(1, -1, 1))
    value = 0.5 * loss.tau_like * float(np.sum((y - S[0]) ** 2))
    if loss.tau_prior != 0.0:
        mean = np.zeros_like(theta) if loss.prior_mean is None else np.asarray(loss.prior_mean, float)
        diff = theta - mean
        value += 0.5 * loss.tau_prior * float(diff @ diff)
    return value


def bptt_gradients(params: CellParams, inputs, targets, loss: LossSpec = LossSpec()) -> CellParams:
    """Exact reverse-mode gradient of :func:`sequence_loss` w.r.t. every parameter."""
    x, y = _check_sequence(inputs, targets)
    forward, backward = _ENGINES[type(params)]
    theta = params.as_vector()
    X = x.reshape(1, -1, 1)
    S, cache = forward(theta, X)
    G = loss.tau_like * (S - y.reshape(1, -1))
    grad = backward(theta, X, S, cache, G)
    if loss.tau_prior != 0.0:
        mean = np.zeros_like(theta) if loss.prior_mean is None else np.asarray(loss.prior_mean, float)
        grad = grad + loss.tau_prior * (theta - mean)
    return type(params).from_vector(grad)


def finite_diff_check(
    params: CellParams,
    inputs,
    targets,
    loss: LossSpec = LossSpec(),
    epsilon: float = 1e-5,
) -> float:
    """Max relative discrepancy between BPTT and central finite differences.

    Relative error of a pair (a, b) is ``|a - b| / max(1e-8, |a| + |b|)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    exact = bptt_gradients(params, inputs, targets, loss).as_vector()
    theta = params.as_vector()
    worst = 0.0
    for j in range(len(theta)):
        bumped = theta.copy()
        bumped[j] = theta[j] + epsilon
        up = sequence_loss(type(params).from_vector(bumped), inputs, targets, loss)
        bumped[j] = theta[j] - epsilon
        down = sequence_loss(type(params).from_vector(bumped), inputs, targets, loss)
        approx = (up - down) / (2.0 * epsilon)
        err = abs(exact[j] - approx) / max(1e-8, abs(exact[j]) + abs(approx))
        worst = max(worst, err)
    return worst
