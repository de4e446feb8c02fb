"""Recurrent attention over per-frame object sets.

Each of K parallel attention groups projects a frame's object features,
biases every projected row with a context vector built from the running
hidden state and the frame's image feature, scores all object pairs with a
scaled dot product, and mean-pools the attention-weighted rows into one
vector per group. The K pooled vectors are concatenated and driven through a
shared LSTM across frames, so the hidden state at time t summarizes the
object interactions seen so far.

Object rows are an unordered set: no identity or cross-frame correspondence
is assumed, and all outputs are invariant to row permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .layers import (
    LstmParams,
    MlpParams,
    glorot_uniform,
    init_lstm,
    init_mlp,
    lstm_step,
    mlp_forward,
)
from .tensor import ContractError, ShapeError, Tensor, concat, matmul, softmax


@dataclass
class FrameObjects:
    """Object feature rows for one frame; ``objects`` is None when count == 0."""

    objects: Tensor | None
    count: int

    def __post_init__(self):
        if self.count == 0:
            if self.objects is not None:
                raise ContractError("count 0 requires objects=None")
        else:
            if self.objects is None or len(self.objects.shape) != 2 \
                    or self.objects.shape[0] != self.count:
                raise ShapeError(f"objects must be ({self.count} x D)")


@dataclass
class InteractionState:
    h: Tensor
    c: Tensor


@dataclass
class GroupAttention:
    """One group's row-stochastic attention matrix and pooled vector.

    ``alpha`` is None for empty frames, where ``pooled`` is a zero vector.
    """

    alpha: Tensor | None
    pooled: Tensor


@dataclass
class ObjectAttentionRecord:
    groups: list[GroupAttention]


@dataclass
class GroupParams:
    w_h: Tensor      # attn_dim x hidden
    w_c: Tensor      # attn_dim x image_dim
    proj: MlpParams  # object_dim -> attn_dim

    def tensors(self) -> dict[str, Tensor]:
        out = {"w_h": self.w_h, "w_c": self.w_c}
        for name, t in self.proj.tensors().items():
            out[f"proj.{name}"] = t
        return out


@dataclass
class InteractionParams:
    groups: list[GroupParams]
    lstm: LstmParams
    attn_dim: int

    def __post_init__(self):
        if not self.groups:
            raise ContractError("at least one attention group required")
        for g in self.groups:
            if g.w_h.shape[0] != self.attn_dim or g.proj.output_size != self.attn_dim:
                raise ShapeError("all groups must share the attention width")
        if self.lstm.input_size != len(self.groups) * self.attn_dim:
            raise ShapeError(
                f"LSTM input width {self.lstm.input_size} != "
                f"{len(self.groups)} * {self.attn_dim}")

    @property
    def hidden_size(self) -> int:
        return self.lstm.hidden_size

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for k, g in enumerate(self.groups):
            for name, t in g.tensors().items():
                out[f"group{k}.{name}"] = t
        for name, t in self.lstm.tensors().items():
            out[f"lstm.{name}"] = t
        return out


def init_interaction(rng: np.random.Generator, *, image_dim: int, object_dim: int,
                     num_groups: int, attn_dim: int, hidden_size: int) -> InteractionParams:
    groups = []
    for _ in range(num_groups):
        groups.append(GroupParams(
            w_h=glorot_uniform(rng, attn_dim, hidden_size),
            w_c=glorot_uniform(rng, attn_dim, image_dim),
            proj=init_mlp(rng, [object_dim, attn_dim], ["tanh"]),
        ))
    lstm = init_lstm(rng, num_groups * attn_dim, hidden_size)
    return InteractionParams(groups=groups, lstm=lstm, attn_dim=attn_dim)


def group_attend(g: GroupParams, objects: FrameObjects, v_ct: Tensor,
                 h_prev: Tensor, attn_dim: int) -> GroupAttention:
    """Attend over one frame's objects with one group's weights.

    Scores every pair of context-biased projected objects, normalizes each
    row with softmax, weights the projected rows, and averages them into a
    single vector.
    """
    if objects.count < 1:
        raise ContractError("group_attend needs at least one object")
    u = matmul(g.w_h, h_prev) + matmul(g.w_c, v_ct)
    projected = mlp_forward(g.proj, objects.objects)       # n x attn_dim
    x = projected + u                                      # u added to every row
    scores = matmul(x, x.T) * (1.0 / math.sqrt(attn_dim))  # n x n
    alpha = softmax(scores, axis=1)
    pooled = matmul(alpha, projected).mean(axis=0)
    return GroupAttention(alpha=alpha, pooled=pooled)


def interaction_step(p: InteractionParams, objects: FrameObjects, v_ct: Tensor,
                     state: InteractionState) -> tuple[InteractionState, ObjectAttentionRecord]:
    """Attend with every group, concatenate the pooled vectors, advance the LSTM.

    Empty frames contribute zero pooled vectors so the recurrence still steps.
    """
    if objects.count == 0:
        entries = [GroupAttention(alpha=None, pooled=Tensor(np.zeros(p.attn_dim)))
                   for _ in p.groups]
    else:
        entries = [group_attend(g, objects, v_ct, state.h, p.attn_dim) for g in p.groups]
    pooled_all = concat([e.pooled for e in entries])
    h, c = lstm_step(p.lstm, pooled_all, state.h, state.c)
    return InteractionState(h=h, c=c), ObjectAttentionRecord(groups=entries)


def interaction_sequence(p: InteractionParams, frames: list[tuple[FrameObjects, Tensor]],
                         ) -> tuple[list[Tensor], list[ObjectAttentionRecord]]:
    """Fold the per-frame step from a zero initial state; returns all hidden
    states and the per-frame attention records."""
    if not frames:
        raise ContractError("interaction_sequence needs at least one frame")
    state = InteractionState(h=Tensor(np.zeros(p.hidden_size)),
                             c=Tensor(np.zeros(p.hidden_size)))
    hiddens: list[Tensor] = []
    records: list[ObjectAttentionRecord] = []
    for objects, v_ct in frames:
        state, record = interaction_step(p, objects, v_ct, state)
        hiddens.append(state.h)
        records.append(record)
    return hiddens, records
