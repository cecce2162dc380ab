"""Containers for vector and lifted (PSD-matrix) precoders."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def herm(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


@dataclass
class VectorPrecoders:
    """p_c (Nt,), private precoders as columns of ``priv`` (Nt, K), p_r (Nt,) or None."""

    pc: np.ndarray
    priv: np.ndarray
    pr: np.ndarray | None = None
    c: np.ndarray | None = None

    @property
    def n_t(self) -> int:
        return self.priv.shape[0]

    @property
    def n_users(self) -> int:
        return self.priv.shape[1]

    def matrix(self) -> np.ndarray:
        """P = [p_c, p_1..p_K, p_r] (radar column omitted when absent)."""
        cols = [self.pc[:, None], self.priv]
        if self.pr is not None:
            cols.append(self.pr[:, None])
        return np.hstack(cols)

    def lifted(self) -> "LiftedPrecoders":
        pk = np.einsum("nk,mk->knm", self.priv, self.priv.conj())
        pr = None if self.pr is None else np.outer(self.pr, self.pr.conj())
        c = np.zeros(self.n_users) if self.c is None else np.asarray(self.c, float)
        return LiftedPrecoders(Pc=np.outer(self.pc, self.pc.conj()), Pk=pk, Pr=pr, c=c)


@dataclass
class LiftedPrecoders:
    """Rank-relaxed precoders P = p p^H plus common-rate shares."""

    Pc: np.ndarray
    Pk: np.ndarray  # (K, Nt, Nt)
    Pr: np.ndarray | None = None
    c: np.ndarray = field(default=None)
    r: np.ndarray | None = None

    def __post_init__(self):
        if self.c is None:
            self.c = np.zeros(self.Pk.shape[0])

    @property
    def n_t(self) -> int:
        return self.Pc.shape[0]

    @property
    def n_users(self) -> int:
        return self.Pk.shape[0]

    def total(self) -> np.ndarray:
        """P_c + sum_k P_k + P_r, i.e. E[x x^H]."""
        tot = self.Pc + self.Pk.sum(axis=0)
        if self.Pr is not None:
            tot = tot + self.Pr
        return tot

    def matrices(self) -> dict[str, np.ndarray]:
        out = {"c": self.Pc}
        for k in range(self.n_users):
            out[f"p{k + 1}"] = self.Pk[k]
        if self.Pr is not None:
            out["r"] = self.Pr
        return out

    def copy(self) -> "LiftedPrecoders":
        return LiftedPrecoders(
            Pc=self.Pc.copy(), Pk=self.Pk.copy(),
            Pr=None if self.Pr is None else self.Pr.copy(),
            c=np.array(self.c, float), r=None if self.r is None else np.array(self.r, float),
        )
