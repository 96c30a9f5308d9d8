"""Initial profiles for the front-shift problem.

A profile is a nonnegative function phi with support bounded on the right:
phi(x) = 0 for all x >= L0.  Three kinds are supported:

* ``box``   -- height * indicator of [a, b),
* ``table`` -- piecewise-linear interpolant of sampled (x, y) pairs, zero
  outside the sample range,
* ``step``  -- height * indicator of (-inf, 0).

Profiles can be rendered to and parsed from a small text language used by
the command line: ``box:a:b[:h]``, ``table:<csv path>``, ``step``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = ["InitialProfile", "box_profile", "table_profile", "step_profile",
           "parse_profile", "format_profile", "hat_transform"]


@dataclass(frozen=True)
class InitialProfile:
    """Nonnegative initial datum with right-compact support.

    Attributes
    ----------
    kind : str
        One of ``box``, ``table``, ``step``.
    a, b : float
        Support endpoints for ``box``; unused otherwise.
    height : float
        Plateau value for ``box`` and ``step``.
    xs, ys : ndarray or None
        Sample points for ``table``; xs strictly increasing, ys >= 0,
        ys[-1] == 0 so the support stays right-compact.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    height: float = 1.0
    xs: np.ndarray | None = field(default=None, repr=False)
    ys: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("box", "table", "step"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.height < 0:
            raise ValueError("profile height must be nonnegative")
        if self.kind == "box" and not self.b > self.a:
            raise ValueError("box profile needs a < b")
        if self.kind == "table":
            xs, ys = np.asarray(self.xs, float), np.asarray(self.ys, float)
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
                raise ValueError("table profile needs matching 1-d xs, ys with >= 2 samples")
            if not np.all(np.diff(xs) > 0):
                raise ValueError("table xs must be strictly increasing")
            if np.any(ys < 0):
                raise ValueError("table ys must be nonnegative")
            if ys[-1] != 0.0:
                raise ValueError("table ys must end at 0 (right-compact support)")
            object.__setattr__(self, "xs", xs)
            object.__setattr__(self, "ys", ys)

    @property
    def support_bound(self) -> float:
        """Smallest L0 recorded such that the profile vanishes on [L0, inf)."""
        if self.kind == "box":
            return self.b
        if self.kind == "table":
            return float(self.xs[-1])
        return 0.0

    @property
    def sup_bound(self) -> float:
        if self.kind == "table":
            return float(self.ys.max())
        return self.height

    @property
    def is_zero(self) -> bool:
        return self.sup_bound == 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            out = np.where((x >= self.a) & (x < self.b), self.height, 0.0)
        elif self.kind == "step":
            out = np.where(x < 0.0, self.height, 0.0)
        else:
            out = np.interp(x, self.xs, self.ys, left=0.0, right=0.0)
        return out if out.ndim else float(out)

    def shifted(self, L: float) -> "InitialProfile":
        """Translate by L: returns the profile x -> phi(x - L)."""
        if self.kind == "box":
            return InitialProfile("box", self.a + L, self.b + L, self.height)
        if self.kind == "step":
            if L != 0.0:
                # a shifted step is no longer supported in (-inf, 0); keep it
                # as a table over a window wide enough for downstream use
                raise ValueError("step profile cannot be shifted")
            return self
        return InitialProfile("table", xs=self.xs + L, ys=self.ys)

    def scaled(self, c: float) -> "InitialProfile":
        """Multiply values by c >= 0."""
        if c < 0:
            raise ValueError("scale factor must be nonnegative")
        if self.kind == "table":
            return InitialProfile("table", xs=self.xs, ys=c * self.ys)
        return InitialProfile(self.kind, self.a, self.b, c * self.height)


def box_profile(a: float, b: float, height: float = 1.0) -> InitialProfile:
    return InitialProfile("box", a, b, height)


def table_profile(xs, ys) -> InitialProfile:
    return InitialProfile("table", xs=np.asarray(xs, float), ys=np.asarray(ys, float))


def step_profile(height: float = 1.0) -> InitialProfile:
    return InitialProfile("step", height=height)


def parse_profile(text: str) -> InitialProfile:
    """Parse the mini-language: box:a:b[:h], table:<path>, step."""
    parts = text.strip().split(":")
    kind = parts[0]
    if kind == "box":
        if len(parts) not in (3, 4):
            raise ValueError(f"box profile wants box:a:b[:h], got {text!r}")
        a, b = float(parts[1]), float(parts[2])
        h = float(parts[3]) if len(parts) == 4 else 1.0
        return box_profile(a, b, h)
    if kind == "table":
        if len(parts) < 2:
            raise ValueError("table profile wants table:<csv path>")
        path = ":".join(parts[1:])   # tolerate paths containing ':'
        xs, ys = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    x, y = float(row[0]), float(row[1])
                except ValueError:
                    continue    # header line
                xs.append(x)
                ys.append(y)
        return table_profile(xs, ys)
    if kind == "step":
        if len(parts) == 2:
            return step_profile(float(parts[1]))
        return step_profile()
    raise ValueError(f"unknown profile spec {text!r}")


def format_profile(p: InitialProfile) -> str:
    if p.kind == "box":
        return f"box:{p.a:g}:{p.b:g}:{p.height:g}"
    if p.kind == "step":
        return "step" if p.height == 1.0 else f"step:{p.height:g}"
    return f"table:<{p.xs.size} samples on [{p.xs[0]:g}, {p.xs[-1]:g}]>"


def hat_transform(psi: InitialProfile) -> InitialProfile:
    """Map a test profile psi to 1 - exp(-psi).

    The transform sends the Laplace-functional argument of the extremal
    process to valid [0, 1] initial data for the front equation; box and
    step profiles stay in kind with height 1 - exp(-height), tables are
    transformed pointwise.
    """
    if psi.kind == "table":
        return InitialProfile("table", xs=psi.xs, ys=-np.expm1(-psi.ys))
    return InitialProfile(psi.kind, psi.a, psi.b, -np.expm1(-psi.height))
