"""Constant-velocity box filter used inside every subtracker.

State vector: (cx, cy, area, aspect, vcx, vcy, varea). The aspect ratio is
treated as static (no velocity term); area may shrink or grow linearly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BBox

STATE_DIM = 7
MEAS_DIM = 4

AREA_EPS = 1e-6

_F = np.eye(STATE_DIM)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.zeros((MEAS_DIM, STATE_DIM))
_H[:4, :4] = np.eye(4)
_I = np.eye(STATE_DIM)


@dataclass(frozen=True)
class FilterParams:
    """Noise magnitudes; defaults documented here are used everywhere.

    Initial covariance is diag(position 10, position 10, area 10, aspect 10,
    velocity 1000 x3). Process noise keeps unit variance on the observed
    dimensions and small variance on the velocities; measurement noise is
    unit on the center and 10 on area/aspect.
    """

    position_var: float = 10.0
    velocity_var: float = 1000.0
    area_var: float = 10.0
    process_diag: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.0001)
    measurement_diag: tuple[float, ...] = (1.0, 1.0, 10.0, 10.0)

    def initial_covariance(self) -> np.ndarray:
        return np.diag(
            [
                self.position_var,
                self.position_var,
                self.area_var,
                self.area_var,
                self.velocity_var,
                self.velocity_var,
                self.velocity_var,
            ]
        ).astype(float)


DEFAULT_PARAMS = FilterParams()


def box_to_state(box: BBox) -> np.ndarray:
    w = box.width()
    h = box.height()
    cx, cy = box.center()
    return np.array([cx, cy, w * h, w / max(h, AREA_EPS), 0.0, 0.0, 0.0], dtype=float)


def state_to_box(x: np.ndarray) -> BBox:
    area = max(float(x[2]), AREA_EPS)
    aspect = max(float(x[3]), AREA_EPS)
    w = (area * aspect) ** 0.5
    h = area / w
    cx, cy = float(x[0]), float(x[1])
    return BBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


class BoxFilter:
    """Kalman filter over one box track; predict() then update() once per frame."""

    __slots__ = ("x", "cov", "params", "_q_diag", "_r_diag", "_box")

    def __init__(
        self, x: np.ndarray, cov: np.ndarray, params: FilterParams = DEFAULT_PARAMS
    ) -> None:
        self.x = x
        self.cov = cov
        self.params = params
        self._q_diag = np.asarray(params.process_diag, dtype=float)
        self._r_diag = np.asarray(params.measurement_diag, dtype=float)
        self._box: BBox | None = None

    @classmethod
    def from_box(cls, box: BBox, params: FilterParams = DEFAULT_PARAMS) -> "BoxFilter":
        if box.area() <= 0.0:
            raise ValueError(f"cannot initialise filter from zero-area box {box}")
        return cls(x=box_to_state(box), cov=params.initial_covariance(), params=params)

    @property
    def box(self) -> BBox:
        if self._box is None:
            self._box = state_to_box(self.x)
        return self._box

    def predict(self) -> BBox:
        """Propagate one frame ahead and return the predicted box."""
        x = self.x
        # A negative area velocity must not push the area below zero.
        if x[2] + x[6] <= AREA_EPS:
            x[6] = 0.0
        x[0] += x[4]
        x[1] += x[5]
        x[2] += x[6]
        if x[2] < AREA_EPS:
            x[2] = AREA_EPS
        # F P F^T for F = I + shift(positions <- velocities), done by slices.
        p = self.cov + 0.0
        p[0:3, :] += self.cov[4:7, :]
        p[:, 0:3] += p[:, 4:7]
        p.flat[:: STATE_DIM + 1] += self._q_diag
        self.cov = 0.5 * (p + p.T)
        self._box = None
        return self.box

    def update(self, z: BBox) -> None:
        """Correct the state with a measured box (Joseph-form covariance update)."""
        zi = box_to_state(z)[:MEAS_DIM]
        cov = self.cov
        s = cov[:4, :4].copy()
        s.flat[:: MEAS_DIM + 1] += self._r_diag
        gain = np.linalg.solve(s, cov[:4, :]).T
        self.x = self.x + gain @ (zi - self.x[:4])
        ikh = _I.copy()
        ikh[:, :4] -= gain
        p = ikh @ cov @ ikh.T + (gain * self._r_diag) @ gain.T
        self.cov = 0.5 * (p + p.T)
        self._box = None

    def copy(self) -> "BoxFilter":
        return BoxFilter(x=self.x.copy(), cov=self.cov.copy(), params=self.params)
