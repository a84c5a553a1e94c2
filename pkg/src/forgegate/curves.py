"""Per-epoch training curves (GAN g/d losses or classifier validation loss)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ContractError

GAN_COLUMNS = ("epoch", "g_loss", "d_loss")
VALIDATION_COLUMNS = ("epoch", "val_loss")


@dataclass
class LossCurve:
    """Epochs strictly increasing from 0 or 1; every loss finite.

    A continuation fragment (resumed training) declares its expected first
    epoch through ``origin``.
    """

    columns: tuple[str, ...] = GAN_COLUMNS
    rows: list[tuple] = field(default_factory=list)
    origin: int | None = None

    @classmethod
    def gan(cls, origin: int | None = None) -> "LossCurve":
        return cls(columns=GAN_COLUMNS, origin=origin)

    @classmethod
    def validation(cls, origin: int | None = None) -> "LossCurve":
        return cls(columns=VALIDATION_COLUMNS, origin=origin)

    def append(self, epoch: int, *losses: float) -> None:
        if len(losses) != len(self.columns) - 1:
            raise ContractError(
                f"expected {len(self.columns) - 1} loss values for columns {self.columns}"
            )
        if self.rows:
            if epoch <= self.rows[-1][0]:
                raise ContractError(f"epochs must strictly increase, got {epoch}")
        elif self.origin is not None:
            if epoch != self.origin:
                raise ContractError(f"curve continuation must start at {self.origin}, got {epoch}")
        elif epoch not in (0, 1):
            raise ContractError(f"curves start at epoch 0 or 1, got {epoch}")
        for value in losses:
            if not math.isfinite(value):
                raise ContractError(f"non-finite loss {value} at epoch {epoch}")
        self.rows.append((epoch, *[float(v) for v in losses]))

    def __len__(self) -> int:
        return len(self.rows)

    def epochs(self) -> list[int]:
        return [row[0] for row in self.rows]
