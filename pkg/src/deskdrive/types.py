"""Small value types shared between perception, the simulator and fusion."""
from __future__ import annotations

from dataclasses import dataclass

# index 0 pads unused query slots
CLASSES = ("no-object", "vehicle", "pedestrian", "lane-marking", "obstacle")
NUM_OBJECT_CLASSES = len(CLASSES) - 1


def label_of(class_index: int) -> float:
    return class_index / NUM_OBJECT_CLASSES


def class_of(label: float) -> int:
    return int(round(label * NUM_OBJECT_CLASSES))


@dataclass(frozen=True)
class Detection:
    label: float
    box: tuple[float, float, float, float]

    def __post_init__(self):
        if not 0.0 <= self.label <= 1.0:
            raise ValueError(f"label {self.label} outside [0, 1]")
        if len(self.box) != 4 or not all(0.0 <= v <= 1.0 for v in self.box):
            raise ValueError(f"box {self.box} must be four values in [0, 1]")

    @property
    def class_index(self) -> int:
        return class_of(self.label)

    @property
    def class_name(self) -> str:
        return CLASSES[self.class_index]
