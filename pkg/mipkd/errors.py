# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

__all__ = [
    "ConfigurationError",
    "DatasetError",
    "DimensionError",
    "TeacherModified",
    "TrainingDiverged",
]


class ConfigurationError(ValueError):
    """A configuration value or combination of values is unusable."""


class DimensionError(ValueError):
    """Tensor shapes or widths do not line up."""


class DatasetError(RuntimeError):
    """No usable images could be read for a dataset."""


class TrainingDiverged(RuntimeError):
    """A loss term became NaN or infinite."""

    def __init__(self, term, iteration, value):
        super().__init__(
            "Loss term '%s' is not finite (%r) at iteration %d"
            % (term, value, iteration)
        )
        self.term = term
        self.iteration = iteration
        self.value = value


class TeacherModified(RuntimeError):
    """A frozen teacher's checkpoint changed during training."""
