"""Named dataset presets: schema locations, architectures, training settings.

The learning rate / epoch / batch values come from a small search run at
desk scale (single machine, minutes per run); they are starting points, not
tuned optima.  Architectures follow the shared-bottom sizing the package is
tested with: one shared layer, one head layer per task, embeddings for
categorical columns.
"""

from importlib import resources

from .exceptions import ConfigError
from .model import ArchConfig

ARCH_PRESETS = {
    "uci_adult": ArchConfig(num_tasks=2, shared_layer_sizes=(64,),
                            head_layer_sizes=(32,), embedding_dim=40),
    "german_credit": ArchConfig(num_tasks=2, shared_layer_sizes=(32,),
                                head_layer_sizes=(16,), embedding_dim=10),
    "lsac": ArchConfig(num_tasks=2, shared_layer_sizes=(32,),
                       head_layer_sizes=(16,), embedding_dim=10),
    "synth": ArchConfig(num_tasks=2, shared_layer_sizes=(16,),
                        head_layer_sizes=(8,), embedding_dim=4),
}

# desk-scale calibration; see module docstring
TRAIN_PRESETS = {
    "uci_adult": {"learning_rate": 0.05, "epochs": 2, "batch_size": 512},
    "german_credit": {"learning_rate": 0.05, "epochs": 8, "batch_size": 128},
    "lsac": {"learning_rate": 0.05, "epochs": 3, "batch_size": 512},
    "synth": {"learning_rate": 0.1, "epochs": 3, "batch_size": 128},
}

SCHEMA_PRESETS = ("uci_adult", "german_credit", "lsac")

DATASET_PRESETS = tuple(sorted(set(ARCH_PRESETS) | {"synth"}))


def schema_path(name):
    """Filesystem path of a shipped schema JSON."""
    if name not in SCHEMA_PRESETS:
        raise ConfigError(f"no shipped schema for {name!r}; "
                          f"available: {', '.join(SCHEMA_PRESETS)}")
    return str(resources.files("fairmtl") / "schemas" / f"{name}.schema.json")


def arch_for(name, num_tasks=None):
    if name in ARCH_PRESETS:
        return ARCH_PRESETS[name]
    if num_tasks is None:
        raise ConfigError(f"no arch preset for {name!r}")
    return ArchConfig(num_tasks=num_tasks)


def train_settings_for(name):
    return dict(TRAIN_PRESETS.get(name, TRAIN_PRESETS["synth"]))
