"""Per-task hyperparameters for the six ACMv9 (A) / Citationv1 (C) / DBLPv7 (D) transfers."""
from .graph import SynthParams

# task: (layers, heads, dim, eta, xi, weight_decay)
_TABLE = {
    "C→A": (8, 8, 64, 1.0, 1e-1, 1e-3),
    "D→A": (3, 8, 64, 1e-2, 1e-1, 1e-3),
    "A→C": (7, 8, 64, 1.0, 1e-3, 5e-4),
    "D→C": (8, 8, 32, 1.0, 1e-4, 1e-3),
    "A→D": (8, 8, 64, 1.0, 1e-2, 1e-3),
    "C→D": (7, 8, 64, 1.0, 1e-1, 5e-4),
}

PRESETS = {
    task: dict(layers=L, heads=K, dim=d, eta=eta, xi=xi, weight_decay=wd)
    for task, (L, K, d, eta, xi, wd) in _TABLE.items()
}


def preset(name):
    """Hyperparameter overrides for a task; ``C->A`` and ``CA`` spell ``C→A`` too."""
    key = name.strip().upper().replace("->", "→").replace(">", "→")
    if len(key) == 2 and "→" not in key:
        key = f"{key[0]}→{key[1]}"
    try:
        return dict(PRESETS[key])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


# 200 + 200 nodes, 3 classes. Both networks flip 20% of attribute bits; 30% of
# each class block is noise-free in the source and a coin flip in the target.
STANDARD_PAIR = SynthParams(source_flip=0.2, target_flip=0.2, shortcut_frac=0.3)

# training overrides for the synthetic pair; everything else is TrainConfig default
DESK = dict(layers=2, heads=4, dim=16, xi=1.0, mu0=1e-2, lambda_max=1.0)
