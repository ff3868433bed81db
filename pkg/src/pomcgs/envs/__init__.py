"""Built-in benchmark problems."""

from .lightdark import LightDarkModel
from .rocksample import RockSampleModel
from .tiger import TigerModel, exact_tiger_value

__all__ = ["TigerModel", "RockSampleModel", "LightDarkModel", "make_env", "exact_tiger_value", "ENV_NAMES"]

_REGISTRY = {
    "tiger": (TigerModel, {"gamma": float, "accuracy": float}),
    "rocksample": (RockSampleModel, {"n": int, "k": int, "layout_seed": int, "gamma": float, "d0": float}),
    "lightdark": (LightDarkModel, {"gamma": float, "light": float, "init_mean": float,
                                   "init_std": float, "bin_width": float}),
}

ENV_NAMES = tuple(_REGISTRY)


class ConfigError(ValueError):
    """Unknown environment or invalid environment parameters."""


def make_env(name: str, **params):
    """Build a model by name; parameter strings are coerced to the declared types."""
    try:
        cls, schema = _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}") from None
    kwargs = {}
    for key, value in params.items():
        if key not in schema:
            raise ConfigError(f"environment {name!r} takes no parameter {key!r}")
        try:
            kwargs[key] = schema[key](value)
        except (TypeError, ValueError):
            raise ConfigError(f"parameter {key!r}={value!r} is not a valid {schema[key].__name__}") from None
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
