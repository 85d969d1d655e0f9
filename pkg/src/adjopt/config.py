"""Flat key-value experiment configs: parsing, validation, and builtin emission.

Syntax: one `section.key = value` per line, `#` comments, blank lines ignored.
Closed-form data (initial temperatures, fluxes) are selected by named
generators with scalar parameters; there is no expression language.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

EXPERIMENT_KINDS = (
    "kappa-heat",
    "kappa-les",
    "opt-heat-1A",
    "opt-heat-1B",
    "opt-heat-2A",
    "opt-heat-2B",
    "opt-les-3A",
    "opt-les-3B",
    "solve-dns",
    "solve-les",
)


class ConfigError(ValueError):
    """Raised with the offending field name for parse/validation failures."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_auto_float(text: str):
    return None if text.strip().lower() == "auto" else float(text)


def _parse_pairs(text: str):
    """Comma-separated nx:nt resolution pairs."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        nx, nt = item.split(":")
        out.append((int(nx), int(nt)))
    if not out:
        raise ValueError("empty list")
    return out


def _parse_floats(text: str):
    out = [float(x) for x in text.replace(",", " ").split()]
    if not out:
        raise ValueError("empty list")
    return out


def _parse_words(text: str):
    out = [x.strip() for x in text.replace(",", " ").split()]
    if not out:
        raise ValueError("empty list")
    return out


_PARSERS = {
    "int": int,
    "float": float,
    "str": str.strip,
    "bool": _parse_bool,
    "auto_float": _parse_auto_float,
    "pairs": _parse_pairs,
    "floats": _parse_floats,
    "words": _parse_words,
}

REQUIRED = object()


# field -> (type name, default or REQUIRED, comment)
_HEAT_COMMON = {
    "heat.a": ("float", 0.0, "rod left end"),
    "heat.b": ("float", 1.0, "rod right end"),
    "heat.T": ("float", 1.0, "time horizon"),
    "heat.ell1": ("float", 0.01, "Sobolev length scale of the control metric"),
    "heat.u0_amplitude": ("float", 10.0, "cosine initial-temperature amplitude"),
    "heat.target_flux_coef_linear": ("float", 18.0, "target-flux linear coefficient"),
    "heat.target_flux_coef_osc": ("float", 1000.0, "target-flux oscillatory coefficient"),
    "heat.init_flux_amplitude": ("float", 18.0, "initial-guess flux amplitude"),
}

_HEAT_OPT = dict(_HEAT_COMMON)
_HEAT_OPT.update({
    "heat.nx": ("int", 100, "space intervals"),
    "heat.nt": ("int", 200, "time intervals"),
    "descent.max_iters": ("int", 200, "iteration cap"),
    "descent.rel_tol": ("float", 1e-6, "relative-decrease stopping tolerance"),
    "descent.step_cap": ("auto_float", None, "step cap for projected descent (auto: scaled)"),
    "descent.brent_tol": ("float", 1e-3, "line-minimization tolerance"),
    "descent.max_line_evals": ("int", 40, "objective evaluations per line search"),
})

_HEAT_CONSTRAINED = {
    "heat.E0": ("auto_float", REQUIRED,
                "mean-energy constraint level (auto: initial-guess energy)"),
}

_KAPPA_COMMON = {
    "kappa.eps_max": ("float", 1.0, "largest perturbation size"),
    "kappa.eps_min": ("float", 1e-14, "smallest perturbation size"),
    "kappa.eps_count": ("int", 25, "log-spaced ladder size"),
    "kappa.quantities": ("words", ["objective", "constraint"], "which pairings to verify"),
}

_LES_COMMON = {
    "les.nu_n": ("float", 4e-4, "kinematic viscosity"),
    "les.alpha": ("float", 5e-3, "large-scale friction"),
    "les.forcing_amplitude": ("float", 2.0, "forcing amplitude"),
    "les.forcing_k": ("int", 4, "forced wavenumber band (single shell)"),
    "les.forcing_seed": ("int", 7, "seed of the forcing phases"),
    "les.n_dns": ("int", 128, "resolved-run grid"),
    "les.n_les": ("int", 32, "filtered-run grid"),
    "les.k_c": ("int", 4, "filter cutoff"),
    "les.dt": ("float", 1e-3, "time step"),
    "les.T": ("float", 2.0, "training horizon"),
    "les.n_sigma": ("int", 128, "state-grid nodes"),
    "les.nu0": ("auto_float", None, "closure viscosity floor (auto: grid-resolution rule)"),
    "les.ell1": ("float", 1000.0, "first Sobolev scale, in state units"),
    "les.ell2": ("float", 100.0, "second Sobolev scale, in state units"),
    "les.leith_constant": ("auto_float", None,
                           "Leith constant of the initial guess (auto: tuned to the constraint)"),
    "les.w0_seed": ("int", 11, "seed of the initial vorticity"),
    "les.w0_kmax": ("int", 4, "largest initially occupied wavenumber"),
    "les.w0_enstrophy": ("float", 150.0, "initial enstrophy level"),
    "les.spin_time": ("float", 1.0, "equilibration run length before the window"),
    "les.paper_scale": ("bool", False,
                        "use the full-scale setup (256/64 grids, T=50, k_c=8); long-running"),
}

_SCHEMAS: dict = {}

for _kind, _problem in (("opt-heat-1A", 1), ("opt-heat-1B", 1),
                        ("opt-heat-2A", 2), ("opt-heat-2B", 2)):
    _s = dict(_HEAT_OPT)
    if _kind.endswith("B"):
        _s.update(_HEAT_CONSTRAINED)
    _SCHEMAS[_kind] = _s

_SCHEMAS["kappa-heat"] = dict(_HEAT_COMMON)
_SCHEMAS["kappa-heat"].update(_KAPPA_COMMON)
_SCHEMAS["kappa-heat"].update({
    "heat.E0": ("auto_float", None, "constraint level (auto: initial-guess energy)"),
    "kappa.resolutions": ("pairs", [(200, 400), (200, 800), (200, 1600)],
                          "nx:nt ladder, one sweep each"),
    "heat.problem": ("int", 2, "1: zero initial temperature, 2: cosine"),
})

_SCHEMAS["kappa-les"] = dict(_LES_COMMON)
_SCHEMAS["kappa-les"].update(_KAPPA_COMMON)
_SCHEMAS["kappa-les"].update({
    "kappa.dts": ("floats", [1e-3, 5e-4], "time-step ladder, one sweep each"),
    "kappa.perturbations": ("words", ["leith_scaled", "exp_decay"],
                            "named profile directions"),
    "kappa.eps_min": ("float", 1e-10, "smallest perturbation size"),
    "kappa.eps_count": ("int", 21, "log-spaced ladder size"),
})

for _kind in ("opt-les-3A", "opt-les-3B"):
    _s = dict(_LES_COMMON)
    _s.update({
        "descent.max_iters": ("int", 20, "iteration cap"),
        "descent.rel_tol": ("float", 1e-6, "relative-decrease stopping tolerance"),
        "descent.step_cap": ("auto_float", None, "step cap for projected descent (auto: scaled)"),
        "descent.brent_tol": ("float", 1e-3, "line-minimization tolerance"),
        "descent.max_line_evals": ("int", 30, "objective evaluations per line search"),
    })
    if _kind.endswith("B"):
        _s["les.E0"] = ("auto_float", REQUIRED,
                        "mean-enstrophy constraint level (auto: reference-run average)")
    _SCHEMAS[_kind] = _s

_SCHEMAS["solve-dns"] = dict(_LES_COMMON)
_SCHEMAS["solve-dns"].update({
    "output.snapshots": ("bool", False, "dump the full trajectory in binary form"),
})
_SCHEMAS["solve-les"] = dict(_LES_COMMON)
_SCHEMAS["solve-les"].update({
    "output.snapshots": ("bool", True, "dump the full trajectory in binary form"),
})


@dataclass
class ExperimentConfig:
    kind: str
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]


def parse_config_text(text: str) -> dict:
    """Raw key -> string map; raises ConfigError on malformed lines."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line.strip()!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        if key in out:
            raise ConfigError(key, "duplicate key")
        out[key] = value.strip()
    return out


def validate_config(raw: dict) -> ExperimentConfig:
    """Type-check against the schema of the declared experiment kind."""
    if "experiment.kind" not in raw:
        raise ConfigError("experiment.kind", "missing")
    kind = raw["experiment.kind"]
    if kind not in _SCHEMAS:
        raise ConfigError("experiment.kind",
                          f"unknown kind {kind!r}; expected one of {', '.join(EXPERIMENT_KINDS)}")
    schema = _SCHEMAS[kind]
    values = {"experiment.kind": kind}
    for key, (type_name, default, _comment) in schema.items():
        if key in raw:
            try:
                values[key] = _PARSERS[type_name](raw[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(key, f"cannot parse {raw[key]!r} as {type_name}: {exc}") from exc
        elif default is REQUIRED:
            raise ConfigError(key, "missing (required for this experiment kind)")
        else:
            values[key] = default
    known = set(schema) | {"experiment.kind"}
    for key in raw:
        if key not in known:
            raise ConfigError(key, f"unknown field for kind {kind!r}")
    return ExperimentConfig(kind, values)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return validate_config(parse_config_text(fh.read()))


_KIND_NOTES = {
    "kappa-heat": [
        "Verification sweep of the boundary-flux misfit gradient and of the",
        "energy-constraint normal element against one-sided finite differences.",
        "One CSV per (quantity, resolution); plateaus near one validate the",
        "adjoint solves, and their levels drop at second order in dt.",
    ],
    "kappa-les": [
        "Verification sweep of the closure-profile gradient and of the",
        "enstrophy-constraint normal element; plateau levels drop at first",
        "order in dt.",
    ],
    "opt-heat-1A": [
        "Unconstrained flux reconstruction with zero initial temperature;",
        "conjugate-gradient accelerated descent in the H1 metric.",
    ],
    "opt-heat-1B": [
        "Flux reconstruction with zero initial temperature on the mean-energy",
        "manifold; the homogeneous constraint is restored exactly after every",
        "step by rescaling.",
    ],
    "opt-heat-2A": [
        "Unconstrained flux reconstruction with a cosine initial temperature.",
    ],
    "opt-heat-2B": [
        "Constrained flux reconstruction without a retraction: the descent",
        "direction is projected onto the constraint tangent subspace and the",
        "step size is capped, so the constraint drifts at second order only.",
    ],
    "opt-les-3A": [
        "Unconstrained eddy-viscosity profile calibration of the filtered 2D",
        "flow against the palinstrophy history of the resolved reference run.",
    ],
    "opt-les-3B": [
        "Profile calibration on the mean-enstrophy manifold via projected",
        "descent (no retraction available).",
    ],
    "solve-dns": ["Reference resolved run; writes filtered diagnostics."],
    "solve-les": ["Single filtered run with the Leith-model closure."],
}


def emit_builtin_config(kind: str) -> str:
    """Complete runnable config with defaults and per-field comments."""
    if kind not in _SCHEMAS:
        raise ConfigError("experiment.kind",
                          f"unknown kind {kind!r}; expected one of {', '.join(EXPERIMENT_KINDS)}")
    lines = [f"# {kind}"]
    lines += [f"# {note}" for note in _KIND_NOTES.get(kind, [])]
    lines.append("")
    lines.append(f"experiment.kind = {kind}")
    for key, (type_name, default, comment) in sorted(_SCHEMAS[kind].items()):
        value = default
        if value is REQUIRED or value is None:
            text = "auto"
        elif type_name == "bool":
            text = "true" if value else "false"
        elif type_name == "pairs":
            text = ",".join(f"{a}:{b}" for a, b in value)
        elif type_name in ("floats", "words"):
            text = ",".join(str(v) for v in value)
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key} = {text:<24}# {comment}")
    lines.append("")
    return "\n".join(lines)
