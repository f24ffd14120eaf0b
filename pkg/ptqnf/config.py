"""
Run configuration: a single JSON file, validated as a whole so that every problem is reported with its field path.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ptqnf.enums import CheckName, Mode, parse_enum
from ptqnf.frequency import (
    DEFAULT_QMAX,
    DEFAULT_RESONANCE_FLOOR,
    GOLDEN_RATIO,
    Frequency,
    ResonanceError,
    make_frequency,
)
from ptqnf.symbol import Generator, PotentialSpec, TruncationPolicy
from ptqnf.weyl import BasisWindow

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"


class ConfigError(ValueError):
    def __init__(self, field_path: str, message: str, problems=None):
        self.field = field_path
        self.message = message
        self.problems = list(problems) if problems else [(field_path, message)]
        super().__init__("; ".join(f"{p}: {m}" if p else m for p, m in self.problems))


@dataclass(frozen=True)
class Tolerances:
    reality: float = 1e-12
    imag_w: float = 1e-12
    odd: float = 1e-12
    parity: float = 1e-12
    homological: float = 1e-12
    literal: float = 1e-12
    commutator: float = 1e-10
    linear_rule: float = 1e-12
    pt_matrix: float = 1e-12
    oracle_imag: float = 1e-8
    qnf_imag: float = 1e-10
    pairing: float = 1e-6
    residual_floor: float = 1e-13
    scaling_factor: float = 3.0
    classical_exponent: tuple = (1.7, 2.3)
    radius_stability: float = 0.05


@dataclass(frozen=True)
class RunConfig:
    frequency: Frequency
    potential: PotentialSpec
    order: int
    hbar_list: tuple
    epsilon_list: tuple
    window: BasisWindow
    policy: TruncationPolicy
    mode: Mode = Mode.QUANTUM
    checks: frozenset = field(default_factory=lambda: frozenset(CheckName))
    qmax_check: int = DEFAULT_QMAX
    sweep_hbars: tuple = (0.1, 0.05, 0.025)
    steps: int = 8
    max_halvings: int = 6
    jobs: int = 1
    dump_matrices: bool = False
    tolerances: Tolerances = field(default_factory=Tolerances)
    output_directory: Path = None
    schema_version: str = SCHEMA_VERSION
    digest: str = ""

    def enabled(self, check: CheckName) -> bool:
        return check in self.checks

    def with_overrides(
        self, order=None, mode=None, checks=None, jobs=None, output_directory=None, dump_matrices=None
    ) -> "RunConfig":
        """Apply command-line overrides, validating each value."""
        problems = []
        changes = {}
        if order is not None:
            if order < 1:
                problems.append(("order", f"must be >= 1, got {order}"))
            changes["order"] = order
        if mode is not None:
            parsed = parse_enum(Mode, mode)
            if parsed is None:
                problems.append(("mode", f"unknown mode {mode!r}"))
            changes["mode"] = parsed
        if checks is not None:
            changes["checks"] = _parse_checks(checks, "checks", problems)
        if jobs is not None:
            if jobs < 1:
                problems.append(("jobs", f"must be >= 1, got {jobs}"))
            changes["jobs"] = jobs
        if output_directory is not None:
            changes["output_directory"] = Path(output_directory)
        if dump_matrices is not None:
            changes["dump_matrices"] = dump_matrices
        if problems:
            raise ConfigError(problems[0][0], problems[0][1], problems)
        return replace(self, **changes)


def _parse_checks(value, path: str, problems: list) -> frozenset:
    if isinstance(value, str) and value.strip().lower() == "all":
        return frozenset(CheckName)
    if isinstance(value, str) and value.strip().lower() == "none":
        return frozenset()
    names = value.split(",") if isinstance(value, str) else value
    if not isinstance(names, list | tuple):
        problems.append((path, f"expected 'all', 'none' or a list of check names, got {value!r}"))
        return frozenset()
    selected = set()
    for i, name in enumerate(names):
        check = parse_enum(CheckName, name)
        if check is None:
            problems.append((f"{path}[{i}]", f"unknown check {name!r}"))
        else:
            selected.add(check)
    return frozenset(selected)


class _Reader:
    """Typed access to a JSON mapping that records problems instead of raising."""

    def __init__(self, data: dict, path: str, problems: list):
        self.data = data if isinstance(data, dict) else {}
        self.path = path
        self.problems = problems
        if not isinstance(data, dict):
            problems.append((path, f"expected an object, got {type(data).__name__}"))

    def _field(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def section(self, key: str, required: bool = True) -> "_Reader":
        if key not in self.data:
            if required:
                self.problems.append((self._field(key), "missing"))
            return _Reader({}, self._field(key), self.problems)
        return _Reader(self.data[key], self._field(key), self.problems)

    def get(self, key: str, kind, default=None, required: bool = False):
        if key not in self.data or self.data[key] is None:
            if required:
                self.problems.append((self._field(key), "missing"))
            return default
        value = self.data[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or (kind in (int, float) and isinstance(value, bool)):
            self.problems.append((self._field(key), f"expected {getattr(kind, '__name__', kind)}, got {value!r}"))
            return default
        return value

    def number_list(self, key: str, default=None, required: bool = False) -> tuple:
        values = self.get(key, list, default, required)
        if values is None:
            return ()
        good = []
        for i, v in enumerate(values):
            if isinstance(v, bool) or not isinstance(v, int | float):
                self.problems.append((f"{self._field(key)}[{i}]", f"expected a number, got {v!r}"))
            else:
                good.append(float(v))
        return tuple(good)


def _read_frequency(section: _Reader, problems: list):
    omega = section.get("omega", str | list, required=True)
    tau = section.get("tau", float, 3.0)
    gamma = section.get("gamma", float)
    qmax_check = section.get("qmax_check", int, DEFAULT_QMAX)
    floor = section.get("resonance_floor", float, DEFAULT_RESONANCE_FLOOR)

    if isinstance(omega, str):
        if omega.strip().lower() != "golden":
            problems.append(("frequency.omega", f"unknown named frequency {omega!r}"))
            return None, qmax_check
        omega = [1.0, GOLDEN_RATIO]
    if omega is None:
        return None, qmax_check
    if not omega or not all(isinstance(w, int | float) and not isinstance(w, bool) for w in omega):
        problems.append(("frequency.omega", f"expected a non-empty list of numbers, got {omega!r}"))
        return None, qmax_check
    if qmax_check < 1:
        problems.append(("frequency.qmax_check", f"must be >= 1, got {qmax_check}"))
        return None, qmax_check
    if not tau > len(omega):
        problems.append(("frequency.tau", f"must exceed the dimension {len(omega)}, got {tau}"))
        return None, qmax_check

    try:
        return make_frequency(omega, tau, gamma=gamma, qmax=qmax_check, resonance_floor=floor), qmax_check
    except ResonanceError as e:
        problems.append(("frequency.omega", str(e)))
    except ValueError as e:
        problems.append(("frequency", str(e)))
    return None, qmax_check


def _read_potential(section: _Reader, dim, problems: list):
    pstep = section.get("pstep", float, 1.0)
    if not pstep > 0:
        problems.append(("potential.pstep", f"must be positive, got {pstep}"))

    generators = []
    for i, raw in enumerate(section.get("generators", list, [], required=True)):
        path = f"potential.generators[{i}]"
        gen = _Reader(raw, path, problems)
        q = gen.get("q", list, required=True)
        m = gen.get("m", int, 0)
        amplitude = gen.get("amplitude", float, required=True)
        if q is None or amplitude is None:
            continue
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in q):
            problems.append((f"{path}.q", f"expected integers, got {q!r}"))
        elif dim is not None and len(q) != dim:
            problems.append((f"{path}.q", f"length {len(q)} does not match the frequency dimension {dim}"))
        elif not any(q):
            problems.append((f"{path}.q", "q = 0 is not allowed: an x-odd potential has no q = 0 coefficient"))
        else:
            generators.append(Generator(tuple(q), m, amplitude))

    extra = []
    for i, raw in enumerate(section.get("extra_atoms", list, [])):
        path = f"potential.extra_atoms[{i}]"
        atom = _Reader(raw, path, problems)
        q = atom.get("q", list, required=True)
        m = atom.get("m", int, 0)
        re_part = atom.get("re", float, 0.0)
        im_part = atom.get("im", float, 0.0)
        if q is None:
            continue
        if dim is not None and len(q) != dim:
            problems.append((f"{path}.q", f"length {len(q)} does not match the frequency dimension {dim}"))
        else:
            extra.append((tuple(int(x) for x in q), m, complex(re_part, im_part)))

    if dim is None:
        return None
    return PotentialSpec(generators=tuple(generators), pstep=pstep, dim=dim, extra_atoms=tuple(extra))


def _read_tolerances(section: _Reader, problems: list) -> Tolerances:
    values = {}
    known = [f.name for f in fields(Tolerances)]
    for key in section.data:
        if key not in known:
            problems.append((f"tolerances.{key}", "unknown tolerance"))
    for name in known:
        if name == "classical_exponent":
            continue
        value = section.get(name, float)
        if value is not None:
            if not value > 0:
                problems.append((f"tolerances.{name}", f"must be positive, got {value}"))
            values[name] = value
    band = section.number_list("classical_exponent")
    if band:
        if len(band) != 2 or band[0] >= band[1]:
            problems.append(("tolerances.classical_exponent", f"expected [low, high], got {list(band)}"))
        else:
            values["classical_exponent"] = band
    return Tolerances(**values)


def parse_config(data: dict, base_dir: Path = None) -> RunConfig:
    """
    Build a RunConfig from parsed JSON.

    :param data: the decoded configuration
    :param base_dir: directory against which a relative output_directory is resolved
    :raises ConfigError: listing every invalid field
    """

    problems = []
    root = _Reader(data, "", problems)

    schema_version = root.get("schema_version", str, SCHEMA_VERSION)
    if schema_version[:3] != SCHEMA_VERSION[:3]:  # major & minor only
        logger.warning(f"Config schema version is {schema_version}, ptqnf reads {SCHEMA_VERSION}. Could be a problem.")

    f, qmax_check = _read_frequency(root.section("frequency"), problems)
    dim = f.dim if f is not None else None
    potential = _read_potential(root.section("potential"), dim, problems)

    order = root.get("order", int, 6)
    if order < 1:
        problems.append(("order", f"must be >= 1, got {order}"))

    hbar_list = root.number_list("hbar_list", required=True)
    if not hbar_list and "hbar_list" in root.data:
        problems.append(("hbar_list", "must not be empty"))
    for i, hbar in enumerate(hbar_list):
        if not 0 < hbar <= 1:
            problems.append((f"hbar_list[{i}]", f"must lie in (0, 1], got {hbar}"))

    epsilon_list = root.number_list("epsilon_list", required=True)
    if not epsilon_list and "epsilon_list" in root.data:
        problems.append(("epsilon_list", "must not be empty"))
    for i, eps in enumerate(epsilon_list):
        if not math.isfinite(eps):
            problems.append((f"epsilon_list[{i}]", f"must be finite, got {eps}"))

    basis = root.section("basis")
    ncut = basis.get("ncut", int, 10)
    margin = basis.get("margin", int, 4)
    window = None
    if dim is not None:
        try:
            window = BasisWindow(dim, ncut, margin)
        except ValueError as e:
            problems.append(("basis", str(e)))

    policy_section = root.section("policy", required=False)
    defaults = TruncationPolicy()
    policy_values = {
        "eta": policy_section.get("eta", float, defaults.eta),
        "relative": policy_section.get("relative", bool, defaults.relative),
        "qmax": policy_section.get("qmax", int, defaults.qmax),
        "mmax": policy_section.get("mmax", int, defaults.mmax),
        "rho": policy_section.get("rho", float, defaults.rho),
    }
    policy = None
    if not policy_values["rho"] > 2:
        problems.append(("policy.rho", f"must exceed 2, got {policy_values['rho']}"))
    elif policy_values["eta"] < 0:
        problems.append(("policy.eta", f"must be non-negative, got {policy_values['eta']}"))
    else:
        try:
            policy = TruncationPolicy(**policy_values)
        except ValueError as e:
            problems.append(("policy", str(e)))

    mode = parse_enum(Mode, root.get("mode", str, "quantum"))
    if mode is None:
        problems.append(("mode", f"unknown mode {data.get('mode')!r}"))

    checks = _parse_checks(data.get("checks", "all") if isinstance(data, dict) else "all", "checks", problems)

    sweep_hbars = root.section("sweep", required=False).number_list("hbars", default=[0.1, 0.05, 0.025])
    continuation = root.section("continuation", required=False)
    steps = continuation.get("steps", int, 8)
    max_halvings = continuation.get("max_halvings", int, 6)
    if steps < 1:
        problems.append(("continuation.steps", f"must be >= 1, got {steps}"))
    if max_halvings < 0:
        problems.append(("continuation.max_halvings", f"must be >= 0, got {max_halvings}"))

    jobs = root.get("jobs", int, 1)
    if jobs < 1:
        problems.append(("jobs", f"must be >= 1, got {jobs}"))

    tolerances = _read_tolerances(root.section("tolerances", required=False), problems)

    output_directory = root.get("output_directory", str)
    if output_directory is not None:
        output_directory = Path(output_directory)
        if base_dir is not None and not output_directory.is_absolute():
            output_directory = base_dir / output_directory

    if problems:
        raise ConfigError(problems[0][0], problems[0][1], problems)

    return RunConfig(
        frequency=f,
        potential=potential,
        order=order,
        hbar_list=hbar_list,
        epsilon_list=epsilon_list,
        window=window,
        policy=policy,
        mode=mode,
        checks=checks,
        qmax_check=qmax_check,
        sweep_hbars=sweep_hbars,
        steps=steps,
        max_halvings=max_halvings,
        jobs=jobs,
        dump_matrices=root.get("dump_matrices", bool, False),
        tolerances=tolerances,
        output_directory=output_directory,
        schema_version=schema_version,
        digest=hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest(),
    )


def load_config(config_path: Path) -> RunConfig:
    """
    Read and validate a configuration file.

    :param config_path: path to the JSON configuration
    :raises ConfigError: for a missing file, a JSON syntax error (with line and column) or invalid fields
    """

    if not config_path.exists():
        raise ConfigError("", f"No config file found at {config_path}")
    try:
        data = json.loads(config_path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("", f"{config_path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    return parse_config(data, config_path.parent.resolve())
