"""Pipeline configuration: a flat ``key = value`` text file (a TOML subset)."""
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .io import InputError

PROFILES = ("generic", "scannet")


@dataclass(frozen=True)
class PipelineConfig:
    n: int = 8
    o: int = 4
    voxel_size: float = 0.04
    truncation: float = 0.12
    epsilon: float = 0.05
    d_max: float = 20.0
    lam: float = 0.1
    max_reproj: float = 2.0
    tau: float = 0.05
    t_max: float = 0.1
    r_max: float = 15.0
    dataset_profile: str = "generic"

    def __post_init__(self):
        if self.dataset_profile not in PROFILES:
            raise ValueError(f"unknown profile {self.dataset_profile!r}")
        if self.n < 2 or not 0 <= self.o < self.n:
            raise ValueError("need n >= 2 and 0 <= o < n")
        if not self.voxel_size > 0 or self.truncation < self.voxel_size:
            raise ValueError("need voxel_size > 0 and truncation >= voxel_size")
        if not 0 < self.epsilon < self.d_max:
            raise ValueError("need 0 < epsilon < d_max")
        for name in ("lam", "max_reproj", "tau", "t_max", "r_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_profile(cls, profile="generic"):
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}")
        return cls(n=16 if profile == "scannet" else 8, dataset_profile=profile)


# file key -> attribute; "lambda" is a Python keyword
_KEY_TO_ATTR = {f.name: f.name for f in fields(PipelineConfig)}
_KEY_TO_ATTR["lambda"] = _KEY_TO_ATTR.pop("lam")
_ATTR_TO_KEY = {v: k for k, v in _KEY_TO_ATTR.items()}
_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _parse_value(raw, typ):
    raw = raw.strip()
    if typ in ("str", str):
        if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
            return raw[1:-1]
        return raw
    if typ in ("int", int):
        return int(raw)
    return float(raw)


def parse_config(text, profile=None):
    """Parse config text; unspecified keys take the profile defaults.

    ``profile`` (e.g. from the command line) overrides the file's
    ``dataset_profile``. ``truncation`` defaults to three voxels.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _KEY_TO_ATTR:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        attr = _KEY_TO_ATTR[key]
        if attr in values:
            raise InputError(f"config line {lineno}: duplicate key {key!r}")
        try:
            values[attr] = _parse_value(raw, _TYPES[attr])
        except ValueError as exc:
            raise InputError(f"config line {lineno}: bad value for {key!r}") from exc
    if profile is not None:
        values["dataset_profile"] = profile
    base = PipelineConfig.for_profile(values.get("dataset_profile", "generic"))
    if "voxel_size" in values and "truncation" not in values:
        values["truncation"] = 3.0 * values["voxel_size"]
    try:
        return replace(base, **values)
    except ValueError as exc:
        raise InputError(f"invalid config: {exc}") from exc


def load_config(path=None, profile=None):
    if path is None:
        return PipelineConfig.for_profile(profile or "generic")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, profile)


def format_config(cfg):
    lines = []
    for attr, value in asdict(cfg).items():
        key = _ATTR_TO_KEY[attr]
        lines.append(f'{key} = "{value}"' if isinstance(value, str) else f"{key} = {value!r}")
    return "\n".join(lines) + "\n"
