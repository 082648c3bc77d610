"""Run configuration: JSON schema, validation and a stable content hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ValidationError

MANIFOLD_KINDS = ("euclidean", "sphere", "hyperbolic")
NONLINEARITY_KINDS = ("constant", "affine", "quadratic", "custom")
# keys that change where results go or how fast they arrive, never what they are
_UNHASHED = ("out", "workers")


@dataclass
class RunConfig:
    n: int = 2
    d: int = 2
    a: list | None = None
    eps: list = field(default_factory=lambda: [1e-2, 1e-3])
    eta: list | None = None
    eta_cap: float = 0.05
    manifold: dict = field(default_factory=lambda: {"kind": "sphere", "kappa": 1.0})
    nonlinearity: dict = field(default_factory=lambda: {"kind": "constant", "c": 1.0})
    A0: float | str = "auto"
    seed: int = 0
    samples: int = 200_000
    boundary_samples: int = 2000
    kernel_points: int = 50
    h: float = 0.02
    solver: bool = True
    strict: bool = False
    out: str = "starcrit-out"
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ValidationError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown configuration keys: {unknown}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)

    def validate(self) -> "RunConfig":
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError("n must be an integer >= 2")
        if self.a is not None and len(self.a) != self.n:
            raise ValidationError(f"a has {len(self.a)} entries but n = {self.n}")
        if int(self.d) != self.d or self.d < 2:
            raise ValidationError("d must be an integer >= 2")
        if self.solver and self.d not in (2, 3):
            raise ValidationError("the solver needs d = 2 or d = 3 (set solver to false for larger d)")
        _decreasing("eps", self.eps)
        if self.eta is not None:
            _decreasing("eta", self.eta)
            if len(self.eta) != len(self.eps):
                raise ValidationError("eta and eps lists must have the same length")
        if not self.eta_cap > 0:
            raise ValidationError("eta_cap must be positive")
        kind = self.manifold.get("kind")
        if kind not in MANIFOLD_KINDS:
            raise ValidationError(f"manifold kind must be one of {MANIFOLD_KINDS}")
        if set(self.manifold) - {"kind", "kappa"}:
            raise ValidationError(f"unknown manifold keys: {sorted(set(self.manifold) - {'kind', 'kappa'})}")
        nk = self.nonlinearity.get("kind")
        if nk not in NONLINEARITY_KINDS:
            raise ValidationError(f"nonlinearity kind must be one of {NONLINEARITY_KINDS}")
        if set(self.nonlinearity) - {"kind", "c", "expr"}:
            raise ValidationError("nonlinearity accepts only the keys kind, c and expr")
        if nk == "custom" and not isinstance(self.nonlinearity.get("expr"), str):
            raise ValidationError("a custom nonlinearity needs an expr string")
        if not (self.A0 == "auto" or (isinstance(self.A0, (int, float)) and self.A0 > 0)):
            raise ValidationError("A0 must be 'auto' or a positive number")
        if int(self.seed) != self.seed or self.seed < 0 or self.seed >= 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        for name in ("samples", "boundary_samples", "kernel_points", "workers"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if not self.h > 0:
            raise ValidationError("h must be positive")
        return self

    def etas(self) -> list[float]:
        """The eta schedule: explicit list, else ``min(eta_cap, eps_k)``."""
        if self.eta is not None:
            return [float(e) for e in self.eta]
        return [min(float(self.eta_cap), float(e)) for e in self.eps]

    def density(self) -> int:
        return 2 if self.strict else 1

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        data = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _decreasing(name, values):
    if not isinstance(values, list) or not values:
        raise ValidationError(f"{name} must be a nonempty list")
    if any(not isinstance(v, (int, float)) or not v > 0 for v in values):
        raise ValidationError(f"{name} values must be positive numbers")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ValidationError(f"{name} values must be strictly decreasing")
