"""Scheme parameters and the static security sanity table."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .errors import ParameterError

# Conservative per-ring-degree modulus limits (bits) for ~128-bit classical
# security with a sparse/ternary secret.  Entries beyond 2^15 are the usual
# doubling extrapolation.  The effective modulus here is 2*log_l because the
# evaluation key lives modulo 2^(2L).
_MAX_MODULUS_128 = {
    10: 27,
    11: 54,
    12: 109,
    13: 218,
    14: 438,
    15: 881,
    16: 1761,
    17: 3524,
}

# Known estimates for specific historical parameter choices.
_KNOWN_ESTIMATES = {(17, 2440): 93}


@dataclass(frozen=True)
class CkksParams:
    """Parameters of the leveled approximate scheme.

    log_n        ring degree exponent, N = 2^log_n
    log_l        initial modulus budget in bits (fresh ciphertexts live mod 2^log_l)
    log_p        rescale amount after ciphertext-ciphertext products
    log_p_small  rescale amount after plaintext products (masks, constants)
    sigma        std-dev of the error distribution
    h            Hamming weight of the ternary secret
    """

    log_n: int
    log_l: int
    log_p: int = 45
    log_p_small: int = 10
    sigma: float = 3.2
    h: int = 64

    def __post_init__(self):
        if self.log_n < 2 or self.log_n > 20:
            raise ParameterError(f"log_n={self.log_n} out of supported range [2, 20]")
        if not (0 < self.log_p_small <= self.log_p < self.log_l):
            raise ParameterError(
                "require 0 < log_p_small <= log_p < log_l, got "
                f"log_p_small={self.log_p_small} log_p={self.log_p} log_l={self.log_l}"
            )
        if self.h < 1 or self.h > self.n:
            raise ParameterError(f"secret Hamming weight h={self.h} must be in [1, N={self.n}]")
        if self.sigma <= 0:
            raise ParameterError("sigma must be positive")

    @property
    def n(self) -> int:
        return 1 << self.log_n

    @property
    def slot_count(self) -> int:
        return self.n // 2

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CkksParams":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"bad params JSON: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ParameterError(f"unknown parameter fields: {sorted(extra)}")
        return cls(**data)


def security_status(params: CkksParams) -> tuple[str, str]:
    """Classify parameters as ("accepted"|"warn", note) against the static table.

    Purely a sanity table: no lattice estimator is embedded.  The effective
    modulus is twice log_l because key-switch material uses 2^(2L).
    """
    key = (params.log_n, params.log_l)
    if key in _KNOWN_ESTIMATES:
        bits = _KNOWN_ESTIMATES[key]
        return "warn", f"~{bits}-bit security estimate for log_n={params.log_n}, log_l={params.log_l}"
    limit = _MAX_MODULUS_128.get(params.log_n)
    eff = 2 * params.log_l
    if limit is None:
        return "warn", f"log_n={params.log_n} below tabulated range; toy parameters only"
    if eff <= limit:
        return "accepted", f"effective modulus {eff} bits within 128-bit table limit {limit}"
    approx = max(1, round(128 * limit / eff))
    return "warn", f"effective modulus {eff} bits exceeds 128-bit limit {limit}; roughly ~{approx}-bit"
