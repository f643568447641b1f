"""Tunable constants bundle for one solve, recorded in every artifact manifest.

All geometric constants are integer powers of two so that dilation and
membership tests stay exact in integer arithmetic.
"""

from dataclasses import dataclass, asdict, field


@dataclass
class Constants:
    # chart / precision
    bits: int = 30              # mantissa bits per coordinate inside the unit chart
    # cluster machinery
    A_cluster: int = 32         # power of two, >= the n-dependent threshold
    c_G_log2: int = -7          # c_G = 2**c_G_log2, from good geometry (1/8 ratio)
    # keystone reach constants (paper: S0=S(A-), S1>max(100,1e5*S0,...), S2 odd > 1e5*S1)
    S0: int = 3
    S1: int = 5
    S2: int = 7                 # odd
    # testing-cube geometry
    t_G: float = 0.5            # power of two, < 1
    a_base: float = 1.0 / 64.0  # a(M)
    a_decay: float = 0.5        # a(A) = max(a(A-) * a_decay, a_floor) per monotonic label
    a_floor: float = 2.0 ** -10
    # CZ(A) stopping constant (paper: K = 1e9/a(A), configurable downward)
    K_cz: float = 4.0
    # critical-testing-cube search
    lam_gap: int = 4            # gap factor standing in for the paper's Lambda^10
    near_max_level: int = 3     # "delta_Q >= 2**-near_max_level" counts as near-maximal
    eps_easy: float = 2.0 ** -6
    eps_hard: float = 2.0 ** -18
    # simplicity and tagging scales
    c_star: float = 2.0 ** -3   # c_*-simple threshold
    c_star_tag: float = 2.0 ** -4
    S_tag: int = 9              # S(A) for every label (S(M)=9 per the base case)
    # robustness flag (Appendix-style junk terms, off by default)
    robust: bool = False
    delta_g: float = 2.0 ** -40
    delta_junk: float = 2.0 ** -30
    delta_new: float = 2.0 ** -20

    def manifest(self) -> dict:
        return asdict(self)

    @classmethod
    def from_manifest(cls, d: dict) -> "Constants":
        known = {f.name for f in cls.__dataclass_fields__.values()} if False else set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})

    def __post_init__(self):
        if self.S2 % 2 != 1:
            raise ValueError("S2 must be odd")
        for name in ("t_G", "a_base", "c_star"):
            v = getattr(self, name)
            if v <= 0 or v > 1:
                raise ValueError(f"{name} must lie in (0, 1]")


def default_constants(n: int, p: float = None) -> Constants:
    """Calibrated defaults per dimension and exponent (recorded in manifests).

    The n = 1 keystone reaches are wider (flat oracle-ratio medians across N);
    the coarse-decomposition stopping constant is exponent-dependent.
    """
    c = Constants()
    if n == 1:
        c.bits = 48
        c.S0, c.S1, c.S2 = 7, 9, 11
    if p is not None and p < 2.75:
        c.K_cz = 2.0
    else:
        c.K_cz = 4.0
    return c
