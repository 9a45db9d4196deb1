"""Built-in checks run by ``photonstats selftest``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correlator import build_histogram
from .errors import PhotonStatsError
from .oracles import naive_histogram, random_stream
from .photon_number import PhotonNumberDist, apply_loss, invert_loss
from .pipeline import g_estimate
from .sim import DetectionConfig, simulate_reference


@dataclass(frozen=True)
class SelfTestResult:
    name: str
    passed: bool
    detail: str


# (source, parameter, expected g2, g3, g4)
REFERENCE_CASES = (
    ("coherent", 1.0, (1.0, 1.0, 1.0)),
    ("thermal", 0.5, (2.0, 6.0, 24.0)),
    ("fock", 1.0, (0.0, None, None)),
)


def oracle_suite(seed: int, n_streams: int) -> list[SelfTestResult]:
    rng = np.random.default_rng(seed)
    out = []
    for m, bw, md in ((2, 100, 50_000), (3, 100, 50_000), (4, 500, 50_000)):
        bad = 0
        for _ in range(n_streams):
            s = random_stream(rng, int(rng.integers(100, 3000)), m, 400 * 12_500)
            ch = tuple(range(1, m + 1))
            if not all(np.any(s.channels == c) for c in ch):
                continue
            fast = build_histogram(s, m, bw, md, ch).to_dense()
            bad += not np.array_equal(fast, naive_histogram(s, m, bw, md, ch))
        out.append(SelfTestResult(f"oracle m={m}", bad == 0, f"{bad} of {n_streams} streams differ"))
    return out


def reference_suite(seed: int, n_pulses: int) -> list[SelfTestResult]:
    det = DetectionConfig(eta_t=0.5)
    out = []
    for source, param, targets in REFERENCE_CASES:
        stream = simulate_reference(source, param, n_pulses, det, seed)
        for m, target in zip((2, 3, 4), targets):
            if target is None:
                continue
            name = f"{source}({param:g}) g{m}"
            try:
                e = g_estimate(stream, m)
            except PhotonStatsError as exc:
                out.append(SelfTestResult(name, False, str(exc)))
                continue
            ok = e.N_c == 0 if target == 0 else e.within(target, 3.0)
            out.append(SelfTestResult(name, ok, f"{e.value:.4g} -{e.sigma_low:.2g}/+{e.sigma_up:.2g}"
                                                f" (target {target:g}, N_c={e.N_c})"))
    return out


def loss_suite(seed: int, n: int = 200) -> list[SelfTestResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d = PhotonNumberDist(tuple(rng.dirichlet(np.ones(5))))
        eta = float(rng.uniform(0.05, 1.0))
        back = invert_loss(apply_loss(d, eta), eta)
        worst = max(worst, float(np.abs(back.array - d.array).max()))
    return [SelfTestResult("loss round trip", worst <= 1e-12, f"max error {worst:.2e}")]


def run_selftest(seed: int = 0, quick: bool = False) -> list[SelfTestResult]:
    return (oracle_suite(seed, 5 if quick else 20)
            + reference_suite(seed, 50_000 if quick else 300_000)
            + loss_suite(seed))
