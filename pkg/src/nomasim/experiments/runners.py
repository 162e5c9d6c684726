"""Experiment runners: link curves, grant-free curves and the oracle calibration.

Work is split into items of fixed size whose random streams derive only from
(master seed, tag, item indices); results are integer tallies merged in item
order, so the output does not depend on the number of workers.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..channel import FadingConfig, draw_channel, superimpose
from ..grantfree import (GrantFreeCounts, TrafficConfig, find_supported_par, simulate_replicas,
                         summarize)
from ..muxrx import run_receiver, build_problem
from ..seeds import derive_stream_seed, stream_rng
from .build import build_chains, detector_config, outer_config, phy_config
from .config import CalibrateConfig, GrantFreeConfig, LinkConfig, LinkScheme
from .oracles import CHECKS
from .report import (CALIBRATE_COLUMNS, GRANTFREE_COLUMNS, LINK_COLUMNS, SUPPORTED_PAR_COLUMNS,
                     companion_path, plot_rows, write_csv)

# ---------------------------------------------------------------------------
# parallel map


def parallel_map(fn, items, workers: int = 1) -> list:
    """Ordered map; ``workers > 1`` fans out over processes."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=1))


# ---------------------------------------------------------------------------
# link curves


@lru_cache(maxsize=32)
def _chains_for(scheme_json: str, master_seed: int):
    return build_chains(LinkScheme.model_validate_json(scheme_json), master_seed)


def channel_snr_db(cfg: LinkConfig, scheme: LinkScheme, chains, sweep_value: float) -> float:
    """SNR per block; with ``snr_definition: ebn0`` the sweep is Eb/N0 over payload bits."""
    if cfg.snr_definition == "per_block":
        return sweep_value
    return sweep_value + 10.0 * math.log10(scheme.payload_bits / chains[0].n_blocks)


def uncoded(scheme: LinkScheme) -> bool:
    return scheme.fec is None and scheme.crc is None


@dataclass(frozen=True)
class _LinkItem:
    cfg: LinkConfig
    scheme_idx: int
    snr_idx: int
    chunk_idx: int
    n_frames: int


def _link_item(item: _LinkItem):
    cfg = item.cfg
    scheme = cfg.schemes[item.scheme_idx]
    chains = _chains_for(scheme.model_dump_json(), cfg.master_seed)
    U = len(chains)
    snr = channel_snr_db(cfg, scheme, chains, cfg.sweep[item.snr_idx])
    idx = (item.snr_idx, item.chunk_idx)
    F = item.n_frames
    pays = stream_rng(cfg.master_seed, "traffic", idx).integers(
        0, 2, (F, U, scheme.payload_bits), dtype=np.uint8)
    x = np.stack([c.transmit(pays[:, u])[0] for u, c in enumerate(chains)], axis=1)
    fading = FadingConfig(scheme.fading.model, scheme.fading.block_len_res)
    ch = draw_channel(fading, U, x.shape[-1], derive_stream_seed(cfg.master_seed, "fading", idx),
                      snr_db=snr, n_frames=F)
    y = superimpose(x, ch, derive_stream_seed(cfg.master_seed, "noise", idx))
    res = run_receiver(build_problem(y, ch, chains), chains, detector_config(scheme.detector),
                       outer_config(scheme.outer))
    if uncoded(scheme):
        errors = np.sum(res.payload != pays, axis=(0, 2))
        trials = np.full(U, F * scheme.payload_bits)
    else:
        errors = res.block_errors(pays).sum(axis=0)
        trials = np.full(U, F)
    return errors.astype(np.int64), trials.astype(np.int64)


def link_items(cfg: LinkConfig) -> list[_LinkItem]:
    items = []
    n_chunks = -(-cfg.n_trials // cfg.chunk_size)
    for si in range(len(cfg.schemes)):
        for pi in range(len(cfg.sweep)):
            for c in range(n_chunks):
                n = min(cfg.chunk_size, cfg.n_trials - c * cfg.chunk_size)
                items.append(_LinkItem(cfg, si, pi, c, n))
    return items


def run_link_curve(cfg: LinkConfig, out=None, workers: int = 1) -> list[dict]:
    items = link_items(cfg)
    results = parallel_map(_link_item, items, workers)
    tallies: dict[tuple, list] = {}
    for it, (err, n) in zip(items, results):
        t = tallies.setdefault((it.scheme_idx, it.snr_idx), [0, 0])
        t[0] = t[0] + err
        t[1] = t[1] + n
    rows = []
    for (si, pi), (err, n) in tallies.items():
        scheme = cfg.schemes[si]
        chains = _chains_for(scheme.model_dump_json(), cfg.master_seed)
        bler = err / n
        goodput = float(np.sum(scheme.payload_bits * (1.0 - bler)) / chains[0].n_re_total)
        for u in range(len(chains)):
            rows.append({"scheme": scheme.name, "snr_db": float(cfg.sweep[pi]), "user_id": u,
                         "bler": float(bler[u]), "sum_goodput_bits_per_re": goodput})
    rows.sort(key=lambda r: (r["scheme"], r["snr_db"], r["user_id"]))
    if out is not None:
        write_csv(out, LINK_COLUMNS, rows)
        if cfg.plot:
            plot_rows(rows, "snr_db", "bler", cfg.plot)
    return rows


# ---------------------------------------------------------------------------
# grant-free curves


@dataclass(frozen=True)
class _GfItem:
    cfg: GrantFreeConfig
    scheme: str
    lam: float
    replica: int


def _traffic(cfg: GrantFreeConfig, lam: float) -> TrafficConfig:
    t = cfg.traffic
    return TrafficConfig(t.n_users, lam, t.packet_bits, t.max_attempts, t.latency_budget_slots)


def _gf_item(item: _GfItem) -> GrantFreeCounts:
    cfg = item.cfg
    return simulate_replicas(_traffic(cfg, item.lam), item.scheme, cfg.n_slots, cfg.master_seed,
                             [item.replica], phy_config(cfg.phy, item.scheme))


def _gf_evaluate(cfg: GrantFreeConfig, scheme: str, lams, workers: int):
    items = [_GfItem(cfg, scheme, float(lam), r) for lam in lams for r in range(cfg.n_trials)]
    parts = parallel_map(_gf_item, items, workers)
    out = []
    for k, lam in enumerate(lams):
        chunk = parts[k * cfg.n_trials:(k + 1) * cfg.n_trials]
        total = chunk[0]
        for c in chunk[1:]:
            total = total + c
        out.append(summarize(total, _traffic(cfg, lam), cfg.n_slots))
    return out


def run_grantfree_curve(cfg: GrantFreeConfig, out=None, workers: int = 1):
    """Returns (curve rows, supported-PAR rows)."""
    rows = []
    for scheme in cfg.schemes:
        for lam, rep in zip(cfg.sweep, _gf_evaluate(cfg, scheme, cfg.sweep, workers)):
            rows.append({"scheme": scheme, "lambda": float(lam), "pdr": float(rep.pdr),
                         "satisfied_ratio": float(rep.satisfied_user_ratio),
                         "collision_rate": float(rep.collision_rate)})
    rows.sort(key=lambda r: (r["scheme"], r["lambda"]))
    par_rows = []
    sp = cfg.supported_par
    if sp is not None:
        for scheme in sorted(cfg.schemes):
            res = find_supported_par(
                _traffic(cfg, 0.0), scheme, sp.target_pdr, sp.tol, bracket=sp.bracket,
                grid_points=sp.grid_points,
                evaluate=lambda lam, s=scheme: _gf_evaluate(cfg, s, [lam], workers)[0])
            par_rows.append({"scheme": scheme, "target_pdr": float(sp.target_pdr),
                             "supported_par": float(res.par), "bracket_low": float(res.bracket_low),
                             "bracket_high": float(res.bracket_high), "supported": res.supported,
                             "monotone": res.monotone})
    if out is not None:
        write_csv(out, GRANTFREE_COLUMNS, rows)
        if par_rows:
            write_csv(companion_path(out, "supported_par"), SUPPORTED_PAR_COLUMNS, par_rows)
        if cfg.plot:
            plot_rows(rows, "lambda", "pdr", cfg.plot, logy=False)
    return rows, par_rows


# ---------------------------------------------------------------------------
# calibration


def run_calibrate(cfg: CalibrateConfig, out=None, inject_fault: str | None = None) -> list[dict]:
    """One row per registered oracle check; ``inject_fault`` perturbs the named check's
    implementation output (test hook)."""
    rows = []
    for check in CHECKS:
        t0 = time.perf_counter()
        dev = float(check.run(cfg.master_seed, cfg.n_trials, fault=(inject_fault == check.name)))
        rows.append({"name": check.name, "max_deviation": dev, "tolerance": float(check.tolerance),
                     "passed": bool(dev <= check.tolerance), "seconds": time.perf_counter() - t0})
    if out is not None:
        write_csv(out, CALIBRATE_COLUMNS, rows)
    return rows
