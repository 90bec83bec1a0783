"""Experiment runner: sweeps, aggregation, and CSV emission.

A run sweeps (scheme, N, gamma, noise SNR) combinations, repeats each
combination with derived seeds (base_seed + i), and averages per-repeat
metrics. Sampling follows the evaluation protocol: per instance, half of
the views are held out to form the previous-period context and the
current multi-view collection is drawn from the rest, resampled per
repeat.

Everything is deterministic given (config, seed): identical invocations
produce byte-identical CSV files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .dataset import (
    DatasetManifest,
    NoiseSpec,
    SyntheticSpec,
    add_noise,
    generate_synthetic,
    load_dataset,
    sample_views,
)
from .errors import ConfigError
from .models import (
    Backbone,
    Head,
    PrecomputedBackbone,
    ToyHead,
    extract,
    toy_models,
    view_pool,
)
from .network import (
    ComputeCostModel,
    ProcessingProfile,
    RadioConfig,
    StageTimes,
    TransportModel,
    round_flops,
    round_latency,
    round_overhead,
    transmission_gain,
)
from .schemes import (
    DEFAULT_GAMMA,
    SELECTIVE_SCHEMES,
    RoundOutcome,
    SchemeConfig,
    SchemeId,
    run_round,
)
from .types import Context, EMPTY_CONTEXT, MultiViewInstance

_TAG_SAMPLE = 401
_TAG_NOISE = 402

ALL_SCHEMES = tuple(SchemeId)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; mirrors the flat key=value config file."""

    dataset: Optional[Path] = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    schemes: tuple[SchemeId, ...] = ALL_SCHEMES
    n_values: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    gammas: Optional[tuple[float, ...]] = None  # None: per-scheme defaults
    repeats: int = 12
    seed: int = 7
    snr_values: tuple[Optional[float], ...] = (None,)
    split_context: bool = True
    dropped_policy: str = "error"  # "error" | "exclude"
    backend: str = "toy"  # "toy" | "precomputed"
    toy_dim: int = 256
    toy_bins: int = 32
    availability: Optional[tuple[bool, ...]] = None
    radio: RadioConfig = field(default_factory=RadioConfig)
    transport: TransportModel = field(default_factory=TransportModel)
    profile: ProcessingProfile = field(default_factory=ProcessingProfile)
    cost: ComputeCostModel = field(default_factory=ComputeCostModel)

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.dropped_policy not in ("error", "exclude"):
            raise ConfigError("dropped_policy must be 'error' or 'exclude'")
        if self.backend not in ("toy", "precomputed"):
            raise ConfigError("backend must be 'toy' or 'precomputed'")
        if any(n < 1 for n in self.n_values):
            raise ConfigError("node counts must be >= 1")
        if self.gammas is not None and any(not 0 <= g <= 1 for g in self.gammas):
            raise ConfigError("gamma values must lie in [0, 1]")


@dataclass(frozen=True)
class MetricsRow:
    """One aggregated sweep point (means and std-devs across repeats)."""

    scheme: str
    n: int
    gamma: Optional[float]
    snr_db: Optional[float]
    repeats: int
    rounds: int
    accuracy_pct: float
    accuracy_std: float
    transmission_gain_pct: float
    transmission_gain_std: float
    overhead_bytes: float
    overhead_bytes_std: float
    latency_ms: float
    latency_ms_std: float
    dropped_rate: float
    source_flops: float
    controller_flops: float


CSV_COLUMNS = (
    "scheme,n,gamma,snr_db,repeats,rounds,"
    "accuracy_pct,accuracy_std,transmission_gain_pct,transmission_gain_std,"
    "overhead_bytes,overhead_bytes_std,latency_ms,latency_ms_std,"
    "dropped_rate,source_flops,controller_flops"
)


def load_manifest(config: ExperimentConfig) -> DatasetManifest:
    if config.dataset is not None:
        return load_dataset(config.dataset)
    return generate_synthetic(config.synthetic)


def build_models(
    config: ExperimentConfig, manifest: DatasetManifest
) -> tuple[Backbone, Head]:
    """Instantiate the configured backbone/head pair.

    The toy pipeline derives its class centroids from the synthetic
    palette parameters; the precomputed backbone serves sidecar vectors
    (and pairs with the toy head, which is meaningful when the sidecars
    were exported by the toy backbone or from matching centroids).
    """
    params = replace(
        config.synthetic, classes=manifest.classes
    ).model_params(dim=config.toy_dim, bins=config.toy_bins)
    backbone, head = toy_models(params)
    if config.backend == "precomputed":
        table = {}
        dim = None
        for record in manifest.instances:
            matrix = manifest.sidecar(record)
            if matrix is None:
                raise ConfigError(
                    f"backend 'precomputed' needs sidecars; instance "
                    f"{record.instance_id} has none"
                )
            dim = matrix.shape[1]
            for i in range(matrix.shape[0]):
                table[(record.instance_id, i)] = matrix[i]
        backbone = PrecomputedBackbone(table, dim)
        if dim != head.dim:
            raise ConfigError(
                f"sidecar dim {dim} does not match toy head dim {head.dim}; "
                f"set toy_dim accordingly"
            )
    return backbone, head


def collect_round_outcomes(
    config: ExperimentConfig,
    manifest: DatasetManifest,
    backbone: Backbone,
    head: Head,
    scheme: SchemeId,
    n: int,
    gamma: Optional[float],
    snr: Optional[float],
    rep_seed: int,
) -> list[tuple[MultiViewInstance, RoundOutcome]]:
    """Run one repeat of one sweep point; returns per-instance outcomes.

    The sampling and noise seeds depend only on (rep_seed, instance,
    view), never on the scheme, so different schemes see identical
    inputs and can be compared round-by-round.
    """
    scheme_config = SchemeConfig(
        scheme=scheme,
        backbone=backbone,
        head=head,
        gamma=gamma if scheme in SELECTIVE_SCHEMES else None,
        bins=config.toy_bins,
        node_availability=config.availability,
    )
    noise = NoiseSpec(target_snr_db=snr) if snr is not None else None
    results = []
    for idx, record in enumerate(manifest.instances):
        views = manifest.views(record)
        if noise is not None:
            views = [
                add_noise(v, noise, (rep_seed, _TAG_NOISE, idx, i))[0]
                for i, v in enumerate(views)
            ]
        current, context = sample_views(
            views, n, config.split_context, (rep_seed, _TAG_SAMPLE, idx)
        )
        instance = MultiViewInstance(
            instance_id=record.instance_id,
            true_label=record.label,
            views=tuple((i, replace(v, node=i)) for i, v in enumerate(current)),
            context_views=tuple(context),
        )
        prev_context = EMPTY_CONTEXT
        if scheme in (SchemeId.SCI_E, SchemeId.SEI_E) and context:
            prev_context = Context.of_embedding(
                view_pool([extract(backbone, v) for v in context])
            )
        outcome = run_round(instance, scheme_config, prev_context, period=rep_seed)
        results.append((instance, outcome))
    return results


def _aggregate_repeat(
    config: ExperimentConfig,
    outcomes: Sequence[tuple[MultiViewInstance, RoundOutcome]],
    radio: RadioConfig,
) -> dict[str, float]:
    correct = 0
    counted = 0
    dropped = 0
    transmitted = 0
    available = 0
    overhead = 0.0
    latency = 0.0
    source_flops = 0.0
    controller_flops = 0.0
    for instance, outcome in outcomes:
        transmitted += outcome.transmitted_views
        available += outcome.available_views
        overhead += round_overhead(outcome.trace, config.transport)
        latency += round_latency(outcome.trace, radio, config.profile, config.transport)
        per_source, controller = round_flops(outcome, config.cost)
        if per_source:
            source_flops += sum(per_source.values()) / len(per_source)
        controller_flops += controller
        if outcome.dropped:
            dropped += 1
            if config.dropped_policy == "error":
                counted += 1
        else:
            counted += 1
            if outcome.prediction == instance.true_label:
                correct += 1
    rounds = len(outcomes)
    return {
        "accuracy": 100.0 * correct / counted if counted else 0.0,
        "gain": transmission_gain(available, transmitted) if available else 0.0,
        "overhead": overhead / rounds,
        "latency": latency / rounds,
        "dropped": dropped / rounds,
        "source_flops": source_flops / rounds,
        "controller_flops": controller_flops / rounds,
    }


def run_experiment(config: ExperimentConfig) -> list[MetricsRow]:
    """Execute the full sweep; rows come back in deterministic order."""
    manifest = load_manifest(config)
    backbone, head = build_models(config, manifest)
    views_per_instance = manifest.instances[0].view_count
    max_n = views_per_instance // 2 if config.split_context else views_per_instance
    for n in config.n_values:
        if n > max_n:
            raise ConfigError(
                f"n={n} exceeds the {max_n} views available per instance"
                + (" after the context split" if config.split_context else "")
            )

    rows = []
    for scheme in config.schemes:
        if scheme in SELECTIVE_SCHEMES:
            gamma_list: tuple[Optional[float], ...] = (
                config.gammas if config.gammas is not None else (DEFAULT_GAMMA[scheme],)
            )
        else:
            gamma_list = (None,)
        for n in config.n_values:
            for gamma in gamma_list:
                for snr in config.snr_values:
                    per_rep = []
                    for rep in range(config.repeats):
                        rep_seed = config.seed + rep
                        radio = config.radio
                        if radio.snr_db is None:
                            radio = radio.with_sampled_snrs(rep_seed, range(n))
                        outcomes = collect_round_outcomes(
                            config, manifest, backbone, head,
                            scheme, n, gamma, snr, rep_seed,
                        )
                        per_rep.append(_aggregate_repeat(config, outcomes, radio))
                    rows.append(
                        _make_row(scheme, n, gamma, snr, config, per_rep, len(manifest.instances))
                    )
    rows.sort(
        key=lambda r: (
            [s.value for s in SchemeId].index(r.scheme),
            r.n,
            -1.0 if r.gamma is None else r.gamma,
            -math.inf if r.snr_db is None else r.snr_db,
        )
    )
    return rows


def _make_row(
    scheme: SchemeId,
    n: int,
    gamma: Optional[float],
    snr: Optional[float],
    config: ExperimentConfig,
    per_rep: Sequence[dict[str, float]],
    rounds: int,
) -> MetricsRow:
    def stats(key: str) -> tuple[float, float]:
        values = np.array([r[key] for r in per_rep])
        return float(values.mean()), float(values.std())

    accuracy, accuracy_std = stats("accuracy")
    gain, gain_std = stats("gain")
    overhead, overhead_std = stats("overhead")
    latency, latency_std = stats("latency")
    return MetricsRow(
        scheme=scheme.value,
        n=n,
        gamma=gamma,
        snr_db=snr,
        repeats=config.repeats,
        rounds=rounds,
        accuracy_pct=accuracy,
        accuracy_std=accuracy_std,
        transmission_gain_pct=gain,
        transmission_gain_std=gain_std,
        overhead_bytes=overhead,
        overhead_bytes_std=overhead_std,
        latency_ms=latency,
        latency_ms_std=latency_std,
        dropped_rate=stats("dropped")[0],
        source_flops=stats("source_flops")[0],
        controller_flops=stats("controller_flops")[0],
    )


def sweep_threshold(
    config: ExperimentConfig, gammas: Sequence[float]
) -> list[MetricsRow]:
    """Threshold grid: selective schemes only, one metric series per gamma."""
    selective = tuple(s for s in config.schemes if s in SELECTIVE_SCHEMES)
    if not selective:
        raise ConfigError("sweep needs at least one selective scheme")
    return run_experiment(
        replace(config, schemes=selective, gammas=tuple(gammas))
    )


def _fmt(value: Union[float, int, None]) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.6f}"


def emit_csv(rows: Iterable[MetricsRow], path: Union[str, Path]) -> Path:
    """Write rows as RFC-4180-style CSV with a fixed column order."""
    lines = [CSV_COLUMNS]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.scheme,
                    str(r.n),
                    _fmt(r.gamma),
                    _fmt(r.snr_db),
                    str(r.repeats),
                    str(r.rounds),
                    _fmt(r.accuracy_pct),
                    _fmt(r.accuracy_std),
                    _fmt(r.transmission_gain_pct),
                    _fmt(r.transmission_gain_std),
                    _fmt(r.overhead_bytes),
                    _fmt(r.overhead_bytes_std),
                    _fmt(r.latency_ms),
                    _fmt(r.latency_ms_std),
                    _fmt(r.dropped_rate),
                    _fmt(r.source_flops),
                    _fmt(r.controller_flops),
                ]
            )
        )
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    return path


# ---------------------------------------------------------------------------
# Flat key=value configuration
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict[str, str]:
    """Parse the flat ``key = value`` format (# comments, blank lines ok)."""
    settings: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        settings[key.strip()] = value.strip()
    return settings


def _parse_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def _parse_scheme(name: str) -> SchemeId:
    normalized = name.strip().upper().replace("-", "_")
    try:
        return SchemeId[normalized]
    except KeyError:
        raise ConfigError(f"unknown scheme {name!r}")


def parse_n_values(text: str) -> tuple[int, ...]:
    """Accept '3', '1,3,5' or '1..6'."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def build_config(settings: dict[str, str]) -> ExperimentConfig:
    """Build an ExperimentConfig from flat string settings."""
    syn = SyntheticSpec()
    radio = RadioConfig()
    transport = TransportModel()
    source = StageTimes(extract_ms=18.3, head_ms=2.0, hist_ms=0.5)
    controller = StageTimes(extract_ms=10.0, head_ms=1.0, pool_ms=0.1, consensus_ms=0.15)
    cost = ComputeCostModel()
    kwargs: dict[str, object] = {}

    simple = {
        "repeats": ("repeats", int),
        "seed": ("seed", int),
        "dropped_policy": ("dropped_policy", str),
        "backend": ("backend", str),
        "toy_dim": ("toy_dim", int),
        "toy_bins": ("toy_bins", int),
    }
    for key, value in settings.items():
        try:
            if key == "dataset":
                kwargs["dataset"] = Path(value) if value else None
            elif key == "schemes":
                kwargs["schemes"] = tuple(_parse_scheme(s) for s in value.split(","))
            elif key == "n":
                kwargs["n_values"] = parse_n_values(value)
            elif key in ("gamma", "gammas"):
                kwargs["gammas"] = _parse_floats(value)
            elif key == "snr":
                kwargs["snr_values"] = _parse_floats(value)
            elif key == "split_context":
                kwargs["split_context"] = _parse_bool(value)
            elif key == "availability":
                mask = value.replace(",", "")
                kwargs["availability"] = tuple(c == "1" for c in mask)
            elif key in simple:
                name, cast = simple[key]
                kwargs[name] = cast(value)
            elif key == "synthetic_classes":
                syn = replace(syn, classes=int(value))
            elif key == "synthetic_instances_per_class":
                syn = replace(syn, instances_per_class=int(value))
            elif key == "synthetic_views":
                syn = replace(syn, views_per_instance=int(value))
            elif key == "synthetic_width":
                syn = replace(syn, width=int(value))
            elif key == "synthetic_height":
                syn = replace(syn, height=int(value))
            elif key == "synthetic_spread":
                syn = replace(syn, centroid_spread=float(value))
            elif key == "synthetic_noise":
                syn = replace(syn, within_class_noise=float(value))
            elif key == "synthetic_seed":
                syn = replace(syn, seed=int(value))
            elif key == "mss":
                transport = replace(transport, mss=int(value))
            elif key == "header_per_segment":
                transport = replace(transport, header_per_segment=int(value))
            elif key == "ack_every":
                transport = replace(transport, ack_every=int(value))
            elif key == "ack_size":
                transport = replace(transport, ack_size=int(value))
            elif key == "per_connection_setup":
                transport = replace(transport, per_connection_setup=int(value))
            elif key == "carrier_hz":
                radio = replace(radio, carrier_hz=float(value))
            elif key == "bandwidth_hz":
                radio = replace(radio, bandwidth_hz=float(value))
            elif key == "scs_hz":
                radio = replace(radio, scs_hz=float(value))
            elif key == "mimo_layers":
                radio = replace(radio, mimo_layers=int(value))
            elif key == "total_rbs":
                radio = replace(radio, total_rbs=int(value))
            elif key == "snr_db":
                radio = replace(radio, snr_db=float(value))
            elif key.startswith("src_") and key.endswith("_ms"):
                source = replace(source, **{key[4:]: float(value)})
            elif key.startswith("ctl_") and key.endswith("_ms"):
                controller = replace(controller, **{key[4:]: float(value)})
            elif key == "backbone_flops":
                cost = replace(cost, backbone_flops=float(value))
            elif key == "view_pool_flops":
                cost = replace(cost, view_pool_flops=float(value))
            elif key == "head_flops":
                cost = replace(cost, head_flops=float(value))
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})")

    return ExperimentConfig(
        synthetic=syn,
        radio=radio,
        transport=transport,
        profile=ProcessingProfile(source=source, controller=controller),
        cost=cost,
        **kwargs,  # type: ignore[arg-type]
    )
