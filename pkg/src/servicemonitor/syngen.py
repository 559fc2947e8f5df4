"""Synthetic labeled trace corpora sampled from family behavior profiles.

A profile is a first-order chain over the catalog's state space: a
start distribution, a row-stochastic transition matrix with an empty
diagonal, and a trace-length range. Two profiles ship by default: a
benign one with short traces concentrated on activity/package queries,
and a telephony-malware one with long traces dominated by subscriber
lookups and text sending. The ground truth is deliberately first-order
while the feature extractor also credits longer-range pairs, so the
pipeline is tested on realistic sequential structure rather than on an
oracle identical to its own model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .catalog import ServiceCatalog, default_catalog
from .errors import ConfigError, ProfileError, ShapeError
from .labels import LABELS
from .rng import Xoshiro256StarStar, derive_seed
from .trace import BC_TRANSACTION, TransactionRecord

_DISTRIBUTION_TOLERANCE = 1e-9
_BASE_TIMESTAMP_US = 1_700_000_000_000_000
_TIMESTAMP_STEP_US = 1_000


@dataclass(frozen=True)
class FamilyProfile:
    name: str
    label: str
    start_distribution: np.ndarray
    transition: np.ndarray
    length_range: tuple[int, int]
    weight: float = 1.0

    def __post_init__(self):
        start = np.asarray(self.start_distribution, dtype=np.float64)
        trans = np.asarray(self.transition, dtype=np.float64)
        object.__setattr__(self, "start_distribution", start)
        object.__setattr__(self, "transition", trans)
        if self.label not in LABELS:
            raise ProfileError(f"{self.name}: label must be one of {LABELS}, got {self.label!r}")
        if start.ndim != 1 or trans.shape != (start.size, start.size):
            raise ShapeError(
                f"{self.name}: start has shape {start.shape}, transition {trans.shape}"
            )
        if np.any(start < 0) or np.any(trans < 0):
            raise ProfileError(f"{self.name}: distributions must be non-negative")
        if abs(start.sum() - 1.0) > _DISTRIBUTION_TOLERANCE:
            raise ProfileError(f"{self.name}: start distribution sums to {start.sum()!r}, not 1")
        row_sums = trans.sum(axis=1)
        bad = np.flatnonzero(np.abs(row_sums - 1.0) > _DISTRIBUTION_TOLERANCE)
        if bad.size:
            raise ProfileError(
                f"{self.name}: transition row {int(bad[0])} sums to {row_sums[bad[0]]!r}, not 1"
            )
        lo, hi = self.length_range
        if not (2 <= lo <= hi):
            raise ProfileError(f"{self.name}: length_range must satisfy 2 <= min <= max")

    @property
    def state_count(self) -> int:
        return int(self.start_distribution.size)


@dataclass
class CorpusApp:
    """One generated application: its id, ground-truth label, and records."""

    app_id: str
    label: str
    records: list[TransactionRecord]


def _categorical(rng: Xoshiro256StarStar, probs: np.ndarray) -> int:
    u = rng.uniform()
    acc = 0.0
    last = -1
    for i, p in enumerate(probs):
        if p <= 0.0:
            continue
        acc += p
        last = i
        if u < acc:
            return i
    if last < 0:
        raise ProfileError("cannot sample from an all-zero distribution")
    return last  # float shortfall at the tail; clamp to the last positive state


def sample_trace(
    profile: FamilyProfile,
    catalog: ServiceCatalog,
    seed: int,
    pid: int | None = None,
) -> list[TransactionRecord]:
    """Sample one trace as transaction records, deterministic given seed.

    Length is uniform over the profile's range; states are emitted as
    command-0 records through reverse catalog lookup with monotone
    synthetic timestamps.
    """
    if profile.state_count != len(catalog):
        raise ShapeError(
            f"profile {profile.name!r} has {profile.state_count} states, "
            f"catalog has {len(catalog)}"
        )
    rng = Xoshiro256StarStar(seed)
    lo, hi = profile.length_range
    length = lo + rng.randbelow(hi - lo + 1)
    state = _categorical(rng, profile.start_distribution)
    events = [state]
    for _ in range(length - 1):
        state = _categorical(rng, profile.transition[state])
        events.append(state)
    if pid is None:
        pid = 1000 + seed % 60000
    records = []
    for i, fid in enumerate(events):
        entry = catalog.entry(fid)
        records.append(
            TransactionRecord(
                timestamp_us=_BASE_TIMESTAMP_US + i * _TIMESTAMP_STEP_US,
                pid=pid,
                command=BC_TRANSACTION,
                interface_token=entry.interface_token,
                function_code=entry.function_code,
            )
        )
    return records


def gen_corpus(
    profiles: list[FamilyProfile],
    count: int,
    catalog: ServiceCatalog,
    seed: int,
) -> list[CorpusApp]:
    """Generate count traces, choosing profiles proportionally to weight."""
    if not profiles:
        raise ConfigError("corpus generation needs at least one profile")
    weights = np.asarray([p.weight for p in profiles], dtype=np.float64)
    if np.any(weights <= 0):
        raise ConfigError("profile weights must all be positive")
    probs = weights / weights.sum()
    picker = Xoshiro256StarStar(derive_seed(seed, "profile-pick", 0))
    apps = []
    for i in range(count):
        profile = profiles[_categorical(picker, probs)]
        records = sample_trace(profile, catalog, derive_seed(seed, "trace", i))
        apps.append(
            CorpusApp(app_id=f"{profile.name}-{i:05d}", label=profile.label, records=records)
        )
    return apps


def profiles_to_json(profiles: list[FamilyProfile]) -> str:
    doc = {
        "profiles": [
            {
                "name": p.name,
                "label": p.label,
                "weight": p.weight,
                "length_range": list(p.length_range),
                "start": p.start_distribution.tolist(),
                "transition": p.transition.tolist(),
            }
            for p in profiles
        ]
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def load_profiles(data: bytes | str) -> list[FamilyProfile]:
    """Parse a profile JSON document (dense start and transition arrays)."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
        entries = doc["profiles"]
        profiles = [
            FamilyProfile(
                name=str(e["name"]),
                label=str(e["label"]),
                start_distribution=np.asarray(e["start"], dtype=np.float64),
                transition=np.asarray(e["transition"], dtype=np.float64),
                length_range=(int(e["length_range"][0]), int(e["length_range"][1])),
                weight=float(e.get("weight", 1.0)),
            )
            for e in entries
        ]
    except (json.JSONDecodeError, KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"invalid profile document: {exc}") from exc
    if not profiles:
        raise ConfigError("profile document contains no profiles")
    return profiles


# Shipped defaults. Edge weights are written sparsely over each
# profile's support set; unused rows fall back to a uniform
# distribution over the support so every row is stochastic. Diagonals
# stay empty everywhere (states never immediately repeat).

_BENIGN_FUNCTIONS = {
    "getService": "android.os.IServiceManager",
    "checkPermission": "android.app.IActivityManager",
    "getPackageInfo": "android.content.pm.IPackageManager",
    "getApplicationInfo": "android.content.pm.IPackageManager",
    "startActivity": "android.app.IActivityManager",
    "activityResumed": "android.app.IActivityManager",
    "getActiveNetworkInfo": "android.net.IConnectivityManager",
    "getConnectionInfo": "android.net.wifi.IWifiManager",
    "startService": "android.app.IActivityManager",
    "registerReceiver": "android.app.IActivityManager",
    "getLastKnownLocation": "android.location.ILocationManager",
    "isScreenOn": "android.os.IPowerManager",
}

_BENIGN_START = {
    "getService": 0.4,
    "startActivity": 0.3,
    "checkPermission": 0.2,
    "getPackageInfo": 0.1,
}

_BENIGN_EDGES = {
    "getService": {"checkPermission": 0.6, "getPackageInfo": 0.2, "startService": 0.2},
    "checkPermission": {"getPackageInfo": 0.65, "startActivity": 0.2, "getApplicationInfo": 0.15},
    "getPackageInfo": {"getApplicationInfo": 0.7, "startActivity": 0.2, "getActiveNetworkInfo": 0.1},
    "getApplicationInfo": {"startActivity": 0.6, "registerReceiver": 0.25, "isScreenOn": 0.15},
    "startActivity": {"activityResumed": 0.7, "getActiveNetworkInfo": 0.2, "registerReceiver": 0.1},
    "activityResumed": {
        "getActiveNetworkInfo": 0.5,
        "getConnectionInfo": 0.2,
        "isScreenOn": 0.2,
        "getLastKnownLocation": 0.1,
    },
    "getActiveNetworkInfo": {"getConnectionInfo": 0.6, "startService": 0.25, "registerReceiver": 0.15},
    "getConnectionInfo": {"startService": 0.55, "getService": 0.3, "activityResumed": 0.15},
    "startService": {"registerReceiver": 0.6, "checkPermission": 0.25, "isScreenOn": 0.15},
    "registerReceiver": {"getService": 0.5, "activityResumed": 0.3, "getLastKnownLocation": 0.2},
    "getLastKnownLocation": {"getActiveNetworkInfo": 0.7, "registerReceiver": 0.3},
    "isScreenOn": {"getService": 0.65, "startActivity": 0.35},
}

_MALWARE_FUNCTIONS = {
    "getService": "android.os.IServiceManager",
    "getSubscriberId": "com.android.internal.telephony.IPhoneSubInfo",
    "getDeviceId": "com.android.internal.telephony.IPhoneSubInfo",
    "getLine1Number": "com.android.internal.telephony.IPhoneSubInfo",
    "getIccSerialNumber": "com.android.internal.telephony.IPhoneSubInfo",
    "sendText": "com.android.internal.telephony.ISms",
    "getInstalledPackages": "android.content.pm.IPackageManager",
    "getRunningAppProcesses": "android.app.IActivityManager",
    "registerReceiver": "android.app.IActivityManager",
    "broadcastIntent": "android.app.IActivityManager",
    "getActiveNetworkInfo": "android.net.IConnectivityManager",
    "requestLocationUpdates": "android.location.ILocationManager",
    "startService": "android.app.IActivityManager",
}

_MALWARE_START = {
    "getService": 0.5,
    "getSubscriberId": 0.3,
    "getInstalledPackages": 0.2,
}

# The malware loop: harvest subscriber identifiers, exfiltrate by SMS,
# scan installed packages and running processes, persist via broadcasts
# and receivers, grab location, churn services, repeat. Each state
# mostly advances one step (0.7) with skip-ahead branches (0.2 to +2,
# 0.1 to +4); the forward structure keeps every row's dominant target
# dominant in the estimated chain as well, since no single state
# collects the longer-range inverse-distance mass.
_MALWARE_CYCLE = [
    "getService",
    "getSubscriberId",
    "getDeviceId",
    "getLine1Number",
    "getIccSerialNumber",
    "sendText",
    "getInstalledPackages",
    "getRunningAppProcesses",
    "broadcastIntent",
    "registerReceiver",
    "requestLocationUpdates",
    "getActiveNetworkInfo",
    "startService",
]

_MALWARE_EDGES = {
    name: {
        _MALWARE_CYCLE[(i + 1) % len(_MALWARE_CYCLE)]: 0.7,
        _MALWARE_CYCLE[(i + 2) % len(_MALWARE_CYCLE)]: 0.2,
        _MALWARE_CYCLE[(i + 4) % len(_MALWARE_CYCLE)]: 0.1,
    }
    for i, name in enumerate(_MALWARE_CYCLE)
}


def _profile_from_edges(
    name: str,
    label: str,
    length_range: tuple[int, int],
    catalog: ServiceCatalog,
    functions: dict[str, str],
    start: dict[str, float],
    edges: dict[str, dict[str, float]],
    weight: float = 1.0,
) -> FamilyProfile:
    size = len(catalog)
    ids = {
        fname: catalog.find_by_name(fname, fragment).function_id
        for fname, fragment in functions.items()
    }
    support = sorted(ids.values())
    start_vec = np.zeros(size)
    for fname, p in start.items():
        start_vec[ids[fname]] = p
    trans = np.zeros((size, size))
    for src, targets in edges.items():
        for dst, p in targets.items():
            trans[ids[src], ids[dst]] = p
    for row in range(size):
        if trans[row].sum() == 0.0:
            others = [c for c in support if c != row]
            trans[row, others] = 1.0 / len(others)
    return FamilyProfile(
        name=name,
        label=label,
        start_distribution=start_vec,
        transition=trans,
        length_range=length_range,
        weight=weight,
    )


def default_profiles(catalog: ServiceCatalog | None = None) -> list[FamilyProfile]:
    """The two shipped profiles: short benign traces, long telephony malware."""
    cat = catalog if catalog is not None else default_catalog()
    return [
        _profile_from_edges(
            "benign-app", "benign", (4, 12), cat,
            _BENIGN_FUNCTIONS, _BENIGN_START, _BENIGN_EDGES,
        ),
        _profile_from_edges(
            "telephony-malware", "malicious", (25, 50), cat,
            _MALWARE_FUNCTIONS, _MALWARE_START, _MALWARE_EDGES,
        ),
    ]
