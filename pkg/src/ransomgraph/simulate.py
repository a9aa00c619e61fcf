"""Synthetic multi-stage attack campaigns rendered as alert streams.

Three alert-source archetypes stand in for endpoint detection (``edr``),
rules-based network detection (``nids``) and the flow-based malware severity
ranking model (``msr``). Each reports risk and severity on its own native
scale, which is what makes per-tool normalization necessary downstream.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .ingest import RawAlert

STAGE_NAMES = ("initial_access", "lateral_movement", "c2", "staging", "exfiltration", "encryption", "decoy")
TOOLS = ("edr", "nids", "msr")
BASE_EPOCH = 1_700_000_000


@dataclass(frozen=True)
class ToolArchetype:
    name: str
    risk_range: tuple[float, float]
    severity_range: tuple[float, float]
    integer_risk: bool = False


TOOL_ARCHETYPES = {
    "edr": ToolArchetype("edr", (0.0, 100.0), (0.0, 10.0), integer_risk=True),
    "nids": ToolArchetype("nids", (1.0, 4.0), (0.0, 10.0), integer_risk=True),
    "msr": ToolArchetype("msr", (0.0, 1.0), (0.0, 100.0)),
}

# per stage: default tool mix, categories per tool, risk/severity beta shapes, fan-out
STAGE_LIBRARY: dict[str, dict[str, Any]] = {
    "initial_access": {
        "tool_mix": {"edr": 0.55, "nids": 0.35, "msr": 0.10},
        "categories": {
            "edr": ["malicious_macro", "phishing_attachment_exec", "exploit_public_app"],
            "nids": ["exploit_kit_traffic", "suspicious_download"],
            "msr": ["anomalous_inbound_flow"],
        },
        "risk": (3.0, 3.0), "severity": (3.0, 3.0), "fan_out": 0.05,
    },
    "c2": {
        "tool_mix": {"edr": 0.30, "nids": 0.40, "msr": 0.30},
        "categories": {
            "edr": ["beacon_process", "suspicious_powershell"],
            "nids": ["c2_beacon_signature", "dns_tunneling"],
            "msr": ["periodic_beacon_flow"],
        },
        "risk": (2.5, 4.0), "severity": (3.0, 4.0), "fan_out": 0.05,
    },
    "lateral_movement": {
        "tool_mix": {"edr": 0.45, "nids": 0.35, "msr": 0.20},
        "categories": {
            "edr": ["credential_dumping", "remote_service_exec", "pass_the_hash"],
            "nids": ["smb_lateral_transfer", "rdp_bruteforce"],
            "msr": ["internal_scan_flow", "lateral_flow_burst"],
        },
        "risk": (4.5, 2.5), "severity": (4.0, 2.5), "fan_out": 0.5,
    },
    "staging": {
        "tool_mix": {"edr": 0.65, "nids": 0.20, "msr": 0.15},
        "categories": {
            "edr": ["backup_deletion", "security_tool_tamper", "mass_archive_creation"],
            "nids": ["tool_transfer_internal"],
            "msr": ["staging_flow"],
        },
        "risk": (5.0, 2.0), "severity": (5.0, 2.0), "fan_out": 0.25,
    },
    "exfiltration": {
        "tool_mix": {"edr": 0.30, "nids": 0.35, "msr": 0.35},
        "categories": {
            "edr": ["data_compression", "cloud_upload_tool"],
            "nids": ["large_outbound_transfer"],
            "msr": ["exfil_flow_volume"],
        },
        "risk": (4.0, 3.0), "severity": (3.5, 3.0), "fan_out": 0.05,
    },
    "encryption": {
        "tool_mix": {"edr": 0.60, "nids": 0.20, "msr": 0.20},
        "categories": {
            "edr": ["mass_file_encryption", "shadow_copy_delete", "ransom_note_drop"],
            "nids": ["smb_encryption_pattern"],
            "msr": ["encryption_flow_burst"],
        },
        "risk": (7.0, 1.5), "severity": (7.0, 1.5), "fan_out": 0.3,
    },
    "decoy": {
        "tool_mix": {"edr": 0.20, "nids": 0.50, "msr": 0.30},
        "categories": {
            "edr": ["ddos_tool_exec", "adware_bundle"],
            "nids": ["ddos_flood_signature", "port_scan_external"],
            "msr": ["volumetric_flow"],
        },
        "risk": (2.0, 4.0), "severity": (2.5, 4.0), "fan_out": 0.1,
    },
}

BENIGN_CATEGORIES = {
    "edr": ["pup_detected", "unsigned_binary", "policy_violation"],
    "nids": ["port_scan_internal", "protocol_anomaly"],
    "msr": ["flow_outlier_low"],
}
BENIGN_RISK = (1.5, 6.0)
BENIGN_SEVERITY = (1.5, 6.0)


def encryption_categories() -> frozenset[str]:
    return frozenset(c for cats in STAGE_LIBRARY["encryption"]["categories"].values() for c in cats)


@dataclass(frozen=True)
class Topology:
    hosts: tuple[str, ...]
    adjacency: frozenset[tuple[str, str]]  # unordered pairs stored sorted

    def __post_init__(self) -> None:
        if len(self.hosts) < 2:
            raise ValueError("a topology needs at least 2 hosts")

    def neighbors(self, host: str) -> list[str]:
        out = [b for a, b in self.adjacency if a == host] + [a for a, b in self.adjacency if b == host]
        return sorted(out)

    def is_adjacent(self, a: str, b: str) -> bool:
        return (min(a, b), max(a, b)) in self.adjacency


@dataclass(frozen=True)
class StageTemplate:
    stage_name: str
    alert_count_range: tuple[int, int]
    tool_mix: Mapping[str, float]
    category_pool: Mapping[str, tuple[str, ...]]
    risk_beta: tuple[float, float]
    severity_beta: tuple[float, float]
    fan_out: float
    optional: bool = False

    def __post_init__(self) -> None:
        if self.stage_name not in STAGE_NAMES:
            raise ValueError(f"unknown stage {self.stage_name!r}")
        lo, hi = self.alert_count_range
        if lo < 0 or hi < lo:
            raise ValueError(f"{self.stage_name}: bad alert_count_range {self.alert_count_range}")
        if abs(sum(self.tool_mix.values()) - 1.0) > 1e-9:
            raise ValueError(f"{self.stage_name}: tool_mix weights must sum to 1")
        if set(self.tool_mix) - set(TOOLS):
            raise ValueError(f"{self.stage_name}: unknown tool in tool_mix")
        for tool, w in self.tool_mix.items():
            if w > 0 and not self.category_pool.get(tool):
                raise ValueError(f"{self.stage_name}: no categories for tool {tool}")
        if not 0.0 <= self.fan_out <= 1.0:
            raise ValueError(f"{self.stage_name}: fan_out must be a probability")

    @property
    def expected_count(self) -> float:
        return sum(self.alert_count_range) / 2


@dataclass(frozen=True)
class CampaignTemplate:
    template_id: str
    is_ransomware: bool
    stages: tuple[StageTemplate, ...]
    stage_dropout: float = 0.0
    mean_gap_seconds: float = 60.0
    size_class: str = "small"
    default_hosts: int = 8
    description: str = ""

    def __post_init__(self) -> None:
        names = [s.stage_name for s in self.stages]
        if self.is_ransomware:
            if "staging" not in names or "encryption" not in names:
                raise ValueError(f"{self.template_id}: ransomware templates need staging and encryption stages")
            if names[-1] != "encryption":
                raise ValueError(f"{self.template_id}: ransomware templates must end in encryption")
            if any(s.optional for s in self.stages if s.stage_name in ("staging", "encryption")):
                raise ValueError(f"{self.template_id}: staging/encryption cannot be optional")
        elif "encryption" in names:
            raise ValueError(f"{self.template_id}: only ransomware templates may encrypt")
        if not 0.0 <= self.stage_dropout < 1.0:
            raise ValueError("stage_dropout must lie in [0, 1)")
        if self.mean_gap_seconds <= 0:
            raise ValueError("mean_gap_seconds must be positive")

    @property
    def expected_alerts(self) -> float:
        keep = 1.0 - self.stage_dropout
        return sum(s.expected_count * (keep if s.optional else 1.0) for s in self.stages)


def stage_from_dict(d: Mapping[str, Any]) -> StageTemplate:
    name = d["stage"]
    if name not in STAGE_LIBRARY:
        raise ValueError(f"unknown stage {name!r}")
    base = STAGE_LIBRARY[name]
    mix = dict(d.get("tool_mix", base["tool_mix"]))
    pools = {t: tuple(c) for t, c in d.get("categories", base["categories"]).items()}
    lo, hi = d["count"]
    return StageTemplate(
        stage_name=name,
        alert_count_range=(int(lo), int(hi)),
        tool_mix=mix,
        category_pool=pools,
        risk_beta=tuple(d.get("risk", base["risk"])),
        severity_beta=tuple(d.get("severity", base["severity"])),
        fan_out=float(d.get("fan_out", base["fan_out"])),
        optional=bool(d.get("optional", False)),
    )


def template_from_dict(d: Mapping[str, Any]) -> CampaignTemplate:
    return CampaignTemplate(
        template_id=d["id"],
        is_ransomware=bool(d["is_ransomware"]),
        stages=tuple(stage_from_dict(s) for s in d["stages"]),
        stage_dropout=float(d.get("stage_dropout", 0.0)),
        mean_gap_seconds=float(d.get("mean_gap_seconds", 60.0)),
        size_class=d.get("size_class", "small"),
        default_hosts=int(d.get("hosts", 8)),
        description=d.get("description", ""),
    )


def generate_topology(host_count: int, seed: int | np.random.Generator) -> Topology:
    """Random spanning tree plus a sprinkling of extra links."""
    if host_count < 2:
        raise ValueError("host_count must be >= 2")
    rng = np.random.default_rng(seed)
    hosts = tuple(f"host-{i:02d}" for i in range(host_count))
    pairs = set()
    for i in range(1, host_count):
        j = int(rng.integers(0, i))
        pairs.add((hosts[j], hosts[i]))
    extra_p = min(1.0, 2.0 / host_count)
    for i in range(host_count):
        for j in range(i + 2, host_count):
            if rng.random() < extra_p:
                pairs.add((hosts[i], hosts[j]))
    return Topology(hosts, frozenset(pairs))


def is_connected(topology: Topology) -> bool:
    seen = {topology.hosts[0]}
    queue = deque(seen)
    while queue:
        h = queue.popleft()
        for nb in topology.neighbors(h):
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(topology.hosts)


def _scaled(rng: np.random.Generator, shape: tuple[float, float], lo: float, hi: float, integer: bool) -> float:
    x = lo + (hi - lo) * rng.beta(*shape)
    return float(round(x)) if integer else round(float(x), 6)


def _pick(rng: np.random.Generator, weights: Mapping[str, float]) -> str:
    keys = sorted(k for k, w in weights.items() if w > 0)
    p = np.array([weights[k] for k in keys], dtype=float)
    return keys[int(rng.choice(len(keys), p=p / p.sum()))]


def simulate_campaign(template: CampaignTemplate, topology: Topology, seed: int | np.random.Generator) -> list[RawAlert]:
    """Render one campaign as a time-ordered list of raw alerts."""
    rng = np.random.default_rng(seed)
    ts = BASE_EPOCH + int(rng.integers(0, 86_400))
    hosts = topology.hosts
    neighbors = {h: topology.neighbors(h) for h in hosts}
    compromised = [hosts[int(rng.integers(0, len(hosts)))]]
    alerts: list[RawAlert] = []

    for stage in template.stages:
        if stage.optional and rng.random() < template.stage_dropout:
            continue
        lo, hi = stage.alert_count_range
        count = int(rng.integers(lo, hi + 1))
        for _ in range(count):
            tool = _pick(rng, stage.tool_mix)
            arch = TOOL_ARCHETYPES[tool]
            pool = stage.category_pool[tool]
            category = pool[int(rng.integers(0, len(pool)))]
            # recently compromised hosts are the most active
            k = len(compromised)
            w = np.arange(1, k + 1, dtype=float)
            src = compromised[int(rng.choice(k, p=w / w.sum()))]
            dst = None
            if rng.random() < stage.fan_out:
                fresh = [h for h in neighbors[src] if h not in compromised]
                if stage.stage_name == "lateral_movement" and fresh:
                    dst = fresh[int(rng.integers(0, len(fresh)))]
                else:
                    dst = neighbors[src][int(rng.integers(0, len(neighbors[src])))]
                if stage.stage_name in ("lateral_movement", "encryption", "staging") and dst not in compromised:
                    compromised.append(dst)
            ts += 1 + int(rng.exponential(template.mean_gap_seconds))
            alerts.append(RawAlert(
                tool_id=tool,
                timestamp=ts,
                risk_score=_scaled(rng, stage.risk_beta, *arch.risk_range, arch.integer_risk),
                severity_score=_scaled(rng, stage.severity_beta, *arch.severity_range, False),
                category=category,
                source_host=src,
                destination_host=dst,
            ))
    return alerts


def inject_noise(stream: Sequence[RawAlert], fp_rate: float, seed: int | np.random.Generator) -> list[RawAlert]:
    """Interleave benign false-positive alerts into ``stream``.

    Before each original alert a geometric number of noise alerts is inserted
    (failures before a success with p = 1 - fp_rate), so each slot of the
    output is noise with probability ``fp_rate``. All counts are drawn first,
    as one ``negative_binomial(1, 1 - fp_rate, size=len(stream))`` call.
    Original alerts keep their relative order; later timestamps shift forward
    when a gap is too narrow.
    """
    if not 0.0 <= fp_rate < 1.0:
        raise ValueError("fp_rate must lie in [0, 1)")
    if fp_rate == 0.0 or not stream:
        return list(stream)
    rng = np.random.default_rng(seed)
    hosts = sorted({a.source_host for a in stream} | {a.destination_host for a in stream if a.destination_host})
    out: list[RawAlert] = []
    shift = 0
    prev_ts = stream[0].timestamp - 1
    counts = rng.negative_binomial(1, 1.0 - fp_rate, size=len(stream))
    for orig, k in zip(stream, counts.tolist()):
        cur = orig.timestamp + shift
        room = cur - prev_ts - 1
        if room < k:
            shift += k - room
            cur += k - room
            room = k
        times = np.sort(rng.choice(room, size=k, replace=False)) + prev_ts + 1 if k else []
        for t in times:
            tool = TOOLS[int(rng.integers(0, len(TOOLS)))]
            arch = TOOL_ARCHETYPES[tool]
            pool = BENIGN_CATEGORIES[tool]
            src = hosts[int(rng.integers(0, len(hosts)))]
            dst = None
            if len(hosts) > 1 and rng.random() < 0.1:
                others = [h for h in hosts if h != src]
                dst = others[int(rng.integers(0, len(others)))]
            out.append(RawAlert(
                tool_id=tool,
                timestamp=int(t),
                risk_score=_scaled(rng, BENIGN_RISK, *arch.risk_range, arch.integer_risk),
                severity_score=_scaled(rng, BENIGN_SEVERITY, *arch.severity_range, False),
                category=pool[int(rng.integers(0, len(pool)))],
                source_host=src,
                destination_host=dst,
            ))
        shifted = orig if shift == 0 else RawAlert(orig.tool_id, cur, orig.risk_score, orig.severity_score,
                                                   orig.category, orig.source_host, orig.destination_host)
        out.append(shifted)
        prev_ts = cur
    return out


@dataclass(frozen=True)
class SimulatedCampaign:
    template_id: str
    is_ransomware: bool
    seed: int
    host_count: int
    fp_rate: float
    alerts: list[RawAlert] = field(repr=False)

    @property
    def campaign_id(self) -> str:
        return f"{self.template_id}-s{self.seed}"

    def meta(self) -> dict[str, Any]:
        return {
            "campaign_id": self.campaign_id,
            "template_id": self.template_id,
            "is_ransomware": self.is_ransomware,
            "seed": self.seed,
            "hosts": self.host_count,
            "fp_rate": self.fp_rate,
        }


def run_template(template: CampaignTemplate, seed: int, hosts: int | None = None, fp_rate: float = 0.0) -> SimulatedCampaign:
    """Topology, campaign and noise for one seeded instance of ``template``."""
    host_count = template.default_hosts if hosts is None else hosts
    ss = np.random.SeedSequence(seed)
    topo_seed, camp_seed, noise_seed = ss.spawn(3)
    topology = generate_topology(host_count, np.random.default_rng(topo_seed))
    alerts = simulate_campaign(template, topology, np.random.default_rng(camp_seed))
    alerts = inject_noise(alerts, fp_rate, np.random.default_rng(noise_seed))
    return SimulatedCampaign(template.template_id, template.is_ransomware, seed, host_count, fp_rate, alerts)
