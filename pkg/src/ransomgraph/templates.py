"""Builtin campaign templates and the declarative template-file loader.

Template files (YAML or JSON) hold a top-level ``templates`` list. Each entry:

    id: rw_small                 # unique template id
    is_ransomware: true
    size_class: small            # small | medium | large
    hosts: 6                     # default topology size
    mean_gap_seconds: 45         # mean inter-alert gap (exponential)
    stage_dropout: 0.2           # drop probability for optional stages
    stages:
      - stage: lateral_movement  # one of simulate.STAGE_NAMES
        count: [50, 70]          # inclusive alert-count range
        fan_out: 0.6             # optional overrides of the stage library:
        tool_mix: {edr: 0.5, nids: 0.3, msr: 0.2}
        risk: [4.5, 2.5]         # beta shape on the tool's native scale
        severity: [4.0, 2.5]
        categories: {edr: [...], nids: [...], msr: [...]}
        optional: false
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import yaml

from .simulate import CampaignTemplate, template_from_dict

BUILTIN_TEMPLATE_SPECS: list[dict[str, Any]] = [
    # ransomware
    {
        "id": "rw_small", "is_ransomware": True, "size_class": "small", "hosts": 6,
        "mean_gap_seconds": 45, "stage_dropout": 0.2,
        "description": "Commodity ransomware: phish, beacon, spread, wipe backups, encrypt",
        "stages": [
            {"stage": "initial_access", "count": [15, 25]},
            {"stage": "c2", "count": [15, 25]},
            {"stage": "lateral_movement", "count": [50, 70], "fan_out": 0.6},
            {"stage": "staging", "count": [25, 35]},
            {"stage": "encryption", "count": [45, 65]},
        ],
    },
    {
        "id": "rw_rapid", "is_ransomware": True, "size_class": "small", "hosts": 5,
        "mean_gap_seconds": 20, "stage_dropout": 0.2,
        "description": "Smash-and-grab intrusion with almost no dwell time",
        "stages": [
            {"stage": "initial_access", "count": [8, 14]},
            {"stage": "lateral_movement", "count": [40, 60], "fan_out": 0.7},
            {"stage": "staging", "count": [15, 25]},
            {"stage": "encryption", "count": [60, 80]},
        ],
    },
    {
        "id": "rw_wormlike", "is_ransomware": True, "size_class": "small", "hosts": 10,
        "mean_gap_seconds": 15, "stage_dropout": 0.2,
        "description": "Self-propagating cryptoworm",
        "stages": [
            {"stage": "initial_access", "count": [5, 10], "tool_mix": {"edr": 0.3, "nids": 0.6, "msr": 0.1}},
            {"stage": "lateral_movement", "count": [120, 160], "fan_out": 0.8,
             "tool_mix": {"edr": 0.3, "nids": 0.45, "msr": 0.25}},
            {"stage": "staging", "count": [10, 20]},
            {"stage": "encryption", "count": [100, 140], "fan_out": 0.45},
        ],
    },
    {
        "id": "rw_double_extortion", "is_ransomware": True, "size_class": "medium", "hosts": 12,
        "mean_gap_seconds": 60, "stage_dropout": 0.25,
        "description": "Steal then encrypt",
        "stages": [
            {"stage": "initial_access", "count": [30, 50]},
            {"stage": "c2", "count": [60, 90]},
            {"stage": "lateral_movement", "count": [180, 240], "fan_out": 0.55},
            {"stage": "staging", "count": [80, 120]},
            {"stage": "exfiltration", "count": [80, 120], "optional": True},
            {"stage": "encryption", "count": [140, 180]},
        ],
    },
    {
        "id": "rw_human_operated", "is_ransomware": True, "size_class": "large", "hosts": 18,
        "mean_gap_seconds": 90, "stage_dropout": 0.25,
        "description": "Hands-on-keyboard affiliate operation across a large estate",
        "stages": [
            {"stage": "initial_access", "count": [40, 60]},
            {"stage": "c2", "count": [150, 200]},
            {"stage": "lateral_movement", "count": [500, 600], "fan_out": 0.5},
            {"stage": "staging", "count": [250, 300]},
            {"stage": "exfiltration", "count": [200, 260], "optional": True},
            {"stage": "encryption", "count": [600, 700]},
        ],
    },
    {
        "id": "rw_enterprise", "is_ransomware": True, "size_class": "large", "hosts": 20,
        "mean_gap_seconds": 40, "stage_dropout": 0.2,
        "description": "Domain-wide deployment through remote services",
        "stages": [
            {"stage": "initial_access", "count": [60, 80]},
            {"stage": "c2", "count": [100, 140]},
            {"stage": "lateral_movement", "count": [700, 800], "fan_out": 0.6},
            {"stage": "staging", "count": [300, 360]},
            {"stage": "encryption", "count": [800, 900], "fan_out": 0.35},
        ],
    },
    # other malware
    {
        "id": "botnet_relay", "is_ransomware": False, "size_class": "small", "hosts": 6,
        "mean_gap_seconds": 120, "stage_dropout": 0.2,
        "description": "Machines turned into relay points",
        "stages": [
            {"stage": "initial_access", "count": [15, 25]},
            {"stage": "c2", "count": [100, 140]},
            {"stage": "decoy", "count": [40, 60]},
        ],
    },
    {
        "id": "cryptominer", "is_ransomware": False, "size_class": "small", "hosts": 5,
        "mean_gap_seconds": 90, "stage_dropout": 0.2,
        "description": "Resource hijacking with light internal spread",
        "stages": [
            {"stage": "initial_access", "count": [10, 20]},
            {"stage": "c2", "count": [40, 60]},
            {"stage": "lateral_movement", "count": [20, 30], "fan_out": 0.2},
            {"stage": "decoy", "count": [80, 100]},
        ],
    },
    {
        "id": "infostealer", "is_ransomware": False, "size_class": "small", "hosts": 8,
        "mean_gap_seconds": 150, "stage_dropout": 0.2,
        "description": "Credential and document theft",
        "stages": [
            {"stage": "initial_access", "count": [20, 30]},
            {"stage": "c2", "count": [80, 100]},
            {"stage": "exfiltration", "count": [120, 160]},
        ],
    },
    {
        "id": "apt_lowslow", "is_ransomware": False, "size_class": "medium", "hosts": 12,
        "mean_gap_seconds": 600, "stage_dropout": 0.2,
        "description": "Low-and-slow espionage",
        "stages": [
            {"stage": "initial_access", "count": [30, 40]},
            {"stage": "c2", "count": [250, 300]},
            {"stage": "lateral_movement", "count": [120, 160], "fan_out": 0.3},
            {"stage": "exfiltration", "count": [200, 260]},
        ],
    },
    {
        "id": "banking_trojan", "is_ransomware": False, "size_class": "large", "hosts": 16,
        "mean_gap_seconds": 200, "stage_dropout": 0.25,
        "description": "Banking trojan with DDoS cover traffic",
        "stages": [
            {"stage": "initial_access", "count": [150, 200]},
            {"stage": "c2", "count": [600, 700]},
            {"stage": "lateral_movement", "count": [200, 260], "fan_out": 0.25},
            {"stage": "exfiltration", "count": [400, 500]},
            {"stage": "decoy", "count": [200, 260], "optional": True},
        ],
    },
    {
        "id": "apt_espionage", "is_ransomware": False, "size_class": "large", "hosts": 20,
        "mean_gap_seconds": 300, "stage_dropout": 0.25,
        "description": "Long-running state-sponsored intrusion",
        "stages": [
            {"stage": "initial_access", "count": [60, 80]},
            {"stage": "c2", "count": [500, 600]},
            {"stage": "lateral_movement", "count": [400, 500], "fan_out": 0.35},
            {"stage": "exfiltration", "count": [700, 800]},
            {"stage": "decoy", "count": [100, 150], "optional": True},
        ],
    },
]


def builtin_templates() -> dict[str, CampaignTemplate]:
    return {d["id"]: template_from_dict(d) for d in BUILTIN_TEMPLATE_SPECS}


def load_templates(path: str | Path) -> dict[str, CampaignTemplate]:
    text = Path(path).read_text(encoding="utf-8")
    doc = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    entries = doc["templates"] if isinstance(doc, dict) else doc
    out = {}
    for d in entries:
        t = template_from_dict(d)
        if t.template_id in out:
            raise ValueError(f"duplicate template id {t.template_id!r}")
        out[t.template_id] = t
    return out
