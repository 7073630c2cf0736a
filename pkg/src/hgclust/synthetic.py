"""Synthetic visit generator with planted subtypes.

Stands in for credentialed EHR sources at desk scale. Each visit belongs
to one planted subtype and draws its codes (without replacement) from
that subtype's concept pool plus an optional shared pool; a per-code
noise rate substitutes draws from the whole concept universe. The binary
outcome is Bernoulli with a per-subtype rate. Ground truth (visit
subtype, concept pool) is written alongside so recovery can be scored
with the adjusted Rand index.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .hypergraph import write_descriptions_csv, write_visits_jsonl


@dataclass
class SyntheticSpec:
    n_subtypes: int = 3
    concepts_per_subtype: int = 20
    shared_concepts: int = 0
    n_visits: int = 2000
    codes_per_visit_min: int = 4
    codes_per_visit_max: int = 8
    label_rule: tuple = (0.9, 0.4, 0.05)
    noise_rate: float = 0.1
    seed: int = 7

    def validate(self) -> None:
        if self.n_subtypes < 1 or self.concepts_per_subtype < 1 or self.n_visits < 1:
            raise DataError("synthetic: counts must be positive")
        if self.shared_concepts < 0:
            raise DataError("synthetic: shared_concepts must be >= 0")
        if not 1 <= self.codes_per_visit_min <= self.codes_per_visit_max:
            raise DataError("synthetic: bad codes_per_visit range")
        if len(self.label_rule) != self.n_subtypes:
            raise DataError("synthetic: label_rule needs one probability per subtype")
        if any(not 0.0 <= p <= 1.0 for p in self.label_rule):
            raise DataError("synthetic: label probabilities must lie in [0, 1]")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise DataError("synthetic: noise_rate must lie in [0, 1]")
        support = self.concepts_per_subtype + self.shared_concepts
        if self.codes_per_visit_max > support:
            raise DataError(
                f"synthetic: codes_per_visit_max ({self.codes_per_visit_max}) exceeds "
                f"pool + shared size ({support})")


def load_spec(path: str | Path) -> SyntheticSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})")
    known = set(SyntheticSpec.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"{path}: unknown spec keys {sorted(unknown)}")
    if "label_rule" in raw:
        raw["label_rule"] = tuple(raw["label_rule"])
    spec = SyntheticSpec(**raw)
    spec.validate()
    return spec


def _concept_codes(spec: SyntheticSpec) -> tuple[list[str], dict[str, int], dict[str, str]]:
    codes: list[str] = []
    pool_of: dict[str, int] = {}
    descriptions: dict[str, str] = {}
    for k in range(spec.n_subtypes):
        for i in range(spec.concepts_per_subtype):
            code = f"S{k}C{i:03d}"
            codes.append(code)
            pool_of[code] = k
            descriptions[code] = (f"condition family {k} indicator {i} "
                                  f"pattern-{k} marker-{k}")
    for i in range(spec.shared_concepts):
        code = f"SH{i:03d}"
        codes.append(code)
        pool_of[code] = -1
        descriptions[code] = f"common background finding {i} nonspecific"
    return codes, pool_of, descriptions


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> dict:
    """Write visits.jsonl, descriptions.csv and ground_truth.json.

    Deterministic under the spec seed: the same spec produces
    byte-identical files.
    """
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    codes, pool_of, descriptions = _concept_codes(spec)
    universe = np.asarray(codes)
    pools = [np.asarray([c for c in codes if pool_of[c] == k])
             for k in range(spec.n_subtypes)]
    shared = np.asarray([c for c in codes if pool_of[c] == -1])

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    records = []
    visit_subtype: dict[str, int] = {}
    for v in range(spec.n_visits):
        k = int(rng.integers(spec.n_subtypes))
        count = int(rng.integers(spec.codes_per_visit_min,
                                 spec.codes_per_visit_max + 1))
        n_noise = int(rng.binomial(count, spec.noise_rate))
        support = np.concatenate([pools[k], shared]) if len(shared) else pools[k]
        base = rng.choice(support, size=count - n_noise, replace=False)
        noise = rng.choice(universe, size=n_noise, replace=False)
        visit_codes = sorted(set(base.tolist()) | set(noise.tolist()))
        label = 1 if rng.random() < spec.label_rule[k] else 0
        vid = f"V{v:05d}"
        records.append((vid, visit_codes, [label]))
        visit_subtype[vid] = k

    write_visits_jsonl(out / "visits.jsonl", records)
    write_descriptions_csv(out / "descriptions.csv", descriptions)
    truth = {"visit_subtype": visit_subtype, "concept_subtype": pool_of,
             "spec": asdict(spec)}
    with open(out / "ground_truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return {"n_visits": len(records), "n_concepts": len(codes),
            "positive_rate": float(np.mean([r[2][0] for r in records]))}


def load_ground_truth(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
