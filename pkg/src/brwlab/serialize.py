"""Line-oriented model serialization and content hashing.

One line per (vertex, atom, probability) for explicit laws, with the sparse
configuration as ``v:count`` pairs; factorized laws are written as their
child-count row plus dispersal row instead of being enumerated.  The header
records scenario metadata.  Output is deterministic, so the digest doubles
as a content address for experiment manifests.
"""

from __future__ import annotations

import hashlib
import json

from .core import BrwModel, IntDistribution, ModelError, OffspringConfig, OffspringLaw, ProductForm

FORMAT_LINE = "brwmodel 1"


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_model(model: BrwModel) -> str:
    lines = [FORMAT_LINE,
             f"scenario {model.name or '-'}",
             "params " + json.dumps(model.params, sort_keys=True, default=str)]
    lines.append("vertices " + " ".join(str(v) for v in model.vertices))
    for v in model.vertices:
        law = model.laws[v]
        if law.product is not None:
            pf = law.product
            lines.append(f"law {v} product")
            lines.append("rho " + " ".join(f"{int(v)}:{_fmt(p)}"
                                            for v, p in zip(pf.rho.values, pf.rho.probs)))
            lines.append("disp " + " ".join(f"{t}:{_fmt(w)}" for t, w in zip(pf.targets, pf.weights)))
        else:
            atoms = law.atoms
            lines.append(f"law {v} atoms {len(atoms)}")
            for cfg, p in sorted(atoms, key=lambda a: a[0].entries):
                pairs = " ".join(f"{u}:{c}" for u, c in cfg.entries)
                lines.append(f"atom {_fmt(p)} {pairs}".rstrip())
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> BrwModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != FORMAT_LINE:
        raise ModelError("not a serialized model (bad format line)")
    name = lines[1].split(" ", 1)[1]
    params = json.loads(lines[2].split(" ", 1)[1])
    vertices = tuple(int(t) for t in lines[3].split()[1:])
    laws = {}
    i = 4
    while i < len(lines):
        head = lines[i].split()
        if head[0] != "law":
            raise ModelError(f"expected a law line, got {lines[i]!r}")
        v = int(head[1])
        if head[2] == "product":
            pairs = [t.split(":") for t in lines[i + 1].split()[1:]]
            rho = IntDistribution.from_values([int(v) for v, _ in pairs],
                                              [float(p) for _, p in pairs], normalize=True)
            disp = {}
            for pair in lines[i + 2].split()[1:]:
                t, w = pair.split(":")
                disp[int(t)] = float(w)
            laws[v] = OffspringLaw(product=ProductForm(
                rho, tuple(sorted(disp)), tuple(disp[t] for t in sorted(disp))))
            i += 3
        else:
            count = int(head[3])
            atoms = []
            for j in range(count):
                parts = lines[i + 1 + j].split()
                p = float(parts[1])
                cfg = {}
                for pair in parts[2:]:
                    u, c = pair.split(":")
                    cfg[int(u)] = int(c)
                atoms.append((OffspringConfig.make(cfg), p))
            laws[v] = OffspringLaw(atoms=tuple(atoms))
            i += 1 + count
    return BrwModel(vertices, laws, name="" if name == "-" else name, params=params)


def model_hash(model: BrwModel) -> str:
    return hashlib.sha256(serialize_model(model).encode()).hexdigest()[:12]
